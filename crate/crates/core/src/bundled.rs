//! Ready-made experiment configs and network parameter files, compiled into
//! the binary so `--config case1` works from any directory.

use crate::rbf::RbfNetwork;

macro_rules! bundle {
    ($($name:literal => $file:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../../configs/", $file)))),*]
    };
}

/// `(name, TOML text)` for every bundled experiment config.
pub const CONFIGS: &[(&str, &str)] = bundle! {
    "case1" => "case1.toml",
    "case2" => "case2.toml",
    "case3-eps005" => "case3-eps005.toml",
    "case3-eps0075" => "case3-eps0075.toml",
    "case3-eps01" => "case3-eps01.toml",
    "case3-eps02" => "case3-eps02.toml",
    "case3g-eps005" => "case3g-eps005.toml",
    "case3g-eps01" => "case3g-eps01.toml",
    "case3g-eps02" => "case3g-eps02.toml",
    "case3g-eps04" => "case3g-eps04.toml",
    "case4" => "case4.toml",
    "case4-smallp0" => "case4-smallp0.toml",
};

/// `(path as written in configs, file text)` for every bundled network.
pub const NETWORKS: &[(&str, &str)] = bundle! {
    "networks/case1.rbf" => "networks/case1.rbf",
    "networks/case4.rbf" => "networks/case4.rbf",
};

pub fn config(name: &str) -> Option<&'static str> {
    CONFIGS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn network_text(path: &str) -> Option<&'static str> {
    NETWORKS.iter().find(|(n, _)| *n == path).map(|(_, t)| *t)
}

/// Surrogate for `f(y) = sin y + cos 3y`, `g(y) = 2 + cos y` on `[-2, 2]`.
pub fn case1_network() -> RbfNetwork {
    RbfNetwork::parse(network_text("networks/case1.rbf").unwrap())
        .expect("bundled case1 network parses")
}

/// Surrogate for the train dynamics on `v ∈ [240, 380]`.
pub fn case4_network() -> RbfNetwork {
    RbfNetwork::parse(network_text("networks/case4.rbf").unwrap())
        .expect("bundled case4 network parses")
}
