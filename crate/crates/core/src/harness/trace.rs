//! Per-iteration run records and their CSV form.
//!
//! Fixed columns, in order:
//!
//! ```text
//! k,y_r,y,u,u_opt,y_hat,err,argmax_t,max_pi,reset,alpha_true,beta_true,gamma_true
//! ```
//!
//! followed, when present, by `clamped` (input clamp configured),
//! `pi_1..pi_s` (full posteriors) and `u_1..u_s` (candidate inputs).
//! Candidate indices are 1-based. Floats use Rust's shortest round-trip
//! formatting, so reading a trace back gives bit-identical values.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

pub const FIXED_COLUMNS: [&str; 13] = [
    "k",
    "y_r",
    "y",
    "u",
    "u_opt",
    "y_hat",
    "err",
    "argmax_t",
    "max_pi",
    "reset",
    "alpha_true",
    "beta_true",
    "gamma_true",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace row {row}: {msg}")]
    Format { row: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub y_r: f64,
    pub y: f64,
    pub u: f64,
    pub u_opt: f64,
    pub y_hat: f64,
    pub err: f64,
    /// 1-based index of the most probable candidate.
    pub argmax_t: usize,
    /// Its posterior, before any reset in the same iteration.
    pub max_pi: f64,
    pub reset: bool,
    pub alpha_true: f64,
    pub beta_true: f64,
    pub gamma_true: f64,
    pub clamped: Option<bool>,
    pub posteriors: Vec<f64>,
    pub candidate_inputs: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.err)
    }

    fn header(&self) -> Vec<String> {
        let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        let Some(first) = self.rows.first() else {
            return cols;
        };
        if first.clamped.is_some() {
            cols.push("clamped".into());
        }
        cols.extend((1..=first.posteriors.len()).map(|i| format!("pi_{i}")));
        cols.extend((1..=first.candidate_inputs.len()).map(|i| format!("u_{i}")));
        cols
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.k.to_string(),
                r.y_r.to_string(),
                r.y.to_string(),
                r.u.to_string(),
                r.u_opt.to_string(),
                r.y_hat.to_string(),
                r.err.to_string(),
                r.argmax_t.to_string(),
                r.max_pi.to_string(),
                u8::from(r.reset).to_string(),
                r.alpha_true.to_string(),
                r.beta_true.to_string(),
                r.gamma_true.to_string(),
            ];
            if let Some(c) = r.clamped {
                rec.push(u8::from(c).to_string());
            }
            rec.extend(r.posteriors.iter().map(f64::to_string));
            rec.extend(r.candidate_inputs.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read<R: Read>(input: R) -> Result<Self, TraceError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        for (i, name) in FIXED_COLUMNS.iter().enumerate() {
            if header.get(i) != Some(name) {
                return Err(TraceError::Format {
                    row: 0,
                    msg: format!("expected column {} to be `{name}`", i + 1),
                });
            }
        }
        let has_clamp = header.get(FIXED_COLUMNS.len()) == Some("clamped");
        let n_pi = header.iter().filter(|h| h.starts_with("pi_")).count();
        let n_u = header
            .iter()
            .filter(|h| {
                h.strip_prefix("u_")
                    .is_some_and(|s| s.parse::<usize>().is_ok())
            })
            .count();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let f = |c: usize| -> Result<f64, TraceError> {
                rec.get(c)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| TraceError::Format {
                        row,
                        msg: format!("bad value in column {}", c + 1),
                    })
            };
            let n = |c: usize| -> Result<usize, TraceError> {
                rec.get(c)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| TraceError::Format {
                        row,
                        msg: format!("bad integer in column {}", c + 1),
                    })
            };
            let mut c = FIXED_COLUMNS.len();
            let clamped = if has_clamp {
                c += 1;
                Some(n(c - 1)? != 0)
            } else {
                None
            };
            let posteriors = (c..c + n_pi).map(f).collect::<Result<_, _>>()?;
            c += n_pi;
            let candidate_inputs = (c..c + n_u).map(f).collect::<Result<_, _>>()?;
            rows.push(TraceRow {
                k: n(0)?,
                y_r: f(1)?,
                y: f(2)?,
                u: f(3)?,
                u_opt: f(4)?,
                y_hat: f(5)?,
                err: f(6)?,
                argmax_t: n(7)?,
                max_pi: f(8)?,
                reset: n(9)? != 0,
                alpha_true: f(10)?,
                beta_true: f(11)?,
                gamma_true: f(12)?,
                clamped,
                posteriors,
                candidate_inputs,
            });
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        Self::read(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, extra: bool) -> TraceRow {
        TraceRow {
            k,
            y_r: (k as f64 * 0.1).cos(),
            y: 1.0 / 3.0,
            u: -2.5e-7,
            u_opt: f64::MAX,
            y_hat: 0.1 + 0.2,
            err: -1e-300,
            argmax_t: 8,
            max_pi: 0.999_999_999_999_9,
            reset: k.is_multiple_of(2),
            alpha_true: 1.11,
            beta_true: 0.9,
            gamma_true: 0.0,
            clamped: extra.then_some(k == 2),
            posteriors: if extra { vec![0.25, 0.75] } else { vec![] },
            candidate_inputs: if extra { vec![1.5, -2.0] } else { vec![] },
        }
    }

    #[test]
    fn header_is_fixed() {
        let t = RunTrace {
            rows: vec![row(1, false)],
        };
        let text = t.to_csv_string();
        assert_eq!(text.lines().next().unwrap(), FIXED_COLUMNS.join(","));
        let t = RunTrace {
            rows: vec![row(1, true)],
        };
        assert!(t.to_csv_string().starts_with(&format!(
            "{},clamped,pi_1,pi_2,u_1,u_2\n",
            FIXED_COLUMNS.join(",")
        )));
    }

    #[test]
    fn round_trip_is_exact() {
        for extra in [false, true] {
            let t = RunTrace {
                rows: (1..=5).map(|k| row(k, extra)).collect(),
            };
            let back = RunTrace::read(t.to_csv_string().as_bytes()).unwrap();
            assert_eq!(t, back);
        }
    }

    #[test]
    fn rejects_foreign_headers() {
        assert!(RunTrace::read("a,b\n1,2\n".as_bytes()).is_err());
    }
}
