//! Count files, the bundled earthquake dataset, and the JSON/CSV formats
//! written by the command-line tool.
//!
//! Count files are plain text with either one observation per line or two
//! whitespace-separated columns `k count`. Blank lines and lines starting
//! with `#` are ignored.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{Estimate, Estimator};
use crate::kernels::KernelSpec;
use crate::metrics::{EmpiricalPmf, Metric};
use crate::mixtures::{MixingDistribution, MixturePmf};
use crate::npmle::{loglik, FitResult};
use crate::resampling::{CiTable, CvTable};
use crate::simlab::SimRecord;
use crate::wlse::hybrid_estimate;

/// Yearly counts of magnitude 7+ earthquakes worldwide, 1900 to 2021.
pub const EARTHQUAKES: [u64; 122] = [
    13, 14, 8, 10, 16, 26, 32, 27, 18, 32, // 1900
    36, 24, 22, 23, 22, 18, 25, 21, 21, 14, // 1910
    8, 11, 14, 23, 18, 17, 19, 20, 22, 19, // 1920
    13, 26, 13, 14, 22, 24, 21, 22, 26, 21, // 1930
    23, 24, 27, 41, 31, 27, 35, 26, 28, 36, // 1940
    39, 21, 17, 22, 17, 19, 15, 34, 10, 15, // 1950
    22, 18, 15, 20, 15, 22, 19, 16, 30, 27, // 1960
    29, 23, 20, 16, 21, 21, 25, 16, 18, 15, // 1970
    18, 14, 10, 15, 8, 15, 6, 11, 8, 7, // 1980
    18, 16, 13, 12, 13, 20, 15, 16, 12, 18, // 1990
    15, 16, 13, 15, 16, 11, 11, 18, 12, 17, // 2000
    24, 20, 14, 19, 12, 19, 16, 7, 17, 10, // 2010
    9, 19, // 2020
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountDataset {
    pub observations: Vec<u64>,
    pub source: String,
}

/// Loads the builtin `earthquakes` dataset or a count file.
pub fn load_counts(path_or_builtin: &str) -> Result<CountDataset> {
    if path_or_builtin == "earthquakes" {
        return Ok(CountDataset {
            observations: EARTHQUAKES.to_vec(),
            source: "builtin:earthquakes".into(),
        });
    }
    let mut text = String::new();
    std::fs::File::open(Path::new(path_or_builtin))
        .map_err(|e| Error::Io(format!("{path_or_builtin}: {e}")))?
        .read_to_string(&mut text)?;
    Ok(CountDataset {
        observations: parse_counts(&text)?,
        source: path_or_builtin.to_string(),
    })
}

fn parse_value(token: &str, line: usize) -> Result<u64> {
    if token.starts_with('-') {
        return Err(Error::Parse {
            line,
            msg: format!("negative value `{token}`"),
        });
    }
    token.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a nonnegative integer, found `{token}`"),
    })
}

/// Parses the text of a count file. The format is fixed by the first data
/// line: one column means raw observations, two mean `k count` pairs.
pub fn parse_counts(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    let mut columns = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let width = *columns.get_or_insert(tokens.len());
        if tokens.len() != width || !(1..=2).contains(&width) {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} column(s), found {}", width.min(2), tokens.len()),
            });
        }
        let k = parse_value(tokens[0], line)?;
        let count = if width == 2 { parse_value(tokens[1], line)? } else { 1 };
        out.extend(std::iter::repeat_n(k, count as usize));
    }
    if out.is_empty() {
        return Err(Error::NoObservations);
    }
    Ok(out)
}

/// The `result.json` document written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub kernel: KernelSpec,
    pub estimator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Mixing law of the fitted mixture (the NPMLE part for `hybrid`; empty
    /// for `empirical`).
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
    /// Log-likelihood for `mle`, weighted sum of squares for `wlse`.
    pub objective: f64,
    /// Log-likelihood of the data under the fitted pmf.
    pub loglik: f64,
    pub grad_sup: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    /// Cutoff below which the hybrid pmf equals the empirical one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_tilde: Option<u64>,
    /// Observed `(k, count)` cells, stored for estimators that use them directly.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counts: Vec<(u64, u64)>,
}

impl FitRecord {
    pub fn from_fit(kernel: KernelSpec, estimator: Estimator, fit: &FitResult, data: &EmpiricalPmf, seed: u64) -> Self {
        let alpha = match estimator {
            Estimator::Wlse { alpha } => Some(alpha),
            _ => None,
        };
        let mut record = Self {
            kernel,
            estimator: match estimator {
                Estimator::Wlse { .. } => "wlse".into(),
                other => other.to_string(),
            },
            alpha,
            support: fit.support().to_vec(),
            weights: fit.weights().to_vec(),
            objective: fit.objective,
            loglik: loglik(data, &kernel, &fit.mixing),
            grad_sup: fit.grad_sup,
            iterations: fit.iterations,
            converged: fit.converged,
            seed,
            k_tilde: None,
            counts: Vec::new(),
        };
        if estimator == Estimator::Hybrid {
            let h = hybrid_estimate(data, &fit.mixture(kernel), data.n()).expect("n checked by caller");
            record.k_tilde = Some(h.k_tilde());
            record.counts = data.cells().collect();
            record.loglik = data.cells().map(|(k, c)| c as f64 * h.eval(k).ln()).sum();
        }
        record
    }

    pub fn empirical(kernel: KernelSpec, data: &EmpiricalPmf, seed: u64) -> Self {
        let n = data.n() as f64;
        let ll = data.cells().map(|(_, c)| c as f64 * (c as f64 / n).ln()).sum();
        Self {
            kernel,
            estimator: "empirical".into(),
            alpha: None,
            support: Vec::new(),
            weights: Vec::new(),
            objective: ll,
            loglik: ll,
            grad_sup: 0.0,
            iterations: 0,
            converged: true,
            seed,
            k_tilde: None,
            counts: data.cells().collect(),
        }
    }

    pub fn mixing(&self) -> Result<MixingDistribution> {
        MixingDistribution::discrete(self.support.clone(), self.weights.clone())
    }

    /// Rebuilds the fitted pmf.
    pub fn estimate(&self) -> Result<Estimate> {
        match self.estimator.as_str() {
            "empirical" => Ok(Estimate::Empirical(EmpiricalPmf::from_counts(self.counts.iter().copied())?)),
            "hybrid" => {
                let data = EmpiricalPmf::from_counts(self.counts.iter().copied())?;
                let mix = MixturePmf::new(self.kernel, self.mixing()?)?;
                Ok(Estimate::Hybrid(hybrid_estimate(&data, &mix, data.n())?))
            }
            _ => Ok(Estimate::Mixture(MixturePmf::new(self.kernel, self.mixing()?)?)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[derive(Serialize)]
struct CiRow {
    k: u64,
    point: f64,
    lower: f64,
    upper: f64,
    mode: String,
    #[serde(rename = "B")]
    b: usize,
    level: f64,
}

/// Columns `k,point,lower,upper,mode,B,level`.
pub fn write_ci_csv<W: Write>(table: &CiTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, &k) in table.k_values.iter().enumerate() {
        w.serialize(CiRow {
            k,
            point: table.point[i],
            lower: table.lower[i],
            upper: table.upper[i],
            mode: table.mode.to_string(),
            b: table.b,
            level: table.level,
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `estimator,metric,mean,se,runs`.
pub fn write_cv_csv<W: Write>(table: &CvTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &table.rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `scenario,n,estimator,metric,scaled_mean,std_error,reps,seed`.
pub fn write_records_csv<W: Write>(records: &[SimRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<SimRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)
}

/// Parses `h`, `l1` or `l2`.
pub fn parse_metric(s: &str) -> Result<Metric> {
    match s {
        "h" => Ok(Metric::H),
        "l1" => Ok(Metric::L1),
        "l2" => Ok(Metric::L2),
        _ => Err(Error::InvalidArgument(format!("unknown metric `{s}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_earthquakes() {
        let d = load_counts("earthquakes").unwrap();
        assert_eq!(d.observations.len(), 122);
        assert_eq!(d.observations[0], 13);
        assert_eq!(d.observations[43], 41);
        assert_eq!(*d.observations.last().unwrap(), 19);
    }

    #[test]
    fn parse_formats() {
        assert_eq!(parse_counts("3\n3\n5\n").unwrap(), vec![3, 3, 5]);
        assert_eq!(parse_counts("0 2\n3 1\n").unwrap(), vec![0, 0, 3]);
        assert_eq!(parse_counts("# header\n\n4\n").unwrap(), vec![4]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert_eq!(
            parse_counts("1\n2\nx\n").unwrap_err(),
            Error::Parse {
                line: 3,
                msg: "expected a nonnegative integer, found `x`".into()
            }
        );
        assert!(matches!(parse_counts("1\n-2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_counts("1 2\n3\n"), Err(Error::Parse { line: 2, .. })));
        assert_eq!(parse_counts("\n# nothing\n").unwrap_err(), Error::NoObservations);
        assert!(matches!(load_counts("/nonexistent/file.txt"), Err(Error::Io(_))));
    }

    #[test]
    fn ci_csv_header() {
        let t = CiTable {
            k_values: vec![0, 1],
            point: vec![0.5, 0.25],
            lower: vec![0.4, 0.2],
            upper: vec![0.6, 0.3],
            mode: crate::resampling::CiMode::Parametric,
            b: 40,
            level: 0.95,
            dropped: 0,
        };
        let mut buf = Vec::new();
        write_ci_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "k,point,lower,upper,mode,B,level");
        assert_eq!(text.lines().nth(1).unwrap(), "0,0.5,0.4,0.6,param,40,0.95");
    }

    #[test]
    fn records_csv_round_trip() {
        let r = SimRecord {
            scenario: "ex2".into(),
            n: 100,
            estimator: "wlse:0.4".into(),
            metric: Metric::L2,
            scaled_mean: 0.123_456_789_012_345_67,
            std_error: 1e-3,
            reps: 10,
            seed: 7,
        };
        let mut buf = Vec::new();
        write_records_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("scenario,n,estimator,metric,scaled_mean,std_error,reps,seed\n"));
        assert_eq!(read_records_csv(&buf[..]).unwrap(), vec![r]);
    }
}
