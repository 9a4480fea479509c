//! Replication-averaged error curves.

use serde::Serialize;
use siadmm::{Record, RunRow};

use crate::{HarnessError, Result};

/// Most points an aligned curve keeps.
pub const MAX_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Abscissa {
    Samples,
    OuterIteration,
}

/// Which error column a curve averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `|x - x*|^2`
    X,
    /// `|x - x*|^2 + |y - y*|^2`
    Xy,
    /// `|u - u*|_G^2`
    G,
}

impl Metric {
    pub fn of(&self, row: &RunRow<f64>) -> Option<f64> {
        match self {
            Metric::X => row.err_x,
            Metric::Xy => Some(row.err_x? + row.err_y?),
            Metric::G => row.err_u_g,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::X => "err_x",
            Metric::Xy => "err_xy",
            Metric::G => "err_u_G",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub algorithm: String,
    pub abscissa: Abscissa,
    pub metric: Metric,
    pub points: Vec<CurvePoint>,
}

impl ErrorCurve {
    pub fn replications(&self) -> usize {
        self.points.first().map_or(0, |p| p.values.len())
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let reps = self.replications();
        let mut header = vec![
            match self.abscissa {
                Abscissa::Samples => "samples".to_string(),
                Abscissa::OuterIteration => "k".to_string(),
            },
            "mean".into(),
            "stderr".into(),
        ];
        header.extend((0..reps).map(|r| format!("rep{r}")));
        w.write_record(&header).map_err(csv_err)?;
        for p in &self.points {
            let mut row = vec![p.x.to_string(), p.mean.to_string(), p.stderr.to_string()];
            row.extend(p.values.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        finish(w)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Check(format!("csv encoding failed: {e}"))
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| HarnessError::Check(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Check(e.to_string()))
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Indices `0, s, 2s, ...` plus the last index, with `s` chosen so that at
/// most [`MAX_POINTS`] survive.
pub fn decimation_indices(len: usize) -> Vec<usize> {
    if len <= MAX_POINTS {
        return (0..len).collect();
    }
    let stride = (len - 1).div_ceil(MAX_POINTS - 1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if *idx.last().unwrap() != len - 1 {
        idx.push(len - 1);
    }
    idx
}

fn build(
    records: &[&Record],
    metric: Metric,
    abscissa: Abscissa,
    x_of: impl Fn(&RunRow<f64>) -> f64,
) -> Result<ErrorCurve> {
    let first = records
        .first()
        .ok_or_else(|| HarnessError::Check("cannot build a curve from no records".into()))?;
    let len = first.rows.len();
    for r in records {
        if r.algorithm != first.algorithm {
            return Err(HarnessError::Check(format!(
                "records mix algorithms {} and {}",
                first.algorithm, r.algorithm
            )));
        }
        if r.rows.len() != len || r.rows.iter().zip(&first.rows).any(|(a, b)| x_of(a) != x_of(b)) {
            return Err(HarnessError::Check(format!("records of {} have different abscissae", r.algorithm)));
        }
    }
    let mut points = Vec::with_capacity(len.min(MAX_POINTS));
    let mut last_x = f64::NEG_INFINITY;
    for i in decimation_indices(len) {
        let x = x_of(&first.rows[i]);
        if !(x > last_x) {
            return Err(HarnessError::Check(format!("abscissa {x} does not increase")));
        }
        last_x = x;
        let values = records
            .iter()
            .map(|r| {
                metric.of(&r.rows[i]).ok_or_else(|| {
                    HarnessError::Check(format!("{} does not report {}", r.algorithm, metric.name()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, stderr) = mean_stderr(&values);
        points.push(CurvePoint { x, mean, stderr, values });
    }
    Ok(ErrorCurve { algorithm: first.algorithm.clone(), abscissa, metric, points })
}

/// Error against cumulative samples drawn, one point per recorded row,
/// decimated by a uniform stride to at most [`MAX_POINTS`] with both ends kept.
pub fn align_by_samples(records: &[&Record], metric: Metric) -> Result<ErrorCurve> {
    build(records, metric, Abscissa::Samples, |r| r.samples_total() as f64)
}

/// Error against the outer iteration counter.
pub fn align_by_iteration(records: &[&Record], metric: Metric) -> Result<ErrorCurve> {
    build(records, metric, Abscissa::OuterIteration, |r| r.k as f64)
}
