//! Plot-ready data for rate runs: the complexity cost `t^-1 log N(eps)` and
//! the accuracy cost `eps^2` over a radius grid, next to the empirical points.

use std::fs;
use std::path::PathBuf;

use learning_efficiency::fit::fit_through_origin;
use learning_efficiency::minimax_estimator::RatePoint;

use crate::error::{HarnessError, Result};
use crate::record::RunRecord;

pub const GRID_POINTS: usize = 200;
pub const GRID_RANGE: (f64, f64) = (1e-2, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epsilon: f64,
    /// `G eps^{-1/r} / t`.
    pub complexity: f64,
    pub accuracy: f64,
}

impl CurvePoint {
    pub fn total(&self) -> f64 {
        self.complexity + self.accuracy
    }
}

/// Log-spaced radii from `lo` to `hi` inclusive.
pub fn epsilon_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

pub fn bound_curves(t: f64, r: f64, g: f64, grid: &[f64]) -> Vec<CurvePoint> {
    grid.iter()
        .map(|&e| CurvePoint {
            epsilon: e,
            complexity: g * e.powf(-1.0 / r) / t,
            accuracy: e * e,
        })
        .collect()
}

/// Writes `plot/bound_curves.csv` and `plot/empirical.csv` into the run
/// directory and returns their paths.
pub fn emit_plot_data(record: &RunRecord) -> Result<Vec<PathBuf>> {
    let no_data = || HarnessError::NoPlotData {
        run_id: record.run_id.clone(),
        kind: record.kind.clone(),
    };
    if !matches!(record.kind.as_str(), "minimax-rate" | "allocate" | "explore") {
        return Err(no_data());
    }
    let points: Vec<RatePoint> = serde_json::from_value(record.summary["points"].clone())
        .map_err(HarnessError::json(record.directory.join(crate::record::RECORD_FILE)))?;
    let r = record.summary["r"].as_f64().ok_or_else(no_data)?;
    if points.is_empty() {
        return Err(no_data());
    }
    let g = match record.summary["G_estimate"].as_f64() {
        Some(g) => g,
        None => {
            let (xs, ys): (Vec<f64>, Vec<f64>) = points
                .iter()
                .map(|p| (p.epsilon.powf(-1.0 / r), (p.centers as f64).ln()))
                .unzip();
            fit_through_origin(&xs, &ys).map_err(HarnessError::experiment("entropy constant"))?
        }
    };

    let grid = epsilon_grid(GRID_RANGE.0, GRID_RANGE.1, GRID_POINTS);
    let mut curves = String::from("t,epsilon,complexity,accuracy,total\n");
    let mut empirical = String::from("t,epsilon,centers,complexity,accuracy,risk,stderr\n");
    for p in &points {
        for c in bound_curves(p.t as f64, r, g, &grid) {
            curves.push_str(&format!(
                "{},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                p.t,
                c.epsilon,
                c.complexity,
                c.accuracy,
                c.total()
            ));
        }
        empirical.push_str(&format!(
            "{},{:.10e},{},{:.10e},{:.10e},{:.10e},{:.10e}\n",
            p.t,
            p.epsilon,
            p.centers,
            (p.centers as f64).ln() / p.t as f64,
            p.epsilon * p.epsilon,
            p.risk,
            p.stderr
        ));
    }
    let dir = record.directory.join("plot");
    fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    let mut written = Vec::new();
    for (name, text) in [("bound_curves.csv", curves), ("empirical.csv", empirical)] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(HarnessError::io(&path))?;
        written.push(path);
    }
    Ok(written)
}
