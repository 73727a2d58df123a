//! Learning among finitely many states: Chernoff exponents, the pairwise
//! likelihood-ratio tournament and its Monte Carlo minimax cost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::linear_fit;
use crate::grid_density::{
    cell_index, chernoff_exponent, hellinger_sq_unchecked, CellSampler, GridDensity,
};
use crate::seeding::{task_rng, TAG_REPLICATION};

/// Two states count as distinct when some cell differs by more than this.
pub const DISTINCT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct FiniteExperiment {
    states: Vec<GridDensity>,
    labels: Vec<String>,
}

impl FiniteExperiment {
    /// Labels default to `theta_1, theta_2, ...`.
    pub fn new(states: Vec<GridDensity>) -> Result<Self> {
        let labels = (1..=states.len()).map(|i| format!("theta_{i}")).collect();
        Self::with_labels(states, labels, false)
    }

    pub fn with_labels(states: Vec<GridDensity>, labels: Vec<String>, allow_identical: bool) -> Result<Self> {
        if states.len() < 2 {
            return Err(invalid("states", "need at least two states"));
        }
        if labels.len() != states.len() {
            return Err(invalid(
                "labels",
                format!("{} labels for {} states", labels.len(), states.len()),
            ));
        }
        for s in &states[1..] {
            states[0].check_grid(s)?;
        }
        if !allow_identical {
            for i in 0..states.len() {
                for j in i + 1..states.len() {
                    let differs = states[i]
                        .values()
                        .iter()
                        .zip(states[j].values())
                        .any(|(a, b)| (a - b).abs() > DISTINCT_TOL);
                    if !differs {
                        return Err(invalid("states", format!("states {i} and {j} coincide")));
                    }
                }
            }
        }
        Ok(Self { states, labels })
    }

    /// Builds an experiment that may contain coinciding states.
    pub fn allowing_identical(states: Vec<GridDensity>) -> Result<Self> {
        let labels = (1..=states.len()).map(|i| format!("theta_{i}")).collect();
        Self::with_labels(states, labels, true)
    }

    pub fn states(&self) -> &[GridDensity] {
        &self.states
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn m(&self) -> usize {
        self.states[0].m()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentMatrix {
    pub lambda: Vec<Vec<f64>>,
    pub lambda_star: f64,
}

pub fn pairwise_exponent_matrix(exp: &FiniteExperiment) -> Result<ExponentMatrix> {
    let n = exp.len();
    let mut lambda = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let l = chernoff_exponent(&exp.states[i], &exp.states[j])?.lambda;
            lambda[i][j] = l;
            lambda[j][i] = l;
        }
    }
    let lambda_star = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| lambda[i][j])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentMatrix { lambda, lambda_star })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prediction {
    State(usize),
    Empty,
}

impl Prediction {
    pub fn label<'a>(&self, exp: &'a FiniteExperiment) -> Option<&'a str> {
        match *self {
            Prediction::State(i) => Some(&exp.labels[i]),
            Prediction::Empty => None,
        }
    }
}

pub fn tournament_predict(exp: &FiniteExperiment, sample: &[f64]) -> Result<Prediction> {
    if sample.is_empty() {
        return Err(invalid("sample", "must be nonempty"));
    }
    if let Some(x) = sample.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(invalid("sample", format!("point {x} outside [0, 1]")));
    }
    let m = exp.m();
    let cells: Vec<usize> = sample.iter().map(|&x| cell_index(x, m)).collect();
    Ok(tournament_predict_cells(exp, &cells))
}

/// Tournament on pre-binned cell indices.
pub fn tournament_predict_cells(exp: &FiniteExperiment, cells: &[usize]) -> Prediction {
    let n = exp.len();
    let logs: Vec<&[f64]> = exp.states.iter().map(|s| s.log_values()).collect();
    let mut log_ratio = vec![vec![0.0; n]; n];
    for &c in cells {
        for i in 0..n {
            for j in i + 1..n {
                log_ratio[i][j] += logs[i][c] - logs[j][c];
            }
        }
    }
    decide(&log_ratio)
}

/// Tournament on per-point log-likelihoods, `log_lik[s][i]` being the
/// log-likelihood of state `i` at point `s`.
pub fn tournament_from_log_likelihoods(log_lik: &[Vec<f64>]) -> Result<Prediction> {
    let n = log_lik.first().map_or(0, Vec::len);
    if n < 2 || log_lik.iter().any(|row| row.len() != n) {
        return Err(invalid("log_lik", "rows must share a length of at least two"));
    }
    let mut log_ratio = vec![vec![0.0; n]; n];
    for row in log_lik {
        for i in 0..n {
            for j in i + 1..n {
                log_ratio[i][j] += row[i] - row[j];
            }
        }
    }
    Ok(decide(&log_ratio))
}

/// `log_ratio[i][j]` for `i < j` holds the summed log-likelihood ratio.
fn decide(log_ratio: &[Vec<f64>]) -> Prediction {
    let n = log_ratio.len();
    let wins = |i: usize, j: usize| {
        if i < j {
            log_ratio[i][j] >= 0.0
        } else {
            log_ratio[j][i] < 0.0
        }
    };
    let winners: Vec<usize> = (0..n)
        .filter(|&i| (0..n).all(|j| j == i || wins(i, j)))
        .collect();
    match winners.as_slice() {
        [w] => Prediction::State(*w),
        _ => Prediction::Empty,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub t: usize,
    pub cost: f64,
    pub stderr: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub points: Vec<CostPoint>,
    pub fitted_lambda: Option<f64>,
}

impl CostCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,cost,stderr,reps\n");
        for p in &self.points {
            out.push_str(&format!("{},{:.10e},{:.10e},{}\n", p.t, p.cost, p.stderr, p.reps));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "fitted_lambda": self.fitted_lambda,
            "points": self.points.len(),
            "reps": self.points.first().map(|p| p.reps),
        })
    }
}

/// Per true state `i`: cost of predicting `j`, with index `n` for Empty.
fn cost_table(exp: &FiniteExperiment) -> Vec<Vec<f64>> {
    let n = exp.len();
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| hellinger_sq_unchecked(&exp.states[i], &exp.states[j]))
                .collect();
            row[i] = 0.0;
            let worst = row.iter().cloned().fold(0.0, f64::max);
            row.push(worst);
            row
        })
        .collect()
}

pub fn minimax_cost_curve(
    exp: &FiniteExperiment,
    t_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<CostCurve> {
    if reps < 1000 {
        return Err(invalid("reps", format!("need at least 1000 replications, got {reps}")));
    }
    if t_list.is_empty() || t_list.contains(&0) {
        return Err(invalid("t", "sample sizes must be positive and nonempty"));
    }
    let n = exp.len();
    let costs = cost_table(exp);
    let samplers: Vec<CellSampler> = exp.states.iter().map(CellSampler::new).collect();
    let mut points = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let mut worst = CostPoint {
            t,
            cost: 0.0,
            stderr: 0.0,
            reps,
        };
        for i in 0..n {
            let predictions: Vec<usize> = (0..reps as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = task_rng(seed, &[TAG_REPLICATION, i as u64, t as u64, r]);
                    let cells = samplers[i].sample_cells(&mut rng, t);
                    match tournament_predict_cells(exp, &cells) {
                        Prediction::State(j) => j,
                        Prediction::Empty => n,
                    }
                })
                .collect();
            let mut counts = vec![0usize; n + 1];
            for p in predictions {
                counts[p] += 1;
            }
            let reps_f = reps as f64;
            let mean = counts.iter().zip(&costs[i]).map(|(&k, c)| k as f64 * c).sum::<f64>() / reps_f;
            let second = counts.iter().zip(&costs[i]).map(|(&k, c)| k as f64 * c * c).sum::<f64>() / reps_f;
            let stderr = ((second - mean * mean).max(0.0) / reps_f).sqrt();
            if mean > worst.cost {
                worst.cost = mean;
                worst.stderr = stderr;
            }
        }
        points.push(worst);
    }
    let mut curve = CostCurve {
        points,
        fitted_lambda: None,
    };
    curve.fitted_lambda = fit_exponential_rate(&curve).ok();
    Ok(curve)
}

/// Slope of `ln cost` on `t` over points with cost at least `10 / reps`.
pub fn fit_exponential_rate(curve: &CostCurve) -> Result<f64> {
    let positive = curve.points.iter().filter(|p| p.cost > 0.0).count();
    if positive < 4 {
        return Err(Error::FitFailure(format!(
            "need at least 4 positive cost estimates, got {positive}"
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve
        .points
        .iter()
        .filter(|p| p.cost >= 10.0 / p.reps as f64)
        .map(|p| (p.t as f64, p.cost.ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::FitFailure(format!(
            "only {} points above the count floor",
            xs.len()
        )));
    }
    Ok(linear_fit(&xs, &ys)?.0)
}
