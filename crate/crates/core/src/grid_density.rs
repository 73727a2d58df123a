//! Piecewise-constant densities on `[0, 1]` and the divergences between them.
//!
//! A [`GridDensity`] holds one height per uniform cell; every integral is an
//! exact cell sum with weight `1/m`. Two densities interoperate only when
//! they share both the cell count and the bound `M`.

use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default number of cells.
pub const DEFAULT_CELLS: usize = 64;

const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GridDensity {
    values: Vec<f64>,
    log_values: Vec<f64>,
    bound: f64,
}

impl PartialEq for GridDensity {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.values == other.values
    }
}

/// JSON sidecar accompanying a density CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySidecar {
    pub m: usize,
    #[serde(rename = "M")]
    pub bound: f64,
}

impl GridDensity {
    /// Builds a density from raw cell heights, dividing by the cell mean and
    /// then checking every value against `[1/M, M]`.
    pub fn new(values: Vec<f64>, bound: f64) -> Result<Self> {
        if !(bound > 1.0) || !bound.is_finite() {
            return Err(invalid("M", format!("must be a finite real > 1, got {bound}")));
        }
        if values.len() < 2 {
            return Err(invalid("m", format!("need at least 2 cells, got {}", values.len())));
        }
        if let Some((cell, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v <= 0.0)
        {
            return Err(Error::OutOfBounds { cell, value, bound });
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        // already-normalized input is kept bit-exact so CSV round trips are lossless
        let values: Vec<f64> = if (mean - 1.0).abs() <= 4.0 * f64::EPSILON {
            values
        } else {
            values.into_iter().map(|v| v / mean).collect()
        };
        let lo = 1.0 / bound;
        if let Some((cell, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| **v < lo || **v > bound)
        {
            return Err(Error::OutOfBounds { cell, value, bound });
        }
        let check = values.iter().sum::<f64>() / values.len() as f64;
        if (check - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Precondition(format!(
                "cell mean {check} does not normalize to 1"
            )));
        }
        let log_values = values.iter().map(|v| v.ln()).collect();
        Ok(Self {
            values,
            log_values,
            bound,
        })
    }

    pub fn uniform(m: usize, bound: f64) -> Result<Self> {
        Self::new(vec![1.0; m], bound)
    }

    /// Samples `f` at cell midpoints.
    pub fn from_fn(m: usize, bound: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..m).map(|i| f((i as f64 + 0.5) / m as f64)).collect();
        Self::new(values, bound)
    }

    /// `high` on the first half of the cells, `low` on the second half.
    pub fn step(m: usize, bound: f64, high: f64, low: f64) -> Result<Self> {
        let values = (0..m).map(|i| if 2 * i < m { high } else { low }).collect();
        Self::new(values, bound)
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    /// Cell holding `x`; `x = 1` maps to the last cell.
    pub fn cell_of(&self, x: f64) -> usize {
        cell_index(x, self.m())
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.values[self.cell_of(x)]
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.m() == other.m() && self.bound == other.bound
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.m(),
                right: other.m(),
                left_bound: self.bound,
                right_bound: other.bound,
            })
        }
    }

    pub fn sidecar(&self) -> DensitySidecar {
        DensitySidecar {
            m: self.m(),
            bound: self.bound,
        }
    }

    /// Header line plus one row of cell values at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.m()).map(|i| format!("cell_{i}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("writing to a String cannot fail");
        }
        out.push('\n');
        out
    }

    /// Parses the output of [`GridDensity::to_csv`]; the header line is optional.
    pub fn from_csv(text: &str, sidecar: &DensitySidecar) -> Result<Self> {
        let row = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .find(|l| !l.starts_with("cell_"))
            .ok_or_else(|| Error::Parse("no data row in density CSV".into()))?;
        let values = row
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad cell value `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != sidecar.m {
            return Err(Error::Parse(format!(
                "sidecar declares {} cells but the row has {}",
                sidecar.m,
                values.len()
            )));
        }
        Self::new(values, sidecar.bound)
    }

    /// Convex combination `Σ w_j p_j` of densities on a shared grid.
    pub fn mixture(components: &[&GridDensity], weights: &[f64]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Precondition("mixture of zero components".into()))?;
        let mut values = vec![0.0; first.m()];
        for (c, &w) in components.iter().zip(weights) {
            first.check_grid(c)?;
            for (acc, v) in values.iter_mut().zip(&c.values) {
                *acc += w * v;
            }
        }
        Self::new(values, first.bound)
    }
}

pub(crate) fn cell_index(x: f64, m: usize) -> usize {
    let i = (x * m as f64).floor();
    if i <= 0.0 {
        0
    } else {
        (i as usize).min(m - 1)
    }
}

/// Inverse-CDF sampler over cells, uniform within a cell.
#[derive(Debug, Clone)]
pub struct CellSampler {
    index: WeightedIndex<f64>,
    m: usize,
}

impl CellSampler {
    pub fn new(density: &GridDensity) -> Self {
        let index = WeightedIndex::new(density.values()).expect("density values are positive");
        Self {
            index,
            m: density.m(),
        }
    }

    pub fn sample_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let cell = self.sample_cell(rng);
        (cell as f64 + rng.gen::<f64>()) / self.m as f64
    }

    pub fn sample_cells<R: Rng + ?Sized>(&self, rng: &mut R, t: usize) -> Vec<usize> {
        (0..t).map(|_| self.sample_cell(rng)).collect()
    }
}

fn mean(m: usize, sum: f64) -> f64 {
    sum / m as f64
}

/// `K(p‖q) = ∫ p log(p/q)`.
pub fn kl_divergence(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    p.check_grid(q)?;
    Ok(kl_unchecked(p, q))
}

pub(crate) fn kl_unchecked(p: &GridDensity, q: &GridDensity) -> f64 {
    let s: f64 = p
        .values
        .iter()
        .zip(p.log_values.iter().zip(&q.log_values))
        .map(|(pv, (lp, lq))| pv * (lp - lq))
        .sum();
    mean(p.m(), s).max(0.0)
}

/// Squared Hellinger distance `∫ (√p − √q)² = 2 − 2∫√(pq)`.
pub fn hellinger_sq(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    p.check_grid(q)?;
    Ok(hellinger_sq_unchecked(p, q))
}

pub(crate) fn hellinger_sq_unchecked(p: &GridDensity, q: &GridDensity) -> f64 {
    // the squared-root-difference form vanishes exactly at p = q
    let s: f64 = p.values.iter().zip(&q.values).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    mean(p.m(), s).min(2.0)
}

/// Rényi divergence of order `sigma`; `sigma = 1` is rejected (use KL).
pub fn renyi_divergence(p: &GridDensity, q: &GridDensity, sigma: f64) -> Result<f64> {
    p.check_grid(q)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("must be a finite real > 0, got {sigma}")));
    }
    if sigma == 1.0 {
        return Err(invalid("sigma", "order 1 is the KL divergence"));
    }
    let s = power_mean(p, q, sigma);
    Ok((s.ln() / (sigma - 1.0)).max(0.0))
}

/// `∫ p^κ q^{1−κ}`.
pub(crate) fn power_mean(p: &GridDensity, q: &GridDensity, kappa: f64) -> f64 {
    let s: f64 = p
        .log_values
        .iter()
        .zip(&q.log_values)
        .map(|(lp, lq)| (kappa * lp + (1.0 - kappa) * lq).exp())
        .sum();
    mean(p.m(), s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LpOrder {
    L1,
    L2,
    Linf,
}

impl LpOrder {
    /// Maps a numeric order (`f64::INFINITY` for the sup norm).
    pub fn from_order(order: f64) -> Result<Self> {
        match order {
            1.0 => Ok(Self::L1),
            2.0 => Ok(Self::L2),
            f64::INFINITY => Ok(Self::Linf),
            o => Err(invalid("order", format!("unsupported Lp order {o}; use 1, 2 or inf"))),
        }
    }
}

pub fn lp_distance(p: &GridDensity, q: &GridDensity, order: LpOrder) -> Result<f64> {
    p.check_grid(q)?;
    Ok(lp_unchecked(p, q, order))
}

pub(crate) fn lp_unchecked(p: &GridDensity, q: &GridDensity, order: LpOrder) -> f64 {
    let gaps = p.values.iter().zip(&q.values).map(|(a, b)| (a - b).abs());
    match order {
        LpOrder::L1 => mean(p.m(), gaps.sum()),
        LpOrder::L2 => mean(p.m(), gaps.map(|g| g * g).sum()).sqrt(),
        LpOrder::Linf => gaps.fold(0.0, f64::max),
    }
}

/// Chernoff exponent `λ = log min_κ ∫ p^κ q^{1−κ}` with its minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffExponent {
    pub lambda: f64,
    pub kappa: f64,
}

const KAPPA_SCAN_STEP: f64 = 1e-3;
const KAPPA_TOL: f64 = 1e-8;

pub fn chernoff_exponent(p: &GridDensity, q: &GridDensity) -> Result<ChernoffExponent> {
    p.check_grid(q)?;
    if p.values == q.values {
        return Ok(ChernoffExponent {
            lambda: 0.0,
            kappa: 0.5,
        });
    }
    let f = |k: f64| power_mean(p, q, k);

    let steps = (1.0 / KAPPA_SCAN_STEP).round() as usize;
    let (best, _) = (0..=steps)
        .map(|i| (i, f(i as f64 * KAPPA_SCAN_STEP)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let mut a = best.saturating_sub(1) as f64 * KAPPA_SCAN_STEP;
    let mut b = ((best + 1).min(steps)) as f64 * KAPPA_SCAN_STEP;

    // golden-section refinement; the objective is convex in κ
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > KAPPA_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let kappa = 0.5 * (a + b);
    // the endpoints integrate to one, so the minimum never exceeds 1
    let lambda = f(kappa).ln().min(0.0);
    Ok(ChernoffExponent { lambda, kappa })
}

/// All divergences between one ordered pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub kl: f64,
    pub hellinger_sq: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    /// `(σ, D_σ(p‖q))` for each requested order.
    pub renyi: Vec<(f64, f64)>,
}

pub fn divergence_report(
    p: &GridDensity,
    q: &GridDensity,
    renyi_orders: &[f64],
) -> Result<DivergenceReport> {
    p.check_grid(q)?;
    let renyi = renyi_orders
        .iter()
        .map(|&s| renyi_divergence(p, q, s).map(|d| (s, d)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DivergenceReport {
        kl: kl_unchecked(p, q),
        hellinger_sq: hellinger_sq_unchecked(p, q),
        l1: lp_unchecked(p, q, LpOrder::L1),
        l2: lp_unchecked(p, q, LpOrder::L2),
        linf: lp_unchecked(p, q, LpOrder::Linf),
        renyi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform() -> GridDensity {
        GridDensity::uniform(64, 2.0).unwrap()
    }

    fn step(high: f64, low: f64) -> GridDensity {
        GridDensity::step(64, 2.0, high, low).unwrap()
    }

    #[test]
    fn constructor_renormalizes_and_rejects_bad_input() {
        let d = GridDensity::new(vec![2.0, 2.0, 2.0, 2.0], 2.0).unwrap();
        assert!(d.values().iter().all(|&v| v == 1.0));
        assert!(GridDensity::new(vec![1.0], 2.0).is_err());
        assert!(GridDensity::new(vec![1.0, 1.0], 1.0).is_err());
        assert!(matches!(
            GridDensity::new(vec![0.1, 1.9], 2.0),
            Err(Error::OutOfBounds { cell: 0, .. })
        ));
        assert!(GridDensity::new(vec![1.0, -1.0], 2.0).is_err());
    }

    #[test]
    fn kl_closed_forms() {
        let (p, q) = (uniform(), step(1.5, 0.5));
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let oracle_pq = 0.5 * (1.0f64 / 1.5).ln() + 0.5 * (1.0f64 / 0.5).ln();
        let oracle_qp = 0.5 * (1.5 * 1.5f64.ln() + 0.5 * 0.5f64.ln());
        assert_relative_eq!(kl_divergence(&p, &q).unwrap(), oracle_pq, epsilon = 1e-12);
        assert_relative_eq!(kl_divergence(&p, &q).unwrap(), 0.1438410, epsilon = 1e-7);
        assert_relative_eq!(kl_divergence(&q, &p).unwrap(), oracle_qp, epsilon = 1e-12);
        assert_relative_eq!(kl_divergence(&q, &p).unwrap(), 0.1308120, epsilon = 1e-7);
    }

    #[test]
    fn hellinger_closed_form_and_symmetry() {
        let (p, q) = (uniform(), step(1.5, 0.5));
        assert_eq!(hellinger_sq(&p, &p).unwrap(), 0.0);
        let h = hellinger_sq(&p, &q).unwrap();
        assert_relative_eq!(h, 2.0 - (1.5f64.sqrt() + 0.5f64.sqrt()), epsilon = 1e-12);
        assert_relative_eq!(h, 0.0681483, epsilon = 1e-7);
        assert_eq!(h, hellinger_sq(&q, &p).unwrap());
    }

    #[test]
    fn renyi_closed_forms() {
        let (p, q) = (uniform(), step(1.5, 0.5));
        assert_eq!(renyi_divergence(&p, &p, 3.0).unwrap(), 0.0);
        assert_relative_eq!(renyi_divergence(&p, &q, 2.0).unwrap(), 0.2876821, epsilon = 1e-7);
        let half = renyi_divergence(&p, &q, 0.5).unwrap();
        let oracle = -2.0 * (1.5f64.sqrt() / 2.0 + 0.5f64.sqrt() / 2.0).ln();
        assert_relative_eq!(half, oracle, epsilon = 1e-12);
        assert_relative_eq!(half, 0.0693365, epsilon = 1e-7);
        let h = hellinger_sq(&p, &q).unwrap();
        assert_relative_eq!(half, -2.0 * (1.0 - h / 2.0).ln(), max_relative = 1e-9);
        assert!(renyi_divergence(&p, &q, 1.0).is_err());
        assert!(renyi_divergence(&p, &q, 0.0).is_err());
    }

    #[test]
    fn lp_closed_forms() {
        let (p, q) = (uniform(), step(1.5, 0.5));
        for o in [LpOrder::L1, LpOrder::L2, LpOrder::Linf] {
            assert_eq!(lp_distance(&p, &p, o).unwrap(), 0.0);
            assert_relative_eq!(lp_distance(&p, &q, o).unwrap(), 0.5, epsilon = 1e-12);
        }
        assert!(LpOrder::from_order(3.0).is_err());
        assert_eq!(LpOrder::from_order(f64::INFINITY).unwrap(), LpOrder::Linf);
    }

    fn kappa_grid_oracle(p: &GridDensity, q: &GridDensity) -> (f64, f64) {
        // dense scan at step 1e-5, independent of the golden-section path
        let n = 100_000;
        (0..=n)
            .map(|i| {
                let k = i as f64 / n as f64;
                let s: f64 = p
                    .values()
                    .iter()
                    .zip(q.values())
                    .map(|(a, b)| a.powf(k) * b.powf(1.0 - k))
                    .sum::<f64>()
                    / p.m() as f64;
                (s.ln(), k)
            })
            .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc })
    }

    #[test]
    fn chernoff_matches_dense_oracle() {
        let (p, q) = (uniform(), step(1.5, 0.5));
        assert_eq!(chernoff_exponent(&p, &p).unwrap().lambda, 0.0);
        let c = chernoff_exponent(&p, &q).unwrap();
        let (lambda, kappa) = kappa_grid_oracle(&p, &q);
        assert!((c.lambda - lambda).abs() < 5e-4);
        assert!((c.lambda + 0.03469).abs() < 5e-4);
        assert!((c.kappa - kappa).abs() < 1e-3);
        assert!((c.kappa - 0.51).abs() < 5e-3);
        let p4 = GridDensity::uniform(64, 4.0).unwrap();
        let wider = GridDensity::step(64, 4.0, 1.75, 0.25).unwrap();
        assert!(chernoff_exponent(&p4, &wider).unwrap().lambda < c.lambda);
    }

    #[test]
    fn csv_round_trip_and_sidecar_json() {
        let q = GridDensity::from_fn(16, 2.0, |x| 1.0 + 0.3 * (6.0 * x).sin()).unwrap();
        let side: DensitySidecar =
            serde_json::from_str(&serde_json::to_string(&q.sidecar()).unwrap()).unwrap();
        assert_eq!(serde_json::to_value(q.sidecar()).unwrap()["M"], 2.0);
        let back = GridDensity::from_csv(&q.to_csv(), &side).unwrap();
        assert_eq!(back, q);
        let bad = DensitySidecar { m: 15, bound: 2.0 };
        assert!(GridDensity::from_csv(&q.to_csv(), &bad).is_err());
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = GridDensity::uniform(8, 2.0).unwrap();
        let b = GridDensity::uniform(16, 2.0).unwrap();
        let c = GridDensity::uniform(8, 3.0).unwrap();
        assert!(matches!(kl_divergence(&a, &b), Err(Error::GridMismatch { .. })));
        assert!(hellinger_sq(&a, &c).is_err());
        assert!(chernoff_exponent(&a, &b).is_err());
    }

    #[test]
    fn cell_mapping_edges() {
        let d = GridDensity::uniform(4, 2.0).unwrap();
        assert_eq!(d.cell_of(0.0), 0);
        assert_eq!(d.cell_of(0.25), 1);
        assert_eq!(d.cell_of(1.0), 3);
    }
}
