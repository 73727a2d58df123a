//! CES task allocation, exploration of alternatives, and the demand for
//! information.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid_density::{hellinger_sq_unchecked, lp_unchecked, GridDensity, LpOrder};
use crate::holder_class::HolderSpec;
use crate::minimax_estimator::{simulate_rate_curve, EpsilonSchedule, RateCurve, RiskSettings};

/// Slack on the per-draw payoff sandwich.
pub const SANDWICH_SLACK: f64 = 1e-9;
/// Slack on the per-draw exploration bound.
pub const EXPLORATION_SLACK: f64 = 1e-12;

fn check_beta(beta: f64) -> Result<()> {
    if (1.0 / 3.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(invalid("beta", format!("must lie in [1/3, 1), got {beta}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub ability: GridDensity,
    pub beta: f64,
}

impl AllocationProblem {
    pub fn new(ability: GridDensity, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self { ability, beta })
    }

    /// Elasticity of substitution `1/beta`.
    pub fn sigma(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn payoff(&self, effort: &GridDensity) -> Result<f64> {
        ces_payoff(effort, &self.ability, self.beta)
    }
}

/// `phi^(sigma-1)` renormalized to unit mass.
pub fn ability_to_density(phi: &[f64], sigma: f64, bound: f64) -> Result<GridDensity> {
    if !(sigma > 1.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must exceed 1, got {sigma}")));
    }
    if let Some(v) = phi.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(invalid("phi", format!("must be strictly positive, got {v}")));
    }
    let raw: Vec<f64> = phi.iter().map(|v| v.powf(sigma - 1.0)).collect();
    GridDensity::new(raw, bound)
}

/// `((1/m) Σ e^(1-beta) f^beta)^(1/(1-beta))`.
pub fn ces_payoff(e: &GridDensity, f: &GridDensity, beta: f64) -> Result<f64> {
    e.check_grid(f)?;
    check_beta(beta)?;
    Ok(ces_unchecked(e, f, beta))
}

fn ces_unchecked(e: &GridDensity, f: &GridDensity, beta: f64) -> f64 {
    let inner = e
        .log_values()
        .iter()
        .zip(f.log_values())
        .map(|(le, lf)| ((1.0 - beta) * le + beta * lf).exp())
        .sum::<f64>()
        / e.m() as f64;
    inner.powf(1.0 / (1.0 - beta))
}

/// Regret of the plug-in manager who sets effort to the averaged predictive
/// density. Every draw is checked against `h²/2 <= regret <= h²/(1 - beta)`.
pub fn allocation_regret_curve(
    spec: &HolderSpec,
    beta: f64,
    schedule: EpsilonSchedule,
    t_list: &[usize],
    settings: &RiskSettings,
) -> Result<RateCurve> {
    check_beta(beta)?;
    let target = -2.0 * spec.r() / (1.0 + 2.0 * spec.r());
    simulate_rate_curve(spec, schedule, t_list, settings, target, |f, e| {
        let regret = 1.0 - ces_unchecked(e, f, beta);
        let h2 = hellinger_sq_unchecked(e, f);
        let broken = regret < h2 / 2.0 - SANDWICH_SLACK || regret > h2 / (1.0 - beta) + SANDWICH_SLACK;
        (regret, broken)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationProblem {
    pub success: GridDensity,
    pub budget: f64,
}

impl ExplorationProblem {
    pub fn new(success: GridDensity, budget: f64) -> Result<Self> {
        budget_cells(budget, success.m())?;
        Ok(Self { success, budget })
    }

    pub fn best_set(&self) -> Result<ExplorationSet> {
        optimal_exploration_set(&self.success, self.budget)
    }
}

fn budget_cells(d: f64, m: usize) -> Result<usize> {
    let cells = d * m as f64;
    let k = cells.round();
    if !(d > 0.0 && d < 1.0) || (cells - k).abs() > 1e-9 || k < 1.0 {
        return Err(invalid("d", format!("budget {d} is not a positive multiple of 1/{m} below 1")));
    }
    Ok(k as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSet {
    /// Chosen cells in increasing order.
    pub cells: Vec<usize>,
    /// `d^-1 ∫_D p`.
    pub value: f64,
}

/// The `d·m` highest cells of `p`, lowest index first among ties.
pub fn optimal_exploration_set(p: &GridDensity, d: f64) -> Result<ExplorationSet> {
    let k = budget_cells(d, p.m())?;
    Ok(top_cells(p, k, d))
}

fn top_cells(p: &GridDensity, k: usize, d: f64) -> ExplorationSet {
    let v = p.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut cells = order[..k].to_vec();
    cells.sort_unstable();
    let value = set_value(p, &cells, d);
    ExplorationSet { cells, value }
}

fn set_value(p: &GridDensity, cells: &[usize], d: f64) -> f64 {
    cells.iter().map(|&i| p.values()[i]).sum::<f64>() / p.m() as f64 / d
}

/// Regret of exploring the best set of the averaged predictive density.
/// Every draw is checked against `0 <= regret <= d^-1 ‖p − p̂‖∞`.
pub fn exploration_regret_curve(
    spec: &HolderSpec,
    d: f64,
    schedule: EpsilonSchedule,
    t_list: &[usize],
    settings: &RiskSettings,
) -> Result<RateCurve> {
    let k = budget_cells(d, settings.m)?;
    simulate_rate_curve(spec, schedule, t_list, settings, exploration_target(spec), |p, p_hat| {
        let best = top_cells(p, k, d).value;
        let chosen = top_cells(p_hat, k, d);
        let regret = best - set_value(p, &chosen.cells, d);
        let cap = lp_unchecked(p, p_hat, LpOrder::Linf) / d;
        let broken = regret < -EXPLORATION_SLACK || regret > cap + EXPLORATION_SLACK;
        (regret, broken)
    })
}

/// Rate exponent of exploration regret: `-α²/((1+2α)(1+α))` for `n = 0`,
/// `-r/(2(1+2r))` otherwise.
pub fn exploration_target(spec: &HolderSpec) -> f64 {
    if spec.n == 0 {
        let a = spec.alpha;
        -a * a / ((1.0 + 2.0 * a) * (1.0 + a))
    } else {
        let r = spec.r();
        -r / (2.0 * (1.0 + 2.0 * r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandInputs {
    pub r: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "price")]
    pub pi: f64,
}

impl DemandInputs {
    pub fn new(r: f64, k: f64, pi: f64) -> Result<Self> {
        for (name, v) in [("r", r), ("K", k), ("price", pi)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(Self { r, k, pi })
    }

    /// Net value `1 − K t^{-2r/(1+2r)} − π t` of buying `t` observations.
    pub fn net_value(&self, t: f64) -> f64 {
        1.0 - self.k * t.powf(-2.0 * self.r / (1.0 + 2.0 * self.r)) - self.pi * t
    }
}

pub fn demand_exponent(r: f64) -> f64 {
    0.5 * (1.0 + 2.0 * r) / (1.0 + 3.0 * r)
}

/// `((2rK/(1+2r)) / π)^((1/2)(1+2r)/(1+3r))`.
pub fn information_demand(inputs: &DemandInputs) -> f64 {
    let r = inputs.r;
    (2.0 * r * inputs.k / (1.0 + 2.0 * r) / inputs.pi).powf(demand_exponent(r))
}

/// Maximizer of [`DemandInputs::net_value`] by golden-section search on
/// `ln t`; the objective is concave in `t`, hence unimodal in `ln t`.
pub fn information_demand_numeric(inputs: &DemandInputs) -> f64 {
    let f = |u: f64| inputs.net_value(u.exp());
    let (mut a, mut b) = (-20.0f64, 60.0f64);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc > fd {
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
    (0.5 * (a + b)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u() -> GridDensity {
        GridDensity::uniform(64, 2.0).unwrap()
    }

    fn s() -> GridDensity {
        GridDensity::step(64, 2.0, 1.5, 0.5).unwrap()
    }

    #[test]
    fn ability_transform() {
        let flat = ability_to_density(&[3.0; 64], 2.5, 2.0).unwrap();
        assert!(flat.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        let phi: Vec<f64> = s().values().to_vec();
        assert_eq!(ability_to_density(&phi, 2.0, 2.0).unwrap(), s());
        let scaled: Vec<f64> = phi.iter().map(|v| v * 7.0).collect();
        let a = ability_to_density(&scaled, 3.0, 5.0).unwrap();
        let b = ability_to_density(&phi, 3.0, 5.0).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(ability_to_density(&phi, 3.0, 2.0).is_err());
        assert!(ability_to_density(&[0.0, 1.0], 2.0, 2.0).is_err());
        assert!(ability_to_density(&phi, 1.0, 2.0).is_err());
    }

    #[test]
    fn payoff_examples() {
        assert!((ces_payoff(&s(), &s(), 0.4).unwrap() - 1.0).abs() < 1e-14);
        let v = ces_payoff(&u(), &s(), 0.5).unwrap();
        let closed = (1.5f64.sqrt() / 2.0 + 0.5f64.sqrt() / 2.0).powi(2);
        assert!((v - closed).abs() < 1e-14 && (v - 0.9330128).abs() < 1e-7);
        assert!((0.8637034..=0.9659259).contains(&v));
        assert!(ces_payoff(&u(), &s(), 0.3).is_err());
        assert!(ces_payoff(&u(), &s(), 1.0).is_err());
    }

    #[test]
    fn exploration_examples() {
        let e = optimal_exploration_set(&u(), 0.25).unwrap();
        assert_eq!(e.cells, (0..16).collect::<Vec<_>>());
        assert!((e.value - 1.0).abs() < 1e-15);
        let e = optimal_exploration_set(&s(), 0.25).unwrap();
        assert_eq!(e.cells, (0..16).collect::<Vec<_>>());
        assert_eq!(e.value, 1.5);
        assert!(optimal_exploration_set(&u(), 0.3).is_err());
        assert!(optimal_exploration_set(&u(), 0.0).is_err());
        assert!(ExplorationProblem::new(u(), 1.0).is_err());
    }

    #[test]
    fn exploration_targets() {
        let lip = HolderSpec::new(1.0, 0, 1.0, 2.0).unwrap();
        assert!((exploration_target(&lip) + 1.0 / 6.0).abs() < 1e-15);
        let smooth = HolderSpec::new(1.0, 1, 1.0, 2.0).unwrap();
        assert!((exploration_target(&smooth) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn demand_examples() {
        let d = DemandInputs::new(1.0, 1.0, 0.01).unwrap();
        // (200/3)^(3/8)
        assert!((information_demand(&d) - 4.830207387942802).abs() < 1e-12);
        let cheaper = DemandInputs::new(1.0, 1.0, 0.005).unwrap();
        assert!(information_demand(&cheaper) > information_demand(&d));
        assert!((demand_exponent(1e6) - 1.0 / 3.0).abs() < 1e-6);
        assert!(DemandInputs::new(1.0, 0.0, 0.01).is_err());
    }

    #[test]
    fn numeric_demand_solves_first_order_condition() {
        let d = DemandInputs::new(1.0, 1.0, 1e-3).unwrap();
        let t = information_demand_numeric(&d);
        let a = 2.0 / 3.0;
        let foc = (a * d.k / d.pi).powf(1.0 / (1.0 + a));
        assert!((t / foc - 1.0).abs() < 1e-6, "{t} vs {foc}");
    }
}
