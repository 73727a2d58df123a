//! Uniform mixtures over epsilon-nets, the averaged predictive estimator,
//! the complexity/accuracy risk bounds and polynomial-rate experiments.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{fit_through_origin, linear_fit};
use crate::grid_density::{cell_index, hellinger_sq_unchecked, kl_unchecked, CellSampler, GridDensity};
use crate::holder_class::HolderSpec;
use crate::metric_entropy::{pack_matrix, sample_cloud, DistanceMatrix, Metric, PointCloud, SATURATION_FRACTION};
use crate::seeding::{task_rng, TAG_CLOUD, TAG_POOL, TAG_REPLICATION};

/// Allowed excess of `KL(p || center)` over `eps^2` when checking coverage.
pub const COVER_TOL: f64 = 1e-12;
/// Allowed departure of the averaged predictive density from unit mass.
pub const MASS_DRIFT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EpsilonNet {
    centers: Vec<GridDensity>,
    epsilon: f64,
    spec: Option<HolderSpec>,
    seed: Option<u64>,
}

impl EpsilonNet {
    /// Net made of the given centers; no separation is checked.
    pub fn from_centers(centers: Vec<GridDensity>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        PointCloud::new(centers.clone(), Metric::SqrtKl)?;
        Ok(Self {
            centers,
            epsilon,
            spec: None,
            seed: None,
        })
    }

    /// Greedy square-root KL packing of `cloud`, which by maximality covers it.
    pub fn from_cloud(cloud: &[GridDensity], epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let cloud = PointCloud::new(cloud.to_vec(), Metric::SqrtKl)?;
        let selection = pack_matrix(&cloud.distance_matrix(), epsilon);
        let centers = selection.indices.iter().map(|&i| cloud.elements()[i].clone()).collect();
        Ok(Self {
            centers,
            epsilon,
            spec: None,
            seed: None,
        })
    }

    pub fn centers(&self) -> &[GridDensity] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn spec(&self) -> Option<&HolderSpec> {
        self.spec.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Smallest `KL(p || c)` over the centers.
    pub fn nearest_divergence(&self, p: &GridDensity) -> Result<f64> {
        self.centers[0].check_grid(p)?;
        Ok(self
            .centers
            .iter()
            .map(|c| kl_unchecked(p, c))
            .fold(f64::INFINITY, f64::min))
    }

    pub fn covers(&self, p: &GridDensity) -> Result<bool> {
        Ok(self.nearest_divergence(p)? <= self.epsilon * self.epsilon + COVER_TOL)
    }

    fn m(&self) -> usize {
        self.centers[0].m()
    }

    fn log_tables(&self) -> Vec<&[f64]> {
        self.centers.iter().map(|c| c.log_values()).collect()
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("must be positive and finite, got {eps}")))
    }
}

pub fn build_net(spec: &HolderSpec, epsilon: f64, cloud_size: usize, m: usize, seed: u64) -> Result<EpsilonNet> {
    check_epsilon(epsilon)?;
    if cloud_size < 100 {
        return Err(invalid("cloud_size", format!("must be at least 100, got {cloud_size}")));
    }
    let cloud = sample_cloud(spec, Metric::SqrtKl, cloud_size, m, seed, TAG_CLOUD)?;
    let mut net = EpsilonNet::from_cloud(cloud.elements(), epsilon)?;
    net.spec = Some(*spec);
    net.seed = Some(seed);
    Ok(net)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn to_cells(sample: &[f64], m: usize) -> Result<Vec<usize>> {
    if sample.is_empty() {
        return Err(invalid("sample", "must be nonempty"));
    }
    if let Some(x) = sample.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(invalid("sample", format!("point {x} outside [0, 1]")));
    }
    Ok(sample.iter().map(|&x| cell_index(x, m)).collect())
}

/// `log q(X^t)` for the uniform mixture over the net.
pub fn mixture_log_marginal(net: &EpsilonNet, sample: &[f64]) -> Result<f64> {
    let cells = to_cells(sample, net.m())?;
    Ok(mixture_log_marginal_cells(net, &cells))
}

pub fn mixture_log_marginal_cells(net: &EpsilonNet, cells: &[usize]) -> f64 {
    let logs: Vec<f64> = net
        .log_tables()
        .iter()
        .map(|l| cells.iter().map(|&c| l[c]).sum())
        .collect();
    log_sum_exp(&logs) - (net.len() as f64).ln()
}

/// Averaged one-step predictive density `(1/t) Σ_{k<t} q(· | X^k)`.
pub fn cesaro_estimator(net: &EpsilonNet, sample: &[f64]) -> Result<GridDensity> {
    let cells = to_cells(sample, net.m())?;
    cesaro_estimator_cells(net, &cells)
}

pub fn cesaro_estimator_cells(net: &EpsilonNet, cells: &[usize]) -> Result<GridDensity> {
    let t = cells.len();
    if t == 0 {
        return Err(invalid("t", "need at least one observation"));
    }
    let n = net.len();
    let logs = net.log_tables();
    let mut log_w = vec![0.0; n];
    let mut avg = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for &c in cells {
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (s, lw) in scratch.iter_mut().zip(&log_w) {
            *s = (lw - max).exp();
            total += *s;
        }
        for (a, s) in avg.iter_mut().zip(&scratch) {
            *a += s / total;
        }
        for (lw, l) in log_w.iter_mut().zip(&logs) {
            *lw += l[c];
        }
    }
    let m = net.m();
    let mut values = vec![0.0; m];
    for (w, center) in avg.iter().zip(&net.centers) {
        let w = w / t as f64;
        for (v, p) in values.iter_mut().zip(center.values()) {
            *v += w * p;
        }
    }
    let mass = values.iter().sum::<f64>() / m as f64;
    if (mass - 1.0).abs() >= MASS_DRIFT_TOL {
        return Err(Error::Precondition(format!("predictive mass drifted to {mass}")));
    }
    GridDensity::new(values, net.centers[0].bound())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub mean_log_ratio: f64,
    pub stderr: f64,
    /// `log N + t eps^2`.
    pub bound: f64,
    pub holds: bool,
}

/// Monte Carlo estimate of `E log(p(X^t) / q(X^t))` under `p_true`.
pub fn lemma1_check(net: &EpsilonNet, p_true: &GridDensity, t: usize, reps: usize, seed: u64) -> Result<Lemma1Report> {
    if t == 0 || reps < 2 {
        return Err(invalid("reps", "need t >= 1 and at least two replications"));
    }
    let nearest = net.nearest_divergence(p_true)?;
    let eps2 = net.epsilon * net.epsilon;
    if nearest > eps2 + COVER_TOL {
        return Err(Error::Precondition(format!(
            "true density is not covered: nearest KL {nearest:.6} exceeds eps^2 = {eps2:.6}"
        )));
    }
    let sampler = CellSampler::new(p_true);
    let own = p_true.log_values();
    let ratios: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(seed, &[TAG_REPLICATION, t as u64, r]);
            let cells = sampler.sample_cells(&mut rng, t);
            let log_p: f64 = cells.iter().map(|&c| own[c]).sum();
            log_p - mixture_log_marginal_cells(net, &cells)
        })
        .collect();
    let (mean, stderr) = mean_stderr(&ratios);
    let bound = (net.len() as f64).ln() + t as f64 * eps2;
    Ok(Lemma1Report {
        mean_log_ratio: mean,
        stderr,
        bound,
        holds: mean <= bound + 3.0 * stderr,
    })
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Entropy constants with `log N(eps) ≈ G eps^{-1/r}`; the upper constant
/// feeds the upper bound, the lower one the denominator of the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub g_upper: f64,
    pub g_lower: f64,
    pub r: f64,
    #[serde(rename = "M")]
    pub bound: f64,
}

impl BoundInputs {
    pub fn new(g_upper: f64, g_lower: f64, r: f64, bound: f64) -> Result<Self> {
        let inputs = Self {
            g_upper,
            g_lower,
            r,
            bound,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn symmetric(g: f64, r: f64, bound: f64) -> Result<Self> {
        Self::new(g, g, r, bound)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("G", self.g_upper), ("G", self.g_lower), ("r", self.r)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.bound > 1.0) {
            return Err(invalid("M", format!("must exceed 1, got {}", self.bound)));
        }
        Ok(())
    }
}

/// `eps^2 + log N(eps) / t`.
pub fn upper_bound_value(eps: f64, t: f64, log_n: impl Fn(f64) -> f64) -> Result<f64> {
    check_epsilon(eps)?;
    if !(t >= 1.0) {
        return Err(invalid("t", format!("must be at least 1, got {t}")));
    }
    Ok(eps * eps + log_n(eps) / t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalBound {
    pub epsilon: f64,
    pub value: f64,
}

pub fn optimize_upper_bound(t: f64, inputs: &BoundInputs) -> Result<OptimalBound> {
    inputs.validate()?;
    if !(t >= 1.0) {
        return Err(invalid("t", format!("must be at least 1, got {t}")));
    }
    let r = inputs.r;
    let base = inputs.g_upper / (2.0 * r * t);
    Ok(OptimalBound {
        epsilon: base.powf(r / (2.0 * r + 1.0)),
        value: (2.0 * r + 1.0) * base.powf(2.0 * r / (1.0 + 2.0 * r)),
    })
}

/// `(xi^2/4) max(0, 1 − (G eps^{-1/r} + t eps^2 + ln 2) / (g (√2 M xi)^{-1/r}))`.
pub fn lower_bound_value(xi: f64, eps: f64, t: f64, inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    check_epsilon(eps)?;
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(invalid("xi", format!("must be positive and finite, got {xi}")));
    }
    let r = inputs.r;
    let denominator = inputs.g_lower * (2f64.sqrt() * inputs.bound * xi).powf(-1.0 / r);
    if !(denominator > 0.0 && denominator.is_finite()) {
        return Err(invalid("xi", format!("lower entropy proxy {denominator} is not positive")));
    }
    let numerator = inputs.g_upper * eps.powf(-1.0 / r) + t * eps * eps + 2f64.ln();
    Ok(xi * xi / 4.0 * (1.0 - numerator / denominator).max(0.0))
}

/// The `xi` whose lower-entropy proxy equals `2t` times the optimized upper
/// bound; at `eps = eps*` the bracket is then `1/2 − ln 2 / proxy`.
pub fn balanced_xi(t: f64, inputs: &BoundInputs) -> Result<f64> {
    let opt = optimize_upper_bound(t, inputs)?;
    let proxy = 2.0 * t * opt.value;
    Ok((inputs.g_lower / proxy).powf(inputs.r) / (2f64.sqrt() * inputs.bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSchedule {
    /// `eps*(t)` from [`optimize_upper_bound`] with an estimated entropy constant.
    Optimal,
    Fixed { epsilon: f64 },
    /// `scale * t^{-exponent}`.
    Power { scale: f64, exponent: f64 },
}

impl EpsilonSchedule {
    fn epsilon(&self, t: usize, g: Option<f64>, r: f64, bound: f64) -> Result<f64> {
        match *self {
            EpsilonSchedule::Optimal => {
                let g = g.ok_or_else(|| Error::FitFailure("no entropy constant".into()))?;
                Ok(optimize_upper_bound(t as f64, &BoundInputs::symmetric(g, r, bound)?)?.epsilon)
            }
            EpsilonSchedule::Fixed { epsilon } => Ok(epsilon),
            EpsilonSchedule::Power { scale, exponent } => Ok(scale * (t as f64).powf(-exponent)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSettings {
    pub cloud_size: usize,
    pub pool_size: usize,
    pub reps: usize,
    pub m: usize,
    pub seed: u64,
    /// Radii of the square-root KL entropy curve used to estimate `G`.
    pub entropy_eps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub t: usize,
    pub risk: f64,
    pub stderr: f64,
    pub epsilon: f64,
    pub centers: usize,
    /// `eps^2 + ln(centers) / t`.
    pub bound: f64,
    /// Pool index attaining the maximum.
    pub worst_member: usize,
    /// Draws breaking the loss-specific per-draw inequality.
    pub violations: usize,
}

impl RatePoint {
    pub fn within_bound(&self) -> bool {
        self.risk <= self.bound + 3.0 * self.stderr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<RatePoint>,
    pub fitted_slope: Option<f64>,
    pub target_slope: f64,
    pub g_estimate: Option<f64>,
    pub schedule: EpsilonSchedule,
}

impl RateCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,risk,stderr\n");
        for p in &self.points {
            out.push_str(&format!("{},{:.10e},{:.10e}\n", p.t, p.risk, p.stderr));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "fitted_slope": self.fitted_slope,
            "target_slope": self.target_slope,
            "G_estimate": self.g_estimate,
            "epsilon_schedule": self.schedule,
            "points": self.points,
        })
    }
}

pub fn target_slope(r: f64) -> f64 {
    -2.0 * r / (1.0 + 2.0 * r)
}

/// Through-origin fit of `ln pack(eps)` on `eps^{-1/r}` over unsaturated
/// radii with at least two packed points.
pub fn estimate_entropy_constant(dist: &DistanceMatrix, eps: &[f64], r: f64) -> Result<f64> {
    let saturation = SATURATION_FRACTION * dist.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .map(|&e| (e, pack_matrix(dist, e).count))
        .filter(|&(_, n)| n >= 2 && (n as f64) < saturation)
        .map(|(e, n)| (e.powf(-1.0 / r), (n as f64).ln()))
        .unzip();
    if xs.is_empty() {
        return Err(Error::FitFailure("no usable radius for the entropy constant".into()));
    }
    fit_through_origin(&xs, &ys)
}

/// Monte Carlo minimax risk of the averaged predictive estimator.
///
/// One cloud of class members and a separate adversary pool are drawn once.
/// For each `t` the union (cloud first) is packed at `eps(t)` in square-root
/// KL, so every pool member lies within `eps(t)` of a center. The risk at `t`
/// is the largest mean Hellinger loss over the pool.
pub fn risk_curve(
    spec: &HolderSpec,
    schedule: EpsilonSchedule,
    t_list: &[usize],
    settings: &RiskSettings,
) -> Result<RateCurve> {
    simulate_rate_curve(spec, schedule, t_list, settings, target_slope(spec.r()), |p, q| {
        (hellinger_sq_unchecked(p, q), false)
    })
}

/// Shared engine for risk and regret curves. `loss(p_true, estimate)`
/// returns the loss and whether the draw broke its per-draw inequality.
pub(crate) fn simulate_rate_curve(
    spec: &HolderSpec,
    schedule: EpsilonSchedule,
    t_list: &[usize],
    settings: &RiskSettings,
    target: f64,
    loss: impl Fn(&GridDensity, &GridDensity) -> (f64, bool) + Sync,
) -> Result<RateCurve> {
    if t_list.is_empty() || t_list[0] == 0 || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("t", "sample sizes must be positive and strictly increasing"));
    }
    if settings.pool_size < 20 {
        return Err(invalid("pool_size", format!("must be at least 20, got {}", settings.pool_size)));
    }
    if settings.reps < 2 {
        return Err(invalid("reps", "need at least two replications"));
    }
    let cloud = sample_cloud(spec, Metric::SqrtKl, settings.cloud_size, settings.m, settings.seed, TAG_CLOUD)?;
    let pool = sample_cloud(spec, Metric::SqrtKl, settings.pool_size, settings.m, settings.seed, TAG_POOL)?;
    let mut elements = cloud.elements().to_vec();
    elements.extend_from_slice(pool.elements());
    let union = PointCloud::new(elements, Metric::SqrtKl)?;
    let dist = union.distance_matrix();

    let r = spec.r();
    let g_estimate = match schedule {
        EpsilonSchedule::Optimal => Some(estimate_entropy_constant(&dist, &settings.entropy_eps, r)?),
        _ => None,
    };
    let samplers: Vec<CellSampler> = pool.elements().iter().map(CellSampler::new).collect();
    let mut points = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let eps = schedule.epsilon(t, g_estimate, r, spec.bound)?;
        check_epsilon(eps)?;
        let selection = pack_matrix(&dist, eps);
        let centers = selection.indices.iter().map(|&i| union.elements()[i].clone()).collect();
        let net = EpsilonNet::from_centers(centers, eps)?;
        let reps = settings.reps;
        let draws: Vec<(f64, bool)> = (0..(settings.pool_size * reps) as u64)
            .into_par_iter()
            .map(|job| {
                let (k, rep) = (job / reps as u64, job % reps as u64);
                let mut rng = task_rng(settings.seed, &[TAG_REPLICATION, t as u64, k, rep]);
                let cells = samplers[k as usize].sample_cells(&mut rng, t);
                let q = cesaro_estimator_cells(&net, &cells)?;
                Ok(loss(&pool.elements()[k as usize], &q))
            })
            .collect::<Result<_>>()?;
        let losses: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let mut point = RatePoint {
            t,
            risk: f64::NEG_INFINITY,
            stderr: 0.0,
            epsilon: eps,
            centers: net.len(),
            bound: eps * eps + (net.len() as f64).ln() / t as f64,
            worst_member: 0,
            violations: draws.iter().filter(|d| d.1).count(),
        };
        for (k, chunk) in losses.chunks(reps).enumerate() {
            let (mean, stderr) = mean_stderr(chunk);
            if mean > point.risk {
                point.risk = mean;
                point.stderr = stderr;
                point.worst_member = k;
            }
        }
        points.push(point);
    }
    let mut curve = RateCurve {
        points,
        fitted_slope: None,
        target_slope: target,
        g_estimate,
        schedule,
    };
    curve.fitted_slope = fit_polynomial_rate(&curve).ok();
    Ok(curve)
}

/// Slope of `ln risk` on `ln t`.
pub fn fit_polynomial_rate(curve: &RateCurve) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve
        .points
        .iter()
        .filter(|p| p.risk > 0.0)
        .map(|p| ((p.t as f64).ln(), p.risk.ln()))
        .unzip();
    if xs.len() < 4 {
        return Err(Error::FitFailure(format!("need 4 positive risk points, got {}", xs.len())));
    }
    Ok(linear_fit(&xs, &ys)?.0)
}

/// Draws `t` sample points from `p`.
pub fn sample_points<R: Rng + ?Sized>(p: &GridDensity, rng: &mut R, t: usize) -> Vec<f64> {
    let sampler = CellSampler::new(p);
    (0..t).map(|_| sampler.sample_point(rng)).collect()
}
