//! Hölder smoothness classes of bounded densities: membership probing on the
//! grid, a seeded sampler, and the sup/integral gap inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid_density::{lp_unchecked, GridDensity, LpOrder};

/// Relative slack on Hölder ratios and derivative bounds.
pub const GRID_SLACK: f64 = 0.05;

/// Lower-side slack applied when asserting the sup/integral inequality.
pub const SUP_INTEGRAL_SLACK: f64 = 0.95;

const SAMPLER_TARGET: f64 = 0.9;
const SAMPLER_SHRINK: f64 = 0.8;
const SAMPLER_ATTEMPTS: usize = 50;
const MAX_KINKS: usize = 16;

/// Class parameters: `n`-th derivative `alpha`-Hölder with constant `lambda`,
/// values in `[1/M, M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderSpec {
    pub alpha: f64,
    pub n: u32,
    pub lambda: f64,
    #[serde(rename = "M")]
    pub bound: f64,
}

impl HolderSpec {
    pub fn new(alpha: f64, n: u32, lambda: f64, bound: f64) -> Result<Self> {
        let spec = Self {
            alpha,
            n,
            lambda,
            bound,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.bound > 1.0) || !self.bound.is_finite() {
            return Err(invalid("M", format!("must be finite and > 1, got {}", self.bound)));
        }
        Ok(())
    }

    /// Smoothness index `r = alpha + n`.
    pub fn r(&self) -> f64 {
        self.alpha + self.n as f64
    }

    /// Hölder exponent used by the sup/integral inequality; classes with
    /// `n >= 1` are Lipschitz, so the exponent drops to one.
    pub fn effective_alpha(&self) -> f64 {
        if self.n >= 1 {
            1.0
        } else {
            self.alpha
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub is_member: bool,
    /// Largest `|d_i − d_j| / (|i − j|/m)^alpha` over the n-th difference sequence.
    pub worst_holder_ratio: f64,
    pub holder_pair: Option<(usize, usize)>,
    /// Largest distance of a cell value outside `[1/M, M]` (zero when inside).
    pub worst_bound_violation: f64,
    pub bound_cell: Option<usize>,
    /// Largest absolute derivative of orders `1..=n` (zero when `n = 0`).
    pub worst_derivative: f64,
}

struct Roughness {
    holder_ratio: f64,
    pair: Option<(usize, usize)>,
    derivative: f64,
}

fn roughness(values: &[f64], alpha: f64, n: u32) -> Roughness {
    let m = values.len() as f64;
    let mut derivative = 0.0f64;
    let mut d = values.to_vec();
    for _ in 0..n {
        d = d.windows(2).map(|w| (w[1] - w[0]) * m).collect();
        derivative = d.iter().fold(derivative, |acc, v| acc.max(v.abs()));
    }
    // precompute (k/m)^-alpha for every lag
    let inv_scale: Vec<f64> = (0..d.len())
        .map(|k| if k == 0 { 0.0 } else { (k as f64 / m).powf(-alpha) })
        .collect();
    let mut holder_ratio = 0.0;
    let mut pair = None;
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            let ratio = (d[i] - d[j]).abs() * inv_scale[j - i];
            if ratio > holder_ratio {
                holder_ratio = ratio;
                pair = Some((i, j));
            }
        }
    }
    Roughness {
        holder_ratio,
        pair,
        derivative,
    }
}

pub fn is_member(f: &GridDensity, spec: &HolderSpec) -> Result<MembershipReport> {
    spec.validate()?;
    let m = f.m();
    if m < spec.n as usize + 2 {
        return Err(invalid(
            "m",
            format!("{m} cells cannot carry differences of order {}", spec.n),
        ));
    }
    let lo = 1.0 / spec.bound;
    let mut worst_bound_violation = 0.0;
    let mut bound_cell = None;
    for (i, &v) in f.values().iter().enumerate() {
        let gap = (lo - v).max(v - spec.bound);
        if gap > worst_bound_violation {
            worst_bound_violation = gap;
            bound_cell = Some(i);
        }
    }
    let r = roughness(f.values(), spec.alpha, spec.n);
    let limit = spec.lambda * (1.0 + GRID_SLACK);
    let is_member =
        bound_cell.is_none() && r.holder_ratio <= limit && r.derivative <= limit;
    Ok(MembershipReport {
        is_member,
        worst_holder_ratio: r.holder_ratio,
        holder_pair: r.pair,
        worst_bound_violation,
        bound_cell,
        worst_derivative: r.derivative,
    })
}

/// Smooth cell profile whose `n`-th derivative looks like a Hölder zigzag:
/// a random ±1-slope sawtooth with one to [`MAX_KINKS`] switch points, bent
/// through `|·|^alpha`, integrated `n` times, then projected onto
/// `cos(πkx)`, `k = 1..=m/2`, with Lanczos smoothing of the coefficients.
fn random_profile<R: Rng>(rng: &mut R, spec: &HolderSpec, m: usize) -> Vec<f64> {
    let fine = (16 * m).max(1024);
    let h = 1.0 / fine as f64;
    let kinks = rng.gen_range(1..=MAX_KINKS);
    let mut switches: Vec<f64> = (0..kinks).map(|_| rng.gen::<f64>()).collect();
    switches.sort_by(f64::total_cmp);
    let start = if rng.gen::<bool>() { 1.0 } else { -1.0 };

    let xs: Vec<f64> = (0..fine).map(|i| (i as f64 + 0.5) * h).collect();
    let mut acc = 0.0;
    let mut profile: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let flips = switches.partition_point(|&s| s < x);
            acc += if flips % 2 == 0 { start } else { -start } * h;
            acc
        })
        .collect();
    center(&mut profile);
    if spec.alpha < 1.0 {
        for v in &mut profile {
            *v = v.signum() * v.abs().powf(spec.alpha);
        }
        center(&mut profile);
    }
    for _ in 0..spec.n {
        let mut acc = 0.0;
        for v in &mut profile {
            acc += *v * h;
            *v = acc;
        }
        center(&mut profile);
    }

    let terms = m / 2;
    let mut coeffs = vec![0.0; terms];
    for (x, g) in xs.iter().zip(&profile) {
        chebyshev_cosines(x, terms, |k, c| coeffs[k - 1] += g * c);
    }
    for (k, a) in coeffs.iter_mut().enumerate() {
        let s = (k + 1) as f64 / (terms + 1) as f64;
        let lanczos = (std::f64::consts::PI * s).sin() / (std::f64::consts::PI * s);
        *a *= 2.0 * h * lanczos;
    }
    (0..m)
        .map(|i| {
            let x = (i as f64 + 0.5) / m as f64;
            let mut s = 0.0;
            chebyshev_cosines(&x, terms, |k, c| s += coeffs[k - 1] * c);
            s
        })
        .collect()
}

/// Calls `visit(k, cos(πkx))` for `k = 1..=terms` via the three-term recurrence.
fn chebyshev_cosines(x: &f64, terms: usize, mut visit: impl FnMut(usize, f64)) {
    let c1 = (std::f64::consts::PI * x).cos();
    let (mut prev, mut cur) = (1.0, c1);
    for k in 1..=terms {
        visit(k, cur);
        let next = 2.0 * c1 * cur - prev;
        prev = cur;
        cur = next;
    }
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Draws a random member of the class on an `m`-cell grid.
///
/// The draw is a truncated cosine series `1 + Σ a_k cos(πkx)` scaled so its
/// grid Hölder constant is `0.9·lambda`, clipped to `[1/M, M]`,
/// renormalized, and checked with [`is_member`]. Failed checks shrink the
/// perturbation by 0.8 and retry.
pub fn sample_member(spec: &HolderSpec, seed: u64, m: usize) -> Result<GridDensity> {
    spec.validate()?;
    if m < spec.n as usize + 2 {
        return Err(invalid(
            "m",
            format!("{m} cells cannot carry differences of order {}", spec.n),
        ));
    }
    if spec.lambda == 0.0 {
        return GridDensity::uniform(m, spec.bound);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = random_profile(&mut rng, spec, m);
    let rough = roughness(&shape, spec.alpha, spec.n);
    let scale = rough.holder_ratio.max(rough.derivative);
    let mut amplitude = if scale > 0.0 {
        SAMPLER_TARGET * spec.lambda / scale
    } else {
        0.0
    };
    let lo = 1.0 / spec.bound;
    let mut last_reason = String::new();
    for _ in 0..SAMPLER_ATTEMPTS {
        let values: Vec<f64> = shape
            .iter()
            .map(|s| (1.0 + amplitude * s).clamp(lo, spec.bound))
            .collect();
        match GridDensity::new(values, spec.bound) {
            Ok(d) => {
                let report = is_member(&d, spec)?;
                if report.is_member {
                    return Ok(d);
                }
                last_reason = format!(
                    "holder ratio {:.4}, derivative {:.4} vs lambda {}",
                    report.worst_holder_ratio, report.worst_derivative, spec.lambda
                );
            }
            Err(e) => last_reason = e.to_string(),
        }
        amplitude *= SAMPLER_SHRINK;
    }
    Err(Error::GenerationFailure {
        attempts: SAMPLER_ATTEMPTS,
        reason: last_reason,
    })
}

/// `(‖f − g‖₁, α(2λ)^{−1/α}/(α+1) · ‖f − g‖∞^{(1+α)/α})` with the effective
/// exponent of the class.
pub fn holder_sup_integral_gap(
    f: &GridDensity,
    g: &GridDensity,
    spec: &HolderSpec,
) -> Result<(f64, f64)> {
    f.check_grid(g)?;
    for (name, d) in [("f", f), ("g", g)] {
        if !is_member(d, spec)?.is_member {
            return Err(Error::Precondition(format!("{name} is not a member of the class")));
        }
    }
    let lhs = lp_unchecked(f, g, LpOrder::L1);
    let sup = lp_unchecked(f, g, LpOrder::Linf);
    if sup == 0.0 {
        return Ok((lhs, 0.0));
    }
    let a = spec.effective_alpha();
    let rhs = a * (2.0 * spec.lambda).powf(-1.0 / a) / (a + 1.0) * sup.powf((1.0 + a) / a);
    Ok((lhs, rhs))
}
