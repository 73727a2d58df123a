//! Greedy packing and covering of finite density clouds and entropy curves.
//!
//! The square-root Kullback-Leibler "distance" is asymmetric. Throughout this
//! module an element `x` lies in the ball of a center `c` when
//! `sqrt(KL(x || c)) <= eps`, so a cover of a family controls the divergence
//! from any family member to its nearest center.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{linear_fit, r_squared};
use crate::grid_density::{hellinger_sq_unchecked, kl_unchecked, lp_unchecked, GridDensity, LpOrder};
use crate::holder_class::{sample_member, HolderSpec};
use crate::seeding::{derive_seed, TAG_ENTROPY};

/// Smallest pack count entering the exponent fit.
pub const FIT_MIN_COUNT: usize = 10;
/// Pack counts at or above this fraction of the cloud size count as saturated.
pub const SATURATION_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    L2,
    Linf,
    #[serde(rename = "sqrtkl")]
    SqrtKl,
    Hellinger,
}

impl Metric {
    pub fn is_symmetric(self) -> bool {
        self != Metric::SqrtKl
    }

    /// Distance from `x` to `c`.
    pub fn distance(self, x: &GridDensity, c: &GridDensity) -> Result<f64> {
        x.check_grid(c)?;
        Ok(self.distance_unchecked(x, c))
    }

    pub(crate) fn distance_unchecked(self, x: &GridDensity, c: &GridDensity) -> f64 {
        match self {
            Metric::L1 => lp_unchecked(x, c, LpOrder::L1),
            Metric::L2 => lp_unchecked(x, c, LpOrder::L2),
            Metric::Linf => lp_unchecked(x, c, LpOrder::Linf),
            Metric::SqrtKl => kl_unchecked(x, c).sqrt(),
            Metric::Hellinger => hellinger_sq_unchecked(x, c).sqrt(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Metric::L1),
            "l2" => Ok(Metric::L2),
            "linf" => Ok(Metric::Linf),
            "sqrtkl" => Ok(Metric::SqrtKl),
            "hellinger" => Ok(Metric::Hellinger),
            other => Err(invalid("metric", format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointCloud {
    elements: Vec<GridDensity>,
    metric: Metric,
}

impl PointCloud {
    pub fn new(elements: Vec<GridDensity>, metric: Metric) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| invalid("elements", "cloud must be nonempty"))?;
        for e in &elements[1..] {
            first.check_grid(e)?;
        }
        Ok(Self { elements, metric })
    }

    pub fn elements(&self) -> &[GridDensity] {
        &self.elements
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn is_asymmetric(&self) -> bool {
        !self.metric.is_symmetric()
    }

    pub fn distance_matrix(&self) -> DistanceMatrix {
        let metric = self.metric;
        let e = &self.elements;
        DistanceMatrix::from_fn(e.len(), |i, j| metric.distance_unchecked(&e[i], &e[j]))
    }
}

/// Dense row-major matrix with `get(x, c)` the distance from `x` to `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Fills all entries in parallel; the result does not depend on the
    /// thread count.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, d) in row.iter_mut().enumerate() {
                *d = if i == j { 0.0 } else { f(i, j) };
            }
        });
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, x: usize, c: usize) -> f64 {
        self.data[x * self.n + c]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub count: usize,
    pub indices: Vec<usize>,
}

fn check_radius(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("must be positive and finite, got {eps}")))
    }
}

pub fn greedy_packing(cloud: &PointCloud, eps: f64) -> Result<Selection> {
    check_radius(eps)?;
    Ok(pack_matrix(&cloud.distance_matrix(), eps))
}

pub fn greedy_covering(cloud: &PointCloud, eps: f64) -> Result<Selection> {
    check_radius(eps)?;
    Ok(cover_matrix(&cloud.distance_matrix(), eps))
}

/// Index-order scan admitting every element farther than `eps` from all
/// admitted ones.
pub fn pack_matrix(dist: &DistanceMatrix, eps: f64) -> Selection {
    let mut indices: Vec<usize> = Vec::new();
    for x in 0..dist.len() {
        if indices.iter().all(|&a| dist.get(x, a) > eps) {
            indices.push(x);
        }
    }
    Selection {
        count: indices.len(),
        indices,
    }
}

/// Greedy set cover with centers drawn from the cloud. Ties go to the lowest
/// index. A maximal packing is itself a cover, so the packing is returned
/// instead whenever it is strictly smaller.
pub fn cover_matrix(dist: &DistanceMatrix, eps: f64) -> Selection {
    let greedy = greedy_set_cover(dist, eps);
    let packing = pack_matrix(dist, eps);
    if packing.count < greedy.count {
        packing
    } else {
        greedy
    }
}

fn greedy_set_cover(dist: &DistanceMatrix, eps: f64) -> Selection {
    let n = dist.len();
    let mut gain: Vec<usize> = (0..n)
        .map(|c| (0..n).filter(|&x| dist.get(x, c) <= eps).count())
        .collect();
    let mut covered = vec![false; n];
    let mut remaining = n;
    let mut indices = Vec::new();
    while remaining > 0 {
        let mut best = 0;
        for c in 1..n {
            if gain[c] > gain[best] {
                best = c;
            }
        }
        indices.push(best);
        for x in 0..n {
            if !covered[x] && dist.get(x, best) <= eps {
                covered[x] = true;
                remaining -= 1;
                for (c, g) in gain.iter_mut().enumerate() {
                    if dist.get(x, c) <= eps {
                        *g -= 1;
                    }
                }
            }
        }
    }
    Selection {
        count: indices.len(),
        indices,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub epsilon: f64,
    pub pack_count: usize,
    pub cover_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCurve {
    pub metric: Metric,
    pub sample_size: usize,
    pub points: Vec<EntropyPoint>,
    /// Slope of `log log pack` on `log(1/eps)`; `None` when the fit failed.
    pub fitted_exponent: Option<f64>,
    pub fit_r2: Option<f64>,
    pub fit_failed: bool,
    pub fit_points: usize,
}

impl EntropyCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,pack_count,cover_count\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.epsilon, p.pack_count, p.cover_count));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "metric": self.metric,
            "sample_size": self.sample_size,
            "fitted_exponent": self.fitted_exponent,
            "fit_r2": self.fit_r2,
            "fit_failed": self.fit_failed,
            "fit_points": self.fit_points,
        })
    }
}

fn check_radii(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(invalid("epsilon", "need at least one radius"));
    }
    for &e in eps {
        check_radius(e)?;
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("epsilon", "radii must be strictly decreasing"));
    }
    Ok(())
}

/// Draws `sample_size` members of the class in parallel, one derived seed
/// per member.
pub fn sample_cloud(
    spec: &HolderSpec,
    metric: Metric,
    sample_size: usize,
    m: usize,
    seed: u64,
    tag: u64,
) -> Result<PointCloud> {
    let elements = (0..sample_size as u64)
        .into_par_iter()
        .map(|i| sample_member(spec, derive_seed(seed, &[tag, i]), m))
        .collect::<Result<Vec<_>>>()?;
    PointCloud::new(elements, metric)
}

pub fn entropy_curve(
    spec: &HolderSpec,
    metric: Metric,
    eps: &[f64],
    sample_size: usize,
    m: usize,
    seed: u64,
) -> Result<EntropyCurve> {
    check_radii(eps)?;
    if sample_size < 100 {
        return Err(invalid("sample_size", format!("must be at least 100, got {sample_size}")));
    }
    let cloud = sample_cloud(spec, metric, sample_size, m, seed, TAG_ENTROPY)?;
    entropy_curve_for_cloud(&cloud, eps)
}

/// Entropy curve of an existing cloud.
pub fn entropy_curve_for_cloud(cloud: &PointCloud, eps: &[f64]) -> Result<EntropyCurve> {
    check_radii(eps)?;
    let dist = cloud.distance_matrix();
    let points: Vec<EntropyPoint> = eps
        .iter()
        .map(|&e| EntropyPoint {
            epsilon: e,
            pack_count: pack_matrix(&dist, e).count,
            cover_count: cover_matrix(&dist, e).count,
        })
        .collect();

    let saturation = SATURATION_FRACTION * cloud.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.pack_count >= FIT_MIN_COUNT && (p.pack_count as f64) < saturation)
        .map(|p| ((1.0 / p.epsilon).ln(), (p.pack_count as f64).ln().ln()))
        .unzip();
    let fit = if xs.len() >= 3 {
        linear_fit(&xs, &ys).ok()
    } else {
        None
    };
    Ok(EntropyCurve {
        metric: cloud.metric(),
        sample_size: cloud.len(),
        points,
        fitted_exponent: fit.map(|(s, _)| s),
        fit_r2: fit.map(|(s, b)| r_squared(&xs, &ys, s, b)),
        fit_failed: fit.is_none(),
        fit_points: xs.len(),
    })
}
