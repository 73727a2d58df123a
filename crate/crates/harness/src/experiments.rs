//! Dispatch from a validated config to the library.

use learning_efficiency::applications::{
    allocation_regret_curve, exploration_regret_curve, information_demand, information_demand_numeric, DemandInputs,
};
use learning_efficiency::finite_state::{minimax_cost_curve, pairwise_exponent_matrix, FiniteExperiment};
use learning_efficiency::grid_density::divergence_report;
use learning_efficiency::holder_class::sample_member;
use learning_efficiency::metric_entropy::{entropy_curve, sample_cloud, Metric};
use learning_efficiency::minimax_estimator::{build_net, lemma1_check, risk_curve};
use learning_efficiency::seeding::{derive_seed, TAG_CLOUD, TAG_REPLICATION};
use learning_efficiency::{RateCurve, RiskSettings};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Demand, DivergenceSuite, Entropy, Experiment, FiniteRate, Lemma1, RateParams};
use crate::error::{HarnessError, Result};

const TAG_PAIRS: u64 = 0xD1F;

/// Pass/fail outcome of one acceptance check.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(criterion: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            criterion: criterion.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything an experiment produces before it is written to disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// `(file name, CSV text)` in write order.
    pub files: Vec<(String, String)>,
    pub summary: serde_json::Value,
    pub verdicts: Vec<Verdict>,
}

fn sci(v: f64) -> String {
    format!("{v:.10e}")
}

pub fn execute(experiment: &Experiment, seed: u64) -> Result<Outcome> {
    match experiment {
        Experiment::DivergenceSuite(p) => divergence_suite(p, seed),
        Experiment::Entropy(p) => entropy(p, seed),
        Experiment::FiniteRate(p) => finite_rate(p, seed),
        Experiment::Lemma1(p) => lemma1(p, seed),
        Experiment::MinimaxRate(p) => rate(p, seed, "minimax-rate"),
        Experiment::Allocate(p) => rate(p, seed, "allocate"),
        Experiment::Explore(p) => rate(p, seed, "explore"),
        Experiment::Demand(p) => demand(p),
    }
}

fn divergence_suite(p: &DivergenceSuite, seed: u64) -> Result<Outcome> {
    let ctx = "divergence-suite";
    let reports = (0..p.pairs as u64)
        .into_par_iter()
        .map(|i| {
            let a = sample_member(&p.spec, derive_seed(seed, &[TAG_PAIRS, 2 * i]), p.m)?;
            let b = sample_member(&p.spec, derive_seed(seed, &[TAG_PAIRS, 2 * i + 1]), p.m)?;
            divergence_report(&a, &b, &p.renyi_orders)
        })
        .collect::<learning_efficiency::Result<Vec<_>>>()
        .map_err(HarnessError::experiment(ctx))?;

    let bound = p.spec.bound;
    let mut csv = String::from("pair,kl_nats,hellinger_sq,l1,l2,linf");
    for s in &p.renyi_orders {
        csv.push_str(&format!(",renyi_{s}_nats"));
    }
    csv.push('\n');
    let mut violations = 0;
    let mut worst_rel = 0.0f64;
    for (i, r) in reports.iter().enumerate() {
        csv.push_str(&format!("{i},{},{},{},{},{}", sci(r.kl), sci(r.hellinger_sq), sci(r.l1), sci(r.l2), sci(r.linf)));
        for (_, d) in &r.renyi {
            csv.push_str(&format!(",{}", sci(*d)));
        }
        csv.push('\n');
        let (k, h2, l1, l2) = (r.kl, r.hellinger_sq, r.l1, r.l2);
        let ok = h2 <= k
            && k <= 2.0 * bound * bound * h2
            && 2.0 * h2.sqrt() >= l1
            && l2 * l2 / (4.0 * bound) <= k
            && k <= bound * l2 * l2;
        violations += usize::from(!ok);
        if let Some((_, d)) = r.renyi.iter().find(|(s, _)| *s == 0.5) {
            let closed = -2.0 * (1.0 - h2 / 2.0).ln();
            worst_rel = worst_rel.max((d - closed).abs() / closed.abs().max(f64::MIN_POSITIVE));
        }
    }
    let mut verdicts = vec![Verdict::new(
        "divergence inequalities",
        violations == 0,
        format!("{violations} of {} pairs violate an inequality", p.pairs),
    )];
    if p.renyi_orders.contains(&0.5) {
        verdicts.push(Verdict::new(
            "renyi order 1/2 closed form",
            worst_rel <= 1e-9,
            format!("worst relative error {worst_rel:.3e}"),
        ));
    }
    Ok(Outcome {
        files: vec![("divergences.csv".into(), csv)],
        summary: json!({ "pairs": p.pairs, "violations": violations, "worst_renyi_half_relative_error": worst_rel }),
        verdicts,
    })
}

fn entropy(p: &Entropy, seed: u64) -> Result<Outcome> {
    let curve = entropy_curve(&p.spec, p.metric, &p.epsilons, p.sample_size, p.m, seed)
        .map_err(HarnessError::experiment("entropy"))?;
    let mut verdicts = vec![Verdict::new(
        "entropy fit",
        !curve.fit_failed,
        format!("{} usable radii", curve.fit_points),
    )];
    if let Some([lo, hi]) = p.exponent_band {
        let pass = curve.fitted_exponent.is_some_and(|e| (lo..=hi).contains(&e));
        verdicts.push(Verdict::new(
            "entropy exponent in band",
            pass,
            format!("fitted {:?} against [{lo}, {hi}], theory {}", curve.fitted_exponent, 1.0 / p.spec.r()),
        ));
    }
    Ok(Outcome {
        files: vec![("entropy.csv".into(), curve.to_csv())],
        summary: curve.summary_json(),
        verdicts,
    })
}

fn finite_rate(p: &FiniteRate, seed: u64) -> Result<Outcome> {
    let ctx = "finite-rate";
    let states = p.densities().map_err(HarnessError::experiment(ctx))?;
    let exp = FiniteExperiment::new(states).map_err(HarnessError::experiment(ctx))?;
    let matrix = pairwise_exponent_matrix(&exp).map_err(HarnessError::experiment(ctx))?;
    let curve = minimax_cost_curve(&exp, &p.t_list, p.reps, seed).map_err(HarnessError::experiment(ctx))?;
    let mut exponents = String::from("i,j,lambda\n");
    for (i, row) in matrix.lambda.iter().enumerate() {
        for (j, l) in row.iter().enumerate() {
            exponents.push_str(&format!("{i},{j},{}\n", sci(*l)));
        }
    }
    let lambda_star = matrix.lambda_star;
    let verdict = match curve.fitted_lambda {
        Some(fit) => {
            let rel = (fit - lambda_star).abs() / lambda_star.abs();
            Verdict::new(
                "exponential rate matches lambda*",
                rel <= p.tolerance,
                format!("fitted {fit:.5} vs {lambda_star:.5}, relative error {rel:.3} (tolerance {})", p.tolerance),
            )
        }
        None => Verdict::new("exponential rate matches lambda*", false, "fit failed"),
    };
    let mut summary = curve.summary_json();
    summary["lambda_star"] = json!(lambda_star);
    Ok(Outcome {
        files: vec![("cost.csv".into(), curve.to_csv()), ("exponents.csv".into(), exponents)],
        summary,
        verdicts: vec![verdict],
    })
}

fn lemma1(p: &Lemma1, seed: u64) -> Result<Outcome> {
    let ctx = "lemma1";
    let mut csv = String::from("epsilon,t,centers,mean_log_ratio_nats,stderr,bound_nats\n");
    let mut rows = Vec::new();
    let mut all_hold = true;
    for (ei, &eps) in p.epsilons.iter().enumerate() {
        let net = build_net(&p.spec, eps, p.cloud_size, p.m, seed).map_err(HarnessError::experiment(ctx))?;
        let cloud = sample_cloud(&p.spec, Metric::SqrtKl, p.cloud_size, p.m, seed, TAG_CLOUD)
            .map_err(HarnessError::experiment(ctx))?;
        let gaps = cloud
            .elements()
            .iter()
            .map(|e| net.nearest_divergence(e))
            .collect::<learning_efficiency::Result<Vec<f64>>>()
            .map_err(HarnessError::experiment(ctx))?;
        // the worst-covered cloud member plays the true density
        let worst = (0..gaps.len()).fold(0, |best, i| if gaps[i] > gaps[best] { i } else { best });
        let p_true = &cloud.elements()[worst];
        for &t in &p.t_list {
            let rep_seed = derive_seed(seed, &[TAG_REPLICATION, ei as u64, t as u64]);
            let r = lemma1_check(&net, p_true, t, p.reps, rep_seed).map_err(HarnessError::experiment(ctx))?;
            all_hold &= r.holds;
            csv.push_str(&format!(
                "{eps},{t},{},{},{},{}\n",
                net.len(),
                sci(r.mean_log_ratio),
                sci(r.stderr),
                sci(r.bound)
            ));
            rows.push(json!({ "epsilon": eps, "t": t, "centers": net.len(), "report": r }));
        }
    }
    Ok(Outcome {
        files: vec![("lemma1.csv".into(), csv)],
        summary: json!({ "configurations": rows }),
        verdicts: vec![Verdict::new(
            "log-ratio within log N + t eps^2 + 3 sigma",
            all_hold,
            format!("{} configurations", rows.len()),
        )],
    })
}

fn points_csv(curve: &RateCurve) -> String {
    let mut out = String::from("t,epsilon,centers,risk,stderr,bound,worst_member,violations\n");
    for p in &curve.points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.t,
            sci(p.epsilon),
            p.centers,
            sci(p.risk),
            sci(p.stderr),
            sci(p.bound),
            p.worst_member,
            p.violations
        ));
    }
    out
}

fn rate(p: &RateParams, seed: u64, kind: &str) -> Result<Outcome> {
    let settings = RiskSettings {
        cloud_size: p.cloud_size,
        pool_size: p.pool_size,
        reps: p.reps,
        m: p.m,
        seed,
        entropy_eps: p.entropy_eps.clone(),
    };
    let curve = match kind {
        "allocate" => allocation_regret_curve(&p.spec, p.beta.unwrap_or(0.5), p.schedule, &p.t_list, &settings),
        "explore" => exploration_regret_curve(&p.spec, p.d.unwrap_or(0.25), p.schedule, &p.t_list, &settings),
        _ => risk_curve(&p.spec, p.schedule, &p.t_list, &settings),
    }
    .map_err(HarnessError::experiment(kind.to_string()))?;

    let mut verdicts = Vec::new();
    if kind == "minimax-rate" {
        let over: Vec<usize> = curve.points.iter().filter(|q| !q.within_bound()).map(|q| q.t).collect();
        verdicts.push(Verdict::new(
            "risk within eps^2 + log N / t + 3 sigma",
            over.is_empty(),
            format!("t above the bound: {over:?}"),
        ));
    } else {
        let broken: usize = curve.points.iter().map(|q| q.violations).sum();
        verdicts.push(Verdict::new(
            "per-draw regret inequality",
            broken == 0,
            format!("{broken} draws out of range"),
        ));
    }
    if let Some([lo, hi]) = p.slope_band {
        let pass = curve.fitted_slope.is_some_and(|s| (lo..=hi).contains(&s));
        verdicts.push(Verdict::new(
            "fitted slope in band",
            pass,
            format!("fitted {:?} against [{lo}, {hi}], target {:.4}", curve.fitted_slope, curve.target_slope),
        ));
    }
    let mut summary = curve.summary_json();
    summary["r"] = json!(p.spec.r());
    Ok(Outcome {
        files: vec![("rate.csv".into(), curve.to_csv()), ("points.csv".into(), points_csv(&curve))],
        summary,
        verdicts,
    })
}

fn demand(p: &Demand) -> Result<Outcome> {
    let inputs = |pi: f64| DemandInputs::new(p.r, p.k, pi).map_err(HarnessError::experiment("demand"));
    let base = inputs(p.price)?;
    let t_star = information_demand(&base);
    let t_numeric = information_demand_numeric(&base);
    let mut prices = vec![p.price];
    prices.extend(&p.prices);
    prices.sort_by(f64::total_cmp);
    prices.dedup();
    let mut csv = String::from("price,t_star,t_numeric\n");
    let mut schedule = Vec::with_capacity(prices.len());
    for &pi in &prices {
        let i = inputs(pi)?;
        let t = information_demand(&i);
        csv.push_str(&format!("{},{},{}\n", sci(pi), sci(t), sci(information_demand_numeric(&i))));
        schedule.push(t);
    }
    let decreasing = schedule.windows(2).all(|w| w[1] < w[0]);
    Ok(Outcome {
        files: vec![("demand.csv".into(), csv)],
        summary: json!({
            "r": p.r,
            "K": p.k,
            "price": p.price,
            "t_star": t_star,
            "t_numeric": t_numeric,
            "net_value_at_t_star": base.net_value(t_star),
            "net_value_at_t_numeric": base.net_value(t_numeric),
        }),
        verdicts: vec![Verdict::new(
            "demand strictly decreasing in price",
            decreasing,
            format!("{} prices", prices.len()),
        )],
    })
}
