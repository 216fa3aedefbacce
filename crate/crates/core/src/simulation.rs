//! Replication harness: seeded samples, contamination, the estimator
//! battery and total-variation error.

use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform, Weibull};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::estimators::{default_inner_config, ObjectiveChoice};
use crate::models::{MixtureModel, ParamVector, Provenance, Sample};
use crate::optimizer::NelderMeadConfig;
use crate::proximal::{run, LikelihoodGate, ProximalConfig};
use crate::quadrature::{integrate, QuadratureConfig};

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`. Stable across versions.
pub fn child_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index))
}

/// Shifts the 5 smallest observations by U[−5, −2] draws and the 5 largest
/// by U[2, 5] draws, pushing them further into the tails.
pub fn contaminate_gaussian<R: Rng + ?Sized>(sample: &Sample, rng: &mut R) -> Result<Sample> {
    extremes(sample, rng, |y, d| y + d)
}

/// Replaces the 5 smallest observations by U[−5, −2] draws and the 5
/// largest by U[2, 5] draws.
pub fn contaminate_gaussian_replace<R: Rng + ?Sized>(sample: &Sample, rng: &mut R) -> Result<Sample> {
    extremes(sample, rng, |_, d| d)
}

fn extremes<R: Rng + ?Sized>(sample: &Sample, rng: &mut R, put: impl Fn(f64, f64) -> f64) -> Result<Sample> {
    let n = sample.len();
    if n < 10 {
        return Err(Error::SampleTooSmall { required: 10, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sample.values[a].total_cmp(&sample.values[b]).then(a.cmp(&b)));
    let low = Uniform::new_inclusive(-5.0, -2.0).expect("valid range");
    let high = Uniform::new_inclusive(2.0, 5.0).expect("valid range");
    let mut values = sample.values.clone();
    for &i in &order[..5] {
        values[i] = put(values[i], low.sample(rng));
    }
    for &i in &order[n - 5..] {
        values[i] = put(values[i], high.sample(rng));
    }
    Sample::new(values, Provenance::Contaminated)
}

/// Replaces 10 observations at uniformly chosen positions by draws from a
/// Weibull with shape 0.9 and scale 3.
pub fn contaminate_weibull<R: Rng + ?Sized>(sample: &Sample, rng: &mut R) -> Result<Sample> {
    let n = sample.len();
    if n < 10 {
        return Err(Error::SampleTooSmall { required: 10, got: n });
    }
    let outlier = Weibull::new(3.0, 0.9).expect("valid parameters");
    let mut values = sample.values.clone();
    for i in index::sample(rng, n, 10).into_vec() {
        values[i] = outlier.sample(rng);
    }
    Sample::new(values, Provenance::Contaminated)
}

/// ½∫|p_a − p_b|.
pub fn tvd(model: &MixtureModel, a: &ParamVector, b: &ParamVector, quadrature: &QuadratureConfig) -> Result<f64> {
    model.validate(a)?;
    model.validate(b)?;
    let domain = model.integration_domain(&[a, b], quadrature.radius, &[]);
    let r = integrate(
        |y| (model.log_density(a, y).exp() - model.log_density(b, y).exp()).abs(),
        &domain,
        quadrature,
    )?;
    Ok((0.5 * r.value).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Contamination {
    #[default]
    None,
    Gaussian,
    GaussianReplace,
    Weibull,
}

impl Contamination {
    pub fn apply<R: Rng + ?Sized>(&self, sample: Sample, rng: &mut R) -> Result<Sample> {
        match self {
            Contamination::None => Ok(sample),
            Contamination::Gaussian => contaminate_gaussian(&sample, rng),
            Contamination::GaussianReplace => contaminate_gaussian_replace(&sample, rng),
            Contamination::Weibull => contaminate_weibull(&sample, rng),
        }
    }
}

impl fmt::Display for Contamination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Contamination::None => "none",
            Contamination::Gaussian => "gaussian",
            Contamination::GaussianReplace => "gaussian-replace",
            Contamination::Weibull => "weibull",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    ClassicalDual {
        #[serde(default)]
        divergence: DivergenceSpec,
        #[serde(default)]
        proximal: Option<ProximalConfig>,
    },
    KernelDual {
        #[serde(default)]
        divergence: DivergenceSpec,
        #[serde(default)]
        bandwidth: Option<f64>,
        #[serde(default)]
        proximal: Option<ProximalConfig>,
    },
    Mdpd {
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default)]
        proximal: Option<ProximalConfig>,
    },
    Em,
}

fn default_a() -> f64 {
    0.5
}

impl EstimatorSpec {
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::ClassicalDual { divergence, .. } => format!("classical-dual({divergence})"),
            EstimatorSpec::KernelDual { divergence, .. } => format!("kernel-dual({divergence})"),
            EstimatorSpec::Mdpd { a, .. } => format!("mdpd(a={a})"),
            EstimatorSpec::Em => "em".into(),
        }
    }

    /// The proximal objective, if this estimator uses one.
    pub fn objective(&self) -> Option<ObjectiveChoice> {
        match *self {
            EstimatorSpec::ClassicalDual { divergence, .. } => Some(ObjectiveChoice::ClassicalDual { divergence }),
            EstimatorSpec::KernelDual { divergence, bandwidth, .. } => Some(ObjectiveChoice::KernelDual { divergence, bandwidth }),
            EstimatorSpec::Mdpd { a, .. } => Some(ObjectiveChoice::Mdpd { a }),
            EstimatorSpec::Em => None,
        }
    }

    fn proximal_override(&self) -> Option<ProximalConfig> {
        match *self {
            EstimatorSpec::ClassicalDual { proximal, .. }
            | EstimatorSpec::KernelDual { proximal, .. }
            | EstimatorSpec::Mdpd { proximal, .. } => proximal,
            EstimatorSpec::Em => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Random starts redrawn until the likelihood gate accepts them.
    Random {
        #[serde(default = "default_draws")]
        max_draws: usize,
    },
    Fixed { start: ParamVector },
    Quantile,
}

fn default_draws() -> usize {
    100
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::Random { max_draws: 100 }
    }
}

impl InitStrategy {
    pub fn start<R: Rng + ?Sized>(&self, model: &MixtureModel, sample: &Sample, rng: &mut R) -> Result<ParamVector> {
        match *self {
            InitStrategy::Fixed { start } => {
                model.validate(&start)?;
                Ok(model.clamp(&start))
            }
            InitStrategy::Quantile => Ok(model.quantile_start(sample)),
            InitStrategy::Random { max_draws } => {
                let gate = LikelihoodGate::new(model, sample)?;
                let (lo, hi) = if model.is_weibull() {
                    (0.5, 3.0)
                } else {
                    (sample.quantile(0.05), sample.quantile(0.95))
                };
                for _ in 0..max_draws {
                    let p = model.clamp(&ParamVector::new(
                        rng.random_range(0.1..0.9),
                        rng.random_range(lo..=hi),
                        rng.random_range(lo..=hi),
                    ));
                    if gate.check(model, &p, sample) {
                        return Ok(p);
                    }
                }
                Err(Error::Initialization { draws: max_draws })
            }
        }
    }

    /// [`InitStrategy::start`] driven by a ChaCha8 stream seeded with `seed`.
    pub fn start_seeded(&self, model: &MixtureModel, sample: &Sample, seed: u64) -> Result<ParamVector> {
        self.start(model, sample, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// A named mixture with optional box overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub theta_box: Option<(f64, f64)>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<MixtureModel> {
        let mut m: MixtureModel = self.name.parse()?;
        if let Some(eta) = self.eta {
            m = m.with_eta(eta)?;
        }
        if let Some((lo, hi)) = self.theta_box {
            m = m.with_theta_box(lo, hi)?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub name: String,
    pub model: MixtureModel,
    pub truth: ParamVector,
    pub n: usize,
    pub replications: usize,
    pub contamination: Contamination,
    pub estimators: Vec<EstimatorSpec>,
    pub seed: u64,
    pub init: InitStrategy,
    /// Redraw the start when an estimate ends with λ on its bound.
    pub reinit_degenerate: usize,
    pub proximal: ProximalConfig,
    pub inner: NelderMeadConfig,
    pub quadrature: QuadratureConfig,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

impl ExperimentPlan {
    pub fn new(model: MixtureModel, truth: ParamVector, n: usize, replications: usize, estimators: Vec<EstimatorSpec>, seed: u64) -> Self {
        ExperimentPlan {
            name: "experiment".into(),
            model,
            truth,
            n,
            replications,
            contamination: Contamination::None,
            estimators,
            seed,
            init: InitStrategy::default(),
            reinit_degenerate: 5,
            proximal: ProximalConfig::default(),
            inner: default_inner_config(),
            quadrature: QuadratureConfig::default(),
            jobs: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::plan("replications", "must be at least 1"));
        }
        if self.n < 2 {
            return Err(Error::plan("n", "must be at least 2"));
        }
        if self.estimators.is_empty() {
            return Err(Error::plan("estimators", "list is empty"));
        }
        if self.contamination != Contamination::None && self.n < 10 {
            return Err(Error::plan("n", "contamination needs at least 10 observations"));
        }
        self.model.validate(&self.truth).map_err(|e| Error::plan("truth", e.to_string()))?;
        self.proximal.validate().map_err(|e| Error::plan("proximal", e.to_string()))?;
        for e in &self.estimators {
            if let Some(p) = e.proximal_override() {
                p.validate().map_err(|err| Error::plan("estimators.proximal", err.to_string()))?;
            }
            if let EstimatorSpec::Mdpd { a, .. } = e {
                if !(*a > 0.0 && *a <= 1.0) {
                    return Err(Error::plan("estimators.a", format!("{a} is outside (0, 1]")));
                }
            }
        }
        self.inner.validate().map_err(|e| Error::plan("inner", e.to_string()))?;
        self.quadrature.validate().map_err(|e| Error::plan("quadrature", e.to_string()))
    }
}

/// On-disk plan: one or more contamination scenarios sharing everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelSpec,
    pub truth: ParamVector,
    pub n: usize,
    pub replications: usize,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<Contamination>,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitStrategy,
    #[serde(default = "default_reinit")]
    pub reinit_degenerate: usize,
    #[serde(default)]
    pub proximal: ProximalConfig,
    #[serde(default = "default_inner_config")]
    pub inner: NelderMeadConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub jobs: usize,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_scenarios() -> Vec<Contamination> {
    vec![Contamination::None]
}

fn default_reinit() -> usize {
    5
}

impl PlanFile {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::plan("toml", e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::plan("json", e.to_string()))
    }

    /// Reads a plan; `.json` files are JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::plan(path.display().to_string(), e.to_string()))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn expand(&self) -> Result<Vec<ExperimentPlan>> {
        if self.scenarios.is_empty() {
            return Err(Error::plan("scenarios", "list is empty"));
        }
        let model = self.model.build().map_err(|e| Error::plan("model", e.to_string()))?;
        self.scenarios
            .iter()
            .map(|&contamination| {
                let plan = ExperimentPlan {
                    name: self.name.clone(),
                    model,
                    truth: self.truth,
                    n: self.n,
                    replications: self.replications,
                    contamination,
                    estimators: self.estimators.clone(),
                    seed: self.seed,
                    init: self.init,
                    reinit_degenerate: self.reinit_degenerate,
                    proximal: self.proximal,
                    inner: self.inner,
                    quadrature: self.quadrature,
                    jobs: self.jobs,
                };
                plan.validate()?;
                Ok(plan)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replication: usize,
    pub estimator: String,
    pub start: Option<ParamVector>,
    pub estimate: Option<ParamVector>,
    pub tvd: Option<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub runs: usize,
    pub failures: usize,
    pub mean: [f64; 3],
    pub sd: [f64; 3],
    pub tvd_mean: f64,
    pub tvd_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub model: String,
    pub scenario: Contamination,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub summaries: Vec<EstimatorSummary>,
    pub records: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn summary(&self, estimator: &str) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == estimator)
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Orders Gaussian components by mean; Weibull components have distinct
/// known scales and are left alone.
pub fn canonical(model: &MixtureModel, p: ParamVector) -> ParamVector {
    if !model.is_weibull() && p.theta[0] > p.theta[1] {
        ParamVector::new(1.0 - p.lambda, p.theta[1], p.theta[0])
    } else {
        p
    }
}

fn degenerate(model: &MixtureModel, p: &ParamVector) -> bool {
    p.lambda <= model.eta + 1e-3 || p.lambda >= 1.0 - model.eta - 1e-3
}

/// Fit one estimator; returns (estimate, iterations).
pub fn fit(plan: &ExperimentPlan, spec: &EstimatorSpec, sample: &Sample, start: &ParamVector) -> Result<(ParamVector, usize)> {
    let model = plan.model;
    match spec.objective() {
        None => {
            let f = model.em_fit(start, sample, plan.proximal.stop.eps_phi, plan.proximal.stop.max_iter.max(1000))?;
            Ok((model.clamp(&f.estimate), f.iterations))
        }
        Some(choice) => {
            let obj = choice
                .build(model, sample.clone())?
                .with_quadrature(plan.quadrature)?
                .with_inner(plan.inner)?;
            let cfg = spec.proximal_override().unwrap_or(plan.proximal);
            let trace = run(&obj, start, &cfg)?;
            Ok((trace.estimate(), trace.iterations()))
        }
    }
}

fn replicate(plan: &ExperimentPlan, r: usize) -> Vec<RunRecord> {
    let seed = child_seed(plan.seed, r as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prepared = plan
        .model
        .sample(&plan.truth, plan.n, &mut rng)
        .and_then(|s| plan.contamination.apply(s, &mut rng))
        .and_then(|s| plan.init.start(&plan.model, &s, &mut rng).map(|p| (s, p)));
    let (sample, start) = match prepared {
        Ok(v) => v,
        Err(e) => {
            return plan
                .estimators
                .iter()
                .map(|spec| RunRecord {
                    replication: r,
                    estimator: spec.label(),
                    start: None,
                    estimate: None,
                    tvd: None,
                    iterations: 0,
                    restarts: 0,
                    error: Some(e.to_string()),
                })
                .collect();
        }
    };

    plan.estimators
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let mut record = RunRecord {
                replication: r,
                estimator: spec.label(),
                start: Some(start),
                estimate: None,
                tvd: None,
                iterations: 0,
                restarts: 0,
                error: None,
            };
            let mut attempt_start = start;
            let mut restart_rng = ChaCha8Rng::seed_from_u64(child_seed(seed, j as u64 + 1));
            let outcome = loop {
                let res = fit(plan, spec, &sample, &attempt_start);
                match &res {
                    Ok((est, _)) if degenerate(&plan.model, est) && record.restarts < plan.reinit_degenerate => {
                        log::debug!("replication {r}: {} degenerate at {est}, redrawing start", spec.label());
                        match plan.init.start(&plan.model, &sample, &mut restart_rng) {
                            Ok(p) if p != attempt_start => {
                                attempt_start = p;
                                record.restarts += 1;
                            }
                            _ => break res,
                        }
                    }
                    _ => break res,
                }
            };
            match outcome.and_then(|(est, it)| {
                let est = canonical(&plan.model, est);
                Ok((est, it, tvd(&plan.model, &est, &plan.truth, &plan.quadrature)?))
            }) {
                Ok((est, it, t)) => {
                    record.start = Some(attempt_start);
                    record.estimate = Some(est);
                    record.iterations = it;
                    record.tvd = Some(t);
                }
                Err(e) => record.error = Some(e.to_string()),
            }
            record
        })
        .collect()
}

/// Runs every replication of a plan and aggregates per estimator.
///
/// Replications run in parallel; records are ordered by replication index,
/// so the report does not depend on scheduling.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| Error::plan("jobs", e.to_string()))?;
    let mut records: Vec<RunRecord> = pool.install(|| {
        (0..plan.replications)
            .into_par_iter()
            .flat_map_iter(|r| replicate(plan, r))
            .collect()
    });
    records.sort_by_key(|rec| rec.replication);

    let mut summaries = Vec::new();
    for spec in &plan.estimators {
        let label = spec.label();
        let ok: Vec<&RunRecord> = records.iter().filter(|r| r.estimator == label && r.estimate.is_some()).collect();
        let failures = records.iter().filter(|r| r.estimator == label && r.estimate.is_none()).count();
        if ok.is_empty() {
            return Err(Error::AllReplicationsFailed { estimator: label });
        }
        if failures > 0 {
            log::warn!("{label}: {failures} of {} replications failed", plan.replications);
        }
        let mut mean = [0.0; 3];
        let mut sd = [0.0; 3];
        for c in 0..3 {
            let v: Vec<f64> = ok.iter().map(|r| r.estimate.expect("filtered").to_array()[c]).collect();
            (mean[c], sd[c]) = mean_sd(&v);
        }
        let t: Vec<f64> = ok.iter().map(|r| r.tvd.expect("set with estimate")).collect();
        let (tvd_mean, tvd_sd) = mean_sd(&t);
        summaries.push(EstimatorSummary {
            estimator: label,
            runs: ok.len(),
            failures,
            mean,
            sd,
            tvd_mean,
            tvd_sd,
        });
    }
    Ok(ExperimentReport {
        name: plan.name.clone(),
        model: plan.model.name().into(),
        scenario: plan.contamination,
        n: plan.n,
        replications: plan.replications,
        seed: plan.seed,
        summaries,
        records,
    })
}
