//! Proximal-point iteration
//!
//!   φ^(k+1) = arginf_φ D̂(φ) + β_k·Dψ(φ, φ^k)
//!
//! where Dψ(φ, φ′) = (1/n)Σᵢ Σₓ ψ(hᵢ(x|φ)/hᵢ(x|φ′))·hᵢ(x|φ′) compares the
//! label posteriors of the two parameters. With the modified-KL objective
//! and ψ(t) = −log t + t − 1 every step is an EM step.

use serde::{Deserialize, Serialize};

use crate::divergence::ProximalGenerator;
use crate::error::{Error, Result};
use crate::estimators::{Objective, ObjectiveKind};
use crate::models::{Family, MixtureModel, ParamVector, Sample};
use crate::optimizer::{minimize_params, NelderMeadConfig};

/// Slack allowed when checking that the objective did not increase.
pub const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaSchedule {
    Constant { beta: f64 },
    /// β_k = β₀/(k + 1).
    Decreasing { beta0: f64 },
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Constant { beta: 1.0 }
    }
}

impl BetaSchedule {
    /// β for the step that produces φ^(k+1).
    pub fn beta(&self, k: usize) -> f64 {
        match *self {
            BetaSchedule::Constant { beta } => beta,
            BetaSchedule::Decreasing { beta0 } => beta0 / (k as f64 + 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let b = match *self {
            BetaSchedule::Constant { beta } => beta,
            BetaSchedule::Decreasing { beta0 } => beta0,
        };
        if b >= 0.0 && b.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain { what: "β", value: b })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptRule {
    /// Keep the local minimizer found from φ^k if it does not raise D̂.
    #[default]
    LocalDecrease,
    /// Also search from a perturbed start and keep the better minimizer.
    FullArginf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopRule {
    pub max_iter: usize,
    pub eps_d: f64,
    pub eps_phi: f64,
    /// Consecutive small steps required before stopping.
    pub patience: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_iter: 500,
            eps_d: 1e-8,
            eps_phi: 1e-6,
            patience: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProximalConfig {
    pub generator: ProximalGenerator,
    pub beta: BetaSchedule,
    pub stop: StopRule,
    pub accept: AcceptRule,
    pub optimizer: NelderMeadConfig,
    /// Offset of the extra start used by [`AcceptRule::FullArginf`].
    pub restart_offset: f64,
}

impl Default for ProximalConfig {
    fn default() -> Self {
        ProximalConfig {
            generator: ProximalGenerator::hellinger(),
            beta: BetaSchedule::default(),
            stop: StopRule::default(),
            accept: AcceptRule::default(),
            optimizer: NelderMeadConfig::default(),
            restart_offset: 0.5,
        }
    }
}

impl ProximalConfig {
    pub fn validate(&self) -> Result<()> {
        self.beta.validate()?;
        self.optimizer.validate()?;
        let s = &self.stop;
        if !(s.eps_d > 0.0 && s.eps_phi > 0.0 && s.max_iter > 0 && s.patience > 0) {
            return Err(Error::invalid(format!("stopping rule out of range: {s:?}")));
        }
        if !(self.restart_offset > 0.0) {
            return Err(Error::Domain {
                what: "restart offset",
                value: self.restart_offset,
            });
        }
        Ok(())
    }

    /// The pairing under which each step reproduces EM.
    pub fn em_equivalent() -> Self {
        ProximalConfig {
            generator: ProximalGenerator::modified_kl(),
            ..Self::default()
        }
    }
}

/// Dψ(φ, φ′) on a sample.
pub fn d_psi(model: &MixtureModel, phi: &ParamVector, phi_prev: &ParamVector, sample: &Sample, psi: &ProximalGenerator) -> Result<f64> {
    let mut total = 0.0;
    for &y in &sample.values {
        let h = model.log_conditional(phi, y)?;
        let h_prev = model.log_conditional(phi_prev, y)?;
        for x in 0..2 {
            total += psi.weighted(h[x] - h_prev[x], h_prev[x]);
        }
    }
    Ok(total / sample.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub phi: ParamVector,
    pub objective: f64,
    pub penalty: f64,
    pub step_norm: f64,
    /// False when the candidate raised the objective and φ^k was kept.
    pub accepted: bool,
    pub evals: usize,
}

/// One proximal step from φ^k; `k` selects β_k.
pub fn proximal_step(obj: &Objective, phi_k: &ParamVector, objective_k: f64, k: usize, cfg: &ProximalConfig) -> Result<StepOutcome> {
    let beta = cfg.beta.beta(k);
    let model = &obj.model;
    let bounds = model.bounds();
    let mut failure = None;
    let mut f = |phi: &ParamVector| {
        let value = obj.eval(phi).and_then(|d| {
            if beta == 0.0 {
                Ok(d)
            } else {
                Ok(d + beta * d_psi(model, phi, phi_k, &obj.sample, &cfg.generator)?)
            }
        });
        match value {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };

    let mut starts = vec![*phi_k];
    if cfg.accept == AcceptRule::FullArginf {
        let o = cfg.restart_offset;
        starts.push(model.clamp(&ParamVector::new(phi_k.lambda + 0.2 * o, phi_k.theta[0] - o, phi_k.theta[1] + o)));
    }
    let mut best: Option<(ParamVector, f64)> = None;
    let mut evals = 0;
    for s in starts {
        let (first, r1) = minimize_params(&mut f, &s, &bounds, &cfg.optimizer)?;
        let (second, r2) = minimize_params(&mut f, &first, &bounds, &cfg.optimizer)?;
        evals += r1.evals + r2.evals;
        let (cand, value) = if r2.f_min <= r1.f_min { (second, r2.f_min) } else { (first, r1.f_min) };
        if best.is_none_or(|(_, v)| value < v) {
            best = Some((cand, value));
        }
    }
    let (candidate, value) = best.expect("at least one start");
    if !value.is_finite() {
        return Err(failure.unwrap_or_else(|| Error::NonFiniteObjective {
            point: candidate.to_array().to_vec(),
            detail: "proximal objective".into(),
        }));
    }

    let objective = obj.eval(&candidate)?;
    if objective > objective_k {
        return Ok(StepOutcome {
            phi: *phi_k,
            objective: objective_k,
            penalty: 0.0,
            step_norm: 0.0,
            accepted: false,
            evals,
        });
    }
    Ok(StepOutcome {
        phi: candidate,
        objective,
        penalty: d_psi(model, &candidate, phi_k, &obj.sample, &cfg.generator)?,
        step_norm: candidate.distance(phi_k),
        accepted: true,
        evals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub lambda: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub objective: f64,
    pub log1p_objective: f64,
    /// Dψ(φ^k, φ^(k−1)); zero on the first row.
    pub penalty: f64,
    pub step_norm: f64,
    pub monotone_ok: bool,
}

impl TraceRecord {
    pub fn phi(&self) -> ParamVector {
        ParamVector::new(self.lambda, self.theta1, self.theta2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Objective decrease or step norm fell below tolerance.
    Converged,
    /// The step from the last iterate moved neither the objective nor φ.
    FixedPoint,
    /// The local minimizer raised the objective; the last iterate is kept.
    NoDecrease,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximalTrace {
    pub records: Vec<TraceRecord>,
    pub stop: StopReason,
}

impl ProximalTrace {
    pub fn estimate(&self) -> ParamVector {
        self.records.last().expect("trace has a first row").phi()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn is_monotone(&self) -> bool {
        self.records.iter().all(|r| r.monotone_ok)
    }

    /// Every iterate stays in the initial sublevel set.
    pub fn within_initial_level(&self) -> bool {
        let d0 = self.records[0].objective;
        self.records.iter().all(|r| r.objective <= d0 + MONOTONE_SLACK)
    }
}

/// Iterates proximal steps from φ⁰ until a stopping rule fires.
pub fn run(obj: &Objective, phi0: &ParamVector, cfg: &ProximalConfig) -> Result<ProximalTrace> {
    cfg.validate()?;
    let phi0 = obj.model.clamp(phi0);
    let d0 = obj.eval(&phi0)?;
    let mut records = vec![TraceRecord {
        k: 0,
        lambda: phi0.lambda,
        theta1: phi0.theta[0],
        theta2: phi0.theta[1],
        objective: d0,
        log1p_objective: d0.ln_1p(),
        penalty: 0.0,
        step_norm: 0.0,
        monotone_ok: true,
    }];
    let (mut phi, mut d) = (phi0, d0);
    let mut small = 0;
    let stop = loop {
        let k = records.len() - 1;
        if k >= cfg.stop.max_iter {
            break StopReason::MaxIter;
        }
        let step = proximal_step(obj, &phi, d, k, cfg).map_err(|e| Error::Step {
            iteration: k + 1,
            source: Box::new(e),
        })?;
        if !step.accepted {
            break StopReason::NoDecrease;
        }
        let decrease = d - step.objective;
        let tiny_d = decrease.abs() < cfg.stop.eps_d;
        let tiny_phi = step.step_norm < cfg.stop.eps_phi;
        if tiny_d && tiny_phi {
            break StopReason::FixedPoint;
        }
        log::trace!("k={} φ={} D={:.10e} Dψ={:.3e}", k + 1, step.phi, step.objective, step.penalty);
        records.push(TraceRecord {
            k: k + 1,
            lambda: step.phi.lambda,
            theta1: step.phi.theta[0],
            theta2: step.phi.theta[1],
            objective: step.objective,
            log1p_objective: step.objective.ln_1p(),
            penalty: step.penalty,
            step_norm: step.step_norm,
            monotone_ok: step.objective <= d + MONOTONE_SLACK,
        });
        phi = step.phi;
        d = step.objective;
        small = if tiny_d || tiny_phi { small + 1 } else { 0 };
        if small >= cfg.stop.patience {
            break StopReason::Converged;
        }
    };
    Ok(ProximalTrace { records, stop })
}

/// Start-point gate: J(φ⁰) must beat the likelihood of every
/// single-component fit, which is what the mixture degenerates to when one
/// component parameter runs off to infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodGate {
    /// max over components of the single-component log-likelihood.
    pub boundary: f64,
}

impl LikelihoodGate {
    pub fn new(model: &MixtureModel, sample: &Sample) -> Result<Self> {
        let a = model.single_component_fit(0, sample)?.1;
        let b = model.single_component_fit(1, sample)?.1;
        Ok(LikelihoodGate { boundary: a.max(b) })
    }

    pub fn check(&self, model: &MixtureModel, phi0: &ParamVector, sample: &Sample) -> bool {
        match model.log_likelihood(phi0, sample) {
            Ok(j) => j > self.boundary,
            Err(_) => false,
        }
    }
}

pub fn check_init_likelihood(model: &MixtureModel, phi0: &ParamVector, sample: &Sample) -> Result<bool> {
    Ok(LikelihoodGate::new(model, sample)?.check(model, phi0, sample))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelInitCheck {
    pub value: f64,
    pub threshold: f64,
    pub accepted: bool,
}

/// Gate for the kernel dual: D̃(φ⁰) must lie below the objective's limits
/// as one or both means run off to infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelGate {
    /// Objective with both components far from the data (+∞ if it diverges).
    pub far_limit: f64,
    /// inf over (λ, μ) with the other mean far from the data.
    pub profile_inf: f64,
}

impl KernelGate {
    pub fn new(obj: &Objective) -> Result<Self> {
        let ObjectiveKind::KernelDual(_, kde) = &obj.kind else {
            return Err(Error::invalid("kernel initialization gate needs a kernel-dual objective"));
        };
        let Family::Gaussian { sigma } = obj.model.family else {
            return Err(Error::invalid("kernel initialization gate is defined for Gaussian components"));
        };
        let model = &obj.model;
        let (lo, hi) = kde.support_window(0.0);
        let far = hi.abs().max(lo.abs()) + 40.0 * (kde.bandwidth() + sigma[0].max(sigma[1]));
        let far_limit = match obj.eval(&ParamVector::new(0.5, far, far)) {
            Ok(v) => v,
            Err(Error::NonFiniteObjective { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };

        let (mlo, mhi) = model.theta_box;
        let profile = |lambda: f64, mu: f64| obj.eval(&ParamVector::new(lambda, far, mu));
        let mut best = (f64::INFINITY, ParamVector::new(0.5, far, 0.0));
        for i in 0..5 {
            let lambda = (0.1 + 0.2 * i as f64).clamp(model.eta, 1.0 - model.eta);
            let steps = ((mhi - mlo).ceil() as usize).max(1);
            for j in 0..=steps {
                let mu = mlo + (mhi - mlo) * j as f64 / steps as f64;
                let v = profile(lambda, mu)?;
                if v < best.0 {
                    best = (v, ParamVector::new(lambda, far, mu));
                }
            }
        }
        let nm = NelderMeadConfig::default().with_tolerances(1e-6, 1e-10, 1000);
        let r = crate::optimizer::minimize(
            |x| profile(x[0], x[1]).unwrap_or(f64::NAN),
            &[best.1.lambda, best.1.theta[1]],
            &[model.eta, mlo],
            &[1.0 - model.eta, mhi],
            &nm,
        )?;
        Ok(KernelGate {
            far_limit,
            profile_inf: r.f_min.min(best.0),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.far_limit.min(self.profile_inf)
    }

    pub fn check(&self, obj: &Objective, phi0: &ParamVector) -> Result<KernelInitCheck> {
        let value = obj.eval(phi0)?;
        let threshold = self.threshold();
        Ok(KernelInitCheck {
            value,
            threshold,
            accepted: value < threshold,
        })
    }
}

pub fn check_init_kernel_dual(obj: &Objective, phi0: &ParamVector) -> Result<KernelInitCheck> {
    KernelGate::new(obj)?.check(obj, phi0)
}
