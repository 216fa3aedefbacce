//! Objective functions minimized over the mixture parameter φ.
//!
//! - classical dual: sup over α of ∫φ′(p_φ/p_α)p_φ − (1/n)Σφ#(p_φ/p_α)(yᵢ)
//! - kernel dual: the same expression with p_α replaced by a kernel
//!   density estimate, so no inner optimization is needed
//! - density power: ∫p_φ^(1+a) − ((a+1)/a)(1/n)Σp_φ^a(yᵢ)
//! - negative log-likelihood
//!
//! All ratios are formed in log space.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::kde::{check_window_condition, KernelDensity};
use crate::models::{Family, MixtureModel, ParamVector, Sample};
use crate::optimizer::{minimize_params, NelderMeadConfig};
use crate::quadrature::{integrate, Domain, FixedRule, QuadratureConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    ClassicalDual(DivergenceSpec),
    KernelDual(DivergenceSpec, KernelDensity),
    NegLogLikelihood,
    Mdpd { a: f64 },
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveKind::ClassicalDual(s) => write!(f, "classical-dual({s})"),
            ObjectiveKind::KernelDual(s, k) => write!(f, "kernel-dual({s}, w={:.6})", k.bandwidth()),
            ObjectiveKind::NegLogLikelihood => write!(f, "neg-loglik"),
            ObjectiveKind::Mdpd { a } => write!(f, "mdpd(a={a})"),
        }
    }
}

/// Tolerances for the inner supremum of the classical dual.
pub fn default_inner_config() -> NelderMeadConfig {
    NelderMeadConfig::default().with_tolerances(1e-4, 1e-9, 600)
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub model: MixtureModel,
    pub sample: Sample,
    pub quadrature: QuadratureConfig,
    pub inner: NelderMeadConfig,
    anchor: OnceLock<ParamVector>,
}

impl Objective {
    pub fn new(kind: ObjectiveKind, model: MixtureModel, sample: Sample) -> Result<Self> {
        match &kind {
            ObjectiveKind::Mdpd { a } if !(*a > 0.0 && *a <= 1.0) => {
                return Err(Error::Domain {
                    what: "density power exponent a",
                    value: *a,
                })
            }
            ObjectiveKind::KernelDual(spec, kde) => {
                if kde.len() != sample.len() {
                    return Err(Error::invalid("kernel estimate built on a different sample"));
                }
                check_window_condition(spec.cressie_read_index(), kde.bandwidth());
            }
            _ => {}
        }
        Ok(Objective {
            kind,
            model,
            sample,
            quadrature: QuadratureConfig::default(),
            inner: default_inner_config(),
            anchor: OnceLock::new(),
        })
    }

    pub fn classical_dual(spec: DivergenceSpec, model: MixtureModel, sample: Sample) -> Result<Self> {
        Self::new(ObjectiveKind::ClassicalDual(spec), model, sample)
    }

    /// Kernel dual with Silverman's bandwidth unless one is given.
    pub fn kernel_dual(spec: DivergenceSpec, model: MixtureModel, sample: Sample, bandwidth: Option<f64>) -> Result<Self> {
        let kde = match bandwidth {
            Some(w) => KernelDensity::with_bandwidth(&sample, w)?,
            None => KernelDensity::new(&sample)?,
        };
        Self::new(ObjectiveKind::KernelDual(spec, kde), model, sample)
    }

    pub fn neg_log_likelihood(model: MixtureModel, sample: Sample) -> Result<Self> {
        Self::new(ObjectiveKind::NegLogLikelihood, model, sample)
    }

    pub fn mdpd(a: f64, model: MixtureModel, sample: Sample) -> Result<Self> {
        Self::new(ObjectiveKind::Mdpd { a }, model, sample)
    }

    pub fn with_quadrature(mut self, cfg: QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        self.quadrature = cfg;
        Ok(self)
    }

    pub fn with_inner(mut self, cfg: NelderMeadConfig) -> Result<Self> {
        cfg.validate()?;
        self.inner = cfg;
        Ok(self)
    }

    /// D̂(φ) on the scale minimized by the proximal iteration. The
    /// likelihood objective is divided by n here.
    pub fn eval(&self, phi: &ParamVector) -> Result<f64> {
        self.model.validate(phi)?;
        let v = match &self.kind {
            ObjectiveKind::ClassicalDual(spec) => self.eval_classical_dual(*spec, phi)?,
            ObjectiveKind::KernelDual(spec, kde) => self.eval_kernel_dual(*spec, kde, phi)?,
            ObjectiveKind::NegLogLikelihood => self.eval_neg_loglik(phi)? / self.sample.len() as f64,
            ObjectiveKind::Mdpd { a } => self.eval_mdpd(*a, phi)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteObjective {
                point: phi.to_array().to_vec(),
                detail: format!("{} evaluated to {v}", self.kind),
            })
        }
    }

    /// −Σᵢ ln p_φ(yᵢ).
    pub fn eval_neg_loglik(&self, phi: &ParamVector) -> Result<f64> {
        Ok(-self.model.log_likelihood(phi, &self.sample)?)
    }

    /// Maximum-likelihood fit of the sample, found once by EM from a few
    /// spread-out starts. Used as a start for the inner supremum.
    pub fn anchor(&self) -> ParamVector {
        *self.anchor.get_or_init(|| mle_anchor(&self.model, &self.sample))
    }

    /// The dual expression at a fixed α. Zero when α = φ.
    pub fn dual_term(&self, spec: DivergenceSpec, phi: &ParamVector, alpha: &ParamVector) -> Result<f64> {
        let m = &self.model;
        if let DivergenceSpec::ModifiedKl = spec {
            // ∫(1 − p_α/p_φ)p_φ vanishes identically
            return Ok((m.log_likelihood(alpha, &self.sample)? - m.log_likelihood(phi, &self.sample)?) / self.sample.len() as f64);
        }
        let domain = m.integration_domain(&[phi, alpha], self.quadrature.radius, &[]);
        let integral = integrate(
            |x| {
                let lp = m.log_density(phi, x);
                spec.weighted_phi_prime(lp - m.log_density(alpha, x), lp)
            },
            &domain,
            &self.quadrature,
        )?;
        let mean = self
            .sample
            .values
            .iter()
            .map(|&y| spec.phi_sharp_log(m.log_density(phi, y) - m.log_density(alpha, y)))
            .sum::<f64>()
            / self.sample.len() as f64;
        Ok(integral.value - mean)
    }

    /// sup over α in the parameter box of [`Objective::dual_term`].
    ///
    /// The search starts from whichever of φ and the likelihood anchor
    /// scores higher and is restarted once from its own result. α = φ scores
    /// exactly zero, so the value is never negative.
    pub fn eval_classical_dual(&self, spec: DivergenceSpec, phi: &ParamVector) -> Result<f64> {
        let anchor = self.anchor();
        if let DivergenceSpec::ModifiedKl = spec {
            return Ok(self.dual_term(spec, phi, &anchor)?.max(0.0));
        }
        let fixed = self.fixed_dual(spec, phi)?;
        let term = |alpha: &ParamVector| match &fixed {
            Some(fd) => Ok(fd.term(&self.model, alpha)),
            None => self.dual_term(spec, phi, alpha),
        };
        let at_anchor = term(&anchor)?;
        let start = if at_anchor > 0.0 { anchor } else { *phi };
        let bounds = self.model.bounds();
        let mut failure = None;
        let mut neg = |alpha: &ParamVector| match term(alpha) {
            Ok(v) => -v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        let (first, r1) = minimize_params(&mut neg, &start, &bounds, &self.inner)?;
        let (_, r2) = minimize_params(&mut neg, &first, &bounds, &self.inner)?;
        let best = -(r1.f_min.min(r2.f_min));
        if let (Some(e), false) = (failure, best.is_finite()) {
            return Err(e);
        }
        Ok(best.max(0.0))
    }

    /// For Gaussian components every admissible α has its mass inside the
    /// mean box widened by the quadrature radius, so one grid serves the
    /// whole inner search and ln p_φ is computed once.
    fn fixed_dual(&self, spec: DivergenceSpec, phi: &ParamVector) -> Result<Option<FixedDual>> {
        let m = &self.model;
        let Family::Gaussian { sigma } = m.family else {
            return Ok(None);
        };
        if let DivergenceSpec::ModifiedKl = spec {
            return Ok(None);
        }
        let r = self.quadrature.radius * sigma[0].max(sigma[1]);
        let Domain::RealLine(windows) = m.integration_domain(&[phi], self.quadrature.radius, &[(m.theta_box.0 - r, m.theta_box.1 + r)]) else {
            return Ok(None);
        };
        let rule = FixedRule::composite(&windows, 0.5 * sigma[0].min(sigma[1]), 8)?;
        let lp_nodes = rule.nodes.iter().map(|&x| m.log_density(phi, x)).collect();
        let lp_sample = self.sample.values.iter().map(|&y| m.log_density(phi, y)).collect();
        Ok(Some(FixedDual {
            spec,
            rule,
            lp_nodes,
            lp_sample,
            sample: self.sample.values.clone(),
        }))
    }

    pub fn eval_kernel_dual(&self, spec: DivergenceSpec, kde: &KernelDensity, phi: &ParamVector) -> Result<f64> {
        let m = &self.model;
        let domain = m.integration_domain(&[phi], self.quadrature.radius, &[]);
        let integral = integrate(
            |x| {
                let lp = m.log_density(phi, x);
                spec.weighted_phi_prime(lp - kde.log_eval(x), lp)
            },
            &domain,
            &self.quadrature,
        )?;
        let mean = self
            .sample
            .values
            .iter()
            .map(|&y| spec.phi_sharp_log(m.log_density(phi, y) - kde.log_eval(y)))
            .sum::<f64>()
            / self.sample.len() as f64;
        Ok(integral.value - mean)
    }

    pub fn eval_mdpd(&self, a: f64, phi: &ParamVector) -> Result<f64> {
        let m = &self.model;
        let domain = m.integration_domain(&[phi], self.quadrature.radius, &[]);
        let integral = integrate(|x| ((1.0 + a) * m.log_density(phi, x)).exp(), &domain, &self.quadrature)?;
        let mean = self
            .sample
            .values
            .iter()
            .map(|&y| (a * m.log_density(phi, y)).exp())
            .sum::<f64>()
            / self.sample.len() as f64;
        Ok(integral.value - (a + 1.0) / a * mean)
    }
}

struct FixedDual {
    spec: DivergenceSpec,
    rule: FixedRule,
    lp_nodes: Vec<f64>,
    lp_sample: Vec<f64>,
    sample: Vec<f64>,
}

impl FixedDual {
    fn term(&self, model: &MixtureModel, alpha: &ParamVector) -> f64 {
        let spec = self.spec;
        let integral: f64 = self
            .rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .zip(&self.lp_nodes)
            .map(|((&x, w), &lp)| w * spec.weighted_phi_prime(lp - model.log_density(alpha, x), lp))
            .sum();
        let mean = self
            .sample
            .iter()
            .zip(&self.lp_sample)
            .map(|(&y, &lp)| spec.phi_sharp_log(lp - model.log_density(alpha, y)))
            .sum::<f64>()
            / self.sample.len() as f64;
        integral - mean
    }
}

fn mle_anchor(model: &MixtureModel, sample: &Sample) -> ParamVector {
    let sorted = sample.sorted();
    let q = |p| crate::models::quantile_sorted(&sorted, p);
    let starts = if model.is_weibull() {
        vec![
            ParamVector::new(0.5, 1.0, 1.0),
            ParamVector::new(0.5, 0.5, 2.0),
            ParamVector::new(0.5, 2.0, 0.5),
        ]
    } else {
        vec![
            model.quantile_start(sample),
            model.clamp(&ParamVector::new(0.5, q(0.1), q(0.9))),
            model.clamp(&ParamVector::new(0.3, q(0.15), q(0.6))),
            model.clamp(&ParamVector::new(0.7, q(0.4), q(0.85))),
        ]
    };
    let mut best = (f64::NEG_INFINITY, starts[0]);
    for s in starts {
        let Ok(fit) = model.em_fit(&s, sample, 1e-10, 2000) else {
            continue;
        };
        let est = model.clamp(&fit.estimate);
        if let Ok(ll) = model.log_likelihood(&est, sample) {
            if ll > best.0 {
                best = (ll, est);
            }
        }
    }
    best.1
}

/// Central-difference gradient of `f` at φ with step `h` per coordinate.
pub fn numerical_gradient<F>(mut f: F, phi: &ParamVector, h: f64) -> Result<[f64; 3]>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    let x = phi.to_array();
    let mut g = [0.0; 3];
    for j in 0..3 {
        let mut up = x;
        let mut dn = x;
        up[j] += h;
        dn[j] -= h;
        g[j] = (f(&ParamVector::from_slice(&up))? - f(&ParamVector::from_slice(&dn))?) / (2.0 * h);
    }
    Ok(g)
}

/// Objectives selectable from configuration files and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveChoice {
    ClassicalDual { divergence: DivergenceSpec },
    KernelDual {
        divergence: DivergenceSpec,
        #[serde(default)]
        bandwidth: Option<f64>,
    },
    NegLogLikelihood,
    Mdpd { a: f64 },
}

impl ObjectiveChoice {
    pub fn build(&self, model: MixtureModel, sample: Sample) -> Result<Objective> {
        match *self {
            ObjectiveChoice::ClassicalDual { divergence } => Objective::classical_dual(divergence, model, sample),
            ObjectiveChoice::KernelDual { divergence, bandwidth } => Objective::kernel_dual(divergence, model, sample, bandwidth),
            ObjectiveChoice::NegLogLikelihood => Objective::neg_log_likelihood(model, sample),
            ObjectiveChoice::Mdpd { a } => Objective::mdpd(a, model, sample),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn truth() -> ParamVector {
        ParamVector::new(0.35, -2.0, 1.5)
    }

    fn seed42() -> Sample {
        MixtureModel::gaussian2().sample_seeded(&truth(), 100, 42).unwrap()
    }

    fn normal_pdf(x: f64, mu: f64) -> f64 {
        (-0.5 * (x - mu).powi(2)).exp() / (2.0 * PI).sqrt()
    }

    fn mix(p: &ParamVector, x: f64) -> f64 {
        p.lambda * normal_pdf(x, p.theta[0]) + (1.0 - p.lambda) * normal_pdf(x, p.theta[1])
    }

    fn random_phi(rng: &mut ChaCha8Rng) -> ParamVector {
        ParamVector::new(rng.random_range(0.05..0.95), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0))
    }

    #[test]
    fn dual_term_vanishes_at_alpha_equal_phi() {
        let s = seed42();
        let m = MixtureModel::gaussian2();
        let obj = Objective::classical_dual(DivergenceSpec::Hellinger, m, s).unwrap();
        let p = ParamVector::new(0.4, -1.0, 2.0);
        for spec in [
            DivergenceSpec::Hellinger,
            DivergenceSpec::Kl,
            DivergenceSpec::ModifiedKl,
            DivergenceSpec::CressieRead(2.0),
        ] {
            assert!(obj.dual_term(spec, &p, &p).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn modified_kl_dual_is_likelihood_gap() {
        let s = seed42();
        let m = MixtureModel::gaussian2();
        let obj = Objective::classical_dual(DivergenceSpec::ModifiedKl, m, s.clone()).unwrap();
        let nll = Objective::neg_log_likelihood(m, s.clone()).unwrap();
        let anchor = obj.anchor();
        // the anchor is a likelihood maximum: no EM step improves it
        let after = m.em_step(&anchor, &s).unwrap();
        assert!(m.log_likelihood(&after, &s).unwrap() <= m.log_likelihood(&anchor, &s).unwrap() + 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = s.len() as f64;
        for _ in 0..5 {
            let (a, b) = (random_phi(&mut rng), random_phi(&mut rng));
            let d = obj.eval(&a).unwrap() - obj.eval(&b).unwrap();
            let j = (nll.eval_neg_loglik(&a).unwrap() - nll.eval_neg_loglik(&b).unwrap()) / n;
            assert!((d - j).abs() < 1e-8, "{d} vs {j}");
            assert!(obj.eval(&a).unwrap() >= 0.0);
        }
    }

    #[test]
    fn hellinger_classical_dual_matches_grid_search() {
        let s = seed42();
        let m = MixtureModel::gaussian2();
        let obj = Objective::classical_dual(DivergenceSpec::Hellinger, m, s.clone()).unwrap();
        let phi = truth();
        let value = obj.eval(&phi).unwrap();

        // independent dual term: trapezoid on [-15, 15] with plain densities
        let term = |alpha: &ParamVector| {
            let h = 1e-3;
            let mut integral = 0.0;
            for k in 0..=30000 {
                let x = -15.0 + k as f64 * h;
                let (p, q) = (mix(&phi, x), mix(alpha, x));
                let w = if k == 0 || k == 30000 { 0.5 } else { 1.0 };
                integral += w * h * 0.5 * (p - (p * q).sqrt());
            }
            let mean = s.values.iter().map(|&y| 0.5 * ((mix(&phi, y) / mix(alpha, y)).sqrt() - 1.0)).sum::<f64>() / s.len() as f64;
            integral - mean
        };
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..=8 {
            for j in 0..=12 {
                for k in 0..=12 {
                    let a = ParamVector::new(0.1 + 0.1 * i as f64, -4.0 + 0.5 * j as f64, -3.0 + 0.5 * k as f64);
                    grid_best = grid_best.max(term(&a));
                }
            }
        }
        assert!(value > 0.0 && value < 0.2, "{value}");
        assert!(value >= grid_best - 1e-6, "{value} < grid {grid_best}");
        assert!(value - grid_best < 0.01, "{value} vs grid {grid_best}");
    }

    #[test]
    fn fixed_grid_matches_adaptive_dual_term() {
        let obj = Objective::classical_dual(DivergenceSpec::Hellinger, MixtureModel::gaussian2(), seed42()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for spec in [DivergenceSpec::Hellinger, DivergenceSpec::CressieRead(0.1), DivergenceSpec::Kl] {
            for _ in 0..10 {
                let phi = random_phi(&mut rng);
                let alpha = ParamVector::new(rng.random_range(0.01..0.99), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
                let fd = obj.fixed_dual(spec, &phi).unwrap().unwrap();
                let adaptive = obj.dual_term(spec, &phi, &alpha).unwrap();
                assert!((fd.term(&obj.model, &alpha) - adaptive).abs() < 1e-8 * (1.0 + adaptive.abs()), "{spec} {phi} {alpha}");
            }
        }
    }

    #[test]
    fn kernel_dual_larger_far_from_truth() {
        let s = seed42();
        let obj = Objective::kernel_dual(DivergenceSpec::Hellinger, MixtureModel::gaussian2(), s, None).unwrap();
        let near = obj.eval(&truth()).unwrap();
        let far = obj.eval(&ParamVector::new(0.5, 5.0, -5.0)).unwrap();
        assert!(near.is_finite() && far > near, "{near} {far}");
    }

    #[test]
    fn kernel_dual_against_brute_force() {
        let s = seed42();
        let obj = Objective::kernel_dual(DivergenceSpec::Hellinger, MixtureModel::gaussian2(), s.clone(), None).unwrap();
        let ObjectiveKind::KernelDual(_, kde) = &obj.kind else { unreachable!() };
        let w = kde.bandwidth();
        let k = |x: f64| s.values.iter().map(|y| (-0.5 * ((x - y) / w).powi(2)).exp()).sum::<f64>() / (s.len() as f64 * w * (2.0 * PI).sqrt());
        let phi = ParamVector::new(0.5, -1.0, 1.0);
        let h = 1e-3;
        let mut integral = 0.0;
        for i in 0..=30000 {
            let x = -15.0 + i as f64 * h;
            let p = mix(&phi, x);
            integral += h * 0.5 * (p - (p * k(x)).sqrt());
        }
        let mean = s.values.iter().map(|&y| 0.5 * ((mix(&phi, y) / k(y)).sqrt() - 1.0)).sum::<f64>() / s.len() as f64;
        assert_relative_eq!(obj.eval(&phi).unwrap(), integral - mean, epsilon = 1e-7);
    }

    #[test]
    fn mdpd_closed_form() {
        let s = seed42();
        let obj = Objective::mdpd(0.5, MixtureModel::gaussian2(), s.clone()).unwrap();
        let phi = ParamVector::new(0.5, 0.0, 0.0);
        let expected = (2.0 * PI).powf(-0.25) / 1.5f64.sqrt()
            - 3.0 * s.values.iter().map(|&y| normal_pdf(y, 0.0).sqrt()).sum::<f64>() / s.len() as f64;
        assert_relative_eq!(obj.eval(&phi).unwrap(), expected, epsilon = 1e-9);
        assert!(Objective::mdpd(0.0, MixtureModel::gaussian2(), seed42()).is_err());
        assert!(Objective::mdpd(1.5, MixtureModel::gaussian2(), seed42()).is_err());
    }

    #[test]
    fn mdpd_small_a_approaches_mle() {
        let m = MixtureModel::gaussian2();
        let s = m.sample_seeded(&ParamVector::new(0.35, -2.0, 2.0), 200, 9).unwrap();
        let obj = Objective::mdpd(0.01, m, s.clone()).unwrap();
        let em = m.em_fit(&m.quantile_start(&s), &s, 1e-10, 5000).unwrap().estimate;
        let (est, _) = minimize_params(
            |p| obj.eval(p).unwrap_or(f64::NAN),
            &em,
            &m.bounds(),
            &NelderMeadConfig::default().with_tolerances(1e-7, 1e-12, 3000),
        )
        .unwrap();
        assert!(est.max_abs_diff(&em) < 0.05, "{est} vs {em}");
    }

    #[test]
    fn neg_loglik_examples() {
        let m = MixtureModel::gaussian2();
        let one = Sample::from_values(vec![0.7]).unwrap();
        let obj = Objective::neg_log_likelihood(m, one).unwrap();
        assert_relative_eq!(
            obj.eval_neg_loglik(&ParamVector::new(0.5, 0.0, 0.0)).unwrap(),
            -normal_pdf(0.7, 0.0).ln(),
            max_relative = 1e-14
        );

        let s = seed42();
        let obj = Objective::neg_log_likelihood(m, s.clone()).unwrap();
        let p = ParamVector::new(0.5, -0.5, 0.5);
        let q = m.em_step(&p, &s).unwrap();
        assert!(obj.eval_neg_loglik(&q).unwrap() < obj.eval_neg_loglik(&p).unwrap());

        let w = MixtureModel::weibull2();
        let neg = Sample::from_values(vec![1.0, -1.0]).unwrap();
        let obj = Objective::neg_log_likelihood(w, neg).unwrap();
        assert_eq!(obj.eval_neg_loglik(&ParamVector::new(0.5, 1.0, 1.0)), Err(Error::DegeneratePoint { y: -1.0 }));
    }

    #[test]
    fn weibull_objectives_finite() {
        let m = MixtureModel::weibull2();
        let s = m.sample_seeded(&ParamVector::new(0.35, 1.2, 2.0), 100, 4).unwrap();
        let objs = [
            Objective::kernel_dual(DivergenceSpec::Hellinger, m, s.clone(), None).unwrap(),
            Objective::mdpd(0.5, m, s.clone()).unwrap(),
            Objective::neg_log_likelihood(m, s.clone()).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = ParamVector::new(rng.random_range(0.01..0.99), rng.random_range(0.2..6.0), rng.random_range(0.2..6.0));
            for o in &objs {
                assert!(o.eval(&p).unwrap().is_finite(), "{} at {p}", o.kind);
            }
        }
    }

    #[test]
    fn gaussian_objectives_finite() {
        let m = MixtureModel::gaussian2();
        let s = seed42();
        let objs = [
            Objective::kernel_dual(DivergenceSpec::Hellinger, m, s.clone(), None).unwrap(),
            Objective::kernel_dual(DivergenceSpec::CressieRead(2.0), m, s.clone(), None).unwrap(),
            Objective::mdpd(0.5, m, s.clone()).unwrap(),
            Objective::neg_log_likelihood(m, s.clone()).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let p = ParamVector::new(rng.random_range(0.01..0.99), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            for o in &objs {
                assert!(o.eval(&p).unwrap().is_finite(), "{} at {p}", o.kind);
            }
        }
    }

    #[test]
    fn kernel_dual_reports_sample_mismatch() {
        let s = seed42();
        let other = MixtureModel::gaussian2().sample_seeded(&truth(), 50, 1).unwrap();
        let kde = KernelDensity::new(&other).unwrap();
        assert!(Objective::new(ObjectiveKind::KernelDual(DivergenceSpec::Hellinger, kde), MixtureModel::gaussian2(), s).is_err());
    }

    #[test]
    fn choice_round_trips() {
        let c = ObjectiveChoice::KernelDual {
            divergence: DivergenceSpec::CressieRead(2.0),
            bandwidth: Some(0.8),
        };
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ObjectiveChoice>(&json).unwrap(), c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn classical_dual_dominates_fixed_alpha(l in 0.1f64..0.9, a in -3.0f64..3.0, b in -3.0f64..3.0,
                                                 la in 0.1f64..0.9, aa in -3.0f64..3.0, ab in -3.0f64..3.0) {
            let obj = Objective::classical_dual(DivergenceSpec::Hellinger, MixtureModel::gaussian2(), seed42()).unwrap();
            let phi = ParamVector::new(l, a, b);
            let v = obj.eval(&phi).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(v >= obj.dual_term(DivergenceSpec::Hellinger, &phi, &ParamVector::new(la, aa, ab)).unwrap() - 1e-9);
        }
    }
}
