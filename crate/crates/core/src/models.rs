//! Two-component mixture models with a latent label in {1, 2}.
//!
//! Both families fix the component scales and estimate the proportion λ
//! together with one parameter per component:
//!
//! - `gaussian2`: λ·N(μ₁, 1) + (1 − λ)·N(μ₂, 1), θ = (μ₁, μ₂)
//! - `weibull2`: λ·W(ν₁, 0.5) + (1 − λ)·W(ν₂, 2), θ = (ν₁, ν₂), with
//!   W(ν, σ) having density (ν/σ)(y/σ)^(ν−1)·exp(−(y/σ)^ν) on y > 0.
//!
//! λ is confined to [η, 1 − η] so that neither component can vanish and the
//! label posteriors h(x | φ) stay strictly positive.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Weibull};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Domain;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Mixture parameter φ = (λ, θ₁, θ₂).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub lambda: f64,
    pub theta: [f64; 2],
}

impl ParamVector {
    pub fn new(lambda: f64, theta1: f64, theta2: f64) -> Self {
        ParamVector {
            lambda,
            theta: [theta1, theta2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.lambda, self.theta[0], self.theta[1]]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        ParamVector::new(x[0], x[1], x[2])
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.lambda, self.theta[0], self.theta[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Generated,
    Contaminated,
    #[default]
    External,
}

/// Ordered observations y₁..yₙ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl Sample {
    pub fn new(values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::SampleTooSmall { required: 1, got: 0 });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "observation",
                value: *bad,
            });
        }
        Ok(Sample { values, provenance })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Sample::new(values, Provenance::External)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Standard deviation with the n − 1 denominator.
    pub fn sd(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Linear-interpolation quantile (Hyndman-Fan type 7).
    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(&self.sorted(), p)
    }
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Family {
    /// Unit-variance Gaussian components; θ are the means.
    Gaussian { sigma: [f64; 2] },
    /// Weibull components with known scales; θ are the shapes.
    Weibull { scale: [f64; 2] },
}

/// Box of admissible parameters, in (λ, θ₁, θ₂) order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Bounds {
    pub fn clamp(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (i, v) in x.iter_mut().enumerate() {
            let c = v.clamp(self.lower[i], self.upper[i]);
            if c != *v {
                moved = true;
                *v = c;
            }
        }
        moved
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub family: Family,
    pub eta: f64,
    /// Search box for θ used by the optimizers.
    pub theta_box: (f64, f64),
}

impl MixtureModel {
    pub const DEFAULT_ETA: f64 = 0.01;

    pub fn gaussian2() -> Self {
        MixtureModel {
            family: Family::Gaussian { sigma: [1.0, 1.0] },
            eta: Self::DEFAULT_ETA,
            theta_box: (-10.0, 10.0),
        }
    }

    pub fn weibull2() -> Self {
        MixtureModel {
            family: Family::Weibull { scale: [0.5, 2.0] },
            eta: Self::DEFAULT_ETA,
            theta_box: (0.1, 20.0),
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 0.5) {
            return Err(Error::invalid(format!("η must lie in (0, 0.5), got {eta}")));
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn with_theta_box(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || (self.is_weibull() && lo <= 0.0) {
            return Err(Error::invalid(format!("bad parameter box [{lo}, {hi}]")));
        }
        self.theta_box = (lo, hi);
        Ok(self)
    }

    pub fn is_weibull(&self) -> bool {
        matches!(self.family, Family::Weibull { .. })
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Gaussian { .. } => "gaussian2",
            Family::Weibull { .. } => "weibull2",
        }
    }

    /// Column label for θ in reports.
    pub fn theta_label(&self) -> &'static str {
        match self.family {
            Family::Gaussian { .. } => "mu",
            Family::Weibull { .. } => "nu",
        }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            lower: [self.eta, self.theta_box.0, self.theta_box.0],
            upper: [1.0 - self.eta, self.theta_box.1, self.theta_box.1],
        }
    }

    pub fn validate(&self, phi: &ParamVector) -> Result<()> {
        let slack = 1e-12;
        if !(phi.lambda >= self.eta - slack && phi.lambda <= 1.0 - self.eta + slack) {
            return Err(Error::invalid(format!(
                "λ = {} outside [{}, {}]",
                phi.lambda,
                self.eta,
                1.0 - self.eta
            )));
        }
        if !phi.theta.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid(format!("non-finite component parameter in {phi}")));
        }
        if self.is_weibull() && !phi.theta.iter().all(|t| *t > 0.0) {
            return Err(Error::invalid(format!("Weibull shapes must be positive, got {phi}")));
        }
        Ok(())
    }

    /// Projects φ onto the parameter box.
    pub fn clamp(&self, phi: &ParamVector) -> ParamVector {
        let mut x = phi.to_array();
        if self.bounds().clamp(&mut x) {
            log::debug!("clamped {phi} to the parameter box");
        }
        ParamVector::from_slice(&x)
    }

    /// Log density of component `i` (0-based) with parameter `theta` at y.
    #[inline]
    pub fn log_component(&self, i: usize, theta: f64, y: f64) -> f64 {
        match self.family {
            Family::Gaussian { sigma } => {
                let s = sigma[i];
                let z = (y - theta) / s;
                -0.5 * z * z - LN_SQRT_2PI - s.ln()
            }
            Family::Weibull { scale } => {
                if y <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let s = scale[i];
                let lz = (y / s).ln();
                theta.ln() - s.ln() + (theta - 1.0) * lz - (theta * lz).exp()
            }
        }
    }

    /// ln(λ f₁(y)) and ln((1 − λ) f₂(y)).
    #[inline]
    pub fn log_joint(&self, phi: &ParamVector, y: f64) -> [f64; 2] {
        [
            phi.lambda.ln() + self.log_component(0, phi.theta[0], y),
            (1.0 - phi.lambda).ln() + self.log_component(1, phi.theta[1], y),
        ]
    }

    /// ln p_φ(y); the caller guarantees φ is valid.
    #[inline]
    pub fn log_density(&self, phi: &ParamVector, y: f64) -> f64 {
        let [a, b] = self.log_joint(phi, y);
        log_add(a, b)
    }

    pub fn density(&self, phi: &ParamVector, y: f64) -> Result<f64> {
        self.validate(phi)?;
        Ok(self.log_density(phi, y).exp())
    }

    /// (ln h(1 | φ, y), ln h(2 | φ, y)).
    #[inline]
    pub fn log_conditional(&self, phi: &ParamVector, y: f64) -> Result<[f64; 2]> {
        let [a, b] = self.log_joint(phi, y);
        let total = log_add(a, b);
        if total == f64::NEG_INFINITY || total.is_nan() {
            return Err(Error::DegeneratePoint { y });
        }
        Ok([a - total, b - total])
    }

    /// (h(1 | φ, y), h(2 | φ, y)); the second is the complement of the first.
    pub fn conditional(&self, phi: &ParamVector, y: f64) -> Result<(f64, f64)> {
        self.validate(phi)?;
        let [l1, _] = self.log_conditional(phi, y)?;
        let h1 = l1.exp();
        Ok((h1, 1.0 - h1))
    }

    /// Σᵢ ln p_φ(yᵢ).
    pub fn log_likelihood(&self, phi: &ParamVector, sample: &Sample) -> Result<f64> {
        let mut total = 0.0;
        for &y in &sample.values {
            let l = self.log_density(phi, y);
            if !l.is_finite() {
                return Err(Error::DegeneratePoint { y });
            }
            total += l;
        }
        Ok(total)
    }

    /// Draws `n` observations: label 1 with probability λ, then the
    /// component. Deterministic for a fixed generator state.
    pub fn sample<R: Rng + ?Sized>(&self, phi: &ParamVector, n: usize, rng: &mut R) -> Result<Sample> {
        self.validate(phi)?;
        if n == 0 {
            return Err(Error::SampleTooSmall { required: 1, got: 0 });
        }
        let values = (0..n)
            .map(|_| {
                let first = rng.random::<f64>() < phi.lambda;
                let i = if first { 0 } else { 1 };
                self.draw_component(i, phi.theta[i], rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Sample::new(values, Provenance::Generated)
    }

    pub fn sample_seeded(&self, phi: &ParamVector, n: usize, seed: u64) -> Result<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(phi, n, &mut rng)
    }

    fn draw_component<R: Rng + ?Sized>(&self, i: usize, theta: f64, rng: &mut R) -> Result<f64> {
        Ok(match self.family {
            Family::Gaussian { sigma } => Normal::new(theta, sigma[i])
                .map_err(|e| Error::invalid(e.to_string()))?
                .sample(rng),
            Family::Weibull { scale } => Weibull::new(scale[i], theta)
                .map_err(|e| Error::invalid(e.to_string()))?
                .sample(rng),
        })
    }

    /// Integration windows covering the mass of every listed parameter's
    /// components, plus any extra windows (e.g. a kernel estimate's support).
    pub fn integration_domain(&self, params: &[&ParamVector], radius: f64, extra: &[(f64, f64)]) -> Domain {
        let mut windows: Vec<(f64, f64)> = extra.to_vec();
        match self.family {
            Family::Gaussian { sigma } => {
                for phi in params {
                    for i in 0..2 {
                        let r = radius * sigma[i];
                        windows.push((phi.theta[i] - r, phi.theta[i] + r));
                    }
                }
                Domain::RealLine(windows)
            }
            Family::Weibull { scale } => {
                // (y/σ)^ν from 1e−16 to 4·radius covers all but ~e^(−40) of the mass
                let windows: Vec<(f64, f64)> = windows
                    .into_iter()
                    .filter_map(|(lo, hi)| (hi > 0.0).then_some((lo.max(hi * 1e-12), hi)))
                    .chain(params.iter().flat_map(|phi| {
                        (0..2).map(move |i| {
                            let nu = phi.theta[i];
                            let lo = (scale[i] * (1e-16f64).powf(1.0 / nu)).max(1e-300);
                            let hi = scale[i] * (4.0 * radius).powf(1.0 / nu);
                            (lo, hi)
                        })
                    }))
                    .collect();
                Domain::PositiveHalfLine(windows)
            }
        }
    }

    /// Data-driven starting point: equal weights, components at the lower
    /// and upper quartiles (Gaussian) or unit shapes (Weibull).
    pub fn quantile_start(&self, sample: &Sample) -> ParamVector {
        match self.family {
            Family::Gaussian { .. } => {
                let sorted = sample.sorted();
                let q1 = quantile_sorted(&sorted, 0.25);
                let q3 = quantile_sorted(&sorted, 0.75);
                let (q1, q3) = if q3 - q1 < 1e-3 { (q1 - 0.5, q3 + 0.5) } else { (q1, q3) };
                self.clamp(&ParamVector::new(0.5, q1, q3))
            }
            Family::Weibull { .. } => ParamVector::new(0.5, 1.0, 1.0),
        }
    }

    /// One EM iteration. Gaussian means have the closed-form weighted-mean
    /// update; Weibull shapes solve the weighted likelihood equation.
    pub fn em_step(&self, phi: &ParamVector, sample: &Sample) -> Result<ParamVector> {
        self.validate(phi)?;
        let n = sample.len() as f64;
        let mut weights = [0.0f64; 2];
        let mut resp = Vec::with_capacity(sample.len());
        for &y in &sample.values {
            let [l1, _] = self.log_conditional(phi, y)?;
            let h1 = l1.exp();
            let h = [h1, 1.0 - h1];
            weights[0] += h[0];
            weights[1] += h[1];
            resp.push(h);
        }
        for (label, w) in weights.iter().enumerate() {
            if !(*w > 0.0) {
                return Err(Error::DegenerateComponent { label: label + 1 });
            }
        }
        let lambda = (weights[0] / n).clamp(self.eta, 1.0 - self.eta);
        let theta = match self.family {
            Family::Gaussian { .. } => {
                let mut num = [0.0f64; 2];
                for (y, h) in sample.values.iter().zip(&resp) {
                    num[0] += y * h[0];
                    num[1] += y * h[1];
                }
                [num[0] / weights[0], num[1] / weights[1]]
            }
            Family::Weibull { scale } => {
                let mut out = [0.0; 2];
                for i in 0..2 {
                    let w: Vec<f64> = resp.iter().map(|h| h[i]).collect();
                    out[i] = weibull_shape_mle(&sample.values, &w, scale[i], self.theta_box, phi.theta[i]);
                }
                out
            }
        };
        Ok(ParamVector { lambda, theta })
    }

    /// Iterates [`MixtureModel::em_step`] until the largest coordinate change
    /// drops below `tol`.
    pub fn em_fit(&self, start: &ParamVector, sample: &Sample, tol: f64, max_iter: usize) -> Result<EmFit> {
        let mut phi = *start;
        for k in 0..max_iter {
            let next = self.em_step(&phi, sample)?;
            let delta = next.max_abs_diff(&phi);
            phi = next;
            if delta < tol {
                return Ok(EmFit {
                    estimate: phi,
                    iterations: k + 1,
                    converged: true,
                });
            }
        }
        Ok(EmFit {
            estimate: phi,
            iterations: max_iter,
            converged: false,
        })
    }
    /// Best fit of component `i` alone to the whole sample: the sample mean
    /// for a Gaussian, the shape MLE for a Weibull. Returns the parameter and
    /// Σ ln fᵢ(yⱼ).
    pub fn single_component_fit(&self, i: usize, sample: &Sample) -> Result<(f64, f64)> {
        let theta = match self.family {
            Family::Gaussian { .. } => sample.mean(),
            Family::Weibull { scale } => {
                let w = vec![1.0; sample.len()];
                weibull_shape_mle(&sample.values, &w, scale[i], self.theta_box, 1.0)
            }
        };
        let mut total = 0.0;
        for &y in &sample.values {
            let l = self.log_component(i, theta, y);
            if !l.is_finite() {
                return Err(Error::DegeneratePoint { y });
            }
            total += l;
        }
        Ok((theta, total))
    }
}


#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmFit {
    pub estimate: ParamVector,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted Weibull shape MLE with known scale, constrained to `range`.
///
/// The score Σwᵢ(1/ν + ln zᵢ − zᵢ^ν ln zᵢ) is strictly decreasing in ν, so a
/// Newton iteration safeguarded by bisection finds the unique root.
fn weibull_shape_mle(y: &[f64], w: &[f64], scale: f64, range: (f64, f64), start: f64) -> f64 {
    let lz: Vec<f64> = y.iter().map(|v| if *v > 0.0 { (v / scale).ln() } else { f64::NAN }).collect();
    let score = |nu: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut d = 0.0;
        for (l, wi) in lz.iter().zip(w) {
            if l.is_nan() || *wi == 0.0 {
                continue;
            }
            let zn = (nu * l).exp();
            s += wi * (1.0 / nu + l - zn * l);
            d -= wi * (1.0 / (nu * nu) + zn * l * l);
        }
        (s, d)
    };
    let (mut lo, mut hi) = range;
    if score(lo).0 <= 0.0 {
        return lo;
    }
    if score(hi).0 >= 0.0 {
        return hi;
    }
    let mut nu = start.clamp(lo, hi);
    for _ in 0..200 {
        let (s, d) = score(nu);
        if s > 0.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        let newton = nu - s / d;
        let next = if newton > lo && newton < hi && d < 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - nu).abs() <= 1e-14 * nu.max(1.0) {
            return next;
        }
        nu = next;
    }
    nu
}

/// ln(eᵃ + eᵇ).
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl FromStr for MixtureModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian2" | "gaussian" => Ok(MixtureModel::gaussian2()),
            "weibull2" | "weibull" => Ok(MixtureModel::weibull2()),
            other => Err(Error::invalid(format!("unknown model '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadratureConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use std::f64::consts::PI;

    fn npdf(x: f64, mu: f64) -> f64 {
        (-0.5 * (x - mu).powi(2)).exp() / (2.0 * PI).sqrt()
    }

    fn wpdf(y: f64, nu: f64, s: f64) -> f64 {
        (nu / s) * (y / s).powf(nu - 1.0) * (-(y / s).powf(nu)).exp()
    }

    #[test]
    fn gaussian_density_examples() {
        let m = MixtureModel::gaussian2();
        let d = m.density(&ParamVector::new(0.5, 0.0, 0.0), 0.0).unwrap();
        assert_relative_eq!(d, 1.0 / (2.0 * PI).sqrt(), max_relative = 1e-14);
        let d = m.density(&ParamVector::new(0.35, -2.0, 1.5), -2.0).unwrap();
        let oracle = 0.35 / (2.0 * PI).sqrt() + 0.65 * (-0.5f64 * 3.5 * 3.5).exp() / (2.0 * PI).sqrt();
        assert_relative_eq!(d, oracle, max_relative = 1e-14);
    }

    #[test]
    fn weibull_density_matches_written_form() {
        let m = MixtureModel::weibull2();
        let phi = ParamVector::new(0.35, 1.2, 2.0);
        assert_eq!(m.density(&phi, 0.0).unwrap(), 0.0);
        assert_eq!(m.density(&phi, -1.0).unwrap(), 0.0);
        for y in [0.05f64, 0.3, 1.0, 2.5, 6.0] {
            let (a1, a2) = (1.2f64, 2.0f64);
            let written = 2.0 * 0.35 * a1 * (2.0 * y).powf(a1 - 1.0) * (-(2.0 * y).powf(a1)).exp()
                + 0.65 * (a2 / 2.0) * (y / 2.0).powf(a2 - 1.0) * (-(y / 2.0).powf(a2)).exp();
            assert_relative_eq!(m.density(&phi, y).unwrap(), written, max_relative = 1e-13);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let m = MixtureModel::gaussian2();
        assert!(m.density(&ParamVector::new(0.0, 0.0, 0.0), 0.0).is_err());
        assert!(m.density(&ParamVector::new(1.0, 0.0, 0.0), 0.0).is_err());
        let w = MixtureModel::weibull2();
        assert!(w.density(&ParamVector::new(0.5, -1.0, 2.0), 1.0).is_err());
    }

    #[test]
    fn conditional_examples() {
        let m = MixtureModel::gaussian2();
        for y in [-3.0, 0.0, 2.2] {
            let (h1, h2) = m.conditional(&ParamVector::new(0.5, 0.0, 0.0), y).unwrap();
            assert_relative_eq!(h1, 0.5, epsilon = 1e-15);
            assert_eq!(h1 + h2, 1.0);
        }
        let w = MixtureModel::weibull2();
        let phi = ParamVector::new(0.35, 1.2, 2.0);
        let (h1, _) = w.conditional(&phi, 1.0).unwrap();
        let a = 0.35 * wpdf(1.0, 1.2, 0.5);
        let b = 0.65 * wpdf(1.0, 2.0, 2.0);
        assert_relative_eq!(h1, a / (a + b), max_relative = 1e-13);
        assert!(matches!(w.conditional(&phi, -1.0), Err(Error::DegeneratePoint { .. })));
    }

    #[test]
    fn conditionals_equal_on_eq19_solution() {
        // μ₁ − μ₂ and ln((1−λ)/λ) + μ₁²/2 − μ₂²/2 agree for these two points
        let m = MixtureModel::gaussian2();
        let a = ParamVector::new(2.0 / 3.0, 0.0, 1.0);
        let lam = 1.0 / (1.0 + (-(2f64.ln() - 0.5)).exp());
        let b = ParamVector::new(lam, 0.5, 1.5);
        for y in [-4.0, -1.0, 0.0, 0.7, 3.0] {
            let (x, _) = m.conditional(&a, y).unwrap();
            let (z, _) = m.conditional(&b, y).unwrap();
            assert_relative_eq!(x, z, epsilon = 1e-14);
        }
    }

    #[test]
    fn sampling_contract() {
        let m = MixtureModel::gaussian2();
        let phi = ParamVector::new(0.35, -2.0, 1.5);
        assert!(m.sample_seeded(&phi, 0, 1).is_err());
        let a = m.sample_seeded(&phi, 50, 42).unwrap();
        let b = m.sample_seeded(&phi, 50, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.provenance, Provenance::Generated);
    }

    #[test]
    fn label_fraction_concentrates() {
        // labels drawn with well separated components: count draws near μ₁
        let m = MixtureModel::gaussian2();
        let eta = m.eta;
        let phi = ParamVector::new(1.0 - eta, -50.0, 50.0);
        let n = 10_000;
        let s = m.sample_seeded(&phi, n, 9).unwrap();
        let frac = s.values.iter().filter(|v| **v < 0.0).count() as f64 / n as f64;
        let band = 3.0 * (eta * (1.0 - eta) / n as f64).sqrt();
        assert!((frac - (1.0 - eta)).abs() <= band, "fraction {frac}");
    }

    #[test]
    fn em_step_symmetric_start() {
        let m = MixtureModel::gaussian2();
        let s = m.sample_seeded(&ParamVector::new(0.35, -2.0, 1.5), 100, 42).unwrap();
        let next = m.em_step(&ParamVector::new(0.5, 0.3, 0.3), &s).unwrap();
        assert_relative_eq!(next.lambda, 0.5, epsilon = 1e-14);
        assert_relative_eq!(next.theta[0], s.mean(), epsilon = 1e-12);
        assert_relative_eq!(next.theta[1], s.mean(), epsilon = 1e-12);
    }

    #[test]
    fn em_step_matches_hand_rolled_update() {
        let m = MixtureModel::gaussian2();
        let s = m.sample_seeded(&ParamVector::new(0.35, -2.0, 1.5), 100, 42).unwrap();
        let phi0 = ParamVector::new(0.5, -1.0, 1.0);
        // independent oracle: plain-space responsibilities
        let (mut sw, mut sy1, mut sy2) = (0.0, 0.0, 0.0);
        for &y in &s.values {
            let a = 0.5 * npdf(y, -1.0);
            let b = 0.5 * npdf(y, 1.0);
            let h = a / (a + b);
            sw += h;
            sy1 += y * h;
            sy2 += y * (1.0 - h);
        }
        let n = s.len() as f64;
        let next = m.em_step(&phi0, &s).unwrap();
        assert_relative_eq!(next.lambda, sw / n, max_relative = 1e-12);
        assert_relative_eq!(next.theta[0], sy1 / sw, max_relative = 1e-12);
        assert_relative_eq!(next.theta[1], sy2 / (n - sw), max_relative = 1e-12);
    }

    #[test]
    fn em_fixed_point() {
        let m = MixtureModel::gaussian2();
        let s = m.sample_seeded(&ParamVector::new(0.35, -2.0, 1.5), 200, 3).unwrap();
        let fit = m.em_fit(&ParamVector::new(0.5, -1.0, 1.0), &s, 1e-15, 5000).unwrap();
        let again = m.em_step(&fit.estimate, &s).unwrap();
        assert!(again.max_abs_diff(&fit.estimate) < 1e-12);
    }

    #[test]
    fn em_increases_likelihood() {
        let m = MixtureModel::gaussian2();
        let s = m.sample_seeded(&ParamVector::new(0.35, -2.0, 1.5), 100, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let phi = ParamVector::new(
                rng.random_range(0.05..0.95),
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
            );
            let next = m.em_step(&phi, &s).unwrap();
            let l0 = m.log_likelihood(&phi, &s).unwrap();
            let l1 = m.log_likelihood(&next, &s).unwrap();
            assert!(l1 >= l0 - 1e-9, "{l1} < {l0}");
        }
    }

    #[test]
    fn weibull_em_increases_likelihood_and_recovers() {
        let m = MixtureModel::weibull2();
        let truth = ParamVector::new(0.35, 1.2, 2.0);
        let s = m.sample_seeded(&truth, 5000, 8).unwrap();
        let mut phi = ParamVector::new(0.5, 1.0, 1.0);
        let mut last = m.log_likelihood(&phi, &s).unwrap();
        for _ in 0..200 {
            phi = m.em_step(&phi, &s).unwrap();
            let l = m.log_likelihood(&phi, &s).unwrap();
            assert!(l >= last - 1e-8);
            last = l;
        }
        assert!(phi.max_abs_diff(&truth) < 0.15, "{phi}");
    }

    #[test]
    fn quantile_type7() {
        let s = Sample::from_values(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_relative_eq!(s.quantile(0.25), 1.75);
        assert_relative_eq!(s.quantile(0.5), 2.5);
    }

    proptest! {
        #[test]
        fn gaussian_mixture_normalized(l in 0.01f64..0.99, m1 in -8.0f64..8.0, m2 in -8.0f64..8.0) {
            let m = MixtureModel::gaussian2();
            let phi = ParamVector::new(l, m1, m2);
            let cfg = QuadratureConfig::default();
            let dom = m.integration_domain(&[&phi], cfg.radius, &[]);
            let r = integrate(|y| m.log_density(&phi, y).exp(), &dom, &cfg).unwrap();
            prop_assert!((r.value - 1.0).abs() < 1e-6);
        }

        #[test]
        fn weibull_mixture_normalized(l in 0.01f64..0.99, a in 0.3f64..6.0, b in 0.3f64..6.0) {
            let m = MixtureModel::weibull2();
            let phi = ParamVector::new(l, a, b);
            let cfg = QuadratureConfig::default();
            let dom = m.integration_domain(&[&phi], cfg.radius, &[]);
            let r = integrate(|y| m.log_density(&phi, y).exp(), &dom, &cfg).unwrap();
            prop_assert!((r.value - 1.0).abs() < 1e-6);
        }

        #[test]
        fn conditionals_sum_to_one(l in 0.01f64..0.99, m1 in -5.0f64..5.0, m2 in -5.0f64..5.0, y in -10.0f64..10.0) {
            let m = MixtureModel::gaussian2();
            let (h1, h2) = m.conditional(&ParamVector::new(l, m1, m2), y).unwrap();
            prop_assert_eq!(h1 + h2, 1.0);
            prop_assert!(h1 >= 0.0 && h2 >= 0.0);
        }
    }
}
