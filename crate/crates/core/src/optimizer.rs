//! Box-constrained Nelder-Mead.
//!
//! Proposals that leave the box are projected back onto it before the
//! objective is evaluated, so every stored vertex is feasible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Bounds, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Converged once every vertex is within `x_tol` (max norm) of the best
    /// and the spread of vertex values is below `f_tol`.
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
    /// Initial edge along coordinate j is max(step_min, step_rel·|x_j|).
    pub step_min: f64,
    pub step_rel: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            x_tol: 1e-8,
            f_tol: 1e-10,
            max_iter: 2000,
            step_min: 0.1,
            step_rel: 0.1,
        }
    }
}

impl NelderMeadConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.reflection > 0.0
            && self.expansion > 1.0
            && self.expansion > self.reflection
            && self.contraction > 0.0
            && self.contraction < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.x_tol > 0.0
            && self.f_tol > 0.0
            && self.max_iter > 0
            && self.step_min > 0.0
            && self.step_rel >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("Nelder-Mead configuration out of range: {self:?}")))
        }
    }

    /// Same coefficients with different stopping tolerances.
    pub fn with_tolerances(mut self, x_tol: f64, f_tol: f64, max_iter: usize) -> Self {
        self.x_tol = x_tol;
        self.f_tol = f_tol;
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmResult {
    pub argmin: Vec<f64>,
    pub f_min: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best vertex value after each iteration.
    pub history: Vec<f64>,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for (i, v) in x.iter_mut().enumerate() {
        *v = v.clamp(lower[i], upper[i]);
    }
}

/// Minimize `f` over the box [lower, upper] starting from `start`.
///
/// Non-finite values away from the start are treated as +∞. The start is
/// projected onto the box first; a non-finite value there is an error.
pub fn minimize<F>(mut f: F, start: &[f64], lower: &[f64], upper: &[f64], cfg: &NelderMeadConfig) -> Result<NmResult>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    let n = start.len();
    if n == 0 || lower.len() != n || upper.len() != n {
        return Err(Error::invalid("dimension mismatch between start and bounds"));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::invalid("lower bound exceeds upper bound"));
    }

    let mut x0 = start.to_vec();
    project(&mut x0, lower, upper);
    let f0 = f(&x0);
    if !f0.is_finite() {
        return Err(Error::NonFiniteObjective {
            point: x0,
            detail: format!("start value {f0}"),
        });
    }
    let mut evals = 1;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), f0));
    for j in 0..n {
        let step = cfg.step_min.max(cfg.step_rel * x0[j].abs());
        let mut x = x0.clone();
        x[j] = if x0[j] + step <= upper[j] { x0[j] + step } else { x0[j] - step };
        project(&mut x, lower, upper);
        if x[j] == x0[j] {
            // degenerate box coordinate; nudge toward whichever side has room
            x[j] = if upper[j] > x0[j] { upper[j] } else { lower[j] };
        }
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let point = |c: &[f64], d: &[f64], t: f64| -> Vec<f64> {
        let mut x: Vec<f64> = c.iter().zip(d).map(|(ci, di)| ci + t * (di - ci)).collect();
        project(&mut x, lower, upper);
        x
    };

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);

        let best = &simplex[0];
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = simplex[n].1 - best.1;
        // a collapsed simplex cannot make further progress on a noisy f
        if (diameter < cfg.x_tol && spread.abs() < cfg.f_tol) || diameter < 1e-3 * cfg.x_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let f_worst = simplex[n].1;
        let f_second = simplex[n - 1].1;
        let f_best = simplex[0].1;

        let xr = point(&centroid, &worst, -cfg.reflection);
        let fr = eval(&xr, &mut evals);
        if fr < f_best {
            let xe = point(&centroid, &worst, -cfg.expansion);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        // contraction, outside if the reflection improved on the worst
        let (xc, fc) = if fr < f_worst {
            let xc = point(&centroid, &xr, cfg.contraction);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = point(&centroid, &worst, cfg.contraction);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < f_worst.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for vertex in simplex[1..].iter_mut() {
            let x = point(&x_best, &vertex.0, cfg.shrink);
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }

    let (argmin, f_min) = simplex.swap_remove(0);
    Ok(NmResult {
        argmin,
        f_min,
        evals,
        iterations,
        converged,
        history,
    })
}

/// [`minimize`] over mixture parameters inside a [`Bounds`] box.
pub fn minimize_params<F>(mut f: F, start: &ParamVector, bounds: &Bounds, cfg: &NelderMeadConfig) -> Result<(ParamVector, NmResult)>
where
    F: FnMut(&ParamVector) -> f64,
{
    let r = minimize(
        |x| f(&ParamVector::from_slice(x)),
        &start.to_array(),
        &bounds.lower,
        &bounds.upper,
        cfg,
    )?;
    Ok((ParamVector::from_slice(&r.argmin), r))
}
