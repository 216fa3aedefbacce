//! Gaussian kernel density estimate K_{n,w}.

use crate::error::{Error, Result};
use crate::models::{quantile_sorted, Sample};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Kernel terms whose log weight trails the largest by more than this are
/// skipped; they cannot change a double-precision sum.
const LOG_CUTOFF: f64 = 40.0;

/// Silverman's rule of thumb, 0.9·min(sd, IQR/1.34)·n^(−1/5).
///
/// The IQR uses type-7 quantiles. When the IQR vanishes but the standard
/// deviation does not, the standard deviation alone is used.
pub fn silverman_bandwidth(sample: &Sample) -> Result<f64> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::SampleTooSmall { required: 2, got: n });
    }
    let sorted = sample.sorted();
    let sd = sample.sd();
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = match sd.min(iqr / 1.34) {
        s if s > 0.0 => s,
        _ if sd > 0.0 => sd,
        _ => return Err(Error::DegenerateSample),
    };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// γ(w² − 1) > −1: the kernel-dual objective with a Cressie-Read generator
/// of index γ is well behaved in the tails only when this holds.
pub fn check_window_condition(gamma: f64, w: f64) -> bool {
    let ok = gamma * (w * w - 1.0) > -1.0;
    if !ok {
        log::warn!("window w = {w} violates γ(w²−1) > −1 for γ = {gamma}");
    }
    ok
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDensity {
    points: Vec<f64>,
    bandwidth: f64,
    log_norm: f64,
}

impl KernelDensity {
    /// Estimate with Silverman's bandwidth.
    pub fn new(sample: &Sample) -> Result<Self> {
        let w = silverman_bandwidth(sample)?;
        Self::with_bandwidth(sample, w)
    }

    pub fn with_bandwidth(sample: &Sample, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Domain {
                what: "bandwidth",
                value: bandwidth,
            });
        }
        let points = sample.sorted();
        let log_norm = -((points.len() as f64).ln() + bandwidth.ln() + LN_SQRT_2PI);
        Ok(KernelDensity {
            points,
            bandwidth,
            log_norm,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.log_eval(y).exp()
    }

    /// ln K_{n,w}(y), finite for every finite y.
    pub fn log_eval(&self, y: f64) -> f64 {
        let pts = &self.points;
        let inv_w = 1.0 / self.bandwidth;
        // nearest sample point carries the largest kernel term
        let idx = pts.partition_point(|p| *p < y);
        let nearest = match (idx.checked_sub(1), pts.get(idx)) {
            (Some(i), Some(&r)) => {
                if y - pts[i] <= r - y {
                    i
                } else {
                    idx
                }
            }
            (Some(i), None) => i,
            (None, _) => 0,
        };
        let z0 = (y - pts[nearest]) * inv_w;
        let top = -0.5 * z0 * z0;
        let mut sum = 1.0;
        for p in pts[nearest + 1..].iter() {
            let z = (p - y) * inv_w;
            let d = -0.5 * z * z - top;
            if d < -LOG_CUTOFF {
                break;
            }
            sum += d.exp();
        }
        for p in pts[..nearest].iter().rev() {
            let z = (y - p) * inv_w;
            let d = -0.5 * z * z - top;
            if d < -LOG_CUTOFF {
                break;
            }
            sum += d.exp();
        }
        self.log_norm + top + sum.ln()
    }

    /// [min − r·w, max + r·w].
    pub fn support_window(&self, radius: f64) -> (f64, f64) {
        let r = radius * self.bandwidth;
        (self.points[0] - r, self.points[self.points.len() - 1] + r)
    }
}
