//! Output-position smoothing: exponential moving average and the one-euro
//! filter. Smoothing runs after the kinematic filter, on emitted positions
//! only, so the filter state itself stays unbiased.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::TrackError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    /// Pass positions through unchanged.
    #[default]
    None,
    /// Fixed-coefficient exponential moving average.
    Ema,
    /// Adaptive low-pass whose cutoff rises with signal speed.
    OneEuro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    pub kind: SmootherKind,
    pub ema_alpha: f64,
    pub min_cutoff: f64,
    pub beta: f64,
    pub d_cutoff: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            kind: SmootherKind::None,
            ema_alpha: 0.5,
            min_cutoff: 1.0,
            beta: 0.05,
            d_cutoff: 1.0,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return Err(TrackError::BadEmaAlpha(self.ema_alpha));
        }
        for (name, value) in [
            ("min_cutoff", self.min_cutoff),
            ("d_cutoff", self.d_cutoff),
        ] {
            if !(value > 0.0) {
                return Err(TrackError::BadParam { name, value });
            }
        }
        if !(self.beta >= 0.0) {
            return Err(TrackError::BadParam {
                name: "beta",
                value: self.beta,
            });
        }
        Ok(())
    }
}

/// First-order low-pass step: a = 1/(1 + τ/Te) with τ = 1/(2π·cutoff).
fn lowpass_alpha(cutoff: f64, te: f64) -> f64 {
    let tau = 1.0 / (2.0 * std::f64::consts::PI * cutoff);
    1.0 / (1.0 + tau / te)
}

#[derive(Debug, Clone)]
enum AxisState {
    None,
    Ema {
        alpha: f64,
        prev: Option<f64>,
    },
    OneEuro {
        min_cutoff: f64,
        beta: f64,
        d_cutoff: f64,
        /// (last filtered value, last filtered derivative).
        prev: Option<(f64, f64)>,
    },
}

impl AxisState {
    fn sample(&mut self, x: f64, te: f64) -> f64 {
        match self {
            AxisState::None => x,
            AxisState::Ema { alpha, prev } => {
                let y = match *prev {
                    None => x,
                    Some(p) => *alpha * x + (1.0 - *alpha) * p,
                };
                *prev = Some(y);
                y
            }
            AxisState::OneEuro {
                min_cutoff,
                beta,
                d_cutoff,
                prev,
            } => match *prev {
                None => {
                    *prev = Some((x, 0.0));
                    x
                }
                Some((x_hat, dx_hat)) => {
                    let dx = (x - x_hat) / te;
                    let ad = lowpass_alpha(*d_cutoff, te);
                    let dx_hat = ad * dx + (1.0 - ad) * dx_hat;
                    let cutoff = *min_cutoff + *beta * dx_hat.abs();
                    let a = lowpass_alpha(cutoff, te);
                    let x_hat = a * x + (1.0 - a) * x_hat;
                    *prev = Some((x_hat, dx_hat));
                    x_hat
                }
            },
        }
    }
}

/// Per-track smoother over the three world axes.
#[derive(Debug, Clone)]
pub(crate) struct PointSmoother {
    axes: [AxisState; 3],
    last_t: Option<f64>,
}

impl PointSmoother {
    pub fn new(cfg: &SmootherConfig) -> Self {
        let axis = || match cfg.kind {
            SmootherKind::None => AxisState::None,
            SmootherKind::Ema => AxisState::Ema {
                alpha: cfg.ema_alpha,
                prev: None,
            },
            SmootherKind::OneEuro => AxisState::OneEuro {
                min_cutoff: cfg.min_cutoff,
                beta: cfg.beta,
                d_cutoff: cfg.d_cutoff,
                prev: None,
            },
        };
        Self {
            axes: [axis(), axis(), axis()],
            last_t: None,
        }
    }

    pub fn sample(&mut self, p: Point3<f64>, t: f64) -> Point3<f64> {
        let te = match self.last_t {
            Some(prev) => (t - prev).max(1e-9),
            None => 1e-9,
        };
        self.last_t = Some(t);
        Point3::new(
            self.axes[0].sample(p.x, te),
            self.axes[1].sample(p.y, te),
            self.axes[2].sample(p.z, te),
        )
    }
}
