use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampKind {
    Constant,
    Linear,
    Exponential,
}

fn default_floor_ratio() -> f64 {
    0.01
}

fn default_slices() -> usize {
    16
}

/// Switch-on schedule for the many-photon coupling `G(t)`.
///
/// * `linear`: `G(t) = G_f · t/t_f`
/// * `exponential`: `G(t) = G_f · r₀^{1 − t/t_f}`
///
/// and `G(t) = G_f` for `t ≥ t_f`. The schedule is discretized into `slices`
/// piecewise-constant intervals sampled at their midpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampSchedule {
    pub kind: RampKind,
    pub g_final: f64,
    #[serde(default)]
    pub duration: f64,
    #[serde(default = "default_floor_ratio")]
    pub floor_ratio: f64,
    #[serde(default = "default_slices")]
    pub slices: usize,
}

impl RampSchedule {
    pub fn constant(g: f64) -> Self {
        RampSchedule { kind: RampKind::Constant, g_final: g, duration: 0.0, floor_ratio: 1.0, slices: 1 }
    }

    pub fn linear(g_final: f64, duration: f64, slices: usize) -> Self {
        RampSchedule { kind: RampKind::Linear, g_final, duration, floor_ratio: 0.0, slices }
    }

    pub fn exponential(g_final: f64, duration: f64, floor_ratio: f64, slices: usize) -> Self {
        RampSchedule { kind: RampKind::Exponential, g_final, duration, floor_ratio, slices }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.g_final.is_finite() {
            return Err(Error::InvalidParameter("ramp g_final must be finite".into()));
        }
        if self.kind == RampKind::Constant {
            return Ok(());
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ramp duration must be positive, got {}",
                self.duration
            )));
        }
        if self.slices == 0 {
            return Err(Error::InvalidParameter("ramp needs at least one slice".into()));
        }
        if self.g_final < 0.0 {
            return Err(Error::NonMonotonicRamp(format!(
                "g_final = {} would make the ramp decrease from G(0) = 0",
                self.g_final
            )));
        }
        if self.kind == RampKind::Exponential && !(self.floor_ratio > 0.0 && self.floor_ratio <= 1.0) {
            return Err(Error::NonMonotonicRamp(format!(
                "exponential floor ratio must lie in (0, 1], got {}",
                self.floor_ratio
            )));
        }
        Ok(())
    }

    /// Time at which the coupling reaches its final value.
    pub fn end(&self) -> f64 {
        match self.kind {
            RampKind::Constant => 0.0,
            _ => self.duration,
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        if self.kind == RampKind::Constant || t >= self.duration {
            return self.g_final;
        }
        let s = (t / self.duration).max(0.0);
        match self.kind {
            RampKind::Linear => self.g_final * s,
            RampKind::Exponential => self.g_final * self.floor_ratio.powf(1.0 - s),
            RampKind::Constant => unreachable!(),
        }
    }

    /// Piecewise-constant intervals `(start, end, G at midpoint)` covering
    /// `[0, end())`. Empty for a constant schedule.
    pub fn slices(&self) -> Vec<(f64, f64, f64)> {
        if self.kind == RampKind::Constant {
            return Vec::new();
        }
        let h = self.duration / self.slices as f64;
        (0..self.slices)
            .map(|k| {
                let a = k as f64 * h;
                let b = if k + 1 == self.slices { self.duration } else { (k + 1) as f64 * h };
                (a, b, self.value_at(0.5 * (a + b)))
            })
            .collect()
    }
}
