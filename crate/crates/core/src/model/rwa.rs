use std::fmt;

use super::SystemParams;

/// One `J / x` ratio of the rotating-wave check.
#[derive(Clone, Debug, PartialEq)]
pub struct RwaCheck {
    pub quantity: &'static str,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RwaReport {
    /// No lab-frame frequencies were supplied.
    NotCheckable,
    Checked { threshold: f64, checks: Vec<RwaCheck> },
}

impl RwaReport {
    pub fn passes(&self) -> Option<bool> {
        match self {
            RwaReport::NotCheckable => None,
            RwaReport::Checked { checks, .. } => Some(checks.iter().all(|c| c.pass)),
        }
    }
}

impl fmt::Display for RwaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RwaReport::NotCheckable => {
                writeln!(f, "rotating-wave check: not checkable (no lab_frame metadata)")
            }
            RwaReport::Checked { threshold, checks } => {
                writeln!(f, "rotating-wave check (threshold {threshold}):")?;
                for c in checks {
                    writeln!(
                        f,
                        "  {:<14} {:>14.6e}  {}",
                        c.quantity,
                        c.ratio,
                        if c.pass { "pass" } else { "FAIL" }
                    )?;
                }
                Ok(())
            }
        }
    }
}

/// Compares the mode splitting `J` against every rotating-frame scale. The
/// coupling uses its final (largest) value.
pub fn validate_rwa(params: &SystemParams, threshold: f64) -> RwaReport {
    let Some(lab) = &params.lab_frame else {
        return RwaReport::NotCheckable;
    };
    let scales = [
        ("J/|delta_omega|", params.delta_omega.abs()),
        ("J/G", params.coupling.final_value().abs()),
        ("J/g", params.g.abs()),
        ("J/kappa_plus", params.kappa_plus),
    ];
    let checks = scales
        .into_iter()
        .map(|(quantity, scale)| {
            let ratio = if scale == 0.0 { f64::INFINITY } else { lab.j / scale };
            RwaCheck { quantity, ratio, pass: ratio >= threshold }
        })
        .collect();
    RwaReport::Checked { threshold, checks }
}
