//! The rotating-frame three-mode model: effective Hamiltonian, Lindblad
//! channels and the (possibly ramped) Liouvillian.

mod liouvillian;
mod ramp;
mod rwa;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, HilbertSpace, Ladder, Mode, Operator};

pub use liouvillian::{build_liouvillian, build_liouvillian_in, left_right_superop, Dissipator, Liouvillian, SuperBasis};
pub use ramp::{RampKind, RampSchedule};
pub use rwa::{validate_rwa, RwaCheck, RwaReport};

/// Many-photon coupling: a constant or a switch-on schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coupling {
    Constant(f64),
    Ramp(RampSchedule),
}

impl Coupling {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Coupling::Constant(g) => *g,
            Coupling::Ramp(r) => r.value_at(t),
        }
    }

    pub fn final_value(&self) -> f64 {
        match self {
            Coupling::Constant(g) => *g,
            Coupling::Ramp(r) => r.g_final,
        }
    }

    pub fn schedule(&self) -> RampSchedule {
        match self {
            Coupling::Constant(g) => RampSchedule::constant(*g),
            Coupling::Ramp(r) => r.clone(),
        }
    }
}

/// Lab-frame frequencies, used only to check the rotating-wave approximation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabFrame {
    pub omega_c: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub omega_m: f64,
}

fn one() -> f64 {
    1.0
}

fn half_pi() -> f64 {
    std::f64::consts::FRAC_PI_2
}

/// Physical parameters. Rates and couplings are in units of `κ₊` when
/// `kappa_plus = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Single-photon optomechanical coupling.
    pub g: f64,
    /// Many-photon (drive-enhanced) coupling.
    #[serde(rename = "G")]
    pub coupling: Coupling,
    /// `δΩ = 2J − ω_m`; may be negative.
    pub delta_omega: f64,
    #[serde(default = "one")]
    pub kappa_plus: f64,
    #[serde(default)]
    pub kappa_minus: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub n_th: f64,
    /// Homodyne quadrature angle.
    #[serde(default = "half_pi")]
    pub alpha: f64,
    /// Measurement efficiency.
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab_frame: Option<LabFrame>,
}

impl SystemParams {
    /// Ideal-dissipation parameters with a constant coupling, `κ₊ = 1`.
    pub fn ideal(g: f64, coupling: f64, delta_omega: f64) -> Self {
        SystemParams {
            g,
            coupling: Coupling::Constant(coupling),
            delta_omega,
            kappa_plus: 1.0,
            kappa_minus: 0.0,
            gamma: 0.0,
            n_th: 0.0,
            alpha: half_pi(),
            epsilon: 1.0,
            lab_frame: None,
        }
    }

    pub fn with_coupling(mut self, coupling: Coupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("g", self.g),
            ("delta_omega", self.delta_omega),
            ("kappa_plus", self.kappa_plus),
            ("kappa_minus", self.kappa_minus),
            ("gamma", self.gamma),
            ("n_th", self.n_th),
            ("alpha", self.alpha),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("kappa_plus", self.kappa_plus),
            ("kappa_minus", self.kappa_minus),
            ("gamma", self.gamma),
            ("n_th", self.n_th),
        ] {
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "measurement efficiency must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if let Coupling::Ramp(r) = &self.coupling {
            r.validate()?;
        }
        Ok(())
    }

    /// True when `N_tot` is exactly conserved (no auxiliary or mechanical loss).
    pub fn conserves_n_tot(&self) -> bool {
        self.kappa_minus == 0.0 && self.gamma == 0.0
    }

    /// `τ_meas = κ₊/g²`.
    pub fn tau_meas(&self) -> f64 {
        self.kappa_plus / (self.g * self.g)
    }

    /// Small parameter `η = 2g/κ₊`.
    pub fn eta(&self) -> f64 {
        2.0 * self.g / self.kappa_plus
    }
}

/// `H = (δΩ/2)(c₋†c₋ − b†b) − G(c₋†b + b†c₋) − g(b†c₊†c₋ + c₋†c₊b)`.
pub fn build_h_eff(space: &Arc<HilbertSpace>, params: &SystemParams, g_value: f64) -> Operator {
    use Ladder::{Create, Destroy};
    use Mode::{Mech, Minus, Plus};
    let detuning = &fock::number_op(space, Minus) - &fock::number_op(space, Mech);
    let beam_splitter = &fock::ladder_monomial(space, &[Create(Minus), Destroy(Mech)])
        + &fock::ladder_monomial(space, &[Create(Mech), Destroy(Minus)]);
    let three_wave = &fock::ladder_monomial(space, &[Create(Mech), Create(Plus), Destroy(Minus)])
        + &fock::ladder_monomial(space, &[Create(Minus), Destroy(Plus), Destroy(Mech)]);
    let h = &detuning.scale(0.5 * params.delta_omega) - &beam_splitter.scale(g_value);
    &h - &three_wave.scale(params.g)
}

/// The four channels `κ₊D[c₊]`, `κ₋D[c₋]`, `γ(n_th+1)D[b]`, `γ n_th D[b†]`,
/// in that order. Zero-rate channels are kept.
pub fn build_dissipators(space: &Arc<HilbertSpace>, params: &SystemParams) -> Vec<Dissipator> {
    vec![
        Dissipator {
            label: "kappa_plus",
            rate: params.kappa_plus,
            op: fock::annihilator(space, Mode::Plus),
        },
        Dissipator {
            label: "kappa_minus",
            rate: params.kappa_minus,
            op: fock::annihilator(space, Mode::Minus),
        },
        Dissipator {
            label: "mech_cooling",
            rate: params.gamma * (params.n_th + 1.0),
            op: fock::annihilator(space, Mode::Mech),
        },
        Dissipator {
            label: "mech_heating",
            rate: params.gamma * params.n_th,
            op: fock::creator(space, Mode::Mech),
        },
    ]
}

/// Checks that the space can represent the dissipative channels: on a
/// single-`N_tot` block any `N_tot`-changing channel would vanish silently.
pub fn check_space_supports(space: &HilbertSpace, params: &SystemParams) -> Result<()> {
    if space.is_single_block() && !params.conserves_n_tot() {
        return Err(Error::InvalidParameter(
            "kappa_minus and gamma must vanish on a single excitation block".into(),
        ));
    }
    Ok(())
}

/// Liouvillian of the model at coupling `g_value` on the given sector.
pub fn model_liouvillian(
    space: &Arc<HilbertSpace>,
    params: &SystemParams,
    g_value: f64,
    basis: &Arc<SuperBasis>,
) -> Result<Liouvillian> {
    check_space_supports(space, params)?;
    let h = build_h_eff(space, params, g_value);
    build_liouvillian_in(basis.clone(), &h, &build_dissipators(space, params))
}

/// One piecewise-constant interval of a ramped generator.
#[derive(Clone, Debug)]
pub struct LiouvillianSlice {
    pub start: f64,
    pub end: f64,
    pub coupling: f64,
    pub liouvillian: Liouvillian,
}

/// Piecewise-constant generator: ramp slices on `[0, ramp_end)` followed by
/// the final generator for all later times.
#[derive(Clone, Debug)]
pub struct TimeDependentLiouvillian {
    pub slices: Vec<LiouvillianSlice>,
    pub tail: Liouvillian,
    pub tail_coupling: f64,
}

impl TimeDependentLiouvillian {
    pub fn constant(l: Liouvillian, coupling: f64) -> Self {
        TimeDependentLiouvillian { slices: Vec::new(), tail: l, tail_coupling: coupling }
    }

    pub fn ramp_end(&self) -> f64 {
        self.slices.last().map_or(0.0, |s| s.end)
    }

    pub fn basis(&self) -> &Arc<SuperBasis> {
        self.tail.basis()
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        self.tail.space()
    }

    /// Largest trace residual over all slices and the tail.
    pub fn trace_residual(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| s.liouvillian.trace_residual())
            .fold(self.tail.trace_residual(), f64::max)
    }
}

/// Slices the coupling schedule at interval midpoints and builds one
/// Liouvillian per slice.
pub fn build_time_dependent(
    space: &Arc<HilbertSpace>,
    params: &SystemParams,
    basis: &Arc<SuperBasis>,
) -> Result<TimeDependentLiouvillian> {
    params.validate()?;
    let schedule = params.coupling.schedule();
    let slices = schedule
        .slices()
        .into_iter()
        .map(|(start, end, coupling)| {
            Ok(LiouvillianSlice {
                start,
                end,
                coupling,
                liouvillian: model_liouvillian(space, params, coupling, basis)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tail_coupling = schedule.g_final;
    let tail = model_liouvillian(space, params, tail_coupling, basis)?;
    Ok(TimeDependentLiouvillian { slices, tail, tail_coupling })
}
