//! Homodyne readout of the primary output and the phonon-number estimator
//! built from it.
//!
//! The estimator is the time-averaged homodyne current divided by a
//! protocol-dependent prefactor `P`, so that a Fock state `n_b` gives a mean
//! near its steady-state target:
//!
//! * steady protocol: `P = √(8g²/κ₊) · GδΩ/(2G² + δΩ²)`,
//! * ramped protocol: `P = √(2g²/κ₊)`.

mod moments;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, HilbertSpace, Mode, Operator};
use crate::model::{build_time_dependent, Coupling, RampSchedule, SuperBasis, SystemParams};
use crate::propagate::{Evolver, PropagationMethod};
use crate::spin::{self, EffectiveField, SpinBlock};
use crate::C64;

pub use moments::{Homodyne, OutputMoments};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Steady,
    Ramped,
}

impl Protocol {
    pub fn prefactor(self, params: &SystemParams) -> f64 {
        let base = params.g * params.g / params.kappa_plus;
        match self {
            Protocol::Steady => {
                let gf = params.coupling.final_value();
                let d = params.delta_omega;
                let den = 2.0 * gf * gf + d * d;
                if den == 0.0 {
                    0.0
                } else {
                    (8.0 * base).sqrt() * gf * d / den
                }
            }
            Protocol::Ramped => (2.0 * base).sqrt(),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Steady => "steady",
            Protocol::Ramped => "ramped",
        })
    }
}

/// Cutoffs for the dissipative model: `n₊ < plus_dim`, `n₋ + n_b ≤ n_tot_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub plus_dim: usize,
    pub n_tot_max: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { plus_dim: 3, n_tot_max: 6 }
    }
}

/// Estimator statistics for one initial Fock state.
#[derive(Clone, Debug)]
pub struct MeasurementRecord {
    pub protocol: Protocol,
    pub n_b: usize,
    pub prefactor: f64,
    /// Absolute times and the integration window start.
    pub times: Vec<f64>,
    pub record_start: f64,
    /// Instantaneous `⟨X_out⟩`.
    pub mean_x: Vec<f64>,
    /// Mean and standard deviation of the time-averaged current
    /// `(1/T)∫X_out`, `T = t − record_start`.
    pub avg_mean: Vec<f64>,
    pub avg_std: Vec<f64>,
    /// `avg_mean/P` and `avg_std/P`; NaN when `P = 0`.
    pub n_meas_mean: Vec<f64>,
    pub n_meas_std: Vec<f64>,
    pub observables: Vec<(String, Vec<f64>)>,
    pub method: PropagationMethod,
    pub warnings: Vec<String>,
}

impl MeasurementRecord {
    fn from_moments(
        protocol: Protocol,
        n_b: usize,
        params: &SystemParams,
        m: OutputMoments,
        method: PropagationMethod,
    ) -> Self {
        let p = protocol.prefactor(params);
        let durations = m.durations();
        let avg_mean: Vec<f64> = durations
            .iter()
            .zip(&m.integrated_mean)
            .map(|(&d, &v)| if d > 0.0 { v / d } else { f64::NAN })
            .collect();
        let avg_std: Vec<f64> = durations
            .iter()
            .zip(&m.integrated_var)
            .map(|(&d, &v)| if d > 0.0 { v.max(0.0).sqrt() / d } else { f64::NAN })
            .collect();
        let scale = |v: &f64| if p != 0.0 { v / p } else { f64::NAN };
        let mut warnings = Vec::new();
        if (params.alpha - std::f64::consts::FRAC_PI_2).abs() > 1e-12 {
            warnings.push(format!(
                "quadrature angle {} differs from π/2; the estimator is normalized for π/2",
                params.alpha
            ));
        }
        MeasurementRecord {
            protocol,
            n_b,
            prefactor: p,
            times: m.times,
            record_start: m.record_start,
            mean_x: m.mean_x,
            n_meas_mean: avg_mean.iter().map(scale).collect(),
            n_meas_std: avg_std.iter().map(scale).collect(),
            avg_mean,
            avg_std,
            observables: m.observables.into_iter().map(|(n, v)| (n, v.into_iter().map(|z| z.re).collect())).collect(),
            method,
            warnings,
        }
    }

    pub fn durations(&self) -> Vec<f64> {
        self.times.iter().map(|t| t - self.record_start).collect()
    }

    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Estimator mean at grid index `k`; errors at zero integration time.
    pub fn estimator_mean(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.n_meas_mean[k])
    }

    /// Estimator variance at grid index `k`; errors at zero integration time.
    pub fn estimator_variance(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.n_meas_std[k].powi(2))
    }

    fn check_index(&self, k: usize) -> Result<()> {
        let t = *self.times.get(k).ok_or_else(|| Error::InvalidTimes(format!("no grid point {k}")))?;
        if t <= self.record_start {
            return Err(Error::InvalidTimes(format!(
                "estimator undefined at zero integration time (t = {t})"
            )));
        }
        Ok(())
    }
}

/// `⟨X_out⟩ = √2 Re[e^{iα}⟨c_out⟩] = −√(2κ₊) Re[e^{iα}⟨c₊⟩]`.
pub fn homodyne_mean(rho: &DensityMatrix, params: &SystemParams) -> Result<f64> {
    let c = fock::annihilator(rho.space(), Mode::Plus);
    let v = crate::propagate::expectation(rho, &c)?;
    Ok(-(2.0 * params.kappa_plus).sqrt() * (C64::from_polar(1.0, params.alpha) * v).re)
}

/// Estimator statistics for each initial Fock state `n_b`, starting in
/// `|0, 0, n_b⟩`. The ideal model uses the exact `N_tot` block of each
/// state; otherwise all states share one truncated space.
pub fn measure(
    params: &SystemParams,
    protocol: Protocol,
    truncation: Truncation,
    n_bs: &[usize],
    record_start: f64,
    times: &[f64],
) -> Result<Vec<MeasurementRecord>> {
    params.validate()?;
    if params.conserves_n_tot() {
        n_bs.iter()
            .map(|&n| {
                let space = HilbertSpace::excitation_block(truncation.plus_dim, n)?;
                let engine = prepare(&space, params)?;
                Ok(run_states(&engine, &space, params, protocol, &[n], record_start, times)?.remove(0))
            })
            .collect()
    } else {
        let cap = truncation.n_tot_max;
        if let Some(&n) = n_bs.iter().find(|&&n| n > cap) {
            return Err(Error::InvalidDimension(format!("n_b = {n} exceeds the excitation cap {cap}")));
        }
        let space = HilbertSpace::new([truncation.plus_dim, cap + 1, cap + 1], Some(cap))?;
        let engine = prepare(&space, params)?;
        run_states(&engine, &space, params, protocol, n_bs, record_start, times)
    }
}

fn prepare(space: &Arc<HilbertSpace>, params: &SystemParams) -> Result<Homodyne> {
    let basis = SuperBasis::populations_sector(space);
    let td = build_time_dependent(space, params, &basis)?;
    Homodyne::new(Evolver::new(&td), params)
}

fn run_states(
    engine: &Homodyne,
    space: &Arc<HilbertSpace>,
    params: &SystemParams,
    protocol: Protocol,
    n_bs: &[usize],
    record_start: f64,
    times: &[f64],
) -> Result<Vec<MeasurementRecord>> {
    let rho0s = n_bs.iter().map(|&n| fock::fock_state(space, [0, 0, n])).collect::<Result<Vec<_>>>()?;
    let n_tot = fock::n_tot_op(space);
    let n_mech = fock::number_op(space, Mode::Mech);
    let n_plus = fock::number_op(space, Mode::Plus);
    let sb = SpinBlock::on_space(space, &EffectiveField::from_params(params));
    let extras: [(&str, &Operator); 6] = [
        ("n_tot", &n_tot),
        ("n_b", &n_mech),
        ("n_plus", &n_plus),
        ("j_x", &sb.jx),
        ("j_y", &sb.jy),
        ("j_z", &sb.jz),
    ];
    let moments = engine.run_batch(&rho0s, record_start, times, &extras)?;
    let method = engine.evolver().method();
    Ok(n_bs
        .iter()
        .zip(moments)
        .map(|(&n, m)| MeasurementRecord::from_moments(protocol, n, params, m, method))
        .collect())
}

/// Earliest time at which `|Δmean| ≥ std_a + std_b`, linearly interpolated
/// between grid points. `None` if the records never separate.
pub fn separation_time(a: &MeasurementRecord, b: &MeasurementRecord) -> Option<f64> {
    let d: Vec<(f64, f64)> = a
        .durations()
        .into_iter()
        .enumerate()
        .filter(|&(_, t)| t > 0.0)
        .map(|(k, t)| {
            let gap = (a.avg_mean[k] - b.avg_mean[k]).abs() - (a.avg_std[k] + b.avg_std[k]);
            (t, gap)
        })
        .collect();
    let mut prev: Option<(f64, f64)> = None;
    for (t, gap) in d {
        if gap >= 0.0 {
            return Some(match prev {
                Some((t0, g0)) if g0 < 0.0 => t0 + (t - t0) * (-g0) / (gap - g0),
                _ => t,
            });
        }
        prev = Some((t, gap));
    }
    None
}

/// `t = ε⁻¹ j_n⁻² τ_meas` with `j_n = 4 Im[e^{iα}(J_c(n+1) − J_c(n))]`.
/// Infinite when the two states give the same signal.
pub fn resolution_time(n_b: usize, params: &SystemParams) -> Result<f64> {
    let lo = spin::steady_jc(n_b, params)?;
    let hi = spin::steady_jc(n_b + 1, params)?;
    let j = 4.0 * (C64::from_polar(1.0, params.alpha) * C64::new(hi - lo, 0.0)).im;
    if j == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(params.tau_meas() / (params.epsilon * j * j))
}

/// Comparison of the measurement rate with the phonon-number-changing rates.
#[derive(Clone, Debug, PartialEq)]
pub struct QndReport {
    pub measurement_rate: f64,
    pub kappa_minus: f64,
    pub heating_rate: f64,
    /// `C₁ = 4g²/(κ₊γ)`.
    pub cooperativity: f64,
    pub kappa_minus_margin: f64,
    pub heating_margin: f64,
    /// `100(2n_th + 1)`.
    pub cooperativity_threshold: f64,
}

impl QndReport {
    pub fn passes(&self) -> bool {
        self.cooperativity >= self.cooperativity_threshold
    }
}

impl fmt::Display for QndReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "measurement rate g^2/kappa+   {:.6e}", self.measurement_rate)?;
        writeln!(f, "kappa-                        {:.6e} (margin {:.3e})", self.kappa_minus, self.kappa_minus_margin)?;
        writeln!(f, "gamma (2 n_th + 1)            {:.6e} (margin {:.3e})", self.heating_rate, self.heating_margin)?;
        write!(
            f,
            "C1 = {:.6e}, required {:.6e}: {}",
            self.cooperativity,
            self.cooperativity_threshold,
            if self.passes() { "satisfied" } else { "violated" }
        )
    }
}

pub fn qnd_report(params: &SystemParams) -> QndReport {
    let rate = 1.0 / params.tau_meas();
    let heating = params.gamma * (2.0 * params.n_th + 1.0);
    let ratio = |a: f64, b: f64| if b == 0.0 { f64::INFINITY } else { a / b };
    QndReport {
        measurement_rate: rate,
        kappa_minus: params.kappa_minus,
        heating_rate: heating,
        cooperativity: ratio(4.0 * params.g * params.g, params.kappa_plus * params.gamma),
        kappa_minus_margin: ratio(rate, params.kappa_minus),
        heating_margin: ratio(rate, heating),
        cooperativity_threshold: 100.0 * (2.0 * params.n_th + 1.0),
    }
}

/// Exponential switch-on followed by homodyne readout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampedProtocol {
    pub g_final: f64,
    /// Ramp duration in units of `τ_meas`.
    pub duration_tau: f64,
    pub floor_ratio: f64,
    pub slices: usize,
}

impl Default for RampedProtocol {
    fn default() -> Self {
        RampedProtocol { g_final: 5.0, duration_tau: 0.1, floor_ratio: 0.01, slices: 2000 }
    }
}

impl RampedProtocol {
    pub fn duration(&self, params: &SystemParams) -> f64 {
        self.duration_tau * params.tau_meas()
    }

    pub fn apply(&self, params: &SystemParams) -> SystemParams {
        params.clone().with_coupling(Coupling::Ramp(RampSchedule::exponential(
            self.g_final,
            self.duration(params),
            self.floor_ratio,
            self.slices,
        )))
    }

    /// Checks `B⁻¹ ≪ κ₊⁻¹ ≪ t_ramp ≪ τ_meas` at the final field, with "≪"
    /// read as at least a factor of 3. Returns one message per violation.
    pub fn ordering_warnings(&self, params: &SystemParams) -> Vec<String> {
        let b = EffectiveField::new(self.g_final, params.delta_omega).b;
        let chain = [
            ("1/B", 1.0 / b),
            ("1/kappa+", 1.0 / params.kappa_plus),
            ("t_ramp", self.duration(params)),
            ("tau_meas", params.tau_meas()),
        ];
        chain
            .windows(2)
            .filter(|w| !(3.0 * w[0].1 <= w[1].1))
            .map(|w| format!("time-scale ordering violated: {} = {:.3e} is not << {} = {:.3e}", w[0].0, w[0].1, w[1].0, w[1].1))
            .collect()
    }
}

/// Spin direction after the ramp, as a unit vector of `⟨J⟩`.
#[derive(Clone, Debug)]
pub struct RampOutcome {
    pub records: Vec<MeasurementRecord>,
    pub spin_direction: Vec<[f64; 3]>,
    pub ramp_end: f64,
    pub warnings: Vec<String>,
}

/// Runs the ramped protocol for each `n_b`; `durations` are measured from
/// the end of the ramp.
pub fn ramped_protocol(
    params: &SystemParams,
    ramp: &RampedProtocol,
    truncation: Truncation,
    n_bs: &[usize],
    durations: &[f64],
) -> Result<RampOutcome> {
    let p = ramp.apply(params);
    let t_f = ramp.duration(params);
    let mut grid = vec![t_f];
    grid.extend(durations.iter().filter(|&&d| d > 0.0).map(|d| t_f + d));
    let records = measure(&p, Protocol::Ramped, truncation, n_bs, t_f, &grid)?;
    let mut spin_direction = Vec::with_capacity(records.len());
    for r in &records {
        let get = |n: &str| r.observable(n).map(|v| v[0]).unwrap_or(0.0);
        let v = [get("j_x"), get("j_y"), get("j_z")];
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        spin_direction.push(if norm > 0.0 { v.map(|x| x / norm) } else { v });
    }
    let mut warnings = ramp.ordering_warnings(params);
    for r in &records {
        warnings.extend(r.warnings.iter().cloned());
    }
    warnings.dedup();
    Ok(RampOutcome { records, spin_direction, ramp_end: t_f, warnings })
}
