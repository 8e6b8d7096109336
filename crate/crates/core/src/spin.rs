//! Effective-spin picture of the `(ĉ₋, b̂)` pair at fixed `N_tot`:
//! `Ĵ₊ = b̂†ĉ₋`, `Ĵ_z = ½(n̂_b − n̂₋)`, spin length `j = N_tot/2`.
//!
//! The coherent part of the model reads `−B⃗·Ĵ` with `B⃗ = (2G, 0, δΩ)`.
//! Eliminating the primary mode at small `η = 2g/κ₊` leaves a spin master
//! equation with dephasing along `e_B`, raising and lowering along `e_B`, and
//! a thermal steady state.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, HilbertSpace, Ladder, Mode, Operator};
use crate::model::{build_liouvillian, Dissipator, Liouvillian, SystemParams};
use crate::C64;

/// `B⃗ = (B_x, 0, B_z)` with `B_x = 2G`, `B_z = δΩ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveField {
    pub bx: f64,
    pub bz: f64,
    pub b: f64,
}

impl EffectiveField {
    pub fn new(coupling: f64, delta_omega: f64) -> Self {
        let bx = 2.0 * coupling;
        let bz = delta_omega;
        EffectiveField { bx, bz, b: bx.hypot(bz) }
    }

    /// Field at the final coupling of `params`.
    pub fn from_params(params: &SystemParams) -> Self {
        Self::new(params.coupling.final_value(), params.delta_omega)
    }

    /// Unit vector `e_B`; `e_z` for a vanishing field.
    pub fn unit(&self) -> [f64; 3] {
        if self.b == 0.0 {
            [0.0, 0.0, 1.0]
        } else {
            [self.bx / self.b, 0.0, self.bz / self.b]
        }
    }

    /// Polar angle of `e_B` from `e_z`, towards `e_x`.
    pub fn theta(&self) -> f64 {
        self.bx.atan2(self.bz)
    }
}

/// Spin operators realized on a Hilbert space, plus the rotated `e_B` frame.
#[derive(Clone, Debug)]
pub struct SpinBlock {
    space: Arc<HilbertSpace>,
    pub jx: Operator,
    pub jy: Operator,
    pub jz: Operator,
    pub jp: Operator,
    pub jm: Operator,
    /// `J_∥ = e_B·Ĵ`.
    pub j_par: Operator,
    /// Raising and lowering operators for `J_∥`.
    pub jp_par: Operator,
    pub jm_par: Operator,
    /// `J′_x`; with `J′_y = J_y` and `J_∥` it forms a right-handed frame.
    pub jx_par: Operator,
    pub j2: Operator,
}

impl SpinBlock {
    /// Spin operators on any space of the three-mode model; they act as
    /// identity on the primary mode.
    pub fn on_space(space: &Arc<HilbertSpace>, field: &EffectiveField) -> Self {
        use Ladder::{Create, Destroy};
        let jp = fock::ladder_monomial(space, &[Create(Mode::Mech), Destroy(Mode::Minus)]);
        let jm = jp.dagger();
        let jx = (&jp + &jm).scale(0.5);
        let jy = (&jp - &jm).scale(C64::new(0.0, -0.5));
        let jz = (&fock::number_op(space, Mode::Mech) - &fock::number_op(space, Mode::Minus)).scale(0.5);
        let (s, c) = field.theta().sin_cos();
        let j_par = &jx.scale(s) + &jz.scale(c);
        let jx_par = &jx.scale(c) - &jz.scale(s);
        let jp_par = &jx_par + &jy.scale(C64::new(0.0, 1.0));
        let jm_par = jp_par.dagger();
        let j2 = &(&(&jx * &jx) + &(&jy * &jy)) + &(&jz * &jz);
        SpinBlock { space: space.clone(), jx, jy, jz, jp, jm, j_par, jp_par, jm_par, jx_par, j2 }
    }

    /// The bare spin of length `n_tot/2`: the block `N_tot = n_tot` without
    /// the primary mode, basis ordered by `n₋` (so `J_z` descends).
    pub fn block(n_tot: usize, field: &EffectiveField) -> Result<Self> {
        Ok(Self::on_space(&HilbertSpace::excitation_block(1, n_tot)?, field))
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    /// Spin length when the space is a single excitation block.
    pub fn j(&self) -> Option<f64> {
        self.space.is_single_block().then(|| 0.5 * self.space.n_tot_min() as f64)
    }
}

/// `Ĵ_c = v⃗·Ĵ` with
/// `v⃗ = [B_x B⃗ + (κ₊/2) e₊×B⃗ + (κ₊/2)² e₊] / ((κ₊/2)² + B²)`, `e₊ = e_x + i e_y`.
pub fn j_c_vector(field: &EffectiveField, kappa_plus: f64) -> [C64; 3] {
    let k = 0.5 * kappa_plus;
    let den = k * k + field.b * field.b;
    let (bx, bz) = (field.bx, field.bz);
    // e₊ × B⃗ = (i B_z, −B_z, −i B_x)
    [
        C64::new(bx * bx + k * k, k * bz) / den,
        C64::new(-k * bz, k * k) / den,
        C64::new(bx * bz, -k * bx) / den,
    ]
}

pub fn j_c_operator(block: &SpinBlock, field: &EffectiveField, kappa_plus: f64) -> Operator {
    let [vx, vy, vz] = j_c_vector(field, kappa_plus);
    &(&block.jx.scale(vx) + &block.jy.scale(vy)) + &block.jz.scale(vz)
}

/// Rates and coefficients of the reduced spin master equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinRates {
    pub gamma_phi: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    /// Coefficient of `J_∥` in `Ĥ₁`.
    pub h1_parallel: f64,
    /// Coefficient of `Ĵ² − J_∥²` in `Ĥ₁`.
    pub h1_transverse: f64,
    /// `B/T_eff`; `+∞` flags zero temperature, `0` infinite temperature.
    pub beta_b: f64,
    pub eta: f64,
}

impl SpinRates {
    pub fn is_zero_temperature(&self) -> bool {
        self.beta_b.is_infinite()
    }

    pub fn is_infinite_temperature(&self) -> bool {
        self.beta_b == 0.0
    }

    /// `T_eff` in the units of `B`; infinite at zero `B_z`.
    pub fn t_eff(&self, field: &EffectiveField) -> f64 {
        field.b / self.beta_b
    }

    /// Relaxation rate of `⟨J_∥⟩` for spin ½, `½(Γ₊ + Γ₋)`.
    pub fn relaxation_rate(&self) -> f64 {
        0.5 * (self.gamma_plus + self.gamma_minus)
    }

    /// Decay rate of the transverse components for spin ½,
    /// `½Γ_φ + ¼(Γ₊ + Γ₋)`.
    pub fn transverse_rate(&self) -> f64 {
        0.5 * self.gamma_phi + 0.5 * self.relaxation_rate()
    }
}

pub fn spin_rates(field: &EffectiveField, params: &SystemParams) -> Result<SpinRates> {
    let EffectiveField { bx, bz, b } = *field;
    if b == 0.0 {
        return Err(Error::Undefined("spin rates need a non-zero effective field".into()));
    }
    let (g, kappa) = (params.g, params.kappa_plus);
    if kappa <= 0.0 {
        return Err(Error::InvalidParameter("kappa_plus must be positive".into()));
    }
    let b2 = b * b;
    let lorentz = g * g / (b2 + 0.25 * kappa * kappa);
    let c1 = lorentz * b;
    Ok(SpinRates {
        gamma_phi: bx * bx / b2 * 4.0 * g * g / kappa,
        gamma_plus: (b + bz).powi(2) / (2.0 * b2) * lorentz * kappa,
        gamma_minus: (b - bz).powi(2) / (2.0 * b2) * lorentz * kappa,
        h1_parallel: c1 * bz / b,
        h1_transverse: -c1 * (b2 + bz * bz) / (2.0 * b2),
        beta_b: 2.0 * ((b + bz) / (b - bz)).ln(),
        eta: params.eta(),
    })
}

/// Ratio `B / (2g²/κ₊)`; the secular approximation wants it large.
pub fn secular_ratio(field: &EffectiveField, params: &SystemParams) -> f64 {
    field.b * params.kappa_plus / (2.0 * params.g * params.g)
}

/// Gibbs weights `∝ e^{x m}` for `m = −j, …, j` (`two_j + 1` entries,
/// ascending `m`).
pub fn gibbs_weights(two_j: usize, beta_b: f64) -> Vec<f64> {
    let n = two_j + 1;
    if beta_b == f64::INFINITY {
        let mut w = vec![0.0; n];
        w[n - 1] = 1.0;
        return w;
    }
    if beta_b == f64::NEG_INFINITY {
        let mut w = vec![0.0; n];
        w[0] = 1.0;
        return w;
    }
    let j = 0.5 * two_j as f64;
    let shift = beta_b.abs() * j;
    let raw: Vec<f64> = (0..n).map(|k| (beta_b * (k as f64 - j) - shift).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

/// Thermal average `⟨⟨J_∥⟩⟩` for spin `two_j/2`.
pub fn thermal_parallel(two_j: usize, beta_b: f64) -> f64 {
    let j = 0.5 * two_j as f64;
    gibbs_weights(two_j, beta_b)
        .iter()
        .enumerate()
        .map(|(k, w)| w * (k as f64 - j))
        .sum()
}

/// Gibbs state `e^{x J_∥}/Z` on a bare spin block.
pub fn thermal_spin_state(block: &SpinBlock, beta_b: f64) -> Result<DensityMatrix> {
    let space = block.space();
    if !space.is_single_block() || space.dims()[0] != 1 {
        return Err(Error::InvalidDimension("thermal spin states live on a bare spin block".into()));
    }
    let (vals, vecs) = block
        .j_par
        .matrix()
        .eigh(UPLO::Lower)
        .map_err(|e| Error::linalg("eigh", e))?;
    let weights = gibbs_weights(vals.len() - 1, beta_b);
    let n = vals.len();
    let mut rho = Array2::<C64>::zeros((n, n));
    for (k, w) in weights.iter().enumerate() {
        let col = vecs.column(k);
        for a in 0..n {
            for b in 0..n {
                rho[[a, b]] += col[a] * col[b].conj() * *w;
            }
        }
    }
    DensityMatrix::new(space.clone(), rho, 1e-10)
}

/// Steady `⟨Ĵ_c⟩ = (B_x/B)⟨⟨J_∥⟩⟩` on the block `N_tot = n_b`.
pub fn steady_jc(n_b: usize, params: &SystemParams) -> Result<f64> {
    steady_jc_at(n_b, &EffectiveField::from_params(params), params)
}

pub fn steady_jc_at(n_b: usize, field: &EffectiveField, params: &SystemParams) -> Result<f64> {
    if n_b == 0 || field.bx == 0.0 {
        return Ok(0.0);
    }
    let rates = spin_rates(field, params)?;
    Ok(field.bx / field.b * thermal_parallel(n_b, rates.beta_b))
}

/// Long-time steady-protocol estimator value `n·f[n] = ⟨Ĵ_c⟩_n / ⟨Ĵ_c⟩_1`.
pub fn estimator_target(n_b: usize, params: &SystemParams) -> Result<f64> {
    let one = steady_jc(1, params)?;
    if one == 0.0 {
        return Err(Error::Undefined("no steady signal for a single phonon".into()));
    }
    Ok(steady_jc(n_b, params)? / one)
}

/// `f[n] = ⟨Ĵ_c⟩_n / (n ⟨Ĵ_c⟩_1)` for `n ≥ 1`.
pub fn f_factor(n_b: usize, params: &SystemParams) -> Result<f64> {
    if n_b == 0 {
        return Err(Error::Undefined("f[0] is not defined".into()));
    }
    Ok(estimator_target(n_b, params)? / n_b as f64)
}

/// Reduced generator `i[ρ̃, Ĥ₁] + Γ_φ D[J_∥] + Γ₊ D[J′₊] + Γ₋ D[J′₋]` in the
/// frame co-rotating with `B⃗`, with the jump operators normalized as
/// `J′± = (J′_x ± iJ′_y)/√2`. With this normalization `⟨J_∥⟩` of a spin ½
/// relaxes at `½(Γ₊ + Γ₋)`, as the full three-mode model does.
pub fn build_spin_liouvillian(
    block: &SpinBlock,
    field: &EffectiveField,
    params: &SystemParams,
) -> Result<Liouvillian> {
    let rates = spin_rates(field, params)?;
    let perp2 = &block.j2 - &(&block.j_par * &block.j_par);
    let h1 = &block.j_par.scale(rates.h1_parallel) + &perp2.scale(rates.h1_transverse);
    let diss = [
        Dissipator { label: "dephasing", rate: rates.gamma_phi, op: block.j_par.clone() },
        Dissipator { label: "raising", rate: rates.gamma_plus, op: block.jp_par.scale(FRAC_1_SQRT_2) },
        Dissipator { label: "lowering", rate: rates.gamma_minus, op: block.jm_par.scale(FRAC_1_SQRT_2) },
    ];
    build_liouvillian(&h1, &diss)
}

/// Partial trace over the primary mode onto the bare block `N_tot = n_tot`,
/// renormalized. Fails if the state has no weight on that block.
pub fn reduce_to_block(rho: &DensityMatrix, n_tot: usize) -> Result<DensityMatrix> {
    let target = HilbertSpace::excitation_block(1, n_tot)?;
    let src = rho.space();
    let m = rho.matrix();
    let n = target.len();
    let mut out = Array2::<C64>::zeros((n, n));
    for (a, &[_, nm_a, nb_a]) in target.basis().iter().enumerate() {
        for (b, &[_, nm_b, nb_b]) in target.basis().iter().enumerate() {
            for np in 0..src.dims()[0] {
                if let (Some(i), Some(k)) = (src.index_of([np, nm_a, nb_a]), src.index_of([np, nm_b, nb_b])) {
                    out[[a, b]] += m[[i, k]];
                }
            }
        }
    }
    let weight = out.diag().sum().re;
    if weight <= 1e-12 {
        return Err(Error::InvalidState(format!("no weight on the N_tot = {n_tot} block")));
    }
    DensityMatrix::new_unchecked(target, out.mapv(|z| z / weight))
}
