//! First and second moments of the time-integrated homodyne current.
//!
//! With `Y = e^{iα}c₊`, `X_c = (Y + Y†)/√2` and `𝒥ρ = (Yρ + ρY†)/√2`, the
//! integrated output `I(t) = ∫ X_out` has
//!
//! * `⟨I⟩ = −√κ M`, `M = ∫ Tr[X_c ρ]`,
//! * `Var I = t/2 + 2κ Q − κ M²`, `Q = ∫∫_{s<u} Tr[X_c e^{L(u−s)} 𝒥ρ(s)]`.
//!
//! Both integrals follow from the linear system
//! `σ' = Lσ + 𝒥ρ`, `M' = Tr[X_c ρ]`, `Q' = Tr[X_c σ]`, which is integrated
//! exactly on the diagonalized tail and by Taylor steps on ramp slices.

use std::collections::HashMap;
use std::ops::AddAssign;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, Mode, Operator};
use crate::linalg;
use crate::model::{left_right_superop, SystemParams};
use crate::propagate::{Evolver, Propagator, Spectral};
use crate::C64;

/// `(ρ, σ, M, Q)` for a batch of initial states, one per column.
#[derive(Clone, Debug)]
struct Augmented {
    rho: Array2<C64>,
    sigma: Array2<C64>,
    m: Array1<C64>,
    q: Array1<C64>,
}

impl AddAssign<&Augmented> for Augmented {
    fn add_assign(&mut self, rhs: &Augmented) {
        self.rho += &rhs.rho;
        self.sigma += &rhs.sigma;
        self.m += &rhs.m;
        self.q += &rhs.q;
    }
}

fn l1<D: ndarray::Dimension>(v: &ndarray::Array<C64, D>) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

fn aug_norm(a: &Augmented) -> f64 {
    l1(&a.rho) + l1(&a.sigma) + l1(&a.m) + l1(&a.q)
}

fn row_times(v: &Array1<C64>, a: &Array2<C64>) -> Array1<C64> {
    v.view().insert_axis(Axis(0)).dot(a).index_axis_move(Axis(0), 0)
}

fn scale_rows(d: &Array1<C64>, a: &Array2<C64>) -> Array2<C64> {
    a * &d.view().insert_axis(Axis(1))
}

/// Eigenbasis data for the tail generator.
#[derive(Debug)]
struct TailBasis {
    spectral: Spectral,
    /// `V⁻¹ S_𝒥 V`.
    j_hat: Array2<C64>,
    /// `x·V` for the `X_c` functional `x`.
    x_v: Array1<C64>,
}

/// Cached one-step maps for a fixed step `h` in the eigenbasis.
struct StepCache {
    decay: Array1<C64>,
    /// `h·dd1(λ_k h, 0)`.
    d10: Array1<C64>,
    /// `h·Ĵ ∘ dd1(λ_k h, λ_m h)`.
    jd1: Array2<C64>,
    /// `h²·Σ_k x_k Ĵ_km dd2(λ_k h, λ_m h, 0)`.
    x_jd2: Array1<C64>,
}

impl TailBasis {
    fn step_cache(&self, h: f64) -> StepCache {
        let lam = self.spectral.values().mapv(|z| z * h);
        let n = lam.len();
        let zero = C64::new(0.0, 0.0);
        let decay = lam.mapv(|z| z.exp());
        let d10 = lam.mapv(|z| linalg::dd1(z, zero) * h);
        let mut jd1 = Array2::<C64>::zeros((n, n));
        let mut x_jd2 = Array1::<C64>::zeros(n);
        for k in 0..n {
            let xk = self.x_v[k];
            for m in 0..n {
                let j = self.j_hat[[k, m]];
                if j.norm_sqr() == 0.0 {
                    continue;
                }
                jd1[[k, m]] = j * linalg::dd1(lam[k], lam[m]) * h;
                if xk.norm_sqr() != 0.0 {
                    x_jd2[m] += xk * j * linalg::dd2(lam[k], lam[m], zero) * (h * h);
                }
            }
        }
        StepCache { decay, d10, jd1, x_jd2 }
    }
}

/// `a·b` for a sparse `a`.
fn sparse_times(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let mut out = Array2::<C64>::zeros((a.nrows(), b.ncols()));
    for ((i, k), &z) in a.indexed_iter() {
        if z.norm_sqr() != 0.0 {
            out.row_mut(i).scaled_add(z, &b.row(k));
        }
    }
    out
}

/// Moments of the integrated homodyne record on a time grid.
#[derive(Clone, Debug)]
pub struct OutputMoments {
    /// Absolute times.
    pub times: Vec<f64>,
    /// Start of the integration window.
    pub record_start: f64,
    /// Instantaneous `⟨X_out⟩`.
    pub mean_x: Vec<f64>,
    /// `⟨∫ X_out⟩` over `[record_start, t]`.
    pub integrated_mean: Vec<f64>,
    /// `Var ∫ X_out` over `[record_start, t]`.
    pub integrated_var: Vec<f64>,
    /// Extra expectation values `Tr[A ρ(t)]`.
    pub observables: Vec<(String, Vec<C64>)>,
}

impl OutputMoments {
    pub fn durations(&self) -> Vec<f64> {
        self.times.iter().map(|t| t - self.record_start).collect()
    }
}

/// Homodyne detection of the `c₊` output on a prepared evolver.
#[derive(Debug)]
pub struct Homodyne {
    ev: Evolver,
    kappa: f64,
    /// Matrix of `𝒥` on the evolver's sector.
    s_j: Array2<C64>,
    /// Functional `Tr[X_c ·]`.
    x: Array1<C64>,
    bound_extra: f64,
    tail: Option<TailBasis>,
}

impl Homodyne {
    pub fn new(ev: Evolver, params: &SystemParams) -> Result<Self> {
        let space = ev.space().clone();
        let basis = ev.basis().clone();
        let y = fock::annihilator(&space, Mode::Plus).scale(C64::from_polar(1.0, params.alpha));
        let r2 = std::f64::consts::SQRT_2;
        let ym = y.matrix().mapv(|z| z / r2);
        let s_j = left_right_superop(&basis, &ym, &linalg::dagger(&ym));
        let xc = (y.matrix() + &linalg::dagger(y.matrix())).mapv(|z| z / r2);
        let x = basis.expectation_functional(&xc);
        let bound_extra = linalg::one_norm(&s_j) + x.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tail = match ev.tail() {
            Propagator::Spectral(s) => {
                let j_hat = s.left().dot(&sparse_times(&s_j, s.right()));
                let x_v = linalg::vecmat(&x, s.right());
                Some(TailBasis { spectral: s.clone(), j_hat, x_v })
            }
            Propagator::Dense(_) => None,
        };
        Ok(Homodyne { ev, kappa: params.kappa_plus, s_j, x, bound_extra, tail })
    }

    pub fn evolver(&self) -> &Evolver {
        &self.ev
    }

    fn taylor(&self, l: &Array2<C64>, l_norm: f64, z: Augmented, h: f64) -> Augmented {
        let apply = |a: &Augmented, s: f64| Augmented {
            rho: l.dot(&a.rho).mapv(|v| v * s),
            sigma: (l.dot(&a.sigma) + self.s_j.dot(&a.rho)).mapv(|v| v * s),
            m: row_times(&self.x, &a.rho).mapv(|v| v * s),
            q: row_times(&self.x, &a.sigma).mapv(|v| v * s),
        };
        linalg::taylor_exp_action(apply, aug_norm, l_norm + self.bound_extra, h, z)
    }

    /// Propagates the augmented state from `t0` to `t1` through ramp slices
    /// and, for a dense tail, through the tail as well.
    fn advance_taylor(&self, mut z: Augmented, t0: f64, t1: f64) -> Augmented {
        let mut t = t0;
        for s in self.ev.slices() {
            if s.end <= t || s.start >= t1 {
                continue;
            }
            let b = t1.min(s.end);
            z = self.taylor(&s.matrix, s.norm, z, b - t.max(s.start));
            t = b;
        }
        let from = t.max(self.ev.tail_start());
        if t1 > from {
            if let Propagator::Dense(m) = self.ev.tail() {
                z = self.taylor(m, linalg::one_norm(m), z, t1 - from);
            }
        }
        z
    }

    /// Moments on `times` (absolute, all `≥ record_start`). `ρ` evolves from
    /// `rho0` at `t = 0`; the record is integrated from `record_start`.
    pub fn run(
        &self,
        rho0: &DensityMatrix,
        record_start: f64,
        times: &[f64],
        extras: &[(&str, &Operator)],
    ) -> Result<OutputMoments> {
        Ok(self.run_batch(std::slice::from_ref(rho0), record_start, times, extras)?.remove(0))
    }

    /// [`Homodyne::run`] for several initial states sharing one pass over
    /// the generator.
    pub fn run_batch(
        &self,
        rho0s: &[DensityMatrix],
        record_start: f64,
        times: &[f64],
        extras: &[(&str, &Operator)],
    ) -> Result<Vec<OutputMoments>> {
        if rho0s.iter().any(|r| **r.space() != **self.ev.space()) {
            return Err(Error::SpaceMismatch);
        }
        if !(record_start >= 0.0) {
            return Err(Error::InvalidTimes(format!("record start {record_start} is negative")));
        }
        if times.iter().any(|t| !t.is_finite() || *t < record_start) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidTimes("grid must be monotone and start after the record start".into()));
        }
        let basis = self.ev.basis();
        let extra_w: Vec<Array1<C64>> = extras
            .iter()
            .map(|(_, op)| {
                if **op.space() != **self.ev.space() {
                    return Err(Error::SpaceMismatch);
                }
                Ok(basis.expectation_functional(op.matrix()))
            })
            .collect::<Result<_>>()?;
        let batch = rho0s.len();
        let dim = basis.len();
        let mut rho = Array2::<C64>::zeros((dim, batch));
        for (c, r) in rho0s.iter().enumerate() {
            let v = self.ev.propagate(basis.vectorize(r.matrix())?, 0.0, record_start)?;
            rho.column_mut(c).assign(&v);
        }
        let zero = Array1::<C64>::zeros(batch);
        let mut z = Augmented { rho, sigma: Array2::zeros((dim, batch)), m: zero.clone(), q: zero };
        let mut t = record_start;

        // Eigen-coordinates `(r, q)` and extra functionals once the tail is entered.
        let mut eig: Option<(Array2<C64>, Array2<C64>, Vec<Array1<C64>>)> = None;
        let mut caches: HashMap<u64, StepCache> = HashMap::new();

        let sk = self.kappa.sqrt();
        let mut out: Vec<OutputMoments> = (0..batch)
            .map(|_| OutputMoments {
                times: times.to_vec(),
                record_start,
                mean_x: Vec::with_capacity(times.len()),
                integrated_mean: Vec::with_capacity(times.len()),
                integrated_var: Vec::with_capacity(times.len()),
                observables: extras.iter().map(|(n, _)| (n.to_string(), Vec::with_capacity(times.len()))).collect(),
            })
            .collect();

        for &tk in times {
            if let Some(tb) = &self.tail {
                if eig.is_none() {
                    let reach = tk.min(self.ev.tail_start()).max(t);
                    z = self.advance_taylor(z, t, reach);
                    t = reach;
                    if tk > self.ev.tail_start() || self.ev.slices().is_empty() {
                        let left = tb.spectral.left();
                        let w_v = extra_w.iter().map(|w| linalg::vecmat(w, tb.spectral.right())).collect();
                        eig = Some((left.dot(&z.rho), left.dot(&z.sigma), w_v));
                    }
                }
                if let Some((r, q, _)) = eig.as_mut() {
                    let h = tk - t;
                    if h > 0.0 {
                        let c = caches.entry(h.to_bits()).or_insert_with(|| tb.step_cache(h));
                        let xd = &tb.x_v * &c.d10;
                        z.m += &row_times(&xd, r);
                        z.q += &(row_times(&xd, q) + row_times(&c.x_jd2, r));
                        let new_q = scale_rows(&c.decay, q) + c.jd1.dot(&*r);
                        *r = scale_rows(&c.decay, r);
                        *q = new_q;
                        t = tk;
                    }
                }
            } else {
                z = self.advance_taylor(z, t, tk);
                t = tk.max(t);
            }
            let (xc, obs): (Array1<C64>, Vec<Array1<C64>>) = match (&self.tail, &eig) {
                (Some(tb), Some((r, _, w_v))) => (row_times(&tb.x_v, r), w_v.iter().map(|w| row_times(w, r)).collect()),
                _ => (row_times(&self.x, &z.rho), extra_w.iter().map(|w| row_times(w, &z.rho)).collect()),
            };
            let dur = tk - record_start;
            for (c, o) in out.iter_mut().enumerate() {
                let m = z.m[c].re;
                o.mean_x.push(-sk * xc[c].re);
                o.integrated_mean.push(-sk * m);
                o.integrated_var.push(dur / 2.0 + 2.0 * self.kappa * z.q[c].re - self.kappa * m * m);
                for (slot, v) in o.observables.iter_mut().zip(&obs) {
                    slot.1.push(v[c]);
                }
            }
        }
        Ok(out)
    }
}
