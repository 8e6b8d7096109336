//! Time evolution, steady states and two-time correlation functions.
//!
//! A time-independent generator is diagonalized once and evaluated as a sum
//! of exponentials at any time. Ramp slices are short and numerous, so they
//! are stepped with a truncated-Taylor exponential action instead.

mod spectral;

use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, HilbertSpace, Operator};
use crate::linalg;
use crate::model::{Liouvillian, SuperBasis, SystemParams, TimeDependentLiouvillian};
use crate::C64;

pub use spectral::{PropagationMethod, Propagator, Spectral, CONDITION_LIMIT};

/// Tolerance for the per-state invariants monitored along a trajectory.
pub const STATE_TOL: f64 = 1e-8;

/// A ramp slice ready for stepping.
#[derive(Clone, Debug)]
pub struct SliceGenerator {
    pub start: f64,
    pub end: f64,
    pub coupling: f64,
    pub matrix: Array2<C64>,
    /// Induced 1-norm of `matrix`.
    pub norm: f64,
}

impl SliceGenerator {
    /// `exp(matrix · h) v`.
    pub fn step(&self, v: Array1<C64>, h: f64) -> Array1<C64> {
        let m = &self.matrix;
        linalg::taylor_exp_action(
            |x: &Array1<C64>, s: f64| linalg::matvec(m, x).mapv(|z| z * s),
            l1,
            self.norm,
            h,
            v,
        )
    }
}

fn l1(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

/// Prepared generator: ramp slices on `[0, tail_start)` followed by a
/// diagonalized (or dense-fallback) tail. Immutable and shareable.
#[derive(Clone, Debug)]
pub struct Evolver {
    space: Arc<HilbertSpace>,
    basis: Arc<SuperBasis>,
    slices: Vec<SliceGenerator>,
    tail_start: f64,
    tail: Propagator,
}

impl Evolver {
    pub fn new(td: &TimeDependentLiouvillian) -> Self {
        let slices = td
            .slices
            .iter()
            .map(|s| SliceGenerator {
                start: s.start,
                end: s.end,
                coupling: s.coupling,
                norm: linalg::one_norm(s.liouvillian.matrix()),
                matrix: s.liouvillian.matrix().clone(),
            })
            .collect();
        Evolver {
            space: td.space().clone(),
            basis: td.basis().clone(),
            slices,
            tail_start: td.ramp_end(),
            tail: Propagator::new(&td.tail),
        }
    }

    pub fn constant(l: &Liouvillian) -> Self {
        Evolver {
            space: l.space().clone(),
            basis: l.basis().clone(),
            slices: Vec::new(),
            tail_start: 0.0,
            tail: Propagator::new(l),
        }
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn basis(&self) -> &Arc<SuperBasis> {
        &self.basis
    }

    pub fn slices(&self) -> &[SliceGenerator] {
        &self.slices
    }

    pub fn tail_start(&self) -> f64 {
        self.tail_start
    }

    pub fn tail(&self) -> &Propagator {
        &self.tail
    }

    pub fn method(&self) -> PropagationMethod {
        self.tail.method()
    }

    /// Propagates a vectorized operator from `t0` to `t1 ≥ t0`.
    pub fn propagate(&self, mut v: Array1<C64>, t0: f64, t1: f64) -> Result<Array1<C64>> {
        let mut t = t0;
        for s in &self.slices {
            if s.end <= t || s.start >= t1 {
                continue;
            }
            let b = t1.min(s.end);
            v = s.step(v, b - t.max(s.start));
            t = b;
        }
        let from = t.max(self.tail_start);
        if t1 > from {
            v = self.tail.apply(&v, t1 - from)?;
        }
        Ok(v)
    }

    /// Calls `visit(k, v(times[k]))` for each grid time, starting from `v`
    /// at `t0`. Times after the ramp are evaluated directly from the
    /// eigenbasis coefficients at the ramp end, so errors do not accumulate.
    pub fn for_each_time(
        &self,
        v0: Array1<C64>,
        t0: f64,
        times: &[f64],
        mut visit: impl FnMut(usize, &Array1<C64>) -> Result<()>,
    ) -> Result<()> {
        check_times(times, t0)?;
        let mut v = v0;
        let mut t = t0;
        let mut anchor: Option<(f64, Array1<C64>)> = None;
        for (k, &tk) in times.iter().enumerate() {
            if tk <= self.tail_start || !matches!(self.tail, Propagator::Spectral(_)) {
                v = self.propagate(v, t, tk)?;
                t = tk;
                visit(k, &v)?;
                continue;
            }
            let Propagator::Spectral(s) = &self.tail else { unreachable!() };
            if anchor.is_none() {
                let ta = t.max(self.tail_start);
                let va = self.propagate(v.clone(), t, ta)?;
                anchor = Some((ta, s.coefficients(&va)));
            }
            let (ta, c) = anchor.as_ref().unwrap();
            visit(k, &s.reconstruct(c, tk - ta))?;
        }
        Ok(())
    }
}

fn check_times(times: &[f64], t0: f64) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidTimes("non-finite time".into()));
    }
    if let Some(first) = times.first() {
        if *first < t0 {
            return Err(Error::InvalidTimes(format!("grid starts at {first} before {t0}")));
        }
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidTimes("grid is not monotone".into()));
    }
    Ok(())
}

/// Time grid with either full states or named expectation series.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Empty when only observables were recorded.
    pub states: Vec<DensityMatrix>,
    pub observables: Vec<(String, Vec<C64>)>,
    pub params: Option<SystemParams>,
    pub method: PropagationMethod,
    pub ramp_slices: usize,
    /// Largest `|Tr ρ − 1|` over the grid.
    pub max_trace_error: f64,
    /// Largest Hermiticity deviation (states only).
    pub max_hermiticity_error: f64,
    /// Smallest eigenvalue seen (states only).
    pub min_eigenvalue: f64,
}

impl Trajectory {
    fn empty(times: &[f64], ev: &Evolver) -> Self {
        Trajectory {
            times: times.to_vec(),
            states: Vec::new(),
            observables: Vec::new(),
            params: None,
            method: ev.method(),
            ramp_slices: ev.slices().len(),
            max_trace_error: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
        }
    }

    pub fn with_params(mut self, params: &SystemParams) -> Self {
        self.params = Some(params.clone());
        self
    }

    pub fn observable(&self, name: &str) -> Option<&[C64]> {
        self.observables.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// `Tr[Oρ(t)]` from stored states.
    pub fn expectations(&self, op: &Operator) -> Result<Vec<C64>> {
        if self.states.is_empty() {
            return Err(Error::InvalidState("trajectory holds no states".into()));
        }
        self.states.iter().map(|rho| expectation(rho, op)).collect()
    }

    /// True when every state passes the density-matrix invariants at `tol`.
    pub fn states_valid(&self, tol: f64) -> bool {
        self.max_trace_error <= tol && self.max_hermiticity_error <= tol && self.min_eigenvalue >= -tol
    }

    /// CSV with a `t` column and real/imaginary columns per observable.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        write!(out, "t")?;
        for (name, _) in &self.observables {
            write!(out, ",{name}_re,{name}_im")?;
        }
        writeln!(out)?;
        for (k, t) in self.times.iter().enumerate() {
            write!(out, "{t:.12e}")?;
            for (_, series) in &self.observables {
                write!(out, ",{:.12e},{:.12e}", series[k].re, series[k].im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn check_initial(ev: &Evolver, rho0: &DensityMatrix) -> Result<Array1<C64>> {
    if **rho0.space() != **ev.space() {
        return Err(Error::SpaceMismatch);
    }
    rho0.validate(STATE_TOL)?;
    ev.basis().vectorize(rho0.matrix())
}

/// `ρ(t) = e^{Lt}ρ₀` on the grid, with every state stored and monitored.
pub fn evolve(ev: &Evolver, rho0: &DensityMatrix, times: &[f64]) -> Result<Trajectory> {
    let v0 = check_initial(ev, rho0)?;
    let mut traj = Trajectory::empty(times, ev);
    let basis = ev.basis().clone();
    ev.for_each_time(v0, 0.0, times, |_, v| {
        let m = basis.unvectorize(v);
        let rho = DensityMatrix::new_unchecked(ev.space().clone(), m)?;
        traj.max_trace_error = traj.max_trace_error.max((rho.trace() - 1.0).norm());
        traj.max_hermiticity_error = traj.max_hermiticity_error.max(linalg::hermiticity_error(rho.matrix()));
        traj.min_eigenvalue = traj.min_eigenvalue.min(rho.min_eigenvalue()?);
        traj.states.push(rho);
        Ok(())
    })?;
    Ok(traj)
}

/// Records only `Tr[O_k ρ(t)]` for the named observables (and the trace).
pub fn evolve_observables(
    ev: &Evolver,
    rho0: &DensityMatrix,
    times: &[f64],
    observables: &[(&str, &Operator)],
) -> Result<Trajectory> {
    let v0 = check_initial(ev, rho0)?;
    let basis = ev.basis();
    let mut functionals = Vec::with_capacity(observables.len());
    for (name, op) in observables {
        if **op.space() != **ev.space() {
            return Err(Error::SpaceMismatch);
        }
        functionals.push((name.to_string(), basis.expectation_functional(op.matrix())));
    }
    let trace = basis.trace_functional();
    let mut traj = Trajectory::empty(times, ev);
    traj.observables = functionals.iter().map(|(n, _)| (n.clone(), Vec::with_capacity(times.len()))).collect();
    traj.min_eigenvalue = f64::NAN;
    ev.for_each_time(v0, 0.0, times, |_, v| {
        traj.max_trace_error = traj.max_trace_error.max((trace.dot(v) - 1.0).norm());
        for ((_, w), (_, series)) in functionals.iter().zip(traj.observables.iter_mut()) {
            series.push(w.dot(v));
        }
        Ok(())
    })?;
    Ok(traj)
}

/// `Tr[Oρ]`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64> {
    if **rho.space() != **op.space() {
        return Err(Error::SpaceMismatch);
    }
    let (o, r) = (op.matrix(), rho.matrix());
    let n = o.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += o[[i, j]] * r[[j, i]];
        }
    }
    Ok(acc)
}

/// Null vector of `L`, Hermitized, clipped at `−1e−10` and renormalized.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    let spec = Spectral::new(l.matrix())?;
    let values = spec.values();
    let scale = values.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].norm().total_cmp(&values[b].norm()));
    let count = order.iter().take_while(|&&k| values[k].norm() <= tol).count();
    if count > 1 {
        return Err(Error::DegenerateSteadyState { count, tol });
    }
    if count == 0 {
        return Err(Error::Undefined(format!(
            "no eigenvalue within {tol:.1e} of zero (smallest modulus {:.3e})",
            values[order[0]].norm()
        )));
    }
    let v = spec.right().column(order[0]).to_owned();
    let m = l.basis().unvectorize(&v);
    let h = (&m + &linalg::dagger(&m)).mapv(|z| z * 0.5);
    let tr = h.diag().sum();
    let h = h.mapv(|z| z / tr);
    Ok(DensityMatrix::new_unchecked(l.space().clone(), clip_negative(&h, -1e-10)?)?)
}

/// Raises eigenvalues below `floor` to zero and renormalizes the trace.
fn clip_negative(h: &Array2<C64>, floor: f64) -> Result<Array2<C64>> {
    use ndarray_linalg::{Eigh, UPLO};
    let (vals, vecs) = h.eigh(UPLO::Lower).map_err(|e| Error::linalg("eigh", e))?;
    if vals.iter().all(|&x| x >= floor) {
        return Ok(h.clone());
    }
    let clipped: Vec<f64> = vals.iter().map(|&x| if x < floor { 0.0 } else { x }).collect();
    let total: f64 = clipped.iter().sum();
    let n = h.nrows();
    let mut out = Array2::<C64>::zeros((n, n));
    for (k, &lam) in clipped.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let col = vecs.column(k);
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] += col[i] * col[j].conj() * (lam / total);
            }
        }
    }
    Ok(out)
}

/// `Tr[A e^{L(t_ref+τ ← t_ref)}(Bρ_ref)]` for each `τ`. The operator `Bρ_ref`
/// must lie in the evolver's sector; use a full-basis evolver for
/// `N_tot`-changing `B`.
pub fn two_time_corr(
    ev: &Evolver,
    t_ref: f64,
    rho_ref: &DensityMatrix,
    a: &Operator,
    b: &Operator,
    taus: &[f64],
) -> Result<Vec<C64>> {
    let space = ev.space();
    for s in [rho_ref.space(), a.space(), b.space()] {
        if **s != **space {
            return Err(Error::SpaceMismatch);
        }
    }
    if taus.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidTimes("negative delay".into()));
    }
    let basis = ev.basis();
    let v0 = basis.vectorize(&b.matrix().dot(rho_ref.matrix()))?;
    let w = basis.expectation_functional(a.matrix());
    let times: Vec<f64> = taus.iter().map(|tau| t_ref + tau).collect();
    let mut out = Vec::with_capacity(taus.len());
    ev.for_each_time(v0, t_ref, &times, |_, v| {
        out.push(w.dot(v));
        Ok(())
    })?;
    Ok(out)
}
