//! Scenario implementations. Each produces CSV text, a report section and
//! the named series used by the convergence check.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{Config, Scenario};
use super::CliError;
use crate::fock::{self, HilbertSpace, Mode, Operator};
use crate::measure::{self, MeasurementRecord, Protocol, Truncation};
use crate::model::{self, Coupling, RampKind, SuperBasis, SystemParams};
use crate::propagate::{self, Evolver};
use crate::spin::{self, EffectiveField, SpinBlock};

pub struct ScenarioOutput {
    pub csv: String,
    pub report: String,
    /// Key observables, compared by the convergence check.
    pub series: Vec<(String, Vec<f64>)>,
}

pub struct ConvergenceRow {
    pub change: String,
    pub drift: Option<f64>,
    pub note: String,
}

impl ConvergenceRow {
    pub fn passes(&self) -> Option<bool> {
        self.drift.map(|d| d < 1e-3)
    }
}

impl fmt::Display for ConvergenceRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.drift {
            Some(d) => write!(f, "{:<28} drift {:.3e}  {}", self.change, d, if d < 1e-3 { "pass" } else { "FAIL" })?,
            None => write!(f, "{:<28} n/a", self.change)?,
        }
        if !self.note.is_empty() {
            write!(f, "  ({})", self.note)?;
        }
        Ok(())
    }
}

fn num(x: f64) -> String {
    // Adding +0 turns −0 into +0.
    format!("{:.12e}", x + 0.0)
}

const PARAM_HEADER: &str = "g,G,delta_omega,kappa_plus,kappa_minus,gamma,n_th,alpha,epsilon,ramp_kind,ramp_duration,ramp_slices,plus_dim,n_tot_max";

fn param_columns(p: &SystemParams, tr: &Truncation) -> String {
    let schedule = p.coupling.schedule();
    let kind = match schedule.kind {
        RampKind::Constant => "constant",
        RampKind::Linear => "linear",
        RampKind::Exponential => "exponential",
    };
    [
        num(p.g),
        num(p.coupling.final_value()),
        num(p.delta_omega),
        num(p.kappa_plus),
        num(p.kappa_minus),
        num(p.gamma),
        num(p.n_th),
        num(p.alpha),
        num(p.epsilon),
        kind.to_string(),
        num(schedule.duration),
        schedule.slices.to_string(),
        tr.plus_dim.to_string(),
        tr.n_tot_max.to_string(),
    ]
    .join(",")
}

fn params_summary(p: &SystemParams) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "g = {}, G = {}, delta_omega = {}, kappa+ = {}, kappa- = {}, gamma = {}, n_th = {}, alpha = {}, epsilon = {}",
        p.g,
        p.coupling.final_value(),
        p.delta_omega,
        p.kappa_plus,
        p.kappa_minus,
        p.gamma,
        p.n_th,
        p.alpha,
        p.epsilon
    );
    if let Coupling::Ramp(r) = &p.coupling {
        let _ = write!(s, "\nramp: {:?} to {} over {} in {} slices", r.kind, r.g_final, r.duration, r.slices);
    }
    s
}

/// Space and sector for the given initial phonon numbers: the exact
/// excitation block when `N_tot` is conserved and a single `n_b` is
/// requested, the capped space otherwise.
fn model_space(params: &SystemParams, tr: &Truncation, n_b: usize) -> crate::Result<(Arc<HilbertSpace>, Arc<SuperBasis>)> {
    let space = if params.conserves_n_tot() {
        HilbertSpace::excitation_block(tr.plus_dim, n_b)?
    } else {
        HilbertSpace::new([tr.plus_dim, tr.n_tot_max + 1, tr.n_tot_max + 1], Some(tr.n_tot_max))?
    };
    let basis = SuperBasis::populations_sector(&space);
    Ok((space, basis))
}

pub fn run_scenario(c: &Config) -> Result<ScenarioOutput, CliError> {
    let mut out = match c.scenario {
        Scenario::SpinDynamics => spin_dynamics(c)?,
        Scenario::SteadyJcScan => steady_jc_scan(c)?,
        Scenario::IdealEstimator | Scenario::Custom => estimator(c, &[c.params.clone()])?,
        Scenario::DissipationSweep => {
            let cells: Vec<SystemParams> = c
                .dissipation_sweep
                .gamma
                .iter()
                .map(|&g| {
                    let mut p = c.params.clone();
                    p.gamma = g;
                    p
                })
                .collect();
            estimator(c, &cells)?
        }
        Scenario::Ramped => ramped(c)?,
    };
    let mut head = String::new();
    let _ = writeln!(head, "scenario: {}", c.scenario);
    let _ = writeln!(head, "{}", params_summary(&c.params));
    let _ = writeln!(head, "n_b: {:?}", c.n_b);
    let _ = writeln!(
        head,
        "truncation: plus_dim = {}, n_tot_max = {}{}",
        c.truncation.plus_dim,
        c.truncation.n_tot_max,
        if c.params.conserves_n_tot() { " (exact excitation blocks used)" } else { "" }
    );
    let _ = writeln!(head, "{}", model::validate_rwa(&c.params, c.rwa_threshold));
    out.report = head + &out.report;
    Ok(out)
}

fn spin_dynamics(c: &Config) -> Result<ScenarioOutput, CliError> {
    let spec = &c.spin_dynamics;
    let cells: Vec<(f64, usize)> = spec.b.iter().flat_map(|&b| c.n_b.iter().map(move |&n| (b, n))).collect();
    let results: Vec<Result<(SystemParams, propagate::Trajectory, Vec<f64>), CliError>> = cells
        .par_iter()
        .map(|&(b, n)| {
            let d = b / (4.0 * spec.ratio * spec.ratio + 1.0).sqrt();
            let mut p = c.params.clone().with_coupling(Coupling::Constant(spec.ratio * d));
            p.delta_omega = d;
            let times = c.grid.times(&p, true);
            let field = EffectiveField::from_params(&p);
            let (space, basis) = model_space(&p, &c.truncation, n).map_err(CliError::numerical("model space"))?;
            let td = model::build_time_dependent(&space, &p, &basis).map_err(CliError::numerical("liouvillian"))?;
            let sb = SpinBlock::on_space(&space, &field);
            let n_plus = fock::number_op(&space, Mode::Plus);
            let obs: [(&str, &Operator); 6] = [
                ("j_x", &sb.jx),
                ("j_y", &sb.jy),
                ("j_z", &sb.jz),
                ("j_par", &sb.j_par),
                ("j_x_prime", &sb.jx_par),
                ("n_plus", &n_plus),
            ];
            let rho0 = fock::fock_state(&space, [0, 0, n]).map_err(CliError::numerical("initial state"))?;
            let traj = propagate::evolve_observables(&Evolver::new(&td), &rho0, &times, &obs)
                .map_err(CliError::numerical("evolve"))?;
            let reduced = reduced_parallel(n, &field, &p, &times).map_err(CliError::numerical("reduced model"))?;
            Ok((p, traj, reduced))
        })
        .collect();
    let mut csv = format!("B,n_b,t,t_tau,j_x,j_y,j_z,j_par,j_x_prime,n_plus,j_par_reduced,{PARAM_HEADER}\n");
    let mut report = String::new();
    let mut series = Vec::new();
    for (&(b, n), r) in cells.iter().zip(results) {
        let (p, traj, reduced) = r?;
        let tau = p.tau_meas();
        let cols = param_columns(&p, &c.truncation);
        let get = |name: &str| traj.observable(name).unwrap();
        for (k, &t) in traj.times.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                num(b),
                n,
                num(t),
                num(t / tau),
                num(get("j_x")[k].re),
                num(get("j_y")[k].re),
                num(get("j_z")[k].re),
                num(get("j_par")[k].re),
                num(get("j_x_prime")[k].re),
                num(get("n_plus")[k].re),
                num(reduced[k]),
                cols
            );
        }
        let field = EffectiveField::from_params(&p);
        if let Ok(rates) = spin::spin_rates(&field, &p) {
            let _ = writeln!(
                report,
                "B = {b}, n_b = {n}: Gamma_phi = {:.6e}, Gamma+ = {:.6e}, Gamma- = {:.6e}, B/T_eff = {:.6}, method {}",
                rates.gamma_phi, rates.gamma_plus, rates.gamma_minus, rates.beta_b, traj.method
            );
        }
        series.push((format!("j_par[B={b},n_b={n}]"), get("j_par").iter().map(|z| z.re).collect()));
    }
    Ok(ScenarioOutput { csv, report, series })
}

/// `⟨J_∥⟩(t)` of the reduced spin model from `J_z = +j`.
fn reduced_parallel(n: usize, field: &EffectiveField, p: &SystemParams, times: &[f64]) -> crate::Result<Vec<f64>> {
    if field.b == 0.0 || p.g == 0.0 {
        return Ok(vec![f64::NAN; times.len()]);
    }
    let block = SpinBlock::block(n, field)?;
    let l = spin::build_spin_liouvillian(&block, field, p)?;
    let rho0 = fock::fock_state(block.space(), [0, 0, n])?;
    let traj = propagate::evolve_observables(&Evolver::constant(&l), &rho0, times, &[("j_par", &block.j_par)])?;
    Ok(traj.observable("j_par").unwrap().iter().map(|z| z.re).collect())
}

fn steady_jc_scan(c: &Config) -> Result<ScenarioOutput, CliError> {
    let s = &c.steady_jc_scan;
    let d = c.params.delta_omega;
    let mut csv = format!("G_over_delta_omega,n_b,j_c,estimator_target,{PARAM_HEADER}\n");
    let mut series: Vec<(String, Vec<f64>)> = c.n_b.iter().map(|n| (format!("j_c[n_b={n}]"), Vec::new())).collect();
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..s.points {
        let ratio = s.ratio_min + (s.ratio_max - s.ratio_min) * k as f64 / (s.points - 1) as f64;
        let p = c.params.clone().with_coupling(Coupling::Constant(ratio * d));
        let cols = param_columns(&p, &c.truncation);
        let one = spin::steady_jc(1, &p).map_err(CliError::numerical("steady_jc"))?;
        if one > best.1 {
            best = (ratio, one);
        }
        for (i, &n) in c.n_b.iter().enumerate() {
            let jc = spin::steady_jc(n, &p).map_err(CliError::numerical("steady_jc"))?;
            let target = if one != 0.0 { jc / one } else { f64::NAN };
            let _ = writeln!(csv, "{},{},{},{},{}", num(ratio), n, num(jc), num(target), cols);
            series[i].1.push(jc);
        }
    }
    let report = format!(
        "largest single-phonon signal on the grid: J_c = {:.6} at G/delta_omega = {:.4} (closed-form optimum {:.4})\n",
        best.1,
        best.0,
        std::f64::consts::FRAC_1_SQRT_2
    );
    Ok(ScenarioOutput { csv, report, series })
}

const ESTIMATOR_HEADER: &str =
    "t,t_tau,t_int,t_int_tau,n_b,n_meas_mean,n_meas_std,mean_x,avg_x,avg_x_std,n_tot,n_plus,j_x,j_y,j_z";

fn estimator_rows(csv: &mut String, records: &[MeasurementRecord], p: &SystemParams, tr: &Truncation) {
    let tau = p.tau_meas();
    let cols = param_columns(p, tr);
    for r in records {
        let obs = |name: &str, k: usize| r.observable(name).map_or(f64::NAN, |v| v[k]);
        for (k, &t) in r.times.iter().enumerate() {
            let ti = t - r.record_start;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                num(t),
                num(t / tau),
                num(ti),
                num(ti / tau),
                r.n_b,
                num(r.n_meas_mean[k]),
                num(r.n_meas_std[k]),
                num(r.mean_x[k]),
                num(r.avg_mean[k]),
                num(r.avg_std[k]),
                num(obs("n_tot", k)),
                num(obs("n_plus", k)),
                num(obs("j_x", k)),
                num(obs("j_y", k)),
                num(obs("j_z", k)),
                cols
            );
        }
    }
}

/// Separation times between adjacent records; for the steady protocol also
/// the closed-form resolution bound.
fn estimator_report(report: &mut String, records: &[MeasurementRecord], p: &SystemParams) {
    let tau = p.tau_meas();
    if let Some(r) = records.first() {
        let _ = writeln!(report, "propagation: {}", r.method);
    }
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        match measure::separation_time(a, b) {
            Some(t) => {
                let _ = writeln!(report, "n_b = {} vs {}: separated after {:.4} tau_meas", a.n_b, b.n_b, t / tau);
            }
            None => {
                let _ = writeln!(report, "n_b = {} vs {}: never separated on the grid", a.n_b, b.n_b);
            }
        }
        if b.n_b == a.n_b + 1 && a.protocol == Protocol::Steady {
            if let Ok(bound) = measure::resolution_time(a.n_b, p) {
                let _ = writeln!(report, "    resolution bound eps^-1 j_n^-2 tau_meas = {:.4} tau_meas", bound / tau);
            }
        }
    }
    let mut warnings: Vec<&String> = records.iter().flat_map(|r| r.warnings.iter()).collect();
    warnings.dedup();
    for w in warnings {
        let _ = writeln!(report, "warning: {w}");
    }
}

fn estimator(c: &Config, cells: &[SystemParams]) -> Result<ScenarioOutput, CliError> {
    let record_start = |p: &SystemParams| if c.protocol == Protocol::Ramped { p.coupling.schedule().end() } else { 0.0 };
    let jobs: Vec<(usize, Vec<usize>)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            if p.conserves_n_tot() {
                c.n_b.iter().map(|&n| (i, vec![n])).collect::<Vec<_>>()
            } else {
                vec![(i, c.n_b.clone())]
            }
        })
        .collect();
    let results: Vec<Result<Vec<MeasurementRecord>, CliError>> = jobs
        .par_iter()
        .map(|(i, ns)| {
            let p = &cells[*i];
            let t0 = record_start(p);
            let times: Vec<f64> = c.grid.times(p, false).into_iter().map(|t| t + t0).collect();
            measure::measure(p, c.protocol, c.truncation, ns, t0, &times).map_err(CliError::numerical("measure"))
        })
        .collect();
    let mut per_cell: Vec<Vec<MeasurementRecord>> = vec![Vec::new(); cells.len()];
    for ((i, _), r) in jobs.iter().zip(results) {
        per_cell[*i].extend(r?);
    }
    let mut csv = format!("{ESTIMATOR_HEADER},{PARAM_HEADER}\n");
    let mut report = String::new();
    let mut series = Vec::new();
    for (p, records) in cells.iter().zip(&per_cell) {
        estimator_rows(&mut csv, records, p, &c.truncation);
        if cells.len() > 1 {
            let _ = writeln!(report, "\n-- gamma = {} --", p.gamma);
        }
        let _ = writeln!(report, "{}", measure::qnd_report(p));
        estimator_report(&mut report, records, p);
        for r in records {
            let tag = format!("gamma={},n_b={}", p.gamma, r.n_b);
            series.push((format!("n_meas_mean[{tag}]"), r.n_meas_mean.clone()));
            series.push((format!("n_meas_std[{tag}]"), r.n_meas_std.clone()));
        }
    }
    Ok(ScenarioOutput { csv, report, series })
}

fn ramped(c: &Config) -> Result<ScenarioOutput, CliError> {
    let p = &c.params;
    let durations = c.grid.times(p, false);
    let cells: Vec<Vec<usize>> =
        if p.conserves_n_tot() { c.n_b.iter().map(|&n| vec![n]).collect() } else { vec![c.n_b.clone()] };
    let results: Vec<_> = cells
        .par_iter()
        .map(|ns| measure::ramped_protocol(p, &c.ramp, c.truncation, ns, &durations).map_err(CliError::numerical("ramped protocol")))
        .collect();
    let mut records = Vec::new();
    let mut dirs = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        let r = r?;
        records.extend(r.records);
        dirs.extend(r.spin_direction);
        warnings.extend(r.warnings);
    }
    warnings.dedup();
    let ramped_params = c.ramp.apply(p);
    let mut csv = format!("{ESTIMATOR_HEADER},{PARAM_HEADER}\n");
    estimator_rows(&mut csv, &records, &ramped_params, &c.truncation);
    let mut report = format!("{}\n", measure::qnd_report(&ramped_params));
    let _ = writeln!(report, "ramp end t_f = {:.6e} (1/kappa+)", c.ramp.duration(p));
    for (r, d) in records.iter().zip(&dirs) {
        let angle = d[0].clamp(-1.0, 1.0).acos().to_degrees();
        let _ = writeln!(
            report,
            "n_b = {}: spin direction after ramp ({:.5}, {:.5}, {:.5}), {:.3} deg from e_x",
            r.n_b, d[0], d[1], d[2], angle
        );
    }
    for w in warnings {
        let _ = writeln!(report, "warning: {w}");
    }
    estimator_report(&mut report, &records, &ramped_params);
    let series = records
        .iter()
        .flat_map(|r| {
            [
                (format!("n_meas_mean[n_b={}]", r.n_b), r.n_meas_mean.clone()),
                (format!("n_meas_std[n_b={}]", r.n_b), r.n_meas_std.clone()),
            ]
        })
        .collect();
    Ok(ScenarioOutput { csv, report, series })
}

fn relative_drift(a: &[(String, Vec<f64>)], b: &[(String, Vec<f64>)]) -> f64 {
    a.iter()
        .zip(b)
        .map(|((_, x), (_, y))| {
            let scale = x.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = x
                .iter()
                .zip(y)
                .filter(|(u, v)| u.is_finite() && v.is_finite())
                .fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        })
        .fold(0.0, f64::max)
}

/// Re-runs the scenario with `plus_dim + 1` and, when the excitation cap is
/// in use, `n_tot_max + 1`.
pub fn convergence_check(c: &Config, base: &ScenarioOutput) -> Result<Vec<ConvergenceRow>, CliError> {
    if c.scenario == Scenario::SteadyJcScan {
        return Ok(vec![ConvergenceRow {
            change: "truncation".into(),
            drift: None,
            note: "closed-form scan, no truncation".into(),
        }]);
    }
    let mut rows = Vec::new();
    let mut bigger = c.clone();
    bigger.truncation.plus_dim += 1;
    let alt = run_scenario(&bigger)?;
    rows.push(ConvergenceRow {
        change: format!("plus_dim {} -> {}", c.truncation.plus_dim, bigger.truncation.plus_dim),
        drift: Some(relative_drift(&base.series, &alt.series)),
        note: String::new(),
    });
    let capped = !c.params.conserves_n_tot();
    if capped {
        let mut bigger = c.clone();
        bigger.truncation.n_tot_max += 1;
        let alt = run_scenario(&bigger)?;
        let max_n = c.n_b.iter().copied().max().unwrap_or(0);
        rows.push(ConvergenceRow {
            change: format!("n_tot_max {} -> {}", c.truncation.n_tot_max, bigger.truncation.n_tot_max),
            drift: Some(relative_drift(&base.series, &alt.series)),
            note: if c.truncation.n_tot_max <= max_n {
                format!("under-truncated: n_tot_max = {} does not exceed the largest n_b = {max_n}", c.truncation.n_tot_max)
            } else {
                String::new()
            },
        });
    } else {
        rows.push(ConvergenceRow {
            change: "n_tot_max".into(),
            drift: None,
            note: "N_tot conserved, exact blocks".into(),
        });
    }
    Ok(rows)
}
