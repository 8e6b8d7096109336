//! Scenario configuration: TOML file, per-scenario defaults and `--set`
//! overrides.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::measure::{Protocol, RampedProtocol, Truncation};
use crate::model::{Coupling, LabFrame, RampSchedule, SystemParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SpinDynamics,
    SteadyJcScan,
    IdealEstimator,
    DissipationSweep,
    Ramped,
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::SpinDynamics => "spin_dynamics",
            Scenario::SteadyJcScan => "steady_jc_scan",
            Scenario::IdealEstimator => "ideal_estimator",
            Scenario::DissipationSweep => "dissipation_sweep",
            Scenario::Ramped => "ramped",
            Scenario::Custom => "custom",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// `1/κ₊`.
    Kappa,
    TauMeas,
}

/// `points` equally spaced times ending at `t_end`, starting one step after
/// `t_start` (or at `t_start` when `include_start`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
    pub unit: TimeUnit,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_start.is_finite() && self.t_end.is_finite()) {
            return Err("grid bounds must be finite".into());
        }
        if !(self.t_end > self.t_start) || self.t_start < 0.0 {
            return Err(format!("grid must satisfy 0 <= t_start < t_end, got [{}, {}]", self.t_start, self.t_end));
        }
        if self.points == 0 {
            return Err("grid needs at least one point".into());
        }
        Ok(())
    }

    pub fn scale(&self, params: &SystemParams) -> f64 {
        match self.unit {
            TimeUnit::Kappa => 1.0 / params.kappa_plus,
            TimeUnit::TauMeas => params.tau_meas(),
        }
    }

    /// Times in units of `1/κ₊`.
    pub fn times(&self, params: &SystemParams, include_start: bool) -> Vec<f64> {
        let s = self.scale(params);
        let step = (self.t_end - self.t_start) / self.points as f64;
        let first = if include_start { 0 } else { 1 };
        (first..=self.points).map(|k| s * (self.t_start + step * k as f64)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinDynamicsSpec {
    /// Field magnitudes `B = √(4G² + δΩ²)`.
    pub b: Vec<f64>,
    /// `G/δΩ`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub gamma: Vec<f64>,
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub n_b: Vec<usize>,
    pub output: PathBuf,
    pub convergence_check: bool,
    pub protocol: Protocol,
    pub params: SystemParams,
    pub grid: GridSpec,
    pub truncation: Truncation,
    pub spin_dynamics: SpinDynamicsSpec,
    pub steady_jc_scan: ScanSpec,
    pub dissipation_sweep: SweepSpec,
    pub ramp: RampedProtocol,
    /// RWA threshold applied when `[params.lab_frame]` is given.
    pub rwa_threshold: f64,
}

impl Config {
    pub fn defaults(scenario: Scenario) -> Config {
        let linear = |g: f64| Coupling::Ramp(RampSchedule::linear(g, 1.0, 16));
        let mut params = SystemParams::ideal(0.01, 0.1, 0.13).with_coupling(linear(0.1));
        let mut n_b = vec![0, 1, 2, 3];
        let mut grid = GridSpec { t_start: 0.0, t_end: 20.0, points: 400, unit: TimeUnit::TauMeas };
        match scenario {
            Scenario::SpinDynamics => {
                params = SystemParams::ideal(0.1, 0.75, 1.0);
                n_b = vec![1, 2, 3];
                grid = GridSpec { t_start: 0.0, t_end: 20.0, points: 400, unit: TimeUnit::TauMeas };
            }
            Scenario::SteadyJcScan => {
                params = SystemParams::ideal(0.01, 0.1, 0.13);
                n_b = vec![1, 2, 3, 4, 5];
            }
            Scenario::IdealEstimator | Scenario::Custom => {}
            Scenario::DissipationSweep => {
                params = SystemParams::ideal(0.1, 0.1, 0.13).with_coupling(linear(0.1));
                params.kappa_minus = 1e-4;
                params.n_th = 100.0;
                n_b = vec![0, 1, 2];
            }
            Scenario::Ramped => {
                params = SystemParams::ideal(0.01, 5.0, 1.0);
                n_b = vec![0, 1, 2, 3];
                grid = GridSpec { t_start: 0.0, t_end: 2.0, points: 400, unit: TimeUnit::TauMeas };
            }
        }
        Config {
            scenario,
            n_b,
            output: PathBuf::from(format!("out/{}", scenario.name())),
            convergence_check: false,
            protocol: if scenario == Scenario::Ramped { Protocol::Ramped } else { Protocol::Steady },
            params,
            grid,
            truncation: Truncation::default(),
            spin_dynamics: SpinDynamicsSpec { b: vec![0.5, 1.0, 2.0], ratio: 0.75 },
            steady_jc_scan: ScanSpec { ratio_min: 0.1, ratio_max: 3.0, points: 59 },
            dissipation_sweep: SweepSpec { gamma: vec![1e-6, 0.1 / 201.0] },
            ramp: RampedProtocol::default(),
            rwa_threshold: 10.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.params.validate().map_err(|e| e.to_string())?;
        self.grid.validate()?;
        if self.n_b.is_empty() {
            return Err("n_b list is empty".into());
        }
        if self.truncation.plus_dim == 0 {
            return Err("truncation.plus_dim must be at least 1".into());
        }
        if !self.params.conserves_n_tot() {
            if let Some(&n) = self.n_b.iter().find(|&&n| n > self.truncation.n_tot_max) {
                return Err(format!("n_b = {n} exceeds truncation.n_tot_max = {}", self.truncation.n_tot_max));
            }
        }
        match self.scenario {
            Scenario::SpinDynamics => {
                let s = &self.spin_dynamics;
                if s.b.is_empty() || s.b.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
                    return Err("spin_dynamics.b must hold positive field values".into());
                }
                if !s.ratio.is_finite() {
                    return Err("spin_dynamics.ratio must be finite".into());
                }
                if self.n_b.contains(&0) {
                    return Err("spin_dynamics needs n_b >= 1".into());
                }
            }
            Scenario::SteadyJcScan => {
                let s = &self.steady_jc_scan;
                if !(s.ratio_max >= s.ratio_min) || s.points < 2 || !s.ratio_min.is_finite() || !s.ratio_max.is_finite() {
                    return Err("steady_jc_scan needs ratio_min <= ratio_max and points >= 2".into());
                }
            }
            Scenario::DissipationSweep => {
                if self.dissipation_sweep.gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                    return Err("dissipation_sweep.gamma values must be finite and non-negative".into());
                }
            }
            Scenario::Ramped => {
                let r = &self.ramp;
                if !(r.duration_tau > 0.0 && r.floor_ratio > 0.0 && r.floor_ratio <= 1.0 && r.slices > 0) {
                    return Err("ramp needs duration_tau > 0, 0 < floor_ratio <= 1 and slices > 0".into());
                }
            }
            Scenario::IdealEstimator | Scenario::Custom => {}
        }
        Ok(())
    }
}

/// Generates an all-optional mirror of a settings struct with `merge`
/// (right wins) and `apply` onto the resolved value.
macro_rules! patch {
    ($name:ident => $target:ty { $($(#[$m:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Clone, Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $($(#[$m])* pub $field: Option<$ty>,)*
        }

        impl $name {
            fn merge(self, over: Self) -> Self {
                Self { $($field: over.$field.or(self.$field),)* }
            }

            fn apply(self, target: &mut $target) {
                $(if let Some(v) = self.$field {
                    target.$field = v.into();
                })*
            }

            fn is_empty(&self) -> bool {
                true $(&& self.$field.is_none())*
            }
        }
    };
}

patch!(ParamsPatch => SystemParams {
    g: f64,
    #[serde(rename = "G")]
    coupling: Coupling,
    delta_omega: f64,
    kappa_plus: f64,
    kappa_minus: f64,
    gamma: f64,
    n_th: f64,
    alpha: f64,
    epsilon: f64,
    lab_frame: LabFrame,
});

patch!(GridPatch => GridSpec { t_start: f64, t_end: f64, points: usize, unit: TimeUnit });
patch!(TruncationPatch => Truncation { plus_dim: usize, n_tot_max: usize });
patch!(SpinDynamicsPatch => SpinDynamicsSpec { b: Vec<f64>, ratio: f64 });
patch!(ScanPatch => ScanSpec { ratio_min: f64, ratio_max: f64, points: usize });
patch!(SweepPatch => SweepSpec { gamma: Vec<f64> });
patch!(RampPatch => RampedProtocol { g_final: f64, duration_tau: f64, floor_ratio: f64, slices: usize });

/// The configuration file as written: every key optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<Scenario>,
    pub n_b: Option<Vec<usize>>,
    pub output: Option<PathBuf>,
    pub convergence_check: Option<bool>,
    pub protocol: Option<Protocol>,
    pub rwa_threshold: Option<f64>,
    pub params: Option<ParamsPatch>,
    pub grid: Option<GridPatch>,
    pub truncation: Option<TruncationPatch>,
    pub spin_dynamics: Option<SpinDynamicsPatch>,
    pub steady_jc_scan: Option<ScanPatch>,
    pub dissipation_sweep: Option<SweepPatch>,
    pub ramp: Option<RampPatch>,
}

fn merge_opt<T>(base: Option<T>, over: Option<T>, merge: impl FnOnce(T, T) -> T) -> Option<T> {
    match (base, over) {
        (Some(a), Some(b)) => Some(merge(a, b)),
        (a, b) => b.or(a),
    }
}

impl FileConfig {
    /// Parses TOML text. Errors carry the line and column of the offending
    /// key or value.
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Parses one `key=value` override, with `key` a dotted path such as
    /// `params.g`. Values that are not valid TOML are taken as strings.
    pub fn from_override(assignment: &str) -> Result<Self, String> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| format!("override `{assignment}` is not of the form key=value"))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || !key.split('.').all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')) {
            return Err(format!("override key `{key}` is not a dotted identifier"));
        }
        let (table, leaf) = match key.rsplit_once('.') {
            Some((t, l)) => (Some(t), l),
            None => (None, key),
        };
        let render = |v: &str| match table {
            Some(t) => format!("[{t}]\n{leaf} = {v}\n"),
            None => format!("{leaf} = {v}\n"),
        };
        let text = if toml::from_str::<toml::Table>(&render(value)).is_ok() {
            render(value)
        } else {
            render(&toml::Value::String(value.to_string()).to_string())
        };
        Self::parse(&text).map_err(|e| format!("override `{assignment}`: {e}"))
    }

    pub fn is_empty(&self) -> bool {
        self.scenario.is_none()
            && self.n_b.is_none()
            && self.output.is_none()
            && self.convergence_check.is_none()
            && self.protocol.is_none()
            && self.rwa_threshold.is_none()
            && self.params.as_ref().is_none_or(|p| p.is_empty())
            && self.grid.as_ref().is_none_or(|p| p.is_empty())
            && self.truncation.as_ref().is_none_or(|p| p.is_empty())
            && self.spin_dynamics.as_ref().is_none_or(|p| p.is_empty())
            && self.steady_jc_scan.as_ref().is_none_or(|p| p.is_empty())
            && self.dissipation_sweep.as_ref().is_none_or(|p| p.is_empty())
            && self.ramp.as_ref().is_none_or(|p| p.is_empty())
    }

    pub fn merge(self, over: FileConfig) -> FileConfig {
        FileConfig {
            scenario: over.scenario.or(self.scenario),
            n_b: over.n_b.or(self.n_b),
            output: over.output.or(self.output),
            convergence_check: over.convergence_check.or(self.convergence_check),
            protocol: over.protocol.or(self.protocol),
            rwa_threshold: over.rwa_threshold.or(self.rwa_threshold),
            params: merge_opt(self.params, over.params, ParamsPatch::merge),
            grid: merge_opt(self.grid, over.grid, GridPatch::merge),
            truncation: merge_opt(self.truncation, over.truncation, TruncationPatch::merge),
            spin_dynamics: merge_opt(self.spin_dynamics, over.spin_dynamics, SpinDynamicsPatch::merge),
            steady_jc_scan: merge_opt(self.steady_jc_scan, over.steady_jc_scan, ScanPatch::merge),
            dissipation_sweep: merge_opt(self.dissipation_sweep, over.dissipation_sweep, SweepPatch::merge),
            ramp: merge_opt(self.ramp, over.ramp, RampPatch::merge),
        }
    }

    /// Applies the file over the scenario defaults and validates the result.
    pub fn resolve(self) -> Result<Config, String> {
        let scenario = self.scenario.ok_or("missing `scenario` key")?;
        let mut c = Config::defaults(scenario);
        if scenario == Scenario::Custom {
            let p = self.params.as_ref();
            for (name, present) in [
                ("g", p.is_some_and(|p| p.g.is_some())),
                ("G", p.is_some_and(|p| p.coupling.is_some())),
                ("delta_omega", p.is_some_and(|p| p.delta_omega.is_some())),
            ] {
                if !present {
                    return Err(format!("scenario `custom` requires params.{name}"));
                }
            }
        }
        if let Some(v) = self.n_b {
            c.n_b = v;
        }
        if let Some(v) = self.output {
            c.output = v;
        }
        if let Some(v) = self.convergence_check {
            c.convergence_check = v;
        }
        if let Some(v) = self.protocol {
            c.protocol = v;
        }
        if let Some(v) = self.rwa_threshold {
            c.rwa_threshold = v;
        }
        if let Some(p) = self.params {
            p.apply(&mut c.params);
        }
        if let Some(p) = self.grid {
            p.apply(&mut c.grid);
        }
        if let Some(p) = self.truncation {
            p.apply(&mut c.truncation);
        }
        if let Some(p) = self.spin_dynamics {
            p.apply(&mut c.spin_dynamics);
        }
        if let Some(p) = self.steady_jc_scan {
            p.apply(&mut c.steady_jc_scan);
        }
        if let Some(p) = self.dissipation_sweep {
            p.apply(&mut c.dissipation_sweep);
        }
        if let Some(p) = self.ramp {
            p.apply(&mut c.ramp);
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_scenario() {
        let c = FileConfig::parse("scenario = \"dissipation_sweep\"").unwrap().resolve().unwrap();
        assert_eq!(c.params.g, 0.1);
        assert_eq!(c.params.n_th, 100.0);
        assert_eq!(c.n_b, vec![0, 1, 2]);
        let c = FileConfig::parse("scenario = \"ideal_estimator\"").unwrap().resolve().unwrap();
        assert_eq!(c.params.coupling.final_value(), 0.1);
        assert_eq!(c.params.delta_omega, 0.13);
    }

    #[test]
    fn file_then_overrides() {
        let text = "scenario = \"ideal_estimator\"\nn_b = [0, 1]\n[params]\ng = 0.02\n";
        let base = FileConfig::parse(text).unwrap();
        let over = FileConfig::from_override("params.g=0.03").unwrap();
        let c = base.clone().merge(over).resolve().unwrap();
        assert_eq!(c.params.g, 0.03);
        assert_eq!(c.n_b, vec![0, 1]);
        let c = base.merge(FileConfig::from_override("output=runs/a").unwrap()).resolve().unwrap();
        assert_eq!(c.output, PathBuf::from("runs/a"));
        assert_eq!(c.params.g, 0.02);
    }

    #[test]
    fn ramp_table_for_coupling() {
        let text = "scenario = \"custom\"\n[params]\ng = 0.01\ndelta_omega = 1.0\nG = { kind = \"linear\", g_final = 0.2, duration = 2.0 }\n";
        let c = FileConfig::parse(text).unwrap().resolve().unwrap();
        let Coupling::Ramp(r) = &c.params.coupling else { panic!("expected a ramp") };
        assert_eq!((r.kind, r.g_final, r.duration, r.slices), (RampSchedule::linear(0.2, 2.0, 16).kind, 0.2, 2.0, 16));
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = FileConfig::parse("scenario = \"ramped\"\n\n[params]\ngg = 1.0\n").unwrap_err();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("gg"), "{err}");
    }

    #[test]
    fn bad_values_are_rejected() {
        let e = FileConfig::parse("scenario = \"custom\"\n[params]\ng = 0.1\n").unwrap().resolve().unwrap_err();
        assert!(e.contains("params.G"), "{e}");
        let e = FileConfig::parse("scenario = \"dissipation_sweep\"\nn_b = [7]\n").unwrap().resolve().unwrap_err();
        assert!(e.contains("n_tot_max"), "{e}");
        let e = FileConfig::parse("scenario = \"ideal_estimator\"\n[grid]\nt_end = -1.0\n").unwrap().resolve().unwrap_err();
        assert!(e.contains("grid"), "{e}");
        assert!(FileConfig::from_override("params.g").is_err());
        assert!(FileConfig::from_override("params.nope=1").is_err());
    }

    #[test]
    fn empty_file_is_detected() {
        assert!(FileConfig::parse("").unwrap().is_empty());
        assert!(FileConfig::parse("# nothing\n[params]\n").unwrap().is_empty());
        assert!(!FileConfig::parse("scenario = \"ramped\"").unwrap().is_empty());
    }

    #[test]
    fn grid_times() {
        let g = GridSpec { t_start: 0.0, t_end: 2.0, points: 4, unit: TimeUnit::Kappa };
        let p = SystemParams::ideal(0.1, 0.1, 0.1);
        assert_eq!(g.times(&p, false), vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.times(&p, true)[0], 0.0);
        let g = GridSpec { unit: TimeUnit::TauMeas, ..g };
        assert!((g.times(&p, false)[3] - 200.0).abs() < 1e-12);
    }
}
