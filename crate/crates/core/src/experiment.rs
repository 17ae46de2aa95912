//! Monte-Carlo sweeps over scenario parameters, with CSV and manifest output.
//!
//! Inputs are given in dBm / dB and converted here; objectives are reported
//! in watts (power problems) or bps/Hz (sum rate).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{max_relative_decrease, SolveSettings};
use crate::benchmarks::{run_scheme, Problem, Scheme};
use crate::channel::{generate_scenario, FadingConfig, Geometry};
use crate::error::{Error, Result};
use crate::system_model::{db_to_linear, dbm_to_watts, Instance, SystemConfig};

/// Bumped whenever the column layout of `results.csv` changes.
pub const CSV_VERSION: u32 = 1;

/// Feasibility residual above which a returned solution counts as failed.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub m: usize,
    pub n: usize,
    pub k_i: usize,
    pub k_e: usize,
    pub p_a_dbm: f64,
    pub p_i_dbm: f64,
    pub sigma_z2_dbm: f64,
    pub sigma2_dbm: f64,
    pub gamma_db: f64,
    /// EH target; `None` means no target.
    #[serde(default)]
    pub e_dbm: Option<f64>,
    pub geometry: Geometry,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            m: 5,
            n: 16,
            k_i: 2,
            k_e: 2,
            p_a_dbm: 30.0,
            p_i_dbm: 10.0,
            sigma_z2_dbm: -80.0,
            sigma2_dbm: -80.0,
            gamma_db: 5.0,
            e_dbm: None,
            geometry: Geometry::default(),
        }
    }
}

impl ScenarioParams {
    pub fn config(&self) -> SystemConfig {
        SystemConfig::uniform(
            self.m,
            self.n,
            self.k_i,
            self.k_e,
            dbm_to_watts(self.p_a_dbm),
            dbm_to_watts(self.p_i_dbm),
            dbm_to_watts(self.sigma_z2_dbm),
            dbm_to_watts(self.sigma2_dbm),
            db_to_linear(self.gamma_db),
            self.e_dbm.map_or(0.0, dbm_to_watts),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    DIrs,
    DE,
    /// Moves the IRS together with the EU cluster.
    DIrsAndDE,
    GammaDb,
    EDbm,
    PADbm,
    PIDbm,
    SigmaZ2Dbm,
    N,
}

impl SweepVar {
    const ALL: [SweepVar; 9] = [
        SweepVar::DIrs,
        SweepVar::DE,
        SweepVar::DIrsAndDE,
        SweepVar::GammaDb,
        SweepVar::EDbm,
        SweepVar::PADbm,
        SweepVar::PIDbm,
        SweepVar::SigmaZ2Dbm,
        SweepVar::N,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepVar::DIrs => "d_irs",
            SweepVar::DE => "d_e",
            SweepVar::DIrsAndDE => "d_irs_and_d_e",
            SweepVar::GammaDb => "gamma_db",
            SweepVar::EDbm => "e_dbm",
            SweepVar::PADbm => "p_a_dbm",
            SweepVar::PIDbm => "p_i_dbm",
            SweepVar::SigmaZ2Dbm => "sigma_z2_dbm",
            SweepVar::N => "n",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| Error::Parse(format!("unknown sweep variable '{s}'")))
    }

    /// Parameters with this variable set to `value`.
    pub fn apply(self, base: &ScenarioParams, value: f64) -> Result<ScenarioParams> {
        let mut p = base.clone();
        match self {
            SweepVar::DIrs => p.geometry.d_irs = value,
            SweepVar::DE => p.geometry.d_e = value,
            SweepVar::DIrsAndDE => {
                p.geometry.d_irs = value;
                p.geometry.d_e = value;
            }
            SweepVar::GammaDb => p.gamma_db = value,
            SweepVar::EDbm => p.e_dbm = Some(value),
            SweepVar::PADbm => p.p_a_dbm = value,
            SweepVar::PIDbm => p.p_i_dbm = value,
            SweepVar::SigmaZ2Dbm => p.sigma_z2_dbm = value,
            SweepVar::N => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidConfig(format!("N must be a positive integer, got {value}")));
                }
                p.n = value as usize;
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub problem: Problem,
    pub params: ScenarioParams,
    #[serde(default)]
    pub fading: FadingConfig,
    pub sweep: Sweep,
    pub trials: usize,
    /// Trial `t` uses seed `seed + t` at every sweep point.
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub solver: SolveSettings,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("sweep values must be finite".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("at least one scheme is required".into()));
        }
        Ok(())
    }

    pub fn trial_seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|t| self.seed.wrapping_add(t)).collect()
    }

    pub fn unit(&self) -> &'static str {
        match self.problem {
            Problem::SumRate => "bps/Hz",
            _ => "W",
        }
    }

    /// Reads a spec from JSON or TOML, chosen by file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?,
            _ => serde_json::from_str(&text)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Built-in sweeps at desk scale (`N = 16`, 20 trials) or at the full
/// `N = 50`, 100 trials.
pub fn preset(name: &str, full_scale: bool) -> Result<ExperimentSpec> {
    let (n, trials) = if full_scale { (50, 100) } else { (16, 20) };
    let base = ScenarioParams { n, ..ScenarioParams::default() };
    let all3 = vec![Scheme::Proposed, Scheme::IdenticalAmplitude, Scheme::Passive];
    let spec = match name {
        "placement" => ExperimentSpec {
            name: name.into(),
            problem: Problem::PowerTransfer,
            params: ScenarioParams {
                k_i: 0,
                k_e: 4,
                p_a_dbm: 23.0,
                p_i_dbm: 5.0,
                geometry: Geometry { d_e: 12.0, ..Geometry::default() },
                ..base
            },
            fading: FadingConfig::default(),
            sweep: Sweep {
                var: SweepVar::DIrs,
                values: if full_scale { (0..=12).map(f64::from).collect() } else { (1..=6).map(|k| 2.0 * k as f64).collect() },
            },
            trials,
            seed: 1,
            schemes: all3,
            solver: SolveSettings::default(),
            output: None,
        },
        "sinr" => ExperimentSpec {
            name: name.into(),
            problem: Problem::SumPower,
            params: ScenarioParams { k_i: 2, k_e: 4, ..base },
            fading: FadingConfig::default(),
            sweep: Sweep {
                var: SweepVar::GammaDb,
                values: if full_scale { (0..=10).map(|k| 2.0 * k as f64).collect() } else { (0..=4).map(|k| 5.0 * k as f64).collect() },
            },
            trials,
            seed: 1,
            schemes: all3,
            solver: SolveSettings::default(),
            output: None,
        },
        "harvest" => ExperimentSpec {
            name: name.into(),
            problem: Problem::SumRate,
            params: ScenarioParams { k_i: 2, k_e: 2, ..base },
            fading: FadingConfig::default(),
            sweep: Sweep { var: SweepVar::EDbm, values: vec![-40.0, -35.0, -30.0, -25.0] },
            trials,
            seed: 1,
            schemes: vec![Scheme::Proposed, Scheme::Passive],
            solver: SolveSettings::default(),
            output: None,
        },
        other => return Err(Error::InvalidConfig(format!("unknown preset '{other}' (placement, sinr, harvest)"))),
    };
    Ok(spec)
}

/// One scheme on one trial at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// `None` when the trial failed.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub max_residual: Option<f64>,
    /// Largest relative drop along the solver's objective trace.
    pub trace_drop: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_var: String,
    pub value: f64,
    pub scheme: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub n_failed: usize,
    pub mean_iterations: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub value: f64,
    pub trial: usize,
    pub scheme: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub trials: Vec<TrialRecord>,
    pub timings: Vec<TimingRow>,
    /// `(value, scheme)` pairs where more than half of the trials failed.
    pub aborted: Vec<(f64, Scheme)>,
}

impl ExperimentResult {
    /// Per-trial objectives of `scheme` at `value`, in trial order.
    pub fn objectives(&self, value: f64, scheme: Scheme) -> Vec<Option<f64>> {
        let mut v: Vec<&TrialRecord> = self.trials.iter().filter(|t| t.value == value && t.scheme == scheme).collect();
        v.sort_by_key(|t| t.trial);
        v.into_iter().map(|t| t.objective).collect()
    }

    pub fn row(&self, value: f64, scheme: Scheme) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.value == value && r.scheme == scheme.name())
    }
}

fn run_trial(spec: &ExperimentSpec, params: &ScenarioParams, value: f64, trial: usize, seed: u64) -> Vec<(TrialRecord, f64)> {
    let cfg = params.config();
    let inst = generate_scenario(&cfg, &params.geometry, &spec.fading, seed).and_then(|ch| Instance::new(cfg, ch));
    let mut settings = spec.solver;
    settings.init_seed = seed;
    settings.randomization.seed = seed;
    spec.schemes
        .iter()
        .map(|&scheme| {
            let t0 = Instant::now();
            let out = inst.as_ref().map_err(|e| Error::InvalidConfig(e.to_string())).and_then(|i| run_scheme(spec.problem, scheme, i, &settings));
            let secs = t0.elapsed().as_secs_f64();
            let mut rec = TrialRecord { value, trial, seed, scheme, objective: None, iterations: 0, max_residual: None, trace_drop: None, error: None };
            match out {
                Ok(o) => {
                    let res = o.feasibility.max_residual();
                    rec.iterations = o.iterations;
                    rec.max_residual = Some(res);
                    rec.trace_drop = Some(max_relative_decrease(&o.trace));
                    if res <= FEASIBILITY_TOL && o.objective.is_finite() {
                        rec.objective = Some(o.objective);
                    } else {
                        rec.error = Some(format!("solution violates constraints by {res:.3e}"));
                    }
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            (rec, secs)
        })
        .collect()
}

fn aggregate(spec: &ExperimentSpec, value: f64, scheme: Scheme, recs: &[&TrialRecord]) -> ResultRow {
    let ok: Vec<&TrialRecord> = recs.iter().copied().filter(|r| r.objective.is_some()).collect();
    let n = ok.len();
    let failed = recs.len() - n;
    let (mean, std, iters) = if n == 0 || failed * 2 > recs.len() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let xs: Vec<f64> = ok.iter().map(|r| r.objective.unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let iters = ok.iter().map(|r| r.iterations as f64).sum::<f64>() / n as f64;
        (mean, var.sqrt(), iters)
    };
    ResultRow {
        sweep_var: spec.sweep.var.name().into(),
        value,
        scheme: scheme.name().into(),
        mean,
        std,
        n,
        n_failed: failed,
        mean_iterations: iters,
        unit: spec.unit().into(),
    }
}

/// Runs every sweep point, trial and scheme. Trials run in parallel; output
/// order depends only on the spec.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let seeds = spec.trial_seeds();
    let mut result = ExperimentResult::default();
    for &value in &spec.sweep.values {
        let params = spec.sweep.var.apply(&spec.params, value)?;
        let per_trial: Vec<Vec<(TrialRecord, f64)>> =
            seeds.par_iter().enumerate().map(|(t, &seed)| run_trial(spec, &params, value, t, seed)).collect();
        let flat: Vec<(TrialRecord, f64)> = per_trial.into_iter().flatten().collect();
        for &scheme in &spec.schemes {
            let recs: Vec<&TrialRecord> = flat.iter().map(|(r, _)| r).filter(|r| r.scheme == scheme).collect();
            let row = aggregate(spec, value, scheme, &recs);
            if row.mean.is_nan() {
                result.aborted.push((value, scheme));
            }
            result.rows.push(row);
        }
        for (rec, secs) in flat {
            result.timings.push(TimingRow { value, trial: rec.trial, scheme: rec.scheme.name().into(), seconds: secs });
            result.trials.push(rec);
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub csv_version: u32,
    pub library_version: String,
    pub spec: ExperimentSpec,
    pub trial_seeds: Vec<u64>,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            csv_version: CSV_VERSION,
            library_version: env!("CARGO_PKG_VERSION").into(),
            spec: spec.clone(),
            trial_seeds: spec.trial_seeds(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn results_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["sweep_var", "value", "scheme", "mean", "std", "n", "n_failed", "mean_iterations", "unit"])?;
    for r in rows {
        w.serialize(r)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrialCsvRow<'a> {
    value: f64,
    trial: usize,
    seed: u64,
    scheme: &'a str,
    objective: Option<f64>,
    iterations: usize,
    max_residual: Option<f64>,
    trace_drop: Option<f64>,
    error: Option<&'a str>,
}

/// Writes `results.csv`, `trials.csv`, `timings.csv` and `manifest.json`
/// into `dir`. Only `timings.csv` depends on the machine.
pub fn emit_results(spec: &ExperimentSpec, result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(&result.rows)?)?;
    let trials: Vec<TrialCsvRow> = result
        .trials
        .iter()
        .map(|t| TrialCsvRow {
            value: t.value,
            trial: t.trial,
            seed: t.seed,
            scheme: t.scheme.name(),
            objective: t.objective,
            iterations: t.iterations,
            max_residual: t.max_residual,
            trace_drop: t.trace_drop,
            error: t.error.as_deref(),
        })
        .collect();
    write_csv(
        &dir.join("trials.csv"),
        &["value", "trial", "seed", "scheme", "objective", "iterations", "max_residual", "trace_drop", "error"],
        &trials,
    )?;
    write_csv(&dir.join("timings.csv"), &["value", "trial", "scheme", "seconds"], &result.timings)?;
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&Manifest::new(spec))?)?;
    Ok(())
}

/// Re-runs the spec stored in a manifest.
pub fn replay(manifest: &Path) -> Result<(ExperimentSpec, ExperimentResult)> {
    let m = Manifest::load(manifest)?;
    if m.csv_version != CSV_VERSION {
        return Err(Error::InvalidConfig(format!("manifest CSV version {} differs from {}", m.csv_version, CSV_VERSION)));
    }
    let result = run_experiment(&m.spec)?;
    Ok((m.spec, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentSpec {
        let mut s = preset("sinr", false).unwrap();
        s.params.m = 3;
        s.params.n = 4;
        s.trials = 2;
        s.sweep.values = vec![0.0, 5.0];
        s.schemes = vec![Scheme::Proposed];
        s
    }

    #[test]
    fn presets_validate() {
        for name in ["placement", "sinr", "harvest"] {
            for full in [false, true] {
                preset(name, full).unwrap().validate().unwrap();
            }
        }
        assert!(preset("nope", false).is_err());
    }

    #[test]
    fn spec_survives_json_and_toml() {
        let s = preset("harvest", false).unwrap();
        let j: ExperimentSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(j, s);
        let t: ExperimentSpec = toml::from_str(&toml::to_string(&s).unwrap()).unwrap();
        assert_eq!(t, s);
    }

    #[test]
    fn empty_table_gives_header_only() {
        let text = results_csv(&[]).unwrap();
        assert_eq!(text.trim(), "sweep_var,value,scheme,mean,std,n,n_failed,mean_iterations,unit");
        assert!(parse_results_csv(&text).unwrap().is_empty());
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let r = run_experiment(&tiny()).unwrap();
        assert_eq!(r.rows.len(), 2);
        let back = parse_results_csv(&results_csv(&r.rows).unwrap()).unwrap();
        assert_eq!(back, r.rows);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = tiny();
        s.trials = 0;
        assert!(run_experiment(&s).is_err());
        let mut s = tiny();
        s.sweep.values.push(f64::NAN);
        assert!(run_experiment(&s).is_err());
        assert!(SweepVar::N.apply(&s.params, 2.5).is_err());
    }
}
