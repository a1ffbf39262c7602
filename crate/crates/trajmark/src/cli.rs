//! Command-line front end: `simulate`, `classify`, `compare`, `table1`,
//! `export-plot`, `ingest`. Every run is described by a serializable
//! [`RunConfig`]; `--dump-config` prints it and `--config` replays it, with
//! explicit flags taking precedence over config-file values.
//!
//! Exit codes: 0 success, 1 `--check` mismatch, 2 usage/parse error,
//! 3 numerical failure.

use std::io::Write;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::catalog::{self, CatalogOverrides};
use crate::criteria::{
    blp_measure, bloch_volume_criterion, cp_divisibility_criterion, criteria_table,
    decay_rate_criterion, render_table, table_to_json, uniform_grid, CriterionResult,
    CriterionVerdict, RivalCriterion,
};
use crate::detect::{classify, DetectionParams, Verdict};
use crate::error::{Error, Result};
use crate::model::GeneratorModel;
use crate::propagate::{integrate, IntegrateOpts};
use crate::store::{
    canonical_states, ingest_timeseries, sample_initial_states, DerivativePolicy, Provenance,
    SamplerSpec, SamplerStrategy, TrajectorySet,
};

/// Complete, replayable description of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    /// Catalog id (`trajmark simulate --example ex4`).
    pub example: Option<String>,
    /// Path to a model specification file (JSON), alternative to `example`.
    pub model: Option<String>,
    /// Input trajectory-set file (classify / ingest).
    pub input: Option<String>,
    /// Random initial states added on top of the canonical set.
    pub samples: usize,
    pub seed: u64,
    /// Horizon override; entries carry their own default.
    pub t_max: Option<f64>,
    /// Integrator tolerance override.
    pub tol: Option<f64>,
    pub eps_pos: Option<f64>,
    pub eps_angle: Option<f64>,
    pub out: Option<String>,
    pub threads: Option<usize>,
    pub check: bool,
    /// Comma-separated rival-criteria subset for `compare`.
    pub criteria: Option<String>,
    /// Derivative policy for `ingest`: `provided`, `central`, `smoothed:N`.
    pub derivatives: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            example: None,
            model: None,
            input: None,
            samples: 0,
            seed: 0,
            t_max: None,
            tol: None,
            eps_pos: None,
            eps_angle: None,
            out: None,
            threads: None,
            check: false,
            criteria: None,
            derivatives: "provided".into(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "trajmark",
    version,
    about = "Classify dynamics as strictly Markovian, initial-state Markovian, \
             or non-Markovian from trajectory self-intersections"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Integrate a model into a trajectory-set file.
    Simulate(CommonArgs),
    /// Run the intersection classifier and print the verdict.
    Classify(CommonArgs),
    /// Evaluate rival non-Markovianity criteria for one model.
    Compare(CommonArgs),
    /// Full benchmark grid: our verdict vs the four rival criteria.
    Table1(CommonArgs),
    /// Write plot-ready CSV data for the figure examples.
    #[command(name = "export-plot")]
    ExportPlot(CommonArgs),
    /// Validate an external time series and convert it to a trajectory set.
    Ingest(CommonArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Input file (trajectory set or time series).
    input: Option<String>,
    /// Catalog example id.
    #[arg(long)]
    example: Option<String>,
    /// Model specification file (JSON).
    #[arg(long)]
    model: Option<String>,
    /// Number of random initial states (added to the canonical set).
    #[arg(long)]
    samples: Option<usize>,
    /// RNG seed for the initial-state sampler.
    #[arg(long)]
    seed: Option<u64>,
    /// Time horizon.
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    /// Integrator tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Position coincidence tolerance (absolute).
    #[arg(long = "eps-pos")]
    eps_pos: Option<f64>,
    /// Velocity-angle distinctness tolerance (radians).
    #[arg(long = "eps-angle")]
    eps_angle: Option<f64>,
    /// Output file path.
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (default: TRAJMARK_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Fail (exit 1) if results deviate from the expected values.
    #[arg(long)]
    check: bool,
    /// Comma-separated criteria subset (trace-distance,decay,cp-div,volume).
    #[arg(long)]
    criteria: Option<String>,
    /// Derivative policy for ingest: provided | central | smoothed:N.
    #[arg(long)]
    derivatives: Option<String>,
    /// Load a RunConfig JSON file (flags still take precedence).
    #[arg(long)]
    config: Option<String>,
    /// Print the resolved RunConfig as JSON and exit.
    #[arg(long = "dump-config")]
    dump_config: bool,
}

impl CommonArgs {
    fn resolve(&self, command: &str) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str::<RunConfig>(&text)?
            }
            None => RunConfig::default(),
        };
        cfg.command = command.into();
        if self.input.is_some() {
            cfg.input = self.input.clone();
        }
        if self.example.is_some() {
            cfg.example = self.example.clone();
        }
        if self.model.is_some() {
            cfg.model = self.model.clone();
        }
        if let Some(s) = self.samples {
            cfg.samples = s;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.t_max.is_some() {
            cfg.t_max = self.t_max;
        }
        if self.tol.is_some() {
            cfg.tol = self.tol;
        }
        if self.eps_pos.is_some() {
            cfg.eps_pos = self.eps_pos;
        }
        if self.eps_angle.is_some() {
            cfg.eps_angle = self.eps_angle;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.check {
            cfg.check = true;
        }
        if self.criteria.is_some() {
            cfg.criteria = self.criteria.clone();
        }
        if let Some(d) = &self.derivatives {
            cfg.derivatives = d.clone();
        }
        Ok(cfg)
    }
}

/// Entry point used by the binary and by tests. Returns the process exit
/// code; all normal output goes to `out`, diagnostics to stderr.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses exit code 0 for --help/--version
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, common) = match &cli.command {
        Cmd::Simulate(a) => ("simulate", a),
        Cmd::Classify(a) => ("classify", a),
        Cmd::Compare(a) => ("compare", a),
        Cmd::Table1(a) => ("table1", a),
        Cmd::ExportPlot(a) => ("export-plot", a),
        Cmd::Ingest(a) => ("ingest", a),
    };
    let cfg = match common.resolve(name) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if common.dump_config {
        let json = serde_json::to_string_pretty(&cfg).expect("RunConfig serializes");
        let _ = writeln!(out, "{json}");
        return 0;
    }
    init_threads(cfg.threads);
    match execute(&cfg, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NumericalFailure { .. }
        | Error::SingularPropagator(_)
        | Error::OutOfSpan { .. }
        | Error::NotHermitian(_) => 3,
        _ => 2,
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("TRAJMARK_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // a second invocation in-process keeps the first pool; results do
        // not depend on the worker count, only throughput does
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Dispatch a resolved config. Returns the exit code for non-error outcomes
/// (`--check` mismatches yield 1).
pub fn execute(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    match cfg.command.as_str() {
        "simulate" => cmd_simulate(cfg, out),
        "classify" => cmd_classify(cfg, out),
        "compare" => cmd_compare(cfg, out),
        "table1" => cmd_table1(cfg, out),
        "export-plot" => cmd_export_plot(cfg, out),
        "ingest" => cmd_ingest(cfg, out),
        other => Err(Error::InvalidInput(format!(
            "unknown command in config: {other:?}"
        ))),
    }
}

fn overrides_of(cfg: &RunConfig) -> CatalogOverrides {
    CatalogOverrides {
        horizon: cfg.t_max,
        tol: cfg.tol,
        rate_scale: None,
    }
}

/// Trajectory set plus (when available) the compiled generator driving it.
fn build_source_set(cfg: &RunConfig) -> Result<(TrajectorySet, Option<crate::model::AffineGenerator>)> {
    if let Some(id) = &cfg.example {
        let entry = catalog::build(id, &overrides_of(cfg))?;
        let set = entry.build_set(cfg.samples, cfg.seed)?;
        let gen = entry.generator()?;
        Ok((set, gen))
    } else if let Some(path) = &cfg.model {
        let model = GeneratorModel::from_json(&std::fs::read_to_string(path)?)?;
        let gen = model.compile()?;
        let dim = gen.dim;
        let horizon = cfg.t_max.unwrap_or(10.0);
        let opts = IntegrateOpts {
            tol: cfg.tol.unwrap_or(1e-10),
            h_max: None,
        };
        let mut states = canonical_states(dim);
        if cfg.samples > 0 {
            states.extend(sample_initial_states(
                &SamplerSpec::new(SamplerStrategy::PureUniform, cfg.samples, cfg.seed),
                dim,
            )?);
        }
        let trajectories = states
            .iter()
            .map(|x0| integrate(&gen, x0, (0.0, horizon), opts))
            .collect::<Result<Vec<_>>>()?;
        let set = TrajectorySet::new(
            dim,
            trajectories,
            Provenance::ModelGenerated {
                label: model.label.clone(),
            },
            None,
        )?;
        Ok((set, Some(gen)))
    } else if let Some(path) = &cfg.input {
        let set = TrajectorySet::load(path)?;
        Ok((set, None))
    } else {
        Err(Error::InvalidInput(
            "need one of --example, --model, or an input file".into(),
        ))
    }
}

fn detection_params(cfg: &RunConfig) -> DetectionParams {
    let mut p = DetectionParams::default();
    p.eps_pos = cfg.eps_pos;
    if let Some(a) = cfg.eps_angle {
        p.eps_angle = a;
    }
    p
}

fn cmd_simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    if cfg.example.is_none() && cfg.model.is_none() {
        return Err(Error::InvalidInput(
            "simulate needs --example or --model".into(),
        ));
    }
    let (set, _) = build_source_set(cfg)?;
    let (mut acc, mut rej, mut pts) = (0usize, 0usize, 0usize);
    for tr in &set.trajectories {
        pts += tr.samples.len();
        if let Some(m) = &tr.meta {
            acc += m.accepted;
            rej += m.rejected;
        }
    }
    writeln!(
        out,
        "simulated {} trajectories  dim={}  horizon={}  samples/traj(mean)={}  steps accepted={} rejected={}",
        set.len(),
        set.dim,
        set.horizon(),
        pts / set.len().max(1),
        acc,
        rej
    )?;
    if let Some(path) = &cfg.out {
        set.persist(path)?;
        writeln!(out, "wrote {path}")?;
    }
    Ok(0)
}

fn cmd_classify(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let (set, gen) = build_source_set(cfg)?;
    let params = detection_params(cfg);
    let report = classify(&set, &params, gen.as_ref())?;
    writeln!(
        out,
        "VERDICT: {} (horizon={}, events={})",
        report.verdict.code(),
        report.horizon,
        report.accepted_self_count() + report.accepted_cross_count()
    )?;
    for caveat in &report.caveats {
        writeln!(out, "note: {caveat}")?;
    }
    if let Some(path) = &cfg.out {
        std::fs::write(path, serde_json::to_string_pretty(&report.to_json())?)?;
        writeln!(out, "wrote {path}")?;
    }
    Ok(0)
}

fn parse_criteria(spec: Option<&str>) -> Result<Vec<RivalCriterion>> {
    let Some(spec) = spec else {
        return Ok(vec![
            RivalCriterion::TraceDistance,
            RivalCriterion::DecayRates,
            RivalCriterion::CPDivisibility,
            RivalCriterion::BlochVolume,
        ]);
    };
    spec.split(',')
        .map(|name| match name.trim() {
            "blp" | "trace-distance" | "trace-dist" => Ok(RivalCriterion::TraceDistance),
            "decay" | "decay-rates" | "rates" => Ok(RivalCriterion::DecayRates),
            "cp" | "cp-div" | "cp-divisibility" => Ok(RivalCriterion::CPDivisibility),
            "volume" | "bloch-volume" => Ok(RivalCriterion::BlochVolume),
            other => Err(Error::InvalidInput(format!(
                "unknown criterion {other:?}; valid: trace-distance, decay, cp-div, volume"
            ))),
        })
        .collect()
}

fn cmd_compare(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let criteria = parse_criteria(cfg.criteria.as_deref())?;
    let (model, horizon) = if let Some(id) = &cfg.example {
        let entry = catalog::build(id, &overrides_of(cfg))?;
        let horizon = entry.horizon;
        match entry.dynamics {
            catalog::Dynamics::Qubit(m) => (m, horizon),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "rival criteria need a master-equation model; {id:?} has none"
                )))
            }
        }
    } else if let Some(path) = &cfg.model {
        let m = GeneratorModel::from_json(&std::fs::read_to_string(path)?)?;
        (m, cfg.t_max.unwrap_or(10.0))
    } else {
        return Err(Error::InvalidInput(
            "compare needs --example or --model".into(),
        ));
    };
    let grid = uniform_grid(horizon, 201);
    let delta = (grid[1] - grid[0]) * 0.5;
    let sampler = SamplerSpec::new(SamplerStrategy::PureUniform, cfg.samples.max(10), cfg.seed);
    let results: Vec<CriterionResult> = criteria
        .iter()
        .map(|c| match c {
            RivalCriterion::TraceDistance => blp_measure(&model, &sampler, horizon, 400),
            RivalCriterion::DecayRates => decay_rate_criterion(&model, &grid),
            RivalCriterion::CPDivisibility => cp_divisibility_criterion(&model, &grid, delta),
            RivalCriterion::BlochVolume => bloch_volume_criterion(&model, &grid),
        })
        .collect::<Result<_>>()?;
    for r in &results {
        writeln!(
            out,
            "{}: {} (witness={:.6e})",
            r.criterion.label(),
            r.verdict,
            r.witness
        )?;
        for (a, b) in &r.inconclusive {
            writeln!(out, "  inconclusive on [{a:.4}, {b:.4}]")?;
        }
    }
    if let Some(path) = &cfg.out {
        std::fs::write(path, serde_json::to_string_pretty(&results)?)?;
        writeln!(out, "wrote {path}")?;
    }
    Ok(0)
}

/// The published benchmark grid this build is expected to reproduce:
/// `(id, our verdict, [trace-dist, decay, cp-div, volume])`. ex1 rival
/// verdicts are starred in the rendering (naive use on an unphysical model).
pub fn expected_table() -> Vec<(&'static str, Verdict, [CriterionVerdict; 4])> {
    use CriterionVerdict::{M, NM};
    vec![
        ("ex1", Verdict::StrictlyMarkovian, [NM, NM, NM, NM]),
        ("ex2", Verdict::NonMarkovian, [M, M, M, M]),
        ("ex3", Verdict::NonMarkovian, [M, M, M, M]),
        ("ex4", Verdict::InitialStateMarkovian, [M, NM, NM, M]),
        ("ex5_ramp", Verdict::NonMarkovian, [M, M, M, M]),
    ]
}

fn cmd_table1(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let inputs = catalog::table_inputs()?;
    let rows = criteria_table(&inputs)?;
    write!(out, "{}", render_table(&rows))?;
    if let Some(path) = &cfg.out {
        std::fs::write(path, serde_json::to_string_pretty(&table_to_json(&rows))?)?;
        writeln!(out, "wrote {path}")?;
    }
    if cfg.check {
        let mut mismatches = 0;
        for (row, (id, ours, rivals)) in rows.iter().zip(expected_table()) {
            if row.id != id || row.ours != ours {
                writeln!(out, "MISMATCH {}: ours {} expected {}", row.id, row.ours, ours)?;
                mismatches += 1;
            }
            for (got, want) in row.rival_verdicts().iter().zip(rivals) {
                if *got != want {
                    writeln!(out, "MISMATCH {}: rival {got} expected {want}", row.id)?;
                    mismatches += 1;
                }
            }
        }
        if mismatches > 0 {
            writeln!(out, "check failed: {mismatches} deviations")?;
            return Ok(1);
        }
        writeln!(out, "check passed: all 25 verdicts match")?;
    }
    Ok(0)
}

fn cmd_export_plot(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let id = cfg.example.as_deref().ok_or_else(|| {
        Error::InvalidInput("export-plot needs --example (ex3, ex5_const, or ex5_ramp)".into())
    })?;
    let entry = catalog::build(id, &overrides_of(cfg))?;
    let gen = entry
        .qubit_model()
        .ok_or_else(|| Error::InvalidInput(format!("export-plot does not support {id:?}")))?
        .compile()?;
    let mut csv = String::new();
    match id {
        "ex3" => {
            // mean excitation of the initially excited state
            let x0 = nalgebra::DVector::from_vec(vec![0.0, 0.0, 1.0]);
            let tr = integrate(&gen, &x0, (0.0, entry.horizon), entry.integrate_opts())?;
            csv.push_str("t,mean_excitation\n");
            for s in &tr.samples {
                csv.push_str(&format!("{},{}\n", s.t, (s.x[2] + 1.0) / 2.0));
            }
        }
        "ex5_const" | "ex5_ramp" => {
            // trajectories live in the y-z plane (x stays 0 from these starts)
            csv.push_str("t,y,z\n");
            for (k, x0) in [
                nalgebra::DVector::from_vec(vec![0.0, 0.0, 1.0]),
                nalgebra::DVector::from_vec(vec![0.0, 0.0, -1.0]),
                nalgebra::DVector::from_vec(vec![0.0, 1.0, 0.0]),
            ]
            .iter()
            .enumerate()
            {
                let tr = integrate(&gen, x0, (0.0, entry.horizon), entry.integrate_opts())?;
                csv.push_str(&format!("# trajectory {k} from ({}, {})\n", x0[1], x0[2]));
                for s in &tr.samples {
                    csv.push_str(&format!("{},{},{}\n", s.t, s.x[1], s.x[2]));
                }
                csv.push('\n');
            }
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "export-plot supports ex3, ex5_const, ex5_ramp; got {other:?}"
            )))
        }
    }
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            writeln!(out, "wrote {path}")?;
        }
        None => write!(out, "{csv}")?,
    }
    Ok(0)
}

fn parse_derivative_policy(spec: &str) -> Result<DerivativePolicy> {
    match spec {
        "provided" => Ok(DerivativePolicy::Provided),
        "central" => Ok(DerivativePolicy::CentralDifference),
        other => match other.strip_prefix("smoothed:") {
            Some(w) => {
                let window: usize = w.parse().map_err(|_| {
                    Error::InvalidInput(format!("bad smoothing window {w:?}"))
                })?;
                Ok(DerivativePolicy::SmoothedDifference { window })
            }
            None => Err(Error::InvalidInput(format!(
                "unknown derivative policy {other:?}; valid: provided, central, smoothed:N"
            ))),
        },
    }
}

fn cmd_ingest(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("ingest needs an input file".into()))?;
    let policy = parse_derivative_policy(&cfg.derivatives)?;
    let set = ingest_timeseries(input, policy)?;
    writeln!(
        out,
        "ingested {} trajectories  dim={}  horizon={}",
        set.len(),
        set.dim,
        set.horizon()
    )?;
    if let Some(path) = &cfg.out {
        set.persist(path)?;
        writeln!(out, "wrote {path}")?;
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let full: Vec<String> = std::iter::once("trajmark".to_string())
            .chain(args.iter().map(|s| s.to_string()))
            .collect();
        let code = run(full, &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn classify_ex4_prints_im() {
        let (code, out) = run_capture(&["classify", "--example", "ex4"]);
        assert_eq!(code, 0, "output: {out}");
        assert!(out.contains("VERDICT: IM"), "output: {out}");
    }

    #[test]
    fn simulate_writes_a_loadable_set() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ex1.trajset");
        let (code, out) = run_capture(&[
            "simulate",
            "--example",
            "ex1",
            "--samples",
            "3",
            "--seed",
            "7",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "output: {out}");
        assert!(out.contains("simulated 10 trajectories"), "output: {out}");
        let set = TrajectorySet::load(&path).unwrap();
        assert_eq!(set.len(), 10); // 7 canonical + 3 random
        assert_eq!(set.dim, 3);
    }

    #[test]
    fn unknown_example_exits_2_and_names_valid_ids() {
        let (code, _) = run_capture(&["simulate", "--example", "nope"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn unknown_criterion_exits_2() {
        let (code, _) = run_capture(&["compare", "--example", "ex4", "--criteria", "entropy"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn compare_subset_runs_two_criteria() {
        let (code, out) = run_capture(&[
            "compare",
            "--example",
            "ex4",
            "--criteria",
            "decay,volume",
        ]);
        assert_eq!(code, 0, "output: {out}");
        assert!(out.contains("decay"), "output: {out}");
        assert_eq!(out.lines().count(), 2, "output: {out}");
    }

    #[test]
    fn dump_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let (code, dumped) = run_capture(&[
            "classify",
            "--example",
            "ex3",
            "--samples",
            "4",
            "--seed",
            "9",
            "--eps-pos",
            "1e-5",
            "--dump-config",
        ]);
        assert_eq!(code, 0);
        std::fs::write(&path, &dumped).unwrap();
        let (code2, dumped2) = run_capture(&[
            "classify",
            "--config",
            path.to_str().unwrap(),
            "--dump-config",
        ]);
        assert_eq!(code2, 0);
        assert_eq!(dumped, dumped2);
        let cfg: RunConfig = serde_json::from_str(&dumped).unwrap();
        assert_eq!(cfg.command, "classify");
        assert_eq!(cfg.samples, 4);
        assert_eq!(cfg.eps_pos, Some(1e-5));
    }

    #[test]
    fn flags_override_config_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let cfg = RunConfig {
            command: "classify".into(),
            example: Some("ex1".into()),
            samples: 2,
            ..Default::default()
        };
        std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        let (code, dumped) = run_capture(&[
            "classify",
            "--config",
            path.to_str().unwrap(),
            "--example",
            "ex4",
            "--dump-config",
        ]);
        assert_eq!(code, 0);
        let merged: RunConfig = serde_json::from_str(&dumped).unwrap();
        assert_eq!(merged.example.as_deref(), Some("ex4"));
        assert_eq!(merged.samples, 2); // untouched config value survives
    }

    #[test]
    fn export_plot_ex3_shape() {
        let (code, csv) = run_capture(&["export-plot", "--example", "ex3"]);
        assert_eq!(code, 0);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,mean_excitation"));
        let rows: Vec<(f64, f64)> = lines
            .map(|l| {
                let (t, e) = l.split_once(',').unwrap();
                (t.parse().unwrap(), e.parse().unwrap())
            })
            .collect();
        assert_eq!(rows[0], (0.0, 1.0));
        let at = |t: f64| {
            rows.iter()
                .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
                .unwrap()
                .1
        };
        assert!(at(10.0) < 1e-4);
        assert!(at(20.0) > 0.99);
    }

    #[test]
    fn export_plot_rejects_unsupported_id() {
        let (code, _) = run_capture(&["export-plot", "--example", "ex2"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn ingest_then_classify_loop_series() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("loop.trajset");
        let cooked = dir.path().join("loop-ingested.trajset");
        let entry = catalog::build("classical_loop", &CatalogOverrides::default()).unwrap();
        entry.build_set(0, 0).unwrap().persist(&raw).unwrap();
        let (code, out) = run_capture(&[
            "ingest",
            raw.to_str().unwrap(),
            "--derivatives",
            "provided",
            "--out",
            cooked.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "output: {out}");
        let (code, out) = run_capture(&["classify", cooked.to_str().unwrap()]);
        assert_eq!(code, 0, "output: {out}");
        assert!(out.contains("VERDICT: NM"), "output: {out}");
    }

    #[test]
    fn missing_source_is_usage_error() {
        let (code, _) = run_capture(&["classify"]);
        assert_eq!(code, 2);
        let (code, _) = run_capture(&["ingest"]);
        assert_eq!(code, 2);
    }
}
