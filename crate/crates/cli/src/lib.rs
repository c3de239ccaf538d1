//! Command implementations behind the `ellnav` binary.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use ellnav_core::abstraction::{execute_path, PathOutcome};
use ellnav_core::oracle::{geomcheck, GeomReport};
use ellnav_core::scenario::{validate_scenario, Scenario, ScenarioFile, ValidationReport};
use ellnav_core::simulation::{Event, Observer, RoundSettings, RoundStatus, Sample, TransitionResult};
use ellnav_core::{AbstractionError, ScenarioError, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SAFETY: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "ellnav", version, about = "Multi-agent navigation with ellipsoidal collision certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a scenario file and print its violations, or OK.
    Validate { scenario: PathBuf },
    /// Run every round of a scenario and write logs into an output directory.
    Simulate {
        scenario: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        /// Time limit per round (s).
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        log_every: Option<usize>,
    },
    /// Turn the logs of a finished run into per-figure CSV series.
    Plotdata { out_dir: PathBuf },
    /// Compare the separation predicate with a sampling oracle on random pairs.
    Geomcheck {
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: parse error at line {line}, column {column}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parse and index a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file = ScenarioFile::from_json(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    Ok(Scenario::from_file(&file)?)
}

/// Run one parsed command line; returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> i32 {
    let res = match cli.command {
        Command::Validate { scenario } => cmd_validate(&scenario, out),
        Command::Simulate {
            scenario,
            out: dir,
            dt,
            t_max,
            log_every,
        } => cmd_simulate(&scenario, &dir, dt, t_max, log_every, out),
        Command::Plotdata { out_dir } => cmd_plotdata(&out_dir).map(|files| {
            for f in files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            EXIT_OK
        }),
        Command::Geomcheck { pairs, seed } => {
            let rep = geomcheck(pairs, seed);
            let _ = write_geom_report(&rep, out);
            Ok(if rep.passed() { EXIT_OK } else { EXIT_VALIDATION })
        }
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            match e {
                CliError::Abstraction(AbstractionError::Sim(SimError::SafetyExit { .. })) => EXIT_SAFETY,
                _ => EXIT_VALIDATION,
            }
        }
    }
}

pub fn write_geom_report(rep: &GeomReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "pairs: {}", rep.pairs)?;
    writeln!(out, "compared outside band: {}", rep.compared)?;
    writeln!(out, "agreement: {}/{}", rep.agreed, rep.compared)?;
    writeln!(out, "inside clearance band: {}", rep.in_band)?;
    writeln!(out, "oracle overlaps: {}", rep.oracle_overlaps)?;
    writeln!(out, "pairs without a positive root: {}", rep.missing_positive_root)?;
    writeln!(out, "separated pairs with several positive roots: {}", rep.extra_positive_roots_separated)?;
    writeln!(out, "overlapping pairs with several positive roots: {}", rep.extra_positive_roots_overlapping)?;
    writeln!(out, "numerical failures: {}", rep.errors)?;
    writeln!(out, "closest compared clearance: {:.6e}", rep.closest_clearance)?;
    for d in &rep.disagreements {
        writeln!(
            out,
            "disagreement: pair {} clearance {:.6e} predicate {:?}",
            d.index, d.clearance, d.predicate
        )?;
    }
    writeln!(out, "{}", if rep.passed() { "PASS" } else { "FAIL" })
}

pub fn cmd_validate(path: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let s = load_scenario(path)?;
    let rep = validate_scenario(&s);
    print_validation(&rep, out);
    Ok(if rep.ok() { EXIT_OK } else { EXIT_VALIDATION })
}

fn print_validation(rep: &ValidationReport, out: &mut dyn Write) {
    for n in &rep.notes {
        let _ = writeln!(out, "note: {n}");
    }
    for v in &rep.violations {
        let _ = writeln!(out, "violation: {v}");
    }
    if rep.ok() {
        let _ = writeln!(out, "OK");
    }
}

/// Streams samples and events of a run into CSV and JSON-lines files.
struct FileObserver {
    trajectory: csv::Writer<BufWriter<File>>,
    inputs: csv::Writer<BufWriter<File>>,
    factors: csv::Writer<BufWriter<File>>,
    events: BufWriter<File>,
    failure: Option<std::io::Error>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

impl FileObserver {
    fn create(dir: &Path, s: &Scenario) -> Result<Self, CliError> {
        let open = |name: &str| -> Result<BufWriter<File>, CliError> {
            let p = dir.join(name);
            Ok(BufWriter::new(File::create(&p).map_err(io_err(&p))?))
        };
        let mut trajectory = csv::Writer::from_writer(open("trajectory.csv")?);
        let mut inputs = csv::Writer::from_writer(open("inputs.csv")?);
        let mut factors = csv::Writer::from_writer(open("factors.csv")?);
        let events = open("events.jsonl")?;

        let mut th = vec!["t".to_string(), "round".to_string()];
        let mut ih = th.clone();
        let mut fh = th.clone();
        for m in &s.agents {
            let id = m.id;
            for k in 0..m.dof() {
                th.push(format!("a{id}_q{k}"));
            }
            for k in 0..m.dof() {
                th.push(format!("a{id}_qd{k}"));
            }
            th.push(format!("a{id}_c_hat"));
            th.push(format!("a{id}_beta"));
            th.push(format!("a{id}_v"));
            for k in 0..m.dof() {
                ih.push(format!("a{id}_tau{k}"));
            }
            for kind in ["singularity", "workspace", "connectivity", "self_collision", "agent_collision", "region"] {
                fh.push(format!("a{id}_{kind}"));
            }
        }
        trajectory.write_record(&th)?;
        inputs.write_record(&ih)?;
        factors.write_record(&fh)?;
        Ok(Self {
            trajectory,
            inputs,
            factors,
            events,
            failure: None,
        })
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.trajectory.flush().map_err(|e| CliError::Invalid(e.to_string()))?;
        self.inputs.flush().map_err(|e| CliError::Invalid(e.to_string()))?;
        self.factors.flush().map_err(|e| CliError::Invalid(e.to_string()))?;
        self.events.flush().map_err(|e| CliError::Invalid(e.to_string()))?;
        match self.failure {
            Some(e) => Err(CliError::Invalid(format!("log write failed: {e}"))),
            None => Ok(()),
        }
    }
}

impl Observer for FileObserver {
    fn sample(&mut self, s: &Sample<'_>) {
        let st = s.state;
        let head = [num(st.t), (s.round + 1).to_string()];
        let mut tr: Vec<String> = head.to_vec();
        let mut ir: Vec<String> = head.to_vec();
        let mut fr: Vec<String> = head.to_vec();
        for (i, a) in st.agents.iter().enumerate() {
            tr.extend(a.q.iter().map(|&x| num(x)));
            tr.extend(a.qd.iter().map(|&x| num(x)));
            tr.push(num(st.c_hat[i]));
            tr.push(num(s.info.forces.breakdown[i].total));
            tr.push(num(s.info.v_terms[i]));
            ir.extend(s.info.tau[i].iter().map(|&x| num(x)));
            fr.extend(s.info.forces.breakdown[i].minima().iter().map(|(_, v)| num(*v)));
        }
        for (w, row) in [
            (&mut self.trajectory, tr),
            (&mut self.inputs, ir),
            (&mut self.factors, fr),
        ] {
            if let Err(e) = w.write_record(&row) {
                self.failure.get_or_insert(std::io::Error::other(e.to_string()));
            }
        }
    }

    fn event(&mut self, e: &Event) {
        let line = serde_json::to_string(e).expect("event serializes");
        if let Err(err) = writeln!(self.events, "{line}") {
            self.failure.get_or_insert(err);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSummary {
    pub id: usize,
    pub dof: usize,
    pub c_true: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub status: RoundStatus,
    pub steps: usize,
    pub t_start: f64,
    pub t_final: f64,
    pub valid: bool,
    pub transitions: Vec<TransitionResult>,
    /// Agent id to factor kind to its smallest value over the round.
    pub min_factors: BTreeMap<String, BTreeMap<String, f64>>,
    pub min_beta_total: BTreeMap<String, f64>,
    /// Largest one-step increase of the Lyapunov function.
    pub max_v_increase: Option<f64>,
    pub max_v_excess_ratio: Option<f64>,
    pub v_violations: usize,
    pub v_start: Option<f64>,
    pub v_end: Option<f64>,
    pub c_hat_monotone: bool,
    pub c_hat_max: BTreeMap<String, f64>,
    pub tau_max: BTreeMap<String, f64>,
    pub qd_max: BTreeMap<String, f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub dt: f64,
    pub t_max_per_round: f64,
    pub status: RoundStatus,
    pub exit_code: i32,
    pub valid_transitions: usize,
    pub total_transitions: usize,
    pub agents: Vec<AgentSummary>,
    pub rounds: Vec<RoundSummary>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn summarize(s: &Scenario, settings: &RoundSettings, outcome: &PathOutcome) -> RunSummary {
    let ids: Vec<String> = s.agents.iter().map(|m| m.id.to_string()).collect();
    let per_agent = |v: &[f64]| -> BTreeMap<String, f64> { ids.iter().cloned().zip(v.iter().copied()).collect() };
    let rounds: Vec<RoundSummary> = outcome
        .rounds
        .iter()
        .map(|r| RoundSummary {
            round: r.round + 1,
            status: r.status,
            steps: r.stats.steps,
            t_start: r.results.first().map_or(0.0, |t| t.t_start),
            t_final: r.final_state.t,
            valid: r.results.iter().all(|t| t.valid),
            transitions: r.results.clone(),
            min_factors: ids
                .iter()
                .cloned()
                .zip(r.stats.min_factors.iter().map(|f| f.iter().map(|(k, v)| (k.to_string(), *v)).collect()))
                .collect(),
            min_beta_total: per_agent(&r.stats.min_beta_total),
            max_v_increase: finite(r.stats.max_v_increase),
            max_v_excess_ratio: finite(r.stats.max_v_excess_ratio),
            v_violations: r.stats.v_violations,
            v_start: finite(r.stats.v_start),
            v_end: finite(r.stats.v_end),
            c_hat_monotone: r.stats.c_hat_monotone,
            c_hat_max: per_agent(&r.stats.c_hat_max),
            tau_max: per_agent(&r.stats.tau_max),
            qd_max: per_agent(&r.stats.qd_max),
            error: r.error.clone(),
        })
        .collect();
    let status = outcome.status();
    RunSummary {
        scenario: s.name.clone(),
        dt: settings.dt,
        t_max_per_round: settings.t_max,
        status,
        exit_code: exit_code(status),
        valid_transitions: outcome.valid_transitions(),
        total_transitions: s.agents.len() * s.rounds(),
        agents: s
            .agents
            .iter()
            .map(|m| AgentSummary {
                id: m.id,
                dof: m.dof(),
                c_true: m.c_true,
            })
            .collect(),
        rounds,
    }
}

fn exit_code(status: RoundStatus) -> i32 {
    match status {
        RoundStatus::Completed => EXIT_OK,
        RoundStatus::SafetyExit => EXIT_SAFETY,
        RoundStatus::Timeout => EXIT_TIMEOUT,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn cmd_simulate(
    path: &Path,
    dir: &Path,
    dt: Option<f64>,
    t_max: Option<f64>,
    log_every: Option<usize>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let s = load_scenario(path)?;
    let rep = validate_scenario(&s);
    if !rep.ok() {
        print_validation(&rep, out);
        return Ok(EXIT_VALIDATION);
    }
    let mut settings = RoundSettings::from_scenario(&s);
    if let Some(dt) = dt {
        settings.dt = dt;
    }
    if let Some(t) = t_max {
        settings.t_max = t;
    }
    if let Some(k) = log_every {
        settings.log_every = k;
    }
    if !(settings.dt > 0.0) || !(settings.t_max >= 0.0) || settings.log_every == 0 {
        return Err(CliError::Invalid("dt, t-max and log-every must be positive".into()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut obs = FileObserver::create(dir, &s)?;
    let outcome = execute_path(&s, settings, &mut obs)?;
    obs.finish()?;

    for ts in &outcome.systems {
        write_text(&dir.join(format!("ts_{}.json", ts.agent)), &ts.to_json())?;
    }
    let summary = summarize(&s, &settings, &outcome);
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;

    for r in &summary.rounds {
        let _ = writeln!(out, "round {}: {:?} after {} steps", r.round, r.status, r.steps);
        for t in &r.transitions {
            let _ = writeln!(
                out,
                "  agent {}: {:?} -> {} t_end {} {}",
                t.agent,
                t.from,
                t.to,
                t.t_end.map_or("-".to_string(), |x| format!("{x:.3}")),
                if t.valid { "valid" } else { "INVALID" }
            );
        }
        if let Some(e) = &r.error {
            let _ = writeln!(out, "  error: {e}");
        }
    }
    let _ = writeln!(out, "valid transitions: {}/{}", summary.valid_transitions, summary.total_transitions);
    Ok(summary.exit_code)
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| CliError::Invalid(format!("{}: {e}", path.display()))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn write_series(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|&x| num(x)))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn columns(header: &[String], pick: impl Fn(&str) -> bool) -> Vec<usize> {
    header.iter().enumerate().filter(|(_, h)| pick(h)).map(|(k, _)| k).collect()
}

fn project(header: &[String], rows: &[Vec<f64>], cols: &[usize]) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut h = vec!["t".to_string()];
    h.extend(cols.iter().map(|&c| header[c].clone()));
    let r = rows
        .iter()
        .map(|row| std::iter::once(row[0]).chain(cols.iter().map(|&c| row[c])).collect())
        .collect();
    (h, r)
}

/// Emit the β, torque, parameter-error and base-trajectory series.
pub fn cmd_plotdata(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let summary_path = dir.join("summary.json");
    if !summary_path.exists() {
        return Err(CliError::Invalid(format!(
            "{} holds no simulation output (summary.json missing)",
            dir.display()
        )));
    }
    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(&summary_path).map_err(io_err(&summary_path))?)?;
    let (th, trows) = read_csv(&dir.join("trajectory.csv"))?;
    let (ih, irows) = read_csv(&dir.join("inputs.csv"))?;
    let mut written = Vec::new();

    let (h, r) = project(&th, &trows, &columns(&th, |c| c.ends_with("_beta")));
    let p = dir.join("plot_beta.csv");
    write_series(&p, &h, &r)?;
    written.push(p);

    let (h, r) = project(&ih, &irows, &columns(&ih, |c| c.contains("_tau")));
    let p = dir.join("plot_tau.csv");
    write_series(&p, &h, &r)?;
    written.push(p);

    let mut h = vec!["t".to_string()];
    let mut cols = Vec::new();
    for a in &summary.agents {
        let name = format!("a{}_c_hat", a.id);
        let c = th
            .iter()
            .position(|x| *x == name)
            .ok_or_else(|| CliError::Invalid(format!("trajectory.csv lacks column {name}")))?;
        cols.push((c, a.c_true));
        h.push(format!("a{}_c_tilde", a.id));
    }
    let r: Vec<Vec<f64>> = trows
        .iter()
        .map(|row| std::iter::once(row[0]).chain(cols.iter().map(|&(c, ct)| row[c] - ct)).collect())
        .collect();
    let p = dir.join("plot_c_tilde.csv");
    write_series(&p, &h, &r)?;
    written.push(p);

    let (h, r) = project(&th, &trows, &columns(&th, |c| c.ends_with("_q0") || c.ends_with("_q1")));
    let p = dir.join("plot_base.csv");
    write_series(&p, &h, &r)?;
    written.push(p);
    Ok(written)
}
