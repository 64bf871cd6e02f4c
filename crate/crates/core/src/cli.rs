//! Command-line surface: argument parsing, run directories and subcommands.
//!
//! Every command that produces results writes one run directory,
//! `<out>/<command>-<timestamp>`, holding the resolved config, run metadata,
//! the completion log and a `reports/` folder. The directory is assembled
//! under a hidden temporary name and renamed only once every file is written,
//! so a failed run leaves nothing behind.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::backend::{Backend, LiveBackend, MockBackend};
use crate::config::{BackendKind, HarnessConfig};
use crate::domain::{Behavior, Catalog, EpidemicCondition, Tier};
use crate::error::{ConfigError, ExperimentError, IngestError, SimError};
use crate::experiment::{
    environmental_impact, make_grid, match_rounds, policy_relaxation_condition, report,
    simulate_shift, tag_rationales, Experiment, RiskRecord, ThemeFrequency,
};
use crate::ingest::{load_survey, parse_corpus, write_survey, Dataset, Round, DEFAULT_NAMES};
use crate::prompt::{Templates, DEFAULT_DYNAMIC_TEMPLATE, DEFAULT_STATIC_TEMPLATE};
use crate::seed::derive_seed;
use crate::sim::{dynamic_key, BehaviorProfile, Simulator};
use crate::stats::{ks_two_sample_with, KsMethod};
use crate::synth::{synthetic_survey, SynthSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "prevsim", version, about = "Persona-conditioned LLM simulation of epidemic prevention behaviour")]
pub struct Cli {
    /// Harness config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Parent directory for run directories; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate behaviour profiles for surveyed residents.
    SimulateStatic(StaticArgs),
    /// Update risk across a transition, then simulate behaviour at T2.
    SimulateDynamic(DynamicArgs),
    /// Run a validation strategy after its prerequisite stages.
    Validate { strategy: String },
    /// Sweep residents across the scenario grid.
    Grid {
        /// Residents per condition; overrides the config.
        #[arg(long)]
        residents: Option<usize>,
    },
    /// Propensity-match R2 residents to R1 residents.
    Match,
    /// Standalone analyses.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Write a synthetic survey CSV.
    Synth {
        #[arg(long, default_value_t = 980)]
        r1: usize,
        #[arg(long, default_value_t = 120)]
        r2: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct StaticArgs {
    #[arg(long, default_value = "R1")]
    pub round: Round,
    /// Tier filter; repeat for several. All tiers when omitted.
    #[arg(long = "tier")]
    pub tiers: Vec<Tier>,
    /// Simulate only the first N selected residents.
    #[arg(long)]
    pub limit: Option<usize>,
    /// `own` (each resident's surveyed condition), `relaxation`, or a grid label.
    #[arg(long, default_value = "own")]
    pub condition: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransitionSource {
    /// Propensity-matched R1 -> R2 pairs.
    Matched,
    /// R2 residents moved into the policy-relaxation condition.
    Relaxation,
}

#[derive(Debug, Args)]
pub struct DynamicArgs {
    #[arg(long, value_enum, default_value = "matched")]
    pub transitions: TransitionSource,
    /// Filter on the T2 (R2) tier; repeat for several.
    #[arg(long = "tier")]
    pub tiers: Vec<Tier>,
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Two-sample KS test between two CSV columns.
    Ks {
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        sim_column: String,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        obs_column: String,
        /// Exact permutation p-value for small samples.
        #[arg(long)]
        exact: bool,
    },
    /// Disinfectant discharge implied by a change in mean intensity.
    Impact {
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        population: Option<f64>,
    },
    /// Theme frequencies over a rationale CSV (column `rationale`).
    Themes { input: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SimulateStatic(_) => "simulate-static",
            Command::SimulateDynamic(_) => "simulate-dynamic",
            Command::Validate { .. } => "validate",
            Command::Grid { .. } => "grid",
            Command::Match => "match",
            Command::Report(ReportCommand::Ks { .. }) => "report-ks",
            Command::Report(ReportCommand::Impact { .. }) => "report-impact",
            Command::Report(ReportCommand::Themes { .. }) => "report-themes",
            Command::Synth { .. } => "synth",
        }
    }
}

/// A run directory under construction.
pub struct RunDir {
    staging: PathBuf,
    target: PathBuf,
}

impl RunDir {
    fn create(out: &Path, command: &str, stamp: &str) -> Result<RunDir, CliError> {
        std::fs::create_dir_all(out).map_err(io_err(out))?;
        let mut target = out.join(format!("{command}-{stamp}"));
        let mut n = 1;
        while target.exists() {
            n += 1;
            target = out.join(format!("{command}-{stamp}-{n}"));
        }
        let staging = out.join(format!(".{command}-{stamp}.partial-{}", std::process::id()));
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
        }
        let reports = staging.join("reports");
        std::fs::create_dir_all(&reports).map_err(io_err(&reports))?;
        Ok(RunDir { staging, target })
    }

    fn write(&self, rel: &str, contents: &str) -> Result<(), CliError> {
        let path = self.staging.join(rel);
        let mut f = std::fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(contents.as_bytes()).map_err(io_err(&path))
    }

    fn report(&self, name: &str, contents: &str) -> Result<(), CliError> {
        self.write(&format!("reports/{name}"), contents)
    }

    fn finish(self) -> Result<PathBuf, CliError> {
        std::fs::rename(&self.staging, &self.target).map_err(io_err(&self.target))?;
        Ok(self.target)
    }

    fn abandon(self) {
        let _ = std::fs::remove_dir_all(&self.staging);
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    args: Vec<String>,
    version: &'a str,
    seed: u64,
    seed_explicit: bool,
    backend: BackendKind,
    model: String,
    temperature: Option<f64>,
    started_at: String,
    finished_at: String,
    completions: usize,
}

/// Everything a command needs, resolved from config and flags.
struct Session {
    cfg: HarnessConfig,
    seed: u64,
    seed_explicit: bool,
    templates: Templates,
    backend: Box<dyn Backend>,
}

impl Session {
    fn new(cli: &Cli) -> Result<Session, CliError> {
        let mut cfg = match &cli.config {
            Some(path) => HarnessConfig::load(path)?,
            None => {
                let mut c = HarnessConfig::default();
                c.resolve_paths(&std::env::current_dir().map_err(io_err(Path::new(".")))?);
                c
            }
        };
        if let Some(kind) = cli.backend {
            cfg.backend.kind = kind;
        }
        if let Some(out) = &cli.out {
            cfg.output_dir = out.clone();
        }
        let seed_explicit = cli.seed.is_some() || cfg.seed.is_some();
        let seed = cli.seed.or(cfg.seed).unwrap_or(0);
        cfg.seed = Some(seed);
        cfg.sim.master_seed = seed;
        cfg.validate()?;

        let read = |p: &Option<PathBuf>, default: &str| -> Result<String, CliError> {
            match p {
                Some(p) => std::fs::read_to_string(p).map_err(io_err(p)),
                None => Ok(default.to_string()),
            }
        };
        let catalog = Catalog::with_labels(&cfg.catalog).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let templates = Templates::new(
            &read(&cfg.templates.static_path, DEFAULT_STATIC_TEMPLATE)?,
            &read(&cfg.templates.dynamic_path, DEFAULT_DYNAMIC_TEMPLATE)?,
            catalog,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let backend: Box<dyn Backend> = match cfg.backend.kind {
            BackendKind::Mock => Box::new(MockBackend::new(seed).with_noise(cfg.backend.mock_noise)),
            BackendKind::Live => {
                let mut live = cfg.backend.live.clone();
                live.api_key = cfg.api_key_from_env();
                if live.api_key.is_none() {
                    return Err(CliError::Usage(format!(
                        "live backend needs an API key in ${}",
                        live.api_key_env
                    )));
                }
                Box::new(LiveBackend::new(live).map_err(|e| ConfigError::Invalid(e.to_string()))?)
            }
        };
        Ok(Session {
            cfg,
            seed,
            seed_explicit,
            templates,
            backend,
        })
    }

    fn dataset(&self) -> Result<Dataset, CliError> {
        let records = match &self.cfg.data.survey {
            Some(p) => load_survey(p)?,
            None => synthetic_survey(&SynthSpec::small(
                self.cfg.data.synthetic_r1.unwrap_or(980),
                self.cfg.data.synthetic_r2.unwrap_or(120),
                self.seed,
            )),
        };
        let names = match &self.cfg.data.names {
            Some(p) => parse_corpus(&std::fs::read_to_string(p).map_err(io_err(p))?),
            None => parse_corpus(DEFAULT_NAMES),
        };
        Ok(Dataset::enrich(records, &names, self.seed)?)
    }

    fn experiment<'a>(&'a self, dataset: &'a Dataset) -> Experiment<'a> {
        Experiment {
            dataset,
            conditions: &self.cfg.conditions,
            backend: self.backend.as_ref(),
            templates: &self.templates,
            sim: self.cfg.sim.clone(),
            settings: self.cfg.validation.clone(),
        }
    }

    /// Live runs get a worker pool no wider than the backend's concurrency cap.
    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
        match self.cfg.backend.kind {
            BackendKind::Mock => Ok(f()),
            BackendKind::Live => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(self.cfg.backend.live.max_concurrency.max(1))
                    .build()
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                Ok(pool.install(f))
            }
        }
    }
}

/// Parse arguments from the process and run; returns the run directory, if any.
pub fn main_with_args<I, T>(args: I) -> Result<Option<PathBuf>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::Usage(e.to_string()))?;
    let shown: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    run(&cli, shown)
}

pub fn run(cli: &Cli, args: Vec<String>) -> Result<Option<PathBuf>, CliError> {
    if let Command::Synth { r1, r2, output } = &cli.command {
        let records = synthetic_survey(&SynthSpec::small(*r1, *r2, cli.seed.unwrap_or(0)));
        let f = std::fs::File::create(output).map_err(io_err(output))?;
        write_survey(&records, f).map_err(|e| CliError::Usage(e.to_string()))?;
        return Ok(None);
    }
    let session = Session::new(cli)?;
    let started = chrono::Utc::now();
    let stamp = started.format("%Y%m%dT%H%M%SZ").to_string();
    let command = cli.command.name();
    // validate the strategy name before creating anything on disk
    if let Command::Validate { strategy } = &cli.command {
        if !session.cfg.strategies.iter().any(|s| &s.name == strategy) {
            let names: Vec<&str> = session.cfg.strategies.iter().map(|s| s.name.as_str()).collect();
            return Err(CliError::Usage(format!(
                "unknown strategy `{strategy}`; defined strategies: {}",
                names.join(", ")
            )));
        }
    }
    let dir = RunDir::create(&session.cfg.output_dir, command, &stamp)?;
    match execute(cli, &session, &dir, command, args, started) {
        Ok(()) => dir.finish().map(Some),
        Err(e) => {
            dir.abandon();
            Err(e)
        }
    }
}

fn execute(
    cli: &Cli,
    session: &Session,
    dir: &RunDir,
    command: &str,
    args: Vec<String>,
    started: chrono::DateTime<chrono::Utc>,
) -> Result<(), CliError> {
    let log = match &cli.command {
        Command::SimulateStatic(a) => session.install(|| cmd_simulate_static(session, dir, a))??,
        Command::SimulateDynamic(a) => session.install(|| cmd_simulate_dynamic(session, dir, a))??,
        Command::Validate { strategy } => session.install(|| cmd_validate(session, dir, strategy))??,
        Command::Grid { residents } => session.install(|| cmd_grid(session, dir, *residents))??,
        Command::Match => cmd_match(session, dir)?,
        Command::Report(r) => cmd_report(session, dir, r)?,
        Command::Synth { .. } => unreachable!("handled before a run directory exists"),
    };
    dir.write("config.toml", &session.cfg.to_toml()?)?;
    dir.write("run_log.jsonl", &log)?;
    let meta = RunMeta {
        command,
        args,
        version: env!("CARGO_PKG_VERSION"),
        seed: session.seed,
        seed_explicit: session.seed_explicit,
        backend: session.cfg.backend.kind,
        model: session.backend.info().model,
        temperature: session.backend.info().temperature,
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        completions: log.lines().count(),
    };
    dir.write("run.json", &report::to_json(&meta)?)?;
    Ok(())
}

fn write_profiles(dir: &RunDir, prefix: &str, profiles: &[BehaviorProfile]) -> Result<(), CliError> {
    dir.report(&format!("{prefix}profiles.csv"), &report::profiles_csv(profiles)?)?;
    dir.report(&format!("{prefix}rationales.csv"), &report::rationales_csv(profiles)?)?;
    Ok(())
}

fn limited(mut v: Vec<usize>, limit: Option<usize>) -> Vec<usize> {
    if let Some(n) = limit {
        v.truncate(n);
    }
    v
}

fn cmd_simulate_static(s: &Session, dir: &RunDir, a: &StaticArgs) -> Result<String, CliError> {
    let data = s.dataset()?;
    let records = limited(data.select(&[a.round], &a.tiers), a.limit);
    if records.is_empty() {
        return Err(CliError::Usage("no residents match the selection".into()));
    }
    let fixed: Option<EpidemicCondition> = match a.condition.as_str() {
        "own" => None,
        "relaxation" => Some(policy_relaxation_condition()),
        label => Some(
            make_grid(&s.cfg.grid.spec)?
                .into_iter()
                .find(|c| c.label == label)
                .ok_or_else(|| CliError::Usage(format!("unknown condition `{label}`")))?,
        ),
    };
    let sim = Simulator::new(s.backend.as_ref(), &s.templates, s.cfg.sim.clone())?;
    let profiles = records
        .par_iter()
        .map(|&i| {
            let persona = &data.personas[i];
            let cond = match &fixed {
                Some(c) => c.clone(),
                None => s.cfg.conditions.condition_for(&data, i).map_err(ExperimentError::from)?,
            };
            Ok(sim.simulate_static(persona, &cond, &persona.risk_t1, &[])?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write_profiles(dir, "", &profiles)?;
    println!("simulated {} residents x {} behaviours", profiles.len(), Behavior::ALL.len());
    Ok(sim.log().to_jsonl())
}

fn theme_table(
    s: &Session,
    profiles: &[BehaviorProfile],
    risk_why: &[(String, String, Vec<String>)],
) -> Vec<(String, Vec<ThemeFrequency>)> {
    let mut out = Vec::new();
    let all: Vec<&str> = profiles
        .iter()
        .flat_map(|p| p.outcomes.iter().flat_map(|o| o.rationales.iter().map(String::as_str)))
        .collect();
    out.push(("all_behaviors".to_string(), tag_rationales(&all, &s.cfg.themes)));
    for b in Behavior::ALL {
        let texts: Vec<&str> = profiles
            .iter()
            .filter_map(|p| p.get(b))
            .flat_map(|o| o.rationales.iter().map(String::as_str))
            .collect();
        if !texts.is_empty() {
            out.push((b.id().to_string(), tag_rationales(&texts, &s.cfg.themes)));
        }
    }
    let risk: Vec<&str> = risk_why.iter().flat_map(|(_, _, w)| w.iter().map(String::as_str)).collect();
    if !risk.is_empty() {
        out.push(("risk_update".to_string(), tag_rationales(&risk, &s.cfg.themes)));
    }
    out
}

fn cmd_simulate_dynamic(s: &Session, dir: &RunDir, a: &DynamicArgs) -> Result<String, CliError> {
    let data = s.dataset()?;
    let exp = s.experiment(&data);
    match a.transitions {
        TransitionSource::Matched => {
            let (_, pairs) = match_rounds(&data, s.cfg.validation.match_seed)?;
            let pairs: Vec<_> = pairs
                .into_iter()
                .filter(|p| a.tiers.is_empty() || a.tiers.contains(&data.records[p.r2].measure_tier))
                .take(a.limit.unwrap_or(usize::MAX))
                .collect();
            if pairs.is_empty() {
                return Err(CliError::Usage("no transitions match the selection".into()));
            }
            let sim = Simulator::new(s.backend.as_ref(), &s.templates, s.cfg.sim.clone())?;
            let results = pairs
                .par_iter()
                .map(|&p| {
                    let tr = exp.transition(p)?;
                    let (risk, profile) = sim.simulate_dynamic(&tr, &[], &[])?;
                    Ok((
                        RiskRecord {
                            persona_id: tr.persona.id.clone(),
                            condition: dynamic_key(&tr),
                            score: risk.score.unwrap_or(f64::NAN),
                            level: risk.level.value(),
                        },
                        profile,
                    ))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let (risks, profiles): (Vec<_>, Vec<_>) = results.into_iter().unzip();
            dir.report("risks.csv", &report::risks_csv(&risks)?)?;
            write_profiles(dir, "", &profiles)?;
            let rows: Vec<(String, String)> = pairs
                .iter()
                .map(|p| {
                    (
                        data.records[p.r1].participant_id.clone(),
                        data.records[p.r2].participant_id.clone(),
                    )
                })
                .collect();
            let mut w = String::from("r1_id,r2_id\n");
            for (x, y) in rows {
                w.push_str(&format!("{x},{y}\n"));
            }
            dir.report("transitions.csv", &w)?;
            println!("simulated {} transitions", risks.len());
            Ok(sim.log().to_jsonl())
        }
        TransitionSource::Relaxation => {
            let records = limited(data.select(&[Round::R2], &a.tiers), a.limit);
            let sim = Simulator::new(s.backend.as_ref(), &s.templates, s.cfg.sim.clone())?;
            let run = simulate_shift(&sim, &exp, &[policy_relaxation_condition()], &records)?;
            dir.report("risks.csv", &report::risks_csv(&run.risks)?)?;
            write_profiles(dir, "", &run.profiles)?;
            dir.report("summary.csv", &report::summaries_csv(&run.summaries)?)?;
            dir.report(
                "themes.csv",
                &report::themes_csv(&theme_table(s, &run.profiles, &run.risk_rationales))?,
            )?;
            println!("simulated {} residents under policy relaxation", run.risks.len());
            Ok(sim.log().to_jsonl())
        }
    }
}

fn cmd_validate(s: &Session, dir: &RunDir, name: &str) -> Result<String, CliError> {
    let data = s.dataset()?;
    let exp = s.experiment(&data);
    let runs = exp.run_chain(name, &s.cfg.strategies)?;
    let mut summary = String::from("strategy,mode,kind,test_n,reference_n,admitted,passed,pass_rate,degenerate\n");
    let mut log = String::new();
    for run in &runs {
        let r = &run.report;
        let stem = &r.strategy;
        dir.report(&format!("{stem}.json"), &report::to_json(r)?)?;
        dir.report(&format!("{stem}_ks.csv"), &report::validation_csv(r)?)?;
        dir.report(&format!("{stem}_histograms.csv"), &report::histograms_csv(r)?)?;
        write_profiles(dir, &format!("{stem}_"), &run.profiles)?;
        if !run.risks.is_empty() {
            dir.report(&format!("{stem}_risks.csv"), &report::risks_csv(&run.risks)?)?;
        }
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.strategy,
            serde_plain(&r.mode),
            serde_plain(&r.kind),
            r.test_n,
            r.reference_n,
            r.gating.admitted.len(),
            r.passed().len(),
            r.pass_rate().map(|p| format!("{p:.1}")).unwrap_or_default(),
            r.gating.degenerate
        ));
        log.push_str(&run.log);
        println!(
            "{}: {} of {} behaviours pass ({})",
            r.strategy,
            r.passed().len(),
            r.gating.admitted.len(),
            r.pass_rate().map(|p| format!("{p:.1}%")).unwrap_or_else(|| "degenerate".into())
        );
    }
    dir.report("summary.csv", &summary)?;
    Ok(log)
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

fn cmd_grid(s: &Session, dir: &RunDir, residents: Option<usize>) -> Result<String, CliError> {
    let data = s.dataset()?;
    let exp = s.experiment(&data);
    let conditions = make_grid(&s.cfg.grid.spec)?;
    let pool = data.select(&s.cfg.grid.resident_rounds, &s.cfg.grid.resident_tiers);
    let n = residents.unwrap_or(s.cfg.grid.residents);
    if pool.is_empty() || n == 0 {
        return Err(CliError::Usage("no residents available for the grid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s.seed, &["grid-residents"]));
    let mut chosen: Vec<usize> = pool.choose_multiple(&mut rng, n.min(pool.len())).copied().collect();
    chosen.sort_unstable();
    let sim = Simulator::new(s.backend.as_ref(), &s.templates, s.cfg.sim.clone())?;
    let run = simulate_shift(&sim, &exp, &conditions, &chosen)?;
    dir.report("grid_summary.csv", &report::summaries_csv(&run.summaries)?)?;
    dir.report("grid_risks.csv", &report::risks_csv(&run.risks)?)?;
    dir.report("grid_profiles.csv", &report::profiles_csv(&run.profiles)?)?;
    println!("simulated {} conditions x {} residents", run.summaries.len(), chosen.len());
    Ok(sim.log().to_jsonl())
}

fn cmd_match(s: &Session, dir: &RunDir) -> Result<String, CliError> {
    let data = s.dataset()?;
    let (result, _) = match_rounds(&data, s.cfg.validation.match_seed)?;
    dir.report("pairs.csv", &report::pairs_csv(&result.pairs)?)?;
    dir.report("balance.csv", &report::balance_csv(&result.balance)?)?;
    #[derive(Serialize)]
    struct Summary {
        pairs: usize,
        iterations: usize,
        max_smd_after: std::collections::BTreeMap<String, f64>,
    }
    let summary = Summary {
        pairs: result.pairs.len(),
        iterations: result.iterations,
        max_smd_after: result.smd(),
    };
    dir.report("match.json", &report::to_json(&summary)?)?;
    println!("{} matched pairs", result.pairs.len());
    for (cov, v) in &summary.max_smd_after {
        println!("  {cov}: max SMD after matching {v:.4}");
    }
    Ok(String::new())
}

fn read_column(path: &Path, column: &str) -> Result<Vec<String>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        .clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::Usage(format!("{}: no column `{column}`", path.display())))?;
    rdr.records()
        .map(|r| {
            r.map(|r| r.get(idx).unwrap_or("").to_string())
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        })
        .collect()
}

fn numeric(path: &Path, values: Vec<String>) -> Result<Vec<f64>, CliError> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.trim().parse::<f64>().map_err(|_| {
                CliError::Usage(format!("{} row {}: `{v}` is not a number", path.display(), i + 1))
            })
        })
        .collect()
}

fn cmd_report(s: &Session, dir: &RunDir, r: &ReportCommand) -> Result<String, CliError> {
    match r {
        ReportCommand::Ks {
            sim,
            sim_column,
            obs,
            obs_column,
            exact,
        } => {
            let a = numeric(sim, read_column(sim, sim_column)?)?;
            let b = numeric(obs, read_column(obs, obs_column)?)?;
            let method = if *exact { KsMethod::ExactSmall } else { s.cfg.validation.ks_method };
            let ks = ks_two_sample_with(&a, &b, method).map_err(ExperimentError::from)?;
            let pass = crate::stats::passes(ks.p_value, s.cfg.validation.alpha);
            #[derive(Serialize)]
            struct Out {
                #[serde(flatten)]
                ks: crate::stats::KsResult,
                alpha: f64,
                pass: bool,
            }
            dir.report(
                "ks.json",
                &report::to_json(&Out {
                    ks,
                    alpha: s.cfg.validation.alpha,
                    pass,
                })?,
            )?;
            println!("D = {:.4}, p = {:.4} ({})", ks.statistic, ks.p_value, if pass { "pass" } else { "fail" });
        }
        ReportCommand::Impact { from, to, population } => {
            let e = environmental_impact(
                *from,
                *to,
                population.unwrap_or(s.cfg.impact.population),
                s.cfg.impact.coefficients,
            )?;
            dir.report("impact.csv", &report::impact_csv(&e)?)?;
            dir.report("impact.json", &report::to_json(&e)?)?;
            println!(
                "{:.2} L and {:.2} mg per person per year; {:.0} t total{}",
                e.per_capita_volume_l,
                e.per_capita_dbp_mg,
                e.total_tons,
                if e.avoided { " (avoided)" } else { "" }
            );
        }
        ReportCommand::Themes { input } => {
            let texts = read_column(input, "rationale")?;
            let table = vec![("all".to_string(), tag_rationales(&texts, &s.cfg.themes))];
            dir.report("themes.csv", &report::themes_csv(&table)?)?;
            for f in &table[0].1 {
                println!("{}: {:.1}% ({} of {})", f.theme, f.percent, f.count, f.total);
            }
        }
    }
    Ok(String::new())
}
