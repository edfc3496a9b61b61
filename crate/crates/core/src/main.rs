use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rust_decimal::Decimal;

use reqcheck::agentproto::{build_verification_prompt, ModelAdapter, NoisyVerdicts};
use reqcheck::evalharness::{
    aggregate_runs, bootstrap_ci, cohens_kappa, krippendorff_alpha_ordinal, load_run_metrics, observed_agreement,
    read_labels, render_csv, render_text, score_labels, write_labels, AgreementStats, LabelFile, ReportRow, SdKind,
};
use reqcheck::guienv::{compile_plan, load_app, PlanSet, SimApp};
use reqcheck::orchestrator::RunConfig;
use reqcheck::reqmodel::{parse_requirements_structured, Outcome, Requirement, Verdict};
use reqcheck::storeapi::{AdapterFactory, OracleFactory, ScriptDirFactory, Service, Store};

#[derive(Parser)]
#[command(name = "reqcheck", version, about = "Verify requirements against GUI applications with a step-wise agent")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse block-format requirements and print them as JSON.
    Parse { file: PathBuf },
    /// Print the verification prompt for one requirement.
    Prompt {
        requirements: PathBuf,
        requirement_id: String,
        #[arg(long)]
        app: String,
    },
    /// Compile oracle plans into replay scripts (<out>/<app_id>/<req>.json).
    CompilePlan {
        #[arg(long)]
        app: PathBuf,
        #[arg(long)]
        requirements: PathBuf,
        #[arg(long)]
        plans: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify requirements of one app and print the resulting states.
    Run {
        #[arg(long)]
        app: PathBuf,
        #[arg(long)]
        requirements: PathBuf,
        /// Requirement ids to verify (default: all).
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        /// Store directory (default: a temporary directory).
        #[arg(long)]
        store: Option<PathBuf>,
        /// Write predicted labels here.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Flip each criterion verdict with this probability.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        agent: AgentOpts,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Score predicted labels against gold and aggregate run logs.
    Eval {
        /// Gold label CSV; repeat once per app.
        #[arg(long, required = true)]
        gold: Vec<PathBuf>,
        /// Predicted label CSV, in the same order as --gold.
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        /// Directory of run logs, in the same order as --gold.
        #[arg(long)]
        runs: Vec<PathBuf>,
        /// Row names (default: App-1, App-2, ...).
        #[arg(long)]
        name: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        bootstrap: usize,
        /// Use the sample standard deviation instead of the population one.
        #[arg(long)]
        sample_sd: bool,
    },
    /// Serve the HTTP API (and the tool server at /mcp).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        store: PathBuf,
        #[command(flatten)]
        agent: AgentOpts,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Serve the tool server over standard input/output.
    Mcp {
        #[arg(long)]
        store: PathBuf,
        #[command(flatten)]
        agent: AgentOpts,
        #[command(flatten)]
        run: RunOpts,
    },
}

#[derive(Args)]
struct AgentOpts {
    /// Oracle plan file; repeat for several apps.
    #[arg(long)]
    plans: Vec<PathBuf>,
    /// Directory of replay scripts laid out as <dir>/<app_id>/<req>.json.
    #[arg(long, conflicts_with = "plans")]
    scripts: Option<PathBuf>,
}

#[derive(Args)]
struct RunOpts {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    step_cap: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Input price per million tokens.
    #[arg(long)]
    rates_in: Option<Decimal>,
    /// Output price per million tokens.
    #[arg(long)]
    rates_out: Option<Decimal>,
}

type Result<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

impl RunOpts {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).map_err(err)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.step_cap {
            cfg.step_cap = v;
        }
        if let Some(v) = self.parallelism {
            cfg.parallelism = v;
            cfg.slots = cfg.slots.max(v);
        }
        if let Some(v) = self.rates_in {
            cfg.rates.input_per_million = v;
        }
        if let Some(v) = self.rates_out {
            cfg.rates.output_per_million = v;
        }
        cfg.validate().map_err(err)?;
        Ok(cfg)
    }
}

impl AgentOpts {
    fn factory(&self) -> Result<Arc<dyn AdapterFactory>> {
        if let Some(dir) = &self.scripts {
            return Ok(Arc::new(ScriptDirFactory::new(dir)));
        }
        if self.plans.is_empty() {
            return Err("give --plans or --scripts to choose the agent".into());
        }
        let sets = self.plans.iter().map(|p| PlanSet::load(p).map_err(err)).collect::<Result<Vec<_>>>()?;
        Ok(Arc::new(OracleFactory::new(sets)))
    }
}

struct Noisy {
    inner: Arc<dyn AdapterFactory>,
    p: f64,
    seed: u64,
}

impl AdapterFactory for Noisy {
    fn adapter(&self, app: &SimApp, req: &Requirement) -> std::result::Result<Box<dyn ModelAdapter>, String> {
        let mut h = DefaultHasher::new();
        (self.seed, &app.app_id, &req.id).hash(&mut h);
        Ok(Box::new(NoisyVerdicts::new(self.inner.adapter(app, req)?, self.p, h.finish())))
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_file(path: &Path) -> Result<Vec<Requirement>> {
    parse_requirements_structured(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_compile(app: &Path, requirements: &Path, plans: &Path, out: &Path) -> Result<()> {
    let app = load_app(app).map_err(err)?;
    let reqs = parse_file(requirements)?;
    let plans = PlanSet::load(plans).map_err(err)?;
    let dir = out.join(&app.app_id);
    std::fs::create_dir_all(&dir).map_err(err)?;
    for req in &reqs {
        let plan = plans.plans.get(&req.id).ok_or_else(|| format!("no plan for {}", req.id))?;
        let script = compile_plan(&app, req, plan).map_err(err)?;
        let path = dir.join(format!("{}.json", req.id));
        let text = serde_json::to_string_pretty(&script).map_err(err)? + "\n";
        std::fs::write(&path, text).map_err(err)?;
        println!("{} ({} entries)", path.display(), script.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    app: &Path,
    requirements: &Path,
    ids: &[String],
    store: Option<&Path>,
    pred: Option<&Path>,
    noise: Option<f64>,
    seed: u64,
    agent: &AgentOpts,
    run: &RunOpts,
) -> Result<()> {
    let cfg = run.config()?;
    let mut factory = agent.factory()?;
    if let Some(p) = noise {
        factory = Arc::new(Noisy { inner: factory, p, seed });
    }
    let tmp;
    let root = match store {
        Some(p) => p.to_path_buf(),
        None => {
            tmp = tempfile::tempdir().map_err(err)?;
            tmp.path().to_path_buf()
        }
    };
    let svc = Service::new(Store::open(&root).map_err(err)?, cfg, factory);
    let app_ref = app.to_str().ok_or("app path is not UTF-8")?;
    let setup = svc.create_setup(app_ref, &read(requirements)?).map_err(err)?;
    let ids = (!ids.is_empty()).then_some(ids);
    let run_ids = svc.start_verification(&setup.setup.id, ids, None).map_err(err)?;
    for id in &run_ids {
        let run = svc.wait(id, Duration::from_secs(24 * 3600)).map_err(err)?;
        let outcome = match (&run.summary, run.failure_reason) {
            (Some(s), _) => s.overall.as_str().to_string(),
            (None, Some(r)) => format!("failed ({})", serde_json::to_value(r).map_err(err)?.as_str().unwrap_or("?")),
            _ => format!("{:?}", run.status).to_lowercase(),
        };
        println!(
            "{}\t{}\t{}\tsteps={}\tin={}\tout={}\tcost={}",
            run.run_id,
            run.requirement_id,
            outcome,
            run.trajectory.len(),
            run.total_usage.input_tokens,
            run.total_usage.output_tokens,
            run.cost
        );
    }
    if let Some(pred) = pred {
        let reqs = svc.requirements(&setup.setup.id).map_err(err)?;
        write_labels(pred, &LabelFile::from_requirements(&reqs)).map_err(err)?;
    }
    if store.is_some() {
        println!("store: {}", root.display());
    }
    Ok(())
}

fn ordinal(o: Outcome) -> u32 {
    o.rank() as u32
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    gold: &[PathBuf],
    pred: &[PathBuf],
    runs: &[PathBuf],
    names: &[String],
    out: &Path,
    seed: u64,
    bootstrap: usize,
    sample_sd: bool,
) -> Result<()> {
    if gold.len() != pred.len() || (!runs.is_empty() && runs.len() != gold.len()) {
        return Err("--gold, --pred and --runs must be given the same number of times".into());
    }
    let kind = if sample_sd { SdKind::Sample } else { SdKind::Population };
    let mut rows = Vec::new();
    let (mut req_gold, mut req_pred, mut ac_gold, mut ac_pred) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let g = read_labels(g).map_err(|e| format!("{}: {e}", g.display()))?;
        let p = read_labels(p).map_err(|e| format!("{}: {e}", p.display()))?;
        let scores = score_labels(&g, &p).map_err(err)?;
        let aggregates = match runs.get(i) {
            Some(dir) => Some(aggregate_runs(&load_run_metrics(dir).map_err(err)?, kind).map_err(err)?),
            None => None,
        };
        let name = names.get(i).cloned().unwrap_or_else(|| format!("App-{}", i + 1));
        rows.push(ReportRow { name, scores, aggregates });
        for (id, o) in &g.requirements {
            req_gold.push(Some(ordinal(*o)));
            req_pred.push(Some(ordinal(p.requirements[id])));
        }
        for (id, v) in &g.criteria {
            ac_gold.push(*v == Verdict::Met);
            ac_pred.push(p.criteria[id] == Verdict::Met);
        }
    }
    std::fs::write(out, render_csv(&rows)).map_err(err)?;

    let ratings = vec![req_gold, req_pred];
    let agreement = match (
        krippendorff_alpha_ordinal(&ratings),
        bootstrap_ci(&ratings, bootstrap, seed),
        cohens_kappa(&ac_gold, &ac_pred),
        observed_agreement(&ac_gold, &ac_pred),
    ) {
        (Ok(alpha), Ok(ci), Ok(kappa), Ok(obs)) => {
            Some(AgreementStats { alpha, ci_low: ci.low, ci_high: ci.high, kappa, observed_agreement: obs })
        }
        (a, c, k, o) => {
            for e in [a.err(), c.err(), k.err(), o.err()].into_iter().flatten() {
                eprintln!("agreement: {e}");
            }
            None
        }
    };
    print!("{}", render_text(&rows, agreement.as_ref()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Parse { file } => parse_file(file).and_then(|r| serde_json::to_string_pretty(&r).map_err(err)).map(|s| println!("{s}")),
        Cmd::Prompt { requirements, requirement_id, app } => parse_file(requirements).and_then(|reqs| {
            let req = reqs.iter().find(|r| &r.id == requirement_id).ok_or_else(|| format!("no requirement {requirement_id}"))?;
            print!("{}", build_verification_prompt(req, app));
            Ok(())
        }),
        Cmd::CompilePlan { app, requirements, plans, out } => cmd_compile(app, requirements, plans, out),
        Cmd::Run { app, requirements, ids, store, pred, noise, seed, agent, run } => {
            cmd_run(app, requirements, ids, store.as_deref(), pred.as_deref(), *noise, *seed, agent, run)
        }
        Cmd::Eval { gold, pred, runs, name, out, seed, bootstrap, sample_sd } => {
            cmd_eval(gold, pred, runs, name, out, *seed, *bootstrap, *sample_sd)
        }
        Cmd::Serve { addr, store, agent, run } => serve(addr, store, agent, run),
        Cmd::Mcp { store, agent, run } => (|| {
            let svc = Service::new(Store::open(store).map_err(err)?, run.config()?, agent.factory()?);
            let stdin = std::io::stdin();
            reqcheck::mcpserver::serve_stdio(&svc, stdin.lock(), std::io::stdout().lock()).map_err(err)
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("reqcheck: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve(addr: &str, store: &Path, agent: &AgentOpts, run: &RunOpts) -> Result<()> {
    let svc = Service::new(Store::open(store).map_err(err)?, run.config()?, agent.factory()?);
    let rt = tokio::runtime::Runtime::new().map_err(err)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(err)?;
        eprintln!("reqcheck: listening on http://{}", listener.local_addr().map_err(err)?);
        axum::serve(listener, reqcheck::storeapi::router(svc)).await.map_err(err)
    })
}
