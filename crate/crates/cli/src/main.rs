use std::fs::File;
use std::collections::BTreeSet;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};

use proxyprobe::classify::{classify_all, write_classes, FixtureState, RpcState, StateReader};
use proxyprobe::context::{cluster_contexts, write_contexts};
use proxyprobe::detector::{
    detect_corpus, proxy_set, read_ground_truth, read_proxies, score, write_proxies, Findings,
};
use proxyprobe::fixture::{gen_fixture, FixtureError, FixtureSpec};
use proxyprobe::ingest::{self, Corpus, IngestError, IngestOptions};
use proxyprobe::lineage::{build_chains, pattern_catalog, write_catalog_csv, CreationIndex};
use proxyprobe::model::{Address, CallType};
use proxyprobe::pipeline::{self, FailureKind, PipelineError, RunConfig};
use proxyprobe::stats::Analysis;
use proxyprobe::tracegraph::monthly_multi_contract_ratio;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "proxyprobe", version, about = "Detect and analyse Ethereum proxy contracts from transaction traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate traces and contracts and write an index directory.
    Ingest {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        contracts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail on the first malformed line instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Call-graph metrics.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Detect proxies (writes proxies.jsonl); `detect score` scores them.
    #[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
    Detect {
        #[command(subcommand)]
        command: Option<DetectCommand>,
        #[command(flatten)]
        args: DetectArgs,
    },
    /// Creation chains of every proxy; `lineage catalog` writes the pattern catalog.
    #[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
    Lineage {
        #[command(subcommand)]
        command: Option<LineageCommand>,
        #[command(flatten)]
        args: LineageArgs,
    },
    /// Cluster proxies into usage contexts.
    Contexts {
        #[command(flatten)]
        index: IndexArg,
        #[command(flatten)]
        proxies: ProxiesArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Implementation kind and purpose of every proxy.
    Classify {
        #[command(flatten)]
        index: IndexArg,
        #[command(flatten)]
        proxies: ProxiesArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        state: StateArgs,
    },
    /// Run one analysis over a completed run directory.
    Stats {
        analysis: Analysis,
        /// Directory written by `run`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        state: StateArgs,
    },
    /// Run every stage from a TOML config and write a run manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a deterministic synthetic corpus with ground truth.
    GenFixture {
        /// TOML fixture spec; overrides --preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Preset::Bundled)]
        preset: Preset,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Monthly share of multi-contract transactions.
    Stats {
        #[command(flatten)]
        index: IndexArg,
        /// Only count transactions containing this call type.
        #[arg(long, value_enum)]
        call_type: Option<CallFilter>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    index: IndexArg,
    #[arg(long, required = true)]
    out: Option<PathBuf>,
    /// Also score against this ground truth and print the score as JSON.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DetectCommand {
    /// Score detections against a ground truth CSV (address,label).
    Score {
        #[command(flatten)]
        index: IndexArg,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Score JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LineageArgs {
    #[command(flatten)]
    index: IndexArg,
    #[command(flatten)]
    proxies: ProxiesArg,
    #[arg(long, required = true)]
    out: Option<PathBuf>,
    /// Also write the creational pattern catalog.
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LineageCommand {
    /// Creational pattern catalog as CSV.
    Catalog {
        #[command(flatten)]
        index: IndexArg,
        #[command(flatten)]
        proxies: ProxiesArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct IndexArg {
    /// Index directory written by `ingest`.
    #[arg(long = "corpus", visible_alias = "index", value_name = "DIR", required = true)]
    index: Option<PathBuf>,
}

#[derive(Args)]
struct ProxiesArg {
    /// Restrict to the proxies listed in a `detect` output; all detected
    /// proxies when omitted.
    #[arg(long)]
    proxies: Option<PathBuf>,
}

#[derive(Args)]
#[group(multiple = false)]
struct StateArgs {
    /// JSON state fixture.
    #[arg(long)]
    state: Option<PathBuf>,
    /// JSON-RPC endpoint for storage and call queries.
    #[arg(long)]
    rpc: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CallFilter {
    Call,
    Delegatecall,
    Staticcall,
    Callcode,
}

impl From<CallFilter> for CallType {
    fn from(f: CallFilter) -> Self {
        match f {
            CallFilter::Call => CallType::Call,
            CallFilter::Delegatecall => CallType::DelegateCall,
            CallFilter::Staticcall => CallType::StaticCall,
            CallFilter::Callcode => CallType::CallCode,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Bundled,
    Detection,
    Stress,
}

enum Failure {
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

type CmdResult = Result<(), Failure>;

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn internal(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Internal(e.into())
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Internal(_) => internal(e),
            _ => data(e),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Internal(_) => internal(e),
            _ => data(e),
        }
    }
}

impl From<FixtureError> for Failure {
    fn from(e: FixtureError) -> Self {
        match e {
            FixtureError::Encode(_) => internal(e),
            _ => data(e),
        }
    }
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string()).map_err(data)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    ensure_parent(path)?;
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| path.display().to_string())
        .map_err(data)
}

fn open_index(index: &IndexArg) -> Result<Corpus, Failure> {
    let dir = index.index.as_ref().ok_or_else(|| data(anyhow!("--corpus is required")))?;
    Ok(Corpus::open(dir)?)
}

fn required(path: Option<PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
    path.ok_or_else(|| data(anyhow!("--{flag} is required")))
}

/// Detects over the corpus, keeping only proxies named in `--proxies` if given.
fn findings(corpus: &Corpus, proxies: &ProxiesArg) -> Result<Findings, Failure> {
    let mut findings = detect_corpus(corpus);
    if let Some(path) = &proxies.proxies {
        let file = File::open(path).with_context(|| path.display().to_string()).map_err(data)?;
        let rows = read_proxies(BufReader::new(file))
            .map_err(|e| data(anyhow!("{}: {e}", path.display())))?;
        let wanted: BTreeSet<Address> = rows.iter().map(|r| r.proxy).collect();
        if let Some(missing) = wanted.iter().find(|a| !findings.contains_key(a)) {
            return Err(data(anyhow!("{}: proxy {missing} has no forwarding evidence in the corpus", path.display())));
        }
        findings.retain(|a, _| wanted.contains(a));
    }
    Ok(findings)
}

fn write_score(corpus: &Corpus, findings: &Findings, ground_truth: &Path, out: Option<&Path>) -> CmdResult {
    let gt = read_ground_truth(ground_truth).map_err(data)?;
    let report = score(findings, &gt, &corpus.contracts);
    let text = serde_json::to_string_pretty(&report).map_err(internal)? + "\n";
    match out {
        Some(path) => create(path)?.write_all(text.as_bytes()).map_err(internal),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_lineage(corpus: &Corpus, proxies: &ProxiesArg, out: Option<&Path>, catalog: Option<&Path>) -> CmdResult {
    let findings = findings(corpus, proxies)?;
    let creations = CreationIndex::build(corpus);
    let chains = build_chains(&proxy_set(&findings), &creations, &corpus.contracts);
    if let Some(out) = out {
        let mut w = create(out)?;
        for c in &chains {
            serde_json::to_writer(&mut w, c).map_err(internal)?;
            w.write_all(b"\n").map_err(internal)?;
        }
        w.flush().map_err(internal)?;
    }
    if let Some(path) = catalog {
        let contexts = cluster_contexts(&findings, &corpus.contracts, &creations, &chains);
        let complete: Vec<_> = chains.iter().filter_map(|o| o.complete().cloned()).collect();
        let cat = pattern_catalog(&complete, &contexts.representatives());
        write_catalog_csv(&cat, create(path)?).map_err(internal)?;
        eprintln!("{} creational patterns", cat.len());
    }
    Ok(())
}

fn reader(state: &StateArgs) -> Result<Box<dyn StateReader>, Failure> {
    Ok(match (&state.state, &state.rpc) {
        (Some(path), _) => Box::new(FixtureState::load(path).map_err(|e| data(anyhow!(e)))?),
        (None, Some(url)) => Box::new(RpcState::new(url.clone())),
        (None, None) => {
            log::warn!("no --state or --rpc given; storage reads return zero and calls revert");
            Box::new(FixtureState::default())
        }
    })
}

fn execute(command: Command) -> CmdResult {
    match command {
        Command::Ingest {
            traces,
            contracts,
            out,
            strict,
        } => {
            let opts = IngestOptions {
                strict,
                ..IngestOptions::default()
            };
            let m = ingest::ingest(&traces, &contracts, &out, &opts)?;
            eprintln!(
                "indexed {} traces in {} transactions ({} quarantined, {} rejected lines), {} contracts",
                m.accepted_traces, m.transactions, m.quarantined_transactions, m.rejected_lines, m.contracts
            );
        }
        Command::Graph(GraphCommand::Stats { index, call_type, out }) => {
            let corpus = open_index(&index)?;
            let series = monthly_multi_contract_ratio(&corpus, call_type.map(CallType::from));
            series.write_csv(create(&out)?).map_err(internal)?;
        }
        Command::Detect {
            command: Some(DetectCommand::Score { index, ground_truth, out }),
            ..
        } => {
            let corpus = open_index(&index)?;
            write_score(&corpus, &detect_corpus(&corpus), &ground_truth, out.as_deref())?;
        }
        Command::Detect { command: None, args } => {
            let corpus = open_index(&args.index)?;
            let out = required(args.out, "out")?;
            let findings = detect_corpus(&corpus);
            write_proxies(&findings, create(&out)?).map_err(internal)?;
            eprintln!("{} proxies detected", findings.len());
            if let Some(gt) = args.ground_truth {
                write_score(&corpus, &findings, &gt, None)?;
            }
        }
        Command::Lineage {
            command: Some(LineageCommand::Catalog { index, proxies, out }),
            ..
        } => {
            let corpus = open_index(&index)?;
            write_lineage(&corpus, &proxies, None, Some(&out))?;
        }
        Command::Lineage { command: None, args } => {
            let corpus = open_index(&args.index)?;
            let out = required(args.out, "out")?;
            write_lineage(&corpus, &args.proxies, Some(&out), args.catalog.as_deref())?;
        }
        Command::Contexts { index, proxies, out } => {
            let corpus = open_index(&index)?;
            let findings = findings(&corpus, &proxies)?;
            let creations = CreationIndex::build(&corpus);
            let chains = build_chains(&proxy_set(&findings), &creations, &corpus.contracts);
            let contexts = cluster_contexts(&findings, &corpus.contracts, &creations, &chains);
            write_contexts(&contexts, create(&out)?).map_err(internal)?;
            eprintln!("{} usage contexts", contexts.contexts.len());
        }
        Command::Classify {
            index,
            proxies,
            out,
            state,
        } => {
            let corpus = open_index(&index)?;
            let findings = findings(&corpus, &proxies)?;
            let reader = reader(&state)?;
            let classes = classify_all(&findings, &corpus.contracts, reader.as_ref());
            ensure_parent(&out)?;
            write_classes(&out, &classes).map_err(internal)?;
            let deferred = classes.iter().filter(|c| c.deferred.is_some()).count();
            eprintln!("{} proxies classified, {deferred} deferred", classes.len());
        }
        Command::Stats {
            analysis,
            run,
            out,
            state,
        } => {
            let mut cfg = RunConfig::new(run.join("unused"), run.join("unused"), &run);
            cfg.state = state.state;
            cfg.rpc = state.rpc;
            pipeline::stats_report(&run, analysis, &cfg, &out)?;
        }
        Command::Run { config, workers } => {
            let mut cfg = RunConfig::load(&config)?;
            if workers.is_some() {
                cfg.workers = workers;
            }
            let outcome = pipeline::run_pipeline(&cfg)?;
            for s in &outcome.manifest.stages {
                let how = match outcome.timings.stages.iter().find(|t| t.stage == s.stage) {
                    Some(t) if t.skipped => " (reused)".to_owned(),
                    Some(t) => format!(" ({:.2}s)", t.seconds),
                    None => String::new(),
                };
                eprintln!("{:<9} {:?}{how}", s.stage.as_str(), s.status);
            }
            if let Some((stage, f)) = outcome.manifest.failure() {
                let e = anyhow!("stage {stage} failed: {}", f.message);
                return Err(match f.kind {
                    FailureKind::Data => Failure::Data(e),
                    FailureKind::Internal => Failure::Internal(e),
                });
            }
        }
        Command::GenFixture { spec, preset, seed, out } => {
            let mut fixture = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| path.display().to_string()).map_err(data)?;
                    FixtureSpec::from_toml(&text).map_err(data)?
                }
                None => match preset {
                    Preset::Bundled => FixtureSpec::bundled(),
                    Preset::Detection => FixtureSpec::detection(),
                    Preset::Stress => FixtureSpec::stress(),
                },
            };
            if let Some(seed) = seed {
                fixture.seed = seed;
            }
            let (plant, _) = gen_fixture(&fixture, &out)?;
            eprintln!(
                "wrote {} transactions, {} trace records, {} proxies ({} inactive) to {}",
                plant.transactions,
                plant.records,
                plant.active_proxies.len() + plant.inactive_proxies.len(),
                plant.inactive_proxies.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
