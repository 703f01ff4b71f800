//! End-to-end runs: stages in dependency order, digest-based reuse of
//! unchanged stages, and a run manifest tying every output to its inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{classify_all, kind_distribution, write_classes, FixtureState, ProxyClass, RpcState, StateReader};
use crate::context::{
    activity_levels, adoption_series, cluster_contexts, monthly_context_counts, utilization_series, write_contexts,
    Contexts,
};
use crate::detector::{detect_corpus, logic_per_proxy_ccdf, proxy_set, read_ground_truth, score, write_proxies, Findings};
use crate::digest::{file_digest, sha256_file, FileDigest};
use crate::ingest::{self, Corpus, IngestError, IngestOptions};
use crate::lineage::{build_chains, pattern_catalog, write_catalog_csv, ChainOutcome, CreationIndex};
use crate::model::{Address, CallType};
use crate::stats::{
    activity_report, bytecode_report, context_size_report, deployment_cost_report, gas_cost_report,
    purpose_pattern_report, size_style_report, Analysis, Comparison,
};
use crate::tracegraph::monthly_multi_contract_ratio;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "run_timings.json";
pub const INDEX_DIR: &str = "index";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Internal(String),
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}

/// A pipeline run. Relative paths in a config file resolve against the
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub traces: PathBuf,
    pub contracts: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    /// State fixture for the classifier; takes precedence over `rpc`.
    #[serde(default)]
    pub state: Option<PathBuf>,
    #[serde(default)]
    pub rpc: Option<String>,
    #[serde(default = "all_analyses")]
    pub analyses: Vec<Analysis>,
    /// Worker threads; `None` uses one per core. Outputs do not depend on it.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "strict_default")]
    pub strict: bool,
}

fn all_analyses() -> Vec<Analysis> {
    Analysis::ALL.to_vec()
}

fn strict_default() -> bool {
    true
}

impl RunConfig {
    pub fn new(traces: impl Into<PathBuf>, contracts: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            traces: traces.into(),
            contracts: contracts.into(),
            out: out.into(),
            ground_truth: None,
            state: None,
            rpc: None,
            analyses: all_analyses(),
            workers: None,
            strict: true,
        }
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.traces);
        resolve(&mut cfg.contracts);
        resolve(&mut cfg.out);
        cfg.ground_truth.as_mut().map(resolve);
        cfg.state.as_mut().map(resolve);
        if cfg.workers == Some(0) {
            return Err(PipelineError::Config("workers must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Detect,
    Lineage,
    Contexts,
    Classify,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Detect,
        Stage::Lineage,
        Stage::Contexts,
        Stage::Classify,
        Stage::Stats,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Detect => "detect",
            Stage::Lineage => "lineage",
            Stage::Contexts => "contexts",
            Stage::Classify => "classify",
            Stage::Stats => "stats",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Completed,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    /// Bad or unreadable input.
    Data,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub kind: FailureKind,
    pub message: String,
}

impl StageFailure {
    fn data(message: impl Into<String>) -> Self {
        StageFailure {
            kind: FailureKind::Data,
            message: message.into(),
        }
    }

    fn internal(message: impl fmt::Display) -> Self {
        StageFailure {
            kind: FailureKind::Internal,
            message: message.to_string(),
        }
    }
}

impl From<IngestError> for StageFailure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Internal(_) => StageFailure::internal(e),
            _ => StageFailure::data(e.to_string()),
        }
    }
}

impl From<io::Error> for StageFailure {
    fn from(e: io::Error) -> Self {
        StageFailure::internal(e)
    }
}

impl From<csv::Error> for StageFailure {
    fn from(e: csv::Error) -> Self {
        StageFailure::internal(e)
    }
}

impl From<serde_json::Error> for StageFailure {
    fn from(e: serde_json::Error) -> Self {
        StageFailure::internal(e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub params: BTreeMap<String, String>,
    /// Digests of everything the stage read: run inputs and upstream outputs.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the run directory → SHA-256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
}

/// Provenance for a run. Holds no timings or paths, so identical inputs and
/// parameters give a byte-identical manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub inputs: BTreeMap<String, FileDigest>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn succeeded(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Completed)
    }

    pub fn failure(&self) -> Option<(Stage, &StageFailure)> {
        self.stages.iter().find_map(|s| s.failure.as_ref().map(|f| (s.stage, f)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
    /// Outputs were reused from the previous run.
    pub skipped: bool,
}

/// Wall-clock sidecar, kept apart from the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub workers: usize,
    pub stages: Vec<StageTiming>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub timings: RunTimings,
}

enum Reader {
    Fixture(FixtureState),
    Rpc(RpcState),
}

impl Reader {
    fn get(&self) -> &dyn StateReader {
        match self {
            Reader::Fixture(s) => s,
            Reader::Rpc(s) => s,
        }
    }
}

/// Stage results computed on demand. A reused stage's results are only
/// recomputed when a later stage that does run needs them.
struct Work<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    corpus: Option<Corpus>,
    findings: Option<Findings>,
    proxies: BTreeSet<Address>,
    creations: Option<CreationIndex>,
    chains: Vec<ChainOutcome>,
    contexts: Option<Contexts>,
    classes: Option<Vec<ProxyClass>>,
}

type StageResult = Result<(), StageFailure>;

impl Work<'_> {
    fn corpus(&mut self) -> StageResult {
        if self.corpus.is_none() {
            self.corpus = Some(Corpus::open(self.out.join(INDEX_DIR))?);
        }
        Ok(())
    }

    fn findings(&mut self) -> StageResult {
        if self.findings.is_none() {
            self.corpus()?;
            let f = detect_corpus(self.corpus.as_ref().expect("loaded"));
            self.proxies = proxy_set(&f);
            self.findings = Some(f);
        }
        Ok(())
    }

    fn chains(&mut self) -> StageResult {
        if self.creations.is_none() {
            self.findings()?;
            let corpus = self.corpus.as_ref().expect("loaded");
            let creations = CreationIndex::build(corpus);
            self.chains = build_chains(&self.proxies, &creations, &corpus.contracts);
            self.creations = Some(creations);
        }
        Ok(())
    }

    fn contexts(&mut self) -> StageResult {
        if self.contexts.is_none() {
            self.chains()?;
            let corpus = self.corpus.as_ref().expect("loaded");
            self.contexts = Some(cluster_contexts(
                self.findings.as_ref().expect("detected"),
                &corpus.contracts,
                self.creations.as_ref().expect("built"),
                &self.chains,
            ));
        }
        Ok(())
    }

    fn reader(&self) -> Result<Reader, StageFailure> {
        if let Some(path) = &self.cfg.state {
            return FixtureState::load(path).map(Reader::Fixture).map_err(StageFailure::data);
        }
        Ok(match &self.cfg.rpc {
            Some(url) => Reader::Rpc(RpcState::new(url.clone())),
            None => Reader::Fixture(FixtureState::default()),
        })
    }

    fn classes(&mut self) -> StageResult {
        if self.classes.is_none() {
            self.findings()?;
            let reader = self.reader()?;
            let corpus = self.corpus.as_ref().expect("loaded");
            self.classes = Some(classify_all(self.findings.as_ref().expect("detected"), &corpus.contracts, reader.get()));
        }
        Ok(())
    }

    fn create(&self, rel: &str) -> Result<BufWriter<File>, StageFailure> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(BufWriter::new(File::create(&path)?))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> StageResult {
        let mut w = self.create(rel)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Runs `stage` and returns the output paths it wrote, relative to the run directory.
    fn run(&mut self, stage: Stage) -> Result<Vec<String>, StageFailure> {
        let mut outs: Vec<String> = Vec::new();
        match stage {
            Stage::Ingest => {
                let opts = IngestOptions {
                    strict: self.cfg.strict,
                    ..IngestOptions::default()
                };
                let (manifest, corpus) =
                    ingest::ingest_corpus(&self.cfg.traces, &self.cfg.contracts, self.out.join(INDEX_DIR), &opts)?;
                self.corpus = Some(corpus);
                if manifest.transactions == 0 {
                    return Err(StageFailure::data("no valid transactions in the traces input"));
                }
                for name in [ingest::INDEX_TRACES, ingest::INDEX_CONTRACTS, ingest::INDEX_ERRORS, ingest::INDEX_MANIFEST] {
                    outs.push(format!("{INDEX_DIR}/{name}"));
                }
                self.corpus()?;
                let corpus = self.corpus.as_ref().expect("loaded");
                for (rel, filter) in [
                    ("figures/multi_contract_ratio.csv", None),
                    ("figures/multi_contract_ratio_delegatecall.csv", Some(CallType::DelegateCall)),
                    ("figures/multi_contract_ratio_staticcall.csv", Some(CallType::StaticCall)),
                ] {
                    monthly_multi_contract_ratio(corpus, filter).write_csv(self.create(rel)?)?;
                    outs.push(rel.to_owned());
                }
            }
            Stage::Detect => {
                self.findings()?;
                let findings = self.findings.as_ref().expect("detected");
                let corpus = self.corpus.as_ref().expect("loaded");
                write_proxies(findings, self.create("proxies.jsonl")?)?;
                outs.push("proxies.jsonl".into());
                let mut w = csv::Writer::from_writer(self.create("figures/logic_per_proxy_ccdf.csv")?);
                w.write_record(["logic_count", "fraction"])?;
                for p in logic_per_proxy_ccdf(findings) {
                    w.write_record([p.n.to_string(), p.fraction.to_string()])?;
                }
                w.flush()?;
                outs.push("figures/logic_per_proxy_ccdf.csv".into());
                adoption_series(corpus, &self.proxies).write_csv(self.create("figures/adoption.csv")?)?;
                outs.push("figures/adoption.csv".into());
                let util = utilization_series(corpus, &self.proxies);
                util.all.write_csv(self.create("figures/utilization_all.csv")?)?;
                util.multi_contract.write_csv(self.create("figures/utilization_multi_contract.csv")?)?;
                outs.push("figures/utilization_all.csv".into());
                outs.push("figures/utilization_multi_contract.csv".into());
                if let Some(path) = &self.cfg.ground_truth {
                    let gt = read_ground_truth(path).map_err(|e| StageFailure::data(e.to_string()))?;
                    self.write_json("detection.json", &score(findings, &gt, &corpus.contracts))?;
                    outs.push("detection.json".into());
                }
            }
            Stage::Lineage => {
                self.chains()?;
                let mut w = self.create("chains.jsonl")?;
                for c in &self.chains {
                    serde_json::to_writer(&mut w, c)?;
                    w.write_all(b"\n")?;
                }
                w.flush()?;
                outs.push("chains.jsonl".into());
            }
            Stage::Contexts => {
                self.contexts()?;
                let contexts = self.contexts.as_ref().expect("clustered");
                write_contexts(contexts, self.create("contexts.jsonl")?)?;
                outs.push("contexts.jsonl".into());
                let complete: Vec<_> = self.chains.iter().filter_map(|o| o.complete().cloned()).collect();
                write_catalog_csv(&pattern_catalog(&complete, &contexts.representatives()), self.create("catalog.csv")?)?;
                outs.push("catalog.csv".into());
                monthly_context_counts(&contexts.contexts).write_csv(self.create("figures/monthly_contexts.csv")?)?;
                outs.push("figures/monthly_contexts.csv".into());
            }
            Stage::Classify => {
                self.classes()?;
                let classes = self.classes.as_ref().expect("classified");
                write_classes(self.out.join("classes.csv"), classes)?;
                outs.push("classes.csv".into());
                let mut w = csv::Writer::from_writer(self.create("figures/impl_kinds.csv")?);
                w.write_record(["impl_kind", "count", "share"])?;
                for (kind, count, share) in kind_distribution(classes) {
                    w.write_record([kind.to_string(), count.to_string(), share.to_string()])?;
                }
                w.flush()?;
                outs.push("figures/impl_kinds.csv".into());
            }
            Stage::Stats => {
                let mut analyses = self.cfg.analyses.clone();
                analyses.sort();
                analyses.dedup();
                for a in analyses {
                    outs.extend(self.analysis(a)?);
                }
            }
        }
        Ok(outs)
    }

    fn analysis(&mut self, a: Analysis) -> Result<Vec<String>, StageFailure> {
        self.contexts()?;
        if a == Analysis::PurposePattern {
            self.classes()?;
        }
        let corpus = self.corpus.as_ref().expect("loaded");
        let contexts = &self.contexts.as_ref().expect("clustered").contexts;
        let costs = || {
            deployment_cost_report(contexts, &self.chains, self.creations.as_ref().expect("built"), &corpus.contracts)
        };
        let (report, comparisons): (serde_json::Value, Vec<Comparison>) = match a {
            Analysis::Activity => {
                let r = activity_report(&activity_levels(corpus, &self.proxies));
                (serde_json::to_value(&r)?, vec![r])
            }
            Analysis::ContextSize => {
                let r = context_size_report(contexts, &self.chains);
                let mut cs = vec![r.by_style.clone()];
                cs.extend(r.by_pattern.iter().cloned());
                (serde_json::to_value(&r)?, cs)
            }
            Analysis::SizeStyle => (serde_json::to_value(size_style_report(contexts))?, Vec::new()),
            Analysis::PurposePattern => {
                let classes = self.classes.as_deref().expect("classified");
                (serde_json::to_value(purpose_pattern_report(contexts, &self.chains, classes))?, Vec::new())
            }
            Analysis::GasCost => {
                let r = gas_cost_report(costs());
                let cs = vec![r.singleton.clone(), r.singleton_excluding_factories.clone(), r.multi.clone()];
                (serde_json::to_value(&r)?, cs)
            }
            Analysis::Bytecode => {
                let r = bytecode_report(&costs());
                let mut cs = vec![r.by_style.clone()];
                cs.extend(r.by_size_class.iter().cloned());
                (serde_json::to_value(&r)?, cs)
            }
        };
        let mut outs = Vec::new();
        let rel = format!("stats/{a}.json");
        self.write_json(&rel, &report)?;
        outs.push(rel);
        if !comparisons.is_empty() {
            let rel = format!("figures/{a}_ccdf.csv");
            write_ccdf_csv(&comparisons, self.create(&rel)?)?;
            outs.push(rel);
        }
        Ok(outs)
    }
}

/// Long-format CCDF rows: comparison, series, threshold, fraction.
pub fn write_ccdf_csv<W: Write>(comparisons: &[Comparison], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["comparison", "series", "threshold", "fraction"])?;
    for c in comparisons {
        let name = format!("{} vs {}", c.a, c.b);
        for (series, rows) in [(&c.a, &c.ccdf_a), (&c.b, &c.ccdf_b)] {
            for r in rows {
                w.write_record([name.as_str(), series.as_str(), &r.threshold.to_string(), &r.fraction.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs a single analysis over an existing run directory and writes its
/// report to `out`, embedding the digests of the run outputs it read.
pub fn stats_report(run_dir: &Path, analysis: Analysis, cfg: &RunConfig, out: &Path) -> Result<(), PipelineError> {
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", manifest_path.display())))?;
    let mut inputs = BTreeMap::new();
    for s in manifest.stages.iter().filter(|s| s.stage != Stage::Stats) {
        inputs.extend(s.outputs.clone());
    }
    let mut work = Work::new(cfg, run_dir);
    let scratch = tempfile::tempdir().map_err(io_err(run_dir))?;
    work.out = scratch.path();
    // Reads stay in the run directory; only the analysis writes go to scratch.
    work.corpus = Some(Corpus::open(run_dir.join(INDEX_DIR)).map_err(|e| PipelineError::Config(e.to_string()))?);
    work.analysis(analysis).map_err(|f| PipelineError::Internal(f.message))?;
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(scratch.path().join(format!("stats/{analysis}.json"))).map_err(io_err(scratch.path()))?,
    )
    .map_err(|e| PipelineError::Internal(e.to_string()))?;
    let doc = serde_json::json!({
        "analysis": analysis.as_str(),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "inputs": inputs,
        "report": report,
    });
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(&doc).map_err(|e| PipelineError::Internal(e.to_string()))? + "\n";
    std::fs::write(out, text).map_err(io_err(out))
}

impl<'a> Work<'a> {
    fn new(cfg: &'a RunConfig, out: &'a Path) -> Self {
        Work {
            cfg,
            out,
            corpus: None,
            findings: None,
            proxies: BTreeSet::new(),
            creations: None,
            chains: Vec::new(),
            contexts: None,
            classes: None,
        }
    }
}

fn stage_params(stage: Stage, cfg: &RunConfig) -> BTreeMap<String, String> {
    let mut p = BTreeMap::new();
    match stage {
        Stage::Ingest => {
            p.insert("strict".into(), cfg.strict.to_string());
        }
        Stage::Detect => {
            p.insert("ground_truth".into(), cfg.ground_truth.is_some().to_string());
        }
        Stage::Lineage => {
            p.insert("max_chain_depth".into(), crate::lineage::MAX_CHAIN_DEPTH.to_string());
        }
        Stage::Contexts => {}
        Stage::Classify => {
            let source = match (&cfg.state, &cfg.rpc) {
                (Some(_), _) => "fixture".to_owned(),
                (None, Some(url)) => format!("rpc:{url}"),
                (None, None) => "none".to_owned(),
            };
            p.insert("state_source".into(), source);
        }
        Stage::Stats => {
            let mut names: Vec<&str> = cfg.analyses.iter().map(Analysis::as_str).collect();
            names.sort_unstable();
            names.dedup();
            p.insert("analyses".into(), names.join(","));
        }
    }
    p
}

fn external_inputs(stage: Stage, digests: &BTreeMap<String, FileDigest>) -> BTreeMap<String, String> {
    let names: &[&str] = match stage {
        Stage::Ingest => &["traces", "contracts"],
        Stage::Detect => &["ground_truth"],
        Stage::Classify => &["state"],
        _ => &[],
    };
    names
        .iter()
        .filter_map(|n| digests.get(*n).map(|d| (format!("input:{n}"), d.sha256.clone())))
        .collect()
}

fn previous_manifest(out: &Path) -> Option<RunManifest> {
    let text = std::fs::read_to_string(out.join(MANIFEST_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

fn outputs_intact(out: &Path, record: &StageRecord) -> bool {
    record
        .outputs
        .iter()
        .all(|(rel, sha)| sha256_file(out.join(rel)).is_ok_and(|d| &d == sha))
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Internal(e.to_string()))? + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

/// Runs every stage in order. Stage failures are recorded in the manifest
/// rather than returned; later stages are then marked not-run.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome, PipelineError> {
    let workers = cfg.workers.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Internal(e.to_string()))?;
    pool.install(|| run_stages(cfg, workers))
}

fn run_stages(cfg: &RunConfig, workers: usize) -> Result<RunOutcome, PipelineError> {
    let out = cfg.out.as_path();
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let previous = previous_manifest(out);

    let mut digests = BTreeMap::new();
    let mut input_failure = None;
    let named: [(&str, Option<&PathBuf>); 4] = [
        ("traces", Some(&cfg.traces)),
        ("contracts", Some(&cfg.contracts)),
        ("ground_truth", cfg.ground_truth.as_ref()),
        ("state", cfg.state.as_ref()),
    ];
    for (name, path) in named {
        let Some(path) = path else { continue };
        match file_digest(path) {
            Ok(d) => {
                digests.insert(name.to_owned(), d);
            }
            Err(e) => {
                input_failure.get_or_insert_with(|| StageFailure::data(format!("{}: {e}", path.display())));
            }
        }
    }

    let mut work = Work::new(cfg, out);
    let mut upstream: BTreeMap<String, String> = BTreeMap::new();
    let mut stages = Vec::new();
    let mut timings = Vec::new();
    let mut halted = false;
    for stage in Stage::ALL {
        let params = stage_params(stage, cfg);
        let mut inputs = upstream.clone();
        inputs.extend(external_inputs(stage, &digests));
        let mut record = StageRecord {
            stage,
            status: StageStatus::NotRun,
            params,
            inputs,
            outputs: BTreeMap::new(),
            failure: None,
        };
        if halted {
            stages.push(record);
            continue;
        }
        let started = Instant::now();
        let reusable = previous
            .as_ref()
            .and_then(|m| m.stage(stage))
            .filter(|r| {
                r.status == StageStatus::Completed && r.params == record.params && r.inputs == record.inputs && outputs_intact(out, r)
            })
            .cloned();
        let skipped = reusable.is_some();
        let result = match reusable {
            Some(prev) => Ok(prev.outputs),
            None => match input_failure.take() {
                Some(f) => Err(f),
                None => work.run(stage).and_then(|rels| {
                    rels.into_iter()
                        .map(|rel| sha256_file(out.join(&rel)).map(|d| (rel, d)).map_err(StageFailure::from))
                        .collect::<Result<BTreeMap<_, _>, _>>()
                }),
            },
        };
        match result {
            Ok(outputs) => {
                upstream.extend(outputs.clone());
                record.outputs = outputs;
                record.status = StageStatus::Completed;
            }
            Err(f) => {
                log::error!("stage {stage} failed: {}", f.message);
                record.status = StageStatus::Failed;
                record.failure = Some(f);
                halted = true;
            }
        }
        if skipped {
            log::info!("stage {stage}: inputs unchanged, outputs reused");
        }
        timings.push(StageTiming {
            stage,
            seconds: started.elapsed().as_secs_f64(),
            skipped,
        });
        stages.push(record);
    }

    let manifest = RunManifest {
        tool: "proxyprobe".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        inputs: digests,
        stages,
    };
    let timings = RunTimings { workers, stages: timings };
    write_pretty(&out.join(MANIFEST_FILE), &manifest)?;
    write_pretty(&out.join(TIMINGS_FILE), &timings)?;
    Ok(RunOutcome { manifest, timings })
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}
