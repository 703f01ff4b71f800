//! Loading trace and contract exports into validated records, grouping
//! traces per transaction, and writing the derived index directory.

mod extsort;
pub mod schema;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::iter::Peekable;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extsort::{ExternalSorter, SortedRecords};

use crate::digest;
use crate::model::{Address, ContractRecord, Month, TraceAddress, TraceRecord, TxHash};
use schema::{RawContract, RawTrace};

pub const INDEX_TRACES: &str = "traces.jsonl";
pub const INDEX_CONTRACTS: &str = "contracts.jsonl";
pub const INDEX_ERRORS: &str = "errors.jsonl";
pub const INDEX_MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Schema(LineError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl IngestError {
    pub(crate) fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        IngestError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// A rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub file: String,
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Jsonl,
        }
    }
}

enum RowSource {
    Jsonl {
        reader: BufReader<digest::HashingReader<File>>,
        buf: String,
        line: usize,
    },
    Csv {
        reader: csv::Reader<digest::HashingReader<File>>,
        headers: csv::StringRecord,
        record: csv::StringRecord,
    },
}

/// Parses one row at a time and hands it to `convert`.
struct RowReader {
    source: RowSource,
    file: String,
    name: String,
}

enum Row<T> {
    Ok(T),
    Bad(LineError),
    Io(IngestError),
}

impl RowReader {
    fn open(path: &Path) -> Result<Self, IngestError> {
        let file_name = path.display().to_string();
        let source = match InputFormat::from_path(path) {
            InputFormat::Jsonl => RowSource::Jsonl {
                reader: BufReader::with_capacity(
                    1 << 16,
                    digest::HashingReader::new(File::open(path).map_err(|e| IngestError::io(path, e))?),
                ),
                buf: String::new(),
                line: 0,
            },
            InputFormat::Csv => {
                let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
                let mut reader = csv::ReaderBuilder::new()
                    .has_headers(true)
                    .from_reader(digest::HashingReader::new(file));
                let headers = reader
                    .headers()
                    .map_err(|e| IngestError::io(path, io::Error::new(io::ErrorKind::InvalidData, e)))?
                    .clone();
                RowSource::Csv {
                    reader,
                    headers,
                    record: csv::StringRecord::new(),
                }
            }
        };
        Ok(RowReader {
            source,
            file: file_name,
            name: digest::file_name(path),
        })
    }

    /// Digest of the whole input file, including rows not yet read.
    fn digest(self) -> Result<digest::FileDigest, IngestError> {
        let inner = match self.source {
            RowSource::Jsonl { reader, .. } => reader.into_inner(),
            RowSource::Csv { reader, .. } => reader.into_inner(),
        };
        let sha256 = inner.finish().map_err(|e| IngestError::io(&self.file, e))?;
        Ok(digest::FileDigest { name: self.name, sha256 })
    }

    fn next_row<T, J, C>(&mut self, from_json: J, from_csv: C) -> Option<Row<T>>
    where
        J: Fn(&str) -> Result<T, String>,
        C: Fn(&csv::StringRecord, &csv::StringRecord) -> Result<T, String>,
    {
        match &mut self.source {
            RowSource::Jsonl { reader, buf, line } => loop {
                buf.clear();
                match reader.read_line(buf) {
                    Ok(0) => return None,
                    Ok(_) => {
                        *line += 1;
                        let text = buf.trim();
                        if text.is_empty() {
                            continue;
                        }
                        return Some(match from_json(text) {
                            Ok(v) => Row::Ok(v),
                            Err(message) => Row::Bad(LineError {
                                file: self.file.clone(),
                                line: *line,
                                message,
                            }),
                        });
                    }
                    Err(e) => return Some(Row::Io(IngestError::io(&self.file, e))),
                }
            },
            RowSource::Csv {
                reader,
                headers,
                record,
            } => match reader.read_record(record) {
                Ok(false) => None,
                Ok(true) => {
                    // Header is line 1.
                    let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
                    Some(match from_csv(record, headers) {
                        Ok(v) => Row::Ok(v),
                        Err(message) => Row::Bad(LineError {
                            file: self.file.clone(),
                            line,
                            message,
                        }),
                    })
                }
                Err(e) => {
                    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                    if e.is_io_error() {
                        Some(Row::Io(IngestError::io(&self.file, io::Error::new(io::ErrorKind::Other, e))))
                    } else {
                        Some(Row::Bad(LineError {
                            file: self.file.clone(),
                            line,
                            message: e.to_string(),
                        }))
                    }
                }
            },
        }
    }
}

fn trace_from_json(text: &str) -> Result<TraceRecord, String> {
    let raw: RawTrace = serde_json::from_str(text).map_err(|e| e.to_string())?;
    raw.into_record()
}

fn trace_from_csv(record: &csv::StringRecord, headers: &csv::StringRecord) -> Result<TraceRecord, String> {
    let raw: RawTrace = record.deserialize(Some(headers)).map_err(|e| e.to_string())?;
    raw.into_record()
}

fn contract_from_json(text: &str) -> Result<ContractRecord, String> {
    let raw: RawContract = serde_json::from_str(text).map_err(|e| e.to_string())?;
    raw.into_record()
}

fn contract_from_csv(record: &csv::StringRecord, headers: &csv::StringRecord) -> Result<ContractRecord, String> {
    let raw: RawContract = record.deserialize(Some(headers)).map_err(|e| e.to_string())?;
    raw.into_record()
}

/// Streaming reader over a traces file.
///
/// In lenient mode malformed lines are collected in [`TraceReader::line_errors`]
/// and skipped; in strict mode the first one is yielded as an error and the
/// stream ends.
pub struct TraceReader {
    rows: RowReader,
    strict: bool,
    errors: Vec<LineError>,
    accepted: usize,
    done: bool,
}

impl TraceReader {
    pub fn line_errors(&self) -> &[LineError] {
        &self.errors
    }

    pub fn into_line_errors(self) -> Vec<LineError> {
        self.errors
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    /// Line errors plus the digest of the whole input file.
    pub fn finish(self) -> Result<(Vec<LineError>, digest::FileDigest), IngestError> {
        let digest = self.rows.digest()?;
        Ok((self.errors, digest))
    }
}

impl Iterator for TraceReader {
    type Item = Result<TraceRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            match self.rows.next_row(trace_from_json, trace_from_csv) {
                None => {
                    self.done = true;
                    return None;
                }
                Some(Row::Ok(rec)) => {
                    self.accepted += 1;
                    return Some(Ok(rec));
                }
                Some(Row::Bad(err)) => {
                    if self.strict {
                        self.done = true;
                        return Some(Err(IngestError::Schema(err)));
                    }
                    log::warn!("skipping malformed trace: {err}");
                    self.errors.push(err);
                }
                Some(Row::Io(err)) => {
                    self.done = true;
                    return Some(Err(err));
                }
            }
        }
    }
}

/// Opens a JSONL (or `.csv`) traces file for streaming.
pub fn load_traces(path: impl AsRef<Path>, strict: bool) -> Result<TraceReader, IngestError> {
    Ok(TraceReader {
        rows: RowReader::open(path.as_ref())?,
        strict,
        errors: Vec::new(),
        accepted: 0,
        done: false,
    })
}

/// Every trace of one transaction, in call-tree order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxGroup {
    pub transaction_hash: TxHash,
    pub traces: Vec<TraceRecord>,
    /// The EOA that sent the transaction (the root trace's caller).
    pub sender: Address,
}

impl TxGroup {
    pub fn root(&self) -> &TraceRecord {
        // Validation guarantees the root sorts first.
        &self.traces[0]
    }

    pub fn block_number(&self) -> u64 {
        self.root().block_number
    }

    pub fn month(&self) -> Month {
        self.root().month()
    }

    /// Builds a group from traces of a single transaction, in any order.
    pub fn new(mut traces: Vec<TraceRecord>) -> Result<Self, QuarantineReason> {
        extsort::sort_records(&mut traces);
        Self::from_sorted(traces)
    }

    fn from_sorted(traces: Vec<TraceRecord>) -> Result<Self, QuarantineReason> {
        let Some(first) = traces.first() else {
            return Err(QuarantineReason::MissingRoot);
        };
        let hash = first.transaction_hash;
        if let Some(other) = traces.iter().find(|t| t.transaction_hash != hash) {
            return Err(QuarantineReason::MixedTransactions(other.transaction_hash));
        }
        for pair in traces.windows(2) {
            if pair[0].trace_address == pair[1].trace_address {
                return Err(QuarantineReason::DuplicateTraceAddress(pair[0].trace_address.clone()));
            }
        }
        if !first.is_root() {
            return Err(QuarantineReason::MissingRoot);
        }
        Ok(TxGroup {
            transaction_hash: hash,
            sender: first.from,
            traces,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum QuarantineReason {
    MissingRoot,
    DuplicateTraceAddress(TraceAddress),
    MixedTransactions(TxHash),
}

impl std::fmt::Display for QuarantineReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuarantineReason::MissingRoot => f.write_str("transaction has no root trace"),
            QuarantineReason::DuplicateTraceAddress(ta) => write!(f, "duplicate trace_address {ta:?}"),
            QuarantineReason::MixedTransactions(h) => write!(f, "group mixes transaction {h}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantinedTx {
    pub transaction_hash: TxHash,
    pub trace_count: usize,
    pub reason: QuarantineReason,
}

#[derive(Debug, Clone)]
pub struct GroupOptions {
    /// Maximum number of trace records buffered in memory before spilling.
    pub memory_budget: usize,
    /// Parent directory for spill files; the system temp dir when unset.
    pub scratch_dir: Option<PathBuf>,
}

impl Default for GroupOptions {
    fn default() -> Self {
        GroupOptions {
            memory_budget: 2_000_000,
            scratch_dir: None,
        }
    }
}

/// Transaction groups in ascending `(block_number, transaction_hash)` order.
/// Invalid transactions are withheld and listed in [`TxGroups::quarantined`].
/// All traces of a transaction must carry the same block number.
pub struct TxGroups {
    records: Peekable<SortedRecords>,
    quarantined: Vec<QuarantinedTx>,
    spilled_runs: usize,
}

impl TxGroups {
    pub fn quarantined(&self) -> &[QuarantinedTx] {
        &self.quarantined
    }

    pub fn into_quarantined(self) -> Vec<QuarantinedTx> {
        self.quarantined
    }

    pub fn spilled_runs(&self) -> usize {
        self.spilled_runs
    }
}

impl Iterator for TxGroups {
    type Item = Result<TxGroup, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let first = match self.records.next()? {
                Ok(rec) => rec,
                Err(e) => return Some(Err(e)),
            };
            let key = (first.block_number, first.transaction_hash);
            let mut traces = vec![first];
            loop {
                match self.records.peek() {
                    Some(Ok(next)) if (next.block_number, next.transaction_hash) == key => {
                        traces.push(self.records.next().expect("peeked").expect("peeked ok"));
                    }
                    Some(Err(_)) => match self.records.next() {
                        Some(Err(e)) => return Some(Err(e)),
                        _ => unreachable!("peeked an error"),
                    },
                    _ => break,
                }
            }
            let trace_count = traces.len();
            match TxGroup::from_sorted(traces) {
                Ok(group) => return Some(Ok(group)),
                Err(reason) => {
                    log::warn!("quarantined transaction {}: {reason}", key.1);
                    self.quarantined.push(QuarantinedTx {
                        transaction_hash: key.1,
                        trace_count,
                        reason,
                    });
                }
            }
        }
    }
}

/// Sorts (externally when over budget) and groups trace records by transaction.
pub fn group_by_transaction<I>(records: I, opts: &GroupOptions) -> Result<TxGroups, IngestError>
where
    I: IntoIterator<Item = Result<TraceRecord, IngestError>>,
{
    let mut sorter = ExternalSorter::new(opts.memory_budget, opts.scratch_dir.clone());
    for rec in records {
        sorter.push(rec?)?;
    }
    let spilled_runs = sorter.spilled_runs();
    Ok(TxGroups {
        records: sorter.finish()?.peekable(),
        quarantined: Vec::new(),
        spilled_runs,
    })
}

/// Contract records keyed by address. Addresses absent from the index are
/// externally owned accounts.
#[derive(Debug, Clone, Default)]
pub struct ContractIndex {
    by_address: HashMap<Address, ContractRecord>,
}

impl ContractIndex {
    pub fn get(&self, address: &Address) -> Option<&ContractRecord> {
        self.by_address.get(address)
    }

    pub fn is_contract(&self, address: &Address) -> bool {
        self.by_address.contains_key(address)
    }

    pub fn len(&self) -> usize {
        self.by_address.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_address.is_empty()
    }

    /// Records in ascending address order.
    pub fn sorted(&self) -> Vec<&ContractRecord> {
        let mut all: Vec<_> = self.by_address.values().collect();
        all.sort_by_key(|c| c.address);
        all
    }

    /// Inserts a record; on a duplicate address the earliest creation wins.
    /// Returns a warning when a duplicate was resolved.
    pub fn insert(&mut self, record: ContractRecord) -> Option<String> {
        match self.by_address.get_mut(&record.address) {
            None => {
                self.by_address.insert(record.address, record);
                None
            }
            Some(existing) => {
                let warning = format!(
                    "duplicate contract {} (created {} and {}); keeping the earliest",
                    record.address,
                    crate::model::format_timestamp(&existing.created_at),
                    crate::model::format_timestamp(&record.created_at)
                );
                if (record.created_at, record.block_number) < (existing.created_at, existing.block_number) {
                    *existing = record;
                }
                Some(warning)
            }
        }
    }
}

impl FromIterator<ContractRecord> for ContractIndex {
    fn from_iter<T: IntoIterator<Item = ContractRecord>>(iter: T) -> Self {
        let mut index = ContractIndex::default();
        for rec in iter {
            index.insert(rec);
        }
        index
    }
}

#[derive(Debug, Default)]
pub struct ContractLoad {
    pub index: ContractIndex,
    pub warnings: Vec<String>,
    pub line_errors: Vec<LineError>,
}

/// Loads the contracts file into an address lookup.
pub fn contract_lookup(path: impl AsRef<Path>, strict: bool) -> Result<ContractLoad, IngestError> {
    let mut rows = RowReader::open(path.as_ref())?;
    let mut load = ContractLoad::default();
    while let Some(row) = rows.next_row(contract_from_json, contract_from_csv) {
        match row {
            Row::Ok(rec) => {
                if let Some(w) = load.index.insert(rec) {
                    log::warn!("{w}");
                    load.warnings.push(w);
                }
            }
            Row::Bad(err) if strict => return Err(IngestError::Schema(err)),
            Row::Bad(err) => {
                log::warn!("skipping malformed contract: {err}");
                load.line_errors.push(err);
            }
            Row::Io(err) => return Err(err),
        }
    }
    Ok(load)
}

/// An ingested corpus held in memory: validated transaction groups in
/// chronological order plus the contract lookup.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub groups: Vec<TxGroup>,
    pub contracts: ContractIndex,
}

impl Corpus {
    pub fn new(groups: Vec<TxGroup>, contracts: ContractIndex) -> Self {
        Corpus { groups, contracts }
    }

    /// Groups raw records in memory; invalid transactions are returned separately.
    pub fn from_records(
        traces: Vec<TraceRecord>,
        contracts: Vec<ContractRecord>,
    ) -> (Corpus, Vec<QuarantinedTx>) {
        let mut groups_iter = group_by_transaction(traces.into_iter().map(Ok), &GroupOptions {
            memory_budget: usize::MAX,
            scratch_dir: None,
        })
        .expect("in-memory grouping cannot fail");
        let groups: Vec<TxGroup> = groups_iter
            .by_ref()
            .map(|g| g.expect("in-memory grouping cannot fail"))
            .collect();
        let quarantined = groups_iter.into_quarantined();
        (Corpus::new(groups, contracts.into_iter().collect()), quarantined)
    }

    /// Loads an index directory written by [`ingest`].
    pub fn open(index_dir: impl AsRef<Path>) -> Result<Corpus, IngestError> {
        let dir = index_dir.as_ref();
        let reader = load_traces(dir.join(INDEX_TRACES), true)?;
        let mut groups_iter = group_by_transaction(reader, &GroupOptions::default())?;
        let groups = groups_iter.by_ref().collect::<Result<Vec<_>, _>>()?;
        if let Some(q) = groups_iter.quarantined().first() {
            return Err(IngestError::Internal(format!(
                "index contains invalid transaction {}: {}",
                q.transaction_hash, q.reason
            )));
        }
        let contracts = contract_lookup(dir.join(INDEX_CONTRACTS), true)?.index;
        Ok(Corpus::new(groups, contracts))
    }

    pub fn is_contract(&self, address: &Address) -> bool {
        self.contracts.is_contract(address)
    }

    pub fn trace_count(&self) -> usize {
        self.groups.iter().map(|g| g.traces.len()).sum()
    }

    /// First and last month with transactions.
    pub fn month_span(&self) -> Option<(Month, Month)> {
        let first = self.groups.iter().map(TxGroup::month).min()?;
        let last = self.groups.iter().map(TxGroup::month).max()?;
        Some((first, last))
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub strict: bool,
    pub group: GroupOptions,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            strict: false,
            group: GroupOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorEntry {
    Line(LineError),
    Quarantined(QuarantinedTx),
    Warning { message: String },
}

/// Provenance manifest for an index directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub inputs: BTreeMap<String, digest::FileDigest>,
    pub outputs: BTreeMap<String, String>,
    pub accepted_traces: usize,
    pub rejected_lines: usize,
    pub transactions: usize,
    pub quarantined_transactions: usize,
    pub contracts: usize,
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, &item).map_err(|e| IngestError::Internal(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| IngestError::io(path, e))?;
    }
    out.flush().map_err(|e| IngestError::io(path, e))
}

/// Validates both inputs and writes the index directory: grouped traces in
/// `(block_number, transaction_hash, trace_address)` order, contracts by
/// address, an error report and a digest manifest.
pub fn ingest(
    traces_path: impl AsRef<Path>,
    contracts_path: impl AsRef<Path>,
    index_dir: impl AsRef<Path>,
    opts: &IngestOptions,
) -> Result<IndexManifest, IngestError> {
    ingest_inner(traces_path.as_ref(), contracts_path.as_ref(), index_dir.as_ref(), opts, false).map(|(m, _)| m)
}

/// Same as [`ingest`] but also returns the corpus, equal to what
/// [`Corpus::open`] would load from the written index.
pub fn ingest_corpus(
    traces_path: impl AsRef<Path>,
    contracts_path: impl AsRef<Path>,
    index_dir: impl AsRef<Path>,
    opts: &IngestOptions,
) -> Result<(IndexManifest, Corpus), IngestError> {
    ingest_inner(traces_path.as_ref(), contracts_path.as_ref(), index_dir.as_ref(), opts, true)
}

fn ingest_inner(
    traces_path: &Path,
    contracts_path: &Path,
    dir: &Path,
    opts: &IngestOptions,
    keep: bool,
) -> Result<(IndexManifest, Corpus), IngestError> {
    std::fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;

    let contracts = contract_lookup(contracts_path, opts.strict)?;

    let mut reader = load_traces(traces_path, opts.strict)?;
    let mut sorter = ExternalSorter::new(opts.group.memory_budget, opts.group.scratch_dir.clone());
    for rec in reader.by_ref() {
        sorter.push(rec?)?;
    }
    let accepted = reader.accepted();
    let (line_errors, traces_digest) = reader.finish()?;
    let mut groups = TxGroups {
        records: sorter.finish()?.peekable(),
        quarantined: Vec::new(),
        spilled_runs: 0,
    };

    let traces_out = dir.join(INDEX_TRACES);
    let file = File::create(&traces_out).map_err(|e| IngestError::io(&traces_out, e))?;
    let mut out = BufWriter::with_capacity(1 << 16, digest::HashingWriter::new(file));
    let mut transactions = 0usize;
    let mut kept = Vec::new();
    let mut line = Vec::new();
    for group in groups.by_ref() {
        let group = group?;
        transactions += 1;
        line.clear();
        for rec in &group.traces {
            schema::write_trace_line(&mut line, rec);
        }
        out.write_all(&line).map_err(|e| IngestError::io(&traces_out, e))?;
        if keep {
            kept.push(group);
        }
    }
    let traces_sha = out
        .into_inner()
        .map_err(|e| IngestError::io(&traces_out, e.into_error()))?
        .finish()
        .map_err(|e| IngestError::io(&traces_out, e))?;
    let quarantined = groups.into_quarantined();

    write_jsonl(&dir.join(INDEX_CONTRACTS), contracts.index.sorted())?;

    let mut errors: Vec<ErrorEntry> = Vec::new();
    errors.extend(contracts.line_errors.iter().cloned().map(ErrorEntry::Line));
    errors.extend(line_errors.iter().cloned().map(ErrorEntry::Line));
    errors.extend(quarantined.iter().cloned().map(ErrorEntry::Quarantined));
    errors.extend(
        contracts
            .warnings
            .iter()
            .map(|w| ErrorEntry::Warning { message: w.clone() }),
    );
    write_jsonl(&dir.join(INDEX_ERRORS), &errors)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("traces".to_owned(), traces_digest);
    inputs.insert(
        "contracts".to_owned(),
        digest::file_digest(contracts_path).map_err(|e| IngestError::io(contracts_path, e))?,
    );
    let mut outputs = BTreeMap::new();
    outputs.insert(INDEX_TRACES.to_owned(), traces_sha);
    for name in [INDEX_CONTRACTS, INDEX_ERRORS] {
        let path = dir.join(name);
        outputs.insert(name.to_owned(), digest::sha256_file(&path).map_err(|e| IngestError::io(&path, e))?);
    }
    let manifest = IndexManifest {
        inputs,
        outputs,
        accepted_traces: accepted,
        rejected_lines: line_errors.len() + contracts.line_errors.len(),
        transactions,
        quarantined_transactions: quarantined.len(),
        contracts: contracts.index.len(),
    };
    let manifest_path = dir.join(INDEX_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| IngestError::Internal(e.to_string()))?;
    std::fs::write(&manifest_path, text + "\n").map_err(|e| IngestError::io(&manifest_path, e))?;
    let corpus = if keep {
        Corpus::new(kept, contracts.index)
    } else {
        Corpus::default()
    };
    Ok((manifest, corpus))
}
