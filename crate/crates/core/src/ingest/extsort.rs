//! Bounded-memory sort of trace records into call-tree order.
//!
//! Records are buffered up to a budget, spilled as sorted JSONL runs into a
//! scratch directory, and merged back with a k-way heap merge. Ties between
//! equal keys resolve by run order, and runs preserve arrival order, so the
//! output is a stable sort of the input.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use super::IngestError;
use crate::model::TraceRecord;

pub struct ExternalSorter {
    buffer: Vec<TraceRecord>,
    budget: usize,
    scratch_parent: Option<PathBuf>,
    scratch: Option<TempDir>,
    runs: Vec<PathBuf>,
}

impl ExternalSorter {
    /// `budget` is the maximum number of records held in memory at once.
    pub fn new(budget: usize, scratch_parent: Option<PathBuf>) -> Self {
        ExternalSorter {
            buffer: Vec::new(),
            budget: budget.max(1),
            scratch_parent,
            scratch: None,
            runs: Vec::new(),
        }
    }

    pub fn push(&mut self, record: TraceRecord) -> Result<(), IngestError> {
        self.buffer.push(record);
        if self.buffer.len() >= self.budget {
            self.spill()?;
        }
        Ok(())
    }

    pub fn spilled_runs(&self) -> usize {
        self.runs.len()
    }

    fn scratch_dir(&mut self) -> Result<&Path, IngestError> {
        if self.scratch.is_none() {
            let dir = match &self.scratch_parent {
                Some(parent) => tempfile::Builder::new().prefix("proxyprobe-sort").tempdir_in(parent),
                None => tempfile::Builder::new().prefix("proxyprobe-sort").tempdir(),
            }
            .map_err(|e| IngestError::io("scratch directory", e))?;
            self.scratch = Some(dir);
        }
        Ok(self.scratch.as_ref().expect("created above").path())
    }

    fn spill(&mut self) -> Result<(), IngestError> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        sort_records(&mut self.buffer);
        let run_name = format!("run-{:05}.jsonl", self.runs.len());
        let path = self.scratch_dir()?.join(run_name);
        let file = File::create(&path).map_err(|e| IngestError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        for rec in self.buffer.drain(..) {
            serde_json::to_writer(&mut out, &rec).map_err(|e| IngestError::Internal(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| IngestError::io(&path, e))?;
        }
        out.flush().map_err(|e| IngestError::io(&path, e))?;
        self.runs.push(path);
        Ok(())
    }

    pub fn finish(mut self) -> Result<SortedRecords, IngestError> {
        sort_records(&mut self.buffer);
        if self.runs.is_empty() {
            return Ok(SortedRecords::Memory(self.buffer.into_iter()));
        }
        let mut sources = Vec::with_capacity(self.runs.len() + 1);
        for path in &self.runs {
            let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
            sources.push(RunSource::File {
                path: path.clone(),
                lines: BufReader::new(file).lines(),
            });
        }
        sources.push(RunSource::Memory(std::mem::take(&mut self.buffer).into_iter()));

        let mut heap = BinaryHeap::new();
        for (idx, source) in sources.iter_mut().enumerate() {
            if let Some(rec) = source.next_record()? {
                heap.push(Reverse(HeapEntry { record: rec, run: idx }));
            }
        }
        Ok(SortedRecords::Merge(Merge {
            _scratch: self.scratch,
            sources,
            heap,
        }))
    }
}

/// Stable sort by [`TraceRecord::sort_key`]. Sorts indices, then permutes
/// in place, since records are large to move.
pub(crate) fn sort_records(records: &mut [TraceRecord]) {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        records[a]
            .sort_key()
            .cmp(&records[b].sort_key())
            .then(a.cmp(&b))
    });
    // Position i receives the record originally at order[i]; earlier
    // positions have already been swapped out, so follow the chain.
    for i in 0..order.len() {
        let mut src = order[i];
        while src < i {
            src = order[src];
        }
        records.swap(i, src);
    }
}

enum RunSource {
    File {
        path: PathBuf,
        lines: Lines<BufReader<File>>,
    },
    Memory(std::vec::IntoIter<TraceRecord>),
}

impl RunSource {
    fn next_record(&mut self) -> Result<Option<TraceRecord>, IngestError> {
        match self {
            RunSource::Memory(it) => Ok(it.next()),
            RunSource::File { path, lines } => match lines.next() {
                None => Ok(None),
                Some(line) => {
                    let line = line.map_err(|e| IngestError::io(&*path, e))?;
                    serde_json::from_str(&line)
                        .map(Some)
                        .map_err(|e| IngestError::Internal(format!("corrupt sort run {}: {e}", path.display())))
                }
            },
        }
    }
}

struct HeapEntry {
    record: TraceRecord,
    run: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.record
            .sort_key()
            .cmp(&other.record.sort_key())
            .then(self.run.cmp(&other.run))
    }
}

pub struct Merge {
    // Held so spilled runs outlive the merge.
    _scratch: Option<TempDir>,
    sources: Vec<RunSource>,
    heap: BinaryHeap<Reverse<HeapEntry>>,
}

pub enum SortedRecords {
    Memory(std::vec::IntoIter<TraceRecord>),
    Merge(Merge),
}

impl Iterator for SortedRecords {
    type Item = Result<TraceRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            SortedRecords::Memory(it) => it.next().map(Ok),
            SortedRecords::Merge(merge) => {
                let Reverse(HeapEntry { record, run }) = merge.heap.pop()?;
                match merge.sources[run].next_record() {
                    Ok(Some(next)) => merge.heap.push(Reverse(HeapEntry { record: next, run })),
                    Ok(None) => {}
                    Err(e) => return Some(Err(e)),
                }
                Some(Ok(record))
            }
        }
    }
}
