//! Telemetry records, sliding-window chunking, temporal splitting, and
//! labeled-subset selection.
//!
//! A chunk is one fixed-length window of aligned telemetry: the log events
//! whose timestamps fall inside the window plus the covered metric rows.
//! Chunking, splitting, and selection are pure functions of their inputs, so
//! the same telemetry and configuration always yield byte-identical chunk
//! ids and split membership.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One raw log line with its emission time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLogRecord {
    /// Epoch milliseconds.
    pub ts: u64,
    /// Raw message text, non-empty after trimming.
    pub msg: String,
}

/// Uniformly sampled multivariate metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricFrame {
    /// Strictly increasing, uniformly spaced epoch-ms timestamps.
    pub timestamps: Vec<u64>,
    /// One row per timestamp, one column per metric.
    pub values: Array2<f64>,
    pub metric_names: Vec<String>,
    /// Grid spacing in milliseconds.
    pub step_ms: u64,
}

impl MetricFrame {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.metric_names.iter().position(|n| n == name)
    }
}

/// Where a chunk's label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Human,
    Pseudo,
    None,
}

/// Provenance attached to synthetic chunks so labeled subsets can be carved
/// out by workload or fault type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkProvenance {
    pub workload_id: Option<String>,
    /// Fault ids whose injection windows overlap this chunk.
    pub fault_ids: Vec<String>,
}

/// One time window of aligned telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub chunk_id: String,
    /// Window start, epoch ms.
    pub window_start: u64,
    /// Window length in milliseconds.
    pub duration_ms: u64,
    /// Event ids in stable timestamp order (pre-padding length).
    pub event_ids: Vec<u32>,
    /// Exactly `T` metric rows covered by the window.
    pub metric_segment: Array2<f64>,
    pub label: Option<u8>,
    pub label_source: LabelSource,
    pub provenance: ChunkProvenance,
}

impl Chunk {
    pub fn window_end(&self) -> u64 {
        self.window_start + self.duration_ms
    }
}

/// Train/test material after labeled-subset selection.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train_labeled: Vec<Chunk>,
    pub train_unlabeled: Vec<Chunk>,
    pub test: Vec<Chunk>,
}

/// A fault window recorded by the synthesizer or an external annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub ts_start: u64,
    pub ts_end: u64,
    /// Empty for plain workload segments.
    pub fault_id: String,
    pub workload_id: String,
}

/// Resample timestamped metric rows onto a uniform grid.
///
/// The grid starts at the first sample time and advances by `step_ms`;
/// values are carried forward from the last observation at or before each
/// grid point (LOCF). The grid ends at the last point not after the final
/// observation.
pub fn regularize_metrics(
    samples: &[(u64, Vec<f64>)],
    metric_names: &[String],
    step_ms: u64,
) -> Result<MetricFrame> {
    if samples.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "need at least 2 metric samples, got {}",
            samples.len()
        )));
    }
    if step_ms == 0 {
        return Err(Error::Config("metric step must be positive".into()));
    }
    let m = metric_names.len();
    if m == 0 {
        return Err(Error::EmptyInput("no metric columns".into()));
    }
    for (col, name) in metric_names.iter().enumerate() {
        if samples.iter().all(|(_, row)| row.get(col).map_or(true, |v| v.is_nan())) {
            return Err(Error::MissingColumn(name.clone()));
        }
    }
    let mut sorted: Vec<&(u64, Vec<f64>)> = samples.iter().collect();
    sorted.sort_by_key(|(ts, _)| *ts);

    let t0 = sorted[0].0;
    let t_last = sorted[sorted.len() - 1].0;
    let n = ((t_last - t0) / step_ms + 1) as usize;

    let mut timestamps = Vec::with_capacity(n);
    let mut values = Array2::zeros((n, m));
    // Last observed value per column; leading gaps take the first observation.
    let mut current: Vec<f64> = (0..m)
        .map(|col| {
            sorted
                .iter()
                .find_map(|(_, row)| row.get(col).copied().filter(|v| !v.is_nan()))
                .unwrap()
        })
        .collect();

    let mut cursor = 0usize;
    for k in 0..n {
        let ts = t0 + k as u64 * step_ms;
        while cursor < sorted.len() && sorted[cursor].0 <= ts {
            for (col, cur) in current.iter_mut().enumerate() {
                if let Some(v) = sorted[cursor].1.get(col) {
                    if !v.is_nan() {
                        *cur = *v;
                    }
                }
            }
            cursor += 1;
        }
        timestamps.push(ts);
        for (col, cur) in current.iter().enumerate() {
            values[[k, col]] = *cur;
        }
    }

    Ok(MetricFrame {
        timestamps,
        values,
        metric_names: metric_names.to_vec(),
        step_ms,
    })
}

/// Event-id assignment used by [`partition_chunks`]: timestamp plus event id,
/// already parsed upstream.
#[derive(Debug, Clone, Copy)]
pub struct TimedEvent {
    pub ts: u64,
    pub event_id: u32,
}

/// Timestamp-based sliding partitioning.
///
/// Windows start at metric-grid indices `0, stride, 2·stride, …`; each chunk
/// takes the `t_steps` covered metric rows and the events whose timestamps
/// fall in `[start, start + t_steps·step_ms)`. A trailing partial window is
/// discarded.
pub fn partition_chunks(
    events: &[TimedEvent],
    metrics: &MetricFrame,
    t_steps: usize,
    stride: usize,
) -> Result<Vec<Chunk>> {
    if t_steps == 0 || stride == 0 {
        return Err(Error::Config("t_steps and stride must be >= 1".into()));
    }
    if metrics.len() < t_steps {
        return Err(Error::InsufficientData(format!(
            "metric grid has {} rows, window needs {}",
            metrics.len(),
            t_steps
        )));
    }
    let mut sorted: Vec<&TimedEvent> = events.iter().collect();
    sorted.sort_by_key(|e| e.ts); // stable: ties keep input order

    let duration_ms = t_steps as u64 * metrics.step_ms;
    let mut chunks = Vec::new();
    let mut idx = 0usize;
    while idx + t_steps <= metrics.len() {
        let start_ts = metrics.timestamps[idx];
        let end_ts = start_ts + duration_ms;
        let rows = metrics
            .values
            .slice(ndarray::s![idx..idx + t_steps, ..])
            .to_owned();
        let lo = sorted.partition_point(|e| e.ts < start_ts);
        let hi = sorted.partition_point(|e| e.ts < end_ts);
        let event_ids = sorted[lo..hi].iter().map(|e| e.event_id).collect();
        chunks.push(Chunk {
            chunk_id: format!("c{start_ts:013}"),
            window_start: start_ts,
            duration_ms,
            event_ids,
            metric_segment: rows,
            label: None,
            label_source: LabelSource::None,
            provenance: ChunkProvenance::default(),
        });
        idx += stride;
    }
    Ok(chunks)
}

/// Attach ground-truth labels (`window_start → label`) and provenance tags.
pub fn annotate_chunks(
    chunks: &mut [Chunk],
    labels: &[(u64, u8)],
    provenance: &[ProvenanceRecord],
) {
    let label_map: std::collections::HashMap<u64, u8> = labels.iter().copied().collect();
    for chunk in chunks.iter_mut() {
        if let Some(&l) = label_map.get(&chunk.window_start) {
            chunk.label = Some(l);
            chunk.label_source = LabelSource::Human;
        }
        let (start, end) = (chunk.window_start, chunk.window_end());
        for rec in provenance {
            if rec.ts_start < end && start < rec.ts_end {
                if rec.fault_id.is_empty() {
                    chunk.provenance.workload_id = Some(rec.workload_id.clone());
                } else if !chunk.provenance.fault_ids.contains(&rec.fault_id) {
                    chunk.provenance.fault_ids.push(rec.fault_id.clone());
                }
            }
        }
    }
}

/// Split chunks so the first `train_frac` of them (by window order) train the
/// model and the rest evaluate it.
///
/// If the chunk just before the cut and the chunk at the cut belong to one
/// contiguous fault manifestation (a shared fault window, or an unbroken run
/// of positive labels), the cut shifts earlier to the run boundary so no
/// fault straddles the two sets.
pub fn temporal_split(chunks: &[Chunk], train_frac: f64) -> Result<(Vec<Chunk>, Vec<Chunk>)> {
    if chunks.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 chunks to split".into(),
        ));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config("train_frac must be in (0, 1)".into()));
    }
    debug_assert!(chunks.windows(2).all(|w| w[0].window_start <= w[1].window_start));

    let mut cut = (train_frac * chunks.len() as f64).floor() as usize;
    cut = cut.clamp(1, chunks.len() - 1);
    while cut > 0 && straddles_fault(&chunks[cut - 1], &chunks[cut]) {
        cut -= 1;
    }
    if cut == 0 {
        return Err(Error::InsufficientData(
            "fault run reaches the start of the data; nothing left to train on".into(),
        ));
    }
    Ok((chunks[..cut].to_vec(), chunks[cut..].to_vec()))
}

fn straddles_fault(a: &Chunk, b: &Chunk) -> bool {
    let shared_fault = a
        .provenance
        .fault_ids
        .iter()
        .any(|f| b.provenance.fault_ids.contains(f));
    let positive_run = a.label == Some(1) && b.label == Some(1);
    shared_fault || positive_run
}

/// Which chunks keep their human labels for training.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabelSelector {
    /// Keep labels only for these workloads (empty = any workload).
    #[serde(default)]
    pub workloads: Vec<String>,
    /// Keep labels only for chunks overlapping these faults or overlapping no
    /// fault at all (empty = any fault).
    #[serde(default)]
    pub fault_ids: Vec<String>,
}

impl LabelSelector {
    pub fn matches(&self, chunk: &Chunk) -> bool {
        if !self.workloads.is_empty() {
            match &chunk.provenance.workload_id {
                Some(w) if self.workloads.contains(w) => {}
                _ => return false,
            }
        }
        if !self.fault_ids.is_empty() {
            let faults = &chunk.provenance.fault_ids;
            let selected = faults.is_empty() || faults.iter().any(|f| self.fault_ids.contains(f));
            if !selected {
                return false;
            }
        }
        true
    }
}

/// Keep human labels on chunks matched by `selector`; strip the rest.
pub fn select_labeled_subset(
    train: &[Chunk],
    test: &[Chunk],
    selector: &LabelSelector,
) -> Result<DatasetSplit> {
    let mut train_labeled = Vec::new();
    let mut train_unlabeled = Vec::new();
    for chunk in train {
        if selector.matches(chunk) && chunk.label.is_some() {
            train_labeled.push(chunk.clone());
        } else {
            let mut c = chunk.clone();
            c.label = None;
            c.label_source = LabelSource::None;
            train_unlabeled.push(c);
        }
    }
    if train_labeled.is_empty() {
        return Err(Error::EmptySelection);
    }
    let split = DatasetSplit {
        train_labeled,
        train_unlabeled,
        test: test.to_vec(),
    };
    debug_assert!(split_is_disjoint(&split));
    Ok(split)
}

fn split_is_disjoint(s: &DatasetSplit) -> bool {
    let mut seen = BTreeSet::new();
    s.train_labeled
        .iter()
        .chain(s.train_unlabeled.iter())
        .chain(s.test.iter())
        .all(|c| seen.insert(c.chunk_id.clone()))
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Read JSON-Lines logs: one `{"ts": <epoch ms>, "msg": <text>}` per line.
pub fn read_logs_jsonl(path: &Path) -> Result<Vec<RawLogRecord>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawLogRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if rec.msg.trim().is_empty() {
            return Err(Error::Data(format!(
                "{}:{}: empty log message",
                path.display(),
                i + 1
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_logs_jsonl(path: &Path, logs: &[RawLogRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in logs {
        serde_json::to_writer(&mut f, rec)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

/// Read metric CSV: header `ts,<name>,…`, one row per sample.
pub fn read_metrics_csv(path: &Path) -> Result<(Vec<(u64, Vec<f64>)>, Vec<String>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "ts" {
        return Err(Error::Data(format!(
            "{}: metric CSV must start with a `ts` column",
            path.display()
        )));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ts: u64 = rec[0]
            .parse()
            .map_err(|_| Error::Data(format!("bad timestamp {:?}", &rec[0])))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| {
                if v.is_empty() {
                    Ok(f64::NAN)
                } else {
                    v.parse::<f64>()
                        .map_err(|_| Error::Data(format!("bad metric value {v:?}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((ts, vals));
    }
    Ok((rows, names))
}

pub fn write_metrics_csv(path: &Path, frame: &MetricFrame) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["ts".to_string()];
    header.extend(frame.metric_names.iter().cloned());
    w.write_record(&header)?;
    for (k, ts) in frame.timestamps.iter().enumerate() {
        let mut rec = vec![ts.to_string()];
        for c in 0..frame.values.ncols() {
            rec.push(format_metric(frame.values[[k, c]]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn format_metric(v: f64) -> String {
    // Shortest round-trippable representation keeps files deterministic.
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Provenance sidecar CSV: `ts_start,ts_end,fault_id,workload_id`.
pub fn read_provenance_csv(path: &Path) -> Result<Vec<ProvenanceRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn write_provenance_csv(path: &Path, records: &[ProvenanceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in records {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Labels CSV: `chunk_window_start,label`.
pub fn read_labels_csv(path: &Path) -> Result<Vec<(u64, u8)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ts: u64 = rec[0]
            .parse()
            .map_err(|_| Error::Data(format!("bad window start {:?}", &rec[0])))?;
        let label: u8 = rec[1]
            .parse()
            .map_err(|_| Error::Data(format!("bad label {:?}", &rec[1])))?;
        out.push((ts, label));
    }
    Ok(out)
}

pub fn write_labels_csv(path: &Path, labels: &[(u64, u8)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["chunk_window_start", "label"])?;
    for (ts, label) in labels {
        w.write_record([ts.to_string(), label.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn regularize_identity_when_already_uniform() {
        let samples = vec![
            (0, vec![1.0]),
            (1000, vec![2.0]),
            (2000, vec![3.0]),
        ];
        let f = regularize_metrics(&samples, &names(1), 1000).unwrap();
        assert_eq!(f.timestamps, vec![0, 1000, 2000]);
        assert_eq!(f.values.column(0).to_vec(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn regularize_locf_fills_gaps() {
        // Brute-force LOCF oracle: value at grid point = last sample <= point.
        let samples = vec![(0, vec![1.0]), (2500, vec![5.0])];
        let f = regularize_metrics(&samples, &names(1), 1000).unwrap();
        assert_eq!(f.timestamps, vec![0, 1000, 2000]);
        assert_eq!(f.values.column(0).to_vec(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn regularize_single_sample_is_empty_input() {
        let samples = vec![(0, vec![1.0])];
        assert!(matches!(
            regularize_metrics(&samples, &names(1), 1000),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn regularize_missing_column_rejected() {
        let samples = vec![(0, vec![1.0, f64::NAN]), (1000, vec![2.0, f64::NAN])];
        let err = regularize_metrics(&samples, &names(2), 1000).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref n) if n == "m1"));
    }

    #[test]
    fn regularize_locf_random_grid_matches_oracle() {
        // 17 irregular samples; compare against an independent scan.
        let mut samples = Vec::new();
        let mut ts = 0u64;
        for i in 0..17u64 {
            samples.push((ts, vec![i as f64]));
            ts += 300 + (i * 137) % 1700;
        }
        let f = regularize_metrics(&samples, &names(1), 500).unwrap();
        for (k, &grid_ts) in f.timestamps.iter().enumerate() {
            let oracle = samples
                .iter()
                .filter(|(t, _)| *t <= grid_ts)
                .last()
                .map(|(_, v)| v[0])
                .unwrap();
            assert_eq!(f.values[[k, 0]], oracle, "grid point {grid_ts}");
        }
    }

    fn grid_metrics(len: usize, m: usize) -> MetricFrame {
        MetricFrame {
            timestamps: (0..len as u64).map(|k| k * 1000).collect(),
            values: Array2::from_shape_fn((len, m), |(r, c)| (r * 10 + c) as f64),
            metric_names: names(m),
            step_ms: 1000,
        }
    }

    fn ev(ts: u64, id: u32) -> TimedEvent {
        TimedEvent { ts, event_id: id }
    }

    #[test]
    fn partition_assigns_events_by_interval() {
        let metrics = grid_metrics(20, 2);
        let events = vec![ev(1000, 1), ev(3000, 2), ev(12000, 3)];
        let chunks = partition_chunks(&events, &metrics, 10, 10).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].event_ids, vec![1, 2]);
        assert_eq!(chunks[1].event_ids, vec![3]);
        assert_eq!(chunks[0].metric_segment.dim(), (10, 2));
        assert_eq!(chunks[1].metric_segment.dim(), (10, 2));

        // Brute-force interval-membership oracle.
        for chunk in &chunks {
            let expect: Vec<u32> = events
                .iter()
                .filter(|e| e.ts >= chunk.window_start && e.ts < chunk.window_end())
                .map(|e| e.event_id)
                .collect();
            assert_eq!(chunk.event_ids, expect);
        }
    }

    #[test]
    fn partition_empty_logs_gives_empty_event_ids() {
        let metrics = grid_metrics(10, 1);
        let chunks = partition_chunks(&[], &metrics, 10, 10).unwrap();
        assert_eq!(chunks.len(), 1);
        assert!(chunks[0].event_ids.is_empty());
        assert_eq!(chunks[0].metric_segment.dim(), (10, 1));
    }

    #[test]
    fn partition_short_metrics_fails() {
        let metrics = grid_metrics(5, 1);
        assert!(matches!(
            partition_chunks(&[], &metrics, 10, 10),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn partition_tiles_grid_without_overlap() {
        // stride = T: every metric row index belongs to exactly one chunk
        // (trailing remainder excluded), and events are conserved.
        let metrics = grid_metrics(23, 1);
        let events: Vec<TimedEvent> = (0..40).map(|i| ev(i * 577, i as u32)).collect();
        let chunks = partition_chunks(&events, &metrics, 5, 5).unwrap();
        assert_eq!(chunks.len(), 4);
        let covered: usize = chunks.iter().map(|c| c.metric_segment.nrows()).sum();
        assert_eq!(covered, 20);
        let total_events: usize = chunks.iter().map(|c| c.event_ids.len()).sum();
        let in_windows = events
            .iter()
            .filter(|e| {
                chunks
                    .iter()
                    .any(|c| e.ts >= c.window_start && e.ts < c.window_end())
            })
            .count();
        assert_eq!(total_events, in_windows);
    }

    fn labeled_chunks(labels: &[Option<u8>]) -> Vec<Chunk> {
        let metrics = grid_metrics(labels.len(), 1);
        let mut chunks = partition_chunks(&[], &metrics, 1, 1).unwrap();
        for (c, l) in chunks.iter_mut().zip(labels) {
            c.label = *l;
            if l.is_some() {
                c.label_source = LabelSource::Human;
            }
        }
        chunks
    }

    #[test]
    fn temporal_split_basic_fraction() {
        let chunks = labeled_chunks(&[Some(0); 10]);
        let (train, test) = temporal_split(&chunks, 0.7).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
        let max_train = train.iter().map(|c| c.window_start).max().unwrap();
        let min_test = test.iter().map(|c| c.window_start).min().unwrap();
        assert!(max_train < min_test);
    }

    #[test]
    fn temporal_split_shifts_cut_off_fault_run() {
        // Positive run spans chunks 6-7; cut at 7 must move before chunk 6.
        let mut labels = vec![Some(0u8); 10];
        labels[6] = Some(1);
        labels[7] = Some(1);
        let chunks = labeled_chunks(&labels);
        let (train, test) = temporal_split(&chunks, 0.7).unwrap();
        assert_eq!(train.len(), 6);
        assert_eq!(test.len(), 4);

        // Boundary-shift oracle: scan label runs, cut may not land inside one.
        let cut = train.len();
        assert!(!(chunks[cut - 1].label == Some(1) && chunks[cut].label == Some(1)));
    }

    #[test]
    fn temporal_split_small_n() {
        let chunks = labeled_chunks(&[Some(0); 3]);
        let (train, test) = temporal_split(&chunks, 0.7).unwrap();
        assert_eq!((train.len(), test.len()), (2, 1));
        assert!(temporal_split(&chunks[..1], 0.7).is_err());
    }

    fn tagged_chunk(i: u64, workload: &str, faults: &[&str], label: u8) -> Chunk {
        Chunk {
            chunk_id: format!("c{i:013}"),
            window_start: i * 1000,
            duration_ms: 1000,
            event_ids: vec![],
            metric_segment: Array2::zeros((1, 1)),
            label: Some(label),
            label_source: LabelSource::Human,
            provenance: ChunkProvenance {
                workload_id: Some(workload.to_string()),
                fault_ids: faults.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    #[test]
    fn select_strips_labels_outside_selector() {
        let train: Vec<Chunk> = (0..46)
            .map(|i| {
                let w = if i % 10 == 0 { "w0" } else { "w1" };
                tagged_chunk(i, w, &[], 0)
            })
            .collect();
        let selector = LabelSelector {
            workloads: vec!["w0".into()],
            fault_ids: vec![],
        };
        let split = select_labeled_subset(&train, &[], &selector).unwrap();
        assert_eq!(split.train_labeled.len(), 5);
        assert_eq!(split.train_unlabeled.len(), 41);
        assert!(split.train_unlabeled.iter().all(|c| c.label.is_none()));
        let frac = split.train_labeled.len() as f64
            / (split.train_labeled.len() + split.train_unlabeled.len()) as f64;
        assert!((frac - 0.109).abs() < 0.01, "labeled fraction {frac}");
    }

    #[test]
    fn select_everything_leaves_no_unlabeled() {
        let train: Vec<Chunk> = (0..5).map(|i| tagged_chunk(i, "w0", &[], 0)).collect();
        let split = select_labeled_subset(&train, &[], &LabelSelector::default()).unwrap();
        assert!(split.train_unlabeled.is_empty());
    }

    #[test]
    fn select_by_fault_type_keeps_faulted_and_normal() {
        let train = vec![
            tagged_chunk(0, "w0", &[], 0),
            tagged_chunk(1, "w0", &["f1"], 1),
            tagged_chunk(2, "w0", &["f2"], 1),
            tagged_chunk(3, "w0", &["f3"], 1),
        ];
        let selector = LabelSelector {
            workloads: vec![],
            fault_ids: vec!["f1".into(), "f2".into()],
        };
        let split = select_labeled_subset(&train, &[], &selector).unwrap();
        // Provenance-tag filter oracle: chunks overlapping f1/f2 plus normal chunks.
        let expect: Vec<&Chunk> = train
            .iter()
            .filter(|c| {
                c.provenance.fault_ids.is_empty()
                    || c.provenance.fault_ids.iter().any(|f| f == "f1" || f == "f2")
            })
            .collect();
        assert_eq!(split.train_labeled.len(), expect.len());
        assert!(split
            .train_labeled
            .iter()
            .all(|c| !c.provenance.fault_ids.contains(&"f3".to_string())));
    }

    #[test]
    fn select_nothing_is_an_error() {
        let train = vec![tagged_chunk(0, "w0", &[], 0)];
        let selector = LabelSelector {
            workloads: vec!["nope".into()],
            fault_ids: vec![],
        };
        assert!(matches!(
            select_labeled_subset(&train, &[], &selector),
            Err(Error::EmptySelection)
        ));
    }

    #[test]
    fn chunking_is_deterministic() {
        let metrics = grid_metrics(30, 3);
        let events: Vec<TimedEvent> = (0..50).map(|i| ev(i * 613, i as u32)).collect();
        let a = partition_chunks(&events, &metrics, 10, 5).unwrap();
        let b = partition_chunks(&events, &metrics, 10, 5).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.chunk_id, y.chunk_id);
            assert_eq!(x.event_ids, y.event_ids);
        }
    }
}
