//! End-to-end glue: telemetry → chunks → template mining → embeddings →
//! standardized tensors → trained detector → predictions.
//!
//! The same preparation path serves training, detection from a checkpoint,
//! and the acceptance benchmark, so command-line results and library results
//! coincide by construction.

use ndarray::Array2;

use crate::config::RunConfig;
use crate::data::{
    annotate_chunks, partition_chunks, regularize_metrics, select_labeled_subset, temporal_split,
    Chunk, LabelSelector, LabelSource, MetricFrame, ProvenanceRecord, RawLogRecord, TimedEvent,
};
use crate::error::{Error, Result};
use crate::logs::{tokenize, train_embeddings, EmbeddingTable, TemplateStore};
use crate::model::{
    one_hot_event, pad_or_truncate, AspectMap, ChunkInput, Model, OrDetector,
    Prediction, Variant,
};
use crate::train::{
    evaluate, phase1_train, phase2_train, pseudo_label, EpochRecord, EvalReport, Sample,
};

/// Sentinel id for events that match no frozen template.
pub const NOVEL_EVENT: u32 = u32::MAX;

/// Per-metric z-score statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardization {
    /// Metric names in aspect order (the model's column order).
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardization {
    fn fit(rows: &Array2<f64>, names: &[String]) -> Self {
        let n = rows.nrows().max(1) as f64;
        let mut means = Vec::with_capacity(names.len());
        let mut stds = Vec::with_capacity(names.len());
        for c in 0..names.len() {
            let col = rows.column(c);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            means.push(mean);
            stds.push(if std > 1e-12 { std } else { 1.0 });
        }
        Self { names: names.to_vec(), means, stds }
    }

    pub fn apply(&self, segment: &Array2<f64>) -> Array2<f64> {
        let mut out = segment.clone();
        for c in 0..self.names.len() {
            let (m, s) = (self.means[c], self.stds[c]);
            out.column_mut(c).mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

/// Everything detection needs besides the weights.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub store: TemplateStore,
    pub embeddings: EmbeddingTable,
    pub stats: Standardization,
    pub aspect_map: AspectMap,
    /// Column indices mapping the aspect-ordered layout back to the source
    /// metric CSV order.
    pub column_order: Vec<usize>,
    pub t_steps: usize,
    pub stride: usize,
    pub step_ms: u64,
    pub l_max: usize,
}

impl Artifacts {
    pub fn aspect_dims(&self) -> Vec<(String, usize)> {
        self.aspect_map
            .aspects
            .iter()
            .map(|(a, m)| (a.clone(), m.len()))
            .collect()
    }
}

/// One chunk with both event representations, ready for any variant.
#[derive(Debug, Clone)]
pub struct PreparedChunk {
    pub chunk: Chunk,
    /// Matched event ids (NOVEL_EVENT when no template cleared the bar).
    pub event_ids: Vec<u32>,
    /// l_max × E mean-token embeddings, tail-windowed.
    pub log_embed: Array2<f64>,
    pub log_mask: Vec<bool>,
    /// T × M standardized, aspect-ordered metric segment.
    pub metrics_z: Array2<f64>,
}

impl PreparedChunk {
    /// Build the model input for a variant (the one-hot variant swaps the
    /// embedding matrix for indicator vectors of the event ids).
    pub fn input_for(&self, variant: Variant, template_count: usize) -> ChunkInput {
        if variant == Variant::WoS {
            let events: Vec<Vec<f64>> = self
                .event_ids
                .iter()
                .map(|&id| {
                    one_hot_event(
                        if id == NOVEL_EVENT { None } else { Some(id) },
                        template_count,
                    )
                })
                .collect();
            let (one_hot, mask) = pad_or_truncate(&events, self.log_mask.len(), template_count);
            ChunkInput { log_embed: one_hot, log_mask: mask, metrics: self.metrics_z.clone() }
        } else {
            ChunkInput {
                log_embed: self.log_embed.clone(),
                log_mask: self.log_mask.clone(),
                metrics: self.metrics_z.clone(),
            }
        }
    }

    pub fn to_sample(&self, variant: Variant, template_count: usize) -> Sample {
        Sample {
            chunk_id: self.chunk.chunk_id.clone(),
            window_start: self.chunk.window_start,
            input: self.input_for(variant, template_count),
            label: self.chunk.label,
            source: self.chunk.label_source,
        }
    }
}

/// Prepared training material shared across variants.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train_labeled: Vec<PreparedChunk>,
    pub train_unlabeled: Vec<PreparedChunk>,
    pub test: Vec<PreparedChunk>,
    pub artifacts: Artifacts,
}

impl PreparedData {
    pub fn template_count(&self) -> usize {
        self.artifacts.store.len()
    }

    pub fn samples(&self, chunks: &[PreparedChunk], variant: Variant) -> Vec<Sample> {
        let k = self.template_count();
        chunks.iter().map(|c| c.to_sample(variant, k)).collect()
    }
}

/// In-memory telemetry bundle (files or synthesizer output).
pub struct Telemetry {
    pub logs: Vec<RawLogRecord>,
    pub metric_rows: Vec<(u64, Vec<f64>)>,
    pub metric_names: Vec<String>,
    pub labels: Vec<(u64, u8)>,
    pub provenance: Vec<ProvenanceRecord>,
}

impl Telemetry {
    pub fn from_frame(
        logs: Vec<RawLogRecord>,
        frame: &MetricFrame,
        labels: Vec<(u64, u8)>,
        provenance: Vec<ProvenanceRecord>,
    ) -> Self {
        let rows = frame
            .timestamps
            .iter()
            .enumerate()
            .map(|(i, &ts)| (ts, frame.values.row(i).to_vec()))
            .collect();
        Self {
            logs,
            metric_rows: rows,
            metric_names: frame.metric_names.clone(),
            labels,
            provenance,
        }
    }
}

fn order_columns(map: &AspectMap, names: &[String]) -> Result<(Vec<usize>, Vec<String>)> {
    let groups = map.group_indices(names)?;
    let mut order = Vec::with_capacity(names.len());
    for g in &groups {
        order.extend(g.iter().copied());
    }
    if order.len() != names.len() {
        return Err(Error::Data(
            "aspect map does not cover every metric column".into(),
        ));
    }
    let ordered_names = order.iter().map(|&i| names[i].clone()).collect();
    Ok((order, ordered_names))
}

fn reorder_segment(segment: &Array2<f64>, order: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((segment.nrows(), order.len()));
    for (dst, &src) in order.iter().enumerate() {
        out.column_mut(dst).assign(&segment.column(src));
    }
    out
}

struct ParsedLog {
    ts: u64,
    tokens: Vec<String>,
    event_id: u32,
}

/// Prepare the full training dataset: chunk, split, mine templates on the
/// training window, train embeddings on the parsed template streams, fit
/// standardization on the training rows, and carve out the labeled subset.
pub fn prepare_training(
    telemetry: &Telemetry,
    aspect_map: &AspectMap,
    config: &RunConfig,
) -> Result<PreparedData> {
    let chunking = &config.chunking;
    let frame = regularize_metrics(&telemetry.metric_rows, &telemetry.metric_names, chunking.step_ms)?;
    let (column_order, ordered_names) = order_columns(aspect_map, &frame.metric_names)?;

    // First pass: windows + labels decide the temporal cut.
    let mut skeleton = partition_chunks(&[], &frame, chunking.t_steps, chunking.stride)?;
    annotate_chunks(&mut skeleton, &telemetry.labels, &telemetry.provenance);
    let (train_skel, test_skel) = temporal_split(&skeleton, chunking.train_frac)?;
    let boundary_ms = test_skel
        .first()
        .map(|c| c.window_start)
        .unwrap_or(u64::MAX);

    // Tokenize once, in stable timestamp order.
    let mut logs: Vec<&RawLogRecord> = telemetry.logs.iter().collect();
    logs.sort_by_key(|r| r.ts);

    // Mine templates over the training window only, then freeze.
    let mut store = TemplateStore::new(config.parsing.sim_threshold, config.parsing.max_depth);
    let mut parsed: Vec<ParsedLog> = Vec::with_capacity(logs.len());
    for rec in &logs {
        let tokens = tokenize(&rec.msg);
        let event_id = if rec.ts < boundary_ms {
            store.parse_event(&tokens)
        } else {
            NOVEL_EVENT // resolved against the frozen store below
        };
        parsed.push(ParsedLog { ts: rec.ts, tokens, event_id });
    }
    store.freeze();
    for p in parsed.iter_mut() {
        if p.ts >= boundary_ms {
            p.event_id = store.match_event(&p.tokens).unwrap_or(NOVEL_EVENT);
        }
    }

    // Embedding corpus: the parsed template token stream of the training
    // window (one sentence per message occurrence).
    let corpus: Vec<Vec<String>> = parsed
        .iter()
        .filter(|p| p.ts < boundary_ms)
        .map(|p| store.template(p.event_id).tokens.clone())
        .collect();
    let embeddings = train_embeddings(&corpus, &config.embedding_config(), config.seed)?;

    // Standardization over training-window rows, aspect-ordered columns.
    let train_rows = frame
        .timestamps
        .iter()
        .position(|&ts| ts >= boundary_ms)
        .unwrap_or(frame.len());
    let ordered_values = reorder_segment(&frame.values, &column_order);
    let stats = Standardization::fit(
        &ordered_values.slice(ndarray::s![..train_rows, ..]).to_owned(),
        &ordered_names,
    );

    let artifacts = Artifacts {
        store,
        embeddings,
        stats,
        aspect_map: aspect_map.clone(),
        column_order,
        t_steps: chunking.t_steps,
        stride: chunking.stride,
        step_ms: chunking.step_ms,
        l_max: chunking.l_max,
    };

    // Second pass with real event ids.
    let events: Vec<TimedEvent> = parsed
        .iter()
        .map(|p| TimedEvent { ts: p.ts, event_id: p.event_id })
        .collect();
    let mut chunks = partition_chunks(&events, &frame, chunking.t_steps, chunking.stride)?;
    annotate_chunks(&mut chunks, &telemetry.labels, &telemetry.provenance);
    let (train_chunks, test_chunks) = temporal_split(&chunks, chunking.train_frac)?;
    debug_assert_eq!(train_chunks.len(), train_skel.len());

    let split = select_labeled_subset(&train_chunks, &test_chunks, &config.select)?;
    let prepare = |chunks: &[Chunk]| -> Result<Vec<PreparedChunk>> {
        chunks
            .iter()
            .map(|c| prepare_chunk(c, &parsed, &artifacts))
            .collect()
    };
    Ok(PreparedData {
        train_labeled: prepare(&split.train_labeled)?,
        train_unlabeled: prepare(&split.train_unlabeled)?,
        test: prepare(&split.test)?,
        artifacts,
    })
}

/// Prepare chunks for detection against frozen artifacts. Unknown templates
/// map to the novel-event sentinel and embed through their tokens' subwords.
pub fn prepare_inference(
    logs: &[RawLogRecord],
    metric_rows: &[(u64, Vec<f64>)],
    metric_names: &[String],
    artifacts: &Artifacts,
) -> Result<Vec<PreparedChunk>> {
    let frame = regularize_metrics(metric_rows, metric_names, artifacts.step_ms)?;
    // Strict name check: the checkpoint's aspect map must cover the data.
    let (order, ordered_names) = order_columns(&artifacts.aspect_map, &frame.metric_names)?;
    if ordered_names != artifacts.stats.names {
        return Err(Error::Data(format!(
            "metric columns {:?} do not match the checkpoint's {:?}",
            ordered_names, artifacts.stats.names
        )));
    }
    let mut sorted: Vec<&RawLogRecord> = logs.iter().collect();
    sorted.sort_by_key(|r| r.ts);
    let mut parsed = Vec::with_capacity(sorted.len());
    for rec in &sorted {
        let tokens = tokenize(&rec.msg);
        let event_id = artifacts.store.match_event(&tokens).unwrap_or(NOVEL_EVENT);
        parsed.push(ParsedLog { ts: rec.ts, tokens, event_id });
    }
    let events: Vec<TimedEvent> = parsed
        .iter()
        .map(|p| TimedEvent { ts: p.ts, event_id: p.event_id })
        .collect();
    let chunks = partition_chunks(&events, &frame, artifacts.t_steps, artifacts.stride)?;

    let mut artifacts_local = artifacts.clone();
    artifacts_local.column_order = order;
    chunks
        .iter()
        .map(|c| prepare_chunk(c, &parsed, &artifacts_local))
        .collect()
}

/// Embed a chunk's events (template tokens for matched events, raw message
/// tokens for novel ones — subwords cover unseen vocabulary), tail-window
/// them to `l_max`, and standardize the metric segment.
fn prepare_chunk(
    chunk: &Chunk,
    parsed: &[ParsedLog],
    artifacts: &Artifacts,
) -> Result<PreparedChunk> {
    let dim = artifacts.embeddings.dim;
    let lo = parsed.partition_point(|p| p.ts < chunk.window_start);
    let hi = parsed.partition_point(|p| p.ts < chunk.window_end());
    debug_assert_eq!(hi - lo, chunk.event_ids.len());

    let mut event_vectors = Vec::with_capacity(hi - lo);
    for p in &parsed[lo..hi] {
        let vector = if p.event_id == NOVEL_EVENT {
            artifacts.embeddings.embed_event(&p.tokens)?
        } else {
            artifacts
                .embeddings
                .embed_event(&artifacts.store.template(p.event_id).tokens)?
        };
        event_vectors.push(vector);
    }
    let (log_embed, log_mask) = pad_or_truncate(&event_vectors, artifacts.l_max, dim);
    let metrics_z = artifacts
        .stats
        .apply(&reorder_segment(&chunk.metric_segment, &artifacts.column_order));
    Ok(PreparedChunk {
        chunk: chunk.clone(),
        event_ids: chunk.event_ids.clone(),
        log_embed,
        log_mask,
        metrics_z,
    })
}

/// A trained detector of any variant.
#[derive(Debug, Clone)]
pub enum Detector {
    Single(Model),
    Or(OrDetector),
}

impl Detector {
    pub fn predict(&self, input: &ChunkInput) -> Result<Prediction> {
        match self {
            Detector::Single(m) => m.predict(input),
            Detector::Or(o) => o.predict(input),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Detector::Single(m) => m.arch.variant,
            Detector::Or(_) => Variant::WoF,
        }
    }

    /// Models inside this detector, keyed for checkpointing.
    pub fn models(&self) -> Vec<(&'static str, &Model)> {
        match self {
            Detector::Single(m) => vec![("model", m)],
            Detector::Or(o) => vec![("wom", &o.logs_only), ("wol", &o.metrics_only)],
        }
    }
}

/// Train one variant over prepared data: phase 1 on the labeled subset,
/// pseudo-labeling of the unlabeled pool, phase 2 on the mixed loss.
pub fn train_detector(
    prep: &PreparedData,
    config: &RunConfig,
) -> Result<(Detector, Vec<EpochRecord>)> {
    let variant = config.variant()?;
    if variant == Variant::WoF {
        let (logs_only, mut trace_a) = train_single(prep, config, Variant::WoM)?;
        let (metrics_only, trace_b) = train_single(prep, config, Variant::WoL)?;
        trace_a.extend(trace_b);
        return Ok((
            Detector::Or(OrDetector { logs_only, metrics_only }),
            trace_a,
        ));
    }
    let (model, trace) = train_single(prep, config, variant)?;
    Ok((Detector::Single(model), trace))
}

fn event_input_dim(prep: &PreparedData, variant: Variant, config: &RunConfig) -> usize {
    if variant == Variant::WoS {
        prep.template_count()
    } else {
        config.arch.embed_dim
    }
}

fn train_single(
    prep: &PreparedData,
    config: &RunConfig,
    variant: Variant,
) -> Result<(Model, Vec<EpochRecord>)> {
    let arch = config.arch.clone().with_preset()?.resolve(
        variant,
        prep.artifacts.aspect_dims(),
        prep.artifacts.t_steps,
        prep.artifacts.l_max,
        event_input_dim(prep, variant, config),
    );
    let mut model = Model::new(arch, config.seed)?;
    let labeled = prep.samples(&prep.train_labeled, variant);
    let unlabeled = prep.samples(&prep.train_unlabeled, variant);

    let mut train_cfg = config.train.clone();
    train_cfg.seed = config.seed;

    let mut trace = phase1_train(&mut model, &labeled, &train_cfg)?;
    let pseudo = pseudo_label(&model, &unlabeled, train_cfg.tau)?;
    let trace2 = phase2_train(&mut model, &labeled, &pseudo, &train_cfg)?;
    trace.extend(trace2);
    Ok((model, trace))
}

/// Predictions for a prepared chunk list.
pub fn detect(
    detector: &Detector,
    prep_chunks: &[PreparedChunk],
    template_count: usize,
) -> Result<Vec<(String, u64, Prediction)>> {
    use rayon::prelude::*;
    let variant = detector.variant();
    let results: Vec<Result<(String, u64, Prediction)>> = prep_chunks
        .par_iter()
        .map(|c| {
            let input = c.input_for(variant, template_count);
            let pred = detector.predict(&input)?;
            Ok((c.chunk.chunk_id.clone(), c.chunk.window_start, pred))
        })
        .collect();
    results.into_iter().collect()
}

/// Evaluate a detector on prepared test chunks.
pub fn evaluate_detector(
    detector: &Detector,
    prep: &PreparedData,
    test: &[PreparedChunk],
) -> Result<EvalReport> {
    let variant = detector.variant();
    let samples = prep.samples(test, variant);
    match detector {
        Detector::Single(m) => evaluate(m, &samples),
        Detector::Or(_) => {
            let preds: Vec<Prediction> = test
                .iter()
                .map(|c| detector.predict(&c.input_for(variant, prep.template_count())))
                .collect::<Result<_>>()?;
            if samples.is_empty() {
                return Err(Error::EmptyTestSet);
            }
            Ok(crate::train::confusion(&preds, &samples))
        }
    }
}

/// Keep human labels only where the selector matches; used by the training
/// command before phase 1.
pub fn apply_selector(
    train: &[Chunk],
    test: &[Chunk],
    selector: &LabelSelector,
) -> Result<crate::data::DatasetSplit> {
    select_labeled_subset(train, test, selector)
}

/// Attach pseudo-label metadata back onto chunks (bookkeeping mirror of the
/// train-module op, for reporting).
pub fn pseudo_labels_as_chunks(prep: &[PreparedChunk], pseudo: &[Sample]) -> Vec<Chunk> {
    let by_id: std::collections::HashMap<&str, &Sample> =
        pseudo.iter().map(|s| (s.chunk_id.as_str(), s)).collect();
    prep.iter()
        .filter_map(|c| {
            by_id.get(c.chunk.chunk_id.as_str()).map(|s| {
                let mut chunk = c.chunk.clone();
                chunk.label = s.label;
                chunk.label_source = LabelSource::Pseudo;
                chunk
            })
        })
        .collect()
}
