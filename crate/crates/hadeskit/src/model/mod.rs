//! Model assembly: architecture description, parameter construction, the
//! per-chunk forward pass, and the ablation variants used by the study
//! switches.

pub mod fusion;
pub mod log_encoder;
pub mod metric_encoder;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamLeaves, Params, Tape, Var};

pub use fusion::{build_global, fuse, head_logits, nll_loss, prediction_from_logits, HeadLayout, Prediction};
pub use log_encoder::{encode_logs, pad_or_truncate, LogEncoderLayout};
pub use metric_encoder::{group_by_aspect, AspectMap, ConvStackSpec, MetricEncoderLayout};

/// Model wiring switches mirroring the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Variant {
    /// Both modalities with cross-modal attentive fusion.
    Full,
    /// Logs only (metrics removed).
    WoM,
    /// Metrics only (logs removed).
    WoL,
    /// Two single-modality detectors joined by Boolean OR on predictions.
    WoF,
    /// Both modalities, plain row concatenation instead of fusion.
    WoA,
    /// Per-modality self-attention, then concatenation.
    WoC,
    /// Aspect-agnostic metric encoding (one flat causal stack).
    WoH,
    /// One-hot event encoding instead of learned embeddings.
    WoS,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Self::Full,
            "woM" | "wom" => Self::WoM,
            "woL" | "wol" => Self::WoL,
            "woF" | "wof" => Self::WoF,
            "woA" | "woa" => Self::WoA,
            "woC" | "woc" => Self::WoC,
            "woH" | "woh" => Self::WoH,
            "woS" | "wos" => Self::WoS,
            other => return Err(Error::Config(format!("unknown variant {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::WoM => "woM",
            Self::WoL => "woL",
            Self::WoF => "woF",
            Self::WoA => "woA",
            Self::WoC => "woC",
            Self::WoH => "woH",
            Self::WoS => "woS",
        }
    }

    pub fn uses_logs(&self) -> bool {
        !matches!(self, Self::WoL)
    }

    pub fn uses_metrics(&self) -> bool {
        !matches!(self, Self::WoM)
    }
}

/// Fully resolved architecture: every dimension pinned, including the
/// data-dependent aspect structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArch {
    pub variant: Variant,
    /// Event-vector width fed to the log encoder (embedding dim, or the
    /// template count for the one-hot variant).
    pub embed_dim: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub log_layers: usize,
    /// Shared representation width D.
    pub repr_dim: usize,
    pub l_max: usize,
    pub t_steps: usize,
    /// `(aspect name, member count)` in aspect order.
    pub aspects: Vec<(String, usize)>,
    pub intra_channels: Vec<usize>,
    pub inter_channels: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub kernel: usize,
}

impl ModelArch {
    pub fn n_metrics(&self) -> usize {
        self.aspects.iter().map(|(_, m)| m).sum()
    }

    pub fn log_layout(&self) -> LogEncoderLayout {
        LogEncoderLayout {
            input_dim: self.embed_dim,
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            layers: self.log_layers,
            repr_dim: self.repr_dim,
            l_max: self.l_max,
        }
    }

    pub fn metric_layout(&self) -> MetricEncoderLayout {
        MetricEncoderLayout {
            aspects: self.aspects.clone(),
            intra_channels: self.intra_channels.clone(),
            inter_channels: self.inter_channels.clone(),
            repr_dim: self.repr_dim,
            kernel: self.kernel,
        }
    }

    /// Flat (aspect-agnostic) metric stack for the `WoH` variant.
    pub fn flat_metric_spec(&self) -> ConvStackSpec {
        let mut channels = self.inter_channels.clone();
        channels.push(self.repr_dim);
        ConvStackSpec {
            in_channels: self.n_metrics(),
            channels,
            kernel: self.kernel,
        }
    }

    pub fn head_layout(&self) -> HeadLayout {
        HeadLayout {
            input_dim: self.repr_dim,
            hidden: self.head_hidden.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.log_layout().validate()?;
        if self.variant == Variant::WoF {
            return Err(Error::Config(
                "woF is a composition of woM and woL, not a single model".into(),
            ));
        }
        if self.aspects.is_empty() && self.variant.uses_metrics() {
            return Err(Error::Config("no aspects configured".into()));
        }
        Ok(())
    }
}

/// One chunk, prepared for the forward pass.
#[derive(Debug, Clone)]
pub struct ChunkInput {
    /// L_max × embed_dim event matrix (zero rows where padded).
    pub log_embed: Array2<f64>,
    pub log_mask: Vec<bool>,
    /// T × M standardized metric segment.
    pub metrics: Array2<f64>,
}

impl ChunkInput {
    pub fn check_finite(&self) -> Result<()> {
        if self.log_embed.iter().any(|v| !v.is_finite())
            || self.metrics.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Numerical("non-finite chunk input".into()));
        }
        Ok(())
    }
}

/// A single trainable detector (every variant except the OR-composed `WoF`).
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: ModelArch,
    pub params: Params,
}

impl Model {
    /// Build a model with seeded Xavier initialization. Parameter creation
    /// order is fixed, so a seed pins every initial weight.
    pub fn new(arch: ModelArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = Params::new();

        if arch.variant.uses_logs() {
            log_encoder::build_params(&mut params, &arch.log_layout(), &mut rng);
        }
        if arch.variant.uses_metrics() {
            if arch.variant == Variant::WoH {
                build_conv_params(&mut params, "met.flat", &arch.flat_metric_spec(), &mut rng);
            } else {
                let layout = arch.metric_layout();
                for (name, members) in &layout.aspects {
                    build_conv_params(
                        &mut params,
                        &format!("met.intra.{name}"),
                        &layout.intra_spec(*members),
                        &mut rng,
                    );
                }
                build_conv_params(&mut params, "met.inter", &layout.inter_spec(), &mut rng);
            }
        }
        match arch.variant {
            Variant::Full | Variant::WoH | Variant::WoS => {
                build_fusion_params(&mut params, "fuse.alpha", arch.repr_dim, &mut rng);
                build_fusion_params(&mut params, "fuse.beta", arch.repr_dim, &mut rng);
            }
            Variant::WoC => {
                build_fusion_params(&mut params, "fuse.self_log", arch.repr_dim, &mut rng);
                build_fusion_params(&mut params, "fuse.self_met", arch.repr_dim, &mut rng);
            }
            _ => {}
        }
        build_head_params(&mut params, &arch.head_layout(), &mut rng);

        Ok(Self { arch, params })
    }

    /// Forward pass producing the 1×2 logits node.
    pub fn forward_logits(
        &self,
        tape: &mut Tape,
        leaves: &ParamLeaves,
        input: &ChunkInput,
    ) -> Result<Var> {
        let arch = &self.arch;
        let r_log = if arch.variant.uses_logs() {
            Some(log_encoder::encode_logs(
                tape,
                leaves,
                &arch.log_layout(),
                &input.log_embed,
                &input.log_mask,
            )?)
        } else {
            None
        };
        let r_met = if arch.variant.uses_metrics() {
            Some(self.encode_metric_side(tape, leaves, input)?)
        } else {
            None
        };

        let r_global = match arch.variant {
            Variant::WoM => r_log.unwrap(),
            Variant::WoL => r_met.unwrap(),
            Variant::WoA => {
                let (l, m) = (r_log.unwrap(), r_met.unwrap());
                tape.concat_rows(l, m)
            }
            Variant::WoC => {
                let (l, m) = (r_log.unwrap(), r_met.unwrap());
                let self_log = fusion::fuse(
                    tape,
                    leaves.var("fuse.self_log.ws"),
                    leaves.var("fuse.self_log.wa"),
                    l,
                    l,
                    l,
                    Some(&input.log_mask),
                    Some(&input.log_mask),
                )?;
                let self_met = fusion::fuse(
                    tape,
                    leaves.var("fuse.self_met.ws"),
                    leaves.var("fuse.self_met.wa"),
                    m,
                    m,
                    m,
                    None,
                    None,
                )?;
                tape.concat_rows(self_met, self_log)
            }
            Variant::Full | Variant::WoH | Variant::WoS => {
                fusion::build_global(tape, leaves, r_log.unwrap(), r_met.unwrap(), &input.log_mask)?
            }
            Variant::WoF => unreachable!("validated at construction"),
        };
        Ok(fusion::head_logits(tape, leaves, &arch.head_layout(), r_global))
    }

    fn encode_metric_side(
        &self,
        tape: &mut Tape,
        leaves: &ParamLeaves,
        input: &ChunkInput,
    ) -> Result<Var> {
        if input.metrics.dim() != (self.arch.t_steps, self.arch.n_metrics()) {
            return Err(Error::Shape(format!(
                "metric segment is {:?}, expected {:?}",
                input.metrics.dim(),
                (self.arch.t_steps, self.arch.n_metrics())
            )));
        }
        if self.arch.variant == Variant::WoH {
            let x = tape.constant(input.metrics.clone());
            return Ok(metric_encoder::conv_stack_forward(
                tape,
                leaves,
                "met.flat",
                &self.arch.flat_metric_spec(),
                x,
            ));
        }
        // Columns arrive pre-grouped by aspect (see pipeline), so blocks are
        // consecutive column ranges.
        let mut blocks = Vec::with_capacity(self.arch.aspects.len());
        let mut col = 0usize;
        for (_, members) in &self.arch.aspects {
            blocks.push(
                input
                    .metrics
                    .slice(ndarray::s![.., col..col + members])
                    .to_owned(),
            );
            col += members;
        }
        let (_h, r) = metric_encoder::encode_metrics(tape, leaves, &self.arch.metric_layout(), &blocks)?;
        Ok(r)
    }

    /// Inference on one chunk.
    pub fn predict(&self, input: &ChunkInput) -> Result<Prediction> {
        input.check_finite()?;
        let mut tape = Tape::new();
        let leaves = ParamLeaves::register(&mut tape, &self.params);
        let logits = self.forward_logits(&mut tape, &leaves, input)?;
        fusion::prediction_from_logits(tape.value(logits))
    }
}

fn build_conv_params(
    params: &mut Params,
    prefix: &str,
    spec: &ConvStackSpec,
    rng: &mut ChaCha20Rng,
) {
    use crate::nn::params::{xavier, zeros};
    for (i, (cin, cout)) in spec.layer_dims().iter().enumerate() {
        params.insert(&format!("{prefix}.l{i}.w"), xavier(rng, *cout, spec.kernel * cin));
        params.insert(&format!("{prefix}.l{i}.b"), zeros(1, *cout));
    }
}

fn build_fusion_params(params: &mut Params, prefix: &str, d: usize, rng: &mut ChaCha20Rng) {
    use crate::nn::params::xavier;
    params.insert(&format!("{prefix}.ws"), xavier(rng, d, d));
    params.insert(&format!("{prefix}.wa"), xavier(rng, 2 * d, d));
}

fn build_head_params(params: &mut Params, layout: &HeadLayout, rng: &mut ChaCha20Rng) {
    use crate::nn::params::{xavier, zeros};
    let dims = layout.layer_dims();
    let n = dims.len();
    for (i, (cin, cout)) in dims.iter().enumerate() {
        if i + 1 == n {
            params.insert("head.out.w", xavier(rng, *cin, *cout));
            params.insert("head.out.b", zeros(1, *cout));
        } else {
            params.insert(&format!("head.l{i}.w"), xavier(rng, *cin, *cout));
            params.insert(&format!("head.l{i}.b"), zeros(1, *cout));
        }
    }
}

/// OR-composition of the two single-modality detectors (`WoF`).
#[derive(Debug, Clone)]
pub struct OrDetector {
    pub logs_only: Model,
    pub metrics_only: Model,
}

impl OrDetector {
    /// Boolean OR on the labels; the reported confidence is the strongest
    /// abnormal vote when alarming, otherwise the weaker normal belief.
    pub fn predict(&self, input: &ChunkInput) -> Result<Prediction> {
        let a = self.logs_only.predict(input)?;
        let b = self.metrics_only.predict(input)?;
        let label = a.label | b.label;
        let pick = if label == 1 {
            let mut c: Vec<&Prediction> = Vec::new();
            if a.label == 1 {
                c.push(&a);
            }
            if b.label == 1 {
                c.push(&b);
            }
            c.into_iter()
                .max_by(|x, y| x.confidence.partial_cmp(&y.confidence).unwrap())
                .copied()
                .unwrap()
        } else if a.confidence <= b.confidence {
            a
        } else {
            b
        };
        Ok(Prediction {
            label,
            p_normal: pick.p_normal,
            p_abnormal: pick.p_abnormal,
            confidence: pick.confidence,
        })
    }
}

/// One-hot event encoding used by the `WoS` variant: width = template count,
/// out-of-vocabulary events embed to the zero vector.
pub fn one_hot_event(event_id: Option<u32>, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    if let Some(id) = event_id {
        if (id as usize) < width {
            v[id as usize] = 1.0;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn toy_arch(variant: Variant) -> ModelArch {
        ModelArch {
            variant,
            embed_dim: 3,
            d_model: 8,
            n_heads: 2,
            d_ff: 12,
            log_layers: 1,
            repr_dim: 4,
            l_max: 4,
            t_steps: 5,
            aspects: vec![("cpu".into(), 2), ("io".into(), 1)],
            intra_channels: vec![3],
            inter_channels: vec![4],
            head_hidden: vec![6],
            kernel: 2,
        }
    }

    pub(crate) fn toy_input(seed: u64, arch: &ModelArch) -> ChunkInput {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let real = 3usize;
        let mut log_embed = Array2::zeros((arch.l_max, arch.embed_dim));
        let mut log_mask = vec![false; arch.l_max];
        for r in 0..real {
            log_mask[r] = true;
            for c in 0..arch.embed_dim {
                log_embed[[r, c]] = rng.random_range(-1.0..1.0);
            }
        }
        let metrics = Array2::from_shape_fn((arch.t_steps, arch.n_metrics()), |_| {
            rng.random_range(-1.5..1.5)
        });
        ChunkInput { log_embed, log_mask, metrics }
    }

    #[test]
    fn forward_shapes_for_all_single_variants() {
        for variant in [
            Variant::Full,
            Variant::WoM,
            Variant::WoL,
            Variant::WoA,
            Variant::WoC,
            Variant::WoH,
            Variant::WoS,
        ] {
            let arch = toy_arch(variant);
            let model = Model::new(arch.clone(), 7).unwrap();
            let input = toy_input(1, &arch);
            let p = model.predict(&input).unwrap();
            assert!((p.p_normal + p.p_abnormal - 1.0).abs() < 1e-9, "{variant:?}");
            assert!(p.confidence >= 0.5 && p.confidence <= 1.0);
        }
    }

    #[test]
    fn deprived_modality_has_no_influence() {
        // Logs-only model must ignore metric changes; metrics-only model
        // must ignore log changes (wiring check for the removed modality).
        let arch_m = toy_arch(Variant::WoM);
        let logs_only = Model::new(arch_m.clone(), 3).unwrap();
        let mut input = toy_input(2, &arch_m);
        let base = logs_only.predict(&input).unwrap();
        input.metrics *= 100.0;
        let moved = logs_only.predict(&input).unwrap();
        assert_eq!(base, moved);

        let arch_l = toy_arch(Variant::WoL);
        let metrics_only = Model::new(arch_l.clone(), 3).unwrap();
        let mut input = toy_input(2, &arch_l);
        let base = metrics_only.predict(&input).unwrap();
        input.log_embed *= -5.0;
        let moved = metrics_only.predict(&input).unwrap();
        assert_eq!(base, moved);
    }

    #[test]
    fn metrics_only_runs_without_any_log_input() {
        let arch = toy_arch(Variant::WoL);
        let model = Model::new(arch.clone(), 5).unwrap();
        let input = ChunkInput {
            log_embed: Array2::zeros((arch.l_max, arch.embed_dim)),
            log_mask: vec![false; arch.l_max],
            metrics: Array2::from_elem((arch.t_steps, arch.n_metrics()), 0.3),
        };
        assert!(model.predict(&input).is_ok());
    }

    #[test]
    fn logs_only_runs_on_empty_log_chunk_via_padding() {
        let arch = toy_arch(Variant::WoM);
        let model = Model::new(arch.clone(), 5).unwrap();
        let input = ChunkInput {
            log_embed: Array2::zeros((arch.l_max, arch.embed_dim)),
            log_mask: vec![false; arch.l_max],
            metrics: Array2::zeros((arch.t_steps, arch.n_metrics())),
        };
        assert!(model.predict(&input).is_ok());
    }

    #[test]
    fn or_detector_is_boolean_or() {
        let arch_m = toy_arch(Variant::WoM);
        let arch_l = toy_arch(Variant::WoL);
        let or = OrDetector {
            logs_only: Model::new(arch_m, 11).unwrap(),
            metrics_only: Model::new(arch_l, 12).unwrap(),
        };
        let input = toy_input(6, &or.logs_only.arch);
        let a = or.logs_only.predict(&input).unwrap();
        let b = or.metrics_only.predict(&input).unwrap();
        let both = or.predict(&input).unwrap();
        assert_eq!(both.label, a.label | b.label);
    }

    #[test]
    fn woa_equals_plain_concatenation_oracle() {
        // The concat variant's pooled head input must equal the mean over
        // the stacked [R_log; R_met] rows computed independently.
        let arch = toy_arch(Variant::WoA);
        let model = Model::new(arch.clone(), 21).unwrap();
        let input = toy_input(3, &arch);

        let mut tape = Tape::new();
        let leaves = ParamLeaves::register(&mut tape, &model.params);
        let r_log = log_encoder::encode_logs(
            &mut tape,
            &leaves,
            &arch.log_layout(),
            &input.log_embed,
            &input.log_mask,
        )
        .unwrap();
        let r_met = model.encode_metric_side(&mut tape, &leaves, &input).unwrap();
        let (lv, mv) = (tape.value(r_log).clone(), tape.value(r_met).clone());
        let stacked = ndarray::concatenate(ndarray::Axis(0), &[lv.view(), mv.view()]).unwrap();

        let cat = tape.concat_rows(r_log, r_met);
        assert_eq!(tape.value(cat), &stacked);
    }

    #[test]
    fn wos_uses_indicator_vectors() {
        // Equality to the indicator-vector oracle.
        let v = one_hot_event(Some(2), 5);
        assert_eq!(v, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let unknown = one_hot_event(None, 5);
        assert!(unknown.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn modal_sensitivity_of_fused_model() {
        // Perturbing a real log row must move the metric-query block, and
        // perturbing a metric row must move the log-query block.
        let arch = toy_arch(Variant::Full);
        let model = Model::new(arch.clone(), 17).unwrap();
        let input = toy_input(9, &arch);

        let global = |input: &ChunkInput| -> (Array2<f64>, Array2<f64>) {
            let mut tape = Tape::new();
            let leaves = ParamLeaves::register(&mut tape, &model.params);
            let r_log = log_encoder::encode_logs(
                &mut tape,
                &leaves,
                &arch.log_layout(),
                &input.log_embed,
                &input.log_mask,
            )
            .unwrap();
            let r_met = model.encode_metric_side(&mut tape, &leaves, input).unwrap();
            let rg = fusion::build_global(&mut tape, &leaves, r_log, r_met, &input.log_mask).unwrap();
            let v = tape.value(rg);
            let beta = v.slice(ndarray::s![..arch.t_steps, ..]).to_owned();
            let alpha = v.slice(ndarray::s![arch.t_steps.., ..]).to_owned();
            (beta, alpha)
        };

        let (beta0, alpha0) = global(&input);
        let mut log_perturbed = input.clone();
        log_perturbed.log_embed[[1, 0]] += 0.5; // real row
        let (beta1, _) = global(&log_perturbed);
        assert!(beta0 != beta1, "log row change must reach the metric-query block");

        let mut met_perturbed = input.clone();
        met_perturbed.metrics[[2, 1]] += 0.5;
        let (_, alpha2) = global(&met_perturbed);
        assert!(alpha0 != alpha2, "metric row change must reach the log-query block");
    }

    /// Central finite differences against the analytic gradients for every
    /// parameter of a small full model.
    #[test]
    fn full_model_gradient_check() {
        let arch = toy_arch(Variant::Full);
        let model = Model::new(arch.clone(), 23).unwrap();
        let input = toy_input(4, &arch);
        let rel_err = gradient_check(&model, &input, 1, 1e-5);
        assert!(rel_err < 1e-3, "max relative error {rel_err}");
    }

    /// Shared helper: max relative error between analytic and numeric
    /// gradients over every parameter entry (sampled when tensors are big).
    pub(crate) fn gradient_check(model: &Model, input: &ChunkInput, label: u8, eps: f64) -> f64 {
        let loss_of = |m: &Model| -> f64 {
            let mut tape = Tape::new();
            let leaves = ParamLeaves::register(&mut tape, &m.params);
            let logits = m.forward_logits(&mut tape, &leaves, input).unwrap();
            let loss = fusion::nll_loss(&mut tape, logits, label);
            tape.value(loss)[[0, 0]]
        };

        // Analytic gradients.
        let mut tape = Tape::new();
        let leaves = ParamLeaves::register(&mut tape, &model.params);
        let logits = model.forward_logits(&mut tape, &leaves, input).unwrap();
        let loss = fusion::nll_loss(&mut tape, logits, label);
        let grads = tape.backward(loss);

        let mut worst = 0.0f64;
        let names: Vec<String> = model.params.names().cloned().collect();
        for name in names {
            let mut probe = model.clone();
            let shape = model.params.get(&name).dim();
            let analytic = match grads.get(leaves.var(&name)) {
                Some(g) => g.clone(),
                None => Array2::zeros(shape),
            };
            for r in 0..shape.0 {
                for c in 0..shape.1 {
                    let base = model.params.get(&name)[[r, c]];
                    probe.params.get_mut(&name)[[r, c]] = base + eps;
                    let up = loss_of(&probe);
                    probe.params.get_mut(&name)[[r, c]] = base - eps;
                    let down = loss_of(&probe);
                    probe.params.get_mut(&name)[[r, c]] = base;
                    let numeric = (up - down) / (2.0 * eps);
                    let ana = analytic[[r, c]];
                    let denom = numeric.abs().max(ana.abs()).max(1e-6);
                    let rel = (numeric - ana).abs() / denom;
                    if rel > worst {
                        worst = rel;
                    }
                }
            }
        }
        worst
    }
}
