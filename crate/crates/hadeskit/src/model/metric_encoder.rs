//! Hierarchical metric encoding.
//!
//! Metrics are grouped by resource aspect (CPU, I/O, memory, network, …).
//! Each aspect's T×m_a block runs through its own causal-convolution stack
//! and is max-pooled over channels into one series, giving the stacked
//! intra-aspect feature H ∈ T×γ. A second causal stack over those γ series
//! yields the final T×D metric representation. Causal convolutions pad on
//! the left only, so row t never sees rows after t.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamLeaves, Tape, Var};

/// Metric-name → aspect grouping. This is operator domain knowledge and is
/// always loaded from configuration, never inferred.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectMap {
    /// `(aspect name, member metrics)` in fixed order (sorted by aspect
    /// name when loaded from JSON).
    pub aspects: Vec<(String, Vec<String>)>,
}

impl AspectMap {
    /// Parse the `{aspect_name: [metric_name, …]}` JSON format. Aspects are
    /// ordered by name; member order inside an aspect is kept as written.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let aspects: Vec<(String, Vec<String>)> = raw.into_iter().collect();
        let map = Self { aspects };
        map.validate()?;
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<&String, &Vec<String>> =
            self.aspects.iter().map(|(a, m)| (a, m)).collect();
        serde_json::to_string_pretty(&raw).expect("aspect map json")
    }

    pub fn validate(&self) -> Result<()> {
        if self.aspects.is_empty() {
            return Err(Error::Config("aspect map has no aspects".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (aspect, members) in &self.aspects {
            if members.is_empty() {
                return Err(Error::Config(format!("aspect {aspect} has no metrics")));
            }
            for m in members {
                if !seen.insert(m.clone()) {
                    return Err(Error::Config(format!(
                        "metric {m} assigned to more than one aspect"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn gamma(&self) -> usize {
        self.aspects.len()
    }

    pub fn aspect_names(&self) -> Vec<String> {
        self.aspects.iter().map(|(a, _)| a.clone()).collect()
    }

    /// Column indices of each aspect's members inside `metric_names`.
    pub fn group_indices(&self, metric_names: &[String]) -> Result<Vec<Vec<usize>>> {
        let assigned: std::collections::BTreeSet<&String> = self
            .aspects
            .iter()
            .flat_map(|(_, m)| m.iter())
            .collect();
        for name in metric_names {
            if !assigned.contains(name) {
                return Err(Error::UnmappedMetric(name.clone()));
            }
        }
        let mut groups = Vec::with_capacity(self.aspects.len());
        for (aspect, members) in &self.aspects {
            let mut idx = Vec::with_capacity(members.len());
            for m in members {
                match metric_names.iter().position(|n| n == m) {
                    Some(i) => idx.push(i),
                    None => {
                        return Err(Error::Data(format!(
                            "aspect {aspect} declares metric {m} which is absent from the data"
                        )))
                    }
                }
            }
            groups.push(idx);
        }
        Ok(groups)
    }
}

/// Column-partition a T×M segment into the γ per-aspect blocks.
pub fn group_by_aspect(
    segment: &Array2<f64>,
    metric_names: &[String],
    map: &AspectMap,
) -> Result<Vec<Array2<f64>>> {
    if segment.ncols() != metric_names.len() {
        return Err(Error::Shape(format!(
            "segment has {} columns but {} metric names",
            segment.ncols(),
            metric_names.len()
        )));
    }
    let groups = map.group_indices(metric_names)?;
    Ok(groups
        .iter()
        .map(|idx| {
            let mut block = Array2::zeros((segment.nrows(), idx.len()));
            for (j, &col) in idx.iter().enumerate() {
                block.column_mut(j).assign(&segment.column(col));
            }
            block
        })
        .collect())
}

/// Shape description of one causal-convolution stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStackSpec {
    pub in_channels: usize,
    /// Output channels per layer; the last entry is the stack output width.
    pub channels: Vec<usize>,
    pub kernel: usize,
}

impl ConvStackSpec {
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut cin = self.in_channels;
        for &cout in &self.channels {
            dims.push((cin, cout));
            cin = cout;
        }
        dims
    }

    /// Receptive field with dilation doubling per layer.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel - 1) * ((1 << self.channels.len()) - 1)
    }
}

/// Run one causal stack: unfold → weight → bias per layer, ReLU strictly
/// between layers. Weight layout is `(c_out, kernel·c_in)` matching the
/// unfold order (oldest tap first).
pub fn conv_stack_forward(
    tape: &mut Tape,
    leaves: &ParamLeaves,
    prefix: &str,
    spec: &ConvStackSpec,
    input: Var,
) -> Var {
    let mut h = input;
    for (i, _) in spec.layer_dims().iter().enumerate() {
        if i > 0 {
            h = tape.relu(h);
        }
        let unfolded = tape.unfold_causal(h, spec.kernel, 1 << i);
        let w = leaves.var(&format!("{prefix}.l{i}.w"));
        let b = leaves.var(&format!("{prefix}.l{i}.b"));
        let projected = tape.matmul_nt(unfolded, w);
        h = tape.add_bias_row(projected, b);
    }
    h
}

/// Intra-aspect encoding: stack then channel max-pool, T×1.
pub fn encode_intra(
    tape: &mut Tape,
    leaves: &ParamLeaves,
    prefix: &str,
    spec: &ConvStackSpec,
    block: Var,
) -> Var {
    let features = conv_stack_forward(tape, leaves, prefix, spec, block);
    tape.row_max(features)
}

/// Full hierarchical pass. Returns `(H, R)` with shapes T×γ and T×D.
pub struct MetricEncoderLayout {
    /// `(aspect name, member count)` in aspect order.
    pub aspects: Vec<(String, usize)>,
    pub intra_channels: Vec<usize>,
    pub inter_channels: Vec<usize>,
    pub repr_dim: usize,
    pub kernel: usize,
}

impl MetricEncoderLayout {
    pub fn intra_spec(&self, members: usize) -> ConvStackSpec {
        ConvStackSpec {
            in_channels: members,
            channels: self.intra_channels.clone(),
            kernel: self.kernel,
        }
    }

    pub fn inter_spec(&self) -> ConvStackSpec {
        let mut channels = self.inter_channels.clone();
        channels.push(self.repr_dim);
        ConvStackSpec {
            in_channels: self.aspects.len(),
            channels,
            kernel: self.kernel,
        }
    }
}

pub fn encode_metrics(
    tape: &mut Tape,
    leaves: &ParamLeaves,
    layout: &MetricEncoderLayout,
    blocks: &[Array2<f64>],
) -> Result<(Var, Var)> {
    if blocks.len() != layout.aspects.len() {
        return Err(Error::Shape(format!(
            "{} aspect blocks for {} configured aspects",
            blocks.len(),
            layout.aspects.len()
        )));
    }
    let mut pooled = Vec::with_capacity(blocks.len());
    for (block, (name, members)) in blocks.iter().zip(&layout.aspects) {
        if block.ncols() != *members {
            return Err(Error::Shape(format!(
                "aspect {name}: block has {} columns, expected {members}",
                block.ncols()
            )));
        }
        let input = tape.constant(block.clone());
        let spec = layout.intra_spec(*members);
        pooled.push(encode_intra(tape, leaves, &format!("met.intra.{name}"), &spec, input));
    }
    let h = pooled
        .into_iter()
        .reduce(|a, b| tape.concat_cols(a, b))
        .expect("at least one aspect");
    let r = conv_stack_forward(tape, leaves, "met.inter", &layout.inter_spec(), h);
    Ok((h, r))
}
