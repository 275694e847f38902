//! Sequence encoding of a chunk's log events.
//!
//! Event embeddings are projected to the model width, given sinusoidal
//! positions, passed through Transformer encoder layers (masked multi-head
//! self-attention, residual + layer norm, position-wise feed-forward), and
//! projected to the shared D-dimensional space. Padded positions are masked
//! out as attention keys and their output rows are forced to zero, so the
//! representation of the real events does not depend on how much padding
//! follows them.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::{ParamLeaves, Tape, Var};

/// Fixed-size input window: sequences longer than `l_max` keep their most
/// recent `l_max` events; shorter ones are zero-padded at the tail.
pub fn pad_or_truncate(
    embeddings: &[Vec<f64>],
    l_max: usize,
    dim: usize,
) -> (Array2<f64>, Vec<bool>) {
    assert!(l_max >= 1, "l_max must be >= 1");
    let mut out = Array2::zeros((l_max, dim));
    let mut mask = vec![false; l_max];
    let skip = embeddings.len().saturating_sub(l_max);
    for (row, emb) in embeddings.iter().skip(skip).take(l_max).enumerate() {
        debug_assert_eq!(emb.len(), dim);
        for (c, &v) in emb.iter().enumerate() {
            out[[row, c]] = v;
        }
        mask[row] = true;
    }
    (out, mask)
}

/// Sinusoidal positional table, rows = positions.
pub fn positional_table(l_max: usize, d_model: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((l_max, d_model));
    for pos in 0..l_max {
        for i in 0..d_model {
            let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d_model as f64);
            pe[[pos, i]] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// Static description of the encoder used to build and consume parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEncoderLayout {
    pub input_dim: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub layers: usize,
    pub repr_dim: usize,
    pub l_max: usize,
}

impl LogEncoderLayout {
    pub fn validate(&self) -> Result<()> {
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

/// One encoder layer. Attention matrices are pushed into `attn_sink` so
/// invariants on the weights can be checked from outside.
fn transformer_layer(
    tape: &mut Tape,
    leaves: &ParamLeaves,
    prefix: &str,
    layout: &LogEncoderLayout,
    x: Var,
    mask: &[bool],
    attn_sink: &mut Vec<Var>,
) -> Var {
    let p = |s: &str| format!("{prefix}.{s}");
    let wq = leaves.var(&p("attn.wq"));
    let wk = leaves.var(&p("attn.wk"));
    let wv = leaves.var(&p("attn.wv"));
    let wo = leaves.var(&p("attn.wo"));
    let bq = leaves.var(&p("attn.bq"));
    let bk = leaves.var(&p("attn.bk"));
    let bv = leaves.var(&p("attn.bv"));
    let bo = leaves.var(&p("attn.bo"));

    let q0 = tape.matmul(x, wq);
    let q = tape.add_bias_row(q0, bq);
    let k0 = tape.matmul(x, wk);
    let k = tape.add_bias_row(k0, bk);
    let v0 = tape.matmul(x, wv);
    let v = tape.add_bias_row(v0, bv);

    let dh = layout.d_model / layout.n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut merged: Option<Var> = None;
    for h in 0..layout.n_heads {
        let lo = h * dh;
        let hi = lo + dh;
        let qh = tape.slice_cols(q, lo, hi);
        let kh = tape.slice_cols(k, lo, hi);
        let vh = tape.slice_cols(v, lo, hi);
        let scores = tape.matmul_nt(qh, kh);
        let scaled = tape.scale(scores, scale);
        let attn = tape.softmax_rows_masked(scaled, Some(mask));
        attn_sink.push(attn);
        let head = tape.matmul(attn, vh);
        merged = Some(match merged {
            Some(m) => tape.concat_cols(m, head),
            None => head,
        });
    }
    let attn_cat = merged.expect("at least one head");
    let proj0 = tape.matmul(attn_cat, wo);
    let proj = tape.add_bias_row(proj0, bo);

    let res1 = tape.add(x, proj);
    let g1 = leaves.var(&p("ln1.g"));
    let b1 = leaves.var(&p("ln1.b"));
    let x1 = tape.layer_norm(res1, g1, b1, 1e-5);

    let w1 = leaves.var(&p("ff.w1"));
    let bf1 = leaves.var(&p("ff.b1"));
    let w2 = leaves.var(&p("ff.w2"));
    let bf2 = leaves.var(&p("ff.b2"));
    let f0 = tape.matmul(x1, w1);
    let f1 = tape.add_bias_row(f0, bf1);
    let f2 = tape.relu(f1);
    let f3 = tape.matmul(f2, w2);
    let ff = tape.add_bias_row(f3, bf2);

    let res2 = tape.add(x1, ff);
    let g2 = leaves.var(&p("ln2.g"));
    let b2 = leaves.var(&p("ln2.b"));
    tape.layer_norm(res2, g2, b2, 1e-5)
}

/// Full log-encoder forward: padded L×E input → L×D representation with
/// padded rows exactly zero.
pub fn encode_logs(
    tape: &mut Tape,
    leaves: &ParamLeaves,
    layout: &LogEncoderLayout,
    padded: &Array2<f64>,
    mask: &[bool],
) -> Result<Var> {
    encode_logs_capturing(tape, leaves, layout, padded, mask, &mut Vec::new())
}

/// Like [`encode_logs`] but also hands back every attention matrix.
pub fn encode_logs_capturing(
    tape: &mut Tape,
    leaves: &ParamLeaves,
    layout: &LogEncoderLayout,
    padded: &Array2<f64>,
    mask: &[bool],
    attn_sink: &mut Vec<Var>,
) -> Result<Var> {
    if padded.dim() != (layout.l_max, layout.input_dim) {
        return Err(Error::Shape(format!(
            "log input is {:?}, layout expects {:?}",
            padded.dim(),
            (layout.l_max, layout.input_dim)
        )));
    }
    if mask.len() != layout.l_max {
        return Err(Error::Shape("pad mask length != l_max".into()));
    }

    let input = tape.constant(padded.clone());
    let win = leaves.var("log.in_proj.w");
    let bin = leaves.var("log.in_proj.b");
    let x0 = tape.matmul(input, win);
    let x1 = tape.add_bias_row(x0, bin);
    let pe = tape.constant(positional_table(layout.l_max, layout.d_model));
    let mut x = tape.add(x1, pe);

    for layer in 0..layout.layers {
        x = transformer_layer(tape, leaves, &format!("log.l{layer}"), layout, x, mask, attn_sink);
    }

    let wout = leaves.var("log.out_proj.w");
    let bout = leaves.var("log.out_proj.b");
    let o0 = tape.matmul(x, wout);
    let o1 = tape.add_bias_row(o0, bout);
    Ok(tape.zero_rows(o1, mask))
}

/// Build the encoder's parameters in a fixed creation order.
pub fn build_params(
    params: &mut crate::nn::Params,
    layout: &LogEncoderLayout,
    rng: &mut rand_chacha::ChaCha20Rng,
) {
    use crate::nn::params::{ones, xavier, zeros};
    params.insert("log.in_proj.w", xavier(rng, layout.input_dim, layout.d_model));
    params.insert("log.in_proj.b", zeros(1, layout.d_model));
    for layer in 0..layout.layers {
        let p = |s: &str| format!("log.l{layer}.{s}");
        for w in ["attn.wq", "attn.wk", "attn.wv", "attn.wo"] {
            params.insert(&p(w), xavier(rng, layout.d_model, layout.d_model));
        }
        for b in ["attn.bq", "attn.bk", "attn.bv", "attn.bo"] {
            params.insert(&p(b), zeros(1, layout.d_model));
        }
        params.insert(&p("ln1.g"), ones(1, layout.d_model));
        params.insert(&p("ln1.b"), zeros(1, layout.d_model));
        params.insert(&p("ff.w1"), xavier(rng, layout.d_model, layout.d_ff));
        params.insert(&p("ff.b1"), zeros(1, layout.d_ff));
        params.insert(&p("ff.w2"), xavier(rng, layout.d_ff, layout.d_model));
        params.insert(&p("ff.b2"), zeros(1, layout.d_model));
        params.insert(&p("ln2.g"), ones(1, layout.d_model));
        params.insert(&p("ln2.b"), zeros(1, layout.d_model));
    }
    params.insert("log.out_proj.w", xavier(rng, layout.d_model, layout.repr_dim));
    params.insert("log.out_proj.b", zeros(1, layout.repr_dim));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy_layout(l_max: usize) -> LogEncoderLayout {
        LogEncoderLayout {
            input_dim: 3,
            d_model: 8,
            n_heads: 2,
            d_ff: 12,
            layers: 2,
            repr_dim: 4,
            l_max,
        }
    }

    fn toy_params(layout: &LogEncoderLayout, seed: u64) -> Params {
        let mut params = Params::new();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        build_params(&mut params, layout, &mut rng);
        params
    }

    fn embeds(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| vec![i as f64 + 0.1, -(i as f64) * 0.3, 0.7 - i as f64 * 0.05])
            .collect()
    }

    #[test]
    fn pad_short_sequence() {
        let (m, mask) = pad_or_truncate(&embeds(3), 5, 3);
        assert_eq!(mask, vec![true, true, true, false, false]);
        assert_eq!(m.row(2)[0], 2.1);
        assert!(m.row(3).iter().all(|&v| v == 0.0));
        assert!(m.row(4).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncate_keeps_tail() {
        // Tail-window oracle: events 2..7 of 7 survive at l_max = 5.
        let e = embeds(7);
        let (m, mask) = pad_or_truncate(&e, 5, 3);
        assert!(mask.iter().all(|&b| b));
        for (row, src) in (2..7).enumerate() {
            assert_eq!(m.row(row).to_vec(), e[src]);
        }
    }

    #[test]
    fn zero_events_all_pad() {
        let (m, mask) = pad_or_truncate(&[], 4, 3);
        assert!(mask.iter().all(|&b| !b));
        assert!(m.iter().all(|&v| v == 0.0));
    }

    fn run(layout: &LogEncoderLayout, params: &Params, padded: &Array2<f64>, mask: &[bool]) -> Array2<f64> {
        let mut tape = Tape::new();
        let leaves = crate::nn::ParamLeaves::register(&mut tape, params);
        let out = encode_logs(&mut tape, &leaves, layout, padded, mask).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn output_shape_and_pad_rows_zero() {
        let layout = toy_layout(6);
        let params = toy_params(&layout, 1);
        let (padded, mask) = pad_or_truncate(&embeds(2), 6, 3);
        let out = run(&layout, &params, &padded, &mask);
        assert_eq!(out.dim(), (6, 4));
        for r in 2..6 {
            assert!(out.row(r).iter().all(|&v| v == 0.0), "pad row {r} must be zero");
        }
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn swapping_events_changes_output() {
        let layout = toy_layout(4);
        let params = toy_params(&layout, 2);
        let e = embeds(3);
        let (a, mask) = pad_or_truncate(&e, 4, 3);
        let mut swapped = e.clone();
        swapped.swap(0, 2);
        let (b, _) = pad_or_truncate(&swapped, 4, 3);
        let out_a = run(&layout, &params, &a, &mask);
        let out_b = run(&layout, &params, &b, &mask);
        assert!(out_a != out_b, "positional encoding must make order visible");
    }

    #[test]
    fn all_padding_gives_all_zero() {
        let layout = toy_layout(4);
        let params = toy_params(&layout, 3);
        let (padded, mask) = pad_or_truncate(&[], 4, 3);
        let out = run(&layout, &params, &padded, &mask);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padding_invariance_for_real_rows() {
        // Same two real events under l_max 4 and l_max 9: identical rows.
        let e = embeds(2);
        let small = toy_layout(4);
        let big = toy_layout(9);
        let params = toy_params(&small, 4); // same params work for both l_max
        let (pa, ma) = pad_or_truncate(&e, 4, 3);
        let (pb, mb) = pad_or_truncate(&e, 9, 3);
        let out_a = run(&small, &params, &pa, &ma);
        let out_b = run(&big, &params, &pb, &mb);
        for r in 0..2 {
            for c in 0..4 {
                assert!(
                    (out_a[[r, c]] - out_b[[r, c]]).abs() < 1e-5,
                    "row {r} col {c}: {} vs {}",
                    out_a[[r, c]],
                    out_b[[r, c]]
                );
            }
        }
    }

    #[test]
    fn wrong_shape_is_reported() {
        let layout = toy_layout(4);
        let params = toy_params(&layout, 5);
        let mut tape = Tape::new();
        let leaves = crate::nn::ParamLeaves::register(&mut tape, &params);
        let bad = Array2::zeros((3, 3));
        assert!(matches!(
            encode_logs(&mut tape, &leaves, &layout, &bad, &[true; 4]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let layout = toy_layout(5);
        let (padded, mask) = pad_or_truncate(&embeds(3), 5, 3);
        let a = run(&layout, &toy_params(&layout, 11), &padded, &mask);
        let b = run(&layout, &toy_params(&layout, 11), &padded, &mask);
        assert_eq!(a, b);
    }
}
