//! Softmax attention with additive positional bias, rotary embeddings, and
//! the attention-ratio check for anchored pairs.
//!
//! The ratio check works on the additive-bias model: each logit is
//! `(q_i . k_j + P(|pos_i - pos_j|)) / sqrt(d)`. Rotary embeddings are not an
//! additive bias, so [`rope_attention_demo`] only reports what it observes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchor::{insert_text_into_image, plan_text_into_image};
use crate::error::{Error, Result};
use crate::report::{csv, fmt_f64};
use crate::tokens::{
    argmax_match, build_similarity_matrix, EmbeddingSet, MultimodalSequence, TokenKind,
};

pub const DEFAULT_ROPE_BASE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasFamily {
    /// `P(dist) = -alpha * dist`
    Linear,
    /// `P(dist) = -alpha * ln(1 + dist)`
    Logarithmic,
}

impl std::fmt::Display for BiasFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BiasFamily::Linear => "linear",
            BiasFamily::Logarithmic => "logarithmic",
        })
    }
}

/// Additive positional penalty, zero at distance 0 and strictly decreasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasModel {
    family: BiasFamily,
    alpha: f64,
}

impl BiasModel {
    pub fn new(family: BiasFamily, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bias alpha {alpha} must be > 0"
            )));
        }
        Ok(Self { family, alpha })
    }

    /// Decay rate giving `bias(near) - bias(far) == delta_p`.
    pub fn with_gap(family: BiasFamily, delta_p: f64, near: usize, far: usize) -> Result<Self> {
        let span = match family {
            BiasFamily::Linear => far as f64 - near as f64,
            BiasFamily::Logarithmic => (far as f64).ln_1p() - (near as f64).ln_1p(),
        };
        if span <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "far {far} must exceed near {near}"
            )));
        }
        Self::new(family, delta_p / span)
    }

    pub fn family(&self) -> BiasFamily {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn bias(&self, distance: usize) -> f64 {
        let d = distance as f64;
        match self.family {
            BiasFamily::Linear => -self.alpha * d,
            BiasFamily::Logarithmic => -self.alpha * d.ln_1p(),
        }
    }
}

/// Queries and keys at explicit positions under an additive bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInstance {
    dim: usize,
    queries: Vec<Vec<f64>>,
    keys: Vec<Vec<f64>>,
    positions: Vec<usize>,
    bias: BiasModel,
}

impl AttentionInstance {
    pub fn new(
        dim: usize,
        queries: Vec<Vec<f64>>,
        keys: Vec<Vec<f64>>,
        positions: Vec<usize>,
        bias: BiasModel,
    ) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::OddDimension(dim));
        }
        let len = queries.len();
        if keys.len() != len || positions.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: keys.len().min(positions.len()),
            });
        }
        if let Some(bad) = queries.iter().chain(&keys).find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Ok(Self {
            dim,
            queries,
            keys,
            positions,
            bias,
        })
    }

    /// Self-attention over a token sequence: queries and keys are the token
    /// embeddings, positions are the sequence indices. Pause tokens are
    /// skipped by the caller's choice of sequence.
    pub fn from_sequence(
        e: &EmbeddingSet,
        seq: &MultimodalSequence,
        bias: BiasModel,
    ) -> Result<Self> {
        let rows: Vec<Vec<f64>> = seq
            .embedding_rows(e)
            .into_iter()
            .map(|r| {
                r.map(<[f64]>::to_vec)
                    .ok_or_else(|| Error::InvalidConfig("pause tokens have no embedding".into()))
            })
            .collect::<Result<_>>()?;
        let positions = seq.tokens().iter().map(|t| t.position).collect();
        Self::new(e.dim(), rows.clone(), rows, positions, bias)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Pre-softmax logits of query `i` against every key.
    pub fn logits(&self, i: usize) -> Vec<f64> {
        let scale = (self.dim as f64).sqrt();
        let q = &self.queries[i];
        let pi = self.positions[i];
        self.keys
            .iter()
            .zip(&self.positions)
            .map(|(k, &pj)| {
                let content: f64 = q.iter().zip(k).map(|(a, b)| a * b).sum();
                (content + self.bias.bias(pi.abs_diff(pj))) / scale
            })
            .collect()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|x| x / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Attention weights of query `i` over all keys.
pub fn attention_row(inst: &AttentionInstance, i: usize) -> Vec<f64> {
    softmax(&inst.logits(i))
}

/// Rotates each coordinate pair `(x[2k], x[2k+1])` by `position * base^(-2k/d)`.
pub fn rope_rotate(x: &[f64], position: usize, base: f64) -> Result<Vec<f64>> {
    let d = x.len();
    if !d.is_multiple_of(2) {
        return Err(Error::OddDimension(d));
    }
    let p = position as f64;
    let mut out = Vec::with_capacity(d);
    for (k, pair) in x.chunks_exact(2).enumerate() {
        let theta = p * base.powf(-2.0 * k as f64 / d as f64);
        let (sin, cos) = theta.sin_cos();
        out.push(pair[0] * cos - pair[1] * sin);
        out.push(pair[0] * sin + pair[1] * cos);
    }
    Ok(out)
}

/// Attention row of query `i` under plain rotary dot-product attention.
pub fn rope_attention_row(
    rows: &[&[f64]],
    positions: &[usize],
    i: usize,
    base: f64,
) -> Result<Vec<f64>> {
    let rotated: Vec<Vec<f64>> = rows
        .iter()
        .zip(positions)
        .map(|(r, &p)| rope_rotate(r, p, base))
        .collect::<Result<_>>()?;
    let d = rows.first().map_or(1, |r| r.len()) as f64;
    let q = &rotated[i];
    let logits: Vec<f64> = rotated
        .iter()
        .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / d.sqrt())
        .collect();
    Ok(softmax(&logits))
}

/// Outcome of comparing an anchored pair's attention before and after reordering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub a_original: f64,
    pub a_attanchor: f64,
    pub ratio: f64,
    pub delta_p: f64,
    pub epsilon: f64,
    pub bound: f64,
    pub satisfied: bool,
    /// `S'/S - 1`: relative growth of the softmax denominator. The bound
    /// holds exactly when this is at most `epsilon / (1 - epsilon)`.
    pub denominator_change: f64,
    pub distance_before: usize,
    pub distance_after: usize,
}

/// Attention from text `n` to its matched image `m`, before and after the
/// text-into-image reordering at `threshold`, checked against
/// `exp(delta_p / sqrt(d)) * (1 - 1/(M+N))`.
///
/// Before: the query is `T_n` in the plain concatenation. After: the query is
/// the copy of `T_n` placed next to `I_m`. Attention is full (non-causal).
pub fn verify_theorem1(
    e: &EmbeddingSet,
    pair: (usize, usize),
    threshold: f64,
    bias: BiasModel,
) -> Result<Theorem1Report> {
    let (n, m) = pair;
    if n >= e.n() {
        return Err(Error::IndexOutOfRange {
            what: "text",
            index: n,
            len: e.n(),
        });
    }
    let sim = build_similarity_matrix(e);
    let (best, score) = argmax_match(sim.row(n));
    if best != m {
        return Err(Error::NotBestMatch { n, m, best });
    }
    let plan = plan_text_into_image(&sim, threshold)?;
    if score < threshold {
        return Err(Error::BelowThreshold { score, threshold });
    }
    let baseline = MultimodalSequence::baseline(e.m(), e.n());
    let reordered = insert_text_into_image(e, &plan)?;

    let before = AttentionInstance::from_sequence(e, &baseline, bias)?;
    let after = AttentionInstance::from_sequence(e, &reordered, bias)?;
    let query_before = e.m() + n;
    let query_after = reordered
        .position_of(TokenKind::AnchorText, n)
        .expect("planned copy is present");
    let image_after = reordered
        .position_of(TokenKind::Image, m)
        .expect("image is present");

    let logits_before = before.logits(query_before);
    let logits_after = after.logits(query_after);
    let a_original = softmax(&logits_before)[m];
    let a_attanchor = softmax(&logits_after)[image_after];

    let distance_before = query_before - m;
    let distance_after = query_after.abs_diff(image_after);
    let delta_p = bias.bias(distance_after) - bias.bias(distance_before);
    let epsilon = 1.0 / (e.m() + e.n()) as f64;
    let bound = (delta_p / (e.dim() as f64).sqrt()).exp() * (1.0 - epsilon);
    let ratio = a_attanchor / a_original;
    let denominator_change = (log_sum_exp(&logits_after) - log_sum_exp(&logits_before)).exp_m1();
    Ok(Theorem1Report {
        a_original,
        a_attanchor,
        ratio,
        delta_p,
        epsilon,
        bound,
        satisfied: ratio >= bound - 1e-9,
        denominator_change,
        distance_before,
        distance_after,
    })
}

/// One randomized instance of the attention-ratio sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Trial {
    pub trial_seed: u64,
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub family: BiasFamily,
    pub text_index: usize,
    pub image_index: usize,
    pub report: Theorem1Report,
}

/// Sampling ranges for [`theorem1_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Sweep {
    pub trials: usize,
    pub base_seed: u64,
    pub m_range: (usize, usize),
    pub n_range: (usize, usize),
    pub dims: Vec<usize>,
    pub alpha_range: (f64, f64),
    pub threshold: f64,
}

impl Default for Theorem1Sweep {
    fn default() -> Self {
        Self {
            trials: 1000,
            base_seed: 0,
            m_range: (8, 64),
            n_range: (2, 16),
            dims: vec![8, 16, 32],
            alpha_range: (0.01, 1.0),
            threshold: 0.0,
        }
    }
}

/// Runs one trial; trial `i` uses seed `base_seed + i` and alternates families.
pub fn theorem1_trial(cfg: &Theorem1Sweep, index: usize) -> Result<Theorem1Trial> {
    let trial_seed = cfg.base_seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let family = if index.is_multiple_of(2) {
        BiasFamily::Linear
    } else {
        BiasFamily::Logarithmic
    };
    loop {
        let m = rng.random_range(cfg.m_range.0..=cfg.m_range.1);
        let n = rng.random_range(cfg.n_range.0..=cfg.n_range.1);
        let d = cfg.dims[rng.random_range(0..cfg.dims.len())];
        let alpha = rng.random_range(cfg.alpha_range.0..=cfg.alpha_range.1);
        let e = crate::synth::uniform_set(&mut rng, m, n, d)?;
        let sim = build_similarity_matrix(&e);
        let eligible: Vec<usize> = (0..n)
            .filter(|&t| argmax_match(sim.row(t)).1 >= cfg.threshold)
            .collect();
        if eligible.is_empty() {
            continue;
        }
        let text_index = eligible[rng.random_range(0..eligible.len())];
        let image_index = argmax_match(sim.row(text_index)).0;
        let bias = BiasModel::new(family, alpha)?;
        let report = verify_theorem1(&e, (text_index, image_index), cfg.threshold, bias)?;
        return Ok(Theorem1Trial {
            trial_seed,
            m,
            n,
            d,
            alpha,
            family,
            text_index,
            image_index,
            report,
        });
    }
}

pub fn theorem1_sweep(cfg: &Theorem1Sweep) -> Result<Vec<Theorem1Trial>> {
    use rayon::prelude::*;
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| theorem1_trial(cfg, i))
        .collect()
}

pub fn theorem1_csv(trials: &[Theorem1Trial]) -> String {
    csv(
        "trial_seed,M,N,d,alpha,family,delta_p,epsilon,ratio,bound,satisfied",
        trials.iter().map(|t| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                t.trial_seed,
                t.m,
                t.n,
                t.d,
                fmt_f64(t.alpha),
                t.family,
                fmt_f64(t.report.delta_p),
                fmt_f64(t.report.epsilon),
                fmt_f64(t.report.ratio),
                fmt_f64(t.report.bound),
                t.report.satisfied
            )
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RopePairRow {
    pub text_index: usize,
    pub image_index: usize,
    pub distance_before: usize,
    pub distance_after: usize,
    pub attention_before: f64,
    pub attention_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RopeDemoReport {
    pub threshold: f64,
    pub base: f64,
    pub pairs: Vec<RopePairRow>,
}

/// Attention from each anchored text (before) or its copy (after) to the
/// matched image under rotary attention. Observational only.
pub fn rope_attention_demo(e: &EmbeddingSet, threshold: f64, base: f64) -> Result<RopeDemoReport> {
    if !e.dim().is_multiple_of(2) {
        return Err(Error::OddDimension(e.dim()));
    }
    let sim = build_similarity_matrix(e);
    let plan = plan_text_into_image(&sim, threshold)?;
    let baseline = MultimodalSequence::baseline(e.m(), e.n());
    let reordered = insert_text_into_image(e, &plan)?;
    let rows = |seq: &MultimodalSequence| -> Vec<&[f64]> {
        seq.embedding_rows(e)
            .into_iter()
            .map(|r| r.expect("no pauses"))
            .collect()
    };
    let positions = |seq: &MultimodalSequence| -> Vec<usize> {
        seq.tokens().iter().map(|t| t.position).collect()
    };
    let (rows_before, pos_before) = (rows(&baseline), positions(&baseline));
    let (rows_after, pos_after) = (rows(&reordered), positions(&reordered));

    let mut pairs = Vec::with_capacity(plan.len());
    for entry in &plan.entries {
        let (n, m) = (entry.source, entry.target);
        let q_before = e.m() + n;
        let q_after = reordered
            .position_of(TokenKind::AnchorText, n)
            .expect("copy");
        let img_after = reordered.position_of(TokenKind::Image, m).expect("image");
        let before = rope_attention_row(&rows_before, &pos_before, q_before, base)?[m];
        let after = rope_attention_row(&rows_after, &pos_after, q_after, base)?[img_after];
        pairs.push(RopePairRow {
            text_index: n,
            image_index: m,
            distance_before: q_before - m,
            distance_after: q_after.abs_diff(img_after),
            attention_before: before,
            attention_after: after,
        });
    }
    Ok(RopeDemoReport {
        threshold,
        base,
        pairs,
    })
}
