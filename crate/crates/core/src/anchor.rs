//! Anchor planning and sequence reordering in both directions.
//!
//! Planning and materialization are separate: a plan lists every copy to
//! insert, computed against the original indices, and the sequence is then
//! built in a single pass. Earlier insertions therefore never shift later
//! targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokens::{
    argmax_match, EmbeddingSet, MultimodalSequence, SimilarityMatrix, Token, TokenKind,
};

/// Label value written for pause tokens, matching the usual ignore index.
pub const IGNORE_LABEL: i64 = -100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Text copies inserted after their best image match; text block unchanged.
    TextIntoImage,
    /// Image copies inserted after their best text match; image block prepended.
    ImageIntoText,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::TextIntoImage => "text-into-image",
            Mode::ImageIntoText => "image-into-text",
        })
    }
}

/// One planned copy: `source` is copied and placed right after `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorEntry {
    pub source: usize,
    pub target: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPlan {
    pub mode: Mode,
    pub threshold: f64,
    /// Sorted by `source`, at most one per source.
    pub entries: Vec<AnchorEntry>,
}

impl AnchorPlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::ThresholdOutOfRange(threshold))
    }
}

fn plan_rows(sim: &SimilarityMatrix, threshold: f64, mode: Mode) -> Result<AnchorPlan> {
    check_threshold(threshold)?;
    let entries = (0..sim.rows())
        .filter_map(|source| {
            let (target, score) = argmax_match(sim.row(source));
            (score >= threshold).then_some(AnchorEntry {
                source,
                target,
                score,
            })
        })
        .collect();
    Ok(AnchorPlan {
        mode,
        threshold,
        entries,
    })
}

/// For each text row, the best image match if it reaches `threshold`.
pub fn plan_text_into_image(sim: &SimilarityMatrix, threshold: f64) -> Result<AnchorPlan> {
    plan_rows(sim, threshold, Mode::TextIntoImage)
}

/// For each image, the best text match (lowest text index on ties) if it
/// reaches `threshold`. `sim` is the usual N x M text-by-image matrix.
pub fn plan_image_into_text(sim: &SimilarityMatrix, threshold: f64) -> Result<AnchorPlan> {
    plan_rows(&sim.transpose(), threshold, Mode::ImageIntoText)
}

fn copies_by_target(
    plan: &AnchorPlan,
    n_targets: usize,
    n_sources: usize,
) -> Result<Vec<Vec<usize>>> {
    let (source_what, target_what) = match plan.mode {
        Mode::TextIntoImage => ("text", "image"),
        Mode::ImageIntoText => ("image", "text"),
    };
    let mut by_target = vec![Vec::new(); n_targets];
    for entry in &plan.entries {
        if entry.source >= n_sources {
            return Err(Error::IndexOutOfRange {
                what: source_what,
                index: entry.source,
                len: n_sources,
            });
        }
        if entry.target >= n_targets {
            return Err(Error::IndexOutOfRange {
                what: target_what,
                index: entry.target,
                len: n_targets,
            });
        }
        by_target[entry.target].push(entry.source);
    }
    for copies in &mut by_target {
        copies.sort_unstable();
    }
    Ok(by_target)
}

/// Images with each planned text copy right after its target, then the
/// unchanged text block.
pub fn insert_text_into_image(e: &EmbeddingSet, plan: &AnchorPlan) -> Result<MultimodalSequence> {
    if plan.mode != Mode::TextIntoImage {
        return Err(Error::InvalidConfig(format!("plan is {}", plan.mode)));
    }
    let (m, n) = (e.m(), e.n());
    let by_target = copies_by_target(plan, m, n)?;
    let mut items = Vec::with_capacity(m + n + plan.len());
    for (image, copies) in by_target.iter().enumerate() {
        items.push((TokenKind::Image, Some(image)));
        items.extend(copies.iter().map(|&t| (TokenKind::AnchorText, Some(t))));
    }
    items.extend((0..n).map(|t| (TokenKind::Text, Some(t))));
    MultimodalSequence::from_kinds(items, m, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageIntoTextConfig {
    pub threshold: f64,
    pub pause_count: usize,
    pub think_mode: bool,
}

impl ImageIntoTextConfig {
    pub fn new(threshold: f64, pause_count: usize, think_mode: bool) -> Result<Self> {
        let cfg = Self {
            threshold,
            pause_count,
            think_mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_threshold(self.threshold)?;
        if !self.think_mode && self.pause_count > 0 {
            return Err(Error::InvalidConfig(
                "pause_count must be 0 when think mode is off".into(),
            ));
        }
        Ok(())
    }
}

/// Image block, then the text block with each qualifying image copy right
/// after its best text match, then `K` pause tokens in think mode.
pub fn insert_image_into_text(
    e: &EmbeddingSet,
    sim: &SimilarityMatrix,
    cfg: &ImageIntoTextConfig,
) -> Result<MultimodalSequence> {
    cfg.validate()?;
    let (m, n) = (e.m(), e.n());
    if sim.rows() != n || sim.cols() != m {
        return Err(Error::DimensionMismatch {
            expected: n * m,
            actual: sim.rows() * sim.cols(),
        });
    }
    let plan = plan_image_into_text(sim, cfg.threshold)?;
    insert_image_plan(e, &plan, cfg)
}

/// Materializes an image-into-text plan.
pub fn insert_image_plan(
    e: &EmbeddingSet,
    plan: &AnchorPlan,
    cfg: &ImageIntoTextConfig,
) -> Result<MultimodalSequence> {
    cfg.validate()?;
    if plan.mode != Mode::ImageIntoText {
        return Err(Error::InvalidConfig(format!("plan is {}", plan.mode)));
    }
    let (m, n) = (e.m(), e.n());
    let by_target = copies_by_target(plan, n, m)?;
    let pauses = if cfg.think_mode { cfg.pause_count } else { 0 };
    let mut items = Vec::with_capacity(m + n + plan.len() + pauses);
    items.extend((0..m).map(|i| (TokenKind::Image, Some(i))));
    for (text, copies) in by_target.iter().enumerate() {
        items.push((TokenKind::Text, Some(text)));
        items.extend(copies.iter().map(|&i| (TokenKind::AnchorImage, Some(i))));
    }
    items.extend(std::iter::repeat_n((TokenKind::Pause, None), pauses));
    MultimodalSequence::from_kinds(items, m, n)
}

/// Share of text tokens that received an anchor copy.
pub fn anchor_fraction(plan: &AnchorPlan, n_text: usize) -> f64 {
    assert!(n_text >= 1, "anchor fraction needs at least one text token");
    plan.len() as f64 / n_text as f64
}

/// Largest per-row maximum whose anchor fraction still reaches `target_fraction`.
pub fn calibrate_threshold(sim: &SimilarityMatrix, target_fraction: f64) -> Result<f64> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target fraction {target_fraction} outside (0, 1]"
        )));
    }
    let mut maxima = sim.row_maxima();
    maxima.sort_by(|a, b| b.total_cmp(a));
    let n = maxima.len() as f64;
    // maxima[i] admits every row whose maximum is >= it, i.e. at least i+1 rows.
    for (i, &tau) in maxima.iter().enumerate() {
        if maxima.get(i + 1) == Some(&tau) {
            continue;
        }
        if (i + 1) as f64 / n >= target_fraction {
            return Ok(tau);
        }
    }
    Ok(*maxima.last().expect("similarity matrix has rows"))
}

/// Builds the reordered sequence for either mode.
pub fn reorder(
    e: &EmbeddingSet,
    sim: &SimilarityMatrix,
    mode: Mode,
    cfg: &ImageIntoTextConfig,
) -> Result<(AnchorPlan, MultimodalSequence)> {
    match mode {
        Mode::TextIntoImage => {
            let plan = plan_text_into_image(sim, cfg.threshold)?;
            let seq = insert_text_into_image(e, &plan)?;
            Ok((plan, seq))
        }
        Mode::ImageIntoText => {
            let plan = plan_image_into_text(sim, cfg.threshold)?;
            let seq = insert_image_plan(e, &plan, cfg)?;
            Ok((plan, seq))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceHeader {
    pub m: usize,
    pub n: usize,
    pub anchors: usize,
    pub pauses: usize,
    pub threshold: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRecord {
    pub kind: TokenKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_index: Option<usize>,
    pub position: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_masked: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<i64>,
}

/// Serialized form of a reordered sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDocument {
    pub header: SequenceHeader,
    pub tokens: Vec<TokenRecord>,
}

impl SequenceDocument {
    pub fn new(seq: &MultimodalSequence, threshold: f64, mode: Mode) -> Self {
        let tokens = seq
            .tokens()
            .iter()
            .map(|t| TokenRecord {
                kind: t.kind,
                source_index: t.source_index,
                position: t.position,
                label_masked: t.loss_masked().then_some(true),
                label: t.loss_masked().then_some(IGNORE_LABEL),
            })
            .collect();
        Self {
            header: SequenceHeader {
                m: seq.m(),
                n: seq.n(),
                anchors: seq.anchor_count(),
                pauses: seq.pause_count(),
                threshold,
                mode,
            },
            tokens,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("sequence document serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| {
            Error::MalformedSequence(format!("line {} column {}: {e}", e.line(), e.column()))
        })
    }

    /// Rebuilds the sequence and checks it against the header.
    pub fn to_sequence(&self) -> Result<MultimodalSequence> {
        for rec in &self.tokens {
            let masked = rec.label_masked.unwrap_or(false);
            if masked != (rec.kind == TokenKind::Pause) {
                return Err(Error::MalformedSequence(format!(
                    "token {} has label_masked={masked}",
                    rec.position
                )));
            }
        }
        let tokens = self
            .tokens
            .iter()
            .map(|r| Token {
                kind: r.kind,
                source_index: r.source_index,
                position: r.position,
            })
            .collect();
        let seq = MultimodalSequence::from_tokens(tokens, self.header.m, self.header.n)?;
        if seq.anchor_count() != self.header.anchors || seq.pause_count() != self.header.pauses {
            return Err(Error::MalformedSequence(format!(
                "header counts {} anchors and {} pauses, tokens have {} and {}",
                self.header.anchors,
                self.header.pauses,
                seq.anchor_count(),
                seq.pause_count()
            )));
        }
        Ok(seq)
    }
}
