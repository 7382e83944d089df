//! Embedding sets, multimodal token sequences and cosine-similarity primitives.
//!
//! Dot products and squared norms are accumulated left to right in `f64`, so
//! the serial and parallel similarity paths produce bit-identical matrices.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows with a Euclidean norm below this are rejected.
pub const MIN_NORM: f64 = 1e-12;

/// Ground-truth cluster ids attached to synthetic embedding sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub image: Vec<usize>,
    pub text: Vec<usize>,
}

impl ClusterLabels {
    /// Number of distinct ids across both modalities (max id + 1).
    pub fn cluster_count(&self) -> usize {
        self.image
            .iter()
            .chain(&self.text)
            .copied()
            .max()
            .map_or(0, |c| c + 1)
    }
}

/// Image and text embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    image: Vec<Vec<f64>>,
    text: Vec<Vec<f64>>,
    text_labels: Option<Vec<String>>,
    clusters: Option<ClusterLabels>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingSetFile {
    dim: usize,
    image: Vec<Vec<f64>>,
    text: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_clusters: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_clusters: Option<Vec<usize>>,
}

fn check_rows(rows: &[Vec<f64>], dim: usize, matrix: &'static str) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::InvalidEmbeddingSet(format!(
                "{matrix} row {i} has {} entries, expected {dim}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidEmbeddingSet(format!(
                "{matrix} row {i} entry {j} is not finite"
            )));
        }
        if squared_norm(row).sqrt() < MIN_NORM {
            return Err(Error::ZeroNormVector { matrix, row: i });
        }
    }
    Ok(())
}

impl EmbeddingSet {
    pub fn new(dim: usize, image: Vec<Vec<f64>>, text: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidEmbeddingSet("dim must be at least 1".into()));
        }
        if image.is_empty() {
            return Err(Error::InvalidEmbeddingSet("no image rows".into()));
        }
        if text.is_empty() {
            return Err(Error::InvalidEmbeddingSet("no text rows".into()));
        }
        check_rows(&image, dim, "image")?;
        check_rows(&text, dim, "text")?;
        Ok(Self {
            dim,
            image,
            text,
            text_labels: None,
            clusters: None,
        })
    }

    pub fn with_text_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.text.len() {
            return Err(Error::InvalidEmbeddingSet(format!(
                "{} text labels for {} text rows",
                labels.len(),
                self.text.len()
            )));
        }
        self.text_labels = Some(labels);
        Ok(self)
    }

    pub fn with_clusters(mut self, clusters: ClusterLabels) -> Result<Self> {
        if clusters.image.len() != self.image.len() || clusters.text.len() != self.text.len() {
            return Err(Error::InvalidEmbeddingSet(format!(
                "cluster labels sized {}x{} for {} images and {} texts",
                clusters.image.len(),
                clusters.text.len(),
                self.image.len(),
                self.text.len()
            )));
        }
        self.clusters = Some(clusters);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Image token count (M).
    pub fn m(&self) -> usize {
        self.image.len()
    }

    /// Text token count (N).
    pub fn n(&self) -> usize {
        self.text.len()
    }

    pub fn image(&self) -> &[Vec<f64>] {
        &self.image
    }

    pub fn text(&self) -> &[Vec<f64>] {
        &self.text
    }

    pub fn text_labels(&self) -> Option<&[String]> {
        self.text_labels.as_deref()
    }

    pub fn clusters(&self) -> Option<&ClusterLabels> {
        self.clusters.as_ref()
    }

    /// Parses the JSON document format and validates every row.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: EmbeddingSetFile = serde_json::from_str(s).map_err(|e| {
            Error::InvalidEmbeddingSet(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        let mut set = Self::new(file.dim, file.image, file.text)?;
        if let Some(labels) = file.text_labels {
            set = set.with_text_labels(labels)?;
        }
        match (file.image_clusters, file.text_clusters) {
            (Some(image), Some(text)) => set = set.with_clusters(ClusterLabels { image, text })?,
            (None, None) => {}
            _ => {
                return Err(Error::InvalidEmbeddingSet(
                    "image_clusters and text_clusters must be given together".into(),
                ))
            }
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidEmbeddingSet(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let file = EmbeddingSetFile {
            dim: self.dim,
            image: self.image.clone(),
            text: self.text.clone(),
            text_labels: self.text_labels.clone(),
            image_clusters: self.clusters.as_ref().map(|c| c.image.clone()),
            text_clusters: self.clusters.as_ref().map(|c| c.text.clone()),
        };
        serde_json::to_string(&file).expect("embedding set serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Image,
    Text,
    AnchorText,
    AnchorImage,
    Pause,
}

impl TokenKind {
    /// True for tokens whose embedding comes from the image matrix.
    pub fn is_image_like(self) -> bool {
        matches!(self, TokenKind::Image | TokenKind::AnchorImage)
    }

    pub fn is_text_like(self) -> bool {
        matches!(self, TokenKind::Text | TokenKind::AnchorText)
    }

    pub fn is_anchor(self) -> bool {
        matches!(self, TokenKind::AnchorText | TokenKind::AnchorImage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub source_index: Option<usize>,
    pub position: usize,
}

impl Token {
    /// Every token, pauses included, takes part in attention.
    pub fn attends(&self) -> bool {
        true
    }

    /// Pause tokens are excluded from the training loss.
    pub fn loss_masked(&self) -> bool {
        self.kind == TokenKind::Pause
    }
}

/// An ordered token list with positions `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultimodalSequence {
    tokens: Vec<Token>,
    m: usize,
    n: usize,
    anchor_count: usize,
    pause_count: usize,
}

impl MultimodalSequence {
    /// Assigns positions in order and checks the structural invariants.
    pub fn from_kinds(
        items: impl IntoIterator<Item = (TokenKind, Option<usize>)>,
        m: usize,
        n: usize,
    ) -> Result<Self> {
        let tokens: Vec<Token> = items
            .into_iter()
            .enumerate()
            .map(|(position, (kind, source_index))| Token {
                kind,
                source_index,
                position,
            })
            .collect();
        Self::from_tokens(tokens, m, n)
    }

    pub fn from_tokens(tokens: Vec<Token>, m: usize, n: usize) -> Result<Self> {
        let bad = |msg: String| Err(Error::MalformedSequence(msg));
        let mut next_image = 0;
        let mut next_text = 0;
        let mut anchor_count = 0;
        let mut pause_count = 0;
        for (i, t) in tokens.iter().enumerate() {
            if t.position != i {
                return bad(format!("token {i} has position {}", t.position));
            }
            match (t.kind, t.source_index) {
                (TokenKind::Pause, None) => pause_count += 1,
                (TokenKind::Pause, Some(_)) => {
                    return bad(format!("pause token {i} carries a source index"))
                }
                (_, None) => return bad(format!("token {i} is missing its source index")),
                (TokenKind::Image, Some(s)) => {
                    if s != next_image {
                        return bad(format!(
                            "image token {i} has source {s}, expected {next_image}"
                        ));
                    }
                    next_image += 1;
                }
                (TokenKind::Text, Some(s)) => {
                    if s != next_text {
                        return bad(format!(
                            "text token {i} has source {s}, expected {next_text}"
                        ));
                    }
                    next_text += 1;
                }
                (TokenKind::AnchorText, Some(s)) => {
                    if s >= n {
                        return bad(format!("anchor token {i} references text {s} of {n}"));
                    }
                    anchor_count += 1;
                }
                (TokenKind::AnchorImage, Some(s)) => {
                    if s >= m {
                        return bad(format!("anchor token {i} references image {s} of {m}"));
                    }
                    anchor_count += 1;
                }
            }
        }
        if next_image != m || next_text != n {
            return bad(format!(
                "found {next_image} images and {next_text} texts, header says {m} and {n}"
            ));
        }
        Ok(Self {
            tokens,
            m,
            n,
            anchor_count,
            pause_count,
        })
    }

    /// Plain concatenation `[I_0..I_{M-1}, T_0..T_{N-1}]`.
    pub fn baseline(m: usize, n: usize) -> Self {
        let items = (0..m)
            .map(|i| (TokenKind::Image, Some(i)))
            .chain((0..n).map(|i| (TokenKind::Text, Some(i))));
        Self::from_kinds(items, m, n).expect("baseline is well formed")
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn anchor_count(&self) -> usize {
        self.anchor_count
    }

    pub fn pause_count(&self) -> usize {
        self.pause_count
    }

    /// The sequence with every anchor and pause token removed, re-positioned.
    pub fn without_insertions(&self) -> Self {
        let items = self
            .tokens
            .iter()
            .filter(|t| matches!(t.kind, TokenKind::Image | TokenKind::Text))
            .map(|t| (t.kind, t.source_index));
        Self::from_kinds(items, self.m, self.n).expect("original tokens stay ordered")
    }

    /// Position of the first token matching `kind` and `source`.
    pub fn position_of(&self, kind: TokenKind, source: usize) -> Option<usize> {
        self.tokens
            .iter()
            .find(|t| t.kind == kind && t.source_index == Some(source))
            .map(|t| t.position)
    }

    /// Embedding row for each token; pause tokens map to `None`.
    pub fn embedding_rows<'a>(&self, e: &'a EmbeddingSet) -> Vec<Option<&'a [f64]>> {
        self.tokens
            .iter()
            .map(|t| match (t.kind, t.source_index) {
                (k, Some(s)) if k.is_image_like() => Some(e.image()[s].as_slice()),
                (k, Some(s)) if k.is_text_like() => Some(e.text()[s].as_slice()),
                _ => None,
            })
            .collect()
    }
}

/// N x M cosine similarities, text rows by image columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::InvalidConfig(
                "similarity matrix must be non-empty".into(),
            ));
        }
        let mut values = Vec::with_capacity(n * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: row.len(),
                });
            }
            if let Some(v) = row
                .iter()
                .find(|v| !(-1.0 - 1e-9..=1.0 + 1e-9).contains(*v))
            {
                return Err(Error::InvalidConfig(format!(
                    "similarity {v} outside [-1, 1]"
                )));
            }
            values.extend(row);
        }
        Ok(Self {
            rows: n,
            cols: m,
            values,
        })
    }

    /// Text count N.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Image count M.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.values[n * self.cols + m]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.cols..(n + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// M x N matrix with image rows.
    pub fn transpose(&self) -> SimilarityMatrix {
        let mut values = Vec::with_capacity(self.values.len());
        for m in 0..self.cols {
            values.extend((0..self.rows).map(|n| self.get(n, m)));
        }
        SimilarityMatrix {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }

    /// Maximum of each row.
    pub fn row_maxima(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|n| argmax_match(self.row(n)).1)
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn squared_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

// sqrt(fl(x*x)) == x in binary floating point, so identical rows give exactly 1.
fn cosine_from_parts(dot: f64, sq_a: f64, sq_b: f64) -> f64 {
    (dot / (sq_a * sq_b).sqrt()).clamp(-1.0, 1.0)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (sa, sb) = (squared_norm(a), squared_norm(b));
    if sa.sqrt() < MIN_NORM {
        return Err(Error::ZeroNormVector {
            matrix: "a",
            row: 0,
        });
    }
    if sb.sqrt() < MIN_NORM {
        return Err(Error::ZeroNormVector {
            matrix: "b",
            row: 0,
        });
    }
    Ok(cosine_from_parts(dot(a, b), sa, sb))
}

fn fill_row(out: &mut [f64], text: &[f64], text_sq: f64, image: &[Vec<f64>], image_sq: &[f64]) {
    for ((slot, img), &isq) in out.iter_mut().zip(image).zip(image_sq) {
        *slot = cosine_from_parts(dot(text, img), text_sq, isq);
    }
}

/// Builds the N x M similarity matrix on the current thread.
pub fn build_similarity_matrix(e: &EmbeddingSet) -> SimilarityMatrix {
    let image_sq: Vec<f64> = e.image.iter().map(|r| squared_norm(r)).collect();
    let (n, m) = (e.n(), e.m());
    let mut values = vec![0.0; n * m];
    for (out, text) in values.chunks_mut(m).zip(&e.text) {
        fill_row(out, text, squared_norm(text), &e.image, &image_sq);
    }
    SimilarityMatrix {
        rows: n,
        cols: m,
        values,
    }
}

/// Same result as [`build_similarity_matrix`], one text row per rayon task.
pub fn build_similarity_matrix_parallel(e: &EmbeddingSet) -> SimilarityMatrix {
    let image_sq: Vec<f64> = e.image.par_iter().map(|r| squared_norm(r)).collect();
    let (n, m) = (e.n(), e.m());
    let mut values = vec![0.0; n * m];
    values
        .par_chunks_mut(m)
        .zip(e.text.par_iter())
        .for_each(|(out, text)| fill_row(out, text, squared_norm(text), &e.image, &image_sq));
    SimilarityMatrix {
        rows: n,
        cols: m,
        values,
    }
}

/// Maximum of `row` and the lowest index attaining it.
///
/// Panics on an empty row.
pub fn argmax_match(row: &[f64]) -> (usize, f64) {
    assert!(!row.is_empty(), "argmax over an empty row");
    let mut best = (0, row[0]);
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}
