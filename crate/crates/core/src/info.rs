//! Plug-in mutual information over discrete joints, and the windowed
//! co-occurrence experiment that compares local and global MI before and
//! after text-into-image reordering.
//!
//! Tokens are reduced to their ground-truth cluster ids. An image-like and a
//! text-like token co-occur when their positions differ by at most the
//! window; the global joint uses every image/text pair in the sequence.

use serde::Serialize;

use crate::anchor::{insert_text_into_image, plan_text_into_image};
use crate::error::{Error, Result};
use crate::tokens::{build_similarity_matrix, ClusterLabels, EmbeddingSet, MultimodalSequence};

/// Row-major |X| x |Y| probabilities summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    rows: usize,
    cols: usize,
    p: Vec<f64>,
}

fn entropy_bits(probs: impl IntoIterator<Item = f64>) -> f64 {
    -probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>()
}

impl JointDistribution {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(Error::NotNormalized(0.0));
        }
        if let Some(row) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch {
                expected: c,
                actual: row.len(),
            });
        }
        let p: Vec<f64> = rows.into_iter().flatten().collect();
        if p.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "negative or non-finite probability".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self {
            rows: r,
            cols: c,
            p,
        })
    }

    /// Normalizes a count table; `None` when it is empty.
    pub fn from_counts(rows: usize, cols: usize, counts: &[u64]) -> Option<Self> {
        let total: u64 = counts.iter().sum();
        (total > 0).then(|| Self {
            rows,
            cols,
            p: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.cols + y]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|x| self.p[x * self.cols..(x + 1) * self.cols].iter().sum())
            .collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|y| (0..self.rows).map(|x| self.get(x, y)).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut p = Vec::with_capacity(self.p.len());
        for y in 0..self.cols {
            p.extend((0..self.rows).map(|x| self.get(x, y)));
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            p,
        }
    }

    pub fn entropy_x(&self) -> f64 {
        entropy_bits(self.marginal_x())
    }

    pub fn entropy_y(&self) -> f64 {
        entropy_bits(self.marginal_y())
    }
}

/// `sum p(x,y) log2(p(x,y) / (p(x) p(y)))` with `0 log 0 = 0`, in bits.
pub fn mutual_information(j: &JointDistribution) -> f64 {
    let px = j.marginal_x();
    let py = j.marginal_y();
    let mut mi = 0.0;
    for (x, &pxv) in px.iter().enumerate() {
        for (y, &pyv) in py.iter().enumerate() {
            let pxy = j.get(x, y);
            if pxy > 0.0 {
                mi += pxy * (pxy / (pxv * pyv)).log2();
            }
        }
    }
    mi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalityWindow(usize);

impl LocalityWindow {
    pub const DEFAULT: LocalityWindow = LocalityWindow(2);

    pub fn new(w: usize) -> Result<Self> {
        if w == 0 {
            return Err(Error::InvalidConfig("locality window must be >= 1".into()));
        }
        Ok(Self(w))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// Image-cluster by text-cluster co-occurrence counts.
pub fn cooccurrence_counts(
    seq: &MultimodalSequence,
    labels: &ClusterLabels,
    window: Option<usize>,
) -> (usize, Vec<u64>) {
    let k = labels.cluster_count();
    let mut counts = vec![0u64; k * k];
    let tokens = seq.tokens();
    let reach = window.unwrap_or(tokens.len());
    for (i, a) in tokens.iter().enumerate() {
        let hi = (i + reach).min(tokens.len() - 1);
        for b in &tokens[i + 1..=hi] {
            let (img, txt) = match (a.kind.is_image_like(), b.kind.is_image_like()) {
                (true, false) if b.kind.is_text_like() => (a, b),
                (false, true) if a.kind.is_text_like() => (b, a),
                _ => continue,
            };
            let x = labels.image[img.source_index.expect("image source")];
            let y = labels.text[txt.source_index.expect("text source")];
            counts[x * k + y] += 1;
        }
    }
    (k, counts)
}

fn mi_of(seq: &MultimodalSequence, labels: &ClusterLabels, window: Option<usize>) -> f64 {
    let (k, counts) = cooccurrence_counts(seq, labels, window);
    JointDistribution::from_counts(k, k, &counts).map_or(0.0, |j| mutual_information(&j))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalMiReport {
    pub mi_local_before: f64,
    pub mi_local_after: f64,
    pub mi_global_before: f64,
    pub mi_global_after: f64,
    pub anchor_count: usize,
    /// Entropy in bits of the inserted anchors' cluster ids.
    pub anchor_entropy: f64,
    pub window: usize,
    pub cluster_count: usize,
}

/// Windowed and global MI of the plain concatenation versus the
/// text-into-image reordering at `threshold`. Needs cluster labels.
pub fn local_mi_experiment(
    e: &EmbeddingSet,
    threshold: f64,
    window: LocalityWindow,
) -> Result<LocalMiReport> {
    let labels = e.clusters().ok_or(Error::MissingClusterLabels)?;
    let sim = build_similarity_matrix(e);
    let plan = plan_text_into_image(&sim, threshold)?;
    let before = MultimodalSequence::baseline(e.m(), e.n());
    let after = insert_text_into_image(e, &plan)?;
    // Threshold 1.0 means "reorder nothing" and is a valid comparison.
    if plan.is_empty() && threshold < 1.0 {
        return Err(Error::NoAnchorsSelected(threshold));
    }

    let k = labels.cluster_count();
    let mut anchor_counts = vec![0usize; k];
    for entry in &plan.entries {
        anchor_counts[labels.text[entry.source]] += 1;
    }
    let anchor_entropy = if plan.is_empty() {
        0.0
    } else {
        entropy_bits(anchor_counts.iter().map(|&c| c as f64 / plan.len() as f64))
    };

    let w = Some(window.get());
    Ok(LocalMiReport {
        mi_local_before: mi_of(&before, labels, w),
        mi_local_after: mi_of(&after, labels, w),
        mi_global_before: mi_of(&before, labels, None),
        mi_global_after: mi_of(&after, labels, None),
        anchor_count: plan.len(),
        anchor_entropy,
        window: window.get(),
        cluster_count: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let px = [0.2, 0.8];
        let py = [0.5, 0.3, 0.2];
        let prod = JointDistribution::new(
            px.iter()
                .map(|a| py.iter().map(|b| a * b).collect())
                .collect(),
        )
        .unwrap();
        assert!(mutual_information(&prod).abs() < 1e-15);

        let diag = JointDistribution::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((mutual_information(&diag) - 1.0).abs() < 1e-12);

        assert!(matches!(
            JointDistribution::new(vec![vec![0.5, 0.6]]),
            Err(Error::NotNormalized(_))
        ));
        assert!(JointDistribution::new(vec![vec![1.5, -0.5]]).is_err());
    }

    #[test]
    fn threshold_one_is_unchanged() {
        let e = synth::clustered(&synth::ClusteredSpec::new(64, 20, 16, 4), 1).unwrap();
        let r = local_mi_experiment(&e, 1.0, LocalityWindow::DEFAULT).unwrap();
        assert_eq!(r.anchor_count, 0);
        assert_eq!(r.mi_local_before, r.mi_local_after);
        assert_eq!(r.mi_global_before, r.mi_global_after);
    }

    #[test]
    fn missing_labels_and_empty_plans() {
        let mut rng = synth::rng(0);
        let e = synth::uniform_set(&mut rng, 4, 2, 3).unwrap();
        assert_eq!(
            local_mi_experiment(&e, 0.5, LocalityWindow::DEFAULT),
            Err(Error::MissingClusterLabels)
        );
        let e = synth::clustered(&synth::ClusteredSpec::new(16, 4, 8, 2), 0).unwrap();
        assert!(matches!(
            local_mi_experiment(&e, 0.999_999, LocalityWindow::DEFAULT),
            Err(Error::NoAnchorsSelected(_))
        ));
        assert!(LocalityWindow::new(0).is_err());
    }

    #[test]
    fn window_counts_by_hand() {
        // [I0 I1 A(T0) T0 T1]; image ids (0, 1), text ids (1, 0).
        let e = EmbeddingSet::new(
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.1, 1.0], vec![1.0, -1.0]],
        )
        .unwrap()
        .with_clusters(ClusterLabels {
            image: vec![0, 1],
            text: vec![1, 0],
        })
        .unwrap();
        let sim = build_similarity_matrix(&e);
        let plan = plan_text_into_image(&sim, 0.9).unwrap();
        let seq = insert_text_into_image(&e, &plan).unwrap();
        let (k, counts) = cooccurrence_counts(&seq, e.clusters().unwrap(), Some(1));
        assert_eq!(k, 2);
        // I1-A(T0): (1,1).  No other image/text pair at distance 1.
        assert_eq!(counts, vec![0, 0, 0, 1]);
        let (_, counts) = cooccurrence_counts(&seq, e.clusters().unwrap(), Some(2));
        // Adds I0-A(T0) (0,1) and I1-T0 (1,1).
        assert_eq!(counts, vec![0, 1, 0, 2]);
    }

    fn joint_strategy() -> impl Strategy<Value = JointDistribution> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            prop::collection::vec(0u32..20, r * c).prop_filter_map("empty", move |w| {
                let counts: Vec<u64> = w.into_iter().map(u64::from).collect();
                JointDistribution::from_counts(r, c, &counts)
            })
        })
    }

    proptest! {
        #[test]
        fn mi_bounds_and_symmetry(j in joint_strategy()) {
            let mi = mutual_information(&j);
            prop_assert!(mi >= -1e-12);
            prop_assert!(mi <= j.entropy_x().min(j.entropy_y()) + 1e-12);
            prop_assert!((mi - mutual_information(&j.transpose())).abs() < 1e-12);
        }
    }
}
