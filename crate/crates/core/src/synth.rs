//! Seeded synthetic embedding sets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tokens::{ClusterLabels, EmbeddingSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_rows(rng: &mut impl Rng, rows: usize, d: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn gaussian(rng: &mut impl Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Entries drawn uniformly from `[-1, 1)`.
pub fn uniform_set(rng: &mut impl Rng, m: usize, n: usize, d: usize) -> Result<EmbeddingSet> {
    EmbeddingSet::new(d, uniform_rows(rng, m, d), uniform_rows(rng, n, d))
}

/// Shape of the clustered generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteredSpec {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub clusters: usize,
    /// Share of text tokens that describe a cluster; the rest are filler.
    pub content_share: f64,
    pub image_noise: f64,
    pub text_noise: f64,
}

impl ClusteredSpec {
    pub fn new(m: usize, n: usize, d: usize, clusters: usize) -> Self {
        Self {
            m,
            n,
            d,
            clusters,
            content_share: 0.2,
            image_noise: 0.6,
            text_noise: 0.4,
        }
    }

    /// Parses `M,N,d,clusters`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidConfig(format!("generate spec `{s}`: {e}")))?;
        match parts[..] {
            [m, n, d, c] => Ok(Self::new(m, n, d, c)),
            _ => Err(Error::InvalidConfig(format!(
                "generate spec `{s}` must be M,N,d,clusters"
            ))),
        }
    }
}

/// Images come in `clusters` contiguous blocks around random unit centroids.
/// A share of the text tokens sits near one centroid each (round-robin over
/// clusters, scattered through the prompt); the rest are unrelated filler
/// labelled with the extra id `clusters`.
pub fn clustered(spec: &ClusteredSpec, seed: u64) -> Result<EmbeddingSet> {
    let ClusteredSpec {
        m, n, d, clusters, ..
    } = *spec;
    if clusters == 0 || clusters > m || d < 2 {
        return Err(Error::InvalidConfig(format!(
            "clustered generator needs 1 <= clusters <= M and d >= 2 (got {clusters}, M={m}, d={d})"
        )));
    }
    let mut rng = rng(seed);
    let centroids: Vec<Vec<f64>> = (0..clusters)
        .map(|_| unit(gaussian(&mut rng, d, 1.0)))
        .collect();
    let per_coord = |noise: f64| noise / (d as f64).sqrt();

    let image_clusters: Vec<usize> = (0..m).map(|i| i * clusters / m).collect();
    let image = image_clusters
        .iter()
        .map(|&c| {
            add(
                &centroids[c],
                &gaussian(&mut rng, d, per_coord(spec.image_noise)),
            )
        })
        .collect();

    let content = ((spec.content_share * n as f64).round() as usize).clamp(clusters.min(n), n);
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut rng);
    let mut text_clusters = vec![clusters; n];
    for (k, &slot) in slots[..content].iter().enumerate() {
        text_clusters[slot] = k % clusters;
    }
    let text = text_clusters
        .iter()
        .map(|&c| {
            if c < clusters {
                add(
                    &centroids[c],
                    &gaussian(&mut rng, d, per_coord(spec.text_noise)),
                )
            } else {
                gaussian(&mut rng, d, per_coord(1.0))
            }
        })
        .collect();

    EmbeddingSet::new(d, image, text)?.with_clusters(ClusterLabels {
        image: image_clusters,
        text: text_clusters,
    })
}

/// Every text-image cosine equals `level`: each token owns a private axis
/// and all share one common axis. The width is padded to an even number.
pub fn uniformly_low(m: usize, n: usize, level: f64) -> Result<EmbeddingSet> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidConfig(format!(
            "similarity level {level} outside [0, 1)"
        )));
    }
    let common = m + n;
    let d = (common + 2) & !1;
    let shared = (level / (1.0 - level)).sqrt();
    let row = |axis: usize| {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        v[common] = shared;
        v
    };
    EmbeddingSet::new(d, (0..m).map(row).collect(), (m..m + n).map(row).collect())
}

/// Cosine finds the right image, but cluster ids carry no relation to it.
///
/// Image ids are striped (`i mod clusters`) and independent of the random
/// image embeddings. Each text is a noisy copy of one interior image, with
/// targets spaced so no two copies share a locality window, and carries a
/// random id.
pub fn misleading(
    m: usize,
    n: usize,
    d: usize,
    clusters: usize,
    window: usize,
    seed: u64,
) -> Result<EmbeddingSet> {
    let spacing = 2 * window + 1;
    let first = window;
    let last = m.saturating_sub(window + 1);
    if clusters != 2 * window || last < first || (last - first) / spacing + 1 < n {
        return Err(Error::InvalidConfig(format!(
            "misleading generator needs clusters == 2*window and room for {n} spaced targets in {m} images"
        )));
    }
    let mut rng = rng(seed);
    let image = uniform_rows(&mut rng, m, d);
    let mut starts: Vec<usize> = (0..=(last - first) / spacing)
        .map(|k| first + k * spacing)
        .collect();
    starts.shuffle(&mut rng);
    let text = starts[..n]
        .iter()
        .map(|&t| add(&image[t], &gaussian(&mut rng, d, 0.02)))
        .collect();
    let labels = ClusterLabels {
        image: (0..m).map(|i| i % clusters).collect(),
        text: (0..n).map(|_| rng.random_range(0..clusters)).collect(),
    };
    EmbeddingSet::new(d, image, text)?.with_clusters(labels)
}

/// Text 0 is already adjacent to its match (the last image), every other
/// text-image cosine is `level`, and every embedding is tiny so content
/// barely moves the attention logits.
pub fn already_calibrated(m: usize, n: usize, level: f64, seed: u64) -> Result<EmbeddingSet> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidConfig(
            "already-calibrated needs M, N >= 1".into(),
        ));
    }
    let base = uniformly_low(m, n, level)?;
    let d = base.dim();
    let mut rng = rng(seed);
    let scale = 1e-3;
    let mut image = base.image().to_vec();
    let mut text = base.text().to_vec();
    text[0] = add(&image[m - 1], &gaussian(&mut rng, d, 0.01));
    for row in image.iter_mut().chain(text.iter_mut()) {
        row.iter_mut().for_each(|x| *x *= scale);
    }
    EmbeddingSet::new(d, image, text)
}
