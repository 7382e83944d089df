//! Precision/recall of anchor selection, exact F1-optimal threshold search,
//! and the two-Gaussian analytic model of similarity scores.
//!
//! A pair is selected at threshold `tau` when its score is `>= tau`, the same
//! gate the planners use. With nothing selected, precision is taken as 1.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::anchor::{anchor_fraction, check_threshold, plan_text_into_image};
use crate::error::{Error, Result};
use crate::report::{csv, fmt_f64};
use crate::tokens::{build_similarity_matrix, EmbeddingSet};

/// Thresholds swept by default, from no reordering down to 0.08.
pub const DEFAULT_SWEEP: [f64; 6] = [1.0, 0.16, 0.14, 0.12, 0.10, 0.08];

/// Grid step of the analytic oracle's threshold scan.
pub const ORACLE_STEP: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabeledPair {
    pub text: usize,
    pub image: usize,
    pub is_true: bool,
    pub score: f64,
}

/// Candidate text-image pairs with ground truth and cosine scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceLabels {
    pairs: Vec<LabeledPair>,
}

impl CorrespondenceLabels {
    pub fn new(pairs: Vec<LabeledPair>) -> Result<Self> {
        if let Some(p) = pairs.iter().find(|p| !p.score.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "pair ({}, {}) has a non-finite score",
                p.text, p.image
            )));
        }
        Ok(Self { pairs })
    }

    /// Every text-image pair, true when the cluster ids agree.
    pub fn from_clusters(e: &EmbeddingSet) -> Result<Self> {
        let labels = e.clusters().ok_or(Error::MissingClusterLabels)?;
        let sim = build_similarity_matrix(e);
        let mut pairs = Vec::with_capacity(e.n() * e.m());
        for text in 0..e.n() {
            for image in 0..e.m() {
                pairs.push(LabeledPair {
                    text,
                    image,
                    is_true: labels.text[text] == labels.image[image],
                    score: sim.get(text, image),
                });
            }
        }
        Self::new(pairs)
    }

    /// Parses `text,image,is_true,score` rows; a header line is optional.
    pub fn from_csv(s: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("text")) {
                continue;
            }
            let bad = |field: &str| {
                Error::InvalidConfig(format!("labels line {}: bad {field}", lineno + 1))
            };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(bad("column count"));
            }
            pairs.push(LabeledPair {
                text: cols[0].parse().map_err(|_| bad("text"))?,
                image: cols[1].parse().map_err(|_| bad("image"))?,
                is_true: match cols[2] {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    _ => return Err(bad("is_true")),
                },
                score: cols[3].parse().map_err(|_| bad("score"))?,
            });
        }
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[LabeledPair] {
        &self.pairs
    }

    pub fn true_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_true).count()
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn precision_recall(labels: &CorrespondenceLabels, tau: f64) -> Result<(f64, f64)> {
    let truth = labels.true_count();
    if truth == 0 {
        return Err(Error::NoTruePairs);
    }
    let (mut selected, mut hits) = (0usize, 0usize);
    for p in labels.pairs.iter().filter(|p| p.score >= tau) {
        selected += 1;
        hits += usize::from(p.is_true);
    }
    let precision = if selected == 0 {
        1.0
    } else {
        hits as f64 / selected as f64
    };
    Ok((precision, hits as f64 / truth as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCurve {
    pub points: Vec<CurvePoint>,
    pub tau_star: f64,
    pub f1_star: f64,
}

impl ThresholdCurve {
    /// Picks the best F1, lowest tau on ties. Points must be sorted by tau.
    fn from_points(points: Vec<CurvePoint>) -> Self {
        let mut best = points[0];
        for p in &points[1..] {
            if p.f1 > best.f1 {
                best = *p;
            }
        }
        Self {
            points,
            tau_star: best.tau,
            f1_star: best.f1,
        }
    }

    pub fn to_csv(&self) -> String {
        csv(
            "tau,precision,recall,f1",
            self.points.iter().map(|p| {
                format!(
                    "{},{},{},{}",
                    fmt_f64(p.tau),
                    fmt_f64(p.precision),
                    fmt_f64(p.recall),
                    fmt_f64(p.f1)
                )
            }),
        )
    }
}

/// F1 at every distinct score plus 0 and 1; exact on finite data.
pub fn optimal_threshold(labels: &CorrespondenceLabels) -> Result<ThresholdCurve> {
    let truth = labels.true_count();
    if truth == 0 {
        return Err(Error::NoTruePairs);
    }
    // Descending by score; prefix counts give the selection at each threshold.
    let mut sorted: Vec<(f64, bool)> = labels.pairs.iter().map(|p| (p.score, p.is_true)).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut hits_prefix = Vec::with_capacity(sorted.len() + 1);
    hits_prefix.push(0usize);
    for &(_, t) in &sorted {
        hits_prefix.push(hits_prefix.last().unwrap() + usize::from(t));
    }

    let mut candidates: Vec<f64> = sorted.iter().map(|s| s.0).chain([0.0, 1.0]).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let points = candidates
        .into_iter()
        .map(|tau| {
            let selected = sorted.partition_point(|s| s.0 >= tau);
            let hits = hits_prefix[selected];
            let precision = if selected == 0 {
                1.0
            } else {
                hits as f64 / selected as f64
            };
            let recall = hits as f64 / truth as f64;
            CurvePoint {
                tau,
                precision,
                recall,
                f1: f1(precision, recall),
            }
        })
        .collect();
    Ok(ThresholdCurve::from_points(points))
}

/// Two equal-variance Gaussians for true and false pair similarities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianMixtureSpec {
    pub mu_true: f64,
    pub mu_false: f64,
    pub sigma: f64,
    pub p_true: f64,
}

impl GaussianMixtureSpec {
    pub fn new(mu_true: f64, mu_false: f64, sigma: f64, p_true: f64) -> Result<Self> {
        if mu_true.partial_cmp(&mu_false) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidConfig(format!(
                "mu_true {mu_true} must exceed mu_false {mu_false}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma {sigma} must be > 0")));
        }
        if !(p_true > 0.0 && p_true < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "p_true {p_true} outside (0, 1)"
            )));
        }
        Ok(Self {
            mu_true,
            mu_false,
            sigma,
            p_true,
        })
    }

    fn density(mu: f64, sigma: f64, c: f64) -> f64 {
        let z = (c - mu) / sigma;
        (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn true_density(&self, c: f64) -> f64 {
        Self::density(self.mu_true, self.sigma, c)
    }

    pub fn false_density(&self, c: f64) -> f64 {
        Self::density(self.mu_false, self.sigma, c)
    }

    /// Mixture mass below 0, which the [0, 1] integrals leave out.
    pub fn mass_below_zero(&self) -> f64 {
        let cdf = |mu| {
            StatNormal::new(mu, self.sigma)
                .expect("valid normal")
                .cdf(0.0)
        };
        self.p_true * cdf(self.mu_true) + (1.0 - self.p_true) * cdf(self.mu_false)
    }

    /// True when more than 1% of the mixture lies below 0.
    pub fn truncation_significant(&self) -> bool {
        self.mass_below_zero() > 0.01
    }

    /// Draws `count` labelled scores; pair indices are the draw index.
    pub fn sample(&self, rng: &mut impl Rng, count: usize) -> CorrespondenceLabels {
        let t = Normal::new(self.mu_true, self.sigma).expect("valid normal");
        let f = Normal::new(self.mu_false, self.sigma).expect("valid normal");
        let pairs = (0..count)
            .map(|i| {
                let is_true = rng.random_bool(self.p_true);
                let score = if is_true {
                    t.sample(rng)
                } else {
                    f.sample(rng)
                };
                LabeledPair {
                    text: i,
                    image: 0,
                    is_true,
                    score,
                }
            })
            .collect();
        CorrespondenceLabels { pairs }
    }
}

/// Simpson panels per oracle grid step.
const PANELS_PER_STEP: usize = 4;

/// `tail[k] = integral of f over [k * step, 1]` for the grid `0, step, .., 1`.
fn tail_integrals(f: impl Fn(f64) -> f64, steps: usize) -> Vec<f64> {
    let h = 1.0 / (steps * PANELS_PER_STEP) as f64;
    let mut tail = vec![0.0; steps + 1];
    let mut acc = 0.0;
    for k in (0..steps).rev() {
        for p in (0..PANELS_PER_STEP).rev() {
            let a = (k * PANELS_PER_STEP + p) as f64 * h;
            let b = a + h;
            acc += h / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
        }
        tail[k] = acc;
    }
    tail
}

/// Precision, recall and F1 of the Gaussian model on a 0.001 threshold grid,
/// integrating densities over `[tau, 1]` (recall normalized over `[0, 1]`).
pub fn gaussian_oracle(spec: &GaussianMixtureSpec) -> Result<ThresholdCurve> {
    let steps = (1.0 / ORACLE_STEP).round() as usize;
    let tail_true = tail_integrals(|c| spec.true_density(c), steps);
    let tail_false = tail_integrals(|c| spec.false_density(c), steps);
    let recall_norm = tail_true[0];
    let mut points = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let tau = k as f64 / steps as f64;
        let hit = spec.p_true * tail_true[k];
        let all = hit + (1.0 - spec.p_true) * tail_false[k];
        let precision = if all > 0.0 { hit / all } else { 1.0 };
        let recall = tail_true[k] / recall_norm;
        let score = f1(precision, recall);
        if !(precision.is_finite() && recall.is_finite() && score.is_finite()) {
            return Err(Error::IntegrationFailure(tau));
        }
        points.push(CurvePoint {
            tau,
            precision,
            recall,
            f1: score,
        });
    }
    Ok(ThresholdCurve::from_points(points))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub anchor_count: usize,
    pub anchor_fraction: f64,
}

/// Text-into-image plan size at each threshold.
pub fn sweep_report(e: &EmbeddingSet, thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    for &t in thresholds {
        check_threshold(t)?;
    }
    let sim = build_similarity_matrix(e);
    thresholds
        .iter()
        .map(|&tau| {
            let plan = plan_text_into_image(&sim, tau)?;
            Ok(SweepRow {
                tau,
                anchor_count: plan.len(),
                anchor_fraction: anchor_fraction(&plan, e.n()),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    csv(
        "tau,anchor_count,anchor_fraction",
        rows.iter().map(|r| {
            format!(
                "{},{},{}",
                fmt_f64(r.tau),
                r.anchor_count,
                fmt_f64(r.anchor_fraction)
            )
        }),
    )
}
