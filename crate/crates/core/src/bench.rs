//! Wall-clock scaling of similarity, insertion and a reference attention pass.

use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::anchor::{insert_text_into_image, plan_text_into_image};
use crate::error::{Error, Result};
use crate::report::{csv, fmt_f64};
use crate::synth;
use crate::tokens::{
    build_similarity_matrix, build_similarity_matrix_parallel, EmbeddingSet, MultimodalSequence,
};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchGrid {
    pub n_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub d_values: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Use the rayon similarity path.
    pub parallel: bool,
}

impl BenchGrid {
    /// One point at the given shape.
    pub fn single(n: usize, m: usize, d: usize, repetitions: usize) -> Self {
        Self {
            n_values: vec![n],
            m_values: vec![m],
            d_values: vec![d],
            repetitions,
            seed: 0,
            threshold: 0.12,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lists = [&self.n_values, &self.m_values, &self.d_values];
        if lists.iter().any(|l| l.is_empty() || l.contains(&0)) {
            return Err(Error::InvalidConfig(
                "grid values must be non-empty and >= 1".into(),
            ));
        }
        if self.repetitions < 3 {
            return Err(Error::InvalidConfig("repetitions must be >= 3".into()));
        }
        crate::anchor::check_threshold(self.threshold)
    }

    /// Base point plus a one-axis sweep along each list, base first.
    pub fn points(&self) -> Vec<(usize, usize, usize)> {
        let (n0, m0, d0) = (self.n_values[0], self.m_values[0], self.d_values[0]);
        let mut out = vec![(n0, m0, d0)];
        let sweeps = self
            .n_values
            .iter()
            .map(|&n| (n, m0, d0))
            .chain(self.m_values.iter().map(|&m| (n0, m, d0)))
            .chain(self.d_values.iter().map(|&d| (n0, m0, d)));
        for p in sweeps {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Sequence length after insertion.
    pub l: usize,
    pub similarity_ns: u128,
    pub insertion_ns: u128,
    pub attention_ns: u128,
    pub overhead_ratio: f64,
}

/// Log-log slopes; absent when an axis has fewer than three points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Slopes {
    pub similarity_vs_n: Option<f64>,
    pub similarity_vs_m: Option<f64>,
    pub similarity_vs_d: Option<f64>,
    pub insertion_vs_n: Option<f64>,
    /// Attention pass against sequence length, along the M sweep.
    pub attention_vs_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub slopes: Slopes,
    pub timer_granularity_ns: u128,
    pub parallel: bool,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        csv(
            "N,M,d,similarity_ns,insertion_ns,attention_ns,overhead_ratio",
            self.rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{},{}",
                    r.n,
                    r.m,
                    r.d,
                    r.similarity_ns,
                    r.insertion_ns,
                    r.attention_ns,
                    fmt_f64(r.overhead_ratio)
                )
            }),
        )
    }

    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "slopes": self.slopes,
            "timer_granularity_ns": self.timer_granularity_ns,
            "parallel": self.parallel,
            "points": self.rows.len(),
        })
        .to_string()
    }
}

/// Least-squares slope of `ln(time)` against `ln(size)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "{} points, need 3",
            points.len()
        )));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::DegenerateFit(
            "sizes must be strictly increasing".into(),
        ));
    }
    if points.iter().any(|&(s, t)| !(s > 0.0 && t > 0.0)) {
        return Err(Error::DegenerateFit(
            "sizes and times must be positive".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(s, t)| (s.ln(), t.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Smallest observable nonzero step of the monotonic clock.
pub fn timer_granularity() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..200 {
        let t0 = Instant::now();
        let mut t1 = Instant::now();
        while t1 == t0 {
            t1 = Instant::now();
        }
        best = best.min(t1 - t0);
    }
    best
}

/// Single-head softmax self-attention with queries, keys and values all
/// equal to the token embeddings. Cost is `O(L^2 d)`.
pub fn attention_pass(rows: &[&[f64]]) -> Vec<f64> {
    let l = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = vec![0.0; l * d];
    let mut weights = vec![0.0; l];
    for (i, q) in rows.iter().enumerate() {
        let mut max = f64::NEG_INFINITY;
        for (w, k) in weights.iter_mut().zip(rows) {
            let mut s = 0.0;
            for (a, b) in q.iter().zip(k.iter()) {
                s += a * b;
            }
            *w = s * scale;
            max = max.max(*w);
        }
        let mut total = 0.0;
        for w in weights.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        let o = &mut out[i * d..(i + 1) * d];
        for (w, v) in weights.iter().zip(rows) {
            let w = w / total;
            for (acc, x) in o.iter_mut().zip(v.iter()) {
                *acc += w * x;
            }
        }
    }
    out
}

fn median(mut samples: Vec<u128>) -> u128 {
    samples.sort_unstable();
    samples[samples.len() / 2]
}

fn time<T>(f: impl FnOnce() -> T) -> (u128, T) {
    let start = Instant::now();
    let out = black_box(f());
    (start.elapsed().as_nanos(), out)
}

/// One timed pass over a point: sequence length and the three timings.
fn measure_once(grid: &BenchGrid, e: &EmbeddingSet) -> Result<(usize, [u128; 3])> {
    let (s, sim) = time(|| {
        if grid.parallel {
            build_similarity_matrix_parallel(black_box(e))
        } else {
            build_similarity_matrix(black_box(e))
        }
    });
    let (i, seq) = time(|| -> Result<MultimodalSequence> {
        let plan = plan_text_into_image(black_box(&sim), grid.threshold)?;
        insert_text_into_image(e, &plan)
    });
    let seq = seq?;
    let rows: Vec<&[f64]> = seq
        .embedding_rows(e)
        .into_iter()
        .map(|r| r.expect("text-into-image has no pauses"))
        .collect();
    let (a, _) = time(|| attention_pass(black_box(&rows)));
    Ok((seq.len(), [s, i, a]))
}

fn axis_slope(
    rows: &[ScalingRow],
    select: impl Fn(&ScalingRow) -> Option<(f64, f64)>,
) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows.iter().filter_map(select).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    fit_loglog_slope(&pts).ok()
}

/// Times every grid point and fits per-axis slopes.
pub fn run_scaling(grid: &BenchGrid) -> Result<ScalingReport> {
    grid.validate()?;
    let granularity = timer_granularity().as_nanos().max(1);
    let points = grid.points();
    let sets = points
        .iter()
        .enumerate()
        .map(|(idx, &(n, m, d))| {
            synth::uniform_set(&mut synth::rng(grid.seed.wrapping_add(idx as u64)), m, n, d)
        })
        .collect::<Result<Vec<_>>>()?;
    // Repetitions run round-robin over the points so slow drift in machine
    // load spreads over the whole grid. Round 0 is warm-up.
    let mut samples =
        vec![[Vec::with_capacity(grid.repetitions), Vec::new(), Vec::new()]; points.len()];
    let mut lengths = vec![0; points.len()];
    for round in 0..=grid.repetitions {
        for (k, e) in sets.iter().enumerate() {
            let (l, t) = measure_once(grid, e)?;
            lengths[k] = l;
            if round > 0 {
                for (acc, v) in samples[k].iter_mut().zip(t) {
                    acc.push(v);
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(points.len());
    for (k, (n, m, d)) in points.into_iter().enumerate() {
        let [similarity_ns, insertion_ns, attention_ns] =
            std::mem::take(&mut samples[k]).map(median);
        for t in [similarity_ns, insertion_ns, attention_ns] {
            if t < 100 * granularity {
                return Err(Error::TimerResolutionTooCoarse {
                    median_ns: t,
                    granularity_ns: granularity,
                });
            }
        }
        rows.push(ScalingRow {
            n,
            m,
            d,
            l: lengths[k],
            similarity_ns,
            insertion_ns,
            attention_ns,
            overhead_ratio: (similarity_ns + insertion_ns) as f64 / attention_ns as f64,
        });
    }

    let (n0, m0, d0) = (grid.n_values[0], grid.m_values[0], grid.d_values[0]);
    let on_n = |r: &ScalingRow| r.m == m0 && r.d == d0;
    let on_m = |r: &ScalingRow| r.n == n0 && r.d == d0;
    let on_d = |r: &ScalingRow| r.n == n0 && r.m == m0;
    let slopes = Slopes {
        similarity_vs_n: axis_slope(&rows, |r| {
            on_n(r).then_some((r.n as f64, r.similarity_ns as f64))
        }),
        similarity_vs_m: axis_slope(&rows, |r| {
            on_m(r).then_some((r.m as f64, r.similarity_ns as f64))
        }),
        similarity_vs_d: axis_slope(&rows, |r| {
            on_d(r).then_some((r.d as f64, r.similarity_ns as f64))
        }),
        insertion_vs_n: axis_slope(&rows, |r| {
            on_n(r).then_some((r.n as f64, r.insertion_ns as f64))
        }),
        attention_vs_l: axis_slope(&rows, |r| {
            on_m(r).then_some((r.l as f64, r.attention_ns as f64))
        }),
    };
    Ok(ScalingReport {
        rows,
        slopes,
        timer_granularity_ns: granularity,
        parallel: grid.parallel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let linear: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&s| (s, 3.0 * s)).collect();
        assert!((fit_loglog_slope(&linear).unwrap() - 1.0).abs() < 1e-9);
        let quad: Vec<(f64, f64)> = [3.0, 5.0, 11.0].iter().map(|&s| (s, 0.5 * s * s)).collect();
        assert!((fit_loglog_slope(&quad).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_fits() {
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0), (1.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 0.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
    }

    #[test]
    fn grid_points_and_validation() {
        let g = BenchGrid {
            n_values: vec![2, 4],
            m_values: vec![8, 16],
            d_values: vec![4],
            repetitions: 3,
            seed: 1,
            threshold: 0.1,
            parallel: false,
        };
        assert_eq!(g.points(), vec![(2, 8, 4), (4, 8, 4), (2, 16, 4)]);
        let mut bad = g.clone();
        bad.repetitions = 2;
        assert!(bad.validate().is_err());
        bad = g.clone();
        bad.d_values = vec![];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn attention_pass_rows_are_convex_combinations() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        let out = attention_pass(&[&a, &b]);
        let w = 1.0 / (1.0 + (-1.0 / 2f64.sqrt()).exp());
        assert!((out[0] - w).abs() < 1e-12 && (out[1] - (1.0 - w)).abs() < 1e-12);
    }
}
