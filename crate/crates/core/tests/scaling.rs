// Timing-based checks of the spec bands not covered by the acceptance target.

use std::sync::Mutex;

use attanchor::bench::{run_scaling, BenchGrid};

// Timings taken while another test is timing are meaningless.
static CLOCK: Mutex<()> = Mutex::new(());

/// Median over three independent runs; one noisy run on a shared machine
/// should not decide a band check.
fn median_of_three(f: impl Fn() -> f64) -> f64 {
    let mut v = [f(), f(), f()];
    v.sort_by(f64::total_cmp);
    v[1]
}

#[test]
fn insertion_is_linear_in_text_length() {
    let _guard = CLOCK.lock().unwrap_or_else(|e| e.into_inner());
    let grid = BenchGrid {
        n_values: vec![256, 512, 1024, 2048],
        m_values: vec![128],
        d_values: vec![16],
        repetitions: 9,
        seed: 1,
        threshold: 0.12,
        parallel: false,
    };
    let slope = median_of_three(|| run_scaling(&grid).unwrap().slopes.insertion_vs_n.unwrap());
    assert!((0.8..=1.3).contains(&slope), "insertion slope {slope}");
}

#[test]
fn overhead_shrinks_as_sequences_grow() {
    let _guard = CLOCK.lock().unwrap_or_else(|e| e.into_inner());
    let grid = BenchGrid {
        n_values: vec![32],
        m_values: vec![128, 256, 512, 1024],
        d_values: vec![64],
        repetitions: 9,
        seed: 2,
        threshold: 0.12,
        parallel: false,
    };
    let r = run_scaling(&grid).unwrap();
    let ratios: Vec<f64> = r.rows.iter().map(|row| row.overhead_ratio).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn single_point_has_timings_but_no_slopes() {
    let _guard = CLOCK.lock().unwrap_or_else(|e| e.into_inner());
    let r = run_scaling(&BenchGrid::single(16, 64, 16, 3)).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert!(r.rows[0].similarity_ns > 0 && r.rows[0].attention_ns > 0);
    assert_eq!(r.slopes, Default::default());
}

#[test]
fn doubling_text_roughly_doubles_similarity_time() {
    let _guard = CLOCK.lock().unwrap_or_else(|e| e.into_inner());
    let grid = BenchGrid {
        n_values: vec![256, 512],
        m_values: vec![576],
        d_values: vec![64],
        repetitions: 9,
        seed: 3,
        threshold: 0.12,
        parallel: false,
    };
    let ratio = median_of_three(|| {
        let r = run_scaling(&grid).unwrap();
        r.rows[1].similarity_ns as f64 / r.rows[0].similarity_ns as f64
    });
    assert!((1.6..=2.6).contains(&ratio), "{ratio}");
}
