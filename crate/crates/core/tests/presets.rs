//! Shape properties of the pattern-size preset beyond the acceptance
//! ordering: every curve decays monotonically and the smaller pattern decays
//! faster at every sampled time from 1 μs.

use dspsim_core::scenario::{preset_runs, simulate};

#[test]
fn fig2b_curves_decay_and_order_by_size() {
    let runs = preset_runs("fig2b", |s| {
        let mut s = s.with_grid(128).with_n_z(11);
        s.output.frames = false;
        s
    })
    .unwrap();
    let curves: Vec<Vec<(f64, f64)>> = runs
        .iter()
        .map(|r| {
            simulate(&r.scenario)
                .unwrap()
                .records
                .iter()
                .map(|x| (x.t, x.s_r))
                .collect()
        })
        .collect();
    for (run, c) in runs.iter().zip(&curves) {
        assert!(c.windows(2).all(|w| w[1].1 < w[0].1), "{} not strictly decreasing", run.label);
    }
    let (large, small) = (&curves[0], &curves[2]);
    for (a, b) in large.iter().zip(small).filter(|(a, _)| a.0 >= 1e-6) {
        assert!(b.1 < a.1, "at {} us: scale 0.5 {} vs scale 1.0 {}", a.0 * 1e6, b.1, a.1);
    }
}
