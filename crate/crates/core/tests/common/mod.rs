//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Twice-valued projections `2j, 2j-2, ..., -2j`.
fn projections(tj: i32) -> Vec<i32> {
    (0..=tj).map(|k| tj - 2 * k).collect()
}

/// `sqrt(j(j+1) - m(m-1))` with twice-valued arguments.
fn lowering(tj: i32, tm: i32) -> f64 {
    let (j, m) = (f64::from(tj) / 2.0, f64::from(tm) / 2.0);
    (j * (j + 1.0) - m * (m - 1.0)).max(0.0).sqrt()
}

/// All CG coefficients for one `(j1, j2)` pair, built by lowering the
/// stretched state and Gram–Schmidt orthogonalizing each new highest-weight
/// state against those already found (Condon–Shortley phase: the `m1 = j1`
/// component of `|J J>` is positive). Keys and arguments are twice-valued.
pub struct CgTable {
    tj1: i32,
    tj2: i32,
    states: HashMap<(i32, i32), Vec<f64>>,
}

impl CgTable {
    pub fn new(tj1: i32, tj2: i32) -> Self {
        let m1s = projections(tj1);
        let m2s = projections(tj2);
        let dim = m1s.len() * m2s.len();
        let idx = |tm1: i32, tm2: i32| ((tj1 - tm1) / 2) as usize * m2s.len() + ((tj2 - tm2) / 2) as usize;
        let lower = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; dim];
            for &a in &m1s {
                for &b in &m2s {
                    let c = v[idx(a, b)];
                    if c == 0.0 {
                        continue;
                    }
                    if a > -tj1 {
                        out[idx(a - 2, b)] += c * lowering(tj1, a);
                    }
                    if b > -tj2 {
                        out[idx(a, b - 2)] += c * lowering(tj2, b);
                    }
                }
            }
            out
        };
        let mut states: HashMap<(i32, i32), Vec<f64>> = HashMap::new();
        let mut tj = tj1 + tj2;
        while tj >= (tj1 - tj2).abs() {
            let mut v = vec![0.0; dim];
            v[idx(tj1, tj - tj1)] = 1.0;
            for (&(_, tm), w) in &states {
                if tm == tj {
                    let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                    for (a, b) in v.iter_mut().zip(w) {
                        *a -= dot * b;
                    }
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(norm > 1e-8, "degenerate highest-weight state");
            let sign = if v[idx(tj1, tj - tj1)] < 0.0 { -1.0 } else { 1.0 };
            v.iter_mut().for_each(|a| *a *= sign / norm);
            let mut tm = tj;
            loop {
                states.insert((tj, tm), v.clone());
                if tm == -tj {
                    break;
                }
                let f = lowering(tj, tm);
                v = lower(&v).into_iter().map(|a| a / f).collect();
                tm -= 2;
            }
            tj -= 2;
        }
        Self { tj1, tj2, states }
    }

    pub fn get(&self, tm1: i32, tm2: i32, tj: i32, tm: i32) -> f64 {
        if tm1.abs() > self.tj1 || tm2.abs() > self.tj2 || tm1 + tm2 != tm {
            return 0.0;
        }
        match self.states.get(&(tj, tm)) {
            Some(v) => {
                let n2 = (self.tj2 + 1) as usize;
                v[((self.tj1 - tm1) / 2) as usize * n2 + ((self.tj2 - tm2) / 2) as usize]
            }
            None => 0.0,
        }
    }
}

/// `(F_x, F_y, F_z)` in the descending-m basis, from the ladder operators.
pub fn spin_ops(tf: i32) -> (CMat, CMat, CMat) {
    let ms = projections(tf);
    let n = ms.len();
    let mut fp = CMat::zeros(n, n);
    let mut fz = CMat::zeros(n, n);
    for (i, &tm) in ms.iter().enumerate() {
        fz[(i, i)] = Complex64::new(f64::from(tm) / 2.0, 0.0);
        if i > 0 {
            // <m+1| F+ |m>
            fp[(i - 1, i)] = Complex64::new(lowering(tf, tm + 2), 0.0);
        }
    }
    let fm = fp.adjoint();
    let fx = (&fp + &fm) * Complex64::new(0.5, 0.0);
    let fy = (&fp - &fm) * Complex64::new(0.0, -0.5);
    (fx, fy, fz)
}

/// `exp(-i g μ_B (B·F) t / ħ)` by Padé matrix exponential.
pub fn evolution(tf: i32, g: f64, b: [f64; 3], t: f64) -> CMat {
    use dspsim_core::constants::{HBAR, MU_B};
    let (fx, fy, fz) = spin_ops(tf);
    let s = g * MU_B * t / HBAR;
    let h = fx * Complex64::new(b[0] * s, 0.0) + fy * Complex64::new(b[1] * s, 0.0) + fz * Complex64::new(b[2] * s, 0.0);
    (h * (-I)).exp()
}

/// Direct (non-FFT) 2D Fourier sum on a centered grid, with the physical
/// `1/(λf)` normalization and the constant phase dropped.
pub fn direct_fourier(data: &[Complex64], n: usize, pitch_in: f64, lambda: f64, f: f64) -> Vec<Complex64> {
    let pitch_out = lambda * f / (n as f64 * pitch_in);
    let coord = |i: usize, p: f64| (i as f64 - (n / 2) as f64) * p;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for kr in 0..n {
        for kc in 0..n {
            let (xi, eta) = (coord(kc, pitch_out), coord(kr, pitch_out));
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..n {
                for c in 0..n {
                    let (x, y) = (coord(c, pitch_in), coord(r, pitch_in));
                    let phase = -2.0 * std::f64::consts::PI * (x * xi + y * eta) / (lambda * f);
                    acc += data[r * n + c] * Complex64::from_polar(1.0, phase);
                }
            }
            out[kr * n + kc] = acc * (pitch_in * pitch_in / (lambda * f));
        }
    }
    out
}
