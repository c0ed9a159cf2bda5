//! Invariants checked over random inputs.

mod common;

use std::path::Path;

use num_complex::Complex64;
use proptest::prelude::*;

use dspsim_core::angmom::{
    cg_coefficient, precession_angle, rotation_matrix, HalfInt, HyperfineManifold, Su2, WignerTable,
};
use dspsim_core::constants::{GAUSS, LAMBDA_D1};
use dspsim_core::fields::{assembly_field, CoilAssembly, Vec3};
use dspsim_core::metrics::{background_similarity, relative_similarity, similarity, BackgroundModel};
use dspsim_core::optics::{fraunhofer, load_pattern, retrieve, BuiltinPattern, ComplexField2D, FourierLens, PatternSpec, Plane};
use dspsim_core::scenario::{echo_config, parse_config_str};
use dspsim_core::spinwave::{dephasing_kernel_for, DephasingSimulation, EnsembleConfig, FieldSchedule, ZSum};

use common::{evolution, CMat};

fn field() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-2.0 * GAUSS..2.0 * GAUSS)
}

fn max_dev(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotations_are_unitary(tf in 1..=6i32, g in -1.0..1.0f64, b in field(), t in 0.0..1e-3f64) {
        let man = HyperfineManifold::new(HalfInt::from_twice(tf), g).unwrap();
        let d = rotation_matrix(&man, b, t).unwrap().entries;
        let n = d.nrows();
        prop_assert!(max_dev(&(d.adjoint() * &d), &CMat::identity(n, n)) < 1e-12);
    }

    #[test]
    fn rotation_matches_matrix_exponential(tf in 1..=6i32, g in -1.0..1.0f64, b in field(), t in 0.0..20e-6f64) {
        let man = HyperfineManifold::new(HalfInt::from_twice(tf), g).unwrap();
        let d = rotation_matrix(&man, b, t).unwrap().entries;
        prop_assert!(max_dev(&d, &evolution(tf, g, b, t)) < 1e-10);
    }

    #[test]
    fn spin_half_image_matches_rotation(tf in 1..=6i32, g in -1.0..1.0f64, b in field(), t in 0.0..1e-3f64) {
        let man = HyperfineManifold::new(HalfInt::from_twice(tf), g).unwrap();
        let direct = rotation_matrix(&man, b, t).unwrap().entries;
        let table = WignerTable::new(HalfInt::from_twice(tf)).unwrap();
        let mapped = table.matrix(&Su2::precession(g, b, t));
        prop_assert!(max_dev(&direct, &mapped) < 1e-11);
    }

    #[test]
    fn precession_angle_is_additive(g in -1.0..1.0f64, b in 0.0..2.0 * GAUSS, k1 in 0..1u64 << 30, k2 in 0..1u64 << 30) {
        let q = 1.0 / (1u64 << 41) as f64;
        let (t1, t2) = (k1 as f64 * q, k2 as f64 * q);
        let four_pi = 4.0 * std::f64::consts::PI;
        let sum = precession_angle(g, b, t1) + precession_angle(g, b, t2);
        let whole = precession_angle(g, b, t1 + t2);
        let d = (sum - whole).rem_euclid(four_pi);
        prop_assert!(d.min(four_pi - d) < 1e-13);
    }

    #[test]
    fn cg_rows_are_orthonormal(tj1 in 0..=6i32, tj2 in 0..=6i32, pick in 0..64usize) {
        let h = HalfInt::from_twice;
        let tjs: Vec<i32> = ((tj1 - tj2).abs()..=tj1 + tj2).step_by(2).collect();
        let (ta, tb) = (tjs[pick % tjs.len()], tjs[(pick / 8) % tjs.len()]);
        let tm = ta.min(tb) - 2 * ((pick / 3) as i32 % (ta.min(tb) + 1));
        let mut dot = 0.0;
        for tm1 in (-tj1..=tj1).step_by(2) {
            let tm2 = tm - tm1;
            if tm2.abs() > tj2 {
                continue;
            }
            dot += cg_coefficient(h(tj1), h(tm1), h(tj2), h(tm2), h(ta), h(tm)).unwrap()
                * cg_coefficient(h(tj1), h(tm1), h(tj2), h(tm2), h(tb), h(tm)).unwrap();
        }
        let want = if ta == tb { 1.0 } else { 0.0 };
        prop_assert!((dot - want).abs() < 1e-12);
    }

    #[test]
    fn similarity_is_bounded(a in prop::collection::vec(0.0..1.0f64, 16), b in prop::collection::vec(0.0..1.0f64, 16)) {
        prop_assume!(a.iter().sum::<f64>() > 1e-3 && b.iter().sum::<f64>() > 1e-3);
        let s = similarity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        prop_assert!((similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let s_bg = background_similarity(&a, &BackgroundModel::Uniform).unwrap();
        prop_assume!(s_bg < 1.0 - 1e-9);
        prop_assert!(relative_similarity(s, s_bg).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn fourier_pair_preserves_energy(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 32;
        let data = (0..n * n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let u = ComplexField2D::new(n, 20e-6, Plane::Object, data).unwrap();
        let uf = fraunhofer(&u, LAMBDA_D1, 0.4).unwrap();
        let back = retrieve(&uf, LAMBDA_D1, 0.4).unwrap();
        prop_assert!((uf.energy() / u.energy() - 1.0).abs() < 1e-12);
        let inv = u.point_inverted();
        prop_assert!(back.data().iter().zip(inv.data()).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn coil_field_is_linear_in_current(i in 0.1..5.0f64, x in -5e-3..5e-3f64, y in -5e-3..5e-3f64, z in -5e-3..5e-3f64) {
        let make = |c| CoilAssembly::coil_pair(Vec3::zeros(), Vec3::x(), 0.1, 0.15, 50, c, true, 180).unwrap();
        let p = Vec3::new(x, y, z);
        let b1 = assembly_field(&make(1.0), p).unwrap();
        let bi = assembly_field(&make(i), p).unwrap();
        prop_assert!((bi - b1 * i).norm() <= 1e-12 * bi.norm().max(1e-12));
        // anti-Helmholtz field is odd under point reflection
        let bm = assembly_field(&make(1.0), -p).unwrap();
        prop_assert!((bm + b1).norm() <= 1e-9 * b1.norm().max(1e-15));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn kernel_modulus_is_bounded(b in field(), grad in 0.0..2.0f64, t in 0.0..20e-6f64, sp in any::<bool>()) {
        let mut cfg = EnsembleConfig::rb85();
        cfg.n_z = 3;
        if sp {
            cfg.alpha = dspsim_core::angmom::Helicity::Plus;
            cfg.beta = dspsim_core::angmom::Helicity::Plus;
            cfg.populations = vec![0.05, 0.05, 0.8, 0.05, 0.05];
        }
        let coils = CoilAssembly::coil_pair(Vec3::zeros(), Vec3::x(), 0.1, 0.15, 50, grad, true, 180)
            .unwrap()
            .with_bias(Vec3::new(b[0], b[1], b[2]))
            .unwrap();
        let sched = FieldSchedule::constant(coils, 20e-6).unwrap();
        let map = dephasing_kernel_for(&cfg, &sched, t, 16, 50e-6).unwrap();
        prop_assert!(map.kernel.iter().all(|k| k.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn efficiency_never_exceeds_one(grad in 0.0..2.0f64, t in 0.0..10e-6f64, coherent in any::<bool>()) {
        let mut cfg = EnsembleConfig::rb85();
        cfg.n_z = 3;
        let n = 32;
        let pitch = 100e-6;
        let u = load_pattern(&PatternSpec::builtin(BuiltinPattern::Ring, 1.6e-3), n, LAMBDA_D1 * 0.5 / (n as f64 * pitch)).unwrap();
        let uf = fraunhofer(&u, LAMBDA_D1, 0.5).unwrap();
        let coils = CoilAssembly::coil_pair(Vec3::zeros(), Vec3::x(), 0.1, 0.15, 50, grad, true, 180).unwrap();
        let sched = FieldSchedule::constant(coils, 10e-6).unwrap();
        let z_sum = if coherent { ZSum::Coherent } else { ZSum::Incoherent };
        let lens = FourierLens::new(n, LAMBDA_D1, 0.5).unwrap();
        let sim = DephasingSimulation::new(&cfg, &uf, &sched, lens, z_sum, None).unwrap();
        let img = sim.image_at(t).unwrap();
        prop_assert!(img.efficiency <= 1.0 + 1e-12);
        prop_assert!(img.intensity.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn config_echo_round_trips(
        sigma_mm in 0.1..1.0f64,
        bias_mgauss in -2000i32..2000,
        step_ns in 50u32..2000,
        points in 2u32..20,
        incoherent in any::<bool>(),
    ) {
        let text = format!(
            "[pattern]\nbuiltin = ring\n[ensemble]\nsigma_m = {}\nz_sum = {}\n\
             [coils.g]\nkind = anti-helmholtz\naxis = y\ncalibrate_gauss = 0.05\n\
             [schedule]\nseg0.coils = g\nseg0.bias_gauss = 0, 0, {}\n\
             [times]\nranges_us = 0:{}:{}\n",
            sigma_mm * 1e-3,
            if incoherent { "incoherent" } else { "coherent" },
            f64::from(bias_mgauss) / 1000.0,
            f64::from(points * step_ns) / 1000.0,
            f64::from(step_ns) / 1000.0,
        );
        let s = parse_config_str(&text, Path::new(".")).unwrap();
        let again = parse_config_str(&echo_config(&s, true), Path::new(".")).unwrap();
        prop_assert_eq!(s, again);
    }
}
