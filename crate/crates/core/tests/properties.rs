use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rkhs_regret::aggregating::{aa_substitute, aa_update, eta_for, kaar_bound, log_det_regularized, KaarState};
use rkhs_regret::bounds::{kummer_f, regret_thm1, regret_thm2};
use rkhs_regret::comparators::{averaged_rule, hindsight_ridge, random_expansion, ridge_objective, Comparator};
use rkhs_regret::defensive::{certificate, mixed_check, PredictorState, RootKind, Variant, PROBES};
use rkhs_regret::harness::{audit, standard_battery, synth_iid, GameTranscript, LabelFlips, Sequence};
use rkhs_regret::harness::{play, run_game, Fingerprint};
use rkhs_regret::kernel::{ForecastKernel, Kernel};
use rkhs_regret::predictor::{Algorithm, OnlinePredictor};
use rkhs_regret::GridMixture;

fn builtin(i: usize, c: f64) -> Kernel {
    match i % 9 {
        0 => Kernel::sobolev01(),
        1 => Kernel::fermi_sobolev(),
        2 => Kernel::sobolev_r(),
        3 => Kernel::triangular(c).unwrap(),
        4 => Kernel::constant(c).unwrap(),
        5 => Kernel::zero(),
        6 => Kernel::parse("tensor:sobolev01:2").unwrap(),
        7 => Kernel::parse("tensor:fermi-sobolev:3").unwrap(),
        _ => Kernel::parse("tensor:sobolev-r:2").unwrap(),
    }
}

fn point(rng: &mut ChaCha8Rng, k: &Kernel) -> Vec<f64> {
    let m = k.dimension().unwrap_or(1);
    if k.unit_domain() {
        (0..m).map(|_| rng.random::<f64>()).collect()
    } else {
        (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()
    }
}

fn game_data(k: &Kernel, y: f64, n: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let spec = if seed.is_multiple_of(2) { "uniform-smooth" } else { "sign-noise" };
    synth_iid(spec, k, y, n, seed).unwrap()
}

#[test]
fn kernels_are_symmetric_with_nonnegative_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..9 {
        let k = builtin(i, 1.7);
        for _ in 0..1000 {
            let (x, z) = (point(&mut rng, &k), point(&mut rng, &k));
            assert_eq!(k.value(&x, &z), k.value(&z, &x), "{k}");
            assert!(k.value(&x, &x) >= 0.0);
        }
    }
}

#[test]
fn bound_is_the_diagonal_supremum() {
    let n = 10_000;
    for i in [0usize, 1, 2, 3, 4] {
        let k = builtin(i, 1.3);
        let c = k.bound().unwrap();
        let max = (0..=n)
            .map(|j| {
                let t = j as f64 / n as f64;
                k.value(&[t], &[t]).sqrt()
            })
            .fold(0.0, f64::max);
        assert!(max <= c + 1e-9, "{k}");
        assert!((max - c).abs() < 1e-6, "{k}");
    }
    for k in [Kernel::sobolev01(), Kernel::fermi_sobolev()] {
        let c = k.bound().unwrap();
        assert!((k.value(&[0.0], &[0.0]).sqrt() - c).abs() < 1e-6);
        assert!((k.value(&[1.0], &[1.0]).sqrt() - c).abs() < 1e-6);
    }
}

#[test]
fn tensor_bounds_are_exact_powers() {
    for base in [Kernel::sobolev01(), Kernel::fermi_sobolev(), Kernel::sobolev_r(), Kernel::triangular(1.9).unwrap()] {
        let c = base.bound().unwrap();
        for m in 1..=6 {
            assert_eq!(base.tensor_power(m).unwrap().bound().unwrap(), c.powi(m as i32));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_matrices_are_psd(kind in 0usize..9, n in 1usize..=50, seed in any::<u64>(), c in 0.3f64..3.0) {
        let k = builtin(kind, c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng, &k)).collect();
        let g = k.gram(&pts).unwrap();
        prop_assert!(g.min_eigenvalue() >= -1e-8 * g.max_diagonal().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn defensive_games_respect_protocol_and_certificates(
        kind in 0usize..9, c in 0.3f64..3.0, y in 0.3f64..3.0, n in 0usize..120,
        flip in prop_oneof![Just(0.0), Just(0.3), Just(1.0)], seed in any::<u64>(), k29 in any::<bool>(),
    ) {
        let k = builtin(kind, c);
        let variant = if k29 { Variant::K29 } else { Variant::Aln };
        let mut st = PredictorState::new(variant, k.clone(), y, None, None, None).unwrap();
        let mut reality = LabelFlips::new(game_data(&k, y, n, seed), flip, y, seed);
        let fp = Fingerprint { algorithm: "aln".into(), kernel: k.to_string(), y, seed: Some(seed) };
        let mut check = st.clone();
        let mut t = GameTranscript::new(fp);
        let mut round = 1;
        use rkhs_regret::harness::Reality;
        while let Some(x) = reality.object(round) {
            let root = check.root_at(&x).unwrap();
            match root.kind {
                RootKind::Root => prop_assert!(root.value.abs() <= check.tau()),
                RootKind::Upper | RootKind::Lower => {
                    for j in 0..PROBES {
                        let m = -y + 2.0 * y * j as f64 / (PROBES - 1) as f64;
                        let s = check.s_function(&x, m).unwrap();
                        let same_sign = if root.kind == RootKind::Upper { s > 0.0 } else { s < 0.0 };
                        prop_assert!(same_sign);
                    }
                }
                _ => {}
            }
            let mu = st.predict(&x).unwrap();
            prop_assert_eq!(mu, root.mu);
            prop_assert!(mu.abs() <= y);
            let label = reality.label(round, &x, mu);
            st.observe(label).unwrap();
            check.predict(&x).unwrap();
            check.observe(label).unwrap();
            t.push(x, mu, label);
            round += 1;
        }
        let fk = ForecastKernel::merge(k.clone(), y, None, None).unwrap();
        let cert = certificate(&t.xs(), &t.mus(), &t.ys(), &fk, variant, st.tau()).unwrap();
        prop_assert!(cert.holds(), "{:?}", cert);
        let (lhs, rhs, _) = mixed_check(&t.xs(), &t.mus(), &t.ys(), &fk, variant, st.tau()).unwrap();
        prop_assert!(lhs <= rhs, "{} > {}", lhs, rhs);
    }

    #[test]
    fn every_algorithm_predicts_inside_the_label_range(
        alg in prop_oneof![Just("aln"), Just("k29"), Just("aln-plain"), Just("zero"), Just("kaar:0.3"), Just("aa-grid:-2:2")],
        kind in 0usize..9, y in 0.3f64..3.0, n in 0usize..60, seed in any::<u64>(),
    ) {
        let k = builtin(kind, 1.1);
        let mut reality = LabelFlips::new(game_data(&k, y, n, seed), 0.5, y, seed);
        let t = run_game(alg, &k.to_string(), y, &mut reality, Some(seed)).unwrap();
        prop_assert!(t.mus().iter().all(|m| m.abs() <= y));
        let mut cum = 0.0;
        for r in t.rounds() {
            cum += (r.y - r.mu) * (r.y - r.mu);
            prop_assert_eq!(r.cumloss, cum);
        }
    }

    #[test]
    fn kaar_and_grid_meet_their_bounds(
        kind in 0usize..9, y in 0.3f64..3.0, n in 1usize..80, seed in any::<u64>(), flip in 0.0f64..1.0,
    ) {
        let k = builtin(kind, 0.8);
        let data = game_data(&k, y, n, seed);
        let mut grid = GridMixture::with_exponents(k.clone(), y, -3, 3).unwrap();
        let fp = Fingerprint { algorithm: "aa-grid:-3:3".into(), kernel: k.to_string(), y, seed: None };
        let t = play(&mut grid, &mut LabelFlips::new(data, flip, y, seed), fp).unwrap();
        let xs = t.xs();
        let ys = t.ys();
        let gram = k.gram(&xs).unwrap();
        let battery = standard_battery(&k, &t, seed).unwrap();
        let mut best_expert = f64::INFINITY;
        for a in (Algorithm::AaGrid { kmin: -3, kmax: 3 }).grid(y).unwrap() {
            let mut expert = KaarState::new(k.clone(), a, y).unwrap();
            let et = play(&mut expert, &mut Sequence::new(xs.iter().cloned().zip(ys.iter().copied()).collect()), t.fingerprint.clone()).unwrap();
            best_expert = best_expert.min(et.total_loss());
            for e in &battery {
                let rhs = e.rule.loss(&xs, &ys).unwrap() + kaar_bound(y, a, e.rule.norm(), &gram).unwrap();
                prop_assert!(et.total_loss() <= rhs + 1e-8 * rhs.max(1.0));
            }
        }
        let m = 7.0f64;
        prop_assert!(t.total_loss() <= best_expert + 2.0 * y * y * m.ln() + 1e-9);
    }

    #[test]
    fn minkowski_floor(n in 1usize..30, a in 0.05f64..20.0, seed in any::<u64>(), kind in 0usize..9) {
        let k = builtin(kind, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng, &k)).collect();
        let g = k.gram(&pts).unwrap();
        let ld = log_det_regularized(&g, a).unwrap();
        let eig = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_row_slice(n, n, g.entries())).eigenvalues;
        let log_det_k: f64 = eig.iter().map(|v| (v.max(0.0) / a).ln()).sum();
        let floor = n as f64 * (1.0 + (log_det_k / n as f64).exp()).ln();
        prop_assert!(ld >= floor - 1e-9 * ld.abs().max(1.0), "{} < {}", ld, floor);
    }

    #[test]
    fn aggregating_substitution_and_update(
        preds in prop::collection::vec(-5.0f64..5.0, 1..20), raw in prop::collection::vec(0.01f64..1.0, 20),
        y in 0.1f64..4.0, label in -1.0f64..1.0,
    ) {
        let preds: Vec<f64> = preds.iter().map(|p| p.clamp(-y, y)).collect();
        let s: f64 = raw[..preds.len()].iter().sum();
        let w: Vec<f64> = raw[..preds.len()].iter().map(|v| v / s).collect();
        let mu = aa_substitute(&preds, &w, y).unwrap();
        prop_assert!(mu.abs() <= y);
        let w2 = aa_update(&w, &preds, label * y, eta_for(y));
        prop_assert!((w2.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regret_thm1_is_monotone(y in 0.1f64..5.0, c in 0.0f64..5.0, d in 0.0f64..10.0, n in 0usize..10_000, h in 0.0f64..1.0) {
        let base = regret_thm1(y, c, d, n).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!(regret_thm1(y + h, c, d, n).unwrap() >= base);
        prop_assert!(regret_thm1(y, c + h, d, n).unwrap() >= base);
        prop_assert!(regret_thm1(y, c, d + h, n).unwrap() >= base);
        prop_assert!(regret_thm1(y, c, d, n + 1).unwrap() >= base);
    }

    #[test]
    fn regret_thm2_against_thm1(y in 0.1f64..5.0, c in 0.0f64..5.0, d in 0.0f64..10.0, n in 1usize..10_000, frac in 0.0f64..=1.0) {
        let loss_d = frac * 4.0 * y * y * n as f64;
        let b = (c * c + 1.0).sqrt() * (d + y);
        let lhs = regret_thm2(y, c, d, loss_d).unwrap();
        let rhs = 2.0 * regret_thm1(y, c, d, n).unwrap() + 4.0 * b * b;
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn kummer_f_is_nondecreasing_in_dd(n in 1usize..200, dd in 0.05f64..5.0, step in 0.01f64..1.0) {
        prop_assert!(kummer_f(n, dd + step).unwrap() >= kummer_f(n, dd).unwrap() - 1e-9);
    }

    #[test]
    fn expansion_norms_and_cauchy_schwarz(kind in 0usize..9, centers in 1usize..12, seed in any::<u64>(), target in 0.1f64..5.0) {
        let k = builtin(kind, 1.4);
        let m = k.dimension().unwrap_or(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = if k.unit_domain() { (0.0, 1.0) } else { (-2.0, 2.0) };
        let d = random_expansion(&k, &mut rng, centers, m, lo, hi, target).unwrap();
        let mut sq = 0.0;
        for (zi, ci) in d.centers().iter().zip(d.coeffs()) {
            for (zj, cj) in d.centers().iter().zip(d.coeffs()) {
                sq += ci * cj * k.value(zi, zj);
            }
        }
        prop_assert!((sq - d.norm() * d.norm()).abs() <= 1e-10 * sq.abs().max(1e-300) + 1e-14);
        for _ in 0..50 {
            let x = point(&mut rng, &k);
            prop_assert!(d.eval(&x).unwrap().abs() <= d.norm() * k.value(&x, &x).sqrt() * (1.0 + 1e-9) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hindsight_ridge_is_optimal(kind in 0usize..9, n in 1usize..25, lambda in prop_oneof![Just(0.1), Just(1.0), Just(10.0)], seed in any::<u64>()) {
        let k = builtin(kind, 1.2);
        let data = game_data(&k, 1.0, n, seed);
        let (xs, ys): (Vec<_>, Vec<_>) = data.into_iter().unzip();
        let d = hindsight_ridge(&k, &xs, &ys, lambda).unwrap();
        let best = ridge_objective(&d, &xs, &ys, lambda).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for i in 0..1000 {
            let scale = 10f64.powi(-(i % 6));
            let coeffs: Vec<f64> = d.coeffs().iter().map(|c| c + scale * rng.random_range(-1.0..1.0)).collect();
            let p = Comparator::expansion(k.clone(), xs.clone(), coeffs).unwrap();
            prop_assert!(ridge_objective(&p, &xs, &ys, lambda).unwrap() >= best - 1e-8);
        }
    }

    #[test]
    fn averaged_rule_risk_is_at_most_mean_snapshot_risk(kind in 0usize..9, n in 1usize..60, seed in any::<u64>(), plain in any::<bool>()) {
        let k = builtin(kind, 1.0);
        let alg = if plain { Algorithm::AlnPlain } else { Algorithm::Aln };
        let (xs, ys): (Vec<_>, Vec<_>) = game_data(&k, 1.0, n, seed).into_iter().unzip();
        let rule = averaged_rule(alg, k.clone(), 1.0, &xs, &ys).unwrap();
        let test = synth_iid("uniform-smooth", &k, 1.0, 500, seed.wrapping_add(1)).unwrap();
        let (mut avg_risk, mut snap_risk) = (0.0, 0.0);
        for (x, y) in &test {
            let snaps = rule.snapshots(x).unwrap();
            let mean = snaps.iter().sum::<f64>() / snaps.len() as f64;
            avg_risk += (y - mean).powi(2);
            snap_risk += snaps.iter().map(|h| (y - h).powi(2)).sum::<f64>() / snaps.len() as f64;
        }
        prop_assert!(avg_risk <= snap_risk + 1e-9 * snap_risk.max(1.0));
    }

    #[test]
    fn audit_replay_is_deterministic(seed in any::<u64>(), alg in prop_oneof![Just("aln"), Just("k29"), Just("kaar:1")]) {
        let k = Kernel::fermi_sobolev();
        let data = game_data(&k, 1.0, 40, seed);
        let go = || {
            let t = run_game(alg, "fermi-sobolev", 1.0, &mut LabelFlips::new(data.clone(), 0.3, 1.0, seed), Some(seed)).unwrap();
            let b = standard_battery(&k, &t, seed).unwrap();
            (t.clone(), audit(&t, &k, 1.0, &b).unwrap())
        };
        let (t1, r1) = go();
        let (t2, r2) = go();
        prop_assert_eq!(&t1, &t2);
        prop_assert_eq!(&r1.to_csv(), &r2.to_csv());
        prop_assert_eq!(GameTranscript::from_csv(&t1.to_csv()).unwrap(), t1);
    }
}

#[test]
fn lower_bound_equality_for_the_zero_predictor() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..50 {
        let c = rng.random_range(0.2..3.0);
        let y = rng.random_range(0.2..3.0);
        let n = rng.random_range(1..=100usize);
        let d = y / c * (n as f64).sqrt();
        let run = rkhs_regret::harness::adversary_thm4("zero", c, y, n, d).unwrap();
        assert!((run.check.alpha - 1.0).abs() < 1e-12);
        let independent = 2.0 * y * c * d * (n as f64).sqrt() - c * c * d * d;
        let scale = (y * y * n as f64).max(1.0);
        assert!((run.check.excess - independent).abs() <= 1e-9 * scale, "{:?}", run.check);
        assert!(run.check.holds());
    }
}
