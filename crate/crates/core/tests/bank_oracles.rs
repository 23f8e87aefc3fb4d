use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use res_scan_core::bank::{
    anomaly_score, build_bank, calibrate_threshold, classify, Calibration, FeatureBank, Label,
    Origin, PatchSpec, Provenance,
};
use res_scan_core::gpr::{BScanFrame, Grid};
use res_scan_core::reservoir::{build_reservoir, fit_patch, DynamicFeature, ReservoirConfig};
use res_scan_core::Error;

fn brute_min(bank: &[Vec<f64>], q: &[f64]) -> f64 {
    bank.iter()
        .map(|b| b.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn anomaly_score_is_brute_force_min_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = build_reservoir(&ReservoirConfig { n: 3, ..ReservoirConfig::default() }).unwrap();
    for &size in &[1usize, 7, 500, 10_000] {
        let vectors: Vec<Vec<f64>> = (0..size)
            .map(|_| (0..7).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let prov = (0..size)
            .map(|i| Provenance { frame_id: format!("f{i}"), origin: Origin { x: i, y: 0 } })
            .collect();
        let bank = FeatureBank::from_vectors(vectors.clone(), prov, w.fingerprint(), PatchSpec::default(), 0.01).unwrap();
        for _ in 0..20 {
            let q: Vec<f64> = (0..7).map(|_| rng.random_range(-1.5..1.5)).collect();
            let f = DynamicFeature::from_vec(q.clone(), Some(w.fingerprint())).unwrap();
            assert_eq!(anomaly_score(&f, &bank).unwrap(), brute_min(&vectors, &q));
        }
    }
}

#[test]
fn bank_member_scores_zero_and_foreign_features_rejected() {
    let w = build_reservoir(&ReservoirConfig { n: 4, ..ReservoirConfig::default() }).unwrap();
    let other = build_reservoir(&ReservoirConfig { n: 4, seed: 1, ..ReservoirConfig::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let frame = BScanFrame::new("a", Grid::from_fn(20, 20, |_, _| rng.random_range(-1.0..1.0)));
    let spec = PatchSpec::new(8, 8, 4).unwrap();
    let bank = build_bank(&[frame.clone()], &w, &spec, 0.01).unwrap();
    let patch = frame.grid.crop(&res_scan_core::Region::new(4, 11, 8, 15).unwrap()).unwrap();
    let f = fit_patch(&patch, &w, 0.01).unwrap();
    assert_eq!(anomaly_score(&f, &bank).unwrap(), 0.0);
    let foreign = fit_patch(&patch, &other, 0.01).unwrap();
    assert!(matches!(anomaly_score(&foreign, &bank), Err(Error::FingerprintMismatch { .. })));
}

#[test]
fn bank_build_is_order_independent_and_round_trips() {
    let w = build_reservoir(&ReservoirConfig { n: 3, ..ReservoirConfig::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let frames: Vec<BScanFrame> = (0..3)
        .map(|i| BScanFrame::new(format!("f{i}"), Grid::from_fn(16, 12, |_, _| rng.random_range(-1.0..1.0))))
        .collect();
    let spec = PatchSpec::new(6, 6, 3).unwrap();
    let a = build_bank(&frames, &w, &spec, 0.01).unwrap();
    let reversed: Vec<BScanFrame> = frames.iter().rev().cloned().collect();
    let b = build_bank(&reversed, &w, &spec, 0.01).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    let mut c = FeatureBank::from_bytes(&a.to_bytes()).unwrap();
    assert_eq!(c, a);
    c.set_beta(0.25);
    assert_eq!(FeatureBank::from_bytes(&c.to_bytes()).unwrap().beta(), Some(0.25));
    assert!(build_bank(&[], &w, &spec, 0.01).is_err());
}

#[test]
fn leave_one_out_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vectors: Vec<Vec<f64>> = (0..60).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let prov: Vec<Provenance> = (0..60)
        .map(|i| Provenance { frame_id: format!("f{}", i % 4), origin: Origin { x: i, y: 0 } })
        .collect();
    let bank = FeatureBank::from_vectors(vectors, prov, res_scan_core::reservoir::Fingerprint([0; 32]), PatchSpec::default(), 0.01).unwrap();
    let loo = bank.leave_one_out_scores();
    let lofo = bank.leave_one_frame_out_scores();
    for i in 0..bank.len() {
        let others: Vec<Vec<f64>> = (0..bank.len()).filter(|&j| j != i).map(|j| bank.vector(j).to_vec()).collect();
        assert_eq!(loo[i], brute_min(&others, bank.vector(i)));
        let foreign: Vec<Vec<f64>> = (0..bank.len())
            .filter(|&j| bank.provenance(j).frame_id != bank.provenance(i).frame_id)
            .map(|j| bank.vector(j).to_vec())
            .collect();
        assert_eq!(lofo[i], brute_min(&foreign, bank.vector(i)));
        assert!(lofo[i] >= loo[i]);
    }
}

#[test]
fn classify_is_monotone_in_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let s = rng.random_range(0.0..2.0);
        let b1 = rng.random_range(0.0..2.0);
        let b2 = rng.random_range(0.0..2.0);
        let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
        if classify(s, hi) == Label::Abnormal {
            assert_eq!(classify(s, lo), Label::Abnormal);
        }
        assert_eq!(classify(s, s), Label::Normal);
    }
}

#[test]
fn quantile_calibration_cases() {
    let scores: Vec<f64> = (0..100).map(f64::from).collect();
    assert_eq!(calibrate_threshold(&scores, Calibration::Quantile { q: 0.99 }).unwrap(), 99.0);
    assert_eq!(calibrate_threshold(&scores, Calibration::Quantile { q: 0.0 }).unwrap(), 0.0);
    assert_eq!(calibrate_threshold(&scores, Calibration::Quantile { q: 1.0 }).unwrap(), 99.0);
    let constant = vec![0.5; 30];
    assert_eq!(calibrate_threshold(&constant, Calibration::MeanPlusKSigma { k: 3.0 }).unwrap(), 0.5);
    assert!(calibrate_threshold(&scores[..9], Calibration::default()).is_err());
}
