mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use fdvied::dataset::{build_dataset, BuildConfig, CaseCount, DatasetManifest, Split, MANIFEST_FILE};
use fdvied::eval::{average_reports, evaluate_run, Aggregation, EvalOptions, SampleErrorKind};
use fdvied::raster::Mask;
use fdvied::synth::synth_corpus;
use fdvied::CaseKey;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_miou, random_mask};

fn dataset(dir: &Path) -> DatasetManifest {
    let corpus = synth_corpus(8, 12);
    let cfg = BuildConfig::new(CaseKey::ALL.iter().map(|&case| CaseCount { case, train: 1, test: 3 }).collect(), 77);
    build_dataset(&cfg, &corpus, dir).unwrap().manifest
}

fn write_preds(m: &DatasetManifest, root: &Path, pred: &Path, f: impl Fn(&Mask, usize) -> Mask) {
    for (i, e) in m.entries.iter().enumerate() {
        let gt = Mask::load_png(&root.join(&e.mask_path)).unwrap();
        let out = pred.join(&e.mask_path);
        fs::create_dir_all(out.parent().unwrap()).unwrap();
        f(&gt, i).save_png(&out).unwrap();
    }
}

#[test]
fn ground_truth_predictions_score_one_and_empty_predictions_score_chance() {
    let data = tempfile::tempdir().unwrap();
    let m = dataset(data.path());
    let mp = data.path().join(MANIFEST_FILE);

    let perfect = tempfile::tempdir().unwrap();
    write_preds(&m, data.path(), perfect.path(), |gt, _| gt.clone());
    let r = evaluate_run(&m, &mp, perfect.path(), &EvalOptions::default()).unwrap();
    assert!(r.errors.is_empty());
    assert_eq!(r.per_case.len(), 9);
    assert!(r.per_case.iter().all(|c| c.miou == 1.0 && c.n_samples == 3));
    assert_eq!((r.overall, r.n_samples), (1.0, 27));

    let blank = tempfile::tempdir().unwrap();
    write_preds(&m, data.path(), blank.path(), |gt, _| Mask::zeros(gt.width(), gt.height()));
    let r = evaluate_run(&m, &mp, blank.path(), &EvalOptions::default()).unwrap();
    let mut want: BTreeMap<CaseKey, Vec<f64>> = BTreeMap::new();
    for e in m.entries.iter().filter(|e| e.split == Split::Test) {
        let f = Mask::load_png(&data.path().join(&e.mask_path)).unwrap().fraction();
        want.entry(e.record.case).or_default().push((1.0 - f) / 2.0);
    }
    for c in &r.per_case {
        let v = &want[&c.case];
        assert!((c.miou - v.iter().sum::<f64>() / v.len() as f64).abs() < 1e-12);
        assert_eq!(c.iou_forged, 0.0);
    }
}

#[test]
fn aggregation_matches_independent_recomputation() {
    let data = tempfile::tempdir().unwrap();
    let m = dataset(data.path());
    let mp = data.path().join(MANIFEST_FILE);
    let pred = tempfile::tempdir().unwrap();
    write_preds(&m, data.path(), pred.path(), |gt, i| {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let noise = random_mask(&mut rng, gt.width(), gt.height(), 0.01);
        // Half the ground truth plus sparse noise.
        let mut p = noise;
        for y in 0..gt.height() {
            for x in 0..gt.width() {
                if gt.get(x, y) && (x + y) % 2 == 0 {
                    p.set(x, y, true);
                }
            }
        }
        p
    });

    for split in [Some(Split::Test), Some(Split::Train), None] {
        let mut per_case: BTreeMap<CaseKey, Vec<f64>> = BTreeMap::new();
        let mut pooled: BTreeMap<CaseKey, (u64, u64, u64, u64)> = BTreeMap::new();
        for e in m.entries.iter().filter(|e| split.is_none_or(|s| e.split == s)) {
            let gt = Mask::load_png(&data.path().join(&e.mask_path)).unwrap();
            let p = Mask::load_png(&pred.path().join(&e.mask_path)).unwrap();
            per_case.entry(e.record.case).or_default().push(brute_miou(&p, &gt));
            let acc = pooled.entry(e.record.case).or_default();
            for (a, b) in p.as_raw().iter().zip(gt.as_raw()) {
                let (a, b) = (*a != 0, *b != 0);
                acc.0 += (a && b) as u64;
                acc.1 += (a || b) as u64;
                acc.2 += (!a && !b) as u64;
                acc.3 += (!a || !b) as u64;
            }
        }
        let opts = EvalOptions { split, ..EvalOptions::default() };
        let r = evaluate_run(&m, &mp, pred.path(), &opts).unwrap();
        let means: Vec<f64> = per_case.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
        for (c, want) in r.per_case.iter().zip(&means) {
            assert!((c.miou - want).abs() < 1e-12);
        }
        let overall = means.iter().sum::<f64>() / means.len() as f64;
        assert!((r.overall - overall).abs() < 1e-12);
        let n: usize = per_case.values().map(|v| v.len()).sum();
        let weighted = per_case.values().map(|v| v.iter().sum::<f64>()).sum::<f64>() / n as f64;
        assert!((r.overall_weighted - weighted).abs() < 1e-12);

        let r = evaluate_run(&m, &mp, pred.path(), &EvalOptions { aggregation: Aggregation::Pooled, ..opts }).unwrap();
        for c in &r.per_case {
            let (i_f, u_f, i_a, u_a) = pooled[&c.case];
            let want = (i_f as f64 / u_f as f64 + i_a as f64 / u_a as f64) / 2.0;
            assert!((c.miou - want).abs() < 1e-12);
        }
    }
}

#[test]
fn missing_and_malformed_predictions_are_reported() {
    let data = tempfile::tempdir().unwrap();
    let m = dataset(data.path());
    let mp = data.path().join(MANIFEST_FILE);
    let pred = tempfile::tempdir().unwrap();
    write_preds(&m, data.path(), pred.path(), |gt, _| gt.clone());
    let test: Vec<_> = m.entries.iter().filter(|e| e.split == Split::Test).collect();
    fs::remove_file(pred.path().join(&test[0].mask_path)).unwrap();
    Mask::zeros(3, 3).save_png(&pred.path().join(&test[1].mask_path)).unwrap();

    let r = evaluate_run(&m, &mp, pred.path(), &EvalOptions::default()).unwrap();
    let kinds: Vec<SampleErrorKind> = r.errors.iter().map(|e| e.kind).collect();
    assert!(kinds.contains(&SampleErrorKind::MissingPrediction));
    assert!(kinds.contains(&SampleErrorKind::DimensionMismatch));
    assert_eq!(r.n_samples, test.len() - 2);

    let lenient = evaluate_run(&m, &mp, pred.path(), &EvalOptions { allow_missing: true, ..EvalOptions::default() }).unwrap();
    assert!(lenient.errors.iter().all(|e| e.kind != SampleErrorKind::MissingPrediction));
    assert!(lenient.errors.iter().any(|e| e.kind == SampleErrorKind::DimensionMismatch));
}

#[test]
fn repeated_runs_are_averaged_per_cell() {
    let data = tempfile::tempdir().unwrap();
    let m = dataset(data.path());
    let mp = data.path().join(MANIFEST_FILE);
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (k, d) in dirs.iter().enumerate() {
        write_preds(&m, data.path(), d.path(), |gt, i| {
            let mut rng = ChaCha8Rng::seed_from_u64((k * 1000 + i) as u64);
            random_mask(&mut rng, gt.width(), gt.height(), 0.02 * (k + 1) as f64)
        });
    }
    let reports: Vec<_> = dirs.iter().map(|d| evaluate_run(&m, &mp, d.path(), &EvalOptions::default()).unwrap()).collect();
    let avg = average_reports(&reports).unwrap();
    assert_eq!(avg.runs, 3);
    for (i, c) in avg.per_case.iter().enumerate() {
        let want = reports.iter().map(|r| r.per_case[i].miou).sum::<f64>() / 3.0;
        assert!((c.miou - want).abs() < 1e-12);
    }
    let want = reports.iter().map(|r| r.overall).sum::<f64>() / 3.0;
    assert!((avg.overall - want).abs() < 1e-12);
}
