use super::*;
use crate::corpus::{generate_synthetic_corpus, DatasetSplit, SynthesisConfig};
use crate::error::Error;
use crate::metrics::EvalReport;

fn small_data() -> DatasetSplit {
    let cfg = SynthesisConfig {
        train_count: 40,
        dev_count: 10,
        test_count: 10,
        seed: 5,
        ..SynthesisConfig::default()
    };
    generate_synthetic_corpus(&cfg).unwrap()
}

fn small_cfg(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: "synthetic".into(),
        out_dir: out.to_path_buf(),
        hidden_size: 16,
        heads: 2,
        intermediate_size: 32,
        max_steps: 12,
        eval_interval: 5,
        warmup_steps: 3,
        ..ExperimentConfig::default()
    }
}

fn report(sa: f64, f1: f64) -> EvalReport {
    EvalReport {
        n: 10,
        tp: 0,
        fp: 0,
        fn_: 0,
        sa,
        precision: f1,
        recall: f1,
        f1,
        gm: (sa * f1).sqrt(),
    }
}

fn record(lambda: f64, dev: EvalReport, test: EvalReport) -> RunRecord {
    RunRecord {
        config: ExperimentConfig::default(),
        lambda_span: lambda,
        curve: vec![],
        best_step: 0,
        dev,
        test,
        checkpoint: CHECKPOINT_FILE.into(),
    }
}

#[test]
fn schedule_is_seeded_permutation() {
    let a = batch_schedule(10, 4, 1, 6);
    assert_eq!(a.len(), 6);
    assert_eq!(a, batch_schedule(10, 4, 1, 6));
    assert_ne!(a, batch_schedule(10, 4, 2, 6));
    let mut epoch: Vec<usize> = a[..3].concat();
    assert_eq!(a[2].len(), 2);
    epoch.sort_unstable();
    assert_eq!(epoch, (0..10).collect::<Vec<_>>());
    assert!(batch_schedule(0, 4, 1, 6).is_empty());
}

#[test]
fn lambda_zero_never_computes_span_loss() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(dir.path());
    let mut t = Trainer::new(&cfg, &data.train, tagset_for(&data)).unwrap();
    for idx in batch_schedule(data.train.len(), 4, 0, 5) {
        let batch: Vec<_> = idx.iter().map(|&i| &data.train[i]).collect();
        let loss = t.step(&batch).unwrap();
        assert_eq!((loss.span, loss.span_reg, loss.span_hard), (0.0, 0.0, 0.0));
        assert_eq!(loss.total, loss.slot);
    }
    let mut with_span = ExperimentConfig { lambda_span: 0.5, ..cfg };
    with_span.mining_policy = "surface-match".into();
    let mut t = Trainer::new(&with_span, &data.train, tagset_for(&data)).unwrap();
    let batch: Vec<_> = data.train.iter().take(8).collect();
    let loss = t.step(&batch).unwrap();
    assert!(loss.eligible_anchors > 0 && loss.span > 0.0);
    assert!((loss.total - (loss.slot + 0.5 * loss.span)).abs() < 1e-12);
}

#[test]
fn runs_are_deterministic_and_write_files() {
    let data = small_data();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(a.path());
    cfg.lambda_span = 0.3;
    let ra = train_on(&cfg, &data).unwrap();
    cfg.out_dir = b.path().to_path_buf();
    let rb = train_on(&cfg, &data).unwrap();
    assert_eq!(ra.curve, rb.curve);
    assert_eq!((ra.dev, ra.test), (rb.dev, rb.test));
    assert_eq!(ra.curve.iter().map(|p| p.step).collect::<Vec<_>>(), vec![5, 10, 12]);
    for f in [CHECKPOINT_FILE, RECORD_FILE, RESOLVED_CONFIG_FILE, TIMING_FILE] {
        assert!(a.path().join(f).exists(), "{f}");
    }
    assert_eq!(
        std::fs::read(a.path().join(CHECKPOINT_FILE)).unwrap(),
        std::fs::read(b.path().join(CHECKPOINT_FILE)).unwrap()
    );
    // the selected checkpoint reproduces the recorded test report
    let model = crate::encoder::TaggerModel::load(&a.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(evaluate_model(&model, &data.test).unwrap().0, ra.test);
}

#[test]
fn nonfinite_loss_aborts_with_dump() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(dir.path());
    let mut t = Trainer::new(&cfg, &data.train, tagset_for(&data)).unwrap();
    t.model.params.get_mut("head.bias").unwrap().data[0] = f64::NAN;
    let batch: Vec<_> = data.train.iter().take(2).collect();
    match t.step(&batch) {
        Err(Error::NonFiniteLoss { step: 1, dump }) => {
            let text = std::fs::read_to_string(dump).unwrap();
            assert!(text.contains(&data.train[0].id));
        }
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn lambda_selection_rules() {
    let recs = vec![
        record(0.0, report(0.5, 0.6), report(0.5, 0.6)),
        record(0.1, report(0.7, 0.6), report(0.5, 0.6)),
        record(0.2, report(0.7, 0.9), report(0.5, 0.6)),
    ];
    assert_eq!(select_lambda(&recs, |r| r.sa), Some(0.1));
    assert_eq!(select_lambda(&recs, |r| r.f1), Some(0.2));
    let flat: Vec<_> = [0.3, 0.0, 0.5].iter().map(|&l| record(l, report(0.4, 0.4), report(0.4, 0.4))).collect();
    assert_eq!(select_lambda(&flat, |r| r.sa), Some(0.0));
    assert_eq!(select_lambda(&flat[1..2], |r| r.f1), Some(0.0));
    assert_eq!(default_lambda_grid().len(), 11);
    assert_eq!(lambda_dir(0.1 + 0.2), "lambda-0.3");
}

#[test]
fn ablation_runs_every_grid_point() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    cfg.max_steps = 3;
    cfg.eval_interval = 3;
    let ab = ablate_lambda(&cfg, &data, &[0.0, 0.5]).unwrap();
    assert_eq!(ab.records.len(), 2);
    assert!(dir.path().join("lambda-0.5").join(RECORD_FILE).exists());
    assert!(ablate_lambda(&cfg, &data, &[]).is_err());
    let single = ablate_lambda(&cfg, &data, &[0.0]).unwrap();
    assert_eq!((single.best_by_sa, single.best_by_f1), (0.0, 0.0));
}

#[test]
fn generalization_delta_sign() {
    let r = record(0.0, report(0.94, 0.5), report(0.9481, 0.4));
    let (dsa, df1) = generalization_delta(&r);
    assert!((dsa - 0.0081).abs() < 1e-12);
    assert!((df1 + 0.1).abs() < 1e-12);
    assert_eq!(generalization_delta(&record(0.0, report(0.3, 0.3), report(0.3, 0.3))), (0.0, 0.0));
}

#[test]
fn cross_evaluation_shape_and_class_check() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    cfg.max_steps = 2;
    let rec = train_on(&cfg, &data).unwrap();
    let model = crate::encoder::TaggerModel::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    let models = vec![("a".to_string(), model.clone()), ("b".to_string(), model.clone())];
    let sets = vec![("x".to_string(), data.clone()), ("y".to_string(), data.clone())];
    let m = cross_evaluate(&models, &sets).unwrap();
    assert_eq!((m.test.len(), m.test[0].len()), (2, 2));
    assert_eq!(m.test[0][0], rec.test);
    assert_eq!(m.dev[1][1], rec.dev);

    let mut other = data.clone();
    other.test[0].labels[0] = "B-metaphor".parse().unwrap();
    match cross_evaluate(&models, &[("z".to_string(), other)]) {
        Err(Error::MissingClass { class, dataset }) => assert_eq!((class.as_str(), dataset.as_str()), ("metaphor", "z")),
        other => panic!("{other:?}"),
    }

    let out = tempfile::tempdir().unwrap();
    emit_reports(Some(&m), &[("a".into(), rec.clone())], out.path()).unwrap();
    let table = std::fs::read_to_string(out.path().join("cross_eval_test.txt")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 + 2);
    // three slashes per cell plus three in the legend line
    assert_eq!(table.matches('/').count(), 2 * 2 * 3 + 3);
    let first = std::fs::read(out.path().join("results.json")).unwrap();
    emit_reports(Some(&m), &[("a".into(), rec)], out.path()).unwrap();
    assert_eq!(first, std::fs::read(out.path().join("results.json")).unwrap());
}

#[test]
fn empty_matrix_gives_header_only_table() {
    let m = CrossEvalMatrix {
        models: vec![],
        datasets: vec!["x".into(), "y".into()],
        dev: vec![],
        test: vec![],
    };
    let out = tempfile::tempdir().unwrap();
    emit_reports(Some(&m), &[], out.path()).unwrap();
    let table = std::fs::read_to_string(out.path().join("cross_eval_test.txt")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(out.path().join("ablation.csv")).unwrap().lines().count(), 1);
}
