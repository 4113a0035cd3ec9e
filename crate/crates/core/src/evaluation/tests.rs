use super::*;
use crate::dataset::{Range, Split};
use crate::fields::FieldKind;
use crate::nets::{GeneratorConfig, Variant};
use crate::test_support::{heavy, synthetic_split};
use crate::training::TrainConfig;

#[test]
fn diff_and_rmse_examples() {
    assert_eq!(diff_field(&[1.0, -2.0, 3.0], &[0.5, 1.0, 3.0]).unwrap(), vec![0.5, 3.0, 0.0]);
    assert!(diff_field(&[1.0], &[1.0, 2.0]).is_err());
    assert_eq!(relative_rmse(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
    assert_eq!(relative_rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 1.0);
    assert_eq!(relative_rmse(&[3.0, 4.0], &[3.0, 0.0]).unwrap(), 0.8);
    assert!(relative_rmse(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    assert!(relative_rmse(&[], &[]).is_err());
}

#[test]
fn diff_is_symmetric_absolute_difference() {
    assert_eq!(diff_field(&[1000.0], &[900.0]).unwrap(), vec![100.0]);
    let a = [0.5, -3.0, 7.25, 1e-12];
    let b = [2.0, -3.5, 7.25, -1e-12];
    assert_eq!(diff_field(&a, &b).unwrap(), diff_field(&b, &a).unwrap());
    assert!(diff_field(&a, &b).unwrap().iter().all(|&d| d >= 0.0));
}

#[test]
fn rmse_is_scale_invariant() {
    let x = [1.5, -2.25, 0.75, 4.0];
    let y = [1.0, -2.0, 1.0, 3.5];
    let base = relative_rmse(&x, &y).unwrap();
    for s in [0.25, 2.0, 1024.0] {
        let xs: Vec<f64> = x.iter().map(|v| v * s).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * s).collect();
        assert_eq!(relative_rmse(&xs, &ys).unwrap(), base);
    }
}

#[test]
fn box_stats_example() {
    let b = box_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
    assert_eq!((b.q25, b.q50, b.q75), (2.0, 3.0, 4.0));
    assert_eq!(b.mean, 22.0);
    assert_eq!(b.outliers, vec![4]);
    assert_eq!((b.whisker_low, b.whisker_high), (1.0, 4.0));
    assert_eq!((b.min, b.max), (1.0, 100.0));
    assert!(box_stats(&[]).is_err());
    assert!(box_stats(&[1.0, f64::NAN]).is_err());
}

#[test]
fn oracle_predictor_scores_zero() {
    let data = synthetic_split(Split::Test, 3, 2, 1);
    for v in [Variable::Pressure, Variable::Displacement] {
        let m = evaluate_with(&data, v, |r| Ok((0..r.nt()).flat_map(|n| v.target(r, n).to_vec()).collect())).unwrap();
        assert!(m.per_sample.iter().all(|&e| e == 0.0));
        assert_eq!(m.pooled, 0.0);
        assert_eq!(m.summary.n, 3);
    }
}

#[test]
fn constant_predictor_is_deterministic_and_positive() {
    let data = synthetic_split(Split::Test, 3, 2, 2);
    let run = || evaluate_with(&data, Variable::Pressure, |r| Ok(vec![0.5; r.nt() * r.pixels()])).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.per_sample.iter().all(|&e| e > 0.0 && e.is_finite()));
    let wrong = evaluate_with(&data, Variable::Pressure, |_| Ok(vec![0.5; 3]));
    assert!(matches!(wrong, Err(Error::Shape(_))));
}

#[test]
fn summary_mean_matches_per_sample_mean() {
    let data = synthetic_split(Split::Test, 5, 2, 4);
    let mut calls = 0usize;
    let m = evaluate_with(&data, Variable::Displacement, |r| {
        calls += 1;
        Ok(vec![0.1 * calls as f32; r.nt() * 2 * r.pixels()])
    })
    .unwrap();
    let mean = m.per_sample.iter().sum::<f64>() / m.per_sample.len() as f64;
    assert!((m.summary.mean - mean).abs() <= 1e-12);
    assert_eq!(m.field_ids, data.records.iter().map(|r| r.field_id.clone()).collect::<Vec<_>>());
}

#[test]
fn csv_and_plots_are_written() {
    let data = synthetic_split(Split::Validation, 4, 1, 3);
    let m = evaluate_with(&data, Variable::Pressure, |r| Ok(vec![0.4; r.pixels()])).unwrap();
    let csv = per_sample_csv(&m);
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("field_id,relative_rmse\n"));
    let dir = tempfile::tempdir().unwrap();
    write_metrics(dir.path(), &m).unwrap();
    let back: SplitMetrics = io::read_json(&dir.path().join("metrics.json")).unwrap();
    assert_eq!(back, m);

    let a = vec![0.0, 1.0, 2.0, 3.0];
    let b = vec![1.0; 4];
    let png = dir.path().join("panels.png");
    write_panels(&png, &[&a, &b], 2, 2, 3).unwrap();
    let img = image::open(&png).unwrap();
    assert_eq!((img.width(), img.height()), (2 * 6 + 4, 6));
    assert!(write_panels(&png, &[&a[..3]], 2, 2, 1).is_err());

    let h = EpochMetrics {
        epoch: 1,
        per_sample: m.per_sample.clone(),
        summary: m.summary.clone(),
        mean_critic_loss: 0.0,
        mean_generator_loss: 0.0,
        mean_reconstruction: 0.0,
        wall_time: 0.0,
    };
    let hist = dir.path().join("history.png");
    write_history_plot(&hist, &[h.clone(), h]).unwrap();
    assert!(image::open(&hist).is_ok());
}

#[test]
fn timing_report_speedup() {
    let r = timing_report(&[("fom".into(), 10.0)], 30.0, 100.0, 0.05, 60);
    assert!((r.speedup - 10.0).abs() < 1e-12);
    let csv = timing_csv(&r);
    assert!(csv.contains("speedup,10.000"));
}

fn surrogate() -> Surrogate {
    let g = Generator::new(&GeneratorConfig::new(Variant::Nli, 1), 5).unwrap();
    let stats = NormalizationStats {
        log_k: Range { min: -14.0, max: -12.0 },
        t: Range { min: 0.0, max: 225.0 },
        p: Range { min: 0.0, max: 1000.0 },
        ux: Range { min: -1e-5, max: 1e-5 },
        uy: Range { min: -4e-5, max: 0.0 },
    };
    let ck = Checkpoint::from_generator(&g, Variable::Pressure, &stats, &TrainConfig::default(), 0, 0, None);
    Surrogate::from_checkpoint(&ck).unwrap()
}

fn field() -> PermeabilityField {
    let grid = GridSpec::square(64, 1.0);
    let k = (0..grid.len()).map(|c| 10f64.powf(-13.0 + 0.5 * ((c % 64) as f64 / 10.0).sin())).collect();
    PermeabilityField { id: "probe".into(), kind: FieldKind::ZinnHarvey, grid, k }
}

#[test]
fn prediction_time_domain_and_determinism() {
    let _heavy = heavy();
    let model = surrogate();
    let f = field();
    for bad in [0.0, -1.0, 300.0, f64::NAN] {
        assert!(matches!(predict_at_time(&model, &f, &[bad]), Err(Error::OutOfDomain(_))));
    }
    let p = predict_at_time(&model, &f, &[25.0, 112.5, 225.0]).unwrap();
    assert_eq!(p.values.len(), 3);
    assert!(p.values.iter().all(|v| v.len() == RESOLUTION * RESOLUTION && v.iter().all(|x| (0.0..=1000.0).contains(x))));
    let again = predict_at_time(&model, &f, &[25.0, 112.5, 225.0]).unwrap();
    assert_eq!(p.normalized, again.normalized);

    let near = predict_at_time(&model, &f, &[112.5 + 1e-4]).unwrap();
    let step = p.normalized[1].iter().zip(&near.normalized[0]).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(step < 1e-2, "prediction jumps by {step} over 1e-4 s");

    let dir = tempfile::tempdir().unwrap();
    let m = write_prediction(dir.path(), &p).unwrap();
    assert_eq!(m.shape, [3, 1, RESOLUTION, RESOLUTION]);
    let back = io::read_f32(&dir.path().join("values.f32"), 3 * RESOLUTION * RESOLUTION, Some(&m.checksum)).unwrap();
    assert_eq!(back[RESOLUTION * RESOLUTION], p.values[1][0] as f32);
    assert!(dir.path().join("t2.png").exists());
}
