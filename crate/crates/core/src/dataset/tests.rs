use super::*;
use proptest::prelude::*;

fn record(id: &str, h: usize, w: usize, nt: usize, seed: u64) -> PhysicalRecord {
    let hw = h * w;
    let f = |i: usize, s: f64| ((i as f64 + seed as f64) * s).sin();
    PhysicalRecord {
        field_id: id.into(),
        height: h,
        width: w,
        log_k: (0..hw).map(|i| -13.0 + f(i, 0.37)).collect(),
        t: (1..=nt).map(|n| 25.0 * n as f64).collect(),
        p: (0..nt * hw).map(|i| 500.0 + 500.0 * f(i, 0.11)).collect(),
        u: (0..2 * nt * hw).map(|i| 1e-5 * f(i, 0.07)).collect(),
    }
}

fn sample(rng: u64, h: usize, w: usize, nt: usize) -> SampleRecord {
    let stats = compute_stats(&[record("a", h, w, nt, rng), record("b", h, w, nt, rng + 1)]).unwrap();
    normalize(&record(&format!("id-{rng}"), h, w, nt, rng), &stats).unwrap().0
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("zh-{i:08}")).collect()
}

#[test]
fn spline_matches_reference_values() {
    // Frozen from an independent not-a-knot implementation.
    let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
    let s = SplineMatrix::cubic(&x, &[2.5, -0.5, 5.3]).unwrap().apply(&y);
    for (a, b) in s.iter().zip([0.596_666_840_611_974_1, -0.629_798_547_738_369_6, -0.763_365_552_878_321_3]) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
    let x: Vec<f64> = (0..8).map(|i| i as f64 + 0.5).collect();
    let y: Vec<f64> = x.iter().map(|v| (-v).exp() * (2.0 * v).cos()).collect();
    let s = SplineMatrix::cubic(&x, &[0.25, 4.0, 7.75]).unwrap().apply(&y);
    for (a, b) in s.iter().zip([0.750_393_530_313_263_1, -0.002_120_109_070_260_513, 0.001_175_218_819_380_399]) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
}

#[test]
fn four_knot_spline_is_the_interpolating_cubic() {
    let x = [0.0, 0.7, 1.1, 2.0];
    let y = [1.0, -0.5, 0.25, 3.0];
    // Newton divided differences.
    let mut d = y.to_vec();
    for k in 1..4 {
        for i in (k..4).rev() {
            d[i] = (d[i] - d[i - 1]) / (x[i] - x[i - k]);
        }
    }
    let newton = |t: f64| ((d[3] * (t - x[2]) + d[2]) * (t - x[1]) + d[1]) * (t - x[0]) + d[0];
    let targets = [-0.3, 0.2, 0.9, 1.5, 2.4];
    let s = SplineMatrix::cubic(&x, &targets).unwrap().apply(&y);
    for (v, &t) in s.iter().zip(&targets) {
        assert!((v - newton(t)).abs() < 1e-12);
    }
}

#[test]
fn identity_resampling_is_bitwise() {
    let g = GridSpec::square(16, 1.0);
    let r = Rasterizer::new(g, g).unwrap();
    let f: Vec<f64> = (0..256).map(|i| (i as f64 * 0.3).sin() * 1e-7).collect();
    assert_eq!(r.apply(&f), f);
}

#[test]
fn constants_and_bilinear_functions_are_reproduced() {
    let src = GridSpec::square(64, 1.0);
    let dst = GridSpec::square(128, 1.0);
    let r = Rasterizer::new(src, dst).unwrap();
    let c = r.apply(&vec![-12.75; src.len()]);
    assert!(c.iter().all(|&v| (v + 12.75).abs() < 1e-12));
    let (xs, ys) = (src.xc(), src.yc());
    let f: Vec<f64> = (0..src.len()).map(|i| 2.0 * xs[i % 64] + 3.0 * ys[i / 64]).collect();
    let (xd, yd) = (dst.xc(), dst.yc());
    for (i, v) in r.apply(&f).iter().enumerate() {
        assert!((v - (2.0 * xd[i % 128] + 3.0 * yd[i / 128])).abs() < 1e-10);
    }
    let f: Vec<f64> = (0..src.len()).map(|i| xs[i % 64].powi(3) - 2.0 * ys[i / 64].powi(2) * xs[i % 64]).collect();
    for (i, v) in r.apply(&f).iter().enumerate() {
        let (x, y) = (xd[i % 128], yd[i / 128]);
        assert!((v - (x.powi(3) - 2.0 * y * y * x)).abs() < 1e-10);
    }
}

#[test]
fn mismatched_domains_are_unsupported() {
    let a = GridSpec::square(8, 1.0);
    let b = GridSpec { nx: 16, ny: 16, lx: 2.0, ly: 1.0 };
    assert!(matches!(Rasterizer::new(a, b), Err(Error::Config(_))));
}

#[test]
fn stats_examples() {
    let mut r = record("a", 4, 4, 2, 0);
    r.p = (0..32).map(|i| if i == 3 { 1000.0 } else if i == 7 { 0.0 } else { 500.0 }).collect();
    let s = compute_stats(std::slice::from_ref(&r)).unwrap();
    assert_eq!((s.p.min, s.p.max), (0.0, 1000.0));
    assert_eq!((s.t.min, s.t.max), (0.0, 50.0));
    let a = record("a", 4, 4, 3, 1);
    let b = record("b", 4, 4, 3, 9);
    let (sa, sb) = (compute_stats(std::slice::from_ref(&a)).unwrap(), compute_stats(std::slice::from_ref(&b)).unwrap());
    let s = compute_stats(&[a, b]).unwrap();
    assert_eq!(s.ux.min, sa.ux.min.min(sb.ux.min));
    assert_eq!(s.uy.max, sa.uy.max.max(sb.uy.max));
    assert_eq!(s.log_k.max, sa.log_k.max.max(sb.log_k.max));
    assert!(matches!(compute_stats(&[]), Err(Error::Data(_))));
}

#[test]
fn normalize_examples_and_clamping() {
    let train = record("a", 4, 4, 10, 3);
    let stats = compute_stats(std::slice::from_ref(&train)).unwrap();
    let (s, c) = normalize(&train, &stats).unwrap();
    assert_eq!(c.total(), 0);
    assert_eq!(s.t[0], 0.1);
    assert_eq!(s.t[9], 1.0);
    let argmin = train.p.iter().position(|&v| v == stats.p.min).unwrap();
    let argmax = train.p.iter().position(|&v| v == stats.p.max).unwrap();
    assert_eq!((s.p[argmin], s.p[argmax]), (0.0, 1.0));
    let mut val = train.clone();
    val.p[0] = 1.05 * stats.p.max;
    val.u[1] = stats.ux.min - 1.0;
    let (s, c) = normalize(&val, &stats).unwrap();
    assert_eq!((s.p[0], s.u[1]), (1.0, 0.0));
    assert_eq!((c.p, c.ux, c.total()), (1, 1, 2));
    let mut flat = stats;
    flat.p.max = flat.p.min;
    assert!(normalize(&train, &flat).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normalize_round_trip(seed in 0u64..1000, nt in 1usize..4) {
        let recs = [record("a", 5, 3, nt, seed), record("b", 5, 3, nt, seed + 7)];
        let stats = compute_stats(&recs).unwrap();
        for r in &recs {
            let back = denormalize(&normalize(r, &stats).unwrap().0, &stats).unwrap();
            let cmp = |a: &[f64], b: &[f64], range: &Range| {
                a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-6 * (range.max - range.min))
            };
            prop_assert!(cmp(&back.p, &r.p, &stats.p));
            prop_assert!(cmp(&back.log_k, &r.log_k, &stats.log_k));
            prop_assert!(cmp(&back.t, &r.t, &stats.t));
            let (ux, uy) = (stats.ux, stats.uy);
            for (ch, (a, b)) in back.u.chunks(15).zip(r.u.chunks(15)).enumerate() {
                let range = if ch % 2 == 0 { &ux } else { &uy };
                prop_assert!(cmp(a, b, range));
            }
        }
    }

    #[test]
    fn splits_are_disjoint_partitions(n in 3usize..40, seed in any::<u64>(), a in 1usize..10, b in 0usize..10, c in 0usize..10) {
        let all = ids(n);
        match build_splits(&all, a, b, c, seed) {
            Ok(s) => {
                prop_assert!(a + b + c <= n);
                let mut seen = HashSet::new();
                for m in &s {
                    for id in &m.field_ids {
                        prop_assert!(seen.insert(id.clone()));
                    }
                }
                prop_assert_eq!(seen.len(), a + b + c);
                prop_assert_eq!(s[0].field_ids.len(), a);
                prop_assert_eq!(s[2].field_ids.len(), c);
            }
            Err(_) => prop_assert!(a + b + c > n),
        }
    }

    #[test]
    fn rasterize_reproduces_cubics(n in 4usize..20, m in 4usize..40, c in -2.0f64..2.0) {
        let src = GridSpec::square(n, 1.0);
        let dst = GridSpec { nx: m, ny: m + 3, lx: 1.0, ly: 1.0 };
        let r = Rasterizer::new(src, dst).unwrap();
        let f = |x: f64, y: f64| c * x * x * x + y * y * y - x * y + 0.5;
        let v: Vec<f64> = (0..src.len()).map(|i| f(src.xc()[i % n], src.yc()[i / n])).collect();
        let out = r.apply(&v);
        for (i, o) in out.iter().enumerate() {
            prop_assert!((o - f(dst.xc()[i % m], dst.yc()[i / m])).abs() < 1e-10);
        }
    }
}

#[test]
fn split_examples() {
    let all = ids(8);
    let s = build_splits(&all, 4, 2, 2, 42).unwrap();
    let mut got: Vec<String> = s.iter().flat_map(|m| m.field_ids.clone()).collect();
    got.sort();
    assert_eq!(got, all);
    assert_eq!(build_splits(&all, 4, 2, 2, 42).unwrap(), s);
    assert_ne!(build_splits(&all, 4, 2, 2, 43).unwrap()[0].field_ids, s[0].field_ids);
    assert!(matches!(build_splits(&all, 5, 2, 2, 0), Err(Error::Config(_))));
    assert_eq!(s.map(|m| m.split), Split::ALL);
    assert_eq!("Validation".parse::<Split>().unwrap(), Split::Validation);
}

fn write_sample_split(dir: &Path, n: usize) -> (Vec<SampleRecord>, ContainerManifest) {
    let recs: Vec<SampleRecord> = (0..n as u64).map(|s| sample(s, 6, 5, 3)).collect();
    let split = SplitManifest { split: Split::Validation, field_ids: recs.iter().map(|r| r.field_id.clone()).collect(), m_train: 9, m_validation: n, m_test: 0 };
    let stats = compute_stats(&[record("a", 6, 5, 3, 0)]).unwrap();
    let m = write_container(dir, &recs, &split, &stats, ClampCounts::default()).unwrap();
    (recs, m)
}

#[test]
fn container_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (recs, m) = write_sample_split(dir.path(), 3);
    let back = read_container(dir.path()).unwrap();
    assert_eq!(back.records, recs);
    assert_eq!(back.manifest, m);
    assert_eq!(m.shapes["u"], vec![3, 3, 2, 6, 5]);
    let raw = std::fs::read(dir.path().join("p.f32")).unwrap();
    assert_eq!(raw[..4], recs[0].p[0].to_le_bytes());
}

#[test]
fn container_corruption_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    write_sample_split(dir.path(), 2);
    let p = dir.path().join("u.f32");
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
    let err = read_container(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Data(_)) && err.to_string().contains("expected"));

    write_sample_split(dir.path(), 2);
    let mut m = read_manifest(dir.path()).unwrap();
    m.field_ids.push("extra".into());
    io::write_json(&dir.path().join("manifest.json"), &m).unwrap();
    assert!(matches!(read_container(dir.path()), Err(Error::Data(_))));

    write_sample_split(dir.path(), 2);
    let p = dir.path().join("k.f32");
    let mut bytes = std::fs::read(&p).unwrap();
    bytes[..4].copy_from_slice(&0.5f32.to_le_bytes());
    std::fs::write(&p, &bytes).unwrap();
    assert!(read_container(dir.path()).unwrap_err().to_string().contains("checksum"));

    // A value outside [0, 1] with a consistent checksum is still rejected.
    write_sample_split(dir.path(), 2);
    bytes[..4].copy_from_slice(&1.5f32.to_le_bytes());
    let mut m = read_manifest(dir.path()).unwrap();
    m.checksums.insert("k.f32".into(), io::sha256_hex(&bytes));
    std::fs::write(&p, &bytes).unwrap();
    io::write_json(&dir.path().join("manifest.json"), &m).unwrap();
    assert!(read_container(dir.path()).unwrap_err().to_string().contains("outside [0, 1]"));
}

#[test]
fn build_from_fom_output() {
    use crate::fields::{generate_ensemble, CovarianceSpec, FieldKind, FieldParams};
    use crate::fom::{BoundaryConditions, FomParameters, SolverOptions, TimeGrid};
    let dir = tempfile::tempdir().unwrap();
    let grid = GridSpec::square(8, 1.0);
    let params = FieldParams { modes: 64, ..FieldParams::default() };
    let fields = generate_ensemble(&grid, &CovarianceSpec::default_for(&grid, 0), FieldKind::ZinnHarvey, 5, 100, &params).unwrap();
    let fom_dir = dir.path().join("fom");
    let out = dir.path().join("data");
    crate::fom::run_ensemble(&fields, &FomParameters::default(), &BoundaryConditions::paper(), &TimeGrid::uniform(3, 75.0), &SolverOptions::default(), &fom_dir)
        .unwrap();
    let summary = build_dataset(&fom_dir, [3, 1, 1], 7, GridSpec::square(16, 1.0), &out).unwrap();
    assert_eq!(summary.clamps[0].total(), 0);
    let train = read_container(&out.join("training")).unwrap();
    assert_eq!(train.records.len(), 3);
    assert_eq!((train.records[0].height, train.nt()), (16, 3));
    assert_eq!(train.records[0].t, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
    let test = read_container(&out.join("test")).unwrap();
    assert_eq!(test.stats(), train.stats());
    let mut all: Vec<String> = Split::ALL.iter().flat_map(|s| read_manifest(&out.join(s.name())).unwrap().field_ids).collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 5);
}
