use super::*;
use crate::fields::{generate_field, CovarianceSpec, FieldKind, FieldParams};

const K_HOM: f64 = 1e-13;

fn homogeneous(n: usize, k: f64) -> PermeabilityField {
    PermeabilityField::homogeneous("hom", GridSpec::square(n, 1.0), k)
}

fn heterogeneous(n: usize, seed: u64) -> PermeabilityField {
    let g = GridSpec::square(n, 1.0);
    let p = FieldParams { modes: 200, ..FieldParams::default() };
    generate_field(&g, &CovarianceSpec::default_for(&g, seed), FieldKind::ZinnHarvey, &p).unwrap()
}

fn column(n: usize, v: &[f64], j: usize) -> Vec<f64> {
    (0..n).map(|i| v[i * n + j]).collect()
}

#[test]
fn terzaghi_series_fixture() {
    let params = FomParameters::default();
    let cv = params.consolidation_coefficient(K_HOM);
    // T_v = 0.5 at the sealed base, frozen from an independent 30-digit evaluation.
    let t = 0.5 / cv;
    let p0 = params.p_undrained(1000.0);
    let r100 = terzaghi_pressure(&params, K_HOM, 1000.0, 1.0, 1.0, t, 100) / p0;
    let r200 = terzaghi_pressure(&params, K_HOM, 1000.0, 1.0, 1.0, t, 200) / p0;
    assert!((r100 - 0.370_777_429_799_523_9).abs() < 1e-14);
    assert_eq!(r100, r200);
    let mid = terzaghi_pressure(&params, K_HOM, 1000.0, 1.0, 0.5, 0.05 / cv, 100) / p0;
    assert!((mid - 0.886_151_600_557_388_6).abs() < 1e-14);
}

#[test]
fn terzaghi_series_limits() {
    let params = FomParameters::default();
    let cv = params.consolidation_coefficient(K_HOM);
    let p0 = params.p_undrained(1000.0);
    assert!((p0 - 8e10 / 8.2e7).abs() < 1e-9);
    let early = terzaghi_pressure(&params, K_HOM, 1000.0, 1.0, 0.5, 1e-4 / cv, 2000);
    assert!((early / p0 - 1.0).abs() < 1e-9);
    let late = terzaghi_pressure(&params, K_HOM, 1000.0, 1.0, 0.7, 1e3 / cv, 100);
    assert!(late.abs() < 1e-100);
}

#[test]
fn terzaghi_agreement_on_coarse_grid() {
    let params = FomParameters::default();
    let bc = BoundaryConditions::terzaghi(&params, 1000.0);
    let n = 32;
    let field = homogeneous(n, K_HOM);
    let tg = TimeGrid::uniform(10, 250.0);
    let traj = solve(&field, &params, &bc, &tg, &SolverOptions::default()).unwrap();
    let yc = field.grid.yc();
    for (p, &t) in traj.p.iter().zip(&tg.times) {
        let exact: Vec<f64> = (0..n * n).map(|c| terzaghi_pressure(&params, K_HOM, 1000.0, 1.0, 1.0 - yc[c / n], t, 200)).collect();
        let err = relative_l2(p, &exact);
        assert!(err < 0.02, "t = {t}: {err}");
    }
    assert!(traj.max_residual < SOLVE_TOL && traj.max_mass_residual < SOLVE_TOL);
}

#[test]
fn unloaded_equilibrium_is_at_rest() {
    let params = FomParameters::default();
    let bc = BoundaryConditions { traction_top: 0.0, p_init: 0.0, ..BoundaryConditions::paper() };
    let (u0, p0) = equilibrium_initial_state(&heterogeneous(16, 1), &params, &bc).unwrap();
    assert!(u0.iter().all(|&u| u == 0.0));
    assert!(p0.iter().all(|&p| p == 0.0));
}

#[test]
fn loaded_equilibrium_is_uniaxial() {
    let params = FomParameters::default();
    let bc = BoundaryConditions::paper();
    let n = 16;
    let (state, res) = equilibrium_state(&homogeneous(n, K_HOM), &params, &bc).unwrap();
    assert!(res < EQUILIBRIUM_TOL, "residual {res}");
    let u = state.u_cells(&GridSpec::square(n, 1.0));
    let strain = (-bc.traction_top + params.alpha * bc.p_init) / params.k_vertical();
    let yc = GridSpec::square(n, 1.0).yc();
    for i in 0..n {
        let row = &u[n * n + i * n..n * n + (i + 1) * n];
        assert!(row.iter().all(|&v| (v - row[0]).abs() <= 1e-12 * row[0].abs()));
        assert!((row[0] - strain * yc[i]).abs() < 1e-9 * strain.abs());
        assert!(u[i * n..(i + 1) * n].iter().all(|v| v.abs() < 1e-18));
    }
    let (_, res) = equilibrium_state(&heterogeneous(16, 3), &params, &bc).unwrap();
    assert!(res < EQUILIBRIUM_TOL, "heterogeneous residual {res}");
}

#[test]
fn steady_pressure_is_linear_for_homogeneous_field() {
    let params = FomParameters::default();
    let bc = BoundaryConditions::paper();
    let n = 16;
    let p = steady_pressure(&homogeneous(n, K_HOM), &params, &bc).unwrap();
    let q = steady_pressure(&homogeneous(n, 2.0 * K_HOM), &params, &bc).unwrap();
    let yc = GridSpec::square(n, 1.0).yc();
    for c in 0..n * n {
        assert!((p[c] - 1000.0 * (1.0 - yc[c / n])).abs() < 1e-9);
        assert!((p[c] - q[c]).abs() < 1e-9);
    }
}

#[test]
fn steady_pressure_conserves_mass_on_heterogeneous_field() {
    let params = FomParameters::default();
    let bc = BoundaryConditions::paper();
    let f = heterogeneous(24, 7);
    let (p, u) = steady_state(&f, &params, &bc).unwrap();
    assert!(steady_flux_residual(&f, &params, &bc, &p) < 1e-8);
    assert!(u.iter().all(|v| v.is_finite()));
}

#[test]
fn long_run_approaches_steady_state() {
    let params = FomParameters::default();
    let bc = BoundaryConditions::paper();
    let f = heterogeneous(16, 11);
    let traj = solve(&f, &params, &bc, &TimeGrid::uniform(10, 2500.0), &SolverOptions::default()).unwrap();
    let p_ss = steady_pressure(&f, &params, &bc).unwrap();
    let err = relative_l2(traj.p.last().unwrap(), &p_ss);
    assert!(err < 0.01, "{err}");
    let (p, u) = steady_state(&f, &params, &bc).unwrap();
    assert_eq!(p, p_ss);
    let err = relative_l2(traj.u.last().unwrap(), &u);
    assert!(err < 0.01, "{err}");
}

#[test]
fn mirrored_field_gives_mirrored_pressure() {
    let params = FomParameters::default();
    let bc = BoundaryConditions::paper();
    let n = 16;
    let f = heterogeneous(n, 5);
    let tg = TimeGrid::uniform(2, 50.0);
    let opts = SolverOptions { substeps: 2, ..SolverOptions::default() };
    let a = solve(&f, &params, &bc, &tg, &opts).unwrap();
    let b = solve(&f.mirrored_x(), &params, &bc, &tg, &opts).unwrap();
    let pa = a.p.last().unwrap();
    let pb = b.p.last().unwrap();
    for i in 0..n {
        for j in 0..n {
            assert!((pa[i * n + j] - pb[i * n + n - 1 - j]).abs() < 1e-6 * 1000.0);
        }
    }
    // ux flips sign, uy mirrors.
    let (ua, ub) = (a.u.last().unwrap(), b.u.last().unwrap());
    let scale = ua.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..n {
            assert!((ua[i * n + j] + ub[i * n + n - 1 - j]).abs() < 1e-6 * scale);
            assert!((ua[n * n + i * n + j] - ub[n * n + i * n + n - 1 - j]).abs() < 1e-6 * scale);
        }
    }
}

#[test]
fn implicit_euler_is_first_order() {
    let params = FomParameters::default();
    let bc = BoundaryConditions::paper();
    let f = heterogeneous(12, 2);
    let tg = TimeGrid::uniform(1, 25.0);
    let run = |s| solve(&f, &params, &bc, &tg, &SolverOptions { substeps: s, ..SolverOptions::default() }).unwrap().p[0].clone();
    let (p1, p2, p4) = (run(2), run(4), run(8));
    let d1: f64 = p1.iter().zip(&p2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let d2: f64 = p2.iter().zip(&p4).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let order = (d1 / d2).log2();
    assert!(order >= 0.9, "observed order {order}");
}

#[test]
fn solve_is_deterministic() {
    let params = FomParameters::default();
    let bc = BoundaryConditions::paper();
    let f = heterogeneous(8, 4);
    let tg = TimeGrid::uniform(3, 75.0);
    let a = solve(&f, &params, &bc, &tg, &SolverOptions::default()).unwrap();
    let b = solve(&f, &params, &bc, &tg, &SolverOptions::default()).unwrap();
    assert_eq!(a.p, b.p);
    assert_eq!(a.u, b.u);
    // Column symmetry of the homogeneous paper problem.
    let h = solve(&homogeneous(8, K_HOM), &params, &bc, &tg, &SolverOptions::default()).unwrap();
    let c0 = column(8, &h.p[2], 0);
    let c5 = column(8, &h.p[2], 5);
    for (x, y) in c0.iter().zip(&c5) {
        assert!((x - y).abs() < 1e-8 * 1000.0);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let params = FomParameters::default();
    let bc = BoundaryConditions::paper();
    let mut f = homogeneous(8, K_HOM);
    f.k[3] = f64::NAN;
    assert!(matches!(solve(&f, &params, &bc, &TimeGrid::uniform(2, 10.0), &SolverOptions::default()), Err(Error::Data(_))));
    let f = homogeneous(8, K_HOM);
    let bad = TimeGrid { times: vec![10.0, 5.0] };
    assert!(matches!(solve(&f, &params, &bc, &bad, &SolverOptions::default()), Err(Error::Config(_))));
    let bad_params = FomParameters { alpha: 1.5, ..FomParameters::default() };
    assert!(matches!(equilibrium_state(&f, &bad_params, &bc), Err(Error::Config(_))));
    let free = BoundaryConditions { sides_fixed_normal: false, ..bc };
    assert!(matches!(equilibrium_state(&f, &params, &free), Err(Error::Config(_))));
}

#[test]
fn container_round_trip_and_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    let params = FomParameters::default();
    let bc = BoundaryConditions::paper();
    let tg = TimeGrid::uniform(2, 50.0);
    let mut manifest = FomManifest {
        schema_version: FOM_SCHEMA,
        grid: GridSpec::square(8, 1.0),
        times: tg.times.clone(),
        params: params.clone(),
        bc: bc.clone(),
        substeps: 10,
        kind: FieldKind::ZinnHarvey,
        field_ids: vec![],
        layout: String::new(),
        checksums: BTreeMap::new(),
        wall_times: BTreeMap::new(),
    };
    let mut trajs = Vec::new();
    for seed in [1, 2] {
        let f = heterogeneous(8, seed);
        let t = solve(&f, &params, &bc, &tg, &SolverOptions::default()).unwrap();
        let sum = write_trajectory(dir.path(), &f, &t).unwrap();
        manifest.field_ids.push(f.id.clone());
        manifest.checksums.insert(f.id.clone(), sum);
        trajs.push((f, t));
    }
    write_manifest(dir.path(), &manifest).unwrap();
    let m = read_manifest(dir.path()).unwrap();
    for (f, t) in &trajs {
        let (f2, t2) = read_trajectory(dir.path(), &m, &f.id).unwrap();
        assert!(f.k.iter().zip(&f2.k).all(|(a, b)| (*a as f32) as f64 == *b));
        assert!(t.p[1].iter().zip(&t2.p[1]).all(|(a, b)| (*a as f32) as f64 == *b));
        assert!(t.u[0].iter().zip(&t2.u[0]).all(|(a, b)| (*a as f32) as f64 == *b));
    }
    std::fs::remove_file(dir.path().join(format!("{}.f32", trajs[1].0.id))).unwrap();
    assert_eq!(missing_outputs(dir.path(), &m), vec![trajs[1].0.id.clone()]);
    let err = read_trajectory(dir.path(), &m, &trajs[1].0.id).unwrap_err();
    assert!(err.to_string().contains(&trajs[1].0.id));
}

#[test]
fn ensemble_run_resumes_without_resolving() {
    let dir = tempfile::tempdir().unwrap();
    let fields: Vec<_> = (0..3).map(|s| heterogeneous(8, s)).collect();
    let params = FomParameters::default();
    let bc = BoundaryConditions::paper();
    let tg = TimeGrid::uniform(2, 50.0);
    let a = run_ensemble(&fields, &params, &bc, &tg, &SolverOptions::default(), dir.path()).unwrap();
    assert!(missing_outputs(dir.path(), &a).is_empty());
    let before = std::fs::metadata(dir.path().join(format!("{}.f32", fields[0].id))).unwrap().modified().unwrap();
    std::fs::remove_file(dir.path().join(format!("{}.f32", fields[2].id))).unwrap();
    let b = run_ensemble(&fields, &params, &bc, &tg, &SolverOptions::default(), dir.path()).unwrap();
    assert_eq!(a.checksums, b.checksums);
    assert_eq!(a.wall_times[&fields[0].id], b.wall_times[&fields[0].id]);
    let after = std::fs::metadata(dir.path().join(format!("{}.f32", fields[0].id))).unwrap().modified().unwrap();
    assert_eq!(before, after);
}
