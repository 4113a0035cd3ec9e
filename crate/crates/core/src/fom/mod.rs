//! Full-order model: 2D linear Biot poroelasticity on a structured grid,
//! monolithic implicit Euler, with analytical and steady-state oracles.

mod assembly;
pub mod linalg;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{GridSpec, PermeabilityField};
use crate::io;
use assembly::{cell_centered, Discretization, MassMode};
use linalg::{solve_refined, BandLu, Csr};

pub use assembly::Layout;

/// Relative residual required of every linear solve.
pub const SOLVE_TOL: f64 = 1e-8;
/// Relative momentum residual required of the initial equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FomParameters {
    pub alpha: f64,
    pub m_biot: f64,
    pub k_bulk: f64,
    pub g_shear: f64,
    pub mu_f: f64,
    pub body_force: [f64; 2],
}

impl Default for FomParameters {
    fn default() -> Self {
        FomParameters { alpha: 0.8, m_biot: 1e8, k_bulk: 1e7, g_shear: 6e6, mu_f: 1e-3, body_force: [0.0, 0.0] }
    }
}

impl FomParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        for (name, v) in [("m_biot", self.m_biot), ("k_bulk", self.k_bulk), ("g_shear", self.g_shear), ("mu_f", self.mu_f)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.body_force.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("body force must be finite"));
        }
        Ok(())
    }

    /// Constrained (oedometric) modulus `K + 4G/3`.
    pub fn k_vertical(&self) -> f64 {
        self.k_bulk + 4.0 * self.g_shear / 3.0
    }

    /// Pressure right after applying `sigma0` under uniaxial undrained loading.
    pub fn p_undrained(&self, sigma0: f64) -> f64 {
        self.alpha * self.m_biot * sigma0 / (self.k_vertical() + self.alpha * self.alpha * self.m_biot)
    }

    /// 1D consolidation coefficient for permeability `k`.
    pub fn consolidation_coefficient(&self, k: f64) -> f64 {
        let storage = 1.0 / self.m_biot + self.alpha * self.alpha / self.k_vertical();
        k / self.mu_f / storage
    }
}

/// Edge conditions. The top edge is drained at `p_top` and carries the
/// compressive normal load `traction_top`; the bottom is fixed vertically and
/// either held at `p_bottom` or sealed; the sides are sealed and fixed
/// horizontally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub p_top: f64,
    pub p_bottom: Option<f64>,
    pub traction_top: f64,
    pub p_init: f64,
    pub sides_no_flow: bool,
    pub sides_fixed_normal: bool,
}

impl BoundaryConditions {
    /// Pressures 0 Pa (top) and 1000 Pa (bottom), 1000 Pa load, 1000 Pa initial pressure.
    pub fn paper() -> Self {
        BoundaryConditions {
            p_top: 0.0,
            p_bottom: Some(1000.0),
            traction_top: 1000.0,
            p_init: 1000.0,
            sides_no_flow: true,
            sides_fixed_normal: true,
        }
    }

    /// Drained loaded top, sealed base, starting from the undrained response.
    pub fn terzaghi(params: &FomParameters, sigma0: f64) -> Self {
        BoundaryConditions {
            p_top: 0.0,
            p_bottom: None,
            traction_top: sigma0,
            p_init: params.p_undrained(sigma0),
            sides_no_flow: true,
            sides_fixed_normal: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [Some(self.p_top), self.p_bottom, Some(self.traction_top), Some(self.p_init)];
        if vals.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("boundary values must be finite"));
        }
        if !(self.sides_no_flow && self.sides_fixed_normal) {
            return Err(Error::config("only sealed, horizontally fixed side edges are supported"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(nt: usize, tau: f64) -> Self {
        TimeGrid { times: (1..=nt).map(|n| tau * n as f64 / nt as f64).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::config("time grid is empty"));
        }
        let mut prev = 0.0;
        for &t in &self.times {
            if !(t > prev && t.is_finite()) {
                return Err(Error::config(format!("output times must be positive and strictly increasing: {:?}", self.times)));
            }
            prev = t;
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        *self.times.last().expect("nonempty time grid")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Implicit Euler steps per output interval.
    pub substeps: usize,
    pub tol: f64,
    pub max_refine: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { substeps: 10, tol: SOLVE_TOL, max_refine: 4 }
    }
}

/// Solution snapshots; displacement is cell-centered, `[ux, uy]` per time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub field_id: String,
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub p0: Vec<f64>,
    pub u0: Vec<f64>,
    /// Largest relative residual of any step, over all rows and over mass rows.
    pub max_residual: f64,
    pub max_mass_residual: f64,
    pub wall_time: f64,
}

/// Full staggered state: pressure and face displacements.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub p: Vec<f64>,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl State {
    pub fn u_cells(&self, grid: &GridSpec) -> Vec<f64> {
        cell_centered(grid, &self.ux, &self.uy)
    }
}

fn check_inputs(field: &PermeabilityField, params: &FomParameters, bc: &BoundaryConditions) -> Result<()> {
    field.grid.validate()?;
    field.validate()?;
    params.validate()?;
    bc.validate()
}

/// `p0 = p_init` everywhere and the displacement in mechanical equilibrium
/// with it. Returns the state and the relative momentum residual.
pub fn equilibrium_state(field: &PermeabilityField, params: &FomParameters, bc: &BoundaryConditions) -> Result<(State, f64)> {
    check_inputs(field, params, bc)?;
    let disc = Discretization::new(field.grid, &field.k, params, bc);
    let a = disc.matrix(MassMode::Pinned);
    let lu = BandLu::factor(&a).map_err(|e| Error::config(format!("equilibrium system is singular: {e}")))?;
    let b = disc.rhs(MassMode::Pinned, &[], bc.p_init);
    let (x, _) = solve_refined(&a, &lu, &b, EQUILIBRIUM_TOL, 6)?;
    let res = term_residual(&a, &x, &b, disc.layout.momentum_rows());
    let (p, ux, uy) = disc.layout.unpack(&x);
    Ok((State { p, ux, uy }, res))
}

/// Cell-centered `(u0, p0)`.
pub fn equilibrium_initial_state(
    field: &PermeabilityField,
    params: &FomParameters,
    bc: &BoundaryConditions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (s, _) = equilibrium_state(field, params, bc)?;
    Ok((s.u_cells(&field.grid), s.p))
}

/// Residual of the selected rows relative to the size of the individual terms
/// in each row, which stays meaningful when the terms cancel.
fn term_residual(a: &Csr, x: &[f64], b: &[f64], rows: impl Iterator<Item = usize> + Clone) -> f64 {
    let ax = a.matvec(x);
    let scale: Vec<f64> = (0..a.n).map(|i| a.row(i).fold(0.0, |m: f64, (c, v)| m.max((v * x[c]).abs()))).collect();
    let num: f64 = rows.clone().map(|i| (b[i] - ax[i]).powi(2)).sum::<f64>().sqrt();
    let den: f64 = rows.map(|i| scale[i].max(b[i].abs()).powi(2)).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Integrates from the equilibrium initial state to every time in `tg`.
pub fn solve(
    field: &PermeabilityField,
    params: &FomParameters,
    bc: &BoundaryConditions,
    tg: &TimeGrid,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let start = Instant::now();
    tg.validate()?;
    if opts.substeps == 0 {
        return Err(Error::config("substeps must be at least 1"));
    }
    let (init, _) = equilibrium_state(field, params, bc)?;
    let disc = Discretization::new(field.grid, &field.k, params, bc);
    let layout = &disc.layout;
    let mut x = layout.pack(&init.p, &init.ux, &init.uy);
    let mut factors: HashMap<u64, (Csr, BandLu)> = HashMap::new();
    let mut traj = Trajectory {
        field_id: field.id.clone(),
        grid: field.grid,
        times: tg.times.clone(),
        p: Vec::with_capacity(tg.times.len()),
        u: Vec::with_capacity(tg.times.len()),
        p0: init.p.clone(),
        u0: init.u_cells(&field.grid),
        max_residual: 0.0,
        max_mass_residual: 0.0,
        wall_time: 0.0,
    };
    let mut t_prev = 0.0;
    for &t in &tg.times {
        let dt = (t - t_prev) / opts.substeps as f64;
        t_prev = t;
        let mode = MassMode::Transient { dt };
        let (a, lu) = match factors.entry(dt.to_bits()) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let a = disc.matrix(mode);
                let lu = BandLu::factor(&a)?;
                e.insert((a, lu))
            }
        };
        for _ in 0..opts.substeps {
            let b = disc.rhs(mode, &x, 0.0);
            let (xn, res) = solve_refined(a, lu, &b, opts.tol, opts.max_refine)
                .map_err(|e| Error::numerical(format!("field {} at t = {t} s: {e}", field.id)))?;
            let mass = term_residual(a, &xn, &b, layout.pressure_rows());
            if !(mass < opts.tol) {
                return Err(Error::numerical(format!("field {}: mass balance residual {mass:e} at t = {t} s", field.id)));
            }
            traj.max_residual = traj.max_residual.max(res);
            traj.max_mass_residual = traj.max_mass_residual.max(mass);
            x = xn;
        }
        let (p, ux, uy) = layout.unpack(&x);
        traj.u.push(cell_centered(&field.grid, &ux, &uy));
        traj.p.push(p);
    }
    traj.wall_time = start.elapsed().as_secs_f64();
    Ok(traj)
}

/// Steady pressure of `∇·(κ∇p) = 0` under the pressure conditions of `bc`,
/// assembled independently of the coupled system.
pub fn steady_pressure(field: &PermeabilityField, params: &FomParameters, bc: &BoundaryConditions) -> Result<Vec<f64>> {
    check_inputs(field, params, bc)?;
    let g = field.grid;
    let (nx, ny) = (g.nx, g.ny);
    let (hx, hy) = (1.0 / (g.dx() * g.dx()), 1.0 / (g.dy() * g.dy()));
    let kappa: Vec<f64> = field.k.iter().map(|k| k / params.mu_f).collect();
    let harm = |a: f64, b: f64| 2.0 * a * b / (a + b);
    let mut t = Vec::new();
    let mut b = vec![0.0; nx * ny];
    for i in 0..ny {
        for j in 0..nx {
            let c = i * nx + j;
            let mut nb = |o: usize, w: f64| {
                let m = harm(kappa[c], kappa[o]) * w;
                t.push((c, c, m));
                t.push((c, o, -m));
            };
            if j > 0 {
                nb(c - 1, hx);
            }
            if j + 1 < nx {
                nb(c + 1, hx);
            }
            if i > 0 {
                nb(c - nx, hy);
            }
            if i + 1 < ny {
                nb(c + nx, hy);
            }
            if i + 1 == ny {
                t.push((c, c, 2.0 * kappa[c] * hy));
                b[c] += 2.0 * kappa[c] * hy * bc.p_top;
            }
            if i == 0 {
                if let Some(pb) = bc.p_bottom {
                    t.push((c, c, 2.0 * kappa[c] * hy));
                    b[c] += 2.0 * kappa[c] * hy * pb;
                }
            }
        }
    }
    let a = Csr::from_triplets(nx * ny, t);
    let lu = BandLu::factor(&a)?;
    let (p, _) = solve_refined(&a, &lu, &b, 1e-12, 6)?;
    Ok(p)
}

/// Long-time limit: steady pressure and the displacement in equilibrium with it.
/// Displacement is cell-centered.
pub fn steady_state(field: &PermeabilityField, params: &FomParameters, bc: &BoundaryConditions) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = steady_pressure(field, params, bc)?;
    let disc = Discretization::new(field.grid, &field.k, params, bc);
    let layout = &disc.layout;
    // Momentum rows with pressure rows pinned to the steady field.
    let a = disc.matrix(MassMode::Pinned);
    let lu = BandLu::factor(&a)?;
    let mut rhs = disc.rhs(MassMode::Pinned, &[], 0.0);
    for (k, row) in layout.pressure_rows().enumerate() {
        rhs[row] = p[k];
    }
    let (x, _) = solve_refined(&a, &lu, &rhs, EQUILIBRIUM_TOL, 6)?;
    let (_, ux, uy) = layout.unpack(&x);
    Ok((p, cell_centered(&field.grid, &ux, &uy)))
}

/// Residual of the steady flow equation for `p`, relative to the largest flux.
pub fn steady_flux_residual(field: &PermeabilityField, params: &FomParameters, bc: &BoundaryConditions, p: &[f64]) -> f64 {
    let g = field.grid;
    let (nx, ny) = (g.nx, g.ny);
    let kappa: Vec<f64> = field.k.iter().map(|k| k / params.mu_f).collect();
    let harm = |a: f64, b: f64| 2.0 * a * b / (a + b);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..ny {
        for j in 0..nx {
            let c = i * nx + j;
            let mut fluxes = Vec::new();
            if j > 0 {
                fluxes.push(harm(kappa[c], kappa[c - 1]) * (p[c - 1] - p[c]) / g.dx() * g.dy());
            }
            if j + 1 < nx {
                fluxes.push(harm(kappa[c], kappa[c + 1]) * (p[c + 1] - p[c]) / g.dx() * g.dy());
            }
            if i > 0 {
                fluxes.push(harm(kappa[c], kappa[c - nx]) * (p[c - nx] - p[c]) / g.dy() * g.dx());
            }
            if i + 1 < ny {
                fluxes.push(harm(kappa[c], kappa[c + nx]) * (p[c + nx] - p[c]) / g.dy() * g.dx());
            } else {
                fluxes.push(2.0 * kappa[c] * (bc.p_top - p[c]) / g.dy() * g.dx());
            }
            if i == 0 {
                if let Some(pb) = bc.p_bottom {
                    fluxes.push(2.0 * kappa[c] * (pb - p[c]) / g.dy() * g.dx());
                }
            }
            scale = fluxes.iter().fold(scale, |m, f| m.max(f.abs()));
            worst = worst.max(fluxes.iter().sum::<f64>().abs());
        }
    }
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

/// Terzaghi's 1D consolidation pressure at depth `z` below the drained edge
/// of a layer of thickness `h`, summing `n_terms` odd modes.
pub fn terzaghi_pressure(params: &FomParameters, k: f64, sigma0: f64, h: f64, z: f64, t: f64, n_terms: usize) -> f64 {
    let p0 = params.p_undrained(sigma0);
    let cv = params.consolidation_coefficient(k);
    let pi = std::f64::consts::PI;
    let mut s = 0.0;
    for m in 0..n_terms {
        let n = (2 * m + 1) as f64;
        s += 4.0 / (n * pi) * (n * pi * z / (2.0 * h)).sin() * (-(n * n) * pi * pi * cv * t / (4.0 * h * h)).exp();
    }
    p0 * s
}

/// Relative L2 norm of `a - b`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

// ---------------------------------------------------------------------------
// Trajectory container: one `<field_id>.f32` per field plus `manifest.json`.

pub const FOM_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FomManifest {
    pub schema_version: u32,
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub params: FomParameters,
    pub bc: BoundaryConditions,
    pub substeps: usize,
    pub kind: crate::fields::FieldKind,
    pub field_ids: Vec<String>,
    /// Per-field file layout: k, p0, u0, p[Nt], u[Nt] (u as `[ux, uy]`).
    pub layout: String,
    pub checksums: BTreeMap<String, String>,
    /// Solve time per field [s]; kept in `wall_times.json` so that
    /// `manifest.json` depends only on the inputs.
    #[serde(skip)]
    pub wall_times: BTreeMap<String, f64>,
}

fn record_len(grid: &GridSpec, nt: usize) -> usize {
    let n = grid.len();
    n + n + 2 * n + nt * n + nt * 2 * n
}

pub fn write_trajectory(dir: &Path, field: &PermeabilityField, traj: &Trajectory) -> Result<String> {
    let vals = field
        .k
        .iter()
        .chain(&traj.p0)
        .chain(&traj.u0)
        .chain(traj.p.iter().flatten())
        .chain(traj.u.iter().flatten())
        .map(|&v| v as f32);
    io::write_f32(&dir.join(format!("{}.f32", traj.field_id)), vals)
}

/// Writes the manifest for trajectories already written with [`write_trajectory`].
pub fn write_manifest(dir: &Path, manifest: &FomManifest) -> Result<()> {
    io::write_json(&dir.join("wall_times.json"), &manifest.wall_times)?;
    io::write_json(&dir.join("manifest.json"), manifest)
}

pub fn read_manifest(dir: &Path) -> Result<FomManifest> {
    let mut m: FomManifest = io::read_json(&dir.join("manifest.json"))?;
    if m.schema_version != FOM_SCHEMA {
        return Err(Error::data(format!("unsupported FOM schema {}", m.schema_version)));
    }
    let times = dir.join("wall_times.json");
    if times.exists() {
        m.wall_times = io::read_json(&times)?;
    }
    Ok(m)
}

/// Reads one field and its trajectory, verifying size and checksum.
pub fn read_trajectory(dir: &Path, m: &FomManifest, id: &str) -> Result<(PermeabilityField, Trajectory)> {
    let path = dir.join(format!("{id}.f32"));
    if !path.exists() {
        return Err(Error::data(format!("FOM output for field {id} is missing ({})", path.display())));
    }
    let n = m.grid.len();
    let nt = m.times.len();
    let v = io::read_f32(&path, record_len(&m.grid, nt), m.checksums.get(id).map(String::as_str))
        .map_err(|e| Error::data(format!("FOM output for field {id}: {e}")))?;
    let v: Vec<f64> = v.into_iter().map(f64::from).collect();
    let (k, rest) = v.split_at(n);
    let (p0, rest) = rest.split_at(n);
    let (u0, rest) = rest.split_at(2 * n);
    let (p, u) = rest.split_at(nt * n);
    let field = PermeabilityField {
        id: id.to_string(),
        kind: m.kind,
        grid: m.grid,
        k: k.to_vec(),
    };
    let traj = Trajectory {
        field_id: id.to_string(),
        grid: m.grid,
        times: m.times.clone(),
        p: p.chunks_exact(n).map(<[f64]>::to_vec).collect(),
        u: u.chunks_exact(2 * n).map(<[f64]>::to_vec).collect(),
        p0: p0.to_vec(),
        u0: u0.to_vec(),
        max_residual: 0.0,
        max_mass_residual: 0.0,
        wall_time: m.wall_times.get(id).copied().unwrap_or(0.0),
    };
    Ok((field, traj))
}

/// Reports every field listed in the manifest whose output file is absent.
pub fn missing_outputs(dir: &Path, m: &FomManifest) -> Vec<String> {
    m.field_ids.iter().filter(|id| !dir.join(format!("{id}.f32")).exists()).cloned().collect()
}

pub const TRAJECTORY_LAYOUT: &str = "k[ny,nx], p0[ny,nx], u0[2,ny,nx], p[Nt,ny,nx], u[Nt,2,ny,nx]; row 0 at the bottom";

/// Solves every field and writes the trajectory container to `dir`.
///
/// Fields whose output already exists with the checksum recorded by an
/// earlier run under identical settings are not solved again. Fields are
/// distributed over the available cores.
pub fn run_ensemble(
    fields: &[PermeabilityField],
    params: &FomParameters,
    bc: &BoundaryConditions,
    tg: &TimeGrid,
    opts: &SolverOptions,
    dir: &Path,
) -> Result<FomManifest> {
    let first = fields.first().ok_or_else(|| Error::data("no fields to solve"))?;
    if let Some(f) = fields.iter().find(|f| f.grid != first.grid) {
        return Err(Error::data(format!("field {} grid differs from field {}", f.id, first.id)));
    }
    params.validate()?;
    bc.validate()?;
    tg.validate()?;
    io::create_dir(dir)?;
    let mut manifest = FomManifest {
        schema_version: FOM_SCHEMA,
        grid: first.grid,
        times: tg.times.clone(),
        params: params.clone(),
        bc: bc.clone(),
        substeps: opts.substeps,
        kind: first.kind,
        field_ids: fields.iter().map(|f| f.id.clone()).collect(),
        layout: TRAJECTORY_LAYOUT.to_string(),
        checksums: BTreeMap::new(),
        wall_times: BTreeMap::new(),
    };
    if let Ok(old) = read_manifest(dir) {
        let same = old.grid == manifest.grid
            && old.times == manifest.times
            && old.params == manifest.params
            && old.bc == manifest.bc
            && old.substeps == manifest.substeps;
        if same {
            for f in fields {
                let (Some(sum), Some(wall)) = (old.checksums.get(&f.id), old.wall_times.get(&f.id)) else { continue };
                let path = dir.join(format!("{}.f32", f.id));
                if path.exists() && io::sha256_file(&path)? == *sum {
                    manifest.checksums.insert(f.id.clone(), sum.clone());
                    manifest.wall_times.insert(f.id.clone(), *wall);
                }
            }
        }
    }
    let todo: Vec<&PermeabilityField> = fields.iter().filter(|f| !manifest.checksums.contains_key(&f.id)).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(todo.len()).max(1);
    let results: Vec<Result<(String, String, f64)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let todo = &todo;
                s.spawn(move || {
                    todo.iter()
                        .skip(w)
                        .step_by(threads)
                        .map(|f| {
                            let traj = solve(f, params, bc, tg, opts)?;
                            let sum = write_trajectory(dir, f, &traj)?;
                            log::info!("field {} solved in {:.2} s", f.id, traj.wall_time);
                            Ok((f.id.clone(), sum, traj.wall_time))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("solver thread panicked")).collect()
    });
    for r in results {
        let (id, sum, wall) = r?;
        manifest.checksums.insert(id.clone(), sum);
        manifest.wall_times.insert(id, wall);
    }
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests;
