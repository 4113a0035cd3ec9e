//! Staggered finite-volume discretization of the coupled Biot system.
//!
//! Pressure lives at cell centers, `ux` on vertical faces and `uy` on
//! horizontal faces. Side faces carry `ux = 0` and bottom faces `uy = 0`; the
//! remaining displacement faces are unknowns. Shear stress sits on cell
//! corners and vanishes on the boundary (free slip on fixed edges, traction
//! free in shear on top).

use super::linalg::Csr;
use super::{BoundaryConditions, FomParameters};
use crate::fields::GridSpec;

/// Row/column ordering: per cell in row-major order, `[ux(left face),
/// uy(top face), p]`, with the fixed left-boundary `ux` omitted.
#[derive(Clone, Debug)]
pub struct Layout {
    pub nx: usize,
    pub ny: usize,
    ux: Vec<Option<usize>>,
    uy: Vec<Option<usize>>,
    p: Vec<usize>,
    pub n: usize,
}

impl Layout {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut ux = vec![None; ny * (nx + 1)];
        let mut uy = vec![None; (ny + 1) * nx];
        let mut p = vec![0; ny * nx];
        let mut n = 0;
        for i in 0..ny {
            for j in 0..nx {
                if j > 0 {
                    ux[i * (nx + 1) + j] = Some(n);
                    n += 1;
                }
                uy[(i + 1) * nx + j] = Some(n);
                n += 1;
                p[i * nx + j] = n;
                n += 1;
            }
        }
        Layout { nx, ny, ux, uy, p, n }
    }

    /// `ux` on the vertical face at `x = j dx` of row `i`.
    pub fn ux(&self, i: usize, j: usize) -> Option<usize> {
        self.ux[i * (self.nx + 1) + j]
    }

    /// `uy` on the horizontal face at `y = i dy` of column `j`.
    pub fn uy(&self, i: usize, j: usize) -> Option<usize> {
        self.uy[i * self.nx + j]
    }

    pub fn p(&self, i: usize, j: usize) -> usize {
        self.p[i * self.nx + j]
    }

    pub fn is_pressure(&self, idx: usize) -> bool {
        self.p.binary_search(&idx).is_ok()
    }

    pub fn pressure_rows(&self) -> impl Iterator<Item = usize> + Clone + '_ {
        self.p.iter().copied()
    }

    pub fn momentum_rows(&self) -> impl Iterator<Item = usize> + Clone + '_ {
        (0..self.n).filter(|&i| !self.is_pressure(i))
    }

    pub fn pack(&self, p: &[f64], ux: &[f64], uy: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (k, &idx) in self.p.iter().enumerate() {
            x[idx] = p[k];
        }
        for (k, idx) in self.ux.iter().enumerate() {
            if let Some(idx) = idx {
                x[*idx] = ux[k];
            }
        }
        for (k, idx) in self.uy.iter().enumerate() {
            if let Some(idx) = idx {
                x[*idx] = uy[k];
            }
        }
        x
    }

    /// Splits a solution into `(p [ny*nx], ux [ny*(nx+1)], uy [(ny+1)*nx])`.
    pub fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.p.iter().map(|&i| x[i]).collect();
        let ux = self.ux.iter().map(|i| i.map_or(0.0, |i| x[i])).collect();
        let uy = self.uy.iter().map(|i| i.map_or(0.0, |i| x[i])).collect();
        (p, ux, uy)
    }
}

/// What the pressure rows represent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MassMode {
    /// Implicit Euler step of length `dt`.
    Transient { dt: f64 },
    /// Pressure pinned to the right-hand side (mechanical equilibrium only).
    Pinned,
}

/// Linear combination of unknowns.
#[derive(Default, Clone)]
struct Expr(Vec<(usize, f64)>);

impl Expr {
    fn push(&mut self, idx: Option<usize>, c: f64) {
        if let Some(i) = idx {
            self.0.push((i, c));
        }
    }

    fn add(&mut self, other: &Expr, c: f64) {
        self.0.extend(other.0.iter().map(|&(i, v)| (i, v * c)));
    }
}

pub struct Discretization<'a> {
    pub layout: Layout,
    pub grid: GridSpec,
    pub params: &'a FomParameters,
    pub bc: &'a BoundaryConditions,
    /// Mobility `k / mu_f` per cell.
    pub mobility: Vec<f64>,
}

impl<'a> Discretization<'a> {
    pub fn new(grid: GridSpec, k: &[f64], params: &'a FomParameters, bc: &'a BoundaryConditions) -> Self {
        let layout = Layout::new(grid.nx, grid.ny);
        let mobility = k.iter().map(|k| k / params.mu_f).collect();
        Discretization { layout, grid, params, bc, mobility }
    }

    fn lame(&self) -> (f64, f64) {
        let g = self.params.g_shear;
        (self.params.k_bulk - 2.0 * g / 3.0, g)
    }

    /// Volumetric strain of cell `(i, j)`.
    fn div_u(&self, i: usize, j: usize) -> Expr {
        let l = &self.layout;
        let (dx, dy) = (self.grid.dx(), self.grid.dy());
        let mut e = Expr::default();
        e.push(l.ux(i, j + 1), 1.0 / dx);
        e.push(l.ux(i, j), -1.0 / dx);
        e.push(l.uy(i + 1, j), 1.0 / dy);
        e.push(l.uy(i, j), -1.0 / dy);
        e
    }

    /// Total normal stresses `(σxx, σyy)` at the center of cell `(i, j)`.
    fn normal_stress(&self, i: usize, j: usize) -> (Expr, Expr) {
        let l = &self.layout;
        let (lam, g) = self.lame();
        let (dx, dy) = (self.grid.dx(), self.grid.dy());
        let mut exx = Expr::default();
        exx.push(l.ux(i, j + 1), 1.0 / dx);
        exx.push(l.ux(i, j), -1.0 / dx);
        let mut eyy = Expr::default();
        eyy.push(l.uy(i + 1, j), 1.0 / dy);
        eyy.push(l.uy(i, j), -1.0 / dy);
        let mut sxx = Expr::default();
        sxx.add(&exx, lam + 2.0 * g);
        sxx.add(&eyy, lam);
        let mut syy = Expr::default();
        syy.add(&exx, lam);
        syy.add(&eyy, lam + 2.0 * g);
        let a = self.params.alpha;
        sxx.push(Some(l.p(i, j)), -a);
        syy.push(Some(l.p(i, j)), -a);
        (sxx, syy)
    }

    /// Shear stress at corner `(i, j)` (`x = j dx`, `y = i dy`).
    fn shear(&self, i: usize, j: usize) -> Expr {
        let mut e = Expr::default();
        if i == 0 || j == 0 || i == self.grid.ny || j == self.grid.nx {
            return e;
        }
        let l = &self.layout;
        let g = self.params.g_shear;
        let (dx, dy) = (self.grid.dx(), self.grid.dy());
        e.push(l.ux(i, j), g / dy);
        e.push(l.ux(i - 1, j), -g / dy);
        e.push(l.uy(i, j), g / dx);
        e.push(l.uy(i, j - 1), -g / dx);
        e
    }

    fn face_mobility(&self, a: usize, b: usize) -> f64 {
        let (ka, kb) = (self.mobility[a], self.mobility[b]);
        2.0 * ka * kb / (ka + kb)
    }

    /// Matrix of the system; momentum rows hold `-(∇·σ)`.
    pub fn matrix(&self, mode: MassMode) -> Csr {
        let l = &self.layout;
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (dx, dy) = (self.grid.dx(), self.grid.dy());
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(l.n * 14);
        for i in 0..ny {
            for j in 0..nx {
                // x-momentum on the left face of (i, j).
                if let Some(row) = l.ux(i, j) {
                    let (sr, _) = self.normal_stress(i, j);
                    let (sl, _) = self.normal_stress(i, j - 1);
                    emit(&mut t, row, &sr, -1.0 / dx);
                    emit(&mut t, row, &sl, 1.0 / dx);
                    emit(&mut t, row, &self.shear(i + 1, j), -1.0 / dy);
                    emit(&mut t, row, &self.shear(i, j), 1.0 / dy);
                }
                // y-momentum on the top face of (i, j).
                let row = l.uy(i + 1, j).expect("top face unknown");
                let (_, sb) = self.normal_stress(i, j);
                if i + 1 < ny {
                    let (_, st) = self.normal_stress(i + 1, j);
                    emit(&mut t, row, &st, -1.0 / dy);
                    emit(&mut t, row, &sb, 1.0 / dy);
                    emit(&mut t, row, &self.shear(i + 1, j + 1), -1.0 / dx);
                    emit(&mut t, row, &self.shear(i + 1, j), 1.0 / dx);
                } else {
                    // Half control volume below the loaded top edge.
                    emit(&mut t, row, &sb, 2.0 / dy);
                    emit(&mut t, row, &self.shear(i, j + 1), -0.25 / dx);
                    emit(&mut t, row, &self.shear(i, j), 0.25 / dx);
                }
                // Mass balance of cell (i, j).
                let row = l.p(i, j);
                match mode {
                    MassMode::Pinned => t.push((row, row, 1.0)),
                    MassMode::Transient { dt } => {
                        t.push((row, row, 1.0 / self.params.m_biot));
                        for &(col, v) in &self.div_u(i, j).0 {
                            t.push((row, col, self.params.alpha * v));
                        }
                        self.flux_terms(i, j, dt, &mut t);
                    }
                }
            }
        }
        Csr::from_triplets(l.n, t)
    }

    /// `c * (-∇·(κ∇p))` for cell `(i, j)` (matrix part).
    fn flux_terms(&self, i: usize, j: usize, c: f64, t: &mut Vec<(usize, usize, f64)>) {
        let l = &self.layout;
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (dx, dy) = (self.grid.dx(), self.grid.dy());
        let me = i * nx + j;
        let row = l.p(i, j);
        let mut link = |other: usize, col: usize, h: f64| {
            let m = c * self.face_mobility(me, other) / (h * h);
            t.push((row, row, m));
            t.push((row, col, -m));
        };
        if j > 0 {
            link(me - 1, l.p(i, j - 1), dx);
        }
        if j + 1 < nx {
            link(me + 1, l.p(i, j + 1), dx);
        }
        if i > 0 {
            link(me - nx, l.p(i - 1, j), dy);
        }
        if i + 1 < ny {
            link(me + nx, l.p(i + 1, j), dy);
        }
        if i + 1 == ny {
            t.push((row, row, c * 2.0 * self.mobility[me] / (dy * dy)));
        }
        if i == 0 && self.bc.p_bottom.is_some() {
            t.push((row, row, c * 2.0 * self.mobility[me] / (dy * dy)));
        }
    }

    /// Constant part of the right-hand side of the momentum rows.
    fn momentum_rhs(&self, b: &mut [f64]) {
        let l = &self.layout;
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let dy = self.grid.dy();
        let [fx, fy] = self.params.body_force;
        for i in 0..ny {
            for j in 0..nx {
                if let Some(row) = l.ux(i, j) {
                    b[row] += fx;
                }
                let row = l.uy(i + 1, j).expect("top face unknown");
                if i + 1 == ny {
                    // -(σ_top - σ_c)/(dy/2) with σ_top = -traction moves to the right.
                    b[row] += -self.bc.traction_top * 2.0 / dy + fy;
                } else {
                    b[row] += fy;
                }
            }
        }
    }

    /// Dirichlet boundary inflow of cell `(i, j)` scaled by `c`.
    fn flux_rhs(&self, i: usize, j: usize, c: f64) -> f64 {
        let ny = self.grid.ny;
        let dy = self.grid.dy();
        let me = i * self.grid.nx + j;
        let mut r = 0.0;
        if i + 1 == ny {
            r += c * 2.0 * self.mobility[me] / (dy * dy) * self.bc.p_top;
        }
        if i == 0 {
            if let Some(pb) = self.bc.p_bottom {
                r += c * 2.0 * self.mobility[me] / (dy * dy) * pb;
            }
        }
        r
    }

    /// Right-hand side for `mode` given the previous state `x_old`
    /// (ignored unless transient) or the pinned pressure.
    pub fn rhs(&self, mode: MassMode, x_old: &[f64], pinned: f64) -> Vec<f64> {
        let l = &self.layout;
        let mut b = vec![0.0; l.n];
        self.momentum_rhs(&mut b);
        for i in 0..self.grid.ny {
            for j in 0..self.grid.nx {
                let row = l.p(i, j);
                b[row] = match mode {
                    MassMode::Pinned => pinned,
                    MassMode::Transient { dt } => {
                        let div: f64 = self.div_u(i, j).0.iter().map(|&(c, v)| v * x_old[c]).sum();
                        x_old[row] / self.params.m_biot + self.params.alpha * div + self.flux_rhs(i, j, dt)
                    }
                };
            }
        }
        b
    }
}

/// Cell-centered displacement `[ux (ny*nx), uy (ny*nx)]` from face values.
pub fn cell_centered(grid: &GridSpec, ux: &[f64], uy: &[f64]) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = vec![0.0; 2 * nx * ny];
    for i in 0..ny {
        for j in 0..nx {
            out[i * nx + j] = 0.5 * (ux[i * (nx + 1) + j] + ux[i * (nx + 1) + j + 1]);
            out[nx * ny + i * nx + j] = 0.5 * (uy[i * nx + j] + uy[(i + 1) * nx + j]);
        }
    }
    out
}

fn emit(t: &mut Vec<(usize, usize, f64)>, row: usize, e: &Expr, c: f64) {
    for &(col, v) in &e.0 {
        t.push((row, col, v * c));
    }
}
