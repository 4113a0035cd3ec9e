//! Heterogeneous permeability ensembles: stationary Gaussian random fields
//! followed by a Zinn & Harvey or a bimodal transformation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::io;

/// Clamp applied inside the Zinn & Harvey back-transform.
pub const ZH_EPS: f64 = 1e-12;
/// Number of Fourier modes in the randomization method.
pub const DEFAULT_MODES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub fn square(n: usize, l: f64) -> Self {
        GridSpec { nx: n, ny: n, lx: l, ly: l }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::config(format!("grid must be at least 2x2, got {}x{}", self.nx, self.ny)));
        }
        if !(self.lx > 0.0 && self.ly > 0.0 && self.lx.is_finite() && self.ly.is_finite()) {
            return Err(Error::config(format!("domain lengths must be positive, got {} x {}", self.lx, self.ly)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Cell-center coordinates along x.
    pub fn xc(&self) -> Vec<f64> {
        (0..self.nx).map(|j| (j as f64 + 0.5) * self.dx()).collect()
    }

    /// Cell-center coordinates along y (row 0 at the bottom).
    pub fn yc(&self) -> Vec<f64> {
        (0..self.ny).map(|i| (i as f64 + 0.5) * self.dy()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceModel {
    /// `exp(-r²/ℓ²)`.
    Gaussian,
    /// `exp(-r/ℓ)`.
    Exponential,
}

impl FromStr for CovarianceModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(CovarianceModel::Gaussian),
            "exponential" => Ok(CovarianceModel::Exponential),
            _ => Err(Error::config(format!("unknown covariance model '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub model: CovarianceModel,
    pub variance: f64,
    pub corr_len: f64,
    pub seed: u64,
}

impl CovarianceSpec {
    /// Gaussian covariance, unit variance, correlation length `lx / 16`.
    pub fn default_for(grid: &GridSpec, seed: u64) -> Self {
        CovarianceSpec { model: CovarianceModel::Gaussian, variance: 1.0, corr_len: grid.lx / 16.0, seed }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::config(format!("field variance must be positive, got {}", self.variance)));
        }
        let lmax = grid.lx.min(grid.ly);
        if !(self.corr_len > 0.0 && self.corr_len < lmax) {
            return Err(Error::config(format!("correlation length {} outside (0, {lmax})", self.corr_len)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianField {
    pub grid: GridSpec,
    pub spec: CovarianceSpec,
    /// Row-major `[y][x]`, row 0 at the bottom.
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    ZinnHarvey,
    Bimodal,
}

impl FieldKind {
    fn prefix(self) -> &'static str {
        match self {
            FieldKind::ZinnHarvey => "zh",
            FieldKind::Bimodal => "bm",
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldKind::ZinnHarvey => "zinn_harvey",
            FieldKind::Bimodal => "bimodal",
        })
    }
}

impl FromStr for FieldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zinn_harvey" => Ok(FieldKind::ZinnHarvey),
            "bimodal" => Ok(FieldKind::Bimodal),
            _ => Err(Error::config(format!("unknown field kind '{s}' (expected zinn_harvey or bimodal)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermeabilityField {
    pub id: String,
    pub kind: FieldKind,
    pub grid: GridSpec,
    /// Permeability [m²], row-major `[y][x]`.
    pub k: Vec<f64>,
}

impl PermeabilityField {
    pub fn homogeneous(id: &str, grid: GridSpec, k: f64) -> Self {
        PermeabilityField { id: id.to_string(), kind: FieldKind::ZinnHarvey, grid, k: vec![k; grid.len()] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.len() != self.grid.len() {
            return Err(Error::data(format!("field {} has {} values for a {}x{} grid", self.id, self.k.len(), self.grid.nx, self.grid.ny)));
        }
        if let Some(v) = self.k.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::data(format!("field {} has a non-positive or non-finite permeability {v}", self.id)));
        }
        Ok(())
    }

    /// Left-right mirror image.
    pub fn mirrored_x(&self) -> Self {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let k = (0..ny).flat_map(|i| (0..nx).rev().map(move |j| (i, j))).map(|(i, j)| self.k[i * nx + j]).collect();
        PermeabilityField { id: format!("{}-mirror", self.id), k, ..self.clone() }
    }
}

/// Transformation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub k_geo: f64,
    pub sigma_ln: f64,
    pub k_low: f64,
    pub k_high: f64,
    pub width: f64,
    pub modes: usize,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams { k_geo: 1e-13, sigma_ln: 2.0, k_low: 1e-14, k_high: 1e-12, width: 0.2, modes: DEFAULT_MODES }
    }
}

impl FieldParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_geo > 0.0 && self.sigma_ln > 0.0) {
            return Err(Error::config("k_geo and sigma_ln must be positive"));
        }
        if !(self.k_low > 0.0 && self.k_low < self.k_high) {
            return Err(Error::config(format!("need 0 < k_low < k_high, got {} and {}", self.k_low, self.k_high)));
        }
        if !(self.width > 0.0) {
            return Err(Error::config("bimodal width must be positive"));
        }
        if self.modes == 0 {
            return Err(Error::config("mode count must be positive"));
        }
        Ok(())
    }
}

/// Zero-mean stationary field by the randomization method: a sum of
/// `modes` cosine waves with random wave vectors drawn from the spectral
/// density and standard normal amplitudes.
pub fn sample_gaussian_field_with_modes(grid: &GridSpec, cov: &CovarianceSpec, modes: usize) -> Result<GaussianField> {
    grid.validate()?;
    cov.validate(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cov.seed);
    let xs = grid.xc();
    let ys = grid.yc();
    let (nx, ny) = (grid.nx, grid.ny);
    let mut values = vec![0.0; grid.len()];
    let mut ex = vec![(0.0, 0.0); nx];
    let mut ey = vec![(0.0, 0.0); ny];
    let l = cov.corr_len;
    for _ in 0..modes {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let (kx, ky) = match cov.model {
            CovarianceModel::Gaussian => {
                let s = 2f64.sqrt() / l;
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                (s * a, s * b)
            }
            CovarianceModel::Exponential => {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                let g: f64 = StandardNormal.sample(&mut rng);
                let s = 1.0 / (l * g.abs().max(1e-300));
                (s * a, s * b)
            }
        };
        for (e, &x) in ex.iter_mut().zip(&xs) {
            *e = (kx * x).sin_cos();
        }
        for (e, &y) in ey.iter_mut().zip(&ys) {
            *e = (ky * y).sin_cos();
        }
        // z1 cos(θ) + z2 sin(θ) with θ = kx x + ky y, separated over x and y.
        for (i, &(sy, cy)) in ey.iter().enumerate() {
            let row = &mut values[i * nx..(i + 1) * nx];
            for (v, &(sx, cx)) in row.iter_mut().zip(&ex) {
                let c = cx * cy - sx * sy;
                let s = sx * cy + cx * sy;
                *v += z1 * c + z2 * s;
            }
        }
    }
    let scale = (cov.variance / modes as f64).sqrt();
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(GaussianField { grid: *grid, spec: *cov, values })
}

pub fn sample_gaussian_field(grid: &GridSpec, cov: &CovarianceSpec) -> Result<GaussianField> {
    sample_gaussian_field_with_modes(grid, cov, DEFAULT_MODES)
}

/// Standard normal quantile.
pub fn norm_ppf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Zinn & Harvey transform of one standard normal value.
///
/// `-Φ⁻¹(2Φ(|y|) - 1)` is evaluated as `Φ⁻¹(erfc(|y|/√2))`, which is the same
/// map without cancellation in the tail.
pub fn zinn_harvey_value(y: f64) -> f64 {
    let u = erfc(y.abs() / std::f64::consts::SQRT_2).clamp(ZH_EPS, 1.0 - ZH_EPS);
    norm_ppf(u)
}

pub fn zinn_harvey_connect(g: &GaussianField) -> Result<GaussianField> {
    if let Some(v) = g.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::data(format!("non-finite Gaussian field value {v}")));
    }
    Ok(GaussianField { values: g.values.iter().map(|&y| zinn_harvey_value(y)).collect(), ..g.clone() })
}

pub fn to_log_permeability(g: &GaussianField, k_geo: f64, sigma_ln: f64, id: &str) -> Result<PermeabilityField> {
    if !(k_geo > 0.0 && sigma_ln > 0.0) {
        return Err(Error::config("k_geo and sigma_ln must be positive"));
    }
    let k: Vec<f64> = g.values.iter().map(|&y| k_geo * (sigma_ln * y).exp()).collect();
    if let Some(v) = k.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::data(format!("log-permeability map overflowed to {v}; reduce sigma_ln")));
    }
    Ok(PermeabilityField { id: id.to_string(), kind: FieldKind::ZinnHarvey, grid: g.grid, k })
}

pub fn bimodal_value(y: f64, k_low: f64, k_high: f64, width: f64) -> f64 {
    let s = 1.0 / (1.0 + (-y / width).exp());
    k_low + (k_high - k_low) * s
}

pub fn bimodal_map(g: &GaussianField, k_low: f64, k_high: f64, width: f64, id: &str) -> Result<PermeabilityField> {
    if !(k_low > 0.0 && k_low < k_high && width > 0.0) {
        return Err(Error::config(format!("bimodal map needs 0 < k_low < k_high and width > 0, got {k_low}, {k_high}, {width}")));
    }
    let k = g.values.iter().map(|&y| bimodal_value(y, k_low, k_high, width)).collect();
    Ok(PermeabilityField { id: id.to_string(), kind: FieldKind::Bimodal, grid: g.grid, k })
}

pub fn field_id(kind: FieldKind, seed: u64) -> String {
    format!("{}-{seed:08}", kind.prefix())
}

/// One permeability field of `kind` from the seed in `cov`.
pub fn generate_field(grid: &GridSpec, cov: &CovarianceSpec, kind: FieldKind, params: &FieldParams) -> Result<PermeabilityField> {
    params.validate()?;
    let g = sample_gaussian_field_with_modes(grid, cov, params.modes)?;
    let id = field_id(kind, cov.seed);
    match kind {
        FieldKind::ZinnHarvey => to_log_permeability(&zinn_harvey_connect(&g)?, params.k_geo, params.sigma_ln, &id),
        FieldKind::Bimodal => bimodal_map(&g, params.k_low, params.k_high, params.width, &id),
    }
}

/// `count` fields with seeds `base_seed .. base_seed + count`.
pub fn generate_ensemble(
    grid: &GridSpec,
    cov_base: &CovarianceSpec,
    kind: FieldKind,
    count: usize,
    base_seed: u64,
    params: &FieldParams,
) -> Result<Vec<PermeabilityField>> {
    if count == 0 {
        return Err(Error::config("ensemble count must be at least 1"));
    }
    (0..count as u64)
        .map(|i| {
            let cov = CovarianceSpec { seed: base_seed + i, ..*cov_base };
            generate_field(grid, &cov, kind, params)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub schema_version: u32,
    pub kind: FieldKind,
    pub grid: GridSpec,
    pub field_ids: Vec<String>,
    pub shapes: Vec<usize>,
    pub checksums: std::collections::BTreeMap<String, String>,
}

pub const ENSEMBLE_SCHEMA: u32 = 1;

/// Writes `manifest.json` and `k.f32` (`[M, ny, nx]`).
pub fn write_ensemble(dir: &Path, fields: &[PermeabilityField]) -> Result<EnsembleManifest> {
    let first = fields.first().ok_or_else(|| Error::data("cannot write an empty ensemble"))?;
    for f in fields {
        f.validate()?;
        if f.grid != first.grid {
            return Err(Error::data(format!("field {} grid differs from {}", f.id, first.id)));
        }
    }
    io::create_dir(dir)?;
    let sum = io::write_f32(&dir.join("k.f32"), fields.iter().flat_map(|f| f.k.iter().map(|&v| v as f32)))?;
    let manifest = EnsembleManifest {
        schema_version: ENSEMBLE_SCHEMA,
        kind: first.kind,
        grid: first.grid,
        field_ids: fields.iter().map(|f| f.id.clone()).collect(),
        shapes: vec![fields.len(), first.grid.ny, first.grid.nx],
        checksums: [("k.f32".to_string(), sum)].into(),
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_ensemble(dir: &Path) -> Result<Vec<PermeabilityField>> {
    let m: EnsembleManifest = io::read_json(&dir.join("manifest.json"))?;
    if m.schema_version != ENSEMBLE_SCHEMA {
        return Err(Error::data(format!("unsupported ensemble schema {}", m.schema_version)));
    }
    let n = m.grid.len();
    if m.shapes != [m.field_ids.len(), m.grid.ny, m.grid.nx] {
        return Err(Error::data(format!("ensemble shape {:?} does not match {} field ids", m.shapes, m.field_ids.len())));
    }
    let k = io::read_f32(&dir.join("k.f32"), m.field_ids.len() * n, m.checksums.get("k.f32").map(String::as_str))?;
    let fields: Vec<PermeabilityField> = m
        .field_ids
        .iter()
        .zip(k.chunks_exact(n))
        .map(|(id, k)| PermeabilityField { id: id.clone(), kind: m.kind, grid: m.grid, k: k.iter().map(|&v| v as f64).collect() })
        .collect();
    for f in &fields {
        f.validate()?;
    }
    Ok(fields)
}
