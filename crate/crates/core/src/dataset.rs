//! Rasterization to the training grid, [0,1] normalization, splits and the
//! per-split container.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{GridSpec, PermeabilityField};
use crate::fom::{self, Trajectory};
use crate::io;

pub const DATASET_SCHEMA: u32 = 1;

/// Row-major value layout shared by every array in a split container.
pub const LAYOUT: &str = "row-major, row 0 at y = 0 (bottom), column 0 at x = 0";

/// Interpolation weights from `n_in` source knots to `n_out` targets.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineMatrix {
    pub n_out: usize,
    pub n_in: usize,
    pub w: Vec<f64>,
}

impl SplineMatrix {
    /// Not-a-knot cubic spline through `knots`, evaluated at `targets`. Targets
    /// outside the knot range use the end polynomial pieces.
    pub fn cubic(knots: &[f64], targets: &[f64]) -> Result<Self> {
        let n = knots.len();
        if n == 0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("spline knots must be strictly increasing and nonempty"));
        }
        let mut w = vec![0.0; targets.len() * n];
        let mut e = vec![0.0; n];
        for m in 0..n {
            e.fill(0.0);
            e[m] = 1.0;
            let col = if n < 4 { lagrange(knots, &e, targets) } else { not_a_knot(knots, &e, targets) };
            for (r, v) in col.into_iter().enumerate() {
                w[r * n + m] = v;
            }
        }
        Ok(SplineMatrix { n_out: targets.len(), n_in: n, w })
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.w.chunks_exact(self.n_in).map(|row| row.iter().zip(y).map(|(a, b)| a * b).sum()).collect()
    }
}

fn lagrange(x: &[f64], y: &[f64], targets: &[f64]) -> Vec<f64> {
    targets
        .iter()
        .map(|&t| {
            (0..x.len())
                .map(|i| y[i] * (0..x.len()).filter(|&j| j != i).map(|j| (t - x[j]) / (x[i] - x[j])).product::<f64>())
                .sum()
        })
        .collect()
}

fn not_a_knot(x: &[f64], y: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    // Second derivatives from a dense solve; n is a grid dimension.
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    a[0] = h[1];
    a[1] = -(h[0] + h[1]);
    a[2] = h[0];
    for i in 1..n - 1 {
        a[i * n + i - 1] = h[i - 1];
        a[i * n + i] = 2.0 * (h[i - 1] + h[i]);
        a[i * n + i + 1] = h[i];
        b[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    let r = (n - 1) * n;
    a[r + n - 3] = h[n - 2];
    a[r + n - 2] = -(h[n - 3] + h[n - 2]);
    a[r + n - 1] = h[n - 3];
    let m = dense_solve(a, b, n);
    targets
        .iter()
        .map(|&t| {
            let i = x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
            let (hi, l, r) = (h[i], x[i + 1] - t, t - x[i]);
            m[i] * l.powi(3) / (6.0 * hi)
                + m[i + 1] * r.powi(3) / (6.0 * hi)
                + (y[i] / hi - m[i] * hi / 6.0) * l
                + (y[i + 1] / hi - m[i + 1] * hi / 6.0) * r
        })
        .collect()
}

fn dense_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Vec<f64> {
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs())).expect("row");
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        let d = a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k] / d;
            if f != 0.0 {
                for c in k..n {
                    a[i * n + c] -= f * a[k * n + c];
                }
                b[i] -= f * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k * n + c] * b[c]).sum();
        b[k] = (b[k] - s) / a[k * n + k];
    }
    b
}

/// Separable resampler between the cell centers of two grids on the same domain.
#[derive(Clone, Debug)]
pub struct Rasterizer {
    src: GridSpec,
    dst: GridSpec,
    wx: SplineMatrix,
    wy: SplineMatrix,
}

impl Rasterizer {
    pub fn new(src: GridSpec, dst: GridSpec) -> Result<Self> {
        src.validate()?;
        dst.validate()?;
        if (src.lx - dst.lx).abs() > 1e-12 * src.lx || (src.ly - dst.ly).abs() > 1e-12 * src.ly {
            return Err(Error::config(format!(
                "unsupported resampling between domains {}x{} and {}x{}",
                src.lx, src.ly, dst.lx, dst.ly
            )));
        }
        Ok(Rasterizer { src, dst, wx: SplineMatrix::cubic(&src.xc(), &dst.xc())?, wy: SplineMatrix::cubic(&src.yc(), &dst.yc())? })
    }

    pub fn is_identity(&self) -> bool {
        self.src == self.dst
    }

    /// Resamples one `[ny, nx]` array.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        if self.is_identity() {
            return f.to_vec();
        }
        let (nx, ny) = (self.src.nx, self.src.ny);
        let (mx, my) = (self.dst.nx, self.dst.ny);
        // Rows first: [ny, mx].
        let mut rows = vec![0.0; ny * mx];
        for i in 0..ny {
            let out = self.wx.apply(&f[i * nx..(i + 1) * nx]);
            rows[i * mx..(i + 1) * mx].copy_from_slice(&out);
        }
        let mut out = vec![0.0; my * mx];
        for r in 0..my {
            let w = &self.wy.w[r * ny..(r + 1) * ny];
            for (i, &wi) in w.iter().enumerate() {
                if wi != 0.0 {
                    for (o, v) in out[r * mx..(r + 1) * mx].iter_mut().zip(&rows[i * mx..(i + 1) * mx]) {
                        *o += wi * v;
                    }
                }
            }
        }
        out
    }
}

/// Physical-unit arrays on the training grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalRecord {
    pub field_id: String,
    pub height: usize,
    pub width: usize,
    /// `log10(k)`, `[H, W]`.
    pub log_k: Vec<f64>,
    /// Seconds, `[Nt]`.
    pub t: Vec<f64>,
    /// Pascal, `[Nt, H, W]`.
    pub p: Vec<f64>,
    /// Metres, `[Nt, 2, H, W]`.
    pub u: Vec<f64>,
}

pub fn rasterize(traj: &Trajectory, field: &PermeabilityField, out_grid: GridSpec) -> Result<PhysicalRecord> {
    if traj.grid != field.grid {
        return Err(Error::data(format!("trajectory {} and field {} grids differ", traj.field_id, field.id)));
    }
    field.validate()?;
    let r = Rasterizer::new(field.grid, out_grid)?;
    let log_k: Vec<f64> = field.k.iter().map(|k| k.log10()).collect();
    let n = field.grid.len();
    let mut p = Vec::with_capacity(traj.p.len() * out_grid.len());
    let mut u = Vec::with_capacity(2 * traj.u.len() * out_grid.len());
    for (pn, un) in traj.p.iter().zip(&traj.u) {
        p.extend(r.apply(pn));
        u.extend(r.apply(&un[..n]));
        u.extend(r.apply(&un[n..]));
    }
    Ok(PhysicalRecord {
        field_id: field.id.clone(),
        height: out_grid.ny,
        width: out_grid.nx,
        log_k: r.apply(&log_k),
        t: traj.times.clone(),
        p,
        u,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn empty() -> Self {
        Range { min: f64::INFINITY, max: f64::NEG_INFINITY }
    }

    pub fn include(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    pub fn merge(&mut self, o: &Range) {
        self.min = self.min.min(o.min);
        self.max = self.max.max(o.max);
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.max > self.min) {
            return Err(Error::data(format!("degenerate {name} range [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

/// Per-quantity min/max in physical units (`log_k` in log10 m²).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub log_k: Range,
    pub t: Range,
    pub p: Range,
    pub ux: Range,
    pub uy: Range,
}

impl NormalizationStats {
    pub fn validate(&self) -> Result<()> {
        self.log_k.check("log_k")?;
        self.t.check("t")?;
        self.p.check("p")?;
        self.ux.check("ux")?;
        self.uy.check("uy")
    }

    fn of(r: &PhysicalRecord) -> Self {
        let mut s = NormalizationStats { log_k: Range::empty(), t: Range::empty(), p: Range::empty(), ux: Range::empty(), uy: Range::empty() };
        r.log_k.iter().for_each(|&v| s.log_k.include(v));
        r.p.iter().for_each(|&v| s.p.include(v));
        let hw = r.height * r.width;
        for (c, chunk) in r.u.chunks_exact(hw).enumerate() {
            let range = if c % 2 == 0 { &mut s.ux } else { &mut s.uy };
            chunk.iter().for_each(|&v| range.include(v));
        }
        let tau = r.t.iter().copied().fold(0.0, f64::max);
        s.t = Range { min: 0.0, max: tau };
        s
    }

    fn merge(&mut self, o: &Self) {
        self.log_k.merge(&o.log_k);
        self.t.merge(&o.t);
        self.p.merge(&o.p);
        self.ux.merge(&o.ux);
        self.uy.merge(&o.uy);
    }

    /// Accumulates stats one record at a time.
    pub fn accumulate(acc: Option<Self>, r: &PhysicalRecord) -> Self {
        let s = Self::of(r);
        match acc {
            Some(mut a) => {
                a.merge(&s);
                a
            }
            None => s,
        }
    }
}

/// Min/max over the training records; the time range is `(0, τ]`.
pub fn compute_stats(training: &[PhysicalRecord]) -> Result<NormalizationStats> {
    let s = training.iter().fold(None, |acc, r| Some(NormalizationStats::accumulate(acc, r)));
    let s = s.ok_or_else(|| Error::data("cannot compute normalization statistics of an empty training split"))?;
    s.validate()?;
    Ok(s)
}

/// Values pushed into [0,1] during normalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampCounts {
    pub log_k: u64,
    pub t: u64,
    pub p: u64,
    pub ux: u64,
    pub uy: u64,
}

impl ClampCounts {
    pub fn total(&self) -> u64 {
        self.log_k + self.t + self.p + self.ux + self.uy
    }

    pub fn add(&mut self, o: &ClampCounts) {
        self.log_k += o.log_k;
        self.t += o.t;
        self.p += o.p;
        self.ux += o.ux;
        self.uy += o.uy;
    }
}

/// Normalized arrays on the training grid, shapes as in [`PhysicalRecord`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub field_id: String,
    pub height: usize,
    pub width: usize,
    pub k: Vec<f32>,
    pub t: Vec<f32>,
    pub p: Vec<f32>,
    pub u: Vec<f32>,
}

impl SampleRecord {
    pub fn nt(&self) -> usize {
        self.t.len()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn p_at(&self, n: usize) -> &[f32] {
        let hw = self.pixels();
        &self.p[n * hw..(n + 1) * hw]
    }

    /// Both displacement components at snapshot `n`, `[2, H, W]`.
    pub fn u_at(&self, n: usize) -> &[f32] {
        let hw = 2 * self.pixels();
        &self.u[n * hw..(n + 1) * hw]
    }

    pub fn validate(&self) -> Result<()> {
        let (hw, nt) = (self.pixels(), self.nt());
        if self.k.len() != hw || self.p.len() != nt * hw || self.u.len() != 2 * nt * hw {
            return Err(Error::Shape(format!("record {} arrays do not match {}x{} with {nt} snapshots", self.field_id, self.height, self.width)));
        }
        for (name, v) in [("k", &self.k), ("t", &self.t), ("p", &self.p), ("u", &self.u)] {
            if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::data(format!("record {}: {name} value {x} outside [0, 1]", self.field_id)));
            }
        }
        Ok(())
    }
}

fn norm_into(range: &Range, v: f64, clamps: &mut u64) -> f32 {
    let x = range.normalize(v) as f32;
    if x < 0.0 {
        *clamps += 1;
        0.0
    } else if x > 1.0 {
        *clamps += 1;
        1.0
    } else {
        x
    }
}

pub fn normalize(r: &PhysicalRecord, stats: &NormalizationStats) -> Result<(SampleRecord, ClampCounts)> {
    stats.validate()?;
    let mut c = ClampCounts::default();
    let hw = r.height * r.width;
    let k = r.log_k.iter().map(|&v| norm_into(&stats.log_k, v, &mut c.log_k)).collect();
    let t = r.t.iter().map(|&v| norm_into(&stats.t, v, &mut c.t)).collect();
    let p = r.p.iter().map(|&v| norm_into(&stats.p, v, &mut c.p)).collect();
    let mut u = Vec::with_capacity(r.u.len());
    for (ch, chunk) in r.u.chunks_exact(hw).enumerate() {
        if ch % 2 == 0 {
            u.extend(chunk.iter().map(|&v| norm_into(&stats.ux, v, &mut c.ux)));
        } else {
            u.extend(chunk.iter().map(|&v| norm_into(&stats.uy, v, &mut c.uy)));
        }
    }
    let s = SampleRecord { field_id: r.field_id.clone(), height: r.height, width: r.width, k, t, p, u };
    s.validate()?;
    Ok((s, c))
}

pub fn denormalize(s: &SampleRecord, stats: &NormalizationStats) -> Result<PhysicalRecord> {
    stats.validate()?;
    let hw = s.pixels();
    let map = |r: &Range, v: &[f32]| v.iter().map(|&x| r.denormalize(x as f64)).collect::<Vec<f64>>();
    let mut u = Vec::with_capacity(s.u.len());
    for (ch, chunk) in s.u.chunks_exact(hw).enumerate() {
        u.extend(map(if ch % 2 == 0 { &stats.ux } else { &stats.uy }, chunk));
    }
    Ok(PhysicalRecord {
        field_id: s.field_id.clone(),
        height: s.height,
        width: s.width,
        log_k: map(&stats.log_k, &s.k),
        t: map(&stats.t, &s.t),
        p: map(&stats.p, &s.p),
        u,
    })
}

/// Primary variable a model predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Pressure,
    Displacement,
}

impl Variable {
    pub fn channels(self) -> usize {
        match self {
            Variable::Pressure => 1,
            Variable::Displacement => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variable::Pressure => "pressure",
            Variable::Displacement => "displacement",
        }
    }

    /// Normalized target at snapshot `n`, `[C, H, W]`.
    pub fn target(self, r: &SampleRecord, n: usize) -> &[f32] {
        match self {
            Variable::Pressure => r.p_at(n),
            Variable::Displacement => r.u_at(n),
        }
    }

    /// Physical values of one normalized snapshot `[C, H, W]`: pressure, or
    /// the displacement magnitude.
    pub fn physical(self, x: &[f32], stats: &NormalizationStats) -> Vec<f64> {
        match self {
            Variable::Pressure => x.iter().map(|&v| stats.p.denormalize(v as f64)).collect(),
            Variable::Displacement => {
                let (ux, uy) = x.split_at(x.len() / 2);
                ux.iter()
                    .zip(uy)
                    .map(|(&a, &b)| stats.ux.denormalize(a as f64).hypot(stats.uy.denormalize(b as f64)))
                    .collect()
            }
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pressure" | "p" => Ok(Variable::Pressure),
            "displacement" | "u" => Ok(Variable::Displacement),
            _ => Err(Error::config(format!("unknown variable {s:?} (expected pressure or displacement)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Training,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Training, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Training => "training",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown split {s:?} (expected training, validation or test)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub split: Split,
    pub field_ids: Vec<String>,
    pub m_train: usize,
    pub m_validation: usize,
    pub m_test: usize,
}

/// Deterministic shuffled partition of `ids` into training, validation and test.
pub fn build_splits(ids: &[String], m_train: usize, m_val: usize, m_test: usize, seed: u64) -> Result<[SplitManifest; 3]> {
    let unique: HashSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::data("ensemble contains duplicate field ids"));
    }
    if m_train == 0 {
        return Err(Error::config("the training split needs at least one field"));
    }
    let need = m_train + m_val + m_test;
    if need > ids.len() {
        return Err(Error::config(format!("splits need {need} fields but the ensemble has {}", ids.len())));
    }
    let mut order: Vec<String> = ids.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mk = |split, r: std::ops::Range<usize>| SplitManifest { split, field_ids: order[r].to_vec(), m_train, m_validation: m_val, m_test };
    Ok([mk(Split::Training, 0..m_train), mk(Split::Validation, m_train..m_train + m_val), mk(Split::Test, m_train + m_val..need)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainerManifest {
    pub schema_version: u32,
    pub split: Split,
    pub field_ids: Vec<String>,
    pub shapes: BTreeMap<String, Vec<usize>>,
    pub checksums: BTreeMap<String, String>,
    pub stats: NormalizationStats,
    pub layout: String,
    pub m_train: usize,
    pub m_validation: usize,
    pub m_test: usize,
    pub clamps: ClampCounts,
}

impl ContainerManifest {
    pub fn len(&self) -> usize {
        self.field_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.field_ids.is_empty()
    }

    fn shape(&self, name: &str) -> Result<&[usize]> {
        self.shapes.get(name).map(Vec::as_slice).ok_or_else(|| Error::data(format!("manifest has no shape for {name}")))
    }
}

/// A loaded split.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub manifest: ContainerManifest,
    pub records: Vec<SampleRecord>,
}

impl SplitData {
    pub fn stats(&self) -> &NormalizationStats {
        &self.manifest.stats
    }

    pub fn nt(&self) -> usize {
        self.records.first().map_or(0, SampleRecord::nt)
    }
}

const ARRAYS: [&str; 4] = ["k", "t", "p", "u"];

pub fn write_container(
    dir: &Path,
    records: &[SampleRecord],
    split: &SplitManifest,
    stats: &NormalizationStats,
    clamps: ClampCounts,
) -> Result<ContainerManifest> {
    let ids: Vec<String> = records.iter().map(|r| r.field_id.clone()).collect();
    if ids != split.field_ids {
        return Err(Error::data(format!("{} split lists {} ids but {} records were given", split.split, split.field_ids.len(), ids.len())));
    }
    let (h, w, nt) = records.first().map_or((0, 0, 0), |r| (r.height, r.width, r.nt()));
    for r in records {
        r.validate()?;
        if (r.height, r.width, r.nt()) != (h, w, nt) {
            return Err(Error::Shape(format!("record {} shape differs from {}", r.field_id, records[0].field_id)));
        }
    }
    io::create_dir(dir)?;
    let m = records.len();
    let shapes: BTreeMap<String, Vec<usize>> = [
        ("k".to_string(), vec![m, h, w]),
        ("t".to_string(), vec![m, nt]),
        ("p".to_string(), vec![m, nt, h, w]),
        ("u".to_string(), vec![m, nt, 2, h, w]),
    ]
    .into();
    let mut checksums = BTreeMap::new();
    for name in ARRAYS {
        let file = format!("{name}.f32");
        let values = records.iter().flat_map(|r| match name {
            "k" => r.k.iter(),
            "t" => r.t.iter(),
            "p" => r.p.iter(),
            _ => r.u.iter(),
        });
        let sum = io::write_f32(&dir.join(&file), values.copied())?;
        checksums.insert(file, sum);
    }
    let manifest = ContainerManifest {
        schema_version: DATASET_SCHEMA,
        split: split.split,
        field_ids: ids,
        shapes,
        checksums,
        stats: *stats,
        layout: LAYOUT.to_string(),
        m_train: split.m_train,
        m_validation: split.m_validation,
        m_test: split.m_test,
        clamps,
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<ContainerManifest> {
    let m: ContainerManifest = io::read_json(&dir.join("manifest.json"))?;
    if m.schema_version != DATASET_SCHEMA {
        return Err(Error::data(format!("{}: unsupported dataset schema {}", dir.display(), m.schema_version)));
    }
    m.stats.validate()?;
    Ok(m)
}

pub fn read_container(dir: &Path) -> Result<SplitData> {
    let manifest = read_manifest(dir)?;
    let m = manifest.len();
    let k_shape = manifest.shape("k")?.to_vec();
    let t_shape = manifest.shape("t")?.to_vec();
    let (h, w, nt) = match (k_shape.as_slice(), t_shape.as_slice()) {
        ([mk, h, w], [mt, nt]) if *mk == m && *mt == m => (*h, *w, *nt),
        _ => {
            return Err(Error::data(format!(
                "{}: manifest lists {m} field ids but array shapes are {k_shape:?} and {t_shape:?}",
                dir.display()
            )))
        }
    };
    if manifest.shape("p")? != [m, nt, h, w] || manifest.shape("u")? != [m, nt, 2, h, w] {
        return Err(Error::data(format!("{}: inconsistent p/u shapes in manifest", dir.display())));
    }
    let mut arrays = Vec::new();
    for name in ARRAYS {
        let file = format!("{name}.f32");
        let len: usize = manifest.shape(name)?.iter().product();
        let sum = manifest.checksums.get(&file).ok_or_else(|| Error::data(format!("manifest has no checksum for {file}")))?;
        arrays.push(io::read_f32(&dir.join(&file), len, Some(sum))?);
    }
    let (hw, nt_hw) = (h * w, nt * h * w);
    let records = manifest
        .field_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let r = SampleRecord {
                field_id: id.clone(),
                height: h,
                width: w,
                k: arrays[0][i * hw..(i + 1) * hw].to_vec(),
                t: arrays[1][i * nt..(i + 1) * nt].to_vec(),
                p: arrays[2][i * nt_hw..(i + 1) * nt_hw].to_vec(),
                u: arrays[3][2 * i * nt_hw..2 * (i + 1) * nt_hw].to_vec(),
            };
            r.validate()?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitData { manifest, records })
}

/// Summary of a dataset build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub stats: NormalizationStats,
    pub counts: [usize; 3],
    pub clamps: [ClampCounts; 3],
}

/// Rasterizes and normalizes a FOM run directory into `out/{training,validation,test}`.
pub fn build_dataset(fom_dir: &Path, sizes: [usize; 3], seed: u64, out_grid: GridSpec, out: &Path) -> Result<DatasetSummary> {
    let fm = fom::read_manifest(fom_dir)?;
    let splits = build_splits(&fm.field_ids, sizes[0], sizes[1], sizes[2], seed)?;
    let load = |id: &str| -> Result<PhysicalRecord> {
        let (field, traj) = fom::read_trajectory(fom_dir, &fm, id)?;
        rasterize(&traj, &field, out_grid)
    };
    let mut stats = None;
    for id in &splits[0].field_ids {
        stats = Some(NormalizationStats::accumulate(stats, &load(id)?));
    }
    let stats = stats.ok_or_else(|| Error::data("empty training split"))?;
    stats.validate()?;
    let mut clamps = [ClampCounts::default(); 3];
    for (s, split) in splits.iter().enumerate() {
        let mut records = Vec::with_capacity(split.field_ids.len());
        for id in &split.field_ids {
            let (rec, c) = normalize(&load(id)?, &stats)?;
            clamps[s].add(&c);
            records.push(rec);
        }
        if clamps[s].total() > 0 {
            log::warn!("{} split: {} values clamped into [0, 1]", split.split, clamps[s].total());
        }
        write_container(&out.join(split.split.name()), &records, split, &stats, clamps[s])?;
    }
    Ok(DatasetSummary { stats, counts: sizes, clamps })
}

#[cfg(test)]
mod tests;
