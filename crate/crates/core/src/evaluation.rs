//! DIFF fields, relative RMSE, box statistics, arbitrary-time prediction and
//! report artifacts.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{NormalizationStats, Rasterizer, SampleRecord, Split, SplitData, Variable};
use crate::error::{Error, Result};
use crate::fields::{GridSpec, PermeabilityField};
use crate::io;
use crate::nets::{Generator, Pass, RESOLUTION};
use crate::tensor::{no_grad, Tensor};
use crate::training::{Checkpoint, EpochMetrics};

/// Elementwise `|a - b|`.
pub fn diff_field(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("DIFF of fields with {} and {} values", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect())
}

/// `sqrt(sum (x - x̂)^2) / sqrt(sum x^2)` over all entries.
pub fn relative_rmse(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Shape(format!("relative RMSE of {} references and {} predictions", x.len(), x_hat.len())));
    }
    let den: f64 = x.iter().map(|v| v * v).sum();
    if den == 0.0 || x.is_empty() {
        return Err(Error::data("relative RMSE is undefined for an all-zero reference"));
    }
    let num: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num.sqrt() / den.sqrt())
}

/// Box-plot summary with outliers beyond 1.5 IQR of the quartiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Indices into the input list.
    pub outliers: Vec<usize>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::data("box statistics of an empty list"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("non-finite metric value {v}")));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let (q25, q50, q75) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
    let iqr = q75 - q25;
    let (lo, hi) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);
    let outliers: Vec<usize> = values.iter().enumerate().filter(|(_, &v)| v < lo || v > hi).map(|(i, _)| i).collect();
    let inside = || s.iter().copied().filter(|&v| v >= lo && v <= hi);
    Ok(BoxStats {
        n: values.len(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        min: s[0],
        q25,
        q50,
        q75,
        max: s[s.len() - 1],
        whisker_low: inside().fold(f64::INFINITY, f64::min),
        whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
        outliers,
    })
}

/// Inference-mode predictions for every snapshot of a record, normalized,
/// `[Nt, C, H, W]`.
pub fn predict_record(g: &Generator, r: &SampleRecord) -> Result<Vec<f32>> {
    let nt = r.nt();
    let (h, w) = (r.height, r.width);
    let k = Tensor::new(r.k.clone(), &[1, 1, h, w]).expand(&[nt, 1, h, w]);
    let t = Tensor::new(r.t.clone(), &[nt]);
    no_grad(|| g.forward(&k, &t, &mut Pass::eval())).map(|y| y.to_vec())
}

/// Physical reference and prediction of one record over all its snapshots:
/// pressure, or displacement magnitude.
fn physical_pair(pred: &[f32], r: &SampleRecord, variable: Variable, stats: &NormalizationStats) -> (Vec<f64>, Vec<f64>) {
    let per = pred.len() / r.nt();
    let mut x = Vec::with_capacity(pred.len());
    let mut x_hat = Vec::with_capacity(pred.len());
    for n in 0..r.nt() {
        x.extend(variable.physical(variable.target(r, n), stats));
        x_hat.extend(variable.physical(&pred[n * per..(n + 1) * per], stats));
    }
    (x, x_hat)
}

/// Per-sample relative RMSE in physical units over all snapshots.
pub fn per_sample_rmse(g: &Generator, data: &SplitData, variable: Variable) -> Result<Vec<f64>> {
    evaluate_with(data, variable, |r| predict_record(g, r)).map(|m| m.per_sample)
}

/// Metrics of one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split: Split,
    pub variable: Variable,
    pub field_ids: Vec<String>,
    /// Relative RMSE of each sample over its snapshots and cells.
    pub per_sample: Vec<f64>,
    pub summary: BoxStats,
    /// Relative RMSE over every entry of the split, physical units.
    pub pooled: f64,
    /// The same in normalized units (per component for displacement).
    pub pooled_normalized: f64,
    pub clamped_values: u64,
}

/// Evaluates any predictor returning normalized `[Nt, C, H, W]` arrays.
pub fn evaluate_with(data: &SplitData, variable: Variable, mut predict: impl FnMut(&SampleRecord) -> Result<Vec<f32>>) -> Result<SplitMetrics> {
    if data.records.is_empty() {
        return Err(Error::data(format!("{} split is empty", data.manifest.split)));
    }
    let stats = data.stats();
    let mut per_sample = Vec::with_capacity(data.records.len());
    let (mut num, mut den, mut num_n, mut den_n) = (0.0, 0.0, 0.0, 0.0);
    for r in &data.records {
        let pred = predict(r)?;
        let want = r.nt() * variable.channels() * r.pixels();
        if pred.len() != want {
            return Err(Error::Shape(format!("prediction for {} has {} values, expected {want}", r.field_id, pred.len())));
        }
        let (x, x_hat) = physical_pair(&pred, r, variable, stats);
        per_sample.push(relative_rmse(&x, &x_hat)?);
        num += x.iter().zip(&x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        den += x.iter().map(|a| a * a).sum::<f64>();
        for n in 0..r.nt() {
            let per = pred.len() / r.nt();
            for (a, b) in variable.target(r, n).iter().zip(&pred[n * per..(n + 1) * per]) {
                num_n += ((a - b) as f64).powi(2);
                den_n += (*a as f64).powi(2);
            }
        }
    }
    Ok(SplitMetrics {
        split: data.manifest.split,
        variable,
        field_ids: data.records.iter().map(|r| r.field_id.clone()).collect(),
        summary: box_stats(&per_sample)?,
        per_sample,
        pooled: num.sqrt() / den.sqrt(),
        pooled_normalized: num_n.sqrt() / den_n.sqrt(),
        clamped_values: data.manifest.clamps.total(),
    })
}

pub fn evaluate_split(g: &Generator, data: &SplitData, variable: Variable) -> Result<SplitMetrics> {
    evaluate_with(data, variable, |r| predict_record(g, r))
}

/// A trained generator with the normalization it was trained under.
pub struct Surrogate {
    pub generator: Generator,
    pub variable: Variable,
    pub stats: NormalizationStats,
}

impl Surrogate {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(Surrogate { generator: ck.generator()?, variable: ck.manifest.variable, stats: ck.manifest.stats })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn tau(&self) -> f64 {
        self.stats.t.max
    }

    /// Normalized `log10 k` on the training grid, clamped into [0, 1].
    pub fn normalized_k(&self, field: &PermeabilityField) -> Result<Vec<f32>> {
        field.validate()?;
        let target = GridSpec { nx: RESOLUTION, ny: RESOLUTION, lx: field.grid.lx, ly: field.grid.ly };
        let log_k: Vec<f64> = field.k.iter().map(|k| k.log10()).collect();
        let log_k = Rasterizer::new(field.grid, target)?.apply(&log_k);
        Ok(log_k.iter().map(|&v| self.stats.log_k.normalize(v).clamp(0.0, 1.0) as f32).collect())
    }
}

/// Physical-unit predictions at query times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub field_id: String,
    pub variable: Variable,
    pub times: Vec<f64>,
    /// Per query, `[C, 128, 128]` physical values (pressure, or `ux` then `uy`).
    pub values: Vec<Vec<f64>>,
    /// Normalized generator output per query.
    pub normalized: Vec<Vec<f32>>,
    pub latency: Vec<f64>,
}

/// Runs the generator at each query time in `(0, τ]`, one query per pass.
pub fn predict_at_time(model: &Surrogate, field: &PermeabilityField, times: &[f64]) -> Result<Prediction> {
    let tau = model.tau();
    if let Some(t) = times.iter().find(|&&t| !(t > 0.0 && t <= tau)) {
        return Err(Error::OutOfDomain(format!("query time {t} s outside the trained interval (0, {tau}] s")));
    }
    let k = Tensor::new(model.normalized_k(field)?, &[1, 1, RESOLUTION, RESOLUTION]);
    let c = model.variable.channels();
    let hw = RESOLUTION * RESOLUTION;
    let mut p = Prediction { field_id: field.id.clone(), variable: model.variable, times: times.to_vec(), values: vec![], normalized: vec![], latency: vec![] };
    for &t in times {
        let start = Instant::now();
        let tn = Tensor::new(vec![model.stats.t.normalize(t) as f32], &[1]);
        let y = no_grad(|| model.generator.forward(&k, &tn, &mut Pass::eval()))?.to_vec();
        p.latency.push(start.elapsed().as_secs_f64());
        let ranges = match model.variable {
            Variable::Pressure => vec![model.stats.p],
            Variable::Displacement => vec![model.stats.ux, model.stats.uy],
        };
        let values = (0..c * hw).map(|i| ranges[i / hw].denormalize(y[i] as f64)).collect();
        p.values.push(values);
        p.normalized.push(y);
    }
    Ok(p)
}

/// Query summary written next to the values of a [`Prediction`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionManifest {
    pub field_id: String,
    pub variable: Variable,
    pub times: Vec<f64>,
    pub latency: Vec<f64>,
    /// `[Q, C, 128, 128]` physical values, little-endian f32.
    pub shape: Vec<usize>,
    pub checksum: String,
}

/// Writes `prediction.json`, `values.f32` and one `t<i>.png` per query.
pub fn write_prediction(dir: &Path, p: &Prediction) -> Result<PredictionManifest> {
    io::create_dir(dir)?;
    let c = p.variable.channels();
    let checksum = io::write_f32(&dir.join("values.f32"), p.values.iter().flatten().map(|&v| v as f32))?;
    let hw = RESOLUTION * RESOLUTION;
    for (i, v) in p.values.iter().enumerate() {
        let panels: Vec<&[f64]> = v.chunks_exact(hw).collect();
        write_panels(&dir.join(format!("t{i}.png")), &panels, RESOLUTION, RESOLUTION, 2)?;
    }
    let m = PredictionManifest {
        field_id: p.field_id.clone(),
        variable: p.variable,
        times: p.times.clone(),
        latency: p.latency.clone(),
        shape: vec![p.values.len(), c, RESOLUTION, RESOLUTION],
        checksum,
    };
    io::write_json(&dir.join("prediction.json"), &m)?;
    Ok(m)
}

/// Wall-time table in the style of a per-stage comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<(String, f64)>,
    pub fom_per_trajectory: f64,
    pub train_total: f64,
    pub inference_per_query: f64,
    pub snapshots: usize,
    /// FOM time per trajectory over the time to predict the same snapshots.
    pub speedup: f64,
}

pub fn timing_report(stages: &[(String, f64)], fom_per_trajectory: f64, train_total: f64, inference_per_query: f64, snapshots: usize) -> TimingReport {
    TimingReport {
        rows: stages.to_vec(),
        fom_per_trajectory,
        train_total,
        inference_per_query,
        snapshots,
        speedup: fom_per_trajectory / (snapshots as f64 * inference_per_query),
    }
}

pub fn timing_csv(r: &TimingReport) -> String {
    let mut s = String::from("stage,wall_time_s\n");
    for (name, t) in &r.rows {
        s += &format!("{name},{t:.6}\n");
    }
    s += &format!("fom_per_trajectory,{:.6}\ntrain_total,{:.6}\ninference_per_query,{:.6}\nspeedup,{:.3}\n", r.fom_per_trajectory, r.train_total, r.inference_per_query, r.speedup);
    s
}

pub fn per_sample_csv(m: &SplitMetrics) -> String {
    let mut s = String::from("field_id,relative_rmse\n");
    for (id, v) in m.field_ids.iter().zip(&m.per_sample) {
        s += &format!("{id},{v:.9e}\n");
    }
    s
}

/// Writes `metrics.json` and `per_sample.csv`.
pub fn write_metrics(dir: &Path, m: &SplitMetrics) -> Result<()> {
    io::create_dir(dir)?;
    io::write_json(&dir.join("metrics.json"), m)?;
    let p = dir.join("per_sample.csv");
    std::fs::write(&p, per_sample_csv(m)).map_err(|e| Error::io(&p, e))
}

// ---------------------------------------------------------------------------
// Static plots.

fn colormap(v: f64) -> [u8; 3] {
    // Blue-white-red ramp.
    let v = v.clamp(0.0, 1.0);
    let (r, g, b) = if v < 0.5 {
        let a = v / 0.5;
        (a, a, 1.0)
    } else {
        let a = (1.0 - v) / 0.5;
        (1.0, a, a)
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

/// Side-by-side panels of `[H, W]` fields (row 0 at the bottom), each scaled
/// to its own range, separated by white gutters.
pub fn write_panels(path: &Path, panels: &[&[f64]], h: usize, w: usize, scale: usize) -> Result<()> {
    let gap = 4;
    let (pw, ph) = (w * scale, h * scale);
    let width = panels.len() * pw + (panels.len().saturating_sub(1)) * gap;
    let mut img = image::RgbImage::from_pixel(width.max(1) as u32, ph as u32, image::Rgb([255, 255, 255]));
    for (pi, f) in panels.iter().enumerate() {
        if f.len() != h * w {
            return Err(Error::Shape(format!("panel {pi} has {} values, expected {}", f.len(), h * w)));
        }
        let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let x0 = pi * (pw + gap);
        for y in 0..ph {
            for x in 0..pw {
                let v = f[(h - 1 - y / scale) * w + x / scale];
                img.put_pixel((x0 + x) as u32, y as u32, image::Rgb(colormap((v - lo) / span)));
            }
        }
    }
    img.save(path).map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Box plot of the per-sample validation metric for every epoch.
pub fn write_history_plot(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    let (col, height, pad) = (24usize, 240usize, 10usize);
    let width = pad * 2 + col * history.len().max(1);
    let mut img = image::RgbImage::from_pixel(width as u32, (height + 2 * pad) as u32, image::Rgb([255, 255, 255]));
    let hi = history.iter().flat_map(|m| m.per_sample.iter().copied()).fold(0.0, f64::max).max(1e-12);
    let y_of = |v: f64| pad + height - ((v / hi).clamp(0.0, 1.0) * height as f64) as usize;
    let mut put = |x: usize, y: usize, c: [u8; 3]| {
        if x < width && y < height + 2 * pad {
            img.put_pixel(x as u32, y as u32, image::Rgb(c));
        }
    };
    for (i, m) in history.iter().enumerate() {
        let x0 = pad + i * col + 4;
        let x1 = x0 + col - 8;
        let b = &m.summary;
        let (yq25, yq75, yq50) = (y_of(b.q25), y_of(b.q75), y_of(b.q50));
        for y in yq75..=yq25 {
            put(x0, y, [0, 0, 0]);
            put(x1, y, [0, 0, 0]);
        }
        for x in x0..=x1 {
            put(x, yq25, [0, 0, 0]);
            put(x, yq75, [0, 0, 0]);
            put(x, yq50, [200, 0, 0]);
            put(x, y_of(b.mean), [0, 0, 200]);
        }
        let xm = (x0 + x1) / 2;
        for y in y_of(b.whisker_high)..=yq75 {
            put(xm, y, [0, 0, 0]);
        }
        for y in yq25..=y_of(b.whisker_low) {
            put(xm, y, [0, 0, 0]);
        }
        for &o in &b.outliers {
            let y = y_of(m.per_sample[o]);
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                put(xm + dx, y + dy, [0, 0, 0]);
            }
        }
    }
    img.save(path).map_err(|e| Error::io(path, std::io::Error::other(e)))
}

#[cfg(test)]
mod tests;
