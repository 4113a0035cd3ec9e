//! Fixtures shared by the benchmarks.

use porogan::config::ExperimentConfig;
use porogan::fields;
use porogan::tensor::Tensor;
use porogan::training::Batch;
use porogan::{GridSpec, PermeabilityField, RESOLUTION};

/// One Zinn-Harvey field on an `n x n` unit square.
pub fn field(n: usize) -> PermeabilityField {
    let cfg = ExperimentConfig { fom_grid: n, ..ExperimentConfig::default() };
    fields::generate_field(&cfg.fom_grid_spec(), &cfg.covariance_spec(), cfg.field_kind, &cfg.field_params).expect("valid default field settings")
}

pub fn log10_k(f: &PermeabilityField) -> Vec<f64> {
    f.k.iter().map(|k| k.log10()).collect()
}

pub fn training_grid() -> GridSpec {
    GridSpec::square(RESOLUTION, 1.0)
}

/// Smooth normalized inputs and targets, `b` samples with `c` channels.
pub fn batch(b: usize, c: usize) -> Batch {
    let hw = RESOLUTION * RESOLUTION;
    let wave = |i: usize, s: f32| 0.5 + 0.4 * ((i % RESOLUTION) as f32 * 0.05 + (i / RESOLUTION) as f32 * 0.03 + s).sin();
    let k = (0..b * hw).map(|i| wave(i % hw, (i / hw) as f32)).collect();
    let t = (0..b).map(|i| (i + 1) as f32 / (b + 1) as f32).collect();
    let x = (0..b * c * hw).map(|i| wave(i % hw, 1.7 * (i / hw) as f32)).collect();
    Batch { k: Tensor::new(k, &[b, 1, RESOLUTION, RESOLUTION]), t: Tensor::new(t, &[b]), x: Tensor::new(x, &[b, c, RESOLUTION, RESOLUTION]) }
}
