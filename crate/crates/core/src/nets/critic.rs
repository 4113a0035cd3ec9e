use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{BatchNorm, Conv, Dense};
use super::{check_input, CriticConfig, ParamSet, Pass, StatsTable, RESOLUTION};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug)]
struct Block {
    conv1: Conv,
    norm1: Option<BatchNorm>,
    conv2: Conv,
    norm2: Option<BatchNorm>,
}

/// Critic outputs before the final reduction.
#[derive(Clone, Debug)]
pub struct CriticParts<T: Scalar = f32> {
    /// `[B, C, 8, 8]`.
    pub patch: Tensor<T>,
    /// `[B]` inner product of the feature and time embeddings.
    pub projection: Tensor<T>,
}

/// Patch critic with a projection term for the time label.
#[derive(Debug)]
pub struct Critic<T: Scalar = f32> {
    cfg: CriticConfig,
    params: ParamSet<T>,
    stats: StatsTable,
    input: Conv,
    blocks: Vec<Block>,
    patch: Conv,
    embed_x: Dense,
    embed_t: Dense,
}

impl<T: Scalar> Critic<T> {
    pub fn new(cfg: &CriticConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::default();
        let stats = StatsTable::default();
        let input = Conv::new(&mut ps, &mut rng, "input", cfg.channels + 1, cfg.hidden, 1);
        let mut blocks = Vec::with_capacity(cfg.depth);
        let mut c = cfg.hidden;
        for i in 0..cfg.depth {
            let name = format!("contract{}", i + 1);
            let bn = i > 0;
            blocks.push(Block {
                conv1: Conv::new(&mut ps, &mut rng, &format!("{name}.conv1"), c, 2 * c, 3),
                norm1: bn.then(|| BatchNorm::new(&mut ps, &stats, &format!("{name}.norm1"), 2 * c)),
                conv2: Conv::new(&mut ps, &mut rng, &format!("{name}.conv2"), 2 * c, 2 * c, 3),
                norm2: bn.then(|| BatchNorm::new(&mut ps, &stats, &format!("{name}.norm2"), 2 * c)),
            });
            c *= 2;
        }
        let patch = Conv::new(&mut ps, &mut rng, "patch", c, cfg.channels, 1);
        let flat = c * cfg.patch * cfg.patch;
        let embed_x = Dense::new(&mut ps, &mut rng, "embed_x", flat, cfg.d_embed);
        let embed_t = Dense::new(&mut ps, &mut rng, "embed_t", 1, cfg.d_embed);
        Ok(Critic { cfg: cfg.clone(), params: ps, stats, input, blocks, patch, embed_x, embed_t })
    }

    pub fn config(&self) -> &CriticConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn stats(&self) -> &StatsTable {
        &self.stats
    }

    /// Indices of the time-embedding weight and bias.
    pub fn time_embedding_indices(&self) -> [usize; 2] {
        [self.embed_t.weight_index(), self.embed_t.bias_index()]
    }

    /// Per-sample score `[B]`: mean over the patch map of patch score plus
    /// projection term.
    pub fn forward(&self, k: &Tensor<T>, x: &Tensor<T>, t: &Tensor<T>, pass: &mut Pass) -> Result<Tensor<T>> {
        let parts = self.forward_parts(k, x, t, pass)?;
        Ok(reduce(&parts))
    }

    pub fn forward_parts(&self, k: &Tensor<T>, x: &Tensor<T>, t: &Tensor<T>, pass: &mut Pass) -> Result<CriticParts<T>> {
        let r = Some(RESOLUTION);
        check_input("critic condition", k, &[None, Some(1), r, r])?;
        let b = k.shape()[0];
        check_input("critic state", x, &[Some(b), Some(self.cfg.channels), r, r])?;
        check_input("critic time", t, &[Some(b)])?;
        let ps = &self.params;

        let inp = Tensor::concat(&[k, x], 1);
        let mut h = self.input.forward(ps, &inp);
        pass.record("input conv", inp.shape(), h.shape());
        for (i, blk) in self.blocks.iter().enumerate() {
            let before = h.shape().to_vec();
            h = blk.conv1.forward(ps, &h);
            if let Some(n) = &blk.norm1 {
                h = n.forward(ps, &self.stats, &h, pass);
            }
            h = h.leaky_relu(LEAKY_SLOPE);
            h = blk.conv2.forward(ps, &h);
            if let Some(n) = &blk.norm2 {
                h = n.forward(ps, &self.stats, &h, pass);
            }
            h = h.leaky_relu(LEAKY_SLOPE).max_pool2x2();
            pass.record(&format!("contracting {}", i + 1), &before, h.shape());
        }
        let patch = self.patch.forward(ps, &h);
        pass.record("patch conv", h.shape(), patch.shape());
        let flat = h.reshape(&[b, h.numel() / b]);
        let ex = self.embed_x.forward(ps, &flat);
        let et = self.embed_t.forward(ps, &t.reshape(&[b, 1]));
        let projection = ex.mul(&et).sum_to(&[b, 1]).reshape(&[b]);
        Ok(CriticParts { patch, projection })
    }
}

/// Mean over `[C, 8, 8]` of `patch + projection`.
pub fn reduce<T: Scalar>(parts: &CriticParts<T>) -> Tensor<T> {
    let s = parts.patch.shape();
    let b = s[0];
    let n = (s[1] * s[2] * s[3]) as f64;
    let total = parts.patch.add(&parts.projection.reshape(&[b, 1, 1, 1]));
    total.sum_to(&[b, 1, 1, 1]).scale(1.0 / n).reshape(&[b])
}
