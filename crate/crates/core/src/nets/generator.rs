use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{BatchNorm, Conv};
use super::{check_input, Cbn, GeneratorConfig, ParamSet, Pass, StatsTable, Variant, RESOLUTION};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

const LEAKY_SLOPE: f64 = 0.2;
const DROPOUT_BLOCKS: usize = 3;

#[derive(Clone, Debug)]
enum Norm {
    Plain(BatchNorm),
    Conditional(Cbn),
}

impl Norm {
    fn new<T: Scalar>(
        cfg: &GeneratorConfig,
        ps: &mut ParamSet<T>,
        table: &StatsTable,
        rng: &mut ChaCha8Rng,
        name: &str,
        c: usize,
    ) -> Self {
        match cfg.variant {
            Variant::Nli => Norm::Plain(BatchNorm::new(ps, table, name, c)),
            Variant::Ili => Norm::Conditional(Cbn::new(ps, table, rng, name, c, cfg.cbn_hidden)),
        }
    }

    fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        table: &StatsTable,
        x: &Tensor<T>,
        t: &Tensor<T>,
        pass: &Pass,
    ) -> Result<Tensor<T>> {
        match self {
            Norm::Plain(bn) => Ok(bn.forward(ps, table, x, pass)),
            Norm::Conditional(cbn) => cbn.forward(ps, table, x, t, pass),
        }
    }
}

#[derive(Clone, Debug)]
struct Contracting {
    conv1: Conv,
    norm1: Norm,
    conv2: Conv,
    norm2: Norm,
    dropout: bool,
}

#[derive(Clone, Debug)]
struct Expanding {
    conv1: Conv,
    conv2: Conv,
    norm: Norm,
}

/// U-Net generator mapping a permeability field and a time label to one state
/// variable at that time.
#[derive(Debug)]
pub struct Generator<T: Scalar = f32> {
    cfg: GeneratorConfig,
    params: ParamSet<T>,
    stats: StatsTable,
    input: Conv,
    down: Vec<Contracting>,
    up: Vec<Expanding>,
    output: Conv,
}

impl<T: Scalar> Generator<T> {
    pub fn new(cfg: &GeneratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::default();
        let stats = StatsTable::default();
        let h = cfg.hidden;
        let input = Conv::new(&mut ps, &mut rng, "input", cfg.channels, h, 1);
        let mut down = Vec::with_capacity(cfg.depth);
        let mut c = h;
        for i in 0..cfg.depth {
            let name = format!("contract{}", i + 1);
            down.push(Contracting {
                conv1: Conv::new(&mut ps, &mut rng, &format!("{name}.conv1"), c, 2 * c, 3),
                norm1: Norm::new(cfg, &mut ps, &stats, &mut rng, &format!("{name}.norm1"), 2 * c),
                conv2: Conv::new(&mut ps, &mut rng, &format!("{name}.conv2"), 2 * c, 2 * c, 3),
                norm2: Norm::new(cfg, &mut ps, &stats, &mut rng, &format!("{name}.norm2"), 2 * c),
                dropout: i < DROPOUT_BLOCKS,
            });
            c *= 2;
        }
        let mut up = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let name = format!("expand{}", i + 1);
            up.push(Expanding {
                conv1: Conv::new(&mut ps, &mut rng, &format!("{name}.conv1"), c, c / 2, 3),
                conv2: Conv::new(&mut ps, &mut rng, &format!("{name}.conv2"), c, c / 2, 3),
                norm: Norm::new(cfg, &mut ps, &stats, &mut rng, &format!("{name}.norm"), c / 2),
            });
            c /= 2;
        }
        let output = Conv::new(&mut ps, &mut rng, "output", h, cfg.channels, 1);
        Ok(Generator { cfg: cfg.clone(), params: ps, stats, input, down, up, output })
    }

    pub fn config(&self) -> &GeneratorConfig {
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

    /// Conditional normalization layers in forward order (empty for NLI).
    pub fn cbn_layers(&self) -> Vec<&Cbn> {
        let norms = self.down.iter().flat_map(|b| [&b.norm1, &b.norm2]).chain(self.up.iter().map(|b| &b.norm));
        norms
            .filter_map(|n| match n {
                Norm::Conditional(c) => Some(c),
                Norm::Plain(_) => None,
            })
            .collect()
    }

    /// `k`: `[B, 1, 128, 128]` (repeated over channels) or `[B, C, 128, 128]`;
    /// `t`: `[B]`. Returns `[B, C, 128, 128]` in (0, 1).
    pub fn forward(&self, k: &Tensor<T>, t: &Tensor<T>, pass: &mut Pass) -> Result<Tensor<T>> {
        let c = self.cfg.channels;
        let r = Some(RESOLUTION);
        if k.rank() == 4 && k.shape()[1] == 1 && c > 1 {
            check_input("generator input", k, &[None, Some(1), r, r])?;
        } else {
            check_input("generator input", k, &[None, Some(c), r, r])?;
        }
        let b = k.shape()[0];
        check_input("generator time", t, &[Some(b)])?;
        let k = k.expand(&[b, c, RESOLUTION, RESOLUTION]);
        let ps = &self.params;

        let x0 = self.input.forward(ps, &k);
        pass.record("input conv", k.shape(), x0.shape());
        let mut skips = vec![x0];
        for (i, blk) in self.down.iter().enumerate() {
            let x = skips.last().expect("skip");
            let mut h = blk.conv1.forward(ps, x);
            h = blk.norm1.forward(ps, &self.stats, &h, t, pass)?;
            h = dropout(&h, blk.dropout, self.cfg.dropout_rate, pass);
            h = h.leaky_relu(LEAKY_SLOPE);
            h = blk.conv2.forward(ps, &h);
            h = blk.norm2.forward(ps, &self.stats, &h, t, pass)?;
            h = dropout(&h, blk.dropout, self.cfg.dropout_rate, pass);
            h = h.leaky_relu(LEAKY_SLOPE).max_pool2x2();
            pass.record(&format!("contracting {}", i + 1), x.shape(), h.shape());
            skips.push(h);
        }
        let mut x = skips.pop().expect("bottleneck");
        if self.cfg.variant == Variant::Nli {
            x = x.add(&t.reshape(&[b, 1, 1, 1]));
        }
        for (i, blk) in self.up.iter().enumerate() {
            let skip = skips.pop().expect("skip");
            let h = blk.conv1.forward(ps, &x.upsample2x());
            let h = Tensor::concat(&[&h, &skip], 1);
            let h = blk.conv2.forward(ps, &h);
            let h = blk.norm.forward(ps, &self.stats, &h, t, pass)?.relu();
            pass.record(&format!("expanding {}", i + 1), x.shape(), h.shape());
            x = h;
        }
        let y = self.output.forward(ps, &x).sigmoid();
        pass.record("output conv", x.shape(), y.shape());
        Ok(y)
    }
}

/// Inverted dropout; a no-op outside training or without an RNG.
pub(crate) fn dropout<T: Scalar>(x: &Tensor<T>, enabled: bool, rate: f64, pass: &mut Pass) -> Tensor<T> {
    if !enabled || !pass.train || rate <= 0.0 {
        return x.clone();
    }
    let Some(rng) = pass.rng.as_deref_mut() else {
        return x.clone();
    };
    let keep = 1.0 - rate;
    let scale = (1.0 / keep) as f32;
    let mask: Vec<f32> = (0..x.numel()).map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 }).collect();
    x.mul_mask(&Rc::new(mask))
}
