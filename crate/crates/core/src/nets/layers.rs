//! Parameterized building blocks shared by the generator and the critic.

use std::cell::RefCell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ParamSet, Pass};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| T::c(rng.random_range(-bound..bound))).collect()
}

#[derive(Clone, Debug)]
pub(crate) struct Conv {
    w: usize,
    b: usize,
    pad: usize,
}

impl Conv {
    pub fn new<T: Scalar>(
        ps: &mut ParamSet<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
    ) -> Self {
        let fan_in = cin * k * k;
        let w = ps.add(format!("{name}.weight"), Tensor::param(uniform(rng, cout * fan_in, fan_in), &[cout, cin, k, k]));
        let b = ps.add(format!("{name}.bias"), Tensor::param(uniform(rng, cout, fan_in), &[cout]));
        Conv { w, b, pad: k / 2 }
    }

    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Tensor<T> {
        let w = ps.get(self.w);
        let co = w.shape()[0];
        x.conv2d(w, self.pad).add(&ps.get(self.b).reshape(&[1, co, 1, 1]))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Dense {
    w: usize,
    b: usize,
}

impl Dense {
    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, rng: &mut ChaCha8Rng, name: &str, nin: usize, nout: usize) -> Self {
        let w = ps.add(format!("{name}.weight"), Tensor::param(uniform(rng, nout * nin, nin), &[nout, nin]));
        let b = ps.add(format!("{name}.bias"), Tensor::param(uniform(rng, nout, nin), &[nout]));
        Dense { w, b }
    }

    /// Dense layer with explicit initial values.
    pub fn with_values<T: Scalar>(ps: &mut ParamSet<T>, name: &str, nin: usize, nout: usize, w: Vec<T>, b: Vec<T>) -> Self {
        let w = ps.add(format!("{name}.weight"), Tensor::param(w, &[nout, nin]));
        let b = ps.add(format!("{name}.bias"), Tensor::param(b, &[nout]));
        Dense { w, b }
    }

    /// `[B, in] -> [B, out]`.
    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Tensor<T> {
        x.matmul_t(ps.get(self.w), false, true).add(ps.get(self.b))
    }

    pub fn weight_index(&self) -> usize {
        self.w
    }

    pub fn bias_index(&self) -> usize {
        self.b
    }
}

/// Running mean/variance of one normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub name: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Registry of running statistics; mutated by training-mode passes.
#[derive(Debug, Default)]
pub struct StatsTable {
    pub(crate) layers: RefCell<Vec<RunningStats>>,
}

impl StatsTable {
    pub(crate) fn add(&self, name: String, channels: usize) -> usize {
        let mut l = self.layers.borrow_mut();
        l.push(RunningStats { name, mean: vec![0.0; channels], var: vec![1.0; channels] });
        l.len() - 1
    }

    pub fn snapshot(&self) -> Vec<RunningStats> {
        self.layers.borrow().clone()
    }

    pub fn restore(&self, stats: Vec<RunningStats>) -> Result<()> {
        let mut l = self.layers.borrow_mut();
        if stats.len() != l.len() {
            return Err(Error::data(format!("expected {} normalization layers, got {}", l.len(), stats.len())));
        }
        for (dst, src) in l.iter_mut().zip(stats) {
            if dst.name != src.name || dst.mean.len() != src.mean.len() || dst.var.len() != src.var.len() {
                return Err(Error::data(format!("normalization layer mismatch at {}", dst.name)));
            }
            *dst = src;
        }
        Ok(())
    }
}

/// Batch normalization without affine parameters.
///
/// Training passes use batch statistics (biased variance) and fold them into
/// the running estimates (unbiased variance); inference uses the running
/// estimates.
pub(crate) fn normalize<T: Scalar>(x: &Tensor<T>, stats: &StatsTable, layer: usize, pass: &Pass) -> Tensor<T> {
    let s = x.shape();
    let c = s[1];
    let cshape = [1, c, 1, 1];
    if pass.train {
        let n = (s[0] * s[2] * s[3]) as f64;
        let mean = x.sum_to(&cshape).scale(1.0 / n);
        let xc = x.sub(&mean);
        let var = xc.square().sum_to(&cshape).scale(1.0 / n);
        {
            let mut l = stats.layers.borrow_mut();
            let rs = &mut l[layer];
            let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            for ch in 0..c {
                let m = mean.data()[ch].f64();
                let v = var.data()[ch].f64() * unbias;
                rs.mean[ch] = (1.0 - BN_MOMENTUM) * rs.mean[ch] + BN_MOMENTUM * m;
                rs.var[ch] = (1.0 - BN_MOMENTUM) * rs.var[ch] + BN_MOMENTUM * v;
            }
        }
        xc.mul(&var.add_scalar(BN_EPS).powf(-0.5))
    } else {
        let l = stats.layers.borrow();
        let rs = &l[layer];
        let mean = Tensor::<T>::from_f64(&rs.mean, &cshape);
        let inv: Vec<f64> = rs.var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        x.sub(&mean).mul(&Tensor::from_f64(&inv, &cshape))
    }
}

/// Plain batch normalization with learned per-channel scale and shift.
#[derive(Clone, Debug)]
pub(crate) struct BatchNorm {
    gamma: usize,
    beta: usize,
    stats: usize,
}

impl BatchNorm {
    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, table: &StatsTable, name: &str, c: usize) -> Self {
        let gamma = ps.add(format!("{name}.weight"), Tensor::param(vec![T::one(); c], &[c]));
        let beta = ps.add(format!("{name}.bias"), Tensor::param(vec![T::zero(); c], &[c]));
        let stats = table.add(name.to_string(), c);
        BatchNorm { gamma, beta, stats }
    }

    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, table: &StatsTable, x: &Tensor<T>, pass: &Pass) -> Tensor<T> {
        let c = x.shape()[1];
        let y = normalize(x, table, self.stats, pass);
        y.mul(&ps.get(self.gamma).reshape(&[1, c, 1, 1])).add(&ps.get(self.beta).reshape(&[1, c, 1, 1]))
    }
}

/// Conditional batch normalization: per-sample scale and shift produced by a
/// small tanh network of the scalar condition.
///
/// The network has one input layer, three hidden layers and one linear output
/// layer. The output layer starts at zero weights with biases giving
/// `gamma = 1, beta = 0`, so a fresh layer behaves like plain normalization.
#[derive(Clone, Debug)]
pub struct Cbn {
    pub(crate) layers: Vec<Dense>,
    stats: usize,
    channels: usize,
}

impl Cbn {
    pub(crate) fn new<T: Scalar>(
        ps: &mut ParamSet<T>,
        table: &StatsTable,
        rng: &mut ChaCha8Rng,
        name: &str,
        c: usize,
        hidden: usize,
    ) -> Self {
        let mut layers = vec![Dense::new(ps, rng, &format!("{name}.net.0"), 1, hidden)];
        for i in 1..=3 {
            layers.push(Dense::new(ps, rng, &format!("{name}.net.{i}"), hidden, hidden));
        }
        let mut bias = vec![T::one(); c];
        bias.extend(vec![T::zero(); c]);
        layers.push(Dense::with_values(ps, &format!("{name}.net.4"), hidden, 2 * c, vec![T::zero(); 2 * c * hidden], bias));
        let stats = table.add(name.to_string(), c);
        Cbn { layers, stats, channels: c }
    }

    /// `(gamma, beta)` for each sample, both `[B, C]`.
    pub fn modulation<T: Scalar>(&self, ps: &ParamSet<T>, t: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
        let b = t.numel();
        let mut h = t.reshape(&[b, 1]);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(ps, &h);
            if i < last {
                h = h.tanh();
            }
        }
        let c = self.channels;
        (h.narrow(1, 0, c), h.narrow(1, c, c))
    }

    pub fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        table: &StatsTable,
        x: &Tensor<T>,
        t: &Tensor<T>,
        pass: &Pass,
    ) -> Result<Tensor<T>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.channels {
            return Err(Error::Shape(format!("CBN expects [B, {}, H, W], got {:?}", self.channels, s)));
        }
        if t.numel() != s[0] {
            return Err(Error::Shape(format!("CBN got {} conditions for batch {}", t.numel(), s[0])));
        }
        if pass.train && s[0] < 2 {
            return Err(Error::config("conditional batch normalization needs a batch of at least 2 in training mode"));
        }
        let (gamma, beta) = self.modulation(ps, t);
        let c = self.channels;
        let y = normalize(x, table, self.stats, pass);
        Ok(y.mul(&gamma.reshape(&[s[0], c, 1, 1])).add(&beta.reshape(&[s[0], c, 1, 1])))
    }
}
