//! Generator variants (NLI, ILI) and the projection patch critic.
//!
//! Layer shapes follow the fixed 128×128 U-Net ladder: a 1×1 input conv to 32
//! channels, six contracting blocks doubling channels and halving resolution
//! down to `[B, 2048, 2, 2]`, six expanding blocks back up, and a 1×1 output
//! conv with a sigmoid. The critic runs four contracting blocks from 8 to 128
//! channels and scores 8×8 patches.

mod critic;
mod generator;
mod layers;

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use critic::{reduce as reduce_critic, Critic, CriticParts};
pub use generator::Generator;
pub use layers::{Cbn, RunningStats, StatsTable};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// How the time label enters the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Scalar time added to the bottleneck.
    Nli,
    /// Time drives conditional batch normalization in every block.
    Ili,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Nli => "nli",
            Variant::Ili => "ili",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nli" => Ok(Variant::Nli),
            "ili" => Ok(Variant::Ili),
            other => Err(Error::config(format!("unknown generator variant '{other}' (expected nli or ili)"))),
        }
    }
}

pub const GENERATOR_HIDDEN: usize = 32;
pub const GENERATOR_DEPTH: usize = 6;
pub const CRITIC_HIDDEN: usize = 8;
pub const CRITIC_DEPTH: usize = 4;
pub const PATCH: usize = 8;
pub const RESOLUTION: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub variant: Variant,
    /// Input and output channels: 1 for pressure, 2 for displacement.
    pub channels: usize,
    pub hidden: usize,
    pub depth: usize,
    pub dropout_rate: f64,
    pub cbn_hidden: usize,
}

impl GeneratorConfig {
    pub fn new(variant: Variant, channels: usize) -> Self {
        GeneratorConfig {
            variant,
            channels,
            hidden: GENERATOR_HIDDEN,
            depth: GENERATOR_DEPTH,
            dropout_rate: 0.5,
            cbn_hidden: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::config("generator channels must be at least 1"));
        }
        if self.hidden != GENERATOR_HIDDEN {
            return Err(Error::config(format!(
                "generator hidden width must be {GENERATOR_HIDDEN} (NLI/ILI generator table), got {}",
                self.hidden
            )));
        }
        if self.depth != GENERATOR_DEPTH {
            return Err(Error::config(format!(
                "generator needs {GENERATOR_DEPTH} contracting and expanding blocks, got {}",
                self.depth
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.variant == Variant::Ili && self.cbn_hidden == 0 {
            return Err(Error::config("CBN hidden width must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub channels: usize,
    pub hidden: usize,
    pub depth: usize,
    pub patch: usize,
    pub d_embed: usize,
}

impl CriticConfig {
    pub fn new(channels: usize) -> Self {
        CriticConfig { channels, hidden: CRITIC_HIDDEN, depth: CRITIC_DEPTH, patch: PATCH, d_embed: 128 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::config("critic channels must be at least 1"));
        }
        if self.hidden != CRITIC_HIDDEN {
            return Err(Error::config(format!(
                "critic hidden width must be {CRITIC_HIDDEN} (critic table), got {}",
                self.hidden
            )));
        }
        if self.depth != CRITIC_DEPTH {
            return Err(Error::config(format!("critic needs {CRITIC_DEPTH} contracting blocks, got {}", self.depth)));
        }
        if self.patch != PATCH {
            return Err(Error::config(format!("critic patch must be {PATCH}x{PATCH}, got {0}x{0}", self.patch)));
        }
        if self.d_embed == 0 {
            return Err(Error::config("projection embedding width must be positive"));
        }
        Ok(())
    }
}

/// Named, ordered trainable tensors of one network.
#[derive(Debug)]
pub struct ParamSet<T: Scalar = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        ParamSet { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub(crate) fn add(&mut self, name: String, t: Tensor<T>) -> usize {
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn get(&self, i: usize) -> &Tensor<T> {
        &self.tensors[i]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|v| v.is_finite()))
    }

    /// Overwrites the values of parameter `i`, keeping its identity.
    pub fn set_values(&mut self, i: usize, values: &[T]) -> Result<()> {
        let t = &mut self.tensors[i];
        if t.numel() != values.len() {
            return Err(Error::Shape(format!(
                "parameter {} has {} values, got {}",
                self.names[i],
                t.numel(),
                values.len()
            )));
        }
        t.update_data(|d| d.copy_from_slice(values));
        Ok(())
    }
}

/// One row of a forward shape trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRow {
    pub block: String,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

/// Per-call forward options.
pub struct Pass<'a> {
    pub train: bool,
    pub rng: Option<&'a mut ChaCha8Rng>,
    pub trace: Option<&'a mut Vec<TraceRow>>,
}

impl<'a> Pass<'a> {
    /// Inference: running statistics, no dropout.
    pub fn eval() -> Self {
        Pass { train: false, rng: None, trace: None }
    }

    /// Training: batch statistics; dropout masks drawn from `rng`.
    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        Pass { train: true, rng: Some(rng), trace: None }
    }

    /// Training statistics without dropout.
    pub fn train_no_dropout() -> Self {
        Pass { train: true, rng: None, trace: None }
    }

    pub fn with_trace(mut self, trace: &'a mut Vec<TraceRow>) -> Self {
        self.trace = Some(trace);
        self
    }

    pub(crate) fn record(&mut self, block: &str, input: &[usize], output: &[usize]) {
        if let Some(tr) = self.trace.as_deref_mut() {
            tr.push(TraceRow { block: block.to_string(), input: input.to_vec(), output: output.to_vec() });
        }
    }
}

pub(crate) fn check_input<T: Scalar>(name: &str, x: &Tensor<T>, want: &[Option<usize>]) -> Result<()> {
    let s = x.shape();
    let ok = s.len() == want.len() && s.iter().zip(want).all(|(&a, b)| b.is_none_or(|b| a == b));
    if ok {
        Ok(())
    } else {
        let w: Vec<String> = want.iter().map(|d| d.map_or("B".to_string(), |v| v.to_string())).collect();
        Err(Error::Shape(format!("{name} must be [{}], got {:?}", w.join(", "), s)))
    }
}
