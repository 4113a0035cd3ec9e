//! Flat `key = value` configuration files and the experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Keys are matched exactly
//! and unknown keys are rejected. Lists are comma separated.

use std::collections::{BTreeMap, BTreeSet};
use std::cell::RefCell;
use std::fmt::{self, Display};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::Variable;
use crate::error::{Error, Result};
use crate::fields::{CovarianceModel, CovarianceSpec, FieldKind, FieldParams, GridSpec};
use crate::fom::{BoundaryConditions, FomParameters, SolverOptions, TimeGrid};
use crate::io;
use crate::nets::{CriticConfig, GeneratorConfig, Variant, CRITIC_HIDDEN, GENERATOR_HIDDEN, PATCH};
use crate::training::TrainConfig;

/// Parsed `key = value` pairs; every key must be consumed by [`KeyValues::finish`].
#[derive(Debug)]
pub struct KeyValues {
    source: String,
    entries: BTreeMap<String, (usize, String)>,
    taken: RefCell<BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(format!("{source}:{}: expected `key = value`, got `{line}`", i + 1)));
            };
            let k = k.trim().to_string();
            if k.is_empty() {
                return Err(Error::config(format!("{source}:{}: empty key", i + 1)));
            }
            if let Some((first, _)) = entries.insert(k.clone(), (i + 1, v.trim().to_string())) {
                return Err(Error::config(format!("{source}:{}: key `{k}` already set on line {first}", i + 1)));
            }
        }
        Ok(KeyValues { source: source.to_string(), entries, taken: RefCell::new(BTreeSet::new()) })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        let v = self.entries.get(key);
        if v.is_some() {
            self.taken.borrow_mut().insert(key.to_string());
        }
        v
    }

    /// Parses `key` when present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|(line, v)| v.parse().map_err(|e| Error::config(format!("{}:{line}: invalid value `{v}` for `{key}`: {e}", self.source))))
            .transpose()
    }

    /// Overwrites `target` when `key` is present.
    pub fn set<T: FromStr>(&self, key: &str, target: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *target = v;
        }
        Ok(())
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some((line, v)) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .map(|s| s.parse().map_err(|e| Error::config(format!("{}:{line}: invalid entry `{s}` for `{key}`: {e}", self.source))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Fails on keys nobody asked for.
    pub fn finish(&self) -> Result<()> {
        let taken = self.taken.borrow();
        let unknown: Vec<String> =
            self.entries.iter().filter(|(k, _)| !taken.contains(*k)).map(|(k, (line, _))| format!("`{k}` (line {line})")).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("{}: unknown keys {}", self.source, unknown.join(", "))))
        }
    }
}

/// `none` or a number.
#[derive(Clone, Copy, Debug, PartialEq)]
struct OptF64(Option<f64>);

impl FromStr for OptF64 {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("none") {
            Ok(OptF64(None))
        } else {
            s.parse().map(|v| OptF64(Some(v))).map_err(|e| format!("{e}"))
        }
    }
}

/// Reads the keys named after the [`FomParameters`] and [`BoundaryConditions`] fields.
pub fn apply_fom(kv: &KeyValues, params: &mut FomParameters, bc: &mut BoundaryConditions) -> Result<()> {
    kv.set("alpha", &mut params.alpha)?;
    kv.set("m_biot", &mut params.m_biot)?;
    kv.set("k_bulk", &mut params.k_bulk)?;
    kv.set("g_shear", &mut params.g_shear)?;
    kv.set("mu_f", &mut params.mu_f)?;
    if let Some(f) = kv.list::<f64>("body_force")? {
        params.body_force = f.try_into().map_err(|_| Error::config("body_force needs two comma-separated components"))?;
    }
    kv.set("p_top", &mut bc.p_top)?;
    if let Some(OptF64(v)) = kv.get("p_bottom")? {
        bc.p_bottom = v;
    }
    kv.set("traction_top", &mut bc.traction_top)?;
    kv.set("p_init", &mut bc.p_init)?;
    kv.set("sides_no_flow", &mut bc.sides_no_flow)?;
    kv.set("sides_fixed_normal", &mut bc.sides_fixed_normal)?;
    Ok(())
}

/// Reads the keys named after the [`TrainConfig`] fields.
pub fn apply_train(kv: &KeyValues, cfg: &mut TrainConfig) -> Result<()> {
    apply_train_hyperparameters(kv, cfg)?;
    kv.set("seed", &mut cfg.seed)
}

/// [`apply_train`] without `seed`, which an experiment derives from its own.
fn apply_train_hyperparameters(kv: &KeyValues, cfg: &mut TrainConfig) -> Result<()> {
    kv.set("batch_size", &mut cfg.batch_size)?;
    kv.set("epochs", &mut cfg.epochs)?;
    kv.set("lambda_r", &mut cfg.lambda_r)?;
    kv.set("lambda_p", &mut cfg.lambda_p)?;
    kv.set("eta_max", &mut cfg.eta_max)?;
    kv.set("eta_min", &mut cfg.eta_min)?;
    kv.set("beta1", &mut cfg.beta1)?;
    kv.set("beta2", &mut cfg.beta2)?;
    kv.set("adam_eps", &mut cfg.adam_eps)?;
    kv.set("critic_updates_per_gen", &mut cfg.critic_updates_per_gen)
}

/// A FOM parameter file: [`apply_fom`] keys only.
pub fn read_fom_params(path: &Path) -> Result<(FomParameters, BoundaryConditions)> {
    let kv = KeyValues::read(path)?;
    let (mut params, mut bc) = (FomParameters::default(), BoundaryConditions::paper());
    apply_fom(&kv, &mut params, &mut bc)?;
    kv.finish()?;
    params.validate()?;
    bc.validate()?;
    Ok((params, bc))
}

/// A training configuration file: [`apply_train`] keys only.
pub fn read_train_config(path: &Path) -> Result<TrainConfig> {
    let kv = KeyValues::read(path)?;
    let mut cfg = TrainConfig::default();
    apply_train(&kv, &mut cfg)?;
    kv.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Everything one pipeline run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_root: PathBuf,

    pub field_kind: FieldKind,
    pub field_count: usize,
    /// FOM cells per side.
    pub fom_grid: usize,
    pub domain_length: f64,
    pub covariance: CovarianceModel,
    pub variance: f64,
    /// Defaults to `domain_length / 16`.
    pub corr_len: Option<f64>,
    pub field_params: FieldParams,

    pub fom: FomParameters,
    pub bc: BoundaryConditions,
    pub nt: usize,
    pub tau: f64,
    pub substeps: usize,

    pub m_train: usize,
    pub m_validation: usize,
    pub m_test: usize,

    pub variants: Vec<Variant>,
    pub variables: Vec<Variable>,
    pub generator_hidden: usize,
    pub critic_hidden: usize,
    pub patch: usize,

    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_root: PathBuf::from("runs/default"),
            field_kind: FieldKind::ZinnHarvey,
            field_count: 64,
            fom_grid: 64,
            domain_length: 1.0,
            covariance: CovarianceModel::Gaussian,
            variance: 1.0,
            corr_len: None,
            field_params: FieldParams::default(),
            fom: FomParameters::default(),
            bc: BoundaryConditions::paper(),
            nt: 10,
            tau: 250.0,
            substeps: SolverOptions::default().substeps,
            m_train: 48,
            m_validation: 8,
            m_test: 8,
            variants: vec![Variant::Nli, Variant::Ili],
            variables: vec![Variable::Pressure, Variable::Displacement],
            generator_hidden: GENERATOR_HIDDEN,
            critic_hidden: CRITIC_HIDDEN,
            patch: PATCH,
            train: TrainConfig { epochs: 10, ..TrainConfig::default() },
        }
    }
}

impl ExperimentConfig {
    /// The small end-to-end configuration: 8 fields on a 32×32 FOM grid,
    /// 2 epochs, one pressure model.
    pub fn smoke() -> Self {
        ExperimentConfig {
            output_root: PathBuf::from("runs/smoke"),
            field_count: 8,
            fom_grid: 32,
            m_train: 4,
            m_validation: 2,
            m_test: 2,
            variants: vec![Variant::Nli],
            variables: vec![Variable::Pressure],
            train: TrainConfig { epochs: 2, ..TrainConfig::default() },
            ..Self::default()
        }
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = match kv.get::<String>("preset")?.as_deref() {
            None | Some("default") => Self::default(),
            Some("smoke") => Self::smoke(),
            Some(other) => return Err(Error::config(format!("unknown preset `{other}` (expected default or smoke)"))),
        };
        kv.set("seed", &mut c.seed)?;
        if let Some(p) = kv.get::<String>("output_root")? {
            c.output_root = PathBuf::from(p);
        }
        kv.set("field_kind", &mut c.field_kind)?;
        kv.set("field_count", &mut c.field_count)?;
        kv.set("fom_grid", &mut c.fom_grid)?;
        kv.set("domain_length", &mut c.domain_length)?;
        kv.set("covariance", &mut c.covariance)?;
        kv.set("variance", &mut c.variance)?;
        if let Some(OptF64(v)) = kv.get("corr_len")? {
            c.corr_len = v;
        }
        let fp = &mut c.field_params;
        kv.set("k_geo", &mut fp.k_geo)?;
        kv.set("sigma_ln", &mut fp.sigma_ln)?;
        kv.set("k_low", &mut fp.k_low)?;
        kv.set("k_high", &mut fp.k_high)?;
        kv.set("width", &mut fp.width)?;
        kv.set("modes", &mut fp.modes)?;
        apply_fom(kv, &mut c.fom, &mut c.bc)?;
        kv.set("nt", &mut c.nt)?;
        kv.set("tau", &mut c.tau)?;
        kv.set("substeps", &mut c.substeps)?;
        kv.set("m_train", &mut c.m_train)?;
        kv.set("m_validation", &mut c.m_validation)?;
        kv.set("m_test", &mut c.m_test)?;
        if let Some(v) = kv.list("variants")? {
            c.variants = v;
        }
        if let Some(v) = kv.list("variables")? {
            c.variables = v;
        }
        kv.set("generator_hidden", &mut c.generator_hidden)?;
        kv.set("critic_hidden", &mut c.critic_hidden)?;
        kv.set("patch", &mut c.patch)?;
        apply_train_hyperparameters(kv, &mut c.train)?;
        kv.finish()?;
        Ok(c)
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text, source)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    pub fn fom_grid_spec(&self) -> GridSpec {
        GridSpec::square(self.fom_grid, self.domain_length)
    }

    pub fn training_grid(&self) -> GridSpec {
        GridSpec::square(crate::nets::RESOLUTION, self.domain_length)
    }

    pub fn covariance_spec(&self) -> CovarianceSpec {
        let grid = self.fom_grid_spec();
        CovarianceSpec {
            model: self.covariance,
            variance: self.variance,
            corr_len: self.corr_len.unwrap_or(grid.lx / 16.0),
            seed: self.field_seed(0),
        }
    }

    /// Field `i` is drawn with seed `seed · 10⁶ + i`.
    pub fn field_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_mul(1_000_000).wrapping_add(i as u64)
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed.wrapping_add(2), ..self.train.clone() }
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::uniform(self.nt, self.tau)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { substeps: self.substeps, ..SolverOptions::default() }
    }

    /// `(variable, variant)` pairs to train, in a fixed order.
    pub fn models(&self) -> Vec<(Variable, Variant)> {
        self.variables.iter().flat_map(|&v| self.variants.iter().map(move |&a| (v, a))).collect()
    }

    /// Canonical text of the settings that feed `section`, in a fixed order.
    pub fn canonical(&self, section: Section) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: &dyn Display| s += &format!("{k} = {v}\n");
        let fp = &self.field_params;
        put("seed", &self.seed);
        put("field_kind", &self.field_kind);
        put("field_count", &self.field_count);
        put("fom_grid", &self.fom_grid);
        put("domain_length", &Exact(self.domain_length));
        put("covariance", &format!("{:?}", self.covariance).to_lowercase());
        put("variance", &Exact(self.variance));
        put("corr_len", &self.corr_len.map_or("none".to_string(), |v| Exact(v).to_string()));
        for (k, v) in [("k_geo", fp.k_geo), ("sigma_ln", fp.sigma_ln), ("k_low", fp.k_low), ("k_high", fp.k_high), ("width", fp.width)] {
            put(k, &Exact(v));
        }
        put("modes", &fp.modes);
        if section == Section::Fields {
            return s;
        }
        let (p, bc) = (&self.fom, &self.bc);
        for (k, v) in [("alpha", p.alpha), ("m_biot", p.m_biot), ("k_bulk", p.k_bulk), ("g_shear", p.g_shear), ("mu_f", p.mu_f)] {
            put(k, &Exact(v));
        }
        put("body_force", &format!("{},{}", Exact(p.body_force[0]), Exact(p.body_force[1])));
        put("p_top", &Exact(bc.p_top));
        put("p_bottom", &bc.p_bottom.map_or("none".to_string(), |v| Exact(v).to_string()));
        put("traction_top", &Exact(bc.traction_top));
        put("p_init", &Exact(bc.p_init));
        put("sides_no_flow", &bc.sides_no_flow);
        put("sides_fixed_normal", &bc.sides_fixed_normal);
        put("nt", &self.nt);
        put("tau", &Exact(self.tau));
        put("substeps", &self.substeps);
        if section == Section::Fom {
            return s;
        }
        put("m_train", &self.m_train);
        put("m_validation", &self.m_validation);
        put("m_test", &self.m_test);
        if section == Section::Dataset {
            return s;
        }
        let join = |v: Vec<String>| v.join(",");
        put("variants", &join(self.variants.iter().map(ToString::to_string).collect()));
        put("variables", &join(self.variables.iter().map(ToString::to_string).collect()));
        put("generator_hidden", &self.generator_hidden);
        put("critic_hidden", &self.critic_hidden);
        put("patch", &self.patch);
        let t = &self.train;
        put("batch_size", &t.batch_size);
        put("epochs", &t.epochs);
        for (k, v) in [
            ("lambda_r", t.lambda_r),
            ("lambda_p", t.lambda_p),
            ("eta_max", t.eta_max),
            ("eta_min", t.eta_min),
            ("beta1", t.beta1),
            ("beta2", t.beta2),
            ("adam_eps", t.adam_eps),
        ] {
            put(k, &Exact(v));
        }
        put("critic_updates_per_gen", &t.critic_updates_per_gen);
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = format!("output_root = {}\n{}", self.output_root.display(), self.canonical(Section::All));
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Cumulative groups of settings, one per pipeline stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Section {
    Fields,
    Fom,
    Dataset,
    All,
}

/// Shortest round-tripping form of an `f64`.
struct Exact(f64);

impl Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Problems with a configuration; empty when it is usable.
pub fn validate_config(c: &ExperimentConfig) -> Vec<String> {
    let mut d = Vec::new();
    let mut check = |r: Result<()>| {
        if let Err(e) = r {
            d.push(e.to_string());
        }
    };
    for &v in &c.variants {
        check(GeneratorConfig { hidden: c.generator_hidden, ..GeneratorConfig::new(v, 1) }.validate());
    }
    check(CriticConfig { hidden: c.critic_hidden, patch: c.patch, ..CriticConfig::new(1) }.validate());
    let grid = c.fom_grid_spec();
    check(grid.validate());
    check(c.covariance_spec().validate(&grid));
    check(c.field_params.validate());
    check(c.fom.validate());
    check(c.bc.validate());
    check(c.time_grid().validate());
    check(c.train.validate());
    if c.field_count == 0 {
        d.push("field_count must be at least 1".into());
    }
    if c.m_train == 0 || c.m_validation == 0 || c.m_test == 0 {
        d.push(format!("every split needs at least one sample, got {}/{}/{}", c.m_train, c.m_validation, c.m_test));
    }
    let total = c.m_train + c.m_validation + c.m_test;
    if total > c.field_count {
        d.push(format!(
            "m_train + m_validation + m_test = {total} exceeds the ensemble size field_count = {}",
            c.field_count
        ));
    }
    if c.substeps == 0 {
        d.push("substeps must be at least 1".into());
    }
    if c.variants.is_empty() || c.variables.is_empty() {
        d.push("at least one variant and one variable are required".into());
    }
    d
}

/// Writes [`ExperimentConfig::write`] output into the run root.
pub fn record_config(c: &ExperimentConfig, root: &Path) -> Result<()> {
    io::create_dir(root)?;
    c.write(&root.join("config.txt"))
}

#[cfg(test)]
mod tests;
