//! Stage orchestration: fields → FOM → dataset → training → evaluation →
//! report, each writing one run manifest into its output directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{validate_config, ExperimentConfig, Section};
use crate::dataset::{self, Split, SplitData, Variable};
use crate::error::{Error, Result};
use crate::evaluation::{self, SplitMetrics};
use crate::fields;
use crate::fom;
use crate::io;
use crate::nets::{Pass, Variant, RESOLUTION};
use crate::tensor::{no_grad, Tensor};
use crate::training::{self, Checkpoint, TrainConfig};

pub const RUN_MANIFEST: &str = "run_manifest.json";
/// Overrides `output_root` of the experiment configuration.
pub const OUTPUT_ENV: &str = "POROGAN_OUTPUT_ROOT";
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Fields,
    Fom,
    Dataset,
    Train,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Fields, Stage::Fom, Stage::Dataset, Stage::Train, Stage::Evaluate, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Fields => "fields",
            Stage::Fom => "fom",
            Stage::Dataset => "dataset",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Fields => &[],
            Stage::Fom => &[Stage::Fields],
            Stage::Dataset => &[Stage::Fom],
            Stage::Train => &[Stage::Dataset],
            Stage::Evaluate => &[Stage::Dataset, Stage::Train],
            Stage::Report => &[Stage::Fom, Stage::Train, Stage::Evaluate],
        }
    }

    fn section(self) -> Section {
        match self {
            Stage::Fields => Section::Fields,
            Stage::Fom => Section::Fom,
            Stage::Dataset => Section::Dataset,
            _ => Section::All,
        }
    }

    pub fn dir(self, root: &Path) -> PathBuf {
        root.join(self.name())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| Error::config(format!("unknown stage `{s}`")))
    }
}

/// Provenance of one stage output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: Stage,
    pub config_hash: String,
    /// Upstream artifacts (`stage/relative/path`) and their checksums.
    pub inputs: BTreeMap<String, String>,
    /// Files of this directory and their checksums.
    pub outputs: BTreeMap<String, String>,
    pub wall_time: f64,
    pub tool_version: String,
}

pub fn read_run_manifest(dir: &Path) -> Result<RunManifest> {
    io::read_json(&dir.join(RUN_MANIFEST))
}

/// Checksums of every file below `dir` except the run manifest, keyed by
/// relative path with `/` separators.
pub fn checksum_tree(dir: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        let mut entries: Vec<_> = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.collect::<std::io::Result<_>>().map_err(|e| Error::io(dir, e))?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let p = e.path();
            if p.is_dir() {
                walk(base, &p, out)?;
            } else if p != base.join(RUN_MANIFEST) {
                let rel = p.strip_prefix(base).expect("walk stays below base");
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                out.insert(key, io::sha256_file(&p)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

fn describe_missing(stage: Stage, rel: &str) -> String {
    match (stage, rel.strip_suffix(".f32")) {
        (Stage::Fom, Some(id)) => format!("FOM output for field {id} is missing"),
        _ => format!("{stage} output {rel} is missing"),
    }
}

/// Verifies a finished stage directory against its manifest.
pub fn verify_stage(root: &Path, stage: Stage) -> Result<RunManifest> {
    let dir = stage.dir(root);
    let m = read_run_manifest(&dir).map_err(|_| Error::data(format!("stage {stage} has not been run in {} (no {RUN_MANIFEST})", root.display())))?;
    let mut missing = Vec::new();
    for (rel, sum) in &m.outputs {
        let p = dir.join(rel);
        if !p.exists() {
            missing.push(describe_missing(stage, rel));
        } else if io::sha256_file(&p)? != *sum {
            return Err(Error::data(format!("{stage} output {rel} does not match its recorded checksum")));
        }
    }
    if !missing.is_empty() {
        return Err(Error::data(missing.join("; ")));
    }
    Ok(m)
}

fn upstream_inputs(root: &Path, stage: Stage) -> Result<BTreeMap<String, String>> {
    let mut inputs = BTreeMap::new();
    for &up in stage.upstream() {
        let m = verify_stage(root, up)?;
        inputs.extend(m.outputs.into_iter().map(|(k, v)| (format!("{up}/{k}"), v)));
    }
    Ok(inputs)
}

pub fn config_hash(cfg: &ExperimentConfig, stage: Stage) -> String {
    io::sha256_hex(cfg.canonical(stage.section()).as_bytes())
}

/// The output root after applying [`OUTPUT_ENV`].
pub fn output_root(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output_root.clone(),
    }
}

/// Removes a directory only if it holds a run manifest, i.e. it is a stage
/// directory written by this tool.
fn clear_stage_dir(dir: &Path) -> Result<()> {
    if dir.join(RUN_MANIFEST).exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Runs one stage under `root`.
///
/// A stage whose manifest matches the configuration, the current upstream
/// checksums and its own files is skipped unless `force` is set. A manifest
/// written under a different configuration is an error without `force`.
pub fn run_stage(stage: Stage, cfg: &ExperimentConfig, root: &Path, force: bool) -> Result<RunManifest> {
    let diagnostics = validate_config(cfg);
    if !diagnostics.is_empty() {
        return Err(Error::config(diagnostics.join("; ")));
    }
    let dir = stage.dir(root);
    let hash = config_hash(cfg, stage);
    let inputs = upstream_inputs(root, stage)?;
    if force {
        clear_stage_dir(&dir)?;
    } else if let Ok(old) = read_run_manifest(&dir) {
        if old.config_hash != hash {
            return Err(Error::config(format!(
                "{} was produced under a different configuration; use --force to overwrite it or choose another output root",
                dir.display()
            )));
        }
        if old.inputs == inputs && checksum_tree(&dir)? == old.outputs {
            log::info!("stage {stage}: up to date, skipped");
            return Ok(old);
        }
        log::info!("stage {stage}: inputs or outputs changed, running again");
        if stage != Stage::Fom {
            clear_stage_dir(&dir)?;
        }
    }
    io::create_dir(&dir)?;
    let start = Instant::now();
    log::info!("stage {stage}: running in {}", dir.display());
    match stage {
        Stage::Fields => stage_fields(cfg, &dir)?,
        Stage::Fom => stage_fom(cfg, root, &dir)?,
        Stage::Dataset => stage_dataset(cfg, root, &dir)?,
        Stage::Train => stage_train(cfg, root, &dir)?,
        Stage::Evaluate => stage_evaluate(cfg, root, &dir)?,
        Stage::Report => {
            write_report(root, &dir)?;
        }
    }
    let m = RunManifest {
        stage,
        config_hash: hash,
        inputs,
        outputs: checksum_tree(&dir)?,
        wall_time: start.elapsed().as_secs_f64(),
        tool_version: TOOL_VERSION.to_string(),
    };
    io::write_json(&dir.join(RUN_MANIFEST), &m)?;
    Ok(m)
}

/// Runs every stage in order.
pub fn run_all(cfg: &ExperimentConfig, root: &Path, force: bool) -> Result<Vec<RunManifest>> {
    crate::config::record_config(cfg, root)?;
    Stage::ALL.iter().map(|&s| run_stage(s, cfg, root, force)).collect()
}

fn stage_fields(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let fields = fields::generate_ensemble(
        &cfg.fom_grid_spec(),
        &cfg.covariance_spec(),
        cfg.field_kind,
        cfg.field_count,
        cfg.field_seed(0),
        &cfg.field_params,
    )?;
    fields::write_ensemble(dir, &fields)?;
    Ok(())
}

fn stage_fom(cfg: &ExperimentConfig, root: &Path, dir: &Path) -> Result<()> {
    let fields = fields::read_ensemble(&Stage::Fields.dir(root))?;
    fom::run_ensemble(&fields, &cfg.fom, &cfg.bc, &cfg.time_grid(), &cfg.solver_options(), dir)?;
    Ok(())
}

fn stage_dataset(cfg: &ExperimentConfig, root: &Path, dir: &Path) -> Result<()> {
    let sizes = [cfg.m_train, cfg.m_validation, cfg.m_test];
    let s = dataset::build_dataset(&Stage::Fom.dir(root), sizes, cfg.split_seed(), cfg.training_grid(), dir)?;
    let clamped: u64 = s.clamps.iter().map(|c| c.total()).sum();
    if clamped > 0 {
        log::warn!("{clamped} values fell outside the training ranges and were clamped");
    }
    Ok(())
}

pub fn model_name(variable: Variable, variant: Variant) -> String {
    format!("{variable}-{variant}")
}

/// Outcome of one training run, stored next to its checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_mean: f64,
    pub steps: usize,
    pub wall_time: f64,
}

/// Trains one model, writing checkpoints, history plot and `summary.json` to `out`.
pub fn train_model(train: &SplitData, val: &SplitData, variable: Variable, variant: Variant, tc: &TrainConfig, out: &Path) -> Result<TrainSummary> {
    log::info!("training {variable} {variant}");
    let o = training::train(train, val, variant, variable, tc, Some(out))?;
    evaluation::write_history_plot(&out.join("history.png"), &o.history)?;
    let summary = TrainSummary { best_epoch: o.best_epoch, best_mean: o.best_mean, steps: o.step_f, wall_time: o.wall_time };
    io::write_json(&out.join("summary.json"), &summary)?;
    log::info!("{variable} {variant}: best epoch {} with validation mean {:.4}", o.best_epoch, o.best_mean);
    Ok(summary)
}

fn stage_train(cfg: &ExperimentConfig, root: &Path, dir: &Path) -> Result<()> {
    let data = Stage::Dataset.dir(root);
    let train = dataset::read_container(&data.join(Split::Training.name()))?;
    let val = dataset::read_container(&data.join(Split::Validation.name()))?;
    let tc = cfg.train_config();
    for (variable, variant) in cfg.models() {
        train_model(&train, &val, variable, variant, &tc, &dir.join(model_name(variable, variant)))?;
    }
    Ok(())
}

/// Latency of single-query inference, median of several runs [s].
pub fn inference_latency(g: &crate::nets::Generator, k: &[f32], repeats: usize) -> Result<f64> {
    let k = Tensor::new(k.to_vec(), &[1, 1, RESOLUTION, RESOLUTION]);
    let t = Tensor::new(vec![0.5], &[1]);
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        no_grad(|| g.forward(&k, &t, &mut Pass::eval()))?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceTiming {
    pub model: String,
    pub repeats: usize,
    pub median_latency: f64,
}

/// Physical FOM, surrogate and DIFF panels of one record at one snapshot.
pub fn write_sample_panels(path: &Path, g: &crate::nets::Generator, data: &dataset::SplitData, variable: Variable, sample: usize, snapshot: usize) -> Result<()> {
    let r = &data.records[sample];
    let pred = evaluation::predict_record(g, r)?;
    let per = pred.len() / r.nt();
    let x = variable.physical(variable.target(r, snapshot), data.stats());
    let x_hat = variable.physical(&pred[snapshot * per..(snapshot + 1) * per], data.stats());
    let diff = evaluation::diff_field(&x, &x_hat)?;
    evaluation::write_panels(path, &[&x, &x_hat, &diff], r.height, r.width, 2)
}

/// Evaluates the best checkpoint of one model on the validation and test splits.
pub fn evaluate_model(checkpoint: &Path, data_dir: &Path, splits: &[Split], out: &Path) -> Result<Vec<SplitMetrics>> {
    let ck = Checkpoint::load(checkpoint)?;
    let g = ck.generator()?;
    let variable = ck.manifest.variable;
    let mut all = Vec::new();
    for &split in splits {
        let data = dataset::read_container(&data_dir.join(split.name()))?;
        if *data.stats() != ck.manifest.stats {
            return Err(Error::data(format!("{split} split was normalized differently from the checkpoint's training data")));
        }
        let m = evaluation::evaluate_split(&g, &data, variable)?;
        let dir = out.join(split.name());
        evaluation::write_metrics(&dir, &m)?;
        write_sample_panels(&dir.join("sample0.png"), &g, &data, variable, 0, data.nt() - 1)?;
        log::info!("{variable} on {split}: mean relative RMSE {:.4}, pooled {:.4}", m.summary.mean, m.pooled);
        all.push(m);
    }
    Ok(all)
}

fn stage_evaluate(cfg: &ExperimentConfig, root: &Path, dir: &Path) -> Result<()> {
    let data = Stage::Dataset.dir(root);
    for (variable, variant) in cfg.models() {
        let name = model_name(variable, variant);
        let ck = Stage::Train.dir(root).join(&name).join("best");
        let out = dir.join(&name);
        evaluate_model(&ck, &data, &[Split::Validation, Split::Test], &out)?;
        let g = Checkpoint::load(&ck)?.generator()?;
        let test = dataset::read_container(&data.join(Split::Test.name()))?;
        let timing = InferenceTiming { model: name, repeats: 5, median_latency: inference_latency(&g, &test.records[0].k, 5)? };
        io::write_json(&out.join("timing.json"), &timing)?;
    }
    Ok(())
}

/// One row of the report's metric table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub split: Split,
    pub n: usize,
    pub mean: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub outliers: usize,
    pub pooled: f64,
    pub pooled_normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metrics: Vec<MetricRow>,
    pub timing: Vec<evaluation::TimingReport>,
    pub models: Vec<String>,
    pub stage_wall_times: Vec<(String, f64)>,
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from("model,split,n,mean,q25,q50,q75,outliers,pooled,pooled_normalized\n");
    for r in rows {
        s += &format!(
            "{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{},{:.9e},{:.9e}\n",
            r.model, r.split, r.n, r.mean, r.q25, r.q50, r.q75, r.outliers, r.pooled, r.pooled_normalized
        );
    }
    s
}

/// Collects metrics and wall times of a finished run into `out`:
/// `metrics.csv`, `timing.csv` and `report.json`.
pub fn write_report(runs: &Path, out: &Path) -> Result<Report> {
    let eval_dir = Stage::Evaluate.dir(runs);
    let mut models: Vec<String> = fs::read_dir(&eval_dir)
        .map_err(|e| Error::io(&eval_dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    models.sort();
    if models.is_empty() {
        return Err(Error::data(format!("no evaluated models under {}", eval_dir.display())));
    }
    let fom_manifest = fom::read_manifest(&Stage::Fom.dir(runs))?;
    let walls: Vec<f64> = fom_manifest.wall_times.values().copied().collect();
    let fom_per_trajectory = walls.iter().sum::<f64>() / walls.len().max(1) as f64;
    let mut stage_wall_times = Vec::new();
    for s in [Stage::Fields, Stage::Fom, Stage::Dataset, Stage::Train, Stage::Evaluate] {
        if let Ok(m) = read_run_manifest(&s.dir(runs)) {
            stage_wall_times.push((s.name().to_string(), m.wall_time));
        }
    }
    let mut metrics = Vec::new();
    let mut timing = Vec::new();
    for name in &models {
        for split in [Split::Validation, Split::Test] {
            let p = eval_dir.join(name).join(split.name()).join("metrics.json");
            let m: SplitMetrics = io::read_json(&p)?;
            let b = &m.summary;
            metrics.push(MetricRow {
                model: name.clone(),
                split,
                n: b.n,
                mean: b.mean,
                q25: b.q25,
                q50: b.q50,
                q75: b.q75,
                outliers: b.outliers.len(),
                pooled: m.pooled,
                pooled_normalized: m.pooled_normalized,
            });
        }
        let t: InferenceTiming = io::read_json(&eval_dir.join(name).join("timing.json"))?;
        let summary: TrainSummary = io::read_json(&Stage::Train.dir(runs).join(name).join("summary.json"))?;
        let train_total = summary.wall_time;
        let mut rows = stage_wall_times.clone();
        rows.push((format!("{name} training"), train_total));
        rows.push((format!("{name} inference per query"), t.median_latency));
        timing.push(evaluation::timing_report(&rows, fom_per_trajectory, train_total, t.median_latency, fom_manifest.times.len()));
    }
    io::create_dir(out)?;
    let p = out.join("metrics.csv");
    fs::write(&p, metrics_csv(&metrics)).map_err(|e| Error::io(&p, e))?;
    let mut tcsv = String::new();
    for (name, t) in models.iter().zip(&timing) {
        tcsv += &format!("# {name}\n{}", evaluation::timing_csv(t));
    }
    let p = out.join("timing.csv");
    fs::write(&p, tcsv).map_err(|e| Error::io(&p, e))?;
    let report = Report { metrics, timing, models, stage_wall_times };
    io::write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
