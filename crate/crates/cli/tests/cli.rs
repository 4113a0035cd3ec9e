use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use porogan::nets::GeneratorConfig;
use porogan::{dataset, Checkpoint, Generator, RunManifest, TrainConfig, Variable, Variant};

fn porogan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_porogan")).args(args).current_dir(cwd).env_remove("POROGAN_OUTPUT_ROOT").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Ensemble, FOM and dataset directories on a tiny grid.
fn tiny_dataset(dir: &Path) {
    let o = porogan(&["fields", "generate", "--kind", "zinn_harvey", "--count", "3", "--seed", "7", "--out", "fields", "--grid", "12"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::write(dir.join("params.txt"), "# drained top, sealed bottom\np_top = 0\np_bottom = none\n").unwrap();
    let o = porogan(&["fom", "run", "--fields", "fields", "--params", "params.txt", "--out", "fom", "--nt", "3", "--tau", "75", "--substeps", "2"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = porogan(&["dataset", "build", "--fom", "fom", "--splits", "1,1,1", "--seed", "2", "--out", "data"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn help_documents_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = porogan(&["--help"], dir.path());
    let help = String::from_utf8(o.stdout).unwrap();
    for c in ["fields", "fom", "dataset", "train", "evaluate", "predict", "report", "run", "validate"] {
        assert!(help.contains(&format!("  {c} ")), "{c} missing from\n{help}");
    }
    assert!(help.contains("Exit codes"));
    let o = porogan(&["run", "--help"], dir.path());
    assert!(String::from_utf8(o.stdout).unwrap().contains("POROGAN_OUTPUT_ROOT"));
}

#[test]
fn stage_commands_chain_and_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    tiny_dataset(dir.path());
    for split in ["training", "validation", "test"] {
        let d = dataset::read_container(&dir.path().join("data").join(split)).unwrap();
        assert_eq!(d.records.len(), 1);
        assert_eq!(d.nt(), 3);
    }
    let o = porogan(&["fields", "generate", "--kind", "zinn_harvey", "--count", "3", "--seed", "7", "--out", "again", "--grid", "12"], dir.path());
    assert_eq!(code(&o), 0);
    let a = fs::read(dir.path().join("fields/k.f32")).unwrap();
    let b = fs::read(dir.path().join("again/k.f32")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fom_resamples_to_the_requested_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = porogan(&["fields", "generate", "--kind", "bimodal", "--count", "1", "--seed", "1", "--out", "fields", "--grid", "12"], dir.path());
    assert_eq!(code(&o), 0);
    fs::write(dir.path().join("params.txt"), "").unwrap();
    let o = porogan(&["fom", "run", "--fields", "fields", "--params", "params.txt", "--out", "fom", "--grid", "16", "--nt", "2", "--substeps", "1"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = porogan::fom::read_manifest(&dir.path().join("fom")).unwrap();
    assert_eq!((m.grid.nx, m.grid.ny), (16, 16));
    assert_eq!(m.times, [125.0, 250.0]);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.txt"), "alpha = 1\nbogus = 3\n").unwrap();
    let o = porogan(&["fom", "run", "--fields", "nowhere", "--params", "bad.txt", "--out", "x"], d);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bogus") && stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = porogan(&["dataset", "build", "--fom", "nowhere", "--splits", "1,1,1", "--seed", "0", "--out", "x"], d);
    assert_eq!(code(&o), 3);

    let o = porogan(&["dataset", "build", "--fom", "nowhere", "--splits", "1,1", "--seed", "0", "--out", "x"], d);
    assert_eq!(code(&o), 2);

    fs::write(d.join("h16.txt"), "generator_hidden = 16\n").unwrap();
    let o = porogan(&["validate", "--config", "h16.txt"], d);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("generator hidden width must be 32"), "{}", stderr(&o));
    fs::write(d.join("ok.txt"), "preset = smoke\n").unwrap();
    assert_eq!(code(&porogan(&["validate", "--config", "ok.txt"], d)), 0);
}

#[test]
fn run_uses_the_output_root_override_and_skips_completed_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = "preset = smoke\nfield_count = 4\nfom_grid = 12\nnt = 2\ntau = 50\nsubsteps = 1\nm_train = 2\nm_validation = 1\nm_test = 1\n";
    fs::write(d.join("exp.txt"), cfg).unwrap();
    let root = d.join("elsewhere");
    let run = |stage: &str| {
        Command::new(env!("CARGO_BIN_EXE_porogan"))
            .args(["run", stage, "--config", "exp.txt"])
            .current_dir(d)
            .env("POROGAN_OUTPUT_ROOT", &root)
            .output()
            .unwrap()
    };
    for stage in ["fields", "fom", "dataset"] {
        let o = run(stage);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert!(!d.join("runs").exists());
    let manifest = |stage: &str| -> RunManifest { serde_json::from_slice(&fs::read(root.join(stage).join("run_manifest.json")).unwrap()).unwrap() };
    let before = manifest("fom");
    assert_eq!(code(&run("fom")), 0);
    assert_eq!(manifest("fom"), before);

    let fm = porogan::fom::read_manifest(&root.join("fom")).unwrap();
    fs::remove_file(root.join("fom").join(format!("{}.f32", fm.field_ids[1]))).unwrap();
    let o = run("dataset");
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains(&format!("FOM output for field {} is missing", fm.field_ids[1])), "{}", stderr(&o));
}

#[test]
fn predict_and_evaluate_with_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_dataset(d);
    let test = dataset::read_container(&d.join("data/test")).unwrap();
    let g = Generator::new(&GeneratorConfig::new(Variant::Ili, 1), 3).unwrap();
    Checkpoint::from_generator(&g, Variable::Pressure, test.stats(), &TrainConfig::default(), 0, 0, None).save(&d.join("ck")).unwrap();

    let o = porogan(&["predict", "--checkpoint", "ck", "--field", "fields", "--time", "12.5", "--time", "75", "--out", "pred"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(d.join("pred/prediction.json")).unwrap()).unwrap();
    assert_eq!(m["times"], serde_json::json!([12.5, 75.0]));
    assert_eq!(m["shape"], serde_json::json!([2, 1, 128, 128]));

    let o = porogan(&["predict", "--checkpoint", "ck", "--field", "fields", "--time", "80", "--out", "pred2"], d);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("outside the trained interval"), "{}", stderr(&o));
    let o = porogan(&["predict", "--checkpoint", "ck", "--field", "fields", "--id", "nope", "--time", "1", "--out", "pred2"], d);
    assert_eq!(code(&o), 3);

    let o = porogan(&["evaluate", "--dataset", "data", "--checkpoint", "ck/checkpoint.json", "--split", "test", "--out", "eval"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("pressure test: n 1 mean "));
    assert!(d.join("eval/test/per_sample.csv").exists());
}

#[test]
fn train_writes_a_loadable_best_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_dataset(d);
    fs::write(d.join("train.txt"), "epochs = 1\nbatch_size = 2\nseed = 5\n").unwrap();
    let o = porogan(&["train", "--dataset", "data", "--variable", "displacement", "--variant", "nli", "--config", "train.txt", "--out", "model"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("best epoch 1 "));
    let ck = Checkpoint::load(&d.join("model/best")).unwrap();
    assert_eq!(ck.manifest.variable, Variable::Displacement);
    assert_eq!(ck.manifest.train.seed, 5);
    assert!(d.join("model/summary.json").exists() && d.join("model/history.png").exists());

    fs::write(d.join("train.txt"), "epochs = 0\n").unwrap();
    let o = porogan(&["train", "--dataset", "data", "--variable", "pressure", "--variant", "nli", "--config", "train.txt", "--out", "m2"], d);
    assert_eq!(code(&o), 2);
}
