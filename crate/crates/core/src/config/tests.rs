use super::*;

#[test]
fn default_and_smoke_configs_are_valid() {
    assert!(validate_config(&ExperimentConfig::default()).is_empty());
    assert!(validate_config(&ExperimentConfig::smoke()).is_empty());
}

#[test]
fn narrow_generator_is_diagnosed() {
    let c = ExperimentConfig::parse("generator_hidden = 16", "test").unwrap();
    let d = validate_config(&c);
    assert_eq!(d.len(), 2, "{d:?}");
    assert!(d.iter().all(|m| m.contains("generator hidden width must be 32")), "{d:?}");
}

#[test]
fn critic_constants_are_diagnosed() {
    let c = ExperimentConfig::parse("critic_hidden = 4\npatch = 4", "test").unwrap();
    let d = validate_config(&c);
    assert_eq!(d.len(), 1, "{d:?}");
    assert!(d[0].contains("critic hidden width must be 8"));
}

#[test]
fn oversized_splits_are_diagnosed() {
    let c = ExperimentConfig::parse("field_count = 10\nm_train = 8\nm_validation = 2\nm_test = 1", "test").unwrap();
    let d = validate_config(&c);
    assert_eq!(d, vec!["m_train + m_validation + m_test = 11 exceeds the ensemble size field_count = 10".to_string()]);
}

#[test]
fn parse_errors_name_the_line() {
    let err = |text: &str| ExperimentConfig::parse(text, "cfg.txt").unwrap_err();
    for (text, needle) in [
        ("seed = 1\nbogus = 3", "unknown keys `bogus` (line 2)"),
        ("seed = 1\nseed = 2", "cfg.txt:2: key `seed` already set on line 1"),
        ("epochs = many", "cfg.txt:1: invalid value `many` for `epochs`"),
        ("\n\nvariants = nli, xyz", "cfg.txt:3: invalid entry `xyz`"),
        ("just text", "expected `key = value`"),
        ("preset = huge", "unknown preset"),
        ("seed = 1\n# comment\nbatch_size = 2 # trailing\ntrain_seed = 0", "`train_seed` (line 4)"),
    ] {
        let e = err(text);
        assert!(matches!(e, Error::Config(_)), "{e}");
        assert!(e.to_string().contains(needle), "{e} lacks {needle}");
    }
}

#[test]
fn values_are_applied() {
    let c = ExperimentConfig::parse(
        "preset = smoke\nseed = 7\np_bottom = none\nbody_force = 0, -9.81\nvariants = ili,nli\nvariables = u\neta_max = 2e-4\ncorr_len = 0.1\nfield_kind = bimodal",
        "t",
    )
    .unwrap();
    assert_eq!(c.seed, 7);
    assert_eq!(c.field_count, 8);
    assert_eq!(c.bc.p_bottom, None);
    assert_eq!(c.fom.body_force, [0.0, -9.81]);
    assert_eq!(c.variants, vec![Variant::Ili, Variant::Nli]);
    assert_eq!(c.variables, vec![Variable::Displacement]);
    assert_eq!(c.train.eta_max, 2e-4);
    assert_eq!(c.corr_len, Some(0.1));
    assert_eq!(c.field_kind, FieldKind::Bimodal);
    assert_eq!(c.train_config().seed, 9);
    assert!(ExperimentConfig::parse("seed = 1\nbody_force = 1", "t").is_err());
}

#[test]
fn written_config_reads_back() {
    let mut c = ExperimentConfig::smoke();
    c.seed = 3;
    c.bc.p_bottom = None;
    c.corr_len = Some(0.07);
    c.fom.m_biot = 1.2345678901234567e8;
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.txt");
    c.write(&p).unwrap();
    assert_eq!(ExperimentConfig::read(&p).unwrap(), c);
}

#[test]
fn sections_isolate_downstream_settings() {
    let a = ExperimentConfig::default();
    let b = ExperimentConfig { train: TrainConfig { epochs: 3, ..a.train.clone() }, ..a.clone() };
    assert_eq!(a.canonical(Section::Dataset), b.canonical(Section::Dataset));
    assert_ne!(a.canonical(Section::All), b.canonical(Section::All));
    let c = ExperimentConfig { nt: 5, ..a.clone() };
    assert_eq!(a.canonical(Section::Fields), c.canonical(Section::Fields));
    assert_ne!(a.canonical(Section::Fom), c.canonical(Section::Fom));
}

#[test]
fn parameter_and_training_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fom.txt");
    std::fs::write(&p, "alpha = 0.9\nm_biot = 2e8\np_bottom = none\ntraction_top = 500\n").unwrap();
    let (params, bc) = read_fom_params(&p).unwrap();
    assert_eq!((params.alpha, params.m_biot, params.k_bulk), (0.9, 2e8, 1e7));
    assert_eq!((bc.p_bottom, bc.traction_top, bc.p_top), (None, 500.0, 0.0));
    std::fs::write(&p, "alpha = 1.5\n").unwrap();
    assert!(matches!(read_fom_params(&p), Err(Error::Config(_))));
    std::fs::write(&p, "epochs = 4\n").unwrap();
    assert!(read_fom_params(&p).is_err());

    let t = dir.path().join("train.txt");
    std::fs::write(&t, "epochs = 4\nbatch_size = 8\nseed = 5\n").unwrap();
    let cfg = read_train_config(&t).unwrap();
    assert_eq!((cfg.epochs, cfg.batch_size, cfg.seed, cfg.lambda_r), (4, 8, 5, 500.0));
    std::fs::write(&t, "batch_size = 1\n").unwrap();
    assert!(read_train_config(&t).is_err());
}
