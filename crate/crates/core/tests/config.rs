use blochlab::experiments::{self, ExperimentConfig, RunOptions, PRESETS};
use blochlab::Error;

#[test]
fn every_preset_is_complete_and_valid() {
    for (name, _) in PRESETS {
        let c = ExperimentConfig::preset(name).unwrap();
        c.validate().unwrap();
        let round = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&round).unwrap(), c, "{name}");
    }
}

#[test]
fn partial_config_is_merged_with_preset() {
    let c = ExperimentConfig::from_toml("experiment = \"mesoscopic-ring\"\nsizes = [51, 99, 151, 301]\n").unwrap();
    assert_eq!(c.sizes, vec![51, 99, 151, 301]);
    assert_eq!(c.filling, Some(1.0 / 3.0));
    assert_eq!(c.tolerances["remainder_factor"], 5.0);
}

#[test]
fn bad_configs_are_rejected() {
    let unknown = ExperimentConfig::from_toml("experiment = \"nope\"");
    assert!(matches!(unknown, Err(Error::UnknownExperiment(_))));
    let order = ExperimentConfig::from_toml("experiment = \"pump\"\nsizes = [60, 40]");
    assert!(matches!(order, Err(Error::ConfigInvalid { field, .. }) if field == "sizes"));
    let filling = ExperimentConfig::from_toml("experiment = \"gapless-1d\"\nfilling = 1.5");
    assert!(matches!(filling, Err(Error::ConfigInvalid { field, .. }) if field == "filling"));
    let typo = ExperimentConfig::from_toml("experiment = \"pump\"\nsizez = [60]");
    match typo {
        Err(Error::ConfigInvalid { field, reason }) => {
            assert!(field.starts_with("byte"), "{field}");
            assert!(reason.contains("sizez"), "{reason}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn csv_is_deterministic_and_well_formed() {
    let c = ExperimentConfig::preset("mesoscopic-ring").unwrap();
    let render = |workers| {
        let s = experiments::run(&c, &RunOptions { tol_scale: 1.0, workers: Some(workers) }).unwrap();
        assert!(s.passed());
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let a = render(1);
    assert_eq!(a, render(2));
    let mut rd = csv::Reader::from_reader(a.as_bytes());
    assert_eq!(
        rd.headers().unwrap().iter().collect::<Vec<_>>(),
        ["experiment", "L", "quantity", "value", "gap", "p", "residual", "seed"]
    );
    assert!(rd.records().count() >= 10);
}

#[test]
fn run_to_file_writes_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ring.csv");
    let c = ExperimentConfig::preset("mesoscopic-ring").unwrap();
    experiments::run_to_file(&c, &RunOptions::default(), Some(&path)).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("experiment,L,quantity,value"));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
