use std::process::Command;

use freqmerge::harness::*;
use freqmerge::ScoringMethod;

const BIN: &str = env!("CARGO_BIN_EXE_freqmerge");

#[test]
fn layers_resolve_defaults_then_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(
        &path,
        "kind = \"kvdown\"\nseed = 3\n[grid]\nheight = 12\nwidth = 12\n[spectral]\nalpha = 0.5\n",
    )
    .unwrap();

    let file_only = ExperimentConfig::resolve(Some(&path), &Overrides::default()).unwrap();
    assert_eq!(file_only.kind, ExperimentKind::Kvdown);
    assert_eq!(file_only.seed, 3);
    assert_eq!(file_only.grid.height, 12);
    assert_eq!(file_only.grid.channels, ExperimentConfig::default().grid.channels);
    assert_eq!(file_only.spectral.alpha, 0.5);

    let flags = Overrides {
        seed: Some(9),
        alpha: Some(0.25),
        method: Some(ScoringMethod::ChannelVariance),
        ..Overrides::default()
    };
    let layered = ExperimentConfig::resolve(Some(&path), &flags).unwrap();
    assert_eq!(layered.seed, 9);
    assert_eq!(layered.spectral.alpha, 0.25);
    assert_eq!(layered.sweep.alphas, vec![0.25]);
    assert_eq!(layered.scoring, ScoringMethod::ChannelVariance);
    assert_eq!(layered.grid.height, 12);
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    assert!(ExperimentConfig::from_toml_str("sede = 1\n").is_err());
    let mut cfg = ExperimentConfig::default();
    cfg.grid.height = 0;
    let err = run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.contains("grid") && err.contains("height"), "{err}");
}

#[test]
fn empty_results_still_have_structure() {
    let mut csv = Vec::new();
    write_csv(&[], &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("experiment,label,config_hash,version,seed,ratio,"));
    let mut json = Vec::new();
    write_json(&[], &mut json).unwrap();
    assert_eq!(String::from_utf8(json).unwrap().trim(), "[]");
}

#[test]
fn csv_has_one_row_per_record_and_fixed_columns() {
    let cfg = ExperimentConfig {
        kind: ExperimentKind::Kvdown,
        ..ExperimentConfig::default()
    };
    let records = run_experiment(&cfg).unwrap();
    let mut csv = Vec::new();
    write_csv(&records, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let width = 5 + METRIC_COLUMNS.len();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap().len(), width);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), records.len());
    for (row, rec) in rows.iter().zip(&records) {
        assert_eq!(row.len(), width);
        assert_eq!(&row[1], rec.label.as_str());
    }
}

#[test]
fn json_round_trips() {
    let cfg = ExperimentConfig {
        kind: ExperimentKind::Spectral,
        spectral: SpectralConfig {
            trials: 50,
            ..SpectralConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let records = run_experiment(&cfg).unwrap();
    let mut json = Vec::new();
    write_json(&records, &mut json).unwrap();
    let back = read_json(std::str::from_utf8(&json).unwrap()).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in back.iter().zip(&records) {
        assert_eq!(a.schema, RECORD_SCHEMA);
        assert!(a.same_result(b));
    }
}

#[test]
fn oracle_classify_is_perfect() {
    let mut cfg = ExperimentConfig {
        kind: ExperimentKind::Classify,
        seed: 7,
        ..ExperimentConfig::default()
    };
    cfg.denoiser.kind = DenoiserKind::Oracle;
    cfg.classify.samples = 30;
    let records = run_experiment(&cfg).unwrap();
    assert_eq!(records[0].metrics["accuracy"], 1.0);
    assert_eq!(records[0].metrics["map"], 1.0);
}

#[test]
fn cli_writes_file_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kvd.json");
    let status = Command::new(BIN)
        .args(["kvdown", "--seed", "2", "--factor", "4", "--format", "json", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let records = read_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(records.iter().all(|r| r.metrics["factor"] == 4.0));

    let bad = Command::new(BIN).args(["merge", "--ratio", "1.5"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("ratio"));
    let missing_seed = Command::new(BIN).args(["bench"]).output().unwrap();
    assert!(!missing_seed.status.success());
}

#[test]
fn cli_output_ignores_thread_count() {
    let run = |t: &str| {
        Command::new(BIN)
            .args(["merge", "--seed", "5", "--threads", t])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("3"));
}


#[test]
fn shipped_config_resolves_and_runs() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/classify-spikes.toml");
    let mut cfg = ExperimentConfig::resolve(Some(&path), &Overrides::default()).unwrap();
    assert_eq!(cfg.kind, ExperimentKind::Classify);
    assert_eq!(cfg.format, OutputFormat::Json);
    cfg.classify.samples = 5;
    let records = run_experiment(&cfg).unwrap();
    assert_eq!(records[0].metrics["samples"], 5.0);
}
