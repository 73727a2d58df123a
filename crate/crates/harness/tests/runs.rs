use std::fs;
use std::path::{Path, PathBuf};

use rate_harness::config::KINDS;
use rate_harness::{
    emit_plot_data, list, load, load_record, parse_str, run, run_with_threads, validate_file, HarnessError,
};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

const SMALL_RATE: &str = r#"
seed = 9

[experiment]
kind = "minimax-rate"
t_list = [20, 40, 80, 160]
cloud_size = 200
pool_size = 20
reps = 8
m = 32
entropy_eps = [0.3, 0.2, 0.15, 0.1]

[experiment.spec]
alpha = 1.0
n = 0
lambda = 1.0
M = 2.0
"#;

const SMALL_FINITE: &str = r#"
seed = 3

[experiment]
kind = "finite-rate"
t_list = [10, 20, 30, 40]
reps = 1000
states = [{ shape = "uniform" }, { shape = "step", high = 1.5, low = 0.5 }]
"#;

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv") || p.ends_with("summary.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn shipped_configs_cover_every_kind_and_validate() {
    let mut kinds = Vec::new();
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let report = validate_file(&path).unwrap();
        assert!(report.is_empty(), "{}: {report}", path.display());
        kinds.push(load(&path).unwrap().experiment.kind());
    }
    kinds.sort();
    let mut expected = KINDS.to_vec();
    expected.sort();
    assert_eq!(kinds, expected);
}

#[test]
fn demand_run_reports_t_star() {
    let root = tempfile::tempdir().unwrap();
    let config = load(&configs_dir().join("demand.toml")).unwrap();
    let record = run(&config, root.path()).unwrap();
    let t_star = record.summary["t_star"].as_f64().unwrap();
    assert!((t_star - 4.8304).abs() < 5e-4, "{t_star}");
    assert!(record.passed());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(record.directory.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config_digest"], record.config_digest);
    assert_eq!(summary["results"]["t_star"], record.summary["t_star"]);
    let csv = fs::read_to_string(record.directory.join("demand.csv")).unwrap();
    assert!(csv.starts_with("price,t_star,t_numeric\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn rerun_gives_identical_digest_and_bytes() {
    let root = tempfile::tempdir().unwrap();
    let config = parse_str(SMALL_FINITE, "inline").unwrap();
    let a = run(&config, root.path()).unwrap();
    let first = read_outputs(&a.directory);
    let b = run(&config, root.path()).unwrap();
    assert_eq!(a.config_digest, b.config_digest);
    assert_eq!(a.run_id, b.run_id);
    assert_eq!(first, read_outputs(&b.directory));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    for text in [SMALL_RATE, SMALL_FINITE] {
        let config = parse_str(text, "inline").unwrap();
        let one = tempfile::tempdir().unwrap();
        let eight = tempfile::tempdir().unwrap();
        let a = run_with_threads(&config, one.path(), 1).unwrap();
        let b = run_with_threads(&config, eight.path(), 8).unwrap();
        let (fa, fb) = (read_outputs(&a.directory), read_outputs(&b.directory));
        assert!(fa.len() >= 3);
        assert_eq!(fa, fb);
    }
}

#[test]
fn every_csv_has_a_header() {
    let root = tempfile::tempdir().unwrap();
    let record = run(&parse_str(SMALL_RATE, "inline").unwrap(), root.path()).unwrap();
    for name in record.outputs.iter().filter(|n| n.ends_with(".csv")) {
        let text = fs::read_to_string(record.directory.join(name)).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.split(',').all(|c| c.chars().next().unwrap().is_ascii_alphabetic()), "{name}: {header}");
    }
}

#[test]
fn plot_emits_monotone_complexity_curves() {
    let root = tempfile::tempdir().unwrap();
    let record = run(&parse_str(SMALL_RATE, "inline").unwrap(), root.path()).unwrap();
    let loaded = load_record(root.path(), &record.run_id).unwrap();
    let paths = emit_plot_data(&loaded).unwrap();
    let curves = fs::read_to_string(&paths[0]).unwrap();
    let rows: Vec<Vec<f64>> = curves
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4 * rate_harness::plot::GRID_POINTS);
    for chunk in rows.chunks(rate_harness::plot::GRID_POINTS) {
        assert!(chunk.windows(2).all(|w| w[1][1] > w[0][1] && w[1][2] < w[0][2]));
    }
    let empirical = fs::read_to_string(&paths[1]).unwrap();
    assert_eq!(empirical.lines().count(), 5);
}

#[test]
fn plot_errors() {
    let root = tempfile::tempdir().unwrap();
    fs::create_dir(root.path().join("empty")).unwrap();
    assert!(matches!(load_record(root.path(), "empty"), Err(HarnessError::UnknownRun(_))));
    let config = load(&configs_dir().join("demand.toml")).unwrap();
    let record = run(&config, root.path()).unwrap();
    assert!(matches!(emit_plot_data(&record), Err(HarnessError::NoPlotData { .. })));
}

#[test]
fn list_finds_completed_runs() {
    let root = tempfile::tempdir().unwrap();
    assert!(list(&root.path().join("missing")).unwrap().is_empty());
    let demand = run(&load(&configs_dir().join("demand.toml")).unwrap(), root.path()).unwrap();
    let finite = run(&parse_str(SMALL_FINITE, "inline").unwrap(), root.path()).unwrap();
    fs::create_dir(root.path().join("stray")).unwrap();
    let ids: Vec<String> = list(root.path()).unwrap().into_iter().map(|r| r.run_id).collect();
    let mut expected = vec![demand.run_id, finite.run_id];
    expected.sort();
    assert_eq!(ids, expected);
}
