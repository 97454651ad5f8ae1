//! End-to-end checks of the orchestrator and the command-line binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use varsel::gibbs::{gibbs_run, inclusion_frequencies, GibbsConfig};
use varsel::io::{ingest_csv, IngestOptions};
use varsel::pipeline::{analyze, cv_seed, gibbs_seed, run_pipeline, search_seed, RunConfig, SearchMode, Stage};
use varsel::ranking::{rank, rank_pvalues};
use varsel::search::{exhaustive_best_subset, multi_restart_search};
use varsel::selection::{select_order, Criterion};
use varsel::validation::{correlation_graph, fit_named_model, monte_carlo_cv};
use varsel::{CostSpec, Dataset, RankingMethod};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic_r8.csv")
}

fn load() -> Dataset {
    ingest_csv(&fixture(), &IngestOptions::new("arousal")).unwrap()
}

fn small_config(seed: u64) -> RunConfig {
    let mut c = RunConfig::new(fixture(), "arousal", seed);
    c.m_values = vec![1, 2, 3];
    c.gibbs_m_values = vec![2, 3];
    c.gibbs_sweeps = 300;
    c.cv_runs = 200;
    c.runs = 40;
    c
}

#[test]
fn report_fields_equal_direct_calls() {
    let d = load();
    let config = small_config(11);
    let (report, err) = analyze(&d, &config, "0".repeat(64));
    assert!(err.is_none(), "{err:?}");
    assert!(report.complete);

    assert_eq!(report.rankings.len(), 6);
    for entry in &report.rankings {
        let direct = match entry.ranking.method {
            RankingMethod::PValue => rank_pvalues(&d, config.pvalue_alpha).unwrap(),
            m => rank(&d, m).unwrap(),
        };
        assert_eq!(entry.ranking, direct);
    }

    for b in &report.best_sequences {
        let direct = exhaustive_best_subset(&d, b.m, CostSpec::default(), config.exhaustive_budget as u128).unwrap();
        assert_eq!(b.result, direct);
        assert_eq!(b.strategy, "exhaustive");
    }

    for e in &report.inclusion_profiles {
        let mut gc = GibbsConfig::new(e.m, config.gibbs_sweeps, gibbs_seed(config.seed, e.m));
        gc.eta = config.eta;
        let chain = gibbs_run(&d, &gc).unwrap();
        assert_eq!(
            e.profile,
            inclusion_frequencies(&chain, d.n_features(), gc.burn_in).unwrap()
        );
        assert!((e.profile.total() - e.m as f64).abs() < 1e-12);
    }

    let mut seen = BTreeMap::new();
    for s in &report.order_selections {
        let ranking = &report
            .rankings
            .iter()
            .find(|r| r.ranking.method == s.method)
            .unwrap()
            .ranking;
        let direct = if s.selection.criterion == Criterion::Pvalue {
            varsel::selection::pvalue_stopping(&d, ranking, config.pvalue_alpha).unwrap()
        } else {
            select_order(&d, ranking, s.selection.criterion).unwrap()
        };
        assert_eq!(s.selection, direct);
        *seen.entry(s.method.tag()).or_insert(0) += 1;
    }
    assert_eq!(seen["PV"], 4);
    assert_eq!(seen["RM1"], 3);

    let model = report.best_sequences.last().unwrap().result.subset.clone();
    let cv = monte_carlo_cv(&d, &model, 0.8, 200, cv_seed(config.seed), Default::default()).unwrap();
    assert_eq!(report.cross_validation.as_ref().unwrap(), &cv);
    assert_eq!(
        report.named_model.as_ref().unwrap(),
        &fit_named_model(&d, &model).unwrap().1
    );
    assert_eq!(
        report.correlation.as_ref().unwrap(),
        &correlation_graph(&d, config.corr_threshold)
    );
}

#[test]
fn fixture_signal_is_recovered() {
    let d = load();
    let report = analyze(&d, &small_config(3), String::new()).0;
    let best3 = &report.best_sequences[2].result.subset;
    // y depends on rms_mean, energy_mean and rolloff.
    assert_eq!(best3.one_based(), vec![1, 3, 6]);
    let edges = &report.correlation.unwrap().edges;
    assert_eq!(edges.len(), 1);
    assert_eq!((edges[0].i, edges[0].j), (3, 4));
    assert_eq!(report.named_model.unwrap().coefficients[1].label, "energy_mean");
}

#[test]
fn restart_mode_uses_the_search_stream() {
    let d = load();
    let mut config = small_config(5);
    config.stages = vec![Stage::Search];
    config.search_mode = SearchMode::Restarts;
    let report = analyze(&d, &config, String::new()).0;
    for b in &report.best_sequences {
        let direct = multi_restart_search(
            &d,
            b.m,
            config.runs,
            search_seed(5),
            config.max_sweeps,
            CostSpec::default(),
        )
        .unwrap();
        assert_eq!(b.result, direct);
        assert_eq!(b.strategy, "alternating");
    }
}

#[test]
fn failing_stage_leaves_a_flagged_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(1);
    config.output_dir = dir.path().to_path_buf();
    config.model_subset = Some(vec![9]);
    let err = run_pipeline(&config).unwrap_err();
    assert!(err.to_string().contains("cv"), "{err}");
    let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["complete"], false);
    assert_eq!(json["failed_stage"], "cv");
    assert_eq!(json["rankings"].as_array().unwrap().len(), 6);
}

#[test]
fn report_round_trips_and_matches_schema() {
    let d = load();
    let report = analyze(&d, &small_config(2), "ab".repeat(32)).0;
    let text = serde_json::to_string_pretty(&report).unwrap();
    let back: varsel::pipeline::Report = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);

    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&fs::read_to_string(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let instance: serde_json::Value = serde_json::from_str(&text).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

fn varsel(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_varsel"))
        .args(args)
        .env("VARSEL_OUTPUT_DIR", out)
        .output()
        .unwrap()
}

#[test]
fn cli_subcommands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture();
    let data = data.to_str().unwrap();
    let cases: [(&str, Vec<&str>, &str); 6] = [
        ("rank", vec![], "rankings.csv"),
        (
            "search",
            vec!["-m", "2,3", "--seed", "4", "--runs", "20"],
            "best_sequences.csv",
        ),
        (
            "gibbs",
            vec!["-m", "2", "--seed", "4", "--sweeps", "100"],
            "inclusion_m2.csv",
        ),
        ("select", vec![], "criterion_curves.csv"),
        (
            "cv",
            vec!["--subset", "1,3,6", "--seed", "4", "--runs", "50"],
            "named_model.csv",
        ),
        ("corr", vec!["--threshold", "0.9"], "correlation_edges.csv"),
    ];
    for (cmd, extra, file) in cases {
        let out = dir.path().join(cmd);
        let mut args = vec![cmd, "-d", data, "-t", "arousal"];
        args.extend(extra);
        let o = varsel(&args, &out);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join(file).exists(), "{cmd} did not write {file}");
        assert!(out.join("report.json").exists());
    }
    let curves = fs::read_to_string(dir.path().join("rank/error_curves.csv")).unwrap();
    assert!(curves.starts_with("method,M,MAE\n"));
    assert_eq!(curves.lines().count(), 1 + 7 * 8);
}

#[test]
fn cli_exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture();
    let data = data.to_str().unwrap();
    // Missing --seed is a usage error.
    assert_eq!(
        varsel(&["search", "-d", data, "-t", "arousal", "-m", "2"], dir.path())
            .status
            .code(),
        Some(2)
    );
    // Unknown target column fails validation.
    assert_eq!(
        varsel(&["rank", "-d", data, "-t", "valence"], dir.path()).status.code(),
        Some(4)
    );
    // Malformed cell is a parse error.
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,y\n1,2\nx,3\n4,5\n").unwrap();
    let o = varsel(&["rank", "-d", bad.to_str().unwrap(), "-t", "y"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    // A rank-deficient model subset is a computation failure.
    let dup = dir.path().join("dup.csv");
    fs::write(&dup, "a,b,y\n1,1,2\n2,2,3\n3,3,5\n4,4,4\n5,5,7\n").unwrap();
    let o = varsel(
        &[
            "cv",
            "-d",
            dup.to_str().unwrap(),
            "-t",
            "y",
            "--subset",
            "1,2",
            "--seed",
            "1",
            "--runs",
            "5",
            "--train-fraction",
            "0.8",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
    // Missing file is an I/O failure.
    assert_eq!(
        varsel(&["corr", "-d", "/nonexistent.csv", "-t", "y"], dir.path())
            .status
            .code(),
        Some(6)
    );
}

#[test]
fn report_accepts_a_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "dataset_path = {:?}\ntarget_column = \"arousal\"\nstages = [\"rank\", \"corr\"]\nmethods = [\"RM5\"]\n",
            fixture().to_str().unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = varsel(&["report", "--config", cfg.to_str().unwrap(), "--seed", "9"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["rankings"].as_array().unwrap().len(), 1);
    assert_eq!(json["provenance"]["seed"], 9);
}
