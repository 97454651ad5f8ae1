//! End-to-end runs: configuration, orchestration of the analysis stages,
//! and emission of the structured report plus flat plot-data files.
//!
//! Output tree of a run:
//!
//! ```text
//! report.json             structured report (see schema/report.schema.json)
//! rankings.csv            method, position, feature, label, raw_feature
//! error_curves.csv        method, M, MAE   (method NONE = unordered features)
//! best_sequences.csv      m, strategy, cost, subset
//! inclusion_m<M>.csv      feature, label, probability, uniform
//! criterion_curves.csv    method, criterion, M, value
//! correlation_edges.csv   i, j, label_i, label_j, rho
//! named_model.csv         term, label, coefficient
//! ```
//!
//! Every feature index written anywhere is 1-based.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, FeatureSubset};
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_run, inclusion_frequencies, GibbsConfig, InclusionProfile, DEFAULT_ETA};
use crate::io::{ingest_csv, IngestOptions, Normalization};
use crate::linalg::CostSpec;
use crate::ranking::{error_curve, rank, rank_pvalues, ErrorCurve, Ranking, RankingMethod};
use crate::rng::derive_seed;
use crate::search::{
    binomial, exhaustive_best_subset, multi_restart_search, SearchResult, DEFAULT_EXHAUSTIVE_BUDGET,
    DEFAULT_MAX_SWEEPS, DEFAULT_RESTARTS,
};
use crate::selection::{elbow_annotation, select_order_with_offset, Criterion, OrderSelection};
use crate::validation::{
    correlation_graph, fit_named_model, monte_carlo_cv, CorrelationGraph, CvReport, NamedModel, R2Reference,
    DEFAULT_CORRELATION_THRESHOLD, DEFAULT_CV_RUNS, DEFAULT_TRAIN_FRACTION,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "VARSEL_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Rank,
    Search,
    Gibbs,
    Select,
    Cv,
    Corr,
    Model,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Rank,
        Stage::Search,
        Stage::Gibbs,
        Stage::Select,
        Stage::Cv,
        Stage::Corr,
        Stage::Model,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Rank => "rank",
            Stage::Search => "search",
            Stage::Gibbs => "gibbs",
            Stage::Select => "select",
            Stage::Cv => "cv",
            Stage::Corr => "corr",
            Stage::Model => "model",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Exhaustive when the subset count fits the budget, restarts otherwise.
    #[default]
    Auto,
    Exhaustive,
    Restarts,
}

/// Everything a run needs. Paths are not part of the report or its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing)]
    pub dataset_path: PathBuf,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub target_column: String,
    pub delimiter: char,
    pub exclude_columns: Vec<String>,
    pub normalize: Normalization,
    pub stages: Vec<Stage>,
    pub methods: Vec<RankingMethod>,
    /// Subset sizes for best-sequence search.
    pub m_values: Vec<usize>,
    /// Subset sizes for Gibbs sampling.
    pub gibbs_m_values: Vec<usize>,
    pub eta: f64,
    pub p_norm: f64,
    pub alpha: f64,
    pub runs: usize,
    pub max_sweeps: usize,
    pub search_mode: SearchMode,
    pub exhaustive_budget: u64,
    pub gibbs_sweeps: usize,
    /// Defaults to 20% of the sweeps.
    pub burn_in: Option<usize>,
    pub criteria: Vec<Criterion>,
    pub pvalue_alpha: f64,
    pub penalty_offset: usize,
    pub cv_runs: usize,
    pub train_fraction: f64,
    pub r2_reference: R2Reference,
    /// 1-based subset for cross-validation and the named model; defaults to
    /// the best sequence of the largest searched size.
    pub model_subset: Option<Vec<usize>>,
    pub corr_threshold: f64,
    pub seed: u64,
}

/// Library defaults with no dataset or target; TOML files start from these.
impl Default for RunConfig {
    fn default() -> Self {
        Self::new(PathBuf::new(), String::new(), 0)
    }
}

impl RunConfig {
    pub fn new(dataset_path: impl Into<PathBuf>, target_column: impl Into<String>, seed: u64) -> Self {
        Self {
            dataset_path: dataset_path.into(),
            output_dir: default_output_dir(),
            target_column: target_column.into(),
            delimiter: ',',
            exclude_columns: Vec::new(),
            normalize: Normalization::None,
            stages: Stage::ALL.to_vec(),
            methods: RankingMethod::ALL.to_vec(),
            m_values: vec![1, 2, 3, 4, 5, 6, 7],
            gibbs_m_values: vec![2, 6, 10, 20],
            eta: DEFAULT_ETA,
            p_norm: 1.0,
            alpha: 1.0,
            runs: DEFAULT_RESTARTS,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            search_mode: SearchMode::Auto,
            exhaustive_budget: DEFAULT_EXHAUSTIVE_BUDGET as u64,
            gibbs_sweeps: 2000,
            burn_in: None,
            criteria: vec![Criterion::Aic, Criterion::Bic, Criterion::Hqic, Criterion::Pvalue],
            pvalue_alpha: 0.05,
            penalty_offset: 0,
            cv_runs: DEFAULT_CV_RUNS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            r2_reference: R2Reference::TestMean,
            model_subset: None,
            corr_threshold: DEFAULT_CORRELATION_THRESHOLD,
            seed,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn cost(&self) -> Result<CostSpec> {
        CostSpec::new(self.p_norm, self.alpha)
    }

    pub fn runs_stage(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn ingest_options(&self) -> Result<IngestOptions> {
        if !self.delimiter.is_ascii() {
            return Err(Error::InvalidConfig(format!(
                "delimiter '{}' is not ASCII",
                self.delimiter
            )));
        }
        Ok(IngestOptions {
            target_column: self.target_column.clone(),
            delimiter: self.delimiter as u8,
            normalize: self.normalize,
            exclude: self.exclude_columns.clone(),
        })
    }

    /// SHA-256 of the canonical JSON form (paths excluded).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_column.is_empty() {
            return Err(Error::InvalidConfig("no target column given".into()));
        }
        self.cost()?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        if self.gibbs_sweeps == 0 {
            return Err(Error::InvalidConfig("Gibbs sweeps must be at least 1".into()));
        }
        if !(self.pvalue_alpha > 0.0 && self.pvalue_alpha < 1.0) {
            return Err(Error::InvalidConfig("p-value threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("varsel-out"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub dataset_sha256: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_rows: usize,
    pub n_features: usize,
    pub target_column: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    #[serde(flatten)]
    pub ranking: Ranking,
    /// Maximum-curvature prefix of the log-log error curve (annotation only).
    pub elbow: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSequence {
    pub m: usize,
    pub strategy: String,
    #[serde(flatten)]
    pub result: SearchResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionEntry {
    pub m: usize,
    pub eta: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub profile: InclusionProfile,
    /// 1-based features whose probability exceeds the uniform reference,
    /// by decreasing probability.
    pub above_uniform: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub method: RankingMethod,
    #[serde(flatten)]
    pub selection: OrderSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub config: RunConfig,
    pub dataset: DatasetSummary,
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub notices: Vec<String>,
    pub rankings: Vec<RankingEntry>,
    pub unordered_error_curve: Option<ErrorCurve>,
    pub best_sequences: Vec<BestSequence>,
    pub inclusion_profiles: Vec<InclusionEntry>,
    pub order_selections: Vec<SelectionEntry>,
    pub cross_validation: Option<CvReport>,
    pub named_model: Option<NamedModel>,
    pub correlation: Option<CorrelationGraph>,
}

/// Stream ids for the per-stage master seeds.
const SEARCH_STREAM: u64 = 1;
const GIBBS_STREAM: u64 = 2;
const CV_STREAM: u64 = 3;

pub fn search_seed(seed: u64) -> u64 {
    derive_seed(seed, SEARCH_STREAM)
}

pub fn gibbs_seed(seed: u64, m: usize) -> u64 {
    derive_seed(derive_seed(seed, GIBBS_STREAM), m as u64)
}

pub fn cv_seed(seed: u64) -> u64 {
    derive_seed(seed, CV_STREAM)
}

/// Runs the configured best-sequence search for one size.
pub fn search_size(dataset: &Dataset, config: &RunConfig, m: usize) -> Result<BestSequence> {
    let cost = config.cost()?;
    let budget = config.exhaustive_budget as u128;
    let exhaustive = match config.search_mode {
        SearchMode::Exhaustive => true,
        SearchMode::Restarts => false,
        SearchMode::Auto => binomial(dataset.n_features(), m) <= budget,
    };
    let (strategy, result) = if exhaustive {
        ("exhaustive", exhaustive_best_subset(dataset, m, cost, budget)?)
    } else {
        (
            "alternating",
            multi_restart_search(
                dataset,
                m,
                config.runs,
                search_seed(config.seed),
                config.max_sweeps,
                cost,
            )?,
        )
    };
    Ok(BestSequence {
        m,
        strategy: strategy.into(),
        result,
    })
}

/// Runs the Gibbs sampler for one size.
pub fn gibbs_size(dataset: &Dataset, config: &RunConfig, m: usize) -> Result<InclusionEntry> {
    let gc = GibbsConfig {
        m,
        eta: config.eta,
        cost: config.cost()?,
        sweeps: config.gibbs_sweeps,
        burn_in: config.burn_in.unwrap_or(config.gibbs_sweeps / 5),
        seed: gibbs_seed(config.seed, m),
    };
    let chain = gibbs_run(dataset, &gc)?;
    let profile = inclusion_frequencies(&chain, dataset.n_features(), gc.burn_in)?;
    let mut above: Vec<usize> = (0..dataset.n_features())
        .filter(|&k| profile.probabilities[k] > profile.uniform_reference)
        .collect();
    above.sort_by(|&a, &b| {
        profile.probabilities[b]
            .total_cmp(&profile.probabilities[a])
            .then(a.cmp(&b))
    });
    Ok(InclusionEntry {
        m,
        eta: gc.eta,
        sweeps: gc.sweeps,
        burn_in: gc.burn_in,
        seed: gc.seed,
        profile,
        above_uniform: above.into_iter().map(|k| k + 1).collect(),
    })
}

fn stage<T>(name: Stage, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name.name(),
        source: Box::new(e),
    })
}

/// Executes every configured stage on an already-ingested dataset.
/// On a stage failure the partial report is returned together with the error.
pub fn analyze(dataset: &Dataset, config: &RunConfig, dataset_sha256: String) -> (Report, Option<Error>) {
    let mut report = Report {
        schema_version: SCHEMA_VERSION,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.hash(),
            dataset_sha256,
            seed: config.seed,
        },
        config: config.clone(),
        dataset: DatasetSummary {
            n_rows: dataset.n_rows(),
            n_features: dataset.n_features(),
            target_column: config.target_column.clone(),
            labels: dataset.labels().to_vec(),
        },
        complete: false,
        failed_stage: None,
        error: None,
        notices: Vec::new(),
        rankings: Vec::new(),
        unordered_error_curve: None,
        best_sequences: Vec::new(),
        inclusion_profiles: Vec::new(),
        order_selections: Vec::new(),
        cross_validation: None,
        named_model: None,
        correlation: None,
    };
    match run_stages(dataset, config, &mut report) {
        Ok(()) => {
            report.complete = true;
            (report, None)
        }
        Err(e) => {
            if let Error::Stage { stage, .. } = &e {
                report.failed_stage = Some(stage.to_string());
            }
            report.error = Some(e.to_string());
            (report, Some(e))
        }
    }
}

fn run_stages(dataset: &Dataset, config: &RunConfig, report: &mut Report) -> Result<()> {
    config.validate()?;
    if config.runs_stage(Stage::Rank) {
        for &method in &config.methods {
            let ranking = stage(
                Stage::Rank,
                match method {
                    RankingMethod::PValue => rank_pvalues(dataset, config.pvalue_alpha),
                    m => rank(dataset, m),
                },
            )?;
            let elbow = elbow_annotation(&ranking.error_curve.mae);
            report.rankings.push(RankingEntry { ranking, elbow });
        }
        report.unordered_error_curve = Some(stage(Stage::Rank, error_curve(dataset, &dataset.all_features()))?);
    }
    if config.runs_stage(Stage::Search) {
        for &m in &config.m_values {
            report
                .best_sequences
                .push(stage(Stage::Search, search_size(dataset, config, m))?);
        }
    }
    if config.runs_stage(Stage::Gibbs) {
        for &m in &config.gibbs_m_values {
            if m >= dataset.n_features() {
                report.notices.push(format!(
                    "Gibbs size {m} skipped: needs fewer than {} features",
                    dataset.n_features()
                ));
                continue;
            }
            report
                .inclusion_profiles
                .push(stage(Stage::Gibbs, gibbs_size(dataset, config, m))?);
        }
    }
    if config.runs_stage(Stage::Select) {
        let mut rankings: Vec<Ranking> = report.rankings.iter().map(|e| e.ranking.clone()).collect();
        if rankings.is_empty() {
            for &method in &config.methods {
                rankings.push(stage(
                    Stage::Select,
                    match method {
                        RankingMethod::PValue => rank_pvalues(dataset, config.pvalue_alpha),
                        m => rank(dataset, m),
                    },
                )?);
            }
        }
        for ranking in &rankings {
            for &criterion in &config.criteria {
                if criterion == Criterion::Pvalue && ranking.method != RankingMethod::PValue {
                    continue;
                }
                let selection = stage(
                    Stage::Select,
                    select_order_with_offset(dataset, ranking, criterion, config.penalty_offset),
                )?;
                report.order_selections.push(SelectionEntry {
                    method: ranking.method,
                    selection,
                });
            }
        }
    }
    if config.runs_stage(Stage::Corr) {
        report.correlation = Some(correlation_graph(dataset, config.corr_threshold));
    }
    let wants_model = config.runs_stage(Stage::Cv) || config.runs_stage(Stage::Model);
    let model_subset = match &config.model_subset {
        Some(s) => Some(stage(Stage::Model, FeatureSubset::from_one_based(s))?),
        None => report
            .best_sequences
            .iter()
            .max_by_key(|b| b.m)
            .map(|b| b.result.subset.clone()),
    };
    match (wants_model, model_subset) {
        (true, Some(subset)) => {
            if config.runs_stage(Stage::Cv) {
                report.cross_validation = Some(stage(
                    Stage::Cv,
                    monte_carlo_cv(
                        dataset,
                        &subset,
                        config.train_fraction,
                        config.cv_runs,
                        cv_seed(config.seed),
                        config.r2_reference,
                    ),
                )?);
            }
            if config.runs_stage(Stage::Model) {
                report.named_model = Some(stage(Stage::Model, fit_named_model(dataset, &subset))?.1);
            }
        }
        (true, None) => report
            .notices
            .push("no model subset configured or searched; cross-validation and named model skipped".into()),
        _ => {}
    }
    Ok(())
}

/// Ingests the dataset, runs every stage, and writes the output tree.
pub fn run_pipeline(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let bytes = fs::read(&config.dataset_path)?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let dataset = ingest_csv(&config.dataset_path, &config.ingest_options()?)?;
    let (report, err) = analyze(&dataset, config, digest);
    write_outputs(&report, &config.output_dir)?;
    match err {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

fn fmt_subset(s: &FeatureSubset) -> String {
    s.one_based()
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes `report.json` and the flat per-figure files.
pub fn write_outputs(report: &Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    let labels = &report.dataset.labels;

    if !report.rankings.is_empty() {
        let mut s = String::from("method,position,feature,label,raw_feature\n");
        let mut curves = String::from("method,M,MAE\n");
        for e in &report.rankings {
            let r = &e.ranking;
            for (pos, (&k, &raw)) in r.order.indices().iter().zip(r.raw_sequence.indices()).enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.method,
                    pos + 1,
                    k + 1,
                    csv_field(&labels[k]),
                    raw + 1
                );
            }
            for (i, v) in r.error_curve.mae.iter().enumerate() {
                let _ = writeln!(curves, "{},{},{}", r.method, i + 1, v);
            }
        }
        if let Some(c) = &report.unordered_error_curve {
            for (i, v) in c.mae.iter().enumerate() {
                let _ = writeln!(curves, "NONE,{},{}", i + 1, v);
            }
        }
        fs::write(dir.join("rankings.csv"), s)?;
        fs::write(dir.join("error_curves.csv"), curves)?;
    }
    if !report.best_sequences.is_empty() {
        let mut s = String::from("m,strategy,cost,subset\n");
        for b in &report.best_sequences {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                b.m,
                b.strategy,
                b.result.cost,
                fmt_subset(&b.result.subset)
            );
        }
        fs::write(dir.join("best_sequences.csv"), s)?;
    }
    for e in &report.inclusion_profiles {
        let mut s = String::from("feature,label,probability,uniform\n");
        for (k, p) in e.profile.probabilities.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                k + 1,
                csv_field(&labels[k]),
                p,
                e.profile.uniform_reference
            );
        }
        fs::write(dir.join(format!("inclusion_m{}.csv", e.m)), s)?;
    }
    if !report.order_selections.is_empty() {
        let mut s = String::from("method,criterion,M,value\n");
        for e in &report.order_selections {
            match &e.selection.curve {
                crate::selection::SelectionCurve::Values(v) => {
                    for (i, x) in v.iter().enumerate() {
                        let _ = writeln!(s, "{},{},{},{}", e.method, e.selection.criterion, i + 1, x);
                    }
                }
                crate::selection::SelectionCurve::Flags(f) => {
                    for (i, x) in f.iter().enumerate() {
                        let _ = writeln!(s, "{},{},{},{}", e.method, e.selection.criterion, i + 1, u8::from(*x));
                    }
                }
            }
        }
        fs::write(dir.join("criterion_curves.csv"), s)?;
    }
    if let Some(g) = &report.correlation {
        let mut s = String::from("i,j,label_i,label_j,rho\n");
        for e in &g.edges {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.i,
                e.j,
                csv_field(&labels[e.i - 1]),
                csv_field(&labels[e.j - 1]),
                e.rho
            );
        }
        fs::write(dir.join("correlation_edges.csv"), s)?;
    }
    if let Some(m) = &report.named_model {
        let mut s = String::from("term,label,coefficient\n");
        let _ = writeln!(s, "0,intercept,{}", m.intercept);
        for c in &m.coefficients {
            let _ = writeln!(s, "{},{},{}", c.feature, csv_field(&c.label), c.value);
        }
        fs::write(dir.join("named_model.csv"), s)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
