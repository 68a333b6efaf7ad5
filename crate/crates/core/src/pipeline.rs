//! End-to-end run: ingest, rank, audit, mitigate, re-audit, evaluate, and
//! write every result to an output directory.
//!
//! Files written (machine files use full round-trip precision):
//!
//! | file | content |
//! |---|---|
//! | `manifest.json` | configuration, sizes, convergence metadata |
//! | `rankings_aa.csv` | arithmetic-average baseline |
//! | `reputations_pre.csv`, `rankings_pre.csv` | converged engine output |
//! | `convergence.csv` | sup-norm reputation change per iteration |
//! | `audit_pre.{csv,json}` | pairwise disparate reputation and MW tests |
//! | `reputations_post.csv`, `rankings_post.csv` | after harmonization |
//! | `audit_post.{csv,json}` | audit of the harmonized reputations |
//! | `tau.{csv,json}` | Kendall tau of each ranking pairing |
//! | `summary_pre.csv`, `summary_post.csv` | box-whisker data per class |
//!
//! The audit and mitigation files are only written when an attribute is selected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, AgeBrackets, AttributeTable, DatasetError, RatingsMatrix};
use crate::independence::{self, AuditConfig, AuditError, DrAuditReport, GroupStats, Harmonized};
use crate::reputation::{
    self, format_full, EngineConfig, EngineError, EngineOutput, RankingVector,
};
use crate::stats::{self, FiveNumberSummary, StatsError, TauVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeChoice {
    Gender,
    Age,
    None,
}

impl AttributeChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttributeChoice::Gender => "gender",
            AttributeChoice::Age => "age",
            AttributeChoice::None => "none",
        }
    }
}

impl std::str::FromStr for AttributeChoice {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.contains(',') || s.contains('+') {
            return Err(PipelineError::config(format!(
                "attribute {s:?}: only one attribute can be mitigated per run; \
                 joint mitigation of several attributes is future work"
            )));
        }
        match s {
            "gender" => Ok(AttributeChoice::Gender),
            "age" => Ok(AttributeChoice::Age),
            "none" => Ok(AttributeChoice::None),
            other => Err(PipelineError::config(format!(
                "unknown attribute {other:?} (expected gender, age or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFormats {
    pub csv: bool,
    pub json: bool,
}

impl Default for OutputFormats {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub ratings_path: PathBuf,
    pub users_path: Option<PathBuf>,
    pub attribute: AttributeChoice,
    pub engine: EngineConfig,
    pub alpha: f64,
    pub output_dir: PathBuf,
    pub formats: OutputFormats,
    pub scale_max: u32,
    pub age_brackets: AgeBrackets,
}

impl RunConfig {
    pub fn new(ratings_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            ratings_path: ratings_path.into(),
            users_path: None,
            attribute: AttributeChoice::None,
            engine: EngineConfig::default(),
            alpha: 0.05,
            output_dir: output_dir.into(),
            formats: OutputFormats::default(),
            scale_max: 5,
            age_brackets: AgeBrackets::movielens(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.engine
            .validate()
            .map_err(|e| PipelineError::new(Stage::Config, Cause::Engine(e)))?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PipelineError::config(format!(
                "alpha must lie in ]0, 1[, got {}",
                self.alpha
            )));
        }
        if !self.formats.csv && !self.formats.json {
            return Err(PipelineError::config("no output format selected"));
        }
        if !self.ratings_path.is_file() {
            return Err(PipelineError::config(format!(
                "ratings file {} does not exist",
                self.ratings_path.display()
            )));
        }
        match (&self.users_path, self.attribute) {
            (None, AttributeChoice::Gender | AttributeChoice::Age) => Err(PipelineError::config(
                format!("attribute {} needs a users file", self.attribute.as_str()),
            )),
            (Some(p), _) if !p.is_file() => Err(PipelineError::config(format!(
                "users file {} does not exist",
                p.display()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Rank,
    Audit,
    Mitigate,
    ReAudit,
    Evaluate,
    Write,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Rank => "rank",
            Stage::Audit => "audit",
            Stage::Mitigate => "mitigate",
            Stage::ReAudit => "re-audit",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
            Stage::Report => "report",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Cause {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{path}: {error}")]
    Io {
        path: PathBuf,
        error: std::io::Error,
    },
    #[error("{path}: {error}")]
    Json {
        path: PathBuf,
        error: serde_json::Error,
    },
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {cause}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub cause: Cause,
}

impl PipelineError {
    pub fn new(stage: Stage, cause: impl Into<Cause>) -> Self {
        Self {
            stage,
            cause: cause.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Stage::Config, Cause::Config(message.into()))
    }

    /// 2 for configuration errors, 3 for unreadable or inconsistent input,
    /// 4 for numerical and audit failures.
    pub fn exit_code(&self) -> i32 {
        match &self.cause {
            Cause::Config(_) => 2,
            Cause::Engine(EngineError::InvalidConfig(_)) => 2,
            Cause::Audit(AuditError::InvalidAlpha(_)) => 2,
            Cause::Io { .. } if self.stage == Stage::Write => 2,
            Cause::Io { .. } | Cause::Json { .. } | Cause::Dataset(_) => 3,
            Cause::Engine(EngineError::Parse { .. }) | Cause::Audit(AuditError::Parse { .. }) => 3,
            Cause::Engine(_) | Cause::Audit(_) | Cause::Stats(_) => 4,
        }
    }
}

/// Per-pairing Kendall tau values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEntry {
    pub comparison: String,
    pub tau_b: f64,
    pub tau_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub attribute: String,
    pub entries: Vec<TauEntry>,
}

pub const TAU_CSV_HEADER: &str = "comparison,tau_b,tau_a";

impl TauReport {
    pub fn get(&self, comparison: &str) -> Option<&TauEntry> {
        self.entries.iter().find(|e| e.comparison == comparison)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TAU_CSV_HEADER}\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{}\n",
                e.comparison,
                format_full(e.tau_b),
                format_full(e.tau_a)
            ));
        }
        out
    }

    pub fn from_csv(attribute: &str, source: &str) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (n, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (n == 0 && line == TAU_CSV_HEADER) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(format!("line {}: expected 3 fields", n + 1));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| format!("line {}: bad number {s:?}", n + 1))
            };
            entries.push(TauEntry {
                comparison: fields[0].to_string(),
                tau_b: num(fields[1])?,
                tau_a: num(fields[2])?,
            });
        }
        Ok(Self {
            attribute: attribute.to_string(),
            entries,
        })
    }
}

pub const AA_VS_UNMITIGATED: &str = "aa_vs_unmitigated";
pub const AA_VS_MITIGATED: &str = "aa_vs_mitigated";
pub const UNMITIGATED_VS_MITIGATED: &str = "unmitigated_vs_mitigated";

fn tau_entry(
    comparison: &str,
    a: &RankingVector,
    b: &RankingVector,
) -> Result<TauEntry, StatsError> {
    Ok(TauEntry {
        comparison: comparison.to_string(),
        tau_b: stats::kendall_tau_with(a, b, TauVariant::B)?,
        tau_a: stats::kendall_tau_with(a, b, TauVariant::A)?,
    })
}

/// Baseline and converged engine output, shared by every attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseRun {
    pub aa: RankingVector,
    pub engine: EngineOutput,
}

impl BaseRun {
    pub fn compute(matrix: &RatingsMatrix, config: &EngineConfig) -> Result<Self, PipelineError> {
        let aa = reputation::aa_ranking(matrix).map_err(|e| PipelineError::new(Stage::Rank, e))?;
        let engine =
            reputation::run(matrix, config).map_err(|e| PipelineError::new(Stage::Rank, e))?;
        Ok(Self { aa, engine })
    }

    pub fn tau_vs_aa(&self) -> Result<TauEntry, PipelineError> {
        tau_entry(AA_VS_UNMITIGATED, &self.aa, &self.engine.rankings)
            .map_err(|e| PipelineError::new(Stage::Evaluate, e))
    }
}

/// Audit, harmonization and re-audit for one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Mitigation {
    pub stats_pre: GroupStats,
    pub audit_pre: DrAuditReport,
    pub harmonized: Harmonized,
    pub stats_post: GroupStats,
    pub audit_post: DrAuditReport,
    pub tau: TauReport,
}

impl Mitigation {
    pub fn compute(
        base: &BaseRun,
        matrix: &RatingsMatrix,
        attr: &AttributeTable,
        audit: &AuditConfig,
    ) -> Result<Self, PipelineError> {
        let pre = &base.engine.reputations;
        let stats_pre = independence::group_stats(pre, attr)
            .map_err(|e| PipelineError::new(Stage::Audit, e))?;
        let audit_pre = independence::mw_pairwise_audit(pre, attr, audit)
            .map_err(|e| PipelineError::new(Stage::Audit, e))?;
        let harmonized = independence::harmonize(pre, attr, matrix)
            .map_err(|e| PipelineError::new(Stage::Mitigate, e))?;
        let stats_post = independence::group_stats(&harmonized.reputations, attr)
            .map_err(|e| PipelineError::new(Stage::ReAudit, e))?;
        let audit_post = independence::mw_pairwise_audit(&harmonized.reputations, attr, audit)
            .map_err(|e| PipelineError::new(Stage::ReAudit, e))?;
        let evaluate = |e| PipelineError::new(Stage::Evaluate, e);
        let tau = TauReport {
            attribute: attr.name().to_string(),
            entries: vec![
                base.tau_vs_aa()?,
                tau_entry(AA_VS_MITIGATED, &base.aa, &harmonized.rankings).map_err(evaluate)?,
                tau_entry(
                    UNMITIGATED_VS_MITIGATED,
                    &base.engine.rankings,
                    &harmonized.rankings,
                )
                .map_err(evaluate)?,
            ],
        };
        Ok(Self {
            stats_pre,
            audit_pre,
            harmonized,
            stats_post,
            audit_post,
            tau,
        })
    }
}

/// Everything a pipeline run produced, kept in memory as well as on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub base: BaseRun,
    pub mitigation: Option<Mitigation>,
    pub tau: TauReport,
    pub files: Vec<PathBuf>,
}

fn read(path: &Path, stage: Stage) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|error| {
        PipelineError::new(
            stage,
            Cause::Io {
                path: path.to_path_buf(),
                error,
            },
        )
    })
}

/// Reads the ratings file, choosing the layout by extension: `.csv` is the
/// canonical `user_id,item_id,raw_rating` form, anything else MovieLens `::`.
pub fn load_ratings(path: &Path, scale_max: u32) -> Result<RatingsMatrix, PipelineError> {
    let text = read(path, Stage::Ingest)?;
    let parsed = if path.extension().is_some_and(|e| e == "csv") {
        dataset::parse_ratings_csv(&text, scale_max)
    } else {
        dataset::parse_ratings(&text, scale_max)
    };
    parsed.map_err(|e| PipelineError::new(Stage::Ingest, e))
}

/// Reads the attribute table named by `choice`. `.csv` files use the
/// canonical `user_id,attribute,class` form, anything else MovieLens `::`.
pub fn load_attribute(
    path: &Path,
    choice: AttributeChoice,
    ages: &AgeBrackets,
) -> Result<AttributeTable, PipelineError> {
    let text = read(path, Stage::Ingest)?;
    let ingest = |e| PipelineError::new(Stage::Ingest, e);
    let name = choice.as_str();
    if path.extension().is_some_and(|e| e == "csv") {
        dataset::parse_attributes_csv(&text)
            .map_err(ingest)?
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| {
                PipelineError::new(
                    Stage::Ingest,
                    Cause::Config(format!("{} has no {name:?} attribute", path.display())),
                )
            })
    } else {
        let (gender, age) = dataset::parse_users(&text, ages).map_err(ingest)?;
        Ok(if choice == AttributeChoice::Age {
            age
        } else {
            gender
        })
    }
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, content: &str) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|error| {
            PipelineError::new(
                Stage::Write,
                Cause::Io {
                    path: path.clone(),
                    error,
                },
            )
        })?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(value).expect("json values serialize");
        self.put(name, &format!("{text}\n"))
    }
}

fn summaries_csv(
    reputations: &reputation::ReputationVector,
    attr: Option<&AttributeTable>,
) -> Result<String, PipelineError> {
    let mut out = format!("{}\n", FiveNumberSummary::CSV_HEADER);
    let groups: Vec<(String, Vec<f64>)> = match attr {
        Some(attr) => {
            let samples = independence::class_samples(reputations, attr)
                .map_err(|e| PipelineError::new(Stage::Evaluate, e))?;
            attr.classes().iter().cloned().zip(samples).collect()
        }
        None => vec![("all".to_string(), reputations.values().to_vec())],
    };
    for (label, values) in groups {
        let summary = stats::five_number_summary(&values)
            .map_err(|e| PipelineError::new(Stage::Evaluate, e))?;
        out.push_str(&summary.csv_row(&label));
        out.push('\n');
    }
    Ok(out)
}

fn convergence_csv(output: &EngineOutput) -> String {
    let mut out = String::from("iteration,delta\n");
    for (k, d) in output.reputations.trajectory.iter().enumerate() {
        out.push_str(&format!("{},{}\n", k + 1, format_full(*d)));
    }
    out
}

/// Runs every stage for `config` and writes the result files.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let matrix = load_ratings(&config.ratings_path, config.scale_max)?;
    let attr = match (config.attribute, &config.users_path) {
        (AttributeChoice::None, _) | (_, None) => None,
        (choice, Some(path)) => {
            let table = load_attribute(path, choice, &config.age_brackets)?;
            table
                .check_covers(&matrix)
                .map_err(|e| PipelineError::new(Stage::Ingest, e))?;
            Some(table)
        }
    };
    let base = BaseRun::compute(&matrix, &config.engine)?;
    run_stages(config, &matrix, attr.as_ref(), base)
}

/// Runs the audit, mitigation and evaluation stages on a precomputed
/// [`BaseRun`] and writes the result files.
pub fn run_stages(
    config: &RunConfig,
    matrix: &RatingsMatrix,
    attr: Option<&AttributeTable>,
    base: BaseRun,
) -> Result<PipelineOutput, PipelineError> {
    let audit_config = AuditConfig::new(config.alpha, config.engine.lambda, matrix.delta_r());
    let mitigation = attr
        .map(|a| Mitigation::compute(&base, matrix, a, &audit_config))
        .transpose()?;
    let tau = match &mitigation {
        Some(m) => m.tau.clone(),
        None => TauReport {
            attribute: "none".into(),
            entries: vec![base.tau_vs_aa()?],
        },
    };

    fs::create_dir_all(&config.output_dir).map_err(|error| {
        PipelineError::new(
            Stage::Write,
            Cause::Io {
                path: config.output_dir.clone(),
                error,
            },
        )
    })?;
    let mut w = Writer {
        dir: &config.output_dir,
        files: Vec::new(),
    };
    let rep = &base.engine.reputations;
    let manifest = serde_json::json!({
        "config": config,
        "n_users": matrix.n_users(),
        "n_items": matrix.n_items(),
        "n_ratings": matrix.nnz(),
        "delta_r": matrix.delta_r(),
        "iterations_run": rep.iterations_run,
        "converged": rep.converged,
        "final_delta": rep.final_delta,
        "unrated_users": rep.unrated,
        "harmonization": mitigation.as_ref().map(|m| serde_json::json!({
            "target_mean": m.harmonized.target_mean,
            "target_std": m.harmonized.target_std,
            "degenerate": m.harmonized.degenerate,
        })),
    });
    w.json("manifest.json", &manifest)?;
    w.put("rankings_aa.csv", &base.aa.to_csv())?;
    w.put("reputations_pre.csv", &rep.to_csv())?;
    w.put("rankings_pre.csv", &base.engine.rankings.to_csv())?;
    w.put("convergence.csv", &convergence_csv(&base.engine))?;
    w.put("summary_pre.csv", &summaries_csv(rep, attr)?)?;

    if let (Some(m), Some(attr)) = (&mitigation, attr) {
        for (name, audit) in [("audit_pre", &m.audit_pre), ("audit_post", &m.audit_post)] {
            if config.formats.csv {
                w.put(&format!("{name}.csv"), &audit.to_csv())?;
            }
            if config.formats.json {
                w.json(&format!("{name}.json"), &audit.to_json())?;
            }
        }
        w.put("reputations_post.csv", &m.harmonized.reputations.to_csv())?;
        w.put("rankings_post.csv", &m.harmonized.rankings.to_csv())?;
        w.put(
            "summary_post.csv",
            &summaries_csv(&m.harmonized.reputations, Some(attr))?,
        )?;
    }
    if config.formats.csv {
        w.put("tau.csv", &tau.to_csv())?;
    }
    if config.formats.json {
        w.json(
            "tau.json",
            &serde_json::to_value(&tau).expect("tau serializes"),
        )?;
    }

    let files = w.files;
    Ok(PipelineOutput {
        base,
        mitigation,
        tau,
        files,
    })
}

/// Audits reputations previously written by [`run_pipeline`].
pub fn audit_saved(
    reputations_path: &Path,
    attr: &AttributeTable,
    config: &AuditConfig,
) -> Result<DrAuditReport, PipelineError> {
    let text = read(reputations_path, Stage::Audit)?;
    let reputations = reputation::ReputationVector::from_csv(&text)
        .map_err(|e| PipelineError::new(Stage::Audit, e))?;
    independence::mw_pairwise_audit(&reputations, attr, config)
        .map_err(|e| PipelineError::new(Stage::Audit, e))
}
