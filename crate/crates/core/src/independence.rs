//! Disparate reputation: per-class reputation statistics, pairwise audits,
//! and the per-class affine harmonization that equalizes class mean and
//! spread before rankings are recomputed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AttributeTable, RatingsMatrix, UserId};
use crate::reputation::{self, format_full, EngineError, RankingVector, ReputationVector};
use crate::stats::{mann_whitney_u_with, MwMethod, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("attribute {attribute:?}: class {class:?} has no members")]
    EmptyClass { attribute: String, class: String },
    #[error("attribute {attribute:?}: unknown class {class:?}")]
    UnknownClass { attribute: String, class: String },
    #[error("attribute {attribute:?}: user {user} has a reputation but no class")]
    MissingAssignment { attribute: String, user: UserId },
    #[error("attribute {attribute:?} needs at least 2 classes, has {count}")]
    TooFewClasses { attribute: String, count: usize },
    #[error("significance level must lie in ]0, 1[, got {0}")]
    InvalidAlpha(f64),
    #[error("disparate reputation {delta} for ({class_a}, {class_b}) is outside [{low}, {high}]")]
    OutOfBound {
        class_a: String,
        class_b: String,
        delta: f64,
        low: f64,
        high: f64,
    },
    #[error("reputation vector does not cover the same users as the ratings matrix")]
    UserMismatch,
    #[error("harmonized reputation of user {user} is {value}, outside ]0, 1]")]
    HarmonizedOutOfRange { user: UserId, value: f64 },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: String,
    pub mean: f64,
    /// Population standard deviation (divisor = count).
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub attribute: String,
    pub classes: Vec<ClassStats>,
}

impl GroupStats {
    pub fn get(&self, label: &str) -> Option<&ClassStats> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// Smallest class mean.
    pub fn min_mean(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.mean)
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest class standard deviation.
    pub fn min_std(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.std)
            .fold(f64::INFINITY, f64::min)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Class index of every user of `reputations`, in the vector's order.
fn class_indices(
    reputations: &ReputationVector,
    attr: &AttributeTable,
) -> Result<Vec<usize>, AuditError> {
    reputations
        .users()
        .iter()
        .map(|&user| {
            attr.class_index_of(user)
                .ok_or_else(|| AuditError::MissingAssignment {
                    attribute: attr.name().to_string(),
                    user,
                })
        })
        .collect()
}

/// Reputations split by class, each in ascending user order.
pub fn class_samples(
    reputations: &ReputationVector,
    attr: &AttributeTable,
) -> Result<Vec<Vec<f64>>, AuditError> {
    let indices = class_indices(reputations, attr)?;
    let mut samples = vec![Vec::new(); attr.classes().len()];
    for (&class, &value) in indices.iter().zip(reputations.values()) {
        samples[class].push(value);
    }
    for (class, sample) in attr.classes().iter().zip(&samples) {
        if sample.is_empty() {
            return Err(AuditError::EmptyClass {
                attribute: attr.name().to_string(),
                class: class.clone(),
            });
        }
    }
    Ok(samples)
}

pub fn group_stats(
    reputations: &ReputationVector,
    attr: &AttributeTable,
) -> Result<GroupStats, AuditError> {
    let samples = class_samples(reputations, attr)?;
    let classes = attr
        .classes()
        .iter()
        .zip(&samples)
        .map(|(label, sample)| {
            let (mean, std) = mean_std(sample);
            ClassStats {
                label: label.clone(),
                mean,
                std,
                count: sample.len(),
            }
        })
        .collect();
    Ok(GroupStats {
        attribute: attr.name().to_string(),
        classes,
    })
}

/// `mean(class_a) - mean(class_b)`; negative when `class_b` is better reputed.
pub fn disparate_reputation(
    stats: &GroupStats,
    class_a: &str,
    class_b: &str,
) -> Result<f64, AuditError> {
    let lookup = |class: &str| {
        stats.get(class).ok_or_else(|| AuditError::UnknownClass {
            attribute: stats.attribute.clone(),
            class: class.to_string(),
        })
    };
    Ok(lookup(class_a)?.mean - lookup(class_b)?.mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub delta_r: f64,
    pub method: MwMethod,
}

impl AuditConfig {
    pub fn new(alpha: f64, lambda: f64, delta_r: f64) -> Self {
        Self {
            alpha,
            lambda,
            delta_r,
            method: MwMethod::Auto,
        }
    }

    /// Stated range of the disparate reputation, `[-1 + dR lambda, 1 - dR lambda]`.
    pub fn range_bound(&self) -> [f64; 2] {
        let w = self.delta_r * self.lambda;
        [-1.0 + w, 1.0 - w]
    }

    /// Range implied by converged reputations lying in `[1 - lambda dR, 1]`.
    pub fn tight_bound(&self) -> [f64; 2] {
        let w = self.delta_r * self.lambda;
        [-w, w]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAudit {
    pub class_a: String,
    pub class_b: String,
    pub count_a: usize,
    pub count_b: usize,
    pub delta: f64,
    /// U of `class_a`'s sample.
    pub u_statistic: f64,
    pub p_value: f64,
    pub rejected: bool,
}

impl PairAudit {
    /// The same comparison seen from `class_b`.
    pub fn reversed(&self) -> PairAudit {
        PairAudit {
            class_a: self.class_b.clone(),
            class_b: self.class_a.clone(),
            count_a: self.count_b,
            count_b: self.count_a,
            delta: -self.delta,
            u_statistic: (self.count_a * self.count_b) as f64 - self.u_statistic,
            p_value: self.p_value,
            rejected: self.rejected,
        }
    }
}

/// Pairwise disparate reputation and Mann-Whitney results for one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrAuditReport {
    pub attribute: String,
    pub classes: Vec<String>,
    pub alpha: f64,
    pub range_bound: [f64; 2],
    pub tight_bound: [f64; 2],
    /// Smallest and largest delta over the audited pairs.
    pub observed_range: [f64; 2],
    /// Unordered pairs `(classes[i], classes[j])` with `i < j`, row-major.
    pub pairs: Vec<PairAudit>,
}

pub const AUDIT_CSV_HEADER: &str = "class_a,class_b,delta,u_stat,p_value,rejected";

impl DrAuditReport {
    /// Looks up a pair in either orientation.
    pub fn pair(&self, class_a: &str, class_b: &str) -> Option<PairAudit> {
        self.pairs.iter().find_map(|p| {
            if p.class_a == class_a && p.class_b == class_b {
                Some(p.clone())
            } else if p.class_a == class_b && p.class_b == class_a {
                Some(p.reversed())
            } else {
                None
            }
        })
    }

    pub fn delta(&self, class_a: &str, class_b: &str) -> Option<f64> {
        self.pair(class_a, class_b).map(|p| p.delta)
    }

    pub fn any_rejected(&self) -> bool {
        self.pairs.iter().any(|p| p.rejected)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{AUDIT_CSV_HEADER}\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.class_a,
                p.class_b,
                format_full(p.delta),
                format_full(p.u_statistic),
                format_full(p.p_value),
                p.rejected
            );
        }
        out
    }

    /// Upper-triangular matrix of `f(pair)`, `None` on and below the diagonal.
    pub fn triangle<T>(&self, f: impl Fn(&PairAudit) -> T) -> Vec<Vec<Option<T>>> {
        let k = self.classes.len();
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        if j <= i {
                            None
                        } else {
                            self.pair(&self.classes[i], &self.classes[j]).map(|p| f(&p))
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// The report plus triangular `delta`, `u_statistic`, `p_value` and
    /// `verdict` (`"H0"` kept / `"H1"` rejected) matrices.
    pub fn to_json(&self) -> serde_json::Value {
        let mut doc = serde_json::to_value(self).expect("report serializes");
        let obj = doc.as_object_mut().expect("report is an object");
        obj.insert(
            "delta".into(),
            serde_json::json!(self.triangle(|p| p.delta)),
        );
        obj.insert(
            "u_statistic".into(),
            serde_json::json!(self.triangle(|p| p.u_statistic)),
        );
        obj.insert(
            "p_value".into(),
            serde_json::json!(self.triangle(|p| p.p_value)),
        );
        obj.insert(
            "verdict".into(),
            serde_json::json!(self.triangle(|p| if p.rejected { "H1" } else { "H0" })),
        );
        doc
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, serde_json::Error> {
        Self::deserialize(value)
    }

    /// Rebuilds a report from its CSV form. Class order is order of first
    /// appearance; bounds, alpha and counts are not part of the CSV and come
    /// back as NaN / 0.
    pub fn from_csv(attribute: &str, source: &str) -> Result<Self, AuditError> {
        let mut classes: Vec<String> = Vec::new();
        let mut pairs = Vec::new();
        for (n, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (n == 0 && line == AUDIT_CSV_HEADER) {
                continue;
            }
            let bad = |reason: String| AuditError::Parse {
                line: n + 1,
                reason,
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", fields.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("bad number {s:?}")))
            };
            for class in &fields[..2] {
                if !classes.iter().any(|c| c == class) {
                    classes.push(class.to_string());
                }
            }
            pairs.push(PairAudit {
                class_a: fields[0].to_string(),
                class_b: fields[1].to_string(),
                count_a: 0,
                count_b: 0,
                delta: num(fields[2])?,
                u_statistic: num(fields[3])?,
                p_value: num(fields[4])?,
                rejected: fields[5]
                    .parse()
                    .map_err(|_| bad(format!("bad flag {:?}", fields[5])))?,
            });
        }
        let observed_range = observed(&pairs);
        Ok(Self {
            attribute: attribute.to_string(),
            classes,
            alpha: f64::NAN,
            range_bound: [f64::NAN; 2],
            tight_bound: [f64::NAN; 2],
            observed_range,
            pairs,
        })
    }
}

fn observed(pairs: &[PairAudit]) -> [f64; 2] {
    pairs
        .iter()
        .fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], p| {
            [lo.min(p.delta), hi.max(p.delta)]
        })
}

/// Disparate reputation and a two-sided Mann-Whitney test for every
/// unordered pair of classes of `attr`.
pub fn mw_pairwise_audit(
    reputations: &ReputationVector,
    attr: &AttributeTable,
    config: &AuditConfig,
) -> Result<DrAuditReport, AuditError> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(AuditError::InvalidAlpha(config.alpha));
    }
    let classes = attr.classes();
    if classes.len() < 2 {
        return Err(AuditError::TooFewClasses {
            attribute: attr.name().to_string(),
            count: classes.len(),
        });
    }
    let samples = class_samples(reputations, attr)?;
    let stats = group_stats(reputations, attr)?;
    let range_bound = config.range_bound();

    let mut pairs = Vec::new();
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            let delta = stats.classes[i].mean - stats.classes[j].mean;
            if delta < range_bound[0] || delta > range_bound[1] {
                return Err(AuditError::OutOfBound {
                    class_a: classes[i].clone(),
                    class_b: classes[j].clone(),
                    delta,
                    low: range_bound[0],
                    high: range_bound[1],
                });
            }
            let mw = mann_whitney_u_with(&samples[i], &samples[j], config.method)?;
            pairs.push(PairAudit {
                class_a: classes[i].clone(),
                class_b: classes[j].clone(),
                count_a: samples[i].len(),
                count_b: samples[j].len(),
                delta,
                u_statistic: mw.u_statistic,
                p_value: mw.p_value,
                rejected: mw.p_value < config.alpha,
            });
        }
    }
    Ok(DrAuditReport {
        attribute: attr.name().to_string(),
        classes: classes.to_vec(),
        alpha: config.alpha,
        range_bound,
        tight_bound: config.tight_bound(),
        observed_range: observed(&pairs),
        pairs,
    })
}

/// Output of [`harmonize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonized {
    pub reputations: ReputationVector,
    pub rankings: RankingVector,
    /// Common class mean after the transform (smallest class mean before it).
    pub target_mean: f64,
    /// Common class standard deviation (smallest before).
    pub target_std: f64,
    /// Set when some class had zero spread: every reputation collapsed to `target_mean`.
    pub degenerate: bool,
}

/// Maps every class onto the smallest class mean and the smallest class
/// standard deviation with a per-class affine transform, then recomputes
/// rankings as reputation-normalized weighted means.
pub fn harmonize(
    reputations: &ReputationVector,
    attr: &AttributeTable,
    matrix: &RatingsMatrix,
) -> Result<Harmonized, AuditError> {
    if reputations.users() != matrix.user_ids() {
        return Err(AuditError::UserMismatch);
    }
    let indices = class_indices(reputations, attr)?;
    let stats = group_stats(reputations, attr)?;
    let target_mean = stats.min_mean();
    let target_std = stats.min_std();
    let degenerate = target_std == 0.0;

    let scales: Vec<f64> = stats
        .classes
        .iter()
        .map(|c| if degenerate { 0.0 } else { target_std / c.std })
        .collect();

    let mut values = Vec::with_capacity(reputations.len());
    for ((&user, &value), &class) in reputations
        .users()
        .iter()
        .zip(reputations.values())
        .zip(&indices)
    {
        let adjusted = target_mean + (value - stats.classes[class].mean) * scales[class];
        if !(adjusted > 0.0 && adjusted <= 1.0) {
            return Err(AuditError::HarmonizedOutOfRange {
                user,
                value: adjusted,
            });
        }
        values.push(adjusted);
    }

    let rankings = reputation::weighted_ranking(matrix, &values)?;
    Ok(Harmonized {
        reputations: reputations.with_values(values),
        rankings,
        target_mean,
        target_std,
        degenerate,
    })
}
