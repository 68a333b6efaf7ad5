//! Iterative reputation-based ranking.
//!
//! Each iteration first scores every rated item as a reputation-weighted mean
//! of its ratings, then sets every user's reputation to
//! `1 - lambda * mean_i |R_ui - r_i|` over the items the user rated.
//! Two ranking rules are supported:
//!
//! * [`Variant::Li`]: the weighted sum divided by the number of raters
//!   (L1-AVG). An item rated 1.0 by everyone scores below 1.0 as soon as one
//!   rater has reputation below 1.
//! * [`Variant::Normalized`]: the weighted sum divided by the sum of the
//!   raters' reputations.
//!
//! All sums run in ascending user index for items and ascending item index
//! for users, so results are bit-reproducible.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ItemId, RatingsMatrix, UserId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("ratings matrix is empty")]
    EmptyMatrix,
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
    #[error("reputation vector has {got} entries, matrix has {expected} users")]
    LengthMismatch { expected: usize, got: usize },
    #[error("reputation of user {user} is {value}, outside ]0, 1]")]
    OutOfRange { user: UserId, value: f64 },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Weighted sum over the number of raters.
    Li,
    /// Weighted sum over the sum of the raters' reputations.
    Normalized,
}

impl std::str::FromStr for Variant {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "li" => Ok(Variant::Li),
            "normalized" => Ok(Variant::Normalized),
            other => Err(EngineError::InvalidConfig(format!(
                "unknown variant {other:?} (expected li or normalized)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub lambda: f64,
    pub initial_reputation: f64,
    /// Sup-norm threshold on the change of the reputation vector.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub variant: Variant,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            initial_reputation: 1.0,
            tolerance: 1e-8,
            max_iterations: 200,
            variant: Variant::Normalized,
        }
    }
}

impl EngineConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(EngineError::InvalidConfig(format!(
                "lambda must lie in ]0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.initial_reputation > 0.0 && self.initial_reputation <= 1.0) {
            return Err(EngineError::InvalidConfig(format!(
                "initial reputation must lie in ]0, 1], got {}",
                self.initial_reputation
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(EngineError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(EngineError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Scores of the rated items, ascending by item id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingVector {
    items: Vec<ItemId>,
    scores: Vec<f64>,
}

impl RankingVector {
    pub fn new(items: Vec<ItemId>, scores: Vec<f64>) -> Self {
        assert_eq!(items.len(), scores.len());
        Self { items, scores }
    }

    /// Builds from a dense per-item-index score vector, skipping unrated items.
    fn from_dense(matrix: &RatingsMatrix, dense: &[f64]) -> Self {
        let mut items = Vec::with_capacity(dense.len());
        let mut scores = Vec::with_capacity(dense.len());
        for (i, &s) in dense.iter().enumerate() {
            if matrix.item_degree(i) > 0 {
                items.push(matrix.item_ids()[i]);
                scores.push(s);
            }
        }
        Self { items, scores }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn get(&self, item: ItemId) -> Option<f64> {
        self.items.binary_search(&item).ok().map(|k| self.scores[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, f64)> + '_ {
        self.items.iter().copied().zip(self.scores.iter().copied())
    }

    /// `item_id,score` with a header row and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("item_id,score\n");
        for (item, score) in self.iter() {
            let _ = writeln!(out, "{item},{}", format_full(score));
        }
        out
    }

    pub fn from_csv(source: &str) -> Result<Self, EngineError> {
        let rows = parse_id_value_csv(source, "item_id,score")?;
        let (items, scores) = rows.into_iter().map(|(id, v)| (ItemId(id), v)).unzip();
        Ok(Self { items, scores })
    }
}

/// Per-user reputations, ascending by user id, plus how the iteration ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationVector {
    users: Vec<UserId>,
    values: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub final_delta: f64,
    /// Sup-norm change of the reputation vector at each iteration.
    pub trajectory: Vec<f64>,
    /// Users without ratings; they keep their initial reputation.
    pub unrated: Vec<UserId>,
}

impl ReputationVector {
    /// A bare vector with no iteration history, e.g. one read back from disk.
    pub fn from_values(users: Vec<UserId>, values: Vec<f64>) -> Self {
        assert_eq!(users.len(), values.len());
        Self {
            users,
            values,
            iterations_run: 0,
            converged: true,
            final_delta: 0.0,
            trajectory: Vec::new(),
            unrated: Vec::new(),
        }
    }

    /// Same users and metadata, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.users.len());
        Self {
            values,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, user: UserId) -> Option<f64> {
        self.users.binary_search(&user).ok().map(|k| self.values[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, f64)> + '_ {
        self.users.iter().copied().zip(self.values.iter().copied())
    }

    /// `user_id,reputation` with a header row and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_id,reputation\n");
        for (user, value) in self.iter() {
            let _ = writeln!(out, "{user},{}", format_full(value));
        }
        out
    }

    pub fn from_csv(source: &str) -> Result<Self, EngineError> {
        let rows = parse_id_value_csv(source, "user_id,reputation")?;
        let (users, values) = rows.into_iter().map(|(id, v)| (UserId(id), v)).unzip();
        Ok(Self::from_values(users, values))
    }
}

/// Scientific notation with 17 significant digits; round-trips any `f64`.
pub fn format_full(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_id_value_csv(source: &str, header: &str) -> Result<Vec<(u32, f64)>, EngineError> {
    let mut rows = Vec::new();
    let mut last: Option<u32> = None;
    for (n, line) in source.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line == header) {
            continue;
        }
        let bad = |reason: String| EngineError::Parse {
            line: n + 1,
            reason,
        };
        let (id, value) = line
            .split_once(',')
            .ok_or_else(|| bad(format!("expected 2 fields in {line:?}")))?;
        let id: u32 = id
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad id {id:?}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad value {value:?}")))?;
        if last.is_some_and(|prev| prev >= id) {
            return Err(bad(format!(
                "ids must be strictly ascending, {id} follows {}",
                last.unwrap()
            )));
        }
        last = Some(id);
        rows.push((id, value));
    }
    Ok(rows)
}

/// Output of one ranking-then-reputation update.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub rankings: RankingVector,
    pub reputations: Vec<f64>,
}

/// Output of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct EngineOutput {
    pub rankings: RankingVector,
    pub reputations: ReputationVector,
}

/// Unweighted per-item mean rating.
pub fn aa_ranking(matrix: &RatingsMatrix) -> Result<RankingVector, EngineError> {
    if matrix.is_empty() {
        return Err(EngineError::EmptyMatrix);
    }
    let dense: Vec<f64> = (0..matrix.n_items())
        .map(|i| {
            let (_, values) = matrix.item_column(i);
            values.iter().sum::<f64>() / values.len() as f64
        })
        .collect();
    Ok(RankingVector::from_dense(matrix, &dense))
}

/// Reputation-weighted mean with the weights' sum as denominator, over raters only.
pub fn weighted_ranking(
    matrix: &RatingsMatrix,
    reputations: &[f64],
) -> Result<RankingVector, EngineError> {
    check_reputations(matrix, reputations)?;
    let dense = rank_pass(matrix, reputations, Variant::Normalized);
    Ok(RankingVector::from_dense(matrix, &dense))
}

fn check_reputations(matrix: &RatingsMatrix, reputations: &[f64]) -> Result<(), EngineError> {
    if matrix.is_empty() {
        return Err(EngineError::EmptyMatrix);
    }
    if reputations.len() != matrix.n_users() {
        return Err(EngineError::LengthMismatch {
            expected: matrix.n_users(),
            got: reputations.len(),
        });
    }
    for (u, &c) in reputations.iter().enumerate() {
        if !(c > 0.0 && c <= 1.0) {
            return Err(EngineError::OutOfRange {
                user: matrix.user_ids()[u],
                value: c,
            });
        }
    }
    Ok(())
}

/// Dense item scores; unrated items hold NaN and are never read.
fn rank_pass(matrix: &RatingsMatrix, reputations: &[f64], variant: Variant) -> Vec<f64> {
    (0..matrix.n_items())
        .map(|i| {
            let (users, values) = matrix.item_column(i);
            if users.is_empty() {
                return f64::NAN;
            }
            let mut weighted = 0.0;
            let mut weights = 0.0;
            for (&u, &r) in users.iter().zip(values) {
                let c = reputations[u as usize];
                weighted += r * c;
                weights += c;
            }
            match variant {
                Variant::Li => weighted / users.len() as f64,
                Variant::Normalized => weighted / weights,
            }
        })
        .collect()
}

fn reputation_pass(
    matrix: &RatingsMatrix,
    scores: &[f64],
    lambda: f64,
    previous: &[f64],
) -> Vec<f64> {
    (0..matrix.n_users())
        .map(|u| {
            let (items, values) = matrix.user_row(u);
            if items.is_empty() {
                return previous[u];
            }
            let disagreement: f64 = items
                .iter()
                .zip(values)
                .map(|(&i, &r)| (r - scores[i as usize]).abs())
                .sum();
            1.0 - lambda / items.len() as f64 * disagreement
        })
        .collect()
}

fn step(
    matrix: &RatingsMatrix,
    previous: &[f64],
    config: &EngineConfig,
    variant: Variant,
) -> Result<(Vec<f64>, Vec<f64>), EngineError> {
    config.validate()?;
    check_reputations(matrix, previous)?;
    let scores = rank_pass(matrix, previous, variant);
    let next = reputation_pass(matrix, &scores, config.lambda, previous);
    check_reputations(matrix, &next)?;
    Ok((scores, next))
}

/// One L1-AVG update from `previous` (indexed like `matrix.user_ids()`).
pub fn step_li(
    matrix: &RatingsMatrix,
    previous: &[f64],
    config: &EngineConfig,
) -> Result<Step, EngineError> {
    let (scores, reputations) = step(matrix, previous, config, Variant::Li)?;
    Ok(Step {
        rankings: RankingVector::from_dense(matrix, &scores),
        reputations,
    })
}

/// One weight-normalized update from `previous`.
pub fn step_normalized(
    matrix: &RatingsMatrix,
    previous: &[f64],
    config: &EngineConfig,
) -> Result<Step, EngineError> {
    let (scores, reputations) = step(matrix, previous, config, Variant::Normalized)?;
    Ok(Step {
        rankings: RankingVector::from_dense(matrix, &scores),
        reputations,
    })
}

/// Iterates `config.variant` from the initial reputation until the sup-norm
/// change drops below the tolerance or the iteration cap is hit. A run that
/// hits the cap is still returned, with `converged == false`.
pub fn run(matrix: &RatingsMatrix, config: &EngineConfig) -> Result<EngineOutput, EngineError> {
    config.validate()?;
    if matrix.is_empty() {
        return Err(EngineError::EmptyMatrix);
    }
    let mut reputations = vec![config.initial_reputation; matrix.n_users()];
    let mut scores = Vec::new();
    let mut trajectory = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iterations {
        let (next_scores, next) = step(matrix, &reputations, config, config.variant)?;
        let delta = reputations
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        trajectory.push(delta);
        reputations = next;
        scores = next_scores;
        if delta < config.tolerance {
            converged = true;
            break;
        }
    }

    let unrated = (0..matrix.n_users())
        .filter(|&u| matrix.user_degree(u) == 0)
        .map(|u| matrix.user_ids()[u])
        .collect();
    Ok(EngineOutput {
        rankings: RankingVector::from_dense(matrix, &scores),
        reputations: ReputationVector {
            users: matrix.user_ids().to_vec(),
            values: reputations,
            iterations_run: trajectory.len(),
            converged,
            final_delta: trajectory.last().copied().unwrap_or(0.0),
            trajectory,
            unrated,
        },
    })
}
