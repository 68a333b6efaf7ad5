//! Rating and demographic data: the sparse normalized ratings matrix and the
//! per-attribute partitions of users into classes.
//!
//! Two input layouts are understood. The MovieLens `.dat` layout
//! (`UserID::MovieID::Rating::Timestamp` and
//! `UserID::Gender::Age::Occupation::Zip-code`) and a header-less canonical
//! CSV (`user_id,item_id,raw_rating` for ratings, `user_id,attribute,class`
//! for attributes).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{}rating {raw} outside the allowed scale [1, {max}]", at_line(*.line))]
    Range {
        line: Option<usize>,
        raw: i64,
        max: u32,
    },
    #[error("{}duplicate rating for user {user}, item {item}", at_line(*.line))]
    Duplicate {
        line: Option<usize>,
        user: UserId,
        item: ItemId,
    },
    #[error("line {line}: age code {code} has no bracket in the age map")]
    UnknownAgeCode { line: usize, code: u32 },
    #[error("rating scale maximum must be at least 2, got {0}")]
    InvalidScale(u32),
    #[error("{kind} id {id} is not declared in the matrix")]
    Bounds { kind: &'static str, id: u32 },
    #[error("attribute {attribute:?}: class {class:?} is not declared")]
    UnknownClass { attribute: String, class: String },
    #[error("attribute {attribute:?}: user {user} is assigned to both {first:?} and {second:?}")]
    ConflictingAssignment {
        attribute: String,
        user: UserId,
        first: String,
        second: String,
    },
    #[error("attribute {attribute:?}: user {user} has ratings but no class assignment")]
    MissingAssignment { attribute: String, user: UserId },
}

fn at_line(line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}

/// Integer rating scale `1..=max`, normalized by dividing by `max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingScale {
    max: u32,
}

impl RatingScale {
    pub fn new(max: u32) -> Result<Self, DatasetError> {
        if max < 2 {
            return Err(DatasetError::InvalidScale(max));
        }
        Ok(Self { max })
    }

    /// The MovieLens 1..5 star scale.
    pub fn five_star() -> Self {
        Self { max: 5 }
    }

    pub fn max(&self) -> u32 {
        self.max
    }

    pub fn normalize(&self, raw: i64) -> Result<f64, DatasetError> {
        if raw < 1 || raw > i64::from(self.max) {
            return Err(DatasetError::Range {
                line: None,
                raw,
                max: self.max,
            });
        }
        Ok(raw as f64 / f64::from(self.max))
    }

    /// Width of the normalized rating range, `(max - 1) / max`.
    pub fn delta_r(&self) -> f64 {
        f64::from(self.max - 1) / f64::from(self.max)
    }

    /// Smallest normalized rating, `1 / max`.
    pub fn min_normalized(&self) -> f64 {
        1.0 / f64::from(self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub user: UserId,
    pub item: ItemId,
    pub raw: u32,
    pub value: f64,
}

/// Collects declared ids and ratings, then freezes them into a [`RatingsMatrix`].
#[derive(Debug, Clone)]
pub struct MatrixBuilder {
    scale: RatingScale,
    users: BTreeSet<UserId>,
    items: BTreeSet<ItemId>,
    ratings: BTreeMap<(UserId, ItemId), u32>,
}

impl MatrixBuilder {
    pub fn new(scale: RatingScale) -> Self {
        Self {
            scale,
            users: BTreeSet::new(),
            items: BTreeSet::new(),
            ratings: BTreeMap::new(),
        }
    }

    /// Declares a user that may have no ratings.
    pub fn declare_user(&mut self, user: UserId) -> &mut Self {
        self.users.insert(user);
        self
    }

    /// Declares an item that may have no ratings.
    pub fn declare_item(&mut self, item: ItemId) -> &mut Self {
        self.items.insert(item);
        self
    }

    pub fn add(&mut self, user: UserId, item: ItemId, raw: i64) -> Result<&mut Self, DatasetError> {
        self.scale.normalize(raw)?;
        if self.ratings.contains_key(&(user, item)) {
            return Err(DatasetError::Duplicate {
                line: None,
                user,
                item,
            });
        }
        self.ratings.insert((user, item), raw as u32);
        self.users.insert(user);
        self.items.insert(item);
        Ok(self)
    }

    pub fn build(self) -> RatingsMatrix {
        let users: Vec<UserId> = self.users.into_iter().collect();
        let items: Vec<ItemId> = self.items.into_iter().collect();
        let user_index: BTreeMap<UserId, u32> = users
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, i as u32))
            .collect();
        let item_index: BTreeMap<ItemId, u32> = items
            .iter()
            .enumerate()
            .map(|(i, &it)| (it, i as u32))
            .collect();

        let nnz = self.ratings.len();
        let mut user_offsets = vec![0usize; users.len() + 1];
        let mut item_counts = vec![0usize; items.len()];
        let mut by_user_items = Vec::with_capacity(nnz);
        let mut by_user_values = Vec::with_capacity(nnz);
        let mut by_user_raw = Vec::with_capacity(nnz);

        // BTreeMap iteration is (user, item) ascending, so the user-major
        // layout comes out already sorted.
        for (&(user, item), &raw) in &self.ratings {
            let u = user_index[&user] as usize;
            let i = item_index[&item];
            user_offsets[u + 1] += 1;
            item_counts[i as usize] += 1;
            by_user_items.push(i);
            by_user_values.push(f64::from(raw) / f64::from(self.scale.max));
            by_user_raw.push(raw);
        }
        for u in 0..users.len() {
            user_offsets[u + 1] += user_offsets[u];
        }

        let mut item_offsets = vec![0usize; items.len() + 1];
        for i in 0..items.len() {
            item_offsets[i + 1] = item_offsets[i] + item_counts[i];
        }
        let mut cursor = item_offsets.clone();
        let mut by_item_users = vec![0u32; nnz];
        let mut by_item_values = vec![0f64; nnz];
        // Walking users in ascending order keeps each item's rater list sorted.
        for u in 0..users.len() {
            for k in user_offsets[u]..user_offsets[u + 1] {
                let i = by_user_items[k] as usize;
                by_item_users[cursor[i]] = u as u32;
                by_item_values[cursor[i]] = by_user_values[k];
                cursor[i] += 1;
            }
        }

        RatingsMatrix {
            scale: self.scale,
            users,
            items,
            user_offsets,
            by_user_items,
            by_user_values,
            by_user_raw,
            item_offsets,
            by_item_users,
            by_item_values,
        }
    }
}

/// Sparse matrix of normalized ratings in `]0, 1]`.
///
/// Users and items are held in ascending id order and addressed internally by
/// their position in that order (the "index"). Both a user-major and an
/// item-major view are stored so that the ranking pass (over items) and the
/// reputation pass (over users) each read contiguous memory in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    scale: RatingScale,
    users: Vec<UserId>,
    items: Vec<ItemId>,
    user_offsets: Vec<usize>,
    by_user_items: Vec<u32>,
    by_user_values: Vec<f64>,
    by_user_raw: Vec<u32>,
    item_offsets: Vec<usize>,
    by_item_users: Vec<u32>,
    by_item_values: Vec<f64>,
}

impl RatingsMatrix {
    pub fn builder(scale: RatingScale) -> MatrixBuilder {
        MatrixBuilder::new(scale)
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn delta_r(&self) -> f64 {
        self.scale.delta_r()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn nnz(&self) -> usize {
        self.by_user_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nnz() == 0
    }

    pub fn user_ids(&self) -> &[UserId] {
        &self.users
    }

    pub fn item_ids(&self) -> &[ItemId] {
        &self.items
    }

    pub fn user_index(&self, user: UserId) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }

    pub fn item_index(&self, item: ItemId) -> Option<usize> {
        self.items.binary_search(&item).ok()
    }

    /// Item indices and normalized ratings of the user at `user_idx`, ascending by item.
    pub fn user_row(&self, user_idx: usize) -> (&[u32], &[f64]) {
        let span = self.user_offsets[user_idx]..self.user_offsets[user_idx + 1];
        (
            &self.by_user_items[span.clone()],
            &self.by_user_values[span],
        )
    }

    /// User indices and normalized ratings for the item at `item_idx`, ascending by user.
    pub fn item_column(&self, item_idx: usize) -> (&[u32], &[f64]) {
        let span = self.item_offsets[item_idx]..self.item_offsets[item_idx + 1];
        (
            &self.by_item_users[span.clone()],
            &self.by_item_values[span],
        )
    }

    pub fn user_degree(&self, user_idx: usize) -> usize {
        self.user_offsets[user_idx + 1] - self.user_offsets[user_idx]
    }

    pub fn item_degree(&self, item_idx: usize) -> usize {
        self.item_offsets[item_idx + 1] - self.item_offsets[item_idx]
    }

    pub fn users_of_item(&self, item: ItemId) -> Result<Vec<UserId>, DatasetError> {
        let idx = self.item_index(item).ok_or(DatasetError::Bounds {
            kind: "item",
            id: item.0,
        })?;
        let (users, _) = self.item_column(idx);
        Ok(users.iter().map(|&u| self.users[u as usize]).collect())
    }

    pub fn items_of_user(&self, user: UserId) -> Result<Vec<ItemId>, DatasetError> {
        let idx = self.user_index(user).ok_or(DatasetError::Bounds {
            kind: "user",
            id: user.0,
        })?;
        let (items, _) = self.user_row(idx);
        Ok(items.iter().map(|&i| self.items[i as usize]).collect())
    }

    /// All stored ratings in (user, item) ascending order.
    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        (0..self.users.len()).flat_map(move |u| {
            let span = self.user_offsets[u]..self.user_offsets[u + 1];
            span.map(move |k| Entry {
                user: self.users[u],
                item: self.items[self.by_user_items[k] as usize],
                raw: self.by_user_raw[k],
                value: self.by_user_values[k],
            })
        })
    }

    /// Canonical header-less `user_id,item_id,raw_rating` text.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.nnz() * 16);
        for e in self.entries() {
            out.push_str(&format!("{},{},{}\n", e.user, e.item, e.raw));
        }
        out
    }
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    what: &str,
    line: usize,
) -> Result<T, DatasetError> {
    field.trim().parse().map_err(|_| DatasetError::Parse {
        line,
        reason: format!("{what} {field:?} is not an integer"),
    })
}

fn with_line(err: DatasetError, line: usize) -> DatasetError {
    match err {
        DatasetError::Range { raw, max, .. } => DatasetError::Range {
            line: Some(line),
            raw,
            max,
        },
        DatasetError::Duplicate { user, item, .. } => DatasetError::Duplicate {
            line: Some(line),
            user,
            item,
        },
        other => other,
    }
}

fn parse_rating_lines<'a>(
    lines: impl Iterator<Item = (usize, Vec<&'a str>)>,
    scale: RatingScale,
    expected_fields: usize,
) -> Result<RatingsMatrix, DatasetError> {
    let mut builder = MatrixBuilder::new(scale);
    for (line, fields) in lines {
        if fields.len() != expected_fields {
            return Err(DatasetError::Parse {
                line,
                reason: format!("expected {expected_fields} fields, found {}", fields.len()),
            });
        }
        let user: u32 = parse_field(fields[0], "user id", line)?;
        let item: u32 = parse_field(fields[1], "item id", line)?;
        let raw: i64 = parse_field(fields[2], "rating", line)?;
        builder
            .add(UserId(user), ItemId(item), raw)
            .map_err(|e| with_line(e, line))?;
    }
    Ok(builder.build())
}

fn content_lines(source: &str) -> impl Iterator<Item = (usize, &str)> {
    source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses MovieLens `UserID::MovieID::Rating::Timestamp` lines.
pub fn parse_ratings(source: &str, scale_max: u32) -> Result<RatingsMatrix, DatasetError> {
    let scale = RatingScale::new(scale_max)?;
    parse_rating_lines(
        content_lines(source).map(|(n, l)| (n, l.split("::").collect())),
        scale,
        4,
    )
}

/// Parses canonical `user_id,item_id,raw_rating` lines.
pub fn parse_ratings_csv(source: &str, scale_max: u32) -> Result<RatingsMatrix, DatasetError> {
    let scale = RatingScale::new(scale_max)?;
    parse_rating_lines(
        content_lines(source).map(|(n, l)| (n, l.split(',').collect())),
        scale,
        3,
    )
}

/// A partition of users into disjoint classes for one attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeTable {
    name: String,
    classes: Vec<String>,
    assignment: BTreeMap<UserId, usize>,
}

impl AttributeTable {
    pub fn new(name: impl Into<String>, classes: Vec<String>) -> Self {
        Self {
            name: name.into(),
            classes,
            assignment: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// Assigns `user` to `class`. Reassigning to the same class is a no-op;
    /// reassigning to a different class breaks disjointness and is rejected.
    pub fn assign(&mut self, user: UserId, class: &str) -> Result<(), DatasetError> {
        let idx = self
            .class_index(class)
            .ok_or_else(|| DatasetError::UnknownClass {
                attribute: self.name.clone(),
                class: class.to_string(),
            })?;
        match self.assignment.get(&user) {
            Some(&prev) if prev != idx => Err(DatasetError::ConflictingAssignment {
                attribute: self.name.clone(),
                user,
                first: self.classes[prev].clone(),
                second: class.to_string(),
            }),
            _ => {
                self.assignment.insert(user, idx);
                Ok(())
            }
        }
    }

    pub fn class_of(&self, user: UserId) -> Option<&str> {
        self.assignment
            .get(&user)
            .map(|&i| self.classes[i].as_str())
    }

    pub fn class_index_of(&self, user: UserId) -> Option<usize> {
        self.assignment.get(&user).copied()
    }

    /// Members of `class` in ascending id order.
    pub fn members(&self, class: &str) -> Vec<UserId> {
        match self.class_index(class) {
            Some(idx) => self
                .assignment
                .iter()
                .filter(|(_, &c)| c == idx)
                .map(|(&u, _)| u)
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn assignments(&self) -> impl Iterator<Item = (UserId, &str)> + '_ {
        self.assignment
            .iter()
            .map(|(&u, &c)| (u, self.classes[c].as_str()))
    }

    /// Fails on the first rated user of `matrix` that has no class.
    pub fn check_covers(&self, matrix: &RatingsMatrix) -> Result<(), DatasetError> {
        for &user in matrix.user_ids() {
            if !self.assignment.contains_key(&user) {
                return Err(DatasetError::MissingAssignment {
                    attribute: self.name.clone(),
                    user,
                });
            }
        }
        Ok(())
    }

    /// Canonical header-less `user_id,attribute,class` text.
    pub fn to_csv(&self) -> String {
        self.assignments()
            .map(|(u, c)| format!("{u},{},{c}\n", self.name))
            .collect()
    }
}

/// Parses `user_id,attribute,class` lines into one table per attribute,
/// in order of first appearance. Classes are ordered by first appearance too.
pub fn parse_attributes_csv(source: &str) -> Result<Vec<AttributeTable>, DatasetError> {
    let mut tables: Vec<AttributeTable> = Vec::new();
    for (line, text) in content_lines(source) {
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(DatasetError::Parse {
                line,
                reason: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let user = UserId(parse_field(fields[0], "user id", line)?);
        let pos = match tables.iter().position(|t| t.name == fields[1]) {
            Some(p) => p,
            None => {
                tables.push(AttributeTable::new(fields[1], Vec::new()));
                tables.len() - 1
            }
        };
        let table = &mut tables[pos];
        if table.class_index(fields[2]).is_none() {
            table.classes.push(fields[2].to_string());
        }
        table.assign(user, fields[2]).map_err(|e| match e {
            DatasetError::ConflictingAssignment { .. } => DatasetError::Parse {
                line,
                reason: e.to_string(),
            },
            other => other,
        })?;
    }
    Ok(tables)
}

/// Maps MovieLens age codes to bracket labels, in class order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBrackets {
    codes: Vec<(u32, String)>,
}

impl AgeBrackets {
    pub fn new(codes: Vec<(u32, String)>) -> Self {
        Self { codes }
    }

    /// The MovieLens-1M encoding: 1, 18, 25, 35, 45, 50, 56.
    pub fn movielens() -> Self {
        let pairs = [
            (1, "<18"),
            (18, "18-24"),
            (25, "25-34"),
            (35, "35-44"),
            (45, "45-49"),
            (50, "50-55"),
            (56, ">55"),
        ];
        Self {
            codes: pairs.iter().map(|&(c, l)| (c, l.to_string())).collect(),
        }
    }

    pub fn label(&self, code: u32) -> Option<&str> {
        self.codes
            .iter()
            .find(|(c, _)| *c == code)
            .map(|(_, l)| l.as_str())
    }

    pub fn labels(&self) -> Vec<String> {
        self.codes.iter().map(|(_, l)| l.clone()).collect()
    }
}

impl Default for AgeBrackets {
    fn default() -> Self {
        Self::movielens()
    }
}

/// Parses MovieLens `UserID::Gender::Age::Occupation::Zip-code` lines into
/// a `gender` and an `age` table.
pub fn parse_users(
    source: &str,
    ages: &AgeBrackets,
) -> Result<(AttributeTable, AttributeTable), DatasetError> {
    let mut rows: Vec<(UserId, String, String)> = Vec::new();
    for (line, text) in content_lines(source) {
        let fields: Vec<&str> = text.split("::").collect();
        if fields.len() != 5 {
            return Err(DatasetError::Parse {
                line,
                reason: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let user = UserId(parse_field(fields[0], "user id", line)?);
        let gender = fields[1].trim();
        if gender.is_empty() {
            return Err(DatasetError::Parse {
                line,
                reason: "empty gender token".into(),
            });
        }
        let code: u32 = parse_field(fields[2], "age code", line)?;
        let bracket = ages
            .label(code)
            .ok_or(DatasetError::UnknownAgeCode { line, code })?;
        rows.push((user, gender.to_string(), bracket.to_string()));
    }

    let genders: BTreeSet<&str> = rows.iter().map(|(_, g, _)| g.as_str()).collect();
    let mut gender = AttributeTable::new("gender", genders.into_iter().map(String::from).collect());
    let mut age = AttributeTable::new("age", ages.labels());
    for (user, g, a) in &rows {
        gender.assign(*user, g)?;
        age.assign(*user, a)?;
    }
    Ok((gender, age))
}
