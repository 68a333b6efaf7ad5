#![allow(dead_code)]

pub mod invariants;
pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repute::dataset::{AttributeTable, ItemId, RatingScale, RatingsMatrix, UserId};

/// Raw ratings as `(user, item, raw)` triples.
pub type Triples = Vec<(u32, u32, i64)>;

pub fn build(triples: &[(u32, u32, i64)]) -> RatingsMatrix {
    let mut b = RatingsMatrix::builder(RatingScale::five_star());
    for &(u, i, r) in triples {
        b.add(UserId(u), ItemId(i), r).unwrap();
    }
    b.build()
}

/// Random sparse instance: every user and item gets at least one rating.
pub fn random_triples(rng: &mut ChaCha8Rng, users: u32, items: u32, density: f64) -> Triples {
    let mut out = Vec::new();
    for u in 1..=users {
        for i in 1..=items {
            if rng.random_bool(density) {
                out.push((u, i, rng.random_range(1..=5)));
            }
        }
    }
    for u in 1..=users {
        if !out.iter().any(|t| t.0 == u) {
            out.push((u, rng.random_range(1..=items), rng.random_range(1..=5)));
        }
    }
    for i in 1..=items {
        if !out.iter().any(|t| t.1 == i) {
            out.push((rng.random_range(1..=users), i, rng.random_range(1..=5)));
        }
    }
    out.sort_unstable();
    out.dedup_by_key(|t| (t.0, t.1));
    out
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Splits the matrix users round-robin-ish into `classes` classes using `labels[k]`.
pub fn attribute(matrix: &RatingsMatrix, labels: &[usize], classes: usize) -> AttributeTable {
    let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
    let mut table = AttributeTable::new("attr", names.clone());
    for (k, &user) in matrix.user_ids().iter().enumerate() {
        table
            .assign(user, &names[labels[k % labels.len()] % classes])
            .unwrap();
    }
    table
}
