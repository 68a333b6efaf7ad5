//! Randomized invariant checks, shared by the property tests and the
//! acceptance summary. Each check runs `cases` deterministic proptest cases
//! and reports the first failure as a string.

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use repute::dataset::{AttributeTable, RatingsMatrix, UserId};
use repute::independence::{self, AuditConfig};
use repute::reputation::{self, EngineConfig, ReputationVector, Variant};
use repute::stats::{self, MwMethod, StatsError, TauVariant};

use super::{build, oracle::Dense, random_triples, seeded, Triples};

pub const CASES: u32 = 1000;

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

/// Up to 7 users and 5 items; 0 marks a missing rating.
fn triples() -> impl Strategy<Value = Triples> {
    (1..=7u32, 1..=5u32).prop_flat_map(|(n, m)| {
        vec(0..=5i64, (n * m) as usize).prop_map(move |cells| {
            let mut out: Triples = cells
                .iter()
                .enumerate()
                .filter(|(_, &r)| r > 0)
                .map(|(k, &r)| (k as u32 / m + 1, k as u32 % m + 1, r))
                .collect();
            if out.is_empty() {
                out.push((1, 1, 3));
            }
            out
        })
    })
}

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Li), Just(Variant::Normalized)]
}

/// First `classes` users get distinct classes so none is empty; the rest follow `labels`.
fn labelled(users: &[UserId], labels: &[usize], classes: usize) -> AttributeTable {
    let classes = classes.min(users.len()).max(1);
    let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
    let mut table = AttributeTable::new("attr", names.clone());
    for (k, &u) in users.iter().enumerate() {
        let class = if k < classes {
            k
        } else {
            labels[k % labels.len()] % classes
        };
        table.assign(u, &names[class]).unwrap();
    }
    table
}

pub fn first_iterate_equals_aa(cases: u32) -> Result<(), String> {
    check(
        cases,
        (triples(), 0.01..=1.0f64, variant()),
        |(t, lambda, v)| {
            let m = build(&t);
            let config = EngineConfig::default().with_lambda(lambda).with_variant(v);
            let ones = vec![1.0; m.n_users()];
            let step = match v {
                Variant::Li => reputation::step_li(&m, &ones, &config),
                Variant::Normalized => reputation::step_normalized(&m, &ones, &config),
            }
            .unwrap();
            let aa = reputation::aa_ranking(&m).unwrap();
            prop_assert_eq!(step.rankings.items(), aa.items());
            for (x, y) in step.rankings.scores().iter().zip(aa.scores()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            Ok(())
        },
    )
}

/// Normalized: `[1 - lambda * delta_r, 1]`. Li: rankings are not convex
/// combinations of ratings, so the floor is the fixed point of
/// `c = 1 - lambda (1 - min_rating * c)`.
pub fn reputation_bounds(cases: u32) -> Result<(), String> {
    check(
        cases,
        (triples(), 0.01..=1.0f64, variant()),
        |(t, lambda, v)| {
            let m = build(&t);
            let config = EngineConfig::default().with_lambda(lambda).with_variant(v);
            let min = m.scale().min_normalized();
            let floor = match v {
                Variant::Normalized => 1.0 - lambda * m.delta_r(),
                Variant::Li => (1.0 - lambda) / (1.0 - lambda * min),
            } - 1e-12;
            let mut c = vec![1.0; m.n_users()];
            for _ in 0..40 {
                let step = match v {
                    Variant::Li => reputation::step_li(&m, &c, &config),
                    Variant::Normalized => reputation::step_normalized(&m, &c, &config),
                }
                .unwrap();
                for &x in &step.reputations {
                    prop_assert!(
                        x >= floor && x <= 1.0,
                        "reputation {} outside [{}, 1]",
                        x,
                        floor
                    );
                }
                c = step.reputations;
            }
            Ok(())
        },
    )
}

fn harmonize_case() -> impl Strategy<Value = (Triples, f64, Vec<usize>, usize)> {
    (triples(), 0.05..=1.0f64, vec(0..7usize, 1..=7), 1..=4usize)
}

pub fn harmonization_idempotence(cases: u32) -> Result<(), String> {
    check(cases, harmonize_case(), |(t, lambda, labels, classes)| {
        let m = build(&t);
        let out = reputation::run(&m, &EngineConfig::default().with_lambda(lambda)).unwrap();
        let attr = labelled(m.user_ids(), &labels, classes);
        let once = independence::harmonize(&out.reputations, &attr, &m).unwrap();
        let twice = independence::harmonize(&once.reputations, &attr, &m).unwrap();
        for (a, b) in once
            .reputations
            .values()
            .iter()
            .zip(twice.reputations.values())
        {
            prop_assert!((a - b).abs() <= 1e-12, "reputation moved {} -> {}", a, b);
        }
        for (a, b) in once.rankings.scores().iter().zip(twice.rankings.scores()) {
            prop_assert!((a - b).abs() <= 1e-12, "ranking moved {} -> {}", a, b);
        }
        let post = independence::group_stats(&once.reputations, &attr).unwrap();
        for c in &post.classes {
            prop_assert!((c.mean - once.target_mean).abs() <= 1e-12);
            prop_assert!((c.std - once.target_std).abs() <= 1e-12);
        }
        Ok(())
    })
}

pub fn within_class_order(cases: u32) -> Result<(), String> {
    check(cases, harmonize_case(), |(t, lambda, labels, classes)| {
        let m = build(&t);
        let out = reputation::run(&m, &EngineConfig::default().with_lambda(lambda)).unwrap();
        let attr = labelled(m.user_ids(), &labels, classes);
        let h = independence::harmonize(&out.reputations, &attr, &m).unwrap();
        let before = out.reputations.values();
        let after = h.reputations.values();
        let users = m.user_ids();
        for x in 0..users.len() {
            for y in 0..users.len() {
                if attr.class_of(users[x]) != attr.class_of(users[y]) || h.degenerate {
                    continue;
                }
                if before[x] < before[y] {
                    prop_assert!(
                        after[x] <= after[y],
                        "order of {} and {} flipped",
                        users[x],
                        users[y]
                    );
                }
                if before[x] == before[y] {
                    prop_assert_eq!(after[x], after[y]);
                }
            }
        }
        Ok(())
    })
}

pub fn delta_anticommutation(cases: u32) -> Result<(), String> {
    let strategy = (2..=7usize).prop_flat_map(|classes| {
        (
            vec(0.6..=1.0f64, classes..=40),
            vec(0..7usize, 1..=40),
            Just(classes),
        )
    });
    check(cases, strategy, |(values, labels, classes)| {
        let users: Vec<UserId> = (1..=values.len() as u32).map(UserId).collect();
        let reps = ReputationVector::from_values(users.clone(), values);
        let attr = labelled(&users, &labels, classes);
        let stats = independence::group_stats(&reps, &attr).unwrap();
        let report =
            independence::mw_pairwise_audit(&reps, &attr, &AuditConfig::new(0.05, 0.5, 0.8))
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
        for a in attr.classes() {
            for b in attr.classes() {
                let ab = independence::disparate_reputation(&stats, a, b).unwrap();
                let ba = independence::disparate_reputation(&stats, b, a).unwrap();
                prop_assert_eq!(ab, -ba);
                if a != b {
                    let (p, q) = (report.pair(a, b).unwrap(), report.pair(b, a).unwrap());
                    prop_assert_eq!(p.delta, -q.delta);
                    prop_assert_eq!(p.p_value, q.p_value);
                }
            }
        }
        Ok(())
    })
}

pub fn mw_symmetry(cases: u32) -> Result<(), String> {
    let sample = || vec((0..12u8).prop_map(|k| f64::from(k) * 0.25), 1..=30);
    check(cases, (sample(), sample()), |(a, b)| {
        let ab = stats::mann_whitney_u(&a, &b).unwrap();
        let ba = stats::mann_whitney_u(&b, &a).unwrap();
        let product = (a.len() * b.len()) as f64;
        prop_assert_eq!(ab.u_statistic + ba.u_statistic, product);
        prop_assert!(
            (ab.p_value - ba.p_value).abs() <= 1e-12,
            "{} vs {}",
            ab.p_value,
            ba.p_value
        );
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
        Ok(())
    })
}

pub fn mw_exact_vs_asymptotic(cases: u32) -> Result<(), String> {
    let strategy = Just((1..=30).map(f64::from).collect::<Vec<_>>()).prop_shuffle();
    check(cases, strategy, |values| {
        let (a, b) = values.split_at(15);
        let exact = stats::mann_whitney_u_with(a, b, MwMethod::Exact).unwrap();
        let approx = stats::mann_whitney_u_with(a, b, MwMethod::Asymptotic).unwrap();
        prop_assert!(
            (exact.p_value - approx.p_value).abs() <= 0.01,
            "exact {} vs asymptotic {}",
            exact.p_value,
            approx.p_value
        );
        Ok(())
    })
}

fn tau(x: &[f64], y: &[f64], v: TauVariant) -> Result<f64, StatsError> {
    stats::kendall_tau_slices(x, y, v)
}

/// Heavily tied scores: invariance under strictly increasing maps, symmetry,
/// and `tau(a, a) = 1` without ties.
pub fn tau_tie_invariance(cases: u32) -> Result<(), String> {
    let strategy = (2..=60usize).prop_flat_map(|n| {
        (
            vec((0..6u8).prop_map(f64::from), n),
            vec((0..6u8).prop_map(f64::from), n),
        )
    });
    check(cases, strategy, |(x, y)| {
        let fx: Vec<f64> = x.iter().map(|v| v * v * v + v.exp()).collect();
        let gy: Vec<f64> = y.iter().map(|v| (v + 1.0).ln() - 7.0).collect();
        for variant in [TauVariant::A, TauVariant::B] {
            let base = tau(&x, &y, variant);
            prop_assert_eq!(&tau(&fx, &y, variant), &base);
            prop_assert_eq!(&tau(&x, &gy, variant), &base);
            prop_assert_eq!(&tau(&y, &x, variant), &base);
        }
        let distinct: Vec<f64> = (0..x.len()).map(|k| x[k] * 100.0 + k as f64).collect();
        prop_assert_eq!(tau(&distinct, &distinct, TauVariant::B), Ok(1.0));
        Ok(())
    })
}

/// Multiplying every reputation by `2^-k` leaves normalized rankings bit-identical.
pub fn scale_invariance(cases: u32) -> Result<(), String> {
    check(
        cases,
        (triples(), vec(0.01..=1.0f64, 7), 0..=30i32),
        |(t, c, k)| {
            let m = build(&t);
            let c = &c[..m.n_users()];
            let gamma = 2f64.powi(-k);
            let scaled: Vec<f64> = c.iter().map(|x| x * gamma).collect();
            let a = reputation::weighted_ranking(&m, c).unwrap();
            let b = reputation::weighted_ranking(&m, &scaled).unwrap();
            for (x, y) in a.scores().iter().zip(b.scores()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            Ok(())
        },
    )
}

/// Same as [`scale_invariance`] for arbitrary factors, up to rounding.
pub fn scale_invariance_general(cases: u32) -> Result<(), String> {
    check(
        cases,
        (triples(), vec(0.01..=1.0f64, 7), 0.01..=1.0f64),
        |(t, c, gamma)| {
            let m = build(&t);
            let c = &c[..m.n_users()];
            let scaled: Vec<f64> = c.iter().map(|x| x * gamma).collect();
            let a = reputation::weighted_ranking(&m, c).unwrap();
            let b = reputation::weighted_ranking(&m, &scaled).unwrap();
            for (x, y) in a.scores().iter().zip(b.scores()) {
                prop_assert!((x - y).abs() <= 1e-14 * x.abs(), "{} vs {}", x, y);
            }
            Ok(())
        },
    )
}

/// Sup-norm deltas shrink from the third iterate on, and the run converges.
pub fn check_trajectory(trajectory: &[f64], converged: bool, tol: f64) -> Result<(), String> {
    if !converged {
        return Err(format!(
            "no convergence within {} iterations",
            trajectory.len()
        ));
    }
    if trajectory.len() > 200 || *trajectory.last().unwrap() >= tol {
        return Err(format!(
            "ended at {:e} after {}",
            trajectory.last().unwrap(),
            trajectory.len()
        ));
    }
    for k in 2..trajectory.len() {
        let (prev, cur) = (trajectory[k - 1], trajectory[k]);
        if cur >= prev && prev > 0.0 {
            return Err(format!(
                "delta grew at iterate {}: {prev:e} -> {cur:e}",
                k + 1
            ));
        }
    }
    Ok(())
}

/// 100 seeded random instances of up to 40 users and 25 items.
pub fn random_convergence(instances: u64) -> Result<usize, String> {
    let mut worst = 0;
    for seed in 0..instances {
        let mut rng = seeded(seed);
        let users = rand::Rng::random_range(&mut rng, 2..=40);
        let items = rand::Rng::random_range(&mut rng, 2..=25);
        let t = random_triples(&mut rng, users, items, 0.3);
        let m = build(&t);
        let config = EngineConfig::default();
        let out = reputation::run(&m, &config).map_err(|e| e.to_string())?;
        let r = &out.reputations;
        check_trajectory(&r.trajectory, r.converged, config.tolerance)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        worst = worst.max(r.iterations_run);
    }
    Ok(worst)
}

/// Every rating pattern with at most 6 cells (ratings 1..=5 or missing)
/// over at most 4 users and 3 items, every sparsity pattern of the larger
/// shapes with seeded ratings, both variants.
pub fn oracle_family() -> Result<(usize, f64), String> {
    let mut count = 0;
    let mut worst: f64 = 0.0;
    let mut rng = seeded(7);
    for users in 1..=4u32 {
        for items in 1..=3u32 {
            let cells = (users * items) as usize;
            let patterns: Box<dyn Iterator<Item = Vec<i64>>> = if cells <= 6 {
                Box::new((0..6usize.pow(cells as u32)).map(move |mut code| {
                    (0..cells)
                        .map(|_| {
                            let r = (code % 6) as i64;
                            code /= 6;
                            r
                        })
                        .collect()
                }))
            } else {
                let seeds: Vec<Vec<i64>> = (0..1usize << cells)
                    .map(|mask| {
                        (0..cells)
                            .map(|k| {
                                if mask >> k & 1 == 1 {
                                    rand::Rng::random_range(&mut rng, 1..=5)
                                } else {
                                    0
                                }
                            })
                            .collect()
                    })
                    .collect();
                Box::new(seeds.into_iter())
            };
            for ratings in patterns {
                let t: Triples = ratings
                    .iter()
                    .enumerate()
                    .filter(|(_, &r)| r > 0)
                    .map(|(k, &r)| (k as u32 / items + 1, k as u32 % items + 1, r))
                    .collect();
                // skip patterns with an empty row or column: they are a smaller shape
                let full = (1..=users).all(|u| t.iter().any(|x| x.0 == u))
                    && (1..=items).all(|i| t.iter().any(|x| x.1 == i));
                if !full {
                    continue;
                }
                for variant in [Variant::Li, Variant::Normalized] {
                    worst = worst.max(oracle_error(&t, variant)?);
                    count += 1;
                }
            }
        }
    }
    Ok((count, worst))
}

/// Largest per-component gap between `run()` and the dense reference.
pub fn oracle_error(t: &[(u32, u32, i64)], variant: Variant) -> Result<f64, String> {
    let m: RatingsMatrix = build(t);
    let config = EngineConfig {
        tolerance: 1e-13,
        max_iterations: 10_000,
        ..EngineConfig::default().with_variant(variant)
    };
    let out = reputation::run(&m, &config).map_err(|e| e.to_string())?;
    let reference =
        Dense::from_triples(t).solve(config.lambda, variant == Variant::Normalized, 1e-14);
    let mut worst: f64 = 0.0;
    for (a, b) in out.reputations.values().iter().zip(&reference.reputations) {
        worst = worst.max((a - b).abs());
    }
    for (item, score) in out.rankings.iter() {
        let r = reference.rankings[item.0 as usize - 1].unwrap();
        worst = worst.max((score - r).abs());
    }
    if worst > 1e-10 {
        return Err(format!("{variant:?} on {t:?}: gap {worst:e}"));
    }
    Ok(worst)
}
