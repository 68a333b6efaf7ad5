//! One line per acceptance criterion. MovieLens-1M is read from `$ML1M_DIR`
//! (`ratings.dat`, `users.dat`); criteria whose data is missing are reported
//! as failures with the reason, without aborting the run.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use common::invariants;
use repute::dataset::{AgeBrackets, AttributeTable, RatingsMatrix};
use repute::independence::{AuditConfig, DrAuditReport};
use repute::pipeline::{
    self, AttributeChoice, BaseRun, Mitigation, AA_VS_MITIGATED, AA_VS_UNMITIGATED,
};
use repute::reputation::EngineConfig;

const AGES: [&str; 7] = ["<18", "18-24", "25-34", "35-44", "45-49", "50-55", ">55"];

/// Upper triangle, row by row.
const AGE_DR: [f64; 21] = [
    -0.0089, -0.0142, -0.0161, -0.0159, -0.0153, -0.0164, //
    -0.0053, -0.0072, -0.0070, -0.0064, -0.0075, //
    -0.0019, -0.0017, -0.0011, -0.0022, //
    0.0002, 0.0008, -0.0003, //
    0.0006, -0.0005, //
    -0.0011,
];

/// Upper triangle, row by row; `true` = rejected at 5%.
const AGE_MW: [bool; 21] = [
    true, true, true, true, true, true, //
    true, true, true, true, true, //
    true, false, false, true, //
    false, false, false, //
    false, false, //
    false,
];

enum Outcome {
    Pass(String),
    Fail(String),
    Missing(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

struct Attribute {
    mitigation: Mitigation,
    seconds: f64,
}

struct Data {
    matrix: RatingsMatrix,
    base: BaseRun,
    base_seconds: f64,
    gender: Option<Attribute>,
    age: Option<Attribute>,
}

fn load(dir: &Path) -> Result<Data, String> {
    let start = Instant::now();
    let matrix = pipeline::load_ratings(&dir.join("ratings.dat"), 5).map_err(|e| e.to_string())?;
    let base = BaseRun::compute(&matrix, &EngineConfig::default()).map_err(|e| e.to_string())?;
    let base_seconds = start.elapsed().as_secs_f64();
    let users = dir.join("users.dat");
    let audit = AuditConfig::new(0.05, 0.5, matrix.delta_r());
    let attribute = |choice| -> Result<Option<Attribute>, String> {
        if !users.is_file() {
            return Ok(None);
        }
        let start = Instant::now();
        let table: AttributeTable =
            pipeline::load_attribute(&users, choice, &AgeBrackets::movielens())
                .map_err(|e| e.to_string())?;
        table.check_covers(&matrix).map_err(|e| e.to_string())?;
        let mitigation =
            Mitigation::compute(&base, &matrix, &table, &audit).map_err(|e| e.to_string())?;
        Ok(Some(Attribute {
            mitigation,
            seconds: start.elapsed().as_secs_f64(),
        }))
    };
    let gender = attribute(AttributeChoice::Gender)?;
    let age = attribute(AttributeChoice::Age)?;
    Ok(Data {
        matrix,
        base,
        base_seconds,
        gender,
        age,
    })
}

fn upper_pairs() -> impl Iterator<Item = (&'static str, &'static str)> {
    (0..7).flat_map(|a| (a + 1..7).map(move |b| (AGES[a], AGES[b])))
}

fn no_users(what: &str) -> Outcome {
    Outcome::Missing(format!(
        "{what} needs users.dat (gender and age), which is not in $ML1M_DIR"
    ))
}

fn criterion_1(d: &Data) -> Outcome {
    let Some(g) = &d.gender else {
        return no_users("gender DR");
    };
    let delta = g.mitigation.audit_pre.delta("F", "M").unwrap();
    let seconds = d.base_seconds + g.seconds;
    verdict(
        (delta - -0.0027).abs() <= 0.0005 && seconds < 300.0,
        format!("delta(F, M) = {delta:.5} (target -0.0027 +- 0.0005), {seconds:.1} s"),
    )
}

fn criterion_2(d: &Data) -> Outcome {
    let Some(g) = &d.gender else {
        return no_users("gender MW");
    };
    let pre = g.mitigation.audit_pre.pair("F", "M").unwrap();
    let post = g.mitigation.audit_post.pair("F", "M").unwrap();
    verdict(
        pre.p_value < 1e-6 && post.p_value > 0.5 && !post.rejected,
        format!(
            "p before = {:.3e} (< 1e-6), p after = {:.4} (> 0.5, not rejected)",
            pre.p_value, post.p_value
        ),
    )
}

fn max_abs_delta(r: &DrAuditReport) -> f64 {
    r.pairs.iter().map(|p| p.delta.abs()).fold(0.0, f64::max)
}

fn criterion_3(d: &Data) -> Outcome {
    let (Some(g), Some(a)) = (&d.gender, &d.age) else {
        return no_users("post-mitigation DR");
    };
    let (dg, da) = (
        max_abs_delta(&g.mitigation.audit_post),
        max_abs_delta(&a.mitigation.audit_post),
    );
    verdict(
        dg <= 1e-12 && da <= 1e-12,
        format!("max |delta| gender {dg:.1e}, age {da:.1e} (<= 1e-12)"),
    )
}

fn criterion_4(d: &Data) -> Outcome {
    let Some(a) = &d.age else {
        return no_users("age DR");
    };
    let audit = &a.mitigation.audit_pre;
    let mut worst: f64 = 0.0;
    let mut sign_errors = Vec::new();
    for ((x, y), want) in upper_pairs().zip(AGE_DR) {
        let got = audit.delta(x, y).unwrap();
        worst = worst.max((got - want).abs());
        if got.signum() != want.signum() {
            sign_errors.push(format!("({x},{y})"));
        }
    }
    verdict(
        worst <= 0.001 && sign_errors.is_empty(),
        format!(
            "21 pairs, largest gap {worst:.5} (<= 0.001), sign mismatches: {}",
            if sign_errors.is_empty() {
                "none".to_string()
            } else {
                sign_errors.join(" ")
            }
        ),
    )
}

fn criterion_5(d: &Data) -> Outcome {
    let Some(a) = &d.age else {
        return no_users("age MW");
    };
    let audit = &a.mitigation.audit_pre;
    let wrong: Vec<String> = upper_pairs()
        .zip(AGE_MW)
        .filter(|((x, y), want)| audit.pair(x, y).unwrap().rejected != *want)
        .map(|((x, y), _)| format!("({x},{y})"))
        .collect();
    verdict(
        wrong.is_empty(),
        format!("{} of 21 verdicts differ {}", wrong.len(), wrong.join(" ")),
    )
}

fn criterion_6(d: &Data) -> Outcome {
    let none = d.base.tau_vs_aa().unwrap().tau_b;
    let detail = format!("tau(AA, unmitigated) = {none:.4} (0.9950 +- 0.002)");
    let (Some(g), Some(a)) = (&d.gender, &d.age) else {
        return Outcome::Missing(format!("{detail}; gender and age columns need users.dat"));
    };
    let tg = g.mitigation.tau.get(AA_VS_MITIGATED).unwrap().tau_b;
    let ta = a.mitigation.tau.get(AA_VS_MITIGATED).unwrap().tau_b;
    assert_eq!(g.mitigation.tau.get(AA_VS_UNMITIGATED).unwrap().tau_b, none);
    verdict(
        (none - 0.9950).abs() <= 0.002
            && (tg - 0.9954).abs() <= 0.002
            && (ta - 0.9959).abs() <= 0.002
            && none < tg
            && tg < ta,
        format!(
            "{detail}, gender {tg:.4} (0.9954), age {ta:.4} (0.9959), ordering none < gender < age"
        ),
    )
}

fn criterion_7(d: Option<&Data>) -> Outcome {
    let random = match invariants::random_convergence(100) {
        Ok(worst) => format!("100 random instances converge, at most {worst} iterations"),
        Err(e) => return Outcome::Fail(e),
    };
    let Some(d) = d else {
        return Outcome::Missing(format!("{random}; ML-1M ratings.dat not found"));
    };
    let r = &d.base.engine.reputations;
    match invariants::check_trajectory(&r.trajectory, r.converged, 1e-8) {
        Ok(()) => Outcome::Pass(format!(
            "{random}; ML-1M converges in {} iterations to {:.1e}, deltas {:?}",
            r.iterations_run,
            r.final_delta,
            r.trajectory
                .iter()
                .map(|x| format!("{x:.1e}"))
                .collect::<Vec<_>>()
        )),
        Err(e) => Outcome::Fail(format!("ML-1M: {e}")),
    }
}

fn criterion_8() -> Outcome {
    match invariants::oracle_family() {
        Ok((count, worst)) => verdict(
            worst <= 1e-10,
            format!("{count} instance/variant runs, largest gap {worst:.1e} (<= 1e-10)"),
        ),
        Err(e) => Outcome::Fail(e),
    }
}

fn criterion_9() -> Outcome {
    type Check = fn(u32) -> Result<(), String>;
    let checks: [(&str, Check); 7] = [
        ("first iterate = AA", invariants::first_iterate_equals_aa),
        ("reputation bounds", invariants::reputation_bounds),
        (
            "harmonization idempotence",
            invariants::harmonization_idempotence,
        ),
        ("within-class order", invariants::within_class_order),
        ("delta anti-commutation", invariants::delta_anticommutation),
        ("MW symmetry", invariants::mw_symmetry),
        ("tau tie invariance", invariants::tau_tie_invariance),
    ];
    let start = Instant::now();
    let mut failures = Vec::new();
    for (name, check) in checks {
        if let Err(e) = check(invariants::CASES) {
            failures.push(format!("{name}: {e}"));
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    verdict(
        failures.is_empty() && seconds < 120.0,
        format!(
            "7 properties x {} cases in {seconds:.1} s (< 120 s){}",
            invariants::CASES,
            failures
                .iter()
                .map(|f| format!("; {f}"))
                .collect::<String>()
        ),
    )
}

fn main() {
    let dir = std::env::var_os("ML1M_DIR").map(PathBuf::from);
    let data = match &dir {
        Some(dir) if dir.join("ratings.dat").is_file() => match load(dir) {
            Ok(d) => Some(d),
            Err(e) => {
                println!("could not load MovieLens-1M from {}: {e}", dir.display());
                None
            }
        },
        _ => None,
    };
    match (&dir, &data) {
        (_, Some(d)) => println!(
            "MovieLens-1M: {} users, {} items, {} ratings; users.dat {}",
            d.matrix.n_users(),
            d.matrix.n_items(),
            d.matrix.nnz(),
            if d.gender.is_some() {
                "present"
            } else {
                "missing"
            }
        ),
        (Some(dir), None) => println!("MovieLens-1M: no ratings.dat in {}", dir.display()),
        (None, None) => println!("MovieLens-1M: ML1M_DIR is not set"),
    }

    let dataset = |f: fn(&Data) -> Outcome| match &data {
        Some(d) => f(d),
        None => Outcome::Missing("needs MovieLens-1M ($ML1M_DIR)".into()),
    };
    let results = [
        ("gender DR replication", dataset(criterion_1)),
        ("gender MW replication", dataset(criterion_2)),
        ("mitigation nulls DR", dataset(criterion_3)),
        ("age DR values and signs", dataset(criterion_4)),
        ("age MW verdict matrix", dataset(criterion_5)),
        ("Kendall tau replication", dataset(criterion_6)),
        ("geometric convergence", criterion_7(data.as_ref())),
        ("oracle equivalence", criterion_8()),
        ("invariant suite", criterion_9()),
    ];

    let mut failed = 0;
    let mut unverified = 0;
    for (k, (name, outcome)) in results.iter().enumerate() {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d.clone()),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d.clone())
            }
            Outcome::Missing(d) => {
                unverified += 1;
                ("FAIL", format!("not verifiable here: {d}"))
            }
        };
        println!("[{tag}] {}. {name}: {detail}", k + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed, {unverified} not verifiable for lack of data",
        results.len() - failed - unverified
    );
    // Missing data is reported above but does not fail the build; a wrong number does.
    if failed > 0 {
        std::process::exit(1);
    }
}
