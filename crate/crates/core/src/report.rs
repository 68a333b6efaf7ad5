//! Human-readable summary of an output directory written by
//! [`run_pipeline`](crate::pipeline::run_pipeline).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::independence::{AuditConfig, DrAuditReport};
use crate::pipeline::{Cause, PipelineError, Stage, TauReport};

fn missing(dir: &Path, what: &str) -> PipelineError {
    PipelineError::new(
        Stage::Report,
        Cause::Config(format!(
            "{} does not look like a run directory: {what} not found \
             (expected manifest.json, audit_pre.csv|json, audit_post.csv|json, tau.csv|json)",
            dir.display()
        )),
    )
}

fn read_opt(path: &Path) -> Result<Option<String>, PipelineError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(error) => Err(PipelineError::new(
            Stage::Report,
            Cause::Io {
                path: path.to_path_buf(),
                error,
            },
        )),
    }
}

fn json_err(path: &Path, error: serde_json::Error) -> PipelineError {
    PipelineError::new(
        Stage::Report,
        Cause::Json {
            path: path.to_path_buf(),
            error,
        },
    )
}

fn load_audit(
    dir: &Path,
    stem: &str,
    attribute: &str,
) -> Result<Option<DrAuditReport>, PipelineError> {
    let json = dir.join(format!("{stem}.json"));
    if let Some(text) = read_opt(&json)? {
        let value = serde_json::from_str(&text).map_err(|e| json_err(&json, e))?;
        return DrAuditReport::from_json(&value)
            .map(Some)
            .map_err(|e| json_err(&json, e));
    }
    let csv = dir.join(format!("{stem}.csv"));
    match read_opt(&csv)? {
        Some(text) => DrAuditReport::from_csv(attribute, &text)
            .map(Some)
            .map_err(|e| PipelineError::new(Stage::Report, e)),
        None => Ok(None),
    }
}

fn load_tau(dir: &Path, attribute: &str) -> Result<Option<TauReport>, PipelineError> {
    let json = dir.join("tau.json");
    if let Some(text) = read_opt(&json)? {
        return serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| json_err(&json, e));
    }
    let csv = dir.join("tau.csv");
    match read_opt(&csv)? {
        Some(text) => TauReport::from_csv(attribute, &text)
            .map(Some)
            .map_err(|reason| {
                PipelineError::new(
                    Stage::Report,
                    Cause::Config(format!("{}: {reason}", csv.display())),
                )
            }),
        None => Ok(None),
    }
}

/// Four decimals, or scientific notation for values too small to show.
fn fmt_delta(d: f64) -> String {
    if d == 0.0 || d.abs() >= 1e-4 {
        format!("{d:.4}")
    } else {
        format!("{d:.3e}")
    }
}

/// Four significant digits.
fn fmt_p(p: f64) -> String {
    if p >= 1e-3 {
        format!("{p:.4}")
    } else {
        format!("{p:.3e}")
    }
}

fn matrix(
    out: &mut String,
    report: &DrAuditReport,
    title: &str,
    cell: impl Fn(f64, f64, bool) -> String,
) {
    let classes = &report.classes;
    let width = classes.iter().map(|c| c.len()).max().unwrap_or(0).max(12);
    let _ = writeln!(out, "  {title}");
    let _ = write!(out, "  {:width$}", "");
    for c in &classes[1..] {
        let _ = write!(out, " {c:>width$}");
    }
    out.push('\n');
    for (i, a) in classes[..classes.len() - 1].iter().enumerate() {
        let _ = write!(out, "  {a:width$}");
        for (j, b) in classes.iter().enumerate().skip(1) {
            if j <= i {
                let _ = write!(out, " {:>width$}", "");
                continue;
            }
            let pair = report.pair(a, b).expect("every pair is audited");
            let _ = write!(
                out,
                " {:>width$}",
                cell(pair.delta, pair.p_value, pair.rejected)
            );
        }
        out.push('\n');
    }
}

fn render_audit(out: &mut String, heading: &str, report: &DrAuditReport) {
    let _ = writeln!(
        out,
        "{heading} ({}, alpha = {}, stated bound ±{:.4}, tight bound ±{:.4})",
        report.attribute, report.alpha, report.range_bound[1], report.tight_bound[1]
    );
    let _ = writeln!(
        out,
        "  {:<8} {:<8} {:>12} {:>12} {:>10}  verdict",
        "class a", "class b", "delta", "U", "p"
    );
    for p in &report.pairs {
        let _ = writeln!(
            out,
            "  {:<8} {:<8} {:>12} {:>12.1} {:>10}  {}",
            p.class_a,
            p.class_b,
            fmt_delta(p.delta),
            p.u_statistic,
            fmt_p(p.p_value),
            if p.rejected { "H1" } else { "H0" }
        );
    }
    if report.classes.len() > 2 {
        matrix(out, report, "delta (row - column)", |d, _, _| fmt_delta(d));
        matrix(out, report, "Mann-Whitney verdict", |_, p, r| {
            format!("{} {}", if r { "H1" } else { "H0" }, fmt_p(p))
        });
    }
    let [lo, hi] = report.observed_range;
    let _ = writeln!(
        out,
        "  observed delta range [{}, {}]",
        fmt_delta(lo),
        fmt_delta(hi)
    );
    out.push('\n');
}

/// Renders the audit tables and tau values found in `dir`.
pub fn print_report(dir: &Path) -> Result<String, PipelineError> {
    let manifest_path = dir.join("manifest.json");
    let manifest: serde_json::Value = match read_opt(&manifest_path)? {
        Some(text) => serde_json::from_str(&text).map_err(|e| json_err(&manifest_path, e))?,
        None => return Err(missing(dir, "manifest.json")),
    };
    let attribute = manifest["config"]["attribute"]
        .as_str()
        .unwrap_or("none")
        .to_string();

    let mut out = String::new();
    let cfg = &manifest["config"]["engine"];
    let _ = writeln!(
        out,
        "run: {} users, {} items, {} ratings; variant {}, lambda {}, attribute {attribute}",
        manifest["n_users"],
        manifest["n_items"],
        manifest["n_ratings"],
        cfg["variant"].as_str().unwrap_or("?"),
        cfg["lambda"]
    );
    let _ = writeln!(
        out,
        "convergence: {} iterations, converged = {}, final change {}",
        manifest["iterations_run"], manifest["converged"], manifest["final_delta"]
    );
    if let Some(h) = manifest.get("harmonization").filter(|h| !h.is_null()) {
        let _ = writeln!(
            out,
            "harmonization target: mean {}, std {}{}",
            h["target_mean"],
            h["target_std"],
            if h["degenerate"].as_bool() == Some(true) {
                " (degenerate: zero spread)"
            } else {
                ""
            }
        );
    }
    out.push('\n');

    if attribute != "none" {
        let config = AuditConfig::new(
            manifest["config"]["alpha"].as_f64().unwrap_or(f64::NAN),
            cfg["lambda"].as_f64().unwrap_or(f64::NAN),
            manifest["delta_r"].as_f64().unwrap_or(f64::NAN),
        );
        let fill = |mut r: DrAuditReport| {
            // the CSV form carries no bounds
            if r.alpha.is_nan() {
                r.alpha = config.alpha;
                r.range_bound = config.range_bound();
                r.tight_bound = config.tight_bound();
            }
            r
        };
        let pre =
            load_audit(dir, "audit_pre", &attribute)?.ok_or_else(|| missing(dir, "audit_pre"))?;
        let post =
            load_audit(dir, "audit_post", &attribute)?.ok_or_else(|| missing(dir, "audit_post"))?;
        let (pre, post) = (fill(pre), fill(post));
        render_audit(&mut out, "Disparate reputation before mitigation", &pre);
        render_audit(&mut out, "Disparate reputation after mitigation", &post);
    }

    let tau = load_tau(dir, &attribute)?.ok_or_else(|| missing(dir, "tau"))?;
    let _ = writeln!(out, "Kendall tau");
    for e in &tau.entries {
        let _ = writeln!(
            out,
            "  {:<26} tau_b {:.4}  tau_a {:.4}",
            e.comparison, e.tau_b, e.tau_a
        );
    }
    Ok(out)
}
