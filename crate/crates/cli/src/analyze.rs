use qscorer_core::analysis::{
    deqa_label_error, deqa_label_studies, deqa_midpoint_bound, deqa_sigma_restoration_study,
    qalign_error_analytic, qalign_error_analytic_exact, qalign_error_mc_with, rating_grid,
    uat_capacity_sweep, ScoreDistribution, MIN_BOUND_GRID,
};
use qscorer_core::label::{deqa_raw_soft_label, GaussianRating};
use qscorer_core::types::IntervalScheme;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{AnalyzeArgs, Method};
use crate::exit::CliError;
use crate::output::{print_line, OutDir};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn record<T: Serialize>(kind: &str, body: &T) -> Value {
    let mut v = json!({ "schema_version": REPORT_SCHEMA_VERSION, "record": kind });
    if let (Value::Object(m), Value::Object(b)) = (
        &mut v,
        serde_json::to_value(body).expect("record serializes"),
    ) {
        m.extend(b);
    }
    v
}

pub fn validate(a: &AnalyzeArgs) -> Result<Method, CliError> {
    let method = a
        .method
        .ok_or_else(|| CliError::Usage("--method is required (qalign, deqa, uat or all)".into()))?;
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be >= 1".into()));
    }
    if a.bound_grid < MIN_BOUND_GRID {
        return Err(CliError::Usage(format!(
            "--bound-grid must be >= {MIN_BOUND_GRID}"
        )));
    }
    if let (Some(mu), Some(sigma)) = (a.mu, a.sigma) {
        if !(1.0..=5.0).contains(&mu) || !(sigma > 0.0) {
            return Err(CliError::Usage(format!(
                "need mu in [1,5] and sigma > 0, got mu={mu}, sigma={sigma}"
            )));
        }
    }
    if a.uat_widths.is_empty() || a.uat_widths.contains(&0) {
        return Err(CliError::Usage(
            "--uat-widths must list positive widths".into(),
        ));
    }
    Ok(method)
}

pub fn run(a: &AnalyzeArgs) -> Result<(), CliError> {
    let method = validate(a)?;
    let out = OutDir::create(&a.out.out_dir)?;
    out.manifest("analyze-errors", a)?;
    let mut lines = Vec::new();
    let mut violations = Vec::new();
    if matches!(method, Method::Qalign | Method::All) {
        qalign(a, &mut lines)?;
    }
    if matches!(method, Method::Deqa | Method::All) {
        deqa(a, &out, &mut lines, &mut violations)?;
    }
    if matches!(method, Method::Uat | Method::All) {
        uat(a, &out, &mut lines)?;
    }
    out.jsonl("errors.jsonl", &lines)?;
    for l in &lines {
        print_line(&l.to_string());
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(violations.join("; ")))
    }
}

fn qalign(a: &AnalyzeArgs, lines: &mut Vec<Value>) -> Result<(), CliError> {
    let exact = qalign_error_analytic_exact();
    lines.push(record(
        "qalign-analytic",
        &json!({ "exact": format!("{}/{}", exact.numer(), exact.denom()), "value": qalign_error_analytic() }),
    ));
    let dist = match (a.score_mu, a.score_sigma) {
        (Some(mu), Some(sigma)) => ScoreDistribution::TruncatedNormal { mu, sigma },
        _ => ScoreDistribution::Uniform,
    };
    let study = qalign_error_mc_with(a.samples, a.seed, dist)?;
    lines.push(record(
        "error-study",
        &json!({ "distribution": dist, "study": study }),
    ));
    Ok(())
}

#[derive(Serialize)]
struct LabelRow {
    mu: f64,
    sigma: f64,
    raw_mass: f64,
    mass_deficit: f64,
    eps2_raw: f64,
    eps2_enhanced: f64,
}

fn label_row(r: GaussianRating<f64>) -> Result<LabelRow, CliError> {
    let raw = deqa_raw_soft_label(r, &IntervalScheme::deqa())?;
    let e = deqa_label_error(r)?;
    Ok(LabelRow {
        mu: r.mu,
        sigma: r.sigma,
        raw_mass: raw.mass(),
        mass_deficit: 1.0 - raw.mass(),
        eps2_raw: e.eps2_raw,
        eps2_enhanced: e.eps2_enhanced,
    })
}

fn deqa(
    a: &AnalyzeArgs,
    out: &OutDir,
    lines: &mut Vec<Value>,
    violations: &mut Vec<String>,
) -> Result<(), CliError> {
    let ratings = match (a.mu, a.sigma) {
        (Some(mu), Some(sigma)) => vec![GaussianRating::new(mu, sigma)?],
        _ => rating_grid(a.grid_mus, a.grid_sigmas, a.sigma_lo, a.sigma_hi)?,
    };
    let rows = ratings
        .iter()
        .map(|&r| label_row(r))
        .collect::<Result<Vec<_>, _>>()?;
    for row in &rows {
        lines.push(record("deqa-label", row));
    }
    let (raw, enhanced) = deqa_label_studies(&ratings)?;
    lines.push(record("error-study", &json!({ "study": raw })));
    lines.push(record("error-study", &json!({ "study": enhanced })));
    out.csv("deqa_labels.csv", &rows)?;

    let bounds = ratings
        .iter()
        .map(|&r| deqa_midpoint_bound(r, a.bound_grid))
        .collect::<Result<Vec<_>, _>>()?;
    for b in &bounds {
        lines.push(record("midpoint-bound", b));
        if !b.holds {
            violations.push(format!(
                "midpoint bound fails at mu={}, sigma={}",
                b.mu, b.sigma
            ));
        }
    }
    out.csv("midpoint_bound.csv", &bounds)?;

    let restoration = deqa_sigma_restoration_study(a.restore_mu, &a.restore_sigmas)?;
    lines.push(record(
        "sigma-restoration",
        &json!({ "mu": a.restore_mu, "rows": restoration }),
    ));
    out.csv("sigma_restoration.csv", &restoration)?;
    Ok(())
}

fn uat(a: &AnalyzeArgs, out: &OutDir, lines: &mut Vec<Value>) -> Result<(), CliError> {
    let results = uat_capacity_sweep(a.uat_target, &a.uat_widths, a.uat_epochs, a.seed)?;
    for r in &results {
        lines.push(record(
            "uat",
            &json!({ "result": r, "study": r.to_study() }),
        ));
    }
    out.csv("uat_sweep.csv", &results)?;
    Ok(())
}
