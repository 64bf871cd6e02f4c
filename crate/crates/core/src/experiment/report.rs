//! CSV and JSON renderings of simulation and validation outputs.

use serde::Serialize;

use crate::error::ExperimentError;
use crate::sim::BehaviorProfile;
use crate::stats::{LevelBalance, Pair};

use super::{ConditionSummary, ImpactEstimate, RiskRecord, ThemeFrequency, ValidationReport};

fn csv_err(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Write {
        path: "<csv>".into(),
        message: e.to_string(),
    }
}

fn render(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, ExperimentError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, ExperimentError> {
    let mut s = serde_json::to_string_pretty(value).map_err(csv_err)?;
    s.push('\n');
    Ok(s)
}

/// One row per (persona, condition, behaviour).
pub fn profiles_csv(profiles: &[BehaviorProfile]) -> Result<String, ExperimentError> {
    render(
        &["persona_id", "condition", "behavior", "mean_probability", "likert", "repetitions"],
        profiles.iter().flat_map(|p| {
            p.outcomes.iter().map(move |o| {
                vec![
                    p.persona_id.clone(),
                    p.condition.clone(),
                    o.behavior.id().to_string(),
                    o.mean_probability.to_string(),
                    o.likert.value().to_string(),
                    p.repetition_count.to_string(),
                ]
            })
        }),
    )
}

/// One row per rationale, in repetition order.
pub fn rationales_csv(profiles: &[BehaviorProfile]) -> Result<String, ExperimentError> {
    render(
        &["persona_id", "condition", "behavior", "repetition", "rationale"],
        profiles.iter().flat_map(|p| {
            p.outcomes.iter().flat_map(move |o| {
                o.rationales.iter().enumerate().map(move |(k, r)| {
                    vec![
                        p.persona_id.clone(),
                        p.condition.clone(),
                        o.behavior.id().to_string(),
                        k.to_string(),
                        r.clone(),
                    ]
                })
            })
        }),
    )
}

pub fn risks_csv(risks: &[RiskRecord]) -> Result<String, ExperimentError> {
    render(
        &["persona_id", "condition", "risk_score", "risk_level"],
        risks.iter().map(|r| {
            vec![
                r.persona_id.clone(),
                r.condition.clone(),
                r.score.to_string(),
                r.level.to_string(),
            ]
        }),
    )
}

/// Per-behaviour KS rows for the pooled test set and each tier.
pub fn validation_csv(report: &ValidationReport) -> Result<String, ExperimentError> {
    let groups = std::iter::once(&report.pooled).chain(&report.by_tier);
    render(
        &[
            "strategy",
            "group",
            "behavior",
            "ks_statistic",
            "p_value",
            "n_simulated",
            "n_observed",
            "simulated_mean",
            "observed_mean",
            "pass",
        ],
        groups.flat_map(|g| {
            g.rows.iter().map(move |r| {
                vec![
                    report.strategy.clone(),
                    g.group.clone(),
                    r.behavior.id().to_string(),
                    r.statistic.to_string(),
                    r.p_value.to_string(),
                    r.n_simulated.to_string(),
                    r.n_observed.to_string(),
                    r.simulated_mean.to_string(),
                    r.observed_mean.to_string(),
                    r.pass.to_string(),
                ]
            })
        }),
    )
}

/// Likert histograms (counts for values 1..5) for plotting.
pub fn histograms_csv(report: &ValidationReport) -> Result<String, ExperimentError> {
    render(
        &["strategy", "group", "behavior", "source", "n1", "n2", "n3", "n4", "n5"],
        report.histograms.iter().map(|h| {
            let mut row = vec![
                report.strategy.clone(),
                h.group.clone(),
                h.behavior.id().to_string(),
                h.source.clone(),
            ];
            row.extend(h.counts.iter().map(|c| c.to_string()));
            row
        }),
    )
}

pub fn summaries_csv(rows: &[ConditionSummary]) -> Result<String, ExperimentError> {
    let behaviors: Vec<String> = rows
        .first()
        .map(|r| r.mean_intensity.iter().map(|(b, _)| b.id().to_string()).collect())
        .unwrap_or_default();
    let mut header = vec!["condition", "r0", "cfr", "tier", "n", "mean_risk_level"];
    header.extend(behaviors.iter().map(String::as_str));
    render(
        &header,
        rows.iter().map(|r| {
            let mut row = vec![
                r.condition.clone(),
                r.r0.to_string(),
                r.cfr.to_string(),
                r.tier.clone(),
                r.n.to_string(),
                r.mean_risk_level.to_string(),
            ];
            row.extend(r.mean_intensity.iter().map(|(_, v)| v.to_string()));
            row
        }),
    )
}

pub fn pairs_csv(pairs: &[Pair]) -> Result<String, ExperimentError> {
    render(
        &["treated_id", "control_id", "treated_score", "control_score"],
        pairs.iter().map(|p| {
            vec![
                p.treated.clone(),
                p.control.clone(),
                p.treated_score.to_string(),
                p.control_score.to_string(),
            ]
        }),
    )
}

pub fn balance_csv(rows: &[LevelBalance]) -> Result<String, ExperimentError> {
    render(
        &["covariate", "level", "smd_before", "smd_after"],
        rows.iter().map(|b| {
            vec![
                b.covariate.clone(),
                b.level.clone(),
                b.smd_before.to_string(),
                b.smd_after.to_string(),
            ]
        }),
    )
}

pub fn themes_csv(rows: &[(String, Vec<ThemeFrequency>)]) -> Result<String, ExperimentError> {
    render(
        &["scope", "theme", "count", "total", "percent"],
        rows.iter().flat_map(|(scope, freqs)| {
            freqs.iter().map(move |f| {
                vec![
                    scope.clone(),
                    f.theme.clone(),
                    f.count.to_string(),
                    f.total.to_string(),
                    format!("{:.1}", f.percent),
                ]
            })
        }),
    )
}

pub fn impact_csv(e: &ImpactEstimate) -> Result<String, ExperimentError> {
    render(
        &[
            "intensity_from",
            "intensity_to",
            "population",
            "per_capita_volume_l",
            "per_capita_dbp_mg",
            "total_volume_l",
            "total_tons",
            "total_dbp_kg",
            "avoided",
        ],
        [vec![
            e.intensity_from.to_string(),
            e.intensity_to.to_string(),
            e.population.to_string(),
            e.per_capita_volume_l.to_string(),
            e.per_capita_dbp_mg.to_string(),
            e.total_volume_l.to_string(),
            e.total_tons.to_string(),
            e.total_dbp_kg.to_string(),
            e.avoided.to_string(),
        ]],
    )
}
