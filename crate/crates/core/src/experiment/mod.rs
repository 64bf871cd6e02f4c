//! Validation strategies, scenario sweeps and derived analyses.

mod conditions;
mod grid;
mod impact;
pub mod report;
mod strategy;
mod themes;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use conditions::SurveyConditions;
pub use grid::{grid_label, make_grid, policy_relaxation_condition, GridSpec};
pub use impact::{environmental_impact, ImpactCoefficients, ImpactEstimate};
pub use strategy::{
    default_strategies, gate, match_rounds, split_reference, BehaviorRow, Experiment, GatingTrace,
    GroupReport, HistogramRow, MatchedTransition, Mode, RiskRecord, RiskRow, Selector,
    StrategyKind, StrategyRun, StrategySpec, ValidationReport, ValidationSettings,
    FEW_SHOT_FRACTION, MATCH_COVARIATES,
};
pub use themes::{default_lexicon, tag_rationales, Lexicon, ThemeFrequency};

use crate::domain::{Behavior, EpidemicCondition};
use crate::error::ExperimentError;
use crate::sim::{dynamic_key, BehaviorProfile, Simulator, Transition};

/// Mean simulated outcome of a persona sample under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub r0: f64,
    pub cfr: f64,
    pub tier: String,
    pub n: usize,
    pub mean_risk_level: f64,
    /// Mean Likert intensity per behaviour, catalog order.
    pub mean_intensity: Vec<(Behavior, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftRun {
    pub summaries: Vec<ConditionSummary>,
    pub profiles: Vec<BehaviorProfile>,
    pub risks: Vec<RiskRecord>,
    /// Risk-update rationales, one list per simulated transition.
    pub risk_rationales: Vec<(String, String, Vec<String>)>,
}

/// Move each sampled resident from their own surveyed condition to every
/// target condition: update risk, then simulate behaviour under the target.
/// Completions are recorded in `sim`'s log.
pub fn simulate_shift(
    sim: &Simulator<'_>,
    exp: &Experiment<'_>,
    targets: &[EpidemicCondition],
    records: &[usize],
) -> Result<ShiftRun, ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::Config("no residents to simulate".into()));
    }
    let behaviors = sim.behaviors();
    let per_condition = targets
        .par_iter()
        .map(|target| {
            let units = records
                .par_iter()
                .map(|&i| {
                    let persona = &exp.dataset.personas[i];
                    let tr = Transition {
                        persona: persona.clone(),
                        condition_t1: exp.conditions.condition_for(exp.dataset, i)?,
                        condition_t2: target.clone(),
                        risk_t1: persona.risk_t1,
                    };
                    let (risk, why) = sim.update_risk_with_rationales(&tr, &[])?;
                    let profile = sim.simulate_static(&tr.persona, target, &risk, &[])?;
                    let key = dynamic_key(&tr);
                    Ok((
                        RiskRecord {
                            persona_id: persona.id.clone(),
                            condition: key.clone(),
                            score: risk.score.unwrap_or(f64::NAN),
                            level: risk.level.value(),
                        },
                        profile,
                        (persona.id.clone(), key, why),
                    ))
                })
                .collect::<Result<Vec<_>, ExperimentError>>()?;
            let n = units.len() as f64;
            let mean_intensity = behaviors
                .iter()
                .map(|&b| {
                    let sum: f64 = units
                        .iter()
                        .map(|(_, p, _)| p.get(b).expect("simulated").likert.value() as f64)
                        .sum();
                    (b, sum / n)
                })
                .collect();
            let summary = ConditionSummary {
                condition: target.label.clone(),
                r0: target.context.r0,
                cfr: target.context.cfr,
                tier: target.measures.tier.slug().to_string(),
                n: units.len(),
                mean_risk_level: units.iter().map(|(r, _, _)| r.level as f64).sum::<f64>() / n,
                mean_intensity,
            };
            Ok((summary, units))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let mut out = ShiftRun {
        summaries: Vec::with_capacity(targets.len()),
        profiles: Vec::new(),
        risks: Vec::new(),
        risk_rationales: Vec::new(),
    };
    for (summary, units) in per_condition {
        out.summaries.push(summary);
        for (risk, profile, why) in units {
            out.risks.push(risk);
            out.profiles.push(profile);
            out.risk_rationales.push(why);
        }
    }
    Ok(out)
}
