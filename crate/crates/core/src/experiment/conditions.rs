//! Epidemic conditions attached to survey records.

use serde::{Deserialize, Serialize};

use crate::domain::{
    Burden, ControlMeasures, EpidemicCondition, PandemicContext, Tier, DEFAULT_ACTIVATION,
    DEFAULT_INTERVENTIONS,
};
use crate::error::DomainError;
use crate::ingest::{Dataset, Round};

/// Pandemic context of each survey round plus the intervention table used to
/// expand a record's tier into concrete measures.
///
/// The default contexts are illustrative values; studies should supply the
/// figures that applied in their own survey periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveyConditions {
    pub r1: PandemicContext,
    pub r2: PandemicContext,
    pub interventions: Vec<String>,
    /// Lowest tier at which each intervention is active.
    pub activation: Vec<Tier>,
}

impl Default for SurveyConditions {
    fn default() -> Self {
        SurveyConditions {
            r1: PandemicContext {
                r0: 2.5,
                cfr: 0.02,
                pathways: vec![
                    "respiratory droplets".into(),
                    "contact".into(),
                    "contaminated cold-chain goods".into(),
                ],
                burden: Burden::Numeric {
                    confirmed_cases: 40,
                    fatalities: 0,
                },
                policy_notes: "Sporadic local clusters; normalized prevention and control in place.".into(),
            },
            r2: PandemicContext {
                r0: 5.0,
                cfr: 0.01,
                pathways: vec![
                    "respiratory droplets".into(),
                    "aerosols".into(),
                    "contact".into(),
                ],
                burden: Burden::Numeric {
                    confirmed_cases: 10,
                    fatalities: 0,
                },
                policy_notes: "Limited Delta variant transmission with targeted community controls.".into(),
            },
            interventions: DEFAULT_INTERVENTIONS.iter().map(|s| s.to_string()).collect(),
            activation: DEFAULT_ACTIVATION.to_vec(),
        }
    }
}

impl SurveyConditions {
    pub fn context(&self, round: Round) -> &PandemicContext {
        match round {
            Round::R1 => &self.r1,
            Round::R2 => &self.r2,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        self.r1.validate()?;
        self.r2.validate()?;
        ControlMeasures::for_tier(Tier::Isolation, &self.interventions, &self.activation, 1.0)?;
        Ok(())
    }

    /// Condition experienced by record `idx`: its round's context and its
    /// community's tier and mean enforcement intensity.
    pub fn condition_for(&self, dataset: &Dataset, idx: usize) -> Result<EpidemicCondition, DomainError> {
        let r = &dataset.records[idx];
        let measures = ControlMeasures::for_tier(
            r.measure_tier,
            &self.interventions,
            &self.activation,
            dataset.intensity_of(r),
        )?;
        Ok(EpidemicCondition {
            label: format!("{}_{}_{}", r.round, r.measure_tier.slug(), r.community_id),
            context: self.context(r.round).clone(),
            measures,
        })
    }
}
