//! Scenario grids and the policy-relaxation condition.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{
    Burden, ControlMeasures, EpidemicCondition, Intervention, InterventionStatus, PandemicContext,
    Tier, DEFAULT_INTERVENTIONS,
};
use crate::error::ExperimentError;
use crate::prompt::fmt_num;

/// Factor levels of a scenario sweep. CFR levels are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub cfr_percent: Vec<f64>,
    pub r0: Vec<f64>,
    pub tiers: Vec<Tier>,
    pub pathways: Vec<String>,
    /// Community enforcement intensity used for every grid condition.
    pub intensity: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            cfr_percent: vec![0.1, 0.5, 1.5, 3.0, 5.0],
            r0: vec![0.8, 2.0, 3.0, 5.0, 7.0, 10.0],
            tiers: Tier::ALL.to_vec(),
            pathways: vec!["respiratory droplets".into(), "aerosols".into(), "contact".into()],
            intensity: 3.0,
        }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.cfr_percent.len() * self.r0.len() * self.tiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn grid_label(cfr_percent: f64, r0: f64, tier: Tier) -> String {
    format!("cfr{}_r0{}_{}", fmt_num(cfr_percent), fmt_num(r0), tier.slug())
}

fn check_levels(name: &str, levels: &[f64]) -> Result<(), ExperimentError> {
    if levels.is_empty() {
        return Err(ExperimentError::Config(format!("grid: no {name} levels")));
    }
    let mut seen = BTreeSet::new();
    for v in levels {
        if !v.is_finite() {
            return Err(ExperimentError::Config(format!("grid: non-finite {name} level")));
        }
        if !seen.insert(v.to_bits()) {
            return Err(ExperimentError::Config(format!("grid: duplicate {name} level {v}")));
        }
    }
    Ok(())
}

/// Full product in (cfr, r0, tier) order.
pub fn make_grid(spec: &GridSpec) -> Result<Vec<EpidemicCondition>, ExperimentError> {
    check_levels("cfr", &spec.cfr_percent)?;
    check_levels("r0", &spec.r0)?;
    if spec.tiers.is_empty() {
        return Err(ExperimentError::Config("grid: no tiers".into()));
    }
    if spec.tiers.iter().collect::<BTreeSet<_>>().len() != spec.tiers.len() {
        return Err(ExperimentError::Config("grid: duplicate tier".into()));
    }
    let mut out = Vec::with_capacity(spec.len());
    for &cfr in &spec.cfr_percent {
        for &r0 in &spec.r0 {
            for &tier in &spec.tiers {
                let c = EpidemicCondition {
                    label: grid_label(cfr, r0, tier),
                    context: PandemicContext {
                        r0,
                        cfr: cfr / 100.0,
                        pathways: spec.pathways.clone(),
                        burden: Burden::Qualitative {
                            descriptors: vec![format!(
                                "sustained community transmission with R0 {} and case fatality rate {}%",
                                fmt_num(r0),
                                fmt_num(cfr)
                            )],
                        },
                        policy_notes: String::new(),
                    },
                    measures: ControlMeasures::default_for_tier(tier, spec.intensity),
                };
                c.validate()?;
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// The December 2022 relaxation period: highly transmissible, low lethality,
/// every intervention lifted and official case reporting discontinued.
pub fn policy_relaxation_condition() -> EpidemicCondition {
    EpidemicCondition {
        label: "policy_relaxation".into(),
        context: PandemicContext {
            r0: 10.0,
            cfr: 0.0005,
            pathways: vec!["respiratory droplets".into(), "aerosols".into(), "contact".into()],
            burden: Burden::Qualitative {
                descriptors: vec![
                    "rapid widespread infection".into(),
                    "surging case numbers".into(),
                    "official daily case reporting discontinued".into(),
                ],
            },
            policy_notes: "On 7 December 2022 the national optimization package ended mass nucleic acid \
                           testing, venue code scanning, capacity limits in public spaces and community \
                           lockdowns; infected residents with mild symptoms recover at home."
                .into(),
        },
        measures: ControlMeasures {
            tier: Tier::NoPC,
            interventions: DEFAULT_INTERVENTIONS
                .iter()
                .map(|n| Intervention {
                    name: n.to_string(),
                    status: InterventionStatus::Cancelled,
                })
                .collect(),
            intensity: 1.0,
        },
    }
}
