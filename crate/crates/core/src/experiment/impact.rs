//! Disinfectant discharge and by-product estimates from a change in intensity.

use serde::{Deserialize, Serialize};

use crate::error::ExperimentError;

/// Per-capita annual increments per unit of mean disinfection intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpactCoefficients {
    /// Liters of disinfectant per person per year.
    pub volume_l: f64,
    /// Milligrams of disinfection by-products per person per year.
    pub dbp_mg: f64,
}

impl Default for ImpactCoefficients {
    fn default() -> Self {
        // calibrated on a 2.62 -> 3.83 rise giving 11.2 L and 13.4 mg per person
        ImpactCoefficients {
            volume_l: 11.2 / 1.21,
            dbp_mg: 13.4 / 1.21,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactEstimate {
    pub intensity_from: f64,
    pub intensity_to: f64,
    pub population: f64,
    pub per_capita_volume_l: f64,
    pub per_capita_dbp_mg: f64,
    pub total_volume_l: f64,
    /// Total volume in metric tons at unit density.
    pub total_tons: f64,
    pub total_dbp_kg: f64,
    /// Intensity fell, so the figures are avoided rather than added discharge.
    pub avoided: bool,
}

pub fn environmental_impact(
    intensity_from: f64,
    intensity_to: f64,
    population: f64,
    coefficients: ImpactCoefficients,
) -> Result<ImpactEstimate, ExperimentError> {
    if !(population.is_finite() && population > 0.0) {
        return Err(ExperimentError::Config(format!("population must be > 0, got {population}")));
    }
    for v in [intensity_from, intensity_to] {
        if !(1.0..=5.0).contains(&v) {
            return Err(ExperimentError::Config(format!("intensity {v} outside 1..=5")));
        }
    }
    let delta = intensity_to - intensity_from;
    let per_capita_volume_l = coefficients.volume_l * delta;
    let per_capita_dbp_mg = coefficients.dbp_mg * delta;
    let total_volume_l = per_capita_volume_l * population;
    Ok(ImpactEstimate {
        intensity_from,
        intensity_to,
        population,
        per_capita_volume_l,
        per_capita_dbp_mg,
        total_volume_l,
        total_tons: total_volume_l / 1000.0,
        total_dbp_kg: per_capita_dbp_mg * population / 1e6,
        avoided: delta < 0.0,
    })
}
