//! Shared vocabulary: the behaviour catalog, scale types, epidemic conditions
//! and the probability-to-Likert discretization used by every other module.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Broad grouping of a prevention behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    RespiratoryProtection,
    PersonalHygiene,
    DisinfectionRoutine,
    DisinfectionSituational,
    FoodSafety,
    EnvironmentalMaintenance,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::RespiratoryProtection => "respiratory protection",
            Category::PersonalHygiene => "personal hygiene",
            Category::DisinfectionRoutine => "disinfection (routine)",
            Category::DisinfectionSituational => "disinfection (situational)",
            Category::FoodSafety => "food safety",
            Category::EnvironmentalMaintenance => "environmental maintenance",
        }
    }
}

/// One of the eleven tracked prevention behaviours.
///
/// Variant order is the catalog order; reports and prompts iterate in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    MaskGreenSpaces,
    MaskElevators,
    HandWashing,
    ToiletLid,
    DisinfectDrainSeals,
    DisinfectHome,
    DisinfectCarriedItems,
    DisinfectPackaging,
    ServingUtensils,
    AvoidFrozenFood,
    MaintainDrainSeals,
}

impl Behavior {
    pub const ALL: [Behavior; 11] = [
        Behavior::MaskGreenSpaces,
        Behavior::MaskElevators,
        Behavior::HandWashing,
        Behavior::ToiletLid,
        Behavior::DisinfectDrainSeals,
        Behavior::DisinfectHome,
        Behavior::DisinfectCarriedItems,
        Behavior::DisinfectPackaging,
        Behavior::ServingUtensils,
        Behavior::AvoidFrozenFood,
        Behavior::MaintainDrainSeals,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Behavior::MaskGreenSpaces => "mask_green_spaces",
            Behavior::MaskElevators => "mask_elevators",
            Behavior::HandWashing => "hand_washing",
            Behavior::ToiletLid => "toilet_lid",
            Behavior::DisinfectDrainSeals => "disinfect_drain_seals",
            Behavior::DisinfectHome => "disinfect_home",
            Behavior::DisinfectCarriedItems => "disinfect_carried_items",
            Behavior::DisinfectPackaging => "disinfect_packaging",
            Behavior::ServingUtensils => "serving_utensils",
            Behavior::AvoidFrozenFood => "avoid_frozen_food",
            Behavior::MaintainDrainSeals => "maintain_drain_seals",
        }
    }

    pub fn default_label(self) -> &'static str {
        match self {
            Behavior::MaskGreenSpaces => "mask wearing in community green spaces",
            Behavior::MaskElevators => "mask wearing in elevators",
            Behavior::HandWashing => "hand washing after returning home",
            Behavior::ToiletLid => "closing toilet lids when flushing",
            Behavior::DisinfectDrainSeals => "regularly disinfecting drain water seals",
            Behavior::DisinfectHome => "regularly disinfecting home environment",
            Behavior::DisinfectCarriedItems => "disinfecting items carried outside",
            Behavior::DisinfectPackaging => "disinfecting online purchase packaging",
            Behavior::ServingUtensils => "using separate serving utensils",
            Behavior::AvoidFrozenFood => "avoiding frozen food purchases",
            Behavior::MaintainDrainSeals => "maintaining drain water seals",
        }
    }

    pub fn category(self) -> Category {
        match self {
            Behavior::MaskGreenSpaces | Behavior::MaskElevators => Category::RespiratoryProtection,
            Behavior::HandWashing | Behavior::ToiletLid => Category::PersonalHygiene,
            Behavior::DisinfectDrainSeals | Behavior::DisinfectHome => {
                Category::DisinfectionRoutine
            }
            Behavior::DisinfectCarriedItems | Behavior::DisinfectPackaging => {
                Category::DisinfectionSituational
            }
            Behavior::ServingUtensils | Behavior::AvoidFrozenFood => Category::FoodSafety,
            Behavior::MaintainDrainSeals => Category::EnvironmentalMaintenance,
        }
    }

    /// Position in the catalog, 0-based.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_id(id: &str) -> Option<Behavior> {
        Behavior::ALL.into_iter().find(|b| b.id() == id)
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Behavior {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Behavior::from_id(s).ok_or_else(|| DomainError::UnknownBehavior(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorSpec {
    pub id: String,
    pub label: String,
    pub category: Category,
    #[serde(skip)]
    pub behavior: Option<Behavior>,
}

/// The eleven-entry behaviour catalog, with optionally overridden labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    specs: Vec<BehaviorSpec>,
}

impl Default for Catalog {
    fn default() -> Self {
        let specs = Behavior::ALL
            .into_iter()
            .map(|b| BehaviorSpec {
                id: b.id().to_string(),
                label: b.default_label().to_string(),
                category: b.category(),
                behavior: Some(b),
            })
            .collect();
        Catalog { specs }
    }
}

impl Catalog {
    /// Default catalog with some labels replaced. Keys are behaviour ids.
    pub fn with_labels(overrides: &BTreeMap<String, String>) -> Result<Catalog, DomainError> {
        let mut catalog = Catalog::default();
        for (id, label) in overrides {
            let b: Behavior = id.parse()?;
            catalog.specs[b.index()].label = label.clone();
        }
        Ok(catalog)
    }

    pub fn specs(&self) -> &[BehaviorSpec] {
        &self.specs
    }

    pub fn label(&self, b: Behavior) -> &str {
        &self.specs[b.index()].label
    }

    /// Find a behaviour by id or by (case-insensitive) label.
    pub fn lookup(&self, key: &str) -> Result<&BehaviorSpec, DomainError> {
        let key = key.trim();
        self.specs
            .iter()
            .find(|s| s.id == key || s.label.eq_ignore_ascii_case(key))
            .ok_or_else(|| DomainError::UnknownBehavior(key.to_string()))
    }
}

/// The fixed catalog in its documented order.
pub fn behavior_catalog() -> Vec<BehaviorSpec> {
    Catalog::default().specs
}

/// Cardinality of a Likert scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScalePoints {
    /// Behaviour intensity, 1 = never adopted .. 5 = always adopted.
    Five,
    /// Risk perception, 1 = unclear/unconcerned .. 6 = extremely concerned.
    Six,
}

impl ScalePoints {
    pub fn count(self) -> u8 {
        match self {
            ScalePoints::Five => 5,
            ScalePoints::Six => 6,
        }
    }

    pub fn from_count(n: u8) -> Result<ScalePoints, DomainError> {
        match n {
            5 => Ok(ScalePoints::Five),
            6 => Ok(ScalePoints::Six),
            other => Err(DomainError::UnsupportedScale(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LikertScore {
    value: u8,
    points: ScalePoints,
}

impl LikertScore {
    pub fn new(value: u8, points: ScalePoints) -> Result<LikertScore, DomainError> {
        if value == 0 || value > points.count() {
            return Err(DomainError::LikertOutOfRange {
                value: value as i64,
                points: points.count(),
            });
        }
        Ok(LikertScore { value, points })
    }

    pub fn value(self) -> u8 {
        self.value
    }

    pub fn points(self) -> ScalePoints {
        self.points
    }

    /// Centre of the probability bin this level covers.
    pub fn midpoint(self) -> f64 {
        (self.value as f64 - 0.5) / self.points.count() as f64
    }
}

/// A probability in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(p: f64) -> Result<Probability, DomainError> {
        if p.is_finite() && (0.0..=1.0).contains(&p) {
            Ok(Probability(p))
        } else {
            Err(DomainError::ProbabilityOutOfRange(p))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = DomainError;
    fn try_from(p: f64) -> Result<Self, Self::Error> {
        Probability::new(p)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Map a probability onto an equidistant Likert scale.
///
/// Bin `k` covers `[(k-1)/n, k/n)`; the top bin is closed at 1.0.
pub fn discretize(p: f64, points: ScalePoints) -> Result<LikertScore, DomainError> {
    let p = Probability::new(p)?.get();
    let n = points.count();
    // floor(p * n) can land one bin low when k/n is not representable, so
    // settle the bin against the exact boundaries.
    let mut k = ((p * n as f64).floor() as i64).clamp(0, n as i64 - 1) as u8;
    while k > 0 && p < k as f64 / n as f64 {
        k -= 1;
    }
    while k + 1 < n && p >= (k + 1) as f64 / n as f64 {
        k += 1;
    }
    LikertScore::new(k + 1, points)
}

/// Community prevention-and-control tier, weakest to strictest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "no_pc")]
    NoPC,
    #[serde(rename = "regular_pc")]
    RegularPC,
    #[serde(rename = "self_health_monitoring")]
    SelfHealthMonitoring,
    #[serde(rename = "isolation")]
    Isolation,
}

impl Tier {
    pub const ALL: [Tier; 4] = [
        Tier::NoPC,
        Tier::RegularPC,
        Tier::SelfHealthMonitoring,
        Tier::Isolation,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Tier::NoPC => "no_pc",
            Tier::RegularPC => "regular_pc",
            Tier::SelfHealthMonitoring => "self_health_monitoring",
            Tier::Isolation => "isolation",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Tier::NoPC => "No P&C",
            Tier::RegularPC => "Regular P&C",
            Tier::SelfHealthMonitoring => "Self-Health Monitoring",
            Tier::Isolation => "Isolation",
        }
    }

    /// 0 for NoPC up to 3 for Isolation.
    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: &str) -> Option<Tier> {
        Tier::ALL.into_iter().find(|t| t.label() == label)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Tier {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' ', '&'], "_");
        match norm.as_str() {
            "no_pc" | "nopc" | "no_p_c" | "none" => Ok(Tier::NoPC),
            "regular_pc" | "regular" | "regularpc" | "regular_p_c" | "r" => Ok(Tier::RegularPC),
            "self_health_monitoring" | "selfhealthmonitoring" | "shm" | "s" => {
                Ok(Tier::SelfHealthMonitoring)
            }
            "isolation" | "i" => Ok(Tier::Isolation),
            _ => Err(DomainError::UnknownTier(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Burden {
    Numeric { confirmed_cases: u64, fatalities: u64 },
    Qualitative { descriptors: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PandemicContext {
    pub r0: f64,
    /// Case fatality rate as a fraction (0.015 = 1.5%).
    pub cfr: f64,
    pub pathways: Vec<String>,
    pub burden: Burden,
    #[serde(default)]
    pub policy_notes: String,
}

impl PandemicContext {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.r0.is_finite() && self.r0 > 0.0) {
            return Err(DomainError::InvalidContext(format!("r0 must be > 0, got {}", self.r0)));
        }
        if !(self.cfr.is_finite() && (0.0..1.0).contains(&self.cfr)) {
            return Err(DomainError::InvalidContext(format!(
                "cfr must be in [0, 1), got {}",
                self.cfr
            )));
        }
        if let Burden::Qualitative { descriptors } = &self.burden {
            if descriptors.is_empty() {
                return Err(DomainError::InvalidContext(
                    "qualitative burden needs at least one descriptor".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterventionStatus {
    Active,
    Cancelled,
}

impl InterventionStatus {
    pub fn label(self) -> &'static str {
        match self {
            InterventionStatus::Active => "Active",
            InterventionStatus::Cancelled => "Cancelled",
        }
    }
}

pub const INTERVENTION_SLOTS: usize = 9;

/// Default intervention names. The first four are the enforcement elements named
/// for the policy-relaxation period; the rest are placeholders meant to be
/// replaced through configuration.
pub const DEFAULT_INTERVENTIONS: [&str; INTERVENTION_SLOTS] = [
    "nucleic acid testing",
    "venue code scanning",
    "public-space capacity restrictions",
    "community lockdown protocols",
    "entrance temperature checks",
    "visitor registration",
    "mask mandate in shared spaces",
    "home quarantine for arrivals",
    "closure of community facilities",
];

/// Lowest tier at which each default intervention slot is active.
pub const DEFAULT_ACTIVATION: [Tier; INTERVENTION_SLOTS] = [
    Tier::SelfHealthMonitoring,
    Tier::RegularPC,
    Tier::RegularPC,
    Tier::Isolation,
    Tier::RegularPC,
    Tier::RegularPC,
    Tier::RegularPC,
    Tier::SelfHealthMonitoring,
    Tier::Isolation,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub name: String,
    pub status: InterventionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlMeasures {
    pub tier: Tier,
    pub interventions: Vec<Intervention>,
    /// Community mean enforcement score, in survey scale units.
    pub intensity: f64,
}

impl ControlMeasures {
    /// Interventions switched on according to `activation`, everything off for NoPC.
    pub fn for_tier(
        tier: Tier,
        names: &[String],
        activation: &[Tier],
        intensity: f64,
    ) -> Result<ControlMeasures, DomainError> {
        if names.len() != INTERVENTION_SLOTS || activation.len() != INTERVENTION_SLOTS {
            return Err(DomainError::InterventionSlots(names.len().min(activation.len())));
        }
        let interventions = names
            .iter()
            .zip(activation)
            .map(|(name, min_tier)| Intervention {
                name: name.clone(),
                status: if tier != Tier::NoPC && tier >= *min_tier {
                    InterventionStatus::Active
                } else {
                    InterventionStatus::Cancelled
                },
            })
            .collect();
        let m = ControlMeasures {
            tier,
            interventions,
            intensity,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn default_for_tier(tier: Tier, intensity: f64) -> ControlMeasures {
        let names: Vec<String> = DEFAULT_INTERVENTIONS.iter().map(|s| s.to_string()).collect();
        ControlMeasures::for_tier(tier, &names, &DEFAULT_ACTIVATION, intensity)
            .expect("default intervention table is well formed")
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.interventions.len() != INTERVENTION_SLOTS {
            return Err(DomainError::InterventionSlots(self.interventions.len()));
        }
        if self.tier == Tier::NoPC
            && self
                .interventions
                .iter()
                .any(|i| i.status != InterventionStatus::Cancelled)
        {
            return Err(DomainError::InvalidMeasures(
                "NoPC requires every intervention to be Cancelled".into(),
            ));
        }
        if !self.intensity.is_finite() {
            return Err(DomainError::InvalidMeasures("intensity must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicCondition {
    pub label: String,
    pub context: PandemicContext,
    pub measures: ControlMeasures,
}

impl EpidemicCondition {
    pub fn validate(&self) -> Result<(), DomainError> {
        self.context.validate()?;
        self.measures.validate()
    }
}
