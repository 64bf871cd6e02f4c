//! Progressive validation strategies and the gating chain between them.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::domain::{Behavior, EpidemicCondition, Tier};
use crate::error::ExperimentError;
use crate::ingest::{Dataset, Round};
use crate::prompt::{DynamicExemplar, StaticExemplar, Templates};
use crate::seed::derive_seed;
use crate::sim::{BehaviorProfile, SimConfig, Simulator, Transition};
use crate::stats::{pass_rate, propensity_match, validate_behavior, KsMethod, MatchResult, Unit, ALPHA};

use super::conditions::SurveyConditions;

pub const FEW_SHOT_FRACTION: f64 = 1.0 / 3.0;
pub const MATCH_COVARIATES: [&str; 4] = ["age_range", "gender", "education", "occupation"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    ZeroShot,
    FewShot,
    Transfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Static,
    Dynamic,
}

/// Which records (static) or matched transitions (dynamic) a stage uses.
/// Empty tier lists match every tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Selector {
    Records {
        rounds: Vec<Round>,
        #[serde(default)]
        tiers: Vec<Tier>,
    },
    Transitions {
        #[serde(default)]
        t1_tiers: Vec<Tier>,
        #[serde(default)]
        t2_tiers: Vec<Tier>,
    },
}

impl Selector {
    fn records(rounds: &[Round], tiers: &[Tier]) -> Selector {
        Selector::Records {
            rounds: rounds.to_vec(),
            tiers: tiers.to_vec(),
        }
    }

    fn transitions(t1_tiers: &[Tier], t2_tiers: &[Tier]) -> Selector {
        Selector::Transitions {
            t1_tiers: t1_tiers.to_vec(),
            t2_tiers: t2_tiers.to_vec(),
        }
    }

    fn mode(&self) -> Mode {
        match self {
            Selector::Records { .. } => Mode::Static,
            Selector::Transitions { .. } => Mode::Dynamic,
        }
    }
}

fn tier_ok(tiers: &[Tier], t: Tier) -> bool {
    tiers.is_empty() || tiers.contains(&t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub name: String,
    pub kind: StrategyKind,
    pub mode: Mode,
    /// Reference pool for Transfer; FewShot draws its reference from `test`.
    #[serde(default)]
    pub reference: Option<Selector>,
    pub test: Selector,
    #[serde(default)]
    pub split_fraction: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Stages whose passing behaviours bound this stage (intersection).
    #[serde(default)]
    pub requires: Vec<String>,
}

impl StrategySpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(format!("strategy {}: {m}", self.name)));
        if self.test.mode() != self.mode {
            return bad("test selector does not match the mode");
        }
        if let Some(r) = &self.reference {
            if r.mode() != self.mode {
                return bad("reference selector does not match the mode");
            }
        }
        match self.kind {
            StrategyKind::ZeroShot => {
                if self.reference.is_some() || self.split_fraction.is_some() {
                    return bad("zero-shot takes no reference data");
                }
            }
            StrategyKind::FewShot => {
                if self.reference.is_some() {
                    return bad("few-shot splits its reference from the test selection");
                }
                match self.split_fraction {
                    Some(f) if (f - FEW_SHOT_FRACTION).abs() < 1e-9 => {}
                    _ => return bad("few-shot split fraction must be 1/3"),
                }
            }
            StrategyKind::Transfer => {
                if self.reference.is_none() {
                    return bad("transfer needs a reference selector");
                }
                if self.split_fraction.is_some() {
                    return bad("transfer does not split");
                }
            }
        }
        if self.requires.contains(&self.name) {
            return bad("a stage cannot require itself");
        }
        Ok(())
    }
}

/// The six stages of the progressive protocol with their prerequisites.
pub fn default_strategies() -> Vec<StrategySpec> {
    use StrategyKind::*;
    let all = [Tier::RegularPC, Tier::SelfHealthMonitoring, Tier::Isolation];
    let spec = |name: &str, kind, mode, reference, test, requires: &[&str]| StrategySpec {
        name: name.into(),
        kind,
        mode,
        reference,
        test,
        split_fraction: (kind == FewShot).then_some(FEW_SHOT_FRACTION),
        seed: 0,
        requires: requires.iter().map(|s| s.to_string()).collect(),
    };
    vec![
        spec(
            "zero_shot_static",
            ZeroShot,
            Mode::Static,
            None,
            Selector::records(&[Round::R1], &[Tier::RegularPC]),
            &[],
        ),
        spec(
            "few_shot_static",
            FewShot,
            Mode::Static,
            None,
            Selector::records(&[Round::R1], &[Tier::RegularPC]),
            &[],
        ),
        spec(
            "transfer_static",
            Transfer,
            Mode::Static,
            Some(Selector::records(&[Round::R1], &all)),
            Selector::records(&[Round::R2], &all),
            &["few_shot_static"],
        ),
        spec(
            "zero_shot_dynamic",
            ZeroShot,
            Mode::Dynamic,
            None,
            Selector::transitions(&[], &all),
            &["zero_shot_static"],
        ),
        spec(
            "few_shot_dynamic",
            FewShot,
            Mode::Dynamic,
            None,
            Selector::transitions(&[Tier::RegularPC], &[Tier::RegularPC]),
            &["few_shot_static"],
        ),
        spec(
            "transfer_dynamic",
            Transfer,
            Mode::Dynamic,
            Some(Selector::transitions(&[], &[Tier::RegularPC])),
            Selector::transitions(&[], &[Tier::SelfHealthMonitoring, Tier::Isolation]),
            &["transfer_static", "few_shot_dynamic"],
        ),
    ]
}

/// Seeded partition: `floor(fraction * n)` items to the reference, the rest to
/// the test set. Both parts keep the input order.
pub fn split_reference<T: Clone>(
    items: &[T],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), ExperimentError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ExperimentError::Config(format!("split fraction {fraction} outside (0, 1)")));
    }
    if items.is_empty() {
        return Err(ExperimentError::Config("nothing to split".into()));
    }
    let k = (fraction * items.len() as f64 + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let chosen: BTreeSet<usize> = order[..k].iter().copied().collect();
    let (mut reference, mut test) = (Vec::with_capacity(k), Vec::with_capacity(items.len() - k));
    for (i, item) in items.iter().enumerate() {
        if chosen.contains(&i) {
            reference.push(item.clone());
        } else {
            test.push(item.clone());
        }
    }
    Ok((reference, test))
}

/// A propensity-matched pair: R1 record (T1 state) and R2 record (T2 outcome).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedTransition {
    pub r1: usize,
    pub r2: usize,
}

fn unit(dataset: &Dataset, i: usize) -> Unit {
    let r = &dataset.records[i];
    Unit {
        id: r.participant_id.clone(),
        values: vec![
            r.age_range.clone(),
            r.gender.clone(),
            r.education.clone(),
            r.occupation.clone(),
        ],
    }
}

/// Match every R2 resident to a distinct R1 resident on demographics.
pub fn match_rounds(
    dataset: &Dataset,
    seed: u64,
) -> Result<(MatchResult, Vec<MatchedTransition>), ExperimentError> {
    let r2 = dataset.select(&[Round::R2], &[]);
    let r1 = dataset.select(&[Round::R1], &[]);
    let treated: Vec<Unit> = r2.iter().map(|&i| unit(dataset, i)).collect();
    let control: Vec<Unit> = r1.iter().map(|&i| unit(dataset, i)).collect();
    let result = propensity_match(&treated, &control, &MATCH_COVARIATES, seed)?;
    let r1_by_id: BTreeMap<&str, usize> = r1
        .iter()
        .map(|&i| (dataset.records[i].participant_id.as_str(), i))
        .collect();
    let r2_by_id: BTreeMap<&str, usize> = r2
        .iter()
        .map(|&i| (dataset.records[i].participant_id.as_str(), i))
        .collect();
    let mut pairs: Vec<MatchedTransition> = result
        .pairs
        .iter()
        .map(|p| MatchedTransition {
            r1: r1_by_id[p.control.as_str()],
            r2: r2_by_id[p.treated.as_str()],
        })
        .collect();
    pairs.sort_by_key(|p| p.r2);
    Ok((result, pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorRow {
    pub behavior: Behavior,
    pub statistic: f64,
    pub p_value: f64,
    pub n_simulated: usize,
    pub n_observed: usize,
    pub simulated_mean: f64,
    pub observed_mean: f64,
    pub pass: bool,
}

/// KS comparison of simulated and observed T2 risk levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub statistic: f64,
    pub p_value: f64,
    pub simulated_mean: f64,
    pub observed_mean: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// `all` or a tier slug.
    pub group: String,
    pub n: usize,
    pub rows: Vec<BehaviorRow>,
    pub pass_rate: Option<f64>,
    pub risk: Option<RiskRow>,
}

impl GroupReport {
    pub fn passed(&self) -> Vec<Behavior> {
        self.rows.iter().filter(|r| r.pass).map(|r| r.behavior).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingTrace {
    pub prerequisites: Vec<String>,
    pub admitted: Vec<Behavior>,
    /// A prerequisite admitted nothing, so nothing was simulated.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub group: String,
    pub behavior: Behavior,
    pub source: String,
    /// Counts of Likert values 1..=5.
    pub counts: [usize; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub strategy: String,
    pub kind: StrategyKind,
    pub mode: Mode,
    pub reference_n: usize,
    pub exemplars_shown: usize,
    pub test_n: usize,
    pub gating: GatingTrace,
    pub pooled: GroupReport,
    pub by_tier: Vec<GroupReport>,
    pub histograms: Vec<HistogramRow>,
}

impl ValidationReport {
    pub fn pass_rate(&self) -> Option<f64> {
        self.pooled.pass_rate
    }

    pub fn passed(&self) -> Vec<Behavior> {
        self.pooled.passed()
    }
}

/// Behaviours admitted by prior stages: those passing every prior, in catalog order.
pub fn gate(priors: &[&ValidationReport]) -> Vec<Behavior> {
    Behavior::ALL
        .into_iter()
        .filter(|b| priors.iter().all(|p| p.passed().contains(b)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub persona_id: String,
    pub condition: String,
    pub score: f64,
    pub level: u8,
}

/// Everything one stage produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub report: ValidationReport,
    pub profiles: Vec<BehaviorProfile>,
    pub risks: Vec<RiskRecord>,
    /// Completion log of the stage as JSON lines.
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationSettings {
    pub alpha: f64,
    pub ks_method: KsMethod,
    /// Upper bound on demonstrations per prompt, drawn from the reference pool.
    pub max_exemplars: usize,
    pub match_seed: u64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings {
            alpha: ALPHA,
            ks_method: KsMethod::Asymptotic,
            max_exemplars: 20,
            match_seed: 0,
        }
    }
}

/// One simulated test unit before aggregation.
struct Outcome {
    group: Tier,
    profile: BehaviorProfile,
    observed: [u8; 11],
    risk: Option<(RiskRecord, u8)>,
}

pub struct Experiment<'a> {
    pub dataset: &'a Dataset,
    pub conditions: &'a SurveyConditions,
    pub backend: &'a dyn Backend,
    pub templates: &'a Templates,
    pub sim: SimConfig,
    pub settings: ValidationSettings,
}

impl<'a> Experiment<'a> {
    fn condition(&self, i: usize) -> Result<EpidemicCondition, ExperimentError> {
        Ok(self.conditions.condition_for(self.dataset, i)?)
    }

    fn select_records(&self, sel: &Selector) -> Vec<usize> {
        match sel {
            Selector::Records { rounds, tiers } => self.dataset.select(rounds, tiers),
            Selector::Transitions { .. } => Vec::new(),
        }
    }

    fn select_transitions(&self, all: &[MatchedTransition], sel: &Selector) -> Vec<MatchedTransition> {
        match sel {
            Selector::Transitions { t1_tiers, t2_tiers } => all
                .iter()
                .filter(|t| tier_ok(t1_tiers, self.dataset.records[t.r1].measure_tier))
                .filter(|t| tier_ok(t2_tiers, self.dataset.records[t.r2].measure_tier))
                .copied()
                .collect(),
            Selector::Records { .. } => Vec::new(),
        }
    }

    /// Reference and test items for a stage.
    fn partition<T: Clone>(
        &self,
        spec: &StrategySpec,
        select: impl Fn(&Selector) -> Vec<T>,
    ) -> Result<(Vec<T>, Vec<T>), ExperimentError> {
        let test = select(&spec.test);
        if test.is_empty() {
            return Err(ExperimentError::Config(format!("strategy {}: empty test selection", spec.name)));
        }
        match spec.kind {
            StrategyKind::ZeroShot => Ok((Vec::new(), test)),
            StrategyKind::FewShot => split_reference(
                &test,
                spec.split_fraction.unwrap_or(FEW_SHOT_FRACTION),
                derive_seed(spec.seed, &["split", &spec.name]),
            ),
            StrategyKind::Transfer => {
                let reference = select(spec.reference.as_ref().expect("validated"));
                if reference.is_empty() {
                    return Err(ExperimentError::Config(format!(
                        "strategy {}: empty reference selection",
                        spec.name
                    )));
                }
                Ok((reference, test))
            }
        }
    }

    fn sample_exemplars<T: Clone>(&self, spec: &StrategySpec, pool: &[T]) -> Vec<T> {
        if pool.len() <= self.settings.max_exemplars {
            return pool.to_vec();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &["exemplars", &spec.name]));
        pool.choose_multiple(&mut rng, self.settings.max_exemplars)
            .cloned()
            .collect()
    }

    fn static_exemplar(&self, i: usize) -> Result<StaticExemplar, ExperimentError> {
        let p = &self.dataset.personas[i];
        let ex = StaticExemplar::new(
            p,
            &self.condition(i)?,
            p.risk_t1.level.value(),
            self.dataset.records[i].behavior_scores,
        )
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(ex)
    }

    pub fn transition(&self, t: MatchedTransition) -> Result<Transition, ExperimentError> {
        let p = &self.dataset.personas[t.r1];
        Ok(Transition {
            persona: p.clone(),
            condition_t1: self.condition(t.r1)?,
            condition_t2: self.condition(t.r2)?,
            risk_t1: p.risk_t1,
        })
    }

    /// Simulate and validate one stage over the admitted behaviours.
    pub fn run_strategy(
        &self,
        spec: &StrategySpec,
        admitted: &[Behavior],
        prerequisites: &[String],
    ) -> Result<StrategyRun, ExperimentError> {
        spec.validate()?;
        let gating = GatingTrace {
            prerequisites: prerequisites.to_vec(),
            admitted: admitted.to_vec(),
            degenerate: admitted.is_empty(),
        };
        let (reference_n, exemplars_shown, outcomes, log) = match spec.mode {
            Mode::Static => self.run_static(spec, admitted)?,
            Mode::Dynamic => self.run_dynamic(spec, admitted)?,
        };
        let test_n = outcomes.as_ref().map_or_else(|n| *n, |o| o.len());
        let outcomes = outcomes.unwrap_or_default();
        let (pooled, by_tier, histograms) = self.assemble(admitted, &outcomes)?;
        let report = ValidationReport {
            strategy: spec.name.clone(),
            kind: spec.kind,
            mode: spec.mode,
            reference_n,
            exemplars_shown,
            test_n,
            gating,
            pooled,
            by_tier,
            histograms,
        };
        let mut profiles = Vec::with_capacity(outcomes.len());
        let mut risks = Vec::new();
        for o in outcomes {
            profiles.push(o.profile);
            if let Some((r, _)) = o.risk {
                risks.push(r);
            }
        }
        Ok(StrategyRun {
            report,
            profiles,
            risks,
            log,
        })
    }

    /// Returns (reference size, exemplars shown, outcomes or the test size when
    /// skipped, completion log).
    #[allow(clippy::type_complexity)]
    fn run_static(
        &self,
        spec: &StrategySpec,
        admitted: &[Behavior],
    ) -> Result<(usize, usize, Result<Vec<Outcome>, usize>, String), ExperimentError> {
        let (reference, test) = self.partition(spec, |s| self.select_records(s))?;
        let shown = self.sample_exemplars(spec, &reference);
        if admitted.is_empty() {
            return Ok((reference.len(), shown.len(), Err(test.len()), String::new()));
        }
        let exemplars = shown
            .iter()
            .map(|&i| self.static_exemplar(i))
            .collect::<Result<Vec<_>, _>>()?;
        let sim = Simulator::new(self.backend, self.templates, self.sim.clone())?.with_behaviors(admitted)?;
        let outcomes = test
            .par_iter()
            .map(|&i| {
                let persona = &self.dataset.personas[i];
                let cond = self.condition(i)?;
                let profile = sim.simulate_static(persona, &cond, &persona.risk_t1, &exemplars)?;
                Ok(Outcome {
                    group: self.dataset.records[i].measure_tier,
                    profile,
                    observed: self.dataset.records[i].behavior_scores,
                    risk: None,
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        Ok((reference.len(), exemplars.len(), Ok(outcomes), sim.log().to_jsonl()))
    }

    #[allow(clippy::type_complexity)]
    fn run_dynamic(
        &self,
        spec: &StrategySpec,
        admitted: &[Behavior],
    ) -> Result<(usize, usize, Result<Vec<Outcome>, usize>, String), ExperimentError> {
        let (_, matched) = match_rounds(self.dataset, self.settings.match_seed)?;
        let (reference, test) = self.partition(spec, |s| self.select_transitions(&matched, s))?;
        let shown = self.sample_exemplars(spec, &reference);
        if admitted.is_empty() {
            return Ok((reference.len(), shown.len(), Err(test.len()), String::new()));
        }
        let mut dyn_ex = Vec::with_capacity(shown.len());
        let mut static_ex = Vec::with_capacity(shown.len());
        for &t in &shown {
            let tr = self.transition(t)?;
            let observed_t2 = self.dataset.personas[t.r2].risk_t1.level.value();
            dyn_ex.push(DynamicExemplar::new(
                &tr.persona,
                &tr.condition_t1,
                &tr.condition_t2,
                tr.risk_t1.level.value(),
                observed_t2,
            ));
            static_ex.push(self.static_exemplar(t.r2)?);
        }
        let sim = Simulator::new(self.backend, self.templates, self.sim.clone())?.with_behaviors(admitted)?;
        let outcomes = test
            .par_iter()
            .map(|&t| {
                let tr = self.transition(t)?;
                let (risk, profile) = sim.simulate_dynamic(&tr, &static_ex, &dyn_ex)?;
                let rec = RiskRecord {
                    persona_id: tr.persona.id.clone(),
                    condition: crate::sim::dynamic_key(&tr),
                    score: risk.score.unwrap_or(f64::NAN),
                    level: risk.level.value(),
                };
                Ok(Outcome {
                    group: self.dataset.records[t.r2].measure_tier,
                    profile,
                    observed: self.dataset.records[t.r2].behavior_scores,
                    risk: Some((rec, self.dataset.personas[t.r2].risk_t1.level.value())),
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        Ok((reference.len(), dyn_ex.len(), Ok(outcomes), sim.log().to_jsonl()))
    }

    fn group_report(&self, group: String, admitted: &[Behavior], outcomes: &[&Outcome]) -> Result<GroupReport, ExperimentError> {
        let mut rows = Vec::with_capacity(admitted.len());
        if !outcomes.is_empty() {
            for &b in admitted {
                let sim: Vec<u8> = outcomes
                    .iter()
                    .map(|o| o.profile.get(b).expect("admitted behaviour simulated").likert.value())
                    .collect();
                let obs: Vec<u8> = outcomes.iter().map(|o| o.observed[b.index()]).collect();
                let v = validate_behavior(&sim, &obs, self.settings.alpha, self.settings.ks_method)?;
                rows.push(BehaviorRow {
                    behavior: b,
                    statistic: v.ks.statistic,
                    p_value: v.ks.p_value,
                    n_simulated: sim.len(),
                    n_observed: obs.len(),
                    simulated_mean: mean_u8(&sim),
                    observed_mean: mean_u8(&obs),
                    pass: v.pass,
                });
            }
        }
        let risk = match outcomes.first().and_then(|o| o.risk.as_ref()) {
            Some(_) => {
                let sim: Vec<u8> = outcomes.iter().map(|o| o.risk.as_ref().expect("dynamic").0.level).collect();
                let obs: Vec<u8> = outcomes.iter().map(|o| o.risk.as_ref().expect("dynamic").1).collect();
                let v = validate_behavior(&sim, &obs, self.settings.alpha, self.settings.ks_method)?;
                Some(RiskRow {
                    statistic: v.ks.statistic,
                    p_value: v.ks.p_value,
                    simulated_mean: mean_u8(&sim),
                    observed_mean: mean_u8(&obs),
                    pass: v.pass,
                })
            }
            None => None,
        };
        let flags: Vec<bool> = rows.iter().map(|r| r.pass).collect();
        Ok(GroupReport {
            group,
            n: outcomes.len(),
            pass_rate: pass_rate(&flags).ok(),
            rows,
            risk,
        })
    }

    #[allow(clippy::type_complexity)]
    fn assemble(
        &self,
        admitted: &[Behavior],
        outcomes: &[Outcome],
    ) -> Result<(GroupReport, Vec<GroupReport>, Vec<HistogramRow>), ExperimentError> {
        let all: Vec<&Outcome> = outcomes.iter().collect();
        let pooled = self.group_report("all".into(), admitted, &all)?;
        let mut groups: BTreeMap<Tier, Vec<&Outcome>> = BTreeMap::new();
        for o in outcomes {
            groups.entry(o.group).or_default().push(o);
        }
        let by_tier = groups
            .iter()
            .map(|(t, os)| self.group_report(t.slug().to_string(), admitted, os))
            .collect::<Result<Vec<_>, _>>()?;
        let mut histograms = Vec::new();
        let mut push = |group: &str, os: &[&Outcome]| {
            for &b in admitted {
                let mut sim = [0usize; 5];
                let mut obs = [0usize; 5];
                for o in os {
                    sim[o.profile.get(b).expect("simulated").likert.value() as usize - 1] += 1;
                    obs[o.observed[b.index()] as usize - 1] += 1;
                }
                for (source, counts) in [("simulated", sim), ("observed", obs)] {
                    histograms.push(HistogramRow {
                        group: group.to_string(),
                        behavior: b,
                        source: source.into(),
                        counts,
                    });
                }
            }
        };
        if !all.is_empty() {
            push("all", &all);
            for (t, os) in &groups {
                push(t.slug(), os);
            }
        }
        Ok((pooled, by_tier, histograms))
    }

    /// Run `name` after its prerequisites, each stage admitting only behaviours
    /// that passed every stage it requires. Stages come back in execution order.
    pub fn run_chain(&self, name: &str, strategies: &[StrategySpec]) -> Result<Vec<StrategyRun>, ExperimentError> {
        let by_name: BTreeMap<&str, &StrategySpec> = strategies.iter().map(|s| (s.name.as_str(), s)).collect();
        let mut done: BTreeMap<String, usize> = BTreeMap::new();
        let mut runs = Vec::new();
        self.visit(name, &by_name, &mut Vec::new(), &mut done, &mut runs)?;
        Ok(runs)
    }

    fn visit(
        &self,
        name: &str,
        by_name: &BTreeMap<&str, &StrategySpec>,
        stack: &mut Vec<String>,
        done: &mut BTreeMap<String, usize>,
        runs: &mut Vec<StrategyRun>,
    ) -> Result<usize, ExperimentError> {
        if let Some(&i) = done.get(name) {
            return Ok(i);
        }
        if stack.iter().any(|s| s == name) {
            return Err(ExperimentError::Config(format!(
                "strategy prerequisites form a cycle: {} -> {name}",
                stack.join(" -> ")
            )));
        }
        let spec = by_name.get(name).ok_or_else(|| {
            ExperimentError::Config(format!(
                "unknown strategy `{name}`; defined: {}",
                by_name.keys().copied().collect::<Vec<_>>().join(", ")
            ))
        })?;
        stack.push(name.to_string());
        let mut priors = Vec::new();
        for req in &spec.requires {
            priors.push(self.visit(req, by_name, stack, done, runs)?);
        }
        stack.pop();
        let reports: Vec<&ValidationReport> = priors.iter().map(|&i| &runs[i].report).collect();
        let admitted = gate(&reports);
        let run = self.run_strategy(spec, &admitted, &spec.requires)?;
        runs.push(run);
        done.insert(name.to_string(), runs.len() - 1);
        Ok(runs.len() - 1)
    }
}

fn mean_u8(v: &[u8]) -> f64 {
    v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64
}
