//! Static behaviour simulation and the dynamic T1 -> T2 pipeline.
//!
//! Each task is repeated `repetitions` times with per-repetition seeds; the
//! per-behaviour mean probability is discretized once. Results are keyed by
//! repetition index before averaging, so completion order never matters.

use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, CompletionRequest};
use crate::domain::{discretize, Behavior, EpidemicCondition, LikertScore, ScalePoints};
use crate::error::{PromptError, SimError};
use crate::ingest::{Period, Persona, RiskPerception};
use crate::prompt::{
    build_dynamic_prompt, build_static_prompt, parse_dynamic_response,
    parse_static_response_for, DynamicExemplar, DynamicPromptInputs, StaticExemplar,
    StaticPromptInputs, Templates, FORMAT_REMINDER,
};
use crate::seed::{derive_seed, hash_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub repetitions: u32,
    pub master_seed: u64,
    /// Extra attempts, with a format reminder, when a response does not parse.
    pub parse_retries: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            repetitions: 10,
            master_seed: 0,
            parse_retries: 2,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.repetitions < 1 {
            return Err(SimError::Config("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorOutcome {
    pub behavior: Behavior,
    pub mean_probability: f64,
    pub likert: LikertScore,
    /// One rationale per repetition, in repetition order.
    pub rationales: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub persona_id: String,
    pub condition: String,
    pub repetition_count: u32,
    pub outcomes: Vec<BehaviorOutcome>,
}

impl BehaviorProfile {
    pub fn get(&self, b: Behavior) -> Option<&BehaviorOutcome> {
        self.outcomes.iter().find(|o| o.behavior == b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub persona: Persona,
    pub condition_t1: EpidemicCondition,
    pub condition_t2: EpidemicCondition,
    pub risk_t1: RiskPerception,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Static,
    Dynamic,
}

impl TaskKind {
    fn tag(self) -> &'static str {
        match self {
            TaskKind::Static => "static",
            TaskKind::Dynamic => "dynamic",
        }
    }
}

/// One completion, as persisted in the JSON-lines run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub persona: String,
    pub condition: String,
    pub kind: TaskKind,
    pub repetition: u32,
    pub attempt: u32,
    pub seed: u64,
    pub prompt_hash: String,
    pub raw: String,
    /// Parsed values keyed by behaviour id (static) or `risk_score` (dynamic);
    /// `None` when the response did not parse.
    pub parsed: Option<Vec<(String, f64)>>,
}

#[derive(Default)]
pub struct RunLog {
    entries: Mutex<Vec<LogEntry>>,
}

impl RunLog {
    pub fn push(&self, e: LogEntry) {
        self.entries.lock().expect("run log poisoned").push(e);
    }

    /// Entries in a canonical order, independent of completion order.
    pub fn sorted(&self) -> Vec<LogEntry> {
        let mut v = self.entries.lock().expect("run log poisoned").clone();
        v.sort_by(|a, b| {
            (&a.persona, &a.condition, a.kind, a.repetition, a.attempt)
                .cmp(&(&b.persona, &b.condition, b.kind, b.repetition, b.attempt))
        });
        v
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("run log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.sorted() {
            out.push_str(&serde_json::to_string(&e).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }
}

/// Mean per behaviour from a run log alone; used to audit reported profiles.
pub fn replay_means(log: &[LogEntry], persona: &str, condition: &str) -> Vec<(String, f64)> {
    let mut sums: std::collections::BTreeMap<String, (f64, u32)> = Default::default();
    for e in log
        .iter()
        .filter(|e| e.persona == persona && e.condition == condition && e.kind == TaskKind::Static)
    {
        if let Some(values) = &e.parsed {
            for (k, v) in values {
                let s = sums.entry(k.clone()).or_default();
                s.0 += v;
                s.1 += 1;
            }
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

pub struct Simulator<'a> {
    backend: &'a dyn Backend,
    templates: &'a Templates,
    config: SimConfig,
    behaviors: Vec<Behavior>,
    log: RunLog,
}

impl<'a> Simulator<'a> {
    pub fn new(backend: &'a dyn Backend, templates: &'a Templates, config: SimConfig) -> Result<Simulator<'a>, SimError> {
        config.validate()?;
        Ok(Simulator {
            backend,
            templates,
            config,
            behaviors: Behavior::ALL.to_vec(),
            log: RunLog::default(),
        })
    }

    /// Restrict static simulation to a subset of the catalog.
    pub fn with_behaviors(mut self, behaviors: &[Behavior]) -> Result<Simulator<'a>, SimError> {
        let mut v = behaviors.to_vec();
        v.sort();
        v.dedup();
        if v.is_empty() {
            return Err(SimError::Config("behavior set is empty".into()));
        }
        self.behaviors = v;
        Ok(self)
    }

    pub fn behaviors(&self) -> &[Behavior] {
        &self.behaviors
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn repetition_seed(&self, kind: TaskKind, persona: &str, condition: &str, k: u32) -> u64 {
        derive_seed(
            self.config.master_seed,
            &[kind.tag(), persona, condition, &k.to_string()],
        )
    }

    /// One repetition: complete, parse, retry with a format reminder on parse failure.
    fn run_repetition<T>(
        &self,
        kind: TaskKind,
        persona: &str,
        condition: &str,
        prompt: &str,
        k: u32,
        parse: impl Fn(&str) -> Result<(T, Vec<(String, f64)>), PromptError>,
    ) -> Result<T, SimError> {
        let seed = self.repetition_seed(kind, persona, condition, k);
        let mut text = prompt.to_string();
        let mut last_err = None;
        for attempt in 0..=self.config.parse_retries {
            let attempt_seed = if attempt == 0 {
                seed
            } else {
                derive_seed(seed, &["retry", &attempt.to_string()])
            };
            let result = self
                .backend
                .complete(&CompletionRequest::new(text.clone()).with_seed(attempt_seed))?;
            let parsed = parse(&result.text);
            self.log.push(LogEntry {
                persona: persona.to_string(),
                condition: condition.to_string(),
                kind,
                repetition: k,
                attempt,
                seed: attempt_seed,
                prompt_hash: hash_hex(&text),
                raw: result.text.clone(),
                parsed: parsed.as_ref().ok().map(|(_, v)| v.clone()),
            });
            match parsed {
                Ok((value, _)) => return Ok(value),
                Err(e) => {
                    last_err = Some(e);
                    if attempt == 0 {
                        text.push_str(FORMAT_REMINDER);
                    }
                }
            }
        }
        Err(SimError::ParseExhausted {
            attempts: self.config.parse_retries + 1,
            last: last_err.expect("at least one attempt"),
        })
    }

    pub fn simulate_static(
        &self,
        persona: &Persona,
        condition: &EpidemicCondition,
        risk: &RiskPerception,
        exemplars: &[StaticExemplar],
    ) -> Result<BehaviorProfile, SimError> {
        let prompt = build_static_prompt(
            self.templates,
            &StaticPromptInputs {
                persona,
                condition,
                risk,
                exemplars,
                behaviors: &self.behaviors,
            },
        )?;
        let behaviors = &self.behaviors;
        let reps: Vec<_> = (0..self.config.repetitions)
            .into_par_iter()
            .map(|k| {
                self.run_repetition(TaskKind::Static, &persona.id, &condition.label, &prompt, k, |text| {
                    let r = parse_static_response_for(text, behaviors)?;
                    let values = r
                        .estimates
                        .iter()
                        .map(|e| (e.behavior.id().to_string(), e.probability.get()))
                        .collect();
                    Ok((r, values))
                })
                .map_err(|e| SimError::Repetition {
                    persona: persona.id.clone(),
                    condition: condition.label.clone(),
                    kind: "static",
                    repetition: k,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_, _>>()?;

        let n = reps.len() as f64;
        let outcomes = behaviors
            .iter()
            .map(|&b| {
                let mut sum = 0.0;
                let mut rationales = Vec::with_capacity(reps.len());
                for r in &reps {
                    let e = r.get(b).expect("parser guarantees every requested behavior");
                    sum += e.probability.get();
                    rationales.push(e.rationale.clone());
                }
                let mean = (sum / n).clamp(0.0, 1.0);
                Ok(BehaviorOutcome {
                    behavior: b,
                    mean_probability: mean,
                    likert: discretize(mean, ScalePoints::Five)?,
                    rationales,
                })
            })
            .collect::<Result<_, SimError>>()?;
        Ok(BehaviorProfile {
            persona_id: persona.id.clone(),
            condition: condition.label.clone(),
            repetition_count: self.config.repetitions,
            outcomes,
        })
    }

    /// Mean of `repetitions` dynamic risk scores, discretized to six points.
    pub fn update_risk(
        &self,
        transition: &Transition,
        exemplars: &[DynamicExemplar],
    ) -> Result<RiskPerception, SimError> {
        let (risk, _) = self.update_risk_with_rationales(transition, exemplars)?;
        Ok(risk)
    }

    pub fn update_risk_with_rationales(
        &self,
        transition: &Transition,
        exemplars: &[DynamicExemplar],
    ) -> Result<(RiskPerception, Vec<String>), SimError> {
        let prompt = build_dynamic_prompt(
            self.templates,
            &DynamicPromptInputs {
                persona: &transition.persona,
                condition_t1: &transition.condition_t1,
                condition_t2: &transition.condition_t2,
                risk_t1: &transition.risk_t1,
                exemplars,
            },
        )?;
        let key = dynamic_key(transition);
        let reps: Vec<_> = (0..self.config.repetitions)
            .into_par_iter()
            .map(|k| {
                self.run_repetition(TaskKind::Dynamic, &transition.persona.id, &key, &prompt, k, |text| {
                    let r = parse_dynamic_response(text)?;
                    let v = vec![("risk_score".to_string(), r.risk_score.get())];
                    Ok((r, v))
                })
                .map_err(|e| SimError::Repetition {
                    persona: transition.persona.id.clone(),
                    condition: key.clone(),
                    kind: "dynamic",
                    repetition: k,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_, _>>()?;
        let mean = reps.iter().map(|r| r.risk_score.get()).sum::<f64>() / reps.len() as f64;
        let risk = RiskPerception::from_score(mean.clamp(0.0, 1.0), Period::T2)?;
        Ok((risk, reps.into_iter().map(|r| r.rationale).collect()))
    }

    /// Update risk, then run the static module under the T2 condition.
    pub fn simulate_dynamic(
        &self,
        transition: &Transition,
        static_exemplars: &[StaticExemplar],
        dynamic_exemplars: &[DynamicExemplar],
    ) -> Result<(RiskPerception, BehaviorProfile), SimError> {
        let risk_t2 = self.update_risk(transition, dynamic_exemplars)?;
        let profile = self.simulate_static(
            &transition.persona,
            &transition.condition_t2,
            &risk_t2,
            static_exemplars,
        )?;
        Ok((risk_t2, profile))
    }
}

/// Log key for a transition: `<t1 label>-><t2 label>`.
pub fn dynamic_key(t: &Transition) -> String {
    format!("{}->{}", t.condition_t1.label, t.condition_t2.label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendInfo, CompletionResult, MockBackend, DynamicFeatures};
    use crate::domain::{Burden, ControlMeasures, PandemicContext, Tier};
    use crate::error::BackendError;
    use crate::prompt::STATIC_FENCE;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::time::Duration;

    fn persona(id: &str, level: u8) -> Persona {
        Persona {
            id: id.into(),
            virtual_name: "Li Wei".into(),
            age: 41,
            gender: "male".into(),
            education: "senior high".into(),
            occupation: "service worker".into(),
            community_id: "c01".into(),
            risk_t1: RiskPerception::from_level(level, Period::T1).unwrap(),
        }
    }

    fn condition(label: &str, tier: Tier, r0: f64) -> EpidemicCondition {
        EpidemicCondition {
            label: label.into(),
            context: PandemicContext {
                r0,
                cfr: 0.01,
                pathways: vec!["respiratory droplets".into()],
                burden: Burden::Numeric {
                    confirmed_cases: 5,
                    fatalities: 0,
                },
                policy_notes: String::new(),
            },
            measures: ControlMeasures::default_for_tier(tier, 3.0),
        }
    }

    /// Always answers with the same probability for every behaviour.
    struct Constant(f64);

    impl Backend for Constant {
        fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
            let text = if req.prompt.contains(STATIC_FENCE) {
                let lines: Vec<_> = Behavior::ALL
                    .iter()
                    .filter(|b| req.prompt.contains(&format!("- {}: ", b.id())))
                    .map(|b| format!("{} = {} | same", b.id(), self.0))
                    .collect();
                format!("{STATIC_FENCE}\n{}\n```", lines.join("\n"))
            } else {
                format!("```dynamic-response\nrisk_score = {}\nrationale = same\n```", self.0)
            };
            Ok(CompletionResult {
                text,
                usage: None,
                attempts: 1,
                latency: Duration::ZERO,
                retry_delays: vec![],
            })
        }
        fn info(&self) -> BackendInfo {
            BackendInfo {
                kind: "constant".into(),
                model: "constant".into(),
                temperature: None,
                max_concurrency: 1,
            }
        }
    }

    /// Garbles the first `bad` calls, then defers to the mock.
    struct Flaky {
        bad: u32,
        calls: AtomicU32,
        inner: MockBackend,
    }

    impl Backend for Flaky {
        fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            let mut r = self.inner.complete(req)?;
            if n < self.bad {
                r.text = "I would rather not say.".into();
            }
            Ok(r)
        }
        fn info(&self) -> BackendInfo {
            self.inner.info()
        }
    }

    fn sim<'a>(b: &'a dyn Backend, t: &'a Templates, reps: u32) -> Simulator<'a> {
        Simulator::new(
            b,
            t,
            SimConfig {
                repetitions: reps,
                master_seed: 42,
                parse_retries: 2,
            },
        )
        .unwrap()
    }

    #[test]
    fn single_repetition_discretizes_the_one_probability() {
        let t = Templates::default();
        let mock = MockBackend::new(0);
        let s = sim(&mock, &t, 1);
        let p = persona("a", 3);
        let prof = s.simulate_static(&p, &condition("c", Tier::RegularPC, 2.0), &p.risk_t1, &[]).unwrap();
        let log = s.log().sorted();
        assert_eq!(log.len(), 1);
        for o in &prof.outcomes {
            let raw = log[0]
                .parsed
                .as_ref()
                .unwrap()
                .iter()
                .find(|(k, _)| k == o.behavior.id())
                .unwrap()
                .1;
            assert_eq!(o.mean_probability, raw);
            assert_eq!(o.likert, discretize(raw, ScalePoints::Five).unwrap());
        }
    }

    #[test]
    fn constant_sequence_averages_to_itself() {
        let t = Templates::default();
        let b = Constant(0.83);
        let s = sim(&b, &t, 10);
        let p = persona("a", 3);
        let prof = s.simulate_static(&p, &condition("c", Tier::RegularPC, 2.0), &p.risk_t1, &[]).unwrap();
        for o in &prof.outcomes {
            assert!((o.mean_probability - 0.83).abs() < 1e-12);
            assert_eq!(o.likert.value(), 5);
            assert_eq!(o.rationales.len(), 10);
        }
        let tr = Transition {
            persona: p.clone(),
            condition_t1: condition("c", Tier::RegularPC, 2.0),
            condition_t2: condition("c", Tier::RegularPC, 2.0),
            risk_t1: p.risk_t1,
        };
        let half = Constant(0.5);
        let s = sim(&half, &t, 10);
        let r = s.update_risk(&tr, &[]).unwrap();
        assert_eq!(r.score, Some(0.5));
        assert_eq!(r.level.value(), 4);
        assert_eq!(r.period, Period::T2);
    }

    #[test]
    fn means_replay_from_the_log() {
        let t = Templates::default();
        let mock = MockBackend::new(0);
        let s = sim(&mock, &t, 10);
        let p = persona("a", 5);
        let c = condition("c", Tier::Isolation, 5.0);
        let prof = s.simulate_static(&p, &c, &p.risk_t1, &[]).unwrap();
        let log = s.log().sorted();
        assert_eq!(log.len(), 10);
        let replayed = replay_means(&log, "a", "c");
        for (id, mean) in replayed {
            let o = prof.get(id.parse().unwrap()).unwrap();
            assert!((o.mean_probability - mean).abs() < 1e-12);
            let reps: Vec<f64> = log
                .iter()
                .map(|e| e.parsed.as_ref().unwrap().iter().find(|(k, _)| *k == id).unwrap().1)
                .collect();
            let lo = reps.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = reps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo - 1e-12 <= o.mean_probability && o.mean_probability <= hi + 1e-12);
        }
    }

    #[test]
    fn dynamic_replay_and_no_shift_baseline() {
        let t = Templates::default();
        let mock = MockBackend::new(0);
        let s = sim(&mock, &t, 10);
        let p = persona("a", 3);
        let c = condition("c", Tier::RegularPC, 3.0);
        let tr = Transition {
            persona: p.clone(),
            condition_t1: c.clone(),
            condition_t2: c.clone(),
            risk_t1: p.risk_t1,
        };
        let r = s.update_risk(&tr, &[]).unwrap();
        let log = s.log().sorted();
        let scores: Vec<f64> = log.iter().map(|e| e.parsed.as_ref().unwrap()[0].1).collect();
        assert_eq!(scores.len(), 10);
        let mean = scores.iter().sum::<f64>() / 10.0;
        assert!((r.score.unwrap() - mean).abs() < 1e-12);

        // the mock's no-shift rule returns its persona baseline for each repetition seed
        let prompt = build_dynamic_prompt(
            &t,
            &DynamicPromptInputs {
                persona: &p,
                condition_t1: &c,
                condition_t2: &c,
                risk_t1: &p.risk_t1,
                exemplars: &[],
            },
        )
        .unwrap();
        let f = DynamicFeatures::from_prompt(&prompt);
        let key = dynamic_key(&tr);
        let baseline = (0..10)
            .map(|k| {
                let seed = s.repetition_seed(TaskKind::Dynamic, "a", &key, k);
                crate::prompt::fmt_num(f.baseline(seed, mock.noise_scale())).parse::<f64>().unwrap()
            })
            .sum::<f64>()
            / 10.0;
        assert!((r.score.unwrap() - baseline).abs() < 1e-12);
    }

    #[test]
    fn dynamic_profile_equals_direct_static_call() {
        let t = Templates::default();
        let mock = MockBackend::new(0);
        let s = sim(&mock, &t, 4);
        let p = persona("a", 2);
        let tr = Transition {
            persona: p.clone(),
            condition_t1: condition("t1", Tier::RegularPC, 2.0),
            condition_t2: condition("t2", Tier::Isolation, 7.0),
            risk_t1: p.risk_t1,
        };
        let (risk, prof) = s.simulate_dynamic(&tr, &[], &[]).unwrap();
        let direct = s.simulate_static(&p, &tr.condition_t2, &risk, &[]).unwrap();
        assert_eq!(prof, direct);
        // same labels (hence same seeds) with no shift between periods
        let still = Transition {
            condition_t2: EpidemicCondition {
                label: "t2".into(),
                ..tr.condition_t1.clone()
            },
            ..tr.clone()
        };
        let base = s.update_risk(&still, &[]).unwrap();
        assert!(risk.score.unwrap() >= base.score.unwrap());
    }

    #[test]
    fn parse_failures_are_retried_then_surface() {
        let t = Templates::default();
        let flaky = Flaky {
            bad: 1,
            calls: AtomicU32::new(0),
            inner: MockBackend::new(0),
        };
        let s = sim(&flaky, &t, 1);
        let p = persona("a", 3);
        let c = condition("c", Tier::RegularPC, 2.0);
        assert!(s.simulate_static(&p, &c, &p.risk_t1, &[]).is_ok());
        let log = s.log().sorted();
        assert_eq!(log.len(), 2);
        assert!(log[0].parsed.is_none());
        assert_ne!(log[0].prompt_hash, log[1].prompt_hash);

        let hopeless = Flaky {
            bad: 100,
            calls: AtomicU32::new(0),
            inner: MockBackend::new(0),
        };
        let s = sim(&hopeless, &t, 1);
        match s.simulate_static(&p, &c, &p.risk_t1, &[]) {
            Err(SimError::Repetition { repetition, source, .. }) => {
                assert_eq!(repetition, 0);
                assert!(matches!(*source, SimError::ParseExhausted { attempts: 3, .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn behavior_subset_is_respected() {
        let t = Templates::default();
        let mock = MockBackend::new(0);
        let s = sim(&mock, &t, 2)
            .with_behaviors(&[Behavior::ToiletLid, Behavior::HandWashing])
            .unwrap();
        let p = persona("a", 3);
        let prof = s.simulate_static(&p, &condition("c", Tier::RegularPC, 2.0), &p.risk_t1, &[]).unwrap();
        let got: Vec<_> = prof.outcomes.iter().map(|o| o.behavior).collect();
        assert_eq!(got, vec![Behavior::HandWashing, Behavior::ToiletLid]);
        assert!(sim(&mock, &t, 1).with_behaviors(&[]).is_err());
    }

    #[test]
    fn zero_repetitions_rejected() {
        let t = Templates::default();
        let mock = MockBackend::new(0);
        assert!(Simulator::new(&mock, &t, SimConfig { repetitions: 0, ..Default::default() }).is_err());
    }
}
