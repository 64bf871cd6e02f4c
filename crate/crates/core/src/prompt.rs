//! Prompt construction and response parsing.
//!
//! The static prompt has five components (basic information, pandemic
//! context, community control measures, risk perception, task setting) and the
//! dynamic prompt four (basic information, pandemic shift, control-measure
//! changes, task setting). Component bodies are rendered here; the surrounding
//! framing comes from a template with `{{name}}` placeholders so it can be
//! reworded or localized without touching code.
//!
//! Responses must contain one fenced block labelled `static-response` or
//! `dynamic-response`; anything outside the block is ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{Behavior, Burden, Catalog, EpidemicCondition, Probability};
use crate::error::PromptError;
use crate::ingest::{Period, Persona, RiskPerception};

pub const DEFAULT_STATIC_TEMPLATE: &str = include_str!("../templates/static.txt");
pub const DEFAULT_DYNAMIC_TEMPLATE: &str = include_str!("../templates/dynamic.txt");

pub const STATIC_FENCE: &str = "```static-response";
pub const DYNAMIC_FENCE: &str = "```dynamic-response";

pub const H_BASIC: &str = "## Basic Information";
pub const H_CONTEXT: &str = "## Pandemic Context";
pub const H_MEASURES: &str = "## Community Control Measures";
pub const H_RISK: &str = "## Environmental Risk Perception";
pub const H_SHIFT: &str = "## Pandemic Shift (T1 to T2)";
pub const H_CHANGES: &str = "## Community Control Measure Changes (T1 to T2)";
pub const H_EXAMPLES: &str = "## Reference Examples";
pub const H_TASK: &str = "## Task Setting";

pub const FORMAT_REMINDER: &str = "\n\nYour previous reply could not be read. Reply again with exactly one fenced block in the required format, one line per requested item, and probabilities written as plain decimals between 0 and 1.";

const STATIC_SLOTS: [&str; 6] = [
    "basic_information",
    "pandemic_context",
    "control_measures",
    "risk_perception",
    "exemplars",
    "task",
];
const DYNAMIC_SLOTS: [&str; 5] = [
    "basic_information",
    "pandemic_shift",
    "control_changes",
    "exemplars",
    "task",
];

/// A template with a fixed, ordered set of `{{slot}}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    text: String,
}

impl Template {
    fn checked(text: &str, slots: &[&str]) -> Result<Template, PromptError> {
        let mut last = 0usize;
        for slot in slots {
            let marker = format!("{{{{{slot}}}}}");
            let hits: Vec<_> = text.match_indices(&marker).collect();
            if hits.len() != 1 {
                return Err(PromptError::Template(format!(
                    "placeholder {marker} must appear exactly once, found {}",
                    hits.len()
                )));
            }
            if hits[0].0 < last {
                return Err(PromptError::Template(format!("placeholder {marker} is out of order")));
            }
            last = hits[0].0;
        }
        if text.matches("{{").count() != slots.len() {
            return Err(PromptError::Template("unknown placeholder in template".into()));
        }
        Ok(Template {
            text: text.to_string(),
        })
    }

    fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = self.text.clone();
        for (slot, value) in values {
            out = out.replace(&format!("{{{{{slot}}}}}"), value);
        }
        out
    }
}

/// Prompt templates plus the catalog labels they render.
#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    pub static_template: Template,
    pub dynamic_template: Template,
    pub catalog: Catalog,
}

impl Default for Templates {
    fn default() -> Self {
        Templates::new(DEFAULT_STATIC_TEMPLATE, DEFAULT_DYNAMIC_TEMPLATE, Catalog::default())
            .expect("bundled templates are valid")
    }
}

impl Templates {
    pub fn new(static_text: &str, dynamic_text: &str, catalog: Catalog) -> Result<Templates, PromptError> {
        Ok(Templates {
            static_template: Template::checked(static_text, &STATIC_SLOTS)?,
            dynamic_template: Template::checked(dynamic_text, &DYNAMIC_SLOTS)?,
            catalog,
        })
    }
}

/// Observed outcome of one reference resident, shown as a demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticExemplar {
    pub resident: String,
    pub tier_label: String,
    pub r0: f64,
    pub cfr: f64,
    pub risk_level: u8,
    /// Observed 1..=5 intensities in catalog order.
    pub observed: [u8; 11],
}

impl StaticExemplar {
    pub fn new(
        persona: &Persona,
        condition: &EpidemicCondition,
        risk_level: u8,
        observed: [u8; 11],
    ) -> Result<StaticExemplar, PromptError> {
        if observed.iter().any(|v| !(1..=5).contains(v)) {
            return Err(PromptError::Input(format!(
                "exemplar {} has a behavior score outside 1..=5",
                persona.id
            )));
        }
        Ok(StaticExemplar {
            resident: resident_summary(persona),
            tier_label: condition.measures.tier.label().to_string(),
            r0: condition.context.r0,
            cfr: condition.context.cfr,
            risk_level,
            observed,
        })
    }
}

/// Observed T2 risk level of one reference transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicExemplar {
    pub resident: String,
    pub tier_t1: String,
    pub tier_t2: String,
    pub r0: (f64, f64),
    pub cfr: (f64, f64),
    pub risk_t1: u8,
    pub observed_t2: u8,
}

impl DynamicExemplar {
    pub fn new(
        persona: &Persona,
        t1: &EpidemicCondition,
        t2: &EpidemicCondition,
        risk_t1: u8,
        observed_t2: u8,
    ) -> DynamicExemplar {
        DynamicExemplar {
            resident: resident_summary(persona),
            tier_t1: t1.measures.tier.label().to_string(),
            tier_t2: t2.measures.tier.label().to_string(),
            r0: (t1.context.r0, t2.context.r0),
            cfr: (t1.context.cfr, t2.context.cfr),
            risk_t1,
            observed_t2,
        }
    }
}

pub struct StaticPromptInputs<'a> {
    pub persona: &'a Persona,
    pub condition: &'a EpidemicCondition,
    pub risk: &'a RiskPerception,
    pub exemplars: &'a [StaticExemplar],
    /// Behaviours the task asks about, normally the whole catalog.
    pub behaviors: &'a [Behavior],
}

pub struct DynamicPromptInputs<'a> {
    pub persona: &'a Persona,
    pub condition_t1: &'a EpidemicCondition,
    pub condition_t2: &'a EpidemicCondition,
    pub risk_t1: &'a RiskPerception,
    pub exemplars: &'a [DynamicExemplar],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEstimate {
    pub behavior: Behavior,
    pub probability: Probability,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticResponse {
    /// One entry per requested behaviour, in catalog order.
    pub estimates: Vec<BehaviorEstimate>,
}

impl StaticResponse {
    pub fn get(&self, b: Behavior) -> Option<&BehaviorEstimate> {
        self.estimates.iter().find(|e| e.behavior == b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicResponse {
    pub risk_score: Probability,
    pub rationale: String,
}

/// Decimal rendering without float noise: at most six places, trailing zeros trimmed.
pub fn fmt_num(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn resident_summary(p: &Persona) -> String {
    format!(
        "{} years old, {}, {}, {}",
        p.age, p.gender, p.education, p.occupation
    )
}

fn basic_information(p: &Persona) -> String {
    format!(
        "{H_BASIC}\nMy name is {}. I am {} years old and my gender is {}. My education level is {} and my occupation is {}. I live in residential community {} in Beijing.",
        p.virtual_name, p.age, p.gender, p.education, p.occupation, p.community_id
    )
}

fn burden_text(b: &Burden) -> String {
    match b {
        Burden::Numeric {
            confirmed_cases,
            fatalities,
        } => format!("{confirmed_cases} confirmed cases and {fatalities} fatalities reported"),
        Burden::Qualitative { descriptors } => format!(
            "{} (official case counts are no longer published)",
            descriptors.join("; ")
        ),
    }
}

fn pandemic_context(c: &EpidemicCondition) -> String {
    let ctx = &c.context;
    let mut s = format!(
        "{H_CONTEXT}\n- Basic reproduction number (R0): {}\n- Case fatality rate (CFR): {}%\n- Transmission pathways: {}\n- Epidemic burden: {}",
        fmt_num(ctx.r0),
        fmt_num(ctx.cfr * 100.0),
        ctx.pathways.join("; "),
        burden_text(&ctx.burden),
    );
    if !ctx.policy_notes.is_empty() {
        let _ = write!(s, "\n- Current policy: {}", ctx.policy_notes);
    }
    s
}

fn control_measures(c: &EpidemicCondition) -> String {
    let m = &c.measures;
    let mut s = format!(
        "{H_MEASURES}\n- Control tier: {}\n- Enforcement intensity in my community: {} (mean resident rating)\n- Interventions:",
        m.tier.label(),
        fmt_num(m.intensity)
    );
    for i in &m.interventions {
        let _ = write!(s, "\n  - {}: {}", i.name, i.status.label());
    }
    s
}

fn risk_section(r: &RiskPerception) -> String {
    format!(
        "{H_RISK}\nMy environmental risk perception level is {} on a scale from 1 (unclear/unconcerned) to 6 (extremely concerned).",
        r.level.value()
    )
}

fn static_exemplars(ex: &[StaticExemplar]) -> String {
    if ex.is_empty() {
        return String::new();
    }
    let mut s = format!(
        "{H_EXAMPLES}\nObserved residents in comparable situations (behavior intensity 1 = never adopted, 5 = always adopted):\n"
    );
    for (i, e) in ex.iter().enumerate() {
        let observed = Behavior::ALL
            .iter()
            .map(|b| format!("{}={}", b.id(), e.observed[b.index()]))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = write!(
            s,
            "\n### Example {}\nResident: {}; control tier: {}; R0 {}; CFR {}%; risk perception level {} of 6\nObserved: {}\n",
            i + 1,
            e.resident,
            e.tier_label,
            fmt_num(e.r0),
            fmt_num(e.cfr * 100.0),
            e.risk_level,
            observed
        );
    }
    s.push('\n');
    s
}

fn static_task(catalog: &Catalog, behaviors: &[Behavior]) -> String {
    let mut s = format!(
        "{H_TASK}\nThinking as myself, estimate for each behavior below the probability (a number between 0 and 1) that I carry it out in the current situation, and give the reason behind each estimate.\n"
    );
    for b in behaviors {
        let _ = write!(s, "\n- {}: {}", b.id(), catalog.label(*b));
    }
    let _ = write!(
        s,
        "\n\nReply with exactly one block in this format, one line per behavior, and nothing else inside the block:\n{STATIC_FENCE}\n<behavior id> = <probability> | <rationale in one sentence>\n```"
    );
    s
}

fn sorted_behaviors(behaviors: &[Behavior]) -> Result<Vec<Behavior>, PromptError> {
    let mut v = behaviors.to_vec();
    v.sort();
    let n = v.len();
    v.dedup();
    if v.len() != n {
        return Err(PromptError::Input("duplicate behavior in request".into()));
    }
    if v.is_empty() {
        return Err(PromptError::Input("no behaviors requested".into()));
    }
    Ok(v)
}

pub fn build_static_prompt(t: &Templates, inputs: &StaticPromptInputs<'_>) -> Result<String, PromptError> {
    inputs
        .condition
        .validate()
        .map_err(|e| PromptError::Input(e.to_string()))?;
    let behaviors = sorted_behaviors(inputs.behaviors)?;
    let basic = basic_information(inputs.persona);
    let context = pandemic_context(inputs.condition);
    let measures = control_measures(inputs.condition);
    let risk = risk_section(inputs.risk);
    let exemplars = static_exemplars(inputs.exemplars);
    let task = static_task(&t.catalog, &behaviors);
    Ok(t.static_template.render(&[
        ("basic_information", &basic),
        ("pandemic_context", &context),
        ("control_measures", &measures),
        ("risk_perception", &risk),
        ("exemplars", &exemplars),
        ("task", &task),
    ]))
}

fn shift_line(label: &str, from: String, to: String) -> String {
    if from == to {
        format!("- {label}: {from} (no change)")
    } else {
        format!("- {label}: {from} -> {to}")
    }
}

fn pandemic_shift(t1: &EpidemicCondition, t2: &EpidemicCondition) -> String {
    let (a, b) = (&t1.context, &t2.context);
    let mut lines = vec![
        H_SHIFT.to_string(),
        shift_line("Basic reproduction number (R0)", fmt_num(a.r0), fmt_num(b.r0)),
        shift_line(
            "Case fatality rate (CFR)",
            format!("{}%", fmt_num(a.cfr * 100.0)),
            format!("{}%", fmt_num(b.cfr * 100.0)),
        ),
        shift_line("Transmission pathways", a.pathways.join("; "), b.pathways.join("; ")),
        shift_line("Epidemic burden", burden_text(&a.burden), burden_text(&b.burden)),
    ];
    if !(a.policy_notes.is_empty() && b.policy_notes.is_empty()) {
        lines.push(shift_line(
            "Policy",
            a.policy_notes.clone(),
            b.policy_notes.clone(),
        ));
    }
    lines.join("\n")
}

fn control_changes(t1: &EpidemicCondition, t2: &EpidemicCondition) -> String {
    let (a, b) = (&t1.measures, &t2.measures);
    let mut lines = vec![
        H_CHANGES.to_string(),
        shift_line("Control tier", a.tier.label().into(), b.tier.label().into()),
        shift_line(
            "Enforcement intensity in my community",
            fmt_num(a.intensity),
            fmt_num(b.intensity),
        ),
        "- Interventions:".to_string(),
    ];
    for (x, y) in a.interventions.iter().zip(&b.interventions) {
        let name = if x.name == y.name {
            x.name.clone()
        } else {
            format!("{} / {}", x.name, y.name)
        };
        lines.push(format!(
            "  {}",
            shift_line(&name, x.status.label().into(), y.status.label().into())
        ));
    }
    lines.join("\n")
}

fn dynamic_exemplars(ex: &[DynamicExemplar]) -> String {
    if ex.is_empty() {
        return String::new();
    }
    let mut s = format!(
        "{H_EXAMPLES}\nObserved residents who went through a comparable change (risk perception 1 = unclear/unconcerned, 6 = extremely concerned):\n"
    );
    for (i, e) in ex.iter().enumerate() {
        let _ = write!(
            s,
            "\n### Example {}\nResident: {}; control tier {} -> {}; R0 {} -> {}; CFR {}% -> {}%\nRisk perception level at T1: {}; observed at T2: {}\n",
            i + 1,
            e.resident,
            e.tier_t1,
            e.tier_t2,
            fmt_num(e.r0.0),
            fmt_num(e.r0.1),
            fmt_num(e.cfr.0 * 100.0),
            fmt_num(e.cfr.1 * 100.0),
            e.risk_t1,
            e.observed_t2
        );
    }
    s.push('\n');
    s
}

fn dynamic_task(risk_t1: &RiskPerception) -> String {
    format!(
        "{H_TASK}\nAt T1 my environmental risk perception level was {} on a scale from 1 (unclear/unconcerned) to 6 (extremely concerned). Considering the changes above, estimate my environmental risk perception now, at T2, as a continuous score between 0 and 1 where higher means more concerned, and explain the reason.\n\nReply with exactly one block in this format:\n{DYNAMIC_FENCE}\nrisk_score = <number between 0 and 1>\nrationale = <one or two sentences>\n```",
        risk_t1.level.value()
    )
}

pub fn build_dynamic_prompt(t: &Templates, inputs: &DynamicPromptInputs<'_>) -> Result<String, PromptError> {
    if inputs.risk_t1.period != Period::T1 {
        return Err(PromptError::Input("risk_t1 must refer to period T1".into()));
    }
    for c in [inputs.condition_t1, inputs.condition_t2] {
        c.validate().map_err(|e| PromptError::Input(e.to_string()))?;
    }
    let basic = basic_information(inputs.persona);
    let shift = pandemic_shift(inputs.condition_t1, inputs.condition_t2);
    let changes = control_changes(inputs.condition_t1, inputs.condition_t2);
    let exemplars = dynamic_exemplars(inputs.exemplars);
    let task = dynamic_task(inputs.risk_t1);
    Ok(t.dynamic_template.render(&[
        ("basic_information", &basic),
        ("pandemic_shift", &shift),
        ("control_changes", &changes),
        ("exemplars", &exemplars),
        ("task", &task),
    ]))
}

/// Body lines of the first fenced block opened by `fence`.
fn fenced_block<'a>(text: &'a str, fence: &str) -> Result<Vec<&'a str>, PromptError> {
    let start = text.find(fence).ok_or_else(|| PromptError::Parse {
        reason: format!("no {fence} block"),
        raw: text.to_string(),
    })?;
    let body = &text[start + fence.len()..];
    let end = body.find("```").ok_or_else(|| PromptError::Parse {
        reason: "unterminated response block".into(),
        raw: text.to_string(),
    })?;
    Ok(body[..end]
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect())
}

fn parse_probability(field: &str, value: &str, raw: &str) -> Result<Probability, PromptError> {
    let v: f64 = value.trim().parse().map_err(|_| PromptError::Parse {
        reason: format!("`{}` for {field} is not a number", value.trim()),
        raw: raw.to_string(),
    })?;
    Probability::new(v).map_err(|_| PromptError::OutOfRange {
        field: field.to_string(),
        value: v,
        raw: raw.to_string(),
    })
}

/// Parse a response covering the whole catalog.
pub fn parse_static_response(text: &str) -> Result<StaticResponse, PromptError> {
    parse_static_response_for(text, &Behavior::ALL)
}

/// Parse a response that must cover exactly `expected`.
pub fn parse_static_response_for(text: &str, expected: &[Behavior]) -> Result<StaticResponse, PromptError> {
    let mut found: BTreeMap<Behavior, BehaviorEstimate> = BTreeMap::new();
    for line in fenced_block(text, STATIC_FENCE)? {
        let (id, rest) = line.split_once('=').ok_or_else(|| PromptError::Parse {
            reason: format!("line `{line}` has no `=`"),
            raw: text.to_string(),
        })?;
        let id = id.trim();
        let behavior = Behavior::from_id(id)
            .filter(|b| expected.contains(b))
            .ok_or_else(|| PromptError::Parse {
                reason: format!("unexpected behavior `{id}`"),
                raw: text.to_string(),
            })?;
        let (prob, rationale) = rest.split_once('|').unwrap_or((rest, ""));
        let probability = parse_probability(id, prob, text)?;
        let estimate = BehaviorEstimate {
            behavior,
            probability,
            rationale: rationale.trim().to_string(),
        };
        if found.insert(behavior, estimate).is_some() {
            return Err(PromptError::DuplicateBehavior {
                behavior: id.to_string(),
                raw: text.to_string(),
            });
        }
    }
    let mut wanted = expected.to_vec();
    wanted.sort();
    wanted.dedup();
    if let Some(missing) = wanted.iter().find(|b| !found.contains_key(b)) {
        return Err(PromptError::MissingBehavior {
            behavior: missing.id().to_string(),
            raw: text.to_string(),
        });
    }
    Ok(StaticResponse {
        estimates: found.into_values().collect(),
    })
}

pub fn parse_dynamic_response(text: &str) -> Result<DynamicResponse, PromptError> {
    let mut score = None;
    let mut rationale = None;
    for line in fenced_block(text, DYNAMIC_FENCE)? {
        let (key, value) = line.split_once('=').ok_or_else(|| PromptError::Parse {
            reason: format!("line `{line}` has no `=`"),
            raw: text.to_string(),
        })?;
        match key.trim() {
            "risk_score" if score.is_none() => {
                score = Some(parse_probability("risk_score", value, text)?)
            }
            "rationale" if rationale.is_none() => rationale = Some(value.trim().to_string()),
            other => {
                return Err(PromptError::Parse {
                    reason: format!("unexpected or repeated key `{other}`"),
                    raw: text.to_string(),
                })
            }
        }
    }
    let risk_score = score.ok_or_else(|| PromptError::Parse {
        reason: "missing risk_score".into(),
        raw: text.to_string(),
    })?;
    Ok(DynamicResponse {
        risk_score,
        rationale: rationale.unwrap_or_default(),
    })
}


#[cfg(test)]
mod roundtrip {
    use super::*;
    use proptest::prelude::*;

    // Test-only renderer, independent of the mock backend's.
    fn render_fixture(r: &StaticResponse) -> String {
        let mut s = String::from("Here is my answer.\n");
        s.push_str(STATIC_FENCE);
        s.push('\n');
        for e in r.estimates.iter().rev() {
            s.push_str(&format!("{} = {} | {}\n", e.behavior.id(), e.probability.get(), e.rationale));
        }
        s.push_str("```\nThanks.");
        s
    }

    proptest! {
        #[test]
        fn static_response_roundtrip(
            probs in proptest::collection::vec(0.0f64..=1.0, 11),
            rationales in proptest::collection::vec("[a-zA-Z][a-zA-Z ,.'|]{0,40}[a-zA-Z.]", 11),
        ) {
            let r = StaticResponse {
                estimates: Behavior::ALL
                    .iter()
                    .zip(probs.iter().zip(&rationales))
                    .map(|(b, (p, t))| BehaviorEstimate {
                        behavior: *b,
                        probability: Probability::new(*p).unwrap(),
                        rationale: t.clone(),
                    })
                    .collect(),
            };
            prop_assert_eq!(parse_static_response(&render_fixture(&r)).unwrap(), r);
        }
    }
}
