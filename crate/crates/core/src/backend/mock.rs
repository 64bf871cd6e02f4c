//! Deterministic mock backend.
//!
//! The mock reads the situation back out of the prompt (tier, risk level, R0,
//! CFR, exemplars) and answers through a fixed rule layer on the logit scale:
//!
//! * behaviour logit = behaviour base + persona offset + 0.35 * tier rank
//!   + 0.12 * (intensity - 3) + 0.30 * (risk level - 3.5) + 0.20 * ln R0
//!   + 0.10 * CFR% + noise
//! * risk logit = logit(midpoint of T1 level) + 0.3 * persona offset + noise
//!   + 0.60 * ln(R0 ratio) + 0.25 * CFR% change + 0.30 * tier rank change
//!
//! Noise depends only on the seed and the basic-information section, so two
//! prompts that differ in the environment alone see identical noise and every
//! coefficient above acts monotonically. When exemplars are present the
//! logit is pulled halfway (static) or 30% (dynamic) toward the exemplars'
//! observed mean. This is a test oracle with the directions perceived-risk
//! theory predicts; it makes no claim about real residents.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use regex::Regex;
use std::sync::LazyLock;

use super::{Backend, BackendInfo, CompletionRequest, CompletionResult};
use crate::domain::{Behavior, Tier};
use crate::error::BackendError;
use crate::prompt::{
    fmt_num, DYNAMIC_FENCE, H_BASIC, H_CHANGES, H_CONTEXT, H_EXAMPLES, H_MEASURES, H_RISK,
    H_SHIFT, H_TASK, STATIC_FENCE,
};
use crate::seed::{derive_seed, hash64, unit_interval};

const BEHAVIOR_BASE: [f64; 11] = [0.2, 0.6, 1.1, 0.0, 0.1, -0.1, -0.3, -0.5, -0.2, 0.3, 0.0];

static R0_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(R0\): ([0-9.]+)(?: -> ([0-9.]+))?").unwrap());
static CFR_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(CFR\): ([0-9.]+)%(?: -> ([0-9.]+)%)?").unwrap());
static TIER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"- Control tier: ([^\n]+?)(?: -> ([^\n]+?))?(?: \(no change\))?\n").unwrap());
static INTENSITY_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"community: ([0-9.]+)(?: -> ([0-9.]+))?").unwrap());
static LEVEL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"perception level (?:is|was) ([1-6])").unwrap());
static TASK_ITEM_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^- ([a-z_]+): ").unwrap());
static OBSERVED_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^Observed: (.+)$").unwrap());
static OBSERVED_T2_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"observed at T2: ([1-6])").unwrap());

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

/// Text from `heading` up to the next top-level heading.
fn section<'a>(prompt: &'a str, heading: &str) -> &'a str {
    let Some(start) = prompt.find(heading) else {
        return "";
    };
    let rest = &prompt[start + heading.len()..];
    let end = rest.find("\n## ").unwrap_or(rest.len());
    &rest[..end]
}

fn num(s: Option<regex::Match<'_>>) -> Option<f64> {
    s.and_then(|m| m.as_str().parse().ok())
}

/// Standard normal draw from a hash, via Box-Muller.
fn gaussian(h: u64) -> f64 {
    let u1 = unit_interval(h).max(1e-12);
    let u2 = unit_interval(h.rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Inputs the static rule layer reads from a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticFeatures {
    pub persona_key: String,
    pub tier: Tier,
    pub intensity: f64,
    pub risk_level: u8,
    pub r0: f64,
    pub cfr_pct: f64,
    pub behaviors: Vec<Behavior>,
    /// Mean observed exemplar intensity per behaviour, catalog order.
    pub exemplar_means: Option<[f64; 11]>,
}

impl StaticFeatures {
    pub fn from_prompt(prompt: &str) -> StaticFeatures {
        let context = section(prompt, H_CONTEXT);
        let measures = section(prompt, H_MEASURES);
        let risk = section(prompt, H_RISK);
        let task = section(prompt, H_TASK);
        let examples = section(prompt, H_EXAMPLES);
        let measures_nl = format!("{measures}\n");
        let tier = TIER_RE
            .captures(&measures_nl)
            .and_then(|c| Tier::from_label(c.get(1)?.as_str().trim()))
            .unwrap_or(Tier::RegularPC);
        let mut behaviors: Vec<Behavior> = TASK_ITEM_RE
            .captures_iter(task)
            .filter_map(|c| Behavior::from_id(&c[1]))
            .collect();
        if behaviors.is_empty() {
            behaviors = Behavior::ALL.to_vec();
        }
        let mut sums = [0.0; 11];
        let mut count = 0usize;
        for c in OBSERVED_RE.captures_iter(examples) {
            let mut row = [0.0; 11];
            let mut complete = 0;
            for pair in c[1].split(", ") {
                if let Some((id, v)) = pair.split_once('=') {
                    if let (Some(b), Ok(v)) = (Behavior::from_id(id.trim()), v.trim().parse::<f64>()) {
                        row[b.index()] = v;
                        complete += 1;
                    }
                }
            }
            if complete == 11 {
                for i in 0..11 {
                    sums[i] += row[i];
                }
                count += 1;
            }
        }
        StaticFeatures {
            persona_key: section(prompt, H_BASIC).trim().to_string(),
            tier,
            intensity: num(INTENSITY_RE.captures(measures).and_then(|c| c.get(1))).unwrap_or(3.0),
            risk_level: num(LEVEL_RE.captures(risk).and_then(|c| c.get(1))).unwrap_or(3.0) as u8,
            r0: num(R0_RE.captures(context).and_then(|c| c.get(1))).unwrap_or(1.0),
            cfr_pct: num(CFR_RE.captures(context).and_then(|c| c.get(1))).unwrap_or(0.0),
            behaviors,
            exemplar_means: (count > 0).then(|| sums.map(|s| s / count as f64)),
        }
    }

    fn persona_offset(&self, b: Behavior) -> f64 {
        (unit_interval(hash64(&format!("{}\u{1f}{}", self.persona_key, b.id()))) - 0.5) * 1.2
    }

    /// Rule-layer probability for one behaviour, before output rounding.
    pub fn probability(&self, b: Behavior, seed: u64, noise_scale: f64) -> f64 {
        let z = gaussian(derive_seed(seed, &["static", &self.persona_key, b.id()]));
        let mut x = BEHAVIOR_BASE[b.index()]
            + self.persona_offset(b)
            + 0.35 * self.tier.rank() as f64
            + 0.12 * (self.intensity - 3.0)
            + 0.30 * (self.risk_level as f64 - 3.5)
            + 0.20 * self.r0.max(1e-6).ln()
            + 0.10 * self.cfr_pct
            + noise_scale * z;
        if let Some(means) = self.exemplar_means {
            let target = logit(((means[b.index()] - 0.5) / 5.0).clamp(0.02, 0.98));
            x = 0.5 * x + 0.5 * target;
        }
        sigmoid(x)
    }
}

/// Inputs the dynamic rule layer reads from a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicFeatures {
    pub persona_key: String,
    pub level_t1: u8,
    pub r0: (f64, f64),
    pub cfr_pct: (f64, f64),
    pub tier: (Tier, Tier),
    pub exemplar_mean_t2: Option<f64>,
}

impl DynamicFeatures {
    pub fn from_prompt(prompt: &str) -> DynamicFeatures {
        let shift = section(prompt, H_SHIFT);
        let changes = format!("{}\n", section(prompt, H_CHANGES));
        let task = section(prompt, H_TASK);
        let pair = |re: &Regex, text: &str, default: f64| -> (f64, f64) {
            match re.captures(text) {
                Some(c) => {
                    let a = num(c.get(1)).unwrap_or(default);
                    (a, num(c.get(2)).unwrap_or(a))
                }
                None => (default, default),
            }
        };
        let tier = TIER_RE
            .captures(&changes)
            .map(|c| {
                let a = c
                    .get(1)
                    .and_then(|m| Tier::from_label(m.as_str().trim()))
                    .unwrap_or(Tier::RegularPC);
                let b = c
                    .get(2)
                    .and_then(|m| Tier::from_label(m.as_str().trim()))
                    .unwrap_or(a);
                (a, b)
            })
            .unwrap_or((Tier::RegularPC, Tier::RegularPC));
        let observed: Vec<f64> = OBSERVED_T2_RE
            .captures_iter(section(prompt, H_EXAMPLES))
            .filter_map(|c| c[1].parse().ok())
            .collect();
        DynamicFeatures {
            persona_key: section(prompt, H_BASIC).trim().to_string(),
            level_t1: num(LEVEL_RE.captures(task).and_then(|c| c.get(1))).unwrap_or(3.0) as u8,
            r0: pair(&R0_RE, shift, 1.0),
            cfr_pct: pair(&CFR_RE, shift, 0.0),
            tier,
            exemplar_mean_t2: (!observed.is_empty())
                .then(|| observed.iter().sum::<f64>() / observed.len() as f64),
        }
    }

    fn base_logit(&self, seed: u64, noise_scale: f64) -> f64 {
        let midpoint = (self.level_t1 as f64 - 0.5) / 6.0;
        let offset = unit_interval(hash64(&format!("{}\u{1f}risk", self.persona_key))) - 0.5;
        let z = gaussian(derive_seed(seed, &["dynamic", &self.persona_key]));
        logit(midpoint) + 0.3 * offset + noise_scale * z
    }

    fn blend(&self, x: f64) -> f64 {
        match self.exemplar_mean_t2 {
            Some(m) => 0.7 * x + 0.3 * logit(((m - 0.5) / 6.0).clamp(0.02, 0.98)),
            None => x,
        }
    }

    /// Score the mock returns for a prompt with no environmental change.
    pub fn baseline(&self, seed: u64, noise_scale: f64) -> f64 {
        sigmoid(self.blend(self.base_logit(seed, noise_scale)))
    }

    pub fn score(&self, seed: u64, noise_scale: f64) -> f64 {
        let shift = 0.60 * (self.r0.1.max(1e-6) / self.r0.0.max(1e-6)).ln()
            + 0.25 * (self.cfr_pct.1 - self.cfr_pct.0)
            + 0.30 * (self.tier.1.rank() as f64 - self.tier.0.rank() as f64);
        sigmoid(self.blend(self.base_logit(seed, noise_scale) + shift))
    }
}

fn static_rationale(f: &StaticFeatures, b: Behavior, p: f64, seed: u64) -> String {
    let pick = derive_seed(seed, &["why", &f.persona_key, b.id()]) % 2;
    if f.risk_level >= 4 && p >= 0.5 {
        if pick == 0 {
            "My risk perception is high; I worry the virus could reach me this way.".into()
        } else {
            "I feel the infection risk around me is real, so I keep doing this.".into()
        }
    } else if p >= 0.6 {
        if f.tier.rank() >= 2 {
            "Official guidance and community rules ask for it, and it is now part of my routine.".into()
        } else {
            "It has become a habit and it is low cost, so I keep doing it.".into()
        }
    } else if p < 0.4 {
        "It is inconvenient and adds cost, and the risk seems low to me.".into()
    } else {
        "I do this sometimes, depending on how worried I feel that day.".into()
    }
}

fn dynamic_rationale(f: &DynamicFeatures, score: f64) -> String {
    let midpoint = (f.level_t1 as f64 - 0.5) / 6.0;
    if score > midpoint + 0.02 {
        "The situation has become more dangerous, so my risk perception has risen.".into()
    } else if score < midpoint - 0.02 {
        "Official guidance suggests the threat has eased, so I feel less at risk.".into()
    } else {
        "Not much has changed for me, so my concern is about the same.".into()
    }
}

/// Deterministic mock completion: a pure function of (prompt, seed).
pub fn mock_complete(request: &CompletionRequest, seed: u64) -> CompletionResult {
    MockBackend::new(seed).respond(request)
}

pub struct MockBackend {
    seed: u64,
    noise_scale: f64,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(seed: u64) -> MockBackend {
        MockBackend {
            seed,
            noise_scale: 0.3,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_noise(mut self, noise_scale: f64) -> MockBackend {
        self.noise_scale = noise_scale;
        self
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn respond(&self, request: &CompletionRequest) -> CompletionResult {
        let seed = request.seed.unwrap_or(self.seed);
        let text = if request.prompt.contains(STATIC_FENCE) {
            let f = StaticFeatures::from_prompt(&request.prompt);
            let mut lines = Vec::with_capacity(f.behaviors.len());
            for &b in &f.behaviors {
                let p = f.probability(b, seed, self.noise_scale);
                let shown = format!("{p:.4}");
                lines.push(format!("{} = {} | {}", b.id(), shown, static_rationale(&f, b, p, seed)));
            }
            format!(
                "Here are my estimates.\n{STATIC_FENCE}\n{}\n```\n",
                lines.join("\n")
            )
        } else if request.prompt.contains(DYNAMIC_FENCE) {
            let f = DynamicFeatures::from_prompt(&request.prompt);
            let score = f.score(seed, self.noise_scale);
            format!(
                "{DYNAMIC_FENCE}\nrisk_score = {}\nrationale = {}\n```\n",
                fmt_num(score),
                dynamic_rationale(&f, score)
            )
        } else {
            "I am not sure what is being asked.".to_string()
        };
        CompletionResult {
            text,
            usage: None,
            attempts: 1,
            latency: Duration::ZERO,
            retry_delays: Vec::new(),
        }
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.respond(request))
    }

    fn info(&self) -> BackendInfo {
        BackendInfo {
            kind: "mock".into(),
            model: "mock-rule-layer".into(),
            temperature: None,
            max_concurrency: usize::MAX,
        }
    }
}
