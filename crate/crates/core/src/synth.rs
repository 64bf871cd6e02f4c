//! Synthetic survey data shaped like the two-round resident survey.
//!
//! The real instrument is not distributable, so tests, examples and the
//! `synth` subcommand all run on data from this generator. Round 2 residents
//! are deliberately younger and better educated than round 1 so that
//! propensity matching has confounding to remove.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Behavior, Tier};
use crate::ingest::{Round, SurveyRecord, RISK_PATHWAY_ITEMS, RISK_SCENARIO_ITEMS};

pub const AGE_BRACKETS: [&str; 5] = ["18-29", "30-39", "40-49", "50-59", "60-75"];
pub const GENDERS: [&str; 2] = ["female", "male"];
pub const EDUCATION: [&str; 4] = ["junior high or below", "senior high", "bachelor", "postgraduate"];
pub const OCCUPATIONS: [&str; 6] = [
    "office worker",
    "service worker",
    "retired",
    "student",
    "self-employed",
    "civil servant",
];

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_r1: usize,
    pub n_r2: usize,
    pub seed: u64,
    /// Round-1 tier mix as weights over (regular, self-health monitoring, isolation).
    pub r1_tier_weights: [f64; 3],
    pub r2_tier_weights: [f64; 3],
    pub communities_per_tier: usize,
}

impl SynthSpec {
    /// Sizes of the original survey rounds: 980 and 120 residents.
    pub fn survey_sized(seed: u64) -> SynthSpec {
        SynthSpec::small(980, 120, seed)
    }

    pub fn small(n_r1: usize, n_r2: usize, seed: u64) -> SynthSpec {
        SynthSpec {
            n_r1,
            n_r2,
            seed,
            r1_tier_weights: [0.6, 0.2, 0.2],
            r2_tier_weights: [1.0, 1.0, 1.0],
            communities_per_tier: 3,
        }
    }
}

const SURVEY_TIERS: [Tier; 3] = [Tier::RegularPC, Tier::SelfHealthMonitoring, Tier::Isolation];

// Latent behaviour baselines on the 1..5 scale, catalog order.
const BEHAVIOR_BASE: [f64; 11] = [3.4, 3.9, 4.3, 3.2, 3.3, 3.1, 2.9, 2.7, 3.0, 3.6, 3.2];

fn pick_weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Approximately normal noise (Irwin-Hall, 4 terms), scaled to unit variance.
fn noise<R: Rng>(rng: &mut R) -> f64 {
    let s: f64 = (0..4).map(|_| rng.random::<f64>()).sum();
    (s - 2.0) * 3f64.sqrt()
}

fn generate_round<R: Rng>(rng: &mut R, round: Round, n: usize, spec: &SynthSpec) -> Vec<SurveyRecord> {
    let (tier_weights, age_w, edu_w, prefix, risk_shift): (_, &[f64], &[f64], _, f64) = match round {
        Round::R1 => (
            spec.r1_tier_weights,
            &[0.18, 0.22, 0.22, 0.2, 0.18],
            &[0.25, 0.3, 0.35, 0.1],
            "c",
            0.3,
        ),
        Round::R2 => (
            spec.r2_tier_weights,
            &[0.3, 0.28, 0.2, 0.14, 0.08],
            &[0.12, 0.25, 0.43, 0.2],
            "d",
            -0.2,
        ),
    };
    let per_tier = spec.communities_per_tier.max(1);
    (0..n)
        .map(|i| {
            let t = pick_weighted(rng, &tier_weights);
            let tier = SURVEY_TIERS[t];
            let community = t * per_tier + rng.random_range(0..per_tier);
            let age = pick_weighted(rng, age_w);
            let edu = pick_weighted(rng, edu_w);
            let occupation = if age == 4 && rng.random::<f64>() < 0.7 {
                2
            } else if age == 0 && rng.random::<f64>() < 0.35 {
                3
            } else {
                [0usize, 1, 4, 5][rng.random_range(0..4)]
            };

            let enforcement = (2.0 + 0.7 * t as f64 + 0.4 * noise(rng)).clamp(1.0, 5.0);
            let enforcement = (enforcement * 10.0).round() / 10.0;

            let latent_risk = 3.4 + risk_shift + 0.15 * age as f64 + 0.2 * t as f64 + 0.6 * noise(rng);
            let risk_items: Vec<u8> = (0..RISK_PATHWAY_ITEMS + RISK_SCENARIO_ITEMS)
                .map(|_| (latent_risk + 0.7 * noise(rng)).round().clamp(1.0, 6.0) as u8)
                .collect();
            let mut behavior_scores = [0u8; 11];
            for b in Behavior::ALL {
                let v = BEHAVIOR_BASE[b.index()]
                    + 0.15 * t as f64
                    + 0.25 * (latent_risk - 3.5)
                    + 0.08 * edu as f64
                    + 0.8 * noise(rng);
                behavior_scores[b.index()] = v.round().clamp(1.0, 5.0) as u8;
            }
            SurveyRecord {
                participant_id: format!("{round}-{:04}", i + 1),
                round,
                age_range: AGE_BRACKETS[age].to_string(),
                gender: GENDERS[rng.random_range(0..2)].to_string(),
                education: EDUCATION[edu].to_string(),
                occupation: OCCUPATIONS[occupation].to_string(),
                community_id: format!("{prefix}{:02}", community + 1),
                measure_tier: tier,
                enforcement_score: enforcement,
                risk_items,
                behavior_scores,
            }
        })
        .collect()
}

/// Round-1 records followed by round-2 records, deterministic in the spec.
pub fn synthetic_survey(spec: &SynthSpec) -> Vec<SurveyRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = generate_round(&mut rng, Round::R1, spec.n_r1, spec);
    out.extend(generate_round(&mut rng, Round::R2, spec.n_r2, spec));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_ranges() {
        let recs = synthetic_survey(&SynthSpec::survey_sized(1));
        assert_eq!(recs.iter().filter(|r| r.round == Round::R1).count(), 980);
        assert_eq!(recs.iter().filter(|r| r.round == Round::R2).count(), 120);
        for r in &recs {
            assert!(r.behavior_scores.iter().all(|v| (1..=5).contains(v)));
            assert!(r.risk_items.iter().all(|v| (1..=6).contains(v)));
            assert_eq!(r.risk_items.len(), 14);
        }
        assert_eq!(recs, synthetic_survey(&SynthSpec::survey_sized(1)));
    }
}
