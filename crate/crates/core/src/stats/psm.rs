//! Propensity score matching on categorical covariates.
//!
//! Scores come from a logistic regression of group membership on one-hot
//! covariates (first level of each covariate as reference). Treated units are
//! visited in a seeded random order and each takes the nearest unused control
//! on the score; there is no caliper.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::StatsError;

pub const MAX_ITERATIONS: usize = 500;
pub const TOLERANCE: f64 = 1e-8;
const RIDGE: f64 = 1e-6;

/// A unit with categorical covariate values, aligned with the covariate names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub treated: String,
    pub control: String,
    pub treated_score: f64,
    pub control_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBalance {
    pub covariate: String,
    pub level: String,
    pub smd_before: f64,
    pub smd_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<Pair>,
    /// One row per covariate level (dummy column).
    pub balance: Vec<LevelBalance>,
    pub iterations: usize,
}

impl MatchResult {
    /// Largest post-match SMD over a covariate's levels, per covariate.
    pub fn smd(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        for b in &self.balance {
            let e = out.entry(b.covariate.clone()).or_insert(0.0);
            *e = e.max(b.smd_after);
        }
        out
    }
}

/// Standardized mean difference `|mean_t - mean_c| / sqrt((s_t² + s_c²) / 2)`.
pub fn smd(treated: &[f64], control: &[f64]) -> f64 {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = if x.len() > 1 {
            x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (m, v)
    };
    let (mt, vt) = stats(treated);
    let (mc, vc) = stats(control);
    let diff = (mt - mc).abs();
    let pooled = ((vt + vc) / 2.0).sqrt();
    if diff == 0.0 {
        0.0
    } else if pooled == 0.0 {
        f64::INFINITY
    } else {
        diff / pooled
    }
}

struct Design {
    /// (covariate, level) per dummy column, reference levels included.
    columns: Vec<(usize, String)>,
    /// Whether the column enters the regression (reference levels do not).
    in_model: Vec<bool>,
}

impl Design {
    fn new(n_cov: usize, units: &[&Unit]) -> Design {
        let mut columns = Vec::new();
        let mut in_model = Vec::new();
        for c in 0..n_cov {
            let levels: BTreeSet<&str> = units.iter().map(|u| u.values[c].as_str()).collect();
            for (k, level) in levels.into_iter().enumerate() {
                columns.push((c, level.to_string()));
                in_model.push(k > 0);
            }
        }
        Design { columns, in_model }
    }

    fn dummies(&self, u: &Unit) -> Vec<f64> {
        self.columns
            .iter()
            .map(|(c, level)| if u.values[*c] == *level { 1.0 } else { 0.0 })
            .collect()
    }

    fn model_row(&self, u: &Unit) -> Vec<f64> {
        let mut row = vec![1.0];
        row.extend(
            self.dummies(u)
                .into_iter()
                .zip(&self.in_model)
                .filter(|(_, m)| **m)
                .map(|(v, _)| v),
        );
        row
    }
}

/// Logistic regression by Newton ascent on the (lightly ridged) mean log-likelihood.
/// Returns fitted probabilities and the iteration count.
pub fn logistic_fit(x: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, usize), StatsError> {
    let (n, k) = x.shape();
    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::<f64>::zeros(k);
    let mut trace = Vec::new();
    for it in 0..MAX_ITERATIONS {
        let eta = x * &beta;
        let p = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let mut grad = x.transpose() * (&yv - &p) / n as f64;
        grad -= &beta * RIDGE;
        let norm = grad.norm();
        trace.push(norm);
        if norm < TOLERANCE {
            return Ok((p.iter().copied().collect(), it));
        }
        let w = p.map(|v| (v * (1.0 - v)).max(1e-12));
        let mut xtwx = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let row = x.row(i);
            xtwx += row.transpose() * row * w[i];
        }
        xtwx /= n as f64;
        for d in 0..k {
            xtwx[(d, d)] += RIDGE;
        }
        let step = xtwx
            .cholesky()
            .map(|c| c.solve(&grad))
            .unwrap_or_else(|| grad.clone());
        beta += step;
    }
    Err(StatsError::NonConvergent {
        iterations: MAX_ITERATIONS,
        trace,
    })
}

/// One-to-one nearest-neighbour matching without replacement.
pub fn propensity_match(
    treated: &[Unit],
    control: &[Unit],
    covariates: &[&str],
    seed: u64,
) -> Result<MatchResult, StatsError> {
    if treated.is_empty() {
        return Err(StatsError::Empty("propensity_match"));
    }
    if control.len() < treated.len() {
        return Err(StatsError::PoolExhausted {
            treated: treated.len(),
            control: control.len(),
        });
    }
    if covariates.is_empty() {
        return Err(StatsError::Input("no covariates".into()));
    }
    if let Some(u) = treated
        .iter()
        .chain(control)
        .find(|u| u.values.len() != covariates.len())
    {
        return Err(StatsError::Input(format!(
            "unit {} has {} covariate values, expected {}",
            u.id,
            u.values.len(),
            covariates.len()
        )));
    }

    let all: Vec<&Unit> = treated.iter().chain(control).collect();
    let design = Design::new(covariates.len(), &all);
    let rows: Vec<Vec<f64>> = all.iter().map(|u| design.model_row(u)).collect();
    let k = rows[0].len();
    let x = DMatrix::from_row_iterator(rows.len(), k, rows.into_iter().flatten());
    let y: Vec<f64> = (0..all.len())
        .map(|i| if i < treated.len() { 1.0 } else { 0.0 })
        .collect();
    let (scores, iterations) = logistic_fit(&x, &y)?;
    let (ts, cs) = scores.split_at(treated.len());

    let mut order: Vec<usize> = (0..treated.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut used = vec![false; control.len()];
    let mut pairs = Vec::with_capacity(treated.len());
    let mut matched_c = Vec::with_capacity(treated.len());
    for &t in &order {
        let best = cs
            .iter()
            .enumerate()
            .filter(|(c, _)| !used[*c])
            .min_by(|(ia, a), (ib, b)| {
                (*a - ts[t])
                    .abs()
                    .total_cmp(&(*b - ts[t]).abs())
                    .then(ia.cmp(ib))
            })
            .map(|(c, _)| c)
            .ok_or(StatsError::PoolExhausted {
                treated: treated.len(),
                control: control.len(),
            })?;
        used[best] = true;
        matched_c.push(best);
        pairs.push(Pair {
            treated: treated[t].id.clone(),
            control: control[best].id.clone(),
            treated_score: ts[t],
            control_score: cs[best],
        });
    }

    let dummies = |units: &mut dyn Iterator<Item = &Unit>| -> Vec<Vec<f64>> {
        units.map(|u| design.dummies(u)).collect()
    };
    let t_all = dummies(&mut treated.iter());
    let c_all = dummies(&mut control.iter());
    let c_matched = dummies(&mut matched_c.iter().map(|&c| &control[c]));
    let column = |m: &[Vec<f64>], j: usize| m.iter().map(|r| r[j]).collect::<Vec<_>>();
    let balance = design
        .columns
        .iter()
        .enumerate()
        .map(|(j, (c, level))| LevelBalance {
            covariate: covariates[*c].to_string(),
            level: level.clone(),
            smd_before: smd(&column(&t_all, j), &column(&c_all, j)),
            smd_after: smd(&column(&t_all, j), &column(&c_matched, j)),
        })
        .collect();

    Ok(MatchResult {
        pairs,
        balance,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn unit(id: String, rng: &mut ChaCha8Rng, skew: f64) -> Unit {
        let age = if rng.random::<f64>() < 0.3 + skew { "young" } else { ["mid", "old"][rng.random_range(0..2)] };
        let edu = if rng.random::<f64>() < 0.4 + skew { "degree" } else { "school" };
        let gender = ["f", "m"][rng.random_range(0..2)];
        Unit {
            id,
            values: vec![age.into(), edu.into(), gender.into()],
        }
    }

    const COVS: [&str; 3] = ["age", "education", "gender"];

    #[test]
    fn smd_basics() {
        assert_eq!(smd(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((smd(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]) - 0.25 / ((1.0 / 3.0 + 0.25) / 2.0f64).sqrt()).abs() < 1e-12);
        assert_eq!(smd(&[1.0], &[0.0]), f64::INFINITY);
    }

    #[test]
    fn identical_pools_are_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Vec<_> = (0..60).map(|i| unit(format!("t{i}"), &mut rng, 0.0)).collect();
        let c: Vec<_> = t
            .iter()
            .map(|u| Unit {
                id: u.id.replace('t', "c"),
                values: u.values.clone(),
            })
            .collect();
        let r = propensity_match(&t, &c, &COVS, 3).unwrap();
        assert_eq!(r.pairs.len(), 60);
        for v in r.smd().values() {
            assert!(*v < 0.02, "{v}");
        }
    }

    #[test]
    fn confounded_pools_balance_after_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t: Vec<_> = (0..120).map(|i| unit(format!("t{i}"), &mut rng, 0.25)).collect();
        let c: Vec<_> = (0..980).map(|i| unit(format!("c{i}"), &mut rng, 0.0)).collect();
        let r = propensity_match(&t, &c, &COVS, 5).unwrap();
        assert_eq!(r.pairs.len(), 120);
        let controls: BTreeSet<_> = r.pairs.iter().map(|p| &p.control).collect();
        assert_eq!(controls.len(), 120);
        assert!(r.balance.iter().any(|b| b.smd_before > 0.1));
        for (cov, v) in r.smd() {
            assert!(v < 0.1, "{cov}: {v}");
        }
        assert_eq!(r, propensity_match(&t, &c, &COVS, 5).unwrap());
    }

    #[test]
    fn pool_too_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t: Vec<_> = (0..5).map(|i| unit(format!("t{i}"), &mut rng, 0.0)).collect();
        let c: Vec<_> = (0..4).map(|i| unit(format!("c{i}"), &mut rng, 0.0)).collect();
        assert!(matches!(
            propensity_match(&t, &c, &COVS, 0),
            Err(StatsError::PoolExhausted { .. })
        ));
    }

    #[test]
    fn mismatched_covariates_rejected() {
        let t = vec![Unit { id: "t".into(), values: vec!["a".into()] }];
        let c = vec![Unit { id: "c".into(), values: vec!["a".into()] }];
        assert!(propensity_match(&t, &c, &COVS, 0).is_err());
    }

    #[test]
    fn logistic_recovers_known_rates() {
        // one binary covariate: rate 0.2 when x = 0 and 0.6 when x = 1
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..100 {
            rows.extend([1.0, 0.0]);
            y.push(if i < 20 { 1.0 } else { 0.0 });
        }
        for i in 0..100 {
            rows.extend([1.0, 1.0]);
            y.push(if i < 60 { 1.0 } else { 0.0 });
        }
        let x = DMatrix::from_row_slice(200, 2, &rows);
        let (p, _) = logistic_fit(&x, &y).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-4);
        assert!((p[150] - 0.6).abs() < 1e-4);
    }
}
