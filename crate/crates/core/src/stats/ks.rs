//! Two-sample Kolmogorov-Smirnov test.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsMethod {
    /// Kolmogorov limit distribution with the Stephens small-sample factor.
    #[default]
    Asymptotic,
    /// Full permutation distribution when the effective size is below 10;
    /// asymptotic otherwise.
    ExactSmall,
}

const SERIES_EPS: f64 = 1e-12;

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^(j-1) exp(-2 j² λ²)`.
///
/// Below λ = 1.18 the alternating sum converges slowly, so the equivalent
/// Jacobi theta form `1 - √(2π)/λ Σ exp(-(2j-1)² π² / (8λ²))` is used instead.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for j in 1.. {
            let k = (2 * j - 1) as f64;
            let term = (c * k * k).exp();
            sum += term;
            if term < SERIES_EPS {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for j in 1.. {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            sum += sign * term;
            sign = -sign;
            if term < SERIES_EPS {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

fn sorted(xs: &[f64], name: &'static str) -> Result<Vec<f64>, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::Empty(name));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(StatsError::Input("sample contains NaN".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// sup |F_a - F_b| over the pooled sample, evaluated after each tie block.
fn statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    d
}

/// Asymptotic p-value for statistic `d` with sample sizes `n1`, `n2`.
pub fn asymptotic_p(d: f64, n1: usize, n2: usize) -> f64 {
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let sq = ne.sqrt();
    kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, StatsError> {
    ks_two_sample_with(a, b, KsMethod::Asymptotic)
}

pub fn ks_two_sample_with(a: &[f64], b: &[f64], method: KsMethod) -> Result<KsResult, StatsError> {
    let sa = sorted(a, "ks_two_sample")?;
    let sb = sorted(b, "ks_two_sample")?;
    let statistic = statistic_sorted(&sa, &sb);
    let (n1, n2) = (sa.len(), sb.len());
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let p_value = match method {
        KsMethod::ExactSmall if ne < 10.0 => permutation_p(&sa, &sb, statistic),
        _ => asymptotic_p(statistic, n1, n2),
    };
    Ok(KsResult {
        statistic,
        p_value,
        n1,
        n2,
    })
}

/// Share of relabelings of the pooled sample whose statistic reaches `d`.
fn permutation_p(a: &[f64], b: &[f64], d: f64) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let (mut hits, mut total) = (0u64, 0u64);
    for chosen in (0..n).combinations(a.len()) {
        let mut in_a = vec![false; n];
        for &i in &chosen {
            in_a[i] = true;
        }
        let mut xa: Vec<f64> = chosen.iter().map(|&i| pooled[i]).collect();
        let mut xb: Vec<f64> = (0..n).filter(|&i| !in_a[i]).map(|i| pooled[i]).collect();
        xa.sort_by(f64::total_cmp);
        xb.sort_by(f64::total_cmp);
        if statistic_sorted(&xa, &xb) >= d - 1e-12 {
            hits += 1;
        }
        total += 1;
    }
    hits as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 2.0, 5.0];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn disjoint_supports() {
        let r = ks_two_sample(&[1.0; 20], &[5.0; 30]).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(ks_two_sample(&[], &[1.0]), Err(StatsError::Empty(_))));
        assert!(ks_two_sample(&[1.0], &[]).is_err());
    }

    #[test]
    fn q_known_values() {
        // Q(1.36) ~ 0.049 and Q(1.63) ~ 0.0098 are the familiar 5% / 1% points.
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 1e-3);
        // both branches agree where they meet
        let lo = {
            let c = -std::f64::consts::PI.powi(2) / (8.0 * 1.18 * 1.18);
            let s: f64 = (1..50).map(|j| (c * ((2 * j - 1) as f64).powi(2)).exp()).sum();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / 1.18 * s
        };
        assert!((kolmogorov_q(1.18) - lo).abs() < 1e-12);
    }

    #[test]
    fn exact_small_sample() {
        // n1 = n2 = 3, fully separated: only 2 of C(6,3) = 20 labelings reach D = 1
        let r = ks_two_sample_with(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], KsMethod::ExactSmall).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!((r.p_value - 0.1).abs() < 1e-12);
        let big: Vec<f64> = (0..40).map(|i| (i % 5) as f64).collect();
        let a = ks_two_sample_with(&big, &big, KsMethod::ExactSmall).unwrap();
        assert_eq!(a, ks_two_sample(&big, &big).unwrap());
    }

    fn likert() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((1u8..=5).prop_map(f64::from), 1..40)
    }

    proptest! {
        #[test]
        fn symmetric(a in likert(), b in likert()) {
            let x = ks_two_sample(&a, &b).unwrap();
            let y = ks_two_sample(&b, &a).unwrap();
            prop_assert_eq!(x.statistic, y.statistic);
            prop_assert_eq!(x.p_value, y.p_value);
        }

        #[test]
        fn invariant_under_monotone_transform(a in likert(), b in likert()) {
            let f = |v: &Vec<f64>| v.iter().map(|x| (x * 0.7).exp() + 3.0).collect::<Vec<_>>();
            let x = ks_two_sample(&a, &b).unwrap();
            let y = ks_two_sample(&f(&a), &f(&b)).unwrap();
            prop_assert_eq!(x.statistic, y.statistic);
        }

        #[test]
        fn statistic_in_unit_interval(a in likert(), b in likert()) {
            let r = ks_two_sample(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.statistic));
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }

    #[test]
    fn p_decreasing_in_statistic() {
        let mut prev = 1.0;
        for i in 1..=400 {
            let d = i as f64 / 400.0;
            let p = asymptotic_p(d, 40, 60);
            if prev > 1e-300 && p > 0.0 && prev < 1.0 {
                assert!(p < prev, "d = {d}");
            }
            prev = p;
        }
    }
}
