//! Two-sample Kolmogorov-Smirnov test.

use serde::Serialize;

/// Asymptotic two-sided critical coefficient at alpha = 0.01.
pub const KS_C_ALPHA_001: f64 = 1.628;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsOutcome {
    /// sup |F_a - F_b| over the pooled sample.
    pub statistic: f64,
    /// Rejection threshold for the statistic.
    pub critical: f64,
    pub reject: bool,
}

/// Asymptotic critical coefficient `c(alpha) = sqrt(-ln(alpha / 2) / 2)`;
/// alpha = 0.01 uses the tabulated 1.628.
pub fn critical_coefficient(alpha: f64) -> f64 {
    if alpha == 0.01 {
        KS_C_ALPHA_001
    } else {
        (-(alpha / 2.0).ln() / 2.0).sqrt()
    }
}

pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "KS test needs non-empty samples"
    );
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_test(a: &[f64], b: &[f64], alpha: f64) -> KsOutcome {
    let statistic = ks_statistic(a, b);
    let (m, n) = (a.len() as f64, b.len() as f64);
    let critical = critical_coefficient(alpha) * ((m + n) / (m * n)).sqrt();
    KsOutcome {
        statistic,
        critical,
        reject: statistic > critical,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_disjoint() {
        let a: Vec<f64> = (1..=30).map(f64::from).collect();
        let out = ks_test(&a, &a, 0.01);
        assert_eq!(out.statistic, 0.0);
        assert!(!out.reject);
        let b: Vec<f64> = (31..=60).map(f64::from).collect();
        let out = ks_test(&a, &b, 0.01);
        assert_eq!(out.statistic, 1.0);
        assert!(out.reject);
        assert!((out.critical - 1.628 * (60.0f64 / 900.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_in_arguments() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let b = [2.0, 7.0, 1.0, 8.0, 2.0];
        assert_eq!(ks_test(&a, &b, 0.01), {
            let o = ks_test(&b, &a, 0.01);
            KsOutcome {
                critical: o.critical,
                ..o
            }
        });
        assert_eq!(ks_statistic(&a, &b), ks_statistic(&b, &a));
    }

    #[test]
    fn general_alpha_formula() {
        assert!((critical_coefficient(0.05) - 1.358).abs() < 1e-3);
        assert!((critical_coefficient(0.010_000_1) - 1.628).abs() < 1e-3);
    }

    fn multisets(len: usize, lo: u32, hi: u32) -> Vec<Vec<f64>> {
        if len == 0 {
            return vec![vec![]];
        }
        (lo..=hi)
            .flat_map(|v| {
                multisets(len - 1, v, hi).into_iter().map(move |mut rest| {
                    rest.insert(0, f64::from(v));
                    rest
                })
            })
            .collect()
    }

    fn ecdf_oracle(a: &[f64], b: &[f64]) -> f64 {
        (1..=6)
            .map(|t| {
                let t = f64::from(t);
                let fa = a.iter().filter(|&&v| v <= t).count() as f64 / a.len() as f64;
                let fb = b.iter().filter(|&&v| v <= t).count() as f64 / b.len() as f64;
                (fa - fb).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn matches_exhaustive_ecdf_on_five_element_samples() {
        let all = multisets(5, 1, 6);
        assert_eq!(all.len(), 252);
        for a in &all {
            for b in &all {
                assert_eq!(ks_statistic(a, b), ecdf_oracle(a, b), "{a:?} vs {b:?}");
            }
            assert!(!ks_test(a, a, 0.01).reject);
        }
    }
}
