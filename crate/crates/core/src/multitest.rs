//! Family-wise error control across per-circuit tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{llr_threshold, AggregateTestResult, CircuitTestResult};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Hochberg,
    Bonferroni,
    /// Aggregate test at `α/2`, then Hochberg at `α` or `α/2` depending on
    /// whether the aggregate test fired.
    Combined,
}

/// Global significance, its split over test families, and the per-family
/// correction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionPlan<T> {
    pub global_alpha: T,
    pub weights: Vec<T>,
    pub strategy: Strategy,
}

impl<T: Real> CorrectionPlan<T> {
    pub fn new(global_alpha: T, weights: Vec<T>, strategy: Strategy) -> Result<Self> {
        check_alpha(global_alpha)?;
        check_weights(&weights)?;
        Ok(Self {
            global_alpha,
            weights,
            strategy,
        })
    }

    pub fn equal(global_alpha: T, families: usize, strategy: Strategy) -> Result<Self> {
        if families == 0 {
            return Err(Error::invalid("correction plan needs at least one family"));
        }
        let w = T::one() / T::count(families as u64);
        Self::new(global_alpha, vec![w; families], strategy)
    }

    /// Local significance of every family.
    pub fn local_alphas(&self) -> Vec<T> {
        self.weights.iter().map(|&w| self.global_alpha * w).collect()
    }
}

/// Rejection set and pseudo-thresholds of one corrected family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTestOutcome<T> {
    /// Rejected circuit ids, in input order.
    pub rejected_ids: Vec<String>,
    pub p_threshold: T,
    /// LLR pseudo-threshold; absent when circuits have differing dof.
    pub llr_threshold: Option<T>,
    pub aggregate_triggered: bool,
    /// Significance the per-circuit tests were corrected at.
    pub level: T,
}

impl<T> MultiTestOutcome<T> {
    /// Context dependence detected by either the aggregate or any circuit.
    pub fn detected(&self) -> bool {
        self.aggregate_triggered || !self.rejected_ids.is_empty()
    }
}

pub(crate) fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::invalid(format!("significance must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_weights<T: Real>(weights: &[T]) -> Result<()> {
    if weights.is_empty() || weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(Error::invalid("weights must be non-negative and finite"));
    }
    let sum = weights.iter().fold(T::zero(), |a, &w| a + w);
    // 1e-12 in double; a few ulps per term otherwise
    let tol = T::lit(1e-12).max(T::epsilon() * T::count(4 * weights.len() as u64));
    if (sum - T::one()).abs() > tol {
        return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

fn check_p_values<T: Real, S: AsRef<str>>(p_values: &[(S, T)]) -> Result<()> {
    if p_values.is_empty() {
        return Err(Error::invalid("no p-values to correct"));
    }
    for (id, p) in p_values {
        if !(*p >= T::zero() && *p <= T::one()) {
            return Err(Error::invalid(format!("p-value of '{}' outside [0, 1]: {p}", id.as_ref())));
        }
    }
    Ok(())
}

/// Generalized Bonferroni split `α_i = α·w_i`.
pub fn bonferroni_split<T: Real>(alpha: T, weights: &[T]) -> Result<Vec<T>> {
    check_alpha(alpha)?;
    check_weights(weights)?;
    Ok(weights.iter().map(|&w| alpha * w).collect())
}

/// Plain Bonferroni: rejects `p < α/Q`.
pub fn bonferroni<T: Real, S: AsRef<str>>(p_values: &[(S, T)], alpha: T) -> Result<MultiTestOutcome<T>> {
    check_alpha(alpha)?;
    check_p_values(p_values)?;
    let threshold = alpha / T::count(p_values.len() as u64);
    Ok(reject_below(p_values, threshold, alpha))
}

fn reject_below<T: Real, S: AsRef<str>>(p_values: &[(S, T)], threshold: T, level: T) -> MultiTestOutcome<T> {
    MultiTestOutcome {
        rejected_ids: p_values
            .iter()
            .filter(|(_, p)| *p < threshold)
            .map(|(id, _)| id.as_ref().to_string())
            .collect(),
        p_threshold: threshold,
        llr_threshold: None,
        aggregate_triggered: false,
        level,
    }
}

/// Hochberg step-up correction.
///
/// With sorted p-values `p_(1) <= … <= p_(Q)`, finds the largest `l` with
/// `p_(l) <= α/(Q-l+1)` and rejects every circuit with
/// `p < α/(Q-l_max+1)`. When no `l` qualifies nothing is rejected and the
/// reported threshold is `α/Q`.
pub fn hochberg<T: Real, S: AsRef<str>>(p_values: &[(S, T)], alpha: T) -> Result<MultiTestOutcome<T>> {
    check_alpha(alpha)?;
    check_p_values(p_values)?;
    let q = p_values.len();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| {
        p_values[a]
            .1
            .partial_cmp(&p_values[b].1)
            .expect("p-values are finite")
            .then_with(|| p_values[a].0.as_ref().cmp(p_values[b].0.as_ref()))
    });

    let step = |l: usize| alpha / T::count((q - l + 1) as u64);
    let l_max = (1..=q).rev().find(|&l| p_values[order[l - 1]].1 <= step(l));
    let threshold = match l_max {
        Some(l) => step(l),
        None => step(1),
    };
    Ok(reject_below(p_values, threshold, alpha))
}

/// Aggregate test at `α/2`; per-circuit tests by Hochberg at `β = α` if the
/// aggregate fired, else `β = α/2`.
pub fn combined_procedure<T: Real>(
    results: &[CircuitTestResult<T>],
    agg: &AggregateTestResult<T>,
    alpha: T,
) -> Result<MultiTestOutcome<T>> {
    check_alpha(alpha)?;
    if results.is_empty() {
        return Err(Error::invalid("no circuit results"));
    }
    let dof: u64 = results.iter().map(|r| r.dof).sum();
    let llr = results.iter().fold(T::zero(), |a, r| a + r.llr);
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) * (T::one() + llr.abs());
    if agg.dof != dof || agg.circuits != results.len() || (agg.llr - llr).abs() > tol {
        return Err(Error::invalid(
            "aggregate result does not match the per-circuit results",
        ));
    }

    let half = alpha / T::lit(2.0);
    let triggered = agg.p_value < half;
    let beta = if triggered { alpha } else { half };
    let p_values: Vec<(&str, T)> = results
        .iter()
        .map(|r| (r.circuit_id.as_str(), r.p_value))
        .collect();
    let mut outcome = hochberg(&p_values, beta)?;
    outcome.aggregate_triggered = triggered;
    let first = results[0].dof;
    if results.iter().all(|r| r.dof == first) {
        outcome.llr_threshold = Some(llr_threshold(outcome.p_threshold, first)?);
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ps(values: &[f64]) -> Vec<(String, f64)> {
        values.iter().enumerate().map(|(i, &p)| (format!("q{i}"), p)).collect()
    }

    fn result(id: &str, p: f64) -> CircuitTestResult<f64> {
        let llr = if p >= 1.0 {
            0.0
        } else {
            llr_threshold(p, 1).unwrap()
        };
        CircuitTestResult {
            circuit_id: id.into(),
            llr,
            dof: 1,
            p_value: p,
            total: 200,
            asymptotics_questionable: false,
        }
    }

    fn agg_with_p(results: &[CircuitTestResult<f64>], p: f64) -> AggregateTestResult<f64> {
        let mut agg = crate::hypothesis::llr_aggregate(results).unwrap();
        agg.p_value = p;
        agg
    }

    #[test]
    fn single_test_is_plain_level_test() {
        let o = hochberg(&ps(&[0.04]), 0.05).unwrap();
        assert_eq!(o.rejected_ids, ["q0"]);
        assert_eq!(o.p_threshold, 0.05);
        assert!(hochberg(&ps(&[0.06]), 0.05).unwrap().rejected_ids.is_empty());
    }

    #[test]
    fn three_step_trace() {
        let o = hochberg(&ps(&[0.001, 0.02, 0.9]), 0.05).unwrap();
        assert_eq!(o.p_threshold, 0.025);
        assert_eq!(o.rejected_ids, ["q0", "q1"]);
    }

    #[test]
    fn no_rejections_reports_alpha_over_q() {
        let o = hochberg(&ps(&[1.0, 1.0, 1.0, 1.0]), 0.05).unwrap();
        assert!(o.rejected_ids.is_empty());
        assert_relative_eq!(o.p_threshold, 0.0125);
    }

    #[test]
    fn boundary_not_rejected() {
        // p_(1) = α/Q satisfies the step-up condition but not strict rejection
        let o = hochberg(&ps(&[0.025, 0.5]), 0.05).unwrap();
        assert_eq!(o.p_threshold, 0.025);
        assert!(o.rejected_ids.is_empty());
    }

    #[test]
    fn input_errors() {
        assert!(hochberg::<f64, String>(&[], 0.05).is_err());
        assert!(hochberg(&ps(&[0.1]), 0.0).is_err());
        assert!(hochberg(&ps(&[1.1]), 0.05).is_err());
    }

    #[test]
    fn bonferroni_split_examples() {
        let eleven = bonferroni_split(0.05_f64, &[1.0 / 11.0; 11]).unwrap();
        assert_relative_eq!(eleven[0], 0.05 / 11.0, max_relative = 1e-15);
        assert!((eleven[0] - 0.004545).abs() < 1e-6);
        let fourteen = bonferroni_split(0.05_f64, &[1.0 / 14.0; 14]).unwrap();
        assert!((fourteen[0] - 0.00357).abs() < 1e-5);
        assert_eq!(bonferroni_split(0.05_f64, &[1.0]).unwrap(), [0.05]);
        assert!(bonferroni_split(0.05_f64, &[0.5, 0.6]).is_err());
        assert!(bonferroni_split(0.05_f64, &[1.5, -0.5]).is_err());
    }

    #[test]
    fn plan_local_alphas() {
        let plan = CorrectionPlan::equal(0.05_f64, 11, Strategy::Combined).unwrap();
        let sum: f64 = plan.local_alphas().iter().sum();
        assert_relative_eq!(sum, 0.05, max_relative = 1e-14);
        assert!(CorrectionPlan::equal(1.0_f64, 2, Strategy::Hochberg).is_err());
    }

    #[test]
    fn combined_aggregate_fires() {
        let results: Vec<_> = (0..5).map(|i| result(&format!("q{i}"), 0.3)).collect();
        let o = combined_procedure(&results, &agg_with_p(&results, 0.001), 0.05).unwrap();
        assert!(o.aggregate_triggered);
        assert_eq!(o.level, 0.05);
        assert!(o.detected());
    }

    #[test]
    fn combined_nothing_detected() {
        let results: Vec<_> = (0..5).map(|i| result(&format!("q{i}"), 1.0)).collect();
        let o = combined_procedure(&results, &agg_with_p(&results, 0.5), 0.05).unwrap();
        assert!(!o.detected());
        assert_eq!(o.level, 0.025);
    }

    #[test]
    fn combined_single_strong_circuit() {
        let mut results: Vec<_> = (0..40).map(|i| result(&format!("q{i:02}"), 1.0)).collect();
        results[17] = result("q17", 1e-6);
        let o = combined_procedure(&results, &agg_with_p(&results, 0.5), 0.05).unwrap();
        assert!(!o.aggregate_triggered);
        assert_eq!(o.level, 0.025);
        assert_eq!(o.rejected_ids, ["q17"]);
        assert_relative_eq!(o.p_threshold, 0.025 / 40.0);
        let lt = o.llr_threshold.unwrap();
        assert_relative_eq!(crate::chi2::chi2_sf(lt, crate::chi2::DegreesOfFreedom::new(1).unwrap()).unwrap(), 0.025 / 40.0, max_relative = 1e-9);
    }

    #[test]
    fn combined_rejects_mismatched_aggregate() {
        let results: Vec<_> = (0..3).map(|i| result(&format!("q{i}"), 0.5)).collect();
        let mut agg = agg_with_p(&results, 0.5);
        agg.dof += 1;
        assert!(combined_procedure(&results, &agg, 0.05).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hochberg_contains_bonferroni(values in prop::collection::vec(0.0f64..0.1, 1..30), alpha in 0.001f64..0.2) {
                let p = ps(&values);
                let h = hochberg(&p, alpha).unwrap();
                let b = bonferroni(&p, alpha).unwrap();
                for id in &b.rejected_ids {
                    prop_assert!(h.rejected_ids.contains(id));
                }
            }

            #[test]
            fn hochberg_monotone(values in prop::collection::vec(0.0f64..0.1, 1..30), idx in 0usize..30, factor in 0.0f64..1.0) {
                let p = ps(&values);
                let before = hochberg(&p, 0.05).unwrap();
                let mut lowered = p.clone();
                let i = idx % lowered.len();
                lowered[i].1 *= factor;
                let after = hochberg(&lowered, 0.05).unwrap();
                for id in &before.rejected_ids {
                    prop_assert!(after.rejected_ids.contains(id));
                }
            }

            #[test]
            fn rejected_below_threshold(values in prop::collection::vec(0.0f64..1.0, 1..30)) {
                let o = hochberg(&ps(&values), 0.05).unwrap();
                for (id, p) in ps(&values) {
                    prop_assert_eq!(o.rejected_ids.contains(&id), p < o.p_threshold);
                }
            }
        }
    }
}
