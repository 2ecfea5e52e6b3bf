//! Log-likelihood-ratio tests of context independence.
//!
//! For one circuit observed in `C` contexts with `M` outcomes, the null model
//! shares one outcome distribution across contexts and the alternative gives
//! each context its own. With counts `x[c][m]`, pool sizes `N_c`, pooled
//! counts `x[m]` and grand total `N`, the maximum-likelihood ratio is
//!
//! ```text
//! λ = 2 Σ_c Σ_m x[c][m] · ln( x[c][m] · N / (N_c · x[m]) )
//! ```
//!
//! with `0 · ln 0 = 0`. Under the null, `λ` is asymptotically χ² with
//! `(C-1)(M-1)` degrees of freedom. All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::chi2::{chi2_inv_sf, chi2_p_value, DegreesOfFreedom};
use crate::counts::{CircuitRecord, OutcomeCounts};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Result of one per-circuit test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitTestResult<T> {
    pub circuit_id: String,
    pub llr: T,
    pub dof: u64,
    pub p_value: T,
    /// Total repetitions over the compared contexts.
    pub total: u64,
    /// Some pool has fewer than `10·M` repetitions; the χ² approximation may
    /// be poor.
    pub asymptotics_questionable: bool,
}

/// Result of the summed-LLR test over a set of circuits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTestResult<T> {
    pub llr: T,
    pub dof: u64,
    pub p_value: T,
    pub n_sigma: T,
    pub circuits: usize,
}

/// λ for a table of pools (one per context). Pools must share `M`.
pub fn llr_from_pools<T: Real>(pools: &[&OutcomeCounts]) -> Result<T> {
    let m = pools.first().map_or(0, |p| p.num_outcomes());
    if pools.iter().any(|p| p.num_outcomes() != m) {
        return Err(Error::invalid("pools disagree on the number of outcomes"));
    }
    let mut pooled = vec![0u64; m];
    for p in pools {
        for (acc, &x) in pooled.iter_mut().zip(p.as_slice()) {
            *acc += x;
        }
    }
    let grand: u64 = pooled.iter().sum();
    let grand_t = T::count(grand);

    let mut sum = T::zero();
    for p in pools {
        let n_c = T::count(p.total());
        for (&x, &xm) in p.as_slice().iter().zip(&pooled) {
            if x == 0 {
                continue;
            }
            let x_t = T::count(x);
            let ratio = (x_t * grand_t) / (n_c * T::count(xm));
            sum = sum + x_t * ratio.ln();
        }
    }
    // nested models: any negative residue is rounding
    Ok((T::lit(2.0) * sum).max(T::zero()))
}

/// The per-circuit test over the named contexts.
pub fn llr_single<T: Real>(record: &CircuitRecord, contexts: &[&str]) -> Result<CircuitTestResult<T>> {
    if contexts.len() < 2 {
        return Err(Error::invalid(format!(
            "circuit '{}': need at least 2 contexts, got {}",
            record.id,
            contexts.len()
        )));
    }
    let pools = record.select(contexts)?;
    for (ctx, p) in contexts.iter().zip(&pools) {
        if p.total() == 0 {
            return Err(Error::EmptyPool {
                circuit: record.id.clone(),
                context: ctx.to_string(),
            });
        }
    }
    let m = pools[0].num_outcomes() as u64;
    let dof = (contexts.len() as u64 - 1) * (m - 1);
    let llr: T = llr_from_pools(&pools)?;
    let p_value = chi2_p_value(llr, DegreesOfFreedom::new(dof)?)?;
    Ok(CircuitTestResult {
        circuit_id: record.id.clone(),
        llr,
        dof,
        p_value,
        total: pools.iter().map(|p| p.total()).sum(),
        asymptotics_questionable: pools.iter().any(|p| p.total() < 10 * m),
    })
}

/// Standardized excess of a χ²_k statistic over its mean.
pub fn n_sigma<T: Real>(llr: T, dof: u64) -> T {
    let k = T::count(dof);
    (llr - k) / (T::lit(2.0) * k).sqrt()
}

/// Sum of per-circuit LLRs tested against χ² with the summed dof.
pub fn llr_aggregate<T: Real>(results: &[CircuitTestResult<T>]) -> Result<AggregateTestResult<T>> {
    if results.is_empty() {
        return Err(Error::invalid("aggregate test needs at least one circuit"));
    }
    let llr = results.iter().fold(T::zero(), |acc, r| acc + r.llr);
    let dof: u64 = results.iter().map(|r| r.dof).sum();
    let p_value = chi2_p_value(llr, DegreesOfFreedom::new(dof)?)?;
    Ok(AggregateTestResult {
        llr,
        dof,
        p_value,
        n_sigma: n_sigma(llr, dof),
        circuits: results.len(),
    })
}

fn open_unit<T: Real>(p: T, what: &str) -> Result<()> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::invalid(format!("{what} must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// `N_σ` value an aggregate statistic must exceed for significance `alpha`.
pub fn n_sigma_threshold<T: Real>(alpha: T, dof_agg: u64) -> Result<T> {
    open_unit(alpha, "significance")?;
    let x = chi2_inv_sf(alpha, DegreesOfFreedom::new(dof_agg)?)?;
    Ok(n_sigma(x, dof_agg))
}

/// LLR above which a circuit's p-value falls below `p_threshold`.
pub fn llr_threshold<T: Real>(p_threshold: T, dof: u64) -> Result<T> {
    open_unit(p_threshold, "p-value threshold")?;
    chi2_inv_sf(p_threshold, DegreesOfFreedom::new(dof)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(pools: &[&[u64]]) -> CircuitRecord {
        CircuitRecord::new(
            "q",
            pools
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("c{}", i + 1), OutcomeCounts::new(p.to_vec()).unwrap())),
        )
        .unwrap()
    }

    #[test]
    fn detected_example() {
        // 50-digit reference: λ = 10.526264787904089, p = 1.1768983895046014e-3
        let r: CircuitTestResult<f64> = llr_single(&record(&[&[99, 101], &[131, 69]]), &["c1", "c2"]).unwrap();
        assert_relative_eq!(r.llr, 10.526264787904089, max_relative = 1e-13);
        assert_eq!(r.dof, 1);
        assert_relative_eq!(r.p_value, 1.1768983895046014e-3, max_relative = 1e-10);
        assert_eq!(r.total, 400);
        assert!(!r.asymptotics_questionable);
    }

    #[test]
    fn undetected_example() {
        let r: CircuitTestResult<f64> = llr_single(&record(&[&[108, 92], &[107, 93]]), &["c1", "c2"]).unwrap();
        assert_relative_eq!(r.llr, 0.010056611289457439, max_relative = 1e-10);
        assert_relative_eq!(r.p_value, 0.9201199258097855, max_relative = 1e-10);
    }

    #[test]
    fn identical_pools() {
        let r: CircuitTestResult<f64> = llr_single(&record(&[&[50, 50], &[50, 50]]), &["c1", "c2"]).unwrap();
        assert_eq!(r.llr, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn zero_counts_contribute_nothing() {
        let r: CircuitTestResult<f64> = llr_single(&record(&[&[100, 0], &[0, 100]]), &["c1", "c2"]).unwrap();
        // 2 · 200 · ln 2
        assert_relative_eq!(r.llr, 400.0 * std::f64::consts::LN_2, max_relative = 1e-14);
    }

    #[test]
    fn dof_and_small_sample_flag() {
        let rec = record(&[&[1, 2, 3], &[3, 2, 1], &[2, 2, 2]]);
        let r: CircuitTestResult<f64> = llr_single(&rec, &["c1", "c2", "c3"]).unwrap();
        assert_eq!(r.dof, 4);
        assert!(r.asymptotics_questionable);
    }

    #[test]
    fn context_errors() {
        let rec = record(&[&[1, 2], &[2, 1]]);
        assert!(llr_single::<f64>(&rec, &["c1"]).is_err());
        assert!(matches!(
            llr_single::<f64>(&rec, &["c1", "nope"]),
            Err(Error::MissingContext { .. })
        ));
    }

    #[test]
    fn aggregate_examples() {
        let one: CircuitTestResult<f64> = llr_single(&record(&[&[99, 101], &[131, 69]]), &["c1", "c2"]).unwrap();
        let agg = llr_aggregate(std::slice::from_ref(&one)).unwrap();
        assert_eq!(agg.llr, one.llr);
        assert_eq!(agg.dof, 1);
        assert_relative_eq!(agg.p_value, one.p_value, max_relative = 1e-14);

        let at_mean: Vec<CircuitTestResult<f64>> = (0..7)
            .map(|i| CircuitTestResult {
                circuit_id: format!("q{i}"),
                llr: 3.0,
                dof: 3,
                p_value: 0.4,
                total: 100,
                asymptotics_questionable: false,
            })
            .collect();
        assert_eq!(llr_aggregate(&at_mean).unwrap().n_sigma, 0.0);
        assert!(llr_aggregate::<f64>(&[]).is_err());
    }

    #[test]
    fn thresholds() {
        // scipy chi2.isf(0.05/22, 5620): N_σ threshold 2.8819685281354036 (mpmath)
        assert_relative_eq!(
            n_sigma_threshold(0.05_f64 / 22.0, 5620).unwrap(),
            2.8819685281354036,
            max_relative = 1e-10
        );
        // median of χ²_5620 is 5619.333347394297
        assert_relative_eq!(
            n_sigma_threshold(0.5_f64, 5620).unwrap(),
            -0.006288056355545938,
            max_relative = 1e-7
        );
        assert!(n_sigma_threshold(0.01_f64, 5620).unwrap() > n_sigma_threshold(0.05_f64, 5620).unwrap());
        assert_relative_eq!(llr_threshold(0.05_f64, 1).unwrap(), 3.841458820694126, max_relative = 1e-12);
        assert_relative_eq!(llr_threshold(0.05_f64, 4).unwrap(), 9.4877290367811568, max_relative = 1e-12);
        assert!(n_sigma_threshold(0.0_f64, 10).is_err());
        assert!(llr_threshold(1.0_f64, 1).is_err());
    }

    #[test]
    fn threshold_round_trip() {
        let k = DegreesOfFreedom::new(3).unwrap();
        for x in [0.2_f64, 4.0, 17.5, 60.0] {
            let p = crate::chi2::chi2_sf(x, k).unwrap();
            assert_relative_eq!(llr_threshold(p, 3).unwrap(), x, max_relative = 1e-10);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn table() -> impl Strategy<Value = Vec<Vec<u64>>> {
            (2usize..5, 2usize..5).prop_flat_map(|(c, m)| {
                prop::collection::vec(prop::collection::vec(0u64..300, m), c).prop_map(|mut t| {
                    for row in &mut t {
                        row[0] += 1;
                    }
                    t
                })
            })
        }

        fn llr_of(t: &[Vec<u64>]) -> f64 {
            let pools: Vec<OutcomeCounts> = t.iter().map(|r| OutcomeCounts::new(r.clone()).unwrap()).collect();
            let refs: Vec<&OutcomeCounts> = pools.iter().collect();
            llr_from_pools(&refs).unwrap()
        }

        proptest! {
            #[test]
            fn non_negative(t in table()) {
                prop_assert!(llr_of(&t) >= 0.0);
            }

            #[test]
            fn permutation_invariant(t in table(), rot_c in 0usize..4, rot_m in 0usize..4) {
                let base = llr_of(&t);
                let mut p = t.clone();
                let rc = rot_c % p.len();
                p.rotate_left(rc);
                let rm = rot_m % p[0].len();
                for row in &mut p {
                    row.rotate_left(rm);
                }
                prop_assert!((llr_of(&p) - base).abs() <= 1e-9 * (1.0 + base));
            }

            #[test]
            fn linear_in_scale(t in table(), s in 1u64..20) {
                let scaled: Vec<Vec<u64>> = t.iter().map(|r| r.iter().map(|x| x * s).collect()).collect();
                let base = llr_of(&t);
                prop_assert!((llr_of(&scaled) - s as f64 * base).abs() <= 1e-10 * (1.0 + s as f64 * base));
            }
        }
    }
}
