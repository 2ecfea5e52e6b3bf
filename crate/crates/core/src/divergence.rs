//! Effect-size estimates for context dependence: observed Jensen-Shannon
//! divergence, observed total variation distance, and the TVD restricted to
//! circuits whose test rejected (SSTVD). Units are nats.

use serde::{Deserialize, Serialize};

use crate::counts::CircuitRecord;
use crate::error::{Error, Result};
use crate::hypothesis::llr_from_pools;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantificationResult<T> {
    pub circuit_id: String,
    pub jsd: T,
    pub jsd_threshold: Option<T>,
    /// Only defined for two-context comparisons.
    pub tvd: Option<T>,
    /// Equal to `tvd` when the circuit's LLR exceeds the threshold, else
    /// `None`. Never zero-filled.
    pub sstvd: Option<T>,
}

/// `λ / (2N)`, the observed JSD from an LLR and total repetitions.
pub fn jsd_from_llr<T: Real>(llr: T, total: u64) -> T {
    llr / (T::lit(2.0) * T::count(total))
}

/// Observed JSD of the empirical distributions, weighted by pool size.
pub fn observed_jsd<T: Real>(record: &CircuitRecord, contexts: &[&str]) -> Result<T> {
    if contexts.len() < 2 {
        return Err(Error::invalid("JSD needs at least 2 contexts"));
    }
    let pools = record.select(contexts)?;
    let total: u64 = pools.iter().map(|p| p.total()).sum();
    if pools.iter().any(|p| p.total() == 0) {
        return Err(Error::invalid(format!("circuit '{}' has an empty pool", record.id)));
    }
    Ok(jsd_from_llr(llr_from_pools::<T>(&pools)?, total))
}

/// Shannon entropy in nats, `0 ln 0 = 0`.
pub fn entropy<T: Real>(p: &[T]) -> T {
    p.iter()
        .filter(|&&x| x > T::zero())
        .fold(T::zero(), |acc, &x| acc - x * x.ln())
}

/// `H(Σ π_c P_c) - Σ π_c H(P_c)`.
pub fn weighted_jsd<T: Real>(distributions: &[Vec<T>], weights: &[T]) -> Result<T> {
    if distributions.is_empty() || distributions.len() != weights.len() {
        return Err(Error::invalid("one weight per distribution required"));
    }
    let m = distributions[0].len();
    if distributions.iter().any(|d| d.len() != m) {
        return Err(Error::invalid("distributions differ in length"));
    }
    let mut mixture = vec![T::zero(); m];
    let mut mean_entropy = T::zero();
    for (d, &w) in distributions.iter().zip(weights) {
        for (acc, &x) in mixture.iter_mut().zip(d) {
            *acc = *acc + w * x;
        }
        mean_entropy = mean_entropy + w * entropy(d);
    }
    Ok((entropy(&mixture) - mean_entropy).max(T::zero()))
}

/// Observed JSD above which a circuit is significant.
pub fn jsd_threshold<T: Real>(llr_threshold: T, total: u64) -> Result<T> {
    if total == 0 {
        return Err(Error::invalid("JSD threshold needs N >= 1"));
    }
    Ok(jsd_from_llr(llr_threshold, total))
}

/// `½ Σ_m |x1[m]/N1 - x2[m]/N2|` for exactly two contexts.
pub fn observed_tvd<T: Real>(record: &CircuitRecord, contexts: &[&str]) -> Result<T> {
    if contexts.len() != 2 {
        return Err(Error::invalid(format!(
            "TVD is defined between 2 contexts, got {}",
            contexts.len()
        )));
    }
    let pools = record.select(contexts)?;
    let (a, b) = (pools[0], pools[1]);
    let (na, nb) = (T::count(a.total()), T::count(b.total()));
    let sum = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(T::zero(), |acc, (&x, &y)| {
            acc + (T::count(x) / na - T::count(y) / nb).abs()
        });
    Ok(sum / T::lit(2.0))
}

/// TVD if the circuit's LLR is strictly above `llr_threshold`, else `None`.
pub fn sstvd<T: Real>(record: &CircuitRecord, contexts: &[&str], llr_threshold: T) -> Result<Option<T>> {
    let tvd = observed_tvd(record, contexts)?;
    let llr: T = llr_from_pools(&record.select(contexts)?)?;
    Ok(significant(tvd, llr, llr_threshold))
}

pub(crate) fn significant<T: Real>(tvd: T, llr: T, llr_threshold: T) -> Option<T> {
    (llr > llr_threshold).then_some(tvd)
}

/// Largest non-null SSTVD, or `None` when every circuit is null.
pub fn max_sstvd<T: Real>(results: &[QuantificationResult<T>]) -> Result<Option<T>> {
    if results.is_empty() {
        return Err(Error::invalid("max SSTVD over an empty set"));
    }
    Ok(results.iter().filter_map(|r| r.sstvd).reduce(T::max))
}

/// Largest SSTVD divided by gate count. Circuits without a known positive
/// gate count are skipped.
pub fn max_sstvd_per_gate<T: Real>(items: &[(Option<T>, Option<usize>)]) -> Option<T> {
    items
        .iter()
        .filter_map(|&(s, len)| match (s, len) {
            (Some(s), Some(l)) if l > 0 => Some(s / T::count(l as u64)),
            _ => None,
        })
        .reduce(T::max)
}
