//! End-to-end analyses: a plan of joint and pairwise context comparisons,
//! each run at its share of the global significance through the combined
//! aggregate + Hochberg procedure, with JSD/TVD/SSTVD per circuit.
//!
//! Reports are plain data in double precision and serialize to JSON. The
//! plotting tables (pairwise matrices, JSD against core length) are
//! written as CSV.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::{read_json, ContextDataset, FORMAT_VERSION};
use crate::divergence::{jsd_from_llr, jsd_threshold, max_sstvd_per_gate, observed_tvd};
use crate::error::{Error, Result};
use crate::hypothesis::{llr_aggregate, llr_single, llr_threshold, n_sigma_threshold, CircuitTestResult};
use crate::multitest::{check_alpha, combined_procedure};

/// One context comparison and its share of the global significance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub id: String,
    pub contexts: Vec<String>,
    pub weight: f64,
}

/// Ordered list of comparisons with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonPlan {
    comparisons: Vec<Comparison>,
}

#[derive(Deserialize)]
struct PlanFile {
    comparisons: Vec<PlanEntry>,
}

#[derive(Deserialize)]
struct PlanEntry {
    id: Option<String>,
    contexts: Vec<String>,
    weight: Option<f64>,
}

fn pair_id(a: &str, b: &str) -> String {
    format!("{a} vs {b}")
}

impl ComparisonPlan {
    pub fn new(comparisons: Vec<Comparison>) -> Result<Self> {
        if comparisons.is_empty() {
            return Err(Error::invalid("comparison plan is empty"));
        }
        let mut ids = HashSet::new();
        for c in &comparisons {
            if !ids.insert(c.id.as_str()) {
                return Err(Error::invalid(format!("duplicate comparison id '{}'", c.id)));
            }
            if c.contexts.len() < 2 {
                return Err(Error::invalid(format!("comparison '{}' needs at least 2 contexts", c.id)));
            }
            let distinct: HashSet<_> = c.contexts.iter().collect();
            if distinct.len() != c.contexts.len() {
                return Err(Error::invalid(format!("comparison '{}' repeats a context", c.id)));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::invalid(format!("comparison '{}' has invalid weight {}", c.id, c.weight)));
            }
        }
        let total: f64 = comparisons.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("comparison weights sum to {total}, not 1")));
        }
        Ok(Self { comparisons })
    }

    fn equal_weights(parts: Vec<(String, Vec<String>)>) -> Result<Self> {
        let w = 1.0 / parts.len().max(1) as f64;
        Self::new(
            parts
                .into_iter()
                .map(|(id, contexts)| Comparison { id, contexts, weight: w })
                .collect(),
        )
    }

    /// All contexts compared at once.
    pub fn joint(contexts: &[String]) -> Result<Self> {
        Self::equal_weights(vec![("joint".into(), contexts.to_vec())])
    }

    /// Every unordered pair, equal weights.
    pub fn pairs(contexts: &[String]) -> Result<Self> {
        let mut parts = Vec::new();
        for (i, a) in contexts.iter().enumerate() {
            for b in &contexts[i + 1..] {
                parts.push((pair_id(a, b), vec![a.clone(), b.clone()]));
            }
        }
        Self::equal_weights(parts)
    }

    /// One comparison for two contexts; otherwise the joint comparison
    /// followed by every pair, all equally weighted.
    pub fn auto(contexts: &[String]) -> Result<Self> {
        if contexts.len() <= 2 {
            return Self::joint(contexts);
        }
        let mut parts = vec![("joint".to_string(), contexts.to_vec())];
        parts.extend(
            Self::pairs(contexts)?
                .comparisons
                .into_iter()
                .map(|c| (c.id, c.contexts)),
        );
        Self::equal_weights(parts)
    }

    /// Plan file: `{"comparisons": [{"id": ..., "contexts": [...], "weight": ...}]}`.
    /// A missing id becomes `"a vs b"` for a pair and `"a+b+c"` otherwise.
    /// Weights are either all given or all omitted (equal split).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: PlanFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            input: "comparison plan".into(),
            message: e.to_string(),
        })?;
        Self::from_entries(file.comparisons)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: PlanFile = read_json(path.as_ref())?;
        Self::from_entries(file.comparisons)
    }

    fn from_entries(entries: Vec<PlanEntry>) -> Result<Self> {
        let given = entries.iter().filter(|e| e.weight.is_some()).count();
        if given != 0 && given != entries.len() {
            return Err(Error::invalid("give a weight for every comparison or for none"));
        }
        let equal = 1.0 / entries.len().max(1) as f64;
        let comparisons = entries
            .into_iter()
            .map(|e| {
                let id = e.id.unwrap_or_else(|| match e.contexts.as_slice() {
                    [a, b] => pair_id(a, b),
                    all => all.join("+"),
                });
                Comparison {
                    id,
                    contexts: e.contexts,
                    weight: e.weight.unwrap_or(equal),
                }
            })
            .collect();
        Self::new(comparisons)
    }

    pub fn comparisons(&self) -> &[Comparison] {
        &self.comparisons
    }

    /// Every referenced context exists in the dataset.
    pub fn validate_for(&self, dataset: &ContextDataset) -> Result<()> {
        for c in &self.comparisons {
            for ctx in &c.contexts {
                if !dataset.contexts.contains(ctx) {
                    return Err(Error::invalid(format!(
                        "comparison '{}' references unknown context '{ctx}'",
                        c.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub llr: f64,
    pub k: u64,
    pub p: f64,
    pub n_sigma: f64,
    pub n_sigma_threshold: f64,
    /// Aggregate test rejected at `alpha_local / 2`.
    pub triggered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitReport {
    pub id: String,
    pub core_length: u32,
    pub gate_count: Option<usize>,
    pub llr: f64,
    pub k: u64,
    pub p: f64,
    pub jsd: f64,
    pub jsd_threshold: f64,
    pub tvd: Option<f64>,
    pub sstvd: Option<f64>,
    pub rejected: bool,
    pub asymptotics_questionable: bool,
}

/// A circuit left out of a comparison because it lacks one of its contexts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedCircuit {
    pub id: String,
    pub missing_context: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub comparison_id: String,
    pub contexts: Vec<String>,
    pub weight: f64,
    pub alpha_local: f64,
    pub aggregate: AggregateSummary,
    /// Level the per-circuit Hochberg correction ran at.
    pub hochberg_alpha: f64,
    pub p_threshold: f64,
    /// Absent when included circuits differ in degrees of freedom.
    pub llr_threshold: Option<f64>,
    pub detected: bool,
    pub rejected_count: usize,
    pub max_sstvd: Option<f64>,
    pub max_sstvd_per_gate: Option<f64>,
    pub circuits: Vec<CircuitReport>,
    pub skipped: Vec<SkippedCircuit>,
}

impl ComparisonReport {
    pub fn rejected(&self) -> impl Iterator<Item = &CircuitReport> {
        self.circuits.iter().filter(|c| c.rejected)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub format_version: String,
    pub alpha: f64,
    /// Logarithm base of every divergence in the report.
    pub units: String,
    pub comparisons: Vec<ComparisonReport>,
}

impl AnalysisReport {
    pub fn new(alpha: f64, comparisons: Vec<ComparisonReport>) -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            alpha,
            units: "nats".into(),
            comparisons,
        }
    }

    pub fn to_json_string(&self) -> String {
        crate::counts::to_json_string(self)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            input: "report".into(),
            message: e.to_string(),
        })?;
        report.check_version()?;
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::counts::save_report(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let report = crate::counts::load_report(path)?;
        report.check_version()?;
        Ok(report)
    }

    fn check_version(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::schema(format!(
                "unsupported report format_version '{}'",
                self.format_version
            )));
        }
        Ok(())
    }
}

/// Runs every comparison of the plan at `alpha · weight`.
pub fn run_analysis(dataset: &ContextDataset, plan: &ComparisonPlan, alpha: f64) -> Result<AnalysisReport> {
    check_alpha(alpha)?;
    plan.validate_for(dataset)?;
    let comparisons = plan
        .comparisons
        .par_iter()
        .map(|c| run_comparison(dataset, c, alpha * c.weight))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisReport::new(alpha, comparisons))
}

/// One comparison at local significance `alpha_local`.
pub fn run_comparison(dataset: &ContextDataset, comparison: &Comparison, alpha_local: f64) -> Result<ComparisonReport> {
    check_alpha(alpha_local)?;
    let ctx: Vec<&str> = comparison.contexts.iter().map(String::as_str).collect();

    let mut included = Vec::new();
    let mut skipped = Vec::new();
    for rec in &dataset.circuits {
        match ctx.iter().find(|c| rec.counts(c).is_none()) {
            Some(missing) => skipped.push(SkippedCircuit {
                id: rec.id.clone(),
                missing_context: missing.to_string(),
            }),
            None => included.push(rec),
        }
    }
    if included.is_empty() {
        return Err(Error::invalid(format!(
            "comparison '{}': no circuit has every compared context",
            comparison.id
        )));
    }

    let tests: Vec<CircuitTestResult<f64>> = included
        .par_iter()
        .map(|rec| llr_single(rec, &ctx))
        .collect::<Result<_>>()?;
    let agg = llr_aggregate(&tests)?;
    let outcome = combined_procedure(&tests, &agg, alpha_local)?;
    let half = alpha_local / 2.0;
    let aggregate = AggregateSummary {
        llr: agg.llr,
        k: agg.dof,
        p: agg.p_value,
        n_sigma: agg.n_sigma,
        n_sigma_threshold: n_sigma_threshold(half, agg.dof)?,
        triggered: outcome.aggregate_triggered,
    };

    let rejected: HashSet<&str> = outcome.rejected_ids.iter().map(String::as_str).collect();
    let pairwise = ctx.len() == 2;
    let circuits = included
        .par_iter()
        .zip(&tests)
        .map(|(rec, t)| {
            let lam_thr = match outcome.llr_threshold {
                Some(v) => v,
                None => llr_threshold(outcome.p_threshold, t.dof)?,
            };
            let is_rejected = rejected.contains(t.circuit_id.as_str());
            let tvd = if pairwise { Some(observed_tvd::<f64>(rec, &ctx)?) } else { None };
            Ok(CircuitReport {
                id: t.circuit_id.clone(),
                core_length: rec.core_length,
                gate_count: rec.gate_count(),
                llr: t.llr,
                k: t.dof,
                p: t.p_value,
                jsd: jsd_from_llr(t.llr, t.total),
                jsd_threshold: jsd_threshold(lam_thr, t.total)?,
                tvd,
                sstvd: tvd.filter(|_| is_rejected),
                rejected: is_rejected,
                asymptotics_questionable: t.asymptotics_questionable,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let max_sstvd = circuits.iter().filter_map(|c| c.sstvd).reduce(f64::max);
    let per_gate: Vec<_> = circuits.iter().map(|c| (c.sstvd, c.gate_count)).collect();
    Ok(ComparisonReport {
        comparison_id: comparison.id.clone(),
        contexts: comparison.contexts.clone(),
        weight: comparison.weight,
        alpha_local,
        aggregate,
        hochberg_alpha: outcome.level,
        p_threshold: outcome.p_threshold,
        llr_threshold: outcome.llr_threshold,
        detected: outcome.detected(),
        rejected_count: outcome.rejected_ids.len(),
        max_sstvd,
        max_sstvd_per_gate: max_sstvd_per_gate(&per_gate),
        circuits,
        skipped,
    })
}

/// Pairwise summary over contexts `0..C`: `n_sigma[i][j-1]` and
/// `rejected[i][j-1]` hold the comparison of contexts `i < j`; cells with
/// `j <= i` are `None`. Both matrices are `(C-1) × (C-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatrices {
    pub contexts: Vec<String>,
    pub n_sigma: Vec<Vec<Option<f64>>>,
    pub rejected: Vec<Vec<Option<usize>>>,
}

pub fn pairwise_matrices(reports: &[ComparisonReport], contexts: &[String]) -> Result<PairwiseMatrices> {
    if contexts.len() < 2 {
        return Err(Error::invalid("pairwise matrices need at least 2 contexts"));
    }
    let n = contexts.len() - 1;
    let mut n_sigma = vec![vec![None; n]; n];
    let mut rejected = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i + 1..=n {
            let (a, b) = (&contexts[i], &contexts[j]);
            let report = reports
                .iter()
                .find(|r| r.contexts.len() == 2 && r.contexts.contains(a) && r.contexts.contains(b))
                .ok_or_else(|| Error::invalid(format!("no comparison of '{a}' with '{b}'")))?;
            n_sigma[i][j - 1] = Some(report.aggregate.n_sigma);
            rejected[i][j - 1] = Some(report.rejected_count);
        }
    }
    Ok(PairwiseMatrices {
        contexts: contexts.to_vec(),
        n_sigma,
        rejected,
    })
}

impl PairwiseMatrices {
    pub fn n_sigma_between(&self, i: usize, j: usize) -> Option<f64> {
        let (i, j) = (i.min(j), i.max(j));
        (i != j).then(|| self.n_sigma[i][j - 1]).flatten()
    }

    pub fn rejected_between(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = (i.min(j), i.max(j));
        (i != j).then(|| self.rejected[i][j - 1]).flatten()
    }

    /// `C × C` table with N_σ above the diagonal and rejected-circuit counts
    /// below it; the diagonal is blank.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["context".to_string()];
        header.extend(self.contexts.iter().cloned());
        w.write_record(&header)?;
        for (i, row_label) in self.contexts.iter().enumerate() {
            let mut row = vec![row_label.clone()];
            for j in 0..self.contexts.len() {
                row.push(match i.cmp(&j) {
                    std::cmp::Ordering::Less => fmt_opt(self.n_sigma_between(i, j)),
                    std::cmp::Ordering::Greater => self
                        .rejected_between(i, j)
                        .map_or_else(String::new, |v| v.to_string()),
                    std::cmp::Ordering::Equal => String::new(),
                });
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsdProfileRow {
    pub circuit_id: String,
    pub core_length: u32,
    pub jsd: f64,
    pub jsd_threshold: f64,
    pub rejected: bool,
}

/// One row per circuit of the comparison, in report order.
pub fn jsd_profile(report: &ComparisonReport) -> Vec<JsdProfileRow> {
    report
        .circuits
        .iter()
        .map(|c| JsdProfileRow {
            circuit_id: c.id.clone(),
            core_length: c.core_length,
            jsd: c.jsd,
            jsd_threshold: c.jsd_threshold,
            rejected: c.rejected,
        })
        .collect()
}

pub fn write_jsd_profile_csv<W: Write>(rows: &[JsdProfileRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["circuit_id", "core_length", "jsd", "jsd_threshold", "rejected"])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
