//! Multi-context outcome-count data and its JSON representation.
//!
//! ```json
//! {"format_version": "1.0",
//!  "outcomes": ["0", "1"],
//!  "contexts": ["a", "b"],
//!  "circuits": [{"id": "c0", "spec": "GhGsGs", "core_length": 0,
//!                "counts": {"a": [99, 101], "b": [131, 69]}}]}
//! ```
//!
//! Counts arrays are aligned with the dataset outcome list unless a circuit
//! carries its own `"outcomes"` override. Datasets are immutable once
//! loaded.

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gstgen::CircuitSpec;

pub const FORMAT_VERSION: &str = "1.0";

/// Outcome counts for one circuit in one context.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutcomeCounts(Vec<u64>);

impl OutcomeCounts {
    /// Requires at least two outcomes.
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::schema(format!(
                "need at least 2 outcomes, got {}",
                counts.len()
            )));
        }
        Ok(Self(counts))
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn num_outcomes(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for OutcomeCounts {
    type Output = u64;
    fn index(&self, i: usize) -> &u64 {
        &self.0[i]
    }
}

/// All pooled counts for one circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitRecord {
    pub id: String,
    pub spec: Option<CircuitSpec>,
    pub core_length: u32,
    /// Per-circuit outcome alphabet; `None` means the dataset's.
    pub outcomes: Option<Vec<String>>,
    counts: IndexMap<String, OutcomeCounts>,
}

impl CircuitRecord {
    /// Builds a record; all pools must share one outcome alphabet size and
    /// be nonempty.
    pub fn new(
        id: impl Into<String>,
        counts: impl IntoIterator<Item = (String, OutcomeCounts)>,
    ) -> Result<Self> {
        let id = id.into();
        let counts: IndexMap<String, OutcomeCounts> = counts.into_iter().collect();
        let mut width = None;
        for (ctx, c) in &counts {
            if c.total() == 0 {
                return Err(Error::EmptyPool {
                    circuit: id.clone(),
                    context: ctx.clone(),
                });
            }
            match width {
                None => width = Some(c.num_outcomes()),
                Some(w) if w != c.num_outcomes() => {
                    return Err(Error::schema(format!(
                        "circuit '{id}' context '{ctx}': {} outcomes, expected {w}",
                        c.num_outcomes()
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            id,
            spec: None,
            core_length: 0,
            outcomes: None,
            counts,
        })
    }

    pub fn with_spec(mut self, spec: CircuitSpec) -> Self {
        self.core_length = spec.core_length;
        self.spec = Some(spec);
        self
    }

    pub fn counts(&self, context: &str) -> Option<&OutcomeCounts> {
        self.counts.get(context)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn pools(&self) -> impl Iterator<Item = (&str, &OutcomeCounts)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_outcomes(&self) -> usize {
        self.counts.values().next().map_or(0, OutcomeCounts::num_outcomes)
    }

    /// Pools for the requested contexts, in the requested order.
    pub fn select(&self, contexts: &[&str]) -> Result<Vec<&OutcomeCounts>> {
        contexts
            .iter()
            .map(|c| {
                self.counts.get(*c).ok_or_else(|| Error::MissingContext {
                    circuit: self.id.clone(),
                    context: c.to_string(),
                })
            })
            .collect()
    }

    /// Number of gates, when the gate sequence is known.
    pub fn gate_count(&self) -> Option<usize> {
        self.spec.as_ref().map(CircuitSpec::len)
    }
}

/// Per-circuit, per-context count data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset", into = "RawDataset")]
pub struct ContextDataset {
    pub format_version: String,
    pub outcomes: Vec<String>,
    pub contexts: Vec<String>,
    pub circuits: Vec<CircuitRecord>,
}

impl ContextDataset {
    /// Validates and assembles a dataset. Record pools are reordered to the
    /// dataset's context order.
    pub fn new(
        outcomes: Vec<String>,
        contexts: Vec<String>,
        circuits: Vec<CircuitRecord>,
    ) -> Result<Self> {
        let ds = Self {
            format_version: FORMAT_VERSION.to_string(),
            outcomes,
            contexts,
            circuits,
        };
        ds.validated()
    }

    fn validated(mut self) -> Result<Self> {
        if self.outcomes.len() < 2 {
            return Err(Error::schema("dataset needs at least 2 outcome labels"));
        }
        unique(&self.outcomes, "outcome label")?;
        unique(&self.contexts, "context label")?;
        let ids: Vec<String> = self.circuits.iter().map(|c| c.id.clone()).collect();
        unique(&ids, "circuit id")?;

        let order: IndexMap<&str, usize> = self
            .contexts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        for rec in &mut self.circuits {
            for ctx in rec.counts.keys() {
                if !order.contains_key(ctx.as_str()) {
                    return Err(Error::MissingContext {
                        circuit: rec.id.clone(),
                        context: ctx.clone(),
                    });
                }
            }
            rec.counts.sort_by_cached_key(|k, _| order[k.as_str()]);

            let width = match &rec.outcomes {
                Some(o) => {
                    if o.len() < 2 {
                        return Err(Error::schema(format!(
                            "circuit '{}': outcome override needs at least 2 labels",
                            rec.id
                        )));
                    }
                    unique(o, "outcome label")?;
                    o.len()
                }
                None => self.outcomes.len(),
            };
            for (ctx, c) in &rec.counts {
                if c.num_outcomes() != width {
                    return Err(Error::schema(format!(
                        "circuit '{}' context '{ctx}': {} counts for {width} outcomes",
                        rec.id,
                        c.num_outcomes()
                    )));
                }
                if c.total() == 0 {
                    return Err(Error::EmptyPool {
                        circuit: rec.id.clone(),
                        context: ctx.clone(),
                    });
                }
            }
        }
        Ok(self)
    }

    pub fn outcomes_for<'a>(&'a self, record: &'a CircuitRecord) -> &'a [String] {
        record.outcomes.as_deref().unwrap_or(&self.outcomes)
    }

    pub fn circuit(&self, id: &str) -> Option<&CircuitRecord> {
        self.circuits.iter().find(|c| c.id == id)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawDataset = serde_json::from_str(text).map_err(|source| Error::Json {
            path: "<input>".into(),
            source,
        })?;
        Self::try_from(raw)
    }

    pub fn to_json_string(&self) -> String {
        to_json_string(self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let raw: RawDataset = read_json(path.as_ref())?;
        Self::try_from(raw)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    /// Sums counts over the outcome bits not listed in `kept_bits`.
    ///
    /// Outcome labels must be equal-width strings of `0`/`1`; bit `i` is the
    /// `i`-th character. The marginal labels are the kept characters in
    /// `kept_bits` order, listed in order of first appearance.
    pub fn marginalize(&self, kept_bits: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        let top = marginal_map(&self.outcomes, kept_bits)?;
        out.outcomes = top.labels.clone();
        for rec in &mut out.circuits {
            let map = match &rec.outcomes {
                Some(o) => {
                    let m = marginal_map(o, kept_bits)?;
                    rec.outcomes = Some(m.labels.clone());
                    m
                }
                None => top.clone(),
            };
            for counts in rec.counts.values_mut() {
                let mut summed = vec![0u64; map.labels.len()];
                for (i, &n) in counts.0.iter().enumerate() {
                    summed[map.target[i]] += n;
                }
                *counts = OutcomeCounts(summed);
            }
        }
        if out.outcomes.len() < 2 {
            return Err(Error::invalid("marginal keeps fewer than 2 outcomes"));
        }
        Ok(out)
    }
}

#[derive(Clone)]
struct MarginalMap {
    labels: Vec<String>,
    target: Vec<usize>,
}

fn marginal_map(labels: &[String], kept_bits: &[usize]) -> Result<MarginalMap> {
    let width = labels.first().map_or(0, String::len);
    for l in labels {
        if l.len() != width || !l.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::invalid(format!(
                "outcome label '{l}' is not a fixed-width bitstring"
            )));
        }
    }
    if kept_bits.is_empty() {
        return Err(Error::invalid("no bits kept"));
    }
    let mut seen = HashSet::new();
    for &b in kept_bits {
        if b >= width || !seen.insert(b) {
            return Err(Error::invalid(format!("invalid or repeated bit index {b}")));
        }
    }
    let mut out_labels: Vec<String> = Vec::new();
    let mut target = Vec::with_capacity(labels.len());
    for l in labels {
        let bytes = l.as_bytes();
        let key: String = kept_bits.iter().map(|&b| bytes[b] as char).collect();
        let idx = match out_labels.iter().position(|x| *x == key) {
            Some(i) => i,
            None => {
                out_labels.push(key);
                out_labels.len() - 1
            }
        };
        target.push(idx);
    }
    Ok(MarginalMap {
        labels: out_labels,
        target,
    })
}

fn unique(items: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for s in items {
        if !seen.insert(s.as_str()) {
            return Err(Error::schema(format!("duplicate {what} '{s}'")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RawDataset {
    format_version: String,
    outcomes: Vec<String>,
    contexts: Vec<String>,
    circuits: Vec<RawCircuit>,
}

#[derive(Serialize, Deserialize)]
struct RawCircuit {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec: Option<String>,
    #[serde(default)]
    core_length: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcomes: Option<Vec<String>>,
    counts: IndexMap<String, Vec<i64>>,
}

impl TryFrom<RawDataset> for ContextDataset {
    type Error = Error;

    fn try_from(raw: RawDataset) -> Result<Self> {
        if raw.format_version != FORMAT_VERSION {
            return Err(Error::schema(format!(
                "unsupported format_version '{}'",
                raw.format_version
            )));
        }
        let mut circuits = Vec::with_capacity(raw.circuits.len());
        for rc in raw.circuits {
            let mut counts = IndexMap::new();
            for (ctx, values) in rc.counts {
                let mut v = Vec::with_capacity(values.len());
                for n in values {
                    if n < 0 {
                        return Err(Error::schema(format!(
                            "circuit '{}' context '{ctx}': negative count {n}",
                            rc.id
                        )));
                    }
                    v.push(n as u64);
                }
                let c = OutcomeCounts::new(v).map_err(|e| {
                    Error::schema(format!("circuit '{}' context '{ctx}': {e}", rc.id))
                })?;
                counts.insert(ctx, c);
            }
            let spec = match rc.spec {
                Some(s) => {
                    let mut spec = CircuitSpec::parse(&s)
                        .map_err(|e| Error::schema(format!("circuit '{}': {e}", rc.id)))?;
                    spec.core_length = rc.core_length;
                    Some(spec)
                }
                None => None,
            };
            circuits.push(CircuitRecord {
                id: rc.id,
                spec,
                core_length: rc.core_length,
                outcomes: rc.outcomes,
                counts,
            });
        }
        Self {
            format_version: raw.format_version,
            outcomes: raw.outcomes,
            contexts: raw.contexts,
            circuits,
        }
        .validated()
    }
}

impl From<ContextDataset> for RawDataset {
    fn from(ds: ContextDataset) -> Self {
        RawDataset {
            format_version: ds.format_version,
            outcomes: ds.outcomes,
            contexts: ds.contexts,
            circuits: ds
                .circuits
                .into_iter()
                .map(|c| RawCircuit {
                    id: c.id,
                    spec: c.spec.map(|s| s.to_string()),
                    core_length: c.core_length,
                    outcomes: c.outcomes,
                    counts: c
                        .counts
                        .into_iter()
                        .map(|(k, v)| (k, v.0.into_iter().map(|n| n as i64).collect()))
                        .collect(),
                })
                .collect(),
        }
    }
}

pub(crate) fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory value serializes");
    s.push('\n');
    s
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes an analysis report as pretty JSON. Output is byte-identical for
/// identical reports.
pub fn save_report(report: &crate::pipeline::AnalysisReport, path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), report)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<crate::pipeline::AnalysisReport> {
    read_json(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bit_dataset(c: [u64; 4]) -> ContextDataset {
        let rec = CircuitRecord::new(
            "q",
            [
                ("a".to_string(), OutcomeCounts::new(c.to_vec()).unwrap()),
                ("b".to_string(), OutcomeCounts::new(vec![1, 1, 1, 1]).unwrap()),
            ],
        )
        .unwrap();
        ContextDataset::new(
            ["00", "01", "10", "11"].map(String::from).to_vec(),
            vec!["a".into(), "b".into()],
            vec![rec],
        )
        .unwrap()
    }

    #[test]
    fn loads_documented_example() {
        let text = r#"{"format_version":"1.0","outcomes":["0","1"],"contexts":["c1","c2"],
            "circuits":[{"id":"x","spec":"Gx","core_length":0,"counts":{"c1":[99,101],"c2":[131,69]}}]}"#;
        let ds = ContextDataset::from_json_str(text).unwrap();
        assert_eq!(ds.contexts.len(), 2);
        let rec = &ds.circuits[0];
        assert_eq!(rec.num_outcomes(), 2);
        assert_eq!(rec.counts("c1").unwrap().total(), 200);
        assert_eq!(rec.counts("c2").unwrap().total(), 200);
        assert_eq!(rec.spec.as_ref().unwrap().to_string(), "Gx");
    }

    #[test]
    fn empty_pool_rejected() {
        let text = r#"{"format_version":"1.0","outcomes":["0","1"],"contexts":["a","b"],
            "circuits":[{"id":"x","counts":{"a":[0,0],"b":[1,1]}}]}"#;
        let err = ContextDataset::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("empty pool"), "{err}");
        assert!(err.contains("'x'") && err.contains("'a'"), "{err}");
    }

    #[test]
    fn alphabet_mismatch_rejected() {
        let text = r#"{"format_version":"1.0","outcomes":["0","1"],"contexts":["c1","c2"],
            "circuits":[{"id":"x","counts":{"c1":[1,2],"c2":[1,2,3]}}]}"#;
        let err = ContextDataset::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("schema violation") && err.contains("c2"), "{err}");
    }

    #[test]
    fn negative_count_names_location() {
        let text = r#"{"format_version":"1.0","outcomes":["0","1"],"contexts":["a","b"],
            "circuits":[{"id":"q7","counts":{"a":[1,2],"b":[-1,3]}}]}"#;
        let err = ContextDataset::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("q7") && err.contains("'b'") && err.contains("negative"), "{err}");
    }

    #[test]
    fn undeclared_context_and_duplicates_rejected() {
        let text = r#"{"format_version":"1.0","outcomes":["0","1"],"contexts":["a"],
            "circuits":[{"id":"x","counts":{"a":[1,2],"z":[1,3]}}]}"#;
        assert!(matches!(
            ContextDataset::from_json_str(text),
            Err(Error::MissingContext { .. })
        ));
        let text = r#"{"format_version":"1.0","outcomes":["0","1"],"contexts":["a","a"],"circuits":[]}"#;
        assert!(ContextDataset::from_json_str(text).is_err());
        let text = r#"{"format_version":"1.0","outcomes":["0","1"],"contexts":["a"],
            "circuits":[{"id":"x","counts":{"a":[1,2]}},{"id":"x","counts":{"a":[1,2]}}]}"#;
        assert!(ContextDataset::from_json_str(text).is_err());
        let text = r#"{"format_version":"1.0","outcomes":["0","1"],"contexts":["a"],"circuits":[{"counts":{}}]}"#;
        assert!(ContextDataset::from_json_str(text).unwrap_err().to_string().contains("id"));
    }

    #[test]
    fn per_circuit_alphabet_override() {
        let text = r#"{"format_version":"1.0","outcomes":["0","1"],"contexts":["a","b"],
            "circuits":[{"id":"x","outcomes":["0","1","2"],"counts":{"a":[1,2,3],"b":[3,2,1]}},
                        {"id":"y","counts":{"a":[1,2],"b":[2,1]}}]}"#;
        let ds = ContextDataset::from_json_str(text).unwrap();
        assert_eq!(ds.outcomes_for(&ds.circuits[0]).len(), 3);
        assert_eq!(ds.outcomes_for(&ds.circuits[1]).len(), 2);
    }

    #[test]
    fn pools_reordered_to_dataset_order() {
        let text = r#"{"format_version":"1.0","outcomes":["0","1"],"contexts":["a","b"],
            "circuits":[{"id":"x","counts":{"b":[1,2],"a":[3,4]}}]}"#;
        let ds = ContextDataset::from_json_str(text).unwrap();
        let order: Vec<&str> = ds.circuits[0].contexts().collect();
        assert_eq!(order, ["a", "b"]);
    }

    #[test]
    fn marginalize_keeps_leading_bit() {
        let m = two_bit_dataset([3, 5, 7, 9]).marginalize(&[0]).unwrap();
        assert_eq!(m.outcomes, ["0", "1"]);
        assert_eq!(m.circuits[0].counts("a").unwrap().as_slice(), [8, 16]);
        assert_eq!(m.circuits[0].counts("b").unwrap().total(), 4);
    }

    #[test]
    fn marginalize_second_bit() {
        let m = two_bit_dataset([1, 0, 0, 1]).marginalize(&[1]).unwrap();
        assert_eq!(m.circuits[0].counts("a").unwrap().as_slice(), [1, 1]);
    }

    #[test]
    fn marginalize_all_bits_is_identity() {
        let ds = two_bit_dataset([3, 5, 7, 9]);
        assert_eq!(ds.marginalize(&[0, 1]).unwrap(), ds);
    }

    #[test]
    fn marginalize_rejects_non_bitstrings() {
        let rec = CircuitRecord::new(
            "q",
            [("a".to_string(), OutcomeCounts::new(vec![1, 2]).unwrap())],
        )
        .unwrap();
        let ds = ContextDataset::new(vec!["up".into(), "dn".into()], vec!["a".into()], vec![rec]).unwrap();
        assert!(ds.marginalize(&[0]).is_err());
        assert!(two_bit_dataset([1, 1, 1, 1]).marginalize(&[2]).is_err());
        assert!(two_bit_dataset([1, 1, 1, 1]).marginalize(&[0, 0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dataset_strategy() -> impl Strategy<Value = ContextDataset> {
            (1usize..4, 1usize..4, 1usize..5).prop_flat_map(|(bits, n_ctx, n_circ)| {
                let m = 1usize << bits;
                prop::collection::vec(
                    prop::collection::vec(prop::collection::vec(0u64..50, m), n_ctx),
                    n_circ,
                )
                .prop_map(move |tables| {
                    let outcomes: Vec<String> =
                        (0..m).map(|i| format!("{:0width$b}", i, width = bits)).collect();
                    let contexts: Vec<String> = (0..n_ctx).map(|c| format!("ctx{c}")).collect();
                    let circuits = tables
                        .into_iter()
                        .enumerate()
                        .map(|(q, table)| {
                            let pools = table.into_iter().enumerate().map(|(c, mut v)| {
                                v[0] += 1;
                                (format!("ctx{c}"), OutcomeCounts::new(v).unwrap())
                            });
                            CircuitRecord::new(format!("q{q}"), pools)
                                .unwrap()
                                .with_spec(CircuitSpec::parse("GxGy").unwrap())
                        })
                        .collect();
                    ContextDataset::new(outcomes, contexts, circuits).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn json_round_trip(ds in dataset_strategy()) {
                let back = ContextDataset::from_json_str(&ds.to_json_string()).unwrap();
                prop_assert_eq!(back, ds);
            }

            #[test]
            fn marginalization_conserves_totals_and_commutes(ds in dataset_strategy(), keep_last in any::<bool>()) {
                let width = ds.outcomes[0].len();
                let kept = if keep_last { vec![width - 1] } else { vec![0] };
                let m = ds.marginalize(&kept).unwrap();
                for (orig, marg) in ds.circuits.iter().zip(&m.circuits) {
                    let mut pooled_then_marg = vec![0u64; m.outcomes.len()];
                    let mut marg_then_pooled = vec![0u64; m.outcomes.len()];
                    for ((_, a), (_, b)) in orig.pools().zip(marg.pools()) {
                        prop_assert_eq!(a.total(), b.total());
                        for (i, &n) in a.as_slice().iter().enumerate() {
                            let key: String = kept.iter().map(|&bit| ds.outcomes[i].as_bytes()[bit] as char).collect();
                            let j = m.outcomes.iter().position(|o| *o == key).unwrap();
                            pooled_then_marg[j] += n;
                        }
                        for (j, &n) in b.as_slice().iter().enumerate() {
                            marg_then_pooled[j] += n;
                        }
                    }
                    prop_assert_eq!(pooled_then_marg, marg_then_pooled);
                }
            }
        }
    }
}
