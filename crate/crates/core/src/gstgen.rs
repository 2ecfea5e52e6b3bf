//! Gate-set-tomography circuit lists.
//!
//! Circuits are gate-label sequences in operation order: `GhGs` means a
//! Hadamard followed by a phase gate. The empty circuit is written `{}`.
//! Two families are generated from a [`GstDesign`]:
//!
//! * linear-inversion circuits: every fiducial `F`, every fiducial pair
//!   `Fp Fm`, and every `Fp G Fm` for gates `G` in the gate set;
//! * long-sequence circuits: the above plus `Fp g^⌊L/ℓ(g)⌋ Fm` for every germ
//!   `g` and every `L` in `1, 2, 4, …, L_max`.
//!
//! Both lists are deduplicated on the flattened gate sequence, keeping the
//! first occurrence. Iteration runs over `L` in increasing order, so a
//! sequence produced at several germ powers keeps the smallest one as its
//! core length.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Labels understood by the default registry and ideal gate model.
pub const STANDARD_GATES: [&str; 5] = ["Gi", "Gx", "Gy", "Gh", "Gs"];

/// One gate symbol such as `Gx`: an uppercase `G` followed by at least one
/// lowercase letter, digit or underscore.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GateLabel(String);

impl GateLabel {
    pub fn new(label: &str) -> Result<Self> {
        let mut chars = label.chars();
        let valid = chars.next() == Some('G')
            && !label[1..].is_empty()
            && label[1..]
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
        if !valid {
            return Err(Error::Parse {
                input: label.to_string(),
                message: "gate labels look like 'Gx': 'G' then lowercase letters or digits".into(),
            });
        }
        Ok(Self(label.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for GateLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::new(s)
    }
}

impl Serialize for GateLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for GateLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        GateLabel::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Set of gate labels a design may use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateRegistry {
    labels: BTreeSet<GateLabel>,
}

impl GateRegistry {
    pub fn standard() -> Self {
        Self {
            labels: STANDARD_GATES
                .iter()
                .map(|s| GateLabel(s.to_string()))
                .collect(),
        }
    }

    pub fn register(&mut self, label: GateLabel) {
        self.labels.insert(label);
    }

    pub fn contains(&self, label: &GateLabel) -> bool {
        self.labels.contains(label)
    }
}

impl Default for GateRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

/// Location of a repeated germ inside a flattened circuit, kept so the
/// simulator can exponentiate the germ unitary instead of multiplying it out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GermBlock {
    pub start: usize,
    pub germ_len: usize,
    pub reps: usize,
}

/// A gate sequence plus its core length (germ power `L`, 0 for circuits
/// that are not germ powers).
#[derive(Debug, Clone, Default)]
pub struct CircuitSpec {
    gates: Vec<GateLabel>,
    pub core_length: u32,
    germ_block: Option<GermBlock>,
}

impl PartialEq for CircuitSpec {
    fn eq(&self, other: &Self) -> bool {
        self.gates == other.gates && self.core_length == other.core_length
    }
}

impl Eq for CircuitSpec {}

impl CircuitSpec {
    pub fn new(gates: Vec<GateLabel>, core_length: u32) -> Self {
        Self {
            gates,
            core_length,
            germ_block: None,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn gates(&self) -> &[GateLabel] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn germ_block(&self) -> Option<GermBlock> {
        self.germ_block
    }

    /// Parses `{}` or a concatenation of labels such as `GxGyGy`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "{}" || text.is_empty() {
            return Ok(Self::empty());
        }
        let parse_err = |message: &str| Error::Parse {
            input: text.to_string(),
            message: message.to_string(),
        };
        if !text.starts_with('G') {
            return Err(parse_err("circuit must start with a gate label"));
        }
        let mut gates = Vec::new();
        let mut start = 0;
        for (i, c) in text.char_indices().skip(1) {
            if c == 'G' {
                gates.push(GateLabel::new(&text[start..i])?);
                start = i;
            } else if !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
                return Err(parse_err(&format!("unexpected character '{c}'")));
            }
        }
        gates.push(GateLabel::new(&text[start..])?);
        Ok(Self::new(gates, 0))
    }

    fn concat(parts: &[&[GateLabel]]) -> Vec<GateLabel> {
        parts.iter().flat_map(|p| p.iter().cloned()).collect()
    }
}

impl fmt::Display for CircuitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.gates.is_empty() {
            return f.write_str("{}");
        }
        for g in &self.gates {
            f.write_str(g.as_str())?;
        }
        Ok(())
    }
}

impl FromStr for CircuitSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Serialized form of one generated circuit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitEntry {
    pub spec: String,
    pub core_length: u32,
}

impl From<&CircuitSpec> for CircuitEntry {
    fn from(c: &CircuitSpec) -> Self {
        Self {
            spec: c.to_string(),
            core_length: c.core_length,
        }
    }
}

fn sequence_strings<S: Serializer>(
    seqs: &[Vec<GateLabel>],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(seqs.iter().map(|g| CircuitSpec::new(g.clone(), 0).to_string()))
}

fn sequences_from_strings<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Vec<Vec<GateLabel>>, D::Error> {
    let raw = Vec::<String>::deserialize(d)?;
    raw.iter()
        .map(|s| CircuitSpec::parse(s).map(|c| c.gates))
        .collect::<Result<_>>()
        .map_err(serde::de::Error::custom)
}

/// Gate set, fiducials, germs and maximum germ power.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GstDesign {
    pub gates: Vec<GateLabel>,
    #[serde(serialize_with = "sequence_strings", deserialize_with = "sequences_from_strings")]
    pub prep_fiducials: Vec<Vec<GateLabel>>,
    #[serde(serialize_with = "sequence_strings", deserialize_with = "sequences_from_strings")]
    pub meas_fiducials: Vec<Vec<GateLabel>>,
    #[serde(
        default,
        serialize_with = "sequence_strings",
        deserialize_with = "sequences_from_strings"
    )]
    pub germs: Vec<Vec<GateLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_length: Option<u32>,
}

fn seqs(items: &[&str]) -> Vec<Vec<GateLabel>> {
    items
        .iter()
        .map(|s| CircuitSpec::parse(s).expect("builtin sequence").gates)
        .collect()
}

fn labels(items: &[&str]) -> Vec<GateLabel> {
    items.iter().map(|s| GateLabel(s.to_string())).collect()
}

impl GstDesign {
    /// Single-qubit X/Y π/2-rotation design: six fiducials, six germs,
    /// `L_max = 256` (1405 distinct long-sequence circuits).
    pub fn xy_drift() -> Self {
        let fid = ["{}", "Gx", "Gy", "GxGx", "GxGxGx", "GyGyGy"];
        Self {
            gates: labels(&["Gx", "Gy"]),
            prep_fiducials: seqs(&fid),
            meas_fiducials: seqs(&fid),
            germs: seqs(&["Gx", "Gy", "GxGy", "GxGxGy", "GxGyGy", "GxGxGyGxGyGy"]),
            max_length: Some(256),
        }
    }

    /// Idle/Hadamard/phase linear-inversion design (40 distinct circuits).
    pub fn ihs_lgst() -> Self {
        Self {
            gates: labels(&["Gi", "Gh", "Gs"]),
            prep_fiducials: seqs(&["{}", "Gh", "GhGs", "GhGsGs"]),
            meas_fiducials: seqs(&["{}", "Gh", "GsGh", "GhGsGh"]),
            germs: Vec::new(),
            max_length: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let design: Self = crate::counts::read_json(path.as_ref())?;
        design.validate(&GateRegistry::standard())?;
        Ok(design)
    }

    /// Checks the design against a gate registry: every gate registered,
    /// every fiducial and germ built from the design's own gate set.
    pub fn validate(&self, registry: &GateRegistry) -> Result<()> {
        if self.gates.is_empty() {
            return Err(Error::invalid("design has an empty gate set"));
        }
        if self.prep_fiducials.is_empty() || self.meas_fiducials.is_empty() {
            return Err(Error::invalid("design needs preparation and measurement fiducials"));
        }
        for g in &self.gates {
            if !registry.contains(g) {
                return Err(Error::UnknownGate(g.to_string()));
            }
        }
        let gate_set: HashSet<&GateLabel> = self.gates.iter().collect();
        let all = self
            .prep_fiducials
            .iter()
            .chain(&self.meas_fiducials)
            .chain(&self.germs);
        for seq in all {
            if let Some(g) = seq.iter().find(|g| !gate_set.contains(g)) {
                return Err(Error::invalid(format!(
                    "sequence uses gate '{g}' outside the design gate set"
                )));
            }
        }
        if self.germs.iter().any(|g| g.is_empty()) {
            return Err(Error::invalid("germ of length zero"));
        }
        if let Some(l) = self.max_length {
            if l == 0 || !l.is_power_of_two() {
                return Err(Error::invalid(format!(
                    "max germ power must be a power of two, got {l}"
                )));
            }
        }
        Ok(())
    }
}

struct Dedup {
    index: HashMap<Vec<GateLabel>, usize>,
    out: Vec<CircuitSpec>,
}

impl Dedup {
    fn new() -> Self {
        Self {
            index: HashMap::new(),
            out: Vec::new(),
        }
    }

    /// Keeps the first occurrence of each gate sequence. A sequence first
    /// seen without a germ block takes the core length and block of its
    /// first germ-power occurrence.
    fn push(&mut self, spec: CircuitSpec) {
        match self.index.get(&spec.gates) {
            Some(&i) => {
                let kept = &mut self.out[i];
                if kept.germ_block.is_none() && spec.germ_block.is_some() {
                    kept.core_length = spec.core_length;
                    kept.germ_block = spec.germ_block;
                }
            }
            None => {
                self.index.insert(spec.gates.clone(), self.out.len());
                self.out.push(spec);
            }
        }
    }
}

fn lgst_into(design: &GstDesign, acc: &mut Dedup) {
    for f in design.prep_fiducials.iter().chain(&design.meas_fiducials) {
        acc.push(CircuitSpec::new(f.clone(), 0));
    }
    for fp in &design.prep_fiducials {
        for fm in &design.meas_fiducials {
            acc.push(CircuitSpec::new(CircuitSpec::concat(&[fp, fm]), 0));
        }
    }
    for fp in &design.prep_fiducials {
        for g in &design.gates {
            for fm in &design.meas_fiducials {
                let gate = std::slice::from_ref(g);
                acc.push(CircuitSpec::new(CircuitSpec::concat(&[fp, gate, fm]), 0));
            }
        }
    }
}

fn check_lgst_inputs(design: &GstDesign) -> Result<()> {
    if design.gates.is_empty() || design.prep_fiducials.is_empty() || design.meas_fiducials.is_empty() {
        return Err(Error::invalid("design components must be nonempty"));
    }
    Ok(())
}

/// Linear-inversion circuit list, deduplicated, in generation order.
pub fn lgst_circuits(design: &GstDesign) -> Result<Vec<CircuitSpec>> {
    check_lgst_inputs(design)?;
    let mut acc = Dedup::new();
    lgst_into(design, &mut acc);
    Ok(acc.out)
}

/// Long-sequence circuit list: linear-inversion circuits followed by every
/// new `Fp g^⌊L/ℓ(g)⌋ Fm`. A circuit's core length is the smallest `L` at
/// which it arises with a nonzero germ power, or 0 if it never does.
pub fn lsgst_circuits(design: &GstDesign) -> Result<Vec<CircuitSpec>> {
    check_lgst_inputs(design)?;
    if design.germs.is_empty() {
        return Err(Error::invalid("long-sequence design needs at least one germ"));
    }
    if design.germs.iter().any(|g| g.is_empty()) {
        return Err(Error::invalid("germ of length zero"));
    }
    let l_max = design
        .max_length
        .ok_or_else(|| Error::invalid("long-sequence design needs max_length"))?;
    if l_max == 0 || !l_max.is_power_of_two() {
        return Err(Error::invalid(format!(
            "max germ power must be a power of two, got {l_max}"
        )));
    }

    let mut acc = Dedup::new();
    lgst_into(design, &mut acc);
    let mut l = 1u32;
    while l <= l_max {
        for germ in &design.germs {
            let reps = l as usize / germ.len();
            let block: Vec<GateLabel> = germ.iter().cycle().take(reps * germ.len()).cloned().collect();
            for fp in &design.prep_fiducials {
                for fm in &design.meas_fiducials {
                    let mut spec = CircuitSpec::new(CircuitSpec::concat(&[fp, &block, fm]), l);
                    if reps > 0 {
                        spec.germ_block = Some(GermBlock {
                            start: fp.len(),
                            germ_len: germ.len(),
                            reps,
                        });
                    }
                    acc.push(spec);
                }
            }
        }
        l = match l.checked_mul(2) {
            Some(next) => next,
            None => break,
        };
    }
    Ok(acc.out)
}

/// Writes a circuit list as a JSON array of `{spec, core_length}`.
pub fn circuit_list_json(circuits: &[CircuitSpec]) -> String {
    let entries: Vec<CircuitEntry> = circuits.iter().map(CircuitEntry::from).collect();
    let mut s = serde_json::to_string_pretty(&entries).expect("circuit entries serialize");
    s.push('\n');
    s
}
