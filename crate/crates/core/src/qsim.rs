//! Single-qubit pure-state circuit simulation with per-context coherent
//! over-rotation errors, and seeded multinomial sampling of outcome counts.
//!
//! Circuits start in `|0⟩` and end with a `σ_z` measurement. Gate
//! definitions: `Gi` identity, `Gx = exp(-iπσx/4)`, `Gy = exp(-iπσy/4)`,
//! `Gh` Hadamard, `Gs = diag(1, i)`. An over-rotation `ε` on `Gx`/`Gy`
//! replaces the `π/2` rotation angle by `π/2 + ε` about the same axis.

use std::collections::BTreeMap;
use std::ops::Mul;
use std::path::Path;

use indexmap::IndexMap;
use num_complex::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::{CircuitRecord, ContextDataset, OutcomeCounts};
use crate::error::{Error, Result};
use crate::gstgen::{lgst_circuits, lsgst_circuits, CircuitSpec, GateLabel, GstDesign};
use crate::scalar::Real;

/// 2×2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2<T> {
    pub m: [[Complex<T>; 2]; 2],
}

impl<T: Real> Unitary2<T> {
    pub fn identity() -> Self {
        let (o, z) = (Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero()));
        Self { m: [[o, z], [z, o]] }
    }

    /// `exp(-i θ σ/2)` for `σ` = Pauli X (`axis = 0`) or Y (`axis = 1`).
    pub fn rotation(axis: usize, angle: T) -> Self {
        let half = angle / T::lit(2.0);
        let c = Complex::new(half.cos(), T::zero());
        let s = half.sin();
        let z = T::zero();
        match axis {
            0 => Self {
                m: [[c, Complex::new(z, -s)], [Complex::new(z, -s), c]],
            },
            1 => Self {
                m: [[c, Complex::new(-s, z)], [Complex::new(s, z), c]],
            },
            _ => panic!("rotation axis must be 0 (x) or 1 (y)"),
        }
    }

    pub fn hadamard() -> Self {
        let h = Complex::new(T::FRAC_1_SQRT_2(), T::zero());
        Self { m: [[h, h], [h, -h]] }
    }

    pub fn phase() -> Self {
        let (o, z) = (Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero()));
        Self {
            m: [[o, z], [z, Complex::new(T::zero(), T::one())]],
        }
    }

    /// `self^n` by repeated squaring.
    pub fn pow(self, mut n: usize) -> Self {
        let mut base = self;
        let mut acc = Self::identity();
        while n > 0 {
            if n & 1 == 1 {
                acc = base * acc;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    pub fn dagger(&self) -> Self {
        let m = &self.m;
        Self {
            m: [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]],
        }
    }

    /// Max-norm distance of `U†U` from the identity.
    pub fn unitarity_error(&self) -> T {
        let p = self.dagger() * *self;
        let id = Self::identity();
        let mut worst = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((p.m[i][j] - id.m[i][j]).norm());
            }
        }
        worst
    }

    pub fn apply(&self, v: [Complex<T>; 2]) -> [Complex<T>; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }
}

impl<T: Real> Mul for Unitary2<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        let mut m = [[Complex::new(T::zero(), T::zero()); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self { m }
    }
}

/// Rotation axis of the standard rotation gates.
fn rotation_axis(label: &GateLabel) -> Option<usize> {
    match label.as_str() {
        "Gx" => Some(0),
        "Gy" => Some(1),
        _ => None,
    }
}

/// Unitary for every registered gate label.
#[derive(Debug, Clone)]
pub struct GateModel<T> {
    gates: BTreeMap<GateLabel, Unitary2<T>>,
}

impl<T: Real> GateModel<T> {
    pub fn ideal() -> Self {
        let half_pi = T::FRAC_PI_2();
        let mut gates = BTreeMap::new();
        let label = |s: &str| GateLabel::new(s).expect("standard label");
        gates.insert(label("Gi"), Unitary2::identity());
        gates.insert(label("Gx"), Unitary2::rotation(0, half_pi));
        gates.insert(label("Gy"), Unitary2::rotation(1, half_pi));
        gates.insert(label("Gh"), Unitary2::hadamard());
        gates.insert(label("Gs"), Unitary2::phase());
        Self { gates }
    }

    /// Ideal gates with `Gx`/`Gy` over-rotated by the given angles.
    pub fn with_over_rotations(eps: &BTreeMap<GateLabel, T>) -> Result<Self> {
        let mut model = Self::ideal();
        for (label, &e) in eps {
            if !e.is_finite() {
                return Err(Error::invalid(format!("non-finite over-rotation for {label}")));
            }
            let axis = rotation_axis(label).ok_or_else(|| {
                Error::invalid(format!("over-rotation applies to Gx/Gy only, not {label}"))
            })?;
            model
                .gates
                .insert(label.clone(), Unitary2::rotation(axis, T::FRAC_PI_2() + e));
        }
        Ok(model)
    }

    pub fn register(&mut self, label: GateLabel, unitary: Unitary2<T>) {
        self.gates.insert(label, unitary);
    }

    pub fn get(&self, label: &GateLabel) -> Result<&Unitary2<T>> {
        self.gates
            .get(label)
            .ok_or_else(|| Error::UnknownGate(label.to_string()))
    }

    fn product(&self, gates: &[GateLabel]) -> Result<Unitary2<T>> {
        gates
            .iter()
            .try_fold(Unitary2::identity(), |acc, g| Ok(*self.get(g)? * acc))
    }

    /// Total unitary of a circuit, operation order. Germ blocks are
    /// exponentiated by repeated squaring.
    pub fn circuit_unitary(&self, spec: &CircuitSpec) -> Result<Unitary2<T>> {
        let gates = spec.gates();
        match spec.germ_block() {
            Some(b) => {
                let end = b.start + b.germ_len * b.reps;
                let prefix = self.product(&gates[..b.start])?;
                let germ = self.product(&gates[b.start..b.start + b.germ_len])?;
                let suffix = self.product(&gates[end..])?;
                Ok(suffix * germ.pow(b.reps) * prefix)
            }
            None => self.product(gates),
        }
    }
}

/// Outcome distribution `(p(0), p(1))` of a circuit applied to `|0⟩`.
pub fn circuit_probabilities<T: Real>(spec: &CircuitSpec, model: &GateModel<T>) -> Result<Vec<T>> {
    let u = model.circuit_unitary(spec)?;
    let zero = Complex::new(T::zero(), T::zero());
    let v = u.apply([Complex::new(T::one(), T::zero()), zero]);
    let (p0, p1) = (v[0].norm_sqr(), v[1].norm_sqr());
    let norm = p0 + p1;
    Ok(vec![p0 / norm, p1 / norm])
}

/// One multinomial draw of `n` shots, by sequential conditional binomials.
pub fn sample_counts<T: Real, R: Rng + ?Sized>(probs: &[T], n: u64, rng: &mut R) -> Result<OutcomeCounts> {
    if n == 0 {
        return Err(Error::invalid("shot count must be >= 1"));
    }
    let tol = 1e-9;
    let ps: Vec<f64> = probs.iter().map(|p| p.to_f64_lossy()).collect();
    if ps.len() < 2 || ps.iter().any(|&p| !(p >= -tol) || !p.is_finite()) {
        return Err(Error::invalid("invalid probability vector"));
    }
    let total: f64 = ps.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::invalid(format!("probabilities sum to {total}")));
    }
    let mut counts = vec![0u64; ps.len()];
    let mut left = n;
    let mut mass = 1.0_f64;
    for (i, &p) in ps.iter().enumerate().take(ps.len() - 1) {
        if left == 0 {
            break;
        }
        let p = p.max(0.0);
        let cond = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
        let drawn = Binomial::new(left, cond)
            .map_err(|e| Error::Numeric(format!("binomial sampler: {e}")))?
            .sample(rng);
        counts[i] = drawn;
        left -= drawn;
        mass -= p;
    }
    *counts.last_mut().expect("at least two outcomes") += left;
    OutcomeCounts::new(counts)
}

/// Per-context over-rotations plus a context-independent one.
///
/// JSON: `{"t1": {"Gx": 0.0, "Gy": 0.0}, "t2": {...}, "static_epsilon": 0.001}`.
/// Context order in the file is the dataset context order; a missing
/// `static_epsilon` defaults to `1e-3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IndexMap<String, RawEntry>", into = "IndexMap<String, RawEntry>")]
pub struct ErrorModel {
    pub contexts: IndexMap<String, BTreeMap<GateLabel, f64>>,
    pub static_epsilon: f64,
}

pub const DEFAULT_STATIC_EPSILON: f64 = 1e-3;
const STATIC_KEY: &str = "static_epsilon";

#[doc(hidden)]
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawEntry {
    Scalar(f64),
    Gates(BTreeMap<GateLabel, f64>),
}

impl TryFrom<IndexMap<String, RawEntry>> for ErrorModel {
    type Error = Error;

    fn try_from(raw: IndexMap<String, RawEntry>) -> Result<Self> {
        let mut contexts = IndexMap::new();
        let mut static_epsilon = DEFAULT_STATIC_EPSILON;
        for (key, entry) in raw {
            match (key.as_str(), entry) {
                (STATIC_KEY, RawEntry::Scalar(e)) => static_epsilon = e,
                (STATIC_KEY, RawEntry::Gates(_)) => {
                    return Err(Error::schema("static_epsilon must be a number"))
                }
                (_, RawEntry::Gates(g)) => {
                    contexts.insert(key, g);
                }
                (_, RawEntry::Scalar(_)) => {
                    return Err(Error::schema(format!(
                        "context '{key}' must map gate labels to over-rotations"
                    )))
                }
            }
        }
        Ok(Self {
            contexts,
            static_epsilon,
        })
    }
}

impl From<ErrorModel> for IndexMap<String, RawEntry> {
    fn from(m: ErrorModel) -> Self {
        let mut out: IndexMap<String, RawEntry> = m
            .contexts
            .into_iter()
            .map(|(k, v)| (k, RawEntry::Gates(v)))
            .collect();
        out.insert(STATIC_KEY.into(), RawEntry::Scalar(m.static_epsilon));
        out
    }
}

impl ErrorModel {
    /// Contexts `t1..tN` with over-rotation `(t-1)·step` on `Gx` and `Gy`.
    pub fn linear_drift(periods: usize, step: f64, static_epsilon: f64) -> Self {
        let mut contexts = IndexMap::new();
        for t in 1..=periods {
            let eps = (t - 1) as f64 * step;
            let gates = ["Gx", "Gy"]
                .iter()
                .map(|g| (GateLabel::new(g).expect("standard label"), eps))
                .collect();
            contexts.insert(format!("t{t}"), gates);
        }
        Self {
            contexts,
            static_epsilon,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = crate::counts::read_json(path.as_ref())?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.contexts.is_empty() {
            return Err(Error::invalid("error model has no contexts"));
        }
        if !self.static_epsilon.is_finite() {
            return Err(Error::invalid("static over-rotation must be finite"));
        }
        for (ctx, gates) in &self.contexts {
            for (g, e) in gates {
                if !e.is_finite() {
                    return Err(Error::invalid(format!("context '{ctx}': non-finite epsilon for {g}")));
                }
                if rotation_axis(g).is_none() {
                    return Err(Error::invalid(format!(
                        "context '{ctx}': over-rotation applies to Gx/Gy only, not {g}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn context_labels(&self) -> Vec<String> {
        self.contexts.keys().cloned().collect()
    }

    /// Gate model of one context: static plus context over-rotation on both
    /// rotation gates.
    pub fn gate_model<T: Real>(&self, context: &str) -> Result<GateModel<T>> {
        let per_ctx = self
            .contexts
            .get(context)
            .ok_or_else(|| Error::invalid(format!("error model has no context '{context}'")))?;
        let mut eps = BTreeMap::new();
        for g in ["Gx", "Gy"] {
            let label = GateLabel::new(g).expect("standard label");
            let e = self.static_epsilon + per_ctx.get(&label).copied().unwrap_or(0.0);
            eps.insert(label, T::lit(e));
        }
        GateModel::with_over_rotations(&eps)
    }
}

/// Which circuit family of a design to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CircuitFamily {
    Lgst,
    #[default]
    Lsgst,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    /// Repetitions per circuit per context.
    pub shots: u64,
    pub seed: u64,
    /// Contexts to simulate, in dataset order; `None` takes every context
    /// of the error model in file order.
    pub contexts: Option<Vec<String>>,
    pub family: CircuitFamily,
}

impl SimConfig {
    pub fn new(shots: u64, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::invalid("shots must be >= 1"));
        }
        Ok(Self {
            shots,
            seed,
            contexts: None,
            family: CircuitFamily::default(),
        })
    }

    pub fn with_family(mut self, family: CircuitFamily) -> Self {
        self.family = family;
        self
    }

    pub fn with_contexts(mut self, contexts: Vec<String>) -> Self {
        self.contexts = Some(contexts);
        self
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one (circuit, context) pool: the seed keys the
/// ChaCha generator and a hash of the circuit id and context index picks the
/// stream.
pub fn pool_rng(seed: u64, circuit_id: &str, context_index: usize) -> ChaCha8Rng {
    // FNV-1a
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in circuit_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let stream = splitmix64(h ^ splitmix64(context_index as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates every circuit in every configured context. Circuit ids are the
/// circuit strings. Results do not depend on thread count or scheduling.
pub fn simulate_circuits(
    circuits: &[CircuitSpec],
    error: &ErrorModel,
    cfg: &SimConfig,
) -> Result<ContextDataset> {
    error.validate()?;
    if cfg.shots == 0 {
        return Err(Error::invalid("shots must be >= 1"));
    }
    let contexts = match &cfg.contexts {
        Some(c) if c.is_empty() => return Err(Error::invalid("no contexts to simulate")),
        Some(c) => c.clone(),
        None => error.context_labels(),
    };
    let models: Vec<GateModel<f64>> = contexts
        .iter()
        .map(|c| error.gate_model(c))
        .collect::<Result<_>>()?;

    let records: Vec<CircuitRecord> = circuits
        .par_iter()
        .map(|spec| {
            let id = spec.to_string();
            let pools = contexts
                .iter()
                .zip(&models)
                .enumerate()
                .map(|(ci, (ctx, model))| {
                    let probs = circuit_probabilities(spec, model)?;
                    let mut rng = pool_rng(cfg.seed, &id, ci);
                    Ok((ctx.clone(), sample_counts(&probs, cfg.shots, &mut rng)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CircuitRecord::new(id, pools)?.with_spec(spec.clone()))
        })
        .collect::<Result<_>>()?;

    ContextDataset::new(vec!["0".into(), "1".into()], contexts, records)
}

/// Generates the configured circuit family of the design and simulates it
/// under every configured context of the error model.
pub fn run_drift_experiment(design: &GstDesign, error: &ErrorModel, cfg: &SimConfig) -> Result<ContextDataset> {
    let circuits = match cfg.family {
        CircuitFamily::Lgst => lgst_circuits(design)?,
        CircuitFamily::Lsgst => lsgst_circuits(design)?,
    };
    simulate_circuits(&circuits, error, cfg)
}
