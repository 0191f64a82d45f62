//! Scenario files: a JSON tree describing a Hilbert space, an initial
//! state, optional dynamics, per-time sample spaces and queries.
//!
//! Complex entries are `[re, im]` pairs or bare reals; matrices are
//! row-major lists of rows. History indices in queries are one-based.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::CqtError;
use crate::framework::{SampleSpace, StateDensity};
use crate::histories::Family;
use crate::lattice::Subspace;
use crate::numerics::{c, tol, CMatrix, Hamiltonian, Ket, C64};

/// Complex number accepted as `[re, im]` or a bare real; written as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ComplexRepr", into = "[f64; 2]")]
pub struct RawComplex(pub f64, pub f64);

#[derive(Deserialize)]
#[serde(untagged)]
enum ComplexRepr {
    Real(f64),
    Pair([f64; 2]),
}

impl From<ComplexRepr> for RawComplex {
    fn from(r: ComplexRepr) -> Self {
        match r {
            ComplexRepr::Real(x) => RawComplex(x, 0.0),
            ComplexRepr::Pair([a, b]) => RawComplex(a, b),
        }
    }
}

impl From<RawComplex> for [f64; 2] {
    fn from(z: RawComplex) -> Self {
        [z.0, z.1]
    }
}

pub type RawMatrix = Vec<Vec<RawComplex>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum RawState {
    Pure(Vec<RawComplex>),
    Density(RawMatrix),
}

/// Subspace given by spanning vectors or by its projector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSubspace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<RawComplex>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projector: Option<RawMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpace {
    pub members: Vec<RawSubspace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStep {
    pub t: f64,
    pub space: RawSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Query {
    /// Elementary history (one entry) or a compound event (several).
    Probability { histories: Vec<Vec<usize>> },
    Classify {},
    /// Truth values of the events of one step's framework (pure states only).
    Truth { step: usize },
    /// Compare two steps' frameworks on the events they share.
    Noncontextuality { steps: [usize; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub dim: usize,
    pub state: RawState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<RawMatrix>,
    #[serde(default)]
    pub t0: f64,
    pub steps: Vec<RawStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub queries: Vec<Query>,
}

fn raw_vector(v: &Ket) -> Vec<RawComplex> {
    v.iter().map(|z| RawComplex(z.re, z.im)).collect()
}

fn raw_matrix(m: &CMatrix) -> RawMatrix {
    m.row_iter().map(|row| row.iter().map(|z| RawComplex(z.re, z.im)).collect()).collect()
}

impl RawScenario {
    /// Scenario tree describing an existing family, members given by their
    /// canonical bases.
    pub fn from_family(fam: &Family, queries: Vec<Query>) -> Self {
        let state = match fam.state().pure_vector() {
            Some(v) => RawState::Pure(raw_vector(v)),
            None => RawState::Density(raw_matrix(fam.state().matrix())),
        };
        let hamiltonian = (!fam.hamiltonian().is_zero()).then(|| raw_matrix(fam.hamiltonian().matrix()));
        let steps = fam
            .times()
            .iter()
            .zip(fam.spaces())
            .map(|(&t, space)| RawStep {
                t,
                space: RawSpace {
                    members: space
                        .members()
                        .iter()
                        .map(|m| RawSubspace { basis: Some(m.basis().iter().map(raw_vector).collect()), projector: None })
                        .collect(),
                },
            })
            .collect();
        Self { dim: fam.dim(), state, hamiltonian, t0: fam.t0(), steps, queries }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message} (line {line}, column {column})")]
    Parse { path: String, message: String, line: usize, column: usize },
    #[error("{path}: {source}")]
    Invalid { path: String, source: CqtError },
}

fn invalid(path: impl Into<String>, source: CqtError) -> ScenarioError {
    ScenarioError::Invalid { path: path.into(), source }
}

/// A validated scenario together with the raw tree it was built from.
#[derive(Debug, Clone)]
pub struct Scenario {
    raw: RawScenario,
    family: Family,
    hash: String,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let raw: RawScenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError::Parse {
                path: if path.is_empty() { ".".into() } else { path },
                message: strip_position(&inner.to_string()),
                line: inner.line(),
                column: inner.column(),
            }
        })?;
        de.end().map_err(|e| ScenarioError::Parse {
            path: ".".into(),
            message: strip_position(&e.to_string()),
            line: e.line(),
            column: e.column(),
        })?;
        Self::from_raw(raw)
    }

    pub fn from_raw(raw: RawScenario) -> Result<Self, ScenarioError> {
        let family = build_family(&raw)?;
        validate_queries(&raw, &family)?;
        let hash = hex_digest(&serde_json::to_vec(&raw).expect("scenario serializes"));
        Ok(Self { raw, family, hash })
    }

    pub fn raw(&self) -> &RawScenario {
        &self.raw
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn queries(&self) -> &[Query] {
        &self.raw.queries
    }

    /// SHA-256 of the canonical compact serialization.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Canonical pretty serialization; reloading it yields the same scenario.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.raw).expect("scenario serializes")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json_string())
    }
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn to_c64(z: RawComplex) -> C64 {
    c(z.0, z.1)
}

fn vector(path: &str, entries: &[RawComplex], dim: usize) -> Result<Ket, ScenarioError> {
    if entries.len() != dim {
        return Err(invalid(path, CqtError::DimensionMismatch { expected: dim, found: entries.len() }));
    }
    let v = Ket::from_iterator(dim, entries.iter().copied().map(to_c64));
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(invalid(path, CqtError::NonFinite("vector entry")));
    }
    Ok(v)
}

fn matrix(path: &str, rows: &RawMatrix, dim: usize) -> Result<CMatrix, ScenarioError> {
    if rows.len() != dim {
        return Err(invalid(path, CqtError::DimensionMismatch { expected: dim, found: rows.len() }));
    }
    let mut m = CMatrix::zeros(dim, dim);
    for (i, row) in rows.iter().enumerate() {
        let v = vector(&format!("{path}[{i}]"), row, dim)?;
        m.row_mut(i).copy_from(&v.transpose());
    }
    Ok(m)
}

fn subspace(path: &str, raw: &RawSubspace, dim: usize) -> Result<Subspace, ScenarioError> {
    match (&raw.basis, &raw.projector) {
        (Some(basis), None) => {
            let vectors = basis
                .iter()
                .enumerate()
                .map(|(k, v)| vector(&format!("{path}.basis[{k}]"), v, dim))
                .collect::<Result<Vec<_>, _>>()?;
            Subspace::span(dim, &vectors).map_err(|e| invalid(format!("{path}.basis"), e))
        }
        (None, Some(p)) => {
            let m = matrix(&format!("{path}.projector"), p, dim)?;
            Subspace::from_projector(&m).map_err(|e| invalid(format!("{path}.projector"), e))
        }
        _ => Err(invalid(path, CqtError::Invalid("give exactly one of `basis` or `projector`".into()))),
    }
}

fn build_family(raw: &RawScenario) -> Result<Family, ScenarioError> {
    let dim = raw.dim;
    if dim == 0 {
        return Err(invalid("dim", CqtError::Invalid("dimension must be positive".into())));
    }
    let state = match &raw.state {
        RawState::Pure(v) => {
            let psi = vector("state.pure", v, dim)?;
            let norm = psi.norm();
            if norm <= tol::ZERO {
                return Err(invalid("state.pure", CqtError::InvalidState("zero vector".into())));
            }
            StateDensity::pure(&psi.unscale(norm)).map_err(|e| invalid("state.pure", e))?
        }
        RawState::Density(m) => {
            StateDensity::new(matrix("state.density", m, dim)?).map_err(|e| invalid("state.density", e))?
        }
    };
    let hamiltonian = match &raw.hamiltonian {
        None => Hamiltonian::zero(dim),
        Some(h) => Hamiltonian::new(matrix("hamiltonian", h, dim)?).map_err(|e| invalid("hamiltonian", e))?,
    };
    let mut steps = Vec::with_capacity(raw.steps.len());
    for (n, step) in raw.steps.iter().enumerate() {
        let members = step
            .space
            .members
            .iter()
            .enumerate()
            .map(|(j, m)| subspace(&format!("steps[{n}].space.members[{j}]"), m, dim))
            .collect::<Result<Vec<_>, _>>()?;
        let space = SampleSpace::new(members).map_err(|e| invalid(format!("steps[{n}].space"), e))?;
        steps.push((step.t, space));
    }
    Family::new(state, hamiltonian, raw.t0, steps).map_err(|e| invalid("steps", e))
}

fn validate_queries(raw: &RawScenario, fam: &Family) -> Result<(), ScenarioError> {
    let counts = fam.member_counts();
    let step_ok = |path: String, s: usize| {
        if s == 0 || s > fam.len() {
            Err(invalid(path, CqtError::IndexOutOfRange { what: "step (one-based)", index: s, len: fam.len() }))
        } else {
            Ok(())
        }
    };
    for (q, query) in raw.queries.iter().enumerate() {
        match query {
            Query::Probability { histories } => {
                if histories.is_empty() {
                    return Err(invalid(format!("queries[{q}].histories"), CqtError::EmptyEvent));
                }
                for (k, h) in histories.iter().enumerate() {
                    let path = format!("queries[{q}].histories[{k}]");
                    if h.len() != counts.len() {
                        return Err(invalid(path, CqtError::FamilyMismatch));
                    }
                    for (n, &j) in h.iter().enumerate() {
                        if j == 0 || j > counts[n] {
                            return Err(invalid(
                                format!("{path}[{n}]"),
                                CqtError::IndexOutOfRange { what: "member (one-based)", index: j, len: counts[n] },
                            ));
                        }
                    }
                }
            }
            Query::Classify {} => {}
            Query::Truth { step } => step_ok(format!("queries[{q}].step"), *step)?,
            Query::Noncontextuality { steps } => {
                for (k, &s) in steps.iter().enumerate() {
                    step_ok(format!("queries[{q}].steps[{k}]"), s)?;
                }
            }
        }
    }
    Ok(())
}
