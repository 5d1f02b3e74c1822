//! Exact information quantities on small dense joint distributions.
//!
//! A [`ProbTable`] stores every joint outcome of a handful of finite
//! variables in row-major order (the first variable varies slowest). All
//! quantities are in nats and follow the convention `0 · log 0 = 0`.
//!
//! Everything here is brute force on purpose: these tables are the oracle
//! that the sample-based estimators elsewhere in the crate are checked
//! against, so clarity wins over speed.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of joint outcomes a table may hold.
pub const MAX_OUTCOMES: usize = 10_000_000;

/// Inputs whose total deviates from 1 by less than this are renormalized;
/// anything further off is rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("variable `{0}` must have cardinality >= 1")]
    ZeroCardinality(String),
    #[error("expected {expected} probabilities, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid probability {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("table with {0} outcomes exceeds the limit of {MAX_OUTCOMES}")]
    TooLarge(usize),
    #[error("state {state} out of range for `{name}` with cardinality {cardinality}")]
    StateOutOfRange {
        name: String,
        state: usize,
        cardinality: usize,
    },
    #[error("conditioning on null event")]
    NullEvent,
    #[error("variable `{0}` appears in more than one argument set")]
    Overlap(String),
    #[error("variable set must not be empty")]
    EmptySet,
    #[error("factorized approximate posterior required")]
    NotFactorized,
    #[error("conditional row {row} sums to {sum}, expected 1")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("variables of the joint do not match the conditional: {0}")]
    SchemaMismatch(String),
}

pub type Result<T> = std::result::Result<T, ProbError>;

/// A named finite variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub cardinality: usize,
}

impl Variable {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Self {
        Self {
            name: name.into(),
            cardinality,
        }
    }
}

/// Result of a divergence that may be infinite off-support.
///
/// Keeps `+inf` out of downstream arithmetic: callers must match on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub fn finite(self) -> Option<f64> {
        match self {
            Divergence::Finite(v) => Some(v),
            Divergence::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Divergence::Infinite)
    }
}

impl std::ops::Add for Divergence {
    type Output = Divergence;
    fn add(self, rhs: Divergence) -> Divergence {
        match (self, rhs) {
            (Divergence::Finite(a), Divergence::Finite(b)) => Divergence::Finite(a + b),
            _ => Divergence::Infinite,
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::Finite(v) => write!(f, "{v}"),
            Divergence::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Divergence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Divergence::Finite(v) => s.serialize_f64(*v),
            Divergence::Infinite => s.serialize_str("infinite"),
        }
    }
}

/// `p · log p` with the `0 · log 0 = 0` convention.
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy of a probability vector, in nats.
pub fn entropy_of(probs: &[f64]) -> f64 {
    -probs.iter().copied().map(plogp).sum::<f64>()
}

/// `KL(p ‖ q)` between two probability vectors of equal length.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Divergence {
    assert_eq!(p.len(), q.len(), "kl_divergence: length mismatch");
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Divergence::Infinite;
            }
            total += pi * (pi / qi).ln();
        }
    }
    Divergence::Finite(total)
}

fn check_variables(variables: &[Variable]) -> Result<usize> {
    let mut seen = HashSet::new();
    let mut outcomes: usize = 1;
    for v in variables {
        if v.cardinality == 0 {
            return Err(ProbError::ZeroCardinality(v.name.clone()));
        }
        if !seen.insert(v.name.as_str()) {
            return Err(ProbError::DuplicateVariable(v.name.clone()));
        }
        outcomes = outcomes
            .checked_mul(v.cardinality)
            .filter(|&n| n <= MAX_OUTCOMES)
            .ok_or(ProbError::TooLarge(outcomes.saturating_mul(v.cardinality)))?;
    }
    Ok(outcomes)
}

/// Validates non-negativity and the total, renormalizing small drift.
fn normalize(mut probs: Vec<f64>) -> Result<Vec<f64>> {
    for (index, &value) in probs.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(ProbError::InvalidProbability { index, value });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() >= RENORMALIZE_TOLERANCE {
        return Err(ProbError::NotNormalized(sum));
    }
    if sum != 1.0 {
        probs.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(probs)
}

/// Dense joint distribution over named finite variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct ProbTable {
    variables: Vec<Variable>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    variables: Vec<Variable>,
    probs: Vec<f64>,
}

impl TryFrom<RawTable> for ProbTable {
    type Error = ProbError;
    fn try_from(raw: RawTable) -> Result<Self> {
        ProbTable::new(raw.variables, raw.probs)
    }
}

impl From<ProbTable> for RawTable {
    fn from(t: ProbTable) -> Self {
        RawTable {
            variables: t.variables,
            probs: t.probs,
        }
    }
}

impl ProbTable {
    pub fn new(variables: Vec<Variable>, probs: Vec<f64>) -> Result<Self> {
        let expected = check_variables(&variables)?;
        if probs.len() != expected {
            return Err(ProbError::LengthMismatch {
                expected,
                actual: probs.len(),
            });
        }
        Ok(Self {
            variables,
            probs: normalize(probs)?,
        })
    }

    /// Builds a table from arbitrary non-negative weights, normalizing them.
    pub fn from_weights(variables: Vec<Variable>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(ProbError::NotNormalized(total));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self::new(variables, probs)
    }

    /// Builds a table by evaluating an unnormalized weight at every outcome.
    pub fn from_fn(variables: Vec<Variable>, mut weight: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let n = check_variables(&variables)?;
        let cards: Vec<usize> = variables.iter().map(|v| v.cardinality).collect();
        let mut weights = Vec::with_capacity(n);
        for_each_assignment(&cards, |a| weights.push(weight(a)));
        Self::from_weights(variables, weights)
    }

    pub fn uniform(variables: Vec<Variable>) -> Result<Self> {
        Self::from_fn(variables, |_| 1.0)
    }

    /// Draws a table from the symmetric Dirichlet(1) distribution.
    pub fn random<R: Rng + ?Sized>(variables: Vec<Variable>, rng: &mut R) -> Result<Self> {
        let n = check_variables(&variables)?;
        let weights = (0..n).map(|_| Exp1.sample(rng)).collect();
        Self::from_weights(variables, weights)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.cardinality).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| ProbError::UnknownVariable(name.to_string()))
    }

    /// Probability of one full assignment, in table variable order.
    pub fn prob(&self, assignment: &[usize]) -> f64 {
        let mut flat = 0;
        for (v, &s) in self.variables.iter().zip(assignment) {
            assert!(s < v.cardinality, "state out of range");
            flat = flat * v.cardinality + s;
        }
        self.probs[flat]
    }

    /// Calls `f(assignment, p)` for every joint outcome in storage order.
    pub fn for_each_outcome(&self, mut f: impl FnMut(&[usize], f64)) {
        let cards = self.cardinalities();
        let mut flat = 0;
        for_each_assignment(&cards, |a| {
            f(a, self.probs[flat]);
            flat += 1;
        });
    }

    fn resolve(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut idx = Vec::with_capacity(names.len());
        for &name in names {
            let i = self.index_of(name)?;
            if idx.contains(&i) {
                return Err(ProbError::DuplicateVariable(name.to_string()));
            }
            idx.push(i);
        }
        Ok(idx)
    }

    /// Marginal probability vector over `idx`, laid out in the order given.
    fn marginal_probs(&self, idx: &[usize]) -> Vec<f64> {
        let cards = self.cardinalities();
        let size: usize = idx.iter().map(|&i| cards[i]).product();
        let mut out = vec![0.0; size];
        let mut flat = 0;
        for_each_assignment(&cards, |a| {
            let target = idx.iter().fold(0, |acc, &i| acc * cards[i] + a[i]);
            out[target] += self.probs[flat];
            flat += 1;
        });
        out
    }

    fn entropy_idx(&self, idx: &[usize]) -> f64 {
        if idx.is_empty() {
            return 0.0;
        }
        entropy_of(&self.marginal_probs(idx))
    }

    /// Marginal table over `keep`, with variables in table order.
    pub fn marginalize(&self, keep: &[&str]) -> Result<ProbTable> {
        let mut idx = self.resolve(keep)?;
        idx.sort_unstable();
        let variables = idx.iter().map(|&i| self.variables[i].clone()).collect();
        ProbTable::new(variables, self.marginal_probs(&idx))
    }

    /// Returns the same distribution with its variables in the given order.
    pub fn reorder(&self, order: &[&str]) -> Result<ProbTable> {
        let idx = self.resolve(order)?;
        if idx.len() != self.variables.len() {
            let missing = self
                .variables
                .iter()
                .enumerate()
                .find(|(i, _)| !idx.contains(i))
                .map(|(_, v)| v.name.clone())
                .unwrap_or_default();
            return Err(ProbError::SchemaMismatch(format!("reorder omits `{missing}`")));
        }
        let variables = idx.iter().map(|&i| self.variables[i].clone()).collect();
        ProbTable::new(variables, self.marginal_probs(&idx))
    }

    /// Distribution of the remaining variables given the evidence.
    pub fn condition(&self, evidence: &[(&str, usize)]) -> Result<ProbTable> {
        let names: Vec<&str> = evidence.iter().map(|(n, _)| *n).collect();
        let idx = self.resolve(&names)?;
        for (&i, &(name, state)) in idx.iter().zip(evidence) {
            let card = self.variables[i].cardinality;
            if state >= card {
                return Err(ProbError::StateOutOfRange {
                    name: name.to_string(),
                    state,
                    cardinality: card,
                });
            }
        }
        let rest: Vec<usize> = (0..self.variables.len()).filter(|i| !idx.contains(i)).collect();
        let cards = self.cardinalities();
        let size: usize = rest.iter().map(|&i| cards[i]).product();
        let mut slice = vec![0.0; size];
        let mut flat = 0;
        for_each_assignment(&cards, |a| {
            if idx.iter().zip(evidence).all(|(&i, &(_, s))| a[i] == s) {
                let target = rest.iter().fold(0, |acc, &i| acc * cards[i] + a[i]);
                slice[target] += self.probs[flat];
            }
            flat += 1;
        });
        let mass: f64 = slice.iter().sum();
        if !(mass > 0.0) {
            return Err(ProbError::NullEvent);
        }
        let variables = rest.iter().map(|&i| self.variables[i].clone()).collect();
        ProbTable::new(variables, slice.into_iter().map(|p| p / mass).collect())
    }

    /// Joint entropy `H(over)`.
    pub fn entropy(&self, over: &[&str]) -> Result<f64> {
        if over.is_empty() {
            return Err(ProbError::EmptySet);
        }
        Ok(self.entropy_idx(&self.resolve(over)?))
    }

    /// `H(target | given)`; `given` may be empty.
    pub fn conditional_entropy(&self, target: &[&str], given: &[&str]) -> Result<f64> {
        let (t, g) = self.disjoint2(target, given)?;
        if t.is_empty() {
            return Err(ProbError::EmptySet);
        }
        let joint: Vec<usize> = t.iter().chain(&g).copied().collect();
        Ok(self.entropy_idx(&joint) - self.entropy_idx(&g))
    }

    fn disjoint2(&self, a: &[&str], b: &[&str]) -> Result<(Vec<usize>, Vec<usize>)> {
        let ia = self.resolve(a)?;
        let ib = self.resolve(b)?;
        if let Some(&i) = ia.iter().find(|i| ib.contains(i)) {
            return Err(ProbError::Overlap(self.variables[i].name.clone()));
        }
        Ok((ia, ib))
    }

    /// `I(A; B)`. The raw value is returned and can dip a hair below zero.
    pub fn mutual_information(&self, a: &[&str], b: &[&str]) -> Result<f64> {
        self.conditional_mutual_information(a, b, &[])
    }

    /// `I(A; B | given)`; with an empty `given` this is `I(A; B)`.
    pub fn conditional_mutual_information(&self, a: &[&str], b: &[&str], given: &[&str]) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(ProbError::EmptySet);
        }
        let (ia, ib) = self.disjoint2(a, b)?;
        let ig = self.resolve(given)?;
        if let Some(&i) = ia.iter().chain(&ib).find(|i| ig.contains(i)) {
            return Err(ProbError::Overlap(self.variables[i].name.clone()));
        }
        let cat = |x: &[usize], y: &[usize]| -> Vec<usize> { x.iter().chain(y).copied().collect() };
        let ag = cat(&ia, &ig);
        let bg = cat(&ib, &ig);
        let abg = cat(&ag, &ib);
        Ok(self.entropy_idx(&ag) + self.entropy_idx(&bg) - self.entropy_idx(&abg) - self.entropy_idx(&ig))
    }

    /// Total correlation `Σ H(v) − H(over)`, i.e. the KL divergence from
    /// the joint of `over` to the product of its marginals.
    pub fn total_correlation(&self, over: &[&str]) -> Result<f64> {
        if over.is_empty() {
            return Err(ProbError::EmptySet);
        }
        let idx = self.resolve(over)?;
        let singles: f64 = idx.iter().map(|&i| self.entropy_idx(&[i])).sum();
        Ok(singles - self.entropy_idx(&idx))
    }

    fn check_latents_vs_data(&self, data: &[&str], latents: &[&str]) -> Result<()> {
        if data.is_empty() || latents.is_empty() {
            return Err(ProbError::EmptySet);
        }
        self.disjoint2(latents, data).map(|_| ())
    }

    /// Checks the chain-rule decomposition
    /// `I(S; x) = I(z_j; x | S∖j) + I(S∖j; x)` with `S = {j} ∪ rest`.
    pub fn verify_chain_rule(&self, data: &[&str], j: &str, rest: &[&str]) -> Result<ChainRuleReport> {
        if rest.contains(&j) {
            return Err(ProbError::Overlap(j.to_string()));
        }
        let mut s: Vec<&str> = vec![j];
        s.extend_from_slice(rest);
        self.check_latents_vs_data(data, &s)?;
        let lhs = self.mutual_information(&s, data)?;
        let conditional_mi = self.conditional_mutual_information(&[j], data, rest)?;
        let rest_mi = if rest.is_empty() {
            0.0
        } else {
            self.mutual_information(rest, data)?
        };
        let marginal_mi = self.mutual_information(&[j], data)?;
        let rhs = conditional_mi + rest_mi;
        Ok(ChainRuleReport {
            lhs,
            rhs,
            residual: (lhs - rhs).abs(),
            conditional_mi,
            marginal_mi,
        })
    }

    /// Evaluates both sides of
    /// `I(S; x) − Σ I(z_i; x) = E_x[TC(S | x)] − TC(S)`.
    pub fn verify_theorem1(&self, data: &[&str], latents: &[&str]) -> Result<Theorem1Report> {
        self.check_latents_vs_data(data, latents)?;
        let joint_mi = self.mutual_information(latents, data)?;
        let single_mi = latents
            .iter()
            .map(|&z| self.mutual_information(&[z], data))
            .sum::<Result<f64>>()?;
        let lhs = joint_mi - single_mi;

        let data_marginal = self.marginalize(data)?;
        let data_names: Vec<&str> = data_marginal.variables.iter().map(|v| v.name.as_str()).collect();
        let keep: Vec<&str> = latents.iter().chain(data).copied().collect();
        let sub = self.marginalize(&keep)?;
        let mut conditional_tc = 0.0;
        let mut failure = None;
        data_marginal.for_each_outcome(|a, px| {
            if px <= 0.0 || failure.is_some() {
                return;
            }
            let evidence: Vec<(&str, usize)> = data_names.iter().copied().zip(a.iter().copied()).collect();
            match sub.condition(&evidence).and_then(|c| c.total_correlation(latents)) {
                Ok(tc) => conditional_tc += px * tc,
                Err(e) => failure = Some(e),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let marginal_tc = self.total_correlation(latents)?;
        Ok(Theorem1Report {
            lhs,
            conditional_tc,
            marginal_tc,
            residual: (lhs - (conditional_tc - marginal_tc)).abs(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainRuleReport {
    /// `I(S; x)`.
    pub lhs: f64,
    /// `I(z_j; x | S∖j) + I(S∖j; x)`.
    pub rhs: f64,
    pub residual: f64,
    /// `I(z_j; x | S∖j)`.
    pub conditional_mi: f64,
    /// `I(z_j; x)`.
    pub marginal_mi: f64,
}

impl ChainRuleReport {
    /// Whether the information `z_j` carries about the data is unchanged by
    /// conditioning on the other latents.
    pub fn invariance_holds(&self, tol: f64) -> bool {
        (self.conditional_mi - self.marginal_mi).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Report {
    /// `I(S; x) − Σ_i I(z_i; x)`.
    pub lhs: f64,
    /// `E_x[TC(q(S | x))]`.
    pub conditional_tc: f64,
    /// `TC(q(S))`.
    pub marginal_tc: f64,
    pub residual: f64,
}

/// A family of distributions over `target`, one row per assignment of
/// `given` (row-major, given variables first).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    given: Vec<Variable>,
    target: Vec<Variable>,
    probs: Vec<f64>,
}

impl ConditionalTable {
    pub fn new(given: Vec<Variable>, target: Vec<Variable>, probs: Vec<f64>) -> Result<Self> {
        let all: Vec<Variable> = given.iter().chain(&target).cloned().collect();
        let expected = check_variables(&all)?;
        if probs.len() != expected {
            return Err(ProbError::LengthMismatch {
                expected,
                actual: probs.len(),
            });
        }
        let width: usize = target.iter().map(|v| v.cardinality).product();
        let mut out = Vec::with_capacity(probs.len());
        for (row, chunk) in probs.chunks(width).enumerate() {
            let normalized = normalize(chunk.to_vec()).map_err(|e| match e {
                ProbError::NotNormalized(sum) => ProbError::RowNotNormalized { row, sum },
                other => other,
            })?;
            out.extend(normalized);
        }
        Ok(Self {
            given,
            target,
            probs: out,
        })
    }

    /// Builds `Q(z | x) = Π_j Q(z_j | x)` from one row-major table per
    /// latent, each with `|x| × card(z_j)` entries.
    pub fn from_factors(given: Vec<Variable>, factors: Vec<(Variable, Vec<f64>)>) -> Result<Self> {
        let rows: usize = given.iter().map(|v| v.cardinality).product();
        let target: Vec<Variable> = factors.iter().map(|(v, _)| v.clone()).collect();
        for (v, f) in &factors {
            if f.len() != rows * v.cardinality {
                return Err(ProbError::LengthMismatch {
                    expected: rows * v.cardinality,
                    actual: f.len(),
                });
            }
        }
        let tcards: Vec<usize> = target.iter().map(|v| v.cardinality).collect();
        let mut probs = Vec::new();
        for r in 0..rows {
            for_each_assignment(&tcards, |a| {
                let p = factors
                    .iter()
                    .zip(a)
                    .map(|((v, f), &s)| f[r * v.cardinality + s])
                    .product::<f64>();
                probs.push(p);
            });
        }
        Self::new(given, target, probs)
    }

    pub fn given(&self) -> &[Variable] {
        &self.given
    }

    pub fn target(&self) -> &[Variable] {
        &self.target
    }

    fn width(&self) -> usize {
        self.target.iter().map(|v| v.cardinality).product()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.width();
        &self.probs[r * w..(r + 1) * w]
    }

    pub fn rows(&self) -> usize {
        self.probs.len() / self.width()
    }

    /// Per-latent marginals of row `r`.
    fn row_marginals(&self, r: usize) -> Vec<Vec<f64>> {
        factor_marginals(self.row(r), &self.target)
    }

    /// True when every row equals the product of its own marginals.
    pub fn is_factorized(&self, tol: f64) -> bool {
        let cards: Vec<usize> = self.target.iter().map(|v| v.cardinality).collect();
        (0..self.rows()).all(|r| {
            let marg = self.row_marginals(r);
            let row = self.row(r);
            let mut flat = 0;
            let mut ok = true;
            for_each_assignment(&cards, |a| {
                let prod: f64 = marg.iter().zip(a).map(|(m, &s)| m[s]).product();
                ok &= (row[flat] - prod).abs() <= tol;
                flat += 1;
            });
            ok
        })
    }
}

fn factor_marginals(row: &[f64], target: &[Variable]) -> Vec<Vec<f64>> {
    let cards: Vec<usize> = target.iter().map(|v| v.cardinality).collect();
    let mut out: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    let mut flat = 0;
    for_each_assignment(&cards, |a| {
        for (m, &s) in out.iter_mut().zip(a) {
            m[s] += row[flat];
        }
        flat += 1;
    });
    out
}

/// Decomposition `H(z | x) = C − A − B` of the conditional entropy under a
/// factorized approximate posterior `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfoganReport {
    /// `A = E_x[TC(p(z | x))]`.
    pub conditional_tc: f64,
    /// `B = E_x[Σ_j KL(p(z_j | x) ‖ Q(z_j | x))]`.
    pub marginal_kl: Divergence,
    /// `C = −E_{p(z, x)}[log Q(z | x)]`.
    pub cross_entropy: Divergence,
    /// `H(z | x)` from joint entropies.
    pub conditional_entropy: f64,
    /// `|H(z | x) − (C − A − B)|`, absent when `B` or `C` is infinite.
    pub residual: Option<f64>,
}

/// Tolerance for the factorization premise of [`infogan_decomposition`].
pub const FACTORIZATION_TOLERANCE: f64 = 1e-10;

/// Splits `H(z | x)` of `joint` into conditional total correlation,
/// per-latent KL to `approx`, and the cross-entropy under `approx`.
///
/// `joint` must range over exactly the given and target variables of
/// `approx`, in any order.
pub fn infogan_decomposition(joint: &ProbTable, approx: &ConditionalTable) -> Result<InfoganReport> {
    if !approx.is_factorized(FACTORIZATION_TOLERANCE) {
        return Err(ProbError::NotFactorized);
    }
    let order: Vec<&str> = approx
        .given
        .iter()
        .chain(&approx.target)
        .map(|v| v.name.as_str())
        .collect();
    if order.len() != joint.variables.len() {
        return Err(ProbError::SchemaMismatch(format!(
            "joint has {} variables, conditional has {}",
            joint.variables.len(),
            order.len()
        )));
    }
    let joint = joint.reorder(&order)?;
    for (a, b) in joint.variables.iter().zip(approx.given.iter().chain(&approx.target)) {
        if a.cardinality != b.cardinality {
            return Err(ProbError::SchemaMismatch(format!(
                "cardinality of `{}` differs",
                a.name
            )));
        }
    }

    let width = approx.width();
    let mut conditional_tc = 0.0;
    let mut marginal_kl = Divergence::Finite(0.0);
    let mut cross_entropy = Divergence::Finite(0.0);
    for r in 0..approx.rows() {
        let slice = &joint.probs[r * width..(r + 1) * width];
        let px: f64 = slice.iter().sum();
        if px <= 0.0 {
            continue;
        }
        let cond: Vec<f64> = slice.iter().map(|p| p / px).collect();
        let p_marg = factor_marginals(&cond, &approx.target);
        let q_marg = approx.row_marginals(r);

        let singles: f64 = p_marg.iter().map(|m| entropy_of(m)).sum();
        conditional_tc += px * (singles - entropy_of(&cond));

        for (pm, qm) in p_marg.iter().zip(&q_marg) {
            marginal_kl = marginal_kl
                + match kl_divergence(pm, qm) {
                    Divergence::Finite(v) => Divergence::Finite(px * v),
                    inf => inf,
                };
        }

        let q = approx.row(r);
        for (&p, &qv) in cond.iter().zip(q) {
            if p > 0.0 {
                cross_entropy = cross_entropy
                    + if qv > 0.0 {
                        Divergence::Finite(-px * p * qv.ln())
                    } else {
                        Divergence::Infinite
                    };
            }
        }
    }

    let given: Vec<&str> = order[..approx.given.len()].to_vec();
    let target: Vec<&str> = order[approx.given.len()..].to_vec();
    let conditional_entropy = joint.conditional_entropy(&target, &given)?;
    let residual = match (marginal_kl, cross_entropy) {
        (Divergence::Finite(b), Divergence::Finite(c)) => Some((conditional_entropy - (c - conditional_tc - b)).abs()),
        _ => None,
    };
    Ok(InfoganReport {
        conditional_tc,
        marginal_kl,
        cross_entropy,
        conditional_entropy,
        residual,
    })
}

/// Odometer over all assignments of the given cardinalities, last index
/// fastest.
pub fn for_each_assignment(cards: &[usize], mut f: impl FnMut(&[usize])) {
    if cards.contains(&0) {
        return;
    }
    let mut a = vec![0usize; cards.len()];
    loop {
        f(&a);
        let mut k = cards.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            a[k] += 1;
            if a[k] < cards[k] {
                break;
            }
            a[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(name: &str, c: usize) -> Variable {
        Variable::new(name, c)
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            ProbTable::new(vec![v("A", 0)], vec![]),
            Err(ProbError::ZeroCardinality(_))
        ));
        assert!(matches!(
            ProbTable::new(vec![v("A", 2), v("A", 2)], vec![0.25; 4]),
            Err(ProbError::DuplicateVariable(_))
        ));
        assert!(matches!(
            ProbTable::new(vec![v("A", 2)], vec![0.5]),
            Err(ProbError::LengthMismatch { .. })
        ));
        assert!(matches!(
            ProbTable::new(vec![v("A", 2)], vec![1.5, -0.5]),
            Err(ProbError::InvalidProbability { .. })
        ));
        assert!(matches!(
            ProbTable::new(vec![v("A", 2)], vec![0.5, 0.6]),
            Err(ProbError::NotNormalized(_))
        ));
        assert!(matches!(
            ProbTable::new(vec![v("A", 10_000), v("B", 10_000)], vec![]),
            Err(ProbError::TooLarge(_))
        ));
    }

    #[test]
    fn small_drift_is_renormalized() {
        let t = ProbTable::new(vec![v("A", 2)], vec![0.5 + 1e-11, 0.5]).unwrap();
        close(t.probs().iter().sum(), 1.0, 1e-15);
    }

    #[test]
    fn marginalize_uniform_and_point_mass() {
        let t = ProbTable::uniform(vec![v("A", 2), v("B", 2)]).unwrap();
        assert_eq!(t.marginalize(&["A"]).unwrap().probs(), &[0.5, 0.5]);

        let t = ProbTable::new(vec![v("A", 2), v("B", 3)], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(t.marginalize(&["B"]).unwrap().probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn marginalize_matches_loop_over_dropped_axis() {
        let t = ProbTable::random(vec![v("A", 3), v("B", 4), v("C", 2)], &mut rng(7)).unwrap();
        let m = t.marginalize(&["C", "A"]).unwrap();
        assert_eq!(m.variables()[0].name, "A");
        for a in 0..3 {
            for c in 0..2 {
                let direct: f64 = (0..4).map(|b| t.prob(&[a, b, c])).sum();
                close(m.prob(&[a, c]), direct, 1e-15);
            }
        }
    }

    #[test]
    fn marginalize_unknown_variable_is_named() {
        let t = ProbTable::uniform(vec![v("A", 2)]).unwrap();
        let err = t.marginalize(&["Q"]).unwrap_err();
        assert_eq!(err, ProbError::UnknownVariable("Q".into()));
        assert!(err.to_string().contains('Q'));
    }

    #[test]
    fn condition_cases() {
        let t = ProbTable::from_fn(vec![v("A", 2), v("B", 2)], |a| [0.3, 0.7][a[0]] * [0.4, 0.6][a[1]]).unwrap();
        let c = t.condition(&[("B", 0)]).unwrap();
        close(c.probs()[0], 0.3, 1e-15);
        close(c.probs()[1], 0.7, 1e-15);

        let copy = ProbTable::from_fn(vec![v("A", 2), v("B", 2)], |a| (a[0] == a[1]) as u8 as f64).unwrap();
        assert_eq!(copy.condition(&[("B", 1)]).unwrap().probs(), &[0.0, 1.0]);
    }

    #[test]
    fn condition_matches_slice_and_renormalize() {
        let t = ProbTable::random(vec![v("A", 2), v("B", 3), v("C", 3)], &mut rng(7)).unwrap();
        let c = t.condition(&[("C", 2)]).unwrap();
        let mut slice = Vec::new();
        for a in 0..2 {
            for b in 0..3 {
                slice.push(t.prob(&[a, b, 2]));
            }
        }
        let mass: f64 = slice.iter().sum();
        for (got, want) in c.probs().iter().zip(slice.iter().map(|p| p / mass)) {
            close(*got, want, 1e-15);
        }
    }

    #[test]
    fn condition_on_null_event_fails() {
        let t = ProbTable::new(vec![v("A", 2)], vec![1.0, 0.0]).unwrap();
        let err = t.condition(&[("A", 1)]).unwrap_err();
        assert_eq!(err.to_string(), "conditioning on null event");
        assert!(matches!(
            t.condition(&[("A", 5)]),
            Err(ProbError::StateOutOfRange { .. })
        ));
    }

    #[test]
    fn entropy_examples() {
        let point = ProbTable::new(vec![v("A", 3)], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(point.entropy(&["A"]).unwrap(), 0.0);
        let uni = ProbTable::uniform(vec![v("A", 4)]).unwrap();
        close(uni.entropy(&["A"]).unwrap(), 1.386_294_361_119_890_6, 1e-12);
        let t = ProbTable::new(vec![v("A", 3)], vec![0.5, 0.25, 0.25]).unwrap();
        let direct = -(0.5f64 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
        close(t.entropy(&["A"]).unwrap(), direct, 1e-15);
        close(direct, 1.039_720_770_839_917_9, 1e-12);
        assert_eq!(t.entropy(&[]), Err(ProbError::EmptySet));
    }

    #[test]
    fn mutual_information_examples() {
        let ind = ProbTable::from_fn(vec![v("A", 3), v("B", 2)], |a| [0.2, 0.3, 0.5][a[0]] * [0.9, 0.1][a[1]]).unwrap();
        close(ind.mutual_information(&["A"], &["B"]).unwrap(), 0.0, 1e-12);

        let copy = ProbTable::from_fn(vec![v("A", 2), v("B", 2)], |a| (a[0] == a[1]) as u8 as f64).unwrap();
        close(
            copy.mutual_information(&["A"], &["B"]).unwrap(),
            std::f64::consts::LN_2,
            1e-12,
        );

        let t = ProbTable::random(vec![v("A", 3), v("B", 4)], &mut rng(11)).unwrap();
        let pa = t.marginalize(&["A"]).unwrap();
        let pb = t.marginalize(&["B"]).unwrap();
        let mut direct = 0.0;
        for a in 0..3 {
            for b in 0..4 {
                let p = t.prob(&[a, b]);
                direct += p * (p / (pa.probs()[a] * pb.probs()[b])).ln();
            }
        }
        close(t.mutual_information(&["A"], &["B"]).unwrap(), direct, 1e-12);
        assert!(matches!(
            t.mutual_information(&["A"], &["A"]),
            Err(ProbError::Overlap(_))
        ));
    }

    #[test]
    fn conditional_mi_examples() {
        let t = ProbTable::random(vec![v("A", 3), v("B", 2), v("C", 3)], &mut rng(13)).unwrap();
        close(
            t.conditional_mutual_information(&["A"], &["B"], &[]).unwrap(),
            t.mutual_information(&["A"], &["B"]).unwrap(),
            1e-12,
        );

        // A -> C -> B
        let pa = [0.3, 0.7];
        let pc_a = [[0.9, 0.1], [0.2, 0.8]];
        let pb_c = [[0.6, 0.4], [0.25, 0.75]];
        let chain = ProbTable::from_fn(vec![v("A", 2), v("B", 2), v("C", 2)], |x| {
            pa[x[0]] * pc_a[x[0]][x[2]] * pb_c[x[2]][x[1]]
        })
        .unwrap();
        close(
            chain.conditional_mutual_information(&["A"], &["B"], &["C"]).unwrap(),
            0.0,
            1e-12,
        );

        // H(A|C) - H(A|B,C) by conditioning loops.
        let cond_entropy = |given: &[&str]| -> f64 {
            let m = t.marginalize(&[&["A"][..], given].concat()).unwrap();
            let g = m.marginalize(given).unwrap();
            let names: Vec<&str> = g.variables().iter().map(|v| v.name.as_str()).collect();
            let mut h = 0.0;
            g.for_each_outcome(|a, p| {
                let ev: Vec<(&str, usize)> = names.iter().copied().zip(a.iter().copied()).collect();
                h += p * entropy_of(m.condition(&ev).unwrap().probs());
            });
            h
        };
        let oracle = cond_entropy(&["C"]) - cond_entropy(&["B", "C"]);
        close(
            t.conditional_mutual_information(&["A"], &["B"], &["C"]).unwrap(),
            oracle,
            1e-12,
        );

        assert!(matches!(
            t.conditional_mutual_information(&["A"], &["B"], &["A"]),
            Err(ProbError::Overlap(_))
        ));
    }

    #[test]
    fn total_correlation_examples() {
        let prod = ProbTable::from_fn(vec![v("A", 2), v("B", 3), v("C", 2)], |a| {
            [0.4, 0.6][a[0]] * [0.1, 0.2, 0.7][a[1]] * [0.5, 0.5][a[2]]
        })
        .unwrap();
        close(prod.total_correlation(&["A", "B", "C"]).unwrap(), 0.0, 1e-12);

        let copy = ProbTable::from_fn(vec![v("A", 2), v("B", 2)], |a| (a[0] == a[1]) as u8 as f64).unwrap();
        close(
            copy.total_correlation(&["A", "B"]).unwrap(),
            std::f64::consts::LN_2,
            1e-12,
        );

        // KL(joint || product of marginals) computed directly.
        let t = ProbTable::random(vec![v("A", 2), v("B", 3), v("C", 4)], &mut rng(17)).unwrap();
        let m: Vec<Vec<f64>> = ["A", "B", "C"]
            .iter()
            .map(|n| t.marginalize(&[n]).unwrap().probs().to_vec())
            .collect();
        let mut kl = 0.0;
        t.for_each_outcome(|a, p| {
            if p > 0.0 {
                kl += p * (p / (m[0][a[0]] * m[1][a[1]] * m[2][a[2]])).ln();
            }
        });
        close(t.total_correlation(&["A", "B", "C"]).unwrap(), kl, 1e-12);
    }

    #[test]
    fn chain_rule_with_empty_rest_is_plain_mi() {
        let t = ProbTable::random(vec![v("x", 4), v("z1", 3)], &mut rng(3)).unwrap();
        let r = t.verify_chain_rule(&["x"], "z1", &[]).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert_eq!(r.lhs, t.mutual_information(&["z1"], &["x"]).unwrap());
        assert!(r.invariance_holds(1e-12));
    }

    #[test]
    fn chain_rule_rejects_overlap() {
        let t = ProbTable::random(vec![v("x", 2), v("z1", 2), v("z2", 2)], &mut rng(3)).unwrap();
        assert!(t.verify_chain_rule(&["x"], "x", &["z1"]).is_err());
        assert!(t.verify_chain_rule(&["x"], "z1", &["z1"]).is_err());
    }

    #[test]
    fn deterministic_bit_split() {
        // x = (b0, b1) over 4 states, z1 = b0, z2 = b1.
        let split = |px: [f64; 4]| {
            ProbTable::from_fn(vec![v("x", 4), v("z1", 2), v("z2", 2)], |a| {
                if a[1] == a[0] >> 1 && a[2] == a[0] & 1 {
                    px[a[0]]
                } else {
                    0.0
                }
            })
            .unwrap()
        };
        let independent = split([0.25; 4]);
        let r = independent.verify_chain_rule(&["x"], "z1", &["z2"]).unwrap();
        assert!(r.residual < 1e-10);
        assert!(r.invariance_holds(1e-10));

        let coupled = split([0.4, 0.1, 0.1, 0.4]);
        let r = coupled.verify_chain_rule(&["x"], "z1", &["z2"]).unwrap();
        assert!(r.residual < 1e-10);
        assert!(!r.invariance_holds(1e-6));
    }

    #[test]
    fn theorem1_conditionally_independent_latents() {
        let px = [0.2, 0.5, 0.3];
        let p1 = [[0.9, 0.1], [0.3, 0.7], [0.5, 0.5]];
        let p2 = [[0.2, 0.3, 0.5], [0.6, 0.2, 0.2], [0.1, 0.1, 0.8]];
        let t = ProbTable::from_fn(vec![v("x", 3), v("z1", 2), v("z2", 3)], |a| {
            px[a[0]] * p1[a[0]][a[1]] * p2[a[0]][a[2]]
        })
        .unwrap();
        let r = t.verify_theorem1(&["x"], &["z1", "z2"]).unwrap();
        close(r.conditional_tc, 0.0, 1e-12);
        close(r.lhs, -r.marginal_tc, 1e-12);
        assert!(r.lhs <= 1e-12);
    }

    #[test]
    fn theorem1_constant_data() {
        let t = ProbTable::random(vec![v("x", 1), v("z1", 3), v("z2", 2)], &mut rng(5)).unwrap();
        let r = t.verify_theorem1(&["x"], &["z1", "z2"]).unwrap();
        close(r.lhs, 0.0, 1e-12);
        close(r.conditional_tc, r.marginal_tc, 1e-12);
        assert!(r.residual < 1e-10);
    }

    #[test]
    fn infogan_optimal_factorized_posterior() {
        let px = [0.3, 0.7];
        let p1 = [[0.9, 0.1], [0.4, 0.6]];
        let p2 = [[0.2, 0.8], [0.5, 0.5]];
        let joint = ProbTable::from_fn(vec![v("x", 2), v("z1", 2), v("z2", 2)], |a| {
            px[a[0]] * p1[a[0]][a[1]] * p2[a[0]][a[2]]
        })
        .unwrap();
        let q = ConditionalTable::from_factors(
            vec![v("x", 2)],
            vec![(v("z1", 2), p1.concat()), (v("z2", 2), p2.concat())],
        )
        .unwrap();
        let r = infogan_decomposition(&joint, &q).unwrap();
        close(r.conditional_tc, 0.0, 1e-12);
        close(r.marginal_kl.finite().unwrap(), 0.0, 1e-12);
        close(r.cross_entropy.finite().unwrap(), r.conditional_entropy, 1e-12);
        assert!(r.residual.unwrap() < 1e-10);
    }

    #[test]
    fn infogan_uniform_posterior_matches_cross_entropy_oracle() {
        let joint = ProbTable::random(vec![v("x", 3), v("z1", 2), v("z2", 3)], &mut rng(29)).unwrap();
        let q = ConditionalTable::new(vec![v("x", 3)], vec![v("z1", 2), v("z2", 3)], vec![1.0 / 6.0; 18]).unwrap();
        let r = infogan_decomposition(&joint, &q).unwrap();
        // Cross-entropy under a uniform Q is log 6 outright.
        let c = 6f64.ln();
        close(r.cross_entropy.finite().unwrap(), c, 1e-12);
        close(
            r.conditional_tc + r.marginal_kl.finite().unwrap(),
            c - r.conditional_entropy,
            1e-10,
        );
    }

    #[test]
    fn infogan_product_of_marginals_has_zero_kl() {
        // Row 0 is strongly correlated, row 1 mildly.
        let rows = [[0.45, 0.05, 0.05, 0.45], [0.3, 0.2, 0.1, 0.4]];
        let px = [0.5, 0.5];
        let joint = ProbTable::from_fn(vec![v("x", 2), v("z1", 2), v("z2", 2)], |a| {
            px[a[0]] * rows[a[0]][a[1] * 2 + a[2]]
        })
        .unwrap();
        let m1: Vec<f64> = rows.iter().flat_map(|r| [r[0] + r[1], r[2] + r[3]]).collect();
        let m2: Vec<f64> = rows.iter().flat_map(|r| [r[0] + r[2], r[1] + r[3]]).collect();
        let q = ConditionalTable::from_factors(vec![v("x", 2)], vec![(v("z1", 2), m1), (v("z2", 2), m2)]).unwrap();
        let r = infogan_decomposition(&joint, &q).unwrap();

        let tc_row = |row: &[f64; 4]| {
            let a = [row[0] + row[1], row[2] + row[3]];
            let b = [row[0] + row[2], row[1] + row[3]];
            let mut kl = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let p = row[i * 2 + j];
                    kl += p * (p / (a[i] * b[j])).ln();
                }
            }
            kl
        };
        let expected = 0.5 * tc_row(&rows[0]) + 0.5 * tc_row(&rows[1]);
        assert!(r.conditional_tc > 0.0);
        close(r.conditional_tc, expected, 1e-12);
        close(r.marginal_kl.finite().unwrap(), 0.0, 1e-12);
        assert!(r.residual.unwrap() < 1e-10);
    }

    #[test]
    fn infogan_rejects_correlated_posterior() {
        let joint = ProbTable::uniform(vec![v("x", 2), v("z1", 2), v("z2", 2)]).unwrap();
        let q = ConditionalTable::new(
            vec![v("x", 2)],
            vec![v("z1", 2), v("z2", 2)],
            vec![0.5, 0.0, 0.0, 0.5, 0.25, 0.25, 0.25, 0.25],
        )
        .unwrap();
        let err = infogan_decomposition(&joint, &q).unwrap_err();
        assert_eq!(err, ProbError::NotFactorized);
    }

    #[test]
    fn infogan_off_support_is_infinite() {
        let joint = ProbTable::uniform(vec![v("x", 1), v("z1", 2)]).unwrap();
        let q = ConditionalTable::new(vec![v("x", 1)], vec![v("z1", 2)], vec![1.0, 0.0]).unwrap();
        let r = infogan_decomposition(&joint, &q).unwrap();
        assert!(r.marginal_kl.is_infinite());
        assert!(r.cross_entropy.is_infinite());
        assert_eq!(r.residual, None);
    }

    #[test]
    fn kl_divergence_sentinel() {
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), Divergence::Infinite);
        assert_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]), Divergence::Finite(2f64.ln()));
        assert_eq!(serde_json::to_string(&Divergence::Infinite).unwrap(), "\"infinite\"");
    }

    #[test]
    fn json_schema() {
        let t = ProbTable::new(vec![v("A", 2), v("B", 1)], vec![0.25, 0.75]).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(
            s,
            r#"{"variables":[{"name":"A","cardinality":2},{"name":"B","cardinality":1}],"probs":[0.25,0.75]}"#
        );
        let back: ProbTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"variables":[{"name":"A","cardinality":2}],"probs":[0.9,0.9]}"#;
        assert!(serde_json::from_str::<ProbTable>(bad).is_err());
    }
}
