//! Learnable combination of the four scope normalizations.
//!
//! `out = gamma ⊙ Σ_u lambda_u ⊙ norm_u(h) + beta`, where the per-column
//! gate weights `lambda_u` are the raw weights clipped at zero and divided by
//! their sum over the active scopes.

use serde::{Deserialize, Serialize};

use super::{normalize, NormMode, RunningStats, Scope, ScopeContext};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A nonempty subset of the four scopes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActiveSet(u8);

impl ActiveSet {
    pub const ALL: ActiveSet = ActiveSet(0b1111);

    pub fn new(scopes: &[Scope]) -> Result<Self> {
        let bits = scopes.iter().fold(0u8, |acc, s| acc | 1 << s.index());
        if bits == 0 {
            return Err(Error::Config(
                "at least one normalizer must be active".into(),
            ));
        }
        Ok(ActiveSet(bits))
    }

    pub fn single(scope: Scope) -> Self {
        ActiveSet(1 << scope.index())
    }

    pub fn contains(self, scope: Scope) -> bool {
        self.0 & (1 << scope.index()) != 0
    }

    pub fn scopes(self) -> impl Iterator<Item = Scope> {
        Scope::ALL.into_iter().filter(move |&s| self.contains(s))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Parses letters such as `"g,b"` or `"nagb"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut scopes = Vec::new();
        for c in spec.chars().filter(|c| *c != ',' && !c.is_whitespace()) {
            let s = Scope::from_letter(c).ok_or_else(|| {
                Error::Config(format!("unknown normalizer {c:?}; use n, a, g, b"))
            })?;
            if scopes.contains(&s) {
                return Err(Error::Config(format!("normalizer {c:?} listed twice")));
            }
            scopes.push(s);
        }
        ActiveSet::new(&scopes)
    }
}

impl std::fmt::Display for ActiveSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let letters: Vec<String> = self.scopes().map(|s| s.letter().to_string()).collect();
        f.write_str(&letters.join(","))
    }
}

impl TryFrom<String> for ActiveSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        ActiveSet::parse(&s)
    }
}

impl From<ActiveSet> for String {
    fn from(a: ActiveSet) -> String {
        a.to_string()
    }
}

/// Parameter values of one unified normalization layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnParams {
    /// Raw gate weights in scope order n, a, g, b; each `1 x d`.
    pub raw_lambda: [Tensor; 4],
    pub gamma: Tensor,
    pub beta: Tensor,
    pub active: ActiveSet,
}

impl GnParams {
    /// Equal raw weights, so the constrained weights start at `1 / |active|`;
    /// `gamma = 1`, `beta = 0`.
    pub fn new(dim: usize, active: ActiveSet) -> Self {
        GnParams {
            raw_lambda: std::array::from_fn(|_| Tensor::ones(1, dim)),
            gamma: Tensor::ones(1, dim),
            beta: Tensor::zeros(1, dim),
            active,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.cols()
    }

    /// Binds the parameters as tape leaves. Inactive gate weights are not bound.
    pub fn bind(&self, tape: &mut Tape) -> Result<GnVars> {
        let mut raw_lambda = [None; 4];
        for s in self.active.scopes() {
            raw_lambda[s.index()] = Some(tape.leaf(self.raw_lambda[s.index()].clone())?);
        }
        Ok(GnVars {
            raw_lambda,
            gamma: tape.leaf(self.gamma.clone())?,
            beta: tape.leaf(self.beta.clone())?,
        })
    }
}

/// Tape handles of a unified normalization layer. `raw_lambda[u]` is
/// `Some` exactly for the active scopes.
#[derive(Clone, Copy, Debug)]
pub struct GnVars {
    pub raw_lambda: [Option<Var>; 4],
    pub gamma: Var,
    pub beta: Var,
}

impl GnVars {
    pub fn active(&self) -> Result<ActiveSet> {
        let scopes: Vec<Scope> = Scope::ALL
            .into_iter()
            .filter(|s| self.raw_lambda[s.index()].is_some())
            .collect();
        ActiveSet::new(&scopes)
    }
}

/// Clips the active raw weights at zero and divides by their per-column sum.
/// A column whose active weights all clip to zero falls back to uniform
/// weights over the active set. Inactive entries stay `None`.
pub fn constrain_lambda_vars(tape: &mut Tape, raw: &[Option<Var>; 4]) -> Result<[Option<Var>; 4]> {
    let active: Vec<(usize, Var)> = raw
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    if active.is_empty() {
        return Err(Error::Config(
            "at least one normalizer must be active".into(),
        ));
    }
    let mut clipped = Vec::with_capacity(active.len());
    for &(i, v) in &active {
        clipped.push((i, tape.clip_min_zero(v)?));
    }
    let mut sum = clipped[0].1;
    for &(_, c) in &clipped[1..] {
        sum = tape.add(sum, c)?;
    }
    let fallback = tape.value(sum).map(|s| if s > 0.0 { 0.0 } else { 1.0 });
    let uses_fallback = fallback.data().iter().any(|&f| f != 0.0);

    let denom = if uses_fallback {
        let scaled = tape.constant(fallback.map(|f| f * active.len() as f64))?;
        tape.add(sum, scaled)?
    } else {
        sum
    };
    let fallback = if uses_fallback {
        Some(tape.constant(fallback)?)
    } else {
        None
    };

    let mut out = [None; 4];
    for (i, c) in clipped {
        let num = match fallback {
            Some(f) => tape.add(c, f)?,
            None => c,
        };
        out[i] = Some(tape.div(num, denom)?);
    }
    Ok(out)
}

/// Constrained gate weights of `params`, one `1 x d` tensor per scope in
/// order n, a, g, b. Inactive scopes are exactly zero.
pub fn constrain_lambda(params: &GnParams) -> Result<[Tensor; 4]> {
    let mut tape = Tape::inference();
    let mut raw = [None; 4];
    for s in params.active.scopes() {
        raw[s.index()] = Some(tape.constant(params.raw_lambda[s.index()].clone())?);
    }
    let lambda = constrain_lambda_vars(&mut tape, &raw)?;
    Ok(std::array::from_fn(|i| match lambda[i] {
        Some(v) => tape.value(v).clone(),
        None => Tensor::zeros(1, params.dim()),
    }))
}

/// Applies the unified normalization to `h`. Only the active scopes are
/// computed. Batch scope in training mode updates `running`.
pub fn unified_gn_forward(
    tape: &mut Tape,
    h: Var,
    ctx: &ScopeContext,
    params: &GnVars,
    mode: NormMode,
    running: &mut RunningStats,
) -> Result<Var> {
    let lambda = constrain_lambda_vars(tape, &params.raw_lambda)?;
    let mut combined: Option<Var> = None;
    for scope in Scope::ALL {
        let Some(weight) = lambda[scope.index()] else {
            continue;
        };
        let normalized = normalize(tape, h, scope, ctx, mode, running)?.output;
        let weighted = tape.mul(normalized, weight)?;
        combined = Some(match combined {
            Some(acc) => tape.add(acc, weighted)?,
            None => weighted,
        });
    }
    let combined = combined.expect("active set is nonempty");
    let scaled = tape.mul(combined, params.gamma)?;
    tape.add(scaled, params.beta)
}

/// A single scope followed by the affine `gamma`, `beta`.
pub fn single_norm_forward(
    tape: &mut Tape,
    h: Var,
    scope: Scope,
    ctx: &ScopeContext,
    gamma: Var,
    beta: Var,
    mode: NormMode,
    running: &mut RunningStats,
) -> Result<Var> {
    let normalized = normalize(tape, h, scope, ctx, mode, running)?.output;
    let scaled = tape.mul(normalized, gamma)?;
    tape.add(scaled, beta)
}
