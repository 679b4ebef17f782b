use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::norm::{
    constrain_lambda, single_norm_forward, unified_gn_forward, ActiveSet, GnParams, GnVars,
    NormMode, RunningStats, Scope, ScopeContext,
};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Which normalization a layer applies after its transform.
///
/// Text form: `none`, one of `n`, `a`, `g`, `b`, `gn`, or `gn:<subset>` such
/// as `gn:g,b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NormKind {
    None,
    Single(Scope),
    Unified(ActiveSet),
}

impl NormKind {
    pub fn is_unified(self) -> bool {
        matches!(self, NormKind::Unified(_))
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "none" => return Ok(NormKind::None),
            "gn" => return Ok(NormKind::Unified(ActiveSet::ALL)),
            _ => {}
        }
        if let Some(subset) = s.strip_prefix("gn:") {
            return Ok(NormKind::Unified(ActiveSet::parse(subset)?));
        }
        let mut chars = s.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(scope) = Scope::from_letter(c) {
                return Ok(NormKind::Single(scope));
            }
        }
        Err(Error::Config(format!(
            "unknown norm '{s}', expected none, n, a, g, b, gn or gn:<subset>"
        )))
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormKind::None => f.write_str("none"),
            NormKind::Single(scope) => write!(f, "{}", scope.letter()),
            NormKind::Unified(a) if *a == ActiveSet::ALL => f.write_str("gn"),
            NormKind::Unified(a) => write!(f, "gn:{a}"),
        }
    }
}

impl TryFrom<String> for NormKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NormKind> for String {
    fn from(k: NormKind) -> String {
        k.to_string()
    }
}

/// The normalization slot of a layer, generic over how parameters are held
/// (`ParamId` in a model, `Var` on a tape).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NormSlot<T> {
    None,
    Single {
        scope: Scope,
        gamma: T,
        beta: T,
    },
    Unified {
        raw_lambda: [Option<T>; 4],
        gamma: T,
        beta: T,
    },
}

impl<T> NormSlot<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> NormSlot<U> {
        match self {
            NormSlot::None => NormSlot::None,
            NormSlot::Single { scope, gamma, beta } => NormSlot::Single {
                scope: *scope,
                gamma: f(gamma),
                beta: f(beta),
            },
            NormSlot::Unified {
                raw_lambda,
                gamma,
                beta,
            } => NormSlot::Unified {
                raw_lambda: [
                    raw_lambda[0].as_ref().map(&mut f),
                    raw_lambda[1].as_ref().map(&mut f),
                    raw_lambda[2].as_ref().map(&mut f),
                    raw_lambda[3].as_ref().map(&mut f),
                ],
                gamma: f(gamma),
                beta: f(beta),
            },
        }
    }

    pub fn kind(&self) -> NormKind {
        match self {
            NormSlot::None => NormKind::None,
            NormSlot::Single { scope, .. } => NormKind::Single(*scope),
            NormSlot::Unified { raw_lambda, .. } => {
                let scopes: Vec<Scope> = Scope::ALL
                    .into_iter()
                    .filter(|s| raw_lambda[s.index()].is_some())
                    .collect();
                NormKind::Unified(
                    ActiveSet::new(&scopes).expect("unified slot has an active scope"),
                )
            }
        }
    }
}

impl NormSlot<ParamId> {
    /// Registers the slot's parameters: `gamma = 1`, `beta = 0`, and raw
    /// gate weights of 1 for each active scope.
    pub fn init(store: &mut ParamStore, prefix: &str, kind: NormKind, dim: usize) -> Self {
        match kind {
            NormKind::None => NormSlot::None,
            NormKind::Single(scope) => NormSlot::Single {
                scope,
                gamma: store.add(format!("{prefix}.gamma"), Tensor::ones(1, dim)),
                beta: store.add(format!("{prefix}.beta"), Tensor::zeros(1, dim)),
            },
            NormKind::Unified(active) => {
                let mut raw_lambda = [None; 4];
                for s in active.scopes() {
                    raw_lambda[s.index()] = Some(store.add(
                        format!("{prefix}.lambda_{}", s.letter()),
                        Tensor::ones(1, dim),
                    ));
                }
                NormSlot::Unified {
                    raw_lambda,
                    gamma: store.add(format!("{prefix}.gamma"), Tensor::ones(1, dim)),
                    beta: store.add(format!("{prefix}.beta"), Tensor::zeros(1, dim)),
                }
            }
        }
    }

    /// The unified parameters as [`GnParams`], or `None` for other slots.
    pub fn gn_params(&self, store: &ParamStore) -> Option<GnParams> {
        let NormSlot::Unified {
            raw_lambda,
            gamma,
            beta,
        } = self
        else {
            return None;
        };
        let NormKind::Unified(active) = self.kind() else {
            unreachable!()
        };
        let dim = store.get(*gamma).cols();
        Some(GnParams {
            raw_lambda: std::array::from_fn(|i| match raw_lambda[i] {
                Some(id) => store.get(id).clone(),
                None => Tensor::zeros(1, dim),
            }),
            gamma: store.get(*gamma).clone(),
            beta: store.get(*beta).clone(),
            active,
        })
    }

    /// Constrained gate weights of a unified slot.
    pub fn lambda(&self, store: &ParamStore) -> Option<Result<[Tensor; 4]>> {
        self.gn_params(store).map(|p| constrain_lambda(&p))
    }
}

impl NormSlot<Var> {
    /// Normalizes `h` over the rows described by `ctx`.
    pub fn apply(
        &self,
        tape: &mut Tape,
        h: Var,
        ctx: &ScopeContext,
        mode: NormMode,
        running: &mut RunningStats,
    ) -> Result<Var> {
        match *self {
            NormSlot::None => Ok(h),
            NormSlot::Single { scope, gamma, beta } => {
                single_norm_forward(tape, h, scope, ctx, gamma, beta, mode, running)
            }
            NormSlot::Unified {
                raw_lambda,
                gamma,
                beta,
            } => {
                let vars = GnVars {
                    raw_lambda,
                    gamma,
                    beta,
                };
                unified_gn_forward(tape, h, ctx, &vars, mode, running)
            }
        }
    }
}

/// A dense `x W + b` map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear<T> {
    pub weight: T,
    pub bias: T,
}

impl<T> Linear<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Linear<U> {
        Linear {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }
}

impl Linear<ParamId> {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        Linear {
            weight: store.add_glorot(format!("{prefix}.weight"), fan_in, fan_out, rng),
            bias: store.add(format!("{prefix}.bias"), Tensor::zeros(1, fan_out)),
        }
    }
}

impl Linear<Var> {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = tape.matmul(x, self.weight)?;
        tape.add(y, self.bias)
    }
}
