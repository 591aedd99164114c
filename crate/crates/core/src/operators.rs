//! Smooth approximations of the max, the stacked operator `H`, the Bellman
//! operator `F(Q) = R + γ P H(Q)`, and weighted `p`-norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{MdpModel, QTable, Shape};

/// Which `h: ℝⁿ → ℝ` to use, with its temperature `λ` where relevant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "temperature", rename_all = "lowercase")]
pub enum OperatorKind {
    Max,
    Lse(f64),
    Mellowmax(f64),
    Boltzmann(f64),
}

impl OperatorKind {
    /// Builds a kind from its name (`max`, `lse`, `mellowmax`, `boltzmann`)
    /// and a temperature, which is ignored for `max`.
    pub fn from_name(name: &str, temperature: f64) -> Result<Self> {
        let kind = match name.to_ascii_lowercase().as_str() {
            "max" => return Ok(Self::Max),
            "lse" | "logsumexp" => Self::Lse(temperature),
            "mellowmax" | "mm" => Self::Mellowmax(temperature),
            "boltzmann" | "bz" | "softmax" => Self::Boltzmann(temperature),
            other => return Err(Error::Domain(format!("unknown operator '{other}'"))),
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        match self.temperature() {
            Some(l) if !(l > 0.0) || l.is_nan() => {
                Err(Error::Domain(format!("temperature must be positive, got {l}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Max => "max",
            Self::Lse(_) => "lse",
            Self::Mellowmax(_) => "mellowmax",
            Self::Boltzmann(_) => "boltzmann",
        }
    }

    pub fn temperature(&self) -> Option<f64> {
        match *self {
            Self::Max => None,
            Self::Lse(l) | Self::Mellowmax(l) | Self::Boltzmann(l) => Some(l),
        }
    }

    /// Same family with a different temperature (no-op for `max`).
    pub fn with_temperature(&self, lambda: f64) -> Self {
        match self {
            Self::Max => Self::Max,
            Self::Lse(_) => Self::Lse(lambda),
            Self::Mellowmax(_) => Self::Mellowmax(lambda),
            Self::Boltzmann(_) => Self::Boltzmann(lambda),
        }
    }

    /// Whether `F` built from this kind is a `γ`-contraction in `‖·‖_∞`.
    pub fn is_non_expansive(&self) -> bool {
        !matches!(self, Self::Boltzmann(_))
    }

    /// Evaluates `h(x)` without input checks. `x` must be non-empty and
    /// finite; see [`smooth_max`] for the checked version.
    ///
    /// The exponential families are evaluated on `x - max(x)`, so nothing
    /// overflows even for entries near `1e300`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lambda = match *self {
            Self::Max => return m,
            Self::Lse(l) | Self::Mellowmax(l) | Self::Boltzmann(l) => l,
        };
        // exponents λ(x_i - m) ≤ 0; the maximizer contributes exactly 1
        let scaled = |xi: f64| if xi == m { 0.0 } else { lambda * (xi - m) };
        match self {
            Self::Lse(_) => {
                let rest: f64 = x.iter().map(|&xi| scaled(xi).exp()).sum::<f64>() - 1.0;
                m + rest.ln_1p() / lambda
            }
            Self::Mellowmax(_) => {
                let mean = x.iter().map(|&xi| scaled(xi).exp()).sum::<f64>() / x.len() as f64;
                m + mean.ln() / lambda
            }
            Self::Boltzmann(_) => {
                let (mut num, mut den) = (0.0, 0.0);
                for &xi in x {
                    let w = scaled(xi).exp();
                    num += w * (xi - m);
                    den += w;
                }
                m + num / den
            }
            Self::Max => unreachable!(),
        }
    }
}

/// `h_max`, `h_lse^λ`, `h_mm^λ` or `h_bz^λ` of `x`.
pub fn smooth_max(kind: OperatorKind, x: &[f64]) -> Result<f64> {
    kind.validate()?;
    if x.is_empty() {
        return Err(Error::Domain("smooth max of an empty vector".into()));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite input {v}")));
    }
    Ok(kind.eval(x))
}

/// `H(Q)`: component `s` is `h(Q(s, ·))`.
pub fn apply_h(kind: OperatorKind, q: &[f64], shape: Shape) -> Result<Vec<f64>> {
    shape.check_len(q.len())?;
    let mut out = vec![0.0; shape.n_states];
    let mut row = Vec::with_capacity(shape.n_actions);
    apply_h_into(kind, q, shape, &mut row, &mut out);
    Ok(out)
}

#[inline]
fn apply_h_into(kind: OperatorKind, q: &[f64], shape: Shape, row: &mut Vec<f64>, out: &mut [f64]) {
    for (s, o) in out.iter_mut().enumerate() {
        shape.gather_into(q, s, row);
        *o = kind.eval(row);
    }
}

/// The Bellman operator `F(Q) = R + γ P H(Q)` for a fixed model and kind,
/// with the expected reward cached.
#[derive(Debug, Clone)]
pub struct BellmanOperator {
    mdp: MdpModel,
    kind: OperatorKind,
    expected_reward: QTable,
}

impl BellmanOperator {
    pub fn new(mdp: &MdpModel, kind: OperatorKind) -> Result<Self> {
        kind.validate()?;
        Ok(Self { mdp: mdp.clone(), kind, expected_reward: mdp.expected_reward() })
    }

    pub fn mdp(&self) -> &MdpModel {
        &self.mdp
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn shape(&self) -> Shape {
        self.mdp.shape()
    }

    pub fn expected_reward(&self) -> &[f64] {
        &self.expected_reward
    }

    /// Writes `F(q)` into `out`. Both must have length `|S||A|`.
    pub fn apply_into(&self, q: &[f64], out: &mut [f64]) {
        self.apply_with(self.kind, true, q, out);
    }

    /// `γ P H_kind(q)`, plus `R` when `with_reward`.
    pub(crate) fn apply_with(&self, kind: OperatorKind, with_reward: bool, q: &[f64], out: &mut [f64]) {
        let shape = self.shape();
        let gamma = self.mdp.gamma();
        let mut h = vec![0.0; shape.n_states];
        let mut row = Vec::with_capacity(shape.n_actions);
        apply_h_into(kind, q, shape, &mut row, &mut h);
        for s in 0..shape.n_states {
            for a in 0..shape.n_actions {
                let i = shape.index(s, a);
                let next: f64 = self.mdp.transition_row(s, a).iter().zip(&h).map(|(p, v)| p * v).sum();
                let base = if with_reward { self.expected_reward[i] } else { 0.0 };
                out[i] = base + gamma * next;
            }
        }
    }

    pub fn apply(&self, q: &[f64]) -> Result<QTable> {
        self.shape().check_len(q.len())?;
        let mut out = vec![0.0; q.len()];
        self.apply_into(q, &mut out);
        Ok(out)
    }
}

/// `F(Q) = R + γ P H(Q)`.
pub fn bellman_f(mdp: &MdpModel, kind: OperatorKind, q: &[f64]) -> Result<QTable> {
    BellmanOperator::new(mdp, kind)?.apply(q)
}

/// Order of a norm: an even integer or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormOrder {
    Even(u32),
    Infinity,
}

/// A weighted norm `‖x‖_{p,w} = (Σ w_i |x_i|^p)^{1/p}` or
/// `‖x‖_{∞,w} = max_i w_i |x_i|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    order: NormOrder,
    weights: Vec<f64>,
}

impl WeightedNorm {
    pub fn new(order: NormOrder, weights: Vec<f64>) -> Result<Self> {
        if let NormOrder::Even(p) = order {
            if p < 2 || p % 2 != 0 {
                return Err(Error::Domain(format!("finite p must be an even integer >= 2, got {p}")));
            }
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Domain(format!("norm weights must be positive, got {w}")));
        }
        Ok(Self { order, weights })
    }

    /// Even-`p` norm with unit weights.
    pub fn unweighted(order: NormOrder, n: usize) -> Result<Self> {
        Self::new(order, vec![1.0; n])
    }

    /// The Lyapunov norm of a system with diagonal `d`: weights `1/d_i`.
    pub fn from_d(order: NormOrder, d: &[f64]) -> Result<Self> {
        Self::new(order, d.iter().map(|d| 1.0 / d).collect())
    }

    pub fn order(&self) -> NormOrder {
        self.order
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn w_min(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn w_max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Evaluates the norm; `x` must match the weight count.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Shape { expected: self.weights.len(), got: x.len() });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let p = match self.order {
            NormOrder::Infinity => {
                return x.iter().zip(&self.weights).fold(0.0, |m, (x, w)| m.max(w * x.abs()))
            }
            NormOrder::Even(p) => p,
        };
        let scale = x.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return scale;
        }
        let sum: f64 = x
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * (x.abs() / scale).powi(p as i32))
            .sum();
        scale * sum.powf(1.0 / p as f64)
    }
}

/// `‖x‖_{p,w}` (or the weighted ∞-norm).
pub fn weighted_norm(x: &[f64], norm: &WeightedNorm) -> Result<f64> {
    norm.eval(x)
}

/// Plain `‖x‖_∞`.
pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖x − y‖_∞`.
pub fn inf_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// One inequality `lhs ≤ rhs` with `slack = rhs − lhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, slack: rhs - lhs }
    }
}

/// Slack tolerance for the randomized inequality suites.
pub const BOUND_TOL: f64 = 1e-10;

/// Evaluated sandwich inequalities for one input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn worst_slack(&self) -> f64 {
        self.checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self) -> bool {
        self.worst_slack() >= -BOUND_TOL
    }

    /// Turns a failing report into a property violation naming the first bad check.
    pub fn ensure(self) -> Result<Self> {
        match self.checks.iter().find(|c| c.slack < -BOUND_TOL) {
            Some(c) => Err(Error::PropertyViolation(format!(
                "{}: lhs {} exceeds rhs {} (slack {:e})",
                c.name, c.lhs, c.rhs, c.slack
            ))),
            None => Ok(self),
        }
    }
}

/// Evaluates the four sandwich chains relating max, log-sum-exp, mellowmax
/// and Boltzmann at temperature `lambda`:
///
/// * `max ≤ lse ≤ max + ln(n)/λ`
/// * `max + ln(1/n)/λ ≤ mm ≤ max`
/// * `max − ln(n)/λ ≤ bz ≤ max`
/// * `bz ≤ lse ≤ bz + ln(n)/λ`
pub fn check_operator_bounds(x: &[f64], lambda: f64) -> Result<BoundReport> {
    let hmax = smooth_max(OperatorKind::Max, x)?;
    let lse = smooth_max(OperatorKind::Lse(lambda), x)?;
    let mm = smooth_max(OperatorKind::Mellowmax(lambda), x)?;
    let bz = smooth_max(OperatorKind::Boltzmann(lambda), x)?;
    let gap = (x.len() as f64).ln() / lambda;
    let checks = vec![
        BoundCheck::new("max <= lse", hmax, lse),
        BoundCheck::new("lse <= max + ln(n)/lambda", lse, hmax + gap),
        BoundCheck::new("max - ln(n)/lambda <= mm", hmax - gap, mm),
        BoundCheck::new("mm <= max", mm, hmax),
        BoundCheck::new("max - ln(n)/lambda <= bz", hmax - gap, bz),
        BoundCheck::new("bz <= max", bz, hmax),
        BoundCheck::new("bz <= lse", bz, lse),
        BoundCheck::new("lse <= bz + ln(n)/lambda", lse, bz + gap),
    ];
    Ok(BoundReport { checks })
}

/// `|h(c·x)/c − h_max(x)|`, the distance from the scaling limit at `c`.
/// Exactly zero for `max`.
pub fn scaling_limit_error(kind: OperatorKind, x: &[f64], c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("scale must be positive, got {c}")));
    }
    if kind == OperatorKind::Max {
        return Ok(0.0);
    }
    let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
    Ok((smooth_max(kind, &scaled)? / c - smooth_max(OperatorKind::Max, x)?).abs())
}
