//! Fixed points of the Bellman operators, contraction-modulus estimates,
//! greedy policies, and an exhaustive-search oracle for small MDPs.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{MdpModel, QTable, Shape};
use crate::operators::{inf_dist, BellmanOperator, OperatorKind};
use crate::rng::Rng;

/// Largest number of deterministic policies [`brute_force_optimal`] enumerates.
pub const MAX_POLICIES: usize = 1_000_000;

/// Outcome of Picard iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub q_star: QTable,
    pub iterations: usize,
    /// `‖F(q_star) − q_star‖_∞` at exit.
    pub residual: f64,
    pub converged: bool,
}

/// Runs `Q ← F(Q)` from `Q = 0` until `‖F(Q) − Q‖_∞ ≤ tol·(1−γ)`, which for a
/// `γ`-contraction puts `Q` within `tol` of the fixed point.
///
/// Fixed-temperature Boltzmann is allowed but not guaranteed to converge;
/// the result then carries `converged = false`.
pub fn solve_fixed_point(
    mdp: &MdpModel,
    kind: OperatorKind,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let op = BellmanOperator::new(mdp, kind)?;
    let threshold = tol * (1.0 - mdp.gamma());
    let mut q = vec![0.0; mdp.shape().len()];
    let mut next = vec![0.0; q.len()];
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        op.apply_into(&q, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite Bellman iterate at step {it}")));
        }
        residual = inf_dist(&next, &q);
        if residual <= threshold {
            return Ok(FixedPointResult { q_star: q, iterations: it, residual, converged: true });
        }
        if it < max_iter {
            std::mem::swap(&mut q, &mut next);
        }
    }
    Ok(FixedPointResult { q_star: q, iterations: max_iter, residual, converged: false })
}

/// Sequence of Picard residuals `‖F(Q_k) − Q_k‖_∞` for `k < steps`, from `Q_0 = 0`.
pub fn picard_residuals(mdp: &MdpModel, kind: OperatorKind, steps: usize) -> Result<Vec<f64>> {
    let op = BellmanOperator::new(mdp, kind)?;
    let mut q = vec![0.0; mdp.shape().len()];
    let mut next = q.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        op.apply_into(&q, &mut next);
        out.push(inf_dist(&next, &q));
        std::mem::swap(&mut q, &mut next);
    }
    Ok(out)
}

/// Draws a pair of distinct points for Lipschitz-ratio estimates: `x`
/// uniform in `[-10, 10]ⁿ`, and `y` either independent or a perturbation of
/// `x` at a log-uniform scale in `[1e-2, 10]`.
pub fn random_pair(n: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
    let y = if rng.random_bool(0.25) {
        (0..n).map(|_| rng.random_range(-10.0..10.0)).collect()
    } else {
        let scale = 10f64.powf(rng.random_range(-2.0..1.0));
        x.iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect()
    };
    (x, y)
}

/// Largest observed `‖F(x) − F(y)‖_∞ / ‖x − y‖_∞` over `trials` random pairs.
/// For max, lse and mellowmax the estimate never exceeds `γ` (up to rounding);
/// Boltzmann may exceed it.
pub fn contraction_modulus_estimate(
    mdp: &MdpModel,
    kind: OperatorKind,
    trials: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    let op = BellmanOperator::new(mdp, kind)?;
    let n = mdp.shape().len();
    let (mut fx, mut fy) = (vec![0.0; n], vec![0.0; n]);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (x, y) = random_pair(n, rng);
        let dist = inf_dist(&x, &y);
        if dist == 0.0 {
            continue;
        }
        op.apply_into(&x, &mut fx);
        op.apply_into(&y, &mut fy);
        worst = worst.max(inf_dist(&fx, &fy) / dist);
    }
    Ok(worst)
}

/// One action per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable(pub Vec<usize>);

impl PolicyTable {
    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Per state, the first action attaining `max_a Q(s, a)`.
pub fn greedy_policy(q: &[f64], shape: Shape) -> Result<PolicyTable> {
    shape.check_len(q.len())?;
    let policy = (0..shape.n_states)
        .map(|s| {
            let mut best = 0;
            for a in 1..shape.n_actions {
                if q[shape.index(s, a)] > q[shape.index(s, best)] {
                    best = a;
                }
            }
            best
        })
        .collect();
    Ok(PolicyTable(policy))
}

/// Solves `Q^π = R + γ P Π_π Q^π` by direct elimination on the
/// `|S||A|`-dimensional system.
pub fn evaluate_policy(mdp: &MdpModel, policy: &PolicyTable) -> Result<QTable> {
    let shape = mdp.shape();
    if policy.0.len() != shape.n_states || policy.0.iter().any(|&a| a >= shape.n_actions) {
        return Err(Error::Domain(format!("policy {:?} does not fit {shape:?}", policy.0)));
    }
    let n = shape.len();
    let gamma = mdp.gamma();
    let mut m = DMatrix::<f64>::identity(n, n);
    for s in 0..shape.n_states {
        for a in 0..shape.n_actions {
            let i = shape.index(s, a);
            for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                m[(i, shape.index(s2, policy.0[s2]))] -= gamma * p;
            }
        }
    }
    let r = DVector::from_vec(mdp.expected_reward());
    let q = m
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Numeric("singular policy-evaluation system".into()))?;
    Ok(q.iter().copied().collect())
}

fn policy_from_index(mut idx: usize, shape: Shape) -> PolicyTable {
    // state 0 is the most significant digit, so index order is lexicographic
    let mut actions = vec![0; shape.n_states];
    for s in (0..shape.n_states).rev() {
        actions[s] = idx % shape.n_actions;
        idx /= shape.n_actions;
    }
    PolicyTable(actions)
}

/// Exact optimum by enumerating every deterministic policy, evaluating each
/// with a linear solve, and keeping the one with the largest total value
/// (ties resolved toward the lexicographically smallest policy).
pub fn brute_force_optimal(mdp: &MdpModel) -> Result<(PolicyTable, QTable)> {
    let shape = mdp.shape();
    let count = (shape.n_actions as f64).powi(shape.n_states as i32);
    if count > MAX_POLICIES as f64 {
        return Err(Error::Capacity { policies: count, limit: MAX_POLICIES });
    }
    let count = count as usize;
    let scored: Result<Vec<(f64, usize)>> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let q = evaluate_policy(mdp, &policy_from_index(idx, shape))?;
            Ok((q.iter().sum::<f64>(), idx))
        })
        .collect();
    let (_, best) = scored?
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one policy");
    let policy = policy_from_index(best, shape);
    let q = evaluate_policy(mdp, &policy)?;
    Ok((policy, q))
}
