//! Finite MDPs, the sampling distribution `d(s,a) = p(s) β(a|s)` and the
//! i.i.d. transition sampler that drives the stochastic recursion.
//!
//! Q-tables are flat vectors. Entry `(s, a)` lives at `a * |S| + s`, the
//! layout of `e_a ⊗ e_s`; every module in the crate shares it.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams, Rng};

/// Tolerance on row sums of stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Successive-iterate tolerance of the stationary-distribution power iteration.
pub const STATIONARY_TOL: f64 = 1e-13;
/// Sweep limit of the power iteration.
pub const STATIONARY_MAX_SWEEPS: usize = 1_000_000;
/// Joint probabilities at or below this value violate positivity of `d`.
pub const MIN_JOINT: f64 = 1e-15;
/// Number of draws `random_mdp` makes before giving up.
pub const GENERATION_ATTEMPTS: usize = 100;

/// A Q-table (or any vector over state-action pairs) in Kronecker order.
pub type QTable = Vec<f64>;

/// Dimensions of a tabular problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub n_states: usize,
    pub n_actions: usize,
}

impl Shape {
    pub fn new(n_states: usize, n_actions: usize) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Domain(format!(
                "shape needs at least one state and one action, got {n_states}x{n_actions}"
            )));
        }
        Ok(Self { n_states, n_actions })
    }

    /// Number of state-action pairs.
    pub fn len(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of `(s, a)`; callers guarantee the range.
    #[inline]
    pub fn index(&self, s: usize, a: usize) -> usize {
        debug_assert!(s < self.n_states && a < self.n_actions);
        a * self.n_states + s
    }

    /// Checked flat index of `(s, a)`.
    pub fn flat_index(&self, s: usize, a: usize) -> Result<usize> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::Domain(format!(
                "pair (s={s}, a={a}) outside {}x{}",
                self.n_states, self.n_actions
            )));
        }
        Ok(self.index(s, a))
    }

    /// Inverse of [`Shape::index`].
    #[inline]
    pub fn pair(&self, i: usize) -> (usize, usize) {
        (i % self.n_states, i / self.n_states)
    }

    /// Copies the action row `Q(s, ·)` into `row`.
    #[inline]
    pub fn gather_into(&self, q: &[f64], s: usize, row: &mut Vec<f64>) {
        row.clear();
        row.extend((0..self.n_actions).map(|a| q[a * self.n_states + s]));
    }

    pub fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::Shape { expected: self.len(), got });
        }
        Ok(())
    }
}

/// `a * n_states + s` with range checks on both indices.
pub fn flat_index(s: usize, a: usize, shape: Shape) -> Result<usize> {
    shape.flat_index(s, a)
}

/// A finite discounted MDP with deterministic rewards `r(s,a,s')` and a
/// fixed behavior policy. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct MdpModel {
    shape: Shape,
    gamma: f64,
    /// `P(s'|s,a)` at `(s * |A| + a) * |S| + s'`.
    transition: Vec<f64>,
    /// `r(s,a,s')`, same layout as `transition`.
    reward: Vec<f64>,
    /// `β(a|s)` at `s * |A| + a`.
    behavior: Vec<f64>,
    stationary: Option<Vec<f64>>,
}

impl MdpModel {
    /// Builds and validates a model from row-major arrays
    /// (`transition[s][a][s']`, `reward[s][a][s']`, `behavior[s][a]`).
    pub fn new(
        shape: Shape,
        gamma: f64,
        mut transition: Vec<f64>,
        reward: Vec<f64>,
        mut behavior: Vec<f64>,
        stationary: Option<Vec<f64>>,
    ) -> Result<Self> {
        let (ns, na) = (shape.n_states, shape.n_actions);
        if !(gamma.is_finite() && (0.0..1.0).contains(&gamma)) {
            return Err(Error::Validation(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        expect_len("transition", transition.len(), ns * na * ns)?;
        expect_len("reward", reward.len(), ns * na * ns)?;
        expect_len("behavior", behavior.len(), ns * na)?;
        for (row, chunk) in transition.chunks_mut(ns).enumerate() {
            normalize_row(chunk).map_err(|e| {
                Error::Validation(format!("P(.|s={}, a={}): {e}", row / na, row % na))
            })?;
        }
        for (s, chunk) in behavior.chunks_mut(na).enumerate() {
            normalize_row(chunk)
                .map_err(|e| Error::Validation(format!("behavior(.|s={s}): {e}")))?;
        }
        if let Some((i, r)) = reward.iter().enumerate().find(|(_, r)| !r.is_finite()) {
            return Err(Error::Validation(format!("reward entry {i} is not finite: {r}")));
        }
        let stationary = match stationary {
            Some(mut p) => {
                expect_len("stationary", p.len(), ns)?;
                normalize_row(&mut p)
                    .map_err(|e| Error::Validation(format!("stationary: {e}")))?;
                Some(p)
            }
            None => None,
        };
        Ok(Self { shape, gamma, transition, reward, behavior, stationary })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn n_states(&self) -> usize {
        self.shape.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.shape.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Row `P(·|s,a)`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.shape.n_states;
        let start = (s * self.shape.n_actions + a) * ns;
        &self.transition[start..start + ns]
    }

    /// Row `r(s,a,·)`.
    #[inline]
    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.shape.n_states;
        let start = (s * self.shape.n_actions + a) * ns;
        &self.reward[start..start + ns]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.reward_row(s, a)[s_next]
    }

    /// Row `β(·|s)`.
    #[inline]
    pub fn behavior_row(&self, s: usize) -> &[f64] {
        let na = self.shape.n_actions;
        &self.behavior[s * na..(s + 1) * na]
    }

    pub fn stationary_override(&self) -> Option<&[f64]> {
        self.stationary.as_deref()
    }

    /// `R(s,a) = Σ_{s'} P(s'|s,a) r(s,a,s')` in Kronecker order.
    pub fn expected_reward(&self) -> QTable {
        let mut r = vec![0.0; self.shape.len()];
        for s in 0..self.shape.n_states {
            for a in 0..self.shape.n_actions {
                r[self.shape.index(s, a)] = self
                    .transition_row(s, a)
                    .iter()
                    .zip(self.reward_row(s, a))
                    .map(|(p, r)| p * r)
                    .sum();
            }
        }
        r
    }

    /// `max |r(s,a,s')|` over all triples.
    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// State chain induced by the behavior policy,
    /// `P_β(s'|s) = Σ_a β(a|s) P(s'|s,a)`, row-major.
    pub fn behavior_chain(&self) -> Vec<f64> {
        let ns = self.shape.n_states;
        let mut chain = vec![0.0; ns * ns];
        for s in 0..ns {
            for (a, &b) in self.behavior_row(s).iter().enumerate() {
                for (dst, p) in chain[s * ns..(s + 1) * ns].iter_mut().zip(self.transition_row(s, a)) {
                    *dst += b * p;
                }
            }
        }
        chain
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

fn expect_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Validation(format!(
            "{what} has {got} entries, expected {expected}"
        )));
    }
    Ok(())
}

/// Checks a probability row and renormalizes it when its sum is off by more
/// than rounding noise but still within [`STOCHASTIC_TOL`]. A renormalized
/// row passes this check unchanged, so save and load round-trip bit for bit.
fn normalize_row(row: &mut [f64]) -> std::result::Result<(), String> {
    if let Some(x) = row.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(format!("entry {x} is not a probability"));
    }
    let sum: f64 = row.iter().sum();
    let err = (sum - 1.0).abs();
    if err > STOCHASTIC_TOL {
        return Err(format!("sums to {sum}"));
    }
    if err > 4.0 * row.len() as f64 * f64::EPSILON {
        row.iter_mut().for_each(|x| *x /= sum);
    }
    Ok(())
}

/// On-disk JSON layout of an MDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
    pub behavior: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<Vec<f64>>,
}

impl TryFrom<MdpFile> for MdpModel {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        let shape = Shape::new(f.n_states, f.n_actions)?;
        let flatten3 = |what: &str, v: Vec<Vec<Vec<f64>>>| -> Result<Vec<f64>> {
            expect_len(what, v.len(), f.n_states)?;
            let mut out = Vec::with_capacity(shape.len() * f.n_states);
            for row in v {
                expect_len(what, row.len(), f.n_actions)?;
                for inner in row {
                    expect_len(what, inner.len(), f.n_states)?;
                    out.extend(inner);
                }
            }
            Ok(out)
        };
        let transition = flatten3("transition", f.transition)?;
        let reward = flatten3("reward", f.reward)?;
        expect_len("behavior", f.behavior.len(), f.n_states)?;
        let mut behavior = Vec::with_capacity(shape.len());
        for row in f.behavior {
            expect_len("behavior", row.len(), f.n_actions)?;
            behavior.extend(row);
        }
        MdpModel::new(shape, f.gamma, transition, reward, behavior, f.stationary)
    }
}

impl From<MdpModel> for MdpFile {
    fn from(m: MdpModel) -> Self {
        let (ns, na) = (m.shape.n_states, m.shape.n_actions);
        let nest3 = |v: &[f64]| -> Vec<Vec<Vec<f64>>> {
            v.chunks(na * ns)
                .map(|sa| sa.chunks(ns).map(<[f64]>::to_vec).collect())
                .collect()
        };
        MdpFile {
            n_states: ns,
            n_actions: na,
            gamma: m.gamma,
            transition: nest3(&m.transition),
            reward: nest3(&m.reward),
            behavior: m.behavior.chunks(na).map(<[f64]>::to_vec).collect(),
            stationary: m.stationary,
        }
    }
}

/// State distribution `p`, the joint `d(s,a) = p(s) β(a|s)`, and the
/// diagonal of `D`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingDistribution {
    shape: Shape,
    stationary: Vec<f64>,
    /// `d(s,a)` in Kronecker order; this is also the diagonal of `D`.
    joint: Vec<f64>,
}

impl SamplingDistribution {
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn d(&self, s: usize, a: usize) -> f64 {
        self.joint[self.shape.index(s, a)]
    }

    /// Diagonal entries of `D`, enumerated with [`Shape::index`].
    pub fn d_diag(&self) -> &[f64] {
        &self.joint
    }

    pub fn min_d(&self) -> f64 {
        self.joint.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Computes `p` (the stationary law of the behavior chain, or the model's
/// override) and the joint sampling distribution `d`.
///
/// The stationary law is found by power iteration on the lazy chain
/// `(I + P_β) / 2`, which shares its fixed points with `P_β` and also
/// converges on periodic chains.
pub fn build_sampling_distribution(mdp: &MdpModel) -> Result<SamplingDistribution> {
    let shape = mdp.shape();
    let ns = shape.n_states;
    let stationary = match mdp.stationary_override() {
        Some(p) => p.to_vec(),
        None => {
            let chain = mdp.behavior_chain();
            let mut p = vec![1.0 / ns as f64; ns];
            let mut next = vec![0.0; ns];
            let mut converged = false;
            for _ in 0..STATIONARY_MAX_SWEEPS {
                next.iter_mut().zip(&p).for_each(|(n, x)| *n = 0.5 * x);
                for (s, &ps) in p.iter().enumerate() {
                    let w = 0.5 * ps;
                    for (n, c) in next.iter_mut().zip(&chain[s * ns..(s + 1) * ns]) {
                        *n += w * c;
                    }
                }
                let diff = next.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                std::mem::swap(&mut p, &mut next);
                if diff < STATIONARY_TOL {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NonErgodic { sweeps: STATIONARY_MAX_SWEEPS });
            }
            for (x, recurrent) in p.iter_mut().zip(recurrent_states(&chain, ns)) {
                if !recurrent {
                    *x = 0.0;
                }
            }
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= total);
            p
        }
    };
    let mut joint = vec![0.0; shape.len()];
    for s in 0..ns {
        for (a, &b) in mdp.behavior_row(s).iter().enumerate() {
            let d = stationary[s] * b;
            if d <= MIN_JOINT {
                return Err(Error::Validation(format!(
                    "sampling distribution d(s={s}, a={a}) = {d:e} is not positive"
                )));
            }
            joint[shape.index(s, a)] = d;
        }
    }
    Ok(SamplingDistribution { shape, stationary, joint })
}

/// `true` for states that every state reachable from them can reach back;
/// the others carry no stationary mass.
fn recurrent_states(chain: &[f64], ns: usize) -> Vec<bool> {
    let reach: Vec<Vec<bool>> = (0..ns)
        .map(|start| {
            let mut seen = vec![false; ns];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(s) = stack.pop() {
                for (t, &c) in chain[s * ns..(s + 1) * ns].iter().enumerate() {
                    if c > 0.0 && !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            seen
        })
        .collect();
    (0..ns).map(|s| (0..ns).all(|t| !reach[s][t] || reach[t][s])).collect()
}

/// One observed transition `(s, a, s', r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionSample {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub r: f64,
}

/// Inverse-CDF draw from a probability row. Falls back to the last index
/// with positive mass when rounding leaves `u` above the running sum.
#[inline]
pub fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Draws `s ~ p`, `a ~ β(·|s)`, `s' ~ P(·|s,a)` and reads off `r(s,a,s')`.
/// Consecutive calls are independent given the generator stream.
pub fn sample_transition(
    mdp: &MdpModel,
    dist: &SamplingDistribution,
    rng: &mut Rng,
) -> TransitionSample {
    let s = categorical(dist.stationary(), rng.random::<f64>());
    let a = categorical(mdp.behavior_row(s), rng.random::<f64>());
    let s_next = categorical(mdp.transition_row(s, a), rng.random::<f64>());
    TransitionSample { s, a, s_next, r: mdp.reward(s, a, s_next) }
}

/// Parameters of the random instance generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// Rewards are uniform in `[lo, hi)`.
    pub reward_range: (f64, f64),
    /// Fraction of next states left out of each transition row's support.
    pub sparsity: f64,
}

impl RandomMdp {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, gamma: 0.9, reward_range: (0.0, 1.0), sparsity: 0.0 }
    }

    pub fn gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn reward_range(mut self, lo: f64, hi: f64) -> Self {
        self.reward_range = (lo, hi);
        self
    }

    pub fn sparsity(mut self, sparsity: f64) -> Self {
        self.sparsity = sparsity;
        self
    }

    pub fn generate(&self, seed: u64) -> Result<MdpModel> {
        random_mdp(self, seed)
    }
}

/// Draws a random MDP whose behavior-induced sampling distribution is
/// strictly positive. Identical `(config, seed)` give bit-identical models.
pub fn random_mdp(cfg: &RandomMdp, seed: u64) -> Result<MdpModel> {
    let shape = Shape::new(cfg.n_states, cfg.n_actions)?;
    let (lo, hi) = cfg.reward_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Domain(format!("invalid reward range [{lo}, {hi})")));
    }
    if !(0.0..=1.0).contains(&cfg.sparsity) {
        return Err(Error::Domain(format!("sparsity must lie in [0, 1], got {}", cfg.sparsity)));
    }
    let (ns, na) = (shape.n_states, shape.n_actions);
    let support = (((1.0 - cfg.sparsity) * ns as f64 - 1e-9).ceil() as usize).clamp(1, ns);
    let mut rng = rng::stream(seed, streams::MDP_GENERATION);
    let mut last = String::new();
    for _ in 0..GENERATION_ATTEMPTS {
        let mut transition = vec![0.0; ns * na * ns];
        for row in transition.chunks_mut(ns) {
            for j in index::sample(&mut rng, ns, support) {
                row[j] = 1.0 - rng.random::<f64>();
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
        let reward = (0..ns * na * ns)
            .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
            .collect();
        let behavior = vec![1.0 / na as f64; ns * na];
        let mdp = MdpModel::new(shape, cfg.gamma, transition, reward, behavior, None)?;
        match build_sampling_distribution(&mdp) {
            Ok(_) => return Ok(mdp),
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::Generation { attempts: GENERATION_ATTEMPTS, last })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_state(chain: [[f64; 2]; 2]) -> MdpModel {
        // one action per state, so P_β equals the given chain
        let shape = Shape::new(2, 1).unwrap();
        let transition = chain.iter().flatten().copied().collect();
        MdpModel::new(shape, 0.5, transition, vec![0.0; 4], vec![1.0, 1.0], None).unwrap()
    }

    #[test]
    fn flat_index_matches_kronecker_order() {
        let shape = Shape::new(3, 3).unwrap();
        assert_eq!(shape.flat_index(0, 0).unwrap(), 0);
        assert_eq!(shape.flat_index(2, 1).unwrap(), 5);
        assert_eq!(shape.flat_index(1, 2).unwrap(), 7);
        assert!(shape.flat_index(3, 0).is_err());
        assert!(flat_index(0, 3, shape).is_err());
    }

    #[test]
    fn flat_index_is_a_bijection() {
        let shape = Shape::new(4, 3).unwrap();
        let mut seen = vec![false; shape.len()];
        for s in 0..4 {
            for a in 0..3 {
                let i = shape.index(s, a);
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(shape.pair(i), (s, a));
            }
        }
        assert!(seen.into_iter().all(|x| x));
    }

    #[test]
    fn single_state_distribution_is_forced() {
        let mdp = MdpModel::new(Shape::new(1, 1).unwrap(), 0.5, vec![1.0], vec![1.0], vec![1.0], None)
            .unwrap();
        let dist = build_sampling_distribution(&mdp).unwrap();
        assert_eq!(dist.stationary(), &[1.0]);
        assert_eq!(dist.d_diag(), &[1.0]);
    }

    #[test]
    fn periodic_chain_with_uniform_behavior() {
        // two actions with identical swap dynamics: P_β = [[0,1],[1,0]]
        let shape = Shape::new(2, 2).unwrap();
        let transition = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let mdp =
            MdpModel::new(shape, 0.9, transition, vec![0.0; 8], vec![0.5; 4], None).unwrap();
        let dist = build_sampling_distribution(&mdp).unwrap();
        assert_eq!(dist.stationary(), &[0.5, 0.5]);
        assert!(dist.d_diag().iter().all(|&d| d == 0.25));
    }

    #[test]
    fn periodic_chain_with_skewed_stationary_law() {
        // s0 -> s1 always; s1 -> s0 or s2; s2 -> s1: period 2, p = [1/4, 1/2, 1/4]
        let shape = Shape::new(3, 1).unwrap();
        let transition = vec![0.0, 1.0, 0.0, 0.5, 0.0, 0.5, 0.0, 1.0, 0.0];
        let mdp = MdpModel::new(shape, 0.9, transition, vec![0.0; 9], vec![1.0; 3], None).unwrap();
        let p = build_sampling_distribution(&mdp).unwrap().stationary().to_vec();
        for (x, e) in p.iter().zip([0.25, 0.5, 0.25]) {
            assert!((x - e).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn two_state_stationary_distribution() {
        // pᵀP = pᵀ with P = [[0.9,0.1],[0.5,0.5]]: 0.1 p0 = 0.5 p1 → p = [5/6, 1/6]
        let mdp = two_state([[0.9, 0.1], [0.5, 0.5]]);
        let p = build_sampling_distribution(&mdp).unwrap().stationary().to_vec();
        assert!((p[0] - 5.0 / 6.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn absorbing_chain_violates_positivity() {
        let mdp = two_state([[1.0, 0.0], [0.5, 0.5]]);
        let err = build_sampling_distribution(&mdp).unwrap_err();
        assert!(err.to_string().contains("s=1, a=0"), "{err}");
    }

    #[test]
    fn rejects_bad_rows_and_renormalizes_near_misses() {
        let shape = Shape::new(1, 2).unwrap();
        let bad = MdpModel::new(shape, 0.5, vec![0.9, 0.9], vec![0.0; 2], vec![0.5, 0.5], None);
        assert!(bad.is_err());
        let neg = MdpModel::new(shape, 0.5, vec![1.0, 1.0], vec![0.0; 2], vec![1.5, -0.5], None);
        assert!(neg.is_err());
        let gamma = MdpModel::new(shape, 1.0, vec![1.0, 1.0], vec![0.0; 2], vec![0.5, 0.5], None);
        assert!(gamma.is_err());
        let near = MdpModel::new(
            shape,
            0.5,
            vec![1.0, 1.0],
            vec![0.0; 2],
            vec![0.5 + 4e-13, 0.5],
            None,
        )
        .unwrap();
        let sum: f64 = near.behavior_row(0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_is_exact() {
        for (ns, na) in [(1, 1), (5, 3), (8, 4), (40, 2), (200, 1)] {
            for seed in 0..20 {
                let mdp = RandomMdp::new(ns, na).generate(seed).unwrap();
                let back: MdpModel = serde_json::from_str(&mdp.to_json().unwrap()).unwrap();
                assert_eq!(back, mdp, "{ns}x{na} seed {seed}");
            }
        }
    }

    #[test]
    fn deterministic_mdp_sample_is_forced() {
        let one = MdpModel::new(Shape::new(1, 1).unwrap(), 0.5, vec![1.0], vec![2.5], vec![1.0], None)
            .unwrap();
        let dist = build_sampling_distribution(&one).unwrap();
        let mut rng = rng::stream(9, streams::SAMPLING);
        for _ in 0..10 {
            assert_eq!(
                sample_transition(&one, &dist, &mut rng),
                TransitionSample { s: 0, a: 0, s_next: 0, r: 2.5 }
            );
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let mdp = RandomMdp::new(4, 2).generate(3).unwrap();
        let dist = build_sampling_distribution(&mdp).unwrap();
        let draw = |seed| {
            let mut rng = rng::stream(seed, streams::SAMPLING);
            (0..100).map(|_| sample_transition(&mdp, &dist, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn random_mdp_basics() {
        let one = RandomMdp::new(1, 1).gamma(0.5).generate(17).unwrap();
        assert_eq!(one.transition_row(0, 0), &[1.0]);
        let a = RandomMdp::new(5, 3).generate(42).unwrap();
        let b = RandomMdp::new(5, 3).generate(42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(build_sampling_distribution(&a).is_ok());
        assert_ne!(a, RandomMdp::new(5, 3).generate(43).unwrap());
    }

    #[test]
    fn sparse_generation_keeps_requested_support() {
        let mdp = RandomMdp::new(10, 2).sparsity(0.7).generate(1).unwrap();
        for s in 0..10 {
            for a in 0..2 {
                let nz = mdp.transition_row(s, a).iter().filter(|&&p| p > 0.0).count();
                assert_eq!(nz, 3);
            }
        }
    }

    #[test]
    fn random_mdp_rejects_bad_parameters() {
        assert!(RandomMdp::new(0, 1).generate(0).is_err());
        assert!(RandomMdp::new(2, 1).sparsity(1.5).generate(0).is_err());
        assert!(RandomMdp::new(2, 1).reward_range(1.0, 0.0).generate(0).is_err());
    }

    #[test]
    fn generation_gives_up_on_hopeless_configurations() {
        // point-mass rows on 12 states: almost every draw leaves a transient state
        let err = RandomMdp::new(12, 1).sparsity(1.0).generate(0).unwrap_err();
        assert!(matches!(err, Error::Generation { attempts: 100, .. }), "{err}");
    }
}
