//! Randomized property battery: norm equivalences, smooth-max bounds,
//! contraction and fixed-point checks, ODE certificates, and noise checks
//! along learning runs. Every check reports its worst slack; a check passes
//! when the slack is at least `-BOUND_TOL` (relative where noted).

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{brute_force_optimal, contraction_modulus_estimate, evaluate_policy, greedy_policy, solve_fixed_point};
use crate::learner::{noise_report, par_map, run_annealed_boltzmann, run_learning, AnnealSchedule, RunOptions, StepSizeSchedule};
use crate::mdp::{build_sampling_distribution, MdpModel, RandomMdp};
use crate::ode::{
    certify_decay, derivative_bound_slack, derivative_bound_slack_sharp, integrate, lipschitz_estimate,
    random_affine_system, scaling_limit_residual, slope_slack, vector_field, IntegrateOptions, OdeSystem, PChoice,
    CERT_TOL,
};
use crate::operators::{
    check_operator_bounds, inf_dist, inf_norm, scaling_limit_error, NormOrder, OperatorKind, WeightedNorm, BOUND_TOL,
};
use crate::rng::{stream, streams, Rng};

pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 1;

const EVEN_P: [u32; 4] = [2, 4, 8, 16];
const LAMBDAS: [f64; 3] = [0.1, 1.0, 10.0];
const SOLVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Norms,
    Operators,
    Contraction,
    Ode,
    Learning,
    All,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Norms => "norms",
            Self::Operators => "operators",
            Self::Contraction => "contraction",
            Self::Ode => "ode",
            Self::Learning => "learning",
            Self::All => "all",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "norms" => Self::Norms,
            "operators" => Self::Operators,
            "contraction" => Self::Contraction,
            "ode" => Self::Ode,
            "learning" => Self::Learning,
            "all" => Self::All,
            other => return Err(Error::Domain(format!("unknown suite '{other}'"))),
        })
    }
}

/// Aggregated outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    pub worst_slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: String,
    pub platform: String,
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Floating-point platform note for report headers.
pub fn platform_note() -> String {
    format!(
        "{}-{}, IEEE-754 binary64, results bit-reproducible per platform",
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

/// Ordered accumulator of named checks.
#[derive(Debug, Default)]
pub struct Battery {
    order: Vec<CheckResult>,
    index: HashMap<String, usize>,
}

impl Battery {
    /// Records one trial of `name`; the check fails once any slack drops
    /// below `-tol`.
    pub fn record(&mut self, name: &str, slack: f64, tol: f64) {
        let i = *self.index.entry(name.to_string()).or_insert_with(|| {
            self.order.push(CheckResult { name: name.to_string(), trials: 0, worst_slack: f64::INFINITY, passed: true });
            self.order.len() - 1
        });
        let c = &mut self.order[i];
        c.trials += 1;
        // NaN slack counts as a failure
        if !(slack >= c.worst_slack) {
            c.worst_slack = slack;
        }
        if !(slack >= -tol) {
            c.passed = false;
        }
    }

    pub fn bound(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.record(name, relative_slack(lhs, rhs), BOUND_TOL);
    }

    pub fn merge(&mut self, other: Battery) {
        for c in other.order {
            let i = *self.index.entry(c.name.clone()).or_insert_with(|| {
                self.order.push(CheckResult { name: c.name.clone(), trials: 0, worst_slack: f64::INFINITY, passed: true });
                self.order.len() - 1
            });
            let mine = &mut self.order[i];
            mine.trials += c.trials;
            if !(c.worst_slack >= mine.worst_slack) {
                mine.worst_slack = c.worst_slack;
            }
            mine.passed &= c.passed;
        }
    }

    pub fn into_checks(self) -> Vec<CheckResult> {
        self.order
    }
}

/// `(rhs − lhs) / max(|lhs|, |rhs|, 1)`.
pub fn relative_slack(lhs: f64, rhs: f64) -> f64 {
    (rhs - lhs) / lhs.abs().max(rhs.abs()).max(1.0)
}

fn random_vector(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-10.0..=10.0)).collect()
}

/// Weights log-uniform in `[0.1, 10]`.
fn random_weights(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| 10f64.powf(rng.random_range(-1.0..=1.0))).collect()
}

/// Norm equivalences between weighted and plain `p`- and `∞`-norms, and
/// the approach of `‖x‖_{p,w}` to `‖x‖_{∞,w}` as `p` grows.
pub fn norm_checks(trials: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = stream(seed, streams::VERIFY);
    let mut b = Battery::default();
    for _ in 0..trials {
        let n = rng.random_range(1..=64);
        let x = random_vector(n, &mut rng);
        let w = random_weights(n, &mut rng);
        let inf_w = WeightedNorm::new(NormOrder::Infinity, w.clone())?.eval(&x)?;
        let inf = inf_norm(&x);
        let w_min = w.iter().copied().fold(f64::INFINITY, f64::min);
        let w_max = w.iter().copied().fold(0.0, f64::max);
        let nf = n as f64;
        b.bound("norms.weighted_inf_lower", w_min * inf, inf_w);
        b.bound("norms.weighted_inf_upper", inf_w, w_max * inf);
        for p in EVEN_P {
            let pf = p as f64;
            let pw = WeightedNorm::new(NormOrder::Even(p), w.clone())?.eval(&x)?;
            let plain = WeightedNorm::unweighted(NormOrder::Even(p), n)?.eval(&x)?;
            b.bound("norms.weighted_inf_le_weighted_p", inf_w, pw);
            b.bound("norms.weighted_p_le_root_n_weighted_inf", pw, nf.powf(1.0 / pf) * inf_w);
            b.bound("norms.w_min_plain_p_le_weighted_p", w_min.powf(1.0 / pf) * plain, pw);
            b.bound("norms.weighted_p_le_w_max_plain_p", pw, w_max.powf(1.0 / pf) * plain);
            b.bound("norms.inf_le_p", inf, plain);
            b.bound("norms.p_le_root_n_inf", plain, nf.powf(1.0 / pf) * inf);
        }
        let mut prev_gap = f64::INFINITY;
        for p in (2..=64).step_by(2) {
            let pw = WeightedNorm::new(NormOrder::Even(p), w.clone())?.eval(&x)?;
            let gap = pw - inf_w;
            b.bound("norms.p_to_inf_gap_bound", gap, (nf.powf(1.0 / p as f64) - 1.0) * inf_w);
            if prev_gap.is_finite() {
                b.bound("norms.p_to_inf_gap_decreasing", gap, prev_gap);
            }
            prev_gap = gap;
        }
    }
    Ok(b.into_checks())
}

/// Smooth-max sandwiches, shift covariance, non-expansiveness and the
/// scaling-limit rate.
pub fn operator_checks(trials: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = stream(seed, streams::VERIFY + 1);
    let mut b = Battery::default();
    for t in 0..trials {
        let n = rng.random_range(1..=64);
        let x = random_vector(n, &mut rng);
        let lambda = LAMBDAS[t % LAMBDAS.len()];
        for c in check_operator_bounds(&x, lambda)?.checks {
            b.bound(&format!("operators.{}", c.name), c.lhs, c.rhs);
        }
        let shift = rng.random_range(-100.0..=100.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-1.0..=1.0)).collect();
        let dist = inf_dist(&x, &y);
        let kinds = [
            OperatorKind::Max,
            OperatorKind::Lse(lambda),
            OperatorKind::Mellowmax(lambda),
            OperatorKind::Boltzmann(lambda),
        ];
        for kind in kinds {
            let hx = kind.eval(&x);
            let err = (kind.eval(&shifted) - hx - shift).abs();
            b.record(&format!("operators.shift_covariance.{}", kind.name()), 1e-12 * hx.abs().max(shift.abs()).max(1.0) - err, 0.0);
            if kind.is_non_expansive() {
                b.record(&format!("operators.non_expansive.{}", kind.name()), dist - (hx - kind.eval(&y)).abs(), BOUND_TOL);
            }
        }
        for kind in [OperatorKind::Lse(lambda), OperatorKind::Mellowmax(lambda)] {
            for c in [1.0, 10.0, 100.0, 1000.0] {
                let err = scaling_limit_error(kind, &x, c)?;
                b.record(&format!("operators.scaling_limit.{}", kind.name()), (n as f64).ln() / (lambda * c) - err, BOUND_TOL);
            }
        }
    }
    Ok(b.into_checks())
}

/// A random MDP with `|S| ≤ max_s`, `|A| ≤ max_a`, `γ` drawn from `gammas`.
fn random_instance(rng: &mut Rng, max_s: usize, max_a: usize, gammas: &[f64]) -> Result<MdpModel> {
    let ns = rng.random_range(1..=max_s);
    let na = rng.random_range(1..=max_a);
    let gamma = gammas[rng.random_range(0..gammas.len())];
    let seed = rng.random::<u64>();
    RandomMdp::new(ns, na).gamma(gamma).generate(seed)
}

/// Contraction moduli of the Bellman operators on `instances` random
/// models with `pairs` random pairs each.
pub fn contraction_checks(instances: usize, pairs: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = stream(seed, streams::CONTRACTION);
    let mdps: Vec<(MdpModel, u64)> = (0..instances)
        .map(|_| Ok((random_instance(&mut rng, 8, 4, &[0.5, 0.9, 0.99])?, rng.random::<u64>())))
        .collect::<Result<_>>()?;
    let parts = par_map(&mdps, |(mdp, s)| {
        let mut b = Battery::default();
        let mut r = stream(*s, streams::CONTRACTION);
        for kind in [OperatorKind::Max, OperatorKind::Lse(1.0), OperatorKind::Mellowmax(10.0)] {
            let est = contraction_modulus_estimate(mdp, kind, pairs, &mut r)?;
            b.record(&format!("contraction.modulus.{}", kind.name()), mdp.gamma() - est, BOUND_TOL);
        }
        Ok(b)
    })?;
    let mut b = Battery::default();
    parts.into_iter().for_each(|p| b.merge(p));
    Ok(b.into_checks())
}

/// Value-iteration against exhaustive policy search, residual contraction
/// along Picard iterates, and the bias of the smooth fixed points.
pub fn fixed_point_checks(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = stream(seed, streams::CONTRACTION + 1);
    let mdps: Vec<MdpModel> = (0..instances)
        .map(|_| random_instance(&mut rng, 4, 3, &[0.5, 0.9]))
        .collect::<Result<_>>()?;
    let parts = par_map(&mdps, |mdp| {
        let mut b = Battery::default();
        let vi = solve_fixed_point(mdp, OperatorKind::Max, 1e-11, 1_000_000)?;
        let (oracle_policy, oracle_q) = brute_force_optimal(mdp)?;
        b.record("fixed_point.oracle_q_star", 1e-8 - inf_dist(&vi.q_star, &oracle_q), 0.0);
        let greedy = greedy_policy(&vi.q_star, mdp.shape())?;
        let q_greedy = evaluate_policy(mdp, &greedy)?;
        let q_oracle = evaluate_policy(mdp, &oracle_policy)?;
        b.record("fixed_point.oracle_policy_value", 1e-8 - inf_dist(&q_greedy, &q_oracle), 0.0);

        for kind in [OperatorKind::Max, OperatorKind::Lse(1.0), OperatorKind::Mellowmax(1.0)] {
            let residuals = crate::fixed_point::picard_residuals(mdp, kind, 200)?;
            for w in residuals.windows(2) {
                if w[0] > 1e-9 {
                    b.bound(&format!("fixed_point.residual_contraction.{}", kind.name()), w[1], mdp.gamma() * w[0]);
                }
            }
        }

        let gamma = mdp.gamma();
        let ln_a = (mdp.n_actions() as f64).ln();
        let mut prev = f64::INFINITY;
        for lambda in [1.0, 10.0, 100.0] {
            let bound = gamma * ln_a / (lambda * (1.0 - gamma));
            let lse = solve_fixed_point(mdp, OperatorKind::Lse(lambda), SOLVE_TOL, 10_000_000)?.q_star;
            let mm = solve_fixed_point(mdp, OperatorKind::Mellowmax(lambda), SOLVE_TOL, 10_000_000)?.q_star;
            let bias = inf_dist(&lse, &vi.q_star);
            b.bound("fixed_point.lse_bias", bias, bound + 1e-9);
            b.bound("fixed_point.mellowmax_bias", inf_dist(&mm, &vi.q_star), bound + 1e-9);
            if prev.is_finite() {
                b.bound("fixed_point.lse_bias_monotone", bias, prev + 1e-9);
            }
            prev = bias;
        }
        Ok(b)
    })?;
    let mut b = Battery::default();
    parts.into_iter().for_each(|p| b.merge(p));
    Ok(b.into_checks())
}

/// One decay certificate for the Q-learning flow of a random model.
fn q_learning_certificate(mdp: &MdpModel, q0: &[f64], b: &mut Battery, pairs: usize, rng: &mut Rng) -> Result<()> {
    let sys = OdeSystem::q_learning(mdp, OperatorKind::Max)?;
    let q_star = sys.fixed_point(SOLVE_TOL)?;
    let res = inf_norm(&vector_field(&sys, &q_star)?);
    b.record("ode.equilibrium_residual", 10.0 * SOLVE_TOL - res, 0.0);
    let traj = integrate(&sys, q0, IntegrateOptions::new(20.0))?;
    let cert = certify_decay(&traj, &q_star, &sys, PChoice::Auto)?;
    let pw = cert
        .samples
        .iter()
        .filter(|s| s.bound > 0.0)
        .map(|s| (s.observed - s.bound) / s.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    b.record("ode.weighted_p_envelope", CERT_TOL - pw, 0.0);
    b.record("ode.inf_envelope", CERT_TOL - cert.inf_max_violation.unwrap_or(0.0), 0.0);
    b.record("ode.decay_slope", slope_slack(&traj, &q_star, &sys, cert.p)?, 0.0);
    b.record("ode.derivative_bound", derivative_bound_slack(&traj, &q_star, &sys, cert.p)?, 0.0);
    b.record("ode.derivative_bound_sharp", derivative_bound_slack_sharp(&traj, &q_star, &sys, cert.p)?, 0.0);
    let lip = lipschitz_estimate(&sys, pairs, rng)?;
    b.record("ode.lipschitz", (1.0 + mdp.gamma()) * sys.d_norm() - lip, BOUND_TOL);
    Ok(())
}

/// Envelope checks for `instances` random Q-learning flows (`γ = 0.9`,
/// `n ≤ 32`), synthetic affine flows, the scaling limit field and its
/// origin.
pub fn ode_checks(instances: usize, pairs: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = stream(seed, streams::VERIFY + 2);
    let mut jobs = Vec::with_capacity(instances);
    for _ in 0..instances {
        let ns = rng.random_range(1..=8usize);
        let na = rng.random_range(1..=(32 / ns).min(4));
        let mdp = RandomMdp::new(ns, na).gamma(0.9).reward_range(-1.0, 1.0).generate(rng.random())?;
        let q0 = random_vector(ns * na, &mut rng);
        jobs.push((mdp, q0, rng.random::<u64>()));
    }
    let parts = par_map(&jobs, |(mdp, q0, s)| {
        let mut b = Battery::default();
        let mut r = stream(*s, streams::VERIFY);
        q_learning_certificate(mdp, q0, &mut b, pairs, &mut r)?;

        let limit = OdeSystem::bellman_limit(mdp)?;
        let traj = integrate(&limit, q0, IntegrateOptions::new(20.0).stride(10))?;
        let cert = certify_decay(&traj, &vec![0.0; q0.len()], &limit, PChoice::Auto)?;
        b.record("ode.limit_origin_inf_envelope", CERT_TOL - cert.inf_max_violation.unwrap_or(0.0), 0.0);
        Ok(b)
    })?;
    let mut b = Battery::default();
    parts.into_iter().for_each(|p| b.merge(p));
    for c in affine_checks(10, seed)? {
        b.merge_result(c);
    }
    for c in limit_field_checks(5, seed)? {
        b.merge_result(c);
    }
    Ok(b.into_checks())
}

impl Battery {
    fn merge_result(&mut self, c: CheckResult) {
        let mut one = Battery::default();
        one.index.insert(c.name.clone(), 0);
        one.order.push(c);
        self.merge(one);
    }
}

/// Decay certificates of `count` random affine flows (`n ≤ 8`,
/// `α ∈ {0.3, 0.7, 0.95}`, random positive `D`) for `p ∈ {2, 4, 8}`, and
/// the closed-form scalar solution.
pub fn affine_checks(count: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = stream(seed, streams::VERIFY + 3);
    let mut b = Battery::default();
    for i in 0..count {
        let n = rng.random_range(1..=8usize);
        let alpha = [0.3, 0.7, 0.95][i % 3];
        let sys = random_affine_system(n, alpha, &mut rng)?;
        let x_star = sys.fixed_point(0.0)?;
        let x0 = random_vector(n, &mut rng);
        let traj = integrate(&sys, &x0, IntegrateOptions::new(20.0).stride(10))?;
        for p in [2, 4, 8] {
            let cert = certify_decay(&traj, &x_star, &sys, PChoice::Even(p))?;
            b.record("ode.affine_envelope", CERT_TOL - cert.max_violation, 0.0);
        }
    }
    let (gamma, r, d) = (0.9, 1.0, 0.5);
    let sys = crate::ode::synthetic_affine_system(gamma, vec![1.0], vec![r], vec![d])?;
    let traj = integrate(&sys, &[0.0], IntegrateOptions::new(1.0))?;
    let x_star = r / (1.0 - gamma);
    let exact = x_star * (1.0 - (-d * (1.0 - gamma)).exp());
    b.record("ode.scalar_closed_form", 1e-10 - (traj.last()[0] - exact).abs(), 0.0);
    Ok(b.into_checks())
}

/// `‖f(c Q)/c − f∞(Q)‖_∞` at `c = 10^6` against
/// `10 (‖D‖_∞ γ ln|A| / (λ c) + ‖D R‖_∞ / c)` for lse and mellowmax, and its
/// decrease over `c = 10, …, 10^6`.
pub fn limit_field_checks(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = stream(seed, streams::VERIFY + 4);
    let mut b = Battery::default();
    for _ in 0..instances {
        let mdp = random_instance(&mut rng, 6, 4, &[0.9])?;
        let q = random_vector(mdp.shape().len(), &mut rng);
        let dist = build_sampling_distribution(&mdp)?;
        let d_norm = dist.d_diag().iter().copied().fold(0.0, f64::max);
        let dr = mdp
            .expected_reward()
            .iter()
            .zip(dist.d_diag())
            .fold(0.0f64, |m, (r, d)| m.max((r * d).abs()));
        let ln_a = (mdp.n_actions() as f64).ln();
        for lambda in [1.0, 10.0] {
            for kind in [OperatorKind::Lse(lambda), OperatorKind::Mellowmax(lambda)] {
                let sys = OdeSystem::q_learning(&mdp, kind)?;
                let c = 1e6;
                let res = scaling_limit_residual(&sys, &q, c)?;
                let bound = 10.0 * (d_norm * mdp.gamma() * ln_a / (lambda * c) + dr / c);
                b.record("ode.limit_field_residual", bound - res, 0.0);
                let mut prev = f64::INFINITY;
                for k in 1..=6 {
                    let r = scaling_limit_residual(&sys, &q, 10f64.powi(k))?;
                    b.record("ode.limit_field_decreasing", prev - r + 1e-12, 0.0);
                    prev = r;
                }
            }
        }
    }
    Ok(b.into_checks())
}

/// Noise checks and error trend along learning runs on the 5×3 reference
/// model (seed 42, `γ = 0.9`).
pub fn learning_checks(iterations: u64, seeds: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mdp = RandomMdp::new(5, 3).gamma(0.9).generate(42)?;
    let steps = StepSizeSchedule::new(10.0, 100.0, 1.0).cap(0.5);
    let anneal = AnnealSchedule::power(1.0, 0.6)?;
    let q_max = solve_fixed_point(&mdp, OperatorKind::Max, SOLVE_TOL, 1_000_000)?.q_star;
    let kinds = [
        Some(OperatorKind::Max),
        Some(OperatorKind::Lse(10.0)),
        Some(OperatorKind::Mellowmax(10.0)),
        None,
    ];
    let mut jobs = Vec::new();
    for kind in kinds {
        for s in 0..seeds as u64 {
            jobs.push((kind, seed.wrapping_mul(1_000).wrapping_add(s)));
        }
    }
    let parts = par_map(&jobs, |(kind, s)| {
        let opts = RunOptions::new(iterations, *s);
        let (run, label) = match kind {
            Some(k) => {
                let q_ref = solve_fixed_point(&mdp, *k, SOLVE_TOL, 1_000_000)?.q_star;
                (run_learning(&mdp, *k, &steps, opts, &q_ref)?, k.name())
            }
            None => (run_annealed_boltzmann(&mdp, &steps, &anneal, opts, &q_max)?, "annealed_boltzmann"),
        };
        let mut b = Battery::default();
        for c in noise_report(&run).checks {
            b.record(&format!("learning.{}.{}", c.name, label), c.worst_slack, BOUND_TOL);
        }
        let (first, last) = run.error_trend();
        b.record(&format!("learning.error_trend.{label}"), first - last, 0.0);
        Ok(b)
    })?;
    let mut b = Battery::default();
    parts.into_iter().for_each(|p| b.merge(p));
    Ok(b.into_checks())
}

/// Runs `suite` with `trials` random vectors or pairs per randomized check.
pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> Result<VerifyReport> {
    if trials == 0 {
        return Err(Error::Domain("trials must be positive".into()));
    }
    let mut checks = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Norms {
        checks.extend(norm_checks(trials, seed)?);
    }
    if all || suite == Suite::Operators {
        checks.extend(operator_checks(trials, seed)?);
    }
    if all || suite == Suite::Contraction {
        checks.extend(contraction_checks(20, trials, seed)?);
        checks.extend(fixed_point_checks(30, seed)?);
    }
    if all || suite == Suite::Ode {
        checks.extend(ode_checks(20, trials, seed)?);
    }
    if all || suite == Suite::Learning {
        checks.extend(learning_checks(200_000, 3, seed)?);
    }
    Ok(VerifyReport { suite: suite.name().into(), platform: platform_note(), seed, trials, checks })
}
