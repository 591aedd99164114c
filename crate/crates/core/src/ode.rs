//! The deterministic model `dx/dt = D(F(x) − x)`: vector fields,
//! fixed-step integration, weighted `p`-norm Lyapunov series, and decay
//! certificates against the exponential envelopes that contraction of `F`
//! implies.
//!
//! With `w_i = 1/d_i`, a `p`-norm contraction with modulus `α` gives
//!
//! ```text
//! V(t) = ‖x_t − x*‖_{p,w} ≤ V(0) · exp(rate · t),
//! rate = (α − 1) / (w_max^{1/p} · w_min^{(p−1)/p}),
//! ```
//!
//! and an `∞`-norm contraction gives the same with `α` replaced by
//! `α n^{1/p}` for any even `p` making that product smaller than one,
//! together with the `∞`-norm envelope
//! `‖x_t − x*‖_∞ ≤ ‖x_0 − x*‖_∞ (n w_max / w_min)^{1/p} exp((α n^{1/p} − 1) t / w_min)`.

use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{random_pair, solve_fixed_point};
use crate::mdp::{build_sampling_distribution, MdpModel, QTable};
use crate::operators::{inf_dist, inf_norm, BellmanOperator, NormOrder, OperatorKind, WeightedNorm};
use crate::rng::Rng;

/// Multiplicative tolerance of decay certificates.
pub const CERT_TOL: f64 = 1e-6;
/// Default integration step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// States with a larger `∞`-norm count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Absolute slack on discrete derivative inequalities.
pub const SLOPE_TOL: f64 = 1e-6;

/// Which contraction property the system's `F` is claimed to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `F` contracts in every even `p`-norm with modulus `α`.
    PNormContraction,
    /// `F` contracts in `‖·‖_∞` with modulus `α`.
    InfNormContraction,
}

/// The map `F` of a system.
#[derive(Debug, Clone)]
pub enum FieldMap {
    /// `F(Q) = R + γ P H(Q)`.
    Bellman(BellmanOperator),
    /// `F(Q) = γ P H_max(Q)`: the scaling limit of any Bellman operator.
    BellmanLimit(BellmanOperator),
    /// `F(x) = α · diag(a) · x + b`.
    Affine { alpha: f64, diag_a: Vec<f64>, b: Vec<f64> },
}

impl FieldMap {
    fn dim(&self) -> usize {
        match self {
            Self::Bellman(op) | Self::BellmanLimit(op) => op.shape().len(),
            Self::Affine { b, .. } => b.len(),
        }
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Bellman(op) => op.apply_into(x, out),
            Self::BellmanLimit(op) => op.apply_with(OperatorKind::Max, false, x, out),
            Self::Affine { alpha, diag_a, b } => {
                for (((o, x), a), b) in out.iter_mut().zip(x).zip(diag_a).zip(b) {
                    *o = alpha * a * x + b;
                }
            }
        }
    }

    /// `lim_{c→∞} F(c x) / c`.
    fn limit_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Bellman(op) | Self::BellmanLimit(op) => {
                op.apply_with(OperatorKind::Max, false, x, out)
            }
            Self::Affine { alpha, diag_a, .. } => {
                for ((o, x), a) in out.iter_mut().zip(x).zip(diag_a) {
                    *o = alpha * a * x;
                }
            }
        }
    }
}

/// `dx/dt = D(F(x) − x)` with positive diagonal `D` and a claimed
/// contraction modulus `α` for `F`.
#[derive(Debug, Clone)]
pub struct OdeSystem {
    map: FieldMap,
    d: Vec<f64>,
    alpha: f64,
    regime: Regime,
}

impl OdeSystem {
    pub fn new(map: FieldMap, d: Vec<f64>, alpha: f64, regime: Regime) -> Result<Self> {
        if d.len() != map.dim() {
            return Err(Error::Shape { expected: map.dim(), got: d.len() });
        }
        if let Some(v) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!("diagonal of D must be positive, got {v}")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Domain(format!("contraction modulus must lie in [0, 1), got {alpha}")));
        }
        Ok(Self { map, d, alpha, regime })
    }

    /// The mean-field model of Q-learning with operator `kind`: `D` holds the
    /// sampling distribution `d(s,a)` and `α = γ`.
    pub fn q_learning(mdp: &MdpModel, kind: OperatorKind) -> Result<Self> {
        let dist = build_sampling_distribution(mdp)?;
        let op = BellmanOperator::new(mdp, kind)?;
        Self::new(FieldMap::Bellman(op), dist.d_diag().to_vec(), mdp.gamma(), Regime::InfNormContraction)
    }

    /// The scaling-limit system `dQ/dt = γ D P H_max(Q) − D Q`, whose
    /// equilibrium is the origin.
    pub fn bellman_limit(mdp: &MdpModel) -> Result<Self> {
        let dist = build_sampling_distribution(mdp)?;
        let op = BellmanOperator::new(mdp, OperatorKind::Max)?;
        Self::new(FieldMap::BellmanLimit(op), dist.d_diag().to_vec(), mdp.gamma(), Regime::InfNormContraction)
    }

    /// Same system with a different `D`.
    pub fn with_d(&self, d: Vec<f64>) -> Result<Self> {
        Self::new(self.map.clone(), d, self.alpha, self.regime)
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn d_diag(&self) -> &[f64] {
        &self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn map(&self) -> &FieldMap {
        &self.map
    }

    /// `‖D‖_∞ = max_i d_i`.
    pub fn d_norm(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    /// Lyapunov weights `w_i = 1/d_i` as a norm of the given order.
    pub fn lyapunov_norm(&self, order: NormOrder) -> Result<WeightedNorm> {
        WeightedNorm::from_d(order, &self.d)
    }

    /// `F(x)`.
    pub fn apply_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = vec![0.0; x.len()];
        self.map.apply_into(x, &mut out);
        Ok(out)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    #[inline]
    fn field_into(&self, x: &[f64], out: &mut [f64]) {
        self.map.apply_into(x, out);
        for ((o, x), d) in out.iter_mut().zip(x).zip(&self.d) {
            *o = d * (*o - x);
        }
    }

    /// The equilibrium `x* = F(x*)`: closed form for affine maps, the origin
    /// for the limit system, Picard iteration to `tol` for Bellman maps.
    pub fn fixed_point(&self, tol: f64) -> Result<Vec<f64>> {
        match &self.map {
            FieldMap::Affine { alpha, diag_a, b } => {
                Ok(diag_a.iter().zip(b).map(|(a, b)| b / (1.0 - alpha * a)).collect())
            }
            FieldMap::BellmanLimit(_) => Ok(vec![0.0; self.dim()]),
            FieldMap::Bellman(op) => {
                let res = solve_fixed_point(op.mdp(), op.kind(), tol, 10_000_000)?;
                if !res.converged {
                    return Err(Error::Numeric(format!(
                        "fixed point of {} did not converge (residual {:e})",
                        op.kind().name(),
                        res.residual
                    )));
                }
                Ok(res.q_star)
            }
        }
    }
}

/// `D(F(q) − q)`.
pub fn vector_field(system: &OdeSystem, q: &[f64]) -> Result<QTable> {
    system.check(q)?;
    let mut out = vec![0.0; q.len()];
    system.field_into(q, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("vector field is not finite".into()));
    }
    Ok(out)
}

/// The limit field `f∞(q) = lim f(c q)/c = D(F∞(q) − q)`; for Bellman maps
/// `F∞(q) = γ P H_max(q)` whatever the operator kind.
pub fn f_infinity_field(system: &OdeSystem, q: &[f64]) -> Result<QTable> {
    system.check(q)?;
    let mut out = vec![0.0; q.len()];
    system.map.limit_into(q, &mut out);
    for ((o, x), d) in out.iter_mut().zip(q).zip(&system.d) {
        *o = d * (*o - x);
    }
    Ok(out)
}

/// `‖f(c q)/c − f∞(q)‖_∞`.
pub fn scaling_limit_residual(system: &OdeSystem, q: &[f64], c: f64) -> Result<f64> {
    let cq: Vec<f64> = q.iter().map(|v| c * v).collect();
    let f = vector_field(system, &cq)?;
    let finf = f_infinity_field(system, q)?;
    Ok(f.iter().zip(&finf).fold(0.0, |m, (a, b)| m.max((a / c - b).abs())))
}

/// Largest observed `‖f(x) − f(y)‖_∞ / ‖x − y‖_∞` over random pairs.
pub fn lipschitz_estimate(system: &OdeSystem, trials: usize, rng: &mut Rng) -> Result<f64> {
    let n = system.dim();
    let (mut fx, mut fy) = (vec![0.0; n], vec![0.0; n]);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (x, y) = random_pair(n, rng);
        let dist = inf_dist(&x, &y);
        if dist == 0.0 {
            continue;
        }
        system.field_into(&x, &mut fx);
        system.field_into(&y, &mut fy);
        worst = worst.max(inf_dist(&fx, &fy) / dist);
    }
    Ok(worst)
}

/// Fixed-step integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    #[default]
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Self::Euler),
            "rk4" => Ok(Self::Rk4),
            other => Err(Error::Domain(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub t_end: f64,
    pub step: f64,
    pub scheme: Scheme,
    /// Store every `stride`-th step.
    pub stride: usize,
}

impl IntegrateOptions {
    pub fn new(t_end: f64) -> Self {
        Self { t_end, step: DEFAULT_STEP, scheme: Scheme::Rk4, stride: 1 }
    }

    pub fn step(mut self, h: f64) -> Self {
        self.step = h;
        self
    }

    pub fn scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }
}

/// Stored solution samples at uniformly spaced times starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub step: f64,
    pub stride: usize,
    pub scheme: Scheme,
    /// Diagonal of `D` of the generating system.
    pub d: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// CSV with header `t,q_0,...,q_{n-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.d.len();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("q_{i}")));
        w.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Fixed-step Euler or classical Runge–Kutta from `q0` to `t_end`.
pub fn integrate(system: &OdeSystem, q0: &[f64], opts: IntegrateOptions) -> Result<Trajectory> {
    system.check(q0)?;
    let IntegrateOptions { t_end, step: h, scheme, stride } = opts;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("step must be positive, got {h}")));
    }
    if !(t_end >= h) {
        return Err(Error::Domain(format!("t_end = {t_end} is shorter than one step {h}")));
    }
    if stride == 0 {
        return Err(Error::Domain("stride must be at least 1".into()));
    }
    let steps = (t_end / h).round() as usize;
    let n = q0.len();
    let mut x = q0.to_vec();
    let mut k = vec![vec![0.0; n]; 4];
    let mut tmp = vec![0.0; n];
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    for i in 1..=steps {
        match scheme {
            Scheme::Euler => {
                system.field_into(&x, &mut k[0]);
                x.iter_mut().zip(&k[0]).for_each(|(x, k)| *x += h * k);
            }
            Scheme::Rk4 => {
                system.field_into(&x, &mut k[0]);
                for stage in 1..4 {
                    let c = if stage == 3 { h } else { 0.5 * h };
                    for ((t, x), kp) in tmp.iter_mut().zip(&x).zip(&k[stage - 1]) {
                        *t = x + c * kp;
                    }
                    system.field_into(&tmp, &mut k[stage]);
                }
                for (j, x) in x.iter_mut().enumerate() {
                    *x += h / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
                }
            }
        }
        let t = i as f64 * h;
        let norm = inf_norm(&x);
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { t, norm });
        }
        if i % stride == 0 {
            times.push(t);
            states.push(x.clone());
        }
    }
    Ok(Trajectory { times, states, step: h, stride, scheme, d: system.d.clone() })
}

fn check_weights(traj: &Trajectory, norm: &WeightedNorm) -> Result<()> {
    let ok = norm.weights().len() == traj.d.len()
        && norm
            .weights()
            .iter()
            .zip(&traj.d)
            .all(|(w, d)| (w * d - 1.0).abs() <= 1e-12);
    if !ok {
        return Err(Error::Config("Lyapunov weights must equal 1/d_i of the system's D".into()));
    }
    Ok(())
}

/// `V(t_k) = ‖Q_{t_k} − Q*‖_{p,w}` at every stored time. The weights must
/// be `1/d_i` for the trajectory's `D`.
pub fn lyapunov_series(traj: &Trajectory, q_star: &[f64], norm: &WeightedNorm) -> Result<Vec<f64>> {
    check_weights(traj, norm)?;
    if q_star.len() != traj.d.len() {
        return Err(Error::Shape { expected: traj.d.len(), got: q_star.len() });
    }
    let mut diff = vec![0.0; q_star.len()];
    Ok(traj
        .states
        .iter()
        .map(|x| {
            diff.iter_mut().zip(x).zip(q_star).for_each(|((d, x), s)| *d = x - s);
            norm.eval_unchecked(&diff)
        })
        .collect())
}

/// Smallest even `p ≥ 2` strictly above `⌈ln n / ln(1/α)⌉`; it makes
/// `α n^{1/p} < 1`.
pub fn choose_even_p(n: usize, alpha: f64) -> Result<u32> {
    if n == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let k = ((n as f64).ln() / (1.0 / alpha).ln()).ceil() as u32;
    let mut p = if k % 2 == 0 { k + 2 } else { k + 1 }.max(2);
    while alpha * (n as f64).powf(1.0 / p as f64) >= 1.0 {
        p += 2;
    }
    Ok(p)
}

/// `p` for a certificate: explicit, or chosen automatically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PChoice {
    Auto,
    Even(u32),
}

impl std::str::FromStr for PChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        let p: u32 = s.parse().map_err(|_| Error::Domain(format!("invalid p '{s}'")))?;
        if p < 2 || p % 2 != 0 {
            return Err(Error::Domain(format!("p must be an even integer >= 2, got {p}")));
        }
        Ok(Self::Even(p))
    }
}

/// One stored time of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertSample {
    pub t: f64,
    pub observed: f64,
    pub bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inf_observed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inf_bound: Option<f64>,
}

/// Observed Lyapunov values against the exponential envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub p: u32,
    pub regime: Regime,
    pub alpha: f64,
    pub n: usize,
    pub rate: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub tolerance: f64,
    /// Largest relative excess `V(t)/envelope(t) − 1` over both envelopes.
    pub max_violation: f64,
    pub passed: bool,
    /// Relative excess over the `∞`-norm envelope alone (`∞`-norm regime only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inf_max_violation: Option<f64>,
    pub samples: Vec<CertSample>,
}

impl DecayCertificate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// The `p` a certificate would use, and an error naming the smallest
/// admissible even `p` when an explicit choice does not work.
pub fn resolve_p(system: &OdeSystem, p: PChoice) -> Result<u32> {
    let n = system.dim();
    match (system.regime, p) {
        (Regime::PNormContraction, PChoice::Auto) => Ok(2),
        (Regime::PNormContraction, PChoice::Even(p)) => Ok(p),
        (Regime::InfNormContraction, PChoice::Auto) => choose_even_p(n, system.alpha),
        (Regime::InfNormContraction, PChoice::Even(p)) => {
            if system.alpha * (n as f64).powf(1.0 / p as f64) >= 1.0 {
                Err(Error::InvalidP { p, min_p: choose_even_p(n, system.alpha)? })
            } else {
                Ok(p)
            }
        }
    }
}

/// Exponent coefficient of the `(p,w)`-norm envelope.
pub fn decay_rate(system: &OdeSystem, p: u32) -> Result<f64> {
    let norm = system.lyapunov_norm(NormOrder::Even(p))?;
    let pf = p as f64;
    let modulus = match system.regime {
        Regime::PNormContraction => system.alpha,
        Regime::InfNormContraction => system.alpha * (system.dim() as f64).powf(1.0 / pf),
    };
    Ok((modulus - 1.0) / (norm.w_max().powf(1.0 / pf) * norm.w_min().powf((pf - 1.0) / pf)))
}

fn relative_excess(observed: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        (observed - bound) / bound
    } else if observed == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Checks a trajectory against the decay envelopes with the default tolerance.
pub fn certify_decay(traj: &Trajectory, q_star: &[f64], system: &OdeSystem, p: PChoice) -> Result<DecayCertificate> {
    certify_decay_with_tol(traj, q_star, system, p, CERT_TOL)
}

/// Checks `V(t) ≤ V(0) e^{rate t} (1 + tol)` at every stored time, and for
/// the `∞`-norm regime also the `∞`-norm envelope. A trajectory that starts
/// at `q_star` passes trivially.
pub fn certify_decay_with_tol(
    traj: &Trajectory,
    q_star: &[f64],
    system: &OdeSystem,
    p: PChoice,
    tol: f64,
) -> Result<DecayCertificate> {
    if traj.d != system.d {
        return Err(Error::Config("trajectory was not produced by this system".into()));
    }
    let p = resolve_p(system, p)?;
    let norm = system.lyapunov_norm(NormOrder::Even(p))?;
    let series = lyapunov_series(traj, q_star, &norm)?;
    let rate = decay_rate(system, p)?;
    let (w_min, w_max) = (norm.w_min(), norm.w_max());
    let n = system.dim();
    let pf = p as f64;
    let v0 = series[0];
    let trivial = v0 == 0.0;

    let inf = (system.regime == Regime::InfNormContraction).then(|| {
        let prefactor = (n as f64 * w_max / w_min).powf(1.0 / pf);
        let inf_rate = (system.alpha * (n as f64).powf(1.0 / pf) - 1.0) / w_min;
        let e0 = inf_dist(&traj.states[0], q_star);
        (prefactor, inf_rate, e0)
    });

    let mut max_violation: f64 = if traj.is_empty() { 0.0 } else { f64::NEG_INFINITY };
    let mut inf_max: Option<f64> = inf.map(|_| f64::NEG_INFINITY);
    let mut samples = Vec::with_capacity(traj.len());
    for ((t, x), v) in traj.times.iter().zip(&traj.states).zip(&series) {
        let bound = v0 * (rate * t).exp();
        let mut sample = CertSample { t: *t, observed: *v, bound, inf_observed: None, inf_bound: None };
        if !trivial {
            max_violation = max_violation.max(relative_excess(*v, bound));
        }
        if let Some((prefactor, inf_rate, e0)) = inf {
            let observed = inf_dist(x, q_star);
            let bound = e0 * prefactor * (inf_rate * t).exp();
            sample.inf_observed = Some(observed);
            sample.inf_bound = Some(bound);
            if !trivial {
                let ex = relative_excess(observed, bound);
                inf_max = inf_max.map(|m| m.max(ex));
                max_violation = max_violation.max(ex);
            }
        }
        samples.push(sample);
    }
    if trivial {
        max_violation = 0.0;
        inf_max = inf_max.map(|_| 0.0);
    }
    Ok(DecayCertificate {
        p,
        regime: system.regime,
        alpha: system.alpha,
        n,
        rate,
        w_min,
        w_max,
        tolerance: tol,
        max_violation,
        passed: max_violation <= tol,
        inf_max_violation: inf_max,
        samples,
    })
}

/// Worst slack of the discrete derivative bound
/// `(V_k − V_{k−1}) / Δt ≤ rate · V_k + SLOPE_TOL` along a trajectory.
///
/// The difference quotient is compared with the right endpoint: `V` is
/// non-increasing, so `∫ V' ≤ rate ∫ V ≤ rate · V_k · Δt` with `rate < 0`.
pub fn slope_slack(traj: &Trajectory, q_star: &[f64], system: &OdeSystem, p: u32) -> Result<f64> {
    let norm = system.lyapunov_norm(NormOrder::Even(p))?;
    let series = lyapunov_series(traj, q_star, &norm)?;
    let rate = decay_rate(system, p)?;
    let dt = traj.step * traj.stride as f64;
    Ok(series
        .windows(2)
        .map(|w| rate * w[1] + SLOPE_TOL - (w[1] - w[0]) / dt)
        .fold(f64::INFINITY, f64::min))
}

/// Worst slack of the derivative bound
/// `dV/dt ≤ (−‖x − x*‖_p + ‖F(x) − F(x*)‖_p) / w_min^{(p−1)/p}`,
/// with the difference quotient compared against the trapezoidal average of
/// the right-hand side over each interval.
///
/// With unequal weights this form can fail while the flow contracts: the
/// bracket is negative, and dividing by the smallest weight overstates the
/// decay. [`derivative_bound_slack_sharp`] checks the bound that Hölder's
/// inequality actually gives.
pub fn derivative_bound_slack(traj: &Trajectory, q_star: &[f64], system: &OdeSystem, p: u32) -> Result<f64> {
    derivative_slack(traj, q_star, system, p, |bracket, w_min, _| bracket / w_min)
}

/// As [`derivative_bound_slack`], with the bracket divided by
/// `w_max^{(p−1)/p}` where it is negative and by `w_min^{(p−1)/p}` where it
/// is positive.
pub fn derivative_bound_slack_sharp(traj: &Trajectory, q_star: &[f64], system: &OdeSystem, p: u32) -> Result<f64> {
    derivative_slack(traj, q_star, system, p, |bracket, w_min, w_max| {
        if bracket <= 0.0 {
            bracket / w_max
        } else {
            bracket / w_min
        }
    })
}

fn derivative_slack(
    traj: &Trajectory,
    q_star: &[f64],
    system: &OdeSystem,
    p: u32,
    scale: impl Fn(f64, f64, f64) -> f64,
) -> Result<f64> {
    let norm = system.lyapunov_norm(NormOrder::Even(p))?;
    let plain = WeightedNorm::unweighted(NormOrder::Even(p), system.dim())?;
    let series = lyapunov_series(traj, q_star, &norm)?;
    let e = (p as f64 - 1.0) / p as f64;
    let (w_min, w_max) = (norm.w_min().powf(e), norm.w_max().powf(e));
    let f_star = system.apply_map(q_star)?;
    let mut fx = vec![0.0; system.dim()];
    let mut diff = vec![0.0; system.dim()];
    let rhs: Vec<f64> = traj
        .states
        .iter()
        .map(|x| {
            diff.iter_mut().zip(x).zip(q_star).for_each(|((d, x), s)| *d = x - s);
            let dist = plain.eval_unchecked(&diff);
            system.map.apply_into(x, &mut fx);
            diff.iter_mut().zip(&fx).zip(&f_star).for_each(|((d, a), b)| *d = a - b);
            scale(plain.eval_unchecked(&diff) - dist, w_min, w_max)
        })
        .collect();
    let dt = traj.step * traj.stride as f64;
    Ok(series
        .windows(2)
        .zip(rhs.windows(2))
        .map(|(v, g)| 0.5 * (g[0] + g[1]) + SLOPE_TOL - (v[1] - v[0]) / dt)
        .fold(f64::INFINITY, f64::min))
}

/// `F(x) = α diag(a) x + b`, a `p`-norm contraction with modulus `α` for
/// every `p` when `|a_i| ≤ 1`.
pub fn synthetic_affine_system(alpha: f64, diag_a: Vec<f64>, b: Vec<f64>, d: Vec<f64>) -> Result<OdeSystem> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if let Some(a) = diag_a.iter().find(|a| !(a.abs() <= 1.0)) {
        return Err(Error::Domain(format!("diagonal entries must lie in [-1, 1], got {a}")));
    }
    if diag_a.len() != b.len() {
        return Err(Error::Shape { expected: diag_a.len(), got: b.len() });
    }
    OdeSystem::new(FieldMap::Affine { alpha, diag_a, b }, d, alpha, Regime::PNormContraction)
}

/// A random affine system of dimension `n`: `a_i ∈ [-1, 1]`, `b_i ∈ [-5, 5]`,
/// `d` a random probability vector bounded away from zero.
pub fn random_affine_system(n: usize, alpha: f64, rng: &mut Rng) -> Result<OdeSystem> {
    let diag_a = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let b = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    synthetic_affine_system(alpha, diag_a, b, raw.iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{RandomMdp, Shape};
    use crate::rng::{stream, streams};

    fn scalar(gamma: f64, r: f64, d: f64) -> OdeSystem {
        synthetic_affine_system(gamma, vec![1.0], vec![r], vec![d]).unwrap()
    }

    #[test]
    fn field_examples() {
        let one = MdpModel::new(Shape::new(1, 1).unwrap(), 0.5, vec![1.0], vec![1.0], vec![1.0], None).unwrap();
        let sys = OdeSystem::q_learning(&one, OperatorKind::Max).unwrap();
        assert_eq!(vector_field(&sys, &[0.0]).unwrap(), vec![1.0]);
        let q_star = sys.fixed_point(1e-12).unwrap();
        assert!(vector_field(&sys, &q_star).unwrap()[0].abs() <= 1e-10);

        let mdp = RandomMdp::new(3, 2).generate(4).unwrap();
        let sys = OdeSystem::q_learning(&mdp, OperatorKind::Lse(2.0)).unwrap();
        let q: Vec<f64> = (0..6).map(|i| i as f64 * 0.3 - 1.0).collect();
        let full = vector_field(&sys.with_d(vec![1.0; 6]).unwrap(), &q).unwrap();
        let half = vector_field(&sys.with_d(vec![0.5; 6]).unwrap(), &q).unwrap();
        for (f, h) in full.iter().zip(&half) {
            assert_eq!(0.5 * f, *h);
        }
        assert!(vector_field(&sys, &[0.0]).is_err());
    }

    #[test]
    fn equilibrium_is_preserved() {
        let mdp = RandomMdp::new(3, 2).generate(8).unwrap();
        let sys = OdeSystem::q_learning(&mdp, OperatorKind::Max).unwrap();
        let q_star = sys.fixed_point(1e-12).unwrap();
        let traj = integrate(&sys, &q_star, IntegrateOptions::new(5.0)).unwrap();
        for x in &traj.states {
            assert!(inf_dist(x, &q_star) < 1e-9);
        }
        let v = lyapunov_series(&traj, &q_star, &sys.lyapunov_norm(NormOrder::Even(4)).unwrap()).unwrap();
        assert_eq!(v[0], 0.0);
        let cert = certify_decay(&traj, &q_star, &sys, PChoice::Auto).unwrap();
        assert!(cert.passed);
        assert_eq!(cert.max_violation, 0.0);
    }

    #[test]
    fn scalar_rk4_matches_closed_form() {
        // x_t = x* + (x0 − x*) e^{−d(1−γ)t}
        let (gamma, r, d) = (0.5, 1.0, 0.8);
        let sys = scalar(gamma, r, d);
        let x_star = r / (1.0 - gamma);
        let traj = integrate(&sys, &[0.0], IntegrateOptions::new(1.0)).unwrap();
        let exact = x_star - x_star * (-d * (1.0 - gamma)).exp();
        assert!((traj.last()[0] - exact).abs() < 1e-10);
        assert_eq!(traj.len(), 1001);
        assert!((traj.times[1000] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_is_first_order() {
        let (gamma, r, d) = (0.5, 1.0, 0.8);
        let sys = scalar(gamma, r, d);
        let exact = 2.0 - 2.0 * (-d * (1.0 - gamma) * 2.0f64).exp();
        let err = |h: f64| {
            let opts = IntegrateOptions::new(2.0).step(h).scheme(Scheme::Euler);
            (integrate(&sys, &[0.0], opts).unwrap().last()[0] - exact).abs()
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn integrate_rejects_bad_options() {
        let sys = scalar(0.5, 1.0, 1.0);
        assert!(integrate(&sys, &[0.0], IntegrateOptions::new(1.0).step(0.0)).is_err());
        assert!(integrate(&sys, &[0.0], IntegrateOptions::new(1e-4)).is_err());
        assert!(integrate(&sys, &[0.0], IntegrateOptions::new(1.0).stride(0)).is_err());
        assert!(integrate(&sys, &[0.0, 1.0], IntegrateOptions::new(1.0)).is_err());
    }

    #[test]
    fn divergence_is_detected() {
        // an expanding map cannot be built through the public constructors,
        // so push Euler past its stability limit instead
        let sys = scalar(0.5, 0.0, 1.0);
        let opts = IntegrateOptions::new(2000.0).step(5.0).scheme(Scheme::Euler);
        assert!(matches!(integrate(&sys, &[1.0], opts), Err(Error::Divergence { .. })));
    }

    #[test]
    fn stride_thins_samples() {
        let sys = scalar(0.5, 1.0, 1.0);
        let traj = integrate(&sys, &[0.0], IntegrateOptions::new(1.0).stride(100)).unwrap();
        assert_eq!(traj.len(), 11);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,q_0\n0,0\n"));
        assert_eq!(text.lines().count(), 12);
    }

    #[test]
    fn choose_even_p_examples() {
        assert_eq!(choose_even_p(1, 0.3).unwrap(), 2);
        assert_eq!(choose_even_p(2, 0.5).unwrap(), 2);
        assert_eq!(choose_even_p(4, 0.9).unwrap(), 16);
        assert!(0.9 * 4f64.powf(1.0 / 16.0) < 1.0);
        assert!(choose_even_p(4, 1.0).is_err());
        // ⌈ln 8 / ln(1/0.9)⌉ = ⌈19.74⌉ = 20 → 22
        assert_eq!(choose_even_p(8, 0.9).unwrap(), 22);
    }

    #[test]
    fn explicit_p_below_minimum_is_rejected() {
        let mdp = RandomMdp::new(2, 2).generate(0).unwrap();
        let sys = OdeSystem::q_learning(&mdp, OperatorKind::Max).unwrap();
        match resolve_p(&sys, PChoice::Even(2)) {
            Err(Error::InvalidP { p: 2, min_p: 16 }) => {}
            other => panic!("{other:?}"),
        }
        assert!(Error::InvalidP { p: 2, min_p: 16 }.to_string().contains("minimum admissible even p: 16"));
        assert_eq!(resolve_p(&sys, PChoice::Even(18)).unwrap(), 18);
        assert_eq!("auto".parse::<PChoice>().unwrap(), PChoice::Auto);
        assert!("3".parse::<PChoice>().is_err());
    }

    #[test]
    fn scalar_rate_matches_analytic_decay() {
        // (α − 1)/w with w = 1/d equals −d(1 − γ)
        let sys = scalar(0.7, 2.0, 0.4);
        let rate = decay_rate(&sys, 2).unwrap();
        assert!((rate + 0.4 * 0.3).abs() < 1e-15);
        let x_star = sys.fixed_point(0.0).unwrap();
        let traj = integrate(&sys, &[10.0], IntegrateOptions::new(10.0)).unwrap();
        let cert = certify_decay(&traj, &x_star, &sys, PChoice::Even(2)).unwrap();
        assert!(cert.passed, "{}", cert.max_violation);
        assert!(cert.max_violation.abs() < 1e-10);
    }

    #[test]
    fn weight_mismatch_is_a_configuration_error() {
        let sys = scalar(0.5, 1.0, 0.5);
        let traj = integrate(&sys, &[0.0], IntegrateOptions::new(1.0)).unwrap();
        let wrong = WeightedNorm::new(NormOrder::Even(2), vec![1.0]).unwrap();
        assert!(matches!(lyapunov_series(&traj, &[2.0], &wrong), Err(Error::Config(_))));
        let other = scalar(0.5, 1.0, 0.25);
        assert!(matches!(certify_decay(&traj, &[2.0], &other, PChoice::Auto), Err(Error::Config(_))));
    }

    #[test]
    fn random_mdp_certificate_and_slopes() {
        let mdp = RandomMdp::new(4, 2).gamma(0.9).generate(11).unwrap();
        let sys = OdeSystem::q_learning(&mdp, OperatorKind::Max).unwrap();
        let q_star = sys.fixed_point(1e-12).unwrap();
        let q0 = vec![0.0; 8];
        let traj = integrate(&sys, &q0, IntegrateOptions::new(20.0)).unwrap();
        let cert = certify_decay(&traj, &q_star, &sys, PChoice::Auto).unwrap();
        assert_eq!(cert.p, choose_even_p(8, 0.9).unwrap());
        assert!(cert.passed, "{} {:?}", cert.max_violation, cert.inf_max_violation);
        let v = lyapunov_series(&traj, &q_star, &sys.lyapunov_norm(NormOrder::Even(cert.p)).unwrap()).unwrap();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
        assert!(slope_slack(&traj, &q_star, &sys, cert.p).unwrap() >= 0.0);
        assert!(derivative_bound_slack_sharp(&traj, &q_star, &sys, cert.p).unwrap() >= 0.0);
    }

    #[test]
    fn derivative_bounds_agree_for_uniform_d() {
        let mdp = RandomMdp::new(4, 2).gamma(0.9).generate(11).unwrap();
        let sys = OdeSystem::q_learning(&mdp, OperatorKind::Max).unwrap().with_d(vec![0.125; 8]).unwrap();
        let q_star = sys.fixed_point(1e-12).unwrap();
        let traj = integrate(&sys, &[0.0; 8], IntegrateOptions::new(20.0)).unwrap();
        for p in [2, 4, 22] {
            let plain = derivative_bound_slack(&traj, &q_star, &sys, p).unwrap();
            assert!(plain >= 0.0, "p={p}: {plain}");
            assert_eq!(plain, derivative_bound_slack_sharp(&traj, &q_star, &sys, p).unwrap());
        }
    }

    #[test]
    fn w_min_scaling_overstates_decay_of_slow_coordinates() {
        // error confined to the coordinate with the smallest d decays at d_min(1 − α),
        // slower than (1 − α)/(w_max^{1/p} w_min^{(p−1)/p}) whenever the d_i differ
        let sys = synthetic_affine_system(0.5, vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, 0.1]).unwrap();
        let traj = integrate(&sys, &[0.0, 1.0], IntegrateOptions::new(10.0).stride(100)).unwrap();
        for p in [2, 4, 8] {
            assert!(derivative_bound_slack(&traj, &[0.0, 0.0], &sys, p).unwrap() < 0.0);
            assert!(derivative_bound_slack_sharp(&traj, &[0.0, 0.0], &sys, p).unwrap() >= 0.0);
            let cert = certify_decay(&traj, &[0.0, 0.0], &sys, PChoice::Even(p)).unwrap();
            assert!(!cert.passed);
            let exact = (-0.1 * 0.5 * 10.0f64).exp();
            assert!((cert.samples.last().unwrap().observed / cert.samples[0].observed - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn affine_systems_contract_exactly_on_isometries() {
        let sys = synthetic_affine_system(0.6, vec![1.0, -1.0, 1.0], vec![0.0; 3], vec![0.3, 0.3, 0.4]).unwrap();
        let x = [1.0, -2.0, 0.5];
        let y = [0.0, 1.0, -1.5];
        let (fx, fy) = (sys.apply_map(&x).unwrap(), sys.apply_map(&y).unwrap());
        for p in [2, 4, 8] {
            let norm = WeightedNorm::unweighted(NormOrder::Even(p), 3).unwrap();
            let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
            assert!((norm.eval(&df).unwrap() - 0.6 * norm.eval(&dx).unwrap()).abs() < 1e-12);
        }
        assert!(synthetic_affine_system(1.0, vec![1.0], vec![0.0], vec![1.0]).is_err());
        assert!(synthetic_affine_system(0.5, vec![1.5], vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn affine_certificates_with_uniform_d() {
        let mut rng = stream(3, streams::VERIFY);
        let sys = random_affine_system(6, 0.7, &mut rng).unwrap().with_d(vec![0.5; 6]).unwrap();
        let x_star = sys.fixed_point(0.0).unwrap();
        let q0: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..10.0)).collect();
        let traj = integrate(&sys, &q0, IntegrateOptions::new(20.0).stride(10)).unwrap();
        for p in [2, 4, 8] {
            let cert = certify_decay(&traj, &x_star, &sys, PChoice::Even(p)).unwrap();
            assert!(cert.passed, "p={p}: {}", cert.max_violation);
            assert!(cert.inf_max_violation.is_none());
        }
    }

    #[test]
    fn limit_field_examples() {
        let mdp = RandomMdp::new(3, 3).reward_range(-1.0, 1.0).generate(5).unwrap();
        let q = vec![0.0; 9];
        for kind in [OperatorKind::Max, OperatorKind::Lse(1.0)] {
            let sys = OdeSystem::q_learning(&mdp, kind).unwrap();
            assert_eq!(f_infinity_field(&sys, &q).unwrap(), q);
        }
        // positive homogeneity of H_max: f(cq)/c − f∞(q) = D R / c
        let sys = OdeSystem::q_learning(&mdp, OperatorKind::Max).unwrap();
        let q: Vec<f64> = (0..9).map(|i| (i as f64 - 4.0) * 0.7).collect();
        let dr: f64 = mdp
            .expected_reward()
            .iter()
            .zip(sys.d_diag())
            .fold(0.0, |m, (r, d)| m.max((r * d).abs()));
        let res = scaling_limit_residual(&sys, &q, 1e3).unwrap();
        assert!((res - dr / 1e3).abs() < 1e-12, "{res} vs {}", dr / 1e3);
        let lse = OdeSystem::q_learning(&mdp, OperatorKind::Lse(1.0)).unwrap();
        let res: Vec<f64> = (1..=6).map(|k| scaling_limit_residual(&lse, &q, 10f64.powi(k)).unwrap()).collect();
        assert!(res.windows(2).all(|w| w[1] <= w[0]), "{res:?}");
    }

    #[test]
    fn lipschitz_bound() {
        let mdp = RandomMdp::new(4, 2).generate(9).unwrap();
        let sys = OdeSystem::q_learning(&mdp, OperatorKind::Mellowmax(5.0)).unwrap();
        let mut rng = stream(1, streams::VERIFY);
        let est = lipschitz_estimate(&sys, 2000, &mut rng).unwrap();
        assert!(est <= (1.0 + mdp.gamma()) * sys.d_norm() + 1e-10);
        assert!(est > 0.0);
    }
}
