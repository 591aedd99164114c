//! Tabular Q-learning driven by samples from the behavior distribution,
//! with any of the four operators and an optional annealed Boltzmann
//! temperature, plus online statistics of the noise sequence
//! `ε_{k+1} = e_{(s,a)} δ_k − f(Q_k)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{build_sampling_distribution, sample_transition, MdpModel, QTable, Shape, TransitionSample};
use crate::operators::{inf_dist, OperatorKind};
use crate::rng::{stream, streams};

/// Power-law step sizes `α_k = min(c_max, a / (k + b)^q)`, `k = 0, 1, ...`.
/// Without an explicit cap the step is capped at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeSchedule {
    pub a: f64,
    pub b: f64,
    pub q_exp: f64,
    #[serde(default)]
    pub c_max: Option<f64>,
}

impl StepSizeSchedule {
    pub fn new(a: f64, b: f64, q_exp: f64) -> Self {
        Self { a, b, q_exp, c_max: None }
    }

    pub fn cap(mut self, c_max: f64) -> Self {
        self.c_max = Some(c_max);
        self
    }

    #[inline]
    pub fn alpha(&self, k: u64) -> f64 {
        let raw = self.a / (k as f64 + self.b).powf(self.q_exp);
        raw.min(self.c_max.unwrap_or(1.0))
    }
}

/// Outcome of [`validate_schedule`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleVerdict {
    Accept,
    /// The named condition fails.
    Reject(String),
}

impl ScheduleVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Self::Accept)
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            Self::Accept => Ok(()),
            Self::Reject(reason) => Err(Error::Validation(format!("step-size schedule rejected: {reason}"))),
        }
    }
}

/// Decides on the parameters alone whether the schedule satisfies
/// `Σα_k = ∞` and `Σα_k² < ∞`, which for the power law holds iff `a > 0`
/// and `q ∈ (1/2, 1]`.
pub fn validate_schedule(steps: &StepSizeSchedule) -> ScheduleVerdict {
    use ScheduleVerdict::Reject;
    if !(steps.a > 0.0 && steps.a.is_finite()) {
        return Reject(format!("scale a must be positive, got {}", steps.a));
    }
    if !(steps.b >= 0.0 && steps.b.is_finite()) {
        return Reject(format!("offset b must be non-negative, got {}", steps.b));
    }
    if let Some(c) = steps.c_max {
        if !(c > 0.0 && c <= 1.0) {
            return Reject(format!("cap c_max must lie in (0, 1], got {c}"));
        }
    }
    if steps.q_exp.is_nan() {
        return Reject("exponent is NaN".into());
    }
    if steps.q_exp > 1.0 {
        return Reject("Σα_k < ∞".into());
    }
    if steps.q_exp <= 0.5 {
        return Reject("Σα_k² = ∞".into());
    }
    ScheduleVerdict::Accept
}

/// How the inverse temperature grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "growth", rename_all = "lowercase")]
pub enum Growth {
    /// `λ_k = λ_0 (1 + k)^r`.
    Power { r: f64 },
    /// `λ_k = λ_0 ρ^k`.
    Geometric { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub lambda0: f64,
    #[serde(flatten)]
    pub growth: Growth,
}

impl AnnealSchedule {
    pub fn power(lambda0: f64, r: f64) -> Result<Self> {
        let s = Self { lambda0, growth: Growth::Power { r } };
        s.validate()?;
        Ok(s)
    }

    pub fn geometric(lambda0: f64, rho: f64) -> Result<Self> {
        let s = Self { lambda0, growth: Growth::Geometric { rho } };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::Domain(format!("initial temperature must be positive, got {}", self.lambda0)));
        }
        match self.growth {
            Growth::Power { r } if !(r > 0.0 && r.is_finite()) => {
                Err(Error::Domain(format!("power growth needs r > 0, got {r}")))
            }
            Growth::Geometric { rho } if !(rho > 1.0 && rho.is_finite()) => {
                Err(Error::Domain(format!("geometric growth needs rho > 1, got {rho}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn lambda(&self, k: u64) -> f64 {
        match self.growth {
            Growth::Power { r } => self.lambda0 * (1.0 + k as f64).powf(r),
            Growth::Geometric { rho } => self.lambda0 * rho.powf(k as f64),
        }
    }

    /// `γ ln|A| / λ_k`, the bound on the gap between the Boltzmann and max
    /// backups at step `k`.
    pub fn residual_bound(&self, k: u64, gamma: f64, n_actions: usize) -> f64 {
        gamma * (n_actions as f64).ln() / self.lambda(k)
    }
}

fn gather(q: &[f64], shape: Shape, s: usize, row: &mut [f64]) {
    for (a, r) in row.iter_mut().enumerate() {
        *r = q[shape.index(s, a)];
    }
}

#[inline]
fn td_with(q: &[f64], sample: &TransitionSample, kind: OperatorKind, gamma: f64, shape: Shape, row: &mut [f64]) -> f64 {
    gather(q, shape, sample.s_next, row);
    sample.r + gamma * kind.eval(row) - q[shape.index(sample.s, sample.a)]
}

/// Applies one update `Q(s,a) ← Q(s,a) + α (r + γ h(Q(s',·)) − Q(s,a))` in
/// place and returns the temporal difference. No other entry is touched.
pub fn q_update_step(
    q: &mut [f64],
    sample: &TransitionSample,
    alpha: f64,
    kind: OperatorKind,
    gamma: f64,
    shape: Shape,
) -> Result<f64> {
    shape.check_len(q.len())?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("step size must lie in (0, 1], got {alpha}")));
    }
    if sample.s >= shape.n_states || sample.s_next >= shape.n_states || sample.a >= shape.n_actions {
        return Err(Error::Domain(format!("sample {sample:?} is outside the table")));
    }
    let mut row = vec![0.0; shape.n_actions];
    let delta = td_with(q, sample, kind, gamma, shape, &mut row);
    q[shape.index(sample.s, sample.a)] += alpha * delta;
    Ok(delta)
}

/// Length and seed of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub iterations: u64,
    pub seed: u64,
    /// Record every `stride`-th iterate.
    pub stride: u64,
}

impl RunOptions {
    pub fn new(iterations: u64, seed: u64) -> Self {
        Self { iterations, seed, stride: (iterations / 1000).max(1) }
    }

    pub fn stride(mut self, stride: u64) -> Self {
        self.stride = stride;
        self
    }
}

/// One row of the run CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Number of updates applied so far.
    pub k: u64,
    pub error_inf: f64,
    /// Step size of the next update.
    pub alpha: f64,
    /// Temperature used by the next update; absent for `max`.
    pub lambda: Option<f64>,
    /// `‖ε_{k+1}‖₂²` of the next update.
    pub eps_sq: f64,
    /// `3R²_max + C + 3(γ² + 1)‖Q_k‖₂²`.
    pub moment_bound: f64,
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }

    /// `4 σ / √count`, plus a floor for exactly deterministic sequences.
    pub fn band(&self) -> f64 {
        4.0 * self.std() / (self.count.max(1) as f64).sqrt() + 1e-12
    }
}

/// Noise statistics accumulated along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    /// Per visited `(s,a)`: moments of `δ_k − (F(Q_k) − Q_k)(s,a)`, the
    /// nonzero component of `ε_{k+1}` up to the deterministic `f` offset.
    pub buckets: Vec<Moments>,
    /// Per component `j`: moments of `ε_{k+1}(j)` over all steps.
    pub components: Vec<Moments>,
    /// Moments of `‖ε_{k+1}‖₂²`.
    pub eps_sq: Moments,
    /// `min_k (bound_k − ‖ε_{k+1}‖₂²)`.
    pub moment_worst_slack: f64,
    /// `C` in the moment bound.
    pub moment_constant: f64,
    pub r_max: f64,
    /// `min_k (γ ln|A| / λ_k − |w_k|)` for annealed runs.
    pub residual_worst_slack: Option<f64>,
    pub residual_max: Option<f64>,
}

/// A finished run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningRun {
    pub seed: u64,
    pub kind: OperatorKind,
    pub anneal: Option<AnnealSchedule>,
    pub stride: u64,
    pub records: Vec<RunRecord>,
    /// `Q_k` at every recorded `k`.
    pub snapshots: Vec<QTable>,
    pub final_q: QTable,
    pub final_error: f64,
    pub noise: NoiseStats,
}

impl LearningRun {
    /// The error column of the recorded snapshots.
    pub fn error_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error_inf).collect()
    }

    /// Mean error over the first and the last tenth of the snapshots.
    pub fn error_trend(&self) -> (f64, f64) {
        let e = self.error_series();
        let m = (e.len() / 10).max(1);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        (mean(&e[..m]), mean(&e[e.len() - m..]))
    }

    /// CSV with header `k,error_inf,alpha,lambda,eps_sq,moment_bound`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "error_inf", "alpha", "lambda", "eps_sq", "moment_bound"])?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                r.error_inf.to_string(),
                r.alpha.to_string(),
                r.lambda.map(|l| l.to_string()).unwrap_or_default(),
                r.eps_sq.to_string(),
                r.moment_bound.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Model quantities kept in sync with `Q_k` to evaluate `f(Q_k)` exactly.
struct MeanField<'a> {
    mdp: &'a MdpModel,
    shape: Shape,
    kind: OperatorKind,
    reward: QTable,
    d: Vec<f64>,
    h: Vec<f64>,
    /// `F(Q) − Q`.
    gap: Vec<f64>,
    f_sq: f64,
    row: Vec<f64>,
}

impl<'a> MeanField<'a> {
    fn new(mdp: &'a MdpModel, kind: OperatorKind, d: &[f64], q: &[f64]) -> Self {
        let shape = mdp.shape();
        let mut mf = Self {
            mdp,
            shape,
            kind,
            reward: mdp.expected_reward(),
            d: d.to_vec(),
            h: vec![0.0; shape.n_states],
            gap: vec![0.0; shape.len()],
            f_sq: 0.0,
            row: vec![0.0; shape.n_actions],
        };
        for s in 0..shape.n_states {
            mf.refresh_h(q, s);
        }
        mf.refresh_gap(q);
        mf
    }

    fn refresh_h(&mut self, q: &[f64], s: usize) {
        gather(q, self.shape, s, &mut self.row);
        self.h[s] = self.kind.eval(&self.row);
    }

    fn refresh_gap(&mut self, q: &[f64]) {
        let gamma = self.mdp.gamma();
        self.f_sq = 0.0;
        for s in 0..self.shape.n_states {
            for a in 0..self.shape.n_actions {
                let i = self.shape.index(s, a);
                let next: f64 = self.mdp.transition_row(s, a).iter().zip(&self.h).map(|(p, v)| p * v).sum();
                self.gap[i] = self.reward[i] + gamma * next - q[i];
                let f = self.d[i] * self.gap[i];
                self.f_sq += f * f;
            }
        }
    }

    /// Call after `q[index(s,a)]` changed.
    fn update(&mut self, q: &[f64], s: usize) {
        self.refresh_h(q, s);
        self.refresh_gap(q);
    }
}

/// `C` of the moment bound: `ln|A|/λ` for lse and fixed-temperature
/// Boltzmann, 0 otherwise.
pub fn moment_constant(kind: OperatorKind, n_actions: usize) -> f64 {
    match kind {
        OperatorKind::Lse(l) | OperatorKind::Boltzmann(l) => (n_actions as f64).ln() / l,
        OperatorKind::Max | OperatorKind::Mellowmax(_) => 0.0,
    }
}

fn run(
    mdp: &MdpModel,
    kind: OperatorKind,
    anneal: Option<AnnealSchedule>,
    steps: &StepSizeSchedule,
    opts: RunOptions,
    q_ref: &[f64],
) -> Result<LearningRun> {
    let shape = mdp.shape();
    shape.check_len(q_ref.len())?;
    validate_schedule(steps).into_result()?;
    kind.validate()?;
    if let Some(a) = &anneal {
        a.validate()?;
    }
    if opts.stride == 0 {
        return Err(Error::Domain("stride must be at least 1".into()));
    }
    let dist = build_sampling_distribution(mdp)?;
    let mut rng = stream(opts.seed, streams::SAMPLING);
    let gamma = mdp.gamma();
    let n = shape.len();
    let n_actions = shape.n_actions;

    // the noise is measured against the max-based field when annealing
    let field_kind = if anneal.is_some() { OperatorKind::Max } else { kind };
    let moment_c = moment_constant(field_kind, n_actions);
    let r_max = mdp.r_max();

    let mut q = vec![0.0; n];
    let mut field = MeanField::new(mdp, field_kind, dist.d_diag(), &q);
    let mut q_sq = 0.0;
    let mut row = vec![0.0; n_actions];

    let mut buckets = vec![Moments::default(); n];
    let mut components = vec![Moments::default(); n];
    let mut eps_sq_m = Moments::default();
    let mut moment_worst = f64::INFINITY;
    let mut residual_worst = anneal.map(|_| f64::INFINITY);
    let mut residual_max = anneal.map(|_| 0.0f64);

    let mut records = Vec::new();
    let mut snapshots = Vec::new();

    for k in 0..opts.iterations {
        let alpha = steps.alpha(k);
        let step_kind = match &anneal {
            Some(a) => kind.with_temperature(a.lambda(k)),
            None => kind,
        };
        let sample = sample_transition(mdp, &dist, &mut rng);
        let i = shape.index(sample.s, sample.a);

        gather(&q, shape, sample.s_next, &mut row);
        let h_step = step_kind.eval(&row);
        let delta = sample.r + gamma * h_step - q[i];
        let delta_field = if let Some(a) = &anneal {
            let h_max = OperatorKind::Max.eval(&row);
            let w = gamma * (h_step - h_max);
            let slack = a.residual_bound(k, gamma, n_actions) - w.abs();
            residual_worst = residual_worst.map(|m| m.min(slack));
            residual_max = residual_max.map(|m| m.max(w.abs()));
            sample.r + gamma * h_max - q[i]
        } else {
            delta
        };

        let f_i = field.d[i] * field.gap[i];
        let eps_sq = delta_field * delta_field - 2.0 * delta_field * f_i + field.f_sq;
        let bound = 3.0 * r_max * r_max + moment_c + 3.0 * (gamma * gamma + 1.0) * q_sq;
        moment_worst = moment_worst.min(bound - eps_sq);
        eps_sq_m.push(eps_sq);
        buckets[i].push(delta_field - field.gap[i]);
        for (j, c) in components.iter_mut().enumerate() {
            let hit = if j == i { delta_field } else { 0.0 };
            c.push(hit - field.d[j] * field.gap[j]);
        }

        if k % opts.stride == 0 {
            records.push(RunRecord {
                k,
                error_inf: inf_dist(&q, q_ref),
                alpha,
                lambda: step_kind.temperature(),
                eps_sq,
                moment_bound: bound,
            });
            snapshots.push(q.clone());
        }

        let old = q[i];
        q[i] += alpha * delta;
        q_sq += q[i] * q[i] - old * old;
        if !q[i].is_finite() {
            return Err(Error::Numeric(format!("iterate diverged at step {k}")));
        }
        field.update(&q, sample.s);
        if k % 4096 == 4095 {
            q_sq = q.iter().map(|v| v * v).sum();
        }
    }

    let final_error = inf_dist(&q, q_ref);
    Ok(LearningRun {
        seed: opts.seed,
        kind,
        anneal,
        stride: opts.stride,
        records,
        snapshots,
        final_error,
        final_q: q,
        noise: NoiseStats {
            buckets,
            components,
            eps_sq: eps_sq_m,
            moment_worst_slack: moment_worst,
            moment_constant: moment_c,
            r_max,
            residual_worst_slack: residual_worst,
            residual_max,
        },
    })
}

/// Runs Q-learning with a fixed operator from `Q_0 = 0`, tracking the
/// `∞`-distance to `q_ref`.
pub fn run_learning(
    mdp: &MdpModel,
    kind: OperatorKind,
    steps: &StepSizeSchedule,
    opts: RunOptions,
    q_ref: &[f64],
) -> Result<LearningRun> {
    run(mdp, kind, None, steps, opts, q_ref)
}

/// Runs Q-learning with the Boltzmann operator at temperature `λ_k` in
/// step `k`, tracking the distance to `q_ref` (normally the fixed point of
/// the max operator).
pub fn run_annealed_boltzmann(
    mdp: &MdpModel,
    steps: &StepSizeSchedule,
    anneal: &AnnealSchedule,
    opts: RunOptions,
    q_ref: &[f64],
) -> Result<LearningRun> {
    run(mdp, OperatorKind::Boltzmann(anneal.lambda0), Some(*anneal), steps, opts, q_ref)
}

/// Number of worker threads: `QODE_THREADS` when set to a positive
/// integer, otherwise rayon's default.
pub fn thread_count() -> usize {
    std::env::var("QODE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Maps `f` over `items` in parallel, preserving order.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// One line of a noise report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCheck {
    pub name: String,
    pub worst_slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub checks: Vec<NoiseCheck>,
}

impl NoiseReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn ensure(self) -> Result<Self> {
        match self.checks.iter().find(|c| !c.passed) {
            None => Ok(self),
            Some(c) => Err(Error::PropertyViolation(format!("{} (worst slack {:e})", c.name, c.worst_slack))),
        }
    }
}

/// Checks that each bucket mean and each component mean of the noise lie
/// within four standard errors of zero, that the pointwise moment bound
/// held at every step, and for annealed runs that the Boltzmann residual
/// stayed below `γ ln|A| / λ_k`.
pub fn noise_report(run: &LearningRun) -> NoiseReport {
    let band_slack = |m: &[Moments]| {
        m.iter()
            .filter(|b| b.count > 1)
            .map(|b| b.band() - b.mean.abs())
            .fold(f64::INFINITY, f64::min)
    };
    let mut checks = Vec::new();
    let bucket = band_slack(&run.noise.buckets);
    checks.push(NoiseCheck { name: "martingale_bucket_means".into(), worst_slack: bucket, passed: bucket >= 0.0 });
    let comp = band_slack(&run.noise.components);
    checks.push(NoiseCheck { name: "martingale_component_means".into(), worst_slack: comp, passed: comp >= 0.0 });
    let moment = run.noise.moment_worst_slack;
    checks.push(NoiseCheck { name: "second_moment_bound".into(), worst_slack: moment, passed: moment >= -1e-10 });
    if let Some(res) = run.noise.residual_worst_slack {
        checks.push(NoiseCheck { name: "annealed_residual_bound".into(), worst_slack: res, passed: res >= -1e-10 });
    }
    NoiseReport { checks }
}
