//! Tabular Q-learning with the max, log-sum-exp, mellowmax and Boltzmann
//! operators; the deterministic ODE `dQ/dt = D(F(Q) − Q)` that models it;
//! and numerical certificates for the Lyapunov decay bounds, operator
//! inequalities, contraction and noise conditions behind its convergence.
//!
//! All tables use one flat layout: entry `(s, a)` sits at `a·|S| + s`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fixed_point;
pub mod learner;
pub mod mdp;
pub mod ode;
pub mod operators;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use fixed_point::{
    brute_force_optimal, contraction_modulus_estimate, evaluate_policy, greedy_policy,
    solve_fixed_point, FixedPointResult, PolicyTable,
};
pub use mdp::{
    build_sampling_distribution, flat_index, random_mdp, sample_transition, MdpModel, QTable,
    RandomMdp, SamplingDistribution, Shape, TransitionSample,
};
pub use operators::{
    apply_h, bellman_f, check_operator_bounds, scaling_limit_error, smooth_max, weighted_norm,
    BellmanOperator, BoundReport, NormOrder, OperatorKind, WeightedNorm,
};
pub use ode::{
    certify_decay, choose_even_p, f_infinity_field, integrate, lyapunov_series,
    synthetic_affine_system, vector_field, DecayCertificate, FieldMap, IntegrateOptions, OdeSystem,
    PChoice, Regime, Scheme, Trajectory,
};
pub use learner::{
    noise_report, q_update_step, run_annealed_boltzmann, run_learning, validate_schedule,
    AnnealSchedule, LearningRun, NoiseReport, NoiseStats, RunOptions, ScheduleVerdict,
    StepSizeSchedule,
};
pub use verify::{run_suite, CheckResult, Suite, VerifyReport};
