//! Iteration engines and the `run` driver.
//!
//! Each `step_*` function is pure: it takes the current state and returns the
//! next one. [`run`] strings steps together, evaluates diagnostics at the
//! requested level and collects a [`Trace`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, ReferencePair, Setting, TraceRecord};
use crate::error::{Error, Result};
use crate::functions::{recover_conj_subgradient, ProxTerm, SmoothTerm};
use crate::linops::LinearMap;
use crate::problems::ProblemInstance;
use crate::schedules::{MomentumSchedule, Regime};
use crate::{serde_util, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub t: usize,
    #[serde(with = "serde_util::vector")]
    pub x: Vector,
    #[serde(with = "serde_util::vector")]
    pub z: Vector,
    #[serde(default, with = "serde_util::opt_vector")]
    pub y: Option<Vector>,
    #[serde(with = "serde_util::vector")]
    pub u: Vector,
    #[serde(with = "serde_util::vector")]
    pub v: Vector,
    #[serde(default, with = "serde_util::opt_vector")]
    pub z_hat: Option<Vector>,
    pub a_t: f64,
    /// `∇̃h*(v^t)` recovered from the dual step that produced `v^t`.
    #[serde(default, with = "serde_util::opt_vector")]
    pub conj_subgrad: Option<Vector>,
}

impl SolverState {
    /// `x = z = x0`, `u = v = u0`.
    pub fn initial(x0: Vector, u0: Vector, a0: f64) -> Self {
        Self {
            t: 0,
            z: x0.clone(),
            x: x0,
            y: None,
            v: u0.clone(),
            u: u0,
            z_hat: None,
            a_t: a0,
            conj_subgrad: None,
        }
    }

    fn strip_auxiliary(mut self) -> Self {
        self.y = None;
        self.z_hat = None;
        self.conj_subgrad = None;
        self
    }
}

fn averaged(prev: &Vector, fresh: &Vector, a: f64) -> Vector {
    prev * (1.0 - 1.0 / a) + fresh * (1.0 / a)
}

fn require_momentum(a_next: f64) -> Result<()> {
    if a_next >= 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("momentum value must be at least 1, got {a_next}")))
    }
}

/// `x⁺ = prox_{γg}(x − γ∇f(x))`.
pub fn step_pgd(state: &SolverState, f: &SmoothTerm, g: &ProxTerm, gamma: f64) -> Result<SolverState> {
    let x = g.prox(gamma, &(&state.x - f.grad(&state.x) * gamma))?;
    Ok(SolverState {
        t: state.t + 1,
        z: x.clone(),
        y: Some(state.x.clone()),
        x,
        u: state.u.clone(),
        v: state.v.clone(),
        z_hat: None,
        a_t: 1.0,
        conj_subgrad: None,
    })
}

pub fn step_apgd(state: &SolverState, f: &SmoothTerm, g: &ProxTerm, gamma: f64, a_next: f64) -> Result<SolverState> {
    require_momentum(a_next)?;
    let y = averaged(&state.x, &state.z, a_next);
    let z = g.prox(a_next * gamma, &(&state.z - f.grad(&y) * (a_next * gamma)))?;
    Ok(SolverState {
        t: state.t + 1,
        x: averaged(&state.x, &z, a_next),
        z,
        y: Some(y),
        u: state.u.clone(),
        v: state.v.clone(),
        z_hat: None,
        a_t: a_next,
        conj_subgrad: None,
    })
}

/// FISTA: prox step from the extrapolated point, then `z⁺ = z + a⁺(x⁺ − y)`.
pub fn step_fista(state: &SolverState, f: &SmoothTerm, g: &ProxTerm, gamma: f64, a_next: f64) -> Result<SolverState> {
    require_momentum(a_next)?;
    let y = averaged(&state.x, &state.z, a_next);
    let x = g.prox(gamma, &(&y - f.grad(&y) * gamma))?;
    let z = &state.z + (&x - &y) * a_next;
    Ok(SolverState {
        t: state.t + 1,
        x,
        z,
        y: Some(y),
        u: state.u.clone(),
        v: state.v.clone(),
        z_hat: None,
        a_t: a_next,
        conj_subgrad: None,
    })
}

/// Proximal alternating predictor–corrector step.
pub fn step_papc(state: &SolverState, f: &SmoothTerm, h: &ProxTerm, k: &LinearMap, gamma: f64, tau: f64) -> Result<SolverState> {
    let base = &state.x - f.grad(&state.x) * gamma;
    let x_hat = &base - k.adjoint_apply(&state.u)? * gamma;
    let k_hat = k.apply(&x_hat)?;
    let u = h.conj_prox(tau, &(&state.u + &k_hat * tau))?;
    let x = &base - k.adjoint_apply(&u)? * gamma;
    let w = recover_conj_subgradient(h, &u, &state.u, &k_hat, tau)?;
    Ok(SolverState {
        t: state.t + 1,
        z: x.clone(),
        y: Some(state.x.clone()),
        x,
        v: u.clone(),
        u,
        z_hat: Some(x_hat),
        a_t: 1.0,
        conj_subgrad: Some(w),
    })
}

/// Condat–Vũ step.
pub fn step_cv(
    state: &SolverState,
    f: &SmoothTerm,
    g: &ProxTerm,
    h: &ProxTerm,
    k: &LinearMap,
    gamma: f64,
    tau: f64,
) -> Result<SolverState> {
    let arg = &state.x - (f.grad(&state.x) + k.adjoint_apply(&state.u)?) * gamma;
    let x = g.prox(gamma, &arg)?;
    let extrap = &x * 2.0 - &state.x;
    let u = h.conj_prox(tau, &(&state.u + k.apply(&extrap)? * tau))?;
    Ok(SolverState {
        t: state.t + 1,
        z: x.clone(),
        y: None,
        x,
        v: u.clone(),
        u,
        z_hat: None,
        a_t: 1.0,
        conj_subgrad: None,
    })
}

/// How the dual prox is evaluated in the accelerated primal–dual step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualPath {
    /// Linear constraints use `v + s(Kẑ − b)`; everything else the generic prox.
    #[default]
    Auto,
    /// Always `prox_{s h*}(v + sKẑ)` through the Moreau identity.
    Generic,
}

/// `v⁺` from `v` and `Kẑ` with dual stepsize `s = τ/a⁺`.
pub fn dual_update(h: &ProxTerm, v: &Vector, k_zhat: &Vector, s: f64, path: DualPath) -> Result<Vector> {
    match (path, h.affine_target()) {
        (DualPath::Auto, Some(b)) => {
            if b.len() != v.len() {
                return Err(Error::dim("dual_update", b.len(), v.len()));
            }
            Ok(v + (k_zhat - b) * s)
        }
        _ => h.conj_prox(s, &(v + k_zhat * s)),
    }
}

/// Accelerated primal–dual predictor–corrector step for
/// `g = (μ_g/2)||·||²`.
#[allow(clippy::too_many_arguments)]
pub fn step_apapc(
    state: &SolverState,
    f: &SmoothTerm,
    mu_g: f64,
    h: &ProxTerm,
    k: &LinearMap,
    gamma: f64,
    tau: f64,
    a_next: f64,
    path: DualPath,
) -> Result<SolverState> {
    require_momentum(a_next)?;
    let a = a_next;
    let y = averaged(&state.x, &state.z, a);
    let shrink = 1.0 + a * gamma * mu_g;
    let base = &state.z - f.grad(&y) * (a * gamma);
    let z_hat = (&base - k.adjoint_apply(&state.v)? * (a * gamma)) / shrink;
    let s = tau / a;
    let k_zhat = k.apply(&z_hat)?;
    let v = dual_update(h, &state.v, &k_zhat, s, path)?;
    let z = (&base - k.adjoint_apply(&v)? * (a * gamma)) / shrink;
    let w = recover_conj_subgradient(h, &v, &state.v, &k_zhat, s)?;
    Ok(SolverState {
        t: state.t + 1,
        x: averaged(&state.x, &z, a),
        u: averaged(&state.u, &v, a),
        z,
        v,
        y: Some(y),
        z_hat: Some(z_hat),
        a_t: a,
        conj_subgrad: Some(w),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Pgd,
    Apgd,
    Fista,
    Papc,
    Cv,
    Apapc,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Pgd => "pgd",
            Engine::Apgd => "apgd",
            Engine::Fista => "fista",
            Engine::Papc => "papc",
            Engine::Cv => "cv",
            Engine::Apapc => "apapc",
        }
    }

    pub fn uses_schedule(self) -> bool {
        matches!(self, Engine::Apgd | Engine::Fista | Engine::Apapc)
    }

    pub fn is_primal(self) -> bool {
        matches!(self, Engine::Pgd | Engine::Apgd | Engine::Fista)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "eps", rename_all = "snake_case")]
pub enum StopRule {
    #[default]
    None,
    FixedIters,
    /// Stop once the Lagrangian gap falls to `eps` or below.
    GapBelow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckLevel {
    #[default]
    Off,
    Lyapunov,
    FullInequality,
}

/// Test hook that corrupts each step before diagnostics see it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Noise norm relative to the length chosen by `scale`.
    pub relative: f64,
    #[serde(default)]
    pub scale: NoiseScale,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// `||z⁺ − z||`: the noise shrinks with the steps.
    #[default]
    Step,
    /// `||z⁺||`: the noise persists at convergence.
    Iterate,
}

/// Tolerances used by `run` to flag violations.
pub const LYAPUNOV_TOL: f64 = 1e-9;
pub const APGD_STEP_TOL: f64 = 1e-8;
pub const APAPC_STEP_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub gamma: f64,
    pub tau: f64,
    pub schedule: MomentumSchedule,
    pub max_iters: usize,
    pub stop: StopRule,
    pub check_level: CheckLevel,
    /// Abort with a verification error at the first violation.
    pub strict: bool,
    /// Keep every state in the trace (memory grows with `max_iters`).
    pub store_states: bool,
    /// Finish accelerated primal runs with one PGD step from the last `x`.
    pub final_pgd_polish: bool,
    pub dual_path: DualPath,
    pub x0: Option<Vector>,
    pub u0: Option<Vector>,
    pub perturbation: Option<Perturbation>,
}

impl SolveConfig {
    pub fn new(gamma: f64, tau: f64, schedule: MomentumSchedule, max_iters: usize) -> Self {
        Self {
            gamma,
            tau,
            schedule,
            max_iters,
            stop: StopRule::None,
            check_level: CheckLevel::Off,
            strict: false,
            store_states: false,
            final_pgd_polish: false,
            dual_path: DualPath::Auto,
            x0: None,
            u0: None,
            perturbation: None,
        }
    }

    pub fn with_checks(mut self, level: CheckLevel) -> Self {
        self.check_level = level;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub iteration: usize,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub engine: Engine,
    pub records: Vec<TraceRecord>,
    /// All states when `store_states` is set, otherwise empty.
    pub states: Vec<SolverState>,
    pub final_state: SolverState,
    pub polished: Option<Vector>,
    pub stopped_early: bool,
    pub violations: Vec<Violation>,
    /// Lyapunov values never increased beyond tolerance (vacuous when not
    /// evaluated).
    pub lyapunov_monotone: bool,
}

impl Trace {
    pub fn iterations(&self) -> usize {
        self.final_state.t
    }
}

fn tol_err(msg: String) -> Error {
    Error::Config(msg)
}

/// Checks the stepsize and structure preconditions of `engine` on `problem`.
pub fn validate(engine: Engine, problem: &ProblemInstance, config: &SolveConfig) -> Result<()> {
    let (gamma, tau) = (config.gamma, config.tau);
    let lf = problem.f.lipschitz();
    let norm_sq = problem.bounds().op_norm_sq;
    let slack = 1.0 + 1e-12;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(tol_err(format!("gamma must be positive, got {gamma}")));
    }
    if !engine.is_primal() && !(tau > 0.0 && tau.is_finite()) {
        return Err(tol_err(format!("tau must be positive, got {tau}")));
    }
    let regime = config.schedule.regime();
    if engine.uses_schedule() && config.schedule.materialize(2).get(1).is_some_and(|&a| a < 1.0) {
        return Err(tol_err("schedule emits a_1 < 1".into()));
    }
    match engine {
        Engine::Pgd | Engine::Apgd | Engine::Fista => {
            if problem.h != ProxTerm::Zero {
                return Err(tol_err(format!("{} needs h = 0; put the nonsmooth term in g", engine.name())));
            }
            if engine == Engine::Pgd {
                if gamma * lf >= 2.0 {
                    return Err(tol_err(format!("pgd needs gamma < 2/L_f: gamma L_f = {}", gamma * lf)));
                }
            } else {
                if gamma * lf > slack {
                    return Err(tol_err(format!("{} needs gamma <= 1/L_f: gamma L_f = {}", engine.name(), gamma * lf)));
                }
                if !(regime.is_apgd() || matches!(regime, Regime::ConstantOne | Regime::Explicit)) {
                    return Err(tol_err(format!("schedule {} does not apply to {}", regime.name(), engine.name())));
                }
            }
        }
        Engine::Papc => {
            if problem.g != ProxTerm::Zero {
                return Err(tol_err("papc needs g = 0".into()));
            }
            if gamma * lf >= 2.0 {
                return Err(tol_err(format!("papc needs gamma < 2/L_f: gamma L_f = {}", gamma * lf)));
            }
            if gamma * tau * norm_sq > slack {
                return Err(tol_err(format!("papc needs gamma tau ||K||^2 <= 1, got {}", gamma * tau * norm_sq)));
            }
        }
        Engine::Cv => {
            let lhs = gamma * (lf / 2.0 + tau * norm_sq);
            if lhs > slack {
                return Err(tol_err(format!("cv needs gamma (L_f/2 + tau ||K||^2) <= 1, got {lhs}")));
            }
        }
        Engine::Apapc => {
            let Some(q) = problem.g.as_quad_scaling() else {
                return Err(tol_err(format!("apapc needs g = (mu_g/2)||x||^2, got {}", problem.g.kind_name())));
            };
            let a0 = config.schedule.current();
            let coupling = gamma * tau * norm_sq;
            let limit = 1.0 + a0 * gamma * q.mu_g;
            if coupling > limit * slack {
                return Err(tol_err(format!(
                    "gamma tau ||K||^2 = {coupling} > 1 + a_0 gamma mu_g = {limit}"
                )));
            }
            if gamma * lf > slack {
                return Err(tol_err(format!("apapc needs gamma <= 1/L_f: gamma L_f = {}", gamma * lf)));
            }
            if regime.is_bc() && gamma * lf > 0.5 * slack {
                return Err(tol_err(format!("{} needs gamma <= 1/(2 L_f)", regime.name())));
            }
            match regime {
                r if r.is_s() && problem.h.strong_mu_conj() <= 0.0 => {
                    return Err(tol_err(format!("{} needs a smooth h", r.name())));
                }
                Regime::RegB | Regime::RegBCapped if problem.bounds().lam_min <= 0.0 => {
                    return Err(tol_err("regB needs lambda_min(KK*) > 0".into()));
                }
                Regime::RegC | Regime::RegCCapped if problem.h.affine_target().is_none() => {
                    return Err(tol_err("regC needs h = indicator of {b}".into()));
                }
                r if r.is_apgd() => {
                    return Err(tol_err(format!("schedule {} does not apply to apapc", r.name())));
                }
                _ => {}
            }
        }
    }
    if let Some(x0) = &config.x0 {
        if x0.len() != problem.dim() {
            return Err(Error::dim("x0", problem.dim(), x0.len()));
        }
    }
    if let Some(u0) = &config.u0 {
        if u0.len() != problem.k.rows() {
            return Err(Error::dim("u0", problem.k.rows(), u0.len()));
        }
    }
    if config.check_level != CheckLevel::Off && problem.reference.is_none() {
        return Err(tol_err("diagnostics need a problem with a reference solution".into()));
    }
    if matches!(config.stop, StopRule::GapBelow(_)) && problem.reference.is_none() {
        return Err(tol_err("gap-based stopping needs a reference solution".into()));
    }
    Ok(())
}

/// Which Lyapunov function certifies a run.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Certificate {
    Apgd,
    RegS,
    RegBC { lam: f64, feasibility: bool },
    None,
}

fn certificate(engine: Engine, problem: &ProblemInstance, regime: Regime) -> Certificate {
    match engine {
        Engine::Pgd | Engine::Apgd | Engine::Fista => Certificate::Apgd,
        Engine::Papc => Certificate::RegS,
        Engine::Cv => Certificate::None,
        Engine::Apapc => match regime {
            Regime::RegB | Regime::RegBCapped => Certificate::RegBC {
                lam: problem.bounds().lam_min,
                feasibility: false,
            },
            Regime::RegC | Regime::RegCCapped => Certificate::RegBC {
                lam: problem.bounds().lam_min_plus,
                feasibility: true,
            },
            _ => Certificate::RegS,
        },
    }
}

struct Recorder<'a> {
    setting: Option<Setting<'a>>,
    engine: Engine,
    certificate: Certificate,
    level: CheckLevel,
}

impl Recorder<'_> {
    fn record(&self, prev: Option<&SolverState>, next: &SolverState) -> Result<TraceRecord> {
        let mut rec = TraceRecord::empty(next.t, next.a_t);
        let Some(s) = &self.setting else {
            return Ok(rec);
        };
        rec.lag_gap = Some(diagnostics::ext_to_f64(s.lagrangian_gap(&next.x, &next.u)?));
        rec.primal_gap = s.primal_gap(&next.x)?;
        rec.dist_z_sq = Some(s.dist_sq(&next.z));
        rec.dist_v_sq = Some(s.dual_dist_sq(&next.v));
        rec.feas_sq = s.feasibility_sq(&next.x)?;
        if self.level == CheckLevel::Off {
            return Ok(rec);
        }
        let a = next.a_t;
        rec.lyap = match self.certificate {
            Certificate::Apgd => Some(s.lyapunov_apgd(next, a)?),
            Certificate::RegS => Some(s.lyapunov_reg_s(next, a)?.total()),
            Certificate::RegBC { lam, feasibility } => Some(s.lyapunov_reg_bc(next, a, lam, feasibility)?.total()),
            Certificate::None => None,
        };
        if self.level == CheckLevel::FullInequality {
            if let Some(prev) = prev {
                let check = match self.engine {
                    Engine::Pgd | Engine::Apgd => Some(s.step_inequality_apgd(prev, next, a)?),
                    Engine::Papc | Engine::Apapc => Some(s.step_inequality_apapc(prev, next, a)?),
                    Engine::Fista | Engine::Cv => None,
                };
                if let Some(c) = check {
                    rec.ineq_slack = Some(c.slack());
                    rec.ineq_scale = Some(c.scale());
                }
            }
        }
        Ok(rec)
    }

    fn step_tol(&self) -> f64 {
        if self.engine.is_primal() {
            APGD_STEP_TOL
        } else {
            APAPC_STEP_TOL
        }
    }
}

fn perturb(next: &mut SolverState, prev: &SolverState, p: &Perturbation, rng: &mut ChaCha8Rng, avg_weight: f64) {
    let length = match p.scale {
        NoiseScale::Step => (&next.z - &prev.z).norm(),
        NoiseScale::Iterate => next.z.norm(),
    };
    let noise = Vector::from_fn(next.z.len(), |_, _| StandardNormal.sample(rng));
    let norm = noise.norm();
    if norm == 0.0 || length == 0.0 {
        return;
    }
    next.z += noise * (p.relative * length / norm);
    // keep the averaging identity intact so only the step itself is wrong
    next.x = averaged(&prev.x, &next.z, avg_weight);
}

/// Runs `engine` on `problem` for up to `config.max_iters` iterations.
pub fn run(engine: Engine, problem: &ProblemInstance, config: &SolveConfig) -> Result<Trace> {
    validate(engine, problem, config)?;
    let (gamma, tau) = (config.gamma, config.tau);
    let mut schedule = config.schedule.restarted();
    let a0 = match engine {
        _ if engine.uses_schedule() => schedule.current(),
        Engine::Pgd => 0.0,
        _ => 1.0,
    };
    let x0 = config.x0.clone().unwrap_or_else(|| Vector::zeros(problem.dim()));
    let u0 = config.u0.clone().unwrap_or_else(|| Vector::zeros(problem.k.rows()));
    let mut state = SolverState::initial(x0, u0, a0);

    let reference: Option<&ReferencePair> = problem.reference.as_ref();
    let recorder = Recorder {
        setting: reference.map(|r| Setting::new(problem, r, gamma, tau)),
        engine,
        certificate: certificate(engine, problem, schedule.regime()),
        level: config.check_level,
    };
    let mut rng = config.perturbation.map(|p| ChaCha8Rng::seed_from_u64(p.seed));
    let mu_g = problem.g.strong_mu();

    let mut records = vec![recorder.record(None, &state)?];
    let mut states = Vec::new();
    let keep = |s: &SolverState| {
        if config.check_level == CheckLevel::Off {
            s.clone().strip_auxiliary()
        } else {
            s.clone()
        }
    };
    if config.store_states {
        states.push(keep(&state));
    }
    let mut violations = Vec::new();
    let mut lyapunov_monotone = true;
    let mut stopped_early = false;

    for _ in 0..config.max_iters {
        if let (StopRule::GapBelow(eps), Some(g)) = (config.stop, records.last().and_then(|r| r.lag_gap)) {
            if g <= eps {
                stopped_early = true;
                break;
            }
        }
        let a_next = if engine.uses_schedule() { schedule.advance()? } else { 1.0 };
        let mut next = match engine {
            Engine::Pgd => step_pgd(&state, &problem.f, &problem.g, gamma)?,
            Engine::Apgd => step_apgd(&state, &problem.f, &problem.g, gamma, a_next)?,
            Engine::Fista => step_fista(&state, &problem.f, &problem.g, gamma, a_next)?,
            Engine::Papc => step_papc(&state, &problem.f, &problem.h, &problem.k, gamma, tau)?,
            Engine::Cv => step_cv(&state, &problem.f, &problem.g, &problem.h, &problem.k, gamma, tau)?,
            Engine::Apapc => step_apapc(
                &state,
                &problem.f,
                mu_g,
                &problem.h,
                &problem.k,
                gamma,
                tau,
                a_next,
                config.dual_path,
            )?,
        };
        if let (Some(p), Some(rng)) = (&config.perturbation, rng.as_mut()) {
            let a = next.a_t.max(1.0);
            perturb(&mut next, &state, p, rng, a);
        }
        let rec = recorder.record(Some(&state), &next)?;

        let mut problems_here = Vec::new();
        if let (Some(prev), Some(cur)) = (records.last().and_then(|r| r.lyap), rec.lyap) {
            let guaranteed = !matches!(engine, Engine::Fista | Engine::Cv);
            if guaranteed && !diagnostics::lyapunov_step_ok(prev, cur, LYAPUNOV_TOL) {
                lyapunov_monotone = false;
                problems_here.push(format!("Lyapunov value rose from {prev:e} to {cur:e}"));
            }
        }
        if rec.violates(recorder.step_tol()) {
            problems_here.push(format!(
                "step inequality slack {:e} below tolerance (scale {:e})",
                rec.ineq_slack.unwrap_or(f64::NAN),
                rec.ineq_scale.unwrap_or(f64::NAN)
            ));
        }
        for detail in problems_here {
            if config.strict {
                return Err(Error::Verification { iteration: next.t, detail });
            }
            violations.push(Violation { iteration: next.t, detail });
        }

        records.push(rec);
        if config.store_states {
            states.push(keep(&next));
        }
        state = next;
    }

    let polished = if config.final_pgd_polish && engine.is_primal() {
        Some(step_pgd(&state, &problem.f, &problem.g, gamma)?.x)
    } else {
        None
    };
    Ok(Trace {
        engine,
        records,
        states,
        final_state: state,
        polished,
        stopped_early,
        violations,
        lyapunov_monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::SmoothTerm;
    use crate::problems::{self, RegimeTag};
    use crate::schedules::ScheduleParams;
    use nalgebra::{dvector, DMatrix};

    fn one_d(l: f64, b: f64) -> SmoothTerm {
        SmoothTerm::quadratic(DMatrix::from_element(1, 1, l), dvector![b], None).unwrap()
    }

    fn start(x: f64) -> SolverState {
        SolverState::initial(dvector![x], dvector![0.0], 0.0)
    }

    #[test]
    fn pgd_examples() {
        let s = step_pgd(&start(1.0), &one_d(1.0, 0.0), &ProxTerm::Zero, 1.0).unwrap();
        assert_eq!(s.x, dvector![0.0]);
        // ½(x + 2)² = ½x² + 2x + 2, i.e. A = 1, b = −2
        let s = step_pgd(&start(0.0), &one_d(1.0, -2.0), &ProxTerm::nonneg(), 1.0).unwrap();
        assert_eq!(s.x, dvector![0.0]);
        let s = step_pgd(&start(1.0), &one_d(4.0, 0.0), &ProxTerm::Zero, 0.25).unwrap();
        assert_eq!(s.x, dvector![0.0]);
    }

    #[test]
    fn fista_soft_threshold() {
        // f = ½(x − 3)², g = |x|, y⁰ = 0 with a = 1
        let s = step_fista(&start(0.0), &one_d(1.0, 3.0), &ProxTerm::L1Norm { weight: 1.0 }, 1.0, 1.0).unwrap();
        assert_eq!(s.x, dvector![2.0]);
    }

    #[test]
    fn apgd_first_step_lands_on_z() {
        let f = one_d(5.0, 0.0);
        let s = step_apgd(&start(2.0), &f, &ProxTerm::Zero, 0.2, 1.0).unwrap();
        assert_eq!(s.z, dvector![0.0]);
        assert_eq!(s.x, s.z);
    }

    #[test]
    fn apgd_linear_schedule_weights() {
        let f = SmoothTerm::quadratic(DMatrix::from_diagonal(&dvector![1.0, 0.3, 0.05]), dvector![1.0, -1.0, 0.5], None)
            .unwrap();
        let mut st = SolverState::initial(dvector![3.0, -2.0, 1.0], dvector![0.0], 0.0);
        let mut zs = Vec::new();
        for t in 1..=5 {
            st = step_apgd(&st, &f, &ProxTerm::Zero, 1.0, (t as f64 + 1.0) / 2.0).unwrap();
            zs.push(st.z.clone());
        }
        let t = 5.0;
        let mut expect = Vector::zeros(3);
        for (k, z) in zs.iter().enumerate() {
            expect += z * (2.0 * (k as f64 + 1.0) / (t * (t + 1.0)));
        }
        assert!((st.x - expect).norm() < 1e-12);
    }

    #[test]
    fn papc_with_zero_h_is_gradient_descent() {
        let f = one_d(2.0, 1.0);
        let k = LinearMap::identity(1);
        let st = step_papc(&start(3.0), &f, &ProxTerm::Zero, &k, 0.3, 1.0).unwrap();
        assert_eq!(st.u, dvector![0.0]);
        assert!((st.x[0] - (3.0 - 0.3 * 5.0)).abs() < 1e-15);
    }

    #[test]
    fn dual_paths_agree_for_linear_constraints() {
        let h = ProxTerm::affine_indicator(dvector![1.0, -2.0]);
        let v = dvector![0.3, 0.4];
        let kz = dvector![2.0, 5.0];
        let a = dual_update(&h, &v, &kz, 0.7, DualPath::Auto).unwrap();
        let b = dual_update(&h, &v, &kz, 0.7, DualPath::Generic).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn run_zero_iterations() {
        let p = problems::gen_quadratic_reg_s(4, 3, 0.0, 10.0, 1).unwrap();
        let sched = MomentumSchedule::new(Regime::ApgdSublinear, ScheduleParams::default()).unwrap();
        let p = ProblemInstance::primal(p.f.clone(), ProxTerm::Zero, RegimeTag::PrimalOnly, 0).unwrap();
        let cfg = SolveConfig::new(1.0 / p.f.lipschitz(), 0.0, sched, 0).with_checks(CheckLevel::Lyapunov);
        let trace = run(Engine::Pgd, &p, &cfg).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.final_state.t, 0);
    }

    #[test]
    fn run_rejects_oversized_apgd_step() {
        let p = problems::gen_lasso_like(6, 8, 0.1, 3).unwrap();
        let sched = MomentumSchedule::new(Regime::ApgdSublinear, ScheduleParams::default()).unwrap();
        let cfg = SolveConfig::new(3.0 / p.f.lipschitz(), 0.0, sched, 10);
        assert!(matches!(run(Engine::Apgd, &p, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn strict_mode_names_iteration() {
        let p = problems::gen_quadratic_reg_s(6, 4, 0.0, 10.0, 2).unwrap();
        let b = p.bounds();
        let gamma = 1.0 / p.f.lipschitz();
        let tau = 1.0 / (gamma * b.op_norm_sq);
        let params = ScheduleParams { tau, mu_hconj: 1.0, ..Default::default() };
        let sched = MomentumSchedule::new(Regime::RegS, params).unwrap();
        let mut cfg = SolveConfig::new(gamma, tau, sched, 50).with_checks(CheckLevel::FullInequality);
        cfg.strict = true;
        cfg.perturbation = Some(Perturbation { relative: 0.5, scale: NoiseScale::Step, seed: 9 });
        match run(Engine::Apapc, &p, &cfg) {
            Err(Error::Verification { iteration, .. }) => assert!(iteration >= 1),
            other => panic!("expected a verification error, got {other:?}"),
        }
    }
}
