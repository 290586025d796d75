//! Run configuration and the resolution of symbolic stepsize rules.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{self, ProblemInstance};
use crate::schedules::{ApgdForm, MomentumSchedule, Regime, ScheduleParams};
use crate::solvers::{self, CheckLevel, DualPath, Engine, SolveConfig, StopRule};

/// Seeded generator call, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    QuadraticRegS {
        n: usize,
        m: usize,
        #[serde(default)]
        mu_g: f64,
        #[serde(default = "default_cond")]
        cond_f: f64,
    },
    LassoLike {
        n: usize,
        m: usize,
        lam_l1: f64,
    },
    Linconstrained {
        n: usize,
        m_rank: usize,
        #[serde(default)]
        mu_g: f64,
    },
    Consensus {
        n_agents: usize,
        dim: usize,
        #[serde(default)]
        mu_g: f64,
    },
    RegB {
        n: usize,
        lam_l1: f64,
        #[serde(default = "default_cond")]
        cond_f: f64,
    },
    StronglyConvex {
        n: usize,
        cond: f64,
    },
    FlatPrimal {
        n: usize,
        flat: usize,
        #[serde(default = "default_cond")]
        cond: f64,
    },
    FlatLinconstrained {
        n: usize,
        m_rank: usize,
        flat: usize,
    },
}

fn default_cond() -> f64 {
    100.0
}

impl GeneratorSpec {
    pub fn generate(&self, seed: u64) -> Result<ProblemInstance> {
        match *self {
            GeneratorSpec::QuadraticRegS { n, m, mu_g, cond_f } => problems::gen_quadratic_reg_s(n, m, mu_g, cond_f, seed),
            GeneratorSpec::LassoLike { n, m, lam_l1 } => problems::gen_lasso_like(n, m, lam_l1, seed),
            GeneratorSpec::Linconstrained { n, m_rank, mu_g } => problems::gen_linconstrained(n, m_rank, mu_g, seed),
            GeneratorSpec::Consensus { n_agents, dim, mu_g } => problems::gen_consensus(n_agents, dim, mu_g, seed),
            GeneratorSpec::RegB { n, lam_l1, cond_f } => problems::gen_reg_b(n, lam_l1, cond_f, seed),
            GeneratorSpec::StronglyConvex { n, cond } => problems::gen_strongly_convex(n, cond, seed),
            GeneratorSpec::FlatPrimal { n, flat, cond } => problems::gen_flat_primal(n, flat, cond, seed),
            GeneratorSpec::FlatLinconstrained { n, m_rank, flat } => problems::gen_flat_linconstrained(n, m_rank, flat, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Path(PathBuf),
    Generate { generate: GeneratorSpec },
    Inline { instance: Box<ProblemInstance> },
}

impl ProblemSource {
    /// Relative paths resolve against `base`, the directory of the config.
    pub fn load(&self, base: &Path, seed: u64) -> Result<ProblemInstance> {
        match self {
            ProblemSource::Path(p) => {
                let path = if p.is_relative() { base.join(p) } else { p.clone() };
                let text = std::fs::read_to_string(&path)?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("problem {}: {e}", path.display())))
            }
            ProblemSource::Generate { generate } => generate.generate(seed),
            ProblemSource::Inline { instance } => Ok((**instance).clone()),
        }
    }
}

/// Stepsize as a number or a named rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Value(f64),
    Rule(StepRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepRule {
    /// `γ = 1/L_f`.
    #[serde(rename = "inverse_lipschitz")]
    InverseLipschitz,
    /// `γ = min(1/L_f, √(μ_h*/L_f)/‖K‖)`.
    #[serde(rename = "corollary_S")]
    CorollaryS,
    /// `γ = 1/(2L_f)`, the right end of the admissible interval.
    #[serde(rename = "corollary_B")]
    CorollaryB,
    #[serde(rename = "corollary_C")]
    CorollaryC,
    /// `τ = ν/(γ‖K‖²)` for the predictor–corrector methods and the largest
    /// admissible `τ` for Condat–Vũ.
    #[serde(rename = "auto")]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub regime: Regime,
    #[serde(default)]
    pub form: ApgdForm,
    #[serde(default)]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub trace_csv: Option<PathBuf>,
    pub summary_json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub algorithm: Engine,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    pub gamma: StepSpec,
    #[serde(default = "auto_step")]
    pub tau: StepSpec,
    pub max_iters: usize,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default = "default_check")]
    pub check_level: CheckLevel,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub final_pgd_polish: bool,
    #[serde(default)]
    pub dual_path: DualPath,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

fn auto_step() -> StepSpec {
    StepSpec::Rule(StepRule::Auto)
}

fn default_check() -> CheckLevel {
    CheckLevel::Lyapunov
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Every derived constant, embedded in summaries for reproducibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionAudit {
    pub gamma: f64,
    pub tau: f64,
    pub regime: Regime,
    pub a_sharp: Option<f64>,
    pub lam: f64,
    pub nu: f64,
    pub lipschitz: f64,
    pub mu_g: f64,
    pub mu_hconj: f64,
    pub op_norm_sq: f64,
    pub lam_min: f64,
    pub lam_min_plus: f64,
}

/// Default momentum rule for an engine on a problem.
fn default_regime(engine: Engine, problem: &ProblemInstance) -> Regime {
    match engine {
        Engine::Apgd | Engine::Fista => Regime::ApgdSublinear,
        Engine::Apapc => {
            if problem.h.strong_mu_conj() > 0.0 {
                Regime::RegS
            } else if problem.h.affine_target().is_some() {
                Regime::RegC
            } else {
                Regime::RegB
            }
        }
        _ => Regime::ConstantOne,
    }
}

fn resolve_gamma(spec: StepSpec, problem: &ProblemInstance) -> Result<f64> {
    let lf = problem.f.lipschitz();
    let norm_sq = problem.bounds().op_norm_sq;
    match spec {
        StepSpec::Value(v) => Ok(v),
        StepSpec::Rule(StepRule::InverseLipschitz) => Ok(1.0 / lf),
        StepSpec::Rule(StepRule::CorollaryS) => {
            let mu = problem.h.strong_mu_conj();
            if mu <= 0.0 {
                return Err(Error::Config("gamma: corollary_S needs a smooth h".into()));
            }
            Ok((1.0 / lf).min((mu / lf).sqrt() / norm_sq.sqrt()))
        }
        StepSpec::Rule(StepRule::CorollaryB | StepRule::CorollaryC) => Ok(0.5 / lf),
        StepSpec::Rule(StepRule::Auto) => Err(Error::Config("gamma: \"auto\" only applies to tau".into())),
    }
}

fn resolve_tau(spec: StepSpec, engine: Engine, gamma: f64, nu: f64, problem: &ProblemInstance) -> Result<f64> {
    let norm_sq = problem.bounds().op_norm_sq;
    match spec {
        StepSpec::Value(v) => Ok(v),
        _ if engine.is_primal() => Ok(0.0),
        _ if norm_sq == 0.0 => Err(Error::Config("tau: K = 0 leaves tau undetermined".into())),
        StepSpec::Rule(StepRule::Auto | StepRule::CorollaryS | StepRule::CorollaryB | StepRule::CorollaryC) => {
            if engine == Engine::Cv {
                let room = 1.0 / gamma - problem.f.lipschitz() / 2.0;
                if room <= 0.0 {
                    return Err(Error::Config("tau: cv needs gamma < 2/L_f".into()));
                }
                Ok(room / norm_sq)
            } else {
                Ok(nu / (gamma * norm_sq))
            }
        }
        StepSpec::Rule(StepRule::InverseLipschitz) => Err(Error::Config("tau: inverse_lipschitz only applies to gamma".into())),
    }
}

/// Result of resolving a [`RunConfig`] against a problem.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub solve: SolveConfig,
    pub audit: ResolutionAudit,
}

/// Turns symbolic rules into numbers, builds the schedule and checks every
/// precondition before anything runs.
pub fn resolve(config: &RunConfig, problem: &ProblemInstance) -> Result<Resolved> {
    let engine = config.algorithm;
    let spec = config.schedule.unwrap_or(ScheduleSpec {
        regime: default_regime(engine, problem),
        form: ApgdForm::default(),
        nu: None,
    });
    let nu = spec.nu.unwrap_or(1.0);
    let gamma = resolve_gamma(config.gamma, problem)?;
    let tau = resolve_tau(config.tau, engine, gamma, nu, problem)?;
    let b = *problem.bounds();
    let lam = match spec.regime {
        Regime::RegC | Regime::RegCCapped => b.lam_min_plus,
        _ => b.lam_min,
    };
    let params = ScheduleParams {
        gamma,
        tau,
        mu_g: problem.mu_g(),
        mu_hconj: problem.h.strong_mu_conj(),
        lipschitz: problem.f.lipschitz(),
        lam,
        k_norm_sq: b.op_norm_sq,
        nu,
        form: spec.form,
    };
    let schedule = MomentumSchedule::new(spec.regime, params)?;
    let audit = ResolutionAudit {
        gamma,
        tau,
        regime: spec.regime,
        a_sharp: schedule.a_sharp(),
        lam,
        nu,
        lipschitz: params.lipschitz,
        mu_g: params.mu_g,
        mu_hconj: params.mu_hconj,
        op_norm_sq: b.op_norm_sq,
        lam_min: b.lam_min,
        lam_min_plus: b.lam_min_plus,
    };
    let mut solve = SolveConfig::new(gamma, tau, schedule, config.max_iters);
    solve.stop = config.stop;
    solve.check_level = config.check_level;
    solve.strict = config.strict;
    solve.final_pgd_polish = config.final_pgd_polish;
    solve.dual_path = config.dual_path;
    solvers::validate(engine, problem, &solve)?;
    Ok(Resolved { solve, audit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn reg_s_config() -> serde_json::Value {
        json!({
            "problem": {"generate": {"kind": "quadratic_reg_s", "n": 6, "m": 4}},
            "algorithm": "apapc",
            "schedule": {"regime": "regS"},
            "gamma": "corollary_S",
            "max_iters": 10,
            "seed": 3
        })
    }

    #[test]
    fn corollary_s_resolves_to_the_coupling_limit() {
        let cfg: RunConfig = serde_json::from_value(reg_s_config()).unwrap();
        let p = cfg.problem.load(Path::new("."), cfg.seed).unwrap();
        let r = resolve(&cfg, &p).unwrap();
        let lf = p.f.lipschitz();
        let k2 = p.bounds().op_norm_sq;
        let expect = (1.0 / lf).min((1.0 / lf).sqrt() / k2.sqrt());
        assert_eq!(r.audit.gamma, expect);
        assert!((r.audit.gamma * r.audit.tau * k2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oversized_apgd_step_is_rejected() {
        let cfg = json!({
            "problem": {"generate": {"kind": "lasso_like", "n": 5, "m": 8, "lam_l1": 0.1}},
            "algorithm": "apgd",
            "gamma": 1e3,
            "max_iters": 10
        });
        let cfg: RunConfig = serde_json::from_value(cfg).unwrap();
        let p = cfg.problem.load(Path::new("."), 0).unwrap();
        let err = resolve(&cfg, &p).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("gamma <= 1/L_f")), "{err}");
    }

    #[test]
    fn coupling_violation_names_the_condition() {
        let mut v = reg_s_config();
        v["tau"] = json!(1e3);
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        let p = cfg.problem.load(Path::new("."), cfg.seed).unwrap();
        let err = resolve(&cfg, &p).unwrap_err().to_string();
        assert!(err.contains("gamma tau ||K||^2"), "{err}");
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let mut v = reg_s_config();
        v["gama"] = json!(1.0);
        assert!(matches!(RunConfig::from_json(&v.to_string()), Err(Error::Config(_))));
    }

    #[test]
    fn corollary_b_uses_half_inverse_lipschitz() {
        let cfg = json!({
            "problem": {"generate": {"kind": "reg_b", "n": 5, "lam_l1": 0.2}},
            "algorithm": "apapc",
            "schedule": {"regime": "regB", "nu": 0.5},
            "gamma": "corollary_B",
            "max_iters": 1
        });
        let cfg: RunConfig = serde_json::from_value(cfg).unwrap();
        let p = cfg.problem.load(Path::new("."), 0).unwrap();
        let r = resolve(&cfg, &p).unwrap();
        assert_eq!(r.audit.gamma, 0.5 / p.f.lipschitz());
        assert!((r.audit.gamma * r.audit.tau * r.audit.op_norm_sq - 0.5).abs() < 1e-12);
    }
}
