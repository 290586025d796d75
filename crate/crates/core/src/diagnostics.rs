//! Gaps, Lyapunov values, single-step inequality checks and rate fits.
//!
//! Every check compares a left and right side and reports `rhs − lhs`
//! together with the magnitude `1 + |lhs| + |rhs|`; callers accept a step when
//! the slack is above `−tol · scale`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{ExtReal, ProxTerm, SmoothTerm};
use crate::linops::LinearMap;
use crate::problems::ProblemInstance;
use crate::serde_util;
use crate::solvers::SolverState;
use crate::Vector;

/// Absolute floor added to every tolerance band.
pub const ABS_FLOOR: f64 = 1e-12;

/// A saddle point `(x*, u*)` with the derived quantities the diagnostics use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    #[serde(with = "serde_util::vector")]
    pub x_star: Vector,
    #[serde(with = "serde_util::vector")]
    pub u_star: Vector,
    #[serde(with = "serde_util::vector")]
    pub grad_f_at_star: Vector,
    /// `Ψ(x*)`, absent when `h(Kx*)` is an indicator evaluated off its set.
    pub psi_star: Option<f64>,
    /// `Kx*`, the element of `∂h*(u*)` used in the dual Bregman distance.
    #[serde(with = "serde_util::vector")]
    pub conj_subgrad_at_star: Vector,
}

/// Residuals of the optimality system, measured through prox fixed points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalityResiduals {
    /// `||x* − prox_g(x* − ∇f(x*) − K*u*)||`.
    pub primal: f64,
    /// `||u* − prox_{h*}(u* + Kx*)||`.
    pub dual: f64,
}

impl OptimalityResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual)
    }
}

impl ReferencePair {
    pub fn new(f: &SmoothTerm, g: &ProxTerm, h: &ProxTerm, k: &LinearMap, x_star: Vector, u_star: Vector) -> Result<Self> {
        let kx = k.apply(&x_star)?;
        if u_star.len() != k.rows() {
            return Err(Error::dim("ReferencePair u_star", k.rows(), u_star.len()));
        }
        let h_val = match h {
            // the indicator is evaluated at Kx* ≈ b, never bit-exactly
            ProxTerm::AffineIndicatorB { .. } => ExtReal::Finite(0.0),
            _ => h.eval(&kx)?,
        };
        let psi_star = match (g.eval(&x_star)?, h_val) {
            (ExtReal::Finite(gv), ExtReal::Finite(hv)) => Some(f.eval(&x_star) + gv + hv),
            _ => None,
        };
        Ok(Self {
            grad_f_at_star: f.grad(&x_star),
            x_star,
            u_star,
            psi_star,
            conj_subgrad_at_star: kx,
        })
    }

    /// `−∇f(x*) − K*u* ∈ ∂g(x*)`.
    pub fn g_subgrad(&self, k: &LinearMap) -> Result<Vector> {
        Ok(-(&self.grad_f_at_star + k.adjoint_apply(&self.u_star)?))
    }

    pub fn residuals(&self, g: &ProxTerm, h: &ProxTerm, k: &LinearMap) -> Result<OptimalityResiduals> {
        let step = &self.x_star + self.g_subgrad(k)?;
        let primal = (&self.x_star - g.prox(1.0, &step)?).norm();
        let dual_in = &self.u_star + &self.conj_subgrad_at_star;
        let dual = (&self.u_star - h.conj_prox(1.0, &dual_in)?).norm();
        Ok(OptimalityResiduals { primal, dual })
    }

    /// Errors when either residual exceeds `tol · (1 + ||x*|| + ||u*||)`.
    pub fn verify(&self, g: &ProxTerm, h: &ProxTerm, k: &LinearMap, tol: f64) -> Result<OptimalityResiduals> {
        let r = self.residuals(g, h, k)?;
        let bound = tol * (1.0 + self.x_star.norm() + self.u_star.norm());
        if !(r.max() <= bound) {
            return Err(Error::Oracle(format!(
                "reference residuals primal {:.3e}, dual {:.3e} exceed {bound:.3e}",
                r.primal, r.dual
            )));
        }
        Ok(r)
    }
}

/// One row of a solver trace. Columns that do not apply to the run are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub a_t: f64,
    pub lyap: Option<f64>,
    pub lag_gap: Option<f64>,
    pub primal_gap: Option<f64>,
    pub dist_z_sq: Option<f64>,
    pub dist_v_sq: Option<f64>,
    pub feas_sq: Option<f64>,
    pub ineq_slack: Option<f64>,
    /// `1 + |lhs| + |rhs|` of the step check; not part of the CSV schema.
    #[serde(skip)]
    pub ineq_scale: Option<f64>,
}

pub const CSV_HEADER: &str = "t,a_t,lyap,lag_gap,primal_gap,dist_z_sq,dist_v_sq,feas_sq,ineq_slack";

impl TraceRecord {
    pub fn empty(t: usize, a_t: f64) -> Self {
        Self {
            t,
            a_t,
            lyap: None,
            lag_gap: None,
            primal_gap: None,
            dist_z_sq: None,
            dist_v_sq: None,
            feas_sq: None,
            ineq_slack: None,
            ineq_scale: None,
        }
    }

    /// True when the stored slack is below `−tol · scale − ABS_FLOOR`.
    pub fn violates(&self, tol: f64) -> bool {
        match (self.ineq_slack, self.ineq_scale) {
            (Some(s), Some(scale)) => s < -tol * scale - ABS_FLOOR,
            _ => false,
        }
    }
}

/// Outcome of one single-step inequality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl StepCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn scale(&self) -> f64 {
        1.0 + self.lhs.abs() + self.rhs.abs()
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.slack() >= -tol * self.scale() - ABS_FLOOR
    }
}

/// The named parts of a primal–dual Lyapunov value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LyapunovTerms {
    pub primal: f64,
    pub dual: f64,
    pub coupling: f64,
    pub gap: f64,
    pub feasibility: f64,
}

impl LyapunovTerms {
    pub fn total(&self) -> f64 {
        self.primal + self.dual - self.coupling + self.gap + self.feasibility
    }
}

/// Shorthand for `ExtReal` → `f64` with `+∞` for the infinite marker.
pub fn ext_to_f64(v: ExtReal) -> f64 {
    v.finite().unwrap_or(f64::INFINITY)
}

/// Problem, reference and stepsizes shared by all diagnostics of one run.
#[derive(Debug, Clone, Copy)]
pub struct Setting<'a> {
    pub problem: &'a ProblemInstance,
    pub reference: &'a ReferencePair,
    pub gamma: f64,
    pub tau: f64,
}

impl<'a> Setting<'a> {
    pub fn new(problem: &'a ProblemInstance, reference: &'a ReferencePair, gamma: f64, tau: f64) -> Self {
        Self { problem, reference, gamma, tau }
    }

    fn mu_g(&self) -> f64 {
        self.problem.g.strong_mu()
    }

    /// `G(x, u) = D_f(x) + D_g(x) + D_{h*}(u)`.
    pub fn lagrangian_gap(&self, x: &Vector, u: &Vector) -> Result<ExtReal> {
        let p = self.problem;
        let r = self.reference;
        let df = p.f.bregman(x, &r.x_star, &r.grad_f_at_star);
        let dg = p.g.bregman(x, &r.x_star, &r.g_subgrad(&p.k)?)?;
        let dh = p.h.conj_bregman(u, &r.u_star, &r.conj_subgrad_at_star)?;
        Ok(match (dg, dh) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(df + a + b),
            _ => ExtReal::Infinite,
        })
    }

    /// `L(x, u*) − L(x*, u)` with `L(x, u) = f(x) + g(x) + ⟨Kx, u⟩ − h*(u)`.
    pub fn lagrangian_gap_direct(&self, x: &Vector, u: &Vector) -> Result<ExtReal> {
        let p = self.problem;
        let r = self.reference;
        let lagrangian = |x: &Vector, u: &Vector| -> Result<ExtReal> {
            let gx = p.g.eval(x)?;
            let hc = p.h.conj_eval(u)?;
            Ok(match (gx, hc) {
                (ExtReal::Finite(g), ExtReal::Finite(h)) => {
                    ExtReal::Finite(p.f.eval(x) + g + p.k.apply(x)?.dot(u) - h)
                }
                // +∞ in h* lowers L to −∞; in g it raises L to +∞
                (ExtReal::Infinite, _) => ExtReal::Infinite,
                (_, ExtReal::Infinite) => ExtReal::Finite(f64::NEG_INFINITY),
            })
        };
        let a = lagrangian(x, &r.u_star)?;
        let b = lagrangian(&r.x_star, u)?;
        Ok(match (a, b) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) if a.is_finite() && b.is_finite() => ExtReal::Finite(a - b),
            _ => ExtReal::Infinite,
        })
    }

    /// `Ψ(x) − Ψ*`, absent when `Ψ(x) = +∞` or `Ψ*` is unknown.
    pub fn primal_gap(&self, x: &Vector) -> Result<Option<f64>> {
        let Some(psi_star) = self.reference.psi_star else {
            return Ok(None);
        };
        Ok(self.problem.objective(x)?.finite().map(|v| v - psi_star))
    }

    pub fn dist_sq(&self, z: &Vector) -> f64 {
        (z - &self.reference.x_star).norm_squared()
    }

    pub fn dual_dist_sq(&self, v: &Vector) -> f64 {
        (v - &self.reference.u_star).norm_squared()
    }

    /// `||Kx − b||²` for the linear-constraint problems.
    pub fn feasibility_sq(&self, x: &Vector) -> Result<Option<f64>> {
        match self.problem.h.affine_target() {
            Some(b) => Ok(Some((self.problem.k.apply(x)? - b).norm_squared())),
            None => Ok(None),
        }
    }

    fn coupling(&self, v: &Vector, a: f64) -> Result<f64> {
        let ks = self.problem.k.adjoint_apply(&(v - &self.reference.u_star))?.norm_squared();
        Ok(a * a * self.gamma / (2.0 + 2.0 * a * self.gamma * self.mu_g()) * ks)
    }

    /// `((1 + aγμ_g)/(2γ))||z − x*||² + a²(Ψ(x) − Ψ*)`, with the primal gap
    /// taken in Bregman form.
    pub fn lyapunov_apgd(&self, state: &SolverState, a: f64) -> Result<f64> {
        let gap = ext_to_f64(self.lagrangian_gap(&state.x, &state.u)?);
        let g = self.gamma;
        Ok((1.0 + a * g * self.mu_g()) / (2.0 * g) * self.dist_sq(&state.z) + a * a * gap)
    }

    /// Lyapunov function of the smooth-`h` regime.
    pub fn lyapunov_reg_s(&self, state: &SolverState, a: f64) -> Result<LyapunovTerms> {
        let (g, t) = (self.gamma, self.tau);
        let mu_h = self.problem.h.strong_mu_conj();
        Ok(LyapunovTerms {
            primal: (1.0 + a * g * self.mu_g()) / (2.0 * g) * self.dist_sq(&state.z),
            dual: (a * a + a * t * mu_h) / (2.0 * t) * self.dual_dist_sq(&state.v),
            coupling: self.coupling(&state.v, a)?,
            gap: a * a * ext_to_f64(self.lagrangian_gap(&state.x, &state.u)?),
            feasibility: 0.0,
        })
    }

    /// Lyapunov function of the regimes where `K*` is bounded below (on its
    /// range, for linear constraints). `lam` is the matching eigenvalue bound.
    pub fn lyapunov_reg_bc(&self, state: &SolverState, a: f64, lam: f64, with_feasibility: bool) -> Result<LyapunovTerms> {
        let (g, t) = (self.gamma, self.tau);
        let lf = self.problem.f.lipschitz();
        let delta = 0.5f64.min(1.0 / (2.0 * a * g * lf));
        let feasibility = if with_feasibility {
            a * t / 2.0 * self.feasibility_sq(&state.x)?.unwrap_or(0.0)
        } else {
            0.0
        };
        Ok(LyapunovTerms {
            primal: (2.0 + a * g * self.mu_g()) / (4.0 * g) * self.dist_sq(&state.z),
            dual: (2.0 * a * a + delta * g * t * a * a * lam) / (4.0 * t) * self.dual_dist_sq(&state.v),
            coupling: self.coupling(&state.v, a)?,
            gap: a * a * ext_to_f64(self.lagrangian_gap(&state.x, &state.u)?),
            feasibility,
        })
    }

    /// Single-step inequality of the accelerated proximal gradient method.
    pub fn step_inequality_apgd(&self, prev: &SolverState, next: &SolverState, a_next: f64) -> Result<StepCheck> {
        let g = self.gamma;
        let f = &self.problem.f;
        let gap_next = ext_to_f64(self.lagrangian_gap(&next.x, &next.u)?);
        let gap_prev = ext_to_f64(self.lagrangian_gap(&prev.x, &prev.u)?);
        let lhs = (1.0 + a_next * g * self.mu_g()) / (2.0 * g) * self.dist_sq(&next.z) + a_next * a_next * gap_next;
        let rhs = (1.0 - g * f.strong_mu()) / (2.0 * g) * self.dist_sq(&prev.z)
            + (a_next * a_next - a_next) * gap_prev
            - (1.0 / (2.0 * g) - f.lipschitz() / 2.0) * (&next.z - &prev.z).norm_squared();
        Ok(StepCheck { lhs, rhs })
    }

    /// Single-step inequality of the accelerated primal–dual method; needs
    /// `y`, `ẑ` and the recovered dual subgradient stored in `next`.
    pub fn step_inequality_apapc(&self, prev: &SolverState, next: &SolverState, a_next: f64) -> Result<StepCheck> {
        let (g, t, a) = (self.gamma, self.tau, a_next);
        let p = self.problem;
        let f = &p.f;
        let lf = f.lipschitz();
        let mu_g = self.mu_g();
        let mu_h = p.h.strong_mu_conj();
        let y = next
            .y
            .as_ref()
            .ok_or_else(|| Error::Input("step check needs the extrapolated point".into()))?;
        let w = next
            .conj_subgrad
            .as_ref()
            .ok_or_else(|| Error::Input("step check needs the recovered dual subgradient".into()))?;
        let gap_next = ext_to_f64(self.lagrangian_gap(&next.x, &next.u)?);
        let gap_prev = ext_to_f64(self.lagrangian_gap(&prev.x, &prev.u)?);
        let gy = f.grad(y);

        let lhs = (1.0 + a * g * mu_g) / (2.0 * g) * self.dist_sq(&next.z)
            + (a * a + a * t * mu_h) / (2.0 * t) * self.dual_dist_sq(&next.v)
            - self.coupling(&next.v, a)?
            + a * a * gap_next;
        let rhs = 1.0 / (2.0 * g) * self.dist_sq(&prev.z)
            + a * a / (2.0 * t) * self.dual_dist_sq(&prev.v)
            - self.coupling(&prev.v, a)?
            - (1.0 / (2.0 * g) - lf / 2.0) * (&next.z - &prev.z).norm_squared()
            - t / 2.0 * (p.k.apply(&next.z)? - w).norm_squared()
            + (a * a - a) * gap_prev
            - a / (2.0 * lf) * (&gy - &self.reference.grad_f_at_star).norm_squared()
            - (a * a - a) / (2.0 * lf) * (f.grad(&prev.x) - &gy).norm_squared();
        Ok(StepCheck { lhs, rhs })
    }
}

/// Result of [`fit_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Least-squares slope of `log gap` against `log t`.
    pub sublinear_exponent: Option<f64>,
    /// Geometric mean of successive Lyapunov ratios.
    pub linear_factor: Option<f64>,
    pub points: usize,
}

/// Points at or below `1e2 · eps · scale` are treated as numerically zero.
fn usable(values: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let scale = values.iter().map(|p| p.1.abs()).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let cut = 1e2 * f64::EPSILON * scale;
    values.iter().copied().filter(|&(t, v)| t > 0.0 && v.is_finite() && v > cut).collect()
}

/// Slope of `log v` against `log t`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Option<f64> {
    let pts = usable(points);
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().map(|&(t, v)| (t.ln(), v.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Per-step geometric mean of `v_{i+1}/v_i` over consecutive usable points.
pub fn fit_geometric(points: &[(f64, f64)]) -> Option<f64> {
    let pts = usable(points);
    let (mut log_sum, mut steps) = (0.0, 0.0);
    for w in pts.windows(2) {
        let dt = w[1].0 - w[0].0;
        if dt > 0.0 {
            log_sum += (w[1].1 / w[0].1).ln();
            steps += dt;
        }
    }
    (steps > 0.0).then(|| (log_sum / steps).exp())
}

/// Fits both rates on the last `window` records with `t ≥ warmup`. The gap
/// series is the Lagrangian gap (primal gap as fallback); the contraction is
/// measured on the Lyapunov values (gap as fallback).
pub fn fit_rate(records: &[TraceRecord], window: usize, warmup: usize) -> Result<RateFit> {
    if window < 10 {
        return Err(Error::InsufficientData(format!("window must be at least 10, got {window}")));
    }
    let eligible: Vec<&TraceRecord> = records.iter().filter(|r| r.t >= warmup).collect();
    if eligible.len() < window {
        return Err(Error::InsufficientData(format!(
            "{} records after warm-up, window needs {window}",
            eligible.len()
        )));
    }
    let tail = &eligible[eligible.len() - window..];
    let series = |pick: &dyn Fn(&TraceRecord) -> Option<f64>| -> Vec<(f64, f64)> {
        tail.iter().filter_map(|r| pick(r).map(|v| (r.t as f64, v))).collect()
    };
    let gaps = series(&|r| r.lag_gap.or(r.primal_gap));
    let lyap = {
        let l = series(&|r| r.lyap);
        if l.is_empty() {
            gaps.clone()
        } else {
            l
        }
    };
    let fit = RateFit {
        sublinear_exponent: fit_power_law(&gaps),
        linear_factor: fit_geometric(&lyap),
        points: usable(&gaps).len().max(usable(&lyap).len()),
    };
    if fit.sublinear_exponent.is_none() && fit.linear_factor.is_none() {
        return Err(Error::InsufficientData("every value in the window is numerically zero".into()));
    }
    Ok(fit)
}

/// Lyapunov sequence check: `E^{t+1} ≤ E^t + tol · (1 + |E^t| + |E^{t+1}|)`.
pub fn lyapunov_step_ok(prev: f64, next: f64, tol: f64) -> bool {
    next <= prev + tol * (1.0 + prev.abs() + next.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::SmoothTerm;
    use crate::problems::{ProblemInstance, RegimeTag};
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn primal_problem() -> ProblemInstance {
        let f = SmoothTerm::quadratic(DMatrix::identity(2, 2), dvector![0.0, 0.0], None).unwrap();
        ProblemInstance::primal(f, ProxTerm::Zero, RegimeTag::PrimalOnly, 0).unwrap()
    }

    #[test]
    fn lyapunov_apgd_examples() {
        let p = primal_problem();
        let r = p.reference.clone().unwrap();
        let s = Setting::new(&p, &r, 1.0, 1.0);

        let at_star = SolverState::initial(r.x_star.clone(), r.u_star.clone(), 0.0);
        assert_eq!(s.lyapunov_apgd(&at_star, 3.0).unwrap(), 0.0);

        // E⁰ = ||x⁰ − x*||²/(2γ) with a_0 = 0
        let x0 = dvector![1.0, 2.0];
        let st = SolverState::initial(x0.clone(), dvector![0.0, 0.0], 0.0);
        let s2 = Setting::new(&p, &r, 0.5, 1.0);
        assert!((s2.lyapunov_apgd(&st, 0.0).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_apgd_hand_arithmetic() {
        // f = ½||x||² so Ψ − Ψ* = ½||x||²; pick x with gap 3 and z = x* + (2, 0)
        let p = primal_problem();
        let r = p.reference.clone().unwrap();
        let s = Setting::new(&p, &r, 1.0, 1.0);
        let mut st = SolverState::initial(dvector![6f64.sqrt(), 0.0], dvector![0.0, 0.0], 2.0);
        st.z = dvector![2.0, 0.0];
        let e = s.lyapunov_apgd(&st, 2.0).unwrap();
        assert!((e - 14.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn gap_forms_agree_and_vanish() {
        let f = SmoothTerm::quadratic(dmatrix![2.0, 0.5; 0.5, 1.0], dvector![1.0, -1.0], None).unwrap();
        let k = LinearMap::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        let h = ProxTerm::quadratic_around(dvector![0.5, 0.0, -1.0]);
        let p = ProblemInstance::quadratic_reg_s_from_parts(f, 0.3, h, k, 0).unwrap();
        let r = p.reference.clone().unwrap();
        let s = Setting::new(&p, &r, 0.1, 0.1);
        let g0 = s.lagrangian_gap(&r.x_star, &r.u_star).unwrap().finite().unwrap();
        assert!(g0.abs() < 1e-14);
        let x = dvector![0.3, -2.0];
        let u = dvector![1.0, 0.1, -0.4];
        let a = s.lagrangian_gap(&x, &u).unwrap().finite().unwrap();
        let b = s.lagrangian_gap_direct(&x, &u).unwrap().finite().unwrap();
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        // strong convexity lower bound
        let lower = 0.15 * s.dist_sq(&x) + 0.5 * s.dual_dist_sq(&u);
        assert!(a >= lower - 1e-12);
    }

    #[test]
    fn gap_is_primal_gap_without_h() {
        let p = primal_problem();
        let r = p.reference.clone().unwrap();
        let s = Setting::new(&p, &r, 1.0, 1.0);
        let x = dvector![1.0, -3.0];
        let g = s.lagrangian_gap(&x, &dvector![0.0, 0.0]).unwrap().finite().unwrap();
        assert!((g - s.primal_gap(&x).unwrap().unwrap()).abs() < 1e-14);
    }

    #[test]
    fn reg_s_terms_by_hand() {
        // K = I₂, f = ½||x||², h = ½||u||²: x* = 0, u* = 0
        let f = SmoothTerm::quadratic(DMatrix::identity(2, 2), dvector![0.0, 0.0], None).unwrap();
        let h = ProxTerm::quadratic_around(dvector![0.0, 0.0]);
        let p = ProblemInstance::quadratic_reg_s_from_parts(f, 0.0, h, LinearMap::identity(2), 0).unwrap();
        let r = p.reference.clone().unwrap();
        let s = Setting::new(&p, &r, 0.5, 2.0);
        let mut st = SolverState::initial(dvector![1.0, 0.0], dvector![0.0, 2.0], 1.5);
        st.z = dvector![0.0, 3.0];
        st.v = dvector![1.0, 1.0];
        let terms = s.lyapunov_reg_s(&st, 1.5).unwrap();
        // primal: 1/(2·0.5)·9 = 9; dual: (2.25 + 1.5·2·1)/(4)·2 = 2.625
        // coupling: 2.25·0.5/2 · 2 = 1.125; gap: 2.25·(½·1 + ½·4) = 5.625
        assert!((terms.primal - 9.0).abs() < 1e-14);
        assert!((terms.dual - 2.625).abs() < 1e-14);
        assert!((terms.coupling - 1.125).abs() < 1e-14);
        assert!((terms.gap - 5.625).abs() < 1e-14);
        assert!((terms.total() - 16.125).abs() < 1e-13);
    }

    #[test]
    fn reg_bc_terms_by_hand() {
        // f = ½||x||² (L_f = 1), K = I₂, h = indicator of {0}: x* = 0, u* = 0
        let f = SmoothTerm::quadratic(DMatrix::identity(2, 2), dvector![0.0, 0.0], None).unwrap();
        let p = ProblemInstance::linconstrained_from_parts(f, 0.0, LinearMap::identity(2), dvector![0.0, 0.0], 0)
            .unwrap();
        let r = p.reference.clone().unwrap();
        let s = Setting::new(&p, &r, 0.5, 2.0);
        let mut st = SolverState::initial(dvector![1.0, 1.0], dvector![0.0, 0.0], 2.0);
        st.z = dvector![2.0, 0.0];
        st.v = dvector![0.0, 1.0];
        let plain = s.lyapunov_reg_bc(&st, 2.0, 1.0, false).unwrap();
        // δ = min(½, 1/(2·2·0.5·1)) = ½
        // primal: (2 + 0)/(2)·4 = 4; dual: (8 + ½·0.5·2·4·1)/8·1 = 1.25
        // coupling: 4·0.5/2·1 = 1; gap: 4·1 = 4; feasibility: 2·2/2·2 = 4
        assert!((plain.primal - 4.0).abs() < 1e-14);
        assert!((plain.dual - 1.25).abs() < 1e-14);
        assert!((plain.coupling - 1.0).abs() < 1e-14);
        assert!((plain.gap - 4.0).abs() < 1e-14);
        let with = s.lyapunov_reg_bc(&st, 2.0, 1.0, true).unwrap();
        assert!((with.feasibility - 4.0).abs() < 1e-14);
        assert!((with.total() - plain.total() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn step_checks_vanish_at_saddle() {
        let p = primal_problem();
        let r = p.reference.clone().unwrap();
        let s = Setting::new(&p, &r, 1.0, 1.0);
        let mut st = SolverState::initial(r.x_star.clone(), r.u_star.clone(), 1.0);
        let c = s.step_inequality_apgd(&st, &st, 2.0).unwrap();
        assert_eq!(c.slack(), 0.0);
        st.y = Some(r.x_star.clone());
        st.conj_subgrad = Some(r.conj_subgrad_at_star.clone());
        let c = s.step_inequality_apapc(&st, &st, 2.0).unwrap();
        assert_eq!(c.slack(), 0.0);
    }

    #[test]
    fn fit_synthetic_power_law() {
        let pts: Vec<(f64, f64)> = (1..=200).map(|t| (t as f64, 7.0 / (t * t) as f64)).collect();
        assert!((fit_power_law(&pts).unwrap() + 2.0).abs() < 0.01);
    }

    #[test]
    fn fit_synthetic_geometric() {
        let pts: Vec<(f64, f64)> = (0..100).map(|t| (t as f64 + 1.0, 0.9f64.powi(t))).collect();
        assert!((fit_geometric(&pts).unwrap() - 0.9).abs() < 1e-6);
    }

    #[test]
    fn fit_rate_rejects_zero_window() {
        let recs: Vec<TraceRecord> = (0..20)
            .map(|t| TraceRecord { lag_gap: Some(0.0), ..TraceRecord::empty(t, 1.0) })
            .collect();
        assert!(matches!(fit_rate(&recs, 10, 0), Err(Error::InsufficientData(_))));
        assert!(matches!(fit_rate(&recs, 5, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn csv_header_matches_fields() {
        let rec = TraceRecord::empty(0, 0.0);
        let json = serde_json::to_value(&rec).unwrap();
        let keys: Vec<&str> = CSV_HEADER.split(',').collect();
        assert_eq!(json.as_object().unwrap().len(), keys.len());
        for k in keys {
            assert!(json.get(k).is_some(), "{k}");
        }
    }
}
