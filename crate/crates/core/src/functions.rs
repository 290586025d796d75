//! Smooth terms `f`, proximable terms `g` and `h`, their conjugates, and the
//! dual proximal map obtained from the Moreau identity.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_util;
use crate::Vector;

/// A value in `R ∪ {+∞}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => f.write_str("inf"),
        }
    }
}

/// Relative slack accepted when testing membership in the closed domain of an
/// indicator-type conjugate; dual iterates produced through the Moreau
/// identity can overshoot the boundary by a few ulps.
const DOMAIN_TOL: f64 = 1e-12;

fn check_len(context: &'static str, expected: usize, v: &Vector) -> Result<()> {
    if v.len() != expected {
        return Err(Error::dim(context, expected, v.len()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Smooth terms

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothKind {
    /// `½ xᵀAx − bᵀx` with `A` symmetric positive semidefinite.
    Quadratic {
        #[serde(with = "serde_util::matrix")]
        a: DMatrix<f64>,
        #[serde(with = "serde_util::vector")]
        b: Vector,
    },
    /// `½ ||Dx − r||²`.
    LeastSquares {
        #[serde(with = "serde_util::matrix")]
        d: DMatrix<f64>,
        #[serde(with = "serde_util::vector")]
        r: Vector,
    },
    /// `Σ_i log(1 + exp(−y_i ⟨d_i, x⟩))` with rows `d_i` of `data`.
    Logistic {
        #[serde(with = "serde_util::matrix")]
        data: DMatrix<f64>,
        #[serde(with = "serde_util::vector")]
        labels: Vector,
    },
}

/// A convex differentiable `f` with `L_f`-Lipschitz gradient and strong
/// convexity modulus `μ_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTerm {
    #[serde(flatten)]
    kind: SmoothKind,
    lipschitz: f64,
    strong_mu: f64,
}

fn symmetric_spectrum(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !a.is_square() {
        return Err(Error::Input("quadratic matrix must be square".into()));
    }
    let scale = a.amax().max(1.0);
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Input(format!("quadratic matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min < -1e-10 * scale {
        return Err(Error::Input(format!("quadratic matrix is indefinite (eigenvalue {min})")));
    }
    Ok((min.max(0.0), max.max(0.0)))
}

fn resolve_lipschitz(spectral: f64, over: Option<f64>) -> Result<f64> {
    match over {
        Some(l) if !(l > 0.0) => Err(Error::Input(format!("Lipschitz override must be positive, got {l}"))),
        Some(l) if l < spectral * (1.0 - 1e-12) => Err(Error::Input(format!(
            "Lipschitz override {l} is below the true constant {spectral}"
        ))),
        Some(l) => Ok(l),
        None if spectral > 0.0 => Ok(spectral),
        // purely linear f: positive surrogate
        None => Ok(1.0),
    }
}

fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

impl SmoothTerm {
    /// `½ xᵀAx − bᵀx`. `L_f` and `μ_f` are the extreme eigenvalues of `A`;
    /// when `A = 0` the override (default 1) stands in for `L_f`.
    pub fn quadratic(a: DMatrix<f64>, b: Vector, lipschitz_override: Option<f64>) -> Result<Self> {
        check_len("SmoothTerm::quadratic b", a.nrows(), &b)?;
        let (mu, l) = symmetric_spectrum(&a)?;
        Ok(Self {
            kind: SmoothKind::Quadratic { a, b },
            lipschitz: resolve_lipschitz(l, lipschitz_override)?,
            strong_mu: mu,
        })
    }

    pub fn least_squares(d: DMatrix<f64>, r: Vector) -> Result<Self> {
        check_len("SmoothTerm::least_squares r", d.nrows(), &r)?;
        let (mu, l) = symmetric_spectrum(&d.tr_mul(&d))?;
        Ok(Self {
            kind: SmoothKind::LeastSquares { d, r },
            lipschitz: resolve_lipschitz(l, None)?,
            strong_mu: mu,
        })
    }

    /// Logistic loss on the rows of `data` with labels in `{−1, +1}`;
    /// `L_f = ¼||D||²`, `μ_f = 0`.
    pub fn logistic(data: DMatrix<f64>, labels: Vector) -> Result<Self> {
        check_len("SmoothTerm::logistic labels", data.nrows(), &labels)?;
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Input("logistic labels must be +1 or -1".into()));
        }
        let (_, top) = symmetric_spectrum(&data.tr_mul(&data))?;
        Ok(Self {
            kind: SmoothKind::Logistic { data, labels },
            lipschitz: resolve_lipschitz(0.25 * top, None)?,
            strong_mu: 0.0,
        })
    }

    pub fn kind(&self) -> &SmoothKind {
        &self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn strong_mu(&self) -> f64 {
        self.strong_mu
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SmoothKind::Quadratic { a, .. } => a.ncols(),
            SmoothKind::LeastSquares { d, .. } => d.ncols(),
            SmoothKind::Logistic { data, .. } => data.ncols(),
        }
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        match &self.kind {
            SmoothKind::Quadratic { a, b } => 0.5 * x.dot(&(a * x)) - b.dot(x),
            SmoothKind::LeastSquares { d, r } => 0.5 * (d * x - r).norm_squared(),
            SmoothKind::Logistic { data, labels } => {
                let s = data * x;
                s.iter().zip(labels.iter()).map(|(&si, &y)| softplus(-y * si)).sum()
            }
        }
    }

    pub fn grad(&self, x: &Vector) -> Vector {
        match &self.kind {
            SmoothKind::Quadratic { a, b } => a * x - b,
            SmoothKind::LeastSquares { d, r } => d.tr_mul(&(d * x - r)),
            SmoothKind::Logistic { data, labels } => {
                let s = data * x;
                let w = Vector::from_iterator(
                    s.len(),
                    s.iter().zip(labels.iter()).map(|(&si, &y)| -y * sigmoid(-y * si)),
                );
                data.tr_mul(&w)
            }
        }
    }

    /// `(A, b)` with `f(x) = ½ xᵀAx − bᵀx + const`, for the quadratic kinds.
    pub fn as_quadratic(&self) -> Option<(DMatrix<f64>, Vector)> {
        match &self.kind {
            SmoothKind::Quadratic { a, b } => Some((a.clone(), b.clone())),
            SmoothKind::LeastSquares { d, r } => Some((d.tr_mul(d), d.tr_mul(r))),
            SmoothKind::Logistic { .. } => None,
        }
    }

    /// `D_f(x) = f(x) − f(x*) − ⟨x − x*, ∇f(x*)⟩`, in closed form for the
    /// quadratic kinds so that it stays accurate as `x → x*`.
    pub fn bregman(&self, x: &Vector, x_star: &Vector, grad_star: &Vector) -> f64 {
        let d = x - x_star;
        match &self.kind {
            SmoothKind::Quadratic { a, .. } => 0.5 * d.dot(&(a * &d)),
            SmoothKind::LeastSquares { d: m, .. } => 0.5 * (m * &d).norm_squared(),
            SmoothKind::Logistic { .. } => self.eval(x) - self.eval(x_star) - d.dot(grad_star),
        }
    }
}

/// Serializable description of a built-in smooth term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothSpec {
    Quadratic {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default)]
        lipschitz: Option<f64>,
    },
    LeastSquares {
        d: Vec<Vec<f64>>,
        r: Vec<f64>,
    },
    Logistic {
        data: Vec<Vec<f64>>,
        labels: Vec<f64>,
    },
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::dim("matrix row", ncols, r.len()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Instantiates a built-in smooth term with exact constants.
pub fn builtin_smooth(spec: &SmoothSpec) -> Result<SmoothTerm> {
    match spec {
        SmoothSpec::Quadratic { a, b, lipschitz } => {
            SmoothTerm::quadratic(rows_to_matrix(a)?, Vector::from_column_slice(b), *lipschitz)
        }
        SmoothSpec::LeastSquares { d, r } => {
            SmoothTerm::least_squares(rows_to_matrix(d)?, Vector::from_column_slice(r))
        }
        SmoothSpec::Logistic { data, labels } => {
            SmoothTerm::logistic(rows_to_matrix(data)?, Vector::from_column_slice(labels))
        }
    }
}

// ---------------------------------------------------------------------------
// Quadratic scaling g

/// `g = (μ_g/2)||·||²`, the only `g` the accelerated primal–dual method accepts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadScaling {
    pub mu_g: f64,
}

impl QuadScaling {
    pub fn new(mu_g: f64) -> Result<Self> {
        if !(mu_g >= 0.0) || !mu_g.is_finite() {
            return Err(Error::Input(format!("mu_g must be finite and nonnegative, got {mu_g}")));
        }
        Ok(Self { mu_g })
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        0.5 * self.mu_g * x.norm_squared()
    }

    pub fn prox(&self, alpha: f64, x: &Vector) -> Vector {
        x / (1.0 + alpha * self.mu_g)
    }
}

// ---------------------------------------------------------------------------
// Proximable terms

/// A proper closed convex function with an inexpensive proximity operator.
///
/// Used in the `h` slot (composed with `K`) and in the `g` slot of the
/// primal methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxTerm {
    Zero,
    /// `(w/2)||u − c||²`.
    QuadraticAroundC {
        #[serde(with = "serde_util::vector")]
        c: Vector,
        #[serde(default = "one")]
        weight: f64,
    },
    /// `Σ_i huber_δ(u_i − c_i)`, `huber_δ(s) = s²/(2δ)` for `|s| ≤ δ`,
    /// `|s| − δ/2` otherwise. Smooth with `L_h = 1/δ`.
    Huber {
        #[serde(with = "serde_util::vector")]
        c: Vector,
        delta: f64,
    },
    /// `weight · ||u||₁`.
    L1Norm {
        #[serde(default = "one")]
        weight: f64,
    },
    /// Indicator of `{b}`; its conjugate is `⟨·, b⟩`.
    AffineIndicatorB {
        #[serde(with = "serde_util::vector")]
        b: Vector,
    },
    /// `(μ/2)||u||²`.
    SquaredNorm { mu: f64 },
    /// Indicator of the box `[lo, hi]^n`; `None` means unbounded.
    BoxIndicator {
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn soft_threshold(s: f64, t: f64) -> f64 {
    if s > t {
        s - t
    } else if s < -t {
        s + t
    } else {
        0.0
    }
}

fn huber(s: f64, delta: f64) -> f64 {
    if s.abs() <= delta {
        s * s / (2.0 * delta)
    } else {
        s.abs() - 0.5 * delta
    }
}

impl ProxTerm {
    pub fn quadratic_around(c: Vector) -> Self {
        ProxTerm::QuadraticAroundC { c, weight: 1.0 }
    }

    pub fn affine_indicator(b: Vector) -> Self {
        ProxTerm::AffineIndicatorB { b }
    }

    pub fn nonneg() -> Self {
        ProxTerm::BoxIndicator { lo: Some(0.0), hi: None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Input(format!("invalid {what}")));
        match self {
            ProxTerm::QuadraticAroundC { weight, .. } if !(*weight > 0.0) => bad("quadratic weight"),
            ProxTerm::Huber { delta, .. } if !(*delta > 0.0) => bad("huber delta"),
            ProxTerm::L1Norm { weight } if !(*weight >= 0.0) => bad("l1 weight"),
            ProxTerm::SquaredNorm { mu } if !(*mu >= 0.0) => bad("squared-norm modulus"),
            ProxTerm::BoxIndicator { lo: Some(l), hi: Some(h) } if l > h => bad("box bounds"),
            _ => Ok(()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ProxTerm::Zero => "zero",
            ProxTerm::QuadraticAroundC { .. } => "quadratic_around_c",
            ProxTerm::Huber { .. } => "huber",
            ProxTerm::L1Norm { .. } => "l1_norm",
            ProxTerm::AffineIndicatorB { .. } => "affine_indicator_b",
            ProxTerm::SquaredNorm { .. } => "squared_norm",
            ProxTerm::BoxIndicator { .. } => "box_indicator",
        }
    }

    /// Dimension fixed by the term's data, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            ProxTerm::QuadraticAroundC { c, .. } | ProxTerm::Huber { c, .. } => Some(c.len()),
            ProxTerm::AffineIndicatorB { b } => Some(b.len()),
            _ => None,
        }
    }

    /// `μ_h*`: strong convexity modulus of the conjugate. Zero for the
    /// nonsmooth kinds; for `h = 0` we report the conservative value 0.
    pub fn strong_mu_conj(&self) -> f64 {
        match self {
            ProxTerm::QuadraticAroundC { weight, .. } => 1.0 / weight,
            ProxTerm::Huber { delta, .. } => *delta,
            ProxTerm::SquaredNorm { mu } if *mu > 0.0 => 1.0 / mu,
            _ => 0.0,
        }
    }

    /// `L_h ∈ (0, +∞]`.
    pub fn smooth_l(&self) -> ExtReal {
        match self {
            ProxTerm::Zero => ExtReal::Finite(0.0),
            ProxTerm::QuadraticAroundC { weight, .. } => ExtReal::Finite(*weight),
            ProxTerm::Huber { delta, .. } => ExtReal::Finite(1.0 / delta),
            ProxTerm::SquaredNorm { mu } => ExtReal::Finite(*mu),
            _ => ExtReal::Infinite,
        }
    }

    /// Strong convexity modulus of the term itself (its role as `g`).
    pub fn strong_mu(&self) -> f64 {
        match self {
            ProxTerm::QuadraticAroundC { weight, .. } => *weight,
            ProxTerm::SquaredNorm { mu } => *mu,
            _ => 0.0,
        }
    }

    /// `Some` when the term is `(μ/2)||·||²` (including `μ = 0`).
    pub fn as_quad_scaling(&self) -> Option<QuadScaling> {
        match self {
            ProxTerm::Zero => Some(QuadScaling { mu_g: 0.0 }),
            ProxTerm::SquaredNorm { mu } => Some(QuadScaling { mu_g: *mu }),
            _ => None,
        }
    }

    pub fn affine_target(&self) -> Option<&Vector> {
        match self {
            ProxTerm::AffineIndicatorB { b } => Some(b),
            _ => None,
        }
    }

    fn check_dim(&self, u: &Vector) -> Result<()> {
        match self.fixed_dim() {
            Some(n) => check_len("ProxTerm", n, u),
            None => Ok(()),
        }
    }

    pub fn eval(&self, u: &Vector) -> Result<ExtReal> {
        self.check_dim(u)?;
        Ok(match self {
            ProxTerm::Zero => ExtReal::Finite(0.0),
            ProxTerm::QuadraticAroundC { c, weight } => ExtReal::Finite(0.5 * weight * (u - c).norm_squared()),
            ProxTerm::Huber { c, delta } => {
                ExtReal::Finite(u.iter().zip(c.iter()).map(|(&ui, &ci)| huber(ui - ci, *delta)).sum())
            }
            ProxTerm::L1Norm { weight } => ExtReal::Finite(weight * u.lp_norm(1)),
            ProxTerm::AffineIndicatorB { b } => {
                if u == b {
                    ExtReal::Finite(0.0)
                } else {
                    ExtReal::Infinite
                }
            }
            ProxTerm::SquaredNorm { mu } => ExtReal::Finite(0.5 * mu * u.norm_squared()),
            ProxTerm::BoxIndicator { lo, hi } => {
                let inside = u
                    .iter()
                    .all(|&v| lo.is_none_or(|l| v >= l) && hi.is_none_or(|h| v <= h));
                if inside {
                    ExtReal::Finite(0.0)
                } else {
                    ExtReal::Infinite
                }
            }
        })
    }

    /// `h*(u)`.
    pub fn conj_eval(&self, u: &Vector) -> Result<ExtReal> {
        self.check_dim(u)?;
        let in_box = |bound: f64| u.amax() <= bound * (1.0 + DOMAIN_TOL);
        Ok(match self {
            ProxTerm::Zero => {
                if u.iter().all(|&v| v == 0.0) {
                    ExtReal::Finite(0.0)
                } else {
                    ExtReal::Infinite
                }
            }
            ProxTerm::QuadraticAroundC { c, weight } => ExtReal::Finite(u.norm_squared() / (2.0 * weight) + u.dot(c)),
            ProxTerm::Huber { c, delta } => {
                if in_box(1.0) {
                    ExtReal::Finite(u.dot(c) + 0.5 * delta * u.norm_squared())
                } else {
                    ExtReal::Infinite
                }
            }
            ProxTerm::L1Norm { weight } => {
                if in_box(*weight) {
                    ExtReal::Finite(0.0)
                } else {
                    ExtReal::Infinite
                }
            }
            ProxTerm::AffineIndicatorB { b } => ExtReal::Finite(u.dot(b)),
            ProxTerm::SquaredNorm { mu } => {
                if *mu > 0.0 {
                    ExtReal::Finite(u.norm_squared() / (2.0 * mu))
                } else {
                    ProxTerm::Zero.conj_eval(u)?
                }
            }
            ProxTerm::BoxIndicator { lo, hi } => {
                let mut total = 0.0;
                for &v in u.iter() {
                    let bound = if v > 0.0 {
                        *hi
                    } else if v < 0.0 {
                        *lo
                    } else {
                        continue;
                    };
                    match bound {
                        Some(b) => total += v * b,
                        None => return Ok(ExtReal::Infinite),
                    }
                }
                ExtReal::Finite(total)
            }
        })
    }

    /// `prox_{α h}(u)`.
    pub fn prox(&self, alpha: f64, u: &Vector) -> Result<Vector> {
        if !(alpha > 0.0) {
            return Err(Error::Input(format!("prox parameter must be positive, got {alpha}")));
        }
        self.check_dim(u)?;
        Ok(match self {
            ProxTerm::Zero => u.clone(),
            ProxTerm::QuadraticAroundC { c, weight } => (u + c * (alpha * weight)) / (1.0 + alpha * weight),
            ProxTerm::Huber { c, delta } => {
                let mut p = u - c;
                for s in p.iter_mut() {
                    *s = if s.abs() <= delta + alpha {
                        *s * delta / (delta + alpha)
                    } else {
                        *s - alpha * s.signum()
                    };
                }
                p + c
            }
            ProxTerm::L1Norm { weight } => u.map(|s| soft_threshold(s, alpha * weight)),
            ProxTerm::AffineIndicatorB { b } => b.clone(),
            ProxTerm::SquaredNorm { mu } => u / (1.0 + alpha * mu),
            ProxTerm::BoxIndicator { lo, hi } => u.map(|s| {
                let s = lo.map_or(s, |l| s.max(l));
                hi.map_or(s, |h| s.min(h))
            }),
        })
    }

    /// `prox_{α h*}(u)`, equal to `u − α prox_{h/α}(u/α)`. Closed forms are
    /// used throughout: the subtraction loses `eps·|u|` and would push the
    /// result off `dom h*` when `|u|` is large.
    pub fn conj_prox(&self, alpha: f64, u: &Vector) -> Result<Vector> {
        if !(alpha > 0.0) {
            return Err(Error::Input(format!("prox parameter must be positive, got {alpha}")));
        }
        self.check_dim(u)?;
        Ok(match self {
            ProxTerm::Zero => Vector::zeros(u.len()),
            ProxTerm::AffineIndicatorB { b } => u - b * alpha,
            ProxTerm::QuadraticAroundC { c, weight } => (u - c * alpha) / (1.0 + alpha / weight),
            ProxTerm::Huber { c, delta } => ((u - c * alpha) / (1.0 + alpha * delta)).map(|s| s.clamp(-1.0, 1.0)),
            ProxTerm::L1Norm { weight } => u.map(|s| s.clamp(-weight, *weight)),
            ProxTerm::SquaredNorm { mu } if *mu > 0.0 => u * (mu / (mu + alpha)),
            ProxTerm::SquaredNorm { .. } => Vector::zeros(u.len()),
            ProxTerm::BoxIndicator { lo, hi } => u.map(|s| {
                let r = s / alpha;
                match (lo, hi) {
                    (Some(l), _) if r < *l => s - alpha * l,
                    (_, Some(h)) if r > *h => s - alpha * h,
                    _ => 0.0,
                }
            }),
        })
    }

    /// `D_{h*}(u) = h*(u) − h*(u*) − ⟨u − u*, w*⟩` for `w* ∈ ∂h*(u*)`,
    /// in closed form wherever `h*` is quadratic or linear on its domain.
    pub fn conj_bregman(&self, u: &Vector, u_star: &Vector, w_star: &Vector) -> Result<ExtReal> {
        let d = u - u_star;
        Ok(match self {
            ProxTerm::QuadraticAroundC { c, weight } => {
                ExtReal::Finite(d.norm_squared() / (2.0 * weight) + d.dot(&(u_star / *weight + c - w_star)))
            }
            ProxTerm::AffineIndicatorB { b } => ExtReal::Finite(d.dot(&(b - w_star))),
            ProxTerm::SquaredNorm { mu } if *mu > 0.0 => {
                ExtReal::Finite(d.norm_squared() / (2.0 * mu) + d.dot(&(u_star / *mu - w_star)))
            }
            ProxTerm::Huber { c, delta } => match self.conj_eval(u)? {
                ExtReal::Infinite => ExtReal::Infinite,
                ExtReal::Finite(_) => {
                    ExtReal::Finite(0.5 * delta * d.norm_squared() + d.dot(&(u_star * *delta + c - w_star)))
                }
            },
            _ => match (self.conj_eval(u)?, self.conj_eval(u_star)?) {
                (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a - b - d.dot(w_star)),
                _ => ExtReal::Infinite,
            },
        })
    }

    /// `D_g(x) = g(x) − g(x*) − ⟨x − x*, s*⟩` for `s* ∈ ∂g(x*)`. For the
    /// quadratic scaling this is `(μ/2)||x − x*||²` exactly.
    pub fn bregman(&self, x: &Vector, x_star: &Vector, s_star: &Vector) -> Result<ExtReal> {
        let d = x - x_star;
        Ok(match self {
            ProxTerm::Zero => ExtReal::Finite(0.0),
            ProxTerm::SquaredNorm { mu } => ExtReal::Finite(0.5 * mu * d.norm_squared()),
            _ => match (self.eval(x)?, self.eval(x_star)?) {
                (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a - b - d.dot(s_star)),
                _ => ExtReal::Infinite,
            },
        })
    }
}

/// `∇̃h*(v⁺)` from one dual step: the element of `∂h*(v⁺)` satisfying
/// `v⁺ + (τ/a)∇̃h*(v⁺) = v + (τ/a)Kẑ`. Returns `b` itself for the affine
/// indicator.
pub fn recover_conj_subgradient(
    h: &ProxTerm,
    v_next: &Vector,
    v: &Vector,
    k_zhat: &Vector,
    tau_over_a: f64,
) -> Result<Vector> {
    if !(tau_over_a > 0.0) {
        return Err(Error::Input(format!("tau/a must be positive, got {tau_over_a}")));
    }
    if v.len() != v_next.len() || k_zhat.len() != v.len() {
        return Err(Error::dim("recover_conj_subgradient", v.len(), v_next.len().max(k_zhat.len())));
    }
    if let Some(b) = h.affine_target() {
        return Ok(b.clone());
    }
    Ok((v + k_zhat * tau_over_a - v_next) / tau_over_a)
}
