//! Seeded problem instances with reference solutions from independent
//! oracles: direct linear solves for the quadratic cases and a certified
//! proximal-gradient fixed point for the `l1` cases.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::ReferencePair;
use crate::error::{Error, Result};
use crate::functions::{ExtReal, ProxTerm, SmoothTerm};
use crate::linops::{exact_spectral_bounds, LinearMap, SpectralBounds, RANK_THRESHOLD};
use crate::Vector;

/// Residual bound every stored reference must meet.
pub const REFERENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeTag {
    #[serde(rename = "primal_only")]
    PrimalOnly,
    #[serde(rename = "regS")]
    RegS,
    #[serde(rename = "regB")]
    RegB,
    #[serde(rename = "regC")]
    RegC,
}

/// `min_x f(x) + g(x) + h(Kx)`.
///
/// Primal-only instances carry `h = 0` and `K = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct ProblemInstance {
    pub f: SmoothTerm,
    pub g: ProxTerm,
    pub h: ProxTerm,
    pub k: LinearMap,
    pub regime_tag: RegimeTag,
    pub seed: u64,
    pub reference: Option<ReferencePair>,
    bounds: SpectralBounds,
}

#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    f: SmoothTerm,
    g: ProxTerm,
    h: ProxTerm,
    k: LinearMap,
    regime_tag: RegimeTag,
    seed: u64,
    #[serde(default)]
    reference: Option<ReferencePair>,
}

impl TryFrom<ProblemRepr> for ProblemInstance {
    type Error = Error;

    fn try_from(r: ProblemRepr) -> Result<Self> {
        ProblemInstance::new(r.f, r.g, r.h, r.k, r.regime_tag, r.seed, r.reference)
    }
}

impl From<ProblemInstance> for ProblemRepr {
    fn from(p: ProblemInstance) -> Self {
        Self {
            f: p.f,
            g: p.g,
            h: p.h,
            k: p.k,
            regime_tag: p.regime_tag,
            seed: p.seed,
            reference: p.reference,
        }
    }
}

impl ProblemInstance {
    /// Validates dimensions, the regime preconditions and, when present, the
    /// reference residuals.
    pub fn new(
        f: SmoothTerm,
        g: ProxTerm,
        h: ProxTerm,
        k: LinearMap,
        regime_tag: RegimeTag,
        seed: u64,
        reference: Option<ReferencePair>,
    ) -> Result<Self> {
        g.validate()?;
        h.validate()?;
        let n = f.dim();
        if k.cols() != n {
            return Err(Error::dim("K columns vs f dimension", n, k.cols()));
        }
        if let Some(d) = g.fixed_dim() {
            if d != n {
                return Err(Error::dim("g dimension", n, d));
            }
        }
        if let Some(d) = h.fixed_dim() {
            if d != k.rows() {
                return Err(Error::dim("h dimension", k.rows(), d));
            }
        }
        let bounds = exact_spectral_bounds(&k)?;
        let p = Self {
            f,
            g,
            h,
            k,
            regime_tag,
            seed,
            reference,
            bounds,
        };
        p.check_regime()?;
        if let Some(r) = &p.reference {
            if r.x_star.len() != n {
                return Err(Error::dim("reference x_star", n, r.x_star.len()));
            }
            r.verify(&p.g, &p.h, &p.k, REFERENCE_TOL)?;
        }
        Ok(p)
    }

    fn check_regime(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Input(format!("regime {:?}: {msg}", self.regime_tag)));
        match self.regime_tag {
            RegimeTag::PrimalOnly if self.h != ProxTerm::Zero => bad("h must be zero"),
            RegimeTag::RegS if !self.h.smooth_l().finite().is_some_and(|l| l > 0.0) => bad("h must be smooth"),
            RegimeTag::RegB if self.bounds.lam_min <= 0.0 => bad("lambda_min(KK*) must be positive"),
            RegimeTag::RegC => match self.h.affine_target() {
                None => bad("h must be the indicator of {b}"),
                Some(b) => {
                    let off = (b - range_projector(&self.k) * b).norm();
                    if off > 1e-10 * (1.0 + b.norm()) {
                        bad("b must lie in the range of K")
                    } else {
                        Ok(())
                    }
                }
            },
            _ => Ok(()),
        }
    }

    /// Primal-only instance `f + g`; the reference is computed when `f` is
    /// quadratic and `g` is a quadratic scaling.
    pub fn primal(f: SmoothTerm, g: ProxTerm, regime_tag: RegimeTag, seed: u64) -> Result<Self> {
        let n = f.dim();
        let k = LinearMap::identity(n);
        let reference = match (f.as_quadratic(), g.as_quad_scaling()) {
            (Some((a, b)), Some(q)) => {
                let m = a + DMatrix::identity(n, n) * q.mu_g;
                let x = pinv_solve(&m, &b)?;
                Some(ReferencePair::new(&f, &g, &ProxTerm::Zero, &k, x, Vector::zeros(n))?)
            }
            _ => None,
        };
        Self::new(f, g, ProxTerm::Zero, k, regime_tag, seed, reference)
    }

    /// Smooth `h = (w/2)||· − c||²` with quadratic `f`, solved from
    /// `(A + μ_g I + w KᵀK) x* = b + w Kᵀc`, `u* = w (Kx* − c)`.
    pub fn quadratic_reg_s_from_parts(f: SmoothTerm, mu_g: f64, h: ProxTerm, k: LinearMap, seed: u64) -> Result<Self> {
        let ProxTerm::QuadraticAroundC { c, weight } = &h else {
            return Err(Error::Input("regime S instances use h = (w/2)||u - c||^2".into()));
        };
        let (a, b) = f
            .as_quadratic()
            .ok_or_else(|| Error::Input("regime S instances need a quadratic f".into()))?;
        let km = k.matrix();
        let n = f.dim();
        let lhs = a + DMatrix::identity(n, n) * mu_g + km.tr_mul(km) * *weight;
        let rhs = b + km.tr_mul(c) * *weight;
        let x = lhs
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Generation("singular regime S system".into()))?;
        let u = (km * &x - c) * *weight;
        let g = ProxTerm::SquaredNorm { mu: mu_g };
        let reference = ReferencePair::new(&f, &g, &h, &k, x, u)?;
        Self::new(f, g, h, k, RegimeTag::RegS, seed, Some(reference))
    }

    /// `min f(x) + (μ_g/2)||x||²` subject to `Kx = b`, from the KKT system.
    pub fn linconstrained_from_parts(f: SmoothTerm, mu_g: f64, k: LinearMap, b: Vector, seed: u64) -> Result<Self> {
        let (a, bf) = f
            .as_quadratic()
            .ok_or_else(|| Error::Input("linear-constraint instances need a quadratic f".into()))?;
        let (x, u) = kkt_solve(&(a + DMatrix::identity(f.dim(), f.dim()) * mu_g), &bf, &k, &b)?;
        let g = ProxTerm::SquaredNorm { mu: mu_g };
        let h = ProxTerm::affine_indicator(b);
        let reference = ReferencePair::new(&f, &g, &h, &k, x, u)?;
        Self::new(f, g, h, k, RegimeTag::RegC, seed, Some(reference))
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn bounds(&self) -> &SpectralBounds {
        &self.bounds
    }

    pub fn mu_g(&self) -> f64 {
        self.g.strong_mu()
    }

    /// `Ψ(x) = f(x) + g(x) + h(Kx)`.
    pub fn objective(&self, x: &Vector) -> Result<ExtReal> {
        let g = self.g.eval(x)?;
        let h = self.h.eval(&self.k.apply(x)?)?;
        Ok(match (g, h) {
            (ExtReal::Finite(g), ExtReal::Finite(h)) => ExtReal::Finite(self.f.eval(x) + g + h),
            _ => ExtReal::Infinite,
        })
    }

    /// Orthonormal basis of the directions along which the solution set
    /// extends: `ker(A + μ_g I)` for primal problems and
    /// `ker(A + μ_g I) ∩ ker(K)` under linear constraints. `None` when `f`
    /// is not quadratic or `h` is neither zero nor a linear constraint.
    pub fn solution_directions(&self) -> Option<DMatrix<f64>> {
        let (a, _) = self.f.as_quadratic()?;
        let q = self.g.as_quad_scaling()?;
        let n = self.dim();
        let m = a + DMatrix::identity(n, n) * q.mu_g;
        let stacked = match &self.h {
            ProxTerm::Zero => m,
            ProxTerm::AffineIndicatorB { .. } => {
                let km = self.k.matrix();
                let mut s = DMatrix::zeros(n + km.nrows(), n);
                s.rows_mut(0, n).copy_from(&m);
                s.rows_mut(n, km.nrows()).copy_from(km);
                s
            }
            _ => return None,
        };
        Some(null_space(&stacked))
    }

    /// Distance from `x` to the solution set `x* + span(solution_directions)`.
    pub fn distance_to_solutions(&self, x: &Vector) -> Option<f64> {
        let r = self.reference.as_ref()?;
        let basis = self.solution_directions()?;
        let d = x - &r.x_star;
        let along = &basis * basis.tr_mul(&d);
        Some((d - along).norm())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Haar-distributed orthogonal matrix from the QR factors of a Gaussian
/// matrix, with the sign convention fixed by `diag(R) > 0`.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, n, n).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(λ) Qᵀ`, symmetrized against roundoff.
fn from_spectrum(q: &DMatrix<f64>, spectrum: &[f64]) -> DMatrix<f64> {
    let lam = DMatrix::from_diagonal(&Vector::from_column_slice(spectrum));
    let a = q * lam * q.transpose();
    (&a + a.transpose()) * 0.5
}

/// Spectrum with the prescribed extremes `lmax/cond` and `lmax`, interior
/// values log-uniform in between.
fn log_uniform_spectrum(rng: &mut ChaCha8Rng, n: usize, lmax: f64, cond: f64) -> Vec<f64> {
    let lo = (lmax / cond).ln();
    let hi = lmax.ln();
    (0..n)
        .map(|i| match i {
            0 => lmax,
            i if i == n - 1 => lmax / cond,
            _ => rng.random_range(lo..=hi).exp(),
        })
        .collect()
}

/// Least-squares solve through the SVD with a relative rank cut.
fn pinv_solve(m: &DMatrix<f64>, rhs: &Vector) -> Result<Vector> {
    let svd = SVD::new(m.clone(), true, true);
    let cut = svd.singular_values.max() * 1e-12;
    svd.solve(rhs, cut).map_err(|e| Error::Generation(format!("pseudo-inverse failed: {e}")))
}

fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    let mut padded = m.clone();
    if m.nrows() < n {
        padded = padded.resize_vertically(n, 0.0);
    }
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("requested V");
    let cut = svd.singular_values.max().max(1.0) * 1e-10;
    let cols: Vec<Vector> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cut)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthogonal projector onto `range(K)`.
pub fn range_projector(k: &LinearMap) -> DMatrix<f64> {
    let svd = SVD::new(k.matrix().clone(), true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.max();
    let cut = (RANK_THRESHOLD * top * top).sqrt();
    let mut p = DMatrix::zeros(k.rows(), k.rows());
    for i in 0..svd.singular_values.len() {
        if svd.singular_values[i] > cut {
            let col = u.column(i);
            p += col * col.transpose();
        }
    }
    p
}

/// Solves `[M Kᵀ; K 0] (x, u) = (q, b)` in the least-norm sense and projects
/// `u` onto `range(K)`, where the multiplier is unique.
fn kkt_solve(m: &DMatrix<f64>, q: &Vector, k: &LinearMap, b: &Vector) -> Result<(Vector, Vector)> {
    let n = m.nrows();
    let km = k.matrix();
    let r = km.nrows();
    let mut big = DMatrix::zeros(n + r, n + r);
    big.view_mut((0, 0), (n, n)).copy_from(m);
    big.view_mut((0, n), (n, r)).copy_from(&km.transpose());
    big.view_mut((n, 0), (r, n)).copy_from(km);
    let mut rhs = Vector::zeros(n + r);
    rhs.rows_mut(0, n).copy_from(q);
    rhs.rows_mut(n, r).copy_from(b);
    let sol = pinv_solve(&big, &rhs)?;
    let x = sol.rows(0, n).into_owned();
    // stationarity reads M x − q + Kᵀu = 0 in our sign convention
    let u_raw = sol.rows(n, r).into_owned();
    let u = range_projector(k) * u_raw;
    let stat = (m * &x - q + km.tr_mul(&u)).norm();
    let feas = (km * &x - b).norm();
    let scale = 1.0 + x.norm() + u.norm() + q.norm() + b.norm();
    if stat > 1e-9 * scale || feas > 1e-9 * scale {
        return Err(Error::Generation(format!(
            "KKT solve inaccurate: stationarity {stat:.2e}, feasibility {feas:.2e}"
        )));
    }
    Ok((x, u))
}

/// Random quadratic `f` with smooth `h(u) = ½||u − c||²` and dense `K`.
pub fn gen_quadratic_reg_s(n: usize, m: usize, mu_g: f64, cond_f: f64, seed: u64) -> Result<ProblemInstance> {
    if n == 0 || m == 0 || !(cond_f >= 1.0) || !(mu_g >= 0.0) {
        return Err(Error::Input("gen_quadratic_reg_s needs n, m >= 1, cond_f >= 1, mu_g >= 0".into()));
    }
    let mut r = rng(seed);
    let q = random_orthogonal(&mut r, n);
    let a = from_spectrum(&q, &log_uniform_spectrum(&mut r, n, 1.0, cond_f));
    let b = gaussian_vector(&mut r, n);
    let k = LinearMap::dense(gaussian_matrix(&mut r, m, n) / (m as f64).sqrt())?;
    let c = gaussian_vector(&mut r, m);
    let f = SmoothTerm::quadratic(a, b, None)?;
    ProblemInstance::quadratic_reg_s_from_parts(f, mu_g, ProxTerm::quadratic_around(c), k, seed)
}

/// Certified minimizer of `½ wᵀQw − qᵀw + λ||w||₁`.
///
/// Runs proximal gradient at `1/L` until the support settles, then solves the
/// reduced stationarity system on the support and accepts the candidate once
/// the fixed-point residual is at most `1e-12`.
pub fn l1_oracle(qm: &DMatrix<f64>, q: &Vector, lam: f64, max_iters: usize) -> Result<Vector> {
    let n = q.len();
    let lmax = SymmetricEigen::new(qm.clone()).eigenvalues.max();
    if !(lmax > 0.0) {
        return Err(Error::Oracle("l1 oracle needs a nonzero quadratic".into()));
    }
    let step = 1.0 / lmax;
    let soft = |s: f64, t: f64| if s > t { s - t } else if s < -t { s + t } else { 0.0 };
    let fixed_point = |w: &Vector| -> Vector {
        let g = qm * w - q;
        Vector::from_fn(n, |i, _| soft(w[i] - step * g[i], step * lam))
    };
    let residual = |w: &Vector| (w - fixed_point(w)).norm();
    let sign = |w: &Vector| -> Vec<i8> { w.iter().map(|&v| (v > 0.0) as i8 - (v < 0.0) as i8).collect() };

    let polish = |pattern: &[i8]| -> Option<Vector> {
        let support: Vec<usize> = (0..n).filter(|&i| pattern[i] != 0).collect();
        let mut cand = Vector::zeros(n);
        if !support.is_empty() {
            let qs = DMatrix::from_fn(support.len(), support.len(), |i, j| qm[(support[i], support[j])]);
            let rhs = Vector::from_fn(support.len(), |i, _| q[support[i]] - lam * pattern[support[i]] as f64);
            let ws = qs.lu().solve(&rhs)?;
            for (i, &s) in support.iter().enumerate() {
                cand[s] = ws[i];
            }
        }
        (sign(&cand) == pattern && residual(&cand) <= 1e-12).then_some(cand)
    };

    let mut w = Vector::zeros(n);
    let mut pattern = sign(&w);
    let mut stable = 0usize;
    for it in 0..max_iters {
        w = fixed_point(&w);
        let next = sign(&w);
        if next == pattern {
            stable += 1;
        } else {
            pattern = next;
            stable = 0;
        }
        if stable == 50 || (stable > 50 && it % 1000 == 0) {
            if let Some(c) = polish(&pattern) {
                return Ok(c);
            }
        }
        if residual(&w) <= 1e-13 {
            return Ok(polish(&pattern).unwrap_or(w));
        }
    }
    if residual(&w) <= 1e-12 {
        return Ok(w);
    }
    Err(Error::Oracle(format!(
        "proximal gradient residual {:.3e} after {max_iters} iterations",
        residual(&w)
    )))
}

const ORACLE_ITERS: usize = 1_000_000;

/// `½||Dx − r||² + λ||x||₁` as a primal-only instance (`l1` in the `g` slot).
pub fn gen_lasso_like(n: usize, m: usize, lam_l1: f64, seed: u64) -> Result<ProblemInstance> {
    if !(lam_l1 > 0.0) {
        return Err(Error::Input(format!("lam_l1 must be positive, got {lam_l1}")));
    }
    let mut r = rng(seed);
    let d = gaussian_matrix(&mut r, m, n) / (m as f64).sqrt();
    let rhs = gaussian_vector(&mut r, m);
    lasso_from_parts(d, rhs, lam_l1, seed)
}

pub fn lasso_from_parts(d: DMatrix<f64>, r: Vector, lam_l1: f64, seed: u64) -> Result<ProblemInstance> {
    let f = SmoothTerm::least_squares(d, r)?;
    let (qm, q) = f.as_quadratic().expect("least squares is quadratic");
    let x = l1_oracle(&qm, &q, lam_l1, ORACLE_ITERS)?;
    let g = ProxTerm::L1Norm { weight: lam_l1 };
    let k = LinearMap::identity(f.dim());
    let reference = ReferencePair::new(&f, &g, &ProxTerm::Zero, &k, x, Vector::zeros(f.dim()))?;
    ProblemInstance::new(f, g, ProxTerm::Zero, k, RegimeTag::PrimalOnly, seed, Some(reference))
}

/// Strongly convex primal instance: quadratic `f` with `μ_f = 0` whose
/// nonzero spectrum spans `[1/cond, 1]`, plus `g = (μ_g/2)||·||²` with
/// `μ_g = 1/cond`.
pub fn gen_strongly_convex(n: usize, cond: f64, seed: u64) -> Result<ProblemInstance> {
    if n < 2 || !(cond >= 1.0) {
        return Err(Error::Input("gen_strongly_convex needs n >= 2 and cond >= 1".into()));
    }
    let mut r = rng(seed);
    let q = random_orthogonal(&mut r, n);
    let mut spectrum = log_uniform_spectrum(&mut r, n, 1.0, cond);
    spectrum[n - 1] = 0.0;
    let a = from_spectrum(&q, &spectrum);
    let b = gaussian_vector(&mut r, n);
    let f = SmoothTerm::quadratic(a, b, None)?;
    ProblemInstance::primal(f, ProxTerm::SquaredNorm { mu: 1.0 / cond }, RegimeTag::PrimalOnly, seed)
}

/// Quadratic `f` with a flat subspace of dimension `flat`, `g = 0`: the
/// minimizers form an affine set.
pub fn gen_flat_primal(n: usize, flat: usize, cond: f64, seed: u64) -> Result<ProblemInstance> {
    if flat == 0 || flat >= n {
        return Err(Error::Input("gen_flat_primal needs 0 < flat < n".into()));
    }
    let mut r = rng(seed);
    let q = random_orthogonal(&mut r, n);
    let mut spectrum = log_uniform_spectrum(&mut r, n - flat, 1.0, cond);
    spectrum.extend(std::iter::repeat_n(0.0, flat));
    let a = from_spectrum(&q, &spectrum);
    // b ∈ range(A) so that a minimizer exists
    let b = &a * gaussian_vector(&mut r, n);
    let f = SmoothTerm::quadratic(a, b, None)?;
    ProblemInstance::primal(f, ProxTerm::Zero, RegimeTag::PrimalOnly, seed)
}

/// Linearly constrained quadratic with `rank(K) = m_rank` and one redundant
/// row, so that `λ_min(KK*) = 0 < λ⁺_min(KK*)`.
pub fn gen_linconstrained(n: usize, m_rank: usize, mu_g: f64, seed: u64) -> Result<ProblemInstance> {
    if m_rank == 0 || m_rank > n {
        return Err(Error::Input(format!("gen_linconstrained needs 1 <= m_rank <= n, got {m_rank} for n = {n}")));
    }
    let mut r = rng(seed);
    let q = random_orthogonal(&mut r, n);
    let a = from_spectrum(&q, &log_uniform_spectrum(&mut r, n, 1.0, 100.0));
    let bf = gaussian_vector(&mut r, n);
    let base = gaussian_matrix(&mut r, m_rank, n) / (n as f64).sqrt();
    let k = LinearMap::dense(with_redundant_row(&base, &mut r))?;
    let x0 = gaussian_vector(&mut r, n);
    let b = k.apply(&x0)?;
    let f = SmoothTerm::quadratic(a, bf, None)?;
    ProblemInstance::linconstrained_from_parts(f, mu_g, k, b, seed)
}

/// Appends a random combination of two existing rows.
fn with_redundant_row(base: &DMatrix<f64>, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = base.nrows();
    let i = r.random_range(0..m);
    let j = r.random_range(0..m);
    let (s, t): (f64, f64) = (StandardNormal.sample(r), StandardNormal.sample(r));
    let extra = base.row(i) * s + base.row(j) * t;
    let mut k = base.clone().resize_vertically(m + 1, 0.0);
    k.row_mut(m).copy_from(&extra);
    k
}

/// Linearly constrained instance whose solution set is an affine subspace of
/// dimension `flat`: `A` and `K` share a common kernel.
pub fn gen_flat_linconstrained(n: usize, m_rank: usize, flat: usize, seed: u64) -> Result<ProblemInstance> {
    if flat == 0 || flat + m_rank > n {
        return Err(Error::Input("gen_flat_linconstrained needs flat >= 1 and flat + m_rank <= n".into()));
    }
    let mut r = rng(seed);
    let q = random_orthogonal(&mut r, n);
    let mut spectrum = log_uniform_spectrum(&mut r, n - flat, 1.0, 100.0);
    spectrum.extend(std::iter::repeat_n(0.0, flat));
    let a = from_spectrum(&q, &spectrum);
    let flat_dirs = q.columns(n - flat, flat).into_owned();
    let away = DMatrix::identity(n, n) - &flat_dirs * flat_dirs.transpose();
    let bf = &away * gaussian_vector(&mut r, n);
    let base = gaussian_matrix(&mut r, m_rank, n) * &away / (n as f64).sqrt();
    let k = LinearMap::dense(with_redundant_row(&base, &mut r))?;
    let b = k.apply(&gaussian_vector(&mut r, n))?;
    let f = SmoothTerm::quadratic(a, bf, None)?;
    ProblemInstance::linconstrained_from_parts(f, 0.0, k, b, seed)
}

/// Edge list of a connected undirected graph.
pub type Graph = Vec<(usize, usize)>;

fn connected(n: usize, edges: &Graph) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// `|E| × n` incidence matrix with `+1` at the tail and `−1` at the head of
/// each edge.
pub fn incidence(n: usize, edges: &Graph) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(edges.len(), n);
    for (e, &(i, j)) in edges.iter().enumerate() {
        m[(e, i)] = 1.0;
        m[(e, j)] = -1.0;
    }
    m
}

/// Consensus instance on `graph`: agent `i` holds `½ c_i ||x_i − p_i||²`,
/// and `K = B ⊗ I_dim` for the incidence matrix `B`, `b = 0`.
pub fn consensus_from_parts(
    n_agents: usize,
    graph: &Graph,
    curvatures: &[f64],
    centers: &[Vector],
    mu_g: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    if curvatures.len() != n_agents || centers.len() != n_agents {
        return Err(Error::dim("consensus agents", n_agents, curvatures.len().min(centers.len())));
    }
    if !connected(n_agents, graph) {
        return Err(Error::Generation("consensus graph is disconnected".into()));
    }
    let dim = centers[0].len();
    let n = n_agents * dim;
    let mut a = DMatrix::zeros(n, n);
    let mut b = Vector::zeros(n);
    for i in 0..n_agents {
        for d in 0..dim {
            a[(i * dim + d, i * dim + d)] = curvatures[i];
            b[i * dim + d] = curvatures[i] * centers[i][d];
        }
    }
    let inc = incidence(n_agents, graph);
    let k = LinearMap::dense(inc.kronecker(&DMatrix::<f64>::identity(dim, dim)))?;
    let f = SmoothTerm::quadratic(a, b, None)?;
    let zero = Vector::zeros(k.rows());
    ProblemInstance::linconstrained_from_parts(f, mu_g, k, zero, seed)
}

const CONSENSUS_RETRIES: u64 = 100;

/// Random connected Erdős–Rényi graph; regenerated from derived seeds when
/// a draw is disconnected.
pub fn random_connected_graph(n: usize, seed: u64) -> Result<Graph> {
    let p = (2.0 * (n as f64).ln() / n as f64).clamp(0.3, 1.0);
    for attempt in 0..CONSENSUS_RETRIES {
        let mut r = rng(seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        let edges: Graph = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| r.random_bool(p))
            .collect();
        if connected(n, &edges) {
            return Ok(edges);
        }
    }
    Err(Error::Generation(format!("no connected graph on {n} nodes after {CONSENSUS_RETRIES} draws")))
}

pub fn gen_consensus(n_agents: usize, dim: usize, mu_g: f64, seed: u64) -> Result<ProblemInstance> {
    if n_agents < 2 || dim == 0 {
        return Err(Error::Input("gen_consensus needs at least 2 agents and dim >= 1".into()));
    }
    let graph = random_connected_graph(n_agents, seed)?;
    let mut r = rng(seed ^ 0xc0ffee);
    let curvatures: Vec<f64> = (0..n_agents).map(|_| r.random_range(0.5..2.0)).collect();
    let centers: Vec<Vector> = (0..n_agents).map(|_| gaussian_vector(&mut r, dim) * 3.0).collect();
    consensus_from_parts(n_agents, &graph, &curvatures, &centers, mu_g, seed)
}

/// Square, well-conditioned `K` (so `λ_min(KK*) > 0`) with `h = λ||·||₁`
/// and `f` of condition number `cond_f`.
///
/// The saddle point is planted: a sparse `w* = Kx*` and a dual point
/// `u* ∈ ∂h(w*)` are drawn first (`u*_i = λ sign(w*_i)` on the support,
/// strictly inside `(−λ, λ)` off it), then the linear term of `f` is set to
/// `b = Ax* + Kᵀu*` so that `∇f(x*) + Kᵀu* = 0` holds by construction.
pub fn gen_reg_b(n: usize, lam_l1: f64, cond_f: f64, seed: u64) -> Result<ProblemInstance> {
    if n == 0 || !(cond_f >= 1.0) || !(lam_l1 > 0.0) {
        return Err(Error::Input("gen_reg_b needs n >= 1, cond_f >= 1 and lam_l1 > 0".into()));
    }
    let mut r = rng(seed);
    let q = random_orthogonal(&mut r, n);
    let a = from_spectrum(&q, &log_uniform_spectrum(&mut r, n, 1.0, cond_f));
    let km = DMatrix::identity(n, n) + gaussian_matrix(&mut r, n, n) * (0.3 / (n as f64).sqrt());
    let k = LinearMap::dense(km.clone())?;
    let mut w = Vector::zeros(n);
    let mut u = Vector::zeros(n);
    for i in 0..n {
        if r.random_bool(0.5) {
            let s: f64 = StandardNormal.sample(&mut r);
            w[i] = s + s.signum() * 0.1;
            u[i] = lam_l1 * w[i].signum();
        } else {
            u[i] = lam_l1 * r.random_range(-0.9..0.9);
        }
    }
    let x = km
        .lu()
        .solve(&w)
        .ok_or_else(|| Error::Generation("K is singular".into()))?;
    let bf = &a * &x + k.adjoint_apply(&u)?;
    let f = SmoothTerm::quadratic(a, bf, None)?;
    let h = ProxTerm::L1Norm { weight: lam_l1 };
    let reference = ReferencePair::new(&f, &ProxTerm::Zero, &h, &k, x, u)?;
    ProblemInstance::new(f, ProxTerm::Zero, h, k, RegimeTag::RegB, seed, Some(reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn one(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn reg_s_trivial_and_hand_solved() {
        let f = SmoothTerm::quadratic(one(1.0), dvector![0.0], None).unwrap();
        let p = ProblemInstance::quadratic_reg_s_from_parts(f, 0.0, ProxTerm::quadratic_around(dvector![0.0]), LinearMap::identity(1), 0)
            .unwrap();
        let r = p.reference.unwrap();
        assert_eq!((r.x_star[0], r.u_star[0]), (0.0, 0.0));

        // (1 + 1 + 1) x = 3
        let f = SmoothTerm::quadratic(one(1.0), dvector![3.0], None).unwrap();
        let p = ProblemInstance::quadratic_reg_s_from_parts(f, 1.0, ProxTerm::quadratic_around(dvector![0.0]), LinearMap::identity(1), 0)
            .unwrap();
        let r = p.reference.unwrap();
        assert!((r.x_star[0] - 1.0).abs() < 1e-15 && (r.u_star[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reg_s_random_residuals() {
        let p = gen_quadratic_reg_s(20, 15, 0.0, 100.0, 7).unwrap();
        let res = p.reference.as_ref().unwrap().residuals(&p.g, &p.h, &p.k).unwrap();
        assert!(res.max() <= 1e-10, "{res:?}");
    }

    #[test]
    fn lasso_examples() {
        let p = lasso_from_parts(DMatrix::identity(3, 3), Vector::zeros(3), 0.5, 0).unwrap();
        assert_eq!(p.reference.unwrap().x_star, Vector::zeros(3));
        let p = lasso_from_parts(one(1.0), dvector![3.0], 1.0, 0).unwrap();
        assert!((p.reference.unwrap().x_star[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lasso_random_certified() {
        let p = gen_lasso_like(30, 60, 0.1, 11).unwrap();
        let r = p.reference.as_ref().unwrap();
        let gamma = 1.0 / p.f.lipschitz();
        let step = &r.x_star - p.f.grad(&r.x_star) * gamma;
        let fp = p.g.prox(gamma, &step).unwrap();
        assert!((&r.x_star - fp).norm() <= 1e-12);
    }

    #[test]
    fn linconstrained_hand_solved() {
        // f = ½||x||², K = [1 1], b = 2: x = (1, 1), u = −1
        let f = SmoothTerm::quadratic(DMatrix::identity(2, 2), dvector![0.0, 0.0], None).unwrap();
        let k = LinearMap::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let p = ProblemInstance::linconstrained_from_parts(f.clone(), 0.0, k.clone(), dvector![2.0], 0).unwrap();
        let r = p.reference.unwrap();
        assert!((&r.x_star - dvector![1.0, 1.0]).norm() < 1e-12);
        assert!((r.u_star[0] + 1.0).abs() < 1e-12);

        let p = ProblemInstance::linconstrained_from_parts(f, 0.0, k, dvector![0.0], 0).unwrap();
        let r = p.reference.unwrap();
        assert!(r.x_star.norm() < 1e-14 && r.u_star.norm() < 1e-14);
    }

    #[test]
    fn linconstrained_rank_deficient() {
        let p = gen_linconstrained(12, 5, 0.0, 3).unwrap();
        let b = p.bounds();
        assert_eq!(b.lam_min, 0.0);
        assert!(b.lam_min_plus > 0.0);
        let r = p.reference.as_ref().unwrap();
        let off = &r.u_star - range_projector(&p.k) * &r.u_star;
        assert!(off.norm() <= 1e-10);
    }

    #[test]
    fn consensus_examples() {
        let c = [dvector![1.5], dvector![1.5]];
        let p = consensus_from_parts(2, &vec![(0, 1)], &[1.0, 1.0], &c, 0.0, 0).unwrap();
        assert!((p.reference.unwrap().x_star - dvector![1.5, 1.5]).norm() < 1e-12);

        let c = [dvector![0.0], dvector![3.0], dvector![6.0]];
        let p = consensus_from_parts(3, &vec![(0, 1), (1, 2)], &[1.0; 3], &c, 0.0, 0).unwrap();
        assert!((p.reference.unwrap().x_star - dvector![3.0, 3.0, 3.0]).norm() < 1e-12);
    }

    #[test]
    fn consensus_connectivity_matches_laplacian() {
        let p = gen_consensus(6, 2, 0.1, 5).unwrap();
        let graph = random_connected_graph(6, 5).unwrap();
        let b = incidence(6, &graph);
        let mut eig: Vec<f64> = SymmetricEigen::new(b.tr_mul(&b)).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert!(eig[0].abs() < 1e-10);
        assert!((p.bounds().lam_min_plus - eig[1]).abs() < 1e-9 * eig[1].max(1.0));
    }

    #[test]
    fn generators_are_deterministic() {
        let a = serde_json::to_string(&gen_quadratic_reg_s(5, 4, 0.1, 10.0, 42).unwrap()).unwrap();
        let b = serde_json::to_string(&gen_quadratic_reg_s(5, 4, 0.1, 10.0, 42).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = gen_linconstrained(6, 3, 0.2, 9).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let back: ProblemInstance = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn regime_tag_is_revalidated() {
        let p = gen_linconstrained(6, 3, 0.2, 9).unwrap();
        let mut v = serde_json::to_value(&p).unwrap();
        v["regime_tag"] = serde_json::json!("regB");
        assert!(serde_json::from_value::<ProblemInstance>(v).is_err());
    }

    #[test]
    fn flat_instances_have_solution_directions() {
        let p = gen_flat_primal(8, 2, 10.0, 1).unwrap();
        assert_eq!(p.solution_directions().unwrap().ncols(), 2);
        let x = &p.reference.as_ref().unwrap().x_star + p.solution_directions().unwrap().column(0) * 5.0;
        assert!(p.distance_to_solutions(&x).unwrap() < 1e-10);

        let p = gen_flat_linconstrained(10, 4, 2, 1).unwrap();
        assert_eq!(p.solution_directions().unwrap().ncols(), 2);
    }

    #[test]
    fn reg_b_reference() {
        let p = gen_reg_b(10, 0.3, 10.0, 4).unwrap();
        assert!(p.bounds().lam_min > 0.0);
        let res = p.reference.as_ref().unwrap().residuals(&p.g, &p.h, &p.k).unwrap();
        assert!(res.max() < 1e-10, "{res:?}");
    }
}
