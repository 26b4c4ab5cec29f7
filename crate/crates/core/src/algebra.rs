//! Dense complex linear algebra for operators on the auxiliary space and
//! superoperators acting on them.
//!
//! # Vectorization
//!
//! Superoperators are stored as dense `dim² × dim²` matrices acting on
//! column-stacked operators, so that
//!
//! ```text
//! vec(A X B) = (Bᵀ ⊗ A) vec(X)
//! ```
//!
//! nalgebra stores matrices column-major, which makes [`vectorize`] and
//! [`unvectorize`] plain copies. Nothing outside this module depends on the
//! convention: callers go through [`Superoperator::apply`].

use log::debug;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Bordered solves whose pivot-ratio condition estimate exceeds this fall back
/// to the singular-vector route.
pub const BORDERED_CONDITION_LIMIT: f64 = 1e12;
/// Singular values below this (relative to the generator's scale) count as
/// kernel directions when checking for a degenerate steady state.
pub const KERNEL_THRESHOLD: f64 = 1e-8;
pub const STEADY_RESIDUAL_TOL: f64 = 1e-10;
pub const STEADY_ASYMMETRY_TOL: f64 = 1e-10;
pub const DENSITY_HERMITIAN_TOL: f64 = 1e-12;
pub const DENSITY_TRACE_TOL: f64 = 1e-12;
pub const DENSITY_POSITIVITY_TOL: f64 = 1e-10;

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn trace(m: &CMatrix) -> C64 {
    m.trace()
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest absolute column sum.
pub fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && hermiticity_defect(m) <= tol
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// Truncated bosonic annihilation operator on `levels` Fock states.
pub fn annihilation(levels: usize) -> CMatrix {
    CMatrix::from_fn(levels, levels, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn scale(m: &CMatrix, c: f64) -> CMatrix {
    m.map(|z| z * c)
}

/// Column-stacking vectorization.
pub fn vectorize(x: &CMatrix) -> CVector {
    CVector::from_column_slice(x.as_slice())
}

pub fn unvectorize(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// `Q = -iH - ½ Σ R†R`, the trace-preserving completion of a Hamiltonian and
/// a set of jump operators.
pub fn lindblad_q(h: &CMatrix, channels: &[CMatrix]) -> CMatrix {
    let mut q = h.map(|z| -I * z);
    for r in channels {
        q -= (r.adjoint() * r).map(|z| z * 0.5);
    }
    q
}

/// Direct action `QX + XQ† + Σ R X R†` without forming the superoperator.
pub fn lindblad_action(q: &CMatrix, channels: &[CMatrix], x: &CMatrix) -> CMatrix {
    let mut out = q * x + x * q.adjoint();
    for r in channels {
        out += r * x * r.adjoint();
    }
    out
}

pub fn random_complex<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let a = random_complex(dim, rng);
    (&a + a.adjoint()).map(|z| z * 0.5)
}

/// Haar-ish random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let qr = random_complex(dim, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                ONE
            }
        } else {
            ZERO
        }
    });
    q * phases
}

pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let a = random_complex(dim, rng);
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho.map(|z| z / tr)
}

/// A linear map on `dim × dim` operators, stored as its column-stacked matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: CMatrix,
}

impl Superoperator {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            matrix: CMatrix::zeros(dim * dim, dim * dim),
        }
    }

    pub fn from_matrix(dim: usize, matrix: CMatrix) -> Result<Self> {
        if dim == 0 || matrix.nrows() != dim * dim || matrix.ncols() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "superoperator on dim {dim} needs a {0}x{0} matrix, got {1}x{2}",
                dim * dim,
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { dim, matrix })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        unvectorize(&(&self.matrix * vectorize(x)), self.dim)
    }

    /// Action of the Hilbert–Schmidt adjoint, `tr(L†(A)ᴴ X) = tr(Aᴴ L(X))`.
    pub fn apply_adjoint(&self, x: &CMatrix) -> CMatrix {
        unvectorize(&(self.matrix.adjoint() * vectorize(x)), self.dim)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            matrix: scale(&self.matrix, c),
        }
    }

    pub fn frobenius(&self) -> f64 {
        frobenius(&self.matrix)
    }

    /// `‖L†(𝟙)‖_F`; vanishes for trace-preserving generators.
    pub fn trace_defect(&self) -> f64 {
        frobenius(&self.apply_adjoint(&identity(self.dim)))
    }

    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        let schur = nalgebra::linalg::Schur::try_new(self.matrix.clone(), 1e-15, 100_000).ok_or(Error::EigenFailure)?;
        // Complex Schur form is upper triangular: the diagonal is the spectrum.
        let (_, t) = schur.unpack();
        Ok(t.diagonal().iter().copied().collect())
    }
}

fn check_square(m: &CMatrix, dim: usize, what: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{what} is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Generator `L(ρ) = Qρ + ρQ† + Σ_α R_α ρ R_α†` as a column-stacked matrix:
/// `L = 𝟙⊗Q + Q̄⊗𝟙 + Σ R̄_α⊗R_α`.
pub fn build_liouvillian(q: &CMatrix, channels: &[CMatrix]) -> Result<Superoperator> {
    let dim = q.nrows();
    if dim == 0 {
        return Err(Error::DimensionMismatch("empty Q".into()));
    }
    check_square(q, dim, "Q")?;
    for (i, r) in channels.iter().enumerate() {
        check_square(r, dim, &format!("channel {i}"))?;
    }
    let id = identity(dim);
    let mut l = kron(&id, q) + kron(&q.conjugate(), &id);
    for r in channels {
        l += kron(&r.conjugate(), r);
    }
    Ok(Superoperator { dim, matrix: l })
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    matrix: CMatrix,
}

impl Density {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::NotADensity("not a non-empty square matrix".into()));
        }
        let herm = hermiticity_defect(&matrix);
        if herm > DENSITY_HERMITIAN_TOL {
            return Err(Error::NotADensity(format!("hermiticity defect {herm:e}")));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > DENSITY_TRACE_TOL {
            return Err(Error::NotADensity(format!("trace {tr}")));
        }
        let d = Self { matrix };
        let min = d.min_eigenvalue();
        if min < -DENSITY_POSITIVITY_TOL {
            return Err(Error::NotADensity(format!("minimum eigenvalue {min:e}")));
        }
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// `tr(A ρ)`.
    pub fn expect(&self, a: &CMatrix) -> C64 {
        trace_of_product(a, &self.matrix)
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()).map(|z| z * 0.5);
        let mut ev: Vec<f64> = nalgebra::linalg::SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn conjugated(&self, u: &CMatrix) -> Self {
        Self {
            matrix: u * &self.matrix * u.adjoint(),
        }
    }
}

fn trace_normalized(x: &CVector, dim: usize) -> CMatrix {
    let m = unvectorize(x, dim);
    let tr = m.trace();
    if tr.norm() > f64::EPSILON {
        m.map(|z| z / tr)
    } else {
        m
    }
}

/// Bordered solve: the first row of `L vec(ρ) = 0` is replaced by `tr ρ = 1`.
/// Returns the solution and the pivot-ratio condition estimate.
fn bordered_solve(l: &Superoperator) -> (Option<CVector>, f64) {
    let dim = l.dim;
    let n = dim * dim;
    let mut a = l.matrix.clone();
    for j in 0..n {
        a[(0, j)] = ZERO;
    }
    for i in 0..dim {
        a[(0, i + i * dim)] = ONE;
    }
    let mut b = CVector::zeros(n);
    b[0] = ONE;
    let lu = a.lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for d in u.diagonal().iter() {
        lo = lo.min(d.norm());
        hi = hi.max(d.norm());
    }
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !cond.is_finite() || cond > BORDERED_CONDITION_LIMIT {
        return (None, cond);
    }
    (lu.solve(&b), cond)
}

/// Kernel by singular vectors; reports ambiguity when two singular values are
/// numerically zero.
fn kernel_solve(l: &Superoperator) -> Result<CVector> {
    let dim = l.dim;
    let svd = l.matrix.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let scale = max_abs(&l.matrix).max(1.0);
    let pick = |k: usize| -> CVector { v_t.row(k).adjoint() };
    if order.len() >= 2 {
        let (s0, s1) = (svd.singular_values[order[0]], svd.singular_values[order[1]]);
        if s1 <= KERNEL_THRESHOLD * scale {
            return Err(Error::AmbiguousSteadyState {
                sigma: [s0, s1],
                candidates: Box::new([
                    trace_normalized(&pick(order[0]), dim),
                    trace_normalized(&pick(order[1]), dim),
                ]),
            });
        }
    }
    Ok(pick(order[0]))
}

fn finish_density(l: &Superoperator, x: &CVector) -> Result<(Density, f64)> {
    let dim = l.dim;
    let mut rho = trace_normalized(x, dim);
    let asym = hermiticity_defect(&rho);
    debug!("steady state pre-symmetrization asymmetry {asym:e}");
    if asym > STEADY_ASYMMETRY_TOL {
        return Err(Error::NumericalHealth {
            quantity: "steady-state asymmetry",
            value: asym,
        });
    }
    rho = (&rho + rho.adjoint()).map(|z| z * 0.5);
    let tr = rho.trace().re;
    rho = rho.map(|z| z / tr);
    let residual = frobenius(&l.apply(&rho));
    Ok((Density::new(rho)?, residual))
}

/// Unique fixed point of a trace-preserving generator.
pub fn steady_state(l: &Superoperator) -> Result<Density> {
    let tol = STEADY_RESIDUAL_TOL * max_abs(&l.matrix).max(1.0);
    let (solution, cond) = bordered_solve(l);
    let mut last_residual = f64::INFINITY;
    if let Some(x) = solution {
        match finish_density(l, &x) {
            Ok((rho, residual)) if residual <= tol => return Ok(rho),
            Ok((_, residual)) => last_residual = residual,
            Err(e) => debug!("bordered steady state rejected: {e}"),
        }
    }
    debug!("bordered solve unusable (cond {cond:e}); falling back to kernel vector");
    let x = kernel_solve(l)?;
    let (rho, residual) = finish_density(l, &x)?;
    if residual <= tol {
        Ok(rho)
    } else {
        Err(Error::SolverFailure {
            residual: residual.min(last_residual),
        })
    }
}

/// `min |Re λ|` over the spectrum of `L` with the stationary eigenvalue removed.
pub fn spectral_gap(l: &Superoperator) -> Result<f64> {
    const ZERO_EIGENVALUE: f64 = 1e-12;
    let mut ev = l.eigenvalues()?;
    if ev.iter().all(|z| z.norm() <= ZERO_EIGENVALUE) {
        return Err(Error::DegenerateSpectrum {
            threshold: ZERO_EIGENVALUE,
        });
    }
    ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    Ok(ev[1..].iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Error budget per unit time.
    pub rtol: f64,
    /// Largest Taylor order tried before the step is halved.
    pub max_order: usize,
    /// Initial step is `step_norm / ‖L‖₁`.
    pub step_norm: f64,
    pub max_integrate_dim2: usize,
    pub max_dense_dim2: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            max_order: 40,
            step_norm: 2.0,
            max_integrate_dim2: 4096,
            max_dense_dim2: 1024,
        }
    }
}

/// One Taylor step `y ← Σ_k (hL)^k y / k!`, or `None` if the series has not
/// settled within `max_order` terms.
fn taylor_step(l: &CMatrix, y: &CVector, h: f64, tol: f64, max_order: usize) -> Option<CVector> {
    let mut acc = y.clone();
    let mut term = y.clone();
    let mut prev = f64::INFINITY;
    for k in 1..=max_order {
        term = (l * &term).map(|z| z * (h / k as f64));
        acc += &term;
        let cur = term.norm();
        let size = acc.norm().max(f64::MIN_POSITIVE);
        if cur + prev <= tol * size {
            return Some(acc);
        }
        prev = cur;
    }
    None
}

fn integrate(l: &Superoperator, y0: CVector, tau: f64, opts: &EvolveOptions, norm1: f64) -> Result<CVector> {
    let h_max = opts.step_norm / norm1;
    let mut h = h_max.min(tau);
    let mut t = 0.0;
    let mut y = y0;
    while t < tau {
        let step = h.min(tau - t);
        let local = (opts.rtol * step * 1e-3).max(f64::EPSILON);
        match taylor_step(&l.matrix, &y, step, local, opts.max_order) {
            Some(next) => {
                y = next;
                t += step;
                h = (h * 2.0).min(h_max);
            }
            None => {
                h *= 0.5;
                if h <= tau * 1e-14 || h < f64::MIN_POSITIVE {
                    return Err(Error::Integration { t, step: h });
                }
            }
        }
    }
    Ok(y)
}

/// `e^{Lτ}(X₀)` by adaptive Taylor stepping on the vectorized generator.
pub fn evolve(l: &Superoperator, x0: &CMatrix, tau: f64) -> Result<CMatrix> {
    evolve_with(l, x0, tau, &EvolveOptions::default())
}

pub fn evolve_with(l: &Superoperator, x0: &CMatrix, tau: f64, opts: &EvolveOptions) -> Result<CMatrix> {
    check_square(x0, l.dim, "X0")?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "evolution time {tau} must be finite and >= 0"
        )));
    }
    if l.dim * l.dim > opts.max_integrate_dim2 {
        return Err(Error::DimensionMismatch(format!(
            "dim² = {} exceeds integration limit {}",
            l.dim * l.dim,
            opts.max_integrate_dim2
        )));
    }
    let norm1 = one_norm(&l.matrix);
    if tau == 0.0 || norm1 == 0.0 {
        return Ok(x0.clone());
    }
    let y = integrate(l, vectorize(x0), tau, opts, norm1)?;
    Ok(unvectorize(&y, l.dim))
}

/// Evolves `X₀` through ascending times, reusing each result as the start of
/// the next segment.
pub fn evolve_series(l: &Superoperator, x0: &CMatrix, taus: &[f64]) -> Result<Vec<CMatrix>> {
    let opts = EvolveOptions::default();
    let mut out = Vec::with_capacity(taus.len());
    let mut current = x0.clone();
    let mut t = 0.0;
    for &tau in taus {
        if !(tau >= t) {
            return Err(Error::InvalidParameter(format!(
                "times must be ascending and >= 0, got {tau} after {t}"
            )));
        }
        current = evolve_with(l, &current, tau - t, &opts)?;
        t = tau;
        out.push(current.clone());
    }
    Ok(out)
}

/// Dense matrix exponential (scaling and squaring).
pub fn expm(m: &CMatrix) -> CMatrix {
    m.exp()
}

/// Cross-check route: `e^{Lτ}` formed densely, for small generators only.
pub fn evolve_dense(l: &Superoperator, x0: &CMatrix, tau: f64) -> Result<CMatrix> {
    evolve_dense_with(l, x0, tau, &EvolveOptions::default())
}

pub fn evolve_dense_with(l: &Superoperator, x0: &CMatrix, tau: f64, opts: &EvolveOptions) -> Result<CMatrix> {
    check_square(x0, l.dim, "X0")?;
    if l.dim * l.dim > opts.max_dense_dim2 {
        return Err(Error::DimensionMismatch(format!(
            "dim² = {} exceeds dense exponential limit {}",
            l.dim * l.dim,
            opts.max_dense_dim2
        )));
    }
    let prop = expm(&scale(&l.matrix, tau));
    Ok(unvectorize(&(prop * vectorize(x0)), l.dim))
}
