//! Reference implementations that share no code paths with the library's
//! superoperator machinery: generators are assembled entry by entry from the
//! action on matrix units, and dynamics comes from a plain RK4 integrator or
//! a dense matrix exponential.

#![allow(dead_code)]

use cqed_cmps::algebra::{CMatrix, C64};
use cqed_cmps::cavity::JcParams;
use cqed_cmps::cmps::CmpsRep;
use nalgebra::DMatrix;
use rand::Rng;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `X ↦ QX + XQ† + Σ R X R†` for the rep's full channel list.
pub fn generator_action(q: &CMatrix, channels: &[CMatrix], x: &CMatrix) -> CMatrix {
    let mut out = q * x + x * q.adjoint();
    for r in channels {
        out += r * x * r.adjoint();
    }
    out
}

pub fn channels(rep: &CmpsRep) -> Vec<CMatrix> {
    let mut all = vec![rep.r().clone()];
    all.extend(rep.unobserved().iter().cloned());
    all
}

/// Row-major-vectorized generator built from its action on matrix units.
pub fn dense_generator(rep: &CmpsRep) -> DMatrix<C64> {
    let d = rep.dim();
    let chans = channels(rep);
    let mut m = DMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let mut e = CMatrix::zeros(d, d);
            e[(i, j)] = c(1.0);
            let img = generator_action(rep.q(), &chans, &e);
            for a in 0..d {
                for b in 0..d {
                    m[(a * d + b, i * d + j)] = img[(a, b)];
                }
            }
        }
    }
    m
}

fn flatten(x: &CMatrix) -> nalgebra::DVector<C64> {
    let d = x.nrows();
    nalgebra::DVector::from_fn(d * d, |k, _| x[(k / d, k % d)])
}

fn unflatten(v: &nalgebra::DVector<C64>, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |a, b| v[a * d + b])
}

/// Two-time oracle `tr(P e^{Lτ}[X0])` by one dense exponential per `τ`.
pub fn dense_two_time(rep: &CmpsRep, x0: &CMatrix, probe: &CMatrix, taus: &[f64]) -> Vec<C64> {
    let m = dense_generator(rep);
    let v0 = flatten(x0);
    taus.iter()
        .map(|&t| {
            let u = (&m * c(t)).exp();
            let xt = unflatten(&(u * &v0), rep.dim());
            (probe * xt).trace()
        })
        .collect()
}

/// Lindblad right-hand side in standard form, `−i[H,ρ] + Σ (LρL† − ½{L†L, ρ})`.
pub fn lindblad_rhs(h: &CMatrix, jumps: &[CMatrix], rho: &CMatrix) -> CMatrix {
    let i = C64::new(0.0, 1.0);
    let mut out = (h * rho - rho * h) * (-i);
    for l in jumps {
        let ll = l.adjoint() * l;
        out += l * rho * l.adjoint() - (&ll * rho + rho * &ll) * c(0.5);
    }
    out
}

/// Classical RK4 from `rho0` until `‖dρ/dt‖_F < tol`, returning the state and
/// the elapsed time.
pub fn rk4_until_stationary(h: &CMatrix, jumps: &[CMatrix], rho0: &CMatrix, tol: f64) -> (CMatrix, f64) {
    // spectral radius of the generator is at most 2‖H‖ + 2Σ‖L†L‖; RK4 is
    // stable for |z| up to about 2.6 in the left half-plane
    let one_norm = |m: &CMatrix| {
        (0..m.ncols())
            .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut bound = 2.0 * one_norm(h);
    for l in jumps {
        bound += 2.0 * one_norm(&(l.adjoint() * l));
    }
    let dt = 2.0 / bound.max(1.0);
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let f = |r: &CMatrix| lindblad_rhs(h, jumps, r);
    loop {
        let k1 = f(&rho);
        if k1.norm() < tol || t > 1e5 {
            return (rho, t);
        }
        let k2 = f(&(&rho + &k1 * c(dt / 2.0)));
        let k3 = f(&(&rho + &k2 * c(dt / 2.0)));
        let k4 = f(&(&rho + &k3 * c(dt)));
        rho += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(dt / 6.0);
        t += dt;
    }
}

/// Random Jaynes–Cummings parameters inside the strongly damped window where
/// the stationary state is unique and reached on O(10) time scales.
pub fn random_jc<R: Rng>(rng: &mut R, max_n: usize) -> JcParams {
    JcParams::new(
        rng.random_range(0.2..1.5),
        rng.random_range(0.1..1.5),
        rng.random_range(0.5..2.0),
        rng.random_range(0.2..1.0),
        rng.random_range(1..=max_n),
    )
    .unwrap()
}

pub fn max_dev(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Hamiltonian and jump operators of the driven Jaynes–Cummings system,
/// atom ⊗ field with the atom's ground state first.
pub fn jc_by_hand(p: &JcParams) -> (CMatrix, Vec<CMatrix>) {
    let levels = p.n_max + 1;
    let a = CMatrix::from_fn(
        levels,
        levels,
        |i, j| if j == i + 1 { c((j as f64).sqrt()) } else { c(0.0) },
    );
    let sm = CMatrix::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { c(1.0) } else { c(0.0) });
    let a_full = CMatrix::identity(2, 2).kronecker(&a);
    let sm_full = sm.kronecker(&CMatrix::identity(levels, levels));
    let sp_full = sm_full.adjoint();
    let h = (&sp_full * &a_full + &sm_full * a_full.adjoint()) * c(p.g) + (&sp_full + &sm_full) * c(p.omega);
    let jumps = vec![a_full * c(p.kappa.sqrt()), sm_full * c((2.0 * p.gamma).sqrt())];
    (h, jumps)
}
