//! Continuous matrix product states and their field-level expectation values.
//!
//! A [`CmpsRep`] holds `(Q, R, {R_u}, s)` with a single observed channel `R`.
//! All expectation values are in field units. Correlators are functions of
//! the field separation `x`, which is the variable of the generator built
//! from the rep's own `Q` and channels. For reps derived from a cavity the
//! emission time is `t = x / s`, and lab-frame Glauber functions follow from
//! `g_lab(t) = s^k · g_field(s t)` with `k = 1` for `g⁽¹⁾`, `k = 2` for `g⁽²⁾`.

use log::warn;
use serde::Serialize;

use crate::algebra::{self, CMatrix, Density, Superoperator, C64};
use crate::cavity::CavitySystem;
use crate::error::{Error, Result};

/// Relative tolerance on `Q + Q† + Σ R†R = 0`.
pub const STATIONARITY_TOL: f64 = 1e-10;
pub const NEGATIVITY_TOL: f64 = 1e-10;
pub const IMAGINARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CmpsRep {
    q: CMatrix,
    r: CMatrix,
    unobserved: Vec<CMatrix>,
    s: f64,
}

impl CmpsRep {
    pub fn new(q: CMatrix, r: CMatrix, unobserved: Vec<CMatrix>, s: f64) -> Result<Self> {
        let d = q.nrows();
        if d == 0 || !q.is_square() {
            return Err(Error::DimensionMismatch("Q must be non-empty and square".into()));
        }
        if r.shape() != (d, d) || unobserved.iter().any(|u| u.shape() != (d, d)) {
            return Err(Error::DimensionMismatch(format!("all cMPS matrices must be {d}x{d}")));
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("scale s must be positive, got {s}")));
        }
        let rep = Self { q, r, unobserved, s };
        let defect = rep.stationarity_defect();
        if defect > STATIONARITY_TOL {
            return Err(Error::Structure(format!(
                "Q + Q† + ΣR†R deviates from zero by {defect:e} (relative)"
            )));
        }
        Ok(rep)
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &CMatrix {
        &self.q
    }

    /// The observed channel.
    pub fn r(&self) -> &CMatrix {
        &self.r
    }

    pub fn unobserved(&self) -> &[CMatrix] {
        &self.unobserved
    }

    pub fn scale(&self) -> f64 {
        self.s
    }

    pub fn channels(&self) -> Vec<CMatrix> {
        std::iter::once(self.r.clone())
            .chain(self.unobserved.iter().cloned())
            .collect()
    }

    /// `‖Q + Q† + ΣR†R‖ / max(1, ‖ΣR†R‖)`, entrywise max norm.
    pub fn stationarity_defect(&self) -> f64 {
        let mut rr = self.r.adjoint() * &self.r;
        for u in &self.unobserved {
            rr += u.adjoint() * u;
        }
        let total = &self.q + self.q.adjoint() + &rr;
        algebra::max_abs(&total) / algebra::max_abs(&rr).max(1.0)
    }

    pub fn liouvillian(&self) -> Result<Superoperator> {
        algebra::build_liouvillian(&self.q, &self.channels())
    }

    /// Simultaneous `U · U†` conjugation of every auxiliary matrix.
    pub fn conjugated(&self, u: &CMatrix) -> Result<Self> {
        let c = |m: &CMatrix| u * m * u.adjoint();
        Self::new(c(&self.q), c(&self.r), self.unobserved.iter().map(c).collect(), self.s)
    }
}

/// `R_α = √(κ_α/s)·a_α`, `Q = -iH/s - ½ Σ R_α†R_α`.
pub fn from_cavity(sys: &CavitySystem, s: f64) -> Result<CmpsRep> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("scale s must be positive, got {s}")));
    }
    let observed = sys.observed().count();
    if observed != 1 {
        return Err(Error::Structure(format!(
            "exactly one observed channel required, found {observed}"
        )));
    }
    let scaled = |rate: f64, op: &CMatrix| algebra::scale(op, (rate / s).sqrt());
    let mut r = None;
    let mut unobserved = Vec::new();
    for c in &sys.channels {
        let m = scaled(c.rate, &c.op);
        if c.observed {
            r = Some(m);
        } else {
            unobserved.push(m);
        }
    }
    let r = r.expect("one observed channel");
    let all: Vec<CMatrix> = std::iter::once(r.clone()).chain(unobserved.iter().cloned()).collect();
    let q = algebra::lindblad_q(&algebra::scale(&sys.hamiltonian, 1.0 / s), &all);
    CmpsRep::new(q, r, unobserved, s)
}

/// Unconstrained parameterization: Hermitian `K`, free `R`, scale `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParams {
    pub k: CMatrix,
    pub r: CMatrix,
    pub s: f64,
}

impl FreeParams {
    pub fn dim(&self) -> usize {
        self.k.nrows()
    }
}

/// `R_obs = R/√s`, `Q = (-iK - ½R†R)/s`, no unobserved channels.
pub fn from_free(p: &FreeParams) -> Result<CmpsRep> {
    let d = p.k.nrows();
    if d == 0 || p.k.shape() != (d, d) || p.r.shape() != (d, d) {
        return Err(Error::DimensionMismatch(
            "K and R must be square and equally sized".into(),
        ));
    }
    if !algebra::is_hermitian(&p.k, 1e-12) {
        return Err(Error::InvalidParameter("K must be Hermitian".into()));
    }
    if !(p.s > 0.0) || !p.s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale s must be positive, got {}",
            p.s
        )));
    }
    let r = algebra::scale(&p.r, p.s.recip().sqrt());
    let q = algebra::lindblad_q(&algebra::scale(&p.k, 1.0 / p.s), std::slice::from_ref(&r));
    CmpsRep::new(q, r, Vec::new(), p.s)
}

pub fn stationary(rep: &CmpsRep) -> Result<Density> {
    algebra::steady_state(&rep.liouvillian()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observables {
    /// `tr(R†R ρ)`.
    pub density: f64,
    /// `tr([Q,R]†[Q,R] ρ)`.
    pub kinetic: f64,
    /// `tr(R†²R² ρ)`.
    pub g2_zero: f64,
}

fn real_nonnegative(z: C64, quantity: &'static str, scale: f64) -> Result<f64> {
    if z.im.abs() > IMAGINARY_TOL * scale.max(1.0) {
        return Err(Error::NumericalHealth { quantity, value: z.im });
    }
    if z.re < -NEGATIVITY_TOL * scale.max(1.0) {
        return Err(Error::NumericalHealth { quantity, value: z.re });
    }
    Ok(z.re.max(0.0))
}

pub fn observables(rep: &CmpsRep) -> Result<Observables> {
    let rho = stationary(rep)?;
    observables_in(rep, &rho)
}

/// Expectation values against an already computed stationary state.
pub fn observables_in(rep: &CmpsRep, rho: &Density) -> Result<Observables> {
    let r = rep.r();
    let rd = r.adjoint();
    let qr = algebra::commutator(rep.q(), r);
    let rr = &rd * r;
    let kin = qr.adjoint() * &qr;
    let r2 = r * r;
    let g2 = r2.adjoint() * &r2;
    let scale_of = |m: &CMatrix| algebra::max_abs(m);
    Ok(Observables {
        density: real_nonnegative(rho.expect(&rr), "density", scale_of(&rr))?,
        kinetic: real_nonnegative(rho.expect(&kin), "kinetic energy", scale_of(&kin))?,
        g2_zero: real_nonnegative(rho.expect(&g2), "g2(0)", scale_of(&g2))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CorrelationKind {
    G1,
    G2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub kind: CorrelationKind,
    /// Field separations, strictly ascending.
    pub taus: Vec<f64>,
    pub values: Vec<C64>,
}

impl CorrelationSeries {
    /// Values divided by `n` (for `g⁽¹⁾`) or `n²` (for `g⁽²⁾`).
    pub fn normalized(&self, density: f64) -> Vec<f64> {
        let norm = match self.kind {
            CorrelationKind::G1 => density,
            CorrelationKind::G2 => density * density,
        };
        self.values.iter().map(|z| z.re / norm).collect()
    }
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidParameter(
            "separations must be finite and nonnegative".into(),
        ));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("separations must be strictly ascending".into()));
    }
    Ok(())
}

fn correlate(
    rep: &CmpsRep,
    taus: &[f64],
    kind: CorrelationKind,
    rho: &Density,
    l: &Superoperator,
) -> Result<CorrelationSeries> {
    check_taus(taus)?;
    let r = rep.r();
    let rho = rho.matrix();
    let (start, probe) = match kind {
        CorrelationKind::G1 => (rho * r.adjoint(), r.clone()),
        CorrelationKind::G2 => (r * rho * r.adjoint(), r.adjoint() * r),
    };
    let values = algebra::evolve_series(l, &start, taus)?
        .iter()
        .map(|x| algebra::trace_of_product(&probe, x))
        .collect();
    Ok(CorrelationSeries {
        kind,
        taus: taus.to_vec(),
        values,
    })
}

/// Reusable stationary data for repeated correlator evaluation.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub liouvillian: Superoperator,
    pub density: Density,
}

impl Stationary {
    pub fn of(rep: &CmpsRep) -> Result<Self> {
        let liouvillian = rep.liouvillian()?;
        let density = algebra::steady_state(&liouvillian)?;
        Ok(Self { liouvillian, density })
    }

    pub fn correlation(&self, rep: &CmpsRep, kind: CorrelationKind, taus: &[f64]) -> Result<CorrelationSeries> {
        correlate(rep, taus, kind, &self.density, &self.liouvillian)
    }
}

/// `g⁽¹⁾(x) = tr(R e^{Lx}[ρ R†])` by quantum regression.
pub fn g1(rep: &CmpsRep, taus: &[f64]) -> Result<CorrelationSeries> {
    Stationary::of(rep)?.correlation(rep, CorrelationKind::G1, taus)
}

/// `g⁽²⁾(x) = tr(R†R e^{Lx}[R ρ R†])`.
pub fn g2(rep: &CmpsRep, taus: &[f64]) -> Result<CorrelationSeries> {
    Stationary::of(rep)?.correlation(rep, CorrelationKind::G2, taus)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticEstimate {
    pub value: f64,
    pub warning: Option<String>,
}

/// Second difference `2(g⁽¹⁾(0) - Re g⁽¹⁾(sε)) / (sε)²`, i.e. the symmetric
/// finite-offset estimator of `⟨∂ψ†∂ψ⟩` with `ε` a lab-time offset.
pub fn kinetic_fd(rep: &CmpsRep, eps: f64) -> Result<KineticEstimate> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("offset must be positive, got {eps}")));
    }
    let st = Stationary::of(rep)?;
    let h = rep.scale() * eps;
    let series = st.correlation(rep, CorrelationKind::G1, &[0.0, h])?;
    let value = kinetic_from_g1(series.values[0].re, series.values[1].re, h);
    let warning = match algebra::spectral_gap(&st.liouvillian) {
        Ok(gap) if gap * h > 0.1 => {
            let msg = format!("offset {h:e} is not small against the correlation scale 1/{gap:e}");
            warn!("{msg}");
            Some(msg)
        }
        _ => None,
    };
    Ok(KineticEstimate { value, warning })
}

pub(crate) fn kinetic_from_g1(g1_zero: f64, g1_re_h: f64, h: f64) -> f64 {
    2.0 * (g1_zero - g1_re_h) / (h * h)
}

/// Gap of the rep's generator, in field-separation units.
pub fn spectral_gap(rep: &CmpsRep) -> Result<f64> {
    algebra::spectral_gap(&rep.liouvillian()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{ONE, ZERO};
    use crate::cavity::{jaynes_cummings, JcParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty_cavity() -> CavitySystem {
        let a = algebra::annihilation(4);
        CavitySystem::new(
            CMatrix::zeros(4, 4),
            vec![crate::cavity::DecayChannel {
                rate: 1.0,
                op: a,
                observed: true,
                label: "cavity".into(),
            }],
        )
        .unwrap()
    }

    fn coherent(alpha: C64) -> CmpsRep {
        from_free(&FreeParams {
            k: CMatrix::zeros(1, 1),
            r: CMatrix::from_element(1, 1, alpha),
            s: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn reps_are_shareable_across_threads() {
        fn check<T: Send + Sync>() {}
        check::<CmpsRep>();
        check::<Stationary>();
    }

    #[test]
    fn empty_cavity_substitution() {
        let sys = empty_cavity();
        let rep = from_cavity(&sys, 1.0).unwrap();
        let a = algebra::annihilation(4);
        assert_eq!(rep.r(), &a);
        let expected = algebra::scale(&(a.adjoint() * &a), -0.5);
        assert!(algebra::max_abs(&(rep.q() - expected)) < 1e-15);

        let rep4 = from_cavity(&sys, 4.0).unwrap();
        assert!(algebra::max_abs(&(rep4.r() - algebra::scale(rep.r(), 0.5))) < 1e-15);
        assert!(algebra::max_abs(&(rep4.q() - algebra::scale(rep.q(), 0.25))) < 1e-15);
    }

    #[test]
    fn requires_single_observed_channel() {
        let mut sys = empty_cavity();
        sys.channels[0].observed = false;
        assert!(matches!(from_cavity(&sys, 1.0), Err(Error::Structure(_))));
        let mut sys = empty_cavity();
        let extra = sys.channels[0].clone();
        sys.channels.push(extra);
        assert!(matches!(from_cavity(&sys, 1.0), Err(Error::Structure(_))));
    }

    #[test]
    fn jaynes_cummings_rep_is_stationary() {
        let sys = jaynes_cummings(&JcParams::new(1.0, 0.5, 1.0, 0.25, 6).unwrap()).unwrap();
        let rep = from_cavity(&sys, 2.0).unwrap();
        assert!(rep.stationarity_defect() <= 1e-12);
        assert_eq!(rep.unobserved().len(), 1);
    }

    #[test]
    fn vacuum_free_rep() {
        let rep = from_free(&FreeParams {
            k: CMatrix::zeros(2, 2),
            r: CMatrix::zeros(2, 2),
            s: 1.0,
        })
        .unwrap();
        assert!(algebra::max_abs(rep.q()) == 0.0);
    }

    #[test]
    fn random_free_rep_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = FreeParams {
            k: algebra::random_hermitian(3, &mut rng),
            r: algebra::random_complex(3, &mut rng),
            s: 0.7,
        };
        assert!(from_free(&p).unwrap().stationarity_defect() <= 1e-12);
    }

    #[test]
    fn rejects_non_hermitian_k() {
        let p = FreeParams {
            k: CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]),
            r: CMatrix::zeros(2, 2),
            s: 1.0,
        };
        assert!(from_free(&p).is_err());
    }

    #[test]
    fn coherent_scalar_closed_forms() {
        let alpha = C64::new(0.6, -0.3);
        let n = alpha.norm_sqr();
        let rep = coherent(alpha);
        let obs = observables(&rep).unwrap();
        assert!((obs.density - n).abs() < 1e-14);
        assert!(obs.kinetic.abs() < 1e-14);
        assert!((obs.g2_zero - n * n).abs() < 1e-14);
        let taus = [0.0, 0.5, 3.0];
        for z in g1(&rep, &taus).unwrap().values {
            assert!((z - C64::new(n, 0.0)).norm() < 1e-13);
        }
        for z in g2(&rep, &taus).unwrap().values {
            assert!((z - C64::new(n * n, 0.0)).norm() < 1e-13);
        }
        assert!(kinetic_fd(&rep, 1e-2).unwrap().value.abs() < 1e-10);
    }

    #[test]
    fn vacuum_correlators_vanish() {
        let rep = from_cavity(&empty_cavity(), 1.0).unwrap();
        let obs = observables(&rep).unwrap();
        assert_eq!((obs.density, obs.kinetic, obs.g2_zero), (0.0, 0.0, 0.0));
        assert!(g1(&rep, &[0.0, 1.0]).unwrap().values.iter().all(|z| z.norm() == 0.0));
        assert!(g2(&rep, &[0.0, 1.0]).unwrap().values.iter().all(|z| z.norm() == 0.0));
        assert_eq!(kinetic_fd(&rep, 1e-3).unwrap().value, 0.0);
    }

    #[test]
    fn rejects_unsorted_separations() {
        let rep = coherent(ONE);
        assert!(g1(&rep, &[1.0, 0.5]).is_err());
        assert!(g2(&rep, &[-1.0]).is_err());
    }

    #[test]
    fn large_offset_is_flagged() {
        let sys = jaynes_cummings(&JcParams::new(1.0, 0.5, 1.0, 0.25, 4).unwrap()).unwrap();
        let rep = from_cavity(&sys, 1.0).unwrap();
        let est = kinetic_fd(&rep, 1.0).unwrap();
        assert!(est.warning.is_some());
        assert!(kinetic_fd(&rep, 1e-3).unwrap().warning.is_none());
    }
}
