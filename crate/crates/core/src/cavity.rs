//! Physical simulator models: the resonantly driven Jaynes–Cummings system
//! with cavity leakage and atomic spontaneous emission.
//!
//! Rates are dimensionless with `κ` setting the time unit wherever the
//! caller follows that convention; nothing here enforces `κ = 1`.
//!
//! Basis ordering is atom ⊗ Fock, `|q, n⟩ ↦ q·(n_max+1) + n` with `q = 0`
//! the ground state.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::algebra::{self, CMatrix, ONE, ZERO};
use crate::cmps;
use crate::error::{Error, Result};
use crate::model::{self, LiebLinigerParams};

pub const DEFAULT_N_MAX: usize = 8;
pub const TRUNCATION_LIMIT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JcParams {
    pub g: f64,
    pub omega: f64,
    pub kappa: f64,
    /// Amplitude rate; the excited-state population decays at `2γ`.
    pub gamma: f64,
    pub n_max: usize,
}

impl JcParams {
    pub fn new(g: f64, omega: f64, kappa: f64, gamma: f64, n_max: usize) -> Result<Self> {
        let p = Self {
            g,
            omega,
            kappa,
            gamma,
            n_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        if !self.g.is_finite() || !self.omega.is_finite() {
            return Err(Error::InvalidParameter("g and omega must be finite".into()));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayChannel {
    pub rate: f64,
    pub op: CMatrix,
    pub observed: bool,
    pub label: String,
}

impl DecayChannel {
    /// `√rate · op`.
    pub fn jump_operator(&self) -> CMatrix {
        algebra::scale(&self.op, self.rate.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavitySystem {
    pub dim: usize,
    pub hamiltonian: CMatrix,
    pub channels: Vec<DecayChannel>,
}

impl CavitySystem {
    pub fn new(hamiltonian: CMatrix, channels: Vec<DecayChannel>) -> Result<Self> {
        let dim = hamiltonian.nrows();
        if dim == 0 || !hamiltonian.is_square() {
            return Err(Error::DimensionMismatch(
                "hamiltonian must be non-empty and square".into(),
            ));
        }
        if !algebra::is_hermitian(&hamiltonian, 1e-12) {
            return Err(Error::InvalidParameter("hamiltonian is not Hermitian".into()));
        }
        for c in &channels {
            if c.op.nrows() != dim || c.op.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "channel '{}' has wrong shape",
                    c.label
                )));
            }
            if !(c.rate > 0.0) || !c.rate.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "channel '{}' rate must be positive",
                    c.label
                )));
            }
        }
        Ok(Self {
            dim,
            hamiltonian,
            channels,
        })
    }

    pub fn observed(&self) -> impl Iterator<Item = &DecayChannel> {
        self.channels.iter().filter(|c| c.observed)
    }

    /// Physical-time generator `-i[H,·] + Σ D[√rate·op]`.
    pub fn liouvillian(&self) -> Result<algebra::Superoperator> {
        let jumps: Vec<CMatrix> = self.channels.iter().map(DecayChannel::jump_operator).collect();
        algebra::build_liouvillian(&algebra::lindblad_q(&self.hamiltonian, &jumps), &jumps)
    }
}

/// σ⁻ = |g⟩⟨e| on the atom.
pub fn atom_lowering() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

/// `H = g(σ⁺a + σ⁻a†) + Ω(σ⁺ + σ⁻)` with an observed cavity channel `(κ, a)`
/// and, for `γ > 0`, an unobserved atomic channel `(2γ, σ⁻)`.
pub fn jaynes_cummings(p: &JcParams) -> Result<CavitySystem> {
    p.validate()?;
    let levels = p.n_max + 1;
    let id_atom = algebra::identity(2);
    let id_field = algebra::identity(levels);
    let sm = algebra::kron(&atom_lowering(), &id_field);
    let sp = sm.adjoint();
    let a = algebra::kron(&id_atom, &algebra::annihilation(levels));
    let ad = a.adjoint();
    let coupling = &sp * &a + &sm * &ad;
    let drive = &sp + &sm;
    let h = coupling.map(|z| z * p.g) + drive.map(|z| z * p.omega);
    let mut channels = vec![DecayChannel {
        rate: p.kappa,
        op: a,
        observed: true,
        label: "cavity".into(),
    }];
    if p.gamma > 0.0 {
        channels.push(DecayChannel {
            rate: 2.0 * p.gamma,
            op: sm,
            observed: false,
            label: "spontaneous emission".into(),
        });
    }
    CavitySystem::new(h, channels)
}

/// Diagnostics for whether field features outlive atomic decoherence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoopReport {
    /// `g²/κγ`; infinite when `γ = 0`.
    pub cooperativity: f64,
    /// Feature time `κ/g²`.
    pub feature_time: f64,
    /// `1/2γ`.
    pub coherence_time: f64,
    /// `feature_time ≤ coherence_time`.
    pub feasible: bool,
    pub lossless: bool,
}

pub fn cooperativity(g: f64, kappa: f64, gamma: f64) -> Result<CoopReport> {
    if !(kappa > 0.0) || !(gamma >= 0.0) || !g.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cooperativity needs kappa > 0, gamma >= 0 (got g={g}, kappa={kappa}, gamma={gamma})"
        )));
    }
    let feature_time = kappa / (g * g);
    if gamma == 0.0 {
        return Ok(CoopReport {
            cooperativity: f64::INFINITY,
            feature_time,
            coherence_time: f64::INFINITY,
            feasible: true,
            lossless: true,
        });
    }
    let coherence_time = 1.0 / (2.0 * gamma);
    Ok(CoopReport {
        cooperativity: g * g / (kappa * gamma),
        feature_time,
        coherence_time,
        feasible: feature_time <= coherence_time,
        lossless: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationObservable {
    /// Output photon flux `κ⟨a†a⟩`.
    Density,
    /// `⟨a†a†aa⟩`.
    G2Zero,
    /// Lieb–Liniger energy density of the `s = 1` output field.
    Energy(LiebLinigerParams),
}

impl TruncationObservable {
    fn key(&self) -> (u8, u64, u64) {
        match self {
            Self::Density => (0, 0, 0),
            Self::G2Zero => (1, 0, 0),
            Self::Energy(p) => (2, p.v().to_bits(), p.mu().to_bits()),
        }
    }
}

fn observe(p: &JcParams, which: TruncationObservable) -> Result<f64> {
    let sys = jaynes_cummings(p)?;
    let rep = cmps::from_cavity(&sys, 1.0)?;
    let obs = cmps::observables(&rep)?;
    Ok(match which {
        TruncationObservable::Density => obs.density,
        TruncationObservable::G2Zero => obs.g2_zero,
        TruncationObservable::Energy(ll) => model::energy_from_observables(&obs, &ll).total,
    })
}

type CacheKey = ([u64; 4], (u8, u64, u64), u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, usize>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, usize>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Smallest `n_max` whose observable moves by less than `tol` (relative) when
/// the Fock space grows by two levels.
pub fn truncation_converged(p: &JcParams, which: TruncationObservable, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let key = (
        [p.g.to_bits(), p.omega.to_bits(), p.kappa.to_bits(), p.gamma.to_bits()],
        which.key(),
        tol.to_bits(),
    );
    if let Some(&n) = cache().lock().expect("truncation cache poisoned").get(&key) {
        return Ok(n);
    }
    let at = |n_max: usize| observe(&JcParams { n_max, ..*p }, which);
    let mut sequence = Vec::new();
    let mut values: HashMap<usize, f64> = HashMap::new();
    let mut value = |n: usize, seq: &mut Vec<f64>| -> Result<f64> {
        if let Some(&v) = values.get(&n) {
            return Ok(v);
        }
        let v = at(n)?;
        values.insert(n, v);
        seq.push(v);
        Ok(v)
    };
    for n in 1..=TRUNCATION_LIMIT - 2 {
        let a = value(n, &mut sequence)?;
        let b = value(n + 2, &mut sequence)?;
        let scale = a.abs().max(b.abs());
        if (a - b).abs() <= tol * scale || scale < 1e-300 {
            cache().lock().expect("truncation cache poisoned").insert(key, n);
            return Ok(n);
        }
    }
    Err(Error::Truncation {
        limit: TRUNCATION_LIMIT,
        sequence,
    })
}

impl JcParams {
    /// Copy with `n_max` raised to the converged truncation if needed.
    pub fn with_converged_truncation(&self, which: TruncationObservable, tol: f64) -> Result<Self> {
        let n = truncation_converged(self, which, tol)?;
        Ok(Self {
            n_max: self.n_max.max(n),
            ..*self
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn empty_dynamics() {
        let sys = jaynes_cummings(&JcParams::new(0.0, 0.0, 1.0, 0.0, 3).unwrap()).unwrap();
        assert!(algebra::max_abs(&sys.hamiltonian) == 0.0);
        assert_eq!(sys.channels.len(), 1);
        assert!(sys.channels[0].observed);
    }

    #[test]
    fn single_excitation_coupling_by_hand() {
        let g = 1.0;
        let sys = jaynes_cummings(&JcParams::new(g, 0.0, 1.0, 0.0, 1).unwrap()).unwrap();
        // |g,0>=0, |g,1>=1, |e,0>=2, |e,1>=3
        let mut expected = CMatrix::zeros(4, 4);
        expected[(2, 1)] = c(g);
        expected[(1, 2)] = c(g);
        assert_eq!(sys.hamiltonian, expected);
    }

    #[test]
    fn drive_couples_atom_levels() {
        let sys = jaynes_cummings(&JcParams::new(0.0, 0.7, 1.0, 0.0, 1).unwrap()).unwrap();
        assert_eq!(sys.hamiltonian[(2, 0)], c(0.7));
        assert_eq!(sys.hamiltonian[(3, 1)], c(0.7));
        assert_eq!(sys.hamiltonian[(0, 2)], c(0.7));
    }

    #[test]
    fn construction_identities() {
        let p = JcParams::new(1.3, -0.4, 1.0, 0.2, 5).unwrap();
        let sys = jaynes_cummings(&p).unwrap();
        assert!(algebra::hermiticity_defect(&sys.hamiltonian) <= 1e-14);
        let a = &sys.channels[0].op;
        // a|q, 0> = 0 and the top state is only reached from below
        for q in 0..2 {
            let lowest = q * (p.n_max + 1);
            assert!(a.column(lowest).iter().all(|z| *z == ZERO));
            let top = q * (p.n_max + 1) + p.n_max;
            assert!(a.row(top).iter().all(|z| *z == ZERO));
        }
        // √n on the superdiagonal of the Fock block
        for n in 1..=p.n_max {
            assert_eq!(a[(n - 1, n)], c((n as f64).sqrt()));
        }
        assert_eq!(sys.channels[1].rate, 0.4);
        assert!(!sys.channels[1].observed);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(JcParams::new(1.0, 1.0, 0.0, 0.0, 3).is_err());
        assert!(JcParams::new(1.0, 1.0, 1.0, -0.1, 3).is_err());
        assert!(JcParams::new(1.0, 1.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn cooperativity_values() {
        let r = cooperativity(2.0, 1.0, 1.0).unwrap();
        assert_eq!(r.cooperativity, 4.0);
        assert_eq!(r.feature_time, 0.25);
        assert_eq!(r.coherence_time, 0.5);
        assert!(r.feasible);

        // g² = κγ: C = 1 but κ/g² = 1/γ exceeds 1/2γ
        let r = cooperativity(0.5, 1.0, 0.25).unwrap();
        assert!((r.cooperativity - 1.0).abs() < 1e-15);
        assert!(!r.feasible);

        let r = cooperativity(1.0, 1.0, 0.0).unwrap();
        assert!(r.cooperativity.is_infinite() && r.feasible && r.lossless);
    }

    #[test]
    fn feasibility_is_cooperativity_two() {
        // κ/g² ≤ 1/2γ  ⇔  g²/κγ ≥ 2
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let g: f64 = rng.random_range(0.05..5.0);
            let kappa: f64 = rng.random_range(0.05..5.0);
            let gamma: f64 = rng.random_range(0.05..5.0);
            let r = cooperativity(g, kappa, gamma).unwrap();
            if (r.cooperativity - 2.0).abs() > 1e-12 {
                assert_eq!(r.feasible, r.cooperativity >= 2.0);
            }
        }
    }

    #[test]
    fn dark_system_truncates_at_one() {
        let p = JcParams::new(0.0, 0.0, 1.0, 0.5, 8).unwrap();
        assert_eq!(
            truncation_converged(&p, TruncationObservable::Density, 1e-6).unwrap(),
            1
        );
    }

    #[test]
    fn truncation_grows_with_drive() {
        let weak = JcParams::new(1.0, 0.1, 1.0, 0.0, 8).unwrap();
        let strong = JcParams::new(1.0, 5.0, 1.0, 0.0, 8).unwrap();
        let nw = truncation_converged(&weak, TruncationObservable::Density, 1e-6).unwrap();
        let ns = truncation_converged(&strong, TruncationObservable::Density, 1e-6).unwrap();
        assert!(nw <= 4, "weak drive needed {nw}");
        assert!(ns > nw, "strong drive {ns} vs weak {nw}");
        // cached
        assert_eq!(
            truncation_converged(&weak, TruncationObservable::Density, 1e-6).unwrap(),
            nw
        );
        let raised = weak
            .with_converged_truncation(TruncationObservable::Density, 1e-6)
            .unwrap();
        assert_eq!(raised.n_max, 8);
    }
}
