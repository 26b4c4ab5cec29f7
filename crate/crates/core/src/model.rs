//! Field Hamiltonians evaluated on cMPS: the Lieb–Liniger energy density,
//! general two-body interactions, and the density scaling transformation.

use std::fmt;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::algebra;
use crate::cmps::{self, CmpsRep, CorrelationKind, Observables, Stationary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLiebLiniger")]
pub struct LiebLinigerParams {
    v: f64,
    mu: f64,
}

#[derive(Deserialize)]
struct RawLiebLiniger {
    v: f64,
    mu: f64,
}

impl TryFrom<RawLiebLiniger> for LiebLinigerParams {
    type Error = Error;

    fn try_from(raw: RawLiebLiniger) -> Result<Self> {
        Self::new(raw.v, raw.mu)
    }
}

impl LiebLinigerParams {
    /// Rejects `v ≤ 0`: without repulsion the functional is unbounded below.
    pub fn new(v: f64, mu: f64) -> Result<Self> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "interaction strength v must be positive and finite, got {v}"
            )));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "chemical potential must be finite, got {mu}"
            )));
        }
        Ok(Self { v, mu })
    }

    /// `μ = 1`.
    pub fn canonical(v: f64) -> Result<Self> {
        Self::new(v, 1.0)
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub interaction: f64,
    pub chemical: f64,
    pub total: f64,
}

pub fn energy_from_observables(obs: &Observables, p: &LiebLinigerParams) -> EnergyBreakdown {
    let kinetic = obs.kinetic;
    let interaction = p.v * obs.g2_zero;
    let chemical = -p.mu * obs.density;
    EnergyBreakdown {
        kinetic,
        interaction,
        chemical,
        total: kinetic + interaction + chemical,
    }
}

/// `f = tr([Q,R]†[Q,R]ρ) + v·tr(R†²R²ρ) − μ·tr(R†Rρ)`.
pub fn energy_density(rep: &CmpsRep, p: &LiebLinigerParams) -> Result<EnergyBreakdown> {
    Ok(energy_from_observables(&cmps::observables(rep)?, p))
}

pub type SmoothPotential = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Two-body potential `w(x) = delta_weight·δ(x) + smooth(|x|)`, integrated
/// out to `cutoff`.
#[derive(Clone)]
pub struct Kernel {
    pub delta_weight: f64,
    pub smooth: Option<SmoothPotential>,
    pub cutoff: f64,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("delta_weight", &self.delta_weight)
            .field("smooth", &self.smooth.as_ref().map(|_| "<fn>"))
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl Kernel {
    pub fn contact(v: f64) -> Self {
        Self {
            delta_weight: v,
            smooth: None,
            cutoff: 1.0,
        }
    }
}

pub const QUADRATURE_RTOL: f64 = 1e-7;
const MAX_REFINEMENTS: usize = 10;

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gauss_points(a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let width = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * 8);
    let mut ws = Vec::with_capacity(panels * 8);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        for sign in [-1.0, 1.0] {
            for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                xs.push(mid + sign * half * x);
                ws.push(w * half);
            }
        }
    }
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    (
        idx.iter().map(|&i| xs[i]).collect(),
        idx.iter().map(|&i| ws[i]).collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionEstimate {
    pub value: f64,
    pub warning: Option<String>,
}

/// `⟨Ŵ⟩ = delta_weight·G2(0) + 2∫₀^cutoff smooth(x)·G2(x) dx`, with `G2`
/// the field-unit pair correlator.
pub fn interaction_general(rep: &CmpsRep, k: &Kernel) -> Result<InteractionEstimate> {
    if !(k.cutoff > 0.0) || !(k.delta_weight >= 0.0) {
        return Err(Error::InvalidParameter(
            "kernel needs cutoff > 0 and delta_weight >= 0".into(),
        ));
    }
    let st = Stationary::of(rep)?;
    let obs = cmps::observables_in(rep, &st.density)?;
    let contact = k.delta_weight * obs.g2_zero;
    let Some(smooth) = &k.smooth else {
        return Ok(InteractionEstimate {
            value: contact,
            warning: None,
        });
    };
    let mut warning = None;
    if let Ok(gap) = algebra::spectral_gap(&st.liouvillian) {
        if k.cutoff < 5.0 / gap {
            let msg = format!(
                "cutoff {} is shorter than 5 correlation lengths (1/gap = {})",
                k.cutoff,
                1.0 / gap
            );
            warn!("{msg}");
            warning = Some(msg);
        }
    }
    let integrate = |panels: usize| -> Result<f64> {
        let (xs, ws) = gauss_points(0.0, k.cutoff, panels);
        let g2 = st.correlation(rep, CorrelationKind::G2, &xs)?;
        Ok(xs
            .iter()
            .zip(&ws)
            .zip(&g2.values)
            .map(|((x, w), g)| w * smooth(*x) * g.re)
            .sum())
    };
    let mut panels = 4;
    let mut prev = integrate(panels)?;
    let mut estimate = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        panels *= 2;
        let cur = integrate(panels)?;
        estimate = (cur - prev).abs();
        if estimate <= QUADRATURE_RTOL * cur.abs() || estimate <= 1e-15 {
            return Ok(InteractionEstimate {
                value: contact + 2.0 * cur,
                warning,
            });
        }
        prev = cur;
    }
    let tail_point = st.correlation(rep, CorrelationKind::G2, &[k.cutoff])?.values[0].re;
    Err(Error::Quadrature {
        estimate,
        tail: (smooth(k.cutoff) * tail_point).abs(),
    })
}

/// `R → √c·R` on every channel and `Q → c·Q`, `s` unchanged. The generator
/// scales uniformly so the stationary state is untouched, while
/// `(n, G2(0), T) → (c n, c² G2(0), c³ T)`.
pub fn rescale(rep: &CmpsRep, c: f64) -> Result<CmpsRep> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale factor must be positive, got {c}"
        )));
    }
    let root = c.sqrt();
    CmpsRep::new(
        algebra::scale(rep.q(), c),
        algebra::scale(rep.r(), root),
        rep.unobserved().iter().map(|u| algebra::scale(u, root)).collect(),
        rep.scale(),
    )
}

/// Maps a problem at chemical potential `μ > 0` onto the canonical `μ = 1`
/// problem.
///
/// With `c = √μ`, `f(rescale(ψ, c); v, μ) = c³ f(ψ; v/c, 1)`, so the
/// minimiser at `(v, μ)` is the rescaled minimiser at `(v/c, 1)` and the
/// energies differ by `c³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuTransfer {
    pub factor: f64,
    pub canonical: LiebLinigerParams,
}

impl MuTransfer {
    pub fn new(p: &LiebLinigerParams) -> Result<Self> {
        if !(p.mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scaling transfer needs mu > 0, got {}",
                p.mu
            )));
        }
        let factor = p.mu.sqrt();
        Ok(Self {
            factor,
            canonical: LiebLinigerParams::canonical(p.v / factor)?,
        })
    }

    pub fn state(&self, canonical_rep: &CmpsRep) -> Result<CmpsRep> {
        rescale(canonical_rep, self.factor)
    }

    pub fn energy(&self, canonical_energy: f64) -> f64 {
        self.factor.powi(3) * canonical_energy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{CMatrix, C64};
    use crate::cavity::{jaynes_cummings, JcParams};
    use crate::cmps::{from_cavity, from_free, FreeParams};

    fn coherent(alpha: f64) -> CmpsRep {
        from_free(&FreeParams {
            k: CMatrix::zeros(1, 1),
            r: CMatrix::from_element(1, 1, C64::new(alpha, 0.0)),
            s: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn rejects_nonpositive_interaction() {
        assert!(LiebLinigerParams::new(0.0, 1.0).is_err());
        assert!(LiebLinigerParams::new(-1.0, 1.0).is_err());
        assert!(LiebLinigerParams::new(f64::NAN, 1.0).is_err());
        // deserialization goes through the same check
        assert!(LiebLinigerParams::try_from(RawLiebLiniger { v: 0.0, mu: 1.0 }).is_err());
    }

    #[test]
    fn vacuum_energy_is_zero() {
        let rep = from_free(&FreeParams {
            k: CMatrix::zeros(1, 1),
            r: CMatrix::zeros(1, 1),
            s: 1.0,
        })
        .unwrap();
        let e = energy_density(&rep, &LiebLinigerParams::new(3.0, 2.0).unwrap()).unwrap();
        assert_eq!((e.kinetic, e.interaction, e.chemical, e.total), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn coherent_scalar_energy() {
        let p = LiebLinigerParams::new(1.0, 1.0).unwrap();
        for alpha in [0.3f64, 0.5f64.sqrt(), 1.1] {
            let e = energy_density(&coherent(alpha), &p).unwrap();
            let n = alpha * alpha;
            assert!((e.total - (n * n - n)).abs() < 1e-14);
        }
        let e = energy_density(&coherent(0.5f64.sqrt()), &p).unwrap();
        assert!((e.total + 0.25).abs() < 1e-14);
    }

    #[test]
    fn contact_kernel_matches_energy_term() {
        let rep = from_cavity(
            &jaynes_cummings(&JcParams::new(1.0, 0.5, 1.0, 0.25, 5).unwrap()).unwrap(),
            1.3,
        )
        .unwrap();
        let p = LiebLinigerParams::new(3.95, 1.0).unwrap();
        let w = energy_density(&rep, &p).unwrap().interaction;
        let est = interaction_general(&rep, &Kernel::contact(3.95)).unwrap();
        assert_eq!(est.value.to_bits(), w.to_bits());
    }

    #[test]
    fn coherent_exponential_kernel() {
        let alpha = 0.8;
        let n = alpha * alpha;
        let cutoff = 3.0;
        let k = Kernel {
            delta_weight: 0.0,
            smooth: Some(Arc::new(|x: f64| (-x).exp())),
            cutoff,
        };
        let got = interaction_general(&coherent(alpha), &k).unwrap().value;
        let expected = 2.0 * n * n * (1.0 - (-cutoff).exp());
        assert!((got - expected).abs() < 1e-9 * expected, "{got} vs {expected}");
    }

    #[test]
    fn vacuum_interaction_is_zero() {
        let rep = from_free(&FreeParams {
            k: CMatrix::zeros(1, 1),
            r: CMatrix::zeros(1, 1),
            s: 1.0,
        })
        .unwrap();
        let k = Kernel {
            delta_weight: 2.0,
            smooth: Some(Arc::new(|x: f64| 1.0 / (1.0 + x * x))),
            cutoff: 4.0,
        };
        assert_eq!(interaction_general(&rep, &k).unwrap().value, 0.0);
    }

    #[test]
    fn identity_rescale() {
        let rep = coherent(0.4);
        assert_eq!(rescale(&rep, 1.0).unwrap(), rep);
        assert!(rescale(&rep, 0.0).is_err());
    }

    #[test]
    fn mu_transfer_of_scalar_optimum() {
        // D = 1: f*(v, μ) = -μ²/4v in closed form
        let p = LiebLinigerParams::new(2.0, 4.0).unwrap();
        let t = MuTransfer::new(&p).unwrap();
        assert_eq!(t.factor, 2.0);
        assert_eq!(t.canonical.v(), 1.0);
        let canonical = -1.0 / (4.0 * t.canonical.v());
        assert!((t.energy(canonical) - (-(p.mu() * p.mu()) / (4.0 * p.v()))).abs() < 1e-15);
        let rep = coherent(0.5f64.sqrt());
        let rep_mu = t.state(&rep).unwrap();
        let e = energy_density(&rep_mu, &p).unwrap().total;
        assert!((e - t.energy(-0.25)).abs() < 1e-13);
        assert!(MuTransfer::new(&LiebLinigerParams::new(1.0, -1.0).unwrap()).is_err());
    }
}
