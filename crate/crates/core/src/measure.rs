//! Shot-noise model for the correlators a detector would record, and energy
//! minimization driven by those noisy estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algebra::C64;
use crate::cmps::{self, CmpsRep, CorrelationKind, Stationary};
use crate::error::{Error, Result};
use crate::model::LiebLinigerParams;
use crate::optimizer::{self, OptResult, OptimizerConfig, Sample, VariationalSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Probe {
    /// Photon counting, estimates the density `n`.
    Intensity,
    /// Interferometric `g⁽¹⁾(τ)`, both quadratures.
    G1Interferometer,
    /// Hanbury Brown–Twiss coincidences, `g⁽²⁾(τ)`.
    G2Hbt,
}

impl Probe {
    fn tag(self) -> u64 {
        match self {
            Self::Intensity => 1,
            Self::G1Interferometer => 2,
            Self::G2Hbt => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub shots: u64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(shots: u64, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidParameter("shots must be positive".into()));
        }
        Ok(Self { shots, seed })
    }

    pub fn reseeded(&self, stream: u64) -> Self {
        Self {
            shots: self.shots,
            seed: mix(self.seed, stream),
        }
    }

    fn rng(&self, probe: Probe, tau: f64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(mix(self.seed, probe.tag()), tau.to_bits()))
    }
}

// splitmix64 finalizer
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(a << 6)
        .wrapping_add(a >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: C64,
    /// Applied standard deviation (per quadrature for `g⁽¹⁾`).
    pub stderr: f64,
    pub shots: u64,
}

/// Gaussian shot noise at the Poisson level: `√(v(1+v)/shots)` for
/// intensity and coincidence counts, `√(g⁽¹⁾(0)/shots)` per quadrature for
/// interferometry.
fn perturb(exact: C64, scale: f64, probe: Probe, tau: f64, nm: &NoiseModel) -> Estimate {
    let mut rng = nm.rng(probe, tau);
    let shots = nm.shots as f64;
    let (mean, stderr) = match probe {
        Probe::Intensity | Probe::G2Hbt => {
            let v = exact.re.max(0.0);
            let sigma = (v * (1.0 + v) / shots).sqrt();
            let z: f64 = StandardNormal.sample(&mut rng);
            (C64::new(exact.re + sigma * z, 0.0), sigma)
        }
        Probe::G1Interferometer => {
            let sigma = (scale.max(0.0) / shots).sqrt();
            let zr: f64 = StandardNormal.sample(&mut rng);
            let zi: f64 = StandardNormal.sample(&mut rng);
            (exact + C64::new(sigma * zr, sigma * zi), sigma)
        }
    };
    Estimate {
        mean,
        stderr,
        shots: nm.shots,
    }
}

fn exact_value(rep: &CmpsRep, st: &Stationary, probe: Probe, tau: f64) -> Result<(C64, f64)> {
    let density = st.density.expect(&(rep.r().adjoint() * rep.r())).re;
    let value = match probe {
        Probe::Intensity => C64::new(density, 0.0),
        Probe::G1Interferometer => st.correlation(rep, CorrelationKind::G1, &[tau])?.values[0],
        Probe::G2Hbt => st.correlation(rep, CorrelationKind::G2, &[tau])?.values[0],
    };
    Ok((value, density))
}

/// Exact correlator at separation `tau` plus reproducible shot noise.
pub fn noisy_correlator(rep: &CmpsRep, probe: Probe, tau: f64, nm: &NoiseModel) -> Result<Estimate> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "separation must be non-negative, got {tau}"
        )));
    }
    let st = Stationary::of(rep)?;
    let (value, g1_zero) = exact_value(rep, &st, probe, tau)?;
    Ok(perturb(value, g1_zero, probe, tau, nm))
}

/// Energy density from noisy intensity, zero-delay coincidences and the
/// interferometric second difference at lab offset `eps`. Independent
/// errors are combined in quadrature.
pub fn noisy_energy(rep: &CmpsRep, p: &LiebLinigerParams, eps: f64, nm: &NoiseModel) -> Result<Estimate> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("offset must be positive, got {eps}")));
    }
    let st = Stationary::of(rep)?;
    let h = rep.scale() * eps;
    let obs = cmps::observables_in(rep, &st.density)?;
    let g1 = st.correlation(rep, CorrelationKind::G1, &[0.0, h])?;
    let n = perturb(C64::new(obs.density, 0.0), obs.density, Probe::Intensity, 0.0, nm);
    let w = perturb(C64::new(obs.g2_zero, 0.0), obs.density, Probe::G2Hbt, 0.0, nm);
    let c0 = perturb(g1.values[0], obs.density, Probe::G1Interferometer, 0.0, nm);
    let ch = perturb(g1.values[1], obs.density, Probe::G1Interferometer, h, nm);
    let kinetic = cmps::kinetic_from_g1(c0.mean.re, ch.mean.re, h);
    let mean = kinetic + p.v() * w.mean.re - p.mu() * n.mean.re;
    let k = 2.0 / (h * h);
    let stderr =
        ((p.mu() * n.stderr).powi(2) + (p.v() * w.stderr).powi(2) + k * k * (c0.stderr.powi(2) + ch.stderr.powi(2)))
            .sqrt();
    Ok(Estimate {
        mean: C64::new(mean, 0.0),
        stderr,
        shots: nm.shots,
    })
}

/// [`optimizer::minimize`] with every evaluation replaced by an independent
/// [`noisy_energy`] draw. The breakdown of the result is the noiseless one at
/// the final point.
pub fn noisy_minimize(
    space: &VariationalSpace,
    lambda0: &[f64],
    p: &LiebLinigerParams,
    cfg: &OptimizerConfig,
    nm: &NoiseModel,
    eps: f64,
) -> Result<OptResult> {
    let f = |x: &[f64], draw: u64| {
        space
            .rep(x)
            .and_then(|rep| noisy_energy(&rep, p, eps, &nm.reseeded(draw)))
            .map(|e| Sample {
                value: e.mean.re,
                stderr: Some(e.stderr),
            })
            .map_err(|e| Error::Evaluation {
                lambda: x.to_vec(),
                source: Box::new(e),
            })
    };
    let d = optimizer::descend(&f, lambda0, cfg)?;
    let breakdown = optimizer::evaluate(space, &d.lambda, p)?;
    Ok(OptResult {
        lambda_star: d.lambda,
        f_star: d.f,
        breakdown,
        trace: d.trace,
        converged: d.converged,
        iterations: d.iterations,
        evaluations: d.evaluations,
    })
}
