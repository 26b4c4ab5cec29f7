//! Variational search: finite-difference gradients and descent over either
//! experimental knobs `(g, Ω, s)` of the Jaynes–Cummings simulator or the
//! entries of a free cMPS, plus sweeps over the interaction strength.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{CMatrix, C64, ZERO};
use crate::cavity::{jaynes_cummings, JcParams};
use crate::cmps::{self, CmpsRep, FreeParams};
use crate::error::{Error, Result};
use crate::model::{self, EnergyBreakdown, LiebLinigerParams};

/// How the scale `s` appears in the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScaleCoordinate {
    #[default]
    Log,
    Linear,
}

impl ScaleCoordinate {
    fn scale_at(self, x: f64) -> f64 {
        match self {
            Self::Log => x.exp(),
            Self::Linear => x,
        }
    }

    fn coordinate_of(self, s: f64) -> f64 {
        match self {
            Self::Log => s.ln(),
            Self::Linear => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariationalSpace {
    /// `λ = (g, Ω, log s)` at fixed `(κ, γ, n_max)`.
    Cavity3 {
        kappa: f64,
        gamma: f64,
        n_max: usize,
        scale: ScaleCoordinate,
    },
    /// `λ = (K: D² reals, R: 2D² reals, log s)`.
    FreeCmps { d: usize, scale: ScaleCoordinate },
}

impl VariationalSpace {
    pub fn cavity3(kappa: f64, gamma: f64, n_max: usize) -> Self {
        Self::Cavity3 {
            kappa,
            gamma,
            n_max,
            scale: ScaleCoordinate::Log,
        }
    }

    pub fn free(d: usize) -> Self {
        Self::FreeCmps {
            d,
            scale: ScaleCoordinate::Log,
        }
    }

    pub fn with_scale(self, coordinate: ScaleCoordinate) -> Self {
        match self {
            Self::Cavity3 {
                kappa, gamma, n_max, ..
            } => Self::Cavity3 {
                kappa,
                gamma,
                n_max,
                scale: coordinate,
            },
            Self::FreeCmps { d, .. } => Self::FreeCmps { d, scale: coordinate },
        }
    }

    pub fn scale_coordinate(&self) -> ScaleCoordinate {
        match self {
            Self::Cavity3 { scale, .. } | Self::FreeCmps { scale, .. } => *scale,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Cavity3 { .. } => 3,
            Self::FreeCmps { d, .. } => 3 * d * d + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scale_of(&self, lambda: &[f64]) -> f64 {
        self.scale_coordinate().scale_at(lambda[self.len() - 1])
    }

    fn check_len(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, space expects {}",
                lambda.len(),
                self.len()
            )));
        }
        if lambda.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite parameter in {lambda:?}")));
        }
        Ok(())
    }

    pub fn jc_params(&self, lambda: &[f64]) -> Result<JcParams> {
        match self {
            Self::Cavity3 {
                kappa, gamma, n_max, ..
            } => {
                self.check_len(lambda)?;
                JcParams::new(lambda[0], lambda[1], *kappa, *gamma, *n_max)
            }
            Self::FreeCmps { .. } => Err(Error::Structure("free cMPS space has no cavity parameters".into())),
        }
    }

    pub fn free_params(&self, lambda: &[f64]) -> Result<FreeParams> {
        match self {
            Self::FreeCmps { d, .. } => {
                self.check_len(lambda)?;
                Ok(decode_free(*d, lambda, self.scale_of(lambda)))
            }
            Self::Cavity3 { .. } => Err(Error::Structure("cavity space has no free cMPS parameters".into())),
        }
    }

    pub fn rep(&self, lambda: &[f64]) -> Result<CmpsRep> {
        self.check_len(lambda)?;
        let s = self.scale_of(lambda);
        match self {
            Self::Cavity3 { .. } => cmps::from_cavity(&jaynes_cummings(&self.jc_params(lambda)?)?, s),
            Self::FreeCmps { .. } => cmps::from_free(&self.free_params(lambda)?),
        }
    }

    /// Cavity: `(g, Ω, s) = (1, 0.5, 1)`. Free: small reproducible random
    /// entries with `s = 1`.
    pub fn default_start(&self) -> Vec<f64> {
        let coord = self.scale_coordinate();
        match self {
            Self::Cavity3 { .. } => vec![1.0, 0.5, coord.coordinate_of(1.0)],
            Self::FreeCmps { d, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
                let normal = Normal::new(0.0, 0.3).expect("valid normal");
                let mut lambda: Vec<f64> = (0..3 * d * d).map(|_| normal.sample(&mut rng)).collect();
                lambda.push(coord.coordinate_of(1.0));
                lambda
            }
        }
    }

    /// Free-cMPS parameter vector for given `(K, R, s)`.
    pub fn encode_free(&self, p: &FreeParams) -> Result<Vec<f64>> {
        match self {
            Self::FreeCmps { d, scale } if p.dim() == *d => {
                let mut lambda = encode_free_matrices(&p.k, &p.r);
                lambda.push(scale.coordinate_of(p.s));
                Ok(lambda)
            }
            _ => Err(Error::Structure(
                "encode_free needs a free space of matching dimension".into(),
            )),
        }
    }

    /// Embeds an optimum of bond dimension `D` into dimension `D' > D`.
    ///
    /// `K` and `R` are zero-padded; each added basis state is linked into the
    /// original block by an `R` entry of size `link`, which makes the added
    /// states transient so the stationary state stays unique. A matching
    /// `K` coupling keeps the stationary state, and so the energy, unchanged.
    pub fn embed_free(&self, lambda: &[f64], larger: usize, link: f64) -> Result<(VariationalSpace, Vec<f64>)> {
        let Self::FreeCmps { d, scale } = self else {
            return Err(Error::Structure("only free cMPS spaces nest".into()));
        };
        if larger < *d {
            return Err(Error::InvalidParameter(format!("cannot embed D = {d} into {larger}")));
        }
        let p = self.free_params(lambda)?;
        let mut k = CMatrix::zeros(larger, larger);
        let mut r = CMatrix::zeros(larger, larger);
        k.view_mut((0, 0), (*d, *d)).copy_from(&p.k);
        r.view_mut((0, 0), (*d, *d)).copy_from(&p.r);
        for extra in *d..larger {
            r[((extra - d) % d, extra)] = C64::new(link, 0.0);
        }
        // cancel the R†R coupling from new into old states so that Q has no
        // new-old block and ρ ⊕ 0 stays exactly stationary
        let rr = r.adjoint() * &r;
        for n in *d..larger {
            for o in 0..*d {
                let z = C64::new(0.0, 0.5) * rr[(n, o)];
                k[(n, o)] = z;
                k[(o, n)] = z.conj();
            }
        }
        let space = Self::FreeCmps {
            d: larger,
            scale: *scale,
        };
        let lambda = space.encode_free(&FreeParams { k, r, s: p.s })?;
        Ok((space, lambda))
    }
}

fn encode_free_matrices(k: &CMatrix, r: &CMatrix) -> Vec<f64> {
    let d = k.nrows();
    let mut out = Vec::with_capacity(3 * d * d);
    for i in 0..d {
        out.push(k[(i, i)].re);
    }
    for j in 0..d {
        for i in 0..j {
            out.push(k[(i, j)].re);
            out.push(k[(i, j)].im);
        }
    }
    for z in r.iter() {
        out.push(z.re);
        out.push(z.im);
    }
    out
}

fn decode_free(d: usize, lambda: &[f64], s: f64) -> FreeParams {
    let mut k = CMatrix::from_element(d, d, ZERO);
    let mut it = lambda.iter().copied();
    let mut next = || it.next().expect("length checked");
    for i in 0..d {
        k[(i, i)] = C64::new(next(), 0.0);
    }
    for j in 0..d {
        for i in 0..j {
            let z = C64::new(next(), next());
            k[(i, j)] = z;
            k[(j, i)] = z.conj();
        }
    }
    let mut r = CMatrix::from_element(d, d, ZERO);
    for z in r.iter_mut() {
        *z = C64::new(next(), next());
    }
    FreeParams { k, r, s }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Initial descent step ε.
    pub step: f64,
    /// Relative finite-difference step.
    pub fd_delta: f64,
    /// Stop once `|Δf|` between successive iterates falls below this.
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Optional cap on the Euclidean length of one update `ε∇f`.
    #[serde(default)]
    pub max_move: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step: 1e-2,
            fd_delta: 1e-4,
            tol: 1e-9,
            max_iter: 5000,
            bounds: None,
            max_move: None,
        }
    }
}

/// Descent gives up once the step has been halved below this.
pub const MIN_STEP: f64 = 1e-12;

impl OptimizerConfig {
    pub fn validate(&self, len: usize) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.step) || !positive(self.fd_delta) || !positive(self.tol) || self.max_iter < 1 {
            return Err(Error::InvalidParameter(
                "optimizer step, fd_delta and tol must be positive and max_iter >= 1".into(),
            ));
        }
        if self.max_move.is_some_and(|m| !positive(m)) {
            return Err(Error::InvalidParameter("max_move must be positive".into()));
        }
        if let Some(b) = &self.bounds {
            if b.len() != len {
                return Err(Error::DimensionMismatch(format!(
                    "{} bounds for {len} parameters",
                    b.len()
                )));
            }
            if b.iter().any(|(lo, hi)| !(lo <= hi)) {
                return Err(Error::InvalidParameter("bounds must satisfy lo <= hi".into()));
            }
        }
        Ok(())
    }

    fn project(&self, lambda: &mut [f64]) {
        if let Some(b) = &self.bounds {
            for (x, (lo, hi)) in lambda.iter_mut().zip(b) {
                *x = x.clamp(*lo, *hi);
            }
        }
    }

    fn within(&self, lambda: &[f64]) -> bool {
        match &self.bounds {
            Some(b) => lambda.iter().zip(b).all(|(x, (lo, hi))| lo <= x && x <= hi),
            None => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub f: f64,
    pub accepted: bool,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptResult {
    pub lambda_star: Vec<f64>,
    pub f_star: f64,
    pub breakdown: EnergyBreakdown,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

impl OptResult {
    pub fn accepted_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.trace.iter().filter(|t| t.accepted).map(|t| t.f)
    }

    pub fn is_monotone(&self) -> bool {
        let f: Vec<f64> = self.accepted_values().collect();
        f.windows(2).all(|w| w[1] <= w[0])
    }
}

/// One objective evaluation, possibly noisy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub stderr: Option<f64>,
}

pub fn evaluate(space: &VariationalSpace, lambda: &[f64], p: &LiebLinigerParams) -> Result<EnergyBreakdown> {
    space
        .rep(lambda)
        .and_then(|rep| model::energy_density(&rep, p))
        .map_err(|e| Error::Evaluation {
            lambda: lambda.to_vec(),
            source: Box::new(e),
        })
}

fn probe_step(x: f64, fd_delta: f64) -> f64 {
    fd_delta * x.abs().max(1.0)
}

/// Central differences of an arbitrary objective. `draw` numbers each probe
/// so noisy objectives stay reproducible under parallel evaluation.
pub fn fd_gradient<F>(
    f: &F,
    lambda: &[f64],
    fd_delta: f64,
    bounds: Option<&[(f64, f64)]>,
    draw: u64,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], u64) -> Result<Sample> + Sync,
{
    (0..lambda.len())
        .into_par_iter()
        .map(|i| {
            let h = probe_step(lambda[i], fd_delta);
            let (mut lo, mut hi) = (lambda[i] - h, lambda[i] + h);
            if let Some(b) = bounds {
                lo = lo.max(b[i].0);
                hi = hi.min(b[i].1);
            }
            let at = |x: f64, k: u64| -> Result<f64> {
                let mut probe = lambda.to_vec();
                probe[i] = x;
                f(&probe, draw + 2 * i as u64 + k).map(|s| s.value)
            };
            let fail = |e: Error| Error::Gradient {
                component: i,
                source: Box::new(e),
            };
            let fp = at(hi, 0).map_err(fail)?;
            let fm = at(lo, 1).map_err(fail)?;
            Ok((fp - fm) / (hi - lo))
        })
        .collect()
}

/// Central-difference gradient of the energy density, component step
/// `fd_delta · max(|λᵢ|, 1)`.
pub fn grad_fd(space: &VariationalSpace, lambda: &[f64], p: &LiebLinigerParams, fd_delta: f64) -> Result<Vec<f64>> {
    space.check_len(lambda)?;
    let f = |x: &[f64], _: u64| {
        evaluate(space, x, p).map(|e| Sample {
            value: e.total,
            stderr: None,
        })
    };
    fd_gradient(&f, lambda, fd_delta, None, 0)
}

/// Outcome of the generic descent, before the caller attaches a breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub lambda: Vec<f64>,
    pub f: f64,
    pub stderr: Option<f64>,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Gradient descent `λ ← λ − ε∇f` until `|f(λ) − f(λ′)| < tol`.
///
/// A trial step that raises `f` is rejected and retried with ε halved; after
/// each accepted step ε may double again, up to its configured value. For
/// noisy objectives the tolerance is widened to `3·stderr`.
pub fn descend<F>(f: &F, lambda0: &[f64], cfg: &OptimizerConfig) -> Result<Descent>
where
    F: Fn(&[f64], u64) -> Result<Sample> + Sync,
{
    cfg.validate(lambda0.len())?;
    if !cfg.within(lambda0) {
        return Err(Error::InvalidParameter(format!(
            "start point {lambda0:?} is outside the bounds"
        )));
    }
    let n = lambda0.len() as u64;
    let mut draw: u64 = 0;
    let mut lambda = lambda0.to_vec();
    let mut current = f(&lambda, draw)?;
    draw += 1;
    let mut evaluations = 1;
    let mut trace = vec![TraceEntry {
        iteration: 0,
        f: current.value,
        accepted: true,
        stderr: current.stderr,
    }];
    let mut eps = cfg.step;
    let mut converged = false;
    let mut iterations = 0;
    'outer: for iteration in 1..=cfg.max_iter {
        iterations = iteration;
        let grad = fd_gradient(f, &lambda, cfg.fd_delta, cfg.bounds.as_deref(), draw)?;
        draw += 2 * n;
        evaluations += 2 * lambda.len();
        let tol = cfg.tol.max(3.0 * current.stderr.unwrap_or(0.0));
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        loop {
            let shrink = match cfg.max_move {
                Some(m) if eps * norm > m => m / (eps * norm),
                _ => 1.0,
            };
            let mut trial: Vec<f64> = lambda.iter().zip(&grad).map(|(x, g)| x - shrink * eps * g).collect();
            cfg.project(&mut trial);
            let sample = f(&trial, draw);
            draw += 1;
            evaluations += 1;
            match sample {
                Ok(s) if s.value <= current.value => {
                    let change = (current.value - s.value).abs();
                    lambda = trial;
                    current = s;
                    trace.push(TraceEntry {
                        iteration,
                        f: s.value,
                        accepted: true,
                        stderr: s.stderr,
                    });
                    if change < tol {
                        converged = true;
                        break 'outer;
                    }
                    eps = (eps * 2.0).min(cfg.step);
                    break;
                }
                Ok(s) => {
                    trace.push(TraceEntry {
                        iteration,
                        f: s.value,
                        accepted: false,
                        stderr: s.stderr,
                    });
                    if s.value - current.value < tol {
                        converged = true;
                        break 'outer;
                    }
                }
                Err(e) => {
                    log::debug!("trial step rejected: {e}");
                    trace.push(TraceEntry {
                        iteration,
                        f: f64::NAN,
                        accepted: false,
                        stderr: None,
                    });
                }
            }
            eps *= 0.5;
            if eps < MIN_STEP {
                break 'outer;
            }
        }
    }
    Ok(Descent {
        lambda,
        f: current.value,
        stderr: current.stderr,
        trace,
        converged,
        iterations,
        evaluations,
    })
}

pub fn minimize(
    space: &VariationalSpace,
    lambda0: &[f64],
    p: &LiebLinigerParams,
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    space.check_len(lambda0)?;
    let f = |x: &[f64], _: u64| {
        evaluate(space, x, p).map(|e| Sample {
            value: e.total,
            stderr: None,
        })
    };
    let d = descend(&f, lambda0, cfg)?;
    let breakdown = evaluate(space, &d.lambda, p)?;
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Each entry starts from the previous optimum.
    #[default]
    Warm,
    /// Every entry starts from `λ0`; entries run in parallel.
    Cold,
    /// Runs both and keeps the lower energy.
    Best,
}

/// Warm and cold optima closer than this count as the same minimum.
pub const MULTI_START_AGREEMENT: f64 = 1e-4;

#[derive(Debug)]
pub struct SweepEntry {
    pub v: f64,
    pub outcome: Result<OptResult>,
    /// Set when warm and cold starts disagree by more than
    /// [`MULTI_START_AGREEMENT`] and the lower one was kept.
    pub multi_start: bool,
}

pub fn sweep(
    space: &VariationalSpace,
    v_list: &[f64],
    mu: f64,
    lambda0: &[f64],
    cfg: &OptimizerConfig,
    mode: SweepMode,
) -> Result<Vec<SweepEntry>> {
    if v_list.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep needs at least one interaction strength".into(),
        ));
    }
    let params: Vec<Result<LiebLinigerParams>> = v_list.iter().map(|&v| LiebLinigerParams::new(v, mu)).collect();
    let cold = || -> Vec<Result<OptResult>> {
        params
            .par_iter()
            .map(|p| match p {
                Ok(p) => minimize(space, lambda0, p, cfg),
                Err(e) => Err(Error::InvalidParameter(e.to_string())),
            })
            .collect()
    };
    let warm = || -> Vec<Result<OptResult>> {
        let mut start = lambda0.to_vec();
        let mut out = Vec::with_capacity(params.len());
        for p in &params {
            let r = match p {
                Ok(p) => minimize(space, &start, p, cfg),
                Err(e) => Err(Error::InvalidParameter(e.to_string())),
            };
            if let Ok(res) = &r {
                start.clone_from(&res.lambda_star);
            }
            out.push(r);
        }
        out
    };
    let entries = match mode {
        SweepMode::Warm => warm().into_iter().map(|r| (r, false)).collect::<Vec<_>>(),
        SweepMode::Cold => cold().into_iter().map(|r| (r, false)).collect(),
        SweepMode::Best => {
            let (w, c) = rayon::join(warm, cold);
            w.into_iter()
                .zip(c)
                .map(|(w, c)| match (w, c) {
                    (Ok(w), Ok(c)) => {
                        let disagree = (w.f_star - c.f_star).abs() > MULTI_START_AGREEMENT;
                        (Ok(if c.f_star < w.f_star { c } else { w }), disagree)
                    }
                    (Ok(w), Err(_)) => (Ok(w), false),
                    (Err(_), Ok(c)) => (Ok(c), false),
                    (Err(e), Err(_)) => (Err(e), false),
                })
                .collect()
        }
    };
    Ok(v_list
        .iter()
        .zip(entries)
        .map(|(&v, (outcome, multi_start))| SweepEntry {
            v,
            outcome,
            multi_start,
        })
        .collect())
}
