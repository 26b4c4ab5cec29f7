//! Run configuration: TOML schema, validation and unit resolution.
//!
//! Every key is optional; missing keys take the library defaults. With
//! `units = "physical"` all rates (and `s`) are divided by `kappa` so the
//! run happens in `κ = 1` units. The factor is kept in [`RunConfig::unit`].

use std::fmt;
use std::path::Path;

use cqed_cmps::cavity::{self, JcParams};
use cqed_cmps::model::LiebLinigerParams;
use cqed_cmps::optimizer::{OptimizerConfig, ScaleCoordinate, SweepMode, VariationalSpace};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub system: RawSystem,
    #[serde(default)]
    pub model: RawModel,
    #[serde(default)]
    pub optimizer: RawOptimizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<RawNoise>,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSystem {
    pub mode: Option<String>,
    pub units: Option<String>,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    /// Alternative to `gamma`: `γ = g²/(κ C)` at the configured `g`.
    pub cooperativity: Option<f64>,
    pub g: Option<f64>,
    pub omega: Option<f64>,
    pub n_max: Option<usize>,
    pub s: Option<f64>,
    pub bond_dim: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub v: Option<f64>,
    pub mu: Option<f64>,
    pub v_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOptimizer {
    pub step: Option<f64>,
    pub fd_delta: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub max_move: Option<f64>,
    pub bounds: Option<Vec<[f64; 2]>>,
    pub scale: Option<ScaleCoordinate>,
    pub sweep_mode: Option<SweepMode>,
    pub start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNoise {
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    /// Interferometer offset in lab time.
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<String>,
    pub format: Option<String>,
    pub taus: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitConversion {
    /// Physical value of `κ`; all internal rates are physical / this.
    pub kappa: f64,
    pub physical: bool,
}

impl UnitConversion {
    #[cfg(test)]
    pub fn to_physical(self, rate: f64) -> f64 {
        rate * self.kappa
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum System {
    Cavity { jc: JcParams, s: f64 },
    Free { bond_dim: usize, s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Noise {
    pub shots: u64,
    pub seed: u64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub system: System,
    pub model: LiebLinigerParams,
    pub v_list: Option<Vec<f64>>,
    pub optimizer: OptimizerConfig,
    pub scale: ScaleCoordinate,
    pub sweep_mode: SweepMode,
    pub start: Option<Vec<f64>>,
    pub noise: Option<Noise>,
    pub out_dir: Option<String>,
    pub format: Format,
    pub taus: Taus,
    pub unit: UnitConversion,
}

/// `START:STEP:END`, inclusive of `END` up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Taus {
    pub start: f64,
    pub step: f64,
    pub end: f64,
}

impl Taus {
    pub fn parse(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(format!("taus `{s}` must look like START:STEP:END"));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("taus `{s}`: `{x}` is not a number"))
        };
        let t = Self {
            start: num(a)?,
            step: num(b)?,
            end: num(c)?,
        };
        if !(t.start >= 0.0) || !(t.step > 0.0) || !(t.end >= t.start) || !t.end.is_finite() {
            return Err(format!("taus `{s}` needs 0 <= START <= END and STEP > 0"));
        }
        if (t.end - t.start) / t.step > 1e6 {
            return Err(format!("taus `{s}` has more than a million points"));
        }
        Ok(t)
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl fmt::Display for Taus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.step, self.end)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config ({} problems):\n{}", .0.len(), bullets(.0))]
    Invalid(Vec<String>),
}

fn bullets(items: &[String]) -> String {
    items.iter().map(|i| format!("  - {i}\n")).collect()
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(&raw)
}

fn positive(errors: &mut Vec<String>, key: &str, x: f64) {
    if !(x > 0.0) || !x.is_finite() {
        errors.push(format!("{key} = {x}: must be positive and finite"));
    }
}

pub fn resolve(raw: &RawConfig) -> Result<RunConfig, ConfigError> {
    let mut errors = Vec::new();
    let sys = &raw.system;

    let physical = match sys.units.as_deref().unwrap_or("kappa") {
        "kappa" => false,
        "physical" => true,
        other => {
            errors.push(format!("system.units = {other:?}: expected \"kappa\" or \"physical\""));
            false
        }
    };
    let kappa_in = sys.kappa.unwrap_or(1.0);
    positive(&mut errors, "system.kappa", kappa_in);
    if !physical && sys.kappa.is_some_and(|k| k != 1.0) {
        errors.push(format!(
            "system.kappa = {kappa_in}: in kappa units kappa must be 1 (use units = \"physical\")"
        ));
    }
    let unit = UnitConversion {
        kappa: if physical && kappa_in > 0.0 { kappa_in } else { 1.0 },
        physical,
    };
    let rate = |x: f64| x / unit.kappa;
    if physical {
        log::info!("physical units: dividing all rates by kappa = {}", unit.kappa);
    }

    let g = rate(sys.g.unwrap_or(1.0));
    let omega = rate(sys.omega.unwrap_or(0.5));
    let s = rate(sys.s.unwrap_or(unit.kappa));
    positive(&mut errors, "system.s", s);
    let gamma = match (sys.gamma, sys.cooperativity) {
        (Some(_), Some(_)) => {
            errors.push("system: give either gamma or cooperativity, not both".into());
            0.0
        }
        (Some(gm), None) => rate(gm),
        (None, Some(c)) => {
            positive(&mut errors, "system.cooperativity", c);
            if g == 0.0 {
                errors.push("system.cooperativity needs a nonzero g".into());
            }
            g * g / c
        }
        (None, None) => 0.0,
    };
    let mode = sys.mode.as_deref().unwrap_or("cavity");
    let system = match mode {
        "cavity" => {
            if sys.bond_dim.is_some() {
                errors.push("system.bond_dim only applies to mode = \"free\"".into());
            }
            let n_max = sys.n_max.unwrap_or(cavity::DEFAULT_N_MAX);
            let jc = JcParams {
                g,
                omega,
                kappa: 1.0,
                gamma,
                n_max,
            };
            if let Err(e) = jc.validate() {
                errors.push(format!("system: {e}"));
            }
            Some(System::Cavity { jc, s })
        }
        "free" => {
            let bond_dim = sys.bond_dim.unwrap_or(2);
            if bond_dim == 0 {
                errors.push("system.bond_dim must be at least 1".into());
            }
            Some(System::Free { bond_dim, s })
        }
        other => {
            errors.push(format!("system.mode = {other:?}: expected \"cavity\" or \"free\""));
            None
        }
    };

    let mu = raw.model.mu.unwrap_or(1.0);
    let v = raw.model.v.unwrap_or(1.0);
    let model = LiebLinigerParams::new(v, mu)
        .map_err(|e| errors.push(format!("model.v: {e}")))
        .ok();
    if let Some(list) = &raw.model.v_list {
        if list.is_empty() {
            errors.push("model.v_list must not be empty".into());
        }
        for (i, &vi) in list.iter().enumerate() {
            if let Err(e) = LiebLinigerParams::new(vi, mu) {
                errors.push(format!("model.v_list[{i}]: {e}"));
            }
        }
    }

    let o = &raw.optimizer;
    let defaults = OptimizerConfig::default();
    let optimizer = OptimizerConfig {
        step: o.step.unwrap_or(defaults.step),
        fd_delta: o.fd_delta.unwrap_or(defaults.fd_delta),
        tol: o.tol.unwrap_or(defaults.tol),
        max_iter: o.max_iter.unwrap_or(defaults.max_iter),
        bounds: o.bounds.as_ref().map(|b| b.iter().map(|[lo, hi]| (*lo, *hi)).collect()),
        max_move: o.max_move,
    };
    let scale = o.scale.unwrap_or_default();
    let len = system.as_ref().map(|s| space_of(s, scale).len());
    if let Some(len) = len {
        if let Err(e) = optimizer.validate(len) {
            errors.push(format!("optimizer: {e}"));
        }
        if let Some(start) = &o.start {
            if start.len() != len {
                errors.push(format!(
                    "optimizer.start has {} entries, the space has {len}",
                    start.len()
                ));
            }
        }
    }

    let noise = raw.noise.as_ref().map(|n| {
        let noise = Noise {
            shots: n.shots.unwrap_or(1_000_000),
            seed: n.seed.unwrap_or(0),
            offset: n.offset.unwrap_or(1e-2),
        };
        if noise.shots == 0 {
            errors.push("noise.shots must be at least 1".into());
        }
        positive(&mut errors, "noise.offset", noise.offset);
        noise
    });

    let format = match raw.output.format.as_deref().unwrap_or("csv") {
        "csv" => Format::Csv,
        "json" => Format::Json,
        other => {
            errors.push(format!("output.format = {other:?}: expected \"csv\" or \"json\""));
            Format::Csv
        }
    };
    let taus = match Taus::parse(raw.output.taus.as_deref().unwrap_or("0:0.1:10")) {
        Ok(t) => Some(t),
        Err(e) => {
            errors.push(format!("output.taus: {e}"));
            None
        }
    };

    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }
    Ok(RunConfig {
        system: system.expect("checked"),
        model: model.expect("checked"),
        v_list: raw.model.v_list.clone(),
        optimizer,
        scale,
        sweep_mode: o.sweep_mode.unwrap_or_default(),
        start: o.start.clone(),
        noise,
        out_dir: raw.output.dir.clone(),
        format,
        taus: taus.expect("checked"),
        unit,
    })
}

fn space_of(system: &System, scale: ScaleCoordinate) -> VariationalSpace {
    match system {
        System::Cavity { jc, .. } => VariationalSpace::cavity3(jc.kappa, jc.gamma, jc.n_max).with_scale(scale),
        System::Free { bond_dim, .. } => VariationalSpace::free(*bond_dim).with_scale(scale),
    }
}

impl RunConfig {
    pub fn space(&self) -> VariationalSpace {
        space_of(&self.system, self.scale)
    }

    /// The configured point in the variational space: `optimizer.start` if
    /// given, otherwise the system's own `(g, Ω, s)` or the library default.
    pub fn start_point(&self) -> Vec<f64> {
        if let Some(start) = &self.start {
            return start.clone();
        }
        let space = self.space();
        match &self.system {
            System::Cavity { jc, s } => vec![jc.g, jc.omega, to_coordinate(self.scale, *s)],
            System::Free { s, .. } => {
                let mut lambda = space.default_start();
                *lambda.last_mut().expect("nonempty") = to_coordinate(self.scale, *s);
                lambda
            }
        }
    }

    /// Fully explicit config in κ units; reloading it reproduces this run.
    pub fn to_raw(&self) -> RawConfig {
        let (mode, jc, s, bond_dim) = match &self.system {
            System::Cavity { jc, s } => ("cavity", Some(jc), *s, None),
            System::Free { bond_dim, s } => ("free", None, *s, Some(*bond_dim)),
        };
        RawConfig {
            system: RawSystem {
                mode: Some(mode.into()),
                units: Some("kappa".into()),
                kappa: Some(1.0),
                gamma: jc.map(|j| j.gamma),
                cooperativity: None,
                g: jc.map(|j| j.g),
                omega: jc.map(|j| j.omega),
                n_max: jc.map(|j| j.n_max),
                s: Some(s),
                bond_dim,
            },
            model: RawModel {
                v: Some(self.model.v()),
                mu: Some(self.model.mu()),
                v_list: self.v_list.clone(),
            },
            optimizer: RawOptimizer {
                step: Some(self.optimizer.step),
                fd_delta: Some(self.optimizer.fd_delta),
                tol: Some(self.optimizer.tol),
                max_iter: Some(self.optimizer.max_iter),
                max_move: self.optimizer.max_move,
                bounds: self
                    .optimizer
                    .bounds
                    .as_ref()
                    .map(|b| b.iter().map(|&(lo, hi)| [lo, hi]).collect()),
                scale: Some(self.scale),
                sweep_mode: Some(self.sweep_mode),
                start: self.start.clone(),
            },
            noise: self.noise.as_ref().map(|n| RawNoise {
                shots: Some(n.shots),
                seed: Some(n.seed),
                offset: Some(n.offset),
            }),
            output: RawOutput {
                dir: self.out_dir.clone(),
                format: Some(
                    match self.format {
                        Format::Csv => "csv",
                        Format::Json => "json",
                    }
                    .into(),
                ),
                taus: Some(self.taus.to_string()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config serializes")
    }
}

fn to_coordinate(scale: ScaleCoordinate, s: f64) -> f64 {
    match scale {
        ScaleCoordinate::Log => s.ln(),
        ScaleCoordinate::Linear => s,
    }
}
