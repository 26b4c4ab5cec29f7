//! Result emission. Every file carries the resolved config and the code
//! version; CSV files carry them as leading `#` comment lines.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use cqed_cmps::cmps::{CorrelationKind, CorrelationSeries};
use serde_json::{json, Value};

use crate::config::{Format, RunConfig};
use crate::Failure;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Sink {
    dir: Option<PathBuf>,
    config: Value,
    format: Format,
}

impl Sink {
    /// Creates the output directory, if any, and writes `resolved.toml`.
    pub fn new(cfg: &RunConfig) -> Result<Self, Failure> {
        let dir = cfg.out_dir.as_ref().map(PathBuf::from);
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
            fs::write(d.join("resolved.toml"), cfg.to_toml())?;
        }
        let mut config = serde_json::to_value(cfg.to_raw()).expect("config serializes");
        config["unit_conversion"] = json!(cfg.unit);
        Ok(Self {
            dir,
            config,
            format: cfg.format,
        })
    }

    fn emit(&self, name: &str, text: &str) -> Result<(), Failure> {
        match &self.dir {
            Some(d) => fs::write(d.join(name), text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    pub fn json(&self, name: &str, mut body: Value) -> Result<(), Failure> {
        body["config"] = self.config.clone();
        body["version"] = json!(VERSION);
        let mut text = serde_json::to_string_pretty(&body).expect("json serializes");
        text.push('\n');
        self.emit(name, &text)
    }

    pub fn series(&self, stem: &str, series: &CorrelationSeries, density: f64) -> Result<(), Failure> {
        let normalized = series.normalized(density);
        match self.format {
            Format::Csv => self.emit(&format!("{stem}.csv"), &csv(series, &normalized, &self.config)),
            Format::Json => self.json(
                &format!("{stem}.json"),
                json!({
                    "kind": match series.kind {
                        CorrelationKind::G1 => "g1",
                        CorrelationKind::G2 => "g2",
                    },
                    "tau": series.taus,
                    "re": series.values.iter().map(|z| z.re).collect::<Vec<_>>(),
                    "im": series.values.iter().map(|z| z.im).collect::<Vec<_>>(),
                    "normalized": normalized,
                }),
            ),
        }
    }
}

/// 17 significant digits, enough to round-trip every f64.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv(series: &CorrelationSeries, normalized: &[f64], config: &Value) -> String {
    let mut out = format!("# cqsim {VERSION}\n# config {config}\ntau,re,im,normalized\n");
    for ((t, z), n) in series.taus.iter().zip(&series.values).zip(normalized) {
        out.push_str(&format!("{},{},{},{}\n", num(*t), num(z.re), num(z.im), num(*n)));
    }
    out
}
