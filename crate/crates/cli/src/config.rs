use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use policy_panel::csdid::{BootstrapConfig, ControlRule};
use policy_panel::did::Endpoints;
use policy_panel::panel::{PrepareConfig, QuantileRule, WinsorConfig, WinsorMode};
use policy_panel::pipeline::AnalysisOptions;
use policy_panel::report::Format;
use policy_panel::{Covariate, Error, Outcome, Result};
use serde::{Deserialize, Serialize};

/// Settings shared by every command. A config file supplies defaults and
/// command-line flags override it field by field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Panel CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Market registry (TOML or JSON); the built-in registry when absent
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Design: 1..8 or static-<market>
    #[arg(long)]
    pub panel: Option<String>,
    /// roa or roa_before_tax
    #[arg(long)]
    pub outcome: Option<Outcome>,
    /// Keep only these industry letters, comma separated
    #[arg(long, value_delimiter = ',')]
    pub industries: Option<Vec<char>>,
    /// Apply winsorization (true/false)
    #[arg(long)]
    pub winsorize: Option<bool>,
    #[arg(long)]
    pub winsor_lower: Option<f64>,
    #[arg(long)]
    pub winsor_upper: Option<f64>,
    /// clamp or drop
    #[arg(long, value_parser = parse_winsor_mode)]
    pub winsor_mode: Option<WinsorMode>,
    /// linear or lower
    #[arg(long, value_parser = parse_quantile_rule)]
    pub winsor_rule: Option<QuantileRule>,
    /// Drop ST-flagged firm-years (true/false)
    #[arg(long)]
    pub exclude_st: Option<bool>,
    /// Include the five covariates (true/false)
    #[arg(long)]
    pub covariates: Option<bool>,
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Event-study endpoints: bin or drop
    #[arg(long, value_parser = parse_endpoints)]
    pub endpoints: Option<Endpoints>,
    /// CSDID comparison units: not_yet_treated or never_treated
    #[arg(long, value_parser = parse_control_rule)]
    pub control_rule: Option<ControlRule>,
    /// CSDID multiplier-bootstrap draws (0 disables)
    #[arg(long)]
    pub bootstrap_draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv, json or both
    #[arg(long)]
    pub format: Option<Format>,
}

fn parse_winsor_mode(s: &str) -> std::result::Result<WinsorMode, String> {
    match s {
        "clamp" => Ok(WinsorMode::Clamp),
        "drop" => Ok(WinsorMode::Drop),
        _ => Err(format!("expected clamp or drop, got {s:?}")),
    }
}

fn parse_quantile_rule(s: &str) -> std::result::Result<QuantileRule, String> {
    match s {
        "linear" => Ok(QuantileRule::Linear),
        "lower" => Ok(QuantileRule::Lower),
        _ => Err(format!("expected linear or lower, got {s:?}")),
    }
}

fn parse_endpoints(s: &str) -> std::result::Result<Endpoints, String> {
    match s {
        "bin" => Ok(Endpoints::Bin),
        "drop" => Ok(Endpoints::Drop),
        _ => Err(format!("expected bin or drop, got {s:?}")),
    }
}

fn parse_control_rule(s: &str) -> std::result::Result<ControlRule, String> {
    match s {
        "not_yet_treated" | "not-yet-treated" => Ok(ControlRule::NotYetTreated),
        "never_treated" | "never-treated" => Ok(ControlRule::NeverTreated),
        _ => Err(format!("expected not_yet_treated or never_treated, got {s:?}")),
    }
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => { $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )* };
}

impl RunConfig {
    /// Read a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data, &mut cfg.registry, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn overlay(mut self, flags: &RunConfig) -> Self {
        overlay!(
            self,
            flags,
            data,
            registry,
            panel,
            outcome,
            industries,
            winsorize,
            winsor_lower,
            winsor_upper,
            winsor_mode,
            winsor_rule,
            exclude_st,
            covariates,
            confidence,
            endpoints,
            control_rule,
            bootstrap_draws,
            seed,
            out,
            format
        );
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.confidence {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::InvalidInput(format!("confidence must lie in (0, 1), got {c}")));
            }
        }
        let (lo, hi) = (self.winsor_lower.unwrap_or(0.01), self.winsor_upper.unwrap_or(0.99));
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::InvalidInput(format!(
                "winsorization quantiles {lo}, {hi} must satisfy 0 <= lower < upper <= 1"
            )));
        }
        for p in [&self.data, &self.registry].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Io {
                    path: p.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                });
            }
        }
        Ok(())
    }

    pub fn prepare_config(&self) -> PrepareConfig {
        let winsor = self.winsorize.unwrap_or(true).then(|| WinsorConfig {
            lower_q: self.winsor_lower.unwrap_or(0.01),
            upper_q: self.winsor_upper.unwrap_or(0.99),
            mode: self.winsor_mode.unwrap_or_default(),
            rule: self.winsor_rule.unwrap_or_default(),
        });
        PrepareConfig {
            winsor,
            exclude_st: self.exclude_st.unwrap_or(true),
        }
    }

    pub fn industry_set(&self) -> Option<BTreeSet<char>> {
        self.industries
            .as_ref()
            .map(|v| v.iter().map(|c| c.to_ascii_uppercase()).collect())
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        let mut o = AnalysisOptions::default()
            .with_outcome(self.outcome.unwrap_or(Outcome::Roa))
            .with_confidence(self.confidence.unwrap_or(0.95));
        if self.covariates == Some(false) {
            o.did.covariates.clear();
            o.event_study.did.covariates.clear();
            o.arco.covariates.clear();
        }
        if self.covariates == Some(true) {
            o.csdid.covariates = Covariate::ALL.to_vec();
        }
        if let Some(e) = self.endpoints {
            o.event_study.endpoints = e;
        }
        if let Some(r) = self.control_rule {
            o.csdid.control_rule = r;
        }
        match self.bootstrap_draws {
            Some(0) | None => {}
            Some(draws) => {
                o.csdid.bootstrap = Some(BootstrapConfig {
                    draws,
                    seed: self.seed.unwrap_or(BootstrapConfig::default().seed),
                })
            }
        }
        o
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }
}
