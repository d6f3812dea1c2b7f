//! Seeded synthetic panels with known treatment effects.
//!
//! Draws use ChaCha8 with one stream per firm, so changing the number of
//! firms or regions leaves other firms' draws untouched. Year effects and
//! common covariate shocks have their own streams.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csdid::{aggregate_att, estimate_cells, CsdidOptions, Scheme};
use crate::did::{estimate_pooled_markets, estimate_twfe_did, DidOptions};
use crate::error::{Error, Result};
use crate::panel::{sha256_hex, Covariate, Observation, Outcome, PanelDataset};
use crate::registry::{
    build_design, static_design, Exposure, MarketEvent, MarketKind, PanelDesign, PanelSpec, TreatmentRegistry,
    WindowBounds,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateDgp {
    pub covariate: Covariate,
    pub mean: f64,
    pub firm_sd: f64,
    pub year_sd: f64,
    pub noise_sd: f64,
    /// Weight in the outcome index.
    pub loading: f64,
}

fn default_covariates() -> Vec<CovariateDgp> {
    use Covariate::*;
    let c = |covariate, mean, firm_sd, year_sd, noise_sd, loading| CovariateDgp {
        covariate,
        mean,
        firm_sd,
        year_sd,
        noise_sd,
        loading,
    };
    vec![
        c(Hhi, 0.18, 0.12, 0.02, 0.04, 1.0),
        c(LnAge, 1.96, 0.8, 0.05, 0.15, -0.5),
        c(LnEmp, 7.57, 1.2, 0.05, 0.3, 0.3),
        c(Occar, 0.26, 0.5, 0.05, 0.3, 1.0),
        c(Der, 1.27, 1.0, 0.1, 0.6, -0.4),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketEffect {
    pub kind: MarketKind,
    /// Effect at event time 0.
    #[serde(default)]
    pub level: f64,
    /// Added per year of exposure.
    #[serde(default)]
    pub slope: f64,
    /// Explicit path by event time; the last entry persists. Overrides level and slope.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dynamics: Vec<f64>,
}

impl MarketEffect {
    pub fn at(&self, event_time: i32) -> f64 {
        if event_time < 0 {
            return 0.0;
        }
        if self.dynamics.is_empty() {
            self.level + self.slope * f64::from(event_time)
        } else {
            let i = (event_time as usize).min(self.dynamics.len() - 1);
            self.dynamics[i]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub kinds: [MarketKind; 2],
    /// Added while both markets are active.
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreTrend {
    pub kind: MarketKind,
    /// Differential linear trend of adopting regions, per year relative to adoption.
    pub slope: f64,
}

fn default_industries() -> Vec<char> {
    vec!['C', 'D', 'G', 'K', 'F']
}

fn default_roa_mean() -> f64 {
    3.69
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub seed: u64,
    pub start_year: i32,
    pub end_year: i32,
    pub firms_per_region: usize,
    /// Use the built-in market registry instead of `regions` and `events`.
    #[serde(default)]
    pub default_registry: bool,
    #[serde(default)]
    pub regions: Vec<String>,
    #[serde(default)]
    pub events: Vec<MarketEvent>,
    #[serde(default)]
    pub unit_effect_sd: f64,
    #[serde(default)]
    pub year_effect_sd: f64,
    #[serde(default)]
    pub noise_sd: f64,
    /// Mean outcome absent treatment.
    #[serde(default = "default_roa_mean")]
    pub roa_mean: f64,
    /// Mean of pre-tax minus post-tax outcome.
    #[serde(default)]
    pub tax_wedge: f64,
    #[serde(default = "default_covariates")]
    pub covariates: Vec<CovariateDgp>,
    #[serde(default)]
    pub effects: Vec<MarketEffect>,
    #[serde(default)]
    pub interaction: Option<Interaction>,
    #[serde(default)]
    pub pretrend: Option<PreTrend>,
    #[serde(default = "default_industries")]
    pub industries: Vec<char>,
    /// Probability that a firm-year is missing from the panel.
    #[serde(default)]
    pub missing_rate: f64,
}

impl DgpConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: DgpConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: DgpConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    /// Shipped configurations: placebo, effect_recovery, staggered_bias,
    /// contamination, replication.
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "placebo" => include_str!("../data/dgp/placebo.toml"),
            "effect_recovery" => include_str!("../data/dgp/effect_recovery.toml"),
            "staggered_bias" => include_str!("../data/dgp/staggered_bias.toml"),
            "contamination" => include_str!("../data/dgp/contamination.toml"),
            "replication" => include_str!("../data/dgp/replication.toml"),
            _ => return Err(Error::InvalidInput(format!("unknown preset {name:?}"))),
        };
        Self::from_toml_str(text)
    }

    pub const PRESETS: [&'static str; 5] = [
        "placebo",
        "effect_recovery",
        "staggered_bias",
        "contamination",
        "replication",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.firms_per_region == 0 {
            return bad("firms_per_region must be positive".into());
        }
        if self.end_year < self.start_year {
            return bad(format!("year range {}..{} is empty", self.start_year, self.end_year));
        }
        let sds = [
            ("unit_effect_sd", self.unit_effect_sd),
            ("year_effect_sd", self.year_effect_sd),
            ("noise_sd", self.noise_sd),
        ];
        for (name, v) in sds {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a nonnegative number, got {v}"));
            }
        }
        for c in &self.covariates {
            if [c.firm_sd, c.year_sd, c.noise_sd]
                .iter()
                .any(|v| !(*v >= 0.0 && v.is_finite()))
            {
                return bad(format!(
                    "{} standard deviations must be nonnegative",
                    c.covariate.name()
                ));
            }
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate must lie in [0, 1), got {}", self.missing_rate));
        }
        if self.industries.is_empty() || self.industries.iter().any(|c| !c.is_ascii_alphabetic()) {
            return bad("industries must be a nonempty list of letters".into());
        }
        if self.default_registry && (!self.regions.is_empty() || !self.events.is_empty()) {
            return bad("default_registry excludes explicit regions and events".into());
        }
        self.registry().map(|_| ())
    }

    pub fn registry(&self) -> Result<TreatmentRegistry> {
        if self.default_registry {
            Ok(TreatmentRegistry::default_registry())
        } else {
            TreatmentRegistry::new(self.regions.clone(), self.events.clone())
        }
    }

    pub fn bounds(&self) -> WindowBounds {
        WindowBounds {
            data_start: self.start_year,
            data_end: self.end_year,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        DgpConfig { seed, ..self.clone() }
    }

    pub fn effect_of(&self, kind: MarketKind) -> Option<&MarketEffect> {
        self.effects.iter().find(|e| e.kind == kind)
    }
}

/// Ground truth of a generated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    pub registry: TreatmentRegistry,
    pub effects: Vec<MarketEffect>,
    pub interaction: Option<Interaction>,
}

impl TrueEffects {
    /// Effect in a region-year counting only markets in `active` that have started.
    pub fn effect_under(&self, region: &str, year: i32, active: Exposure) -> f64 {
        let started = |k: MarketKind| {
            self.registry
                .start_year(region, k)
                .filter(|&s| s <= year && active.contains(k))
        };
        let mut total: f64 = self
            .effects
            .iter()
            .filter_map(|e| started(e.kind).map(|s| e.at(year - s)))
            .sum();
        if let Some(ix) = &self.interaction {
            if started(ix.kinds[0]).is_some() && started(ix.kinds[1]).is_some() {
                total += ix.effect;
            }
        }
        total
    }

    pub fn effect(&self, region: &str, year: i32) -> f64 {
        self.effect_under(region, year, Exposure::of(&MarketKind::ALL))
    }

    /// Effect attributable to `added` on top of every other market.
    pub fn additional(&self, region: &str, year: i32, added: Exposure) -> f64 {
        let all = Exposure::of(&MarketKind::ALL);
        self.effect_under(region, year, all) - self.effect_under(region, year, all.without(added))
    }

    /// Path of a single market by event time, ignoring interactions.
    pub fn event_time_effect(&self, kind: MarketKind, event_time: i32) -> f64 {
        self.effects
            .iter()
            .find(|e| e.kind == kind)
            .map_or(0.0, |e| e.at(event_time))
    }

    /// Firm-year average of the design's added effect over treated post observations.
    pub fn design_att(&self, spec: &PanelSpec, data: &PanelDataset) -> Result<f64> {
        let vals: Vec<f64> = data
            .observations
            .iter()
            .filter(|o| spec.in_window(o.year))
            .filter(|o| spec.treatment_year_of(&o.region).is_some_and(|t| o.year >= t))
            .map(|o| self.additional(&o.region, o.year, spec.added))
            .collect();
        mean_or_empty(&vals, || {
            format!("panel {}: no treated post observations", spec.panel_id)
        })
    }

    /// Firm-year average of the effect of `kind` wherever it is active.
    pub fn marginal_att(&self, kind: MarketKind, data: &PanelDataset) -> Result<f64> {
        let added = Exposure::of(&[kind]);
        let vals: Vec<f64> = data
            .observations
            .iter()
            .filter(|o| self.registry.start_year(&o.region, kind).is_some_and(|s| o.year >= s))
            .map(|o| self.additional(&o.region, o.year, added))
            .collect();
        mean_or_empty(&vals, || format!("no observations exposed to {kind}"))
    }
}

fn mean_or_empty(vals: &[f64], msg: impl FnOnce() -> String) -> Result<f64> {
    if vals.is_empty() {
        return Err(Error::EmptyCell(msg()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

const YEAR_STREAM: u64 = u64::MAX;
const COVARIATE_SHOCK_STREAM: u64 = u64::MAX - 1;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated standard deviation")
}

/// Draw a panel and its ground truth.
pub fn generate_panel(cfg: &DgpConfig) -> Result<(PanelDataset, TrueEffects)> {
    cfg.validate()?;
    let registry = cfg.registry()?;
    let years: Vec<i32> = (cfg.start_year..=cfg.end_year).collect();
    let truth = TrueEffects {
        registry: registry.clone(),
        effects: cfg.effects.clone(),
        interaction: cfg.interaction.clone(),
    };

    let mut yr = stream(cfg.seed, YEAR_STREAM);
    let year_effect: Vec<f64> = years
        .iter()
        .map(|_| normal(cfg.year_effect_sd).sample(&mut yr))
        .collect();
    let mut cs = stream(cfg.seed, COVARIATE_SHOCK_STREAM);
    let shocks: Vec<Vec<f64>> = years
        .iter()
        .map(|_| {
            cfg.covariates
                .iter()
                .map(|c| normal(c.year_sd).sample(&mut cs))
                .collect()
        })
        .collect();
    let baseline = cfg.roa_mean - cfg.covariates.iter().map(|c| c.loading * c.mean).sum::<f64>();

    let firms: Vec<(usize, &String, usize)> = registry
        .universe()
        .iter()
        .enumerate()
        .flat_map(|(ri, r)| (0..cfg.firms_per_region).map(move |f| (ri, r, f)))
        .collect();
    let observations: Vec<Vec<Observation>> = firms
        .par_iter()
        .map(|&(ri, region, f)| {
            let mut rng = stream(cfg.seed, ((ri as u64) << 32) | f as u64);
            let unit_effect = normal(cfg.unit_effect_sd).sample(&mut rng);
            let firm_cov: Vec<f64> = cfg
                .covariates
                .iter()
                .map(|c| normal(c.firm_sd).sample(&mut rng))
                .collect();
            let unit_id = format!("{region}-{f:04}");
            let industry = cfg.industries[f % cfg.industries.len()];
            let trend_start = cfg
                .pretrend
                .as_ref()
                .and_then(|p| registry.start_year(region, p.kind).map(|s| (s, p.slope)));
            let mut out = Vec::with_capacity(years.len());
            for (yi, &year) in years.iter().enumerate() {
                let eps = normal(cfg.noise_sd).sample(&mut rng);
                let tax = normal(0.2).sample(&mut rng);
                let mut obs = Observation::new(unit_id.clone(), region.clone(), industry, year);
                let mut index = 0.0;
                for (ci, c) in cfg.covariates.iter().enumerate() {
                    let mut x = c.mean + firm_cov[ci] + shocks[yi][ci] + normal(c.noise_sd).sample(&mut rng);
                    match c.covariate {
                        Covariate::Hhi => x = x.clamp(0.0, 1.0),
                        Covariate::Der | Covariate::LnAge => x = x.max(0.0),
                        _ => {}
                    }
                    index += c.loading * x;
                    obs.set_covariate(c.covariate, Some(x));
                }
                let trend = trend_start.map_or(0.0, |(s, slope)| slope * f64::from(year - s));
                let y = baseline + unit_effect + year_effect[yi] + index + truth.effect(region, year) + trend + eps;
                obs.roa = Some(y);
                obs.roa_before_tax = Some(y + cfg.tax_wedge + tax);
                obs.st = Some(false);
                let dropped = rng.random::<f64>() < cfg.missing_rate;
                if !dropped {
                    out.push(obs);
                }
            }
            out
        })
        .collect();
    let cfg_json = serde_json::to_vec(cfg)?;
    let mut panel = PanelDataset::new(observations.into_iter().flatten().collect(), sha256_hex(&cfg_json))?;
    panel.prepared = true;
    Ok((panel, truth))
}

/// Difference of post-minus-pre means between treated and control firm-years.
pub fn oracle_2x2(panel: &PanelDataset, spec: &PanelSpec, outcome: Outcome) -> Result<f64> {
    let mut sums = [(0.0, 0usize); 4];
    for o in &panel.observations {
        if !spec.in_window(o.year) {
            continue;
        }
        let Some(y) = o.outcome(outcome) else { continue };
        let post = o.year >= spec.treatment_year;
        let cell = if spec.is_treated(&o.region) {
            usize::from(post)
        } else if spec.is_control(&o.region) {
            2 + usize::from(post)
        } else {
            continue;
        };
        sums[cell].0 += y;
        sums[cell].1 += 1;
    }
    let mut means = [0.0; 4];
    for (i, (s, n)) in sums.iter().enumerate() {
        if *n == 0 {
            return Err(Error::EmptyCell(format!("panel {}: empty 2x2 cell {i}", spec.panel_id)));
        }
        means[i] = s / *n as f64;
    }
    Ok((means[1] - means[0]) - (means[3] - means[2]))
}

/// Run `f` on `reps` configs seeded `cfg.seed, cfg.seed + 1, ...` in parallel;
/// results come back in seed order.
pub fn replicate<T, F>(cfg: &DgpConfig, reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&DgpConfig) -> Result<T> + Sync,
{
    (0..reps as u64)
        .into_par_iter()
        .map(|r| f(&cfg.with_seed(cfg.seed.wrapping_add(r))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// Standard error of the mean across replications.
    pub mc_se: f64,
}

pub fn mc_summary(draws: &[f64]) -> McSummary {
    let n = draws.len();
    let nf = n as f64;
    let mean = draws.iter().sum::<f64>() / nf;
    let sd = if n > 1 {
        (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else {
        0.0
    };
    McSummary {
        n,
        mean,
        sd,
        mc_se: sd / nf.sqrt(),
    }
}

/// The staggered design used by the bias demonstration: every adopter of the
/// first configured market against regions that never adopt it.
pub fn staggered_demo_design(cfg: &DgpConfig) -> Result<PanelSpec> {
    let kind = cfg
        .effects
        .first()
        .ok_or_else(|| Error::Design("staggered demonstration needs a market effect".into()))?
        .kind;
    static_design(&cfg.registry()?, kind, cfg.bounds())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaggeredBiasRow {
    pub seed: u64,
    pub twfe: f64,
    pub csdid_simple: f64,
    pub truth: f64,
}

/// TWFE against the cohort-weighted group-time ATT on one draw.
pub fn demo_staggered_bias(cfg: &DgpConfig) -> Result<StaggeredBiasRow> {
    let spec = staggered_demo_design(cfg)?;
    let (data, truth) = generate_panel(cfg)?;
    let subset = spec.select(&data);
    let twfe = estimate_twfe_did(&subset, &spec, &DidOptions::without_covariates())?;
    let table = estimate_cells(&subset, &spec, &CsdidOptions::default())?;
    let simple = aggregate_att(&table, Scheme::Simple)?;
    Ok(StaggeredBiasRow {
        seed: cfg.seed,
        twfe: twfe.coefficient,
        csdid_simple: simple.estimate,
        truth: truth.design_att(&spec, &subset)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationRow {
    pub design: String,
    pub market: MarketKind,
    pub conditioning: Exposure,
    /// Coefficient of the market in the pooled two-dummy regression.
    pub pooled: f64,
    /// Clean-control DiD estimate.
    pub partitioned: f64,
    pub conditional_truth: f64,
    pub marginal_truth: f64,
}

/// Earliest reference year at which the design has both groups.
fn first_design(
    registry: &TreatmentRegistry,
    cond: Exposure,
    added: MarketKind,
    bounds: WindowBounds,
) -> Result<PanelSpec> {
    let mut starts: Vec<i32> = registry
        .events()
        .iter()
        .filter(|e| e.kind == added)
        .map(|e| e.start_year)
        .collect();
    starts.sort_unstable();
    starts.dedup();
    let base = if cond.is_empty() {
        "none".to_string()
    } else {
        cond.iter().map(MarketKind::slug).collect::<Vec<_>>().join("+")
    };
    let id = format!("{}-given-{base}", added.slug());
    let mut last = None;
    for y in starts {
        let design = PanelDesign::new(id.clone(), y, cond, Exposure::of(&[added]));
        match build_design(registry, &design, bounds) {
            Ok(spec) => return Ok(spec),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Registry(format!("no {added} events"))))
}

/// Clean designs of the contamination demonstration: A and B against no
/// policy, and B on top of A.
pub fn contamination_designs(cfg: &DgpConfig) -> Result<Vec<(MarketKind, PanelSpec)>> {
    let ix = cfg
        .interaction
        .as_ref()
        .ok_or_else(|| Error::Design("contamination demonstration needs an interaction".into()))?;
    let [a, b] = ix.kinds;
    let registry = cfg.registry()?;
    let bounds = cfg.bounds();
    Ok(vec![
        (a, first_design(&registry, Exposure::NONE, a, bounds)?),
        (b, first_design(&registry, Exposure::NONE, b, bounds)?),
        (b, first_design(&registry, Exposure::of(&[a]), b, bounds)?),
    ])
}

/// Pooled two-market regression against partitioned clean-control designs.
pub fn demo_contamination_bias(cfg: &DgpConfig) -> Result<Vec<ContaminationRow>> {
    let designs = contamination_designs(cfg)?;
    let ix = cfg.interaction.as_ref().expect("checked by contamination_designs");
    let (data, truth) = generate_panel(cfg)?;
    let opts = DidOptions::without_covariates();
    let pooled = estimate_pooled_markets(&data, &truth.registry, &ix.kinds, &opts)?;
    designs
        .into_iter()
        .map(|(market, spec)| {
            let subset = spec.select(&data);
            let est = estimate_twfe_did(&subset, &spec, &opts)?;
            Ok(ContaminationRow {
                design: spec.panel_id.clone(),
                market,
                conditioning: spec.conditioning,
                pooled: pooled.coefficient(market).expect("market in pooled model").estimate,
                partitioned: est.coefficient,
                conditional_truth: truth.design_att(&spec, &subset)?,
                marginal_truth: truth.marginal_att(market, &data)?,
            })
        })
        .collect()
}
