#![allow(dead_code)]

use policy_panel::registry::static_design;
use policy_panel::simulate::DgpConfig;
use policy_panel::{MarketKind, PanelSpec};

/// Four regions, two adopting pollution trading in 2009.
pub fn small_static(seed: u64) -> DgpConfig {
    let mut cfg = DgpConfig::from_toml_str(
        r#"
seed = 1
start_year = 2005
end_year = 2012
firms_per_region = 6
unit_effect_sd = 1.0
year_effect_sd = 0.5
noise_sd = 1.0
regions = ["R1", "R2", "R3", "R4"]
events = [
    { region = "R1", kind = "pollution", start_year = 2009 },
    { region = "R2", kind = "pollution", start_year = 2009 },
]

[[effects]]
kind = "pollution"
level = 1.5
"#,
    )
    .unwrap();
    cfg.seed = seed;
    cfg
}

/// Six regions adopting carbon trading in 2007 and 2010, two never.
pub fn small_staggered(seed: u64) -> DgpConfig {
    let mut cfg = DgpConfig::from_toml_str(
        r#"
seed = 1
start_year = 2004
end_year = 2013
firms_per_region = 5
unit_effect_sd = 1.0
year_effect_sd = 0.5
noise_sd = 1.0
regions = ["R1", "R2", "R3", "R4", "R5", "R6"]
events = [
    { region = "R1", kind = "carbon", start_year = 2007 },
    { region = "R2", kind = "carbon", start_year = 2007 },
    { region = "R3", kind = "carbon", start_year = 2010 },
    { region = "R4", kind = "carbon", start_year = 2010 },
]

[[effects]]
kind = "carbon"
level = 0.5
slope = 0.3
"#,
    )
    .unwrap();
    cfg.seed = seed;
    cfg
}

pub fn static_spec(cfg: &DgpConfig, kind: MarketKind) -> PanelSpec {
    static_design(&cfg.registry().unwrap(), kind, cfg.bounds()).unwrap()
}
