//! Market-event registry and the mechanical construction of clean
//! treated/control panels over overlapping policy rollouts.
//!
//! A region's *exposure* in a year is the set of markets whose pilot has
//! started there by that year. A [`PanelDesign`] names a conditioning
//! exposure shared by both groups and the market(s) added for the treated
//! group; [`build_design`] selects the regions, finds each treated region's
//! treatment year and widens the estimation window around the reference year
//! for as long as every selected region keeps to the design pattern.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{GroupSplit, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketKind {
    Pollution,
    Carbon,
    Energy,
    GreenElectricity,
}

impl MarketKind {
    pub const ALL: [MarketKind; 4] = [
        MarketKind::Pollution,
        MarketKind::Carbon,
        MarketKind::Energy,
        MarketKind::GreenElectricity,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            MarketKind::Pollution => "Poll",
            MarketKind::Carbon => "CO2",
            MarketKind::Energy => "Energy",
            MarketKind::GreenElectricity => "Green",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            MarketKind::Pollution => "pollution",
            MarketKind::Carbon => "carbon",
            MarketKind::Energy => "energy",
            MarketKind::GreenElectricity => "green",
        }
    }
}

impl fmt::Display for MarketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for MarketKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pollution" | "poll" => Ok(MarketKind::Pollution),
            "carbon" | "co2" => Ok(MarketKind::Carbon),
            "energy" => Ok(MarketKind::Energy),
            "green" | "greenelectricity" | "green_electricity" | "green-electricity" => {
                Ok(MarketKind::GreenElectricity)
            }
            _ => Err(Error::InvalidInput(format!("unknown market kind `{s}`"))),
        }
    }
}

/// A set of market kinds, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(from = "Vec<MarketKind>", into = "Vec<MarketKind>")]
pub struct Exposure(u8);

impl Exposure {
    pub const NONE: Exposure = Exposure(0);

    pub fn of(kinds: &[MarketKind]) -> Self {
        kinds.iter().copied().collect()
    }

    pub fn contains(self, kind: MarketKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn with(self, kind: MarketKind) -> Self {
        Exposure(self.0 | kind.bit())
    }

    pub fn without(self, other: Exposure) -> Self {
        Exposure(self.0 & !other.0)
    }

    pub fn union(self, other: Exposure) -> Self {
        Exposure(self.0 | other.0)
    }

    pub fn is_subset(self, other: Exposure) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = MarketKind> {
        MarketKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }

    /// Table-style group letter for this exposure, if the combination is one
    /// of the eight observed permutations.
    pub fn group_letter(self) -> Option<char> {
        use MarketKind::*;
        let letter = match self {
            e if e == Exposure::NONE => 'A',
            e if e == Exposure::of(&[Carbon, Energy]) => 'B',
            e if e == Exposure::of(&[Carbon]) => 'C',
            e if e == Exposure::of(&[Carbon, GreenElectricity]) => 'D',
            e if e == Exposure::of(&[Pollution]) => 'E',
            e if e == Exposure::of(&[Pollution, Carbon]) => 'F',
            e if e == Exposure::of(&[Pollution, Energy]) => 'G',
            e if e == Exposure::of(&[Pollution, GreenElectricity]) => 'H',
            _ => return None,
        };
        Some(letter)
    }
}

impl FromIterator<MarketKind> for Exposure {
    fn from_iter<I: IntoIterator<Item = MarketKind>>(iter: I) -> Self {
        iter.into_iter().fold(Exposure::NONE, Exposure::with)
    }
}

impl From<Vec<MarketKind>> for Exposure {
    fn from(v: Vec<MarketKind>) -> Self {
        v.into_iter().collect()
    }
}

impl From<Exposure> for Vec<MarketKind> {
    fn from(e: Exposure) -> Self {
        e.iter().collect()
    }
}

impl fmt::Display for Exposure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("None");
        }
        let names: Vec<&str> = self.iter().map(MarketKind::short_name).collect();
        f.write_str(&names.join(" + "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketEvent {
    pub region: String,
    pub kind: MarketKind,
    pub start_year: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegistryFile {
    universe: Vec<String>,
    events: Vec<MarketEvent>,
}

/// Immutable registry of market launches over a fixed region universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegistryFile", into = "RegistryFile")]
pub struct TreatmentRegistry {
    universe: Vec<String>,
    events: Vec<MarketEvent>,
    #[serde(skip)]
    starts: HashMap<String, [Option<i32>; 4]>,
}

impl TryFrom<RegistryFile> for TreatmentRegistry {
    type Error = Error;

    fn try_from(f: RegistryFile) -> Result<Self> {
        TreatmentRegistry::new(f.universe, f.events)
    }
}

impl From<TreatmentRegistry> for RegistryFile {
    fn from(r: TreatmentRegistry) -> Self {
        RegistryFile {
            universe: r.universe,
            events: r.events,
        }
    }
}

const DEFAULT_REGISTRY: &str = include_str!("../data/default_registry.toml");

impl TreatmentRegistry {
    pub fn new(universe: Vec<String>, events: Vec<MarketEvent>) -> Result<Self> {
        let mut starts: HashMap<String, [Option<i32>; 4]> = HashMap::new();
        for r in &universe {
            if starts.insert(r.clone(), [None; 4]).is_some() {
                return Err(Error::Registry(format!("region `{r}` listed twice in universe")));
            }
        }
        for e in &events {
            let slot = starts
                .get_mut(&e.region)
                .ok_or_else(|| Error::Registry(format!("event region `{}` is not in the universe", e.region)))?;
            let cell = &mut slot[e.kind as usize];
            if cell.is_some() {
                return Err(Error::Registry(format!(
                    "more than one {} event for region `{}`",
                    e.kind, e.region
                )));
            }
            *cell = Some(e.start_year);
        }
        Ok(TreatmentRegistry {
            universe,
            events,
            starts,
        })
    }

    /// The registry shipped with the crate (`data/default_registry.toml`).
    pub fn default_registry() -> Self {
        Self::from_toml_str(DEFAULT_REGISTRY).expect("bundled registry is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: RegistryFile = toml::from_str(s)?;
        file.try_into()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: RegistryFile = serde_json::from_str(s)?;
        file.try_into()
    }

    /// Load a registry file; `.json` is parsed as JSON, anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RegistryFile::from(self.clone())).expect("registry serializes")
    }

    pub fn universe(&self) -> &[String] {
        &self.universe
    }

    pub fn events(&self) -> &[MarketEvent] {
        &self.events
    }

    pub fn contains_region(&self, region: &str) -> bool {
        self.starts.contains_key(region)
    }

    pub fn start_year(&self, region: &str, kind: MarketKind) -> Option<i32> {
        self.starts.get(region).and_then(|s| s[kind as usize])
    }

    /// Markets active in `region` during `year`.
    pub fn exposure_set(&self, region: &str, year: i32) -> Result<Exposure> {
        let starts = self
            .starts
            .get(region)
            .ok_or_else(|| Error::UnknownRegion(region.to_string()))?;
        Ok(MarketKind::ALL
            .into_iter()
            .filter(|k| starts[*k as usize].is_some_and(|s| s <= year))
            .collect())
    }

    /// Apply a consistent renaming to every region code.
    pub fn relabel(&self, rename: impl Fn(&str) -> String) -> Result<Self> {
        let universe = self.universe.iter().map(|r| rename(r)).collect();
        let events = self
            .events
            .iter()
            .map(|e| MarketEvent {
                region: rename(&e.region),
                ..e.clone()
            })
            .collect();
        Self::new(universe, events)
    }
}

/// One of the calendar periods in which the group structure is constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub index: u8,
    pub start: i32,
    pub end: i32,
}

pub const PERIODS: [Period; 6] = [
    Period {
        index: 0,
        start: 2000,
        end: 2006,
    },
    Period {
        index: 1,
        start: 2007,
        end: 2012,
    },
    Period {
        index: 2,
        start: 2013,
        end: 2013,
    },
    Period {
        index: 3,
        start: 2014,
        end: 2015,
    },
    Period {
        index: 4,
        start: 2016,
        end: 2020,
    },
    Period {
        index: 5,
        start: 2021,
        end: 2024,
    },
];

pub fn period(index: u8) -> Result<Period> {
    PERIODS
        .get(index as usize)
        .copied()
        .ok_or_else(|| Error::InvalidInput(format!("period index {index} out of range 0..={}", PERIODS.len() - 1)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCode {
    pub label: String,
    pub period: u8,
    pub exposure: Exposure,
    pub region_count: usize,
}

/// Label every region by its exposure at the start of `period`.
pub fn assign_groups(registry: &TreatmentRegistry, period: Period) -> Result<BTreeMap<String, GroupCode>> {
    let mut exposures = BTreeMap::new();
    let mut unlabeled = Vec::new();
    for region in registry.universe() {
        let e = registry.exposure_set(region, period.start)?;
        if e.group_letter().is_none() {
            unlabeled.push(format!("{region} ({e})"));
        }
        exposures.insert(region.clone(), e);
    }
    if !unlabeled.is_empty() {
        return Err(Error::Registry(format!(
            "exposure sets without a group label in {}: {}",
            period.start,
            unlabeled.join(", ")
        )));
    }
    let mut counts: BTreeMap<Exposure, usize> = BTreeMap::new();
    for e in exposures.values() {
        *counts.entry(*e).or_default() += 1;
    }
    Ok(exposures
        .into_iter()
        .map(|(region, e)| {
            let code = GroupCode {
                label: format!("{}{}", e.group_letter().unwrap(), period.index),
                period: period.index,
                exposure: e,
                region_count: counts[&e],
            };
            (region, code)
        })
        .collect())
}

/// Region counts per group label.
pub fn group_counts(groups: &BTreeMap<String, GroupCode>) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for g in groups.values() {
        out.insert(g.label.clone(), g.region_count);
    }
    out
}

/// A treated-versus-control comparison defined by exposures at a reference year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDesign {
    pub panel_id: String,
    pub label: String,
    pub reference_year: i32,
    pub conditioning: Exposure,
    pub added: Exposure,
}

impl PanelDesign {
    pub fn new(panel_id: impl Into<String>, reference_year: i32, conditioning: Exposure, added: Exposure) -> Self {
        let label = if conditioning.is_empty() {
            format!("{added}, relative to no policy")
        } else {
            format!("{added}, additional to {conditioning}")
        };
        PanelDesign {
            panel_id: panel_id.into(),
            label,
            reference_year,
            conditioning,
            added,
        }
    }
}

/// The eight identification designs over the default registry.
pub fn default_designs() -> Vec<PanelDesign> {
    use MarketKind::*;
    let none = Exposure::NONE;
    let p = Exposure::of(&[Pollution]);
    let c = Exposure::of(&[Carbon]);
    vec![
        PanelDesign::new("1", 2007, none, p),
        PanelDesign::new("2", 2013, none, c),
        PanelDesign::new("3", 2013, p, c),
        PanelDesign::new("4", 2014, p, c),
        PanelDesign::new("5", 2016, none, Exposure::of(&[Carbon, Energy])),
        PanelDesign::new("6", 2016, p, Exposure::of(&[Energy])),
        PanelDesign::new("7", 2021, c, Exposure::of(&[GreenElectricity])),
        PanelDesign::new("8", 2021, p, Exposure::of(&[GreenElectricity])),
    ]
}

/// Outer limits for estimation windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowBounds {
    pub data_start: i32,
    pub data_end: i32,
}

impl Default for WindowBounds {
    fn default() -> Self {
        WindowBounds {
            data_start: 2000,
            data_end: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub panel_id: String,
    pub label: String,
    pub treated_regions: BTreeSet<String>,
    pub control_regions: BTreeSet<String>,
    /// Inclusive `[start, end]` years.
    pub window: (i32, i32),
    pub conditioning: Exposure,
    pub added: Exposure,
    /// Earliest treatment year among treated regions.
    pub treatment_year: i32,
    /// Per-region treatment years; empty unless treated regions adopt in different years.
    pub staggered: BTreeMap<String, i32>,
    /// False for designs that make no clean-control claim (static replication designs).
    pub clean: bool,
}

impl PanelSpec {
    pub fn is_treated(&self, region: &str) -> bool {
        self.treated_regions.contains(region)
    }

    pub fn is_control(&self, region: &str) -> bool {
        self.control_regions.contains(region)
    }

    /// Treatment year for a treated region, `None` for controls and strangers.
    pub fn treatment_year_of(&self, region: &str) -> Option<i32> {
        if !self.is_treated(region) {
            return None;
        }
        Some(self.staggered.get(region).copied().unwrap_or(self.treatment_year))
    }

    pub fn is_staggered(&self) -> bool {
        !self.staggered.is_empty()
    }

    pub fn in_window(&self, year: i32) -> bool {
        (self.window.0..=self.window.1).contains(&year)
    }

    /// Firm-years of the design's regions inside the window.
    pub fn select(&self, dataset: &PanelDataset) -> PanelDataset {
        let step = format!("panel:{}:{}-{}", self.panel_id, self.window.0, self.window.1);
        dataset.filter(&step, |o| {
            self.in_window(o.year) && (self.is_treated(&o.region) || self.is_control(&o.region))
        })
    }

    pub fn group_split(&self) -> GroupSplit {
        GroupSplit::new(&self.treated_regions, &self.control_regions)
    }
}

fn treatment_year_for(registry: &TreatmentRegistry, region: &str, added: Exposure) -> Result<i32> {
    added
        .iter()
        .map(|k| {
            registry
                .start_year(region, k)
                .ok_or_else(|| Error::Registry(format!("region `{region}` has no {k} event")))
        })
        .try_fold(i32::MIN, |acc, y| y.map(|y| acc.max(y)))
}

fn expected_exposure(spec: &PanelSpec, region: &str, year: i32) -> Option<Exposure> {
    if spec.is_control(region) {
        Some(spec.conditioning)
    } else {
        let t = spec.treatment_year_of(region)?;
        Some(if year < t {
            spec.conditioning
        } else {
            spec.conditioning.union(spec.added)
        })
    }
}

/// Derive a clean design from the registry.
pub fn build_design(registry: &TreatmentRegistry, design: &PanelDesign, bounds: WindowBounds) -> Result<PanelSpec> {
    if design.added.is_empty() {
        return Err(Error::Design(format!("design {} adds no market", design.panel_id)));
    }
    let target = design.conditioning.union(design.added);
    let mut treated = BTreeSet::new();
    let mut control = BTreeSet::new();
    for region in registry.universe() {
        let e = registry.exposure_set(region, design.reference_year)?;
        if e == target {
            treated.insert(region.clone());
        } else if e == design.conditioning {
            control.insert(region.clone());
        }
    }
    if treated.is_empty() || control.is_empty() {
        return Err(Error::Registry(format!(
            "design {} needs regions with {target} and with {} in {}; found {} treated, {} control",
            design.panel_id,
            design.conditioning,
            design.reference_year,
            treated.len(),
            control.len()
        )));
    }
    let years: BTreeMap<String, i32> = treated
        .iter()
        .map(|r| treatment_year_for(registry, r, design.added).map(|y| (r.clone(), y)))
        .collect::<Result<_>>()?;
    let first = *years.values().min().unwrap();
    let distinct: BTreeSet<i32> = years.values().copied().collect();
    let mut spec = PanelSpec {
        panel_id: design.panel_id.clone(),
        label: design.label.clone(),
        treated_regions: treated,
        control_regions: control,
        window: (design.reference_year, design.reference_year),
        conditioning: design.conditioning,
        added: design.added,
        treatment_year: first,
        staggered: if distinct.len() > 1 { years } else { BTreeMap::new() },
        clean: true,
    };

    let year_ok = |spec: &PanelSpec, year: i32| -> bool {
        spec.treated_regions
            .iter()
            .chain(&spec.control_regions)
            .all(|r| registry.exposure_set(r, year).ok() == expected_exposure(spec, r, year))
    };
    let mut start = design.reference_year;
    while start > bounds.data_start && year_ok(&spec, start - 1) {
        start -= 1;
    }
    let mut end = design.reference_year;
    while end < bounds.data_end && year_ok(&spec, end + 1) {
        end += 1;
    }
    spec.window = (start, end);
    Ok(spec)
}

/// Build one of the eight default designs and select its firm-years.
pub fn build_panel(
    registry: &TreatmentRegistry,
    panel_id: u8,
    dataset: &PanelDataset,
) -> Result<(PanelSpec, PanelDataset)> {
    let design = default_designs()
        .into_iter()
        .nth((panel_id as usize).wrapping_sub(1))
        .ok_or_else(|| Error::InvalidInput(format!("panel id {panel_id} is not in 1..=8")))?;
    let spec = build_design(registry, &design, WindowBounds::default())?;
    let subset = spec.select(dataset);
    Ok((spec, subset))
}

/// Literature-style design: every region that ever adopts `kind` against all
/// regions that never do, over the full window, ignoring other markets.
pub fn static_design(registry: &TreatmentRegistry, kind: MarketKind, bounds: WindowBounds) -> Result<PanelSpec> {
    let mut years = BTreeMap::new();
    let mut control = BTreeSet::new();
    for region in registry.universe() {
        match registry.start_year(region, kind) {
            Some(y) if y <= bounds.data_end => {
                years.insert(region.clone(), y);
            }
            _ => {
                control.insert(region.clone());
            }
        }
    }
    if years.is_empty() || control.is_empty() {
        return Err(Error::Registry(format!(
            "static {} design needs both adopting and non-adopting regions",
            kind.slug()
        )));
    }
    let first = *years.values().min().unwrap();
    let distinct: BTreeSet<i32> = years.values().copied().collect();
    let added = Exposure::of(&[kind]);
    Ok(PanelSpec {
        panel_id: format!("static-{}", kind.slug()),
        label: format!("{kind}, static control group"),
        treated_regions: years.keys().cloned().collect(),
        control_regions: control,
        window: (bounds.data_start, bounds.data_end),
        conditioning: Exposure::NONE,
        added,
        treatment_year: first,
        staggered: if distinct.len() > 1 { years } else { BTreeMap::new() },
        clean: false,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub region: String,
    pub year: Option<i32>,
    pub exposure: Option<Exposure>,
    pub expected: Option<Exposure>,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.region)?;
        if let Some(y) = self.year {
            write!(f, " in {y}")?;
        }
        write!(f, ": {}", self.reason)?;
        if let (Some(e), Some(x)) = (self.exposure, self.expected) {
            write!(f, " (exposure {e}, expected {x})")?;
        }
        Ok(())
    }
}

/// Check a design against the registry; an empty list means it is clean.
pub fn verify_clean_controls(spec: &PanelSpec, registry: &TreatmentRegistry) -> Vec<Violation> {
    let mut out = Vec::new();
    for r in spec.treated_regions.intersection(&spec.control_regions) {
        out.push(Violation {
            region: r.clone(),
            year: None,
            exposure: None,
            expected: None,
            reason: "region is both treated and control".into(),
        });
    }
    for region in spec.treated_regions.iter().chain(&spec.control_regions) {
        if !registry.contains_region(region) {
            out.push(Violation {
                region: region.clone(),
                year: None,
                exposure: None,
                expected: None,
                reason: "region not in registry universe".into(),
            });
            continue;
        }
        if spec.is_treated(region) && spec.is_control(region) {
            continue;
        }
        for year in spec.window.0..=spec.window.1 {
            let actual = registry.exposure_set(region, year).expect("region checked");
            let expected = expected_exposure(spec, region, year).expect("region is in a group");
            if actual != expected {
                let role = if spec.is_control(region) { "control" } else { "treated" };
                out.push(Violation {
                    region: region.clone(),
                    year: Some(year),
                    exposure: Some(actual),
                    expected: Some(expected),
                    reason: format!("{role} exposure departs from design"),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use MarketKind::*;

    fn reg() -> TreatmentRegistry {
        TreatmentRegistry::default_registry()
    }

    #[test]
    fn exposure_examples() {
        let r = reg();
        assert_eq!(
            r.exposure_set("Tianjin", 2013).unwrap(),
            Exposure::of(&[Pollution, Carbon])
        );
        assert_eq!(
            r.exposure_set("Beijing", 2022).unwrap(),
            Exposure::of(&[Carbon, GreenElectricity])
        );
        for region in r.universe() {
            assert!(r.exposure_set(region, 2006).unwrap().is_empty());
        }
        assert!(matches!(r.exposure_set("Atlantis", 2010), Err(Error::UnknownRegion(_))));
    }

    #[test]
    fn exposure_display_and_serde() {
        let e = Exposure::of(&[Pollution, Carbon]);
        assert_eq!(e.to_string(), "Poll + CO2");
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, r#"["pollution","carbon"]"#);
        assert_eq!(serde_json::from_str::<Exposure>(&json).unwrap(), e);
    }

    #[test]
    fn registry_validation() {
        let uni = vec!["A".to_string()];
        let ev = |r: &str| MarketEvent {
            region: r.into(),
            kind: Carbon,
            start_year: 2013,
        };
        assert!(TreatmentRegistry::new(uni.clone(), vec![ev("B")]).is_err());
        assert!(TreatmentRegistry::new(uni.clone(), vec![ev("A"), ev("A")]).is_err());
        assert!(TreatmentRegistry::new(uni, vec![ev("A")]).is_ok());
    }

    #[test]
    fn no_events_means_no_policy_everywhere() {
        let r = TreatmentRegistry::new(vec!["X".into(), "Y".into()], vec![]).unwrap();
        let g = assign_groups(&r, PERIODS[4]).unwrap();
        assert!(g.values().all(|c| c.label == "A4" && c.region_count == 2));
    }

    #[test]
    fn unlabeled_exposure_is_reported() {
        let r = TreatmentRegistry::new(
            vec!["X".into()],
            [Pollution, Carbon, Energy]
                .into_iter()
                .map(|kind| MarketEvent {
                    region: "X".into(),
                    kind,
                    start_year: 2010,
                })
                .collect(),
        )
        .unwrap();
        let err = assign_groups(&r, PERIODS[4]).unwrap_err();
        assert!(err.to_string().contains('X'));
    }

    #[test]
    fn panel_three_and_seven() {
        let r = reg();
        let (p3, subset) = build_panel(&r, 3, &PanelDataset::empty()).unwrap();
        assert!(subset.is_empty());
        assert_eq!(p3.treated_regions, BTreeSet::from(["Tianjin".to_string()]));
        let ten: BTreeSet<String> = [
            "Jiangsu",
            "Hebei",
            "Inner Mongolia",
            "Hubei",
            "Zhejiang",
            "Hunan",
            "Shanxi",
            "Shaanxi",
            "Chongqing",
            "Henan",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(p3.control_regions, ten);
        assert_eq!(p3.window.0, 2007);

        let (p7, _) = build_panel(&r, 7, &PanelDataset::empty()).unwrap();
        assert_eq!(
            p7.treated_regions,
            BTreeSet::from(["Beijing".to_string(), "Guangdong".to_string()])
        );
        assert_eq!(
            p7.control_regions,
            BTreeSet::from(["Shanghai".to_string(), "Shenzhen".to_string()])
        );
    }

    #[test]
    fn panel_two_excludes_tianjin_and_four_is_staggered() {
        let r = reg();
        let (p2, _) = build_panel(&r, 2, &PanelDataset::empty()).unwrap();
        assert!(!p2.is_treated("Tianjin"));
        assert_eq!(p2.treated_regions.len(), 4);
        assert_eq!(p2.control_regions.len(), 16);
        let (p4, _) = build_panel(&r, 4, &PanelDataset::empty()).unwrap();
        let expected: BTreeMap<String, i32> = [("Tianjin", 2013), ("Hubei", 2014), ("Chongqing", 2014)]
            .iter()
            .map(|(r, y)| (r.to_string(), *y))
            .collect();
        assert_eq!(p4.staggered, expected);
        for id in [1u8, 2, 3, 5, 6, 7, 8] {
            assert!(
                !build_panel(&r, id, &PanelDataset::empty()).unwrap().0.is_staggered(),
                "panel {id}"
            );
        }
    }

    #[test]
    fn all_default_panels_are_clean() {
        let r = reg();
        for id in 1..=8u8 {
            let (spec, _) = build_panel(&r, id, &PanelDataset::empty()).unwrap();
            assert!(verify_clean_controls(&spec, &r).is_empty(), "panel {id}");
            assert!(spec.treated_regions.is_disjoint(&spec.control_regions));
        }
        assert!(build_panel(&r, 0, &PanelDataset::empty()).is_err());
        assert!(build_panel(&r, 9, &PanelDataset::empty()).is_err());
    }

    #[test]
    fn injected_contamination_is_caught() {
        let r = reg();
        let (mut spec, _) = build_panel(&r, 3, &PanelDataset::empty()).unwrap();
        spec.control_regions.insert("Guangdong".into());
        // Brute-force exposure straight from the event list.
        let carbon_2013 = r
            .events()
            .iter()
            .any(|e| e.region == "Guangdong" && e.kind == Carbon && e.start_year <= 2013);
        assert!(carbon_2013);
        let v = verify_clean_controls(&spec, &r);
        assert!(v.iter().any(|v| v.region == "Guangdong"
            && v.year == Some(2013)
            && v.exposure.is_some_and(|e| e.contains(Carbon))));

        let (mut spec, _) = build_panel(&r, 3, &PanelDataset::empty()).unwrap();
        spec.control_regions.insert("Tianjin".into());
        assert!(verify_clean_controls(&spec, &r).iter().any(|v| v.year.is_none()));
    }

    #[test]
    fn registry_without_required_events_fails() {
        let r = TreatmentRegistry::new(vec!["X".into(), "Y".into()], vec![]).unwrap();
        assert!(matches!(
            build_panel(&r, 2, &PanelDataset::empty()),
            Err(Error::Registry(_))
        ));
    }

    #[test]
    fn registry_file_round_trip() {
        let r = reg();
        let again = TreatmentRegistry::from_toml_str(&r.to_toml_string()).unwrap();
        assert_eq!(again, r);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(TreatmentRegistry::from_json_str(&json).unwrap(), r);
    }
}
