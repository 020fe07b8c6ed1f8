//! The cislunar propellant-resupply campaign: tug fleet, crew vehicles,
//! event layers, demands and time bounds, plus plan extraction, plan
//! replay and Pareto sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{
    build_model, BuildError, CapacityScope, ConcurrencyRule, MilpModel, Provenance, TagSummary, TimeBounds,
    Tolerances, VarMap,
};
use crate::netgraph::{
    build_event_network, validate_multigraph, ArcKey, ArcSpec, Commodity, CommodityKind, CommoditySchema,
    DemandTable, EventNetwork, LayerSpec, LayerTag, MultigraphIssue, NetworkError, PropulsionSpec, VehiclePolicy,
};
use crate::solver::{solve_milp, MilpOptions, SolveResult, SolveStatus};
use crate::traj::{
    rocket_mass_ratio_with, structure_per_propellant, FitRegistry, MassModel, Propulsion, TofModel, TrajError,
};

pub const EARTH_SURFACE: &str = "ES";
pub const LEO: &str = "LEO";
pub const GTO: &str = "GTO";
pub const TLI: &str = "TLI";
pub const TL1I: &str = "TL1I";
pub const TL2I: &str = "TL2I";
pub const EML1: &str = "EML1";
pub const EML2: &str = "EML2";
pub const LLO: &str = "LLO";

pub const NODES: [&str; 9] = [EARTH_SURFACE, LEO, GTO, TLI, TL1I, TL2I, EML1, EML2, LLO];

pub const STR_US: &str = "strUS";
pub const F_US: &str = "fUS";
pub const CSM: &str = "CSM";
pub const F_CSM: &str = "fCSM";
pub const LM: &str = "LM";
pub const F_LM: &str = "fLM";
pub const STR_DTANK: &str = "strDtank";
pub const F_HIGH: &str = "fHIGH";
pub const F_LOW: &str = "fLOW";

/// Carrier label of launch arcs.
pub const LAUNCHER: &str = "launcher";
/// Carrier label of upper-stage injection arcs.
pub const UPPER_STAGE: &str = "US";

/// Commodities tugs may carry as payload.
pub const PAYLOADS: [&str; 3] = [STR_DTANK, F_LM, F_CSM];

/// Fuel per mission consumed by lunar descent and ascent, delivered to LLO.
pub const DEFAULT_LM_FUEL_DEMAND_KG: f64 = 11_046.67;
/// Launch-cost multiplier for mass placed in GTO rather than LEO.
pub const DEFAULT_GTO_LAUNCH_FACTOR: f64 = 1.74;

/// Table node names to network node ids.
pub fn node_from_table(name: &str) -> &str {
    match name {
        "L1" => EML1,
        "L2" => EML2,
        other => other,
    }
}

fn table_name(node: &str) -> &str {
    match node {
        EML1 => "L1",
        EML2 => "L2",
        other => other,
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Surrogate(#[from] TrajError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("malformed multigraph: {0}")]
    Multigraph(String),
    #[error("plan arc {0} does not map onto the network")]
    UnmappableArc(String),
    #[error("plan commodity {0} is not in the schema")]
    UnknownCommodity(String),
    #[error("plan schema error: {0}")]
    PlanSchema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub chemical: bool,
    pub electric: bool,
    /// Tug units (`tug1`..) excluded from the campaign.
    pub disabled_units: Vec<String>,
    /// Propellant capacity overrides per tug unit, kg.
    pub capacity_kg: BTreeMap<String, f64>,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            chemical: true,
            electric: true,
            disabled_units: Vec::new(),
            capacity_kg: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub gap: f64,
    pub time_limit_s: Option<f64>,
    pub node_limit: Option<usize>,
    pub threads: usize,
    pub screening: ScreeningConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gap: crate::solver::DEFAULT_GAP,
            time_limit_s: None,
            node_limit: None,
            threads: 1,
            screening: ScreeningConfig::default(),
        }
    }
}

/// Warm start from small fleets. Every fleet of up to `max_fleet` tug
/// units (one representative per multiset of tug types, plus the empty
/// fleet) is solved with the other units' flows fixed at zero. The best
/// `refine` fleets are then searched further, and the best plan found
/// seeds the search over the full fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreeningConfig {
    /// Largest fleet tried; 0 disables screening.
    pub max_fleet: usize,
    pub screen_nodes: usize,
    pub refine: usize,
    pub refine_nodes: usize,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            max_fleet: 2,
            screen_nodes: 1,
            refine: 3,
            refine_nodes: 4000,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> MilpOptions {
        MilpOptions {
            gap: self.gap,
            time_limit: self.time_limit_s.map(Duration::from_secs_f64),
            node_limit: self.node_limit,
            threads: self.threads.max(1),
            ..MilpOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub name: String,
    /// Bound on the summed duration of the cargo layers, days.
    pub cargo_days: f64,
    /// Bound on total crew flight time over all missions, days.
    pub crew_days: f64,
    pub missions: usize,
    /// Times each tug may be flown out from its parking orbit.
    pub tug_uses: usize,
    pub fleet: FleetConfig,
    /// Gravity used in the rocket equation, m/s^2.
    pub gravity: f64,
    pub lm_fuel_demand_kg: f64,
    pub gto_launch_factor: f64,
    pub solver: SolverConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            name: "campaign".into(),
            cargo_days: 0.0,
            crew_days: 21.0,
            missions: 3,
            tug_uses: 3,
            fleet: FleetConfig::default(),
            gravity: crate::traj::STANDARD_GRAVITY,
            lm_fuel_demand_kg: DEFAULT_LM_FUEL_DEMAND_KG,
            gto_launch_factor: DEFAULT_GTO_LAUNCH_FACTOR,
            solver: SolverConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self, CampaignError> {
        let cfg: CampaignConfig = serde_json::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Config(m));
        if !(self.cargo_days >= 0.0) || !(self.crew_days >= 0.0) {
            return bad("time bounds must be nonnegative".into());
        }
        if !(self.gravity > 0.0) {
            return bad(format!("gravity must be positive, got {}", self.gravity));
        }
        if !(self.lm_fuel_demand_kg >= 0.0) || !(self.gto_launch_factor > 0.0) {
            return bad("fuel demand must be nonnegative and launch factor positive".into());
        }
        if let Some((name, cap)) = self.fleet.capacity_kg.iter().find(|(_, c)| !(**c >= 0.0)) {
            return bad(format!("capacity of {name} must be nonnegative, got {cap}"));
        }
        if !(self.solver.gap >= 0.0) {
            return bad("solver gap must be nonnegative".into());
        }
        if let Some(t) = self.solver.time_limit_s {
            if !(t >= 0.0) || !t.is_finite() {
                return bad("time limit must be a nonnegative number of seconds".into());
            }
        }
        Ok(())
    }

    pub fn time_bounds(&self) -> TimeBounds {
        TimeBounds {
            cargo_days: Some(self.cargo_days),
            crew_days: Some(self.crew_days),
        }
    }

    pub fn num_cargo_layers(&self) -> usize {
        4 * self.tug_uses
    }
}

/// One physical tug unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TugUnit {
    pub name: String,
    pub propulsion: Propulsion,
    pub family_index: u8,
    pub dry_mass_kg: f64,
    pub capacity_kg: f64,
    pub isp_s: f64,
}

impl TugUnit {
    pub fn fuel(&self) -> &'static str {
        match self.propulsion {
            Propulsion::Chemical => F_HIGH,
            Propulsion::Electric => F_LOW,
        }
    }

    /// Earth parking orbit the tug departs from and returns to.
    pub fn parking_orbit(&self) -> &'static str {
        match self.propulsion {
            Propulsion::Chemical => LEO,
            Propulsion::Electric => GTO,
        }
    }
}

/// Tug units numbered `tug1..` in fleet-table order.
pub fn tug_units(registry: &FitRegistry) -> Vec<TugUnit> {
    let mut out = Vec::new();
    for spec in &registry.tugs {
        for _ in 0..spec.units {
            out.push(TugUnit {
                name: format!("tug{}", out.len() + 1),
                propulsion: spec.propulsion,
                family_index: spec.family_index,
                dry_mass_kg: spec.dry_mass_t * 1000.0,
                capacity_kg: spec.propellant_capacity_t * 1000.0,
                isp_s: spec.isp_s,
            });
        }
    }
    out
}

/// The commodity list: crew side, droptanks, tug fuels, then tug units.
pub fn campaign_schema(registry: &FitRegistry) -> CommoditySchema {
    let cv = &registry.crew_vehicles;
    let cont = |n: &str| Commodity {
        name: n.into(),
        kind: CommodityKind::Continuous,
        unit_mass: 1.0,
    };
    let bin = |n: &str, kg: f64| Commodity {
        name: n.into(),
        kind: CommodityKind::Binary,
        unit_mass: kg,
    };
    let mut entries = vec![
        cont(STR_US),
        cont(F_US),
        bin(CSM, cv.csm.dry_mass_t * 1000.0),
        cont(F_CSM),
        bin(LM, cv.lm.dry_mass_t * 1000.0),
        cont(F_LM),
        cont(STR_DTANK),
        cont(F_HIGH),
        cont(F_LOW),
    ];
    for t in tug_units(registry) {
        entries.push(bin(&t.name, t.dry_mass_kg));
    }
    CommoditySchema::new(entries).expect("campaign commodities are distinct")
}

/// A fully assembled campaign instance.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub config: CampaignConfig,
    pub tugs: Vec<TugUnit>,
    pub network: EventNetwork,
    pub demands: DemandTable,
    pub rules: Vec<ConcurrencyRule>,
    pub model: MilpModel,
    pub vars: VarMap,
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn launch_arc(dest: &str, allowed: Vec<String>, schema: &CommoditySchema, factor: f64) -> ArcSpec {
    let cost = allowed
        .iter()
        .map(|c| {
            let i = schema.index_of(c).expect("launch commodity in schema");
            (c.clone(), factor * schema.get(i).unit_mass)
        })
        .collect();
    ArcSpec {
        origin: EARTH_SURFACE.into(),
        destination: dest.into(),
        vehicle: LAUNCHER.into(),
        propulsion: PropulsionSpec::Launch,
        mass: Some(MassModel::Identity),
        tof: Some(TofModel::Constant { days: 0.0 }),
        allowed,
        cost,
    }
}

fn tug_arc(
    tug: &TugUnit,
    from: &str,
    to: &str,
    registry: &FitRegistry,
    gravity: f64,
) -> Result<ArcSpec, CampaignError> {
    let (mass, tof) = match tug.propulsion {
        Propulsion::Chemical => {
            let leg = registry.cp_between(table_name(from), table_name(to))?;
            (
                MassModel::Affine {
                    ratio: rocket_mass_ratio_with(leg.dv_km_s, tug.isp_s, gravity)?,
                    offset_kg: 0.0,
                },
                TofModel::Constant { days: leg.tof_days },
            )
        }
        Propulsion::Electric => {
            let label = format!("{} to {}", table_name(from), table_name(to));
            let fit = registry.sep(&label, tug.family_index)?;
            (
                MassModel::Affine {
                    ratio: fit.mass_slope,
                    offset_kg: fit.mass_offset_kg(),
                },
                TofModel::Affine {
                    days_per_kg: fit.days_per_kg(),
                    base_days: fit.base_days,
                },
            )
        }
    };
    let mut allowed = vec![tug.name.clone(), tug.fuel().to_string()];
    allowed.extend(names(&PAYLOADS));
    Ok(ArcSpec {
        origin: from.into(),
        destination: to.into(),
        vehicle: tug.name.clone(),
        propulsion: PropulsionSpec::Vehicle {
            propellant: tug.fuel().into(),
        },
        mass: Some(mass),
        tof: Some(tof),
        allowed,
        cost: vec![],
    })
}

fn crew_arc(label: &str, registry: &FitRegistry, gravity: f64, allowed: &[&str]) -> Result<ArcSpec, CampaignError> {
    let leg = registry.crew(label)?;
    let (from, to, _) =
        crate::traj::parse_arc_label(label).ok_or_else(|| CampaignError::Config(format!("bad arc label {label}")))?;
    let cv = &registry.crew_vehicles;
    let (vehicle, propulsion, isp) = match leg.stage {
        crate::traj::CrewStage::UpperStage => (
            UPPER_STAGE,
            PropulsionSpec::SizedStage {
                structure: STR_US.into(),
                propellant: F_US.into(),
            },
            cv.upper_stage_isp_s,
        ),
        crate::traj::CrewStage::CommandModule => (
            CSM,
            PropulsionSpec::Vehicle {
                propellant: F_CSM.into(),
            },
            cv.csm.isp_s,
        ),
    };
    Ok(ArcSpec {
        origin: node_from_table(from).into(),
        destination: node_from_table(to).into(),
        vehicle: vehicle.into(),
        propulsion,
        mass: Some(MassModel::Affine {
            ratio: rocket_mass_ratio_with(leg.dv_km_s, isp, gravity)?,
            offset_kg: 0.0,
        }),
        tof: Some(TofModel::Constant {
            days: leg.tof_days.unwrap_or(0.0),
        }),
        allowed: names(allowed),
        cost: vec![],
    })
}

/// Per-layer arc lists for the whole campaign.
fn layer_specs(
    cfg: &CampaignConfig,
    tugs: &[TugUnit],
    registry: &FitRegistry,
    schema: &CommoditySchema,
) -> Result<Vec<LayerSpec>, CampaignError> {
    let mut layers = Vec::new();
    let halos = [EML1, EML2];
    for _ in 0..cfg.tug_uses {
        let mut f1 = Vec::new();
        let (mut cp_launch, mut sep_launch) = (Vec::new(), Vec::new());
        for t in tugs {
            match t.propulsion {
                Propulsion::Chemical => cp_launch.push(t.name.clone()),
                Propulsion::Electric => sep_launch.push(t.name.clone()),
            }
        }
        if !cp_launch.is_empty() {
            cp_launch.push(F_HIGH.into());
            cp_launch.extend(names(&PAYLOADS));
            f1.push(launch_arc(LEO, cp_launch, schema, 1.0));
        }
        if !sep_launch.is_empty() {
            sep_launch.push(F_LOW.into());
            sep_launch.extend(names(&PAYLOADS));
            f1.push(launch_arc(GTO, sep_launch, schema, cfg.gto_launch_factor));
        }
        let (mut f2, mut r1, mut r2) = (Vec::new(), Vec::new(), Vec::new());
        for t in tugs {
            let park = t.parking_orbit();
            for h in halos {
                f1.push(tug_arc(t, park, h, registry, cfg.gravity)?);
                f2.push(tug_arc(t, h, LLO, registry, cfg.gravity)?);
                r1.push(tug_arc(t, LLO, h, registry, cfg.gravity)?);
                r2.push(tug_arc(t, h, park, registry, cfg.gravity)?);
            }
        }
        for (tag, arcs) in [
            (LayerTag::CargoForward, f1),
            (LayerTag::CargoForward, f2),
            (LayerTag::CargoReturn, r1),
            (LayerTag::CargoReturn, r2),
        ] {
            layers.push(LayerSpec { tag, arcs });
        }
    }
    let launch = [CSM, LM, STR_US, F_US, F_CSM, F_LM];
    let stacked = [CSM, LM, STR_US, F_US, F_CSM, F_LM];
    let coasting = [CSM, LM, F_CSM, F_LM];
    let returning = [CSM, F_CSM];
    for _ in 0..cfg.missions {
        let mut fwd = vec![launch_arc(LEO, names(&launch), schema, 1.0)];
        for label in ["LEO to TLI", "LEO to TL1I", "LEO to TL2I"] {
            fwd.push(crew_arc(label, registry, cfg.gravity, &stacked)?);
        }
        for label in ["TLI to LLO", "TL1I to L1", "L1 to LLO", "TL2I to L2", "L2 to LLO"] {
            fwd.push(crew_arc(label, registry, cfg.gravity, &coasting)?);
        }
        let mut ret = Vec::new();
        for label in ["LLO to ES", "LLO to L1", "L1 to ES", "LLO to L2", "L2 to ES"] {
            ret.push(crew_arc(label, registry, cfg.gravity, &returning)?);
        }
        layers.push(LayerSpec {
            tag: LayerTag::CrewForward,
            arcs: fwd,
        });
        layers.push(LayerSpec {
            tag: LayerTag::CrewReturn,
            arcs: ret,
        });
    }
    Ok(layers)
}

/// Holdover admissibility. Tugs and their fuels may be carried only out of
/// cargo layers, crew vehicles only out of crew layers; payloads anywhere
/// they can be stored.
fn restrict_holdovers(net: &mut EventNetwork, tugs: &[TugUnit], n_cargo: usize) -> Result<(), CampaignError> {
    let cp: Vec<&str> = tugs
        .iter()
        .filter(|t| t.propulsion == Propulsion::Chemical)
        .map(|t| t.name.as_str())
        .collect();
    let sep: Vec<&str> = tugs
        .iter()
        .filter(|t| t.propulsion == Propulsion::Electric)
        .map(|t| t.name.as_str())
        .collect();
    for h in 0..net.holdover.len() {
        let (node, e) = (net.holdover[h].node.clone(), net.holdover[h].from_layer);
        let cargo = e < n_cargo;
        let mut allowed: Vec<&str> = Vec::new();
        match node.as_str() {
            EARTH_SURFACE => {
                if cargo {
                    allowed.extend(&cp);
                    allowed.extend(&sep);
                }
            }
            LEO | GTO => {
                if cargo {
                    if node == LEO {
                        allowed.extend(&cp);
                        allowed.push(F_HIGH);
                    } else {
                        allowed.extend(&sep);
                        allowed.push(F_LOW);
                    }
                }
                allowed.extend(PAYLOADS);
            }
            EML1 | EML2 | LLO => {
                if cargo {
                    allowed.extend(&cp);
                    allowed.extend(&sep);
                    allowed.extend([F_HIGH, F_LOW]);
                }
                allowed.extend(PAYLOADS);
                if node == LLO && !cargo {
                    allowed.push(CSM);
                }
            }
            _ => {}
        }
        net.restrict_holdover(&node, e, &allowed)?;
    }
    Ok(())
}

/// Vehicles confined to one kind of layer.
pub fn vehicle_policy(tugs: &[TugUnit]) -> VehiclePolicy {
    let mut cargo_only: BTreeSet<String> = tugs.iter().map(|t| t.name.clone()).collect();
    cargo_only.extend([F_HIGH.to_string(), F_LOW.to_string()]);
    VehiclePolicy {
        cargo_only,
        crew_only: [CSM, LM, STR_US, F_US, UPPER_STAGE]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    }
}

pub fn concurrency_rules(tugs: &[TugUnit], registry: &FitRegistry) -> Vec<ConcurrencyRule> {
    let cv = &registry.crew_vehicles;
    let mut rules: Vec<ConcurrencyRule> = tugs
        .iter()
        .map(|t| ConcurrencyRule::FuelCapacity {
            vehicle: t.name.clone(),
            fuel: t.fuel().into(),
            capacity_kg: t.capacity_kg,
            scope: CapacityScope::PropelledBy,
        })
        .collect();
    let csm_cap = cv.csm.propellant_capacity_t * 1000.0;
    let lm_cap = cv.lm.propellant_capacity_t * 1000.0;
    rules.push(ConcurrencyRule::FuelCapacity {
        vehicle: CSM.into(),
        fuel: F_CSM.into(),
        capacity_kg: csm_cap,
        scope: CapacityScope::Carried,
    });
    rules.push(ConcurrencyRule::FuelCapacity {
        vehicle: LM.into(),
        fuel: F_LM.into(),
        capacity_kg: lm_cap,
        scope: CapacityScope::Carried,
    });
    rules.push(ConcurrencyRule::StageSizing {
        structure: STR_US.into(),
        fuel: F_US.into(),
        ratio: structure_per_propellant(cv.upper_stage_epsilon),
    });
    let tank = structure_per_propellant(cv.droptank_epsilon);
    rules.push(ConcurrencyRule::Tankage {
        fuels: vec![(F_LM.into(), tank), (F_CSM.into(), tank)],
        structure: STR_DTANK.into(),
        allowances: vec![(LM.into(), tank * lm_cap), (CSM.into(), tank * csm_cap)],
    });
    rules
}

fn campaign_demands(cfg: &CampaignConfig, tugs: &[TugUnit], schema: &CommoditySchema) -> DemandTable {
    let mut d = DemandTable::default();
    for c in schema.entries() {
        if c.kind == CommodityKind::Continuous {
            d.set_unlimited(EARTH_SURFACE, &c.name);
        }
    }
    for t in tugs {
        d.add(EARTH_SURFACE, 0, &t.name, 1.0);
    }
    let n_cargo = cfg.num_cargo_layers();
    for m in 0..cfg.missions {
        let (fwd, ret) = (n_cargo + 2 * m, n_cargo + 2 * m + 1);
        d.add(EARTH_SURFACE, fwd, CSM, 1.0);
        d.add(EARTH_SURFACE, fwd, LM, 1.0);
        d.add(LLO, fwd, LM, -1.0);
        d.add(LLO, fwd, F_LM, -cfg.lm_fuel_demand_kg);
        d.add(EARTH_SURFACE, ret, CSM, -1.0);
    }
    d
}

/// Builds the network, demands, concurrency rules and MILP for `cfg`.
pub fn build_campaign(cfg: &CampaignConfig, registry: &FitRegistry) -> Result<Campaign, CampaignError> {
    cfg.check()?;
    let schema = campaign_schema(registry);
    let disabled: BTreeSet<&str> = cfg.fleet.disabled_units.iter().map(String::as_str).collect();
    let mut all_tugs = tug_units(registry);
    for name in disabled.iter().copied().chain(cfg.fleet.capacity_kg.keys().map(String::as_str)) {
        if !all_tugs.iter().any(|t| t.name == name) {
            return Err(CampaignError::Config(format!("unknown tug unit {name}")));
        }
    }
    for t in &mut all_tugs {
        if let Some(&cap) = cfg.fleet.capacity_kg.get(&t.name) {
            t.capacity_kg = cap;
        }
    }
    let tugs: Vec<TugUnit> = all_tugs
        .into_iter()
        .filter(|t| match t.propulsion {
            Propulsion::Chemical => cfg.fleet.chemical,
            Propulsion::Electric => cfg.fleet.electric,
        })
        .filter(|t| !disabled.contains(t.name.as_str()))
        .collect();
    let layers = layer_specs(cfg, &tugs, registry, &schema)?;
    if layers.is_empty() {
        return Err(CampaignError::Config("campaign has no event layers".into()));
    }
    let nodes = names(&NODES);
    let mut network = build_event_network(&nodes, &layers, schema)?;
    restrict_holdovers(&mut network, &tugs, cfg.num_cargo_layers())?;
    let issues = validate_multigraph(&network, Some(&vehicle_policy(&tugs)));
    if let Some(first) = issues.first() {
        return Err(CampaignError::Multigraph(first.to_string()));
    }
    let demands = campaign_demands(cfg, &tugs, &network.schema);
    let rules = concurrency_rules(&tugs, registry);
    let (model, vars) = build_model(&network, &cfg.name, &demands, &rules, &cfg.time_bounds())?;
    Ok(Campaign {
        config: cfg.clone(),
        tugs,
        network,
        demands,
        rules,
        model,
        vars,
    })
}

/// Multigraph issues of an assembled campaign (empty when well formed).
pub fn campaign_multigraph_issues(c: &Campaign) -> Vec<MultigraphIssue> {
    validate_multigraph(&c.network, Some(&vehicle_policy(&c.tugs)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanArcKind {
    Transport,
    Holdover,
}

/// Outflow on one arc. Layers are 1-based as in printed plans; a holdover
/// runs from `layer` to `layer + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanArc {
    pub kind: PlanArcKind,
    pub layer: usize,
    pub origin: String,
    pub destination: String,
    /// Vehicle label of transportation arcs; empty for holdovers.
    #[serde(default)]
    pub vehicle: String,
    pub flows: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tof_days: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowPlan {
    pub arcs: Vec<PlanArc>,
    /// Cargo layer durations keyed by 1-based layer.
    #[serde(default)]
    pub layer_durations: BTreeMap<usize, f64>,
    #[serde(default)]
    pub objective_kg: f64,
    #[serde(default)]
    pub cargo_days: f64,
    #[serde(default)]
    pub crew_days: f64,
}

const PLAN_ZERO: f64 = 1e-6;

impl FlowPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CampaignError> {
        serde_json::from_str(text).map_err(|e| CampaignError::PlanSchema(e.to_string()))
    }

    /// Table-shaped CSV: one row per arc, one column per commodity.
    pub fn to_csv(&self, schema: &CommoditySchema) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["kind".to_string(), "layer".into(), "origin".into(), "destination".into(), "vehicle".into()];
        header.extend(schema.entries().iter().map(|c| c.name.clone()));
        header.push("tof_days".into());
        w.write_record(&header).expect("in-memory write");
        for a in &self.arcs {
            let mut row = vec![
                match a.kind {
                    PlanArcKind::Transport => "transport".to_string(),
                    PlanArcKind::Holdover => "holdover".to_string(),
                },
                a.layer.to_string(),
                a.origin.clone(),
                a.destination.clone(),
                a.vehicle.clone(),
            ];
            for c in schema.entries() {
                row.push(fmt_num(a.flows.get(&c.name).copied().unwrap_or(0.0)));
            }
            row.push(a.tof_days.map(fmt_num).unwrap_or_default());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv(text: &str) -> Result<Self, CampaignError> {
        let err = |m: String| CampaignError::PlanSchema(m);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| err(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let fixed = ["kind", "layer", "origin", "destination", "vehicle"];
        if header.len() < fixed.len() + 1 || header[..fixed.len()] != fixed {
            return Err(err(format!("header must start with {}", fixed.join(","))));
        }
        let has_tof = header.last().map(String::as_str) == Some("tof_days");
        let commodity_end = if has_tof { header.len() - 1 } else { header.len() };
        let mut plan = FlowPlan::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let line = i + 2;
            let kind = match &rec[0] {
                "transport" => PlanArcKind::Transport,
                "holdover" => PlanArcKind::Holdover,
                other => return Err(err(format!("line {line}: unknown arc kind {other:?}"))),
            };
            let layer: usize = rec[1]
                .parse()
                .map_err(|_| err(format!("line {line}: bad layer {:?}", &rec[1])))?;
            let mut flows = BTreeMap::new();
            for (j, name) in header.iter().enumerate().take(commodity_end).skip(fixed.len()) {
                let v: f64 = rec[j]
                    .parse()
                    .map_err(|_| err(format!("line {line}: bad value for {name}: {:?}", &rec[j])))?;
                if v != 0.0 {
                    flows.insert(name.clone(), v);
                }
            }
            let tof_days = if has_tof && !rec[commodity_end].is_empty() {
                Some(
                    rec[commodity_end]
                        .parse()
                        .map_err(|_| err(format!("line {line}: bad tof")))?,
                )
            } else {
                None
            };
            plan.arcs.push(PlanArc {
                kind,
                layer,
                origin: rec[2].to_string(),
                destination: rec[3].to_string(),
                vehicle: rec[4].to_string(),
                flows,
                tof_days,
            });
        }
        Ok(plan)
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.round() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.6}")
    }
}

/// Reads a solved assignment back into named arc flows.
pub fn extract_plan(c: &Campaign, x: &[f64]) -> FlowPlan {
    let net = &c.network;
    let mut plan = FlowPlan::default();
    let clean = |v: f64, discrete: bool| if discrete { v.round() } else { v };
    for (a, arc) in net.transport.iter().enumerate() {
        let mut flows = BTreeMap::new();
        for (k, com) in net.schema.entries().iter().enumerate() {
            let v = x[c.vars.flow_out[a][k]];
            if v.abs() > PLAN_ZERO {
                flows.insert(com.name.clone(), clean(v, com.kind.is_discrete()));
            }
        }
        if flows.is_empty() {
            continue;
        }
        let tof_days = arc.propulsion.vehicle().and_then(|v| {
            arc.tof
                .as_ref()
                .and_then(|t| t.eval(x[c.vars.mass_out[a]], x[c.vars.flow_out[a][v]] > 0.5))
        });
        plan.arcs.push(PlanArc {
            kind: PlanArcKind::Transport,
            layer: arc.key.layer + 1,
            origin: arc.key.origin.clone(),
            destination: arc.key.destination.clone(),
            vehicle: arc.key.vehicle.clone(),
            flows,
            tof_days,
        });
    }
    for (h, hv) in net.holdover.iter().enumerate() {
        let mut flows = BTreeMap::new();
        for (k, com) in net.schema.entries().iter().enumerate() {
            let v = x[c.vars.hold_out[h][k]];
            if v.abs() > PLAN_ZERO {
                flows.insert(com.name.clone(), clean(v, com.kind.is_discrete()));
            }
        }
        if flows.is_empty() {
            continue;
        }
        plan.arcs.push(PlanArc {
            kind: PlanArcKind::Holdover,
            layer: hv.from_layer + 1,
            origin: hv.node.clone(),
            destination: hv.node.clone(),
            vehicle: String::new(),
            flows,
            tof_days: None,
        });
    }
    if let Ok(full) = plan_assignment(c, &plan) {
        plan.objective_kg = c.model.objective_value(&full.values);
        plan.layer_durations = full.layer_durations;
        plan.cargo_days = full.cargo_days;
        plan.crew_days = full.crew_days;
    }
    plan
}

/// A full model assignment reconstructed from plan outflows.
#[derive(Debug, Clone)]
pub struct PlanAssignment {
    pub values: Vec<f64>,
    pub layer_durations: BTreeMap<usize, f64>,
    pub cargo_days: f64,
    pub crew_days: f64,
}

/// Derives every model variable from the plan's arc outflows: inflows via
/// the arc transformations, total masses, interpolation weights and layer
/// durations as the longest vehicle flight time in each cargo layer.
pub fn plan_assignment(c: &Campaign, plan: &FlowPlan) -> Result<PlanAssignment, CampaignError> {
    let net = &c.network;
    let n = c.model.num_vars();
    let mut x = vec![0.0; n];
    let mut arc_index: BTreeMap<ArcKey, usize> = BTreeMap::new();
    for (a, arc) in net.transport.iter().enumerate() {
        arc_index.insert(arc.key.clone(), a);
    }
    let describe = |p: &PlanArc| {
        format!(
            "layer {} {} {} -> {} {}",
            p.layer,
            match p.kind {
                PlanArcKind::Transport => "transport",
                PlanArcKind::Holdover => "holdover",
            },
            p.origin,
            p.destination,
            p.vehicle
        )
    };
    let mut seen_t = BTreeSet::new();
    let mut seen_h = BTreeSet::new();
    for p in &plan.arcs {
        if p.layer == 0 {
            return Err(CampaignError::UnmappableArc(describe(p)));
        }
        let commodity = |name: &str| {
            net.schema
                .index_of(name)
                .ok_or_else(|| CampaignError::UnknownCommodity(name.to_string()))
        };
        match p.kind {
            PlanArcKind::Transport => {
                let key = ArcKey {
                    origin: p.origin.clone(),
                    destination: p.destination.clone(),
                    vehicle: p.vehicle.clone(),
                    layer: p.layer - 1,
                };
                let a = *arc_index
                    .get(&key)
                    .ok_or_else(|| CampaignError::UnmappableArc(describe(p)))?;
                if !seen_t.insert(a) {
                    return Err(CampaignError::PlanSchema(format!("arc listed twice: {}", describe(p))));
                }
                for (name, &v) in &p.flows {
                    x[c.vars.flow_out[a][commodity(name)?]] = v;
                }
            }
            PlanArcKind::Holdover => {
                if p.origin != p.destination {
                    return Err(CampaignError::UnmappableArc(describe(p)));
                }
                let h = net
                    .holdover_at(&p.origin, p.layer - 1)
                    .ok_or_else(|| CampaignError::UnmappableArc(describe(p)))?;
                if !seen_h.insert(h) {
                    return Err(CampaignError::PlanSchema(format!("holdover listed twice: {}", describe(p))));
                }
                for (name, &v) in &p.flows {
                    let k = commodity(name)?;
                    x[c.vars.hold_out[h][k]] = v;
                    x[c.vars.hold_in[h][k]] = v;
                }
            }
        }
    }
    let masses = net.schema.unit_masses();
    let mut layer_durations = BTreeMap::new();
    let mut crew_days = 0.0;
    let mut cargo_layer_time: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for (a, arc) in net.transport.iter().enumerate() {
        let out = &c.vars.flow_out[a];
        let y_out: f64 = (0..masses.len()).map(|k| masses[k] * x[out[k]]).sum();
        x[c.vars.mass_out[a]] = y_out;
        let present = arc.propulsion.vehicle().map(|v| x[out[v]]).unwrap_or(1.0);
        let mass = arc.mass.as_ref().ok_or_else(|| BuildError::MissingSurrogate(arc.key.to_string()))?;
        let y_in = match mass {
            MassModel::Identity => y_out,
            MassModel::Affine { ratio, offset_kg } => ratio * y_out + offset_kg * present,
            MassModel::Pwl { curve } => {
                fill_weights(&mut x, c, a, curve.breakpoints(), y_out, false);
                curve.eval(y_out).unwrap_or(f64::NAN)
            }
        };
        x[c.vars.mass_in[a]] = y_in;
        let burned = match mass {
            MassModel::Identity => None,
            _ => arc.propulsion.propellant(),
        };
        let mut conserved = 0.0;
        for k in 0..masses.len() {
            if Some(k) != burned {
                x[c.vars.flow_in[a][k]] = x[out[k]];
                conserved += masses[k] * x[out[k]];
            }
        }
        if let Some(p) = burned {
            x[c.vars.flow_in[a][p]] = (y_in - conserved) / masses[p];
        }
        if let (Some(v), Some(tof)) = (arc.propulsion.vehicle(), arc.tof.as_ref()) {
            if let TofModel::Pwl { curve } = tof {
                fill_weights(&mut x, c, a, curve.breakpoints(), y_out, true);
            }
            let t = match tof {
                TofModel::Constant { days } => days * x[out[v]],
                TofModel::Affine { days_per_kg, base_days } => days_per_kg * y_out + base_days * x[out[v]],
                TofModel::Pwl { curve } => curve.eval(y_out).unwrap_or(f64::NAN),
            };
            if let Some(&dt) = c.vars.arc_time.get(&a) {
                x[dt] = t;
            }
            if net.layers[arc.key.layer].tag.is_cargo() {
                *cargo_layer_time
                    .entry(arc.key.layer)
                    .or_default()
                    .entry(v)
                    .or_insert(0.0) += t;
            } else {
                crew_days += t;
            }
        }
    }
    let mut cargo_days = 0.0;
    for (&layer, &tau) in &c.vars.layer_duration {
        let d = cargo_layer_time
            .get(&layer)
            .map(|m| m.values().copied().fold(0.0, f64::max))
            .unwrap_or(0.0);
        x[tau] = d;
        cargo_days += d;
        if d > 0.0 {
            layer_durations.insert(layer + 1, d);
        }
    }
    Ok(PlanAssignment {
        values: x,
        layer_durations,
        cargo_days,
        crew_days,
    })
}

/// Sets the interpolation weights of arc `a` for initial mass `y`.
fn fill_weights(x: &mut [f64], c: &Campaign, a: usize, d: &[f64], y: f64, time: bool) {
    let members: Vec<usize> = c
        .model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| match v.provenance {
            Provenance::MassWeight { arc, .. } => !time && arc == a,
            Provenance::TimeWeight { arc, .. } => time && arc == a,
            _ => false,
        })
        .map(|(i, _)| i)
        .collect();
    if members.len() != d.len() {
        return;
    }
    let k = d.partition_point(|&b| b < y).clamp(1, d.len() - 1);
    let t = ((y - d[k - 1]) / (d[k] - d[k - 1])).clamp(0.0, 1.0);
    x[members[k - 1]] = 1.0 - t;
    x[members[k]] = t;
}

/// Residual summary of a plan replayed through the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanAudit {
    pub feasible: bool,
    pub tolerance: f64,
    pub objective_kg: f64,
    pub cargo_days: f64,
    pub crew_days: f64,
    pub layer_durations: BTreeMap<usize, f64>,
    pub max_row_violation: f64,
    pub max_bound_violation: f64,
    pub max_integrality_violation: f64,
    pub by_tag: BTreeMap<String, TagSummary>,
    /// Rows violated beyond the tolerance, worst first.
    pub violations: Vec<(String, f64)>,
    pub sos2_violations: Vec<String>,
}

/// Default replay tolerance: printed plans are rounded to whole kilograms.
pub const PLAN_TOLERANCE: f64 = 1.0;

pub fn validate_plan(plan: &FlowPlan, c: &Campaign, tolerance: f64) -> Result<PlanAudit, CampaignError> {
    let full = plan_assignment(c, plan)?;
    let tol = Tolerances {
        feasibility: tolerance,
        relative_feasibility: 0.0,
        integrality: 1e-6,
    };
    let report = c.model.check(&full.values, &tol);
    let mut violations = report.violated.clone();
    violations.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let max_row_violation = report.by_tag.values().map(|t| t.max_violation).fold(0.0, f64::max);
    Ok(PlanAudit {
        feasible: report.feasible,
        tolerance,
        objective_kg: report.objective,
        cargo_days: full.cargo_days,
        crew_days: full.crew_days,
        layer_durations: full.layer_durations,
        max_row_violation,
        max_bound_violation: report.max_bound_violation,
        max_integrality_violation: report.max_integrality_violation,
        by_tag: report.by_tag,
        violations,
        sos2_violations: report.sos2_violations,
    })
}

/// Outcome of one restricted-fleet solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetTrial {
    pub fleet: Vec<String>,
    pub status: SolveStatus,
    pub objective_kg: Option<f64>,
    pub nodes: usize,
    pub refined: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct CampaignSolution {
    pub result: SolveResult,
    pub plan: Option<FlowPlan>,
    pub trials: Vec<FleetTrial>,
}

/// Candidate fleets for screening: the empty fleet, then every multiset of
/// tug types of size `1..=max_fleet`, realized with the lowest-numbered
/// units of each type.
pub fn screening_fleets(tugs: &[TugUnit], max_fleet: usize) -> Vec<Vec<String>> {
    let mut types: Vec<Vec<&TugUnit>> = Vec::new();
    for t in tugs {
        match types
            .iter_mut()
            .find(|g| g[0].propulsion == t.propulsion && g[0].family_index == t.family_index)
        {
            Some(g) => g.push(t),
            None => types.push(vec![t]),
        }
    }
    let mut out = vec![Vec::new()];
    let mut counts = vec![0usize; types.len()];
    fn rec(
        types: &[Vec<&TugUnit>],
        from: usize,
        left: usize,
        counts: &mut Vec<usize>,
        out: &mut Vec<Vec<String>>,
    ) {
        for i in from..types.len() {
            if counts[i] == types[i].len() || left == 0 {
                continue;
            }
            counts[i] += 1;
            let fleet: Vec<String> = types
                .iter()
                .zip(counts.iter())
                .flat_map(|(g, &n)| g[..n].iter().map(|t| t.name.clone()))
                .collect();
            out.push(fleet);
            rec(types, i, left - 1, counts, out);
            counts[i] -= 1;
        }
    }
    if max_fleet > 0 {
        rec(&types, 0, max_fleet, &mut counts, &mut out);
    }
    out.sort_by_key(|f| f.len());
    out
}

/// The campaign model with every flow involving a tug outside `fleet`
/// fixed at zero. Variables keep their indices.
pub fn restricted_model(c: &Campaign, fleet: &[String]) -> MilpModel {
    let mut m = c.model.clone();
    let mut zero = |v: usize| {
        let var = &mut m.variables[v];
        if var.lower <= 0.0 {
            var.lower = 0.0;
            var.upper = 0.0;
        }
    };
    for t in &c.tugs {
        if fleet.contains(&t.name) {
            continue;
        }
        let k = c.network.schema.index_of(&t.name).expect("tug in schema");
        for (a, arc) in c.network.transport.iter().enumerate() {
            zero(c.vars.flow_out[a][k]);
            zero(c.vars.flow_in[a][k]);
            if arc.key.vehicle == t.name {
                c.vars.flow_out[a].iter().for_each(|&v| zero(v));
                c.vars.flow_in[a].iter().for_each(|&v| zero(v));
                zero(c.vars.mass_out[a]);
                zero(c.vars.mass_in[a]);
                if let Some(&dt) = c.vars.arc_time.get(&a) {
                    zero(dt);
                }
            }
        }
        for h in 0..c.network.holdover.len() {
            zero(c.vars.hold_out[h][k]);
            zero(c.vars.hold_in[h][k]);
        }
    }
    m
}

fn remaining(deadline: Option<Instant>) -> Option<Duration> {
    deadline.map(|d| d.saturating_duration_since(Instant::now()))
}

/// Solves the campaign: fleet screening (see [`ScreeningConfig`]) followed
/// by branch and bound over the full fleet, seeded with the best plan.
/// `opts.time_limit` bounds the whole procedure.
pub fn solve_campaign(c: &Campaign, opts: &MilpOptions, screening: &ScreeningConfig) -> CampaignSolution {
    let start = Instant::now();
    let deadline = opts.time_limit.map(|t| start + t);
    let mut trials = Vec::new();
    let mut seeds: Vec<(f64, Vec<f64>, usize)> = Vec::new();
    let mut nodes = 0;
    let mut iterations = 0;
    if screening.max_fleet > 0 {
        for fleet in screening_fleets(&c.tugs, screening.max_fleet) {
            if remaining(deadline).is_some_and(|r| r.is_zero()) {
                break;
            }
            let o = MilpOptions {
                node_limit: Some(screening.screen_nodes.max(1)),
                time_limit: remaining(deadline),
                initial_solution: None,
                ..opts.clone()
            };
            let r = solve_milp(&restricted_model(c, &fleet), &o);
            nodes += r.nodes;
            iterations += r.lp_iterations;
            if let (Some(obj), Some(x)) = (r.objective, r.values) {
                seeds.push((obj, x, trials.len()));
            }
            trials.push(FleetTrial {
                fleet,
                status: r.status,
                objective_kg: r.objective,
                nodes: r.nodes,
                refined: false,
                wall_time_s: r.wall_time_s,
            });
        }
        seeds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        for (obj, x, i) in seeds.clone().into_iter().take(screening.refine) {
            if trials[i].status.is_proven() || remaining(deadline).is_some_and(|r| r.is_zero()) {
                continue;
            }
            let o = MilpOptions {
                node_limit: Some(screening.refine_nodes.max(1)),
                time_limit: remaining(deadline),
                initial_solution: Some(x),
                ..opts.clone()
            };
            let r = solve_milp(&restricted_model(c, &trials[i].fleet), &o);
            nodes += r.nodes;
            iterations += r.lp_iterations;
            let fleet = trials[i].fleet.clone();
            if let (Some(o2), Some(x2)) = (r.objective, r.values) {
                if o2 < obj {
                    seeds.push((o2, x2, trials.len()));
                }
            }
            trials.push(FleetTrial {
                fleet,
                status: r.status,
                objective_kg: r.objective,
                nodes: r.nodes,
                refined: true,
                wall_time_s: r.wall_time_s,
            });
        }
    }
    let mut o = opts.clone();
    o.time_limit = remaining(deadline);
    let best_seed = seeds
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)))
        .map(|s| (s.0, s.1));
    match (&opts.initial_solution, best_seed) {
        (Some(x0), Some((obj, x))) => {
            o.initial_solution = Some(if c.model.objective_value(x0) <= obj { x0.clone() } else { x });
        }
        (None, Some((_, x))) => o.initial_solution = Some(x),
        _ => {}
    }
    let mut result = solve_milp(&c.model, &o);
    result.nodes += nodes;
    result.lp_iterations += iterations;
    result.wall_time_s = start.elapsed().as_secs_f64();
    let plan = result.values.as_ref().map(|x| extract_plan(c, x));
    CampaignSolution { result, plan, trials }
}

/// One solved grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub cargo_days: f64,
    pub crew_days: f64,
    pub status: SolveStatus,
    pub objective_kg: Option<f64>,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub plan: Option<FlowPlan>,
    /// Set when the point could not be built or solved.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Pairs `(looser, tighter)` where relaxing the bounds raised the cost
    /// beyond the solver gap.
    pub monotonicity_violations: Vec<(usize, usize)>,
}

/// Grid points sorted by `(crew_days, cargo_days)` with duplicates removed.
pub fn sorted_grid(cargo: &[f64], crew: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = crew
        .iter()
        .flat_map(|&w| cargo.iter().map(move |&g| (g, w)))
        .collect();
    pts.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    pts.dedup();
    pts
}

/// Solves every `(cargo_days, crew_days)` point. Points are solved in
/// `(crew, cargo)` order, and each point starts from the best plan among
/// already-solved points with tighter bounds, which stays feasible when
/// the bounds are relaxed.
pub fn pareto_sweep(
    base: &CampaignConfig,
    registry: &FitRegistry,
    grid: &[(f64, f64)],
    mut progress: impl FnMut(&SweepPoint),
) -> Result<SweepReport, CampaignError> {
    if grid.is_empty() {
        return Err(CampaignError::Config("sweep grid is empty".into()));
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1).then(grid[a].0.total_cmp(&grid[b].0)));
    let mut points: Vec<Option<SweepPoint>> = vec![None; grid.len()];
    let mut solutions: Vec<Option<Vec<f64>>> = vec![None; grid.len()];
    let mut template: Option<Campaign> = None;
    for &i in &order {
        let (cargo_days, crew_days) = grid[i];
        let mut cfg = base.clone();
        cfg.cargo_days = cargo_days;
        cfg.crew_days = crew_days;
        let built = match &template {
            Some(t) => rebound(t, &cfg),
            None => build_campaign(&cfg, registry),
        };
        let campaign = match built {
            Ok(c) => c,
            Err(e) => {
                let p = SweepPoint {
                    cargo_days,
                    crew_days,
                    status: SolveStatus::Infeasible,
                    objective_kg: None,
                    gap: f64::INFINITY,
                    nodes: 0,
                    wall_time_s: 0.0,
                    plan: None,
                    error: Some(e.to_string()),
                };
                progress(&p);
                points[i] = Some(p);
                continue;
            }
        };
        let mut opts = cfg.solver.options();
        let seed = (0..grid.len())
            .filter(|&j| j != i && grid[j].0 <= cargo_days && grid[j].1 <= crew_days)
            .filter_map(|j| {
                let obj = points[j].as_ref()?.objective_kg?;
                Some((obj, j))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .and_then(|(_, j)| solutions[j].clone());
        opts.initial_solution = seed;
        let sol = solve_campaign(&campaign, &opts, &cfg.solver.screening);
        let p = SweepPoint {
            cargo_days,
            crew_days,
            status: sol.result.status,
            objective_kg: sol.result.objective,
            gap: sol.result.gap,
            nodes: sol.result.nodes,
            wall_time_s: sol.result.wall_time_s,
            plan: sol.plan,
            error: None,
        };
        progress(&p);
        solutions[i] = sol.result.values;
        points[i] = Some(p);
        template.get_or_insert(campaign);
    }
    let points: Vec<SweepPoint> = points.into_iter().map(|p| p.expect("every point visited")).collect();
    let monotonicity_violations = monotonicity_violations(&points, base.solver.gap);
    Ok(SweepReport {
        points,
        monotonicity_violations,
    })
}

/// Same campaign with new time bounds; only the bound rows change.
fn rebound(t: &Campaign, cfg: &CampaignConfig) -> Result<Campaign, CampaignError> {
    cfg.check()?;
    let mut c = t.clone();
    c.config = cfg.clone();
    for row in &mut c.model.constraints {
        match row.tag.as_str() {
            "cargo_time" => row.rhs = cfg.cargo_days,
            "crew_time" => row.rhs = cfg.crew_days,
            _ => {}
        }
    }
    Ok(c)
}

/// Pairs `(i, j)` where point `i` has looser bounds than `j` but a higher
/// objective by more than the relative gap.
pub fn monotonicity_violations(points: &[SweepPoint], gap: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if i == j || !(p.cargo_days >= q.cargo_days && p.crew_days >= q.crew_days) {
                continue;
            }
            if let (Some(a), Some(b)) = (p.objective_kg, q.objective_kg) {
                if a > b + gap.max(1e-6) * b.abs().max(1.0) {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

/// Number of times each tug leaves its parking orbit in a plan.
pub fn tug_departures(c: &Campaign, plan: &FlowPlan) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in &c.tugs {
        let n = plan
            .arcs
            .iter()
            .filter(|a| {
                a.kind == PlanArcKind::Transport
                    && a.vehicle == t.name
                    && a.origin == t.parking_orbit()
                    && a.flows.get(&t.name).copied().unwrap_or(0.0) > 0.5
            })
            .count();
        out.insert(t.name.clone(), n);
    }
    out
}
