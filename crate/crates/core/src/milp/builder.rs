//! Encodes an [`EventNetwork`] as a [`MilpModel`]: flow and total-mass
//! variables, node balances, arc transformations, concurrency rows, time
//! bounds and the launch-cost objective.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{MilpModel, Provenance, Relation, VarId, VarKind};
use crate::netgraph::{CommodityKind, DemandTable, EventNetwork, NetworkError, Propulsion};
use crate::traj::{MassModel, PwlCurve, TofModel, TrajError};

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("arc {0} has no mass surrogate")]
    MissingSurrogate(String),
    #[error("arc {0} has no time-of-flight model")]
    MissingTofModel(String),
    #[error("concurrency rule refers to unknown commodity {0}")]
    UnknownPolicyTarget(String),
    #[error("arc {0}: a propellant-burning surrogate needs a propellant commodity")]
    NoPropellant(String),
    #[error("arc {0}: a fixed mass offset or flight time needs a discrete vehicle")]
    NoVehicle(String),
    #[error(transparent)]
    Surrogate(#[from] TrajError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Where a fuel-capacity row applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityScope {
    /// Arcs propelled by the vehicle.
    PropelledBy,
    /// Every transportation arc on which both commodities may flow.
    Carried,
}

/// Linear coupling among commodities on a single arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ConcurrencyRule {
    /// `fuel - capacity_kg * vehicle <= 0` on outflow.
    FuelCapacity {
        vehicle: String,
        fuel: String,
        capacity_kg: f64,
        scope: CapacityScope,
    },
    /// `ratio * fuel - structure <= 0` on arcs propelled by the sized stage.
    StageSizing { structure: String, fuel: String, ratio: f64 },
    /// `sum(ratio_f * fuel_f) - structure - sum(allowance_v * vehicle_v) <= 0`
    /// on every transportation and holdover arc.
    Tankage {
        fuels: Vec<(String, f64)>,
        structure: String,
        allowances: Vec<(String, f64)>,
    },
}

/// Campaign time limits in days. `None` leaves the phase unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeBounds {
    pub cargo_days: Option<f64>,
    pub crew_days: Option<f64>,
}

/// Variable ids of every network quantity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VarMap {
    pub flow_out: Vec<Vec<VarId>>,
    pub flow_in: Vec<Vec<VarId>>,
    pub mass_out: Vec<VarId>,
    pub mass_in: Vec<VarId>,
    pub hold_out: Vec<Vec<VarId>>,
    pub hold_in: Vec<Vec<VarId>>,
    /// Duration variable per cargo layer index.
    pub layer_duration: BTreeMap<usize, VarId>,
    /// Flight-time variable of arcs with piecewise-linear time models.
    pub arc_time: BTreeMap<usize, VarId>,
}

pub struct ModelBuilder<'a> {
    net: &'a EventNetwork,
    model: MilpModel,
    vars: VarMap,
}

fn var_kind(kind: CommodityKind) -> (VarKind, f64) {
    match kind {
        CommodityKind::Binary => (VarKind::Binary, 1.0),
        CommodityKind::Integer => (VarKind::Integer, f64::INFINITY),
        CommodityKind::Continuous => (VarKind::Continuous, f64::INFINITY),
    }
}

fn token(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

impl<'a> ModelBuilder<'a> {
    pub fn new(net: &'a EventNetwork, name: &str) -> Self {
        ModelBuilder {
            net,
            model: MilpModel::new(name),
            vars: VarMap::default(),
        }
    }

    pub fn model(&self) -> &MilpModel {
        &self.model
    }

    pub fn vars(&self) -> &VarMap {
        &self.vars
    }

    pub fn finish(self) -> (MilpModel, VarMap) {
        (self.model, self.vars)
    }

    fn arc_label(&self, a: usize) -> String {
        let k = &self.net.transport[a].key;
        format!("e{}.{}.{}.{}", k.layer, token(&k.origin), token(&k.destination), token(&k.vehicle))
    }

    fn hold_label(&self, h: usize) -> String {
        let hv = &self.net.holdover[h];
        format!("e{}.{}", hv.from_layer, token(&hv.node))
    }

    /// Outflow and inflow per commodity on every arc, total-mass pairs on
    /// transportation arcs, and a duration per cargo layer. Commodities an
    /// arc does not admit get an upper bound of zero.
    pub fn add_flow_variables(&mut self) {
        let schema = &self.net.schema;
        let masses = schema.unit_masses();
        for a in 0..self.net.transport.len() {
            let label = self.arc_label(a);
            let arc = &self.net.transport[a];
            let mut outs = Vec::with_capacity(schema.len());
            let mut ins = Vec::with_capacity(schema.len());
            for (c, com) in schema.entries().iter().enumerate() {
                let (kind, ub) = var_kind(com.kind);
                let ub = if arc.allowed[c] { ub } else { 0.0 };
                let cn = token(&com.name);
                outs.push(self.model.add_var(
                    format!("xo.{label}.{cn}"),
                    kind,
                    0.0,
                    ub,
                    Provenance::FlowOut { arc: a, commodity: c },
                ));
                ins.push(self.model.add_var(
                    format!("xi.{label}.{cn}"),
                    kind,
                    0.0,
                    ub,
                    Provenance::FlowIn { arc: a, commodity: c },
                ));
            }
            let yo = self.model.add_var(
                format!("yo.{label}"),
                VarKind::Continuous,
                0.0,
                f64::INFINITY,
                Provenance::MassOut { arc: a },
            );
            let yi = self.model.add_var(
                format!("yi.{label}"),
                VarKind::Continuous,
                0.0,
                f64::INFINITY,
                Provenance::MassIn { arc: a },
            );
            let total = |x: &[VarId]| -> Vec<(VarId, f64)> {
                x.iter()
                    .zip(&masses)
                    .zip(&arc.allowed)
                    .filter(|(_, &ok)| ok)
                    .map(|((&v, &m), _)| (v, -m))
                    .collect()
            };
            let mut t = total(&outs);
            t.push((yo, 1.0));
            self.model
                .add_constraint(format!("mass_out.{label}"), "total_mass", &t, Relation::Eq, 0.0);
            let mut t = total(&ins);
            t.push((yi, 1.0));
            self.model
                .add_constraint(format!("mass_in.{label}"), "total_mass", &t, Relation::Eq, 0.0);
            self.vars.flow_out.push(outs);
            self.vars.flow_in.push(ins);
            self.vars.mass_out.push(yo);
            self.vars.mass_in.push(yi);
        }
        for h in 0..self.net.holdover.len() {
            let label = self.hold_label(h);
            let hv = &self.net.holdover[h];
            let mut outs = Vec::with_capacity(schema.len());
            let mut ins = Vec::with_capacity(schema.len());
            for (c, com) in schema.entries().iter().enumerate() {
                let (kind, ub) = var_kind(com.kind);
                let ub = if hv.allowed[c] { ub } else { 0.0 };
                let cn = token(&com.name);
                outs.push(self.model.add_var(
                    format!("ho.{label}.{cn}"),
                    kind,
                    0.0,
                    ub,
                    Provenance::HoldOut { holdover: h, commodity: c },
                ));
                ins.push(self.model.add_var(
                    format!("hi.{label}.{cn}"),
                    kind,
                    0.0,
                    ub,
                    Provenance::HoldIn { holdover: h, commodity: c },
                ));
            }
            self.vars.hold_out.push(outs);
            self.vars.hold_in.push(ins);
        }
        for layer in &self.net.layers {
            if layer.tag.is_cargo() {
                let v = self.model.add_var(
                    format!("tau.e{}", layer.index),
                    VarKind::Continuous,
                    0.0,
                    f64::INFINITY,
                    Provenance::LayerDuration { layer: layer.index },
                );
                self.vars.layer_duration.insert(layer.index, v);
            }
        }
    }

    /// One `<=` row per node, layer and commodity:
    /// outflow + holdover out - inflow - holdover in <= supply.
    pub fn emit_mass_balance(&mut self, demands: &DemandTable) -> Result<(), BuildError> {
        demands.check(self.net)?;
        let net = self.net;
        let k = net.schema.len();
        // (node, layer) -> terms per commodity
        let mut rows: BTreeMap<(usize, usize), Vec<Vec<(VarId, f64)>>> = BTreeMap::new();
        let node_ix = |id: &str| net.node_index(id).expect("arc nodes validated at build");
        for (a, arc) in net.transport.iter().enumerate() {
            let e = arc.key.layer;
            let o = node_ix(&arc.key.origin);
            let d = node_ix(&arc.key.destination);
            for c in 0..k {
                if !arc.allowed[c] {
                    continue;
                }
                rows.entry((o, e)).or_insert_with(|| vec![Vec::new(); k])[c].push((self.vars.flow_out[a][c], 1.0));
                rows.entry((d, e)).or_insert_with(|| vec![Vec::new(); k])[c].push((self.vars.flow_in[a][c], -1.0));
            }
        }
        for (h, hv) in net.holdover.iter().enumerate() {
            let n = node_ix(&hv.node);
            for c in 0..k {
                if !hv.allowed[c] {
                    continue;
                }
                rows.entry((n, hv.from_layer)).or_insert_with(|| vec![Vec::new(); k])[c]
                    .push((self.vars.hold_out[h][c], 1.0));
                rows.entry((n, hv.to_layer())).or_insert_with(|| vec![Vec::new(); k])[c]
                    .push((self.vars.hold_in[h][c], -1.0));
            }
        }
        for (n, node) in net.nodes.iter().enumerate() {
            for e in 0..net.num_layers() {
                for c in 0..k {
                    let cname = &net.schema.get(c).name;
                    if demands.is_unlimited(node, cname) {
                        continue;
                    }
                    let rhs = demands.get(node, e, cname);
                    let terms: &[(VarId, f64)] = rows.get(&(n, e)).map(|r| r[c].as_slice()).unwrap_or(&[]);
                    if terms.is_empty() && rhs >= 0.0 {
                        continue;
                    }
                    self.model.add_constraint(
                        format!("balance.e{e}.{}.{}", token(node), token(cname)),
                        "balance",
                        terms,
                        Relation::Le,
                        rhs,
                    );
                }
            }
        }
        Ok(())
    }

    /// Arc transformations. Holdovers and launches conserve every
    /// commodity; propelled arcs conserve everything except their
    /// propellant and tie total final mass to total initial mass.
    pub fn emit_transformation(&mut self) -> Result<(), BuildError> {
        let net = self.net;
        let k = net.schema.len();
        for (a, arc) in net.transport.iter().enumerate() {
            let label = self.arc_label(a);
            let mass = arc
                .mass
                .as_ref()
                .ok_or_else(|| BuildError::MissingSurrogate(arc.key.to_string()))?;
            let burned = match mass {
                MassModel::Identity => None,
                _ => Some(
                    arc.propulsion
                        .propellant()
                        .ok_or_else(|| BuildError::NoPropellant(arc.key.to_string()))?,
                ),
            };
            for c in 0..k {
                if Some(c) == burned || !arc.allowed[c] {
                    continue;
                }
                let cn = token(&net.schema.get(c).name);
                self.model.add_constraint(
                    format!("conserve.{label}.{cn}"),
                    "transformation",
                    &[(self.vars.flow_in[a][c], 1.0), (self.vars.flow_out[a][c], -1.0)],
                    Relation::Eq,
                    0.0,
                );
            }
            let (yo, yi) = (self.vars.mass_out[a], self.vars.mass_in[a]);
            match mass {
                MassModel::Identity => {}
                MassModel::Affine { ratio, offset_kg } => {
                    let mut t = vec![(yi, 1.0), (yo, -ratio)];
                    if *offset_kg != 0.0 {
                        let v = arc
                            .propulsion
                            .vehicle()
                            .ok_or_else(|| BuildError::NoVehicle(arc.key.to_string()))?;
                        t.push((self.vars.flow_out[a][v], -offset_kg));
                    }
                    self.model
                        .add_constraint(format!("burn.{label}"), "transformation", &t, Relation::Eq, 0.0);
                }
                MassModel::Pwl { curve } => {
                    let lam = self.pwl_block(a, curve, "lam", |arc, index| Provenance::MassWeight { arc, index })?;
                    let mut t: Vec<(VarId, f64)> = lam.iter().zip(curve.values()).map(|(&l, &g)| (l, g)).collect();
                    t.push((yi, -1.0));
                    self.model
                        .add_constraint(format!("pwl_out.{label}"), "pwl", &t, Relation::Eq, 0.0);
                }
            }
        }
        for (h, hv) in net.holdover.iter().enumerate() {
            let label = self.hold_label(h);
            for c in 0..k {
                if !hv.allowed[c] {
                    continue;
                }
                let cn = token(&net.schema.get(c).name);
                self.model.add_constraint(
                    format!("hold.{label}.{cn}"),
                    "transformation",
                    &[(self.vars.hold_in[h][c], 1.0), (self.vars.hold_out[h][c], -1.0)],
                    Relation::Eq,
                    0.0,
                );
            }
        }
        Ok(())
    }

    /// Convex-combination weights over `curve`'s breakpoints tied to the
    /// arc's initial mass, declared as an SOS2 set.
    fn pwl_block(
        &mut self,
        a: usize,
        curve: &PwlCurve,
        prefix: &str,
        prov: impl Fn(usize, usize) -> Provenance,
    ) -> Result<Vec<VarId>, BuildError> {
        let label = self.arc_label(a);
        let lam: Vec<VarId> = (0..curve.breakpoints().len())
            .map(|i| {
                self.model.add_var(
                    format!("{prefix}.{label}.{i}"),
                    VarKind::Continuous,
                    0.0,
                    f64::INFINITY,
                    prov(a, i),
                )
            })
            .collect();
        let ones: Vec<(VarId, f64)> = lam.iter().map(|&l| (l, 1.0)).collect();
        self.model
            .add_constraint(format!("{prefix}_sum.{label}"), "pwl", &ones, Relation::Eq, 1.0);
        let mut t: Vec<(VarId, f64)> = lam.iter().zip(curve.breakpoints()).map(|(&l, &d)| (l, d)).collect();
        t.push((self.vars.mass_out[a], -1.0));
        self.model
            .add_constraint(format!("{prefix}_in.{label}"), "pwl", &t, Relation::Eq, 0.0);
        self.model.add_sos2(format!("sos.{prefix}.{label}"), lam.clone());
        Ok(lam)
    }

    /// Piecewise-linear flight time on arc `a`. Returns the flight-time
    /// variable, which equals the interpolated time at the arc's initial
    /// mass.
    pub fn attach_pwl_tof(&mut self, a: usize, breakpoints: &[f64], values: &[f64]) -> Result<VarId, BuildError> {
        let curve = PwlCurve::new(breakpoints.to_vec(), values.to_vec())?;
        let lam = self.pwl_block(a, &curve, "lamt", |arc, index| Provenance::TimeWeight { arc, index })?;
        let label = self.arc_label(a);
        let dt = self.model.add_var(
            format!("dt.{label}"),
            VarKind::Continuous,
            0.0,
            f64::INFINITY,
            Provenance::ArcTime { arc: a },
        );
        let mut t: Vec<(VarId, f64)> = lam.iter().zip(curve.values()).map(|(&l, &h)| (l, h)).collect();
        t.push((dt, -1.0));
        self.model
            .add_constraint(format!("lamt_out.{label}"), "pwl", &t, Relation::Eq, 0.0);
        self.vars.arc_time.insert(a, dt);
        Ok(dt)
    }

    pub fn emit_concurrency(&mut self, rules: &[ConcurrencyRule]) -> Result<(), BuildError> {
        let net = self.net;
        let ix = |name: &str| {
            net.schema
                .index_of(name)
                .ok_or_else(|| BuildError::UnknownPolicyTarget(name.to_string()))
        };
        for (r, rule) in rules.iter().enumerate() {
            match rule {
                ConcurrencyRule::FuelCapacity {
                    vehicle,
                    fuel,
                    capacity_kg,
                    scope,
                } => {
                    let (v, f) = (ix(vehicle)?, ix(fuel)?);
                    for (a, arc) in net.transport.iter().enumerate() {
                        let applies = match scope {
                            CapacityScope::PropelledBy => arc.propulsion.vehicle() == Some(v),
                            CapacityScope::Carried => arc.allowed[v],
                        };
                        if !applies || !arc.allowed[f] {
                            continue;
                        }
                        let label = self.arc_label(a);
                        self.model.add_constraint(
                            format!("cap{r}.{label}"),
                            "fuel_capacity",
                            &[(self.vars.flow_out[a][f], 1.0), (self.vars.flow_out[a][v], -capacity_kg)],
                            Relation::Le,
                            0.0,
                        );
                    }
                }
                ConcurrencyRule::StageSizing { structure, fuel, ratio } => {
                    let (s, f) = (ix(structure)?, ix(fuel)?);
                    for (a, arc) in net.transport.iter().enumerate() {
                        let sized = matches!(arc.propulsion,
                            Propulsion::SizedStage { structure, propellant } if structure == s && propellant == f);
                        if !sized || !arc.allowed[f] {
                            continue;
                        }
                        let label = self.arc_label(a);
                        self.model.add_constraint(
                            format!("stage{r}.{label}"),
                            "stage_sizing",
                            &[(self.vars.flow_out[a][f], *ratio), (self.vars.flow_out[a][s], -1.0)],
                            Relation::Le,
                            0.0,
                        );
                    }
                }
                ConcurrencyRule::Tankage {
                    fuels,
                    structure,
                    allowances,
                } => {
                    let s = ix(structure)?;
                    let fuels: Vec<(usize, f64)> = fuels
                        .iter()
                        .map(|(n, q)| Ok((ix(n)?, *q)))
                        .collect::<Result<_, BuildError>>()?;
                    let allowances: Vec<(usize, f64)> = allowances
                        .iter()
                        .map(|(n, q)| Ok((ix(n)?, *q)))
                        .collect::<Result<_, BuildError>>()?;
                    let row = |allowed: &[bool], x: &[VarId]| -> Option<Vec<(VarId, f64)>> {
                        if !fuels.iter().any(|&(f, _)| allowed[f]) {
                            return None;
                        }
                        let mut t: Vec<(VarId, f64)> = fuels
                            .iter()
                            .filter(|&&(f, _)| allowed[f])
                            .map(|&(f, q)| (x[f], q))
                            .collect();
                        t.push((x[s], -1.0));
                        t.extend(
                            allowances
                                .iter()
                                .filter(|&&(v, _)| allowed[v])
                                .map(|&(v, q)| (x[v], -q)),
                        );
                        Some(t)
                    };
                    for (a, arc) in net.transport.iter().enumerate() {
                        if let Some(t) = row(&arc.allowed, &self.vars.flow_out[a]) {
                            let label = self.arc_label(a);
                            self.model
                                .add_constraint(format!("tank{r}.{label}"), "tankage", &t, Relation::Le, 0.0);
                        }
                    }
                    for (h, hv) in net.holdover.iter().enumerate() {
                        if let Some(t) = row(&hv.allowed, &self.vars.hold_out[h]) {
                            let label = self.hold_label(h);
                            self.model
                                .add_constraint(format!("tank{r}.hold.{label}"), "tankage", &t, Relation::Le, 0.0);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Flight-time expression of a vehicle-propelled arc, or `None` for
    /// instantaneous arcs without a vehicle.
    fn arc_time_terms(&mut self, a: usize) -> Result<Option<(usize, Vec<(VarId, f64)>)>, BuildError> {
        let arc = &self.net.transport[a];
        let tof = arc
            .tof
            .as_ref()
            .ok_or_else(|| BuildError::MissingTofModel(arc.key.to_string()))?;
        let Some(v) = arc.propulsion.vehicle() else {
            let zero = matches!(tof, TofModel::Constant { days } if *days == 0.0);
            return if zero {
                Ok(None)
            } else {
                Err(BuildError::NoVehicle(arc.key.to_string()))
            };
        };
        let x = self.vars.flow_out[a][v];
        let terms = match tof.clone() {
            TofModel::Constant { days } => vec![(x, days)],
            TofModel::Affine { days_per_kg, base_days } => vec![(self.vars.mass_out[a], days_per_kg), (x, base_days)],
            TofModel::Pwl { curve } => {
                let dt = match self.vars.arc_time.get(&a) {
                    Some(&dt) => dt,
                    None => self.attach_pwl_tof(a, curve.breakpoints(), curve.values())?,
                };
                vec![(dt, 1.0)]
            }
        };
        Ok(Some((v, terms)))
    }

    /// Per cargo layer and vehicle: flight time minus layer duration <= 0;
    /// sum of cargo layer durations <= cargo bound; per crew vehicle: total
    /// crew-layer flight time <= crew bound.
    pub fn emit_time_constraints(&mut self, bounds: &TimeBounds) -> Result<(), BuildError> {
        let net = self.net;
        let mut crew: BTreeMap<usize, Vec<(VarId, f64)>> = BTreeMap::new();
        for layer in &net.layers {
            let mut per_vehicle: BTreeMap<usize, Vec<(VarId, f64)>> = BTreeMap::new();
            for &a in &layer.active_arcs {
                if let Some((v, terms)) = self.arc_time_terms(a)? {
                    per_vehicle.entry(v).or_default().extend(terms);
                }
            }
            if layer.tag.is_cargo() {
                let tau = self.vars.layer_duration[&layer.index];
                for (v, mut terms) in per_vehicle {
                    terms.push((tau, -1.0));
                    let name = format!("duration.e{}.{}", layer.index, token(&net.schema.get(v).name));
                    self.model
                        .add_constraint(name, "layer_duration", &terms, Relation::Le, 0.0);
                }
            } else {
                for (v, terms) in per_vehicle {
                    crew.entry(v).or_default().extend(terms);
                }
            }
        }
        if let Some(limit) = bounds.cargo_days {
            let terms: Vec<(VarId, f64)> = self.vars.layer_duration.values().map(|&t| (t, 1.0)).collect();
            self.model
                .add_constraint("cargo_time", "cargo_time", &terms, Relation::Le, limit);
        }
        if let Some(limit) = bounds.crew_days {
            for (v, terms) in crew {
                let name = format!("crew_time.{}", token(&net.schema.get(v).name));
                self.model.add_constraint(name, "crew_time", &terms, Relation::Le, limit);
            }
        }
        Ok(())
    }

    /// Minimize the cost-weighted outflow of every arc.
    pub fn emit_objective(&mut self) {
        let mut terms = Vec::new();
        for (a, arc) in self.net.transport.iter().enumerate() {
            for (c, &cost) in arc.cost.iter().enumerate() {
                if cost != 0.0 && arc.allowed[c] {
                    terms.push((self.vars.flow_out[a][c], cost));
                }
            }
        }
        for (h, hv) in self.net.holdover.iter().enumerate() {
            for (c, &cost) in hv.cost.iter().enumerate() {
                if cost != 0.0 && hv.allowed[c] {
                    terms.push((self.vars.hold_out[h][c], cost));
                }
            }
        }
        self.model.set_objective(&terms);
    }
}

/// Runs every emission step in order.
pub fn build_model(
    net: &EventNetwork,
    name: &str,
    demands: &DemandTable,
    rules: &[ConcurrencyRule],
    bounds: &TimeBounds,
) -> Result<(MilpModel, VarMap), BuildError> {
    let mut b = ModelBuilder::new(net, name);
    b.add_flow_variables();
    b.emit_mass_balance(demands)?;
    b.emit_transformation()?;
    b.emit_concurrency(rules)?;
    b.emit_time_constraints(bounds)?;
    b.emit_objective();
    Ok(b.finish())
}
