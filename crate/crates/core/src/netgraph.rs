//! Event-expanded multi-commodity network: the static nodes copied once per
//! event layer, multigraph transportation arcs bound to single vehicle
//! units, and holdover arcs linking consecutive layers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::traj::{MassModel, TofModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommodityKind {
    Binary,
    Integer,
    Continuous,
}

impl CommodityKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, CommodityKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commodity {
    pub name: String,
    pub kind: CommodityKind,
    /// Kilograms per unit; 1 for mass-denominated commodities.
    pub unit_mass: f64,
}

/// Ordered commodity list. Indices are stable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Commodity>", into = "Vec<Commodity>")]
pub struct CommoditySchema {
    entries: Vec<Commodity>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl CommoditySchema {
    pub fn new(entries: Vec<Commodity>) -> Result<Self, NetworkError> {
        let mut index = HashMap::new();
        for (i, c) in entries.iter().enumerate() {
            if !(c.unit_mass > 0.0) || !c.unit_mass.is_finite() {
                return Err(NetworkError::BadUnitMass(c.name.clone()));
            }
            if index.insert(c.name.clone(), i).is_some() {
                return Err(NetworkError::DuplicateCommodity(c.name.clone()));
            }
        }
        Ok(CommoditySchema { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &Commodity {
        &self.entries[i]
    }

    pub fn entries(&self) -> &[Commodity] {
        &self.entries
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn unit_masses(&self) -> Vec<f64> {
        self.entries.iter().map(|c| c.unit_mass).collect()
    }

    fn require(&self, name: &str) -> Result<usize, NetworkError> {
        self.index_of(name)
            .ok_or_else(|| NetworkError::UnknownCommodity(name.to_string()))
    }
}

impl TryFrom<Vec<Commodity>> for CommoditySchema {
    type Error = NetworkError;
    fn try_from(v: Vec<Commodity>) -> Result<Self, Self::Error> {
        CommoditySchema::new(v)
    }
}

impl From<CommoditySchema> for Vec<Commodity> {
    fn from(s: CommoditySchema) -> Self {
        s.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerTag {
    CargoForward,
    CargoReturn,
    CrewForward,
    CrewReturn,
}

impl LayerTag {
    pub fn is_cargo(self) -> bool {
        matches!(self, LayerTag::CargoForward | LayerTag::CargoReturn)
    }

    pub fn is_crew(self) -> bool {
        !self.is_cargo()
    }
}

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerTag::CargoForward => "cargo_forward",
            LayerTag::CargoReturn => "cargo_return",
            LayerTag::CrewForward => "crew_forward",
            LayerTag::CrewReturn => "crew_return",
        })
    }
}

/// How an arc is propelled, by commodity name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum PropulsionSpec {
    /// Launch from the surface by a carrier outside the commodity set.
    Launch,
    /// The arc's vehicle label names a discrete commodity that burns
    /// `propellant`.
    Vehicle { propellant: String },
    /// A stage whose structure is a continuous commodity sized to its
    /// propellant load.
    SizedStage { structure: String, propellant: String },
}

/// Resolved form of [`PropulsionSpec`], by commodity index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Propulsion {
    Launch,
    Vehicle { vehicle: usize, propellant: usize },
    SizedStage { structure: usize, propellant: usize },
}

impl Propulsion {
    /// Discrete commodity whose presence switches the arc on.
    pub fn vehicle(&self) -> Option<usize> {
        match *self {
            Propulsion::Vehicle { vehicle, .. } => Some(vehicle),
            _ => None,
        }
    }

    /// The commodity consumed over the arc, if any.
    pub fn propellant(&self) -> Option<usize> {
        match *self {
            Propulsion::Launch => None,
            Propulsion::Vehicle { propellant, .. } | Propulsion::SizedStage { propellant, .. } => Some(propellant),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub origin: String,
    pub destination: String,
    /// Vehicle unit label; must name a discrete commodity for
    /// [`PropulsionSpec::Vehicle`] arcs.
    pub vehicle: String,
    pub propulsion: PropulsionSpec,
    pub mass: Option<MassModel>,
    pub tof: Option<TofModel>,
    /// Commodities permitted to flow; all others are held at zero.
    pub allowed: Vec<String>,
    /// Cost per unit of commodity outflow.
    pub cost: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub tag: LayerTag,
    pub arcs: Vec<ArcSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArcKey {
    pub origin: String,
    pub destination: String,
    pub vehicle: String,
    pub layer: usize,
}

impl fmt::Display for ArcKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}:{}>{}:{}", self.layer, self.origin, self.destination, self.vehicle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportArc {
    pub key: ArcKey,
    pub propulsion: Propulsion,
    pub mass: Option<MassModel>,
    pub tof: Option<TofModel>,
    /// One flag per commodity.
    pub allowed: Vec<bool>,
    /// Cost per unit outflow, one entry per commodity.
    pub cost: Vec<f64>,
}

/// Inventory carried at `node` from layer `from_layer` to `from_layer + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoverArc {
    pub node: String,
    pub from_layer: usize,
    pub allowed: Vec<bool>,
    pub cost: Vec<f64>,
}

impl HoldoverArc {
    pub fn to_layer(&self) -> usize {
        self.from_layer + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLayer {
    pub index: usize,
    pub tag: LayerTag,
    /// Indices into [`EventNetwork::transport`].
    pub active_arcs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventNetwork {
    pub nodes: Vec<String>,
    pub schema: CommoditySchema,
    pub layers: Vec<EventLayer>,
    pub transport: Vec<TransportArc>,
    pub holdover: Vec<HoldoverArc>,
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("layer {0} contains a directed cycle")]
    CyclicLayer(usize),
    #[error("unknown vehicle {0}: not a discrete commodity")]
    UnknownVehicle(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown commodity {0}")]
    UnknownCommodity(String),
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("duplicate commodity {0}")]
    DuplicateCommodity(String),
    #[error("commodity {0} needs a positive finite unit mass")]
    BadUnitMass(String),
    #[error("no event layers given")]
    NoLayers,
}

/// Expands the static network over `layers`, generating a holdover arc for
/// every node between each pair of consecutive layers. Holdovers admit every
/// commodity until restricted.
pub fn build_event_network(
    static_nodes: &[String],
    layers: &[LayerSpec],
    schema: CommoditySchema,
) -> Result<EventNetwork, NetworkError> {
    if layers.is_empty() {
        return Err(NetworkError::NoLayers);
    }
    let mut seen = BTreeSet::new();
    for n in static_nodes {
        if !seen.insert(n.as_str()) {
            return Err(NetworkError::DuplicateNode(n.clone()));
        }
    }
    let k = schema.len();
    let mut transport = Vec::new();
    let mut event_layers = Vec::new();
    for (e, spec) in layers.iter().enumerate() {
        let mut active = Vec::new();
        for a in &spec.arcs {
            for n in [&a.origin, &a.destination] {
                if !seen.contains(n.as_str()) {
                    return Err(NetworkError::UnknownNode(n.clone()));
                }
            }
            let propulsion = match &a.propulsion {
                PropulsionSpec::Launch => Propulsion::Launch,
                PropulsionSpec::Vehicle { propellant } => {
                    let vehicle = schema
                        .index_of(&a.vehicle)
                        .filter(|&v| schema.get(v).kind.is_discrete())
                        .ok_or_else(|| NetworkError::UnknownVehicle(a.vehicle.clone()))?;
                    Propulsion::Vehicle {
                        vehicle,
                        propellant: schema.require(propellant)?,
                    }
                }
                PropulsionSpec::SizedStage { structure, propellant } => Propulsion::SizedStage {
                    structure: schema.require(structure)?,
                    propellant: schema.require(propellant)?,
                },
            };
            let mut allowed = vec![false; k];
            for name in &a.allowed {
                allowed[schema.require(name)?] = true;
            }
            let mut cost = vec![0.0; k];
            for (name, c) in &a.cost {
                cost[schema.require(name)?] = *c;
            }
            active.push(transport.len());
            transport.push(TransportArc {
                key: ArcKey {
                    origin: a.origin.clone(),
                    destination: a.destination.clone(),
                    vehicle: a.vehicle.clone(),
                    layer: e,
                },
                propulsion,
                mass: a.mass.clone(),
                tof: a.tof.clone(),
                allowed,
                cost,
            });
        }
        event_layers.push(EventLayer {
            index: e,
            tag: spec.tag,
            active_arcs: active,
        });
    }
    let mut holdover = Vec::new();
    for e in 0..layers.len() - 1 {
        for n in static_nodes {
            holdover.push(HoldoverArc {
                node: n.clone(),
                from_layer: e,
                allowed: vec![true; k],
                cost: vec![0.0; k],
            });
        }
    }
    let net = EventNetwork {
        nodes: static_nodes.to_vec(),
        schema,
        layers: event_layers,
        transport,
        holdover,
    };
    for layer in &net.layers {
        if net.topological_order(layer.index).is_none() {
            return Err(NetworkError::CyclicLayer(layer.index));
        }
    }
    Ok(net)
}

impl EventNetwork {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    /// Topological order of the nodes touched by a layer's active arcs, or
    /// `None` when those arcs contain a directed cycle.
    pub fn topological_order(&self, layer: usize) -> Option<Vec<String>> {
        let mut indeg: BTreeMap<&str, usize> = BTreeMap::new();
        let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for &a in &self.layers[layer].active_arcs {
            let key = &self.transport[a].key;
            indeg.entry(&key.origin).or_insert(0);
            *indeg.entry(&key.destination).or_insert(0) += 1;
            succ.entry(&key.origin).or_default().push(&key.destination);
        }
        let mut ready: Vec<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
        let mut order = Vec::new();
        while let Some(n) = ready.pop() {
            order.push(n.to_string());
            for &m in succ.get(n).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indeg.get_mut(m).expect("successor registered");
                *d -= 1;
                if *d == 0 {
                    ready.push(m);
                }
            }
        }
        (order.len() == indeg.len()).then_some(order)
    }

    pub fn arc_by_key(&self, key: &ArcKey) -> Option<usize> {
        self.transport.iter().position(|a| &a.key == key)
    }

    pub fn holdover_at(&self, node: &str, from_layer: usize) -> Option<usize> {
        self.holdover
            .iter()
            .position(|h| h.node == node && h.from_layer == from_layer)
    }

    /// Sets the admissible commodities of one holdover arc.
    pub fn restrict_holdover(&mut self, node: &str, from_layer: usize, allowed: &[&str]) -> Result<(), NetworkError> {
        let h = self
            .holdover_at(node, from_layer)
            .ok_or_else(|| NetworkError::UnknownNode(format!("{node} after layer {from_layer}")))?;
        let mut flags = vec![false; self.schema.len()];
        for name in allowed {
            flags[self.schema.require(name)?] = true;
        }
        self.holdover[h].allowed = flags;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Which vehicles may appear in which kind of layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VehiclePolicy {
    pub cargo_only: BTreeSet<String>,
    pub crew_only: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum MultigraphIssue {
    DuplicateArc { key: ArcKey },
    VehicleNotAllowedInLayer { key: ArcKey, tag: LayerTag },
}

impl fmt::Display for MultigraphIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MultigraphIssue::DuplicateArc { key } => write!(f, "duplicate arc {key}"),
            MultigraphIssue::VehicleNotAllowedInLayer { key, tag } => {
                write!(f, "vehicle {} not allowed in {tag} layer ({key})", key.vehicle)
            }
        }
    }
}

/// Checks that no two arcs share `(origin, destination, vehicle, layer)`
/// and, when a policy is given, that vehicles stay in their layer kinds.
/// An empty result means the network is well formed.
pub fn validate_multigraph(net: &EventNetwork, policy: Option<&VehiclePolicy>) -> Vec<MultigraphIssue> {
    let mut issues = Vec::new();
    let mut seen = BTreeSet::new();
    for arc in &net.transport {
        if !seen.insert(&arc.key) {
            issues.push(MultigraphIssue::DuplicateArc { key: arc.key.clone() });
        }
        if let Some(p) = policy {
            let tag = net.layers[arc.key.layer].tag;
            let banned = if tag.is_cargo() { &p.crew_only } else { &p.cargo_only };
            let carried = arc
                .allowed
                .iter()
                .enumerate()
                .any(|(c, &ok)| ok && banned.contains(&net.schema.get(c).name));
            if banned.contains(&arc.key.vehicle) || carried {
                issues.push(MultigraphIssue::VehicleNotAllowedInLayer {
                    key: arc.key.clone(),
                    tag,
                });
            }
        }
    }
    issues
}

/// Per-node, per-layer supply (positive) and demand (negative) vectors.
///
/// Pairs listed in `unlimited` have no balance row at all: the node can
/// supply any amount of that commodity in every layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandTable {
    pub entries: BTreeMap<String, BTreeMap<usize, BTreeMap<String, f64>>>,
    pub unlimited: BTreeSet<(String, String)>,
}

impl DemandTable {
    pub fn add(&mut self, node: &str, layer: usize, commodity: &str, amount: f64) {
        *self
            .entries
            .entry(node.to_string())
            .or_default()
            .entry(layer)
            .or_default()
            .entry(commodity.to_string())
            .or_insert(0.0) += amount;
    }

    pub fn set_unlimited(&mut self, node: &str, commodity: &str) {
        self.unlimited.insert((node.to_string(), commodity.to_string()));
    }

    pub fn get(&self, node: &str, layer: usize, commodity: &str) -> f64 {
        self.entries
            .get(node)
            .and_then(|m| m.get(&layer))
            .and_then(|m| m.get(commodity))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn is_unlimited(&self, node: &str, commodity: &str) -> bool {
        self.unlimited.contains(&(node.to_string(), commodity.to_string()))
    }

    /// Every entry must name a node, layer and commodity of `net`.
    pub fn check(&self, net: &EventNetwork) -> Result<(), NetworkError> {
        for (node, layers) in &self.entries {
            net.node_index(node)
                .ok_or_else(|| NetworkError::UnknownNode(node.clone()))?;
            for (&e, vec) in layers {
                if e >= net.num_layers() {
                    return Err(NetworkError::UnknownNode(format!("{node} in layer {e}")));
                }
                for c in vec.keys() {
                    net.schema.require(c)?;
                }
            }
        }
        for (node, c) in &self.unlimited {
            net.node_index(node)
                .ok_or_else(|| NetworkError::UnknownNode(node.clone()))?;
            net.schema.require(c)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CommoditySchema {
        CommoditySchema::new(vec![
            Commodity {
                name: "truck".into(),
                kind: CommodityKind::Binary,
                unit_mass: 1000.0,
            },
            Commodity {
                name: "fuel".into(),
                kind: CommodityKind::Continuous,
                unit_mass: 1.0,
            },
        ])
        .unwrap()
    }

    fn arc(o: &str, d: &str, v: &str) -> ArcSpec {
        ArcSpec {
            origin: o.into(),
            destination: d.into(),
            vehicle: v.into(),
            propulsion: PropulsionSpec::Vehicle {
                propellant: "fuel".into(),
            },
            mass: Some(MassModel::Identity),
            tof: Some(TofModel::Constant { days: 1.0 }),
            allowed: vec!["truck".into(), "fuel".into()],
            cost: vec![],
        }
    }

    fn nodes() -> Vec<String> {
        vec!["A".into(), "B".into()]
    }

    #[test]
    fn counts_instances_and_holdovers() {
        let one = build_event_network(
            &nodes(),
            &[LayerSpec {
                tag: LayerTag::CargoForward,
                arcs: vec![arc("A", "B", "truck")],
            }],
            schema(),
        )
        .unwrap();
        assert_eq!((one.transport.len(), one.holdover.len()), (1, 0));
        let layer = LayerSpec {
            tag: LayerTag::CargoForward,
            arcs: vec![arc("A", "B", "truck")],
        };
        let two = build_event_network(&nodes(), &[layer.clone(), layer], schema()).unwrap();
        assert_eq!(two.nodes.len() * two.num_layers(), 4);
        assert_eq!((two.transport.len(), two.holdover.len()), (2, 2));
    }

    #[test]
    fn rejects_cycles_and_unknowns() {
        let cyc = LayerSpec {
            tag: LayerTag::CargoForward,
            arcs: vec![arc("A", "B", "truck"), arc("B", "A", "truck")],
        };
        assert_eq!(
            build_event_network(&nodes(), &[cyc], schema()),
            Err(NetworkError::CyclicLayer(0))
        );
        let bad_node = LayerSpec {
            tag: LayerTag::CargoForward,
            arcs: vec![arc("A", "C", "truck")],
        };
        assert_eq!(
            build_event_network(&nodes(), &[bad_node], schema()),
            Err(NetworkError::UnknownNode("C".into()))
        );
        let bad_vehicle = LayerSpec {
            tag: LayerTag::CargoForward,
            arcs: vec![arc("A", "B", "fuel")],
        };
        assert_eq!(
            build_event_network(&nodes(), &[bad_vehicle], schema()),
            Err(NetworkError::UnknownVehicle("fuel".into()))
        );
    }

    #[test]
    fn multigraph_report() {
        let layer = LayerSpec {
            tag: LayerTag::CrewForward,
            arcs: vec![arc("A", "B", "truck"), arc("A", "B", "truck")],
        };
        let net = build_event_network(&nodes(), &[layer], schema()).unwrap();
        let issues = validate_multigraph(&net, None);
        assert_eq!(issues.len(), 1);
        assert!(matches!(issues[0], MultigraphIssue::DuplicateArc { .. }));
        let policy = VehiclePolicy {
            cargo_only: ["truck".to_string()].into(),
            crew_only: BTreeSet::new(),
        };
        let issues = validate_multigraph(&net, Some(&policy));
        assert_eq!(
            issues
                .iter()
                .filter(|i| matches!(i, MultigraphIssue::VehicleNotAllowedInLayer { .. }))
                .count(),
            2
        );
    }

    #[test]
    fn json_round_trip() {
        let layer = LayerSpec {
            tag: LayerTag::CargoForward,
            arcs: vec![arc("A", "B", "truck")],
        };
        let net = build_event_network(&nodes(), &[layer.clone(), layer], schema()).unwrap();
        let back = EventNetwork::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.schema.index_of("fuel"), Some(1));
    }
}
