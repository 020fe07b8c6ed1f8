//! Trajectory performance surrogates: rocket-equation ratios for impulsive
//! legs, affine fits for low-thrust legs, piecewise-linear curves, and the
//! fit tables that ship with the crate.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Standard gravity in m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Environment variable that points the loader at a directory of fit tables
/// instead of the embedded copies.
pub const DATA_DIR_ENV: &str = "SPACELOG_DATA_DIR";

#[derive(Debug, Error, PartialEq)]
pub enum TrajError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("breakpoints must be strictly increasing, finite, at least two, and match the value count")]
    BadBreakpoints,
    #[error("schema error in {file} line {line}: {message}")]
    Schema {
        file: String,
        line: usize,
        message: String,
    },
    #[error("missing table row: {0}")]
    MissingRow(String),
    #[error("checksum mismatch for {0}")]
    Checksum(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Final-to-initial mass ratio `exp(-dv / (g * isp))` with `dv` in km/s.
pub fn rocket_mass_ratio(dv_km_s: f64, isp_s: f64) -> Result<f64, TrajError> {
    rocket_mass_ratio_with(dv_km_s, isp_s, STANDARD_GRAVITY)
}

/// [`rocket_mass_ratio`] with an explicit gravity constant in m/s^2.
pub fn rocket_mass_ratio_with(dv_km_s: f64, isp_s: f64, gravity: f64) -> Result<f64, TrajError> {
    if !(isp_s > 0.0) || !isp_s.is_finite() {
        return Err(TrajError::Domain(format!("Isp must be positive, got {isp_s}")));
    }
    if !(dv_km_s >= 0.0) || !dv_km_s.is_finite() {
        return Err(TrajError::Domain(format!("delta-v must be nonnegative, got {dv_km_s}")));
    }
    if !(gravity > 0.0) || !gravity.is_finite() {
        return Err(TrajError::Domain(format!("gravity must be positive, got {gravity}")));
    }
    Ok((-dv_km_s * 1000.0 / (gravity * isp_s)).exp())
}

/// Time to spiral between circular orbits under constant tangential
/// acceleration, in seconds. Inputs in km/s^2, km^3/s^2 and km.
pub fn tangential_thrust_tof(
    accel_km_s2: f64,
    mu_km3_s2: f64,
    a_initial_km: f64,
    a_final_km: f64,
) -> Result<f64, TrajError> {
    for (name, v) in [
        ("acceleration", accel_km_s2),
        ("mu", mu_km3_s2),
        ("initial radius", a_initial_km),
        ("final radius", a_final_km),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(TrajError::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(((mu_km3_s2 / a_initial_km).sqrt() - (mu_km3_s2 / a_final_km).sqrt()).abs() / accel_km_s2)
}

/// Impulsive leg: constant delta-v and flight time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighThrustModel {
    pub dv_km_s: f64,
    pub isp_s: f64,
    pub tof_days: f64,
}

impl HighThrustModel {
    pub fn new(dv_km_s: f64, isp_s: f64, tof_days: f64) -> Result<Self, TrajError> {
        rocket_mass_ratio(dv_km_s, isp_s)?;
        if !(tof_days >= 0.0) {
            return Err(TrajError::Domain(format!("time of flight must be nonnegative, got {tof_days}")));
        }
        Ok(HighThrustModel {
            dv_km_s,
            isp_s,
            tof_days,
        })
    }

    pub fn mass_ratio(&self) -> f64 {
        self.mass_ratio_with(STANDARD_GRAVITY)
    }

    pub fn mass_ratio_with(&self, gravity: f64) -> f64 {
        (-self.dv_km_s * 1000.0 / (gravity * self.isp_s)).exp()
    }
}

/// Low-thrust leg fitted as `y- = slope * y+ + offset` and
/// `tof = days_per_t * y+ + base_days`, both switched off when the tug is
/// absent. Masses in tonnes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineLowThrustModel {
    pub mass_slope: f64,
    pub mass_offset_t: f64,
    pub days_per_t: f64,
    pub base_days: f64,
}

impl AffineLowThrustModel {
    pub fn sep_final_mass(&self, initial_t: f64, vehicle_present: bool) -> f64 {
        if vehicle_present {
            self.mass_slope * initial_t + self.mass_offset_t
        } else {
            0.0
        }
    }

    pub fn sep_tof(&self, initial_t: f64, vehicle_present: bool) -> f64 {
        if vehicle_present {
            self.days_per_t * initial_t + self.base_days
        } else {
            0.0
        }
    }

    pub fn mass_offset_kg(&self) -> f64 {
        self.mass_offset_t * 1000.0
    }

    pub fn days_per_kg(&self) -> f64 {
        self.days_per_t / 1000.0
    }
}

/// Piecewise-linear curve through `(breakpoints[i], values[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlCurve {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PwlCurve {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, TrajError> {
        check_breakpoints(&breakpoints)?;
        if values.len() != breakpoints.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(TrajError::BadBreakpoints);
        }
        Ok(PwlCurve { breakpoints, values })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Chord interpolation; `None` outside the breakpoint range.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let d = &self.breakpoints;
        if !(x >= d[0] && x <= d[d.len() - 1]) {
            return None;
        }
        let k = d.partition_point(|&b| b < x);
        if k < d.len() && d[k] == x {
            return Some(self.values[k]);
        }
        let (lo, hi) = (k - 1, k);
        let t = (x - d[lo]) / (d[hi] - d[lo]);
        Some(self.values[lo] + t * (self.values[hi] - self.values[lo]))
    }
}

fn check_breakpoints(d: &[f64]) -> Result<(), TrajError> {
    if d.len() < 2 || d.iter().any(|v| !v.is_finite()) || d.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TrajError::BadBreakpoints);
    }
    Ok(())
}

/// Piecewise-linear final mass and flight time over a shared set of
/// initial-mass breakpoints (tonnes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlModel {
    pub final_mass: PwlCurve,
    pub tof: PwlCurve,
}

impl PwlModel {
    pub fn new(breakpoints: Vec<f64>, final_mass: Vec<f64>, tof_days: Vec<f64>) -> Result<Self, TrajError> {
        Ok(PwlModel {
            final_mass: PwlCurve::new(breakpoints.clone(), final_mass)?,
            tof: PwlCurve::new(breakpoints, tof_days)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Propulsion {
    #[serde(rename = "CP")]
    Chemical,
    #[serde(rename = "SEP")]
    Electric,
}

impl fmt::Display for Propulsion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Propulsion::Chemical => "CP",
            Propulsion::Electric => "SEP",
        })
    }
}

/// One tug design and how many units of it the fleet holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub name: String,
    pub propulsion: Propulsion,
    /// 1-based type index within its propulsion family.
    pub family_index: u8,
    pub dry_mass_t: f64,
    pub propellant_capacity_t: f64,
    pub power_kw: Option<f64>,
    pub isp_s: f64,
    pub units: u32,
}

/// Crew-side vehicles: upper stage, command module and lander, plus the
/// droptank structural coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrewVehicles {
    pub upper_stage_isp_s: f64,
    pub upper_stage_epsilon: f64,
    pub csm: CrewVehicle,
    pub lm: CrewVehicle,
    pub droptank_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrewVehicle {
    pub dry_mass_t: f64,
    pub propellant_capacity_t: f64,
    pub isp_s: f64,
}

/// `epsilon / (1 - epsilon)`: structure mass per unit of propellant.
pub fn structure_per_propellant(epsilon: f64) -> f64 {
    epsilon / (1.0 - epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrewStage {
    /// Burn performed by the expendable upper stage.
    UpperStage,
    /// Burn performed by the command module.
    CommandModule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrewDirection {
    Forward,
    Return,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrewLeg {
    pub dv_km_s: f64,
    /// Flight time; injection burns have none of their own.
    pub tof_days: Option<f64>,
    pub direction: CrewDirection,
    pub stage: CrewStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulsiveLeg {
    pub dv_km_s: f64,
    pub tof_days: f64,
}

/// Initial-to-final total mass map of one arc, in kilograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MassModel {
    Identity,
    /// `y- = ratio * y+ + offset_kg * vehicle`.
    Affine { ratio: f64, offset_kg: f64 },
    /// Breakpoints and final masses in kilograms.
    Pwl { curve: PwlCurve },
}

/// Arc flight time in days as a function of initial mass in kilograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TofModel {
    /// `days * vehicle`.
    Constant { days: f64 },
    /// `days_per_kg * y+ + base_days * vehicle`.
    Affine { days_per_kg: f64, base_days: f64 },
    Pwl { curve: PwlCurve },
}

impl TofModel {
    pub fn eval(&self, initial_kg: f64, vehicle_present: bool) -> Option<f64> {
        if !vehicle_present {
            return Some(0.0);
        }
        match self {
            TofModel::Constant { days } => Some(*days),
            TofModel::Affine { days_per_kg, base_days } => Some(days_per_kg * initial_kg + base_days),
            TofModel::Pwl { curve } => curve.eval(initial_kg),
        }
    }
}

impl MassModel {
    pub fn eval(&self, initial_kg: f64, vehicle_present: bool) -> Option<f64> {
        match self {
            MassModel::Identity => Some(initial_kg),
            MassModel::Affine { ratio, offset_kg } => {
                Some(ratio * initial_kg + if vehicle_present { *offset_kg } else { 0.0 })
            }
            MassModel::Pwl { curve } => curve.eval(initial_kg),
        }
    }
}

/// Splits `"A to B"` or `"A to/from B"` into endpoints and whether the row
/// covers both directions.
pub fn parse_arc_label(label: &str) -> Option<(&str, &str, bool)> {
    if let Some((a, b)) = label.split_once(" to/from ") {
        return Some((a.trim(), b.trim(), true));
    }
    let (a, b) = label.split_once(" to ")?;
    Some((a.trim(), b.trim(), false))
}

const TABLE_FILES: [&str; 6] = [
    "tugs.csv",
    "sep_mass_fit.csv",
    "sep_tof_fit.csv",
    "cp_tug_arcs.csv",
    "crew_arcs.csv",
    "crew_vehicles.csv",
];

const CHECKSUM_FILE: &str = "checksums.sha256";

fn embedded(name: &str) -> &'static str {
    match name {
        "tugs.csv" => include_str!("../data/tugs.csv"),
        "sep_mass_fit.csv" => include_str!("../data/sep_mass_fit.csv"),
        "sep_tof_fit.csv" => include_str!("../data/sep_tof_fit.csv"),
        "cp_tug_arcs.csv" => include_str!("../data/cp_tug_arcs.csv"),
        "crew_arcs.csv" => include_str!("../data/crew_arcs.csv"),
        "crew_vehicles.csv" => include_str!("../data/crew_vehicles.csv"),
        CHECKSUM_FILE => include_str!("../data/checksums.sha256"),
        _ => unreachable!("unknown embedded table {name}"),
    }
}

/// Where fit tables were read from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Embedded,
    Directory(PathBuf),
}

/// All surrogate coefficients and vehicle specifications, keyed by arc
/// label as printed in the tables (`"GTO to L1"`, `"L1 to/from LLO"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRegistry {
    pub source: DataSource,
    pub tugs: Vec<VehicleSpec>,
    sep: BTreeMap<(String, u8), AffineLowThrustModel>,
    cp: BTreeMap<String, ImpulsiveLeg>,
    crew: BTreeMap<String, CrewLeg>,
    pub crew_vehicles: CrewVehicles,
}

impl FitRegistry {
    /// Loads from `$SPACELOG_DATA_DIR` when set, else from the embedded copy.
    pub fn load_default() -> Result<Self, TrajError> {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::load_dir(Path::new(&dir)),
            _ => Self::load_embedded(),
        }
    }

    pub fn load_embedded() -> Result<Self, TrajError> {
        let mut files = BTreeMap::new();
        for name in TABLE_FILES.iter().chain([&CHECKSUM_FILE]) {
            files.insert(name.to_string(), embedded(name).to_string());
        }
        Self::from_files(&files, DataSource::Embedded)
    }

    /// Loads every table from `dir`. A `checksums.sha256` file in the
    /// directory, if present, is enforced.
    pub fn load_dir(dir: &Path) -> Result<Self, TrajError> {
        let mut files = BTreeMap::new();
        for name in TABLE_FILES.iter().chain([&CHECKSUM_FILE]) {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(text) => {
                    files.insert(name.to_string(), text);
                }
                Err(e) if *name == CHECKSUM_FILE && e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => {
                    return Err(TrajError::Io {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })
                }
            }
        }
        Self::from_files(&files, DataSource::Directory(dir.to_path_buf()))
    }

    fn from_files(files: &BTreeMap<String, String>, source: DataSource) -> Result<Self, TrajError> {
        if let Some(sums) = files.get(CHECKSUM_FILE) {
            verify_checksums(sums, files)?;
        }
        let text = |n: &str| files.get(n).map(String::as_str).unwrap_or("");
        let tugs = parse_tugs(text("tugs.csv"))?;
        let mut sep = BTreeMap::new();
        for r in records("sep_mass_fit.csv", text("sep_mass_fit.csv"), 4)? {
            let ty = r.int(1)?;
            let key = (r.text(0)?, ty);
            let slope = r.num(2)?;
            if !(slope > 0.0 && slope < 1.0) {
                return Err(r.err(format!("mass slope {slope} outside (0, 1)")));
            }
            let m = AffineLowThrustModel {
                mass_slope: slope,
                mass_offset_t: r.num(3)?,
                days_per_t: f64::NAN,
                base_days: f64::NAN,
            };
            if sep.insert(key, m).is_some() {
                return Err(r.err("duplicate row".into()));
            }
        }
        for r in records("sep_tof_fit.csv", text("sep_tof_fit.csv"), 4)? {
            let ty = r.int(1)?;
            let label = r.text(0)?;
            let entry = sep
                .get_mut(&(label.clone(), ty))
                .ok_or_else(|| TrajError::MissingRow(format!("sep_mass_fit.csv: {label}, type {ty}")))?;
            entry.days_per_t = r.num(2)?;
            entry.base_days = r.num(3)?;
        }
        if let Some(((label, ty), _)) = sep.iter().find(|(_, m)| m.days_per_t.is_nan()) {
            return Err(TrajError::MissingRow(format!("sep_tof_fit.csv: {label}, type {ty}")));
        }
        let mut cp = BTreeMap::new();
        for r in records("cp_tug_arcs.csv", text("cp_tug_arcs.csv"), 3)? {
            let label = r.text(0)?;
            parse_arc_label(&label).ok_or_else(|| r.err(format!("bad arc label {label}")))?;
            cp.insert(
                label,
                ImpulsiveLeg {
                    dv_km_s: r.nonneg(1)?,
                    tof_days: r.nonneg(2)?,
                },
            );
        }
        let mut crew = BTreeMap::new();
        for r in records("crew_arcs.csv", text("crew_arcs.csv"), 5)? {
            let label = r.text(0)?;
            parse_arc_label(&label).ok_or_else(|| r.err(format!("bad arc label {label}")))?;
            let direction = match r.text(1)?.as_str() {
                "forward" => CrewDirection::Forward,
                "return" => CrewDirection::Return,
                other => return Err(r.err(format!("unknown direction {other}"))),
            };
            let stage = match r.text(4)?.as_str() {
                "US" => CrewStage::UpperStage,
                "CSM" => CrewStage::CommandModule,
                other => return Err(r.err(format!("unknown stage {other}"))),
            };
            let tof_days = if r.fields[3].is_empty() { None } else { Some(r.nonneg(3)?) };
            crew.insert(
                label,
                CrewLeg {
                    dv_km_s: r.nonneg(2)?,
                    tof_days,
                    direction,
                    stage,
                },
            );
        }
        let crew_vehicles = parse_crew_vehicles(text("crew_vehicles.csv"))?;
        let reg = FitRegistry {
            source,
            tugs,
            sep,
            cp,
            crew,
            crew_vehicles,
        };
        reg.check_complete()?;
        Ok(reg)
    }

    fn check_complete(&self) -> Result<(), TrajError> {
        let sep_types: Vec<u8> = self
            .tugs
            .iter()
            .filter(|t| t.propulsion == Propulsion::Electric)
            .map(|t| t.family_index)
            .collect();
        let arcs: Vec<&String> = {
            let mut a: Vec<&String> = self.sep.keys().map(|(l, _)| l).collect();
            a.dedup();
            a
        };
        for ty in &sep_types {
            for arc in &arcs {
                if !self.sep.contains_key(&((*arc).clone(), *ty)) {
                    return Err(TrajError::MissingRow(format!("{arc}, SEP type {ty}")));
                }
            }
        }
        Ok(())
    }

    pub fn sep(&self, arc: &str, sep_type: u8) -> Result<&AffineLowThrustModel, TrajError> {
        self.sep
            .get(&(arc.to_string(), sep_type))
            .ok_or_else(|| TrajError::MissingRow(format!("{arc}, SEP type {sep_type}")))
    }

    /// Chemical tug leg by exact table label.
    pub fn cp(&self, arc: &str) -> Result<&ImpulsiveLeg, TrajError> {
        self.cp.get(arc).ok_or_else(|| TrajError::MissingRow(format!("{arc}, CP")))
    }

    /// Chemical tug leg between two table node names, in either direction.
    pub fn cp_between(&self, from: &str, to: &str) -> Result<&ImpulsiveLeg, TrajError> {
        self.cp
            .iter()
            .find(|(label, _)| match parse_arc_label(label) {
                Some((a, b, true)) => (a == from && b == to) || (a == to && b == from),
                Some((a, b, false)) => a == from && b == to,
                None => false,
            })
            .map(|(_, leg)| leg)
            .ok_or_else(|| TrajError::MissingRow(format!("{from} to {to}, CP")))
    }

    pub fn crew(&self, arc: &str) -> Result<&CrewLeg, TrajError> {
        self.crew.get(arc).ok_or_else(|| TrajError::MissingRow(format!("{arc}, crew")))
    }

    pub fn sep_rows(&self) -> impl Iterator<Item = (&str, u8, &AffineLowThrustModel)> {
        self.sep.iter().map(|((l, t), m)| (l.as_str(), *t, m))
    }

    pub fn cp_rows(&self) -> impl Iterator<Item = (&str, &ImpulsiveLeg)> {
        self.cp.iter().map(|(l, m)| (l.as_str(), m))
    }

    pub fn crew_rows(&self) -> impl Iterator<Item = (&str, &CrewLeg)> {
        self.crew.iter().map(|(l, m)| (l.as_str(), m))
    }
}

fn verify_checksums(sums: &str, files: &BTreeMap<String, String>) -> Result<(), TrajError> {
    for (i, line) in sums.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (hash, name) = line.split_once(char::is_whitespace).ok_or_else(|| TrajError::Schema {
            file: CHECKSUM_FILE.into(),
            line: i + 1,
            message: "expected `<sha256>  <file>`".into(),
        })?;
        let name = name.trim().trim_start_matches('*');
        let Some(content) = files.get(name) else {
            return Err(TrajError::MissingRow(format!("{CHECKSUM_FILE}: {name} not found")));
        };
        let digest = hex::encode(Sha256::digest(content.as_bytes()));
        if !digest.eq_ignore_ascii_case(hash) {
            return Err(TrajError::Checksum(name.to_string()));
        }
    }
    Ok(())
}

struct Record {
    file: &'static str,
    line: usize,
    fields: Vec<String>,
}

impl Record {
    fn err(&self, message: String) -> TrajError {
        TrajError::Schema {
            file: self.file.into(),
            line: self.line,
            message,
        }
    }

    fn text(&self, i: usize) -> Result<String, TrajError> {
        let s = &self.fields[i];
        if s.is_empty() {
            return Err(self.err(format!("column {} is empty", i + 1)));
        }
        Ok(s.clone())
    }

    fn num(&self, i: usize) -> Result<f64, TrajError> {
        let s = &self.fields[i];
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(format!("column {} is not a number: {s:?}", i + 1)))
    }

    fn nonneg(&self, i: usize) -> Result<f64, TrajError> {
        let v = self.num(i)?;
        if v < 0.0 {
            return Err(self.err(format!("column {} must be nonnegative", i + 1)));
        }
        Ok(v)
    }

    fn positive(&self, i: usize) -> Result<f64, TrajError> {
        let v = self.num(i)?;
        if v <= 0.0 {
            return Err(self.err(format!("column {} must be positive", i + 1)));
        }
        Ok(v)
    }

    fn int(&self, i: usize) -> Result<u8, TrajError> {
        let s = &self.fields[i];
        s.parse::<u8>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| self.err(format!("column {} is not a positive integer: {s:?}", i + 1)))
    }
}

fn records(file: &'static str, text: &str, columns: usize) -> Result<Vec<Record>, TrajError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| TrajError::Schema {
        file: file.into(),
        line: 1,
        message: e.to_string(),
    })?;
    if headers.len() != columns {
        return Err(TrajError::Schema {
            file: file.into(),
            line: 1,
            message: format!("expected {columns} columns, found {}", headers.len()),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| TrajError::Schema {
            file: file.into(),
            line: i + 2,
            message: e.to_string(),
        })?;
        out.push(Record {
            file,
            line: i + 2,
            fields: rec.iter().map(str::to_string).collect(),
        });
    }
    if out.is_empty() {
        return Err(TrajError::MissingRow(format!("{file} has no rows")));
    }
    Ok(out)
}

fn parse_tugs(text: &str) -> Result<Vec<VehicleSpec>, TrajError> {
    let mut tugs = Vec::new();
    for r in records("tugs.csv", text, 7)? {
        let propulsion = match r.text(0)?.as_str() {
            "CP" => Propulsion::Chemical,
            "SEP" => Propulsion::Electric,
            other => return Err(r.err(format!("unknown propulsion {other}"))),
        };
        let family_index = r.int(1)?;
        let power_kw = match propulsion {
            Propulsion::Electric => Some(r.positive(4)?),
            Propulsion::Chemical if r.fields[4].is_empty() => None,
            Propulsion::Chemical => return Err(r.err("chemical tugs carry no power rating".into())),
        };
        let units: u32 = r.fields[6]
            .parse()
            .ok()
            .filter(|&u| u > 0)
            .ok_or_else(|| r.err("unit count must be a positive integer".into()))?;
        tugs.push(VehicleSpec {
            name: format!("{propulsion} type {family_index}"),
            propulsion,
            family_index,
            dry_mass_t: r.positive(2)?,
            propellant_capacity_t: r.positive(3)?,
            power_kw,
            isp_s: r.positive(5)?,
            units,
        });
    }
    Ok(tugs)
}

fn parse_crew_vehicles(text: &str) -> Result<CrewVehicles, TrajError> {
    let mut us = None;
    let mut csm = None;
    let mut lm = None;
    let mut droptank_eps = None;
    for r in records("crew_vehicles.csv", text, 5)? {
        let eps = r.num(4)?;
        if !(0.0..1.0).contains(&eps) {
            return Err(r.err(format!("structural coefficient {eps} outside [0, 1)")));
        }
        match r.text(0)?.as_str() {
            "US" => us = Some((r.positive(3)?, eps)),
            name @ ("CSM" | "LM") => {
                let v = CrewVehicle {
                    dry_mass_t: r.positive(1)?,
                    propellant_capacity_t: r.positive(2)?,
                    isp_s: r.positive(3)?,
                };
                // Droptanks share the crew vehicles' structural coefficient.
                droptank_eps = Some(eps);
                if name == "CSM" {
                    csm = Some(v);
                } else {
                    lm = Some(v);
                }
            }
            other => return Err(r.err(format!("unknown crew vehicle {other}"))),
        }
    }
    let missing = |n: &str| TrajError::MissingRow(format!("crew_vehicles.csv: {n}"));
    let (upper_stage_isp_s, upper_stage_epsilon) = us.ok_or_else(|| missing("US"))?;
    Ok(CrewVehicles {
        upper_stage_isp_s,
        upper_stage_epsilon,
        csm: csm.ok_or_else(|| missing("CSM"))?,
        lm: lm.ok_or_else(|| missing("LM"))?,
        droptank_epsilon: droptank_eps.unwrap_or(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rocket_ratio_examples() {
        assert_eq!(rocket_mass_ratio(0.0, 450.0).unwrap(), 1.0);
        assert!((rocket_mass_ratio(3.306, 421.0).unwrap() - 0.4490).abs() < 1e-4);
        assert!((rocket_mass_ratio(3.375, 450.0).unwrap() - 0.4654).abs() < 1e-4);
        assert!(matches!(rocket_mass_ratio(1.0, 0.0), Err(TrajError::Domain(_))));
        assert!(matches!(rocket_mass_ratio(-1.0, 300.0), Err(TrajError::Domain(_))));
    }

    #[test]
    fn tangential_spiral_examples() {
        let t = tangential_thrust_tof(1e-6, 398600.0, 7000.0, 42164.0).unwrap();
        assert!((t / 4.4714e6 - 1.0).abs() < 1e-4, "{t}");
        assert_eq!(tangential_thrust_tof(1e-6, 398600.0, 7000.0, 7000.0).unwrap(), 0.0);
        let half = tangential_thrust_tof(0.5e-6, 398600.0, 7000.0, 42164.0).unwrap();
        assert!((half / t - 2.0).abs() < 1e-12);
        assert!(tangential_thrust_tof(0.0, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn pwl_curve_interpolates_and_rejects_outside() {
        let c = PwlCurve::new(vec![0.0, 2.0, 4.0], vec![0.0, 4.0, 16.0]).unwrap();
        assert_eq!(c.eval(3.0), Some(10.0));
        assert_eq!(c.eval(2.0), Some(4.0));
        assert_eq!(c.eval(4.0), Some(16.0));
        assert_eq!(c.eval(4.5), None);
        assert_eq!(PwlCurve::new(vec![0.0], vec![1.0]), Err(TrajError::BadBreakpoints));
        assert_eq!(PwlCurve::new(vec![0.0, 0.0], vec![1.0, 2.0]), Err(TrajError::BadBreakpoints));
    }

    #[test]
    fn arc_labels() {
        assert_eq!(parse_arc_label("GTO to L1"), Some(("GTO", "L1", false)));
        assert_eq!(parse_arc_label("L1 to/from LLO"), Some(("L1", "LLO", true)));
        assert_eq!(parse_arc_label("LLO"), None);
    }

    #[test]
    fn embedded_tables_load() {
        let reg = FitRegistry::load_embedded().unwrap();
        assert_eq!(reg.tugs.iter().map(|t| t.units).sum::<u32>(), 12);
        assert_eq!(reg.sep_rows().count(), 24);
        assert_eq!(reg.sep("L2 to GTO", 1).unwrap().mass_offset_t, -0.2571);
        assert_eq!(reg.cp("L1 to/from LLO").unwrap().tof_days, 28.0);
        assert_eq!(reg.cp_between("LLO", "L1").unwrap().tof_days, 28.0);
        let leg = reg.crew("LLO to ES").unwrap();
        assert_eq!((leg.dv_km_s, leg.tof_days), (1.091, Some(3.0)));
        assert_eq!(reg.crew_vehicles.csm.dry_mass_t, 12.2);
        assert_eq!(reg.crew_vehicles.upper_stage_epsilon, 0.1138);
    }

    #[test]
    fn tampered_table_fails_checksum() {
        let mut files = BTreeMap::new();
        for name in TABLE_FILES.iter().chain([&CHECKSUM_FILE]) {
            files.insert(name.to_string(), embedded(name).to_string());
        }
        files.get_mut("tugs.csv").unwrap().push_str("CP,4,1,1,,300,1\n");
        assert_eq!(
            FitRegistry::from_files(&files, DataSource::Embedded),
            Err(TrajError::Checksum("tugs.csv".into()))
        );
    }
}
