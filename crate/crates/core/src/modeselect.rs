//! Enumeration and ranking of characteristic-mode sets.
//!
//! A mode set is admissible when it
//! 1. has at least three modes,
//! 2. can give every mode its own independent port (distinct symmetry
//!    classes across non-degenerate modes and degeneracy groups),
//! 3. contains degeneracy groups only as complete sets, and
//! 4. keeps every eigenvalue magnitude strictly below the threshold.
//!
//! Characteristic modes themselves are never computed here; eigenvalues,
//! symmetry labels and far-fields come from a structure file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{mix_seed, run_monte_carlo, MonteCarloConfig};
use crate::geometry::DoaGrid;
use crate::patterns::{load_pattern_file, parse_analytic_pattern, FarFieldPattern, PortSet};

pub const DEFAULT_MAX_EIGENVALUE: f64 = 3.0;
pub const MIN_SET_SIZE: usize = 3;

/// Relative tolerance for equal eigenvalues inside a degeneracy group.
const DEGENERACY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ModeRecord {
    pub id: u32,
    pub eigenvalue: f64,
    pub degeneracy_group: Option<String>,
    pub symmetry_class: String,
    pub pattern: FarFieldPattern,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureRecord {
    pub name: String,
    pub diameter_m: f64,
    pub height_to_width: f64,
    pub frequency_mhz: f64,
    modes: Vec<ModeRecord>,
}

impl StructureRecord {
    pub fn new(
        name: impl Into<String>,
        diameter_m: f64,
        height_to_width: f64,
        frequency_mhz: f64,
        mut modes: Vec<ModeRecord>,
    ) -> Result<Self> {
        if !(diameter_m > 0.0) || !(height_to_width > 0.0) {
            return Err(Error::InvalidParameter(
                "structure diameter and height/width ratio must be positive".into(),
            ));
        }
        if modes.is_empty() {
            return Err(Error::Empty("structure has no modes"));
        }
        modes.sort_by_key(|m| m.id);
        if modes.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::Malformed("duplicate mode id".into()));
        }
        if let Some(m) = modes.iter().find(|m| !m.eigenvalue.is_finite()) {
            return Err(Error::Malformed(format!(
                "mode {} has a non-finite eigenvalue",
                m.id
            )));
        }
        let mut groups: BTreeMap<&str, f64> = BTreeMap::new();
        for m in &modes {
            let Some(g) = m.degeneracy_group.as_deref() else {
                continue;
            };
            match groups.get(g) {
                Some(&lambda) => {
                    let scale = lambda.abs().max(m.eigenvalue.abs()).max(f64::MIN_POSITIVE);
                    if (lambda - m.eigenvalue).abs() > DEGENERACY_TOL * scale {
                        return Err(Error::Malformed(format!(
                            "degeneracy group '{g}' mixes eigenvalues {lambda} and {}",
                            m.eigenvalue
                        )));
                    }
                }
                None => {
                    groups.insert(g, m.eigenvalue);
                }
            }
        }
        Ok(Self {
            name: name.into(),
            diameter_m,
            height_to_width,
            frequency_mhz,
            modes,
        })
    }

    /// Modes sorted by id.
    pub fn modes(&self) -> &[ModeRecord] {
        &self.modes
    }

    pub fn mode(&self, id: u32) -> Option<&ModeRecord> {
        self.modes.iter().find(|m| m.id == id)
    }

    fn group_members(&self, group: &str) -> Vec<u32> {
        self.modes
            .iter()
            .filter(|m| m.degeneracy_group.as_deref() == Some(group))
            .map(|m| m.id)
            .collect()
    }
}

/// Outcome of each admissibility criterion for one candidate set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CriteriaFlags {
    pub min_modes: bool,
    pub unique_ports: bool,
    pub complete_degeneracy: bool,
    pub eigenvalue_bound: bool,
}

impl CriteriaFlags {
    pub fn admissible(&self) -> bool {
        self.min_modes && self.unique_ports && self.complete_degeneracy && self.eigenvalue_bound
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModeSet {
    /// Sorted, distinct mode ids.
    pub members: Vec<u32>,
    pub flags: CriteriaFlags,
}

impl ModeSet {
    /// Members joined with `+`, e.g. `1+2+3`.
    pub fn label(&self) -> String {
        self.members
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Key identifying the port "unit" a mode belongs to: its degeneracy group,
/// or the mode itself when it is non-degenerate.
fn unit_key(m: &ModeRecord) -> String {
    match &m.degeneracy_group {
        Some(g) => format!("g:{g}"),
        None => format!("m:{}", m.id),
    }
}

/// Evaluates every criterion for `members` independently.
pub fn check_set(s: &StructureRecord, members: &[u32], max_abs_eigenvalue: f64) -> Result<ModeSet> {
    let ids: BTreeSet<u32> = members.iter().copied().collect();
    if ids.len() != members.len() {
        return Err(Error::InvalidParameter(
            "mode set lists a mode twice".into(),
        ));
    }
    let modes = ids
        .iter()
        .map(|&id| {
            s.mode(id)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown mode id {id}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let min_modes = modes.len() >= MIN_SET_SIZE;
    let eigenvalue_bound = modes
        .iter()
        .all(|m| m.eigenvalue.abs() < max_abs_eigenvalue);
    let complete_degeneracy = modes.iter().all(|m| match &m.degeneracy_group {
        Some(g) => s.group_members(g).iter().all(|id| ids.contains(id)),
        None => true,
    });
    // a symmetry class may only be used by one unit
    let mut class_owner: HashMap<&str, String> = HashMap::new();
    let mut unique_ports = true;
    for m in &modes {
        let unit = unit_key(m);
        match class_owner.get(m.symmetry_class.as_str()) {
            Some(owner) if *owner != unit => unique_ports = false,
            Some(_) => {}
            None => {
                class_owner.insert(&m.symmetry_class, unit);
            }
        }
    }

    Ok(ModeSet {
        members: ids.into_iter().collect(),
        flags: CriteriaFlags {
            min_modes,
            unique_ports,
            complete_degeneracy,
            eigenvalue_bound,
        },
    })
}

/// Every admissible mode set, ordered by size and then member ids.
pub fn enumerate_admissible_sets(s: &StructureRecord, max_abs_eigenvalue: f64) -> Vec<ModeSet> {
    // units: complete degeneracy groups and single non-degenerate modes
    let mut units: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for m in s.modes() {
        units.entry(unit_key(m)).or_default().push(m.id);
    }
    let eligible: Vec<Vec<u32>> = units
        .into_values()
        .filter(|ids| {
            ids.iter().all(|id| {
                s.mode(*id)
                    .is_some_and(|m| m.eigenvalue.abs() < max_abs_eigenvalue)
            })
        })
        .collect();
    assert!(
        eligible.len() < 64,
        "too many eligible mode groups to enumerate"
    );

    let mut sets = Vec::new();
    for mask in 1u64..(1u64 << eligible.len()) {
        let members: Vec<u32> = eligible
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .flat_map(|(_, ids)| ids.iter().copied())
            .collect();
        if members.len() < MIN_SET_SIZE {
            continue;
        }
        let set = check_set(s, &members, max_abs_eigenvalue).expect("members come from s");
        if set.flags.admissible() {
            sets.push(set);
        }
    }
    sets.sort_by(|a, b| {
        a.members
            .len()
            .cmp(&b.members.len())
            .then_with(|| a.members.cmp(&b.members))
    });
    sets
}

/// Ports for a mode set: one port per member mode, ordered by mode id.
pub fn ports_for_set(s: &StructureRecord, set: &ModeSet) -> Result<PortSet> {
    let mut patterns = Vec::with_capacity(set.members.len());
    let mut labels = Vec::with_capacity(set.members.len());
    for id in &set.members {
        let m = s
            .mode(*id)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mode id {id}")))?;
        patterns.push(m.pattern.clone());
        labels.push(format!("mode{id}"));
    }
    PortSet::new(patterns, labels)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedSet {
    pub structure: String,
    pub set: ModeSet,
    pub seed: u64,
    pub rmse_gc_deg: f64,
    pub rmse_az_deg: f64,
    pub rmse_el_deg: f64,
}

/// Seed of a set, derived from the master seed and the member ids only.
pub fn set_seed(master_seed: u64, set: &ModeSet) -> u64 {
    set.members.iter().fold(
        mix_seed(master_seed, set.members.len() as u64),
        |acc, id| mix_seed(acc, u64::from(*id)),
    )
}

/// Runs the Monte-Carlo evaluation for each set, treating member modes as
/// ports. `config.master_seed` is replaced by the per-set seed.
pub fn rank_sets(
    s: &StructureRecord,
    sets: &[ModeSet],
    true_grid: &DoaGrid,
    candidate_grid: &DoaGrid,
    config: &MonteCarloConfig,
) -> Result<Vec<RankedSet>> {
    let mut ranked = Vec::with_capacity(sets.len());
    for set in sets {
        if !set.flags.admissible() {
            return Err(Error::InvalidParameter(format!(
                "mode set {} is not admissible",
                set.label()
            )));
        }
        let ports = ports_for_set(s, set)?;
        let seed = set_seed(config.master_seed, set);
        let mut cfg = config.clone();
        cfg.master_seed = seed;
        cfg.keep_trials = false;
        let report = run_monte_carlo(&ports, true_grid, candidate_grid, &cfg)?;
        ranked.push(RankedSet {
            structure: s.name.clone(),
            set: set.clone(),
            seed,
            rmse_gc_deg: report.aggregate.rmse_gc,
            rmse_az_deg: report.aggregate.rmse_az,
            rmse_el_deg: report.aggregate.rmse_el,
        });
    }
    sort_ranking(&mut ranked);
    Ok(ranked)
}

/// Ascending combined RMSE, then fewer modes, then structure name and ids.
pub fn sort_ranking(ranked: &mut [RankedSet]) {
    ranked.sort_by(|a, b| {
        a.rmse_gc_deg
            .total_cmp(&b.rmse_gc_deg)
            .then_with(|| a.set.members.len().cmp(&b.set.members.len()))
            .then_with(|| a.set.members.cmp(&b.set.members))
            .then_with(|| a.structure.cmp(&b.structure))
    });
}

/// `structure,set_members,rmse_gc_deg,rmse_az_deg,rmse_el_deg`
pub fn write_ranking_csv<W: Write>(
    mut w: W,
    ranked: &[RankedSet],
    comments: &[String],
) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}").map_err(|e| Error::io("<ranking csv>", e))?;
    }
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "structure",
        "set_members",
        "rmse_gc_deg",
        "rmse_az_deg",
        "rmse_el_deg",
    ])?;
    for r in ranked {
        w.write_record(&[
            r.structure.clone(),
            r.set.label(),
            r.rmse_gc_deg.to_string(),
            r.rmse_az_deg.to_string(),
            r.rmse_el_deg.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<ranking csv>", e))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureFile {
    name: String,
    diameter_m: f64,
    height_to_width: f64,
    frequency_mhz: f64,
    modes: Vec<ModeEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeEntry {
    id: u32,
    eigenvalue: f64,
    #[serde(default)]
    degeneracy_group: Option<String>,
    symmetry_class: String,
    #[serde(default)]
    pattern_file: Option<PathBuf>,
    #[serde(default)]
    pattern_port: Option<i64>,
    /// Analytic stand-in instead of a pattern file, e.g. `monopole`.
    #[serde(default)]
    pattern: Option<String>,
}

/// Parses a structure JSON document. Pattern files are resolved against `base_dir`.
pub fn parse_structure(json: &str, base_dir: &Path) -> Result<StructureRecord> {
    let file: StructureFile = serde_json::from_str(json)?;
    let mut cache: HashMap<PathBuf, PortSet> = HashMap::new();
    let mut modes = Vec::with_capacity(file.modes.len());
    for entry in file.modes {
        let mut pattern = match (&entry.pattern, &entry.pattern_file) {
            (Some(spec), None) => parse_analytic_pattern(spec)?,
            (None, Some(rel)) => {
                let path = base_dir.join(rel);
                if !cache.contains_key(&path) {
                    let ports = load_pattern_file(&path, None)?;
                    cache.insert(path.clone(), ports);
                }
                let ports = &cache[&path];
                let port = entry.pattern_port.ok_or_else(|| {
                    Error::Malformed(format!(
                        "mode {} names a pattern_file but no pattern_port",
                        entry.id
                    ))
                })?;
                let label = format!("port{port}");
                let idx = ports
                    .labels()
                    .iter()
                    .position(|l| *l == label)
                    .ok_or_else(|| {
                        Error::Malformed(format!("port {port} not found in {}", path.display()))
                    })?;
                ports.patterns()[idx].clone()
            }
            _ => {
                return Err(Error::Malformed(format!(
                    "mode {} needs exactly one of pattern_file or pattern",
                    entry.id
                )))
            }
        };
        pattern.frequency_mhz = Some(file.frequency_mhz);
        modes.push(ModeRecord {
            id: entry.id,
            eigenvalue: entry.eigenvalue,
            degeneracy_group: entry.degeneracy_group,
            symmetry_class: entry.symmetry_class,
            pattern,
        });
    }
    StructureRecord::new(
        file.name,
        file.diameter_m,
        file.height_to_width,
        file.frequency_mhz,
        modes,
    )
}

pub fn load_structure_file(path: &Path) -> Result<StructureRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_structure(&text, path.parent().unwrap_or_else(|| Path::new(".")))
}
