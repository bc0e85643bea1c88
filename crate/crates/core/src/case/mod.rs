//! Network case ingestion, validation and normalization.
//!
//! A case arrives as a TOML document (see the embedded examples under
//! `data/`) holding buses, lines, DER placements, daily profiles and
//! per-mode voltage bounds in physical units. [`to_per_unit`] converts it to
//! the per-unit system every downstream module works in, and [`incidence`]
//! precomputes the line-bus incidence structure used by the power-balance
//! rows.

use serde::Deserialize;
use thiserror::Error;

use crate::radiality::UnionFind;

/// Number of scheduling hours; the time grid is fixed at 24 x 1 h so MW and
/// MWh interchange one-to-one in the storage dynamics.
pub const HOURS: usize = 24;

// ---------------------------------------------------------------------------
// Domain types (physical units)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Load,
}

#[derive(Debug, Clone)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// Peak active load demand, MW.
    pub p_load_peak: f64,
    /// Peak reactive load demand, MVar.
    pub q_load_peak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Main,
    Tie,
}

#[derive(Debug, Clone)]
pub struct Line {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub i_max_amp: f64,
    pub kind: LineKind,
    pub switchable: bool,
}

#[derive(Debug, Clone)]
pub struct WindUnit {
    pub bus: u32,
    pub p_rated_mw: f64,
    pub v_cut_in: f64,
    pub v_rated: f64,
    pub v_cut_out: f64,
}

#[derive(Debug, Clone)]
pub struct EssUnit {
    pub bus: u32,
    pub soc_max_mwh: f64,
    pub p_max_mw: f64,
    pub soc_initial_mwh: f64,
    pub eff_charge: f64,
    pub eff_discharge: f64,
}

#[derive(Debug, Clone)]
pub struct SyncDg {
    pub bus: u32,
    pub s_max_mva: f64,
    pub pf_normal: f64,
    pub pf_emergency: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DerSpec {
    pub wind_units: Vec<WindUnit>,
    pub ess_units: Vec<EssUnit>,
    pub sync_dgs: Vec<SyncDg>,
}

#[derive(Debug, Clone)]
pub struct Profiles {
    /// Hourly load factor, per unit of peak load, in (0, 1].
    pub load_factor: [f64; HOURS],
    /// Hourly wind speed, m/s.
    pub wind_speed: [f64; HOURS],
}

#[derive(Debug, Clone, Copy)]
pub struct VoltageBounds {
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SubstationLimits {
    pub p_max_mw: f64,
    pub q_max_mvar: f64,
}

/// A validated problem instance in physical units.
#[derive(Debug, Clone)]
pub struct NetworkCase {
    pub format_version: u32,
    pub base_kv: f64,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub der: DerSpec,
    pub profiles: Profiles,
    pub bounds_normal: VoltageBounds,
    pub bounds_emergency: VoltageBounds,
    pub substation: SubstationLimits,
}

impl NetworkCase {
    pub fn total_peak_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load_peak).sum()
    }

    pub fn total_peak_load_mvar(&self) -> f64 {
        self.buses.iter().map(|b| b.q_load_peak).sum()
    }

    /// Total daily load energy in MWh: sum_t lambda_t * sum_i P_i.
    pub fn total_load_energy_mwh(&self) -> f64 {
        let peak = self.total_peak_load_mw();
        self.profiles.load_factor.iter().map(|l| l * peak).sum()
    }
}

// ---------------------------------------------------------------------------
// Errors and validation
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("case schema error: {0}")]
    Schema(String),
    #[error("case violates invariants:\n{0}")]
    Invalid(ValidationReport),
    #[error("unknown built-in case name `{0}`")]
    UnknownBuiltin(String),
    #[error("invalid base quantities: base_kv={base_kv}, base_mva={base_mva}")]
    BadBase { base_kv: f64, base_mva: f64 },
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn push(&mut self, code: &'static str, message: String) {
        self.violations.push(Violation { code, message });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.violations {
            writeln!(f, "[{}] {}", v.code, v.message)?;
        }
        Ok(())
    }
}

/// Check every case invariant and report all violations with their location.
/// An empty report means the case is valid.
pub fn validate_case(case: &NetworkCase) -> ValidationReport {
    let mut rep = ValidationReport::default();

    if case.format_version != 1 {
        rep.push(
            "format-version",
            format!("unsupported format_version {}", case.format_version),
        );
    }
    if !(case.base_kv > 0.0) || !(case.base_mva > 0.0) {
        rep.push(
            "base",
            format!(
                "base quantities must be positive: kv={}, mva={}",
                case.base_kv, case.base_mva
            ),
        );
    }

    // buses
    let mut ids = std::collections::BTreeSet::new();
    let mut slack_count = 0usize;
    for b in &case.buses {
        if !ids.insert(b.id) {
            rep.push("duplicate-bus-id", format!("bus id {} repeats", b.id));
        }
        if b.kind == BusKind::Slack {
            slack_count += 1;
            if b.p_load_peak != 0.0 || b.q_load_peak != 0.0 {
                rep.push(
                    "slack-load",
                    format!("slack bus {} must carry zero load", b.id),
                );
            }
        }
        if b.p_load_peak < 0.0 || b.q_load_peak < 0.0 {
            rep.push(
                "negative-load",
                format!("bus {} has negative load", b.id),
            );
        }
    }
    if slack_count != 1 {
        rep.push(
            "slack-count",
            format!("exactly one slack bus required, found {slack_count}"),
        );
    }

    // lines
    let mut line_ids = std::collections::BTreeSet::new();
    let mut pairs = std::collections::BTreeSet::new();
    for l in &case.lines {
        if !line_ids.insert(l.id) {
            rep.push("duplicate-line-id", format!("line id {} repeats", l.id));
        }
        if l.from_bus == l.to_bus {
            rep.push(
                "line-endpoints",
                format!("line {} connects bus {} to itself", l.id, l.from_bus),
            );
        }
        for end in [l.from_bus, l.to_bus] {
            if !ids.contains(&end) {
                rep.push(
                    "line-endpoints",
                    format!("line {} references unknown bus {}", l.id, end),
                );
            }
        }
        let key = (l.from_bus.min(l.to_bus), l.from_bus.max(l.to_bus));
        if !pairs.insert(key) {
            rep.push(
                "duplicate-line-pair",
                format!("line {} duplicates pair {:?}", l.id, key),
            );
        }
        if l.r_ohm < 0.0 || l.x_ohm < 0.0 || (l.r_ohm == 0.0 && l.x_ohm == 0.0) {
            rep.push(
                "line-impedance",
                format!(
                    "line {}: r and x must be non-negative and not both zero",
                    l.id
                ),
            );
        }
        if !(l.i_max_amp > 0.0) {
            rep.push(
                "line-capacity",
                format!("line {}: i_max must be positive", l.id),
            );
        }
        if l.kind == LineKind::Tie && !l.switchable {
            rep.push(
                "tie-switchable",
                format!("line {}: a tie line must be switchable", l.id),
            );
        }
    }

    // connectivity over all lines, and a spanning tree must exist
    if !case.buses.is_empty() {
        if case.lines.len() + 1 < case.buses.len() {
            rep.push(
                "line-count",
                format!(
                    "{} lines cannot span {} buses",
                    case.lines.len(),
                    case.buses.len()
                ),
            );
        }
        let index: std::collections::BTreeMap<u32, usize> = case
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect();
        let mut uf = UnionFind::new(case.buses.len());
        for l in &case.lines {
            if let (Some(&a), Some(&b)) = (index.get(&l.from_bus), index.get(&l.to_bus)) {
                uf.union(a, b);
            }
        }
        let root = uf.find(0);
        let stranded: Vec<u32> = case
            .buses
            .iter()
            .enumerate()
            .filter(|(i, _)| uf.find(*i) != root)
            .map(|(_, b)| b.id)
            .collect();
        if !stranded.is_empty() {
            rep.push(
                "connectivity",
                format!("buses {stranded:?} are not connected to the rest of the network"),
            );
        }
    }

    // DER
    for w in &case.der.wind_units {
        if !ids.contains(&w.bus) {
            rep.push("wind-bus", format!("wind unit on unknown bus {}", w.bus));
        }
        if !(w.v_cut_in < w.v_rated && w.v_rated < w.v_cut_out) {
            rep.push(
                "wind-speed-order",
                format!(
                    "wind unit at bus {}: require v_cut_in < v_rated < v_cut_out, got {} / {} / {}",
                    w.bus, w.v_cut_in, w.v_rated, w.v_cut_out
                ),
            );
        }
        if w.p_rated_mw < 0.0 {
            rep.push(
                "wind-rating",
                format!("wind unit at bus {}: negative rating", w.bus),
            );
        }
    }
    for e in &case.der.ess_units {
        if !ids.contains(&e.bus) {
            rep.push("ess-bus", format!("ESS unit on unknown bus {}", e.bus));
        }
        if !(e.soc_initial_mwh > 0.0 && e.soc_initial_mwh <= e.soc_max_mwh) {
            rep.push(
                "ess-soc",
                format!(
                    "ESS at bus {}: require 0 < soc_initial <= soc_max, got {} / {}",
                    e.bus, e.soc_initial_mwh, e.soc_max_mwh
                ),
            );
        }
        if e.p_max_mw < 0.0 || e.p_max_mw > e.soc_max_mwh {
            rep.push(
                "ess-power",
                format!(
                    "ESS at bus {}: p_max must lie in [0, soc_max] for the 1 h step, got {} vs {}",
                    e.bus, e.p_max_mw, e.soc_max_mwh
                ),
            );
        }
        for (name, eff) in [("charge", e.eff_charge), ("discharge", e.eff_discharge)] {
            if !(eff > 0.0 && eff <= 1.0) {
                rep.push(
                    "ess-efficiency",
                    format!("ESS at bus {}: {name} efficiency {eff} outside (0, 1]", e.bus),
                );
            }
        }
    }
    for d in &case.der.sync_dgs {
        if !ids.contains(&d.bus) {
            rep.push("dg-bus", format!("DG unit on unknown bus {}", d.bus));
        }
        if d.s_max_mva < 0.0 {
            rep.push(
                "dg-capacity",
                format!("DG at bus {}: negative capacity", d.bus),
            );
        }
        for (name, pf) in [("normal", d.pf_normal), ("emergency", d.pf_emergency)] {
            if !(pf > 0.0 && pf <= 1.0) {
                rep.push(
                    "dg-power-factor",
                    format!("DG at bus {}: {name} power factor {pf} outside (0, 1]", d.bus),
                );
            }
        }
    }

    // profiles
    for (t, &lf) in case.profiles.load_factor.iter().enumerate() {
        if !lf.is_finite() || !(lf > 0.0 && lf <= 1.0) {
            rep.push(
                "profile-value",
                format!("load factor at hour {} is {lf}, must lie in (0, 1]", t + 1),
            );
        }
    }
    for (t, &v) in case.profiles.wind_speed.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            rep.push(
                "profile-value",
                format!("wind speed at hour {} is {v}, must be finite and >= 0", t + 1),
            );
        }
    }

    // bounds
    for (mode, b) in [
        ("normal", case.bounds_normal),
        ("emergency", case.bounds_emergency),
    ] {
        if !(b.v_min > 0.0 && b.v_min < b.v_max) {
            rep.push(
                "voltage-bounds",
                format!("{mode} voltage bounds must satisfy 0 < v_min < v_max"),
            );
        }
    }
    if case.substation.p_max_mw < 0.0 || case.substation.q_max_mvar < 0.0 {
        rep.push(
            "substation-limits",
            "substation limits must be non-negative".to_string(),
        );
    }

    rep
}

// ---------------------------------------------------------------------------
// Case file schema (TOML)
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    format_version: u32,
    base: BaseSection,
    buses: Vec<BusRow>,
    lines: Vec<LineRow>,
    #[serde(default)]
    wind: Vec<WindRow>,
    #[serde(default)]
    ess: Vec<EssRow>,
    #[serde(default)]
    dg: Vec<DgRow>,
    profiles: ProfilesSection,
    bounds: BoundsSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaseSection {
    kv: f64,
    mva: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRow {
    id: u32,
    #[serde(default = "default_bus_kind")]
    kind: String,
    #[serde(default)]
    p_mw: f64,
    #[serde(default)]
    q_mvar: f64,
}

fn default_bus_kind() -> String {
    "load".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRow {
    id: u32,
    from: u32,
    to: u32,
    r_ohm: f64,
    x_ohm: f64,
    i_max_a: f64,
    #[serde(default = "default_line_kind")]
    kind: String,
    #[serde(default = "default_true")]
    switchable: bool,
}

fn default_line_kind() -> String {
    "main".to_string()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindRow {
    bus: u32,
    p_rated_mw: f64,
    v_cut_in: f64,
    v_rated: f64,
    v_cut_out: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EssRow {
    bus: u32,
    soc_max_mwh: f64,
    p_max_mw: f64,
    soc_initial_mwh: f64,
    #[serde(default = "default_eff")]
    eff_charge: f64,
    #[serde(default = "default_eff")]
    eff_discharge: f64,
}

/// Round-trip efficiency default used when a case omits the ESS
/// efficiencies.
fn default_eff() -> f64 {
    0.95
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DgRow {
    bus: u32,
    s_max_mva: f64,
    pf_normal: f64,
    pf_emergency: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ProfilesSection {
    pub load_factor: Vec<f64>,
    pub wind_speed_ms: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    v_min_normal: f64,
    v_max_normal: f64,
    v_min_emergency: f64,
    v_max_emergency: f64,
    p_sub_max_mw: f64,
    q_sub_max_mvar: f64,
}

fn fixed_24(values: &[f64], what: &str) -> Result<[f64; HOURS], CaseError> {
    if values.len() != HOURS {
        return Err(CaseError::Schema(format!(
            "{what} must have exactly {HOURS} entries, got {}",
            values.len()
        )));
    }
    let mut out = [0.0; HOURS];
    out.copy_from_slice(values);
    Ok(out)
}

pub(crate) fn profiles_from_section(sec: &ProfilesSection) -> Result<Profiles, CaseError> {
    Ok(Profiles {
        load_factor: fixed_24(&sec.load_factor, "profiles.load_factor")?,
        wind_speed: fixed_24(&sec.wind_speed_ms, "profiles.wind_speed_ms")?,
    })
}

impl CaseFile {
    fn into_case(self) -> Result<NetworkCase, CaseError> {
        let buses = self
            .buses
            .into_iter()
            .map(|b| {
                let kind = match b.kind.as_str() {
                    "slack" => BusKind::Slack,
                    "load" => BusKind::Load,
                    other => {
                        return Err(CaseError::Schema(format!(
                            "bus {}: unknown kind `{other}`",
                            b.id
                        )))
                    }
                };
                Ok(Bus {
                    id: b.id,
                    kind,
                    p_load_peak: b.p_mw,
                    q_load_peak: b.q_mvar,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let lines = self
            .lines
            .into_iter()
            .map(|l| {
                let kind = match l.kind.as_str() {
                    "main" => LineKind::Main,
                    "tie" => LineKind::Tie,
                    other => {
                        return Err(CaseError::Schema(format!(
                            "line {}: unknown kind `{other}`",
                            l.id
                        )))
                    }
                };
                Ok(Line {
                    id: l.id,
                    from_bus: l.from,
                    to_bus: l.to,
                    r_ohm: l.r_ohm,
                    x_ohm: l.x_ohm,
                    i_max_amp: l.i_max_a,
                    kind,
                    switchable: l.switchable,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NetworkCase {
            format_version: self.format_version,
            base_kv: self.base.kv,
            base_mva: self.base.mva,
            buses,
            lines,
            der: DerSpec {
                wind_units: self
                    .wind
                    .into_iter()
                    .map(|w| WindUnit {
                        bus: w.bus,
                        p_rated_mw: w.p_rated_mw,
                        v_cut_in: w.v_cut_in,
                        v_rated: w.v_rated,
                        v_cut_out: w.v_cut_out,
                    })
                    .collect(),
                ess_units: self
                    .ess
                    .into_iter()
                    .map(|e| EssUnit {
                        bus: e.bus,
                        soc_max_mwh: e.soc_max_mwh,
                        p_max_mw: e.p_max_mw,
                        soc_initial_mwh: e.soc_initial_mwh,
                        eff_charge: e.eff_charge,
                        eff_discharge: e.eff_discharge,
                    })
                    .collect(),
                sync_dgs: self
                    .dg
                    .into_iter()
                    .map(|d| SyncDg {
                        bus: d.bus,
                        s_max_mva: d.s_max_mva,
                        pf_normal: d.pf_normal,
                        pf_emergency: d.pf_emergency,
                    })
                    .collect(),
            },
            profiles: profiles_from_section(&self.profiles)?,
            bounds_normal: VoltageBounds {
                v_min: self.bounds.v_min_normal,
                v_max: self.bounds.v_max_normal,
            },
            bounds_emergency: VoltageBounds {
                v_min: self.bounds.v_min_emergency,
                v_max: self.bounds.v_max_emergency,
            },
            substation: SubstationLimits {
                p_max_mw: self.bounds.p_sub_max_mw,
                q_max_mvar: self.bounds.q_sub_max_mvar,
            },
        })
    }
}

const BUILTIN_IEEE33: &str = include_str!("data/ieee33.toml");
const BUILTIN_2BUS: &str = include_str!("data/case2bus.toml");
const BUILTIN_6BUS: &str = include_str!("data/case6bus.toml");

/// Resolve a built-in case name to its embedded document, if any.
pub fn builtin_case(name: &str) -> Option<&'static str> {
    match name {
        "ieee33" => Some(BUILTIN_IEEE33),
        "2bus" => Some(BUILTIN_2BUS),
        "6bus" => Some(BUILTIN_6BUS),
        _ => None,
    }
}

/// Parse a case document (or resolve a built-in name) and validate it.
///
/// The input is either one of the built-in names (`ieee33`, `2bus`, `6bus`)
/// or the full text of a case file. Any invariant violation fails the load;
/// use [`validate_case`] to inspect all violations of a parsed case.
pub fn load_case(text: &str) -> Result<NetworkCase, CaseError> {
    let doc = match builtin_case(text.trim()) {
        Some(doc) => doc,
        None => {
            // A bare word that is not a built-in name cannot be a document.
            if !text.contains('=') {
                return Err(CaseError::UnknownBuiltin(text.trim().to_string()));
            }
            text
        }
    };
    let file: CaseFile = toml::from_str(doc).map_err(|e| CaseError::Schema(e.to_string()))?;
    let case = file.into_case()?;
    let report = validate_case(&case);
    if !report.is_empty() {
        return Err(CaseError::Invalid(report));
    }
    Ok(case)
}

/// Parse a standalone profile override document: a TOML file with a single
/// `[profiles]` section in the case-file schema.
pub fn load_profiles(text: &str) -> Result<Profiles, CaseError> {
    #[derive(Deserialize)]
    struct Doc {
        profiles: ProfilesSection,
    }
    let doc: Doc = toml::from_str(text).map_err(|e| CaseError::Schema(e.to_string()))?;
    profiles_from_section(&doc.profiles)
}

// ---------------------------------------------------------------------------
// Wind power curve
// ---------------------------------------------------------------------------

/// Hourly available wind power of one unit, in MW: zero below cut-in, a
/// linear ramp from cut-in to rated speed, rated power up to cut-out, zero
/// at and above cut-out.
pub fn wind_availability(profiles: &Profiles, wt: &WindUnit) -> [f64; HOURS] {
    let mut out = [0.0; HOURS];
    for (t, &v) in profiles.wind_speed.iter().enumerate() {
        out[t] = if v < wt.v_cut_in {
            0.0
        } else if v < wt.v_rated {
            wt.p_rated_mw * (v - wt.v_cut_in) / (wt.v_rated - wt.v_cut_in)
        } else if v < wt.v_cut_out {
            wt.p_rated_mw
        } else {
            0.0
        };
    }
    out
}

// ---------------------------------------------------------------------------
// Per-unit network
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PuLine {
    pub id: u32,
    /// Dense index of the sending-end bus (the reference orientation).
    pub from: usize,
    /// Dense index of the receiving-end bus.
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Current magnitude cap, p.u.
    pub i_max: f64,
    /// Squared-current cap, p.u.^2.
    pub j_cap: f64,
    pub kind: LineKind,
    pub switchable: bool,
}

#[derive(Debug, Clone)]
pub struct PuWind {
    pub bus: usize,
    /// Hourly available power, p.u.
    pub avail: [f64; HOURS],
}

#[derive(Debug, Clone)]
pub struct PuEss {
    pub bus: usize,
    pub soc_max: f64,
    pub p_max: f64,
    pub soc_initial: f64,
    pub eff_charge: f64,
    pub eff_discharge: f64,
}

#[derive(Debug, Clone)]
pub struct PuDg {
    pub bus: usize,
    pub s_max: f64,
    pub pf_normal: f64,
    pub pf_emergency: f64,
}

/// The per-unit view of a [`NetworkCase`]. The original case is retained so
/// reports can be written back in physical units.
#[derive(Debug, Clone)]
pub struct PuNetwork {
    pub case: NetworkCase,
    pub z_base_ohm: f64,
    pub i_base_amp: f64,
    /// Dense bus index -> bus id, sorted ascending by id.
    pub bus_ids: Vec<u32>,
    /// Dense index of the slack bus.
    pub slack: usize,
    /// Peak (P, Q) load per dense bus index, p.u.
    pub loads: Vec<(f64, f64)>,
    pub lines: Vec<PuLine>,
    pub wind: Vec<PuWind>,
    pub ess: Vec<PuEss>,
    pub dg: Vec<PuDg>,
    pub bounds_normal: VoltageBounds,
    pub bounds_emergency: VoltageBounds,
    /// Substation injection caps, p.u.
    pub sub_p_max: f64,
    pub sub_q_max: f64,
}

impl PuNetwork {
    pub fn n_buses(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.bus_ids.binary_search(&id).ok()
    }

    /// Total peak active load, p.u.
    pub fn total_peak_load(&self) -> f64 {
        self.loads.iter().map(|l| l.0).sum()
    }

    pub fn load_factor(&self, hour: usize) -> f64 {
        self.case.profiles.load_factor[hour]
    }
}

/// Convert a validated case to per-unit quantities: impedances are divided
/// by `Z_base = kv^2 / mva`, powers by `mva`, currents by
/// `I_base = mva / (sqrt(3) kv)`.
pub fn to_per_unit(case: &NetworkCase) -> Result<PuNetwork, CaseError> {
    if !(case.base_kv > 0.0) || !(case.base_mva > 0.0) {
        return Err(CaseError::BadBase {
            base_kv: case.base_kv,
            base_mva: case.base_mva,
        });
    }
    let z_base = case.base_kv * case.base_kv / case.base_mva;
    let i_base = 1000.0 * case.base_mva / (3.0f64.sqrt() * case.base_kv);

    let mut bus_ids: Vec<u32> = case.buses.iter().map(|b| b.id).collect();
    bus_ids.sort_unstable();
    let index = |id: u32| -> usize { bus_ids.binary_search(&id).unwrap() };

    let mut loads = vec![(0.0, 0.0); bus_ids.len()];
    let mut slack = 0usize;
    for b in &case.buses {
        let i = index(b.id);
        loads[i] = (b.p_load_peak / case.base_mva, b.q_load_peak / case.base_mva);
        if b.kind == BusKind::Slack {
            slack = i;
        }
    }

    let lines = case
        .lines
        .iter()
        .map(|l| {
            let i_max = l.i_max_amp / i_base;
            PuLine {
                id: l.id,
                from: index(l.from_bus),
                to: index(l.to_bus),
                r: l.r_ohm / z_base,
                x: l.x_ohm / z_base,
                i_max,
                j_cap: i_max * i_max,
                kind: l.kind,
                switchable: l.switchable,
            }
        })
        .collect();

    let wind = case
        .der
        .wind_units
        .iter()
        .map(|w| {
            let mw = wind_availability(&case.profiles, w);
            let mut avail = [0.0; HOURS];
            for (t, &m) in mw.iter().enumerate() {
                avail[t] = m / case.base_mva;
            }
            PuWind {
                bus: index(w.bus),
                avail,
            }
        })
        .collect();

    let ess = case
        .der
        .ess_units
        .iter()
        .map(|e| PuEss {
            bus: index(e.bus),
            soc_max: e.soc_max_mwh / case.base_mva,
            p_max: e.p_max_mw / case.base_mva,
            soc_initial: e.soc_initial_mwh / case.base_mva,
            eff_charge: e.eff_charge,
            eff_discharge: e.eff_discharge,
        })
        .collect();

    let dg = case
        .der
        .sync_dgs
        .iter()
        .map(|d| PuDg {
            bus: index(d.bus),
            s_max: d.s_max_mva / case.base_mva,
            pf_normal: d.pf_normal,
            pf_emergency: d.pf_emergency,
        })
        .collect();

    Ok(PuNetwork {
        z_base_ohm: z_base,
        i_base_amp: i_base,
        bus_ids,
        slack,
        loads,
        lines,
        wind,
        ess,
        dg,
        bounds_normal: case.bounds_normal,
        bounds_emergency: case.bounds_emergency,
        sub_p_max: case.substation.p_max_mw / case.base_mva,
        sub_q_max: case.substation.q_max_mvar / case.base_mva,
        case: case.clone(),
    })
}

// ---------------------------------------------------------------------------
// Incidence structure
// ---------------------------------------------------------------------------

/// Line-bus incidence: `a(l, i)` is +1 at the sending bus of line `l`, -1 at
/// the receiving bus and 0 elsewhere; `b(l, i)` marks the receiving bus with
/// +1, so the I^2 R loss term of each line is charged to its receiving end
/// in the power-balance rows.
#[derive(Debug, Clone)]
pub struct Incidence {
    pub n_lines: usize,
    pub n_buses: usize,
    ends: Vec<(usize, usize)>,
}

impl Incidence {
    pub fn a(&self, line: usize, bus: usize) -> f64 {
        let (from, to) = self.ends[line];
        if bus == from {
            1.0
        } else if bus == to {
            -1.0
        } else {
            0.0
        }
    }

    pub fn b(&self, line: usize, bus: usize) -> f64 {
        if bus == self.ends[line].1 {
            1.0
        } else {
            0.0
        }
    }

    pub fn ends(&self, line: usize) -> (usize, usize) {
        self.ends[line]
    }

    pub fn dense_a(&self) -> Vec<Vec<f64>> {
        (0..self.n_lines)
            .map(|l| (0..self.n_buses).map(|i| self.a(l, i)).collect())
            .collect()
    }

    pub fn dense_b(&self) -> Vec<Vec<f64>> {
        (0..self.n_lines)
            .map(|l| (0..self.n_buses).map(|i| self.b(l, i)).collect())
            .collect()
    }
}

pub fn incidence(net: &PuNetwork) -> Incidence {
    Incidence {
        n_lines: net.n_lines(),
        n_buses: net.n_buses(),
        ends: net.lines.iter().map(|l| (l.from, l.to)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_2BUS: &str = r#"
format_version = 1
base = { kv = 1.0, mva = 1.0 }
buses = [ { id = 1, kind = "slack" }, { id = 2, p_mw = 0.4, q_mvar = 0.2 } ]
lines = [ { id = 1, from = 1, to = 2, r_ohm = 0.05, x_ohm = 0.02, i_max_a = 1000.0 } ]
[profiles]
load_factor = [ 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 ]
wind_speed_ms = [ 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0 ]
[bounds]
v_min_normal = 0.9
v_max_normal = 1.05
v_min_emergency = 0.85
v_max_emergency = 1.1
p_sub_max_mw = 2.0
q_sub_max_mvar = 1.0
"#;

    #[test]
    fn ieee33_totals_match_reference() {
        let case = load_case("ieee33").unwrap();
        assert!((case.total_peak_load_mw() - 3.715).abs() < 1e-12);
        assert!((case.total_peak_load_mvar() - 2.3).abs() < 1e-12);
    }

    #[test]
    fn ieee33_structure() {
        let case = load_case("ieee33").unwrap();
        assert_eq!(case.base_kv, 12.66);
        assert_eq!(case.buses.len(), 33);
        assert_eq!(case.lines.len(), 37);
        let mains = case.lines.iter().filter(|l| l.kind == LineKind::Main).count();
        let ties = case.lines.iter().filter(|l| l.kind == LineKind::Tie).count();
        assert_eq!((mains, ties), (32, 5));
        // all lines switch-capable by default
        assert!(case.lines.iter().all(|l| l.switchable));
    }

    #[test]
    fn ieee33_load_profile_sums_to_calibrated_energy() {
        let case = load_case("ieee33").unwrap();
        let sum: f64 = case.profiles.load_factor.iter().sum();
        assert!((sum - 18.32).abs() < 1e-9, "sum = {sum}");
        assert!((case.total_load_energy_mwh() - 3.715 * 18.32).abs() < 1e-9);
    }

    #[test]
    fn minimal_case_parses() {
        let case = load_case(MINIMAL_2BUS).unwrap();
        assert_eq!(case.lines.len(), 1);
        assert_eq!(case.buses[0].kind, BusKind::Slack);
        assert_eq!(case.buses[0].id, 1);
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert!(matches!(
            load_case("ieee34"),
            Err(CaseError::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn validation_flags_duplicate_slack() {
        let mut case = load_case(MINIMAL_2BUS).unwrap();
        case.buses[1].kind = BusKind::Slack;
        case.buses[1].p_load_peak = 0.0;
        case.buses[1].q_load_peak = 0.0;
        let rep = validate_case(&case);
        assert!(rep.has("slack-count"), "{rep}");
    }

    #[test]
    fn validation_flags_wind_speed_order() {
        let mut case = load_case(MINIMAL_2BUS).unwrap();
        case.der.wind_units.push(WindUnit {
            bus: 2,
            p_rated_mw: 0.1,
            v_cut_in: 12.0,
            v_rated: 12.0,
            v_cut_out: 25.0,
        });
        let rep = validate_case(&case);
        assert!(rep.has("wind-speed-order"), "{rep}");
    }

    #[test]
    fn validation_flags_disconnected_graph() {
        let mut case = load_case(MINIMAL_2BUS).unwrap();
        case.buses.push(Bus {
            id: 3,
            kind: BusKind::Load,
            p_load_peak: 0.1,
            q_load_peak: 0.0,
        });
        // keep line count >= n-1 so only connectivity trips
        case.lines.push(Line {
            id: 2,
            from_bus: 1,
            to_bus: 2,
            r_ohm: 0.1,
            x_ohm: 0.0,
            i_max_amp: 10.0,
            kind: LineKind::Tie,
            switchable: true,
        });
        let rep = validate_case(&case);
        assert!(rep.has("connectivity"), "{rep}");
        assert!(rep.has("duplicate-line-pair"), "{rep}");
    }

    #[test]
    fn embedded_cases_are_valid() {
        for name in ["ieee33", "2bus", "6bus"] {
            let case = load_case(name).unwrap();
            assert!(validate_case(&case).is_empty(), "{name} invalid");
        }
    }

    #[test]
    fn per_unit_definition() {
        let case = load_case(MINIMAL_2BUS).unwrap();
        let net = to_per_unit(&case).unwrap();
        // base 1 kV / 1 MVA: z_base = 1 ohm, so r_pu equals r_ohm
        assert_eq!(net.z_base_ohm, 1.0);
        assert!((net.lines[0].r - 0.05).abs() < 1e-15);
        assert!((net.loads[1].0 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ieee33_z_base() {
        let case = load_case("ieee33").unwrap();
        let net = to_per_unit(&case).unwrap();
        assert!((net.z_base_ohm - 160.2756).abs() < 1e-9);
        assert!((net.total_peak_load() - 3.715).abs() < 1e-12);
    }

    #[test]
    fn per_unit_round_trip() {
        let case = load_case("ieee33").unwrap();
        let net = to_per_unit(&case).unwrap();
        for (l, pu) in case.lines.iter().zip(&net.lines) {
            let back_r = pu.r * net.z_base_ohm;
            let back_x = pu.x * net.z_base_ohm;
            let back_i = pu.i_max * net.i_base_amp;
            assert!((back_r - l.r_ohm).abs() <= 1e-12 * l.r_ohm.max(1.0));
            assert!((back_x - l.x_ohm).abs() <= 1e-12 * l.x_ohm.max(1.0));
            assert!((back_i - l.i_max_amp).abs() <= 1e-12 * l.i_max_amp);
        }
        for b in &case.buses {
            let i = net.bus_index(b.id).unwrap();
            let back_p = net.loads[i].0 * case.base_mva;
            assert!((back_p - b.p_load_peak).abs() <= 1e-12 * b.p_load_peak.max(1.0));
        }
    }

    #[test]
    fn bad_base_is_rejected() {
        let mut case = load_case(MINIMAL_2BUS).unwrap();
        case.base_mva = 0.0;
        assert!(matches!(
            to_per_unit(&case),
            Err(CaseError::BadBase { .. })
        ));
    }

    #[test]
    fn incidence_two_bus() {
        let case = load_case(MINIMAL_2BUS).unwrap();
        let net = to_per_unit(&case).unwrap();
        let inc = incidence(&net);
        assert_eq!(inc.dense_a(), vec![vec![1.0, -1.0]]);
        assert_eq!(inc.dense_b(), vec![vec![0.0, 1.0]]);
    }

    #[test]
    fn incidence_structure_ieee33() {
        let case = load_case("ieee33").unwrap();
        let net = to_per_unit(&case).unwrap();
        let inc = incidence(&net);
        let a = inc.dense_a();
        let b = inc.dense_b();
        assert_eq!(a.len(), 37);
        assert_eq!(a[0].len(), 33);
        for l in 0..inc.n_lines {
            let row_sum: f64 = a[l].iter().sum();
            assert_eq!(row_sum, 0.0);
            let plus = a[l].iter().filter(|&&v| v == 1.0).count();
            let minus = a[l].iter().filter(|&&v| v == -1.0).count();
            assert_eq!((plus, minus), (1, 1));
            for i in 0..inc.n_buses {
                assert!(b[l][i] == 0.0 || b[l][i] == 1.0);
                // receiving-end marker: b is 1 exactly where a is -1
                assert_eq!(b[l][i] == 1.0, a[l][i] == -1.0);
                let s = a[l][i] + 2.0 * b[l][i];
                assert!(s == 0.0 || s == 1.0);
            }
        }
    }

    #[test]
    fn wind_curve_reference_points() {
        let case = load_case("ieee33").unwrap();
        let wt = &case.der.wind_units[0];
        let mut profiles = case.profiles.clone();
        profiles.wind_speed = [12.0; HOURS];
        assert!((wind_availability(&profiles, wt)[0] - 0.3).abs() < 1e-15);
        profiles.wind_speed = [3.0; HOURS];
        assert_eq!(wind_availability(&profiles, wt)[0], 0.0);
        profiles.wind_speed = [7.5; HOURS];
        // 0.3 * (7.5 - 3) / (12 - 3) = 0.15
        assert!((wind_availability(&profiles, wt)[0] - 0.15).abs() < 1e-15);
        profiles.wind_speed = [26.0; HOURS];
        assert_eq!(wind_availability(&profiles, wt)[0], 0.0);
        profiles.wind_speed = [25.0; HOURS];
        assert_eq!(wind_availability(&profiles, wt)[0], 0.0);
    }

    #[test]
    fn wind_curve_shape() {
        let case = load_case("ieee33").unwrap();
        let wt = &case.der.wind_units[0];
        let mut profiles = case.profiles.clone();
        // monotone non-decreasing over the ramp
        let mut prev = -1.0;
        for k in 0..=90 {
            let v = wt.v_cut_in + (wt.v_rated - wt.v_cut_in) * (k as f64) / 90.0;
            profiles.wind_speed = [v; HOURS];
            let p = wind_availability(&profiles, wt)[0];
            assert!(p >= prev - 1e-12);
            prev = p;
        }
        // constant at rated between rated and cut-out
        for v in [12.0, 15.0, 20.0, 24.9] {
            profiles.wind_speed = [v; HOURS];
            assert!((wind_availability(&profiles, wt)[0] - wt.p_rated_mw).abs() < 1e-15);
        }
        // zero outside [cut-in, cut-out)
        for v in [0.0, 1.0, 2.9, 25.0, 30.0] {
            profiles.wind_speed = [v; HOURS];
            assert_eq!(wind_availability(&profiles, wt)[0], 0.0);
        }
    }

    #[test]
    fn profile_override_parses() {
        let text = r#"
[profiles]
load_factor = [ 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5 ]
wind_speed_ms = [ 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0 ]
"#;
        let p = load_profiles(text).unwrap();
        assert_eq!(p.load_factor[0], 0.5);
        assert_eq!(p.wind_speed[23], 8.0);
    }
}
