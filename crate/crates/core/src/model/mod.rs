//! The convexified mixed-integer second-order-cone model: variable space,
//! sparse rows, rotated-cone blocks, objective assembly and solution
//! decoding.

mod build;
mod decode;
mod objective;

pub use build::{build_model, compute_big_m, BuildOptions, FlowCapPolicy, BigMPolicy, ModeSet};
pub use decode::{extract_solution, DecodeError, ModeSchedule, Schedule};
pub use objective::{
    assemble_objective, compute_resiliency_index, loss_energy_mwh, resiliency_index,
    set_loss_objective, set_shed_objective, shed_energy_mwh, ObjectiveSplit,
    NORMALIZER_FLOOR,
};

use crate::case::PuNetwork;
use thiserror::Error;

/// Operating mode: `Normal` is grid-connected loss-minimal operation,
/// `Emergency` is the islanded restoration mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Normal,
    Emergency,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Normal => "normal",
            Mode::Emergency => "emergency",
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("emergency mode needs at least one DG candidate for grid forming")]
    EmptyDgCandidates,
    #[error("{unit} unit references bus index {bus} outside the network")]
    DerBusOutOfRange { unit: &'static str, bus: usize },
    #[error("objective requires mode {0:?} in the instance")]
    ModeNotBuilt(Mode),
    #[error("total load energy must be positive, got {0}")]
    NonPositiveLoad(f64),
}

/// Variable quantities; each column of the model owns exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    VoltageSq,
    CurrentSq,
    FlowP,
    FlowQ,
    HypoFlow,
    HypoSource,
    SubP,
    SubQ,
    DgP,
    DgQ,
    WindP,
    EssCharge,
    EssDischarge,
    EssSoc,
    ShedP,
    ShedQ,
    HypoShed,
    LineStatus,
    EssChargeState,
    EssDischargeState,
    GridFormer,
}

impl Quantity {
    pub fn tag(self) -> &'static str {
        match self {
            Quantity::VoltageSq => "usq",
            Quantity::CurrentSq => "jsq",
            Quantity::FlowP => "fp",
            Quantity::FlowQ => "fq",
            Quantity::HypoFlow => "hf",
            Quantity::HypoSource => "hsrc",
            Quantity::SubP => "subp",
            Quantity::SubQ => "subq",
            Quantity::DgP => "dgp",
            Quantity::DgQ => "dgq",
            Quantity::WindP => "wtp",
            Quantity::EssCharge => "esc",
            Quantity::EssDischarge => "esd",
            Quantity::EssSoc => "soc",
            Quantity::ShedP => "shp",
            Quantity::ShedQ => "shq",
            Quantity::HypoShed => "hsh",
            Quantity::LineStatus => "x",
            Quantity::EssChargeState => "ich",
            Quantity::EssDischargeState => "idch",
            Quantity::GridFormer => "dga",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ColMeta {
    pub quantity: Quantity,
    pub mode: Option<Mode>,
    /// Hour 0..23; absent for hour-invariant columns.
    pub hour: Option<u8>,
    /// Element index within its collection (bus, line, unit...).
    pub element: u32,
}

/// Constraint families, named by what each row enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFamily {
    ActiveBalance,
    ReactiveBalance,
    VoltageDropUpper,
    VoltageDropLower,
    ActiveFlowUpper,
    ActiveFlowLower,
    ReactiveFlowUpper,
    ReactiveFlowLower,
    CurrentCap,
    TreeCardinality,
    HypoBalance,
    HypoFlowUpper,
    HypoFlowLower,
    HypoSourceGate,
    ShedRatio,
    DgWedgeUpper,
    DgWedgeLower,
    EssChargeGate,
    EssDischargeGate,
    EssExclusive,
    EssSocLink,
    GridFormerCount,
    ObjectiveCap,
}

impl RowFamily {
    pub fn tag(self) -> &'static str {
        match self {
            RowFamily::ActiveBalance => "pbal",
            RowFamily::ReactiveBalance => "qbal",
            RowFamily::VoltageDropUpper => "vdrop_up",
            RowFamily::VoltageDropLower => "vdrop_lo",
            RowFamily::ActiveFlowUpper => "pcap_up",
            RowFamily::ActiveFlowLower => "pcap_lo",
            RowFamily::ReactiveFlowUpper => "qcap_up",
            RowFamily::ReactiveFlowLower => "qcap_lo",
            RowFamily::CurrentCap => "jcap",
            RowFamily::TreeCardinality => "treecard",
            RowFamily::HypoBalance => "hbal",
            RowFamily::HypoFlowUpper => "hcap_up",
            RowFamily::HypoFlowLower => "hcap_lo",
            RowFamily::HypoSourceGate => "hgate",
            RowFamily::ShedRatio => "shratio",
            RowFamily::DgWedgeUpper => "dgpf_up",
            RowFamily::DgWedgeLower => "dgpf_lo",
            RowFamily::EssChargeGate => "esc_gate",
            RowFamily::EssDischargeGate => "esd_gate",
            RowFamily::EssExclusive => "es_excl",
            RowFamily::EssSocLink => "soc_link",
            RowFamily::GridFormerCount => "former",
            RowFamily::ObjectiveCap => "objcap",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RowKind {
    pub family: RowFamily,
    pub mode: Option<Mode>,
    pub hour: Option<u8>,
    pub element: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub lb: f64,
    pub ub: f64,
    pub coeffs: Vec<(u32, f64)>,
    pub kind: RowKind,
}

/// One side of a rotated cone `sum p^2 <= a * b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConeSide {
    Col(u32),
    Const(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// Squared line flow against current times sending-end voltage.
    LineFlow,
    /// DG apparent-power capability disc.
    DgCapability,
}

#[derive(Debug, Clone)]
pub struct ConeBlock {
    pub p: Vec<u32>,
    pub a: ConeSide,
    pub b: ConeSide,
    pub kind: ConeKind,
    pub mode: Mode,
    pub hour: u8,
    pub element: u32,
}

/// Per-mode variable lookup tables. Layout index helpers assume the natural
/// `[hour * count + element]` packing.
#[derive(Debug, Clone, Default)]
pub struct ModeVars {
    pub mode_built: bool,
    pub x: Vec<u32>,
    pub u: Vec<u32>,
    pub j: Vec<u32>,
    pub p: Vec<u32>,
    pub q: Vec<u32>,
    pub h: Vec<u32>,
    /// Hypothetical sources: normal mode has one slot (the slack); emergency
    /// mode one slot per DG candidate.
    pub g: Vec<u32>,
    pub g_slots: usize,
    pub pg: Vec<u32>,
    pub qg: Vec<u32>,
    pub pdg: Vec<u32>,
    pub qdg: Vec<u32>,
    pub pwt: Vec<u32>,
    pub pc: Vec<u32>,
    pub pd: Vec<u32>,
    pub soc: Vec<u32>,
    pub plsh: Vec<u32>,
    pub qlsh: Vec<u32>,
    pub plsh_a: Vec<u32>,
    pub dg_a: Vec<u32>,
    pub ich: Vec<u32>,
    pub idch: Vec<u32>,
}

/// Column index maps for every decision quantity.
#[derive(Debug, Clone, Default)]
pub struct VarSpace {
    pub n_buses: usize,
    pub n_lines: usize,
    pub n_dg: usize,
    pub n_ess: usize,
    pub n_wind: usize,
    pub normal: ModeVars,
    pub emergency: ModeVars,
    /// Hour-indexed charge-state binaries shared by both modes, when the
    /// literal shared-binary layout is requested.
    pub shared_ich: Vec<u32>,
    pub shared_idch: Vec<u32>,
}

impl VarSpace {
    pub fn mode(&self, m: Mode) -> &ModeVars {
        match m {
            Mode::Normal => &self.normal,
            Mode::Emergency => &self.emergency,
        }
    }

    pub fn u(&self, m: Mode, t: usize, bus: usize) -> u32 {
        self.mode(m).u[t * self.n_buses + bus]
    }

    pub fn j(&self, m: Mode, t: usize, line: usize) -> u32 {
        self.mode(m).j[t * self.n_lines + line]
    }

    pub fn p(&self, m: Mode, t: usize, line: usize) -> u32 {
        self.mode(m).p[t * self.n_lines + line]
    }

    pub fn q(&self, m: Mode, t: usize, line: usize) -> u32 {
        self.mode(m).q[t * self.n_lines + line]
    }

    pub fn h(&self, m: Mode, t: usize, line: usize) -> u32 {
        self.mode(m).h[t * self.n_lines + line]
    }

    pub fn x(&self, m: Mode, line: usize) -> u32 {
        self.mode(m).x[line]
    }

    pub fn ich(&self, m: Mode, t: usize, e: usize) -> u32 {
        if !self.shared_ich.is_empty() {
            self.shared_ich[t * self.n_ess + e]
        } else {
            self.mode(m).ich[t * self.n_ess + e]
        }
    }

    pub fn idch(&self, m: Mode, t: usize, e: usize) -> u32 {
        if !self.shared_idch.is_empty() {
            self.shared_idch[t * self.n_ess + e]
        } else {
            self.mode(m).idch[t * self.n_ess + e]
        }
    }
}

/// The built optimization instance: linear rows over bounded columns with
/// integrality marks, plus rotated-cone blocks, plus metadata tying every
/// row and column back to the constraint family it encodes.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub n_cols: usize,
    pub col_lb: Vec<f64>,
    pub col_ub: Vec<f64>,
    pub obj: Vec<f64>,
    pub is_integer: Vec<bool>,
    pub rows: Vec<Row>,
    pub cones: Vec<ConeBlock>,
    pub col_meta: Vec<ColMeta>,
    pub vars: VarSpace,
    pub modes: Vec<Mode>,
    pub base_mva: f64,
    pub net: PuNetwork,
}

impl ModelInstance {
    pub fn integer_columns(&self) -> impl Iterator<Item = u32> + '_ {
        self.is_integer
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as u32)
    }

    pub fn n_integer(&self) -> usize {
        self.is_integer.iter().filter(|&&b| b).count()
    }

    pub fn has_mode(&self, m: Mode) -> bool {
        self.modes.contains(&m)
    }

    /// Structural sanity used by tests: each column owned by one quantity,
    /// every cone side column carries a non-negative lower bound.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.col_meta.len() != self.n_cols
            || self.col_lb.len() != self.n_cols
            || self.col_ub.len() != self.n_cols
            || self.obj.len() != self.n_cols
            || self.is_integer.len() != self.n_cols
        {
            return Err("column array lengths disagree".to_string());
        }
        for cone in &self.cones {
            for side in [&cone.a, &cone.b] {
                if let ConeSide::Col(c) = side {
                    if self.col_lb[*c as usize] < 0.0 {
                        return Err(format!(
                            "cone side column {c} has negative lower bound"
                        ));
                    }
                }
            }
        }
        for row in &self.rows {
            if row.lb > row.ub {
                return Err("row with crossed bounds".to_string());
            }
            for &(c, _) in &row.coeffs {
                if c as usize >= self.n_cols {
                    return Err("row references missing column".to_string());
                }
            }
        }
        Ok(())
    }
}
