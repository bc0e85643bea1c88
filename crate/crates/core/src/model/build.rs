//! Model construction: columns, bounds, linear rows and cone blocks for the
//! selected operating modes over the 24-hour grid.

use super::*;
use crate::case::{incidence, PuNetwork, VoltageBounds, HOURS};

/// Which operating modes the instance covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSet {
    Normal,
    Emergency,
    Both,
}

impl ModeSet {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeSet::Normal => vec![Mode::Normal],
            ModeSet::Emergency => vec![Mode::Emergency],
            ModeSet::Both => vec![Mode::Normal, Mode::Emergency],
        }
    }
}

/// Sizing policy for the disjunctive voltage-drop constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BigMPolicy {
    /// Tightest per-line constant from bounds and flow caps.
    PerLine,
    Fixed(f64),
}

/// Sizing policy for the switched line-flow caps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowCapPolicy {
    /// `v_max * i_max` per line: the apparent-power cap consistent with the
    /// line's current limit.
    FromCurrentCap,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub big_m: BigMPolicy,
    pub flow_cap: FlowCapPolicy,
    /// Overrides the per-unit charge/discharge efficiencies of every ESS.
    pub efficiency_override: Option<(f64, f64)>,
    /// Use one hour-indexed set of ESS charge-state binaries shared by both
    /// modes instead of the default per-mode duplication.
    pub ess_shared_binaries: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            big_m: BigMPolicy::PerLine,
            flow_cap: FlowCapPolicy::FromCurrentCap,
            efficiency_override: None,
            ess_shared_binaries: false,
        }
    }
}

/// Tightest constant that makes the voltage-drop relation vacuous on an
/// open line: the voltage-spread term plus the largest magnitudes the flow
/// and current terms can reach under their caps.
pub fn compute_big_m(
    r: f64,
    x: f64,
    vb: VoltageBounds,
    p_cap: f64,
    q_cap: f64,
    j_cap: f64,
) -> f64 {
    let vspread = vb.v_max * vb.v_max - vb.v_min * vb.v_min;
    vspread + 2.0 * (r * p_cap + x * q_cap) + (r * r + x * x) * j_cap
}

struct Builder {
    col_lb: Vec<f64>,
    col_ub: Vec<f64>,
    is_integer: Vec<bool>,
    col_meta: Vec<ColMeta>,
    rows: Vec<Row>,
    cones: Vec<ConeBlock>,
}

impl Builder {
    fn new() -> Self {
        Self {
            col_lb: Vec::new(),
            col_ub: Vec::new(),
            is_integer: Vec::new(),
            col_meta: Vec::new(),
            rows: Vec::new(),
            cones: Vec::new(),
        }
    }

    fn col(&mut self, meta: ColMeta, lb: f64, ub: f64, integer: bool) -> u32 {
        let idx = self.col_lb.len() as u32;
        self.col_lb.push(lb);
        self.col_ub.push(ub);
        self.is_integer.push(integer);
        self.col_meta.push(meta);
        idx
    }

    fn row(&mut self, kind: RowKind, lb: f64, ub: f64, coeffs: Vec<(u32, f64)>) {
        self.rows.push(Row { lb, ub, coeffs, kind });
    }
}

fn meta(quantity: Quantity, mode: Option<Mode>, hour: Option<usize>, element: usize) -> ColMeta {
    ColMeta {
        quantity,
        mode,
        hour: hour.map(|h| h as u8),
        element: element as u32,
    }
}

fn kind(family: RowFamily, mode: Option<Mode>, hour: Option<usize>, element: Option<usize>) -> RowKind {
    RowKind {
        family,
        mode,
        hour: hour.map(|h| h as u8),
        element: element.map(|e| e as u32),
    }
}

/// Build the full instance for the selected modes: power-flow rows, the
/// disjunctive voltage drop, one rotated-cone block per line and hour, the
/// hypothetical-flow radiality block, shedding, DG capability, storage
/// dynamics and wind caps. The objective starts at zero; see the objective
/// helpers.
pub fn build_model(
    net: &PuNetwork,
    modes: ModeSet,
    opts: &BuildOptions,
) -> Result<ModelInstance, ModelError> {
    let mode_list = modes.modes();
    let n = net.n_buses();
    let nl = net.n_lines();
    let ndg = net.dg.len();
    let ness = net.ess.len();
    let nw = net.wind.len();

    for (unit, bus) in net
        .wind
        .iter()
        .map(|w| ("wind", w.bus))
        .chain(net.ess.iter().map(|e| ("ess", e.bus)))
        .chain(net.dg.iter().map(|d| ("dg", d.bus)))
    {
        if bus >= n {
            return Err(ModelError::DerBusOutOfRange { unit, bus });
        }
    }
    if mode_list.contains(&Mode::Emergency) && ndg == 0 {
        return Err(ModelError::EmptyDgCandidates);
    }

    let inc = incidence(net);
    let mut b = Builder::new();
    let mut vars = VarSpace {
        n_buses: n,
        n_lines: nl,
        n_dg: ndg,
        n_ess: ness,
        n_wind: nw,
        ..Default::default()
    };

    // caps shared across modes
    let flow_cap = |line: &crate::case::PuLine, vb: VoltageBounds| -> f64 {
        match opts.flow_cap {
            FlowCapPolicy::FromCurrentCap => vb.v_max * line.i_max,
            FlowCapPolicy::Fixed(v) => v,
        }
    };
    // a single hypothetical source can at most serve the whole network
    let total_peak = net.total_peak_load();
    let hypo_cap = total_peak;

    let eff = |e: &crate::case::PuEss| -> (f64, f64) {
        match opts.efficiency_override {
            Some(pair) => pair,
            None => (e.eff_charge, e.eff_discharge),
        }
    };

    // ---------------- columns ----------------
    for &m in &mode_list {
        let vb = match m {
            Mode::Normal => net.bounds_normal,
            Mode::Emergency => net.bounds_emergency,
        };
        let mut mv = ModeVars {
            mode_built: true,
            ..Default::default()
        };

        // line statuses, hour-invariant, one binary per line
        for (l, line) in net.lines.iter().enumerate() {
            let (lo, hi) = if line.switchable { (0.0, 1.0) } else { (1.0, 1.0) };
            mv.x.push(b.col(meta(Quantity::LineStatus, Some(m), None, l), lo, hi, true));
        }
        // grid-forming selector exists only in emergency mode
        if m == Mode::Emergency {
            for d in 0..ndg {
                mv.dg_a.push(b.col(
                    meta(Quantity::GridFormer, Some(m), None, d),
                    0.0,
                    1.0,
                    true,
                ));
            }
        }
        // per-mode charge-state binaries (default layout)
        if !opts.ess_shared_binaries {
            for t in 0..HOURS {
                for e in 0..ness {
                    mv.ich.push(b.col(
                        meta(Quantity::EssChargeState, Some(m), Some(t), e),
                        0.0,
                        1.0,
                        true,
                    ));
                }
            }
            for t in 0..HOURS {
                for e in 0..ness {
                    mv.idch.push(b.col(
                        meta(Quantity::EssDischargeState, Some(m), Some(t), e),
                        0.0,
                        1.0,
                        true,
                    ));
                }
            }
        }

        mv.g_slots = match m {
            Mode::Normal => 1,
            Mode::Emergency => ndg,
        };

        for t in 0..HOURS {
            // squared voltages
            for i in 0..n {
                let (lo, hi) = if m == Mode::Normal && i == net.slack {
                    (1.0, 1.0)
                } else {
                    (vb.v_min * vb.v_min, vb.v_max * vb.v_max)
                };
                mv.u.push(b.col(meta(Quantity::VoltageSq, Some(m), Some(t), i), lo, hi, false));
            }
            // squared currents
            for (l, line) in net.lines.iter().enumerate() {
                mv.j.push(b.col(
                    meta(Quantity::CurrentSq, Some(m), Some(t), l),
                    0.0,
                    line.j_cap,
                    false,
                ));
            }
            // line flows (signed, on the reference orientation)
            for (l, line) in net.lines.iter().enumerate() {
                let cap = flow_cap(line, vb);
                mv.p.push(b.col(
                    meta(Quantity::FlowP, Some(m), Some(t), l),
                    -cap,
                    cap,
                    false,
                ));
            }
            for (l, line) in net.lines.iter().enumerate() {
                let cap = flow_cap(line, vb);
                mv.q.push(b.col(
                    meta(Quantity::FlowQ, Some(m), Some(t), l),
                    -cap,
                    cap,
                    false,
                ));
            }
            // hypothetical flows
            for l in 0..nl {
                mv.h.push(b.col(
                    meta(Quantity::HypoFlow, Some(m), Some(t), l),
                    -hypo_cap,
                    hypo_cap,
                    false,
                ));
            }
            // hypothetical sources
            for s in 0..mv.g_slots {
                mv.g.push(b.col(
                    meta(Quantity::HypoSource, Some(m), Some(t), s),
                    0.0,
                    hypo_cap,
                    false,
                ));
            }
            // substation injection only in normal mode
            if m == Mode::Normal {
                mv.pg.push(b.col(
                    meta(Quantity::SubP, Some(m), Some(t), 0),
                    0.0,
                    net.sub_p_max,
                    false,
                ));
                mv.qg.push(b.col(
                    meta(Quantity::SubQ, Some(m), Some(t), 0),
                    0.0,
                    net.sub_q_max,
                    false,
                ));
            }
            // synchronous DG dispatch
            for (d, dg) in net.dg.iter().enumerate() {
                mv.pdg.push(b.col(
                    meta(Quantity::DgP, Some(m), Some(t), d),
                    0.0,
                    dg.s_max,
                    false,
                ));
            }
            for (d, dg) in net.dg.iter().enumerate() {
                mv.qdg.push(b.col(
                    meta(Quantity::DgQ, Some(m), Some(t), d),
                    -dg.s_max,
                    dg.s_max,
                    false,
                ));
            }
            // wind dispatch, capped by hourly availability
            for (w, wt) in net.wind.iter().enumerate() {
                mv.pwt.push(b.col(
                    meta(Quantity::WindP, Some(m), Some(t), w),
                    0.0,
                    wt.avail[t],
                    false,
                ));
            }
            // storage
            for (e, ess) in net.ess.iter().enumerate() {
                mv.pc.push(b.col(
                    meta(Quantity::EssCharge, Some(m), Some(t), e),
                    0.0,
                    ess.p_max,
                    false,
                ));
            }
            for (e, ess) in net.ess.iter().enumerate() {
                mv.pd.push(b.col(
                    meta(Quantity::EssDischarge, Some(m), Some(t), e),
                    0.0,
                    ess.p_max,
                    false,
                ));
            }
            for (e, ess) in net.ess.iter().enumerate() {
                // daily cycle closes: the final state equals the initial one
                let (lo, hi) = if t == HOURS - 1 {
                    (ess.soc_initial, ess.soc_initial)
                } else {
                    (0.0, ess.soc_max)
                };
                mv.soc.push(b.col(meta(Quantity::EssSoc, Some(m), Some(t), e), lo, hi, false));
            }
            // shedding exists only in emergency mode
            if m == Mode::Emergency {
                let lf = net.load_factor(t);
                for i in 0..n {
                    mv.plsh.push(b.col(
                        meta(Quantity::ShedP, Some(m), Some(t), i),
                        0.0,
                        lf * net.loads[i].0,
                        false,
                    ));
                }
                for i in 0..n {
                    mv.qlsh.push(b.col(
                        meta(Quantity::ShedQ, Some(m), Some(t), i),
                        0.0,
                        lf * net.loads[i].1,
                        false,
                    ));
                }
            }
            // hypothetical shedding relief, capped at 99 % of the hourly load
            let lf = net.load_factor(t);
            for i in 0..n {
                mv.plsh_a.push(b.col(
                    meta(Quantity::HypoShed, Some(m), Some(t), i),
                    0.0,
                    0.99 * lf * net.loads[i].0,
                    false,
                ));
            }
        }

        match m {
            Mode::Normal => vars.normal = mv,
            Mode::Emergency => vars.emergency = mv,
        }
    }

    // shared charge-state binaries (literal hour-indexed layout)
    if opts.ess_shared_binaries {
        for t in 0..HOURS {
            for e in 0..ness {
                vars.shared_ich.push(b.col(
                    meta(Quantity::EssChargeState, None, Some(t), e),
                    0.0,
                    1.0,
                    true,
                ));
            }
        }
        for t in 0..HOURS {
            for e in 0..ness {
                vars.shared_idch.push(b.col(
                    meta(Quantity::EssDischargeState, None, Some(t), e),
                    0.0,
                    1.0,
                    true,
                ));
            }
        }
    }

    // ---------------- rows and cones ----------------
    for &m in &mode_list {
        let vb = match m {
            Mode::Normal => net.bounds_normal,
            Mode::Emergency => net.bounds_emergency,
        };
        let pf = |d: &crate::case::PuDg| match m {
            Mode::Normal => d.pf_normal,
            Mode::Emergency => d.pf_emergency,
        };

        // tree cardinality: directed statuses double-count each line
        {
            let mv = vars.mode(m);
            let coeffs: Vec<(u32, f64)> = mv.x.iter().map(|&c| (c, 2.0)).collect();
            let rhs = 2.0 * (n as f64 - 1.0);
            b.row(kind(RowFamily::TreeCardinality, Some(m), None, None), rhs, rhs, coeffs);
        }
        // exactly one grid former in emergency mode
        if m == Mode::Emergency {
            let mv = vars.mode(m);
            let coeffs: Vec<(u32, f64)> = mv.dg_a.iter().map(|&c| (c, 1.0)).collect();
            b.row(kind(RowFamily::GridFormerCount, Some(m), None, None), 1.0, 1.0, coeffs);
        }

        for t in 0..HOURS {
            let lf = net.load_factor(t);

            // power balances
            for i in 0..n {
                let mut pc: Vec<(u32, f64)> = Vec::new();
                let mut qc: Vec<(u32, f64)> = Vec::new();
                for (l, line) in net.lines.iter().enumerate() {
                    let a = inc.a(l, i);
                    if a != 0.0 {
                        pc.push((vars.p(m, t, l), a));
                        qc.push((vars.q(m, t, l), a));
                    }
                    if inc.b(l, i) != 0.0 {
                        pc.push((vars.j(m, t, l), line.r));
                        qc.push((vars.j(m, t, l), line.x));
                    }
                }
                if m == Mode::Normal && i == net.slack {
                    pc.push((vars.normal.pg[t], -1.0));
                    qc.push((vars.normal.qg[t], -1.0));
                }
                for (d, dg) in net.dg.iter().enumerate() {
                    if dg.bus == i {
                        pc.push((vars.mode(m).pdg[t * ndg + d], -1.0));
                        qc.push((vars.mode(m).qdg[t * ndg + d], -1.0));
                    }
                }
                for (w, wt) in net.wind.iter().enumerate() {
                    if wt.bus == i {
                        pc.push((vars.mode(m).pwt[t * nw + w], -1.0));
                    }
                }
                for (e, ess) in net.ess.iter().enumerate() {
                    if ess.bus == i {
                        pc.push((vars.mode(m).pd[t * ness + e], -1.0));
                        pc.push((vars.mode(m).pc[t * ness + e], 1.0));
                    }
                }
                if m == Mode::Emergency {
                    pc.push((vars.emergency.plsh[t * n + i], -1.0));
                    qc.push((vars.emergency.qlsh[t * n + i], -1.0));
                }
                let (pl, ql) = net.loads[i];
                b.row(
                    kind(RowFamily::ActiveBalance, Some(m), Some(t), Some(i)),
                    -lf * pl,
                    -lf * pl,
                    pc,
                );
                b.row(
                    kind(RowFamily::ReactiveBalance, Some(m), Some(t), Some(i)),
                    -lf * ql,
                    -lf * ql,
                    qc,
                );
            }

            // voltage drop, switched flow caps, cone per line
            for (l, line) in net.lines.iter().enumerate() {
                let cap = flow_cap(line, vb);
                let m_const = match opts.big_m {
                    BigMPolicy::PerLine => compute_big_m(line.r, line.x, vb, cap, cap, line.j_cap),
                    BigMPolicy::Fixed(v) => v,
                };
                let (uf, ut) = (vars.u(m, t, line.from), vars.u(m, t, line.to));
                let (pv, qv, jv, xv) = (
                    vars.p(m, t, l),
                    vars.q(m, t, l),
                    vars.j(m, t, l),
                    vars.x(m, l),
                );
                let z2 = line.r * line.r + line.x * line.x;
                // expr = U_to - U_from + 2(rP + xQ) - z^2 J; |expr| <= M (1 - X)
                let expr = |extra: (u32, f64)| -> Vec<(u32, f64)> {
                    vec![
                        (ut, 1.0),
                        (uf, -1.0),
                        (pv, 2.0 * line.r),
                        (qv, 2.0 * line.x),
                        (jv, -z2),
                        extra,
                    ]
                };
                b.row(
                    kind(RowFamily::VoltageDropUpper, Some(m), Some(t), Some(l)),
                    f64::NEG_INFINITY,
                    m_const,
                    expr((xv, m_const)),
                );
                b.row(
                    kind(RowFamily::VoltageDropLower, Some(m), Some(t), Some(l)),
                    -m_const,
                    f64::INFINITY,
                    expr((xv, -m_const)),
                );
                // switched caps
                b.row(
                    kind(RowFamily::ActiveFlowUpper, Some(m), Some(t), Some(l)),
                    f64::NEG_INFINITY,
                    0.0,
                    vec![(pv, 1.0), (xv, -cap)],
                );
                b.row(
                    kind(RowFamily::ActiveFlowLower, Some(m), Some(t), Some(l)),
                    0.0,
                    f64::INFINITY,
                    vec![(pv, 1.0), (xv, cap)],
                );
                b.row(
                    kind(RowFamily::ReactiveFlowUpper, Some(m), Some(t), Some(l)),
                    f64::NEG_INFINITY,
                    0.0,
                    vec![(qv, 1.0), (xv, -cap)],
                );
                b.row(
                    kind(RowFamily::ReactiveFlowLower, Some(m), Some(t), Some(l)),
                    0.0,
                    f64::INFINITY,
                    vec![(qv, 1.0), (xv, cap)],
                );
                b.row(
                    kind(RowFamily::CurrentCap, Some(m), Some(t), Some(l)),
                    f64::NEG_INFINITY,
                    0.0,
                    vec![(jv, 1.0), (xv, -line.j_cap)],
                );
                let hv = vars.h(m, t, l);
                b.row(
                    kind(RowFamily::HypoFlowUpper, Some(m), Some(t), Some(l)),
                    f64::NEG_INFINITY,
                    0.0,
                    vec![(hv, 1.0), (xv, -hypo_cap)],
                );
                b.row(
                    kind(RowFamily::HypoFlowLower, Some(m), Some(t), Some(l)),
                    0.0,
                    f64::INFINITY,
                    vec![(hv, 1.0), (xv, hypo_cap)],
                );
                // squared flow within current times sending-end voltage
                b.cones.push(ConeBlock {
                    p: vec![pv, qv],
                    a: ConeSide::Col(jv),
                    b: ConeSide::Col(uf),
                    kind: ConeKind::LineFlow,
                    mode: m,
                    hour: t as u8,
                    element: l as u32,
                });
            }

            // hypothetical balance per bus
            for i in 0..n {
                let mut hc: Vec<(u32, f64)> = Vec::new();
                for l in 0..nl {
                    let a = inc.a(l, i);
                    if a != 0.0 {
                        hc.push((vars.h(m, t, l), a));
                    }
                }
                let mv = vars.mode(m);
                match m {
                    Mode::Normal => {
                        if i == net.slack {
                            hc.push((mv.g[t], -1.0));
                        }
                    }
                    Mode::Emergency => {
                        for (d, dg) in net.dg.iter().enumerate() {
                            if dg.bus == i {
                                hc.push((mv.g[t * ndg + d], -1.0));
                            }
                        }
                    }
                }
                hc.push((mv.plsh_a[t * n + i], -1.0));
                let rhs = -lf * net.loads[i].0;
                b.row(
                    kind(RowFamily::HypoBalance, Some(m), Some(t), Some(i)),
                    rhs,
                    rhs,
                    hc,
                );
            }
            // emergency-source gating
            if m == Mode::Emergency {
                let mv = vars.mode(m);
                for d in 0..ndg {
                    b.row(
                        kind(RowFamily::HypoSourceGate, Some(m), Some(t), Some(d)),
                        f64::NEG_INFINITY,
                        0.0,
                        vec![(mv.g[t * ndg + d], 1.0), (mv.dg_a[d], -hypo_cap)],
                    );
                }
            }

            // shedding keeps the load power factor
            if m == Mode::Emergency {
                for i in 0..n {
                    let (pl, ql) = net.loads[i];
                    if pl > 0.0 {
                        b.row(
                            kind(RowFamily::ShedRatio, Some(m), Some(t), Some(i)),
                            0.0,
                            0.0,
                            vec![
                                (vars.emergency.qlsh[t * n + i], 1.0),
                                (vars.emergency.plsh[t * n + i], -ql / pl),
                            ],
                        );
                    }
                }
            }

            // DG reactive band from the mode power factor
            for (d, dg) in net.dg.iter().enumerate() {
                let tan_phi = pf(dg).acos().tan();
                let (pv, qv) = (
                    vars.mode(m).pdg[t * ndg + d],
                    vars.mode(m).qdg[t * ndg + d],
                );
                b.row(
                    kind(RowFamily::DgWedgeUpper, Some(m), Some(t), Some(d)),
                    f64::NEG_INFINITY,
                    0.0,
                    vec![(qv, 1.0), (pv, -tan_phi)],
                );
                b.row(
                    kind(RowFamily::DgWedgeLower, Some(m), Some(t), Some(d)),
                    0.0,
                    f64::INFINITY,
                    vec![(qv, 1.0), (pv, tan_phi)],
                );
                b.cones.push(ConeBlock {
                    p: vec![pv, qv],
                    a: ConeSide::Const(dg.s_max),
                    b: ConeSide::Const(dg.s_max),
                    kind: ConeKind::DgCapability,
                    mode: m,
                    hour: t as u8,
                    element: d as u32,
                });
            }

            // storage gates, exclusivity and the state-of-charge chain
            for (e, ess) in net.ess.iter().enumerate() {
                let (effc, effd) = eff(ess);
                let mv = vars.mode(m);
                let (pcv, pdv, socv) = (
                    mv.pc[t * ness + e],
                    mv.pd[t * ness + e],
                    mv.soc[t * ness + e],
                );
                let ichv = vars.ich(m, t, e);
                let idchv = vars.idch(m, t, e);
                b.row(
                    kind(RowFamily::EssChargeGate, Some(m), Some(t), Some(e)),
                    f64::NEG_INFINITY,
                    0.0,
                    vec![(pcv, 1.0), (ichv, -ess.p_max)],
                );
                b.row(
                    kind(RowFamily::EssDischargeGate, Some(m), Some(t), Some(e)),
                    f64::NEG_INFINITY,
                    0.0,
                    vec![(pdv, 1.0), (idchv, -ess.p_max)],
                );
                // SOC_t - SOC_{t-1} = effc PC_t - PD_t / effd
                let mut soc_link = vec![(socv, 1.0), (pcv, -effc), (pdv, 1.0 / effd)];
                let rhs = if t == 0 {
                    ess.soc_initial
                } else {
                    soc_link.push((mv.soc[(t - 1) * ness + e], -1.0));
                    0.0
                };
                b.row(
                    kind(RowFamily::EssSocLink, Some(m), Some(t), Some(e)),
                    rhs,
                    rhs,
                    soc_link,
                );
            }
        }
        // exclusivity rows: once per binary set
        if !opts.ess_shared_binaries {
            for t in 0..HOURS {
                for e in 0..ness {
                    b.row(
                        kind(RowFamily::EssExclusive, Some(m), Some(t), Some(e)),
                        f64::NEG_INFINITY,
                        1.0,
                        vec![(vars.ich(m, t, e), 1.0), (vars.idch(m, t, e), 1.0)],
                    );
                }
            }
        }
    }
    if opts.ess_shared_binaries {
        for t in 0..HOURS {
            for e in 0..ness {
                b.row(
                    kind(RowFamily::EssExclusive, None, Some(t), Some(e)),
                    f64::NEG_INFINITY,
                    1.0,
                    vec![
                        (vars.shared_ich[t * ness + e], 1.0),
                        (vars.shared_idch[t * ness + e], 1.0),
                    ],
                );
            }
        }
    }

    let n_cols = b.col_lb.len();
    let instance = ModelInstance {
        n_cols,
        col_lb: b.col_lb,
        col_ub: b.col_ub,
        obj: vec![0.0; n_cols],
        is_integer: b.is_integer,
        rows: b.rows,
        cones: b.cones,
        col_meta: b.col_meta,
        vars,
        modes: mode_list,
        base_mva: net.case.base_mva,
        net: net.clone(),
    };
    debug_assert!(instance.check_invariants().is_ok());
    Ok(instance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{load_case, to_per_unit};

    fn ieee33() -> PuNetwork {
        to_per_unit(&load_case("ieee33").unwrap()).unwrap()
    }

    #[test]
    fn binary_count_shared_layout() {
        // literal hour-indexed charge-state binaries shared by both modes:
        // 37 lines x 2 modes + 2 ESS x 24 h x 2 + 2 grid formers = 172
        let net = ieee33();
        let opts = BuildOptions {
            ess_shared_binaries: true,
            ..Default::default()
        };
        let inst = build_model(&net, ModeSet::Both, &opts).unwrap();
        assert_eq!(inst.n_integer(), 172);
        // enumerate by quantity to pin the layout rules
        let mut by_quantity = std::collections::BTreeMap::new();
        for c in inst.integer_columns() {
            let q = inst.col_meta[c as usize].quantity;
            *by_quantity.entry(q.tag()).or_insert(0usize) += 1;
        }
        assert_eq!(by_quantity["x"], 74);
        assert_eq!(by_quantity["ich"], 48);
        assert_eq!(by_quantity["idch"], 48);
        assert_eq!(by_quantity["dga"], 2);
    }

    #[test]
    fn binary_count_per_mode_layout() {
        let net = ieee33();
        let inst = build_model(&net, ModeSet::Both, &BuildOptions::default()).unwrap();
        // per-mode duplication doubles the charge-state binaries
        assert_eq!(inst.n_integer(), 74 + 192 + 2);
    }

    #[test]
    fn single_line_normal_mode_has_one_cone_per_hour() {
        let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
        let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
        let line_cones = inst
            .cones
            .iter()
            .filter(|c| c.kind == ConeKind::LineFlow)
            .count();
        assert_eq!(line_cones, 24);
        assert_eq!(inst.cones.len(), 24); // no DG discs in this case
    }

    #[test]
    fn tree_cardinality_row_rhs() {
        let net = ieee33();
        let inst = build_model(&net, ModeSet::Both, &BuildOptions::default()).unwrap();
        let rows: Vec<&Row> = inst
            .rows
            .iter()
            .filter(|r| r.kind.family == RowFamily::TreeCardinality)
            .collect();
        assert_eq!(rows.len(), 2);
        for r in rows {
            assert_eq!(r.lb, 64.0);
            assert_eq!(r.ub, 64.0);
            assert!(r.coeffs.iter().all(|&(_, v)| v == 2.0));
            assert_eq!(r.coeffs.len(), 37);
        }
    }

    #[test]
    fn big_m_reference_values() {
        let vb = VoltageBounds { v_min: 0.9, v_max: 1.1 };
        let m = compute_big_m(0.05, 0.05, vb, 1.0, 1.0, 1.0);
        assert!((m - 0.605).abs() < 1e-12, "{m}");
        let m0 = compute_big_m(0.0, 0.0, vb, 1.0, 1.0, 1.0);
        assert!((m0 - (1.1f64 * 1.1 - 0.9 * 0.9)).abs() < 1e-12);
    }

    #[test]
    fn big_m_covers_every_open_line_state() {
        // sampled interior points with X = 0 must satisfy both voltage-drop
        // inequalities strictly
        let vb = VoltageBounds { v_min: 0.95, v_max: 1.05 };
        let (r, x, j_cap) = (0.01, 0.02, 8.0);
        let (p_cap, q_cap) = (2.0, 2.0);
        let m = compute_big_m(r, x, vb, p_cap, q_cap, j_cap);
        let mut s = 42u64;
        let mut rng = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..2000 {
            let uf = vb.v_min.powi(2) + rng() * (vb.v_max.powi(2) - vb.v_min.powi(2));
            let ut = vb.v_min.powi(2) + rng() * (vb.v_max.powi(2) - vb.v_min.powi(2));
            let p = (rng() * 2.0 - 1.0) * p_cap;
            let q = (rng() * 2.0 - 1.0) * q_cap;
            let jj = rng() * j_cap;
            let expr = ut - uf + 2.0 * (r * p + x * q) - (r * r + x * x) * jj;
            assert!(expr < m && expr > -m);
        }
    }

    #[test]
    fn mode_blocks_share_no_columns_in_default_layout() {
        let net = ieee33();
        let inst = build_model(&net, ModeSet::Both, &BuildOptions::default()).unwrap();
        // every row's columns belong to a single mode
        for row in &inst.rows {
            let mut seen_mode: Option<Mode> = None;
            for &(c, _) in &row.coeffs {
                if let Some(m) = inst.col_meta[c as usize].mode {
                    match seen_mode {
                        None => seen_mode = Some(m),
                        Some(prev) => assert_eq!(
                            prev, m,
                            "row {:?} couples modes",
                            row.kind.family
                        ),
                    }
                }
            }
        }
        for cone in &inst.cones {
            for &c in cone.p.iter() {
                assert_eq!(inst.col_meta[c as usize].mode, Some(cone.mode));
            }
        }
    }

    #[test]
    fn shared_layout_couples_modes_through_charge_binaries() {
        let net = ieee33();
        let opts = BuildOptions {
            ess_shared_binaries: true,
            ..Default::default()
        };
        let inst = build_model(&net, ModeSet::Both, &opts).unwrap();
        let coupled = inst.rows.iter().any(|row| {
            row.coeffs
                .iter()
                .any(|&(c, _)| inst.col_meta[c as usize].mode.is_none())
                && row
                    .coeffs
                    .iter()
                    .any(|&(c, _)| inst.col_meta[c as usize].mode.is_some())
        });
        assert!(coupled);
    }

    #[test]
    fn emergency_without_dg_candidates_fails() {
        let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
        assert!(matches!(
            build_model(&net, ModeSet::Emergency, &BuildOptions::default()),
            Err(ModelError::EmptyDgCandidates)
        ));
    }

    #[test]
    fn instance_invariants_hold() {
        let net = ieee33();
        for modes in [ModeSet::Normal, ModeSet::Emergency, ModeSet::Both] {
            let inst = build_model(&net, modes, &BuildOptions::default()).unwrap();
            inst.check_invariants().unwrap();
            // each column owned by exactly one quantity slot by construction;
            // spot-check the lookup tables cover all columns exactly once
            let mut owned = vec![false; inst.n_cols];
            let mut own = |c: u32| {
                assert!(!owned[c as usize], "column {c} owned twice");
                owned[c as usize] = true;
            };
            for m in &inst.modes {
                let mv = inst.vars.mode(*m);
                for &c in mv
                    .x
                    .iter()
                    .chain(&mv.u)
                    .chain(&mv.j)
                    .chain(&mv.p)
                    .chain(&mv.q)
                    .chain(&mv.h)
                    .chain(&mv.g)
                    .chain(&mv.pg)
                    .chain(&mv.qg)
                    .chain(&mv.pdg)
                    .chain(&mv.qdg)
                    .chain(&mv.pwt)
                    .chain(&mv.pc)
                    .chain(&mv.pd)
                    .chain(&mv.soc)
                    .chain(&mv.plsh)
                    .chain(&mv.qlsh)
                    .chain(&mv.plsh_a)
                    .chain(&mv.dg_a)
                    .chain(&mv.ich)
                    .chain(&mv.idch)
                {
                    own(c);
                }
            }
            for &c in inst.vars.shared_ich.iter().chain(&inst.vars.shared_idch) {
                own(c);
            }
            assert!(owned.iter().all(|&b| b), "unowned columns exist");
        }
    }

    #[test]
    fn slack_voltage_fixed_only_in_normal_mode() {
        let net = ieee33();
        let inst = build_model(&net, ModeSet::Both, &BuildOptions::default()).unwrap();
        let slack = net.slack;
        for t in 0..HOURS {
            let un = inst.vars.u(Mode::Normal, t, slack) as usize;
            assert_eq!((inst.col_lb[un], inst.col_ub[un]), (1.0, 1.0));
            let ue = inst.vars.u(Mode::Emergency, t, slack) as usize;
            assert_eq!(inst.col_lb[ue], 0.9 * 0.9);
            assert_eq!(inst.col_ub[ue], 1.1 * 1.1);
        }
        // no substation columns exist in emergency mode
        assert!(inst.vars.emergency.pg.is_empty());
        assert!(inst.vars.emergency.qg.is_empty());
    }
}
