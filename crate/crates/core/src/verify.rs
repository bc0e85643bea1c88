//! Solution invariant battery: model-free checks of a decoded schedule
//! against the case physics and the switching rules.

use crate::case::{PuNetwork, HOURS};
use crate::model::{Mode, ModeSchedule, Schedule};
use crate::radiality::{check_radial, consistent_with_x, RadialVerdict, Topology};
use crate::sweep::{sweep_power_flow, SweepLine};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub max_voltage_gap: f64,
    pub max_loss_rel_diff: f64,
    pub max_cone_slack: f64,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn add(&mut self, name: &'static str, pass: bool, detail: String) {
        self.checks.push(Check { name, pass, detail });
    }
}

impl std::fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {} {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Tolerances of the verification battery.
#[derive(Debug, Clone, Copy)]
pub struct VerifyTols {
    pub gating: f64,
    pub shed_ratio: f64,
    pub soc_cycle: f64,
    pub dg_capability: f64,
    pub cone_slack: f64,
    pub sweep_voltage: f64,
    pub sweep_loss_rel: f64,
}

impl Default for VerifyTols {
    fn default() -> Self {
        Self {
            gating: 1e-9,
            shed_ratio: 1e-8,
            soc_cycle: 1e-9,
            dg_capability: 1e-8,
            cone_slack: 1e-5,
            sweep_voltage: 1e-4,
            sweep_loss_rel: 1e-3,
        }
    }
}

fn topology_of(net: &PuNetwork, ms: &ModeSchedule) -> Topology {
    let closed: Vec<(usize, usize)> = net
        .lines
        .iter()
        .enumerate()
        .filter(|(l, _)| ms.line_closed[*l])
        .map(|(_, line)| (line.from + 1, line.to + 1))
        .collect();
    Topology::new(net.n_buses(), closed)
}

/// Net injection per bus for the sweep oracle at one hour: DER and shed act
/// as negative load, the root bus's injection is left to the sweep.
fn injections(net: &PuNetwork, ms: &ModeSchedule, t: usize) -> Vec<(f64, f64)> {
    let lf = net.load_factor(t);
    let mut inj: Vec<(f64, f64)> = net
        .loads
        .iter()
        .map(|&(p, q)| (-lf * p, -lf * q))
        .collect();
    for (d, dg) in net.dg.iter().enumerate() {
        inj[dg.bus].0 += ms.dg_p[t][d];
        inj[dg.bus].1 += ms.dg_q[t][d];
    }
    for (w, wt) in net.wind.iter().enumerate() {
        inj[wt.bus].0 += ms.wind_p[t][w];
    }
    for (e, ess) in net.ess.iter().enumerate() {
        inj[ess.bus].0 += ms.ess_discharge[t][e] - ms.ess_charge[t][e];
    }
    for i in 0..net.n_buses() {
        inj[i].0 += ms.shed_p[t][i];
        inj[i].1 += ms.shed_q[t][i];
    }
    inj
}

/// Run the whole battery on a decoded schedule.
pub fn verify_schedule(
    net: &PuNetwork,
    schedule: &Schedule,
    tols: &VerifyTols,
) -> VerificationReport {
    let mut rep = VerificationReport::default();

    for ms in &schedule.modes {
        let mode = ms.mode.tag();
        let topo = topology_of(net, ms);

        // radiality and the directed-status consistency
        let verdict = check_radial(&topo);
        rep.add(
            "radiality",
            verdict.is_radial(),
            format!("{mode}: {verdict:?}"),
        );
        let mut x: Vec<((usize, usize), f64)> = Vec::new();
        for (l, line) in net.lines.iter().enumerate() {
            let v = if ms.line_closed[l] { 1.0 } else { 0.0 };
            x.push(((line.from + 1, line.to + 1), v));
            x.push(((line.to + 1, line.from + 1), v));
        }
        let consistent = consistent_with_x(&topo, &x);
        rep.add(
            "status-consistency",
            consistent,
            format!(
                "{mode}: directed statuses sum to {}",
                x.iter().map(|(_, v)| v).sum::<f64>()
            ),
        );

        // switch gating: open lines carry nothing
        let mut max_gate = 0.0f64;
        for t in 0..HOURS {
            for l in 0..net.n_lines() {
                if !ms.line_closed[l] {
                    max_gate = max_gate
                        .max(ms.flow_p[t][l].abs())
                        .max(ms.flow_q[t][l].abs())
                        .max(ms.current[t][l].abs())
                        .max(ms.hypo_flow[t][l].abs());
                }
            }
        }
        rep.add(
            "switch-gating",
            max_gate <= tols.gating,
            format!("{mode}: max open-line magnitude {max_gate:.2e}"),
        );

        // voltage bounds per mode
        let vb = match ms.mode {
            Mode::Normal => net.bounds_normal,
            Mode::Emergency => net.bounds_emergency,
        };
        let mut vmin = f64::INFINITY;
        let mut vmax = f64::NEG_INFINITY;
        for t in 0..HOURS {
            for i in 0..net.n_buses() {
                vmin = vmin.min(ms.voltage[t][i]);
                vmax = vmax.max(ms.voltage[t][i]);
            }
        }
        rep.add(
            "voltage-bounds",
            vmin >= vb.v_min - 1e-6 && vmax <= vb.v_max + 1e-6,
            format!("{mode}: range [{vmin:.4}, {vmax:.4}]"),
        );

        match ms.mode {
            Mode::Normal => {
                // no shedding in normal operation
                let shed: f64 = ms
                    .shed_p
                    .iter()
                    .flat_map(|r| r.iter())
                    .map(|v| v.abs())
                    .sum();
                rep.add(
                    "no-shedding-normal",
                    shed == 0.0,
                    format!("total {shed:.2e}"),
                );
            }
            Mode::Emergency => {
                // shedding keeps the load power factor
                let mut max_ratio_err = 0.0f64;
                for t in 0..HOURS {
                    for i in 0..net.n_buses() {
                        let (p, q) = net.loads[i];
                        if p > 0.0 {
                            let want = ms.shed_p[t][i] * q / p;
                            max_ratio_err = max_ratio_err.max((ms.shed_q[t][i] - want).abs());
                        }
                    }
                }
                rep.add(
                    "shed-ratio",
                    max_ratio_err <= tols.shed_ratio,
                    format!("max deviation {max_ratio_err:.2e}"),
                );
                // exactly one grid former, substation silent
                rep.add(
                    "grid-former",
                    ms.grid_former.is_some(),
                    format!("selected {:?}", ms.grid_former),
                );
                let sub: f64 = ms
                    .sub_p
                    .iter()
                    .chain(ms.sub_q.iter())
                    .map(|v| v.abs())
                    .sum();
                rep.add(
                    "substation-silent",
                    sub == 0.0,
                    format!("total injection {sub:.2e}"),
                );
            }
        }

        // ESS battery: exclusivity, SOC bounds, cyclicity, gate consistency
        let mut excl_ok = true;
        let mut soc_ok = true;
        let mut max_cycle = 0.0f64;
        for (e, ess) in net.ess.iter().enumerate() {
            for t in 0..HOURS {
                if ms.ess_charging[t][e] && ms.ess_discharging[t][e] {
                    excl_ok = false;
                }
                let soc = ms.ess_soc[t][e];
                if soc < -1e-9 || soc > ess.soc_max + 1e-9 {
                    soc_ok = false;
                }
                if ms.ess_charge[t][e] > ess.p_max + 1e-9
                    || ms.ess_discharge[t][e] > ess.p_max + 1e-9
                {
                    soc_ok = false;
                }
            }
            max_cycle = max_cycle.max((ms.ess_soc[HOURS - 1][e] - ess.soc_initial).abs());
        }
        if !net.ess.is_empty() {
            rep.add("ess-exclusivity", excl_ok, mode.to_string());
            rep.add("ess-soc-bounds", soc_ok, mode.to_string());
            rep.add(
                "ess-cyclic",
                max_cycle <= tols.soc_cycle,
                format!("{mode}: |SOC(24) - SOC(0)| = {max_cycle:.2e}"),
            );
        }

        // wind inside availability
        let mut wind_ok = true;
        for (w, wt) in net.wind.iter().enumerate() {
            for t in 0..HOURS {
                let v = ms.wind_p[t][w];
                if v < -1e-9 || v > wt.avail[t] + 1e-9 {
                    wind_ok = false;
                }
            }
        }
        if !net.wind.is_empty() {
            rep.add("wind-cap", wind_ok, mode.to_string());
        }

        // DG wedge and disc
        let mut max_dg_err = 0.0f64;
        for (d, dg) in net.dg.iter().enumerate() {
            let pf = match ms.mode {
                Mode::Normal => dg.pf_normal,
                Mode::Emergency => dg.pf_emergency,
            };
            let tan_phi = pf.acos().tan();
            for t in 0..HOURS {
                let (p, q) = (ms.dg_p[t][d], ms.dg_q[t][d]);
                max_dg_err = max_dg_err.max(q.abs() - tan_phi * p);
                max_dg_err = max_dg_err.max(p * p + q * q - dg.s_max * dg.s_max);
            }
        }
        if !net.dg.is_empty() {
            rep.add(
                "dg-capability",
                max_dg_err <= tols.dg_capability,
                format!("{mode}: max excess {max_dg_err:.2e}"),
            );
        }

        // cone exactness on closed lines
        let mut max_slack = 0.0f64;
        for t in 0..HOURS {
            for l in 0..net.n_lines() {
                if ms.line_closed[l] {
                    max_slack = max_slack.max(ms.cone_slack[t][l]);
                }
            }
        }
        rep.max_cone_slack = rep.max_cone_slack.max(max_slack);
        rep.add(
            "cone-exactness",
            max_slack <= tols.cone_slack,
            format!("{mode}: max J U - (P^2 + Q^2) = {max_slack:.2e}"),
        );

        // independent physics: sweep power flow per hour on the fixed
        // topology and dispatch
        if verdict.is_radial() {
            let lines: Vec<SweepLine> = net
                .lines
                .iter()
                .enumerate()
                .filter(|(l, _)| ms.line_closed[*l])
                .map(|(_, l)| SweepLine {
                    from: l.from,
                    to: l.to,
                    r: l.r,
                    x: l.x,
                })
                .collect();
            let line_index: Vec<usize> = (0..net.n_lines())
                .filter(|&l| ms.line_closed[l])
                .collect();
            let root = match ms.mode {
                Mode::Normal => net.slack,
                Mode::Emergency => net.dg[ms.grid_former.unwrap_or(0)].bus,
            };
            let mut max_dv = 0.0f64;
            let mut max_loss_diff = 0.0f64;
            let mut all_converged = true;
            for t in 0..HOURS {
                let inj = injections(net, ms, t);
                let pf = sweep_power_flow(
                    &topo,
                    &lines,
                    &inj,
                    root,
                    ms.voltage[t][root],
                    1e-10,
                    100,
                )
                .ok();
                let Some(pf) = pf else {
                    all_converged = false;
                    continue;
                };
                if !pf.converged {
                    all_converged = false;
                    continue;
                }
                for i in 0..net.n_buses() {
                    max_dv = max_dv.max((pf.v_mag[i] - ms.voltage[t][i]).abs());
                }
                let model_loss: f64 = line_index
                    .iter()
                    .map(|&l| net.lines[l].r * ms.current[t][l] * ms.current[t][l])
                    .sum();
                let rel = (pf.total_loss - model_loss).abs() / model_loss.abs().max(1e-9);
                max_loss_diff = max_loss_diff.max(rel);
            }
            rep.max_voltage_gap = rep.max_voltage_gap.max(max_dv);
            rep.max_loss_rel_diff = rep.max_loss_rel_diff.max(max_loss_diff);
            rep.add(
                "sweep-convergence",
                all_converged,
                mode.to_string(),
            );
            rep.add(
                "sweep-voltage",
                max_dv <= tols.sweep_voltage,
                format!("{mode}: max |V_model - V_sweep| = {max_dv:.2e}"),
            );
            rep.add(
                "sweep-loss",
                max_loss_diff <= tols.sweep_loss_rel,
                format!("{mode}: max relative loss gap {max_loss_diff:.2e}"),
            );
        }
    }

    rep
}
