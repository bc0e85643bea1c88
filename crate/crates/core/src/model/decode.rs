//! Decoding of solver points into physical schedules.

use super::*;
use crate::case::HOURS;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("point has {got} entries, instance has {want} columns")]
    Dimension { got: usize, want: usize },
    #[error("binary column {col} has fractional value {value}")]
    FractionalBinary { col: u32, value: f64 },
    #[error("squared quantity at column {col} is negative: {value}")]
    NegativeSquare { col: u32, value: f64 },
}

/// Per-mode decoded schedule. Indexing is `[hour][element]`; hours 0..23.
#[derive(Debug, Clone)]
pub struct ModeSchedule {
    pub mode: Mode,
    pub voltage: Vec<Vec<f64>>,
    pub current: Vec<Vec<f64>>,
    pub flow_p: Vec<Vec<f64>>,
    pub flow_q: Vec<Vec<f64>>,
    pub hypo_flow: Vec<Vec<f64>>,
    pub line_closed: Vec<bool>,
    pub sub_p: Vec<f64>,
    pub sub_q: Vec<f64>,
    pub dg_p: Vec<Vec<f64>>,
    pub dg_q: Vec<Vec<f64>>,
    pub wind_p: Vec<Vec<f64>>,
    pub ess_charge: Vec<Vec<f64>>,
    pub ess_discharge: Vec<Vec<f64>>,
    pub ess_soc: Vec<Vec<f64>>,
    pub ess_charging: Vec<Vec<bool>>,
    pub ess_discharging: Vec<Vec<bool>>,
    pub shed_p: Vec<Vec<f64>>,
    pub shed_q: Vec<Vec<f64>>,
    /// Grid-forming DG index (emergency mode only).
    pub grid_former: Option<usize>,
    /// Exactness slack `J U_from - (P^2 + Q^2)` per `[hour][line]`.
    pub cone_slack: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub modes: Vec<ModeSchedule>,
}

impl Schedule {
    pub fn mode(&self, m: Mode) -> Option<&ModeSchedule> {
        self.modes.iter().find(|s| s.mode == m)
    }
}

/// Decode a solver point: voltages and currents are recovered as square
/// roots of the squared model quantities, switch statuses are rounded, and
/// flows on open lines are gated to exact zeros.
pub fn extract_solution(
    instance: &ModelInstance,
    point: &[f64],
) -> Result<Schedule, DecodeError> {
    if point.len() != instance.n_cols {
        return Err(DecodeError::Dimension {
            got: point.len(),
            want: instance.n_cols,
        });
    }
    for c in instance.integer_columns() {
        let v = point[c as usize];
        if (v - v.round()).abs() > 1e-6 {
            return Err(DecodeError::FractionalBinary { col: c, value: v });
        }
    }

    let n = instance.vars.n_buses;
    let nl = instance.vars.n_lines;
    let ndg = instance.vars.n_dg;
    let ness = instance.vars.n_ess;
    let nw = instance.vars.n_wind;

    let sqrt_checked = |col: u32| -> Result<f64, DecodeError> {
        let v = point[col as usize];
        if v < -1e-9 {
            return Err(DecodeError::NegativeSquare { col, value: v });
        }
        Ok(v.max(0.0).sqrt())
    };

    let mut modes = Vec::new();
    for &m in &instance.modes {
        let mv = instance.vars.mode(m);
        let line_closed: Vec<bool> = (0..nl)
            .map(|l| point[mv.x[l] as usize] > 0.5)
            .collect();
        let mut voltage = vec![vec![0.0; n]; HOURS];
        let mut current = vec![vec![0.0; nl]; HOURS];
        let mut flow_p = vec![vec![0.0; nl]; HOURS];
        let mut flow_q = vec![vec![0.0; nl]; HOURS];
        let mut hypo_flow = vec![vec![0.0; nl]; HOURS];
        let mut cone_slack = vec![vec![0.0; nl]; HOURS];
        for t in 0..HOURS {
            for i in 0..n {
                voltage[t][i] = sqrt_checked(instance.vars.u(m, t, i))?;
            }
            for l in 0..nl {
                if line_closed[l] {
                    current[t][l] = sqrt_checked(instance.vars.j(m, t, l))?;
                    flow_p[t][l] = point[instance.vars.p(m, t, l) as usize];
                    flow_q[t][l] = point[instance.vars.q(m, t, l) as usize];
                    hypo_flow[t][l] = point[instance.vars.h(m, t, l) as usize];
                    let from = instance.net.lines[l].from;
                    let ju = point[instance.vars.j(m, t, l) as usize]
                        * point[instance.vars.u(m, t, from) as usize];
                    cone_slack[t][l] =
                        ju - flow_p[t][l] * flow_p[t][l] - flow_q[t][l] * flow_q[t][l];
                }
                // open lines carry nothing by the switch-gating rows
            }
        }
        let grab = |cols: &[u32], count: usize| -> Vec<Vec<f64>> {
            (0..HOURS)
                .map(|t| (0..count).map(|e| point[cols[t * count + e] as usize]).collect())
                .collect()
        };
        let sub_p: Vec<f64> = if m == Mode::Normal {
            (0..HOURS).map(|t| point[mv.pg[t] as usize]).collect()
        } else {
            vec![0.0; HOURS]
        };
        let sub_q: Vec<f64> = if m == Mode::Normal {
            (0..HOURS).map(|t| point[mv.qg[t] as usize]).collect()
        } else {
            vec![0.0; HOURS]
        };
        let shed_p = if m == Mode::Emergency {
            grab(&mv.plsh, n)
        } else {
            vec![vec![0.0; n]; HOURS]
        };
        let shed_q = if m == Mode::Emergency {
            grab(&mv.qlsh, n)
        } else {
            vec![vec![0.0; n]; HOURS]
        };
        let grid_former = if m == Mode::Emergency {
            (0..ndg).find(|&d| point[mv.dg_a[d] as usize] > 0.5)
        } else {
            None
        };
        let mut ess_charging = vec![vec![false; ness]; HOURS];
        let mut ess_discharging = vec![vec![false; ness]; HOURS];
        for t in 0..HOURS {
            for e in 0..ness {
                ess_charging[t][e] = point[instance.vars.ich(m, t, e) as usize] > 0.5;
                ess_discharging[t][e] = point[instance.vars.idch(m, t, e) as usize] > 0.5;
            }
        }

        modes.push(ModeSchedule {
            mode: m,
            voltage,
            current,
            flow_p,
            flow_q,
            hypo_flow,
            line_closed,
            sub_p,
            sub_q,
            dg_p: grab(&mv.pdg, ndg),
            dg_q: grab(&mv.qdg, ndg),
            wind_p: grab(&mv.pwt, nw),
            ess_charge: grab(&mv.pc, ness),
            ess_discharge: grab(&mv.pd, ness),
            ess_soc: grab(&mv.soc, ness),
            ess_charging,
            ess_discharging,
            shed_p,
            shed_q,
            grid_former,
            cone_slack,
        });
    }
    Ok(Schedule { modes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{load_case, to_per_unit};
    use crate::model::{build_model, BuildOptions, ModeSet};

    /// A hand-assembled feasible point for the 2-bus case in normal mode
    /// from the closed-form power flow.
    fn feasible_point(inst: &ModelInstance) -> Vec<f64> {
        let mut x = vec![0.0; inst.n_cols];
        let v2 = (1.0 + 0.8f64.sqrt()) / 2.0;
        let u2 = v2 * v2;
        let flow = 0.5 + 0.1 * (0.5 / v2).powi(2);
        let j = (0.5 / v2).powi(2);
        let vars = &inst.vars;
        x[vars.x(Mode::Normal, 0) as usize] = 1.0;
        for t in 0..HOURS {
            x[vars.u(Mode::Normal, t, 0) as usize] = 1.0;
            x[vars.u(Mode::Normal, t, 1) as usize] = u2;
            x[vars.j(Mode::Normal, t, 0) as usize] = j;
            x[vars.p(Mode::Normal, t, 0) as usize] = flow;
            x[vars.normal.pg[t] as usize] = flow;
            x[vars.h(Mode::Normal, t, 0) as usize] = 0.5;
            x[vars.normal.g[t] as usize] = 0.5;
        }
        x
    }

    #[test]
    fn decode_recovers_voltages_and_gates_open_lines() {
        let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
        let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
        let x = feasible_point(&inst);
        let sched = extract_solution(&inst, &x).unwrap();
        let ms = sched.mode(Mode::Normal).unwrap();
        assert!((ms.voltage[0][0] - 1.0).abs() < 1e-12);
        assert!((ms.voltage[0][1] - 0.9472135955).abs() < 1e-9);
        assert!(ms.line_closed[0]);
        // normal mode decodes zero shedding by construction
        assert!(ms.shed_p.iter().all(|row| row.iter().all(|&v| v == 0.0)));
        // cone slack at the exact physics point is ~ 0
        assert!(ms.cone_slack[0][0].abs() < 1e-9);
    }

    #[test]
    fn open_line_entries_are_exact_zeros() {
        let net = to_per_unit(&load_case("6bus").unwrap()).unwrap();
        let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
        let mut x = vec![0.0; inst.n_cols];
        // mark a switchable line open with stray LP noise on its flow
        let l = 3; // line 2-3, switchable
        x[inst.vars.p(Mode::Normal, 0, l) as usize] = 1e-12;
        x[inst.vars.j(Mode::Normal, 0, l) as usize] = 1e-13;
        for i in 0..inst.vars.n_buses {
            for t in 0..HOURS {
                x[inst.vars.u(Mode::Normal, t, i) as usize] = 1.0;
            }
        }
        let sched = extract_solution(&inst, &x).unwrap();
        let ms = sched.mode(Mode::Normal).unwrap();
        assert!(!ms.line_closed[l]);
        assert_eq!(ms.flow_p[0][l], 0.0);
        assert_eq!(ms.current[0][l], 0.0);
    }

    #[test]
    fn fractional_binary_is_rejected() {
        let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
        let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
        let mut x = feasible_point(&inst);
        x[inst.vars.x(Mode::Normal, 0) as usize] = 0.4;
        assert!(matches!(
            extract_solution(&inst, &x),
            Err(DecodeError::FractionalBinary { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
        let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
        assert!(matches!(
            extract_solution(&inst, &[0.0; 3]),
            Err(DecodeError::Dimension { .. })
        ));
    }

    #[test]
    fn negative_square_is_rejected() {
        let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
        let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
        let mut x = feasible_point(&inst);
        x[inst.vars.u(Mode::Normal, 3, 1) as usize] = -1e-6;
        assert!(matches!(
            extract_solution(&inst, &x),
            Err(DecodeError::NegativeSquare { .. })
        ));
    }
}
