//! Solver behavior on small cases with hand-solvable optima.

use resilflow_core::case::{load_case, to_per_unit};
use resilflow_core::model::{
    build_model, extract_solution, loss_energy_mwh, set_loss_objective, BuildOptions, Mode,
    ModeSet,
};
use resilflow_core::solver::{
    evaluate_incumbent, select_branch_var, solve, solve_relaxation, BBNode, SolveStatus,
    SolverOptions,
};

/// Closed-form two-bus quantities: V2, J, hourly loss.
fn two_bus_truth() -> (f64, f64, f64) {
    let v2 = (1.0 + 0.8f64.sqrt()) / 2.0;
    let i = 0.5 / v2;
    (v2, i * i, 0.1 * i * i)
}

#[test]
fn two_bus_normal_solve_matches_closed_form() {
    let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
    let mut inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
    set_loss_objective(&mut inst).unwrap();
    let opts = SolverOptions {
        cone_feas_tol: 1e-9,
        ..Default::default()
    };
    let res = solve(&inst, &opts).unwrap();
    assert_eq!(res.status, SolveStatus::Optimal);
    assert!(res.rel_gap <= 1e-9, "gap {}", res.rel_gap);
    let point = res.incumbent.as_ref().unwrap();

    let (v2, j, hourly_loss) = two_bus_truth();
    // line must be closed
    assert!(point[inst.vars.x(Mode::Normal, 0) as usize] > 0.5);
    // objective = 24 hourly losses
    let of1 = loss_energy_mwh(&inst, point).unwrap();
    assert!(
        (of1 - 24.0 * hourly_loss).abs() < 1e-5,
        "of1 {} vs {}",
        of1,
        24.0 * hourly_loss
    );
    // decoded voltages and currents match the closed form
    let sched = extract_solution(&inst, point).unwrap();
    let ms = sched.mode(Mode::Normal).unwrap();
    for t in 0..24 {
        assert!((ms.voltage[t][1] - v2).abs() < 1e-5, "V2 at t{t}: {}", ms.voltage[t][1]);
        assert!((ms.current[t][0] - j.sqrt()).abs() < 1e-5);
    }

    // incumbent audit: all violations at zero, cone slack tiny
    let report = evaluate_incumbent(point, &inst, &opts);
    assert!(report.max_fractionality <= 1e-9);
    assert!(report.max_row_violation <= 1e-7, "{report:?}");
    assert!(report.max_bound_violation <= 1e-8);
    assert!(report.max_cone_violation <= 1e-8);
    assert!(report.max_active_cone_slack <= 1e-7, "{report:?}");
}

#[test]
fn infeasible_binary_pattern_reports_infeasible() {
    let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
    let mut inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
    set_loss_objective(&mut inst).unwrap();
    // force the only line open: the cardinality row cannot hold
    let x = inst.vars.x(Mode::Normal, 0) as usize;
    inst.col_lb[x] = 0.0;
    inst.col_ub[x] = 0.0;
    let res = solve(&inst, &SolverOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Infeasible);
    assert!(res.incumbent.is_none());
}

#[test]
fn deterministic_runs_are_bit_identical() {
    let net = to_per_unit(&load_case("6bus").unwrap()).unwrap();
    let mut inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
    set_loss_objective(&mut inst).unwrap();
    let opts = SolverOptions::default();
    let a = solve(&inst, &opts).unwrap();
    let b = solve(&inst, &opts).unwrap();
    assert_eq!(a.status, b.status);
    assert_eq!(a.nodes, b.nodes);
    assert_eq!(a.cuts_added, b.cuts_added);
    assert_eq!(
        a.incumbent_objective.unwrap().to_bits(),
        b.incumbent_objective.unwrap().to_bits()
    );
    assert_eq!(a.best_bound.to_bits(), b.best_bound.to_bits());
    let (pa, pb) = (a.incumbent.unwrap(), b.incumbent.unwrap());
    assert_eq!(pa.len(), pb.len());
    for (x, y) in pa.iter().zip(pb.iter()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    // node order identical
    assert_eq!(a.node_log.len(), b.node_log.len());
    for (la, lb) in a.node_log.iter().zip(&b.node_log) {
        assert_eq!(la.node, lb.node);
        assert_eq!(la.bound.to_bits(), lb.bound.to_bits());
    }
}

#[test]
fn relaxation_bound_below_integer_optimum_and_cuts_monotone() {
    let net = to_per_unit(&load_case("6bus").unwrap()).unwrap();
    let mut inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
    set_loss_objective(&mut inst).unwrap();
    let opts = SolverOptions::default();

    let root = BBNode {
        overrides: vec![],
        parent_bound: f64::NEG_INFINITY,
        depth: 0,
        id: 0,
    };
    let (lp_val, _) = solve_relaxation(&inst, &root, &opts).unwrap().unwrap();
    let full = solve(&inst, &opts).unwrap();
    let mip_val = full.incumbent_objective.unwrap();
    assert!(
        lp_val <= mip_val + 1e-9,
        "relaxation {lp_val} above optimum {mip_val}"
    );

    // node with all binaries fixed to the incumbent tree: still a relaxation
    // of that tree's dispatch
    let point = full.incumbent.as_ref().unwrap();
    let overrides: Vec<(u32, f64, f64)> = inst
        .integer_columns()
        .map(|c| {
            let v = point[c as usize].round();
            (c, v, v)
        })
        .collect();
    let node = BBNode {
        overrides,
        parent_bound: lp_val,
        depth: 1,
        id: 1,
    };
    let (fixed_val, _) = solve_relaxation(&inst, &node, &opts).unwrap().unwrap();
    assert!(fixed_val <= mip_val + 1e-9);
    // more seeded cuts can only raise (never lower) the relaxation value
    let more_cuts = SolverOptions {
        seed_cuts_per_block: 16,
        ..opts.clone()
    };
    let (lp_more, _) = solve_relaxation(&inst, &root, &more_cuts).unwrap().unwrap();
    assert!(lp_more >= lp_val - 1e-9);
}

#[test]
fn branch_selection_rules() {
    let net = to_per_unit(&load_case("6bus").unwrap()).unwrap();
    let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
    let mut point = vec![0.0; inst.n_cols];
    let ints: Vec<u32> = inst.integer_columns().collect();
    // all integral -> none
    assert_eq!(select_branch_var(&point, &inst, 1e-6), None);
    // fractions 0.5 and 0.2 -> the 0.5 one even though it has larger index
    point[ints[2] as usize] = 0.2;
    point[ints[3] as usize] = 0.5;
    assert_eq!(select_branch_var(&point, &inst, 1e-6), Some(ints[3]));
    // tie between 0.4 and 0.6 -> lower column index wins
    point[ints[2] as usize] = 0.0;
    point[ints[3] as usize] = 0.4;
    point[ints[4] as usize] = 0.6;
    assert_eq!(select_branch_var(&point, &inst, 1e-6), Some(ints[3]));
}

#[test]
fn gating_violation_is_reported() {
    let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
    let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
    let mut point = vec![0.0; inst.n_cols];
    for t in 0..24 {
        for i in 0..2 {
            point[inst.vars.u(Mode::Normal, t, i) as usize] = 1.0;
        }
    }
    // switch open but current flowing: the current-cap row must flag it
    point[inst.vars.j(Mode::Normal, 0, 0) as usize] = 0.1;
    let report = evaluate_incumbent(&point, &inst, &SolverOptions::default());
    assert!(report.max_row_violation >= 0.1 - 1e-12, "{report:?}");
}

#[test]
fn slack_cone_is_flagged_as_slack_not_violation() {
    let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
    let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
    let mut point = vec![0.0; inst.n_cols];
    let (v2, j, _) = two_bus_truth();
    let flow = 0.5 + 0.1 * j;
    point[inst.vars.x(Mode::Normal, 0) as usize] = 1.0;
    for t in 0..24 {
        point[inst.vars.u(Mode::Normal, t, 0) as usize] = 1.0;
        point[inst.vars.u(Mode::Normal, t, 1) as usize] = v2 * v2;
        point[inst.vars.p(Mode::Normal, t, 0) as usize] = flow;
        point[inst.vars.normal.pg[t] as usize] = flow;
        point[inst.vars.h(Mode::Normal, t, 0) as usize] = 0.5;
        point[inst.vars.normal.g[t] as usize] = 0.5;
        // oversized current: feasible for the relaxation, physically slack
        point[inst.vars.j(Mode::Normal, t, 0) as usize] = j * 1.5;
    }
    let report = evaluate_incumbent(&point, &inst, &SolverOptions::default());
    assert!(report.max_cone_violation <= 1e-9, "{report:?}");
    assert!(report.max_active_cone_slack > 0.1 * j, "{report:?}");
}
