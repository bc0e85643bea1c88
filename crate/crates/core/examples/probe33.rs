//! Timing probe: normal-mode pre-solve of the 33-bus case.

use resilflow_core::case::{load_case, to_per_unit};
use resilflow_core::model::{build_model, set_loss_objective, set_shed_objective, BuildOptions, ModeSet};
use resilflow_core::solver::lp::LpCore;
use resilflow_core::solver::{solve, SolverOptions};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "normal".into());
    let gap: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1e-3);
    let net = to_per_unit(&load_case("ieee33").unwrap()).unwrap();
    let modes = match which.as_str() {
        "normal" => ModeSet::Normal,
        "emergency" => ModeSet::Emergency,
        _ => ModeSet::Both,
    };
    let mut inst = build_model(&net, modes, &BuildOptions::default()).unwrap();
    match modes {
        ModeSet::Normal => set_loss_objective(&mut inst).unwrap(),
        ModeSet::Emergency => set_shed_objective(&mut inst).unwrap(),
        _ => {}
    }
    eprintln!(
        "instance: {} cols, {} rows, {} cones, {} binaries",
        inst.n_cols,
        inst.rows.len(),
        inst.cones.len(),
        inst.n_integer()
    );
    if std::env::var("LP_ONLY").is_ok() {
        let t0 = std::time::Instant::now();
        let mut lp = LpCore::new(inst.obj.clone(), inst.col_lb.clone(), inst.col_ub.clone());
        for row in &inst.rows {
            lp.add_row(row.lb, row.ub, &row.coeffs);
        }
        if std::env::var("SEEDS").is_ok() {
            for (id, cone) in inst.cones.iter().enumerate() {
                for cut in resilflow_core::solver::cuts::seed_cuts(cone, id, 8) {
                    lp.add_row(f64::NEG_INFINITY, cut.rhs, &cut.coeffs);
                }
            }
        }
        let status = lp.solve().unwrap();
        if std::env::var("CUTLOOP").is_ok() {
            let mut round = 0;
            loop {
                round += 1;
                let point: Vec<f64> = (0..inst.n_cols).map(|c| lp.value(c)).collect();
                let mut added = 0;
                for (id, cone) in inst.cones.iter().enumerate() {
                    if let Some(cut) = resilflow_core::solver::cuts::separate_cone_cut(cone, id, &point, 1e-6) {
                        lp.add_row(f64::NEG_INFINITY, cut.rhs, &cut.coeffs);
                        added += 1;
                    }
                }
                eprintln!("round {round}: +{added} cuts, obj {:.6}, pivots {}", lp.objective(), lp.pivots);
                if added == 0 || round > 60 { break; }
                lp.solve().unwrap();
            }
        }
        eprintln!(
            "root LP (no seeds): {:?} obj {:.6} pivots {} refactors {} lu {:.1}s total {:.1}s",
            status,
            lp.objective(),
            lp.pivots,
            lp.refactors,
            lp.lu_seconds,
            t0.elapsed().as_secs_f64()
        );
        return;
    }
    let t0 = std::time::Instant::now();
    let opts = SolverOptions {
        rel_gap_tol: gap,
        time_limit_s: Some(600.0),
        keep_node_log: false,
        ..Default::default()
    };
    let res = solve(&inst, &opts).unwrap();
    eprintln!(
        "status {:?} obj {:?} bound {:.6} gap {:.2e} nodes {} cuts {} in {:.1}s",
        res.status,
        res.incumbent_objective,
        res.best_bound,
        res.rel_gap,
        res.nodes,
        res.cuts_added,
        t0.elapsed().as_secs_f64()
    );
}
