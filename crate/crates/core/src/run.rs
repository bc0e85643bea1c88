//! End-to-end pipeline: normalizer pre-solves, the joint solve, the
//! loss-minimal polish, decoding and the objective summary.

use crate::case::PuNetwork;
use crate::model::{
    assemble_objective, build_model, extract_solution, loss_energy_mwh, set_loss_objective,
    set_shed_objective, shed_energy_mwh, BuildOptions, Mode, ModeSet, ModelError, ModelInstance,
    ObjectiveSplit, Schedule,
};
use crate::solver::{self, SolveResult, SolveStatus, SolverOptions};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] solver::SolveError),
    #[error(transparent)]
    Decode(#[from] crate::model::DecodeError),
    #[error("pre-solve for {mode:?} ended {status:?} without an incumbent")]
    PresolveFailed { mode: Mode, status: SolveStatus },
    #[error("joint solve ended {status:?} without an incumbent")]
    NoIncumbent { status: SolveStatus },
}

/// Everything a solve run produces: the joint instance, solver result,
/// polished point, decoded schedule and the objective summary.
#[derive(Debug)]
pub struct RunArtifacts {
    pub instance: ModelInstance,
    pub result: SolveResult,
    pub point: Vec<f64>,
    pub schedule: Schedule,
    pub split: ObjectiveSplit,
    pub presolve_nodes: u64,
    pub runtime_s: f64,
}

/// Objective normalizers: the two single-objective optima, each obtained by
/// a full solve of its mode alone.
pub fn objective_normalizers(
    net: &PuNetwork,
    build: &BuildOptions,
    opts: &SolverOptions,
    modes: ModeSet,
) -> Result<(Option<f64>, Option<f64>, u64), RunError> {
    let mut nodes = 0u64;
    let mut of1 = None;
    let mut of2 = None;
    if matches!(modes, ModeSet::Normal | ModeSet::Both) {
        let mut inst = build_model(net, ModeSet::Normal, build)?;
        set_loss_objective(&mut inst)?;
        let res = solver::solve(&inst, opts)?;
        nodes += res.nodes;
        match (&res.incumbent, res.status) {
            (Some(point), _) => of1 = Some(loss_energy_mwh(&inst, point)?),
            (None, status) => {
                return Err(RunError::PresolveFailed {
                    mode: Mode::Normal,
                    status,
                })
            }
        }
    }
    if matches!(modes, ModeSet::Emergency | ModeSet::Both) {
        let mut inst = build_model(net, ModeSet::Emergency, build)?;
        set_shed_objective(&mut inst)?;
        let res = solver::solve(&inst, opts)?;
        nodes += res.nodes;
        match (&res.incumbent, res.status) {
            (Some(point), _) => of2 = Some(shed_energy_mwh(&inst, point)?),
            (None, status) => {
                return Err(RunError::PresolveFailed {
                    mode: Mode::Emergency,
                    status,
                })
            }
        }
    }
    Ok((of1, of2, nodes))
}

/// Loss-minimal polish: with binaries fixed at the incumbent and the
/// emergency shed total capped at its achieved value, re-minimize the total
/// I^2 R losses of every built mode with a tight cone tolerance. This picks
/// the physically exact point among the alternate optima (the cone blocks
/// end up tight) without changing the objective split.
pub fn polish(
    instance: &ModelInstance,
    point: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<f64>, RunError> {
    let mut fixed = instance.clone();
    for c in instance.integer_columns() {
        let v = point[c as usize].round();
        fixed.col_lb[c as usize] = v;
        fixed.col_ub[c as usize] = v;
    }
    // loss objective over every built mode
    fixed.obj = vec![0.0; fixed.n_cols];
    for &m in &instance.modes.clone() {
        for t in 0..crate::case::HOURS {
            for (l, line) in instance.net.lines.iter().enumerate() {
                fixed.obj[fixed.vars.j(m, t, l) as usize] = line.r;
            }
        }
    }
    // cap the emergency shed total at its achieved value
    if instance.has_mode(Mode::Emergency) {
        let shed_total: f64 = {
            let n = instance.vars.n_buses;
            let mut s = 0.0;
            for t in 0..crate::case::HOURS {
                for i in 0..n {
                    s += point[instance.vars.emergency.plsh[t * n + i] as usize];
                }
            }
            s
        };
        let n = instance.vars.n_buses;
        let mut coeffs = Vec::with_capacity(24 * n);
        for t in 0..crate::case::HOURS {
            for i in 0..n {
                coeffs.push((instance.vars.emergency.plsh[t * n + i], 1.0));
            }
        }
        fixed.rows.push(crate::model::Row {
            lb: f64::NEG_INFINITY,
            ub: shed_total + 1e-9,
            coeffs,
            kind: crate::model::RowKind {
                family: crate::model::RowFamily::ObjectiveCap,
                mode: Some(Mode::Emergency),
                hour: None,
                element: None,
            },
        });
    }
    let polish_opts = SolverOptions {
        cone_feas_tol: opts.cone_feas_tol.min(1e-9),
        rel_gap_tol: 1e-9,
        ..opts.clone()
    };
    let res = solver::solve(&fixed, &polish_opts)?;
    match res.incumbent {
        Some(p) => Ok(p),
        None => Err(RunError::NoIncumbent { status: res.status }),
    }
}

/// Full pipeline on a per-unit network: normalizer pre-solves, the joint
/// solve warm-started from the pre-solve optima, the polish pass and the
/// decoded schedule.
pub fn solve_case(
    net: &PuNetwork,
    modes: ModeSet,
    build: &BuildOptions,
    opts: &SolverOptions,
) -> Result<RunArtifacts, RunError> {
    let t0 = std::time::Instant::now();
    let (of1_opt, of2_opt, presolve_nodes) = objective_normalizers(net, build, opts, modes)?;

    let mut instance = build_model(net, modes, build)?;
    assemble_objective(
        &mut instance,
        of1_opt.unwrap_or(0.0),
        of2_opt.unwrap_or(0.0),
    )?;
    let result = solver::solve(&instance, opts)?;
    let point = match &result.incumbent {
        Some(p) => p.clone(),
        None => {
            return Err(RunError::NoIncumbent {
                status: result.status,
            })
        }
    };
    let point = polish(&instance, &point, opts)?;
    let schedule = extract_solution(&instance, &point)?;

    // objective split; when blocks decouple the joint per-mode optima are
    // also the single-objective optima, so the normalizers take the better
    // of the two values
    let of1 = if instance.has_mode(Mode::Normal) {
        loss_energy_mwh(&instance, &point)?
    } else {
        0.0
    };
    let of2 = if instance.has_mode(Mode::Emergency) {
        shed_energy_mwh(&instance, &point)?
    } else {
        0.0
    };
    let of1_opt_final = of1_opt.map(|v| v.min(of1)).unwrap_or(0.0);
    let of2_opt_final = of2_opt.map(|v| v.min(of2)).unwrap_or(0.0);
    let norm = |val: f64, opt: f64, built: bool| -> f64 {
        if !built {
            0.0
        } else if opt >= crate::model::NORMALIZER_FLOOR {
            val / opt
        } else {
            val
        }
    };
    let of = norm(of1, of1_opt_final, instance.has_mode(Mode::Normal))
        + norm(of2, of2_opt_final, instance.has_mode(Mode::Emergency));
    let ri = crate::model::compute_resiliency_index(of2, &net.case)?;
    let split = ObjectiveSplit {
        of1_mwh: of1,
        of2_mwh: of2,
        of1_opt_mwh: of1_opt_final,
        of2_opt_mwh: of2_opt_final,
        of,
        ri_percent: ri,
    };

    Ok(RunArtifacts {
        instance,
        result,
        point,
        schedule,
        split,
        presolve_nodes,
        runtime_s: t0.elapsed().as_secs_f64(),
    })
}
