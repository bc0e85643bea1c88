//! Objective assembly and the resiliency index.
//!
//! The combined objective normalizes each mode's raw energy term by its
//! single-objective optimum, so the two-term sum equals 2.0 exactly when
//! both terms reach their individual optima. Normalizers below the floor
//! fall back to the raw (unnormalized) term.

use super::*;
use crate::case::{NetworkCase, HOURS};

/// Below this value a normalizer is considered degenerate and the term is
/// used unnormalized.
pub const NORMALIZER_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveSplit {
    /// Daily loss energy in normal mode, MWh.
    pub of1_mwh: f64,
    /// Daily shed energy in emergency mode, MWh.
    pub of2_mwh: f64,
    pub of1_opt_mwh: f64,
    pub of2_opt_mwh: f64,
    /// Normalized two-term objective value.
    pub of: f64,
    /// Share of daily load energy served in emergency mode, percent.
    pub ri_percent: f64,
}

/// Loss energy of the normal mode at a point, in MWh: the hourly I^2 R sums
/// over all lines times the 1 h step.
pub fn loss_energy_mwh(instance: &ModelInstance, point: &[f64]) -> Result<f64, ModelError> {
    if !instance.has_mode(Mode::Normal) {
        return Err(ModelError::ModeNotBuilt(Mode::Normal));
    }
    let mut total = 0.0;
    for t in 0..HOURS {
        for (l, line) in instance.net.lines.iter().enumerate() {
            total += line.r * point[instance.vars.j(Mode::Normal, t, l) as usize];
        }
    }
    Ok(total * instance.base_mva)
}

/// Shed energy of the emergency mode at a point, in MWh.
pub fn shed_energy_mwh(instance: &ModelInstance, point: &[f64]) -> Result<f64, ModelError> {
    if !instance.has_mode(Mode::Emergency) {
        return Err(ModelError::ModeNotBuilt(Mode::Emergency));
    }
    let n = instance.vars.n_buses;
    let mut total = 0.0;
    for t in 0..HOURS {
        for i in 0..n {
            total += point[instance.vars.emergency.plsh[t * n + i] as usize];
        }
    }
    Ok(total * instance.base_mva)
}

/// Set the objective to the raw loss energy of the normal mode (MWh).
pub fn set_loss_objective(instance: &mut ModelInstance) -> Result<(), ModelError> {
    if !instance.has_mode(Mode::Normal) {
        return Err(ModelError::ModeNotBuilt(Mode::Normal));
    }
    instance.obj = vec![0.0; instance.n_cols];
    for t in 0..HOURS {
        for (l, line) in instance.net.lines.iter().enumerate() {
            instance.obj[instance.vars.j(Mode::Normal, t, l) as usize] =
                line.r * instance.base_mva;
        }
    }
    Ok(())
}

/// Set the objective to the raw shed energy of the emergency mode (MWh).
pub fn set_shed_objective(instance: &mut ModelInstance) -> Result<(), ModelError> {
    if !instance.has_mode(Mode::Emergency) {
        return Err(ModelError::ModeNotBuilt(Mode::Emergency));
    }
    instance.obj = vec![0.0; instance.n_cols];
    let n = instance.vars.n_buses;
    for t in 0..HOURS {
        for i in 0..n {
            instance.obj[instance.vars.emergency.plsh[t * n + i] as usize] = instance.base_mva;
        }
    }
    Ok(())
}

/// Install the normalized two-term objective: loss energy over its optimum
/// plus shed energy over its optimum. A degenerate normalizer (below
/// [`NORMALIZER_FLOOR`]) leaves that term unnormalized.
pub fn assemble_objective(
    instance: &mut ModelInstance,
    of1_opt_mwh: f64,
    of2_opt_mwh: f64,
) -> Result<(), ModelError> {
    instance.obj = vec![0.0; instance.n_cols];
    if instance.has_mode(Mode::Normal) {
        let scale = if of1_opt_mwh >= NORMALIZER_FLOOR {
            1.0 / of1_opt_mwh
        } else {
            1.0
        };
        for t in 0..HOURS {
            for (l, line) in instance.net.lines.iter().enumerate() {
                instance.obj[instance.vars.j(Mode::Normal, t, l) as usize] =
                    line.r * instance.base_mva * scale;
            }
        }
    }
    if instance.has_mode(Mode::Emergency) {
        let scale = if of2_opt_mwh >= NORMALIZER_FLOOR {
            1.0 / of2_opt_mwh
        } else {
            1.0
        };
        let n = instance.vars.n_buses;
        for t in 0..HOURS {
            for i in 0..n {
                instance.obj[instance.vars.emergency.plsh[t * n + i] as usize] =
                    instance.base_mva * scale;
            }
        }
    }
    Ok(())
}

/// Resiliency index from raw energies: percentage of the total daily load
/// energy that stays served under the emergency schedule.
pub fn resiliency_index(of2_mwh: f64, total_load_mwh: f64) -> Result<f64, ModelError> {
    if total_load_mwh <= 0.0 {
        return Err(ModelError::NonPositiveLoad(total_load_mwh));
    }
    Ok((total_load_mwh - of2_mwh) / total_load_mwh * 100.0)
}

/// Resiliency index with the total load energy taken from the case profile.
pub fn compute_resiliency_index(of2_mwh: f64, case: &NetworkCase) -> Result<f64, ModelError> {
    resiliency_index(of2_mwh, case.total_load_energy_mwh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{load_case, to_per_unit};
    use crate::model::{build_model, BuildOptions, ModeSet};

    #[test]
    fn resiliency_reference_points() {
        // reported-value consistency: of2 = 38.879 MWh against a 68.06 MWh
        // daily total gives 42.875 percent
        let ri = resiliency_index(38.879, 68.06).unwrap();
        assert!((ri - 42.875).abs() < 0.01, "ri = {ri}");
        assert_eq!(resiliency_index(0.0, 68.06).unwrap(), 100.0);
        assert_eq!(resiliency_index(68.06, 68.06).unwrap(), 0.0);
        assert!(resiliency_index(1.0, 0.0).is_err());
    }

    #[test]
    fn ieee33_case_total_feeds_the_index() {
        let case = load_case("ieee33").unwrap();
        let total = case.total_load_energy_mwh();
        assert!((total - 68.0588).abs() < 1e-9, "total = {total}");
        let ri = compute_resiliency_index(38.879, &case).unwrap();
        assert!((ri - 42.875).abs() < 0.01, "ri = {ri}");
    }

    #[test]
    fn normalized_objective_is_two_at_the_optima() {
        // evaluate the assembled objective at a synthetic point whose raw
        // energies equal the normalizers
        let net = to_per_unit(&load_case("ieee33").unwrap()).unwrap();
        let mut inst = build_model(&net, ModeSet::Both, &BuildOptions::default()).unwrap();
        let mut point = vec![0.0; inst.n_cols];
        // spread some current over normal mode and shedding over emergency
        for t in 0..HOURS {
            for l in 0..net.n_lines() {
                point[inst.vars.j(Mode::Normal, t, l) as usize] = 0.01 * (l as f64 + 1.0);
            }
            for i in 0..net.n_buses() {
                point[inst.vars.emergency.plsh[t * net.n_buses() + i] as usize] =
                    0.002 * (i as f64);
            }
        }
        let of1 = loss_energy_mwh(&inst, &point).unwrap();
        let of2 = shed_energy_mwh(&inst, &point).unwrap();
        assert!(of1 > 0.0 && of2 > 0.0);
        assemble_objective(&mut inst, of1, of2).unwrap();
        let of: f64 = inst
            .obj
            .iter()
            .zip(&point)
            .map(|(c, v)| c * v)
            .sum();
        assert!((of - 2.0).abs() < 1e-9, "of = {of}");

        // doubling both normalizers halves the objective value
        assemble_objective(&mut inst, 2.0 * of1, 2.0 * of2).unwrap();
        let of_half: f64 = inst.obj.iter().zip(&point).map(|(c, v)| c * v).sum();
        assert!((of_half - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_normalizer_falls_back_to_raw_term() {
        let net = to_per_unit(&load_case("ieee33").unwrap()).unwrap();
        let mut inst = build_model(&net, ModeSet::Both, &BuildOptions::default()).unwrap();
        let mut point = vec![0.0; inst.n_cols];
        for t in 0..HOURS {
            point[inst.vars.j(Mode::Normal, t, 0) as usize] = 1.0;
            point[inst.vars.emergency.plsh[t * net.n_buses() + 1] as usize] = 0.5;
        }
        let of1 = loss_energy_mwh(&inst, &point).unwrap();
        let of2 = shed_energy_mwh(&inst, &point).unwrap();
        // zero loss normalizer: term enters unnormalized
        assemble_objective(&mut inst, 0.0, of2).unwrap();
        let of: f64 = inst.obj.iter().zip(&point).map(|(c, v)| c * v).sum();
        assert!((of - (of1 + 1.0)).abs() < 1e-9, "of = {of}, of1 = {of1}");
    }

    #[test]
    fn single_mode_objectives_require_their_mode() {
        let net = to_per_unit(&load_case("ieee33").unwrap()).unwrap();
        let mut c1 = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
        assert!(set_loss_objective(&mut c1).is_ok());
        assert!(set_shed_objective(&mut c1).is_err());
        let mut c2 = build_model(&net, ModeSet::Emergency, &BuildOptions::default()).unwrap();
        assert!(set_shed_objective(&mut c2).is_ok());
        assert!(set_loss_objective(&mut c2).is_err());
    }
}
