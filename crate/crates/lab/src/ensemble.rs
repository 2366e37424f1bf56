//! Finite ensemble construction: the solver sweep over viscosities and
//! mollification widths, closure under shift-and-continue at the configured
//! restart times (every viscosity path through the restart tree becomes a
//! member), and seeded solver-path perturbations.
//!
//! Members are "re-headed" onto the shared initial data: the sample at
//! `t = 0` carries the original `(rho_0, m_0)` and the data's field energy,
//! so every member starts from identical data while the mollified evolution
//! begins on the first sample interval.

use crate::config::{Generator, ScenarioConfig};
use crate::rng::XorShift64Star;
use crate::scenario::{build_initial_data, InitialData, ScenarioError};
use rayon::prelude::*;
use semiflow_core::grid::VectorField;
use semiflow_core::selection::Ensemble;
use semiflow_core::solver::{
    integrate_system, mollify_initial_data, SolverConfig, SolverError,
};
use semiflow_core::state::FluidState;
use semiflow_core::trajectory::{continue_at, EnergyProfile, Trajectory, TrajectoryError};
use thiserror::Error;

/// Hard cap on ensemble size at desk scale.
pub const MEMBER_CAP: usize = 64;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Selection(#[from] semiflow_core::selection::SelectionError),
    #[error("restart time {0} does not sit on the sample grid")]
    RestartOffGrid(f64),
    #[error("configured sweep would build {0} members (cap {MEMBER_CAP})")]
    TooManyMembers(usize),
    #[error("every run in the sweep failed; ensemble is empty")]
    EmptyBuild,
}

/// What happened during a build: member provenances and excluded runs.
#[derive(Debug, Clone, Default)]
pub struct BuildLog {
    pub members: Vec<String>,
    pub excluded: Vec<String>,
}

fn effective_smoothings(cfg: &ScenarioConfig) -> Vec<f64> {
    let base = match &cfg.generator {
        Generator::Riemann { smoothing, .. } => *smoothing,
        Generator::PerturbedEnsemble { base, .. } => {
            if let Generator::Riemann { smoothing, .. } = **base {
                smoothing
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    // jump data needs a positive mollification width
    cfg.smoothing_list.iter().map(|&s| s.max(base)).collect()
}

fn solver_config(cfg: &ScenarioConfig, eps: f64, t_end: f64) -> SolverConfig {
    let mut sc = SolverConfig::new(eps, cfg.m_order, cfg.law.clone(), cfg.dt, t_end);
    sc.sample_stride = cfg.sample_stride;
    sc.rho_floor = cfg.rho_floor;
    sc.cfl = cfg.cfl;
    sc
}

/// Segment times of the restart tree inside `(0, horizon)`.
fn segment_bounds(cfg: &ScenarioConfig, horizon: f64) -> Result<Vec<f64>, EnsembleError> {
    let sample_dt = cfg.dt * cfg.sample_stride as f64;
    let mut cuts: Vec<f64> = cfg
        .restart_times
        .iter()
        .copied()
        .filter(|&t| t > 1e-12 && t < horizon - 1e-12)
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("restart times are finite"));
    for &t in &cuts {
        let ratio = t / sample_dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(EnsembleError::RestartOffGrid(t));
        }
    }
    let mut bounds = vec![0.0];
    bounds.extend(cuts);
    bounds.push(horizon);
    Ok(bounds)
}

/// One full viscosity path through the restart tree, glued with the
/// continuation operator at every cut.
fn run_path(
    cfg: &ScenarioConfig,
    data: &InitialData,
    smoothing: f64,
    eps_path: &[f64],
    bounds: &[f64],
) -> Result<Trajectory, EnsembleError> {
    let (mut rho, mut u) = mollify_initial_data(&data.rho, &data.mom, smoothing, &cfg.law)?;
    let mut glued: Option<Trajectory> = None;
    for (seg, window) in bounds.windows(2).enumerate() {
        let span = window[1] - window[0];
        let run = integrate_system((&rho, &u), &solver_config(cfg, eps_path[seg], span))?;
        let seg_traj = semiflow_core::solver::to_trajectory(&run, run.energy()[0])?;
        // next segment continues from the final state
        let last = run.states().last().expect("runs are nonempty");
        rho = last.rho().clone();
        u = VectorField::new(
            last.grid(),
            (0..last.grid().dim())
                .map(|a| {
                    last.mom()
                        .component(a)
                        .iter()
                        .zip(rho.values())
                        .map(|(&m, &r)| m / r)
                        .collect()
                })
                .collect(),
        )
        .map_err(TrajectoryError::Grid)?;
        glued = Some(match glued {
            None => seg_traj,
            Some(head) => continue_at(&head, window[0], &seg_traj)?,
        });
    }
    let traj = glued.expect("at least one segment");
    rehead(traj, data, smoothing, eps_path)
}

/// Replace the `t = 0` sample with the shared original data and stamp the
/// prescribed energy datum; requires the mollified run to start at or below
/// the data's field energy.
fn rehead(
    traj: Trajectory,
    data: &InitialData,
    smoothing: f64,
    eps_path: &[f64],
) -> Result<Trajectory, EnsembleError> {
    let mut states = traj.states().to_vec();
    states[0] = FluidState::new(data.rho.clone(), data.mom.clone())
        .map_err(TrajectoryError::State)?;
    let mut left = traj.energy().left_values().to_vec();
    let mut right = traj.energy().right_values().to_vec();
    left[0] = data.e0;
    right[0] = data.field_energy;
    let energy = EnergyProfile::new(traj.energy().times().to_vec(), left, right)?;
    let provenance = format!(
        "run sigma={smoothing} eps={}",
        eps_path
            .iter()
            .map(|e| format!("{e}"))
            .collect::<Vec<_>>()
            .join(">")
    );
    Ok(Trajectory::new(states, energy, traj.law().clone(), provenance)?)
}

/// Build the ensemble for arbitrary data over a given horizon: the
/// mollification x viscosity-path sweep, closed under shift-and-continue at
/// the restart times inside the horizon. Aborted runs are excluded with a
/// logged reason.
pub fn build_ensemble_from(
    cfg: &ScenarioConfig,
    data: &InitialData,
    horizon: f64,
    smoothings: &[f64],
) -> Result<(Ensemble, BuildLog), EnsembleError> {
    let bounds = segment_bounds(cfg, horizon)?;
    let segments = bounds.len() - 1;
    let paths_per_smoothing = cfg.eps_list.len().pow(segments as u32);
    let total = smoothings.len() * paths_per_smoothing;
    if total > MEMBER_CAP {
        return Err(EnsembleError::TooManyMembers(total));
    }

    // enumerate viscosity paths in deterministic lexicographic order
    let mut eps_paths: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..segments {
        let mut next = Vec::with_capacity(eps_paths.len() * cfg.eps_list.len());
        for prefix in &eps_paths {
            for &eps in &cfg.eps_list {
                let mut p = prefix.clone();
                p.push(eps);
                next.push(p);
            }
        }
        eps_paths = next;
    }

    // independent paths run in parallel; results are collected in the
    // deterministic (smoothing, path) order
    let jobs: Vec<(f64, &Vec<f64>)> = smoothings
        .iter()
        .flat_map(|&s| eps_paths.iter().map(move |p| (s, p)))
        .collect();
    let results: Vec<Result<Trajectory, EnsembleError>> = jobs
        .par_iter()
        .map(|(smoothing, path)| run_path(cfg, data, *smoothing, path, &bounds))
        .collect();

    let mut log = BuildLog::default();
    let mut members = Vec::new();
    for ((smoothing, path), result) in jobs.iter().zip(results) {
        match result {
            Ok(t) => {
                log.members.push(t.provenance().to_string());
                members.push(t);
            }
            Err(e) => log
                .excluded
                .push(format!("sigma={smoothing} eps={path:?}: {e}")),
        }
    }

    // seeded solver-path perturbations: same data, randomized viscosity and
    // mollification inside the configured ranges
    if let Generator::PerturbedEnsemble {
        n_members,
        seed,
        amplitude,
        ..
    } = &cfg.generator
    {
        let mut rng = XorShift64Star::new(*seed);
        let (eps_lo, eps_hi) = (
            cfg.eps_list.iter().cloned().fold(f64::INFINITY, f64::min),
            cfg.eps_list.iter().cloned().fold(0.0f64, f64::max),
        );
        for i in 0..*n_members {
            let xi = rng.next_f64();
            let eps = (eps_lo.ln() + xi * (eps_hi.ln() - eps_lo.ln())).exp();
            let sigma = smoothings[0] * (1.0 + amplitude * (rng.next_f64() - 0.5));
            let path = vec![eps; segments];
            match run_path(cfg, data, sigma.max(0.0), &path, &bounds) {
                Ok(t) => {
                    log.members.push(format!("perturbed[{i}] {}", t.provenance()));
                    members.push(t);
                }
                Err(e) => log
                    .excluded
                    .push(format!("perturbed[{i}] eps={eps:.3e}: {e}")),
            }
        }
    }

    if members.is_empty() {
        return Err(EnsembleError::EmptyBuild);
    }
    let ensemble = Ensemble::new(members)?;
    Ok((ensemble, log))
}

/// Build the configured scenario's ensemble over `[0, t_end]`.
pub fn build_ensemble(cfg: &ScenarioConfig) -> Result<(Ensemble, BuildLog), EnsembleError> {
    let data = build_initial_data(cfg)?;
    build_ensemble_from(cfg, &data, cfg.t_end, &effective_smoothings(cfg))
}
