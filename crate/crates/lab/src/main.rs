use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use semiflow_core::relative_energy::{
    gradient_blowup_estimate, weak_strong_check, ReferenceSolution,
};
use semiflow_core::selection::{check_semigroup, semiflow_select, Ensemble, FunctionalSchedule};
use semiflow_core::solver::{integrate_system, mollify_initial_data, write_run_dir, SolverConfig};
use semiflow_core::state::{self, FluidState};
use semiflow_core::trajectory::write_trajectory_dir;
use semiflow_lab::config::{Generator, ScenarioConfig};
use semiflow_lab::ensemble::{build_ensemble, build_ensemble_from};
use semiflow_lab::scenario::{build_initial_data, grid_of, InitialData};
use semiflow_lab::suite::run_acceptance_suite;
use semiflow_lab::tables::{emit_tables, Artifact};
use std::path::PathBuf;

/// Desk-scale laboratory for dissipative solutions and semiflow selection of
/// the isentropic Euler system on the flat torus.
#[derive(Parser)]
#[command(name = "semiflow-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured scenario once (first viscosity and
    /// smoothing of the sweep) and write the run directory.
    RunSolver {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the scenario ensemble (solver sweep closed under
    /// shift-and-continue) and write each member as a trajectory directory.
    BuildEnsemble {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the iterated functional-minimization selection over the scenario
    /// ensemble and write the stage report.
    Select {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute the full acceptance suite; exit code 0 iff every criterion
    /// passes.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// run a single criterion (1..=11) instead of the whole suite
        #[arg(long)]
        criterion: Option<u32>,
    },
    /// Compare the scenario's viscous trajectories against a manufactured
    /// smooth reference via the relative energy and its Gronwall bound.
    WeakStrong {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Gronwall constants to report (comma separated)
        #[arg(long, default_value = "1,2,4,8")]
        constants: String,
    },
    /// Restart-consistency experiment: select, restart at t1, re-select,
    /// report the deviation over [0, t2] for each configured pair.
    Semigroup {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(config: &std::path::Path) -> Result<ScenarioConfig> {
    ScenarioConfig::from_file(config)
        .with_context(|| format!("reading scenario config {}", config.display()))
}

fn first_smoothing(cfg: &ScenarioConfig) -> f64 {
    let base = match &cfg.generator {
        Generator::Riemann { smoothing, .. } => *smoothing,
        _ => 0.0,
    };
    cfg.smoothing_list.first().copied().unwrap_or(0.0).max(base)
}

fn main() {
    semiflow_lab::init_thread_pool();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(ok) => {
            if ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::RunSolver { config, out } => {
            let cfg = load(&config)?;
            let data = build_initial_data(&cfg)?;
            let sigma = first_smoothing(&cfg);
            let (rho, u) = mollify_initial_data(&data.rho, &data.mom, sigma, &cfg.law)?;
            let eps = *cfg.eps_list.first().unwrap_or(&0.0);
            let mut sc = SolverConfig::new(eps, cfg.m_order, cfg.law.clone(), cfg.dt, cfg.t_end);
            sc.sample_stride = cfg.sample_stride;
            sc.rho_floor = cfg.rho_floor;
            sc.cfl = cfg.cfl;
            let run = integrate_system((&rho, &u), &sc)?;
            write_run_dir(&run, &out)?;
            emit_tables(&[Artifact::Run(&run)], &out)?;
            println!(
                "run complete: {} samples, E {:.6} -> {:.6}, dissipated {:.3e}",
                run.times().len(),
                run.energy()[0],
                run.energy().last().unwrap(),
                run.dissipation().last().unwrap()
            );
            Ok(true)
        }
        Command::BuildEnsemble { config, out } => {
            let cfg = load(&config)?;
            let (ens, log) = build_ensemble(&cfg)?;
            std::fs::create_dir_all(&out)?;
            for (i, member) in ens.members().iter().enumerate() {
                write_trajectory_dir(member, &out.join(format!("member_{i:03}")))?;
            }
            let mut log_text = String::new();
            for m in &log.members {
                log_text.push_str(&format!("member {m}\n"));
            }
            for e in &log.excluded {
                log_text.push_str(&format!("excluded {e}\n"));
            }
            std::fs::write(out.join("build_log.txt"), log_text)?;
            println!(
                "ensemble built: {} members, {} excluded",
                ens.len(),
                log.excluded.len()
            );
            Ok(true)
        }
        Command::Select { config, out } => {
            let cfg = load(&config)?;
            let (ens, _) = build_ensemble(&cfg)?;
            let schedule = FunctionalSchedule::diagonal(cfg.k_cap, cfg.n_cap, cfg.m_cap);
            let outcome = semiflow_select(&ens, &schedule, cfg.tie_tol)?;
            std::fs::create_dir_all(&out)?;
            emit_tables(&[Artifact::Selection(&outcome)], &out)?;
            write_trajectory_dir(
                ens.member(outcome.selected),
                &out.join("selected_trajectory"),
            )?;
            println!(
                "selected member {} of {} ({}); multiplicity flagged: {}",
                outcome.selected,
                ens.len(),
                ens.member(outcome.selected).provenance(),
                outcome.multiplicity_flagged
            );
            Ok(true)
        }
        Command::Verify {
            config: _,
            out,
            criterion,
        } => {
            if let Some(id) = criterion {
                let Some(rep) = semiflow_lab::suite::run_criterion(id, Some(&out)) else {
                    bail!("criterion {id} does not exist (valid: 1..=11)");
                };
                println!(
                    "[{}] criterion {:02} {}: {}",
                    if rep.pass { "PASS" } else { "FAIL" },
                    rep.id,
                    rep.name,
                    rep.detail
                );
                return Ok(rep.pass);
            }
            let report = run_acceptance_suite(Some(&out));
            print!("{}", report.lines());
            Ok(report.all_pass())
        }
        Command::WeakStrong {
            config,
            out,
            constants,
        } => {
            let cfg = load(&config)?;
            let data = build_initial_data(&cfg)?;
            let grid = grid_of(&cfg)?;
            let u0_raw: Vec<f64> = data
                .mom
                .component(0)
                .iter()
                .zip(data.rho.values())
                .map(|(&m, &r)| m / r.max(cfg.rho_floor))
                .collect();
            let u0 = semiflow_core::grid::VectorField::new(grid, vec![u0_raw])
                .map_err(semiflow_core::state::StateError::from)?;
            let t_blow = gradient_blowup_estimate(&data.rho, &u0, &cfg.law);
            let t_ref = t_blow.map(|t| 0.6 * t).unwrap_or(cfg.t_end).min(cfg.t_end);
            let steps = (t_ref / cfg.dt).ceil().max(1.0);
            let dt = t_ref / steps;
            let mut ref_cfg =
                SolverConfig::new(0.0, cfg.m_order, cfg.law.clone(), dt, t_ref);
            ref_cfg.sample_stride = cfg.sample_stride;
            ref_cfg.rho_floor = cfg.rho_floor;
            let (rho_s, u_s) = mollify_initial_data(&data.rho, &data.mom, first_smoothing(&cfg), &cfg.law)?;
            let ref_run = integrate_system((&rho_s, &u_s), &ref_cfg)?;
            let reference = ReferenceSolution::from_run(&ref_run)?;

            let cs: Vec<f64> = constants
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .context("parsing --constants")?;
            std::fs::create_dir_all(&out)?;
            let mut all_pass = true;
            let mut artifacts = Vec::new();
            for &eps in &cfg.eps_list {
                let mut sc = SolverConfig::new(eps, cfg.m_order, cfg.law.clone(), dt, t_ref);
                sc.sample_stride = cfg.sample_stride;
                sc.rho_floor = cfg.rho_floor;
                let run = integrate_system((&rho_s, &u_s), &sc)?;
                let traj = semiflow_core::solver::to_trajectory(&run, data.e0)?;
                for &c in &cs {
                    let rep = weak_strong_check(&traj, &reference, c, 1e-3)?;
                    println!(
                        "eps {eps:.3e} c {c}: max RE {:.3e}, pass {}",
                        rep.max_relative_energy, rep.pass
                    );
                    if (c - 4.0).abs() < 1e-12 {
                        all_pass &= rep.pass;
                    }
                    artifacts.push(rep);
                }
            }
            let refs: Vec<Artifact> = artifacts.iter().map(Artifact::WeakStrong).collect();
            emit_tables(&refs, &out)?;
            Ok(all_pass)
        }
        Command::Semigroup { config, out } => {
            let cfg = load(&config)?;
            let data = build_initial_data(&cfg)?;
            let schedule = FunctionalSchedule::diagonal(cfg.k_cap, cfg.n_cap, cfg.m_cap);
            let grid = grid_of(&cfg)?;
            let ell = semiflow_core::trajectory::seam_ell(grid);
            std::fs::create_dir_all(&out)?;
            let mut all_ok = true;
            let mut artifacts = Vec::new();
            for &(t1, t2) in &cfg.semigroup_pairs {
                let mut run_cfg = cfg.clone();
                run_cfg.t_end = t1 + t2;
                let tie_tol = run_cfg.tie_tol;
                let select = |ens: &Ensemble| semiflow_select(ens, &schedule, tie_tol);
                let sigma = first_smoothing(&run_cfg);
                let builder = |rho: &semiflow_core::grid::ScalarField,
                               mom: &semiflow_core::grid::VectorField,
                               e0: f64,
                               horizon: f64| {
                    let st = FluidState::new(rho.clone(), mom.clone()).map_err(|e| {
                        semiflow_core::selection::SelectionError::Trajectory(
                            semiflow_core::trajectory::TrajectoryError::State(e),
                        )
                    })?;
                    let field_energy = state::total_energy(&st, &run_cfg.law);
                    let d = InitialData {
                        rho: rho.clone(),
                        mom: mom.clone(),
                        e0,
                        field_energy,
                    };
                    // solver states are smooth; only rough data gets the
                    // configured mollification
                    let rough = semiflow_core::grid::l2_norm(&rho.zip_map(
                        &semiflow_core::grid::dealias(rho),
                        |a, b| a - b,
                    )) > 1e-6 * semiflow_core::grid::l2_norm(rho).max(1e-300);
                    let s = if rough { sigma } else { 0.0 };
                    build_ensemble_from(&run_cfg, &d, horizon, &[s])
                        .map(|(e, _)| e)
                        .map_err(|e| {
                            semiflow_core::selection::SelectionError::Trajectory(
                                semiflow_core::trajectory::TrajectoryError::State(
                                    state::StateError::InvalidLaw(format!("build failed: {e}")),
                                ),
                            )
                        })
                };
                let report = check_semigroup(
                    select,
                    builder,
                    (&data.rho, &data.mom, data.e0),
                    t1,
                    t2,
                    ell,
                    true,
                    &cfg.law,
                )?;
                println!(
                    "semigroup (t1={t1}, t2={t2}): deviation {:.3e} over {} restart members",
                    report.deviation, report.restart_members
                );
                all_ok &= report.deviation <= 1e-6;
                artifacts.push(report);
            }
            let refs: Vec<Artifact> = artifacts.iter().map(Artifact::Semigroup).collect();
            emit_tables(&refs, &out)?;
            Ok(all_ok)
        }
    }
}
