//! Time integration of the hyperviscosity-regularized Euler system
//!
//! ```text
//! d_t rho + div(rho u)                      = 0
//! d_t m   + div(m x u) + grad p(rho)        = -eps Laplacian^{2m} u,   m = rho u
//! ```
//!
//! in conservation variables `(rho, m)` on the torus. The hyperbolic part is
//! advanced with classic RK4 and 2/3-dealiased spectral fluxes; the stiff
//! hyperviscous term is split off (Strang) and integrated with L-stable
//! TR-BDF2 in the velocity, which reduces per Fourier mode to the exact
//! integrating factor whenever the density is constant and otherwise to a
//! short preconditioned CG solve.
//!
//! The cumulative dissipation ledger `eps \int ||Lap^m u||^2 dt` is
//! accumulated from the stiff substeps' exact kinetic-energy decrements, so
//! the discrete total energy balance closes up to the time-integration error
//! of the hyperbolic part.

use crate::grid::{self, GridError, ScalarField, TorusGrid, VectorField};
use crate::state::{self, FluidState, PressureLaw, StateError};
use crate::trajectory::{EnergyProfile, Trajectory, TrajectoryError};
use std::path::Path;
use thiserror::Error;

/// Default Courant number bound for the explicit hyperbolic part.
pub const DEFAULT_CFL: f64 = 0.5;
/// Relative slack allowed when checking mollified data energies.
const MOLLIFY_ENERGY_SLACK: f64 = 0.5;
/// Target density floor after the positive lift, as a fraction of the mean.
const LIFT_FRACTION: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("vacuum formed at t = {t}: min density {min_rho} below floor")]
    Vacuum { t: f64, min_rho: f64 },
    #[error("CFL violated at t = {t}: wave speed {speed} needs dt <= {dt_max}")]
    CflViolated { t: f64, speed: f64, dt_max: f64 },
    #[error("non-finite values at t = {t}: the run blew up")]
    Blowup { t: f64 },
    #[error("stiff solve failed to converge at t = {t}")]
    StiffSolveFailed { t: f64 },
    #[error("mollification failed: {0}")]
    MollifyFailed(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("malformed run directory: {0}")]
    MalformedRun(String),
}

/// Parameters of one regularized run.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Artificial viscosity `eps >= 0`; `0` disables the stiff substep.
    pub eps: f64,
    /// Exponent `m` in `Laplacian^{2m}`; 1 (bi-Laplacian) up to 3.
    pub m_order: u32,
    pub law: PressureLaw,
    pub dt: f64,
    pub t_end: f64,
    /// Record a sample every this many steps.
    pub sample_stride: usize,
    /// Abort threshold for vacuum formation.
    pub rho_floor: f64,
    /// Courant number bound `dt <= cfl * h / max wave speed`.
    pub cfl: f64,
}

impl SolverConfig {
    pub fn new(eps: f64, m_order: u32, law: PressureLaw, dt: f64, t_end: f64) -> Self {
        Self {
            eps,
            m_order,
            law,
            dt,
            t_end,
            sample_stride: 1,
            rho_floor: 1e-6,
            cfl: DEFAULT_CFL,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.sample_stride = stride;
        self
    }

    fn validate(&self) -> Result<(), SolverError> {
        if self.eps < 0.0 {
            return Err(SolverError::InvalidConfig("eps must be >= 0".into()));
        }
        if !(1..=3).contains(&self.m_order) {
            return Err(SolverError::InvalidConfig(
                "m_order must lie in 1..=3".into(),
            ));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(SolverError::InvalidConfig(
                "dt and t_end must be positive".into(),
            ));
        }
        if self.sample_stride == 0 {
            return Err(SolverError::InvalidConfig(
                "sample_stride must be >= 1".into(),
            ));
        }
        if !(self.rho_floor > 0.0) {
            return Err(SolverError::InvalidConfig(
                "rho_floor must be positive".into(),
            ));
        }
        if !(self.cfl > 0.0 && self.cfl <= DEFAULT_CFL + 1e-12) {
            return Err(SolverError::InvalidConfig(format!(
                "cfl must lie in (0, {DEFAULT_CFL}]"
            )));
        }
        Ok(())
    }

    pub fn meta_lines(&self) -> Result<String, SolverError> {
        Ok(format!(
            "eps={}\nm_order={}\ndt={}\nt_end={}\nsample_stride={}\nrho_floor={}\ncfl={}\nlaw={}\n",
            self.eps,
            self.m_order,
            self.dt,
            self.t_end,
            self.sample_stride,
            self.rho_floor,
            self.cfl,
            self.law.to_key_value()?,
        ))
    }
}

/// A completed run: sampled states with the energy and cumulative
/// dissipation records.
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub config: SolverConfig,
    times: Vec<f64>,
    states: Vec<FluidState>,
    energy: Vec<f64>,
    dissipation: Vec<f64>,
    steps: usize,
}

impl SolverRun {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[FluidState] {
        &self.states
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    /// Cumulative `eps \int ||Lap^m u||^2 dt` at the sample times.
    pub fn dissipation(&self) -> &[f64] {
        &self.dissipation
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn grid(&self) -> TorusGrid {
        self.states[0].grid()
    }
}

// ---------------------------------------------------------------------------
// Mollification of initial data
// ---------------------------------------------------------------------------

/// Smooth, strictly positive approximation `(rho_eps, u_eps)` of the data
/// `(rho_0, m_0)`: Gaussian spectral low-pass of width `smoothing`, then a
/// mass-preserving positive lift. At `smoothing = 0` on already positive
/// data this is the identity.
pub fn mollify_initial_data(
    rho0: &ScalarField,
    mom0: &VectorField,
    smoothing: f64,
    law: &PressureLaw,
) -> Result<(ScalarField, VectorField), SolverError> {
    if rho0.grid() != mom0.grid() {
        return Err(SolverError::Grid(GridError::GridMismatch));
    }
    let g = rho0.grid();
    let mass = grid::integrate(rho0);
    if mass <= 0.0 {
        return Err(SolverError::MollifyFailed(
            "data carries no mass to smooth".into(),
        ));
    }
    let rho_lp = grid::low_pass(rho0, smoothing);
    let target = LIFT_FRACTION * mass / g.volume();
    let lift = (target - rho_lp.min()).max(0.0);
    let mut rho_pos = rho_lp.map(|r| r + lift);
    // renormalize so the lift does not create mass
    let scale = mass / grid::integrate(&rho_pos);
    rho_pos.scale(scale);
    if rho_pos.min() <= 0.0 {
        return Err(SolverError::MollifyFailed(format!(
            "density cannot be lifted positive (min {})",
            rho_pos.min()
        )));
    }

    let mut comps = Vec::with_capacity(g.dim());
    for axis in 0..g.dim() {
        let m_lp = grid::low_pass(&mom0.component_field(axis), smoothing);
        comps.push(m_lp.zip_map(&rho_pos, |m, r| m / r).into_values());
    }
    let u = VectorField::new(g, comps)?;

    // guard: smoothing should not inflate the energy budget
    let mom_smooth = VectorField::new(
        g,
        (0..g.dim())
            .map(|a| {
                u.component(a)
                    .iter()
                    .zip(rho_pos.values())
                    .map(|(&ua, &r)| ua * r)
                    .collect()
            })
            .collect(),
    )?;
    let smooth_state = FluidState::new(rho_pos.clone(), mom_smooth)?;
    let e_smooth = state::total_energy(&smooth_state, law);
    if let Ok(raw) = FluidState::new(rho0.map(|r| r.max(0.0)), mom0.clone()) {
        let e_raw = state::total_energy(&raw, law);
        if e_raw.is_finite() && e_smooth > e_raw * (1.0 + MOLLIFY_ENERGY_SLACK) + 1e-12 {
            return Err(SolverError::MollifyFailed(format!(
                "smoothed energy {e_smooth} exceeds data energy {e_raw} beyond tolerance"
            )));
        }
    }
    Ok((rho_pos, u))
}

// ---------------------------------------------------------------------------
// Plain conserved-variable container for the stepper
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct Conserved {
    rho: Vec<f64>,
    mom: Vec<Vec<f64>>,
}

impl Conserved {
    fn axpy(&mut self, alpha: f64, other: &Conserved) {
        for (a, b) in self.rho.iter_mut().zip(&other.rho) {
            *a += alpha * b;
        }
        for (ca, cb) in self.mom.iter_mut().zip(&other.mom) {
            for (a, b) in ca.iter_mut().zip(cb) {
                *a += alpha * b;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.rho.iter().all(|v| v.is_finite())
            && self.mom.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }
}

struct Stepper {
    grid: TorusGrid,
    config: SolverConfig,
    dt: f64,
    /// spectral multiplier `(pi^2 |k|^2)^{2m}` per bin
    stiff_multiplier: Vec<f64>,
}

impl Stepper {
    fn new(grid: TorusGrid, config: SolverConfig, dt: f64) -> Self {
        let n_bins = grid.node_count();
        let mut stiff = vec![0.0; n_bins];
        for bin in 0..n_bins {
            let k = grid.mode_vector(bin);
            let k2: f64 = k[..grid.dim()].iter().map(|&ki| (ki * ki) as f64).sum();
            let base = std::f64::consts::PI.powi(2) * k2;
            stiff[bin] = base.powi(2 * config.m_order as i32);
        }
        Self {
            grid,
            config,
            dt,
            stiff_multiplier: stiff,
        }
    }

    fn rhs(&self, y: &Conserved) -> Conserved {
        let g = self.grid;
        let dim = g.dim();
        let n = g.node_count();
        let floor = self.config.rho_floor;

        // continuity: d_t rho = -div m (linear, no dealiasing needed)
        let mut drho = vec![0.0; n];
        for a in 0..dim {
            let ma = ScalarField::from_raw(g, y.mom[a].clone());
            let d = grid::spectral_derivative(&ma, a, 1);
            for (o, v) in drho.iter_mut().zip(d.values()) {
                *o -= v;
            }
        }

        // momentum: d_t m_b = -sum_a d_a (m_a m_b / rho) - d_b p(rho)
        // products evaluated pointwise, derivatives 2/3-masked
        let mut dmom = vec![vec![0.0; n]; dim];
        let p_field = ScalarField::from_raw(
            g,
            y.rho
                .iter()
                .map(|&r| self.config.law.pressure(r.max(floor)))
                .collect(),
        );
        for b in 0..dim {
            for a in 0..dim {
                let t_ab = ScalarField::from_raw(
                    g,
                    (0..n)
                        .map(|i| y.mom[a][i] * y.mom[b][i] / y.rho[i].max(floor))
                        .collect(),
                );
                let d = grid::flux_derivative(&t_ab, a);
                for (o, v) in dmom[b].iter_mut().zip(d.values()) {
                    *o -= v;
                }
            }
            let dp = grid::flux_derivative(&p_field, b);
            for (o, v) in dmom[b].iter_mut().zip(dp.values()) {
                *o -= v;
            }
        }
        Conserved {
            rho: drho,
            mom: dmom,
        }
    }

    /// One classic RK4 step of the hyperbolic part.
    fn hyperbolic_step(&self, y: &mut Conserved) {
        let dt = self.dt;
        let k1 = self.rhs(y);
        let mut y2 = y.clone();
        y2.axpy(dt / 2.0, &k1);
        let k2 = self.rhs(&y2);
        let mut y3 = y.clone();
        y3.axpy(dt / 2.0, &k2);
        let k3 = self.rhs(&y3);
        let mut y4 = y.clone();
        y4.axpy(dt, &k3);
        let k4 = self.rhs(&y4);
        y.axpy(dt / 6.0, &k1);
        y.axpy(dt / 3.0, &k2);
        y.axpy(dt / 3.0, &k3);
        y.axpy(dt / 6.0, &k4);
    }

    /// Kinetic energy `1/2 \int rho |u|^2 dx` of a velocity against a fixed
    /// density.
    fn kinetic_energy(&self, rho: &[f64], u: &[Vec<f64>]) -> f64 {
        let n = self.grid.node_count();
        let mut acc = 0.0;
        for i in 0..n {
            let usq: f64 = u.iter().map(|c| c[i] * c[i]).sum();
            acc += 0.5 * rho[i] * usq;
        }
        acc / n as f64 * self.grid.volume()
    }

    /// Apply `x -> rho x + c K x` where `K` is the stiff Fourier multiplier.
    fn stiff_apply(&self, rho: &[f64], c: f64, x: &ScalarField) -> ScalarField {
        let mut coeffs = grid::forward(x);
        for (bin, v) in coeffs.iter_mut().enumerate() {
            *v *= self.stiff_multiplier[bin];
        }
        let kx = grid::inverse(self.grid, coeffs);
        ScalarField::from_raw(
            self.grid,
            x.values()
                .iter()
                .zip(kx.values())
                .zip(rho)
                .map(|((&xv, &kv), &r)| r * xv + c * kv)
                .collect(),
        )
    }

    /// Solve `(rho + c K) x = rhs` by CG, preconditioned with the
    /// constant-density operator `(mean rho + c K)^{-1}` which is diagonal in
    /// Fourier space. For constant density the preconditioner is exact and
    /// CG converges in one iteration.
    fn stiff_solve(
        &self,
        rho: &[f64],
        c: f64,
        rhs: &ScalarField,
        guess: &ScalarField,
    ) -> Result<ScalarField, ()> {
        let rho_mean = rho.iter().sum::<f64>() / rho.len() as f64;
        let precond = |r: &ScalarField| -> ScalarField {
            let mut coeffs = grid::forward(r);
            for (bin, v) in coeffs.iter_mut().enumerate() {
                *v /= rho_mean + c * self.stiff_multiplier[bin];
            }
            grid::inverse(self.grid, coeffs)
        };
        let dot = |a: &ScalarField, b: &ScalarField| -> f64 {
            a.values()
                .iter()
                .zip(b.values())
                .map(|(&x, &y)| x * y)
                .sum()
        };

        let rhs_norm = dot(rhs, rhs).sqrt();
        if rhs_norm == 0.0 {
            return Ok(ScalarField::zero(self.grid));
        }
        let tol = 1e-13 * rhs_norm;

        let mut x = guess.clone();
        let ax = self.stiff_apply(rho, c, &x);
        let mut r = rhs.zip_map(&ax, |b, a| b - a);
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..600 {
            if dot(&r, &r).sqrt() <= tol {
                return Ok(x);
            }
            let ap = self.stiff_apply(rho, c, &p);
            let alpha = rz / dot(&p, &ap);
            x.axpy(alpha, &p);
            r.axpy(-alpha, &ap);
            z = precond(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            let mut p_new = z.clone();
            p_new.axpy(beta, &p);
            p = p_new;
        }
        if dot(&r, &r).sqrt() <= 10.0 * tol {
            Ok(x)
        } else {
            Err(())
        }
    }

    /// TR-BDF2 substep of duration `h` for `d_t u = -(eps/rho) Lap^{2m} u`
    /// with frozen density. Returns the kinetic-energy decrement, which is
    /// the exact dissipation `eps \int ||Lap^m u||^2 dt` of the discrete
    /// substep flow (TR-BDF2 is L-stable and contractive in the
    /// rho-weighted norm, so the decrement is nonnegative).
    fn stiff_substep(&self, y: &mut Conserved, h: f64, t: f64) -> Result<f64, SolverError> {
        let eps = self.config.eps;
        if eps == 0.0 || h == 0.0 {
            return Ok(0.0);
        }
        let g = self.grid;
        let dim = g.dim();
        let n = g.node_count();
        let gamma = 2.0 - std::f64::consts::SQRT_2;
        let a1 = 1.0 / (gamma * (2.0 - gamma));
        let a2 = (1.0 - gamma).powi(2) / (gamma * (2.0 - gamma));
        let b = (1.0 - gamma) / (2.0 - gamma);

        // clamped density, so transient stage excursions cannot divide by 0;
        // sub-floor densities abort at the end of the step anyway
        let floor = self.config.rho_floor;
        let rho: Vec<f64> = y.rho.iter().map(|&r| r.max(floor)).collect();
        let mut u0 = Vec::with_capacity(dim);
        for a in 0..dim {
            u0.push((0..n).map(|i| y.mom[a][i] / rho[i]).collect::<Vec<f64>>());
        }
        let e_before = self.kinetic_energy(&rho, &u0);

        let mut u2 = Vec::with_capacity(dim);
        for a in 0..dim {
            let u0f = ScalarField::from_raw(g, u0[a].clone());
            // TR stage: (rho + c1 K) u1 = rho u0 - c1 K u0
            let c1 = gamma * h / 2.0 * eps;
            let mut coeffs = grid::forward(&u0f);
            for (bin, v) in coeffs.iter_mut().enumerate() {
                *v *= self.stiff_multiplier[bin];
            }
            let ku0 = grid::inverse(g, coeffs);
            let rhs1 = ScalarField::from_raw(
                g,
                (0..n)
                    .map(|i| rho[i] * u0[a][i] - c1 * ku0.values()[i])
                    .collect(),
            );
            let u1 = self
                .stiff_solve(&rho, c1, &rhs1, &u0f)
                .map_err(|_| SolverError::StiffSolveFailed { t })?;

            // BDF2 stage: (rho + c2 K) u2 = rho (a1 u1 - a2 u0)
            let c2 = b * h * eps;
            let rhs2 = ScalarField::from_raw(
                g,
                (0..n)
                    .map(|i| rho[i] * (a1 * u1.values()[i] - a2 * u0[a][i]))
                    .collect(),
            );
            let u2a = self
                .stiff_solve(&rho, c2, &rhs2, &u1)
                .map_err(|_| SolverError::StiffSolveFailed { t })?;
            u2.push(u2a.into_values());
        }

        let e_after = self.kinetic_energy(&rho, &u2);
        for a in 0..dim {
            for i in 0..n {
                y.mom[a][i] = rho[i] * u2[a][i];
            }
        }
        Ok((e_before - e_after).max(0.0))
    }

    fn max_wave_speed(&self, y: &Conserved) -> f64 {
        let floor = self.config.rho_floor;
        let n = self.grid.node_count();
        let mut smax = 0.0f64;
        for i in 0..n {
            let r = y.rho[i].max(floor);
            let u: f64 = y
                .mom
                .iter()
                .map(|c| (c[i] / r) * (c[i] / r))
                .sum::<f64>()
                .sqrt();
            smax = smax.max(u + self.config.law.sound_speed(r));
        }
        smax
    }
}

// ---------------------------------------------------------------------------
// The run loop
// ---------------------------------------------------------------------------

/// Advance the regularized system from smooth positive data `(rho_0, u_0)`.
///
/// `dt` is nudged so the horizon is an exact number of steps. Aborts with a
/// diagnostic on vacuum formation, mid-run CFL violation, or blow-up.
pub fn integrate_system(
    init: (&ScalarField, &VectorField),
    config: &SolverConfig,
) -> Result<SolverRun, SolverError> {
    config.validate()?;
    let (rho0, u0) = init;
    if rho0.grid() != u0.grid() {
        return Err(SolverError::Grid(GridError::GridMismatch));
    }
    let g = rho0.grid();
    if rho0.min() < config.rho_floor {
        return Err(SolverError::Vacuum {
            t: 0.0,
            min_rho: rho0.min(),
        });
    }

    let n_steps = (config.t_end / config.dt).round().max(1.0) as usize;
    let dt = config.t_end / n_steps as f64;
    let stepper = Stepper::new(g, config.clone(), dt);

    let n = g.node_count();
    let mut y = Conserved {
        rho: rho0.values().to_vec(),
        mom: (0..g.dim())
            .map(|a| {
                (0..n)
                    .map(|i| rho0.values()[i] * u0.component(a)[i])
                    .collect()
            })
            .collect(),
    };

    // initial CFL check
    let smax = stepper.max_wave_speed(&y);
    let dt_max = config.cfl * g.spacing() / smax.max(1e-12);
    if dt > dt_max * (1.0 + 1e-9) {
        return Err(SolverError::CflViolated {
            t: 0.0,
            speed: smax,
            dt_max,
        });
    }

    let snapshot = |y: &Conserved| -> Result<FluidState, SolverError> {
        Ok(FluidState::new(
            ScalarField::new(g, y.rho.clone())?,
            VectorField::new(g, y.mom.clone())?,
        )?)
    };

    let mut times = vec![0.0];
    let mut states = vec![snapshot(&y)?];
    let mut energy = vec![state::total_energy(&states[0], &config.law)];
    let mut dissipation = vec![0.0];
    let mut cum_dissipation = 0.0;

    for step in 1..=n_steps {
        let t = step as f64 * dt;
        // Strang: stiff half, hyperbolic full, stiff half
        cum_dissipation += stepper.stiff_substep(&mut y, dt / 2.0, t)?;
        stepper.hyperbolic_step(&mut y);
        cum_dissipation += stepper.stiff_substep(&mut y, dt / 2.0, t)?;

        if !y.is_finite() {
            return Err(SolverError::Blowup { t });
        }
        let min_rho = y.rho.iter().copied().fold(f64::INFINITY, f64::min);
        if min_rho < config.rho_floor {
            return Err(SolverError::Vacuum { t, min_rho });
        }
        let smax = stepper.max_wave_speed(&y);
        let dt_max = config.cfl * g.spacing() / smax.max(1e-12);
        if dt > dt_max * (1.0 + 1e-9) {
            return Err(SolverError::CflViolated {
                t,
                speed: smax,
                dt_max,
            });
        }

        if step % config.sample_stride == 0 || step == n_steps {
            let st = snapshot(&y)?;
            times.push(t);
            energy.push(state::total_energy(&st, &config.law));
            dissipation.push(cum_dissipation);
            states.push(st);
        }
    }

    Ok(SolverRun {
        config: config.clone(),
        times,
        states,
        energy,
        dissipation,
        steps: n_steps,
    })
}

/// Per-interval residuals of the discrete energy balance
/// `E(t_{j+1}) - E(t_j) + [D(t_{j+1}) - D(t_j)]`.
pub fn energy_balance_residual(run: &SolverRun) -> Vec<f64> {
    run.times
        .windows(2)
        .enumerate()
        .map(|(j, _)| {
            (run.energy[j + 1] - run.energy[j]) + (run.dissipation[j + 1] - run.dissipation[j])
        })
        .collect()
}

/// Package a run as a dissipative-solution candidate with the prescribed
/// initial energy datum `E(0-) = e0` (which may exceed the mollified data's
/// energy; the surplus appears in the defect ledger at `0-`).
pub fn to_trajectory(run: &SolverRun, e0: f64) -> Result<Trajectory, SolverError> {
    let profile = EnergyProfile::from_samples(e0, run.times.clone(), run.energy.clone())?;
    let provenance = format!(
        "solver eps={} m={} dt={} n={}",
        run.config.eps,
        run.config.m_order,
        run.config.t_end / run.steps as f64,
        run.grid().points_per_dim()
    );
    Ok(Trajectory::new(
        run.states.clone(),
        profile,
        run.config.law.clone(),
        provenance,
    )?)
}

// ---------------------------------------------------------------------------
// Run directory serialization
// ---------------------------------------------------------------------------

/// Write a run as a directory: `meta`, `times.csv`, per-sample field files,
/// and `energy.csv` with columns `t,E,cumulative_dissipation`.
pub fn write_run_dir(run: &SolverRun, dir: &Path) -> Result<(), SolverError> {
    std::fs::create_dir_all(dir).map_err(GridError::Io)?;
    let mut meta = run.config.meta_lines()?;
    meta.push_str(&format!("steps={}\n", run.steps));
    std::fs::write(dir.join("meta"), meta).map_err(GridError::Io)?;

    let mut times = String::from("t\n");
    for t in &run.times {
        times.push_str(&format!("{t:.17e}\n"));
    }
    std::fs::write(dir.join("times.csv"), times).map_err(GridError::Io)?;

    let mut energy = String::from("t,E,cumulative_dissipation\n");
    for i in 0..run.times.len() {
        energy.push_str(&format!(
            "{:.17e},{:.17e},{:.17e}\n",
            run.times[i], run.energy[i], run.dissipation[i]
        ));
    }
    std::fs::write(dir.join("energy.csv"), energy).map_err(GridError::Io)?;

    for (i, st) in run.states.iter().enumerate() {
        grid::write_scalar_csv(st.rho(), &dir.join(format!("rho_{i:04}.csv")))?;
        grid::write_vector_csv(st.mom(), &dir.join(format!("mom_{i:04}.csv")))?;
    }
    Ok(())
}

pub fn read_run_dir(dir: &Path) -> Result<SolverRun, SolverError> {
    let meta = std::fs::read_to_string(dir.join("meta")).map_err(GridError::Io)?;
    let mut kv = std::collections::HashMap::new();
    for line in meta.lines() {
        if let Some((k, v)) = line.split_once('=') {
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |key: &str| -> Result<f64, SolverError> {
        kv.get(key)
            .ok_or_else(|| SolverError::MalformedRun(format!("missing {key}")))?
            .parse::<f64>()
            .map_err(|_| SolverError::MalformedRun(format!("bad {key}")))
    };
    let law = PressureLaw::from_key_value(
        kv.get("law")
            .ok_or_else(|| SolverError::MalformedRun("missing law".into()))?,
    )?;
    let config = SolverConfig {
        eps: get("eps")?,
        m_order: get("m_order")? as u32,
        law,
        dt: get("dt")?,
        t_end: get("t_end")?,
        sample_stride: get("sample_stride")? as usize,
        rho_floor: get("rho_floor")?,
        cfl: get("cfl")?,
    };
    let steps = get("steps")? as usize;

    let parse_csv = |name: &str, cols: usize| -> Result<Vec<Vec<f64>>, SolverError> {
        let text = std::fs::read_to_string(dir.join(name)).map_err(GridError::Io)?;
        text.lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let row: Vec<f64> = l
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| SolverError::MalformedRun(format!("bad row in {name}")))?;
                if row.len() != cols {
                    return Err(SolverError::MalformedRun(format!(
                        "expected {cols} columns in {name}"
                    )));
                }
                Ok(row)
            })
            .collect()
    };

    let times: Vec<f64> = parse_csv("times.csv", 1)?.into_iter().map(|r| r[0]).collect();
    let erows = parse_csv("energy.csv", 3)?;
    if erows.len() != times.len() {
        return Err(SolverError::MalformedRun(
            "energy.csv and times.csv disagree".into(),
        ));
    }
    let energy: Vec<f64> = erows.iter().map(|r| r[1]).collect();
    let dissipation: Vec<f64> = erows.iter().map(|r| r[2]).collect();

    let mut states = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let rho = grid::read_scalar_csv(&dir.join(format!("rho_{i:04}.csv")))?;
        let mom = grid::read_vector_csv(&dir.join(format!("mom_{i:04}.csv")))?;
        states.push(FluidState::new(rho, mom)?);
    }
    Ok(SolverRun {
        config,
        times,
        states,
        energy,
        dissipation,
        steps,
    })
}
