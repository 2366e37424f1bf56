//! The discrete trajectory space: time-sampled states with BV energy
//! profiles and defect ledgers, the shift/continuation algebra, weak-form
//! residuals, and the negative-Sobolev trajectory metric.
//!
//! A trajectory records `[rho, m, E]` at uniform sample times. The energy
//! profile keeps explicit left/right values at every sample, so downward
//! jumps (energetic sinks, glue seams) are first-class; between samples the
//! profile is piecewise linear. The defect ledger tracks
//! `D(t) = E(t) - \int e(rho, m)(t) dx`, the aggregate nonnegative gap the
//! measure-valued machinery would distribute over oscillation and
//! concentration defects.

use crate::grid::{self, ScalarField, TorusGrid, VectorField};
use crate::state::{self, FluidState, PressureLaw};
use thiserror::Error;

/// Matching tolerance for glue seams, in `W^{-ell,2}`.
pub const SEAM_TOL: f64 = 1e-6;
/// Defect ledger entries must stay above `-DEFECT_TOL`.
pub const DEFECT_TOL: f64 = 1e-8;
/// Slack allowed on the nonincreasing-energy checks.
pub const ENERGY_MONOTONE_TOL: f64 = 1e-8;
/// Relative tolerance on mass constancy across samples.
pub const MASS_TOL: f64 = 1e-10;
/// Tolerance for matching sample times.
pub const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("sample times must start at 0 and increase strictly")]
    BadTimes,
    #[error("energy profile increases at t = {at} by {by}")]
    EnergyIncreases { at: f64, by: f64 },
    #[error("negative energy value {value} at t = {at}")]
    NegativeEnergy { at: f64, value: f64 },
    #[error("defect {value} at sample {sample} below -{DEFECT_TOL}")]
    NegativeDefect { sample: usize, value: f64 },
    #[error("mass drifts from {initial} to {found} at sample {sample}")]
    MassDrift {
        sample: usize,
        initial: f64,
        found: f64,
    },
    #[error("sample count mismatch between times, states, and energy profile")]
    SampleMismatch,
    #[error("time {0} is not on the sample grid")]
    OffGridTime(f64),
    #[error("time {t} beyond the sampled horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },
    #[error("seam mismatch: W^{{-l,2}} distance {distance} exceeds {SEAM_TOL}")]
    SeamMismatch { distance: f64 },
    #[error("continuation energy {incoming} exceeds head left limit {head_left}")]
    ContinuationEnergy { incoming: f64, head_left: f64 },
    #[error("trajectories live on different grids")]
    GridMismatch,
    #[error("trajectories have different sample grids")]
    TimeGridMismatch,
    #[error("defect family needs at least 3 members, got {0}")]
    FamilyTooSmall(usize),
    #[error("family members do not share initial data")]
    FamilyInitialData,
    #[error(transparent)]
    State(#[from] state::StateError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

// ---------------------------------------------------------------------------
// Energy profile
// ---------------------------------------------------------------------------

/// BV-in-time total-energy record with explicit left/right limits at every
/// sample; `E(0-)` is the prescribed initial energy datum.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    times: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

/// One explicit jump entry of an [`EnergyProfile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyJump {
    pub time: f64,
    pub left: f64,
    pub right: f64,
}

impl EnergyProfile {
    pub fn new(times: Vec<f64>, left: Vec<f64>, right: Vec<f64>) -> Result<Self, TrajectoryError> {
        if times.len() != left.len() || times.len() != right.len() || times.is_empty() {
            return Err(TrajectoryError::SampleMismatch);
        }
        if times[0].abs() > TIME_TOL || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TrajectoryError::BadTimes);
        }
        let profile = Self { times, left, right };
        profile.validate()?;
        Ok(profile)
    }

    /// Continuous profile through `values` with a possible initial jump from
    /// `initial_datum` down to `values[0]`.
    pub fn from_samples(
        initial_datum: f64,
        times: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, TrajectoryError> {
        if times.len() != values.len() {
            return Err(TrajectoryError::SampleMismatch);
        }
        let mut left = values.clone();
        if let Some(first) = left.first_mut() {
            *first = initial_datum;
        }
        Self::new(times, left, values)
    }

    fn validate(&self) -> Result<(), TrajectoryError> {
        for (i, t) in self.times.iter().enumerate() {
            for &v in &[self.left[i], self.right[i]] {
                if !v.is_finite() || v < -ENERGY_MONOTONE_TOL {
                    return Err(TrajectoryError::NegativeEnergy { at: *t, value: v });
                }
            }
            if self.right[i] > self.left[i] + ENERGY_MONOTONE_TOL {
                return Err(TrajectoryError::EnergyIncreases {
                    at: *t,
                    by: self.right[i] - self.left[i],
                });
            }
            if i + 1 < self.times.len() && self.left[i + 1] > self.right[i] + ENERGY_MONOTONE_TOL {
                return Err(TrajectoryError::EnergyIncreases {
                    at: self.times[i + 1],
                    by: self.left[i + 1] - self.right[i],
                });
            }
        }
        Ok(())
    }

    /// `E(0-)`.
    pub fn initial_datum(&self) -> f64 {
        self.left[0]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn left_values(&self) -> &[f64] {
        &self.left
    }

    pub fn right_values(&self) -> &[f64] {
        &self.right
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("profile is nonempty")
    }

    /// Explicit jump entries (samples where the left and right limits differ
    /// beyond roundoff).
    pub fn jump_table(&self) -> Vec<EnergyJump> {
        self.times
            .iter()
            .zip(self.left.iter().zip(&self.right))
            .filter(|(_, (l, r))| (*l - *r).abs() > 1e-14 * l.abs().max(1.0))
            .map(|(&time, (&left, &right))| EnergyJump { time, left, right })
            .collect()
    }

    fn locate(&self, t: f64) -> (usize, Option<f64>) {
        // returns the sample index at-or-before t; Some(theta) when strictly
        // interior to the segment [i, i+1]
        if t <= self.times[0] {
            return (0, None);
        }
        for i in 0..self.times.len() - 1 {
            if (t - self.times[i]).abs() <= TIME_TOL {
                return (i, None);
            }
            if t < self.times[i + 1] - TIME_TOL {
                let theta = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
                return (i, Some(theta));
            }
        }
        (self.times.len() - 1, None)
    }

    /// `E(t-)`; at `t = 0` this is the initial datum.
    pub fn left_limit(&self, t: f64) -> f64 {
        match self.locate(t) {
            (i, None) => self.left[i],
            (i, Some(theta)) => self.right[i] + theta * (self.left[i + 1] - self.right[i]),
        }
    }

    /// `E(t+)`; beyond the horizon the last right value is held.
    pub fn right_limit(&self, t: f64) -> f64 {
        match self.locate(t) {
            (i, None) => self.right[i],
            (i, Some(theta)) => self.right[i] + theta * (self.left[i + 1] - self.right[i]),
        }
    }

    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        for i in 0..self.times.len() {
            if self.right[i] > self.left[i] + tol {
                return false;
            }
            if i + 1 < self.times.len() && self.left[i + 1] > self.right[i] + tol {
                return false;
            }
        }
        true
    }

    /// `\int_0^{t_max} |E_1 - E_2| dt`, exact for the piecewise-linear
    /// representation (merged breakpoints, sign-change splitting).
    pub fn l1_distance(&self, other: &Self, t_max: f64) -> f64 {
        let mut breaks: Vec<f64> = self
            .times
            .iter()
            .chain(other.times.iter())
            .copied()
            .filter(|&t| t < t_max - TIME_TOL)
            .collect();
        breaks.push(t_max);
        breaks.push(0.0);
        breaks.sort_by(|a, b| a.partial_cmp(b).expect("times are finite"));
        breaks.dedup_by(|a, b| (*a - *b).abs() <= TIME_TOL);

        let mut acc = 0.0;
        for w in breaks.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            if t1 <= t0 {
                continue;
            }
            let d0 = self.right_limit(t0) - other.right_limit(t0);
            let d1 = self.left_limit(t1) - other.left_limit(t1);
            acc += integrate_abs_linear(t0, t1, d0, d1);
        }
        acc
    }
}

/// Exact `\int_a^b |l(t)| dt` for the linear function with endpoint values
/// `va`, `vb`.
fn integrate_abs_linear(a: f64, b: f64, va: f64, vb: f64) -> f64 {
    let h = b - a;
    if va * vb >= 0.0 {
        return 0.5 * h * (va.abs() + vb.abs());
    }
    // sign change at the interior root
    let root = va / (va - vb);
    0.5 * h * (root * va.abs() + (1.0 - root) * vb.abs())
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

/// Time-sampled `[rho, m, E]` candidate dissipative solution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<FluidState>,
    energy: EnergyProfile,
    defect_initial: f64,
    defects: Vec<f64>,
    law: PressureLaw,
    provenance: String,
}

impl Trajectory {
    /// Validates the dissipative-solution shadow: nonincreasing energy,
    /// nonnegative defect ledger, constant mass across samples.
    pub fn new(
        states: Vec<FluidState>,
        energy: EnergyProfile,
        law: PressureLaw,
        provenance: impl Into<String>,
    ) -> Result<Self, TrajectoryError> {
        if states.len() != energy.times().len() {
            return Err(TrajectoryError::SampleMismatch);
        }
        let grid0 = states[0].grid();
        if states.iter().any(|s| s.grid() != grid0) {
            return Err(TrajectoryError::GridMismatch);
        }
        let mass0 = states[0].total_mass();
        let mut defects = Vec::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            let mass = s.total_mass();
            if (mass - mass0).abs() > MASS_TOL * mass0.abs().max(1.0) {
                return Err(TrajectoryError::MassDrift {
                    sample: i,
                    initial: mass0,
                    found: mass,
                });
            }
            let defect = energy.right_values()[i] - state::total_energy(s, &law);
            if defect < -DEFECT_TOL {
                return Err(TrajectoryError::NegativeDefect {
                    sample: i,
                    value: defect,
                });
            }
            defects.push(defect);
        }
        let defect_initial = energy.initial_datum() - state::total_energy(&states[0], &law);
        if defect_initial < -DEFECT_TOL {
            return Err(TrajectoryError::NegativeDefect {
                sample: 0,
                value: defect_initial,
            });
        }
        Ok(Self {
            times: energy.times().to_vec(),
            states,
            energy,
            defect_initial,
            defects,
            law,
            provenance: provenance.into(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("trajectory is nonempty")
    }

    pub fn grid(&self) -> TorusGrid {
        self.states[0].grid()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state(&self, sample: usize) -> &FluidState {
        &self.states[sample]
    }

    pub fn states(&self) -> &[FluidState] {
        &self.states
    }

    pub fn energy(&self) -> &EnergyProfile {
        &self.energy
    }

    /// `D(0-) = E(0-) - \int e(rho_0, m_0) dx`.
    pub fn defect_initial(&self) -> f64 {
        self.defect_initial
    }

    pub fn defects(&self) -> &[f64] {
        &self.defects
    }

    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn total_mass(&self) -> f64 {
        self.states[0].total_mass()
    }

    /// Index of a sample time, within [`TIME_TOL`].
    pub fn sample_index(&self, t: f64) -> Result<usize, TrajectoryError> {
        if t > self.horizon() + TIME_TOL {
            return Err(TrajectoryError::BeyondHorizon {
                t,
                horizon: self.horizon(),
            });
        }
        self.times
            .iter()
            .position(|&ti| (ti - t).abs() <= TIME_TOL)
            .ok_or(TrajectoryError::OffGridTime(t))
    }

    pub fn state_at(&self, t: f64) -> Result<&FluidState, TrajectoryError> {
        Ok(&self.states[self.sample_index(t)?])
    }

    /// Re-stamp the initial energy datum `E(0-)`; valid for any value at or
    /// above `E(0+)` (the shift lemma's restart freedom).
    pub fn with_initial_datum(&self, e0: f64) -> Result<Trajectory, TrajectoryError> {
        let mut left = self.energy.left_values().to_vec();
        left[0] = e0;
        let energy = EnergyProfile::new(
            self.energy.times().to_vec(),
            left,
            self.energy.right_values().to_vec(),
        )?;
        Trajectory::new(
            self.states.clone(),
            energy,
            self.law.clone(),
            self.provenance.clone(),
        )
    }
}

// ---------------------------------------------------------------------------
// Shift and continuation
// ---------------------------------------------------------------------------

/// `S_T`: drop the head, re-index time, restart the energy datum at
/// `E(T-)`.
pub fn shift(t: &Trajectory, shift_by: f64) -> Result<Trajectory, TrajectoryError> {
    shift_with_restart(t, shift_by, 1.0)
}

/// Shift with the restart energy `eta E(T-) + (1 - eta) E(T+)`; `eta = 1`
/// recovers the default left-limit restart.
pub fn shift_with_restart(
    t: &Trajectory,
    shift_by: f64,
    eta: f64,
) -> Result<Trajectory, TrajectoryError> {
    assert!((0.0..=1.0).contains(&eta), "eta must lie in [0, 1]");
    if shift_by < -TIME_TOL {
        return Err(TrajectoryError::OffGridTime(shift_by));
    }
    let j = t.sample_index(shift_by.max(0.0))?;
    let restart = eta * t.energy.left_values()[j] + (1.0 - eta) * t.energy.right_values()[j];

    let times: Vec<f64> = t.times[j..].iter().map(|&ti| ti - t.times[j]).collect();
    let states: Vec<FluidState> = t.states[j..].to_vec();
    let mut left: Vec<f64> = t.energy.left_values()[j..].to_vec();
    let right: Vec<f64> = t.energy.right_values()[j..].to_vec();
    left[0] = restart;
    let energy = EnergyProfile::new(times, left, right)?;
    Trajectory::new(
        states,
        energy,
        t.law.clone(),
        format!("shift({}, T={shift_by})", t.provenance),
    )
}

/// `omega_1 \cup_T omega_2`: glue the tail `t2` onto the head of `t1` at
/// time `T`. Requires the tail to start from the head's state at `T` (within
/// the seam tolerance) and `E_2(0-) <= E_1(T-)`.
pub fn continue_at(
    t1: &Trajectory,
    at: f64,
    t2: &Trajectory,
) -> Result<Trajectory, TrajectoryError> {
    if t1.grid() != t2.grid() {
        return Err(TrajectoryError::GridMismatch);
    }
    let j = t1.sample_index(at)?;
    let ell = seam_ell(t1.grid());
    let head_state = &t1.states[j];
    let tail_state = &t2.states[0];
    let d_rho = grid::negative_sobolev_distance(head_state.rho(), tail_state.rho(), ell);
    let d_mom = vector_sobolev_distance(head_state.mom(), tail_state.mom(), ell);
    let distance = (d_rho * d_rho + d_mom * d_mom).sqrt();
    if distance > SEAM_TOL {
        return Err(TrajectoryError::SeamMismatch { distance });
    }
    let head_left = t1.energy.left_limit(at);
    let incoming = t2.energy.initial_datum();
    if incoming > head_left + ENERGY_MONOTONE_TOL {
        return Err(TrajectoryError::ContinuationEnergy {
            incoming,
            head_left,
        });
    }

    // head samples strictly before the seam, then the tail re-indexed; the
    // seam sample takes the tail's state with the head's left limit
    let mut times: Vec<f64> = t1.times[..j].to_vec();
    let mut states: Vec<FluidState> = t1.states[..j].to_vec();
    let mut left: Vec<f64> = t1.energy.left_values()[..j].to_vec();
    let mut right: Vec<f64> = t1.energy.right_values()[..j].to_vec();

    times.extend(t2.times.iter().map(|&ti| ti + t1.times[j]));
    states.extend(t2.states.iter().cloned());
    left.extend_from_slice(t2.energy.left_values());
    right.extend_from_slice(t2.energy.right_values());
    left[j] = head_left;

    let energy = EnergyProfile::new(times, left, right)?;
    Trajectory::new(
        states,
        energy,
        t1.law.clone(),
        format!("glue({}, T={at}, {})", t1.provenance, t2.provenance),
    )
}

/// Default metric exponent for a grid: the smallest integer `> N/2 + 1`.
pub fn seam_ell(grid: TorusGrid) -> u32 {
    (grid.dim() as u32) / 2 + 2
}

pub(crate) fn vector_sobolev_distance(a: &VectorField, b: &VectorField, ell: u32) -> f64 {
    let mut acc = 0.0;
    for axis in 0..a.grid().dim() {
        let d = grid::negative_sobolev_distance(
            &a.component_field(axis),
            &b.component_field(axis),
            ell,
        );
        acc += d * d;
    }
    acc.sqrt()
}

// ---------------------------------------------------------------------------
// Test functions and weak-form residuals
// ---------------------------------------------------------------------------

/// Piecewise-polynomial time profile, used so the time integrals in the weak
/// forms evaluate exactly against piecewise-linear sample data.
///
/// The profile is a C^1 plateau-and-fall bump: value 1 on `[0, fall_start]`,
/// a cubic smoothstep down to 0 on `[fall_start, fall_end]`, 0 after.
#[derive(Debug, Clone)]
pub struct TimeProfile {
    breaks: Vec<f64>,
    /// polynomial coefficients (ascending powers of t) on each piece
    pieces: Vec<Vec<f64>>,
}

impl TimeProfile {
    /// Plateau on `[0, fall_start]`, smooth descent to zero at `fall_end`.
    pub fn bump(fall_start: f64, fall_end: f64) -> Self {
        assert!(
            0.0 <= fall_start && fall_start < fall_end,
            "need 0 <= fall_start < fall_end"
        );
        // cubic smoothstep in u = (fall_end - t)/w: s(u) = 3u^2 - 2u^3,
        // expanded in powers of t
        let w = fall_end - fall_start;
        let (a, b) = (fall_end, w);
        // s(t) = 3((a-t)/b)^2 - 2((a-t)/b)^3
        let c0 = 3.0 * a * a / (b * b) - 2.0 * a * a * a / (b * b * b);
        let c1 = -6.0 * a / (b * b) + 6.0 * a * a / (b * b * b);
        let c2 = 3.0 / (b * b) - 6.0 * a / (b * b * b);
        let c3 = 2.0 / (b * b * b);
        Self {
            breaks: vec![0.0, fall_start, fall_end],
            pieces: vec![vec![1.0], vec![c0, c1, c2, c3], vec![0.0]],
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            pieces: self
                .pieces
                .iter()
                .map(|p| p.iter().map(|c| alpha * c).collect())
                .collect(),
        }
    }

    pub fn support_end(&self) -> f64 {
        *self.breaks.last().expect("profile has pieces")
    }

    fn piece_at(&self, t: f64) -> &[f64] {
        for i in (0..self.breaks.len()).rev() {
            if t >= self.breaks[i] - 1e-14 {
                return &self.pieces[i.min(self.pieces.len() - 1)];
            }
        }
        &self.pieces[0]
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        poly_eval(self.piece_at(t), t)
    }

    pub fn eval_derivative(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        poly_eval(&poly_derivative(self.piece_at(t)), t)
    }

    /// Exact `\int_a^b (c0 + c1 t) * f(t) dt` where `f` is this profile or
    /// its derivative.
    fn integrate_linear_times(&self, a: f64, b: f64, c0: f64, c1: f64, derivative: bool) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.pieces.len() {
            let lo = self.breaks[i].max(a);
            let hi = if i + 1 < self.breaks.len() {
                self.breaks[i + 1].min(b)
            } else {
                b
            };
            if hi <= lo {
                continue;
            }
            let poly = if derivative {
                poly_derivative(&self.pieces[i])
            } else {
                self.pieces[i].clone()
            };
            // (c0 + c1 t) * poly(t), integrated monomial by monomial
            for (j, &pj) in poly.iter().enumerate() {
                let p1 = j as f64 + 1.0;
                let p2 = j as f64 + 2.0;
                acc += pj * c0 * (hi.powf(p1) - lo.powf(p1)) / p1;
                acc += pj * c1 * (hi.powf(p2) - lo.powf(p2)) / p2;
            }
        }
        acc
    }
}

fn poly_eval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &c)| j as f64 * c)
        .collect()
}

/// Real trigonometric polynomial with analytic derivatives.
#[derive(Debug, Clone)]
pub struct TrigPoly {
    /// terms `amp * cos(pi k.x)` or `amp * sin(pi k.x)`
    terms: Vec<(f64, bool, [i64; 2])>,
}

impl TrigPoly {
    pub fn new() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn cos(mut self, amp: f64, k: [i64; 2]) -> Self {
        self.terms.push((amp, true, k));
        self
    }

    pub fn sin(mut self, amp: f64, k: [i64; 2]) -> Self {
        self.terms.push((amp, false, k));
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let pi = std::f64::consts::PI;
        self.terms
            .iter()
            .map(|&(amp, is_cos, k)| {
                let phase = pi * (k[0] as f64 * x[0] + k[1] as f64 * x.get(1).copied().unwrap_or(0.0));
                amp * if is_cos { phase.cos() } else { phase.sin() }
            })
            .sum()
    }

    pub fn grad(&self, x: &[f64], axis: usize) -> f64 {
        let pi = std::f64::consts::PI;
        self.terms
            .iter()
            .map(|&(amp, is_cos, k)| {
                let phase = pi * (k[0] as f64 * x[0] + k[1] as f64 * x.get(1).copied().unwrap_or(0.0));
                let factor = pi * k[axis] as f64;
                amp * if is_cos {
                    -factor * phase.sin()
                } else {
                    factor * phase.cos()
                }
            })
            .sum()
    }

    pub fn sample(&self, grid: TorusGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.eval(x))
    }

    pub fn sample_grad(&self, grid: TorusGrid, axis: usize) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.grad(x, axis))
    }
}

impl Default for TrigPoly {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
enum SpacePart {
    Scalar(TrigPoly),
    Vector(Vec<TrigPoly>),
}

/// Compactly supported space-time test function, a sum of separable
/// `time-bump x trig-polynomial` products (the classes entering the weak
/// forms). Sums keep residual evaluation exactly linear.
#[derive(Debug, Clone)]
pub struct TestFunction {
    components: Vec<(TimeProfile, SpacePart)>,
}

impl TestFunction {
    pub fn scalar(time: TimeProfile, space: TrigPoly) -> Self {
        Self {
            components: vec![(time, SpacePart::Scalar(space))],
        }
    }

    pub fn vector(time: TimeProfile, space: Vec<TrigPoly>) -> Self {
        Self {
            components: vec![(time, SpacePart::Vector(space))],
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        let mut components = self.components.clone();
        for (time, space) in &other.components {
            components.push((time.scaled(alpha), space.clone()));
        }
        Self { components }
    }

    pub fn is_vector(&self) -> bool {
        self.components
            .iter()
            .any(|(_, s)| matches!(s, SpacePart::Vector(_)))
    }

    /// Space-time samples of the test function on a trajectory's grid, one
    /// row per sample time.
    pub fn sample_values(&self, grid: TorusGrid, times: &[f64]) -> Vec<Vec<f64>> {
        times
            .iter()
            .map(|&t| {
                (0..grid.node_count())
                    .map(|node| {
                        let c = grid.coords(node);
                        self.components
                            .iter()
                            .map(|(b, s)| {
                                b.eval(t)
                                    * match s {
                                        SpacePart::Scalar(g) => g.eval(&c[..grid.dim()]),
                                        SpacePart::Vector(gs) => gs[0].eval(&c[..grid.dim()]),
                                    }
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Which balance law a weak-form residual refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeakForm {
    Continuity,
    Momentum,
    Energy,
}

/// Residual of the weak formulation against one test function.
///
/// - `Continuity`: absolute defect of the mass balance identity.
/// - `Momentum`: residual of the momentum identity evaluated on the snapshot
///   fields alone. The defect-measure integrals of the full identity are not
///   observable from a single discrete trajectory, so a nonzero limit value
///   estimates the concentration-defect contribution plus discretization
///   error.
/// - `Energy`: the amount by which the energy inequality fails for `psi >= 0`
///   (0 means it holds); the test function's time profile is used as `psi`.
pub fn weak_form_residual(t: &Trajectory, phi: &TestFunction, eq: WeakForm) -> f64 {
    match eq {
        WeakForm::Continuity => phi
            .components
            .iter()
            .map(|(b, s)| continuity_component(t, b, s))
            .sum(),
        WeakForm::Momentum => phi
            .components
            .iter()
            .map(|(b, s)| momentum_component(t, b, s))
            .sum(),
        WeakForm::Energy => {
            let mut lhs = 0.0;
            for (b, _) in &phi.components {
                lhs += energy_inequality_lhs(t, b);
            }
            lhs.max(0.0)
        }
    }
}

/// Exact `\int_0^{horizon} pwl(t) * b-or-b'(t) dt` where `pwl` linearly
/// interpolates `samples` at the trajectory times.
fn integrate_pwl_against(
    times: &[f64],
    samples: &[f64],
    profile: &TimeProfile,
    derivative: bool,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..times.len() - 1 {
        let (t0, t1) = (times[i], times[i + 1]);
        let (v0, v1) = (samples[i], samples[i + 1]);
        let slope = (v1 - v0) / (t1 - t0);
        // pwl(t) = c0 + c1 t on this interval
        let c1 = slope;
        let c0 = v0 - slope * t0;
        acc += profile.integrate_linear_times(t0, t1, c0, c1, derivative);
    }
    acc
}

fn continuity_component(t: &Trajectory, b: &TimeProfile, s: &SpacePart) -> f64 {
    let g = match s {
        SpacePart::Scalar(g) => g,
        SpacePart::Vector(_) => panic!("continuity residual needs a scalar test function"),
    };
    let grid = t.grid();
    let g_field = g.sample(grid);
    let grads: Vec<ScalarField> = (0..grid.dim()).map(|a| g.sample_grad(grid, a)).collect();

    // G(t) = \int rho g dx and H(t) = \int m . grad g dx at sample times
    let rho_g: Vec<f64> = t
        .states
        .iter()
        .map(|st| grid::inner_product(st.rho(), &g_field))
        .collect();
    let m_gradg: Vec<f64> = t
        .states
        .iter()
        .map(|st| {
            (0..grid.dim())
                .map(|a| grid::inner_product(&st.mom().component_field(a), &grads[a]))
                .sum()
        })
        .collect();

    let tau = t.horizon();
    let boundary = b.eval(tau) * rho_g[rho_g.len() - 1] - b.eval(0.0) * rho_g[0];
    let time_int = integrate_pwl_against(&t.times, &rho_g, b, true)
        + integrate_pwl_against(&t.times, &m_gradg, b, false);
    boundary - time_int
}

fn momentum_component(t: &Trajectory, b: &TimeProfile, s: &SpacePart) -> f64 {
    let gs = match s {
        SpacePart::Vector(gs) => gs,
        SpacePart::Scalar(_) => panic!("momentum residual needs a vector test function"),
    };
    let grid = t.grid();
    let dim = grid.dim();
    let phi: Vec<ScalarField> = (0..dim).map(|a| gs[a].sample(grid)).collect();
    // grad phi_b / axis a
    let grad_phi: Vec<Vec<ScalarField>> = (0..dim)
        .map(|bx| (0..dim).map(|a| gs[bx].sample_grad(grid, a)).collect())
        .collect();

    let m_phi: Vec<f64> = t
        .states
        .iter()
        .map(|st| {
            (0..dim)
                .map(|a| grid::inner_product(&st.mom().component_field(a), &phi[a]))
                .sum()
        })
        .collect();

    // flux contraction (m x m / rho) : grad phi + a rho^gamma div phi
    let flux: Vec<f64> = t
        .states
        .iter()
        .map(|st| {
            let n = grid.node_count();
            let mut acc = 0.0;
            for node in 0..n {
                let r = st.rho().values()[node];
                let mut term = 0.0;
                for bx in 0..dim {
                    let mb = st.mom().component(bx)[node];
                    for a in 0..dim {
                        let ma = st.mom().component(a)[node];
                        let conv = if r > state::VACUUM_FLOOR {
                            ma * mb / r
                        } else {
                            0.0
                        };
                        term += conv * grad_phi[bx][a].values()[node];
                    }
                    term += t.law.pressure(r.max(0.0)) * grad_phi[bx][bx].values()[node];
                }
                acc += term;
            }
            acc / n as f64 * grid.volume()
        })
        .collect();

    let tau = t.horizon();
    let boundary = b.eval(tau) * m_phi[m_phi.len() - 1] - b.eval(0.0) * m_phi[0];
    let time_int = integrate_pwl_against(&t.times, &m_phi, b, true)
        + integrate_pwl_against(&t.times, &flux, b, false);
    boundary - time_int
}

/// `[E psi]_{0-}^{horizon+} - \int E psi' dt`, exact for the piecewise-linear
/// profile with jumps; nonpositive iff the energy inequality holds for this
/// `psi`.
fn energy_inequality_lhs(t: &Trajectory, psi: &TimeProfile) -> f64 {
    let profile = &t.energy;
    let tau = t.horizon();
    let boundary =
        psi.eval(tau) * profile.right_limit(tau) - psi.eval(0.0) * profile.initial_datum();
    let mut time_int = 0.0;
    let times = profile.times();
    for i in 0..times.len() - 1 {
        let (t0, t1) = (times[i], times[i + 1]);
        let (v0, v1) = (profile.right_values()[i], profile.left_values()[i + 1]);
        let slope = (v1 - v0) / (t1 - t0);
        let c0 = v0 - slope * t0;
        time_int += psi.integrate_linear_times(t0, t1, c0, slope, true);
    }
    boundary - time_int
}

// ---------------------------------------------------------------------------
// Trajectory metric and Hausdorff-ready distances
// ---------------------------------------------------------------------------

/// Metric of the discrete trajectory space: sup over samples in `[0, t_max]`
/// of the `W^{-ell,2}` distances of density and momentum, plus the `L^1`
/// distance of the energy profiles.
pub fn trajectory_distance(
    t1: &Trajectory,
    t2: &Trajectory,
    t_max: f64,
    ell: u32,
) -> Result<f64, TrajectoryError> {
    if t1.grid() != t2.grid() {
        return Err(TrajectoryError::GridMismatch);
    }
    let mut max_rho: f64 = 0.0;
    let mut max_mom: f64 = 0.0;
    let mut matched = 0usize;
    for (i, &ti) in t1.times.iter().enumerate() {
        if ti > t_max + TIME_TOL {
            break;
        }
        let j = t2.sample_index(ti).map_err(|_| TrajectoryError::TimeGridMismatch)?;
        matched += 1;
        max_rho = max_rho.max(grid::negative_sobolev_distance(
            t1.states[i].rho(),
            t2.states[j].rho(),
            ell,
        ));
        max_mom = max_mom.max(vector_sobolev_distance(
            t1.states[i].mom(),
            t2.states[j].mom(),
            ell,
        ));
    }
    if matched == 0 {
        return Err(TrajectoryError::TimeGridMismatch);
    }
    let energy_l1 = t1.energy.l1_distance(&t2.energy, t_max);
    Ok(max_rho + max_mom + energy_l1)
}

// ---------------------------------------------------------------------------
// Defect field estimation from an epsilon-family
// ---------------------------------------------------------------------------

/// Coarse-grained local defect estimate from a family of runs with
/// decreasing viscosity: on each cell of width `cell`, the Jensen gap
/// between the averaged energy density of the finest member and the energy
/// density of its cell averages. Nonnegative up to roundoff; its integral
/// approximates the global defect of the vanishing-viscosity limit.
pub fn defect_field_estimate(
    family: &[&Trajectory],
    tau: f64,
    cell: f64,
) -> Result<ScalarField, TrajectoryError> {
    if family.len() < 3 {
        return Err(TrajectoryError::FamilyTooSmall(family.len()));
    }
    let grid0 = family[0].grid();
    let first_state = family[0].state(0);
    for t in family.iter().skip(1) {
        if t.grid() != grid0 {
            return Err(TrajectoryError::GridMismatch);
        }
        let ell = seam_ell(grid0);
        let d_rho = grid::negative_sobolev_distance(t.state(0).rho(), first_state.rho(), ell);
        let d_mom = vector_sobolev_distance(t.state(0).mom(), first_state.mom(), ell);
        if (d_rho * d_rho + d_mom * d_mom).sqrt() > 10.0 * SEAM_TOL {
            return Err(TrajectoryError::FamilyInitialData);
        }
    }
    let finest = family.last().expect("family is nonempty");
    let idx = finest.sample_index(tau)?;
    let st = finest.state(idx);
    let law = finest.law();

    let n = grid0.points_per_dim();
    let dim = grid0.dim();
    let mut cells_per_dim = ((crate::grid::PERIOD / cell).round() as usize).max(1);
    while n % cells_per_dim != 0 {
        cells_per_dim -= 1;
    }
    let block = n / cells_per_dim;

    let mut out = vec![0.0; grid0.node_count()];
    let cell_nodes = block.pow(dim as u32);
    let cells_total = cells_per_dim.pow(dim as u32);
    for cidx in 0..cells_total {
        // cell block coordinates
        let (ci, cj) = if dim == 2 {
            (cidx / cells_per_dim, cidx % cells_per_dim)
        } else {
            (cidx, 0)
        };
        let mut sum_e = 0.0;
        let mut sum_rho = 0.0;
        let mut sum_m = [0.0; 2];
        let mut nodes = Vec::with_capacity(cell_nodes);
        for bi in 0..block {
            if dim == 2 {
                for bj in 0..block {
                    nodes.push((ci * block + bi) * n + (cj * block + bj));
                }
            } else {
                nodes.push(ci * block + bi);
            }
        }
        for &node in &nodes {
            let r = st.rho().values()[node];
            let m: Vec<f64> = (0..dim).map(|a| st.mom().component(a)[node]).collect();
            sum_e += state::kinetic_energy_density(r.max(0.0), &m) + law.potential(r.max(0.0));
            sum_rho += r;
            for a in 0..dim {
                sum_m[a] += m[a];
            }
        }
        let inv = 1.0 / cell_nodes as f64;
        let avg_rho = sum_rho * inv;
        let avg_m: Vec<f64> = (0..dim).map(|a| sum_m[a] * inv).collect();
        let e_of_avg =
            state::kinetic_energy_density(avg_rho.max(0.0), &avg_m) + law.potential(avg_rho.max(0.0));
        let gap = sum_e * inv - e_of_avg;
        for &node in &nodes {
            out[node] = gap;
        }
    }
    Ok(ScalarField::new(grid0, out)?)
}

// ---------------------------------------------------------------------------
// Trajectory directory serialization
// ---------------------------------------------------------------------------

/// Write a trajectory as a directory: `meta`, `times.csv`, per-sample field
/// files, `energy_profile.csv` with columns `t,E_left,E_right`, and
/// `defect.csv`.
pub fn write_trajectory_dir(t: &Trajectory, dir: &std::path::Path) -> Result<(), TrajectoryError> {
    use std::fmt::Write as _;
    std::fs::create_dir_all(dir).map_err(crate::grid::GridError::Io)?;
    let law_line = t
        .law
        .to_key_value()
        .map_err(TrajectoryError::State)?;
    let meta = format!(
        "law={law_line}\nprovenance={}\ndefect_initial={:.17e}\n",
        t.provenance, t.defect_initial
    );
    std::fs::write(dir.join("meta"), meta).map_err(crate::grid::GridError::Io)?;

    let mut times = String::from("t\n");
    for ti in &t.times {
        writeln!(times, "{ti:.17e}").expect("string write cannot fail");
    }
    std::fs::write(dir.join("times.csv"), times).map_err(crate::grid::GridError::Io)?;

    let mut profile = String::from("t,E_left,E_right\n");
    for (i, ti) in t.energy.times().iter().enumerate() {
        writeln!(
            profile,
            "{ti:.17e},{:.17e},{:.17e}",
            t.energy.left_values()[i],
            t.energy.right_values()[i]
        )
        .expect("string write cannot fail");
    }
    std::fs::write(dir.join("energy_profile.csv"), profile)
        .map_err(crate::grid::GridError::Io)?;

    let mut defects = String::from("t,defect\n");
    for (i, ti) in t.times.iter().enumerate() {
        writeln!(defects, "{ti:.17e},{:.17e}", t.defects[i]).expect("string write cannot fail");
    }
    std::fs::write(dir.join("defect.csv"), defects).map_err(crate::grid::GridError::Io)?;

    for (i, st) in t.states.iter().enumerate() {
        grid::write_scalar_csv(st.rho(), &dir.join(format!("rho_{i:04}.csv")))?;
        grid::write_vector_csv(st.mom(), &dir.join(format!("mom_{i:04}.csv")))?;
    }
    Ok(())
}

/// Read a trajectory directory back, re-validating every invariant (a
/// corrupted energy profile is rejected here).
pub fn read_trajectory_dir(dir: &std::path::Path) -> Result<Trajectory, TrajectoryError> {
    let meta =
        std::fs::read_to_string(dir.join("meta")).map_err(crate::grid::GridError::Io)?;
    let mut law = None;
    let mut provenance = String::from("unknown");
    for line in meta.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "law" => {
                    law = Some(
                        PressureLaw::from_key_value(v.trim()).map_err(TrajectoryError::State)?,
                    )
                }
                "provenance" => provenance = v.trim().to_string(),
                _ => {}
            }
        }
    }
    let law = law.ok_or_else(|| {
        TrajectoryError::State(state::StateError::InvalidLaw(
            "trajectory meta is missing the pressure law".into(),
        ))
    })?;

    let profile_text = std::fs::read_to_string(dir.join("energy_profile.csv"))
        .map_err(crate::grid::GridError::Io)?;
    let mut times = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for line in profile_text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(TrajectoryError::SampleMismatch);
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| TrajectoryError::BadTimes);
        times.push(parse(parts[0])?);
        left.push(parse(parts[1])?);
        right.push(parse(parts[2])?);
    }
    let energy = EnergyProfile::new(times.clone(), left, right)?;

    let mut states = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let rho = grid::read_scalar_csv(&dir.join(format!("rho_{i:04}.csv")))?;
        let mom = grid::read_vector_csv(&dir.join(format!("mom_{i:04}.csv")))?;
        states.push(FluidState::new(rho, mom).map_err(TrajectoryError::State)?);
    }
    Trajectory::new(states, energy, law, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ScalarField, TorusGrid, VectorField};
    use crate::state::{FluidState, PressureLaw};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn law() -> PressureLaw {
        PressureLaw::isentropic(1.0, 2.0).unwrap()
    }

    fn grid() -> TorusGrid {
        TorusGrid::new(1, 16).unwrap()
    }

    fn equilibrium_traj(n_samples: usize, dt: f64, e0_extra: f64) -> Trajectory {
        let g = grid();
        let (state, e_m) = crate::state::equilibrium_state(2.0, &law(), g).unwrap();
        let times: Vec<f64> = (0..n_samples).map(|i| i as f64 * dt).collect();
        let states = vec![state; n_samples];
        let energy =
            EnergyProfile::from_samples(e_m + e0_extra, times, vec![e_m; n_samples]).unwrap();
        Trajectory::new(states, energy, law(), "equilibrium").unwrap()
    }

    /// Synthetic wavy trajectory with constant mass and a nonincreasing
    /// energy profile that dominates the field energy.
    fn wavy_traj(n_samples: usize, dt: f64, seed: u64) -> Trajectory {
        let g = grid();
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        let mut r = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 1000) as f64 / 1000.0
        };
        let times: Vec<f64> = (0..n_samples).map(|i| i as f64 * dt).collect();
        let mut states = Vec::new();
        let mut field_energy = Vec::new();
        for _ in 0..n_samples {
            let (a, b, c) = (0.3 * r(), 0.2 * r(), 0.3 * r());
            let rho = ScalarField::from_fn(g, |x| 1.0 + a * (PI * x[0]).sin() + b * (2.0 * PI * x[0]).cos());
            let mom = VectorField::from_fn(g, |x, _| c * (PI * x[0]).cos());
            let st = FluidState::new(rho, mom).unwrap();
            field_energy.push(crate::state::total_energy(&st, &law()));
            states.push(st);
        }
        // nonincreasing envelope above the field energies
        let mut values = vec![0.0; n_samples];
        let mut run = field_energy[n_samples - 1] + 0.05 * r();
        for i in (0..n_samples).rev() {
            run = run.max(field_energy[i] + 0.02 * r());
            values[i] = run;
            run += 0.0; // keep nonincreasing forward in time
        }
        // enforce nonincreasing by a backward max scan
        for i in (0..n_samples - 1).rev() {
            values[i] = values[i].max(values[i + 1]);
        }
        let e0 = values[0] + 0.1;
        let energy = EnergyProfile::from_samples(e0, times, values).unwrap();
        Trajectory::new(states, energy, law(), format!("wavy-{seed}")).unwrap()
    }

    #[test]
    fn profile_limits_and_jumps() {
        let times = vec![0.0, 0.5, 1.0];
        let profile = EnergyProfile::new(
            times,
            vec![5.0, 4.0, 3.0],
            vec![4.5, 3.5, 3.0],
        )
        .unwrap();
        assert_eq!(profile.initial_datum(), 5.0);
        assert_eq!(profile.left_limit(0.0), 5.0);
        assert_eq!(profile.right_limit(0.0), 4.5);
        assert_abs_diff_eq!(profile.left_limit(0.25), 4.25);
        assert_eq!(profile.left_limit(0.5), 4.0);
        assert_eq!(profile.right_limit(0.5), 3.5);
        assert_eq!(profile.jump_table().len(), 2);
        assert!(profile.is_nonincreasing(1e-12));
    }

    #[test]
    fn profile_rejects_increase() {
        let err = EnergyProfile::from_samples(1.0, vec![0.0, 1.0], vec![1.0, 1.5]);
        assert!(matches!(err, Err(TrajectoryError::EnergyIncreases { .. })));
        let err2 = EnergyProfile::new(vec![0.0], vec![1.0], vec![1.1]);
        assert!(matches!(err2, Err(TrajectoryError::EnergyIncreases { .. })));
    }

    #[test]
    fn profile_l1_distance_constant_offset() {
        let t = vec![0.0, 1.0, 2.0];
        let p1 = EnergyProfile::from_samples(3.0, t.clone(), vec![3.0, 2.0, 1.0]).unwrap();
        let p2 = EnergyProfile::from_samples(3.5, t, vec![3.5, 2.5, 1.5]).unwrap();
        assert_abs_diff_eq!(p1.l1_distance(&p2, 2.0), 1.0, epsilon = 1e-12);
        // sign-change case: both profiles nonincreasing, difference crosses 0
        let t2 = vec![0.0, 1.0];
        let a = EnergyProfile::from_samples(1.0, t2.clone(), vec![1.0, 0.0]).unwrap();
        let b = EnergyProfile::from_samples(0.5, t2, vec![0.5, 0.5]).unwrap();
        // difference runs linearly from +1/2 to -1/2: integral of |..| = 1/4
        assert_abs_diff_eq!(a.l1_distance(&b, 1.0), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn shift_identities() {
        let t = wavy_traj(9, 0.25, 3);
        let s0 = shift(&t, 0.0).unwrap();
        assert_eq!(s0.times(), t.times());
        for (a, b) in s0.states().iter().zip(t.states()) {
            assert_eq!(a.rho().values(), b.rho().values());
        }
        assert_eq!(s0.energy().initial_datum(), t.energy().initial_datum());

        let s1 = shift(&shift(&t, 0.5).unwrap(), 0.25).unwrap();
        let s2 = shift(&t, 0.75).unwrap();
        assert_eq!(s1.len(), s2.len());
        for (a, b) in s1.times().iter().zip(s2.times()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in s1.states().iter().zip(s2.states()) {
            assert_eq!(a.rho().values(), b.rho().values());
        }
        assert_abs_diff_eq!(
            s1.energy().initial_datum(),
            s2.energy().initial_datum(),
            epsilon = 1e-12
        );

        let eq = equilibrium_traj(9, 0.25, 0.0);
        let eq_shifted = shift(&eq, 1.0).unwrap();
        for st in eq_shifted.states() {
            assert_eq!(st.rho().values(), eq.state(0).rho().values());
        }
    }

    #[test]
    fn continuation_round_trips() {
        let t = wavy_traj(9, 0.25, 11);
        let tail = shift(&t, 1.0).unwrap();
        let glued = continue_at(&t, 1.0, &tail).unwrap();
        assert_eq!(glued.len(), t.len());
        for (a, b) in glued.states().iter().zip(t.states()) {
            assert_eq!(a.rho().values(), b.rho().values());
        }
        for (i, (a, b)) in glued
            .energy()
            .right_values()
            .iter()
            .zip(t.energy().right_values())
            .enumerate()
        {
            assert!((a - b).abs() < 1e-12, "sample {i}");
        }

        // definition chase: shift(continue_at(t1, T, t2), T) = t2
        let back = shift(&glued, 1.0).unwrap();
        assert_eq!(back.len(), tail.len());
        for (a, b) in back.states().iter().zip(tail.states()) {
            assert_eq!(a.rho().values(), b.rho().values());
            assert_eq!(a.mom().component(0), b.mom().component(0));
        }
        for (a, b) in back
            .energy()
            .right_values()
            .iter()
            .zip(tail.energy().right_values())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn continuation_rejects_energy_above_head() {
        let t = wavy_traj(9, 0.25, 7);
        let tail = shift(&t, 1.0).unwrap();
        // inflate the tail's initial energy above E(T-)
        let bumped = EnergyProfile::new(
            tail.energy().times().to_vec(),
            {
                let mut l = tail.energy().left_values().to_vec();
                l[0] = t.energy().left_limit(1.0) + 1.0;
                l
            },
            tail.energy().right_values().to_vec(),
        )
        .unwrap();
        let tail_bumped =
            Trajectory::new(tail.states().to_vec(), bumped, law(), "bumped").unwrap();
        let err = continue_at(&t, 1.0, &tail_bumped);
        assert!(matches!(
            err,
            Err(TrajectoryError::ContinuationEnergy { .. })
        ));
    }

    #[test]
    fn shift_rejects_times_beyond_or_off_the_grid() {
        let t = wavy_traj(9, 0.25, 13);
        assert!(matches!(
            shift(&t, 5.0),
            Err(TrajectoryError::BeyondHorizon { .. })
        ));
        assert!(matches!(
            shift(&t, 0.3),
            Err(TrajectoryError::OffGridTime(_))
        ));
    }

    #[test]
    fn continuation_rejects_seam_mismatch() {
        let t = wavy_traj(9, 0.25, 5);
        let other = wavy_traj(9, 0.25, 99);
        let err = continue_at(&t, 1.0, &other);
        assert!(matches!(err, Err(TrajectoryError::SeamMismatch { .. })));
    }

    #[test]
    fn equilibrium_weak_residuals_vanish() {
        let t = equilibrium_traj(9, 0.25, 0.0);
        let bump = TimeProfile::bump(0.8, 1.6);
        let phi = TestFunction::scalar(
            bump.clone(),
            TrigPoly::new().cos(0.7, [1, 0]).sin(0.4, [2, 0]).cos(0.2, [0, 0]),
        );
        let r = weak_form_residual(&t, &phi, WeakForm::Continuity);
        assert!(r.abs() < 1e-10, "continuity residual {r}");

        let phiv = TestFunction::vector(bump, vec![TrigPoly::new().sin(0.5, [1, 0])]);
        let rm = weak_form_residual(&t, &phiv, WeakForm::Momentum);
        assert!(rm.abs() < 1e-10, "momentum residual {rm}");
    }

    #[test]
    fn energy_residual_zero_for_valid_profiles() {
        for seed in [1, 2, 3, 4] {
            let t = wavy_traj(9, 0.25, seed);
            let psi = TestFunction::scalar(TimeProfile::bump(0.7, 1.7), TrigPoly::new());
            let r = weak_form_residual(&t, &psi, WeakForm::Energy);
            assert!(r <= 1e-12, "energy residual {r}");
        }
    }

    #[test]
    fn momentum_residual_matches_closed_forms_in_2d() {
        // static states: the boundary and d_t terms cancel exactly, leaving
        // residual = -F * \int b(t) dt with F the spatial flux integral
        let g = TorusGrid::new(2, 16).unwrap();
        let lw = law();
        let b = TimeProfile::bump(0.5, 1.5);
        let times: Vec<f64> = (0..9).map(|i| i as f64 * 0.25).collect();
        let int_b = 1.0; // plateau 0.5 + smoothstep fall w/2 = 0.5
        let make_traj = |rho: ScalarField, mom: VectorField| {
            let st = FluidState::new(rho, mom).unwrap();
            let e = crate::state::total_energy(&st, &lw);
            let profile =
                EnergyProfile::from_samples(e + 0.5, times.clone(), vec![e + 0.2; 9]).unwrap();
            Trajectory::new(vec![st; 9], profile, lw.clone(), "static").unwrap()
        };

        // convective probe: rho = 1 (p = 1 constant drops out), momentum
        // along axis 1 only; F = \int m1^2 d_1 phi_1 = pi/2
        let rho = ScalarField::constant(g, 1.0);
        let mom = VectorField::from_fn(g, |x, axis| {
            if axis == 1 {
                (PI * x[0]).sin() * (PI * x[1]).sin()
            } else {
                0.0
            }
        });
        let t = make_traj(rho, mom);
        // phi_1 = cos(2 pi x0) sin(2 pi x1), written via the product
        // identity cos a sin b = (sin(a+b) - sin(a-b)) / 2
        let phi1 = TrigPoly::new().sin(0.5, [2, 2]).sin(-0.5, [2, -2]);
        let phi = TestFunction::vector(b.clone(), vec![TrigPoly::new(), phi1]);
        let r = weak_form_residual(&t, &phi, WeakForm::Momentum);
        let expect = -(PI / 2.0) * int_b;
        assert_abs_diff_eq!(r, expect, epsilon = 1e-10);

        // pressure probe: m = 0, rho = 1 + cos(pi x0)/2, gamma = 2;
        // F = \int rho^2 div phi = 2 pi for phi_0 = sin(pi x0)
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.5 * (PI * x[0]).cos());
        let t = make_traj(rho, VectorField::zero(g));
        let phi = TestFunction::vector(
            b,
            vec![TrigPoly::new().sin(1.0, [1, 0]), TrigPoly::new()],
        );
        let r = weak_form_residual(&t, &phi, WeakForm::Momentum);
        let expect = -(2.0 * PI) * int_b;
        assert_abs_diff_eq!(r, expect, epsilon = 1e-10);
    }

    #[test]
    fn continuity_residual_is_linear_in_test_function() {
        let t = wavy_traj(9, 0.25, 21);
        let phi1 = TestFunction::scalar(
            TimeProfile::bump(0.6, 1.4),
            TrigPoly::new().cos(0.9, [1, 0]),
        );
        let phi2 = TestFunction::scalar(
            TimeProfile::bump(0.9, 1.9),
            TrigPoly::new().sin(0.5, [3, 0]),
        );
        let alpha = 1.7;
        let combo = phi2.add_scaled(alpha, &phi1);
        let r_combo = weak_form_residual(&t, &combo, WeakForm::Continuity);
        let r1 = weak_form_residual(&t, &phi1, WeakForm::Continuity);
        let r2 = weak_form_residual(&t, &phi2, WeakForm::Continuity);
        assert!((r_combo - (alpha * r1 + r2)).abs() < 1e-12);
    }

    #[test]
    fn metric_axioms_and_equilibria_closed_form() {
        let t = wavy_traj(9, 0.25, 31);
        assert_abs_diff_eq!(trajectory_distance(&t, &t, 2.0, 2).unwrap(), 0.0);

        let u = wavy_traj(9, 0.25, 32);
        let d1 = trajectory_distance(&t, &u, 2.0, 2).unwrap();
        let d2 = trajectory_distance(&u, &t, 2.0, 2).unwrap();
        assert_abs_diff_eq!(d1, d2, epsilon = 1e-12);

        // two equilibria with masses M, M': constant-field norms only
        let g = grid();
        let lw = law();
        let build = |mass: f64| {
            let (st, em) = crate::state::equilibrium_state(mass, &lw, g).unwrap();
            let times: Vec<f64> = (0..9).map(|i| i as f64 * 0.25).collect();
            let energy = EnergyProfile::from_samples(em, times, vec![em; 9]).unwrap();
            Trajectory::new(vec![st; 9], energy, lw.clone(), "eq").unwrap()
        };
        let (m1, m2) = (2.0, 2.6);
        let ta = build(m1);
        let tb = build(m2);
        let t_max = 2.0;
        let d = trajectory_distance(&ta, &tb, t_max, 2).unwrap();
        let vol = g.volume();
        let e1 = lw.potential(m1 / vol) * vol;
        let e2 = lw.potential(m2 / vol) * vol;
        let expected = (m2 - m1) / vol * vol.sqrt() + (e2 - e1).abs() * t_max;
        assert_abs_diff_eq!(d, expected, epsilon = 1e-10);
    }

    #[test]
    fn defect_estimate_zero_for_equilibria() {
        let t1 = equilibrium_traj(9, 0.25, 0.0);
        let t2 = equilibrium_traj(9, 0.25, 0.0);
        let t3 = equilibrium_traj(9, 0.25, 0.0);
        let field = defect_field_estimate(&[&t1, &t2, &t3], 1.0, 0.25).unwrap();
        assert!(field.max_abs() < 1e-13);
        let err = defect_field_estimate(&[&t1, &t2], 1.0, 0.25);
        assert!(matches!(err, Err(TrajectoryError::FamilyTooSmall(2))));
    }

    #[test]
    fn defect_ledger_and_inflated_datum() {
        let t = equilibrium_traj(5, 0.5, 1.0);
        assert_abs_diff_eq!(t.defect_initial(), 1.0, epsilon = 1e-12);
        for &d in t.defects() {
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_dir_round_trip_and_corruption() {
        let t = wavy_traj(5, 0.25, 77);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj");
        write_trajectory_dir(&t, &path).unwrap();
        let back = read_trajectory_dir(&path).unwrap();
        assert_eq!(back.len(), t.len());
        for (a, b) in back.states().iter().zip(t.states()) {
            assert_eq!(a.rho().values(), b.rho().values());
        }
        assert_eq!(back.energy().left_values(), t.energy().left_values());
        assert_eq!(back.energy().right_values(), t.energy().right_values());
        assert_eq!(back.provenance(), t.provenance());

        // hand-corrupt the energy profile so it increases; the reader must
        // reject it
        let profile_path = path.join("energy_profile.csv");
        let text = std::fs::read_to_string(&profile_path).unwrap();
        let mut lines: Vec<String> = text.lines().map(|s| s.to_string()).collect();
        let parts: Vec<&str> = lines[2].split(',').collect();
        let t2: f64 = parts[0].parse().unwrap();
        let bumped = t.energy().initial_datum() + 5.0;
        lines[2] = format!("{t2:.17e},{bumped:.17e},{bumped:.17e}");
        std::fs::write(&profile_path, lines.join("\n")).unwrap();
        let err = read_trajectory_dir(&path);
        assert!(
            matches!(err, Err(TrajectoryError::EnergyIncreases { .. })),
            "corrupted profile must be rejected, got {err:?}"
        );
    }

    #[test]
    fn time_profile_is_c1_and_integrates_exactly() {
        let b = TimeProfile::bump(0.5, 1.5);
        assert_eq!(b.eval(0.0), 1.0);
        assert_eq!(b.eval(0.4), 1.0);
        assert!(b.eval(2.0).abs() < 1e-15);
        // C^1 joins: derivative vanishes at both ends of the fall
        assert!(b.eval_derivative(0.5 + 1e-9).abs() < 1e-6);
        assert!(b.eval_derivative(1.5 - 1e-9).abs() < 1e-6);
        assert_abs_diff_eq!(b.eval(1.0), 0.5, epsilon = 1e-12);

        // \int_0^2 1 * b'(t) dt telescopes exactly to b(2) - b(0) = -1
        let total = b.integrate_linear_times(0.0, 2.0, 1.0, 0.0, true);
        assert_abs_diff_eq!(total, -1.0, epsilon = 1e-12);
        // \int of b against 1 matches dense quadrature
        let exact = b.integrate_linear_times(0.0, 2.0, 1.0, 0.0, false);
        let dense: f64 = (0..200_000)
            .map(|i| b.eval((i as f64 + 0.5) * 1e-5))
            .sum::<f64>()
            * 1e-5;
        assert_abs_diff_eq!(exact, dense, epsilon = 1e-8);
    }
}
