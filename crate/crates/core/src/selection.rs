//! Krylov-style semiflow selection over finite trajectory ensembles:
//! exponentially discounted functionals, iterated epsilon-argmin, the
//! admissibility (maximal-dissipation) stage, semigroup verification, and
//! Hausdorff diagnostics.

use crate::grid::{self, ScalarField, TorusGrid, VectorField};
use crate::state::{self, PressureLaw};
use crate::trajectory::{
    self, shift, trajectory_distance, Trajectory, TrajectoryError, SEAM_TOL, TIME_TOL,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Base tie tolerance; stages resolve ties within `tol * (1 + |min|)`.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("ensemble must be nonempty")]
    EmptyEnsemble,
    #[error("member {member} does not start from the shared initial data (distance {distance})")]
    InitialDataMismatch { member: usize, distance: f64 },
    #[error("member {member} has initial energy datum {found}, ensemble prescribes {want}")]
    EnergyDatumMismatch { member: usize, found: f64, want: f64 },
    #[error("members live on different grids or sample grids")]
    GridMismatch,
    #[error("trajectory horizon {horizon} shorter than requested T_max {t_max}")]
    HorizonTooShort { horizon: f64, t_max: f64 },
    #[error("restart state fails data-set membership: {0:?}")]
    RestartNotMember(state::Membership),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

// ---------------------------------------------------------------------------
// Ensemble
// ---------------------------------------------------------------------------

/// A finite set of trajectories sharing initial data `[rho0, m0, E0]` and a
/// common sample grid; the discrete stand-in for the solution set.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<Trajectory>,
    e0: f64,
}

impl Ensemble {
    pub fn new(members: Vec<Trajectory>) -> Result<Self, SelectionError> {
        if members.is_empty() {
            return Err(SelectionError::EmptyEnsemble);
        }
        let first = &members[0];
        let e0 = first.energy().initial_datum();
        let ell = trajectory::seam_ell(first.grid());
        for (i, m) in members.iter().enumerate().skip(1) {
            if m.grid() != first.grid() || m.len() != first.len() {
                return Err(SelectionError::GridMismatch);
            }
            if m
                .times()
                .iter()
                .zip(first.times())
                .any(|(a, b)| (a - b).abs() > TIME_TOL)
            {
                return Err(SelectionError::GridMismatch);
            }
            let d_rho =
                grid::negative_sobolev_distance(m.state(0).rho(), first.state(0).rho(), ell);
            let d_mom = trajectory::vector_sobolev_distance(
                m.state(0).mom(),
                first.state(0).mom(),
                ell,
            );
            let distance = (d_rho * d_rho + d_mom * d_mom).sqrt();
            if distance > SEAM_TOL {
                return Err(SelectionError::InitialDataMismatch {
                    member: i,
                    distance,
                });
            }
            let found = m.energy().initial_datum();
            if (found - e0).abs() > 1e-9 * (1.0 + e0.abs()) {
                return Err(SelectionError::EnergyDatumMismatch {
                    member: i,
                    found,
                    want: e0,
                });
            }
        }
        Ok(Self { members, e0 })
    }

    pub fn members(&self) -> &[Trajectory] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &Trajectory {
        &self.members[i]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn initial_energy(&self) -> f64 {
        self.e0
    }

    pub fn grid(&self) -> TorusGrid {
        self.members[0].grid()
    }

    pub fn horizon(&self) -> f64 {
        self.members[0].horizon()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            members: indices.iter().map(|&i| self.members[i].clone()).collect(),
            e0: self.e0,
        }
    }
}

// ---------------------------------------------------------------------------
// Functionals
// ---------------------------------------------------------------------------

/// The fixed comparison map `beta(z) = tanh(z / scale)`: smooth, bounded,
/// strictly increasing. The scale keeps it from saturating at typical
/// energies.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Beta {
    scale: f64,
}

impl Beta {
    pub fn new(scale: f64) -> Self {
        assert!(scale > 0.0, "beta scale must be positive");
        Self { scale }
    }

    /// Scale `max(1, e0)` for an ensemble with initial energy `e0`.
    pub fn for_energy(e0: f64) -> Self {
        Self::new(e0.max(1.0))
    }

    pub fn eval(&self, z: f64) -> f64 {
        (z / self.scale).tanh()
    }

    /// `sup |beta| = 1` for tanh.
    pub fn sup_abs(&self) -> f64 {
        1.0
    }

    /// Sampled sanity check of strict monotonicity and boundedness.
    pub fn is_valid(&self) -> bool {
        let mut prev = f64::NEG_INFINITY;
        let mut z = -8.0 * self.scale;
        while z <= 8.0 * self.scale {
            let v = self.eval(z);
            if !(v > prev) || v.abs() > 1.0 {
                return false;
            }
            prev = v;
            z += 0.25 * self.scale;
        }
        true
    }
}

/// What the discounted functional observes along the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FunctionalForm {
    /// `beta(E(t))`
    Energy,
    /// `beta(<rho(t), e_n>)`, trigonometric density basis
    DensityMode(usize),
    /// `beta(<m(t), w_m>)`, interleaved vector basis
    MomentumMode(usize),
}

impl FunctionalForm {
    fn label(&self) -> String {
        match self {
            Self::Energy => "energy".into(),
            Self::DensityMode(n) => format!("density_mode({n})"),
            Self::MomentumMode(m) => format!("momentum_mode({m})"),
        }
    }
}

/// Descriptor of one discounted functional
/// `I[omega] = \int_0^inf e^{-lambda t} F(omega(t)) dt`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KrylovFunctional {
    pub lambda: f64,
    pub form: FunctionalForm,
    pub beta: Beta,
}

impl KrylovFunctional {
    pub fn new(lambda: f64, form: FunctionalForm, beta: Beta) -> Self {
        assert!(lambda > 0.0, "discount rate must be positive");
        Self { lambda, form, beta }
    }
}

/// Finite-horizon value of a functional with its certified tail bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub value: f64,
    pub tail_bound: f64,
}

// Real trigonometric L^2 basis, ordered by total frequency then axis.
// Index 0 is the normalized constant; each later frequency contributes the
// cos/sin (and in 2D, product) combinations.
fn density_basis_terms(dim: usize, index: usize) -> Vec<(f64, [bool; 2], [i64; 2])> {
    // each term: (amplitude, per-axis is_cos, per-axis mode); mode 0 means
    // the constant factor (is_cos irrelevant)
    let norm_const = 1.0 / 2.0f64.powi(dim as i32).sqrt();
    if dim == 1 {
        if index == 0 {
            return vec![(norm_const, [true, true], [0, 0])];
        }
        let j = ((index - 1) / 2 + 1) as i64;
        let is_cos = index % 2 == 1;
        return vec![(1.0, [is_cos, true], [j, 0])];
    }
    // 2D: enumerate by total frequency, then k0 ascending, then the
    // cos/sin variants per nonzero axis
    let mut count = 0usize;
    for total in 0.. {
        for k0 in 0..=total {
            let k1 = total - k0;
            let variants0: &[bool] = if k0 == 0 { &[true] } else { &[true, false] };
            let variants1: &[bool] = if k1 == 0 { &[true] } else { &[true, false] };
            for &c0 in variants0 {
                for &c1 in variants1 {
                    if count == index {
                        let amp0 = if k0 == 0 { 1.0 / 2.0f64.sqrt() } else { 1.0 };
                        let amp1 = if k1 == 0 { 1.0 / 2.0f64.sqrt() } else { 1.0 };
                        return vec![(amp0 * amp1, [c0, c1], [k0 as i64, k1 as i64])];
                    }
                    count += 1;
                }
            }
        }
    }
    unreachable!()
}

/// `n`-th element of the trigonometric density basis, sampled on a grid.
pub fn density_basis(grid: TorusGrid, index: usize) -> ScalarField {
    let terms = density_basis_terms(grid.dim(), index);
    let pi = std::f64::consts::PI;
    ScalarField::from_fn(grid, |x| {
        terms
            .iter()
            .map(|&(amp, is_cos, k)| {
                let mut v = amp;
                for axis in 0..grid.dim() {
                    if k[axis] != 0 {
                        let phase = pi * k[axis] as f64 * x[axis];
                        v *= if is_cos[axis] { phase.cos() } else { phase.sin() };
                    } else if grid.dim() == 1 || k[axis] == 0 {
                        // constant factor already in amp
                    }
                }
                v
            })
            .sum()
    })
}

/// `m`-th element of the vector basis `w_m = e_n * unit axis vector`, axes
/// interleaved. Returns the active axis and the scalar profile.
pub fn momentum_basis(grid: TorusGrid, index: usize) -> (usize, ScalarField) {
    let dim = grid.dim();
    let axis = index % dim;
    let scalar_index = index / dim;
    (axis, density_basis(grid, scalar_index))
}

// 7-point Gauss-Legendre nodes and weights on [-1, 1]
const GL7_X: [f64; 7] = [
    -0.9491079123427585,
    -0.7415311855993945,
    -0.4058451513773972,
    0.0,
    0.4058451513773972,
    0.7415311855993945,
    0.9491079123427585,
];
const GL7_W: [f64; 7] = [
    0.1294849661688697,
    0.2797053914892766,
    0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892766,
    0.1294849661688697,
];

/// Quadrature of `\int_0^{t_max} e^{-lambda t} beta(observable(t)) dt`: the
/// observable (energy or a basis pairing) is linearly interpolated between
/// samples honoring jumps, `beta` applied pointwise, and each segment
/// integrated with 7-point Gauss-Legendre. A certified tail bound
/// `e^{-lambda t_max} sup|beta-tail| / lambda` is reported separately.
pub fn evaluate_functional(
    functional: &KrylovFunctional,
    t: &Trajectory,
    t_max: f64,
) -> Result<FunctionalValue, SelectionError> {
    if t.horizon() < t_max - TIME_TOL {
        return Err(SelectionError::HorizonTooShort {
            horizon: t.horizon(),
            t_max,
        });
    }
    let lambda = functional.lambda;
    let beta = &functional.beta;
    let times = t.times();

    // per-segment endpoint values of the observable, honoring energy jumps
    let (seg_a, seg_b): (Vec<f64>, Vec<f64>) = match functional.form {
        FunctionalForm::Energy => (
            t.energy().right_values().to_vec(),
            t.energy().left_values().to_vec(),
        ),
        FunctionalForm::DensityMode(n) => {
            let basis = density_basis(t.grid(), n);
            let vals: Vec<f64> = t
                .states()
                .iter()
                .map(|s| grid::inner_product(s.rho(), &basis))
                .collect();
            (vals.clone(), vals)
        }
        FunctionalForm::MomentumMode(m) => {
            let (axis, basis) = momentum_basis(t.grid(), m);
            let vals: Vec<f64> = t
                .states()
                .iter()
                .map(|s| grid::inner_product(&s.mom().component_field(axis), &basis))
                .collect();
            (vals.clone(), vals)
        }
    };

    let mut value = 0.0;
    for i in 0..times.len() - 1 {
        let t0 = times[i];
        let t1 = times[i + 1].min(t_max);
        if t1 <= t0 {
            break;
        }
        let full = times[i + 1] - times[i];
        let (va, vb_full) = (seg_a[i], seg_b[i + 1]);
        let half = (t1 - t0) / 2.0;
        let mid = (t1 + t0) / 2.0;
        for (x, w) in GL7_X.iter().zip(GL7_W) {
            let tt = mid + half * x;
            let obs = va + (tt - t0) / full * (vb_full - va);
            value += w * half * (-lambda * tt).exp() * beta.eval(obs);
        }
        if t1 >= t_max {
            break;
        }
    }

    // certified tail: for the energy form the profile beyond t_max stays in
    // [0, E(t_max+)] and beta is increasing; mode forms use sup|beta| = 1
    let tail_sup = match functional.form {
        FunctionalForm::Energy => beta.eval(t.energy().right_limit(t_max)).abs(),
        _ => beta.sup_abs(),
    };
    let tail_bound = tail_sup * (-lambda * t_max).exp() / lambda;
    Ok(FunctionalValue { value, tail_bound })
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

/// Finite enumeration of the functional family: index triples `(k, n, m)`
/// covering `(k,0,0)`, `(k,n,0)`, `(k,0,m)` once each up to the caps,
/// diagonal over the three families so low-order members of every family
/// appear early. The discount rates are `lambda_k = k/4`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalSchedule {
    triples: Vec<(u32, u32, u32)>,
    pub k_cap: u32,
    pub n_cap: u32,
    pub m_cap: u32,
}

impl FunctionalSchedule {
    pub fn diagonal(k_cap: u32, n_cap: u32, m_cap: u32) -> Self {
        let mut triples = Vec::new();
        // weight of a triple: k for the pure-energy family, k+n resp. k+m
        // for the mode families
        let max_weight = k_cap + n_cap.max(m_cap);
        for w in 1..=max_weight {
            if w <= k_cap {
                triples.push((w, 0, 0));
            }
            for k in 1..k_cap.min(w) + 1 {
                let rest = w as i64 - k as i64;
                if rest >= 1 && rest <= n_cap as i64 {
                    triples.push((k, rest as u32, 0));
                }
            }
            for k in 1..k_cap.min(w) + 1 {
                let rest = w as i64 - k as i64;
                if rest >= 1 && rest <= m_cap as i64 {
                    triples.push((k, 0, rest as u32));
                }
            }
        }
        Self {
            triples,
            k_cap,
            n_cap,
            m_cap,
        }
    }

    pub fn triples(&self) -> &[(u32, u32, u32)] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn lambda(k: u32) -> f64 {
        k as f64 / 4.0
    }

    /// Materialize the scheduled functionals; basis indices are 1-based in
    /// the triples (0 means "not this family").
    pub fn functionals(&self, e0: f64) -> Vec<KrylovFunctional> {
        let beta = Beta::for_energy(e0);
        self.triples
            .iter()
            .map(|&(k, n, m)| {
                let form = if n > 0 {
                    FunctionalForm::DensityMode((n - 1) as usize)
                } else if m > 0 {
                    FunctionalForm::MomentumMode((m - 1) as usize)
                } else {
                    FunctionalForm::Energy
                };
                KrylovFunctional::new(Self::lambda(k), form, beta)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Selection stages
// ---------------------------------------------------------------------------

/// One row of a stage report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberEval {
    pub member: usize,
    pub value: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub label: String,
    pub lambda: f64,
    pub form: String,
    pub evals: Vec<MemberEval>,
    pub survivors: Vec<usize>,
    pub tie_flagged: bool,
}

/// Keep the members whose functional value lies within `tol` of the minimum
/// (exact argmin at `tol = 0`); never empty.
pub fn argmin_select(
    ens: &Ensemble,
    functional: &KrylovFunctional,
    tol: f64,
) -> Result<Ensemble, SelectionError> {
    let (sub, _) = argmin_select_with_report(ens, functional, tol, "argmin")?;
    Ok(sub)
}

fn argmin_select_with_report(
    ens: &Ensemble,
    functional: &KrylovFunctional,
    tol: f64,
    label: &str,
) -> Result<(Ensemble, StageReport), SelectionError> {
    let t_max = ens.horizon();
    let values: Vec<FunctionalValue> = ens
        .members
        .par_iter()
        .map(|m| evaluate_functional(functional, m, t_max))
        .collect::<Result<_, _>>()?;
    let min = values
        .iter()
        .map(|v| v.value)
        .fold(f64::INFINITY, f64::min);
    let survivors: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.value <= min + tol)
        .map(|(i, _)| i)
        .collect();
    let report = StageReport {
        label: label.to_string(),
        lambda: functional.lambda,
        form: functional.form.label(),
        evals: values
            .iter()
            .enumerate()
            .map(|(member, v)| MemberEval {
                member,
                value: v.value,
                tail_bound: v.tail_bound,
            })
            .collect(),
        survivors: survivors.clone(),
        tie_flagged: survivors.len() > 1,
    };
    Ok((ens.subset(&survivors), report))
}

/// The admissibility stage: minimize `I_{1, beta o E}`. By the maximal-
/// dissipation lemma every survivor is minimal for the energy-comparison
/// relation within the ensemble; this is re-verified against the all-pairs
/// check.
pub fn admissible_select(ens: &Ensemble) -> Result<Ensemble, SelectionError> {
    let (sub, _, verified) = admissible_select_with_report(ens, DEFAULT_TIE_TOL)?;
    debug_assert!(verified, "an admissible survivor failed the all-pairs check");
    Ok(sub)
}

fn admissible_select_with_report(
    ens: &Ensemble,
    base_tol: f64,
) -> Result<(Ensemble, StageReport, bool), SelectionError> {
    let functional = KrylovFunctional::new(
        1.0,
        FunctionalForm::Energy,
        Beta::for_energy(ens.initial_energy()),
    );
    let t_max = ens.horizon();
    let values: Vec<FunctionalValue> = ens
        .members
        .par_iter()
        .map(|m| evaluate_functional(&functional, m, t_max))
        .collect::<Result<_, _>>()?;
    let min = values
        .iter()
        .map(|v| v.value)
        .fold(f64::INFINITY, f64::min);
    let tol = base_tol * (1.0 + min.abs());
    let survivors: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.value <= min + tol)
        .map(|(i, _)| i)
        .collect();
    let verified = survivors
        .iter()
        .all(|&i| check_admissibility(ens.member(i), ens));
    let report = StageReport {
        label: "admissible".into(),
        lambda: 1.0,
        form: "energy".into(),
        evals: values
            .iter()
            .enumerate()
            .map(|(member, v)| MemberEval {
                member,
                value: v.value,
                tail_bound: v.tail_bound,
            })
            .collect(),
        survivors: survivors.clone(),
        tie_flagged: survivors.len() > 1,
    };
    Ok((ens.subset(&survivors), report, verified))
}

/// True iff no ensemble member has a pointwise-smaller energy profile with a
/// strict gap somewhere: the discrete shadow of minimality for the
/// energy-comparison relation.
pub fn check_admissibility(candidate: &Trajectory, ens: &Ensemble) -> bool {
    let tol = 1e-9 * (1.0 + ens.initial_energy().abs());
    let cand = candidate.energy();
    for other in &ens.members {
        let oth = other.energy();
        let mut dominates = true;
        let mut strict = false;
        for i in 0..cand.times().len() {
            let pairs = [
                (oth.left_values()[i], cand.left_values()[i]),
                (oth.right_values()[i], cand.right_values()[i]),
            ];
            for (o, c) in pairs {
                if o > c + tol {
                    dominates = false;
                    break;
                }
                if o < c - tol {
                    strict = true;
                }
            }
            if !dominates {
                break;
            }
        }
        if dominates && strict {
            return false;
        }
    }
    true
}

/// Full outcome of the iterated selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// index of the selected member in the input ensemble
    pub selected: usize,
    /// members still tied after the whole schedule
    pub survivors: Vec<usize>,
    pub stages: Vec<StageReport>,
    /// more than one numerically indistinguishable survivor remained; the
    /// first by member ordering was returned
    pub multiplicity_flagged: bool,
    /// surviving duplicates are equal as sampled functions
    pub duplicates_flagged: bool,
    /// every admissibility-stage survivor passed the all-pairs minimality
    /// check
    pub admissibility_verified: bool,
}

impl SelectionOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection reports serialize")
    }
}

/// Apply the admissibility stage, then every scheduled functional in order,
/// shrinking the ensemble by epsilon-argmin; ties within
/// `tol * (1 + |min|)` survive to the next stage. Returns the sole survivor
/// or, if several remain numerically indistinguishable, the first by member
/// ordering with the multiplicity flag raised.
pub fn semiflow_select(
    ens: &Ensemble,
    schedule: &FunctionalSchedule,
    tol: f64,
) -> Result<SelectionOutcome, SelectionError> {
    let mut stages = Vec::new();
    let (mut current, admissible_report, admissibility_verified) =
        admissible_select_with_report(ens, tol)?;
    // map from current-subset positions to original indices
    let mut alive: Vec<usize> = admissible_report.survivors.clone();
    stages.push(admissible_report);

    for (stage_idx, functional) in schedule.functionals(ens.initial_energy()).iter().enumerate() {
        if current.len() == 1 {
            break;
        }
        let t_max = current.horizon();
        let values: Vec<FunctionalValue> = current
            .members
            .par_iter()
            .map(|m| evaluate_functional(functional, m, t_max))
            .collect::<Result<_, _>>()?;
        let min = values
            .iter()
            .map(|v| v.value)
            .fold(f64::INFINITY, f64::min);
        let stage_tol = tol * (1.0 + min.abs());
        let keep: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.value <= min + stage_tol)
            .map(|(i, _)| i)
            .collect();
        stages.push(StageReport {
            label: format!("stage[{stage_idx}]"),
            lambda: functional.lambda,
            form: functional.form.label(),
            evals: values
                .iter()
                .enumerate()
                .map(|(pos, v)| MemberEval {
                    member: alive[pos],
                    value: v.value,
                    tail_bound: v.tail_bound,
                })
                .collect(),
            survivors: keep.iter().map(|&pos| alive[pos]).collect(),
            tie_flagged: keep.len() > 1,
        });
        alive = keep.iter().map(|&pos| alive[pos]).collect();
        current = current.subset(&keep);
    }

    let multiplicity_flagged = alive.len() > 1;
    let duplicates_flagged = multiplicity_flagged && {
        let first = ens.member(alive[0]);
        alive.iter().skip(1).all(|&i| {
            trajectory_distance(
                first,
                ens.member(i),
                ens.horizon(),
                trajectory::seam_ell(ens.grid()),
            )
            .map(|d| d < 1e-12)
            .unwrap_or(false)
        })
    };
    Ok(SelectionOutcome {
        selected: alive[0],
        survivors: alive,
        stages,
        multiplicity_flagged,
        duplicates_flagged,
        admissibility_verified,
    })
}

// ---------------------------------------------------------------------------
// Hausdorff diagnostics
// ---------------------------------------------------------------------------

/// Symmetrized Hausdorff distance between two finite ensembles in the
/// trajectory metric.
pub fn hausdorff_distance(
    a: &Ensemble,
    b: &Ensemble,
    t_max: f64,
    ell: u32,
) -> Result<f64, SelectionError> {
    let one_sided = |from: &Ensemble, to: &Ensemble| -> Result<f64, SelectionError> {
        let mut worst = 0.0f64;
        for m in &from.members {
            let mut best = f64::INFINITY;
            for o in &to.members {
                best = best.min(trajectory_distance(m, o, t_max, ell)?);
            }
            worst = worst.max(best);
        }
        Ok(worst)
    };
    Ok(one_sided(a, b)?.max(one_sided(b, a)?))
}

// ---------------------------------------------------------------------------
// Semigroup verification
// ---------------------------------------------------------------------------

/// Report of one semigroup experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemigroupReport {
    pub t1: f64,
    pub t2: f64,
    /// trajectory distance between the shifted original selection and the
    /// re-selected trajectory over `[0, t2]`
    pub deviation: f64,
    pub restart_members: usize,
    pub shifted_tails_included: usize,
    pub selected_original: usize,
    pub selected_restart: usize,
}

/// Run the selection from the original data, restart it from the selected
/// state at `t1` with the left energy limit, re-select over a regenerated
/// ensemble (fresh members from `ens_builder`, plus the shifted tails of
/// matching original members unless withheld), and report the deviation on
/// `[0, t2]`.
pub fn check_semigroup<S, B>(
    select: S,
    ens_builder: B,
    data: (&ScalarField, &VectorField, f64),
    t1: f64,
    t2: f64,
    ell: u32,
    include_shifted_tails: bool,
    law: &PressureLaw,
) -> Result<SemigroupReport, SelectionError>
where
    S: Fn(&Ensemble) -> Result<SelectionOutcome, SelectionError>,
    B: Fn(&ScalarField, &VectorField, f64, f64) -> Result<Ensemble, SelectionError>,
{
    let (rho0, mom0, e0) = data;
    let horizon = t1 + t2;
    let ens0 = ens_builder(rho0, mom0, e0, horizon)?;
    let out0 = select(&ens0)?;
    let selected = ens0.member(out0.selected);

    let restart_state = selected.state_at(t1)?;
    let e_restart = selected.energy().left_limit(t1);
    let membership = state::validate_data_membership(
        restart_state.rho(),
        restart_state.mom(),
        e_restart,
        law,
    );
    if !membership.is_member() {
        return Err(SelectionError::RestartNotMember(membership));
    }

    let mut members: Vec<Trajectory> = Vec::new();
    let mut shifted_count = 0usize;
    if include_shifted_tails {
        for m in ens0.members() {
            let Ok(state_at) = m.state_at(t1) else {
                continue;
            };
            let d_rho =
                grid::negative_sobolev_distance(state_at.rho(), restart_state.rho(), ell);
            let d_mom =
                trajectory::vector_sobolev_distance(state_at.mom(), restart_state.mom(), ell);
            if (d_rho * d_rho + d_mom * d_mom).sqrt() > SEAM_TOL {
                continue;
            }
            let tail = shift(m, t1)?;
            // restamp the restart datum; the shift lemma admits any value
            // at or above E(t1+)
            if let Ok(tail) = tail.with_initial_datum(e_restart) {
                members.push(tail);
                shifted_count += 1;
            }
        }
    }
    let fresh = ens_builder(restart_state.rho(), restart_state.mom(), e_restart, t2)?;
    members.extend(fresh.members().iter().cloned());
    let ens1 = Ensemble::new(members)?;
    let out1 = select(&ens1)?;

    let original_tail = shift(selected, t1)?;
    let deviation = trajectory_distance(&original_tail, ens1.member(out1.selected), t2, ell)?;
    Ok(SemigroupReport {
        t1,
        t2,
        deviation,
        restart_members: ens1.len(),
        shifted_tails_included: shifted_count,
        selected_original: out0.selected,
        selected_restart: out1.selected,
    })
}
