//! State variables, energy functions with the convex kinetic-energy
//! extension, pressure laws, and data-set membership.

use crate::grid::{self, GridError, ScalarField, TorusGrid, VectorField};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Densities below this are treated as exact vacuum.
pub const VACUUM_FLOOR: f64 = 1e-10;
/// Largest momentum norm tolerated on a vacuum cell.
pub const MOMENTUM_FLOOR: f64 = 1e-8;
/// Relative slack on the data-set energy inequality (quadrature noise).
pub const MEMBERSHIP_SLACK: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("negative density {value} at node {node}")]
    NegativeDensity { node: usize, value: f64 },
    #[error("vacuum cell {node} carries momentum {mom_norm}: infinite kinetic energy")]
    VacuumWithMomentum { node: usize, mom_norm: f64 },
    #[error("density and momentum live on different grids")]
    GridMismatch,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid pressure law: {0}")]
    InvalidLaw(String),
}

/// Barotropic pressure law `p = p(rho)` with its potential
/// `P'(rho) rho - P(rho) = p(rho)`.
#[derive(Clone)]
pub enum PressureLaw {
    /// `p = a rho^gamma`, `a > 0`, `gamma > 1`.
    Isentropic { a: f64, gamma: f64 },
    /// General monotone law given by `p` and its potential `P`, with the
    /// asymptotic adiabatic exponent `p/P -> gamma - 1` at large densities.
    General {
        pressure: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        potential: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        gamma_limit: f64,
    },
}

impl fmt::Debug for PressureLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Isentropic { a, gamma } => {
                write!(f, "PressureLaw::Isentropic {{ a: {a}, gamma: {gamma} }}")
            }
            Self::General { gamma_limit, .. } => {
                write!(f, "PressureLaw::General {{ gamma_limit: {gamma_limit} }}")
            }
        }
    }
}

impl PressureLaw {
    pub fn isentropic(a: f64, gamma: f64) -> Result<Self, StateError> {
        if !(a > 0.0) {
            return Err(StateError::InvalidLaw(format!("need a > 0, got {a}")));
        }
        if !(gamma > 1.0) {
            return Err(StateError::InvalidLaw(format!(
                "need gamma > 1, got {gamma}"
            )));
        }
        Ok(Self::Isentropic { a, gamma })
    }

    /// A general law is checked numerically: `p' > 0` on positive samples and
    /// `p/P` close to `gamma - 1` at large densities.
    pub fn general(
        pressure: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        potential: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        gamma_limit: f64,
    ) -> Result<Self, StateError> {
        if !(gamma_limit > 1.0) {
            return Err(StateError::InvalidLaw(format!(
                "need asymptotic gamma > 1, got {gamma_limit}"
            )));
        }
        let h = 1e-6;
        for i in 1..=40 {
            let rho = 0.25 * i as f64;
            let slope = ((pressure)(rho + h) - (pressure)(rho - h)) / (2.0 * h);
            if slope <= 0.0 {
                return Err(StateError::InvalidLaw(format!(
                    "p'({rho}) = {slope} is not positive"
                )));
            }
        }
        for &rho in &[1e3, 1e4, 1e5] {
            let ratio = (pressure)(rho) / (potential)(rho);
            if (ratio - (gamma_limit - 1.0)).abs() > 0.05 * gamma_limit {
                return Err(StateError::InvalidLaw(format!(
                    "p/P at rho = {rho} is {ratio}, far from gamma - 1 = {}",
                    gamma_limit - 1.0
                )));
            }
        }
        Ok(Self::General {
            pressure,
            potential,
            gamma_limit,
        })
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        match self {
            Self::Isentropic { a, gamma } => {
                if rho <= 0.0 {
                    0.0
                } else {
                    a * rho.powf(*gamma)
                }
            }
            Self::General { pressure, .. } => (pressure)(rho.max(0.0)),
        }
    }

    /// Pressure potential `P`; for the isentropic law `a/(gamma-1) rho^gamma`.
    pub fn potential(&self, rho: f64) -> f64 {
        match self {
            Self::Isentropic { a, gamma } => {
                if rho <= 0.0 {
                    0.0
                } else {
                    a / (gamma - 1.0) * rho.powf(*gamma)
                }
            }
            Self::General { potential, .. } => (potential)(rho.max(0.0)),
        }
    }

    /// `P'(rho)`, needed by the relative energy. Closed form for the
    /// isentropic law, central differences otherwise.
    pub fn potential_derivative(&self, rho: f64) -> f64 {
        match self {
            Self::Isentropic { a, gamma } => {
                if rho <= 0.0 {
                    0.0
                } else {
                    a * gamma / (gamma - 1.0) * rho.powf(gamma - 1.0)
                }
            }
            Self::General { potential, .. } => {
                let h = 1e-6 * rho.abs().max(1.0);
                ((potential)(rho + h) - (potential)((rho - h).max(0.0))) / (2.0 * h)
            }
        }
    }

    /// Sound speed `sqrt(p'(rho))`, used for CFL estimates.
    pub fn sound_speed(&self, rho: f64) -> f64 {
        match self {
            Self::Isentropic { a, gamma } => {
                if rho <= 0.0 {
                    0.0
                } else {
                    (a * gamma * rho.powf(gamma - 1.0)).sqrt()
                }
            }
            Self::General { pressure, .. } => {
                let h = 1e-6 * rho.abs().max(1.0);
                let slope = ((pressure)(rho + h) - (pressure)((rho - h).max(0.0))) / (2.0 * h);
                slope.max(0.0).sqrt()
            }
        }
    }

    /// Key-value serialization, `kind=isentropic a=1.0 gamma=1.4`.
    pub fn to_key_value(&self) -> Result<String, StateError> {
        match self {
            Self::Isentropic { a, gamma } => Ok(format!("kind=isentropic a={a} gamma={gamma}")),
            Self::General { .. } => Err(StateError::InvalidLaw(
                "general laws are constructed programmatically and do not serialize".into(),
            )),
        }
    }

    pub fn from_key_value(text: &str) -> Result<Self, StateError> {
        let mut kind = None;
        let mut a = None;
        let mut gamma = None;
        for token in text.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| StateError::InvalidLaw(format!("bad token {token:?}")))?;
            match key {
                "kind" => kind = Some(value.to_string()),
                "a" => {
                    a = Some(value.parse::<f64>().map_err(|_| {
                        StateError::InvalidLaw(format!("bad coefficient {value:?}"))
                    })?)
                }
                "gamma" => {
                    gamma = Some(value.parse::<f64>().map_err(|_| {
                        StateError::InvalidLaw(format!("bad exponent {value:?}"))
                    })?)
                }
                other => {
                    return Err(StateError::InvalidLaw(format!("unknown key {other:?}")));
                }
            }
        }
        match kind.as_deref() {
            Some("isentropic") => Self::isentropic(
                a.ok_or_else(|| StateError::InvalidLaw("missing a".into()))?,
                gamma.ok_or_else(|| StateError::InvalidLaw("missing gamma".into()))?,
            ),
            other => Err(StateError::InvalidLaw(format!("unknown kind {other:?}"))),
        }
    }
}

/// Density and momentum fields on a torus grid at one time instant.
#[derive(Debug, Clone)]
pub struct FluidState {
    rho: ScalarField,
    mom: VectorField,
}

impl FluidState {
    /// Rejects negative densities (beyond the vacuum floor) and vacuum cells
    /// carrying momentum.
    pub fn new(rho: ScalarField, mom: VectorField) -> Result<Self, StateError> {
        if rho.grid() != mom.grid() {
            return Err(StateError::GridMismatch);
        }
        for (node, &r) in rho.values().iter().enumerate() {
            if r < -VACUUM_FLOOR {
                return Err(StateError::NegativeDensity { node, value: r });
            }
            if r < VACUUM_FLOOR {
                let mn = mom.norm_at(node);
                if mn > MOMENTUM_FLOOR {
                    return Err(StateError::VacuumWithMomentum { node, mom_norm: mn });
                }
            }
        }
        Ok(Self { rho, mom })
    }

    pub fn grid(&self) -> TorusGrid {
        self.rho.grid()
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    pub fn mom(&self) -> &VectorField {
        &self.mom
    }

    pub fn total_mass(&self) -> f64 {
        grid::integrate(&self.rho)
    }
}

/// Convex kinetic energy `|m|^2 / (2 rho)` with its three-case extension:
/// `0` on exact vacuum with zero momentum, `+inf` on vacuum carrying
/// momentum.
pub fn kinetic_energy_density(rho: f64, mom: &[f64]) -> f64 {
    debug_assert!(rho >= -VACUUM_FLOOR, "negative density {rho}");
    let mom_sq: f64 = mom.iter().map(|&m| m * m).sum();
    if rho > VACUUM_FLOOR {
        0.5 * mom_sq / rho
    } else if mom_sq.sqrt() <= MOMENTUM_FLOOR {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Pointwise total energy density `e(rho, m) = e_kin + P(rho)`; may contain
/// the `+inf` sentinel on invalid vacuum cells.
pub fn energy_density(state: &FluidState, law: &PressureLaw) -> Vec<f64> {
    let g = state.grid();
    (0..g.node_count())
        .map(|node| {
            let r = state.rho().values()[node];
            let m: Vec<f64> = (0..g.dim()).map(|a| state.mom().component(a)[node]).collect();
            kinetic_energy_density(r, &m) + law.potential(r.max(0.0))
        })
        .collect()
}

/// `E = \int [ |m|^2/(2 rho) + P(rho) ] dx`; `+inf` propagates from vacuum
/// cells carrying momentum.
pub fn total_energy(state: &FluidState, law: &PressureLaw) -> f64 {
    let dens = energy_density(state, law);
    if dens.iter().any(|e| e.is_infinite()) {
        return f64::INFINITY;
    }
    let mean = dens.iter().sum::<f64>() / dens.len() as f64;
    mean * state.grid().volume()
}

/// Pressure potential of a single density value.
pub fn pressure_potential(law: &PressureLaw, rho: f64) -> f64 {
    law.potential(rho)
}

/// Outcome of the data-set membership test for `[rho0, m0, E0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Membership {
    Member,
    NegativeDensity { node: usize },
    VacuumWithMomentum { node: usize },
    EnergyExceedsBudget { energy: f64, budget: f64 },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member)
    }
}

/// `[rho0, m0, E0]` belongs to the data set iff `rho0 >= 0` and the total
/// energy of the fields does not exceed `E0` (with relative slack).
pub fn validate_data_membership(
    rho0: &ScalarField,
    mom0: &VectorField,
    e0: f64,
    law: &PressureLaw,
) -> Membership {
    assert_eq!(rho0.grid(), mom0.grid(), "fields live on different grids");
    let g = rho0.grid();
    for (node, &r) in rho0.values().iter().enumerate() {
        if r < -VACUUM_FLOOR {
            return Membership::NegativeDensity { node };
        }
        if r < VACUUM_FLOOR && mom0.norm_at(node) > MOMENTUM_FLOOR {
            return Membership::VacuumWithMomentum { node };
        }
    }
    let mut acc = 0.0;
    for node in 0..g.node_count() {
        let r = rho0.values()[node];
        let m: Vec<f64> = (0..g.dim()).map(|a| mom0.component(a)[node]).collect();
        acc += kinetic_energy_density(r.max(0.0), &m) + law.potential(r.max(0.0));
    }
    let energy = acc / g.node_count() as f64 * g.volume();
    if energy > e0 + MEMBERSHIP_SLACK * e0.abs().max(1.0) {
        return Membership::EnergyExceedsBudget { energy, budget: e0 };
    }
    Membership::Member
}

/// Constant-density rest state of total mass `M` with its energy
/// `E_M = \int P(M / |T^N|) dx`.
pub fn equilibrium_state(
    mass: f64,
    law: &PressureLaw,
    grid: TorusGrid,
) -> Result<(FluidState, f64), StateError> {
    if mass < 0.0 {
        return Err(StateError::NegativeDensity {
            node: 0,
            value: mass,
        });
    }
    let rho_m = mass / grid.volume();
    let state = FluidState::new(
        ScalarField::constant(grid, rho_m),
        VectorField::zero(grid),
    )?;
    let energy = law.potential(rho_m) * grid.volume();
    Ok((state, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn law_gamma2() -> PressureLaw {
        PressureLaw::isentropic(1.0, 2.0).unwrap()
    }

    #[test]
    fn kinetic_energy_extension_cases() {
        assert_eq!(kinetic_energy_density(0.0, &[0.0]), 0.0);
        assert_abs_diff_eq!(kinetic_energy_density(2.0, &[2.0]), 1.0);
        assert!(kinetic_energy_density(0.0, &[1.0]).is_infinite());
    }

    #[test]
    fn total_energy_constant_states() {
        let g = TorusGrid::new(1, 16).unwrap();
        let s = FluidState::new(ScalarField::constant(g, 1.0), VectorField::zero(g)).unwrap();
        assert_abs_diff_eq!(total_energy(&s, &law_gamma2()), 2.0, epsilon = 1e-13);

        let g2 = TorusGrid::new(2, 8).unwrap();
        let m = VectorField::from_fn(g2, |_, axis| if axis == 0 { 1.0 } else { 0.0 });
        let s2 = FluidState::new(ScalarField::constant(g2, 1.0), m).unwrap();
        assert_abs_diff_eq!(total_energy(&s2, &law_gamma2()), 6.0, epsilon = 1e-13);
    }

    #[test]
    fn total_energy_matches_refined_quadrature() {
        // quadrature oracle: the same smooth analytic state sampled on an
        // 8x finer grid
        let rho_fn = |x: &[f64]| 1.0 + 0.4 * (PI * x[0]).sin();
        let mom_fn = |x: &[f64]| 0.3 * (2.0 * PI * x[0]).cos();
        let coarse = TorusGrid::new(1, 64).unwrap();
        let fine = TorusGrid::new(1, 512).unwrap();
        let make = |g: TorusGrid| {
            FluidState::new(
                ScalarField::from_fn(g, rho_fn),
                VectorField::from_fn(g, |x, _| mom_fn(x)),
            )
            .unwrap()
        };
        let law = law_gamma2();
        let e_coarse = total_energy(&make(coarse), &law);
        let e_fine = total_energy(&make(fine), &law);
        assert_abs_diff_eq!(e_coarse, e_fine, epsilon = 1e-10);
    }

    #[test]
    fn pressure_potential_identity() {
        let law = law_gamma2();
        assert_abs_diff_eq!(pressure_potential(&law, 3.0), 9.0);
        // P' rho - P = p at rho = 3: 6*3 - 9 = 9
        assert_abs_diff_eq!(
            law.potential_derivative(3.0) * 3.0 - law.potential(3.0),
            law.pressure(3.0)
        );
        assert_eq!(pressure_potential(&law, 0.0), 0.0);

        // finite-difference residual of the defining identity
        let law2 = PressureLaw::isentropic(2.0, 1.4).unwrap();
        let rho = 1.7;
        assert_abs_diff_eq!(
            pressure_potential(&law2, rho),
            2.0 / 0.4 * rho.powf(1.4),
            epsilon = 1e-12
        );
        let h = 1e-5;
        let p_prime = (law2.potential(rho + h) - law2.potential(rho - h)) / (2.0 * h);
        let residual = p_prime * rho - law2.potential(rho) - law2.pressure(rho);
        assert!(residual.abs() < 1e-8);
    }

    #[test]
    fn potential_identity_on_log_grid() {
        let law = PressureLaw::isentropic(0.7, 1.5).unwrap();
        let mut rho = 1e-2;
        while rho < 1e3 {
            let h = 1e-6 * rho;
            let p_prime = (law.potential(rho + h) - law.potential(rho - h)) / (2.0 * h);
            let residual = p_prime * rho - law.potential(rho) - law.pressure(rho);
            assert!(
                residual.abs() < 1e-8 * law.pressure(rho).max(1.0),
                "rho = {rho}: residual {residual}"
            );
            rho *= 3.0;
        }
    }

    #[test]
    fn membership_boundary_cases() {
        let g = TorusGrid::new(1, 16).unwrap();
        let rho = ScalarField::constant(g, 1.0);
        let mom = VectorField::zero(g);
        let law = law_gamma2();
        assert!(validate_data_membership(&rho, &mom, 2.0, &law).is_member());
        assert!(matches!(
            validate_data_membership(&rho, &mom, 1.9, &law),
            Membership::EnergyExceedsBudget { .. }
        ));
        let mut bad = vec![1.0; 16];
        bad[3] = -0.5;
        let rho_bad = ScalarField::new(g, bad).unwrap();
        assert!(matches!(
            validate_data_membership(&rho_bad, &mom, 10.0, &law),
            Membership::NegativeDensity { node: 3 }
        ));
    }

    #[test]
    fn equilibria() {
        let law = law_gamma2();
        let g = TorusGrid::new(1, 16).unwrap();
        let (s, e) = equilibrium_state(2.0, &law, g).unwrap();
        assert!(s.rho().values().iter().all(|&r| (r - 1.0).abs() < 1e-15));
        assert_abs_diff_eq!(e, 2.0);
        assert_abs_diff_eq!(total_energy(&s, &law), e);

        let (vac, e0) = equilibrium_state(0.0, &law, g).unwrap();
        assert_eq!(e0, 0.0);
        assert_eq!(total_energy(&vac, &law), 0.0);

        let g2 = TorusGrid::new(2, 8).unwrap();
        let (s2, e2) = equilibrium_state(4.0, &law, g2).unwrap();
        assert!(s2.rho().values().iter().all(|&r| (r - 1.0).abs() < 1e-15));
        assert_abs_diff_eq!(e2, 4.0);
    }

    #[test]
    fn vacuum_with_momentum_rejected() {
        let g = TorusGrid::new(1, 16).unwrap();
        let mut rho = vec![1.0; 16];
        rho[5] = 0.0;
        let mut mom = vec![0.0; 16];
        mom[5] = 0.5;
        let err = FluidState::new(
            ScalarField::new(g, rho).unwrap(),
            VectorField::new(g, vec![mom]).unwrap(),
        );
        assert!(matches!(
            err,
            Err(StateError::VacuumWithMomentum { node: 5, .. })
        ));
    }

    #[test]
    fn general_law_validation() {
        let law = PressureLaw::general(
            Arc::new(|rho: f64| rho.powf(1.4) + 0.1 * rho),
            Arc::new(|rho: f64| rho.powf(1.4) / 0.4 + 0.1 * rho * rho.max(1e-300).ln()),
            1.4,
        );
        assert!(law.is_ok());

        let bad = PressureLaw::general(
            Arc::new(|rho: f64| -rho),
            Arc::new(|rho: f64| rho),
            1.4,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn law_key_value_round_trip() {
        let law = PressureLaw::isentropic(1.0, 1.4).unwrap();
        let text = law.to_key_value().unwrap();
        assert_eq!(text, "kind=isentropic a=1 gamma=1.4");
        match PressureLaw::from_key_value(&text).unwrap() {
            PressureLaw::Isentropic { a, gamma } => {
                assert_eq!(a, 1.0);
                assert_eq!(gamma, 1.4);
            }
            _ => panic!("wrong kind"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Jensen lower bound: \int rho^gamma >= |T|^{1-gamma} M^gamma, with
        /// equality only for constant density.
        #[test]
        fn jensen_lower_bound(amp in 0.0f64..0.9, mode in 1i64..5, base in 0.5f64..2.0) {
            let g = TorusGrid::new(1, 32).unwrap();
            let gamma = 2.0;
            let rho = ScalarField::from_fn(g, |x| base * (1.0 + amp * (PI * mode as f64 * x[0]).sin()));
            let mass = grid::integrate(&rho);
            let pow = rho.map(|r| r.powf(gamma));
            let lhs = grid::integrate(&pow);
            let bound = g.volume().powf(1.0 - gamma) * mass.powf(gamma);
            prop_assert!(lhs >= bound - 1e-12 * bound.abs());
        }

        /// Joint convexity of the kinetic energy on {rho > 0}.
        #[test]
        fn kinetic_energy_convexity(
            r1 in 0.1f64..5.0, m1 in -3.0f64..3.0,
            r2 in 0.1f64..5.0, m2 in -3.0f64..3.0,
            theta in 0.0f64..1.0,
        ) {
            let mid_r = theta * r1 + (1.0 - theta) * r2;
            let mid_m = theta * m1 + (1.0 - theta) * m2;
            let lhs = kinetic_energy_density(mid_r, &[mid_m]);
            let rhs = theta * kinetic_energy_density(r1, &[m1])
                + (1.0 - theta) * kinetic_energy_density(r2, &[m2]);
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
