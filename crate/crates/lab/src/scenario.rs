//! Initial-data generation for the configured scenarios.

use crate::config::{ConfigError, EnergyPolicy, Generator, ScenarioConfig};
use semiflow_core::grid::{ScalarField, TorusGrid, VectorField};
use semiflow_core::state::{self, FluidState, Membership};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] semiflow_core::grid::GridError),
    #[error(transparent)]
    State(#[from] state::StateError),
    #[error("generated data fails data-set membership: {0:?}")]
    NotMember(Membership),
}

/// Shared initial data of a scenario: fields plus the prescribed energy
/// datum.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub rho: ScalarField,
    pub mom: VectorField,
    pub e0: f64,
    /// energy of the fields themselves (`e0 - field_energy` is the
    /// prescribed initial defect)
    pub field_energy: f64,
}

pub fn grid_of(cfg: &ScenarioConfig) -> Result<TorusGrid, ScenarioError> {
    Ok(TorusGrid::new(cfg.dim, cfg.points_per_dim)?)
}

fn generate_fields(
    generator: &Generator,
    grid: TorusGrid,
) -> Result<(ScalarField, VectorField), ScenarioError> {
    match generator {
        Generator::Equilibrium { mass } => {
            let rho = ScalarField::constant(grid, mass / grid.volume());
            Ok((rho, VectorField::zero(grid)))
        }
        Generator::SmoothWave {
            amplitude,
            mode,
            skew,
        } => {
            let k = *mode as f64;
            let a = *amplitude;
            let s = *skew;
            let rho = ScalarField::from_fn(grid, move |x| {
                let mut v = 1.0 + a * (PI * k * x[0]).sin();
                if s {
                    v += 0.5 * a * (2.0 * PI * k * x[0] + 0.7).cos();
                }
                v
            });
            let mom = VectorField::from_fn(grid, move |x, axis| {
                if axis != 0 {
                    return 0.0;
                }
                let mut v = a * (PI * k * x[0]).cos();
                if s {
                    v -= 0.3 * a * (2.0 * PI * k * x[0] - 0.4).sin();
                }
                v
            });
            Ok((rho, mom))
        }
        Generator::Riemann {
            left,
            right,
            smoothing: _,
        } => {
            // the jump itself; mollification happens on the solver path
            let (l, r) = (*left, *right);
            let rho = ScalarField::from_fn(grid, move |x| if x[0].abs() < 0.5 { l } else { r });
            Ok((rho, VectorField::zero(grid)))
        }
        Generator::PerturbedEnsemble { base, .. } => generate_fields(base, grid),
    }
}

/// Generated data always passes the data-set membership test with the
/// configured energy policy.
pub fn build_initial_data(cfg: &ScenarioConfig) -> Result<InitialData, ScenarioError> {
    let grid = grid_of(cfg)?;
    let (rho, mom) = generate_fields(&cfg.generator, grid)?;
    let st = FluidState::new(rho.clone(), mom.clone())?;
    let field_energy = state::total_energy(&st, &cfg.law);
    let e0 = match cfg.energy_policy {
        EnergyPolicy::Consistent => field_energy,
        EnergyPolicy::Inflated { delta } => field_energy + delta,
    };
    let membership = state::validate_data_membership(&rho, &mom, e0, &cfg.law);
    if !membership.is_member() {
        return Err(ScenarioError::NotMember(membership));
    }
    Ok(InitialData {
        rho,
        mom,
        e0,
        field_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    #[test]
    fn equilibrium_data_is_member() {
        let mut cfg = ScenarioConfig::default();
        cfg.generator = Generator::Equilibrium { mass: 2.0 };
        cfg.points_per_dim = 32;
        let data = build_initial_data(&cfg).unwrap();
        assert!((data.e0 - 2.0).abs() < 1e-12);
        assert!((data.field_energy - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inflated_policy_raises_e0_only() {
        let mut cfg = ScenarioConfig::default();
        cfg.generator = Generator::Equilibrium { mass: 2.0 };
        cfg.energy_policy = EnergyPolicy::Inflated { delta: 1.0 };
        cfg.points_per_dim = 32;
        let data = build_initial_data(&cfg).unwrap();
        assert!((data.e0 - data.field_energy - 1.0).abs() < 1e-12);
    }
}
