//! Scenario configuration: a flat key-value text format with `[section]`
//! headers, chosen so any language parses it with a few string splits.

use semiflow_core::state::PressureLaw;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad line {line:?}: {reason}")]
    BadLine { line: String, reason: String },
    #[error("[{section}] is missing key {key}")]
    MissingKey { section: String, key: String },
    #[error("[{section}] {key} = {value:?}: {reason}")]
    BadValue {
        section: String,
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown generator {0:?}")]
    UnknownGenerator(String),
    #[error("invalid pressure law: {0}")]
    Law(String),
}

/// How the shared initial data is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// constant density of the given total mass, zero momentum
    Equilibrium { mass: f64 },
    /// acoustic-type perturbation `rho = 1 + A sin(pi k x)`,
    /// `u = A cos(pi k x)` (plus a symmetry-breaking second phase when
    /// `skew` is set)
    SmoothWave { amplitude: f64, mode: u32, skew: bool },
    /// smoothed density jump `left / right` at |x| = 1/2
    Riemann { left: f64, right: f64, smoothing: f64 },
    /// base data plus seeded solver-path perturbations (the data itself is
    /// shared; members vary the regularization path)
    PerturbedEnsemble {
        base: Box<Generator>,
        n_members: usize,
        seed: u64,
        amplitude: f64,
    },
}

/// Policy for the prescribed initial energy `E(0-)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyPolicy {
    /// `E0` equals the data energy
    Consistent,
    /// `E0` exceeds the data energy by `delta` (an energetic sink at 0)
    Inflated { delta: f64 },
}

/// Full experiment description.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub dim: usize,
    pub points_per_dim: usize,
    pub law: PressureLaw,
    pub generator: Generator,
    pub energy_policy: EnergyPolicy,
    pub eps_list: Vec<f64>,
    pub smoothing_list: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub sample_stride: usize,
    pub m_order: u32,
    pub rho_floor: f64,
    pub cfl: f64,
    pub restart_times: Vec<f64>,
    pub k_cap: u32,
    pub n_cap: u32,
    pub m_cap: u32,
    pub tie_tol: f64,
    pub t_max: f64,
    pub semigroup_pairs: Vec<(f64, f64)>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            points_per_dim: 256,
            law: PressureLaw::isentropic(1.0, 2.0).expect("default law is valid"),
            generator: Generator::SmoothWave {
                amplitude: 0.15,
                mode: 1,
                skew: false,
            },
            energy_policy: EnergyPolicy::Consistent,
            eps_list: vec![1e-3, 5e-4, 2.5e-4],
            smoothing_list: vec![0.0],
            dt: 1e-3,
            t_end: 1.0,
            sample_stride: 10,
            m_order: 1,
            rho_floor: 1e-6,
            cfl: 0.5,
            restart_times: vec![0.25, 0.5],
            k_cap: 8,
            n_cap: 8,
            m_cap: 8,
            tie_tol: 1e-9,
            t_max: 1.0,
            semigroup_pairs: vec![(0.25, 0.5), (0.5, 0.5)],
            seed: 1,
        }
    }
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::from("root");
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            current = line[1..line.len() - 1].trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
            line: line.to_string(),
            reason: "expected key=value".into(),
        })?;
        sections
            .entry(current.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

struct SectionView<'a> {
    name: String,
    map: Option<&'a BTreeMap<String, String>>,
}

impl<'a> SectionView<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.map.and_then(|m| m.get(key)).map(|s| s.as_str())
    }

    fn required(&self, key: &str) -> Result<&'a str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<T>().map_err(|_| ConfigError::BadValue {
                section: self.name.clone(),
                key: key.to_string(),
                value: v.to_string(),
                reason: "unparseable".into(),
            }),
        }
    }

    fn parse_list(&self, key: &str, default: Vec<f64>) -> Result<Vec<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim().parse::<f64>().map_err(|_| ConfigError::BadValue {
                        section: self.name.clone(),
                        key: key.to_string(),
                        value: v.to_string(),
                        reason: "unparseable list entry".into(),
                    })
                })
                .collect(),
        }
    }
}

fn parse_generator(view: &SectionView) -> Result<Generator, ConfigError> {
    let kind = view.required("generator")?;
    let base = |name: &str| -> Result<Generator, ConfigError> {
        match name {
            "equilibrium" => Ok(Generator::Equilibrium {
                mass: view.parse("mass", 2.0)?,
            }),
            "smooth_wave" => Ok(Generator::SmoothWave {
                amplitude: view.parse("amplitude", 0.15)?,
                mode: view.parse("mode", 1u32)?,
                skew: view.parse("skew", 0u8)? != 0,
            }),
            "riemann" => Ok(Generator::Riemann {
                left: view.parse("left", 1.0)?,
                right: view.parse("right", 0.4)?,
                smoothing: view.parse("smoothing", 0.05)?,
            }),
            other => Err(ConfigError::UnknownGenerator(other.to_string())),
        }
    };
    if kind == "perturbed_ensemble" {
        let base_name = view.required("base")?;
        Ok(Generator::PerturbedEnsemble {
            base: Box::new(base(base_name)?),
            n_members: view.parse("n_members", 4usize)?,
            seed: view.parse("seed", 1u64)?,
            amplitude: view.parse("perturbation_amplitude", 0.5)?,
        })
    } else {
        base(kind)
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let sections = parse_sections(text)?;
        let view = |name: &str| SectionView {
            name: name.to_string(),
            map: sections.get(name),
        };
        let mut cfg = ScenarioConfig::default();

        let grid = view("grid");
        cfg.dim = grid.parse("dim", cfg.dim)?;
        cfg.points_per_dim = grid.parse("n", cfg.points_per_dim)?;

        let law = view("law");
        if law.map.is_some() {
            let a: f64 = law.parse("a", 1.0)?;
            let gamma: f64 = law.parse("gamma", 2.0)?;
            cfg.law =
                PressureLaw::isentropic(a, gamma).map_err(|e| ConfigError::Law(e.to_string()))?;
        }

        let initial = view("initial");
        if initial.map.is_some() {
            cfg.generator = parse_generator(&initial)?;
        }

        let energy = view("energy");
        if energy.map.is_some() {
            let policy = energy.get("policy").unwrap_or("consistent");
            cfg.energy_policy = match policy {
                "consistent" => EnergyPolicy::Consistent,
                "inflated" => EnergyPolicy::Inflated {
                    delta: energy.parse("delta", 0.0)?,
                },
                other => {
                    return Err(ConfigError::BadValue {
                        section: "energy".into(),
                        key: "policy".into(),
                        value: other.into(),
                        reason: "expected consistent or inflated".into(),
                    })
                }
            };
        }

        let solver = view("solver");
        cfg.eps_list = solver.parse_list("eps_list", cfg.eps_list)?;
        cfg.smoothing_list = solver.parse_list("smoothing_list", cfg.smoothing_list)?;
        cfg.dt = solver.parse("dt", cfg.dt)?;
        cfg.t_end = solver.parse("t_end", cfg.t_end)?;
        cfg.sample_stride = solver.parse("sample_stride", cfg.sample_stride)?;
        cfg.m_order = solver.parse("m_order", cfg.m_order)?;
        cfg.rho_floor = solver.parse("rho_floor", cfg.rho_floor)?;
        cfg.cfl = solver.parse("cfl", cfg.cfl)?;

        let ensemble = view("ensemble");
        cfg.restart_times = ensemble.parse_list("restart_times", cfg.restart_times)?;
        cfg.seed = ensemble.parse("seed", cfg.seed)?;

        let selection = view("selection");
        cfg.k_cap = selection.parse("k_cap", cfg.k_cap)?;
        cfg.n_cap = selection.parse("n_cap", cfg.n_cap)?;
        cfg.m_cap = selection.parse("m_cap", cfg.m_cap)?;
        cfg.tie_tol = selection.parse("tie_tol", cfg.tie_tol)?;

        let horizons = view("horizons");
        cfg.t_max = horizons.parse("t_max", cfg.t_end)?;
        let pairs = horizons.parse_list(
            "semigroup_pairs",
            cfg.semigroup_pairs
                .iter()
                .flat_map(|&(a, b)| [a, b])
                .collect(),
        )?;
        if pairs.len() % 2 != 0 {
            return Err(ConfigError::BadValue {
                section: "horizons".into(),
                key: "semigroup_pairs".into(),
                value: format!("{pairs:?}"),
                reason: "expected an even number of entries (t1,t2 pairs)".into(),
            });
        }
        cfg.semigroup_pairs = pairs.chunks(2).map(|c| (c[0], c[1])).collect();
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "[grid]").unwrap();
        writeln!(out, "dim={}", self.dim).unwrap();
        writeln!(out, "n={}", self.points_per_dim).unwrap();
        writeln!(out).unwrap();
        if let PressureLaw::Isentropic { a, gamma } = self.law {
            writeln!(out, "[law]").unwrap();
            writeln!(out, "a={a}").unwrap();
            writeln!(out, "gamma={gamma}").unwrap();
            writeln!(out).unwrap();
        }
        writeln!(out, "[initial]").unwrap();
        let write_base = |out: &mut String, generator: &Generator| match generator {
            Generator::Equilibrium { mass } => {
                writeln!(out, "generator=equilibrium").unwrap();
                writeln!(out, "mass={mass}").unwrap();
            }
            Generator::SmoothWave {
                amplitude,
                mode,
                skew,
            } => {
                writeln!(out, "generator=smooth_wave").unwrap();
                writeln!(out, "amplitude={amplitude}").unwrap();
                writeln!(out, "mode={mode}").unwrap();
                writeln!(out, "skew={}", u8::from(*skew)).unwrap();
            }
            Generator::Riemann {
                left,
                right,
                smoothing,
            } => {
                writeln!(out, "generator=riemann").unwrap();
                writeln!(out, "left={left}").unwrap();
                writeln!(out, "right={right}").unwrap();
                writeln!(out, "smoothing={smoothing}").unwrap();
            }
            Generator::PerturbedEnsemble { .. } => unreachable!("handled by caller"),
        };
        if let Generator::PerturbedEnsemble {
            base,
            n_members,
            seed,
            amplitude,
        } = &self.generator
        {
            writeln!(out, "generator=perturbed_ensemble").unwrap();
            let name = match **base {
                Generator::Equilibrium { .. } => "equilibrium",
                Generator::SmoothWave { .. } => "smooth_wave",
                Generator::Riemann { .. } => "riemann",
                Generator::PerturbedEnsemble { .. } => "perturbed_ensemble",
            };
            writeln!(out, "base={name}").unwrap();
            writeln!(out, "n_members={n_members}").unwrap();
            writeln!(out, "seed={seed}").unwrap();
            writeln!(out, "perturbation_amplitude={amplitude}").unwrap();
            let mut scratch = String::new();
            write_base(&mut scratch, base);
            for line in scratch.lines().skip(1) {
                writeln!(out, "{line}").unwrap();
            }
        } else {
            write_base(&mut out, &self.generator);
        }
        writeln!(out).unwrap();
        writeln!(out, "[energy]").unwrap();
        match self.energy_policy {
            EnergyPolicy::Consistent => writeln!(out, "policy=consistent").unwrap(),
            EnergyPolicy::Inflated { delta } => {
                writeln!(out, "policy=inflated").unwrap();
                writeln!(out, "delta={delta}").unwrap();
            }
        }
        writeln!(out).unwrap();
        writeln!(out, "[solver]").unwrap();
        let join = |xs: &[f64]| {
            xs.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(out, "eps_list={}", join(&self.eps_list)).unwrap();
        writeln!(out, "smoothing_list={}", join(&self.smoothing_list)).unwrap();
        writeln!(out, "dt={}", self.dt).unwrap();
        writeln!(out, "t_end={}", self.t_end).unwrap();
        writeln!(out, "sample_stride={}", self.sample_stride).unwrap();
        writeln!(out, "m_order={}", self.m_order).unwrap();
        writeln!(out, "rho_floor={}", self.rho_floor).unwrap();
        writeln!(out, "cfl={}", self.cfl).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "[ensemble]").unwrap();
        writeln!(out, "restart_times={}", join(&self.restart_times)).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "[selection]").unwrap();
        writeln!(out, "k_cap={}", self.k_cap).unwrap();
        writeln!(out, "n_cap={}", self.n_cap).unwrap();
        writeln!(out, "m_cap={}", self.m_cap).unwrap();
        writeln!(out, "tie_tol={}", self.tie_tol).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "[horizons]").unwrap();
        writeln!(out, "t_max={}", self.t_max).unwrap();
        writeln!(
            out,
            "semigroup_pairs={}",
            self.semigroup_pairs
                .iter()
                .map(|&(a, b)| format!("{a},{b}"))
                .collect::<Vec<_>>()
                .join(",")
        )
        .unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let mut cfg = ScenarioConfig::default();
        cfg.generator = Generator::Riemann {
            left: 1.0,
            right: 0.25,
            smoothing: 0.04,
        };
        cfg.energy_policy = EnergyPolicy::Inflated { delta: 0.5 };
        cfg.eps_list = vec![1e-3, 2.5e-4];
        let text = cfg.to_text();
        let back = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(back.generator, cfg.generator);
        assert_eq!(back.energy_policy, cfg.energy_policy);
        assert_eq!(back.eps_list, cfg.eps_list);
        assert_eq!(back.semigroup_pairs, cfg.semigroup_pairs);
        assert_eq!(back.points_per_dim, cfg.points_per_dim);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(ScenarioConfig::parse("[grid]\nnonsense").is_err());
        assert!(ScenarioConfig::parse("[energy]\npolicy=magic").is_err());
        assert!(ScenarioConfig::parse("[initial]\ngenerator=vortex").is_err());
    }

    #[test]
    fn comments_and_defaults() {
        let text = "# comment\n[grid]\ndim=2\nn=64\n";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.dim, 2);
        assert_eq!(cfg.points_per_dim, 64);
        assert_eq!(cfg.sample_stride, ScenarioConfig::default().sample_stride);
    }
}
