//! Plot-ready tabular outputs with a manifest; every emitted file round-trips
//! through the owning module's readers.

use semiflow_core::relative_energy::WeakStrongReport;
use semiflow_core::selection::{SelectionOutcome, SemigroupReport};
use semiflow_core::solver::SolverRun;
use semiflow_core::trajectory::Trajectory;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Anything the lab can emit as a table.
pub enum Artifact<'a> {
    Run(&'a SolverRun),
    Trajectory(&'a Trajectory),
    WeakStrong(&'a WeakStrongReport),
    Selection(&'a SelectionOutcome),
    Semigroup(&'a SemigroupReport),
}

/// Files written by one `emit_tables` call.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub files: Vec<PathBuf>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.files {
            writeln!(out, "{}", f.display()).expect("string write cannot fail");
        }
        out
    }
}

/// Emit every artifact under `dir` and write `manifest.txt` listing the
/// files. An empty artifact list produces an empty manifest.
pub fn emit_tables(artifacts: &[Artifact], dir: &Path) -> std::io::Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = Manifest::default();
    let mut counters = std::collections::HashMap::<&str, usize>::new();
    let mut next_name = |kind: &'static str, ext: &str| -> PathBuf {
        let c = counters.entry(kind).or_insert(0);
        let name = if *c == 0 {
            format!("{kind}.{ext}")
        } else {
            format!("{kind}_{c:02}.{ext}")
        };
        *c += 1;
        PathBuf::from(name)
    };

    for artifact in artifacts {
        match artifact {
            Artifact::Run(run) => {
                let name = next_name("energy", "csv");
                let mut text = String::from("t,E,dissipation\n");
                for i in 0..run.times().len() {
                    writeln!(
                        text,
                        "{:.17e},{:.17e},{:.17e}",
                        run.times()[i],
                        run.energy()[i],
                        run.dissipation()[i]
                    )
                    .expect("string write cannot fail");
                }
                std::fs::write(dir.join(&name), text)?;
                manifest.files.push(name);
            }
            Artifact::Trajectory(t) => {
                let ename = next_name("trajectory_energy", "csv");
                let mut text = String::from("t,E_left,E_right\n");
                for (i, ti) in t.energy().times().iter().enumerate() {
                    writeln!(
                        text,
                        "{ti:.17e},{:.17e},{:.17e}",
                        t.energy().left_values()[i],
                        t.energy().right_values()[i]
                    )
                    .expect("string write cannot fail");
                }
                std::fs::write(dir.join(&ename), text)?;
                manifest.files.push(ename);

                let dname = next_name("defect", "csv");
                let mut text = String::from("t,defect\n");
                for (i, ti) in t.times().iter().enumerate() {
                    writeln!(text, "{ti:.17e},{:.17e}", t.defects()[i])
                        .expect("string write cannot fail");
                }
                std::fs::write(dir.join(&dname), text)?;
                manifest.files.push(dname);
            }
            Artifact::WeakStrong(report) => {
                let name = next_name("re_bound", "csv");
                std::fs::write(dir.join(&name), report.to_csv())?;
                manifest.files.push(name);
            }
            Artifact::Selection(outcome) => {
                let name = next_name("selection", "json");
                std::fs::write(dir.join(&name), outcome.to_json())?;
                manifest.files.push(name);
            }
            Artifact::Semigroup(report) => {
                let name = next_name("semigroup", "json");
                std::fs::write(
                    dir.join(&name),
                    serde_json::to_string_pretty(report).expect("reports serialize"),
                )?;
                manifest.files.push(name);
            }
        }
    }
    std::fs::write(dir.join("manifest.txt"), manifest.to_text())?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Readers, so every emitted file round-trips
// ---------------------------------------------------------------------------

fn read_numeric_csv(path: &Path, header: &str) -> std::io::Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    if first != header {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("expected header {header:?}, got {first:?}"),
        ));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|p| {
                    p.trim().parse::<f64>().map_err(|_| {
                        std::io::Error::new(
                            std::io::ErrorKind::InvalidData,
                            format!("bad value {p:?}"),
                        )
                    })
                })
                .collect()
        })
        .collect()
}

/// Rows `(t, E, dissipation)` of an emitted energy table.
pub fn read_energy_table(path: &Path) -> std::io::Result<Vec<(f64, f64, f64)>> {
    Ok(read_numeric_csv(path, "t,E,dissipation")?
        .into_iter()
        .map(|r| (r[0], r[1], r[2]))
        .collect())
}

/// Rows `(t, defect)` of an emitted defect table.
pub fn read_defect_table(path: &Path) -> std::io::Result<Vec<(f64, f64)>> {
    Ok(read_numeric_csv(path, "t,defect")?
        .into_iter()
        .map(|r| (r[0], r[1]))
        .collect())
}

/// Rows `(t, E_left, E_right)` of an emitted trajectory-energy table.
pub fn read_trajectory_energy_table(path: &Path) -> std::io::Result<Vec<(f64, f64, f64)>> {
    Ok(read_numeric_csv(path, "t,E_left,E_right")?
        .into_iter()
        .map(|r| (r[0], r[1], r[2]))
        .collect())
}

/// Rows `(tau, RE, bound, pass)` of an emitted relative-energy table.
pub fn read_re_table(path: &Path) -> std::io::Result<Vec<(f64, f64, f64, bool)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "tau,RE,bound,pass" {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("unexpected header {line:?}"),
                ));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let bad = || std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad row {line:?}"));
        if parts.len() != 4 {
            return Err(bad());
        }
        out.push((
            parts[0].parse().map_err(|_| bad())?,
            parts[1].parse().map_err(|_| bad())?,
            parts[2].parse().map_err(|_| bad())?,
            parts[3].trim() == "true",
        ));
    }
    Ok(out)
}

pub fn read_selection_report(path: &Path) -> std::io::Result<SelectionOutcome> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub fn read_semigroup_report(path: &Path) -> std::io::Result<SemigroupReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
