//! Task execution behind the CLI. Errors carry the stage that failed and map
//! to exit codes: 2 for bad input, 3 for numerical failure.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Prepared, Task};
use super::report::{self, Table};
use crate::divisibility::propagator::limit_projectors;
use crate::divisibility::rank::{image_basis_abs, reference_scale};
use crate::divisibility::{cp_divisibility_verdict, rank_profile, BreakpointKind};
use crate::dynamics::{canonical_gkls, generator_from_family};
use crate::error::Error;
use crate::extension::{
    extend_cp, verify_extension, ExtensionReport, FeasibilityStatus, SubspaceMapSpec,
};
use crate::linalg::{self, CMat};
use crate::operator::DensityMatrix;
use crate::superop::ChoiMatrix;
use crate::witness::{blp_sigma, witness_scan, AncillaKind, WitnessRecord};

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numeric { stage: &'static str, source: Error },
    Io { path: PathBuf, source: Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric { .. } => 3,
            Self::Io { .. } => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numeric { stage, source } => {
                write!(f, "numerical failure in stage '{stage}': {source}")
            }
            Self::Io { path, source } => write!(f, "cannot write {}: {source}", path.display()),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Self::Config(m),
            other => Self::Numeric {
                stage: "family",
                source: other,
            },
        }
    }
}

fn stage(name: &'static str) -> impl Fn(Error) -> RunError {
    move |source| RunError::Numeric {
        stage: name,
        source,
    }
}

struct Out<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Out<'_> {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let path = self.dir.join(name);
        report::write_json(&path, value).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, table: &Table) -> Result<(), RunError> {
        let path = self.dir.join(name);
        report::write_csv(&path, table).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }
}

/// Runs `tasks` in a fixed order and returns the files written.
pub fn run_tasks(p: &Prepared, tasks: &[Task], out_dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut out = Out {
        dir: out_dir,
        written: Vec::new(),
    };
    for task in [
        Task::Verdict,
        Task::Rates,
        Task::Blp,
        Task::WitnessScan,
        Task::Extend,
    ] {
        if !tasks.contains(&task) {
            continue;
        }
        log::info!("running task {}", task.as_str());
        match task {
            Task::Verdict => verdict(p, &mut out)?,
            Task::Rates => rates(p, &mut out)?,
            Task::Blp => blp(p, &mut out)?,
            Task::WitnessScan => scan(p, &mut out)?,
            Task::Extend => extend(p, &mut out)?,
        }
    }
    Ok(out.written)
}

fn verdict(p: &Prepared, out: &mut Out) -> Result<(), RunError> {
    let v = cp_divisibility_verdict(&p.family, &p.grid, &p.config.tolerances)
        .map_err(stage("verdict"))?;
    log::info!("verdict: {}", v.status.as_str());
    out.json(report::VERDICT_FILE, &v)?;

    let prof = &v.rank_profile;
    let n = prof.singular_values.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|k| format!("sigma_{k}")));
    header.push("rank".into());
    let mut table = Table::new(header);
    for ((t, sv), r) in prof
        .times
        .iter()
        .zip(&prof.singular_values)
        .zip(&prof.ranks)
    {
        let mut row = vec![Some(*t)];
        row.extend(sv.iter().map(|&s| Some(s)));
        row.push(Some(*r as f64));
        table.push(row);
    }
    out.csv(report::RANK_PROFILE_FILE, &table)
}

/// Canonical GKLS rates on the grid. Rows where the generator cannot be
/// extracted (singular map or no GKLS form) are flagged and left empty.
fn rates(p: &Prepared, out: &mut Out) -> Result<(), RunError> {
    use rayon::prelude::*;
    let d = p.family.dim();
    let n = d * d - 1;
    let h = p.config.rates.fd_step;
    let rows: Vec<Option<Vec<f64>>> = p
        .grid
        .times()
        .par_iter()
        .map(|&t| {
            let l = generator_from_family(&p.family, t, h).ok()?;
            canonical_gkls(&l, 1e-6).ok().map(|g| g.rates)
        })
        .collect();
    let mut header = vec!["t".to_string(), "singular".to_string()];
    header.extend((1..=n).map(|k| format!("gamma_{k}")));
    let mut table = Table::new(header);
    for (&t, r) in p.grid.times().iter().zip(rows) {
        let mut row = vec![Some(t), Some(if r.is_some() { 0.0 } else { 1.0 })];
        match r {
            Some(g) => row.extend(g.into_iter().map(Some)),
            None => row.extend(std::iter::repeat_n(None, n)),
        }
        table.push(row);
    }
    out.csv(report::RATES_FILE, &table)
}

#[derive(Serialize)]
struct WitnessSummary<'a> {
    #[serde(with = "crate::io::matrix_json")]
    witness: &'a CMat,
    ancilla_kind: AncillaKind,
    max_backflow: f64,
    max_derivative: f64,
    max_backflow_time: f64,
    max_backflow_bracket: (f64, f64),
    backflow_tolerance: f64,
    violation_found: bool,
    /// Scans never certify the absence of backflow.
    finding: &'static str,
    kinks: &'a [f64],
    seed: Option<u64>,
    n_samples: Option<usize>,
    n_refine: Option<usize>,
}

fn summary<'a>(r: &'a WitnessRecord, scan: Option<(u64, usize, usize)>) -> WitnessSummary<'a> {
    WitnessSummary {
        witness: &r.witness,
        ancilla_kind: r.ancilla_kind,
        max_backflow: r.max_backflow,
        max_derivative: r.max_derivative,
        max_backflow_time: r.max_backflow_time,
        max_backflow_bracket: r.max_backflow_bracket,
        backflow_tolerance: r.backflow_tolerance,
        violation_found: r.violation_found,
        finding: if r.violation_found {
            "backflow detected"
        } else {
            "no violation found"
        },
        kinks: &r.kinks,
        seed: scan.map(|s| s.0),
        n_samples: scan.map(|s| s.1),
        n_refine: scan.map(|s| s.2),
    }
}

fn trajectory(r: &WitnessRecord) -> Table {
    let mut table = Table::new(vec!["t".into(), "norm".into(), "derivative".into()]);
    let n = r.times.len();
    for k in 0..n {
        let dv = if k == 0 {
            r.endpoint_derivatives[0]
        } else if k == n - 1 {
            r.endpoint_derivatives[1]
        } else {
            r.derivatives[k - 1]
        };
        table.push(vec![Some(r.times[k]), Some(r.norms[k]), Some(dv)]);
    }
    table
}

fn blp(p: &Prepared, out: &mut Out) -> Result<(), RunError> {
    let d = p.family.dim();
    let (rho1, rho2) = match &p.config.blp {
        Some(b) => (b.rho1.clone(), b.rho2.clone()),
        None => {
            // |±⟩ on the first two levels.
            let plus = |s: f64| {
                let mut m = linalg::zeros(d, d);
                if d == 1 {
                    m[(0, 0)] = linalg::r(1.0);
                } else {
                    for (i, j) in [(0, 0), (1, 1)] {
                        m[(i, j)] = linalg::r(0.5);
                    }
                    m[(0, 1)] = linalg::r(0.5 * s);
                    m[(1, 0)] = linalg::r(0.5 * s);
                }
                DensityMatrix::new(m)
            };
            (plus(1.0)?, plus(-1.0)?)
        }
    };
    let r = blp_sigma(&p.family, &rho1, &rho2, &p.grid).map_err(stage("blp"))?;
    out.json(report::BLP_FILE, &summary(&r, None))?;
    out.csv(report::BLP_TRAJECTORY_FILE, &trajectory(&r))
}

fn scan(p: &Prepared, out: &mut Out) -> Result<(), RunError> {
    let o = &p.config.witness;
    let r = witness_scan(&p.family, &p.grid, o).map_err(stage("witness_scan"))?;
    log::info!(
        "witness scan: max backflow {:.3e} at t = {:.4}",
        r.max_backflow,
        r.max_backflow_time
    );
    out.json(
        report::BEST_WITNESS_FILE,
        &summary(&r, Some((o.seed, o.n_samples, o.n_refine))),
    )?;
    out.csv(report::WITNESS_TRAJECTORY_FILE, &trajectory(&r))
}

#[derive(Serialize)]
struct FeasibilityEntry {
    t_star: f64,
    domain_dim: usize,
    require_tp: bool,
    status: FeasibilityStatus,
    iterations: usize,
    action_residual: f64,
    tp_residual: f64,
    min_eigenvalue: f64,
    face_dim: usize,
    note: Option<String>,
    verification: Option<ExtensionReport>,
    history: Vec<f64>,
}

#[derive(Serialize)]
struct FeasibilityFile {
    /// Evidence from a numerical search; infeasibility is never certified.
    disclaimer: &'static str,
    entries: Vec<FeasibilityEntry>,
}

#[derive(Serialize)]
struct ChoiEntry {
    t_star: f64,
    choi: ChoiMatrix,
}

/// CP(TP) extension of each limit projector from the image of `Λ_{t*}` to
/// the whole operator space.
fn extend(p: &Prepared, out: &mut Out) -> Result<(), RunError> {
    let tol = &p.config.tolerances;
    let cfg = &p.config.extend;
    let mut times = match &cfg.times {
        Some(t) => t.clone(),
        None => rank_profile(&p.family, &p.grid, tol.rank_rtol)
            .breakpoints
            .iter()
            .filter(|b| b.kind == BreakpointKind::Drop)
            .map(|b| b.time)
            .collect(),
    };
    times.sort_by(f64::total_cmp);
    if let Some(&t) = times.iter().find(|&&t| !(t > 0.0 && t <= p.family.t_max())) {
        return Err(RunError::Config(format!(
            "extend.times: {t} is outside (0, t_max]"
        )));
    }
    let require_tp = cfg.require_tp.unwrap_or(true);
    let projectors = limit_projectors(&p.family, &times, tol).map_err(stage("extend"))?;
    let threshold = tol.rank_rtol * reference_scale(&p.family);

    let mut entries = Vec::new();
    let mut chois = Vec::new();
    for lp in &projectors {
        let domain =
            image_basis_abs(&p.family.evaluate(lp.t_star), threshold).map_err(stage("extend"))?;
        let spec = SubspaceMapSpec::from_map(&domain, &lp.projector, require_tp);
        let r = extend_cp(&spec, &cfg.solver).map_err(stage("extend"))?;
        log::info!(
            "extension at t* = {}: {:?} after {} iterations",
            lp.t_star,
            r.status,
            r.iterations
        );
        let verification = r.choi.as_ref().map(|c| verify_extension(c, &spec, 1e-7));
        entries.push(FeasibilityEntry {
            t_star: lp.t_star,
            domain_dim: domain.len(),
            require_tp,
            status: r.status,
            iterations: r.iterations,
            action_residual: r.action_residual,
            tp_residual: r.tp_residual,
            min_eigenvalue: r.min_eigenvalue,
            face_dim: r.face_dim,
            note: r.note.clone(),
            verification,
            history: r.history.clone(),
        });
        if let (FeasibilityStatus::Feasible, Some(c)) = (r.status, r.choi) {
            chois.push(ChoiEntry {
                t_star: lp.t_star,
                choi: c,
            });
        }
    }
    out.json(
        report::FEASIBILITY_FILE,
        &FeasibilityFile {
            disclaimer: "numerical evidence; INFEASIBLE_EVIDENCE is a heuristic label",
            entries,
        },
    )?;
    if !chois.is_empty() {
        out.json(report::CHOI_FILE, &chois)?;
    }
    Ok(())
}
