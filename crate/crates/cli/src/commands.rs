//! The `meshgen`, `forward`, `synth`, `invert` and `bench` workflows.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use faer::Mat;
use rayon::prelude::*;
use serde_json::json;

use maxtomo::fem::{MaterialField, PortFrame};
use maxtomo::inverse::{
    history_csv, imaging_nodes, reconstruct, truncate_for_ring, ForwardProblem, HistoryRecord, InverseConfig, InverseError, SolverConfig,
    Termination,
};
use maxtomo::mesh::{generate_chamber_mesh, load_mesh, write_msh, ChamberLayout, Mesh};
use maxtomo::phantom::{add_noise, build_phantom, empty_reference, material_arrays, nodal_csv, read_nodal_csv, write_vtk};
use maxtomo::scattering::{compute_smatrix, Provenance, ScatteringMatrix};

use crate::config::{MaterialSource, MeshSource, RingSelection, RunConfig};
use crate::{output_path, CliError, EventLog, EXIT_OPTIMIZATION};

/// Mesh, port frames and, for generated chambers, the ring layout.
pub fn load_geometry(config: &RunConfig) -> Result<(Mesh, Vec<PortFrame>, Option<ChamberLayout>), CliError> {
    match &config.mesh {
        MeshSource::Generated(spec) => {
            let mesh = generate_chamber_mesh(spec)?;
            let layout = ChamberLayout::new(spec);
            Ok((mesh, layout.port_frames(), Some(layout)))
        }
        MeshSource::File(path) => {
            let mesh = load_mesh(path)?;
            let (a, b) = (config.physics.port_width, config.physics.port_height);
            let frames = (1..=mesh.n_ports()).map(|tag| PortFrame::fit_planar(&mesh, tag, a, b)).collect();
            Ok((mesh, frames, None))
        }
    }
}

pub fn build_problem(config: &RunConfig, solver: SolverConfig) -> Result<(ForwardProblem, Option<ChamberLayout>), CliError> {
    let (mesh, frames, layout) = load_geometry(config)?;
    Ok((ForwardProblem::new(mesh, &frames, config.physics.clone(), solver)?, layout))
}

/// The configured material; lossy-sign violations in imported maps are
/// reported as warnings.
pub fn load_material(config: &RunConfig, mesh: &Mesh, log: &mut EventLog) -> Result<MaterialField, CliError> {
    let m = match &config.material {
        MaterialSource::Uniform(eps) => MaterialField::uniform(mesh, *eps),
        MaterialSource::Phantom(spec) => build_phantom(spec, mesh)?,
        MaterialSource::Csv(path) => read_nodal_csv(path, mesh.n_nodes())?,
    };
    warn_gain(&m, log);
    Ok(m)
}

fn warn_gain(m: &MaterialField, log: &mut EventLog) {
    let gain = m.eps.iter().filter(|e| e.im > 0.0).count();
    if gain > 0 {
        log.event(json!({ "event": "warning", "message": "material has Im(eps) > 0 (gain) at some nodes", "nodes": gain }));
    }
}

/// Per-transmitter GMRES outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmitterStats {
    pub transmitter: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// S-matrix of a full forward sweep with timing split.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub smatrix: ScatteringMatrix,
    pub stats: Vec<TransmitterStats>,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
}

/// Solve every transmitter: one operator, transmitters split into blocks of
/// `rhs_per_group` right-hand sides, `solver_groups` blocks in flight.
pub fn sweep(problem: &ForwardProblem, material: &MaterialField, rhs_per_group: usize, solver_groups: usize) -> Result<Sweep, InverseError> {
    let t0 = Instant::now();
    let op = problem.operator(material)?;
    let setup_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let n = problem.n_ports();
    let all: Vec<usize> = (0..n).collect();
    let chunk = if rhs_per_group == 0 { n.max(1) } else { rhs_per_group };
    let blocks: Vec<&[usize]> = all.chunks(chunk).collect();
    let mut fields = Mat::<maxtomo::C64>::zeros(problem.n_dofs(), n);
    let mut stats = Vec::with_capacity(n);
    for wave in blocks.chunks(solver_groups) {
        let solved: Vec<_> = wave
            .par_iter()
            .map(|tx| {
                let rhs = problem.rhs(&op, tx);
                problem.solve_block_converged(&op, rhs.as_ref(), tx)
            })
            .collect();
        for (tx, out) in wave.iter().zip(solved) {
            let (x, s) = out?;
            for (k, &t) in tx.iter().enumerate() {
                fields.col_mut(t).copy_from(x.col(k));
                stats.push(TransmitterStats { transmitter: t, iterations: s.iterations[k], residual: s.residuals[k] });
            }
        }
    }
    let smatrix = compute_smatrix(&problem.ports, fields.as_ref(), &all, problem.params.frequency)?;
    Ok(Sweep { smatrix, stats, setup_seconds, solve_seconds: t1.elapsed().as_secs_f64() })
}

fn log_sweep(log: &mut EventLog, s: &Sweep) {
    for t in &s.stats {
        log.event(json!({ "event": "gmres", "transmitter": t.transmitter + 1, "iterations": t.iterations, "residual": t.residual }));
    }
    log.event(json!({ "event": "sweep", "setup_s": s.setup_seconds, "solve_s": s.solve_seconds }));
}

pub fn meshgen(config: &RunConfig) -> Result<(), CliError> {
    let mut log = EventLog::create(&output_path(&config.output, "meshgen.jsonl")?)?;
    let (mesh, _, _) = load_geometry(config)?;
    let path = output_path(&config.output, "mesh.msh")?;
    write_msh(&mesh, &path)?;
    log.event(json!({
        "event": "mesh",
        "path": path.display().to_string(),
        "nodes": mesh.n_nodes(),
        "tets": mesh.n_tets(),
        "ports": mesh.n_ports(),
    }));
    Ok(())
}

pub fn forward(config: &RunConfig) -> Result<(), CliError> {
    let mut log = EventLog::create(&output_path(&config.output, "forward.jsonl")?)?;
    let (problem, _) = build_problem(config, config.solver.clone())?;
    log.event(json!({ "event": "problem", "dofs": problem.n_dofs(), "ports": problem.n_ports(), "subdomains": config.solver.n_subdomains }));
    let material = load_material(config, &problem.mesh, &mut log)?;
    let s = sweep(&problem, &material, config.rhs_per_group, config.solver_groups)?;
    log_sweep(&mut log, &s);
    let path = output_path(&config.output, "smatrix.csv")?;
    s.smatrix.write_csv(&path)?;
    log.event(json!({ "event": "written", "path": path.display().to_string() }));
    Ok(())
}

pub fn synth(config: &RunConfig, seed: u64) -> Result<(), CliError> {
    let out = &config.output;
    let mut log = EventLog::create(&output_path(out, "synth.jsonl")?)?;
    let (problem, _) = build_problem(config, config.solver.clone())?;
    let truth = load_material(config, &problem.mesh, &mut log)?;
    let s = sweep(&problem, &truth, config.rhs_per_group, config.solver_groups)?;
    log_sweep(&mut log, &s);
    let measured = add_noise(&s.smatrix, config.noise, seed);
    let empty = empty_reference(&problem, config.inverse.background, Some(&out.join("cache")))?;

    measured.write_csv(output_path(out, "smes.csv")?)?;
    empty.write_csv(output_path(out, "sempty.csv")?)?;
    let (re, im) = material_arrays(&truth);
    write_vtk(&problem.mesh, &[("eps_re", &re), ("eps_im", &im)], output_path(out, "truth.vtk")?)?;
    std::fs::write(output_path(out, "truth.csv")?, nodal_csv(&truth))?;
    log.event(json!({ "event": "synth", "noise": config.noise, "seed": seed, "dir": out.display().to_string() }));
    Ok(())
}

fn read_smatrix(path: &Path, n: usize, provenance: Provenance, frequency: f64) -> Result<ScatteringMatrix, CliError> {
    ScatteringMatrix::read_csv(path, n, provenance, frequency).map_err(|e| CliError::config(anyhow::anyhow!("{}: {e}", path.display())))
}

/// Entries of `s` between the listed parent ports, renumbered.
pub fn restrict_smatrix(s: &ScatteringMatrix, ports: &[usize]) -> ScatteringMatrix {
    let mut out = ScatteringMatrix::empty(ports.len(), s.provenance, s.frequency);
    for (i, &pi) in ports.iter().enumerate() {
        for (j, &pj) in ports.iter().enumerate() {
            if let Some(v) = s.get(pi, pj) {
                out.set(i, j, v);
            }
        }
    }
    out
}

struct InvertOutputs {
    dir: PathBuf,
    history: Vec<(Option<usize>, HistoryRecord)>,
}

impl InvertOutputs {
    fn write_history(&self) -> Result<(), CliError> {
        let records: Vec<HistoryRecord> = self.history.iter().map(|(_, h)| *h).collect();
        std::fs::write(output_path(&self.dir, "history.csv")?, history_csv(&records))?;
        let mut rings: Vec<usize> = self.history.iter().filter_map(|(r, _)| *r).collect();
        rings.dedup();
        for r in rings {
            let recs: Vec<HistoryRecord> = self.history.iter().filter(|(q, _)| *q == Some(r)).map(|(_, h)| *h).collect();
            std::fs::write(output_path(&self.dir, &format!("history-ring{}.csv", r + 1))?, history_csv(&recs))?;
        }
        Ok(())
    }

    fn write_material(&self, mesh: &Mesh, m: &MaterialField) -> Result<(), CliError> {
        let (re, im) = material_arrays(m);
        write_vtk(mesh, &[("eps_re", &re), ("eps_im", &im)], output_path(&self.dir, "reconstruction.vtk")?)?;
        std::fs::write(output_path(&self.dir, "reconstruction.csv")?, nodal_csv(m))?;
        Ok(())
    }
}

pub fn invert(config: &RunConfig, measured: Option<&Path>, empty: Option<&Path>) -> Result<(), CliError> {
    let inv = &config.inverse;
    let measured_path = measured.map(Path::to_path_buf).or_else(|| inv.measured.clone());
    let empty_path = empty.map(Path::to_path_buf).or_else(|| inv.empty.clone());
    let Some(measured_path) = measured_path else {
        return Err(CliError::config(anyhow::anyhow!("no measured S-matrix: pass --smes or set inverse.measured")));
    };
    if inv.config.normalize && empty_path.is_none() {
        return Err(CliError::config(anyhow::anyhow!(
            "normalization needs the empty-chamber S-matrix: pass --sempty, set inverse.empty or inverse.normalize = false"
        )));
    }

    let mut log = EventLog::create(&output_path(&config.output, "invert.jsonl")?)?;
    let (problem, layout) = build_problem(config, config.solver.clone())?;
    let (n, f) = (problem.n_ports(), problem.params.frequency);
    let measured = read_smatrix(&measured_path, n, Provenance::Imported, f)?;
    let empty = empty_path.as_deref().map(|p| read_smatrix(p, n, Provenance::EmptyReference, f)).transpose()?;
    let mut current = match &inv.initial {
        Some(p) => read_nodal_csv(p, problem.mesh.n_nodes())?,
        None => MaterialField::uniform(&problem.mesh, inv.background),
    };
    warn_gain(&current, &mut log);
    log.event(json!({ "event": "problem", "dofs": problem.n_dofs(), "ports": n, "active": imaging_nodes(&problem.mesh).len() }));

    let mut outputs = InvertOutputs { dir: config.output.clone(), history: Vec::new() };
    let rings: Vec<Option<usize>> = match (inv.ring, &layout) {
        (RingSelection::Whole, _) => vec![None],
        (RingSelection::Ring(r), Some(_)) => vec![Some(r)],
        (RingSelection::All, Some(l)) => (0..l.ring_z.len()).map(Some).collect(),
        (_, None) => return Err(CliError::config(anyhow::anyhow!("inverse.ring needs a generated chamber mesh"))),
    };

    let mut termination = Termination::Converged;
    for ring in rings {
        let result = match (ring, &layout) {
            (Some(r), Some(layout)) => {
                invert_ring(config, &problem, layout, r, &measured, empty.as_ref(), &mut current, &mut outputs, &mut log)
            }
            _ => {
                let mut on_iter = |h: &HistoryRecord, _: &MaterialField| {
                    log_iteration(&mut log, None, h);
                    outputs.history.push((None, *h));
                };
                reconstruct(&problem, &measured, empty.as_ref(), &inv.config, &current, &mut on_iter).map(|rec| {
                    current = rec.material;
                    rec.termination
                })
            }
        };
        match result {
            Ok(t) => {
                log.event(json!({ "event": "terminated", "ring": ring.map(|r| r + 1), "reason": format!("{t:?}") }));
                if t == Termination::LineSearchFailed {
                    termination = t;
                }
            }
            Err(e) => {
                outputs.write_history()?;
                return Err(e.into());
            }
        }
    }
    outputs.write_history()?;
    outputs.write_material(&problem.mesh, &current)?;
    if termination == Termination::LineSearchFailed {
        return Err(CliError { code: EXIT_OPTIMIZATION, error: anyhow::anyhow!("line search failed; partial outputs written") });
    }
    Ok(())
}

fn log_iteration(log: &mut EventLog, ring: Option<usize>, h: &HistoryRecord) {
    log.event(json!({
        "event": "iteration",
        "ring": ring.map(|r| r + 1),
        "iter": h.iter,
        "cost": h.cost,
        "grad_norm": h.grad_norm,
        "step": h.step,
    }));
}

/// Reconstruct the slab of ring `ring` on its truncated sub-chamber and
/// write the result back into `current`.
#[allow(clippy::too_many_arguments)]
fn invert_ring(
    config: &RunConfig,
    problem: &ForwardProblem,
    layout: &ChamberLayout,
    ring: usize,
    measured: &ScatteringMatrix,
    empty: Option<&ScatteringMatrix>,
    current: &mut MaterialField,
    outputs: &mut InvertOutputs,
    log: &mut EventLog,
) -> Result<Termination, InverseError> {
    let sub = truncate_for_ring(&problem.mesh, layout, ring)?;
    let frames: Vec<PortFrame> = sub.ports.iter().map(|&p| layout.port_frame(p + 1)).collect();
    let sub_problem = ForwardProblem::new(sub.mesh.clone(), &frames, config.physics.clone(), config.solver.clone())?;
    let sub_measured = restrict_smatrix(measured, &sub.ports);
    let sub_empty = empty.map(|e| restrict_smatrix(e, &sub.ports));

    let n_rings = layout.ring_z.len();
    let lo = if ring == 0 { f64::NEG_INFINITY } else { layout.gap_plane(ring - 1) };
    let hi = if ring + 1 == n_rings { f64::INFINITY } else { layout.gap_plane(ring) };
    let active: Vec<usize> = imaging_nodes(&sub.mesh)
        .into_iter()
        .filter(|&k| {
            let z = sub.mesh.nodes()[k].z;
            z >= lo - 1e-12 && z <= hi + 1e-12
        })
        .collect();
    log.event(json!({
        "event": "ring",
        "ring": ring + 1,
        "dofs": sub_problem.n_dofs(),
        "ports": sub.ports.len(),
        "active": active.len(),
    }));
    let inv_config = InverseConfig { transmitters: sub.transmitters.clone(), active: active.clone(), ..config.inverse.config.clone() };
    let initial = MaterialField { eps: sub.restrict(&current.eps) };
    let mut on_iter = |h: &HistoryRecord, _: &MaterialField| {
        log_iteration(log, Some(ring), h);
        outputs.history.push((Some(ring), *h));
    };
    let rec = reconstruct(&sub_problem, &sub_measured, sub_empty.as_ref(), &inv_config, &initial, &mut on_iter)?;
    for &k in &active {
        current.eps[sub.nodes[k]] = rec.material.eps[k];
    }
    Ok(rec.termination)
}

/// One row of the scaling report.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub subdomains: usize,
    pub threads: usize,
    pub dofs: usize,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    pub iterations_max: usize,
    pub iterations_mean: f64,
}

impl BenchRow {
    pub fn total_seconds(&self) -> f64 {
        self.setup_seconds + self.solve_seconds
    }
}

pub const BENCH_HEADER: &str = "subdomains,threads,dofs,setup_s,solve_s,total_s,iterations_max,iterations_mean";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = format!("{BENCH_HEADER}\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{},{:.3}",
            r.subdomains,
            r.threads,
            r.dofs,
            r.setup_seconds,
            r.solve_seconds,
            r.total_seconds(),
            r.iterations_max,
            r.iterations_mean
        )
        .unwrap();
    }
    s
}

pub fn bench(config: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    let mut log = EventLog::create(&output_path(&config.output, "bench.jsonl")?)?;
    let (mesh, frames, _) = load_geometry(config)?;
    let mut rows = Vec::new();
    for &threads in &config.bench_threads {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(CliError::solver)?;
        for &ns in &config.bench_subdomains {
            let solver = SolverConfig { n_subdomains: ns, ..config.solver.clone() };
            let row = pool.install(|| -> Result<BenchRow, CliError> {
                let problem = ForwardProblem::new(mesh.clone(), &frames, config.physics.clone(), solver)?;
                let material = load_material(config, &problem.mesh, &mut EventLog::stdout_only().quiet())?;
                let s = sweep(&problem, &material, config.rhs_per_group, config.solver_groups)?;
                let iters: Vec<usize> = s.stats.iter().map(|t| t.iterations).collect();
                Ok(BenchRow {
                    subdomains: ns,
                    threads,
                    dofs: problem.n_dofs(),
                    setup_seconds: s.setup_seconds,
                    solve_seconds: s.solve_seconds,
                    iterations_max: iters.iter().copied().max().unwrap_or(0),
                    iterations_mean: iters.iter().sum::<usize>() as f64 / iters.len().max(1) as f64,
                })
            })?;
            log.event(json!({
                "event": "bench",
                "subdomains": row.subdomains,
                "threads": row.threads,
                "dofs": row.dofs,
                "setup_s": row.setup_seconds,
                "solve_s": row.solve_seconds,
                "iterations_max": row.iterations_max,
                "iterations_mean": row.iterations_mean,
            }));
            rows.push(row);
        }
    }
    std::fs::write(output_path(&config.output, "bench.csv")?, bench_csv(&rows))?;
    Ok(rows)
}
