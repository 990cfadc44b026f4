//! Run outputs: the summary report and the CSV files.

use std::path::Path;

use serde::Serialize;

use modus_core::functional::{energy_csv, energy_rows, MotionContext};
use modus_core::model::MotionProblem;
use modus_core::solver::{iterations_csv, IterationRecord, MotionSolution};

/// Summary of one motion design run, written as `report.json`.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub problem: String,
    pub converged: bool,
    pub iterations: usize,
    pub j: f64,
    pub j_predictor: f64,
    pub n_dof: usize,
    pub path_nodes: usize,
    pub free_path_dofs: usize,
    /// Negative eigenvalue count of the reduced Hessian at the solution
    /// (0 = minimum, >0 = saddle or maximum).
    pub negative_eigenvalues: usize,
    pub final_residual: f64,
    pub wall_time_seconds: f64,
}

pub struct RunFiles {
    pub report: RunReport,
    pub trajectory: String,
    pub energy: String,
    pub forces: String,
    pub iterations: String,
}

/// Assemble every output of a converged run.
pub fn build_run_files(
    problem_name: &str,
    problem: &MotionProblem,
    ctx: &MotionContext<'_>,
    sol: &MotionSolution,
    wall_time_seconds: f64,
) -> Result<RunFiles, modus_core::functional::FunctionalError> {
    let snapshots = ctx.snapshots(&sol.d_bar);
    let dim = ctx.dof_map.dim();

    let mut trajectory = String::from(if dim == 3 {
        "path_node,node,x,y,z\n"
    } else {
        "path_node,node,x,y\n"
    });
    for (k, snap) in snapshots.iter().enumerate() {
        let mut full = vec![0.0; problem.mesh.nodes.len() * dim];
        for (i, &(node, dir)) in ctx.dof_map.dofs().iter().enumerate() {
            full[node * dim + dir.index()] = snap[i];
        }
        for node in &problem.mesh.nodes {
            let mut row = format!("{k},{}", node.id);
            for c in 0..dim {
                row.push_str(&format!(",{:.12e}", node.x[c] + full[node.id * dim + c]));
            }
            row.push('\n');
            trajectory.push_str(&row);
        }
    }

    let rows = energy_rows(&ctx.system, &ctx.objective(), &sol.d_bar)?;
    let energy = energy_csv(&rows);

    let mut forces = String::from("path_node,node,dir,force\n");
    for (k, f) in sol.forces.iter().enumerate() {
        for (i, &(node, dir)) in ctx.dof_map.dofs().iter().enumerate() {
            forces.push_str(&format!("{k},{node},{dir},{:.12e}\n", f[i]));
        }
    }

    let report = RunReport {
        problem: problem_name.to_string(),
        converged: sol.converged,
        iterations: sol.history.last().map_or(0, |r| r.iteration),
        j: sol.j,
        j_predictor: sol.j_predictor,
        n_dof: ctx.dof_map.n_dof(),
        path_nodes: ctx.system.space.n_nodes(),
        free_path_dofs: ctx.system.n_free(),
        negative_eigenvalues: sol.negative_eigenvalues,
        final_residual: sol.history.last().map_or(f64::NAN, |r| r.residual_norm),
        wall_time_seconds,
    };

    Ok(RunFiles {
        report,
        trajectory,
        energy,
        forces,
        iterations: iterations_csv(&sol.history),
    })
}

pub fn write_run_files(dir: &Path, files: &RunFiles) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&files.report).expect("report serializes") + "\n",
    )?;
    std::fs::write(dir.join("trajectory.csv"), &files.trajectory)?;
    std::fs::write(dir.join("energy.csv"), &files.energy)?;
    std::fs::write(dir.join("forces.csv"), &files.forces)?;
    std::fs::write(dir.join("iterations.csv"), &files.iterations)?;
    Ok(())
}

/// On divergence the iteration history is still written.
pub fn write_failure(
    dir: &Path,
    problem_name: &str,
    history: &[IterationRecord],
    detail: &str,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let summary = serde_json::json!({
        "problem": problem_name,
        "converged": false,
        "iterations": history.last().map_or(0, |r| r.iteration),
        "error": detail,
    });
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    std::fs::write(dir.join("iterations.csv"), iterations_csv(history))?;
    Ok(())
}
