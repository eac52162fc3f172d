use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use dyson_blocks::dyson::{
    map_density, refined_grid, solve_semicircular, solve_wishart, stieltjes_density, DensityTable, DysonError,
    SolverOptions,
};
use dyson_blocks::esd::per_trial;
use dyson_blocks::experiments::{
    circulant_ks_experiment, rate_experiment, universality_experiment, wishart_consistency_experiment, LimitLaw,
};
use dyson_blocks::sampler::{sample, sample_spectrum, write_matrix_binary, ModelSpec};

use crate::config::{resolve_points, target, DensityGrid, RunConfig, SampleFormat};
use crate::output::{num, Sink};
use crate::RunError;

/// Executes `config`, writing its outputs. Non-convergence is reported
/// after the records are written.
pub fn run(config: &RunConfig) -> Result<(), RunError> {
    let sink = Sink { path: config.output() };
    let mut echo = config.clone();
    strip_output(&mut echo);
    let echo = serde_json::to_value(&echo).expect("config serializes");
    match config {
        RunConfig::Solve { model, eta, z, z_grid, solver, .. } => {
            let law = target(model, eta)?;
            let zs = resolve_points(z, z_grid)?;
            solver.validate()?;
            let rows = zs.par_iter().map(|&z| solve_point(&law, z, solver)).collect::<Result<Vec<_>, _>>()?;
            let mut csv = String::from("re_z,im_z,re_g,im_g,residual,iterations,converged\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    num(r.z.re),
                    num(r.z.im),
                    num(r.g.re),
                    num(r.g.im),
                    num(r.residual),
                    r.iterations,
                    r.converged
                );
            }
            let failed: Vec<&Point> = rows.iter().filter(|r| !r.converged).collect();
            sink.emit(csv.as_bytes(), &json!({ "config": echo, "points": rows.len(), "unconverged": failed.len() }))?;
            if let Some(p) = failed.first() {
                return Err(RunError::Numerical(format!(
                    "solver did not converge at {} of {} points (first z = {}, residual {:e})",
                    failed.len(),
                    rows.len(),
                    p.z,
                    p.residual
                )));
            }
            Ok(())
        }
        RunConfig::Density { model, eta, grid, solver, .. } => {
            let law = target(model, eta)?;
            solver.validate()?;
            let table = density(&law, grid, solver)?;
            let mass = table.mass();
            let mut csv = format!(
                "# eps={},step={},points={},mass={}\nx,rho\n",
                num(grid.eps),
                num(grid.step),
                table.points.len(),
                num(mass)
            );
            for (x, rho) in &table.points {
                let _ = writeln!(csv, "{},{}", num(*x), num(*rho));
            }
            sink.emit(csv.as_bytes(), &json!({ "config": echo, "points": table.points.len(), "mass": mass }))
        }
        RunConfig::Sample { model, trials, format, seed, .. } => {
            let spec = seeded(model, *seed);
            spec.validate().map_err(|e| RunError::Config(format!("model: {e}")))?;
            if *trials == 0 {
                return Err(RunError::Config("trials must be at least 1".into()));
            }
            let body = match format {
                SampleFormat::Spectrum => {
                    let spectra = per_trial(*trials, |t| sample_spectrum(&spec, t))
                        .map_err(|e| RunError::Numerical(e.to_string()))?;
                    let mut csv = String::from("trial,index,eigenvalue\n");
                    for s in &spectra {
                        for (k, l) in s.eigenvalues.iter().enumerate() {
                            let _ = writeln!(csv, "{},{},{}", s.trial_index, k, num(*l));
                        }
                    }
                    csv.into_bytes()
                }
                SampleFormat::Matrix => {
                    let mats =
                        per_trial(*trials, |t| sample(&spec, t)).map_err(|e| RunError::Numerical(e.to_string()))?;
                    let mut buf = Vec::new();
                    for m in &mats {
                        write_matrix_binary(m, &mut buf)?;
                    }
                    buf
                }
            };
            let summary = json!({ "config": echo, "seed": spec.seed, "trials": trials, "dimension": spec.dimension() });
            sink.emit(&body, &summary)
        }
        RunConfig::Rate { model, z, n_grid, trials, seed, solver, .. } => {
            let seed = seed.unwrap_or(model.seed);
            let r = rate_experiment(model, *z, n_grid, *trials, seed, solver)?;
            let mut csv = String::from("N,error,stderr\n");
            for ((n, e), s) in r.n_grid.iter().zip(&r.errors).zip(&r.stderrs) {
                let _ = writeln!(csv, "{n},{},{}", num(*e), num(*s));
            }
            let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
            let _ = writeln!(csv, "slope,slope_stderr\n{},{}", opt(r.slope), opt(r.slope_stderr));
            sink.emit(csv.as_bytes(), &json!({ "config": echo, "report": r }))
        }
        RunConfig::Universality { model, law_a, law_b, z, trials, seed, .. } => {
            let seed = seed.unwrap_or(model.seed);
            let r = universality_experiment(model, law_a, law_b, *z, model.n, *trials, seed)?;
            let mut csv = String::from("law,re_g,im_g,stderr,trials\n");
            for (name, est) in [(law_a.name(), &r.a), (law_b.name(), &r.b)] {
                let _ =
                    writeln!(csv, "{name},{},{},{},{}", num(est.mean.re), num(est.mean.im), num(est.stderr), est.trials);
            }
            let _ = writeln!(
                csv,
                "difference,combined_stderr,bound,within\n{},{},{},{}",
                num(r.difference),
                num(r.combined_stderr),
                num(r.bound),
                r.within
            );
            sink.emit(csv.as_bytes(), &json!({ "config": echo, "report": r }))
        }
        RunConfig::CirculantKs { d, n_grid, trials, seed, .. } => {
            let r = circulant_ks_experiment(*d, n_grid, *trials, seed.unwrap_or(0))?;
            let mut csv = String::from("N,mean_ks,stderr\n");
            for row in &r.rows {
                let _ = writeln!(csv, "{},{},{}", row.n, num(row.mean_ks), num(row.stderr));
            }
            sink.emit(csv.as_bytes(), &json!({ "config": echo, "report": r }))
        }
        RunConfig::Wishart { tensor, law, z, n, trials, identity_trials, seed, solver, .. } => {
            let r = wishart_consistency_experiment(
                tensor,
                law,
                *z,
                *n,
                *trials,
                *identity_trials,
                seed.unwrap_or(0),
                solver,
            )?;
            let mut csv = String::from(
                "re_z,im_z,re_z2,im_z2,re_solver,im_solver,re_mc,im_mc,stderr,identity_defect,within_3se\n",
            );
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{}",
                num(r.z.re),
                num(r.z.im),
                num(r.z_squared.re),
                num(r.z_squared.im),
                num(r.solver_trace.re),
                num(r.solver_trace.im),
                num(r.monte_carlo.mean.re),
                num(r.monte_carlo.mean.im),
                num(r.monte_carlo.stderr),
                num(r.identity_defect),
                r.within_3se
            );
            sink.emit(csv.as_bytes(), &json!({ "config": echo, "report": r }))
        }
    }
}

fn seeded(model: &ModelSpec, seed: Option<u64>) -> ModelSpec {
    match seed {
        Some(s) => model.with_seed(s),
        None => model.clone(),
    }
}

fn strip_output(config: &mut RunConfig) {
    match config {
        RunConfig::Solve { output, .. }
        | RunConfig::Density { output, .. }
        | RunConfig::Sample { output, .. }
        | RunConfig::Rate { output, .. }
        | RunConfig::Universality { output, .. }
        | RunConfig::CirculantKs { output, .. }
        | RunConfig::Wishart { output, .. } => *output = None,
    }
}

struct Point {
    z: Complex64,
    g: Complex64,
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn solve_point(law: &LimitLaw, z: Complex64, opts: &SolverOptions) -> Result<Point, RunError> {
    let sol = match law {
        // Closed form: exact up to rounding.
        LimitLaw::Mixture(m) => return Ok(Point { z, g: m.cauchy(z)?, residual: 0.0, iterations: 0, converged: true }),
        LimitLaw::Semicircular(eta) => solve_semicircular(eta, z, opts)?,
        LimitLaw::Wishart(pair) => solve_wishart(pair, z, opts)?,
    };
    Ok(Point { z, g: sol.trace(), residual: sol.residual, iterations: sol.iterations, converged: sol.converged })
}

fn density(law: &LimitLaw, grid: &DensityGrid, opts: &SolverOptions) -> Result<DensityTable, RunError> {
    let edges = match law {
        LimitLaw::Mixture(m) => m.edges(),
        _ => vec![],
    };
    let xs = refined_grid(grid.from, grid.to, grid.step, &edges, grid.eps)?;
    Ok(match law {
        LimitLaw::Semicircular(eta) => map_density(eta, &xs, grid.eps, opts)?,
        LimitLaw::Mixture(m) => stieltjes_density(|z| m.cauchy(z), &xs, grid.eps)?,
        LimitLaw::Wishart(pair) => stieltjes_density(
            |z| {
                let sol = solve_wishart(pair, z, opts)?;
                if !sol.converged {
                    return Err(DysonError::BadOptions(format!("no convergence (residual {:e})", sol.residual)));
                }
                Ok(sol.trace())
            },
            &xs,
            grid.eps,
        )?,
    })
}
