//! Batch front end: one command per invocation, deterministic outputs.

pub mod config;
pub mod output;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::conformal::{classify_regime_at, solve_droplet, solve_params, MapError, RationalMap, RegimeTag};
use crate::evolve::{evolve, Convention, EvolveError};
use crate::moments::{MomentData, MomentKind, Potential};
use crate::orthopoly::{build_basis, compute_gram, GramOptions, OrthoBasis, OrthoError};
use crate::precision::Precision;
use crate::quadrature::{build_grid, gram_oracle_prewhitened, integer_m, QuadError};
use crate::spectral::{
    build_curve, density_profile, kl_from_profile, profile_sup_error, trace_trajectory, zero_trajectory_distance, SpectralError,
    TraceOptions,
};

pub use config::{ConfigError, RunConfig};
use output::{cjson, CsvCell, Sink, Svg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveMap,
    Density,
    Kl,
    Zeros,
    Trajectory,
    Evolve,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveMap => "solve-map",
            Command::Density => "density",
            Command::Kl => "kl",
            Command::Zeros => "zeros",
            Command::Trajectory => "trajectory",
            Command::Evolve => "evolve",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("output error: {0}")]
    Io(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Ortho(#[from] OrthoError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("{0} validation check(s) failed")]
    Validation(usize),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<QuadError> for CliError {
    fn from(e: QuadError) -> Self {
        CliError::Ortho(OrthoError::Quadrature(e))
    }
}

impl CliError {
    /// 0 ok, 1 config/io/validation, 2 regime, 3 solver, 4 quadrature,
    /// 5 orthogonalization, 6 trajectory.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Validation(_) => 1,
            CliError::Map(e) | CliError::Spectral(SpectralError::Map(e)) => map_code(e),
            CliError::Evolve(EvolveError::Solve { source, .. }) => map_code(source),
            CliError::Evolve(EvolveError::InvalidArgument(_)) => 1,
            CliError::Ortho(e) | CliError::Spectral(SpectralError::Ortho(e)) => ortho_code(e),
            CliError::Spectral(_) => 6,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "input",
            2 => "regime",
            3 => "solver",
            4 => "quadrature",
            5 => "orthogonalization",
            _ => "trajectory",
        }
    }
}

fn map_code(e: &MapError) -> i32 {
    match e {
        MapError::RegimeViolation(_) => 2,
        _ => 3,
    }
}

fn ortho_code(e: &OrthoError) -> i32 {
    match e {
        OrthoError::Quadrature(_) => 4,
        _ => 5,
    }
}

/// Command-line options that sit next to the config file.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: Command,
    pub config: PathBuf,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub extended_precision: bool,
    pub seed: Option<u64>,
    pub dump_grid: bool,
}

/// Load the config, apply overrides and run. On failure an `error.json`
/// report is written to the output directory when possible.
pub fn run(opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let result = RunConfig::load(&opts.config).map_err(CliError::from).and_then(|mut cfg| {
        cfg.extended_precision |= opts.extended_precision;
        if let Some(s) = opts.seed {
            cfg.seed = s;
        }
        execute(opts.command, &cfg, &opts.out, opts.dump_grid)
    });
    if let Err(e) = &result {
        let report = error_report(opts.command, e);
        if std::fs::create_dir_all(&opts.out).is_ok() {
            let _ = std::fs::write(opts.out.join("error.json"), format!("{}\n", serde_json::to_string_pretty(&report).unwrap()));
        }
    }
    result
}

/// Machine-readable failure description.
pub fn error_report(command: Command, e: &CliError) -> Value {
    let detail = match e {
        CliError::Config(c) => c.report(),
        CliError::Map(MapError::RegimeViolation(r)) => json!({ "regime": r }),
        _ => Value::Null,
    };
    json!({
        "schema_version": output::SCHEMA_VERSION,
        "artifact_version": output::ARTIFACT_VERSION,
        "command": command.name(),
        "exit_code": e.exit_code(),
        "kind": e.kind(),
        "message": e.to_string(),
        "detail": detail,
    })
}

/// Run one command on a validated config.
pub fn execute(command: Command, cfg: &RunConfig, out: &Path, dump_grid: bool) -> Result<Vec<PathBuf>, CliError> {
    let mut sink = Sink::new(out, &cfg.hash(), command.name())?;
    match command {
        Command::SolveMap => cmd_solve_map(cfg, &mut sink)?,
        Command::Density => cmd_density(cfg, &mut sink, dump_grid)?,
        Command::Kl => cmd_kl(cfg, &mut sink, dump_grid)?,
        Command::Zeros => cmd_zeros(cfg, &mut sink, dump_grid)?,
        Command::Trajectory => cmd_trajectory(cfg, &mut sink, dump_grid)?,
        Command::Evolve => cmd_evolve(cfg, &mut sink)?,
        Command::Validate => cmd_validate(cfg, &mut sink)?,
    }
    Ok(sink.written)
}

fn geometric(cfg: &RunConfig) -> Result<(f64, Complex64), MapError> {
    match cfg.moments.kind {
        MomentKind::Geometric { beta, a } => Ok((beta, a)),
        MomentKind::Explicit { .. } => Err(MapError::InvalidArgument("this command needs geometric moments (beta, a)".into())),
    }
}

/// Droplet of the weight e^{-N|z|²}|1 − z/a|^{2Nβ}.
fn droplet_map(cfg: &RunConfig) -> Result<RationalMap, MapError> {
    geometric(cfg)?;
    Ok(solve_droplet(&cfg.moments)?.map)
}

fn gram_options(cfg: &RunConfig, n: usize) -> GramOptions {
    GramOptions { grid: cfg.grid, ..GramOptions::for_degree(n, cfg.extended_precision) }
}

struct Basis {
    n_big: f64,
    precision: Precision,
    basis: OrthoBasis,
}

fn basis_for(cfg: &RunConfig, n: usize, sink: &mut Sink, dump_grid: bool) -> Result<Basis, CliError> {
    let p = Potential::new(cfg.moments.clone());
    let n_big = cfg.n_big(n);
    let opts = gram_options(cfg, n);
    if dump_grid {
        let grid = build_grid(&p, n_big, n, opts.grid)?;
        let rows: Vec<Vec<CsvCell>> = grid.nodes().map(|(z, w)| vec![z.re.into(), z.im.into(), w.into()]).collect();
        sink.csv(&format!("grid_n{n}.csv"), &["re", "im", "weight"], &rows)?;
    }
    let (_, basis) = build_basis(&p, n, n_big, &opts)?;
    Ok(Basis { n_big, precision: opts.precision, basis })
}

fn regime_json(cfg: &RunConfig, beta: f64, a: Complex64) -> Value {
    let r = classify_regime_at(beta, a, cfg.moments.t0);
    json!({ "tag": r.tag, "r1": r.r1, "r2": r.r2 })
}

fn map_json(map: &RationalMap) -> Value {
    let (z1, z2) = map.branch_points();
    json!({
        "r": map.r,
        "u": cjson(map.u),
        "v": cjson(map.v),
        "A": cjson(map.pole),
        "t0": map.t0(),
        "branch_points": [cjson(z1), cjson(z2)],
        "exterior_pole": map.exterior_pole().map(cjson),
    })
}

fn boundary_rows(map: &RationalMap, m: usize) -> Vec<Vec<CsvCell>> {
    (0..m)
        .map(|j| {
            let theta = 2.0 * PI * j as f64 / m as f64;
            let zeta = Complex64::from_polar(1.0, theta);
            let z = map.eval(zeta);
            let measure = 1.0 / (2.0 * PI * map.deriv(zeta).norm());
            vec![theta.into(), z.re.into(), z.im.into(), measure.into()]
        })
        .collect()
}

fn cmd_solve_map(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let (beta, a) = geometric(cfg)?;
    let t0 = cfg.moments.t0;
    let regime = classify_regime_at(beta, a, t0);
    if regime.tag == RegimeTag::DoublyConnected {
        return Err(MapError::RegimeViolation(regime).into());
    }
    let solved = match cfg.convention {
        Convention::Literal => solve_params(beta, a, t0)?,
        Convention::Droplet => solve_droplet(&cfg.moments)?,
    };
    let mut body = map_json(&solved.map);
    let obj = body.as_object_mut().unwrap();
    obj.insert("beta".into(), json!(beta));
    obj.insert("a".into(), cjson(a));
    obj.insert("convention".into(), json!(cfg.convention));
    obj.insert("regime".into(), regime_json(cfg, beta, a));
    obj.insert("univalent".into(), json!(solved.univalent));
    obj.insert("newton_iterations".into(), json!(solved.newton_iterations));
    obj.insert("homotopy_steps".into(), json!(solved.homotopy_steps));
    sink.json("map.json", body)?;
    sink.csv("boundary.csv", &["theta", "re", "im", "conformal_measure"], &boundary_rows(&solved.map, 512))?;
    Ok(())
}

/// Bounding box of the droplet (or of the disk of area t0) scaled by `factor`.
fn view_box(map: Option<&RationalMap>, t0: f64, factor: f64) -> (f64, f64, f64, f64) {
    let pts = match map {
        Some(m) => m.boundary_polygon(512),
        None => (0..64).map(|j| Complex64::from_polar(t0.sqrt(), 2.0 * PI * j as f64 / 64.0)).collect(),
    };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for z in &pts {
        x0 = x0.min(z.re);
        x1 = x1.max(z.re);
        y0 = y0.min(z.im);
        y1 = y1.max(z.im);
    }
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let h = 0.5 * factor * (x1 - x0).max(y1 - y0);
    (cx - h, cx + h, cy - h, cy + h)
}

fn cmd_density(cfg: &RunConfig, sink: &mut Sink, dump_grid: bool) -> Result<(), CliError> {
    let map = match cfg.moments.kind {
        MomentKind::Geometric { .. } => Some(droplet_map(cfg)?),
        MomentKind::Explicit { .. } => None,
    };
    let (x0, x1, y0, y1) = view_box(map.as_ref(), cfg.moments.t0, 1.5);
    let res = cfg.density.raster;
    let (dx, dy) = ((x1 - x0) / res as f64, (y1 - y0) / res as f64);
    let mut summary = Vec::new();
    for &n in &cfg.degrees {
        let b = basis_for(cfg, n, sink, dump_grid)?;
        let raster: Vec<Vec<f64>> = (0..res)
            .map(|j| {
                (0..res)
                    .map(|i| {
                        let z = Complex64::new(x0 + (i as f64 + 0.5) * dx, y0 + (j as f64 + 0.5) * dy);
                        b.basis.eval_density(n, z)
                    })
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let integral: f64 = raster.iter().flatten().sum::<f64>() * dx * dy;
        let mut rows = Vec::with_capacity(res * res);
        for (j, row) in raster.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                rows.push(vec![(x0 + (i as f64 + 0.5) * dx).into(), (y0 + (j as f64 + 0.5) * dy).into(), (*v).into()]);
            }
        }
        sink.csv(&format!("density_n{n}.csv"), &["re", "im", "rho"], &rows)?;
        let mut entry = json!({ "n": n, "N": b.n_big, "precision": b.precision, "raster_integral": integral });
        if let Some(map) = &map {
            let prof = density_profile(&b.basis, n, map, cfg.density.profile_samples)?;
            let shift = prof.iter().map(|s| s.log_measure - s.log_rho).sum::<f64>() / prof.len() as f64;
            let rows: Vec<Vec<CsvCell>> = prof
                .iter()
                .map(|s| {
                    vec![s.theta.into(), s.z.re.into(), s.z.im.into(), s.log_rho.into(), (s.log_rho + shift).into(), s.log_measure.into()]
                })
                .collect();
            sink.csv(
                &format!("profile_n{n}.csv"),
                &["theta", "re", "im", "log_rho", "log_rho_shifted", "log_inv_abs_fprime"],
                &rows,
            )?;
            entry["profile_sup_error"] = json!(profile_sup_error(&prof));
        }
        if cfg.density.svg {
            let mut svg = Svg::new(x0, x1, y0, y1, 600.0);
            svg.heatmap(&raster, x0, x1, y0, y1);
            if let Some(map) = &map {
                svg.polyline(&map.boundary_polygon(512), "red", 1.5, true);
            }
            sink.svg(&format!("density_n{n}.svg"), &svg)?;
        }
        summary.push(entry);
    }
    sink.json("density.json", json!({ "raster": res, "view_box": [x0, x1, y0, y1], "degrees": summary }))?;
    Ok(())
}

fn cmd_kl(cfg: &RunConfig, sink: &mut Sink, dump_grid: bool) -> Result<(), CliError> {
    let map = droplet_map(cfg)?;
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for &n in &cfg.degrees {
        let b = basis_for(cfg, n, sink, dump_grid)?;
        let prof = density_profile(&b.basis, n, &map, cfg.kl_samples)?;
        let kl = kl_from_profile(&prof)?;
        let sup = profile_sup_error(&prof);
        rows.push(vec![n.into(), b.n_big.into(), kl.raw.into(), kl.mean_adjusted.into(), sup.into()]);
        series.push(json!({ "k": n, "N": b.n_big, "raw": kl.raw, "mean_adjusted": kl.mean_adjusted, "profile_sup_error": sup }));
    }
    sink.csv("kl.csv", &["k", "N", "raw", "mean_adjusted", "profile_sup_error"], &rows)?;
    let decreasing = series.windows(2).all(|w| w[1]["mean_adjusted"].as_f64() < w[0]["mean_adjusted"].as_f64());
    sink.json("kl.json", json!({ "samples": cfg.kl_samples, "series": series, "mean_adjusted_decreasing": decreasing }))?;
    Ok(())
}

fn cmd_zeros(cfg: &RunConfig, sink: &mut Sink, dump_grid: bool) -> Result<(), CliError> {
    let mut summary = Vec::new();
    for &n in &cfg.degrees {
        let b = basis_for(cfg, n, sink, dump_grid)?;
        let zeros = b.basis.zeros(n, cfg.seed)?;
        let rows: Vec<Vec<CsvCell>> = zeros.iter().enumerate().map(|(i, z)| vec![i.into(), z.re.into(), z.im.into()]).collect();
        sink.csv(&format!("zeros_n{n}.csv"), &["index", "re", "im"], &rows)?;
        summary.push(json!({ "n": n, "N": b.n_big, "precision": b.precision, "count": zeros.len() }));
    }
    sink.json("zeros.json", json!({ "seed": cfg.seed, "degrees": summary }))?;
    Ok(())
}

fn cmd_trajectory(cfg: &RunConfig, sink: &mut Sink, dump_grid: bool) -> Result<(), CliError> {
    let map = droplet_map(cfg)?;
    let curve = build_curve(&map)?;
    let droplet = map.boundary_polygon(1024);
    let traj = trace_trajectory(&curve, &droplet, TraceOptions { cells: cfg.trajectory.cells, ..TraceOptions::default() })?;
    let rows: Vec<Vec<CsvCell>> = traj.points.iter().zip(&traj.rho_s).map(|(z, r)| vec![z.re.into(), z.im.into(), (*r).into()]).collect();
    sink.csv("trajectory.csv", &["re", "im", "rho_s"], &rows)?;
    sink.json(
        "curve.json",
        json!({
            "coeff_a": curve.coeff_a.num.iter().map(|c| cjson(*c)).collect::<Vec<_>>(),
            "coeff_b": curve.coeff_b.num.iter().map(|c| cjson(*c)).collect::<Vec<_>>(),
            "coeff_c": curve.coeff_c.num.iter().map(|c| cjson(*c)).collect::<Vec<_>>(),
            "jump_numerator": curve.jump_num.iter().map(|c| cjson(*c)).collect::<Vec<_>>(),
            "jump_denominator": curve.jump_den.iter().map(|c| cjson(*c)).collect::<Vec<_>>(),
            "jump_poles": curve.jump_poles.iter().map(|c| cjson(*c)).collect::<Vec<_>>(),
            "pole": cjson(curve.pole),
            "residue": cjson(curve.residue),
            "branch_points": [cjson(curve.z1), cjson(curve.z2)],
            "map": map_json(&map),
        }),
    )?;
    let mut dist_rows = Vec::new();
    let mut distances = Vec::new();
    let mut all_zeros = Vec::new();
    for &n in &cfg.degrees {
        let b = basis_for(cfg, n, sink, dump_grid)?;
        let zeros = b.basis.zeros(n, cfg.seed)?;
        let (mx, mean) = zero_trajectory_distance(&zeros, &traj)?;
        dist_rows.push(vec![n.into(), b.n_big.into(), mx.into(), mean.into()]);
        distances.push(json!({ "k": n, "N": b.n_big, "max": mx, "mean": mean }));
        all_zeros.extend(zeros);
    }
    sink.csv("distance.csv", &["k", "N", "max_dist", "mean_dist"], &dist_rows)?;
    sink.json(
        "trajectory.json",
        json!({
            "points": traj.points.len(),
            "endpoints": [cjson(traj.endpoints.0), cjson(traj.endpoints.1)],
            "arc_length": traj.arc_length,
            "raw_mass": traj.raw_mass,
            "positivity_warnings": traj.positivity_warnings,
            "components": traj.components,
            "distances": distances,
        }),
    )?;
    if cfg.trajectory.svg {
        let (x0, x1, y0, y1) = view_box(Some(&map), cfg.moments.t0, 1.2);
        let mut svg = Svg::new(x0, x1, y0, y1, 600.0);
        svg.polyline(&droplet, "black", 1.0, true);
        svg.polyline(&traj.points, "blue", 1.5, false);
        svg.dots(&all_zeros, "red", 2.0);
        sink.svg("trajectory.svg", &svg)?;
    }
    Ok(())
}

fn cmd_evolve(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let (beta, a) = geometric(cfg)?;
    let ev = evolve(beta, a, &cfg.evolve)?;
    let rows: Vec<Vec<CsvCell>> = ev
        .steps
        .iter()
        .map(|s| {
            let m = &s.map;
            vec![
                s.t0.into(),
                m.r.into(),
                m.u.re.into(),
                m.u.im.into(),
                m.v.re.into(),
                m.v.im.into(),
                m.pole.re.into(),
                m.pole.im.into(),
                s.univalent.into(),
                s.area.into(),
                s.newton_iterations.into(),
            ]
        })
        .collect();
    sink.csv("evolve.csv", &["t0", "r", "u_re", "u_im", "v_re", "v_im", "A_re", "A_im", "univalent", "area", "newton_iterations"], &rows)?;
    let m = cfg.evolve.boundary_samples;
    let mut brows = Vec::new();
    for s in ev.steps.iter().filter(|s| s.univalent) {
        for (j, z) in s.map.boundary_polygon(m).iter().enumerate() {
            brows.push(vec![s.t0.into(), (2.0 * PI * j as f64 / m as f64).into(), z.re.into(), z.im.into()]);
        }
    }
    sink.csv("boundaries.csv", &["t0", "theta", "re", "im"], &brows)?;
    sink.json(
        "evolve.json",
        json!({
            "beta": beta,
            "a": cjson(a),
            "options": cfg.evolve,
            "steps": ev.steps.len(),
            "nested": ev.nested,
            "cusp": ev.cusp,
            "stopped_at": ev.stopped_at,
        }),
    )?;
    if cfg.evolve_svg {
        if let Some(last) = ev.steps.iter().rev().find(|s| s.univalent) {
            let (x0, x1, y0, y1) = view_box(Some(&last.map), last.t0, 1.2);
            let mut svg = Svg::new(x0, x1, y0, y1, 600.0);
            for s in ev.steps.iter().filter(|s| s.univalent) {
                svg.polyline(&s.map.boundary_polygon(m), "black", 1.0, true);
            }
            sink.svg("evolve.svg", &svg)?;
        }
    }
    Ok(())
}

/// One invariant check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, pass: value <= tolerance }
    }

    fn at_least(name: impl Into<String>, value: f64, floor: f64) -> Self {
        Check { name: name.into(), value, tolerance: floor, pass: value >= floor }
    }
}

/// Oracle and invariant checks for the configured family.
pub fn validation_checks(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let p = Potential::new(cfg.moments.clone());
    let geo = geometric(cfg).ok();
    let map = if geo.is_some() { Some(droplet_map(cfg)?) } else { None };

    if let (Some((beta, a)), Some(map)) = (geo, map.as_ref()) {
        let fwd = map.forward_params()?;
        let rel = ((fwd.beta + beta).abs() / beta.abs().max(1.0))
            .max((fwd.a - a).norm() / a.norm().max(1.0))
            .max((fwd.t0 - cfg.moments.t0).abs() / cfg.moments.t0.max(1.0));
        checks.push(Check::at_most("map_roundtrip", rel, 1e-10));
        checks.push(Check { name: "map_univalent".into(), value: f64::from(u8::from(map.is_univalent())), tolerance: 1.0, pass: map.is_univalent() });
    }

    let n_small = *cfg.degrees.iter().min().unwrap();
    let n_norm = cfg.degrees.iter().copied().filter(|&n| n <= 20).max().unwrap_or(n_small);
    // Gram against the closed form when Nβ is an integer
    if let Some((beta, a)) = geo {
        let n_big = cfg.n_big(n_small);
        if integer_m(n_big * beta).is_ok() {
            let g = compute_gram(&p, n_small, n_big, &gram_options(cfg, n_small))?;
            let mut worst: f64 = 0.0;
            for i in 0..=n_small {
                for j in 0..=n_small {
                    let want = gram_oracle_prewhitened(i, j, n_big * beta, a, n_big)?;
                    let got = g.get64(i, j);
                    let scale = if want.norm() > 1e-12 { want.norm() } else { (g.get64(i, i).norm() * g.get64(j, j).norm()).sqrt() };
                    worst = worst.max((got - want).norm() / scale);
                }
            }
            checks.push(Check::at_most(format!("gram_oracle_n{n_small}"), worst, 1e-9));
        }
    }

    let n_big = cfg.n_big(n_norm);
    let opts = gram_options(cfg, n_norm);
    let (_, basis) = build_basis(&p, n_norm, n_big, &opts)?;
    let refined = compute_gram(&p, n_norm, n_big, &GramOptions { grid: opts.grid.refined(), ..opts })?;
    checks.push(Check::at_most(format!("orthonormality_n{n_norm}"), basis.orthonormality_residual(&refined), 1e-8));
    let grid = build_grid(&p, n_big, n_norm, if opts.precision == Precision::Extended { opts.grid.extended() } else { opts.grid })?;
    let mut worst: f64 = 0.0;
    for k in 0..=n_norm {
        worst = worst.max((basis.density_mass(k, &grid)? - 1.0).abs());
    }
    checks.push(Check::at_most(format!("density_mass_k0..{n_norm}"), worst, 1e-8));

    if let (Some((beta, _)), Some(map)) = (geo, map.as_ref()) {
        let prof = density_profile(&basis, n_norm, map, cfg.kl_samples)?;
        let kl = kl_from_profile(&prof)?;
        if beta == 0.0 {
            checks.push(Check::at_most("kl_disk_zero", kl.mean_adjusted.abs(), 1e-10));
            checks.push(Check::at_most("profile_constant", profile_sup_error(&prof), 1e-10));
        } else {
            checks.push(Check::at_least("kl_nonnegative", kl.mean_adjusted, -1e-12));
            match build_curve(map) {
                Ok(curve) => {
                    let mut res: f64 = 0.0;
                    for j in 0..100 {
                        let zeta = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / 100.0);
                        let z = map.eval(zeta);
                        res = res.max(curve.residual(z, z.conj() - curve.residue / (z - curve.pole)));
                    }
                    checks.push(Check::at_most("schwarz_identity", res, 1e-9));
                    let dpoly = curve.discriminant_poly();
                    let mut worst: f64 = 0.0;
                    for z in [curve.z1, curve.z2] {
                        let scale: f64 = dpoly.iter().rev().fold(0.0, |acc, c| acc * z.norm().max(1.0) + c.norm());
                        worst = worst.max(curve.discriminant(z).norm() / scale);
                    }
                    checks.push(Check::at_most("branch_points_discriminant", worst, 1e-9));
                    let avg = curve.exterior_moment(1e3, 256)?;
                    checks.push(Check::at_most("exterior_moment_circle_mean", (avg - curve.t0).norm() / curve.t0, 1e-6));
                }
                Err(SpectralError::DegenerateElimination(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(checks)
}

fn cmd_validate(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let checks = validation_checks(cfg)?;
    let rows: Vec<Vec<CsvCell>> =
        checks.iter().map(|c| vec![CsvCell::Text(c.name.clone()), c.value.into(), c.tolerance.into(), c.pass.into()]).collect();
    sink.csv("validate.csv", &["check", "value", "tolerance", "pass"], &rows)?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    sink.json("validate.json", json!({ "checks": checks, "all_passed": failed == 0 }))?;
    if failed > 0 {
        return Err(CliError::Validation(failed));
    }
    Ok(())
}

/// Convenience for callers that already hold moment data.
pub fn config_for(moments: MomentData, degrees: Vec<usize>) -> RunConfig {
    let mut cfg = RunConfig::parse(r#"{"moments": {"t0": "1", "beta": "0", "a": "1"}}"#, false).expect("default config");
    cfg.moments = moments;
    cfg.degrees = degrees;
    cfg
}
