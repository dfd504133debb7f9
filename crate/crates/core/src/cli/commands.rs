use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{OutputKind, RunConfig};
use super::csv::{Cell, Table};
use super::shells::parse_shell_list;
use super::vtk::{read_vtk, write_vtk, VtkFields};
use crate::diagnostics::{diagnose, verify_support_bounds, DiagnoseOptions, DiagnosticsReport};
use crate::energy::{domain_potential, energy_of_pair, EnergyReport};
use crate::error::{Result, ScreenError};
use crate::geometry::{fibonacci_sphere, rasterize, DomainSpec, GridSpec, Point, ScalarField};
use crate::relaxed::{
    default_threshold, energy_curve, extract_negative_phase, solve_obstacle, solve_relaxed, Algorithm, ChargeDensity,
};
use crate::spherical::{
    ball_screening_annulus, critical_ratio, critical_ratio_residual, optimal_bilayer, optimal_configuration,
    total_energy_closed_form, RadialConfig,
};
use crate::surface::{ball_surface_minimum, gamma_energy_sequence, solve_surface_measure, verify_external_match};

/// Process exit status of a command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    Flagged,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Converged => 0,
            Status::Flagged => 2,
        }
    }

    fn from_flag(ok: bool) -> Self {
        if ok {
            Status::Converged
        } else {
            Status::Flagged
        }
    }
}

/// Where and how loudly a command reports.
#[derive(Clone, Debug, Default)]
pub struct Context {
    pub out_dir: Option<PathBuf>,
    pub quiet: bool,
}

impl Context {
    fn say(&self, line: &str) {
        if !self.quiet {
            println!("{line}");
        }
    }
}

/// Files produced by a command, written only once everything succeeded.
#[derive(Default)]
struct Staged {
    files: Vec<(String, String)>,
}

impl Staged {
    fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    /// Writes every file through a temporary name and renames it into
    /// place; on failure the files already placed are removed.
    fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut placed = Vec::new();
        for (name, body) in &self.files {
            let target = dir.join(name);
            let tmp = dir.join(format!(".{name}.partial"));
            let res = fs::write(&tmp, body).and_then(|_| fs::rename(&tmp, &target));
            if let Err(e) = res {
                let _ = fs::remove_file(&tmp);
                for p in &placed {
                    let _ = fs::remove_file(p);
                }
                return Err(e.into());
            }
            placed.push(target);
        }
        Ok(placed)
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| ScreenError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}

fn centroid(field: &ScalarField) -> Point {
    let g = &field.grid;
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for (i, &v) in field.values.iter().enumerate() {
        if v != 0.0 {
            let c = g.center_of(i);
            for a in 0..3 {
                acc[a] += v * c[a];
            }
            total += v;
        }
    }
    if total == 0.0 {
        return [0.0; 3];
    }
    acc.map(|x| x / total)
}

/// Largest `u` in the two outermost cell layers.
fn face_charge(u: &ScalarField) -> f64 {
    let g = &u.grid;
    let [nx, ny, nz] = g.dims;
    let near = |i: usize, n: usize| i < 2 || i + 2 >= n;
    u.values
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let [i, j, k] = g.coords(*idx);
            near(i, nx) || near(j, ny) || near(k, nz)
        })
        .fold(0.0, |m, (_, &v)| m.max(v))
}

/// Radial profile about `center` in bins of width `h`.
fn radial_table(center: Point, grid: &GridSpec, fields: &[(&str, &[f64])]) -> Table {
    let h = grid.spacing;
    let mut header = vec!["r_inner", "r_outer", "cells"];
    header.extend(fields.iter().map(|(n, _)| *n));
    let mut table = Table::new(&header);
    let mut bins: Vec<(usize, Vec<f64>)> = Vec::new();
    for idx in 0..grid.len() {
        let c = grid.center_of(idx);
        let r = ((c[0] - center[0]).powi(2) + (c[1] - center[1]).powi(2) + (c[2] - center[2]).powi(2)).sqrt();
        let b = (r / h) as usize;
        if bins.len() <= b {
            bins.resize(b + 1, (0, vec![0.0; fields.len()]));
        }
        bins[b].0 += 1;
        for (k, (_, v)) in fields.iter().enumerate() {
            bins[b].1[k] += v[idx];
        }
    }
    for (b, (count, sums)) in bins.iter().enumerate() {
        if *count == 0 {
            continue;
        }
        let mut row: Vec<Cell> = vec![(b as f64 * h).into(), ((b + 1) as f64 * h).into(), (*count).into()];
        row.extend(sums.iter().map(|s| Cell::Num(s / *count as f64)));
        table.push(row);
    }
    table
}

#[derive(Serialize)]
struct RelaxedSummary {
    energy: EnergyReport,
    mass: f64,
    converged: bool,
    iterations: usize,
    residual: f64,
    tau: f64,
    multiplier: f64,
}

#[derive(Serialize)]
struct ObstacleSummary {
    converged: bool,
    sweeps: usize,
    residual: f64,
    /// `max |φ_obstacle − φ_relaxed|` when both ran.
    max_diff_vs_relaxed: Option<f64>,
    max_diff_over_h2: Option<f64>,
}

/// Quantities recomputed from stored fields by `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct FieldChecks {
    pub mass_plus: f64,
    pub mass_minus: f64,
    pub energy: f64,
    pub theta: f64,
    pub diagnostics: DiagnosticsReport,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    command: &'static str,
    config: &'a RunConfig,
    grid: &'a GridSpec,
    mass_plus: f64,
    mass_plus_grid: f64,
    lambda: f64,
    relaxed: Option<RelaxedSummary>,
    obstacle: Option<ObstacleSummary>,
    theta: f64,
    phase_volume: f64,
    face_charge: f64,
    diagnostics: DiagnosticsReport,
    stored_fields: Option<FieldChecks>,
    converged: bool,
}

fn theta_factor_title(factor: f64, shells: usize) -> String {
    format!("coulomb-screen fields theta_factor={factor} exclusion_shells={shells}")
}

fn parse_title(title: &str) -> (f64, usize) {
    let mut factor = 0.5;
    let mut shells = 3;
    for tok in title.split_whitespace() {
        if let Some(v) = tok.strip_prefix("theta_factor=") {
            factor = v.parse().unwrap_or(factor);
        } else if let Some(v) = tok.strip_prefix("exclusion_shells=") {
            shells = v.parse().unwrap_or(shells);
        }
    }
    (factor, shells)
}

/// Diagnostics that only need the stored `u_plus`, `u` and `phi` fields.
pub fn field_checks(fields: &VtkFields, theta_factor: f64, exclusion_shells: usize) -> Result<FieldChecks> {
    let get = |n: &str| fields.field(n).ok_or_else(|| ScreenError::Config(format!("field {n:?} missing")));
    let up = get("u_plus")?;
    let u = get("u")?;
    let phi = get("phi")?;
    let g = &up.grid;
    let h = g.spacing;
    let theta = theta_factor * h * h * phi.max().max(0.0);
    let mask = extract_negative_phase(&phi, &up, theta)?;
    let solid = up.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    let domain = DomainSpec::VoxelMask { field: solid };
    let density = ChargeDensity { mass: u.integral(), field: u.clone(), lambda_cap: None, omega_plus_mask: up.clone() };
    let center = centroid(&up);
    let reach = (0..3).map(|a| (center[a] - g.box_min()[a]).min(g.box_max()[a] - center[a])).fold(f64::INFINITY, f64::min);
    let opts = DiagnoseOptions {
        exclusion_shells,
        flux_spheres: if reach > 2.0 * h { vec![(center, reach - 2.0 * h)] } else { vec![] },
        ..Default::default()
    };
    let mut diagnostics = diagnose(&domain, &up, &density, &phi, &mask, theta, &opts)?;
    // neutrality against the rasterized charge
    let mass_plus = up.integral();
    diagnostics.neutrality_error = (density.mass - mass_plus).abs() / mass_plus;
    let energy = energy_of_pair(&up, &u)?.total;
    Ok(FieldChecks { mass_plus, mass_minus: density.mass, energy, theta, diagnostics })
}

pub fn cmd_solve(config: &Path, ctx: &Context) -> Result<Status> {
    let cfg = load_config(config)?;
    let grid = cfg.working_grid()?;
    let up = rasterize(&cfg.problem, &grid, cfg.grid.subsamples)?;
    let m = cfg.mass();
    let lambda = cfg.lambda_value();
    let h = grid.spacing;
    let run_pg = matches!(cfg.solver.algorithm, Algorithm::ProjectedGradient | Algorithm::Both);
    let run_obs = matches!(cfg.solver.algorithm, Algorithm::ObstaclePgs | Algorithm::Both);

    let relaxed = if run_pg { Some(solve_relaxed(&up, lambda, &cfg.solver)?) } else { None };
    let obstacle = if run_obs { Some(solve_obstacle(&up, &cfg.solver)?) } else { None };

    let (density, phi, energy) = match (&relaxed, &obstacle) {
        (Some(r), _) => (r.density.clone(), r.phi.clone(), r.energy.clone()),
        (None, Some(o)) => {
            let values = o.phi.values.iter().zip(&up.values).map(|(&f, &p)| if f > 0.0 && p < 1.0 { 1.0 - p } else { 0.0 }).collect();
            let u = ScalarField { grid: grid.clone(), values };
            let energy = energy_of_pair(&up, &u)?;
            (ChargeDensity::new(u, None, &up)?, o.phi.clone(), energy)
        }
        (None, None) => unreachable!("algorithm selects at least one solver"),
    };
    let theta = default_threshold(&phi, &cfg.solver);
    let mask = extract_negative_phase(&phi, &up, theta)?;
    let dcfg = cfg.diagnostics.clone().unwrap_or_default();
    let shells = if cfg.diagnostics.is_some() { dcfg.exclusion_shells } else { 3 };
    let center = centroid(&up);
    let opts = DiagnoseOptions {
        exclusion_shells: shells,
        flux_spheres: dcfg.flux_radii.iter().map(|&r| (center, r)).collect(),
        min_diam_points: dcfg.min_diam_points.clone(),
        min_diam_radii: dcfg.min_diam_radii.clone(),
    };
    let diagnostics = diagnose(&cfg.problem, &up, &density, &phi, &mask, theta, &opts)?;
    let face = face_charge(&density.field);

    let obstacle_summary = obstacle.as_ref().map(|o| {
        let diff = relaxed
            .as_ref()
            .map(|r| o.phi.values.iter().zip(&r.phi.values).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())));
        ObstacleSummary {
            converged: o.converged,
            sweeps: o.sweeps,
            residual: o.residual,
            max_diff_vs_relaxed: diff,
            max_diff_over_h2: diff.map(|d| d / (h * h)),
        }
    });
    let converged = relaxed.as_ref().is_none_or(|r| r.converged) && obstacle.as_ref().is_none_or(|o| o.converged) && face == 0.0;

    let mut staged = Staged::default();
    let mut vtk_fields: Vec<(&str, &[f64])> =
        vec![("u_plus", &up.values), ("u", &density.field.values), ("phi", &phi.values), ("omega_minus", &mask.values)];
    if let (Some(o), Some(_)) = (&obstacle, &relaxed) {
        vtk_fields.push(("phi_obstacle", &o.phi.values));
    }
    let mut stored = None;
    if cfg.outputs.contains(&OutputKind::VtkFields) {
        let text = write_vtk(&theta_factor_title(cfg.solver.phase_threshold_factor, shells), &grid, &vtk_fields)?;
        stored = Some(field_checks(&read_vtk(&text)?, cfg.solver.phase_threshold_factor, shells)?);
        staged.add("fields.vtk", text);
    }
    if cfg.outputs.contains(&OutputKind::CsvRadial) {
        staged.add("radial.csv", radial_table(center, &grid, &vtk_fields).render());
    }
    let report = SolveReport {
        command: "solve",
        config: &cfg,
        grid: &grid,
        mass_plus: m,
        mass_plus_grid: up.integral(),
        lambda,
        relaxed: relaxed.as_ref().map(|r| RelaxedSummary {
            energy: r.energy.clone(),
            mass: r.density.mass,
            converged: r.converged,
            iterations: r.iterations,
            residual: r.residual,
            tau: r.tau,
            multiplier: r.multiplier,
        }),
        obstacle: obstacle_summary,
        theta,
        phase_volume: mask.integral(),
        face_charge: face,
        diagnostics,
        stored_fields: stored,
        converged,
    };
    if cfg.outputs.contains(&OutputKind::JsonReport) {
        staged.add("report.json", to_json(&report));
    }
    if let Some(dir) = &ctx.out_dir {
        staged.commit(dir)?;
    } else if !staged.files.is_empty() {
        return Err(ScreenError::Config("outputs requested but no --out directory given".into()));
    }
    let residual = relaxed.as_ref().map(|r| r.residual).or(obstacle.as_ref().map(|o| o.residual)).unwrap_or(0.0);
    ctx.say(&format!(
        "solve: energy={} mass={} lambda={} residual={:e} screening={:e} converged={}",
        energy.total, density.mass, lambda, residual, report.diagnostics.screening_residual, converged
    ));
    if face > 0.0 {
        eprintln!("warning: negative charge reaches the box faces (max u = {face}); enlarge grid.margin");
    }
    Ok(Status::from_flag(converged))
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    limit: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    command: &'static str,
    file: String,
    checks: FieldChecks,
    results: Vec<Check>,
    /// Largest difference to the `stored_fields` block of a `report.json`
    /// next to the fields file, when present.
    drift: Option<f64>,
    pass: bool,
}

fn drift(a: &FieldChecks, b: &FieldChecks) -> f64 {
    let d = |x: f64, y: f64| if x == y || (x.is_nan() && y.is_nan()) { 0.0 } else { (x - y).abs() };
    let (p, q) = (&a.diagnostics, &b.diagnostics);
    let mut worst = [
        d(a.mass_plus, b.mass_plus),
        d(a.mass_minus, b.mass_minus),
        d(a.energy, b.energy),
        d(a.theta, b.theta),
        d(p.neutrality_error, q.neutrality_error),
        d(p.screening_residual, q.screening_residual),
        d(p.min_phi, q.min_phi),
        d(p.dist_bound_margin, q.dist_bound_margin),
        d(p.diam_ratio, q.diam_ratio),
        d(p.gap_omega0, q.gap_omega0),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if p.components_touching != q.components_touching || p.flux_errors.len() != q.flux_errors.len() {
        worst = f64::INFINITY;
    }
    for (x, y) in p.flux_errors.iter().zip(&q.flux_errors) {
        worst = worst.max(d(x.error, y.error));
    }
    worst
}

pub fn cmd_verify(path: &Path, ctx: &Context) -> Result<Status> {
    let text = fs::read_to_string(path).map_err(|e| ScreenError::Config(format!("cannot read {}: {e}", path.display())))?;
    let fields = read_vtk(&text)?;
    let title = text.lines().nth(1).unwrap_or("");
    let (factor, shells) = parse_title(title);
    let checks = field_checks(&fields, factor, shells)?;
    let up = fields.field("u_plus").expect("checked");
    let h = up.grid.spacing;
    let phi_max = fields.field("phi").expect("checked").max();
    let dg = &checks.diagnostics;
    let bounds = {
        let mask = extract_negative_phase(&fields.field("phi").expect("checked"), &up, checks.theta)?;
        verify_support_bounds(&mask, &DomainSpec::VoxelMask { field: up.map(|v| if v > 0.5 { 1.0 } else { 0.0 }) })?
    };
    let mut results = vec![
        Check { name: "neutrality", value: dg.neutrality_error, limit: 1e-2, pass: dg.neutrality_error <= 1e-2 },
        Check { name: "screening", value: dg.screening_residual, limit: 1e-2, pass: dg.screening_residual <= 1e-2 },
        Check {
            name: "nonnegativity",
            value: dg.min_phi,
            limit: -10.0 * h * h * phi_max,
            pass: dg.min_phi >= -10.0 * h * h * phi_max,
        },
        Check { name: "distance_bound", value: bounds.max_distance, limit: bounds.distance_bound, pass: bounds.max_distance <= bounds.distance_bound },
        Check { name: "diameter_bound", value: bounds.diam_ratio, limit: bounds.diam_bound, pass: bounds.diam_ratio <= bounds.diam_bound },
        Check {
            name: "components_touch",
            value: bounds.touching as f64,
            limit: bounds.components as f64,
            pass: bounds.touching == bounds.components,
        },
    ];
    for f in &dg.flux_errors {
        results.push(Check { name: "flux", value: f.error, limit: 2e-2, pass: f.error <= 2e-2 });
    }
    let report_path = path.parent().map(|p| p.join("report.json"));
    let stored: Option<FieldChecks> = report_path
        .filter(|p| p.exists())
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
        .and_then(|v| v.get("stored_fields").cloned())
        .and_then(|v| serde_json::from_value(v).ok());
    let drift = stored.as_ref().map(|s| drift(s, &checks));
    if let Some(d) = drift {
        results.push(Check { name: "drift", value: d, limit: 1e-12, pass: d <= 1e-12 });
    }
    let pass = results.iter().all(|c| c.pass);
    let report = VerifyReport { command: "verify", file: path.display().to_string(), checks, results, drift, pass };
    let json = to_json(&report);
    if let Some(dir) = &ctx.out_dir {
        let mut staged = Staged::default();
        staged.add("verify.json", json.clone());
        staged.commit(dir)?;
    }
    if !ctx.quiet {
        print!("{json}");
        for c in report.results.iter().filter(|c| !c.pass) {
            eprintln!("verify: {} failed ({} vs {})", c.name, c.value, c.limit);
        }
    }
    Ok(Status::from_flag(pass))
}

/// `oracle` subcommands.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleQuery {
    CriticalRatio,
    Bilayer { r1: f64, r2: f64 },
    Ball { radius: f64 },
    Energy { shells: String },
}

pub fn oracle_json(q: &OracleQuery) -> Result<serde_json::Value> {
    use serde_json::json;
    Ok(match q {
        OracleQuery::CriticalRatio => {
            let r = critical_ratio();
            json!({ "critical_ratio": r, "residual": critical_ratio_residual(r) })
        }
        OracleQuery::Bilayer { r1, r2 } => {
            if !(*r1 > 0.0 && r2 > r1) || !r2.is_finite() {
                return Err(ScreenError::Precondition(format!("need 0 < R1 < R2, got ({r1}, {r2})")));
            }
            let (a, b) = optimal_bilayer(*r1, *r2)?;
            let config = optimal_configuration(*r1, *r2)?;
            json!({
                "r1": a,
                "r2": b,
                "ratio": r2 / r1,
                "critical_ratio": critical_ratio(),
                "energy": total_energy_closed_form(&config)?,
                "shells": config.shells,
            })
        }
        OracleQuery::Ball { radius } => {
            let (a, b) = ball_screening_annulus(*radius)?;
            let config = optimal_configuration(0.0, *radius)?;
            json!({
                "annulus": [a, b],
                "energy": total_energy_closed_form(&config)?,
                "shells": config.shells,
            })
        }
        OracleQuery::Energy { shells } => {
            let config: RadialConfig = parse_shell_list(shells)?;
            json!({ "energy": total_energy_closed_form(&config)?, "shells": config.shells })
        }
    })
}

pub fn cmd_oracle(q: &OracleQuery, ctx: &Context) -> Result<Status> {
    let json = to_json(&oracle_json(q)?);
    if let Some(dir) = &ctx.out_dir {
        let mut staged = Staged::default();
        staged.add("oracle.json", json.clone());
        staged.commit(dir)?;
    }
    if !ctx.quiet {
        print!("{json}");
    }
    Ok(Status::Converged)
}

#[derive(Serialize)]
struct SurfaceReport {
    command: &'static str,
    nodes: usize,
    mass: f64,
    energy: f64,
    /// `−m²/(4πR)` for a ball.
    closed_form: Option<f64>,
    density_dispersion: f64,
    exterior_match: f64,
    converged: bool,
    iterations: usize,
    residual: f64,
}

pub fn cmd_surface(config: &Path, ctx: &Context) -> Result<Status> {
    let cfg = load_config(config)?;
    let sec = cfg.surface.clone().ok_or_else(|| ScreenError::Config("surface: section missing".into()))?;
    let sol = solve_surface_measure(&cfg.problem, sec.nodes, &cfg.solver)?;
    let (lo, hi) = cfg.problem.bounding_box().ok_or(ScreenError::EmptyDomain)?;
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
    let circum = 0.5 * ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt();
    let probe_r = match &cfg.problem {
        DomainSpec::Ball { radius, .. } => sec.probe_factor * radius,
        _ => sec.probe_factor * circum,
    };
    let probes: Vec<Point> = fibonacci_sphere(sec.probes)
        .iter()
        .map(|d| [center[0] + probe_r * d[0], center[1] + probe_r * d[1], center[2] + probe_r * d[2]])
        .collect();
    let exterior_match = verify_external_match(&sol.measure, &cfg.problem, &probes)?;
    let closed_form = match &cfg.problem {
        DomainSpec::Ball { radius, .. } => Some(ball_surface_minimum(*radius)),
        _ => None,
    };
    let report = SurfaceReport {
        command: "surface",
        nodes: sol.measure.len(),
        mass: sol.measure.total_mass,
        energy: sol.energy,
        closed_form,
        density_dispersion: sol.measure.density_dispersion(),
        exterior_match,
        converged: sol.converged,
        iterations: sol.iterations,
        residual: sol.residual,
    };
    let mut staged = Staged::default();
    if cfg.outputs.contains(&OutputKind::CsvRadial) {
        let mut nodes = Table::new(&["x", "y", "z", "weight", "mass", "density", "potential"]);
        let mu = &sol.measure;
        for i in 0..mu.len() {
            let p = mu.nodes[i];
            nodes.push(vec![
                p[0].into(),
                p[1].into(),
                p[2].into(),
                mu.weights[i].into(),
                mu.masses[i].into(),
                (mu.masses[i] / mu.weights[i]).into(),
                sol.node_potential[i].into(),
            ]);
        }
        staged.add("surface_nodes.csv", nodes.render());
        let mut ext = Table::new(&["x", "y", "z", "phi_surface", "phi_plus", "difference"]);
        for p in &probes {
            let a = mu.potential_at(*p);
            let b = domain_potential(&cfg.problem, *p)?;
            ext.push(vec![p[0].into(), p[1].into(), p[2].into(), a.into(), b.into(), (a - b).into()]);
        }
        staged.add("surface_exterior.csv", ext.render());
    }
    if cfg.outputs.contains(&OutputKind::JsonReport) {
        staged.add("surface.json", to_json(&report));
    }
    if let Some(dir) = &ctx.out_dir {
        staged.commit(dir)?;
    } else if !staged.files.is_empty() {
        return Err(ScreenError::Config("outputs requested but no --out directory given".into()));
    }
    ctx.say(&format!(
        "surface: n={} energy={} dispersion={:e} exterior_match={:e} converged={}",
        report.nodes, report.energy, report.density_dispersion, report.exterior_match, report.converged
    ));
    Ok(Status::from_flag(sol.converged))
}

pub fn cmd_sweep(config: &Path, ctx: &Context) -> Result<Status> {
    let cfg = load_config(config)?;
    let sec = cfg.sweep.clone().ok_or_else(|| ScreenError::Config("sweep: section missing".into()))?;
    if sec.lambda_fractions.is_empty() && sec.eps.is_empty() {
        return Err(ScreenError::Config("sweep: both lambda_fractions and eps are empty".into()));
    }
    let m = cfg.mass();
    let mut staged = Staged::default();
    let mut all_converged = true;
    let mut summary = serde_json::Map::new();
    if !sec.lambda_fractions.is_empty() {
        let grid = cfg.working_grid()?;
        let up = rasterize(&cfg.problem, &grid, cfg.grid.subsamples)?;
        let lambdas: Vec<f64> = sec.lambda_fractions.iter().map(|f| f * m).collect();
        let curve = energy_curve(&up, &lambdas, &cfg.solver)?;
        let mut t = Table::new(&["lambda", "lambda_over_m", "energy", "mass", "converged", "iterations"]);
        let mut energies = Vec::new();
        for (l, s) in &curve {
            all_converged &= s.converged;
            energies.push(s.energy.total);
            t.push(vec![(*l).into(), (l / m).into(), s.energy.total.into(), s.density.mass.into(), s.converged.into(), s.iterations.into()]);
        }
        staged.add("energy_curve.csv", t.render());
        summary.insert("energy_curve".into(), serde_json::json!(energies));
    }
    if !sec.eps.is_empty() {
        let seq = gamma_energy_sequence(&cfg.problem, &sec.eps, sec.radial_nr, &cfg.solver)?;
        let mut t = Table::new(&["eps", "energy", "converged", "iterations"]);
        for p in &seq {
            all_converged &= p.converged;
            t.push(vec![p.eps.into(), p.energy.into(), p.converged.into(), p.iterations.into()]);
        }
        staged.add("gamma.csv", t.render());
        summary.insert("gamma".into(), serde_json::json!(seq.iter().map(|p| p.energy).collect::<Vec<_>>()));
    }
    summary.insert("converged".into(), serde_json::json!(all_converged));
    if cfg.outputs.contains(&OutputKind::JsonReport) {
        staged.add("sweep.json", to_json(&summary));
    }
    match &ctx.out_dir {
        Some(dir) => {
            staged.commit(dir)?;
        }
        None => return Err(ScreenError::Config("sweep writes CSV files and needs --out".into())),
    }
    ctx.say(&format!("sweep: {} converged={}", serde_json::Value::Object(summary.clone()), all_converged));
    Ok(Status::from_flag(all_converged))
}
