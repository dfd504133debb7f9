//! Minimizers of the relaxed energy by two independent algorithms.
//!
//! * Projected gradient on the density `u ∈ [0, 1]`, `u = 0` on Ω⁺,
//!   `∫u ≤ λ`: since `∂E/∂u = −2φ`, each step moves `u` by `2τφ` and projects
//!   back onto the admissible set.
//! * Projected SOR on the obstacle formulation: `φ = 0` on the box faces,
//!   `−Δφ = u⁺` on Ω⁺ cells and `min(φ, −Δφ + 1) = 0` elsewhere.
//!
//! Agreement of the two potentials is the main cross-check of the crate.

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyMethod, EnergyReport};
use crate::error::{Result, ScreenError};
use crate::geometry::{GridSpec, ScalarField};
use crate::newtonian::NewtonianOperator;

/// Smallest step accepted by the backtracking line search.
pub const TAU_MIN: f64 = 1e-6;

const BISECTION_STEPS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ProjectedGradient,
    ObstaclePgs,
    Both,
}

/// Solver parameters. `tol_residual` is absolute; [`SolveConfig::for_mass`]
/// sets it to `1e-8·m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub step_tau: f64,
    pub max_iters: usize,
    pub tol_residual: f64,
    pub sor_omega: f64,
    pub phase_threshold_factor: f64,
    pub algorithm: Algorithm,
    /// Momentum extrapolation with restart; accepted iterates keep a
    /// non-increasing energy either way.
    pub accelerate: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            step_tau: 0.4,
            max_iters: 400,
            tol_residual: 1e-8,
            sor_omega: 1.7,
            phase_threshold_factor: 0.5,
            algorithm: Algorithm::Both,
            accelerate: true,
        }
    }
}

impl SolveConfig {
    pub fn for_mass(m: f64) -> Self {
        SolveConfig { tol_residual: 1e-8 * m, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_tau > 0.0) {
            return Err(ScreenError::Config(format!("step_tau must be positive, got {}", self.step_tau)));
        }
        if !(self.tol_residual > 0.0) {
            return Err(ScreenError::Config(format!("tol_residual must be positive, got {}", self.tol_residual)));
        }
        if !(self.sor_omega > 0.0 && self.sor_omega < 2.0) {
            return Err(ScreenError::Config(format!("sor_omega must lie in (0, 2), got {}", self.sor_omega)));
        }
        if !(self.phase_threshold_factor >= 0.0) {
            return Err(ScreenError::Config("phase_threshold_factor must be nonnegative".into()));
        }
        if self.max_iters == 0 {
            return Err(ScreenError::Config("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Admissible negative charge density.
#[derive(Clone, Debug)]
pub struct ChargeDensity {
    pub field: ScalarField,
    pub mass: f64,
    pub lambda_cap: Option<f64>,
    pub omega_plus_mask: ScalarField,
}

impl ChargeDensity {
    pub fn new(field: ScalarField, lambda_cap: Option<f64>, omega_plus_mask: &ScalarField) -> Result<Self> {
        field.grid.ensure_same(&omega_plus_mask.grid)?;
        let mass = field.integral();
        let d = ChargeDensity { field, mass, lambda_cap, omega_plus_mask: omega_plus_mask.clone() };
        d.check_admissible()?;
        Ok(d)
    }

    /// Bounds, exclusion from Ω⁺ and the mass cap.
    pub fn check_admissible(&self) -> Result<()> {
        for (idx, (&u, &p)) in self.field.values.iter().zip(&self.omega_plus_mask.values).enumerate() {
            if u < -1e-12 || u > 1.0 + 1e-12 {
                return Err(ScreenError::Precondition(format!("density {u} out of [0,1] at cell {idx}")));
            }
            if u > 1.0 - p + 1e-12 {
                return Err(ScreenError::Precondition(format!("density {u} overlaps the positive domain at cell {idx}")));
            }
        }
        if let Some(cap) = self.lambda_cap {
            if self.mass > cap + 1e-9 {
                return Err(ScreenError::Precondition(format!("mass {} exceeds cap {cap}", self.mass)));
            }
        }
        Ok(())
    }
}

/// Smallest `c ∈ [0, hi]` with `mass(c) ≤ λ` for a nonincreasing piecewise
/// linear `mass`; `eval(c)` returns the mass and the magnitude of its slope.
/// Newton steps inside a shrinking bisection bracket.
fn lagrange_shift(eval: impl Fn(f64) -> (f64, f64), lambda: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, hi);
    let mut c = 0.5 * hi;
    for _ in 0..BISECTION_STEPS {
        let (mass, slope) = eval(c);
        if mass > lambda {
            lo = c;
        } else {
            hi = c;
        }
        if (mass - lambda).abs() <= 1e-13 * lambda || hi - lo <= 4.0 * f64::EPSILON * hi {
            return c;
        }
        let newton = c + (mass - lambda) / slope;
        c = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    hi
}

/// Euclidean projection onto `{0 ≤ u ≤ upper, u = 0 on Ω⁺, h³Σu ≤ λ}`.
///
/// Returns the multiplier `c ≥ 0` of the mass constraint; the projection is
/// `clip(v − c, 0, upper)` on free cells.
pub fn project_admissible(v: &mut [f64], free: &[bool], upper: f64, lambda: Option<f64>, h3: f64) -> f64 {
    let clip = |x: f64| x.clamp(0.0, upper);
    let mass_at = |v: &[f64], c: f64| -> f64 {
        h3 * v.iter().zip(free).filter(|(_, &f)| f).map(|(&x, _)| clip(x - c)).sum::<f64>()
    };
    let mut shift = 0.0;
    if let Some(lambda) = lambda {
        if mass_at(v, 0.0) > lambda {
            let hi = v.iter().zip(free).filter(|(_, &f)| f).map(|(&x, _)| x).fold(0.0, f64::max);
            let eval = |c: f64| {
                v.iter().zip(free).filter(|(_, &f)| f).fold((0.0, 0.0), |(m, s), (&x, _)| {
                    let y = x - c;
                    (m + h3 * clip(y), if y > 0.0 && y < upper { s + h3 } else { s })
                })
            };
            shift = lagrange_shift(eval, lambda, hi);
        }
    }
    for (x, &f) in v.iter_mut().zip(free) {
        *x = if f { clip(*x - shift) } else { 0.0 };
    }
    shift
}

/// Projection in the `weights`-weighted L² norm onto
/// `{0 ≤ v_i ≤ upper_i, Σ weights_i v_i ≤ λ}`; cells with `upper_i = 0`
/// are forced to zero. Returns the mass multiplier.
pub fn project_weighted(v: &mut [f64], upper: &[f64], weights: &[f64], lambda: Option<f64>) -> f64 {
    let mass_at = |v: &[f64], c: f64| -> f64 {
        v.iter().zip(upper).zip(weights).map(|((&x, &b), &w)| w * (x - c).clamp(0.0, b)).sum::<f64>()
    };
    let mut shift = 0.0;
    if let Some(lambda) = lambda {
        if mass_at(v, 0.0) > lambda {
            let hi = v.iter().fold(0.0, |m: f64, &x| m.max(x));
            let eval = |c: f64| {
                v.iter().zip(upper).zip(weights).fold((0.0, 0.0), |(m, s), ((&x, &b), &w)| {
                    let y = x - c;
                    (m + w * y.clamp(0.0, b), if y > 0.0 && y < b { s + w } else { s })
                })
            };
            shift = lagrange_shift(eval, lambda, hi);
        }
    }
    for (x, &b) in v.iter_mut().zip(upper) {
        *x = (*x - shift).clamp(0.0, b);
    }
    shift
}

/// Output of [`solve_relaxed`].
#[derive(Clone, Debug)]
pub struct RelaxedSolution {
    pub density: ChargeDensity,
    pub phi: ScalarField,
    pub energy: EnergyReport,
    pub converged: bool,
    pub iterations: usize,
    /// L∞ change of the last accepted step.
    pub residual: f64,
    /// Final step size after backtracking.
    pub tau: f64,
    /// Multiplier of the mass constraint at the last projection.
    pub multiplier: f64,
    /// Energy after every accepted step.
    pub history: Vec<f64>,
}

/// Options beyond [`SolveConfig`]: warm start, density cap (`1` for the
/// standard problem) and a reusable operator.
#[derive(Default)]
pub struct RelaxedOptions<'a> {
    pub warm_start: Option<&'a ScalarField>,
    pub operator: Option<&'a NewtonianOperator>,
    pub upper: Option<f64>,
}

fn energy_terms(phi_w: &[f64], w: &[f64], h3: f64) -> f64 {
    h3 * phi_w.iter().zip(w).map(|(p, x)| p * x).sum::<f64>()
}

/// Projected-gradient minimization of the relaxed energy with mass cap `λ`.
/// Cells partly covered by Ω⁺ accept negative charge up to their uncovered
/// fraction.
pub fn solve_relaxed(omega_plus: &ScalarField, lambda: f64, cfg: &SolveConfig) -> Result<RelaxedSolution> {
    solve_relaxed_with(omega_plus, lambda, cfg, RelaxedOptions::default())
}

pub fn solve_relaxed_with(
    omega_plus: &ScalarField,
    lambda: f64,
    cfg: &SolveConfig,
    opts: RelaxedOptions<'_>,
) -> Result<RelaxedSolution> {
    cfg.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(ScreenError::Precondition(format!("lambda must be nonnegative, got {lambda}")));
    }
    let grid = &omega_plus.grid;
    let owned;
    let op = match opts.operator {
        Some(op) => {
            op.grid().ensure_same(grid)?;
            op
        }
        None => {
            owned = NewtonianOperator::new(grid)?;
            &owned
        }
    };
    let upper = opts.upper.unwrap_or(1.0);
    let h3 = grid.cell_volume();
    let caps: Vec<f64> = omega_plus.values.iter().map(|&p| upper * (1.0 - p).clamp(0.0, 1.0)).collect();
    let weights = vec![h3; grid.len()];

    let u = match opts.warm_start {
        Some(w) => {
            grid.ensure_same(&w.grid)?;
            w.values.clone()
        }
        None => vec![0.0; grid.len()],
    };
    let pg = run_projected_gradient(
        u,
        &omega_plus.values,
        |w| op.apply_values(w),
        |w, phi| energy_terms(phi, w, h3),
        |v| project_weighted(v, &caps, &weights, Some(lambda)),
        cfg,
    )?;
    let PgOutcome { u, w, phi, converged, iterations, residual, tau, multiplier, history, .. } = pg;

    let report = breakdown(op, omega_plus, &u, &phi, &w)?;
    let field = ScalarField { grid: grid.clone(), values: u };
    let density = ChargeDensity { mass: field.integral(), field, lambda_cap: Some(lambda), omega_plus_mask: omega_plus.clone() };
    Ok(RelaxedSolution {
        density,
        phi: ScalarField { grid: grid.clone(), values: phi },
        energy: report,
        converged,
        iterations,
        residual,
        tau,
        multiplier,
        history,
    })
}

/// State of a finished projected-gradient run.
pub(crate) struct PgOutcome {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub phi: Vec<f64>,
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub tau: f64,
    pub multiplier: f64,
    pub history: Vec<f64>,
}

/// Projected gradient `u ← Π(y + 2τφ(y))` on the net charge `w = u⁺ − u`.
///
/// With `cfg.accelerate`, `y` extrapolates the last two accepted iterates;
/// `φ` is linear in `u`, so `φ(y)` is extrapolated the same way without an
/// extra operator application. A step that raises the energy first drops the
/// momentum, then halves `τ`.
pub(crate) fn run_projected_gradient(
    u0: Vec<f64>,
    u_plus: &[f64],
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    energy_of: impl Fn(&[f64], &[f64]) -> f64,
    mut project: impl FnMut(&mut [f64]) -> f64,
    cfg: &SolveConfig,
) -> Result<PgOutcome> {
    let n = u0.len();
    let mut u = u0;
    let mut multiplier = project(&mut u);
    let net = |u: &[f64]| -> Vec<f64> { u_plus.iter().zip(u).map(|(p, x)| p - x).collect() };
    let mut w = net(&u);
    let mut phi = apply(&w)?;
    let mut energy = energy_of(&w, &phi);
    let mut history = vec![energy];
    let mut u_prev = u.clone();
    let mut phi_prev = phi.clone();
    let mut t = 1.0f64;
    let mut tau = cfg.step_tau;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    while iterations < cfg.max_iters {
        iterations += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = if cfg.accelerate { (t - 1.0) / t_next } else { 0.0 };
        for k in 0..n {
            let y = u[k] + beta * (u[k] - u_prev[k]);
            let py = phi[k] + beta * (phi[k] - phi_prev[k]);
            trial[k] = y + 2.0 * tau * py;
        }
        let c = project(&mut trial);
        let w_trial = net(&trial);
        let phi_trial = apply(&w_trial)?;
        let e_trial = energy_of(&w_trial, &phi_trial);
        if e_trial > energy + 1e-13 * energy.abs() {
            if beta > 0.0 {
                t = 1.0;
                u_prev.clone_from(&u);
                phi_prev.clone_from(&phi);
                continue;
            }
            tau *= 0.5;
            if tau < TAU_MIN {
                return Err(ScreenError::StepCollapse { tau_min: TAU_MIN });
            }
            continue;
        }
        t = t_next;
        residual = trial.iter().zip(&u).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut u_prev, &mut u);
        std::mem::swap(&mut u, &mut trial);
        phi_prev = std::mem::replace(&mut phi, phi_trial);
        w = w_trial;
        energy = e_trial;
        multiplier = c;
        history.push(energy);
        if residual <= cfg.tol_residual {
            converged = true;
            break;
        }
    }
    Ok(PgOutcome { u, w, phi, energy, converged, iterations, residual, tau, multiplier, history })
}

fn breakdown(op: &NewtonianOperator, u_plus: &ScalarField, u: &[f64], phi_w: &[f64], w: &[f64]) -> Result<EnergyReport> {
    let h3 = u_plus.grid.cell_volume();
    let phi_plus = op.apply_values(&u_plus.values)?;
    let self_plus = energy_terms(&phi_plus, &u_plus.values, h3);
    let cross = energy_terms(&phi_plus, u, h3);
    // φ_u = φ_{u⁺} − φ_w
    let self_minus: f64 = h3 * phi_plus.iter().zip(phi_w).zip(u).map(|((a, b), x)| (a - b) * x).sum::<f64>();
    let mut rep = EnergyReport::from_terms(self_plus, self_minus, cross, EnergyMethod::KernelDoubleIntegral, Some(u_plus.grid.spacing));
    // keep the directly evaluated total; the breakdown reproduces it to roundoff
    let direct = energy_terms(phi_w, w, h3);
    if (rep.total - direct).abs() > 1e-9 * self_plus.abs().max(1e-300) {
        rep.total = direct;
    }
    Ok(rep)
}

/// Output of [`solve_obstacle`].
#[derive(Clone, Debug)]
pub struct ObstacleSolution {
    pub phi: ScalarField,
    pub converged: bool,
    pub sweeps: usize,
    /// Largest update of the final sweep.
    pub residual: f64,
}

/// Projected SOR for the obstacle formulation on `grid` with `φ = 0` beyond
/// the box faces. A cell covered to the fraction `p < 1` by Ω⁺ has source
/// `p − (1 − p)` and keeps `φ ≥ 0`, matching the relaxed density cap.
pub fn solve_obstacle(omega_plus: &ScalarField, cfg: &SolveConfig) -> Result<ObstacleSolution> {
    solve_obstacle_from(omega_plus, cfg, None, usize::MAX)
}

/// [`solve_obstacle`] from an initial potential, with a sweep limit.
pub fn solve_obstacle_from(
    omega_plus: &ScalarField,
    cfg: &SolveConfig,
    initial: Option<&ScalarField>,
    max_sweeps: usize,
) -> Result<ObstacleSolution> {
    cfg.validate()?;
    let g = &omega_plus.grid;
    let [nx, ny, nz] = g.dims;
    let h2 = g.spacing * g.spacing;
    let omega = cfg.sor_omega;
    let mut phi = match initial {
        Some(f) => {
            g.ensure_same(&f.grid)?;
            f.values.iter().zip(&omega_plus.values).map(|(&v, &p)| if p > 0.0 { v } else { v.max(0.0) }).collect()
        }
        None => vec![0.0; g.len()],
    };
    let src = &omega_plus.values;
    let tol = cfg.tol_residual * h2;
    let limit = if max_sweeps == usize::MAX { 200 * cfg.max_iters.max(50) } else { max_sweeps };
    let (sx, sy) = (1, nx);
    let sz = nx * ny;
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < limit {
        sweeps += 1;
        let mut max_update: f64 = 0.0;
        for k in 0..nz {
            for j in 0..ny {
                let row = nx * (j + ny * k);
                for i in 0..nx {
                    let idx = row + i;
                    let mut nb = 0.0;
                    if i > 0 {
                        nb += phi[idx - sx];
                    }
                    if i + 1 < nx {
                        nb += phi[idx + sx];
                    }
                    if j > 0 {
                        nb += phi[idx - sy];
                    }
                    if j + 1 < ny {
                        nb += phi[idx + sy];
                    }
                    if k > 0 {
                        nb += phi[idx - sz];
                    }
                    if k + 1 < nz {
                        nb += phi[idx + sz];
                    }
                    let old = phi[idx];
                    let p = src[idx];
                    let new = if p >= 1.0 {
                        let gs = (nb + h2 * p) / 6.0;
                        old + omega * (gs - old)
                    } else {
                        // the uncovered fraction of the cell screens where φ > 0
                        let gs = (nb + h2 * (2.0 * p - 1.0)) / 6.0;
                        (old + omega * (gs - old)).max(0.0)
                    };
                    max_update = max_update.max((new - old).abs());
                    phi[idx] = new;
                }
            }
        }
        residual = max_update;
        if max_update <= tol {
            break;
        }
    }
    Ok(ObstacleSolution { phi: ScalarField { grid: g.clone(), values: phi }, converged: residual <= tol, sweeps, residual })
}

/// Obstacle solve on a hierarchy of grids: the coarse potential, copied
/// onto the children cells, seeds the fine sweeps. `levels` counts the
/// coarsenings by a factor of two (the fine dims must be divisible).
pub fn solve_obstacle_nested(
    fine_grid: &GridSpec,
    rasterize_at: impl Fn(&GridSpec) -> Result<ScalarField>,
    cfg: &SolveConfig,
    levels: usize,
) -> Result<ObstacleSolution> {
    let grids = coarsenings(fine_grid, levels)?;
    let mut current: Option<ScalarField> = None;
    let mut total_sweeps = 0;
    let mut last = None;
    for g in grids.iter().rev() {
        let up = rasterize_at(g)?;
        let init = current.as_ref().map(|c| c.prolong(2)).transpose()?;
        let sol = solve_obstacle_from(&up, cfg, init.as_ref(), usize::MAX)?;
        total_sweeps += sol.sweeps;
        current = Some(sol.phi.clone());
        last = Some(sol);
    }
    let mut sol = last.expect("at least one level");
    sol.sweeps = total_sweeps;
    Ok(sol)
}

/// Coarse-to-fine relaxed solve: each level warm-starts from the prolonged
/// density of the level below. Iterations are summed over the levels.
pub fn solve_relaxed_nested(
    fine_grid: &GridSpec,
    rasterize_at: impl Fn(&GridSpec) -> Result<ScalarField>,
    lambda: f64,
    cfg: &SolveConfig,
    levels: usize,
) -> Result<RelaxedSolution> {
    let grids = coarsenings(fine_grid, levels)?;
    let mut current: Option<ScalarField> = None;
    let mut total = 0;
    let mut last = None;
    for g in grids.iter().rev() {
        let up = rasterize_at(g)?;
        let init = current.as_ref().map(|c| c.prolong(2)).transpose()?;
        let sol = solve_relaxed_with(&up, lambda, cfg, RelaxedOptions { warm_start: init.as_ref(), ..Default::default() })?;
        total += sol.iterations;
        current = Some(sol.density.field.clone());
        last = Some(sol);
    }
    let mut sol = last.expect("at least one level");
    sol.iterations = total;
    Ok(sol)
}

fn coarsenings(fine_grid: &GridSpec, levels: usize) -> Result<Vec<GridSpec>> {
    let mut grids = vec![fine_grid.clone()];
    for _ in 0..levels {
        let g = grids.last().unwrap();
        if g.dims.iter().any(|d| d % 2 != 0 || d / 2 < 4) {
            break;
        }
        grids.push(GridSpec::new(g.origin, g.spacing * 2.0, [g.dims[0] / 2, g.dims[1] / 2, g.dims[2] / 2])?);
    }
    Ok(grids)
}

/// `{φ > θ}` minus the cells of Ω⁺.
pub fn extract_negative_phase(phi: &ScalarField, omega_plus_mask: &ScalarField, theta: f64) -> Result<ScalarField> {
    phi.grid.ensure_same(&omega_plus_mask.grid)?;
    if !(theta >= 0.0) {
        return Err(ScreenError::Precondition(format!("threshold must be nonnegative, got {theta}")));
    }
    let values = phi
        .values
        .iter()
        .zip(&omega_plus_mask.values)
        .map(|(&f, &p)| if f > theta && p <= 0.0 { 1.0 } else { 0.0 })
        .collect();
    Ok(ScalarField { grid: phi.grid.clone(), values })
}

/// Default phase threshold `factor · h² · max φ`.
pub fn default_threshold(phi: &ScalarField, cfg: &SolveConfig) -> f64 {
    cfg.phase_threshold_factor * phi.grid.spacing.powi(2) * phi.max().max(0.0)
}

/// Minimal energies `e(λ)` along an ascending list, warm-starting each solve
/// from the previous density.
pub fn energy_curve(omega_plus: &ScalarField, lambdas: &[f64], cfg: &SolveConfig) -> Result<Vec<(f64, RelaxedSolution)>> {
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(ScreenError::Precondition("lambdas must be sorted ascending".into()));
    }
    let op = NewtonianOperator::new(&omega_plus.grid)?;
    let mut out: Vec<(f64, RelaxedSolution)> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let warm = out.last().map(|(_, s)| s.density.field.clone());
        let sol = solve_relaxed_with(
            omega_plus,
            lambda,
            cfg,
            RelaxedOptions { warm_start: warm.as_ref(), operator: Some(&op), upper: None },
        )?;
        out.push((lambda, sol));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rasterize, DomainSpec};
    use proptest::prelude::*;

    fn small_ball(h: f64) -> ScalarField {
        let g = GridSpec::covering([-1.6; 3], [1.6; 3], h).unwrap();
        rasterize(&DomainSpec::ball([0.0; 3], 1.0), &g, 4).unwrap()
    }

    #[test]
    fn projection_respects_cap_and_bounds() {
        let mut v = vec![0.5, 2.0, -1.0, 0.9, 0.3];
        let free = vec![true, true, true, false, true];
        let c = project_admissible(&mut v, &free, 1.0, Some(1.2), 1.0);
        let mass: f64 = v.iter().sum();
        assert!(mass <= 1.2 + 1e-12 && mass > 1.2 - 1e-9, "{mass}");
        assert!(c > 0.0);
        assert_eq!(v[3], 0.0);
        assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let mut w = vec![0.2, 0.1];
        assert_eq!(project_admissible(&mut w, &[true, true], 1.0, Some(5.0), 1.0), 0.0);
        assert_eq!(w, vec![0.2, 0.1]);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_nearest(
            vals in proptest::collection::vec(-2.0f64..3.0, 1..40),
            cap in 0.0f64..5.0,
        ) {
            let free: Vec<bool> = (0..vals.len()).map(|i| i % 5 != 2).collect();
            let mut p = vals.clone();
            project_admissible(&mut p, &free, 1.0, Some(cap), 1.0);
            let mass: f64 = p.iter().sum();
            prop_assert!(mass <= cap + 1e-9);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
            let mut q = p.clone();
            project_admissible(&mut q, &free, 1.0, Some(cap), 1.0);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            // variational inequality: ⟨v − Πv, y − Πv⟩ ≤ 0 for admissible y
            let y: Vec<f64> = free.iter().map(|&f| if f { (cap / vals.len() as f64).min(1.0) } else { 0.0 }).collect();
            let ip: f64 = vals.iter().zip(&p).zip(&y).map(|((v, pv), yv)| (v - pv) * (yv - pv)).sum();
            prop_assert!(ip <= 1e-7);
        }
    }

    #[test]
    fn zero_lambda_leaves_only_positive_charge() {
        let up = small_ball(1.0 / 8.0);
        let cfg = SolveConfig::for_mass(up.integral());
        let sol = solve_relaxed(&up, 0.0, &cfg).unwrap();
        assert!(sol.density.field.values.iter().all(|&v| v == 0.0));
        let e0 = crate::energy::energy_of_pair(&up, &ScalarField::zeros(&up.grid)).unwrap();
        assert!((sol.energy.total - e0.total).abs() < 1e-12 * e0.total);
        assert!(sol.converged);
    }

    #[test]
    fn coarse_ball_is_admissible_and_monotone() {
        let up = small_ball(1.0 / 8.0);
        let m = up.integral();
        let mut cfg = SolveConfig::for_mass(m);
        cfg.max_iters = 150;
        let sol = solve_relaxed(&up, m, &cfg).unwrap();
        sol.density.check_admissible().unwrap();
        for w in sol.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-13));
        }
        assert!((sol.density.mass - m).abs() < 0.02 * m, "{} vs {m}", sol.density.mass);
        assert!(sol.phi.min() >= -10.0 * (1.0 / 64.0) * sol.phi.max());
    }

    #[test]
    fn obstacle_on_empty_domain_is_zero() {
        let g = GridSpec::new([0.0; 3], 0.1, [8, 8, 8]).unwrap();
        let sol = solve_obstacle(&ScalarField::zeros(&g), &SolveConfig::default()).unwrap();
        assert!(sol.phi.values.iter().all(|&v| v == 0.0));
        assert!(sol.converged);
    }

    #[test]
    fn phase_extraction_edge_cases() {
        let up = small_ball(0.25);
        let zero = ScalarField::zeros(&up.grid);
        let mask = extract_negative_phase(&zero, &up, 0.0).unwrap();
        assert_eq!(mask.integral(), 0.0);
        let pos = ScalarField::constant(&up.grid, 1.0);
        let none = extract_negative_phase(&pos, &up, f64::INFINITY).unwrap();
        assert_eq!(none.integral(), 0.0);
        let all = extract_negative_phase(&pos, &up, 0.0).unwrap();
        assert!(all.values.iter().zip(&up.values).all(|(&m, &p)| (m == 1.0) == (p <= 0.0)));
        assert!(extract_negative_phase(&pos, &up, -1.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = SolveConfig::default();
        c.sor_omega = 2.0;
        assert!(c.validate().is_err());
        let mut c = SolveConfig::default();
        c.tol_residual = 0.0;
        assert!(c.validate().is_err());
        assert!(SolveConfig::default().validate().is_ok());
    }

    #[test]
    fn energy_curve_rejects_unsorted() {
        let up = small_ball(0.25);
        assert!(energy_curve(&up, &[1.0, 0.5], &SolveConfig::default()).is_err());
    }
}
