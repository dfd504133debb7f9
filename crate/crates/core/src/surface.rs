//! Limit model with all negative charge on the boundary of Ω⁺.
//!
//! The boundary is sampled by Fibonacci lattices with equal area weights and
//! the measure is a vector of point masses on those nodes. Each node carries
//! the self-energy of its patch, spread over a disk of the same area.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{domain_potential, measure_energy, patch_self_coefficient};
use crate::error::{Result, ScreenError};
use crate::geometry::{fibonacci_sphere, DomainSpec, Point};
use crate::relaxed::SolveConfig;
use crate::spherical::{radial_relaxed_solve_capped, total_energy_closed_form, RadialConfig};

/// Above this many nodes the pair matrix is not stored.
const DENSE_LIMIT: usize = 5000;

/// Discrete nonnegative measure on the boundary of Ω⁺.
#[derive(Clone, Debug, Serialize)]
pub struct SurfaceMeasure {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub masses: Vec<f64>,
    pub total_mass: f64,
}

impl SurfaceMeasure {
    pub fn new(nodes: Vec<Point>, weights: Vec<f64>, masses: Vec<f64>) -> Self {
        assert_eq!(nodes.len(), masses.len(), "one mass per node");
        assert_eq!(nodes.len(), weights.len(), "one weight per node");
        let total_mass = masses.iter().sum();
        SurfaceMeasure { nodes, weights, masses, total_mass }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `φ_μ(x) = Σ μ_j / (4π|x − x_j|)`; nodes coinciding with `x` are skipped.
    pub fn potential_at(&self, x: Point) -> f64 {
        self.nodes
            .iter()
            .zip(&self.masses)
            .map(|(y, m)| {
                let d = dist(x, *y);
                if d > 0.0 {
                    m / (4.0 * PI * d)
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Relative standard deviation of the masses divided by their weights.
    pub fn density_dispersion(&self) -> f64 {
        let dens: Vec<f64> = self.masses.iter().zip(&self.weights).map(|(m, w)| m / w).collect();
        let n = dens.len() as f64;
        let mean = dens.iter().sum::<f64>() / n;
        let var = dens.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        var.sqrt() / mean
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Nodes and area weights: `n` Fibonacci points on every boundary sphere,
/// each carrying `4πR²/n`.
pub fn discretize_boundary(omega_plus: &DomainSpec, n: usize) -> Result<(Vec<Point>, Vec<f64>)> {
    omega_plus.validate()?;
    if n == 0 {
        return Err(ScreenError::Precondition("need at least one node per sphere".into()));
    }
    let unit = fibonacci_sphere(n);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut sphere = |c: Point, r: f64| {
        for d in &unit {
            nodes.push([c[0] + r * d[0], c[1] + r * d[1], c[2] + r * d[2]]);
            weights.push(4.0 * PI * r * r / n as f64);
        }
    };
    for part in omega_plus.components() {
        match part {
            DomainSpec::Ball { center, radius } => sphere(*center, *radius),
            DomainSpec::Annulus { center, r_inner, r_outer } => {
                sphere(*center, *r_outer);
                if *r_inner > 0.0 {
                    sphere(*center, *r_inner);
                }
            }
            DomainSpec::VoxelMask { .. } => {
                return Err(ScreenError::Unsupported("voxel domains have no analytic boundary to sample".into()))
            }
            DomainSpec::UnionOf { .. } => unreachable!("components are flattened"),
        }
    }
    Ok((nodes, weights))
}

/// Euclidean projection onto `{μ ≥ 0, Σμ = m}` by sorting.
pub fn project_simplex(v: &mut [f64], m: f64) {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - m) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

enum PairOperator {
    Dense { n: usize, a: Vec<f64> },
    Matrixless { nodes: Vec<Point>, diag: Vec<f64> },
}

impl PairOperator {
    fn new(nodes: &[Point], weights: &[f64]) -> Self {
        let n = nodes.len();
        let diag: Vec<f64> = weights.iter().map(|&w| patch_self_coefficient(w)).collect();
        if n <= DENSE_LIMIT {
            let a: Vec<f64> = (0..n * n)
                .into_par_iter()
                .map(|ij| {
                    let (i, j) = (ij / n, ij % n);
                    if i == j {
                        diag[i]
                    } else {
                        1.0 / (4.0 * PI * dist(nodes[i], nodes[j]))
                    }
                })
                .collect();
            PairOperator::Dense { n, a }
        } else {
            PairOperator::Matrixless { nodes: nodes.to_vec(), diag }
        }
    }

    fn len(&self) -> usize {
        match self {
            PairOperator::Dense { n, .. } => *n,
            PairOperator::Matrixless { nodes, .. } => nodes.len(),
        }
    }

    fn apply(&self, mu: &[f64]) -> Vec<f64> {
        match self {
            PairOperator::Dense { n, a } => {
                a.par_chunks(*n).map(|row| row.iter().zip(mu).map(|(x, y)| x * y).sum()).collect()
            }
            PairOperator::Matrixless { nodes, diag } => nodes
                .par_iter()
                .enumerate()
                .map(|(i, &x)| {
                    let off: f64 = nodes
                        .iter()
                        .zip(mu)
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, (&y, &m))| m / (4.0 * PI * dist(x, y)))
                        .sum();
                    off + diag[i] * mu[i]
                })
                .collect(),
        }
    }

    fn max_row_sum(&self) -> f64 {
        self.apply(&vec![1.0; self.len()]).into_iter().fold(0.0, f64::max)
    }
}

/// Result of [`solve_surface_measure`].
#[derive(Clone, Debug, Serialize)]
pub struct SurfaceSolution {
    pub measure: SurfaceMeasure,
    /// `F(μ)` at the returned measure.
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Projected-gradient norm at exit.
    pub residual: f64,
    /// `φ_{μ⁺} − φ_μ` at the nodes.
    pub node_potential: Vec<f64>,
}

/// Minimizes `F(μ) = −2I(μ⁺, μ) + I(μ)` over nonnegative node masses of
/// total mass `|Ω⁺|`, `n` nodes per boundary sphere.
pub fn solve_surface_measure(omega_plus: &DomainSpec, n: usize, cfg: &SolveConfig) -> Result<SurfaceSolution> {
    cfg.validate()?;
    if n < 10 {
        return Err(ScreenError::Precondition(format!("need at least 10 nodes per sphere, got {n}")));
    }
    if !omega_plus.is_analytic() {
        return Err(ScreenError::Unsupported("surface model needs an analytic domain".into()));
    }
    let m = omega_plus
        .exact_volume()
        .ok_or_else(|| ScreenError::Precondition("surface model needs non-overlapping components".into()))?;
    let (nodes, weights) = discretize_boundary(omega_plus, n)?;
    let plus: Vec<f64> = nodes.iter().map(|&x| domain_potential(omega_plus, x)).collect::<Result<_>>()?;
    let op = PairOperator::new(&nodes, &weights);
    let step = 1.0 / (2.0 * op.max_row_sum().max(1e-300));
    let objective = |mu: &[f64], amu: &[f64]| -> f64 {
        mu.iter().zip(amu).zip(&plus).map(|((x, a), p)| -2.0 * p * x + x * a).sum()
    };

    // monotone accelerated projected gradient: extrapolated points y, accepted
    // iterates mu never increase F
    let wsum: f64 = weights.iter().sum();
    let mut mu: Vec<f64> = weights.iter().map(|w| m * w / wsum).collect();
    let mut amu = op.apply(&mu);
    let mut f = objective(&mu, &amu);
    let mut prev = mu.clone();
    let mut t = 1.0f64;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut z = vec![0.0; mu.len()];
    while iterations < cfg.max_iters {
        iterations += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let y: Vec<f64> = mu.iter().zip(&prev).map(|(a, b)| a + beta * (a - b)).collect();
        let ay = if beta == 0.0 { amu.clone() } else { op.apply(&y) };
        for i in 0..y.len() {
            z[i] = y[i] - step * (-2.0 * plus[i] + 2.0 * ay[i]);
        }
        project_simplex(&mut z, m);
        residual = z.iter().zip(&y).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs())) / step;
        let az = op.apply(&z);
        let fz = objective(&z, &az);
        // a plain gradient step (beta = 0) descends in exact arithmetic, so
        // only roundoff can make it look uphill
        if fz <= f || beta == 0.0 {
            prev = std::mem::replace(&mut mu, z.clone());
            amu = az;
            f = fz;
            t = t_next;
        } else {
            // restart the momentum from the last accepted iterate
            prev.clone_from(&mu);
            t = 1.0;
        }
        if residual <= cfg.tol_residual {
            converged = true;
            break;
        }
    }
    let node_potential = plus.iter().zip(&amu).map(|(p, a)| p - a).collect();
    let measure = SurfaceMeasure::new(nodes, weights, mu);
    let energy = measure_energy(&measure, omega_plus)?;
    Ok(SurfaceSolution { measure, energy, converged, iterations, residual, node_potential })
}

/// `max |φ_μ − φ_{μ⁺}|` over `points`, relative to `max |φ_{μ⁺}|` there.
pub fn verify_external_match(mu: &SurfaceMeasure, omega_plus: &DomainSpec, points: &[Point]) -> Result<f64> {
    if points.is_empty() {
        return Err(ScreenError::Precondition("no test points".into()));
    }
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for &x in points {
        if omega_plus.signed_distance(x).is_some_and(|d| d <= 0.0) {
            return Err(ScreenError::Precondition(format!("test point {x:?} is not exterior")));
        }
        let p = domain_potential(omega_plus, x)?;
        worst = worst.max((mu.potential_at(x) - p).abs());
        scale = scale.max(p.abs());
    }
    Ok(worst / scale.max(1e-300))
}

/// Minimum of the surface functional over all boundary measures of a ball:
/// `−m²/(4πR)`.
pub fn ball_surface_minimum(radius: f64) -> f64 {
    let m = 4.0 * PI / 3.0 * radius.powi(3);
    -m * m / (4.0 * PI * radius)
}

/// One entry of [`gamma_energy_sequence`].
#[derive(Clone, Debug, Serialize)]
pub struct GammaPoint {
    pub eps: f64,
    /// `min F_ε = e_ε(m) − I(Ω⁺)`.
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Radial minima of `F_ε` (density cap `1/ε`, mass cap `m`) for a ball.
pub fn gamma_energy_sequence(omega_plus: &DomainSpec, eps_list: &[f64], nr: usize, cfg: &SolveConfig) -> Result<Vec<GammaPoint>> {
    let radius = match omega_plus {
        DomainSpec::Ball { radius, .. } => *radius,
        _ => return Err(ScreenError::Unsupported("the epsilon sequence is radial: Ω⁺ must be a ball".into())),
    };
    omega_plus.validate()?;
    if eps_list.is_empty() {
        return Err(ScreenError::Precondition("empty epsilon list".into()));
    }
    if eps_list.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(ScreenError::Precondition("epsilons must be positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ScreenError::Precondition("epsilons must be strictly decreasing".into()));
    }
    if nr < 4 {
        return Err(ScreenError::Precondition(format!("need at least 4 radial shells, got {nr}")));
    }
    let shells = RadialConfig::ball(radius);
    let m = shells.positive_volume();
    let self_plus = total_energy_closed_form(&shells)?;
    // radial grid with the ball surface on a shell edge
    let rmin = radius + 2.0 * m.cbrt();
    let k = ((radius * nr as f64 / rmin).floor() as usize).max(1);
    let rmax = radius / k as f64 * nr as f64;
    eps_list
        .iter()
        .map(|&eps| {
            let sol = radial_relaxed_solve_capped(&shells, m, nr, rmax, cfg, 1.0 / eps)?;
            Ok(GammaPoint { eps, energy: sol.energy - self_plus, converged: sol.converged, iterations: sol.iterations })
        })
        .collect()
}
