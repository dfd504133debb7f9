//! Coulomb energy of a configuration: kernel double integral, Dirichlet
//! integral of the potential, closed forms for concentric shells, and the
//! surface-measure functional of the limit model.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScreenError};
use crate::geometry::{DomainSpec, Point, ScalarField};
use crate::newtonian::{annulus_potential, ball_potential, NewtonianOperator};
use crate::surface::SurfaceMeasure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMethod {
    KernelDoubleIntegral,
    DirichletGradient,
    ClosedForm,
}

/// Energy `I(u⁺) + I(u) − 2 I(u⁺, u)` with its three terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    pub self_plus: f64,
    pub self_minus: f64,
    pub cross: f64,
    pub method: EnergyMethod,
    pub grid_h: Option<f64>,
}

impl EnergyReport {
    pub fn from_terms(self_plus: f64, self_minus: f64, cross: f64, method: EnergyMethod, grid_h: Option<f64>) -> Self {
        EnergyReport { total: self_plus + self_minus - 2.0 * cross, self_plus, self_minus, cross, method, grid_h }
    }
}

fn dot_h3(a: &[f64], b: &[f64], h3: f64) -> f64 {
    h3 * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Energy of the pair `(u⁺, u)` from the potentials of both densities.
pub fn energy_of_pair(u_plus: &ScalarField, u: &ScalarField) -> Result<EnergyReport> {
    let op = NewtonianOperator::new(&u_plus.grid)?;
    energy_of_pair_with(&op, u_plus, u)
}

/// [`energy_of_pair`] with a prebuilt operator.
pub fn energy_of_pair_with(op: &NewtonianOperator, u_plus: &ScalarField, u: &ScalarField) -> Result<EnergyReport> {
    u_plus.grid.ensure_same(&u.grid)?;
    op.grid().ensure_same(&u.grid)?;
    if u_plus.values.iter().chain(&u.values).any(|&v| v < 0.0) {
        return Err(ScreenError::Precondition("densities must be nonnegative".into()));
    }
    let h3 = u.grid.cell_volume();
    let phi_plus = op.apply_values(&u_plus.values)?;
    let phi_minus = op.apply_values(&u.values)?;
    let self_plus = dot_h3(&phi_plus, &u_plus.values, h3);
    let self_minus = dot_h3(&phi_minus, &u.values, h3);
    // the kernel is symmetric, so both cross terms agree up to roundoff
    let cross = 0.5 * (dot_h3(&phi_plus, &u.values, h3) + dot_h3(&phi_minus, &u_plus.values, h3));
    Ok(EnergyReport::from_terms(self_plus, self_minus, cross, EnergyMethod::KernelDoubleIntegral, Some(u.grid.spacing)))
}

/// `h³ Σ |∇φ|²` with centered differences (one-sided on the box faces).
pub fn dirichlet_energy(phi: &ScalarField) -> f64 {
    let g = &phi.grid;
    let [nx, ny, nz] = g.dims;
    let h = g.spacing;
    let strides = [1, nx, nx * ny];
    let dims = [nx, ny, nz];
    let sum: f64 = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let c = g.coords(idx);
            let mut s = 0.0;
            for a in 0..3 {
                let st = strides[a];
                let d = if c[a] == 0 {
                    (phi.values[idx + st] - phi.values[idx]) / h
                } else if c[a] + 1 == dims[a] {
                    (phi.values[idx] - phi.values[idx - st]) / h
                } else {
                    (phi.values[idx + st] - phi.values[idx - st]) / (2.0 * h)
                };
                s += d * d;
            }
            s
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    sum * g.cell_volume()
}

/// `∬_{C×C} 1/(4π|x−y|)` for the annulus `C_{r1,r2}`.
pub fn annulus_self_energy(r1: f64, r2: f64) -> Result<f64> {
    if !(r1 >= 0.0 && r2 >= r1) {
        return Err(ScreenError::Precondition(format!("need 0 <= r1 <= r2, got ({r1}, {r2})")));
    }
    Ok(4.0 * PI / 15.0 * (3.0 * r1.powi(5) + 2.0 * r2.powi(5) - 5.0 * r1.powi(3) * r2 * r2))
}

/// Interaction `∬_{C_{r1,r2}×C_{R1,R2}} 1/(4π|x−y|)` of an inner annulus
/// `C_{R1,R2}` with an enclosing one `C_{r1,r2}`.
pub fn annuli_interaction_energy(big_r1: f64, big_r2: f64, r1: f64, r2: f64) -> Result<f64> {
    if !(big_r1 >= 0.0 && big_r2 >= big_r1 && r1 >= big_r2 && r2 >= r1) {
        return Err(ScreenError::Precondition(format!(
            "need r2 >= r1 >= R2 >= R1 >= 0, got R=({big_r1}, {big_r2}) r=({r1}, {r2})"
        )));
    }
    Ok(2.0 * PI / 3.0 * (big_r2.powi(3) - big_r1.powi(3)) * (r2 * r2 - r1 * r1))
}

/// Potential of the unit density on an analytic domain, superposed over its
/// ball and annulus components.
pub fn domain_potential(omega_plus: &DomainSpec, x: Point) -> Result<f64> {
    if !omega_plus.is_analytic() {
        return Err(ScreenError::Unsupported("analytic potential needs Ball/Annulus components".into()));
    }
    if omega_plus.exact_volume().is_none() {
        return Err(ScreenError::Precondition("components of the union overlap".into()));
    }
    let mut acc = 0.0;
    for c in omega_plus.components() {
        acc += match c {
            DomainSpec::Ball { center, radius } => ball_potential(*radius, distance(x, *center)),
            DomainSpec::Annulus { center, r_inner, r_outer } => {
                annulus_potential(*r_inner, *r_outer, distance(x, *center))
            }
            _ => unreachable!(),
        };
    }
    Ok(acc)
}

#[inline]
pub(crate) fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `φ_μ(x_i) = Σ_{j≠i} μ_j / (4π|x_i − x_j|)` at every node.
pub fn node_potentials(nodes: &[Point], masses: &[f64]) -> Vec<f64> {
    nodes
        .par_iter()
        .enumerate()
        .map(|(i, xi)| {
            let mut acc = 0.0;
            for (j, (xj, mj)) in nodes.iter().zip(masses).enumerate() {
                if i != j {
                    acc += mj / distance(*xi, *xj);
                }
            }
            acc / (4.0 * PI)
        })
        .collect()
}

/// `I(μ)` with the diagonal excluded.
pub fn measure_self_energy(nodes: &[Point], masses: &[f64]) -> f64 {
    node_potentials(nodes, masses).iter().zip(masses).map(|(p, m)| p * m).sum()
}

/// Self-energy of a unit charge spread uniformly over a flat disk of area
/// `w`: `4/(3π²a)` with `a = √(w/π)`. Zero for `w = 0` (a point charge).
pub fn patch_self_coefficient(w: f64) -> f64 {
    if w > 0.0 {
        4.0 / (3.0 * PI * PI * (w / PI).sqrt())
    } else {
        0.0
    }
}

/// `I(μ)` with every node spread over a disk of its area weight: the
/// off-diagonal point sum plus `Σ μ_i² · patch_self_coefficient(w_i)`.
pub fn measure_self_energy_patched(nodes: &[Point], weights: &[f64], masses: &[f64]) -> f64 {
    let diag: f64 = weights.iter().zip(masses).map(|(w, m)| patch_self_coefficient(*w) * m * m).sum();
    measure_self_energy(nodes, masses) + diag
}

/// `F(μ) = −2 I(μ⁺, μ) + I(μ)` for a discrete boundary measure, with the
/// patched self-energy.
pub fn measure_energy(mu: &SurfaceMeasure, omega_plus: &DomainSpec) -> Result<f64> {
    let plus = mu
        .nodes
        .iter()
        .map(|&x| {
            if omega_plus.signed_distance(x).is_some_and(|d| d < -1e-9) {
                return Err(ScreenError::Precondition(format!("node {x:?} lies inside the positive domain")));
            }
            domain_potential(omega_plus, x)
        })
        .collect::<Result<Vec<f64>>>()?;
    let cross: f64 = plus.iter().zip(&mu.masses).map(|(p, m)| p * m).sum();
    Ok(-2.0 * cross + measure_self_energy_patched(&mu.nodes, &mu.weights, &mu.masses))
}
