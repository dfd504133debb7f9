//! Checks of the structural properties of a solved configuration: neutrality,
//! screening, support bounds, flux identities and a min-diameter indicator of
//! singular free-boundary points.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScreenError};
use crate::geometry::{connected_components, distance_to_mask, rasterize, DomainSpec, Point, ScalarField};
use crate::newtonian::{sphere_average, SphereForm};
use crate::relaxed::ChargeDensity;

/// Ratio below which [`min_diam_indicator`] calls a point singular-like.
pub const SINGULAR_RATIO: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxCheck {
    pub center: Point,
    pub radius: f64,
    pub expected: f64,
    pub integral: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinDiamEntry {
    pub point: Point,
    pub radius: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportBounds {
    /// Largest center distance from an Ω⁻ cell to Ω⁺.
    pub max_distance: f64,
    /// `2|Ω⁺|^{1/3}`.
    pub distance_bound: f64,
    pub diam_ratio: f64,
    /// `1 + 2√3`.
    pub diam_bound: f64,
    pub touching: usize,
    pub components: usize,
    /// Smallest center distance from an Ω₀ cell to ∂Ω⁺.
    pub gap_omega0: f64,
}

impl SupportBounds {
    pub fn dist_bound_margin(&self) -> f64 {
        self.distance_bound - self.max_distance
    }

    pub fn satisfied(&self) -> bool {
        self.max_distance <= self.distance_bound && self.diam_ratio <= self.diam_bound && self.touching == self.components
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub neutrality_error: f64,
    pub screening_residual: f64,
    pub min_phi: f64,
    pub dist_bound_margin: f64,
    pub diam_ratio: f64,
    pub components_touching: (usize, usize),
    pub gap_omega0: f64,
    pub flux_errors: Vec<FluxCheck>,
    pub min_diam_ratios: Vec<MinDiamEntry>,
}

impl DiagnosticsReport {
    pub fn is_finite(&self) -> bool {
        [self.neutrality_error, self.screening_residual, self.min_phi, self.dist_bound_margin, self.diam_ratio, self.gap_omega0]
            .iter()
            .all(|v| v.is_finite())
            && self.flux_errors.iter().all(|f| f.error.is_finite() && f.integral.is_finite())
            && self.min_diam_ratios.iter().all(|e| e.ratio.is_finite())
    }
}

/// `|mass(u) − m| / m`.
pub fn verify_neutrality(u: &ChargeDensity, m: f64) -> f64 {
    (u.mass - m).abs() / m
}

/// Largest `|φ|` over cells farther than `exclusion_shells·h` from both
/// masks, relative to `max φ`.
pub fn verify_screening(
    phi: &ScalarField,
    omega_plus_mask: &ScalarField,
    omega_minus_mask: &ScalarField,
    exclusion_shells: usize,
) -> Result<f64> {
    phi.grid.ensure_same(&omega_plus_mask.grid)?;
    phi.grid.ensure_same(&omega_minus_mask.grid)?;
    let union = ScalarField {
        grid: phi.grid.clone(),
        values: omega_plus_mask
            .values
            .iter()
            .zip(&omega_minus_mask.values)
            .map(|(&p, &q)| if p > 0.0 || q > 0.5 { 1.0 } else { 0.0 })
            .collect(),
    };
    let dist = distance_to_mask(&union);
    let cut = exclusion_shells as f64 * phi.grid.spacing;
    let far = phi.values.iter().zip(&dist.values).filter(|(_, &d)| d > cut).fold(0.0f64, |a, (p, _)| a.max(p.abs()));
    let scale = phi.max();
    Ok(if scale > 0.0 { far / scale } else { far })
}

/// Center distance from every cell to Ω⁺: exact for analytic domains,
/// otherwise the distance to the cells of the rasterized mask.
fn distance_to_plus(omega_plus: &DomainSpec, grid: &crate::geometry::GridSpec) -> Result<Vec<f64>> {
    if omega_plus.is_analytic() {
        Ok((0..grid.len()).map(|i| omega_plus.signed_distance(grid.center_of(i)).unwrap_or(0.0).max(0.0)).collect())
    } else {
        Ok(distance_to_mask(&rasterize(omega_plus, grid, 1)?).values)
    }
}

/// Distance from every cell to ∂Ω⁺ (nonnegative on both sides).
fn distance_to_boundary(omega_plus: &DomainSpec, grid: &crate::geometry::GridSpec) -> Result<Vec<f64>> {
    if omega_plus.is_analytic() {
        return Ok((0..grid.len()).map(|i| omega_plus.signed_distance(grid.center_of(i)).unwrap_or(0.0).abs()).collect());
    }
    let inside = rasterize(omega_plus, grid, 1)?;
    let outside = inside.map(|v| if v > 0.5 { 0.0 } else { 1.0 });
    let to_in = distance_to_mask(&inside).values;
    let to_out = distance_to_mask(&outside).values;
    Ok(to_in.iter().zip(&to_out).map(|(a, b)| a.max(*b)).collect())
}

/// Sampled diameter of a point set: the largest width over a Fibonacci set
/// of directions (underestimates by less than 0.1%).
fn sampled_diameter(points: &[Point]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    crate::geometry::fibonacci_sphere(1024)
        .iter()
        .map(|d| width_along(points, *d))
        .fold(0.0, f64::max)
}

fn width_along(points: &[Point], d: Point) -> f64 {
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let s = p[0] * d[0] + p[1] * d[1] + p[2] * d[2];
        (lo.min(s), hi.max(s))
    });
    hi - lo
}

fn on_mask_boundary(mask: &ScalarField, idx: usize) -> bool {
    let g = &mask.grid;
    let [i, j, k] = g.coords(idx);
    let c = [i, j, k];
    (0..3).any(|a| {
        [-1i64, 1].iter().any(|&s| {
            let mut n = c;
            let t = c[a] as i64 + s;
            if t < 0 || t >= g.dims[a] as i64 {
                return true;
            }
            n[a] = t as usize;
            mask.values[g.index(n[0], n[1], n[2])] <= 0.5
        })
    })
}

/// Support bounds of a binary Ω⁻ mask against Ω⁺. An empty mask gives
/// zero distance, zero diameter ratio and no components.
pub fn verify_support_bounds(omega_minus_mask: &ScalarField, omega_plus: &DomainSpec) -> Result<SupportBounds> {
    let grid = &omega_minus_mask.grid;
    let h = grid.spacing;
    let m = omega_plus.volume();
    if !(m > 0.0) {
        return Err(ScreenError::EmptyDomain);
    }
    let to_plus = distance_to_plus(omega_plus, grid)?;
    let to_boundary = distance_to_boundary(omega_plus, grid)?;
    let plus_raster = if omega_plus.is_analytic() { rasterize(omega_plus, grid, 2)? } else { rasterize(omega_plus, grid, 1)? };

    let minus: Vec<usize> = (0..grid.len()).filter(|&i| omega_minus_mask.values[i] > 0.5).collect();
    let max_distance = minus.iter().map(|&i| to_plus[i]).fold(0.0, f64::max);
    let pts: Vec<Point> = minus.iter().filter(|&&i| on_mask_boundary(omega_minus_mask, i)).map(|&i| grid.center_of(i)).collect();
    let diam_plus = omega_plus.diameter();
    let diam_ratio = if diam_plus > 0.0 { sampled_diameter(&pts) / diam_plus } else { 0.0 };

    let (labels, count) = connected_components(omega_minus_mask);
    let mut near = vec![false; count];
    for &i in &minus {
        if to_plus[i] <= 2.0 * h {
            near[labels[i] as usize - 1] = true;
        }
    }
    let touching = near.iter().filter(|&&b| b).count();

    let gap_omega0 = (0..grid.len())
        .filter(|&i| plus_raster.values[i] <= 0.0 && omega_minus_mask.values[i] <= 0.5)
        .map(|i| to_boundary[i])
        .fold(f64::INFINITY, f64::min);
    let gap_omega0 = if gap_omega0.is_finite() { gap_omega0 } else { 0.0 };

    Ok(SupportBounds {
        max_distance,
        distance_bound: 2.0 * m.cbrt(),
        diam_ratio,
        diam_bound: 1.0 + 2.0 * 3f64.sqrt(),
        touching,
        components: count,
        gap_omega0,
    })
}

/// `|∫_{∂B_R} φ − expected| / (|expected| + m·R)`.
pub fn verify_flux(phi: &ScalarField, center: Point, radius: f64, expected: f64, m: f64) -> Result<f64> {
    let integral = sphere_average(phi, center, radius, SphereForm::Integral)?;
    Ok((integral - expected).abs() / (expected.abs() + m * radius))
}

/// Exact sphere integral of the potential of the cell charges `w` (as point
/// charges at the cell centers): `Σ h³ w_j R² / max(R, |y_j − c|)`.
/// Equals `Q·R` once the sphere encloses the support.
pub fn flux_expectation(w: &ScalarField, center: Point, radius: f64) -> f64 {
    let g = &w.grid;
    let h3 = g.cell_volume();
    w.values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| {
            let c = g.center_of(i);
            let r = ((c[0] - center[0]).powi(2) + (c[1] - center[1]).powi(2) + (c[2] - center[2]).powi(2)).sqrt();
            h3 * v * radius * radius / r.max(radius)
        })
        .sum()
}

/// Coordinate axes, the six icosahedral vertex axes, the four cube
/// diagonals and three face diagonals.
pub fn indicator_directions() -> [Point; 16] {
    let g = 0.5 * (1.0 + 5f64.sqrt());
    let raw: [Point; 16] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, g],
        [0.0, -1.0, g],
        [1.0, g, 0.0],
        [-1.0, g, 0.0],
        [g, 0.0, 1.0],
        [g, 0.0, -1.0],
        [1.0, 1.0, 1.0],
        [1.0, 1.0, -1.0],
        [1.0, -1.0, 1.0],
        [-1.0, 1.0, 1.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
    ];
    raw.map(|d| {
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        [d[0] / n, d[1] / n, d[2] / n]
    })
}

/// For each radius, the smallest width over [`indicator_directions`] of the
/// union of cells with `φ ≤ θ` whose centers lie in `B_r(x₀)`, divided by
/// the ball diameter `2r`. A full ball gives about 1, a half ball about 1/2;
/// an empty set gives 0.
pub fn min_diam_indicator(phi: &ScalarField, x0: Point, radii: &[f64], theta: f64) -> Result<Vec<f64>> {
    let g = &phi.grid;
    let h = g.spacing;
    let (lo, hi) = (g.box_min(), g.box_max());
    let dirs = indicator_directions();
    radii
        .iter()
        .map(|&r| {
            if !(r > 0.0) {
                return Err(ScreenError::Precondition(format!("radius must be positive, got {r}")));
            }
            if (0..3).any(|a| x0[a] - r < lo[a] || x0[a] + r > hi[a]) {
                return Err(ScreenError::OutsideBox(format!("ball of radius {r} around {x0:?} exits the grid")));
            }
            let lo_idx = |a: usize| (((x0[a] - r - lo[a]) / h).floor().max(0.0)) as usize;
            let hi_idx = |a: usize| (((x0[a] + r - lo[a]) / h).ceil() as usize).min(g.dims[a]);
            let mut pts = Vec::new();
            for k in lo_idx(2)..hi_idx(2) {
                for j in lo_idx(1)..hi_idx(1) {
                    for i in lo_idx(0)..hi_idx(0) {
                        let c = g.center(i, j, k);
                        let d2 = (c[0] - x0[0]).powi(2) + (c[1] - x0[1]).powi(2) + (c[2] - x0[2]).powi(2);
                        if d2 <= r * r && phi.values[g.index(i, j, k)] <= theta {
                            pts.push(c);
                        }
                    }
                }
            }
            if pts.is_empty() {
                return Ok(0.0);
            }
            let width = dirs
                .iter()
                .map(|d| width_along(&pts, *d) + h * (d[0].abs() + d[1].abs() + d[2].abs()))
                .fold(f64::INFINITY, f64::min);
            Ok(width / (2.0 * r))
        })
        .collect()
}

/// Whether the ratio at the smallest radius is below [`SINGULAR_RATIO`].
pub fn singular_like(radii: &[f64], ratios: &[f64]) -> bool {
    radii
        .iter()
        .zip(ratios)
        .min_by(|a, b| a.0.total_cmp(b.0))
        .map(|(_, &q)| q < SINGULAR_RATIO)
        .unwrap_or(false)
}

/// Inputs of [`diagnose`] beyond the solved fields.
#[derive(Clone, Debug, Default)]
pub struct DiagnoseOptions {
    pub exclusion_shells: usize,
    pub flux_spheres: Vec<(Point, f64)>,
    pub min_diam_points: Vec<Point>,
    pub min_diam_radii: Vec<f64>,
}

/// All checks on one solved configuration. `omega_minus_mask` is the
/// extracted phase; `theta` the threshold used for it.
pub fn diagnose(
    omega_plus: &DomainSpec,
    u_plus: &ScalarField,
    density: &ChargeDensity,
    phi: &ScalarField,
    omega_minus_mask: &ScalarField,
    theta: f64,
    opts: &DiagnoseOptions,
) -> Result<DiagnosticsReport> {
    let m = omega_plus.volume();
    let screening_residual = verify_screening(phi, u_plus, omega_minus_mask, opts.exclusion_shells)?;
    let bounds = verify_support_bounds(omega_minus_mask, omega_plus)?;
    let w = u_plus.combine(1.0, &density.field, -1.0)?;
    let mut flux_errors = Vec::with_capacity(opts.flux_spheres.len());
    for &(center, radius) in &opts.flux_spheres {
        let expected = flux_expectation(&w, center, radius);
        let integral = sphere_average(phi, center, radius, SphereForm::Integral)?;
        let error = (integral - expected).abs() / (expected.abs() + m * radius);
        flux_errors.push(FluxCheck { center, radius, expected, integral, error });
    }
    let mut min_diam_ratios = Vec::new();
    for &p in &opts.min_diam_points {
        let ratios = min_diam_indicator(phi, p, &opts.min_diam_radii, theta)?;
        for (&radius, ratio) in opts.min_diam_radii.iter().zip(ratios) {
            min_diam_ratios.push(MinDiamEntry { point: p, radius, ratio });
        }
    }
    Ok(DiagnosticsReport {
        neutrality_error: verify_neutrality(density, m),
        screening_residual,
        min_phi: phi.min(),
        dist_bound_margin: bounds.dist_bound_margin(),
        diam_ratio: bounds.diam_ratio,
        components_touching: (bounds.touching, bounds.components),
        gap_omega0: bounds.gap_omega0,
        flux_errors,
        min_diam_ratios,
    })
}
