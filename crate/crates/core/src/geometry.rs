//! Uniform grids, sampled fields and the charged domains living on them.
//!
//! Every field in the crate is sampled at cell centers `origin + (i + 1/2) h`
//! with `x` the fastest index.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScreenError};

pub type Point = [f64; 3];

/// Uniform 3D grid of cubic cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Point,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Point, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(ScreenError::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        if dims.iter().any(|&d| d < 4) {
            return Err(ScreenError::InvalidGrid(format!("every dimension must be at least 4, got {dims:?}")));
        }
        if origin.iter().any(|c| !c.is_finite()) {
            return Err(ScreenError::InvalidGrid("origin must be finite".into()));
        }
        Ok(GridSpec { origin, spacing, dims })
    }

    /// Grid with spacing `h` covering the axis-aligned box `[lo, hi]`,
    /// centered on it and rounded up to whole cells.
    pub fn covering(lo: Point, hi: Point, h: f64) -> Result<Self> {
        let mut origin = [0.0; 3];
        let mut dims = [0usize; 3];
        for k in 0..3 {
            let len = hi[k] - lo[k];
            let n = ((len / h) - 1e-9).ceil().max(4.0) as usize;
            dims[k] = n;
            let mid = 0.5 * (lo[k] + hi[k]);
            origin[k] = mid - 0.5 * n as f64 * h;
        }
        GridSpec::new(origin, h, dims)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Point {
        let h = self.spacing;
        [
            self.origin[0] + (i as f64 + 0.5) * h,
            self.origin[1] + (j as f64 + 0.5) * h,
            self.origin[2] + (k as f64 + 0.5) * h,
        ]
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> Point {
        let [i, j, k] = self.coords(idx);
        self.center(i, j, k)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    pub fn box_min(&self) -> Point {
        self.origin
    }

    pub fn box_max(&self) -> Point {
        let h = self.spacing;
        [
            self.origin[0] + self.dims[0] as f64 * h,
            self.origin[1] + self.dims[1] as f64 * h,
            self.origin[2] + self.dims[2] as f64 * h,
        ]
    }

    /// Same box, spacing divided by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        GridSpec::new(
            self.origin,
            self.spacing / factor as f64,
            [self.dims[0] * factor, self.dims[1] * factor, self.dims[2] * factor],
        )
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.dims == other.dims
            && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
            && self
                .origin
                .iter()
                .zip(other.origin.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-9 * self.spacing)
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(ScreenError::GridMismatch(format!(
                "dims {:?} h {} vs dims {:?} h {}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }
}

/// Real values sampled at the cell centers of a [`GridSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(ScreenError::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(ScreenError::Precondition(format!("non-finite value at cell {pos}")));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        ScalarField { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(Point) -> f64 + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|idx| f(grid.center_of(idx))).collect();
        ScalarField { grid: grid.clone(), values }
    }

    /// `h³ Σ values`.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    /// Pointwise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        self.grid.ensure_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(ScalarField { grid: self.grid.clone(), values })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Binary mask of cells with value above `threshold`.
    pub fn threshold(&self, threshold: f64) -> ScalarField {
        self.map(|v| if v > threshold { 1.0 } else { 0.0 })
    }

    /// Trilinear interpolation between cell centers; `None` outside the
    /// hull of the centers.
    pub fn interpolate(&self, p: Point) -> Option<f64> {
        let g = &self.grid;
        let h = g.spacing;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let s = (p[a] - g.origin[a]) / h - 0.5;
            let n = g.dims[a];
            if !(s >= -1e-9 && s <= (n - 1) as f64 + 1e-9) {
                return None;
            }
            let s = s.clamp(0.0, (n - 1) as f64);
            let i0 = (s.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = s - i0 as f64;
        }
        let mut acc = 0.0;
        for dz in 0..2 {
            let wz = if dz == 0 { 1.0 - frac[2] } else { frac[2] };
            for dy in 0..2 {
                let wy = if dy == 0 { 1.0 - frac[1] } else { frac[1] };
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - frac[0] } else { frac[0] };
                    acc += wx * wy * wz * self.at(base[0] + dx, base[1] + dy, base[2] + dz);
                }
            }
        }
        Some(acc)
    }

    /// Upsample by an integer factor, copying each coarse value into its
    /// children.
    pub fn prolong(&self, factor: usize) -> Result<ScalarField> {
        let fine = self.grid.refined(factor)?;
        let [nx, ny, _] = fine.dims;
        let mut values = vec![0.0; fine.len()];
        for (idx, v) in values.iter_mut().enumerate() {
            let i = idx % nx;
            let j = (idx / nx) % ny;
            let k = idx / (nx * ny);
            *v = self.at(i / factor, j / factor, k / factor);
        }
        Ok(ScalarField { grid: fine, values })
    }
}

/// Description of a charged region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Ball { center: Point, radius: f64 },
    Annulus { center: Point, r_inner: f64, r_outer: f64 },
    UnionOf { parts: Vec<DomainSpec> },
    VoxelMask { field: ScalarField },
}

#[inline]
fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl DomainSpec {
    pub fn ball(center: Point, radius: f64) -> Self {
        DomainSpec::Ball { center, radius }
    }

    pub fn annulus(center: Point, r_inner: f64, r_outer: f64) -> Self {
        DomainSpec::Annulus { center, r_inner, r_outer }
    }

    pub fn union(parts: Vec<DomainSpec>) -> Self {
        DomainSpec::UnionOf { parts }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::Ball { center, radius } => {
                if !(*radius > 0.0) || !radius.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return Err(ScreenError::Precondition(format!("ball radius must be positive, got {radius}")));
                }
            }
            DomainSpec::Annulus { center, r_inner, r_outer } => {
                if !(*r_inner >= 0.0 && r_inner < r_outer && r_outer.is_finite())
                    || center.iter().any(|c| !c.is_finite())
                {
                    return Err(ScreenError::Precondition(format!(
                        "annulus needs 0 <= r_inner < r_outer, got ({r_inner}, {r_outer})"
                    )));
                }
            }
            DomainSpec::UnionOf { parts } => {
                for p in parts {
                    p.validate()?;
                }
            }
            DomainSpec::VoxelMask { field } => {
                let g = &field.grid;
                GridSpec::new(g.origin, g.spacing, g.dims)?;
                let cells = g.dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
                if cells != Some(field.values.len()) {
                    return Err(ScreenError::GridMismatch(format!("voxel mask has {} values for dims {:?}", field.values.len(), g.dims)));
                }
                if field.values.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(ScreenError::Precondition("voxel mask values must be 0 or 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn is_analytic(&self) -> bool {
        match self {
            DomainSpec::Ball { .. } | DomainSpec::Annulus { .. } => true,
            DomainSpec::UnionOf { parts } => parts.iter().all(DomainSpec::is_analytic),
            DomainSpec::VoxelMask { .. } => false,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            DomainSpec::Ball { .. } | DomainSpec::Annulus { .. } => false,
            DomainSpec::UnionOf { parts } => parts.iter().all(DomainSpec::is_empty),
            DomainSpec::VoxelMask { field } => field.values.iter().all(|&v| v == 0.0),
        }
    }

    /// Leaf Ball/Annulus components of an analytic domain.
    pub fn components(&self) -> Vec<&DomainSpec> {
        match self {
            DomainSpec::UnionOf { parts } => parts.iter().flat_map(DomainSpec::components).collect(),
            other => vec![other],
        }
    }

    /// Membership in the open set.
    pub fn contains(&self, p: Point) -> bool {
        match self {
            DomainSpec::Ball { center, radius } => dist(p, *center) < *radius,
            DomainSpec::Annulus { center, r_inner, r_outer } => {
                let r = dist(p, *center);
                r > *r_inner && r < *r_outer
            }
            DomainSpec::UnionOf { parts } => parts.iter().any(|d| d.contains(p)),
            DomainSpec::VoxelMask { field } => {
                let g = &field.grid;
                let mut ijk = [0usize; 3];
                for a in 0..3 {
                    let s = ((p[a] - g.origin[a]) / g.spacing).floor();
                    if s < 0.0 || s >= g.dims[a] as f64 {
                        return false;
                    }
                    ijk[a] = s as usize;
                }
                field.at(ijk[0], ijk[1], ijk[2]) > 0.5
            }
        }
    }

    /// Signed distance to the boundary, negative inside. Exact for balls and
    /// annuli; for unions it is the minimum over parts, exact outside.
    pub fn signed_distance(&self, p: Point) -> Option<f64> {
        match self {
            DomainSpec::Ball { center, radius } => Some(dist(p, *center) - radius),
            DomainSpec::Annulus { center, r_inner, r_outer } => {
                let r = dist(p, *center);
                Some((r - r_outer).max(r_inner - r))
            }
            DomainSpec::UnionOf { parts } => {
                let mut best = f64::INFINITY;
                for d in parts {
                    best = best.min(d.signed_distance(p)?);
                }
                Some(best)
            }
            DomainSpec::VoxelMask { .. } => None,
        }
    }

    /// Exact volume; `None` for overlapping unions.
    pub fn exact_volume(&self) -> Option<f64> {
        match self {
            DomainSpec::Ball { radius, .. } => Some(4.0 * PI / 3.0 * radius.powi(3)),
            DomainSpec::Annulus { r_inner, r_outer, .. } => {
                Some(4.0 * PI / 3.0 * (r_outer.powi(3) - r_inner.powi(3)))
            }
            DomainSpec::UnionOf { parts } => {
                let comps = self.components();
                for (a, ca) in comps.iter().enumerate() {
                    for cb in &comps[a + 1..] {
                        let (pa, ra) = ca.bounding_sphere()?;
                        let (pb, rb) = cb.bounding_sphere()?;
                        if dist(pa, pb) < ra + rb {
                            return None;
                        }
                    }
                }
                parts.iter().map(DomainSpec::exact_volume).sum()
            }
            DomainSpec::VoxelMask { field } => Some(field.integral()),
        }
    }

    /// Volume: exact when available, otherwise a fine rasterization.
    pub fn volume(&self) -> f64 {
        if let Some(v) = self.exact_volume() {
            return v;
        }
        let (lo, hi) = self.bounding_box().expect("non-empty union");
        let span = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        let grid = GridSpec::covering(lo, hi, span / 128.0).expect("valid box");
        rasterize(self, &grid, 4).map(|f| f.integral()).unwrap_or(0.0)
    }

    fn bounding_sphere(&self) -> Option<(Point, f64)> {
        match self {
            DomainSpec::Ball { center, radius } => Some((*center, *radius)),
            DomainSpec::Annulus { center, r_outer, .. } => Some((*center, *r_outer)),
            _ => None,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`, `None` if empty.
    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        match self {
            DomainSpec::Ball { center, radius: r } | DomainSpec::Annulus { center, r_outer: r, .. } => Some((
                [center[0] - r, center[1] - r, center[2] - r],
                [center[0] + r, center[1] + r, center[2] + r],
            )),
            DomainSpec::UnionOf { parts } => {
                let mut acc: Option<(Point, Point)> = None;
                for (lo, hi) in parts.iter().filter_map(DomainSpec::bounding_box) {
                    acc = Some(match acc {
                        None => (lo, hi),
                        Some((a, b)) => (
                            [a[0].min(lo[0]), a[1].min(lo[1]), a[2].min(lo[2])],
                            [b[0].max(hi[0]), b[1].max(hi[1]), b[2].max(hi[2])],
                        ),
                    });
                }
                acc
            }
            DomainSpec::VoxelMask { field } => {
                let g = &field.grid;
                let h = g.spacing;
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for (idx, &v) in field.values.iter().enumerate() {
                    if v > 0.5 {
                        let c = g.center_of(idx);
                        for a in 0..3 {
                            lo[a] = lo[a].min(c[a] - 0.5 * h);
                            hi[a] = hi[a].max(c[a] + 0.5 * h);
                        }
                    }
                }
                if lo[0].is_finite() {
                    Some((lo, hi))
                } else {
                    None
                }
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.bounding_box() {
            None => 0.0,
            Some((lo, hi)) => {
                // exact for single balls/annuli; bounding-box diagonal otherwise
                if let Some((_, r)) = self.bounding_sphere() {
                    2.0 * r
                } else if self.is_analytic() {
                    let comps = self.components();
                    let mut d: f64 = 0.0;
                    for a in &comps {
                        for b in &comps {
                            let (pa, ra) = a.bounding_sphere().unwrap();
                            let (pb, rb) = b.bounding_sphere().unwrap();
                            d = d.max(dist(pa, pb) + ra + rb);
                        }
                    }
                    d
                } else {
                    dist(lo, hi)
                }
            }
        }
    }

    /// Largest outer radius among analytic components (half the longest
    /// bounding-box side for voxel masks).
    pub fn max_component_radius(&self) -> f64 {
        match self {
            DomainSpec::Ball { radius, .. } => *radius,
            DomainSpec::Annulus { r_outer, .. } => *r_outer,
            DomainSpec::UnionOf { parts } => parts.iter().map(DomainSpec::max_component_radius).fold(0.0, f64::max),
            DomainSpec::VoxelMask { .. } => match self.bounding_box() {
                Some((lo, hi)) => (0..3).map(|a| 0.5 * (hi[a] - lo[a])).fold(0.0, f64::max),
                None => 0.0,
            },
        }
    }
}

/// Per-cell volume fractions of `domain`, estimated with `subsamples³`
/// stratified points per cell (analytic domains) or copied (voxel masks).
pub fn rasterize(domain: &DomainSpec, grid: &GridSpec, subsamples: usize) -> Result<ScalarField> {
    domain.validate()?;
    if let DomainSpec::VoxelMask { field } = domain {
        grid.ensure_same(&field.grid)?;
        return Ok(field.clone());
    }
    if subsamples == 0 {
        return Err(ScreenError::Precondition("subsamples must be positive".into()));
    }
    let Some((lo, hi)) = domain.bounding_box() else {
        return Ok(ScalarField::zeros(grid));
    };
    let bmin = grid.box_min();
    let bmax = grid.box_max();
    for a in 0..3 {
        if lo[a] < bmin[a] || hi[a] > bmax[a] {
            return Err(ScreenError::OutsideBox(format!(
                "axis {a}: domain spans [{}, {}] but box is [{}, {}]",
                lo[a], hi[a], bmin[a], bmax[a]
            )));
        }
    }
    let h = grid.spacing;
    let half_diag = 0.5 * 3f64.sqrt() * h;
    let s = subsamples;
    let inv = 1.0 / (s * s * s) as f64;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let c = grid.center_of(idx);
            let sd = domain.signed_distance(c).unwrap_or(0.0);
            if sd > half_diag {
                return 0.0;
            }
            if sd < -half_diag {
                return 1.0;
            }
            let mut hits = 0usize;
            for kz in 0..s {
                for ky in 0..s {
                    for kx in 0..s {
                        let p = [
                            c[0] + h * ((kx as f64 + 0.5) / s as f64 - 0.5),
                            c[1] + h * ((ky as f64 + 0.5) / s as f64 - 0.5),
                            c[2] + h * ((kz as f64 + 0.5) / s as f64 - 0.5),
                        ];
                        if domain.contains(p) {
                            hits += 1;
                        }
                    }
                }
            }
            hits as f64 * inv
        })
        .collect();
    Ok(ScalarField { grid: grid.clone(), values })
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: Point,
    pub hi: Point,
}

impl BoxSpec {
    pub fn side_lengths(&self) -> Point {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2]]
    }

    pub fn contains_box(&self, other: &BoxSpec) -> bool {
        (0..3).all(|a| self.lo[a] <= other.lo[a] && self.hi[a] >= other.hi[a])
    }

    pub fn grid(&self, h: f64) -> Result<GridSpec> {
        GridSpec::covering(self.lo, self.hi, h)
    }

    fn inflate(lo: Point, hi: Point, by: f64) -> BoxSpec {
        BoxSpec { lo: [lo[0] - by, lo[1] - by, lo[2] - by], hi: [hi[0] + by, hi[1] + by, hi[2] + by] }
    }
}

/// Box guaranteed to contain the support of the optimal potential: the
/// bounding box of Ω⁺ inflated by `2|Ω⁺|^{1/3} + margin`.
pub fn suggested_box(omega_plus: &DomainSpec, margin: f64) -> Result<BoxSpec> {
    if !(margin >= 0.0) {
        return Err(ScreenError::Precondition(format!("margin must be nonnegative, got {margin}")));
    }
    omega_plus.validate()?;
    let (lo, hi) = omega_plus.bounding_box().ok_or(ScreenError::EmptyDomain)?;
    let m = omega_plus.volume();
    if !(m > 0.0) {
        return Err(ScreenError::EmptyDomain);
    }
    Ok(BoxSpec::inflate(lo, hi, 2.0 * m.cbrt() + margin))
}

/// Tighter working box: the bounding box of Ω⁺ inflated by the thickness of
/// the single-ball screening shell, `(2^{1/3} − 1)·r_max`, plus `margin`.
/// Solvers check a posteriori that the charge stays away from its faces.
pub fn screening_box(omega_plus: &DomainSpec, margin: f64) -> Result<BoxSpec> {
    if !(margin >= 0.0) {
        return Err(ScreenError::Precondition(format!("margin must be nonnegative, got {margin}")));
    }
    omega_plus.validate()?;
    let (lo, hi) = omega_plus.bounding_box().ok_or(ScreenError::EmptyDomain)?;
    let shell = (2f64.cbrt() - 1.0) * omega_plus.max_component_radius();
    Ok(BoxSpec::inflate(lo, hi, shell + margin))
}

/// 6-connected labeling of `mask > 1/2`. Labels run from 1 to the returned
/// count; background is 0.
pub fn connected_components(mask: &ScalarField) -> (Vec<u32>, usize) {
    let g = &mask.grid;
    let [nx, ny, nz] = g.dims;
    let mut labels = vec![0u32; g.len()];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if mask.values[start] <= 0.5 || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let [i, j, k] = g.coords(idx);
            let mut visit = |n: usize| {
                if mask.values[n] > 0.5 && labels[n] == 0 {
                    labels[n] = count;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(idx - 1);
            }
            if i + 1 < nx {
                visit(idx + 1);
            }
            if j > 0 {
                visit(idx - nx);
            }
            if j + 1 < ny {
                visit(idx + nx);
            }
            if k > 0 {
                visit(idx - nx * ny);
            }
            if k + 1 < nz {
                visit(idx + nx * ny);
            }
        }
    }
    (labels, count as usize)
}

// 1D squared distance transform of a sampled function (lower envelope of
// parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            if !f[p].is_finite() {
                // envelope still empty
                v[k] = q;
                z[k] = f64::NEG_INFINITY;
                z[k + 1] = f64::INFINITY;
                break;
            }
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                v[k] = q;
                z[k] = f64::NEG_INFINITY;
                z[k + 1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if !f[v[0]].is_finite() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// `n` quasi-uniform unit vectors on the sphere (Fibonacci lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<Point> {
    let golden = PI * (1.0 + 5f64.sqrt());
    (0..n)
        .map(|i| {
            let t = i as f64 + 0.5;
            let z = 1.0 - 2.0 * t / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let a = golden * t;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}

/// Euclidean center-to-center distance from every cell to the nearest cell
/// with `mask > 1/2` (infinite if the mask is empty).
pub fn distance_to_mask(mask: &ScalarField) -> ScalarField {
    let g = &mask.grid;
    let dims = g.dims;
    let mut d2: Vec<f64> = mask.values.iter().map(|&v| if v > 0.5 { 0.0 } else { f64::INFINITY }).collect();
    let nmax = *dims.iter().max().unwrap();
    let mut line = vec![0.0; nmax];
    let mut out = vec![0.0; nmax];
    let mut v = vec![0usize; nmax];
    let mut z = vec![0.0; nmax + 1];
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        let (a1, a2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for p in 0..dims[a1] {
            for q in 0..dims[a2] {
                let base = p * strides[a1] + q * strides[a2];
                for t in 0..n {
                    line[t] = d2[base + t * strides[axis]];
                }
                edt_1d(&line[..n], &mut out[..n], &mut v[..n], &mut z[..n + 1]);
                for t in 0..n {
                    d2[base + t * strides[axis]] = out[t];
                }
            }
        }
    }
    let h = g.spacing;
    ScalarField { grid: g.clone(), values: d2.into_iter().map(|x| x.sqrt() * h).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_grid(half: f64, h: f64) -> GridSpec {
        GridSpec::covering([-half; 3], [half; 3], h).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(GridSpec::new([0.0; 3], 0.0, [8, 8, 8]).is_err());
        assert!(GridSpec::new([0.0; 3], 0.1, [8, 3, 8]).is_err());
        let g = GridSpec::new([0.0; 3], 0.5, [4, 5, 6]).unwrap();
        assert_eq!(g.center(0, 0, 0), [0.25, 0.25, 0.25]);
        assert_eq!(g.box_max(), [2.0, 2.5, 3.0]);
        assert_eq!(g.coords(g.index(3, 2, 5)), [3, 2, 5]);
    }

    #[test]
    fn unit_ball_volume() {
        let g = cube_grid(1.125, 1.0 / 32.0);
        let f = rasterize(&DomainSpec::ball([0.0; 3], 1.0), &g, 4).unwrap();
        let exact = 4.0 * PI / 3.0;
        assert!((f.integral() - exact).abs() / exact < 5e-3, "{}", f.integral());
        assert!(f.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn empty_union_is_zero() {
        let g = cube_grid(1.0, 0.25);
        let f = rasterize(&DomainSpec::union(vec![]), &g, 4).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn annulus_volume_matches_shell_formula() {
        let r2 = 2f64.cbrt();
        let g = cube_grid(1.375, 1.0 / 32.0);
        let f = rasterize(&DomainSpec::annulus([0.0; 3], 1.0, r2), &g, 4).unwrap();
        let exact = 4.0 * PI / 3.0 * (r2.powi(3) - 1.0);
        assert!((f.integral() - exact).abs() / exact < 5e-3);
    }

    #[test]
    fn rasterize_outside_box_names_extent() {
        let g = cube_grid(1.0, 0.25);
        let err = rasterize(&DomainSpec::ball([0.5, 0.0, 0.0], 1.0), &g, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("axis 0"), "{msg}");
    }

    #[test]
    fn rasterize_error_halves_with_h() {
        let d = DomainSpec::ball([0.013, -0.021, 0.007], 0.77);
        let exact = d.exact_volume().unwrap();
        let e1 = (rasterize(&d, &cube_grid(1.0, 1.0 / 8.0), 1).unwrap().integral() - exact).abs();
        let e2 = (rasterize(&d, &cube_grid(1.0, 1.0 / 16.0), 1).unwrap().integral() - exact).abs();
        let e3 = (rasterize(&d, &cube_grid(1.0, 1.0 / 32.0), 1).unwrap().integral() - exact).abs();
        assert!(e1 + e2 > 1.5 * (e2 + e3), "{e1} {e2} {e3}");
    }

    #[test]
    fn suggested_box_for_unit_ball() {
        let b = suggested_box(&DomainSpec::ball([0.5, 0.0, -1.0], 1.0), 0.0).unwrap();
        let hw = 1.0 + 2.0 * (4.0 * PI / 3.0f64).cbrt();
        for a in 0..3 {
            assert!((b.hi[a] - b.lo[a] - 2.0 * hw).abs() < 1e-12);
        }
        assert!((0.5 * (b.lo[0] + b.hi[0]) - 0.5).abs() < 1e-12);
        let b2 = suggested_box(&DomainSpec::ball([0.5, 0.0, -1.0], 1.0), 0.1).unwrap();
        assert!(b2.contains_box(&b) && b2.side_lengths()[0] > b.side_lengths()[0]);
        assert!(matches!(suggested_box(&DomainSpec::union(vec![]), 0.0), Err(ScreenError::EmptyDomain)));
    }

    #[test]
    fn suggested_box_two_balls_covers_both_inflations() {
        let c = 2f64.cbrt();
        let d = DomainSpec::union(vec![DomainSpec::ball([c, 0.0, 0.0], 1.0), DomainSpec::ball([-c, 0.0, 0.0], 1.0)]);
        let b = suggested_box(&d, 0.0).unwrap();
        let reach = 2.0 * (8.0 * PI / 3.0f64).cbrt();
        assert!((b.hi[0] - (c + 1.0 + reach)).abs() < 1e-12);
        assert!((b.lo[1] + 1.0 + reach).abs() < 1e-12);
    }

    #[test]
    fn components_counts() {
        let g = cube_grid(2.0, 0.125);
        let (_, n0) = connected_components(&ScalarField::zeros(&g));
        assert_eq!(n0, 0);
        let one = rasterize(&DomainSpec::ball([0.0; 3], 1.0), &g, 2).unwrap();
        assert_eq!(connected_components(&one).1, 1);
        let two = rasterize(
            &DomainSpec::union(vec![DomainSpec::ball([-1.2, 0.0, 0.0], 0.7), DomainSpec::ball([1.2, 0.0, 0.0], 0.7)]),
            &g,
            2,
        )
        .unwrap();
        let (labels, n) = connected_components(&two);
        assert_eq!(n, 2);
        assert!(labels.iter().all(|&l| l as usize <= n));
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let g = GridSpec::new([0.0; 3], 0.5, [9, 7, 6]).unwrap();
        let mut mask = ScalarField::zeros(&g);
        for idx in [3, 100, 250] {
            mask.values[idx] = 1.0;
        }
        let d = distance_to_mask(&mask);
        for idx in 0..g.len() {
            let c = g.center_of(idx);
            let brute = [3, 100, 250].iter().map(|&m| dist(c, g.center_of(m))).fold(f64::INFINITY, f64::min);
            assert!((d.values[idx] - brute).abs() < 1e-12);
        }
        assert!(distance_to_mask(&ScalarField::zeros(&g)).values.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let g = GridSpec::new([-1.0; 3], 0.25, [8, 8, 8]).unwrap();
        let f = ScalarField::from_fn(&g, |p| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2]);
        let p = [0.1, -0.33, 0.47];
        let v = f.interpolate(p).unwrap();
        assert!((v - (1.0 + 0.2 + 0.33 + 0.235)).abs() < 1e-12);
        assert!(f.interpolate([2.0, 0.0, 0.0]).is_none());
    }
}
