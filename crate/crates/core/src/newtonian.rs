//! Newtonian potential `φ(x) = ∫ w(y) / (4π|x − y|) dy` of a density
//! sampled on a grid.
//!
//! Three evaluators share one discrete kernel: a free-space FFT convolution
//! (Hockney zero padding, no periodic images), a direct `O(N²)` sum used as
//! its oracle, and exact radial quadrature for spherically symmetric
//! densities.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, ScreenError};
use crate::geometry::{fibonacci_sphere, GridSpec, Point, ScalarField};
use crate::quadrature::gauss_legendre;

/// Default cell cap for [`potential_direct`].
pub const DIRECT_CELL_CAP: usize = 32 * 32 * 32;

/// Number of sphere samples used by [`sphere_average`].
pub const SPHERE_SAMPLES: usize = 2048;

/// `(1/4π) ∫_{[-1/2,1/2]³} dx/|x|`: the cell-averaged kernel on a unit cell.
///
/// Computed by splitting the cube into six pyramids with apex at the center;
/// each contributes `(1/4) ∫_face dA/|p|`, a smooth face integral.
pub fn unit_cell_kernel_average() -> f64 {
    let (x, w) = gauss_legendre(48);
    let mut face = 0.0;
    for (yi, wy) in x.iter().zip(&w) {
        for (zi, wz) in x.iter().zip(&w) {
            let y = 0.5 * yi;
            let z = 0.5 * zi;
            face += 0.25 * wy * wz / (0.25 + y * y + z * z).sqrt();
        }
    }
    6.0 * 0.25 * face / (4.0 * PI)
}

/// Discrete free-space Green's function on a grid: `1/(4π|x|)` at nonzero
/// offsets and the cell average of that function at the origin.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub grid: GridSpec,
    pub self_value: f64,
}

impl KernelTable {
    pub fn new(grid: &GridSpec) -> Self {
        KernelTable { grid: grid.clone(), self_value: unit_cell_kernel_average() / grid.spacing }
    }

    /// Kernel at the integer cell offset `(di, dj, dk)`.
    #[inline]
    pub fn value(&self, di: i64, dj: i64, dk: i64) -> f64 {
        if di == 0 && dj == 0 && dk == 0 {
            self.self_value
        } else {
            let r = ((di * di + dj * dj + dk * dk) as f64).sqrt() * self.grid.spacing;
            1.0 / (4.0 * PI * r)
        }
    }
}

/// Smallest even length `≥ n` whose prime factors are all ≤ 7.
pub fn fft_friendly_len(n: usize) -> usize {
    let mut m = n.max(2);
    loop {
        if m % 2 == 0 {
            let mut r = m;
            for p in [2, 3, 5, 7] {
                while r % p == 0 {
                    r /= p;
                }
            }
            if r == 1 {
                return m;
            }
        }
        m += 1;
    }
}

/// Cached free-space convolution with the [`KernelTable`] of one grid.
pub struct NewtonianOperator {
    kernel: KernelTable,
    padded: [usize; 3],
    /// Real kernel spectrum, even in y and z, stored z-fastest on `(pz/2+1) × cx × (py/2+1)`
    /// and pre-scaled by `h³/(px·py·pz)`.
    spectrum: Vec<f64>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    fft_z: Arc<dyn Fft<f64>>,
    ifft_z: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for NewtonianOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NewtonianOperator").field("grid", &self.kernel.grid).field("padded", &self.padded).finish()
    }
}

fn try_zeroed<T: Clone>(n: usize, zero: T) -> Result<Vec<T>> {
    let mut v = Vec::new();
    v.try_reserve_exact(n).map_err(|_| ScreenError::Resource { required: n })?;
    v.resize(n, zero);
    Ok(v)
}

#[inline]
fn wrapped_offset(t: usize, padded: usize, n: usize) -> Option<i64> {
    if t < n {
        Some(t as i64)
    } else if t + n > padded {
        Some(t as i64 - padded as i64)
    } else {
        None
    }
}

impl NewtonianOperator {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        let kernel = KernelTable::new(grid);
        let padded = [
            fft_friendly_len(2 * grid.dims[0] - 1),
            fft_friendly_len(2 * grid.dims[1] - 1),
            fft_friendly_len(2 * grid.dims[2] - 1),
        ];
        let mut rplanner = RealFftPlanner::<f64>::new();
        let mut planner = FftPlanner::<f64>::new();
        let mut op = NewtonianOperator {
            r2c: rplanner.plan_fft_forward(padded[0]),
            c2r: rplanner.plan_fft_inverse(padded[0]),
            fft_y: planner.plan_fft_forward(padded[1]),
            ifft_y: planner.plan_fft_inverse(padded[1]),
            fft_z: planner.plan_fft_forward(padded[2]),
            ifft_z: planner.plan_fft_inverse(padded[2]),
            kernel,
            padded,
            spectrum: Vec::new(),
        };
        op.build_spectrum()?;
        Ok(op)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.kernel.grid
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }

    pub fn padded_dims(&self) -> [usize; 3] {
        self.padded
    }

    fn spectral_len(&self) -> usize {
        (self.padded[0] / 2 + 1) * self.padded[1] * self.padded[2]
    }

    fn build_spectrum(&mut self) -> Result<()> {
        let [px, py, pz] = self.padded;
        let [nx, ny, nz] = self.kernel.grid.dims;
        let cx = px / 2 + 1;
        let mut buf = try_zeroed(self.spectral_len(), Complex::new(0.0, 0.0))?;
        let kernel = self.kernel.clone();
        self.forward(&mut buf, [px, py, pz], |j, k, row| {
            let (Some(dj), Some(dk)) = (wrapped_offset(j, py, ny), wrapped_offset(k, pz, nz)) else {
                row.iter_mut().for_each(|v| *v = 0.0);
                return;
            };
            for (t, v) in row.iter_mut().enumerate() {
                *v = match wrapped_offset(t, px, nx) {
                    Some(di) => kernel.value(di, dj, dk),
                    None => 0.0,
                };
            }
        });
        let fft_z = self.fft_z.clone();
        let mut scratch = vec![Complex::new(0.0, 0.0); fft_z.get_inplace_scratch_len()];
        self.z_pass(&mut buf, pz, |_, tr| fft_z.process_with_scratch(tr, &mut scratch));
        let (hy, hz) = (py / 2 + 1, pz / 2 + 1);
        let scale = self.kernel.grid.cell_volume() / (px * py * pz) as f64;
        let mut spectrum = try_zeroed(cx * hy * hz, 0.0)?;
        for z in 0..hz {
            for y in 0..hy {
                for x in 0..cx {
                    spectrum[z + hz * (x + cx * y)] = buf[x + cx * (y + py * z)].re * scale;
                }
            }
        }
        self.spectrum = spectrum;
        Ok(())
    }

    /// Forward 3D transform of a real array whose nonzero rows are
    /// `(j, k) < (active[1], active[2])`, filled by `fill_row`.
    fn forward(&self, buf: &mut [Complex<f64>], active: [usize; 3], fill_row: impl Fn(usize, usize, &mut [f64]) + Sync) {
        let [px, py, _] = self.padded;
        let cx = px / 2 + 1;
        let slab = cx * py;
        buf.par_chunks_mut(slab).take(active[2]).enumerate().for_each_init(
            || {
                (
                    vec![0.0; px],
                    vec![Complex::new(0.0, 0.0); py * cx],
                    self.r2c.make_scratch_vec(),
                    vec![Complex::new(0.0, 0.0); self.fft_y.get_inplace_scratch_len()],
                )
            },
            |(row, tr, rscratch, yscratch), (k, plane)| {
                for j in 0..active[1] {
                    fill_row(j, k, row);
                    self.r2c
                        .process_with_scratch(row, &mut plane[j * cx..(j + 1) * cx], rscratch)
                        .expect("real transform length");
                }
                for j in 0..py {
                    for x in 0..cx {
                        tr[x * py + j] = plane[j * cx + x];
                    }
                }
                self.fft_y.process_with_scratch(tr, yscratch);
                for x in 0..cx {
                    for j in 0..py {
                        plane[j * cx + x] = tr[x * py + j];
                    }
                }
            },
        );
    }

    /// Runs `f` on each y-column block `tr[x·pz + z]` of a buffer holding the
    /// first `depth` z-slabs; slabs past `depth` read as zero and are dropped.
    fn z_pass(&self, buf: &mut [Complex<f64>], depth: usize, mut f: impl FnMut(usize, &mut [Complex<f64>])) {
        let [px, py, pz] = self.padded;
        let cx = px / 2 + 1;
        let mut tr = vec![Complex::new(0.0, 0.0); cx * pz];
        for y in 0..py {
            tr.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
            for z in 0..depth {
                let base = cx * (y + py * z);
                for x in 0..cx {
                    tr[x * pz + z] = buf[base + x];
                }
            }
            f(y, &mut tr);
            for z in 0..depth {
                let base = cx * (y + py * z);
                for x in 0..cx {
                    buf[base + x] = tr[x * pz + z];
                }
            }
        }
    }

    /// `φ = h³ Σ_j G(x_i − x_j) w_j` for raw values on this operator's grid.
    pub fn apply_values(&self, w: &[f64]) -> Result<Vec<f64>> {
        let g = &self.kernel.grid;
        let [nx, ny, nz] = g.dims;
        if w.len() != g.len() {
            return Err(ScreenError::GridMismatch(format!("{} values for {} cells", w.len(), g.len())));
        }
        let [px, py, pz] = self.padded;
        let cx = px / 2 + 1;
        let hz = pz / 2 + 1;
        let mut buf = try_zeroed(cx * py * nz, Complex::new(0.0, 0.0))?;
        self.forward(&mut buf, [nx, ny, nz], |j, k, row| {
            let src = &w[nx * (j + ny * k)..nx * (j + ny * k) + nx];
            row[..nx].copy_from_slice(src);
            row[nx..].iter_mut().for_each(|v| *v = 0.0);
        });
        let mut scratch = vec![
            Complex::new(0.0, 0.0);
            self.fft_z.get_inplace_scratch_len().max(self.ifft_z.get_inplace_scratch_len())
        ];
        self.z_pass(&mut buf, nz, |y, tr| {
            self.fft_z.process_with_scratch(tr, &mut scratch);
            let ys = y.min(py - y);
            for x in 0..cx {
                let col = &mut tr[x * pz..(x + 1) * pz];
                let spec = &self.spectrum[hz * (x + cx * ys)..hz * (x + cx * ys) + hz];
                for (z, v) in col.iter_mut().enumerate() {
                    *v *= spec[z.min(pz - z)];
                }
            }
            self.ifft_z.process_with_scratch(tr, &mut scratch);
        });
        let mut out = vec![0.0; g.len()];
        let slab = cx * py;
        out.par_chunks_mut(nx * ny).zip(buf.par_chunks_mut(slab)).for_each_init(
            || {
                (
                    vec![0.0; px],
                    vec![Complex::new(0.0, 0.0); py * cx],
                    self.c2r.make_scratch_vec(),
                    vec![Complex::new(0.0, 0.0); self.ifft_y.get_inplace_scratch_len()],
                )
            },
            |(row, tr, rscratch, yscratch), (dst, plane)| {
                for j in 0..py {
                    for x in 0..cx {
                        tr[x * py + j] = plane[j * cx + x];
                    }
                }
                self.ifft_y.process_with_scratch(tr, yscratch);
                for j in 0..ny {
                    let line = &mut plane[j * cx..(j + 1) * cx];
                    for (x, v) in line.iter_mut().enumerate() {
                        *v = tr[x * py + j];
                    }
                    line[0].im = 0.0;
                    if px % 2 == 0 {
                        line[cx - 1].im = 0.0;
                    }
                    self.c2r.process_with_scratch(line, row, rscratch).expect("real transform length");
                    dst[j * nx..(j + 1) * nx].copy_from_slice(&row[..nx]);
                }
            },
        );
        Ok(out)
    }

    pub fn apply(&self, w: &ScalarField) -> Result<ScalarField> {
        self.kernel.grid.ensure_same(&w.grid)?;
        Ok(ScalarField { grid: w.grid.clone(), values: self.apply_values(&w.values)? })
    }
}

/// Free-space potential of `w` by zero-padded FFT convolution.
pub fn potential_fft(w: &ScalarField) -> Result<ScalarField> {
    NewtonianOperator::new(&w.grid)?.apply(w)
}

/// Direct-summation oracle for [`potential_fft`], refused above `cap` cells.
pub fn potential_direct(w: &ScalarField, cap: usize) -> Result<ScalarField> {
    let g = &w.grid;
    if g.len() > cap {
        return Err(ScreenError::CapExceeded { cells: g.len(), cap });
    }
    let kernel = KernelTable::new(g);
    let h3 = g.cell_volume();
    let sources: Vec<([i64; 3], f64)> = w
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(idx, &v)| {
            let [i, j, k] = g.coords(idx);
            ([i as i64, j as i64, k as i64], v)
        })
        .collect();
    let values = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let [i, j, k] = g.coords(idx);
            let (i, j, k) = (i as i64, j as i64, k as i64);
            let mut acc = 0.0;
            for (s, v) in &sources {
                acc += kernel.value(i - s[0], j - s[1], k - s[2]) * v;
            }
            acc * h3
        })
        .collect();
    Ok(ScalarField { grid: g.clone(), values })
}

/// Potential of a radial density at radius `r` from its cumulative signed
/// charge `q(s) = ∫_{B_s} w`:
/// `φ(r) = (1/4π) ∫_r^∞ q(s)/s² ds`, with `q` constant beyond `r_support`.
pub fn radial_potential(q: impl Fn(f64) -> f64, r: f64, r_support: f64) -> Result<f64> {
    radial_potential_with_breaks(q, r, r_support, &[])
}

/// [`radial_potential`] with known kinks of `q` (shell radii) passed to the
/// quadrature.
pub fn radial_potential_with_breaks(q: impl Fn(f64) -> f64, r: f64, r_support: f64, breaks: &[f64]) -> Result<f64> {
    if !(r >= 0.0) || !(r_support >= 0.0) {
        return Err(ScreenError::Precondition(format!("radii must be nonnegative, got r={r}, support={r_support}")));
    }
    let total = q(r_support);
    if !total.is_finite() {
        return Err(ScreenError::Precondition("cumulative charge is not finite".into()));
    }
    if r >= r_support {
        if r == 0.0 {
            return Ok(0.0);
        }
        return Ok(total / (4.0 * PI * r));
    }
    let body = crate::quadrature::integrate_with_breaks(|s| q(s) / (s * s), r, r_support, breaks, 1e-11);
    let tail = if r_support > 0.0 { total / r_support } else { 0.0 };
    Ok((body + tail) / (4.0 * PI))
}

/// [`radial_potential`] for nonnegative densities: rejects a decreasing `q`.
pub fn radial_potential_positive(q: impl Fn(f64) -> f64, r: f64, r_support: f64) -> Result<f64> {
    let samples = 256;
    let mut prev = q(0.0);
    for s in 1..=samples {
        let cur = q(r_support * s as f64 / samples as f64);
        if cur < prev - 1e-12 * prev.abs().max(1.0) {
            return Err(ScreenError::Precondition(format!(
                "cumulative charge decreases near r = {}",
                r_support * s as f64 / samples as f64
            )));
        }
        prev = cur;
    }
    radial_potential(q, r, r_support)
}

/// Whether a sphere average is returned as a mean or as `∫_{∂B_R} φ dH²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SphereForm {
    Average,
    Integral,
}

/// Mean of the trilinear interpolant of `phi` over a Fibonacci sample of the
/// sphere `∂B_R(center)`, or its surface integral.
pub fn sphere_average(phi: &ScalarField, center: Point, radius: f64, form: SphereForm) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(ScreenError::Precondition(format!("radius must be positive, got {radius}")));
    }
    let dirs = fibonacci_sphere(SPHERE_SAMPLES);
    let mut acc = 0.0;
    for d in &dirs {
        let p = [center[0] + radius * d[0], center[1] + radius * d[1], center[2] + radius * d[2]];
        acc += phi.interpolate(p).ok_or_else(|| {
            ScreenError::OutsideBox(format!("sphere of radius {radius} around {center:?} exits the grid"))
        })?;
    }
    let mean = acc / dirs.len() as f64;
    Ok(match form {
        SphereForm::Average => mean,
        SphereForm::Integral => mean * 4.0 * PI * radius * radius,
    })
}

/// Exterior/interior potential of the uniform unit density on a ball.
pub fn ball_potential(radius: f64, r: f64) -> f64 {
    if r >= radius {
        radius.powi(3) / (3.0 * r)
    } else {
        (3.0 * radius * radius - r * r) / 6.0
    }
}

/// Potential of the uniform unit density on the annulus `C_{a,b}` at radius `r`.
pub fn annulus_potential(a: f64, b: f64, r: f64) -> f64 {
    let q = |s: f64| s.clamp(a, b).powi(3) - a.powi(3);
    if r >= b {
        (b.powi(3) - a.powi(3)) / (3.0 * r)
    } else if r <= a {
        0.5 * (b * b - a * a)
    } else {
        q(r) / (3.0 * r) + 0.5 * (b * b - r * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rasterize, DomainSpec};
    use crate::quadrature::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cell_average_matches_nested_quadrature() {
        // independent route: 8 × octant integral of 1/|x| by nested adaptive GK
        let inner = |x: f64, y: f64| integrate(|z| 1.0 / (x * x + y * y + z * z).sqrt(), 0.0, 0.5, 1e-11);
        let mid = |x: f64| integrate(|y| inner(x, y), 0.0, 0.5, 1e-10);
        let octant = integrate(mid, 0.0, 0.5, 1e-9);
        let expected = 8.0 * octant / (4.0 * PI);
        assert!((unit_cell_kernel_average() - expected).abs() < 1e-7, "{} vs {}", unit_cell_kernel_average(), expected);
    }

    #[test]
    fn kernel_is_exact_off_diagonal_and_even() {
        let g = GridSpec::new([0.0; 3], 0.1, [8, 8, 8]).unwrap();
        let k = KernelTable::new(&g);
        assert_eq!(k.value(1, 0, 0), 1.0 / (4.0 * PI * 0.1));
        assert_eq!(k.value(2, -3, 1), k.value(-2, 3, -1));
        assert!(k.self_value > k.value(1, 0, 0));
    }

    #[test]
    fn friendly_lengths() {
        assert_eq!(fft_friendly_len(63), 64);
        assert_eq!(fft_friendly_len(205), 210);
        assert_eq!(fft_friendly_len(2 * 131 - 1), 270);
    }

    #[test]
    fn point_mass_far_field_is_exact() {
        let g = GridSpec::new([-1.0; 3], 1.0 / 8.0, [16, 16, 16]).unwrap();
        let mut w = ScalarField::zeros(&g);
        let q = 0.7;
        let src = g.index(8, 8, 8);
        w.values[src] = q / g.cell_volume();
        let phi = potential_fft(&w).unwrap();
        let c = g.center_of(src);
        let mut checked = 0;
        for idx in 0..g.len() {
            let p = g.center_of(idx);
            let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
            if d >= 3.0 * g.spacing - 1e-12 {
                let exact = q / (4.0 * PI * d);
                assert!((phi.values[idx] - exact).abs() <= 1e-12 * exact, "{} {}", phi.values[idx], exact);
                checked += 1;
            }
        }
        assert!(checked > 3000);
    }

    #[test]
    fn fft_matches_direct_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = GridSpec::new([0.0; 3], 1.0 / 16.0, [16, 16, 16]).unwrap();
        let w = ScalarField::new(g.clone(), (0..g.len()).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let a = potential_fft(&w).unwrap();
        let b = potential_direct(&w, DIRECT_CELL_CAP).unwrap();
        let dev = a.values.iter().zip(&b.values).map(|(x, y)| ((x - y) / y).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-10, "{dev}");
    }

    #[test]
    fn anisotropic_grid_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GridSpec::new([0.0; 3], 0.1, [9, 5, 7]).unwrap();
        let w = ScalarField::new(g.clone(), (0..g.len()).map(|_| rng.gen::<f64>() - 0.3).collect()).unwrap();
        let a = potential_fft(&w).unwrap();
        let b = potential_direct(&w, DIRECT_CELL_CAP).unwrap();
        let scale = b.max_abs();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn direct_refuses_large_grids_and_zero_field() {
        let g = GridSpec::new([0.0; 3], 0.1, [40, 40, 40]).unwrap();
        match potential_direct(&ScalarField::zeros(&g), DIRECT_CELL_CAP) {
            Err(ScreenError::CapExceeded { cap, .. }) => assert_eq!(cap, DIRECT_CELL_CAP),
            other => panic!("{other:?}"),
        }
        let small = GridSpec::new([0.0; 3], 0.1, [6, 6, 6]).unwrap();
        let phi = potential_direct(&ScalarField::zeros(&small), DIRECT_CELL_CAP).unwrap();
        assert!(phi.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pairwise_symmetry_of_point_masses() {
        let g = GridSpec::new([0.0; 3], 0.2, [10, 10, 10]).unwrap();
        let (a, b) = (g.index(1, 2, 3), g.index(7, 4, 8));
        let mut wa = ScalarField::zeros(&g);
        wa.values[a] = 1.0;
        let mut wb = ScalarField::zeros(&g);
        wb.values[b] = 1.0;
        let pa = potential_direct(&wa, DIRECT_CELL_CAP).unwrap();
        let pb = potential_direct(&wb, DIRECT_CELL_CAP).unwrap();
        assert_eq!(pa.values[b], pb.values[a]);
    }

    #[test]
    fn unit_ball_center_and_exterior() {
        let g = GridSpec::covering([-2.25; 3], [2.25; 3], 1.0 / 32.0).unwrap();
        let w = rasterize(&DomainSpec::ball([0.0; 3], 1.0), &g, 4).unwrap();
        let phi = potential_fft(&w).unwrap();
        let center = phi.interpolate([0.0; 3]).unwrap();
        assert!((center - 0.5).abs() < 5e-3, "{center}");
        let m = 4.0 * PI / 3.0;
        let far = phi.interpolate([2.0, 0.0, 0.0]).unwrap();
        let expected = radial_potential(|s| m * s.min(1.0).powi(3), 2.0, 1.0).unwrap();
        assert!((far - expected).abs() < 1e-2 * expected, "{far} {expected}");
    }

    #[test]
    fn radial_potential_of_ball() {
        let m = 4.0 * PI / 3.0;
        let q = |s: f64| m * s.min(1.0).powi(3);
        assert!((radial_potential(q, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-10);
        assert!((radial_potential(q, 2.0, 1.0).unwrap() - 1.0 / 6.0).abs() < 1e-14);
        assert!((radial_potential(q, 0.5, 1.0).unwrap() - ball_potential(1.0, 0.5)).abs() < 1e-10);
    }

    #[test]
    fn radial_potential_neutral_profile_vanishes_outside() {
        let c = 2f64.cbrt();
        let m = 4.0 * PI / 3.0;
        let q = move |s: f64| m * s.min(1.0).powi(3) - m * (s.clamp(1.0, c).powi(3) - 1.0);
        assert!(radial_potential(q, 1.5, c).unwrap().abs() < 1e-12);
        assert!(radial_potential_positive(q, 0.2, c).is_err());
        assert!(radial_potential_positive(|s: f64| s.min(1.0).powi(3), 0.2, 1.0).is_ok());
        assert!(radial_potential(q, -1.0, c).is_err());
    }

    #[test]
    fn closed_form_shell_potentials() {
        for &r in &[0.0, 0.3, 1.0, 1.1, 1.4, 3.0] {
            let num = radial_potential_with_breaks(
                |s: f64| 4.0 * PI / 3.0 * (s.clamp(1.0, 1.5).powi(3) - 1.0),
                r,
                1.5,
                &[1.0],
            )
            .unwrap();
            assert!((num - annulus_potential(1.0, 1.5, r)).abs() < 1e-10, "r={r}");
        }
    }

    #[test]
    fn sphere_average_of_constant_and_outside() {
        let g = GridSpec::covering([-1.0; 3], [1.0; 3], 0.1).unwrap();
        let f = ScalarField::constant(&g, 2.5);
        assert!((sphere_average(&f, [0.0; 3], 0.5, SphereForm::Average).unwrap() - 2.5).abs() < 1e-12);
        let i = sphere_average(&f, [0.0; 3], 0.5, SphereForm::Integral).unwrap();
        assert!((i - 2.5 * PI).abs() < 1e-12);
        assert!(sphere_average(&f, [0.0; 3], 1.2, SphereForm::Average).is_err());
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GridSpec::new([0.0; 3], 0.1, [12, 10, 8]).unwrap();
        let w1 = ScalarField::new(g.clone(), (0..g.len()).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let w2 = ScalarField::new(g.clone(), (0..g.len()).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let op = NewtonianOperator::new(&g).unwrap();
        let lhs = op.apply(&w1.combine(2.0, &w2, -0.5).unwrap()).unwrap();
        let rhs = op.apply(&w1).unwrap().combine(2.0, &op.apply(&w2).unwrap(), -0.5).unwrap();
        let scale = rhs.max_abs();
        for (a, b) in lhs.values.iter().zip(&rhs.values) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }
}
