//! Closed-form and radial reference solutions for concentric configurations.
//!
//! Every branch computation is done for an inner radius normalized to one
//! and rescaled afterwards.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::energy::{annuli_interaction_energy, annulus_self_energy};
use crate::error::{Result, ScreenError};
use crate::geometry::{DomainSpec, Point};
use crate::newtonian::annulus_potential;
use crate::quadrature::bisect;
use crate::relaxed::{project_weighted, run_projected_gradient, PgOutcome, SolveConfig};

/// Left side of the defining equation of the critical ratio.
pub fn critical_ratio_residual(r: f64) -> f64 {
    2.0 * (r * r - 1.0) - (2.0 * (r.powi(3) - 1.0)).powf(2.0 / 3.0)
}

/// The ratio `R₂/R₁` above which the inner hole of an annulus is filled.
pub fn critical_ratio() -> f64 {
    static CACHE: OnceLock<f64> = OnceLock::new();
    *CACHE.get_or_init(|| {
        bisect(critical_ratio_residual, 1.0 + 1e-6, 4.0, 1e-13, 200).expect("residual changes sign on (1, 4)")
    })
}

fn check_radii(r1: f64, r2: f64) -> Result<()> {
    if !(r1.is_finite() && r2.is_finite()) || r1 < 0.0 || r2 <= r1 {
        return Err(ScreenError::Precondition(format!("need 0 <= R1 < R2, got R1={r1}, R2={r2}")));
    }
    Ok(())
}

/// Radii `(r₁, r₂)` of the two-sided screening layer of the annulus
/// `C_{R₁,R₂}`: negative charge fills `C_{r₁,R₁}` and `C_{R₂,r₂}`.
pub fn optimal_bilayer(big_r1: f64, big_r2: f64) -> Result<(f64, f64)> {
    check_radii(big_r1, big_r2)?;
    if big_r1 == 0.0 {
        return Err(ScreenError::Precondition("R1 = 0 is a ball; use optimal_outer_only".into()));
    }
    let ratio = big_r2 / big_r1;
    let rstar = critical_ratio();
    if ratio >= rstar {
        return Err(ScreenError::Precondition(format!(
            "ratio {ratio} is at or above the critical ratio {rstar}: the hole is filled, use optimal_outer_only"
        )));
    }
    let (r1, r2) = bilayer_unit(ratio);
    Ok((r1 * big_r1, r2 * big_r1))
}

/// Residuals of the two bilayer equations at `(r₁, r₂)`.
pub fn bilayer_residuals(big_r1: f64, big_r2: f64, r1: f64, r2: f64) -> [f64; 2] {
    [
        r1.powi(3) - r2.powi(3) + 2.0 * (big_r2.powi(3) - big_r1.powi(3)),
        r1 * r1 - r2 * r2 + 2.0 * (big_r2 * big_r2 - big_r1 * big_r1),
    ]
}

fn bilayer_unit(ratio: f64) -> (f64, f64) {
    let b3 = 2.0 * (ratio.powi(3) - 1.0);
    let a2 = 2.0 * (ratio * ratio - 1.0);
    let (mut x, mut y) = (0.5, (b3 + 1.0).cbrt());
    for _ in 0..50 {
        let [f, g] = bilayer_residuals(1.0, ratio, x, y);
        if f.abs() <= 1e-14 && g.abs() <= 1e-14 {
            break;
        }
        // Jacobian [[3x², −3y²], [2x, −2y]]
        let det = -6.0 * x * x * y + 6.0 * y * y * x;
        if det.abs() < 1e-300 {
            break;
        }
        let dx = (-2.0 * y * f + 3.0 * y * y * g) / det;
        let dy = (-2.0 * x * f + 3.0 * x * x * g) / det;
        x -= dx;
        y -= dy;
        if !(x.is_finite() && y.is_finite()) {
            break;
        }
    }
    let ok = x > 0.0 && x < 1.0 && y > ratio && {
        let [f, g] = bilayer_residuals(1.0, ratio, x, y);
        f.abs() <= 1e-12 && g.abs() <= 1e-12
    };
    if ok {
        return (x, y);
    }
    // r₂² = r₁² + A leaves one increasing equation in r₁
    let reduced = |r1: f64| (r1 * r1 + a2).powf(1.5) - r1.powi(3) - b3;
    let x = bisect(reduced, 0.0, 1.0, 1e-15, 200).unwrap_or(0.0);
    (x, (x * x + a2).sqrt())
}

/// Outer radius when the hole `B_{R₁}` is completely filled:
/// `r = (2(R₂³ − R₁³))^{1/3}`.
pub fn optimal_outer_only(big_r1: f64, big_r2: f64) -> Result<f64> {
    check_radii(big_r1, big_r2)?;
    if big_r1 > 0.0 && big_r2 / big_r1 < critical_ratio() * (1.0 - 1e-12) {
        return Err(ScreenError::Precondition(format!(
            "ratio {} is below the critical ratio: use optimal_bilayer",
            big_r2 / big_r1
        )));
    }
    Ok((2.0 * (big_r2.powi(3) - big_r1.powi(3))).cbrt())
}

/// Optimal negative annulus around a ball of radius `r`.
pub fn ball_screening_annulus(radius: f64) -> Result<(f64, f64)> {
    Ok((radius, optimal_outer_only(0.0, radius)?))
}

/// Potential at the center of the outer-only configuration with `R₁ = 1`.
pub fn outer_only_center_potential(ratio: f64) -> f64 {
    (ratio * ratio - 1.0) - 0.5 * (2.0 * (ratio.powi(3) - 1.0)).powf(2.0 / 3.0)
}

/// One uniformly charged concentric shell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shell {
    pub r_inner: f64,
    pub r_outer: f64,
    /// `+1` for Ω⁺, `−1` for Ω⁻.
    pub sign: i8,
}

/// Concentric shells sorted outward.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialConfig {
    pub shells: Vec<Shell>,
}

impl RadialConfig {
    pub fn new(shells: Vec<Shell>) -> Result<Self> {
        let c = RadialConfig { shells };
        c.validate()?;
        Ok(c)
    }

    /// A single positive ball.
    pub fn ball(radius: f64) -> Self {
        RadialConfig { shells: vec![Shell { r_inner: 0.0, r_outer: radius, sign: 1 }] }
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev: f64 = 0.0;
        for (i, s) in self.shells.iter().enumerate() {
            if !(s.r_inner.is_finite() && s.r_outer.is_finite()) || s.r_inner < 0.0 || s.r_outer < s.r_inner {
                return Err(ScreenError::Precondition(format!("shell {i} has invalid radii ({}, {})", s.r_inner, s.r_outer)));
            }
            if s.sign != 1 && s.sign != -1 {
                return Err(ScreenError::Precondition(format!("shell {i} has sign {}, expected +1 or -1", s.sign)));
            }
            if s.r_inner < prev - 1e-14 * prev.max(1.0) {
                return Err(ScreenError::Precondition(format!("shell {i} overlaps or is out of order")));
            }
            prev = s.r_outer;
        }
        Ok(())
    }

    /// Shells of the given sign.
    pub fn with_sign(&self, sign: i8) -> impl Iterator<Item = &Shell> {
        self.shells.iter().filter(move |s| s.sign == sign)
    }

    /// Signed charge inside radius `r`.
    pub fn cumulative_charge(&self, r: f64) -> f64 {
        self.shells
            .iter()
            .map(|s| s.sign as f64 * 4.0 * PI / 3.0 * (r.clamp(s.r_inner, s.r_outer).powi(3) - s.r_inner.powi(3)))
            .sum()
    }

    /// Volume of the positive shells.
    pub fn positive_volume(&self) -> f64 {
        self.with_sign(1).map(|s| 4.0 * PI / 3.0 * (s.r_outer.powi(3) - s.r_inner.powi(3))).sum()
    }

    pub fn outer_radius(&self) -> f64 {
        self.shells.iter().map(|s| s.r_outer).fold(0.0, f64::max)
    }

    /// Potential of the net charge at radius `r`.
    pub fn potential(&self, r: f64) -> f64 {
        self.shells.iter().map(|s| s.sign as f64 * annulus_potential(s.r_inner, s.r_outer, r)).sum()
    }

    /// The positive shells as a centered domain.
    pub fn positive_domain(&self, center: Point) -> Result<DomainSpec> {
        let parts: Vec<DomainSpec> = self
            .with_sign(1)
            .filter(|s| s.r_outer > s.r_inner)
            .map(|s| if s.r_inner == 0.0 { DomainSpec::ball(center, s.r_outer) } else { DomainSpec::annulus(center, s.r_inner, s.r_outer) })
            .collect();
        match parts.len() {
            0 => Err(ScreenError::EmptyDomain),
            1 => Ok(parts.into_iter().next().unwrap()),
            _ => Ok(DomainSpec::union(parts)),
        }
    }
}

/// Self-energies plus signed pairwise interactions of all shells.
pub fn total_energy_closed_form(config: &RadialConfig) -> Result<f64> {
    config.validate()?;
    let s = &config.shells;
    let mut e = 0.0;
    for (i, a) in s.iter().enumerate() {
        e += annulus_self_energy(a.r_inner, a.r_outer)?;
        for b in &s[i + 1..] {
            let j = annuli_interaction_energy(a.r_inner, a.r_outer, b.r_inner, b.r_outer)?;
            e += 2.0 * (a.sign as f64) * (b.sign as f64) * j;
        }
    }
    Ok(e)
}

/// Optimal configuration for the positive annulus `C_{R₁,R₂}` (a ball when
/// `R₁ = 0`), choosing the branch by the critical ratio.
pub fn optimal_configuration(big_r1: f64, big_r2: f64) -> Result<RadialConfig> {
    check_radii(big_r1, big_r2)?;
    let plus = Shell { r_inner: big_r1, r_outer: big_r2, sign: 1 };
    let shells = if big_r1 > 0.0 && big_r2 / big_r1 < critical_ratio() {
        let (r1, r2) = optimal_bilayer(big_r1, big_r2)?;
        vec![Shell { r_inner: r1, r_outer: big_r1, sign: -1 }, plus, Shell { r_inner: big_r2, r_outer: r2, sign: -1 }]
    } else {
        let r = optimal_outer_only(big_r1, big_r2)?;
        let mut v = Vec::new();
        if big_r1 > 0.0 {
            v.push(Shell { r_inner: 0.0, r_outer: big_r1, sign: -1 });
        }
        v.push(plus);
        v.push(Shell { r_inner: big_r2, r_outer: r, sign: -1 });
        v
    };
    RadialConfig::new(shells)
}

/// Two balls of radius `r` centered at `±d/2·e₁` and the predicted negative
/// phase, the union of their separate optimal annuli.
pub fn two_ball_configuration(radius: f64, d: f64) -> Result<(DomainSpec, DomainSpec)> {
    if !(radius > 0.0) || !d.is_finite() {
        return Err(ScreenError::Precondition(format!("invalid radius {radius} or distance {d}")));
    }
    let outer = optimal_outer_only(0.0, radius)?;
    if d < 2.0 * outer * (1.0 - 1e-12) {
        return Err(ScreenError::Precondition(format!(
            "distance {d} is below 2·2^(1/3)·R = {}: the annuli would overlap",
            2.0 * outer
        )));
    }
    let c1 = [-0.5 * d, 0.0, 0.0];
    let c2 = [0.5 * d, 0.0, 0.0];
    let plus = DomainSpec::union(vec![DomainSpec::ball(c1, radius), DomainSpec::ball(c2, radius)]);
    let minus = DomainSpec::union(vec![DomainSpec::annulus(c1, radius, outer), DomainSpec::annulus(c2, radius, outer)]);
    Ok((plus, minus))
}

/// Piecewise-constant radial density on `nr` equal shells of `[0, rmax]`.
#[derive(Clone, Debug)]
pub struct RadialSolution {
    /// Shell edges, `nr + 1` values.
    pub edges: Vec<f64>,
    pub u: Vec<f64>,
    pub u_plus: Vec<f64>,
    /// Shell-averaged potential of the net charge.
    pub phi: Vec<f64>,
    pub energy: f64,
    pub mass: f64,
    pub upper: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

impl RadialSolution {
    pub fn midpoints(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `(inner, outer)` radii of each connected run of charged shells, placed
    /// so that the run's charge fills them at the full density `upper`.
    pub fn interfaces(&self) -> Vec<(f64, f64)> {
        let floor = 1e-6 * self.upper;
        let vol = |k: usize| self.edges[k + 1].powi(3) - self.edges[k].powi(3);
        let mut out = Vec::new();
        let mut k = 0;
        let n = self.u.len();
        while k < n {
            if self.u[k] <= floor {
                k += 1;
                continue;
            }
            let s = k;
            while k < n && self.u[k] > floor {
                k += 1;
            }
            let e = k; // exclusive
            let mid = (s + e) / 2;
            let below: f64 = (s..mid).map(|j| self.u[j] / self.upper * vol(j)).sum();
            let above: f64 = (mid..e).map(|j| self.u[j] / self.upper * vol(j)).sum();
            let base = self.edges[mid].powi(3);
            out.push(((base - below).max(0.0).cbrt(), (base + above).cbrt()));
        }
        out
    }
}

/// Shell-averaged potentials of a piecewise-constant density, exact for
/// that density. `vol3` holds `a_{k+1}³ − a_k³`, `sq` holds `a_{k+1}² − a_k²`
/// and `selfe` the unit-density self-energies.
struct RadialKernel {
    vol3: Vec<f64>,
    sq: Vec<f64>,
    selfe: Vec<f64>,
}

impl RadialKernel {
    fn new(edges: &[f64]) -> Result<Self> {
        let vol3 = edges.windows(2).map(|w| w[1].powi(3) - w[0].powi(3)).collect();
        let sq = edges.windows(2).map(|w| w[1] * w[1] - w[0] * w[0]).collect();
        let selfe = edges.windows(2).map(|w| annulus_self_energy(w[0], w[1])).collect::<Result<Vec<_>>>()?;
        Ok(RadialKernel { vol3, sq, selfe })
    }

    fn volume(&self, k: usize) -> f64 {
        4.0 * PI / 3.0 * self.vol3[k]
    }

    fn apply(&self, w: &[f64], out: &mut [f64]) {
        let n = w.len();
        // outer shells see a constant potential from inner charge and vice versa
        let mut suffix = 0.0;
        for k in (0..n).rev() {
            out[k] = suffix;
            suffix += 0.5 * w[k] * self.sq[k];
        }
        let mut inner = 0.0;
        for k in 0..n {
            let vk = self.volume(k);
            out[k] += inner * 0.5 * self.sq[k] / vk + w[k] * self.selfe[k] / vk;
            inner += w[k] * vk;
        }
    }

    fn energy(&self, w: &[f64], phi: &[f64]) -> f64 {
        w.iter().zip(phi).enumerate().map(|(k, (a, p))| a * p * self.volume(k)).sum()
    }
}

/// One-dimensional projected-gradient minimizer of the relaxed energy for a
/// concentric positive configuration, density bounded by one.
pub fn radial_relaxed_solve(omega_plus: &RadialConfig, lambda: f64, nr: usize, rmax: f64, cfg: &SolveConfig) -> Result<RadialSolution> {
    radial_relaxed_solve_capped(omega_plus, lambda, nr, rmax, cfg, 1.0)
}

/// [`radial_relaxed_solve`] with density cap `upper`.
pub fn radial_relaxed_solve_capped(
    omega_plus: &RadialConfig,
    lambda: f64,
    nr: usize,
    rmax: f64,
    cfg: &SolveConfig,
    upper: f64,
) -> Result<RadialSolution> {
    omega_plus.validate()?;
    cfg.validate()?;
    if nr < 4 {
        return Err(ScreenError::Precondition(format!("need at least 4 radial shells, got {nr}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(ScreenError::Precondition(format!("lambda must be nonnegative, got {lambda}")));
    }
    if !(upper > 0.0) || !upper.is_finite() {
        return Err(ScreenError::Precondition(format!("density cap must be positive, got {upper}")));
    }
    let m = omega_plus.positive_volume();
    let bound = omega_plus.outer_radius() + 2.0 * m.cbrt();
    if !(rmax >= bound) {
        return Err(ScreenError::Precondition(format!("rmax {rmax} is inside the support bound {bound}")));
    }
    let edges: Vec<f64> = (0..=nr).map(|k| rmax * k as f64 / nr as f64).collect();
    let kernel = RadialKernel::new(&edges)?;
    let u_plus: Vec<f64> = (0..nr)
        .map(|k| {
            let (a, b) = (edges[k], edges[k + 1]);
            let inside: f64 = omega_plus
                .with_sign(1)
                .map(|s| b.clamp(s.r_inner, s.r_outer).powi(3) - a.clamp(s.r_inner, s.r_outer).powi(3))
                .sum();
            (inside / kernel.vol3[k]).clamp(0.0, 1.0)
        })
        .collect();
    // a shell cut by ∂Ω⁺ can hold negative charge on its free part only
    let caps: Vec<f64> = u_plus.iter().map(|&p| (1.0 - p) * upper).collect();
    let weights: Vec<f64> = (0..nr).map(|k| kernel.volume(k)).collect();

    let pg = run_projected_gradient(
        vec![0.0; nr],
        &u_plus,
        |w| {
            let mut out = vec![0.0; w.len()];
            kernel.apply(w, &mut out);
            Ok(out)
        },
        |w, phi| kernel.energy(w, phi),
        |v| project_weighted(v, &caps, &weights, Some(lambda)),
        cfg,
    )?;
    let PgOutcome { u, phi, energy, converged, iterations, residual, .. } = pg;
    let mass = u.iter().zip(&weights).map(|(a, b)| a * b).sum();
    Ok(RadialSolution { edges, u, u_plus, phi, energy, mass, upper, converged, iterations, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newtonian::radial_potential_with_breaks;
    use proptest::prelude::*;

    const RSTAR: f64 = 1.849_678_069_036_568;

    #[test]
    fn critical_ratio_is_the_frozen_root() {
        let r = critical_ratio();
        assert!(critical_ratio_residual(r).abs() <= 1e-10);
        assert!((r - RSTAR).abs() < 1e-11, "{r}");
        assert!(critical_ratio_residual(1.2) < 0.0);
        assert!(critical_ratio_residual(2.0) > 0.0);
    }

    #[test]
    fn bilayer_for_ratio_three_halves() {
        let (r1, r2) = optimal_bilayer(1.0, 1.5).unwrap();
        let [f, g] = bilayer_residuals(1.0, 1.5, r1, r2);
        assert!(f.abs() <= 1e-10 && g.abs() <= 1e-10);
        assert!(0.0 < r1 && r1 < 1.0 && r2 > 1.5);
        assert!((r1 - 0.663_713_537_219_491).abs() < 1e-10, "{r1}");
        assert!((r2 - 1.714_793_182_715_749).abs() < 1e-10, "{r2}");
    }

    #[test]
    fn bilayer_degenerates_at_the_critical_ratio() {
        let (r1, _) = optimal_bilayer(1.0, RSTAR * (1.0 - 1e-9)).unwrap();
        assert!(r1 < 1e-2, "{r1}");
        let err = optimal_bilayer(1.0, 2.2).unwrap_err().to_string();
        assert!(err.contains("optimal_outer_only"));
    }

    #[test]
    fn outer_only_branch() {
        let r = optimal_outer_only(0.0, 1.3).unwrap();
        assert!((r - 2f64.cbrt() * 1.3).abs() < 1e-14);
        let (a, b) = (1.0, 2.2);
        let r = optimal_outer_only(a, b).unwrap();
        assert!(((a * a * a) + (r.powi(3) - b.powi(3)) - (b.powi(3) - a.powi(3))).abs() < 1e-12);
        assert!(optimal_outer_only(1.0, 1.5).is_err());
    }

    #[test]
    fn branch_energies_agree_at_threshold() {
        let ratio = RSTAR * (1.0 - 1e-10);
        let bi = optimal_configuration(1.0, ratio).unwrap();
        let r = (2.0 * (ratio.powi(3) - 1.0)).cbrt();
        let outer = RadialConfig::new(vec![
            Shell { r_inner: 0.0, r_outer: 1.0, sign: -1 },
            Shell { r_inner: 1.0, r_outer: ratio, sign: 1 },
            Shell { r_inner: ratio, r_outer: r, sign: -1 },
        ])
        .unwrap();
        let (eb, eo) = (total_energy_closed_form(&bi).unwrap(), total_energy_closed_form(&outer).unwrap());
        assert!((eb - eo).abs() <= 1e-8, "{eb} {eo}");
    }

    #[test]
    fn ball_energy_assembly() {
        let ball = RadialConfig::ball(1.0);
        let e0 = total_energy_closed_form(&ball).unwrap();
        assert!((e0 - 8.0 * PI / 15.0).abs() < 1e-15);
        let opt = optimal_configuration(0.0, 1.0).unwrap();
        let e = total_energy_closed_form(&opt).unwrap();
        let c = 2f64.cbrt();
        let direct = 8.0 * PI / 15.0 + annulus_self_energy(1.0, c).unwrap() - 2.0 * annuli_interaction_energy(0.0, 1.0, 1.0, c).unwrap();
        assert!((e - direct).abs() < 1e-14);
        assert!(e < e0);
        let padded = RadialConfig::new(vec![Shell { r_inner: 0.0, r_outer: 1.0, sign: 1 }, Shell { r_inner: 2.0, r_outer: 2.0, sign: -1 }]).unwrap();
        assert!((total_energy_closed_form(&padded).unwrap() - e0).abs() < 1e-15);
    }

    #[test]
    fn optimal_potentials_vanish_off_the_support() {
        for (a, b) in [(0.0, 1.0), (1.0, 1.5), (1.0, 2.2)] {
            let cfg = optimal_configuration(a, b).unwrap();
            let breaks: Vec<f64> = cfg.shells.iter().flat_map(|s| [s.r_inner, s.r_outer]).collect();
            let outer = cfg.outer_radius();
            for r in [outer, outer * 1.3, outer * 3.0] {
                let q = |s: f64| cfg.cumulative_charge(s);
                let v = radial_potential_with_breaks(q, r, outer, &breaks).unwrap();
                assert!(v.abs() <= 1e-8, "({a},{b}) r={r}: {v}");
            }
            if a > 0.0 && b / a < RSTAR {
                let r1 = cfg.shells[0].r_inner;
                for r in [0.0, 0.5 * r1, r1] {
                    let q = |s: f64| cfg.cumulative_charge(s);
                    let v = radial_potential_with_breaks(q, r, outer, &breaks).unwrap();
                    assert!(v.abs() <= 1e-8, "inner r={r}: {v}");
                }
            }
        }
    }

    #[test]
    fn center_potential_of_outer_only_branch() {
        for ratio in [1.3, 1.7, RSTAR, 2.2, 3.0] {
            let r = (2.0 * (ratio.powi(3) - 1.0)).cbrt();
            let cfg = RadialConfig::new(vec![
                Shell { r_inner: 0.0, r_outer: 1.0, sign: -1 },
                Shell { r_inner: 1.0, r_outer: ratio, sign: 1 },
                Shell { r_inner: ratio, r_outer: r, sign: -1 },
            ])
            .unwrap();
            let q = |s: f64| cfg.cumulative_charge(s);
            let v = radial_potential_with_breaks(q, 0.0, r, &[1.0, ratio]).unwrap();
            assert!((v - outer_only_center_potential(ratio)).abs() < 1e-8);
            assert_eq!(outer_only_center_potential(ratio) >= -1e-12, ratio >= RSTAR * (1.0 - 1e-12));
        }
    }

    #[test]
    fn perturbed_radii_cost_energy() {
        for (a, b) in [(0.0, 1.0), (1.0, 1.5), (1.0, 2.2)] {
            let opt = optimal_configuration(a, b).unwrap();
            let e = total_energy_closed_form(&opt).unwrap();
            for idx in 0..opt.shells.len() {
                for field in 0..2 {
                    for d in [-1e-3, 1e-3] {
                        let mut p = opt.clone();
                        let s = &mut p.shells[idx];
                        if s.sign == 1 {
                            continue;
                        }
                        if field == 0 {
                            s.r_inner += d;
                        } else {
                            s.r_outer += d;
                        }
                        if p.validate().is_err() {
                            continue;
                        }
                        assert!(total_energy_closed_form(&p).unwrap() >= e - 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn two_ball_geometry() {
        let c = 2f64.cbrt();
        let (_, minus) = two_ball_configuration(1.0, 2.0 * c).unwrap();
        if let DomainSpec::UnionOf { parts } = &minus {
            let (lo0, hi0) = parts[0].bounding_box().unwrap();
            let (lo1, _) = parts[1].bounding_box().unwrap();
            assert!(hi0[0].abs() < 1e-14 && lo1[0].abs() < 1e-14 && lo0[0] < 0.0);
        } else {
            panic!("expected a union");
        }
        assert!(two_ball_configuration(1.0, 2.0).is_err());
        let (_, far) = two_ball_configuration(1.0, 10.0).unwrap();
        assert!(far.exact_volume().is_some());
        // superposed screened fields vanish outside both annuli
        let single = optimal_configuration(0.0, 1.0).unwrap();
        for p in [[0.0, 0.0, 0.0], [0.0, 3.0, 0.0], [5.0, 1.0, -2.0]] {
            let v: f64 = [-c, c].iter().map(|&x0| single.potential(((p[0] - x0).powi(2) + p[1] * p[1] + p[2] * p[2]).sqrt())).sum();
            assert!(v.abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn radial_ball_solve_finds_the_annulus() {
        let cfg = SolveConfig { max_iters: 200_000, tol_residual: 1e-10, ..SolveConfig::default() };
        let ball = RadialConfig::ball(1.0);
        let m = ball.positive_volume();
        let nr = 4096;
        let rmax = 1.0 + 2.0 * m.cbrt() + 0.05;
        let sol = radial_relaxed_solve(&ball, m, nr, rmax, &cfg).unwrap();
        let ifs = sol.interfaces();
        assert_eq!(ifs.len(), 1, "{ifs:?}");
        let (a, b) = ifs[0];
        let tol = 2.0 * rmax / nr as f64;
        assert!((a - 1.0).abs() < tol && (b - 2f64.cbrt()).abs() < tol, "{a} {b}");
        assert!((sol.mass - m).abs() < 1e-3 * m);
        let exact = total_energy_closed_form(&optimal_configuration(0.0, 1.0).unwrap()).unwrap();
        assert!((sol.energy - exact).abs() < 1e-3 * exact, "{} {exact}", sol.energy);
    }

    #[test]
    fn radial_annulus_solve_matches_bilayer() {
        let cfg = SolveConfig { max_iters: 200_000, tol_residual: 1e-10, ..SolveConfig::default() };
        let plus = RadialConfig::new(vec![Shell { r_inner: 1.0, r_outer: 1.5, sign: 1 }]).unwrap();
        let m = plus.positive_volume();
        let nr = 2048;
        let rmax = 1.5 + 2.0 * m.cbrt();
        let sol = radial_relaxed_solve(&plus, m, nr, rmax, &cfg).unwrap();
        let (r1, r2) = optimal_bilayer(1.0, 1.5).unwrap();
        let ifs = sol.interfaces();
        let tol = 2.0 * rmax / nr as f64;
        assert_eq!(ifs.len(), 2, "{ifs:?}");
        assert!((ifs[0].0 - r1).abs() < tol && (ifs[1].1 - r2).abs() < tol, "{ifs:?} vs {r1} {r2}");
    }

    #[test]
    fn radial_zero_lambda_is_empty() {
        let ball = RadialConfig::ball(1.0);
        let sol = radial_relaxed_solve(&ball, 0.0, 64, 6.4, &SolveConfig::default()).unwrap();
        assert!(sol.u.iter().all(|&x| x == 0.0));
        assert!((sol.energy - 8.0 * PI / 15.0).abs() < 1e-12);
        assert!(radial_relaxed_solve(&ball, 1.0, 64, 2.0, &SolveConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn bilayer_scales_linearly(ratio in 1.05f64..1.84, alpha in 0.1f64..10.0) {
            let (a, b) = optimal_bilayer(1.0, ratio).unwrap();
            let (c, d) = optimal_bilayer(alpha, alpha * ratio).unwrap();
            prop_assert!((c - alpha * a).abs() <= 1e-9 * alpha);
            prop_assert!((d - alpha * b).abs() <= 1e-9 * alpha);
            let [f, g] = bilayer_residuals(1.0, ratio, a, b);
            prop_assert!(f.abs() <= 1e-10 && g.abs() <= 1e-10);
            // neutrality of the shell volumes
            let neg = (1.0 - a.powi(3)) + (b.powi(3) - ratio.powi(3));
            prop_assert!((neg - (ratio.powi(3) - 1.0)).abs() <= 1e-10);
        }
    }
}
