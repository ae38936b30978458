//! Physics checks against independent references: the exterior series
//! solution for a conducting cylinder, the point-matching boundary
//! condition, and the noise model calibration.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::datagen::{add_awgn, place_receivers, SNR_SWEEP_DB};
use crate::em::{
    assemble, incident_field, quadrature, received_vector, solve_currents, total_field, BasisLayout, PhysicsConstants,
    TransmitterConfig,
};
use crate::error::Result;
use crate::geometry::{scene_random_shapes, DoiConfig, Point, Scene, ShapePrimitive};

/// Relative L2 error allowed between the moment solution and the series.
pub const CYLINDER_TOLERANCE: f64 = 0.05;
/// Allowed `max |E(s_i)| / max |E_t(s_i)|` at the collocation points.
pub const COLLOCATION_TOLERANCE: f64 = 1e-8;
/// Allowed ratio of mean total to mean incident magnitude at points halfway
/// between neighboring collocation points.
pub const MIDPOINT_TOLERANCE: f64 = 0.1;
/// Allowed deviation of the measured SNR, dB.
pub const SNR_TOLERANCE_DB: f64 = 0.1;

/// Integer-order Bessel functions evaluated from their integral
/// representations; deliberately shares no code with `specfun`.
pub mod series {
    use super::*;

    /// Composite 32-point Gauss-Legendre over `[a, b]` in `panels` pieces.
    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let rule = quadrature::gauss_legendre(32);
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                acc += w * f(mid + 0.5 * h * x);
            }
        }
        0.5 * h * acc
    }

    /// `J_n(x) = (1 / 2 pi) int_0^{2 pi} cos(n t - x sin t) dt`; the
    /// trapezoid rule on a periodic integrand converges geometrically.
    pub fn bessel_jn(n: i64, x: f64) -> f64 {
        let m = 4 * (x.abs() as usize + n.unsigned_abs() as usize) + 64;
        let s: f64 = (0..m)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / m as f64;
                (n as f64 * t - x * t.sin()).cos()
            })
            .sum();
        s / m as f64
    }

    /// `Y_n(x) = (1/pi) int_0^pi sin(x sin t - n t) dt
    ///         - (1/pi) int_0^inf (e^{n u} + (-1)^n e^{-n u}) e^{-x sinh u} du`, `x > 0`.
    fn bessel_yn_integral(n: i64, x: f64) -> f64 {
        let nf = n as f64;
        let panels = 8 + x as usize;
        let first = integrate(|t| (x * t.sin() - nf * t).sin(), 0.0, PI, panels);
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        // the tail integrand is below e^-745 beyond this point
        let upper = (760.0 / x).asinh() + 1.0;
        let second = integrate(|u| ((nf * u).exp() + sign * (-nf * u).exp()) * (-x * u.sinh()).exp(), 0.0, upper, 64);
        (first - second) / PI
    }

    /// `Y_0 .. Y_nmax` at `x` by upward recurrence, which is stable for `Y`.
    pub fn bessel_y_all(nmax: usize, x: f64) -> Vec<f64> {
        let mut y = vec![bessel_yn_integral(0, x), bessel_yn_integral(1, x)];
        for n in 1..nmax {
            let next = 2.0 * n as f64 / x * y[n] - y[n - 1];
            y.push(next);
        }
        y.truncate(nmax + 1);
        y
    }

    /// `H_n^(2)(x) = J_n(x) - j Y_n(x)` for `n = 0..=nmax`.
    pub fn hankel2_all(nmax: usize, x: f64) -> Vec<Complex64> {
        bessel_y_all(nmax, x).into_iter().enumerate().map(|(n, y)| Complex64::new(bessel_jn(n as i64, x), -y)).collect()
    }

    /// Total field outside a perfectly conducting cylinder of radius `a` at
    /// the origin under an arbitrary incident field.
    ///
    /// The incident field on `r = a` is expanded as `sum c_n e^{j n phi}`;
    /// the scattered field `-sum c_n H_n(k r) / H_n(k a) e^{j n phi}`
    /// cancels it on the surface and radiates outward.
    pub fn cylinder_total_field(
        points: &[Point],
        a: f64,
        tx: &TransmitterConfig,
        c: &PhysicsConstants,
    ) -> Result<Vec<Complex64>> {
        let k = c.wavenumber;
        let nmax = (k * a) as usize + 40;
        let m = 4 * nmax;
        let boundary: Vec<Complex64> = (0..m)
            .map(|i| {
                let (s, co) = (2.0 * PI * i as f64 / m as f64).sin_cos();
                incident_field(Point::new(a * co, a * s), tx, c)
            })
            .collect::<Result<_>>()?;
        let coeff = |n: i64| -> Complex64 {
            boundary
                .iter()
                .enumerate()
                .map(|(i, &e)| e * Complex64::from_polar(1.0, -(n as f64) * 2.0 * PI * i as f64 / m as f64))
                .sum::<Complex64>()
                / m as f64
        };
        let coeffs: Vec<(Complex64, Complex64)> = (0..=nmax as i64).map(|n| (coeff(n), coeff(-n))).collect();
        let h_a = hankel2_all(nmax, k * a);
        points
            .iter()
            .map(|&p| {
                let r = p.norm();
                let phi = p.y.atan2(p.x);
                let h_r = hankel2_all(nmax, k * r);
                let mut scattered = Complex64::new(0.0, 0.0);
                for (n, &(cp, cm)) in coeffs.iter().enumerate() {
                    let ratio = h_r[n] / h_a[n];
                    let e = Complex64::from_polar(1.0, n as f64 * phi);
                    scattered -= ratio * if n == 0 { cp } else { cp * e + cm * e.conj() };
                }
                Ok(incident_field(p, tx, c)? + scattered)
            })
            .collect()
    }
}

fn relative_l2(got: &[Complex64], want: &[Complex64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
    (num / den).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderCase {
    /// Lattice pitch, meters.
    pub pitch: f64,
    pub unknowns: usize,
    /// Relative L2 error of the total field at the receivers.
    pub total_error: f64,
    /// Relative L2 error of the scattered part alone.
    pub scattered_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderReport {
    pub wavelength: f64,
    pub diameter: f64,
    pub receivers: usize,
    pub cases: Vec<CylinderCase>,
    pub passed: bool,
}

/// Moment solution for a filled disc of `diameter` sampled at `pitch`,
/// compared with the series at `receivers` points on the domain boundary.
pub fn cylinder_case(
    wavelength: f64,
    diameter: f64,
    pitch: f64,
    receivers: usize,
    tx: TransmitterConfig,
) -> Result<CylinderCase> {
    let doi = DoiConfig::new(wavelength).with_sample_resolution(pitch);
    let c = PhysicsConstants::new(wavelength);
    let scene = Scene::from_shapes(doi, vec![ShapePrimitive::Disc { center: Point::ORIGIN, diameter }])?;
    let op = assemble(BasisLayout::from_scene(&scene)?, c)?;
    let sol = solve_currents(&op, &tx)?;
    let rx = place_receivers(receivers, doi.radius, tx)?;
    let got = received_vector(&op, &sol, &tx, &rx)?;
    let want = series::cylinder_total_field(&rx.positions, 0.5 * diameter, &tx, &c)?;
    let incident: Vec<Complex64> = rx.positions.iter().map(|&p| incident_field(p, &tx, &c)).collect::<Result<_>>()?;
    let sub = |v: &[Complex64]| -> Vec<Complex64> { v.iter().zip(&incident).map(|(a, b)| a - b).collect() };
    Ok(CylinderCase {
        pitch,
        unknowns: scene.len(),
        total_error: relative_l2(&got, &want),
        scattered_error: relative_l2(&sub(&got), &sub(&want)),
    })
}

/// Disc of diameter 2 wavelengths at pitches `wavelength / 20` and
/// `wavelength / 40`; passes when the coarse error is within tolerance and
/// the fine one is strictly smaller.
pub fn cylinder(wavelength: f64, tx: TransmitterConfig) -> Result<CylinderReport> {
    let diameter = 2.0 * wavelength;
    let receivers = 64;
    let cases = [20.0, 40.0]
        .into_iter()
        .map(|d| cylinder_case(wavelength, diameter, wavelength / d, receivers, tx))
        .collect::<Result<Vec<_>>>()?;
    let passed = cases[0].total_error <= CYLINDER_TOLERANCE && cases[1].total_error < cases[0].total_error;
    Ok(CylinderReport { wavelength, diameter, receivers, cases, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualScene {
    pub seed: u64,
    pub unknowns: usize,
    pub collocation_residual: f64,
    pub midpoints: usize,
    pub midpoint_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub scenes: Vec<ResidualScene>,
    pub max_collocation_residual: f64,
    pub max_midpoint_ratio: f64,
    pub passed: bool,
}

/// Points halfway between lattice neighbors (one pitch apart).
fn neighbor_midpoints(points: &[Point], pitch: f64) -> Vec<Point> {
    let mut out = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        for &q in &points[i + 1..] {
            if (p.dist(q) - pitch).abs() <= 1e-6 * pitch {
                out.push(p.midpoint(q));
            }
        }
    }
    out
}

/// Boundary-condition quality on one solved scene.
pub fn residual_scene(scene: &Scene, seed: u64, tx: &TransmitterConfig) -> Result<ResidualScene> {
    let c = PhysicsConstants::new(scene.doi.wavelength);
    let op = assemble(BasisLayout::from_scene(scene)?, c)?;
    let sol = solve_currents(&op, tx)?;
    let mut worst_total = 0.0f64;
    let mut worst_incident = 0.0f64;
    let ma = op.apply(&sol.coefficients);
    for (&p, m) in scene.points.iter().zip(&ma) {
        let e_t = incident_field(p, tx, &c)?;
        worst_total = worst_total.max((m + e_t).norm());
        worst_incident = worst_incident.max(e_t.norm());
    }
    let mids = neighbor_midpoints(&scene.points, scene.doi.sample_resolution);
    let (mut sum_total, mut sum_incident) = (0.0, 0.0);
    for &p in &mids {
        sum_total += total_field(p, &op, &sol, tx)?.norm();
        sum_incident += incident_field(p, tx, &c)?.norm();
    }
    Ok(ResidualScene {
        seed,
        unknowns: scene.len(),
        collocation_residual: worst_total / worst_incident,
        midpoints: mids.len(),
        midpoint_ratio: if mids.is_empty() { 0.0 } else { sum_total / sum_incident },
    })
}

/// [`residual_scene`] over `count` SHAPES scenes sampled at `wavelength / 20`.
pub fn residual(wavelength: f64, count: usize, first_seed: u64) -> Result<ResidualReport> {
    let doi = DoiConfig::new(wavelength);
    let tx = TransmitterConfig::standard(wavelength);
    let scenes = (first_seed..first_seed + count as u64)
        .map(|seed| residual_scene(&scene_random_shapes(seed, &doi)?, seed, &tx))
        .collect::<Result<Vec<_>>>()?;
    let max_collocation_residual = scenes.iter().map(|s| s.collocation_residual).fold(0.0, f64::max);
    let max_midpoint_ratio = scenes.iter().map(|s| s.midpoint_ratio).fold(0.0, f64::max);
    Ok(ResidualReport {
        passed: max_collocation_residual <= COLLOCATION_TOLERANCE && max_midpoint_ratio <= MIDPOINT_TOLERANCE,
        scenes,
        max_collocation_residual,
        max_midpoint_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub target_db: f64,
    pub measured_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub draws: usize,
    pub levels: Vec<NoiseLevel>,
    pub passed: bool,
}

/// Measures the SNR of [`add_awgn`] at every sweep level over `draws` noise
/// realizations of the received vector of a SHAPES scene.
pub fn noise(wavelength: f64, draws: usize, seed: u64) -> Result<NoiseReport> {
    let doi = DoiConfig::new(wavelength);
    let tx = TransmitterConfig::standard(wavelength);
    let c = PhysicsConstants::new(wavelength);
    let scene = scene_random_shapes(seed, &doi)?;
    let op = assemble(BasisLayout::from_scene(&scene)?, c)?;
    let sol = solve_currents(&op, &tx)?;
    let rx = place_receivers(64, doi.radius, tx)?;
    let e = received_vector(&op, &sol, &tx, &rx)?;

    let mut levels = Vec::new();
    for target_db in SNR_SWEEP_DB {
        let (mut signal, mut noise) = (0.0, 0.0);
        for d in 0..draws {
            let noisy = add_awgn(&e, target_db, seed.wrapping_mul(1_000_003).wrapping_add(d as u64));
            signal += e.iter().map(|v| v.norm_sqr()).sum::<f64>();
            noise += e.iter().zip(&noisy).map(|(a, b)| (b - a).norm_sqr()).sum::<f64>();
        }
        levels.push(NoiseLevel { target_db, measured_db: 10.0 * (signal / noise).log10() });
    }
    let passed = levels.iter().all(|l| (l.measured_db - l.target_db).abs() <= SNR_TOLERANCE_DB);
    Ok(NoiseReport { draws, levels, passed })
}
