//! TM_z forward scattering from perfectly conducting scatterers by point
//! matching with square pulse bases.
//!
//! The total field at `p` is the incident field plus the radiation of the
//! induced currents, `E(p) = E_t(p) + sum_n a_n int_cell_n G(p, s) ds`, with
//! `G(p, s) = -(j/4) H0^(2)(k0 |p - s|)`. Enforcing `E = 0` at every pulse
//! center gives the moment system `M a = -E_t`.

mod operator;
pub(crate) mod quadrature;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::specfun::{self, ComplexScalar};

pub use operator::{
    assemble, assemble_sequential, received_vector, render_field_grid, scattered_field, solve_currents, total_field,
    BasisLayout, CurrentSolution, ForwardOperator,
};

/// Relative slack on the rule boundaries of [`cell_integral`]: observation
/// points within this fraction of the pulse width of a center use the self
/// term, and lattice distances that land exactly on a threshold (three
/// widths, a cell edge) pick the same rule however they were rounded.
const RULE_SLACK: f64 = 1e-9;
/// Beyond this many pulse widths a cell integral is a single midpoint sample.
pub const FAR_CELL_WIDTHS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConstants {
    /// Meters.
    pub wavelength: f64,
    /// `2 pi / wavelength`, rad/m.
    pub wavenumber: f64,
    /// Incident amplitude `E0` (arbitrary units).
    pub amplitude: f64,
}

impl PhysicsConstants {
    pub fn new(wavelength: f64) -> Self {
        PhysicsConstants { wavelength, wavenumber: 2.0 * PI / wavelength, amplitude: 1.0 }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Wave vector of magnitude `k0` pointing from the transmitter toward the
    /// origin (along +x if the transmitter sits at the origin).
    pub fn wave_vector(&self, tx: &TransmitterConfig) -> Point {
        let n = tx.position.norm();
        if n == 0.0 {
            return Point::new(self.wavenumber, 0.0);
        }
        Point::new(-self.wavenumber * tx.position.x / n, -self.wavenumber * tx.position.y / n)
    }
}

/// Radiation pattern of the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// `E0 exp(-j k.(p - p_t)) / (4 pi |p - p_t|)`: the dataset excitation.
    #[default]
    Beam,
    /// `E0 G(p, p_t)`: an ideal line source, used for reciprocity checks and
    /// the classical cylinder series.
    LineSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmitterConfig {
    pub position: Point,
    #[serde(default)]
    pub kind: SourceKind,
}

impl TransmitterConfig {
    pub fn new(position: Point) -> Self {
        TransmitterConfig { position, kind: SourceKind::Beam }
    }

    /// Beam source on the +x axis at twenty wavelengths.
    pub fn standard(wavelength: f64) -> Self {
        TransmitterConfig::new(Point::new(20.0 * wavelength, 0.0))
    }

    pub fn line_source(position: Point) -> Self {
        TransmitterConfig { position, kind: SourceKind::LineSource }
    }

    pub fn validate(&self, domain_radius: f64) -> Result<()> {
        if self.position.norm() > domain_radius {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "transmitter at {:?} must lie outside the domain of radius {domain_radius}",
                self.position
            )))
        }
    }
}

/// Field radiated by the transmitter alone.
pub fn incident_field(p: Point, tx: &TransmitterConfig, c: &PhysicsConstants) -> Result<ComplexScalar> {
    let d = p - tx.position;
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::SingularPoint { x: p.x, y: p.y });
    }
    Ok(match tx.kind {
        SourceKind::Beam => {
            let k = c.wave_vector(tx);
            let phase = -(k.x * d.x + k.y * d.y);
            Complex64::from_polar(c.amplitude / (4.0 * PI * r), phase)
        }
        SourceKind::LineSource => c.amplitude * greens_at(r, c),
    })
}

/// `G(p, s) = -(j/4) H0^(2)(k0 |p - s|)`.
pub fn greens(p: Point, s: Point, c: &PhysicsConstants) -> Result<ComplexScalar> {
    let r = p.dist(s);
    if r == 0.0 {
        return Err(Error::SingularPoint { x: p.x, y: p.y });
    }
    Ok(greens_at(r, c))
}

/// `G` at distance `r > 0`.
#[inline]
pub(crate) fn greens_at(r: f64, c: &PhysicsConstants) -> ComplexScalar {
    let (j0, y0) = specfun::order0(c.wavenumber * r);
    Complex64::new(-0.25 * y0, -0.25 * j0)
}

/// Integral of `G` over the equivalent-area disc of radius `w / sqrt(pi)`
/// centered on the observation point:
/// `-(j/4) [ (2 pi a / k0) H1^(2)(k0 a) - 4j / k0^2 ]`.
pub fn self_term(pulse_width: f64, c: &PhysicsConstants) -> ComplexScalar {
    let a = pulse_width / PI.sqrt();
    let k = c.wavenumber;
    let h1 = specfun::hankel2_1_unchecked(k * a);
    let bracket = h1 * (2.0 * PI * a / k) - Complex64::new(0.0, 4.0 / (k * k));
    Complex64::new(0.0, -0.25) * bracket
}

/// `int_cell G(observation, s) ds` over the square of side `pulse_width`
/// centered at `cell_center`.
///
/// * observation at the center: [`self_term`];
/// * observation elsewhere inside the closed cell: the cell is split at the
///   observation point and each piece integrated with a singularity-removing
///   (Duffy) map;
/// * center farther than three widths: midpoint rule `G(obs, center) w^2`;
/// * otherwise: 5x5 tensor Gauss-Legendre.
pub fn cell_integral(observation: Point, cell_center: Point, pulse_width: f64, c: &PhysicsConstants) -> ComplexScalar {
    let d = observation - cell_center;
    let r = d.norm();
    let w = pulse_width;
    if r <= RULE_SLACK * w {
        return self_term(w, c);
    }
    let h = 0.5 * w;
    let edge = h + RULE_SLACK * w;
    if d.x.abs() <= edge && d.y.abs() <= edge {
        return split_cell(d, h, c);
    }
    if r > (FAR_CELL_WIDTHS + RULE_SLACK) * w {
        return greens_at(r, c) * (w * w);
    }
    gauss_cell(d, h, c)
}

/// 5x5 Gauss-Legendre over the cell; `d` is observation minus center.
pub(crate) fn gauss_cell(d: Point, half: f64, c: &PhysicsConstants) -> ComplexScalar {
    let rule = quadrature::gl5();
    let mut acc = Complex64::new(0.0, 0.0);
    for (&xi, &wi) in rule.nodes.iter().zip(&rule.weights) {
        let dx = d.x - half * xi;
        for (&yj, &wj) in rule.nodes.iter().zip(&rule.weights) {
            let dy = d.y - half * yj;
            acc += greens_at(dx.hypot(dy), c) * (wi * wj);
        }
    }
    acc * (half * half)
}

/// Observation inside the closed cell but off center.
fn split_cell(d: Point, half: f64, c: &PhysicsConstants) -> ComplexScalar {
    // offsets from the observation point to the cell edges
    let xs = [half + d.x, half - d.x];
    let ys = [half + d.y, half - d.y];
    let mut acc = Complex64::new(0.0, 0.0);
    for &a in &xs {
        for &b in &ys {
            if a > 0.0 && b > 0.0 {
                acc += corner_rectangle(a, b, c);
            }
        }
    }
    acc
}

/// Integral of the radial kernel over `[0, a] x [0, b]` with the singularity
/// at the origin corner: two triangles, each mapped from the unit square with
/// `s = t^2 (P1 + v (P2 - P1))`, which leaves a smooth integrand.
fn corner_rectangle(a: f64, b: f64, c: &PhysicsConstants) -> ComplexScalar {
    let rule = quadrature::gl16();
    let mut acc = Complex64::new(0.0, 0.0);
    // triangle O,(a,0),(a,b) then O,(a,b),(0,b); both have |P1 x P2| = a b
    for (p1, p2) in [((a, 0.0), (a, b)), ((a, b), (0.0, b))] {
        for (&vn, &vw) in rule.nodes.iter().zip(&rule.weights) {
            let v = 0.5 * (vn + 1.0);
            let ex = p1.0 + v * (p2.0 - p1.0);
            let ey = p1.1 + v * (p2.1 - p1.1);
            let len = ex.hypot(ey);
            for (&tn, &tw) in rule.nodes.iter().zip(&rule.weights) {
                let t = 0.5 * (tn + 1.0);
                let t2 = t * t;
                // du u G(u L) with u = t^2 -> 2 t^3 G(t^2 L) dt
                acc += greens_at(t2 * len, c) * (2.0 * t2 * t * vw * tw * 0.25);
            }
        }
    }
    acc * (a * b)
}
