use std::collections::HashMap;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::lu::partial_pivoting::{factor, solve};
use faer::perm::Perm;
use faer::{Mat, Par};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{cell_integral, incident_field, self_term, PhysicsConstants, TransmitterConfig};
use crate::datagen::ReceiverArray;
use crate::error::{Error, Result};
use crate::geometry::{ImageRaster, Point, Scene};
use crate::specfun::ComplexScalar;

/// Largest acceptable ratio between the biggest and smallest LU pivots.
const MAX_PIVOT_RATIO: f64 = 1e14;

/// Square pulses of a common width centered on the collocation points.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisLayout {
    centers: Vec<Point>,
    pulse_width: f64,
}

impl BasisLayout {
    /// Fails if two pulse supports overlap (center spacing below one width
    /// along both axes).
    pub fn new(centers: Vec<Point>, pulse_width: f64) -> Result<Self> {
        if !(pulse_width > 0.0 && pulse_width.is_finite()) {
            return Err(Error::Config(format!("pulse width must be positive, got {pulse_width}")));
        }
        let limit = pulse_width * (1.0 - 1e-9);
        let key = |p: &Point| ((p.x / pulse_width).floor() as i64, (p.y / pulse_width).floor() as i64);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in centers.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::Geometry(format!("pulse center {i} is not finite")));
            }
            let (bx, by) = key(p);
            for nx in bx - 1..=bx + 1 {
                for ny in by - 1..=by + 1 {
                    for &j in buckets.get(&(nx, ny)).into_iter().flatten() {
                        let q = centers[j];
                        if (p.x - q.x).abs() < limit && (p.y - q.y).abs() < limit {
                            return Err(Error::Geometry(format!("pulses {j} and {i} overlap")));
                        }
                    }
                }
            }
            buckets.entry((bx, by)).or_default().push(i);
        }
        Ok(BasisLayout { centers, pulse_width })
    }

    /// One pulse per scene point, width equal to the sampling pitch.
    pub fn from_scene(scene: &Scene) -> Result<Self> {
        BasisLayout::new(scene.points.clone(), scene.doi.sample_resolution)
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn pulse_width(&self) -> f64 {
        self.pulse_width
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Assembled and factored moment matrix. Immutable; share freely across
/// threads.
pub struct ForwardOperator {
    layout: BasisLayout,
    constants: PhysicsConstants,
    matrix: Mat<Complex64>,
    lu: Option<Factors>,
    pivot_ratio: f64,
}

/// Packed `L\U` factors (unit lower part implicit) and the row permutation.
struct Factors {
    packed: Mat<Complex64>,
    perm: Perm<usize>,
}

impl std::fmt::Debug for ForwardOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardOperator")
            .field("unknowns", &self.layout.len())
            .field("pulse_width", &self.layout.pulse_width)
            .field("pivot_ratio", &self.pivot_ratio)
            .finish()
    }
}

impl ForwardOperator {
    pub fn layout(&self) -> &BasisLayout {
        &self.layout
    }

    pub fn constants(&self) -> &PhysicsConstants {
        &self.constants
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[(row, col)]
    }

    /// `max |U_ii| / min |U_ii|` of the LU factors, a cheap conditioning
    /// indicator.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    /// `M x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (j, &xj) in x.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.matrix[(i, j)] * xj;
            }
        }
        out
    }

    /// Solves `M x = rhs`.
    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::Config(format!("right-hand side has {} entries, operator {n}", rhs.len())));
        }
        let Some(lu) = &self.lu else { return Ok(Vec::new()) };
        let mut b = Mat::from_fn(n, 1, |i, _| rhs[i]);
        let mut mem = MemBuffer::new(solve::solve_in_place_scratch::<usize, Complex64>(n, 1, Par::Seq));
        solve::solve_in_place(
            lu.packed.as_ref(),
            lu.packed.as_ref(),
            lu.perm.as_ref(),
            b.as_mut(),
            Par::Seq,
            MemStack::new(&mut mem),
        );
        Ok((0..n).map(|i| b[(i, 0)]).collect())
    }

    /// Excitation vector `e_t[i] = -E_t(center_i)`.
    pub fn excitation(&self, tx: &TransmitterConfig) -> Result<Vec<Complex64>> {
        self.layout.centers.iter().map(|&p| incident_field(p, tx, &self.constants).map(|e| -e)).collect()
    }

    /// `|M a - e_t| / |e_t|`.
    pub fn relative_residual(&self, sol: &CurrentSolution, tx: &TransmitterConfig) -> Result<f64> {
        let rhs = self.excitation(tx)?;
        let ma = self.apply(&sol.coefficients);
        let num: f64 = ma.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = rhs.iter().map(|b| b.norm_sqr()).sum();
        Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
    }
}

/// `M[i][n] = cell_integral(center_i, center_n)`, filled from the upper
/// triangle so that `M` is exactly symmetric, then LU-factored on all
/// available threads.
pub fn assemble(layout: BasisLayout, constants: PhysicsConstants) -> Result<ForwardOperator> {
    assemble_with(layout, constants, Par::rayon(0))
}

/// [`assemble`] with a single-threaded factorization. The factors then do
/// not depend on the size of the thread pool, which keeps generated data
/// reproducible across machines with different core counts.
pub fn assemble_sequential(layout: BasisLayout, constants: PhysicsConstants) -> Result<ForwardOperator> {
    assemble_with(layout, constants, Par::Seq)
}

fn assemble_with(layout: BasisLayout, constants: PhysicsConstants, par: Par) -> Result<ForwardOperator> {
    let n = layout.len();
    if n == 0 {
        return Ok(ForwardOperator { layout, constants, matrix: Mat::zeros(0, 0), lu: None, pivot_ratio: 1.0 });
    }
    let w = layout.pulse_width;
    let diag = self_term(w, &constants);
    let centers = &layout.centers;

    // column j holds rows 0..=j
    let mut upper = vec![Complex64::new(0.0, 0.0); n * n];
    upper.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        let cj = centers[j];
        for (i, slot) in col.iter_mut().enumerate().take(j) {
            *slot = cell_integral(centers[i], cj, w, &constants);
        }
        col[j] = diag;
    });
    let matrix = Mat::from_fn(n, n, |i, j| if i <= j { upper[j * n + i] } else { upper[i * n + j] });
    drop(upper);

    let mut packed = matrix.clone();
    let mut fwd = vec![0usize; n];
    let mut bwd = vec![0usize; n];
    let mut mem = MemBuffer::new(factor::lu_in_place_scratch::<usize, Complex64>(n, n, par, Default::default()));
    factor::lu_in_place(packed.as_mut(), &mut fwd, &mut bwd, par, MemStack::new(&mut mem), Default::default());

    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..n {
        let m = packed[(k, k)].norm();
        lo = lo.min(m);
        hi = hi.max(m);
    }
    let pivot_ratio = hi / lo;
    if !(pivot_ratio.is_finite() && pivot_ratio <= MAX_PIVOT_RATIO) {
        return Err(Error::Singular { pivot_ratio });
    }
    let perm = Perm::new_checked(fwd.into_boxed_slice(), bwd.into_boxed_slice(), n);
    Ok(ForwardOperator { layout, constants, matrix, lu: Some(Factors { packed, perm }), pivot_ratio })
}

/// Pulse amplitudes `a` solving `M a = e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentSolution {
    pub coefficients: Vec<Complex64>,
}

pub fn solve_currents(op: &ForwardOperator, tx: &TransmitterConfig) -> Result<CurrentSolution> {
    let rhs = op.excitation(tx)?;
    let coefficients = op.solve(&rhs)?;
    if coefficients.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
        return Err(Error::Singular { pivot_ratio: op.pivot_ratio });
    }
    Ok(CurrentSolution { coefficients })
}

/// Radiated field of the currents alone at `p`.
pub fn scattered_field(p: Point, op: &ForwardOperator, sol: &CurrentSolution) -> ComplexScalar {
    let w = op.layout.pulse_width;
    op.layout.centers.iter().zip(&sol.coefficients).map(|(&s, &a)| a * cell_integral(p, s, w, &op.constants)).sum()
}

/// Incident plus scattered field at `p`.
pub fn total_field(
    p: Point,
    op: &ForwardOperator,
    sol: &CurrentSolution,
    tx: &TransmitterConfig,
) -> Result<ComplexScalar> {
    Ok(incident_field(p, tx, &op.constants)? + scattered_field(p, op, sol))
}

/// Total field at every receiver, in array order.
pub fn received_vector(
    op: &ForwardOperator,
    sol: &CurrentSolution,
    tx: &TransmitterConfig,
    rx: &ReceiverArray,
) -> Result<Vec<ComplexScalar>> {
    rx.positions.iter().map(|&p| total_field(p, op, sol, tx)).collect()
}

/// `|E|` on a `grid_res x grid_res` lattice of nodes spanning the centered
/// square of the given side, edges included.
pub fn render_field_grid(
    op: &ForwardOperator,
    sol: &CurrentSolution,
    tx: &TransmitterConfig,
    grid_res: usize,
    side: f64,
) -> Result<ImageRaster<f64>> {
    if grid_res < 2 || !side.is_finite() || side <= 0.0 {
        return Err(Error::Config(format!("field grid needs grid_res >= 2 and side > 0, got {grid_res}, {side}")));
    }
    let step = side / (grid_res - 1) as f64;
    let half = 0.5 * side;
    let values = (0..grid_res * grid_res)
        .into_par_iter()
        .map(|k| {
            let (row, col) = (k / grid_res, k % grid_res);
            let p = Point::new(-half + col as f64 * step, half - row as f64 * step);
            total_field(p, op, sol, tx).map(|e| e.norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ImageRaster { height: grid_res, width: grid_res, side, values })
}
