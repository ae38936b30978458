//! Bessel functions of the first and second kind and Hankel functions of the
//! second kind, orders 0 and 1, for real positive arguments.
//!
//! Three regimes share the work:
//!
//! * `x <= 1`: ascending power series (no cancellation, a dozen terms).
//! * `1 < x < 14`: Miller backward recurrence for `J_n`, normalized with
//!   `J_0 + 2 sum J_2k = 1`; `Y_0` and `Y_1` follow from the Neumann series
//!   over the same recurrence values.
//! * `x >= 14`: Hankel asymptotic expansion. The smallest term of the
//!   divergent series is about `exp(-2x)`, so at the crossover the truncation
//!   error is already below `1e-12`.
//!
//! The seams are exercised by the continuity tests below.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_4, PI};

use num_complex::Complex64;

/// Complex field value. `re`/`im` are plain `f64`.
pub type ComplexScalar = Complex64;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_MAX: f64 = 1.0;
const ASYMPTOTIC_MIN: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("special function argument {0} is outside the domain x > 0")]
pub struct DomainError(pub f64);

fn check(x: f64) -> Result<f64, DomainError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(DomainError(x))
    }
}

/// `J_0(x)`.
pub fn bessel_j0(x: f64) -> Result<f64, DomainError> {
    check(x).map(|x| order0(x).0)
}

/// `Y_0(x)`.
pub fn bessel_y0(x: f64) -> Result<f64, DomainError> {
    check(x).map(|x| order0(x).1)
}

/// `J_1(x)`.
pub fn bessel_j1(x: f64) -> Result<f64, DomainError> {
    check(x).map(|x| order1(x).0)
}

/// `Y_1(x)`.
pub fn bessel_y1(x: f64) -> Result<f64, DomainError> {
    check(x).map(|x| order1(x).1)
}

/// `H_0^(2)(x) = J_0(x) - i Y_0(x)`.
pub fn hankel2_0(x: f64) -> Result<ComplexScalar, DomainError> {
    check(x).map(hankel2_0_unchecked)
}

/// `H_1^(2)(x) = J_1(x) - i Y_1(x)`.
pub fn hankel2_1(x: f64) -> Result<ComplexScalar, DomainError> {
    check(x).map(hankel2_1_unchecked)
}

/// Hot-path variant for callers that already guarantee `x > 0`.
#[inline]
pub(crate) fn hankel2_0_unchecked(x: f64) -> ComplexScalar {
    let (j, y) = order0(x);
    Complex64::new(j, -y)
}

#[inline]
pub(crate) fn hankel2_1_unchecked(x: f64) -> ComplexScalar {
    let (j, y) = order1(x);
    Complex64::new(j, -y)
}

/// `(J_0, Y_0)`.
pub(crate) fn order0(x: f64) -> (f64, f64) {
    if x <= SERIES_MAX {
        let s = series(x);
        (s.j0, s.y0)
    } else if x < ASYMPTOTIC_MIN {
        let m = miller(x);
        (m.j0, m.y0)
    } else {
        asymptotic(0, x)
    }
}

/// `(J_1, Y_1)`.
pub(crate) fn order1(x: f64) -> (f64, f64) {
    if x <= SERIES_MAX {
        let s = series(x);
        (s.j1, s.y1)
    } else if x < ASYMPTOTIC_MIN {
        let m = miller(x);
        (m.j1, m.y1)
    } else {
        asymptotic(1, x)
    }
}

struct Quad {
    j0: f64,
    y0: f64,
    j1: f64,
    y1: f64,
}

fn series(x: f64) -> Quad {
    let q = 0.25 * x * x;
    let log_half = (0.5 * x).ln();

    // term_k = (-q)^k / (k! k!) and its order-1 sibling (-q)^k / (k! (k+1)!)
    let mut t0 = 1.0;
    let mut t1 = 1.0;
    let mut harmonic = 0.0;
    let mut j0 = 1.0;
    let mut j1_sum = 1.0;
    let mut y0_sum = 0.0;
    // psi(k+1) + psi(k+2) at k = 0
    let mut psi_pair = -2.0 * EULER_GAMMA + 1.0;
    let mut y1_sum = psi_pair;
    for k in 1..40 {
        let kf = k as f64;
        t0 *= -q / (kf * kf);
        t1 *= -q / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        psi_pair += 1.0 / kf + 1.0 / (kf + 1.0);
        j0 += t0;
        j1_sum += t1;
        y0_sum -= harmonic * t0;
        y1_sum += psi_pair * t1;
        if t0.abs() < 1e-18 && t1.abs() < 1e-18 {
            break;
        }
    }
    let j1 = 0.5 * x * j1_sum;
    let y0 = FRAC_2_PI * ((log_half + EULER_GAMMA) * j0 + y0_sum);
    let y1 = -FRAC_2_PI / x + FRAC_2_PI * log_half * j1 - 0.5 * x * y1_sum / PI;
    Quad { j0, y0, j1, y1 }
}

fn miller(x: f64) -> Quad {
    // even start index with J_m(x) far below double precision
    let start = 2 * (((1.5 * x + 30.0) as usize).div_ceil(2));
    let inv_x = 1.0 / x;

    let mut f_next = 0.0; // F_{k+1}
    let mut f = 1e-30; // F_k, k = start
    let mut norm = 0.0;
    let mut even_sum = 0.0; // sum (-1)^j F_2j / j
    let mut odd_sum = 0.0; // sum (-1)^j (2j+1)/(j(j+1)) F_{2j+1}
    let mut f1 = 0.0;

    let mut k = start;
    loop {
        if k.is_multiple_of(2) {
            if k > 0 {
                let j = k / 2;
                norm += 2.0 * f;
                let term = f / j as f64;
                even_sum += if j.is_multiple_of(2) { term } else { -term };
            }
        } else if k > 1 {
            let j = (k - 1) / 2;
            let jf = j as f64;
            let term = (2.0 * jf + 1.0) / (jf * (jf + 1.0)) * f;
            odd_sum += if j.is_multiple_of(2) { term } else { -term };
        }
        if k == 1 {
            f1 = f;
        }
        if k == 0 {
            break;
        }
        let f_prev = 2.0 * k as f64 * inv_x * f - f_next;
        f_next = f;
        f = f_prev;
        k -= 1;
    }
    norm += f;
    let scale = 1.0 / norm;
    let j0 = f * scale;
    let j1 = f1 * scale;
    let log_term = (0.5 * x).ln() + EULER_GAMMA;
    let y0 = FRAC_2_PI * (log_term * j0 - 2.0 * even_sum * scale);
    let y1 = FRAC_2_PI * ((log_term - 1.0) * j1 - j0 * inv_x - odd_sum * scale);
    Quad { j0, y0, j1, y1 }
}

/// `(J_nu, Y_nu)` from the Hankel expansion `P(nu, x)`, `Q(nu, x)`.
fn asymptotic(order: u32, x: f64) -> (f64, f64) {
    let mu = 4.0 * (order * order) as f64;
    let eight_x = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term: f64 = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200u32 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * eight_x);
        let mag = term.abs();
        if mag >= prev {
            break;
        }
        prev = mag;
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if mag < 1e-17 {
            break;
        }
    }
    // chi = x - (2 nu + 1) pi / 4, expanded so sin/cos see the exact argument
    let (s, c) = x.sin_cos();
    let (sp, cp) = if order == 0 {
        (FRAC_PI_4.sin(), FRAC_PI_4.cos())
    } else {
        ((3.0 * FRAC_PI_4).sin(), (3.0 * FRAC_PI_4).cos())
    };
    let cos_chi = c * cp + s * sp;
    let sin_chi = s * cp - c * sp;
    let amp = (FRAC_2_PI / x).sqrt();
    (amp * (p * cos_chi - q * sin_chi), amp * (p * sin_chi + q * cos_chi))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rows of `x, j0, y0, j1, y1` from a 40-digit reference.
    fn reference(csv: &str) -> Vec<[f64; 5]> {
        csv.lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|s| s.trim().parse().unwrap()).collect();
                [v[0], v[1], v[2], v[3], v[4]]
            })
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn matches_reference_per_function() {
        let rows = reference(include_str!("../tests/data/bessel_reference.csv"));
        assert!(rows.len() > 80);
        for [x, j0, y0, j1, y1] in rows {
            let got = [bessel_j0(x).unwrap(), bessel_y0(x).unwrap(), bessel_j1(x).unwrap(), bessel_y1(x).unwrap()];
            for (name, g, want) in [("j0", got[0], j0), ("y0", got[1], y0), ("j1", got[2], j1), ("y1", got[3], y1)] {
                assert!(rel(g, want) <= 1e-10, "{name}({x}) = {g}, want {want}, rel {}", rel(g, want));
            }
        }
    }

    #[test]
    fn small_argument_limits() {
        let j = bessel_j0(1e-8).unwrap();
        assert!((1.0 - 1e-12..=1.0).contains(&j));
        assert!(bessel_y0(1e-4).unwrap() < -5.0);
    }

    #[test]
    fn first_zero_of_j0() {
        // bisection on the 40-digit reference: 2.404825557695772768621632
        let root = 2.404_825_557_695_773;
        assert!(bessel_j0(root).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn hankel_is_j_minus_i_y() {
        for x in [0.3, 1.0, 2.7, 13.9, 14.0, 50.0, 4000.0] {
            let h0 = hankel2_0(x).unwrap();
            assert_eq!(h0.re, bessel_j0(x).unwrap());
            assert_eq!(h0.im, -bessel_y0(x).unwrap());
            let h1 = hankel2_1(x).unwrap();
            assert_eq!(h1.re, bessel_j1(x).unwrap());
            assert_eq!(h1.im, -bessel_y1(x).unwrap());
        }
    }

    #[test]
    fn large_argument_magnitude() {
        let x = 1e3;
        let want = (2.0 / (PI * x)).sqrt();
        assert!(rel(hankel2_0(x).unwrap().norm(), want) <= 1e-3);
    }

    #[test]
    fn rejects_non_positive_and_non_finite() {
        for x in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(bessel_j0(x).is_err());
            assert!(bessel_y1(x).is_err());
            assert!(hankel2_0(x).is_err());
            assert!(hankel2_1(x).is_err());
        }
    }

    #[test]
    fn continuity_across_regime_seams() {
        for seam in [SERIES_MAX, ASYMPTOTIC_MIN] {
            for x in [seam * (1.0 - 1e-9), seam, seam * (1.0 + 1e-9)] {
                let a = hankel2_0_unchecked(x);
                let b = hankel2_0_unchecked(x * (1.0 + 1e-9));
                assert!((a - b).norm() <= 1e-6 * a.norm(), "H0 seam at {x}");
                let a = hankel2_1_unchecked(x);
                let b = hankel2_1_unchecked(x * (1.0 + 1e-9));
                assert!((a - b).norm() <= 1e-6 * a.norm(), "H1 seam at {x}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn wronskian(log_x in -3.0f64..3.0) {
            let x = 10f64.powf(log_x);
            let (j0, y0) = order0(x);
            let (j1, y1) = order1(x);
            let w = j1 * y0 - j0 * y1;
            let want = 2.0 / (PI * x);
            proptest::prop_assert!(rel(w, want) <= 1e-9, "x = {}, rel = {}", x, rel(w, want));
        }

        #[test]
        fn no_seams_anywhere(log_x in -4.0f64..4.0) {
            // |H0'| = |H1|: the step may move the value by |H1| dx on top of the 1e-6 budget
            let x = 10f64.powf(log_x);
            let dx = x * 1e-9;
            let a = hankel2_0_unchecked(x);
            let b = hankel2_0_unchecked(x + dx);
            let slope = hankel2_1_unchecked(x).norm() * dx * 1.01;
            proptest::prop_assert!((a - b).norm() <= 1e-6 * a.norm() + slope);
        }
    }
}
