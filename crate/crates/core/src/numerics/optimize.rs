//! Bounded one-dimensional maximization.

use thiserror::Error;

/// (3 − √5) / 2
const GOLDEN: f64 = 0.381_966_011_250_105_15;

const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OptimizeError {
    #[error("InvalidBracket: lower bound {lo} must be below upper bound {hi}")]
    InvalidBracket { lo: f64, hi: f64 },
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Brent's bounded search: golden-section steps, replaced by successive
/// parabolic interpolation whenever the parabola's vertex is acceptable.
///
/// For a unimodal `f` on `[lo, hi]` the returned abscissa is within about
/// `tol` of the maximizer (a maximum at a bound is approached to within
/// `tol` but not evaluated exactly). For other functions it is a local
/// maximizer. NaN values are treated as −∞.
pub fn maximize_scalar<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Maximum, OptimizeError>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(OptimizeError::InvalidBracket { lo, hi });
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(OptimizeError::InvalidTolerance(tol));
    }

    // Internally this minimizes g = −f.
    let mut g = |x: f64| {
        let y = f(x);
        if y.is_nan() {
            f64::INFINITY
        } else {
            -y
        }
    };

    let eps = f64::EPSILON.sqrt();
    let tol3 = tol / 3.0;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut v, mut w) = (x, x);
    let mut gx = g(x);
    let (mut gv, mut gw) = (gx, gx);
    let mut evaluations = 1;
    let (mut d, mut e) = (0.0f64, 0.0f64);

    for _ in 0..MAX_ITERATIONS {
        let xm = 0.5 * (a + b);
        let tol1 = eps * x.abs() + tol3;
        let t2 = 2.0 * tol1;
        if (x - xm).abs() <= t2 - 0.5 * (b - a) {
            break;
        }

        let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
        if e.abs() > tol1 {
            r = (x - w) * (gx - gv);
            q = (x - v) * (gx - gw);
            p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            r = e;
            e = d;
        }

        if p.abs() >= (0.5 * q * r).abs() || p <= q * (a - x) || p >= q * (b - x) {
            e = if x < xm { b - x } else { a - x };
            d = GOLDEN * e;
        } else {
            d = p / q;
            let u = x + d;
            // keep evaluations away from the bounds
            if u - a < t2 || b - u < t2 {
                d = if x >= xm { -tol1 } else { tol1 };
            }
        }

        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let gu = g(u);
        evaluations += 1;

        if gu <= gx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            gv = gw;
            w = x;
            gw = gx;
            x = u;
            gx = gu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if gu <= gw || w == x {
                v = w;
                gv = gw;
                w = u;
                gw = gu;
            } else if gu <= gv || v == x || v == w {
                v = u;
                gv = gu;
            }
        }
    }

    Ok(Maximum {
        x,
        value: -gx,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64, spacing: f64) -> f64 {
        let steps = ((hi - lo) / spacing).round() as usize;
        (0..=steps)
            .map(|i| lo + i as f64 * spacing)
            .fold((lo, f64::NEG_INFINITY), |best, x| {
                let y = f(x);
                if y > best.1 {
                    (x, y)
                } else {
                    best
                }
            })
            .0
    }

    #[test]
    fn quadratic_peak() {
        let m = maximize_scalar(|x| -(x - 3.0).powi(2), 0.0, 10.0, 1e-6).unwrap();
        assert!((m.x - 3.0).abs() <= 1e-6, "{m:?}");
    }

    #[test]
    fn sine_on_half_period() {
        let tol = 1e-6;
        let m = maximize_scalar(f64::sin, 0.0, PI, tol).unwrap();
        assert!((m.x - PI / 2.0).abs() <= tol, "{m:?}");
    }

    #[test]
    fn double_well_on_positive_half() {
        let f = |x: f64| -(x * x - 1.0).powi(2);
        let tol = 1e-6;
        let oracle = grid_argmax(f, 0.0, 2.0, 1e-5);
        assert!((oracle - 1.0).abs() < 1e-5);
        let m = maximize_scalar(f, 0.0, 2.0, tol).unwrap();
        assert!((m.x - 1.0).abs() <= tol, "{m:?}");
    }

    #[test]
    fn increasing_function_approaches_upper_bound() {
        let m = maximize_scalar(|x| x, 0.0, 1.0, 1e-6).unwrap();
        assert!(1.0 - m.x < 1e-5);
    }

    #[test]
    fn rejects_bad_brackets() {
        assert!(matches!(
            maximize_scalar(|x| x, 1.0, 1.0, 1e-3),
            Err(OptimizeError::InvalidBracket { .. })
        ));
        assert!(matches!(
            maximize_scalar(|x| x, 2.0, 1.0, 1e-3),
            Err(OptimizeError::InvalidBracket { .. })
        ));
        assert!(matches!(
            maximize_scalar(|x| x, 0.0, 1.0, 0.0),
            Err(OptimizeError::InvalidTolerance(_))
        ));
    }
}
