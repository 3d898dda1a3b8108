//! Eigenvalues and eigen-directions of 3x3 real matrices.
//!
//! Roots of the characteristic cubic come from Cardano / the trigonometric
//! form, then get polished with Newton's method on the cubic itself.
//! Eigenvectors are cross products of two rows of `A - lambda I`, which works
//! unchanged over the complex numbers.

use num_complex::Complex64;

use super::{jacobian, lorenz_rhs, LorenzParams, Matrix3, State};
use crate::error::{Error, Result};

const NEWTON_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Sorted by real part, descending. A complex pair appears as
    /// `(a + bi, a - bi)` with `b > 0`.
    pub values: [Complex64; 3],
    /// Unit-norm real directions aligned with `values`. For a complex pair
    /// the two slots hold the real and imaginary parts of one eigenvector.
    pub directions: [[f64; 3]; 3],
    /// Set when the eigenvectors could not be resolved and the directions
    /// are the canonical basis instead.
    pub fallback: bool,
}

/// Coefficients `(a2, a1, a0)` of `lambda^3 + a2 lambda^2 + a1 lambda + a0`.
fn char_poly(m: &Matrix3) -> (f64, f64, f64) {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2]
        - m[0][2] * m[2][0]
        + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    (-tr, minors, -det)
}

fn newton_polish(coef: (f64, f64, f64), mut z: Complex64, scale: f64) -> Result<Complex64> {
    let (a2, a1, a0) = coef;
    let tol = 1e-15 * scale.max(1.0);
    for _ in 0..NEWTON_ITERS {
        let p = ((z + a2) * z + a1) * z + a0;
        let dp = (z * 3.0 + 2.0 * a2) * z + a1;
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        z -= step;
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::EigenFailure("Newton iteration diverged".into()));
        }
        if step.norm() <= tol * z.norm().max(1.0) {
            return Ok(z);
        }
    }
    // a multiple root converges slowly; accept if the residual is small
    let p = ((z + a2) * z + a1) * z + a0;
    let resid_scale = scale.max(1.0).powi(3);
    if p.norm() <= 1e-8 * resid_scale {
        Ok(z)
    } else {
        Err(Error::EigenFailure(format!(
            "Newton polishing did not converge (residual {:e})",
            p.norm()
        )))
    }
}

/// One real root of the monic cubic.
fn real_root(coef: (f64, f64, f64)) -> f64 {
    let (a2, a1, a0) = coef;
    // depressed cubic t^3 + p t + q, lambda = t - a2/3
    let shift = a2 / 3.0;
    let p = a1 - a2 * a2 / 3.0;
    let q = 2.0 * a2 * a2 * a2 / 27.0 - a2 * a1 / 3.0 + a0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let t = if disc >= 0.0 {
        let sq = disc.sqrt();
        (-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt()
    } else {
        // three real roots; take the one of largest magnitude
        let r = (-p / 3.0).sqrt();
        let phi = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|k| 2.0 * r * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos())
            .fold(0.0f64, |best, t| {
                if (t - shift).abs() > (best - shift).abs() {
                    t
                } else {
                    best
                }
            })
    };
    t - shift
}

fn eigenvalues(m: &Matrix3) -> Result<[Complex64; 3]> {
    let coef = char_poly(m);
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let r = newton_polish(coef, Complex64::new(real_root(coef), 0.0), scale)?.re;
    // deflate: cubic = (lambda - r)(lambda^2 + b lambda + c)
    let b = coef.0 + r;
    let c = coef.1 + r * b;
    let disc = b * b - 4.0 * c;
    let (q1, q2) = if disc >= 0.0 {
        // numerically stable quadratic roots
        let s = -0.5 * (b + b.signum() * disc.sqrt());
        let (x1, x2) = if s == 0.0 { (0.0, 0.0) } else { (s, c / s) };
        (Complex64::new(x1, 0.0), Complex64::new(x2, 0.0))
    } else {
        let im = (-disc).sqrt() / 2.0;
        (Complex64::new(-b / 2.0, im), Complex64::new(-b / 2.0, -im))
    };
    let q1 = newton_polish(coef, q1, scale)?;
    let q2 = if disc < 0.0 {
        q1.conj()
    } else {
        newton_polish(coef, q2, scale)?
    };
    let mut vals = [Complex64::new(r, 0.0), q1, q2];
    vals.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(vals)
}

fn cross(a: [Complex64; 3], b: [Complex64; 3]) -> [Complex64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn cnorm(v: &[Complex64; 3]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Null vector of `m - lambda I`, or `None` when the shifted matrix has rank < 2.
fn null_vector(m: &Matrix3, lambda: Complex64) -> Option<[Complex64; 3]> {
    let rows: Vec<[Complex64; 3]> = (0..3)
        .map(|i| {
            let mut r = [Complex64::new(0.0, 0.0); 3];
            for j in 0..3 {
                r[j] = Complex64::new(m[i][j], 0.0);
            }
            r[i] -= lambda;
            r
        })
        .collect();
    let row_scale = rows.iter().map(cnorm).fold(0.0f64, f64::max);
    let best = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(i, j)| cross(rows[i], rows[j]))
        .max_by(|a, b| cnorm(a).total_cmp(&cnorm(b)))?;
    if cnorm(&best) <= 1e-10 * row_scale * row_scale {
        None
    } else {
        Some(best)
    }
}

/// Normalizes to unit length with the largest-magnitude component positive.
fn canonical(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return None;
    }
    let big = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    let s = big.signum() / n;
    Some([v[0] * s, v[1] * s, v[2] * s])
}

/// Real and imaginary parts of a complex eigenvector, rotated by a phase so
/// that they are orthogonal (principal axes of the oscillation ellipse).
fn complex_pair_directions(v: [Complex64; 3]) -> Option<([f64; 3], [f64; 3])> {
    let a: Vec<f64> = v.iter().map(|z| z.re).collect();
    let b: Vec<f64> = v.iter().map(|z| z.im).collect();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let phi = 0.5 * (-2.0 * ab).atan2(aa - bb);
    let (s, c) = phi.sin_cos();
    let re: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * c - y * s).collect();
    let im: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * s + y * c).collect();
    Some((
        canonical([re[0], re[1], re[2]])?,
        canonical([im[0], im[1], im[2]])?,
    ))
}

/// Eigenvalues and real eigen-directions of an arbitrary real 3x3 matrix.
pub fn eigen_decomposition(m: &Matrix3) -> Result<EigenDecomposition> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("matrix has non-finite entries".into()));
    }
    let values = eigenvalues(m)?;
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let fallback = EigenDecomposition {
        values,
        directions: identity,
        fallback: true,
    };

    let mut directions = [[0.0; 3]; 3];
    let mut k = 0;
    while k < 3 {
        let lambda = values[k];
        let Some(v) = null_vector(m, lambda) else {
            return Ok(fallback);
        };
        if lambda.im.abs() > 1e-12 * lambda.norm().max(1.0) && k + 1 < 3 {
            let Some((re, im)) = complex_pair_directions(v) else {
                return Ok(fallback);
            };
            directions[k] = re;
            directions[k + 1] = im;
            k += 2;
        } else {
            let Some(d) = canonical([v[0].re, v[1].re, v[2].re]) else {
                return Ok(fallback);
            };
            directions[k] = d;
            k += 1;
        }
    }
    // repeated eigenvalues can hand back parallel vectors
    let det = directions[0][0]
        * (directions[1][1] * directions[2][2] - directions[1][2] * directions[2][1])
        - directions[0][1] * (directions[1][0] * directions[2][2] - directions[1][2] * directions[2][0])
        + directions[0][2] * (directions[1][0] * directions[2][1] - directions[1][1] * directions[2][0]);
    if det.abs() < 1e-8 {
        return Ok(fallback);
    }
    Ok(EigenDecomposition {
        values,
        directions,
        fallback: false,
    })
}

/// Eigen-directions of the Jacobian at a fixed point `fp`.
pub fn eigen_directions(fp: State, p: &LorenzParams) -> Result<[[f64; 3]; 3]> {
    let resid = lorenz_rhs(fp, p).norm();
    if resid > 1e-8 * (1.0 + fp.norm()) {
        return Err(Error::InvalidArgument(format!(
            "{fp:?} is not a fixed point (|rhs| = {resid:e})"
        )));
    }
    Ok(eigen_decomposition(&jacobian(fp, p))?.directions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{fixed_points, mat_vec};

    #[test]
    fn origin_eigenvalues_match_characteristic_polynomial() {
        // lambda^2 + 11 lambda - 270 = 0 and lambda = -8/3
        let p = LorenzParams::default();
        let e = eigen_decomposition(&jacobian(State::ORIGIN, &p)).unwrap();
        let expected = [
            (-11.0 + 1201f64.sqrt()) / 2.0,
            -8.0 / 3.0,
            (-11.0 - 1201f64.sqrt()) / 2.0,
        ];
        for (v, want) in e.values.iter().zip(expected) {
            assert!(v.im == 0.0);
            assert!((v.re - want).abs() < 1e-12, "{} vs {}", v.re, want);
        }
        assert!((e.values[0].re - 11.8277).abs() < 1e-4);
        assert!((e.values[2].re + 22.8277).abs() < 1e-4);
        // stable z-direction decouples
        let dz = e.directions[1];
        assert!(dz[0].abs() < 1e-14 && dz[1].abs() < 1e-14);
        assert!((dz[2].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn real_eigenvectors_satisfy_eigen_equation() {
        let p = LorenzParams::default();
        let j = jacobian(State::ORIGIN, &p);
        let e = eigen_decomposition(&j).unwrap();
        for (lam, v) in e.values.iter().zip(e.directions) {
            let jv = mat_vec(&j, v);
            for i in 0..3 {
                assert!((jv[i] - lam.re * v[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn symmetric_fixed_points_have_complex_pair() {
        let p = LorenzParams::default();
        let fps = fixed_points(&p).unwrap();
        for fp in &fps[..2] {
            let j = jacobian(*fp, &p);
            let e = eigen_decomposition(&j).unwrap();
            assert!(!e.fallback);
            // one real negative eigenvalue and an unstable complex pair
            assert!((e.values[0].re - 0.0940).abs() < 1e-3);
            assert!((e.values[0].im - 10.1945).abs() < 1e-3);
            assert_eq!(e.values[1], e.values[0].conj());
            assert!((e.values[2].re + 13.8546).abs() < 1e-3);
            assert_eq!(e.values[2].im, 0.0);
            // re/im parts span an invariant plane: J maps span{a, b} into itself
            let (a, b) = (e.directions[0], e.directions[1]);
            let n = [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ];
            for v in [a, b] {
                let jv = mat_vec(&j, v);
                let out = jv.iter().zip(n).map(|(x, y)| x * y).sum::<f64>();
                assert!(out.abs() < 1e-9, "{out}");
            }
        }
    }

    #[test]
    fn directions_are_unit_norm() {
        let p = LorenzParams::default();
        for fp in fixed_points(&p).unwrap() {
            for d in eigen_directions(fp, &p).unwrap() {
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_falls_back_to_canonical_basis() {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let e = eigen_decomposition(&id).unwrap();
        assert!(e.fallback);
        assert_eq!(e.directions, id);
    }

    #[test]
    fn rejects_non_fixed_points() {
        let p = LorenzParams::default();
        assert!(eigen_directions(State::new(1.0, 1.0, 1.0), &p).is_err());
    }

    #[test]
    fn matches_diagonal_and_triangular_matrices() {
        let m = [[3.0, 1.0, 2.0], [0.0, -1.0, 5.0], [0.0, 0.0, 0.5]];
        let e = eigen_decomposition(&m).unwrap();
        let re: Vec<f64> = e.values.iter().map(|z| z.re).collect();
        assert!((re[0] - 3.0).abs() < 1e-12);
        assert!((re[1] - 0.5).abs() < 1e-12);
        assert!((re[2] + 1.0).abs() < 1e-12);
    }
}
