//! Dense numerical kernels shared by the propagators: conjugate transposes,
//! the Padé matrix exponential, divided differences of `exp`, and a
//! truncated-Taylor exponential action for short time slices.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eigh, Inverse, UPLO};

use crate::error::{Error, Result};
use crate::C64;

pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// `a·v`, routed through the matrix-matrix kernel (complex `gemv` has no
/// BLAS path in ndarray).
pub fn matvec(a: &Array2<C64>, v: &Array1<C64>) -> Array1<C64> {
    let col = v.view().insert_axis(Axis(1));
    a.dot(&col).index_axis_move(Axis(1), 0)
}

/// `vᵀ·a`.
pub fn vecmat(v: &Array1<C64>, a: &Array2<C64>) -> Array1<C64> {
    let row = v.view().insert_axis(Axis(0));
    row.dot(a).index_axis_move(Axis(0), 0)
}

pub fn one_norm(a: &Array2<C64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn vec_norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest elementwise deviation from Hermiticity.
pub fn hermiticity_error(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            err = err.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    err
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &Array2<C64>) -> Result<Array1<f64>> {
    let h = (a + &dagger(a)).mapv(|z| z * 0.5);
    let (vals, _) = h.eigh(UPLO::Lower).map_err(|e| Error::linalg("eigh", e))?;
    Ok(vals)
}

/// Trace distance `½‖a − b‖₁` between two Hermitian matrices.
pub fn trace_distance(a: &Array2<C64>, b: &Array2<C64>) -> Result<f64> {
    let vals = hermitian_eigenvalues(&(a - b))?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

fn eye(n: usize) -> Array2<C64> {
    Array2::eye(n)
}

fn low_order_pade(a: &Array2<C64>, coeffs: &[f64]) -> (Array2<C64>, Array2<C64>) {
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut u = eye(n).mapv(|z| z * coeffs[1]);
    let mut v = eye(n).mapv(|z| z * coeffs[0]);
    let mut power = eye(n);
    for k in 1..coeffs.len() / 2 {
        power = power.dot(&a2);
        u = u + power.mapv(|z| z * coeffs[2 * k + 1]);
        v = v + power.mapv(|z| z * coeffs[2 * k]);
    }
    (a.dot(&u), v)
}

fn pade13(a: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
    let b = &PADE13;
    let n = a.nrows();
    let id = eye(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let sc = |m: &Array2<C64>, c: f64| m.mapv(|z| z * c);
    let inner_u = sc(&a6, b[13]) + sc(&a4, b[11]) + sc(&a2, b[9]);
    let u = a.dot(
        &(a6.dot(&inner_u) + sc(&a6, b[7]) + sc(&a4, b[5]) + sc(&a2, b[3]) + sc(&id, b[1])),
    );
    let inner_v = sc(&a6, b[12]) + sc(&a4, b[10]) + sc(&a2, b[8]);
    let v = a6.dot(&inner_v) + sc(&a6, b[6]) + sc(&a4, b[4]) + sc(&a2, b[2]) + sc(&id, b[0]);
    (u, v)
}

/// Matrix exponential by scaling and squaring with Padé approximants
/// (Higham 2005 order selection).
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::linalg("expm", "non-finite input"));
    }
    for &(order, theta) in THETA.iter() {
        if norm <= theta {
            let coeffs: &[f64] = match order {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = low_order_pade(a, coeffs);
            return pade_solve(&u, &v);
        }
    }
    let squarings = (norm / THETA13).log2().ceil().max(0.0) as i32;
    let scaled = a.mapv(|z| z / 2f64.powi(squarings));
    let (u, v) = pade13(&scaled);
    let mut result = pade_solve(&u, &v)?;
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    Ok(result)
}

fn pade_solve(u: &Array2<C64>, v: &Array2<C64>) -> Result<Array2<C64>> {
    let q = v - u;
    let p = v + u;
    let qinv = q.inv().map_err(|e| Error::linalg("expm", e))?;
    Ok(qinv.dot(&p))
}

// Below this separation the divided differences switch to series forms.
const DD_SERIES_SPREAD: f64 = 0.1;

fn sinhc(z: C64) -> C64 {
    if z.norm() < DD_SERIES_SPREAD {
        let z2 = z * z;
        // sinh(z)/z = Σ z^{2k}/(2k+1)!
        C64::new(1.0, 0.0)
            + z2 / 6.0
                * (C64::new(1.0, 0.0)
                    + z2 / 20.0 * (C64::new(1.0, 0.0) + z2 / 42.0 * (C64::new(1.0, 0.0) + z2 / 72.0)))
    } else {
        z.sinh() / z
    }
}

/// First divided difference of `exp`: `(e^a − e^b)/(a − b)`, i.e.
/// `∫₀¹ e^{(1−u)a + ub} du`.
pub fn dd1(a: C64, b: C64) -> C64 {
    let d = a - b;
    if d.norm() < DD_SERIES_SPREAD {
        ((a + b) * 0.5).exp() * sinhc(d * 0.5)
    } else {
        (a.exp() - b.exp()) / d
    }
}

/// Second divided difference of `exp` at three points: the integral of
/// `e^{ua + vb + wc}` over the simplex `u, v, w ≥ 0`, `u + v + w = 1`, measured in `(u, v)` (area ½).
pub fn dd2(a: C64, b: C64, c: C64) -> C64 {
    let ab = (a - b).norm();
    let bc = (b - c).norm();
    let ac = (a - c).norm();
    let spread = ab.max(bc).max(ac);
    if spread < DD_SERIES_SPREAD {
        let m = (a + b + c) / 3.0;
        let (x, y, z) = (a - m, b - m, c - m);
        // e[x,y,z] = Σ_{k≥0} h_k(x,y,z)/(k+2)!, h_k complete homogeneous.
        let mut sum = C64::new(0.0, 0.0);
        let mut fact = 2.0;
        // h_k(y,z) and h_k(x,y,z) built incrementally.
        let mut y_pow = C64::new(1.0, 0.0);
        let mut hyz = C64::new(1.0, 0.0);
        let mut hxyz = C64::new(1.0, 0.0);
        for k in 0..14 {
            if k > 0 {
                y_pow *= y;
                hyz = hyz * z + y_pow;
                hxyz = hyz + x * hxyz;
                fact *= (k + 2) as f64;
            }
            sum += hxyz / fact;
        }
        return m.exp() * sum;
    }
    // Divide by the widest pair to avoid cancellation.
    if ac >= ab && ac >= bc {
        (dd1(a, b) - dd1(b, c)) / (a - c)
    } else if ab >= bc {
        (dd1(a, c) - dd1(c, b)) / (a - b)
    } else {
        (dd1(b, a) - dd1(a, c)) / (b - c)
    }
}

/// Applies `exp(h·A)` to `v` for an operator given only by its action, using
/// substeps with `‖A‖h_sub ≤ 0.5` and a Taylor series truncated at machine
/// precision. `norm_bound` must bound the induced norm of `A`.
pub fn taylor_exp_action<V, F, N>(apply: F, norm: N, norm_bound: f64, h: f64, mut v: V) -> V
where
    V: Clone + for<'a> std::ops::AddAssign<&'a V>,
    F: Fn(&V, f64) -> V,
    N: Fn(&V) -> f64,
{
    if h == 0.0 {
        return v;
    }
    let substeps = ((norm_bound * h.abs()) / 0.5).ceil().max(1.0) as usize;
    let dt = h / substeps as f64;
    for _ in 0..substeps {
        let scale = norm(&v).max(f64::MIN_POSITIVE);
        let mut term = v.clone();
        let mut acc = v.clone();
        for k in 1..60 {
            term = apply(&term, dt / k as f64);
            let size = norm(&term);
            acc += &term;
            if size <= 1e-17 * scale {
                break;
            }
        }
        v = acc;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn expm_of_diagonal() {
        let a = array![[c(-1.0, 2.0), c(0.0, 0.0)], [c(0.0, 0.0), c(3.0, 0.0)]];
        let e = expm(&a).unwrap();
        assert!((e[[0, 0]] - c(-1.0, 2.0).exp()).norm() < 1e-14);
        assert!((e[[1, 1]] - c(3.0, 0.0).exp()).norm() < 1e-12 * 20.1);
        assert!(e[[0, 1]].norm() < 1e-15);
    }

    #[test]
    fn expm_nilpotent_and_rotation() {
        // exp of a Jordan block [[0,1],[0,0]] is [[1,1],[0,1]].
        let n = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let e = expm(&n).unwrap();
        assert!((e[[0, 1]] - c(1.0, 0.0)).norm() < 1e-15);
        // exp(θ[[0,-1],[1,0]]) is a rotation; large θ exercises squaring.
        let theta = 40.0;
        let r = array![[c(0.0, 0.0), c(-theta, 0.0)], [c(theta, 0.0), c(0.0, 0.0)]];
        let e = expm(&r).unwrap();
        assert!((e[[0, 0]] - c(theta.cos(), 0.0)).norm() < 1e-11);
        assert!((e[[1, 0]] - c(theta.sin(), 0.0)).norm() < 1e-11);
    }

    #[test]
    fn dd1_matches_closed_form_and_limits() {
        let a = c(-0.3, 1.0);
        let b = c(-2.0, -0.5);
        assert!((dd1(a, b) - (a.exp() - b.exp()) / (a - b)).norm() < 1e-15);
        assert!((dd1(a, a) - a.exp()).norm() < 1e-15);
        let eps = c(1e-9, 0.0);
        assert!((dd1(a + eps, a) - (a + eps * 0.5).exp()).norm() < 1e-15);
        // Large separations must not overflow.
        assert!(dd1(c(0.0, 0.0), c(-1e6, 0.0)).norm().is_finite());
    }

    #[test]
    fn dd2_limits() {
        let z = c(0.0, 0.0);
        assert!((dd2(z, z, z) - c(0.5, 0.0)).norm() < 1e-15);
        let a = c(-0.7, 0.2);
        assert!((dd2(a, a, a) - a.exp() * 0.5).norm() < 1e-15);
        // e[a,0,0] = (e^a − 1 − a)/a².
        let a = c(-3.0, 2.0);
        let expected = (a.exp() - 1.0 - a) / (a * a);
        assert!((dd2(a, z, z) - expected).norm() < 1e-14);
    }

    #[test]
    fn taylor_action_matches_expm() {
        let a = array![
            [c(-0.5, 0.3), c(0.2, 0.0), c(0.0, 1.0)],
            [c(0.1, -0.2), c(-1.0, 0.0), c(0.4, 0.0)],
            [c(0.0, 0.0), c(0.3, 0.3), c(-0.2, -2.0)]
        ];
        let v = array![c(1.0, 0.0), c(0.0, 1.0), c(0.5, -0.5)];
        let h = 3.7;
        let exact = expm(&a.mapv(|z| z * h)).unwrap().dot(&v);
        let approx = taylor_exp_action(
            |x: &Array1<C64>, s: f64| a.dot(x).mapv(|z| z * s),
            vec_norm,
            one_norm(&a),
            h,
            v,
        );
        let err = vec_norm(&(&approx - &exact));
        assert!(err < 1e-13, "err = {err:e}");
    }
}
