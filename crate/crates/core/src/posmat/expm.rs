//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! of degree 3, 5, 7, 9 or 13 (degree chosen from the 1-norm of the argument).

use crate::error::{Error, Result};
use crate::posmat::{lu::Lu, Mat};
use crate::scalar::Real;

const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
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
const B13: [f64; 14] = [
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

/// Squarings beyond this are treated as overflow of the scaled argument.
const MAX_SQUARINGS: i32 = 1000;

/// `exp(a * t)`.
///
/// For Metzler `a` and `t >= 0` the exact result is entrywise nonnegative;
/// negative round-off entries are clamped to zero in that case.
pub fn expm<T: Real>(a: &Mat<T>, t: T) -> Result<Mat<T>> {
    if !t.is_finite() {
        return Err(Error::InvalidInput("expm: time must be finite".into()));
    }
    let n = a.dim();
    if t == T::zero() {
        return Ok(Mat::identity(n));
    }
    let at = a.scale(t);
    let norm = at.norm_1();
    if !norm.is_finite() {
        return Err(Error::ExpOverflow { scaled_norm: norm.to_f64_lossy() });
    }
    let metzler_nonneg = t > T::zero() && super::is_metzler(a);

    let mut result = None;
    for &(m, theta) in &THETA[..4] {
        if norm <= T::c(theta) {
            result = Some(pade(&at, m)?);
            break;
        }
    }
    let r = match result {
        Some(r) => r,
        None => {
            let theta13 = T::c(THETA[4].1);
            let ratio = (norm / theta13).to_f64_lossy();
            let s = ratio.log2().ceil().max(0.0) as i32;
            if s > MAX_SQUARINGS {
                return Err(Error::ExpOverflow { scaled_norm: norm.to_f64_lossy() });
            }
            let scaled = at.scale(T::c(2f64.powi(-s)));
            let mut r = pade(&scaled, 13)?;
            for _ in 0..s {
                r = r.matmul(&r);
                if !r.is_finite() {
                    return Err(Error::ExpOverflow { scaled_norm: norm.to_f64_lossy() });
                }
            }
            r
        }
    };
    if !r.is_finite() {
        return Err(Error::ExpOverflow { scaled_norm: norm.to_f64_lossy() });
    }
    Ok(if metzler_nonneg { r.map(|v| v.max(T::zero())) } else { r })
}

fn pade<T: Real>(a: &Mat<T>, m: usize) -> Result<Mat<T>> {
    let n = a.dim();
    let id = Mat::identity(n);
    let a2 = a.matmul(a);
    let (u, v) = if m == 13 {
        let b: Vec<T> = B13.iter().map(|&x| T::c(x)).collect();
        let a4 = a2.matmul(&a2);
        let a6 = a4.matmul(&a2);
        let inner_u = &(&a6.scale(b[13]) + &a4.scale(b[11])) + &a2.scale(b[9]);
        let u_poly = &(&(&(&a6.matmul(&inner_u) + &a6.scale(b[7])) + &a4.scale(b[5]))
            + &a2.scale(b[3]))
            + &id.scale(b[1]);
        let u = a.matmul(&u_poly);
        let inner_v = &(&a6.scale(b[12]) + &a4.scale(b[10])) + &a2.scale(b[8]);
        let v = &(&(&(&a6.matmul(&inner_v) + &a6.scale(b[6])) + &a4.scale(b[4]))
            + &a2.scale(b[2]))
            + &id.scale(b[0]);
        (u, v)
    } else {
        let coeffs: &[f64] = match m {
            3 => &B3,
            5 => &B5,
            7 => &B7,
            9 => &B9,
            _ => unreachable!("unsupported Padé degree"),
        };
        // powers[k] = A^(2k)
        let mut powers = vec![id.clone(), a2.clone()];
        while powers.len() <= m / 2 {
            let next = powers.last().unwrap().matmul(&a2);
            powers.push(next);
        }
        let mut u_poly = Mat::zeros(n);
        let mut v = Mat::zeros(n);
        for (k, p) in powers.iter().enumerate() {
            if 2 * k < m {
                u_poly = &u_poly + &p.scale(T::c(coeffs[2 * k + 1]));
            }
            v = &v + &p.scale(T::c(coeffs[2 * k]));
        }
        (a.matmul(&u_poly), v)
    };
    let denom = &v - &u;
    let numer = &v + &u;
    let lu = Lu::new(&denom)?;
    Ok(lu.solve_mat(&numer))
}
