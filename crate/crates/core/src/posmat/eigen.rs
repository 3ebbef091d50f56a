//! Eigenvalues of a real square matrix.
//!
//! Closed form for `n <= 2`; otherwise balancing, reduction to upper
//! Hessenberg form by stabilised elementary similarity transforms, and the
//! shifted double-step QR iteration on the Hessenberg matrix (real Schur form).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posmat::Mat;
use crate::scalar::Real;

const MAX_QR_ITERATIONS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue<T> {
    pub re: T,
    pub im: T,
}

impl<T: Real> Eigenvalue<T> {
    pub fn modulus(&self) -> T {
        self.re.hypot(self.im)
    }
}

/// All eigenvalues of `a`, unordered.
pub fn eigenvalues<T: Real>(a: &Mat<T>) -> Result<Vec<Eigenvalue<T>>> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    match a.dim() {
        1 => Ok(vec![Eigenvalue { re: a[(0, 0)], im: T::zero() }]),
        2 => Ok(eig2(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]).to_vec()),
        _ => hessenberg_qr(a),
    }
}

fn eig2<T: Real>(a: T, b: T, c: T, d: T) -> [Eigenvalue<T>; 2] {
    let half = T::c(0.5);
    let mid = (a + d) * half;
    let h = (a - d) * half;
    let disc = h * h + b * c;
    if disc >= T::zero() {
        let s = disc.sqrt();
        [Eigenvalue { re: mid + s, im: T::zero() }, Eigenvalue { re: mid - s, im: T::zero() }]
    } else {
        let s = (-disc).sqrt();
        [Eigenvalue { re: mid, im: s }, Eigenvalue { re: mid, im: -s }]
    }
}

/// One-based working copy so the classical formulation can be followed index for index.
struct Work<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Real> Work<T> {
    #[inline]
    fn g(&self, i: usize, j: usize) -> T {
        self.a[(i - 1) * self.n + (j - 1)]
    }
    #[inline]
    fn s(&mut self, i: usize, j: usize, v: T) {
        self.a[(i - 1) * self.n + (j - 1)] = v;
    }
}

fn balance<T: Real>(w: &mut Work<T>) {
    let n = w.n;
    let radix = T::c(2.0);
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = T::zero();
            let mut c = T::zero();
            for j in 1..=n {
                if j != i {
                    c += w.g(j, i).abs();
                    r += w.g(i, j).abs();
                }
            }
            if c != T::zero() && r != T::zero() {
                let mut g = r / radix;
                let mut f = T::one();
                let s = c + r;
                while c < g {
                    f *= radix;
                    c *= sqrdx;
                }
                g = r * radix;
                while c > g {
                    f /= radix;
                    c /= sqrdx;
                }
                if (c + r) / f < T::c(0.95) * s {
                    done = false;
                    let gi = T::one() / f;
                    for j in 1..=n {
                        let v = w.g(i, j) * gi;
                        w.s(i, j, v);
                    }
                    for j in 1..=n {
                        let v = w.g(j, i) * f;
                        w.s(j, i, v);
                    }
                }
            }
        }
    }
}

fn to_hessenberg<T: Real>(w: &mut Work<T>) {
    let n = w.n;
    for m in 2..n {
        let mut x = T::zero();
        let mut i = m;
        for j in m..=n {
            if w.g(j, m - 1).abs() > x.abs() {
                x = w.g(j, m - 1);
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                let (p, q) = (w.g(i, j), w.g(m, j));
                w.s(i, j, q);
                w.s(m, j, p);
            }
            for j in 1..=n {
                let (p, q) = (w.g(j, i), w.g(j, m));
                w.s(j, i, q);
                w.s(j, m, p);
            }
        }
        if x != T::zero() {
            for i in (m + 1)..=n {
                let mut y = w.g(i, m - 1);
                if y != T::zero() {
                    y /= x;
                    w.s(i, m - 1, y);
                    for j in m..=n {
                        let v = w.g(i, j) - y * w.g(m, j);
                        w.s(i, j, v);
                    }
                    for j in 1..=n {
                        let v = w.g(j, m) + y * w.g(j, i);
                        w.s(j, m, v);
                    }
                }
            }
        }
    }
    for i in 3..=n {
        for j in 1..(i - 1) {
            w.s(i, j, T::zero());
        }
    }
}

#[inline]
fn sign<T: Real>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

fn hessenberg_qr<T: Real>(a: &Mat<T>) -> Result<Vec<Eigenvalue<T>>> {
    let n = a.dim();
    let mut w = Work { n, a: a.as_slice().to_vec() };
    balance(&mut w);
    to_hessenberg(&mut w);

    let mut wr = vec![T::zero(); n + 1];
    let mut wi = vec![T::zero(); n + 1];
    let mut anorm = T::zero();
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += w.g(i, j).abs();
        }
    }
    let (half, zero) = (T::c(0.5), T::zero());
    let mut nn = n;
    let mut t = zero;
    let mut total_its = 0usize;
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = w.g(l - 1, l - 1).abs() + w.g(l, l).abs();
                if s == zero {
                    s = anorm;
                }
                if w.g(l, l - 1).abs() + s == s {
                    w.s(l, l - 1, zero);
                    break;
                }
                l -= 1;
            }
            let mut x = w.g(nn, nn);
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = zero;
                nn -= 1;
                break;
            }
            let mut y = w.g(nn - 1, nn - 1);
            let mut ww = w.g(nn, nn - 1) * w.g(nn - 1, nn);
            if l == nn - 1 {
                let p = half * (y - x);
                let q = p * p + ww;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= zero {
                    z = p + sign(z, p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != zero {
                        wr[nn] = x - ww / z;
                    }
                    wi[nn - 1] = zero;
                    wi[nn] = zero;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn = nn.saturating_sub(2);
                break;
            }
            if its == MAX_QR_ITERATIONS {
                return Err(Error::NonConvergence {
                    what: "Hessenberg QR eigenvalue iteration",
                    iterations: total_its,
                });
            }
            if its == 10 || its == 20 || its == 40 {
                t += x;
                for i in 1..=nn {
                    let v = w.g(i, i) - x;
                    w.s(i, i, v);
                }
                let s = w.g(nn, nn - 1).abs() + w.g(nn - 1, nn - 2).abs();
                x = T::c(0.75) * s;
                y = x;
                ww = T::c(-0.4375) * s * s;
            }
            its += 1;
            total_its += 1;

            let (mut p, mut q, mut r, mut z);
            let mut m = nn - 2;
            loop {
                z = w.g(m, m);
                r = x - z;
                let s0 = y - z;
                p = (r * s0 - ww) / w.g(m + 1, m) + w.g(m, m + 1);
                q = w.g(m + 1, m + 1) - z - r - s0;
                r = w.g(m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = w.g(m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (w.g(m - 1, m - 1).abs() + z.abs() + w.g(m + 1, m + 1).abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                w.s(i, i - 2, zero);
                if i != m + 2 {
                    w.s(i, i - 3, zero);
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = w.g(k, k - 1);
                    q = w.g(k + 1, k - 1);
                    r = zero;
                    if k != nn - 1 {
                        r = w.g(k + 2, k - 1);
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != zero {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != zero {
                    if k == m {
                        if l != m {
                            let v = -w.g(k, k - 1);
                            w.s(k, k - 1, v);
                        }
                    } else {
                        w.s(k, k - 1, -s * x);
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = w.g(k, j) + q * w.g(k + 1, j);
                        if k != nn - 1 {
                            p += r * w.g(k + 2, j);
                            let v = w.g(k + 2, j) - p * z;
                            w.s(k + 2, j, v);
                        }
                        let v = w.g(k + 1, j) - p * y;
                        w.s(k + 1, j, v);
                        let v = w.g(k, j) - p * x;
                        w.s(k, j, v);
                    }
                    let mmin = nn.min(k + 3);
                    for i in l..=mmin {
                        p = x * w.g(i, k) + y * w.g(i, k + 1);
                        if k != nn - 1 {
                            p += z * w.g(i, k + 2);
                            let v = w.g(i, k + 2) - p * r;
                            w.s(i, k + 2, v);
                        }
                        let v = w.g(i, k + 1) - p * q;
                        w.s(i, k + 1, v);
                        let v = w.g(i, k) - p;
                        w.s(i, k, v);
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Eigenvalue { re: wr[i], im: wi[i] }).collect())
}
