//! Fixed-size kernels: 3×3 SVD and spectra, the bialternate product and
//! real roots of low-degree trigonometric polynomials.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("input has non-finite entries")]
    NonFinite,
    #[error("polynomial is identically zero")]
    ZeroPolynomial,
}

/// Cross-product matrix: `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn all_finite(m: &Mat3) -> bool {
    m.iter().all(|x| x.is_finite())
}

#[derive(Debug, Clone)]
pub struct Svd3 {
    /// Sorted descending. The last value carries a negative sign when the
    /// input has negative determinant, so that both frames stay proper.
    pub singular_values: [f64; 3],
    /// Left singular vectors as columns.
    pub u: Mat3,
    /// Right singular vectors as columns.
    pub v: Mat3,
}

impl Svd3 {
    pub fn reconstruct(&self) -> Mat3 {
        let s = &self.singular_values;
        self.u * Mat3::from_diagonal(&Vec3::new(s[0], s[1], s[2])) * self.v.transpose()
    }
}

pub fn svd3(m: &Mat3) -> Result<Svd3, NumericsError> {
    if !all_finite(m) {
        return Err(NumericsError::NonFinite);
    }
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));

    let mut uu = Mat3::zeros();
    let mut vv = Mat3::zeros();
    let mut sv = [0.0; 3];
    for (k, &i) in order.iter().enumerate() {
        uu.set_column(k, &u.column(i));
        vv.set_column(k, &vt.row(i).transpose());
        sv[k] = s[i];
    }
    if uu.determinant() < 0.0 {
        uu.set_column(2, &(-uu.column(2)));
        sv[2] = -sv[2];
    }
    if vv.determinant() < 0.0 {
        vv.set_column(2, &(-vv.column(2)));
        sv[2] = -sv[2];
    }
    Ok(Svd3 { singular_values: sv, u: uu, v: vv })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectrum3 {
    pub eigenvalues: [Complex64; 3],
    /// How many of the eigenvalues are real.
    pub dominant_real_count: usize,
}

impl Spectrum3 {
    pub fn max_real(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// The complex pair with positive imaginary part, if any.
    pub fn complex_pair(&self) -> Option<Complex64> {
        self.eigenvalues.iter().copied().filter(|z| z.im > 0.0).max_by(|a, b| a.im.total_cmp(&b.im))
    }
}

fn cubic_eval(a: f64, b: f64, c: f64, x: f64) -> (f64, f64) {
    let f = ((x + a) * x + b) * x + c;
    let df = (3.0 * x + 2.0 * a) * x + b;
    (f, df)
}

fn polish_cubic_root(a: f64, b: f64, c: f64, mut x: f64) -> f64 {
    let (mut f, _) = cubic_eval(a, b, c, x);
    for _ in 0..4 {
        let (_, df) = cubic_eval(a, b, c, x);
        if df == 0.0 || f == 0.0 {
            break;
        }
        let next = x - f / df;
        let (fn_, _) = cubic_eval(a, b, c, next);
        if fn_.abs() < f.abs() {
            x = next;
            f = fn_;
        } else {
            break;
        }
    }
    x
}

/// Roots of x³ + a x² + b x + c.
fn cubic_roots(a: f64, b: f64, c: f64) -> [Complex64; 3] {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);

    if disc <= 0.0 && p < 0.0 {
        // three real roots
        let r = (-p / 3.0).sqrt();
        let arg = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0);
        let t = arg.acos() / 3.0;
        let mut roots = [0.0; 3];
        for (k, root) in roots.iter_mut().enumerate() {
            let y = 2.0 * r * (t - 2.0 * PI * k as f64 / 3.0).cos();
            *root = polish_cubic_root(a, b, c, y - shift);
        }
        return roots.map(|x| Complex64::new(x, 0.0));
    }

    let y = if disc > 0.0 {
        let big = q.abs() / 2.0 + disc.sqrt();
        let s = -q.signum() * big.cbrt();
        if s != 0.0 {
            s - p / (3.0 * s)
        } else {
            0.0
        }
    } else {
        // p == 0 and q == 0: triple root
        0.0
    };
    let r = polish_cubic_root(a, b, c, y - shift);

    // deflate (x - r)(x² + s x + t)
    let s = a + r;
    let t = if r != 0.0 && (r * s).abs() > b.abs() { -c / r } else { b + r * s };
    let d = s * s - 4.0 * t;
    let (z1, z2) = if d < 0.0 {
        let im = (-d).sqrt() / 2.0;
        (Complex64::new(-s / 2.0, im), Complex64::new(-s / 2.0, -im))
    } else {
        let w = -(s + s.signum() * d.sqrt()) / 2.0;
        let x1 = if w != 0.0 { w } else { -s / 2.0 };
        let x2 = if x1 != 0.0 { t / x1 } else { 0.0 };
        (Complex64::new(polish_cubic_root(a, b, c, x1), 0.0), Complex64::new(polish_cubic_root(a, b, c, x2), 0.0))
    };
    [Complex64::new(r, 0.0), z1, z2]
}

/// Closed-form spectrum of a 3×3 matrix via its characteristic cubic.
pub fn eig3(m: &Mat3) -> Result<Spectrum3, NumericsError> {
    if !all_finite(m) {
        return Err(NumericsError::NonFinite);
    }
    let tr = m.trace();
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let det = m.determinant();
    let eigenvalues = cubic_roots(-tr, minors, -det);
    let dominant_real_count = eigenvalues.iter().filter(|z| z.im == 0.0).count();
    Ok(Spectrum3 { eigenvalues, dominant_real_count })
}

/// The matrix 2A⊙I; its eigenvalues are the pairwise sums λi + λj of A's.
pub fn bialternate(a: &Mat3) -> Mat3 {
    Mat3::new(
        a[(0, 0)] + a[(1, 1)],
        a[(1, 2)],
        -a[(0, 2)],
        a[(2, 1)],
        a[(2, 2)] + a[(0, 0)],
        a[(0, 1)],
        -a[(2, 0)],
        a[(1, 0)],
        a[(1, 1)] + a[(2, 2)],
    )
}

/// a₀ + Σₖ (aₖ cos kθ + bₖ sin kθ) for k ≤ 4.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrigPoly {
    pub cos: [f64; 5],
    /// `sin[0]` is unused and kept at zero.
    pub sin: [f64; 5],
}

impl TrigPoly {
    pub const MAX_DEGREE: usize = 4;

    pub fn constant(c: f64) -> Self {
        let mut p = Self::default();
        p.cos[0] = c;
        p
    }

    pub fn cos_theta() -> Self {
        let mut p = Self::default();
        p.cos[1] = 1.0;
        p
    }

    pub fn sin_theta() -> Self {
        let mut p = Self::default();
        p.sin[1] = 1.0;
        p
    }

    pub fn degree(&self) -> usize {
        (0..=Self::MAX_DEGREE).rev().find(|&k| self.cos[k] != 0.0 || self.sin[k] != 0.0).unwrap_or(0)
    }

    pub fn scale(&self) -> f64 {
        self.cos.iter().chain(self.sin.iter()).fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.scale() == 0.0
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let (s1, c1) = theta.sin_cos();
        let (mut ck, mut sk) = (1.0, 0.0);
        let mut acc = self.cos[0];
        for k in 1..=Self::MAX_DEGREE {
            let c = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = c;
            acc += self.cos[k] * ck + self.sin[k] * sk;
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        let mut d = Self::default();
        for k in 1..=Self::MAX_DEGREE {
            let kf = k as f64;
            d.cos[k] = kf * self.sin[k];
            d.sin[k] = -kf * self.cos[k];
        }
        d
    }

    /// θ ↦ p(θ + π).
    pub fn shifted_by_pi(&self) -> Self {
        let mut p = *self;
        for k in (1..=Self::MAX_DEGREE).step_by(2) {
            p.cos[k] = -p.cos[k];
            p.sin[k] = -p.sin[k];
        }
        p
    }

    /// (1 + t²)⁴ p(2 atan t), ascending coefficients in t.
    pub fn tan_half_polynomial(&self) -> [f64; 9] {
        // powers of (1 + i t), as (re, im) coefficient arrays
        let mut pw = [[(0.0f64, 0.0f64); 9]; 9];
        pw[0][0] = (1.0, 0.0);
        for n in 1..9 {
            for j in 0..9 {
                let (re, im) = pw[n - 1][j];
                pw[n][j].0 += re;
                pw[n][j].1 += im;
                if j + 1 < 9 {
                    // times i t
                    pw[n][j + 1].0 -= im;
                    pw[n][j + 1].1 += re;
                }
            }
        }
        let binom = |n: usize, k: usize| -> f64 {
            let mut r = 1.0;
            for i in 0..k {
                r = r * (n - i) as f64 / (i + 1) as f64;
            }
            r
        };
        let mut out = [0.0; 9];
        for k in 0..=Self::MAX_DEGREE {
            let (a, b) = (self.cos[k], if k > 0 { self.sin[k] } else { 0.0 });
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let e = Self::MAX_DEGREE - k;
            for j in 0..=2 * k {
                let (re, im) = pw[2 * k][j];
                let term = a * re + b * im;
                if term == 0.0 {
                    continue;
                }
                for i in 0..=e {
                    out[j + 2 * i] += term * binom(e, i);
                }
            }
        }
        out
    }
}

impl Add for TrigPoly {
    type Output = TrigPoly;
    fn add(mut self, rhs: TrigPoly) -> TrigPoly {
        for k in 0..=Self::MAX_DEGREE {
            self.cos[k] += rhs.cos[k];
            self.sin[k] += rhs.sin[k];
        }
        self
    }
}

impl Sub for TrigPoly {
    type Output = TrigPoly;
    fn sub(self, rhs: TrigPoly) -> TrigPoly {
        self + (-rhs)
    }
}

impl Neg for TrigPoly {
    type Output = TrigPoly;
    fn neg(self) -> TrigPoly {
        self * -1.0
    }
}

impl Mul<f64> for TrigPoly {
    type Output = TrigPoly;
    fn mul(mut self, rhs: f64) -> TrigPoly {
        for k in 0..=Self::MAX_DEGREE {
            self.cos[k] *= rhs;
            self.sin[k] *= rhs;
        }
        self
    }
}

impl Mul for TrigPoly {
    type Output = TrigPoly;

    /// Product by the product-to-sum identities. Panics if the result would
    /// exceed degree 4.
    fn mul(self, rhs: TrigPoly) -> TrigPoly {
        assert!(self.degree() + rhs.degree() <= Self::MAX_DEGREE, "trigonometric product exceeds degree 4");
        let mut out = TrigPoly::default();
        let mut put = |n: isize, c: f64, s: f64| {
            // c·cos(nθ) + s·sin(nθ) with n possibly negative
            let (k, s) = if n < 0 { ((-n) as usize, -s) } else { (n as usize, s) };
            out.cos[k] += c;
            if k > 0 {
                out.sin[k] += s;
            }
        };
        for j in 0..=Self::MAX_DEGREE {
            for k in 0..=Self::MAX_DEGREE {
                let (aj, bj, ak, bk) = (self.cos[j], self.sin[j], rhs.cos[k], rhs.sin[k]);
                if (aj == 0.0 && bj == 0.0) || (ak == 0.0 && bk == 0.0) {
                    continue;
                }
                let (p, m) = ((j + k) as isize, j as isize - k as isize);
                // cos j cos k
                put(p, 0.5 * aj * ak, 0.0);
                put(m, 0.5 * aj * ak, 0.0);
                // sin j sin k
                put(m, 0.5 * bj * bk, 0.0);
                put(p, -0.5 * bj * bk, 0.0);
                // sin j cos k
                put(p, 0.0, 0.5 * bj * ak);
                put(m, 0.0, 0.5 * bj * ak);
                // cos j sin k
                put(p, 0.0, 0.5 * aj * bk);
                put(m, 0.0, -0.5 * aj * bk);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigRoot {
    pub theta: f64,
    /// Set when two roots merged or the root sits on a critical point.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigRoots {
    pub roots: Vec<TrigRoot>,
    /// A critical value came close enough to zero that a pair of roots may
    /// have been created or lost by rounding.
    pub near_double: bool,
}

fn horner(c: &[f64], x: f64) -> (f64, f64, f64) {
    // value, derivative, rounding-error bound
    let mut f = 0.0;
    let mut df = 0.0;
    let mut bound = 0.0;
    for &ci in c.iter().rev() {
        df = df * x + f;
        f = f * x + ci;
        bound = bound * x.abs() + ci.abs();
    }
    (f, df, bound)
}

fn trim(c: &[f64]) -> &[f64] {
    let mut n = c.len();
    while n > 0 && c[n - 1] == 0.0 {
        n -= 1;
    }
    &c[..n]
}

struct Hit {
    x: f64,
    double: bool,
}

fn bracketed_root(c: &[f64], mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, df, _) = horner(c, x);
        if f == 0.0 {
            return x;
        }
        if (f < 0.0) == (flo < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            break;
        }
        let newton = if df != 0.0 { x - f / df } else { f64::NAN };
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    x
}

/// Real roots of an ascending-coefficient polynomial inside [lo, hi], found by
/// recursing on the derivative so that each monotone piece holds at most one.
fn poly_roots_in(c: &[f64], lo: f64, hi: f64, near_double: &mut bool, hits: &mut Vec<Hit>) {
    let c = trim(c);
    if c.len() <= 1 {
        return;
    }
    if c.len() == 2 {
        let x = -c[0] / c[1];
        if x >= lo && x <= hi {
            hits.push(Hit { x, double: false });
        }
        return;
    }
    let dc: Vec<f64> = c.iter().enumerate().skip(1).map(|(i, &ci)| i as f64 * ci).collect();
    let mut crit_hits = Vec::new();
    let mut ignored = false;
    poly_roots_in(&dc, lo, hi, &mut ignored, &mut crit_hits);
    let mut knots: Vec<f64> = vec![lo];
    knots.extend(crit_hits.iter().map(|h| h.x).filter(|&x| x > lo && x < hi));
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let vals: Vec<(f64, f64)> = knots
        .iter()
        .map(|&x| {
            let (f, _, b) = horner(c, x);
            (f, b)
        })
        .collect();
    for (i, (&x, &(f, bound))) in knots.iter().zip(vals.iter()).enumerate() {
        let interior = i > 0 && i + 1 < knots.len();
        let round = 32.0 * f64::EPSILON * bound;
        if f.abs() <= round {
            hits.push(Hit { x, double: interior });
        } else if interior && f.abs() <= 1e-9 * bound {
            *near_double = true;
        }
    }
    for i in 0..knots.len() - 1 {
        let (fa, ba) = vals[i];
        let (fb, bb) = vals[i + 1];
        let za = fa.abs() <= 32.0 * f64::EPSILON * ba;
        let zb = fb.abs() <= 32.0 * f64::EPSILON * bb;
        if !za && !zb && (fa < 0.0) != (fb < 0.0) {
            hits.push(Hit { x: bracketed_root(c, knots[i], knots[i + 1], fa), double: false });
        }
    }
}

fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Distance between two angles on the circle.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

fn newton_polish(p: &TrigPoly, dp: &TrigPoly, mut theta: f64) -> f64 {
    let mut f = p.eval(theta);
    for _ in 0..12 {
        let d = dp.eval(theta);
        if f == 0.0 || d == 0.0 {
            break;
        }
        let next = theta - f / d;
        let fnext = p.eval(next);
        if fnext.abs() < f.abs() {
            theta = next;
            f = fnext;
        } else {
            break;
        }
    }
    wrap_angle(theta)
}

/// All real roots in (−π, π] of a trigonometric polynomial of degree ≤ 4.
///
/// The half circle |θ| ≤ π/2 is mapped to t = tan(θ/2) ∈ [−1, 1]; the other
/// half is handled the same way after shifting θ by π, so θ = π needs no
/// special pole treatment. Each root is polished by Newton on the
/// trigonometric form. Roots closer than 1e-9 are merged and flagged.
pub fn trig_poly_roots(p: &TrigPoly) -> Result<TrigRoots, NumericsError> {
    if p.cos.iter().chain(p.sin.iter()).any(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    if p.is_zero() {
        return Err(NumericsError::ZeroPolynomial);
    }
    let dp = p.derivative();
    let mut near_double = false;
    let mut raw: Vec<(f64, bool)> = Vec::new();
    for (shift, poly) in [(0.0, *p), (PI, p.shifted_by_pi())] {
        let coeffs = poly.tan_half_polynomial();
        let mut hits = Vec::new();
        poly_roots_in(&coeffs, -1.0, 1.0, &mut near_double, &mut hits);
        for h in hits {
            let theta = wrap_angle(2.0 * h.x.atan() + shift);
            raw.push((newton_polish(p, &dp, theta), h.double));
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut roots: Vec<TrigRoot> = Vec::with_capacity(raw.len());
    for (theta, double) in raw {
        match roots.last_mut() {
            Some(last) if angle_distance(last.theta, theta) < 1e-9 => {
                last.degenerate |= double || !seam_duplicate(last.theta, theta);
            }
            _ => roots.push(TrigRoot { theta, degenerate: double }),
        }
    }
    if roots.len() > 1 {
        let (first, last) = (roots[0].theta, roots[roots.len() - 1].theta);
        if angle_distance(first, last) < 1e-9 {
            let d = roots.pop().expect("nonempty").degenerate;
            roots[0].degenerate |= d || !seam_duplicate(first, last);
        }
    }
    Ok(TrigRoots { roots, near_double })
}

// A root on θ = ±π/2 is found from both half circles; after polishing the
// two copies agree to rounding and are not a degeneracy.
fn seam_duplicate(a: f64, b: f64) -> bool {
    let near_boundary = |x: f64| (x.abs() - PI / 2.0).abs() < 1e-6;
    near_boundary(a) && near_boundary(b) && angle_distance(a, b) < 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng) -> Mat3 {
        Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn svd_identity() {
        let s = svd3(&Mat3::identity()).unwrap();
        for v in s.singular_values {
            assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn svd_reconstructs_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let m = random_matrix(&mut rng);
            let s = svd3(&m).unwrap();
            assert!((s.reconstruct() - m).amax() < 1e-12);
            assert_relative_eq!(s.u.determinant(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(s.v.determinant(), 1.0, epsilon = 1e-12);
            assert!(s.singular_values[0] >= s.singular_values[1]);
        }
    }

    #[test]
    fn svd_rank_two_kernel() {
        let m = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 3.0)) * skew(&Vec3::new(0.3, -0.5, 0.8).normalize());
        let s = svd3(&m).unwrap();
        assert!(s.singular_values[2].abs() < 1e-12);
        assert!((m * s.v.column(2)).norm() < 1e-12);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut m = Mat3::identity();
        m[(1, 2)] = f64::NAN;
        assert_eq!(svd3(&m).unwrap_err(), NumericsError::NonFinite);
    }

    fn sorted_re(s: &Spectrum3) -> Vec<f64> {
        let mut v: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn eig_diagonal() {
        let s = eig3(&Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0))).unwrap();
        let re = sorted_re(&s);
        for (a, b) in re.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(s.dominant_real_count, 3);
    }

    #[test]
    fn eig_rotation_generator() {
        let s = eig3(&skew(&Vec3::z())).unwrap();
        let mut z: Vec<Complex64> = s.eigenvalues.to_vec();
        z.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((z[0] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!(z[1].norm() < 1e-12);
        assert!((z[2] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    // Independent oracle: bracket real roots of the characteristic cubic by a
    // dense scan and bisection, then recover the rest from trace and det.
    fn oracle_spectrum(m: &Mat3) -> Vec<Complex64> {
        let tr = m.trace();
        let det = m.determinant();
        let f = |x: f64| (m - Mat3::identity() * x).determinant();
        let bound = 1.0 + m.iter().map(|x| x.abs()).sum::<f64>();
        let n = 20000;
        let mut reals = Vec::new();
        let mut prev = (-bound, f(-bound));
        for i in 1..=n {
            let x = -bound + 2.0 * bound * i as f64 / n as f64;
            let fx = f(x);
            if (fx < 0.0) != (prev.1 < 0.0) {
                let (mut a, mut b, fa) = (prev.0, x, prev.1);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if (f(mid) < 0.0) == (fa < 0.0) {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                reals.push(0.5 * (a + b));
            }
            prev = (x, fx);
        }
        if reals.len() == 1 {
            let r = reals[0];
            let re = (tr - r) / 2.0;
            let modulus2 = det / r;
            let im = (modulus2 - re * re).max(0.0).sqrt();
            vec![Complex64::new(r, 0.0), Complex64::new(re, im), Complex64::new(re, -im)]
        } else {
            reals.into_iter().map(|r| Complex64::new(r, 0.0)).collect()
        }
    }

    fn match_spectra(a: &[Complex64], b: &[Complex64]) -> f64 {
        // greedy nearest matching; fine for well separated spectra
        let mut used = [false; 3];
        let mut worst: f64 = 0.0;
        for z in a {
            let (j, d) = b
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, w)| (j, (z - w).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            used[j] = true;
            worst = worst.max(d);
        }
        worst
    }

    #[test]
    fn eig_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let m = random_matrix(&mut rng);
            let s = eig3(&m).unwrap();
            let o = oracle_spectrum(&m);
            if o.len() != 3 {
                continue;
            }
            assert!(match_spectra(&s.eigenvalues, &o) < 1e-9, "{m} {:?} {:?}", s.eigenvalues, o);
        }
    }

    #[test]
    fn bialternate_diagonal() {
        let b = bialternate(&Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 5.0)));
        assert_eq!(b, Mat3::from_diagonal(&Vec3::new(3.0, 6.0, 7.0)));
    }

    #[test]
    fn bialternate_detects_imaginary_pair() {
        // real Jordan block with ±2i plus −1, conjugated by a random basis
        let j = Mat3::new(0.0, 2.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.0, -1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_matrix(&mut rng) + Mat3::identity() * 2.0;
        let a = s * j * s.try_inverse().unwrap();
        assert!(bialternate(&a).determinant().abs() < 1e-10);
    }

    #[test]
    fn bialternate_pairwise_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = random_matrix(&mut rng);
            let l = eig3(&a).unwrap().eigenvalues;
            let sums = [l[0] + l[1], l[0] + l[2], l[1] + l[2]];
            let b = eig3(&bialternate(&a)).unwrap().eigenvalues;
            assert!(match_spectra(&sums, &b) < 1e-9);
        }
    }

    #[test]
    fn cos_two_theta_roots() {
        let mut p = TrigPoly::default();
        p.cos[2] = 1.0;
        let r = trig_poly_roots(&p).unwrap();
        let got: Vec<f64> = r.roots.iter().map(|r| r.theta).collect();
        let want = [-3.0 * PI / 4.0, -PI / 4.0, PI / 4.0, 3.0 * PI / 4.0];
        assert_eq!(got.len(), 4);
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!(r.roots.iter().all(|r| !r.degenerate));
    }

    #[test]
    fn roots_at_pi_and_half_pi() {
        // cos θ has roots ±π/2, which sit on the seam of the two half circles
        let r = trig_poly_roots(&TrigPoly::cos_theta()).unwrap();
        assert_eq!(r.roots.len(), 2);
        assert!(r.roots.iter().all(|r| !r.degenerate));
        // sin θ has roots 0 and π
        let r = trig_poly_roots(&TrigPoly::sin_theta()).unwrap();
        assert_eq!(r.roots.len(), 2);
        assert!((r.roots[1].theta - PI).abs() < 1e-14);
    }

    #[test]
    fn zero_polynomial_is_degenerate() {
        assert_eq!(trig_poly_roots(&TrigPoly::default()).unwrap_err(), NumericsError::ZeroPolynomial);
    }

    #[test]
    fn double_root_flagged() {
        // (1 - cos θ) has a double root at 0
        let p = TrigPoly::constant(1.0) - TrigPoly::cos_theta();
        let r = trig_poly_roots(&p).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert!(r.roots[0].degenerate);
    }

    #[test]
    fn product_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = TrigPoly::default();
        let mut b = TrigPoly::default();
        for k in 0..=2 {
            a.cos[k] = rng.random_range(-1.0..1.0);
            b.cos[k] = rng.random_range(-1.0..1.0);
            if k > 0 {
                a.sin[k] = rng.random_range(-1.0..1.0);
                b.sin[k] = rng.random_range(-1.0..1.0);
            }
        }
        let c = a * b;
        for i in 0..50 {
            let t = -PI + 0.13 * i as f64;
            assert!((c.eval(t) - a.eval(t) * b.eval(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn tan_half_polynomial_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = TrigPoly::default();
        for k in 0..=4 {
            p.cos[k] = rng.random_range(-1.0..1.0);
            if k > 0 {
                p.sin[k] = rng.random_range(-1.0..1.0);
            }
        }
        let c = p.tan_half_polynomial();
        for i in 0..40 {
            let t = -3.0 + 0.15 * i as f64;
            let (v, _, _) = horner(&c, t);
            let w = (1.0 + t * t).powi(4) * p.eval(2.0 * t.atan());
            assert!((v - w).abs() < 1e-10 * w.abs().max(1.0));
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let mut p = TrigPoly::default();
        p.cos = [0.3, -1.0, 0.5, 0.2, -0.7];
        p.sin = [0.0, 0.4, -0.2, 0.9, 0.1];
        let d = p.derivative();
        for i in 0..20 {
            let t = -3.0 + 0.3 * i as f64;
            let fd = (p.eval(t + 1e-6) - p.eval(t - 1e-6)) / 2e-6;
            assert!((d.eval(t) - fd).abs() < 1e-7);
        }
    }
}
