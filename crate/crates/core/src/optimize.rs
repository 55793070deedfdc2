//! Axial-velocity optimisation: best drive over the chart, optimal
//! magnetisation for a given shape, and v_ax(Ma) curves along cos ψ level sets.

use crate::atlas::{chart_grid, chart_point, eval_chart, wrap_theta, AtlasError, Equilibrium};
use crate::numerics::{bialternate, eig3, skew, Mat3, Vec3};
use crate::search::{linspace, nelder_mead, project_to_zero, zero_contours, Grid2};
use crate::stability::{classify, imaginary_pair, StabilityIndex, HOPF_REL};
use crate::swimmer::{ChiralityData, PDecomposition, Swimmer};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("M12 vanishes: every orientation has zero axial velocity")]
    ZeroVelocity,
    #[error("M22 is singular")]
    SingularM22,
    #[error(transparent)]
    Atlas(#[from] AtlasError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriveOptimum {
    pub theta: f64,
    pub phi: f64,
    pub ma: f64,
    pub cos_psi: f64,
    pub v_ax: f64,
    pub stable: bool,
    /// The optimum sits on the edge of the stable region, next to a Hopf point.
    pub near_hopf: bool,
    /// Stability was requested but no stable grid sample exists; the
    /// unconstrained optimum is returned instead.
    pub stable_set_empty: bool,
    /// φ = π/2 to grid accuracy, as expected for the unconstrained maximum.
    pub on_equator: bool,
}

const DRIVE_THETA: usize = 720;
const DRIVE_PHI: usize = 361;

fn drive_record(e: &Equilibrium, stable_set_empty: bool) -> DriveOptimum {
    let spec = &e.eigenvalues;
    let rho = spec.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let near_hopf = spec.complex_pair().is_some_and(|z| z.re.abs() <= 1e-3 * rho && z.re >= spec.max_real() - 1e-15);
    DriveOptimum {
        theta: e.theta,
        phi: e.phi,
        ma: e.ma,
        cos_psi: e.cos_psi,
        v_ax: e.v_ax,
        stable: e.is_stable(),
        near_hopf,
        stable_set_empty,
        on_equator: (e.phi - FRAC_PI_2).abs() < PI / (DRIVE_PHI - 1) as f64,
    }
}

/// Largest |v_ax| over the chart, from a dense grid refined by Nelder–Mead.
/// With `stable_only`, only index-3 points are admitted.
pub fn optimize_drive(dec: &PDecomposition, stable_only: bool) -> DriveOptimum {
    let grid = chart_grid(dec, DRIVE_THETA, DRIVE_PHI);
    let pick = |filter: bool| grid.iter().filter(|e| !filter || e.is_stable()).max_by(|a, b| a.v_ax.abs().total_cmp(&b.v_ax.abs())).cloned();
    let (best, empty) = match (stable_only, pick(stable_only)) {
        (_, Some(b)) => (b, false),
        (true, None) => (pick(false).expect("non-empty grid"), true),
        (false, None) => unreachable!(),
    };
    let constrained = stable_only && !empty;
    let objective = |x: &[f64]| {
        let (th, ph) = (wrap_theta(x[0]), x[1]);
        if !(0.0..=PI).contains(&ph) {
            return f64::INFINITY;
        }
        let e = eval_chart(dec, th, ph);
        if constrained && !e.is_stable() {
            return f64::INFINITY;
        }
        -e.v_ax.abs()
    };
    let step = 2.0 * PI / DRIVE_THETA as f64;
    let (x, v) = nelder_mead(objective, &[best.theta, best.phi], step, 1e-14, 4000);
    let refined = if v <= -best.v_ax.abs() { eval_chart(dec, wrap_theta(x[0]), x[1]) } else { best };
    drive_record(&refined, empty)
}

/// f(n) = |n·M22 M12 n| / |M22 n|, signed.
fn f_signed(m12: &Mat3, m22: &Mat3, n: &Vec3) -> f64 {
    let s = m22 * m12;
    n.dot(&(s * n)) / (m22 * n).norm()
}

pub fn axial_bound(m12: &Mat3, m22: &Mat3, n: &Vec3) -> f64 {
    f_signed(m12, m22, &n.normalize()).abs()
}

/// Points on the unit sphere by the golden-angle spiral.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            Vec3::new(r * a.cos(), r * a.sin(), z)
        })
        .collect()
}

/// Flip the sign so that the first component above 1e-12 in magnitude is positive.
pub fn canonical_sign(v: &Vec3) -> Vec3 {
    match v.iter().find(|x| x.abs() > 1e-12) {
        Some(&x) if x < 0.0 => -v,
        _ => *v,
    }
}

fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    (u, n.cross(&u))
}

/// Riemannian Newton on the sphere for a stationary point of g = s·n·Sn/|Kn|.
fn sphere_newton(m12: &Mat3, m22: &Mat3, mut n: Vec3) -> Vec3 {
    let s = {
        let a = m22 * m12;
        (a + a.transpose()) * 0.5
    };
    let k2 = m22.transpose() * m22;
    for _ in 0..50 {
        let kn = m22 * n;
        let b = kn.norm();
        let a = n.dot(&(s * n));
        let ga = 2.0 * s * n;
        let gb = k2 * n / b;
        let grad = ga / b - a * k2 * n / (b * b * b);
        let hb = k2 / b - gb * gb.transpose() / b;
        let hess = 2.0 * s / b - (ga * gb.transpose() + gb * ga.transpose()) / (b * b) + 2.0 * a * gb * gb.transpose() / (b * b * b) - a * hb / (b * b);
        let (u, w) = tangent_basis(&n);
        let g2 = nalgebra::Vector2::new(u.dot(&grad), w.dot(&grad));
        let radial = n.dot(&grad);
        let h2 = nalgebra::Matrix2::new(
            u.dot(&(hess * u)) - radial,
            u.dot(&(hess * w)),
            w.dot(&(hess * u)),
            w.dot(&(hess * w)) - radial,
        );
        let Some(inv) = h2.try_inverse() else { break };
        let d = -(inv * g2);
        if !d.iter().all(|x| x.is_finite()) {
            break;
        }
        let step = if d.norm() > 0.1 { d * (0.1 / d.norm()) } else { d };
        n = (n + step[0] * u + step[1] * w).normalize();
        if g2.norm() < 1e-15 * grad.norm().max(1.0) || step.norm() < 1e-15 {
            break;
        }
    }
    n
}

/// Absolute maximiser n* of f over the unit sphere, up to sign.
pub fn optimal_n(m12: &Mat3, m22: &Mat3) -> Result<Vec3, OptimizeError> {
    if m12.amax() == 0.0 {
        return Err(OptimizeError::ZeroVelocity);
    }
    if m22.try_inverse().is_none() {
        return Err(OptimizeError::SingularM22);
    }
    let seeds = fibonacci_sphere(4096);
    let mut scored: Vec<(f64, Vec3)> = seeds.par_iter().map(|n| (axial_bound(m12, m22, n), *n)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let best = scored
        .iter()
        .take(16)
        .map(|(f0, n0)| {
            let n = sphere_newton(m12, m22, *n0);
            let f = axial_bound(m12, m22, &n);
            if f >= *f0 {
                (f, n)
            } else {
                (*f0, *n0)
            }
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("seeds");
    Ok(canonical_sign(&best.1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MagnetisationOptimum {
    pub n_star: Vec3,
    pub m_star: Vec3,
    /// f(n*), the bound reached by the optimal equilibrium.
    pub v_ax_star: f64,
    pub ma_star: f64,
    pub cos_psi_star: f64,
    /// Field direction and rotation axis of the equilibrium whose real
    /// eigenvalue is non-positive.
    pub b: Vec3,
    pub e3: Vec3,
    pub lambda_i: Option<f64>,
    /// No circle point gave an imaginary pair; `m_star` minimises the
    /// |Re| of the complex pair instead.
    pub hopf_found: bool,
}

/// A(x) = M22[m]×[n×m]× − [M22 n]×.
pub fn circle_matrix(m22: &Mat3, n: &Vec3, m: &Vec3) -> Mat3 {
    m22 * skew(m) * skew(&n.cross(m)) - skew(&(m22 * n))
}

/// Optimal moment direction for a shape: m* ⊥ n* chosen where the optimal
/// equilibrium is a Hopf point.
pub fn optimal_magnetisation(m12: &Mat3, m22: &Mat3) -> Result<MagnetisationOptimum, OptimizeError> {
    let n = optimal_n(m12, m22)?;
    let (u, w) = tangent_basis(&n);
    let m_of = |x: f64| x.cos() * u + x.sin() * w;
    let h = |x: f64| bialternate(&circle_matrix(m22, &n, &m_of(x))).determinant();
    // A(x + π) = A(x), so half the circle suffices
    let xs = linspace(0.0, PI, 1025);
    let hs: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
    let mut hits: Vec<(f64, f64)> = Vec::new();
    for i in 0..xs.len() - 1 {
        if hs[i] == 0.0 || hs[i].signum() != hs[i + 1].signum() {
            let (mut a, mut b) = (xs[i], xs[i + 1]);
            let mut ha = hs[i];
            for _ in 0..100 {
                let c = 0.5 * (a + b);
                let hc = h(c);
                if hc == 0.0 || b - a < 1e-15 {
                    a = c;
                    b = c;
                    break;
                }
                if hc.signum() == ha.signum() {
                    a = c;
                    ha = hc;
                } else {
                    b = c;
                }
            }
            let x = 0.5 * (a + b);
            if let Some(li) = imaginary_pair(&circle_matrix(m22, &n, &m_of(x)), HOPF_REL) {
                hits.push((x, li));
            }
        }
    }
    let (x, lambda_i, hopf_found) = match hits.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
        Some(&(x, li)) => (x, Some(li), true),
        None => {
            let x = xs
                .iter()
                .filter_map(|&x| eig3(&circle_matrix(m22, &n, &m_of(x))).ok()?.complex_pair().map(|z| (x, z.re.abs())))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map_or(0.0, |p| p.0);
            (x, None, false)
        }
    };
    let m_star = canonical_sign(&m_of(x));
    let kn = m22 * n;
    let ma_star = kn.norm();
    let mut e3 = kn / ma_star;
    let mut b = n.cross(&m_star);
    // of the pair ±(B, e3), keep the one whose real eigenvalue is not positive
    let a = m22 * skew(&m_star) * skew(&b) - ma_star * skew(&e3);
    if let Ok(spec) = eig3(&a) {
        let real = spec.eigenvalues.iter().filter(|z| z.im == 0.0).map(|z| z.re).fold(f64::NAN, f64::max);
        if real > 0.0 {
            e3 = -e3;
            b = -b;
        }
    }
    Ok(MagnetisationOptimum {
        n_star: n,
        m_star,
        v_ax_star: axial_bound(m12, m22, &n),
        ma_star,
        cos_psi_star: e3.dot(&b),
        b,
        e3,
        lambda_i,
        hopf_found,
    })
}

/// The swimmer re-magnetised along `m_star`.
pub fn remagnetise(s: &Swimmer, opt: &MagnetisationOptimum) -> Swimmer {
    s.with_moment(opt.m_star).expect("unit moment")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub phi: f64,
    pub ma: f64,
    pub v_ax: f64,
    pub stable: bool,
}

/// One connected piece of a cos ψ level set, ordered along the curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VaxCurve {
    pub cos_psi: f64,
    pub points: Vec<CurvePoint>,
}

fn curve_point(dec: &PDecomposition, th: f64, ph: f64) -> CurvePoint {
    let e = eval_chart(dec, th, ph);
    CurvePoint { theta: th, phi: ph, ma: e.ma, v_ax: e.v_ax, stable: e.index == StabilityIndex::Index(3) }
}

/// Trace the level set cos ψ(θ, φ) = `cos_psi` on an `n_points` grid and
/// tag each point with its stability.
pub fn vax_vs_ma_curve(dec: &PDecomposition, cos_psi: f64, n_points: usize) -> Vec<VaxCurve> {
    let n = n_points.max(16);
    let xs = linspace(-PI, PI, n);
    let ys = linspace(0.0, PI, n / 2 + 1);
    let step = 2.0 * PI / n as f64;
    let f = |th: f64, ph: f64| chart_point(dec, th, ph).cos_psi - cos_psi;
    let grid = Grid2::sample(xs, ys, f);
    zero_contours(&grid)
        .into_iter()
        .map(|line| {
            let points: Vec<CurvePoint> = line
                .iter()
                .filter_map(|&(th, ph)| project_to_zero(&f, th, ph, 1e-13, 2.0 * step))
                .filter(|&(_, ph)| (0.0..=PI).contains(&ph))
                .map(|(th, ph)| curve_point(dec, wrap_theta(th), ph))
                .collect();
            VaxCurve { cos_psi, points }
        })
        .filter(|c| c.points.len() >= 2)
        .collect()
}

/// Largest |v_ax| on the level set, refined by golden-section search between
/// the neighbours of the best sample, each probe projected back onto the level set.
pub fn level_set_extremum(dec: &PDecomposition, cos_psi: f64, n_points: usize, stable_only: bool) -> Option<CurvePoint> {
    let curves = vax_vs_ma_curve(dec, cos_psi, n_points);
    let f = |th: f64, ph: f64| chart_point(dec, th, ph).cos_psi - cos_psi;
    let mut best: Option<CurvePoint> = None;
    for c in &curves {
        let p = &c.points;
        for i in 0..p.len() {
            if stable_only && !p[i].stable {
                continue;
            }
            if best.is_some_and(|b| b.v_ax.abs() >= p[i].v_ax.abs()) {
                continue;
            }
            let lo = if i > 0 { p[i - 1] } else { p[i] };
            let hi = if i + 1 < p.len() { p[i + 1] } else { p[i] };
            let at = |s: f64| -> Option<CurvePoint> {
                let (th, ph) = (lo.theta + s * angle_delta(lo.theta, hi.theta), lo.phi + s * (hi.phi - lo.phi));
                let (th, ph) = project_to_zero(&f, th, ph, 1e-13, 0.1)?;
                let q = curve_point(dec, wrap_theta(th), ph);
                (!stable_only || q.stable).then_some(q)
            };
            let score = |s: f64| at(s).map_or(f64::NEG_INFINITY, |q| q.v_ax.abs());
            let g = (5f64.sqrt() - 1.0) / 2.0;
            let (mut a, mut b) = (0.0, 1.0);
            let (mut c1, mut c2) = (b - g * (b - a), a + g * (b - a));
            let (mut f1, mut f2) = (score(c1), score(c2));
            for _ in 0..60 {
                if f1 > f2 {
                    b = c2;
                    c2 = c1;
                    f2 = f1;
                    c1 = b - g * (b - a);
                    f1 = score(c1);
                } else {
                    a = c1;
                    c1 = c2;
                    f1 = f2;
                    c2 = a + g * (b - a);
                    f2 = score(c2);
                }
            }
            let cand = at(0.5 * (a + b)).filter(|q| q.v_ax.abs() >= p[i].v_ax.abs()).unwrap_or(p[i]);
            best = Some(cand);
        }
    }
    best
}

fn angle_delta(a: f64, b: f64) -> f64 {
    wrap_theta(b - a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelSetExtremum {
    pub cos_psi: f64,
    pub point: CurvePoint,
}

/// The cos ψ whose level set carries the largest |v_ax|: a grid over
/// `cos_psi_range` refined by golden-section search.
pub fn best_level_set(dec: &PDecomposition, cos_psi_range: (f64, f64), samples: usize, n_points: usize, stable_only: bool) -> Option<LevelSetExtremum> {
    let cs = linspace(cos_psi_range.0, cos_psi_range.1, samples.max(3));
    let scored: Vec<(f64, Option<CurvePoint>)> = cs.par_iter().map(|&c| (c, level_set_extremum(dec, c, n_points, stable_only))).collect();
    let k = (0..scored.len()).filter(|&k| scored[k].1.is_some()).max_by(|&a, &b| scored[a].1.unwrap().v_ax.abs().total_cmp(&scored[b].1.unwrap().v_ax.abs()))?;
    let score = |c: f64| level_set_extremum(dec, c, n_points, stable_only).map_or(f64::NEG_INFINITY, |p| p.v_ax.abs());
    let (mut a, mut b) = (cs[k.saturating_sub(1)], cs[(k + 1).min(cs.len() - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c1, mut c2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (score(c1), score(c2));
    while b - a > 1e-6 {
        if f1 > f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - g * (b - a);
            f1 = score(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + g * (b - a);
            f2 = score(c2);
        }
    }
    let c = 0.5 * (a + b);
    match level_set_extremum(dec, c, n_points, stable_only) {
        Some(p) if p.v_ax.abs() >= scored[k].1.unwrap().v_ax.abs() => Some(LevelSetExtremum { cos_psi: c, point: p }),
        _ => Some(LevelSetExtremum { cos_psi: scored[k].0, point: scored[k].1.unwrap() }),
    }
}

/// Trajectory pitch 2π·v_ax/Ma of a relative equilibrium.
pub fn pitch(v_ax: f64, ma: f64) -> f64 {
    2.0 * PI * v_ax / ma
}

/// Axial velocity in units of ℓα, as used for the three-bead clusters with
/// the field period as time scale. Equal to pitch/2π; tabulated values may
/// carry the opposite sign.
pub fn velocity_per_rotation(v_ax: f64, ma: f64) -> f64 {
    v_ax / ma
}

/// (α*, v_ax*) in bead-radius scaling with ℓ = 2√2·R_b: lengths by R_b,
/// field rate by mB·F⊥/(ηR_b³) and velocity by mB·|Ch|·F⊥/(ηR_b²).
pub fn bead_scaling(ma: f64, v_ax: f64, chir: &ChiralityData) -> (f64, f64) {
    let ratio = 2.0 * 2f64.sqrt();
    (ma / (ratio.powi(3) * chir.f_perp), v_ax / (ratio * ratio * chir.ch_scalar * chir.f_perp))
}

/// Coefficient of determination of a straight-line fit of v_ax against Ma.
pub fn linearity_r2(points: &[CurvePoint]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 3 {
        return None;
    }
    let mx = points.iter().map(|p| p.ma).sum::<f64>() / n;
    let my = points.iter().map(|p| p.v_ax).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.ma - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.ma - mx) * (p.v_ax - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.v_ax - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy * sxy / (sxx * syy))
}

/// Stability index along a curve with marginal points kept, for locating gaps.
pub fn index_profile(dec: &PDecomposition, curve: &VaxCurve) -> Vec<StabilityIndex> {
    curve.points.iter().map(|p| classify(&eval_chart(dec, p.theta, p.phi).eigenvalues)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swimmer::{bundled, decompose};

    #[test]
    fn scalar_chirality_picks_extreme_eigenvector() {
        let m22 = Mat3::from_diagonal(&Vec3::new(0.3, 0.7, 0.5));
        let n = optimal_n(&(0.2 * m22), &m22).unwrap();
        assert!((n.abs() - Vec3::y()).norm() < 1e-9, "{n}");
        assert!((axial_bound(&(0.2 * m22), &m22, &n) - 0.2 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_coupling_refused() {
        assert_eq!(optimal_n(&Mat3::zeros(), &Mat3::identity()), Err(OptimizeError::ZeroVelocity));
    }

    #[test]
    fn optimum_beats_every_seed() {
        let s = bundled("A").unwrap();
        let n = optimal_n(&s.m12, &s.m22).unwrap();
        let f = axial_bound(&s.m12, &s.m22, &n);
        for p in fibonacci_sphere(20000) {
            assert!(axial_bound(&s.m12, &s.m22, &p) <= f + 1e-15);
        }
    }

    #[test]
    fn optimal_moment_is_orthogonal() {
        let s = bundled("B").unwrap();
        let o = optimal_magnetisation(&s.m12, &s.m22).unwrap();
        assert!(o.m_star.dot(&o.n_star).abs() < 1e-12);
        assert!((o.m_star.norm() - 1.0).abs() < 1e-12);
        // the reported pair is an equilibrium of the re-magnetised swimmer
        let d = decompose(&s.with_moment(o.m_star).unwrap()).unwrap();
        assert!((o.ma_star * o.e3 - d.p * o.b).norm() < 1e-12);
    }

    #[test]
    fn drive_optimum_dominates_grid() {
        let d = decompose(&bundled("A").unwrap()).unwrap();
        let free = optimize_drive(&d, false);
        assert!(free.on_equator);
        let st = optimize_drive(&d, true);
        assert!(st.stable && !st.stable_set_empty);
        assert!(st.v_ax.abs() <= free.v_ax.abs());
        for e in chart_grid(&d, 180, 91).iter().filter(|e| e.is_stable()) {
            assert!(e.v_ax.abs() <= st.v_ax.abs() + 1e-15);
        }
    }

    #[test]
    fn level_set_points_sit_on_level() {
        let d = decompose(&bundled("meshkati-90").unwrap()).unwrap();
        for c in vax_vs_ma_curve(&d, 0.1, 200) {
            for p in &c.points {
                assert!((chart_point(&d, p.theta, p.phi).cos_psi - 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn straight_line_scores_one() {
        let pts: Vec<CurvePoint> = (0..10).map(|i| CurvePoint { theta: 0.0, phi: 0.0, ma: i as f64, v_ax: 2.0 * i as f64 + 1.0, stable: true }).collect();
        assert!((linearity_r2(&pts).unwrap() - 1.0).abs() < 1e-14);
    }
}
