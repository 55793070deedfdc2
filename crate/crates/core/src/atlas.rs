//! The (θ, φ) chart of relative equilibria and its inverse.
//!
//! A chart point fixes the rotation axis `e3 = cos θ η1 + sin θ η2` and the
//! field direction `B`, at angle φ from `m`. From these follow the Mason number
//! and cos ψ at which that orientation is a relative equilibrium.

use crate::numerics::{angle_distance, eig3, trig_poly_roots, Spectrum3, TrigPoly, Vec3};
use crate::search::{linspace, nelder_mead};
use crate::stability::{chart_jacobian, linearize_parts, classify, StabilityIndex};
use crate::swimmer::PDecomposition;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AtlasError {
    #[error("σ1 and σ2 coincide; the chart is degenerate")]
    Degenerate,
    #[error("the equilibrium polynomial vanishes identically")]
    ZeroPolynomial,
    #[error("non-finite input")]
    NonFinite,
}

/// Image of a chart point on the surface Σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub theta: f64,
    pub phi: f64,
    pub ma: f64,
    pub cos_psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub theta: f64,
    pub phi: f64,
    pub ma: f64,
    pub cos_psi: f64,
    /// Rotation axis in body coordinates.
    pub e3: Vec3,
    /// Field direction in body coordinates.
    pub b: Vec3,
    pub v_ax: f64,
    pub index: StabilityIndex,
    pub eigenvalues: Spectrum3,
    pub near_fold: bool,
}

impl Equilibrium {
    pub fn is_stable(&self) -> bool {
        self.index == StabilityIndex::Index(3)
    }

    pub fn surface_point(&self) -> SurfacePoint {
        SurfacePoint { theta: self.theta, phi: self.phi, ma: self.ma, cos_psi: self.cos_psi }
    }

    /// ‖Ma·e3 − P·B‖ and |e3·B − cos ψ|.
    pub fn residuals(&self, dec: &PDecomposition) -> (f64, f64) {
        ((self.ma * self.e3 - dec.p * self.b).norm(), (self.e3.dot(&self.b) - self.cos_psi).abs())
    }
}

/// The θ-dependent scalars of the chart and their θ-derivatives.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ThetaTerms {
    pub c: f64,
    pub s: f64,
    pub n: f64,
    pub dn: f64,
    pub l: f64,
    pub dl: f64,
    pub k: f64,
    pub dk: f64,
}

pub(crate) fn theta_terms(dec: &PDecomposition, theta: f64) -> ThetaTerms {
    let (s1, s2) = (dec.sigma1, dec.sigma2);
    let (s, c) = theta.sin_cos();
    let n = (c * c / (s1 * s1) + s * s / (s2 * s2)).sqrt();
    let dn = c * s * (1.0 / (s2 * s2) - 1.0 / (s1 * s1)) / n;
    let l = dec.c01 * c / s1 + dec.c02 * s / s2;
    let dl = -dec.c01 * s / s1 + dec.c02 * c / s2;
    let k = dec.c11 * (c * c / (s1 * s1) - s * s / (s2 * s2)) + dec.c12 * c * s / (s1 * s2);
    let dk = -2.0 * dec.c11 * c * s * (1.0 / (s1 * s1) + 1.0 / (s2 * s2)) + dec.c12 * (c * c - s * s) / (s1 * s2);
    ThetaTerms { c, s, n, dn, l, dl, k, dk }
}

/// (Ma, cos ψ) at a chart point.
pub fn chart_point(dec: &PDecomposition, theta: f64, phi: f64) -> SurfacePoint {
    let t = theta_terms(dec, theta);
    let (sp, cp) = phi.sin_cos();
    SurfacePoint { theta, phi, ma: sp / t.n, cos_psi: cp * t.l + sp * t.k / t.n }
}

/// (e3, B) at a chart point.
pub fn chart_vectors(dec: &PDecomposition, theta: f64, phi: f64) -> (Vec3, Vec3) {
    let t = theta_terms(dec, theta);
    let (sp, cp) = phi.sin_cos();
    let e3 = t.c * dec.eta[1] + t.s * dec.eta[2];
    let b = cp * dec.beta[0] + (sp / t.n) * (t.c / dec.sigma1 * dec.beta[1] + t.s / dec.sigma2 * dec.beta[2]);
    (e3, b)
}

/// Axial velocity Ma·e3·Ch·e3 of the helix swept at a chart point.
pub fn axial_velocity(dec: &PDecomposition, theta: f64, phi: f64) -> f64 {
    let (e3, _) = chart_vectors(dec, theta, phi);
    chart_point(dec, theta, phi).ma * e3.dot(&(dec.ch * e3))
}

/// Full equilibrium record at a chart point, including its stability.
pub fn eval_chart(dec: &PDecomposition, theta: f64, phi: f64) -> Equilibrium {
    let sp = chart_point(dec, theta, phi);
    let (e3, b) = chart_vectors(dec, theta, phi);
    let a = linearize_parts(dec, &e3, &b, sp.ma);
    let eigenvalues = eig3(&a).unwrap_or(Spectrum3 {
        eigenvalues: [num_complex::Complex64::new(f64::NAN, 0.0); 3],
        dominant_real_count: 0,
    });
    Equilibrium {
        theta,
        phi,
        ma: sp.ma,
        cos_psi: sp.cos_psi,
        e3,
        b,
        v_ax: sp.ma * e3.dot(&(dec.ch * e3)),
        index: classify(&eigenvalues),
        eigenvalues,
        near_fold: false,
    }
}

/// The degree-4 trigonometric polynomial in θ whose roots are the rotation
/// axes admitting an equilibrium at (Ma, cos ψ):
/// (Ma·K − cos ψ)² + (Ma²N² − 1)·L².
pub fn equilibrium_polynomial(dec: &PDecomposition, ma: f64, cos_psi: f64) -> TrigPoly {
    let (s1, s2) = (dec.sigma1, dec.sigma2);
    let c = TrigPoly::cos_theta();
    let s = TrigPoly::sin_theta();
    let cc = c * c;
    let ss = s * s;
    let cs = c * s;
    let n2 = cc * (1.0 / (s1 * s1)) + ss * (1.0 / (s2 * s2));
    let l = c * (dec.c01 / s1) + s * (dec.c02 / s2);
    let k = (cc * (1.0 / (s1 * s1)) - ss * (1.0 / (s2 * s2))) * dec.c11 + cs * (dec.c12 / (s1 * s2));
    let first = k * ma - TrigPoly::constant(cos_psi);
    first * first + (n2 * (ma * ma) - TrigPoly::constant(1.0)) * (l * l)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solutions {
    pub equilibria: Vec<Equilibrium>,
    /// The root finder saw a near-double root, so the count may be off by a
    /// pair. Happens only within rounding distance of a fold.
    pub near_double: bool,
}

impl Solutions {
    pub fn stable_count(&self) -> usize {
        self.equilibria.iter().filter(|e| e.is_stable()).count()
    }

    pub fn flagged(&self) -> bool {
        self.near_double || self.equilibria.iter().any(|e| e.near_fold || e.index == StabilityIndex::Marginal)
    }
}

const PSI_TOL: f64 = 1e-9;
const PSI_TOL_LOOSE: f64 = 1e-6;

fn chart_residual(dec: &PDecomposition, theta: f64, phi: f64, ma: f64, cos_psi: f64) -> (f64, f64) {
    let sp = chart_point(dec, theta, phi);
    (sp.ma - ma, sp.cos_psi - cos_psi)
}

fn polish(dec: &PDecomposition, mut theta: f64, mut phi: f64, ma: f64, cos_psi: f64) -> (f64, f64, f64) {
    let norm = |r: (f64, f64)| r.0.abs().max(r.1.abs());
    let mut res = norm(chart_residual(dec, theta, phi, ma, cos_psi));
    for _ in 0..6 {
        if res < 1e-15 {
            break;
        }
        let j = chart_jacobian(dec, theta, phi);
        let r = chart_residual(dec, theta, phi, ma, cos_psi);
        let Some(inv) = j.try_inverse() else { break };
        let d = inv * nalgebra::Vector2::new(r.0, r.1);
        if !d.iter().all(|x| x.is_finite()) || d.norm() > 1e-3 {
            break;
        }
        let (t2, p2) = (wrap_theta(theta - d[0]), (phi - d[1]).clamp(0.0, PI));
        let r2 = norm(chart_residual(dec, t2, p2, ma, cos_psi));
        if r2 >= res {
            break;
        }
        theta = t2;
        phi = p2;
        res = r2;
    }
    (theta, phi, res)
}

/// All relative equilibria at fixed (Ma, cos ψ).
pub fn solve_equilibria(dec: &PDecomposition, ma: f64, cos_psi: f64) -> Result<Solutions, AtlasError> {
    if !ma.is_finite() || !cos_psi.is_finite() {
        return Err(AtlasError::NonFinite);
    }
    if dec.degenerate {
        return Err(AtlasError::Degenerate);
    }
    let poly = equilibrium_polynomial(dec, ma, cos_psi);
    let roots = trig_poly_roots(&poly).map_err(|_| AtlasError::ZeroPolynomial)?;
    let dpoly = poly.derivative();
    let scale = poly.scale().max(f64::MIN_POSITIVE);

    let mut out: Vec<Equilibrium> = Vec::new();
    for root in &roots.roots {
        let t = theta_terms(dec, root.theta);
        let mut sin_phi = ma * t.n;
        if sin_phi > 1.0 {
            if sin_phi > 1.0 + 1e-9 {
                continue;
            }
            sin_phi = 1.0;
        }
        let cos_abs = (1.0 - sin_phi * sin_phi).max(0.0).sqrt();
        let mut candidates: Vec<(f64, f64, f64)> = Vec::new();
        for sign in [1.0, -1.0] {
            let phi = sin_phi.atan2(sign * cos_abs);
            candidates.push(polish(dec, root.theta, phi, ma, cos_psi));
            if cos_abs == 0.0 {
                break;
            }
        }
        let steep = dpoly.eval(root.theta).abs() < 1e-7 * scale;
        let mut accepted: Vec<(f64, f64, bool)> = candidates
            .iter()
            .filter(|c| c.2 < PSI_TOL)
            .map(|&(th, ph, _)| (th, ph, root.degenerate || steep))
            .collect();
        if accepted.is_empty() {
            // near a fold the θ root is only good to √ε; keep the best branch and flag it
            if let Some(&(th, ph, r)) = candidates.iter().min_by(|a, b| a.2.total_cmp(&b.2)) {
                if r < PSI_TOL_LOOSE {
                    accepted.push((th, ph, true));
                }
            }
        }
        for (th, ph, flag) in accepted {
            let dup = out.iter().any(|e| angle_distance(e.theta, th) < 1e-9 && (e.phi - ph).abs() < 1e-9);
            if dup {
                continue;
            }
            let mut eq = eval_chart(dec, th, ph);
            eq.near_fold = flag;
            out.push(eq);
        }
    }
    out.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(a.phi.total_cmp(&b.phi)));
    Ok(Solutions { equilibria: out, near_double: roots.near_double })
}

pub(crate) fn wrap_theta(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Chart coordinates of the twin equilibrium obtained by a half turn about
/// the field's rotation plane: e3 → −e3, B → −B.
pub fn symmetric_pair(theta: f64, phi: f64) -> (f64, f64) {
    let t = (2.0 * PI + theta).rem_euclid(2.0 * PI) - PI;
    (wrap_theta(t), PI - phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntersectionKind {
    /// Σ(θ, φ) = Σ(−θ, φ).
    MirrorTheta,
    /// Σ(θ, φ) = Σ(π − θ, φ).
    MirrorPiMinusTheta,
    /// θ ∈ {θ0, θ0 ± π}: Σ(θ, φ) = Σ(θ + π, φ) for every φ.
    Vertical,
    /// φ = π/2: Σ(θ, π/2) = Σ(θ + π, π/2).
    Equator,
}

impl IntersectionKind {
    pub fn label(self) -> &'static str {
        match self {
            IntersectionKind::MirrorTheta => "a",
            IntersectionKind::MirrorPiMinusTheta => "b",
            IntersectionKind::Vertical => "c",
            IntersectionKind::Equator => "d",
        }
    }

    /// The chart point with the same image on Σ.
    pub fn partner(self, theta: f64, phi: f64) -> (f64, f64) {
        match self {
            IntersectionKind::MirrorTheta => (wrap_theta(-theta), phi),
            IntersectionKind::MirrorPiMinusTheta => (wrap_theta(PI - theta), phi),
            IntersectionKind::Vertical | IntersectionKind::Equator => (wrap_theta(theta + PI), phi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersectionCurve {
    pub kind: IntersectionKind,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfIntersections {
    pub curves: Vec<IntersectionCurve>,
    /// Families left out because a coefficient they divide by vanishes.
    pub omitted: Vec<(IntersectionKind, String)>,
}

fn arccot(x: f64) -> f64 {
    1.0_f64.atan2(x)
}

/// The four families of self-intersection curves of Σ, sampled at `n` points each.
pub fn self_intersections(dec: &PDecomposition, n: usize) -> SelfIntersections {
    let n = n.max(2);
    let thetas = linspace(-PI, PI, n);
    let mut curves = Vec::new();
    let mut omitted = Vec::new();
    let tiny = 1e-12 * dec.sigma1;

    if dec.c02.abs() > tiny {
        let pts = thetas
            .iter()
            .map(|&th| {
                let t = theta_terms(dec, th);
                (th, arccot(-dec.c12 * t.c / (dec.c02 * dec.sigma1 * t.n)))
            })
            .collect();
        curves.push(IntersectionCurve { kind: IntersectionKind::MirrorTheta, points: pts });
    } else {
        omitted.push((IntersectionKind::MirrorTheta, "c02 vanishes".to_string()));
    }
    if dec.c01.abs() > tiny {
        let pts = thetas
            .iter()
            .map(|&th| {
                let t = theta_terms(dec, th);
                (th, arccot(-dec.c12 * t.s / (dec.c01 * dec.sigma2 * t.n)))
            })
            .collect();
        curves.push(IntersectionCurve { kind: IntersectionKind::MirrorPiMinusTheta, points: pts });
    } else {
        omitted.push((IntersectionKind::MirrorPiMinusTheta, "c01 vanishes".to_string()));
    }
    if dec.degenerate {
        omitted.push((IntersectionKind::Vertical, "σ1 = σ2".to_string()));
    } else {
        let phis = linspace(0.0, PI, n);
        for th in [dec.theta0, wrap_theta(dec.theta0 + PI)] {
            curves.push(IntersectionCurve { kind: IntersectionKind::Vertical, points: phis.iter().map(|&p| (th, p)).collect() });
        }
    }
    curves.push(IntersectionCurve { kind: IntersectionKind::Equator, points: thetas.iter().map(|&th| (th, FRAC_PI_2)).collect() });
    SelfIntersections { curves, omitted }
}

/// Largest gap |Σ(p) − Σ(partner(p))| over a curve's samples.
pub fn intersection_defect(dec: &PDecomposition, curve: &IntersectionCurve) -> f64 {
    curve
        .points
        .iter()
        .map(|&(th, ph)| {
            let (t2, p2) = curve.kind.partner(th, ph);
            let a = chart_point(dec, th, ph);
            let b = chart_point(dec, t2, p2);
            (a.ma - b.ma).abs().max((a.cos_psi - b.cos_psi).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartRanges {
    pub max_ma: f64,
    pub cos_psi_min: f64,
    pub cos_psi_max: f64,
    /// Half-width √(1 − (β0·η0)²) of the cos ψ interval reachable as Ma → 0.
    pub low_ma_half_width: f64,
}

/// Existence bounds of the chart: Ma ≤ σ1 exactly; the cos ψ range by a
/// `resolution`² sweep refined with Nelder–Mead.
pub fn chart_ranges(dec: &PDecomposition, resolution: usize) -> ChartRanges {
    let res = resolution.max(8);
    let thetas = linspace(-PI, PI, res);
    let phis = linspace(0.0, PI, res);
    let cp = |th: f64, ph: f64| chart_point(dec, th, ph).cos_psi;
    let rows: Vec<((f64, f64, f64), (f64, f64, f64))> = phis
        .par_iter()
        .map(|&ph| {
            let mut lo = (f64::INFINITY, 0.0, 0.0);
            let mut hi = (f64::NEG_INFINITY, 0.0, 0.0);
            for &th in &thetas {
                let v = cp(th, ph);
                if v < lo.0 {
                    lo = (v, th, ph);
                }
                if v > hi.0 {
                    hi = (v, th, ph);
                }
            }
            (lo, hi)
        })
        .collect();
    let lo = rows.iter().map(|r| r.0).min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    let hi = rows.iter().map(|r| r.1).max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    let step = 2.0 * PI / res as f64;
    let clamp_phi = |p: f64| p.clamp(0.0, PI);
    let (_, vlo) = nelder_mead(|x| cp(x[0], clamp_phi(x[1])), &[lo.1, lo.2], step, 1e-12, 2000);
    let (_, vhi) = nelder_mead(|x| -cp(x[0], clamp_phi(x[1])), &[hi.1, hi.2], step, 1e-12, 2000);
    let b0e0 = dec.beta[0].dot(&dec.eta[0]);
    ChartRanges {
        max_ma: dec.sigma1,
        cos_psi_min: vlo.min(lo.0),
        cos_psi_max: (-vhi).max(hi.0),
        low_ma_half_width: (1.0 - b0e0 * b0e0).max(0.0).sqrt(),
    }
}

/// Equilibria on an `n_theta` × `n_phi` chart grid, θ over [−π, π) and φ over
/// [0, π], θ varying fastest.
pub fn chart_grid(dec: &PDecomposition, n_theta: usize, n_phi: usize) -> Vec<Equilibrium> {
    let n_theta = n_theta.max(1);
    let thetas: Vec<f64> = (0..n_theta).map(|i| -PI + 2.0 * PI * i as f64 / n_theta as f64).collect();
    let phis = linspace(0.0, PI, n_phi.max(1));
    phis.par_iter().flat_map_iter(|&ph| thetas.iter().map(move |&th| eval_chart(dec, th, ph)).collect::<Vec<_>>()).collect()
}
