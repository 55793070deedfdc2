//! Linear stability of relative equilibria, and fold and Hopf curves on the chart.

use crate::atlas::{chart_point, chart_vectors, theta_terms, Equilibrium};
use crate::numerics::{bialternate, eig3, skew, Mat3, Spectrum3, Vec3};
use crate::search::{linspace, project_to_zero, zero_contours, Grid2};
use crate::swimmer::PDecomposition;
use nalgebra::Matrix2;
use serde::Serialize;
use std::f64::consts::PI;

/// Eigenvalues with |Re| at or below this count as marginal.
pub const TOL_RE: f64 = 1e-9;

/// Number of eigenvalues of the linearisation with negative real part.
/// Index 3 is stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StabilityIndex {
    Index(u8),
    Marginal,
}

impl StabilityIndex {
    pub fn value(self) -> Option<u8> {
        match self {
            StabilityIndex::Index(k) => Some(k),
            StabilityIndex::Marginal => None,
        }
    }
}

impl std::fmt::Display for StabilityIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabilityIndex::Index(k) => write!(f, "{k}"),
            StabilityIndex::Marginal => write!(f, "marginal"),
        }
    }
}

/// A = P[B]× − Ma[e3]×.
pub fn linearize_parts(dec: &PDecomposition, e3: &Vec3, b: &Vec3, ma: f64) -> Mat3 {
    dec.p * skew(b) - ma * skew(e3)
}

pub fn linearize(dec: &PDecomposition, eq: &Equilibrium) -> Mat3 {
    linearize_parts(dec, &eq.e3, &eq.b, eq.ma)
}

pub fn classify(spec: &Spectrum3) -> StabilityIndex {
    if spec.eigenvalues.iter().any(|z| !z.re.is_finite() || z.re.abs() <= TOL_RE) {
        return StabilityIndex::Marginal;
    }
    StabilityIndex::Index(spec.eigenvalues.iter().filter(|z| z.re < -TOL_RE).count() as u8)
}

pub fn stability_index(a: &Mat3) -> StabilityIndex {
    match eig3(a) {
        Ok(s) => classify(&s),
        Err(_) => StabilityIndex::Marginal,
    }
}

/// ∂(Ma, cos ψ)/∂(θ, φ), rows (Ma, cos ψ), columns (θ, φ).
pub fn chart_jacobian(dec: &PDecomposition, theta: f64, phi: f64) -> Matrix2<f64> {
    let t = theta_terms(dec, theta);
    let (sp, cp) = phi.sin_cos();
    let n2 = t.n * t.n;
    let dma_dth = -sp * t.dn / n2;
    let dma_dph = cp / t.n;
    let dc_dth = cp * t.dl + sp * (t.dk * t.n - t.k * t.dn) / n2;
    let dc_dph = -sp * t.l + cp * t.k / t.n;
    Matrix2::new(dma_dth, dma_dph, dc_dth, dc_dph)
}

/// Determinant of the chart Jacobian; vanishes on folds.
pub fn fold_indicator(dec: &PDecomposition, theta: f64, phi: f64) -> f64 {
    chart_jacobian(dec, theta, phi).determinant()
}

pub fn stability_matrix_at(dec: &PDecomposition, theta: f64, phi: f64) -> Mat3 {
    let (e3, b) = chart_vectors(dec, theta, phi);
    linearize_parts(dec, &e3, &b, chart_point(dec, theta, phi).ma)
}

/// det(2A⊙I); vanishes where two eigenvalues of A sum to zero.
pub fn hopf_indicator(dec: &PDecomposition, theta: f64, phi: f64) -> f64 {
    bialternate(&stability_matrix_at(dec, theta, phi)).determinant()
}

/// λ_I > 0 when `a` has an eigenpair ±iλ_I up to |Re| ≤ `rel`·λ_I.
/// Opposite real pairs, which also zero the bialternate determinant, give `None`.
pub fn imaginary_pair(a: &Mat3, rel: f64) -> Option<f64> {
    let spec = eig3(a).ok()?;
    let z = spec.complex_pair()?;
    (z.re.abs() <= rel * z.im).then_some(z.im)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveKind {
    Fold,
    Hopf,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Fold => "fold",
            CurveKind::Hopf => "hopf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub phi: f64,
    pub ma: f64,
    pub cos_psi: f64,
    pub lambda_i: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationCurve {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

/// Filter applied to Hopf candidates: |Re| ≤ HOPF_REL·λ_I.
pub const HOPF_REL: f64 = 1e-6;

fn chart_axes(resolution: usize) -> (Vec<f64>, Vec<f64>) {
    let r = resolution.max(8);
    (linspace(-PI, PI, r), linspace(0.0, PI, r))
}

fn make_point(dec: &PDecomposition, theta: f64, phi: f64, lambda_i: Option<f64>) -> CurvePoint {
    let sp = chart_point(dec, theta, phi);
    CurvePoint { theta, phi, ma: sp.ma, cos_psi: sp.cos_psi, lambda_i }
}

fn in_chart(theta: f64, phi: f64) -> bool {
    (-PI..=PI).contains(&theta) && (0.0..=PI).contains(&phi)
}

/// Zero contours of the chart Jacobian determinant on a `resolution`² grid.
pub fn fold_curves(dec: &PDecomposition, resolution: usize) -> Vec<BifurcationCurve> {
    let (xs, ys) = chart_axes(resolution);
    let step = 2.0 * PI / xs.len() as f64;
    let f = |th: f64, ph: f64| fold_indicator(dec, th, ph);
    let grid = Grid2::sample(xs, ys, f);
    let scale = grid.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-14 * scale;
    let mut curves = Vec::new();
    for line in zero_contours(&grid) {
        let pts: Vec<CurvePoint> = line
            .iter()
            .filter_map(|&(th, ph)| project_to_zero(&f, th, ph, tol, 2.0 * step))
            .filter(|&(th, ph)| in_chart(th, ph))
            .map(|(th, ph)| make_point(dec, th, ph, None))
            .collect();
        if pts.len() >= 2 {
            curves.push(BifurcationCurve { kind: CurveKind::Fold, points: pts });
        }
    }
    curves
}

/// Zero contours of det(2A⊙I), with opposite-real-pair zeros removed. A
/// contour that is only partly genuine is split into its genuine runs.
pub fn hopf_curves(dec: &PDecomposition, resolution: usize) -> Vec<BifurcationCurve> {
    let (xs, ys) = chart_axes(resolution);
    let step = 2.0 * PI / xs.len() as f64;
    let f = |th: f64, ph: f64| hopf_indicator(dec, th, ph);
    let grid = Grid2::sample(xs, ys, f);
    let scale = grid.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;
    let mut curves = Vec::new();
    for line in zero_contours(&grid) {
        let mut run: Vec<CurvePoint> = Vec::new();
        for &(th, ph) in &line {
            let hit = project_to_zero(&f, th, ph, tol, 2.0 * step)
                .filter(|&(a, b)| in_chart(a, b))
                .and_then(|(a, b)| imaginary_pair(&stability_matrix_at(dec, a, b), HOPF_REL).map(|li| (a, b, li)));
            match hit {
                Some((a, b, li)) => run.push(make_point(dec, a, b, Some(li))),
                None => {
                    if run.len() >= 2 {
                        curves.push(BifurcationCurve { kind: CurveKind::Hopf, points: std::mem::take(&mut run) });
                    }
                    run.clear();
                }
            }
        }
        if run.len() >= 2 {
            curves.push(BifurcationCurve { kind: CurveKind::Hopf, points: run });
        }
    }
    curves
}

/// Stability index on either side of each interior point of a curve, at chart
/// distance `offset` along the local normal.
pub fn index_across(dec: &PDecomposition, curve: &BifurcationCurve, offset: f64) -> Vec<(StabilityIndex, StabilityIndex)> {
    let p = &curve.points;
    (1..p.len().saturating_sub(1))
        .filter_map(|i| {
            let (dx, dy) = (p[i + 1].theta - p[i - 1].theta, p[i + 1].phi - p[i - 1].phi);
            let len = (dx * dx + dy * dy).sqrt();
            if len == 0.0 || len > 0.5 {
                return None;
            }
            let (nx, ny) = (-dy / len * offset, dx / len * offset);
            let (a, b) = ((p[i].theta + nx, p[i].phi + ny), (p[i].theta - nx, p[i].phi - ny));
            if !in_chart(a.0, a.1) || !in_chart(b.0, b.1) {
                return None;
            }
            Some((stability_index(&stability_matrix_at(dec, a.0, a.1)), stability_index(&stability_matrix_at(dec, b.0, b.1))))
        })
        .collect()
}
