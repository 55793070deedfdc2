//! Swimmer definitions: mobility blocks, magnetic moment, and the singular
//! value decomposition of P = M22·[m]× with its derived coefficients.

use crate::numerics::{skew, svd3, Mat3, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwimmerError {
    #[error("cannot parse swimmer document: {0}")]
    Parse(String),
    #[error("swimmer document needs exactly one of `drag` or `mobility`")]
    MissingBlocks,
    #[error("drag matrix is singular")]
    SingularDrag,
    #[error("M22 is not symmetric positive definite")]
    NotSpd,
    #[error("magnetic moment has zero length")]
    ZeroMoment,
    #[error("non-finite entry in swimmer data")]
    NonFinite,
    #[error("unknown bundled swimmer `{0}`")]
    UnknownBundled(String),
}

type Rows = [[f64; 3]; 3];

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DragDoc {
    #[serde(rename = "D11")]
    d11: Rows,
    #[serde(rename = "D12")]
    d12: Rows,
    #[serde(rename = "D22")]
    d22: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MobilityDoc {
    #[serde(rename = "M11", default, skip_serializing_if = "Option::is_none")]
    m11: Option<Rows>,
    #[serde(rename = "M12")]
    m12: Rows,
    #[serde(rename = "M22")]
    m22: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SwimmerDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drag: Option<DragDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mobility: Option<MobilityDoc>,
    m: [f64; 3],
}

fn to_mat(r: &Rows) -> Mat3 {
    Mat3::from_fn(|i, j| r[i][j])
}

fn to_rows(m: &Mat3) -> Rows {
    let mut r = [[0.0; 3]; 3];
    for (i, row) in r.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = m[(i, j)];
        }
    }
    r
}

fn sym(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

/// Nondimensional mobility blocks and the unit magnetic moment, all in body
/// frame components.
#[derive(Debug, Clone, PartialEq)]
pub struct Swimmer {
    pub name: String,
    pub description: Option<String>,
    /// Characteristic length ℓ, kept for documentation only.
    pub length_scale: Option<f64>,
    /// Not used by any computation; absent for some literature data sets.
    pub m11: Option<Mat3>,
    pub m12: Mat3,
    pub m22: Mat3,
    pub m: Vec3,
}

impl Swimmer {
    pub fn new(name: &str, m11: Option<Mat3>, m12: Mat3, m22: Mat3, m: Vec3) -> Result<Self, SwimmerError> {
        let finite = |x: &Mat3| x.iter().all(|v| v.is_finite());
        if !finite(&m12) || !finite(&m22) || !m.iter().all(|v| v.is_finite()) || m11.as_ref().is_some_and(|x| !finite(x)) {
            return Err(SwimmerError::NonFinite);
        }
        let n = m.norm();
        if n == 0.0 {
            return Err(SwimmerError::ZeroMoment);
        }
        let m22 = sym(&m22);
        if m22.cholesky().is_none() {
            return Err(SwimmerError::NotSpd);
        }
        Ok(Swimmer {
            name: name.to_string(),
            description: None,
            length_scale: None,
            m11: m11.map(|x| sym(&x)),
            m12,
            m22,
            m: m / n,
        })
    }

    /// Mobility blocks from drag blocks: the 6×6 drag matrix
    /// [[D11, D12], [D12ᵀ, D22]] is inverted and symmetrised.
    pub fn from_drag(name: &str, d11: Mat3, d12: Mat3, d22: Mat3, m: Vec3) -> Result<Self, SwimmerError> {
        let mut d = nalgebra::Matrix6::<f64>::zeros();
        d.fixed_view_mut::<3, 3>(0, 0).copy_from(&d11);
        d.fixed_view_mut::<3, 3>(0, 3).copy_from(&d12);
        d.fixed_view_mut::<3, 3>(3, 0).copy_from(&d12.transpose());
        d.fixed_view_mut::<3, 3>(3, 3).copy_from(&d22);
        if !d.iter().all(|v| v.is_finite()) {
            return Err(SwimmerError::NonFinite);
        }
        let inv = d.try_inverse().ok_or(SwimmerError::SingularDrag)?;
        let mob = (inv + inv.transpose()) * 0.5;
        let m11: Mat3 = mob.fixed_view::<3, 3>(0, 0).into();
        let m12: Mat3 = mob.fixed_view::<3, 3>(0, 3).into();
        let m22: Mat3 = mob.fixed_view::<3, 3>(3, 3).into();
        Swimmer::new(name, Some(m11), m12, m22, m)
    }

    /// Same shape, different magnetisation.
    pub fn with_moment(&self, m: Vec3) -> Result<Self, SwimmerError> {
        let mut s = Swimmer::new(&self.name, self.m11, self.m12, self.m22, m)?;
        s.length_scale = self.length_scale;
        s.description.clone_from(&self.description);
        Ok(s)
    }

    /// The body-frame rotation of every input: M ↦ R M Rᵀ, m ↦ R m.
    pub fn rotated(&self, r: &Mat3) -> Self {
        let mut s = self.clone();
        s.m11 = self.m11.map(|x| r * x * r.transpose());
        s.m12 = r * self.m12 * r.transpose();
        s.m22 = r * self.m22 * r.transpose();
        s.m = r * self.m;
        s
    }

    /// Mobility-form JSON document; round-trips through [`load_swimmer`].
    pub fn to_json(&self) -> String {
        let doc = SwimmerDoc {
            name: self.name.clone(),
            description: self.description.clone(),
            length_scale: self.length_scale,
            drag: None,
            mobility: Some(MobilityDoc {
                m11: self.m11.as_ref().map(to_rows),
                m12: to_rows(&self.m12),
                m22: to_rows(&self.m22),
            }),
            m: [self.m.x, self.m.y, self.m.z],
        };
        serde_json::to_string_pretty(&doc).expect("plain data serialises")
    }

    /// SHA-256 over the numeric content (blocks and moment).
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |m: &Mat3| {
            for x in m.iter() {
                h.update(x.to_le_bytes());
            }
        };
        feed(&self.m11.unwrap_or_else(Mat3::zeros));
        feed(&self.m12);
        feed(&self.m22);
        for x in self.m.iter() {
            h.update(x.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse a swimmer definition document.
pub fn load_swimmer(document: &str) -> Result<Swimmer, SwimmerError> {
    let doc: SwimmerDoc = serde_json::from_str(document).map_err(|e| SwimmerError::Parse(e.to_string()))?;
    let m = Vec3::new(doc.m[0], doc.m[1], doc.m[2]);
    let mut s = match (&doc.drag, &doc.mobility) {
        (Some(d), None) => Swimmer::from_drag(&doc.name, to_mat(&d.d11), to_mat(&d.d12), to_mat(&d.d22), m)?,
        (None, Some(mb)) => Swimmer::new(&doc.name, mb.m11.as_ref().map(to_mat), to_mat(&mb.m12), to_mat(&mb.m22), m)?,
        _ => return Err(SwimmerError::MissingBlocks),
    };
    s.description = doc.description;
    s.length_scale = doc.length_scale;
    Ok(s)
}

const BUNDLED: &[(&str, &str)] = &[
    ("A", include_str!("../data/swimmer_a.json")),
    ("B", include_str!("../data/swimmer_b.json")),
    ("meshkati-90", include_str!("../data/meshkati_90.json")),
    ("morozov-90-m1", include_str!("../data/morozov_90_m1.json")),
    ("morozov-90-m2", include_str!("../data/morozov_90_m2.json")),
    ("morozov-90-m3", include_str!("../data/morozov_90_m3.json")),
    ("morozov-90-mstar", include_str!("../data/morozov_90_mstar.json")),
    ("morozov-122.7-m1", include_str!("../data/morozov_122_m1.json")),
    ("morozov-122.7-mstar", include_str!("../data/morozov_122_mstar.json")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled(name: &str) -> Result<Swimmer, SwimmerError> {
    let (_, doc) = BUNDLED
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .ok_or_else(|| SwimmerError::UnknownBundled(name.to_string()))?;
    load_swimmer(doc)
}

/// SVD data of P = M22·[m]× and the coefficients of the equilibrium chart.
#[derive(Debug, Clone, PartialEq)]
pub struct PDecomposition {
    pub p: Mat3,
    pub sigma1: f64,
    pub sigma2: f64,
    /// β0 = m, β1, β2: right singular vectors, right-handed.
    pub beta: [Vec3; 3],
    /// η0 ∝ M22⁻¹m, η1 = Pβ1/σ1, η2 = Pβ2/σ2.
    pub eta: [Vec3; 3],
    pub c01: f64,
    pub c02: f64,
    pub c11: f64,
    pub c12: f64,
    pub theta0: f64,
    /// σ1 and σ2 agree to a relative 1e-8; θ0 is then meaningless.
    pub degenerate: bool,
    pub m22: Mat3,
    pub m22_inv: Mat3,
    /// Chirality matrix M12·M22⁻¹.
    pub ch: Mat3,
}

impl PDecomposition {
    pub fn m(&self) -> Vec3 {
        self.beta[0]
    }
}

pub fn decompose(s: &Swimmer) -> Result<PDecomposition, SwimmerError> {
    let m = s.m;
    let p = s.m22 * skew(&m);
    let svd = svd3(&p).map_err(|_| SwimmerError::NonFinite)?;
    let [sigma1, sigma2, _] = svd.singular_values;
    let m22_inv = s.m22.try_inverse().ok_or(SwimmerError::NotSpd)?;

    let mut b1: Vec3 = svd.v.column(0).into();
    b1 -= m * m.dot(&b1);
    b1.normalize_mut();
    let mut b2 = m.cross(&b1);

    let coeffs = |b1: &Vec3, b2: &Vec3| {
        let c01 = m.dot(&(p * b1));
        let c02 = m.dot(&(p * b2));
        let c11 = b1.dot(&(p * b1));
        let c12 = b1.dot(&(p * b2)) + b2.dot(&(p * b1));
        (c01, c02, c11, c12)
    };
    let (c01, c02, _, _) = coeffs(&b1, &b2);
    let flip = if c01.abs() > 1e-12 * sigma1 { c01 < 0.0 } else { c02 < 0.0 };
    if flip {
        b1 = -b1;
        b2 = -b2;
    }
    let (c01, c02, c11, c12) = coeffs(&b1, &b2);

    let e1 = p * b1 / sigma1;
    let e2 = if sigma2 > 0.0 { p * b2 / sigma2 } else { m.cross(&e1) };
    let e0 = e1.cross(&e2);

    let degenerate = (sigma1 - sigma2) <= 1e-8 * sigma1;
    let ratio = -c01 * sigma2 / (c02 * sigma1);
    let theta0 = if ratio.is_nan() { std::f64::consts::FRAC_PI_2 } else { ratio.atan() };

    Ok(PDecomposition {
        p,
        sigma1,
        sigma2,
        beta: [m, b1, b2],
        eta: [e0, e1, e2],
        c01,
        c02,
        c11,
        c12,
        theta0,
        degenerate,
        m22: s.m22,
        m22_inv,
        ch: s.m12 * m22_inv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiralityData {
    pub ch: Mat3,
    /// |(M12)₁₃ (1/(M22)₁₁ + 1/(M22)₃₃)/2|, the scalar chirality of the
    /// three-bead cluster conventions.
    pub ch_scalar: f64,
    /// 2/(1/(M22)₁₁ + 1/(M22)₂₂), the transverse rotational drag scale.
    pub f_perp: f64,
}

pub fn chirality(s: &Swimmer) -> Result<ChiralityData, SwimmerError> {
    let inv = s.m22.try_inverse().ok_or(SwimmerError::NotSpd)?;
    let d = s.m22.diagonal();
    Ok(ChiralityData {
        ch: s.m12 * inv,
        ch_scalar: (s.m12[(0, 2)] * (1.0 / d[0] + 1.0 / d[2]) / 2.0).abs(),
        f_perp: 2.0 / (1.0 / d[0] + 1.0 / d[1]),
    })
}
