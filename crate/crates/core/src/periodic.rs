//! Periodic orbits of the orientation equation: seeds at Hopf points,
//! single shooting with an integral phase condition, Floquet multipliers and
//! continuation at constant period.

use crate::atlas::{eval_chart, solve_equilibria, Equilibrium};
use crate::dynamics::ode::{integrate, Control, OdeError, OdeOptions};
use crate::dynamics::{equilibrium_quaternion, f_matrix, geodesic_distance, rhs, rhs_jacobian, rotation, Quat};
use crate::numerics::{eig3, Mat3, Vec3};
use crate::stability::{stability_matrix_at, CurvePoint};
use crate::swimmer::PDecomposition;
use nalgebra::{Complex, DMatrix, DVector, Matrix2, Matrix4, SVector, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Seeds are refused below this imaginary part: the period diverges.
pub const MIN_LAMBDA_I: f64 = 1e-6;
pub const SEED_AMPLITUDE: f64 = 1e-3;
/// Largest geodesic gap between the ends of an accepted orbit.
pub const CLOSURE_TOL: f64 = 1e-8;
/// Integration tolerance for shooting.
pub const SHOOT_TOL: f64 = 1e-12;
pub const MAX_NEWTON: usize = 25;
const SAMPLES: usize = 128;
const COLLAPSED: f64 = 1e-6;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PeriodicError {
    #[error("no imaginary pair at the Hopf point")]
    NotHopf,
    #[error("λ_I = {0:.3e} is below {MIN_LAMBDA_I:e}; the period diverges")]
    PeriodTooLong(f64),
    #[error("Newton did not converge in {MAX_NEWTON} iterations (residual {0:.3e})")]
    NoConvergence(f64),
    #[error("singular shooting system")]
    Singular,
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Starting guess for an orbit born at a Hopf point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfSeed {
    pub ma: f64,
    pub cos_psi: f64,
    pub lambda_i: f64,
    pub period: f64,
    pub q_eq: Quat,
    /// Real and imaginary parts of the critical eigenvector of the
    /// quaternion Jacobian, orthogonal, |re| = 1 ≥ |im|.
    pub re: Quat,
    pub im: Quat,
    pub amplitude: f64,
}

impl HopfSeed {
    /// The linear loop q_eq + a(re·cos 2πτ − im·sin 2πτ), normalised.
    pub fn at(&self, tau: f64) -> Quat {
        let (s, c) = (2.0 * PI * tau).sin_cos();
        (self.q_eq + self.amplitude * (c * self.re - s * self.im)).normalize()
    }

    pub fn q0(&self) -> Quat {
        self.at(0.0)
    }

    pub fn with_amplitude(&self, amplitude: f64) -> HopfSeed {
        HopfSeed { amplitude, ..self.clone() }
    }

    pub fn reference(&self) -> Reference {
        let samples = (0..SAMPLES).map(|k| self.at(k as f64 / SAMPLES as f64)).collect();
        Reference::from_samples(samples)
    }
}

fn critical_vector(j: &Matrix4<f64>, z: Complex64) -> (Quat, Quat) {
    let m = j.map(|x| Complex::new(x, 0.0)) - Matrix4::<Complex64>::identity() * z;
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let k = (0..4).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).unwrap();
    let v: nalgebra::Vector4<Complex64> = vt.row(k).transpose().map(|c| c.conj());
    // rotate the phase so that re ⊥ im and |re| ≥ |im|
    let (a, b) = (v.map(|c| c.re), v.map(|c| c.im));
    let phase = 0.5 * (2.0 * a.dot(&b)).atan2(a.norm_squared() - b.norm_squared());
    let (s, c) = phase.sin_cos();
    let (re, im) = (a * c + b * s, b * c - a * s);
    let n = re.norm();
    (re / n, im / n)
}

/// Seed from a Hopf point: period 2π/λ_I and a small loop in the plane of
/// the critical eigenvector.
/// 2π/λ_I, refused once the pair is too slow for a usable period.
pub fn seed_period(lambda_i: f64) -> Result<f64, PeriodicError> {
    if lambda_i < MIN_LAMBDA_I {
        return Err(PeriodicError::PeriodTooLong(lambda_i));
    }
    Ok(2.0 * PI / lambda_i)
}

pub fn hopf_seed(dec: &PDecomposition, point: &CurvePoint, amplitude: f64) -> Result<HopfSeed, PeriodicError> {
    let lambda_given = point.lambda_i.ok_or(PeriodicError::NotHopf)?;
    if lambda_given < MIN_LAMBDA_I {
        return Err(PeriodicError::PeriodTooLong(lambda_given));
    }
    let z = eig3(&stability_matrix_at(dec, point.theta, point.phi)).ok().and_then(|s| s.complex_pair()).ok_or(PeriodicError::NotHopf)?;
    let period = seed_period(z.im)?;
    let eq = eval_chart(dec, point.theta, point.phi);
    let q_eq = equilibrium_quaternion(&eq);
    let (re, im) = critical_vector(&rhs_jacobian(dec, &q_eq, eq.ma, eq.cos_psi), z);
    Ok(HopfSeed { ma: eq.ma, cos_psi: eq.cos_psi, lambda_i: z.im, period, q_eq, re, im, amplitude })
}

/// A closed reference loop in rescaled time τ ∈ [0, 1), sampled uniformly,
/// for the integral phase condition ∫⟨q − r, r'⟩ dτ = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    samples: Vec<Quat>,
    slopes: Vec<Quat>,
}

impl Reference {
    /// Slopes by periodic central differences.
    pub fn from_samples(samples: Vec<Quat>) -> Reference {
        let n = samples.len();
        let slopes = (0..n).map(|k| (samples[(k + 1) % n] - samples[(k + n - 1) % n]) * (n as f64 / 2.0)).collect();
        Reference { samples, slopes }
    }

    /// Cubic Hermite value and slope at τ.
    fn at(&self, tau: f64) -> (Quat, Quat) {
        let n = self.samples.len();
        let x = tau.rem_euclid(1.0) * n as f64;
        let k = (x.floor() as usize).min(n - 1);
        let s = x - k as f64;
        let h = 1.0 / n as f64;
        let (p0, p1) = (self.samples[k], self.samples[(k + 1) % n]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[(k + 1) % n] * h);
        let (s2, s3) = (s * s, s * s * s);
        let val = p0 * (2.0 * s3 - 3.0 * s2 + 1.0) + m0 * (s3 - 2.0 * s2 + s) + p1 * (-2.0 * s3 + 3.0 * s2) + m1 * (s3 - s2);
        let der = (p0 * (6.0 * s2 - 6.0 * s) + m0 * (3.0 * s2 - 4.0 * s + 1.0) + p1 * (-6.0 * s2 + 6.0 * s) + m1 * (3.0 * s2 - 2.0 * s)) / h;
        (val, der)
    }
}

/// One integration of the augmented system over a period.
#[derive(Debug, Clone)]
struct Shot {
    q_end: Quat,
    monodromy: Matrix4<f64>,
    d_period: Quat,
    d_ma: Quat,
    d_cos_psi: Quat,
    phase: f64,
    phase_q: Quat,
    phase_period: f64,
    phase_ma: f64,
    phase_cos_psi: f64,
    samples: Vec<Quat>,
}

const DIM: usize = 40;

fn d_rhs_d_params(dec: &PDecomposition, q: &Quat, cos_psi: f64) -> (Quat, Quat) {
    let r = rotation(q);
    let ft = f_matrix(q).transpose();
    let c = cos_psi.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    let db = Vec3::new(-c / (1.0 - c * c).sqrt(), 0.0, 1.0);
    (0.5 * ft * r.column(2), -0.5 * ft * (dec.p * (r * db)))
}

fn shoot(dec: &PDecomposition, q0: &Quat, period: f64, ma: f64, cos_psi: f64, reference: &Reference) -> Result<Shot, PeriodicError> {
    let mut y0 = SVector::<f64, DIM>::zeros();
    y0.fixed_rows_mut::<4>(0).copy_from(q0);
    for k in 0..4 {
        y0[4 + 5 * k] = 1.0;
    }
    let rhs_aug = |tau: f64, y: &SVector<f64, DIM>| -> SVector<f64, DIM> {
        let q: Quat = y.fixed_rows::<4>(0).into();
        let f = rhs(dec, &q, ma, cos_psi);
        let j = rhs_jacobian(dec, &q, ma, cos_psi);
        let (f_ma, f_c) = d_rhs_d_params(dec, &q, cos_psi);
        let phi = Matrix4::from_column_slice(y.fixed_rows::<16>(4).as_slice());
        let q_t: Quat = y.fixed_rows::<4>(20).into();
        let q_ma: Quat = y.fixed_rows::<4>(24).into();
        let q_c: Quat = y.fixed_rows::<4>(28).into();
        let (r, dr) = reference.at(tau);
        let mut out = SVector::<f64, DIM>::zeros();
        out.fixed_rows_mut::<4>(0).copy_from(&(period * f));
        let dphi = period * j * phi;
        out.fixed_rows_mut::<16>(4).copy_from_slice(dphi.as_slice());
        out.fixed_rows_mut::<4>(20).copy_from(&(f + period * j * q_t));
        out.fixed_rows_mut::<4>(24).copy_from(&(period * (j * q_ma + f_ma)));
        out.fixed_rows_mut::<4>(28).copy_from(&(period * (j * q_c + f_c)));
        out[32] = (q - r).dot(&dr);
        out.fixed_rows_mut::<4>(33).copy_from(&(phi.transpose() * dr));
        out[37] = q_t.dot(&dr);
        out[38] = q_ma.dot(&dr);
        out[39] = q_c.dot(&dr);
        out
    };
    let mut samples = Vec::with_capacity(SAMPLES);
    let mut next = 0usize;
    let opts = OdeOptions { h_max: 1.0 / 32.0, ..OdeOptions::with_tol(SHOOT_TOL) };
    let (y, _) = integrate(rhs_aug, 0.0, y0, 1.0, &opts, |s| {
        while next < SAMPLES && (next as f64 / SAMPLES as f64) <= s.t1 {
            let v = s.at(next as f64 / SAMPLES as f64);
            samples.push(Quat::new(v[0], v[1], v[2], v[3]));
            next += 1;
        }
        Control::Continue
    })?;
    Ok(Shot {
        q_end: y.fixed_rows::<4>(0).into(),
        monodromy: Matrix4::from_column_slice(y.fixed_rows::<16>(4).as_slice()),
        d_period: y.fixed_rows::<4>(20).into(),
        d_ma: y.fixed_rows::<4>(24).into(),
        d_cos_psi: y.fixed_rows::<4>(28).into(),
        phase: y[32],
        phase_q: y.fixed_rows::<4>(33).into(),
        phase_period: y[37],
        phase_ma: y[38],
        phase_cos_psi: y[39],
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    pub ma: f64,
    pub cos_psi: f64,
    pub period: f64,
    pub q0: Quat,
    /// States at τ = k/n of the period.
    pub samples: Vec<Quat>,
    /// Multipliers of the monodromy on the tangent space of the unit sphere;
    /// `trivial` indexes the one at 1.
    pub multipliers: [Complex64; 3],
    pub trivial: usize,
    /// Geodesic gap between the orbit's ends.
    pub closure: f64,
    pub stable: bool,
}

impl PeriodicOrbit {
    pub fn nontrivial(&self) -> Vec<Complex64> {
        (0..3).filter(|&k| k != self.trivial).map(|k| self.multipliers[k]).collect()
    }

    pub fn max_multiplier(&self) -> f64 {
        self.nontrivial().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest geodesic distance from the anchor to any sample.
    pub fn amplitude(&self) -> f64 {
        self.samples.iter().map(|q| geodesic_distance(q, &self.q0)).fold(0.0, f64::max)
    }

    pub fn reference(&self) -> Reference {
        Reference::from_samples(self.samples.clone())
    }

    /// Mean orientation of the samples, normalised.
    pub fn centre(&self) -> Quat {
        let s = self.samples.iter().fold(Quat::zeros(), |a, q| a + if q.dot(&self.q0) < 0.0 { -q } else { *q });
        s.normalize()
    }
}

fn tangent_basis(q: &Quat) -> nalgebra::Matrix4x3<f64> {
    let u = q.normalize();
    let p = Matrix4::identity() - u * u.transpose();
    // Gram–Schmidt over the projected coordinate axes, dropping the weakest
    let mut cols: Vec<Quat> = Vec::new();
    let mut axes: Vec<Quat> = (0..4).map(|k| p.column(k).into()).collect();
    axes.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    for a in axes {
        let mut v = a;
        for c in &cols {
            v -= c * c.dot(&v);
        }
        if v.norm() > 1e-8 && cols.len() < 3 {
            cols.push(v.normalize());
        }
    }
    nalgebra::Matrix4x3::from_columns(&cols)
}

fn orbit_from(q0: Quat, period: f64, ma: f64, cos_psi: f64, shot: &Shot) -> PeriodicOrbit {
    let b = tangent_basis(&q0);
    let m3: Mat3 = b.transpose() * shot.monodromy * b;
    let multipliers = eig3(&m3).map(|s| s.eigenvalues).unwrap_or([Complex64::new(f64::NAN, 0.0); 3]);
    let trivial = (0..3).min_by(|&a, &b| (multipliers[a] - 1.0).norm().total_cmp(&(multipliers[b] - 1.0).norm())).unwrap();
    let stable = (0..3).filter(|&k| k != trivial).all(|k| multipliers[k].norm() < 1.0 - 1e-8);
    PeriodicOrbit {
        ma,
        cos_psi,
        period,
        q0,
        samples: shot.samples.clone(),
        multipliers,
        trivial,
        closure: geodesic_distance(&shot.q_end, &q0),
        stable,
    }
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>, PeriodicError> {
    let x = a.lu().solve(&b).ok_or(PeriodicError::Singular)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(PeriodicError::Singular)
    }
}

/// Newton on (q0, T) at fixed drive, from an initial anchor and period.
/// The phase is pinned against `reference`.
pub fn shoot_orbit(dec: &PDecomposition, ma: f64, cos_psi: f64, q0: &Quat, period: f64, reference: &Reference) -> Result<PeriodicOrbit, PeriodicError> {
    let (mut q, mut t) = (*q0, period);
    let mut last = f64::INFINITY;
    for _ in 0..MAX_NEWTON {
        let s = shoot(dec, &q, t, ma, cos_psi, reference)?;
        let r = s.q_end - q;
        last = r.norm().max(s.phase.abs());
        if r.norm() < 1e-11 && geodesic_distance(&s.q_end, &q) < CLOSURE_TOL {
            return Ok(orbit_from(q, t, ma, cos_psi, &s));
        }
        let mut a = DMatrix::zeros(5, 5);
        a.view_mut((0, 0), (4, 4)).copy_from(&(s.monodromy - Matrix4::identity()));
        a.view_mut((0, 4), (4, 1)).copy_from(&s.d_period);
        a.view_mut((4, 0), (1, 4)).copy_from(&s.phase_q.transpose());
        a[(4, 4)] = s.phase_period;
        let mut b = DVector::zeros(5);
        b.rows_mut(0, 4).copy_from(&(-r));
        b[4] = -s.phase;
        let mut d = solve(a, b)?;
        let scale = d.norm();
        if scale > 0.2 {
            d *= 0.2 / scale;
        }
        q += Quat::new(d[0], d[1], d[2], d[3]);
        t += d[4];
        if t <= 0.0 {
            return Err(PeriodicError::NoConvergence(last));
        }
    }
    Err(PeriodicError::NoConvergence(last))
}

/// Shoot from a Hopf seed at parameters offset from the Hopf point.
pub fn shoot_from_seed(dec: &PDecomposition, seed: &HopfSeed, ma: f64, cos_psi: f64) -> Result<PeriodicOrbit, PeriodicError> {
    shoot_orbit(dec, ma, cos_psi, &seed.q0(), seed.period, &seed.reference())
}

/// ‖φ_T(q0) − q0‖ for the seed at its own parameters.
pub fn seed_residual(dec: &PDecomposition, seed: &HopfSeed) -> Result<f64, PeriodicError> {
    let s = shoot(dec, &seed.q0(), seed.period, seed.ma, seed.cos_psi, &seed.reference())?;
    Ok((s.q_end - seed.q0()).norm())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BranchEnd {
    /// The orbit shrank onto an equilibrium with eigenvalues ±i·2π/T.
    Hopf { ma: f64, cos_psi: f64, lambda_i: f64, real_part: f64 },
    /// The step size fell below the minimum.
    StepUnderflow { reason: String },
    MaxSteps,
    /// The drive left |cos ψ| < 1 or Ma > 0.
    LeftDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicBranch {
    pub period: f64,
    pub start: (f64, f64),
    pub orbits: Vec<PeriodicOrbit>,
    pub end: BranchEnd,
}

impl PeriodicBranch {
    /// The branch did not close on a second Hopf point.
    pub fn incomplete(&self) -> bool {
        !matches!(self.end, BranchEnd::Hopf { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuationOptions {
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_steps: usize,
    /// Stop once the amplitude, having exceeded twice this value, falls back below it.
    pub end_amplitude: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { ds0: 1e-2, ds_min: 1e-7, ds_max: 0.1, max_steps: 2000, end_amplitude: 1e-2 }
    }
}

fn residual_system(s: &Shot, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let q = Quat::new(x[0], x[1], x[2], x[3]);
    let mut a = DMatrix::zeros(5, 6);
    a.view_mut((0, 0), (4, 4)).copy_from(&(s.monodromy - Matrix4::identity()));
    a.view_mut((0, 4), (4, 1)).copy_from(&s.d_ma);
    a.view_mut((0, 5), (4, 1)).copy_from(&s.d_cos_psi);
    a.view_mut((4, 0), (1, 4)).copy_from(&s.phase_q.transpose());
    a[(4, 4)] = s.phase_ma;
    a[(4, 5)] = s.phase_cos_psi;
    let mut g = DVector::zeros(5);
    g.rows_mut(0, 4).copy_from(&(s.q_end - q));
    g[4] = s.phase;
    (a, g)
}

fn tangent_of(a: &DMatrix<f64>, previous: &DVector<f64>) -> Result<DVector<f64>, PeriodicError> {
    let mut m = DMatrix::zeros(6, 6);
    m.view_mut((0, 0), (5, 6)).copy_from(a);
    m.row_mut(5).copy_from(&previous.transpose());
    let mut e = DVector::zeros(6);
    e[5] = 1.0;
    let t = solve(m, e)?;
    let t = t.normalize();
    Ok(if t.dot(previous) < 0.0 { -t } else { t })
}

fn nearest_pair(dec: &PDecomposition, ma: f64, cos_psi: f64, near: &Quat) -> Option<(Equilibrium, Complex64)> {
    let eqs = solve_equilibria(dec, ma, cos_psi).ok()?.equilibria;
    let e = eqs.into_iter().min_by(|a, b| geodesic_distance(&equilibrium_quaternion(a), near).total_cmp(&geodesic_distance(&equilibrium_quaternion(b), near)))?;
    let z = e.eigenvalues.complex_pair()?;
    Some((e, z))
}

/// Newton on (Re λ, Im λ − ω) over (Ma, cos ψ), following the equilibrium
/// nearest the small orbit's centre. Falls back to the unrefined pair.
fn locate_hopf(dec: &PDecomposition, orbit: &PeriodicOrbit) -> Option<(Equilibrium, Complex64)> {
    let omega = 2.0 * PI / orbit.period;
    let first = nearest_pair(dec, orbit.ma, orbit.cos_psi, &orbit.centre())?;
    let mut best = first.clone();
    let (mut ma, mut c) = (orbit.ma, orbit.cos_psi);
    let h = 1e-7;
    for _ in 0..20 {
        let (e, z) = best.clone();
        let f = [z.re, z.im - omega];
        if f[0].hypot(f[1]) < 1e-13 {
            break;
        }
        let q = equilibrium_quaternion(&e);
        let (_, za) = nearest_pair(dec, ma + h, c, &q)?;
        let (_, zc) = nearest_pair(dec, ma, c + h, &q)?;
        let j = Matrix2::new((za.re - z.re) / h, (zc.re - z.re) / h, (za.im - z.im) / h, (zc.im - z.im) / h);
        let d = j.try_inverse()? * Vector2::new(-f[0], -f[1]);
        let scale = (1e-2 / d.norm()).min(1.0);
        ma += scale * d[0];
        c += scale * d[1];
        if ma <= 0.0 || c.abs() >= 1.0 {
            return Some(first);
        }
        best = nearest_pair(dec, ma, c, &q)?;
    }
    Some(best)
}

/// Pseudo-arclength continuation in (q0, Ma, cos ψ) at the seed's period,
/// leaving the Hopf point along the critical eigenvector. `direction` picks
/// the sign of the initial tangent.
pub fn continue_constant_period(dec: &PDecomposition, seed: &HopfSeed, direction: f64, opts: &ContinuationOptions) -> PeriodicBranch {
    let period = seed.period;
    let sign = if direction < 0.0 { -1.0 } else { 1.0 };
    let mut x = DVector::from_vec(vec![seed.q_eq[0], seed.q_eq[1], seed.q_eq[2], seed.q_eq[3], seed.ma, seed.cos_psi]);
    let mut tangent = DVector::from_vec(vec![sign * seed.re[0], sign * seed.re[1], sign * seed.re[2], sign * seed.re[3], 0.0, 0.0]);
    let mut reference = HopfSeed { re: sign * seed.re, im: sign * seed.im, ..seed.with_amplitude(opts.ds0) }.reference();
    let mut ds = opts.ds0;
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    let mut grown = false;
    let mut last_amp: Option<f64> = None;
    let end = loop {
        if orbits.len() >= opts.max_steps {
            break BranchEnd::MaxSteps;
        }
        if ds < opts.ds_min {
            break BranchEnd::StepUnderflow { reason: format!("step {ds:.2e} below {:.2e} after {} orbits", opts.ds_min, orbits.len()) };
        }
        let pred = &x + &tangent * ds;
        let mut y = pred.clone();
        let mut accepted: Option<(PeriodicOrbit, DMatrix<f64>)> = None;
        for _ in 0..10 {
            if y[4] <= 0.0 || y[5].abs() >= 1.0 {
                break;
            }
            let q = Quat::new(y[0], y[1], y[2], y[3]);
            let Ok(s) = shoot(dec, &q, period, y[4], y[5], &reference) else { break };
            let (a, g) = residual_system(&s, &y);
            let arc = (&y - &pred).dot(&tangent);
            if g.rows(0, 4).norm() < 1e-11 && g[4].abs() < 1e-11 && arc.abs() < 1e-11 {
                let orbit = orbit_from(q, period, y[4], y[5], &s);
                if orbit.closure < CLOSURE_TOL {
                    accepted = Some((orbit, a));
                }
                break;
            }
            let mut m = DMatrix::zeros(6, 6);
            m.view_mut((0, 0), (5, 6)).copy_from(&a);
            m.row_mut(5).copy_from(&tangent.transpose());
            let mut rhs_v = DVector::zeros(6);
            rhs_v.rows_mut(0, 5).copy_from(&(-g));
            rhs_v[5] = -arc;
            let Ok(d) = solve(m, rhs_v) else { break };
            if d.norm() > 0.5 * ds.max(1e-3) {
                break;
            }
            y += d;
        }
        match accepted {
            Some((orbit, a)) => {
                if y[4] <= 0.0 || y[5].abs() >= 1.0 {
                    break BranchEnd::LeftDomain;
                }
                let amp = orbit.amplitude();
                if amp > 2.0 * opts.end_amplitude {
                    grown = true;
                }
                let falling = last_amp.is_some_and(|a| amp < a);
                last_amp = Some(amp);
                if grown && amp < opts.end_amplitude {
                    let hopf = locate_hopf(dec, &orbit);
                    // an orbit shrunk onto the equilibrium has no meaningful monodromy
                    if amp > COLLAPSED {
                        orbits.push(orbit);
                    }
                    match hopf {
                        Some((e, z)) => break BranchEnd::Hopf { ma: e.ma, cos_psi: e.cos_psi, lambda_i: z.im, real_part: z.re },
                        None => break BranchEnd::StepUnderflow { reason: "no complex pair at the shrunken orbit".into() },
                    }
                }
                reference = orbit.reference();
                orbits.push(orbit);
                match tangent_of(&a, &tangent) {
                    Ok(t) => tangent = t,
                    Err(_) => break BranchEnd::StepUnderflow { reason: "singular tangent".into() },
                }
                x = y;
                ds = (ds * 1.3).min(opts.ds_max);
                if grown && falling {
                    // approach the far Hopf point gently, or the corrector steps across it
                    ds = ds.min(0.5 * amp).max(opts.ds_min);
                }
            }
            None => ds *= 0.5,
        }
    };
    PeriodicBranch { period, start: (seed.ma, seed.cos_psi), orbits, end }
}

/// Continue from several Hopf points in parallel, both directions each.
pub fn continue_from_hopf_points(dec: &PDecomposition, points: &[CurvePoint], opts: &ContinuationOptions) -> Vec<Result<PeriodicBranch, PeriodicError>> {
    points
        .par_iter()
        .flat_map_iter(|p| {
            let seed = hopf_seed(dec, p, SEED_AMPLITUDE);
            [1.0, -1.0].into_iter().map(move |dir| seed.clone().map(|s| continue_constant_period(dec, &s, dir, opts)))
        })
        .collect()
}

/// Anchor of the twin orbit: q ↦ q·h with h the half turn about the
/// field frame's y axis. The twin runs backwards in time.
pub fn twin_anchor(q: &Quat) -> Quat {
    crate::dynamics::quat_mul(q, &crate::dynamics::half_turn_y())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_orientation, SimOptions};
    use crate::stability::hopf_curves;
    use crate::swimmer::{bundled, decompose};

    fn swimmer_b() -> PDecomposition {
        decompose(&bundled("B").unwrap()).unwrap()
    }

    fn wing_seed(dec: &PDecomposition) -> HopfSeed {
        let curves = hopf_curves(dec, 400);
        let c = curves.iter().find(|c| c.points.iter().all(|p| p.cos_psi > 0.6)).unwrap();
        hopf_seed(dec, &c.points[c.points.len() / 2], SEED_AMPLITUDE).unwrap()
    }

    /// A few steps along the branch, far enough for a strongly attracting orbit.
    fn short_branch(dec: &PDecomposition) -> PeriodicBranch {
        let opts = ContinuationOptions { ds_max: 0.02, max_steps: 18, ..Default::default() };
        continue_constant_period(dec, &wing_seed(dec), 1.0, &opts)
    }

    #[test]
    fn slow_pairs_are_refused() {
        assert!(matches!(seed_period(5e-7), Err(PeriodicError::PeriodTooLong(_))));
        assert!((seed_period(0.5).unwrap() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn seed_residual_falls_with_amplitude() {
        let d = swimmer_b();
        let seed = wing_seed(&d);
        let r: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&a| seed_residual(&d, &seed.with_amplitude(a)).unwrap()).collect();
        // at least linear: each decade cuts the residual by more than 5
        assert!(r[1] < 0.2 * r[0] && r[2] < 0.2 * r[1], "{r:?}");
    }

    #[test]
    fn branch_orbits_close_with_unit_multiplier() {
        let d = swimmer_b();
        let br = short_branch(&d);
        assert_eq!(br.orbits.len(), 18);
        for o in &br.orbits {
            assert!(o.closure < CLOSURE_TOL);
            assert!((o.multipliers[o.trivial] - 1.0).norm() < 1e-6);
            assert!((o.period - br.period).abs() < 1e-12);
        }
        assert!(br.orbits.iter().any(|o| o.stable));
    }

    #[test]
    fn reshoot_from_mid_orbit() {
        let d = swimmer_b();
        let o = short_branch(&d).orbits.pop().unwrap();
        let half = o.samples.len() / 2;
        let mut shifted = o.samples.clone();
        shifted.rotate_left(half);
        let again = shoot_orbit(&d, o.ma, o.cos_psi, &shifted[0], o.period * 1.001, &Reference::from_samples(shifted.clone())).unwrap();
        assert!((again.period - o.period).abs() < 1e-8 * o.period);
        let gap = again.samples.iter().zip(&shifted).map(|(a, b)| geodesic_distance(a, b)).fold(0.0, f64::max);
        assert!(gap < 1e-7, "{gap}");
    }

    #[test]
    fn twin_orbit_has_reciprocal_multipliers() {
        let d = swimmer_b();
        let o = short_branch(&d).orbits.pop().unwrap();
        assert!(o.stable);
        // the twin runs the loop backwards
        let mut twin: Vec<Quat> = o.samples.iter().map(twin_anchor).collect();
        twin[1..].reverse();
        let start = twin[0];
        let t = shoot_orbit(&d, o.ma, o.cos_psi, &start, o.period, &Reference::from_samples(twin)).unwrap();
        assert!(!t.stable);
        let mut a: Vec<f64> = o.nontrivial().iter().map(|z| 1.0 / z.norm()).collect();
        let mut b: Vec<f64> = t.nontrivial().iter().map(|z| z.norm()).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6 * x, "{a:?} {b:?}");
        }
    }

    #[test]
    fn free_run_period_matches_shooting() {
        let d = swimmer_b();
        let o = short_branch(&d).orbits.pop().unwrap();
        assert!(o.max_multiplier() < 0.8);
        let q0 = (o.q0 + Quat::new(1e-3, -2e-3, 1e-3, 0.0)).normalize();
        let dt = o.period / 64.0;
        let tr = integrate_orientation(&d, &q0, o.ma, o.cos_psi, 80.0 * o.period, &SimOptions { sample_dt: Some(dt), ..SimOptions::new(1e-10) }).unwrap();
        let tail = &tr.states[tr.states.len() / 2..];
        // signed distance to the orbit centre plane, upward crossings
        let c = o.centre();
        let k = (0..4).max_by(|&i, &j| {
            let spread = |m: usize| o.samples.iter().map(|q| q[m]).fold(f64::NEG_INFINITY, f64::max) - o.samples.iter().map(|q| q[m]).fold(f64::INFINITY, f64::min);
            spread(i).total_cmp(&spread(j))
        }).unwrap();
        let sign = if tail[0].q.dot(&c) < 0.0 { -1.0 } else { 1.0 };
        let x: Vec<f64> = tail.iter().map(|s| sign * s.q[k] - c[k]).collect();
        let mut ups = Vec::new();
        for i in 1..x.len() {
            if x[i - 1] < 0.0 && x[i] >= 0.0 {
                let f = x[i - 1] / (x[i - 1] - x[i]);
                ups.push(tail[i - 1].t + f * dt);
            }
        }
        assert!(ups.len() > 10);
        let measured = (ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64;
        assert!((measured - o.period).abs() < 0.01 * o.period, "{measured} vs {}", o.period);
    }
}
