//! Orientation and position dynamics in the frame rotating with the field.
//!
//! The orientation is a quaternion `q = (q1, q2, q3, q4)` with scalar part
//! `q4`. `Q(q)` maps coordinates in the rotating field frame to body
//! coordinates, so the rotation axis and field read `e3 = Q e_z` and
//! `B = Q (sin ψ, 0, cos ψ)` in the body frame.

pub mod handling;
pub mod ode;

use crate::atlas::{solve_equilibria, AtlasError, Equilibrium};
use crate::numerics::{Mat3, Vec3};
use crate::swimmer::PDecomposition;
use nalgebra::{Matrix3x4, Matrix4, Rotation3, SVector, UnitQuaternion, Vector4};
use ode::{integrate, Control, OdeError, OdeOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

pub type Quat = Vector4<f64>;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("tolerance {0} outside [1e-12, 1e-6]")]
    Tolerance(f64),
    #[error("zero quaternion")]
    ZeroQuaternion,
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error("invalid schedule: {0}")]
    Schedule(String),
}

/// Q(q): the rotation of `q/|q|` as a matrix; independent of |q|.
pub fn rotation(q: &Quat) -> Mat3 {
    let [q1, q2, q3, q4] = [q[0], q[1], q[2], q[3]];
    let n2 = q.norm_squared();
    Mat3::new(
        q1 * q1 - q2 * q2 - q3 * q3 + q4 * q4,
        2.0 * (q1 * q2 - q3 * q4),
        2.0 * (q1 * q3 + q2 * q4),
        2.0 * (q1 * q2 + q3 * q4),
        -q1 * q1 + q2 * q2 - q3 * q3 + q4 * q4,
        2.0 * (q2 * q3 - q1 * q4),
        2.0 * (q1 * q3 - q2 * q4),
        2.0 * (q2 * q3 + q1 * q4),
        -q1 * q1 - q2 * q2 + q3 * q3 + q4 * q4,
    ) / n2
}

fn rotation_unscaled(q: &Quat) -> Mat3 {
    rotation(q) * q.norm_squared()
}

pub fn f_matrix(q: &Quat) -> Matrix3x4<f64> {
    let [q1, q2, q3, q4] = [q[0], q[1], q[2], q[3]];
    Matrix3x4::new(q4, -q3, q2, -q1, q3, q4, -q1, -q2, -q2, q1, q4, -q3)
}

/// Field direction in the rotating frame, ψ ∈ [0, π].
pub fn field_direction(cos_psi: f64) -> Vec3 {
    let c = cos_psi.clamp(-1.0, 1.0);
    Vec3::new((1.0 - c * c).sqrt(), 0.0, c)
}

/// Hamilton product.
pub fn quat_mul(a: &Quat, b: &Quat) -> Quat {
    let (av, bv) = (Vec3::new(a[0], a[1], a[2]), Vec3::new(b[0], b[1], b[2]));
    let w = a[3] * b[3] - av.dot(&bv);
    let v = a[3] * bv + b[3] * av + av.cross(&bv);
    Quat::new(v[0], v[1], v[2], w)
}

/// Unit representative with q4 ≥ 0.
pub fn canonical(q: &Quat) -> Quat {
    let u = q.normalize();
    if u[3] < 0.0 {
        -u
    } else {
        u
    }
}

/// Rotation angle between two orientations, identifying q with −q.
pub fn geodesic_distance(a: &Quat, b: &Quat) -> f64 {
    // the half-angle form keeps full precision near zero, where acos does not
    let (a, b) = (a.normalize(), b.normalize());
    let b = if a.dot(&b) < 0.0 { -b } else { b };
    4.0 * (a - b).norm().atan2((a + b).norm())
}

/// Quaternion of the half turn about the field frame's y axis.
pub fn half_turn_y() -> Quat {
    Quat::new(0.0, 1.0, 0.0, 0.0)
}

pub fn quat_from_rotation(r: &Mat3) -> Quat {
    let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix(r));
    canonical(&uq.into_inner().coords)
}

/// Orientation realising a relative equilibrium: Q e_z = e3, Q b = B.
pub fn equilibrium_quaternion(eq: &Equilibrium) -> Quat {
    let e3 = eq.e3.normalize();
    let mut ex = eq.b - eq.cos_psi * e3;
    if ex.norm() < 1e-12 {
        let trial = if e3[0].abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        ex = trial - e3 * e3.dot(&trial);
    }
    let ex = ex.normalize();
    let ey = e3.cross(&ex);
    quat_from_rotation(&Mat3::from_columns(&[ex, ey, e3]))
}

/// u = Ma·e3 − P·B, the angular-velocity mismatch; zero at equilibria.
pub fn mismatch(dec: &PDecomposition, q: &Quat, ma: f64, cos_psi: f64) -> Vec3 {
    let r = rotation(q);
    ma * r.column(2) - dec.p * (r * field_direction(cos_psi))
}

/// Norm-corrected right-hand side ½Fᵀ(q)u − ½(|q|² − 1)q.
pub fn rhs(dec: &PDecomposition, q: &Quat, ma: f64, cos_psi: f64) -> Quat {
    0.5 * f_matrix(q).transpose() * mismatch(dec, q, ma, cos_psi) - 0.5 * (q.norm_squared() - 1.0) * q
}

/// ½Fᵀ(q)u without the norm correction.
pub fn rhs_uncorrected(dec: &PDecomposition, q: &Quat, ma: f64, cos_psi: f64) -> Quat {
    0.5 * f_matrix(q).transpose() * mismatch(dec, q, ma, cos_psi)
}

/// ∂rhs/∂q in closed form. Q(q)|q|² is quadratic in q, so its directional
/// derivative along e_k is exactly R(q + e_k) − R(q) − R(e_k).
pub fn rhs_jacobian(dec: &PDecomposition, q: &Quat, ma: f64, cos_psi: f64) -> Matrix4<f64> {
    let b = field_direction(cos_psi);
    let n2 = q.norm_squared();
    let rq = rotation_unscaled(q);
    let g = ma * rq.column(2) - dec.p * (rq * b);
    let ft = f_matrix(q).transpose();
    let mut j = Matrix4::zeros();
    for k in 0..4 {
        let ek = Quat::ith(k, 1.0);
        let dr = rotation_unscaled(&(q + ek)) - rq - rotation_unscaled(&ek);
        let dg = ma * dr.column(2) - dec.p * (dr * b);
        let col = 0.5 * f_matrix(&ek).transpose() * g / n2 + 0.5 * ft * dg / n2 - ft * g * (q[k] / (n2 * n2)) - q * q[k] - 0.5 * (n2 - 1.0) * ek;
        j.set_column(k, &col);
    }
    j
}

/// Rotation by `angle` about the lab z axis.
pub fn r3(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Lab-frame velocity. The body velocity Ch·P·B is taken to field-frame
/// coordinates with Qᵀ, then to the lab by the field's rotation R3(Ma t).
pub fn lab_velocity(dec: &PDecomposition, q: &Quat, lab_angle: f64, cos_psi: f64) -> Vec3 {
    let r = rotation(q);
    let v_body = dec.ch * (dec.p * (r * field_direction(cos_psi)));
    r3(lab_angle) * (r.transpose() * v_body)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimState {
    pub t: f64,
    pub q: Quat,
    pub x: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<SimState>,
    pub max_norm_drift: f64,
    /// First time at which ‖u‖ < 1e-10 had held for 10 consecutive steps.
    pub converged_at: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub tol: f64,
    /// Spacing of recorded states; `None` records every accepted step.
    pub sample_dt: Option<f64>,
    pub stop_on_convergence: bool,
}

impl SimOptions {
    pub fn new(tol: f64) -> Self {
        SimOptions { tol, sample_dt: None, stop_on_convergence: false }
    }
}

pub const CONVERGED_U: f64 = 1e-10;
pub const CONVERGED_STEPS: usize = 10;

fn check_tol(tol: f64) -> Result<(), DynamicsError> {
    if (1e-12..=1e-6).contains(&tol) {
        Ok(())
    } else {
        Err(DynamicsError::Tolerance(tol))
    }
}

/// Integrate orientation and lab position together. `ma` and `cos_psi` may
/// vary in time; the lab angle of the field is ∫Ma dt.
fn integrate_general<D>(dec: &PDecomposition, q0: &Quat, x0: &Vec3, drive: D, t_end: f64, opts: &SimOptions) -> Result<Trajectory, DynamicsError>
where
    D: Fn(f64) -> (f64, f64),
{
    check_tol(opts.tol)?;
    if q0.norm() == 0.0 {
        return Err(DynamicsError::ZeroQuaternion);
    }
    let mut y0 = SVector::<f64, 8>::zeros();
    y0.fixed_rows_mut::<4>(0).copy_from(q0);
    y0.fixed_rows_mut::<3>(4).copy_from(x0);
    let f = |t: f64, y: &SVector<f64, 8>| {
        let q: Quat = y.fixed_rows::<4>(0).into();
        let (ma, cp) = drive(t);
        let dq = rhs(dec, &q, ma, cp);
        let v = lab_velocity(dec, &q, y[7], cp);
        let mut d = SVector::<f64, 8>::zeros();
        d.fixed_rows_mut::<4>(0).copy_from(&dq);
        d.fixed_rows_mut::<3>(4).copy_from(&v);
        d[7] = ma;
        d
    };
    let unpack = |t: f64, y: &SVector<f64, 8>| SimState { t, q: y.fixed_rows::<4>(0).into(), x: y.fixed_rows::<3>(4).into() };
    let mut states = vec![unpack(0.0, &y0)];
    let mut next_sample = opts.sample_dt;
    let mut drift: f64 = (q0.norm() - 1.0).abs();
    let mut quiet = 0usize;
    let mut converged_at = None;
    let ode_opts = OdeOptions::with_tol(opts.tol);
    let (y_end, stats) = integrate(f, 0.0, y0, t_end, &ode_opts, |s| {
        if let Some(dt) = opts.sample_dt {
            while let Some(ts) = next_sample {
                if ts > s.t1 + 1e-12 * dt {
                    break;
                }
                states.push(unpack(ts, &s.at(ts)));
                next_sample = Some(ts + dt);
            }
        } else {
            states.push(unpack(s.t1, s.y1));
        }
        let q: Quat = s.y1.fixed_rows::<4>(0).into();
        drift = drift.max((q.norm() - 1.0).abs());
        let (ma, cp) = drive(s.t1);
        if mismatch(dec, &q, ma, cp).norm() < CONVERGED_U {
            quiet += 1;
            if quiet >= CONVERGED_STEPS && converged_at.is_none() {
                converged_at = Some(s.t1);
                if opts.stop_on_convergence {
                    return Control::Stop;
                }
            }
        } else {
            quiet = 0;
        }
        Control::Continue
    })?;
    let last = unpack(stats.t_final, &y_end);
    if states.last().map(|s| s.t) != Some(last.t) {
        states.push(last);
    }
    Ok(Trajectory { states, max_norm_drift: drift, converged_at, steps: stats.accepted })
}

pub fn integrate_orientation(dec: &PDecomposition, q0: &Quat, ma: f64, cos_psi: f64, t_end: f64, opts: &SimOptions) -> Result<Trajectory, DynamicsError> {
    integrate_full(dec, q0, &Vec3::zeros(), ma, cos_psi, t_end, opts)
}

pub fn integrate_full(dec: &PDecomposition, q0: &Quat, x0: &Vec3, ma: f64, cos_psi: f64, t_end: f64, opts: &SimOptions) -> Result<Trajectory, DynamicsError> {
    integrate_general(dec, q0, x0, |_| (ma, cos_psi), t_end, opts)
}

/// Orientation-only integration in either time direction, returning the end state.
pub fn flow(dec: &PDecomposition, q0: &Quat, ma: f64, cos_psi: f64, t_end: f64, tol: f64) -> Result<Quat, DynamicsError> {
    check_tol(tol)?;
    let (q, _) = integrate(|_, q: &Quat| rhs(dec, q, ma, cos_psi), 0.0, *q0, t_end, &OdeOptions::with_tol(tol), |_| Control::Continue)?;
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HelixDescriptor {
    /// Helix axis in body coordinates; in the lab it is the field's rotation axis.
    pub axis: Vec3,
    pub pitch: f64,
    pub radius: f64,
    pub v_ax: f64,
}

pub fn helix_of(dec: &PDecomposition, eq: &Equilibrium) -> HelixDescriptor {
    let che = dec.ch * eq.e3;
    let pitch = 2.0 * PI * eq.e3.dot(&che);
    HelixDescriptor { axis: eq.e3, pitch, radius: eq.e3.cross(&che).norm(), v_ax: eq.ma * pitch / (2.0 * PI) }
}

/// Uniformly distributed orientation from a normalised 4D Gaussian.
pub fn random_orientation<R: rand::Rng>(rng: &mut R) -> Quat {
    loop {
        let q = Quat::from_fn(|_, _| StandardNormal.sample(rng));
        if q.norm() > 1e-8 {
            return canonical(&q);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Attractor {
    /// Index into the stable equilibria of the report.
    Equilibrium(usize),
    Periodic,
    Unconverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasinSample {
    pub q0: Quat,
    pub attractor: Attractor,
    pub t_converge: Option<f64>,
    pub q_final: Quat,
    /// Closest stable equilibrium at the end of the run and its distance.
    pub nearest: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinReport {
    pub stable: Vec<Equilibrium>,
    pub samples: Vec<BasinSample>,
    pub max_norm_drift: f64,
}

impl BasinReport {
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.stable.len()];
        for s in &self.samples {
            if let Attractor::Equilibrium(k) = s.attractor {
                c[k] += 1;
            }
        }
        c
    }
}

/// Angular tolerance for matching a converged state to an equilibrium.
pub const MATCH_TOL: f64 = 1e-6;

fn classify_end(traj: &Trajectory, stable_q: &[Quat]) -> (Attractor, Quat, Option<(usize, f64)>) {
    let end = traj.states.last().expect("trajectory has a state");
    let q = canonical(&end.q);
    let nearest = stable_q.iter().enumerate().map(|(k, e)| (k, geodesic_distance(e, &q))).min_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((k, d)) = nearest {
        if d < MATCH_TOL {
            return (Attractor::Equilibrium(k), q, nearest);
        }
        if d < 1e-2 {
            return (Attractor::Unconverged, q, nearest);
        }
    }
    // recurrent motion away from the stable equilibria: the end state was
    // already visited after the trajectory had moved off it
    let n = traj.states.len();
    let tail = &traj.states[n / 2..n - 1];
    let mut left = false;
    let mut returned = false;
    for s in tail.iter().rev() {
        let d = geodesic_distance(&s.q, &end.q);
        if d > 1e-1 {
            left = true;
        } else if left && d < 1e-3 {
            returned = true;
            break;
        }
    }
    let attractor = if returned { Attractor::Periodic } else { Attractor::Unconverged };
    (attractor, q, nearest)
}

/// Integrate `n` random orientations to `t_end` and sort them by attractor.
/// Sample `i` draws from ChaCha8 seeded with `seed` on stream `i`, so the
/// result does not depend on the thread count.
pub fn basin_sample(dec: &PDecomposition, ma: f64, cos_psi: f64, n: usize, seed: u64, t_end: f64, tol: f64) -> Result<BasinReport, DynamicsError> {
    let stable: Vec<Equilibrium> = solve_equilibria(dec, ma, cos_psi)?.equilibria.into_iter().filter(|e| e.is_stable()).collect();
    let q0s: Vec<Quat> = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            random_orientation(&mut rng)
        })
        .collect();
    basin_from(dec, ma, cos_psi, stable, &q0s, t_end, tol)
}

/// As [`basin_sample`] with given initial orientations.
pub fn basin_from(dec: &PDecomposition, ma: f64, cos_psi: f64, stable: Vec<Equilibrium>, q0s: &[Quat], t_end: f64, tol: f64) -> Result<BasinReport, DynamicsError> {
    let stable_q: Vec<Quat> = stable.iter().map(equilibrium_quaternion).collect();
    let opts = SimOptions { tol, sample_dt: Some(1.0), stop_on_convergence: true };
    let runs: Vec<Result<(BasinSample, f64), DynamicsError>> = q0s
        .par_iter()
        .map(|q0| {
            let traj = integrate_orientation(dec, q0, ma, cos_psi, t_end, &opts)?;
            let (attractor, q_final, nearest) = classify_end(&traj, &stable_q);
            let t_converge = if matches!(attractor, Attractor::Equilibrium(_)) { traj.converged_at.or(Some(traj.states.last().unwrap().t)) } else { None };
            Ok((BasinSample { q0: *q0, attractor, t_converge, q_final, nearest }, traj.max_norm_drift))
        })
        .collect();
    let mut samples = Vec::with_capacity(q0s.len());
    let mut drift: f64 = 0.0;
    for r in runs {
        let (s, d) = r?;
        drift = drift.max(d);
        samples.push(s);
    }
    Ok(BasinReport { stable, samples, max_norm_drift: drift })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub ma: f64,
    pub cos_psi: f64,
}

/// Piecewise-linear drive (Ma(t), cos ψ(t)).
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Schedule {
    pub waypoints: Vec<Waypoint>,
    /// Bound on |dMa/dt| and |dcos ψ/dt|.
    pub rate_bound: f64,
}

impl Schedule {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.waypoints.is_empty() {
            return Err(DynamicsError::Schedule("no waypoints".into()));
        }
        for w in self.waypoints.windows(2) {
            let dt = w[1].t - w[0].t;
            if dt <= 0.0 {
                return Err(DynamicsError::Schedule(format!("time not increasing at t = {}", w[1].t)));
            }
            let rate = ((w[1].ma - w[0].ma) / dt).abs().max(((w[1].cos_psi - w[0].cos_psi) / dt).abs());
            if rate > self.rate_bound * (1.0 + 1e-12) {
                return Err(DynamicsError::Schedule(format!("rate {rate:.3e} above bound {:.3e} before t = {}", self.rate_bound, w[1].t)));
            }
        }
        if self.waypoints.iter().any(|w| w.ma < 0.0 || w.cos_psi.abs() > 1.0 || !w.t.is_finite()) {
            return Err(DynamicsError::Schedule("waypoint outside Ma ≥ 0, |cos ψ| ≤ 1".into()));
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        let w = &self.waypoints;
        if t <= w[0].t {
            return (w[0].ma, w[0].cos_psi);
        }
        for p in w.windows(2) {
            if t <= p[1].t {
                let s = (t - p[0].t) / (p[1].t - p[0].t);
                return (p[0].ma + s * (p[1].ma - p[0].ma), p[0].cos_psi + s * (p[1].cos_psi - p[0].cos_psi));
            }
        }
        let l = w[w.len() - 1];
        (l.ma, l.cos_psi)
    }

    /// Builder: start at (ma, cos ψ) at t = 0, then ramp to each target at
    /// the rate bound, holding `settle` after each ramp.
    pub fn ramps(start: (f64, f64), targets: &[(f64, f64)], rate: f64, settle: f64) -> Schedule {
        let mut w = vec![Waypoint { t: 0.0, ma: start.0, cos_psi: start.1 }];
        let mut t = settle;
        w.push(Waypoint { t, ma: start.0, cos_psi: start.1 });
        let mut cur = start;
        for &(ma, cp) in targets {
            let d = (ma - cur.0).abs().max((cp - cur.1).abs());
            if d > 0.0 {
                t += d / rate;
                w.push(Waypoint { t, ma, cos_psi: cp });
            }
            t += settle;
            w.push(Waypoint { t, ma, cos_psi: cp });
            cur = (ma, cp);
        }
        Schedule { waypoints: w, rate_bound: rate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    /// The state settled on a branch for the first time.
    Settled,
    /// The tracked branch ended at a fold.
    BranchEnded,
    /// The tracked branch lost stability.
    BranchDestabilised,
    /// The state settled on a branch other than the one it left.
    Jump,
    /// No stable equilibrium exists at the current parameters.
    StepOut,
    /// Stable equilibria exist again after a step-out.
    Recovered,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleEvent {
    pub t: f64,
    pub kind: EventKind,
    pub branch: Option<usize>,
    pub ma: f64,
    pub cos_psi: f64,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub v_ax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackSample {
    pub t: f64,
    pub ma: f64,
    pub cos_psi: f64,
    pub branch: Option<usize>,
    pub distance: f64,
    pub v_ax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleLog {
    pub events: Vec<ScheduleEvent>,
    pub samples: Vec<TrackSample>,
    pub final_q: Quat,
    pub final_equilibrium: Option<Equilibrium>,
    pub final_branch: Option<usize>,
    pub max_norm_drift: f64,
    /// Set when the run was cut short by `stop_on_loss`.
    pub stopped_at: Option<f64>,
}

impl ScheduleLog {
    pub fn jumps(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::Jump).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    pub tol: f64,
    /// Interval between branch checks.
    pub check_dt: f64,
    /// A state within this angle of an equilibrium sits on its branch.
    pub on_branch: f64,
    /// Largest chart displacement of a branch between two checks.
    pub max_branch_step: f64,
    /// End the run at the first loss of the tracked branch.
    pub stop_on_loss: bool,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions { tol: 1e-9, check_dt: 1.0, on_branch: 0.05, max_branch_step: 0.3, stop_on_loss: false }
    }
}

fn chart_gap(a: &Equilibrium, b: &Equilibrium) -> f64 {
    let dt = crate::numerics::angle_distance(a.theta, b.theta);
    (dt * dt + (a.phi - b.phi).powi(2)).sqrt()
}

struct Tracker {
    opts: TrackOptions,
    next_id: usize,
    /// The branch the state last sat on, continued through parameter changes.
    branch: Option<(usize, Equilibrium)>,
    on: bool,
    stepped_out: bool,
    events: Vec<ScheduleEvent>,
    samples: Vec<TrackSample>,
    stop: bool,
}

impl Tracker {
    fn event(&mut self, t: f64, kind: EventKind, branch: Option<usize>, ma: f64, cp: f64, eq: Option<&Equilibrium>) {
        self.events.push(ScheduleEvent { t, kind, branch, ma, cos_psi: cp, theta: eq.map(|e| e.theta), phi: eq.map(|e| e.phi), v_ax: eq.map(|e| e.v_ax) });
    }

    fn check(&mut self, dec: &PDecomposition, t: f64, q: &Quat, ma: f64, cp: f64) {
        let Ok(sol) = solve_equilibria(dec, ma, cp) else { return };
        let eqs = sol.equilibria;
        let any_stable = eqs.iter().any(|e| e.is_stable());
        if !any_stable && !self.stepped_out {
            self.stepped_out = true;
            self.event(t, EventKind::StepOut, None, ma, cp, None);
        } else if any_stable && self.stepped_out {
            self.stepped_out = false;
            self.event(t, EventKind::Recovered, None, ma, cp, None);
        }

        // continue the tracked branch
        if let Some((id, prev)) = self.branch.take() {
            let cont = eqs.iter().filter(|e| chart_gap(e, &prev) < self.opts.max_branch_step).min_by(|a, b| chart_gap(a, &prev).total_cmp(&chart_gap(b, &prev)));
            match cont {
                Some(c) => {
                    if self.on && !c.is_stable() {
                        self.event(t, EventKind::BranchDestabilised, Some(id), ma, cp, Some(c));
                        self.on = false;
                        self.stop |= self.opts.stop_on_loss;
                    }
                    self.branch = Some((id, c.clone()));
                }
                None => {
                    if self.on {
                        self.event(t, EventKind::BranchEnded, Some(id), ma, cp, Some(&prev));
                        self.on = false;
                        self.stop |= self.opts.stop_on_loss;
                    }
                }
            }
        }

        let nearest = eqs
            .iter()
            .map(|e| (e, geodesic_distance(&equilibrium_quaternion(e), q)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let mut sample = TrackSample { t, ma, cos_psi: cp, branch: None, distance: f64::NAN, v_ax: None };
        if let Some((e, d)) = nearest {
            sample.distance = d;
            if d < self.opts.on_branch && e.is_stable() {
                let same = self.branch.as_ref().is_some_and(|(_, b)| chart_gap(b, e) < 1e-6);
                if same {
                    if !self.on {
                        self.on = true;
                    }
                } else {
                    let id = self.next_id;
                    self.next_id += 1;
                    let kind = if self.events.iter().any(|ev| ev.kind == EventKind::Settled) { EventKind::Jump } else { EventKind::Settled };
                    self.event(t, kind, Some(id), ma, cp, Some(e));
                    self.branch = Some((id, e.clone()));
                    self.on = true;
                }
                sample.v_ax = Some(e.v_ax);
            }
        }
        sample.branch = if self.on { self.branch.as_ref().map(|b| b.0) } else { None };
        self.samples.push(sample);
    }
}

/// Drive the swimmer through `schedule` from `q0`, checking every
/// `check_dt` which equilibrium branch the state follows.
pub fn run_schedule(dec: &PDecomposition, schedule: &Schedule, q0: &Quat, opts: &TrackOptions) -> Result<ScheduleLog, DynamicsError> {
    schedule.validate()?;
    check_tol(opts.tol)?;
    let mut tracker = Tracker { opts: *opts, next_id: 0, branch: None, on: false, stepped_out: false, events: Vec::new(), samples: Vec::new(), stop: false };
    let t0 = schedule.waypoints[0].t;
    let t_end = schedule.t_end();
    let (ma0, cp0) = schedule.at(t0);
    tracker.check(dec, t0, q0, ma0, cp0);
    let mut next_check = t0 + opts.check_dt;
    let mut drift: f64 = 0.0;
    let mut stopped_at = None;
    let (q_end, stats) = integrate(
        |t, q: &Quat| {
            let (ma, cp) = schedule.at(t);
            rhs(dec, q, ma, cp)
        },
        t0,
        *q0,
        t_end,
        &OdeOptions { h_max: opts.check_dt, ..OdeOptions::with_tol(opts.tol) },
        |s| {
            drift = drift.max((s.y1.norm() - 1.0).abs());
            while next_check <= s.t1 {
                let q = s.at(next_check);
                let (ma, cp) = schedule.at(next_check);
                tracker.check(dec, next_check, &q, ma, cp);
                if tracker.stop {
                    stopped_at = Some(next_check);
                    return Control::Stop;
                }
                next_check += opts.check_dt;
            }
            Control::Continue
        },
    )?;
    let (ma, cp) = schedule.at(stats.t_final);
    let final_eq = solve_equilibria(dec, ma, cp)?
        .equilibria
        .into_iter()
        .filter(|e| e.is_stable())
        .map(|e| {
            let d = geodesic_distance(&equilibrium_quaternion(&e), &q_end);
            (e, d)
        })
        .filter(|(_, d)| *d < opts.on_branch)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(e, _)| e);
    let final_branch = if tracker.on { tracker.branch.as_ref().map(|b| b.0) } else { None };
    Ok(ScheduleLog {
        events: tracker.events,
        samples: tracker.samples,
        final_q: canonical(&q_end),
        final_equilibrium: final_eq,
        final_branch,
        max_norm_drift: drift,
        stopped_at,
    })
}
