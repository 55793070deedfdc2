//! Handling strategies for bistable swimmers: quasi-static drive schedules
//! that bring the swimmer onto a chosen stable branch.

use super::{equilibrium_quaternion, geodesic_distance, run_schedule, DynamicsError, EventKind, Quat, Schedule, ScheduleLog, TrackOptions, Waypoint};
use crate::atlas::{solve_equilibria, Equilibrium};
use crate::swimmer::PDecomposition;
use serde::Serialize;

/// Ramp speed and settling time shared by the strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pace {
    /// Bound on |dMa/dt| and |dcos ψ/dt|.
    pub rate: f64,
    /// Hold time after each ramp.
    pub settle: f64,
    /// Interval between branch checks.
    pub check_dt: f64,
}

impl Default for Pace {
    fn default() -> Self {
        Pace { rate: 1e-5, settle: 3000.0, check_dt: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage {
    pub name: String,
    pub schedule: Schedule,
    pub log: ScheduleLog,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandlingRun {
    pub strategy: String,
    pub stages: Vec<Stage>,
    pub start: Option<Equilibrium>,
    pub end: Option<Equilibrium>,
    /// Start and end are distinct equilibria at the same drive.
    pub switched: bool,
}

fn track(pace: &Pace, tol: f64) -> TrackOptions {
    TrackOptions { tol, check_dt: pace.check_dt, ..TrackOptions::default() }
}

fn same_equilibrium(a: &Equilibrium, b: &Equilibrium) -> bool {
    geodesic_distance(&equilibrium_quaternion(a), &equilibrium_quaternion(b)) < 1e-3
}

/// Hold long enough for five e-foldings of the slowest stable mode at the
/// drive, at least `pace.settle` and at most `MAX_SETTLE`.
pub fn settle_time(dec: &PDecomposition, ma: f64, cos_psi: f64, pace: &Pace) -> f64 {
    let slowest = solve_equilibria(dec, ma, cos_psi)
        .map(|s| {
            s.equilibria
                .iter()
                .filter(|e| e.is_stable())
                .flat_map(|e| e.eigenvalues.eigenvalues.iter().map(|z| -z.re))
                .fold(f64::INFINITY, f64::min)
        })
        .unwrap_or(f64::INFINITY);
    (5.0 / slowest).clamp(pace.settle, MAX_SETTLE.max(pace.settle))
}

pub const MAX_SETTLE: f64 = 60000.0;

/// Like `Schedule::ramps`, with holds from `settle_time`.
pub fn paced_ramps(dec: &PDecomposition, start: (f64, f64), targets: &[(f64, f64)], pace: &Pace) -> Schedule {
    let mut t = settle_time(dec, start.0, start.1, pace);
    let mut w = vec![Waypoint { t: 0.0, ma: start.0, cos_psi: start.1 }, Waypoint { t, ma: start.0, cos_psi: start.1 }];
    let mut cur = start;
    for &(ma, cp) in targets {
        let d = (ma - cur.0).abs().max((cp - cur.1).abs());
        if d > 0.0 {
            t += d / pace.rate;
            w.push(Waypoint { t, ma, cos_psi: cp });
        }
        t += settle_time(dec, ma, cp, pace);
        w.push(Waypoint { t, ma, cos_psi: cp });
        cur = (ma, cp);
    }
    Schedule { waypoints: w, rate_bound: pace.rate }
}

fn stage(dec: &PDecomposition, name: &str, from: (f64, f64), to: &[(f64, f64)], pace: &Pace, q: &Quat, tol: f64) -> Result<Stage, DynamicsError> {
    let schedule = paced_ramps(dec, from, to, pace);
    let log = run_schedule(dec, &schedule, q, &track(pace, tol))?;
    Ok(Stage { name: name.to_string(), schedule, log })
}

fn finish(strategy: &str, stages: Vec<Stage>, start: Option<Equilibrium>) -> HandlingRun {
    let end = stages.last().and_then(|s| s.log.final_equilibrium.clone());
    let switched = match (&start, &end) {
        (Some(a), Some(b)) => !same_equilibrium(a, b),
        _ => false,
    };
    HandlingRun { strategy: strategy.to_string(), stages, start, end, switched }
}

/// Stable equilibria at a drive, sorted by |v_ax| descending.
pub fn stable_branches(dec: &PDecomposition, ma: f64, cos_psi: f64) -> Result<Vec<Equilibrium>, DynamicsError> {
    let mut st: Vec<Equilibrium> = solve_equilibria(dec, ma, cos_psi)?.equilibria.into_iter().filter(|e| e.is_stable()).collect();
    st.sort_by(|a, b| b.v_ax.abs().total_cmp(&a.v_ax.abs()));
    Ok(st)
}

/// Hold Ma, sweep cos ψ out to `c_turn` past the fold of the current branch,
/// then bring it back.
pub fn fold_sweep(dec: &PDecomposition, ma: f64, cos_psi: f64, c_turn: f64, start: &Equilibrium, pace: &Pace, tol: f64) -> Result<HandlingRun, DynamicsError> {
    let q = equilibrium_quaternion(start);
    let s = stage(dec, "sweep", (ma, cos_psi), &[(ma, c_turn), (ma, cos_psi)], pace, &q, tol)?;
    Ok(finish("fold-sweep", vec![s], Some(start.clone())))
}

/// Settle at low Ma with cos ψ on the chosen side, raise Ma, then move
/// cos ψ to the target.
pub fn low_ma_entry(dec: &PDecomposition, ma_low: f64, c_side: f64, target: (f64, f64), q0: &Quat, pace: &Pace, tol: f64) -> Result<HandlingRun, DynamicsError> {
    let s = stage(dec, "low-Ma entry", (ma_low, c_side), &[(target.0, c_side), target], pace, q0, tol)?;
    Ok(finish("low-Ma", vec![s], None))
}

/// Lower Ma, move cos ψ to `c_side`, raise Ma, then return cos ψ.
pub fn two_parameter_loop(dec: &PDecomposition, target: (f64, f64), ma_low: f64, c_side: f64, start: &Equilibrium, pace: &Pace, tol: f64) -> Result<HandlingRun, DynamicsError> {
    let q = equilibrium_quaternion(start);
    let (ma, c) = target;
    let s = stage(dec, "loop", target, &[(ma_low, c), (ma_low, c_side), (ma, c_side), (ma, c)], pace, &q, tol)?;
    Ok(finish("two-parameter-loop", vec![s], Some(start.clone())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u8,
    pub description: String,
    pub ma: f64,
    pub cos_psi: f64,
    pub v_ax: Option<f64>,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub jumps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SevenStepReport {
    pub steps: Vec<StepRecord>,
    /// cos ψ at which the low-Ma branch was lost in step 1.
    pub edge: Option<f64>,
    pub first_side: f64,
    pub v_ax_step3: Option<f64>,
    pub v_ax_step6: Option<f64>,
    pub final_equilibrium: Option<Equilibrium>,
    pub max_norm_drift: f64,
}

/// The seven-step procedure: find the low-Ma interval edge, enter the target
/// from one side, return, enter from the other side, and finish on whichever
/// branch gave the larger |v_ax|.
pub fn seven_step(dec: &PDecomposition, ma_low: f64, target: (f64, f64), q0: &Quat, pace: &Pace, tol: f64) -> Result<SevenStepReport, DynamicsError> {
    let mut steps = Vec::new();
    let mut drift: f64 = 0.0;
    let mut record = |steps: &mut Vec<StepRecord>, step: u8, description: &str, log: &ScheduleLog, at: (f64, f64)| {
        drift = drift.max(log.max_norm_drift);
        let e = log.final_equilibrium.as_ref();
        steps.push(StepRecord {
            step,
            description: description.to_string(),
            ma: at.0,
            cos_psi: at.1,
            v_ax: e.map(|e| e.v_ax),
            theta: e.map(|e| e.theta),
            phi: e.map(|e| e.phi),
            jumps: log.jumps(),
        });
    };

    // step 1: at cos ψ = 0, decrease cos ψ until the branch is lost
    let settle = paced_ramps(dec, (ma_low, 0.0), &[], pace);
    let log0 = run_schedule(dec, &settle, q0, &track(pace, tol))?;
    let sweep_to = -1.0;
    let t_sweep = (sweep_to as f64).abs() / pace.rate;
    let sweep = Schedule {
        waypoints: vec![Waypoint { t: 0.0, ma: ma_low, cos_psi: 0.0 }, Waypoint { t: t_sweep, ma: ma_low, cos_psi: sweep_to }],
        rate_bound: pace.rate,
    };
    let log1 = run_schedule(dec, &sweep, &log0.final_q, &TrackOptions { stop_on_loss: true, ..track(pace, tol) })?;
    let edge = log1
        .events
        .iter()
        .find(|e| matches!(e.kind, EventKind::BranchEnded | EventKind::BranchDestabilised | EventKind::StepOut))
        .map(|e| e.cos_psi);
    record(&mut steps, 1, "low Ma, lower cos ψ from 0 until the branch is lost", &log1, (ma_low, edge.unwrap_or(sweep_to)));

    // step 2: well inside the interval on that side
    let side = 0.5 * edge.unwrap_or(-0.05);
    let s2 = stage(dec, "2", (ma_low, 0.0), &[(ma_low, side)], pace, &log0.final_q, tol)?;
    record(&mut steps, 2, "cos ψ to one side of the low-Ma interval", &s2.log, (ma_low, side));

    // step 3: raise Ma, go to the target drive
    let s3 = stage(dec, "3", (ma_low, side), &[(target.0, side), target], pace, &s2.log.final_q, tol)?;
    record(&mut steps, 3, "raise Ma, move to the target drive", &s3.log, target);
    let v3 = s3.log.final_equilibrium.as_ref().map(|e| e.v_ax);

    // steps 4 to 6
    let back_and_over = |q: &Quat, from_side: f64, to_side: f64, steps: &mut Vec<StepRecord>, first: u8| -> Result<(Quat, Option<f64>, Option<Equilibrium>, f64), DynamicsError> {
        let _ = from_side;
        let s4 = stage(dec, "4", target, &[(target.0, 0.0), (ma_low, 0.0)], pace, q, tol)?;
        let s5 = stage(dec, "5", (ma_low, 0.0), &[(ma_low, to_side)], pace, &s4.log.final_q, tol)?;
        let s6 = stage(dec, "6", (ma_low, to_side), &[(target.0, to_side), target], pace, &s5.log.final_q, tol)?;
        let d = s4.log.max_norm_drift.max(s5.log.max_norm_drift).max(s6.log.max_norm_drift);
        for (k, (s, at, text)) in [
            (&s4, (ma_low, 0.0), "cos ψ back to 0, lower Ma"),
            (&s5, (ma_low, to_side), "cos ψ to the other side"),
            (&s6, target, "raise Ma, move to the target drive"),
        ]
        .into_iter()
        .enumerate()
        {
            let e = s.log.final_equilibrium.as_ref();
            steps.push(StepRecord {
                step: first + k as u8,
                description: text.to_string(),
                ma: at.0,
                cos_psi: at.1,
                v_ax: e.map(|e| e.v_ax),
                theta: e.map(|e| e.theta),
                phi: e.map(|e| e.phi),
                jumps: s.log.jumps(),
            });
        }
        let v = s6.log.final_equilibrium.as_ref().map(|e| e.v_ax);
        Ok((s6.log.final_q, v, s6.log.final_equilibrium.clone(), d))
    };
    let (q6, v6, e6, d6) = back_and_over(&s3.log.final_q, side, -side, &mut steps, 4)?;
    drift = drift.max(d6);

    // step 7: keep the better one, or retrace 4 to 6 back to the first side
    let better_now = match (v3, v6) {
        (Some(a), Some(b)) => b.abs() >= a.abs(),
        (None, Some(_)) => true,
        _ => false,
    };
    let final_equilibrium = if better_now {
        steps.push(StepRecord { step: 7, description: "kept the final state".into(), ma: target.0, cos_psi: target.1, v_ax: v6, theta: e6.as_ref().map(|e| e.theta), phi: e6.as_ref().map(|e| e.phi), jumps: 0 });
        e6
    } else {
        let mut retrace = Vec::new();
        let (_, v, e, d) = back_and_over(&q6, -side, side, &mut retrace, 4)?;
        drift = drift.max(d);
        let jumps = retrace.iter().map(|r| r.jumps).sum();
        steps.push(StepRecord { step: 7, description: "retraced steps 4 to 6 back to the first side".into(), ma: target.0, cos_psi: target.1, v_ax: v, theta: e.as_ref().map(|e| e.theta), phi: e.as_ref().map(|e| e.phi), jumps });
        e
    };

    Ok(SevenStepReport { steps, edge, first_side: side, v_ax_step3: v3, v_ax_step6: v6, final_equilibrium, max_norm_drift: drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swimmer::{bundled, decompose};

    const TARGET: (f64, f64) = (0.015, 0.01);

    fn dec() -> PDecomposition {
        decompose(&bundled("A").unwrap()).unwrap()
    }

    #[test]
    fn fold_sweep_changes_branch() {
        let d = dec();
        let st = stable_branches(&d, TARGET.0, TARGET.1).unwrap();
        assert_eq!(st.len(), 2);
        // the faster branch ends at a fold near cos ψ = -0.05
        let r = fold_sweep(&d, TARGET.0, TARGET.1, -0.08, &st[0], &Pace::default(), 1e-9).unwrap();
        assert!(r.switched);
        assert!(same_equilibrium(r.end.as_ref().unwrap(), &st[1]));
        assert_eq!(r.stages[0].log.jumps(), 1);
        // the sweep that stays inside the branch changes nothing
        let r = fold_sweep(&d, TARGET.0, TARGET.1, 0.02, &st[0], &Pace::default(), 1e-9).unwrap();
        assert!(!r.switched);
    }

    #[test]
    fn low_ma_side_selects_branch() {
        let d = dec();
        let st = stable_branches(&d, TARGET.0, TARGET.1).unwrap();
        let q0 = Quat::new(0.1, 0.2, 0.3, 0.9).normalize();
        let plus = low_ma_entry(&d, 0.002, 0.05, TARGET, &q0, &Pace::default(), 1e-9).unwrap();
        let minus = low_ma_entry(&d, 0.002, -0.05, TARGET, &q0, &Pace::default(), 1e-9).unwrap();
        assert!(same_equilibrium(plus.end.as_ref().unwrap(), &st[0]));
        assert!(same_equilibrium(minus.end.as_ref().unwrap(), &st[1]));
    }

    #[test]
    fn seven_steps_end_on_faster_branch() {
        let d = dec();
        let st = stable_branches(&d, TARGET.0, TARGET.1).unwrap();
        let q0 = Quat::new(0.1, 0.2, 0.3, 0.9).normalize();
        let r = seven_step(&d, 0.002, TARGET, &q0, &Pace::default(), 1e-9).unwrap();
        assert_eq!(r.steps.len(), 7);
        let edge = r.edge.unwrap();
        assert!((edge + 0.08).abs() < 0.01, "{edge}");
        let (v3, v6) = (r.v_ax_step3.unwrap(), r.v_ax_step6.unwrap());
        assert!((v3 - v6).abs() > 1e-5);
        assert!(same_equilibrium(r.final_equilibrium.as_ref().unwrap(), &st[0]));
        // the norm correction holds |q| at the level of the local error
        assert!(r.max_norm_drift < 10.0 * 1e-9, "{}", r.max_norm_drift);
    }
}
