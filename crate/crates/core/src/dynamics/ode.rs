//! Dormand–Prince 5(4) with step-size control and 4th-order dense output.

use nalgebra::SVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; 0 picks one from the right-hand side.
    pub h0: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, h0: 0.0, h_max: f64::INFINITY, h_min: 1e-12, max_steps: 50_000_000 }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64, state: Vec<f64> },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64, state: Vec<f64> },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64, state: Vec<f64> },
}

/// One accepted step, with the interpolant over it.
pub struct Step<'a, const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a SVector<f64, N>,
    pub y1: &'a SVector<f64, N>,
    cont: &'a [SVector<f64, N>; 5],
}

impl<const N: usize> Step<'_, N> {
    /// State at `t` inside the step.
    pub fn at(&self, t: f64) -> SVector<f64, N> {
        let h = self.t1 - self.t0;
        let s = if h == 0.0 { 1.0 } else { (t - self.t0) / h };
        let s1 = 1.0 - s;
        let c = self.cont;
        c[0] + (c[1] + (c[2] + (c[3] + c[4] * s1) * s) * s1) * s
    }
}

/// What the observer wants after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub t_final: f64,
    pub stopped_early: bool,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn err_norm<const N: usize>(err: &SVector<f64, N>, y0: &SVector<f64, N>, y1: &SVector<f64, N>, o: &OdeOptions) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let sc = o.atol + o.rtol * y0[i].abs().max(y1[i].abs());
        s += (err[i] / sc).powi(2);
    }
    (s / N as f64).sqrt()
}

/// Integrate y' = f(t, y) from `t0` to `t_end` (either direction), calling
/// `observe` after every accepted step.
pub fn integrate<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    y0: SVector<f64, N>,
    t_end: f64,
    opts: &OdeOptions,
    mut observe: O,
) -> Result<(SVector<f64, N>, OdeStats), OdeError>
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
    O: FnMut(&Step<'_, N>) -> Control,
{
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let mut stats = OdeStats { t_final: t0, ..Default::default() };
    if span == 0.0 {
        return Ok((y0, stats));
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    stats.evaluations += 1;

    let mut h = if opts.h0 > 0.0 {
        opts.h0
    } else {
        let sc = |i: usize| opts.atol + opts.rtol * y[i].abs();
        let d0 = (0..N).map(|i| (y[i] / sc(i)).powi(2)).sum::<f64>().sqrt();
        let d1 = (0..N).map(|i| (k1[i] / sc(i)).powi(2)).sum::<f64>().sqrt();
        let guess = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        guess.min(span)
    };
    h = h.min(opts.h_max);
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(OdeError::TooManySteps { t, state: y.iter().copied().collect() });
        }
        let remaining = (t_end - t) * dir;
        if remaining <= 0.0 {
            break;
        }
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        let hs = h * dir;
        let k2 = f(t + C2 * hs, &(y + k1 * (A21 * hs)));
        let k3 = f(t + C3 * hs, &(y + (k1 * A31 + k2 * A32) * hs));
        let k4 = f(t + C4 * hs, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * hs));
        let k5 = f(t + C5 * hs, &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * hs));
        let k6 = f(t + hs, &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * hs));
        let y1 = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * hs;
        let k7 = f(t + hs, &y1);
        stats.evaluations += 6;
        let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * hs;
        let en = err_norm(&err, &y, &y1, opts);

        if !en.is_finite() || !y1.iter().all(|v| v.is_finite()) {
            if h <= opts.h_min {
                return Err(OdeError::NonFinite { t, state: y.iter().copied().collect() });
            }
            h *= 0.1;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }

        if en <= 1.0 {
            let t1 = if last { t_end } else { t + hs };
            let dy = y1 - y;
            let bspl = k1 * hs - dy;
            let cont = [y, dy, bspl, dy - k7 * hs - bspl, (k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + k7 * D7) * hs];
            stats.accepted += 1;
            let step = Step { t0: t, t1, y0: &y, y1: &y1, cont: &cont };
            let ctl = observe(&step);
            t = t1;
            y = y1;
            k1 = k7;
            stats.t_final = t;
            if ctl == Control::Stop {
                stats.stopped_early = !last;
                return Ok((y, stats));
            }
            if last {
                break;
            }
            let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.h_max);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (0.9 * en.powf(-0.2)).max(0.2);
            if h < opts.h_min {
                return Err(OdeError::StepUnderflow { t, state: y.iter().copied().collect() });
            }
        }
    }
    Ok((y, stats))
}
