use crate::args::{Common, QuatArg, Span};
use crate::error::{invalid, numerical, CliError};
use crate::output::{Meta, Sink};
use crate::{scripts, Cli, Command, Strategy};
use magswim::atlas::{chart_grid, chart_ranges, self_intersections};
use magswim::dynamics::handling::{fold_sweep, low_ma_entry, seven_step, stable_branches, two_parameter_loop, Pace};
use magswim::dynamics::{basin_sample, helix_of, integrate_full, random_orientation, run_schedule, Attractor, Quat, Schedule, SimOptions, TrackOptions};
use magswim::optimize::{bead_scaling, best_level_set, linearity_r2, optimal_magnetisation, optimize_drive, pitch, vax_vs_ma_curve, velocity_per_rotation, OptimizeError};
use magswim::periodic::{continue_from_hopf_points, ContinuationOptions, MIN_LAMBDA_I};
use magswim::regimes::regime_diagram;
use magswim::stability::{fold_curves, hopf_curves, BifurcationCurve, CurveKind};
use magswim::swimmer::chirality;
use magswim::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::fs;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = serde_json::to_value(&cli.command)?;
    match &cli.command {
        Command::List => {
            for name in bundled_names() {
                let s = bundled(name)?;
                println!("{name}\t{}", s.description.as_deref().unwrap_or(""));
            }
            Ok(())
        }
        Command::Info { common } => {
            let (s, d, sink) = setup(common, config)?;
            info(&s, &d, sink)
        }
        Command::Atlas { common, theta, phi, resolution, mark } => {
            let (_, d, sink) = setup(common, config)?;
            atlas(&d, sink, *theta, *phi, *resolution, mark.as_deref())
        }
        Command::Regimes { common, ma, cospsi } => {
            let (_, d, sink) = setup(common, config)?;
            regimes(&d, sink, *ma, *cospsi)
        }
        Command::Simulate { common, ma, cospsi, q0, seed, t_end, dt, tol } => {
            let (_, d, sink) = setup(common, config)?;
            check_drive(*ma, *cospsi)?;
            check_tol(*tol)?;
            if !(*t_end > 0.0 && *dt > 0.0) {
                return Err(invalid("--t-end and --dt must be positive"));
            }
            simulate(&d, sink, *ma, *cospsi, initial(*q0, *seed)?, *t_end, *dt, *tol)
        }
        Command::Basins { common, ma, cospsi, n, seed, t_end, tol } => {
            let (_, d, sink) = setup(common, config)?;
            check_drive(*ma, *cospsi)?;
            check_tol(*tol)?;
            if *n == 0 || *t_end <= 0.0 {
                return Err(invalid("--n and --t-end must be positive"));
            }
            basins(&d, sink, *ma, *cospsi, *n, *seed, *t_end, *tol)
        }
        Command::Optimize { common, cospsi, points, include_unstable } => {
            let (s, d, sink) = setup(common, config)?;
            check_cospsi_span(cospsi)?;
            if *points < 16 {
                return Err(invalid("--points must be at least 16"));
            }
            optimize(&s, &d, sink, *cospsi, *points, !include_unstable)
        }
        Command::Periodic { common, resolution, per_curve, ds_max, max_steps, dump_orbits } => {
            let (_, d, sink) = setup(common, config)?;
            if *per_curve == 0 || *resolution < 8 || *ds_max <= 0.0 || *max_steps == 0 {
                return Err(invalid("--per-curve, --resolution (≥ 8), --ds-max and --max-steps must be positive"));
            }
            periodic(&d, sink, *resolution, *per_curve, *ds_max, *max_steps, *dump_orbits)
        }
        Command::Handling { common, .. } => {
            let (_, d, sink) = setup(common, config)?;
            handling(&d, sink, &cli.command)
        }
    }
}

fn setup(common: &Common, config: serde_json::Value) -> Result<(Swimmer, PDecomposition, Sink), CliError> {
    let swimmer = match (&common.swimmer, &common.bundled) {
        (Some(p), _) if p.as_os_str().is_empty() => return Err(invalid("--swimmer path is empty")),
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            load_swimmer(&text)?
        }
        (None, Some(name)) => bundled(name)?,
        (None, None) => return Err(invalid("one of --swimmer PATH or --bundled NAME is required")),
    };
    if common.threads > 0 {
        // a second call fails harmlessly when the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(common.threads).build_global();
    }
    let dec = decompose(&swimmer)?;
    let sink = Sink::new(&common.out, Meta::new(&swimmer, config))?;
    Ok((swimmer, dec, sink))
}

fn check_drive(ma: f64, cos_psi: f64) -> Result<(), CliError> {
    if !(ma >= 0.0 && ma.is_finite()) {
        return Err(invalid(format!("Ma = {ma} must be finite and non-negative")));
    }
    if !(cos_psi.abs() <= 1.0) {
        return Err(invalid(format!("cos ψ = {cos_psi} outside [−1, 1]")));
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<(), CliError> {
    if (1e-12..=1e-6).contains(&tol) {
        Ok(())
    } else {
        Err(invalid(format!("--tol {tol} outside [1e-12, 1e-6]")))
    }
}

fn check_cospsi_span(s: &Span) -> Result<(), CliError> {
    if s.lo.abs() > 1.0 || s.hi.abs() > 1.0 || s.lo > s.hi {
        return Err(invalid("cos ψ span must satisfy −1 ≤ LO ≤ HI ≤ 1"));
    }
    Ok(())
}

fn initial(q0: Option<QuatArg>, seed: u64) -> Result<Quat, CliError> {
    match q0 {
        Some(QuatArg(a)) => {
            let q = Quat::new(a[0], a[1], a[2], a[3]);
            if q.norm() == 0.0 || !q.norm().is_finite() {
                return Err(invalid("--q0 must be a finite non-zero quaternion"));
            }
            Ok(q.normalize())
        }
        None => Ok(random_orientation(&mut ChaCha8Rng::seed_from_u64(seed))),
    }
}

fn info(s: &Swimmer, d: &PDecomposition, mut sink: Sink) -> Result<(), CliError> {
    let ranges = chart_ranges(d, 400);
    let chir = chirality(s)?;
    let body = json!({
        "decomposition": {
            "sigma1": d.sigma1, "sigma2": d.sigma2,
            "c01": d.c01, "c02": d.c02, "c11": d.c11, "c12": d.c12,
            "theta0": d.theta0, "degenerate": d.degenerate,
            "beta": d.beta, "eta": d.eta,
        },
        "chirality": chir,
        "ranges": ranges,
    });
    println!(
        "{}: sigma1 {:.4} sigma2 {:.4} c01 {:.4} c02 {:.4e} c11 {:.4e} c12 {:.4} theta0 {:.4}; Ma <= {:.4}, cos psi in [{:.4}, {:.4}]",
        s.name, d.sigma1, d.sigma2, d.c01, d.c02, d.c11, d.c12, d.theta0, ranges.max_ma, ranges.cos_psi_min, ranges.cos_psi_max
    );
    sink.json("info.json", &body)?;
    sink.finish();
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    curve: usize,
    kind: &'static str,
    theta: f64,
    phi: f64,
    ma: f64,
    cos_psi: f64,
    lambda_i: Option<f64>,
}

fn curve_rows(curves: &[BifurcationCurve], offset: usize) -> Vec<CurveRow> {
    curves
        .iter()
        .enumerate()
        .flat_map(|(k, c)| {
            let kind = match c.kind {
                CurveKind::Fold => "fold",
                CurveKind::Hopf => "hopf",
            };
            c.points.iter().map(move |p| CurveRow { curve: offset + k, kind, theta: p.theta, phi: p.phi, ma: p.ma, cos_psi: p.cos_psi, lambda_i: p.lambda_i })
        })
        .collect()
}

fn atlas(d: &PDecomposition, mut sink: Sink, n_theta: usize, n_phi: usize, resolution: usize, mark: Option<&str>) -> Result<(), CliError> {
    if n_theta < 2 || n_phi < 2 || resolution < 8 {
        return Err(invalid("--theta and --phi need at least 2 points, --resolution at least 8"));
    }
    let grid = chart_grid(d, n_theta, n_phi);
    sink.csv(
        "chart.csv",
        &["theta", "phi", "ma", "cos_psi", "v_ax", "index"],
        grid.iter().map(|e| (e.theta, e.phi, e.ma, e.cos_psi, e.v_ax, e.index.to_string())),
    )?;
    let folds = fold_curves(d, resolution);
    let hopfs = hopf_curves(d, resolution);
    let mut rows = curve_rows(&folds, 0);
    rows.extend(curve_rows(&hopfs, folds.len()));
    sink.csv("curves.csv", &["curve", "kind", "theta", "phi", "ma", "cos_psi", "lambda_i"], rows)?;
    let inter = self_intersections(d, resolution);
    sink.csv(
        "intersections.csv",
        &["curve", "kind", "theta", "phi"],
        inter.curves.iter().enumerate().flat_map(|(k, c)| c.points.iter().map(move |&(t, p)| (k, c.kind.label(), t, p))),
    )?;
    let mut marks = None;
    if let Some(m) = mark {
        let v: Vec<f64> = m.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| invalid(format!("--mark: {e}")))?;
        let [ma, c] = v[..] else { return Err(invalid("--mark takes MA,COSPSI")) };
        check_drive(ma, c)?;
        let sol = solve_equilibria(d, ma, c).map_err(numerical)?;
        sink.csv(
            "marks.csv",
            &["theta", "phi", "ma", "cos_psi", "v_ax", "index", "near_fold"],
            sol.equilibria.iter().map(|e| (e.theta, e.phi, e.ma, e.cos_psi, e.v_ax, e.index.to_string(), e.near_fold)),
        )?;
        println!("{} equilibria at (Ma, cos psi) = ({ma}, {c}), {} stable", sol.equilibria.len(), sol.stable_count());
        marks = Some((ma, c));
    }
    sink.script("atlas.py", &scripts::atlas(marks))?;
    println!("{} fold curves, {} Hopf curves, {} intersection curves", folds.len(), hopfs.len(), inter.curves.len());
    sink.finish();
    Ok(())
}

fn regimes(d: &PDecomposition, mut sink: Sink, ma: Option<Span>, cospsi: Span) -> Result<(), CliError> {
    let ma = ma.unwrap_or(Span { lo: 0.0, hi: 1.1 * d.sigma1, n: 200 });
    if ma.lo < 0.0 || ma.lo > ma.hi {
        return Err(invalid("Ma span must satisfy 0 ≤ LO ≤ HI"));
    }
    check_cospsi_span(&cospsi)?;
    let diag = regime_diagram(d, (ma.lo, ma.hi), (cospsi.lo, cospsi.hi), ma.n, cospsi.n).map_err(numerical)?;
    let mut rows = Vec::with_capacity(diag.cells.len());
    for j in 0..diag.ny() {
        for i in 0..diag.nx() {
            let r = diag.at(i, j);
            rows.push((diag.ma_axis[i], diag.cospsi_axis[j], r.total, r.stable, r.label(), r.flagged));
        }
    }
    sink.csv("regimes.csv", &["ma", "cos_psi", "total", "stable", "label", "flagged"], rows)?;
    let counts = diag.label_counts();
    sink.json("regimes.json", &json!({ "label_counts": counts, "regions": diag.regions() }))?;
    sink.script("regimes.py", scripts::REGIMES)?;
    for (label, n) in &counts {
        println!("{label}: {n} cells");
    }
    sink.finish();
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(d: &PDecomposition, mut sink: Sink, ma: f64, cos_psi: f64, q0: Quat, t_end: f64, dt: f64, tol: f64) -> Result<(), CliError> {
    let opts = SimOptions { tol, sample_dt: Some(dt), stop_on_convergence: false };
    let tr = integrate_full(d, &q0, &Vec3::zeros(), ma, cos_psi, t_end, &opts).map_err(numerical)?;
    sink.csv(
        "trajectory.csv",
        &["t", "q1", "q2", "q3", "q4", "x", "y", "z"],
        tr.states.iter().map(|s| (s.t, s.q[0], s.q[1], s.q[2], s.q[3], s.x[0], s.x[1], s.x[2])),
    )?;
    let end = tr.states.last().map(|s| s.q).unwrap_or(q0);
    let sol = solve_equilibria(d, ma, cos_psi).map_err(numerical)?;
    let nearest = sol
        .equilibria
        .iter()
        .map(|e| (magswim::dynamics::geodesic_distance(&magswim::dynamics::equilibrium_quaternion(e), &end), e))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let summary = json!({
        "q0": q0,
        "steps": tr.steps,
        "converged_at": tr.converged_at,
        "max_norm_drift": tr.max_norm_drift,
        "nearest_equilibrium": nearest.map(|(dist, e)| json!({ "distance": dist, "equilibrium": e, "helix": helix_of(d, e) })),
    });
    sink.json("simulate.json", &summary)?;
    sink.script("simulate.py", scripts::SIMULATE)?;
    println!("{} samples, converged at {:?}, norm drift {:.2e}", tr.states.len(), tr.converged_at, tr.max_norm_drift);
    sink.finish();
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn basins(d: &PDecomposition, mut sink: Sink, ma: f64, cos_psi: f64, n: usize, seed: u64, t_end: f64, tol: f64) -> Result<(), CliError> {
    let rep = basin_sample(d, ma, cos_psi, n, seed, t_end, tol).map_err(numerical)?;
    let label = |a: Attractor| match a {
        Attractor::Equilibrium(k) => format!("eq{k}"),
        Attractor::Periodic => "periodic".into(),
        Attractor::Unconverged => "unconverged".into(),
    };
    sink.csv(
        "basins.csv",
        &["sample", "q1", "q2", "q3", "q4", "attractor", "t_converge"],
        rep.samples.iter().enumerate().map(|(i, s)| (i, s.q0[0], s.q0[1], s.q0[2], s.q0[3], label(s.attractor), s.t_converge)),
    )?;
    let unconverged = rep.samples.iter().filter(|s| s.attractor == Attractor::Unconverged).count();
    let periodic = rep.samples.iter().filter(|s| s.attractor == Attractor::Periodic).count();
    sink.json(
        "basins.json",
        &json!({ "stable": rep.stable, "counts": rep.counts(), "periodic": periodic, "unconverged": unconverged, "max_norm_drift": rep.max_norm_drift }),
    )?;
    sink.script("basins.py", scripts::BASINS)?;
    println!("basins {:?}, periodic {periodic}, unconverged {unconverged}", rep.counts());
    sink.finish();
    Ok(())
}

fn optimize(s: &Swimmer, d: &PDecomposition, mut sink: Sink, levels: Span, points: usize, stable_only: bool) -> Result<(), CliError> {
    let drive = optimize_drive(d, stable_only);
    let magnetisation = match optimal_magnetisation(&s.m12, &s.m22) {
        Ok(o) => Some(o),
        Err(OptimizeError::ZeroVelocity) => None,
        Err(e) => return Err(numerical(e)),
    };
    let best = best_level_set(d, (levels.lo, levels.hi), levels.n.max(3) * 4, points, stable_only);
    let chir = chirality(s)?;
    let mut rows = Vec::new();
    let mut linearity = Vec::new();
    for c in levels.values() {
        for (k, curve) in vax_vs_ma_curve(d, c, points).into_iter().enumerate() {
            let stable: Vec<_> = curve.points.iter().copied().filter(|p| p.stable).collect();
            linearity.push(json!({ "cos_psi": c, "piece": k, "r2_stable": linearity_r2(&stable) }));
            for p in curve.points {
                let (alpha, v_star) = bead_scaling(p.ma, p.v_ax, &chir);
                rows.push((c, k, p.theta, p.phi, p.ma, p.v_ax, p.stable, pitch(p.v_ax, p.ma), velocity_per_rotation(p.v_ax, p.ma), alpha, v_star));
            }
        }
    }
    sink.csv(
        "vax_curves.csv",
        &["cos_psi", "piece", "theta", "phi", "ma", "v_ax", "stable", "pitch", "v_per_rotation", "alpha_star", "v_star"],
        rows,
    )?;
    sink.json(
        "optimize.json",
        &json!({ "stable_only": stable_only, "drive": drive, "magnetisation": magnetisation, "best_level_set": best, "linearity": linearity }),
    )?;
    sink.script("optimize.py", scripts::OPTIMIZE)?;
    println!("optimal drive: Ma {:.4} cos psi {:.4} v_ax {:.5e} (stable {})", drive.ma, drive.cos_psi, drive.v_ax, drive.stable);
    if let Some(m) = &magnetisation {
        println!("optimal moment: ({:.4}, {:.4}, {:.4}), v_ax* {:.5e} at Ma {:.4}", m.m_star[0], m.m_star[1], m.m_star[2], m.v_ax_star, m.ma_star);
    }
    sink.finish();
    Ok(())
}

fn periodic(d: &PDecomposition, mut sink: Sink, resolution: usize, per_curve: usize, ds_max: f64, max_steps: usize, dump: bool) -> Result<(), CliError> {
    let curves = hopf_curves(d, resolution);
    let mut seeds = Vec::new();
    for c in &curves {
        let n = c.points.len();
        for k in 0..per_curve {
            let p = c.points[((2 * k + 1) * n) / (2 * per_curve)];
            if p.lambda_i.is_some_and(|l| l >= MIN_LAMBDA_I) {
                seeds.push(p);
            }
        }
    }
    let opts = ContinuationOptions { ds_max, max_steps, ..ContinuationOptions::default() };
    let results = continue_from_hopf_points(d, &seeds, &opts);
    let mut rows = Vec::new();
    let mut orbit_rows = Vec::new();
    let mut summary = Vec::new();
    for (b, r) in results.iter().enumerate() {
        let direction = if b % 2 == 0 { 1 } else { -1 };
        match r {
            Ok(br) => {
                for (step, o) in br.orbits.iter().enumerate() {
                    rows.push((b, direction, step, o.ma, o.cos_psi, o.period, o.max_multiplier(), o.stable, o.amplitude()));
                    if dump {
                        orbit_rows.extend(o.samples.iter().enumerate().map(|(k, q)| (b, step, k, q[0], q[1], q[2], q[3])));
                    }
                }
                summary.push(json!({
                    "branch": b, "direction": direction, "start": br.start, "period": br.period,
                    "orbits": br.orbits.len(), "stable": br.orbits.iter().filter(|o| o.stable).count(),
                    "end": br.end, "incomplete": br.incomplete(),
                }));
            }
            Err(e) => summary.push(json!({ "branch": b, "direction": direction, "start": (seeds[b / 2].ma, seeds[b / 2].cos_psi), "error": e.to_string() })),
        }
    }
    sink.csv("branches.csv", &["branch", "direction", "step", "ma", "cos_psi", "period", "max_multiplier", "stable", "amplitude"], rows)?;
    if dump {
        sink.csv("orbits.csv", &["branch", "step", "sample", "q1", "q2", "q3", "q4"], orbit_rows)?;
    }
    let hopf_rows = curve_rows(&curves, 0);
    sink.csv("hopf.csv", &["curve", "kind", "theta", "phi", "ma", "cos_psi", "lambda_i"], hopf_rows)?;
    sink.json("periodic.json", &json!({ "seeds": seeds, "branches": summary }))?;
    sink.script("periodic.py", scripts::PERIODIC)?;
    println!("{} Hopf curves, {} seeds, {} branches", curves.len(), seeds.len(), results.len());
    sink.finish();
    Ok(())
}

fn handling(d: &PDecomposition, mut sink: Sink, cmd: &Command) -> Result<(), CliError> {
    let Command::Handling { strategy, ma, cospsi, c_turn, side, ma_low, branch, schedule, q0, seed, rate, settle, tol, .. } = cmd else { unreachable!() };
    check_tol(*tol)?;
    if !(*rate > 0.0 && *settle >= 0.0) {
        return Err(invalid("--rate must be positive and --settle non-negative"));
    }
    let pace = Pace { rate: *rate, settle: *settle, ..Pace::default() };
    let target = || -> Result<(f64, f64), CliError> {
        let (Some(m), Some(c)) = (ma, cospsi) else { return Err(invalid("this strategy needs --ma and --cospsi")) };
        check_drive(*m, *c)?;
        Ok((*m, *c))
    };
    let low = ma_low.unwrap_or(0.1 * d.sigma2);
    let need = |v: &Option<f64>, flag: &str| v.ok_or_else(|| invalid(format!("this strategy needs {flag}")));
    let start_branch = |t: (f64, f64)| -> Result<Equilibrium, CliError> {
        let st = stable_branches(d, t.0, t.1).map_err(numerical)?;
        st.get(*branch).cloned().ok_or_else(|| invalid(format!("only {} stable branches at the target", st.len())))
    };
    let body = match strategy {
        Strategy::FoldSweep => {
            let t = target()?;
            let turn = need(c_turn, "--c-turn")?;
            check_drive(t.0, turn)?;
            let run = fold_sweep(d, t.0, t.1, turn, &start_branch(t)?, &pace, *tol).map_err(numerical)?;
            println!("fold sweep: switched {}", run.switched);
            json!({ "run": run })
        }
        Strategy::LowMa => {
            let t = target()?;
            let c = need(side, "--side")?;
            check_drive(low, c)?;
            let run = low_ma_entry(d, low, c, t, &initial(*q0, *seed)?, &pace, *tol).map_err(numerical)?;
            println!("low-Ma entry: end v_ax {:?}", run.end.as_ref().map(|e| e.v_ax));
            json!({ "run": run })
        }
        Strategy::Loop => {
            let t = target()?;
            let c = need(side, "--side")?;
            check_drive(low, c)?;
            let run = two_parameter_loop(d, t, low, c, &start_branch(t)?, &pace, *tol).map_err(numerical)?;
            println!("two-parameter loop: switched {}", run.switched);
            json!({ "run": run })
        }
        Strategy::SevenStep => {
            let t = target()?;
            let rep = seven_step(d, low, t, &initial(*q0, *seed)?, &pace, *tol).map_err(numerical)?;
            for s in &rep.steps {
                println!("step {}: {} -> v_ax {:?}", s.step, s.description, s.v_ax);
            }
            json!({ "report": rep })
        }
        Strategy::Schedule => {
            let path = schedule.as_ref().ok_or_else(|| invalid("--strategy schedule needs --schedule FILE"))?;
            let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            let sch: Schedule = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            sch.validate().map_err(|e| invalid(e.to_string()))?;
            let opts = TrackOptions { tol: *tol, check_dt: pace.check_dt, ..TrackOptions::default() };
            let log = run_schedule(d, &sch, &initial(*q0, *seed)?, &opts).map_err(numerical)?;
            println!("{} events, {} jumps", log.events.len(), log.jumps());
            json!({ "schedule": sch, "log": log })
        }
    };
    sink.json("handling.json", &body)?;
    sink.script("handling.py", scripts::HANDLING)?;
    sink.finish();
    Ok(())
}
