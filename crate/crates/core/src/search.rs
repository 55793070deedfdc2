//! Grid helpers shared by the chart sweeps: zero-contour tracing by marching
//! squares, Newton projection onto a level set, and a small Nelder–Mead.

use rayon::prelude::*;
use std::collections::HashMap;

/// Samples of a scalar field on a tensor grid, `values[j * xs.len() + i] = f(xs[i], ys[j])`.
#[derive(Debug, Clone)]
pub struct Grid2 {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl Grid2 {
    /// Evaluate `f` on the grid, rows in parallel. The result does not depend
    /// on the thread count.
    pub fn sample<F>(xs: Vec<f64>, ys: Vec<f64>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let values: Vec<f64> = ys
            .par_iter()
            .flat_map_iter(|&y| xs.iter().map(|&x| f(x, y)).collect::<Vec<_>>())
            .collect();
        Grid2 { xs, ys, values }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.xs.len() + i]
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Polylines along which the sampled field changes sign. Crossing points are
/// linear interpolants on grid edges; saddle cells are split by the cell mean.
pub fn zero_contours(g: &Grid2) -> Vec<Vec<(f64, f64)>> {
    let (nx, ny) = (g.xs.len(), g.ys.len());
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let neg = |v: f64| v < 0.0;
    let point = |e: Edge| -> (f64, f64) {
        let (i0, j0, i1, j1) = match e {
            Edge::H(i, j) => (i, j, i + 1, j),
            Edge::V(i, j) => (i, j, i, j + 1),
        };
        let (a, b) = (g.at(i0, j0), g.at(i1, j1));
        let t = if a == b { 0.5 } else { a / (a - b) };
        (g.xs[i0] + t * (g.xs[i1] - g.xs[i0]), g.ys[j0] + t * (g.ys[j1] - g.ys[j0]))
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v = [g.at(i, j), g.at(i + 1, j), g.at(i + 1, j + 1), g.at(i, j + 1)];
            if v.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let s = v.map(neg);
            let bottom = Edge::H(i, j);
            let right = Edge::V(i + 1, j);
            let top = Edge::H(i, j + 1);
            let left = Edge::V(i, j);
            let mut crossed = Vec::with_capacity(4);
            if s[0] != s[1] {
                crossed.push(bottom);
            }
            if s[1] != s[2] {
                crossed.push(right);
            }
            if s[2] != s[3] {
                crossed.push(top);
            }
            if s[3] != s[0] {
                crossed.push(left);
            }
            match crossed.len() {
                2 => segments.push((crossed[0], crossed[1])),
                4 => {
                    let centre = neg(v.iter().sum::<f64>() / 4.0);
                    if centre == s[0] {
                        segments.push((bottom, right));
                        segments.push((top, left));
                    } else {
                        segments.push((bottom, left));
                        segments.push((right, top));
                    }
                }
                _ => {}
            }
        }
    }

    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(k);
        by_edge.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut chain: std::collections::VecDeque<Edge> = [a, b].into_iter().collect();
        // extend forwards from b, then backwards from a
        for forward in [true, false] {
            loop {
                let end = if forward { *chain.back().unwrap() } else { *chain.front().unwrap() };
                let next = by_edge[&end].iter().copied().find(|&k| !used[k]);
                let Some(k) = next else { break };
                used[k] = true;
                let (p, q) = segments[k];
                let other = if p == end { q } else { p };
                if forward {
                    chain.push_back(other);
                } else {
                    chain.push_front(other);
                }
            }
        }
        lines.push(chain.into_iter().map(point).collect());
    }
    lines
}

/// Project `(x, y)` onto the zero set of `f` by Newton steps along the
/// numerical gradient. Returns `None` if the iteration does not settle.
pub fn project_to_zero<F>(f: &F, mut x: f64, mut y: f64, tol: f64, max_shift: f64) -> Option<(f64, f64)>
where
    F: Fn(f64, f64) -> f64,
{
    let (x0, y0) = (x, y);
    let h = 1e-7;
    for _ in 0..40 {
        let v = f(x, y);
        if !v.is_finite() {
            return None;
        }
        if v.abs() <= tol {
            return Some((x, y));
        }
        let gx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let gy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        let g2 = gx * gx + gy * gy;
        if g2 == 0.0 || !g2.is_finite() {
            return None;
        }
        let (dx, dy) = (v * gx / g2, v * gy / g2);
        x -= dx;
        y -= dy;
        if ((x - x0).powi(2) + (y - y0).powi(2)).sqrt() > max_shift {
            return None;
        }
        if (dx * dx + dy * dy).sqrt() < 1e-15 {
            let v = f(x, y);
            return (v.abs() <= tol * 1e3).then_some((x, y));
        }
    }
    None
}

/// Minimise `f` from `x0` with initial simplex edge `step`.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: f64, tol: f64, max_iter: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        vals = order.iter().map(|&k| vals[k]).collect();
        let spread = simplex[1..].iter().map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        if spread < tol {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|p| p[d]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (simplex[n][d] - centroid[d])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for k in 1..=n {
                    simplex[k] = (0..n).map(|d| simplex[0][d] + 0.5 * (simplex[k][d] - simplex[0][d])).collect();
                    vals[k] = f(&simplex[k]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best].clone(), vals[best])
}
