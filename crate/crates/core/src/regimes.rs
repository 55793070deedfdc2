//! Regime diagrams: how many relative equilibria exist, and how many are
//! stable, at each experimental setting (Ma, cos ψ).

use crate::atlas::{solve_equilibria, AtlasError};
use crate::swimmer::PDecomposition;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

/// Equilibrium counts at one setting, written `stable/total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Regime {
    pub total: usize,
    pub stable: usize,
    /// Too close to a fold or a marginal equilibrium for the counts to be trusted.
    pub flagged: bool,
}

impl Regime {
    pub fn label(&self) -> String {
        format!("{}/{}", self.stable, self.total)
    }
}

pub fn regime_of(dec: &PDecomposition, ma: f64, cos_psi: f64) -> Result<Regime, AtlasError> {
    let s = solve_equilibria(dec, ma, cos_psi)?;
    Ok(Regime { total: s.equilibria.len(), stable: s.stable_count(), flagged: s.flagged() })
}

/// Counts sampled at cell centres of an `nx` × `ny` grid over (Ma, cos ψ).
/// Cell (i, j) is stored at `j * nx + i`, with i along Ma.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeDiagram {
    pub ma_axis: Vec<f64>,
    pub cospsi_axis: Vec<f64>,
    pub ma_range: (f64, f64),
    pub cospsi_range: (f64, f64),
    pub cells: Vec<Regime>,
}

pub fn cell_centres(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect()
}

pub fn regime_diagram(
    dec: &PDecomposition,
    ma_range: (f64, f64),
    cospsi_range: (f64, f64),
    nx: usize,
    ny: usize,
) -> Result<RegimeDiagram, AtlasError> {
    let ma_axis = cell_centres(ma_range.0, ma_range.1, nx.max(1));
    let cospsi_axis = cell_centres(cospsi_range.0, cospsi_range.1, ny.max(1));
    let cells = cospsi_axis
        .par_iter()
        .map(|&c| ma_axis.iter().map(|&m| regime_of(dec, m, c)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(RegimeDiagram { ma_axis, cospsi_axis, ma_range, cospsi_range, cells })
}

/// Connected set of cells sharing one label, with its outline in (Ma, cos ψ).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRegion {
    pub label: String,
    pub cells: usize,
    pub flagged_cells: usize,
    /// Closed outlines along cell edges. Holes come out as extra rings, so
    /// fill with the even-odd rule.
    pub polygons: Vec<Vec<(f64, f64)>>,
}

impl RegimeDiagram {
    pub fn nx(&self) -> usize {
        self.ma_axis.len()
    }

    pub fn ny(&self) -> usize {
        self.cospsi_axis.len()
    }

    pub fn at(&self, i: usize, j: usize) -> &Regime {
        &self.cells[j * self.nx() + i]
    }

    /// Number of cells per label.
    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for c in &self.cells {
            *out.entry(c.label()).or_insert(0) += 1;
        }
        out
    }

    fn edge_x(&self, i: usize) -> f64 {
        self.ma_range.0 + (self.ma_range.1 - self.ma_range.0) * i as f64 / self.nx() as f64
    }

    fn edge_y(&self, j: usize) -> f64 {
        self.cospsi_range.0 + (self.cospsi_range.1 - self.cospsi_range.0) * j as f64 / self.ny() as f64
    }

    /// Cell-merged regions, 4-connected, labelled `stable/total`.
    /// Flagged cells join the region of their own label.
    pub fn regions(&self) -> Vec<RegimeRegion> {
        let (nx, ny) = (self.nx(), self.ny());
        let key = |k: usize| (self.cells[k].stable, self.cells[k].total);
        let mut comp = vec![usize::MAX; nx * ny];
        let mut regions = Vec::new();
        for start in 0..nx * ny {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = regions.len();
            let mut stack = vec![start];
            comp[start] = id;
            let mut members = Vec::new();
            while let Some(k) = stack.pop() {
                members.push(k);
                let (i, j) = (k % nx, k / nx);
                let mut nb = Vec::with_capacity(4);
                if i > 0 {
                    nb.push(k - 1);
                }
                if i + 1 < nx {
                    nb.push(k + 1);
                }
                if j > 0 {
                    nb.push(k - nx);
                }
                if j + 1 < ny {
                    nb.push(k + nx);
                }
                for n in nb {
                    if comp[n] == usize::MAX && key(n) == key(start) {
                        comp[n] = id;
                        stack.push(n);
                    }
                }
            }
            regions.push(RegimeRegion {
                label: self.cells[start].label(),
                cells: members.len(),
                flagged_cells: members.iter().filter(|&&k| self.cells[k].flagged).count(),
                polygons: self.outline(&comp, id),
            });
        }
        regions
    }

    fn outline(&self, comp: &[usize], id: usize) -> Vec<Vec<(f64, f64)>> {
        let (nx, ny) = (self.nx(), self.ny());
        let inside = |i: isize, j: isize| i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && comp[j as usize * nx + i as usize] == id;
        // directed boundary edges between lattice vertices, region kept on the left
        let mut next: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                if !inside(i, j) {
                    continue;
                }
                let (a, b) = (i as usize, j as usize);
                if !inside(i, j - 1) {
                    next.entry((a, b)).or_default().push((a + 1, b));
                }
                if !inside(i + 1, j) {
                    next.entry((a + 1, b)).or_default().push((a + 1, b + 1));
                }
                if !inside(i, j + 1) {
                    next.entry((a + 1, b + 1)).or_default().push((a, b + 1));
                }
                if !inside(i - 1, j) {
                    next.entry((a, b + 1)).or_default().push((a, b));
                }
            }
        }
        let mut starts: Vec<(usize, usize)> = next.keys().copied().collect();
        starts.sort();
        let mut loops = Vec::new();
        for s in starts {
            while next.get(&s).is_some_and(|v| !v.is_empty()) {
                let mut ring = vec![s];
                let mut cur = s;
                loop {
                    let Some(n) = next.get_mut(&cur).and_then(|v| v.pop()) else { break };
                    cur = n;
                    if cur == s {
                        break;
                    }
                    ring.push(cur);
                }
                ring.push(s);
                loops.push(ring.into_iter().map(|(i, j)| (self.edge_x(i), self.edge_y(j))).collect());
            }
        }
        loops
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swimmer::{bundled, decompose};

    #[test]
    fn point_labels() {
        let a = decompose(&bundled("A").unwrap()).unwrap();
        assert_eq!(regime_of(&a, 0.015, 0.01).unwrap().label(), "2/8");
        assert_eq!(regime_of(&a, 0.04, 0.0).unwrap().label(), "0/0");
        let b = decompose(&bundled("B").unwrap()).unwrap();
        assert_eq!(regime_of(&b, 0.2198, -0.3989).unwrap().label(), "2/4");
    }

    #[test]
    fn regions_cover_grid() {
        let b = decompose(&bundled("B").unwrap()).unwrap();
        let d = regime_diagram(&b, (0.0, 1.0), (-1.0, 1.0), 30, 30).unwrap();
        let regions = d.regions();
        assert_eq!(regions.iter().map(|r| r.cells).sum::<usize>(), 900);
        assert!(regions.iter().all(|r| !r.polygons.is_empty()));
        for r in &regions {
            for p in &r.polygons {
                assert_eq!(p.first(), p.last());
            }
        }
    }
}
