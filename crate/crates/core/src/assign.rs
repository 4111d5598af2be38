//! Linear assignment and the hard-assignment baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gausscore::{empirical_moments, Formation, Permutation, Point};
use crate::trackio::NormalizedFrame;

/// Reusable O(d³) Hungarian solver for square cost matrices.
///
/// Among all minimum-cost matchings the one with the lexicographically
/// smallest row-to-column map is returned.
#[derive(Clone, Debug, Default)]
pub struct Hungarian {
    u: Vec<f64>,
    v: Vec<f64>,
    p: Vec<usize>,
    way: Vec<usize>,
    minv: Vec<f64>,
    used: Vec<bool>,
    assignment: Vec<usize>,
    tight: Vec<bool>,
    kuhn_match: Vec<usize>,
    kuhn_seen: Vec<bool>,
}

const NONE: usize = usize::MAX;

impl Hungarian {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solve for the row-major `n × n` matrix `c`. Returns `col[row]`.
    pub fn solve(&mut self, c: &[f64], n: usize) -> &[usize] {
        assert_eq!(c.len(), n * n, "cost matrix must be square");
        self.u.clear();
        self.u.resize(n + 1, 0.0);
        self.v.clear();
        self.v.resize(n + 1, 0.0);
        self.p.clear();
        self.p.resize(n + 1, 0);
        self.way.clear();
        self.way.resize(n + 1, 0);
        for i in 1..=n {
            self.p[0] = i;
            let mut j0 = 0;
            self.minv.clear();
            self.minv.resize(n + 1, f64::INFINITY);
            self.used.clear();
            self.used.resize(n + 1, false);
            loop {
                self.used[j0] = true;
                let i0 = self.p[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0;
                for j in 1..=n {
                    if !self.used[j] {
                        let cur = c[(i0 - 1) * n + j - 1] - self.u[i0] - self.v[j];
                        if cur < self.minv[j] {
                            self.minv[j] = cur;
                            self.way[j] = j0;
                        }
                        if self.minv[j] < delta {
                            delta = self.minv[j];
                            j1 = j;
                        }
                    }
                }
                for j in 0..=n {
                    if self.used[j] {
                        self.u[self.p[j]] += delta;
                        self.v[j] -= delta;
                    } else {
                        self.minv[j] -= delta;
                    }
                }
                j0 = j1;
                if self.p[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = self.way[j0];
                self.p[j0] = self.p[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }
        self.assignment.clear();
        self.assignment.resize(n, 0);
        for j in 1..=n {
            self.assignment[self.p[j] - 1] = j - 1;
        }
        self.lexicographic_min(c, n);
        &self.assignment
    }

    /// Every optimal matching lives in the equality subgraph of the optimal
    /// dual; pick its lexicographically smallest perfect matching greedily.
    fn lexicographic_min(&mut self, c: &[f64], n: usize) {
        let scale = c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let eps = 1e-9 * scale;
        self.tight.clear();
        self.tight.extend((0..n * n).map(|idx| {
            let (i, j) = (idx / n, idx % n);
            c[idx] - self.u[i + 1] - self.v[j + 1] <= eps
        }));
        for i in 0..n {
            let current = self.assignment[i];
            for j in 0..current {
                if !self.tight[i * n + j] || self.assignment[..i].contains(&j) {
                    continue;
                }
                if self.complete_with(i, j, n) {
                    break;
                }
            }
        }
    }

    /// Try to fix rows `..i` as assigned plus `i → j` and match the remaining
    /// rows on tight edges. On success the assignment is updated.
    fn complete_with(&mut self, i: usize, j: usize, n: usize) -> bool {
        self.kuhn_match.clear();
        self.kuhn_match.resize(n, NONE);
        for r in 0..i {
            self.kuhn_match[self.assignment[r]] = r;
        }
        self.kuhn_match[j] = i;
        for r in i + 1..n {
            self.kuhn_seen.clear();
            self.kuhn_seen.resize(n, false);
            if !self.augment(r, i, n) {
                return false;
            }
        }
        for (col, &row) in self.kuhn_match.iter().enumerate() {
            self.assignment[row] = col;
        }
        true
    }

    fn augment(&mut self, r: usize, frozen: usize, n: usize) -> bool {
        for col in 0..n {
            if !self.tight[r * n + col] || self.kuhn_seen[col] {
                continue;
            }
            self.kuhn_seen[col] = true;
            let owner = self.kuhn_match[col];
            if owner == NONE || (owner > frozen && self.augment(owner, frozen, n)) {
                self.kuhn_match[col] = r;
                return true;
            }
        }
        false
    }
}

/// Minimum-cost perfect matching of rows (players) to columns (roles).
pub fn hungarian(c: &[Vec<f64>]) -> Permutation {
    let n = c.len();
    let flat: Vec<f64> = c
        .iter()
        .flat_map(|row| {
            assert_eq!(row.len(), n, "cost matrix must be square");
            row.iter().copied()
        })
        .collect();
    let map = Hungarian::new().solve(&flat, n).to_vec();
    Permutation::new(map).expect("matching is a bijection")
}

/// Total cost of an assignment.
pub fn assignment_cost(c: &[Vec<f64>], q: &Permutation) -> f64 {
    q.map().iter().enumerate().map(|(l, &k)| c[l][k]).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for HardOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardFit {
    pub formation: Formation,
    /// Mean assigned log-likelihood per frame after each assignment step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn assign_frames(frames: &[NormalizedFrame], f: &Formation) -> Result<(Vec<Permutation>, f64)> {
    let prepared = f.prepare()?;
    let d = f.d();
    let results: Vec<(Permutation, f64)> = frames
        .par_iter()
        .map_init(
            || (Hungarian::new(), Vec::with_capacity(d * d)),
            |(solver, table), frame| {
                prepared.log_density_table(&frame.y, table);
                let cost: Vec<f64> = table.iter().map(|v| -v).collect();
                let map = solver.solve(&cost, d).to_vec();
                let ll: f64 = map.iter().enumerate().map(|(l, &k)| table[l * d + k]).sum();
                (Permutation::new(map).expect("bijection"), ll)
            },
        )
        .collect();
    let total: f64 = results.iter().map(|r| r.1).sum();
    let perms = results.into_iter().map(|r| r.0).collect();
    Ok((perms, total / frames.len() as f64))
}

fn moments_from_assignment(frames: &[NormalizedFrame], perms: &[Permutation]) -> Formation {
    let d = frames[0].d();
    let mut by_role: Vec<Vec<Point>> = vec![Vec::with_capacity(frames.len()); d];
    for (f, q) in frames.iter().zip(perms) {
        for (l, &k) in q.map().iter().enumerate() {
            by_role[k].push(f.y[l]);
        }
    }
    Formation::new(
        by_role
            .iter()
            .map(|pts| empirical_moments(pts.iter()).expect("perfect matching fills every role"))
            .collect(),
    )
}

/// Baseline that commits every frame to its single most likely player-role
/// matching, then re-estimates role moments from the matched points.
pub fn fit_hard_assignment(frames: &[NormalizedFrame], opts: &HardOptions) -> Result<HardFit> {
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = frames[0].d();
    if frames.iter().any(|f| f.d() != d) {
        return Err(Error::ContractViolation("frames differ in player count".into()));
    }
    let identity = vec![Permutation::identity(d); frames.len()];
    let mut formation = moments_from_assignment(frames, &identity);
    let mut trace = Vec::new();
    let mut previous: Option<Vec<Permutation>> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (perms, objective) = assign_frames(frames, &formation)?;
        iterations += 1;
        let unchanged = previous.as_ref() == Some(&perms);
        let small_step = trace.last().is_some_and(|&p: &f64| (objective - p).abs() < opts.tol);
        trace.push(objective);
        formation = moments_from_assignment(frames, &perms);
        if unchanged || small_step {
            converged = true;
            break;
        }
        previous = Some(perms);
    }
    Ok(HardFit {
        formation,
        objective_trace: trace,
        iterations,
        converged,
    })
}
