//! Potts-model label assignment over the face adjacency graph.
//!
//! Energy: `E = sum_f -s(l_f, f) + lambda * sum_{(f,g)} [l_f != l_g]` where
//! `s` is the per-face normalized candidate score. Small connected
//! components are solved by enumeration, larger ones by alpha-expansion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::candidates::ViewCandidateTable;
use super::maxflow::FlowGraph;
use crate::mesh::TriMesh;

/// Label of faces that no image can texture.
pub const UNTEXTURED: u32 = u32::MAX;

/// Largest component state space solved by enumeration.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub labels: Vec<u32>,
}

impl LabelAssignment {
    pub fn num_untextured(&self) -> usize {
        self.labels.iter().filter(|&&l| l == UNTEXTURED).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub lambda: f64,
    pub exhaustive_limit: u64,
    /// Maximum number of full expansion sweeps.
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            lambda: 1.0,
            exhaustive_limit: EXHAUSTIVE_LIMIT,
            max_sweeps: 20,
        }
    }
}

/// Unary/pairwise problem in solver form.
#[derive(Clone, Debug)]
pub struct MrfProblem {
    /// Per face: allowed labels with their unary cost, sorted by label.
    pub unary: Vec<Vec<(u32, f64)>>,
    pub edges: Vec<(u32, u32)>,
    pub lambda: f64,
}

impl MrfProblem {
    pub fn from_table(table: &ViewCandidateTable, mesh: &TriMesh, lambda: f64) -> Self {
        MrfProblem {
            unary: (0..table.num_faces())
                .map(|f| table.normalized(f).into_iter().map(|(l, s)| (l, -s)).collect())
                .collect(),
            edges: mesh.face_adjacency(),
            lambda,
        }
    }

    fn cost(&self, f: usize, l: u32) -> Option<f64> {
        if l == UNTEXTURED {
            return self.unary[f].is_empty().then_some(0.0);
        }
        self.unary[f]
            .binary_search_by_key(&l, |e| e.0)
            .ok()
            .map(|i| self.unary[f][i].1)
    }

    /// Total energy; infinite if a face takes a label it may not use.
    pub fn energy(&self, labels: &[u32]) -> f64 {
        let mut e = 0.0;
        for (f, &l) in labels.iter().enumerate() {
            match self.cost(f, l) {
                Some(c) => e += c,
                None => return f64::INFINITY,
            }
        }
        for &(f, g) in &self.edges {
            if labels[f as usize] != labels[g as usize] {
                e += self.lambda;
            }
        }
        e
    }

    /// Independent per-face argmax (ties to the lowest label).
    pub fn argmax_labels(&self) -> Vec<u32> {
        self.unary
            .iter()
            .map(|u| {
                let mut best = UNTEXTURED;
                let mut bc = f64::INFINITY;
                for &(l, c) in u {
                    if c < bc {
                        bc = c;
                        best = l;
                    }
                }
                best
            })
            .collect()
    }
}

/// Solves the assignment for `mesh` from its candidate table.
pub fn solve_labels(table: &ViewCandidateTable, mesh: &TriMesh, lambda: f64) -> LabelAssignment {
    let problem = MrfProblem::from_table(table, mesh, lambda);
    solve(&problem, None, &SolverOptions { lambda, ..Default::default() })
}

/// Solves `problem`, starting from `warm` labels when given.
pub fn solve(problem: &MrfProblem, warm: Option<&[u32]>, opts: &SolverOptions) -> LabelAssignment {
    let n = problem.unary.len();
    let init: Vec<u32> = match warm {
        Some(w) => w
            .iter()
            .enumerate()
            .map(|(f, &l)| if problem.cost(f, l).is_some() { l } else { problem.argmax_labels_one(f) })
            .collect(),
        None => problem.argmax_labels(),
    };
    let comps = components(problem, n);
    let solved: Vec<Vec<(usize, u32)>> = comps
        .par_iter()
        .map(|comp| solve_component(problem, comp, &init, opts))
        .collect();
    let mut labels = init;
    for part in solved {
        for (f, l) in part {
            labels[f] = l;
        }
    }
    LabelAssignment { labels }
}

impl MrfProblem {
    fn argmax_labels_one(&self, f: usize) -> u32 {
        let mut best = UNTEXTURED;
        let mut bc = f64::INFINITY;
        for &(l, c) in &self.unary[f] {
            if c < bc {
                bc = c;
                best = l;
            }
        }
        best
    }
}

/// Connected components among faces that have candidates.
fn components(p: &MrfProblem, n: usize) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for &(f, g) in &p.edges {
        let (f, g) = (f as usize, g as usize);
        if p.unary[f].is_empty() || p.unary[g].is_empty() {
            continue;
        }
        let (a, b) = (find(&mut parent, f), find(&mut parent, g));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for f in 0..n {
        if !p.unary[f].is_empty() {
            let r = find(&mut parent, f);
            groups.entry(r).or_default().push(f);
        }
    }
    groups.into_values().collect()
}

/// Local view of one component: faces, local edges and fixed-neighbor terms.
struct Local<'a> {
    p: &'a MrfProblem,
    faces: &'a [usize],
    edges: Vec<(usize, usize)>,
}

impl Local<'_> {
    fn energy(&self, labels: &[u32]) -> f64 {
        let mut e = 0.0;
        for (i, &f) in self.faces.iter().enumerate() {
            e += self.p.cost(f, labels[i]).unwrap_or(f64::INFINITY);
        }
        for &(a, b) in &self.edges {
            if labels[a] != labels[b] {
                e += self.p.lambda;
            }
        }
        e
    }
}

fn solve_component(p: &MrfProblem, faces: &[usize], init: &[u32], opts: &SolverOptions) -> Vec<(usize, u32)> {
    let index: std::collections::HashMap<usize, usize> = faces.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let edges: Vec<(usize, usize)> = p
        .edges
        .iter()
        .filter_map(|&(f, g)| Some((*index.get(&(f as usize))?, *index.get(&(g as usize))?)))
        .collect();
    let local = Local { p, faces, edges };
    let mut labels: Vec<u32> = faces.iter().map(|&f| init[f]).collect();

    let states = faces
        .iter()
        .try_fold(1u64, |acc, &f| acc.checked_mul(p.unary[f].len() as u64))
        .unwrap_or(u64::MAX);
    if states <= opts.exhaustive_limit {
        labels = enumerate(&local);
    } else {
        expansion(&local, &mut labels, opts.max_sweeps);
    }
    faces.iter().copied().zip(labels).collect()
}

/// Exact minimum by enumerating every label vector (first minimum wins).
fn enumerate(local: &Local) -> Vec<u32> {
    let opts: Vec<&[(u32, f64)]> = local.faces.iter().map(|&f| local.p.unary[f].as_slice()).collect();
    let n = opts.len();
    let mut idx = vec![0usize; n];
    let mut labels: Vec<u32> = opts.iter().map(|o| o[0].0).collect();
    let mut best = labels.clone();
    let mut best_e = local.energy(&labels);
    loop {
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < opts[k].len() {
                labels[k] = opts[k][idx[k]].0;
                break;
            }
            idx[k] = 0;
            labels[k] = opts[k][0].0;
            k += 1;
        }
        if k == n {
            return best;
        }
        let e = local.energy(&labels);
        if e < best_e {
            best_e = e;
            best = labels.clone();
        }
    }
}

/// Alpha-expansion with graph cuts; only strict improvements are kept.
fn expansion(local: &Local, labels: &mut [u32], max_sweeps: usize) {
    let mut alphabet: Vec<u32> = local
        .faces
        .iter()
        .flat_map(|&f| local.p.unary[f].iter().map(|e| e.0))
        .collect();
    alphabet.sort_unstable();
    alphabet.dedup();
    let mut energy = local.energy(labels);
    for _ in 0..max_sweeps {
        let mut improved = false;
        for &alpha in &alphabet {
            if let Some(cand) = expand(local, labels, alpha) {
                let e = local.energy(&cand);
                if e < energy {
                    energy = e;
                    labels.copy_from_slice(&cand);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// One alpha-expansion move via a minimum cut. Node in the source side
/// keeps its label; sink side switches to `alpha`.
fn expand(local: &Local, labels: &[u32], alpha: u32) -> Option<Vec<u32>> {
    let n = local.faces.len();
    let lambda = local.p.lambda;
    let can: Vec<bool> = local
        .faces
        .iter()
        .enumerate()
        .map(|(i, &f)| labels[i] != alpha && local.p.cost(f, alpha).is_some())
        .collect();
    if !can.iter().any(|&c| c) {
        return None;
    }
    let (s, t) = (n, n + 1);
    let mut g = FlowGraph::new(n + 2);
    // Unary costs for x = 0 (keep) and x = 1 (switch).
    let mut e0 = vec![0.0; n];
    let mut e1 = vec![0.0; n];
    for (i, &f) in local.faces.iter().enumerate() {
        if can[i] {
            e0[i] = local.p.cost(f, labels[i]).unwrap();
            e1[i] = local.p.cost(f, alpha).unwrap();
        }
    }
    let v = |a: u32, b: u32| if a == b { 0.0 } else { lambda };
    for &(a, b) in &local.edges {
        match (can[a], can[b]) {
            (true, true) => {
                let (la, lb) = (labels[a], labels[b]);
                let (c00, c01, c10, c11) = (v(la, lb), v(la, alpha), v(alpha, lb), 0.0);
                e1[a] += c10 - c00;
                e1[b] += c11 - c10;
                let w = c01 + c10 - c00 - c11;
                if w > 0.0 {
                    g.add_edge(a, b, w, 0.0);
                }
            }
            (true, false) => {
                e0[a] += v(labels[a], labels[b]);
                e1[a] += v(alpha, labels[b]);
            }
            (false, true) => {
                e0[b] += v(labels[b], labels[a]);
                e1[b] += v(alpha, labels[a]);
            }
            (false, false) => {}
        }
    }
    for i in 0..n {
        if !can[i] {
            continue;
        }
        let d = e1[i] - e0[i];
        if d > 0.0 {
            g.add_edge(s, i, d, 0.0);
        } else if d < 0.0 {
            g.add_edge(i, t, -d, 0.0);
        }
    }
    g.max_flow(s, t);
    let side = g.source_side(s);
    Some(
        (0..n)
            .map(|i| if can[i] && !side[i] { alpha } else { labels[i] })
            .collect(),
    )
}

/// Expansion solver without the enumeration shortcut, for testing move
/// quality on small instances.
pub fn solve_expansion_only(problem: &MrfProblem, warm: Option<&[u32]>) -> LabelAssignment {
    solve(
        problem,
        warm,
        &SolverOptions {
            lambda: problem.lambda,
            exhaustive_limit: 0,
            max_sweeps: 100,
        },
    )
}
