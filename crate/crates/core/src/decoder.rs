//! Maximum spanning arborescence decoding.
//!
//! [`chu_liu_edmonds`] returns the highest-scoring dependency tree with exactly
//! one word attached to the root. [`brute_force_mst`] enumerates every tree and
//! serves as the test oracle; [`greedy_heads`] is the per-word argmax baseline.

use serde::{Deserialize, Serialize};

use crate::conllu::validate_tree;
use crate::numeric::Real;

/// Largest sentence the exhaustive oracle accepts.
pub const BRUTE_FORCE_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("cannot decode an empty sentence")]
    Empty,
    #[error("exhaustive search limited to {BRUTE_FORCE_MAX} words, got {0}")]
    TooLarge(usize),
    #[error("score matrix must be {expected}x{expected}, got {found} entries")]
    BadShape { expected: usize, found: usize },
    #[error("no spanning tree has finite score")]
    NoTree,
}

/// Arc scores for a sentence of `n` words plus ROOT at index 0.
///
/// `score(h, d)` scores head `h` taking dependent `d`. Column 0 (ROOT as a
/// dependent) and the diagonal are masked to `-inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    n: usize,
    scores: Vec<Real>,
}

impl ScoreMatrix {
    /// Wraps a row-major `(n+1)×(n+1)` matrix and applies the masks.
    pub fn new(n: usize, mut scores: Vec<Real>) -> Result<Self, DecodeError> {
        let m = n + 1;
        if scores.len() != m * m {
            return Err(DecodeError::BadShape {
                expected: m,
                found: scores.len(),
            });
        }
        for i in 0..m {
            scores[i * m] = Real::NEG_INFINITY;
            scores[i * m + i] = Real::NEG_INFINITY;
        }
        Ok(ScoreMatrix { n, scores })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Real) -> Self {
        let m = n + 1;
        let scores = (0..m * m).map(|i| f(i / m, i % m)).collect();
        ScoreMatrix::new(n, scores).expect("shape is consistent by construction")
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn score(&self, head: usize, dep: usize) -> Real {
        self.scores[head * (self.n + 1) + dep]
    }

    pub fn scores(&self) -> &[Real] {
        &self.scores
    }

    /// Sum of arc scores of a head assignment.
    pub fn total(&self, heads: &[usize]) -> Real {
        heads.iter().enumerate().map(|(i, &h)| self.score(h, i + 1)).sum()
    }

    fn dense(&self) -> Vec<Vec<Real>> {
        let m = self.n + 1;
        (0..m).map(|h| self.scores[h * m..(h + 1) * m].to_vec()).collect()
    }
}

/// `heads[i]` is the head of word `i + 1`; 0 is ROOT.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeadVector(pub Vec<usize>);

impl HeadVector {
    pub fn heads(&self) -> &[usize] {
        &self.0
    }

    pub fn is_tree(&self) -> bool {
        validate_tree(&self.0).is_ok()
    }
}

/// Best single-root arborescence (lowest head index wins ties).
pub fn chu_liu_edmonds(m: &ScoreMatrix) -> Result<HeadVector, DecodeError> {
    let n = m.len();
    if n == 0 {
        return Err(DecodeError::Empty);
    }
    let dense = m.dense();
    let free = arborescence(&dense);
    if free[1..].iter().filter(|&&h| h == 0).count() == 1 && m.total(&free[1..]).is_finite() {
        return Ok(HeadVector(free[1..].to_vec()));
    }
    // Several words picked ROOT: solve once per candidate root word.
    let mut best: Option<(Real, Vec<usize>)> = None;
    for r in 1..=n {
        let mut s = dense.clone();
        for (d, v) in s[0].iter_mut().enumerate() {
            if d != r {
                *v = Real::NEG_INFINITY;
            }
        }
        let heads = arborescence(&s);
        let total = m.total(&heads[1..]);
        if !total.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, heads[1..].to_vec()));
        }
    }
    best.map(|(_, h)| HeadVector(h)).ok_or(DecodeError::NoTree)
}

/// Unconstrained maximum arborescence rooted at node 0 of a dense matrix.
/// Returns parents for every node; entry 0 is meaningless.
fn arborescence(s: &[Vec<Real>]) -> Vec<usize> {
    let m = s.len();
    let mut best = vec![0usize; m];
    for v in 1..m {
        let mut arg = usize::MAX;
        let mut val = Real::NEG_INFINITY;
        for (u, row) in s.iter().enumerate() {
            if u != v && (arg == usize::MAX || row[v] > val) {
                arg = u;
                val = row[v];
            }
        }
        best[v] = arg;
    }
    let Some(cycle) = find_cycle(&best) else {
        return best;
    };

    let mut in_cycle = vec![false; m];
    for &c in &cycle {
        in_cycle[c] = true;
    }
    // The contracted node takes the slot of the smallest cycle member.
    let rep = *cycle.iter().min().expect("cycle is non-empty");
    let mut new_index = vec![0usize; m];
    let mut old_of_new = Vec::new();
    for v in 0..m {
        if !in_cycle[v] || v == rep {
            new_index[v] = old_of_new.len();
            old_of_new.push(v);
        }
    }
    for &c in &cycle {
        new_index[c] = new_index[rep];
    }
    let c_new = new_index[rep];
    let k = old_of_new.len();

    let mut t = vec![vec![Real::NEG_INFINITY; k]; k];
    // which cycle member an arc into the cycle enters / leaves from
    let mut enter = vec![usize::MAX; k];
    let mut leave = vec![usize::MAX; k];
    for u in 0..m {
        for v in 0..m {
            if u == v || (in_cycle[u] && in_cycle[v]) {
                continue;
            }
            let (nu, nv) = (new_index[u], new_index[v]);
            if in_cycle[v] {
                let w = s[u][v];
                let adj = if w == Real::NEG_INFINITY { w } else { w - s[best[v]][v] };
                if enter[nu] == usize::MAX || adj > t[nu][nv] {
                    t[nu][nv] = adj;
                    enter[nu] = v;
                }
            } else if in_cycle[u] {
                if leave[nv] == usize::MAX || s[u][v] > t[nu][nv] {
                    t[nu][nv] = s[u][v];
                    leave[nv] = u;
                }
            } else {
                t[nu][nv] = s[u][v];
            }
        }
    }

    let sub = arborescence(&t);
    let mut parents = best.clone();
    for nv in 1..k {
        let nu = sub[nv];
        if nv == c_new {
            let entry = enter[nu];
            parents[entry] = old_of_new[nu];
        } else {
            let v = old_of_new[nv];
            parents[v] = if nu == c_new { leave[nv] } else { old_of_new[nu] };
        }
    }
    parents
}

/// Any cycle in a parent array (node 0 is the root and has no parent).
fn find_cycle(parent: &[usize]) -> Option<Vec<usize>> {
    let m = parent.len();
    let mut color = vec![0u8; m];
    color[0] = 2;
    for start in 1..m {
        let mut path = Vec::new();
        let mut v = start;
        while color[v] == 0 {
            color[v] = 1;
            path.push(v);
            v = parent[v];
        }
        if color[v] == 1 {
            let pos = path.iter().position(|&p| p == v).expect("v is on the path");
            return Some(path[pos..].to_vec());
        }
        for p in path {
            color[p] = 2;
        }
    }
    None
}

/// Exhaustive search over all head vectors; lexicographically first optimum wins.
pub fn brute_force_mst(m: &ScoreMatrix) -> Result<HeadVector, DecodeError> {
    let n = m.len();
    if n == 0 {
        return Err(DecodeError::Empty);
    }
    if n > BRUTE_FORCE_MAX {
        return Err(DecodeError::TooLarge(n));
    }
    let mut heads = vec![usize::MAX; n];
    let mut best: Option<(Real, Vec<usize>)> = None;
    search(m, 0, 0, 0.0, &mut heads, &mut best);
    best.map(|(_, h)| HeadVector(h)).ok_or(DecodeError::NoTree)
}

fn search(m: &ScoreMatrix, d: usize, roots: usize, acc: Real, heads: &mut [usize], best: &mut Option<(Real, Vec<usize>)>) {
    let n = heads.len();
    if d == n {
        if roots == 1 && acc.is_finite() && best.as_ref().is_none_or(|(b, _)| acc > *b) {
            *best = Some((acc, heads.to_vec()));
        }
        return;
    }
    for h in 0..=n {
        if h == d + 1 || (h == 0 && roots == 1) {
            continue;
        }
        // walk up from h through already-assigned words; reaching d+1 closes a cycle
        let mut v = h;
        let mut cyclic = false;
        while v != 0 && heads[v - 1] != usize::MAX {
            v = heads[v - 1];
            if v == d + 1 {
                cyclic = true;
                break;
            }
        }
        if cyclic {
            continue;
        }
        heads[d] = h;
        search(m, d + 1, roots + usize::from(h == 0), acc + m.score(h, d + 1), heads, best);
        heads[d] = usize::MAX;
    }
}

/// Per-word argmax head, flagged with whether the result is a valid tree.
pub fn greedy_heads(m: &ScoreMatrix) -> Result<(HeadVector, bool), DecodeError> {
    let n = m.len();
    if n == 0 {
        return Err(DecodeError::Empty);
    }
    let heads: Vec<usize> = (1..=n)
        .map(|d| {
            let mut arg = 0;
            for h in 1..=n {
                if m.score(h, d) > m.score(arg, d) {
                    arg = h;
                }
            }
            arg
        })
        .collect();
    let hv = HeadVector(heads);
    let ok = hv.is_tree();
    Ok((hv, ok))
}
