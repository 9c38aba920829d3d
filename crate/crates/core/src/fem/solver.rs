//! Sparse `L D L^T` factorization for symmetric indefinite systems.
//!
//! The matrix is reordered with approximate minimum degree and the
//! elimination tree is postordered. Columns with nested structure are
//! grouped into supernodes and factored with the multifrontal method: each
//! supernode assembles a dense frontal matrix from the original entries and
//! its children's update matrices, eliminates its own columns, and passes
//! the Schur complement up the tree.
//!
//! There is no pivoting. Helmholtz operators `K - omega^2 M` away from
//! resonance factor stably this way; a pivot below [`PIVOT_TOLERANCE`]
//! times the largest entry is reported as [`Error::SingularMatrix`]. Each
//! solve is followed by a few steps of iterative refinement.

use crate::error::{Error, Result};
use crate::fem::sparse::{norm2, SparseSystem, SymmetricMatrix};

/// Pivots below this fraction of the largest matrix entry count as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-12;
/// Accepted relative residual `||Ax - b|| / ||b||` of a solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
const REFINEMENT_TARGET: f64 = 1e-14;
const MAX_REFINEMENT_STEPS: usize = 4;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Supernode {
    first: usize,
    ncols: usize,
    /// Row indices of the panel; the first `ncols` are the supernode's own columns.
    rows: Vec<u32>,
    /// `rows.len() x ncols`, column major; strictly lower part holds `L`.
    panel: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LdlFactorization {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    supernodes: Vec<Supernode>,
    d: Vec<f64>,
    negative_pivots: usize,
}

/// Solution of a linear system with its final relative residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    /// `||Ax - b|| / ||b||`
    pub residual: f64,
    /// Componentwise backward error `max_i |Ax - b|_i / (|A||x| + |b|)_i`.
    pub backward_error: f64,
    pub refinement_steps: usize,
}

fn amd_permutation(a: &SymmetricMatrix) -> Result<Vec<usize>> {
    let control = amd::Control::default();
    let (perm, _, _) = amd::order::<usize>(a.dimension(), a.col_ptr(), a.row_idx(), &control)
        .map_err(|status| Error::FactorizationFailure(format!("AMD ordering: {status:?}")))?;
    Ok(perm)
}

/// Upper triangle of `P A P^T`, where row/column `old` moves to `iperm[old]`.
struct Upper {
    cp: Vec<usize>,
    ci: Vec<usize>,
    cx: Vec<f64>,
}

fn permute_upper(a: &SymmetricMatrix, iperm: &[usize]) -> Upper {
    let n = a.dimension();
    let (ap, ai, ax) = (a.col_ptr(), a.row_idx(), a.values());
    let mut cp = vec![0usize; n + 1];
    for j in 0..n {
        for &i in &ai[ap[j]..ap[j + 1]] {
            cp[iperm[i].max(iperm[j]) + 1] += 1;
        }
    }
    for j in 0..n {
        cp[j + 1] += cp[j];
    }
    let mut next = cp.clone();
    let mut ci = vec![0usize; ax.len()];
    let mut cx = vec![0.0; ax.len()];
    for j in 0..n {
        for p in ap[j]..ap[j + 1] {
            let (ni, nj) = (iperm[ai[p]], iperm[j]);
            let (r, c) = if ni <= nj { (ni, nj) } else { (nj, ni) };
            let q = next[c];
            ci[q] = r;
            cx[q] = ax[p];
            next[c] += 1;
        }
    }
    Upper { cp, ci, cx }
}

/// Elimination tree and strictly-lower column counts of `L`.
fn etree_and_counts(u: &Upper, n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut parent = vec![NONE; n];
    let mut counts = vec![0usize; n];
    let mut flag = vec![NONE; n];
    for j in 0..n {
        flag[j] = j;
        for &row in &u.ci[u.cp[j]..u.cp[j + 1]] {
            let mut i = row;
            while flag[i] != j {
                if parent[i] == NONE {
                    parent[i] = j;
                }
                counts[i] += 1;
                flag[i] = j;
                i = parent[i];
            }
        }
    }
    (parent, counts)
}

/// Postorder of a forest given by parent pointers.
fn postorder(parent: &[usize]) -> Vec<usize> {
    let n = parent.len();
    let mut head = vec![NONE; n];
    let mut next = vec![NONE; n];
    for j in (0..n).rev() {
        if parent[j] != NONE {
            next[j] = head[parent[j]];
            head[parent[j]] = j;
        }
    }
    let mut post = Vec::with_capacity(n);
    let mut stack = Vec::new();
    for root in 0..n {
        if parent[root] != NONE {
            continue;
        }
        stack.push(root);
        while let Some(&top) = stack.last() {
            let child = head[top];
            if child == NONE {
                stack.pop();
                post.push(top);
            } else {
                head[top] = next[child];
                stack.push(child);
            }
        }
    }
    post
}

/// Pending Schur complement of a factored supernode.
struct Update {
    rows: Vec<u32>,
    /// `rows.len()^2`, column major, lower part meaningful.
    data: Vec<f64>,
}

impl LdlFactorization {
    pub fn new(a: &SymmetricMatrix) -> Result<Self> {
        let n = a.dimension();
        if n >= u32::MAX as usize {
            return Err(Error::FactorizationFailure(
                "dimension exceeds u32 range".into(),
            ));
        }
        if n == 0 {
            return Ok(LdlFactorization {
                n,
                perm: Vec::new(),
                supernodes: Vec::new(),
                d: Vec::new(),
                negative_pivots: 0,
            });
        }

        // fill-reducing order, then postorder its elimination tree
        let amd = amd_permutation(a)?;
        let mut iperm = vec![0usize; n];
        for (new, &old) in amd.iter().enumerate() {
            iperm[old] = new;
        }
        let first = permute_upper(a, &iperm);
        let (parent0, _) = etree_and_counts(&first, n);
        drop(first);
        let post = postorder(&parent0);
        let perm: Vec<usize> = post.iter().map(|&j| amd[j]).collect();
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let upper = permute_upper(a, &iperm);
        let (parent, counts) = etree_and_counts(&upper, n);

        // lower triangle by columns: column j lists rows i >= j
        let mut lp = vec![0usize; n + 1];
        for &i in &upper.ci {
            lp[i + 1] += 1;
        }
        for j in 0..n {
            lp[j + 1] += lp[j];
        }
        let mut li = vec![0usize; upper.ci.len()];
        let mut lx = vec![0.0; upper.ci.len()];
        {
            let mut next = lp.clone();
            for j in 0..n {
                for p in upper.cp[j]..upper.cp[j + 1] {
                    let i = upper.ci[p];
                    li[next[i]] = j;
                    lx[next[i]] = upper.cx[p];
                    next[i] += 1;
                }
            }
        }
        drop(upper);

        // supernodes: runs j, j+1, ... with parent(j) = j+1 and nested structure
        let mut starts = vec![0usize];
        for j in 0..n - 1 {
            if !(parent[j] == j + 1 && counts[j] == counts[j + 1] + 1) {
                starts.push(j + 1);
            }
        }
        starts.push(n);
        let nsuper = starts.len() - 1;
        let mut super_of = vec![0usize; n];
        for s in 0..nsuper {
            for slot in &mut super_of[starts[s]..starts[s + 1]] {
                *slot = s;
            }
        }
        let mut child_count = vec![0usize; nsuper];
        for s in 0..nsuper {
            let last = starts[s + 1] - 1;
            if parent[last] != NONE {
                child_count[super_of[parent[last]]] += 1;
            }
        }

        let scale = a.max_abs();
        let tiny = PIVOT_TOLERANCE * scale;
        let mut d = vec![0.0; n];
        let mut negative_pivots = 0;
        let mut relpos = vec![u32::MAX; n];
        let mut stack: Vec<Update> = Vec::new();
        let mut supernodes = Vec::with_capacity(nsuper);

        for s in 0..nsuper {
            let f = starts[s];
            let k = starts[s + 1] - f;
            let children = stack.split_off(stack.len() - child_count[s]);

            // row pattern
            let mut rows: Vec<u32> = (f..f + k).map(|j| j as u32).collect();
            for j in f..f + k {
                relpos[j] = 0;
            }
            let mut extra = Vec::new();
            let mark = |i: usize, extra: &mut Vec<u32>, relpos: &mut Vec<u32>| {
                if relpos[i] == u32::MAX {
                    relpos[i] = 0;
                    extra.push(i as u32);
                }
            };
            for j in f..f + k {
                for &i in &li[lp[j]..lp[j + 1]] {
                    mark(i, &mut extra, &mut relpos);
                }
            }
            for child in &children {
                for &i in &child.rows {
                    mark(i as usize, &mut extra, &mut relpos);
                }
            }
            extra.sort_unstable();
            rows.extend_from_slice(&extra);
            let m = rows.len();
            debug_assert_eq!(m, counts[f] + 1);
            for (pos, &r) in rows.iter().enumerate() {
                relpos[r as usize] = pos as u32;
            }

            // frontal matrix
            let mut front = vec![0.0; m * m];
            for j in f..f + k {
                let col = relpos[j] as usize * m;
                for p in lp[j]..lp[j + 1] {
                    front[col + relpos[li[p]] as usize] += lx[p];
                }
            }
            for child in children {
                let mc = child.rows.len();
                let pos: Vec<usize> = child
                    .rows
                    .iter()
                    .map(|&r| relpos[r as usize] as usize)
                    .collect();
                for cj in 0..mc {
                    let dst = pos[cj] * m;
                    let src = &child.data[cj * mc..(cj + 1) * mc];
                    for ci in cj..mc {
                        front[dst + pos[ci]] += src[ci];
                    }
                }
            }

            // eliminate the supernode's own columns (left looking inside the panel)
            for j in 0..k {
                for p in 0..j {
                    let w = front[p * m + j] * d[f + p];
                    if w == 0.0 {
                        continue;
                    }
                    let (done, rest) = front.split_at_mut(j * m);
                    let src = &done[p * m + j..p * m + m];
                    let dst = &mut rest[j..m];
                    for (x, l) in dst.iter_mut().zip(src) {
                        *x -= l * w;
                    }
                }
                let pivot = front[j * m + j];
                if !pivot.is_finite() || pivot.abs() <= tiny {
                    return Err(Error::SingularMatrix {
                        index: perm[f + j],
                        pivot,
                    });
                }
                if pivot < 0.0 {
                    negative_pivots += 1;
                }
                d[f + j] = pivot;
                let inv = 1.0 / pivot;
                for x in &mut front[j * m + j + 1..j * m + m] {
                    *x *= inv;
                }
            }

            // Schur complement of the trailing block
            let mu = m - k;
            if mu > 0 {
                let mut data = vec![0.0; mu * mu];
                for c in 0..mu {
                    data[c * mu + c..(c + 1) * mu]
                        .copy_from_slice(&front[(k + c) * m + k + c..(k + c + 1) * m]);
                }
                schur_update(&front, m, k, &d[f..f + k], &mut data, mu);
                stack.push(Update {
                    rows: rows[k..].to_vec(),
                    data,
                });
            }
            for &r in &rows {
                relpos[r as usize] = u32::MAX;
            }
            front.truncate(m * k);
            front.shrink_to_fit();
            supernodes.push(Supernode {
                first: f,
                ncols: k,
                rows,
                panel: front,
            });
        }

        Ok(LdlFactorization {
            n,
            perm,
            supernodes,
            d,
            negative_pivots,
        })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Stored entries of the strictly lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.supernodes
            .iter()
            .map(|s| {
                let m = s.rows.len();
                s.ncols * m - s.ncols * (s.ncols + 1) / 2
            })
            .sum()
    }

    pub fn supernode_count(&self) -> usize {
        self.supernodes.len()
    }

    /// Number of negative eigenvalues of the factored matrix (Sylvester inertia).
    pub fn negative_pivots(&self) -> usize {
        self.negative_pivots
    }

    /// Solves `A x = b` with the factors only (no refinement).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "right-hand side dimension");
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for s in &self.supernodes {
            let m = s.rows.len();
            for j in 0..s.ncols {
                let xj = x[s.first + j];
                if xj == 0.0 {
                    continue;
                }
                let col = &s.panel[j * m..(j + 1) * m];
                for i in j + 1..m {
                    x[s.rows[i] as usize] -= col[i] * xj;
                }
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for s in self.supernodes.iter().rev() {
            let m = s.rows.len();
            for j in (0..s.ncols).rev() {
                let col = &s.panel[j * m..(j + 1) * m];
                let mut acc = x[s.first + j];
                for i in j + 1..m {
                    acc -= col[i] * x[s.rows[i] as usize];
                }
                x[s.first + j] = acc;
            }
        }
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

/// `U -= L2 D L2^T` on the lower triangle, where `L2` is rows `k..m` of the
/// first `k` panel columns. Columns of `L2` are applied four at a time.
fn schur_update(front: &[f64], m: usize, k: usize, d: &[f64], u: &mut [f64], mu: usize) {
    let l2 = |p: usize| &front[p * m + k..(p + 1) * m];
    for c in 0..mu {
        let col = &mut u[c * mu + c..(c + 1) * mu];
        let mut p = 0;
        while p + 4 <= k {
            let (a0, a1, a2, a3) = (l2(p), l2(p + 1), l2(p + 2), l2(p + 3));
            let w0 = a0[c] * d[p];
            let w1 = a1[c] * d[p + 1];
            let w2 = a2[c] * d[p + 2];
            let w3 = a3[c] * d[p + 3];
            let (a0, a1, a2, a3) = (&a0[c..], &a1[c..], &a2[c..], &a3[c..]);
            for (i, x) in col.iter_mut().enumerate() {
                *x -= a0[i] * w0 + a1[i] * w1 + a2[i] * w2 + a3[i] * w3;
            }
            p += 4;
        }
        while p < k {
            let a = l2(p);
            let w = a[c] * d[p];
            if w != 0.0 {
                for (x, l) in col.iter_mut().zip(&a[c..]) {
                    *x -= l * w;
                }
            }
            p += 1;
        }
    }
}

/// Factors and solves the system, refining until the relative residual is
/// at most [`RESIDUAL_TOLERANCE`].
pub fn solve_direct(sys: &SparseSystem) -> Result<Solution> {
    let n = sys.dimension();
    if sys.rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sys.rhs.len(),
        });
    }
    let factor = LdlFactorization::new(&sys.matrix)?;
    solve_with(&factor, sys)
}

/// Solves with an existing factorization of `sys.matrix`.
pub fn solve_with(factor: &LdlFactorization, sys: &SparseSystem) -> Result<Solution> {
    let sol = refine(factor, sys)?;
    if !(sol.residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::InaccurateSolve {
            residual: sol.residual,
        });
    }
    Ok(sol)
}

/// Factors, solves and refines like [`solve_direct`], but returns the
/// solution whatever its residual. Only singular factorizations and
/// non-finite results are errors; the caller judges `residual`.
pub fn solve_unchecked(sys: &SparseSystem) -> Result<Solution> {
    let n = sys.dimension();
    if sys.rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sys.rhs.len(),
        });
    }
    let factor = LdlFactorization::new(&sys.matrix)?;
    refine(&factor, sys)
}

fn refine(factor: &LdlFactorization, sys: &SparseSystem) -> Result<Solution> {
    let n = sys.dimension();
    if norm2(&sys.rhs) == 0.0 {
        return Ok(Solution {
            values: vec![0.0; n],
            residual: 0.0,
            backward_error: 0.0,
            refinement_steps: 0,
        });
    }
    let mut x = factor.solve(&sys.rhs);
    let mut residual = sys.relative_residual(&x);
    let mut steps = 0;
    while residual > REFINEMENT_TARGET && steps < MAX_REFINEMENT_STEPS {
        let ax = sys.matrix.matvec(&x);
        let r: Vec<f64> = sys.rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
        let dx = factor.solve(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(u, v)| u + v).collect();
        let next = sys.relative_residual(&candidate);
        steps += 1;
        if !(next < residual) {
            break;
        }
        x = candidate;
        residual = next;
    }
    if !residual.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InaccurateSolve { residual });
    }
    Ok(Solution {
        backward_error: componentwise_backward_error(sys, &x),
        values: x,
        residual,
        refinement_steps: steps,
    })
}

fn componentwise_backward_error(sys: &SparseSystem, x: &[f64]) -> f64 {
    let a = &sys.matrix;
    let ax = a.matvec(x);
    let mut scale: Vec<f64> = sys.rhs.iter().map(|b| b.abs()).collect();
    for j in 0..a.dimension() {
        for p in a.col_ptr()[j]..a.col_ptr()[j + 1] {
            let i = a.row_idx()[p];
            let v = a.values()[p].abs();
            scale[i] += v * x[j].abs();
            if i != j {
                scale[j] += v * x[i].abs();
            }
        }
    }
    ax.iter()
        .zip(&sys.rhs)
        .zip(&scale)
        .map(|((y, b), s)| if *s > 0.0 { (y - b).abs() / s } else { 0.0 })
        .fold(0.0, f64::max)
}
