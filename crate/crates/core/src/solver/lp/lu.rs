//! Sparse LU factorization of simplex basis matrices with triangular solves.
//!
//! Left-looking factorization with partial pivoting. Columns are processed
//! in ascending-fill order, which puts the logical (single-entry) columns
//! first so the bulk of a typical basis factors with no fill at all. Row and
//! column permutations are folded into the stored factors, so `ftran` /
//! `btran` work on plain dense vectors with a skip-zero sparsity shortcut.

/// Column-compressed storage of one basis column in original row indices.
#[derive(Debug, Clone)]
pub struct BasisColumn {
    pub entries: Vec<(u32, f64)>,
}

#[derive(Debug, Clone)]
pub struct SingularBasis {
    /// Position (within the basis) of the column that found no usable pivot.
    pub position: usize,
}

struct CscFactor {
    col_ptr: Vec<u32>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CscFactor {
    fn with_capacity(n: usize, nnz: usize) -> Self {
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        Self {
            col_ptr,
            row_idx: Vec::with_capacity(nnz),
            values: Vec::with_capacity(nnz),
        }
    }

    fn push_col(&mut self, entries: &[(u32, f64)]) {
        for &(r, v) in entries {
            self.row_idx.push(r);
            self.values.push(v);
        }
        self.col_ptr.push(self.row_idx.len() as u32);
    }

    fn col(&self, j: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.col_ptr[j] as usize;
        let hi = self.col_ptr[j + 1] as usize;
        self.row_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }
}

/// LU factors of a basis, with permutations applied so that both factors are
/// genuinely triangular in factor space.
pub struct Factorization {
    m: usize,
    /// L is unit lower triangular; entries strictly below the diagonal.
    l: CscFactor,
    /// U entries strictly above the diagonal, plus the diagonal itself.
    u: CscFactor,
    u_diag: Vec<f64>,
    /// rowperm[k] = original row placed at factor position k.
    rowperm: Vec<u32>,
    /// colorder[k] = basis position whose column was eliminated k-th.
    colorder: Vec<u32>,
}

impl Factorization {
    /// Factor the basis given by `cols` (each in original row indices).
    pub fn factor(m: usize, cols: &[BasisColumn]) -> Result<Factorization, SingularBasis> {
        assert_eq!(cols.len(), m, "basis must be square");

        // column elimination order: fewest entries first, stable by position
        let mut order: Vec<u32> = (0..m as u32).collect();
        order.sort_by_key(|&j| (cols[j as usize].entries.len(), j));

        // pinv[orig_row] = factor position, or NONE
        const NONE: u32 = u32::MAX;
        let mut pinv = vec![NONE; m];
        let mut rowperm = vec![0u32; m];

        let mut l = CscFactor::with_capacity(m, 4 * m);
        let mut u = CscFactor::with_capacity(m, 4 * m);
        let mut u_diag = vec![0.0f64; m];

        // dense work vector + occupied-pattern list for the sparse solve
        let mut work = vec![0.0f64; m];
        let mut pattern: Vec<u32> = Vec::with_capacity(64);
        // simple DFS stacks for the reach computation over L's pattern
        let mut stack: Vec<(u32, u32)> = Vec::new();
        let mut visited = vec![false; m];
        let mut lcol_entries: Vec<(u32, f64)> = Vec::new();
        let mut ucol_entries: Vec<(u32, f64)> = Vec::new();

        for (step, &bpos) in order.iter().enumerate() {
            // Sparse solve: x = L \ B[:, bpos] over the already-eliminated
            // part. Compute the reach of the column's pattern in the graph
            // of L (positions), then eliminate in topological (reverse
            // post-) order.
            pattern.clear();
            for &(r, v) in &cols[bpos as usize].entries {
                work[r as usize] = v;
            }
            // DFS from every nonzero's factor position
            for &(r, _) in &cols[bpos as usize].entries {
                let p = pinv[r as usize];
                let start = if p == NONE { continue } else { p };
                if visited[start as usize] {
                    continue;
                }
                stack.push((start, 0));
                visited[start as usize] = true;
                while let Some(&mut (node, ref mut edge)) = stack.last_mut() {
                    // successors of factor position `node` are the factor
                    // positions of L's below-diagonal rows in column `node`
                    let lo = l.col_ptr[node as usize] as usize;
                    let hi = l.col_ptr[node as usize + 1] as usize;
                    let mut advanced = false;
                    while (*edge as usize) < hi - lo {
                        let row = l.row_idx[lo + *edge as usize];
                        *edge += 1;
                        let p2 = pinv[row as usize];
                        if p2 != NONE && !visited[p2 as usize] {
                            visited[p2 as usize] = true;
                            stack.push((p2, 0));
                            advanced = true;
                            break;
                        }
                    }
                    if !advanced {
                        pattern.push(node);
                        stack.pop();
                    }
                }
            }
            // pattern is in reverse topological order; eliminate from the
            // deepest dependency upward (iterate reversed = topological)
            for &p in pattern.iter().rev() {
                visited[p as usize] = false;
                let orig_row = rowperm[p as usize];
                let xv = work[orig_row as usize];
                if xv == 0.0 {
                    continue;
                }
                for (r, v) in l.col(p as usize) {
                    work[r as usize] -= v * xv;
                }
            }

            // partition into U part (pivotal rows) and candidate pivot rows
            ucol_entries.clear();
            lcol_entries.clear();
            let mut best_row = NONE;
            let mut best_val = 0.0f64;
            // gather: pivotal entries come from the pattern positions;
            // remaining nonzeros live on rows touched by the original column
            // or fill-in from eliminations. Collect by scanning the work
            // vector support: original entries + all L-column rows touched.
            // To stay O(local), rebuild support from pattern + column.
            let mut support: Vec<u32> = Vec::with_capacity(16);
            for &(r, _) in &cols[bpos as usize].entries {
                support.push(r);
            }
            for &p in &pattern {
                for (r, _) in l.col(p as usize) {
                    support.push(r);
                }
                support.push(rowperm[p as usize]);
            }
            support.sort_unstable();
            support.dedup();
            for &r in &support {
                let v = work[r as usize];
                if v == 0.0 {
                    continue;
                }
                let p = pinv[r as usize];
                if p != NONE {
                    ucol_entries.push((p, v));
                } else {
                    lcol_entries.push((r, v));
                    let a = v.abs();
                    if a > best_val {
                        best_val = a;
                        best_row = r;
                    }
                }
            }
            // clear the work vector
            for &r in &support {
                work[r as usize] = 0.0;
            }

            if best_row == NONE || best_val < 1e-11 {
                return Err(SingularBasis {
                    position: bpos as usize,
                });
            }

            let k = step as u32;
            pinv[best_row as usize] = k;
            rowperm[k as usize] = best_row;
            let pivot = lcol_entries
                .iter()
                .find(|&&(r, _)| r == best_row)
                .unwrap()
                .1;
            u_diag[k as usize] = pivot;
            // store L column: below-diagonal entries scaled by the pivot,
            // keyed by original row (translated lazily during solves via
            // pinv once all pivots are known). We key by original row here
            // and remap after the loop.
            lcol_entries.retain(|&(r, _)| r != best_row);
            for e in lcol_entries.iter_mut() {
                e.1 /= pivot;
            }
            ucol_entries.sort_unstable_by_key(|&(p, _)| p);
            u.push_col(&ucol_entries);
            l.push_col(&lcol_entries);
        }

        // remap L's row keys from original rows to factor positions
        for r in l.row_idx.iter_mut() {
            *r = pinv[*r as usize];
        }

        Ok(Factorization {
            m,
            l,
            u,
            u_diag,
            rowperm,
            colorder: order,
        })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Basis position eliminated k-th (needed to undo the column ordering).
    pub fn colorder(&self) -> &[u32] {
        &self.colorder
    }

    /// Solve B x = b. `b` is given in original row indices; the result is
    /// written back in basis-position indices (position p of the result is
    /// the multiplier of basis column p).
    pub fn ftran_dense(&self, b: &mut [f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        scratch.resize(m, 0.0);
        // apply row permutation: y[k] = b[rowperm[k]]
        for k in 0..m {
            scratch[k] = b[self.rowperm[k] as usize];
        }
        // forward solve L y = Pb (unit diagonal, entries below diag)
        for k in 0..m {
            let yk = scratch[k];
            if yk != 0.0 {
                for (r, v) in self.l.col(k) {
                    scratch[r as usize] -= v * yk;
                }
            }
        }
        // backward solve U z = y
        for k in (0..m).rev() {
            let mut zk = scratch[k];
            if zk != 0.0 {
                zk /= self.u_diag[k];
                scratch[k] = zk;
                for (r, v) in self.u.col(k) {
                    if (r as usize) < k {
                        scratch[r as usize] -= v * zk;
                    }
                }
            }
        }
        // undo column ordering: result[colorder[k]] = z[k]
        for v in b.iter_mut() {
            *v = 0.0;
        }
        for k in 0..m {
            b[self.colorder[k] as usize] = scratch[k];
        }
    }

    /// Solve B^T x = b. `b` is given in basis-position indices; the result
    /// is written back in original row indices.
    pub fn btran_dense(&self, b: &mut [f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        scratch.resize(m, 0.0);
        // apply column ordering: y[k] = b[colorder[k]]
        for k in 0..m {
            scratch[k] = b[self.colorder[k] as usize];
        }
        // forward solve U^T y = b (U^T is lower triangular)
        for k in 0..m {
            let mut acc = scratch[k];
            for (r, v) in self.u.col(k) {
                if (r as usize) < k {
                    acc -= v * scratch[r as usize];
                }
            }
            scratch[k] = acc / self.u_diag[k];
        }
        // backward solve L^T z = y (L^T upper triangular, unit diagonal)
        for k in (0..m).rev() {
            let mut acc = scratch[k];
            for (r, v) in self.l.col(k) {
                acc -= v * scratch[r as usize];
            }
            scratch[k] = acc;
        }
        // undo row permutation: result[rowperm[k]] = z[k]
        for v in b.iter_mut() {
            *v = 0.0;
        }
        for k in 0..m {
            b[self.rowperm[k] as usize] = scratch[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_cols(a: &[&[f64]]) -> Vec<BasisColumn> {
        let m = a.len();
        (0..m)
            .map(|j| BasisColumn {
                entries: (0..m)
                    .filter(|&i| a[i][j] != 0.0)
                    .map(|i| (i as u32, a[i][j]))
                    .collect(),
            })
            .collect()
    }

    fn mat_vec(a: &[&[f64]], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
            .collect()
    }

    fn mat_t_vec(a: &[&[f64]], x: &[f64]) -> Vec<f64> {
        let m = a.len();
        (0..m)
            .map(|j| (0..m).map(|i| a[i][j] * x[i]).sum())
            .collect()
    }

    #[test]
    fn factor_and_solve_small_dense() {
        let a: Vec<&[f64]> = vec![
            &[2.0, 1.0, 0.0],
            &[-1.0, 3.0, 2.0],
            &[0.5, 0.0, -4.0],
        ];
        let f = Factorization::factor(3, &dense_to_cols(&a)).unwrap();

        let x_true = vec![1.5, -2.0, 0.25];
        let mut b = mat_vec(&a, &x_true);
        let mut scratch = Vec::new();
        f.ftran_dense(&mut b, &mut scratch);
        for (got, want) in b.iter().zip(&x_true) {
            assert!((got - want).abs() < 1e-12, "{b:?}");
        }

        let mut bt = mat_t_vec(&a, &x_true);
        f.btran_dense(&mut bt, &mut scratch);
        for (got, want) in bt.iter().zip(&x_true) {
            assert!((got - want).abs() < 1e-12, "{bt:?}");
        }
    }

    #[test]
    fn identity_with_logicals() {
        // typical starting basis: all logical columns (-1 on the diagonal)
        let m = 5;
        let cols: Vec<BasisColumn> = (0..m)
            .map(|i| BasisColumn {
                entries: vec![(i as u32, -1.0)],
            })
            .collect();
        let f = Factorization::factor(m, &cols).unwrap();
        let mut b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let mut scratch = Vec::new();
        f.ftran_dense(&mut b, &mut scratch);
        assert_eq!(b, vec![-1.0, -2.0, -3.0, -4.0, -5.0]);
    }

    #[test]
    fn singular_basis_is_reported() {
        let a: Vec<&[f64]> = vec![&[1.0, 2.0], &[2.0, 4.0]];
        assert!(Factorization::factor(2, &dense_to_cols(&a)).is_err());
    }

    #[test]
    fn random_matrices_round_trip() {
        // deterministic LCG so the test is reproducible
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        for trial in 0..20 {
            let m = 8 + (trial % 5);
            let mut dense = vec![vec![0.0f64; m]; m];
            for (i, row) in dense.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    let r = rng();
                    if i == j || r.abs() > 0.3 {
                        *v = r * 4.0 + if i == j { 2.0 } else { 0.0 };
                    }
                }
            }
            let rows: Vec<&[f64]> = dense.iter().map(|r| r.as_slice()).collect();
            let f = match Factorization::factor(m, &dense_to_cols(&rows)) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let x_true: Vec<f64> = (0..m).map(|i| (i as f64) - 2.5).collect();
            let mut b = mat_vec(&rows, &x_true);
            let mut scratch = Vec::new();
            f.ftran_dense(&mut b, &mut scratch);
            for (got, want) in b.iter().zip(&x_true) {
                assert!((got - want).abs() < 1e-9);
            }
            let mut bt = mat_t_vec(&rows, &x_true);
            f.btran_dense(&mut bt, &mut scratch);
            for (got, want) in bt.iter().zip(&x_true) {
                assert!((got - want).abs() < 1e-9);
            }
        }
    }
}
