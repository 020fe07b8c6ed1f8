//! Sparse LU factorization of simplex basis matrices.
//!
//! Columns are factorized left-looking (Gilbert-Peierls) in order of
//! increasing column count, with threshold partial pivoting that prefers
//! rows with few nonzeros. Between refactorizations the basis inverse is
//! extended with product-form eta vectors (see [`crate::solver::basis`]).

/// Relative pivot threshold: a candidate pivot must be at least this
/// fraction of the largest candidate in its column.
const PIVOT_THRESHOLD: f64 = 0.1;
/// Absolute magnitude below which a column is declared dependent.
const SINGULAR_TOL: f64 = 1e-11;
/// Entries below this magnitude are dropped from the factors.
const DROP_TOL: f64 = 1e-14;

/// A basis column that could not be pivoted, paired with a row that was
/// left without a pivot. Replacing the column's variable with the row's
/// logical variable restores a nonsingular basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deficiency {
    pub position: usize,
    pub row: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LuFactors {
    m: usize,
    pivot_row: Vec<usize>,
    pivot_pos: Vec<usize>,
    l_start: Vec<usize>,
    l_rows: Vec<usize>,
    l_vals: Vec<f64>,
    u_start: Vec<usize>,
    u_steps: Vec<usize>,
    u_vals: Vec<f64>,
    u_diag: Vec<f64>,
}

impl LuFactors {
    /// Factorizes the `m x m` matrix whose column at basis position `p` is
    /// produced by `column(p, &mut buf)` as `(row, value)` pairs.
    ///
    /// Returns the factors together with any rank deficiencies. When the
    /// deficiency list is non-empty the factors are not usable.
    pub fn factorize<F>(m: usize, mut column: F) -> (Self, Vec<Deficiency>)
    where
        F: FnMut(usize, &mut Vec<(usize, f64)>),
    {
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut row_count = vec![0usize; m];
        for p in 0..m {
            let mut buf = Vec::new();
            column(p, &mut buf);
            for &(r, _) in &buf {
                row_count[r] += 1;
            }
            cols.push(buf);
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&p| (cols[p].len(), p));

        let mut lu = LuFactors {
            m,
            l_start: vec![0],
            u_start: vec![0],
            ..Default::default()
        };
        let mut row_step = vec![usize::MAX; m];
        let mut work = vec![0.0f64; m];
        let mut in_pattern = vec![false; m];
        let mut pattern: Vec<usize> = Vec::new();
        let mut visited = vec![false; m];
        let mut reached: Vec<usize> = Vec::new();
        let mut stack: Vec<usize> = Vec::new();
        let mut singular_positions = Vec::new();

        for &p in &order {
            let k = lu.pivot_row.len();
            pattern.clear();
            reached.clear();
            for &(r, v) in &cols[p] {
                work[r] += v;
                if !in_pattern[r] {
                    in_pattern[r] = true;
                    pattern.push(r);
                }
                let s = row_step[r];
                if s != usize::MAX && !visited[s] {
                    visited[s] = true;
                    stack.push(s);
                }
            }
            while let Some(s) = stack.pop() {
                reached.push(s);
                for idx in lu.l_start[s]..lu.l_start[s + 1] {
                    let r = lu.l_rows[idx];
                    let t = row_step[r];
                    if t != usize::MAX && !visited[t] {
                        visited[t] = true;
                        stack.push(t);
                    }
                }
            }
            reached.sort_unstable();
            for &s in &reached {
                visited[s] = false;
                let w = work[lu.pivot_row[s]];
                if w == 0.0 {
                    continue;
                }
                for idx in lu.l_start[s]..lu.l_start[s + 1] {
                    let r = lu.l_rows[idx];
                    work[r] -= lu.l_vals[idx] * w;
                    if !in_pattern[r] {
                        in_pattern[r] = true;
                        pattern.push(r);
                    }
                }
            }

            // U column: entries at already pivoted rows.
            let mut max_abs = 0.0f64;
            for &r in &pattern {
                if row_step[r] == usize::MAX {
                    max_abs = max_abs.max(work[r].abs());
                }
            }
            if max_abs < SINGULAR_TOL {
                singular_positions.push(p);
                for &r in &pattern {
                    work[r] = 0.0;
                    in_pattern[r] = false;
                }
                continue;
            }
            let mut best: Option<usize> = None;
            for &r in &pattern {
                if row_step[r] != usize::MAX {
                    continue;
                }
                let a = work[r].abs();
                if a < PIVOT_THRESHOLD * max_abs {
                    continue;
                }
                best = match best {
                    None => Some(r),
                    Some(b) => {
                        let (cb, cr) = (row_count[b], row_count[r]);
                        let ab = work[b].abs();
                        if cr < cb || (cr == cb && (a > ab || (a == ab && r < b))) {
                            Some(r)
                        } else {
                            Some(b)
                        }
                    }
                };
            }
            let piv_row = best.expect("a pivot candidate exists above threshold");
            let piv = work[piv_row];

            for &s in &reached {
                let v = work[lu.pivot_row[s]];
                if v.abs() > DROP_TOL {
                    lu.u_steps.push(s);
                    lu.u_vals.push(v);
                }
            }
            lu.u_diag.push(piv);
            lu.u_start.push(lu.u_steps.len());
            for &r in &pattern {
                if row_step[r] == usize::MAX && r != piv_row {
                    let l = work[r] / piv;
                    if l.abs() > DROP_TOL {
                        lu.l_rows.push(r);
                        lu.l_vals.push(l);
                    }
                }
                work[r] = 0.0;
                in_pattern[r] = false;
            }
            lu.l_start.push(lu.l_rows.len());
            lu.pivot_row.push(piv_row);
            lu.pivot_pos.push(p);
            row_step[piv_row] = k;
        }

        let mut deficiencies = Vec::new();
        if !singular_positions.is_empty() {
            let free_rows = (0..m).filter(|&r| row_step[r] == usize::MAX);
            for (position, row) in singular_positions.into_iter().zip(free_rows) {
                deficiencies.push(Deficiency { position, row });
            }
        }
        (lu, deficiencies)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Nonzeros stored in L and U (diagonal included).
    pub fn nnz(&self) -> usize {
        self.l_rows.len() + self.u_steps.len() + self.u_diag.len()
    }

    /// Solves `B x = b` in place. On entry `rhs` is indexed by row, on exit
    /// it holds `x` indexed by basis position.
    pub fn solve(&self, rhs: &mut [f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        scratch.clear();
        scratch.resize(m, 0.0);
        // L w = b, w indexed by step.
        for k in 0..m {
            let w = rhs[self.pivot_row[k]];
            scratch[k] = w;
            if w != 0.0 {
                for idx in self.l_start[k]..self.l_start[k + 1] {
                    rhs[self.l_rows[idx]] -= self.l_vals[idx] * w;
                }
            }
        }
        // U z = w, back substitution by columns.
        for k in (0..m).rev() {
            let z = scratch[k] / self.u_diag[k];
            scratch[k] = z;
            if z != 0.0 {
                for idx in self.u_start[k]..self.u_start[k + 1] {
                    scratch[self.u_steps[idx]] -= self.u_vals[idx] * z;
                }
            }
        }
        for k in 0..m {
            rhs[self.pivot_pos[k]] = scratch[k];
        }
    }

    /// Solves `B^T y = c` in place. On entry `rhs` is indexed by basis
    /// position, on exit it holds `y` indexed by row.
    pub fn solve_transpose(&self, rhs: &mut [f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        scratch.clear();
        scratch.resize(m, 0.0);
        // U^T v = Q^T c.
        for k in 0..m {
            let mut acc = rhs[self.pivot_pos[k]];
            for idx in self.u_start[k]..self.u_start[k + 1] {
                acc -= self.u_vals[idx] * scratch[self.u_steps[idx]];
            }
            scratch[k] = acc / self.u_diag[k];
        }
        // L^T y = v, rows pivoted later are already final.
        for v in rhs.iter_mut() {
            *v = 0.0;
        }
        for k in (0..m).rev() {
            let mut acc = scratch[k];
            for idx in self.l_start[k]..self.l_start[k + 1] {
                acc -= self.l_vals[idx] * rhs[self.l_rows[idx]];
            }
            rhs[self.pivot_row[k]] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_cols(a: &[Vec<f64>]) -> impl FnMut(usize, &mut Vec<(usize, f64)>) + '_ {
        move |p, buf| {
            for (r, row) in a.iter().enumerate() {
                if row[p] != 0.0 {
                    buf.push((r, row[p]));
                }
            }
        }
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, density: f64) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; m]; m];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = rng.gen_range(1.0..4.0);
            for v in row.iter_mut() {
                if rng.gen::<f64>() < density {
                    *v += rng.gen_range(-2.0..2.0);
                }
            }
        }
        a
    }

    #[test]
    fn solves_random_sparse_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [1usize, 2, 5, 13, 40] {
            let a = random_matrix(&mut rng, m, 0.2);
            let (lu, def) = LuFactors::factorize(m, dense_cols(&a));
            assert!(def.is_empty());
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mut b = matvec(&a, &x);
            let mut scratch = Vec::new();
            lu.solve(&mut b, &mut scratch);
            for (u, v) in b.iter().zip(&x) {
                assert!((u - v).abs() < 1e-9, "{u} vs {v}");
            }
            // transpose
            let at: Vec<Vec<f64>> = (0..m).map(|j| (0..m).map(|i| a[i][j]).collect()).collect();
            let mut c = matvec(&at, &x);
            lu.solve_transpose(&mut c, &mut scratch);
            for (u, v) in c.iter().zip(&x) {
                assert!((u - v).abs() < 1e-9, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn permuted_identity_with_structural_column() {
        // columns: e2, [1,1,0], e0
        let a = vec![vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
        let (lu, def) = LuFactors::factorize(3, dense_cols(&a));
        assert!(def.is_empty());
        let mut b = vec![3.0, 2.0, 5.0];
        let mut s = Vec::new();
        lu.solve(&mut b, &mut s);
        assert_eq!(b, vec![5.0, 2.0, 1.0]);
    }

    #[test]
    fn reports_rank_deficiency() {
        let a = vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 1.0]];
        let (_, def) = LuFactors::factorize(3, dense_cols(&a));
        assert_eq!(def.len(), 1);
        assert!(def[0].row < 2);
    }
}
