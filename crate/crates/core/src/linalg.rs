//! Dense weighted least squares via column-pivoted Householder QR.
//!
//! The design matrices here are tiny (at most a few hundred rows and fewer
//! than ten columns), so a plain dense factorization is plenty. Numerically
//! dependent columns are aliased: their coefficients are set to zero and the
//! system is solved over the remaining rank, matching how GLM fitters treat
//! collinear spline bases.

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Solve `min_beta sum_i w_i (y_i - x_i beta)^2` for nonnegative weights.
///
/// Aliased (numerically dependent) columns receive coefficient zero.
/// Returns `None` only when the weighted design has rank zero.
pub fn solve_weighted_least_squares(design: &Matrix, weights: &[f64], response: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(design.rows, weights.len());
    assert_eq!(design.rows, response.len());
    let n = design.rows;
    let p = design.cols;
    if n < p {
        return None;
    }
    let mut a = vec![0.0; n * p];
    let mut b = vec![0.0; n];
    for i in 0..n {
        let sw = weights[i].max(0.0).sqrt();
        for j in 0..p {
            a[i * p + j] = sw * design.at(i, j);
        }
        b[i] = sw * response[i];
    }
    pivoted_householder_solve(&mut a, &mut b, n, p)
}

/// Ordinary least squares for an unweighted system.
pub fn solve_least_squares(design: &Matrix, response: &[f64]) -> Option<Vec<f64>> {
    let w = vec![1.0; design.rows];
    solve_weighted_least_squares(design, &w, response)
}

fn column_norm_below(a: &[f64], p: usize, n: usize, col: usize, from_row: usize) -> f64 {
    let mut acc = 0.0;
    for i in from_row..n {
        acc += a[i * p + col] * a[i * p + col];
    }
    acc.sqrt()
}

fn swap_columns(a: &mut [f64], p: usize, n: usize, c1: usize, c2: usize) {
    if c1 == c2 {
        return;
    }
    for i in 0..n {
        a.swap(i * p + c1, i * p + c2);
    }
}

fn pivoted_householder_solve(a: &mut [f64], b: &mut [f64], n: usize, p: usize) -> Option<Vec<f64>> {
    let mut perm: Vec<usize> = (0..p).collect();
    let max_norm = (0..p)
        .map(|j| column_norm_below(a, p, n, j, 0))
        .fold(0.0f64, f64::max);
    if max_norm == 0.0 {
        return None;
    }
    let drop_tol = max_norm * 1e-10;
    let mut rank = p;

    for k in 0..p {
        // pivot: bring the column with the largest residual norm to front
        let (best, best_norm) = (k..p)
            .map(|j| (j, column_norm_below(a, p, n, j, k)))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if best_norm <= drop_tol {
            rank = k;
            break;
        }
        swap_columns(a, p, n, k, best);
        perm.swap(k, best);

        let akk = a[k * p + k];
        let alpha = if akk >= 0.0 { -best_norm } else { best_norm };
        a[k * p + k] = akk - alpha;
        let mut vtv = 0.0;
        for i in k..n {
            vtv += a[i * p + k] * a[i * p + k];
        }
        for j in (k + 1)..p {
            let mut dot = 0.0;
            for i in k..n {
                dot += a[i * p + k] * a[i * p + j];
            }
            let f = 2.0 * dot / vtv;
            for i in k..n {
                a[i * p + j] -= f * a[i * p + k];
            }
        }
        let mut dot = 0.0;
        for i in k..n {
            dot += a[i * p + k] * b[i];
        }
        let f = 2.0 * dot / vtv;
        for i in k..n {
            b[i] -= f * a[i * p + k];
        }
        a[k * p + k] = alpha;
    }

    if rank == 0 {
        return None;
    }
    // back substitution over the leading rank x rank triangle; aliased
    // directions get coefficient zero
    let mut beta_pivoted = vec![0.0; p];
    for k in (0..rank).rev() {
        let mut s = b[k];
        for j in (k + 1)..rank {
            s -= a[k * p + j] * beta_pivoted[j];
        }
        beta_pivoted[k] = s / a[k * p + k];
    }
    let mut beta = vec![0.0; p];
    for (slot, &orig) in perm.iter().enumerate() {
        beta[orig] = beta_pivoted[slot];
    }
    Some(beta)
}
