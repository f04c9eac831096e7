//! Independent reference implementations used as test oracles. Everything
//! here works on plain `Vec`s with a cyclic Jacobi eigensolver, so it shares
//! no numerical code with the library.

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Mat {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn transpose(a: &Mat) -> Mat {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn matvec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Column `j` of `a`.
pub fn column(a: &Mat, j: usize) -> Vec<f64> {
    a.iter().map(|r| r[j]).collect()
}

/// Cyclic Jacobi on a symmetric matrix. Returns eigenvalues in descending
/// order and the matching eigenvectors as columns.
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut m = a.clone();
    let mut v: Mat = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

/// Largest eigenvalue of a PSD matrix by power iteration.
pub fn power_iteration(a: &Mat, iterations: usize) -> f64 {
    let n = a.len();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let y = matvec(a, &x);
        let ny = norm(&y);
        if ny == 0.0 {
            return 0.0;
        }
        lambda = dot(&x, &y) / dot(&x, &x);
        x = y.iter().map(|v| v / ny).collect();
    }
    lambda
}

/// Spectral norm `||B||_2` via power iteration on `BᵀB`.
pub fn spectral_norm(b: &Mat) -> f64 {
    power_iteration(&matmul(&transpose(b), b), 500).sqrt()
}

/// Smallest `r >= 1` whose leading squared eigenvalues reach `beta` of the total.
pub fn squared_rank(values: &[f64], beta: f64) -> usize {
    let sq: Vec<f64> = values.iter().map(|v| v.max(0.0).powi(2)).collect();
    let total: f64 = sq.iter().sum();
    let mut acc = 0.0;
    for (i, s) in sq.iter().enumerate() {
        acc += s;
        if acc >= beta * total {
            return i + 1;
        }
    }
    values.len()
}

/// The constrained eigendirections, computed the slow way: the intersection
/// of the nullspaces is the zero-eigenspace of the sum of range projectors.
pub struct DenseReds {
    pub nullspace_dim: usize,
    /// Columns of `R`.
    pub directions: Vec<Vec<f64>>,
    pub projected_values: Vec<f64>,
}

pub fn dense_reds(fixed: &[Mat], changing: &Mat, beta_f: &[f64], beta_c: f64) -> DenseReds {
    let d = changing.len();
    let mut projector_sum: Mat = vec![vec![0.0; d]; d];
    for (a, &beta) in fixed.iter().zip(beta_f) {
        let lmax = power_iteration(a, 2000);
        if lmax <= 0.0 {
            continue;
        }
        let normalized: Mat = a.iter().map(|r| r.iter().map(|x| x / lmax).collect()).collect();
        let (values, vectors) = jacobi_eigen(&normalized);
        let rank = squared_rank(&values, beta);
        for k in 0..rank {
            let u = column(&vectors, k);
            for i in 0..d {
                for j in 0..d {
                    projector_sum[i][j] += u[i] * u[j];
                }
            }
        }
    }
    let (pvals, pvecs) = jacobi_eigen(&projector_sum);
    let null_cols: Vec<usize> = (0..d).filter(|&k| pvals[k].abs() < 1e-8).collect();
    let n_mat: Mat = (0..d).map(|i| null_cols.iter().map(|&k| pvecs[i][k]).collect()).collect();
    let k = null_cols.len();
    if k == 0 {
        return DenseReds { nullspace_dim: 0, directions: Vec::new(), projected_values: Vec::new() };
    }
    let lmax_c = power_iteration(changing, 2000).max(f64::MIN_POSITIVE);
    let ac: Mat = changing.iter().map(|r| r.iter().map(|x| x / lmax_c).collect()).collect();
    let projected = matmul(&matmul(&transpose(&n_mat), &ac), &n_mat);
    let (values, vectors) = jacobi_eigen(&projected);
    let rank = squared_rank(&values, beta_c);
    let directions = (0..rank).map(|j| matvec(&n_mat, &column(&vectors, j))).collect();
    DenseReds { nullspace_dim: k, directions, projected_values: values }
}

/// `|cos|` between two vectors.
pub fn abs_cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).abs() / (norm(a) * norm(b))
}
