//! Small dense linear-algebra kernels: packed symmetric storage, Cholesky
//! factorisation, SPD solves, and a Jacobi eigenvalue sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric matrix stored as its packed lower triangle (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct SymmetricMatrix {
    order: usize,
    packed: Vec<f64>,
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

impl SymmetricMatrix {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            packed: vec![0.0; order * (order + 1) / 2],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds the matrix from `f(i, j)` evaluated on the lower triangle only.
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut packed = Vec::with_capacity(order * (order + 1) / 2);
        for i in 0..order {
            for j in 0..=i {
                packed.push(f(i, j));
            }
        }
        Self { order, packed }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Reads a dense square matrix; the upper triangle must mirror the lower
    /// one to within `1e-12` relative.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let order = rows.len();
        if rows.iter().any(|r| r.len() != order) {
            return Err(Error::Contract("matrix is not square".into()));
        }
        for i in 0..order {
            for j in 0..i {
                let (a, b) = (rows[i][j], rows[j][i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Contract(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_fn(order, |i, j| rows[i][j]))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[packed_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.packed[packed_index(i, j)] = value;
    }

    pub fn add_to_diagonal(&mut self, delta: f64) {
        for i in 0..self.order {
            self.packed[packed_index(i, i)] += delta;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.packed.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.order {
            for j in 0..self.order {
                acc += self.get(i, j).powi(2);
            }
        }
        acc.sqrt()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.packed.iter().all(|x| x.is_finite())
    }
}

impl From<SymmetricMatrix> for Vec<Vec<f64>> {
    fn from(m: SymmetricMatrix) -> Self {
        m.to_dense()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymmetricMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymmetricMatrix::from_dense(&rows)
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    order: usize,
    packed: Vec<f64>,
}

/// Factorises a symmetric matrix. Fails with the index of the first
/// non-positive pivot when the matrix is not positive definite.
pub fn cholesky(m: &SymmetricMatrix) -> Result<Cholesky> {
    let n = m.order;
    let mut l = vec![0.0; m.packed.len()];
    for i in 0..n {
        let row_i = i * (i + 1) / 2;
        for j in 0..=i {
            let row_j = j * (j + 1) / 2;
            let mut sum = m.packed[row_i + j];
            for k in 0..j {
                sum -= l[row_i + k] * l[row_j + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(Error::Numerical(format!(
                        "matrix is not positive definite (pivot {i} = {sum:e})"
                    )));
                }
                l[row_i + i] = sum.sqrt();
            } else {
                l[row_i + j] = sum / l[row_j + j];
            }
        }
    }
    Ok(Cholesky { order: n, packed: l })
}

impl Cholesky {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Entry `L[i][j]` (zero above the diagonal).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.packed[i * (i + 1) / 2 + j]
        }
    }

    /// Writes `L z` into `out`.
    #[inline]
    pub fn lower_mul_into(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.order) {
            let row = &self.packed[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
            *o = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }

    /// Solves `L y = b` in place.
    pub fn forward_substitute(&self, b: &mut [f64]) {
        for i in 0..self.order {
            let row = i * (i + 1) / 2;
            let mut s = b[i];
            for k in 0..i {
                s -= self.packed[row + k] * b[k];
            }
            b[i] = s / self.packed[row + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_substitute(&self, y: &mut [f64]) {
        for i in (0..self.order).rev() {
            let mut s = y[i];
            for k in i + 1..self.order {
                s -= self.packed[k * (k + 1) / 2 + i] * y[k];
            }
            y[i] = s / self.packed[i * (i + 1) / 2 + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_substitute(&mut x);
        self.backward_substitute(&mut x);
        x
    }

    /// Reconstructs `L Lᵀ`.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        SymmetricMatrix::from_fn(self.order, |i, j| (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum())
    }
}

/// Solves `m x = b` for symmetric positive definite `m`.
pub fn solve_spd(m: &SymmetricMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != m.order() {
        return Err(Error::Contract(format!(
            "right-hand side has length {} but matrix has order {}",
            b.len(),
            m.order()
        )));
    }
    Ok(cholesky(m)?.solve(b))
}

/// All eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
pub fn symmetric_eigenvalues(m: &SymmetricMatrix) -> Vec<f64> {
    let n = m.order();
    let mut a = m.to_dense();
    let scale = m.frobenius_norm();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

pub fn symmetric_eigen_min(m: &SymmetricMatrix) -> f64 {
    symmetric_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Fixed-order compensated sum of a slice.
pub fn compensated_sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> SymmetricMatrix {
        let g: Vec<Vec<f64>> = (0..p).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        SymmetricMatrix::from_fn(p, |i, j| {
            let dot: f64 = (0..p).map(|k| g[i][k] * g[j][k]).sum();
            dot + if i == j { 0.1 } else { 0.0 }
        })
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&SymmetricMatrix::identity(4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(l.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn cholesky_hand_factor() {
        let m = SymmetricMatrix::from_dense(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&m).unwrap();
        assert_eq!(l.get(0, 0), 2.0);
        assert_eq!(l.get(1, 0), 1.0);
        assert!((l.get(1, 1) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l.get(0, 1), 0.0);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let m = SymmetricMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(cholesky(&m).is_err());
        let m = SymmetricMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(cholesky(&m).is_err());
    }

    #[test]
    fn cholesky_round_trip_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let p = 1 + trial % 10;
            let m = random_spd(&mut rng, p);
            let back = cholesky(&m).unwrap().reconstruct();
            let mut diff = back.clone();
            for i in 0..p {
                for j in 0..=i {
                    diff.set(i, j, back.get(i, j) - m.get(i, j));
                }
            }
            assert!(diff.frobenius_norm() <= 1e-9 * m.frobenius_norm());
        }
    }

    #[test]
    fn solve_examples() {
        let b = [3.0, -1.0, 2.0];
        assert_eq!(solve_spd(&SymmetricMatrix::identity(3), &b).unwrap(), b.to_vec());
        let x = solve_spd(&SymmetricMatrix::from_diagonal(&[2.0, 4.0]), &[2.0, 4.0]).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-15), "{x:?}");
        assert!(solve_spd(&SymmetricMatrix::identity(2), &[1.0]).is_err());
    }

    #[test]
    fn solve_residual_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..100 {
            let p = 1 + trial % 10;
            let m = random_spd(&mut rng, p);
            let b: Vec<f64> = (0..p).map(|_| rng.random_range(-5.0..5.0)).collect();
            let x = solve_spd(&m, &b).unwrap();
            let r = m.mul_vec(&x);
            let res: f64 = r.iter().zip(&b).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            let bn: f64 = b.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!(res <= 1e-8 * bn, "trial {trial}: residual {res}");
        }
    }

    #[test]
    fn eigen_min_examples() {
        assert!((symmetric_eigen_min(&SymmetricMatrix::identity(3)) - 1.0).abs() < 1e-14);
        assert!((symmetric_eigen_min(&SymmetricMatrix::from_diagonal(&[3.0, -2.0])) + 2.0).abs() < 1e-14);
        let m = SymmetricMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = symmetric_eigenvalues(&m);
        assert!((eig[0] - 1.0).abs() < 1e-12 && (eig[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gram_matrix_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let rows = 3;
            let p = 6;
            let g: Vec<Vec<f64>> = (0..rows).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let m = SymmetricMatrix::from_fn(p, |i, j| (0..rows).map(|k| g[k][i] * g[k][j]).sum());
            assert!(symmetric_eigen_min(&m) >= -1e-10 * m.trace());
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1e16];
        v.extend(std::iter::repeat_n(1.0, 1000));
        v.push(-1e16);
        assert_eq!(compensated_sum(&v), 1000.0);
    }

    #[test]
    fn serde_round_trip_is_dense() {
        let m = SymmetricMatrix::from_dense(&[vec![1.0, 0.5], vec![0.5, 2.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1.0,0.5],[0.5,2.0]]");
        let back: SymmetricMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
