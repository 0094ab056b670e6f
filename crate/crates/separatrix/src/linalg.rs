//! Banded LU factorization with partial pivoting, plus a minimal CSR matrix.
//!
//! The backward Kolmogorov discretisations produced by [`crate::pde`] are
//! five-point (2D) or three-point (1D) stencils on uniform grids. With
//! lexicographic node ordering the system matrix is banded with bandwidth
//! equal to the inner-axis node count, so a dense-band direct factorization
//! is both simple and fast at the grid sizes used here. Storage follows the
//! LAPACK `dgbtrf` convention: column-major band storage with `kl` extra
//! superdiagonal rows reserved for pivoting fill.

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Used to keep an exact copy of the assembled
/// operator for residual checks and matrix-vector products.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row (column, value) lists. Columns within a row must be
    /// unique; order is preserved.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in rows {
            for (j, v) in row {
                indices.push(j);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix { n, indptr, indices, data }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    /// max_i |A x - b|
    pub fn residual_inf(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut r = vec![0.0; self.n];
        self.matvec(x, &mut r);
        r.iter()
            .zip(b)
            .map(|(ri, bi)| (ri - bi).abs())
            .fold(0.0, f64::max)
    }
}

/// Band matrix in LAPACK `dgbtrf` storage: entry (i, j) lives at
/// `ab[j * ldab + kl + ku + i - j]`, with `ldab = 2*kl + ku + 1`.
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, ldab, ab: vec![0.0; ldab * n] }
    }

    /// Build directly from a CSR matrix whose entries all lie within the band.
    pub fn from_csr(csr: &CsrMatrix, kl: usize, ku: usize) -> Self {
        let mut m = BandMatrix::new(csr.n, kl, ku);
        for i in 0..csr.n {
            let (cols, vals) = csr.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m.set(i, j, v);
            }
        }
        m
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "entry outside band");
        self.ab[j * self.ldab + self.kl + self.ku + i - j] = v;
    }

    /// Factor in place with partial pivoting.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku; // row offset of the diagonal within a stored column
        let mut piv = vec![0usize; n];
        let mut mult = vec![0.0; kl];
        for j in 0..n {
            let km = kl.min(n - 1 - j); // active subdiagonal rows
            // pivot search in column j, rows j..=j+km
            let col = j * ldab + kv;
            let mut p = 0usize;
            let mut pmax = self.ab[col].abs();
            for r in 1..=km {
                let a = self.ab[col + r].abs();
                if a > pmax {
                    pmax = a;
                    p = r;
                }
            }
            if pmax < f64::MIN_POSITIVE {
                return Err(Error::SingularSystem(format!("zero pivot at column {j}")));
            }
            piv[j] = j + p;
            let jend = (j + kv).min(n - 1);
            if p != 0 {
                // swap rows j and j+p across stored columns j..=jend
                for c in j..=jend {
                    let base = c * ldab + kv + j - c;
                    self.ab.swap(base, base + p);
                }
            }
            // multipliers
            let diag = self.ab[col];
            for r in 1..=km {
                self.ab[col + r] /= diag;
            }
            mult[..km].copy_from_slice(&self.ab[col + 1..col + 1 + km]);
            // trailing update
            for c in (j + 1)..=jend {
                let base = c * ldab + kv + j - c;
                let ajc = self.ab[base];
                if ajc != 0.0 {
                    let seg = &mut self.ab[base + 1..base + 1 + km];
                    for (s, &m) in seg.iter_mut().zip(&mult[..km]) {
                        *s -= m * ajc;
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, ldab, ab: self.ab, piv })
    }
}

/// Factored band matrix; solves by forward/back substitution.
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        // L solve with pivoting
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            if km > 0 {
                let bj = b[j];
                if bj != 0.0 {
                    let col = j * ldab + kv + 1;
                    for r in 0..km {
                        b[j + 1 + r] -= self.ab[col + r] * bj;
                    }
                }
            }
        }
        // U solve; entry (i, j) with i < j sits at ab[j*ldab + kv - (j - i)]
        for j in (0..n).rev() {
            let col = j * ldab + kv;
            b[j] /= self.ab[col];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    b[i] -= self.ab[col - (j - i)] * bj;
                }
            }
        }
    }
}

/// Solve `B x = b` for a weakly diagonally dominant M-matrix by
/// cancellation-free (GTH-style) elimination without pivoting.
///
/// `B` is given by its off-diagonal entries (all ≤ 0) in row-major band
/// storage — entry (i, j), j ≠ i, at `off[i*(2m+1) + (j − i + m)]` — and by
/// the row sums `absorption[i] = Σ_j B_ij ≥ 0`. The diagonal is implied:
/// `B_ii = absorption[i] − Σ_{j≠i} B_ij`, and the same identity is used for
/// every pivot, so no subtraction ever occurs: eliminations only add
/// same-signed terms. The computed solution therefore carries high
/// componentwise relative accuracy regardless of the condition number, which
/// is what makes weak-noise mean-passage-time solves (solution entries of
/// order e^150 from a right-hand side of order 1) possible in f64.
///
/// `rhs` must be nonnegative.
pub fn solve_m_matrix_banded(
    m: usize,
    mut off: Vec<f64>,
    mut absorption: Vec<f64>,
    mut rhs: Vec<f64>,
) -> Result<Vec<f64>> {
    let n = absorption.len();
    let w = 2 * m + 1;
    debug_assert_eq!(off.len(), w * n);
    debug_assert_eq!(rhs.len(), n);
    let mut pivots = vec![0.0; n];
    for k in 0..n {
        let hi = (k + m).min(n - 1);
        // the diagonal of the reduced matrix, assembled from positives only
        let mut pivot = absorption[k];
        for j in (k + 1)..=hi {
            pivot += -off[k * w + (j - k + m)];
        }
        if !(pivot > 0.0) {
            return Err(Error::SingularSystem(format!("non-positive pivot at node {k}")));
        }
        pivots[k] = pivot;
        for i in (k + 1)..=hi {
            let bik = off[i * w + (k + m - i)];
            if bik == 0.0 {
                continue;
            }
            let f = -bik / pivot; // ≥ 0
            for j in (k + 1)..=hi {
                if j == i {
                    continue; // diagonal stays implied
                }
                let bkj = off[k * w + (j - k + m)];
                if bkj != 0.0 {
                    off[i * w + (j + m - i)] += f * bkj;
                }
            }
            absorption[i] += f * absorption[k];
            rhs[i] += f * rhs[k];
        }
    }
    // back substitution, again sums of nonnegative terms throughout
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let hi = (k + m).min(n - 1);
        let mut acc = rhs[k];
        for j in (k + 1)..=hi {
            acc += -off[k * w + (j - k + m)] * x[j];
        }
        x[k] = acc / pivots[k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        // Gaussian elimination with partial pivoting, oracle only.
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for j in 0..n {
            let p = (j..n).max_by(|&r, &s| m[r][j].abs().total_cmp(&m[s][j].abs())).unwrap();
            m.swap(j, p);
            x.swap(j, p);
            for i in (j + 1)..n {
                let f = m[i][j] / m[j][j];
                for c in j..n {
                    m[i][c] -= f * m[j][c];
                }
                x[i] -= f * x[j];
            }
        }
        for j in (0..n).rev() {
            x[j] /= m[j][j];
            for i in 0..j {
                x[i] -= m[i][j] * x[j];
                m[i][j] = 0.0;
            }
        }
        x
    }

    #[test]
    fn band_lu_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1usize, 0usize, 0usize), (5, 1, 1), (20, 3, 3), (40, 5, 2)] {
            let mut dense = vec![vec![0.0; n]; n];
            let mut band = BandMatrix::new(n, kl, ku);
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
            for i in 0..n {
                for j in 0..n {
                    if i + ku >= j && j + kl >= i {
                        let v: f64 = rng.gen_range(-1.0..1.0);
                        // keep the system comfortably nonsingular
                        let v = if i == j { v + 4.0 } else { v };
                        dense[i][j] = v;
                        band.set(i, j, v);
                        rows[i].push((j, v));
                    }
                }
            }
            let csr = CsrMatrix::from_rows(rows);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lu = band.factor().unwrap();
            let mut x = b.clone();
            lu.solve_in_place(&mut x);
            let xref = dense_solve(&dense, &b);
            for (a, r) in x.iter().zip(&xref) {
                assert!((a - r).abs() < 1e-10, "n={n} kl={kl} ku={ku}: {a} vs {r}");
            }
            assert!(csr.residual_inf(&x, &b) < 1e-10);
        }
    }

    #[test]
    fn m_matrix_solver_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, m) in &[(6usize, 1usize), (25, 2), (40, 3)] {
            let w = 2 * m + 1;
            let mut off = vec![0.0; w * n];
            let mut absorption = vec![0.0; n];
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i.saturating_sub(m)..(i + m + 1).min(n) {
                    if j != i {
                        let v: f64 = -rng.gen_range(0.0..1.0);
                        off[i * w + (j + m - i)] = v;
                        dense[i][j] = v;
                    }
                }
                // strictly positive absorption keeps the oracle comparison easy
                absorption[i] = rng.gen_range(0.1..1.0);
                dense[i][i] =
                    absorption[i] - (0..n).filter(|&j| j != i).map(|j| dense[i][j]).sum::<f64>();
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let x = solve_m_matrix_banded(m, off, absorption, b.clone()).unwrap();
            let xref = dense_solve(&dense, &b);
            for (a, r) in x.iter().zip(&xref) {
                assert!((a - r).abs() < 1e-10 * r.abs().max(1.0), "{a} vs {r}");
            }
        }
    }

    #[test]
    fn m_matrix_solver_is_componentwise_accurate_on_a_stiff_chain() {
        // Absorbing birth–death chain with strong downhill bias: from node k,
        // rate p up, rate q down, absorption only past the top node. The
        // expected hitting count solution spans ~60 orders of magnitude; the
        // recurrence oracle below is itself cancellation-free.
        let n = 60;
        let (p, q) = (1.0e-1, 1.0e2); // up / down
        let m = 1;
        let w = 3;
        let mut off = vec![0.0; w * n];
        let mut absorption = vec![0.0; n];
        for i in 0..n {
            if i > 0 {
                off[i * w] = -q;
            }
            if i + 1 < n {
                off[i * w + 2] = -p;
            } else {
                absorption[i] = p; // absorbed above the top
            }
        }
        // oracle: x[k] = E[time to absorption]·(unit rates), from the standard
        // forward recurrence on the increments d[k] = x[k] − x[k+1] (all sums
        // of positive terms, so accurate to machine relative precision)
        //   d[k] = (1 + q·d[k−1]) / p,  d[-1] term absent at k = 0
        let mut d = vec![0.0; n];
        d[0] = 1.0 / p;
        for k in 1..n {
            d[k] = (1.0 + q * d[k - 1]) / p;
        }
        let mut xref = vec![0.0; n];
        for k in (0..n).rev() {
            xref[k] = if k + 1 < n { xref[k + 1] } else { 0.0 } + d[k];
        }
        let x = solve_m_matrix_banded(m, off, absorption, vec![1.0; n]).unwrap();
        assert!(x[0] > 1e50, "chain not stiff enough to exercise the claim: {}", x[0]);
        for (a, r) in x.iter().zip(&xref) {
            assert!(((a - r) / r).abs() < 1e-12, "{a} vs {r}");
        }
    }

    #[test]
    fn m_matrix_solver_rejects_a_dead_end() {
        // no absorption anywhere → singular
        let n = 4;
        let m = 1;
        let mut off = vec![0.0; 3 * n];
        for i in 0..n {
            if i > 0 {
                off[i * 3] = -1.0;
            }
            if i + 1 < n {
                off[i * 3 + 2] = -1.0;
            }
        }
        assert!(solve_m_matrix_banded(m, off, vec![0.0; n], vec![1.0; n]).is_err());
    }

    #[test]
    fn band_lu_pivots_on_zero_diagonal() {
        // [[0, 1], [1, 0]] requires a row swap.
        let mut m = BandMatrix::new(2, 1, 1);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        let lu = m.factor().unwrap();
        let mut b = vec![2.0, 3.0];
        lu.solve_in_place(&mut b);
        assert!((b[0] - 3.0).abs() < 1e-14 && (b[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut m = BandMatrix::new(2, 1, 1);
        m.set(0, 0, 1.0);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        m.set(1, 1, 1.0);
        assert!(m.factor().is_err());
    }
}
