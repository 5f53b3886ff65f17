//! Block-sparse symmetric matrices and a skyline LDLᵀ factorization.

use nalgebra::{DMatrix, DVector, Matrix3};
use thiserror::Error;

use crate::network::Vec3;

/// Square matrix of dense 3×3 blocks in block-compressed-row layout.
///
/// The sparsity pattern is fixed at construction; every row lists its
/// block columns in ascending order and always contains the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<Matrix3<f64>>,
}

impl BlockSparseMatrix {
    /// Zero matrix with the given block pattern. Each entry of `pattern`
    /// lists the off-diagonal block columns of one block row.
    pub fn with_pattern(pattern: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(pattern.len() + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for (r, nbrs) in pattern.iter().enumerate() {
            let mut row: Vec<usize> = nbrs.iter().copied().chain(std::iter::once(r)).collect();
            row.sort_unstable();
            row.dedup();
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        let blocks = vec![Matrix3::zeros(); cols.len()];
        BlockSparseMatrix {
            row_ptr,
            cols,
            blocks,
        }
    }

    /// Number of block rows.
    pub fn block_dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn dim(&self) -> usize {
        3 * self.block_dim()
    }

    pub fn nnz_blocks(&self) -> usize {
        self.cols.len()
    }

    fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        row.binary_search(&c).ok().map(|k| self.row_ptr[r] + k)
    }

    pub fn block(&self, r: usize, c: usize) -> Option<&Matrix3<f64>> {
        self.slot(r, c).map(|k| &self.blocks[k])
    }

    /// Add `m` into block `(r, c)`. Panics if the block is outside the pattern.
    pub fn add_block(&mut self, r: usize, c: usize, m: &Matrix3<f64>) {
        let k = self
            .slot(r, c)
            .unwrap_or_else(|| panic!("block ({r}, {c}) is not in the sparsity pattern"));
        self.blocks[k] += m;
    }

    /// Iterate `(row, col, block)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &Matrix3<f64>)> {
        (0..self.block_dim()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], &self.blocks[k]))
        })
    }

    pub fn block_neighbors(&self, r: usize) -> &[usize] {
        &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn add_diagonal(&mut self, lambda: f64) {
        for r in 0..self.block_dim() {
            let k = self.slot(r, r).expect("diagonal block always present");
            for i in 0..3 {
                self.blocks[k][(i, i)] += lambda;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.dim());
        for r in 0..self.block_dim() {
            let b = self.block(r, r).expect("diagonal block always present");
            d.extend((0..3).map(|i| b[(i, i)]));
        }
        d
    }

    pub fn mul_blocks(&self, x: &[Vec3]) -> Vec<Vec3> {
        assert_eq!(x.len(), self.block_dim());
        (0..self.block_dim())
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.blocks[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (r, c, b) in self.iter() {
            m.view_mut((3 * r, 3 * c), (3, 3)).copy_from(b);
        }
        m
    }

    /// Largest `|M - Mᵀ|` entry.
    pub fn asymmetry(&self) -> f64 {
        self.iter()
            .map(|(r, c, b)| {
                let t = self
                    .block(c, r)
                    .map(|m| m.transpose())
                    .unwrap_or_else(Matrix3::zeros);
                (b - t).amax()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    /// A pivot fell below the relative threshold: the matrix is (numerically)
    /// rank deficient.
    #[error("rank deficient: pivot {pivot:e} at row {row}")]
    RankDeficient { row: usize, pivot: f64 },
    #[error("non-finite entry during factorization at row {row}")]
    NonFinite { row: usize },
}

/// Pivots smaller than this times the largest diagonal magnitude count
/// as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// `LDLᵀ` of a symmetric matrix stored by rows inside its envelope, after
/// a reverse Cuthill-McKee reordering of the block graph. No pivoting:
/// indefinite matrices factor as long as no pivot vanishes.
#[derive(Debug, Clone)]
pub struct SkylineLdlt {
    /// `perm[new] = old` scalar index.
    perm: Vec<usize>,
    first_col: Vec<usize>,
    row_start: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl SkylineLdlt {
    pub fn factor(m: &BlockSparseMatrix) -> Result<Self, FactorError> {
        let nb = m.block_dim();
        let n = 3 * nb;
        let block_order = reverse_cuthill_mckee(m);
        let mut block_pos = vec![0; nb];
        for (new, &old) in block_order.iter().enumerate() {
            block_pos[old] = new;
        }
        let perm: Vec<usize> = block_order
            .iter()
            .flat_map(|&b| (0..3).map(move |c| 3 * b + c))
            .collect();

        // envelope: first column touched by each scalar row, in the new order
        let mut first_block = (0..nb).collect::<Vec<_>>();
        for (r, c, _) in m.iter() {
            let (nr, nc) = (block_pos[r], block_pos[c]);
            if nc < nr {
                first_block[nr] = first_block[nr].min(nc);
            }
        }
        let first_col: Vec<usize> = (0..n).map(|i| 3 * first_block[i / 3]).collect();
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first_col[i]));
        }
        let mut lower = vec![0.0; row_start[n]];
        let mut diag = vec![0.0; n];
        for (r, c, b) in m.iter() {
            let (nr, nc) = (block_pos[r], block_pos[c]);
            for i in 0..3 {
                for j in 0..3 {
                    let (gi, gj) = (3 * nr + i, 3 * nc + j);
                    if gi == gj {
                        diag[gi] = b[(i, j)];
                    } else if gj < gi {
                        lower[row_start[gi] + gj - first_col[gi]] = b[(i, j)];
                    }
                }
            }
        }

        let scale = diag.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        let threshold = PIVOT_TOLERANCE * scale.max(f64::MIN_POSITIVE);

        for i in 0..n {
            let fi = first_col[i];
            let ri = row_start[i];
            // pass 1: g_ij = a_ij - sum_k g_ik l_jk, stored in place
            for j in fi..i {
                let fj = first_col[j];
                let rj = row_start[j];
                let k0 = fi.max(fj);
                let mut s = lower[ri + j - fi];
                for k in k0..j {
                    s -= lower[ri + k - fi] * lower[rj + k - fj];
                }
                lower[ri + j - fi] = s;
            }
            // pass 2: l_ij = g_ij / d_j and d_i = a_ii - sum_j g_ij l_ij
            let mut d = diag[i];
            for j in fi..i {
                let g = lower[ri + j - fi];
                let l = g / diag[j];
                lower[ri + j - fi] = l;
                d -= g * l;
            }
            if !d.is_finite() {
                return Err(FactorError::NonFinite { row: perm[i] });
            }
            if d.abs() <= threshold {
                return Err(FactorError::RankDeficient {
                    row: perm[i],
                    pivot: d,
                });
            }
            diag[i] = d;
        }

        Ok(SkylineLdlt {
            perm,
            first_col,
            row_start,
            lower,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of negative pivots, i.e. the count of negative eigenvalues.
    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|d| **d < 0.0).count()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        assert_eq!(rhs.len(), n);
        let mut z: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let fi = self.first_col[i];
            let row = &self.lower[self.row_start[i]..self.row_start[i + 1]];
            let s: f64 = row.iter().zip(&z[fi..i]).map(|(l, x)| l * x).sum();
            z[i] -= s;
        }
        for (zi, d) in z.iter_mut().zip(&self.diag) {
            *zi /= d;
        }
        for i in (0..n).rev() {
            let fi = self.first_col[i];
            let xi = z[i];
            let row = &self.lower[self.row_start[i]..self.row_start[i + 1]];
            for (l, zj) in row.iter().zip(&mut z[fi..i]) {
                *zj -= l * xi;
            }
        }
        let mut out = DVector::zeros(n);
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = z[new];
        }
        out
    }

    pub fn solve_blocks(&self, rhs: &[Vec3]) -> Vec<Vec3> {
        let flat =
            DVector::from_iterator(rhs.len() * 3, rhs.iter().flat_map(|v| v.iter().copied()));
        let x = self.solve(&flat);
        x.as_slice()
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect()
    }

    /// Stored entries inside the envelope.
    pub fn profile_size(&self) -> usize {
        self.lower.len()
    }
}

/// Reverse Cuthill-McKee ordering of the block graph, component by component.
fn reverse_cuthill_mckee(m: &BlockSparseMatrix) -> Vec<usize> {
    let nb = m.block_dim();
    let degree: Vec<usize> = (0..nb).map(|r| m.block_neighbors(r).len()).collect();
    let mut visited = vec![false; nb];
    let mut order = Vec::with_capacity(nb);
    let mut by_degree: Vec<usize> = (0..nb).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut head = order.len();
        order.push(seed);
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut nbrs: Vec<usize> = m
                .block_neighbors(v)
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                order.push(w);
            }
        }
    }
    order.reverse();
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random symmetric block matrix on a ring-plus-chords graph.
    fn random_matrix(nb: usize, seed: u64, shift: f64) -> BlockSparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..nb {
            edges.push((i, (i + 1) % nb));
        }
        for _ in 0..nb / 2 {
            let (a, b) = (rng.gen_range(0..nb), rng.gen_range(0..nb));
            if a != b {
                edges.push((a, b));
            }
        }
        let mut pattern = vec![Vec::new(); nb];
        for &(a, b) in &edges {
            pattern[a].push(b);
            pattern[b].push(a);
        }
        let mut m = BlockSparseMatrix::with_pattern(&pattern);
        for &(a, b) in &edges {
            let blk = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            m.add_block(a, b, &blk);
            m.add_block(b, a, &blk.transpose());
        }
        for r in 0..nb {
            let blk = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            m.add_block(r, r, &(blk + blk.transpose()));
        }
        m.add_diagonal(shift);
        m
    }

    #[test]
    fn matches_dense_lu() {
        for (seed, shift) in [(1, 8.0), (2, 0.3), (3, -0.7), (4, 2.5)] {
            let m = random_matrix(9, seed, shift);
            assert!(m.asymmetry() == 0.0);
            let dense = m.to_dense();
            let rhs = DVector::from_fn(m.dim(), |i, _| (i as f64 * 0.37).sin());
            let ldlt = SkylineLdlt::factor(&m).unwrap();
            let x = ldlt.solve(&rhs);
            let reference = dense.clone().lu().solve(&rhs).unwrap();
            let err = (&x - &reference).amax() / reference.amax();
            assert!(err < 1e-9, "seed {seed}: {err}");
            assert!((&dense * &x - &rhs).amax() < 1e-9);
        }
    }

    #[test]
    fn inertia_of_indefinite_matrix() {
        let mut m = BlockSparseMatrix::with_pattern(&[vec![]]);
        m.add_block(0, 0, &Matrix3::from_diagonal(&Vec3::new(2.0, -1.0, 3.0)));
        let f = SkylineLdlt::factor(&m).unwrap();
        assert_eq!(f.negative_pivots(), 1);
    }

    #[test]
    fn detects_singular_matrix() {
        // two nodes joined by one axial spring: rank 1 over 6 dofs
        let mut m = BlockSparseMatrix::with_pattern(&[vec![1], vec![0]]);
        let k = Matrix3::from_diagonal(&Vec3::new(1.0, 0.0, 0.0));
        m.add_block(0, 0, &k);
        m.add_block(1, 1, &k);
        m.add_block(0, 1, &-k);
        m.add_block(1, 0, &-k);
        assert!(matches!(
            SkylineLdlt::factor(&m),
            Err(FactorError::RankDeficient { .. })
        ));
        m.add_diagonal(1e-3);
        assert!(SkylineLdlt::factor(&m).is_ok());
    }

    #[test]
    fn block_multiply_agrees_with_dense() {
        let m = random_matrix(6, 11, 1.0);
        let x: Vec<Vec3> = (0..6)
            .map(|i| Vec3::new(i as f64, 1.0, -0.5 * i as f64))
            .collect();
        let y = m.mul_blocks(&x);
        let flat = DVector::from_iterator(18, x.iter().flat_map(|v| v.iter().copied()));
        let dense = m.to_dense() * flat;
        for (i, v) in y.iter().enumerate() {
            for c in 0..3 {
                assert!((v[c] - dense[3 * i + c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    #[should_panic(expected = "not in the sparsity pattern")]
    fn add_outside_pattern_panics() {
        let mut m = BlockSparseMatrix::with_pattern(&[vec![], vec![]]);
        m.add_block(0, 1, &Matrix3::identity());
    }
}
