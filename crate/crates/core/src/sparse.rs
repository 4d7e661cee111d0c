//! Complex compressed-row matrices and exact sparse factorizations.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::SolveCore;
use faer::perm::PermRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, IntranodeLbltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SparseRowMatRef, SymbolicSparseColMatRef, SymbolicSparseRowMatRef};
use faer::{Conj, Mat, MatMut, MatRef, Par, Side};
use rayon::prelude::*;

use crate::C64;

#[derive(Debug, thiserror::Error)]
pub enum SparseError {
    #[error("matrix is singular (pivot {0})")]
    Singular(usize),
    #[error("factorization produced non-finite values")]
    NonFinite,
    #[error("factorization failed: {0}")]
    Backend(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    /// Sum duplicate triplets. Entries with equal `(row, col)` are added in
    /// their input order, so the result is independent of thread scheduling
    /// as long as the triplet list is.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.par_sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len() / 4);
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len() / 4);
        let mut last = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn from_dense(rows: &[Vec<C64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let trip = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, v)| v.norm() != 0.0).map(move |(j, &v)| (i, j, v)))
            .collect();
        Self::from_triplets(rows.len(), ncols, trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[C64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    /// Row pointers and column indices.
    pub fn pattern(&self) -> (&[usize], &[usize]) {
        (&self.indptr, &self.indices)
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (idx, val) = self.row(i);
        idx.binary_search(&j).map_or(C64::new(0.0, 0.0), |k| val[k])
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .into_par_iter()
            .map(|i| {
                let (idx, val) = self.row(i);
                idx.iter().zip(val).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    /// `Y = A X` for a block of column vectors.
    pub fn mul_block(&self, x: MatRef<'_, C64>) -> Mat<C64> {
        assert_eq!(x.nrows(), self.ncols);
        let m = x.ncols();
        let rows: Vec<Vec<C64>> = (0..self.nrows)
            .into_par_iter()
            .map(|i| {
                let (idx, val) = self.row(i);
                let mut acc = vec![C64::new(0.0, 0.0); m];
                for (&j, &v) in idx.iter().zip(val) {
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += v * x[(j, c)];
                    }
                }
                acc
            })
            .collect();
        Mat::from_fn(self.nrows, m, |i, c| rows[i][c])
    }

    /// Principal submatrix on the sorted index set `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> CsrMatrix {
        let mut local = vec![usize::MAX; self.ncols];
        for (k, &g) in idx.iter().enumerate() {
            local[g] = k;
        }
        let mut indptr = Vec::with_capacity(idx.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &g in idx {
            let (ci, cv) = self.row(g);
            for (&c, &v) in ci.iter().zip(cv) {
                if local[c] != usize::MAX {
                    indices.push(local[c]);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: idx.len(), ncols: idx.len(), indptr, indices, values }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let trip = (0..self.nrows)
            .flat_map(|i| {
                let (idx, val) = self.row(i);
                idx.iter().zip(val).map(move |(&j, &v)| (j, i, v))
            })
            .collect();
        Self::from_triplets(self.ncols, self.nrows, trip)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `‖A − Aᵀ‖_max / ‖A‖_max` (no conjugation).
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                worst = worst.max((v - self.get(j, i)).norm());
            }
        }
        worst / scale
    }

    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        let mut d = vec![vec![C64::new(0.0, 0.0); self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                row[j] = v;
            }
        }
        d
    }

    /// Exact sparse LU with partial pivoting.
    pub fn lu(&self) -> Result<SparseLu, SparseError> {
        if self.nrows != self.ncols {
            return Err(SparseError::Dimension { expected: self.nrows, got: self.ncols });
        }
        let n = self.nrows;
        if n == 0 {
            return Ok(SparseLu { n, backend: Backend::Empty });
        }
        let sym = SymbolicSparseRowMatRef::new_checked(n, n, &self.indptr, None, &self.indices);
        let mat = SparseRowMatRef::new(sym, &self.values);
        let csc = mat.to_col_major().map_err(|e| SparseError::Backend(format!("{e:?}")))?;
        let lu = csc.sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => SparseError::Singular(index),
            e => SparseError::Backend(format!("{e:?}")),
        })?;
        let out = SparseLu { n, backend: Backend::Lu(Box::new(lu)) };
        if !self.probe_residual(&out).is_finite() {
            return Err(SparseError::NonFinite);
        }
        Ok(out)
    }

    /// Exact factorization of a complex symmetric matrix `A = B + iC` through
    /// the real symmetric indefinite form `[[B, C], [C, −B]]` acting on
    /// `(Re x, −Im x)`, factorized as `P L D Lᵀ Pᵀ` with AMD ordering and
    /// Bunch–Kaufman pivoting inside supernodes. Only the lower triangle of
    /// `A` is read. Falls back to [`Self::lu`] when the matrix is not
    /// symmetric or the pivoting is not accurate enough.
    pub fn factorize(&self) -> Result<SparseLu, SparseError> {
        if self.nrows != self.ncols {
            return Err(SparseError::Dimension { expected: self.nrows, got: self.ncols });
        }
        if self.nrows == 0 {
            return Ok(SparseLu { n: 0, backend: Backend::Empty });
        }
        if self.symmetry_defect() <= 1e-12 {
            if let Some(f) = self.symmetric_factorization() {
                if self.probe_residual(&f) <= 1e-10 {
                    return Ok(f);
                }
            }
        }
        self.lu()
    }

    fn symmetric_factorization(&self) -> Option<SparseLu> {
        let n = self.nrows;
        let m = 2 * n;
        let mut colptr = Vec::with_capacity(m + 1);
        colptr.push(0);
        let mut rows = Vec::with_capacity(2 * self.values.len() + n);
        let mut vals = Vec::with_capacity(2 * self.values.len() + n);
        let mut t: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
        for i in 0..n {
            let (idx, v) = self.row(i);
            for (&j, &z) in idx.iter().zip(v) {
                if i >= j {
                    t[j].push((i, z));
                }
            }
        }
        for (j, col) in t.iter().enumerate() {
            for &(i, z) in col {
                rows.extend([2 * i, 2 * i + 1]);
                vals.extend([z.re, z.im]);
            }
            colptr.push(rows.len());
            for &(i, z) in col {
                if i > j {
                    rows.push(2 * i);
                    vals.push(z.im);
                }
                rows.push(2 * i + 1);
                vals.push(-z.re);
            }
            colptr.push(rows.len());
        }
        let sym = SymbolicSparseColMatRef::new_checked(m, m, &colptr, None, &rows);
        let params = CholeskySymbolicParams {
            supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
            ..Default::default()
        };
        let symbolic = factorize_symbolic_cholesky(sym, Side::Lower, SymmetricOrdering::Amd, params).ok()?;
        let mut values = vec![0.0; symbolic.len_val()];
        let mut subdiag = vec![0.0; m];
        let mut fwd = vec![0usize; m];
        let mut inv = vec![0usize; m];
        let mut buf = MemBuffer::try_new(
            symbolic.factorize_numeric_intranode_lblt_scratch::<f64>(Par::Seq, Default::default()),
        )
        .ok()?;
        symbolic.factorize_numeric_intranode_lblt(
            &mut values,
            &mut subdiag,
            &mut fwd,
            &mut inv,
            SparseColMatRef::new(sym, &vals),
            Side::Lower,
            Par::Seq,
            MemStack::new(&mut buf),
            Default::default(),
        );
        if values.iter().chain(&subdiag).any(|v| !v.is_finite()) {
            return None;
        }
        Some(SparseLu { n, backend: Backend::Lblt(Box::new(Lblt { symbolic, values, subdiag, fwd, inv })) })
    }

    /// `‖A x − b‖ / ‖b‖` for `x = F⁻¹ b` and a fixed probe `b`.
    fn probe_residual(&self, f: &SparseLu) -> f64 {
        let b: Vec<C64> = (0..self.nrows).map(|i| C64::new(1.0 + (i % 7) as f64, 0.5 - (i % 3) as f64)).collect();
        let x = f.solve(&b);
        if x.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let r: Vec<C64> = self.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        norm2(&r) / norm2(&b)
    }
}

struct Lblt {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    subdiag: Vec<f64>,
    fwd: Vec<usize>,
    inv: Vec<usize>,
}

enum Backend {
    Empty,
    Lu(Box<faer::sparse::linalg::solvers::Lu<usize, C64>>),
    Lblt(Box<Lblt>),
}

/// Factorization handle; solves are thread-safe.
pub struct SparseLu {
    n: usize,
    backend: Backend,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.backend {
            Backend::Empty => "empty",
            Backend::Lu(_) => "lu",
            Backend::Lblt(_) => "lblt",
        };
        write!(f, "SparseLu({}, {kind})", self.n)
    }
}

impl SparseLu {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Whether the symmetric indefinite backend is in use.
    pub fn is_symmetric(&self) -> bool {
        matches!(self.backend, Backend::Lblt(_))
    }

    /// Overwrite the columns of `rhs` with `A⁻¹ rhs`.
    pub fn solve_in_place(&self, mut rhs: MatMut<'_, C64>) {
        assert_eq!(rhs.nrows(), self.n);
        match &self.backend {
            Backend::Empty => {}
            Backend::Lu(lu) => lu.solve_in_place_with_conj(Conj::No, rhs),
            Backend::Lblt(f) => {
                let k = rhs.ncols();
                let mut x = Mat::<f64>::from_fn(2 * self.n, k, |r, j| {
                    let z = rhs[(r / 2, j)];
                    if r % 2 == 0 {
                        z.re
                    } else {
                        z.im
                    }
                });
                let perm = PermRef::new_checked(&f.fwd, &f.inv, 2 * self.n);
                let lblt = IntranodeLbltRef::new(&f.symbolic, &f.values, &f.subdiag, perm);
                let mut buf = MemBuffer::new(f.symbolic.solve_in_place_scratch::<f64>(k, Par::Seq));
                lblt.solve_in_place_with_conj(Conj::No, x.as_mut(), Par::Seq, MemStack::new(&mut buf));
                for j in 0..k {
                    for i in 0..self.n {
                        rhs[(i, j)] = C64::new(x[(2 * i, j)], -x[(2 * i + 1, j)]);
                    }
                }
            }
        }
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut m = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.solve_in_place(m.as_mut());
        (0..b.len()).map(|i| m[(i, 0)]).collect()
    }
}

/// Dense LU with partial pivoting; small reference solver for tests and oracles.
pub fn dense_solve(a: &[Vec<C64>], b: &[C64]) -> Option<Vec<C64>> {
    let n = b.len();
    let mut m: Vec<Vec<C64>> = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].norm().total_cmp(&m[j][k].norm()))?;
        if m[p][k].norm() == 0.0 {
            return None;
        }
        m.swap(k, p);
        x.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f.norm() != 0.0 {
                for j in k..n {
                    let t = m[k][j];
                    m[i][j] -= f * t;
                }
                let t = x[k];
                x[i] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        let s: C64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (x[k] - s) / m[k][k];
    }
    Some(x)
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
