use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

/// A square linear map with access to its transpose.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply_into(&self, x: &DVector<f64>, out: &mut DVector<f64>);

    fn apply_transpose_into(&self, x: &DVector<f64>, out: &mut DVector<f64>);

    /// Dense copy, for oracles and small problems.
    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        let mut col = DVector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            out.set_column(j, &col);
            e[j] = 0.0;
        }
        out
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles an `n x n` matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> Self {
        let pattern = CsrPattern::new(n, triplets.iter().map(|&(r, c, _)| (r, c)));
        pattern.assemble(triplets.iter().map(|t| t.2))
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()].binary_search(&col).map(|k| self.values[range.start + k]).unwrap_or(0.0)
    }
}

/// A CSR sparsity pattern together with the slot each triplet of a fixed
/// assembly order lands in. Lets problems whose Jacobian structure does not
/// depend on the state skip sorting on every linearization.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    slots: Vec<usize>,
}

impl CsrPattern {
    pub fn new(n: usize, coords: impl ExactSizeIterator<Item = (usize, usize)>) -> Self {
        let coords: Vec<(usize, usize)> = coords.collect();
        let mut counts = vec![0usize; n + 1];
        for &(r, c) in &coords {
            assert!(r < n && c < n, "entry ({r}, {c}) outside a {n}x{n} matrix");
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        // Bucket by row, then sort and merge each (short) row.
        let mut next = counts.clone();
        let mut entries = vec![(0usize, 0usize); coords.len()];
        for (k, &(r, c)) in coords.iter().enumerate() {
            entries[next[r]] = (c, k);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx: Vec<usize> = Vec::with_capacity(coords.len());
        let mut slots = vec![0usize; coords.len()];
        row_ptr.push(0);
        for i in 0..n {
            let row = &mut entries[counts[i]..counts[i + 1]];
            row.sort_unstable();
            let row_start = col_idx.len();
            for &(c, k) in row.iter() {
                if col_idx.len() == row_start || *col_idx.last().unwrap() != c {
                    col_idx.push(c);
                }
                slots[k] = col_idx.len() - 1;
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, slots }
    }

    /// Number of triplets the pattern was built from.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Sums `values`, given in the pattern's triplet order, into a matrix.
    pub fn assemble(&self, values: impl IntoIterator<Item = f64>) -> CsrMatrix {
        let mut out = vec![0.0; self.col_idx.len()];
        let mut count = 0;
        for (&slot, v) in self.slots.iter().zip(values) {
            out[slot] += v;
            count += 1;
        }
        assert_eq!(count, self.slots.len(), "value count does not match the pattern");
        CsrMatrix { n: self.n, row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone(), values: out }
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let x = x.as_slice();
        for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            *o = self.col_idx[range.clone()].iter().zip(&self.values[range]).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    fn apply_transpose_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let out = out.as_mut_slice();
        out.fill(0.0);
        for (i, &xi) in x.as_slice().iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            for (&c, &v) in self.col_idx[range.clone()].iter().zip(&self.values[range]) {
                out[c] += v * xi;
            }
        }
    }
}

/// Dense matrix wrapper.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.0.mul_to(x, out);
    }

    fn apply_transpose_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.0.tr_mul_to(x, out);
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.0.clone()
    }
}

/// A Jacobian frozen at a linearization point, counting every product.
///
/// Counters use interior mutability, so a handle is not shared across threads.
pub struct JacobianHandle {
    op: Box<dyn LinearOperator>,
    t: f64,
    y: DVector<f64>,
    matvecs: Cell<usize>,
    tmatvecs: Cell<usize>,
}

impl JacobianHandle {
    pub fn new(op: Box<dyn LinearOperator>, t: f64, y: DVector<f64>) -> Self {
        Self { op, t, y, matvecs: Cell::new(0), tmatvecs: Cell::new(0) }
    }

    pub fn from_dense(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        Self::new(Box::new(DenseOperator(m)), 0.0, DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn point(&self) -> (f64, &DVector<f64>) {
        (self.t, &self.y)
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.matvecs.set(self.matvecs.get() + 1);
        self.op.apply_into(x, out);
    }

    pub fn apply_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.apply_transpose_into(x, &mut out);
        out
    }

    pub fn apply_transpose_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.tmatvecs.set(self.tmatvecs.get() + 1);
        self.op.apply_transpose_into(x, out);
    }

    pub fn matvecs(&self) -> usize {
        self.matvecs.get()
    }

    pub fn tmatvecs(&self) -> usize {
        self.tmatvecs.get()
    }

    /// Dense copy of the operator; does not touch the counters.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.op.to_dense()
    }

    pub fn operator(&self) -> &dyn LinearOperator {
        self.op.as_ref()
    }
}

impl std::fmt::Debug for JacobianHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JacobianHandle")
            .field("dim", &self.dim())
            .field("t", &self.t)
            .field("matvecs", &self.matvecs.get())
            .field("tmatvecs", &self.tmatvecs.get())
            .finish()
    }
}
