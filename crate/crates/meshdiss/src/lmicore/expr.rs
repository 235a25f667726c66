//! Affine matrix expressions over matrix decision variables.
//!
//! An expression is `constant + sum_t left_t * op(V_t) * right_t` where `op`
//! is identity or transpose. Everything an LMI in this crate needs (block
//! assembly, congruence by constants, transposition, entry extraction) stays
//! inside this affine family.

use nalgebra::DMatrix;

use super::VarId;

#[derive(Debug, Clone)]
pub struct LinTerm {
    pub left: DMatrix<f64>,
    pub var: VarId,
    pub right: DMatrix<f64>,
    pub transposed: bool,
}

#[derive(Debug, Clone)]
pub struct AffineMatrixExpr {
    pub constant: DMatrix<f64>,
    pub terms: Vec<LinTerm>,
}

impl AffineMatrixExpr {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            constant: DMatrix::zeros(rows, cols),
            terms: Vec::new(),
        }
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            constant: m,
            terms: Vec::new(),
        }
    }

    /// Bare variable occurrence `I * V * I` for a variable of shape (r, c).
    pub fn var(id: VarId, rows: usize, cols: usize) -> Self {
        Self {
            constant: DMatrix::zeros(rows, cols),
            terms: vec![LinTerm {
                left: DMatrix::identity(rows, rows),
                var: id,
                right: DMatrix::identity(cols, cols),
                transposed: false,
            }],
        }
    }

    pub fn rows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn cols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn add(mut self, other: &AffineMatrixExpr) -> Self {
        assert_eq!(
            (self.rows(), self.cols()),
            (other.rows(), other.cols()),
            "expression shapes must match"
        );
        self.constant += &other.constant;
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn sub(self, other: &AffineMatrixExpr) -> Self {
        self.add(&other.clone().scale(-1.0))
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.constant *= s;
        for t in &mut self.terms {
            t.left *= s;
        }
        self
    }

    pub fn neg(self) -> Self {
        self.scale(-1.0)
    }

    /// Left-multiply by a constant matrix.
    pub fn lmul(mut self, a: &DMatrix<f64>) -> Self {
        assert_eq!(a.ncols(), self.rows(), "lmul shape mismatch");
        self.constant = a * &self.constant;
        for t in &mut self.terms {
            t.left = a * &t.left;
        }
        self
    }

    /// Right-multiply by a constant matrix.
    pub fn rmul(mut self, b: &DMatrix<f64>) -> Self {
        assert_eq!(self.cols(), b.nrows(), "rmul shape mismatch");
        self.constant = &self.constant * b;
        for t in &mut self.terms {
            t.right = &t.right * b;
        }
        self
    }

    /// Transpose: (A V B)^T = B^T V^T A^T, realized by swapping the side
    /// factors and flipping the transpose flag.
    pub fn t(self) -> Self {
        Self {
            constant: self.constant.transpose(),
            terms: self
                .terms
                .into_iter()
                .map(|t| LinTerm {
                    left: t.right.transpose(),
                    var: t.var,
                    right: t.left.transpose(),
                    transposed: !t.transposed,
                })
                .collect(),
        }
    }

    /// Symmetric part (E + E^T) / 2.
    pub fn sym(self) -> Self {
        let t = self.clone().t();
        self.add(&t).scale(0.5)
    }

    /// Scalar (1x1) expression selecting entry (r, c).
    pub fn entry(&self, r: usize, c: usize) -> Self {
        let mut er = DMatrix::zeros(1, self.rows());
        er[(0, r)] = 1.0;
        let mut ec = DMatrix::zeros(self.cols(), 1);
        ec[(c, 0)] = 1.0;
        self.clone().lmul(&er).rmul(&ec)
    }

    /// Scalar (1x1) expression for the trace of a square expression.
    pub fn trace(&self) -> Self {
        assert_eq!(
            self.rows(),
            self.cols(),
            "trace requires a square expression"
        );
        let mut out = Self::zero(1, 1);
        for i in 0..self.rows() {
            out = out.add(&self.entry(i, i));
        }
        out
    }

    /// Assemble a block matrix from a grid of expressions. Row heights and
    /// column widths must be consistent across the grid.
    pub fn block(grid: &[Vec<AffineMatrixExpr>]) -> Self {
        assert!(!grid.is_empty() && !grid[0].is_empty());
        let block_rows: Vec<usize> = grid.iter().map(|row| row[0].rows()).collect();
        let block_cols: Vec<usize> = grid[0].iter().map(AffineMatrixExpr::cols).collect();
        let total_r: usize = block_rows.iter().sum();
        let total_c: usize = block_cols.iter().sum();
        let mut out = Self::zero(total_r, total_c);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), block_cols.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, e) in row.iter().enumerate() {
                assert_eq!(
                    e.rows(),
                    block_rows[bi],
                    "block ({bi},{bj}) height mismatch"
                );
                assert_eq!(e.cols(), block_cols[bj], "block ({bi},{bj}) width mismatch");
                // Embed e at (r0, c0) via selector matrices.
                let mut pr = DMatrix::zeros(total_r, e.rows());
                for k in 0..e.rows() {
                    pr[(r0 + k, k)] = 1.0;
                }
                let mut pc = DMatrix::zeros(e.cols(), total_c);
                for k in 0..e.cols() {
                    pc[(k, c0 + k)] = 1.0;
                }
                out = out.add(&e.clone().lmul(&pr).rmul(&pc));
                c0 += e.cols();
            }
            r0 += block_rows[bi];
        }
        out
    }

    /// Evaluate at a full variable assignment (indexed by VarId).
    pub fn eval(&self, assignment: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let v = &assignment[t.var.0];
            let v = if t.transposed {
                v.transpose()
            } else {
                v.clone()
            };
            out += &t.left * v * &t.right;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_and_eval_round_trip() {
        // expr = [[V, I],[I, 0]] with V a 2x2 variable.
        let v = AffineMatrixExpr::var(VarId(0), 2, 2);
        let eye = AffineMatrixExpr::constant(DMatrix::identity(2, 2));
        let zero = AffineMatrixExpr::zero(2, 2);
        let b = AffineMatrixExpr::block(&[vec![v, eye.clone()], vec![eye, zero]]);
        let val = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let out = b.eval(&[val.clone()]);
        assert_eq!(out.view((0, 0), (2, 2)).into_owned(), val);
        assert_eq!(
            out.view((0, 2), (2, 2)).into_owned(),
            DMatrix::identity(2, 2)
        );
        assert_eq!(out.view((2, 2), (2, 2)).into_owned(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn transpose_flips_terms() {
        let v = AffineMatrixExpr::var(VarId(0), 2, 3);
        let t = v.t();
        let val = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(t.eval(&[val.clone()]), val.transpose());
    }

    #[test]
    fn entry_and_trace() {
        let v = AffineMatrixExpr::var(VarId(0), 2, 2);
        let val = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(v.entry(0, 1).eval(&[val.clone()])[(0, 0)], 2.0);
        assert_eq!(v.trace().eval(&[val])[(0, 0)], 5.0);
    }
}
