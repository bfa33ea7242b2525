use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::MatMut;

/// A fixed square sparsity pattern with a reusable symbolic LU analysis.
///
/// Entries are given as an ordered list of `(row, col)` positions, possibly
/// repeated; numeric values must later be supplied in exactly that order and
/// repeated positions are summed.
pub(crate) struct SparsePattern {
    entries: Vec<(usize, usize)>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu: SymbolicLu<usize>,
}

#[derive(Debug)]
pub(crate) struct FactorError(pub String);

impl SparsePattern {
    pub fn new(n: usize, entries: Vec<(usize, usize)>) -> Result<Self, FactorError> {
        let pairs: Vec<Pair<usize, usize>> = entries.iter().map(|&(row, col)| Pair { row, col }).collect();
        let (symbolic, argsort) =
            SymbolicSparseColMat::try_new_from_indices(n, n, &pairs).map_err(|e| FactorError(format!("{e:?}")))?;
        let lu = SymbolicLu::try_new(symbolic.as_ref()).map_err(|e| FactorError(format!("{e:?}")))?;
        Ok(Self {
            entries,
            symbolic,
            argsort,
            lu,
        })
    }

    pub fn factor(&self, values: &[f64]) -> Result<Lu<usize, f64>, FactorError> {
        assert_eq!(values.len(), self.entries.len(), "value count must match the pattern");
        let a = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, values)
            .map_err(|e| FactorError(format!("{e:?}")))?;
        Lu::try_new_with_symbolic(self.lu.clone(), a.as_ref()).map_err(|e| FactorError(format!("{e:?}")))
    }

    #[cfg(test)]
    fn matvec(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.symbolic.nrows()];
        for (&(r, c), &v) in self.entries.iter().zip(values) {
            y[r] += v * x[c];
        }
        y
    }
}

/// Solves `A x = b` in place with a factorisation from [`SparsePattern::factor`].
pub(crate) fn solve_in_place(lu: &Lu<usize, f64>, b: &mut [f64]) {
    let n = b.len();
    lu.solve_in_place(MatMut::from_column_major_slice_mut(b, n, 1));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        // [[2, 1], [1, 3]] with the (0, 0) entry split in two
        let p = SparsePattern::new(2, vec![(0, 0), (0, 1), (1, 0), (1, 1), (0, 0)]).unwrap();
        let vals = [1.5, 1.0, 1.0, 3.0, 0.5];
        let lu = p.factor(&vals).unwrap();
        let mut b = vec![3.0, 4.0];
        solve_in_place(&lu, &mut b);
        assert!((b[0] - 1.0).abs() < 1e-14 && (b[1] - 1.0).abs() < 1e-14);
        assert_eq!(p.matvec(&vals, &[1.0, 1.0]), vec![3.0, 4.0]);
    }

    #[test]
    fn pattern_reuse_with_new_values() {
        let p = SparsePattern::new(3, vec![(0, 0), (1, 1), (2, 2), (0, 2)]).unwrap();
        for s in [1.0, 2.0, 5.0] {
            let lu = p.factor(&[s, s, s, 1.0]).unwrap();
            let mut b = vec![s + 1.0, s, s];
            solve_in_place(&lu, &mut b);
            for v in b {
                assert!((v - 1.0).abs() < 1e-14);
            }
        }
    }
}
