use ndarray::{Array2, ArrayView2};

use crate::graph::TextGraph;

/// Symmetrically normalized adjacency with self-loops,
/// `D^-1/2 (A + I) D^-1/2`, stored in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdj {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl NormAdj {
    pub fn from_graph(g: &TextGraph) -> Self {
        let lists: Vec<&[usize]> = (0..g.num_nodes())
            .map(|v| g.neighbors(v).expect("node in range"))
            .collect();
        Self::from_neighbor_lists(&lists)
    }

    /// `lists[v]` must be the sorted, loop-free, symmetric neighbor list of `v`.
    pub fn from_neighbor_lists<L: AsRef<[usize]>>(lists: &[L]) -> Self {
        let inv_sqrt: Vec<f64> = lists
            .iter()
            .map(|l| 1.0 / ((l.as_ref().len() + 1) as f64).sqrt())
            .collect();
        let nnz = lists.iter().map(|l| l.as_ref().len() + 1).sum();
        let mut indptr = Vec::with_capacity(lists.len() + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for (v, list) in lists.iter().enumerate() {
            let list = list.as_ref();
            let split = list.partition_point(|&u| u < v);
            let row = list[..split]
                .iter()
                .copied()
                .chain(std::iter::once(v))
                .chain(list[split..].iter().copied());
            for u in row {
                indices.push(u);
                values.push(inv_sqrt[v] * inv_sqrt[u]);
            }
            indptr.push(indices.len());
        }
        Self {
            indptr,
            indices,
            values,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.indptr.len() - 1
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// Sparse-dense product `self * m`.
    pub fn matmul(&self, m: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(m.nrows(), self.num_nodes(), "row count mismatch");
        let mut out = Array2::zeros((self.num_nodes(), m.ncols()));
        for (i, mut out_row) in out.rows_mut().into_iter().enumerate() {
            for (j, a) in self.row(i) {
                out_row.scaled_add(a, &m.row(j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.num_nodes();
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for (j, a) in self.row(i) {
                d[[i, j]] = a;
            }
        }
        d
    }
}
