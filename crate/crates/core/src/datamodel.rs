//! Core matrix and index types.
//!
//! All of these are immutable once constructed: the constructors check the
//! invariants and there are no `&mut` accessors, so values can be shared
//! freely across threads.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// An `n×d` matrix of instance descriptors, one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::validation(format!(
                "feature matrix must be non-empty, got {n}x{d}"
            )));
        }
        if let Some(((i, j), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::validation(format!(
                "feature matrix entry ({i},{j}) is not finite: {v}"
            )));
        }
        Ok(Self { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// `‖XᵀX − I‖_max`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut gram = self.data.t().dot(&self.data);
        for k in 0..self.d() {
            gram[[k, k]] -= 1.0;
        }
        crate::linalg::max_abs(gram.view())
    }

    /// Whether the columns are orthonormal to within `tol` (max-abs of `XᵀX − I`).
    pub fn is_whitened(&self, tol: f64) -> bool {
        self.n() >= self.d() && self.orthonormality_error() <= tol
    }
}

/// The observed index set Ω of an `n×c` label matrix.
///
/// Stored as a row-major sorted coordinate list plus, for each column, the
/// sorted list of observed rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    rows: usize,
    cols: usize,
    coords: Vec<(usize, usize)>,
    by_column: Vec<Vec<usize>>,
}

impl ObservationMask {
    /// Builds a mask from arbitrary-order coordinates. Duplicates are merged.
    pub fn from_coords<I>(rows: usize, cols: usize, coords: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut list: Vec<(usize, usize)> = Vec::new();
        for (i, j) in coords {
            if i >= rows || j >= cols {
                return Err(Error::validation(format!(
                    "observed index ({i},{j}) out of range for a {rows}x{cols} matrix"
                )));
            }
            list.push((i, j));
        }
        list.sort_unstable();
        list.dedup();
        let mut by_column = vec![Vec::new(); cols];
        for &(i, j) in &list {
            by_column[j].push(i);
        }
        Ok(Self {
            rows,
            cols,
            coords: list,
            by_column,
        })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        let coords: Vec<_> = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .collect();
        Self {
            rows,
            cols,
            coords,
            by_column: vec![(0..rows).collect(); cols],
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            coords: Vec::new(),
            by_column: vec![Vec::new(); cols],
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Observed coordinates, sorted row-major.
    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    /// Sorted observed rows of column `j`.
    pub fn column(&self, j: usize) -> &[usize] {
        &self.by_column[j]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        j < self.cols && self.by_column[j].binary_search(&i).is_ok()
    }

    /// Dense 0/1 indicator matrix of Ω.
    pub fn indicator(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for &(i, j) in &self.coords {
            out[[i, j]] = 1.0;
        }
        out
    }
}

/// `R_Ω(A)`: keeps the entries of `a` indexed by Ω and zeroes the rest.
pub fn apply_observation(a: ArrayView2<'_, f64>, mask: &ObservationMask) -> Result<Array2<f64>> {
    if a.dim() != mask.dim() {
        return Err(Error::validation(format!(
            "mask of shape {:?} does not index a {:?} matrix",
            mask.dim(),
            a.dim()
        )));
    }
    let mut out = Array2::zeros(a.dim());
    for &(i, j) in mask.coords() {
        out[[i, j]] = a[[i, j]];
    }
    Ok(out)
}

/// Observed label matrix Ỹ together with its index set Ω.
///
/// Entries on Ω are 0 or 1; everything off Ω is stored as 0. Ingested data
/// using a −1/+1 convention must be mapped to 0/1 before construction
/// (see [`crate::ingest::binarize_signed`]).
#[derive(Debug, Clone, PartialEq)]
pub struct PartialLabels {
    values: Array2<f64>,
    mask: ObservationMask,
}

impl PartialLabels {
    pub fn new(values: Array2<f64>, mask: ObservationMask) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::validation(format!(
                "label values {:?} and mask {:?} differ in shape",
                values.dim(),
                mask.dim()
            )));
        }
        for ((i, j), &v) in values.indexed_iter() {
            if mask.contains(i, j) {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::validation(format!(
                        "observed label ({i},{j}) = {v} is not in {{0,1}}"
                    )));
                }
            } else if v != 0.0 {
                return Err(Error::validation(format!(
                    "unobserved label ({i},{j}) must be stored as 0, found {v}"
                )));
            }
        }
        Ok(Self { values, mask })
    }

    /// Fully observed labels.
    pub fn from_full(full: Array2<f64>) -> Result<Self> {
        let (n, c) = full.dim();
        Self::new(full, ObservationMask::full(n, c))
    }

    /// Restricts `full` to the entries of `mask`.
    pub fn observe(full: ArrayView2<'_, f64>, mask: ObservationMask) -> Result<Self> {
        let values = apply_observation(full, &mask)?;
        Self::new(values, mask)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn c(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &ObservationMask {
        &self.mask
    }

    /// Number of observed positives in each column.
    pub fn positives_per_column(&self) -> Vec<usize> {
        self.values
            .axis_iter(Axis(1))
            .map(|col| col.iter().filter(|&&v| v == 1.0).count())
            .collect()
    }
}

/// Weighted undirected graph over `n` instances.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    weights: Array2<f64>,
    degree: Array1<f64>,
    edges: Vec<(usize, usize)>,
}

impl SemanticGraph {
    /// Builds a graph from undirected edges `(i, j, w)`. Each pair may appear
    /// in either or both orientations; repeated pairs must agree on the weight.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut weights = Array2::zeros((n, n));
        let mut seen = Array2::from_elem((n, n), false);
        let mut list = Vec::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::validation(format!(
                    "edge ({i},{j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::validation(format!("self-loop at node {i}")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(format!(
                    "edge ({i},{j}) has invalid weight {w}"
                )));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if seen[[a, b]] {
                if weights[[a, b]] != w {
                    return Err(Error::validation(format!(
                        "edge ({a},{b}) listed with conflicting weights {} and {w}",
                        weights[[a, b]]
                    )));
                }
                continue;
            }
            seen[[a, b]] = true;
            weights[[a, b]] = w;
            weights[[b, a]] = w;
            list.push((a, b));
        }
        list.sort_unstable();
        let degree = weights.sum_axis(Axis(1));
        Ok(Self {
            weights,
            degree,
            edges: list,
        })
    }

    /// Graph with no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            weights: Array2::zeros((n, n)),
            degree: Array1::zeros(n),
            edges: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    /// Dense symmetric weight matrix `W_s`.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Diagonal of `D_s`.
    pub fn degree(&self) -> &Array1<f64> {
        &self.degree
    }

    /// Edge list as `(i, j)` with `i < j`, sorted. Edges may carry zero weight.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

/// Linear predictor `M` (`d×c`); predictions are `XM`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    coefficients: Array2<f64>,
}

impl Model {
    pub fn new(coefficients: Array2<f64>) -> Result<Self> {
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(
                "model coefficients contain non-finite values",
            ));
        }
        Ok(Self { coefficients })
    }

    pub fn zeros(d: usize, c: usize) -> Self {
        Self {
            coefficients: Array2::zeros((d, c)),
        }
    }

    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.coefficients
    }

    /// Label scores `XM` for the rows of `x`.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Array2<f64>> {
        if x.d() != self.coefficients.nrows() {
            return Err(Error::validation(format!(
                "model expects {} features, got {}",
                self.coefficients.nrows(),
                x.d()
            )));
        }
        Ok(x.data().dot(&self.coefficients))
    }
}

/// Hyperparameters of the APG solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Nuclear-norm weight λ.
    pub lambda: f64,
    /// Laplacian weight γ_s.
    pub gamma_s: f64,
    /// Initial curvature estimate (inverse step size).
    pub lipschitz_init: f64,
    /// Curvature growth factor applied on a failed line-search trial.
    pub rho: f64,
    /// Relative-decrease stopping tolerance.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Momentum seed θ.
    pub theta_init: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gamma_s: 0.1,
            lipschitz_init: 1.0,
            rho: 2.0,
            epsilon: 1e-4,
            max_iters: 500,
            theta_init: 1.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::validation(what.to_string()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.gamma_s.is_finite() && self.gamma_s >= 0.0) {
            return bad("gamma_s must be finite and >= 0");
        }
        if !(self.lipschitz_init.is_finite() && self.lipschitz_init > 0.0) {
            return bad("lipschitz_init must be finite and > 0");
        }
        if !(self.rho.is_finite() && self.rho > 1.0) {
            return bad("rho must be finite and > 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0,1)");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.theta_init > 0.0 && self.theta_init <= 1.0) {
            return bad("theta_init must lie in (0,1]");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn full_mask_is_identity() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let out = apply_observation(a.view(), &ObservationMask::full(2, 2)).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn empty_mask_zeroes() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let out = apply_observation(a.view(), &ObservationMask::empty(2, 2)).unwrap();
        assert_eq!(out, Array2::<f64>::zeros((2, 2)));
    }

    #[test]
    fn diagonal_mask() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let mask = ObservationMask::from_coords(2, 2, [(1, 1), (0, 0)]).unwrap();
        let out = apply_observation(a.view(), &mask).unwrap();
        assert_eq!(out, array![[1.0, 0.0], [0.0, 4.0]]);
        assert_eq!(mask.coords(), &[(0, 0), (1, 1)]);
        assert_eq!(mask.column(1), &[1]);
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(matches!(
            ObservationMask::from_coords(2, 2, [(2, 0)]),
            Err(Error::Validation(_))
        ));
        let mask = ObservationMask::full(3, 2);
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert!(apply_observation(a.view(), &mask).is_err());
    }

    #[test]
    fn partial_labels_invariants() {
        let mask = ObservationMask::from_coords(2, 2, [(0, 1)]).unwrap();
        assert!(PartialLabels::new(array![[0.0, 1.0], [0.0, 0.0]], mask.clone()).is_ok());
        // nonzero off the mask
        assert!(PartialLabels::new(array![[1.0, 1.0], [0.0, 0.0]], mask.clone()).is_err());
        // non-binary on the mask
        assert!(PartialLabels::new(array![[0.0, 0.5], [0.0, 0.0]], mask).is_err());
    }

    #[test]
    fn feature_matrix_rejects_nan_and_empty() {
        assert!(FeatureMatrix::new(array![[1.0, f64::NAN]]).is_err());
        assert!(FeatureMatrix::new(Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn graph_from_edges_symmetrizes() {
        let g = SemanticGraph::from_edges(3, [(0, 1, 1.0), (1, 0, 1.0), (2, 1, 0.5)]).unwrap();
        assert_eq!(g.weights()[[1, 0]], 1.0);
        assert_eq!(g.weights()[[1, 2]], 0.5);
        assert_eq!(g.degree()[1], 1.5);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(SemanticGraph::from_edges(2, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(SemanticGraph::from_edges(2, [(0, 1, -1.0)]).is_err());
        assert!(SemanticGraph::from_edges(2, [(1, 1, 1.0)]).is_err());
    }

    #[test]
    fn solver_config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            rho: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            theta_init: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
        prop::collection::vec(-10.0..10.0f64, rows * cols)
            .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
    }

    fn mask(rows: usize, cols: usize) -> impl Strategy<Value = ObservationMask> {
        prop::collection::vec(any::<bool>(), rows * cols).prop_map(move |bits| {
            let coords = bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(k, _)| (k / cols, k % cols));
            ObservationMask::from_coords(rows, cols, coords).unwrap()
        })
    }

    proptest! {
        #[test]
        fn observation_is_idempotent(a in matrix(4, 3), m in mask(4, 3)) {
            let once = apply_observation(a.view(), &m).unwrap();
            let twice = apply_observation(once.view(), &m).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn observation_is_linear(
            a in matrix(4, 3),
            b in matrix(4, 3),
            m in mask(4, 3),
            alpha in -3.0..3.0f64,
            beta in -3.0..3.0f64,
        ) {
            let combo = &a * alpha + &b * beta;
            let lhs = apply_observation(combo.view(), &m).unwrap();
            let rhs = apply_observation(a.view(), &m).unwrap() * alpha
                + apply_observation(b.view(), &m).unwrap() * beta;
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
