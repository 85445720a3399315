//! Per-instance semantic descriptors.
//!
//! A descriptor is the concatenation of a *global* part (scores of the source
//! concepts most relevant to the target labels, ranked by mutual information)
//! and a *local* part (the average observed label vector of the instance's
//! visual neighbors). This module also hosts PCA whitening of the features.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::datamodel::{FeatureMatrix, PartialLabels};
use crate::error::{Error, Result};
use crate::ingest::DatasetBundle;
use crate::linalg;

pub const DEFAULT_BINS: usize = 16;
pub const DEFAULT_K_V: usize = 50;

/// Singular values below this fraction of the largest are treated as zero
/// when whitening.
const RANK_TOL: f64 = 1e-10;

/// PCA whitening fitted on a training matrix.
///
/// `transform(x) = (x − mean)·P` where `P = V_{d'}·Σ_{d'}⁻¹`, so the fitted
/// matrix maps onto the leading left singular vectors of its centered form
/// and has orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    mean: Array1<f64>,
    projection: Array2<f64>,
    /// Value of the appended constant column, if any.
    intercept: Option<f64>,
}

impl Whitener {
    /// Keeps the fewest principal components whose cumulative squared
    /// singular values reach `energy_fraction` of the total.
    pub fn fit(x: &FeatureMatrix, energy_fraction: f64) -> Result<Self> {
        if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
            return Err(Error::validation(format!(
                "energy fraction must lie in (0,1], got {energy_fraction}"
            )));
        }
        let n = x.n();
        if n < 2 {
            return Err(Error::validation("whitening needs at least two instances"));
        }
        let mean = x.data().mean_axis(Axis(0)).expect("n >= 2");
        let centered = x.data() - &mean;
        let dec = linalg::svd(centered.view())?;
        let sv = &dec.singular_values;
        let top = sv.first().copied().unwrap_or(0.0);
        let usable = sv.iter().take_while(|&&v| v > RANK_TOL * top).count();
        if top == 0.0 || usable == 0 {
            return Err(Error::validation(
                "features have no variance after centering; nothing to whiten",
            ));
        }
        let energies: Vec<f64> = sv.iter().map(|v| v * v).collect();
        let total: f64 = energies.iter().sum();
        let mut cumulative = 0.0;
        let mut keep = usable;
        for (k, e) in energies.iter().take(usable).enumerate() {
            cumulative += e;
            if cumulative >= energy_fraction * total {
                keep = k + 1;
                break;
            }
        }
        let mut projection = dec.vt.slice(s![..keep, ..]).t().to_owned();
        for (mut col, &sigma) in projection.axis_iter_mut(Axis(1)).zip(sv.iter()) {
            col.mapv_inplace(|v| v / sigma);
        }
        Ok(Self {
            mean,
            projection,
            intercept: None,
        })
    }

    /// Appends a constant column `1/√n_fit` to the output. Since the whitened
    /// columns are centered on the fitted data, the result stays orthonormal
    /// there and lets a linear model carry an offset.
    pub fn with_intercept(mut self, n_fit: usize) -> Self {
        self.intercept = Some(1.0 / (n_fit as f64).sqrt());
        self
    }

    /// Number of retained principal components.
    pub fn components(&self) -> usize {
        self.projection.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.components() + usize::from(self.intercept.is_some())
    }

    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.d() != self.mean.len() {
            return Err(Error::validation(format!(
                "whitener was fitted on {} features, got {}",
                self.mean.len(),
                x.d()
            )));
        }
        let projected = (x.data() - &self.mean).dot(&self.projection);
        let out = match self.intercept {
            Some(value) => {
                let ones = Array2::from_elem((x.n(), 1), value);
                concatenate(Axis(1), &[projected.view(), ones.view()]).expect("same rows")
            }
            None => projected,
        };
        FeatureMatrix::new(out)
    }
}

/// Whitens `x` onto its leading principal directions; the output has
/// orthonormal columns.
pub fn whiten_features(x: &FeatureMatrix, energy_fraction: f64) -> Result<FeatureMatrix> {
    Whitener::fit(x, energy_fraction)?.transform(x)
}

fn bin_index(v: f64, min: f64, width: f64, bins: usize) -> usize {
    if width <= 0.0 {
        return 0;
    }
    (((v - min) / width) as usize).min(bins - 1)
}

/// Histogram estimate of the mutual information (in nats) between a
/// continuous score and a binary label.
///
/// Scores are cut into `bins` equal-width bins over `[min, max]`.
pub fn mutual_information(
    score: ArrayView1<'_, f64>,
    label: ArrayView1<'_, f64>,
    bins: usize,
) -> Result<f64> {
    let n = score.len();
    if n < 2 {
        return Err(Error::validation(
            "mutual information needs at least two samples",
        ));
    }
    if label.len() != n {
        return Err(Error::validation(format!(
            "score has {n} entries, label has {}",
            label.len()
        )));
    }
    if bins == 0 {
        return Err(Error::validation("bins must be positive"));
    }
    let (min, max) = score
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::validation("score contains non-finite values"));
    }
    let width = (max - min) / bins as f64;
    let mut joint = vec![[0usize; 2]; bins];
    for (&v, &y) in score.iter().zip(label.iter()) {
        let b = if y == 1.0 {
            1
        } else if y == 0.0 {
            0
        } else {
            return Err(Error::validation(format!("label value {y} is not binary")));
        };
        joint[bin_index(v, min, width, bins)][b] += 1;
    }
    let total = n as f64;
    let mut label_marginal = [0usize; 2];
    for row in &joint {
        label_marginal[0] += row[0];
        label_marginal[1] += row[1];
    }
    let mut mi = 0.0;
    for row in &joint {
        let bin_count = row[0] + row[1];
        for b in 0..2 {
            let count = row[b];
            if count == 0 {
                continue;
            }
            // p(a,b)·ln(p(a,b) / (p(a)p(b))) with counts
            let ratio = (count as f64 * total) / (bin_count as f64 * label_marginal[b] as f64);
            mi += (count as f64 / total) * ratio.ln();
        }
    }
    Ok(mi.max(0.0))
}

/// Relevance `R_i = Σ_j I(score_i; label_j)` of each concept, using the
/// stored label values (unobserved entries count as 0).
pub fn concept_relevance(
    scores: ArrayView2<'_, f64>,
    labels: &PartialLabels,
    bins: usize,
) -> Result<Vec<f64>> {
    if scores.nrows() != labels.n() {
        return Err(Error::validation(format!(
            "scores have {} rows, labels {}",
            scores.nrows(),
            labels.n()
        )));
    }
    let values = labels.values();
    (0..scores.ncols())
        .into_par_iter()
        .map(|i| {
            let col = scores.column(i);
            let mut total = 0.0;
            for label in values.axis_iter(Axis(1)) {
                total += mutual_information(col, label, bins)?;
            }
            Ok(total)
        })
        .collect()
}

/// Indices of the `s_tilde` most relevant concepts, most relevant first.
/// Ties go to the lower index.
pub fn select_concepts(
    scores: ArrayView2<'_, f64>,
    labels: &PartialLabels,
    s_tilde: usize,
    bins: usize,
) -> Result<Vec<usize>> {
    if s_tilde > scores.ncols() {
        return Err(Error::validation(format!(
            "cannot select {s_tilde} of {} concepts",
            scores.ncols()
        )));
    }
    let relevance = concept_relevance(scores, labels, bins)?;
    let mut order: Vec<usize> = (0..relevance.len()).collect();
    order.sort_by(|&a, &b| relevance[b].total_cmp(&relevance[a]).then(a.cmp(&b)));
    order.truncate(s_tilde);
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborMetric {
    #[default]
    Euclidean,
    /// Larger inner product means closer; the stored distance is `−xᵢᵀxⱼ`.
    DotProduct,
}

impl std::str::FromStr for NeighborMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(NeighborMetric::Euclidean),
            "dot-product" => Ok(NeighborMetric::DotProduct),
            other => Err(Error::validation(format!(
                "unknown metric '{other}' (expected euclidean or dot-product)"
            ))),
        }
    }
}

impl std::fmt::Display for NeighborMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NeighborMetric::Euclidean => "euclidean",
            NeighborMetric::DotProduct => "dot-product",
        })
    }
}

/// Exact k-nearest-neighbor lists, one per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    k: usize,
    /// `(neighbor id, distance)` sorted by distance, then id.
    lists: Vec<Vec<(usize, f64)>>,
}

impl NeighborIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.lists[i]
    }

    pub fn ids(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.lists[i].iter().map(|&(j, _)| j)
    }
}

fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, metric: NeighborMetric) -> f64 {
    match metric {
        NeighborMetric::Euclidean => a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        NeighborMetric::DotProduct => -a.dot(&b),
    }
}

/// Brute-force top-`k` neighbors of every row, excluding the row itself.
pub fn find_neighbors(
    x: ArrayView2<'_, f64>,
    k: usize,
    metric: NeighborMetric,
) -> Result<NeighborIndex> {
    let n = x.nrows();
    if k == 0 || k >= n {
        return Err(Error::validation(format!(
            "neighbor count k = {k} must satisfy 0 < k < n = {n}"
        )));
    }
    let lists = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = x.row(i);
            let mut cand: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, distance(row, x.row(j), metric)))
                .collect();
            cand.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            cand.truncate(k);
            cand
        })
        .collect();
    Ok(NeighborIndex { k, lists })
}

/// Average of the observed label rows of each instance's neighbors
/// (unobserved entries contribute 0).
pub fn local_descriptor(
    neighbors: &NeighborIndex,
    labels: &PartialLabels,
    k_v: usize,
) -> Result<Array2<f64>> {
    if k_v == 0 {
        return Err(Error::validation("k_v must be positive"));
    }
    let values = labels.values();
    let mut out = Array2::zeros((neighbors.len(), labels.c()));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let list = neighbors.neighbors(i);
        if list.len() != k_v {
            return Err(Error::validation(format!(
                "instance {i} has {} neighbors, expected {k_v}",
                list.len()
            )));
        }
        for &(j, _) in list {
            if j >= labels.n() {
                return Err(Error::validation(format!(
                    "neighbor id {j} out of range for {} labelled instances",
                    labels.n()
                )));
            }
            row += &values.row(j);
        }
        row.mapv_inplace(|v| v / k_v as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticDescriptors {
    /// Scores of the selected concepts (`n×s̃`).
    pub global: Array2<f64>,
    /// Pooled neighbor labels (`n×c`).
    pub local: Array2<f64>,
    /// `[global, local]` (`n×(s̃+c)`).
    pub combined: Array2<f64>,
    /// Selected concept columns, most relevant first.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorConfig {
    /// Number of concepts to keep; `None` means `⌈c/2⌉`.
    pub s_tilde: Option<usize>,
    pub k_v: usize,
    pub bins: usize,
    pub metric: NeighborMetric,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            s_tilde: None,
            k_v: DEFAULT_K_V,
            bins: DEFAULT_BINS,
            metric: NeighborMetric::Euclidean,
        }
    }
}

impl DescriptorConfig {
    pub fn resolved_s_tilde(&self, c: usize) -> usize {
        self.s_tilde.unwrap_or(c.div_ceil(2))
    }
}

/// Global + local descriptors of the training instances in `bundle`.
///
/// Neighbors are searched among the training instances only, so no test
/// label reaches a descriptor.
pub fn build_descriptors(
    bundle: &DatasetBundle,
    config: &DescriptorConfig,
) -> Result<SemanticDescriptors> {
    let labels = &bundle.labels;
    let n = labels.n();
    let s_tilde = match &bundle.concept_scores {
        Some(_) => config.resolved_s_tilde(labels.c()),
        None => 0,
    };
    let (global, selected) = match (&bundle.concept_scores, s_tilde) {
        (Some(scores), k) if k > 0 => {
            let selected = select_concepts(scores.view(), labels, k, config.bins)?;
            (scores.select(Axis(1), &selected), selected)
        }
        _ => (Array2::zeros((n, 0)), Vec::new()),
    };
    let neighbors = find_neighbors(bundle.low_dim_features.view(), config.k_v, config.metric)?;
    let local = local_descriptor(&neighbors, labels, config.k_v)?;
    let combined = concatenate(Axis(1), &[global.view(), local.view()]).expect("same rows");
    Ok(SemanticDescriptors {
        global,
        local,
        combined,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::ObservationMask;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
    }

    #[test]
    fn whitening_keeps_orthonormal_input() {
        let x = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] * 0.5;
        let fm = FeatureMatrix::new(x.clone()).unwrap();
        let w = whiten_features(&fm, 1.0).unwrap();
        assert_eq!(w.d(), 2);
        assert!(w.orthonormality_error() < 1e-12);
        // same column space: projecting x onto span(w) reproduces x
        let proj = w.data().dot(&w.data().t().dot(&x));
        assert!(linalg::max_abs((&proj - &x).view()) < 1e-12);
    }

    #[test]
    fn whitening_single_component() {
        let fm = FeatureMatrix::new(array![[2.0, 0.0], [0.0, 0.0], [-2.0, 0.0]]).unwrap();
        let w = whiten_features(&fm, 0.9).unwrap();
        assert_eq!(w.d(), 1);
    }

    #[test]
    fn whitening_dimension_matches_energy_scan() {
        let x = gaussian(50, 10, 17);
        // oracle: eigenvalues of the centered Gram matrix are σ²
        let mean = x.mean_axis(Axis(0)).unwrap();
        let centered = &x - &mean;
        let mut ev = linalg::symmetric_eigenvalues(centered.t().dot(&centered).view());
        ev.reverse();
        let total: f64 = ev.iter().sum();
        let mut acc = 0.0;
        let mut expected = 0;
        for (k, e) in ev.iter().enumerate() {
            acc += e;
            if acc >= 0.9 * total {
                expected = k + 1;
                break;
            }
        }
        let w = whiten_features(&FeatureMatrix::new(x).unwrap(), 0.9).unwrap();
        assert_eq!(w.d(), expected);
        assert!(w.orthonormality_error() < 1e-8);
    }

    #[test]
    fn whitening_constant_input_errors() {
        let fm = FeatureMatrix::new(Array2::from_elem((4, 3), 2.0)).unwrap();
        assert!(whiten_features(&fm, 0.9).is_err());
    }

    #[test]
    fn intercept_column_stays_orthonormal() {
        let x = FeatureMatrix::new(gaussian(40, 6, 2)).unwrap();
        let w = Whitener::fit(&x, 0.95).unwrap().with_intercept(40);
        let out = w.transform(&x).unwrap();
        assert_eq!(out.d(), w.output_dim());
        assert!(out.orthonormality_error() < 1e-10);
    }

    #[test]
    fn mi_of_identical_binary_variables_is_ln2() {
        let a = array![0.0, 0.0, 1.0, 1.0];
        let mi = mutual_information(a.view(), a.view(), 2).unwrap();
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mi_of_constant_score_is_zero() {
        let mi = mutual_information(
            array![5.0, 5.0, 5.0, 5.0].view(),
            array![0.0, 1.0, 0.0, 1.0].view(),
            16,
        )
        .unwrap();
        assert_eq!(mi, 0.0);
    }

    #[test]
    fn mi_hand_counted() {
        // bins: {0.1,0.2} -> 0, {0.8,0.9} -> 1; joint counts (0,0)=2, (1,1)=2
        // MI = 2 · (2/4)·ln((2/4)/((2/4)(2/4))) = ln 2
        let mi = mutual_information(
            array![0.1, 0.2, 0.8, 0.9].view(),
            array![0.0, 0.0, 1.0, 1.0].view(),
            2,
        )
        .unwrap();
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mi_input_errors() {
        assert!(mutual_information(array![1.0].view(), array![1.0].view(), 2).is_err());
        assert!(mutual_information(array![1.0, 2.0].view(), array![1.0, 0.5].view(), 2).is_err());
    }

    #[test]
    fn select_picks_duplicated_label() {
        let labels_full = array![[1.0], [0.0], [1.0], [0.0], [1.0], [1.0]];
        let labels = PartialLabels::from_full(labels_full.clone()).unwrap();
        let mut scores = Array2::from_elem((6, 5), 3.0);
        scores.column_mut(0).assign(&labels_full.column(0));
        assert_eq!(
            select_concepts(scores.view(), &labels, 1, 4).unwrap(),
            vec![0]
        );
        let all = select_concepts(scores.view(), &labels, 5, 4).unwrap();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert!(select_concepts(scores.view(), &labels, 6, 4).is_err());
    }

    #[test]
    fn neighbors_on_a_line() {
        let x = array![[0.0], [1.0], [10.0]];
        let idx = find_neighbors(x.view(), 1, NeighborMetric::Euclidean).unwrap();
        let ids: Vec<usize> = (0..3).map(|i| idx.ids(i).next().unwrap()).collect();
        assert_eq!(ids, vec![1, 0, 1]);
    }

    #[test]
    fn neighbor_ties_go_to_lower_id() {
        let x = array![[0.0], [5.0], [5.0], [5.0]];
        let idx = find_neighbors(x.view(), 1, NeighborMetric::Euclidean).unwrap();
        assert_eq!(idx.ids(0).next(), Some(1));
        assert_eq!(idx.ids(2).next(), Some(1));
        assert_eq!(idx.ids(1).next(), Some(2));
        assert!(find_neighbors(x.view(), 4, NeighborMetric::Euclidean).is_err());
    }

    #[test]
    fn dot_product_metric_prefers_aligned_rows() {
        let x = array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]];
        let idx = find_neighbors(x.view(), 1, NeighborMetric::DotProduct).unwrap();
        assert_eq!(idx.ids(0).next(), Some(1));
        assert_eq!(idx.ids(2).next(), Some(1));
    }

    fn labels_from_rows(rows: Array2<f64>) -> PartialLabels {
        PartialLabels::from_full(rows).unwrap()
    }

    fn single_list(ids: &[usize]) -> NeighborIndex {
        NeighborIndex {
            k: ids.len(),
            lists: vec![ids.iter().map(|&j| (j, 0.0)).collect()],
        }
    }

    #[test]
    fn local_descriptor_means() {
        let labels = labels_from_rows(array![[1.0, 0.0], [0.0, 1.0]]);
        let l = local_descriptor(&single_list(&[0, 1]), &labels, 2).unwrap();
        assert_eq!(l, array![[0.5, 0.5]]);

        let labels = labels_from_rows(array![[1.0, 1.0], [1.0, 0.0], [0.0, 0.0]]);
        let l = local_descriptor(&single_list(&[0, 1, 2]), &labels, 3).unwrap();
        assert!((l[[0, 0]] - 2.0 / 3.0).abs() < 1e-15);
        assert!((l[[0, 1]] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unlabeled_neighbors_give_zero() {
        let labels =
            PartialLabels::new(Array2::zeros((2, 2)), ObservationMask::empty(2, 2)).unwrap();
        let l = local_descriptor(&single_list(&[0, 1]), &labels, 2).unwrap();
        assert_eq!(l, Array2::<f64>::zeros((1, 2)));
        assert!(local_descriptor(&single_list(&[0, 1]), &labels, 3).is_err());
    }
}
