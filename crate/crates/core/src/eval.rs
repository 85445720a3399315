//! Evaluation: mean average precision, the ridge and nuclear-only baselines,
//! the planted low-rank generator and grid-search cross-validation.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::datamodel::{FeatureMatrix, Model, ObservationMask, PartialLabels, SolverConfig};
use crate::error::{Error, Result};
use crate::ingest::DatasetBundle;
use crate::linalg;
use crate::solver::{apg_solve, apg_solve_problem, SmoothObjective};

/// Default grid for both λ and γ_s.
pub const DEFAULT_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Non-interpolated average precision of one ranking.
///
/// Items are ranked by descending score, ties by lower index. Returns `None`
/// when there is no relevant item.
pub fn average_precision(
    scores: ArrayView1<'_, f64>,
    relevance: ArrayView1<'_, f64>,
) -> Result<Option<f64>> {
    if scores.len() != relevance.len() {
        return Err(Error::validation(format!(
            "{} scores but {} relevance values",
            scores.len(),
            relevance.len()
        )));
    }
    if let Some(v) = relevance.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::validation(format!(
            "relevance value {v} is not binary"
        )));
    }
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::validation("scores contain NaN"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if relevance[i] == 1.0 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok((hits > 0).then(|| sum / hits as f64))
}

/// Per-label APs and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// `None` for labels without any relevant item.
    pub per_label: Vec<Option<f64>>,
}

impl MapReport {
    /// Labels left out of the mean because they have no relevant item.
    pub fn skipped(&self) -> Vec<usize> {
        self.per_label
            .iter()
            .enumerate()
            .filter(|(_, ap)| ap.is_none())
            .map(|(j, _)| j)
            .collect()
    }
}

/// Mean of per-column AP over the columns with at least one relevant item.
pub fn mean_ap(scores: ArrayView2<'_, f64>, labels: ArrayView2<'_, f64>) -> Result<MapReport> {
    if scores.dim() != labels.dim() {
        return Err(Error::validation(format!(
            "score matrix {:?} and label matrix {:?} differ in shape",
            scores.dim(),
            labels.dim()
        )));
    }
    let per_label: Vec<Option<f64>> = (0..scores.ncols())
        .into_par_iter()
        .map(|j| average_precision(scores.column(j), labels.column(j)))
        .collect::<Result<_>>()?;
    let valid: Vec<f64> = per_label.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::validation(
            "no label has a relevant item; mAP is undefined",
        ));
    }
    let map = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok(MapReport { map, per_label })
}

/// Per-column ridge regression on the observed rows of that column:
/// `min_m ‖X_Ωⱼ m − ỹ_Ωⱼ‖² + α‖m‖²`.
pub fn ridge_baseline(x: &FeatureMatrix, labels: &PartialLabels, alpha: f64) -> Result<Model> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::validation(format!(
            "ridge alpha must be > 0, got {alpha}"
        )));
    }
    if x.n() != labels.n() {
        return Err(Error::validation(format!(
            "features have {} rows, labels {}",
            x.n(),
            labels.n()
        )));
    }
    let d = x.d();
    let columns: Vec<Array1<f64>> = (0..labels.c())
        .into_par_iter()
        .map(|j| {
            let rows = labels.mask().column(j);
            if rows.is_empty() {
                log::warn!("label {j} has no observed entries; ridge column set to zero");
                return Ok(Array1::zeros(d));
            }
            let xs = x.data().select(Axis(0), rows);
            let ys = labels.values().column(j).select(Axis(0), rows);
            let mut gram = xs.t().dot(&xs);
            for k in 0..d {
                gram[[k, k]] += alpha;
            }
            let rhs = xs.t().dot(&ys).insert_axis(Axis(1));
            Ok(linalg::solve_spd(gram.view(), rhs.view())?
                .column(0)
                .to_owned())
        })
        .collect::<Result<_>>()?;
    let mut m = Array2::zeros((d, labels.c()));
    for (j, col) in columns.into_iter().enumerate() {
        m.column_mut(j).assign(&col);
    }
    Model::new(m)
}

/// The nuclear-norm-only baseline: the APG solver with γ_s = 0.
pub fn nuclear_baseline(
    x: &FeatureMatrix,
    labels: &PartialLabels,
    lambda: f64,
    config: &SolverConfig,
) -> Result<Model> {
    let config = SolverConfig {
        lambda,
        gamma_s: 0.0,
        ..*config
    };
    Ok(apg_solve(x, labels, None, &config)?.0)
}

/// Parameters of the planted low-rank generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub n: usize,
    pub n_test: usize,
    pub d: usize,
    pub c: usize,
    pub rank: usize,
    /// Standard deviation of the noise added to `XM*` (whose entries have
    /// unit mean square).
    pub noise: f64,
    /// Fraction of positives per label column.
    pub label_sparsity: f64,
    /// Number of pure-noise concept columns added to the `c` informative ones.
    pub distractors: usize,
    /// Noise level of the concept scores (logit scale).
    pub concept_noise: f64,
    /// Width of the low-dimensional visual descriptors.
    pub low_dim: usize,
    /// Noise added to the low-dimensional descriptors.
    pub low_dim_noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n: 200,
            n_test: 200,
            d: 50,
            c: 20,
            rank: 5,
            noise: 0.3,
            label_sparsity: 0.2,
            distractors: 20,
            concept_noise: 0.5,
            low_dim: 16,
            low_dim_noise: 0.5,
            seed: 0,
        }
    }
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedData {
    /// Training labels are fully observed; mask them before learning.
    pub bundle: DatasetBundle,
    /// Planted coefficients `M*`.
    pub truth: Array2<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Per column, marks the `k` largest entries (ties to the lower row) as 1.
fn top_k_columns(z: &Array2<f64>, k: usize) -> Array2<f64> {
    let mut y = Array2::zeros(z.dim());
    for (j, col) in z.axis_iter(Axis(1)).enumerate() {
        let mut order: Vec<usize> = (0..col.len()).collect();
        order.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
        for &i in order.iter().take(k) {
            y[[i, j]] = 1.0;
        }
    }
    y
}

fn positives_for(sparsity: f64, n: usize) -> usize {
    (sparsity * n as f64 + 1e-9).floor() as usize
}

/// Relative weight of the feature coordinates past `low_dim` in `M*`.
const TRAILING_SIGNAL: f64 = 0.3;
/// Logit slope of the informative concept scores per unit of latent score.
const CONCEPT_GAIN: f64 = 3.0;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Draws a planted multi-label problem.
///
/// Training features are orthonormal (`n×d`); test features go through the
/// same linear map. Scores `Z = XM* + σ·E` with `M* = UVᵀ` of rank `r` are
/// binarized per column by keeping the top `⌊sparsity·n⌋` rows. Concept
/// scores are noisy posteriors of the true labels (in a random column order)
/// mixed with distractor columns; the low-dimensional descriptors are the
/// leading feature coordinates plus noise.
pub fn generate_planted(config: &PlantedConfig) -> Result<PlantedData> {
    let PlantedConfig {
        n,
        n_test,
        d,
        c,
        rank,
        noise,
        label_sparsity,
        distractors,
        concept_noise,
        low_dim,
        low_dim_noise,
        seed,
    } = *config;
    if d == 0 || c == 0 || rank == 0 || rank > d.min(c) {
        return Err(Error::validation(format!(
            "need 0 < rank <= min(d, c), got rank {rank}, d {d}, c {c}"
        )));
    }
    if n < d {
        return Err(Error::validation(format!("need n >= d, got n {n}, d {d}")));
    }
    if n_test == 0 {
        return Err(Error::validation("n_test must be positive"));
    }
    if !(label_sparsity > 0.0 && label_sparsity < 1.0) {
        return Err(Error::validation("label sparsity must lie in (0,1)"));
    }
    let (k_train, k_test) = (
        positives_for(label_sparsity, n),
        positives_for(label_sparsity, n_test),
    );
    if k_train == 0 || k_test == 0 {
        return Err(Error::validation(
            "label sparsity leaves a column without positives",
        ));
    }
    if !(noise >= 0.0 && concept_noise >= 0.0 && low_dim_noise >= 0.0) {
        return Err(Error::validation("noise levels must be >= 0"));
    }
    if low_dim == 0 || low_dim > d {
        return Err(Error::validation(format!("low_dim must lie in 1..={d}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = gaussian(&mut rng, n + n_test, d);
    let (q, r) = linalg::qr(raw.slice(s![..n, ..]));
    let r_inv = linalg::upper_triangular_inverse(r.view())?;
    let x_train = q;
    let x_test = raw.slice(s![n.., ..]).dot(&r_inv);

    let mut u = gaussian(&mut rng, d, rank);
    // leading coordinates carry most of the signal
    for (k, mut row) in u.axis_iter_mut(Axis(0)).enumerate() {
        if k >= low_dim {
            row *= TRAILING_SIGNAL;
        }
    }
    let v = gaussian(&mut rng, c, rank);
    let mut truth = u.dot(&v.t());
    // XᵀX = I, so ‖XM*‖²_F = ‖M*‖²_F; scale to unit mean square
    let scale = ((n * c) as f64 / truth.iter().map(|e| e * e).sum::<f64>()).sqrt();
    truth *= scale;

    let z_train = x_train.dot(&truth) + gaussian(&mut rng, n, c) * noise;
    let z_test = x_test.dot(&truth) + gaussian(&mut rng, n_test, c) * noise;
    let y_train = top_k_columns(&z_train, k_train);
    let y_test = top_k_columns(&z_test, k_test);

    let s_total = c + distractors;
    let mut scores = Array2::zeros((n, s_total));
    let thresholds: Vec<f64> = (0..c)
        .map(|j| {
            let col = z_train.column(j);
            let mut sorted = col.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            0.5 * (sorted[k_train - 1] + sorted[k_train.min(n - 1)])
        })
        .collect();
    for i in 0..n {
        for j in 0..c {
            let logit = CONCEPT_GAIN * (z_train[[i, j]] - thresholds[j]);
            scores[[i, j]] = sigmoid(logit + concept_noise * rng.sample::<f64, _>(StandardNormal));
        }
        for j in c..s_total {
            scores[[i, j]] = sigmoid(concept_noise * rng.sample::<f64, _>(StandardNormal));
        }
    }
    let mut perm: Vec<usize> = (0..s_total).collect();
    perm.shuffle(&mut rng);
    let scores = scores.select(Axis(1), &perm);

    let low = x_train.slice(s![.., ..low_dim]).to_owned() * (n as f64).sqrt()
        + gaussian(&mut rng, n, low_dim) * low_dim_noise;

    let bundle = DatasetBundle {
        features: FeatureMatrix::new(x_train)?,
        low_dim_features: FeatureMatrix::new(low)?,
        concept_scores: Some(scores),
        labels: PartialLabels::from_full(y_train)?,
        test_features: Some(FeatureMatrix::new(x_test)?),
        test_labels: Some(y_test),
    };
    bundle.validate()?;
    Ok(PlantedData { bundle, truth })
}

/// One `(λ, γ_s)` grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub gamma_s: f64,
}

/// Cartesian product of the two value lists.
pub fn grid(lambdas: &[f64], gammas: &[f64]) -> Vec<GridPoint> {
    lambdas
        .iter()
        .flat_map(|&lambda| {
            gammas
                .iter()
                .map(move |&gamma_s| GridPoint { lambda, gamma_s })
        })
        .collect()
}

/// Result of a grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome<P> {
    pub best: P,
    pub best_score: f64,
    /// Mean validation mAP of each candidate, in the searched order.
    pub scores: Vec<(P, f64)>,
}

/// Splits the observed entries of each column into `folds` groups:
/// `assignment[j][p]` is the fold of the `p`-th observed row of column `j`.
fn fold_assignment(labels: &PartialLabels, folds: usize, seed: u64) -> Vec<Vec<(usize, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..labels.c())
        .map(|j| {
            let mut rows = labels.mask().column(j).to_vec();
            rows.shuffle(&mut rng);
            rows.into_iter()
                .enumerate()
                .map(|(p, i)| (i, p % folds))
                .collect()
        })
        .collect()
}

/// Training labels and validation entries of every fold.
pub fn split_folds(
    labels: &PartialLabels,
    folds: usize,
    seed: u64,
) -> Result<Vec<(PartialLabels, Vec<Vec<usize>>)>> {
    if folds < 2 {
        return Err(Error::validation(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let assignment = fold_assignment(labels, folds, seed);
    let (n, c) = (labels.n(), labels.c());
    (0..folds)
        .map(|f| {
            let mut train = Vec::new();
            let mut valid = vec![Vec::new(); c];
            for (j, col) in assignment.iter().enumerate() {
                for &(i, fold) in col {
                    if fold == f {
                        valid[j].push(i);
                    } else {
                        train.push((i, j));
                    }
                }
            }
            if valid.iter().all(|v| v.is_empty()) {
                return Err(Error::validation(format!(
                    "fold {f} has an empty validation set"
                )));
            }
            for v in &mut valid {
                v.sort_unstable();
            }
            let mask = ObservationMask::from_coords(n, c, train)?;
            Ok((PartialLabels::observe(labels.values().view(), mask)?, valid))
        })
        .collect()
}

/// mAP of `scores` restricted to the validation rows of each column.
fn validation_map(
    scores: &Array2<f64>,
    labels: &PartialLabels,
    valid: &[Vec<usize>],
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (j, rows) in valid.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let s = scores.column(j).select(Axis(0), rows);
        let r = labels.values().column(j).select(Axis(0), rows);
        if let Some(ap) = average_precision(s.view(), r.view())? {
            total += ap;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::validation(
            "validation fold has no relevant item in any label",
        ));
    }
    Ok(total / count as f64)
}

/// Generic k-fold grid search over observed entries. `fit` receives the
/// training labels of a fold and a candidate and returns training-set scores
/// `XM`. Ties keep the earlier candidate.
pub fn cross_validate_with<P, F>(
    labels: &PartialLabels,
    candidates: &[P],
    folds: usize,
    seed: u64,
    fit: F,
) -> Result<CvOutcome<P>>
where
    P: Copy + Send + Sync,
    F: Fn(&PartialLabels, &P) -> Result<Array2<f64>> + Sync,
{
    if candidates.is_empty() {
        return Err(Error::validation("empty parameter grid"));
    }
    let splits = split_folds(labels, folds, seed)?;
    let scores: Vec<(P, f64)> = candidates
        .par_iter()
        .map(|p| {
            let mut total = 0.0;
            for (train, valid) in &splits {
                let pred = fit(train, p)?;
                total += validation_map(&pred, labels, valid)?;
            }
            Ok((*p, total / splits.len() as f64))
        })
        .collect::<Result<_>>()?;
    let (best, best_score) = scores
        .iter()
        .fold(None, |acc: Option<(P, f64)>, &(p, s)| match acc {
            Some((_, bs)) if s <= bs => acc,
            _ => Some((p, s)),
        })
        .expect("non-empty");
    Ok(CvOutcome {
        best,
        best_score,
        scores,
    })
}

/// Grid search for `(λ, γ_s)` of the APG solver, maximizing mean validation
/// mAP. Candidates are tried in ascending `(λ, γ_s)` order, so ties resolve
/// to the smaller λ, then the smaller γ_s. Folds are drawn with `base.seed`.
pub fn cross_validate(
    x: &FeatureMatrix,
    labels: &PartialLabels,
    laplacian: Option<ArrayView2<'_, f64>>,
    grid: &[GridPoint],
    folds: usize,
    base: &SolverConfig,
) -> Result<CvOutcome<GridPoint>> {
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| {
        a.lambda
            .total_cmp(&b.lambda)
            .then(a.gamma_s.total_cmp(&b.gamma_s))
    });
    sorted.dedup();
    let laplacian = laplacian.map(|l| l.to_owned());
    cross_validate_with(labels, &sorted, folds, base.seed, |train, p| {
        let config = SolverConfig {
            lambda: p.lambda,
            gamma_s: p.gamma_s,
            ..*base
        };
        let problem =
            SmoothObjective::new(x, train, laplacian.as_ref().map(|l| l.view()), p.gamma_s)?;
        let (model, _) = apg_solve_problem(&problem, &config, None)?;
        model.predict(x)
    })
}

/// Grid search for the ridge penalty.
pub fn cross_validate_ridge(
    x: &FeatureMatrix,
    labels: &PartialLabels,
    alphas: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvOutcome<f64>> {
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    cross_validate_with(labels, &sorted, folds, seed, |train, &alpha| {
        ridge_baseline(x, train, alpha)?.predict(x)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ap_examples() {
        let ap = average_precision(array![0.9, 0.1].view(), array![1.0, 0.0].view()).unwrap();
        assert_eq!(ap, Some(1.0));
        let ap = average_precision(array![0.1, 0.9].view(), array![1.0, 0.0].view()).unwrap();
        assert_eq!(ap, Some(0.5));
        let ap = average_precision(array![0.1, 0.9].view(), array![0.0, 0.0].view()).unwrap();
        assert_eq!(ap, None);
    }

    #[test]
    fn ap_ties_use_lower_index() {
        // equal scores: item 0 ranks first
        let ap = average_precision(array![0.5, 0.5].view(), array![0.0, 1.0].view()).unwrap();
        assert_eq!(ap, Some(0.5));
        let ap = average_precision(array![0.5, 0.5].view(), array![1.0, 0.0].view()).unwrap();
        assert_eq!(ap, Some(1.0));
    }

    #[test]
    fn map_examples() {
        let y = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        assert_eq!(mean_ap(y.view(), y.view()).unwrap().map, 1.0);
        // column 0 perfect, column 1 relevant item at rank 2
        let scores = array![[0.9, 0.9], [0.1, 0.5], [0.8, 0.1]];
        let labels = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        assert_eq!(mean_ap(scores.view(), labels.view()).unwrap().map, 0.75);
    }

    #[test]
    fn map_skips_empty_columns() {
        let labels = array![[1.0, 0.0], [0.0, 0.0]];
        let report = mean_ap(labels.view(), labels.view()).unwrap();
        assert_eq!(report.skipped(), vec![1]);
        assert_eq!(report.map, 1.0);
        let none = Array2::<f64>::zeros((2, 2));
        assert!(mean_ap(none.view(), none.view()).is_err());
        assert!(mean_ap(none.view(), Array2::<f64>::zeros((3, 2)).view()).is_err());
    }

    fn orthonormal(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, _) = linalg::qr(gaussian(&mut rng, n, d).view());
        FeatureMatrix::new(q).unwrap()
    }

    #[test]
    fn ridge_limits() {
        let x = orthonormal(6, 6, 1);
        let y = array![
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 1.0],
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0]
        ];
        let labels = PartialLabels::from_full(y.clone()).unwrap();
        let m = ridge_baseline(&x, &labels, 1e-10).unwrap();
        let ls = x.data().t().dot(&y);
        assert!(linalg::max_abs((m.coefficients() - &ls).view()) < 1e-8);
        let m = ridge_baseline(&x, &labels, 1e12).unwrap();
        assert!(linalg::max_abs(m.coefficients().view()) < 1e-10);
        assert!(ridge_baseline(&x, &labels, 0.0).is_err());
    }

    #[test]
    fn ridge_empty_column_is_zero() {
        let x = orthonormal(4, 2, 2);
        let mask = ObservationMask::from_coords(4, 2, [(0, 0), (1, 0)]).unwrap();
        let labels = PartialLabels::observe(
            array![[1.0, 1.0], [0.0, 1.0], [1.0, 0.0], [0.0, 0.0]].view(),
            mask,
        )
        .unwrap();
        let m = ridge_baseline(&x, &labels, 0.1).unwrap();
        assert!(m.coefficients().column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn planted_shapes_and_determinism() {
        let config = PlantedConfig {
            n: 60,
            n_test: 40,
            d: 10,
            c: 20,
            rank: 3,
            seed: 4,
            low_dim: 5,
            ..Default::default()
        };
        let a = generate_planted(&config).unwrap();
        let b = generate_planted(&config).unwrap();
        assert_eq!(a, b);
        let y = a.bundle.labels.values();
        for col in y.axis_iter(Axis(1)) {
            assert_eq!(col.sum(), 12.0);
        }
        assert!(a.bundle.features.orthonormality_error() < 1e-10);
        assert_eq!(a.bundle.concept_scores.as_ref().unwrap().ncols(), 40);
        let bad = PlantedConfig { rank: 11, ..config };
        assert!(generate_planted(&bad).is_err());
        let bad = PlantedConfig { n: 5, ..config };
        assert!(generate_planted(&bad).is_err());
    }

    #[test]
    fn single_point_grid() {
        let data = generate_planted(&PlantedConfig {
            n: 60,
            n_test: 20,
            d: 8,
            c: 4,
            rank: 2,
            low_dim: 4,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let only = GridPoint {
            lambda: 0.1,
            gamma_s: 0.0,
        };
        let out = cross_validate(
            &data.bundle.features,
            &data.bundle.labels,
            None,
            &[only],
            3,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.best, only);
        assert!(cross_validate(
            &data.bundle.features,
            &data.bundle.labels,
            None,
            &[only],
            1,
            &SolverConfig::default()
        )
        .is_err());
    }

    #[test]
    fn folds_partition_observed_entries() {
        let labels = PartialLabels::from_full(Array2::from_shape_fn((9, 2), |(i, j)| {
            ((i + j) % 3 == 0) as u8 as f64
        }))
        .unwrap();
        let splits = split_folds(&labels, 3, 7).unwrap();
        let mut seen = [0usize; 18];
        for (train, valid) in &splits {
            assert_eq!(train.mask().len(), 12);
            for (j, rows) in valid.iter().enumerate() {
                for &i in rows {
                    assert!(!train.mask().contains(i, j));
                    seen[i * 2 + j] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&k| k == 1));
    }

    #[test]
    fn fold_without_validation_entries_errors() {
        let mask = ObservationMask::from_coords(4, 1, [(0, 0)]).unwrap();
        let labels =
            PartialLabels::observe(array![[1.0], [0.0], [0.0], [0.0]].view(), mask).unwrap();
        assert!(split_folds(&labels, 2, 0).is_err());
    }
}
