//! End-to-end steps shared by the command-line tool and the experiments:
//! mask → prepare (descriptors, graph, whitening) → tune → train → evaluate.

use ndarray::Array2;

use crate::datamodel::{FeatureMatrix, Model, PartialLabels, SemanticGraph, SolverConfig};
use crate::descriptor::{build_descriptors, DescriptorConfig, SemanticDescriptors, Whitener};
use crate::error::{Error, Result};
use crate::eval::{
    cross_validate, cross_validate_ridge, grid, mean_ap, ridge_baseline, GridPoint, MapReport,
    DEFAULT_GRID,
};
use crate::graph::{build_semantic_graph, laplacian, DEFAULT_K_S};
use crate::ingest::{mask_labels, DatasetBundle, MaskMode};
use crate::solver::{apg_solve, SolveTrace};

pub const DEFAULT_ENERGY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    ApgGraph,
    Nuclear,
    Ridge,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::ApgGraph, Method::Nuclear, Method::Ridge];

    pub fn name(self) -> &'static str {
        match self {
            Method::ApgGraph => "apg-graph",
            Method::Nuclear => "nuclear",
            Method::Ridge => "ridge",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown method '{s}' (expected apg-graph, nuclear or ridge)"
                ))
            })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareConfig {
    pub descriptor: DescriptorConfig,
    pub k_s: usize,
    /// Fraction of feature energy kept by PCA whitening.
    pub energy: f64,
    /// Append a constant column after whitening so models can fit an offset.
    pub intercept: bool,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            descriptor: DescriptorConfig::default(),
            k_s: DEFAULT_K_S,
            energy: DEFAULT_ENERGY,
            intercept: true,
        }
    }
}

/// Everything derived from the training data before learning.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub descriptors: SemanticDescriptors,
    pub graph: SemanticGraph,
    pub whitener: Whitener,
    /// Whitened training features (orthonormal columns).
    pub train_features: FeatureMatrix,
    /// Test features mapped through the training whitener.
    pub test_features: Option<FeatureMatrix>,
}

pub fn prepare(bundle: &DatasetBundle, config: &PrepareConfig) -> Result<Prepared> {
    bundle.validate()?;
    let descriptors = build_descriptors(bundle, &config.descriptor)?;
    let graph = build_semantic_graph(descriptors.combined.view(), config.k_s)?;
    let mut whitener = Whitener::fit(&bundle.features, config.energy)?;
    if config.intercept {
        whitener = whitener.with_intercept(bundle.features.n());
    }
    let train_features = whitener.transform(&bundle.features)?;
    let test_features = bundle
        .test_features
        .as_ref()
        .map(|t| whitener.transform(t))
        .transpose()?;
    Ok(Prepared {
        descriptors,
        graph,
        whitener,
        train_features,
        test_features,
    })
}

/// Hyperparameters of one trained method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    pub lambda: f64,
    pub gamma_s: f64,
    /// Ridge penalty; unused by the APG methods.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningConfig {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            lambdas: DEFAULT_GRID.to_vec(),
            gammas: DEFAULT_GRID.to_vec(),
            alphas: DEFAULT_GRID.to_vec(),
            folds: 3,
            seed: 0,
        }
    }
}

/// Picks the hyperparameters of `method` by cross-validation on the observed
/// training labels.
pub fn tune(
    method: Method,
    features: &FeatureMatrix,
    labels: &PartialLabels,
    graph_laplacian: &Array2<f64>,
    tuning: &TuningConfig,
    base: &SolverConfig,
) -> Result<MethodParams> {
    let base = SolverConfig {
        seed: tuning.seed,
        ..*base
    };
    match method {
        Method::ApgGraph => {
            let cells = grid(&tuning.lambdas, &tuning.gammas);
            let out = cross_validate(
                features,
                labels,
                Some(graph_laplacian.view()),
                &cells,
                tuning.folds,
                &base,
            )?;
            Ok(MethodParams {
                lambda: out.best.lambda,
                gamma_s: out.best.gamma_s,
                alpha: 0.0,
            })
        }
        Method::Nuclear => {
            let cells: Vec<GridPoint> = grid(&tuning.lambdas, &[0.0]);
            let out = cross_validate(features, labels, None, &cells, tuning.folds, &base)?;
            Ok(MethodParams {
                lambda: out.best.lambda,
                gamma_s: 0.0,
                alpha: 0.0,
            })
        }
        Method::Ridge => {
            let out =
                cross_validate_ridge(features, labels, &tuning.alphas, tuning.folds, tuning.seed)?;
            Ok(MethodParams {
                lambda: 0.0,
                gamma_s: 0.0,
                alpha: out.best,
            })
        }
    }
}

/// Fits `method`; the APG methods also return their solve trace.
pub fn train(
    method: Method,
    features: &FeatureMatrix,
    labels: &PartialLabels,
    graph_laplacian: &Array2<f64>,
    params: &MethodParams,
    base: &SolverConfig,
) -> Result<(Model, Option<SolveTrace>)> {
    match method {
        Method::ApgGraph | Method::Nuclear => {
            let gamma_s = if method == Method::Nuclear {
                0.0
            } else {
                params.gamma_s
            };
            let config = SolverConfig {
                lambda: params.lambda,
                gamma_s,
                ..*base
            };
            let l = (method == Method::ApgGraph).then(|| graph_laplacian.view());
            let (model, trace) = apg_solve(features, labels, l, &config)?;
            Ok((model, Some(trace)))
        }
        Method::Ridge => Ok((ridge_baseline(features, labels, params.alpha)?, None)),
    }
}

pub fn evaluate(model: &Model, features: &FeatureMatrix, truth: &Array2<f64>) -> Result<MapReport> {
    let scores = model.predict(features)?;
    mean_ap(scores.view(), truth.view())
}

/// One row of an experiment report.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub params: MethodParams,
    pub report: MapReport,
    pub model: Model,
    pub trace: Option<SolveTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub omega: f64,
    pub mask_mode: MaskMode,
    pub seed: u64,
    pub prepare: PrepareConfig,
    pub solver: SolverConfig,
    pub tuning: TuningConfig,
    /// Skip cross-validation and use these parameters for every method.
    pub fixed: Option<MethodParams>,
    pub methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            omega: 20.0,
            mask_mode: MaskMode::PerColumnEntries,
            seed: 0,
            prepare: PrepareConfig::default(),
            solver: SolverConfig::default(),
            tuning: TuningConfig::default(),
            fixed: None,
            methods: Method::ALL.to_vec(),
        }
    }
}

/// Masks the (fully observed) training labels of `bundle` and runs every
/// configured method, reporting test mAP.
pub fn run_experiment(
    bundle: &DatasetBundle,
    config: &ExperimentConfig,
) -> Result<Vec<MethodResult>> {
    let labels = mask_labels(
        bundle.labels.values().view(),
        config.omega,
        config.mask_mode,
        config.seed,
    )?;
    let masked = DatasetBundle {
        labels,
        ..bundle.clone()
    };
    run_on_masked(&masked, config)
}

/// Like [`run_experiment`] but uses the bundle's labels as given.
pub fn run_on_masked(
    bundle: &DatasetBundle,
    config: &ExperimentConfig,
) -> Result<Vec<MethodResult>> {
    let test_labels = bundle
        .test_labels
        .as_ref()
        .filter(|_| bundle.test_features.is_some())
        .ok_or_else(|| Error::validation("experiment needs test features and labels"))?;
    let prepared = prepare(bundle, &config.prepare)?;
    let l = laplacian(&prepared.graph);
    let test_x = prepared
        .test_features
        .as_ref()
        .expect("test features present");
    config
        .methods
        .iter()
        .map(|&method| {
            let params = match config.fixed {
                Some(p) => p,
                None => tune(
                    method,
                    &prepared.train_features,
                    &bundle.labels,
                    &l,
                    &config.tuning,
                    &config.solver,
                )?,
            };
            let (model, trace) = train(
                method,
                &prepared.train_features,
                &bundle.labels,
                &l,
                &params,
                &config.solver,
            )?;
            let report = evaluate(&model, test_x, test_labels)?;
            Ok(MethodResult {
                method,
                params,
                report,
                model,
                trace,
            })
        })
        .collect()
}
