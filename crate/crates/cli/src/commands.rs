//! Subcommand implementations. `pipeline` is literally the composition of the
//! other commands, so its files match a hand-run sequence byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lapmc::descriptor::DescriptorConfig;
use lapmc::eval::{generate_planted, PlantedConfig};
use lapmc::graph::{laplacian, read_graph, write_graph};
use lapmc::ingest::{
    load_dataset, mask_labels, read_labels, read_matrix, write_atomic, write_labels, write_matrix,
    DatasetPaths, LabelConvention, MatrixFormat,
};
use lapmc::pipeline::{self, Method, MethodParams, PrepareConfig, TuningConfig};
use lapmc::{FeatureMatrix, Model, PartialLabels, SemanticGraph, SolverConfig};
use ndarray::Array2;

use crate::args::{
    CvArgs, DescriptorArgs, EvaluateArgs, List, MaskArgs, PipelineArgs, PrepareArgs, SynthArgs,
    TrainArgs,
};
use crate::config::parse_config;
use crate::error::{CliError, CliResult};
use crate::manifest::RunLog;

/// File names inside a dataset directory written by `synth`.
pub mod data_files {
    pub const FEATURES: &str = "features.bin";
    pub const LOW_DIM: &str = "low_dim.bin";
    pub const SCORES: &str = "scores.bin";
    pub const LABELS: &str = "labels.tri";
    pub const TEST_FEATURES: &str = "test_features.bin";
    pub const TEST_LABELS: &str = "test_labels.bin";
    pub const TRUTH: &str = "truth.bin";
}

/// File names written by `prepare` and `pipeline`.
pub mod run_files {
    pub const MASKED_LABELS: &str = "labels_masked.tri";
    pub const GLOBAL: &str = "global.bin";
    pub const LOCAL: &str = "local.bin";
    pub const DESCRIPTORS: &str = "descriptors.bin";
    pub const GRAPH: &str = "graph.tri";
    pub const TRAIN_FEATURES: &str = "train_whitened.bin";
    pub const TEST_FEATURES: &str = "test_whitened.bin";
    pub const SELECTED: &str = "selected_concepts.txt";
    pub const REPORT: &str = "report.csv";

    pub fn params(method: lapmc::pipeline::Method) -> String {
        format!("params_{method}.txt")
    }

    pub fn model(method: lapmc::pipeline::Method) -> String {
        format!("model_{method}.bin")
    }

    pub fn trace(method: lapmc::pipeline::Method) -> String {
        format!("trace_{method}.csv")
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Globals {
    pub format: Option<MatrixFormat>,
    pub convention: LabelConvention,
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Core(lapmc::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn write_text(path: &Path, text: &str, log: &mut RunLog) -> CliResult<()> {
    write_atomic(path, text.as_bytes())?;
    log.output(path);
    Ok(())
}

fn write_raw(path: &Path, a: &Array2<f64>, log: &mut RunLog) -> CliResult<()> {
    write_matrix(path, Some(MatrixFormat::RawBinary), a.view())?;
    log.output(path);
    Ok(())
}

/// Sidecar metadata of a model file.
pub fn meta_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn read_key_values(path: &Path, log: &mut RunLog) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| lapmc::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    log.input(path);
    Ok(parse_config(path, &text)?
        .into_iter()
        .map(|e| (e.key, e.value))
        .collect())
}

fn parse_value<T: std::str::FromStr>(
    path: &Path,
    kv: &BTreeMap<String, String>,
    key: &str,
) -> CliResult<Option<T>> {
    kv.get(key)
        .map(|v| {
            v.parse::<T>().map_err(|_| {
                CliError::Core(lapmc::Error::Validation(format!(
                    "{}: cannot parse {key} = '{v}'",
                    path.display()
                )))
            })
        })
        .transpose()
}

fn load_features(path: &Path, g: &Globals, log: &mut RunLog) -> CliResult<FeatureMatrix> {
    let x = FeatureMatrix::new(read_matrix(path, g.format, None)?)?;
    log.input(path);
    Ok(x)
}

fn load_labels(path: &Path, g: &Globals, log: &mut RunLog) -> CliResult<PartialLabels> {
    let y = read_labels(path, g.format, None, g.convention)?;
    log.input(path);
    Ok(y)
}

pub fn synth(a: &SynthArgs, log: &mut RunLog) -> CliResult<()> {
    let cfg = PlantedConfig {
        n: a.n,
        n_test: a.n_test,
        d: a.d,
        c: a.c,
        rank: a.rank,
        noise: a.noise,
        label_sparsity: a.label_sparsity,
        distractors: a.distractors,
        concept_noise: a.concept_noise,
        low_dim: a.low_dim,
        low_dim_noise: a.low_dim_noise,
        seed: a.seed,
    };
    let data = generate_planted(&cfg)?;
    let b = &data.bundle;
    create_dir(&a.out)?;
    use data_files::*;
    write_raw(&a.out.join(FEATURES), b.features.data(), log)?;
    write_raw(&a.out.join(LOW_DIM), b.low_dim_features.data(), log)?;
    if let Some(s) = &b.concept_scores {
        write_raw(&a.out.join(SCORES), s, log)?;
    }
    write_labels(&a.out.join(LABELS), &b.labels)?;
    log.output(&a.out.join(LABELS));
    if let Some(t) = &b.test_features {
        write_raw(&a.out.join(TEST_FEATURES), t.data(), log)?;
    }
    if let Some(t) = &b.test_labels {
        write_raw(&a.out.join(TEST_LABELS), t, log)?;
    }
    write_raw(&a.out.join(TRUTH), &data.truth, log)?;
    Ok(())
}

pub fn mask(a: &MaskArgs, g: &Globals, log: &mut RunLog) -> CliResult<()> {
    let labels = load_labels(&a.labels, g, log)?;
    let (n, c) = labels.values().dim();
    if labels.mask().len() != n * c {
        return Err(lapmc::Error::Validation(format!(
            "{}: masking needs fully observed labels, {} of {} entries observed",
            a.labels.display(),
            labels.mask().len(),
            n * c
        ))
        .into());
    }
    let masked = mask_labels(labels.values().view(), a.omega, a.mask_mode, a.seed)?;
    write_labels(&a.output, &masked)?;
    log.output(&a.output);
    log.resolve("observed_entries", masked.mask().len());
    Ok(())
}

fn prepare_config(d: &DescriptorArgs) -> PrepareConfig {
    PrepareConfig {
        descriptor: DescriptorConfig {
            s_tilde: d.s_tilde,
            k_v: d.k_v,
            bins: d.bins,
            metric: d.metric,
        },
        k_s: d.k_s,
        energy: d.energy,
        intercept: !d.no_intercept,
    }
}

pub fn prepare(a: &PrepareArgs, g: &Globals, log: &mut RunLog) -> CliResult<()> {
    let paths = DatasetPaths {
        features: a.features.clone(),
        low_dim_features: a.low_dim_features.clone(),
        scores: a.scores.clone(),
        labels: a.labels.clone(),
        test_features: None,
        test_labels: None,
    };
    let bundle = load_dataset(&paths, g.format, g.convention)?;
    for p in [
        Some(&a.features),
        a.low_dim_features.as_ref(),
        a.scores.as_ref(),
    ]
    .into_iter()
    .flatten()
    .chain([&a.labels])
    {
        log.input(p);
    }
    let prepared = pipeline::prepare(&bundle, &prepare_config(&a.descriptor))?;
    create_dir(&a.out)?;
    use run_files::*;
    let desc = &prepared.descriptors;
    write_raw(&a.out.join(GLOBAL), &desc.global, log)?;
    write_raw(&a.out.join(LOCAL), &desc.local, log)?;
    write_raw(&a.out.join(DESCRIPTORS), &desc.combined, log)?;
    write_graph(&a.out.join(GRAPH), &prepared.graph)?;
    log.output(&a.out.join(GRAPH));
    write_raw(
        &a.out.join(TRAIN_FEATURES),
        prepared.train_features.data(),
        log,
    )?;
    if let Some(p) = &a.test_features {
        let t = prepared.whitener.transform(&load_features(p, g, log)?)?;
        write_raw(&a.out.join(TEST_FEATURES), t.data(), log)?;
    }
    let selected: String = desc.selected.iter().map(|j| format!("{j}\n")).collect();
    write_text(&a.out.join(SELECTED), &selected, log)?;
    log.resolve("s_tilde", desc.selected.len());
    log.resolve("whitened_components", prepared.whitener.components());
    log.resolve("feature_dim", prepared.whitener.output_dim());
    log.resolve("graph_edges", prepared.graph.edges().len());
    Ok(())
}

/// Laplacian for `method`: the semantic graph for apg-graph, an empty graph
/// (unused) for the baselines.
fn method_laplacian(
    method: Method,
    graph: Option<&Path>,
    n: usize,
    log: &mut RunLog,
) -> CliResult<Array2<f64>> {
    let g = match (method, graph) {
        (_, Some(p)) => {
            let g = read_graph(p)?;
            log.input(p);
            if g.n() != n {
                return Err(lapmc::Error::Validation(format!(
                    "{}: graph has {} nodes, features have {n} rows",
                    p.display(),
                    g.n()
                ))
                .into());
            }
            g
        }
        (Method::ApgGraph, None) => {
            return Err(CliError::usage("method apg-graph needs --graph"));
        }
        (_, None) => SemanticGraph::empty(n),
    };
    Ok(laplacian(&g))
}

fn params_text(method: Method, p: &MethodParams) -> String {
    format!(
        "method = {method}\nlambda = {}\ngamma-s = {}\nalpha = {}\n",
        p.lambda, p.gamma_s, p.alpha
    )
}

pub fn cv(a: &CvArgs, g: &Globals, log: &mut RunLog) -> CliResult<()> {
    let x = load_features(&a.features, g, log)?;
    let labels = load_labels(&a.labels, g, log)?;
    let l = method_laplacian(a.method, a.graph.as_deref(), x.n(), log)?;
    let tuning = TuningConfig {
        lambdas: a.grid.lambdas.0.clone(),
        gammas: a.grid.gammas.0.clone(),
        alphas: a.grid.alphas.0.clone(),
        folds: a.grid.folds,
        seed: a.solver.seed,
    };
    let params = pipeline::tune(a.method, &x, &labels, &l, &tuning, &a.solver.config())?;
    write_text(&a.output, &params_text(a.method, &params), log)?;
    log.resolve("lambda", params.lambda);
    log.resolve("gamma_s", params.gamma_s);
    log.resolve("alpha", params.alpha);
    Ok(())
}

fn resolve_params(a: &TrainArgs, log: &mut RunLog) -> CliResult<MethodParams> {
    let defaults = SolverConfig::default();
    let mut p = MethodParams {
        lambda: defaults.lambda,
        gamma_s: defaults.gamma_s,
        alpha: 1.0,
    };
    if let Some(path) = &a.params {
        let kv = read_key_values(path, log)?;
        if let Some(m) = parse_value::<Method>(path, &kv, "method")? {
            if m != a.method {
                return Err(CliError::usage(format!(
                    "conflicting config: {} was tuned for {m}, training {}",
                    path.display(),
                    a.method
                )));
            }
        }
        for (key, flag, slot) in [
            ("lambda", a.lambda, &mut p.lambda),
            ("gamma-s", a.gamma_s, &mut p.gamma_s),
            ("alpha", a.alpha, &mut p.alpha),
        ] {
            let from_file = parse_value::<f64>(path, &kv, key)?;
            if from_file.is_some() && flag.is_some() {
                return Err(CliError::usage(format!(
                    "conflicting config: --{key} given together with --params {}",
                    path.display()
                )));
            }
            if let Some(v) = from_file.or(flag) {
                *slot = v;
            }
        }
    } else {
        p.lambda = a.lambda.unwrap_or(p.lambda);
        p.gamma_s = a.gamma_s.unwrap_or(p.gamma_s);
        p.alpha = a.alpha.unwrap_or(p.alpha);
    }
    if a.method == Method::Nuclear {
        p.gamma_s = 0.0;
    }
    Ok(p)
}

pub fn train(a: &TrainArgs, g: &Globals, log: &mut RunLog) -> CliResult<()> {
    let params = resolve_params(a, log)?;
    let x = load_features(&a.features, g, log)?;
    if !x.is_whitened(1e-6) {
        log::warn!(
            "{}: columns are not orthonormal (error {:.3e}); run prepare first for the nuclear-norm surrogate to hold",
            a.features.display(),
            x.orthonormality_error()
        );
    }
    let labels = load_labels(&a.labels, g, log)?;
    let l = method_laplacian(a.method, a.graph.as_deref(), x.n(), log)?;
    let (model, trace) = pipeline::train(a.method, &x, &labels, &l, &params, &a.solver.config())?;
    write_raw(&a.output, model.coefficients(), log)?;
    let (d, c) = model.coefficients().dim();
    let mut meta = params_text(a.method, &params);
    meta.push_str(&format!("rows = {d}\ncols = {c}\n"));
    if let Some(t) = &trace {
        meta.push_str(&format!(
            "iterations = {}\nconverged = {}\ntruncated = {}\nobjective = {}\n",
            t.iterations(),
            t.converged,
            t.truncated,
            t.final_objective()
        ));
        if t.truncated {
            log::warn!(
                "solver stopped at --max-iters {} before converging",
                a.solver.max_iters
            );
        }
    }
    write_text(&meta_path(&a.output), &meta, log)?;
    match (&trace, &a.trace) {
        (Some(t), Some(path)) => write_text(path, &t.to_csv(), log)?,
        (None, Some(_)) => log::warn!("method {} has no solver trace", a.method),
        _ => {}
    }
    log.resolve("lambda", params.lambda);
    log.resolve("gamma_s", params.gamma_s);
    log.resolve("alpha", params.alpha);
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs, g: &Globals, log: &mut RunLog) -> CliResult<()> {
    let x = load_features(&a.test_features, g, log)?;
    let truth = read_matrix(&a.test_labels, g.format, None)?;
    log.input(&a.test_labels);
    let report_dir = a.report.parent().unwrap_or(Path::new(""));
    let report_stem = a
        .report
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".to_string());
    let omega = a.omega.map(|w| w.to_string()).unwrap_or_default();
    let mut report = String::from("method,omega,lambda,gamma_s,mAP,ap_file\n");
    for model_path in &a.models.0 {
        let meta_file = meta_path(model_path);
        let meta = read_key_values(&meta_file, log)?;
        let method = parse_value::<Method>(&meta_file, &meta, "method")?.ok_or_else(|| {
            lapmc::Error::Validation(format!("{}: missing 'method'", meta_file.display()))
        })?;
        let model = Model::new(read_matrix(
            model_path,
            Some(MatrixFormat::RawBinary),
            None,
        )?)?;
        log.input(model_path);
        let result = pipeline::evaluate(&model, &x, &truth)?;
        let model_stem = model_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let ap_name = format!("{report_stem}.{model_stem}.ap.csv");
        let mut ap = String::from("label,ap\n");
        for (j, v) in result.per_label.iter().enumerate() {
            match v {
                Some(v) => ap.push_str(&format!("{j},{v}\n")),
                None => ap.push_str(&format!("{j},NA\n")),
            }
        }
        write_text(&report_dir.join(&ap_name), &ap, log)?;
        let (lambda, gamma) = match method {
            Method::Ridge => (String::new(), String::new()),
            _ => (
                meta.get("lambda").cloned().unwrap_or_default(),
                meta.get("gamma-s").cloned().unwrap_or_default(),
            ),
        };
        report.push_str(&format!(
            "{method},{omega},{lambda},{gamma},{},{ap_name}\n",
            result.map
        ));
        log.resolve(&format!("map.{model_stem}"), result.map);
    }
    write_text(&a.report, &report, log)?;
    Ok(())
}

pub fn run_pipeline(a: &PipelineArgs, g: &Globals, log: &mut RunLog) -> CliResult<()> {
    use run_files::*;
    create_dir(&a.out)?;
    let data = |name: &str| a.data.join(name);
    let optional = |name: &str| Some(data(name)).filter(|p| p.exists());
    let out = |name: &str| a.out.join(name);

    let mut step = RunLog::default();
    mask(
        &MaskArgs {
            labels: data(data_files::LABELS),
            omega: a.omega,
            mask_mode: a.mask_mode,
            seed: a.solver.seed,
            output: out(MASKED_LABELS),
        },
        g,
        &mut step,
    )?;
    log.merge(std::mem::take(&mut step), "mask.");

    prepare(
        &PrepareArgs {
            features: data(data_files::FEATURES),
            low_dim_features: optional(data_files::LOW_DIM),
            scores: optional(data_files::SCORES),
            labels: out(MASKED_LABELS),
            test_features: Some(data(data_files::TEST_FEATURES)),
            descriptor: a.descriptor.clone(),
            out: a.out.clone(),
        },
        g,
        &mut step,
    )?;
    log.merge(std::mem::take(&mut step), "prepare.");

    let fixed = a.lambda.is_some() || a.gamma_s.is_some() || a.alpha.is_some();
    let mut models = Vec::new();
    for &method in &a.methods.0 {
        let params = if fixed {
            None
        } else {
            let path = out(&params(method));
            cv(
                &CvArgs {
                    features: out(TRAIN_FEATURES),
                    labels: out(MASKED_LABELS),
                    graph: Some(out(GRAPH)),
                    method,
                    grid: a.grid.clone(),
                    solver: a.solver.clone(),
                    output: path.clone(),
                },
                g,
                &mut step,
            )?;
            log.merge(std::mem::take(&mut step), &format!("cv.{method}."));
            Some(path)
        };
        let model_path = out(&model(method));
        train(
            &TrainArgs {
                features: out(TRAIN_FEATURES),
                labels: out(MASKED_LABELS),
                graph: Some(out(GRAPH)),
                method,
                params,
                lambda: a.lambda,
                gamma_s: a.gamma_s,
                alpha: a.alpha,
                solver: a.solver.clone(),
                output: model_path.clone(),
                trace: (method != Method::Ridge).then(|| out(&trace(method))),
            },
            g,
            &mut step,
        )?;
        log.merge(std::mem::take(&mut step), &format!("train.{method}."));
        models.push(model_path);
    }

    evaluate(
        &EvaluateArgs {
            models: List(models),
            test_features: out(TEST_FEATURES),
            test_labels: data(data_files::TEST_LABELS),
            omega: Some(a.omega),
            report: out(REPORT),
        },
        g,
        &mut step,
    )?;
    log.merge(step, "evaluate.");
    Ok(())
}
