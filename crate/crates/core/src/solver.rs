//! Accelerated proximal gradient solver for
//!
//! ```text
//! F(M) = λ‖M‖_* + γ_s·tr(MᵀXᵀL_sXM) + ½‖R_Ω(XM) − Ỹ‖²_F
//! ```
//!
//! The smooth part `f` (everything but the nuclear norm) is linearized at an
//! extrapolated point `V`, and the proximal step is singular value
//! thresholding. The step size is `1/ℓ` where the curvature estimate `ℓ`
//! starts at `lipschitz_init` and is multiplied by `rho` until the quadratic
//! model majorizes `F` at the candidate.

use ndarray::{Array2, ArrayView2, Zip};

use crate::datamodel::{FeatureMatrix, Model, PartialLabels, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg;

/// Line search gives up once the curvature estimate passes
/// `lipschitz_init·rho^MAX_CURVATURE_DOUBLINGS`.
pub const MAX_CURVATURE_DOUBLINGS: i32 = 64;

/// The smooth part `f` of the objective with `XᵀL_sX` precomputed.
#[derive(Debug, Clone)]
pub struct SmoothObjective<'a> {
    x: &'a FeatureMatrix,
    labels: &'a PartialLabels,
    indicator: Array2<f64>,
    /// `XᵀL_sX`, absent when there is no graph term.
    laplacian_gram: Option<Array2<f64>>,
    gamma_s: f64,
}

impl<'a> SmoothObjective<'a> {
    pub fn new(
        x: &'a FeatureMatrix,
        labels: &'a PartialLabels,
        laplacian: Option<ArrayView2<'_, f64>>,
        gamma_s: f64,
    ) -> Result<Self> {
        if labels.n() != x.n() {
            return Err(Error::validation(format!(
                "features have {} rows, labels {}",
                x.n(),
                labels.n()
            )));
        }
        if !(gamma_s.is_finite() && gamma_s >= 0.0) {
            return Err(Error::validation("gamma_s must be finite and >= 0"));
        }
        let laplacian_gram = match laplacian {
            Some(l) => {
                if l.dim() != (x.n(), x.n()) {
                    return Err(Error::validation(format!(
                        "Laplacian is {:?}, expected {n}x{n}",
                        l.dim(),
                        n = x.n()
                    )));
                }
                Some(x.data().t().dot(&l.dot(x.data())))
            }
            None => None,
        };
        Ok(Self {
            x,
            labels,
            indicator: labels.mask().indicator(),
            laplacian_gram,
            gamma_s,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.d(), self.labels.c())
    }

    fn check(&self, m: ArrayView2<'_, f64>) -> Result<()> {
        if m.dim() != self.dims() {
            return Err(Error::validation(format!(
                "coefficient matrix is {:?}, expected {:?}",
                m.dim(),
                self.dims()
            )));
        }
        Ok(())
    }

    /// `R_Ω(XM) − Ỹ`.
    fn residual(&self, m: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut r = self.x.data().dot(&m);
        Zip::from(&mut r)
            .and(&self.indicator)
            .and(self.labels.values())
            .for_each(|p, &keep, &y| *p = *p * keep - y);
        r
    }

    fn graph_active(&self) -> Option<&Array2<f64>> {
        self.laplacian_gram.as_ref().filter(|_| self.gamma_s != 0.0)
    }

    /// `(f(M), ∇f(M))` sharing one product `XM`.
    pub fn value_and_gradient(&self, m: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
        self.check(m)?;
        let r = self.residual(m);
        let mut value = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        let mut grad = self.x.data().t().dot(&r);
        if let Some(k) = self.graph_active() {
            let km = k.dot(&m);
            value += self.gamma_s * (&m * &km).sum();
            grad.scaled_add(2.0 * self.gamma_s, &km);
        }
        Ok((value, grad))
    }

    pub fn value(&self, m: ArrayView2<'_, f64>) -> Result<f64> {
        self.check(m)?;
        let r = self.residual(m);
        let mut value = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        if let Some(k) = self.graph_active() {
            value += self.gamma_s * (&m * &k.dot(&m)).sum();
        }
        Ok(value)
    }
}

/// `f(M) = γ_s·tr(MᵀXᵀL_sXM) + ½‖R_Ω(XM) − Ỹ‖²_F`.
pub fn smooth_loss(
    m: ArrayView2<'_, f64>,
    x: &FeatureMatrix,
    labels: &PartialLabels,
    laplacian: ArrayView2<'_, f64>,
    gamma_s: f64,
) -> Result<f64> {
    SmoothObjective::new(x, labels, Some(laplacian), gamma_s)?.value(m)
}

/// `∇f(M) = 2γ_s·XᵀL_sXM + Xᵀ(R_Ω(XM) − Ỹ)`.
pub fn gradient(
    m: ArrayView2<'_, f64>,
    x: &FeatureMatrix,
    labels: &PartialLabels,
    laplacian: ArrayView2<'_, f64>,
    gamma_s: f64,
) -> Result<Array2<f64>> {
    Ok(SmoothObjective::new(x, labels, Some(laplacian), gamma_s)?
        .value_and_gradient(m)?
        .1)
}

/// `F(M) = λ‖M‖_* + γ_s·tr(MᵀXᵀL_sXM) + ½‖R_Ω(XM) − Ỹ‖²_F`.
pub fn objective(
    m: ArrayView2<'_, f64>,
    x: &FeatureMatrix,
    labels: &PartialLabels,
    laplacian: ArrayView2<'_, f64>,
    lambda: f64,
    gamma_s: f64,
) -> Result<f64> {
    let smooth = smooth_loss(m, x, labels, laplacian, gamma_s)?;
    Ok(lambda * linalg::nuclear_norm(m)? + smooth)
}

/// Singular value thresholding together with the nuclear norm of its result.
pub fn svt_with_norm(a: ArrayView2<'_, f64>, tau: f64) -> Result<(Array2<f64>, f64)> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::validation(format!(
            "threshold must be finite and >= 0, got {tau}"
        )));
    }
    let dec =
        linalg::svd(a).map_err(|e| Error::numeric(format!("singular value thresholding: {e}")))?;
    let kept: Vec<f64> = dec
        .singular_values
        .iter()
        .map(|&s| s - tau)
        .take_while(|&s| s > 0.0)
        .collect();
    let r = kept.len();
    let mut u = dec.u.slice(ndarray::s![.., ..r]).to_owned();
    for (mut col, &s) in u.columns_mut().into_iter().zip(kept.iter()) {
        col *= s;
    }
    let out = u.dot(&dec.vt.slice(ndarray::s![..r, ..]));
    Ok((out, kept.iter().sum()))
}

/// `U·max(Σ − τI, 0)·Vᵀ`, the minimizer of `½‖M − A‖²_F + τ‖M‖_*`.
pub fn svt(a: ArrayView2<'_, f64>, tau: f64) -> Result<Array2<f64>> {
    Ok(svt_with_norm(a, tau)?.0)
}

/// Momentum update `θ ← (√(θ⁴ + 4θ²) − θ²)/2`.
pub fn next_theta(theta: f64) -> f64 {
    let t2 = theta * theta;
    ((t2 * t2 + 4.0 * t2).sqrt() - t2) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `F` at the accepted iterate after this iteration.
    pub objective: f64,
    pub smooth_loss: f64,
    pub nuclear_norm: f64,
    /// Curvature estimate `ℓ` used for the step (step size `1/ℓ`).
    pub curvature: f64,
    /// Number of line-search trials (1 if the first one succeeded).
    pub trials: usize,
    /// False when the prox candidate increased `F` and the previous iterate
    /// was kept.
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    /// Record 0 describes the starting point.
    pub records: Vec<IterationRecord>,
    /// Stopped because the relative decrease fell below ε.
    pub converged: bool,
    /// Stopped at the iteration cap.
    pub truncated: bool,
}

impl SolveTrace {
    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }

    /// Number of iterations performed (excluding the starting record).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// CSV with header `k,F,f,nuclear,curvature,trials`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,F,f,nuclear,curvature,trials\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration, r.objective, r.smooth_loss, r.nuclear_norm, r.curvature, r.trials
            ));
        }
        out
    }
}

fn ensure_finite(value: f64, what: &str, iteration: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numeric(format!(
            "{what} became non-finite ({value}) at iteration {iteration}"
        )))
    }
}

/// Runs APG from `M = 0`. `x` should have orthonormal columns, which makes
/// `‖M‖_*` equal to `‖XM‖_*`.
///
/// Iterates are kept monotone: when a prox candidate would increase `F`, the
/// previous iterate is kept and the candidate only feeds the next
/// extrapolation, so the recorded objective sequence never increases.
pub fn apg_solve(
    x: &FeatureMatrix,
    labels: &PartialLabels,
    laplacian: Option<ArrayView2<'_, f64>>,
    config: &SolverConfig,
) -> Result<(Model, SolveTrace)> {
    config.validate()?;
    let problem = SmoothObjective::new(x, labels, laplacian, config.gamma_s)?;
    apg_solve_problem(&problem, config, None)
}

/// APG on a prepared smooth objective, optionally warm-started.
pub fn apg_solve_problem(
    problem: &SmoothObjective<'_>,
    config: &SolverConfig,
    init: Option<ArrayView2<'_, f64>>,
) -> Result<(Model, SolveTrace)> {
    config.validate()?;
    let lambda = config.lambda;
    let (d, c) = problem.dims();
    let mut current = match init {
        Some(m) => {
            problem.check(m)?;
            m.to_owned()
        }
        None => Array2::zeros((d, c)),
    };
    let mut previous = current.clone();
    let mut candidate = current.clone();
    let mut nuclear = if init.is_some() {
        linalg::nuclear_norm(current.view())?
    } else {
        0.0
    };
    let mut smooth = ensure_finite(problem.value(current.view())?, "smooth loss", 0)?;
    let mut value = ensure_finite(lambda * nuclear + smooth, "objective", 0)?;

    let mut curvature = config.lipschitz_init;
    let max_curvature = config.lipschitz_init * config.rho.powi(MAX_CURVATURE_DOUBLINGS);
    let mut theta_prev = config.theta_init;
    let mut theta = config.theta_init;

    let mut trace = SolveTrace::default();
    trace.records.push(IterationRecord {
        iteration: 0,
        objective: value,
        smooth_loss: smooth,
        nuclear_norm: nuclear,
        curvature,
        trials: 0,
        accepted: true,
    });
    if value == 0.0 {
        trace.converged = true;
        return Ok((Model::new(current)?, trace));
    }

    for k in 1..=config.max_iters {
        // V = M + (θ/θ₋)(Z − M) + θ(1/θ₋ − 1)(M − M₋); the first term vanishes
        // whenever the last candidate Z was accepted.
        let mut v = current.clone();
        v.scaled_add(theta / theta_prev, &(&candidate - &current));
        v.scaled_add(theta * (1.0 / theta_prev - 1.0), &(&current - &previous));

        let (f_v, grad_v) = problem.value_and_gradient(v.view())?;
        ensure_finite(f_v, "smooth loss at extrapolated point", k)?;

        let mut trials = 0;
        let (cand, cand_nuclear, cand_smooth) = loop {
            trials += 1;
            let mut step = v.clone();
            step.scaled_add(-1.0 / curvature, &grad_v);
            let (m, m_nuclear) = svt_with_norm(step.view(), lambda / curvature)?;
            let m_smooth = ensure_finite(problem.value(m.view())?, "smooth loss", k)?;
            let diff = &m - &v;
            let model = f_v
                + (&diff * &grad_v).sum()
                + 0.5 * curvature * diff.iter().map(|e| e * e).sum::<f64>();
            // F(M) ≤ Q(M, V); the λ‖M‖_* terms coincide on both sides
            let slack = 1e-12 * model.abs().max(1.0);
            if m_smooth <= model + slack {
                break (m, m_nuclear, m_smooth);
            }
            curvature *= config.rho;
            if curvature > max_curvature {
                return Err(Error::numeric(format!(
                    "line search did not terminate at iteration {k}: curvature estimate exceeded {max_curvature:e}"
                )));
            }
        };

        let cand_value = ensure_finite(lambda * cand_nuclear + cand_smooth, "objective", k)?;
        let accepted = cand_value <= value;
        let relative_decrease = (value - cand_value) / value;
        previous = current.clone();
        if accepted {
            current = cand.clone();
            nuclear = cand_nuclear;
            smooth = cand_smooth;
            value = cand_value;
        }
        candidate = cand;

        theta_prev = theta;
        theta = next_theta(theta);

        trace.records.push(IterationRecord {
            iteration: k,
            objective: value,
            smooth_loss: smooth,
            nuclear_norm: nuclear,
            curvature,
            trials,
            accepted,
        });

        if accepted && (relative_decrease < config.epsilon || value == 0.0) {
            trace.converged = true;
            break;
        }
    }
    trace.truncated = !trace.converged;
    if trace.truncated {
        log::warn!(
            "APG stopped at the iteration cap ({}) before reaching relative decrease {}",
            config.max_iters,
            config.epsilon
        );
    }
    Ok((Model::new(current)?, trace))
}
