//! Boundary regressors and a small softmax classifier.
//!
//! Both regressors optionally standardize columns (mean 0, variance 1, with
//! statistics frozen at fit) before solving. Centering is done implicitly so
//! sparse TF-IDF/PPMI matrices are never densified. Fitted weights are
//! mapped back to the original feature space, so [`predict`] applies them
//! to raw feature rows.
//!
//! ElasticNet minimizes the un-normalized objective
//!
//! ```text
//! F(w, b) = 1/2 ||y - Xw - b||^2 + lambda1 ||w||_1 + lambda2/2 ||w||_2^2
//! ```
//!
//! by cyclic coordinate descent with soft-thresholding, over the
//! standardized design when standardization is on.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::argmax;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{cholesky_solve, SquareMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OlsConfig {
    /// Added to the diagonal of the normal equations (intercept excluded).
    pub ridge_eps: f64,
    pub standardize: bool,
    pub fit_intercept: bool,
}

impl Default for OlsConfig {
    fn default() -> Self {
        OlsConfig {
            ridge_eps: 1e-3,
            standardize: true,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticNetConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iter: usize,
    /// Stop once the largest coefficient change in a sweep falls below this.
    pub tol: f64,
    pub standardize: bool,
    pub fit_intercept: bool,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        ElasticNetConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            max_iter: 1000,
            tol: 1e-6,
            standardize: true,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegressorConfig {
    Ols(OlsConfig),
    Elasticnet(ElasticNetConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Ols,
    Elasticnet,
}

/// Per-column `x' = (x - center) / scale` used while fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub iterations: usize,
    /// Final objective value in the (standardized) fitting coordinates.
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorModel {
    pub config: RegressorConfig,
    /// Weights in the original feature space.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub standardization: Standardization,
    pub fit_meta: FitMeta,
}

impl RegressorModel {
    pub fn kind(&self) -> RegressorKind {
        match self.config {
            RegressorConfig::Ols(_) => RegressorKind::Ols,
            RegressorConfig::Elasticnet(_) => RegressorKind::Elasticnet,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// A model that predicts `intercept` everywhere.
    pub fn constant(dim: usize, intercept: f64) -> Self {
        RegressorModel {
            config: RegressorConfig::Ols(OlsConfig::default()),
            weights: vec![0.0; dim],
            intercept,
            standardization: Standardization {
                center: vec![0.0; dim],
                scale: vec![1.0; dim],
            },
            fit_meta: FitMeta {
                iterations: 0,
                objective: 0.0,
                converged: true,
            },
        }
    }
}

/// Column access to a CSR matrix with implicit centering and scaling.
struct Design<'a> {
    x: &'a FeatureMatrix,
    n: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    vals: Vec<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Squared norm of each transformed column.
    sq_norm: Vec<f64>,
    /// Sum of each transformed column.
    col_sum: Vec<f64>,
    /// Raw sum of each column.
    raw_sum: Vec<f64>,
    active: Vec<bool>,
}

impl<'a> Design<'a> {
    fn new(x: &'a FeatureMatrix, standardize: bool, fit_intercept: bool) -> Self {
        let (n, p) = (x.n_rows(), x.n_cols());
        let mut counts = vec![0usize; p + 1];
        for i in 0..n {
            for &j in x.row(i).0 {
                counts[j + 1] += 1;
            }
        }
        for j in 0..p {
            counts[j + 1] += counts[j];
        }
        let colptr = counts;
        let mut fill = colptr.clone();
        let mut rowidx = vec![0; x.nnz()];
        let mut vals = vec![0.0; x.nnz()];
        for i in 0..n {
            let (idx, val) = x.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                rowidx[fill[j]] = i;
                vals[fill[j]] = v;
                fill[j] += 1;
            }
        }

        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        let mut sq_norm = vec![0.0; p];
        let mut col_sum = vec![0.0; p];
        let mut raw_sum = vec![0.0; p];
        let mut active = vec![false; p];
        for j in 0..p {
            let col = &vals[colptr[j]..colptr[j + 1]];
            let sum: f64 = col.iter().sum();
            let raw_sq: f64 = col.iter().map(|v| v * v).sum();
            let c = if fit_intercept && n > 0 { sum / n as f64 } else { 0.0 };
            let zeros = (n - col.len()) as f64;
            let centered_sq = col.iter().map(|v| (v - c) * (v - c)).sum::<f64>() + zeros * c * c;
            raw_sum[j] = sum;
            center[j] = c;
            if centered_sq <= 1e-20 * raw_sq || centered_sq == 0.0 {
                continue;
            }
            active[j] = true;
            let s = if standardize {
                (centered_sq / n as f64).sqrt()
            } else {
                1.0
            };
            scale[j] = s;
            sq_norm[j] = centered_sq / (s * s);
            col_sum[j] = (sum - n as f64 * c) / s;
        }
        Design {
            x,
            n,
            colptr,
            rowidx,
            vals,
            center,
            scale,
            sq_norm,
            col_sum,
            raw_sum,
            active,
        }
    }

    fn p(&self) -> usize {
        self.center.len()
    }

    fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let span = self.colptr[j]..self.colptr[j + 1];
        (&self.rowidx[span.clone()], &self.vals[span])
    }

    /// `sum_i x'_ij (v_i + shift)` given `v_plus_shift_sum = sum_i (v_i + shift)`.
    fn col_dot(&self, j: usize, v: &[f64], shift: f64, v_plus_shift_sum: f64) -> f64 {
        let (rows, vals) = self.col(j);
        let raw: f64 = rows.iter().zip(vals).map(|(&i, &x)| x * (v[i] + shift)).sum();
        (raw - self.center[j] * v_plus_shift_sum) / self.scale[j]
    }

    fn standardization(&self) -> Standardization {
        Standardization {
            center: self.center.clone(),
            scale: self.scale.clone(),
        }
    }

    /// Maps fitting-space `(w, b)` to original-space weights and intercept.
    fn unstandardize(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let weights: Vec<f64> = w.iter().zip(&self.scale).map(|(w, s)| w / s).collect();
        let intercept = b - weights.iter().zip(&self.center).map(|(w, c)| w * c).sum::<f64>();
        (weights, intercept)
    }
}

fn check_targets(x: &FeatureMatrix, y: &[f64]) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("no training rows".into()));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("target {v}")));
    }
    Ok(())
}

fn finish(
    design: &Design<'_>,
    config: RegressorConfig,
    w: &[f64],
    b: f64,
    fit_meta: FitMeta,
) -> Result<RegressorModel> {
    let (weights, intercept) = design.unstandardize(w, b);
    if !intercept.is_finite() || weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fitted coefficients".into()));
    }
    Ok(RegressorModel {
        config,
        weights,
        intercept,
        standardization: design.standardization(),
        fit_meta,
    })
}

/// Least squares through the normal equations. With more active features
/// than rows the equivalent dual system `(X X^T + eps I) a = y` is solved
/// instead, which requires `ridge_eps > 0`.
pub fn fit_ols(x: &FeatureMatrix, y: &[f64], config: &OlsConfig) -> Result<RegressorModel> {
    check_targets(x, y)?;
    if !(config.ridge_eps >= 0.0) {
        return Err(Error::InvalidArgument("ridge_eps must be >= 0".into()));
    }
    let design = Design::new(x, config.standardize, config.fit_intercept);
    let n = design.n;
    let y_mean = if config.fit_intercept {
        y.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let yc_sum: f64 = yc.iter().sum();
    let eps = config.ridge_eps;

    let inactive = design.active.iter().any(|a| !a);
    let active: Vec<usize> = (0..design.p()).filter(|&j| design.active[j]).collect();
    if eps == 0.0 && (inactive || active.len() > n) {
        return Err(Error::Singular(
            "rank-deficient design (constant or surplus columns); use ridge_eps > 0".into(),
        ));
    }

    let mut w = vec![0.0; design.p()];
    if !active.is_empty() {
        let solved = if active.len() <= n {
            solve_primal(&design, &active, &yc, yc_sum, eps)
        } else {
            solve_dual(&design, &active, &yc, eps)
        };
        let coef = solved.ok_or_else(|| {
            Error::Singular(if eps == 0.0 {
                "normal equations are singular; use ridge_eps > 0".into()
            } else {
                format!("normal equations not positive definite at ridge_eps = {eps}")
            })
        })?;
        for (&j, c) in active.iter().zip(coef) {
            w[j] = c;
        }
    }

    let (weights, intercept) = design.unstandardize(&w, y_mean);
    let sse: f64 = (0..n)
        .map(|i| {
            let r = y[i] - x.row_dot(i, &weights) - intercept;
            r * r
        })
        .sum();
    let penalty = 0.5 * eps * w.iter().map(|v| v * v).sum::<f64>();
    let meta = FitMeta {
        iterations: 1,
        objective: 0.5 * sse + penalty,
        converged: true,
    };
    finish(&design, RegressorConfig::Ols(config.clone()), &w, y_mean, meta)
}

fn solve_primal(
    design: &Design<'_>,
    active: &[usize],
    yc: &[f64],
    yc_sum: f64,
    eps: f64,
) -> Option<Vec<f64>> {
    let p = design.p();
    let n = design.n as f64;
    let mut pos = vec![usize::MAX; p];
    for (k, &j) in active.iter().enumerate() {
        pos[j] = k;
    }
    let m = active.len();
    let mut raw = SquareMatrix::zeros(m);
    for i in 0..design.n {
        let (idx, val) = design.x.row(i);
        for (a, (&j, &xj)) in idx.iter().zip(val).enumerate() {
            let pj = pos[j];
            if pj == usize::MAX {
                continue;
            }
            for (&k, &xk) in idx[a..].iter().zip(&val[a..]) {
                let pk = pos[k];
                if pk != usize::MAX {
                    *raw.at_mut(pj, pk) += xj * xk;
                }
            }
        }
    }
    let mut gram = SquareMatrix::zeros(m);
    for (a, &j) in active.iter().enumerate() {
        for (b, &k) in active.iter().enumerate().skip(a) {
            // raw is filled on and above the diagonal only
            let cross = raw.at(a, b);
            let (cj, ck) = (design.center[j], design.center[k]);
            let v = (cross - cj * design.raw_sum[k] - ck * design.raw_sum[j] + n * cj * ck)
                / (design.scale[j] * design.scale[k]);
            *gram.at_mut(a, b) = v;
            *gram.at_mut(b, a) = v;
        }
        *gram.at_mut(a, a) += eps;
    }
    let rhs: Vec<f64> = active
        .iter()
        .map(|&j| design.col_dot(j, yc, 0.0, yc_sum))
        .collect();
    cholesky_solve(&gram, &rhs)
}

fn solve_dual(design: &Design<'_>, active: &[usize], yc: &[f64], eps: f64) -> Option<Vec<f64>> {
    let n = design.n;
    let p = design.p();
    let mut mask = vec![false; p];
    for &j in active {
        mask[j] = true;
    }
    // m_j = c_j / s_j; rows are x'_i - m with x'_i = x_i / s
    let m: Vec<f64> = (0..p)
        .map(|j| if mask[j] { design.center[j] / design.scale[j] } else { 0.0 })
        .collect();
    let mm: f64 = m.iter().map(|v| v * v).sum();
    let scaled_row = |i: usize| -> Vec<(usize, f64)> {
        let (idx, val) = design.x.row(i);
        idx.iter()
            .zip(val)
            .filter(|(&j, _)| mask[j])
            .map(|(&j, &v)| (j, v / design.scale[j]))
            .collect()
    };
    let rows: Vec<Vec<(usize, f64)>> = (0..n).map(scaled_row).collect();
    let row_m: Vec<f64> = rows.iter().map(|r| r.iter().map(|&(j, v)| v * m[j]).sum()).collect();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dense = vec![0.0; p];
            for &(j, v) in &rows[i] {
                dense[j] = v;
            }
            (i..n)
                .map(|l| {
                    let dot: f64 = rows[l].iter().map(|&(j, v)| v * dense[j]).sum();
                    dot - row_m[i] - row_m[l] + mm
                })
                .collect()
        })
        .collect();
    let mut kernel = SquareMatrix::zeros(n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            *kernel.at_mut(i, i + off) = v;
            *kernel.at_mut(i + off, i) = v;
        }
        *kernel.at_mut(i, i) += eps;
    }
    let alpha = cholesky_solve(&kernel, yc)?;
    let alpha_sum: f64 = alpha.iter().sum();
    Some(
        active
            .iter()
            .map(|&j| design.col_dot(j, &alpha, 0.0, alpha_sum))
            .collect(),
    )
}

/// `sign(rho) * max(0, |rho| - lambda)`.
pub fn soft_threshold(rho: f64, lambda: f64) -> f64 {
    if rho > lambda {
        rho - lambda
    } else if rho < -lambda {
        rho + lambda
    } else {
        0.0
    }
}

pub fn fit_elasticnet(
    x: &FeatureMatrix,
    y: &[f64],
    config: &ElasticNetConfig,
) -> Result<RegressorModel> {
    fit_elasticnet_traced(x, y, config).map(|(model, _)| model)
}

/// Like [`fit_elasticnet`], also returning the objective after every sweep.
pub fn fit_elasticnet_traced(
    x: &FeatureMatrix,
    y: &[f64],
    config: &ElasticNetConfig,
) -> Result<(RegressorModel, Vec<f64>)> {
    check_targets(x, y)?;
    if !(config.lambda1 >= 0.0 && config.lambda2 >= 0.0) {
        return Err(Error::InvalidArgument("lambda1 and lambda2 must be >= 0".into()));
    }
    if config.max_iter == 0 || !(config.tol > 0.0) {
        return Err(Error::InvalidArgument("need max_iter >= 1 and tol > 0".into()));
    }
    let design = Design::new(x, config.standardize, config.fit_intercept);
    let n = design.n;
    let p = design.p();
    let (l1, l2) = (config.lambda1, config.lambda2);

    let mut w = vec![0.0; p];
    let mut b = if config.fit_intercept {
        y.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    // residual r_i = r_vec[i] + shift
    let mut r_vec = y.to_vec();
    let mut shift = -b;
    let objective = |r_vec: &[f64], shift: f64, w: &[f64]| {
        let sse: f64 = r_vec.iter().map(|r| (r + shift) * (r + shift)).sum();
        let l1n: f64 = w.iter().map(|v| v.abs()).sum();
        let l2n: f64 = w.iter().map(|v| v * v).sum();
        0.5 * sse + l1 * l1n + 0.5 * l2 * l2n
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < config.max_iter {
        sweeps += 1;
        let mut r_sum = r_vec.iter().sum::<f64>() + n as f64 * shift;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if !design.active[j] {
                continue;
            }
            let z = design.sq_norm[j];
            let rho = design.col_dot(j, &r_vec, shift, r_sum) + z * w[j];
            let updated = soft_threshold(rho, l1) / (z + l2);
            let delta = updated - w[j];
            if delta != 0.0 {
                let s = design.scale[j];
                let (rows, vals) = design.col(j);
                for (&i, &v) in rows.iter().zip(vals) {
                    r_vec[i] -= delta * v / s;
                }
                shift += delta * design.center[j] / s;
                r_sum -= delta * design.col_sum[j];
                w[j] = updated;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if config.fit_intercept {
            let mean = (r_vec.iter().sum::<f64>() + n as f64 * shift) / n as f64;
            b += mean;
            shift -= mean;
        }
        trace.push(objective(&r_vec, shift, &w));
        if max_delta < config.tol {
            converged = true;
            break;
        }
    }

    let meta = FitMeta {
        iterations: sweeps,
        objective: *trace.last().expect("at least one sweep"),
        converged,
    };
    let model = finish(&design, RegressorConfig::Elasticnet(config.clone()), &w, b, meta)?;
    Ok((model, trace))
}

pub fn fit_regressor(x: &FeatureMatrix, y: &[f64], config: &RegressorConfig) -> Result<RegressorModel> {
    match config {
        RegressorConfig::Ols(c) => fit_ols(x, y, c),
        RegressorConfig::Elasticnet(c) => fit_elasticnet(x, y, c),
    }
}

/// `Xw + b` per row.
pub fn predict(model: &RegressorModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    if x.n_cols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.n_cols(),
        });
    }
    Ok((0..x.n_rows())
        .map(|i| x.row_dot(i, &model.weights) + model.intercept)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftmaxConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        SoftmaxConfig {
            lr: 0.5,
            epochs: 200,
            l2: 1e-4,
        }
    }
}

/// Multinomial logistic regression: `classes x features` weights plus biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl ClassifierModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        ClassifierModel {
            weights: vec![vec![0.0; dim]; classes],
            biases: vec![0.0; classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn row_proba(&self, x: &FeatureMatrix, i: usize) -> Vec<f64> {
        let logits: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| x.row_dot(i, w) + b)
            .collect();
        softmax(&logits)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean cross-entropy plus `l2/2 ||W||^2` (biases unpenalized) and its
/// gradient, returned as a model-shaped value.
pub fn softmax_loss_and_gradient(
    model: &ClassifierModel,
    x: &FeatureMatrix,
    y: &[usize],
    l2: f64,
) -> (f64, ClassifierModel) {
    let n = x.n_rows();
    let k = model.n_classes();
    let mut grad = ClassifierModel::zeros(k, model.dim());
    let mut loss = 0.0;
    for i in 0..n {
        let probs = model.row_proba(x, i);
        loss -= probs[y[i]].max(f64::MIN_POSITIVE).ln();
        let (idx, val) = x.row(i);
        for (c, &p) in probs.iter().enumerate() {
            let g = p - if c == y[i] { 1.0 } else { 0.0 };
            grad.biases[c] += g;
            for (&j, &v) in idx.iter().zip(val) {
                grad.weights[c][j] += g * v;
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    loss *= inv_n;
    for (gw, w) in grad.weights.iter_mut().zip(&model.weights) {
        for (g, wv) in gw.iter_mut().zip(w) {
            *g = *g * inv_n + l2 * wv;
            loss += 0.5 * l2 * wv * wv;
        }
    }
    for g in &mut grad.biases {
        *g *= inv_n;
    }
    (loss, grad)
}

fn cmp_rows(x: &FeatureMatrix, y: &[usize], a: usize, b: usize) -> Ordering {
    let (ia, va) = x.row(a);
    let (ib, vb) = x.row(b);
    y[a].cmp(&y[b])
        .then_with(|| ia.cmp(ib))
        .then_with(|| {
            va.iter()
                .zip(vb)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Full-batch gradient descent from zero weights. Rows are visited in a
/// canonical order, so the result does not depend on the input row order.
pub fn fit_softmax(x: &FeatureMatrix, y: &[usize], config: &SoftmaxConfig) -> Result<ClassifierModel> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if !(config.lr > 0.0) || !(config.l2 >= 0.0) {
        return Err(Error::InvalidArgument("need lr > 0 and l2 >= 0".into()));
    }
    let mut distinct: Vec<usize> = y.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InvalidArgument(
            "softmax classifier needs at least two distinct classes".into(),
        ));
    }
    let k = distinct[distinct.len() - 1] + 1;
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| cmp_rows(x, y, a, b));
    let xs = x.select_rows(&order);
    let ys: Vec<usize> = order.iter().map(|&i| y[i]).collect();

    let mut model = ClassifierModel::zeros(k, x.n_cols());
    for _ in 0..config.epochs {
        let (_, grad) = softmax_loss_and_gradient(&model, &xs, &ys, config.l2);
        for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
            for (wv, gv) in w.iter_mut().zip(g) {
                *wv -= config.lr * gv;
            }
        }
        for (b, g) in model.biases.iter_mut().zip(&grad.biases) {
            *b -= config.lr * g;
        }
    }
    Ok(model)
}

pub fn predict_proba(model: &ClassifierModel, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
    if x.n_cols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.n_cols(),
        });
    }
    Ok((0..x.n_rows()).map(|i| model.row_proba(x, i)).collect())
}

pub fn predict_class(model: &ClassifierModel, x: &FeatureMatrix) -> Result<Vec<usize>> {
    Ok(predict_proba(model, x)?
        .iter()
        .map(|p| argmax(p).expect("at least two classes"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw_ols(eps: f64) -> OlsConfig {
        OlsConfig {
            ridge_eps: eps,
            standardize: false,
            fit_intercept: true,
        }
    }

    fn plain_en(l1: f64, l2: f64) -> ElasticNetConfig {
        ElasticNetConfig {
            lambda1: l1,
            lambda2: l2,
            max_iter: 100_000,
            tol: 1e-12,
            standardize: false,
            fit_intercept: true,
        }
    }

    fn mat(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (FeatureMatrix, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| (j as f64 - 1.5) * v).sum::<f64>() + rng.gen_range(-1.0..1.0))
            .collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn ols_noiseless_line() {
        let m = fit_ols(&mat(&[&[1.0], &[2.0]]), &[2.0, 4.0], &raw_ols(0.0)).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
    }

    #[test]
    fn ols_hand_solution() {
        let m = fit_ols(&mat(&[&[1.0], &[2.0], &[3.0]]), &[1.0, 2.0, 2.0], &raw_ols(0.0)).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-12);
        assert!((m.intercept - 2.0 / 3.0).abs() < 1e-12);
        let std = fit_ols(
            &mat(&[&[1.0], &[2.0], &[3.0]]),
            &[1.0, 2.0, 2.0],
            &OlsConfig {
                ridge_eps: 0.0,
                ..OlsConfig::default()
            },
        )
        .unwrap();
        assert!((std.weights[0] - 0.5).abs() < 1e-12);
        assert!((std.intercept - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ols_duplicate_columns_singular() {
        let x = mat(&[&[1.0, 1.0], &[2.0, 2.0], &[4.0, 4.0]]);
        let err = fit_ols(&x, &[1.0, 2.0, 3.0], &raw_ols(0.0)).unwrap_err();
        assert!(matches!(err, Error::Singular(ref m) if m.contains("ridge_eps")), "{err}");
        fit_ols(&x, &[1.0, 2.0, 3.0], &raw_ols(1e-6)).unwrap();
    }

    #[test]
    fn ols_dual_matches_primal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = random_problem(&mut rng, 6, 9);
        let cfg = OlsConfig {
            ridge_eps: 0.5,
            ..OlsConfig::default()
        };
        let dual = fit_ols(&x, &y, &cfg).unwrap();
        // primal reference on the same standardized problem, built densely
        let design = Design::new(&x, true, true);
        let active: Vec<usize> = (0..9).collect();
        let ym = y.iter().sum::<f64>() / 6.0;
        let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
        let w = solve_primal(&design, &active, &yc, yc.iter().sum(), 0.5).unwrap();
        let (weights, intercept) = design.unstandardize(&w, ym);
        for (a, b) in dual.weights.iter().zip(&weights) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!((dual.intercept - intercept).abs() < 1e-9);
    }

    #[test]
    fn elasticnet_soft_threshold_on_identity() {
        let cfg = ElasticNetConfig {
            fit_intercept: false,
            ..plain_en(1.0, 0.0)
        };
        let m = fit_elasticnet(&mat(&[&[1.0, 0.0], &[0.0, 1.0]]), &[3.0, 0.5], &cfg).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-12);
        assert_eq!(m.weights[1], 0.0);
        assert_eq!(m.intercept, 0.0);
    }

    #[test]
    fn elasticnet_without_penalty_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, y) = random_problem(&mut rng, 20, 5);
        let ols = fit_ols(&x, &y, &raw_ols(0.0)).unwrap();
        let en = fit_elasticnet(&x, &y, &plain_en(0.0, 0.0)).unwrap();
        for (a, b) in ols.weights.iter().zip(&en.weights) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((ols.intercept - en.intercept).abs() < 1e-6);
    }

    #[test]
    fn elasticnet_full_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = random_problem(&mut rng, 15, 4);
        let m = fit_elasticnet(&x, &y, &ElasticNetConfig {
            lambda1: 1e6,
            ..ElasticNetConfig::default()
        })
        .unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.intercept - mean).abs() < 1e-12);
    }

    #[test]
    fn elasticnet_objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (x, y) = random_problem(&mut rng, 12, 6);
            let cfg = ElasticNetConfig {
                lambda1: rng.gen_range(0.0..3.0),
                lambda2: rng.gen_range(0.0..3.0),
                max_iter: 200,
                tol: 1e-10,
                standardize: rng.gen(),
                fit_intercept: rng.gen(),
            };
            let (_, trace) = fit_elasticnet_traced(&x, &y, &cfg).unwrap();
            for pair in trace.windows(2) {
                assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-12, "{pair:?}");
            }
        }
    }

    #[test]
    fn elasticnet_rejects_bad_targets() {
        let x = mat(&[&[1.0], &[2.0]]);
        assert!(matches!(
            fit_elasticnet(&x, &[1.0, f64::NAN], &ElasticNetConfig::default()).unwrap_err(),
            Error::NonFinite(_)
        ));
        assert!(fit_elasticnet(&x, &[1.0], &ElasticNetConfig::default()).is_err());
    }

    #[test]
    fn predict_examples() {
        let m = RegressorModel::constant(2, 7.5);
        assert_eq!(predict(&m, &mat(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap(), vec![7.5, 7.5]);
        let line = fit_ols(&mat(&[&[1.0], &[2.0]]), &[2.0, 4.0], &raw_ols(0.0)).unwrap();
        let p = predict(&line, &mat(&[&[3.0]])).unwrap();
        assert!((p[0] - 6.0).abs() < 1e-12);
        assert_eq!(p, predict(&line, &mat(&[&[3.0]])).unwrap());
        assert!(matches!(
            predict(&line, &mat(&[&[3.0, 1.0]])).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn model_json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y) = random_problem(&mut rng, 10, 3);
        let m = fit_elasticnet(&x, &y, &ElasticNetConfig::default()).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"kind\":\"elasticnet\""));
        let back: RegressorModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn softmax_starts_uniform_and_rows_sum_to_one() {
        let x = mat(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let zero = ClassifierModel::zeros(3, 2);
        for row in predict_proba(&zero, &x).unwrap() {
            for p in row {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let m = fit_softmax(&x, &[0, 2], &SoftmaxConfig::default()).unwrap();
        for row in predict_proba(&m, &x).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_separable_and_order_free() {
        let x = mat(&[&[-2.0], &[-1.0], &[1.0], &[2.0]]);
        let y = [0, 0, 1, 1];
        let cfg = SoftmaxConfig {
            lr: 0.5,
            epochs: 100,
            l2: 0.0,
        };
        let m = fit_softmax(&x, &y, &cfg).unwrap();
        assert_eq!(predict_class(&m, &x).unwrap(), vec![0, 0, 1, 1]);

        let perm = [2, 0, 3, 1];
        let xp = x.select_rows(&perm);
        let yp: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
        assert_eq!(fit_softmax(&xp, &yp, &cfg).unwrap(), m);
    }

    #[test]
    fn softmax_single_class_rejected() {
        let x = mat(&[&[1.0], &[2.0]]);
        assert!(fit_softmax(&x, &[1, 1], &SoftmaxConfig::default()).is_err());
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (x, _) = random_problem(&mut rng, 4, 3);
        let y = [0, 2, 1, 2];
        let mut model = ClassifierModel::zeros(3, 3);
        for w in model.weights.iter_mut().flatten() {
            *w = rng.gen_range(-1.0..1.0);
        }
        for b in &mut model.biases {
            *b = rng.gen_range(-1.0..1.0);
        }
        let l2 = 0.1;
        let (_, grad) = softmax_loss_and_gradient(&model, &x, &y, l2);
        let h = 1e-5;
        for c in 0..3 {
            for j in 0..3 {
                let mut plus = model.clone();
                plus.weights[c][j] += h;
                let mut minus = model.clone();
                minus.weights[c][j] -= h;
                let fd = (softmax_loss_and_gradient(&plus, &x, &y, l2).0
                    - softmax_loss_and_gradient(&minus, &x, &y, l2).0)
                    / (2.0 * h);
                let g = grad.weights[c][j];
                assert!((fd - g).abs() <= 1e-4 * fd.abs().max(g.abs()).max(1e-8));
            }
        }
    }
}
