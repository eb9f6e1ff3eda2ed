use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{Kernel, KernelKind};
use crate::evaluation::{f1, Confusion};
use crate::{Error, Result};

/// SMO stopping rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoConfig {
    /// Maximal KKT violation accepted at convergence.
    pub tolerance: f64,
    /// Upper bound on sweeps; one sweep is `n` pair updates.
    pub max_passes: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        SmoConfig {
            tolerance: 1e-3,
            max_passes: 10_000,
        }
    }
}

/// Dual solution of a soft-margin SVM.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Decision function is `sum_i alpha_i y_i K(x_i, x) + bias`.
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

const TAU: f64 = 1e-12;

fn sign(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

/// Solves `min 1/2 a'Qa - sum a` s.t. `0 <= a_i <= c_i`, `sum y_i a_i = 0`,
/// with `Q_ij = y_i y_j K_ij`, by SMO with second-order working-set
/// selection. `gram` is the full `n x n` kernel matrix, row-major.
pub fn smo_solve(gram: &[f64], y: &[bool], c: &[f64], cfg: &SmoConfig) -> Result<SmoSolution> {
    let n = y.len();
    if gram.len() != n * n || c.len() != n {
        return Err(Error::Shape(format!(
            "SMO: {n} labels, {} box bounds, gram of {} entries",
            c.len(),
            gram.len()
        )));
    }
    if !(y.iter().any(|&v| v) && y.iter().any(|&v| !v)) {
        return Err(Error::SingleClass);
    }
    let ys: Vec<f64> = y.iter().map(|&v| sign(v)).collect();
    let k = |i: usize, j: usize| gram[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: &[f64], i: usize| a[i] >= c[i];
    let lower = |a: &[f64], i: usize| a[i] <= 0.0;
    let max_iter = cfg.max_passes.saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // i: maximal violating index in I_up.
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -ys[t] * grad[t];
            let in_up = if ys[t] > 0.0 { !upper(&alpha, t) } else { !lower(&alpha, t) };
            if in_up && v >= g_max {
                g_max = v;
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            let in_low = if ys[t] > 0.0 { !lower(&alpha, t) } else { !upper(&alpha, t) };
            if !in_low {
                continue;
            }
            let v = ys[t] * grad[t];
            g_max2 = g_max2.max(v);
            let diff = g_max + v;
            if diff > 0.0 {
                let quad = k(i, i) + k(t, t) - 2.0 * k(i, t);
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= best_obj {
                    best_obj = obj;
                    j_sel = Some(t);
                }
            }
        }
        let Some(j) = j_sel.filter(|_| g_max + g_max2 >= cfg.tolerance) else {
            converged = true;
            break;
        };
        iterations += 1;
        let (ci, cj) = (c[i], c[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let q_ij = ys[i] * ys[j] * k(i, j);
        if ys[i] != ys[j] {
            let quad = k(i, i) + k(j, j) + 2.0 * q_ij;
            let delta = (-grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = k(i, i) + k(j, j) - 2.0 * q_ij;
            let delta = (grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += ys[t] * (ys[i] * k(i, t) * di + ys[j] * k(j, t) * dj);
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tolerance");
    }
    // Offset from free vectors, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if upper(&alpha, t) {
            if ys[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if lower(&alpha, t) {
            if ys[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    Ok(SmoSolution {
        alpha,
        bias: -rho,
        iterations,
        converged,
    })
}

/// `1/2 a'Qa - sum a`.
pub fn dual_objective(gram: &[f64], y: &[bool], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * sign(y[i]) * sign(y[j]) * gram[i * n + j];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

pub fn gram_matrix(x: &[Vec<f64>], kernel: &Kernel) -> Vec<f64> {
    let n = x.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| kernel.eval(&x[i], &x[j])).collect())
        .collect();
    rows.concat()
}

/// Per-sample box bounds; with weighting, `C * N / (2 * N_class)`.
pub fn box_bounds(y: &[bool], c: f64, class_weighting: bool) -> Vec<f64> {
    if !class_weighting {
        return vec![c; y.len()];
    }
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v).count() as f64;
    let neg = n - pos;
    y.iter()
        .map(|&v| c * n / (2.0 * if v { pos } else { neg }))
        .collect()
}

/// A trained kernel SVM. The positive class is `true`.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub class_weighting: bool,
    pub support: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub dim: usize,
}

impl SvmModel {
    /// Fits one configuration.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[bool],
        kernel: Kernel,
        c: f64,
        class_weighting: bool,
        cfg: &SmoConfig,
    ) -> Result<SvmModel> {
        check_rows(x, y.len())?;
        let gram = gram_matrix(x, &kernel);
        SvmModel::fit_with_gram(x, y, &gram, kernel, c, class_weighting, cfg)
    }

    fn fit_with_gram(
        x: &[Vec<f64>],
        y: &[bool],
        gram: &[f64],
        kernel: Kernel,
        c: f64,
        class_weighting: bool,
        cfg: &SmoConfig,
    ) -> Result<SvmModel> {
        let sol = smo_solve(gram, y, &box_bounds(y, c, class_weighting), cfg)?;
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for (i, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                support.push(x[i].clone());
                coef.push(a * sign(y[i]));
            }
        }
        Ok(SvmModel {
            kernel,
            c,
            class_weighting,
            support,
            coef,
            bias: sol.bias,
            dim: x[0].len(),
        })
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!("SVM expects {} features, got {}", self.dim, x.len())));
        }
        Ok(self
            .support
            .iter()
            .zip(&self.coef)
            .map(|(s, &a)| a * self.kernel.eval(s, x))
            .sum::<f64>()
            + self.bias)
    }

    /// Label (positive when the margin is > 0) and margin.
    pub fn predict(&self, x: &[f64]) -> Result<(bool, f64)> {
        let m = self.decision(x)?;
        Ok((m > 0.0, m))
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<bool>> {
        x.iter().map(|r| self.predict(r).map(|p| p.0)).collect()
    }

    /// Text dump: a `#` header with the configuration, then one line per
    /// support vector: `coef <TAB> label <TAB> v_1 v_2 ...`.
    pub fn to_text(&self) -> String {
        let k = &self.kernel;
        let mut s = format!(
            "# kernel={} gamma={} coef0={} degree={} C={} class_weighting={} bias={} dim={}\n",
            k.kind, k.gamma, k.coef0, k.degree, self.c, self.class_weighting, self.bias, self.dim
        );
        for (sv, &a) in self.support.iter().zip(&self.coef) {
            write!(s, "{}\t{}\t", a, if a > 0.0 { "+1" } else { "-1" }).unwrap();
            let vals: Vec<String> = sv.iter().map(f64::to_string).collect();
            s.push_str(&vals.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<SvmModel> {
        let bad = |m: &str| Error::Checkpoint(format!("SVM dump: {m}"));
        let mut lines = text.lines();
        let header = lines.next().and_then(|h| h.strip_prefix("# ")).ok_or_else(|| bad("missing header"))?;
        let mut fields = std::collections::HashMap::new();
        for kv in header.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("bad header field"))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(&format!("missing `{k}`")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(&format!("bad `{k}`"))) };
        let kernel = Kernel {
            kind: get("kernel")?.parse()?,
            gamma: num("gamma")?,
            coef0: num("coef0")?,
            degree: num("degree")? as i32,
        };
        let dim = num("dim")? as usize;
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let mut cols = line.split('\t');
            let a: f64 = cols.next().and_then(|c| c.parse().ok()).ok_or_else(|| bad("bad coefficient"))?;
            cols.next();
            let v: Vec<f64> = cols
                .next()
                .unwrap_or("")
                .split_whitespace()
                .map(|c| c.parse().map_err(|_| bad("bad feature value")))
                .collect::<Result<_>>()?;
            if v.len() != dim {
                return Err(bad("support vector length differs from dim"));
            }
            coef.push(a);
            support.push(v);
        }
        Ok(SvmModel {
            kernel,
            c: num("C")?,
            class_weighting: get("class_weighting")? == "true",
            support,
            coef,
            bias: num("bias")?,
            dim,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SvmModel> {
        SvmModel::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn check_rows(x: &[Vec<f64>], n_labels: usize) -> Result<()> {
    if x.len() != n_labels {
        return Err(Error::Shape(format!("{} rows for {n_labels} labels", x.len())));
    }
    if x.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("feature rows differ in length".into()));
    }
    Ok(())
}

/// The search space of [`svm_train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmGrid {
    pub c_values: Vec<f64>,
    pub kernels: Vec<KernelKind>,
    pub weighting: Vec<bool>,
}

impl Default for SvmGrid {
    fn default() -> Self {
        SvmGrid {
            c_values: vec![0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
            kernels: KernelKind::ALL.to_vec(),
            weighting: vec![false, true],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub kernel: KernelKind,
    pub class_weighting: bool,
    pub val_f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmTrained {
    pub model: SvmModel,
    pub best: GridPoint,
    /// Every configuration in grid order.
    pub table: Vec<GridPoint>,
}

/// Grid search on the validation split, then a refit of the winner on
/// train plus validation. Ties go to the smaller C, then the earlier
/// kernel, then no weighting.
pub fn svm_train(
    train_x: &[Vec<f64>],
    train_y: &[bool],
    val_x: &[Vec<f64>],
    val_y: &[bool],
    grid: &SvmGrid,
    cfg: &SmoConfig,
) -> Result<SvmTrained> {
    check_rows(train_x, train_y.len())?;
    if val_x.len() != val_y.len() {
        return Err(Error::Shape("validation rows and labels differ".into()));
    }
    if !(train_y.iter().any(|&v| v) && train_y.iter().any(|&v| !v)) {
        return Err(Error::SingleClass);
    }
    let mut configs = Vec::new();
    for &kind in &grid.kernels {
        for &c in &grid.c_values {
            for &w in &grid.weighting {
                configs.push((kind, c, w));
            }
        }
    }
    let grams: Vec<(KernelKind, Kernel, Vec<f64>)> = grid
        .kernels
        .iter()
        .map(|&kind| {
            let k = Kernel::fitted(kind, train_x);
            (kind, k, gram_matrix(train_x, &k))
        })
        .collect();
    let table: Vec<GridPoint> = configs
        .par_iter()
        .map(|&(kind, c, w)| {
            let (_, kernel, gram) = grams.iter().find(|g| g.0 == kind).expect("kernel in grid");
            let m = SvmModel::fit_with_gram(train_x, train_y, gram, *kernel, c, w, cfg)?;
            let pred = m.predict_all(val_x)?;
            let val_f1 = f1(Confusion::from_predictions(&pred, val_y)?);
            Ok(GridPoint {
                c,
                kernel: kind,
                class_weighting: w,
                val_f1,
            })
        })
        .collect::<Result<_>>()?;
    let best = *table
        .iter()
        .min_by(|a, b| {
            b.val_f1
                .total_cmp(&a.val_f1)
                .then(a.c.total_cmp(&b.c))
                .then(a.kernel.cmp(&b.kernel))
                .then(a.class_weighting.cmp(&b.class_weighting))
        })
        .ok_or_else(|| Error::InvalidArgument("empty SVM grid".into()))?;
    let mut all_x = train_x.to_vec();
    all_x.extend_from_slice(val_x);
    let mut all_y = train_y.to_vec();
    all_y.extend_from_slice(val_y);
    let kernel = Kernel::fitted(best.kernel, &all_x);
    let model = SvmModel::fit(&all_x, &all_y, kernel, best.c, best.class_weighting, cfg)?;
    Ok(SvmTrained { model, best, table })
}
