//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p avforge --test acceptance`; a criterion number or name
//! fragment as argument runs only the matching ones.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use avforge::classifiers::{box_bounds, dual_objective, gram_matrix, smo_solve, Kernel, KernelKind, SmoConfig, TrainRecipe};
use avforge::corpus::{
    build_vocabulary, chunk_document, detokenize, filter_and_split, make_synthetic_corpus, synthetic_authors, tokenize,
    write_generated, Chunk, Document, Split, SplitRatios, Token, Vocabulary, MIN_TRAIN_CHUNKS,
};
use avforge::evaluation::{f1, k_metric, mcnemar_counts, tsne, Confusion, TsneConfig};
use avforge::gan::toy::{toy_real_samples, ToyCritic, ToyGenerator};
use avforge::gan::{gan_train, gradient_penalty_value, Critic, GanConfig};
use avforge::generators::{
    augment_n, augmentation_size, generate, lm_train, Arch, Encoding, Generated, GeneratorConfig, GeneratorModel,
    LmConfig, SamplingConfig, Strategy, PROMPT_LEN,
};
use avforge::harness::{run_experiment, CnnSettings, ExperimentConfig, GeneratorKind, Report, Training, REPORT_HEADER};
use avforge::rng::{rng_from, stream, Rng};
use avforge::stylometry::{chi2_scores, chi2_select, chi2_statistic, SparseVector};
use avforge::tensor::nn::{cosine_distance, cross_entropy, weighted_bce_with_logits, ConvMaxBlock, GruLayer, Linear, MultiHeadAttention};
use avforge::tensor::gumbel::{gumbel_noise, gumbel_softmax_with_noise};
use avforge::tensor::{AdamConfig, Bound, ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng as _;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    id: u8,
    name: &'static str,
    budget_secs: f64,
    run: fn() -> Outcome,
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let all = [
        Criterion { id: 1, name: "gradient correctness", budget_secs: 60.0, run: c1_gradients },
        Criterion { id: 2, name: "svm oracle", budget_secs: f64::INFINITY, run: c2_svm },
        Criterion { id: 3, name: "metric formulas", budget_secs: f64::INFINITY, run: c3_metrics },
        Criterion { id: 4, name: "mcnemar", budget_secs: f64::INFINITY, run: c4_mcnemar },
        Criterion { id: 5, name: "chi2 selection", budget_secs: f64::INFINITY, run: c5_chi2 },
        Criterion { id: 6, name: "protocol exactness", budget_secs: 10.0, run: c6_protocol },
        Criterion { id: 7, name: "lm memorisation", budget_secs: 120.0, run: c7_memorise },
        Criterion { id: 8, name: "wgan-gp sanity", budget_secs: 300.0, run: c8_wgan },
        Criterion { id: 9, name: "end to end", budget_secs: 900.0, run: c9_end_to_end },
        Criterion { id: 10, name: "t-sne", budget_secs: 30.0, run: c10_tsne },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for c in &all {
        if !filters.is_empty() && !filters.iter().any(|f| match f.parse::<u8>() {
            Ok(id) => id == c.id,
            Err(_) => c.name.contains(f.as_str()),
        }) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let result = match result {
            Ok(d) if secs > c.budget_secs => Err(format!("{d}; took {secs:.1} s, budget {} s", c.budget_secs)),
            r => r,
        };
        match result {
            Ok(detail) => println!("PASS criterion {} ({}): {detail} [{secs:.1} s]", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({}): {detail} [{secs:.1} s]", c.id, c.name);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

type Build<'f> = dyn for<'t> Fn(&'t Tape, &Bound<'t>, &[Var<'t>]) -> Var<'t> + 'f;

const FD_STEP: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-4;

fn eval_loss(store: &ParamStore, inputs: &[Tensor], f: &Build<'_>) -> f64 {
    let tape = Tape::new();
    let p = store.bind_constants(&tape);
    let xs: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    f(&tape, &p, &xs).value().item()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Largest relative error between backprop and central differences over
/// every parameter and input element.
fn gradcheck(store: &mut ParamStore, inputs: &mut [Tensor], f: &Build<'_>) -> f64 {
    let (gp, gx) = {
        let tape = Tape::new();
        let p = store.bind(&tape);
        let xs: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let loss = f(&tape, &p, &xs);
        let g = tape.backward(loss).expect("backward");
        (
            p.vars().iter().map(|v| g.get_or_zeros(*v)).collect::<Vec<_>>(),
            xs.iter().map(|v| g.get_or_zeros(*v)).collect::<Vec<_>>(),
        )
    };
    let mut worst: f64 = 0.0;
    for (i, g) in gp.iter().enumerate() {
        for j in 0..g.len() {
            let orig = store.value(ParamId(i)).data()[j];
            store.value_mut(ParamId(i)).data_mut()[j] = orig + FD_STEP;
            let up = eval_loss(store, inputs, f);
            store.value_mut(ParamId(i)).data_mut()[j] = orig - FD_STEP;
            let down = eval_loss(store, inputs, f);
            store.value_mut(ParamId(i)).data_mut()[j] = orig;
            worst = worst.max(rel_err(g.data()[j], (up - down) / (2.0 * FD_STEP)));
        }
    }
    for (i, g) in gx.iter().enumerate() {
        for j in 0..g.len() {
            let orig = inputs[i].data()[j];
            inputs[i].data_mut()[j] = orig + FD_STEP;
            let up = eval_loss(store, inputs, f);
            inputs[i].data_mut()[j] = orig - FD_STEP;
            let down = eval_loss(store, inputs, f);
            inputs[i].data_mut()[j] = orig;
            worst = worst.max(rel_err(g.data()[j], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

fn rand_tensor(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect())
}

/// Reduces any output to a scalar with fixed random weights.
fn weighted_sum<'t>(out: Var<'t>, r: &Tensor) -> Var<'t> {
    out.mul_const(r.clone()).sum()
}

/// Whether every ReLU input and max-pool comparison of the block sits
/// clear of its kink, so that finite differences see a smooth function.
fn conv_is_smooth(block: &ConvMaxBlock, store: &ParamStore, seq: &Tensor) -> bool {
    let margin = 1e-3;
    let tape = Tape::new();
    let p = store.bind_constants(&tape);
    let x = tape.constant(seq.clone());
    let pre1 = block.conv1.forward(&p, x.unfold(block.kernel));
    let pre2 = block.conv2.forward(&p, pre1.relu().unfold(block.kernel));
    if pre1.value().data().iter().chain(pre2.value().data()).any(|v| v.abs() < margin) {
        return false;
    }
    let h = pre2.relu().value();
    (0..h.cols()).all(|c| {
        let mut col: Vec<f64> = (0..h.rows()).map(|r| h.get(r, c)).collect();
        col.sort_by(|a, b| b.total_cmp(a));
        col.len() < 2 || col[0] == 0.0 || col[0] - col[1] > margin
    })
}

fn c1_gradients() -> Outcome {
    const CASES: u64 = 100;
    let mut report = Vec::new();
    let mut record = |name: &str, worst: f64| -> Result<(), String> {
        ensure!(worst <= 1e-4, "{name}: relative error {worst:.3e}");
        report.push(format!("{name} {worst:.1e}"));
        Ok(())
    };

    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = stream(case, &["grad", "linear"]);
        let (d_in, d_out, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "l", d_in, d_out, case % 2 == 0, &mut rng);
        let r = rand_tensor(n, d_out, &mut rng);
        let mut xs = vec![rand_tensor(n, d_in, &mut rng)];
        worst = worst.max(gradcheck(&mut store, &mut xs, &|_, p, x| weighted_sum(lin.forward(p, x[0]), &r)));
    }
    record("linear", worst)?;

    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = stream(case, &["grad", "gru"]);
        let (d_in, hidden, b) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..3));
        let mut store = ParamStore::new();
        let gru = GruLayer::new(&mut store, "g", d_in, hidden, &mut rng);
        let r = rand_tensor(b, hidden, &mut rng);
        let mut xs = vec![rand_tensor(b, d_in, &mut rng), rand_tensor(b, hidden, &mut rng)];
        worst = worst.max(gradcheck(&mut store, &mut xs, &|_, p, x| weighted_sum(gru.step(p, x[0], x[1]), &r)));
    }
    record("gru cell", worst)?;

    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = stream(case, &["grad", "attention"]);
        let heads = rng.random_range(1..3);
        let d = heads * rng.random_range(1..3);
        let len = rng.random_range(1..5);
        let causal = case % 2 == 1;
        let mut store = ParamStore::new();
        let att = MultiHeadAttention::new(&mut store, "a", d, heads, &mut rng).map_err(|e| e.to_string())?;
        let r = rand_tensor(len, d, &mut rng);
        let mut xs = vec![rand_tensor(len, d, &mut rng)];
        worst = worst.max(gradcheck(&mut store, &mut xs, &|_, p, x| weighted_sum(att.forward(p, x[0], causal).0, &r)));
    }
    record("attention", worst)?;

    let mut worst: f64 = 0.0;
    let mut redrawn = 0;
    let mut case = 0;
    let mut done = 0;
    while done < CASES {
        case += 1;
        let mut rng = stream(case, &["grad", "conv"]);
        let (d_in, kernel) = (rng.random_range(1..4), rng.random_range(1..4));
        let widths = (rng.random_range(1..4), rng.random_range(1..4));
        let len = 2 * kernel - 1 + rng.random_range(0..3);
        let mut store = ParamStore::new();
        let block = ConvMaxBlock::new(&mut store, "c", d_in, kernel, widths, &mut rng);
        let r = rand_tensor(1, widths.1, &mut rng);
        let mut xs = vec![rand_tensor(len, d_in, &mut rng)];
        if !conv_is_smooth(&block, &store, &xs[0]) {
            redrawn += 1;
            continue;
        }
        worst = worst.max(gradcheck(&mut store, &mut xs, &|_, p, x| {
            weighted_sum(block.forward(p, x[0]).expect("length above minimum"), &r)
        }));
        done += 1;
    }
    record(&format!("conv block ({redrawn} near-kink draws skipped)"), worst)?;

    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = stream(case, &["grad", "gumbel"]);
        let (n, v) = (rng.random_range(1..4), rng.random_range(2..6));
        let tau = rng.random_range(0.3..2.0);
        let noise = gumbel_noise(&[n, v], &mut rng);
        let r = rand_tensor(n, v, &mut rng);
        let mut xs = vec![rand_tensor(n, v, &mut rng)];
        worst = worst.max(gradcheck(&mut ParamStore::new(), &mut xs, &|_, _, x| {
            weighted_sum(gumbel_softmax_with_noise(x[0], tau, noise.clone()), &r)
        }));
    }
    record("gumbel-softmax", worst)?;

    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = stream(case, &["grad", "cross-entropy"]);
        let (n, v) = (rng.random_range(1..5), rng.random_range(2..6));
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..v)).collect();
        let mut xs = vec![rand_tensor(n, v, &mut rng)];
        worst = worst.max(gradcheck(&mut ParamStore::new(), &mut xs, &|_, _, x| cross_entropy(x[0], &targets)));
    }
    record("cross-entropy", worst)?;

    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = stream(case, &["grad", "bce"]);
        let n = rng.random_range(1..6);
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let w = rng.random_range(0.2..5.0);
        let mut xs = vec![rand_tensor(n, 1, &mut rng)];
        worst = worst.max(gradcheck(&mut ParamStore::new(), &mut xs, &|_, _, x| {
            weighted_bce_with_logits(x[0], &labels, w)
        }));
    }
    record("weighted bce", worst)?;

    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = stream(case, &["grad", "cosine"]);
        let (n, d) = (rng.random_range(1..4), rng.random_range(2..6));
        let targets = rand_tensor(n, d, &mut rng);
        let mut xs = vec![rand_tensor(n, d, &mut rng)];
        worst = worst.max(gradcheck(&mut ParamStore::new(), &mut xs, &|_, _, x| {
            cosine_distance(x[0], &targets).expect("matching shapes")
        }));
    }
    record("cosine distance", worst)?;

    Ok(format!("{CASES} cases each; worst relative error: {}", report.join(", ")))
}

// ---------------------------------------------------------------- 2

fn sgn(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Exact dual optimum by enumerating which multipliers sit at 0, at the
/// box bound, or strictly inside, solving the KKT equations for each.
fn svm_oracle(gram: &[f64], y: &[bool], c: f64) -> Option<(Vec<f64>, f64, f64)> {
    let n = y.len();
    let k = |i: usize, j: usize| gram[i * n + j];
    let tol = 1e-9;
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut state = vec![0u8; n];
    for code in 0..3usize.pow(n as u32) {
        let mut x = code;
        for s in state.iter_mut() {
            *s = (x % 3) as u8;
            x /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let mut bias_range = (f64::NEG_INFINITY, f64::INFINITY);
        if free.is_empty() {
            let balance: f64 = (0..n).map(|i| sgn(y[i]) * alpha[i]).sum();
            if balance.abs() > tol {
                continue;
            }
        } else {
            let m = free.len();
            let mut a = vec![vec![0.0; m + 1]; m + 1];
            let mut rhs = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (cc, &j) in free.iter().enumerate() {
                    a[r][cc] = sgn(y[i]) * sgn(y[j]) * k(i, j);
                }
                a[r][m] = sgn(y[i]);
                rhs[r] = 1.0 - (0..n).filter(|&j| state[j] == 1).map(|j| sgn(y[i]) * sgn(y[j]) * k(i, j) * c).sum::<f64>();
            }
            for (cc, &j) in free.iter().enumerate() {
                a[m][cc] = sgn(y[j]);
            }
            rhs[m] = -(0..n).filter(|&j| state[j] == 1).map(|j| sgn(y[j]) * c).sum::<f64>();
            let Some(sol) = solve_linear(a, rhs) else { continue };
            if sol[..m].iter().any(|&v| v < -tol || v > c + tol) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r].clamp(0.0, c);
            }
            bias_range = (sol[m], sol[m]);
        }
        // bound multipliers must satisfy their margin conditions
        let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| alpha[j] * sgn(y[j]) * k(i, j)).sum()).collect();
        let mut ok = true;
        for i in 0..n {
            if state[i] == 2 {
                continue;
            }
            let (lo, hi) = bias_bound(y[i], state[i] == 0, g[i]);
            bias_range.0 = bias_range.0.max(lo);
            bias_range.1 = bias_range.1.min(hi);
            if bias_range.0 > bias_range.1 + 1e-7 {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let bias = match bias_range {
            (lo, hi) if lo.is_finite() && hi.is_finite() => 0.5 * (lo + hi),
            (lo, _) if lo.is_finite() => lo,
            (_, hi) if hi.is_finite() => hi,
            _ => 0.0,
        };
        let obj = dual_objective(gram, y, &alpha);
        if best.as_ref().is_none_or(|b| obj < b.1 - 1e-12) {
            best = Some((alpha, obj, bias));
        }
    }
    best
}

/// Interval for the bias implied by a multiplier at a bound:
/// `alpha = 0` needs `y f >= 1`, `alpha = C` needs `y f <= 1`.
fn bias_bound(y: bool, at_zero: bool, g: f64) -> (f64, f64) {
    match (y, at_zero) {
        (true, true) => (1.0 - g, f64::INFINITY),
        (true, false) => (f64::NEG_INFINITY, 1.0 - g),
        (false, true) => (f64::NEG_INFINITY, -1.0 - g),
        (false, false) => (-1.0 - g, f64::INFINITY),
    }
}

fn c2_svm() -> Outcome {
    let mut worst_obj: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut probes = 0;
    for inst in 0..20u64 {
        let mut rng = stream(inst, &["svm-oracle"]);
        let n = rng.random_range(4..=10);
        let d = rng.random_range(1..=3);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        y[0] = true;
        y[1] = false;
        let c = [0.1, 1.0, 10.0][rng.random_range(0..3)];
        let kernel = Kernel::fitted(KernelKind::Rbf, &x);
        let gram = gram_matrix(&x, &kernel);
        let bounds = box_bounds(&y, c, false);
        let sol = smo_solve(&gram, &y, &bounds, &SmoConfig::default()).map_err(|e| e.to_string())?;
        ensure!(sol.converged, "instance {inst}: SMO did not converge");
        let (alpha, obj, bias) = svm_oracle(&gram, &y, c).ok_or(format!("instance {inst}: oracle found no feasible point"))?;
        let smo_obj = dual_objective(&gram, &y, &sol.alpha);
        worst_obj = worst_obj.max((smo_obj - obj).abs());
        ensure!((smo_obj - obj).abs() <= 1e-4, "instance {inst}: objective {smo_obj} vs oracle {obj}");

        let decide = |a: &[f64], b: f64, p: &[f64]| -> f64 {
            (0..n).map(|j| a[j] * sgn(y[j]) * kernel.eval(&x[j], p)).sum::<f64>() + b
        };
        let mut points = x.clone();
        points.extend((0..20).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<f64>>()));
        for (i, p) in points.iter().enumerate() {
            let ours = decide(&sol.alpha, sol.bias, p) >= 0.0;
            let theirs = decide(&alpha, bias, p) >= 0.0;
            ensure!(ours == theirs, "instance {inst}: point {i} classified differently");
            probes += 1;
        }
        for i in 0..n {
            let yf = sgn(y[i]) * decide(&sol.alpha, sol.bias, &x[i]);
            let a = sol.alpha[i];
            let v = if a <= 0.0 {
                (1.0 - yf).max(0.0)
            } else if a >= bounds[i] {
                (yf - 1.0).max(0.0)
            } else {
                (yf - 1.0).abs()
            };
            worst_kkt = worst_kkt.max(v);
        }
        ensure!(worst_kkt < 1e-3, "instance {inst}: KKT violation {worst_kkt}");
    }
    Ok(format!(
        "20 instances; max objective gap {worst_obj:.2e}, {probes} predictions agree, max KKT violation {worst_kkt:.2e}"
    ))
}

// ---------------------------------------------------------------- 3

fn c3_metrics() -> Outcome {
    let mut checked = 0;
    for tp in 0..=5 {
        for fp in 0..=5 {
            for fn_ in 0..=5 {
                for tn in 0..=5 {
                    let c = Confusion::new(tp, fp, fn_, tn);
                    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
                    let want_f1 = if tp + fp + fn_ == 0 {
                        1.0
                    } else if precision + recall == 0.0 {
                        0.0
                    } else {
                        2.0 * precision * recall / (precision + recall)
                    };
                    ensure!((f1(c) - want_f1).abs() < 1e-12, "F1 {c:?}: {} vs {want_f1}", f1(c));

                    let (pos, neg) = (tp + fn_, tn + fp);
                    let tpr = (pos > 0).then(|| tp as f64 / pos as f64);
                    let tnr = (neg > 0).then(|| tn as f64 / neg as f64);
                    let want_k = match (tpr, tnr) {
                        (Some(a), Some(b)) => Some(a + b - 1.0),
                        (Some(a), None) => Some(2.0 * a - 1.0),
                        (None, Some(b)) => Some(2.0 * b - 1.0),
                        (None, None) => None,
                    };
                    match (k_metric(c), want_k) {
                        (Ok(k), Some(w)) => ensure!((k - w).abs() < 1e-12, "K {c:?}: {k} vs {w}"),
                        (Err(_), None) => {}
                        (got, want) => return Err(format!("K {c:?}: {got:?} vs {want:?}")),
                    }
                    checked += 1;
                }
            }
        }
    }
    ensure!(f1(Confusion::new(0, 0, 0, 7)) == 1.0, "F1 of an all-negative perfect run must be 1");
    Ok(format!("{checked} confusion matrices"))
}

// ---------------------------------------------------------------- 4

fn binom(n: u64, k: u64) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn c4_mcnemar() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for n in 0..=24u64 {
        let total = 1u128 << n;
        for b in 0..=n {
            let c = n - b;
            let m = mcnemar_counts(b as usize, c as usize);
            ensure!(m.exact, "({b},{c}) should use the exact branch");
            let observed = binom(n, b);
            let tail: u128 = (0..=n).map(|k| binom(n, k)).filter(|&w| w <= observed).sum();
            let want = (tail as f64 / total as f64).min(1.0);
            worst = worst.max((m.p_value - want).abs());
            ensure!((m.p_value - want).abs() < 1e-12, "({b},{c}): p {} vs {want}", m.p_value);
            pairs += 1;
        }
    }
    let p = mcnemar_counts(10, 0).p_value;
    ensure!((p - 0.00195).abs() <= 1e-5, "b=10, c=0 gives {p}");
    Ok(format!("{pairs} (b, c) pairs, max gap {worst:.1e}; p(10, 0) = {p:.9}"))
}

// ---------------------------------------------------------------- 5

/// Sum of (observed - expected)^2 / expected over the four cells.
fn chi2_expected_counts(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let n = a + b + c + d;
    let rows = [a + b, c + d];
    let cols = [a + c, b + d];
    if rows.contains(&0.0) || cols.contains(&0.0) {
        return 0.0;
    }
    let obs = [[a, b], [c, d]];
    let mut s = 0.0;
    for r in 0..2 {
        for col in 0..2 {
            let e = rows[r] * cols[col] / n;
            s += (obs[r][col] - e).powi(2) / e;
        }
    }
    s
}

fn c5_chi2() -> Outcome {
    let worked = chi2_statistic(4.0, 1.0, 1.0, 4.0);
    ensure!((worked - 3.6).abs() <= 1e-9, "chi2(4,1,1,4) = {worked}");
    for inst in 0..50u64 {
        let mut rng = stream(inst, &["chi2-oracle"]);
        let dim = rng.random_range(1..=50);
        let docs = rng.random_range(2..=40);
        let density = rng.random_range(0.05..0.6);
        let rows: Vec<SparseVector> = (0..docs)
            .map(|_| {
                let mut entries = Vec::new();
                for i in 0..dim {
                    if rng.random_bool(density) {
                        entries.push((i, rng.random_range(0.1..3.0)));
                    }
                }
                SparseVector::new(dim, entries)
            })
            .collect();
        let mut labels: Vec<bool> = (0..docs).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let n_pos = labels.iter().filter(|&&l| l).count() as f64;
        let n_neg = docs as f64 - n_pos;
        let oracle: Vec<f64> = (0..dim)
            .map(|f| {
                let a = rows.iter().zip(&labels).filter(|(r, &l)| l && r.get(f) != 0.0).count() as f64;
                let b = rows.iter().zip(&labels).filter(|(r, &l)| !l && r.get(f) != 0.0).count() as f64;
                chi2_expected_counts(a, b, n_pos - a, n_neg - b)
            })
            .collect();
        let scores = chi2_scores(&rows, &labels).map_err(|e| e.to_string())?;
        for f in 0..dim {
            ensure!((scores[f] - oracle[f]).abs() <= 1e-9, "instance {inst} feature {f}: {} vs {}", scores[f], oracle[f]);
        }
        let keep = rng.random_range(0.0..=1.0);
        let selected = chi2_select(&rows, &labels, keep).map_err(|e| e.to_string())?;
        let k = (keep * dim as f64).ceil() as usize;
        // rank by oracle score, scores within 1e-9 counted as ties broken by index
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| {
            if (oracle[i] - oracle[j]).abs() <= 1e-9 {
                i.cmp(&j)
            } else {
                oracle[j].total_cmp(&oracle[i])
            }
        });
        let mut want: Vec<usize> = order[..k.min(dim)].to_vec();
        want.sort_unstable();
        ensure!(selected == want, "instance {inst}: selected {selected:?}, oracle {want:?}");
    }
    Ok(format!("50 instances agree; chi2(4,1,1,4) = {worked}"))
}

// ---------------------------------------------------------------- 6

fn words(n: usize, prefix: &str) -> String {
    (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
}

fn c6_protocol() -> Outcome {
    // chunking
    let seq = |n: usize, tail_words: usize| -> Vec<Token> {
        let mut t: Vec<Token> = (0..n - 30).map(|i| Token::new(format!("w{i}"))).collect();
        t.extend((0..30).map(|i| Token::new(if i < tail_words { "x" } else { "," })));
        t
    };
    let lens = |c: Vec<Vec<Token>>| c.iter().map(Vec::len).collect::<Vec<_>>();
    ensure!(lens(chunk_document(&seq(230, 26), 100, 25)) == [100, 100, 30], "26-word tail must be kept");
    ensure!(lens(chunk_document(&seq(230, 20), 100, 25)) == [100, 100], "20-word tail must be dropped");
    ensure!(lens(chunk_document(&seq(230, 25), 100, 25)) == [100, 100, 30], "25-word tail must be kept");
    ensure!(lens(chunk_document(&seq(100, 0), 100, 25)) == [100], "exact fit");
    for n in 1..=350 {
        let toks = tokenize(&words(n, "t"));
        let want: Vec<usize> = (0..n.div_ceil(100)).map(|i| (n - 100 * i).min(100)).filter(|&l| l == 100 || l >= 25).collect();
        ensure!(lens(chunk_document(&toks, 100, 25)) == want, "chunking {n} words");
    }

    // author filtering
    ensure!(MIN_TRAIN_CHUNKS == 10, "minimum of {MIN_TRAIN_CHUNKS} training chunks");
    let mut docs = Vec::new();
    for (author, n_train) in [("nine", 9), ("ten", 10), ("other", 12)] {
        for i in 0..n_train {
            docs.push(Document::new(format!("{author}-{i}"), words(100, author), author).with_split(Split::Train));
        }
        docs.push(Document::new(format!("{author}-t"), words(100, author), author).with_split(Split::Test));
    }
    let ds = filter_and_split(&docs, SplitRatios::default(), 0).map_err(|e| e.to_string())?;
    let kept: Vec<String> = ds.author_list();
    ensure!(kept == ["other", "ten"], "kept authors {kept:?}");
    ensure!(ds.chunks.iter().all(|c| c.author != "nine"), "a filtered author leaves no chunks behind");

    // augmentation size
    for (n, want) in [(0, 0), (1, 10), (37, 370), (99, 990), (100, 1000), (150, 1000)] {
        ensure!(augmentation_size(n) == want, "augmentation_size({n}) = {}", augmentation_size(n));
    }

    // 5-token prompts and equal-length generation, on chunks of mixed length
    ensure!(PROMPT_LEN == 5, "prompt length {PROMPT_LEN}");
    let chains = synthetic_authors(2, 11);
    let mut docs = Vec::new();
    for chain in &chains {
        let mut rng = stream(11, &["protocol", &chain.name]);
        for i in 0..14 {
            let n = 100 + [30, 45, 60, 80][i % 4];
            docs.push(Document::new(format!("{}-{i}", chain.name), detokenize(&chain.sample_tokens(n, &mut rng)), &chain.name));
        }
    }
    let ds = filter_and_split(&docs, SplitRatios::default(), 11).map_err(|e| e.to_string())?;
    let author = ds.author_list()[0].clone();
    let train: Vec<Chunk> = ds.split(Split::Train).cloned().collect();
    let vocab = build_vocabulary(&train, 1).map_err(|e| e.to_string())?;
    let cfg = GeneratorConfig {
        projection: 8,
        hidden: 8,
        ..GeneratorConfig::new(Arch::Gru, Encoding::OneHot, vocab.len())
    };
    let model = GeneratorModel::new(cfg, vocab.fingerprint(), 1).map_err(|e| e.to_string())?;
    let fakes = augment_n(&ds, &author, &model, &vocab, None, &SamplingConfig::default(), 5, Some(30)).map_err(|e| e.to_string())?;
    let sources: BTreeSet<(Vec<String>, usize)> = ds
        .of_author(&author, Split::Train)
        .map(|c| (c.tokens[..PROMPT_LEN].iter().map(|t| t.surface().to_string()).collect(), c.len()))
        .collect();
    let source_lens: BTreeSet<usize> = sources.iter().map(|s| s.1).collect();
    ensure!(source_lens.len() > 1, "sources should vary in length");
    ensure!(fakes.len() == 30, "{} forgeries", fakes.len());
    for f in &fakes {
        let key = (f.tokens[..PROMPT_LEN].iter().map(|t| t.surface().to_string()).collect(), f.len());
        ensure!(sources.contains(&key), "forgery {} has no source with its prompt and length", f.id);
        ensure!(f.split == Split::Train && !f.is_positive_for(&author), "forgery {} must be a training negative", f.id);
    }
    Ok(format!("chunking, filtering, sizing and {} forgeries over lengths {source_lens:?} check out", fakes.len()))
}

// ---------------------------------------------------------------- 7

fn c7_memorise() -> Outcome {
    let text = "a b c ".repeat(50);
    let vocab = Vocabulary::from_surfaces(&["a", "b", "c"]);
    let ids = vocab.encode_tokens(&tokenize(&text));
    let cfg = GeneratorConfig {
        projection: 64,
        hidden: 64,
        ..GeneratorConfig::new(Arch::Gru, Encoding::OneHot, vocab.len())
    };
    let mut m = GeneratorModel::new(cfg, vocab.fingerprint(), 7).map_err(|e| e.to_string())?;
    let log = lm_train(&mut m, &[ids], &LmConfig::default(), 7).map_err(|e| e.to_string())?;
    let last = *log.epoch_loss.last().ok_or("no epochs ran")?;
    ensure!(last < 0.05, "final cross-entropy {last}");
    let greedy = SamplingConfig {
        strategy: Strategy::Argmax,
        block_ngram: 0,
        ..SamplingConfig::default()
    };
    let prompt = vocab.encode_tokens(&tokenize("a b c a b"));
    let Generated::Ids(out) = generate(&m, &prompt, 25, &greedy, None, None).map_err(|e| e.to_string())? else {
        return Err("one-hot model produced vectors".into());
    };
    let cycle: Vec<usize> = (0..25).map(|i| i % 3).collect();
    ensure!(out == cycle, "regenerated {out:?}");
    Ok(format!("final cross-entropy {last:.4}; 20 continuation tokens follow the cycle"))
}

// ---------------------------------------------------------------- 8

struct LinearCritic {
    store: ParamStore,
    w: ParamId,
}

impl Critic for LinearCritic {
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn input_width(&self) -> usize {
        self.store.value(self.w).rows()
    }
    fn score<'t>(&self, tape: &'t Tape, p: &Bound<'t>, xs: &[Var<'t>]) -> avforge::Result<Var<'t>> {
        Ok(tape.concat_rows(xs).matmul(p.get(self.w)))
    }
}

fn linear_critic(w: &[f64]) -> LinearCritic {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::matrix(w.len(), 1, w.to_vec()));
    LinearCritic { store, w }
}

fn c8_wgan() -> Outcome {
    let mut rng = rng_from(8);
    let real: Vec<Tensor> = (0..8).map(|_| rand_tensor(1, 3, &mut rng)).collect();
    let fake: Vec<Tensor> = (0..8).map(|_| rand_tensor(1, 3, &mut rng)).collect();
    for (w, want) in [([0.6, 0.0, -0.8], 0.0), ([0.0, 0.0, 0.0], 1.0), ([3.0, 0.0, 0.0], 4.0)] {
        let got = gradient_penalty_value(&linear_critic(&w), &real, &fake, 1).map_err(|e| e.to_string())?;
        ensure!((got - want).abs() <= 1e-9, "penalty with critic {w:?}: {got} vs {want}");
    }

    let seeds = 5;
    let (mut early, mut late) = (0.0, 0.0);
    for seed in 0..seeds {
        let mut g = ToyGenerator::new(seed);
        let mut c = ToyCritic::new(16, seed + 100);
        let cfg = GanConfig {
            epochs: 300,
            generator_optimizer: AdamConfig::adam(1e-2),
            critic_optimizer: AdamConfig::adam(1e-2),
            seed,
            ..GanConfig::default()
        };
        let trace = gan_train(&mut g, &mut c, &toy_real_samples(512, seed), &cfg).map_err(|e| e.to_string())?;
        early += trace.records[9].wasserstein.abs() / seeds as f64;
        late += trace.records[299].wasserstein.abs() / seeds as f64;
    }
    ensure!(late < early, "mean |W| {early:.3} at epoch 10 vs {late:.3} at epoch 300");
    Ok(format!("penalties 0/1/4 exact; mean |W| {early:.3} at epoch 10, {late:.3} at epoch 300"))
}

// ---------------------------------------------------------------- 9

fn e2e_config(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        seed,
        augment_count: Some(20),
        ..ExperimentConfig::default()
    };
    c.cnn = CnnSettings {
        projection: 16,
        kernels: vec![3],
        widths: (16, 8),
        dropout: 0.0,
        trunk: 8,
        bf_hidden: (8, 8),
        base_features: true,
        recipe: TrainRecipe {
            optimizer: AdamConfig::adamw(0.01),
            batch: 16,
            min_epochs: 4,
            max_epochs: 8,
            patience: 2,
            finetune_epochs: 2,
        },
    };
    c.gen.projection = 16;
    c.gen.hidden = 16;
    c.gen.lm.epochs = 2;
    c.gan.epochs = 3;
    c.gan.critic_passes = 2;
    c.gan.batch = 8;
    c
}

fn well_formed(report: &Report, n_authors: usize) -> Result<(), String> {
    let tsv = report.to_tsv();
    let lines: Vec<&str> = tsv.lines().collect();
    ensure!(lines.first() == Some(&REPORT_HEADER), "bad header");
    ensure!(lines.len() == n_authors + 2, "{} lines", lines.len());
    for line in &lines[1..=n_authors] {
        let f: Vec<&str> = line.split('\t').collect();
        ensure!(f.len() == 9, "row `{line}`");
        for (i, v) in f.iter().enumerate().skip(1).take(7) {
            if (i == 3 || i == 6) && *v == "NA" {
                continue;
            }
            let x: f64 = v.parse().map_err(|_| format!("field {i} of `{line}`"))?;
            ensure!(x.is_finite(), "field {i} of `{line}`");
        }
        let p: f64 = f[7].parse().map_err(|_| format!("p-value in `{line}`"))?;
        ensure!((0.0..=1.0).contains(&p), "p-value in `{line}`");
        ensure!(f[8] == "yes" || f[8] == "no", "significance in `{line}`");
    }
    let last = lines[n_authors + 1];
    ensure!(last.starts_with("MACRO\t") && last.ends_with(&format!("/{n_authors}")), "macro row `{last}`");
    Ok(())
}

/// Writes, for each author, `n` samples drawn from that author's own chain.
fn write_own_chain(dir: &Path, corpus_seed: u64, stage: &str, n: usize) -> Result<(), String> {
    for chain in synthetic_authors(5, corpus_seed) {
        let mut rng = stream(corpus_seed, &["planted", stage, &chain.name]);
        let texts: Vec<String> = (0..n).map(|_| detokenize(&chain.sample_tokens(100, &mut rng))).collect();
        write_generated(&dir.join(format!("{stage}-{}.jsonl", chain.name)), &texts).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn c9_end_to_end() -> Outcome {
    let ds = make_synthetic_corpus(5, 30, 42).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for training in [Training::Lm, Training::Gan] {
        let cfg = ExperimentConfig {
            generator: GeneratorKind::Internal(Arch::Gru),
            encoding: Encoding::OneHot,
            training,
            ..e2e_config(42)
        };
        let a = run_experiment(&ds, &cfg).map_err(|e| e.to_string())?;
        let b = run_experiment(&ds, &cfg).map_err(|e| e.to_string())?;
        ensure!(a.to_tsv() == b.to_tsv(), "{training}: reruns differ");
        well_formed(&a, 5)?;
        notes.push(format!("{training} macro F1 {:.3} -> {:.3}", a.macro_row.baseline_f1, a.macro_row.aug_f1));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (mut base_fpr, mut aug_fpr) = (0.0, 0.0);
    let seeds = 5;
    for seed in 0..seeds {
        let corpus_seed = 100 + seed;
        let ds = make_synthetic_corpus(5, 30, corpus_seed).map_err(|e| e.to_string())?;
        let sub = dir.path().join(seed.to_string());
        std::fs::create_dir_all(&sub).map_err(|e| e.to_string())?;
        write_own_chain(&sub, corpus_seed, "forger", 20)?;
        write_own_chain(&sub, corpus_seed, "probe", 20)?;
        let cfg = ExperimentConfig {
            generator: GeneratorKind::Ingested,
            ingested: Some(sub.join("forger-{author}.jsonl").display().to_string()),
            probe: Some(sub.join("probe-{author}.jsonl").display().to_string()),
            ..e2e_config(seed)
        };
        let report = run_experiment(&ds, &cfg).map_err(|e| e.to_string())?;
        well_formed(&report, 5)?;
        let n = report.rounds.len() as f64;
        for r in &report.rounds {
            base_fpr += r.baseline.probe_fpr.ok_or("missing probe rate")? / (n * seeds as f64);
            aug_fpr += r.augmented.probe_fpr.ok_or("missing probe rate")? / (n * seeds as f64);
        }
    }
    ensure!(aug_fpr <= base_fpr, "planted forger: augmented FPR {aug_fpr:.3} above baseline {base_fpr:.3}");
    notes.push(format!("planted-forger FPR {base_fpr:.3} -> {aug_fpr:.3} over {seeds} seeds"));
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- 10

fn c10_tsne() -> Outcome {
    let mut rng = rng_from(10);
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("valid normal");
    let mut points = Vec::new();
    for cluster in 0..2 {
        let centre = if cluster == 0 { 0.0 } else { 10.0 };
        for _ in 0..20 {
            points.push((0..10).map(|_| centre + rng.sample(normal)).collect::<Vec<f64>>());
        }
    }
    let cfg = TsneConfig {
        perplexity: 10.0,
        seed: 10,
        ..TsneConfig::default()
    };
    let res = tsne(&points, &cfg).map_err(|e| e.to_string())?;
    let centroid = |range: std::ops::Range<usize>| {
        let n = range.len() as f64;
        range.fold([0.0, 0.0], |acc, i| [acc[0] + res.coords[i][0] / n, acc[1] + res.coords[i][1] / n])
    };
    let cents = [centroid(0..20), centroid(20..40)];
    let dist = |p: [f64; 2], c: [f64; 2]| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
    let pure = (0..40)
        .filter(|&i| {
            let nearest = if dist(res.coords[i], cents[0]) <= dist(res.coords[i], cents[1]) { 0 } else { 1 };
            nearest == i / 20
        })
        .count();
    let purity = pure as f64 / 40.0;
    ensure!(purity >= 0.95, "nearest-centroid purity {purity}");
    ensure!(res.final_kl < res.initial_kl, "KL {} -> {}", res.initial_kl, res.final_kl);
    Ok(format!("purity {purity:.2}; KL {:.3} -> {:.3}", res.initial_kl, res.final_kl))
}
