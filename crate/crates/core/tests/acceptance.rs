//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smc_core::fusion::{build_w, build_z, BinaryUpper, MarketPanel, SimilarityWeights, StockDayRecord};
use smc_core::linalg::Matrix;
use smc_core::metrics::{accuracy, mcc, ConfusionCounts};
use smc_core::pipeline::{run_pipeline, write_synth, RunConfig, RunReport, SynthSpec, METHOD_LOGISTIC_RAW, METHOD_SMC_LSTM};
use smc_core::predictor::{lstm_backward, lstm_forward, predict, train_lstm, LstmParams, SequenceClassifier, SequenceSample, TrainConfig};
use smc_core::smc::{train_smc, two_cluster_instance, DecomposedPanel, SmcConfig, SmcObjective, TwoClusterSpec};
use smc_core::tensor::{fold, frobenius_norm, mode_n_product, unfold, Mode, Tensor3};
use smc_core::tucker::{hooi_with_trace, hosvd, reconstruction_error, TuckerConfig, TuckerFactors};
use smc_core::fusion::Label;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: smc_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_tensor(dims: [usize; 3], rng: &mut ChaCha8Rng) -> Tensor3 {
    Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_dims(rng: &mut ChaCha8Rng) -> [usize; 3] {
    [rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=6)]
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn multilinear_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let modes = Mode::ALL;
    for case in 0..100 {
        let dims = random_dims(&mut rng);
        let t = random_tensor(dims, &mut rng);
        for mode in modes {
            let id = Matrix::identity(dims[mode.index()]);
            let r = ok(mode_n_product(&t, &id, mode))?;
            let d = max_diff(r.as_slice(), t.as_slice());
            ensure(r.dims() == dims && d <= 1e-14, || format!("identity law case {case} {mode}: {d:e}"))?;
        }
    }
    for case in 0..100 {
        let dims = random_dims(&mut rng);
        let t = random_tensor(dims, &mut rng);
        let a_mode = modes[case % 3];
        let b_mode = modes[(case + 1 + case / 3 % 2) % 3];
        let a = random_matrix(rng.random_range(1..=5), dims[a_mode.index()], &mut rng);
        let b = random_matrix(rng.random_range(1..=5), dims[b_mode.index()], &mut rng);
        let ab = ok(mode_n_product(&t, &a, a_mode).and_then(|x| mode_n_product(&x, &b, b_mode)))?;
        let ba = ok(mode_n_product(&t, &b, b_mode).and_then(|x| mode_n_product(&x, &a, a_mode)))?;
        let d = max_diff(ab.as_slice(), ba.as_slice());
        ensure(ab.dims() == ba.dims() && d <= 1e-10, || format!("commutation case {case}: {d:e}"))?;
    }
    for case in 0..100 {
        let dims = random_dims(&mut rng);
        let t = random_tensor(dims, &mut rng);
        for mode in modes {
            let back = ok(fold(&unfold(&t, mode), mode, dims))?;
            ensure(back == t, || format!("fold/unfold case {case} {mode} not exact"))?;
        }
    }
    for case in 0..100 {
        let dims = random_dims(&mut rng);
        let t = random_tensor(dims, &mut rng);
        let mut sum = 0.0;
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    sum += t.get(i, j, k) * t.get(i, j, k);
                }
            }
        }
        let n = frobenius_norm(&t);
        let rel = (n * n - sum).abs() / sum;
        ensure(rel <= 1e-12, || format!("norm oracle case {case}: {rel:e}"))?;
    }
    Ok("400 randomized cases".into())
}

fn tucker_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = TuckerConfig {
        ranks: [2, 2, 2],
        hooi_max_iters: 25,
        hooi_tol: 1e-6,
    };
    let full = TuckerConfig { ranks: [6, 6, 6], ..cfg };
    let mut worst_gain = f64::INFINITY;
    for case in 0..20 {
        let t = random_tensor([6, 6, 6], &mut rng);
        let lossless = ok(hosvd(&t, &full))?;
        let e_full = ok(reconstruction_error(&t, &lossless))?;
        ensure(e_full <= 1e-8, || format!("case {case}: full-rank error {e_full:e}"))?;
        let h = ok(hosvd(&t, &cfg))?;
        let (o, trace) = ok(hooi_with_trace(&t, &cfg))?;
        for f in [&lossless, &h, &o] {
            let defect = f.orthonormality_defect();
            ensure(defect <= 1e-8, || format!("case {case}: orthonormality defect {defect:e}"))?;
        }
        ensure(trace.windows(2).all(|w| w[1] <= w[0] + 1e-10), || {
            format!("case {case}: HOOI trace increases {trace:?}")
        })?;
        let e_hosvd = ok(reconstruction_error(&t, &h))?;
        let e_hooi = ok(reconstruction_error(&t, &o))?;
        ensure(e_hooi <= e_hosvd, || format!("case {case}: HOOI {e_hooi} > HOSVD {e_hosvd}"))?;
        worst_gain = worst_gain.min(e_hosvd - e_hooi);
    }
    Ok(format!("20 instances, min HOSVD-HOOI gap {worst_gain:.2e}"))
}

fn random_factors(dims: [usize; 3], ranks: [usize; 3], rng: &mut ChaCha8Rng) -> TuckerFactors {
    let cfg = TuckerConfig {
        ranks,
        hooi_max_iters: 0,
        hooi_tol: 1e-6,
    };
    hosvd(&random_tensor(dims, rng), &cfg).unwrap()
}

fn random_upper(n: usize, density: f64, rng: &mut ChaCha8Rng) -> BinaryUpper {
    let mut m = BinaryUpper::zeros(n);
    for j in 0..n {
        for i in 0..j {
            if rng.random_bool(density) {
                m.set(i, j).unwrap();
            }
        }
    }
    m
}

fn smc_gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (dims, ranks, reduced) = ([5, 8, 4], [3, 4, 2], [2, 3, 2]);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let (n_s, n_t) = (rng.random_range(2..=4), rng.random_range(3..=6));
        let cells = (0..n_s * n_t)
            .map(|i| (i != 1 || case % 2 == 0).then(|| random_factors(dims, ranks, &mut rng)))
            .collect();
        let panel = ok(DecomposedPanel::new(n_s, n_t, cells))?;
        let w = (0..n_s).map(|_| random_upper(n_t, 0.5, &mut rng)).collect();
        let z = (0..n_t).map(|_| random_upper(n_s, 0.5, &mut rng)).collect();
        let weights = SimilarityWeights::from_matrices(w, z);
        let lambda = rng.random_range(0.0..2.0);
        for mode in Mode::ALL {
            let k = mode.index();
            let obj = ok(SmcObjective::new(&panel, &weights, mode, lambda))?;
            let v = random_matrix(dims[k], reduced[k], &mut rng);
            let analytic = ok(obj.gradient(&v))?;
            let scale = analytic.max_abs();
            for r in 0..v.rows() {
                for c in 0..v.cols() {
                    let (mut plus, mut minus) = (v.clone(), v.clone());
                    plus.as_mut_slice()[r * v.cols() + c] += h;
                    minus.as_mut_slice()[r * v.cols() + c] -= h;
                    let numeric = (ok(obj.loss(&plus))? - ok(obj.loss(&minus))?) / (2.0 * h);
                    let a = analytic.as_slice()[r * v.cols() + c];
                    // Entries far below the gradient's scale are compared
                    // against that scale instead of themselves.
                    let denom = a.abs().max(numeric.abs()).max(1e-3 * scale).max(1e-12);
                    worst = worst.max((a - numeric).abs() / denom);
                }
            }
        }
    }
    ensure(worst <= 1e-5, || format!("max relative error {worst:e}"))?;
    Ok(format!("20 instances, max relative error {worst:.2e}"))
}

fn smc_training() -> Check {
    let spec = TwoClusterSpec::default();
    let (panel, weights) = ok(two_cluster_instance(&spec))?;
    let cfg = SmcConfig {
        reduced_dims: spec.reduced_dims,
        ..SmcConfig::default()
    };
    ensure(cfg.iter_max == 500 && cfg.constrain_orthonormal, || "unexpected defaults".into())?;
    let constrained = ok(train_smc(&panel, &weights, &cfg))?;
    let mut ratios = Vec::new();
    for trace in &constrained.traces {
        let ratio = trace.final_loss() / trace.initial_loss();
        ensure(trace.iterations <= 500, || format!("mode {} ran {} iterations", trace.mode, trace.iterations))?;
        ensure(ratio < 0.1, || format!("mode {} final/initial loss {ratio:.4}", trace.mode))?;
        let worst = trace.orthonormality.iter().copied().fold(0.0, f64::max);
        ensure(
            trace.orthonormality.len() == trace.losses.len() && worst <= 1e-6,
            || format!("mode {} orthonormality defect {worst:e}", trace.mode),
        )?;
        ratios.push(ratio);
    }
    // Without the constraint the loss is minimized by shrinking V to zero.
    let free_cfg = SmcConfig {
        constrain_orthonormal: false,
        iter_max: 20_000,
        ..cfg
    };
    let free = ok(train_smc(&panel, &weights, &free_cfg))?;
    let mut shrink = Vec::new();
    for (trace, mode) in free.traces.iter().zip(Mode::ALL) {
        let ratio = free.matrices.get(mode).frobenius_norm() / trace.initial_norm;
        ensure(ratio < 1e-3, || format!("unconstrained mode {} kept ‖V‖ ratio {ratio:e}", trace.mode))?;
        shrink.push(ratio);
    }
    Ok(format!(
        "loss ratios {:.4} {:.4} {:.4}; unconstrained ‖V‖ ratios {:.1e} {:.1e} {:.1e}",
        ratios[0], ratios[1], ratios[2], shrink[0], shrink[1], shrink[2]
    ))
}

fn panel_from_series(series: &[Vec<Option<f64>>]) -> MarketPanel {
    let start = NaiveDate::from_ymd_opt(2015, 1, 5).unwrap();
    let days = series[0].len();
    let dates: Vec<_> = (0..days).map(|d| start + Days::new(d as u64)).collect();
    let stocks: Vec<String> = (0..series.len()).map(|s| format!("S{s}")).collect();
    let mut records = Vec::new();
    for (s, ys) in series.iter().enumerate() {
        for (t, y) in ys.iter().enumerate() {
            if let Some(y) = y {
                records.push(StockDayRecord {
                    stock_id: stocks[s].clone(),
                    date: dates[t],
                    quant: vec![1.0],
                    event: vec![1.0],
                    sentiment: vec![1.0],
                    close: 1.0,
                    p_change: *y,
                });
            }
        }
    }
    MarketPanel::new(stocks, dates, records, [1, 1, 1]).unwrap()
}

fn oracle_w(y: &[Option<f64>], eps1: f64) -> Vec<Vec<bool>> {
    let n = y.len();
    let mut w = vec![vec![false; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if let (Some(a), Some(b)) = (y[i], y[j]) {
                w[i][j] = b != 0.0 && (a - b).abs() / b.abs() <= eps1;
            }
        }
    }
    w
}

/// Single-pass Pearson from raw sums.
fn oracle_corr(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx <= 1e-18 || vy <= 1e-18 {
        return None;
    }
    Some((n * sxy - sx * sy) / (vx * vy).sqrt())
}

fn oracle_z(series: &[Vec<Option<f64>>], t: usize, eps2: f64, window: usize) -> Vec<Vec<bool>> {
    let n = series.len();
    let mut z = vec![vec![false; n]; n];
    if t + 1 < window {
        return z;
    }
    let slice = |s: usize| -> Option<Vec<f64>> { series[s][t + 1 - window..=t].iter().copied().collect() };
    for s in 0..n {
        for m in (s + 1)..n {
            if let (Some(a), Some(b)) = (slice(s), slice(m)) {
                z[s][m] = oracle_corr(&a, &b).is_some_and(|r| r >= eps2);
            }
        }
    }
    z
}

fn same(m: &BinaryUpper, oracle: &[Vec<bool>]) -> bool {
    let n = m.size();
    (0..n).all(|i| (0..n).all(|j| (i < j && m.get(i, j)) == oracle[i][j]))
}

fn similarity_oracles() -> Check {
    let w_ex = panel_from_series(&[vec![Some(0.030), Some(0.029)], vec![Some(0.05), Some(0.01)]]);
    ensure(ok(build_w(&w_ex, 0, 0.05))?.0.get(0, 1), || "0.030 vs 0.029 at eps1 0.05 should link".into())?;
    ensure(!ok(build_w(&w_ex, 1, 0.5))?.0.get(0, 1), || "0.05 vs 0.01 at eps1 0.5 should not link".into())?;
    let z_ex = panel_from_series(&[
        vec![Some(0.01), Some(0.02), Some(0.03)],
        vec![Some(0.01), Some(0.02), Some(0.03)],
        vec![Some(0.03), Some(0.02), Some(0.01)],
    ]);
    ensure(ok(build_z(&z_ex, 2, 0.9, 3))?.matrix.get(0, 1), || "identical series should link".into())?;
    ensure(!ok(build_z(&z_ex, 2, 0.0, 3))?.matrix.get(0, 2), || "reversed series should not link".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut ones = 0;
    for _ in 0..50 {
        let (n_s, n_t) = (rng.random_range(2..=6), rng.random_range(5..=30));
        // Latent factor so that some pairs are strongly correlated.
        let common: Vec<f64> = (0..n_t).map(|_| rng.random_range(-0.05..0.05)).collect();
        let series: Vec<Vec<Option<f64>>> = (0..n_s)
            .map(|_| {
                let mix = rng.random_range(0.0..1.0);
                (0..n_t)
                    .map(|t| {
                        if rng.random_bool(0.05) {
                            None
                        } else if rng.random_bool(0.03) {
                            Some(0.0)
                        } else {
                            Some(mix * common[t] + (1.0 - mix) * rng.random_range(-0.05..0.05))
                        }
                    })
                    .collect()
            })
            .collect();
        let panel = panel_from_series(&series);
        let eps1 = rng.random_range(0.05..1.0);
        for (s, ys) in series.iter().enumerate() {
            let (w, _) = ok(build_w(&panel, s, eps1))?;
            ensure(same(&w, &oracle_w(ys, eps1)), || format!("W_{s} differs from oracle"))?;
            ones += w.ones();
        }
        let eps2 = rng.random_range(-0.2..0.9);
        let window = rng.random_range(2..=n_t.min(10));
        for t in 0..n_t {
            let z = ok(build_z(&panel, t, eps2, window))?;
            ensure(same(&z.matrix, &oracle_z(&series, t, eps2, window)), || format!("Z_{t} differs from oracle"))?;
            ones += z.matrix.ones();
        }
    }
    Ok(format!("4 worked examples, 50 random panels ({ones} linked pairs)"))
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Textbook LSTM over explicit loops, reading the weights row by row.
fn oracle_lstm(p: &LstmParams, xs: &[Vec<f64>]) -> f64 {
    let (n_x, n_h) = (p.input_dim(), p.hidden_dim());
    let mut h = vec![0.0; n_h];
    let mut c = vec![0.0; n_h];
    for x in xs {
        let mut pre = [vec![0.0; n_h], vec![0.0; n_h], vec![0.0; n_h], vec![0.0; n_h]];
        for (g, out) in pre.iter_mut().enumerate() {
            let w = p.gate_weights(g);
            for r in 0..n_h {
                let mut acc = p.gate_bias(g)[r];
                for q in 0..n_x {
                    acc += w[r * (n_x + n_h) + q] * x[q];
                }
                for q in 0..n_h {
                    acc += w[r * (n_x + n_h) + n_x + q] * h[q];
                }
                out[r] = acc;
            }
        }
        for r in 0..n_h {
            let (i, f, o, g) = (sig(pre[0][r]), sig(pre[1][r]), sig(pre[2][r]), pre[3][r].tanh());
            c[r] = f * c[r] + i * g;
            h[r] = o * c[r].tanh();
        }
    }
    let mut logit = p.readout_bias();
    for r in 0..n_h {
        logit += p.readout_weights()[r] * h[r];
    }
    sig(logit)
}

fn sample(inputs: Vec<Vec<f64>>, target: Label) -> SequenceSample {
    let d = NaiveDate::from_ymd_opt(2015, 1, 5).unwrap();
    SequenceSample {
        stock_id: "S".into(),
        target_date: d,
        input_dates: vec![d; inputs.len()],
        inputs,
        target,
    }
}

fn lstm_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut forward_err: f64 = 0.0;
    let mut grad_err: f64 = 0.0;
    for case in 0..10 {
        let (n_x, n_h, len) = (rng.random_range(1..=4), rng.random_range(1..=5), rng.random_range(1..=6));
        let mut p = LstmParams::zeros(n_x, n_h).unwrap();
        p.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let xs: Vec<Vec<f64>> = (0..len).map(|_| (0..n_x).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let up = case % 2 == 0;
        let cache = ok(lstm_forward(&p, &xs))?;
        forward_err = forward_err.max((cache.probability - oracle_lstm(&p, &xs)).abs());
        let mut grad = vec![0.0; p.as_slice().len()];
        ok(lstm_backward(&p, &cache, up, &mut grad))?;
        let loss = |q: &LstmParams| -> Result<f64, String> {
            let c = ok(lstm_forward(q, &xs))?;
            let mut scratch = vec![0.0; q.as_slice().len()];
            ok(lstm_backward(q, &c, up, &mut scratch))
        };
        let h = 1e-5;
        for i in 0..grad.len() {
            let (mut plus, mut minus) = (p.clone(), p.clone());
            plus.as_mut_slice()[i] += h;
            minus.as_mut_slice()[i] -= h;
            let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
            let scale = grad[i].abs().max(numeric.abs());
            let err = if scale < 1e-6 { (grad[i] - numeric).abs() } else { (grad[i] - numeric).abs() / scale };
            grad_err = grad_err.max(err);
        }
    }
    ensure(forward_err <= 1e-10, || format!("forward differs from oracle by {forward_err:e}"))?;
    ensure(grad_err <= 1e-4, || format!("BPTT differs from finite differences by {grad_err:e}"))?;

    let samples: Vec<_> = (0..10)
        .map(|i| {
            let s = if i < 5 { 1.0 } else { -1.0 };
            let target = if s > 0.0 { Label::Up } else { Label::Down };
            sample(vec![vec![s * 0.5, i as f64 * 0.1]; 3], target)
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 500,
        batch_size: 1,
        learning_rate: 0.1,
        hidden_dim: 8,
        ..TrainConfig::default()
    };
    let (p, _) = ok(train_lstm(&samples, &cfg))?;
    let mut correct = 0;
    for s in &samples {
        if predict(ok(p.probability_up(s))?, 0.5) == s.target {
            correct += 1;
        }
    }
    let acc = correct as f64 / samples.len() as f64;
    ensure(acc >= 0.99, || format!("overfit reached only {acc}"))?;
    Ok(format!(
        "forward err {forward_err:.1e}, gradient rel err {grad_err:.1e}, overfit {correct}/10 in 500 epochs"
    ))
}

fn metric_checks() -> Check {
    let c = ConfusionCounts::new(3, 4, 2, 1);
    let (a, m) = (ok(accuracy(&c))?, ok(mcc(&c))?);
    ensure((a - 0.7).abs() <= 1e-6 && (m - 0.4082).abs() <= 1e-4, || format!("(3,4,2,1) gave {a}, {m}"))?;
    ensure((m - 1.0 / 6.0f64.sqrt()).abs() <= 1e-12, || format!("(3,4,2,1) MCC {m}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for case in 0..1000 {
        let mut draw = || if rng.random_bool(0.1) { 0 } else { rng.random_range(0..200u64) };
        let c = ConfusionCounts::new(draw(), draw(), draw(), draw());
        if c.total() == 0 {
            ensure(accuracy(&c).is_err(), || "empty matrix must be rejected".into())?;
            continue;
        }
        let n = c.total() as f64;
        let acc = (c.tp + c.tn) as f64 / n;
        // Marginal form: (tp/n - s p) / sqrt(s p (1 - s)(1 - p)).
        let s = (c.tp + c.fn_) as f64 / n;
        let p = (c.tp + c.fp) as f64 / n;
        let denom = s * p * (1.0 - s) * (1.0 - p);
        let oracle = if denom == 0.0 { 0.0 } else { (c.tp as f64 / n - s * p) / denom.sqrt() };
        let (a, m) = (ok(accuracy(&c))?, ok(mcc(&c))?);
        ensure((a - acc).abs() <= 1e-12 && (m - oracle).abs() <= 1e-9, || {
            format!("case {case} {c:?}: got ({a}, {m}), oracle ({acc}, {oracle})")
        })?;
    }
    Ok("1000 random matrices and (3,4,2,1)".into())
}

fn synth_and_run(dir: &Path, spec: &SynthSpec, out: &str) -> Result<RunReport, String> {
    ok(write_synth(spec, dir))?;
    let mut cfg = ok(RunConfig::from_file(&dir.join("config.toml")))?;
    cfg.out_dir = dir.join(out);
    ok(run_pipeline(&cfg))
}

fn acc_of(report: &RunReport, method: &str) -> Result<f64, String> {
    report
        .methods
        .iter()
        .find(|m| m.method == method)
        .map(|m| m.accuracy)
        .ok_or_else(|| format!("report has no {method} row"))
}

fn end_to_end(tmp: &Path) -> Check {
    let spec = SynthSpec {
        stocks: 8,
        days: 250,
        noise: 0.1,
        ..SynthSpec::default()
    };
    let report = synth_and_run(&tmp.join("signal"), &spec, "run")?;
    let lstm = acc_of(&report, METHOD_SMC_LSTM)?;
    let raw = acc_of(&report, METHOD_LOGISTIC_RAW)?;
    ensure(lstm >= 0.70, || format!("SMC+LSTM accuracy {lstm:.4} < 0.70"))?;
    ensure(lstm >= raw + 0.03, || format!("SMC+LSTM {lstm:.4} vs raw logistic {raw:.4}"))?;

    let null = SynthSpec { signal_strength: 0.0, ..spec };
    let control = synth_and_run(&tmp.join("null"), &null, "run")?;
    let mut spread = Vec::new();
    for m in &control.methods {
        ensure((0.4..=0.6).contains(&m.accuracy), || {
            format!("control {} accuracy {:.4} outside [0.4, 0.6]", m.method, m.accuracy)
        })?;
        spread.push(format!("{:.3}", m.accuracy));
    }
    Ok(format!(
        "SMC+LSTM {lstm:.4}, raw logistic {raw:.4}; null control {}",
        spread.join(" ")
    ))
}

fn determinism(tmp: &Path) -> Check {
    let spec = SynthSpec {
        stocks: 4,
        days: 120,
        ..SynthSpec::default()
    };
    let dir = tmp.join("determinism");
    synth_and_run(&dir, &spec, "first")?;
    synth_and_run(&dir, &spec, "second")?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    let a = read(&dir.join("first/report.json"))?;
    let b = read(&dir.join("second/report.json"))?;
    ensure(a == b, || "report.json differs between identical runs".into())?;
    Ok(format!("report.json identical ({} bytes)", a.len()))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Check + '_>)> = vec![
        ("multilinear identities", Duration::from_secs(5), Box::new(multilinear_identities)),
        ("tucker", Duration::from_secs(30), Box::new(tucker_checks)),
        ("smc gradient", Duration::from_secs(60), Box::new(smc_gradient_check)),
        ("smc training", Duration::from_secs(120), Box::new(smc_training)),
        ("w/z oracles", Duration::from_secs(5), Box::new(similarity_oracles)),
        ("lstm", Duration::from_secs(60), Box::new(lstm_checks)),
        ("metrics", Duration::from_secs(2), Box::new(metric_checks)),
        ("end-to-end synthetic", Duration::from_secs(600), Box::new(|| end_to_end(tmp.path()))),
        ("determinism", Duration::from_secs(600), Box::new(|| determinism(tmp.path()))),
    ];
    let mut failed = 0;
    for (n, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed <= *budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {elapsed:.1?}, budget {budget:?}"))
            }
        });
        match outcome {
            Ok(msg) => println!("PASS {} {name}: {msg} ({:.2}s)", n + 1, elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name}: {msg} ({:.2}s)", n + 1, elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
