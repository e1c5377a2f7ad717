//! One test per acceptance criterion. Each prints a single
//! `criterion N ... PASS|FAIL` line with the measured numbers before asserting.

mod common;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use hgmamba::bissm::{selective_scan, SsmParams};
use hgmamba::cli::{bench_rows, sweep_cmd, sweep_variants, SweepArgs, HISTORY_FILE, SWEEP_HEADER};
use hgmamba::datakit::{Dataset, SynthConfig};
use hgmamba::gradcheck::{run_gradcheck, CheckSize};
use hgmamba::hgconv::{hgconv_forward, ConvMode, HgConvParams};
use hgmamba::hypergraph::propagation_matrix;
use hgmamba::numkit::{softplus, Matrix, Rng};
use hgmamba::pipeline::{
    evaluate, train, HgMambaModel, MeanPoolModel, Metrics, ModelConfig, RunConfig,
};
use hgmamba::scanner::{h_arw, h_dfs, walk_length};

use common::{dense_hgconv, motif_data, motif_run_config, random_hypergraph, scan_violations};

fn report(id: u32, name: &str, ok: bool, detail: impl AsRef<str>) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {id} {name}: {verdict} ({})", detail.as_ref());
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

#[test]
fn criterion_1_propagation_operator() {
    let start = Instant::now();
    let mut rng = Rng::new(1);
    let (mut worst_sym, mut worst_fix) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let hg = random_hypergraph(&mut rng, 64);
        let theta = propagation_matrix(&hg);
        worst_sym = worst_sym.max(theta.max_abs_diff(&theta.transpose()));
        let root: Vec<f64> = hg.node_degrees().iter().map(|d| d.sqrt()).collect();
        for (u, &r) in root.iter().enumerate() {
            let image: f64 = theta.row(u).iter().zip(&root).map(|(t, s)| t * s).sum();
            worst_fix = worst_fix.max((image - r).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = worst_sym < 1e-12 && worst_fix < 1e-10 && within(elapsed, 10.0);
    report(
        1,
        "propagation operator",
        ok,
        format!(
            "symmetry {worst_sym:.1e}, fixed vector {worst_fix:.1e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_2_sparse_dense_equivalence() {
    let start = Instant::now();
    let mut rng = Rng::new(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let hg = random_hypergraph(&mut rng, 64);
        let d_in = 1 + rng.below(8);
        let d_out = 1 + rng.below(8);
        let mut p = HgConvParams::init(d_in, d_out, hg.n_edges(), &mut rng);
        p.edge_weights = (0..hg.n_edges())
            .map(|_| rng.uniform_in(0.1, 3.0))
            .collect();
        let x = Matrix::from_fn(hg.n_nodes(), d_in, |_, _| rng.normal());
        let sparse = hgconv_forward(&hg, &x, &p, ConvMode::Hypergraph).unwrap();
        worst = worst.max(sparse.max_abs_diff(&dense_hgconv(&hg, &x, &p.weight, &p.edge_weights)));
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-10 && within(elapsed, 10.0);
    report(
        2,
        "sparse-dense equivalence",
        ok,
        format!("max abs err {worst:.1e}, {:.2}s", elapsed.as_secs_f64()),
    );
    assert!(ok);
}

#[test]
fn criterion_3_scan_properties() {
    let start = Instant::now();
    let mut rng = Rng::new(3);
    let mut violations = Vec::new();
    for i in 0..500 {
        let hg = random_hypergraph(&mut rng, 64);
        let t_len = walk_length(hg.n_nodes(), 0.7);
        let seq = if i % 2 == 0 {
            h_dfs(&hg, &mut rng)
        } else {
            h_arw(&hg, &mut rng, t_len)
        };
        violations.extend(scan_violations(&hg, &seq, t_len));
    }
    let elapsed = start.elapsed();
    let ok = violations.is_empty() && within(elapsed, 30.0);
    report(
        3,
        "scan properties",
        ok,
        format!(
            "500 sequences, {} violations, {:.2}s",
            violations.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok, "{violations:?}");
}

/// Direct transcription of the discretized recurrence, one channel and one
/// state at a time.
fn unrolled_scan(x: &Matrix, p: &SsmParams) -> Matrix {
    let (len, d) = x.shape();
    let ds = p.a_log.cols();
    Matrix::from_fn(len, d, |t_out, c| {
        let mut y = 0.0;
        for k in 0..ds {
            let a = -p.a_log[(c, k)].exp();
            let mut h = 0.0;
            let mut c_t = 0.0;
            for t in 0..=t_out {
                let row = x.row(t);
                let delta = softplus(p.delta_weight[(0, c)] * row[c] + p.delta_bias[(0, c)]);
                let b: f64 =
                    p.b_bias[(0, k)] + (0..d).map(|j| row[j] * p.b_weight[(j, k)]).sum::<f64>();
                c_t = p.c_bias[(0, k)] + (0..d).map(|j| row[j] * p.c_weight[(j, k)]).sum::<f64>();
                h = (delta * a).exp() * h + delta * b * row[c];
            }
            y += c_t * h;
        }
        y + p.d_skip[(0, c)] * x[(t_out, c)]
    })
}

#[test]
fn criterion_4_ssm_correctness() {
    let mut rng = Rng::new(4);

    let mut p = SsmParams::init(1, 1, 4, &mut rng);
    p.a_log = Matrix::filled(1, 1, -1000.0);
    p.delta_weight = Matrix::zeros(1, 1);
    p.delta_bias = Matrix::filled(1, 1, 1f64.exp_m1().ln());
    p.b_weight = Matrix::zeros(1, 1);
    p.b_bias = Matrix::filled(1, 1, 1.0);
    p.c_weight = Matrix::zeros(1, 1);
    p.c_bias = Matrix::filled(1, 1, 1.0);
    p.d_skip = Matrix::zeros(1, 1);
    let x = Matrix::from_fn(50, 1, |_, _| rng.normal());
    let y = selective_scan(&x, &[true; 50], &p).unwrap();
    let mut running = 0.0;
    let mut prefix_err = 0.0f64;
    for t in 0..50 {
        running += x[(t, 0)];
        prefix_err = prefix_err.max((y[(t, 0)] - running).abs());
    }

    let mut unrolled_err = 0.0f64;
    let mut padding_exact = true;
    for _ in 0..100 {
        let d = 1 + rng.below(4);
        let ds = 1 + rng.below(4);
        let len = 1 + rng.below(12);
        let mut p = SsmParams::init(d, ds, 4, &mut rng);
        p.a_log = Matrix::from_fn(d, ds, |_, _| rng.uniform_in(-1.0, 1.5));
        p.delta_weight = Matrix::from_fn(1, d, |_, _| rng.uniform_in(-1.0, 1.0));
        p.delta_bias = Matrix::from_fn(1, d, |_, _| rng.uniform_in(-3.0, 0.5));
        p.b_bias = Matrix::from_fn(1, ds, |_, _| 0.3 * rng.normal());
        p.c_bias = Matrix::from_fn(1, ds, |_, _| 0.3 * rng.normal());
        p.d_skip = Matrix::from_fn(1, d, |_, _| rng.normal());
        let x = Matrix::from_fn(len, d, |_, _| rng.normal());
        let y = selective_scan(&x, &vec![true; len], &p).unwrap();
        unrolled_err = unrolled_err.max(y.max_abs_diff(&unrolled_scan(&x, &p)));

        let pad = 1 + rng.below(5);
        let mut padded = Matrix::from_fn(len + pad, d, |_, _| 50.0 * rng.normal());
        for t in 0..len {
            padded.row_mut(t).copy_from_slice(x.row(t));
        }
        let valid: Vec<bool> = (0..len + pad).map(|t| t < len).collect();
        let yp = selective_scan(&padded, &valid, &p).unwrap();
        padding_exact &= (0..len).all(|t| yp.row(t) == y.row(t));
        padding_exact &= (len..len + pad).all(|t| yp.row(t).iter().all(|&v| v == 0.0));
    }
    let ok = prefix_err < 1e-12 && unrolled_err < 1e-12 && padding_exact;
    report(
        4,
        "SSM correctness",
        ok,
        format!("prefix sum {prefix_err:.1e}, unrolled {unrolled_err:.1e}, padding exact {padding_exact}"),
    );
    assert!(ok);
}

#[test]
fn criterion_5_differentiation() {
    let start = Instant::now();
    let checks = run_gradcheck(CheckSize::Tiny, 5).unwrap();
    let elapsed = start.elapsed();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{} {:.1e}", c.name, c.rel_err))
        .collect();
    let worst = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    let has_model = checks.iter().any(|c| c.name.starts_with("model."));
    let ok = failed.is_empty() && has_model && within(elapsed, 120.0);
    report(
        5,
        "differentiation",
        ok,
        format!(
            "{} checks, worst rel err {worst:.1e}, {:.2}s",
            checks.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok, "{failed:?}");
}

#[test]
fn criterion_6_complexity() {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.model.d = 512;
    cfg.model.input_dim = 512;
    cfg.model.n_layers = 2;
    let rows = bench_rows(&cfg, &[1000, 2000, 4000, 8000, 10000]).unwrap();
    let doubling = |f: fn(&hgmamba::cli::BenchRow) -> u64| -> Vec<f64> {
        rows[..4]
            .windows(2)
            .map(|w| f(&w[1]) as f64 / f(&w[0]) as f64)
            .collect()
    };
    let linear = doubling(|r| r.hgmamba);
    let quadratic = doubling(|r| r.attention);
    let ratio_10k = rows[4].ratio();
    let elapsed = start.elapsed();
    let linear_ok = linear.iter().all(|r| (1.9..=2.1).contains(r));
    let quadratic_ok = quadratic.iter().all(|r| (3.6..=4.4).contains(r));
    let ratio_ok = ratio_10k >= 5.0;
    let ok = linear_ok && quadratic_ok && ratio_ok && within(elapsed, 5.0);
    report(
        6,
        "complexity",
        ok,
        format!(
            "hgmamba doubling {linear:.3?} ({}), attention doubling {quadratic:.3?} ({}), attention/hgmamba at 10000 = {ratio_10k:.2} ({}), {:.3}s",
            if linear_ok { "ok" } else { "out of range" },
            if quadratic_ok { "ok" } else { "out of range" },
            if ratio_ok { "ok" } else { "below 5" },
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

struct MotifRun {
    hgmamba: Metrics,
    baseline: Metrics,
    history_csv: String,
    elapsed: Duration,
}

fn motif_run() -> &'static MotifRun {
    static RUN: OnceLock<MotifRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = motif_run_config(0);
        let data = motif_data(0, false);
        let start = Instant::now();
        let out = train(
            HgMambaModel::init(&cfg.model, cfg.train.seed).unwrap(),
            &data,
            &cfg.train,
        )
        .unwrap();
        let hgmamba = evaluate(&out.best, &data.test, cfg.train.seed).unwrap();
        let elapsed = start.elapsed();
        let baseline_model = MeanPoolModel::init(cfg.model.input_dim, 2, cfg.train.seed);
        let base = train(baseline_model, &data, &cfg.train).unwrap();
        let baseline = evaluate(&base.best, &data.test, cfg.train.seed).unwrap();
        MotifRun {
            hgmamba,
            baseline,
            history_csv: out.history.to_csv(),
            elapsed,
        }
    })
}

#[test]
fn criterion_7_end_to_end_learning() {
    let run = motif_run();
    let auc = run.hgmamba.auc.unwrap_or(0.0);
    let base_auc = run.baseline.auc.unwrap_or(0.0);
    let ok = auc >= 0.95 && run.hgmamba.acc >= 0.90 && base_auc < auc && within(run.elapsed, 900.0);
    report(
        7,
        "end-to-end learning",
        ok,
        format!(
            "test auc {auc:.4} acc {:.3}, mean-pool auc {base_auc:.4} acc {:.3}, {:.1}s",
            run.hgmamba.acc,
            run.baseline.acc,
            run.elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_8_ablation_harness() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let synth = SynthConfig {
        rows: 5,
        cols: 5,
        d: 8,
        motif_strength: 3.0,
        ..SynthConfig::default()
    };
    Dataset::synthesize(&synth, 8, 4, 4)
        .unwrap()
        .save(&data_dir)
        .unwrap();
    let mut cfg = RunConfig::default();
    cfg.model = ModelConfig {
        d: 8,
        d_state: 4,
        m_sequences: 4,
        attention_dim: 8,
        ..cfg.model
    };
    cfg.train.epochs = 2;
    cfg.train.milestones = vec![1];
    let cfg_path = dir.path().join("sweep.cfg");
    std::fs::write(&cfg_path, cfg.to_text()).unwrap();
    let out = dir.path().join("sweep");
    let tsv = sweep_cmd(&SweepArgs {
        data: data_dir,
        config: Some(cfg_path),
        out: out.clone(),
        epochs: None,
        cost_only: false,
    })
    .unwrap();

    let mut problems = Vec::new();
    let mut lines = tsv.lines();
    if lines.next() != Some(SWEEP_HEADER) {
        problems.push("header".to_string());
    }
    let expected = sweep_variants(&cfg);
    let body: Vec<&str> = lines.collect();
    if body.len() != expected.len() {
        problems.push(format!(
            "{} rows for {} variants",
            body.len(),
            expected.len()
        ));
    }
    for (line, (axis, value, _)) in body.iter().zip(&expected) {
        let f: Vec<&str> = line.split('\t').collect();
        let numeric = f.len() == 7
            && f[2..]
                .iter()
                .all(|v| v.parse::<f64>().is_ok_and(f64::is_finite));
        if !numeric || f[0] != *axis || f[1] != value {
            problems.push(format!("malformed row {line:?}"));
        }
        let history = out.join(format!("{axis}_{value}")).join(HISTORY_FILE);
        match std::fs::read_to_string(&history) {
            Ok(h) if h.lines().count() == 1 + cfg.train.epochs => {}
            _ => problems.push(format!("missing or short {}", history.display())),
        }
    }
    let axes = ["top_k", "scan_mix", "n_layers"]
        .map(|a| expected.iter().filter(|(x, _, _)| *x == a).count());
    let ok = problems.is_empty() && axes == [6, 4, 4];
    report(
        8,
        "ablation harness",
        ok,
        format!(
            "{} variants (top_k {}, scan_mix {}, n_layers {}), {} problems",
            body.len(),
            axes[0],
            axes[1],
            axes[2],
            problems.len()
        ),
    );
    assert!(ok, "{problems:?}");
}

#[test]
fn criterion_9_determinism() {
    let first = &motif_run().history_csv;
    let cfg = motif_run_config(0);
    let data = motif_data(0, false);
    let again = train(
        HgMambaModel::init(&cfg.model, cfg.train.seed).unwrap(),
        &data,
        &cfg.train,
    )
    .unwrap();
    let second = again.history.to_csv();
    let ok = *first == second;
    report(
        9,
        "determinism",
        ok,
        format!(
            "{} history lines, bit-identical {ok}",
            first.lines().count()
        ),
    );
    assert!(ok);
}
