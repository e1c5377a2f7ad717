mod common;

use clap::Parser;

use hgmamba::cli::{run, Cli, CHECKPOINT_FILE, CONFIG_FILE, HISTORY_FILE};
use hgmamba::numkit::Parameters;
use hgmamba::pipeline::{adam_step, train_scan_seed, AdamState, BagModel, HgMambaModel, RunConfig};

use common::{motif_data, motif_run_config};

/// Mean loss over `batch` with the scans of epoch 0.
fn batch_loss(
    model: &HgMambaModel,
    batch: &[(
        hgmamba::hypergraph::TileBag,
        hgmamba::hypergraph::Hypergraph,
    )],
    seed: u64,
) -> f64 {
    batch
        .iter()
        .enumerate()
        .map(|(i, (bag, hg))| {
            model
                .loss_and_grad(bag, hg, train_scan_seed(seed, 0, i))
                .unwrap()
                .0
        })
        .sum::<f64>()
        / batch.len() as f64
}

#[test]
fn first_batch_loss_falls_within_twenty_steps() {
    let mut falls = Vec::new();
    for seed in 0..3 {
        let cfg = motif_run_config(seed);
        let data = motif_data(seed, false);
        let mut model = HgMambaModel::init(&cfg.model, seed).unwrap();
        let batch: Vec<_> = data.train[..cfg.train.batch_size]
            .iter()
            .map(|b| (b.clone(), model.prepare(b).unwrap()))
            .collect();
        let before = batch_loss(&model, &batch, seed);
        let mut state = AdamState::new(&model);
        for step in 0..20 {
            let mut grads = model.zeros_like();
            for (i, (bag, hg)) in batch.iter().enumerate() {
                let (_, g) = model
                    .loss_and_grad(bag, hg, train_scan_seed(seed, step, i))
                    .unwrap();
                grads.add_assign(&g);
            }
            grads.scale_all(1.0 / batch.len() as f64);
            adam_step(
                &mut model,
                &grads,
                &mut state,
                cfg.train.lr,
                cfg.train.weight_decay,
            );
            model.project();
        }
        let after = batch_loss(&model, &batch, seed);
        falls.push(after < before);
    }
    assert!(falls.iter().filter(|&&f| f).count() >= 2, "{falls:?}");
}

fn cli(args: &[&str]) -> String {
    let parsed =
        Cli::try_parse_from(std::iter::once("hgmamba").chain(args.iter().copied())).unwrap();
    let (out, ok) = run(&parsed).unwrap();
    assert!(ok);
    out
}

#[test]
fn synth_train_eval_golden_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    cli(&[
        "synth",
        "--out",
        &path("data"),
        "--bags",
        "28",
        "--grid",
        "6x6",
        "--dim",
        "8",
        "--motif",
        "3",
        "--seed",
        "7",
    ]);
    let mut cfg = RunConfig::default();
    cfg.model.d = 8;
    cfg.model.d_state = 4;
    cfg.model.m_sequences = 2;
    cfg.model.attention_dim = 8;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 4;
    cfg.train.milestones = vec![2];
    cfg.train.seed = 7;
    std::fs::write(path("run.cfg"), cfg.to_text()).unwrap();
    cli(&[
        "train",
        "--data",
        &path("data"),
        "--config",
        &path("run.cfg"),
        "--out",
        &path("run"),
    ]);
    for file in [CHECKPOINT_FILE, HISTORY_FILE, CONFIG_FILE] {
        assert!(dir.path().join("run").join(file).exists(), "{file}");
    }
    let checkpoint = dir.path().join("run").join(CHECKPOINT_FILE);
    let report = cli(&[
        "eval",
        "--data",
        &path("data"),
        "--checkpoint",
        checkpoint.to_str().unwrap(),
    ]);
    assert_eq!(report, GOLDEN_TEST_REPORT, "{report}");
    assert_eq!(
        std::fs::read_to_string(dir.path().join("run").join("eval_test.txt")).unwrap(),
        report
    );
}

// Test-split report of the run above, recorded from the first validated build.
const GOLDEN_TEST_REPORT: &str =
    "n=8\nacc=0.5\nmacro_f1=0.3333333333333333\nauc=0.25\ncount_0=4\ncount_1=4\n";
