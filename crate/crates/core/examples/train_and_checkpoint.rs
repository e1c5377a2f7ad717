//! Train a small model, save the best checkpoint, reload it and check that the
//! reloaded model evaluates identically.

use hgmamba::datakit::{Dataset, SynthConfig};
use hgmamba::pipeline::{
    evaluate, load_checkpoint, save_checkpoint, train_with, HgMambaModel, ModelConfig, RunConfig,
    TrainConfig,
};

fn main() -> hgmamba::Result<()> {
    let data = Dataset::synthesize(
        &SynthConfig {
            rows: 8,
            cols: 8,
            d: 16,
            motif_strength: 3.0,
            ..SynthConfig::default()
        },
        60,
        20,
        20,
    )?;
    let cfg = RunConfig {
        model: ModelConfig {
            input_dim: 16,
            d: 16,
            d_state: 4,
            m_sequences: 4,
            attention_dim: 16,
            ..ModelConfig::default()
        },
        train: TrainConfig {
            epochs: 8,
            milestones: vec![6],
            ..TrainConfig::default()
        },
    };
    let out = train_with(
        HgMambaModel::init(&cfg.model, cfg.train.seed)?,
        &data,
        &cfg.train,
        |r| {
            println!(
                "epoch {} loss {:.4} val {}",
                r.epoch,
                r.train_loss,
                r.val.report().replace('\n', " ")
            );
        },
    )?;
    print!("{}", out.history.to_csv());

    let path = std::env::temp_dir().join("hgmamba-example-checkpoint.bin");
    save_checkpoint(&path, &cfg, &out.best)?;
    let (cfg_back, model) = load_checkpoint(&path)?;
    let before = evaluate(&out.best, &data.test, cfg.train.seed)?;
    let after = evaluate(&model, &data.test, cfg_back.train.seed)?;
    assert_eq!(before, after);
    println!(
        "best epoch {}; reloaded test metrics:\n{}",
        out.best_epoch,
        after.report()
    );
    Ok(())
}
