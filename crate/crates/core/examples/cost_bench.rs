//! Analytic FLOPs and peak activation memory against full self-attention.
//!
//! ```text
//! cargo run --example cost_bench -- [d] [layers]
//! ```

use hgmamba::cost::{cost_model, StructureStats};
use hgmamba::pipeline::ModelConfig;

fn main() -> hgmamba::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|s| s.parse::<usize>().expect("integer argument"));
    let d = args.next().unwrap_or(512);
    let layers = args.next().unwrap_or(2);
    let cfg = ModelConfig {
        input_dim: d,
        d,
        n_layers: layers,
        ..ModelConfig::default()
    };
    println!(
        "{:>6} {:>12} {:>12} {:>7} {:>10} {:>10}",
        "n", "hgmamba", "attention", "ratio", "peak MB", "attn MB"
    );
    for n in [1000, 2000, 4000, 8000, 10000] {
        let r = cost_model(&cfg, &StructureStats::estimate(&cfg, n))?;
        println!(
            "{n:>6} {:>10.2} G {:>10.2} G {:>7.2} {:>10.1} {:>10.1}",
            r.total as f64 / 1e9,
            r.attention_flops as f64 / 1e9,
            r.attention_ratio(),
            r.peak_activation_bytes as f64 / 1e6,
            r.attention_peak_bytes as f64 / 1e6
        );
    }
    let r = cost_model(&cfg, &StructureStats::estimate(&cfg, 4000))?;
    println!("\nbreakdown at n = 4000:");
    for (name, flops) in r.components() {
        println!(
            "  {name:<16} {:>6.1}%",
            100.0 * flops as f64 / r.total as f64
        );
    }
    Ok(())
}
