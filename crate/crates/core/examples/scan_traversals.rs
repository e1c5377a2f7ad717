//! Flatten a tile grid into H-DFS, H-ARW and random sequences.
//!
//! ```text
//! cargo run --example scan_traversals -- [seed]
//! ```

use hgmamba::hypergraph::{build_hypergraph, TileBag};
use hgmamba::numkit::{Matrix, Rng};
use hgmamba::scanner::{build_scan_set_with, ScanMix};

fn main() -> hgmamba::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map_or(Ok(0), |s| s.parse())
        .expect("seed is an integer");
    let coords: Vec<(i32, i32)> = (0..4).flat_map(|r| (0..5).map(move |c| (r, c))).collect();
    let mut rng = Rng::new(seed);
    let features = Matrix::from_fn(coords.len(), 8, |_, _| rng.normal());
    let bag = TileBag::new("grid", coords, features, 0)?;
    let hg = build_hypergraph(&bag, 3)?;

    for mix in [ScanMix::Both, ScanMix::Random] {
        let scans = build_scan_set_with(&hg, 4, seed, 0.7, mix);
        println!("{} ({} valid tokens)", mix.name(), scans.total_tokens());
        for s in &scans.sequences {
            println!(
                "  {:?} restarts {:?}: {:?}",
                s.strategy,
                s.restarts,
                s.valid_prefix()
            );
        }
        let uncovered = scans.membership.iter().filter(|m| m.is_empty()).count();
        println!("  tiles in no sequence: {uncovered}");
    }
    Ok(())
}
