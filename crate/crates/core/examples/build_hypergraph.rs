//! Build the unified hypergraph of a small bag and print its hyperedges and
//! the propagation operator.
//!
//! ```text
//! cargo run --example build_hypergraph -- [k]
//! ```

use hgmamba::hypergraph::{build_hypergraph, propagation_matrix, EdgeKind, TileBag};
use hgmamba::numkit::{Matrix, Rng};

fn main() -> hgmamba::Result<()> {
    let k = std::env::args()
        .nth(1)
        .map_or(Ok(2), |s| s.parse())
        .expect("k is an integer");
    // An L-shaped bag with one detached tile.
    let coords = vec![(0, 0), (0, 1), (0, 2), (1, 0), (2, 0), (5, 5)];
    let mut rng = Rng::new(0);
    let features = Matrix::from_fn(coords.len(), 4, |_, _| rng.normal());
    let bag = TileBag::new("demo", coords, features, 0)?;

    let hg = build_hypergraph(&bag, k)?;
    println!(
        "{} tiles, {} hyperedges, {} incidences",
        hg.n_nodes(),
        hg.n_edges(),
        hg.incidence().nnz()
    );
    for (e, members) in hg.incidence().edges().iter().enumerate() {
        let kind = match hg.incidence().kinds()[e] {
            EdgeKind::Rule => "rule",
            EdgeKind::Sim => "sim ",
        };
        println!("  e{e:<2} {kind} {members:?}");
    }
    println!("node degrees {:?}", hg.node_degrees());

    let theta = propagation_matrix(&hg);
    println!("theta:");
    for r in 0..theta.rows() {
        let row: Vec<String> = theta.row(r).iter().map(|v| format!("{v:6.3}")).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
