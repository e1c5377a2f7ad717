//! Run the selective scan and the bidirectional block on one sequence.
//!
//! With the decay pinned to one and unit B, C and step size, the scan is a
//! running sum; the bidirectional block then mixes a forward and a backward
//! pass of its own parameters.

use hgmamba::bissm::{bi_ssm_forward, selective_scan, BiSsmParams, SsmParams};
use hgmamba::numkit::{Matrix, Rng};

fn main() -> hgmamba::Result<()> {
    let mut rng = Rng::new(0);
    let mut p = SsmParams::init(1, 1, 4, &mut rng);
    p.a_log = Matrix::filled(1, 1, -1000.0);
    p.delta_weight = Matrix::zeros(1, 1);
    p.delta_bias = Matrix::filled(1, 1, 1f64.exp_m1().ln());
    p.b_weight = Matrix::zeros(1, 1);
    p.b_bias = Matrix::filled(1, 1, 1.0);
    p.c_weight = Matrix::zeros(1, 1);
    p.c_bias = Matrix::filled(1, 1, 1.0);
    p.d_skip = Matrix::zeros(1, 1);
    let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [0.0]]);
    // Last row is padding.
    let valid = [true, true, true, true, false];
    let y = selective_scan(&x, &valid, &p)?;
    println!("running sum: {:?}", y.as_slice());

    let d = 6;
    let bi = BiSsmParams::init(d, 8, 4, &mut rng);
    let seq = Matrix::from_fn(10, d, |_, _| rng.normal());
    let out = bi_ssm_forward(&seq, &[true; 10], &bi)?;
    for t in 0..out.rows() {
        let row: Vec<String> = out.row(t).iter().map(|v| format!("{v:6.3}")).collect();
        println!("  t={t} {}", row.join(" "));
    }
    Ok(())
}
