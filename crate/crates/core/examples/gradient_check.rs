//! Compare every hand-written backward pass with central finite differences.
//!
//! ```text
//! cargo run --example gradient_check -- [tiny|small] [seed]
//! ```

use hgmamba::gradcheck::{run_gradcheck, CheckSize, TOLERANCE};

fn main() -> hgmamba::Result<()> {
    let mut args = std::env::args().skip(1);
    let size = args.next().map_or(CheckSize::Tiny, |s| {
        CheckSize::parse(&s).expect("tiny or small")
    });
    let seed = args
        .next()
        .map_or(0, |s| s.parse().expect("seed is an integer"));
    let checks = run_gradcheck(size, seed)?;
    for c in &checks {
        println!(
            "{:<4} {:<40} {:.2e}",
            if c.passed() { "ok" } else { "FAIL" },
            c.name,
            c.rel_err
        );
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!(
        "{} checks at tolerance {TOLERANCE:e}, {failed} failed",
        checks.len()
    );
    Ok(())
}
