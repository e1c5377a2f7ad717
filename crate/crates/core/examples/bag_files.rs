//! Write a synthetic dataset as bag files plus a manifest, then read it back.
//!
//! ```text
//! cargo run --example bag_files -- [dir]
//! ```

use std::path::PathBuf;

use hgmamba::datakit::{
    checksum, encode_bag, read_bag, Dataset, SynthConfig, BAG_EXTENSION, MANIFEST_NAME,
};

fn main() -> hgmamba::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hgmamba-bag-files"));
    let cfg = SynthConfig {
        rows: 6,
        cols: 6,
        d: 8,
        ..SynthConfig::default()
    };
    let data = Dataset::synthesize(&cfg, 6, 2, 2)?;
    data.save(&dir)?;
    println!(
        "{}",
        std::fs::read_to_string(dir.join(MANIFEST_NAME)).expect("manifest was written")
    );

    let loaded = Dataset::load(&dir)?;
    assert_eq!(loaded.train, data.train);
    let first = &loaded.train[0];
    let bytes = encode_bag(first)?;
    println!(
        "{}: {} tiles, {} bytes, checksum {:016x}",
        first.id,
        first.n_tiles(),
        bytes.len(),
        checksum(&bytes)
    );

    let path = dir.join(format!("{}.{BAG_EXTENSION}", first.id));
    let back = read_bag(&path)?;
    assert_eq!(back.features, first.features);
    println!("re-read {} bit-exactly", path.display());
    Ok(())
}
