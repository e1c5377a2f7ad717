use crate::error::{Error, Result};
use crate::hypergraph::TileBag;
use crate::numkit::{derive_seed, Matrix, Rng};

/// Planted-motif bag generator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub d: usize,
    pub n_classes: usize,
    /// Shift added along the motif direction on motif tiles.
    pub motif_strength: f64,
    pub motif_rows: usize,
    pub motif_cols: usize,
    /// Positives need two disjoint motifs with different directions; negatives
    /// may carry either one alone.
    pub high_order: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 14,
            cols: 14,
            d: 32,
            n_classes: 2,
            motif_strength: 2.0,
            motif_rows: 2,
            motif_cols: 2,
            high_order: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.d == 0 {
            return Err(Error::Config(
                "grid and feature width must be positive".into(),
            ));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.d < self.n_classes {
            return Err(Error::Config(format!(
                "feature width {} cannot hold {} orthogonal motif directions",
                self.d, self.n_classes
            )));
        }
        if !(self.motif_strength >= 0.0 && self.motif_strength.is_finite()) {
            return Err(Error::Config(format!(
                "motif strength {}",
                self.motif_strength
            )));
        }
        if self.motif_rows == 0 || self.motif_cols == 0 {
            return Err(Error::Config("empty motif block".into()));
        }
        let fits_one = self.motif_rows <= self.rows && self.motif_cols <= self.cols;
        let fits_two = self.rows >= 2 * self.motif_rows || self.cols >= 2 * self.motif_cols;
        if !fits_one || (self.high_order && !(fits_one && fits_two)) {
            return Err(Error::Config(format!(
                "{}x{} grid too small for the requested {}x{} motif{}",
                self.rows,
                self.cols,
                self.motif_rows,
                self.motif_cols,
                if self.high_order { "s" } else { "" }
            )));
        }
        Ok(())
    }

    pub fn n_tiles(&self) -> usize {
        self.rows * self.cols
    }
}

/// `count` orthonormal unit vectors of width `d` (Gram–Schmidt on Gaussian
/// draws). Row `c` is the motif direction of class `c`.
pub fn motif_directions(seed: u64, count: usize, d: usize) -> Matrix {
    assert!(
        count <= d,
        "cannot draw {count} orthonormal vectors in {d} dimensions"
    );
    let mut rng = Rng::new(derive_seed(seed, "motif-directions", 0));
    let mut out = Matrix::zeros(count, d);
    let mut c = 0;
    while c < count {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for prev in 0..c {
            let dot: f64 = v.iter().zip(out.row(prev)).map(|(a, b)| a * b).sum();
            for (x, p) in v.iter_mut().zip(out.row(prev)) {
                *x -= dot * p;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        out.row_mut(c)
            .iter_mut()
            .zip(&v)
            .for_each(|(o, x)| *o = x / norm);
        c += 1;
    }
    out
}

/// Top-left corners of the motif blocks placed on a bag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotifPlacement {
    /// `(row, col, direction index)` per block.
    pub blocks: Vec<(usize, usize, usize)>,
}

fn place(cfg: &SynthConfig, rng: &mut Rng) -> (usize, usize) {
    (
        rng.below(cfg.rows - cfg.motif_rows + 1),
        rng.below(cfg.cols - cfg.motif_cols + 1),
    )
}

fn overlaps(cfg: &SynthConfig, a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.0 + cfg.motif_rows
        && b.0 < a.0 + cfg.motif_rows
        && a.1 < b.1 + cfg.motif_cols
        && b.1 < a.1 + cfg.motif_cols
}

/// Which direction indices a bag of `label` carries.
fn motifs_for(cfg: &SynthConfig, label: usize, rng: &mut Rng) -> Vec<usize> {
    if !cfg.high_order {
        return if label == 0 { Vec::new() } else { vec![label] };
    }
    // Direction 0 is the shared partner motif.
    if label > 0 {
        return vec![label, 0];
    }
    match rng.below(3) {
        0 => Vec::new(),
        1 => vec![1 + rng.below(cfg.n_classes - 1)],
        _ => vec![0],
    }
}

/// Draw one bag on the full grid (row-major tiles). Features are rounded to
/// `f32` so that a bag survives a file round trip unchanged.
pub fn generate_bag(
    cfg: &SynthConfig,
    rng: &mut Rng,
    label: usize,
) -> Result<(TileBag, MotifPlacement)> {
    cfg.validate()?;
    if label >= cfg.n_classes {
        return Err(Error::Usage(format!(
            "label {label} out of range for {} classes",
            cfg.n_classes
        )));
    }
    let dirs = motif_directions(cfg.seed, cfg.n_classes, cfg.d);
    let (rows, cols) = (cfg.rows, cfg.cols);
    let mut features = Matrix::from_fn(rows * cols, cfg.d, |_, _| rng.normal());
    let mut blocks: Vec<(usize, usize, usize)> = Vec::new();
    for dir in motifs_for(cfg, label, rng) {
        let mut at = place(cfg, rng);
        while blocks.iter().any(|&(r, c, _)| overlaps(cfg, (r, c), at)) {
            at = place(cfg, rng);
        }
        blocks.push((at.0, at.1, dir));
    }
    for &(r0, c0, dir) in &blocks {
        for r in r0..r0 + cfg.motif_rows {
            for c in c0..c0 + cfg.motif_cols {
                let row = features.row_mut(r * cols + c);
                for (x, u) in row.iter_mut().zip(dirs.row(dir)) {
                    *x += cfg.motif_strength * u;
                }
            }
        }
    }
    let features = features.map(|v| v as f32 as f64);
    let coords = (0..rows as i32)
        .flat_map(|r| (0..cols as i32).map(move |c| (r, c)))
        .collect();
    let bag = TileBag::new(String::new(), coords, features, label)?;
    Ok((bag, MotifPlacement { blocks }))
}

/// Bag `index` of the stream defined by `cfg.seed`, labels cycling through the
/// classes.
pub fn generate_indexed(cfg: &SynthConfig, index: usize) -> Result<TileBag> {
    let mut rng = Rng::new(derive_seed(cfg.seed, "bag", index as u64));
    let label = index % cfg.n_classes;
    let (mut bag, _) = generate_bag(cfg, &mut rng, label)?;
    bag.id = format!("bag{index:05}");
    Ok(bag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_are_orthonormal() {
        let dirs = motif_directions(0, 4, 8);
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = dirs
                    .row(a)
                    .iter()
                    .zip(dirs.row(b))
                    .map(|(x, y)| x * y)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn motif_tiles_project_onto_their_direction() {
        let cfg = SynthConfig {
            d: 32,
            motif_strength: 10.0,
            ..SynthConfig::default()
        };
        let dirs = motif_directions(cfg.seed, 2, 32);
        let mut total = 0.0;
        let mut count = 0;
        let mut i = 0;
        while count < 1000 {
            let mut rng = Rng::new(i);
            i += 1;
            let (bag, placed) = generate_bag(&cfg, &mut rng, 1).unwrap();
            let (r0, c0, dir) = placed.blocks[0];
            for r in r0..r0 + 2 {
                for c in c0..c0 + 2 {
                    total += bag
                        .features
                        .row(r * 14 + c)
                        .iter()
                        .zip(dirs.row(dir))
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                    count += 1;
                }
            }
        }
        let mean = total / count as f64;
        // Background projection is N(0, 1); 1000 samples put the mean within ±0.15.
        assert!((mean - 10.0).abs() < 0.15, "{mean}");
    }

    #[test]
    fn zero_strength_removes_the_label_signal() {
        let cfg = SynthConfig {
            motif_strength: 0.0,
            ..SynthConfig::default()
        };
        let (a, _) = generate_bag(&cfg, &mut Rng::new(3), 0).unwrap();
        let (b, _) = generate_bag(&cfg, &mut Rng::new(3), 1).unwrap();
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn negatives_carry_no_motif_and_generation_is_deterministic() {
        let cfg = SynthConfig::default();
        let (_, placed) = generate_bag(&cfg, &mut Rng::new(1), 0).unwrap();
        assert!(placed.blocks.is_empty());
        assert_eq!(
            generate_indexed(&cfg, 7).unwrap(),
            generate_indexed(&cfg, 7).unwrap()
        );
        assert_ne!(
            generate_indexed(&cfg, 7).unwrap().features,
            generate_indexed(&cfg, 9).unwrap().features
        );
    }

    #[test]
    fn high_order_positives_hold_two_disjoint_motifs() {
        let cfg = SynthConfig {
            high_order: true,
            ..SynthConfig::default()
        };
        let mut negative_kinds = [0; 3];
        for seed in 0..60 {
            let (_, pos) = generate_bag(&cfg, &mut Rng::new(seed), 1).unwrap();
            assert_eq!(pos.blocks.len(), 2);
            let (a, b) = (pos.blocks[0], pos.blocks[1]);
            assert!(!overlaps(&cfg, (a.0, a.1), (b.0, b.1)));
            assert_ne!(a.2, b.2);
            let (_, neg) = generate_bag(&cfg, &mut Rng::new(seed), 0).unwrap();
            assert!(neg.blocks.len() <= 1);
            let kind = match neg.blocks.first() {
                None => 0,
                Some(&(_, _, 0)) => 2,
                Some(_) => 1,
            };
            negative_kinds[kind] += 1;
        }
        assert!(negative_kinds.iter().all(|&k| k > 0));
    }

    #[test]
    fn grid_too_small_is_rejected() {
        let cfg = SynthConfig {
            rows: 1,
            cols: 1,
            ..SynthConfig::default()
        };
        assert!(generate_bag(&cfg, &mut Rng::new(0), 1).is_err());
        let cfg = SynthConfig {
            rows: 3,
            cols: 3,
            high_order: true,
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(generate_bag(&SynthConfig::default(), &mut Rng::new(0), 2).is_err());
    }
}
