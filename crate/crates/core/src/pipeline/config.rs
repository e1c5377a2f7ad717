//! Model and training configuration, read from flat `key=value` text.

use std::fmt::Write as _;

use crate::bissm::{Residual, DEFAULT_CONV_WIDTH, DEFAULT_STATE_DIM};
use crate::error::{Error, Result};
use crate::hgconv::ConvMode;
use crate::milhead::DEFAULT_ATTENTION_DIM;
use crate::scanner::ScanMix;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Tile feature width.
    pub input_dim: usize,
    /// Hidden width of every block.
    pub d: usize,
    pub n_layers: usize,
    pub d_state: usize,
    pub m_sequences: usize,
    pub top_k: usize,
    /// Random-walk length as a fraction of the bag size.
    pub t_ratio: f64,
    pub conv_width: usize,
    pub mode: ConvMode,
    pub n_classes: usize,
    pub residual: Residual,
    pub attention_dim: usize,
    pub scan_mix: ScanMix,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 32,
            d: 128,
            n_layers: 2,
            d_state: DEFAULT_STATE_DIM,
            m_sequences: 8,
            top_k: 3,
            t_ratio: 0.7,
            conv_width: DEFAULT_CONV_WIDTH,
            mode: ConvMode::Hypergraph,
            n_classes: 2,
            residual: Residual::WithInput,
            attention_dim: DEFAULT_ATTENTION_DIM,
            scan_mix: ScanMix::Both,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_dim", self.input_dim),
            ("d", self.d),
            ("n_layers", self.n_layers),
            ("d_state", self.d_state),
            ("m_sequences", self.m_sequences),
            ("top_k", self.top_k),
            ("conv_width", self.conv_width),
            ("attention_dim", self.attention_dim),
        ];
        if let Some((k, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be at least 1")));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("n_classes must be at least 2".into()));
        }
        if !(self.t_ratio > 0.0 && self.t_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "t_ratio {} outside (0, 1]",
                self.t_ratio
            )));
        }
        Ok(())
    }
}

pub fn mode_name(mode: ConvMode) -> &'static str {
    match mode {
        ConvMode::Hypergraph => "hypergraph",
        ConvMode::RuleOnly => "rule_only",
    }
}

pub fn parse_mode(s: &str) -> Option<ConvMode> {
    match s {
        "hypergraph" => Some(ConvMode::Hypergraph),
        "rule_only" => Some(ConvMode::RuleOnly),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 5e-4,
            epochs: 120,
            batch_size: 12,
            milestones: vec![60, 90],
            gamma: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay {}", self.weight_decay)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma {}", self.gamma)));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "milestones must be strictly increasing".into(),
            ));
        }
        if self.milestones.last().is_some_and(|&m| m >= self.epochs) {
            return Err(Error::Config(
                "milestones must fall before the last epoch".into(),
            ));
        }
        Ok(())
    }
}

/// Both halves of a run configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "input_dim" => m.input_dim = parse_value(key, value)?,
            "d" => m.d = parse_value(key, value)?,
            "n_layers" => m.n_layers = parse_value(key, value)?,
            "d_state" => m.d_state = parse_value(key, value)?,
            "m_sequences" => m.m_sequences = parse_value(key, value)?,
            "top_k" => m.top_k = parse_value(key, value)?,
            "t_ratio" => m.t_ratio = parse_value(key, value)?,
            "conv_width" => m.conv_width = parse_value(key, value)?,
            "mode" => {
                m.mode = parse_mode(value).ok_or_else(|| {
                    Error::Config(format!(
                        "mode: expected hypergraph or rule_only, got {value:?}"
                    ))
                })?
            }
            "n_classes" => m.n_classes = parse_value(key, value)?,
            "residual" => {
                m.residual = Residual::parse(value).ok_or_else(|| {
                    Error::Config(format!(
                        "residual: expected input or branches, got {value:?}"
                    ))
                })?
            }
            "attention_dim" => m.attention_dim = parse_value(key, value)?,
            "scan_mix" => {
                m.scan_mix = ScanMix::parse(value).ok_or_else(|| {
                    Error::Config(format!(
                        "scan_mix: expected both, hdfs, harw or random, got {value:?}"
                    ))
                })?
            }
            "lr" => t.lr = parse_value(key, value)?,
            "weight_decay" => t.weight_decay = parse_value(key, value)?,
            "epochs" => t.epochs = parse_value(key, value)?,
            "batch_size" => t.batch_size = parse_value(key, value)?,
            "milestones" => {
                t.milestones = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_value(key, s))
                    .collect::<Result<_>>()?
            }
            "gamma" => t.gamma = parse_value(key, value)?,
            "seed" => t.seed = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Defaults overridden by the assignments in `text`. `#` starts a comment
    /// line; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", i + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    /// Every field, one `key=value` per line; [`RunConfig::parse`] inverts it.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let milestones: Vec<String> = t.milestones.iter().map(|v| v.to_string()).collect();
        let mut s = String::new();
        let pairs: [(&str, String); 20] = [
            ("input_dim", m.input_dim.to_string()),
            ("d", m.d.to_string()),
            ("n_layers", m.n_layers.to_string()),
            ("d_state", m.d_state.to_string()),
            ("m_sequences", m.m_sequences.to_string()),
            ("top_k", m.top_k.to_string()),
            ("t_ratio", m.t_ratio.to_string()),
            ("conv_width", m.conv_width.to_string()),
            ("mode", mode_name(m.mode).to_string()),
            ("n_classes", m.n_classes.to_string()),
            ("residual", m.residual.name().to_string()),
            ("attention_dim", m.attention_dim.to_string()),
            ("scan_mix", m.scan_mix.name().to_string()),
            ("lr", t.lr.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("milestones", milestones.join(",")),
            ("gamma", t.gamma.to_string()),
            ("seed", t.seed.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(
            (c.model.top_k, c.model.m_sequences, c.model.n_layers),
            (3, 8, 2)
        );
        assert_eq!(c.model.t_ratio, 0.7);
        assert_eq!((c.train.lr, c.train.weight_decay), (1e-3, 5e-4));
        assert_eq!((c.train.epochs, c.train.batch_size), (120, 12));
        assert_eq!(c.train.milestones, vec![60, 90]);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.model.mode = ConvMode::RuleOnly;
        c.model.residual = Residual::BranchesOnly;
        c.model.scan_mix = ScanMix::HarwOnly;
        c.model.t_ratio = 0.55;
        c.train.milestones = vec![3, 7];
        c.train.epochs = 10;
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_errors() {
        assert!(RunConfig::parse("colour=blue").is_err());
        assert!(RunConfig::parse("d").is_err());
        assert!(RunConfig::parse("d=wide").is_err());
        assert!(RunConfig::parse("t_ratio=1.5").is_err());
        assert!(RunConfig::parse("milestones=90,60").is_err());
        assert!(RunConfig::parse("epochs=50").is_err());
        assert!(RunConfig::parse("mode=graph").is_err());
        let c = RunConfig::parse("# comment\n\n d = 16 \nmilestones=\n").unwrap();
        assert_eq!(c.model.d, 16);
        assert!(c.train.milestones.is_empty());
    }
}
