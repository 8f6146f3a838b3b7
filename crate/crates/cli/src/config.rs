//! Run-configuration merging: command-line flags override the JSON config
//! file, which overrides the built-in defaults.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use mixlen_core::error::{Error, Result};
use mixlen_core::model::{FusionConfig, TrunkConfig};
use mixlen_core::optim::TrainConfig;

/// Optional JSON config document; absent fields fall back to defaults.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub extractor_widths: Option<[usize; 4]>,
    pub fusion_width: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub trunk_widths: Option<Vec<usize>>,
    pub lambda_dc: Option<f64>,
    pub lambda_cor: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub knn_k: Option<usize>,
    pub split_seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("bad config file {}: {e}", p.display())))
            }
            None => Ok(Self::default()),
        }
    }
}

/// Per-flag overrides shared by `train` and `benchmark`.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size (0 = full batch).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Interval-difference penalty weight.
    #[arg(long)]
    pub lambda_dc: Option<f64>,
    /// Interval-correlation penalty weight.
    #[arg(long)]
    pub lambda_cor: Option<f64>,
}

/// Fully resolved settings.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveConfig {
    pub train: TrainConfig,
    pub fusion: FusionConfig,
    pub trunk: TrunkConfig,
    pub knn_k: usize,
    pub split_seed: u64,
}

impl EffectiveConfig {
    pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Self> {
        let mut fusion = FusionConfig::default();
        if let Some(w) = file.extractor_widths {
            fusion.extractor_widths = w;
        }
        if let Some(w) = file.fusion_width {
            fusion.fusion_width = w;
        }
        if let Some(r) = file.dropout_rate {
            fusion.dropout_rate = r;
        }
        fusion.validate()?;

        let mut trunk = TrunkConfig::default();
        if let Some(w) = &file.trunk_widths {
            trunk.hidden_widths = w.clone();
        }
        trunk.validate()?;

        let mut train = TrainConfig::default();
        if let Some(e) = file.epochs {
            train.epochs = e;
        }
        if let Some(b) = file.batch_size {
            train.batch_size = b;
        }
        if let Some(lr) = file.learning_rate {
            train.adam.learning_rate = lr;
        }
        if let Some(l) = file.lambda_dc {
            train.loss.lambda_dc = l;
        }
        if let Some(l) = file.lambda_cor {
            train.loss.lambda_cor = l;
        }
        // Flags win over the file.
        if let Some(e) = flags.epochs {
            train.epochs = e;
        }
        if let Some(lr) = flags.lr {
            train.adam.learning_rate = lr;
        }
        if let Some(b) = flags.batch_size {
            train.batch_size = b;
        }
        if let Some(l) = flags.lambda_dc {
            train.loss.lambda_dc = l;
        }
        if let Some(l) = flags.lambda_cor {
            train.loss.lambda_cor = l;
        }
        train.validate()?;

        Ok(Self {
            train,
            fusion,
            trunk,
            knn_k: file.knn_k.unwrap_or(5),
            split_seed: file.split_seed.unwrap_or(0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mixlen_core::loss::LossWeights;
    use mixlen_core::optim::AdamConfig;

    #[test]
    fn defaults_reproduce_the_experimental_settings() {
        let cfg = EffectiveConfig::resolve(&FileConfig::default(), &Overrides::default()).unwrap();
        assert_eq!(cfg.fusion.extractor_widths, [12, 8, 10, 5]);
        assert_eq!(cfg.fusion.fusion_width, 20);
        assert_eq!(cfg.fusion.dropout_rate, 0.1);
        assert_eq!(cfg.trunk.hidden_widths, vec![60, 10]);
        assert_eq!(cfg.train.loss.lambda_dc, 0.01);
        assert_eq!(cfg.train.loss.lambda_cor, 0.1);
        assert_eq!(cfg.train.adam.learning_rate, 1e-4);
        assert_eq!(cfg.train.epochs, 2000);
        assert_eq!(cfg.knn_k, 5);
    }

    #[test]
    fn flags_override_file_overrides_defaults() {
        let file = FileConfig {
            epochs: Some(100),
            learning_rate: Some(5e-3),
            ..FileConfig::default()
        };
        let flags = Overrides {
            epochs: Some(7),
            ..Overrides::default()
        };
        let cfg = EffectiveConfig::resolve(&file, &flags).unwrap();
        assert_eq!(cfg.train.epochs, 7); // flag wins
        assert_eq!(cfg.train.adam.learning_rate, 5e-3); // file wins
        assert_eq!(cfg.train.loss.lambda_dc, 0.01); // default
    }

    #[test]
    fn loss_weights_default_matches() {
        assert_eq!(LossWeights::default().lambda_dc, 0.01);
        assert_eq!(LossWeights::default().lambda_cor, 0.1);
        assert_eq!(AdamConfig::default().learning_rate, 1e-4);
    }
}
