//! Training configuration: a flat `key = value` text format.
//!
//! Lines are `key = value` pairs; blank lines and `#` comments are ignored.
//! Unknown keys, duplicate keys, and malformed values are errors — a typo'd
//! hyperparameter should fail loudly, not silently train with a default.

use std::path::Path;

use crate::error::{Error, Result};

/// All training hyperparameters, with conventional defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Complex embedding dimension.
    pub d: usize,
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    /// Adam learning rate.
    pub lr: f64,
    pub batch_size: usize,
    /// Weight of the negated-literal score loss.
    pub alpha: f64,
    /// Weight of the negation-consistency loss.
    pub beta: f64,
    /// Epochs per curriculum stage.
    pub epochs: usize,
    /// Floating-point width of parameters; only 64 is supported.
    pub float_width: u32,
    /// LeakyReLU negative slope for the projection MLPs.
    pub leaky_slope: f64,
    /// Run validation every this many epochs (0 disables periodic eval).
    pub eval_every: usize,
    /// Stop after this many evaluations without improvement (0 disables).
    pub patience: usize,
    /// L2 penalty coefficient, applied to unfrozen blocks' gradients.
    pub l2: f64,
    /// Tie inverse-relation embeddings to the conjugates of forward rows.
    pub tie_inverse_conjugate: bool,
    /// Reserved switch for an auxiliary relation-prediction objective; the
    /// objective is not implemented, so only `false` is accepted.
    pub relation_prediction_aux: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            d: 1000,
            seed: 0,
            lr: 5e-4,
            batch_size: 512,
            alpha: 1.0,
            beta: 1.0,
            epochs: 100,
            float_width: 64,
            leaky_slope: 0.01,
            eval_every: 0,
            patience: 0,
            l2: 0.0,
            tie_inverse_conjugate: false,
            relation_prediction_aux: false,
        }
    }
}

fn parse_as<T: std::str::FromStr>(origin: &str, line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| {
        Error::parse(
            origin,
            line,
            format!("invalid value {v:?} for key `{key}`"),
        )
    })
}

impl Config {
    /// Parses `key = value` text. `origin` names the source in errors.
    pub fn from_kv_text(text: &str, origin: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = raw.trim();
            if stripped.is_empty() || stripped.starts_with('#') {
                continue;
            }
            let Some((k, v)) = stripped.split_once('=') else {
                return Err(Error::parse(origin, line, "expected `key = value`"));
            };
            let (k, v) = (k.trim(), v.trim());
            if seen.iter().any(|s| s == k) {
                return Err(Error::parse(origin, line, format!("duplicate key `{k}`")));
            }
            seen.push(k.to_string());
            match k {
                "d" => cfg.d = parse_as(origin, line, k, v)?,
                "seed" => cfg.seed = parse_as(origin, line, k, v)?,
                "lr" => cfg.lr = parse_as(origin, line, k, v)?,
                "batch_size" => cfg.batch_size = parse_as(origin, line, k, v)?,
                "alpha" => cfg.alpha = parse_as(origin, line, k, v)?,
                "beta" => cfg.beta = parse_as(origin, line, k, v)?,
                "epochs" => cfg.epochs = parse_as(origin, line, k, v)?,
                "float_width" => cfg.float_width = parse_as(origin, line, k, v)?,
                "leaky_slope" => cfg.leaky_slope = parse_as(origin, line, k, v)?,
                "eval_every" => cfg.eval_every = parse_as(origin, line, k, v)?,
                "patience" => cfg.patience = parse_as(origin, line, k, v)?,
                "l2" => cfg.l2 = parse_as(origin, line, k, v)?,
                "tie_inverse_conjugate" => {
                    cfg.tie_inverse_conjugate = parse_as(origin, line, k, v)?
                }
                "relation_prediction_aux" => {
                    cfg.relation_prediction_aux = parse_as(origin, line, k, v)?
                }
                _ => {
                    return Err(Error::parse(
                        origin,
                        line,
                        format!("unknown configuration key `{k}`"),
                    ))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::from_kv_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.float_width != 64 {
            return Err(Error::Config(format!(
                "float_width {} is not supported; parameters are stored as 64-bit floats",
                self.float_width
            )));
        }
        if self.relation_prediction_aux {
            return Err(Error::Config(
                "relation_prediction_aux is not implemented; set it to false".into(),
            ));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("l2", self.l2),
            ("leaky_slope", self.leaky_slope),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be a non-negative finite number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_defaults() {
        let cfg = Config::from_kv_text("", "test").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.d, 1000);
        assert_eq!(cfg.lr, 5e-4);
        assert_eq!(cfg.batch_size, 512);
        assert_eq!(cfg.alpha, 1.0);
        assert_eq!(cfg.beta, 1.0);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.leaky_slope, 0.01);
        assert!(!cfg.tie_inverse_conjugate);
    }

    #[test]
    fn full_file_parses_with_comments_and_spacing() {
        let text = "\
# toy run
d = 16
seed=7
lr = 0.001

batch_size = 8
alpha = 0.5
beta = 2
epochs = 3
leaky_slope = 0.05
eval_every = 2
patience = 4
l2 = 0.0001
tie_inverse_conjugate = true
";
        let cfg = Config::from_kv_text(text, "test").unwrap();
        assert_eq!(cfg.d, 16);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.lr, 0.001);
        assert_eq!(cfg.batch_size, 8);
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.beta, 2.0);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.leaky_slope, 0.05);
        assert_eq!(cfg.eval_every, 2);
        assert_eq!(cfg.patience, 4);
        assert_eq!(cfg.l2, 1e-4);
        assert!(cfg.tie_inverse_conjugate);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed_keys() {
        let err = Config::from_kv_text("dd = 3", "t").unwrap_err();
        assert!(err.to_string().contains("unknown configuration key"), "{err}");
        let err = Config::from_kv_text("d = 4\nd = 5", "t").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        let err = Config::from_kv_text("just words", "t").unwrap_err();
        assert!(err.to_string().contains("key = value"), "{err}");
        let err = Config::from_kv_text("lr = fast", "t").unwrap_err();
        assert!(err.to_string().contains("invalid value"), "{err}");
        let err = Config::from_kv_text("tie_inverse_conjugate = yes", "t").unwrap_err();
        assert!(err.to_string().contains("invalid value"), "{err}");
    }

    #[test]
    fn rejects_unsupported_float_width() {
        let err = Config::from_kv_text("float_width = 32", "t").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(err.to_string().contains("64-bit"), "{err}");
        assert!(Config::from_kv_text("float_width = 64", "t").is_ok());
    }

    #[test]
    fn rejects_unimplemented_relation_prediction() {
        let err = Config::from_kv_text("relation_prediction_aux = true", "t").unwrap_err();
        assert!(err.to_string().contains("not implemented"), "{err}");
        assert!(Config::from_kv_text("relation_prediction_aux = false", "t").is_ok());
    }

    #[test]
    fn rejects_degenerate_numerics() {
        assert!(Config::from_kv_text("d = 0", "t").is_err());
        assert!(Config::from_kv_text("batch_size = 0", "t").is_err());
        assert!(Config::from_kv_text("lr = 0", "t").is_err());
        assert!(Config::from_kv_text("alpha = -1", "t").is_err());
        assert!(Config::from_kv_text("lr = inf", "t").is_err());
    }
}
