use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Alignment, BcLossSpec, ModelConfig, Pairing};
use crate::numkit::AdamWConfig;
use crate::pushmini::{ACTION_DIM, EMBODIMENT_COLUMNS, HORIZON, SCENE_COLUMNS};
use crate::transport::{epsilon_from_blur, CostScale, SinkhornOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Egobridge,
    StandardOt,
    Mmd,
    Cotrain,
    TargetOnly,
    MsePair,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Egobridge,
        Method::StandardOt,
        Method::Mmd,
        Method::Cotrain,
        Method::TargetOnly,
        Method::MsePair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Egobridge => "egobridge",
            Method::StandardOt => "standard_ot",
            Method::Mmd => "mmd",
            Method::Cotrain => "cotrain",
            Method::TargetOnly => "target_only",
            Method::MsePair => "mse_pair",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::parse("method", format!("unknown method {s:?}")))
    }
}

fn default_alpha() -> f64 {
    0.2
}
fn default_lambda() -> f64 {
    0.1
}
fn default_blur() -> f64 {
    0.01
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-4
}
fn default_wd() -> f64 {
    1e-6
}
fn default_max_iters() -> u64 {
    20_000
}
fn default_eval_every() -> u64 {
    2_000
}
fn default_eval_episodes() -> usize {
    20
}
fn default_data_dir() -> String {
    "data".into()
}
fn default_sinkhorn_iters() -> usize {
    200
}
fn default_tol() -> f64 {
    1e-6
}
fn default_sigma() -> f64 {
    1.0
}
fn default_mmd_weight() -> f64 {
    1.0
}
fn default_cost_scale() -> CostScale {
    CostScale::BatchMean
}
fn default_latent_norm() -> bool {
    true
}
fn default_hidden() -> usize {
    64
}
fn default_latent() -> usize {
    32
}

/// Flat training configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_blur")]
    pub blur: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// Base-variant rollouts per periodic evaluation; 0 disables it.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub seed: u64,
    /// Directory holding the per-variant dataset files.
    #[serde(default = "default_data_dir")]
    pub data_dir: String,
    #[serde(default = "default_sinkhorn_iters")]
    pub sinkhorn_max_iters: usize,
    #[serde(default = "default_tol")]
    pub sinkhorn_tol: f64,
    #[serde(default = "default_sigma")]
    pub mmd_sigma: f64,
    /// Weight of the MMD term (the OT weight `alpha` is not reused).
    #[serde(default = "default_mmd_weight")]
    pub mmd_weight: f64,
    /// Scaling of the transport cost: `raw` or `batch_mean`.
    #[serde(default = "default_cost_scale")]
    pub ot_cost_scale: CostScale,
    /// Unit-RMS latent rows.
    #[serde(default = "default_latent_norm")]
    pub latent_norm: bool,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_latent")]
    pub latent_dim: usize,
}

impl TrainConfig {
    pub fn new(method: Method) -> Self {
        toml::from_str(&format!("method = \"{method}\"")).expect("defaults parse")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::parse("train config", e.to_string()))?;
        config.effective()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn model_config(&self) -> ModelConfig {
        let mut m = ModelConfig::desk_scale(
            EMBODIMENT_COLUMNS.len(),
            EMBODIMENT_COLUMNS.len(),
            SCENE_COLUMNS.len(),
            HORIZON,
            ACTION_DIM,
        );
        m.stem_widths = vec![self.hidden, self.hidden];
        m.trunk_widths = vec![self.hidden, self.latent_dim];
        m.head_widths = vec![self.hidden, HORIZON * ACTION_DIM];
        m.latent_norm = self.latent_norm;
        m
    }

    /// Validates method-specific fields and resolves the objective.
    ///
    /// `lambda = 1` disables shaping, so EgoBridge at `lambda = 1` resolves
    /// to exactly the Standard-OT objective; `cotrain` is EgoBridge at
    /// `alpha = 0`.
    pub fn effective(&self) -> Result<EffectiveConfig> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::contract(format!("{name} must be positive, got {v}")))
            }
        };
        positive("lr", self.lr)?;
        positive("blur", self.blur)?;
        positive("sinkhorn_tol", self.sinkhorn_tol)?;
        if self.batch_size == 0 || self.hidden == 0 || self.latent_dim == 0 {
            return Err(Error::contract("batch_size, hidden and latent_dim must be at least 1"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::contract("weight_decay must be nonnegative"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::contract(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        let uses_lambda = matches!(self.method, Method::Egobridge | Method::MsePair | Method::Cotrain);
        if uses_lambda && !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::contract(format!(
                "lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if matches!(self.method, Method::Cotrain | Method::TargetOnly) && self.alpha != default_alpha() {
            log::warn!("alpha is ignored by method {}", self.method);
        }

        let ot = |shaping: Option<(Pairing, f64)>| Alignment::Ot {
            shaping,
            epsilon: epsilon_from_blur(self.blur),
            sinkhorn: SinkhornOptions {
                max_iters: self.sinkhorn_max_iters,
                tol: self.sinkhorn_tol,
            },
            pairing_dims: (0..ACTION_DIM).collect(),
            cost_scale: self.ot_cost_scale,
        };
        let shaped = |pairing| {
            if self.lambda < 1.0 {
                Some((pairing, self.lambda))
            } else {
                None
            }
        };
        let (alignment, alpha) = match self.method {
            Method::Egobridge => (ot(shaped(Pairing::Dtw)), self.alpha),
            Method::Cotrain => (ot(shaped(Pairing::Dtw)), 0.0),
            Method::MsePair => (ot(shaped(Pairing::Pointwise)), self.alpha),
            Method::StandardOt => (ot(None), self.alpha),
            Method::Mmd => {
                positive("mmd_sigma", self.mmd_sigma)?;
                (Alignment::Mmd { sigma: self.mmd_sigma }, self.mmd_weight)
            }
            Method::TargetOnly => (Alignment::None, 0.0),
        };
        Ok(EffectiveConfig {
            alignment,
            alpha,
            bc: BcLossSpec::mse(),
            target_only: self.method == Method::TargetOnly,
            batch_size: self.batch_size,
            optimizer: AdamWConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..AdamWConfig::default()
            },
            seed: self.seed,
            model: self.model_config(),
        })
    }
}

/// Everything that determines a training trajectory. Two configurations
/// with equal effective configs train bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConfig {
    pub alignment: Alignment,
    pub alpha: f64,
    pub bc: BcLossSpec,
    pub target_only: bool,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    pub model: ModelConfig,
}

impl EffectiveConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_simulation_table() {
        let c = TrainConfig::new(Method::Egobridge);
        assert_eq!(
            (c.alpha, c.blur, c.batch_size, c.lr, c.weight_decay),
            (0.2, 0.01, 32, 1e-4, 1e-6)
        );
        assert_eq!(c.max_iters, 20_000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(TrainConfig::from_toml("method = \"egobridge\"\nalhpa = 0.3\n").is_err());
        assert!(TrainConfig::from_toml("method = \"dann\"\n").is_err());
    }

    #[test]
    fn reductions_share_effective_configs() {
        let mut ego = TrainConfig::new(Method::Egobridge);
        ego.alpha = 0.0;
        assert_eq!(
            ego.effective().unwrap(),
            TrainConfig::new(Method::Cotrain).effective().unwrap()
        );
        let mut ego = TrainConfig::new(Method::Egobridge);
        ego.lambda = 1.0;
        assert_eq!(
            ego.effective().unwrap(),
            TrainConfig::new(Method::StandardOt).effective().unwrap()
        );
        assert_ne!(
            TrainConfig::new(Method::Egobridge).effective().unwrap().hash(),
            TrainConfig::new(Method::StandardOt).effective().unwrap().hash()
        );
    }

    #[test]
    fn toml_round_trip() {
        let mut c = TrainConfig::new(Method::Mmd);
        c.seed = 9;
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
