//! The run configuration file.
//!
//! ```toml
//! preset = "toy"            # mini | toy | paper
//! key_mode = "log-keys"     # log-keys | all-keys
//! gc_mode = "truncated"     # truncated | mod_t
//! exact_truncation = false
//! f = 9                     # truncation bits for gc-stats
//! lambda = 40
//! delivery = "base_ot"      # base_ot | dealer
//! separate_rounds = false
//! variant = "cheetah"       # cheetah | gazelle
//! margin_bits = 1.0
//! seed = 1
//!
//! [endpoints]
//! client = "127.0.0.1:7101"
//! cloud = "127.0.0.1:7102"
//! proxy = "127.0.0.1:7103"
//! ```

use std::net::SocketAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use triad::bfv::KeyMode;
use triad::gc::{GcMode, LabelDelivery};
use triad::noise::ConvVariant;
use triad::protocol::net::Endpoints;
use triad::protocol::{ProtocolConfig, DEFAULT_LAMBDA};
use triad::ring::Preset;
use triad::{Error, Result};

pub const CONFIG_ENV: &str = "TRIAD_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub key_mode: KeyMode,
    pub gc_mode: GcMode,
    pub exact_truncation: bool,
    pub f: u32,
    pub lambda: u32,
    pub delivery: LabelDelivery,
    pub separate_rounds: bool,
    pub variant: ConvVariant,
    pub margin_bits: f64,
    pub seed: u64,
    pub endpoints: EndpointConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub client: SocketAddr,
    pub cloud: SocketAddr,
    pub proxy: SocketAddr,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        let at = |port| SocketAddr::from(([127, 0, 0, 1], port));
        EndpointConfig {
            client: at(7101),
            cloud: at(7102),
            proxy: at(7103),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        RunConfig {
            preset: Preset::Toy,
            key_mode: p.key_mode,
            gc_mode: p.gc_mode,
            exact_truncation: p.exact_truncation,
            f: 9,
            lambda: DEFAULT_LAMBDA,
            delivery: p.delivery,
            separate_rounds: p.separate_rounds,
            variant: p.variant,
            margin_bits: p.margin_bits,
            seed: 1,
            endpoints: EndpointConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Document(format!("{}: {}", path.display(), e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The file named on the command line or in `TRIAD_CONFIG`, else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.preset.params();
        params.validate()?;
        if self.f >= params.t_bits() {
            return Err(Error::Params(format!("f = {} leaves no bits of a {}-bit plaintext", self.f, params.t_bits())));
        }
        if !(self.margin_bits.is_finite() && self.margin_bits >= 0.0) {
            return Err(Error::Params(format!("margin_bits must be a non-negative number, got {}", self.margin_bits)));
        }
        Ok(())
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            params: self.preset.params(),
            key_mode: self.key_mode,
            gc_mode: self.gc_mode,
            exact_truncation: self.exact_truncation,
            lambda: self.lambda,
            delivery: self.delivery,
            separate_rounds: self.separate_rounds,
            variant: self.variant,
            margin_bits: self.margin_bits,
            ..ProtocolConfig::default()
        }
    }

    pub fn endpoints(&self) -> Endpoints {
        Endpoints {
            client: self.endpoints.client,
            cloud: self.endpoints.cloud,
            proxy: self.endpoints.proxy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("preset = \"mini\"\ngc_mode = \"mod_t\"\n").unwrap();
        assert_eq!(cfg.preset, Preset::Mini);
        assert_eq!(cfg.gc_mode, GcMode::ModT);
        assert_eq!(cfg.key_mode, KeyMode::LogKeys);
        assert_eq!(cfg.protocol().params.n, 256);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(toml::from_str::<RunConfig>("presett = \"toy\"").is_err());
        assert!(toml::from_str::<RunConfig>("preset = \"huge\"").is_err());
        let cfg = RunConfig { f: 19, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
