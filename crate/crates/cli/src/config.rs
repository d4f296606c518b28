//! Experiment configuration: a TOML file layered over per-environment
//! defaults, then command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sirl_core::config::Hyperparameters;
use sirl_core::env::EnvKind;
use sirl_core::eval::TpaConfig;
use sirl_service::ServiceConfig;

use crate::exit::Failure;

pub const OUTPUT_ENV: &str = "SIRL_OUTPUT_ROOT";
pub const PORT_ENV: &str = "SIRL_PORT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub methods: Vec<String>,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub seeds: Vec<u64>,
    pub fpe: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveConfig {
    /// Pool index of the query trajectory.
    pub query: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    /// Scene description; the environment's default scene when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<PathBuf>,
    /// ArmLite pool size; GridRobot always enumerates its full pool.
    pub pool_size: usize,
    pub pool_seed: u64,
    pub output: PathBuf,
    /// Single-run settings.
    pub method: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// Downstream freezing; the method's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<bool>,
    pub sweep: SweepGrid,
    pub hyper: Hyperparameters,
    pub tpa: TpaSettings,
    pub retrieve: RetrieveConfig,
    pub service: ServiceConfig,
    pub port: u16,
}

/// TPA settings apart from the reward-network schedule, which lives in
/// `hyper.reward`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpaSettings {
    pub rewards: usize,
    pub pairs_per_reward: usize,
    pub train_fraction: f64,
}

impl ExperimentConfig {
    /// Published settings for `env`, with a desk-sized sweep grid.
    pub fn defaults(env: EnvKind) -> Self {
        let hyper = Hyperparameters::published(env);
        let tpa = TpaConfig::new(hyper.reward);
        Self {
            env,
            scene: None,
            pool_size: 2000,
            pool_seed: 0,
            output: PathBuf::from("runs"),
            method: "sirl".into(),
            n: 1000,
            m: 100,
            seed: 0,
            frozen: None,
            sweep: SweepGrid {
                methods: vec!["sirl".into(), "random".into(), "multipref-10".into()],
                n: vec![100, 500, 1000],
                m: vec![10, 50, 100, 190],
                seeds: vec![0, 1, 2],
                fpe: true,
            },
            hyper,
            tpa: TpaSettings {
                rewards: tpa.rewards,
                pairs_per_reward: tpa.pairs_per_reward,
                train_fraction: tpa.train_fraction,
            },
            retrieve: RetrieveConfig { query: 0, k: 2 },
            service: ServiceConfig::default(),
            port: 8080,
        }
    }

    /// Parses TOML; every key missing from the file keeps its default for
    /// the chosen environment. `env` overrides the file's `env` key, and
    /// GridRobot is used when neither names one.
    pub fn from_toml(text: &str, env: Option<EnvKind>) -> Result<Self, Failure> {
        let mut user: toml::Value =
            toml::from_str(text).map_err(|e| Failure::config(format!("config: {e}")))?;
        let file_env = match user.get("env") {
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| Failure::config("config: `env` must be a string"))?
                    .parse::<EnvKind>()
                    .map_err(|e| Failure::config(format!("config: {e}")))?,
            ),
            None => None,
        };
        let env = env.or(file_env).unwrap_or(EnvKind::GridRobot);
        if let Some(table) = user.as_table_mut() {
            table.insert("env".into(), toml::Value::String(env.name().into()));
        }
        let mut merged = toml::Value::try_from(Self::defaults(env)).expect("defaults serialize");
        merge(&mut merged, user);
        merged.try_into().map_err(|e| Failure::config(format!("config: {e}")))
    }

    /// The file at `path` (if any) over the defaults.
    pub fn resolve(path: Option<&Path>, env: Option<EnvKind>) -> Result<Self, Failure> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Failure::config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, env)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn tpa_config(&self) -> TpaConfig {
        TpaConfig {
            rewards: self.tpa.rewards,
            pairs_per_reward: self.tpa.pairs_per_reward,
            train_fraction: self.tpa.train_fraction,
            reward: self.hyper.reward,
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_published_setup() {
        let g = ExperimentConfig::defaults(EnvKind::GridRobot);
        assert_eq!(g.hyper, Hyperparameters::published(EnvKind::GridRobot));
        assert_eq!((g.hyper.sirl.epochs, g.hyper.sirl.lr, g.hyper.sirl.batch), (3000, 0.004, 64));
        assert_eq!((g.hyper.reward.epochs, g.hyper.reward.reward_l2, g.hyper.reward.hidden), (500, 10.0, 128));
        assert_eq!(g.hyper.pref_rep.lr, 0.01);
        let a = ExperimentConfig::defaults(EnvKind::ArmLite);
        assert_eq!((a.hyper.reward.epochs, a.hyper.reward.reward_l2, a.hyper.hidden), (1000, 1.0, 1024));
        assert_eq!(a.hyper.pref_rep.lr, 0.001);
        assert_eq!((g.tpa.rewards, g.service.practice, g.service.recorded), (20, 5, 100));
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        let mut c = ExperimentConfig::defaults(EnvKind::ArmLite);
        c.frozen = Some(false);
        c.hyper.sirl.alpha = 0.3;
        c.scene = Some("scene.toml".into());
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml(), None).unwrap(), c);
    }

    #[test]
    fn partial_files_keep_env_defaults() {
        let c = ExperimentConfig::from_toml("env = \"armlite\"\nseed = 4\n[hyper.sirl]\nalpha = 2.0\n", None).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.hyper.sirl.alpha, 2.0);
        assert_eq!(c.hyper.sirl.epochs, 3000);
        assert_eq!(c.hyper.hidden, 1024);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = ExperimentConfig::from_toml("sedd = 3\n", None).unwrap_err();
        assert_eq!(err.code, crate::exit::CONFIG);
        assert!(ExperimentConfig::from_toml("env = \"mars\"\n", None).is_err());
        let flag = ExperimentConfig::from_toml("env = \"armlite\"\n", Some(EnvKind::GridRobot)).unwrap();
        assert_eq!((flag.env, flag.hyper.hidden), (EnvKind::GridRobot, 128));
    }
}
