//! Experiment configuration files (TOML).
//!
//! ```toml
//! design = "p2p"
//! players = 3
//! trials = 1000
//! seed = 7
//! delays = [0, 1, 2]
//!
//! [coin]
//! kind = "fair"
//! a = 0.3
//!
//! [rules]
//! winner = "unique-heads"
//! thresholds = { agreement = 1.0, disagreement = 0.0 }
//!
//! [[behaviors]]
//! kind = "honest"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuits::Design;
use crate::coins::{CoinSpec, FairCoinParams};
use crate::consensus::Thresholds;
use crate::error::{Error, Result};
use crate::protocol::{PlayerBehavior, Rules};

pub const DEFAULT_REPLAY_CAP: u32 = 64;

/// Where the shared coin tensor comes from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoinSource {
    /// Every joint outcome equally likely.
    #[default]
    Uniform,
    /// Two-player fair coin family.
    Fair {
        a: f64,
        #[serde(default)]
        phases: [f64; 4],
    },
    /// Coin tensor file; relative paths resolve against the config file.
    File { path: PathBuf },
    /// Inline `(bitstring, re, im)` entries.
    Entries { entries: Vec<(String, f64, f64)> },
}

impl CoinSource {
    pub fn build(&self, players: usize) -> Result<CoinSpec> {
        let coin = match self {
            CoinSource::Uniform => CoinSpec::uniform(players)?,
            CoinSource::Fair { a, phases } => CoinSpec::fair(&FairCoinParams::new(*a, *phases))?,
            CoinSource::File { path } => CoinSpec::load(path)?,
            CoinSource::Entries { entries } => CoinSpec::from_entries(entries)?,
        };
        if coin.num_players() != players {
            return Err(Error::WrongArity {
                expected: players,
                got: coin.num_players(),
            });
        }
        Ok(coin)
    }
}

fn default_players() -> usize {
    2
}

fn default_trials() -> u64 {
    1
}

fn default_replay_cap() -> u32 {
    DEFAULT_REPLAY_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: Design,
    #[serde(default = "default_players")]
    pub players: usize,
    #[serde(default)]
    pub coin: CoinSource,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    /// One entry per player; empty means everyone is honest.
    #[serde(default)]
    pub behaviors: Vec<PlayerBehavior>,
    /// Announcement delay per player in ticks; empty means all zero.
    #[serde(default)]
    pub delays: Vec<u64>,
    #[serde(default)]
    pub rules: Rules,
    #[serde(default = "default_replay_cap")]
    pub replay_cap: u32,
    /// Worker threads for batches; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(design: Design, players: usize) -> Self {
        Self {
            design,
            players,
            coin: CoinSource::Uniform,
            trials: 1,
            seed: 0,
            behaviors: Vec::new(),
            delays: Vec::new(),
            rules: Rules::default(),
            replay_cap: DEFAULT_REPLAY_CAP,
            threads: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a config file. A relative coin file path is taken
    /// relative to the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        if let CoinSource::File { path: coin_path } = &mut config.coin {
            if coin_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *coin_path = dir.join(&*coin_path);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.design.check_players(self.players)?;
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.replay_cap < 1 {
            return Err(Error::Config("replay_cap must be at least 1".into()));
        }
        if !self.behaviors.is_empty() && self.behaviors.len() != self.players {
            return Err(Error::Config(format!(
                "{} behaviors given for {} players",
                self.behaviors.len(),
                self.players
            )));
        }
        if !self.delays.is_empty() && self.delays.len() != self.players {
            return Err(Error::Config(format!(
                "{} delays given for {} players",
                self.delays.len(),
                self.players
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let t = self.rules.thresholds;
        Thresholds::new(t.agreement, t.disagreement)?;
        Ok(())
    }

    pub fn coin_spec(&self) -> Result<CoinSpec> {
        self.coin.build(self.players)
    }

    /// Behaviors with the all-honest default filled in.
    pub fn behaviors(&self) -> Vec<PlayerBehavior> {
        if self.behaviors.is_empty() {
            vec![PlayerBehavior::Honest; self.players]
        } else {
            self.behaviors.clone()
        }
    }

    /// Delays with the all-zero default filled in.
    pub fn delays(&self) -> Vec<u64> {
        if self.delays.is_empty() {
            vec![0; self.players]
        } else {
            self.delays.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::ConsensusMode;
    use crate::protocol::{LiePolicy, WinnerRule};

    #[test]
    fn minimal_file() {
        let c = ExperimentConfig::from_toml_str("design = \"two-party\"").unwrap();
        assert_eq!(c, ExperimentConfig::new(Design::TwoParty, 2));
        assert_eq!(c.behaviors(), vec![PlayerBehavior::Honest; 2]);
        assert_eq!(c.delays(), vec![0, 0]);
    }

    #[test]
    fn full_file() {
        let text = r#"
            design = "hybrid"
            players = 3
            trials = 500
            seed = 9
            delays = [2, 0, 1]
            replay_cap = 8
            threads = 2

            [coin]
            kind = "entries"
            entries = [["000", 0.6, 0.0], ["111", 0.8, 0.0]]

            [rules]
            winner = "majority"
            mode = "p2p-primary"
            thresholds = { agreement = 0.5, disagreement = 0.5 }

            [[behaviors]]
            kind = "honest"
            [[behaviors]]
            kind = "classical-liar"
            policy = "invert"
            [[behaviors]]
            kind = "early-confirm-measurer"
        "#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.players, 3);
        assert_eq!(c.rules.winner, WinnerRule::Majority);
        assert_eq!(c.rules.mode, ConsensusMode::P2PPrimary);
        assert_eq!(c.rules.thresholds.agreement, 0.5);
        assert_eq!(
            c.behaviors[1],
            PlayerBehavior::ClassicalLiar {
                policy: LiePolicy::Invert
            }
        );
        let coin = c.coin_spec().unwrap();
        assert!((coin.coefficient(&[1, 1, 1]).re - 0.8).abs() < 1e-12);
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn manipulator_matrix_round_trips() {
        let mut c = ExperimentConfig::new(Design::TwoPartyWitness, 2);
        c.behaviors = vec![
            PlayerBehavior::UnitaryManipulator {
                matrix: crate::qstate::u3(0.3, 0.2, 0.1),
                target: None,
            },
            PlayerBehavior::Honest,
        ];
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "design = \"p2p\"\nplayers = 6",
            "design = \"two-party\"\ntrials = 0",
            "design = \"two-party\"\nreplay_cap = 0",
            "design = \"two-party\"\ndelays = [1]",
            "design = \"two-party\"\nbogus = 1",
            "design = \"nope\"",
            "design = \"two-party\"\n[rules]\nthresholds = { agreement = 1.5, disagreement = 0.0 }",
        ] {
            assert!(
                matches!(
                    ExperimentConfig::from_toml_str(text),
                    Err(Error::Config(_)
                        | Error::PlayerCountOutOfRange { .. }
                        | Error::InvalidParameter(_))
                ),
                "{text}"
            );
        }
    }

    #[test]
    fn coin_file_resolves_next_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("coin.toml"),
            "entries = [[\"01\", 1.0, 0.0]]",
        )
        .unwrap();
        let cfg = dir.path().join("exp.toml");
        std::fs::write(
            &cfg,
            "design = \"two-party\"\n[coin]\nkind = \"file\"\npath = \"coin.toml\"",
        )
        .unwrap();
        let c = ExperimentConfig::load(&cfg).unwrap();
        let coin = c.coin_spec().unwrap();
        assert_eq!(coin.coefficient(&[0, 1]).re, 1.0);
    }
}
