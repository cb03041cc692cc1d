//! Flat `key = value` scenario files.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors so typos
//! cannot silently fall back to defaults. Relative file paths resolve against
//! the scenario file's directory. The accepted keys and their defaults are
//! listed in the README.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bagchain_core::consensus::Strategy;
use bagchain_core::ml::{Heterogeneity, MetricFloor, TreeParams};
use bagchain_core::world::SizeModel;
use bagchain_core::{Round, Target};

use crate::SimError;

#[derive(Clone, Debug, PartialEq)]
pub enum TopologySpec {
    Full,
    /// Erdős–Rényi graph; the seed derives from the master seed.
    Random {
        edge_probability: f64,
    },
    /// Adjacency file with one `u v bandwidth` triple per line.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic {
        samples: usize,
        features: usize,
        classes: u32,
        separation: f64,
    },
    Csv(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub miners: usize,
    pub topology: TopologySpec,
    pub bandwidth: f64,
    pub requester_bandwidth: f64,
    pub keyblock_delay: Option<Round>,
    pub sizes: SizeModel,
    pub data: DataSource,
    pub holdout: f64,
    pub kappa: f64,
    pub zeta: f64,
    /// `φ`; defaults to the miner count.
    pub partitions: Option<usize>,
    pub heterogeneity: Heterogeneity,
    pub learner: TreeParams,
    pub metric_min: MetricFloor,
    pub fee: u64,
    pub keyblock_reward: u64,
    pub target: Target,
    pub hash_trials: u32,
    pub phase1: Round,
    pub phase2: Round,
    pub queue_len: usize,
    pub cfs: bool,
    pub ensemble_wait: Round,
    pub fetch_retry: Round,
    /// Non-honest miners by ID.
    pub strategies: BTreeMap<usize, Strategy>,
    pub heights: u64,
    pub seed: u64,
    /// Multiplier on the expected rounds per height for the round budget.
    pub budget_factor: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            miners: 10,
            topology: TopologySpec::Full,
            bandwidth: 0.5,
            requester_bandwidth: 0.5,
            keyblock_delay: None,
            sizes: SizeModel::default(),
            data: DataSource::Synthetic {
                samples: 5000,
                features: 10,
                classes: 5,
                separation: 1.0,
            },
            holdout: 0.2,
            kappa: 0.4,
            zeta: 0.06,
            partitions: None,
            heterogeneity: Heterogeneity::Iid,
            learner: TreeParams::default(),
            metric_min: MetricFloor::from_ppm(0).expect("zero floor"),
            fee: 100,
            keyblock_reward: 50,
            target: Target::pow2_minus_one(244),
            hash_trials: 1,
            phase1: 100,
            phase2: 10,
            queue_len: 4,
            cfs: true,
            ensemble_wait: 20,
            fetch_retry: 5,
            strategies: BTreeMap::new(),
            heights: 20,
            seed: 1,
            budget_factor: 50.0,
        }
    }
}

fn bad(key: &str, value: &str) -> SimError {
    SimError::Scenario(format!("bad value for `{key}`: `{value}`"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SimError> {
    value.parse().map_err(|_| bad(key, value))
}

fn switch(key: &str, value: &str) -> Result<bool, SimError> {
    match value {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

pub fn parse_strategy(value: &str) -> Option<Strategy> {
    Some(match value {
        "honest" => Strategy::Honest,
        "plagiarist" => Strategy::Plagiarist,
        "metric-inflater" => Strategy::MetricInflater,
        "withholder" => Strategy::Withholder,
        _ => return None,
    })
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Honest => "honest",
        Strategy::Plagiarist => "plagiarist",
        Strategy::MetricInflater => "metric-inflater",
        Strategy::Withholder => "withholder",
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, SimError> {
        let mut sc = Scenario::default();
        // the data and topology kinds decide which other keys apply, so they
        // are collected first
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SimError::Scenario(format!("line {}: expected `key = value`", lineno + 1)))?;
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }
        for (key, value) in &entries {
            sc.set_in(key, value, base)?;
        }
        sc.validate()?;
        Ok(sc)
    }

    /// Applies one override, resolving paths against the working directory.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SimError> {
        self.set_in(key, value, Path::new("."))?;
        self.validate()
    }

    fn set_in(&mut self, key: &str, value: &str, base: &Path) -> Result<(), SimError> {
        if let Some(id) = key.strip_prefix("strategy.") {
            let id: usize = num(key, id)?;
            let s = parse_strategy(value).ok_or_else(|| bad(key, value))?;
            self.strategies.insert(id, s);
            return Ok(());
        }
        match key {
            "miners" => self.miners = num(key, value)?,
            "topology" => {
                self.topology = match value {
                    "full" => TopologySpec::Full,
                    "random" => TopologySpec::Random { edge_probability: 0.3 },
                    _ => TopologySpec::File(base.join(value)),
                }
            }
            "edge_probability" => {
                let p = num(key, value)?;
                self.topology = TopologySpec::Random { edge_probability: p };
            }
            "bandwidth" => self.bandwidth = num(key, value)?,
            "requester_bandwidth" => self.requester_bandwidth = num(key, value)?,
            "keyblock_delay" => self.keyblock_delay = if value == "none" { None } else { Some(num(key, value)?) },
            "miniblock_size" => self.sizes.miniblock = num(key, value)?,
            "ensemble_size" => self.sizes.ensemble = num(key, value)?,
            "keyblock_size" => self.sizes.keyblock = num(key, value)?,
            "model_size" => self.sizes.model = num(key, value)?,
            "sample_size" => self.sizes.per_sample = num(key, value)?,
            "dataset" => {
                self.data = match value {
                    "synthetic" => match self.data {
                        DataSource::Synthetic { .. } => self.data.clone(),
                        DataSource::Csv(_) => Scenario::default().data,
                    },
                    _ => DataSource::Csv(base.join(value)),
                }
            }
            "samples" | "features" | "classes" | "separation" => {
                let DataSource::Synthetic {
                    samples,
                    features,
                    classes,
                    separation,
                } = &mut self.data
                else {
                    return Err(SimError::Scenario(format!(
                        "`{key}` only applies to synthetic datasets"
                    )));
                };
                match key {
                    "samples" => *samples = num(key, value)?,
                    "features" => *features = num(key, value)?,
                    "classes" => *classes = num(key, value)?,
                    _ => *separation = num(key, value)?,
                }
            }
            "holdout" => self.holdout = num(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "zeta" => self.zeta = num(key, value)?,
            "partitions" => self.partitions = Some(num(key, value)?),
            "heterogeneity" => {
                self.heterogeneity = match value {
                    "iid" => Heterogeneity::Iid,
                    _ => match value.strip_prefix("dirichlet:") {
                        Some(beta) => Heterogeneity::Dirichlet { beta: num(key, beta)? },
                        None => return Err(bad(key, value)),
                    },
                }
            }
            "max_depth" => self.learner.max_depth = num(key, value)?,
            "min_leaf" => self.learner.min_leaf = num(key, value)?,
            "metric_min" => {
                self.metric_min = MetricFloor::from_fraction(num(key, value)?).ok_or_else(|| bad(key, value))?
            }
            "fee" => self.fee = num(key, value)?,
            "keyblock_reward" => self.keyblock_reward = num(key, value)?,
            "target" => self.target = Target::parse(value).ok_or_else(|| bad(key, value))?,
            "hash_trials" => self.hash_trials = num(key, value)?,
            "phase1" => self.phase1 = num(key, value)?,
            "phase2" => self.phase2 = num(key, value)?,
            "queue_len" => self.queue_len = num(key, value)?,
            "cfs" => self.cfs = switch(key, value)?,
            "ensemble_wait" => self.ensemble_wait = num(key, value)?,
            "fetch_retry" => self.fetch_retry = num(key, value)?,
            "heights" => self.heights = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "budget_factor" => self.budget_factor = num(key, value)?,
            _ => return Err(SimError::Scenario(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: &str| Err(SimError::Scenario(m.to_string()));
        if self.miners == 0 {
            return fail("at least one miner is required");
        }
        if let Some((&id, _)) = self.strategies.range(self.miners..).next() {
            return Err(SimError::Scenario(format!(
                "strategy for miner {id}, but only {} miners",
                self.miners
            )));
        }
        if self.heights == 0 {
            return fail("heights must be at least 1");
        }
        if self.queue_len == 0 {
            return fail("queue_len must be at least 1");
        }
        if self.hash_trials == 0 {
            return fail("hash_trials must be at least 1");
        }
        if !(self.bandwidth > 0.0 && self.requester_bandwidth > 0.0) {
            return fail("bandwidths must be positive");
        }
        if self.budget_factor.is_nan() || self.budget_factor <= 0.0 {
            return fail("budget_factor must be positive");
        }
        if let TopologySpec::Random { edge_probability } = self.topology {
            if !(edge_probability > 0.0 && edge_probability <= 1.0) {
                return fail("edge_probability must lie in (0, 1]");
            }
        }
        self.learner.validate().map_err(|e| SimError::Scenario(e.to_string()))?;
        Ok(())
    }

    pub fn partitions(&self) -> usize {
        self.partitions.unwrap_or(self.miners)
    }

    pub fn strategy(&self, miner: usize) -> Strategy {
        self.strategies.get(&miner).copied().unwrap_or(Strategy::Honest)
    }

    /// Tasks the requester must pre-publish: every executed height plus the
    /// queue that is still pending, with slack for heights mined past the
    /// stopping point.
    pub fn task_count(&self) -> usize {
        self.heights as usize + self.queue_len + 4
    }

    /// Expected rounds per height: both fixed phases plus the mean wait for
    /// the first Key Block of the network.
    pub fn expected_rounds_per_height(&self) -> f64 {
        let p_miner = self.target.round_probability(self.hash_trials);
        let p = -f64::exp_m1(self.miners as f64 * (-p_miner).ln_1p());
        (self.phase1 + self.phase2) as f64 + 1.0 / p
    }

    pub fn round_budget(&self) -> Round {
        let budget = self.budget_factor * self.heights as f64 * self.expected_rounds_per_height();
        if budget.is_finite() {
            budget.ceil() as Round
        } else {
            Round::MAX
        }
    }
}
