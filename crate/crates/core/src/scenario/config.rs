//! The scenario document schema, its loader, and the validation pass that
//! turns a raw document into a fully resolved, runnable scenario. Every
//! rejection names the offending field.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

use super::ScenarioError;
use crate::chain::GasSchedule;
use crate::contract::{ContractConfig, DEFAULT_GROUP_SIZE, DEFAULT_INIT2_BLOCK_LIMIT};
use crate::files;
use crate::hashing::{keccak256, DataGroup, DataPoint, Nonce};
use crate::nn::{ModelDefinition, WeightsBiases};
use crate::partition::PartitionConfig;
use crate::Fp;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub contract: ContractSection,
    pub gas: Option<GasSection>,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSection {
    pub reward: u64,
    pub submission_period: u64,
    pub evaluation_period: u64,
    pub test_reveal_period: u64,
    #[serde(default = "default_init2_block_limit")]
    pub init2_block_limit: u64,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    /// Numerator and denominator of the training fraction.
    #[serde(default = "default_training_fraction")]
    pub training_fraction: [u64; 2],
    /// Decimal accuracy threshold, e.g. "0.5".
    pub min_accuracy: String,
    pub model_shape: Vec<usize>,
}

fn default_init2_block_limit() -> u64 {
    DEFAULT_INIT2_BLOCK_LIMIT
}

fn default_group_size() -> usize {
    DEFAULT_GROUP_SIZE
}

fn default_training_fraction() -> [u64; 2] {
    [80, 100]
}

/// Gas schedule overrides; omitted fields keep the defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSection {
    pub storage_gas_per_kib: Option<u64>,
    pub gas_limit: Option<u64>,
    pub gas_price_gwei: Option<u64>,
    pub eth_usd: Option<u64>,
}

/// Exactly one of `path` (relative to the scenario file) or `inline`
/// (rows of integers, last value the label).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<String>,
    pub inline: Option<Vec<Vec<i64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorRole {
    Organizer,
    Submitter,
    Miner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorBehavior {
    #[default]
    Honest,
    /// Organizer never reveals the test set; evaluation falls back to the
    /// training data.
    WithholdTestReveal,
    /// Organizer reveals an altered test set, which the commitments reject.
    TamperReveal,
    /// Submitter re-submits another actor's exact parameters.
    DuplicateResubmit,
    /// Miner regenerates the block feeding the partition draw until the
    /// testing set avoids the indexes it wants kept out.
    BlockGrinding,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub name: String,
    pub role: ActorRole,
    #[serde(default)]
    pub behavior: ActorBehavior,
    /// Where a winning submitter wants the reward sent; defaults to the
    /// actor name.
    pub payment_address: Option<String>,
    /// Path to a model parameter file, relative to the scenario file.
    pub model: Option<String>,
    /// Name of the actor whose parameters this one re-submits verbatim.
    pub copy_from: Option<String>,
    /// Seed for generating random parameters matching the contract shape.
    pub random_model_seed: Option<u64>,
    /// Candidate blocks a grinding miner tries per grind.
    pub candidates: Option<u64>,
    /// Group indexes the grinding miner wants kept out of the testing set.
    pub forbid_testing: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioAction {
    Init1,
    Init2,
    Init3,
    Submit,
    RevealTest,
    Evaluate,
    Finalize,
    Cancel,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub height: u64,
    pub actor: String,
    pub action: ScenarioAction,
    /// For `evaluate`: the submission id. Omitted means every submission
    /// not yet evaluated, in id order.
    pub submission: Option<u64>,
}

/// A validated scenario with every external reference resolved: dataset
/// grouped, models loaded or generated, nonces drawn, gas schedule merged.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub config: ScenarioConfig,
    pub contract_config: ContractConfig<i128>,
    pub gas_schedule: GasSchedule,
    pub model: ModelDefinition,
    pub groups: Vec<DataGroup>,
    pub nonces: Vec<Nonce>,
    /// Submission parameters per submitter actor name.
    pub actor_params: BTreeMap<String, WeightsBiases<i128>>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_string(),
            reason: e.to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }
}

impl PreparedScenario {
    /// Loads and validates a scenario file; relative paths inside it
    /// resolve against its parent directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let config = ScenarioConfig::from_path(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::prepare(config, base)
    }

    pub fn prepare(config: ScenarioConfig, base_dir: &Path) -> Result<Self, ScenarioError> {
        if config.version != 1 {
            return Err(ScenarioError::Version { got: config.version });
        }
        if config.name.is_empty() {
            return Err(ScenarioError::invalid("name", "must not be empty"));
        }

        let model = ModelDefinition::new(config.contract.model_shape.clone())
            .map_err(|e| ScenarioError::invalid("contract.model_shape", e.to_string()))?;
        let min_accuracy = Fp::parse_decimal(&config.contract.min_accuracy)
            .map_err(|e| ScenarioError::invalid("contract.min_accuracy", e.to_string()))?;
        let [num, den] = config.contract.training_fraction;
        if den == 0 {
            return Err(ScenarioError::invalid(
                "contract.training_fraction",
                "denominator must not be zero",
            ));
        }
        let contract_config = ContractConfig {
            reward: config.contract.reward as u128,
            submission_period: config.contract.submission_period,
            evaluation_period: config.contract.evaluation_period,
            test_reveal_period: config.contract.test_reveal_period,
            init2_block_limit: config.contract.init2_block_limit,
            group_size: config.contract.group_size,
            training_fraction: Ratio::new(num, den),
            min_accuracy,
            model_shape: model.clone(),
        };
        contract_config
            .validate()
            .map_err(|e| ScenarioError::invalid("contract", e.to_string()))?;

        let gas_schedule = merge_gas(&config.gas);
        gas_schedule
            .validate()
            .map_err(|e| ScenarioError::invalid("gas", e.to_string()))?;

        let groups = load_groups(&config, base_dir, &model)?;
        // The partition parameters must be coherent for this group count.
        PartitionConfig::new(
            groups.len(),
            contract_config.training_fraction,
            contract_config.init2_block_limit,
        )
        .map_err(|e| ScenarioError::invalid("contract.training_fraction", e.to_string()))?;

        validate_actors(&config)?;
        validate_schedule(&config, groups.len())?;
        let actor_params = resolve_actor_params(&config, base_dir, &model)?;
        let nonces = draw_nonces(config.seed, groups.len());

        Ok(PreparedScenario {
            config,
            contract_config,
            gas_schedule,
            model,
            groups,
            nonces,
            actor_params,
        })
    }

    pub fn organizer(&self) -> &ActorSpec {
        self.config
            .actors
            .iter()
            .find(|a| a.role == ActorRole::Organizer)
            .expect("validated: exactly one organizer")
    }

    pub fn actor(&self, name: &str) -> Option<&ActorSpec> {
        self.config.actors.iter().find(|a| a.name == name)
    }

    pub fn grinder(&self) -> Option<&ActorSpec> {
        self.config
            .actors
            .iter()
            .find(|a| a.role == ActorRole::Miner && a.behavior == ActorBehavior::BlockGrinding)
    }
}

fn merge_gas(section: &Option<GasSection>) -> GasSchedule {
    let mut schedule = GasSchedule::default();
    if let Some(gas) = section {
        if let Some(v) = gas.storage_gas_per_kib {
            schedule.storage_gas_per_kib = v as u128;
        }
        if let Some(v) = gas.gas_limit {
            schedule.gas_limit = v as u128;
        }
        if let Some(v) = gas.gas_price_gwei {
            schedule.gas_price_gwei = v;
        }
        if let Some(v) = gas.eth_usd {
            schedule.eth_usd = v;
        }
    }
    schedule
}

fn load_groups(
    config: &ScenarioConfig,
    base_dir: &Path,
    model: &ModelDefinition,
) -> Result<Vec<DataGroup>, ScenarioError> {
    let points: Vec<DataPoint> = match (&config.dataset.path, &config.dataset.inline) {
        (Some(path), None) => files::load_data_points(&base_dir.join(path))?,
        (None, Some(rows)) => {
            let mut points = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                if row.len() < 2 {
                    return Err(ScenarioError::invalid(
                        "dataset.inline",
                        format!("row {i} needs at least one feature and a label"),
                    ));
                }
                let (label, inputs) = row.split_last().expect("checked len");
                points.push(DataPoint {
                    inputs: inputs.to_vec(),
                    label: *label,
                });
            }
            points
        }
        _ => {
            return Err(ScenarioError::invalid(
                "dataset",
                "exactly one of path or inline is required",
            ))
        }
    };
    for (i, point) in points.iter().enumerate() {
        if point.inputs.len() != model.input_dim() {
            return Err(ScenarioError::invalid(
                "dataset",
                format!(
                    "point {i} has {} features but the model takes {}",
                    point.inputs.len(),
                    model.input_dim()
                ),
            ));
        }
        if point.label < 0 || point.label >= model.output_dim() as i64 {
            return Err(ScenarioError::invalid(
                "dataset",
                format!(
                    "point {i} label {} outside [0, {})",
                    point.label,
                    model.output_dim()
                ),
            ));
        }
    }
    let group_size = config.contract.group_size;
    files::group_points(points, group_size).map_err(ScenarioError::from)
}

fn validate_actors(config: &ScenarioConfig) -> Result<(), ScenarioError> {
    let mut names = BTreeSet::new();
    let mut organizers = 0usize;
    for actor in &config.actors {
        if actor.name.is_empty() {
            return Err(ScenarioError::invalid("actors.name", "must not be empty"));
        }
        if !names.insert(actor.name.as_str()) {
            return Err(ScenarioError::invalid(
                "actors.name",
                format!("duplicate actor {:?}", actor.name),
            ));
        }
        let field = |suffix: &str| format!("actors.{}.{}", actor.name, suffix);
        let allowed: &[ActorBehavior] = match actor.role {
            ActorRole::Organizer => {
                organizers += 1;
                &[
                    ActorBehavior::Honest,
                    ActorBehavior::WithholdTestReveal,
                    ActorBehavior::TamperReveal,
                ]
            }
            ActorRole::Submitter => &[ActorBehavior::Honest, ActorBehavior::DuplicateResubmit],
            ActorRole::Miner => &[ActorBehavior::Honest, ActorBehavior::BlockGrinding],
        };
        if !allowed.contains(&actor.behavior) {
            return Err(ScenarioError::Invalid {
                field: field("behavior"),
                reason: format!("{:?} is not a {:?} behavior", actor.behavior, actor.role),
            });
        }
        if actor.role != ActorRole::Submitter {
            for (set, name) in [
                (actor.model.is_some(), "model"),
                (actor.copy_from.is_some(), "copy_from"),
                (actor.random_model_seed.is_some(), "random_model_seed"),
                (actor.payment_address.is_some(), "payment_address"),
            ] {
                if set {
                    return Err(ScenarioError::Invalid {
                        field: field(name),
                        reason: "only submitter actors take this field".to_string(),
                    });
                }
            }
        }
        if actor.role != ActorRole::Miner
            && (actor.candidates.is_some() || actor.forbid_testing.is_some())
        {
            return Err(ScenarioError::Invalid {
                field: field("candidates"),
                reason: "only miner actors take grinding fields".to_string(),
            });
        }
        if actor.role == ActorRole::Submitter {
            let sources = [
                actor.model.is_some(),
                actor.copy_from.is_some(),
                actor.random_model_seed.is_some(),
            ]
            .iter()
            .filter(|&&s| s)
            .count();
            if sources != 1 {
                return Err(ScenarioError::Invalid {
                    field: field("model"),
                    reason: "exactly one of model, copy_from, random_model_seed is required"
                        .to_string(),
                });
            }
        }
        if actor.behavior == ActorBehavior::BlockGrinding {
            match actor.candidates {
                Some(c) if c >= 1 => {}
                _ => {
                    return Err(ScenarioError::Invalid {
                        field: field("candidates"),
                        reason: "block_grinding needs candidates >= 1".to_string(),
                    })
                }
            }
            if actor
                .forbid_testing
                .as_ref()
                .map(|f| f.is_empty())
                .unwrap_or(true)
            {
                return Err(ScenarioError::Invalid {
                    field: field("forbid_testing"),
                    reason: "block_grinding needs a non-empty forbid_testing list".to_string(),
                });
            }
        }
        if actor.behavior == ActorBehavior::DuplicateResubmit && actor.copy_from.is_none() {
            return Err(ScenarioError::Invalid {
                field: field("copy_from"),
                reason: "duplicate_resubmit needs copy_from".to_string(),
            });
        }
    }
    if organizers != 1 {
        return Err(ScenarioError::invalid(
            "actors",
            format!("exactly one organizer is required, found {organizers}"),
        ));
    }
    // copy_from must point at a submitter with its own parameters.
    for actor in &config.actors {
        if let Some(source) = &actor.copy_from {
            let target = config.actors.iter().find(|a| &a.name == source);
            match target {
                Some(t)
                    if t.role == ActorRole::Submitter
                        && (t.model.is_some() || t.random_model_seed.is_some()) => {}
                _ => {
                    return Err(ScenarioError::Invalid {
                        field: format!("actors.{}.copy_from", actor.name),
                        reason: format!(
                            "{source:?} must name a submitter with its own model parameters"
                        ),
                    })
                }
            }
        }
    }
    Ok(())
}

fn validate_schedule(config: &ScenarioConfig, group_count: usize) -> Result<(), ScenarioError> {
    if config.schedule.is_empty() {
        return Err(ScenarioError::invalid("schedule", "must not be empty"));
    }
    let mut last_height = 0;
    let mut init1_entries = 0usize;
    for (i, entry) in config.schedule.iter().enumerate() {
        let field = |suffix: &str| format!("schedule[{i}].{suffix}");
        if entry.height < last_height {
            return Err(ScenarioError::Invalid {
                field: field("height"),
                reason: format!("{} is before the previous entry at {last_height}", entry.height),
            });
        }
        last_height = entry.height;
        let actor = config
            .actors
            .iter()
            .find(|a| a.name == entry.actor)
            .ok_or_else(|| ScenarioError::Invalid {
                field: field("actor"),
                reason: format!("unknown actor {:?}", entry.actor),
            })?;
        if entry.submission.is_some() && entry.action != ScenarioAction::Evaluate {
            return Err(ScenarioError::Invalid {
                field: field("submission"),
                reason: "only evaluate entries take a submission id".to_string(),
            });
        }
        match entry.action {
            ScenarioAction::Init1 => {
                init1_entries += 1;
                if actor.role != ActorRole::Organizer {
                    return Err(ScenarioError::Invalid {
                        field: field("actor"),
                        reason: "init1 creates the contract, so only the organizer may run it"
                            .to_string(),
                    });
                }
            }
            ScenarioAction::Submit => {
                if actor.role != ActorRole::Submitter {
                    return Err(ScenarioError::Invalid {
                        field: field("actor"),
                        reason: format!("{:?} has no model to submit", entry.actor),
                    });
                }
            }
            ScenarioAction::RevealTest
                if actor.behavior == ActorBehavior::WithholdTestReveal =>
            {
                return Err(ScenarioError::Invalid {
                    field: field("action"),
                    reason: "a withhold_test_reveal organizer never schedules reveal_test"
                        .to_string(),
                });
            }
            _ => {}
        }
        if actor.role == ActorRole::Miner
            && !matches!(
                entry.action,
                ScenarioAction::Evaluate | ScenarioAction::Finalize
            )
        {
            return Err(ScenarioError::Invalid {
                field: field("actor"),
                reason: "miners only mine; they may be scheduled for evaluate or finalize only"
                    .to_string(),
            });
        }
    }
    if init1_entries != 1 {
        return Err(ScenarioError::invalid(
            "schedule",
            format!("exactly one init1 entry is required, found {init1_entries}"),
        ));
    }
    // Grinding constraints reference real group indexes.
    for actor in &config.actors {
        if let Some(forbidden) = &actor.forbid_testing {
            for &index in forbidden {
                if index >= group_count {
                    return Err(ScenarioError::Invalid {
                        field: format!("actors.{}.forbid_testing", actor.name),
                        reason: format!("group index {index} out of range (0..{group_count})"),
                    });
                }
            }
        }
    }
    Ok(())
}

fn resolve_actor_params(
    config: &ScenarioConfig,
    base_dir: &Path,
    model: &ModelDefinition,
) -> Result<BTreeMap<String, WeightsBiases<i128>>, ScenarioError> {
    let mut params: BTreeMap<String, WeightsBiases<i128>> = BTreeMap::new();
    // Own parameters first, copies second.
    for actor in &config.actors {
        if let Some(path) = &actor.model {
            let (file_model, file_params) = files::load_model::<i128, 20>(&base_dir.join(path))?;
            if &file_model != model {
                return Err(ScenarioError::Invalid {
                    field: format!("actors.{}.model", actor.name),
                    reason: format!(
                        "file declares layers {:?} but the contract expects {:?}",
                        file_model.layer_sizes(),
                        model.layer_sizes()
                    ),
                });
            }
            params.insert(actor.name.clone(), file_params);
        } else if let Some(seed) = actor.random_model_seed {
            params.insert(actor.name.clone(), random_params(model, seed));
        }
    }
    for actor in &config.actors {
        if let Some(source) = &actor.copy_from {
            let copied = params
                .get(source)
                .expect("validated: copy_from targets an actor with parameters")
                .clone();
            params.insert(actor.name.clone(), copied);
        }
    }
    Ok(params)
}

/// Seeded random parameters with mantissas in [-2, 2] at the working
/// scale — the stand-in for off-band training.
fn random_params(model: &ModelDefinition, seed: u64) -> WeightsBiases<i128> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let two = 2i64 << crate::fixed::DEFAULT_SCALE_BITS;
    let weights: Vec<i128> = (0..model.weight_count())
        .map(|_| rng.gen_range(-two..=two) as i128)
        .collect();
    let biases: Vec<i128> = (0..model.bias_count())
        .map(|_| rng.gen_range(-two..=two) as i128)
        .collect();
    WeightsBiases::from_mantissas(model, &weights, &biases)
        .expect("generated parameter counts match the shape")
}

/// One 256-bit nonce per group, drawn from a stream keyed by the scenario
/// seed under a fixed domain tag.
fn draw_nonces(seed: u64, group_count: usize) -> Vec<Nonce> {
    let mut key = Vec::with_capacity(40);
    key.extend_from_slice(b"scenario-nonce-stream-v1........");
    key.extend_from_slice(&seed.to_be_bytes());
    let digest = keccak256(&key);
    let mut rng = ChaCha20Rng::from_seed(digest.0);
    (0..group_count)
        .map(|_| {
            let mut bytes = [0u8; 32];
            rng.fill(&mut bytes);
            Nonce(bytes)
        })
        .collect()
}
