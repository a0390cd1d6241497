//! The contest contract state machine: commitments and escrow at creation,
//! a blockhash-driven partition trigger, all-or-nothing training and test
//! reveals, a bounded submission window, per-model evaluation with a
//! strict-improvement best record, and exactly one terminal payout.
//!
//! Every state-changing call is a simulated transaction: it computes a gas
//! figure (storage bytes for writes, one unit per fixed-point operation for
//! evaluation), rejects if that exceeds the schedule's per-transaction
//! limit, and appends an event record either way. Rejected calls leave the
//! state untouched and record zero gas, with the rejection reason in the
//! outcome.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::chain::{ChainState, Gas, GasSchedule};
use crate::fixed::{FixedPoint, Mantissa};
use crate::hashing::{hash_data_group, serialize_data_group, DataGroup, DataPoint, Digest, Nonce};
use crate::nn::{accuracy_counted, ModelDefinition, Submission, WeightsBiases};
use crate::partition::{randomly_select_index, PartitionConfig, PartitionError, PartitionResult};
use crate::Address;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error("invalid contract config: {reason}")]
    BadConfig { reason: String },
    #[error("deposit {deposit} does not match the declared reward {reward}")]
    DepositMismatch { deposit: u128, reward: u128 },
    #[error("at least one commitment is required")]
    NoCommitments,
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("operation {operation} is not allowed in phase {phase}")]
    WrongPhase {
        operation: &'static str,
        phase: ContractPhase,
    },
    #[error("only the organizer may call {operation}")]
    NotOrganizer { operation: &'static str },
    #[error("the {window} window is not open yet at block {height}")]
    WindowNotOpen { window: &'static str, height: u64 },
    #[error("the {window} window closed at block {deadline} (now at block {height})")]
    WindowClosed {
        window: &'static str,
        deadline: u64,
        height: u64,
    },
    #[error("revealed indexes do not match the {expected} index set")]
    WrongIndexSet { expected: &'static str },
    #[error("group {index} is malformed: {reason}")]
    MalformedReveal { index: usize, reason: String },
    #[error("group {index} does not match its commitment")]
    RevealMismatch { index: usize },
    #[error("submission does not match the contract model shape: {reason}")]
    ShapeMismatch { reason: String },
    #[error("no submission with id {id}")]
    UnknownSubmission { id: u64 },
    #[error("submission {id} was already evaluated")]
    AlreadyEvaluated { id: u64 },
    #[error("transaction needs {needed} gas but the limit is {limit}")]
    GasLimitExceeded { needed: Gas, limit: Gas },
    #[error("evaluation failed: {reason}")]
    EvaluationFailed { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ContractPhase {
    Init1Done,
    Init2Done,
    TrainingRevealed,
    TestRevealed,
    Finalized,
    Cancelled,
}

impl ContractPhase {
    pub fn is_terminal(&self) -> bool {
        matches!(self, ContractPhase::Finalized | ContractPhase::Cancelled)
    }
}

impl fmt::Display for ContractPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Creation-time parameters. Periods are block counts; the reward is an
/// abstract currency amount held in escrow from init1 until the single
/// terminal payout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractConfig<M, const F: u32 = { crate::fixed::DEFAULT_SCALE_BITS }> {
    pub reward: u128,
    pub submission_period: u64,
    pub evaluation_period: u64,
    pub test_reveal_period: u64,
    pub init2_block_limit: u64,
    pub group_size: usize,
    pub training_fraction: num_rational::Ratio<u64>,
    pub min_accuracy: FixedPoint<M, F>,
    pub model_shape: ModelDefinition,
}

pub const DEFAULT_INIT2_BLOCK_LIMIT: u64 = 5;
pub const DEFAULT_GROUP_SIZE: usize = 5;

impl<M: Mantissa, const F: u32> ContractConfig<M, F> {
    /// Config with the default window/grouping parameters: init2 limit 5,
    /// group size 5, training fraction 80/100.
    pub fn new(
        reward: u128,
        submission_period: u64,
        evaluation_period: u64,
        test_reveal_period: u64,
        min_accuracy: FixedPoint<M, F>,
        model_shape: ModelDefinition,
    ) -> Self {
        Self {
            reward,
            submission_period,
            evaluation_period,
            test_reveal_period,
            init2_block_limit: DEFAULT_INIT2_BLOCK_LIMIT,
            group_size: DEFAULT_GROUP_SIZE,
            training_fraction: num_rational::Ratio::new(80, 100),
            min_accuracy,
            model_shape,
        }
    }

    pub fn validate(&self) -> Result<(), ContractError> {
        let bad = |reason: &str| ContractError::BadConfig {
            reason: reason.to_string(),
        };
        if self.reward == 0 {
            return Err(bad("reward must be positive"));
        }
        if self.submission_period == 0
            || self.evaluation_period == 0
            || self.test_reveal_period == 0
            || self.init2_block_limit == 0
        {
            return Err(bad("all periods must be at least 1 block"));
        }
        if self.group_size == 0 {
            return Err(bad("group size must be positive"));
        }
        if self.min_accuracy.is_negative() || self.min_accuracy > FixedPoint::one() {
            return Err(bad("minimum accuracy must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One data-group reveal: which commitment it opens, the group, the nonce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reveal {
    pub index: usize,
    pub group: DataGroup,
    pub nonce: Nonce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoutKind {
    BestModelReward,
    OrganizerRefund,
}

impl fmt::Display for PayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoutKind::BestModelReward => f.write_str("best-model reward"),
            PayoutKind::OrganizerRefund => f.write_str("organizer refund"),
        }
    }
}

/// The single escrow transfer a terminal state performs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payout {
    pub recipient: Address,
    pub amount: u128,
    pub kind: PayoutKind,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Init2Outcome {
    /// Partition stored; contract moved to Init2Done.
    Partitioned { gas: Gas },
    /// Called past the init2 deadline: the contract cancelled itself and
    /// refunded the organizer. The call itself is accepted — the state
    /// change it causes is the cancellation.
    ExpiredCancelled { refund: Payout },
}

/// Which dataset evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSource {
    Testing,
    Training,
}

impl fmt::Display for EvalSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalSource::Testing => f.write_str("testing"),
            EvalSource::Training => f.write_str("training"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationOutcome<M, const F: u32 = { crate::fixed::DEFAULT_SCALE_BITS }> {
    pub submission_id: u64,
    pub score: FixedPoint<M, F>,
    pub correct: usize,
    pub total: usize,
    pub gas: Gas,
    pub became_best: bool,
    pub dataset: EvalSource,
}

/// Deadline heights, all inclusive: an operation at exactly the deadline
/// block still succeeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deadlines {
    /// Last block at which init2 may run (set by init1).
    pub init2: u64,
    /// Last block of the submission window (set by init3).
    pub submission: Option<u64>,
    /// Last block at which the test set may be revealed (set by init3).
    pub test_reveal: Option<u64>,
    /// Last block of the evaluation window. Set by reveal_test_data; if
    /// the test reveal never happens, the fallback window ends at
    /// test_reveal + evaluation_period instead.
    pub evaluation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventOutcome {
    Accepted,
    Rejected { reason: String },
}

/// One line of the contract's ground-truth log: every accepted or rejected
/// operation appends exactly one record (reveals append one per group
/// transaction on success).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub height: u64,
    pub operation: &'static str,
    pub caller: Address,
    pub outcome: EventOutcome,
    pub gas: Gas,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "height={} op={} caller={} gas={} outcome=",
            self.height, self.operation, self.caller, self.gas
        )?;
        match &self.outcome {
            EventOutcome::Accepted => f.write_str("accepted"),
            EventOutcome::Rejected { reason } => write!(f, "rejected reason={reason:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Best<M, const F: u32> {
    submission_id: u64,
    score: FixedPoint<M, F>,
}

/// Full contract state. All mutating operations take the chain (for the
/// current height) and a caller identity, and are strictly serialized.
#[derive(Debug, Clone)]
pub struct ContractState<M, const F: u32 = { crate::fixed::DEFAULT_SCALE_BITS }> {
    phase: ContractPhase,
    config: ContractConfig<M, F>,
    schedule: GasSchedule,
    organizer: Address,
    escrow_balance: u128,
    commitments: Vec<Digest>,
    partition_config: PartitionConfig,
    partition: Option<PartitionResult>,
    revealed_training: BTreeMap<usize, (DataGroup, Nonce)>,
    revealed_testing: BTreeMap<usize, (DataGroup, Nonce)>,
    submissions: Vec<Submission<M, F>>,
    scores: BTreeMap<u64, FixedPoint<M, F>>,
    best: Option<Best<M, F>>,
    eval_source_used: Option<EvalSource>,
    deadlines: Deadlines,
    payouts: Vec<Payout>,
    events: Vec<EventRecord>,
}

impl<M: Mantissa, const F: u32> ContractState<M, F> {
    /// Creates the contract: validates the config, checks the deposit
    /// against the declared reward, stores the commitments, and opens the
    /// init2 window. A rejected init1 creates no state at all.
    pub fn init1(
        chain: &ChainState,
        schedule: GasSchedule,
        organizer: Address,
        config: ContractConfig<M, F>,
        commitments: Vec<Digest>,
        deposit: u128,
    ) -> Result<(Self, Gas), ContractError> {
        config.validate()?;
        schedule
            .validate()
            .map_err(|e| ContractError::BadConfig {
                reason: e.to_string(),
            })?;
        if deposit != config.reward {
            return Err(ContractError::DepositMismatch {
                deposit,
                reward: config.reward,
            });
        }
        if commitments.is_empty() {
            return Err(ContractError::NoCommitments);
        }
        let partition_config = PartitionConfig::new(
            commitments.len(),
            config.training_fraction,
            config.init2_block_limit,
        )?;
        let height = chain.height();
        // Creation transaction stores the commitments, the organizer
        // address, nine config scalars, and the model shape — one 32-byte
        // word each.
        let words = commitments.len() + 10 + config.model_shape.layer_sizes().len();
        let gas = schedule.storage_gas(32 * words as u64);
        if gas > schedule.gas_limit {
            return Err(ContractError::GasLimitExceeded {
                needed: gas,
                limit: schedule.gas_limit,
            });
        }
        let deadlines = Deadlines {
            init2: height + config.init2_block_limit,
            submission: None,
            test_reveal: None,
            evaluation: None,
        };
        let mut state = Self {
            phase: ContractPhase::Init1Done,
            config,
            schedule,
            organizer: organizer.clone(),
            escrow_balance: deposit,
            commitments,
            partition_config,
            partition: None,
            revealed_training: BTreeMap::new(),
            revealed_testing: BTreeMap::new(),
            submissions: Vec::new(),
            scores: BTreeMap::new(),
            best: None,
            eval_source_used: None,
            deadlines,
            payouts: Vec::new(),
            events: Vec::new(),
        };
        state.record(height, "init1", &organizer, EventOutcome::Accepted, gas);
        Ok((state, gas))
    }

    /// Triggers the randomized partition over commitment indexes using the
    /// chain head's hash history. Past the deadline the contract instead
    /// cancels itself and refunds the organizer.
    pub fn init2(
        &mut self,
        chain: &ChainState,
        caller: &Address,
    ) -> Result<Init2Outcome, ContractError> {
        let height = chain.height();
        let result = self.init2_inner(chain, caller, height);
        match &result {
            Ok(Init2Outcome::Partitioned { gas }) => {
                self.record(height, "init2", caller, EventOutcome::Accepted, *gas)
            }
            Ok(Init2Outcome::ExpiredCancelled { .. }) => {
                self.record(height, "init2", caller, EventOutcome::Accepted, 0)
            }
            Err(e) => self.reject(height, "init2", caller, e),
        }
        result
    }

    fn init2_inner(
        &mut self,
        chain: &ChainState,
        caller: &Address,
        height: u64,
    ) -> Result<Init2Outcome, ContractError> {
        self.require_phase("init2", ContractPhase::Init1Done)?;
        self.require_organizer("init2", caller)?;
        if height > self.deadlines.init2 {
            let refund = self.pay(PayoutKind::OrganizerRefund, self.organizer.clone(), height);
            self.phase = ContractPhase::Cancelled;
            return Ok(Init2Outcome::ExpiredCancelled { refund });
        }
        let at_block = height.saturating_sub(1);
        let partition = randomly_select_index(&self.partition_config, chain, at_block)?;
        // The partition indexes are written to storage, one word each.
        let gas = self
            .schedule
            .storage_gas(32 * self.commitments.len() as u64);
        self.check_gas(gas)?;
        self.partition = Some(partition);
        self.phase = ContractPhase::Init2Done;
        Ok(Init2Outcome::Partitioned { gas })
    }

    /// Reveals the training groups. The reveal is all-or-nothing: every
    /// training index must be present exactly once and every group must
    /// verify against its commitment, or the whole call is rejected. On
    /// success each group counts as its own transaction (one gas entry and
    /// one event per group, in ascending index order) and the submission
    /// window opens.
    pub fn init3(
        &mut self,
        chain: &ChainState,
        caller: &Address,
        reveals: Vec<Reveal>,
    ) -> Result<Vec<Gas>, ContractError> {
        let height = chain.height();
        let result = self.reveal_inner(caller, height, reveals, EvalSource::Training);
        match &result {
            Ok(chunks) => {
                for gas in chunks {
                    self.record(height, "init3", caller, EventOutcome::Accepted, *gas);
                }
                self.phase = ContractPhase::TrainingRevealed;
                self.deadlines.submission = Some(height + self.config.submission_period);
                self.deadlines.test_reveal = Some(
                    height + self.config.submission_period + self.config.test_reveal_period,
                );
            }
            Err(e) => self.reject(height, "init3", caller, e),
        }
        result
    }

    /// Reveals the testing groups after the submission window has closed
    /// but before the test-reveal deadline; evaluation then runs on the
    /// testing dataset. Same all-or-nothing and per-group-transaction
    /// semantics as init3.
    pub fn reveal_test_data(
        &mut self,
        chain: &ChainState,
        caller: &Address,
        reveals: Vec<Reveal>,
    ) -> Result<Vec<Gas>, ContractError> {
        let height = chain.height();
        let result = self.reveal_inner(caller, height, reveals, EvalSource::Testing);
        match &result {
            Ok(chunks) => {
                for gas in chunks {
                    self.record(height, "reveal_test_data", caller, EventOutcome::Accepted, *gas);
                }
                self.phase = ContractPhase::TestRevealed;
                self.deadlines.evaluation = Some(height + self.config.evaluation_period);
            }
            Err(e) => self.reject(height, "reveal_test_data", caller, e),
        }
        result
    }

    fn reveal_inner(
        &mut self,
        caller: &Address,
        height: u64,
        reveals: Vec<Reveal>,
        which: EvalSource,
    ) -> Result<Vec<Gas>, ContractError> {
        let (operation, expected_name) = match which {
            EvalSource::Training => ("init3", "training"),
            EvalSource::Testing => ("reveal_test_data", "testing"),
        };
        match which {
            EvalSource::Training => {
                self.require_phase(operation, ContractPhase::Init2Done)?;
            }
            EvalSource::Testing => {
                self.require_phase(operation, ContractPhase::TrainingRevealed)?;
                let submission_deadline = self.deadlines.submission.unwrap();
                if height <= submission_deadline {
                    return Err(ContractError::WindowNotOpen {
                        window: "test-reveal",
                        height,
                    });
                }
                let deadline = self.deadlines.test_reveal.unwrap();
                if height > deadline {
                    return Err(ContractError::WindowClosed {
                        window: "test-reveal",
                        deadline,
                        height,
                    });
                }
            }
        }
        self.require_organizer(operation, caller)?;

        let partition = self.partition.as_ref().expect("partition set by init2");
        let mut expected: Vec<usize> = match which {
            EvalSource::Training => partition.training_indexes.clone(),
            EvalSource::Testing => partition.testing_indexes.clone(),
        };
        expected.sort_unstable();
        let mut by_index: BTreeMap<usize, Reveal> = BTreeMap::new();
        for reveal in reveals {
            if by_index.insert(reveal.index, reveal).is_some() {
                return Err(ContractError::WrongIndexSet {
                    expected: expected_name,
                });
            }
        }
        let got: Vec<usize> = by_index.keys().copied().collect();
        if got != expected {
            return Err(ContractError::WrongIndexSet {
                expected: expected_name,
            });
        }

        let input_dim = self.config.model_shape.input_dim();
        let output_dim = self.config.model_shape.output_dim() as i64;
        let mut chunk_gas = Vec::with_capacity(by_index.len());
        for (&index, reveal) in &by_index {
            let malformed = |reason: String| ContractError::MalformedReveal { index, reason };
            if reveal.group.points.len() != self.config.group_size {
                return Err(malformed(format!(
                    "expected {} points, got {}",
                    self.config.group_size,
                    reveal.group.points.len()
                )));
            }
            for point in &reveal.group.points {
                if point.inputs.len() != input_dim {
                    return Err(malformed(format!(
                        "expected {input_dim} features, got {}",
                        point.inputs.len()
                    )));
                }
                if point.label < 0 || point.label >= output_dim {
                    return Err(malformed(format!(
                        "label {} outside [0, {output_dim})",
                        point.label
                    )));
                }
            }
            let payload = serialize_data_group(&reveal.group, &reveal.nonce)
                .map_err(|e| malformed(e.to_string()))?;
            let digest = hash_data_group(&reveal.group, &reveal.nonce)
                .map_err(|e| malformed(e.to_string()))?;
            if digest != self.commitments[index] {
                return Err(ContractError::RevealMismatch { index });
            }
            let gas = self.schedule.storage_gas(payload.len() as u64);
            self.check_gas(gas)?;
            chunk_gas.push(gas);
        }
        let target = match which {
            EvalSource::Training => &mut self.revealed_training,
            EvalSource::Testing => &mut self.revealed_testing,
        };
        for (index, reveal) in by_index {
            target.insert(index, (reveal.group, reveal.nonce));
        }
        Ok(chunk_gas)
    }

    /// Accepts a model during the submission window. The declared shape
    /// must equal the contract's shape and the parameters must fit it.
    /// Returns the assigned id (the previous submission count).
    pub fn submit_model(
        &mut self,
        chain: &ChainState,
        caller: &Address,
        model: ModelDefinition,
        params: WeightsBiases<M, F>,
        payment_address: Address,
    ) -> Result<(u64, Gas), ContractError> {
        let height = chain.height();
        let result = self.submit_inner(caller, height, model, params, payment_address);
        match &result {
            Ok((_, gas)) => self.record(height, "submit_model", caller, EventOutcome::Accepted, *gas),
            Err(e) => self.reject(height, "submit_model", caller, e),
        }
        result
    }

    fn submit_inner(
        &mut self,
        caller: &Address,
        height: u64,
        model: ModelDefinition,
        params: WeightsBiases<M, F>,
        payment_address: Address,
    ) -> Result<(u64, Gas), ContractError> {
        self.require_phase("submit_model", ContractPhase::TrainingRevealed)?;
        let deadline = self.deadlines.submission.unwrap();
        if height > deadline {
            return Err(ContractError::WindowClosed {
                window: "submission",
                deadline,
                height,
            });
        }
        if model != self.config.model_shape {
            return Err(ContractError::ShapeMismatch {
                reason: format!(
                    "declared layers {:?} but the contract expects {:?}",
                    model.layer_sizes(),
                    self.config.model_shape.layer_sizes()
                ),
            });
        }
        params
            .validate(&model)
            .map_err(|e| ContractError::ShapeMismatch {
                reason: e.to_string(),
            })?;
        // Stored payload: every parameter word, the declared shape, the
        // payment address, and the submitter address.
        let words = model.param_count() + model.layer_sizes().len() + 2;
        let gas = self.schedule.storage_gas(32 * words as u64);
        self.check_gas(gas)?;
        let id = self.submissions.len() as u64;
        self.submissions.push(Submission {
            id,
            model,
            params,
            payment_address,
            submitter: caller.clone(),
            submitted_at: height,
        });
        Ok((id, gas))
    }

    /// Scores one submission on the evaluation dataset: the testing data
    /// after a test reveal, or the training data once the reveal period
    /// has lapsed unrevealed (the fallback that keeps submitters payable).
    /// Anyone may call. Gas is one unit per fixed-point operation.
    pub fn evaluate_model(
        &mut self,
        chain: &ChainState,
        caller: &Address,
        submission_id: u64,
    ) -> Result<EvaluationOutcome<M, F>, ContractError> {
        let height = chain.height();
        let result = self.evaluate_inner(height, submission_id);
        match &result {
            Ok(outcome) => {
                self.record(height, "evaluate_model", caller, EventOutcome::Accepted, outcome.gas)
            }
            Err(e) => self.reject(height, "evaluate_model", caller, e),
        }
        result
    }

    fn evaluate_inner(
        &mut self,
        height: u64,
        submission_id: u64,
    ) -> Result<EvaluationOutcome<M, F>, ContractError> {
        let source = match self.phase {
            ContractPhase::TestRevealed => {
                let deadline = self.deadlines.evaluation.unwrap();
                if height > deadline {
                    return Err(ContractError::WindowClosed {
                        window: "evaluation",
                        deadline,
                        height,
                    });
                }
                EvalSource::Testing
            }
            ContractPhase::TrainingRevealed => {
                // Fallback: the test set was never revealed. Evaluation on
                // the training data opens once the reveal window lapses and
                // stays open for one evaluation period.
                let reveal_deadline = self.deadlines.test_reveal.unwrap();
                if height <= reveal_deadline {
                    return Err(ContractError::WindowNotOpen {
                        window: "evaluation",
                        height,
                    });
                }
                let deadline = reveal_deadline + self.config.evaluation_period;
                if height > deadline {
                    return Err(ContractError::WindowClosed {
                        window: "evaluation",
                        deadline,
                        height,
                    });
                }
                EvalSource::Training
            }
            phase => {
                return Err(ContractError::WrongPhase {
                    operation: "evaluate_model",
                    phase,
                })
            }
        };
        let submission = self
            .submissions
            .get(submission_id as usize)
            .ok_or(ContractError::UnknownSubmission { id: submission_id })?;
        if self.scores.contains_key(&submission_id) {
            return Err(ContractError::AlreadyEvaluated { id: submission_id });
        }
        let dataset = self.dataset_points(source);
        let evaluation = accuracy_counted(&submission.model, &submission.params, &dataset)
            .map_err(|e| ContractError::EvaluationFailed {
                reason: e.to_string(),
            })?;
        let gas = evaluation.ops.total() as Gas;
        self.check_gas(gas)?;
        let score = evaluation.score;
        self.scores.insert(submission_id, score.clone());
        self.eval_source_used = Some(source);
        // Strict improvement only: an equal score never displaces the
        // incumbent, so the first submitter of a solution keeps the win.
        let became_best = score >= self.config.min_accuracy
            && self
                .best
                .as_ref()
                .map(|b| score > b.score)
                .unwrap_or(true);
        if became_best {
            self.best = Some(Best {
                submission_id,
                score: score.clone(),
            });
        }
        Ok(EvaluationOutcome {
            submission_id,
            score,
            correct: evaluation.correct,
            total: evaluation.total,
            gas,
            became_best,
            dataset: source,
        })
    }

    /// Pays the escrow out exactly once after the evaluation window closes:
    /// to the best submission's payment address, or back to the organizer
    /// when no submission met the bar. Anyone may call.
    pub fn finalize_contract(
        &mut self,
        chain: &ChainState,
        caller: &Address,
    ) -> Result<Payout, ContractError> {
        let height = chain.height();
        let result = self.finalize_inner(height);
        match &result {
            Ok(_) => self.record(height, "finalize_contract", caller, EventOutcome::Accepted, 0),
            Err(e) => self.reject(height, "finalize_contract", caller, e),
        }
        result
    }

    fn finalize_inner(&mut self, height: u64) -> Result<Payout, ContractError> {
        let deadline = match self.phase {
            ContractPhase::TestRevealed => self.deadlines.evaluation.unwrap(),
            ContractPhase::TrainingRevealed => {
                self.deadlines.test_reveal.unwrap() + self.config.evaluation_period
            }
            phase => {
                return Err(ContractError::WrongPhase {
                    operation: "finalize_contract",
                    phase,
                })
            }
        };
        if height <= deadline {
            return Err(ContractError::WindowNotOpen {
                window: "finalize",
                height,
            });
        }
        let payout = match &self.best {
            Some(best) => {
                let recipient = self.submissions[best.submission_id as usize]
                    .payment_address
                    .clone();
                self.pay(PayoutKind::BestModelReward, recipient, height)
            }
            None => self.pay(PayoutKind::OrganizerRefund, self.organizer.clone(), height),
        };
        self.phase = ContractPhase::Finalized;
        Ok(payout)
    }

    /// Organizer-only escape hatch before any training data is revealed.
    pub fn cancel_contract(
        &mut self,
        chain: &ChainState,
        caller: &Address,
    ) -> Result<Payout, ContractError> {
        let height = chain.height();
        let result = self.cancel_inner(caller, height);
        match &result {
            Ok(_) => self.record(height, "cancel_contract", caller, EventOutcome::Accepted, 0),
            Err(e) => self.reject(height, "cancel_contract", caller, e),
        }
        result
    }

    fn cancel_inner(&mut self, caller: &Address, height: u64) -> Result<Payout, ContractError> {
        if !matches!(
            self.phase,
            ContractPhase::Init1Done | ContractPhase::Init2Done
        ) {
            return Err(ContractError::WrongPhase {
                operation: "cancel_contract",
                phase: self.phase,
            });
        }
        self.require_organizer("cancel_contract", caller)?;
        let refund = self.pay(PayoutKind::OrganizerRefund, self.organizer.clone(), height);
        self.phase = ContractPhase::Cancelled;
        Ok(refund)
    }

    pub fn get_training_index(&self) -> Result<&[usize], ContractError> {
        self.partition
            .as_ref()
            .map(|p| p.training_indexes.as_slice())
            .ok_or(ContractError::WrongPhase {
                operation: "get_training_index",
                phase: self.phase,
            })
    }

    pub fn get_testing_index(&self) -> Result<&[usize], ContractError> {
        self.partition
            .as_ref()
            .map(|p| p.testing_indexes.as_slice())
            .ok_or(ContractError::WrongPhase {
                operation: "get_testing_index",
                phase: self.phase,
            })
    }

    // ----- queries -----

    pub fn phase(&self) -> ContractPhase {
        self.phase
    }

    pub fn config(&self) -> &ContractConfig<M, F> {
        &self.config
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    pub fn organizer(&self) -> &Address {
        &self.organizer
    }

    pub fn escrow_balance(&self) -> u128 {
        self.escrow_balance
    }

    pub fn commitments(&self) -> &[Digest] {
        &self.commitments
    }

    pub fn submissions(&self) -> &[Submission<M, F>] {
        &self.submissions
    }

    pub fn score_of(&self, id: u64) -> Option<&FixedPoint<M, F>> {
        self.scores.get(&id)
    }

    pub fn scores(&self) -> &BTreeMap<u64, FixedPoint<M, F>> {
        &self.scores
    }

    pub fn best(&self) -> Option<(u64, &FixedPoint<M, F>)> {
        self.best.as_ref().map(|b| (b.submission_id, &b.score))
    }

    pub fn deadlines(&self) -> &Deadlines {
        &self.deadlines
    }

    pub fn payouts(&self) -> &[Payout] {
        &self.payouts
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    /// Dataset evaluation has used, or would use: the source actually
    /// consumed by an evaluate call if one happened, else whichever side
    /// has been revealed.
    pub fn evaluation_source(&self) -> Option<EvalSource> {
        self.eval_source_used.or({
            if !self.revealed_testing.is_empty() {
                Some(EvalSource::Testing)
            } else if !self.revealed_training.is_empty() {
                Some(EvalSource::Training)
            } else {
                None
            }
        })
    }

    /// Gas a single transaction evaluating every submission in one call
    /// would need — the design this contract's per-model evaluation exists
    /// to avoid. None until a dataset is available.
    pub fn hypothetical_evaluate_all_gas(&self) -> Option<Gas> {
        let source = self.evaluation_source()?;
        let points = self.dataset_points(source).len() as u128;
        let total = self
            .submissions
            .iter()
            .map(|s| {
                let per_point: usize = s
                    .model
                    .layer_sizes()
                    .windows(2)
                    .map(|w| 2 * w[0] * w[1])
                    .sum();
                per_point as u128 * points
            })
            .sum();
        Some(total)
    }

    /// Escrow plus everything paid out always equals the reward, and a
    /// terminal phase has exactly one payout while a live one has none.
    pub fn conservation_holds(&self) -> bool {
        let paid: u128 = self.payouts.iter().map(|p| p.amount).sum();
        self.escrow_balance + paid == self.config.reward
            && (self.phase.is_terminal() == (self.payouts.len() == 1))
    }

    // ----- internals -----

    fn dataset_points(&self, source: EvalSource) -> Vec<DataPoint> {
        let groups = match source {
            EvalSource::Training => &self.revealed_training,
            EvalSource::Testing => &self.revealed_testing,
        };
        groups
            .values()
            .flat_map(|(group, _)| group.points.iter().cloned())
            .collect()
    }

    fn pay(&mut self, kind: PayoutKind, recipient: Address, height: u64) -> Payout {
        let payout = Payout {
            recipient,
            amount: self.escrow_balance,
            kind,
            height,
        };
        self.escrow_balance = 0;
        self.payouts.push(payout.clone());
        payout
    }

    fn check_gas(&self, needed: Gas) -> Result<(), ContractError> {
        if needed > self.schedule.gas_limit {
            return Err(ContractError::GasLimitExceeded {
                needed,
                limit: self.schedule.gas_limit,
            });
        }
        Ok(())
    }

    fn require_phase(
        &self,
        operation: &'static str,
        expected: ContractPhase,
    ) -> Result<(), ContractError> {
        if self.phase != expected {
            return Err(ContractError::WrongPhase {
                operation,
                phase: self.phase,
            });
        }
        Ok(())
    }

    fn require_organizer(
        &self,
        operation: &'static str,
        caller: &Address,
    ) -> Result<(), ContractError> {
        if caller != &self.organizer {
            return Err(ContractError::NotOrganizer { operation });
        }
        Ok(())
    }

    fn record(
        &mut self,
        height: u64,
        operation: &'static str,
        caller: &Address,
        outcome: EventOutcome,
        gas: Gas,
    ) {
        self.events.push(EventRecord {
            height,
            operation,
            caller: caller.clone(),
            outcome,
            gas,
        });
    }

    fn reject(
        &mut self,
        height: u64,
        operation: &'static str,
        caller: &Address,
        error: &ContractError,
    ) {
        self.record(
            height,
            operation,
            caller,
            EventOutcome::Rejected {
                reason: error.to_string(),
            },
            0,
        );
    }
}
