//! Executes a prepared scenario: mines the chain up to each scheduled
//! height (letting a grinding miner regenerate the block that feeds the
//! partition draw), issues the scheduled contract calls in order, checks
//! fund conservation after every step, and assembles the run report.
//!
//! Contract-level rejections are not runner errors — they land in the
//! event log as rejected transactions, which is exactly what the threat
//! scenarios are built to show.

use super::config::{ActorBehavior, ActorSpec, PreparedScenario, ScenarioAction, ScheduleEntry};
use super::ScenarioError;
use crate::chain::{AdversarialOutcome, ChainState};
use crate::contract::{ContractState, Reveal};
use crate::hashing::{hash_data_group, Digest};
use crate::partition::select_from_hashes;
use crate::report::RunReport;
use crate::Address;

pub fn run_scenario(prepared: &PreparedScenario) -> Result<RunReport, ScenarioError> {
    let mut chain = ChainState::new(prepared.config.seed);
    let mut contract: Option<ContractState<i128>> = None;
    let mut grind_outcome: Option<AdversarialOutcome> = None;

    let commitments: Vec<Digest> = prepared
        .groups
        .iter()
        .zip(&prepared.nonces)
        .map(|(group, nonce)| hash_data_group(group, nonce))
        .collect::<Result<_, _>>()
        .map_err(|e| ScenarioError::invalid("dataset", e.to_string()))?;

    // The partition draw at the init2 height reads the head block first,
    // so that is the block a grinding miner regenerates.
    let grind_height = prepared.grinder().and_then(|_| {
        prepared
            .config
            .schedule
            .iter()
            .find(|e| e.action == ScenarioAction::Init2)
            .map(|e| e.height)
    });

    for entry in &prepared.config.schedule {
        while chain.height() < entry.height {
            let next_height = chain.height() + 1;
            if Some(next_height) == grind_height {
                let grinder = prepared.grinder().expect("grind_height implies a grinder");
                let (_, outcome) = grind_block(&mut chain, grinder, prepared)?;
                grind_outcome = Some(outcome);
            } else {
                chain.mine_block();
            }
            if let Some(c) = &contract {
                if !c.conservation_holds() {
                    return Err(ScenarioError::ConservationViolated {
                        height: chain.height(),
                    });
                }
            }
        }
        execute(entry, prepared, &chain, &mut contract, &commitments)?;
        if let Some(c) = &contract {
            if !c.conservation_holds() {
                return Err(ScenarioError::ConservationViolated {
                    height: chain.height(),
                });
            }
        }
    }

    let contract = contract.ok_or_else(|| {
        ScenarioError::invalid("schedule", "the run never created the contract")
    })?;
    let mut report = RunReport::from_contract(
        &prepared.config.name,
        prepared.config.seed,
        &chain,
        &contract,
    );
    report.grind = grind_outcome;
    Ok(report)
}

/// Mines one block adversarially: the miner probes each candidate hash by
/// simulating the partition draw it would lead to, and publishes the first
/// candidate that keeps every forbidden group out of the testing set.
fn grind_block(
    chain: &mut ChainState,
    grinder: &ActorSpec,
    prepared: &PreparedScenario,
) -> Result<(crate::chain::Block, AdversarialOutcome), ScenarioError> {
    let group_count = prepared.groups.len();
    let training_count = (prepared.contract_config.training_fraction
        * num_rational::Ratio::from_integer(group_count as u64))
    .to_integer() as usize;
    let forbidden = grinder
        .forbid_testing
        .as_ref()
        .expect("validated: grinders carry forbid_testing");
    let candidates = grinder
        .candidates
        .expect("validated: grinders carry candidates");
    // The candidate block becomes the head the draw starts from; the
    // remaining draws read the blocks below it.
    let at_block = chain.height();
    let mut earlier: Vec<Digest> = Vec::with_capacity(training_count.saturating_sub(1));
    for t in 1..training_count as u64 {
        if t > at_block {
            break;
        }
        earlier.push(chain.blockhash(at_block - t)?);
    }
    let outcome = chain.mine_block_adversarial(candidates, |candidate| {
        if earlier.len() + 1 != training_count {
            return false; // not enough history to probe; publish honestly
        }
        let mut draws = Vec::with_capacity(training_count);
        draws.push(*candidate);
        draws.extend(earlier.iter().copied());
        match select_from_hashes(group_count, training_count, &draws) {
            Ok(partition) => forbidden
                .iter()
                .all(|index| !partition.testing_indexes.contains(index)),
            Err(_) => false,
        }
    })?;
    Ok(outcome)
}

fn execute(
    entry: &ScheduleEntry,
    prepared: &PreparedScenario,
    chain: &ChainState,
    contract: &mut Option<ContractState<i128>>,
    commitments: &[Digest],
) -> Result<(), ScenarioError> {
    let caller = Address::from(entry.actor.as_str());
    match entry.action {
        ScenarioAction::Init1 => {
            if contract.is_some() {
                return Err(ScenarioError::invalid(
                    "schedule",
                    "init1 scheduled twice".to_string(),
                ));
            }
            let (state, _) = ContractState::init1(
                chain,
                prepared.gas_schedule.clone(),
                caller,
                prepared.contract_config.clone(),
                commitments.to_vec(),
                prepared.contract_config.reward,
            )?;
            *contract = Some(state);
            Ok(())
        }
        action => {
            let state = contract.as_mut().ok_or_else(|| {
                ScenarioError::invalid(
                    "schedule",
                    format!("{action:?} scheduled before init1 created the contract"),
                )
            })?;
            match action {
                ScenarioAction::Init1 => unreachable!("handled above"),
                ScenarioAction::Init2 => {
                    let _ = state.init2(chain, &caller);
                }
                ScenarioAction::Init3 => {
                    let reveals = reveals_for(state, prepared, true, None);
                    let _ = state.init3(chain, &caller, reveals);
                }
                ScenarioAction::Submit => {
                    let actor = prepared
                        .actor(&entry.actor)
                        .expect("validated: schedule actors exist");
                    let params = prepared
                        .actor_params
                        .get(&entry.actor)
                        .expect("validated: submitters have parameters")
                        .clone();
                    let payment = Address::from(
                        actor
                            .payment_address
                            .as_deref()
                            .unwrap_or(entry.actor.as_str()),
                    );
                    let _ =
                        state.submit_model(chain, &caller, prepared.model.clone(), params, payment);
                }
                ScenarioAction::RevealTest => {
                    let organizer = prepared.organizer();
                    let tamper = if organizer.behavior == ActorBehavior::TamperReveal {
                        Some(organizer)
                    } else {
                        None
                    };
                    let reveals = reveals_for(state, prepared, false, tamper.map(|_| ()));
                    let _ = state.reveal_test_data(chain, &caller, reveals);
                }
                ScenarioAction::Evaluate => {
                    let ids: Vec<u64> = match entry.submission {
                        Some(id) => vec![id],
                        None => state
                            .submissions()
                            .iter()
                            .map(|s| s.id)
                            .filter(|id| state.score_of(*id).is_none())
                            .collect(),
                    };
                    for id in ids {
                        let _ = state.evaluate_model(chain, &caller, id);
                    }
                }
                ScenarioAction::Finalize => {
                    let _ = state.finalize_contract(chain, &caller);
                }
                ScenarioAction::Cancel => {
                    let _ = state.cancel_contract(chain, &caller);
                }
            }
            Ok(())
        }
    }
}

/// Builds the reveal list for the training or testing side. A tampering
/// organizer nudges the first feature of the first point of the first
/// testing group by one — enough to break its digest.
fn reveals_for(
    state: &ContractState<i128>,
    prepared: &PreparedScenario,
    training: bool,
    tamper: Option<()>,
) -> Vec<Reveal> {
    let indexes = if training {
        state.get_training_index()
    } else {
        state.get_testing_index()
    };
    // Without a partition the contract rejects the call anyway; an empty
    // reveal keeps the rejection on the contract's books.
    let Ok(indexes) = indexes else {
        return Vec::new();
    };
    let mut sorted = indexes.to_vec();
    sorted.sort_unstable();
    let mut reveals: Vec<Reveal> = sorted
        .into_iter()
        .map(|index| Reveal {
            index,
            group: prepared.groups[index].clone(),
            nonce: prepared.nonces[index],
        })
        .collect();
    if tamper.is_some() {
        if let Some(first) = reveals.first_mut() {
            if let Some(point) = first.group.points.first_mut() {
                if let Some(feature) = point.inputs.first_mut() {
                    *feature += 1;
                }
            }
        }
    }
    reveals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{ContractPhase, EvalSource, PayoutKind};
    use std::path::Path;

    fn scenario(text: &str) -> PreparedScenario {
        let config = super::super::ScenarioConfig::from_toml(text, "test").unwrap();
        PreparedScenario::prepare(config, Path::new(".")).unwrap()
    }

    /// All-zero labels: any all-zero model scores 1.0. A 25-point dataset
    /// in 5 groups, 4/5 training split.
    fn base_toml() -> String {
        r#"
version = 1
name = "runner-test"
seed = 21

[contract]
reward = 5000
submission_period = 3
evaluation_period = 4
test_reveal_period = 3
min_accuracy = "0.5"
model_shape = [2, 4, 2]

[dataset]
inline = [
  [0, 0, 0], [0, 1, 0], [0, 2, 0], [0, 3, 0], [0, 4, 0],
  [1, 0, 0], [1, 1, 0], [1, 2, 0], [1, 3, 0], [1, 4, 0],
  [2, 0, 0], [2, 1, 0], [2, 2, 0], [2, 3, 0], [2, 4, 0],
  [3, 0, 0], [3, 1, 0], [3, 2, 0], [3, 3, 0], [3, 4, 0],
  [4, 0, 0], [4, 1, 0], [4, 2, 0], [4, 3, 0], [4, 4, 0],
]

[[actors]]
name = "org"
role = "organizer"

[[actors]]
name = "alice"
role = "submitter"
random_model_seed = 5
payment_address = "alice-payout"

[[schedule]]
height = 6
actor = "org"
action = "init1"

[[schedule]]
height = 7
actor = "org"
action = "init2"

[[schedule]]
height = 8
actor = "org"
action = "init3"

[[schedule]]
height = 8
actor = "alice"
action = "submit"

[[schedule]]
height = 12
actor = "org"
action = "reveal_test"

[[schedule]]
height = 12
actor = "alice"
action = "evaluate"

[[schedule]]
height = 17
actor = "alice"
action = "finalize"
"#
        .to_string()
    }

    #[test]
    fn full_run_reaches_finalized() {
        let prepared = scenario(&base_toml());
        let report = run_scenario(&prepared).unwrap();
        assert_eq!(report.final_phase, ContractPhase::Finalized);
        assert_eq!(report.final_height, 17);
        assert!(report.conservation_ok);
        assert_eq!(report.evaluation_dataset, Some(EvalSource::Testing));
        // Random params on this trivial dataset may or may not pass the
        // bar, but a payout always happens at finalize.
        let payout = report.payout.expect("finalize always pays someone");
        assert_eq!(payout.amount, 5000);
        assert!(report.grind.is_none());
    }

    #[test]
    fn replays_are_byte_identical() {
        let prepared = scenario(&base_toml());
        let a = run_scenario(&prepared).unwrap();
        let b = run_scenario(&prepared).unwrap();
        assert_eq!(a.render_text(), b.render_text());
        assert_eq!(a.render_records(), b.render_records());
    }

    #[test]
    fn withheld_reveal_falls_back_to_training() {
        let toml = base_toml()
            .replace(
                "name = \"org\"\nrole = \"organizer\"",
                "name = \"org\"\nrole = \"organizer\"\nbehavior = \"withhold_test_reveal\"",
            )
            .replace(
                "[[schedule]]\nheight = 12\nactor = \"org\"\naction = \"reveal_test\"\n\n",
                "",
            )
            .replace(
                "height = 12\nactor = \"alice\"\naction = \"evaluate\"",
                "height = 15\nactor = \"alice\"\naction = \"evaluate\"",
            )
            .replace(
                "height = 17\nactor = \"alice\"\naction = \"finalize\"",
                "height = 19\nactor = \"alice\"\naction = \"finalize\"",
            );
        let prepared = scenario(&toml);
        let report = run_scenario(&prepared).unwrap();
        assert_eq!(report.final_phase, ContractPhase::Finalized);
        assert_eq!(report.evaluation_dataset, Some(EvalSource::Training));
        assert!(report.conservation_ok);
    }

    #[test]
    fn tampered_reveal_is_rejected_on_the_books() {
        // The rejected reveal leaves the fallback window in force, which
        // closes at height 18; finalize must come after that.
        let toml = base_toml()
            .replace(
                "name = \"org\"\nrole = \"organizer\"",
                "name = \"org\"\nrole = \"organizer\"\nbehavior = \"tamper_reveal\"",
            )
            .replace(
                "height = 17\nactor = \"alice\"\naction = \"finalize\"",
                "height = 19\nactor = \"alice\"\naction = \"finalize\"",
            );
        let prepared = scenario(&toml);
        let report = run_scenario(&prepared).unwrap();
        let tampered = report
            .events
            .iter()
            .find(|e| e.operation == "reveal_test_data")
            .expect("reveal attempt logged");
        let reason = match &tampered.outcome {
            crate::contract::EventOutcome::Rejected { reason } => reason,
            other => panic!("tampered reveal should be rejected, got {other:?}"),
        };
        assert!(reason.contains("does not match its commitment"), "{reason}");
        // The run then times out the reveal window; evaluation at height 12
        // was too early for the fallback, so no score landed and the
        // organizer is refunded at finalize.
        assert_eq!(report.final_phase, ContractPhase::Finalized);
        let payout = report.payout.unwrap();
        assert_eq!(payout.kind, PayoutKind::OrganizerRefund);
        assert!(report.conservation_ok);
    }

    #[test]
    fn grinding_miner_steers_the_testing_set() {
        // Find a seed where an 8-candidate grind flips the testing pick
        // away from group 0 while the honest chain would have chosen it.
        let toml_for = |seed: u64, grind: bool| {
            let mut t = base_toml().replace("seed = 21", &format!("seed = {seed}"));
            if grind {
                t = t.replace(
                    "[[schedule]]\nheight = 6",
                    "[[actors]]\nname = \"miner\"\nrole = \"miner\"\nbehavior = \"block_grinding\"\ncandidates = 8\nforbid_testing = [0]\n\n[[schedule]]\nheight = 6",
                );
            }
            t
        };
        let mut demonstrated = false;
        for seed in 0..40 {
            let honest = run_scenario(&scenario(&toml_for(seed, false))).unwrap();
            if honest.testing_indexes != vec![0] {
                continue;
            }
            let ground = run_scenario(&scenario(&toml_for(seed, true))).unwrap();
            let grind = ground.grind.expect("grinder ran");
            assert!(grind.examined >= 1);
            if grind.satisfied {
                assert!(!ground.testing_indexes.contains(&0));
                demonstrated = true;
                break;
            }
        }
        assert!(
            demonstrated,
            "no seed in 0..40 let an 8-candidate grind dodge testing=[0]"
        );
    }

    #[test]
    fn rejected_calls_become_events_not_errors() {
        // Submit before init3 by scheduling it at the init2 height.
        let toml = base_toml().replace(
            "[[schedule]]\nheight = 8\nactor = \"org\"\naction = \"init3\"",
            "[[schedule]]\nheight = 7\nactor = \"alice\"\naction = \"submit\"\n\n[[schedule]]\nheight = 8\nactor = \"org\"\naction = \"init3\"",
        );
        let prepared = scenario(&toml);
        let report = run_scenario(&prepared).unwrap();
        let rejected = report
            .events
            .iter()
            .filter(|e| {
                e.operation == "submit_model"
                    && matches!(e.outcome, crate::contract::EventOutcome::Rejected { .. })
            })
            .count();
        assert_eq!(rejected, 1);
        assert_eq!(report.submissions.len(), 1);
        assert_eq!(report.final_phase, ContractPhase::Finalized);
    }

    #[test]
    fn evaluate_without_id_sweeps_all_submissions() {
        let toml = base_toml().replace(
            "[[actors]]\nname = \"alice\"\nrole = \"submitter\"\nrandom_model_seed = 5\npayment_address = \"alice-payout\"",
            "[[actors]]\nname = \"alice\"\nrole = \"submitter\"\nrandom_model_seed = 5\npayment_address = \"alice-payout\"\n\n[[actors]]\nname = \"bob\"\nrole = \"submitter\"\nrandom_model_seed = 6",
        ).replace(
            "[[schedule]]\nheight = 8\nactor = \"alice\"\naction = \"submit\"",
            "[[schedule]]\nheight = 8\nactor = \"alice\"\naction = \"submit\"\n\n[[schedule]]\nheight = 8\nactor = \"bob\"\naction = \"submit\"",
        );
        let prepared = scenario(&toml);
        let report = run_scenario(&prepared).unwrap();
        assert_eq!(report.submissions.len(), 2);
        assert!(report.submissions.iter().all(|s| s.score_text.is_some()));
    }
}
