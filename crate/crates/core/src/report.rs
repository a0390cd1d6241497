//! Report construction and rendering: the manipulation-probability table,
//! the storage-cost table, and the full scenario run report. Every
//! renderer is byte-deterministic — two identical inputs produce identical
//! text — and each report has both a human-readable aligned-text form and
//! a line-delimited JSON records form.

use std::collections::BTreeSet;

use num_rational::Ratio;
use serde_json::json;

use crate::chain::{AdversarialOutcome, ChainError, ChainState, Gas, GasSchedule, StorageCostReport};
use crate::contract::{
    ContractPhase, ContractState, EvalSource, EventOutcome, EventRecord, Payout,
};
use crate::fixed::Mantissa;
use crate::partition::{
    complement_probability, exact_ideal_probability, monte_carlo_ideal_probability, percent_text,
    AttemptWindows, PartitionConfig, PartitionError,
};

/// Significant digits used for the exact-probability columns.
const PROBABILITY_SIG_DIGITS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct McColumns {
    pub estimate_percent: String,
    pub three_sigma_percent: String,
    pub successes: u64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityRow {
    pub group_count: usize,
    pub training_count: usize,
    /// Attempts × single-attempt probability (a union bound, may cap the
    /// scale at 100%).
    pub formula_percent: String,
    /// Complement-rule value `1 - (1 - 1/C(G,k))^L`.
    pub exact_percent: String,
    pub mc: Option<McColumns>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    pub training_fraction: Ratio<u64>,
    pub block_limit: u64,
    pub trials: u64,
    pub seed: u64,
    pub rows: Vec<ProbabilityRow>,
}

/// Builds the manipulation-probability table: for each group count, the
/// chance that a miner with `block_limit` attempts lands a chosen training
/// partition. `trials = 0` skips the Monte Carlo columns.
pub fn probability_table(
    group_counts: &[usize],
    training_fraction: Ratio<u64>,
    block_limit: u64,
    trials: u64,
    seed: u64,
) -> Result<ProbabilityTable, PartitionError> {
    let mut rows = Vec::with_capacity(group_counts.len());
    for (i, &group_count) in group_counts.iter().enumerate() {
        let config = PartitionConfig::new(group_count, training_fraction, block_limit)?;
        let formula = exact_ideal_probability(&config)?;
        let exact = complement_probability(&config)?;
        let mc = if trials > 0 {
            // By symmetry every training set is equally likely; use the
            // first k indexes as the adversary's target.
            let target: BTreeSet<usize> = (0..config.training_count()).collect();
            let estimate = monte_carlo_ideal_probability(
                &config,
                &target,
                trials,
                seed.wrapping_add(i as u64),
                AttemptWindows::Overlapping,
            )?;
            Some(McColumns {
                estimate_percent: format!("{:.6}", estimate.estimate * 100.0),
                three_sigma_percent: format!("{:.6}", estimate.standard_error * 3.0 * 100.0),
                successes: estimate.successes,
                trials: estimate.trials,
            })
        } else {
            None
        };
        rows.push(ProbabilityRow {
            group_count,
            training_count: config.training_count(),
            formula_percent: percent_text(&formula, PROBABILITY_SIG_DIGITS),
            exact_percent: percent_text(&exact, PROBABILITY_SIG_DIGITS),
            mc,
        });
    }
    Ok(ProbabilityTable {
        training_fraction,
        block_limit,
        trials,
        seed,
        rows,
    })
}

impl ProbabilityTable {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "manipulation probability: training fraction {}, attempt window {} blocks",
            self.training_fraction, self.block_limit
        );
        if self.trials > 0 {
            out.push_str(&format!(", {} trials, seed {}", self.trials, self.seed));
        }
        out.push_str("\n\n");
        let mut headers = vec!["groups", "train", "formula", "exact"];
        if self.trials > 0 {
            headers.extend(["mc-estimate", "mc-3sigma", "successes"]);
        }
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                let mut cells = vec![
                    row.group_count.to_string(),
                    row.training_count.to_string(),
                    row.formula_percent.clone(),
                    row.exact_percent.clone(),
                ];
                if let Some(mc) = &row.mc {
                    cells.push(format!("{}%", mc.estimate_percent));
                    cells.push(format!("±{}%", mc.three_sigma_percent));
                    cells.push(mc.successes.to_string());
                }
                cells
            })
            .collect();
        out.push_str(&render_table(&headers, &rows));
        out
    }

    pub fn render_records(&self) -> String {
        let mut lines = vec![json!({
            "record": "probability_meta",
            "training_fraction": self.training_fraction.to_string(),
            "block_limit": self.block_limit,
            "trials": self.trials,
            "seed": self.seed,
        })
        .to_string()];
        for row in &self.rows {
            let mut value = json!({
                "record": "probability",
                "groups": row.group_count,
                "training": row.training_count,
                "formula_percent": row.formula_percent,
                "exact_percent": row.exact_percent,
            });
            if let Some(mc) = &row.mc {
                let map = value.as_object_mut().expect("object literal");
                map.insert("mc_estimate_percent".into(), json!(mc.estimate_percent));
                map.insert("mc_three_sigma_percent".into(), json!(mc.three_sigma_percent));
                map.insert("mc_successes".into(), json!(mc.successes));
                map.insert("mc_trials".into(), json!(mc.trials));
            }
            lines.push(value.to_string());
        }
        lines.join("\n") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasReport {
    pub schedule: GasSchedule,
    pub rows: Vec<StorageCostReport>,
}

/// Per-payload-size storage costs under a gas schedule.
pub fn gas_report(schedule: &GasSchedule, payload_sizes: &[u64]) -> Result<GasReport, ChainError> {
    schedule.validate()?;
    Ok(GasReport {
        schedule: schedule.clone(),
        rows: payload_sizes
            .iter()
            .map(|&bytes| schedule.storage_cost_report(bytes))
            .collect(),
    })
}

impl GasReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "storage cost: {} gas per KiB, gas price {} gwei, 1 ETH = {} USD\n\n",
            self.schedule.storage_gas_per_kib, self.schedule.gas_price_gwei, self.schedule.eth_usd
        );
        let headers = ["bytes", "gas", "ether", "usd"];
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                vec![
                    row.payload_bytes.to_string(),
                    row.gas.to_string(),
                    row.ether_text.clone(),
                    row.usd_text.clone(),
                ]
            })
            .collect();
        out.push_str(&render_table(&headers, &rows));
        out
    }

    pub fn render_records(&self) -> String {
        let mut lines = vec![json!({
            "record": "gas_meta",
            "storage_gas_per_kib": self.schedule.storage_gas_per_kib,
            "gas_price_gwei": self.schedule.gas_price_gwei,
            "eth_usd": self.schedule.eth_usd,
        })
        .to_string()];
        for row in &self.rows {
            lines.push(
                json!({
                    "record": "gas",
                    "payload_bytes": row.payload_bytes,
                    "gas": row.gas,
                    "wei": row.wei,
                    "ether": row.ether_text,
                    "usd": row.usd_text,
                })
                .to_string(),
            );
        }
        lines.join("\n") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionSummary {
    pub id: u64,
    pub submitter: String,
    pub payment_address: String,
    pub score_text: Option<String>,
    pub is_best: bool,
}

/// Everything a finished scenario run reports: the partition, the
/// submission scoreboard, the payout, gas totals, and the complete event
/// log. Scores are pre-rendered decimal text so the report carries no
/// scalar-type parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario_name: String,
    pub seed: u64,
    pub final_height: u64,
    pub final_phase: ContractPhase,
    pub training_indexes: Vec<usize>,
    pub testing_indexes: Vec<usize>,
    pub evaluation_dataset: Option<EvalSource>,
    pub submissions: Vec<SubmissionSummary>,
    pub best: Option<(u64, String)>,
    pub payout: Option<Payout>,
    pub reward: u128,
    pub escrow_after: u128,
    pub conservation_ok: bool,
    pub accepted_gas_total: Gas,
    pub hypothetical_evaluate_all_gas: Option<Gas>,
    pub gas_limit: Gas,
    /// How the adversarial miner's block grind resolved, when the scenario
    /// had one.
    pub grind: Option<AdversarialOutcome>,
    pub events: Vec<EventRecord>,
}

impl RunReport {
    pub fn from_contract<M: Mantissa, const F: u32>(
        scenario_name: &str,
        seed: u64,
        chain: &ChainState,
        contract: &ContractState<M, F>,
    ) -> Self {
        let best = contract
            .best()
            .map(|(id, score)| (id, score.to_decimal(6)));
        let submissions = contract
            .submissions()
            .iter()
            .map(|s| SubmissionSummary {
                id: s.id,
                submitter: s.submitter.to_string(),
                payment_address: s.payment_address.to_string(),
                score_text: contract.score_of(s.id).map(|score| score.to_decimal(6)),
                is_best: best.as_ref().map(|(id, _)| *id == s.id).unwrap_or(false),
            })
            .collect();
        let accepted_gas_total = contract
            .events()
            .iter()
            .filter(|e| matches!(e.outcome, EventOutcome::Accepted))
            .map(|e| e.gas)
            .sum();
        RunReport {
            scenario_name: scenario_name.to_string(),
            seed,
            final_height: chain.height(),
            final_phase: contract.phase(),
            training_indexes: contract
                .get_training_index()
                .map(|s| s.to_vec())
                .unwrap_or_default(),
            testing_indexes: contract
                .get_testing_index()
                .map(|s| s.to_vec())
                .unwrap_or_default(),
            evaluation_dataset: contract.evaluation_source(),
            submissions,
            best,
            payout: contract.payouts().first().cloned(),
            reward: contract.config().reward,
            escrow_after: contract.escrow_balance(),
            conservation_ok: contract.conservation_holds(),
            accepted_gas_total,
            hypothetical_evaluate_all_gas: contract.hypothetical_evaluate_all_gas(),
            gas_limit: contract.schedule().gas_limit,
            grind: None,
            events: contract.events().to_vec(),
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "scenario: {} (seed {})\nfinal height: {}\nfinal phase: {}\n",
            self.scenario_name, self.seed, self.final_height, self.final_phase
        ));
        out.push_str(&format!(
            "partition: training {:?} / testing {:?}\n",
            self.training_indexes, self.testing_indexes
        ));
        match self.evaluation_dataset {
            Some(source) => out.push_str(&format!("evaluation dataset: {source}\n")),
            None => out.push_str("evaluation dataset: none\n"),
        }
        out.push('\n');
        if self.submissions.is_empty() {
            out.push_str("submissions: none\n");
        } else {
            out.push_str("submissions:\n");
            let headers = ["id", "submitter", "payment", "score", "best"];
            let rows: Vec<Vec<String>> = self
                .submissions
                .iter()
                .map(|s| {
                    vec![
                        s.id.to_string(),
                        s.submitter.clone(),
                        s.payment_address.clone(),
                        s.score_text.clone().unwrap_or_else(|| "-".to_string()),
                        if s.is_best { "*" } else { "" }.to_string(),
                    ]
                })
                .collect();
            out.push_str(&render_table(&headers, &rows));
        }
        out.push('\n');
        match &self.payout {
            Some(payout) => out.push_str(&format!(
                "payout: {} -> {} amount {} at height {}\n",
                payout.kind, payout.recipient, payout.amount, payout.height
            )),
            None => out.push_str("payout: none\n"),
        }
        out.push_str(&format!(
            "escrow after: {} of reward {} (conservation {})\n",
            self.escrow_after,
            self.reward,
            if self.conservation_ok { "ok" } else { "VIOLATED" }
        ));
        out.push_str(&format!(
            "gas: accepted transactions total {}",
            self.accepted_gas_total
        ));
        match self.hypothetical_evaluate_all_gas {
            Some(gas) => out.push_str(&format!(
                "; hypothetical single-tx evaluate-all {} ({} the {} limit)\n",
                gas,
                if gas > self.gas_limit { "EXCEEDS" } else { "within" },
                self.gas_limit
            )),
            None => out.push('\n'),
        }
        if let Some(grind) = &self.grind {
            out.push_str(&format!(
                "miner grinding: examined {} candidates, published #{}, goal {}\n",
                grind.examined,
                grind.chosen,
                if grind.satisfied { "satisfied" } else { "not satisfied" }
            ));
        }
        out.push_str("\nevents:\n");
        for event in &self.events {
            out.push_str(&format!("  {event}\n"));
        }
        out
    }

    pub fn render_records(&self) -> String {
        let mut lines = vec![json!({
            "record": "run_meta",
            "scenario": self.scenario_name,
            "seed": self.seed,
            "final_height": self.final_height,
            "final_phase": self.final_phase.to_string(),
            "evaluation_dataset": self.evaluation_dataset.map(|s| s.to_string()),
            "reward": self.reward,
            "escrow_after": self.escrow_after,
            "conservation_ok": self.conservation_ok,
            "accepted_gas_total": self.accepted_gas_total,
            "hypothetical_evaluate_all_gas": self.hypothetical_evaluate_all_gas,
            "gas_limit": self.gas_limit,
        })
        .to_string()];
        lines.push(
            json!({
                "record": "partition",
                "training": self.training_indexes,
                "testing": self.testing_indexes,
            })
            .to_string(),
        );
        for s in &self.submissions {
            lines.push(
                json!({
                    "record": "submission",
                    "id": s.id,
                    "submitter": s.submitter,
                    "payment_address": s.payment_address,
                    "score": s.score_text,
                    "best": s.is_best,
                })
                .to_string(),
            );
        }
        if let Some(payout) = &self.payout {
            lines.push(
                json!({
                    "record": "payout",
                    "kind": payout.kind.to_string(),
                    "recipient": payout.recipient.to_string(),
                    "amount": payout.amount,
                    "height": payout.height,
                })
                .to_string(),
            );
        }
        if let Some(grind) = &self.grind {
            lines.push(
                json!({
                    "record": "grind",
                    "examined": grind.examined,
                    "chosen": grind.chosen,
                    "satisfied": grind.satisfied,
                })
                .to_string(),
            );
        }
        for event in &self.events {
            let outcome = match &event.outcome {
                EventOutcome::Accepted => "accepted".to_string(),
                EventOutcome::Rejected { reason } => format!("rejected: {reason}"),
            };
            lines.push(
                json!({
                    "record": "event",
                    "height": event.height,
                    "operation": event.operation,
                    "caller": event.caller.to_string(),
                    "outcome": outcome,
                    "gas": event.gas,
                })
                .to_string(),
            );
        }
        lines.join("\n") + "\n"
    }
}

/// Right-aligned fixed-width table with two-space gutters.
fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let render_row = |cells: &[String]| -> String {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let pad = widths[i].saturating_sub(cell.chars().count());
            line.push_str(&" ".repeat(pad));
            line.push_str(cell);
        }
        line.push('\n');
        line
    };
    let mut out = render_row(
        &headers
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<String>>(),
    );
    for row in rows {
        out.push_str(&render_row(row));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{ContractConfig, Reveal};
    use crate::hashing::{hash_data_group, DataGroup, DataPoint, Nonce};
    use crate::nn::{ModelDefinition, WeightsBiases};
    use crate::{Address, Fp};

    #[test]
    fn probability_table_matches_frozen_columns() {
        let table = probability_table(
            &[5, 10, 15, 20, 25, 30],
            Ratio::new(4, 5),
            5,
            0,
            0,
        )
        .unwrap();
        let formulas: Vec<&str> = table
            .rows
            .iter()
            .map(|r| r.formula_percent.as_str())
            .collect();
        assert_eq!(
            formulas,
            vec![
                "100%",
                "11.11111111%",
                "1.098901099%",
                "0.1031991744%",
                "0.009410878976%",
                "0.0008420698076%",
            ]
        );
        // The complement value for G = 5 is exactly 2101/3125 = 67.232%.
        assert_eq!(table.rows[0].exact_percent, "67.232%");
        assert!(table.rows.iter().all(|r| r.mc.is_none()));
    }

    #[test]
    fn single_attempt_collapses_formula_and_exact() {
        let table = probability_table(&[5, 10, 20], Ratio::new(4, 5), 1, 0, 0).unwrap();
        for row in &table.rows {
            assert_eq!(row.formula_percent, row.exact_percent);
        }
    }

    #[test]
    fn monte_carlo_columns_present_and_deterministic() {
        let table = probability_table(&[5], Ratio::new(4, 5), 2, 4000, 7).unwrap();
        let mc = table.rows[0].mc.as_ref().unwrap();
        assert_eq!(mc.trials, 4000);
        // complement for G=5, L=2 is 1 - (4/5)^2 = 0.36; 4000 trials keep
        // the estimate within 3 sigma of that with overwhelming odds.
        let estimate: f64 = mc.estimate_percent.parse().unwrap();
        let three_sigma: f64 = mc.three_sigma_percent.parse().unwrap();
        assert!((estimate - 36.0).abs() < three_sigma * 1.5 + 1e-9);
        let again = probability_table(&[5], Ratio::new(4, 5), 2, 4000, 7).unwrap();
        assert_eq!(table.render_text(), again.render_text());
        assert_eq!(table.render_records(), again.render_records());
    }

    #[test]
    fn probability_renderings_are_well_formed() {
        let table = probability_table(&[5, 10], Ratio::new(4, 5), 5, 200, 1).unwrap();
        let text = table.render_text();
        assert!(text.contains("training fraction 4/5"));
        assert!(text.contains("mc-estimate"));
        for line in table.render_records().lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(value["record"].is_string());
        }
        let no_mc = probability_table(&[5, 10], Ratio::new(4, 5), 5, 0, 1).unwrap();
        assert!(!no_mc.render_text().contains("mc-estimate"));
        assert!(!no_mc.render_records().contains("mc_estimate_percent"));
    }

    #[test]
    fn gas_report_matches_frozen_costs() {
        let report = gas_report(&GasSchedule::default(), &[1024, 11_594_722]).unwrap();
        assert_eq!(report.rows[0].gas, 6_068_352);
        assert_eq!(report.rows[0].ether_text, "0.024273408");
        assert_eq!(report.rows[0].usd_text, "26.700748800");
        assert_eq!(report.rows[1].gas, 68_711_771_912);
        assert_eq!(report.rows[1].ether_text, "274.847087648");
        assert_eq!(report.rows[1].usd_text, "302331.796412800");
        let text = report.render_text();
        assert!(text.contains("6068352"));
        assert!(text.contains("274.847087648"));
    }

    #[test]
    fn gas_report_empty_sizes_is_headers_only() {
        let report = gas_report(&GasSchedule::default(), &[]).unwrap();
        assert!(report.rows.is_empty());
        let text = report.render_text();
        assert!(text.ends_with("bytes  gas  ether  usd\n"));
        // One meta record, no rows.
        assert_eq!(report.render_records().lines().count(), 1);
    }

    /// Drives a tiny contract run end to end and checks the run report
    /// renders deterministically with the payout and event log intact.
    #[test]
    fn run_report_round_trip() {
        let build = || {
            let mut chain = ChainState::new(11);
            for _ in 0..6 {
                chain.mine_block();
            }
            let mut groups = Vec::new();
            let mut nonces = Vec::new();
            let mut digests = Vec::new();
            for g in 0..5usize {
                let points = (0..5)
                    .map(|j| DataPoint {
                        inputs: vec![g as i64, j as i64],
                        label: 0,
                    })
                    .collect();
                let group = DataGroup { points };
                let nonce = Nonce::from(40 + g as u64);
                digests.push(hash_data_group(&group, &nonce).unwrap());
                groups.push(group);
                nonces.push(nonce);
            }
            let shape = ModelDefinition::new(vec![2, 4, 2]).unwrap();
            let organizer = Address::from("org");
            let (mut contract, _) = ContractState::init1(
                &chain,
                GasSchedule::default(),
                organizer.clone(),
                ContractConfig::new(1_000, 3, 4, 3, Fp::ratio(1, 2).unwrap(), shape.clone()),
                digests,
                1_000,
            )
            .unwrap();
            chain.mine_block();
            contract.init2(&chain, &organizer).unwrap();
            chain.mine_block();
            let training = contract.get_training_index().unwrap().to_vec();
            let reveal = |indexes: &[usize]| -> Vec<Reveal> {
                indexes
                    .iter()
                    .map(|&i| Reveal {
                        index: i,
                        group: groups[i].clone(),
                        nonce: nonces[i],
                    })
                    .collect()
            };
            contract.init3(&chain, &organizer, reveal(&training)).unwrap();
            let params: WeightsBiases<i128> =
                WeightsBiases::from_mantissas(&shape, &[0; 16], &[0; 6]).unwrap();
            contract
                .submit_model(
                    &chain,
                    &Address::from("alice"),
                    shape.clone(),
                    params,
                    Address::from("alice-pay"),
                )
                .unwrap();
            let testing = contract.get_testing_index().unwrap().to_vec();
            for _ in 0..4 {
                chain.mine_block();
            }
            contract
                .reveal_test_data(&chain, &organizer, reveal(&testing))
                .unwrap();
            contract
                .evaluate_model(&chain, &Address::from("anyone"), 0)
                .unwrap();
            for _ in 0..5 {
                chain.mine_block();
            }
            contract
                .finalize_contract(&chain, &Address::from("anyone"))
                .unwrap();
            RunReport::from_contract("mini", 11, &chain, &contract)
        };
        let report = build();
        assert_eq!(report.final_phase, ContractPhase::Finalized);
        assert_eq!(report.submissions.len(), 1);
        assert_eq!(report.submissions[0].score_text.as_deref(), Some("1.000000"));
        assert!(report.submissions[0].is_best);
        assert!(report.conservation_ok);
        let payout = report.payout.as_ref().unwrap();
        assert_eq!(payout.recipient, Address::from("alice-pay"));

        let text = report.render_text();
        assert!(text.contains("final phase: Finalized"));
        assert!(text.contains("payout: best-model reward -> alice-pay amount 1000"));
        assert!(text.contains("evaluation dataset: testing"));
        assert!(text.contains("op=init1"));

        for line in report.render_records().lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(value["record"].is_string());
        }

        // Byte-identical replay.
        let replay = build();
        assert_eq!(text, replay.render_text());
        assert_eq!(report.render_records(), replay.render_records());
    }
}
