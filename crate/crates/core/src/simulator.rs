//! Scenario runner: drives full rounds of agents against the contract and
//! aggregates per-round records into batch metrics.
//!
//! Round `i` of a batch is seeded with
//! `SHA-256("DRNG-ROUND-SEED-V1" || master_seed || i)` (both 8-byte
//! big-endian), used as a ChaCha20 seed. Rounds are independent, so batches
//! run in parallel and still produce exactly the sequential result.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::agents::{plan_grind, Agent, AgentError, GrindPlan, Predicate, Strategy};
use crate::contract::{
    AbortReason, ContractConfig, Event, ExclusionReason, FineReason, Phase, PhaseLengths,
    RoundState, Transaction, TxKind, VerificationMode,
};
use crate::crypto::{keygen, Address, GroupParams, DEFAULT_GENERATOR, DEFAULT_GROUP_PRIME};
use crate::field::{FieldElement, FieldParams, DEFAULT_FIELD_PRIME};
use crate::transcript::{Recorder, TranscriptLine};

pub const ROUND_SEED_TAG: &[u8] = b"DRNG-ROUND-SEED-V1";

/// Hard cap on scheduler iterations per round; a correct round needs about
/// two per phase.
const MAX_STEPS: usize = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl From<AgentError> for SimError {
    fn from(e: AgentError) -> Self {
        SimError::Invariant(e.to_string())
    }
}

/// Strategy as written in a scenario file; participants are referred to by
/// index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StrategySpec {
    Honest,
    Dropout {
        phase: Phase,
    },
    Withhold,
    Grinder {
        coalition: Vec<usize>,
        max_withhold: usize,
        predicate: Predicate,
    },
    WrongDegree {
        degree: usize,
    },
    CorruptShare {
        recipient: usize,
    },
    FalseAccuser {
        dealer: usize,
        recipient: usize,
    },
}

fn default_p() -> u64 {
    DEFAULT_FIELD_PRIME
}
fn default_q() -> u64 {
    DEFAULT_GROUP_PRIME
}
fn default_g() -> u64 {
    DEFAULT_GENERATOR
}
fn default_rounds() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_p")]
    pub p: u64,
    #[serde(default = "default_q")]
    pub q: u64,
    #[serde(default = "default_g")]
    pub g: u64,
    pub deposit: u64,
    pub fine: u64,
    #[serde(default)]
    pub phase_lengths: PhaseLengths,
    #[serde(default)]
    pub verification_mode: VerificationMode,
    /// One entry per participant; an empty list means all honest.
    #[serde(default)]
    pub strategies: Vec<StrategySpec>,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl ScenarioConfig {
    pub fn honest(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            p: DEFAULT_FIELD_PRIME,
            q: DEFAULT_GROUP_PRIME,
            g: DEFAULT_GENERATOR,
            deposit: 100,
            fine: 40,
            phase_lengths: PhaseLengths::default(),
            verification_mode: VerificationMode::Eager,
            strategies: Vec::new(),
            rounds: 1,
            master_seed: 0,
        }
    }

    pub fn field(&self) -> Result<FieldParams, SimError> {
        FieldParams::new(self.p).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn group(&self) -> Result<GroupParams, SimError> {
        GroupParams::new(self.q, self.g).map_err(|e| SimError::Config(e.to_string()))
    }

    fn contract_config(&self, round_id: u64) -> Result<ContractConfig, SimError> {
        let cfg = ContractConfig {
            m: self.m,
            field: self.field()?,
            group: self.group()?,
            deposit: self.deposit,
            fine: self.fine,
            phase_lengths: self.phase_lengths,
            mode: self.verification_mode,
            round_id,
        };
        cfg.validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn strategy_of(&self, i: usize) -> StrategySpec {
        self.strategies
            .get(i)
            .cloned()
            .unwrap_or(StrategySpec::Honest)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let cfg_err = |msg: String| Err(SimError::Config(msg));
        if self.m < 1 || self.m > self.n {
            return cfg_err(format!(
                "need 1 <= m <= n, got m = {}, n = {}",
                self.m, self.n
            ));
        }
        self.contract_config(0)?;
        if self.n as u64 >= self.p {
            return cfg_err(format!(
                "p = {} leaves no room for {} distinct nonzero x values",
                self.p, self.n
            ));
        }
        if !self.strategies.is_empty() && self.strategies.len() != self.n {
            return cfg_err(format!(
                "strategies lists {} entries for {} participants",
                self.strategies.len(),
                self.n
            ));
        }
        let in_range = |i: usize, what: &str| {
            if i < self.n {
                Ok(())
            } else {
                Err(SimError::Config(format!("{what} index {i} out of range")))
            }
        };
        let mut grinder: Option<&StrategySpec> = None;
        for (i, s) in self.strategies.iter().enumerate() {
            match s {
                StrategySpec::Dropout { phase } => {
                    if !matches!(
                        phase,
                        Phase::Commitment | Phase::EncryptedShares | Phase::KeyReveal
                    ) {
                        return cfg_err(format!(
                            "participant {i}: dropout phase must be commitment, encrypted_shares or key_reveal"
                        ));
                    }
                }
                StrategySpec::Grinder {
                    coalition,
                    max_withhold,
                    ..
                } => {
                    if let Some(prev) = grinder {
                        if prev != s {
                            return cfg_err(
                                "all grinder entries must describe the same coalition".into(),
                            );
                        }
                    }
                    grinder = Some(s);
                    let mut members = coalition.clone();
                    members.sort_unstable();
                    members.dedup();
                    if members.len() != coalition.len() {
                        return cfg_err("grinder coalition lists a member twice".into());
                    }
                    for &c in coalition {
                        in_range(c, "coalition")?;
                        if !matches!(self.strategies[c], StrategySpec::Grinder { .. }) {
                            return cfg_err(format!("coalition member {c} is not a grinder"));
                        }
                    }
                    if !coalition.contains(&i) {
                        return cfg_err(format!("grinder {i} is not in its own coalition"));
                    }
                    if coalition.len() < self.m {
                        return cfg_err(format!(
                            "coalition of {} cannot decrypt with threshold {}",
                            coalition.len(),
                            self.m
                        ));
                    }
                    if *max_withhold > self.n - self.m {
                        return cfg_err(format!(
                            "max_withhold {max_withhold} exceeds n - m = {}",
                            self.n - self.m
                        ));
                    }
                }
                StrategySpec::WrongDegree { degree } => {
                    if *degree as u64 + 1 >= self.p {
                        return cfg_err(format!("degree {degree} too large for p = {}", self.p));
                    }
                }
                StrategySpec::CorruptShare { recipient } => in_range(*recipient, "recipient")?,
                StrategySpec::FalseAccuser { dealer, recipient } => {
                    in_range(*dealer, "dealer")?;
                    in_range(*recipient, "recipient")?;
                    if self.verification_mode != VerificationMode::Lazy {
                        return cfg_err("false_accuser only makes sense in lazy mode".into());
                    }
                }
                StrategySpec::Honest | StrategySpec::Withhold => {}
            }
        }
        Ok(())
    }
}

pub fn round_seed(master_seed: u64, round_index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(ROUND_SEED_TAG);
    h.update(master_seed.to_be_bytes());
    h.update(round_index.to_be_bytes());
    h.finalize().into()
}

/// Deterministic addresses whose x values are nonzero and pairwise distinct.
pub fn synthetic_addresses<R: RngCore + ?Sized>(
    n: usize,
    field: FieldParams,
    rng: &mut R,
) -> Vec<Address> {
    let mut out: Vec<Address> = Vec::with_capacity(n);
    let mut xs: Vec<FieldElement> = Vec::with_capacity(n);
    while out.len() < n {
        let mut raw = [0u8; 20];
        rng.fill_bytes(&mut raw);
        let a = Address(raw);
        let x = a.to_field(field);
        if x.is_zero() || xs.contains(&x) {
            continue;
        }
        xs.push(x);
        out.push(a);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub index: usize,
    pub address: Address,
    pub x: String,
    pub strategy: String,
    pub status: Option<crate::contract::ParticipantStatus>,
    pub fined: u64,
    pub refunded: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrindRecord {
    pub coalition: Vec<Address>,
    pub predicate: Predicate,
    pub candidates: usize,
    pub withhold: Vec<Address>,
    pub predicted: String,
    pub found: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisputeRecord {
    pub challenger: Address,
    pub dealer: Address,
    pub recipient: Address,
    pub upheld: bool,
    pub fined: Option<Address>,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub seed: String,
    pub terminal: Phase,
    /// Decimal string; present iff the round finalized.
    pub output: Option<String>,
    pub abort_reason: Option<AbortReason>,
    pub participants: Vec<ParticipantSummary>,
    pub fines: BTreeMap<Address, u64>,
    pub refunds: BTreeMap<Address, u64>,
    pub deposits_total: u64,
    pub refunds_total: u64,
    pub treasury: u64,
    pub funds_conserved: bool,
    pub withheld: Vec<Address>,
    pub excluded: BTreeMap<Address, ExclusionReason>,
    pub grind: Option<GrindRecord>,
    /// Whether the finalized output satisfies the coalition's predicate.
    pub predicate_met: Option<bool>,
    pub disputes: Vec<DisputeRecord>,
    pub events: Vec<Event>,
}

impl RoundRecord {
    pub fn output_value(&self) -> Option<u64> {
        self.output.as_ref().and_then(|s| s.parse().ok())
    }

    pub fn total_fines(&self) -> u64 {
        self.fines.values().sum()
    }

    pub fn dispute_fines(&self) -> u64 {
        self.disputes.iter().map(|d| d.amount).sum()
    }
}

/// Everything produced by one round: the serializable record plus the raw
/// material tests and audits need.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub record: RoundRecord,
    pub contract: ContractConfig,
    pub transcript: Vec<TranscriptLine>,
    pub state: RoundState,
    /// Each dealer's true `a0`, read from the agents' private state.
    pub dealer_secrets: BTreeMap<Address, FieldElement>,
    pub grind_plan: Option<GrindPlan>,
    pub addresses: Vec<Address>,
}

fn resolve_strategy(spec: &StrategySpec, addresses: &[Address]) -> Strategy {
    match spec {
        StrategySpec::Honest => Strategy::Honest,
        StrategySpec::Dropout { phase } => Strategy::DropoutAt(*phase),
        StrategySpec::Withhold => Strategy::WithholdKey,
        StrategySpec::Grinder {
            coalition,
            max_withhold,
            predicate,
        } => Strategy::ColludingGrinder {
            coalition: coalition.iter().map(|&i| addresses[i]).collect(),
            predicate: *predicate,
            max_withhold: *max_withhold,
        },
        StrategySpec::WrongDegree { degree } => Strategy::WrongDegree { degree: *degree },
        StrategySpec::CorruptShare { recipient } => Strategy::CorruptShare {
            recipient: addresses[*recipient],
        },
        StrategySpec::FalseAccuser { dealer, recipient } => Strategy::FalseAccuser {
            dealer: addresses[*dealer],
            recipient: addresses[*recipient],
        },
    }
}

/// Runs one round end to end. Fully determined by `(config, round_index, seed)`.
pub fn run_round(
    config: &ScenarioConfig,
    round_index: u64,
    seed: [u8; 32],
) -> Result<RoundOutcome, SimError> {
    config.validate()?;
    let contract = config.contract_config(round_index)?;
    let mut rng = ChaCha20Rng::from_seed(seed);

    let addresses = synthetic_addresses(config.n, contract.field, &mut rng);
    let mut agents: Vec<Agent> = addresses
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let keys = keygen(&contract.group, &mut rng);
            Agent::new(
                a,
                keys,
                resolve_strategy(&config.strategy_of(i), &addresses),
            )
        })
        .collect();

    let coalition = agents.iter().find_map(|a| match &a.strategy {
        Strategy::ColludingGrinder {
            coalition,
            predicate,
            max_withhold,
        } => Some((coalition.clone(), *predicate, *max_withhold)),
        _ => None,
    });

    let mut recorder = Recorder::new(
        RoundState::deploy(contract.clone()).map_err(|e| SimError::Config(e.to_string()))?,
    );
    let clock = addresses[0];
    let mut grind_plan: Option<GrindPlan> = None;

    for _ in 0..MAX_STEPS {
        let phase = recorder.state().phase();
        if phase.is_terminal() {
            break;
        }
        if phase == Phase::KeyReveal && grind_plan.is_none() {
            if let Some((members, predicate, max_withhold)) = &coalition {
                let keys: Vec<_> = agents
                    .iter()
                    .filter(|a| members.contains(&a.address))
                    .map(|a| (a.address, a.keys.sk))
                    .collect();
                let plan = plan_grind(recorder.state(), &keys, *max_withhold, *predicate)?;
                for a in agents.iter_mut() {
                    if members.contains(&a.address) {
                        a.set_withhold(plan.choice.withhold.contains(&a.address));
                    }
                }
                grind_plan = Some(plan);
            }
        }
        for agent in agents.iter_mut() {
            let txs = agent.act(recorder.state(), &mut rng)?;
            for tx in txs {
                // rejections stay in the transcript
                let _ = recorder.submit(tx);
            }
        }
        let blocks = recorder.state().blocks_remaining().max(1);
        recorder
            .submit(Transaction {
                sender: clock,
                kind: TxKind::Advance { blocks },
            })
            .map_err(|e| SimError::Invariant(format!("clock advance rejected: {e}")))?;
    }

    let (state, transcript) = recorder.into_parts();
    if !state.phase().is_terminal() {
        return Err(SimError::Invariant(format!(
            "round {round_index} did not terminate within {MAX_STEPS} steps"
        )));
    }

    let dealer_secrets = agents
        .iter()
        .filter_map(|a| a.polynomial().map(|p| (a.address, p.secret())))
        .collect();
    let record = build_record(
        round_index,
        &seed,
        &state,
        &agents,
        grind_plan.as_ref(),
        coalition.as_ref().map(|c| (&c.0, c.1)),
    );
    Ok(RoundOutcome {
        record,
        contract,
        transcript,
        state,
        dealer_secrets,
        grind_plan,
        addresses,
    })
}

fn build_record(
    round_index: u64,
    seed: &[u8; 32],
    state: &RoundState,
    agents: &[Agent],
    plan: Option<&GrindPlan>,
    coalition: Option<(&Vec<Address>, Predicate)>,
) -> RoundRecord {
    let events = state.events().to_vec();
    let mut fines: BTreeMap<Address, u64> = BTreeMap::new();
    let mut refunds: BTreeMap<Address, u64> = BTreeMap::new();
    let mut withheld = Vec::new();
    let mut disputes: Vec<DisputeRecord> = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        match ev {
            Event::Fined {
                address, amount, ..
            } => *fines.entry(*address).or_default() += amount,
            Event::Refunded { address, amount } => *refunds.entry(*address).or_default() += amount,
            Event::Withheld { address } => withheld.push(*address),
            Event::DisputeResolved {
                challenger,
                dealer,
                recipient,
                upheld,
            } => {
                // the adjudication's fine, if any, is among the next two events
                let fine = events[i + 1..].iter().take(2).find_map(|e| match e {
                    Event::Fined {
                        address,
                        amount,
                        reason: FineReason::FalseDispute | FineReason::FailedVerification,
                    } => Some((*address, *amount)),
                    _ => None,
                });
                disputes.push(DisputeRecord {
                    challenger: *challenger,
                    dealer: *dealer,
                    recipient: *recipient,
                    upheld: *upheld,
                    fined: fine.map(|f| f.0),
                    amount: fine.map_or(0, |f| f.1),
                });
            }
            _ => {}
        }
    }

    let participants = agents
        .iter()
        .enumerate()
        .map(|(index, a)| {
            let rec = state.participant(&a.address);
            ParticipantSummary {
                index,
                address: a.address,
                x: a.address.to_field(state.config().field).value().to_string(),
                strategy: a.strategy.label().to_string(),
                status: rec.map(|r| r.status),
                fined: fines.get(&a.address).copied().unwrap_or(0),
                refunded: refunds.get(&a.address).copied().unwrap_or(0),
            }
        })
        .collect();

    let output = match state.get_output() {
        crate::contract::BeaconOutput::Value(v) => Some(v),
        _ => None,
    };
    let grind = match (plan, coalition) {
        (Some(plan), Some((members, predicate))) => Some(GrindRecord {
            coalition: members.clone(),
            predicate,
            candidates: plan.choice.candidates.len(),
            withhold: plan.choice.withhold.clone(),
            predicted: plan.choice.predicted.value().to_string(),
            found: plan.choice.satisfied,
        }),
        _ => None,
    };
    let predicate_met = match (coalition, output) {
        (Some((_, predicate)), Some(v)) if plan.is_some() => Some(predicate.holds(v)),
        _ => None,
    };

    RoundRecord {
        round: round_index,
        seed: hex::encode(seed),
        terminal: state.phase(),
        output: output.map(|v| v.value().to_string()),
        abort_reason: state.abort_reason(),
        participants,
        fines,
        refunds,
        deposits_total: state.total_deposited(),
        refunds_total: state.total_refunded(),
        treasury: state.treasury(),
        funds_conserved: state.funds_conserved(),
        withheld,
        excluded: state.excluded().clone(),
        grind,
        predicate_met,
        disputes,
        events,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rounds: usize,
    pub finalized: usize,
    pub aborted: usize,
    pub finalize_rate: f64,
    pub abort_rate: f64,
    /// Fraction of finalized outputs with least significant bit 1.
    pub output_lsb_frequency: Option<f64>,
    pub grinding_rounds: usize,
    /// Fraction of finalized grinding rounds whose output met the predicate.
    pub predicate_success_rate: Option<f64>,
    pub total_fines: u64,
    pub dispute_fines: u64,
    pub total_deposits: u64,
    pub total_refunds: u64,
    pub treasury: u64,
    pub funds_conserved: bool,
}

/// Pure aggregation over round records.
pub fn summarize(records: &[RoundRecord]) -> Metrics {
    let rounds = records.len();
    let finalized = records
        .iter()
        .filter(|r| r.terminal == Phase::Finalized)
        .count();
    let aborted = rounds - finalized;
    let rate = |k: usize, of: usize| if of == 0 { 0.0 } else { k as f64 / of as f64 };
    let outputs: Vec<u64> = records.iter().filter_map(|r| r.output_value()).collect();
    let lsb_ones = outputs.iter().filter(|v| *v & 1 == 1).count();
    let grinding: Vec<&RoundRecord> = records.iter().filter(|r| r.grind.is_some()).collect();
    let met: Vec<bool> = grinding.iter().filter_map(|r| r.predicate_met).collect();

    Metrics {
        rounds,
        finalized,
        aborted,
        finalize_rate: rate(finalized, rounds),
        abort_rate: if rounds == 0 {
            0.0
        } else {
            1.0 - rate(finalized, rounds)
        },
        output_lsb_frequency: (!outputs.is_empty()).then(|| rate(lsb_ones, outputs.len())),
        grinding_rounds: grinding.len(),
        predicate_success_rate: (!met.is_empty())
            .then(|| rate(met.iter().filter(|m| **m).count(), met.len())),
        total_fines: records.iter().map(|r| r.total_fines()).sum(),
        dispute_fines: records.iter().map(|r| r.dispute_fines()).sum(),
        total_deposits: records.iter().map(|r| r.deposits_total).sum(),
        total_refunds: records.iter().map(|r| r.refunds_total).sum(),
        treasury: records.iter().map(|r| r.treasury).sum(),
        funds_conserved: records
            .iter()
            .all(|r| r.funds_conserved && r.deposits_total == r.refunds_total + r.treasury),
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub metrics: Metrics,
    pub records: Vec<RoundRecord>,
}

impl BatchResult {
    /// One JSON object per line, in round order.
    pub fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn run_batch(config: &ScenarioConfig) -> Result<BatchResult, SimError> {
    run_batch_with(config, true)
}

pub fn run_batch_with(config: &ScenarioConfig, parallel: bool) -> Result<BatchResult, SimError> {
    if config.rounds < 1 {
        return Err(SimError::Config("rounds must be at least 1".into()));
    }
    config.validate()?;
    let one = |i: usize| {
        let i = i as u64;
        run_round(config, i, round_seed(config.master_seed, i)).map(|o| o.record)
    };
    let records: Vec<RoundRecord> = if parallel {
        (0..config.rounds)
            .into_par_iter()
            .map(one)
            .collect::<Result<_, _>>()?
    } else {
        (0..config.rounds).map(one).collect::<Result<_, _>>()?
    };
    Ok(BatchResult {
        metrics: summarize(&records),
        records,
    })
}
