//! The beacon contract as a deterministic, single-writer state machine.
//!
//! A round moves through
//! `Registration -> Commitment -> EncryptedShares -> KeyReveal [-> Dispute] -> Finalized`,
//! or to `Aborted` as soon as fewer than `m` participants remain able to finish.
//! Time is a logical block height that only moves on [`RoundState::advance_blocks`];
//! phase deadlines fire inside that call, and closing the last window
//! (`KeyReveal` in eager mode, `Dispute` in lazy mode) runs [`RoundState::finalize`].
//!
//! Funds: every participant escrows `deposit` at registration. Fines move from
//! a participant's escrow to the treasury; whatever escrow remains is refunded
//! when the round reaches a terminal phase, so
//! `total deposited == total refunded + treasury` always holds there.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{
    commit_share, decrypt, share_context, verify_keypair, Address, Ciphertext, Digest, GroupParams,
    PublicKey, RoundId, SecretKey,
};
use crate::field::{interpolate_coefficients, FieldElement, FieldParams, SharePoint};
use crate::transcript::hex_u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Registration,
    Commitment,
    EncryptedShares,
    KeyReveal,
    Dispute,
    Finalized,
    Aborted,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Finalized | Phase::Aborted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMode {
    /// The contract decrypts and checks every share itself.
    #[default]
    Eager,
    /// Dealers post plaintexts with their key reveal; decryptions are only
    /// checked when someone disputes them.
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseLengths {
    pub registration: u64,
    pub commitment: u64,
    pub shares: u64,
    pub reveal: u64,
    pub dispute: u64,
}

impl Default for PhaseLengths {
    fn default() -> Self {
        Self {
            registration: 10,
            commitment: 10,
            shares: 10,
            reveal: 10,
            dispute: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractConfig {
    pub m: usize,
    pub field: FieldParams,
    pub group: GroupParams,
    pub deposit: u64,
    pub fine: u64,
    pub phase_lengths: PhaseLengths,
    pub mode: VerificationMode,
    pub round_id: RoundId,
}

impl ContractConfig {
    pub fn validate(&self) -> Result<(), ContractError> {
        if self.m < 1 {
            return Err(ContractError::InvalidConfig(
                "threshold m must be >= 1".into(),
            ));
        }
        if self.m as u64 >= self.field.modulus() {
            return Err(ContractError::InvalidConfig(format!(
                "threshold m = {} must be below p = {}",
                self.m,
                self.field.modulus()
            )));
        }
        if self.fine > self.deposit {
            return Err(ContractError::InvalidConfig(format!(
                "fine {} exceeds deposit {}",
                self.fine, self.deposit
            )));
        }
        let l = &self.phase_lengths;
        if [l.registration, l.commitment, l.shares, l.reveal, l.dispute].contains(&0) {
            return Err(ContractError::InvalidConfig(
                "every phase must last at least one block".into(),
            ));
        }
        Ok(())
    }

    fn phase_length(&self, phase: Phase) -> Option<u64> {
        let l = &self.phase_lengths;
        match phase {
            Phase::Registration => Some(l.registration),
            Phase::Commitment => Some(l.commitment),
            Phase::EncryptedShares => Some(l.shares),
            Phase::KeyReveal => Some(l.reveal),
            Phase::Dispute => Some(l.dispute),
            Phase::Finalized | Phase::Aborted => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantStatus {
    Active,
    /// Missed the commitment or share deadline.
    Dropped,
    /// Did not reveal a valid key in time.
    Withheld,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipantRecord {
    pub address: Address,
    pub x: FieldElement,
    pub pk: PublicKey,
    pub status: ParticipantStatus,
    pub deposit_held: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("operation not allowed in phase {0:?}")]
    WrongPhase(Phase),
    #[error("address {0} already registered")]
    DuplicateAddress(Address),
    #[error("address {0} maps to an unusable x value")]
    XCollision(Address),
    #[error("deposit must be exactly {expected}, got {got}")]
    WrongDeposit { expected: u64, got: u64 },
    #[error("sender {0} is not registered")]
    NotRegistered(Address),
    #[error("sender {0} is not active")]
    NotActive(Address),
    #[error("expected {expected} entries, got {got}")]
    WrongCardinality { expected: usize, got: usize },
    #[error("entry for unregistered recipient {0}")]
    UnknownRecipient(Address),
    #[error("{0} already posted for this phase")]
    AlreadyPosted(Address),
    #[error("{0} has no commitments on record")]
    MissingCommitment(Address),
    #[error(
        "plaintexts must accompany the key reveal in lazy mode and are never accepted otherwise"
    )]
    PlaintextModeMismatch,
    #[error("secret key does not match the registered public key of {0}")]
    KeyMismatch(Address),
    #[error("key of {0} has not been revealed")]
    KeyNotRevealed(Address),
    #[error("dealer {0} has not revealed, nothing to dispute")]
    DealerNotRevealed(Address),
    #[error("share {dealer} -> {recipient} was already adjudicated")]
    AlreadyAdjudicated { dealer: Address, recipient: Address },
    #[error("payload uses a different field modulus")]
    FieldMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineReason {
    MissedCommitment,
    MissedShares,
    WithheldKey,
    FailedVerification,
    FalseDispute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExclusionReason {
    CommitmentMismatch { recipient: Address },
    WrongDegree { degree: usize },
    DisputeUpheld { recipient: Address },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AbortReason {
    TooFewRegistered { registered: usize },
    TooFewActive { after: Phase, active: usize },
    TooFewReveals { revealed: usize },
    NoValidDealers,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum Event {
    Deployed {
        #[serde(with = "hex_u64")]
        round_id: u64,
    },
    Registered {
        address: Address,
        #[serde(with = "hex_u64")]
        x: u64,
    },
    CommitmentsPosted {
        dealer: Address,
    },
    SharesPosted {
        dealer: Address,
    },
    KeyRevealed {
        address: Address,
    },
    PhaseChanged {
        phase: Phase,
        height: u64,
    },
    Dropped {
        address: Address,
        phase: Phase,
    },
    Withheld {
        address: Address,
    },
    Fined {
        address: Address,
        amount: u64,
        reason: FineReason,
    },
    DealerExcluded {
        dealer: Address,
        reason: ExclusionReason,
    },
    DisputeResolved {
        challenger: Address,
        dealer: Address,
        recipient: Address,
        upheld: bool,
    },
    Refunded {
        address: Address,
        amount: u64,
    },
    Finalized {
        #[serde(with = "hex_u64")]
        output: u64,
    },
    Aborted {
        reason: AbortReason,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxKind {
    Register {
        pk: PublicKey,
        deposit: u64,
    },
    PostCommitments {
        digests: BTreeMap<Address, Digest>,
    },
    PostShares {
        ciphertexts: BTreeMap<Address, Ciphertext>,
        plaintexts: Option<BTreeMap<Address, FieldElement>>,
    },
    Reveal {
        sk: SecretKey,
        plaintexts: Option<BTreeMap<Address, FieldElement>>,
    },
    Dispute {
        dealer: Address,
        recipient: Address,
    },
    Advance {
        blocks: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub sender: Address,
    pub kind: TxKind,
}

/// What a reader sees from outside the contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeaconOutput {
    Value(FieldElement),
    Aborted,
    Pending,
}

type Matrix<T> = BTreeMap<Address, BTreeMap<Address, T>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundState {
    config: ContractConfig,
    phase: Phase,
    block_height: u64,
    phase_start: u64,
    /// Set once the deadline of the final window has passed.
    window_closed: bool,
    registry: Vec<ParticipantRecord>,
    commitments: Matrix<Digest>,
    ciphertexts: Matrix<Ciphertext>,
    plaintexts: Matrix<FieldElement>,
    revealed_keys: BTreeMap<Address, SecretKey>,
    adjudicated: BTreeMap<(Address, Address), bool>,
    excluded: BTreeMap<Address, ExclusionReason>,
    output: Option<FieldElement>,
    abort_reason: Option<AbortReason>,
    ledger: BTreeMap<Address, i128>,
    treasury: u64,
    total_deposited: u64,
    total_refunded: u64,
    events: Vec<Event>,
}

impl RoundState {
    pub fn deploy(config: ContractConfig) -> Result<Self, ContractError> {
        config.validate()?;
        let round_id = config.round_id;
        Ok(Self {
            config,
            phase: Phase::Registration,
            block_height: 0,
            phase_start: 0,
            window_closed: false,
            registry: Vec::new(),
            commitments: BTreeMap::new(),
            ciphertexts: BTreeMap::new(),
            plaintexts: BTreeMap::new(),
            revealed_keys: BTreeMap::new(),
            adjudicated: BTreeMap::new(),
            excluded: BTreeMap::new(),
            output: None,
            abort_reason: None,
            ledger: BTreeMap::new(),
            treasury: 0,
            total_deposited: 0,
            total_refunded: 0,
            events: vec![Event::Deployed { round_id }],
        })
    }

    // ---- read accessors -------------------------------------------------

    pub fn config(&self) -> &ContractConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn block_height(&self) -> u64 {
        self.block_height
    }

    /// Blocks left before the current phase's deadline fires.
    pub fn blocks_remaining(&self) -> u64 {
        match self.config.phase_length(self.phase) {
            Some(len) if !self.window_closed => {
                (self.phase_start + len).saturating_sub(self.block_height)
            }
            _ => 0,
        }
    }

    pub fn registry(&self) -> &[ParticipantRecord] {
        &self.registry
    }

    pub fn participant(&self, address: &Address) -> Option<&ParticipantRecord> {
        self.registry.iter().find(|r| r.address == *address)
    }

    pub fn commitments(&self) -> &Matrix<Digest> {
        &self.commitments
    }

    pub fn ciphertexts(&self) -> &Matrix<Ciphertext> {
        &self.ciphertexts
    }

    pub fn plaintexts(&self) -> &Matrix<FieldElement> {
        &self.plaintexts
    }

    pub fn revealed_keys(&self) -> &BTreeMap<Address, SecretKey> {
        &self.revealed_keys
    }

    pub fn is_adjudicated(&self, dealer: &Address, recipient: &Address) -> bool {
        self.adjudicated.contains_key(&(*dealer, *recipient))
    }

    pub fn excluded(&self) -> &BTreeMap<Address, ExclusionReason> {
        &self.excluded
    }

    pub fn abort_reason(&self) -> Option<AbortReason> {
        self.abort_reason
    }

    pub fn ledger(&self) -> &BTreeMap<Address, i128> {
        &self.ledger
    }

    pub fn treasury(&self) -> u64 {
        self.treasury
    }

    pub fn total_deposited(&self) -> u64 {
        self.total_deposited
    }

    pub fn total_refunded(&self) -> u64 {
        self.total_refunded
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn get_output(&self) -> BeaconOutput {
        match (self.phase, self.output) {
            (Phase::Finalized, Some(v)) => BeaconOutput::Value(v),
            (Phase::Aborted, _) => BeaconOutput::Aborted,
            _ => BeaconOutput::Pending,
        }
    }

    /// `deposited == refunded + treasury` once terminal; while the round is
    /// live the escrowed remainder is counted on the refund side.
    pub fn funds_conserved(&self) -> bool {
        let escrow: u64 = self.registry.iter().map(|r| r.deposit_held).sum();
        self.total_deposited == self.total_refunded + self.treasury + escrow
            && (!self.phase.is_terminal() || escrow == 0)
    }

    /// Participants that completed every phase and revealed a valid key, in
    /// registration order.
    pub fn revealers(&self) -> Vec<&ParticipantRecord> {
        self.registry
            .iter()
            .filter(|r| {
                r.status == ParticipantStatus::Active && self.revealed_keys.contains_key(&r.address)
            })
            .collect()
    }

    fn active_count(&self) -> usize {
        self.registry
            .iter()
            .filter(|r| r.status == ParticipantStatus::Active)
            .count()
    }

    fn final_phase(&self) -> Phase {
        match self.config.mode {
            VerificationMode::Eager => Phase::KeyReveal,
            VerificationMode::Lazy => Phase::Dispute,
        }
    }

    // ---- transactions ---------------------------------------------------

    /// Applies one transaction; on error the state is left untouched.
    /// Returns the events the transaction produced.
    pub fn apply(&mut self, tx: &Transaction) -> Result<Vec<Event>, ContractError> {
        let before = self.events.len();
        if !matches!(tx.kind, TxKind::Register { .. }) && self.participant(&tx.sender).is_none() {
            return Err(ContractError::NotRegistered(tx.sender));
        }
        match &tx.kind {
            TxKind::Register { pk, deposit } => self.register(tx.sender, *pk, *deposit)?,
            TxKind::PostCommitments { digests } => {
                self.post_commitments(tx.sender, digests.clone())?
            }
            TxKind::PostShares {
                ciphertexts,
                plaintexts,
            } => self.post_encrypted_shares(tx.sender, ciphertexts.clone(), plaintexts.clone())?,
            TxKind::Reveal { sk, plaintexts } => {
                self.reveal_key(tx.sender, *sk, plaintexts.clone())?
            }
            TxKind::Dispute { dealer, recipient } => {
                self.dispute(tx.sender, *dealer, *recipient)?
            }
            TxKind::Advance { blocks } => self.advance_blocks(*blocks),
        }
        Ok(self.events[before..].to_vec())
    }

    pub fn register(
        &mut self,
        address: Address,
        pk: PublicKey,
        deposit: u64,
    ) -> Result<(), ContractError> {
        self.require_open(Phase::Registration)?;
        if self.participant(&address).is_some() {
            return Err(ContractError::DuplicateAddress(address));
        }
        let x = address.to_field(self.config.field);
        if x.is_zero() || self.registry.iter().any(|r| r.x == x) {
            return Err(ContractError::XCollision(address));
        }
        if deposit != self.config.deposit {
            return Err(ContractError::WrongDeposit {
                expected: self.config.deposit,
                got: deposit,
            });
        }
        self.registry.push(ParticipantRecord {
            address,
            x,
            pk,
            status: ParticipantStatus::Active,
            deposit_held: deposit,
        });
        self.total_deposited += deposit;
        *self.ledger.entry(address).or_default() -= deposit as i128;
        self.events.push(Event::Registered {
            address,
            x: x.value(),
        });
        Ok(())
    }

    pub fn post_commitments(
        &mut self,
        sender: Address,
        digests: BTreeMap<Address, Digest>,
    ) -> Result<(), ContractError> {
        self.require_open(Phase::Commitment)?;
        self.require_active(&sender)?;
        if self.commitments.contains_key(&sender) {
            return Err(ContractError::AlreadyPosted(sender));
        }
        self.check_full_row(digests.keys())?;
        self.commitments.insert(sender, digests);
        self.events
            .push(Event::CommitmentsPosted { dealer: sender });
        Ok(())
    }

    pub fn post_encrypted_shares(
        &mut self,
        sender: Address,
        ciphertexts: BTreeMap<Address, Ciphertext>,
        plaintexts: Option<BTreeMap<Address, FieldElement>>,
    ) -> Result<(), ContractError> {
        self.require_open(Phase::EncryptedShares)?;
        self.require_active(&sender)?;
        if !self.commitments.contains_key(&sender) {
            return Err(ContractError::MissingCommitment(sender));
        }
        if plaintexts.is_some() {
            // plaintexts before the reveal would hand every a0 to the last actor
            return Err(ContractError::PlaintextModeMismatch);
        }
        if self.ciphertexts.contains_key(&sender) {
            return Err(ContractError::AlreadyPosted(sender));
        }
        self.check_full_row(ciphertexts.keys())?;
        let p = self.config.field.modulus();
        let q = self.config.group.modulus();
        if ciphertexts
            .values()
            .any(|ct| ct.c2.field().modulus() != p || ct.c1 == 0 || ct.c1 >= q)
        {
            return Err(ContractError::FieldMismatch);
        }
        self.ciphertexts.insert(sender, ciphertexts);
        self.events.push(Event::SharesPosted { dealer: sender });
        Ok(())
    }

    /// In lazy mode the dealer's plaintext row travels with its key.
    pub fn reveal_key(
        &mut self,
        sender: Address,
        sk: SecretKey,
        plaintexts: Option<BTreeMap<Address, FieldElement>>,
    ) -> Result<(), ContractError> {
        self.require_open(Phase::KeyReveal)?;
        let record = self.require_active(&sender)?;
        let pk = record.pk;
        if self.revealed_keys.contains_key(&sender) {
            return Err(ContractError::AlreadyPosted(sender));
        }
        match (self.config.mode, &plaintexts) {
            (VerificationMode::Eager, None) => {}
            (VerificationMode::Lazy, Some(row)) => {
                self.check_full_row(row.keys())?;
                let p = self.config.field.modulus();
                if row.values().any(|y| y.field().modulus() != p) {
                    return Err(ContractError::FieldMismatch);
                }
            }
            _ => return Err(ContractError::PlaintextModeMismatch),
        }
        if !verify_keypair(&self.config.group, pk, sk) {
            return Err(ContractError::KeyMismatch(sender));
        }
        self.revealed_keys.insert(sender, sk);
        if let Some(row) = plaintexts {
            self.plaintexts.insert(sender, row);
        }
        self.events.push(Event::KeyRevealed { address: sender });
        Ok(())
    }

    pub fn dispute(
        &mut self,
        challenger: Address,
        dealer: Address,
        recipient: Address,
    ) -> Result<(), ContractError> {
        if self.config.mode != VerificationMode::Lazy {
            return Err(ContractError::WrongPhase(self.phase));
        }
        self.require_open(Phase::Dispute)?;
        if self.participant(&challenger).is_none() {
            return Err(ContractError::NotRegistered(challenger));
        }
        let sk = *self
            .revealed_keys
            .get(&recipient)
            .ok_or(ContractError::KeyNotRevealed(recipient))?;
        let claimed = self
            .plaintexts
            .get(&dealer)
            .and_then(|row| row.get(&recipient))
            .copied()
            .ok_or(ContractError::DealerNotRevealed(dealer))?;
        if self.is_adjudicated(&dealer, &recipient) {
            return Err(ContractError::AlreadyAdjudicated { dealer, recipient });
        }

        let round_id = self.config.round_id;
        let ct = &self.ciphertexts[&dealer][&recipient];
        let opened = decrypt(
            &self.config.group,
            sk,
            ct,
            &share_context(round_id, &dealer, &recipient),
        );
        let committed = self.commitments[&dealer][&recipient];
        let upheld =
            opened != claimed || commit_share(round_id, &dealer, &recipient, claimed) != committed;

        self.adjudicated.insert((dealer, recipient), upheld);
        self.events.push(Event::DisputeResolved {
            challenger,
            dealer,
            recipient,
            upheld,
        });
        if upheld {
            self.exclude(dealer, ExclusionReason::DisputeUpheld { recipient });
        } else {
            self.fine(challenger, FineReason::FalseDispute);
        }
        Ok(())
    }

    /// Moves the clock forward, firing every deadline that falls inside the
    /// window. A zero-block advance is a no-op.
    pub fn advance_blocks(&mut self, blocks: u64) {
        self.block_height += blocks;
        while !self.phase.is_terminal() && !self.window_closed {
            let Some(len) = self.config.phase_length(self.phase) else {
                break;
            };
            let deadline = self.phase_start + len;
            if self.block_height < deadline {
                break;
            }
            self.close_phase(deadline);
        }
    }

    fn close_phase(&mut self, deadline: u64) {
        match self.phase {
            Phase::Registration => {
                if self.registry.len() < self.config.m {
                    self.abort(AbortReason::TooFewRegistered {
                        registered: self.registry.len(),
                    });
                } else {
                    self.enter(Phase::Commitment, deadline);
                }
            }
            Phase::Commitment => {
                let missing = self.active_missing(|s, a| s.commitments.contains_key(a));
                self.drop_all(&missing, Phase::Commitment, FineReason::MissedCommitment);
                self.next_if_feasible(Phase::Commitment, Phase::EncryptedShares, deadline);
            }
            Phase::EncryptedShares => {
                let missing = self.active_missing(|s, a| s.ciphertexts.contains_key(a));
                self.drop_all(&missing, Phase::EncryptedShares, FineReason::MissedShares);
                self.next_if_feasible(Phase::EncryptedShares, Phase::KeyReveal, deadline);
            }
            Phase::KeyReveal => {
                let missing = self.active_missing(|s, a| s.revealed_keys.contains_key(a));
                for address in missing {
                    self.set_status(&address, ParticipantStatus::Withheld);
                    self.events.push(Event::Withheld { address });
                    self.fine(address, FineReason::WithheldKey);
                }
                let revealed = self.revealers().len();
                if revealed < self.config.m {
                    self.abort(AbortReason::TooFewReveals { revealed });
                } else if self.final_phase() == Phase::KeyReveal {
                    self.window_closed = true;
                    let _ = self.finalize();
                } else {
                    self.enter(Phase::Dispute, deadline);
                }
            }
            Phase::Dispute => {
                self.window_closed = true;
                let _ = self.finalize();
            }
            Phase::Finalized | Phase::Aborted => {}
        }
    }

    /// Verifies every revealing dealer and computes the output. Only callable
    /// once the last window has closed; [`advance_blocks`](Self::advance_blocks)
    /// calls it automatically at that point.
    pub fn finalize(&mut self) -> Result<(), ContractError> {
        if self.phase != self.final_phase() || !self.window_closed {
            return Err(ContractError::WrongPhase(self.phase));
        }
        let m = self.config.m;
        let field = self.config.field;
        let round_id = self.config.round_id;
        let revealers: Vec<(Address, FieldElement, SecretKey)> = self
            .revealers()
            .iter()
            .map(|r| (r.address, r.x, self.revealed_keys[&r.address]))
            .collect();
        if revealers.len() < m {
            self.abort(AbortReason::TooFewReveals {
                revealed: revealers.len(),
            });
            return Ok(());
        }

        let mut sum = field.zero();
        let mut survivors = 0usize;
        for &(dealer, _, _) in &revealers {
            if self.excluded.contains_key(&dealer) {
                continue;
            }
            match self.check_dealer(dealer, &revealers, round_id) {
                Ok(a0) => {
                    sum = sum + a0;
                    survivors += 1;
                }
                Err(reason) => self.exclude(dealer, reason),
            }
        }
        if survivors == 0 {
            self.abort(AbortReason::NoValidDealers);
            return Ok(());
        }
        self.output = Some(sum);
        self.phase = Phase::Finalized;
        self.events.push(Event::PhaseChanged {
            phase: Phase::Finalized,
            height: self.block_height,
        });
        self.events.push(Event::Finalized {
            output: sum.value(),
        });
        self.refund_all();
        Ok(())
    }

    /// Opens the dealer's shares for every revealer, checks them against the
    /// commitments, and requires the interpolated polynomial to have degree
    /// exactly `m - 1`. Returns the dealer's `a0`.
    fn check_dealer(
        &self,
        dealer: Address,
        revealers: &[(Address, FieldElement, SecretKey)],
        round_id: RoundId,
    ) -> Result<FieldElement, ExclusionReason> {
        let mut points = Vec::with_capacity(revealers.len());
        for &(recipient, x, sk) in revealers {
            let y = match self.config.mode {
                VerificationMode::Eager => decrypt(
                    &self.config.group,
                    sk,
                    &self.ciphertexts[&dealer][&recipient],
                    &share_context(round_id, &dealer, &recipient),
                ),
                VerificationMode::Lazy => self.plaintexts[&dealer][&recipient],
            };
            if commit_share(round_id, &dealer, &recipient, y)
                != self.commitments[&dealer][&recipient]
            {
                return Err(ExclusionReason::CommitmentMismatch { recipient });
            }
            points.push(SharePoint::new(x, y).expect("registry x values are nonzero"));
        }
        let poly = interpolate_coefficients(&points).expect("registry x values are distinct");
        if poly.degree() != self.config.m - 1 || poly.is_zero() {
            return Err(ExclusionReason::WrongDegree {
                degree: poly.degree(),
            });
        }
        Ok(poly.secret())
    }

    // ---- internals ------------------------------------------------------

    fn require_open(&self, phase: Phase) -> Result<(), ContractError> {
        if self.phase != phase || self.window_closed {
            return Err(ContractError::WrongPhase(self.phase));
        }
        Ok(())
    }

    fn require_active(&self, address: &Address) -> Result<&ParticipantRecord, ContractError> {
        let record = self
            .participant(address)
            .ok_or(ContractError::NotRegistered(*address))?;
        if record.status != ParticipantStatus::Active {
            return Err(ContractError::NotActive(*address));
        }
        Ok(record)
    }

    fn check_full_row<'a>(
        &self,
        keys: impl ExactSizeIterator<Item = &'a Address>,
    ) -> Result<(), ContractError> {
        let got = keys.len();
        if got != self.registry.len() {
            return Err(ContractError::WrongCardinality {
                expected: self.registry.len(),
                got,
            });
        }
        for k in keys {
            if self.participant(k).is_none() {
                return Err(ContractError::UnknownRecipient(*k));
            }
        }
        Ok(())
    }

    fn active_missing(&self, has: impl Fn(&Self, &Address) -> bool) -> Vec<Address> {
        self.registry
            .iter()
            .filter(|r| r.status == ParticipantStatus::Active && !has(self, &r.address))
            .map(|r| r.address)
            .collect()
    }

    fn drop_all(&mut self, addresses: &[Address], phase: Phase, reason: FineReason) {
        for &address in addresses {
            self.set_status(&address, ParticipantStatus::Dropped);
            self.events.push(Event::Dropped { address, phase });
            self.fine(address, reason);
        }
    }

    fn next_if_feasible(&mut self, ending: Phase, next: Phase, deadline: u64) {
        let active = self.active_count();
        if active < self.config.m {
            self.abort(AbortReason::TooFewActive {
                after: ending,
                active,
            });
        } else {
            self.enter(next, deadline);
        }
    }

    fn enter(&mut self, phase: Phase, start: u64) {
        self.phase = phase;
        self.phase_start = start;
        self.events.push(Event::PhaseChanged {
            phase,
            height: start,
        });
    }

    fn set_status(&mut self, address: &Address, status: ParticipantStatus) {
        if let Some(r) = self.registry.iter_mut().find(|r| r.address == *address) {
            r.status = status;
        }
    }

    /// Moves up to one fine from the participant's escrow to the treasury.
    fn fine(&mut self, address: Address, reason: FineReason) {
        let fine = self.config.fine;
        let Some(r) = self.registry.iter_mut().find(|r| r.address == address) else {
            return;
        };
        let amount = fine.min(r.deposit_held);
        r.deposit_held -= amount;
        self.treasury += amount;
        self.events.push(Event::Fined {
            address,
            amount,
            reason,
        });
    }

    /// First exclusion of a dealer carries a fine; later ones are ignored.
    fn exclude(&mut self, dealer: Address, reason: ExclusionReason) {
        if self.excluded.contains_key(&dealer) {
            return;
        }
        self.excluded.insert(dealer, reason);
        self.events.push(Event::DealerExcluded { dealer, reason });
        self.fine(dealer, FineReason::FailedVerification);
    }

    fn abort(&mut self, reason: AbortReason) {
        self.phase = Phase::Aborted;
        self.abort_reason = Some(reason);
        self.events.push(Event::PhaseChanged {
            phase: Phase::Aborted,
            height: self.block_height,
        });
        self.events.push(Event::Aborted { reason });
        self.refund_all();
    }

    fn refund_all(&mut self) {
        for r in self.registry.iter_mut() {
            let amount = std::mem::take(&mut r.deposit_held);
            if amount > 0 {
                *self.ledger.entry(r.address).or_default() += amount as i128;
                self.total_refunded += amount;
                self.events.push(Event::Refunded {
                    address: r.address,
                    amount,
                });
            }
        }
    }
}
