//! Participant behaviours that drive the contract.
//!
//! Besides the honest strategy there are the adversaries a round has to
//! survive: dropouts, key withholders, and a colluding coalition of at least
//! `m` participants that decrypts every dealer's shares as soon as they are
//! posted and then picks which of its members withhold their keys so that the
//! output satisfies a predicate. A few deliberately faulty dealers are also
//! provided for exercising the contract's verification rules.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{Phase, RoundState, Transaction, TxKind, VerificationMode};
use crate::crypto::{
    decrypt, encrypt, Address, Ciphertext, GroupParams, KeyPair, RoundId, SecretKey,
};
use crate::dealing::{build_deal, generate_polynomial, Deal, DealError, RecipientInfo, ShareSlot};
use crate::field::{interpolate_coefficients, FieldElement, FieldParams, Polynomial, SharePoint};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("coalition of {size} cannot decrypt with threshold {m}")]
    InsufficientCoalition { size: usize, m: usize },
    #[error("coalition member {0} is not registered")]
    UnknownMember(Address),
    #[error(transparent)]
    Deal(#[from] DealError),
}

/// Objective of a grinding coalition, evaluated on a candidate output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// Least significant bit is 1.
    Lsb1,
    /// Least significant bit is 0.
    Lsb0,
    Always,
    Never,
}

impl Predicate {
    pub fn holds(&self, v: FieldElement) -> bool {
        match self {
            Predicate::Lsb1 => v.value() & 1 == 1,
            Predicate::Lsb0 => v.value() & 1 == 0,
            Predicate::Always => true,
            Predicate::Never => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Strategy {
    Honest,
    /// Honest until `phase`, silent from then on.
    DropoutAt(Phase),
    /// Honest until the key reveal, which it skips.
    WithholdKey,
    ColludingGrinder {
        coalition: Vec<Address>,
        predicate: Predicate,
        max_withhold: usize,
    },
    /// Deals a polynomial of the given degree instead of `m - 1`.
    WrongDegree {
        degree: usize,
    },
    /// Commits to (and in lazy mode posts) the true share for `recipient`,
    /// but encrypts a different value.
    CorruptShare {
        recipient: Address,
    },
    /// Otherwise honest; files a dispute against one share during the
    /// dispute window whether or not it is bad.
    FalseAccuser {
        dealer: Address,
        recipient: Address,
    },
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Honest => "honest",
            Strategy::DropoutAt(_) => "dropout",
            Strategy::WithholdKey => "withhold",
            Strategy::ColludingGrinder { .. } => "grinder",
            Strategy::WrongDegree { .. } => "wrong_degree",
            Strategy::CorruptShare { .. } => "corrupt_share",
            Strategy::FalseAccuser { .. } => "false_accuser",
        }
    }

    fn audits_disputes(&self) -> bool {
        matches!(self, Strategy::Honest | Strategy::FalseAccuser { .. })
    }
}

/// One participant: its identity, keys, private polynomial and strategy.
#[derive(Debug, Clone)]
pub struct Agent {
    pub address: Address,
    pub keys: KeyPair,
    pub strategy: Strategy,
    deal: Option<Deal>,
    withhold: bool,
}

impl Agent {
    pub fn new(address: Address, keys: KeyPair, strategy: Strategy) -> Self {
        Self {
            address,
            keys,
            strategy,
            deal: None,
            withhold: false,
        }
    }

    pub fn deal(&self) -> Option<&Deal> {
        self.deal.as_ref()
    }

    pub fn polynomial(&self) -> Option<&Polynomial> {
        self.deal.as_ref().map(|d| &d.polynomial)
    }

    /// Set by the coalition's plan before the reveal phase.
    pub fn set_withhold(&mut self, withhold: bool) {
        self.withhold = withhold;
    }

    pub fn withholds(&self) -> bool {
        self.withhold
    }

    fn silent_in(&self, phase: Phase) -> bool {
        match &self.strategy {
            Strategy::DropoutAt(p) => phase >= *p,
            Strategy::WithholdKey => phase >= Phase::KeyReveal,
            Strategy::ColludingGrinder { .. } => phase >= Phase::KeyReveal && self.withhold,
            _ => false,
        }
    }

    /// Transactions this agent submits in the contract's current phase.
    pub fn act<R: RngCore + ?Sized>(
        &mut self,
        view: &RoundState,
        rng: &mut R,
    ) -> Result<Vec<Transaction>, AgentError> {
        let phase = view.phase();
        if self.silent_in(phase) || phase.is_terminal() {
            return Ok(Vec::new());
        }
        let me = self.address;
        let tx = |kind| Transaction { sender: me, kind };

        if phase == Phase::Registration {
            if view.participant(&me).is_some() {
                return Ok(Vec::new());
            }
            return Ok(vec![tx(TxKind::Register {
                pk: self.keys.pk,
                deposit: view.config().deposit,
            })]);
        }
        let Some(record) = view.participant(&me) else {
            return Ok(Vec::new());
        };
        let active = record.status == crate::contract::ParticipantStatus::Active;

        match phase {
            Phase::Commitment if active && !view.commitments().contains_key(&me) => {
                let deal = self.make_deal(view, rng)?;
                let digests = deal.commitments.clone();
                self.deal = Some(deal);
                Ok(vec![tx(TxKind::PostCommitments { digests })])
            }
            Phase::EncryptedShares if active && !view.ciphertexts().contains_key(&me) => {
                let Some(deal) = &self.deal else {
                    return Ok(Vec::new());
                };
                Ok(vec![tx(TxKind::PostShares {
                    ciphertexts: deal.ciphertexts.clone(),
                    plaintexts: None,
                })])
            }
            Phase::KeyReveal if active && !view.revealed_keys().contains_key(&me) => {
                let plaintexts = match view.config().mode {
                    VerificationMode::Eager => None,
                    VerificationMode::Lazy => self.deal.as_ref().map(|d| d.shares.clone()),
                };
                Ok(vec![tx(TxKind::Reveal {
                    sk: self.keys.sk,
                    plaintexts,
                })])
            }
            Phase::Dispute if self.strategy.audits_disputes() => Ok(self
                .disputes(view)
                .into_iter()
                .map(|(dealer, recipient)| tx(TxKind::Dispute { dealer, recipient }))
                .collect()),
            _ => Ok(Vec::new()),
        }
    }

    fn make_deal<R: RngCore + ?Sized>(
        &self,
        view: &RoundState,
        rng: &mut R,
    ) -> Result<Deal, AgentError> {
        let cfg = view.config();
        let recipients: Vec<RecipientInfo> = view
            .registry()
            .iter()
            .map(|r| RecipientInfo {
                address: r.address,
                x: r.x,
                pk: r.pk,
            })
            .collect();
        let coeff_count = match self.strategy {
            Strategy::WrongDegree { degree } => degree + 1,
            _ => cfg.m,
        };
        let poly = generate_polynomial(coeff_count, cfg.field, rng)?;
        let mut deal = build_deal(
            poly,
            cfg.round_id,
            self.address,
            &recipients,
            &cfg.group,
            rng,
        )?;

        if let Strategy::CorruptShare { recipient } = self.strategy {
            if let Some(info) = recipients.iter().find(|r| r.address == recipient) {
                let slot = deal.slot(recipient);
                let forged = deal.shares[&recipient] + cfg.field.one();
                deal.ciphertexts.insert(
                    recipient,
                    encrypt(&cfg.group, info.pk, forged, &slot.context(), rng),
                );
            }
        }
        Ok(deal)
    }

    /// Lazy-mode audit: every posted plaintext whose recipient key is public
    /// is checked against the decryption and the commitment. At most one
    /// dispute per dealer is filed.
    fn disputes(&self, view: &RoundState) -> Vec<(Address, Address)> {
        let cfg = view.config();
        let mut out = Vec::new();
        if let Strategy::FalseAccuser { dealer, recipient } = self.strategy {
            if !view.is_adjudicated(&dealer, &recipient) {
                out.push((dealer, recipient));
            }
            return out;
        }
        for (dealer, row) in view.plaintexts() {
            if view.excluded().contains_key(dealer) {
                continue;
            }
            for (recipient, claimed) in row {
                let Some(sk) = view.revealed_keys().get(recipient) else {
                    continue;
                };
                if view.is_adjudicated(dealer, recipient) {
                    continue;
                }
                let slot = ShareSlot {
                    round_id: cfg.round_id,
                    dealer: *dealer,
                    recipient: *recipient,
                };
                let ct = &view.ciphertexts()[dealer][recipient];
                let opened = decrypt(&cfg.group, *sk, ct, &slot.context());
                if opened != *claimed
                    || slot.commit(*claimed) != view.commitments()[dealer][recipient]
                {
                    out.push((*dealer, *recipient));
                    break;
                }
            }
        }
        out
    }
}

/// A colluding member's decryption capability.
#[derive(Debug, Clone, Copy)]
pub struct CoalitionKey {
    pub address: Address,
    pub x: FieldElement,
    pub sk: SecretKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconstruction {
    pub polynomial: Polynomial,
    pub secret: FieldElement,
}

/// Decrypts, for every dealer row present, the shares addressed to coalition
/// members and interpolates them. Rows missing any member's ciphertext are
/// skipped.
pub fn coalition_reconstruct(
    m: usize,
    members: &[CoalitionKey],
    ciphertexts: &BTreeMap<Address, BTreeMap<Address, Ciphertext>>,
    round_id: RoundId,
    group: &GroupParams,
) -> Result<BTreeMap<Address, Reconstruction>, AgentError> {
    if members.len() < m {
        return Err(AgentError::InsufficientCoalition {
            size: members.len(),
            m,
        });
    }
    let mut out = BTreeMap::new();
    'dealers: for (dealer, row) in ciphertexts {
        let mut points = Vec::with_capacity(members.len());
        for key in members {
            let Some(ct) = row.get(&key.address) else {
                continue 'dealers;
            };
            let slot = ShareSlot {
                round_id,
                dealer: *dealer,
                recipient: key.address,
            };
            let y = decrypt(group, key.sk, ct, &slot.context());
            points.push(SharePoint::new(key.x, y).expect("registered x is nonzero"));
        }
        let polynomial =
            interpolate_coefficients(&points).expect("registered x values are distinct");
        let secret = polynomial.secret();
        out.insert(*dealer, Reconstruction { polynomial, secret });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrindChoice {
    /// Members chosen to withhold their keys (empty if nothing satisfied the
    /// predicate).
    pub withhold: Vec<Address>,
    /// Output the contract will produce if the choice is executed.
    pub predicted: FieldElement,
    pub satisfied: bool,
    /// Every candidate in enumeration order.
    pub candidates: Vec<(Vec<Address>, FieldElement)>,
}

fn combinations(items: &[Address], k: usize) -> Vec<Vec<Address>> {
    fn go(
        items: &[Address],
        k: usize,
        start: usize,
        cur: &mut Vec<Address>,
        out: &mut Vec<Vec<Address>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Enumerates withhold sets `W` of the coalition with `|W| <= max_withhold`,
/// by size and then lexicographically by address; the candidate output for
/// `W` is the sum of every other dealer's `a0`. Picks the first candidate
/// satisfying `predicate`, falling back to withholding nobody.
pub fn grind_select(
    secrets: &BTreeMap<Address, FieldElement>,
    coalition: &[Address],
    max_withhold: usize,
    predicate: Predicate,
    field: FieldParams,
) -> GrindChoice {
    let mut members = coalition.to_vec();
    members.sort();
    members.dedup();

    let mut candidates = Vec::new();
    for size in 0..=max_withhold.min(members.len()) {
        for w in combinations(&members, size) {
            let value = secrets
                .iter()
                .filter(|(d, _)| !w.contains(d))
                .fold(field.zero(), |acc, (_, a0)| acc + *a0);
            candidates.push((w, value));
        }
    }
    let pick = candidates.iter().find(|(_, v)| predicate.holds(*v));
    let (withhold, predicted, satisfied) = match pick {
        Some((w, v)) => (w.clone(), *v, true),
        None => (Vec::new(), candidates[0].1, false),
    };
    GrindChoice {
        withhold,
        predicted,
        satisfied,
        candidates,
    }
}

#[derive(Debug, Clone)]
pub struct GrindPlan {
    pub reconstructed: BTreeMap<Address, Reconstruction>,
    pub choice: GrindChoice,
}

/// The coalition's move at the start of the reveal phase: reconstruct every
/// posted dealer's secret, then choose who withholds.
pub fn plan_grind(
    view: &RoundState,
    members: &[(Address, SecretKey)],
    max_withhold: usize,
    predicate: Predicate,
) -> Result<GrindPlan, AgentError> {
    let cfg = view.config();
    let keys = members
        .iter()
        .map(|(a, sk)| {
            let r = view.participant(a).ok_or(AgentError::UnknownMember(*a))?;
            Ok(CoalitionKey {
                address: *a,
                x: r.x,
                sk: *sk,
            })
        })
        .collect::<Result<Vec<_>, AgentError>>()?;
    let reconstructed =
        coalition_reconstruct(cfg.m, &keys, view.ciphertexts(), cfg.round_id, &cfg.group)?;
    let secrets = reconstructed
        .iter()
        .map(|(d, r)| (*d, r.secret))
        .collect::<BTreeMap<_, _>>();
    let addresses: Vec<Address> = members.iter().map(|(a, _)| *a).collect();
    let choice = grind_select(&secrets, &addresses, max_withhold, predicate, cfg.field);
    Ok(GrindPlan {
        reconstructed,
        choice,
    })
}
