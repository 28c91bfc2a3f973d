//! Line-delimited transcript of contract transactions and their events.
//!
//! Every line is one JSON object: the transaction, whether it was accepted,
//! and the events (or the rejection message) it produced. Byte-valued fields
//! use lowercase hex: addresses 20 bytes, digests 32 bytes, and group/field
//! elements, keys and round ids as fixed 8-byte big-endian values.
//!
//! Replaying a transcript against a fresh deployment must reproduce every
//! recorded outcome; [`replay`] checks that line by line.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::contract::{ContractConfig, ContractError, Event, RoundState, Transaction, TxKind};
use crate::crypto::{Address, Ciphertext, Digest, PublicKey, SecretKey};
use crate::field::{FieldElement, FieldParams};

/// `#[serde(with = "hex_u64")]` for 8-byte big-endian hex fields.
pub mod hex_u64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v.to_be_bytes()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }

    pub fn parse(s: &str) -> Result<u64, String> {
        let bytes = hex::decode(s).map_err(|e| format!("{s}: {e}"))?;
        let arr: [u8; 8] = bytes
            .try_into()
            .map_err(|_| format!("{s}: expected 8 bytes"))?;
        Ok(u64::from_be_bytes(arr))
    }
}

/// A `u64` that serializes as 8-byte big-endian hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Hex64(pub u64);

impl Serialize for Hex64 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        hex_u64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Hex64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        hex_u64::deserialize(d).map(Hex64)
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("value {0} is not a field element")]
    OutOfField(u64),
    #[error(transparent)]
    Deploy(#[from] ContractError),
    #[error("replay diverged at seq {seq}: expected {expected}, got {got}")]
    Diverged {
        seq: usize,
        expected: String,
        got: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiphertextWire {
    pub c1: Hex64,
    pub c2: Hex64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TxKindWire {
    Register {
        pk: Hex64,
        deposit: u64,
    },
    PostCommitments {
        digests: BTreeMap<Address, Digest>,
    },
    PostShares {
        ciphertexts: BTreeMap<Address, CiphertextWire>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plaintexts: Option<BTreeMap<Address, Hex64>>,
    },
    Reveal {
        sk: Hex64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plaintexts: Option<BTreeMap<Address, Hex64>>,
    },
    Dispute {
        dealer: Address,
        recipient: Address,
    },
    Advance {
        blocks: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxWire {
    pub sender: Address,
    #[serde(flatten)]
    pub kind: TxKindWire,
}

fn field_row_to_wire(row: &BTreeMap<Address, FieldElement>) -> BTreeMap<Address, Hex64> {
    row.iter().map(|(a, y)| (*a, Hex64(y.value()))).collect()
}

fn field_row_from_wire(
    row: &BTreeMap<Address, Hex64>,
    field: FieldParams,
) -> Result<BTreeMap<Address, FieldElement>, TranscriptError> {
    row.iter()
        .map(|(a, v)| Ok((*a, to_field(v.0, field)?)))
        .collect()
}

fn to_field(v: u64, field: FieldParams) -> Result<FieldElement, TranscriptError> {
    field.element(v).map_err(|_| TranscriptError::OutOfField(v))
}

impl From<&Transaction> for TxWire {
    fn from(tx: &Transaction) -> Self {
        let kind = match &tx.kind {
            TxKind::Register { pk, deposit } => TxKindWire::Register {
                pk: Hex64(pk.0),
                deposit: *deposit,
            },
            TxKind::PostCommitments { digests } => TxKindWire::PostCommitments {
                digests: digests.clone(),
            },
            TxKind::PostShares {
                ciphertexts,
                plaintexts,
            } => TxKindWire::PostShares {
                ciphertexts: ciphertexts
                    .iter()
                    .map(|(a, ct)| {
                        (
                            *a,
                            CiphertextWire {
                                c1: Hex64(ct.c1),
                                c2: Hex64(ct.c2.value()),
                            },
                        )
                    })
                    .collect(),
                plaintexts: plaintexts.as_ref().map(field_row_to_wire),
            },
            TxKind::Reveal { sk, plaintexts } => TxKindWire::Reveal {
                sk: Hex64(sk.0),
                plaintexts: plaintexts.as_ref().map(field_row_to_wire),
            },
            TxKind::Dispute { dealer, recipient } => TxKindWire::Dispute {
                dealer: *dealer,
                recipient: *recipient,
            },
            TxKind::Advance { blocks } => TxKindWire::Advance { blocks: *blocks },
        };
        TxWire {
            sender: tx.sender,
            kind,
        }
    }
}

impl TxWire {
    pub fn to_transaction(&self, field: FieldParams) -> Result<Transaction, TranscriptError> {
        let kind = match &self.kind {
            TxKindWire::Register { pk, deposit } => TxKind::Register {
                pk: PublicKey(pk.0),
                deposit: *deposit,
            },
            TxKindWire::PostCommitments { digests } => TxKind::PostCommitments {
                digests: digests.clone(),
            },
            TxKindWire::PostShares {
                ciphertexts,
                plaintexts,
            } => TxKind::PostShares {
                ciphertexts: ciphertexts
                    .iter()
                    .map(|(a, ct)| {
                        Ok((
                            *a,
                            Ciphertext {
                                c1: ct.c1.0,
                                c2: to_field(ct.c2.0, field)?,
                            },
                        ))
                    })
                    .collect::<Result<_, TranscriptError>>()?,
                plaintexts: plaintexts
                    .as_ref()
                    .map(|row| field_row_from_wire(row, field))
                    .transpose()?,
            },
            TxKindWire::Reveal { sk, plaintexts } => TxKind::Reveal {
                sk: SecretKey(sk.0),
                plaintexts: plaintexts
                    .as_ref()
                    .map(|row| field_row_from_wire(row, field))
                    .transpose()?,
            },
            TxKindWire::Dispute { dealer, recipient } => TxKind::Dispute {
                dealer: *dealer,
                recipient: *recipient,
            },
            TxKindWire::Advance { blocks } => TxKind::Advance { blocks: *blocks },
        };
        Ok(Transaction {
            sender: self.sender,
            kind,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub seq: usize,
    /// Block height before the transaction was applied.
    pub height: u64,
    pub tx: TxWire,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Applies transactions to a contract and records every outcome.
#[derive(Debug, Clone)]
pub struct Recorder {
    state: RoundState,
    lines: Vec<TranscriptLine>,
}

impl Recorder {
    pub fn new(state: RoundState) -> Self {
        Self {
            state,
            lines: Vec::new(),
        }
    }

    pub fn state(&self) -> &RoundState {
        &self.state
    }

    pub fn lines(&self) -> &[TranscriptLine] {
        &self.lines
    }

    pub fn submit(&mut self, tx: Transaction) -> Result<Vec<Event>, ContractError> {
        let height = self.state.block_height();
        let result = self.state.apply(&tx);
        let (accepted, events, error) = match &result {
            Ok(ev) => (true, ev.clone(), None),
            Err(e) => (false, Vec::new(), Some(e.to_string())),
        };
        self.lines.push(TranscriptLine {
            seq: self.lines.len(),
            height,
            tx: TxWire::from(&tx),
            accepted,
            events,
            error,
        });
        result
    }

    pub fn into_parts(self) -> (RoundState, Vec<TranscriptLine>) {
        (self.state, self.lines)
    }
}

pub fn to_jsonl(lines: &[TranscriptLine]) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(line).expect("transcript lines serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<TranscriptLine>, TranscriptError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| TranscriptError::Json {
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// Re-executes a transcript on a fresh deployment and checks each recorded
/// outcome. Returns the terminal state.
pub fn replay(
    config: ContractConfig,
    lines: &[TranscriptLine],
) -> Result<RoundState, TranscriptError> {
    let mut recorder = Recorder::new(RoundState::deploy(config)?);
    let field = recorder.state().config().field;
    for line in lines {
        let tx = line.tx.to_transaction(field)?;
        let _ = recorder.submit(tx);
        let got = recorder.lines().last().expect("just pushed");
        if got.accepted != line.accepted || got.events != line.events || got.error != line.error {
            return Err(TranscriptError::Diverged {
                seq: line.seq,
                expected: serde_json::to_string(line).unwrap_or_default(),
                got: serde_json::to_string(got).unwrap_or_default(),
            });
        }
    }
    Ok(recorder.into_parts().0)
}
