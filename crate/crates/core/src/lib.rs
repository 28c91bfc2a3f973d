//! Threshold-encrypted commit-reveal random beacon.
//!
//! Each participant deals Shamir shares of a secret `a0` to every other
//! participant, commits to each share, encrypts it under the recipient's key,
//! and finally reveals its own private key. The contract then decrypts,
//! checks commitments and polynomial degree, and outputs the sum of the
//! surviving dealers' `a0` values mod p. Withholding a key no longer lets the
//! last revealer pick the output, since every dealer's secret can be
//! interpolated from any `m` revealed keys.
//!
//! Modules, bottom up:
//! - [`field`]: prime-field arithmetic and Lagrange interpolation
//! - [`crypto`]: commitments and the verifiable-key encryption scheme
//! - [`dealing`]: dealer-side polynomial and share packaging
//! - [`contract`]: the on-chain state machine
//! - [`transcript`]: line-delimited transaction/event log and replay
//! - [`agents`]: honest and adversarial participant strategies
//! - [`simulator`]: round and batch runner
//! - [`cli`]: the `drng-sim` command line
//!
//! All parameters are simulation-sized; nothing here is production
//! cryptography.

pub mod agents;
pub mod cli;
pub mod contract;
pub mod crypto;
pub mod dealing;
pub mod field;
pub mod simulator;
pub mod transcript;

pub use contract::{BeaconOutput, ContractConfig, Phase, RoundState, VerificationMode};
pub use field::{FieldElement, FieldParams, Polynomial};
pub use simulator::{run_batch, run_round, ScenarioConfig};
