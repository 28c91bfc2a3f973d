#![allow(dead_code)]

use std::collections::BTreeMap;

use drng::contract::{ContractConfig, PhaseLengths, RoundState, VerificationMode};
use drng::crypto::{keygen, Address, GroupParams, KeyPair};
use drng::dealing::{build_deal, Deal, RecipientInfo};
use drng::field::{FieldElement, FieldParams, Polynomial};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn addr(i: u8) -> Address {
    let mut a = [0u8; 20];
    a[19] = i;
    Address(a)
}

pub fn config(m: usize, p: u64, mode: VerificationMode) -> ContractConfig {
    ContractConfig {
        m,
        field: FieldParams::new(p).unwrap(),
        group: GroupParams::default(),
        deposit: 100,
        fine: 40,
        phase_lengths: PhaseLengths::default(),
        mode,
        round_id: 42,
    }
}

/// Drives a contract by hand with fully controlled dealer polynomials.
pub struct Harness {
    pub state: RoundState,
    pub rng: ChaCha20Rng,
    pub addrs: Vec<Address>,
    pub keys: Vec<KeyPair>,
    pub deals: Vec<Option<Deal>>,
}

impl Harness {
    /// Registers participants at addresses `addr(1..=n)` and closes
    /// registration.
    pub fn registered(cfg: ContractConfig, n: u8, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut state = RoundState::deploy(cfg).unwrap();
        let addrs: Vec<Address> = (1..=n).map(addr).collect();
        let keys: Vec<KeyPair> = addrs
            .iter()
            .map(|_| keygen(&GroupParams::default(), &mut rng))
            .collect();
        for (a, k) in addrs.iter().zip(&keys) {
            state.register(*a, k.pk, 100).unwrap();
        }
        let left = state.blocks_remaining();
        state.advance_blocks(left);
        Self {
            state,
            rng,
            addrs,
            keys,
            deals: vec![None; n as usize],
        }
    }

    pub fn field(&self) -> FieldParams {
        self.state.config().field
    }

    pub fn poly(&self, coeffs: &[u64]) -> Polynomial {
        Polynomial::from_values(self.field(), coeffs).unwrap()
    }

    pub fn recipients(&self) -> Vec<RecipientInfo> {
        self.state
            .registry()
            .iter()
            .map(|r| RecipientInfo {
                address: r.address,
                x: r.x,
                pk: r.pk,
            })
            .collect()
    }

    pub fn make_deal(&mut self, i: usize, poly: Polynomial) {
        let cfg = self.state.config().clone();
        let recipients = self.recipients();
        let deal = build_deal(
            poly,
            cfg.round_id,
            self.addrs[i],
            &recipients,
            &cfg.group,
            &mut self.rng,
        )
        .unwrap();
        self.deals[i] = Some(deal);
    }

    pub fn commit(&mut self, i: usize) {
        let digests = self.deals[i].as_ref().unwrap().commitments.clone();
        self.state.post_commitments(self.addrs[i], digests).unwrap();
    }

    pub fn post_shares(&mut self, i: usize) {
        let cts = self.deals[i].as_ref().unwrap().ciphertexts.clone();
        self.state
            .post_encrypted_shares(self.addrs[i], cts, None)
            .unwrap();
    }

    pub fn reveal(&mut self, i: usize) {
        let plaintexts = match self.state.config().mode {
            VerificationMode::Eager => None,
            VerificationMode::Lazy => Some(self.deals[i].as_ref().unwrap().shares.clone()),
        };
        self.state
            .reveal_key(self.addrs[i], self.keys[i].sk, plaintexts)
            .unwrap();
    }

    pub fn close_phase(&mut self) {
        let left = self.state.blocks_remaining();
        self.state.advance_blocks(left);
    }

    /// Deals the given polynomials, commits, posts shares, and closes both
    /// phases, leaving the contract in the reveal phase.
    pub fn deal_all(&mut self, polys: Vec<Polynomial>) {
        for (i, p) in polys.into_iter().enumerate() {
            self.make_deal(i, p);
        }
        for i in 0..self.addrs.len() {
            self.commit(i);
        }
        self.close_phase();
        for i in 0..self.addrs.len() {
            self.post_shares(i);
        }
        self.close_phase();
    }

    pub fn shares_of(&self, i: usize) -> BTreeMap<Address, FieldElement> {
        self.deals[i].as_ref().unwrap().shares.clone()
    }
}

/// Deposits in equal refunds out plus the treasury, with nothing left in
/// escrow.
pub fn assert_conserved(state: &RoundState) {
    assert!(state.phase().is_terminal());
    assert_eq!(
        state.total_deposited(),
        state.total_refunded() + state.treasury()
    );
    assert!(state.funds_conserved());
    assert!(state.registry().iter().all(|r| r.deposit_held == 0));
    let net: i128 = state.ledger().values().sum();
    assert_eq!(net, -(state.treasury() as i128));
}
