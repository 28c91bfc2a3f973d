//! Dealer side: sample a secret polynomial, evaluate it at every registered
//! participant's x, and package per-recipient commitments and ciphertexts.

use std::collections::{BTreeMap, HashSet};

use rand::RngCore;
use thiserror::Error;

use crate::crypto::{
    commit_share, decrypt, encrypt, share_context, Address, Ciphertext, Digest, GroupParams,
    KeyPair, PublicKey, RoundId,
};
use crate::field::{poly_eval, FieldElement, FieldError, FieldParams, Polynomial};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DealError {
    #[error("threshold {m} must satisfy 1 <= m < p = {p}")]
    InvalidThreshold { m: usize, p: u64 },
    #[error("two recipients share x = {0}")]
    DuplicateRecipientX(u64),
    #[error("recipient {0} has x = 0")]
    ZeroRecipientX(Address),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Everything a dealer needs to know about one recipient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecipientInfo {
    pub address: Address,
    pub x: FieldElement,
    pub pk: PublicKey,
}

/// Identifies one cell of the dealer x recipient share matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShareSlot {
    pub round_id: RoundId,
    pub dealer: Address,
    pub recipient: Address,
}

impl ShareSlot {
    pub fn context(&self) -> Vec<u8> {
        share_context(self.round_id, &self.dealer, &self.recipient)
    }

    pub fn commit(&self, y: FieldElement) -> Digest {
        commit_share(self.round_id, &self.dealer, &self.recipient, y)
    }
}

/// One dealer's contribution to a round. The polynomial stays with the dealer;
/// only commitments and ciphertexts are ever posted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deal {
    pub round_id: RoundId,
    pub dealer: Address,
    pub polynomial: Polynomial,
    pub shares: BTreeMap<Address, FieldElement>,
    pub commitments: BTreeMap<Address, Digest>,
    pub ciphertexts: BTreeMap<Address, Ciphertext>,
}

impl Deal {
    pub fn slot(&self, recipient: Address) -> ShareSlot {
        ShareSlot {
            round_id: self.round_id,
            dealer: self.dealer,
            recipient,
        }
    }
}

/// Samples `m` coefficients uniformly from `[1, p-1]`, so the degree is
/// exactly `m - 1`.
pub fn generate_polynomial<R: RngCore + ?Sized>(
    m: usize,
    field: FieldParams,
    rng: &mut R,
) -> Result<Polynomial, DealError> {
    if m < 1 || m as u64 >= field.modulus() {
        return Err(DealError::InvalidThreshold {
            m,
            p: field.modulus(),
        });
    }
    let coeffs = (0..m).map(|_| field.sample_nonzero(rng)).collect();
    Ok(Polynomial::new(field, coeffs)?)
}

pub fn build_deal<R: RngCore + ?Sized>(
    poly: Polynomial,
    round_id: RoundId,
    dealer: Address,
    recipients: &[RecipientInfo],
    group: &GroupParams,
    rng: &mut R,
) -> Result<Deal, DealError> {
    let mut seen = HashSet::new();
    for r in recipients {
        if r.x.is_zero() {
            return Err(DealError::ZeroRecipientX(r.address));
        }
        if !seen.insert(r.x) {
            return Err(DealError::DuplicateRecipientX(r.x.value()));
        }
    }

    let mut deal = Deal {
        round_id,
        dealer,
        polynomial: poly,
        shares: BTreeMap::new(),
        commitments: BTreeMap::new(),
        ciphertexts: BTreeMap::new(),
    };
    for r in recipients {
        let y = poly_eval(&deal.polynomial, r.x)?;
        let slot = deal.slot(r.address);
        deal.shares.insert(r.address, y);
        deal.commitments.insert(r.address, slot.commit(y));
        deal.ciphertexts
            .insert(r.address, encrypt(group, r.pk, y, &slot.context(), rng));
    }
    Ok(deal)
}

/// Recipient-side check that the ciphertext addressed to us opens to the
/// committed value.
pub fn verify_own_share(
    group: &GroupParams,
    ciphertext: &Ciphertext,
    own: &KeyPair,
    expected: &Digest,
    slot: &ShareSlot,
) -> bool {
    let y = decrypt(group, own.sk, ciphertext, &slot.context());
    slot.commit(y) == *expected
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use crate::field::{interpolate_at_zero, interpolate_coefficients, SharePoint};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn addr(i: u8) -> Address {
        let mut a = [0u8; 20];
        a[19] = i;
        Address(a)
    }

    fn recipients(
        field: FieldParams,
        group: &GroupParams,
        xs: &[u64],
        rng: &mut ChaCha20Rng,
    ) -> (Vec<RecipientInfo>, Vec<KeyPair>) {
        let keys: Vec<KeyPair> = xs.iter().map(|_| keygen(group, rng)).collect();
        let infos = xs
            .iter()
            .zip(&keys)
            .map(|(&x, kp)| RecipientInfo {
                address: addr(x as u8),
                x: field.reduce(x),
                pk: kp.pk,
            })
            .collect();
        (infos, keys)
    }

    #[test]
    fn generate_polynomial_bounds() {
        let f = FieldParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let one = generate_polynomial(1, f, &mut rng).unwrap();
        assert_eq!(one.degree(), 0);
        assert!(!one.secret().is_zero());

        let three = generate_polynomial(3, f, &mut rng).unwrap();
        assert_eq!(three.degree(), 2);
        assert!(three.coeffs().iter().all(|c| !c.is_zero()));

        assert!(matches!(
            generate_polynomial(0, f, &mut rng),
            Err(DealError::InvalidThreshold { m: 0, .. })
        ));
        let small = FieldParams::new(5).unwrap();
        assert!(generate_polynomial(4, small, &mut rng).is_ok());
        assert!(generate_polynomial(5, small, &mut rng).is_err());

        let a = generate_polynomial(4, f, &mut ChaCha20Rng::seed_from_u64(8)).unwrap();
        let b = generate_polynomial(4, f, &mut ChaCha20Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deal_shares_match_direct_evaluation() {
        let f = FieldParams::new(11).unwrap();
        let group = GroupParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (infos, keys) = recipients(f, &group, &[1, 2, 3], &mut rng);
        let poly = Polynomial::from_values(f, &[3, 2]).unwrap();
        let deal = build_deal(poly, 9, addr(1), &infos, &group, &mut rng).unwrap();
        // Y = 3 + 2x mod 11
        let expected: Vec<u64> = [1u64, 2, 3].iter().map(|x| (3 + 2 * x) % 11).collect();
        assert_eq!(expected, vec![5, 7, 9]);
        let got: Vec<u64> = infos
            .iter()
            .map(|r| deal.shares[&r.address].value())
            .collect();
        assert_eq!(got, expected);
        assert_eq!(deal.commitments.len(), 3);
        assert_eq!(deal.ciphertexts.len(), 3);

        // the dealer (x = 1) can open its own share
        let own = deal.slot(addr(1));
        let y = decrypt(
            &group,
            keys[0].sk,
            &deal.ciphertexts[&addr(1)],
            &own.context(),
        );
        assert_eq!(y.value(), 5);
        for (r, kp) in infos.iter().zip(&keys) {
            let slot = deal.slot(r.address);
            assert!(verify_own_share(
                &group,
                &deal.ciphertexts[&r.address],
                kp,
                &deal.commitments[&r.address],
                &slot
            ));
        }
    }

    #[test]
    fn build_deal_rejects_bad_recipients() {
        let f = FieldParams::new(11).unwrap();
        let group = GroupParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let poly = Polynomial::from_values(f, &[3, 2]).unwrap();
        let (mut infos, _) = recipients(f, &group, &[1, 2, 13], &mut rng);
        assert_eq!(
            build_deal(poly.clone(), 0, addr(1), &infos, &group, &mut rng),
            Err(DealError::DuplicateRecipientX(2))
        );
        infos[2].x = f.zero();
        assert_eq!(
            build_deal(poly, 0, addr(1), &infos, &group, &mut rng),
            Err(DealError::ZeroRecipientX(infos[2].address))
        );
    }

    #[test]
    fn verify_own_share_detects_tampering() {
        let f = FieldParams::default();
        let group = GroupParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for trial in 0..50u64 {
            let (infos, keys) = recipients(f, &group, &[10, 20, 30, 40], &mut rng);
            let poly = generate_polynomial(3, f, &mut rng).unwrap();
            let deal = build_deal(poly, trial, addr(10), &infos, &group, &mut rng).unwrap();
            let me = infos[1].address;
            let slot = deal.slot(me);
            let commitment = deal.commitments[&me];

            let forged = encrypt(
                &group,
                keys[1].pk,
                deal.shares[&me] + f.one(),
                &slot.context(),
                &mut rng,
            );
            assert!(!verify_own_share(
                &group,
                &forged,
                &keys[1],
                &commitment,
                &slot
            ));

            let wrong_slot = ShareSlot {
                round_id: trial + 1,
                ..slot
            };
            assert!(!verify_own_share(
                &group,
                &deal.ciphertexts[&me],
                &keys[1],
                &commitment,
                &wrong_slot
            ));
            assert!(verify_own_share(
                &group,
                &deal.ciphertexts[&me],
                &keys[1],
                &commitment,
                &slot
            ));
        }
    }

    #[test]
    fn deal_reconstructs_from_any_threshold_subset() {
        let f = FieldParams::new(97).unwrap();
        let group = GroupParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let xs = [3u64, 8, 15, 40, 77];
        let (infos, _) = recipients(f, &group, &xs, &mut rng);
        let m = 3;
        let poly = generate_polynomial(m, f, &mut rng).unwrap();
        let deal = build_deal(poly.clone(), 1, addr(3), &infos, &group, &mut rng).unwrap();
        let pts: Vec<SharePoint> = infos
            .iter()
            .map(|r| SharePoint::new(r.x, deal.shares[&r.address]).unwrap())
            .collect();
        for a in 0..5 {
            for b in a + 1..5 {
                for c in b + 1..5 {
                    let sub = [pts[a], pts[b], pts[c]];
                    assert_eq!(interpolate_at_zero(&sub).unwrap(), poly.secret());
                }
            }
        }
        assert_eq!(interpolate_coefficients(&pts).unwrap(), poly);
        for r in &infos {
            assert_eq!(
                deal.slot(r.address).commit(deal.shares[&r.address]),
                deal.commitments[&r.address]
            );
        }
    }
}
