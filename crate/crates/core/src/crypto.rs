//! Share commitments and a hashed-ElGamal encryption scheme over the
//! multiplicative group of a safe prime.
//!
//! The key pair is `(sk, pk = g^sk mod q)`, so a revealed secret key can be
//! checked against the registered public key with one exponentiation. Shares
//! are encrypted by adding a SHA-256-derived pad in `Z_p`.
//!
//! Parameters are simulation-sized (64-bit group). This is **not** production
//! cryptography.
//!
//! Wire encodings (all big-endian, fixed width): group and field elements are
//! 8 bytes, addresses 20 bytes, round ids 8 bytes.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::field::{is_prime, pow_mod, FieldElement, FieldParams};

pub const COMMIT_TAG: &[u8] = b"DRNG-COMMIT-V1";
pub const KDF_TAG: &[u8] = b"DRNG-KDF-V1";

/// Largest 64-bit safe prime.
pub const DEFAULT_GROUP_PRIME: u64 = 18_446_744_073_709_550_147;
pub const DEFAULT_GENERATOR: u64 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("group modulus {0} is not a safe prime")]
    NotSafePrime(u64),
    #[error("{g} does not generate the full group mod {q}")]
    BadGenerator { q: u64, g: u64 },
    #[error("invalid hex: {0}")]
    BadHex(String),
}

/// Round identifier, encoded as 8 big-endian bytes.
pub type RoundId = u64;

/// A 20-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    /// The address read as a 160-bit unsigned integer, reduced mod p.
    pub fn to_field(&self, field: FieldParams) -> FieldElement {
        field.reduce_be_bytes(&self.0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

impl FromStr for Address {
    type Err = CryptoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = s.strip_prefix("0x").unwrap_or(s);
        let bytes = hex::decode(raw).map_err(|_| CryptoError::BadHex(s.to_string()))?;
        let arr: [u8; 20] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadHex(s.to_string()))?;
        Ok(Address(arr))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = CryptoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|_| CryptoError::BadHex(s.to_string()))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadHex(s.to_string()))?;
        Ok(Digest(arr))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for part in parts {
        h.update(part);
    }
    h.finalize().into()
}

/// Safe prime `q` and a generator `g` of `Z_q^*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupParams {
    q: u64,
    g: u64,
}

impl GroupParams {
    pub fn new(q: u64, g: u64) -> Result<Self, CryptoError> {
        if q < 5 || !is_prime(q) || !is_prime((q - 1) / 2) {
            return Err(CryptoError::NotSafePrime(q));
        }
        // order of g divides 2 * (q-1)/2; exclude orders 1, 2 and (q-1)/2
        if g <= 1 || g >= q || pow_mod(g, 2, q) == 1 || pow_mod(g, (q - 1) / 2, q) == 1 {
            return Err(CryptoError::BadGenerator { q, g });
        }
        Ok(Self { q, g })
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn generator(&self) -> u64 {
        self.g
    }

    fn exp(&self, base: u64, e: u64) -> u64 {
        pow_mod(base, e, self.q)
    }

    /// Uniform exponent in `[1, q-2]`.
    fn sample_exponent<R: RngCore + ?Sized>(&self, rng: &mut R) -> u64 {
        let range = self.q - 2;
        let zone = u64::MAX - (u64::MAX % range);
        loop {
            let v = rng.next_u64();
            if v < zone {
                return 1 + v % range;
            }
        }
    }
}

impl Default for GroupParams {
    fn default() -> Self {
        Self {
            q: DEFAULT_GROUP_PRIME,
            g: DEFAULT_GENERATOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub u64);

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecretKey(pub u64);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({})", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyPair {
    pub sk: SecretKey,
    pub pk: PublicKey,
}

impl KeyPair {
    /// Derives the public key for a given secret. Out-of-range secrets are
    /// accepted here; `verify_keypair` rejects them.
    pub fn from_secret(group: &GroupParams, sk: u64) -> Self {
        KeyPair {
            sk: SecretKey(sk),
            pk: PublicKey(group.exp(group.g, sk)),
        }
    }
}

pub fn keygen<R: RngCore + ?Sized>(group: &GroupParams, rng: &mut R) -> KeyPair {
    let sk = group.sample_exponent(rng);
    KeyPair::from_secret(group, sk)
}

/// True iff `sk` is in `[1, q-2]` and `g^sk = pk`.
pub fn verify_keypair(group: &GroupParams, pk: PublicKey, sk: SecretKey) -> bool {
    (1..=group.q - 2).contains(&sk.0) && group.exp(group.g, sk.0) == pk.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    /// Ephemeral `g^r mod q`.
    pub c1: u64,
    /// Share plus pad, mod p.
    pub c2: FieldElement,
}

/// SHA-256 of `bytes` as a 256-bit big-endian integer, reduced mod p.
pub fn digest_to_field(field: FieldParams, bytes: &[u8]) -> FieldElement {
    field.reduce_be_bytes(&sha256(&[bytes]))
}

fn pad(field: FieldParams, context: &[u8], c1: u64, shared: u64) -> FieldElement {
    let mut buf = Vec::with_capacity(KDF_TAG.len() + context.len() + 16);
    buf.extend_from_slice(KDF_TAG);
    buf.extend_from_slice(context);
    buf.extend_from_slice(&c1.to_be_bytes());
    buf.extend_from_slice(&shared.to_be_bytes());
    digest_to_field(field, &buf)
}

pub fn encrypt<R: RngCore + ?Sized>(
    group: &GroupParams,
    pk: PublicKey,
    y: FieldElement,
    context: &[u8],
    rng: &mut R,
) -> Ciphertext {
    let r = group.sample_exponent(rng);
    encrypt_with_ephemeral(group, pk, y, context, r)
}

/// Encryption with a caller-chosen ephemeral exponent `r`.
pub fn encrypt_with_ephemeral(
    group: &GroupParams,
    pk: PublicKey,
    y: FieldElement,
    context: &[u8],
    r: u64,
) -> Ciphertext {
    let c1 = group.exp(group.g, r);
    let shared = group.exp(pk.0, r);
    Ciphertext {
        c1,
        c2: y + pad(y.field(), context, c1, shared),
    }
}

/// Never fails; a wrong key or context just yields a wrong plaintext.
pub fn decrypt(
    group: &GroupParams,
    sk: SecretKey,
    ct: &Ciphertext,
    context: &[u8],
) -> FieldElement {
    let shared = group.exp(ct.c1, sk.0);
    ct.c2 - pad(ct.c2.field(), context, ct.c1, shared)
}

/// `round_id || dealer || recipient`, the context bound into each share's pad.
pub fn share_context(round_id: RoundId, dealer: &Address, recipient: &Address) -> Vec<u8> {
    let mut ctx = Vec::with_capacity(48);
    ctx.extend_from_slice(&round_id.to_be_bytes());
    ctx.extend_from_slice(&dealer.0);
    ctx.extend_from_slice(&recipient.0);
    ctx
}

pub fn commit_share(
    round_id: RoundId,
    dealer: &Address,
    recipient: &Address,
    y: FieldElement,
) -> Digest {
    Digest(sha256(&[
        COMMIT_TAG,
        &round_id.to_be_bytes(),
        &dealer.0,
        &recipient.0,
        &y.to_be_bytes(),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::DEFAULT_FIELD_PRIME;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    fn toy_group() -> GroupParams {
        GroupParams::new(23, 5).unwrap()
    }

    #[test]
    fn group_validation() {
        assert!(GroupParams::new(DEFAULT_GROUP_PRIME, DEFAULT_GENERATOR).is_ok());
        assert_eq!(GroupParams::new(29, 2), Err(CryptoError::NotSafePrime(29)));
        // 2 is a quadratic residue mod 23, so its order is 11
        assert_eq!(
            GroupParams::new(23, 2),
            Err(CryptoError::BadGenerator { q: 23, g: 2 })
        );
        assert_eq!(
            GroupParams::new(23, 22),
            Err(CryptoError::BadGenerator { q: 23, g: 22 })
        );
    }

    #[test]
    fn toy_keypair_examples() {
        let g = toy_group();
        assert_eq!(125 % 23, 10);
        let kp = KeyPair::from_secret(&g, 3);
        assert_eq!(kp.pk, PublicKey(10));
        assert!(verify_keypair(&g, PublicKey(10), SecretKey(3)));
        assert_eq!(5u64.pow(4) % 23, 4);
        assert!(!verify_keypair(&g, PublicKey(10), SecretKey(4)));
        assert!(!verify_keypair(&g, PublicKey(1), SecretKey(0)));
        // q-1 is congruent to 0 in the exponent; excluded by range
        assert!(!verify_keypair(&g, PublicKey(1), SecretKey(22)));
    }

    #[test]
    fn keygen_is_deterministic_and_valid() {
        let g = GroupParams::default();
        let a = keygen(&g, &mut ChaCha20Rng::seed_from_u64(11));
        let b = keygen(&g, &mut ChaCha20Rng::seed_from_u64(11));
        assert_eq!(a, b);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..200 {
            let kp = keygen(&g, &mut rng);
            assert!(verify_keypair(&g, kp.pk, kp.sk));
            let other = SecretKey(rng.gen_range(1..g.modulus() - 1));
            if other != kp.sk {
                assert!(!verify_keypair(&g, kp.pk, other));
            }
        }
    }

    #[test]
    fn round_trip_exhaustive_small_field() {
        let group = GroupParams::default();
        let f = FieldParams::new(97).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kp = keygen(&group, &mut rng);
        for y in 0..97 {
            let y = f.element(y).unwrap();
            let ct = encrypt(&group, kp.pk, y, b"ctx", &mut rng);
            assert_eq!(decrypt(&group, kp.sk, &ct, b"ctx"), y);
        }
    }

    #[test]
    fn round_trip_toy_group() {
        let group = toy_group();
        let f = FieldParams::new(11).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for sk in 1..=21 {
            let kp = KeyPair::from_secret(&group, sk);
            for y in 0..11 {
                let y = f.element(y).unwrap();
                let ct = encrypt(&group, kp.pk, y, b"toy", &mut rng);
                assert!((1..23).contains(&ct.c1));
                assert_eq!(decrypt(&group, kp.sk, &ct, b"toy"), y);
            }
        }
    }

    #[test]
    fn encryption_is_deterministic_and_randomized() {
        let group = GroupParams::default();
        let f = FieldParams::default();
        let kp = keygen(&group, &mut ChaCha20Rng::seed_from_u64(2));
        let y = f.element(42).unwrap();
        let a = encrypt(&group, kp.pk, y, b"c", &mut ChaCha20Rng::seed_from_u64(9));
        let b = encrypt(&group, kp.pk, y, b"c", &mut ChaCha20Rng::seed_from_u64(9));
        assert_eq!(a, b);

        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let c1s: HashSet<u64> = (0..1000)
            .map(|_| encrypt(&group, kp.pk, y, b"c", &mut rng).c1)
            .collect();
        assert_eq!(c1s.len(), 1000);
    }

    #[test]
    fn wrong_context_or_key_garbles() {
        let group = GroupParams::default();
        let f = FieldParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut ctx_hits = 0;
        let mut key_hits = 0;
        for _ in 0..500 {
            let kp = keygen(&group, &mut rng);
            let other = keygen(&group, &mut rng);
            let y = f.sample_nonzero(&mut rng);
            let ct = encrypt(&group, kp.pk, y, b"round-a", &mut rng);
            ctx_hits += (decrypt(&group, kp.sk, &ct, b"round-b") == y) as usize;
            key_hits += (decrypt(&group, other.sk, &ct, b"round-a") == y) as usize;
        }
        assert_eq!(ctx_hits, 0);
        assert_eq!(key_hits, 0);
    }

    #[test]
    fn commitments() {
        let f = FieldParams::default();
        let a = Address([1; 20]);
        let b = Address([2; 20]);
        let y = f.element(1234).unwrap();
        assert_eq!(commit_share(7, &a, &b, y), commit_share(7, &a, &b, y));
        assert_ne!(
            commit_share(7, &a, &b, y),
            commit_share(7, &a, &b, y + f.one())
        );
        assert_ne!(commit_share(7, &a, &b, y), commit_share(7, &a, &a, y));
        assert_ne!(commit_share(7, &a, &b, y), commit_share(8, &a, &b, y));
        assert_ne!(commit_share(7, &a, &b, y), commit_share(7, &b, &a, y));

        // H(tag || round || dealer || recipient || y), computed independently
        let mut pre = Vec::new();
        pre.extend_from_slice(b"DRNG-COMMIT-V1");
        pre.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 7]);
        pre.extend_from_slice(&[1; 20]);
        pre.extend_from_slice(&[2; 20]);
        pre.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0x04, 0xd2]);
        let expect: [u8; 32] = Sha256::digest(&pre).into();
        assert_eq!(commit_share(7, &a, &b, y).0, expect);
    }

    #[test]
    fn commit_share_has_no_collisions_in_sample() {
        let f = FieldParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut seen = HashSet::new();
        for _ in 0..20_000 {
            let mut d = [0u8; 20];
            let mut r = [0u8; 20];
            rng.fill(&mut d);
            rng.fill(&mut r);
            let y = f.reduce(rng.next_u64());
            assert!(seen.insert(commit_share(1, &Address(d), &Address(r), y)));
        }
    }

    #[test]
    fn digest_to_field_frequencies() {
        for p in [5u64, 11, 97] {
            let f = FieldParams::new(p).unwrap();
            let n = 100_000u64;
            let mut counts = vec![0u64; p as usize];
            for i in 0..n {
                counts[digest_to_field(f, &i.to_be_bytes()).value() as usize] += 1;
            }
            let expected = n as f64 / p as f64;
            let sigma = (n as f64 * (1.0 / p as f64) * (1.0 - 1.0 / p as f64)).sqrt();
            for c in counts {
                assert!((c as f64 - expected).abs() < 5.0 * sigma, "p={p} count={c}");
            }
        }
        let f = FieldParams::new(DEFAULT_FIELD_PRIME).unwrap();
        assert_eq!(digest_to_field(f, b"x"), digest_to_field(f, b"x"));
    }

    #[test]
    fn address_to_field_and_hex() {
        let f = FieldParams::new(5).unwrap();
        let mut raw = [0u8; 20];
        raw[19] = 10;
        assert!(Address(raw).to_field(f).is_zero());
        raw[19] = 12;
        assert_eq!(Address(raw).to_field(f).value(), 2);
        // 2^8 = 256 = 1 mod 5, so every byte contributes its value
        let a = Address([1; 20]);
        assert_eq!(a.to_field(f).value(), 0);
        let s = a.to_hex();
        assert_eq!(s.parse::<Address>().unwrap(), a);
        assert_eq!(format!("0x{s}").parse::<Address>().unwrap(), a);
        assert!("abcd".parse::<Address>().is_err());
    }
}
