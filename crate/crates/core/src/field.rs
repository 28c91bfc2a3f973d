//! Arithmetic over a prime field `Z_p`, polynomials with coefficients in that
//! field, and Lagrange interpolation.
//!
//! The modulus is any prime `p >= 5` that fits in a `u64`; intermediate
//! products go through `u128`, so no bignum arithmetic is needed. The default
//! field is the Mersenne prime `2^61 - 1`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::RngCore;
use thiserror::Error;

/// The Mersenne prime `2^61 - 1`.
pub const DEFAULT_FIELD_PRIME: u64 = (1 << 61) - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} is too small, need p >= 5")]
    ModulusTooSmall(u64),
    #[error("value {value} is out of range for modulus {p}")]
    OutOfRange { value: u64, p: u64 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("elements belong to different fields ({0} vs {1})")]
    FieldMismatch(u64, u64),
    #[error("duplicate x coordinate {0}")]
    DuplicateX(u64),
    #[error("share point x coordinate must be nonzero")]
    ZeroX,
    #[error("polynomial needs at least one coefficient")]
    EmptyPolynomial,
    #[error("interpolation needs at least one point")]
    NoPoints,
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &b in &BASES {
        if n == b {
            return true;
        }
        if n.is_multiple_of(b) {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// A validated prime modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldParams {
    p: u64,
}

impl FieldParams {
    pub fn new(p: u64) -> Result<Self, FieldError> {
        if p < 5 {
            return Err(FieldError::ModulusTooSmall(p));
        }
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        Ok(Self { p })
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement {
            value: 0,
            p: self.p,
        }
    }

    pub fn one(&self) -> FieldElement {
        FieldElement {
            value: 1,
            p: self.p,
        }
    }

    /// Rejects values outside `[0, p-1]`.
    pub fn element(&self, value: u64) -> Result<FieldElement, FieldError> {
        if value >= self.p {
            return Err(FieldError::OutOfRange { value, p: self.p });
        }
        Ok(FieldElement { value, p: self.p })
    }

    /// Reduces an arbitrary `u64` into the field.
    pub fn reduce(&self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.p,
            p: self.p,
        }
    }

    /// Reduces a big-endian unsigned integer of any width.
    pub fn reduce_be_bytes(&self, bytes: &[u8]) -> FieldElement {
        let p = self.p as u128;
        let acc = bytes
            .iter()
            .fold(0u128, |acc, &b| ((acc << 8) | b as u128) % p);
        FieldElement {
            value: acc as u64,
            p: self.p,
        }
    }

    /// Uniform draw from `[1, p-1]` by rejection sampling.
    pub fn sample_nonzero<R: RngCore + ?Sized>(&self, rng: &mut R) -> FieldElement {
        // Accept only below the largest multiple of (p - 1) that fits in u64.
        let range = self.p - 1;
        let zone = u64::MAX - (u64::MAX % range);
        loop {
            let v = rng.next_u64();
            if v < zone {
                return FieldElement {
                    value: 1 + v % range,
                    p: self.p,
                };
            }
        }
    }
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            p: DEFAULT_FIELD_PRIME,
        }
    }
}

/// An element of `Z_p`, tagged with its modulus.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElement {
    value: u64,
    p: u64,
}

impl FieldElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn field(&self) -> FieldParams {
        FieldParams { p: self.p }
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    /// Fixed-width 8-byte big-endian encoding.
    pub fn to_be_bytes(&self) -> [u8; 8] {
        self.value.to_be_bytes()
    }

    pub fn inverse(&self) -> Result<FieldElement, FieldError> {
        mod_inv(*self)
    }

    pub fn pow(&self, exp: u64) -> FieldElement {
        FieldElement {
            value: pow_mod(self.value, exp, self.p),
            p: self.p,
        }
    }

    fn check_same(&self, other: &FieldElement) {
        assert_eq!(self.p, other.p, "field element modulus mismatch");
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.p)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: FieldElement) -> FieldElement {
        self.check_same(&rhs);
        let sum = (self.value as u128 + rhs.value as u128) % self.p as u128;
        FieldElement {
            value: sum as u64,
            p: self.p,
        }
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: FieldElement) -> FieldElement {
        self + (-rhs)
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        let value = if self.value == 0 {
            0
        } else {
            self.p - self.value
        };
        FieldElement { value, p: self.p }
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: FieldElement) -> FieldElement {
        self.check_same(&rhs);
        FieldElement {
            value: mul_mod(self.value, rhs.value, self.p),
            p: self.p,
        }
    }
}

/// Multiplicative inverse via Fermat's little theorem.
pub fn mod_inv(a: FieldElement) -> Result<FieldElement, FieldError> {
    if a.is_zero() {
        return Err(FieldError::ZeroInverse);
    }
    Ok(a.pow(a.p - 2))
}

/// Polynomial over `Z_p` in ascending-power order. Trailing zero coefficients
/// are trimmed, so `degree()` is the index of the leading nonzero coefficient
/// (the zero polynomial is stored as `[0]` and reports degree 0).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Polynomial {
    field: FieldParams,
    coeffs: Vec<FieldElement>,
}

impl Polynomial {
    pub fn new(field: FieldParams, coeffs: Vec<FieldElement>) -> Result<Self, FieldError> {
        if coeffs.is_empty() {
            return Err(FieldError::EmptyPolynomial);
        }
        if let Some(c) = coeffs.iter().find(|c| c.p != field.p) {
            return Err(FieldError::FieldMismatch(field.p, c.p));
        }
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Ok(Self { field, coeffs })
    }

    /// Convenience constructor from raw residues (each must be `< p`).
    pub fn from_values(field: FieldParams, values: &[u64]) -> Result<Self, FieldError> {
        let coeffs = values
            .iter()
            .map(|&v| field.element(v))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(field, coeffs)
    }

    pub fn field(&self) -> FieldParams {
        self.field
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// The constant term `a0`.
    pub fn secret(&self) -> FieldElement {
        self.coeffs[0]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_zero()
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vals: Vec<u64> = self.coeffs.iter().map(|c| c.value).collect();
        write!(f, "Polynomial{:?} (mod {})", vals, self.field.p)
    }
}

/// Horner evaluation of `poly` at `x`.
pub fn poly_eval(poly: &Polynomial, x: FieldElement) -> Result<FieldElement, FieldError> {
    if x.p != poly.field.p {
        return Err(FieldError::FieldMismatch(poly.field.p, x.p));
    }
    Ok(poly
        .coeffs
        .iter()
        .rev()
        .fold(poly.field.zero(), |acc, &c| acc * x + c))
}

/// A share `(x, y)` with `x != 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SharePoint {
    x: FieldElement,
    y: FieldElement,
}

impl SharePoint {
    pub fn new(x: FieldElement, y: FieldElement) -> Result<Self, FieldError> {
        if x.p != y.p {
            return Err(FieldError::FieldMismatch(x.p, y.p));
        }
        if x.is_zero() {
            return Err(FieldError::ZeroX);
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> FieldElement {
        self.x
    }

    pub fn y(&self) -> FieldElement {
        self.y
    }
}

fn check_points(points: &[SharePoint]) -> Result<FieldParams, FieldError> {
    let first = points.first().ok_or(FieldError::NoPoints)?;
    let p = first.x.p;
    for (i, a) in points.iter().enumerate() {
        if a.x.p != p {
            return Err(FieldError::FieldMismatch(p, a.x.p));
        }
        if points[..i].iter().any(|b| b.x == a.x) {
            return Err(FieldError::DuplicateX(a.x.value));
        }
    }
    Ok(FieldParams { p })
}

/// Unique polynomial of degree `<= points.len() - 1` through every point.
pub fn interpolate_coefficients(points: &[SharePoint]) -> Result<Polynomial, FieldError> {
    let field = check_points(points)?;
    let k = points.len();

    // master(X) = prod (X - x_i), ascending coefficients, degree k
    let mut master = vec![field.zero(); k + 1];
    master[0] = field.one();
    for (deg, pt) in points.iter().enumerate() {
        for i in (0..=deg + 1).rev() {
            let shifted = if i > 0 { master[i - 1] } else { field.zero() };
            master[i] = shifted - pt.x * master[i];
        }
    }

    let mut acc = vec![field.zero(); k];
    let mut basis = vec![field.zero(); k];
    for (i, pt) in points.iter().enumerate() {
        // basis(X) = master(X) / (X - x_i) by synthetic division
        let mut carry = field.zero();
        for d in (0..k).rev() {
            carry = master[d + 1] + carry * pt.x;
            basis[d] = carry;
        }
        let denom = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .fold(field.one(), |d, (_, other)| d * (pt.x - other.x));
        let scale = pt.y * mod_inv(denom)?;
        for (a, b) in acc.iter_mut().zip(&basis) {
            *a = *a + scale * *b;
        }
    }
    Polynomial::new(field, acc)
}

/// Value at zero of the interpolating polynomial, via Lagrange weights at 0.
pub fn interpolate_at_zero(points: &[SharePoint]) -> Result<FieldElement, FieldError> {
    let field = check_points(points)?;
    let mut secret = field.zero();
    for (i, pt) in points.iter().enumerate() {
        let mut num = field.one();
        let mut den = field.one();
        for (j, other) in points.iter().enumerate() {
            if i != j {
                num = num * (-other.x);
                den = den * (pt.x - other.x);
            }
        }
        secret = secret + pt.y * num * mod_inv(den)?;
    }
    Ok(secret)
}

/// Uniform nonzero field element; see [`FieldParams::sample_nonzero`].
pub fn sample_nonzero<R: RngCore + ?Sized>(field: FieldParams, rng: &mut R) -> FieldElement {
    field.sample_nonzero(rng)
}
