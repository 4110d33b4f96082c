//! Arithmetic in GF(2^m), 1 <= m <= 16, via log/antilog tables.
//!
//! Each degree has one fixed primitive polynomial, so `x` (value 2, or 1 in
//! GF(2)) is the primitive element `w`. Tables are built lazily, once per
//! degree, and shared for the life of the process.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_DEGREE: u32 = 16;

/// Primitive polynomial per degree, bit `i` is the coefficient of `x^i`.
const PRIMITIVE_POLYNOMIALS: [u32; 17] = [
    0, 0b11,    // x + 1
    0x7,     // x^2 + x + 1
    0xB,     // x^3 + x + 1
    0x13,    // x^4 + x + 1
    0x25,    // x^5 + x^2 + 1
    0x43,    // x^6 + x + 1
    0x83,    // x^7 + x + 1
    0x11D,   // x^8 + x^4 + x^3 + x^2 + 1
    0x211,   // x^9 + x^4 + 1
    0x409,   // x^10 + x^3 + 1
    0x805,   // x^11 + x^2 + 1
    0x1053,  // x^12 + x^6 + x^4 + x + 1
    0x201B,  // x^13 + x^4 + x^3 + x + 1
    0x4443,  // x^14 + x^10 + x^6 + x + 1
    0x8003,  // x^15 + x + 1
    0x1100B, // x^16 + x^12 + x^3 + x + 1
];

#[derive(Debug)]
pub struct GfTables {
    degree: u32,
    polynomial: u32,
    order: u32,
    /// `exp[i] = w^i`, doubled so products of two logs need no reduction.
    exp: Vec<u16>,
    /// `log[a]` for nonzero `a`; `log[0]` is unused.
    log: Vec<u32>,
}

impl GfTables {
    fn build(degree: u32) -> GfTables {
        let polynomial = PRIMITIVE_POLYNOMIALS[degree as usize];
        let order = 1u32 << degree;
        let group = (order - 1) as usize;
        let mut exp = vec![0u16; 2 * group];
        let mut log = vec![0u32; order as usize];
        let mut seen = vec![false; order as usize];
        // In GF(2) the only nonzero element is 1 and w = 1.
        let generator: u32 = if degree == 1 { 1 } else { 2 };
        let mut x: u32 = 1;
        #[allow(clippy::needless_range_loop)]
        for i in 0..group {
            assert!(
                !seen[x as usize],
                "polynomial {polynomial:#x} is not primitive for degree {degree}"
            );
            seen[x as usize] = true;
            exp[i] = x as u16;
            log[x as usize] = i as u32;
            x = carryless_mul_mod(x, generator, polynomial, degree);
        }
        assert_eq!(x, 1, "w^(q-1) != 1 for degree {degree}");
        for i in group..2 * group {
            exp[i] = exp[i - group];
        }
        GfTables {
            degree,
            polynomial,
            order,
            exp,
            log,
        }
    }
}

fn carryless_mul_mod(a: u32, b: u32, poly: u32, degree: u32) -> u32 {
    let mut acc = 0u32;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & (1 << degree) != 0 {
            a ^= poly;
        }
    }
    acc
}

static TABLES: [OnceLock<GfTables>; 17] = [const { OnceLock::new() }; 17];

/// A field GF(2^m). Cheap to copy; equality is by degree.
#[derive(Clone, Copy)]
pub struct FieldSpec {
    tables: &'static GfTables,
}

impl FieldSpec {
    pub fn new(degree: u32) -> Result<FieldSpec> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::UnsupportedDegree(degree));
        }
        let tables = TABLES[degree as usize].get_or_init(|| GfTables::build(degree));
        Ok(FieldSpec { tables })
    }

    /// Smallest field with at least `required` elements.
    pub fn with_order_at_least(required: u64) -> Result<FieldSpec> {
        (1..=MAX_DEGREE)
            .find(|&m| (1u64 << m) >= required)
            .map(|m| FieldSpec::new(m).expect("degree in range"))
            .ok_or(Error::FieldTooSmall { required })
    }

    pub fn degree(&self) -> u32 {
        self.tables.degree
    }

    pub fn primitive_polynomial(&self) -> u32 {
        self.tables.polynomial
    }

    /// q = 2^m
    pub fn order(&self) -> u32 {
        self.tables.order
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement {
            value: 0,
            field: *self,
        }
    }

    pub fn one(&self) -> FieldElement {
        FieldElement {
            value: 1,
            field: *self,
        }
    }

    /// The primitive element w.
    pub fn primitive(&self) -> FieldElement {
        self.element_from_power(1)
    }

    pub fn element(&self, value: u32) -> Result<FieldElement> {
        if value >= self.order() {
            return Err(Error::ValueOutOfField {
                value,
                degree: self.degree(),
            });
        }
        Ok(FieldElement {
            value: value as u16,
            field: *self,
        })
    }

    /// `w^i`, with the exponent reduced modulo q - 1. Negative exponents are
    /// allowed.
    pub fn element_from_power(&self, i: i64) -> FieldElement {
        let group = (self.order() - 1) as i64;
        let e = i.rem_euclid(group) as usize;
        FieldElement {
            value: self.tables.exp[e],
            field: *self,
        }
    }

    pub fn add(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(FieldElement {
            value: a.value ^ b.value,
            field: *self,
        })
    }

    pub fn mul(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(a.mul_unchecked(b))
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        self.check(a)?;
        a.inv()
    }

    fn check(&self, a: FieldElement) -> Result<()> {
        if a.field != *self {
            return Err(Error::FieldMismatch {
                left: self.degree(),
                right: a.field.degree(),
            });
        }
        Ok(())
    }
}

impl PartialEq for FieldSpec {
    fn eq(&self, other: &Self) -> bool {
        self.tables.degree == other.tables.degree
    }
}

impl Eq for FieldSpec {}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "GF(2^{}) [poly {:#x}]",
            self.degree(),
            self.primitive_polynomial()
        )
    }
}

/// Wire form of a field spec.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub extension_degree: u32,
    pub primitive_polynomial: u32,
    pub order: u32,
}

impl From<FieldSpec> for FieldDescriptor {
    fn from(f: FieldSpec) -> Self {
        FieldDescriptor {
            extension_degree: f.degree(),
            primitive_polynomial: f.primitive_polynomial(),
            order: f.order(),
        }
    }
}

impl TryFrom<FieldDescriptor> for FieldSpec {
    type Error = Error;

    fn try_from(d: FieldDescriptor) -> Result<FieldSpec> {
        let field = FieldSpec::new(d.extension_degree)?;
        if field.primitive_polynomial() != d.primitive_polynomial || field.order() != d.order {
            return Err(Error::Unsupported(format!(
                "field descriptor {d:?} does not match the built-in GF(2^{}) polynomial {:#x}",
                d.extension_degree,
                field.primitive_polynomial()
            )));
        }
        Ok(field)
    }
}

impl Serialize for FieldSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldDescriptor::from(*self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FieldSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let desc = FieldDescriptor::deserialize(d)?;
        FieldSpec::try_from(desc).map_err(serde::de::Error::custom)
    }
}

/// An element of some GF(2^m). Operator impls panic on mixed fields; use the
/// `FieldSpec` methods for checked arithmetic.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct FieldElement {
    value: u16,
    field: FieldSpec,
}

impl FieldElement {
    pub fn value(&self) -> u32 {
        self.value as u32
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    pub fn inv(&self) -> Result<FieldElement> {
        if self.value == 0 {
            return Err(Error::DivisionByZero {
                degree: self.field.degree(),
            });
        }
        let t = self.field.tables;
        let group = t.order - 1;
        let l = t.log[self.value as usize];
        Ok(FieldElement {
            value: t.exp[((group - l) % group) as usize],
            field: self.field,
        })
    }

    /// `self^n`; negative `n` requires a nonzero base. `0^0 = 1`.
    pub fn pow(&self, n: i64) -> Result<FieldElement> {
        if self.value == 0 {
            return match n {
                0 => Ok(self.field.one()),
                n if n > 0 => Ok(*self),
                _ => Err(Error::DivisionByZero {
                    degree: self.field.degree(),
                }),
            };
        }
        let l = self.field.tables.log[self.value as usize] as i64;
        let group = (self.field.order() - 1) as i64;
        let e = (l as i128 * n as i128).rem_euclid(group as i128) as i64;
        Ok(self.field.element_from_power(e))
    }

    /// Discrete log base w, `None` for zero.
    pub fn log(&self) -> Option<u32> {
        (self.value != 0).then(|| self.field.tables.log[self.value as usize])
    }

    fn mul_unchecked(self, rhs: FieldElement) -> FieldElement {
        if self.value == 0 || rhs.value == 0 {
            return self.field.zero();
        }
        let t = self.field.tables;
        let idx = t.log[self.value as usize] + t.log[rhs.value as usize];
        FieldElement {
            value: t.exp[idx as usize],
            field: self.field,
        }
    }

    fn same_field(&self, rhs: &FieldElement) {
        assert!(
            self.field == rhs.field,
            "mixed-field arithmetic: GF(2^{}) and GF(2^{})",
            self.field.degree(),
            rhs.field.degree()
        );
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.log() {
            None => f.write_str("0"),
            Some(0) => f.write_str("1"),
            Some(1) => f.write_str("w"),
            Some(l) => write!(f, "w^{l}"),
        }
    }
}

impl Add for FieldElement {
    type Output = FieldElement;

    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: FieldElement) -> FieldElement {
        self.same_field(&rhs);
        FieldElement {
            value: self.value ^ rhs.value,
            field: self.field,
        }
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;

    // characteristic 2
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn sub(self, rhs: FieldElement) -> FieldElement {
        self + rhs
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;

    fn neg(self) -> FieldElement {
        self
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;

    fn mul(self, rhs: FieldElement) -> FieldElement {
        self.same_field(&rhs);
        self.mul_unchecked(rhs)
    }
}

impl Div for FieldElement {
    type Output = FieldElement;

    fn div(self, rhs: FieldElement) -> FieldElement {
        self.same_field(&rhs);
        self.mul_unchecked(rhs.inv().expect("division by zero"))
    }
}

impl Scalar for FieldElement {
    type Context = FieldSpec;

    fn context(&self) -> FieldSpec {
        self.field
    }

    fn zero_in(ctx: FieldSpec) -> Self {
        ctx.zero()
    }

    fn one_in(ctx: FieldSpec) -> Self {
        ctx.one()
    }

    fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn try_inverse(&self) -> Option<Self> {
        self.inv().ok()
    }
}
