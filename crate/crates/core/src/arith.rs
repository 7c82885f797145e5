//! Fixed-width two's-complement words and the carry-lookahead adder model.
//!
//! Every datapath register of the CIC engine is a [`BitWord`]. Two adders are
//! provided behind [`Adder`]: a reference modulo-2^width adder and a
//! gate-level carry-lookahead adder assembled from 4-bit lookahead blocks.
//! The two are bit-identical; the lookahead model exists so the datapath can
//! be exercised through the same carry equations the hardware uses.

use crate::error::{Error, Result};

/// A two's-complement value held in exactly `width` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitWord {
    width: u32,
    value: i64,
}

pub const MAX_WIDTH: u32 = 64;

fn check_width(width: u32) -> Result<()> {
    if (1..=MAX_WIDTH).contains(&width) {
        Ok(())
    } else {
        Err(Error::InvalidWidth(width))
    }
}

#[inline]
fn mask(width: u32) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Smallest value representable in `width` bits.
pub fn min_value(width: u32) -> i64 {
    if width >= 64 {
        i64::MIN
    } else {
        -(1i64 << (width - 1))
    }
}

/// Largest value representable in `width` bits.
pub fn max_value(width: u32) -> i64 {
    if width >= 64 {
        i64::MAX
    } else {
        (1i64 << (width - 1)) - 1
    }
}

impl BitWord {
    /// Builds a word, rejecting values outside the signed range of `width`.
    pub fn new(width: u32, value: i64) -> Result<Self> {
        check_width(width)?;
        if value < min_value(width) || value > max_value(width) {
            return Err(Error::ValueOutOfRange {
                value: value as i128,
                width,
            });
        }
        Ok(BitWord { width, value })
    }

    /// Reinterprets the low `width` bits of `bits` as two's complement.
    pub fn from_bits(width: u32, bits: u64) -> Result<Self> {
        check_width(width)?;
        Ok(Self::from_bits_unchecked(width, bits))
    }

    #[inline]
    pub(crate) fn from_bits_unchecked(width: u32, bits: u64) -> Self {
        let shift = 64 - width;
        BitWord {
            width,
            value: ((bits << shift) as i64) >> shift,
        }
    }

    /// Reduces `value` modulo 2^width.
    pub fn wrapping(width: u32, value: i64) -> Result<Self> {
        Self::from_bits(width, value as u64)
    }

    pub fn zero(width: u32) -> Result<Self> {
        Self::new(width, 0)
    }

    #[inline]
    pub fn width(self) -> u32 {
        self.width
    }

    #[inline]
    pub fn value(self) -> i64 {
        self.value
    }

    /// Raw register contents, low `width` bits only.
    #[inline]
    pub fn bits(self) -> u64 {
        (self.value as u64) & mask(self.width)
    }

    pub fn bit(self, index: u32) -> bool {
        index < self.width && (self.bits() >> index) & 1 == 1
    }

    /// Widens without changing the value.
    pub fn sign_extend(self, new_width: u32) -> Result<Self> {
        check_width(new_width)?;
        if new_width < self.width {
            return Err(Error::contract(format!(
                "sign extension from {} to {} bits would narrow the word",
                self.width, new_width
            )));
        }
        Ok(BitWord {
            width: new_width,
            value: self.value,
        })
    }
}

impl std::fmt::Display for BitWord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}'s{}", self.width, self.value)
    }
}

fn same_width(a: BitWord, b: BitWord) -> Result<u32> {
    if a.width != b.width {
        return Err(Error::WidthMismatch {
            left: a.width,
            right: b.width,
        });
    }
    Ok(a.width)
}

/// `(a + b) mod 2^width`, reinterpreted as two's complement.
pub fn wrap_add(a: BitWord, b: BitWord) -> Result<BitWord> {
    let w = same_width(a, b)?;
    Ok(BitWord::from_bits_unchecked(
        w,
        a.bits().wrapping_add(b.bits()),
    ))
}

/// `(a - b) mod 2^width`.
pub fn wrap_sub(a: BitWord, b: BitWord) -> Result<BitWord> {
    let w = same_width(a, b)?;
    Ok(BitWord::from_bits_unchecked(
        w,
        a.bits().wrapping_sub(b.bits()),
    ))
}

/// Keeps the top `new_width` bits of `a`: an arithmetic shift right by
/// `a.width() - new_width`, i.e. rounding toward negative infinity.
pub fn truncate_keep_msbs(a: BitWord, new_width: u32) -> Result<BitWord> {
    check_width(new_width)?;
    if new_width > a.width {
        return Err(Error::TruncateWiden {
            from: a.width,
            to: new_width,
        });
    }
    Ok(BitWord {
        width: new_width,
        value: a.value >> (a.width - new_width),
    })
}

/// Signals of one 4-bit carry-lookahead block.
///
/// `p[i] = a[i] ^ b[i]`, `g[i] = a[i] & b[i]`; `carries[0]` is the carry in
/// and `carries[4]` the carry out. Carries are produced by the two-level
/// lookahead expressions, never by rippling through the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClaBlock {
    pub p: [bool; 4],
    pub g: [bool; 4],
    pub group_propagate: bool,
    pub group_generate: bool,
    pub carries: [bool; 5],
    pub sum: u8,
}

impl ClaBlock {
    #[inline]
    pub fn carry_out(&self) -> bool {
        self.carries[4]
    }
}

/// Adds two 4-bit operands (only the low nibble of each is used).
pub fn cla_block_add(a4: u8, b4: u8, c0: bool) -> ClaBlock {
    let bit = |x: u8, i: u32| (x >> i) & 1 == 1;
    let p: [bool; 4] = std::array::from_fn(|i| bit(a4, i as u32) ^ bit(b4, i as u32));
    let g: [bool; 4] = std::array::from_fn(|i| bit(a4, i as u32) & bit(b4, i as u32));
    let [p0, p1, p2, p3] = p;
    let [g0, g1, g2, g3] = g;

    let c1 = g0 | (p0 & c0);
    let c2 = g1 | (p1 & g0) | (p1 & p0 & c0);
    let c3 = g2 | (p2 & g1) | (p2 & p1 & g0) | (p2 & p1 & p0 & c0);
    let c4 = g3
        | (p3 & g2)
        | (p3 & p2 & g1)
        | (p3 & p2 & p1 & g0)
        | (p3 & p2 & p1 & p0 & c0);

    let group_propagate = p3 & p2 & p1 & p0;
    let group_generate = g3 | (p3 & g2) | (p3 & p2 & g1) | (p3 & p2 & p1 & g0);

    let carries = [c0, c1, c2, c3, c4];
    let sum = (0..4).fold(0u8, |acc, i| acc | (((p[i] ^ carries[i]) as u8) << i));

    ClaBlock {
        p,
        g,
        group_propagate,
        group_generate,
        carries,
        sum,
    }
}

/// Adds `a + b + c0` with chained lookahead blocks.
///
/// Operands are sign-extended to the next multiple of four bits; block `k`
/// passes `G_G + P_G * c` on as the carry into block `k + 1`. The returned
/// carry is the carry into bit position `width`, i.e. the unsigned carry out
/// of a `width`-bit adder.
pub fn cla_add(a: BitWord, b: BitWord, c0: bool) -> Result<(BitWord, bool)> {
    let w = same_width(a, b)?;
    // i64 -> u64 already sign-extends to the full 64 bits.
    let (abits, bbits) = (a.value as u64, b.value as u64);
    let blocks = w.div_ceil(4);
    let mut carry = c0;
    let mut sum = 0u64;
    let mut carry_out = false;
    for k in 0..blocks {
        let shift = 4 * k;
        let blk = cla_block_add(
            ((abits >> shift) & 0xF) as u8,
            ((bbits >> shift) & 0xF) as u8,
            carry,
        );
        sum |= (blk.sum as u64) << shift;
        let next = blk.group_generate | (blk.group_propagate & carry);
        debug_assert_eq!(next, blk.carry_out());
        if w - shift <= 4 {
            carry_out = blk.carries[(w - shift) as usize];
        }
        carry = next;
    }
    Ok((BitWord::from_bits_unchecked(w, sum), carry_out))
}

/// `a - b` as `a + !b + 1` through the lookahead adder.
pub fn cla_sub(a: BitWord, b: BitWord) -> Result<BitWord> {
    let w = same_width(a, b)?;
    let inverted = BitWord::from_bits_unchecked(w, !b.bits());
    Ok(cla_add(a, inverted, true)?.0)
}

/// Arithmetic element used by the CIC datapath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Adder {
    /// Native modulo-2^width arithmetic.
    #[default]
    Wrap,
    /// Gate-level carry-lookahead model.
    Cla,
}

impl Adder {
    #[inline]
    pub fn add(self, a: BitWord, b: BitWord) -> Result<BitWord> {
        match self {
            Adder::Wrap => wrap_add(a, b),
            Adder::Cla => cla_add(a, b, false).map(|(s, _)| s),
        }
    }

    #[inline]
    pub fn sub(self, a: BitWord, b: BitWord) -> Result<BitWord> {
        match self {
            Adder::Wrap => wrap_sub(a, b),
            Adder::Cla => cla_sub(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Adder::Wrap => "wrap",
            Adder::Cla => "cla",
        }
    }
}

impl std::str::FromStr for Adder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wrap" => Ok(Adder::Wrap),
            "cla" => Ok(Adder::Cla),
            other => Err(Error::config(format!(
                "unknown adder '{other}' (expected wrap or cla)"
            ))),
        }
    }
}
