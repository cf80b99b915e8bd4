use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest group order accepted anywhere in the crate.
pub const MAX_GROUP_ORDER: usize = 1 << 20;

/// Shape of a finite abelian group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupDescriptor {
    /// `Z/N`.
    Cyclic(u64),
    /// `F_p^n`.
    Vector { p: u64, n: u32 },
    /// Direct product; the first factor holds the least significant digits.
    Product(Vec<GroupDescriptor>),
}

impl fmt::Display for GroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupDescriptor::Cyclic(n) => write!(f, "cyclic {n}"),
            GroupDescriptor::Vector { p, n } => write!(f, "vector {p} {n}"),
            GroupDescriptor::Product(parts) => {
                write!(f, "product [")?;
                for (i, part) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{part}")?;
                }
                write!(f, "]")
            }
        }
    }
}

impl FromStr for GroupDescriptor {
    type Err = Error;

    /// Accepts `cyclic N`, `vector p n` and `product [D, D, ...]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("unrecognised group descriptor {s:?}"));
        if let Some(rest) = s.strip_prefix("product") {
            let inner = rest
                .trim()
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(bad)?;
            let mut parts = Vec::new();
            let mut depth = 0usize;
            let mut start = 0;
            for (i, ch) in inner.char_indices() {
                match ch {
                    '[' => depth += 1,
                    ']' => depth = depth.checked_sub(1).ok_or_else(bad)?,
                    ',' if depth == 0 => {
                        parts.push(inner[start..i].parse()?);
                        start = i + 1;
                    }
                    _ => {}
                }
            }
            if !inner[start..].trim().is_empty() {
                parts.push(inner[start..].parse()?);
            }
            if parts.is_empty() {
                return Err(bad());
            }
            return Ok(GroupDescriptor::Product(parts));
        }
        let words: Vec<&str> = s.split_whitespace().collect();
        let num = |w: &str| w.parse::<u64>().map_err(|_| bad());
        match words.as_slice() {
            ["cyclic", n] => Ok(GroupDescriptor::Cyclic(num(n)?)),
            ["vector", p, n] => Ok(GroupDescriptor::Vector {
                p: num(p)?,
                n: u32::try_from(num(n)?).map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

fn is_prime(p: u64) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

/// Collects the cyclic factors of a descriptor, least significant first.
fn flatten(desc: &GroupDescriptor, out: &mut Vec<u64>) -> Result<()> {
    match desc {
        GroupDescriptor::Cyclic(n) => {
            if *n == 0 {
                return Err(Error::Validation("cyclic group order must be >= 1".into()));
            }
            out.push(*n);
        }
        GroupDescriptor::Vector { p, n } => {
            if !is_prime(*p) {
                return Err(Error::Validation(format!("vector group needs a prime field size, got {p}")));
            }
            out.extend(std::iter::repeat_n(*p, *n as usize));
        }
        GroupDescriptor::Product(parts) => {
            for part in parts {
                flatten(part, out)?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arith {
    /// A single cyclic factor: addition mod N.
    Cyclic,
    /// `F_2^n`: addition is XOR of bit masks.
    Xor,
    /// Mixed radix digitwise addition.
    General,
}

/// A finite abelian group `Z/n_1 × ... × Z/n_k` with canonical element
/// indices in `[0, N)` given by mixed radix, first factor least significant.
/// For `F_2^n` the index is the bit mask of the vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteAbelianGroup {
    descriptor: GroupDescriptor,
    moduli: Vec<u64>,
    order: usize,
    arith: Arith,
}

impl FiniteAbelianGroup {
    pub fn new(descriptor: GroupDescriptor) -> Result<Self> {
        let mut moduli = Vec::new();
        flatten(&descriptor, &mut moduli)?;
        // Trivial factors carry no digits.
        moduli.retain(|&m| m > 1);
        let mut order: usize = 1;
        for &m in &moduli {
            order = order
                .checked_mul(m as usize)
                .filter(|&o| o <= MAX_GROUP_ORDER)
                .ok_or_else(|| Error::Resource(format!("group {descriptor} is larger than {MAX_GROUP_ORDER}")))?;
        }
        let arith = if moduli.len() <= 1 {
            Arith::Cyclic
        } else if moduli.iter().all(|&m| m == 2) {
            Arith::Xor
        } else {
            Arith::General
        };
        Ok(FiniteAbelianGroup { descriptor, moduli, order, arith })
    }

    pub fn cyclic(n: u64) -> Result<Self> {
        Self::new(GroupDescriptor::Cyclic(n))
    }

    pub fn vector(p: u64, n: u32) -> Result<Self> {
        Self::new(GroupDescriptor::Vector { p, n })
    }

    pub fn descriptor(&self) -> &GroupDescriptor {
        &self.descriptor
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// True for `F_2^n` (including the trivial group and `Z/2`).
    pub fn is_elementary_2(&self) -> bool {
        self.moduli.iter().all(|&m| m == 2)
    }

    /// `n` for a group isomorphic to `F_2^n` in its canonical indexing.
    pub fn elementary_2_rank(&self) -> Option<u32> {
        self.is_elementary_2().then_some(self.moduli.len() as u32)
    }

    pub(crate) fn is_single_cyclic(&self) -> bool {
        self.arith == Arith::Cyclic
    }

    pub fn check(&self, g: usize) -> Result<usize> {
        if g < self.order {
            Ok(g)
        } else {
            Err(Error::Domain(format!("element index {g} out of range for group of order {}", self.order)))
        }
    }

    /// Digits of an element, one per cyclic factor.
    pub fn unindex(&self, g: usize) -> Result<Vec<u64>> {
        let mut g = self.check(g)? as u64;
        Ok(self
            .moduli
            .iter()
            .map(|&m| {
                let d = g % m;
                g /= m;
                d
            })
            .collect())
    }

    /// Canonical index of an element given by its digits.
    pub fn index(&self, digits: &[u64]) -> Result<usize> {
        if digits.len() != self.moduli.len() {
            return Err(Error::Domain(format!(
                "expected {} digits, got {}",
                self.moduli.len(),
                digits.len()
            )));
        }
        let mut idx = 0u64;
        for (&d, &m) in digits.iter().zip(&self.moduli).rev() {
            if d >= m {
                return Err(Error::Domain(format!("digit {d} out of range for factor Z/{m}")));
            }
            idx = idx * m + d;
        }
        Ok(idx as usize)
    }

    /// Group addition on canonical indices. Inputs must be in range.
    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < self.order && b < self.order);
        match self.arith {
            Arith::Cyclic => {
                let s = a + b;
                if s >= self.order {
                    s - self.order
                } else {
                    s
                }
            }
            Arith::Xor => a ^ b,
            Arith::General => {
                let (mut a, mut b) = (a as u64, b as u64);
                let mut out = 0u64;
                let mut stride = 1u64;
                for &m in &self.moduli {
                    out += ((a % m + b % m) % m) * stride;
                    a /= m;
                    b /= m;
                    stride *= m;
                }
                out as usize
            }
        }
    }

    #[inline]
    pub fn neg(&self, a: usize) -> usize {
        debug_assert!(a < self.order);
        match self.arith {
            Arith::Cyclic => {
                if a == 0 {
                    0
                } else {
                    self.order - a
                }
            }
            Arith::Xor => a,
            Arith::General => {
                let mut a = a as u64;
                let mut out = 0u64;
                let mut stride = 1u64;
                for &m in &self.moduli {
                    out += ((m - a % m) % m) * stride;
                    a /= m;
                    stride *= m;
                }
                out as usize
            }
        }
    }

    #[inline]
    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.add(a, self.neg(b))
    }

    /// Checked addition for untrusted indices.
    pub fn try_add(&self, a: usize, b: usize) -> Result<usize> {
        Ok(self.add(self.check(a)?, self.check(b)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_and_vector_addition() {
        let z5 = FiniteAbelianGroup::cyclic(5).unwrap();
        assert_eq!(z5.add(3, 4), 2);
        assert_eq!(z5.neg(3), 2);
        let v = FiniteAbelianGroup::vector(2, 3).unwrap();
        assert_eq!(v.add(0b101, 0b110), 0b011);
        assert_eq!(v.order(), 8);
        assert!(matches!(z5.try_add(5, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn inverse_and_digits_everywhere() {
        let descs = [
            "cyclic 7",
            "vector 3 2",
            "vector 2 4",
            "product [cyclic 4, vector 2 2]",
            "product [cyclic 3, product [cyclic 2, cyclic 5]]",
        ];
        for d in descs {
            let g = FiniteAbelianGroup::new(d.parse().unwrap()).unwrap();
            for a in 0..g.order() {
                assert_eq!(g.add(a, g.neg(a)), 0, "{d}");
                assert_eq!(g.index(&g.unindex(a).unwrap()).unwrap(), a);
                for b in 0..g.order() {
                    assert_eq!(g.add(a, b), g.add(b, a));
                    assert_eq!(g.sub(g.add(a, b), b), a);
                }
            }
        }
    }

    #[test]
    fn descriptor_text() {
        for s in ["cyclic 256", "vector 2 8", "product [cyclic 4, vector 2 3]"] {
            let d: GroupDescriptor = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("cyclic".parse::<GroupDescriptor>().is_err());
        assert!("torus 3".parse::<GroupDescriptor>().is_err());
        assert!(FiniteAbelianGroup::vector(4, 2).is_err());
        assert!(FiniteAbelianGroup::cyclic(0).is_err());
        assert!(FiniteAbelianGroup::vector(2, 40).is_err());
        // Z/2 × Z/2 built as a product uses XOR arithmetic.
        let g = FiniteAbelianGroup::new("product [cyclic 2, cyclic 2]".parse().unwrap()).unwrap();
        assert_eq!(g.elementary_2_rank(), Some(2));
        assert_eq!(g.add(1, 3), 2);
    }
}
