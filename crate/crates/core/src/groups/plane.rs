use std::fmt::Write as _;

use rand::Rng;

use super::group::{FiniteAbelianGroup, GroupDescriptor};
use crate::error::{Error, Result};

/// Largest group order for which an `N × N` indicator is materialised.
pub const MAX_PLANE_ORDER: usize = 16_384;

/// A subset `A` of the plane `{x + y + z = 0}` in `G^3`, stored as the
/// `N × N` bit matrix of pairs `(x, y)` with `(x, y, -x-y) ∈ A`.
///
/// Row `x` holds the bits for all `y`; bits past `N` in the last word of a
/// row are always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaneSet {
    group: FiniteAbelianGroup,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl PlaneSet {
    pub fn empty(group: FiniteAbelianGroup) -> Result<Self> {
        let n = group.order();
        if n > MAX_PLANE_ORDER {
            return Err(Error::Resource(format!(
                "plane set over a group of order {n} exceeds the limit {MAX_PLANE_ORDER}"
            )));
        }
        let words_per_row = n.div_ceil(64);
        Ok(PlaneSet { group, words_per_row, bits: vec![0; n * words_per_row] })
    }

    /// All of the plane.
    pub fn full(group: FiniteAbelianGroup) -> Result<Self> {
        Self::from_fn(group, |_, _| true)
    }

    pub fn from_fn(group: FiniteAbelianGroup, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut set = Self::empty(group)?;
        let n = set.order();
        for x in 0..n {
            for y in 0..n {
                if f(x, y) {
                    set.insert(x, y);
                }
            }
        }
        Ok(set)
    }

    /// Each pair included independently with probability `density`.
    pub fn random<R: Rng>(group: FiniteAbelianGroup, density: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::Domain(format!("density {density} outside [0, 1]")));
        }
        Self::from_fn(group, |_, _| rng.gen::<f64>() < density)
    }

    pub fn group(&self) -> &FiniteAbelianGroup {
        &self.group
    }

    pub fn order(&self) -> usize {
        self.group.order()
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    /// Bit words of row `x`.
    #[inline]
    pub fn row(&self, x: usize) -> &[u64] {
        &self.bits[x * self.words_per_row..(x + 1) * self.words_per_row]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, x: usize) -> &mut [u64] {
        &mut self.bits[x * self.words_per_row..(x + 1) * self.words_per_row]
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let w = self.bits[x * self.words_per_row + y / 64];
        (w >> (y % 64)) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, x: usize, y: usize) {
        self.bits[x * self.words_per_row + y / 64] |= 1 << (y % 64);
    }

    #[inline]
    pub fn remove(&mut self, x: usize, y: usize) {
        self.bits[x * self.words_per_row + y / 64] &= !(1 << (y % 64));
    }

    /// Membership of the plane point `(x, y, z)`; false off the plane.
    pub fn contains_point(&self, x: usize, y: usize, z: usize) -> bool {
        self.group.add(self.group.add(x, y), z) == 0 && self.contains(x, y)
    }

    /// `|A|`.
    pub fn len(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// `|A| / N²`.
    pub fn density(&self) -> f64 {
        let n = self.order() as f64;
        self.len() as f64 / (n * n)
    }

    /// The set shifted by `(a, b, -a-b)`: pair `(x, y)` is a member of the
    /// result iff `(x - a, y - b)` is a member of `self`.
    pub fn translate(&self, a: usize, b: usize) -> Self {
        let g = &self.group;
        let mut out = PlaneSet { bits: vec![0; self.bits.len()], ..self.clone() };
        for x in 0..self.order() {
            for y in 0..self.order() {
                if self.contains(x, y) {
                    out.insert(g.add(x, a), g.add(y, b));
                }
            }
        }
        out
    }

    /// Text form: a `group: <descriptor>` header and `N` rows of `0`/`1`.
    pub fn to_text(&self) -> String {
        let n = self.order();
        let mut s = String::with_capacity(n * (n + 1) + 32);
        writeln!(s, "group: {}", self.group.descriptor()).unwrap();
        for x in 0..n {
            for y in 0..n {
                s.push(if self.contains(x, y) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty plane set file".into()))?;
        let desc = header
            .trim()
            .strip_prefix("group:")
            .ok_or_else(|| Error::Parse(format!("line 1: expected 'group: ...' header, found {header:?}")))?;
        let desc: GroupDescriptor = desc.parse()?;
        let mut set = PlaneSet::empty(FiniteAbelianGroup::new(desc)?)?;
        let n = set.order();
        let mut rows = 0;
        for (lineno, line) in lines {
            let line = line.trim();
            if rows == n {
                return Err(Error::Parse(format!("line {}: more than {n} rows", lineno + 1)));
            }
            if line.len() != n {
                return Err(Error::Parse(format!(
                    "line {}: expected {n} characters, found {}",
                    lineno + 1,
                    line.len()
                )));
            }
            for (y, ch) in line.bytes().enumerate() {
                match ch {
                    b'1' => set.insert(rows, y),
                    b'0' => {}
                    other => {
                        return Err(Error::Parse(format!(
                            "line {}: column {}: unexpected character {:?}",
                            lineno + 1,
                            y + 1,
                            other as char
                        )))
                    }
                }
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Parse(format!("expected {n} rows, found {rows}")));
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let g = FiniteAbelianGroup::cyclic(5).unwrap();
        let set = PlaneSet::from_fn(g, |x, y| (x * 3 + y) % 4 == 1).unwrap();
        let text = set.to_text();
        assert!(text.starts_with("group: cyclic 5\n"));
        assert_eq!(PlaneSet::from_text(&text).unwrap(), set);
    }

    #[test]
    fn text_errors_name_the_line() {
        let err = PlaneSet::from_text("group: cyclic 2\n10\n1x\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(PlaneSet::from_text("group: cyclic 2\n10\n").is_err());
        assert!(PlaneSet::from_text("cyclic 2\n10\n01\n").is_err());
        assert!(PlaneSet::from_text("group: cyclic 2\n100\n01\n").is_err());
    }

    #[test]
    fn membership_and_translation() {
        let g = FiniteAbelianGroup::cyclic(70).unwrap();
        let mut set = PlaneSet::empty(g).unwrap();
        set.insert(3, 65);
        assert!(set.contains(3, 65));
        assert!(set.contains_point(3, 65, 2));
        assert!(!set.contains_point(3, 65, 1));
        assert_eq!(set.len(), 1);
        let t = set.translate(68, 10);
        assert!(t.contains(1, 5));
        set.remove(3, 65);
        assert!(set.is_empty());
    }
}
