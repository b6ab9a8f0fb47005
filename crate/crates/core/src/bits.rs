//! Fixed-width binary vectors used for dialogue states and act labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A fixed-width vector of 0/1 entries.
///
/// The derived ordering is lexicographic over the entries, which is the same
/// as the ordering of the bitstring rendering (`"0110"`). That ordering is the
/// canonical order used everywhere a deterministic tie-break is needed.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BitVector(Vec<u8>);

impl BitVector {
    pub fn zeros(width: usize) -> Self {
        BitVector(vec![0; width])
    }

    pub fn from_indices(width: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(width);
        for i in indices {
            v.set(i);
        }
        v
    }

    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        BitVector(bits.into_iter().map(u8::from).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.0[i] != 0
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        self.0[i] = 1;
    }

    /// Number of set bits.
    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b != 0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| i)
    }

    /// Number of positions set in both vectors.
    pub fn overlap(&self, other: &BitVector) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .filter(|(&a, &b)| a != 0 && b != 0)
            .count()
    }

    pub fn union_with(&mut self, other: &BitVector) {
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }

    pub fn concat(&self, other: &BitVector) -> BitVector {
        let mut bits = Vec::with_capacity(self.len() + other.len());
        bits.extend_from_slice(&self.0);
        bits.extend_from_slice(&other.0);
        BitVector(bits)
    }

    /// Copy of `self[start..end]`.
    pub fn slice(&self, start: usize, end: usize) -> BitVector {
        BitVector(self.0[start..end].to_vec())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Appends the entries as `0.0`/`1.0` to `out`.
    pub fn extend_f64(&self, out: &mut Vec<f64>) {
        out.extend(self.0.iter().map(|&b| f64::from(b)));
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.extend_f64(&mut out);
        out
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b != 0 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl FromStr for BitVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.bytes()
            .map(|c| match c {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(Error::Format(format!("invalid bitstring {s:?}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(BitVector)
    }
}

impl Serialize for BitVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitstring_roundtrip() {
        let v = BitVector::from_indices(6, [0, 3, 5]);
        assert_eq!(v.to_string(), "100101");
        assert_eq!("100101".parse::<BitVector>().unwrap(), v);
        assert!("10a".parse::<BitVector>().is_err());
    }

    #[test]
    fn ordering_matches_bitstring_order() {
        let a: BitVector = "0110".parse().unwrap();
        let b: BitVector = "1000".parse().unwrap();
        assert!(a < b);
        assert!(a.to_string() < b.to_string());
    }

    #[test]
    fn overlap_and_union() {
        let mut a = BitVector::from_indices(4, [0, 1]);
        let b = BitVector::from_indices(4, [1, 2]);
        assert_eq!(a.overlap(&b), 1);
        a.union_with(&b);
        assert_eq!(a.count_ones(), 3);
        assert_eq!(a.concat(&b).len(), 8);
    }
}
