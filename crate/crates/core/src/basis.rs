//! Ising basis states, magnetization sectors and the spin-1-up subset.
//!
//! A configuration of `n` spins is stored as the low `n` bits of a `u32`;
//! bit `i` set means spin `i` points up. Bit 0 is the injected and measured
//! spin. Sector states are kept in ascending bit-pattern order and ranked in
//! constant time with a split lookup table (low half / high half of the word).

use crate::error::{Error, Result};

/// Largest supported chain length.
pub const MAX_SITES: usize = 24;
/// Smallest supported chain length.
pub const MIN_SITES: usize = 2;

pub(crate) fn check_sites(n: usize) -> Result<()> {
    if !(MIN_SITES..=MAX_SITES).contains(&n) {
        return Err(Error::Capacity(format!(
            "n = {n} outside supported range {MIN_SITES}..={MAX_SITES}"
        )));
    }
    Ok(())
}

/// One Ising configuration `|β⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    bits: u32,
    n: u8,
}

impl BasisState {
    pub fn new(bits: u32, n: usize) -> Result<Self> {
        check_sites(n)?;
        if n < 32 && bits >> n != 0 {
            return Err(Error::Argument(format!(
                "bit pattern {bits:#b} has bits above site {}",
                n - 1
            )));
        }
        Ok(Self { bits, n: n as u8 })
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn n(self) -> usize {
        self.n as usize
    }

    /// Number of up spins.
    #[inline]
    pub fn n_up(self) -> usize {
        self.bits.count_ones() as usize
    }

    #[inline]
    pub fn is_up(self, site: usize) -> bool {
        (self.bits >> site) & 1 == 1
    }
}

/// `⟨β|S^z_site|β⟩`, i.e. `+1/2` for an up spin and `-1/2` otherwise.
pub fn sz_expectation(site: usize, state: BasisState) -> Result<f64> {
    if site >= state.n() {
        return Err(Error::Index(format!(
            "site {site} out of range for n = {}",
            state.n()
        )));
    }
    Ok(sz_of_bits(state.bits, site))
}

#[inline]
pub(crate) fn sz_of_bits(bits: u32, site: usize) -> f64 {
    if (bits >> site) & 1 == 1 {
        0.5
    } else {
        -0.5
    }
}

/// Membership in the subset 𝒜 of configurations with spin 1 (bit 0) up.
#[derive(Clone, Copy, Debug, Default)]
pub struct SubsetA;

impl SubsetA {
    #[inline]
    pub fn contains(&self, state: BasisState) -> bool {
        state.bits & 1 == 1
    }

    /// All members of 𝒜 for an `n`-site chain, ascending.
    pub fn states(&self, n: usize) -> Result<Vec<BasisState>> {
        check_sites(n)?;
        Ok((0..1u32 << (n - 1))
            .map(|k| BasisState {
                bits: (k << 1) | 1,
                n: n as u8,
            })
            .collect())
    }
}

/// Binomial coefficient `C(n, k)`, zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// All configurations of one magnetization sector, with an O(1) rank map.
#[derive(Clone, Debug)]
pub struct SectorIndex {
    n: usize,
    n_up: usize,
    states: Vec<u32>,
    lo_bits: usize,
    // rank of a low-half pattern among low-half patterns with equal popcount
    lo_rank: Vec<u32>,
    // number of sector states whose high half is smaller; u32::MAX if the
    // high half cannot occur in this sector
    hi_offset: Vec<u32>,
}

impl SectorIndex {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn n_up(&self) -> usize {
        self.n_up
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Raw bit patterns in canonical (ascending) order.
    #[inline]
    pub fn bit_patterns(&self) -> &[u32] {
        &self.states
    }

    pub fn state(&self, k: usize) -> BasisState {
        BasisState {
            bits: self.states[k],
            n: self.n as u8,
        }
    }

    pub fn states(&self) -> impl Iterator<Item = BasisState> + '_ {
        self.states.iter().map(move |&bits| BasisState {
            bits,
            n: self.n as u8,
        })
    }

    /// Position of `bits` in the sector, or `None` if it belongs elsewhere.
    pub fn rank(&self, bits: u32) -> Option<usize> {
        if (self.n < 32 && bits >> self.n != 0) || bits.count_ones() as usize != self.n_up {
            return None;
        }
        Some(self.rank_unchecked(bits))
    }

    /// Rank of a pattern already known to lie in this sector.
    #[inline]
    pub fn rank_unchecked(&self, bits: u32) -> usize {
        let lo = bits & ((1u32 << self.lo_bits) - 1);
        let hi = bits >> self.lo_bits;
        (self.hi_offset[hi as usize] + self.lo_rank[lo as usize]) as usize
    }
}

/// Builds the sector of `n` sites with `n_up` up spins.
pub fn enumerate_sector(n: usize, n_up: usize) -> Result<SectorIndex> {
    check_sites(n)?;
    if n_up > n {
        return Err(Error::Argument(format!("n_up = {n_up} exceeds n = {n}")));
    }

    let count = binomial(n, n_up) as usize;
    let mut states = Vec::with_capacity(count);
    if n_up == 0 {
        states.push(0);
    } else {
        // Gosper's hack walks same-popcount patterns in ascending order.
        let mut v: u64 = (1u64 << n_up) - 1;
        let limit = 1u64 << n;
        while v < limit {
            states.push(v as u32);
            let c = v & v.wrapping_neg();
            let r = v + c;
            v = (((r ^ v) >> 2) / c) | r;
        }
    }
    debug_assert_eq!(states.len(), count);

    let lo_bits = n / 2;
    let hi_bits = n - lo_bits;

    let mut seen = [0u32; 33];
    let lo_rank = (0..1u32 << lo_bits)
        .map(|lo| {
            let p = lo.count_ones() as usize;
            let r = seen[p];
            seen[p] += 1;
            r
        })
        .collect();

    let mut hi_offset = Vec::with_capacity(1 << hi_bits);
    let mut acc: u32 = 0;
    for hi in 0..1u32 << hi_bits {
        let p = hi.count_ones() as usize;
        if p <= n_up && n_up - p <= lo_bits {
            hi_offset.push(acc);
            acc += binomial(lo_bits, n_up - p) as u32;
        } else {
            hi_offset.push(u32::MAX);
        }
    }
    debug_assert_eq!(acc as usize, count);

    Ok(SectorIndex {
        n,
        n_up,
        states,
        lo_bits,
        lo_rank,
        hi_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_site_single_excitation() {
        let s = enumerate_sector(2, 1).unwrap();
        assert_eq!(s.bit_patterns(), &[0b01, 0b10]);
        assert_eq!(s.rank(0b01), Some(0));
        assert_eq!(s.rank(0b10), Some(1));
        assert_eq!(s.rank(0b11), None);
    }

    #[test]
    fn sector_sizes() {
        assert_eq!(enumerate_sector(4, 2).unwrap().len(), 6);
        // C(16, 8) by the multiplicative formula
        let expected: u64 = (9..=16u64).product::<u64>() / (1..=8u64).product::<u64>();
        assert_eq!(expected, 12870);
        assert_eq!(enumerate_sector(16, 8).unwrap().len() as u64, expected);
        assert_eq!(enumerate_sector(5, 0).unwrap().bit_patterns(), &[0]);
        assert_eq!(enumerate_sector(5, 5).unwrap().bit_patterns(), &[0b11111]);
    }

    #[test]
    fn capacity_and_argument_errors() {
        assert!(matches!(enumerate_sector(25, 3), Err(Error::Capacity(_))));
        assert!(matches!(enumerate_sector(1, 0), Err(Error::Capacity(_))));
        assert!(matches!(enumerate_sector(4, 5), Err(Error::Argument(_))));
        assert!(BasisState::new(0b100, 2).is_err());
    }

    #[test]
    fn sz_values_and_counting_identity() {
        let up = BasisState::new(0b1011, 4).unwrap();
        assert_eq!(sz_expectation(0, up).unwrap(), 0.5);
        assert_eq!(sz_expectation(2, up).unwrap(), -0.5);
        assert!(matches!(sz_expectation(4, up), Err(Error::Index(_))));
        for bits in 0..1u32 << 6 {
            let s = BasisState::new(bits, 6).unwrap();
            let total: f64 = (0..6).map(|i| sz_expectation(i, s).unwrap()).sum();
            assert_eq!(total, s.n_up() as f64 - 3.0);
        }
    }

    #[test]
    fn partition_of_full_space() {
        for n in MIN_SITES..=16 {
            let total: u64 = (0..=n).map(|k| enumerate_sector(n, k).unwrap().len() as u64).sum();
            assert_eq!(total, 1u64 << n);
        }
    }

    #[test]
    fn rank_inverts_states_and_order_is_canonical() {
        for n in MIN_SITES..=12 {
            for k in 0..=n {
                let s = enumerate_sector(n, k).unwrap();
                assert!(s.bit_patterns().windows(2).all(|w| w[0] < w[1]));
                for (i, &b) in s.bit_patterns().iter().enumerate() {
                    assert_eq!(s.rank(b), Some(i));
                }
            }
        }
    }

    #[test]
    fn subset_a_splits_sectors() {
        let a = SubsetA;
        for n in MIN_SITES..=12 {
            assert_eq!(a.states(n).unwrap().len(), 1 << (n - 1));
            for k in 1..=n {
                let s = enumerate_sector(n, k).unwrap();
                let inside = s.states().filter(|&b| a.contains(b)).count() as u64;
                assert_eq!(inside, binomial(n - 1, k - 1));
                for b in s.states() {
                    let up = sz_expectation(0, b).unwrap() == 0.5;
                    assert_eq!(a.contains(b), up);
                }
            }
        }
    }
}
