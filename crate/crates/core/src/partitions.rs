//! Integer partitions: the index set of Jack polynomials.
//!
//! A [`Partition`] is stored canonically, without trailing zeros, so the
//! convention "κ_i = 0 past the length" is a read rule ([`Partition::part`])
//! rather than a storage variant.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Partition(Vec<u32>);

impl Partition {
    /// Validates weakly decreasing positive parts. Trailing zeros are
    /// accepted on input and stripped.
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        while parts.last() == Some(&0) {
            parts.pop();
        }
        if parts.contains(&0) || parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidPartition(parts));
        }
        Ok(Self(parts))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weight(&self) -> u32 {
        self.0.iter().sum()
    }

    /// The `i`-th part, 1-based, zero past the length.
    pub fn part(&self, i: usize) -> u32 {
        if i == 0 {
            return 0;
        }
        self.0.get(i - 1).copied().unwrap_or(0)
    }

    /// Parts padded with zeros to length `k`.
    pub fn padded(&self, k: usize) -> Vec<u32> {
        let mut v = self.0.clone();
        v.resize(k.max(v.len()), 0);
        v
    }

    /// κ_(i): decrement part `i` (1-based). A trailing part that reaches zero
    /// is dropped. `Ok(None)` when the result is no longer weakly decreasing.
    pub fn lower(&self, i: usize) -> Result<Option<Partition>> {
        let len = self.len();
        if i == 0 || i > len {
            return Err(Error::IndexOutOfRange { index: i, len });
        }
        let mut parts = self.0.clone();
        parts[i - 1] -= 1;
        if i < len && parts[i - 1] < parts[i] {
            return Ok(None);
        }
        if parts[i - 1] == 0 {
            // only reachable for i == len
            parts.pop();
        }
        Ok(Some(Partition(parts)))
    }

    /// All valid lowerings `(i, κ_(i))`.
    pub fn lowerings(&self) -> impl Iterator<Item = (usize, Partition)> + '_ {
        (1..=self.len()).filter_map(move |i| self.lower(i).ok().flatten().map(|p| (i, p)))
    }

    /// Componentwise containment μ ⊆ κ.
    pub fn is_contained_in(&self, other: &Partition) -> bool {
        self.len() <= other.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Dominance order: `self ≤ other` iff equal weight and every partial sum
    /// of `self` is at most that of `other`.
    pub fn is_dominated_by(&self, other: &Partition) -> bool {
        if self.weight() != other.weight() {
            return false;
        }
        let (mut a, mut b) = (0u32, 0u32);
        for i in 1..=self.len().max(other.len()) {
            a += self.part(i);
            b += other.part(i);
            if a > b {
                return false;
            }
        }
        true
    }

    /// Number of distinct rearrangements of the parts padded to length `k`,
    /// i.e. the value of the monomial symmetric polynomial at `1_k`.
    pub fn distinct_permutations(&self, k: usize) -> f64 {
        if self.len() > k {
            return 0.0;
        }
        let mut log = ln_factorial(k);
        let padded = self.padded(k);
        let mut run = 1usize;
        for w in padded.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                log -= ln_factorial(run);
                run = 1;
            }
        }
        log -= ln_factorial(run);
        log.exp().round()
    }

    /// All partitions `μ ⊆ self` with `length(μ) ≤ max_length`, in
    /// weight-major order: weight descending, then lexicographically
    /// descending within a weight. Includes `self` and `∅`.
    pub fn sub_partitions(&self, max_length: usize) -> Vec<Partition> {
        let mut out = Vec::new();
        let bound = self.len().min(max_length);
        let mut cur = Vec::with_capacity(bound);
        sub_rec(&self.0[..bound], u32::MAX, &mut cur, &mut out);
        out.sort_by(weight_major_desc);
        out
    }
}

fn sub_rec(kappa: &[u32], cap: u32, cur: &mut Vec<u32>, out: &mut Vec<Partition>) {
    out.push(Partition(cur.clone()));
    let Some((&first, rest)) = kappa.split_first() else {
        return;
    };
    for v in 1..=first.min(cap) {
        cur.push(v);
        sub_rec(rest, v, cur, out);
        cur.pop();
    }
}

/// Weight descending, then lexicographic descending.
pub fn weight_major_desc(a: &Partition, b: &Partition) -> Ordering {
    b.weight().cmp(&a.weight()).then_with(|| b.0.cmp(&a.0))
}

/// All partitions of `n` with at most `max_len` parts, lexicographically
/// descending.
pub fn partitions_of(n: u32, max_len: usize) -> Vec<Partition> {
    fn rec(rem: u32, cap: u32, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<Partition>) {
        if rem == 0 {
            out.push(Partition(cur.clone()));
            return;
        }
        if slots == 0 {
            return;
        }
        for v in (1..=rem.min(cap)).rev() {
            cur.push(v);
            rec(rem - v, v, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, max_len, &mut Vec::new(), &mut out);
    out
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

impl TryFrom<Vec<u32>> for Partition {
    type Error = Error;

    fn try_from(v: Vec<u32>) -> Result<Self> {
        Partition::new(v)
    }
}

impl From<Partition> for Vec<u32> {
    fn from(p: Partition) -> Self {
        p.0
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    /// Parses `"2,1"`; the empty string and `"0"` give `∅`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches(['(', '[']).trim_end_matches([')', ']']);
        if s.is_empty() || s == "∅" {
            return Ok(Partition::empty());
        }
        let parts = s
            .split(',')
            .map(|t| t.trim().parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("bad partition '{s}': {e}")))?;
        Partition::new(parts)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        write!(f, "(")?;
        for (n, p) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

#[macro_export]
macro_rules! part {
    () => { $crate::partitions::Partition::empty() };
    ($($x:expr),+ $(,)?) => {
        $crate::partitions::Partition::new(vec![$($x),+]).expect("valid partition literal")
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn lower_examples() {
        assert_eq!(part![2, 1].lower(1).unwrap(), Some(part![1, 1]));
        assert_eq!(part![2, 1].lower(2).unwrap(), Some(part![2]));
        assert_eq!(part![1, 1].lower(1).unwrap(), None);
        assert_eq!(part![1].lower(1).unwrap(), Some(part![]));
        assert!(matches!(part![2, 1].lower(3), Err(Error::IndexOutOfRange { .. })));
        assert!(part![2, 1].lower(0).is_err());
    }

    #[test]
    fn sub_partition_examples() {
        assert_eq!(part![2].sub_partitions(2), vec![part![2], part![1], part![]]);
        assert_eq!(part![1, 1].sub_partitions(2), vec![part![1, 1], part![1], part![]]);
    }

    // brute force over all bounded integer sequences
    fn brute_sub(kappa: &Partition, max_len: usize) -> Vec<Partition> {
        let bound = kappa.part(1);
        let l = kappa.len().min(max_len);
        let mut found = BTreeSet::new();
        let total = (bound as usize + 1).pow(l as u32);
        for code in 0..total {
            let mut c = code;
            let mut seq = Vec::with_capacity(l);
            for _ in 0..l {
                seq.push((c % (bound as usize + 1)) as u32);
                c /= bound as usize + 1;
            }
            if seq.iter().enumerate().all(|(i, &v)| v <= kappa.part(i + 1)) {
                if let Ok(p) = Partition::new(seq) {
                    found.insert(p);
                }
            }
        }
        let mut v: Vec<_> = found.into_iter().collect();
        v.sort_by(weight_major_desc);
        v
    }

    #[test]
    fn sub_partitions_match_brute_force() {
        assert_eq!(
            part![2, 1].sub_partitions(3),
            vec![part![2, 1], part![2], part![1, 1], part![1], part![]]
        );
        for kappa in [part![2, 1], part![3, 1], part![2, 2], part![3, 2, 1], part![4, 2, 2]] {
            assert_eq!(kappa.sub_partitions(4), brute_sub(&kappa, 4), "{kappa}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Partition::new(vec![1, 2]).is_err());
        assert!(Partition::new(vec![2, 0, 1]).is_err());
        assert_eq!(Partition::new(vec![2, 1, 0, 0]).unwrap(), part![2, 1]);
    }

    #[test]
    fn json_round_trip() {
        let p = part![2, 1];
        assert_eq!(serde_json::to_string(&p).unwrap(), "[2,1]");
        assert_eq!(serde_json::to_string(&part![]).unwrap(), "[]");
        let q: Partition = serde_json::from_str("[3,1]").unwrap();
        assert_eq!(q, part![3, 1]);
        assert!(serde_json::from_str::<Partition>("[1,3]").is_err());
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("2,1".parse::<Partition>().unwrap(), part![2, 1]);
        assert_eq!("".parse::<Partition>().unwrap(), part![]);
        assert_eq!(part![3, 1].to_string(), "(3,1)");
        assert_eq!(part![].to_string(), "∅");
    }

    #[test]
    fn counts_permutations() {
        assert_eq!(part![1].distinct_permutations(5), 5.0);
        assert_eq!(part![1, 1].distinct_permutations(4), 6.0);
        assert_eq!(part![2, 1].distinct_permutations(3), 6.0);
        assert_eq!(part![].distinct_permutations(3), 1.0);
        assert_eq!(part![1, 1, 1].distinct_permutations(2), 0.0);
    }

    #[test]
    fn enumerates_partitions_of_n() {
        assert_eq!(partitions_of(4, 4).len(), 5);
        assert_eq!(partitions_of(4, 2), vec![part![4], part![3, 1], part![2, 2]]);
        assert_eq!(partitions_of(0, 3), vec![part![]]);
    }

    #[test]
    fn dominance() {
        assert!(part![2, 1, 1].is_dominated_by(&part![2, 2]));
        assert!(part![2, 2].is_dominated_by(&part![3, 1]));
        assert!(!part![3, 1].is_dominated_by(&part![2, 2]));
    }

    fn arb_partition() -> impl Strategy<Value = Partition> {
        prop::collection::vec(1u32..5, 0..5).prop_map(|mut v| {
            v.sort_unstable_by(|a, b| b.cmp(a));
            Partition::new(v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn lowering_drops_weight_by_one(kappa in arb_partition()) {
            for (_, mu) in kappa.lowerings() {
                prop_assert_eq!(mu.weight() + 1, kappa.weight());
                prop_assert!(mu.is_contained_in(&kappa));
            }
        }

        #[test]
        fn lowering_closure_is_sub_partitions(kappa in arb_partition()) {
            let mut seen = BTreeSet::new();
            let mut stack = vec![kappa.clone()];
            while let Some(p) = stack.pop() {
                if seen.insert(p.clone()) {
                    stack.extend(p.lowerings().map(|(_, q)| q));
                }
            }
            let subs: BTreeSet<_> = kappa.sub_partitions(kappa.len()).into_iter().collect();
            prop_assert_eq!(seen, subs);
        }

        #[test]
        fn any_lowering_path_ends_at_empty(kappa in arb_partition(), picks in prop::collection::vec(0usize..8, 0..32)) {
            let mut cur = kappa.clone();
            let mut steps = 0;
            let mut picks = picks.into_iter().cycle();
            while !cur.is_empty() {
                let options: Vec<_> = cur.lowerings().map(|(_, q)| q).collect();
                prop_assert!(!options.is_empty());
                let pick = picks.next().unwrap_or(0) % options.len();
                cur = options[pick].clone();
                steps += 1;
            }
            prop_assert_eq!(steps, kappa.weight());
        }
    }
}
