//! Deterministic, parallelizable permutation and bootstrap replicate
//! generation.
//!
//! Every replicate's randomness is a pure function of `(master_seed,
//! replicate index)` (plus nesting labels), so results do not depend on
//! execution order or worker count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{SurvivalRecord, SurvivalSample};
use crate::error::{Error, Result};
use crate::real::Real;

/// Nesting label for inner bootstrap streams.
pub const STREAM_BOOT: u64 = 0x626f_6f74; // "boot"
/// Nesting label for permutation streams.
pub const STREAM_PERM: u64 = 0x7065_726d; // "perm"
/// Nesting label for data-generation streams.
pub const STREAM_DATA: u64 = 0x6461_7461; // "data"

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed mixing of a master seed and a path of indices/labels.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

/// Deterministic generator for one point of the replicate tree.
pub fn derive_rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Resampling scheme attached to a replicate stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Permutation,
    BootstrapStratified,
}

/// A reproducible family of replicate substreams.
#[derive(Debug, Clone, Copy)]
pub struct ReplicateStream {
    pub master_seed: u64,
    pub replicate_count: usize,
    pub scheme: Scheme,
}

impl ReplicateStream {
    pub fn new(master_seed: u64, replicate_count: usize, scheme: Scheme) -> Self {
        ReplicateStream { master_seed, replicate_count, scheme }
    }

    /// Generator for replicate `r`.
    pub fn rng(&self, r: usize) -> ChaCha8Rng {
        derive_rng(self.master_seed, &[r as u64])
    }

    /// Generator for an inner replicate nested under `r` (e.g. the bootstrap
    /// inside a permutation replicate).
    pub fn nested_rng(&self, r: usize, label: u64, inner: usize) -> ChaCha8Rng {
        derive_rng(self.master_seed, &[r as u64, label, inner as u64])
    }
}

/// A random reassignment of the pooled records into two groups of the
/// original sizes.
#[derive(Debug, Clone)]
pub struct PermutedSplit<F> {
    pub group1: SurvivalSample<F>,
    pub group2: SurvivalSample<F>,
}

/// Uniformly random split of `pooled` into groups of sizes `n1` and
/// `len - n1`.
pub fn permute_split<F: Real, R: Rng>(
    pooled: &[SurvivalRecord<F>],
    n1: usize,
    rng: &mut R,
) -> Result<PermutedSplit<F>> {
    if n1 == 0 || n1 >= pooled.len() {
        return Err(Error::Resampling(format!(
            "group size {n1} out of range for pooled size {}",
            pooled.len()
        )));
    }
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    // Fisher-Yates
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    Ok(split_by_indices(pooled, &idx, n1))
}

/// The split induced by the identity permutation (test hook and baseline).
pub fn identity_split<F: Real>(pooled: &[SurvivalRecord<F>], n1: usize) -> PermutedSplit<F> {
    let idx: Vec<usize> = (0..pooled.len()).collect();
    split_by_indices(pooled, &idx, n1)
}

/// Split along an explicit permutation of `0..pooled.len()`.
pub fn split_by_indices<F: Real>(
    pooled: &[SurvivalRecord<F>],
    idx: &[usize],
    n1: usize,
) -> PermutedSplit<F> {
    let group1 = idx[..n1].iter().map(|&i| pooled[i].clone()).collect();
    let group2 = idx[n1..].iter().map(|&i| pooled[i].clone()).collect();
    PermutedSplit {
        group1: SurvivalSample::new(group1, "perm1"),
        group2: SurvivalSample::new(group2, "perm2"),
    }
}

/// Split where `selected` (strictly increasing indices) forms group 1.
pub fn split_by_selection<F: Real>(
    pooled: &[SurvivalRecord<F>],
    selected: &[usize],
) -> PermutedSplit<F> {
    let mut in_g1 = vec![false; pooled.len()];
    for &i in selected {
        in_g1[i] = true;
    }
    let group1 = selected.iter().map(|&i| pooled[i].clone()).collect();
    let group2 = (0..pooled.len()).filter(|&i| !in_g1[i]).map(|i| pooled[i].clone()).collect();
    PermutedSplit {
        group1: SurvivalSample::new(group1, "perm1"),
        group2: SurvivalSample::new(group2, "perm2"),
    }
}

/// `n` draws with replacement from the sample's own records; never mixes
/// groups and preserves the size.
pub fn bootstrap_sample<F: Real, R: Rng>(
    sample: &SurvivalSample<F>,
    rng: &mut R,
) -> SurvivalSample<F> {
    let n = sample.len();
    let records = (0..n).map(|_| sample.records[rng.gen_range(0..n)].clone()).collect();
    SurvivalSample::new(records, sample.label.clone())
}

/// Number of distinct group-1 index sets, `C(n, k)`, if it fits in `u64`.
pub fn split_count(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u64)?;
        acc /= (i + 1) as u64;
    }
    Some(acc)
}

/// Default cap for exhaustive enumeration.
pub const DEFAULT_EXHAUSTIVE_CAP: u64 = 200_000;

/// Lexicographic enumeration of all `k`-subsets of `0..n`.
pub struct Combinations {
    n: usize,
    k: usize,
    state: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        let state = if k <= n { Some((0..k).collect()) } else { None };
        Combinations { n, k, state }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.state.clone()?;
        // advance to the lexicographic successor
        let mut next = current.clone();
        let mut i = self.k;
        loop {
            if i == 0 {
                self.state = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - self.k + i {
                next[i] += 1;
                for j in i + 1..self.k {
                    next[j] = next[j - 1] + 1;
                }
                self.state = Some(next);
                break;
            }
        }
        Some(current)
    }
}

/// Run `stream.replicate_count` independent jobs on `workers` threads,
/// collecting results in replicate order. Failures are reported per
/// replicate, never dropped.
pub fn run_replicates<T, J>(stream: &ReplicateStream, workers: usize, job: J) -> Vec<Result<T>>
where
    T: Send,
    J: Fn(usize, ChaCha8Rng) -> Result<T> + Sync,
{
    run_indexed(stream, 0..stream.replicate_count, workers, &job)
}

/// As [`run_replicates`], over an explicit index range (used for
/// deterministic redraws after discards).
pub fn run_indexed<T, J>(
    stream: &ReplicateStream,
    range: std::ops::Range<usize>,
    workers: usize,
    job: &J,
) -> Vec<Result<T>>
where
    T: Send,
    J: Fn(usize, ChaCha8Rng) -> Result<T> + Sync,
{
    let indices: Vec<usize> = range.collect();
    if indices.is_empty() {
        return Vec::new();
    }
    if workers <= 1 {
        return indices.into_iter().map(|r| job(r, stream.rng(r))).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction");
    pool.install(|| {
        use rayon::prelude::*;
        indices.into_par_iter().map(|r| job(r, stream.rng(r))).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use std::collections::HashMap;

    fn pooled(n: usize) -> Vec<SurvivalRecord<f64>> {
        (0..n).map(|i| SurvivalRecord::new(i as f64 + 1.0, i % 2 == 0)).collect()
    }

    fn key(split: &PermutedSplit<f64>) -> Vec<u64> {
        let mut k: Vec<u64> =
            split.group1.records.iter().map(|r| r.time.to_bits()).collect();
        k.sort_unstable();
        k
    }

    #[test]
    fn identity_split_preserves_order() {
        let p = pooled(5);
        let s = identity_split(&p, 3);
        assert_eq!(s.group1.records, p[..3].to_vec());
        assert_eq!(s.group2.records, p[3..].to_vec());
    }

    #[test]
    fn multiset_union_invariant() {
        let p = pooled(9);
        let mut rng = derive_rng(11, &[0]);
        for _ in 0..50 {
            let s = permute_split(&p, 4, &mut rng).unwrap();
            let mut all: Vec<u64> = s
                .group1
                .records
                .iter()
                .chain(&s.group2.records)
                .map(|r| r.time.to_bits())
                .collect();
            all.sort_unstable();
            let mut orig: Vec<u64> = p.iter().map(|r| r.time.to_bits()).collect();
            orig.sort_unstable();
            assert_eq!(all, orig);
        }
    }

    #[test]
    fn n1_out_of_range() {
        let p = pooled(4);
        let mut rng = derive_rng(1, &[0]);
        assert!(permute_split(&p, 0, &mut rng).is_err());
        assert!(permute_split(&p, 4, &mut rng).is_err());
    }

    #[test]
    fn exhaustive_enumeration_counts() {
        assert_eq!(split_count(4, 2), Some(6));
        assert_eq!(split_count(8, 4), Some(70));
        assert_eq!(Combinations::new(4, 2).count(), 6);
        assert_eq!(Combinations::new(8, 4).count(), 70);
        let distinct: BTreeSet<Vec<usize>> = Combinations::new(6, 3).collect();
        assert_eq!(distinct.len(), 20);
    }

    #[test]
    fn uniform_over_splits() {
        let p = pooled(4);
        let mut counts: HashMap<Vec<u64>, usize> = HashMap::new();
        let draws = 60_000;
        for r in 0..draws {
            let mut rng = derive_rng(2024, &[r as u64]);
            let s = permute_split(&p, 2, &mut rng).unwrap();
            *counts.entry(key(&s)).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for (_, c) in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn bootstrap_is_deterministic_and_member_closed() {
        let sample = SurvivalSample::new(pooled(7), "s");
        let a = bootstrap_sample(&sample, &mut derive_rng(3, &[0]));
        let b = bootstrap_sample(&sample, &mut derive_rng(3, &[0]));
        assert_eq!(a.records, b.records);
        assert_eq!(a.len(), 7);
        for r in &a.records {
            assert!(sample.records.contains(r));
        }
    }

    #[test]
    fn bootstrap_singleton_is_identity() {
        let sample = SurvivalSample::new(pooled(1), "s");
        let a = bootstrap_sample(&sample, &mut derive_rng(3, &[1]));
        assert_eq!(a.records, sample.records);
    }

    #[test]
    fn replicates_worker_invariant() {
        let stream = ReplicateStream::new(99, 64, Scheme::Permutation);
        let job = |r: usize, mut rng: ChaCha8Rng| -> crate::error::Result<(usize, u64)> {
            Ok((r, rng.gen::<u64>()))
        };
        let one: Vec<_> = run_replicates(&stream, 1, job).into_iter().map(|r| r.unwrap()).collect();
        let four: Vec<_> =
            run_replicates(&stream, 4, job).into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(one, four);
        for (i, (r, _)) in one.iter().enumerate() {
            assert_eq!(i, *r);
        }
    }

    #[test]
    fn zero_replicates_empty_output() {
        let stream = ReplicateStream::new(1, 0, Scheme::Permutation);
        let out = run_replicates(&stream, 4, |_, _| Ok(7u8));
        assert!(out.is_empty());
    }

    #[test]
    fn nested_streams_are_distinct() {
        let s = ReplicateStream::new(5, 10, Scheme::BootstrapStratified);
        let a: u64 = s.nested_rng(0, STREAM_BOOT, 0).gen();
        let b: u64 = s.nested_rng(0, STREAM_BOOT, 1).gen();
        let c: u64 = s.nested_rng(1, STREAM_BOOT, 0).gen();
        let d: u64 = s.rng(0).gen();
        assert!(a != b && a != c && a != d && b != c);
    }
}
