use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// `K` random `M`-subsets of `0..N`, stored as packed membership bitmaps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsamplePlan {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub seed: u64,
    membership: Vec<Vec<u64>>,
}

/// `ceil(fraction * n)`, the subsample size rule used throughout.
pub fn subsample_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Draw `k` independent uniform `m`-subsets. Subset `j` uses its own stream derived from
/// `(seed, j)`, so plans with different `k` share their common prefix.
pub fn draw_subsamples(n: usize, m: usize, k: usize, seed: u64) -> Result<SubsamplePlan> {
    if m == 0 || m > n {
        return Err(Error::config(format!("subsample size M = {m} must lie in 1..=N (N = {n})")));
    }
    if k == 0 {
        return Err(Error::config("K must be >= 1"));
    }
    let words = n.div_ceil(64);
    let mut pool: Vec<usize> = Vec::with_capacity(n);
    let membership = (0..k)
        .map(|j| {
            let mut rng = seed::rng(seed::mix(seed, &["subsample", &j.to_string()]));
            pool.clear();
            pool.extend(0..n);
            // partial Fisher-Yates: the first m slots end up a uniform m-subset
            for i in 0..m {
                let r = rng.random_range(i..n);
                pool.swap(i, r);
            }
            let mut bits = vec![0u64; words];
            for &id in &pool[..m] {
                bits[id / 64] |= 1 << (id % 64);
            }
            bits
        })
        .collect();
    Ok(SubsamplePlan { n, m, k, seed, membership })
}

impl SubsamplePlan {
    /// Build a plan from explicit membership rows (`rows[k][i]` is true when example `i`
    /// is in subsample `k`). Every row must select the same number of examples.
    pub fn from_membership(rows: &[Vec<bool>], seed: u64) -> Result<SubsamplePlan> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if k == 0 || n == 0 {
            return Err(Error::config("membership must have at least one row and one column"));
        }
        let mut membership = Vec::with_capacity(k);
        let mut m = None;
        for row in rows {
            if row.len() != n {
                return Err(Error::config("membership rows differ in length"));
            }
            let count = row.iter().filter(|&&b| b).count();
            if *m.get_or_insert(count) != count || count == 0 {
                return Err(Error::config("every subsample must have the same nonzero size"));
            }
            let mut bits = vec![0u64; n.div_ceil(64)];
            for (i, _) in row.iter().enumerate().filter(|(_, &b)| b) {
                bits[i / 64] |= 1 << (i % 64);
            }
            membership.push(bits);
        }
        Ok(SubsamplePlan { n, m: m.unwrap(), k, seed, membership })
    }

    pub fn contains(&self, k: usize, id: usize) -> bool {
        self.membership[k][id / 64] >> (id % 64) & 1 == 1
    }

    /// Sorted ids of subsample `k`.
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.contains(k, i)).collect()
    }

    pub fn popcount(&self, k: usize) -> usize {
        self.membership[k].iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn k_in(&self, id: usize) -> Vec<usize> {
        (0..self.k).filter(|&k| self.contains(k, id)).collect()
    }

    pub fn k_out(&self, id: usize) -> Vec<usize> {
        (0..self.k).filter(|&k| !self.contains(k, id)).collect()
    }

    /// The first `k` subsamples as a plan of their own.
    pub fn truncated(&self, k: usize) -> Result<SubsamplePlan> {
        if k == 0 || k > self.k {
            return Err(Error::config("truncation must keep 1..=K subsamples"));
        }
        Ok(SubsamplePlan { membership: self.membership[..k].to_vec(), k, ..self.clone() })
    }

    /// Keep only the listed subsamples, in the given order.
    pub fn select(&self, ks: &[usize]) -> Result<SubsamplePlan> {
        if ks.is_empty() || ks.iter().any(|&k| k >= self.k) {
            return Err(Error::config("subsample selection out of range"));
        }
        Ok(SubsamplePlan { membership: ks.iter().map(|&k| self.membership[k].clone()).collect(), k: ks.len(), ..self.clone() })
    }

    /// Content hash of the plan, identifying it across reports.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plan serialises");
        seed::sha256_hex(&bytes)
    }

    /// Estimation needs some subsample to exclude each example.
    pub fn check_estimable(&self) -> Result<()> {
        if self.m >= self.n {
            return Err(Error::config("M = N leaves every K_out empty; memorisation cannot be estimated"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_rule_for_fifty_thousand() {
        assert_eq!(subsample_size(50_000, 0.7), 35_000);
        assert_eq!(subsample_size(64, 0.7), 45);
        assert_eq!(subsample_size(405, 0.7), 284);
        assert_eq!(subsample_size(10, 1.0), 10);
    }

    #[test]
    fn full_subsamples_leave_k_out_empty() {
        let p = draw_subsamples(6, 6, 4, 0).unwrap();
        assert!((0..6).all(|i| p.k_out(i).is_empty()));
        assert!(p.check_estimable().is_err());
    }

    #[test]
    fn inclusion_rate_matches_m_over_n() {
        let p = draw_subsamples(10, 7, 10_000, 1).unwrap();
        for i in 0..10 {
            let rate = p.k_in(i).len() as f64 / 10_000.0;
            assert!((0.69..=0.71).contains(&rate), "example {i}: {rate}");
        }
    }

    #[test]
    fn co_inclusion_matches_hypergeometric() {
        let (n, m, k) = (12, 8, 20_000);
        let p = draw_subsamples(n, m, k, 4).unwrap();
        let expect = (m * (m - 1)) as f64 / (n * (n - 1)) as f64;
        let both = (0..k).filter(|&j| p.contains(j, 2) && p.contains(j, 9)).count() as f64 / k as f64;
        // 6 sigma binomial band
        let sd = (expect * (1.0 - expect) / k as f64).sqrt();
        assert!((both - expect).abs() < 6.0 * sd, "{both} vs {expect}");
    }

    #[test]
    fn paper_protocol_k_in_within_six_sigma() {
        let n = 500;
        let p = draw_subsamples(n, subsample_size(n, 0.7), 400, 11).unwrap();
        for i in 0..n {
            let c = p.k_in(i).len();
            assert!((240..=320).contains(&c), "example {i}: {c}");
        }
    }

    #[test]
    fn truncation_shares_prefix() {
        let a = draw_subsamples(30, 21, 10, 5).unwrap();
        let b = draw_subsamples(30, 21, 4, 5).unwrap();
        assert_eq!(a.truncated(4).unwrap(), b);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(draw_subsamples(5, 6, 1, 0).is_err());
        assert!(draw_subsamples(5, 0, 1, 0).is_err());
        assert!(draw_subsamples(5, 3, 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn bitmaps_have_m_bits_and_partition(n in 1usize..150, frac in 0.01f64..=1.0, k in 1usize..20, seed in any::<u64>()) {
            let m = subsample_size(n, frac).max(1);
            let p = draw_subsamples(n, m, k, seed).unwrap();
            for j in 0..k {
                prop_assert_eq!(p.popcount(j), m);
            }
            for i in 0..n {
                let (a, b) = (p.k_in(i), p.k_out(i));
                prop_assert_eq!(a.len() + b.len(), k);
                prop_assert!(a.iter().all(|x| !b.contains(x)));
            }
        }
    }
}
