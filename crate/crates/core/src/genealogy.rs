//! Pair-ancestry law of the binary tree and the second-moment machinery for
//! confined particle counts.
//!
//! The generation of the most recent common ancestor of two distinct
//! particles at time `n` is `k` in `0..n`; siblings have `k = n - 1`. Its law
//! under a uniformly chosen ordered pair is `Q^n(k) = 2^{n-k-1} / (2^n - 1)`.
//!
//! The moment checks use the free tree in which a particle alive at time `k`
//! first doubles and then its two offspring move independently, so two
//! ancestral lines share exactly the positions `0..=k` of their common
//! ancestor.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;

use crate::brw::{confined_count, free_tree_confinement, BranchOrder};
use crate::error::{Error, Result};
use crate::rng::{derive_replica_seed, replica_rng};
use crate::stats::{chi_square_gof, proportion, variance_with_se, Welford};
use crate::walk::BallWalk;

/// Largest `n` for exhaustive pair enumeration and the tree-based checks.
pub const PAIR_ENUMERATION_CAP: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct PairLaw {
    pub n: usize,
    pub exact: Vec<BigRational>,
    pub values: Vec<f64>,
}

fn pow2(e: usize) -> BigInt {
    BigInt::one() << e
}

/// `Q^n(k)` for `k = 0..n`.
pub fn qn_pmf(n: usize) -> Result<PairLaw> {
    if n == 0 {
        return Err(Error::Config(
            "a single particle has no pairs (n = 0)".into(),
        ));
    }
    let denom = pow2(n) - BigInt::one();
    let exact: Vec<BigRational> = (0..n)
        .map(|k| BigRational::new(pow2(n - k - 1), denom.clone()))
        .collect();
    let values = exact.iter().map(|q| q.to_f64().unwrap_or(0.0)).collect();
    Ok(PairLaw { n, exact, values })
}

/// Exact pair-ancestry law by walking every ordered pair of the depth-`n`
/// binary tree up to its common ancestor.
pub fn mrca_bruteforce(n: usize) -> Result<Vec<BigRational>> {
    if n == 0 {
        return Err(Error::Config(
            "a single particle has no pairs (n = 0)".into(),
        ));
    }
    if n > PAIR_ENUMERATION_CAP {
        return Err(Error::HorizonCap {
            n,
            cap: PAIR_ENUMERATION_CAP,
        });
    }
    // heap numbering: root 1, children of v are 2v and 2v + 1
    let nodes = 1usize << (n + 1);
    let mut parent = vec![0usize; nodes];
    let mut depth = vec![0usize; nodes];
    for v in 2..nodes {
        parent[v] = v / 2;
        depth[v] = depth[v / 2] + 1;
    }
    let leaves: Vec<usize> = (1 << n..1 << (n + 1)).collect();
    let counts: Vec<u64> = leaves
        .par_iter()
        .map(|&a| {
            let mut local = vec![0u64; n];
            for &b in &leaves {
                if a == b {
                    continue;
                }
                let (mut x, mut y) = (a, b);
                while x != y {
                    x = parent[x];
                    y = parent[y];
                }
                local[depth[x]] += 1;
            }
            local
        })
        .reduce(
            || vec![0u64; n],
            |mut acc, v| {
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                acc
            },
        );
    let total: u64 = counts.iter().sum();
    Ok(counts
        .into_iter()
        .map(|c| BigRational::new(c.into(), total.into()))
        .collect())
}

/// Ancestor generation of leaves `a != b` of the depth-`n` tree, where leaf
/// labels are `0..2^n` read as root-to-leaf bit strings.
pub fn mrca_generation(n: usize, a: u64, b: u64) -> usize {
    n - (64 - (a ^ b).leading_zeros() as usize)
}

/// Monte Carlo pair sampling: counts of ancestor generations over `pairs`
/// uniformly drawn ordered pairs of distinct leaves.
pub fn sample_mrca_counts(n: usize, pairs: usize, seed: u64) -> Result<Vec<u64>> {
    if n == 0 || n > 63 {
        return Err(Error::Config(format!("n = {n} must be in 1..=63")));
    }
    let mut rng = replica_rng(seed);
    let leaves = 1u64 << n;
    let mut counts = vec![0u64; n];
    for _ in 0..pairs {
        let a = rng.random_range(0..leaves);
        let mut b = rng.random_range(0..leaves - 1);
        if b >= a {
            b += 1;
        }
        counts[mrca_generation(n, a, b)] += 1;
    }
    Ok(counts)
}

/// Chi-square goodness of fit of sampled pairs against `Q^n`; returns the
/// statistic and p-value.
pub fn pair_law_fit(n: usize, pairs: usize, seed: u64) -> Result<(f64, f64)> {
    let law = qn_pmf(n)?;
    let counts = sample_mrca_counts(n, pairs, seed)?;
    Ok(chi_square_gof(&counts, &law.values))
}

/// Confinement radius, fixed or chosen as a function of the horizon.
#[derive(Clone, Copy, Debug)]
pub enum RadiusSpec {
    Constant(f64),
    Schedule(fn(usize) -> f64),
}

impl RadiusSpec {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            RadiusSpec::Constant(r) => *r,
            RadiusSpec::Schedule(f) => f(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub dimension: usize,
    pub n: usize,
    pub radius: f64,
    /// `p_k` for `k = 0..=n`.
    pub p: Vec<f64>,
    /// `J_n = sum_{k<n} Q^n(k) / p_k`.
    pub jn: f64,
    /// Terms with `k <= floor(r)`.
    pub jn_low: f64,
    /// Terms with `floor(r) < k < n`.
    pub jn_high: f64,
    /// `2^n p_n + 2^{2n} p_n^2 (J_n - 1)`.
    pub variance_bound: f64,
    /// Exact `P(both lines of a uniform ordered pair stay confined)`.
    pub joint_confinement: f64,
    /// Exact `Var(Y_n)` from the joint confinement probability.
    pub exact_variance: f64,
}

impl MomentReport {
    /// `p_n^2 J_n`, the pair-correlation prediction.
    pub fn pair_prediction(&self) -> f64 {
        self.p[self.n].powi(2) * self.jn
    }

    pub fn expected_count(&self) -> f64 {
        2f64.powi(self.n as i32) * self.p[self.n]
    }
}

/// `J_n` and its split at `floor(r)`, the variance bound, and the exact
/// joint confinement probability `sum_k Q^n(k) sum_x P_0(confined, X_k = x) p_{n-k,x}^2`.
pub fn jn_terms(dimension: usize, radius: RadiusSpec, n: usize) -> Result<MomentReport> {
    let law = qn_pmf(n)?;
    let r = radius.at(n);
    let walk = BallWalk::new(dimension, r)?;
    let p = walk.survival_series(n);
    let split = r.floor().max(0.0) as usize;
    let (mut jn_low, mut jn_high) = (0.0, 0.0);
    for k in 0..n {
        if p[k] == 0.0 {
            return Err(Error::InfiniteJ { k });
        }
        let term = law.values[k] / p[k];
        if k <= split {
            jn_low += term;
        } else {
            jn_high += term;
        }
    }
    let jn = jn_low + jn_high;
    let p_n = p[n];
    let two_n = 2f64.powi(n as i32);
    let variance_bound = two_n * p_n + two_n * two_n * p_n * p_n * (jn - 1.0);

    let mut joint = 0.0;
    let mut occupation = vec![0.0; walk.sites().len()];
    occupation[walk.origin_index()] = 1.0;
    for k in 0..n {
        let stay = walk.survival_by_site(n - k);
        let inner: f64 = occupation.iter().zip(&stay).map(|(m, s)| m * s * s).sum();
        joint += law.values[k] * inner;
        occupation = walk.apply(&occupation);
    }
    let exact_variance = two_n * (p_n - p_n * p_n) + two_n * (two_n - 1.0) * (joint - p_n * p_n);
    Ok(MomentReport {
        dimension,
        n,
        radius: r,
        p,
        jn,
        jn_low,
        jn_high,
        variance_bound,
        joint_confinement: joint,
        exact_variance,
    })
}

fn check_tree_inputs(n: usize, replicas: usize) -> Result<()> {
    if replicas == 0 {
        return Err(Error::Empty("replicas"));
    }
    if n == 0 || n > PAIR_ENUMERATION_CAP {
        return Err(Error::HorizonCap {
            n,
            cap: PAIR_ENUMERATION_CAP,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairCorrelationReport {
    pub n: usize,
    pub radius: f64,
    pub replicas: usize,
    pub hits: usize,
    pub empirical: f64,
    pub std_error: f64,
    /// `p_n^2 J_n`.
    pub predicted: f64,
    /// Exact joint confinement probability.
    pub exact: f64,
}

impl PairCorrelationReport {
    pub fn agrees_with_prediction(&self) -> bool {
        (self.empirical - self.predicted).abs() <= 3.0 * self.std_error
    }

    pub fn agrees_with_exact(&self) -> bool {
        (self.empirical - self.exact).abs() <= 3.0 * self.std_error
    }
}

/// Per replica: grow a free tree, draw a uniform ordered pair of distinct
/// particles at time `n`, and record whether both ancestral lines stayed in
/// the ball.
pub fn pair_correlation_check(
    dimension: usize,
    radius: f64,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<PairCorrelationReport> {
    check_tree_inputs(n, replicas)?;
    let hits = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(derive_replica_seed(seed, i as u64));
            let leaves =
                free_tree_confinement(dimension, radius, n, BranchOrder::SplitThenMove, &mut rng)?;
            let a = rng.random_range(0..leaves.len());
            let mut b = rng.random_range(0..leaves.len() - 1);
            if b >= a {
                b += 1;
            }
            Ok(usize::from(leaves[a] && leaves[b]))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    let (empirical, std_error) = proportion(hits as u64, replicas as u64);
    let (predicted, exact) = match jn_terms(dimension, RadiusSpec::Constant(radius), n) {
        Ok(m) => (m.pair_prediction(), m.joint_confinement),
        // p_k = 0 for some k < n: no line survives and both sides vanish
        Err(Error::InfiniteJ { .. }) => (0.0, 0.0),
        Err(e) => return Err(e),
    };
    Ok(PairCorrelationReport {
        n,
        radius,
        replicas,
        hits,
        empirical,
        std_error,
        predicted,
        exact,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceReport {
    pub n: usize,
    pub radius: f64,
    pub replicas: usize,
    pub mean: f64,
    pub mean_std_error: f64,
    /// `2^n p_n`.
    pub expected_mean: f64,
    pub variance: f64,
    pub variance_std_error: f64,
    pub bound: f64,
    pub exact_variance: f64,
}

impl VarianceReport {
    pub fn bound_holds(&self) -> bool {
        self.variance <= self.bound + 3.0 * self.variance_std_error
    }
}

/// Empirical `Var(Y_n)` from free-tree replicas against the bound
/// `2^n p_n + 2^{2n} p_n^2 (J_n - 1)`.
pub fn variance_bound_check(
    dimension: usize,
    radius: f64,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<VarianceReport> {
    check_tree_inputs(n, replicas)?;
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(derive_replica_seed(seed, i as u64));
            confined_count(dimension, radius, n, BranchOrder::SplitThenMove, &mut rng)
                .map(|y| y as f64)
        })
        .collect::<Result<_>>()?;
    let w: Welford = samples.iter().copied().collect();
    let (variance, variance_std_error) = variance_with_se(&samples);
    let m = jn_terms(dimension, RadiusSpec::Constant(radius), n)?;
    Ok(VarianceReport {
        n,
        radius,
        replicas,
        mean: w.mean(),
        mean_std_error: w.std_error(),
        expected_mean: m.expected_count(),
        variance,
        variance_std_error,
        bound: m.variance_bound,
        exact_variance: m.exact_variance,
    })
}

/// Sum of a rational pmf.
pub fn total_mass(pmf: &[BigRational]) -> BigRational {
    pmf.iter().fold(BigRational::zero(), |acc, q| acc + q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn small_pair_laws() {
        assert_eq!(qn_pmf(2).unwrap().exact, vec![rat(2, 3), rat(1, 3)]);
        assert_eq!(
            qn_pmf(3).unwrap().exact,
            vec![rat(4, 7), rat(2, 7), rat(1, 7)]
        );
        assert!(qn_pmf(0).is_err());
    }

    #[test]
    fn pair_law_is_normalised_and_geometric() {
        for n in 1..=64 {
            let law = qn_pmf(n).unwrap();
            assert_eq!(total_mass(&law.exact), BigRational::one());
            for k in 0..n.saturating_sub(1) {
                assert_eq!(&law.exact[k] / &law.exact[k + 1], rat(2, 1));
            }
        }
    }

    #[test]
    fn enumeration_matches_formula() {
        assert_eq!(mrca_bruteforce(1).unwrap(), vec![BigRational::one()]);
        assert_eq!(mrca_bruteforce(2).unwrap(), vec![rat(8, 12), rat(4, 12)]);
        for n in 3..=8 {
            assert_eq!(mrca_bruteforce(n).unwrap(), qn_pmf(n).unwrap().exact);
        }
        assert!(mrca_bruteforce(13).is_err());
    }

    #[test]
    fn generation_of_siblings_and_root_split() {
        assert_eq!(mrca_generation(4, 0b0110, 0b0111), 3);
        assert_eq!(mrca_generation(4, 0b0000, 0b1000), 0);
    }

    #[test]
    fn unconstrained_moments() {
        let m = jn_terms(2, RadiusSpec::Constant(7.0), 6).unwrap();
        assert_eq!(m.jn, 1.0);
        assert_eq!(m.variance_bound, 64.0);
        assert!(m.exact_variance.abs() < 1e-9);
    }

    #[test]
    fn moments_at_radius_one_and_a_half() {
        let m = jn_terms(2, RadiusSpec::Constant(1.5), 3).unwrap();
        // p = 1, 1, 3/4, 1/2 by hand; J_3 = 4/7 + 2/7 + (1/7)(4/3) = 22/21
        let want = 4.0 / 7.0 + 2.0 / 7.0 + (1.0 / 7.0) / 0.75;
        assert!((m.jn - want).abs() < 1e-15);
        assert!((m.jn - 22.0 / 21.0).abs() < 1e-15);
        assert!((m.jn_low - 6.0 / 7.0).abs() < 1e-15);
        assert!((m.jn_high - 4.0 / 21.0).abs() < 1e-15);
        assert!((m.joint_confinement - 15.0 / 56.0).abs() < 1e-14);
        assert!(m.joint_confinement >= m.pair_prediction());
        assert!((m.exact_variance - 3.0).abs() < 1e-12);
        let s = jn_terms(2, RadiusSpec::Schedule(|n| 0.5 * n as f64), 3).unwrap();
        assert_eq!(s.radius, 1.5);
        assert_eq!(s.jn, m.jn);
    }

    #[test]
    fn tiny_ball_has_infinite_j() {
        assert!(matches!(
            jn_terms(2, RadiusSpec::Constant(0.5), 3),
            Err(Error::InfiniteJ { k: 1 })
        ));
    }

    #[test]
    fn j_is_at_least_one() {
        for r in [1.5, 2.5, 3.2] {
            for n in 1..10 {
                assert!(jn_terms(2, RadiusSpec::Constant(r), n).unwrap().jn >= 1.0);
            }
        }
    }

    #[test]
    fn pair_check_extremes() {
        let big = pair_correlation_check(2, 5.0, 4, 200, 1).unwrap();
        assert_eq!((big.empirical, big.predicted), (1.0, 1.0));
        let tiny = pair_correlation_check(2, 0.5, 3, 200, 1).unwrap();
        assert_eq!(tiny.empirical, 0.0);
        assert!(pair_correlation_check(2, 1.5, 3, 0, 1).is_err());
    }

    #[test]
    fn variance_with_loose_ball_is_zero() {
        let v = variance_bound_check(2, 5.0, 4, 500, 2).unwrap();
        assert_eq!(v.variance, 0.0);
        assert!(v.bound_holds());
    }

    #[test]
    fn chi_square_fit_is_reasonable() {
        let (_, p) = pair_law_fit(10, 50_000, 5).unwrap();
        assert!(p > 0.001);
    }
}
