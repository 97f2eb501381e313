//! Small statistics helpers shared by the Monte Carlo checks.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Running mean and variance (Welford), accumulated in input order.
#[derive(Clone, Copy, Debug, Default)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::default();
        for x in iter {
            w.push(x);
        }
        w
    }
}

/// Binomial proportion and its standard error.
pub fn proportion(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = successes as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// Sample variance of `xs` with a delta-method standard error,
/// `se(s^2) ~ sqrt((m4 - s^4) / n)`.
pub fn variance_with_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2).max(0.0) / n).sqrt();
    (var, se)
}

/// Empirical distribution of integer samples.
pub fn histogram<T: Ord + Copy>(xs: impl IntoIterator<Item = T>) -> BTreeMap<T, u64> {
    let mut h = BTreeMap::new();
    for x in xs {
        *h.entry(x).or_insert(0) += 1;
    }
    h
}

/// Total-variation distance between two empirical distributions.
pub fn total_variation<T: Ord + Copy>(a: &BTreeMap<T, u64>, b: &BTreeMap<T, u64>) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let mut keys: Vec<T> = a.keys().chain(b.keys()).copied().collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .iter()
        .map(|k| {
            let pa = *a.get(k).unwrap_or(&0) as f64 / na as f64;
            let pb = *b.get(k).unwrap_or(&0) as f64 / nb as f64;
            (pa - pb).abs()
        })
        .sum::<f64>()
}

/// Pearson chi-square statistic and its upper-tail p-value for observed
/// counts against expected probabilities.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected_probs.len());
    let total: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected_probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = expected_probs.iter().filter(|&&p| p > 0.0).count() as f64 - 1.0;
    let p_value = if dof >= 1.0 {
        1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat)
    } else {
        1.0
    };
    (stat, p_value)
}
