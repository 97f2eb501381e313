//! Exact single-walk oracles: survival among traps, confinement in a ball,
//! spectral decay rates and the model constants.

use std::f64::consts::PI;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::clearings::ball_sites;
use crate::error::{Error, Result};
use crate::lattice::{Site, TrapField};

/// What happens when the walk would leave the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryMode {
    /// The box must be large enough (`L >= |x|_inf + n`) that the walk never
    /// sees its boundary; values equal the infinite-lattice ones.
    Exact,
    /// Sites outside the box act as traps; values are lower bounds.
    Absorbing,
}

impl std::str::FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(BoundaryMode::Exact),
            "absorbing" => Ok(BoundaryMode::Absorbing),
            other => Err(Error::Config(format!(
                "unknown boundary mode {other:?} (expected exact or absorbing)"
            ))),
        }
    }
}

/// `q_k = P_x(X_1, ..., X_k all vacant)` for `k = 0..=n`, kept in log form so
/// long horizons do not underflow.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalTable {
    pub start: Site,
    pub horizon: usize,
    pub mode: BoundaryMode,
    /// `log q_k`; `-inf` once the walk is certainly dead.
    pub log_q: Vec<f64>,
}

impl SurvivalTable {
    pub fn q(&self, k: usize) -> f64 {
        self.log_q[k].exp()
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_q.iter().map(|l| l.exp()).collect()
    }

    /// Per-step rescale factors `q_{k+1} / q_k` used to keep the DP mass at
    /// order one.
    pub fn step_ratios(&self) -> Vec<f64> {
        self.log_q.windows(2).map(|w| (w[1] - w[0]).exp()).collect()
    }

    /// First `k` with `q_k = 0`, if any.
    pub fn extinct_at(&self) -> Option<usize> {
        self.log_q.iter().position(|l| *l == f64::NEG_INFINITY)
    }
}

/// Padded working window around the start site. The one-cell border is
/// never vacant, so neighbour reads need no bounds checks.
struct Window {
    dimension: usize,
    lo: [i32; 3],
    dims: [usize; 3],
    strides: [usize; 3],
    len: usize,
}

impl Window {
    fn around(field: &TrapField, start: Site, reach: usize) -> Self {
        let d = field.dimension();
        let l = field.box_radius() as i64;
        let reach = reach.min(u32::MAX as usize) as i64;
        let mut lo = [0i32; 3];
        let mut dims = [1usize; 3];
        for a in 0..d {
            let c = start.0[a] as i64;
            let a_lo = (c - reach).max(-l) - 1;
            let a_hi = (c + reach).min(l) + 1;
            lo[a] = a_lo as i32;
            dims[a] = (a_hi - a_lo + 1) as usize;
        }
        let strides = [dims[1] * dims[2], dims[2], 1];
        Window {
            dimension: d,
            lo,
            dims,
            strides,
            len: dims[0] * dims[1] * dims[2],
        }
    }

    fn index(&self, site: Site) -> usize {
        (0..3)
            .map(|a| (site.0[a] - self.lo[a]) as usize * self.strides[a])
            .sum()
    }

    fn row_len(&self) -> usize {
        self.dims[self.dimension - 1]
    }

    /// 1 on vacant cells, 0 on traps and the border.
    fn vacancy(&self, field: &TrapField) -> Vec<u8> {
        let g = field.geometry();
        let mut vac = vec![0u8; self.len];
        vac.par_chunks_mut(self.row_len())
            .enumerate()
            .for_each(|(row, out)| {
                let mut site = self.row_site(row);
                let last = self.dimension - 1;
                for (c, v) in out.iter_mut().enumerate() {
                    site.0[last] = self.lo[last] + c as i32;
                    if let Some(i) = g.index(site) {
                        *v = u8::from(!field.is_trap_index(i));
                    }
                }
            });
        vac
    }

    /// Site at column zero of row `row` (rows run along the last axis).
    fn row_site(&self, row: usize) -> Site {
        let mut c = [0i32; 3];
        let lead = self.dimension - 1;
        let mut rem = row;
        for a in (0..lead).rev() {
            c[a] = self.lo[a] + (rem % self.dims[a]) as i32;
            rem /= self.dims[a];
        }
        c[lead] = self.lo[lead];
        Site(c)
    }

    fn is_border_row(&self, row: usize) -> bool {
        let mut rem = row;
        for a in (0..self.dimension - 1).rev() {
            let i = rem % self.dims[a];
            rem /= self.dims[a];
            if i == 0 || i + 1 == self.dims[a] {
                return true;
            }
        }
        false
    }
}

/// Cell masses below this are set to zero so that the recursion never
/// touches subnormal numbers (each step renormalises the total mass to one,
/// so the discarded mass is below `1e-290` per cell).
const FLUSH_BELOW: f64 = 1e-290;

const EMPTY_HULL: (i64, i64) = (i64::MAX, i64::MIN);

/// Survival of a single walk started at `start` among the traps of `field`.
///
/// The recursion propagates the surviving mass forward from `start`,
/// `m_{k+1}(z) = [z vacant] (1/2d) sum_{y ~ z} m_k(y)`, so that
/// `q_k = sum_z m_k(z)`; this equals the backward recursion evaluated at
/// `start`. Work is restricted to the l1 diamond of radius `k` and to the
/// sublattice of the right parity.
pub fn survival_probability_dp(
    field: &TrapField,
    start: Site,
    n: usize,
    mode: BoundaryMode,
) -> Result<SurvivalTable> {
    let g = field.geometry();
    let si = g.index(start).ok_or(Error::OutOfBounds {
        site: start,
        radius: g.radius(),
    })?;
    if field.is_trap_index(si) {
        return Err(Error::StartIsTrap(start));
    }
    if mode == BoundaryMode::Exact {
        let need = start.linf() as u64 + n as u64;
        if (g.radius() as u64) < need {
            return Err(Error::BoxTooSmall {
                have: g.radius(),
                need,
                what: "exact survival DP",
            });
        }
    }
    let d = g.dimension();
    let win = Window::around(field, start, n);
    let vac = win.vacancy(field);
    let row_len = win.row_len();
    let last = d - 1;
    let strides: Vec<usize> = (0..d).map(|a| win.strides[a]).collect();
    let inv_deg = 1.0 / (2 * d) as f64;

    let mut old = vec![0.0f64; win.len];
    let mut new = vec![0.0f64; win.len];
    old[win.index(start)] = 1.0;
    let mut old_sum = 1.0f64;
    let mut log_q = Vec::with_capacity(n + 1);
    log_q.push(0.0);

    // Per row, the hull of nonzero columns in `old` and in `new` (which still
    // holds the step before `old`). Cells outside the dilated hull of `old`
    // would come out as exact zeros, so only the dilated hull plus whatever
    // is left over in `new` is recomputed.
    let rows = win.len / row_len;
    let row_steps: Vec<usize> = (0..last).map(|a| strides[a] / row_len).collect();
    let mut hull_old = vec![EMPTY_HULL; rows];
    let mut hull_new = vec![EMPTY_HULL; rows];
    let s0 = win.index(start);
    hull_old[s0 / row_len] = ((s0 % row_len) as i64, (s0 % row_len) as i64);

    for k in 0..n {
        let reach = (k + 1) as i64;
        let factor = inv_deg / old_sum;
        let old_ref = &old;
        let hull_ref = &hull_old;
        let results: Vec<(f64, (i64, i64))> = new
            .par_chunks_mut(row_len)
            .with_min_len(64)
            .zip(hull_new.par_iter())
            .enumerate()
            .map(|(row, (out, &stale))| {
                if win.is_border_row(row) {
                    return (0.0, EMPTY_HULL);
                }
                let base = win.row_site(row);
                let lead: i64 = (0..last)
                    .map(|a| (base.0[a] as i64 - start.0[a] as i64).abs())
                    .sum();
                let budget = reach - lead;
                if budget < 0 {
                    return (0.0, EMPTY_HULL);
                }
                let (mut lo, mut hi) = hull_ref[row];
                if lo <= hi {
                    lo -= 1;
                    hi += 1;
                }
                for &rs in &row_steps {
                    for nb in [row - rs, row + rs] {
                        let h = hull_ref[nb];
                        lo = lo.min(h.0);
                        hi = hi.max(h.1);
                    }
                }
                let centre = (start.0[last] - win.lo[last]) as i64;
                lo = lo.max(centre - budget).max(1);
                hi = hi.min(centre + budget).min(row_len as i64 - 2);
                lo = lo.min(stale.0);
                hi = hi.max(stale.1);
                if lo > hi {
                    return (0.0, EMPTY_HULL);
                }
                let (lo, hi) = (lo as usize, hi as usize);
                let at = row * row_len;
                let seg = &mut out[lo..=hi];
                let pair = |s: usize| {
                    old_ref[at + lo - s..=at + hi - s]
                        .iter()
                        .zip(&old_ref[at + lo + s..=at + hi + s])
                };
                for (o, (x, y)) in seg.iter_mut().zip(pair(strides[0])) {
                    *o = x + y;
                }
                for &s in &strides[1..] {
                    for (o, (x, y)) in seg.iter_mut().zip(pair(s)) {
                        *o += x + y;
                    }
                }
                for (o, v) in seg.iter_mut().zip(&vac[at + lo..=at + hi]) {
                    let m = *o * factor * f64::from(*v);
                    *o = if m < FLUSH_BELOW { 0.0 } else { m };
                }
                let sum: f64 = seg.iter().sum();
                let hull = match seg.iter().position(|&x| x != 0.0) {
                    Some(first) => {
                        let last = seg.iter().rposition(|&x| x != 0.0).unwrap_or(first);
                        ((lo + first) as i64, (lo + last) as i64)
                    }
                    None => EMPTY_HULL,
                };
                (sum, hull)
            })
            .collect();
        let ratio: f64 = results.iter().map(|r| r.0).sum();
        for (h, r) in hull_new.iter_mut().zip(&results) {
            *h = r.1;
        }
        std::mem::swap(&mut hull_old, &mut hull_new);
        if ratio == 0.0 {
            log_q.resize(n + 1, f64::NEG_INFINITY);
            break;
        }
        log_q.push(log_q[k] + ratio.ln());
        old_sum = ratio;
        std::mem::swap(&mut old, &mut new);
    }
    Ok(SurvivalTable {
        start,
        horizon: n,
        mode,
        log_q,
    })
}

/// Quenched expected population `E[N_n] = 2^n q_n`.
pub fn expected_mass(field: &TrapField, start: Site, n: usize, mode: BoundaryMode) -> Result<f64> {
    let table = survival_probability_dp(field, start, n, mode)?;
    Ok((n as f64 * std::f64::consts::LN_2 + table.log_q[n]).exp())
}

/// Simple random walk restricted to the closed Euclidean ball `|z| <= r`
/// around the origin; stepping outside kills the walk.
#[derive(Clone, Debug)]
pub struct BallWalk {
    dimension: usize,
    radius: f64,
    sites: Vec<Site>,
    origin: usize,
    /// `2d` neighbour slots per site; [`BallWalk::OUTSIDE`] marks an exit.
    neighbours: Vec<u32>,
}

impl BallWalk {
    const OUTSIDE: u32 = u32::MAX;

    pub fn new(dimension: usize, radius: f64) -> Result<Self> {
        if !(2..=3).contains(&dimension) {
            return Err(Error::Config(format!(
                "dimension {dimension} not in {{2, 3}}"
            )));
        }
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::Config(format!("radius {radius} must be >= 0")));
        }
        let sites = ball_sites(dimension, Site::ORIGIN, radius);
        let lookup: std::collections::HashMap<Site, u32> = sites
            .iter()
            .enumerate()
            .map(|(i, s)| (*s, i as u32))
            .collect();
        let mut neighbours = Vec::with_capacity(sites.len() * 2 * dimension);
        for s in &sites {
            for a in 0..dimension {
                for delta in [-1, 1] {
                    neighbours.push(*lookup.get(&s.offset(a, delta)).unwrap_or(&Self::OUTSIDE));
                }
            }
        }
        let origin = lookup[&Site::ORIGIN] as usize;
        Ok(BallWalk {
            dimension,
            radius,
            sites,
            origin,
            neighbours,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn origin_index(&self) -> usize {
        self.origin
    }

    fn degree(&self) -> usize {
        2 * self.dimension
    }

    /// One application of the killed transition operator. The operator is
    /// symmetric, so this serves for both forward mass and backward survival.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let deg = self.degree();
        let w = 1.0 / deg as f64;
        (0..self.sites.len())
            .map(|i| {
                self.neighbours[i * deg..(i + 1) * deg]
                    .iter()
                    .filter(|&&j| j != Self::OUTSIDE)
                    .map(|&j| v[j as usize])
                    .sum::<f64>()
                    * w
            })
            .collect()
    }

    /// `log p_k(r)` for `k = 0..=n`, with per-step renormalisation.
    pub fn log_survival_series(&self, n: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.sites.len()];
        m[self.origin] = 1.0;
        let mut out = Vec::with_capacity(n + 1);
        out.push(0.0);
        for k in 0..n {
            m = self.apply(&m);
            let s: f64 = m.iter().sum();
            if s == 0.0 {
                out.resize(n + 1, f64::NEG_INFINITY);
                break;
            }
            out.push(out[k] + s.ln());
            m.iter_mut().for_each(|x| *x /= s);
        }
        out
    }

    /// `p_k(r) = P_0(walk stays in the ball through step k)` for `k = 0..=n`.
    pub fn survival_series(&self, n: usize) -> Vec<f64> {
        self.log_survival_series(n)
            .into_iter()
            .map(f64::exp)
            .collect()
    }

    /// Sub-probability distribution of the position at time `k` on the event
    /// that the walk has not left the ball; indexed like [`BallWalk::sites`].
    pub fn occupation(&self, k: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.sites.len()];
        m[self.origin] = 1.0;
        for _ in 0..k {
            m = self.apply(&m);
        }
        m
    }

    /// `p_{k,x}(r) = P_x(stay in the ball through step k)` for every ball site.
    pub fn survival_by_site(&self, k: usize) -> Vec<f64> {
        let mut u = vec![1.0; self.sites.len()];
        for _ in 0..k {
            u = self.apply(&u);
        }
        u
    }

    /// Exact `p_k` as rationals for `k = 0..=n`, by counting confined paths.
    pub fn exact_survival_series(&self, n: usize) -> Vec<BigRational> {
        let deg = self.degree();
        let mut paths = vec![BigUint::zero(); self.sites.len()];
        paths[self.origin] = BigUint::one();
        let mut denom = BigUint::one();
        let mut out = vec![BigRational::one()];
        for _ in 0..n {
            let mut next = vec![BigUint::zero(); self.sites.len()];
            for (i, c) in paths.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                for &j in &self.neighbours[i * deg..(i + 1) * deg] {
                    if j != Self::OUTSIDE {
                        next[j as usize] += c;
                    }
                }
            }
            paths = next;
            denom *= deg as u32;
            let total: BigUint = paths.iter().sum();
            out.push(BigRational::new(total.into(), denom.clone().into()));
        }
        out
    }

    /// Largest deviation of `p_n = sum_x P_0(confined through k, X_k = x) p_{n-k,x}`
    /// over all `0 <= k <= n <= n_max`.
    pub fn markov_decomposition_error(&self, n_max: usize) -> f64 {
        let mut occupations = Vec::with_capacity(n_max + 1);
        let mut survivals = Vec::with_capacity(n_max + 1);
        let mut m = vec![0.0; self.sites.len()];
        m[self.origin] = 1.0;
        let mut u = vec![1.0; self.sites.len()];
        for _ in 0..=n_max {
            occupations.push(m.clone());
            survivals.push(u.clone());
            m = self.apply(&m);
            u = self.apply(&u);
        }
        let mut worst = 0.0f64;
        for n in 0..=n_max {
            let p_n = survivals[n][self.origin];
            for k in 0..=n {
                let sum: f64 = occupations[k]
                    .iter()
                    .zip(&survivals[n - k])
                    .map(|(a, b)| a * b)
                    .sum();
                worst = worst.max((sum - p_n).abs());
            }
        }
        worst
    }

    /// Top eigenvalue `mu(r)` of the killed operator by power iteration on
    /// the lazy operator `(P + I)/2`, which removes the bipartite `-mu`
    /// eigenvalue. Stops once the residual `|Pv - theta v| / |v|` falls
    /// below `tol`.
    pub fn decay_rate(&self, tol: f64, max_iterations: usize) -> Result<f64> {
        if self.sites.len() == 1 {
            return Ok(0.0);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut v = vec![1.0; self.sites.len()];
        let n0 = norm(&v);
        v.iter_mut().for_each(|x| *x /= n0);
        let mut residual = f64::INFINITY;
        for _ in 0..max_iterations {
            let w = self.apply(&v);
            let theta: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            residual = w
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - theta * b).powi(2))
                .sum::<f64>()
                .sqrt();
            if residual <= tol * theta.abs().max(f64::MIN_POSITIVE) {
                return Ok(theta);
            }
            let mut lazy: Vec<f64> = v.iter().zip(&w).map(|(a, b)| 0.5 * (a + b)).collect();
            let nl = norm(&lazy);
            lazy.iter_mut().for_each(|x| *x /= nl);
            v = lazy;
        }
        Err(Error::NoConvergence {
            iterations: max_iterations,
            residual,
        })
    }
}

/// Default relative residual for [`BallWalk::decay_rate`].
pub const DECAY_RATE_TOL: f64 = 1e-12;
/// Default iteration cap for [`BallWalk::decay_rate`].
pub const DECAY_RATE_MAX_ITER: usize = 5_000_000;

/// `p_n(r)`: probability that the walk from the origin stays in the closed
/// ball of radius `r` through step `n`.
pub fn confined_exit_prob(dimension: usize, radius: f64, n: usize) -> Result<f64> {
    Ok(BallWalk::new(dimension, radius)?.survival_series(n)[n])
}

/// `mu(r)`, the geometric decay rate of `p_n(r)`.
pub fn confined_decay_rate(dimension: usize, radius: f64) -> Result<f64> {
    BallWalk::new(dimension, radius)?.decay_rate(DECAY_RATE_TOL, DECAY_RATE_MAX_ITER)
}

/// Bessel function `J_0` from its power series; accurate for `|x| <= 5`.
pub fn bessel_j0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= -q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// First positive zero of `J_0`, by bisection on `[2, 3]`.
pub fn bessel_j0_first_zero() -> f64 {
    let (mut lo, mut hi) = (2.0f64, 3.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if bessel_j0(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Principal Dirichlet eigenvalue of `-(1/2d) Laplacian` on the unit ball.
pub fn lambda_d(dimension: usize) -> Result<f64> {
    match dimension {
        2 => Ok(bessel_j0_first_zero().powi(2) / 4.0),
        3 => Ok(PI * PI / 6.0),
        d => Err(Error::Config(format!("dimension {d} not in {{2, 3}}"))),
    }
}

/// Volume of the unit ball.
pub fn unit_ball_volume(dimension: usize) -> Result<f64> {
    match dimension {
        2 => Ok(PI),
        3 => Ok(4.0 * PI / 3.0),
        d => Err(Error::Config(format!("dimension {d} not in {{2, 3}}"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConstants {
    pub dimension: usize,
    pub vacancy_prob: f64,
    pub lambda_d: f64,
    pub omega_d: f64,
    /// Critical clearing radius `R0 = [d / (omega_d log(1/p))]^{1/d}`.
    pub r0: f64,
    /// Rate constant `k(d,p) = lambda_d [omega_d log(1/p) / d]^{2/d}`.
    pub k_dp: f64,
}

pub fn constants(dimension: usize, vacancy_prob: f64) -> Result<ModelConstants> {
    if !(vacancy_prob > 0.0 && vacancy_prob < 1.0) {
        return Err(Error::Config(format!(
            "vacancy probability {vacancy_prob} not in (0, 1)"
        )));
    }
    let lambda = lambda_d(dimension)?;
    let omega = unit_ball_volume(dimension)?;
    let d = dimension as f64;
    let base = omega * (1.0 / vacancy_prob).ln() / d;
    let k_dp = lambda * base.powf(2.0 / d);
    let r0 = (1.0 / base).powf(1.0 / d);
    Ok(ModelConstants {
        dimension,
        vacancy_prob,
        lambda_d: lambda,
        omega_d: omega,
        r0,
        k_dp,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateSeries {
    /// `(n, e(n))` with `e(n) = (log n)^{2/d} log(q_n) / n`.
    pub points: Vec<(usize, f64)>,
    /// Set when `q_n` hit zero; the series stops before that `n`.
    pub truncated: bool,
}

/// The centred, rescaled growth exponent of the expected population,
/// `(log n)^{2/d} (log E[N_n] / n - log 2)`, for `n = 2..=n_max`.
pub fn quenched_rate_series(
    field: &TrapField,
    start: Site,
    n_max: usize,
    mode: BoundaryMode,
) -> Result<RateSeries> {
    let table = survival_probability_dp(field, start, n_max, mode)?;
    Ok(rate_series_from_table(&table, field.dimension()))
}

pub fn rate_series_from_table(table: &SurvivalTable, dimension: usize) -> RateSeries {
    let mut points = Vec::new();
    let mut truncated = false;
    for n in 2..=table.horizon {
        let lq = table.log_q[n];
        if lq == f64::NEG_INFINITY {
            truncated = true;
            break;
        }
        let scale = (n as f64).ln().powf(2.0 / dimension as f64);
        points.push((n, scale * lq / n as f64));
    }
    RateSeries { points, truncated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{generate_environment, LatticeConfig};
    use num_traits::ToPrimitive;

    fn single_trap(l: u32, trap: Site) -> TrapField {
        let cfg = LatticeConfig::new(2, l, 0.5, 0).unwrap();
        TrapField::from_fn(&cfg, |s| s == trap).unwrap()
    }

    /// Exhaustive enumeration of all `(2d)^n` walks.
    fn enumerate_survival(field: &TrapField, start: Site, n: usize) -> f64 {
        let units = field.geometry().unit_vectors();
        fn go(field: &TrapField, units: &[Site], at: Site, left: usize) -> u64 {
            if left == 0 {
                return 1;
            }
            units
                .iter()
                .map(|&u| {
                    let next = at + u;
                    match field.is_trap(next) {
                        Ok(false) => go(field, units, next, left - 1),
                        _ => 0,
                    }
                })
                .sum()
        }
        go(field, &units, start, n) as f64 / (units.len() as f64).powi(n as i32)
    }

    #[test]
    fn trap_free_survival_is_one() {
        let f = TrapField::all_vacant(2, 12);
        let t = survival_probability_dp(&f, Site::ORIGIN, 12, BoundaryMode::Exact).unwrap();
        assert!(t.values().iter().all(|&q| (q - 1.0).abs() < 1e-14));
        assert_eq!(
            expected_mass(&f, Site::ORIGIN, 5, BoundaryMode::Exact).unwrap(),
            32.0
        );
    }

    #[test]
    fn one_adjacent_trap() {
        let f = single_trap(3, Site::new2(1, 0));
        let t = survival_probability_dp(&f, Site::ORIGIN, 1, BoundaryMode::Exact).unwrap();
        assert_eq!(t.q(1), 0.75);
        let m = expected_mass(&f, Site::ORIGIN, 1, BoundaryMode::Exact).unwrap();
        assert!((m - 1.5).abs() < 1e-15);
    }

    #[test]
    fn dp_matches_path_enumeration_on_seeded_field() {
        let cfg = LatticeConfig::new(2, 12, 0.7, 42).unwrap();
        let mut f = generate_environment(&cfg).unwrap();
        f.set_trap(Site::ORIGIN, false).unwrap();
        let t = survival_probability_dp(&f, Site::ORIGIN, 10, BoundaryMode::Exact).unwrap();
        for k in [1, 2, 5, 10] {
            let want = enumerate_survival(&f, Site::ORIGIN, k);
            assert!((t.q(k) - want).abs() < 1e-13, "k={k}: {} vs {want}", t.q(k));
        }
    }

    #[test]
    fn three_dimensional_dp_matches_enumeration() {
        let cfg = LatticeConfig::new(3, 6, 0.7, 9).unwrap();
        let mut f = generate_environment(&cfg).unwrap();
        let s = Site::new3(0, 1, 0);
        f.set_trap(s, false).unwrap();
        let t = survival_probability_dp(&f, s, 5, BoundaryMode::Exact).unwrap();
        assert!((t.q(5) - enumerate_survival(&f, s, 5)).abs() < 1e-13);
    }

    #[test]
    fn exact_mode_needs_margin() {
        let f = TrapField::all_vacant(2, 5);
        let err =
            survival_probability_dp(&f, Site::new2(2, 0), 4, BoundaryMode::Exact).unwrap_err();
        assert!(matches!(err, Error::BoxTooSmall { need: 6, .. }));
        // absorbing mode is a lower bound for the exact value
        let abs =
            survival_probability_dp(&f, Site::new2(2, 0), 4, BoundaryMode::Absorbing).unwrap();
        assert!(abs.q(4) < 1.0 && abs.q(3) == 1.0);
    }

    #[test]
    fn trapped_start_is_rejected() {
        let f = single_trap(3, Site::ORIGIN);
        assert!(matches!(
            survival_probability_dp(&f, Site::ORIGIN, 1, BoundaryMode::Exact),
            Err(Error::StartIsTrap(_))
        ));
    }

    #[test]
    fn enclosed_start_goes_extinct() {
        let cfg = LatticeConfig::new(2, 4, 0.5, 0).unwrap();
        let f = TrapField::from_fn(&cfg, |s| s.l1() == 1).unwrap();
        let t = survival_probability_dp(&f, Site::ORIGIN, 3, BoundaryMode::Exact).unwrap();
        assert_eq!(t.extinct_at(), Some(1));
        let r = rate_series_from_table(&t, 2);
        assert!(r.truncated && r.points.is_empty());
    }

    #[test]
    fn ball_survival_small_cases() {
        let b = BallWalk::new(2, 1.5).unwrap();
        assert_eq!(b.sites().len(), 9);
        let p = b.survival_series(3);
        assert_eq!(p[1], 1.0);
        assert!((p[2] - 0.75).abs() < 1e-15);
        assert!((p[3] - 0.5).abs() < 1e-15);
        assert_eq!(confined_exit_prob(2, 7.0, 6).unwrap(), 1.0);
        assert_eq!(confined_exit_prob(2, 0.5, 1).unwrap(), 0.0);
    }

    #[test]
    fn exact_series_matches_float() {
        let b = BallWalk::new(2, 2.5).unwrap();
        let exact = b.exact_survival_series(8);
        let float = b.survival_series(8);
        for (e, f) in exact.iter().zip(&float) {
            assert!((e.to_f64().unwrap() - f).abs() < 1e-14);
        }
        assert_eq!(exact[5], BigRational::new(177.into(), 256.into()));
    }

    #[test]
    fn markov_decomposition_is_exact() {
        let b = BallWalk::new(2, 2.5).unwrap();
        assert!(b.markov_decomposition_error(30) < 1e-12);
    }

    #[test]
    fn single_site_ball_has_zero_rate() {
        assert_eq!(confined_decay_rate(2, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn nine_site_rate_is_half_sqrt_two() {
        // adjacency of the 3x3 grid has top eigenvalue 2 sqrt 2
        let mu = confined_decay_rate(2, 1.5).unwrap();
        assert!((mu - 0.5 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bessel_zero_and_eigenvalues() {
        assert!((bessel_j0_first_zero() - 2.404_825_557_695_773).abs() < 1e-13);
        assert!((lambda_d(2).unwrap() - 1.445_796_490_736_696).abs() < 1e-12);
        assert!((lambda_d(3).unwrap() - 1.644_934_066_848_226).abs() < 1e-14);
        assert!(lambda_d(4).is_err());
    }

    #[test]
    fn constants_at_reference_point() {
        let c = constants(2, 0.7).unwrap();
        assert!((c.k_dp - 0.81003).abs() < 5e-5);
        assert!((c.r0 - 1.33599).abs() < 5e-5);
        assert!((c.r0 * c.r0 * c.k_dp / c.lambda_d - 1.0).abs() < 1e-13);
        let near_one = constants(2, 1.0 - 1e-9).unwrap();
        assert!(near_one.k_dp < 1e-8 && near_one.r0 > 1e4);
        assert!(constants(2, 1.0).is_err());
        assert!(constants(2, 0.0).is_err());
    }

    #[test]
    fn rate_series_is_zero_without_traps() {
        let f = TrapField::all_vacant(2, 30);
        let r = quenched_rate_series(&f, Site::ORIGIN, 30, BoundaryMode::Exact).unwrap();
        assert_eq!(r.points.len(), 29);
        assert!(r.points.iter().all(|&(_, e)| e.abs() < 1e-13));
    }
}
