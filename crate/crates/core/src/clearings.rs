//! Trap-free Euclidean balls ("clearings"), the target sets built from them,
//! and the clearing scans.
//!
//! Ball membership is closed: `z` belongs to the ball of radius `r` around `c`
//! iff `|z - c| <= r`. Scans use an exact squared Euclidean distance transform
//! of the blocking set, so a centre `c` carries a clear ball of radius `r`
//! iff the squared distance from `c` to the nearest blocking site exceeds
//! `r^2`.

use crate::error::{Error, Result};
use crate::lattice::{generate_environment, BoxGeometry, LatticeConfig, Site, TrapField};
use crate::percolation::{label_vacant_clusters, ClusterLabeling};
use crate::rng::{derive_replica_seed, derive_stream_seed};
use crate::stats::proportion;
use crate::walk::constants;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clearing {
    pub center: Site,
    pub radius: f64,
    /// Every ball site lies in the proxy infinite cluster.
    pub accessible: bool,
}

/// Lattice sites of the closed ball, in row-major order.
pub fn ball_sites(dimension: usize, center: Site, radius: f64) -> Vec<Site> {
    if radius.is_nan() || radius < 0.0 {
        return Vec::new();
    }
    let reach = radius.floor() as i32;
    let r2 = radius * radius;
    let range = |a: usize| if a < dimension { -reach..=reach } else { 0..=0 };
    let mut out = Vec::new();
    for x in range(0) {
        for y in range(1) {
            for z in range(2) {
                let off = Site([x, y, z]);
                if off.norm2() as f64 <= r2 {
                    out.push(center + off);
                }
            }
        }
    }
    out
}

fn ball_fits(g: &BoxGeometry, center: Site, radius: f64, what: &'static str) -> Result<()> {
    let need = center.linf() as u64 + radius.max(0.0).floor() as u64;
    if need > g.radius() as u64 || !g.contains(center) {
        return Err(Error::BoxTooSmall {
            have: g.radius(),
            need,
            what,
        });
    }
    Ok(())
}

/// Whether every site of the ball is vacant, and with `require_accessible`
/// also in the proxy cluster of `labeling`.
pub fn is_clearing(
    field: &TrapField,
    center: Site,
    radius: f64,
    require_accessible: bool,
    labeling: Option<&ClusterLabeling>,
) -> Result<bool> {
    let g = field.geometry();
    ball_fits(g, center, radius, "clearing ball")?;
    if require_accessible && labeling.is_none() {
        return Err(Error::Config(
            "accessibility check needs a cluster labeling".into(),
        ));
    }
    Ok(ball_sites(g.dimension(), center, radius)
        .into_iter()
        .all(|z| {
            let i = g.index_unchecked(z);
            !field.is_trap_index(i)
                && (!require_accessible || labeling.is_some_and(|l| l.in_proxy(i)))
        }))
}

const FAR: i64 = i64::MAX / 4;

/// Squared Euclidean distance from each box site to the nearest blocked site
/// (`FAR` when nothing is blocked). Separable lower-envelope algorithm.
pub fn squared_distance_transform(g: &BoxGeometry, blocked: impl Fn(usize) -> bool) -> Vec<i64> {
    let mut dist: Vec<i64> = (0..g.len())
        .map(|i| if blocked(i) { 0 } else { FAR })
        .collect();
    let side = g.side();
    let mut line = vec![0i64; side];
    let mut out = vec![0i64; side];
    let mut hull = vec![0usize; side];
    let mut bounds = vec![0f64; side + 1];
    for axis in 0..g.dimension() {
        let stride = g.stride(axis);
        for start in 0..g.len() {
            if (start / stride) % side != 0 {
                continue;
            }
            for (k, v) in line.iter_mut().enumerate() {
                *v = dist[start + k * stride];
            }
            lower_envelope(&line, &mut out, &mut hull, &mut bounds);
            for (k, v) in out.iter().enumerate() {
                dist[start + k * stride] = *v;
            }
        }
    }
    dist
}

/// One-dimensional pass: `out[q] = min_p (q - p)^2 + f[p]`.
fn lower_envelope(f: &[i64], out: &mut [i64], hull: &mut [usize], bounds: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if f[q] >= FAR {
            continue;
        }
        let fq = (f[q] + (q * q) as i64) as f64;
        loop {
            if k < 0 {
                k = 0;
                hull[0] = q;
                bounds[0] = f64::NEG_INFINITY;
                bounds[1] = f64::INFINITY;
                break;
            }
            let v = hull[k as usize];
            let fv = (f[v] + (v * v) as i64) as f64;
            let s = (fq - fv) / (2.0 * (q as f64 - v as f64));
            if s <= bounds[k as usize] {
                k -= 1;
            } else {
                k += 1;
                hull[k as usize] = q;
                bounds[k as usize] = s;
                bounds[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if k < 0 {
        out.iter_mut().for_each(|v| *v = FAR);
        return;
    }
    let mut j = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while bounds[j + 1] < q as f64 {
            j += 1;
        }
        let p = hull[j];
        let dq = q as i64 - p as i64;
        *o = dq * dq + f[p];
    }
}

fn clear_radius2_ok(dist2: i64, radius: f64) -> bool {
    dist2 as f64 > radius * radius
}

/// Scale parameters of the clearing constructions at time `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleSet {
    pub n: usize,
    pub dimension: usize,
    pub k2: f64,
    /// Box-scaling constant: target sets live in `[-A n, A n]^d`.
    pub a: f64,
    pub r0: f64,
    /// `rho(n) = k2 n / (log n)^{2/d}`.
    pub rho: f64,
    /// Large-clearing radius `r(n) = (R0/2) (log rho(n))^{1/d}`.
    pub r_large: f64,
    /// Huge-clearing radius `R(n) = R0 (log n)^{1/d} - 2 sqrt(d)`.
    pub r_huge: f64,
}

impl ScaleSet {
    pub fn new(n: usize, dimension: usize, vacancy_prob: f64, k2: f64, a: f64) -> Result<Self> {
        if !(k2 > 0.0) || !(a > 0.0) {
            return Err(Error::Config(format!(
                "k2 = {k2} and A = {a} must be positive"
            )));
        }
        if n < 2 {
            return Err(Error::Config(format!("time n = {n} must be >= 2")));
        }
        let c = constants(dimension, vacancy_prob)?;
        let d = dimension as f64;
        let log_n = (n as f64).ln();
        let rho = k2 * n as f64 / log_n.powf(2.0 / d);
        if rho <= 1.0 {
            return Err(Error::Constraint(format!(
                "rho({n}) = {rho} <= 1; need n >= {}",
                Self::min_time(dimension, k2)
            )));
        }
        Ok(ScaleSet {
            n,
            dimension,
            k2,
            a,
            r0: c.r0,
            rho,
            r_large: 0.5 * c.r0 * rho.ln().powf(1.0 / d),
            r_huge: c.r0 * log_n.powf(1.0 / d) - 2.0 * d.sqrt(),
        })
    }

    /// Smallest `n >= 2` with `rho(n) > 1`.
    pub fn min_time(dimension: usize, k2: f64) -> usize {
        let d = dimension as f64;
        (2..)
            .find(|&n: &usize| k2 * n as f64 / (n as f64).ln().powf(2.0 / d) > 1.0)
            .expect("rho grows without bound")
    }

    /// Half-side `floor(A n)` of the target box.
    pub fn half_side(&self) -> u32 {
        (self.a * self.n as f64).floor() as u32
    }
}

fn cube_centres(dimension: usize, center: Site, half: i32) -> impl Iterator<Item = Site> {
    let range = move |a: usize| if a < dimension { -half..=half } else { 0..=0 };
    range(0).flat_map(move |x| {
        range(1).flat_map(move |y| range(2).map(move |z| center + Site([x, y, z])))
    })
}

/// `Phi(omega, n)` restricted to `[-A n, A n]^d`: centres whose `r(n)`-ball is
/// trap-free. Returned in row-major order.
pub fn phi_set(field: &TrapField, scales: &ScaleSet) -> Result<Vec<Site>> {
    phi_set_with_radius(field, scales.half_side(), scales.r_large)
}

pub fn phi_set_with_radius(field: &TrapField, half_side: u32, radius: f64) -> Result<Vec<Site>> {
    let g = field.geometry();
    let need = half_side as u64 + radius.max(0.0).floor() as u64;
    if need > g.radius() as u64 {
        return Err(Error::BoxTooSmall {
            have: g.radius(),
            need,
            what: "target set box plus ball margin",
        });
    }
    let dist = squared_distance_transform(g, |i| field.is_trap_index(i));
    Ok(cube_centres(g.dimension(), Site::ORIGIN, half_side as i32)
        .filter(|&c| clear_radius2_ok(dist[g.index_unchecked(c)], radius))
        .collect())
}

/// Accessible-clearing radius `r_n = (2 R0 / 3) (log 2^n)^{1/d}` of the
/// dyadic cube scan.
pub fn cube_clearing_radius(dimension: usize, vacancy_prob: f64, n: usize) -> Result<f64> {
    let c = constants(dimension, vacancy_prob)?;
    Ok(2.0 * c.r0 / 3.0 * (n as f64 * std::f64::consts::LN_2).powf(1.0 / dimension as f64))
}

/// Half-side `2 R0 (log 2^n)^{1/d} 2^n` of the dyadic cube, rounded down.
pub fn cube_half_side(dimension: usize, vacancy_prob: f64, n: usize) -> Result<u32> {
    let c = constants(dimension, vacancy_prob)?;
    let h = 2.0
        * c.r0
        * (n as f64 * std::f64::consts::LN_2).powf(1.0 / dimension as f64)
        * 2f64.powi(n as i32);
    if h > u32::MAX as f64 {
        return Err(Error::Constraint(format!(
            "cube half-side {h} is too large"
        )));
    }
    Ok(h.floor() as u32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CubeVerdict {
    pub cube_center: Site,
    pub witness: Option<Clearing>,
}

impl CubeVerdict {
    pub fn found(&self) -> bool {
        self.witness.is_some()
    }
}

/// Best accessible clearing of `radius` whose ball lies inside the cube
/// `center + [-half, half]^d`: nearest to the cube centre, ties broken by the
/// lexicographically smallest centre.
fn best_in_cube(
    g: &BoxGeometry,
    dist: &[i64],
    center: Site,
    half: u32,
    radius: f64,
) -> Option<Clearing> {
    let inner = half as i64 - radius.floor() as i64;
    if inner < 0 {
        return None;
    }
    cube_centres(g.dimension(), center, inner as i32)
        .filter(|&c| clear_radius2_ok(dist[g.index_unchecked(c)], radius))
        .min_by_key(|&c| ((c - center).norm2(), c))
        .map(|c| Clearing {
            center: c,
            radius,
            accessible: true,
        })
}

fn not_accessible_transform(field: &TrapField, labeling: &ClusterLabeling) -> Vec<i64> {
    squared_distance_transform(field.geometry(), |i| !labeling.in_proxy(i))
}

/// For every `x_j`, whether the cube `x_j + T_n` contains an accessible
/// clearing of radius `r_n`, with a witness.
pub fn cube_clearing_scan(
    field: &TrapField,
    labeling: &ClusterLabeling,
    n: usize,
    centers: &[Site],
) -> Result<Vec<CubeVerdict>> {
    let g = field.geometry();
    let p = field.config().vacancy_prob;
    let half = cube_half_side(g.dimension(), p, n)?;
    let radius = cube_clearing_radius(g.dimension(), p, n)?;
    for &c in centers {
        let need = c.linf() as u64 + half as u64;
        if need > g.radius() as u64 {
            return Err(Error::BoxTooSmall {
                have: g.radius(),
                need,
                what: "dyadic cube",
            });
        }
    }
    let dist = not_accessible_transform(field, labeling);
    Ok(centers
        .iter()
        .map(|&c| CubeVerdict {
            cube_center: c,
            witness: best_in_cube(g, &dist, c, half, radius),
        })
        .collect())
}

/// Accessible clearing of radius `R(n)` centred in `[-A n, A n]^d` with the
/// lexicographically smallest centre.
pub fn huge_clearing_scan(
    field: &TrapField,
    labeling: &ClusterLabeling,
    scales: &ScaleSet,
) -> Result<Option<Clearing>> {
    let g = field.geometry();
    let radius = scales.r_huge;
    if radius < 0.0 {
        return Err(Error::Constraint(format!(
            "huge-clearing radius R({}) = {radius} is negative",
            scales.n
        )));
    }
    let half = scales.half_side();
    let need = half as u64 + radius.floor() as u64;
    if need > g.radius() as u64 {
        return Err(Error::BoxTooSmall {
            have: g.radius(),
            need,
            what: "huge-clearing scan box plus ball margin",
        });
    }
    let dist = not_accessible_transform(field, labeling);
    Ok(cube_centres(g.dimension(), Site::ORIGIN, half as i32)
        .find(|&c| clear_radius2_ok(dist[g.index_unchecked(c)], radius))
        .map(|c| Clearing {
            center: c,
            radius,
            accessible: true,
        }))
}

/// Whether the whole box contains an accessible clearing of `radius`
/// (ball inside the box).
pub fn box_has_accessible_clearing(
    field: &TrapField,
    labeling: &ClusterLabeling,
    radius: f64,
) -> bool {
    let g = field.geometry();
    let dist = not_accessible_transform(field, labeling);
    best_in_cube(g, &dist, Site::ORIGIN, g.radius(), radius).is_some()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub rho: u32,
    pub radius: f64,
    pub samples: usize,
    pub hits: usize,
    pub probability: f64,
    pub std_error: f64,
}

/// For each `rho`, the fraction of fresh environments on `[-rho, rho]^d`
/// holding an accessible clearing of radius `(R0/2) (log rho)^{1/d}`.
/// Environment `i` at `rho` uses seed `derive_replica_seed(derive_stream_seed(master, rho), i)`.
pub fn radius_scaling_stats(
    dimension: usize,
    vacancy_prob: f64,
    rho_values: &[u32],
    samples_per_rho: usize,
    master_seed: u64,
) -> Result<Vec<ScalingRow>> {
    let c = constants(dimension, vacancy_prob)?;
    rho_values
        .iter()
        .map(|&rho| {
            if rho < 2 {
                return Err(Error::Config(format!("rho = {rho} must be >= 2")));
            }
            let radius = 0.5 * c.r0 * (rho as f64).ln().powf(1.0 / dimension as f64);
            let stream = derive_stream_seed(master_seed, rho as u64);
            let mut hits = 0;
            for i in 0..samples_per_rho {
                let cfg = LatticeConfig::new(
                    dimension,
                    rho,
                    vacancy_prob,
                    derive_replica_seed(stream, i as u64),
                )?;
                let field = generate_environment(&cfg)?;
                let labeling = label_vacant_clusters(&field);
                if box_has_accessible_clearing(&field, &labeling, radius) {
                    hits += 1;
                }
            }
            let (probability, std_error) = proportion(hits as u64, samples_per_rho as u64);
            Ok(ScalingRow {
                rho,
                radius,
                samples: samples_per_rho,
                hits,
                probability,
                std_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_distance2(g: &BoxGeometry, blocked: &dyn Fn(usize) -> bool, i: usize) -> i64 {
        let s = g.site(i);
        (0..g.len())
            .filter(|&j| blocked(j))
            .map(|j| (g.site(j) - s).norm2())
            .min()
            .unwrap_or(FAR)
    }

    #[test]
    fn ball_site_counts() {
        assert_eq!(
            ball_sites(2, Site::new2(3, -1), 0.0),
            vec![Site::new2(3, -1)]
        );
        assert_eq!(ball_sites(2, Site::ORIGIN, 1.0).len(), 5);
        let b = ball_sites(2, Site::ORIGIN, 1.5);
        assert_eq!(b.len(), 9);
        assert!(b.contains(&Site::new2(1, 1)));
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(ball_sites(3, Site::ORIGIN, 1.0).len(), 7);
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        for seed in 0..6 {
            for d in [2, 3] {
                let l = if d == 2 { 7 } else { 3 };
                let cfg = LatticeConfig::new(d, l, 0.85, seed).unwrap();
                let f = generate_environment(&cfg).unwrap();
                let g = *f.geometry();
                let blocked = |i: usize| f.is_trap_index(i);
                let dist = squared_distance_transform(&g, blocked);
                for i in 0..g.len() {
                    assert_eq!(dist[i], brute_distance2(&g, &blocked, i));
                }
            }
        }
        let g = BoxGeometry::new(2, 2);
        assert!(squared_distance_transform(&g, |_| false)
            .iter()
            .all(|&v| v == FAR));
    }

    #[test]
    fn clearing_verdicts_on_small_fields() {
        let f = TrapField::all_vacant(2, 5);
        assert!(is_clearing(&f, Site::ORIGIN, 3.0, false, None).unwrap());
        assert!(is_clearing(&f, Site::new2(4, 0), 2.0, false, None).is_err());
        let mut t = f.clone();
        t.set_trap(Site::ORIGIN, true).unwrap();
        assert!(!is_clearing(&t, Site::ORIGIN, 0.0, false, None).unwrap());
        // handcrafted 11x11 field against the distance transform
        let cfg = LatticeConfig::new(2, 5, 0.8, 3).unwrap();
        let f = generate_environment(&cfg).unwrap();
        let g = *f.geometry();
        let dist = squared_distance_transform(&g, |i| f.is_trap_index(i));
        for r in [0.0f64, 1.0, 1.5, 2.2] {
            for c in g.sites() {
                if c.linf() as f64 + r.floor() > 5.0 {
                    continue;
                }
                assert_eq!(
                    is_clearing(&f, c, r, false, None).unwrap(),
                    clear_radius2_ok(dist[g.index_unchecked(c)], r)
                );
            }
        }
    }

    #[test]
    fn scale_set_values() {
        let s = ScaleSet::new(100, 2, 0.7, 1.0, 1.0).unwrap();
        let ln = 100f64.ln();
        assert!((s.rho - 100.0 / ln).abs() < 1e-12);
        assert!((s.r_large - 0.5 * s.r0 * s.rho.ln().sqrt()).abs() < 1e-12);
        assert!((s.r_huge - (s.r0 * ln.sqrt() - 2.0 * 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(s.half_side(), 100);
        let n0 = ScaleSet::min_time(2, 1.0);
        assert!(ScaleSet::new(n0, 2, 0.7, 1.0, 1.0).is_ok());
        assert!(ScaleSet::new(1, 2, 0.7, 1.0, 1.0).is_err());
    }

    #[test]
    fn phi_set_extremes() {
        let f = TrapField::all_vacant(2, 8);
        let all = phi_set_with_radius(&f, 5, 2.5).unwrap();
        assert_eq!(all.len(), 121);
        assert!(phi_set_with_radius(&TrapField::all_traps(2, 8), 5, 2.5)
            .unwrap()
            .is_empty());
        assert!(matches!(
            phi_set_with_radius(&f, 7, 2.5),
            Err(Error::BoxTooSmall { need: 9, .. })
        ));
    }

    #[test]
    fn phi_set_with_zero_radius_is_vacant_sites() {
        let cfg = LatticeConfig::new(2, 6, 0.6, 11).unwrap();
        let f = generate_environment(&cfg).unwrap();
        let got = phi_set_with_radius(&f, 4, 0.0).unwrap();
        let want: Vec<Site> = f
            .geometry()
            .sites()
            .filter(|s| s.linf() <= 4 && !f.is_trap(*s).unwrap())
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn planted_huge_clearing_is_found() {
        let s = ScaleSet::new(200, 2, 0.7, 1.0, 0.05).unwrap();
        assert!(s.r_huge > 0.0);
        let centre = Site::new2(3, -2);
        let cfg = LatticeConfig::new(2, 20, 0.7, 0).unwrap();
        let f = TrapField::from_fn(&cfg, |z| (z - centre).norm2() as f64 > s.r_huge * s.r_huge)
            .unwrap();
        let lab = label_vacant_clusters(&f);
        let c = huge_clearing_scan(&f, &lab, &s).unwrap().unwrap();
        assert_eq!(c.center, centre);
        assert!(is_clearing(&f, c.center, c.radius, true, Some(&lab)).unwrap());
        let empty = TrapField::all_traps(2, 20);
        let lab = label_vacant_clusters(&empty);
        assert_eq!(huge_clearing_scan(&empty, &lab, &s).unwrap(), None);
        let open = TrapField::all_vacant(2, 20);
        let lab = label_vacant_clusters(&open);
        let c = huge_clearing_scan(&open, &lab, &s).unwrap().unwrap();
        assert_eq!(c.center, Site::new2(-10, -10));
    }

    #[test]
    fn cube_scan_on_extreme_fields() {
        let n = 1;
        let half = cube_half_side(2, 0.7, n).unwrap();
        let l = half + 3;
        let cfg = LatticeConfig::new(2, l, 0.7, 0).unwrap();
        let open = TrapField::from_fn(&cfg, |_| false).unwrap();
        let lab = label_vacant_clusters(&open);
        let centres = [Site::ORIGIN, Site::new2(2, -3)];
        let v = cube_clearing_scan(&open, &lab, n, &centres).unwrap();
        for (verdict, c) in v.iter().zip(centres) {
            assert_eq!(verdict.witness.unwrap().center, c);
        }
        let closed = TrapField::from_fn(&cfg, |_| true).unwrap();
        let lab = label_vacant_clusters(&closed);
        assert!(cube_clearing_scan(&closed, &lab, n, &centres)
            .unwrap()
            .iter()
            .all(|v| !v.found()));
        assert!(
            cube_clearing_scan(&open, &label_vacant_clusters(&open), n, &[Site::new2(4, 0)])
                .is_err()
        );
    }

    #[test]
    fn scaling_stats_extremes() {
        let rows = radius_scaling_stats(2, 0.99, &[20, 40], 5, 1).unwrap();
        assert!(rows.iter().all(|r| r.probability == 1.0));
        // near p = 1 the radius exceeds rho = 2 so nothing fits
        let rows = radius_scaling_stats(2, 1.0 - 1e-6, &[2], 3, 1).unwrap();
        assert!(rows[0].radius > 2.0);
        assert_eq!(rows[0].probability, 0.0);
    }
}
