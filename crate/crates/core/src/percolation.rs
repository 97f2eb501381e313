//! Vacant-cluster labelling, occupied clusters, chemical distance and
//! empirical chemical-distance ratios.
//!
//! The finite box stands in for `Z^d`; the largest vacant cluster (ties broken
//! by smallest member site) is the proxy for the infinite cluster.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Site, TrapField};
use crate::rng::replica_rng;

/// Label carried by trap sites.
pub const NO_CLUSTER: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterLabeling {
    /// Per-site label in storage order; [`NO_CLUSTER`] on traps.
    pub labels: Vec<u32>,
    /// Cluster sizes indexed by label.
    pub sizes: Vec<u64>,
    /// Largest cluster; ties go to the smallest label, which is the cluster
    /// with the lexicographically smallest member site.
    pub largest: Option<u32>,
    /// Whether the largest cluster touches all `2d` faces of the box.
    pub spans_box: bool,
}

impl ClusterLabeling {
    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn largest_size(&self) -> u64 {
        self.largest.map_or(0, |l| self.sizes[l as usize])
    }

    #[inline]
    pub fn label_index(&self, index: usize) -> Option<u32> {
        let l = self.labels[index];
        (l != NO_CLUSTER).then_some(l)
    }

    /// Whether the site with storage index `index` is in the proxy cluster.
    #[inline]
    pub fn in_proxy(&self, index: usize) -> bool {
        self.largest.is_some_and(|l| self.labels[index] == l)
    }

    pub fn proxy_sites(&self) -> Vec<usize> {
        match self.largest {
            None => Vec::new(),
            Some(l) => (0..self.labels.len())
                .filter(|&i| self.labels[i] == l)
                .collect(),
        }
    }
}

struct DisjointSets {
    parent: Vec<u32>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    /// Union keeping the smaller root, so roots are minimal members.
    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels vacant clusters under nearest-neighbour adjacency.
///
/// Labels are canonical: label `k` is the `k`-th cluster in order of its
/// smallest member site.
pub fn label_vacant_clusters(field: &TrapField) -> ClusterLabeling {
    let g = *field.geometry();
    let n = g.len();
    let mut sets = DisjointSets::new(n);
    for i in 0..n {
        if field.is_trap_index(i) {
            continue;
        }
        // Only look "forward" along each axis.
        for axis in 0..g.dimension() {
            let s = g.stride(axis);
            if !g.on_face(i, axis, true) && !field.is_trap_index(i + s) {
                sets.union(i as u32, (i + s) as u32);
            }
        }
    }
    let mut labels = vec![NO_CLUSTER; n];
    let mut sizes: Vec<u64> = Vec::new();
    let mut root_label: Vec<u32> = vec![NO_CLUSTER; n];
    for i in 0..n {
        if field.is_trap_index(i) {
            continue;
        }
        let r = sets.find(i as u32) as usize;
        if root_label[r] == NO_CLUSTER {
            root_label[r] = sizes.len() as u32;
            sizes.push(0);
        }
        labels[i] = root_label[r];
        sizes[root_label[r] as usize] += 1;
    }
    let largest = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l as u32);
    let spans_box = largest.is_some_and(|l| {
        let mut faces = vec![false; 2 * g.dimension()];
        for (i, &lab) in labels.iter().enumerate() {
            if lab != l {
                continue;
            }
            for axis in 0..g.dimension() {
                if g.on_face(i, axis, false) {
                    faces[2 * axis] = true;
                }
                if g.on_face(i, axis, true) {
                    faces[2 * axis + 1] = true;
                }
            }
        }
        faces.iter().all(|&f| f)
    });
    ClusterLabeling {
        labels,
        sizes,
        largest,
        spans_box,
    }
}

/// Label of the finite-box stand-in for the infinite cluster. With
/// `require_spanning`, the largest cluster only qualifies if it touches every
/// face of the box.
pub fn infinite_cluster_proxy(labeling: &ClusterLabeling, require_spanning: bool) -> Option<u32> {
    match labeling.largest {
        Some(l) if !require_spanning || labeling.spans_box => Some(l),
        _ => None,
    }
}

/// Offsets `y - x` with `1 <= |y - x|_1 <= 2d`, the adjacency used for
/// occupied sites.
fn occupied_offsets(dimension: usize) -> Vec<Site> {
    let r = 2 * dimension as i32;
    let range = |a: usize| if a < dimension { -r..=r } else { 0..=0 };
    let mut out = Vec::new();
    for x in range(0) {
        for y in range(1) {
            for z in range(2) {
                let s = Site([x, y, z]);
                let l1 = s.l1();
                if l1 >= 1 && l1 <= r as u64 {
                    out.push(s);
                }
            }
        }
    }
    out
}

/// Occupied cluster `W(x)`: traps reachable from `x` through traps at
/// l1-distance at most `2d` from each other. Empty when `x` is vacant.
/// Returned sorted.
pub fn occupied_cluster(field: &TrapField, x: Site) -> Result<Vec<Site>> {
    let g = *field.geometry();
    let start = g.index(x).ok_or(Error::OutOfBounds {
        site: x,
        radius: g.radius(),
    })?;
    if !field.is_trap_index(start) {
        return Ok(Vec::new());
    }
    let offsets = occupied_offsets(g.dimension());
    let mut seen = vec![false; g.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut out = Vec::new();
    while let Some(i) = queue.pop_front() {
        let s = g.site(i);
        out.push(s);
        for &o in &offsets {
            if let Some(j) = g.index(s + o) {
                if !seen[j] && field.is_trap_index(j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Reusable BFS scratch space: distances are valid only where the stamp
/// equals the current epoch, so no clearing is needed between searches.
struct BfsScratch {
    stamp: Vec<u32>,
    dist: Vec<u32>,
    epoch: u32,
    queue: VecDeque<usize>,
}

impl BfsScratch {
    fn new(n: usize) -> Self {
        BfsScratch {
            stamp: vec![0; n],
            dist: vec![0; n],
            epoch: 0,
            queue: VecDeque::new(),
        }
    }

    fn shortest_path(&mut self, field: &TrapField, from: usize, to: usize) -> Option<u64> {
        if from == to {
            return Some(0);
        }
        let g = field.geometry();
        self.epoch += 1;
        self.queue.clear();
        self.stamp[from] = self.epoch;
        self.dist[from] = 0;
        self.queue.push_back(from);
        while let Some(i) = self.queue.pop_front() {
            let d = self.dist[i] + 1;
            for j in g.neighbors(i) {
                if self.stamp[j] == self.epoch || field.is_trap_index(j) {
                    continue;
                }
                if j == to {
                    return Some(d as u64);
                }
                self.stamp[j] = self.epoch;
                self.dist[j] = d;
                self.queue.push_back(j);
            }
        }
        None
    }
}

/// Length of the shortest nearest-neighbour vacant path from `x` to `y`
/// inside the box; `None` when either is a trap or they lie in different
/// clusters.
pub fn chemical_distance(
    field: &TrapField,
    labeling: &ClusterLabeling,
    x: Site,
    y: Site,
) -> Result<Option<u64>> {
    let g = field.geometry();
    let oob = |site| Error::OutOfBounds {
        site,
        radius: g.radius(),
    };
    let i = g.index(x).ok_or_else(|| oob(x))?;
    let j = g.index(y).ok_or_else(|| oob(y))?;
    match (labeling.label_index(i), labeling.label_index(j)) {
        (Some(a), Some(b)) if a == b => Ok(BfsScratch::new(g.len()).shortest_path(field, i, j)),
        _ => Ok(None),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsiPair {
    pub x: Site,
    pub y: Site,
    pub l1: u64,
    pub chem: u64,
}

impl PsiPair {
    pub fn ratio(&self) -> f64 {
        self.chem as f64 / self.l1 as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsiEstimate {
    pub pairs: Vec<PsiPair>,
    pub max_ratio: f64,
    /// Ratio histogram with bins `[1 + 0.1 k, 1 + 0.1 (k + 1))`, keyed by `k`.
    pub histogram: BTreeMap<u32, u64>,
}

impl PsiEstimate {
    pub fn sample_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let mut r: Vec<f64> = self.pairs.iter().map(PsiPair::ratio).collect();
        r.sort_by(f64::total_cmp);
        if r.is_empty() {
            return f64::NAN;
        }
        let k = ((q * (r.len() - 1) as f64).round() as usize).min(r.len() - 1);
        r[k]
    }
}

/// Samples `sample_count` pairs uniformly from the proxy cluster, rejecting
/// pairs closer than `min_separation` in l1, and records chemical-distance
/// ratios.
pub fn estimate_psi(
    field: &TrapField,
    labeling: &ClusterLabeling,
    sample_count: usize,
    min_separation: u64,
    rng_seed: u64,
) -> Result<PsiEstimate> {
    let g = *field.geometry();
    let sites = labeling.proxy_sites();
    if sites.is_empty() {
        return Err(Error::Constraint("proxy cluster is empty".into()));
    }
    // The largest l1 separation available in the cluster is bounded by the
    // l1 extent of its bounding box.
    let extent: u64 = (0..g.dimension())
        .map(|a| {
            let (lo, hi) = sites.iter().fold((i32::MAX, i32::MIN), |(lo, hi), &i| {
                let c = g.site(i).0[a];
                (lo.min(c), hi.max(c))
            });
            (hi - lo) as u64
        })
        .sum();
    if extent < min_separation.max(1) {
        return Err(Error::Constraint(format!(
            "proxy cluster l1 extent {extent} is below min_separation {min_separation}"
        )));
    }
    let mut rng = replica_rng(rng_seed);
    let max_attempts = 1000 * sample_count.max(1);
    let mut candidates = Vec::with_capacity(sample_count);
    let mut attempts = 0;
    while candidates.len() < sample_count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Constraint(format!(
                "could not find {sample_count} pairs with l1 separation >= {min_separation} \
                 after {max_attempts} draws"
            )));
        }
        let a = sites[rng.random_range(0..sites.len())];
        let b = sites[rng.random_range(0..sites.len())];
        let (x, y) = (g.site(a), g.site(b));
        let l1 = x.l1_distance(&y);
        if l1 >= min_separation.max(1) {
            candidates.push((a, b, l1));
        }
    }
    let pairs: Vec<PsiPair> = candidates
        .par_iter()
        .map_init(
            || BfsScratch::new(g.len()),
            |scratch, &(a, b, l1)| {
                let chem = scratch
                    .shortest_path(field, a, b)
                    .expect("sites of one cluster are connected");
                PsiPair {
                    x: g.site(a),
                    y: g.site(b),
                    l1,
                    chem,
                }
            },
        )
        .collect();
    let max_ratio = pairs.iter().map(PsiPair::ratio).fold(1.0, f64::max);
    let mut histogram = BTreeMap::new();
    for p in &pairs {
        let bin = ((p.ratio() - 1.0) / 0.1 + 1e-9).floor().max(0.0) as u32;
        *histogram.entry(bin).or_insert(0) += 1;
    }
    Ok(PsiEstimate {
        pairs,
        max_ratio,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{generate_environment, LatticeConfig};

    fn handcrafted(l: u32, traps: &[(i32, i32)]) -> TrapField {
        let cfg = LatticeConfig::new(2, l, 0.5, 0).unwrap();
        TrapField::from_fn(&cfg, |s| traps.iter().any(|&(x, y)| s == Site::new2(x, y))).unwrap()
    }

    /// Flood fill from every vacant site; independent of the union-find path.
    fn flood_fill_sizes(field: &TrapField) -> Vec<u64> {
        let g = field.geometry();
        let mut seen = vec![false; g.len()];
        let mut sizes = Vec::new();
        for s in 0..g.len() {
            if seen[s] || field.is_trap_index(s) {
                continue;
            }
            let mut stack = vec![s];
            seen[s] = true;
            let mut size = 0;
            while let Some(i) = stack.pop() {
                size += 1;
                let site = g.site(i);
                for u in g.unit_vectors() {
                    if let Some(j) = g.index(site + u) {
                        if !seen[j] && !field.is_trap_index(j) {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            sizes.push(size);
        }
        sizes
    }

    #[test]
    fn all_vacant_is_one_spanning_cluster() {
        let f = TrapField::all_vacant(2, 4);
        let lab = label_vacant_clusters(&f);
        assert_eq!(lab.cluster_count(), 1);
        assert_eq!(lab.largest_size(), 81);
        assert!(lab.spans_box);
        assert_eq!(infinite_cluster_proxy(&lab, true), Some(0));
        let f3 = TrapField::all_vacant(3, 2);
        let lab3 = label_vacant_clusters(&f3);
        assert_eq!(lab3.largest_size(), 125);
        assert!(lab3.spans_box);
    }

    #[test]
    fn all_trap_has_no_clusters() {
        let lab = label_vacant_clusters(&TrapField::all_traps(2, 3));
        assert_eq!(lab.cluster_count(), 0);
        assert_eq!(infinite_cluster_proxy(&lab, false), None);
    }

    #[test]
    fn wall_splits_box_in_two() {
        // 5x5 box, wall on column x = 0 (storage-first coordinate)
        let traps: Vec<_> = (-2..=2).map(|y| (0, y)).collect();
        let f = handcrafted(2, &traps);
        let lab = label_vacant_clusters(&f);
        let mut got = lab.sizes.clone();
        let mut want = flood_fill_sizes(&f);
        got.sort();
        want.sort();
        assert_eq!(got, want);
        assert_eq!(got, vec![10, 10]);
        // tie: the cluster with the smallest member site (-2,-2) wins
        assert_eq!(lab.largest, Some(0));
        assert!(!lab.spans_box);
        let i = f.geometry().index(Site::new2(-2, -2)).unwrap();
        assert_eq!(lab.labels[i], 0);
    }

    #[test]
    fn proxy_prefers_larger_cluster() {
        // 7x7 box; wall at x = 1 leaves columns x=-3..0 (28 sites) and x=2,3 (14)
        // plus carve a trap in the big side to get sizes 27 and 14.
        let mut traps: Vec<_> = (-3..=3).map(|y| (1, y)).collect();
        traps.push((-3, -3));
        let f = handcrafted(3, &traps);
        let lab = label_vacant_clusters(&f);
        let mut sizes = flood_fill_sizes(&f);
        sizes.sort();
        assert_eq!(sizes, vec![14, 27]);
        let proxy = infinite_cluster_proxy(&lab, false).unwrap();
        assert_eq!(lab.sizes[proxy as usize], 27);
    }

    #[test]
    fn random_fields_agree_with_flood_fill() {
        for seed in 0..10 {
            let f = generate_environment(&LatticeConfig::new(2, 12, 0.6, seed).unwrap()).unwrap();
            let lab = label_vacant_clusters(&f);
            let mut got = lab.sizes.clone();
            let mut want = flood_fill_sizes(&f);
            got.sort();
            want.sort();
            assert_eq!(got, want);
            assert_eq!(got.iter().sum::<u64>(), (f.len() - f.trap_count()) as u64);
        }
    }

    #[test]
    fn occupied_cluster_cases() {
        let f = handcrafted(3, &[(0, 0), (1, 1)]);
        assert!(occupied_cluster(&f, Site::new2(2, 2)).unwrap().is_empty());
        assert_eq!(
            occupied_cluster(&f, Site::new2(0, 0)).unwrap(),
            vec![Site::new2(0, 0), Site::new2(1, 1)]
        );
        let single = handcrafted(3, &[(-1, 2)]);
        assert_eq!(
            occupied_cluster(&single, Site::new2(-1, 2)).unwrap(),
            vec![Site::new2(-1, 2)]
        );
        // l1 distance 5 > 2d = 4: separate
        let far = handcrafted(3, &[(0, 0), (3, 2)]);
        assert_eq!(occupied_cluster(&far, Site::ORIGIN).unwrap().len(), 1);
        assert!(occupied_cluster(&f, Site::new2(4, 0)).is_err());
    }

    #[test]
    fn chemical_distance_cases() {
        let f = TrapField::all_vacant(2, 5);
        let lab = label_vacant_clusters(&f);
        assert_eq!(
            chemical_distance(&f, &lab, Site::ORIGIN, Site::new2(3, 4)).unwrap(),
            Some(7)
        );
        let t = handcrafted(2, &[(1, 1)]);
        let lab = label_vacant_clusters(&t);
        assert_eq!(
            chemical_distance(&t, &lab, Site::ORIGIN, Site::new2(1, 1)).unwrap(),
            None
        );
        assert!(chemical_distance(&t, &lab, Site::ORIGIN, Site::new2(9, 1)).is_err());
    }

    #[test]
    fn detour_matches_exhaustive_bfs() {
        // 5x5 box, wall on x = 0 except a gap at y = 2
        let traps: Vec<_> = (-2..=1).map(|y| (0, y)).collect();
        let f = handcrafted(2, &traps);
        let lab = label_vacant_clusters(&f);
        // (-1,-2) -> (1,-2): must go up to y=2 and back: 1 + 4 + 1 + 4 = 10
        assert_eq!(
            chemical_distance(&f, &lab, Site::new2(-1, -2), Site::new2(1, -2)).unwrap(),
            Some(10)
        );
    }

    #[test]
    fn psi_on_trap_free_field_is_one() {
        let f = TrapField::all_vacant(2, 10);
        let lab = label_vacant_clusters(&f);
        let est = estimate_psi(&f, &lab, 50, 5, 3).unwrap();
        assert_eq!(est.sample_count(), 50);
        assert!(est.pairs.iter().all(|p| p.chem == p.l1));
        assert_eq!(est.max_ratio, 1.0);
    }

    #[test]
    fn psi_rejects_impossible_separation() {
        let f = TrapField::all_vacant(2, 3);
        let lab = label_vacant_clusters(&f);
        assert!(matches!(
            estimate_psi(&f, &lab, 10, 100, 1),
            Err(Error::Constraint(_))
        ));
    }
}
