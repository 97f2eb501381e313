//! Monte Carlo engine for the branching random walk with hard killing, the
//! two-coloured free walk and confined particle counts.
//!
//! Dynamics (move, then split): every particle jumps to a uniform nearest
//! neighbour; on a vacant site it is replaced by two particles, on a trap it
//! dies. Replica `i` of a study seeded with `m` draws from
//! `replica_rng(derive_replica_seed(m, i))`.

use fnv::FnvHashMap;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{BoxGeometry, Site, SiteMask, TrapField};
use crate::rng::{derive_replica_seed, replica_rng, ReplicaRng};
use crate::stats::{proportion, Welford};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimMode {
    /// One entry per particle.
    ParticleExact,
    /// Per-site counts, moved by a multinomial split over the `2d` neighbours.
    CountMultinomial,
}

impl std::str::FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "particle" => Ok(SimMode::ParticleExact),
            "count" => Ok(SimMode::CountMultinomial),
            other => Err(Error::Config(format!(
                "unknown simulation mode {other:?} (expected particle or count)"
            ))),
        }
    }
}

/// Particle counts per occupied site, sorted by site index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PopulationState {
    pub time: usize,
    pub counts: Vec<(usize, u128)>,
}

impl PopulationState {
    pub fn single(index: usize) -> Self {
        PopulationState {
            time: 0,
            counts: vec![(index, 1)],
        }
    }

    pub fn total(&self) -> u128 {
        self.counts.iter().map(|&(_, c)| c).sum()
    }

    pub fn alive(&self) -> bool {
        !self.counts.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepTally {
    pub fissions: u128,
    pub kills: u128,
}

#[inline]
fn neighbour(g: &BoxGeometry, index: usize, dir: usize) -> Option<usize> {
    let axis = dir / 2;
    let up = dir % 2 == 1;
    if g.on_face(index, axis, up) {
        return None;
    }
    let s = g.stride(axis);
    Some(if up { index + s } else { index - s })
}

fn boundary_error(g: &BoxGeometry) -> Error {
    Error::BoxTooSmall {
        have: g.radius(),
        need: g.radius() as u64 + 1,
        what: "walk reached the box boundary",
    }
}

/// One generation in count mode.
pub fn step_counts(
    state: &PopulationState,
    field: &TrapField,
    rng: &mut ReplicaRng,
) -> Result<(PopulationState, StepTally)> {
    let g = field.geometry();
    let deg = 2 * g.dimension();
    let mut next: FnvHashMap<usize, u128> = FnvHashMap::default();
    let mut tally = StepTally::default();
    let mut split = vec![0u64; deg];
    for &(site, count) in &state.counts {
        let count = u64::try_from(count).map_err(|_| Error::CountRange(count))?;
        let mut rem = count;
        for (j, slot) in split.iter_mut().enumerate() {
            *slot = if j + 1 == deg || rem == 0 {
                rem
            } else {
                let b = Binomial::new(rem, 1.0 / (deg - j) as f64).expect("valid binomial");
                b.sample(rng)
            };
            rem -= *slot;
        }
        for (dir, &k) in split.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let z = neighbour(g, site, dir).ok_or_else(|| boundary_error(g))?;
            if field.is_trap_index(z) {
                tally.kills += k as u128;
            } else {
                tally.fissions += k as u128;
                *next.entry(z).or_insert(0) += 2 * k as u128;
            }
        }
    }
    let mut counts: Vec<(usize, u128)> = next.into_iter().collect();
    counts.sort_unstable();
    Ok((
        PopulationState {
            time: state.time + 1,
            counts,
        },
        tally,
    ))
}

/// One generation in particle mode; `particles` holds site indices.
pub fn step_particles(
    particles: &[usize],
    field: &TrapField,
    rng: &mut ReplicaRng,
) -> Result<(Vec<usize>, StepTally)> {
    let g = field.geometry();
    let deg = 2 * g.dimension();
    let mut next = Vec::with_capacity(2 * particles.len());
    let mut tally = StepTally::default();
    for &site in particles {
        let z = neighbour(g, site, rng.random_range(0..deg)).ok_or_else(|| boundary_error(g))?;
        if field.is_trap_index(z) {
            tally.kills += 1;
        } else {
            tally.fissions += 1;
            next.push(z);
            next.push(z);
        }
    }
    Ok((next, tally))
}

fn to_state(time: usize, particles: &[usize]) -> PopulationState {
    let mut sorted = particles.to_vec();
    sorted.sort_unstable();
    let mut counts: Vec<(usize, u128)> = Vec::new();
    for s in sorted {
        match counts.last_mut() {
            Some((last, c)) if *last == s => *c += 1,
            _ => counts.push((s, 1)),
        }
    }
    PopulationState { time, counts }
}

#[derive(Clone, Debug)]
pub struct SimOptions<'a> {
    pub mode: SimMode,
    pub horizon: usize,
    pub replica_seed: u64,
    /// Hard limit on the population; exceeding it is an error.
    pub particle_cap: u128,
    /// Sites whose visit is recorded in [`TrajectoryRecord::first_target_hit`].
    pub target: Option<&'a SiteMask>,
    /// Stop as soon as the target is hit (the remaining series are absent).
    pub stop_on_target: bool,
}

impl<'a> SimOptions<'a> {
    pub fn new(mode: SimMode, horizon: usize, replica_seed: u64) -> Self {
        let particle_cap = match mode {
            SimMode::ParticleExact => 1 << 26,
            SimMode::CountMultinomial => u128::MAX >> 2,
        };
        SimOptions {
            mode,
            horizon,
            replica_seed,
            particle_cap,
            target: None,
            stop_on_target: false,
        }
    }
}

/// Observables of one replica. Series are indexed by time `k = 0..=horizon`
/// (shorter when the run stopped early).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub start: Site,
    pub horizon: usize,
    /// `N_k`, particles alive at time `k`.
    pub populations: Vec<u128>,
    /// `F_k`, fissions up to time `k`.
    pub fissions: Vec<u128>,
    /// `T_k`, particles killed by traps up to time `k`.
    pub kills: Vec<u128>,
    /// `M_k`, Euclidean radius around the origin of the sites occupied up to
    /// time `k`.
    pub max_radius: Vec<f64>,
    /// First time an occupied site lay in the target set.
    pub first_target_hit: Option<usize>,
    /// Population at the last recorded time.
    pub final_state: PopulationState,
}

impl TrajectoryRecord {
    fn new(start: Site, horizon: usize, state: PopulationState) -> Self {
        TrajectoryRecord {
            start,
            horizon,
            populations: vec![1],
            fissions: vec![0],
            kills: vec![0],
            max_radius: vec![start.norm()],
            first_target_hit: None,
            final_state: state,
        }
    }

    /// Last recorded time.
    pub fn last_time(&self) -> usize {
        self.populations.len() - 1
    }

    /// `Sigma_k = N_k + T_k`, the number of particles ever born up to `k`.
    pub fn sigma(&self, k: usize) -> u128 {
        self.populations[k] + self.kills[k]
    }

    pub fn survived(&self, k: usize) -> bool {
        self.populations[k] >= 1
    }

    pub fn final_population(&self) -> u128 {
        *self.populations.last().expect("non-empty series")
    }

    /// `N_k + T_k = F_k + 1` at every recorded time.
    pub fn accounting_holds(&self) -> bool {
        (0..self.populations.len()).all(|k| self.sigma(k) == self.fissions[k] + 1)
    }

    fn push(
        &mut self,
        state: PopulationState,
        tally: StepTally,
        g: &BoxGeometry,
        target: Option<&SiteMask>,
    ) {
        let k = self.populations.len();
        self.populations.push(state.total());
        self.fissions.push(self.fissions[k - 1] + tally.fissions);
        self.kills.push(self.kills[k - 1] + tally.kills);
        let radius = state
            .counts
            .iter()
            .map(|&(i, _)| g.site(i).norm())
            .fold(self.max_radius[k - 1], f64::max);
        self.max_radius.push(radius);
        if self.first_target_hit.is_none() {
            if let Some(t) = target {
                if state.counts.iter().any(|&(i, _)| t.contains_index(i)) {
                    self.first_target_hit = Some(k);
                }
            }
        }
        self.final_state = state;
    }
}

fn check_start(field: &TrapField, start: Site, horizon: usize) -> Result<usize> {
    let g = field.geometry();
    let i = g.index(start).ok_or(Error::OutOfBounds {
        site: start,
        radius: g.radius(),
    })?;
    if field.is_trap_index(i) {
        return Err(Error::StartIsTrap(start));
    }
    let need = start.linf() as u64 + horizon as u64;
    if need > g.radius() as u64 {
        return Err(Error::BoxTooSmall {
            have: g.radius(),
            need,
            what: "branching random walk horizon",
        });
    }
    Ok(i)
}

/// Runs one replica from a single particle at `start`.
pub fn simulate(field: &TrapField, start: Site, options: &SimOptions) -> Result<TrajectoryRecord> {
    let g = field.geometry();
    let si = check_start(field, start, options.horizon)?;
    if options.particle_cap < 1 {
        return Err(Error::Config("particle_cap must be >= 1".into()));
    }
    let mut rng = replica_rng(options.replica_seed);
    let mut record = TrajectoryRecord::new(start, options.horizon, PopulationState::single(si));
    if options.target.is_some_and(|t| t.contains_index(si)) {
        record.first_target_hit = Some(0);
    }
    let mut particles = vec![si];
    for k in 1..=options.horizon {
        if options.stop_on_target && record.first_target_hit.is_some() {
            break;
        }
        if !record.final_state.alive() {
            let empty = PopulationState {
                time: k,
                counts: Vec::new(),
            };
            record.push(empty, StepTally::default(), g, None);
            continue;
        }
        let (state, tally) = match options.mode {
            SimMode::CountMultinomial => step_counts(&record.final_state, field, &mut rng)?,
            SimMode::ParticleExact => {
                let (next, tally) = step_particles(&particles, field, &mut rng)?;
                let state = to_state(k, &next);
                particles = next;
                (state, tally)
            }
        };
        record.push(state, tally, g, options.target);
        if record.final_population() > options.particle_cap {
            return Err(Error::ParticleCap {
                cap: options.particle_cap,
                time: k,
                partial: Box::new(record),
            });
        }
    }
    Ok(record)
}

/// Runs `replicas` independent replicas; replica `i` uses
/// `derive_replica_seed(master_seed, i)`. Results are in replica order.
pub fn simulate_many(
    field: &TrapField,
    start: Site,
    template: &SimOptions,
    replicas: usize,
    master_seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut o = template.clone();
            o.replica_seed = derive_replica_seed(master_seed, i as u64);
            simulate(field, start, &o)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ConditionedRun {
    pub replicas: usize,
    /// Records with `N_n >= 1`, in replica order.
    pub accepted: Vec<TrajectoryRecord>,
    pub acceptance_rate: f64,
    pub std_error: f64,
}

/// Rejection sampling against survival to the horizon, the finite-time
/// stand-in for conditioning on eternal survival.
pub fn simulate_conditioned(
    field: &TrapField,
    start: Site,
    n: usize,
    replicas: usize,
    master_seed: u64,
) -> Result<ConditionedRun> {
    let template = SimOptions::new(SimMode::CountMultinomial, n, 0);
    let records = simulate_many(field, start, &template, replicas, master_seed)?;
    let accepted: Vec<_> = records.into_iter().filter(|r| r.survived(n)).collect();
    if accepted.is_empty() {
        return Err(Error::NoAcceptance {
            horizon: n,
            replicas,
        });
    }
    let (acceptance_rate, std_error) = proportion(accepted.len() as u64, replicas as u64);
    Ok(ConditionedRun {
        replicas,
        accepted,
        acceptance_rate,
        std_error,
    })
}

/// Exact survival probabilities of the killed process started from one
/// particle: `s_j(y) = P(N_j >= 1 | one particle at y)`, from
/// `s_0 = 1` on vacant sites and
/// `s_j(y) = (1/2d) sum_{z ~ y} [z vacant] (1 - (1 - s_{j-1}(z))^2)`.
/// Sites outside the box count as traps.
#[derive(Clone, Debug)]
pub struct SurvivalLevels {
    geometry: BoxGeometry,
    levels: Vec<Vec<f64>>,
}

impl SurvivalLevels {
    pub fn compute(field: &TrapField, horizon: usize) -> Self {
        let g = *field.geometry();
        let deg = 2 * g.dimension();
        let w = 1.0 / deg as f64;
        let vacant: Vec<bool> = (0..g.len()).map(|i| !field.is_trap_index(i)).collect();
        let mut levels = Vec::with_capacity(horizon + 1);
        levels.push(
            vacant
                .iter()
                .map(|&v| if v { 1.0 } else { 0.0 })
                .collect::<Vec<f64>>(),
        );
        for j in 1..=horizon {
            let prev = &levels[j - 1];
            let cur: Vec<f64> = (0..g.len())
                .into_par_iter()
                .map(|y| {
                    if !vacant[y] {
                        return 0.0;
                    }
                    (0..deg)
                        .filter_map(|dir| neighbour(&g, y, dir))
                        .filter(|&z| vacant[z])
                        .map(|z| {
                            let miss = 1.0 - prev[z];
                            1.0 - miss * miss
                        })
                        .sum::<f64>()
                        * w
                })
                .collect();
            levels.push(cur);
        }
        SurvivalLevels {
            geometry: g,
            levels,
        }
    }

    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn get(&self, steps: usize, index: usize) -> f64 {
        self.levels[steps][index]
    }

    pub fn at(&self, steps: usize, site: Site) -> Option<f64> {
        self.geometry.index(site).map(|i| self.levels[steps][i])
    }

    /// Probability that a population in `state` still has a particle alive
    /// `steps` generations later.
    pub fn population_survival(&self, state: &PopulationState, steps: usize) -> f64 {
        let log_all_die: f64 = state
            .counts
            .iter()
            .map(|&(i, c)| (c as f64) * (-self.levels[steps][i]).ln_1p())
            .sum();
        -log_all_die.exp_m1()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalEstimate {
    pub horizon: usize,
    pub replicas: usize,
    pub survivors: usize,
    pub probability: f64,
    pub std_error: f64,
    /// `s_n(start)`, the exact value the estimate targets.
    pub exact: f64,
}

/// Monte Carlo estimate of `P(N_n >= 1)`. Each replica is simulated in count
/// mode until extinction, the horizon, or a population of `resolve_at`
/// particles; in the last case survival to `n` is drawn from its exact
/// conditional probability given the current configuration.
pub fn estimate_survival(
    field: &TrapField,
    start: Site,
    n: usize,
    replicas: usize,
    master_seed: u64,
    resolve_at: u128,
) -> Result<SurvivalEstimate> {
    if replicas == 0 {
        return Err(Error::Empty("replicas"));
    }
    let si = check_start(field, start, n)?;
    let levels = SurvivalLevels::compute(field, n);
    let outcomes: Vec<bool> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(derive_replica_seed(master_seed, i as u64));
            let mut state = PopulationState::single(si);
            for k in 0..n {
                if !state.alive() {
                    return Ok(false);
                }
                if state.total() >= resolve_at {
                    let p = levels.population_survival(&state, n - k);
                    return Ok(rng.random::<f64>() < p);
                }
                state = step_counts(&state, field, &mut rng)?.0;
            }
            Ok(state.alive())
        })
        .collect::<Result<_>>()?;
    let survivors = outcomes.iter().filter(|&&s| s).count();
    let (probability, std_error) = proportion(survivors as u64, replicas as u64);
    Ok(SurvivalEstimate {
        horizon: n,
        replicas,
        survivors,
        probability,
        std_error,
        exact: levels.get(n, si),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClearingHitEstimate {
    pub horizon: usize,
    pub replicas: usize,
    /// Replicas alive at the horizon.
    pub accepted: usize,
    /// Accepted replicas whose range missed the target set.
    pub misses: usize,
    pub probability: f64,
    pub std_error: f64,
}

/// Among replicas alive at time `n`, the fraction whose range never met
/// `target`. Once the target is hit only survival remains to be decided, and
/// it is drawn from its exact conditional probability.
pub fn estimate_clearing_hit(
    field: &TrapField,
    start: Site,
    target: &SiteMask,
    n: usize,
    replicas: usize,
    master_seed: u64,
) -> Result<ClearingHitEstimate> {
    let si = check_start(field, start, n)?;
    if target.geometry() != field.geometry() {
        return Err(Error::Config(
            "target set and field use different boxes".into(),
        ));
    }
    let levels = SurvivalLevels::compute(field, n);
    let outcomes: Vec<(bool, bool)> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(derive_replica_seed(master_seed, i as u64));
            let mut state = PopulationState::single(si);
            let mut hit = target.contains_index(si);
            for k in 0..n {
                if !state.alive() {
                    return Ok((false, false));
                }
                if hit {
                    let p = levels.population_survival(&state, n - k);
                    return Ok((rng.random::<f64>() < p, false));
                }
                state = step_counts(&state, field, &mut rng)?.0;
                hit = state.counts.iter().any(|&(j, _)| target.contains_index(j));
            }
            Ok((state.alive(), !hit))
        })
        .collect::<Result<_>>()?;
    let accepted = outcomes.iter().filter(|o| o.0).count();
    if accepted == 0 {
        return Err(Error::NoAcceptance {
            horizon: n,
            replicas,
        });
    }
    let misses = outcomes.iter().filter(|o| o.0 && o.1).count();
    let (probability, std_error) = proportion(misses as u64, accepted as u64);
    Ok(ClearingHitEstimate {
        horizon: n,
        replicas,
        accepted,
        misses,
        probability,
        std_error,
    })
}

/// Largest horizon for explicit free-tree simulation.
pub const FREE_TREE_CAP: usize = 25;

/// Something that can say whether a site belongs to it.
pub trait SiteSet {
    fn contains_site(&self, site: Site) -> bool;
}

impl SiteSet for SiteMask {
    fn contains_site(&self, site: Site) -> bool {
        self.contains(site)
    }
}

/// Every site except one.
pub struct AllBut(pub Site);

impl SiteSet for AllBut {
    fn contains_site(&self, site: Site) -> bool {
        site != self.0
    }
}

/// The empty set.
pub struct NoSites;

impl SiteSet for NoSites {
    fn contains_site(&self, _: Site) -> bool {
        false
    }
}

fn random_step(site: Site, dimension: usize, rng: &mut ReplicaRng) -> Site {
    let dir = rng.random_range(0..2 * dimension);
    site.offset(dir / 2, if dir % 2 == 1 { 1 } else { -1 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TwoColorOutcome {
    /// Free-walk population `2^n`.
    pub total: u128,
    /// Particles whose ancestral line never met the target set.
    pub blue: u128,
}

/// Free branching random walk on `Z^d` (move, then split) in which a particle
/// turns red once it steps into `target`, and its descendants stay red.
pub fn two_colored_simulate(
    target: &impl SiteSet,
    dimension: usize,
    start: Site,
    n: usize,
    rng: &mut ReplicaRng,
) -> Result<TwoColorOutcome> {
    if n > FREE_TREE_CAP {
        return Err(Error::HorizonCap {
            n,
            cap: FREE_TREE_CAP,
        });
    }
    let mut particles: Vec<(Site, bool)> = vec![(start, false)];
    for _ in 0..n {
        let mut next = Vec::with_capacity(2 * particles.len());
        for &(site, red) in &particles {
            let z = random_step(site, dimension, rng);
            let red = red || target.contains_site(z);
            next.push((z, red));
            next.push((z, red));
        }
        particles = next;
    }
    Ok(TwoColorOutcome {
        total: particles.len() as u128,
        blue: particles.iter().filter(|p| !p.1).count() as u128,
    })
}

/// Order of branching and displacement in the free tree used for confined
/// counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchOrder {
    /// Each particle jumps, then doubles on its new site.
    MoveThenSplit,
    /// Each particle doubles, then each offspring jumps independently.
    SplitThenMove,
}

fn in_ball(site: Site, radius: f64) -> bool {
    site.norm2() as f64 <= radius * radius
}

/// `Y_n`: particles at time `n` of a free binary branching random walk from
/// the origin whose ancestral lines stayed in the closed ball of `radius`.
pub fn confined_count(
    dimension: usize,
    radius: f64,
    n: usize,
    order: BranchOrder,
    rng: &mut ReplicaRng,
) -> Result<u128> {
    if n > FREE_TREE_CAP {
        return Err(Error::HorizonCap {
            n,
            cap: FREE_TREE_CAP,
        });
    }
    if !in_ball(Site::ORIGIN, radius) {
        return Ok(0);
    }
    let mut particles = vec![Site::ORIGIN];
    for _ in 0..n {
        let mut next = Vec::with_capacity(2 * particles.len());
        for &s in &particles {
            match order {
                BranchOrder::MoveThenSplit => {
                    let z = random_step(s, dimension, rng);
                    if in_ball(z, radius) {
                        next.push(z);
                        next.push(z);
                    }
                }
                BranchOrder::SplitThenMove => {
                    for _ in 0..2 {
                        let z = random_step(s, dimension, rng);
                        if in_ball(z, radius) {
                            next.push(z);
                        }
                    }
                }
            }
        }
        particles = next;
    }
    Ok(particles.len() as u128)
}

/// Confinement flags of all `2^n` leaves of a free tree, in heap order: the
/// children of leaf-prefix `u` at the next generation are `2u` and `2u + 1`,
/// so two leaves share an ancestor at generation `k` iff they agree after
/// shifting right by `n - k`.
pub fn free_tree_confinement(
    dimension: usize,
    radius: f64,
    n: usize,
    order: BranchOrder,
    rng: &mut ReplicaRng,
) -> Result<Vec<bool>> {
    if n > FREE_TREE_CAP {
        return Err(Error::HorizonCap {
            n,
            cap: FREE_TREE_CAP,
        });
    }
    let mut gen: Vec<(Site, bool)> = vec![(Site::ORIGIN, in_ball(Site::ORIGIN, radius))];
    for _ in 0..n {
        let mut next = Vec::with_capacity(2 * gen.len());
        for &(s, ok) in &gen {
            match order {
                BranchOrder::MoveThenSplit => {
                    let z = random_step(s, dimension, rng);
                    let ok = ok && in_ball(z, radius);
                    next.push((z, ok));
                    next.push((z, ok));
                }
                BranchOrder::SplitThenMove => {
                    for _ in 0..2 {
                        let z = random_step(s, dimension, rng);
                        next.push((z, ok && in_ball(z, radius)));
                    }
                }
            }
        }
        gen = next;
    }
    Ok(gen.into_iter().map(|(_, ok)| ok).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassSummary {
    pub replicas: usize,
    pub horizon: usize,
    pub mean_population: f64,
    pub std_error: f64,
    /// Fewer than two records: the standard error carries no information.
    pub degenerate: bool,
    pub survival_frequency: f64,
    pub survival_std_error: f64,
    /// `log N_n / n` over surviving records.
    pub exponent_mean: f64,
    pub exponent_std_error: f64,
}

/// Aggregates records in the order given.
pub fn mass_statistics(records: &[TrajectoryRecord]) -> Result<MassSummary> {
    let first = records.first().ok_or(Error::Empty("trajectory records"))?;
    let horizon = first.last_time();
    let mut mass = Welford::default();
    let mut exponent = Welford::default();
    let mut survivors = 0u64;
    for r in records {
        let n_final = r.final_population();
        mass.push(n_final as f64);
        if n_final >= 1 {
            survivors += 1;
            if horizon > 0 {
                exponent.push((n_final as f64).ln() / horizon as f64);
            }
        }
    }
    let (survival_frequency, survival_std_error) = proportion(survivors, records.len() as u64);
    Ok(MassSummary {
        replicas: records.len(),
        horizon,
        mean_population: mass.mean(),
        std_error: mass.std_error(),
        degenerate: records.len() < 2,
        survival_frequency,
        survival_std_error,
        exponent_mean: if exponent.count() > 0 {
            exponent.mean()
        } else {
            f64::NAN
        },
        exponent_std_error: exponent.std_error(),
    })
}
