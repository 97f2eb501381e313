//! The verification battery: cross-module identities, oracle comparisons,
//! statistical trend checks and golden regressions.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::{
    csv_cell, log_grid, monotone_within, nearest_proxy_site, render_rows, site_label,
    ExperimentSpec, ResultRow, CODE_VERSION, START_MARGIN,
};
use crate::brw::{estimate_survival, simulate_many, two_colored_simulate, SimMode, SimOptions};
use crate::clearings::{
    cube_clearing_radius, cube_clearing_scan, cube_half_side, radius_scaling_stats, ScalingRow,
};
use crate::error::{Error, Result};
use crate::genealogy::{
    mrca_bruteforce, pair_correlation_check, pair_law_fit, qn_pmf, variance_bound_check,
};
use crate::lattice::{generate_environment, LatticeConfig, Site, SiteMask, TrapField};
use crate::percolation::{estimate_psi, label_vacant_clusters, ClusterLabeling};
use crate::rng::{derive_replica_seed, derive_stream_seed, replica_rng};
use crate::stats::{histogram, total_variation, Welford};
use crate::walk::{
    bessel_j0_first_zero, constants, lambda_d, rate_series_from_table, survival_probability_dp,
    BallWalk, BoundaryMode, DECAY_RATE_MAX_ITER, DECAY_RATE_TOL,
};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    /// Number of the acceptance criterion the check belongs to; 0 for goldens.
    pub group: u8,
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(
        group: u8,
        name: &str,
        passed: bool,
        value: f64,
        threshold: f64,
        detail: String,
    ) -> Self {
        CheckResult {
            group,
            name: name.to_string(),
            passed,
            value,
            threshold,
            detail,
        }
    }

    fn errored(group: u8, name: &str, err: &Error) -> Self {
        CheckResult::new(
            group,
            name,
            false,
            f64::NAN,
            f64::NAN,
            format!("error: {err}"),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub rows: Vec<ResultRow>,
    /// Exact growth-exponent series of the trend check.
    pub lln_rows: Vec<ResultRow>,
    pub scaling: Vec<ScalingRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn group_passed(&self, group: u8) -> bool {
        let mut it = self.checks.iter().filter(|c| c.group == group).peekable();
        it.peek().is_some() && it.all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Report CSV, one line per check.
    pub fn render(&self, spec: &ExperimentSpec) -> String {
        let hash = spec.hash_hex();
        let mut out =
            String::from("seed,spec_hash,code_version,group,check,passed,value,threshold,detail\n");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                spec.seed,
                hash,
                CODE_VERSION,
                c.group,
                csv_cell(&c.name),
                c.passed,
                c.value,
                c.threshold,
                csv_cell(&c.detail)
            );
        }
        out
    }
}

/// Runs a fallible check; an error becomes a failed check of the same name.
fn collect(
    checks: &mut Vec<CheckResult>,
    group: u8,
    name: &str,
    f: impl FnOnce() -> Result<CheckResult>,
) {
    checks.push(f().unwrap_or_else(|e| CheckResult::errored(group, name, &e)));
}

fn field_with_start(d: usize, l: u32, p: f64, seed: u64) -> Result<(TrapField, Site)> {
    let field = generate_environment(&LatticeConfig::new(d, l, p, seed)?)?;
    let lab = label_vacant_clusters(&field);
    let start = nearest_proxy_site(&field, &lab).ok_or_else(|| {
        Error::Constraint(format!("environment with seed {seed} has no proxy cluster"))
    })?;
    if start.linf() > START_MARGIN {
        return Err(Error::Constraint(format!(
            "nearest proxy site {start} lies beyond the start margin {START_MARGIN}"
        )));
    }
    Ok((field, start))
}

fn many_to_one(spec: &ExperimentSpec, report: &mut VerifyReport) {
    const N: usize = 12;
    let replicas = spec.scaled(20_000, 200);
    for i in 0..5u64 {
        let name = format!("many_to_one_env{i}");
        collect(&mut report.checks, 1, &name, || {
            let (field, start) =
                field_with_start(2, 40, 0.7, derive_stream_seed(spec.seed, 100 + i))?;
            let template = SimOptions::new(SimMode::CountMultinomial, N, 0);
            let records = simulate_many(
                &field,
                start,
                &template,
                replicas,
                derive_stream_seed(spec.seed, 150 + i),
            )?;
            let w: Welford = records
                .iter()
                .map(|r| r.final_population() as f64)
                .collect();
            let q = survival_probability_dp(&field, start, N, BoundaryMode::Exact)?.q(N);
            let expected = 2f64.powi(N as i32) * q;
            let gap = (w.mean() - expected).abs();
            let z = if w.std_error() > 0.0 {
                gap / w.std_error()
            } else if gap < 1e-9 {
                0.0
            } else {
                f64::INFINITY
            };
            report.rows.push(
                ResultRow::new(
                    "many-to-one",
                    Some(N),
                    format!("mean_population_env{i}"),
                    w.mean(),
                )
                .se(w.std_error()),
            );
            report.rows.push(ResultRow::new(
                "many-to-one",
                Some(N),
                format!("expected_population_env{i}"),
                expected,
            ));
            Ok(CheckResult::new(
                1,
                &name,
                z <= 3.0,
                z,
                3.0,
                format!("mean {} vs 2^n q_n {expected} (SE units)", w.mean()),
            ))
        });
    }
}

fn pair_law(spec: &ExperimentSpec, report: &mut VerifyReport) {
    collect(&mut report.checks, 2, "pair_law_enumeration", || {
        let mut mismatches = Vec::new();
        for n in 1..=12 {
            if mrca_bruteforce(n)? != qn_pmf(n)?.exact {
                mismatches.push(n);
            }
        }
        Ok(CheckResult::new(
            2,
            "pair_law_enumeration",
            mismatches.is_empty(),
            mismatches.len() as f64,
            0.0,
            format!("n = 1..12 exact rational comparison; mismatches {mismatches:?}"),
        ))
    });
    collect(&mut report.checks, 2, "pair_law_chi_square", || {
        let pairs = spec.scaled(100_000, 1000);
        let (stat, p) = pair_law_fit(10, pairs, derive_stream_seed(spec.seed, 2))?;
        Ok(CheckResult::new(
            2,
            "pair_law_chi_square",
            p > 0.01,
            p,
            0.01,
            format!("n = 10, {pairs} pairs, statistic {stat}"),
        ))
    });
}

fn spectral(report: &mut VerifyReport) {
    collect(
        &mut report.checks,
        3,
        "confined_rate_matches_eigenvalue",
        || {
            const N: usize = 2000;
            let walk = BallWalk::new(2, 10.0)?;
            let log_p = walk.log_survival_series(N)[N];
            let mu = walk.decay_rate(DECAY_RATE_TOL, DECAY_RATE_MAX_ITER)?;
            let gap = (-log_p / N as f64 + mu.ln()).abs();
            report.rows.push(ResultRow::new(
                "spectral",
                Some(N),
                "confined_rate_r10",
                -log_p / N as f64,
            ));
            report.rows.push(ResultRow::new(
                "spectral",
                None,
                "minus_log_mu_r10",
                -mu.ln(),
            ));
            Ok(CheckResult::new(
                3,
                "confined_rate_matches_eigenvalue",
                gap <= 1e-6,
                gap,
                1e-6,
                "r = 10, n = 2000".into(),
            ))
        },
    );
    collect(&mut report.checks, 3, "small_ball_eigenvalue", || {
        let mu = BallWalk::new(2, 1.5)?.decay_rate(DECAY_RATE_TOL, DECAY_RATE_MAX_ITER)?;
        // 9-site stencil: top eigenvalue of the 3x3 grid walk is cos(pi/4)
        let exact = std::f64::consts::FRAC_1_SQRT_2;
        let gap = (mu - exact).abs();
        Ok(CheckResult::new(
            3,
            "small_ball_eigenvalue",
            gap <= 1e-10,
            gap,
            1e-10,
            format!("mu(1.5) = {mu}"),
        ))
    });
}

fn continuum(report: &mut VerifyReport) {
    let limit = lambda_d(2).expect("d = 2 is supported");
    let mut values = Vec::new();
    for r in [20.0, 40.0, 80.0] {
        match BallWalk::new(2, r).and_then(|w| w.decay_rate(DECAY_RATE_TOL, DECAY_RATE_MAX_ITER)) {
            Ok(mu) => {
                let v = -r * r * mu.ln();
                report.rows.push(ResultRow::new(
                    "continuum",
                    None,
                    format!("scaled_rate_r{r}"),
                    v,
                ));
                values.push(v);
            }
            Err(e) => {
                report
                    .checks
                    .push(CheckResult::errored(4, "continuum_rate_decreasing", &e));
                return;
            }
        }
    }
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    report.checks.push(CheckResult::new(
        4,
        "continuum_rate_decreasing",
        decreasing,
        values[2] - values[0],
        0.0,
        format!("r^2 (-log mu) at r = 20, 40, 80: {values:?}; limit {limit}"),
    ));
    let rel = (values[2] - limit).abs() / limit;
    report.checks.push(CheckResult::new(
        4,
        "continuum_rate_near_limit",
        rel <= 0.1,
        rel,
        0.1,
        format!("relative gap at r = 80 against {limit}"),
    ));
}

fn constants_checks(spec: &ExperimentSpec, report: &mut VerifyReport) {
    collect(&mut report.checks, 5, "constants_identity", || {
        let mut rng = replica_rng(derive_stream_seed(spec.seed, 5));
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let d = rng.random_range(2..=3usize);
            let p = rng.random_range(0.05..0.99);
            let c = constants(d, p)?;
            worst = worst.max((c.r0 * c.r0 * c.k_dp - c.lambda_d).abs() / c.lambda_d);
        }
        Ok(CheckResult::new(
            5,
            "constants_identity",
            worst <= 1e-12,
            worst,
            1e-12,
            "20 random (d, p)".into(),
        ))
    });
    collect(&mut report.checks, 5, "constants_k_value", || {
        let j = bessel_j0_first_zero();
        let k = j * j / 4.0 * std::f64::consts::PI * (1.0f64 / 0.7).ln() / 2.0;
        let lib = constants(2, 0.7)?.k_dp;
        let gap = (k - 0.81).abs().max((lib - 0.81).abs());
        Ok(CheckResult::new(
            5,
            "constants_k_value",
            gap <= 5e-4 && (k - lib).abs() < 1e-12,
            gap,
            5e-4,
            format!("k(2, 0.7) = {lib}"),
        ))
    });
}

fn accounting(spec: &ExperimentSpec, report: &mut VerifyReport) {
    let replicas = spec.scaled(10_000, 100);
    for (mode, name) in [
        (SimMode::ParticleExact, "accounting_particle"),
        (SimMode::CountMultinomial, "accounting_count"),
    ] {
        collect(&mut report.checks, 6, name, || {
            let (field, start) = field_with_start(2, 40, 0.7, derive_stream_seed(spec.seed, 6))?;
            let template = SimOptions::new(mode, 12, 0);
            let records = simulate_many(
                &field,
                start,
                &template,
                replicas,
                derive_stream_seed(spec.seed, 60),
            )?;
            let bad = records.iter().filter(|r| !r.accounting_holds()).count();
            Ok(CheckResult::new(
                6,
                name,
                bad == 0,
                bad as f64,
                0.0,
                format!("{replicas} replicas, n = 12, every step"),
            ))
        });
    }
}

fn two_color(spec: &ExperimentSpec, report: &mut VerifyReport) {
    collect(&mut report.checks, 7, "two_color_equivalence", || {
        const N: usize = 5;
        let replicas = spec.scaled(100_000, 1000);
        let cfg = LatticeConfig::new(2, 8, 0.7, derive_stream_seed(spec.seed, 7))?;
        let field = generate_environment(&cfg)?;
        let lab = label_vacant_clusters(&field);
        let start = nearest_proxy_site(&field, &lab)
            .filter(|s| s.linf() <= 3)
            .ok_or_else(|| Error::Constraint("no proxy site within 3 of the origin".into()))?;
        let traps = SiteMask::from_sites(
            *field.geometry(),
            field
                .geometry()
                .sites()
                .filter(|&s| field.is_trap(s).unwrap_or(false)),
        )?;
        let template = SimOptions::new(SimMode::ParticleExact, N, 0);
        let killed = simulate_many(
            &field,
            start,
            &template,
            replicas,
            derive_stream_seed(spec.seed, 70),
        )?;
        let a = histogram(killed.iter().map(|r| r.final_population()));
        let seed = derive_stream_seed(spec.seed, 71);
        let blue: Vec<u128> = (0..replicas)
            .map(|i| {
                let mut rng = replica_rng(derive_replica_seed(seed, i as u64));
                two_colored_simulate(&traps, 2, start, N, &mut rng).map(|o| o.blue)
            })
            .collect::<Result<_>>()?;
        let b = histogram(blue);
        let tv = total_variation(&a, &b);
        Ok(CheckResult::new(
            7,
            "two_color_equivalence",
            tv <= 0.02,
            tv,
            0.02,
            format!("{replicas} replicas each, start {}", site_label(start, 2)),
        ))
    });
}

fn variance_machinery(spec: &ExperimentSpec, report: &mut VerifyReport) {
    collect(&mut report.checks, 8, "markov_decomposition", || {
        let mut worst: f64 = 0.0;
        for r in [1.5, 2.5, 5.0] {
            worst = worst.max(BallWalk::new(2, r)?.markov_decomposition_error(50));
        }
        Ok(CheckResult::new(
            8,
            "markov_decomposition",
            worst <= 1e-12,
            worst,
            1e-12,
            "r in {1.5, 2.5, 5}, n <= 50".into(),
        ))
    });
    let replicas = spec.scaled(100_000, 1000);
    collect(&mut report.checks, 8, "pair_correlation", || {
        let pc = pair_correlation_check(2, 1.5, 3, replicas, derive_stream_seed(spec.seed, 8))?;
        let z = (pc.empirical - pc.predicted).abs() / pc.std_error;
        report.rows.push(
            ResultRow::new("pair-correlation", Some(3), "empirical", pc.empirical).se(pc.std_error),
        );
        report.rows.push(ResultRow::new(
            "pair-correlation",
            Some(3),
            "prediction",
            pc.predicted,
        ));
        report.rows.push(ResultRow::new(
            "pair-correlation",
            Some(3),
            "exact",
            pc.exact,
        ));
        Ok(CheckResult::new(
            8,
            "pair_correlation",
            pc.agrees_with_prediction(),
            z,
            3.0,
            format!(
                "empirical {} vs p_n^2 J_n {} (exact joint probability {})",
                pc.empirical, pc.predicted, pc.exact
            ),
        ))
    });
    for (r, n) in [(1.5, 3usize), (2.5, 6)] {
        let name = format!("variance_bound_r{r}_n{n}");
        collect(&mut report.checks, 8, &name, || {
            let vr = variance_bound_check(
                2,
                r,
                n,
                replicas,
                derive_stream_seed(spec.seed, 80 + n as u64),
            )?;
            let slack = (vr.variance - vr.bound) / vr.variance_std_error;
            report.rows.push(
                ResultRow::new("variance", Some(n), format!("empirical_r{r}"), vr.variance)
                    .se(vr.variance_std_error),
            );
            report.rows.push(ResultRow::new(
                "variance",
                Some(n),
                format!("bound_r{r}"),
                vr.bound,
            ));
            report.rows.push(ResultRow::new(
                "variance",
                Some(n),
                format!("exact_r{r}"),
                vr.exact_variance,
            ));
            Ok(CheckResult::new(
                8,
                &name,
                vr.bound_holds(),
                slack,
                3.0,
                format!("variance {} bound {}", vr.variance, vr.bound),
            ))
        });
    }
}

fn survival(spec: &ExperimentSpec, report: &mut VerifyReport) {
    let replicas = spec.scaled(10_000, 200);
    let setup = field_with_start(2, 100 + START_MARGIN, 0.8, derive_stream_seed(spec.seed, 9));
    let estimates = setup.and_then(|(field, start)| {
        [50usize, 100]
            .iter()
            .map(|&n| {
                estimate_survival(
                    &field,
                    start,
                    n,
                    replicas,
                    derive_stream_seed(spec.seed, 900 + n as u64),
                    spec.resolve_at,
                )
            })
            .collect::<Result<Vec<_>>>()
    });
    match estimates {
        Ok(e) => {
            for s in &e {
                report.rows.push(
                    ResultRow::new("survival", Some(s.horizon), "frequency", s.probability)
                        .se(s.std_error),
                );
                report.rows.push(ResultRow::new(
                    "survival",
                    Some(s.horizon),
                    "exact",
                    s.exact,
                ));
            }
            let (a, b) = (&e[0], &e[1]);
            report.checks.push(CheckResult::new(
                9,
                "survival_positive",
                b.probability > 0.0,
                b.probability,
                0.0,
                format!("{replicas} replicas, n = 100"),
            ));
            let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            let gap = (a.probability - b.probability).abs();
            let z = if se > 0.0 {
                gap / se
            } else if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            report.checks.push(CheckResult::new(
                9,
                "survival_stable",
                z <= 3.0,
                z,
                3.0,
                format!("P(S_50) {} P(S_100) {}", a.probability, b.probability),
            ));
        }
        Err(err) => {
            report
                .checks
                .push(CheckResult::errored(9, "survival_positive", &err));
            report
                .checks
                .push(CheckResult::errored(9, "survival_stable", &err));
        }
    }
}

/// Best accessible clearing in the dyadic cube around `center`, by direct
/// enumeration of candidate centres and ball offsets.
pub fn cube_clearing_exhaustive(
    field: &TrapField,
    labeling: &ClusterLabeling,
    n: usize,
    center: Site,
) -> Result<Option<Site>> {
    let g = field.geometry();
    let d = g.dimension();
    let p = field.config().vacancy_prob;
    let half = cube_half_side(d, p, n)? as i32;
    let r = cube_clearing_radius(d, p, n)?;
    let reach = r.floor() as i32;
    let inner = half - reach;
    if inner < 0 {
        return Ok(None);
    }
    let span = |a: usize, h: i32| if a < d { -h..=h } else { 0..=0 };
    let mut offsets = Vec::new();
    for x in span(0, reach) {
        for y in span(1, reach) {
            for z in span(2, reach) {
                let o = Site([x, y, z]);
                if (o.norm2() as f64) <= r * r {
                    offsets.push(o);
                }
            }
        }
    }
    let mut best: Option<Site> = None;
    for x in span(0, inner) {
        for y in span(1, inner) {
            for z in span(2, inner) {
                let c = center + Site([x, y, z]);
                let clear = offsets
                    .iter()
                    .all(|&o| g.index(c + o).is_some_and(|i| labeling.in_proxy(i)));
                let better =
                    best.is_none_or(|b| ((c - center).norm2(), c) < ((b - center).norm2(), b));
                if clear && better {
                    best = Some(c);
                }
            }
        }
    }
    Ok(best)
}

fn clearing_scaling(spec: &ExperimentSpec, report: &mut VerifyReport) {
    let samples = spec.scaled(200, 10);
    collect(&mut report.checks, 10, "clearing_scaling_monotone", || {
        let rows = radius_scaling_stats(
            2,
            0.7,
            &[50, 100, 200, 400],
            samples,
            derive_stream_seed(spec.seed, 10),
        )?;
        let ok = monotone_within(&rows, 2.0);
        let probs: Vec<f64> = rows.iter().map(|r| r.probability).collect();
        report.scaling = rows;
        Ok(CheckResult::new(
            10,
            "clearing_scaling_monotone",
            ok,
            probs[probs.len() - 1] - probs[0],
            0.0,
            format!("{samples} fields per rho; probabilities {probs:?}"),
        ))
    });
    collect(&mut report.checks, 10, "clearing_scan_oracle", || {
        let mut mismatches = 0;
        let mut found = 0;
        for i in 0..20u64 {
            let p = [0.6, 0.7, 0.8][i as usize % 3];
            let n = 2 + i as usize % 3;
            let half = cube_half_side(2, p, n)?;
            let cfg = LatticeConfig::new(2, half + 2, p, derive_stream_seed(spec.seed, 1000 + i))?;
            let field = generate_environment(&cfg)?;
            let lab = label_vacant_clusters(&field);
            let centre = Site::new2(i as i32 % 3 - 1, 1 - i as i32 % 3);
            let verdict = &cube_clearing_scan(&field, &lab, n, &[centre])?[0];
            let oracle = cube_clearing_exhaustive(&field, &lab, n, centre)?;
            found += usize::from(oracle.is_some());
            if verdict.witness.as_ref().map(|c| c.center) != oracle {
                mismatches += 1;
            }
        }
        Ok(CheckResult::new(
            10,
            "clearing_scan_oracle",
            mismatches == 0,
            mismatches as f64,
            0.0,
            format!("20 fields; {found} with a clearing"),
        ))
    });
}

fn lln_trend(spec: &ExperimentSpec, report: &mut VerifyReport) {
    let n_max = spec.scaled(2000, 64);
    let k = constants(2, 0.7).expect("valid constants").k_dp;
    let mut nonpositive = true;
    let mut in_range = true;
    let mut dominated = true;
    let mut finals = Vec::new();
    for i in 0..5u64 {
        let seed = derive_stream_seed(spec.seed, 1100 + i);
        let run = || -> Result<(Vec<(usize, f64)>, Vec<(usize, f64)>)> {
            let l = n_max as u32 + START_MARGIN;
            let (field, start) = field_with_start(2, l, 0.7, seed)?;
            let low = survival_probability_dp(&field, start, n_max, BoundaryMode::Exact)?;
            let high_field = generate_environment(&LatticeConfig::new(2, l, 0.99, seed)?)?;
            let high = survival_probability_dp(&high_field, start, n_max, BoundaryMode::Exact)?;
            Ok((
                rate_series_from_table(&low, 2).points,
                rate_series_from_table(&high, 2).points,
            ))
        };
        let (low, high) = match run() {
            Ok(v) => v,
            Err(e) => {
                report
                    .checks
                    .push(CheckResult::errored(11, &format!("lln_env{i}"), &e));
                return;
            }
        };
        if low.len() + 1 != n_max || high.len() + 1 != n_max {
            nonpositive = false;
        }
        nonpositive &= low.iter().chain(&high).all(|p| p.1 <= 0.0);
        dominated &= low.iter().zip(&high).all(|(a, b)| a.0 == b.0 && b.1 >= a.1);
        let last = low.last().map_or(f64::NAN, |p| p.1);
        in_range &= last >= -3.0 * k && last < 0.0;
        finals.push(last);
        let grid = log_grid(n_max);
        for (a, b) in low.iter().zip(&high).filter(|(a, _)| grid.contains(&a.0)) {
            report.lln_rows.push(ResultRow::new(
                "lln-trend",
                Some(a.0),
                format!("exponent_p0.7_env{i}"),
                a.1,
            ));
            report.lln_rows.push(ResultRow::new(
                "lln-trend",
                Some(b.0),
                format!("exponent_p0.99_env{i}"),
                b.1,
            ));
        }
    }
    report.checks.push(CheckResult::new(
        11,
        "lln_nonpositive",
        nonpositive,
        0.0,
        0.0,
        format!("5 environments, n = 2..{n_max}, p = 0.7 and 0.99"),
    ));
    report.checks.push(CheckResult::new(
        11,
        "lln_range_at_horizon",
        in_range,
        finals.iter().copied().fold(f64::INFINITY, f64::min),
        -3.0 * k,
        format!("exponent at n = {n_max}: {finals:?}"),
    ));
    report.checks.push(CheckResult::new(
        11,
        "lln_domination",
        dominated,
        0.0,
        0.0,
        "p = 0.99 exponent >= p = 0.7 exponent at every n".into(),
    ));
}

const GOLDEN_SEED: u64 = 42;
const GOLDEN_ENV: &str = "environment_seed42_L3_p0.7.txt";
const GOLDEN_LLN: &str = "lln_seed42_p0.7_n500.csv";
const GOLDEN_PSI: &str = "psi_seed42_L60.csv";
const GOLDEN_LLN_HORIZON: usize = 500;

fn golden_environment_text() -> Result<String> {
    let field = generate_environment(&LatticeConfig::new(2, 3, 0.7, GOLDEN_SEED)?)?;
    let mut out = String::new();
    for y in -3..=3 {
        for x in -3..=3 {
            out.push(if field.is_trap(Site::new2(x, y))? {
                '#'
            } else {
                '.'
            });
        }
        out.push('\n');
    }
    Ok(out)
}

fn golden_lln_values() -> Result<Vec<(String, f64)>> {
    let l = GOLDEN_LLN_HORIZON as u32 + START_MARGIN;
    let (field, start) = field_with_start(2, l, 0.7, GOLDEN_SEED)?;
    let table = survival_probability_dp(&field, start, GOLDEN_LLN_HORIZON, BoundaryMode::Exact)?;
    let grid = log_grid(GOLDEN_LLN_HORIZON);
    Ok(rate_series_from_table(&table, 2)
        .points
        .into_iter()
        .filter(|p| grid.contains(&p.0))
        .map(|(n, v)| (n.to_string(), v))
        .collect())
}

fn golden_psi_values() -> Result<Vec<(String, f64)>> {
    let field = generate_environment(&LatticeConfig::new(2, 60, 0.7, GOLDEN_SEED)?)?;
    let lab = label_vacant_clusters(&field);
    let est = estimate_psi(&field, &lab, 200, 20, GOLDEN_SEED)?;
    Ok(vec![
        ("max_ratio".into(), est.max_ratio),
        ("median_ratio".into(), est.quantile(0.5)),
        ("q90_ratio".into(), est.quantile(0.9)),
    ])
}

fn keyed_text(values: &[(String, f64)]) -> String {
    values.iter().map(|(k, v)| format!("{k},{v}\n")).collect()
}

fn parse_keyed(text: &str) -> Option<Vec<(String, f64)>> {
    text.lines()
        .map(|l| {
            let (k, v) = l.split_once(',')?;
            Some((k.to_string(), v.trim().parse().ok()?))
        })
        .collect()
}

fn compare_keyed(name: &str, golden: &str, computed: &[(String, f64)]) -> CheckResult {
    let Some(expected) = parse_keyed(golden) else {
        return CheckResult::new(
            0,
            name,
            false,
            f64::NAN,
            1e-12,
            "golden file does not parse".into(),
        );
    };
    if expected.len() != computed.len() || expected.iter().zip(computed).any(|(a, b)| a.0 != b.0) {
        return CheckResult::new(
            0,
            name,
            false,
            f64::NAN,
            1e-12,
            "golden keys differ from computed keys".into(),
        );
    }
    let worst = expected
        .iter()
        .zip(computed)
        .map(|(a, b)| (a.1 - b.1).abs())
        .fold(0.0, f64::max);
    CheckResult::new(
        0,
        name,
        worst <= 1e-12,
        worst,
        1e-12,
        format!("{} values", computed.len()),
    )
}

/// Regression checks against the files in `dir`.
pub fn golden_checks(dir: &Path) -> Vec<CheckResult> {
    let read = |file: &str| std::fs::read_to_string(dir.join(file));
    let mut checks = Vec::new();
    collect(&mut checks, 0, "golden_environment", || {
        let computed = golden_environment_text()?;
        let golden = read(GOLDEN_ENV)?;
        let same = golden == computed;
        Ok(CheckResult::new(
            0,
            "golden_environment",
            same,
            f64::from(u8::from(!same)),
            0.0,
            "seed 42, L = 3, p = 0.7".into(),
        ))
    });
    collect(&mut checks, 0, "golden_lln_series", || {
        Ok(compare_keyed(
            "golden_lln_series",
            &read(GOLDEN_LLN)?,
            &golden_lln_values()?,
        ))
    });
    collect(&mut checks, 0, "golden_psi", || {
        Ok(compare_keyed(
            "golden_psi",
            &read(GOLDEN_PSI)?,
            &golden_psi_values()?,
        ))
    });
    checks
}

/// Writes fresh golden files into `dir`.
pub fn bless_goldens(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(GOLDEN_ENV), golden_environment_text()?)?;
    std::fs::write(dir.join(GOLDEN_LLN), keyed_text(&golden_lln_values()?))?;
    std::fs::write(dir.join(GOLDEN_PSI), keyed_text(&golden_psi_values()?))?;
    Ok(())
}

/// Runs the whole battery. Failures are collected, never short-circuited.
pub fn run_verify_suite(spec: &ExperimentSpec) -> VerifyReport {
    let mut report = VerifyReport::default();
    many_to_one(spec, &mut report);
    pair_law(spec, &mut report);
    spectral(&mut report);
    continuum(&mut report);
    constants_checks(spec, &mut report);
    accounting(spec, &mut report);
    two_color(spec, &mut report);
    variance_machinery(spec, &mut report);
    survival(spec, &mut report);
    clearing_scaling(spec, &mut report);
    lln_trend(spec, &mut report);
    report.checks.extend(golden_checks(&spec.golden_dir));
    report
}

/// Writes `report.csv`, `results.csv`, `lln_series.csv` and
/// `clearing_scaling.csv` into `dir`.
pub fn write_verify_outputs(
    spec: &ExperimentSpec,
    report: &VerifyReport,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), report.render(spec))?;
    std::fs::write(dir.join("results.csv"), render_rows(spec, &report.rows))?;
    std::fs::write(
        dir.join("lln_series.csv"),
        render_rows(spec, &report.lln_rows),
    )?;
    let scaling: Vec<ResultRow> = report
        .scaling
        .iter()
        .map(|r| {
            ResultRow::new(
                "clearing-scaling",
                None,
                format!("probability_rho{}", r.rho),
                r.probability,
            )
            .se(r.std_error)
            .note(format!("radius {} samples {}", r.radius, r.samples))
        })
        .collect();
    std::fs::write(
        dir.join("clearing_scaling.csv"),
        render_rows(spec, &scaling),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tampered_golden_fails_by_name() {
        let dir = tempfile::tempdir().unwrap();
        bless_goldens(dir.path()).unwrap();
        assert!(golden_checks(dir.path()).iter().all(|c| c.passed));

        let path = dir.path().join(GOLDEN_ENV);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = if bytes[0] == b'#' { b'.' } else { b'#' };
        std::fs::write(&path, bytes).unwrap();
        let checks = golden_checks(dir.path());
        let env = checks
            .iter()
            .find(|c| c.name == "golden_environment")
            .unwrap();
        assert!(!env.passed);
        assert!(checks
            .iter()
            .filter(|c| c.name != "golden_environment")
            .all(|c| c.passed));
    }

    #[test]
    fn missing_golden_directory_fails_every_golden() {
        let dir = tempfile::tempdir().unwrap();
        let checks = golden_checks(&dir.path().join("absent"));
        assert_eq!(checks.len(), 3);
        assert!(checks
            .iter()
            .all(|c| !c.passed && c.detail.starts_with("error")));
    }

    #[test]
    fn exhaustive_scan_agrees_on_a_handmade_field() {
        let cfg = LatticeConfig::new(2, 20, 0.8, 0).unwrap();
        assert!(cube_half_side(2, 0.8, 2).unwrap() <= 20);
        // periodic traps: a plus-shaped ball is clear exactly where 7x + 3y is 1 or 4 mod 5
        let field =
            TrapField::from_fn(&cfg, |s| (7 * s.0[0] + 3 * s.0[1]).rem_euclid(5) == 0).unwrap();
        let lab = label_vacant_clusters(&field);
        let oracle = cube_clearing_exhaustive(&field, &lab, 2, Site::ORIGIN).unwrap();
        let scan = cube_clearing_scan(&field, &lab, 2, &[Site::ORIGIN]).unwrap();
        assert_eq!(scan[0].witness.as_ref().map(|c| c.center), oracle);
        let c = oracle.unwrap();
        assert_eq!(c.norm2(), 2);
        assert!([1, 4].contains(&(7 * c.0[0] + 3 * c.0[1]).rem_euclid(5)));
    }
}
