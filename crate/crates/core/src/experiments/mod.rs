//! Reproducible experiment drivers.
//!
//! Every driver takes an [`ExperimentSpec`] and returns [`ResultRow`]s in a
//! fixed order. Randomness enters only through seeds derived from the spec's
//! master seed, so equal specs give byte-identical CSV output.

mod spec;
mod verify;

use std::fmt::Write as _;

pub use spec::{parse_key_values, Conditioning, ExperimentSpec, StartChoice, CODE_VERSION, KEYS};
pub use verify::{
    bless_goldens, cube_clearing_exhaustive, golden_checks, run_verify_suite, write_verify_outputs,
    CheckResult, VerifyReport,
};

use crate::brw::{estimate_survival, mass_statistics, simulate_many, SimMode, SimOptions};
use crate::clearings::{huge_clearing_scan, phi_set, radius_scaling_stats, ScaleSet, ScalingRow};
use crate::error::{Error, Result};
use crate::genealogy::{
    jn_terms, mrca_bruteforce, pair_correlation_check, qn_pmf, sample_mrca_counts,
    variance_bound_check, RadiusSpec, PAIR_ENUMERATION_CAP,
};
use crate::lattice::{
    generate_environment, load_environment, payload_checksum, LatticeConfig, Site, TrapField,
};
use crate::percolation::{estimate_psi, label_vacant_clusters, ClusterLabeling};
use crate::rng::derive_stream_seed;
use crate::stats::{chi_square_gof, Welford};
use crate::walk::{constants, rate_series_from_table, survival_probability_dp, BoundaryMode};

/// One CSV record: a named statistic of one experiment, optionally at a time `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub n: Option<usize>,
    pub statistic: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub note: String,
}

impl ResultRow {
    pub fn new(
        experiment: &str,
        n: Option<usize>,
        statistic: impl Into<String>,
        value: f64,
    ) -> Self {
        ResultRow {
            experiment: experiment.to_string(),
            n,
            statistic: statistic.into(),
            value,
            std_error: None,
            note: String::new(),
        }
    }

    pub fn se(mut self, std_error: f64) -> Self {
        self.std_error = Some(std_error);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

pub const CSV_HEADER: &str =
    "experiment,seed,spec_hash,code_version,n,statistic,value,std_error,note";

/// Keeps a free-text field inside one CSV cell.
pub fn csv_cell(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

/// Renders rows with the spec's seed, hash and the code version on each line.
pub fn render_rows(spec: &ExperimentSpec, rows: &[ResultRow]) -> String {
    let hash = spec.hash_hex();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_cell(&r.experiment),
            spec.seed,
            hash,
            CODE_VERSION,
            r.n.map_or_else(String::new, |n| n.to_string()),
            csv_cell(&r.statistic),
            r.value,
            r.std_error.map_or_else(String::new, |s| s.to_string()),
            csv_cell(&r.note),
        );
    }
    out
}

/// Result of one driver: rows, non-fatal warnings, and names of failed checks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Output {
    pub rows: Vec<ResultRow>,
    pub warnings: Vec<String>,
    pub failures: Vec<String>,
}

/// Site coordinates joined by `:` so they fit in one CSV cell.
pub fn site_label(site: Site, dimension: usize) -> String {
    site.coords(dimension)
        .iter()
        .map(i32::to_string)
        .collect::<Vec<_>>()
        .join(":")
}

/// Loads `spec.env` or generates a field; the box must reach `min_radius`.
pub fn environment_for(spec: &ExperimentSpec, min_radius: u32) -> Result<TrapField> {
    let field = match &spec.env {
        Some(path) => {
            let f = load_environment(path)?;
            if f.dimension() != spec.dimension {
                return Err(Error::Config(format!(
                    "environment file has d = {}, spec has d = {}",
                    f.dimension(),
                    spec.dimension
                )));
            }
            f
        }
        None => {
            let l = spec.box_radius.unwrap_or(min_radius);
            generate_environment(&LatticeConfig::new(
                spec.dimension,
                l,
                spec.vacancy_prob,
                spec.seed,
            )?)?
        }
    };
    if field.box_radius() < min_radius {
        return Err(Error::BoxTooSmall {
            have: field.box_radius(),
            need: min_radius as u64,
            what: "requested experiment",
        });
    }
    Ok(field)
}

/// The proxy-cluster site closest to the origin in Euclidean norm, ties to
/// the lexicographically smallest.
pub fn nearest_proxy_site(field: &TrapField, labeling: &ClusterLabeling) -> Option<Site> {
    let g = field.geometry();
    labeling
        .proxy_sites()
        .into_iter()
        .map(|i| g.site(i))
        .min_by_key(|s| (s.norm2(), *s))
}

/// Resolves the start site. A start outside the proxy cluster is used anyway
/// and reported as a warning.
pub fn resolve_start(
    spec: &ExperimentSpec,
    field: &TrapField,
    labeling: &ClusterLabeling,
    warnings: &mut Vec<String>,
) -> Result<Site> {
    let g = field.geometry();
    let start = match spec.start {
        StartChoice::Fixed(s) => s,
        StartChoice::Auto => match nearest_proxy_site(field, labeling) {
            Some(s) => s,
            None => {
                warnings.push("no proxy cluster in the box; starting at the origin".into());
                Site::ORIGIN
            }
        },
    };
    let idx = g.index(start).ok_or(Error::OutOfBounds {
        site: start,
        radius: g.radius(),
    })?;
    if !labeling.in_proxy(idx) {
        warnings.push(format!(
            "start {} is not in the proxy cluster",
            site_label(start, field.dimension())
        ));
    }
    Ok(start)
}

/// Margin added to horizons when an experiment picks its own box and start.
pub const START_MARGIN: u32 = 16;

/// Box radius that fits an exact run of `n` steps from a start within
/// [`START_MARGIN`] of the origin.
fn horizon_box(spec: &ExperimentSpec, n: usize) -> u32 {
    let base = n as u32 + START_MARGIN;
    match spec.start {
        StartChoice::Fixed(s) => base.max(n as u32 + s.linf()),
        StartChoice::Auto => base,
    }
}

/// `n = 2^j` and the rounded midpoints `2^j sqrt 2`, from 2 up to `n_max`,
/// with `n_max` itself appended.
pub fn log_grid(n_max: usize) -> Vec<usize> {
    let mut grid = Vec::new();
    let mut j = 1u32;
    while let Some(p) = 2usize.checked_pow(j).filter(|&p| p <= n_max) {
        grid.push(p);
        let mid = (p as f64 * std::f64::consts::SQRT_2).round() as usize;
        if mid <= n_max {
            grid.push(mid);
        }
        j += 1;
    }
    if n_max >= 2 {
        grid.push(n_max);
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Bytes the exact survival DP needs for horizon `n` in dimension `d`.
pub fn dp_memory_bytes(dimension: usize, n: usize) -> u64 {
    let cells = (2 * n as u64 + 3).pow(dimension as u32);
    cells * (2 * 8 + 1)
}

pub fn run_gen_env(spec: &ExperimentSpec) -> Result<(TrapField, Output)> {
    let field = environment_for(spec, 40)?;
    let cfg = field.config();
    let mut out = Output::default();
    if cfg.subcritical_warning() {
        out.warnings.push(format!(
            "p = {} is below the site-percolation threshold; no infinite cluster",
            cfg.vacancy_prob
        ));
    }
    let e = "gen-env";
    out.rows = vec![
        ResultRow::new(e, None, "box_radius", field.box_radius() as f64),
        ResultRow::new(e, None, "sites", field.len() as f64),
        ResultRow::new(e, None, "traps", field.trap_count() as f64),
        ResultRow::new(e, None, "vacant_fraction", field.vacant_fraction()),
        ResultRow::new(e, None, "payload_checksum", 0.0)
            .note(format!("{:016x}", payload_checksum(&field.payload_bytes()))),
    ];
    Ok((field, out))
}

pub fn run_percolate(spec: &ExperimentSpec) -> Result<Output> {
    let field = environment_for(spec, 40)?;
    let lab = label_vacant_clusters(&field);
    let e = "percolate";
    let mut out = Output::default();
    out.rows = vec![
        ResultRow::new(e, None, "clusters", lab.cluster_count() as f64),
        ResultRow::new(e, None, "largest_size", lab.largest_size() as f64),
        ResultRow::new(
            e,
            None,
            "largest_fraction",
            lab.largest_size() as f64 / field.len() as f64,
        ),
        ResultRow::new(e, None, "spans_box", f64::from(u8::from(lab.spans_box))),
        ResultRow::new(e, None, "vacant_fraction", field.vacant_fraction()),
    ];
    if !lab.spans_box {
        out.warnings
            .push("largest cluster does not span the box".into());
    }
    Ok(out)
}

pub fn run_psi(spec: &ExperimentSpec) -> Result<Output> {
    let field = environment_for(spec, 200)?;
    let lab = label_vacant_clusters(&field);
    let pairs = spec.pairs.unwrap_or(1000);
    let est = estimate_psi(
        &field,
        &lab,
        pairs,
        spec.min_separation,
        derive_stream_seed(spec.seed, 1),
    )?;
    let e = "psi";
    let mut out = Output::default();
    out.rows
        .push(ResultRow::new(e, None, "pairs", est.sample_count() as f64));
    out.rows
        .push(ResultRow::new(e, None, "max_ratio", est.max_ratio));
    for q in [0.5, 0.9, 0.99] {
        out.rows.push(ResultRow::new(
            e,
            None,
            format!("ratio_quantile_{q}"),
            est.quantile(q),
        ));
    }
    for (bin, count) in &est.histogram {
        let lo = 1.0 + 0.1 * *bin as f64;
        out.rows.push(
            ResultRow::new(e, None, "ratio_bin_count", *count as f64)
                .note(format!("[{lo:.1}; {:.1})", lo + 0.1)),
        );
    }
    Ok(out)
}

pub fn run_clearings(spec: &ExperimentSpec) -> Result<Output> {
    let n = spec.n.unwrap_or(100);
    let scales = ScaleSet::new(n, spec.dimension, spec.vacancy_prob, spec.k2, spec.a)?;
    let margin = scales.r_large.max(scales.r_huge).max(0.0).floor() as u32;
    let field = environment_for(spec, scales.half_side() + margin)?;
    let lab = label_vacant_clusters(&field);
    let e = "clearings";
    let mut out = Output::default();
    let phi = phi_set(&field, &scales)?;
    let cube = (2 * scales.half_side() as u64 + 1).pow(spec.dimension as u32);
    out.rows.push(ResultRow::new(e, Some(n), "rho", scales.rho));
    out.rows
        .push(ResultRow::new(e, Some(n), "large_radius", scales.r_large));
    out.rows
        .push(ResultRow::new(e, Some(n), "huge_radius", scales.r_huge));
    out.rows.push(ResultRow::new(
        e,
        Some(n),
        "large_clearing_centres",
        phi.len() as f64,
    ));
    out.rows.push(ResultRow::new(
        e,
        Some(n),
        "large_clearing_fraction",
        phi.len() as f64 / cube as f64,
    ));
    if scales.r_huge < 0.0 {
        out.warnings
            .push(format!("huge-clearing radius is negative at n = {n}"));
    } else {
        let huge = huge_clearing_scan(&field, &lab, &scales)?;
        let row = ResultRow::new(
            e,
            Some(n),
            "huge_clearing_found",
            f64::from(u8::from(huge.is_some())),
        );
        out.rows.push(match huge {
            Some(c) => row.note(format!("centre {}", site_label(c.center, spec.dimension))),
            None => row,
        });
    }
    Ok(out)
}

pub fn run_dp_survival(spec: &ExperimentSpec) -> Result<Output> {
    let n = spec.n.unwrap_or(100);
    let field = environment_for(spec, horizon_box(spec, n))?;
    let lab = label_vacant_clusters(&field);
    let mut out = Output::default();
    let start = resolve_start(spec, &field, &lab, &mut out.warnings)?;
    let table = survival_probability_dp(&field, start, n, spec.boundary)?;
    let rates = rate_series_from_table(&table, spec.dimension);
    let e = "dp-survival";
    for k in 0..=n {
        out.rows.push(ResultRow::new(e, Some(k), "q", table.q(k)));
    }
    for &(k, v) in &rates.points {
        out.rows.push(ResultRow::new(e, Some(k), "rate", v));
    }
    if rates.truncated {
        out.warnings
            .push("q_n reached zero; the rate series stops there".into());
    }
    Ok(out)
}

pub fn run_constants(spec: &ExperimentSpec) -> Result<Output> {
    let c = constants(spec.dimension, spec.vacancy_prob)?;
    let n = spec.n.unwrap_or(100);
    let e = "constants";
    let mut out = Output::default();
    out.rows = vec![
        ResultRow::new(e, None, "lambda_d", c.lambda_d),
        ResultRow::new(e, None, "omega_d", c.omega_d),
        ResultRow::new(e, None, "R0", c.r0),
        ResultRow::new(e, None, "k", c.k_dp),
        ResultRow::new(e, None, "R0_squared_times_k", c.r0 * c.r0 * c.k_dp),
        ResultRow::new(e, None, "theta", spec.theta),
        ResultRow::new(e, None, "k3", spec.k3),
        ResultRow::new(e, None, "k3_limit", spec.theta * c.k_dp),
        ResultRow::new(e, Some(n), "log_alpha", spec.log_alpha(n)),
        ResultRow::new(
            e,
            None,
            "min_time",
            ScaleSet::min_time(spec.dimension, spec.k2) as f64,
        ),
    ];
    match ScaleSet::new(n, spec.dimension, spec.vacancy_prob, spec.k2, spec.a) {
        Ok(s) => {
            out.rows.push(ResultRow::new(e, Some(n), "rho", s.rho));
            out.rows
                .push(ResultRow::new(e, Some(n), "large_radius", s.r_large));
            out.rows
                .push(ResultRow::new(e, Some(n), "huge_radius", s.r_huge));
        }
        Err(err) => out.warnings.push(err.to_string()),
    }
    Ok(out)
}

pub fn run_brw_sim(spec: &ExperimentSpec) -> Result<Output> {
    let n = spec.n.unwrap_or(20);
    let replicas = spec.replicas.unwrap_or(1000);
    let field = environment_for(spec, horizon_box(spec, n))?;
    let lab = label_vacant_clusters(&field);
    let mut out = Output::default();
    let start = resolve_start(spec, &field, &lab, &mut out.warnings)?;
    let template = SimOptions::new(spec.mode, n, 0);
    let mut records = simulate_many(
        &field,
        start,
        &template,
        replicas,
        derive_stream_seed(spec.seed, 2),
    )?;
    let accounting = records.iter().filter(|r| r.accounting_holds()).count();
    if spec.condition == Conditioning::Survival {
        records.retain(|r| r.survived(n));
        if records.is_empty() {
            return Err(Error::NoAcceptance {
                horizon: n,
                replicas,
            });
        }
    }
    let s = mass_statistics(&records)?;
    let e = "brw-sim";
    let expected =
        2f64.powi(n as i32) * survival_probability_dp(&field, start, n, BoundaryMode::Exact)?.q(n);
    let radius: Welford = records
        .iter()
        .map(|r| r.max_radius[r.last_time()])
        .collect();
    out.rows = vec![
        ResultRow::new(e, Some(n), "replicas_used", records.len() as f64),
        ResultRow::new(e, Some(n), "mean_population", s.mean_population).se(s.std_error),
        ResultRow::new(e, Some(n), "expected_population", expected)
            .note("unconditioned first moment from the walk oracle"),
        ResultRow::new(e, Some(n), "survival_frequency", s.survival_frequency)
            .se(s.survival_std_error),
        ResultRow::new(e, Some(n), "log_population_over_n", s.exponent_mean)
            .se(s.exponent_std_error),
        ResultRow::new(e, Some(n), "range_radius", radius.mean()).se(radius.std_error()),
        ResultRow::new(
            e,
            Some(n),
            "accounting_fraction",
            accounting as f64 / replicas as f64,
        ),
    ];
    if s.degenerate {
        out.warnings
            .push("fewer than two records; standard errors are meaningless".into());
    }
    if accounting != replicas {
        out.failures.push("accounting identity".into());
    }
    Ok(out)
}

pub fn run_qn_check(spec: &ExperimentSpec) -> Result<Output> {
    let n = spec.n.unwrap_or(10);
    let pairs = spec.pairs.unwrap_or(100_000);
    let law = qn_pmf(n)?;
    let counts = sample_mrca_counts(n, pairs, derive_stream_seed(spec.seed, 3))?;
    let (stat, p_value) = chi_square_gof(&counts, &law.values);
    let e = "qn-check";
    let mut out = Output::default();
    for (k, (&q, &c)) in law.values.iter().zip(&counts).enumerate() {
        out.rows
            .push(ResultRow::new(e, Some(n), format!("pmf_{k}"), q));
        let freq = c as f64 / pairs as f64;
        out.rows.push(
            ResultRow::new(e, Some(n), format!("frequency_{k}"), freq)
                .se((freq * (1.0 - freq) / pairs as f64).sqrt()),
        );
    }
    out.rows
        .push(ResultRow::new(e, Some(n), "chi_square", stat));
    out.rows
        .push(ResultRow::new(e, Some(n), "p_value", p_value));
    if p_value <= 0.01 {
        out.failures
            .push(format!("pair law goodness of fit (p = {p_value})"));
    }
    if n <= PAIR_ENUMERATION_CAP {
        let equal = mrca_bruteforce(n)? == law.exact;
        out.rows.push(ResultRow::new(
            e,
            Some(n),
            "enumeration_matches",
            f64::from(u8::from(equal)),
        ));
        if !equal {
            out.failures.push("pair law enumeration".into());
        }
    }
    Ok(out)
}

pub fn run_moments(spec: &ExperimentSpec) -> Result<Output> {
    let n = spec.n.unwrap_or(3);
    let replicas = spec.replicas.unwrap_or(100_000);
    let d = spec.dimension;
    let r = spec.radius;
    let m = jn_terms(d, RadiusSpec::Constant(r), n)?;
    let pc = pair_correlation_check(d, r, n, replicas, derive_stream_seed(spec.seed, 4))?;
    let vr = variance_bound_check(d, r, n, replicas, derive_stream_seed(spec.seed, 5))?;
    let e = "moments";
    let mut out = Output::default();
    out.rows = vec![
        ResultRow::new(e, Some(n), "confined_probability", m.p[n]),
        ResultRow::new(e, Some(n), "J", m.jn),
        ResultRow::new(e, Some(n), "J_low", m.jn_low),
        ResultRow::new(e, Some(n), "J_high", m.jn_high),
        ResultRow::new(e, Some(n), "pair_prediction", m.pair_prediction()),
        ResultRow::new(e, Some(n), "pair_exact", m.joint_confinement),
        ResultRow::new(e, Some(n), "pair_empirical", pc.empirical).se(pc.std_error),
        ResultRow::new(e, Some(n), "expected_count", m.expected_count()),
        ResultRow::new(e, Some(n), "count_mean", vr.mean).se(vr.mean_std_error),
        ResultRow::new(e, Some(n), "variance_bound", m.variance_bound),
        ResultRow::new(e, Some(n), "variance_exact", m.exact_variance),
        ResultRow::new(e, Some(n), "variance_empirical", vr.variance).se(vr.variance_std_error),
    ];
    if !vr.bound_holds() {
        out.failures.push("variance bound".into());
    }
    Ok(out)
}

/// One grid point of the growth-exponent diagnostic.
#[derive(Clone, Debug, PartialEq)]
pub struct LlnPoint {
    pub n: usize,
    /// `(log n)^{2/d} log(q_n) / n` from the exact walk recursion.
    pub dp_exponent: f64,
    /// `(log n)^{2/d} (mean(log N_n)/n - log 2)` over replicas alive at `n`,
    /// with its standard error and the acceptance rate.
    pub mc: Option<(f64, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlnDiagnostic {
    pub start: Site,
    pub reference: f64,
    pub points: Vec<LlnPoint>,
    /// Every `n = 2..=n_max` of the exact series.
    pub series: Vec<(usize, f64)>,
    pub truncated: bool,
    pub warnings: Vec<String>,
}

/// Exact and Monte Carlo growth exponents on a log-spaced grid. The limit
/// `-k(d,p)` is approached only at a `(log n)^{2/d}` rate and is printed as a
/// reference, not a target.
pub fn lln_diagnostic(spec: &ExperimentSpec, field: &TrapField) -> Result<LlnDiagnostic> {
    let n_max = spec.n_max.unwrap_or(2000);
    let need = dp_memory_bytes(spec.dimension, n_max);
    if need > spec.mem_limit_mb << 20 {
        return Err(Error::Constraint(format!(
            "exact recursion to n = {n_max} needs about {} MiB, above the {} MiB limit",
            need >> 20,
            spec.mem_limit_mb
        )));
    }
    let lab = label_vacant_clusters(field);
    let mut warnings = Vec::new();
    let start = resolve_start(spec, field, &lab, &mut warnings)?;
    let table = survival_probability_dp(field, start, n_max, BoundaryMode::Exact)?;
    let rates = rate_series_from_table(&table, spec.dimension);
    let exponent = |n: usize| rates.points.iter().find(|p| p.0 == n).map(|p| p.1);
    let replicas = spec.replicas.unwrap_or(1000);
    let d = spec.dimension as f64;
    let mut points = Vec::new();
    for n in log_grid(n_max) {
        let Some(dp_exponent) = exponent(n) else {
            break;
        };
        let mc = if n <= spec.mc_max {
            let template = SimOptions::new(SimMode::CountMultinomial, n, 0);
            let records = simulate_many(
                field,
                start,
                &template,
                replicas,
                derive_stream_seed(spec.seed, 1000 + n as u64),
            )?;
            let logs: Welford = records
                .iter()
                .filter(|r| r.survived(n))
                .map(|r| (r.final_population() as f64).ln() / n as f64)
                .collect();
            if logs.count() == 0 {
                None
            } else {
                let scale = (n as f64).ln().powf(2.0 / d);
                let se = if logs.count() > 1 {
                    logs.std_error()
                } else {
                    f64::NAN
                };
                Some((
                    scale * (logs.mean() - std::f64::consts::LN_2),
                    scale * se,
                    logs.count() as f64 / replicas as f64,
                ))
            }
        } else {
            None
        };
        points.push(LlnPoint { n, dp_exponent, mc });
    }
    Ok(LlnDiagnostic {
        start,
        reference: -constants(spec.dimension, field.config().vacancy_prob)?.k_dp,
        points,
        series: rates.points,
        truncated: rates.truncated,
        warnings,
    })
}

pub fn run_lln_diagnostic(spec: &ExperimentSpec) -> Result<Output> {
    let n_max = spec.n_max.unwrap_or(2000);
    let field = environment_for(spec, horizon_box(spec, n_max))?;
    let diag = lln_diagnostic(spec, &field)?;
    let e = "lln-diagnostic";
    let mut out = Output {
        warnings: diag.warnings.clone(),
        ..Output::default()
    };
    for pt in &diag.points {
        out.rows
            .push(ResultRow::new(e, Some(pt.n), "dp_exponent", pt.dp_exponent));
        if let Some((m, se, acc)) = pt.mc {
            out.rows.push(
                ResultRow::new(e, Some(pt.n), "mc_exponent", m)
                    .se(se)
                    .note(format!("acceptance {acc}")),
            );
        }
        out.rows.push(ResultRow::new(
            e,
            Some(pt.n),
            "log_alpha",
            spec.log_alpha(pt.n),
        ));
        out.rows.push(
            ResultRow::new(e, Some(pt.n), "reference", diag.reference)
                .note("limit; not reached at these n"),
        );
    }
    if diag.truncated {
        out.warnings
            .push("q_n reached zero; series truncated".into());
    }
    Ok(out)
}

pub fn run_survival_study(spec: &ExperimentSpec) -> Result<Output> {
    let n_top = *spec.horizons.iter().max().ok_or(Error::Empty("horizons"))?;
    let replicas = spec.replicas.unwrap_or(10_000);
    let field = environment_for(spec, horizon_box(spec, n_top))?;
    let lab = label_vacant_clusters(&field);
    let mut out = Output::default();
    let start = resolve_start(spec, &field, &lab, &mut out.warnings)?;
    let e = "survival-study";
    for &n in &spec.horizons {
        let est = estimate_survival(
            &field,
            start,
            n,
            replicas,
            derive_stream_seed(spec.seed, n as u64),
            spec.resolve_at,
        )?;
        out.rows.push(
            ResultRow::new(e, Some(n), "survival_frequency", est.probability).se(est.std_error),
        );
        out.rows
            .push(ResultRow::new(e, Some(n), "survival_exact", est.exact));
    }
    Ok(out)
}

/// Whether a curve is non-decreasing up to `tolerance` combined standard errors.
pub fn monotone_within(rows: &[ScalingRow], tolerance: f64) -> bool {
    rows.windows(2).all(|w| {
        let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].probability >= w[0].probability - tolerance * se
    })
}

pub fn run_clearing_study(spec: &ExperimentSpec) -> Result<Output> {
    let rows = radius_scaling_stats(
        spec.dimension,
        spec.vacancy_prob,
        &spec.rho_values,
        spec.samples,
        spec.seed,
    )?;
    let e = "clearing-study";
    let mut out = Output::default();
    for r in &rows {
        out.rows.push(
            ResultRow::new(e, None, "clearing_probability", r.probability)
                .se(r.std_error)
                .note(format!("rho {} radius {}", r.rho, r.radius)),
        );
    }
    if !monotone_within(&rows, 2.0) {
        out.failures
            .push("clearing probability is not non-decreasing within 2 SE".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn spec(pairs: &[(&str, &str)]) -> ExperimentSpec {
        let m: BTreeMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        ExperimentSpec::from_map(&m).unwrap()
    }

    #[test]
    fn grid_is_powers_and_midpoints() {
        assert_eq!(log_grid(20), vec![2, 3, 4, 6, 8, 11, 16, 20]);
        assert_eq!(log_grid(16), vec![2, 3, 4, 6, 8, 11, 16]);
        assert!(log_grid(1).is_empty());
    }

    #[test]
    fn rows_carry_seed_hash_and_version() {
        let s = spec(&[("seed", "5")]);
        let text = render_rows(
            &s,
            &[ResultRow::new("x", Some(3), "a,b", 1.5)
                .se(0.25)
                .note("c\nd")],
        );
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row = lines.next().unwrap();
        assert_eq!(
            row,
            format!("x,5,{},{CODE_VERSION},3,a;b,1.5,0.25,c;d", s.hash_hex())
        );
    }

    #[test]
    fn trap_free_exponents_vanish() {
        let s = spec(&[("n_max", "16"), ("mc_max", "8"), ("replicas", "20")]);
        let field = TrapField::all_vacant(2, 40);
        let diag = lln_diagnostic(&s, &field).unwrap();
        assert_eq!(diag.start, Site::ORIGIN);
        for pt in &diag.points {
            assert_eq!(pt.dp_exponent, 0.0);
            if let Some((m, _, acc)) = pt.mc {
                assert!(m.abs() < 1e-12);
                assert_eq!(acc, 1.0);
            }
        }
        assert!(diag.points.iter().any(|p| p.mc.is_some()));
    }

    #[test]
    fn oversized_horizon_reports_memory() {
        let s = spec(&[("n_max", "100000"), ("mem_limit_mb", "64")]);
        let err = lln_diagnostic(&s, &TrapField::all_vacant(2, 4)).unwrap_err();
        assert!(err.to_string().contains("MiB"), "{err}");
    }

    #[test]
    fn survival_study_extremes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("free.brwt");
        crate::lattice::save_environment(&TrapField::all_vacant(2, 40), &path).unwrap();
        let p = path.to_str().unwrap();
        let free = run_survival_study(&spec(&[
            ("env", p),
            ("horizons", "5,20"),
            ("replicas", "50"),
        ]))
        .unwrap();
        for r in free
            .rows
            .iter()
            .filter(|r| r.statistic == "survival_frequency")
        {
            assert_eq!(r.value, 1.0);
        }

        let cfg = LatticeConfig::new(2, 40, 0.7, 0).unwrap();
        let enclosed = TrapField::from_fn(&cfg, |s| s != Site::ORIGIN).unwrap();
        let path = dir.path().join("enclosed.brwt");
        crate::lattice::save_environment(&enclosed, &path).unwrap();
        let p = path.to_str().unwrap();
        let out = run_survival_study(&spec(&[
            ("env", p),
            ("horizons", "1,5"),
            ("replicas", "50"),
            ("start", "0,0"),
        ]))
        .unwrap();
        for r in out
            .rows
            .iter()
            .filter(|r| r.statistic == "survival_frequency")
        {
            assert_eq!(r.value, 0.0);
        }
    }

    #[test]
    fn drivers_are_deterministic() {
        let s = spec(&[("n", "12"), ("replicas", "200"), ("L", "30")]);
        let a = render_rows(&s, &run_brw_sim(&s).unwrap().rows);
        let b = render_rows(&s, &run_brw_sim(&s).unwrap().rows);
        assert_eq!(a, b);
    }

    #[test]
    fn monotone_check_uses_combined_errors() {
        let row = |p: f64, se: f64| ScalingRow {
            rho: 1,
            radius: 1.0,
            samples: 1,
            hits: 0,
            probability: p,
            std_error: se,
        };
        assert!(monotone_within(&[row(0.5, 0.05), row(0.45, 0.05)], 2.0));
        assert!(!monotone_within(&[row(0.5, 0.01), row(0.4, 0.01)], 2.0));
    }
}
