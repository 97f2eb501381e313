//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fnv::FnvHasher;

use crate::brw::SimMode;
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::walk::{constants, BoundaryMode};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Recognised keys, in the order they appear in the canonical form.
pub const KEYS: &[&str] = &[
    "command",
    "d",
    "L",
    "p",
    "seed",
    "n",
    "n_max",
    "replicas",
    "mode",
    "condition",
    "k2",
    "A",
    "theta",
    "k3",
    "start",
    "r",
    "pairs",
    "min_separation",
    "samples",
    "rho",
    "horizons",
    "mc_max",
    "resolve_at",
    "boundary",
    "env",
    "golden_dir",
    "mem_limit_mb",
    "scale",
    "out",
];

/// Whether Monte Carlo runs keep only replicas alive at the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conditioning {
    None,
    Survival,
}

impl FromStr for Conditioning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Conditioning::None),
            "survival" => Ok(Conditioning::Survival),
            other => Err(Error::Config(format!(
                "unknown conditioning {other:?} (expected none or survival)"
            ))),
        }
    }
}

/// Where walks and branching runs begin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartChoice {
    /// The proxy-cluster site closest to the origin.
    Auto,
    Fixed(Site),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub command: Option<String>,
    pub dimension: usize,
    /// Box radius; `None` lets each experiment pick the smallest valid box.
    pub box_radius: Option<u32>,
    pub vacancy_prob: f64,
    pub seed: u64,
    pub n: Option<usize>,
    pub n_max: Option<usize>,
    pub replicas: Option<usize>,
    pub mode: SimMode,
    pub condition: Conditioning,
    pub k2: f64,
    pub a: f64,
    pub theta: f64,
    pub k3: f64,
    pub start: StartChoice,
    pub radius: f64,
    pub pairs: Option<usize>,
    pub min_separation: u64,
    pub samples: usize,
    pub rho_values: Vec<u32>,
    pub horizons: Vec<usize>,
    pub mc_max: usize,
    pub resolve_at: u128,
    pub boundary: BoundaryMode,
    pub env: Option<PathBuf>,
    pub golden_dir: PathBuf,
    pub mem_limit_mb: u64,
    /// Multiplies Monte Carlo replica and sample counts of the battery.
    pub scale: f64,
    pub out: Option<PathBuf>,
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected key = value, got {raw:?}",
                lineno + 1
            ))
        })?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(Error::Config(format!(
                "line {}: unknown key {k:?}",
                lineno + 1
            )));
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key {k:?}",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {v:?}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_start(v: &str, dimension: usize) -> Result<StartChoice> {
    if v == "auto" {
        return Ok(StartChoice::Auto);
    }
    let coords: Vec<i32> = parse_list("start", v)?;
    if coords.len() != dimension {
        return Err(Error::Config(format!(
            "start {v:?} has {} coordinates, dimension is {dimension}",
            coords.len()
        )));
    }
    Ok(StartChoice::Fixed(Site::from_slice(&coords)))
}

fn default_golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("goldens")
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec::from_map(&BTreeMap::new()).expect("defaults are valid")
    }
}

impl ExperimentSpec {
    /// Builds a spec from parsed keys; missing keys take their defaults.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let dimension: usize = get("d").map_or(Ok(2), |v| parse("d", v))?;
        if !(2..=3).contains(&dimension) {
            return Err(Error::Config(format!("d = {dimension} not in {{2, 3}}")));
        }
        let vacancy_prob: f64 = get("p").map_or(Ok(0.7), |v| parse("p", v))?;
        let c = constants(dimension, vacancy_prob)?;
        let theta: f64 = get("theta").map_or(Ok(0.5), |v| parse("theta", v))?;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Config(format!("theta = {theta} not in (0, 1)")));
        }
        let k3_limit = theta * c.k_dp;
        let k3: f64 = get("k3").map_or(Ok(0.5 * k3_limit), |v| parse("k3", v))?;
        if !(k3 > 0.0 && k3 < k3_limit) {
            return Err(Error::Config(format!(
                "k3 = {k3} violates 0 < k3 < theta * k(d,p) = {k3_limit}"
            )));
        }
        let k2: f64 = get("k2").map_or(Ok(1.0), |v| parse("k2", v))?;
        let a: f64 = get("A").map_or(Ok(1.0), |v| parse("A", v))?;
        if !(k2 > 0.0) || !(a > 0.0) {
            return Err(Error::Config(format!(
                "k2 = {k2} and A = {a} must be positive"
            )));
        }
        let scale: f64 = get("scale").map_or(Ok(1.0), |v| parse("scale", v))?;
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Config(format!("scale = {scale} not in (0, 1]")));
        }
        let radius: f64 = get("r").map_or(Ok(1.5), |v| parse("r", v))?;
        if !(radius >= 0.0) {
            return Err(Error::Config(format!("r = {radius} must be >= 0")));
        }
        let opt = |k: &str| -> Result<Option<usize>> { get(k).map(|v| parse(k, v)).transpose() };
        let spec = ExperimentSpec {
            command: get("command").map(str::to_string),
            dimension,
            box_radius: get("L").map(|v| parse("L", v)).transpose()?,
            vacancy_prob,
            seed: get("seed").map_or(Ok(42), |v| parse("seed", v))?,
            n: opt("n")?,
            n_max: opt("n_max")?,
            replicas: opt("replicas")?,
            mode: get("mode").map_or(Ok(SimMode::CountMultinomial), str::parse)?,
            condition: get("condition").map_or(Ok(Conditioning::None), str::parse)?,
            k2,
            a,
            theta,
            k3,
            start: get("start").map_or(Ok(StartChoice::Auto), |v| parse_start(v, dimension))?,
            radius,
            pairs: opt("pairs")?,
            min_separation: get("min_separation").map_or(Ok(20), |v| parse("min_separation", v))?,
            samples: get("samples").map_or(Ok(200), |v| parse("samples", v))?,
            rho_values: get("rho").map_or(Ok(vec![50, 100, 200, 400]), |v| parse_list("rho", v))?,
            horizons: get("horizons").map_or(Ok(vec![50, 100]), |v| parse_list("horizons", v))?,
            mc_max: get("mc_max").map_or(Ok(32), |v| parse("mc_max", v))?,
            resolve_at: get("resolve_at").map_or(Ok(1024), |v| parse("resolve_at", v))?,
            boundary: get("boundary").map_or(Ok(BoundaryMode::Exact), str::parse)?,
            env: get("env").map(PathBuf::from),
            golden_dir: get("golden_dir").map_or_else(default_golden_dir, PathBuf::from),
            mem_limit_mb: get("mem_limit_mb").map_or(Ok(4096), |v| parse("mem_limit_mb", v))?,
            scale,
            out: get("out").map(PathBuf::from),
        };
        if spec.replicas == Some(0) || spec.samples == 0 {
            return Err(Error::Config(
                "replicas and samples must be positive".into(),
            ));
        }
        Ok(spec)
    }

    /// Reads an optional config file, then applies `overrides` on top.
    pub fn load(config: Option<&Path>, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let mut map = match config {
            Some(path) => parse_key_values(&std::fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_map(&map)
    }

    /// Every resolved setting except the output directory, one per line.
    pub fn canonical(&self) -> String {
        fn join<T: ToString>(xs: &[T]) -> String {
            xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        fn or_auto<T: ToString>(x: Option<T>) -> String {
            x.map_or_else(|| "auto".to_string(), |v| v.to_string())
        }
        let start = match self.start {
            StartChoice::Auto => "auto".to_string(),
            StartChoice::Fixed(s) => s.csv(self.dimension),
        };
        let fields = [
            ("command", self.command.clone().unwrap_or_default()),
            ("d", self.dimension.to_string()),
            ("L", or_auto(self.box_radius)),
            ("p", self.vacancy_prob.to_string()),
            ("seed", self.seed.to_string()),
            ("n", or_auto(self.n)),
            ("n_max", or_auto(self.n_max)),
            ("replicas", or_auto(self.replicas)),
            ("mode", format!("{:?}", self.mode)),
            ("condition", format!("{:?}", self.condition)),
            ("k2", self.k2.to_string()),
            ("A", self.a.to_string()),
            ("theta", self.theta.to_string()),
            ("k3", self.k3.to_string()),
            ("start", start),
            ("r", self.radius.to_string()),
            ("pairs", or_auto(self.pairs)),
            ("min_separation", self.min_separation.to_string()),
            ("samples", self.samples.to_string()),
            ("rho", join(&self.rho_values)),
            ("horizons", join(&self.horizons)),
            ("mc_max", self.mc_max.to_string()),
            ("resolve_at", self.resolve_at.to_string()),
            ("boundary", format!("{:?}", self.boundary)),
            ("env", or_auto(self.env.as_ref().map(|p| p.display()))),
            ("golden_dir", self.golden_dir.display().to_string()),
            ("mem_limit_mb", self.mem_limit_mb.to_string()),
            ("scale", self.scale.to_string()),
        ];
        fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// FNV-1a hash of [`canonical`](Self::canonical), as 16 hex digits.
    pub fn hash_hex(&self) -> String {
        let mut h = FnvHasher::default();
        h.write(self.canonical().as_bytes());
        format!("{:016x}", h.finish())
    }

    /// `log alpha_n = k3 n / (log n)^{2/d}`, the log of the population
    /// threshold used in the growth argument.
    pub fn log_alpha(&self, n: usize) -> f64 {
        self.k3 * n as f64 / (n as f64).ln().powf(2.0 / self.dimension as f64)
    }

    /// `count * scale`, at least `floor`.
    pub fn scaled(&self, count: usize, floor: usize) -> usize {
        ((count as f64 * self.scale).round() as usize).max(floor)
    }
}
