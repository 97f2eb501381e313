use thiserror::Error;

use crate::brw::TrajectoryRecord;
use crate::lattice::Site;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("site {site} lies outside the box [-{radius}, {radius}]^d")]
    OutOfBounds { site: Site, radius: u32 },

    #[error("environment file format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("box radius {have} is too small: {what} needs L >= {need}")]
    BoxTooSmall {
        have: u32,
        need: u64,
        what: &'static str,
    },

    #[error("start site {0} is a trap")]
    StartIsTrap(Site),

    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("particle cap {cap} exceeded at time {time}")]
    ParticleCap {
        cap: u128,
        time: usize,
        partial: Box<TrajectoryRecord>,
    },

    #[error("site count {0} exceeds the range of the exact binomial sampler")]
    CountRange(u128),

    #[error("no replica survived to time {horizon} out of {replicas}; increase the replica count")]
    NoAcceptance { horizon: usize, replicas: usize },

    #[error("horizon {n} exceeds the cap {cap} for explicit free-BRW simulation")]
    HorizonCap { n: usize, cap: usize },

    #[error("J_n is infinite: p_{k} = 0 while Q^n({k}) > 0")]
    InfiniteJ { k: usize },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
