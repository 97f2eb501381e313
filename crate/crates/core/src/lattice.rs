//! Quenched Bernoulli trap environments on the box `[-L, L]^d`.
//!
//! Sites are stored in row-major order with every coordinate enumerated from
//! `-L` to `L` and the last coordinate varying fastest. Site `i` in that order
//! is a trap iff `site_uniform(master_seed, i) >= p`, so for a fixed seed the
//! trap set shrinks monotonically as `p` grows.

use std::fmt;
use std::fs;
use std::hash::Hasher;
use std::io::Write;
use std::path::Path;

use fnv::FnvHasher;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::site_uniform;

/// Critical site-percolation thresholds used only to flag subcritical
/// configurations. External literature values, not computed here.
pub const CRITICAL_P_2D: f64 = 0.592746;
pub const CRITICAL_P_3D: f64 = 0.3116;

pub fn critical_threshold(dimension: usize) -> Option<f64> {
    match dimension {
        2 => Some(CRITICAL_P_2D),
        3 => Some(CRITICAL_P_3D),
        _ => None,
    }
}

/// A lattice point. Unused trailing coordinates are zero (d = 2 uses the
/// first two). The derived ordering is lexicographic, which coincides with
/// the row-major storage order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site(pub [i32; 3]);

impl Site {
    pub const ORIGIN: Site = Site([0, 0, 0]);

    pub fn new2(x: i32, y: i32) -> Self {
        Site([x, y, 0])
    }

    pub fn new3(x: i32, y: i32, z: i32) -> Self {
        Site([x, y, z])
    }

    pub fn from_slice(coords: &[i32]) -> Self {
        let mut c = [0; 3];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    pub fn coords(&self, dimension: usize) -> &[i32] {
        &self.0[..dimension]
    }

    pub fn l1(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs() as u64).sum()
    }

    pub fn linf(&self) -> u32 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn norm2(&self) -> i64 {
        self.0.iter().map(|&c| c as i64 * c as i64).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    pub fn l1_distance(&self, other: &Site) -> u64 {
        (*self - *other).l1()
    }

    pub fn offset(&self, axis: usize, delta: i32) -> Site {
        let mut c = self.0;
        c[axis] += delta;
        Site(c)
    }

    /// Comma-separated coordinates, `d` of them.
    pub fn csv(&self, dimension: usize) -> String {
        self.coords(dimension)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl std::ops::Sub for Site {
    type Output = Site;
    fn sub(self, rhs: Site) -> Site {
        Site([
            self.0[0] - rhs.0[0],
            self.0[1] - rhs.0[1],
            self.0[2] - rhs.0[2],
        ])
    }
}

impl std::ops::Add for Site {
    type Output = Site;
    fn add(self, rhs: Site) -> Site {
        Site([
            self.0[0] + rhs.0[0],
            self.0[1] + rhs.0[1],
            self.0[2] + rhs.0[2],
        ])
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

/// Index arithmetic for the box `[-L, L]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxGeometry {
    dimension: usize,
    radius: u32,
    side: usize,
    strides: [usize; 3],
    len: usize,
}

impl BoxGeometry {
    pub fn new(dimension: usize, radius: u32) -> Self {
        assert!((1..=3).contains(&dimension), "dimension must be 1..=3");
        let side = 2 * radius as usize + 1;
        let mut strides = [0usize; 3];
        let mut s = 1;
        for axis in (0..dimension).rev() {
            strides[axis] = s;
            s *= side;
        }
        BoxGeometry {
            dimension,
            radius,
            side,
            strides,
            len: s,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn contains(&self, site: Site) -> bool {
        let l = self.radius as i64;
        site.0[..self.dimension]
            .iter()
            .all(|&c| (-l..=l).contains(&(c as i64)))
            && site.0[self.dimension..].iter().all(|&c| c == 0)
    }

    pub fn index(&self, site: Site) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        Some(self.index_unchecked(site))
    }

    #[inline]
    pub fn index_unchecked(&self, site: Site) -> usize {
        let l = self.radius as i64;
        (0..self.dimension)
            .map(|a| (site.0[a] as i64 + l) as usize * self.strides[a])
            .sum()
    }

    #[inline]
    pub fn site(&self, index: usize) -> Site {
        let mut c = [0i32; 3];
        let mut rem = index;
        for (a, coord) in c.iter_mut().enumerate().take(self.dimension) {
            let q = rem / self.strides[a];
            rem %= self.strides[a];
            *coord = q as i32 - self.radius as i32;
        }
        Site(c)
    }

    /// Sites in the box, in storage order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len).map(move |i| self.site(i))
    }

    /// True when `index` lies on the face `coord[axis] = ±L`.
    pub fn on_face(&self, index: usize, axis: usize, positive: bool) -> bool {
        let c = (index / self.strides[axis]) % self.side;
        if positive {
            c == self.side - 1
        } else {
            c == 0
        }
    }

    /// Nearest neighbours of `index` that lie inside the box.
    pub fn neighbors(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dimension).flat_map(move |axis| {
            let c = (index / self.strides[axis]) % self.side;
            let down = (c > 0).then(|| index - self.strides[axis]);
            let up = (c + 1 < self.side).then(|| index + self.strides[axis]);
            down.into_iter().chain(up)
        })
    }

    pub fn unit_vectors(&self) -> Vec<Site> {
        (0..self.dimension)
            .flat_map(|a| [-1, 1].map(|s| Site::ORIGIN.offset(a, s)))
            .collect()
    }
}

/// Parameters of a quenched environment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeConfig {
    pub dimension: usize,
    pub box_radius: u32,
    pub vacancy_prob: f64,
    pub master_seed: u64,
}

impl LatticeConfig {
    pub fn new(
        dimension: usize,
        box_radius: u32,
        vacancy_prob: f64,
        master_seed: u64,
    ) -> Result<Self> {
        let config = LatticeConfig {
            dimension,
            box_radius,
            vacancy_prob,
            master_seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dimension) {
            return Err(Error::Config(format!(
                "dimension must be 2 or 3, got {}",
                self.dimension
            )));
        }
        if self.box_radius < 1 {
            return Err(Error::Config("box radius must be at least 1".into()));
        }
        if !(self.vacancy_prob > 0.0 && self.vacancy_prob < 1.0) {
            return Err(Error::Config(format!(
                "vacancy probability must lie in (0, 1), got {}",
                self.vacancy_prob
            )));
        }
        Ok(())
    }

    /// Set when `p <= p_d`, i.e. no infinite vacant cluster is expected.
    pub fn subcritical_warning(&self) -> bool {
        critical_threshold(self.dimension).is_some_and(|pd| self.vacancy_prob <= pd)
    }

    pub fn geometry(&self) -> BoxGeometry {
        BoxGeometry::new(self.dimension, self.box_radius)
    }
}

/// A realisation of the trap field on the box: bit 1 = trap, bit 0 = vacant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrapField {
    config: LatticeConfig,
    geometry: BoxGeometry,
    words: Vec<u64>,
}

impl Eq for LatticeConfig {}

/// Draws the environment for `config`; see the module docs for the
/// site-to-draw mapping.
pub fn generate_environment(config: &LatticeConfig) -> Result<TrapField> {
    config.validate()?;
    let geometry = config.geometry();
    let len = geometry.len();
    let p = config.vacancy_prob;
    let seed = config.master_seed;
    let words: Vec<u64> = (0..len.div_ceil(64))
        .into_par_iter()
        .map(|w| {
            let start = w * 64;
            let end = (start + 64).min(len);
            let mut word = 0u64;
            for i in start..end {
                if site_uniform(seed, i as u64) >= p {
                    word |= 1 << (i - start);
                }
            }
            word
        })
        .collect();
    Ok(TrapField {
        config: *config,
        geometry,
        words,
    })
}

impl TrapField {
    /// Field with traps exactly where `is_trap` says. The config's `p` and
    /// seed are kept as metadata only.
    pub fn from_fn(config: &LatticeConfig, is_trap: impl Fn(Site) -> bool) -> Result<Self> {
        config.validate()?;
        let geometry = config.geometry();
        let mut field = TrapField {
            config: *config,
            geometry,
            words: vec![0; geometry.len().div_ceil(64)],
        };
        for i in 0..geometry.len() {
            if is_trap(geometry.site(i)) {
                field.set_index(i, true);
            }
        }
        Ok(field)
    }

    pub fn all_vacant(dimension: usize, box_radius: u32) -> Self {
        let config = LatticeConfig {
            dimension,
            box_radius,
            vacancy_prob: 0.5,
            master_seed: 0,
        };
        let geometry = config.geometry();
        TrapField {
            config,
            geometry,
            words: vec![0; geometry.len().div_ceil(64)],
        }
    }

    pub fn all_traps(dimension: usize, box_radius: u32) -> Self {
        let mut f = Self::all_vacant(dimension, box_radius);
        for i in 0..f.geometry.len() {
            f.set_index(i, true);
        }
        f
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    pub fn dimension(&self) -> usize {
        self.geometry.dimension()
    }

    pub fn box_radius(&self) -> u32 {
        self.geometry.radius()
    }

    /// Number of sites, `(2L+1)^d`.
    pub fn len(&self) -> usize {
        self.geometry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometry.is_empty()
    }

    pub fn is_trap(&self, site: Site) -> Result<bool> {
        let i = self.geometry.index(site).ok_or(Error::OutOfBounds {
            site,
            radius: self.box_radius(),
        })?;
        Ok(self.is_trap_index(i))
    }

    #[inline]
    pub fn is_trap_index(&self, index: usize) -> bool {
        (self.words[index / 64] >> (index % 64)) & 1 == 1
    }

    pub fn set_trap(&mut self, site: Site, trap: bool) -> Result<()> {
        let i = self.geometry.index(site).ok_or(Error::OutOfBounds {
            site,
            radius: self.box_radius(),
        })?;
        self.set_index(i, trap);
        Ok(())
    }

    fn set_index(&mut self, index: usize, trap: bool) {
        let mask = 1u64 << (index % 64);
        if trap {
            self.words[index / 64] |= mask;
        } else {
            self.words[index / 64] &= !mask;
        }
    }

    pub fn trap_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn vacant_fraction(&self) -> f64 {
        1.0 - self.trap_count() as f64 / self.len() as f64
    }

    /// Per-site vacancy as bytes (1 = vacant), in storage order.
    pub fn vacancy_mask(&self) -> Vec<u8> {
        (0..self.len())
            .map(|i| u8::from(!self.is_trap_index(i)))
            .collect()
    }

    /// Occupancy payload: bit `i` of the stream is site `i`, LSB-first within
    /// each byte.
    pub fn payload_bytes(&self) -> Vec<u8> {
        let nbytes = self.len().div_ceil(8);
        let mut out = Vec::with_capacity(nbytes);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(nbytes);
        out
    }
}

const MAGIC: &[u8; 4] = b"BRWT";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 8 + 8;

pub fn payload_checksum(payload: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(payload);
    h.finish()
}

/// Environment file layout (little-endian):
///
/// | bytes | content |
/// |-------|---------|
/// | 4 | magic `BRWT` |
/// | 2 | format version (u16) |
/// | 1 | dimension d (u8) |
/// | 4 | box radius L (u32) |
/// | 8 | vacancy probability p (f64) |
/// | 8 | master seed (u64) |
/// | ceil((2L+1)^d / 8) | occupancy bits, LSB-first, storage order |
/// | 8 | FNV-1a 64 checksum of the occupancy bytes |
pub fn encode_environment(field: &TrapField) -> Vec<u8> {
    let c = field.config();
    let payload = field.payload_bytes();
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(c.dimension as u8);
    out.extend_from_slice(&c.box_radius.to_le_bytes());
    out.extend_from_slice(&c.vacancy_prob.to_le_bytes());
    out.extend_from_slice(&c.master_seed.to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&payload_checksum(&payload).to_le_bytes());
    out
}

pub fn decode_environment(bytes: &[u8]) -> Result<TrapField> {
    let fail = |offset: usize, reason: &str| Error::Format {
        offset: offset as u64,
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail(bytes.len(), "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail(0, "bad magic bytes"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(fail(4, &format!("unsupported format version {version}")));
    }
    let dimension = bytes[6] as usize;
    let box_radius = u32::from_le_bytes(bytes[7..11].try_into().unwrap());
    let vacancy_prob = f64::from_le_bytes(bytes[11..19].try_into().unwrap());
    let master_seed = u64::from_le_bytes(bytes[19..27].try_into().unwrap());
    let config = LatticeConfig {
        dimension,
        box_radius,
        vacancy_prob,
        master_seed,
    };
    config
        .validate()
        .map_err(|e| fail(6, &format!("invalid header: {e}")))?;
    let geometry = config.geometry();
    let nbytes = geometry.len().div_ceil(8);
    let payload_end = HEADER_LEN + nbytes;
    if bytes.len() < payload_end {
        return Err(fail(bytes.len(), "truncated occupancy payload"));
    }
    if bytes.len() < payload_end + 8 {
        return Err(fail(bytes.len(), "truncated checksum"));
    }
    if bytes.len() > payload_end + 8 {
        return Err(fail(payload_end + 8, "trailing bytes after checksum"));
    }
    let payload = &bytes[HEADER_LEN..payload_end];
    let stored = u64::from_le_bytes(bytes[payload_end..payload_end + 8].try_into().unwrap());
    if stored != payload_checksum(payload) {
        return Err(fail(payload_end, "payload checksum mismatch"));
    }
    let mut words = vec![0u64; geometry.len().div_ceil(64)];
    for (i, chunk) in payload.chunks(8).enumerate() {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        words[i] = u64::from_le_bytes(buf);
    }
    let tail = geometry.len() % 64;
    if tail != 0 && words.last().is_some_and(|w| w >> tail != 0) {
        return Err(fail(payload_end - 1, "padding bits are not zero"));
    }
    Ok(TrapField {
        config,
        geometry,
        words,
    })
}

pub fn save_environment(field: &TrapField, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_environment(field))?;
    Ok(())
}

pub fn load_environment(path: &Path) -> Result<TrapField> {
    decode_environment(&fs::read(path)?)
}

/// Bitset over the sites of a box, used for target sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteMask {
    geometry: BoxGeometry,
    bits: Vec<u64>,
    count: usize,
}

impl SiteMask {
    pub fn empty(geometry: BoxGeometry) -> Self {
        SiteMask {
            geometry,
            bits: vec![0; geometry.len().div_ceil(64)],
            count: 0,
        }
    }

    pub fn from_sites(
        geometry: BoxGeometry,
        sites: impl IntoIterator<Item = Site>,
    ) -> Result<Self> {
        let mut m = Self::empty(geometry);
        for s in sites {
            let i = geometry.index(s).ok_or(Error::OutOfBounds {
                site: s,
                radius: geometry.radius(),
            })?;
            m.insert_index(i);
        }
        Ok(m)
    }

    pub fn insert_index(&mut self, index: usize) {
        let mask = 1u64 << (index % 64);
        if self.bits[index / 64] & mask == 0 {
            self.bits[index / 64] |= mask;
            self.count += 1;
        }
    }

    #[inline]
    pub fn contains_index(&self, index: usize) -> bool {
        (self.bits[index / 64] >> (index % 64)) & 1 == 1
    }

    pub fn contains(&self, site: Site) -> bool {
        self.geometry
            .index(site)
            .is_some_and(|i| self.contains_index(i))
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: usize, l: u32, p: f64, seed: u64) -> LatticeConfig {
        LatticeConfig::new(d, l, p, seed).unwrap()
    }

    #[test]
    fn geometry_roundtrip_row_major() {
        let g = BoxGeometry::new(2, 2);
        assert_eq!(g.len(), 25);
        assert_eq!(g.site(0), Site::new2(-2, -2));
        assert_eq!(g.site(1), Site::new2(-2, -1));
        assert_eq!(g.site(5), Site::new2(-1, -2));
        for i in 0..g.len() {
            assert_eq!(g.index(g.site(i)), Some(i));
        }
        let g3 = BoxGeometry::new(3, 1);
        for i in 0..g3.len() {
            assert_eq!(g3.index(g3.site(i)), Some(i));
        }
        // storage order equals lexicographic order
        let sites: Vec<_> = g3.sites().collect();
        let mut sorted = sites.clone();
        sorted.sort();
        assert_eq!(sites, sorted);
    }

    #[test]
    fn neighbors_stay_in_box() {
        let g = BoxGeometry::new(2, 1);
        let corner = g.index(Site::new2(-1, -1)).unwrap();
        let mut n: Vec<_> = g.neighbors(corner).map(|i| g.site(i)).collect();
        n.sort();
        assert_eq!(n, vec![Site::new2(-1, 0), Site::new2(0, -1)]);
        let centre = g.index(Site::ORIGIN).unwrap();
        assert_eq!(g.neighbors(centre).count(), 4);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(LatticeConfig::new(1, 3, 0.5, 0).is_err());
        assert!(LatticeConfig::new(4, 3, 0.5, 0).is_err());
        assert!(LatticeConfig::new(2, 0, 0.5, 0).is_err());
        assert!(LatticeConfig::new(2, 3, 0.0, 0).is_err());
        assert!(LatticeConfig::new(2, 3, 1.0, 0).is_err());
        assert!(LatticeConfig::new(2, 3, f64::NAN, 0).is_err());
    }

    #[test]
    fn subcritical_flag() {
        assert!(cfg(2, 3, 0.5, 0).subcritical_warning());
        assert!(!cfg(2, 3, 0.7, 0).subcritical_warning());
        assert!(!cfg(3, 3, 0.35, 0).subcritical_warning());
    }

    #[test]
    fn p_near_one_gives_no_traps() {
        for seed in 0..5 {
            let f = generate_environment(&cfg(2, 20, 1.0 - 1e-12, seed)).unwrap();
            assert_eq!(f.len(), 41 * 41);
            assert_eq!(f.trap_count(), 0);
        }
    }

    #[test]
    fn vacant_fraction_matches_p() {
        let f = generate_environment(&cfg(2, 100, 0.5, 9)).unwrap();
        let tol = 3.0 * (0.25f64 / 40401.0).sqrt();
        assert!((f.vacant_fraction() - 0.5).abs() <= tol);
    }

    #[test]
    fn generation_is_deterministic() {
        let c = cfg(3, 6, 0.4, 77);
        assert_eq!(
            generate_environment(&c).unwrap(),
            generate_environment(&c).unwrap()
        );
    }

    #[test]
    fn traps_shrink_as_p_grows() {
        let lo = generate_environment(&cfg(2, 15, 0.6, 5)).unwrap();
        let hi = generate_environment(&cfg(2, 15, 0.9, 5)).unwrap();
        for i in 0..lo.len() {
            if hi.is_trap_index(i) {
                assert!(lo.is_trap_index(i));
            }
        }
    }

    #[test]
    fn is_trap_bounds() {
        let f = TrapField::all_vacant(2, 3);
        assert!(!f.is_trap(Site::new2(3, -3)).unwrap());
        assert!(matches!(
            f.is_trap(Site::new2(4, 0)),
            Err(Error::OutOfBounds { .. })
        ));
        let t = TrapField::all_traps(2, 3);
        assert!(t.is_trap(Site::new2(1, 2)).unwrap());
    }

    #[test]
    fn encode_decode_roundtrip() {
        let f = generate_environment(&cfg(3, 4, 0.3, 11)).unwrap();
        let back = decode_environment(&encode_environment(&f)).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn truncated_file_is_format_error() {
        let bytes = encode_environment(&generate_environment(&cfg(2, 5, 0.7, 1)).unwrap());
        for cut in [3, 20, bytes.len() - 9, bytes.len() - 1] {
            match decode_environment(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset <= bytes.len() as u64),
                other => panic!("expected format error, got {other:?}"),
            }
        }
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut bytes = encode_environment(&generate_environment(&cfg(2, 5, 0.7, 1)).unwrap());
        bytes[HEADER_LEN + 2] ^= 0x10;
        match decode_environment(&bytes) {
            Err(Error::Format { reason, .. }) => assert!(reason.contains("checksum")),
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_environment(&TrapField::all_vacant(2, 2));
        bytes[0] = b'X';
        assert!(matches!(
            decode_environment(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bytes = encode_environment(&TrapField::all_vacant(2, 2));
        bytes[4] = 9;
        assert!(matches!(
            decode_environment(&bytes),
            Err(Error::Format { offset: 4, .. })
        ));
    }
}
