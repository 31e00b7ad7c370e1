//! Modal directional patterns and pre-computed pattern dictionaries.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sh::{coeff_count, i_pow, order_block, sh_vector_into, Convention, Direction};

/// Largest order supported by dictionaries and the analysis path.
pub const MAX_ORDER: usize = 8;

/// Norm shared by every pattern of order `order`: `sqrt(4 pi) (N + 1)`.
pub fn mdp_norm(order: usize) -> f64 {
    (4.0 * PI).sqrt() * (order + 1) as f64
}

/// Source-independent SH coefficients `4 pi i^n conj(Y_nm(dir))` of a far-field
/// source, in flat (ACN) order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalDirectionalPattern {
    order: usize,
    coeffs: Vec<Complex64>,
}

impl ModalDirectionalPattern {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

pub fn mdp(dir: Direction, order: usize) -> ModalDirectionalPattern {
    mdp_with(dir, order, Convention::default())
}

pub fn mdp_with(dir: Direction, order: usize, conv: Convention) -> ModalDirectionalPattern {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); coeff_count(order)];
    mdp_into(dir, order, conv, &mut coeffs);
    ModalDirectionalPattern { order, coeffs }
}

fn mdp_into(dir: Direction, order: usize, conv: Convention, out: &mut [Complex64]) {
    sh_vector_into(dir, order, conv, out);
    for n in 0..=order {
        let scale = i_pow(n) * (4.0 * PI);
        for c in &mut out[order_block(n)] {
            *c = scale * c.conj();
        }
    }
}

/// Angular sampling of a dictionary, in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub elev_step_deg: f64,
    pub azim_step_deg: f64,
}

impl GridSpec {
    pub fn new(elev_step_deg: f64, azim_step_deg: f64) -> Result<Self> {
        divisions(elev_step_deg, 180.0, "elevation")?;
        divisions(azim_step_deg, 360.0, "azimuth")?;
        Ok(Self { elev_step_deg, azim_step_deg })
    }

    /// Length of the diagonal of one grid cell, in degrees.
    pub fn cell_diagonal_deg(&self) -> f64 {
        self.elev_step_deg.hypot(self.azim_step_deg)
    }

    /// Grid directions: north pole, interior rings with ascending azimuth,
    /// south pole.
    pub fn directions(&self) -> Vec<Direction> {
        let rings = divisions(self.elev_step_deg, 180.0, "elevation").unwrap();
        let per_ring = divisions(self.azim_step_deg, 360.0, "azimuth").unwrap();
        let mut out = Vec::with_capacity((rings - 1) * per_ring + 2);
        out.push(Direction::new(0.0, 0.0).unwrap());
        for r in 1..rings {
            let theta = (r as f64 * self.elev_step_deg).to_radians();
            for a in 0..per_ring {
                let phi = (a as f64 * self.azim_step_deg).to_radians();
                out.push(Direction::new(theta, phi).unwrap());
            }
        }
        out.push(Direction::new(PI, 0.0).unwrap());
        out
    }
}

fn divisions(step: f64, span: f64, what: &str) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() || step > span {
        return Err(Error::config(format!("{what} step {step} deg must lie in (0, {span}]")));
    }
    let count = (span / step).round();
    if (count * step - span).abs() > 1e-9 {
        return Err(Error::config(format!("{what} step {step} deg does not divide {span} deg")));
    }
    Ok(count as usize)
}

/// Immutable table of patterns over a direction grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpDictionary {
    order: usize,
    convention: Convention,
    grid: GridSpec,
    directions: Vec<Direction>,
    // row-major: entry i occupies [i*C, (i+1)*C)
    patterns: Vec<Complex64>,
}

/// Builds the dictionary for the default convention.
pub fn build_dictionary(elev_step_deg: f64, azim_step_deg: f64, order: usize) -> Result<MdpDictionary> {
    MdpDictionary::build(GridSpec::new(elev_step_deg, azim_step_deg)?, order, Convention::default())
}

impl MdpDictionary {
    pub fn build(grid: GridSpec, order: usize, convention: Convention) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::config(format!("order {order} exceeds the supported maximum {MAX_ORDER}")));
        }
        let directions = grid.directions();
        let c = coeff_count(order);
        let mut patterns = vec![Complex64::new(0.0, 0.0); directions.len() * c];
        for (dir, row) in directions.iter().zip(patterns.chunks_exact_mut(c)) {
            mdp_into(*dir, order, convention, row);
        }
        Ok(Self { order, convention, grid, directions, patterns })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn coeff_count(&self) -> usize {
        coeff_count(self.order)
    }

    pub fn direction(&self, i: usize) -> Direction {
        self.directions[i]
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn pattern(&self, i: usize) -> &[Complex64] {
        let c = self.coeff_count();
        &self.patterns[i * c..(i + 1) * c]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Direction, &[Complex64])> + '_ {
        self.directions.iter().copied().zip(self.patterns.chunks_exact(self.coeff_count()))
    }

    /// Index of the grid direction with the largest dot product with `dir`
    /// (lowest index on ties).
    pub fn nearest_direction(&self, dir: Direction) -> usize {
        let v = dir.unit_vector();
        let mut best = (0, f64::NEG_INFINITY);
        for (i, d) in self.directions.iter().enumerate() {
            let dot = d.unit_vector().dot(&v);
            if dot > best.1 {
                best = (i, dot);
            }
        }
        best.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = self.coeff_count();
        let tag = self.convention.tag().as_bytes();
        let mut out = Vec::with_capacity(64 + self.len() * (16 + 16 * c));
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.order as u32).to_le_bytes());
        out.extend_from_slice(&self.grid.elev_step_deg.to_le_bytes());
        out.extend_from_slice(&self.grid.azim_step_deg.to_le_bytes());
        out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
        out.extend_from_slice(tag);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (dir, row) in self.iter() {
            out.extend_from_slice(&dir.theta().to_le_bytes());
            out.extend_from_slice(&dir.phi().to_le_bytes());
            for z in row {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        out
    }

    /// Parses a cache image, rejecting it unless it was written with `expected`.
    pub fn from_bytes(bytes: &[u8], expected: Convention) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(CACHE_MAGIC.len())? != CACHE_MAGIC {
            return Err(Error::config("not a dictionary cache file (bad magic)"));
        }
        let version = r.u32()?;
        if version != CACHE_VERSION {
            return Err(Error::config(format!("unsupported dictionary cache version {version}")));
        }
        let order = r.u32()? as usize;
        if order > MAX_ORDER {
            return Err(Error::config(format!("cached order {order} exceeds {MAX_ORDER}")));
        }
        let grid = GridSpec::new(r.f64()?, r.f64()?)?;
        let tag_len = r.u32()? as usize;
        let tag = std::str::from_utf8(r.take(tag_len)?)
            .map_err(|_| Error::config("dictionary convention tag is not UTF-8"))?
            .to_owned();
        let convention = Convention::from_tag(&tag)
            .ok_or_else(|| Error::config(format!("unknown convention tag '{tag}'")))?;
        if convention != expected {
            return Err(Error::config(format!(
                "dictionary convention '{tag}' does not match expected '{}'",
                expected.tag()
            )));
        }
        let count = r.u64()? as usize;
        let expected_count = grid.directions().len();
        if count != expected_count {
            return Err(Error::config(format!("cache holds {count} entries, grid implies {expected_count}")));
        }
        let c = coeff_count(order);
        let mut directions = Vec::with_capacity(count);
        let mut patterns = Vec::with_capacity(count * c);
        let norm = mdp_norm(order);
        for i in 0..count {
            directions.push(Direction::new(r.f64()?, r.f64()?)?);
            let mut sq = 0.0;
            for _ in 0..c {
                let z = Complex64::new(r.f64()?, r.f64()?);
                sq += z.norm_sqr();
                patterns.push(z);
            }
            if (sq.sqrt() - norm).abs() > 1e-9 {
                return Err(Error::Numeric(format!("cached entry {i} violates the pattern norm")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::config("trailing bytes after dictionary entries"));
        }
        Ok(Self { order, convention, grid, directions, patterns })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, expected: Convention) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, expected)
    }

    /// SHA-256 of the cache image, hex encoded.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

const CACHE_MAGIC: &[u8; 12] = b"SHDLRA-DICT\0";
const CACHE_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::config("dictionary cache file is truncated")),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
