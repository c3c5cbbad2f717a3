//! Lattice geometry and the space-time Gaussian noise field.
//!
//! Noise is produced by a counter-based construction: the tuple
//! `(seed, replica, t, x_1, ..., x_d)` is absorbed into a 64-bit state through
//! a bijective mixer, two output words are squeezed from the state and turned
//! into one standard Gaussian with Box-Muller. Every variate is therefore a
//! pure function of its index, so a perturbed re-run or a differently sized
//! window sees exactly the same realization.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Exclusive bound on `|x_i|` for packed coordinates.
pub const COORD_BOUND: i64 = 1 << 31;
/// Exclusive bound on `t` for packed times.
pub const TIME_BOUND: u64 = 1 << 32;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const SQUEEZE_A: u64 = 0x5851_f42d_4c95_7f2d;
const SQUEEZE_B: u64 = 0x1405_7b7e_f767_814f;

/// A space-time site `(t, x)` of the noise field.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteCoord {
    pub t: u64,
    pub x: Vec<i64>,
}

impl SiteCoord {
    pub fn new(t: u64, x: impl Into<Vec<i64>>) -> Self {
        Self { t, x: x.into() }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.t < 1 {
            return Err(Error::InvalidTime(self.t));
        }
        if self.t >= TIME_BOUND {
            return Err(Error::CoordinateOutOfRange {
                value: self.t as i128,
                bound: TIME_BOUND as i128,
            });
        }
        if self.x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.x.len(),
            });
        }
        check_coords(&self.x)
    }
}

pub(crate) fn check_coords(x: &[i64]) -> Result<()> {
    for &xi in x {
        if xi.unsigned_abs() >= COORD_BOUND as u64 {
            return Err(Error::CoordinateOutOfRange {
                value: xi as i128,
                bound: COORD_BOUND as i128,
            });
        }
    }
    Ok(())
}

/// The offsets `A = {0, +-e_1, ..., +-e_d}` and the derived sets `B` and `B+`.
///
/// Canonical order of `A` is `0, +e_1, -e_1, +e_2, -e_2, ..., +e_d, -e_d`, so
/// `+e_i` sits at index `2i - 1` and `-e_i` at `2i` (1-based `i`). Every
/// height vector and gradient over `A` in this crate uses that layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    pub d: usize,
    pub offsets_a: Vec<Vec<i64>>,
    pub offsets_b: Vec<Vec<i64>>,
    pub offsets_b_plus: Vec<Vec<i64>>,
}

impl Neighborhood {
    /// Index of `+e_axis` (0-based axis) in the canonical `A` order.
    pub fn plus(axis: usize) -> usize {
        2 * axis + 1
    }

    /// Index of `-e_axis` (0-based axis) in the canonical `A` order.
    pub fn minus(axis: usize) -> usize {
        2 * axis + 2
    }

    pub fn size_a(&self) -> usize {
        2 * self.d + 1
    }
}

pub fn neighborhood(d: usize) -> Result<Neighborhood> {
    if d < 1 {
        return Err(Error::InvalidDimension);
    }
    let unit = |axis: usize, sign: i64| {
        let mut v = vec![0; d];
        v[axis] = sign;
        v
    };
    let mut offsets_a = vec![vec![0; d]];
    let mut offsets_b_plus = Vec::with_capacity(d);
    for axis in 0..d {
        offsets_a.push(unit(axis, 1));
        offsets_a.push(unit(axis, -1));
        offsets_b_plus.push(unit(axis, 1));
    }
    let offsets_b = offsets_a[1..].to_vec();
    Ok(Neighborhood {
        d,
        offsets_a,
        offsets_b,
        offsets_b_plus,
    })
}

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Injective in `word` for a fixed `state`, since `mix64` is a bijection.
#[inline(always)]
fn absorb(state: u64, word: u64) -> u64 {
    mix64(state.wrapping_add(GAMMA) ^ word)
}

#[inline(always)]
fn squeeze_gaussian(state: u64) -> f64 {
    let w1 = mix64(state ^ SQUEEZE_A);
    let w2 = mix64(state ^ SQUEEZE_B);
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((w1 >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (w2 >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

#[inline(always)]
fn pack_coord(x: i64) -> u64 {
    (x + COORD_BOUND) as u64
}

/// Deterministic i.i.d. standard Gaussian field `z_{t,x}` for one replica,
/// with optional sparse additive overlays.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseField {
    seed: u64,
    replica: u64,
    dim: usize,
    overlays: BTreeMap<SiteCoord, f64>,
}

impl NoiseField {
    pub fn new(seed: u64, replica: u64, dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidDimension);
        }
        Ok(Self {
            seed,
            replica,
            dim,
            overlays: BTreeMap::new(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn overlays(&self) -> &BTreeMap<SiteCoord, f64> {
        &self.overlays
    }

    /// Same seed and dimension, different replica, no overlays.
    pub fn for_replica(&self, replica: u64) -> Self {
        Self {
            seed: self.seed,
            replica,
            dim: self.dim,
            overlays: BTreeMap::new(),
        }
    }

    pub fn gaussian_at(&self, site: &SiteCoord) -> Result<f64> {
        site.validate(self.dim)?;
        Ok(self.slice(site.t).gaussian(&site.x))
    }

    /// Returns a copy with `delta` added at `site`. Overlays at the same site
    /// accumulate; an entry that returns to exactly zero is dropped.
    pub fn with_overlay(&self, site: &SiteCoord, delta: f64) -> Result<Self> {
        site.validate(self.dim)?;
        let mut out = self.clone();
        let entry = out.overlays.entry(site.clone()).or_insert(0.0);
        *entry += delta;
        if *entry == 0.0 {
            out.overlays.remove(site);
        }
        Ok(out)
    }

    /// Hash state for one time layer; the engine queries whole layers at a
    /// time and only absorbs the spatial coordinates per site.
    pub fn slice(&self, t: u64) -> NoiseSlice<'_> {
        debug_assert!((1..TIME_BOUND).contains(&t));
        let mut state = mix64(self.seed ^ 0x6a09_e667_f3bc_c908);
        state = absorb(state, self.replica);
        state = absorb(state, t);
        NoiseSlice {
            field: self,
            t,
            prefix: state,
        }
    }
}

/// Noise restricted to one time layer `t`.
pub struct NoiseSlice<'a> {
    field: &'a NoiseField,
    t: u64,
    prefix: u64,
}

impl NoiseSlice<'_> {
    /// `z_{t,x}`. Coordinates must already satisfy the packing bound.
    #[inline]
    pub fn gaussian(&self, x: &[i64]) -> f64 {
        debug_assert_eq!(x.len(), self.field.dim);
        let mut state = self.prefix;
        for &xi in x {
            debug_assert!(xi.unsigned_abs() < COORD_BOUND as u64);
            state = absorb(state, pack_coord(xi));
        }
        let z = squeeze_gaussian(state);
        if self.field.overlays.is_empty() {
            z
        } else {
            let key = SiteCoord {
                t: self.t,
                x: x.to_vec(),
            };
            z + self.field.overlays.get(&key).copied().unwrap_or(0.0)
        }
    }
}
