//! Seeded channel realizations for the simulation geometry.
//!
//! The AP sits at `(d_A, 0, 0)` with a half-wavelength ULA along the x-axis,
//! the IRS at `(0, d_IRS, 0)` with its elements along the y-axis, and users
//! are dropped area-uniformly on disks in the `z = 0` plane centered at
//! `(d_A, d_E, 0)` (EUs) and `(d_A, d_I, 0)` (IUs).
//!
//! Seeding: every link draws from its own ChaCha20 stream, all keyed by the
//! scenario seed. The stream id is `(kind << 32) | user_index`, so adding a
//! user never perturbs the draws of the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec, C64};
use crate::system_model::{db_to_linear, ChannelSet, SystemConfig};

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub d_a: f64,
    pub d_irs: f64,
    pub d_i: f64,
    pub d_e: f64,
    pub r_i: f64,
    pub r_e: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { d_a: 3.0, d_irs: 8.0, d_i: 100.0, d_e: 8.0, r_i: 2.0, r_e: 2.0 }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        for d in [self.d_a, self.d_irs, self.d_i, self.d_e] {
            if !(d > 0.0) {
                return Err(Error::NonPositiveDistance(d));
            }
        }
        if !(self.r_i >= 0.0) || !(self.r_e >= 0.0) {
            return Err(Error::InvalidConfig("disk radii must be >= 0".into()));
        }
        Ok(())
    }

    pub fn ap(&self) -> Point {
        [self.d_a, 0.0, 0.0]
    }

    pub fn irs(&self) -> Point {
        [0.0, self.d_irs, 0.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingConfig {
    pub wavelength: f64,
    pub d0: f64,
    pub alpha_ai: f64,
    pub alpha_iu: f64,
    pub alpha_au: f64,
    /// Linear Rician factor of the AP-IRS and IRS-user links.
    pub rician_k: f64,
}

impl Default for FadingConfig {
    fn default() -> Self {
        Self { wavelength: 0.4, d0: 1.0, alpha_ai: 2.2, alpha_iu: 2.2, alpha_au: 3.2, rician_k: db_to_linear(3.0) }
    }
}

impl FadingConfig {
    pub fn c0(&self) -> f64 {
        (self.wavelength / (4.0 * std::f64::consts::PI)).powi(2)
    }
}

pub fn path_loss(d: f64, alpha: f64, fading: &FadingConfig) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    Ok(fading.c0() * (d / fading.d0).powf(-alpha))
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub ius: Vec<Point>,
    pub eus: Vec<Point>,
}

const STREAM_PLACE_IU: u64 = 1;
const STREAM_PLACE_EU: u64 = 2;
const STREAM_F: u64 = 3;
const STREAM_HD: u64 = 4;
const STREAM_HR: u64 = 5;
const STREAM_GD: u64 = 6;
const STREAM_GR: u64 = 7;

fn stream(seed: u64, kind: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((kind << 32) | index as u64);
    rng
}

/// Area-uniform point on a disk in the `z = 0` plane.
pub fn sample_disk<R: Rng>(rng: &mut R, center: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    [center[0] + r * phi.cos(), center[1] + r * phi.sin(), 0.0]
}

pub fn place_users(geometry: &Geometry, k_i: usize, k_e: usize, seed: u64) -> Placement {
    let mut rng_i = stream(seed, STREAM_PLACE_IU, 0);
    let mut rng_e = stream(seed, STREAM_PLACE_EU, 0);
    let ci = [geometry.d_a, geometry.d_i, 0.0];
    let ce = [geometry.d_a, geometry.d_e, 0.0];
    Placement {
        ius: (0..k_i).map(|_| sample_disk(&mut rng_i, ci, geometry.r_i)).collect(),
        eus: (0..k_e).map(|_| sample_disk(&mut rng_e, ce, geometry.r_e)).collect(),
    }
}

pub fn complex_gaussian<R: Rng>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(s * re, s * im)
}

/// Half-wavelength ULA response `exp(-jπ n cos ψ)`.
pub fn ula_response(len: usize, cos_psi: f64) -> CVec {
    CVec::from_fn(len, |n, _| C64::from_polar(1.0, -std::f64::consts::PI * n as f64 * cos_psi))
}

/// Cosine between the direction `from -> to` and a unit axis.
fn direction_cosine(from: &Point, to: &Point, axis: usize) -> f64 {
    let d = distance(from, to);
    if d == 0.0 {
        0.0
    } else {
        (to[axis] - from[axis]) / d
    }
}

/// `√pl (√(K/(K+1)) LoS + √(1/(K+1)) NLoS)`; `K = ∞` gives the scaled LoS term.
pub fn rician_channel<R: Rng>(los: &CMat, pathloss: f64, k: f64, rng: &mut R) -> CMat {
    let (wl, wn) = if k.is_infinite() { (1.0, 0.0) } else { ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt()) };
    let amp = pathloss.sqrt();
    let mut out = CMat::zeros(los.nrows(), los.ncols());
    // Column-major draw order keeps results independent of the LoS content.
    for col in 0..los.ncols() {
        for row in 0..los.nrows() {
            let nlos = if wn > 0.0 { complex_gaussian(rng) } else { C64::new(0.0, 0.0) };
            out[(row, col)] = (los[(row, col)] * wl + nlos * wn) * amp;
        }
    }
    out
}

fn rician_vector<R: Rng>(los: &CVec, pathloss: f64, k: f64, rng: &mut R) -> CVec {
    let m = CMat::from_column_slice(los.len(), 1, los.as_slice());
    let out = rician_channel(&m, pathloss, k, rng);
    CVec::from_column_slice(out.as_slice())
}

/// Channels for users at known positions.
pub fn channels_for_placement(
    cfg: &SystemConfig,
    geometry: &Geometry,
    fading: &FadingConfig,
    placement: &Placement,
    seed: u64,
) -> Result<ChannelSet> {
    geometry.validate()?;
    let ap = geometry.ap();
    let irs = geometry.irs();
    let k = fading.rician_k;

    let d_ai = distance(&ap, &irs);
    let los_f = ula_response(cfg.n, direction_cosine(&irs, &ap, 1))
        * ula_response(cfg.m, direction_cosine(&ap, &irs, 0)).adjoint();
    let f = rician_channel(&los_f, path_loss(d_ai, fading.alpha_ai, fading)?, k, &mut stream(seed, STREAM_F, 0));

    let direct = |user: &Point, kind: u64, idx: usize| -> Result<CVec> {
        let pl = path_loss(distance(&ap, user), fading.alpha_au, fading)?;
        Ok(rician_vector(&CVec::zeros(cfg.m), pl, 0.0, &mut stream(seed, kind, idx)))
    };
    let reflected = |user: &Point, kind: u64, idx: usize| -> Result<CVec> {
        let pl = path_loss(distance(&irs, user), fading.alpha_iu, fading)?;
        let los = ula_response(cfg.n, direction_cosine(&irs, user, 1));
        Ok(rician_vector(&los, pl, k, &mut stream(seed, kind, idx)))
    };

    let mut h_d = Vec::with_capacity(cfg.k_i);
    let mut h_r = Vec::with_capacity(cfg.k_i);
    for (i, p) in placement.ius.iter().enumerate() {
        h_d.push(direct(p, STREAM_HD, i)?);
        h_r.push(reflected(p, STREAM_HR, i)?);
    }
    let mut g_d = Vec::with_capacity(cfg.k_e);
    let mut g_r = Vec::with_capacity(cfg.k_e);
    for (j, p) in placement.eus.iter().enumerate() {
        g_d.push(direct(p, STREAM_GD, j)?);
        g_r.push(reflected(p, STREAM_GR, j)?);
    }
    let ch = ChannelSet { f, h_d, h_r, g_d, g_r };
    ch.check(cfg)?;
    Ok(ch)
}

pub fn generate_scenario(cfg: &SystemConfig, geometry: &Geometry, fading: &FadingConfig, seed: u64) -> Result<ChannelSet> {
    let placement = place_users(geometry, cfg.k_i, cfg.k_e, seed);
    channels_for_placement(cfg, geometry, fading, &placement, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_distance_gives_c0() {
        let f = FadingConfig::default();
        assert_eq!(path_loss(1.0, 2.2, &f).unwrap(), f.c0());
        assert!(path_loss(0.0, 2.2, &f).is_err());
        assert!(path_loss(-3.0, 2.2, &f).is_err());
    }

    #[test]
    fn c0_for_default_wavelength() {
        let want = (0.4 / (4.0 * std::f64::consts::PI)).powi(2);
        assert!((FadingConfig::default().c0() - want).abs() < 1e-18);
        assert!((want - 1.0132e-3).abs() < 1e-7);
    }

    #[test]
    fn zero_radius_places_at_center() {
        let g = Geometry { r_e: 0.0, ..Geometry::default() };
        let p = place_users(&g, 0, 3, 11);
        for eu in p.eus {
            assert_eq!(eu, [g.d_a, g.d_e, 0.0]);
        }
    }

    #[test]
    fn infinite_k_is_scaled_los() {
        let los = CMat::from_fn(3, 2, |i, j| C64::from_polar(1.0, (i + 2 * j) as f64));
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let h = rician_channel(&los, 4.0, f64::INFINITY, &mut rng);
        assert!((h - los * c(2.0, 0.0)).norm() < 1e-14);
    }
}
