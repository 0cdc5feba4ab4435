//! Pathloss, Rician channel statistics and channel sampling.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{departure_angles, distance, steering_vector, Position3D, UpaGeometry};
use crate::{CMatrix, CVector};

/// Log-distance pathloss `kappa(d) = pl0 * (d / d0)^(-alpha)` on a linear scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathlossModel {
    pub pl0: f64,
    pub d0: f64,
    pub alpha: f64,
}

impl PathlossModel {
    pub fn new(pl0: f64, d0: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("pl0", pl0), ("d0", d0), ("alpha", alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("pathloss {name} must be positive, got {v}")));
            }
        }
        Ok(Self { pl0, d0, alpha })
    }

    pub fn from_db(pl0_db: f64, d0: f64, alpha: f64) -> Result<Self> {
        Self::new(db_to_linear(pl0_db), d0, alpha)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Power in dBm to Watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn pathloss_gain(model: &PathlossModel, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("pathloss distance must be positive, got {d}")));
    }
    Ok(model.pl0 * (d / model.d0).powf(-model.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicianModel {
    pub k_factor: f64,
}

impl RicianModel {
    pub fn new(k_factor: f64) -> Result<Self> {
        if !(k_factor >= 0.0 && k_factor.is_finite()) {
            return Err(Error::Domain(format!(
                "Rician factor must be finite and non-negative, got {k_factor}"
            )));
        }
        Ok(Self { k_factor })
    }

    /// Fraction of the link power carried by the LOS component.
    pub fn los_fraction(&self) -> f64 {
        self.k_factor / (1.0 + self.k_factor)
    }

    pub fn nlos_fraction(&self) -> f64 {
        1.0 / (1.0 + self.k_factor)
    }
}

/// First and second moments of `f ~ CN(mean, covariance_scale * I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStatistics {
    pub mean: CVector,
    pub covariance_scale: f64,
}

impl ChannelStatistics {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `trace(M_f + mean mean^H)`.
    pub fn second_moment_trace(&self) -> f64 {
        self.mean.norm_squared() + self.len() as f64 * self.covariance_scale
    }
}

/// Moments of a Rician link with pathloss gain `kappa` and unit-norm LOS direction.
pub fn channel_statistics(kappa: f64, rician: &RicianModel, los: &CVector) -> ChannelStatistics {
    let amp = (kappa * rician.los_fraction()).sqrt();
    ChannelStatistics {
        mean: los * Complex64::new(amp, 0.0),
        covariance_scale: kappa * rician.nlos_fraction(),
    }
}

/// Statistics of the RIS-to-receiver link at `p`.
pub fn link_statistics(
    p_ris: &Position3D,
    ris_geom: &UpaGeometry,
    p: &Position3D,
    model: &PathlossModel,
    rician: &RicianModel,
) -> Result<ChannelStatistics> {
    let angles = departure_angles(p_ris, p)?;
    let kappa = pathloss_gain(model, distance(p_ris, p))?;
    Ok(channel_statistics(kappa, rician, &steering_vector(ris_geom, &angles)))
}

/// One realization of a channel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(pub CVector);

/// Perfectly known BS-RIS matrix `H` (L rows, N columns).
#[derive(Debug, Clone, PartialEq)]
pub struct BsRisMatrix(pub CMatrix);

impl BsRisMatrix {
    pub fn ris_elements(&self) -> usize {
        self.0.nrows()
    }

    pub fn bs_antennas(&self) -> usize {
        self.0.ncols()
    }
}

/// Seeded random source with independent, reproducible substreams.
///
/// Substreams share the key derived from `seed` and differ in the ChaCha
/// stream id, so work items can draw in any order or on any thread.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    /// Substream addressed by a tuple of tags, e.g. `[purpose, trial, cell]`.
    pub fn substream(seed: u64, tags: &[u64]) -> Self {
        Self::with_stream(seed, stream_id(tags))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Standard circularly-symmetric complex Gaussian, `CN(0, 1)`.
    pub fn complex_normal(&mut self) -> Complex64 {
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn complex_normal_vector(&mut self, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| self.complex_normal())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_id(tags: &[u64]) -> u64 {
    tags.iter()
        .fold(0x5151_5151_5151_5151, |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Draw `mean + sqrt(covariance_scale) * w` with `w ~ CN(0, I)`.
pub fn sample_rician(stats: &ChannelStatistics, rng: &mut RngStream) -> ChannelVector {
    let sigma = stats.covariance_scale.sqrt();
    let l = stats.len();
    if sigma == 0.0 {
        return ChannelVector(stats.mean.clone());
    }
    ChannelVector(CVector::from_fn(l, |i, _| {
        stats.mean[i] + rng.complex_normal() * sigma
    }))
}

/// Deterministic LOS part of `H`: `sqrt(kappa K/(1+K)) a_ris a_bs^H`.
pub fn bs_ris_los(
    bs_geom: &UpaGeometry,
    ris_geom: &UpaGeometry,
    p_bs: &Position3D,
    p_ris: &Position3D,
    model: &PathlossModel,
    rician: &RicianModel,
) -> Result<(CMatrix, f64)> {
    let kappa = pathloss_gain(model, distance(p_bs, p_ris))?;
    let a_ris = steering_vector(ris_geom, &departure_angles(p_ris, p_bs)?);
    let a_bs = steering_vector(bs_geom, &departure_angles(p_bs, p_ris)?);
    let amp = Complex64::new((kappa * rician.los_fraction()).sqrt(), 0.0);
    Ok((a_ris * a_bs.adjoint() * amp, kappa))
}

/// Draw the BS-RIS matrix: LOS outer product of unit steering vectors plus
/// i.i.d. `CN(0, kappa/(1+K))` scattering.
#[allow(clippy::too_many_arguments)]
pub fn sample_bs_ris(
    bs_geom: &UpaGeometry,
    ris_geom: &UpaGeometry,
    p_bs: &Position3D,
    p_ris: &Position3D,
    model: &PathlossModel,
    rician: &RicianModel,
    rng: &mut RngStream,
) -> Result<BsRisMatrix> {
    let (los, kappa) = bs_ris_los(bs_geom, ris_geom, p_bs, p_ris, model, rician)?;
    let sigma = (kappa * rician.nlos_fraction()).sqrt();
    let (l, n) = los.shape();
    // column-major fill order keeps the draw sequence fixed for a given shape
    Ok(BsRisMatrix(CMatrix::from_fn(l, n, |i, j| {
        los[(i, j)] + rng.complex_normal() * sigma
    })))
}
