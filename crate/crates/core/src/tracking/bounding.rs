//! Monte-Carlo bounds on the departure and arrival angles of a link whose
//! end poses are uncertain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{wrap_2pi, wrap_pi, BeamAngle};
use crate::error::{Error, Result};
use crate::tracking::frames::{geometric_angles, Mount};
use crate::tracking::msi::MsiDistribution;

const CHUNK: usize = 256;

/// Mean angle with a symmetric error range in each plane.
///
/// The azimuth range is stored unwrapped around the mean, so `azimuth_range.0`
/// may be negative and `azimuth_range.1` may exceed `2 pi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleEstimate {
    pub mean: BeamAngle,
    pub azimuth_range: (f64, f64),
    pub elevation_range: (f64, f64),
    pub p_alpha: f64,
    pub p_beta: f64,
}

impl AngleEstimate {
    /// Zero-width ranges at `angle`.
    pub fn exact(angle: BeamAngle) -> Self {
        Self::symmetric(angle, 0.0, 0.0)
    }

    pub fn symmetric(mean: BeamAngle, az_half: f64, el_half: f64) -> Self {
        Self {
            mean,
            azimuth_range: (mean.azimuth - az_half, mean.azimuth + az_half),
            elevation_range: (mean.elevation - el_half, mean.elevation + el_half),
            p_alpha: 1.0,
            p_beta: 1.0,
        }
    }

    pub fn azimuth_halfwidth(&self) -> f64 {
        0.5 * (self.azimuth_range.1 - self.azimuth_range.0)
    }

    pub fn elevation_halfwidth(&self) -> f64 {
        0.5 * (self.elevation_range.1 - self.elevation_range.0)
    }

    pub fn contains(&self, angle: BeamAngle) -> bool {
        let da = wrap_pi(angle.azimuth - self.mean.azimuth).abs();
        let de = (angle.elevation - self.mean.elevation).abs();
        da <= self.azimuth_halfwidth() + 1e-12 && de <= self.elevation_halfwidth() + 1e-12
    }

    pub fn contains_azimuth(&self, azimuth: f64) -> bool {
        wrap_pi(azimuth - self.mean.azimuth).abs() <= self.azimuth_halfwidth() + 1e-12
    }

    pub fn contains_elevation(&self, elevation: f64) -> bool {
        (elevation - self.mean.elevation).abs() <= self.elevation_halfwidth() + 1e-12
    }
}

/// Estimates for both ends of one link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkEstimate {
    pub aod: AngleEstimate,
    pub aoa: AngleEstimate,
}

#[derive(Clone, Copy, Debug)]
pub struct LinkEnds<'a> {
    pub tx: &'a MsiDistribution,
    pub rx: &'a MsiDistribution,
    pub tx_mount: &'a Mount,
    pub rx_mount: &'a Mount,
}

/// Draws `count` joint pose samples and maps each to `(aod, aoa)`.
///
/// Samples are generated in chunks of 256, chunk `c` from a ChaCha8 stream
/// `c` keyed by `seed`, so the output does not depend on thread scheduling.
pub fn sample_link_angles(ends: LinkEnds<'_>, count: usize, seed: u64) -> Result<Vec<(BeamAngle, BeamAngle)>> {
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Result<Vec<_>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(count - c * CHUNK);
            (0..len)
                .map(|_| {
                    let tx = ends.tx.sample(&mut rng);
                    let rx = ends.rx.sample(&mut rng);
                    geometric_angles(&tx, &rx, ends.tx_mount, ends.rx_mount)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Mean and half-width of the centred interval holding a fraction `p` of
/// `dev`. Sorts `dev` in place.
fn centred_interval(dev: &mut [f64], p: f64) -> (f64, f64) {
    dev.sort_by(f64::total_cmp);
    let mean = dev.iter().sum::<f64>() / dev.len() as f64;
    let mut abs: Vec<f64> = dev.iter().map(|d| (d - mean).abs()).collect();
    abs.sort_by(f64::total_cmp);
    let k = ((p * abs.len() as f64).ceil() as usize).clamp(1, abs.len());
    (mean, abs[k - 1])
}

/// Builds an estimate from angle samples. Azimuth deviations are measured
/// on the circle from `reference`.
pub fn estimate_from_samples(samples: &[BeamAngle], reference: BeamAngle, p_alpha: f64, p_beta: f64) -> Result<AngleEstimate> {
    if samples.is_empty() {
        return Err(Error::Config("no angle samples".into()));
    }
    let mut az: Vec<f64> = samples.iter().map(|s| wrap_pi(s.azimuth - reference.azimuth)).collect();
    let mut el: Vec<f64> = samples.iter().map(|s| s.elevation - reference.elevation).collect();
    let (az_mean, az_half) = centred_interval(&mut az, p_alpha);
    let (el_mean, el_half) = centred_interval(&mut el, p_beta);
    let mean = BeamAngle::new(wrap_2pi(reference.azimuth + az_mean), reference.elevation + el_mean);
    Ok(AngleEstimate {
        mean,
        azimuth_range: (mean.azimuth - az_half, mean.azimuth + az_half),
        elevation_range: (mean.elevation - el_half, mean.elevation + el_half),
        p_alpha,
        p_beta,
    })
}

/// Samples both end poses `i_max` times, maps them to link angles and
/// returns centred intervals holding fractions `p_alpha` (azimuth) and
/// `p_beta` (elevation) of the samples.
pub fn bound_tracking_error<R: Rng + ?Sized>(
    ends: LinkEnds<'_>,
    i_max: usize,
    p_alpha: f64,
    p_beta: f64,
    rng: &mut R,
) -> Result<LinkEstimate> {
    if i_max < 100 {
        return Err(Error::Config(format!("i_max = {i_max} is below 100")));
    }
    if [p_alpha, p_beta].iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::Config(format!("confidence levels {p_alpha}, {p_beta}")));
    }
    let (ref_aod, ref_aoa) =
        geometric_angles(&ends.tx.mean_pose(), &ends.rx.mean_pose(), ends.tx_mount, ends.rx_mount)?;
    let samples = sample_link_angles(ends, i_max, rng.gen())?;
    let aods: Vec<BeamAngle> = samples.iter().map(|s| s.0).collect();
    let aoas: Vec<BeamAngle> = samples.iter().map(|s| s.1).collect();
    Ok(LinkEstimate {
        aod: estimate_from_samples(&aods, ref_aod, p_alpha, p_beta)?,
        aoa: estimate_from_samples(&aoas, ref_aoa, p_alpha, p_beta)?,
    })
}
