//! Line-of-sight channel between sectored arrays and the link metrics built on it.
//!
//! The channel is rank one, `H = g (Lr o ar)(Lt o at)^H` with
//! `g = h0 D^(-gamma/2)`, so `w^H H f` is evaluated as a product of two inner
//! products and `H` is never formed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{steering_vector, ArrayGeometry, Awv, BeamAngle, ElementPattern, SteeredBeam};
use crate::error::{Error, Result};

const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub h0: Complex64,
    pub gamma: f64,
    pub wavelength: f64,
    pub noise_power: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 || !(self.noise_power > 0.0) || !(self.wavelength > 0.0) {
            return Err(Error::Config(format!("invalid channel parameters {self:?}")));
        }
        Ok(())
    }

    /// Amplitude path factor `h0 D^(-gamma/2)`.
    pub fn path_factor(&self, distance: f64) -> Result<Complex64> {
        if !(distance > 0.0) {
            return Err(Error::NonPositiveDistance(distance));
        }
        Ok(self.h0 * distance.powf(-self.gamma / 2.0))
    }
}

/// Thermal noise power `k T B F` in watts.
pub fn thermal_noise_power(bandwidth_hz: f64, noise_figure_db: f64, temperature_k: f64) -> f64 {
    BOLTZMANN * temperature_k * bandwidth_hz * 10f64.powf(noise_figure_db / 10.0)
}

/// Geometry of one link: distance plus departure and arrival angles in the
/// respective array frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub distance: f64,
    pub aod: BeamAngle,
    pub aoa: BeamAngle,
}

/// An array together with its element pattern.
#[derive(Clone, Copy, Debug)]
pub struct ArraySide<'a> {
    pub geom: &'a ArrayGeometry,
    pub pattern: &'a ElementPattern,
}

impl<'a> ArraySide<'a> {
    pub fn new(geom: &'a ArrayGeometry, pattern: &'a ElementPattern) -> Self {
        Self { geom, pattern }
    }

    /// `Lambda o a(angle)` as a dense vector.
    pub fn patterned_steering(&self, angle: BeamAngle) -> Vec<Complex64> {
        let a = steering_vector(self.geom, angle);
        let n = self.geom.n();
        let el = self.pattern.elevation_active(angle.elevation);
        a.into_iter()
            .enumerate()
            .map(|(idx, v)| {
                let col = idx % n + 1;
                if el && self.pattern.azimuth_active(self.geom.column_normal(col), angle.azimuth) {
                    v
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }
}

/// `w^H H f` for dense weight vectors.
pub fn effective_gain(
    link: &LinkState,
    params: &ChannelParams,
    tx: ArraySide<'_>,
    rx: ArraySide<'_>,
    f: &Awv,
    w: &Awv,
) -> Result<Complex64> {
    let g = params.path_factor(link.distance)?;
    let ar = rx.patterned_steering(link.aoa);
    let at = tx.patterned_steering(link.aod);
    let rx_term: Complex64 = w.entries().iter().zip(&ar).map(|(w, a)| w.conj() * a).sum();
    let tx_term: Complex64 = at.iter().zip(f.entries()).map(|(a, f)| a.conj() * f).sum();
    Ok(g * rx_term * tx_term)
}

/// `w^H H f` for steered beams, evaluated in separable form.
pub fn effective_gain_beams(
    link: &LinkState,
    params: &ChannelParams,
    tx: ArraySide<'_>,
    rx: ArraySide<'_>,
    f: &SteeredBeam,
    w: &SteeredBeam,
) -> Result<Complex64> {
    let g = params.path_factor(link.distance)?;
    let rx_term = w.response(rx.geom, rx.pattern, link.aoa);
    let tx_term = f.response(tx.geom, tx.pattern, link.aod).conj();
    Ok(g * rx_term * tx_term)
}

/// Linear SINR of link `k`.
///
/// `cross[k][i]` is `w_k^H H_i f_i`, the gain of transmitter `i` through the
/// combiner of link `k`; `w_norm2[k]` is `w_k^H w_k`.
pub fn sinr(
    k: usize,
    cross: &[Vec<Complex64>],
    powers: &[f64],
    noise_power: f64,
    w_norm2: &[f64],
) -> f64 {
    let signal = powers[k] * cross[k][k].norm_sqr();
    if signal == 0.0 {
        return 0.0;
    }
    let interference: f64 = cross[k]
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(i, c)| powers[i] * c.norm_sqr())
        .sum();
    signal / (interference + noise_power * w_norm2[k])
}

/// Linear SNR of one link with gain `c = w^H H f`.
pub fn snr(c: Complex64, power: f64, noise_power: f64, w_norm2: f64) -> f64 {
    power * c.norm_sqr() / (noise_power * w_norm2)
}

/// `sum log2(1 + x)` in bits/s/Hz.
pub fn sum_se(values: &[f64]) -> f64 {
    values.iter().map(|v| (1.0 + v).log2()).sum()
}

/// Fraction of samples strictly below `threshold`.
pub fn outage_probability(min_snr: &[f64], threshold: f64) -> f64 {
    if min_snr.is_empty() {
        return 0.0;
    }
    min_snr.iter().filter(|&&s| s < threshold).count() as f64 / min_snr.len() as f64
}
