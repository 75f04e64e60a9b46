//! Scenario configuration, read from TOML.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{thermal_noise_power, ChannelParams};
use crate::error::{Error, Result};
use crate::mobility::MobilityParams;
use crate::tracking::{GpSettings, Mount};

/// Beam-tracking scheme under evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// CCA codebook, predicted angles, maximum-resolution layers with
    /// dynamic subarray partition.
    CcaPredict,
    /// As `CcaPredict` but with the true angles in every slot.
    CcaGenie,
    /// Planar arrays; the receiver is split into `K` equal row panels and
    /// every beam is steered straight at the predicted angle.
    Upa,
    /// CCA with a static equal row split at the receiver and full arrays.
    FixedPartition,
    /// Two-step beamwidth control driven by the bounded tracking error.
    TeAware,
    /// Same selection as `CcaPredict`; the reference for `TeAware`.
    MinBeamwidth,
    /// Best layer over the whole codebook for the bounded tracking error.
    Exhaustive,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::CcaPredict,
        Scheme::CcaGenie,
        Scheme::Upa,
        Scheme::FixedPartition,
        Scheme::TeAware,
        Scheme::MinBeamwidth,
        Scheme::Exhaustive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::CcaPredict => "cca-predict",
            Scheme::CcaGenie => "cca-genie",
            Scheme::Upa => "upa",
            Scheme::FixedPartition => "fixed-partition",
            Scheme::TeAware => "te-aware",
            Scheme::MinBeamwidth => "min-beamwidth",
            Scheme::Exhaustive => "exhaustive",
        }
    }

    pub fn uses_prediction(self) -> bool {
        self != Scheme::CcaGenie
    }

    pub fn uses_bounds(self) -> bool {
        matches!(self, Scheme::TeAware | Scheme::Exhaustive)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub temperature_k: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 2.16e9,
            noise_figure_db: 10.0,
            temperature_k: 290.0,
        }
    }
}

impl NoiseConfig {
    pub fn power(&self) -> f64 {
        thermal_noise_power(self.bandwidth_hz, self.noise_figure_db, self.temperature_k)
    }
}

/// Constants of the latency model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    /// Values per MSI sample.
    pub n_msi: usize,
    pub bits_per_value: usize,
    /// Rate of the low-band control link, bit/s.
    pub c_lb: f64,
    /// Data block sent over the mmWave link per slot, bits.
    pub b_data: f64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            n_msi: 6,
            bits_per_value: 4,
            c_lb: 500e3,
            b_data: 1e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Transmitter rows (z) and ring columns.
    pub m_t: usize,
    pub n_t: usize,
    /// Receiver rows (z) and ring columns.
    pub m_r: usize,
    pub n_r: usize,
    pub r_cyl: f64,
    pub lambda_c: f64,
    pub delta_alpha: f64,
    pub delta_beta: f64,
    /// Number of transmitting UAVs.
    pub k: usize,
    /// RF chains at the receiver; must exceed `k`.
    pub n_rf: usize,
    /// Transmit powers in W; every slot is evaluated at each.
    pub powers: Vec<f64>,
    pub noise: NoiseConfig,
    /// Path-loss exponent.
    pub gamma: f64,
    /// Reference amplitude gain; `lambda/(4 pi)` when absent.
    pub h0: Option<f64>,
    pub mobility: MobilityParams,
    /// Tracking slots per exchange period.
    pub t: usize,
    pub slot_duration: f64,
    pub gp: GpSettings,
    /// Slots simulated before the first exchange, used as GP history.
    pub warmup: usize,
    /// Evaluated frames, each one exchange slot followed by `t` tracking slots.
    pub frames: usize,
    pub scheme: Scheme,
    pub interference: bool,
    /// Standard deviation (rad) of extra attitude error added to every
    /// predicted yaw, pitch and roll in tracking slots. The predicted
    /// variances are widened to match.
    pub injected_error: f64,
    pub seed: u64,
    pub runs: usize,
    pub output: PathBuf,
    /// Outage thresholds in dB.
    pub thresholds_db: Vec<f64>,
    pub latency: LatencyConfig,
    pub tx_mount: Mount,
    pub rx_mount: Mount,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            m_t: 16,
            n_t: 64,
            m_r: 112,
            n_r: 64,
            r_cyl: 0.0509,
            lambda_c: 0.005,
            delta_alpha: TAU / 3.0,
            delta_beta: PI,
            k: 2,
            n_rf: 4,
            powers: vec![0.02, 0.04, 0.06, 0.08, 0.1],
            noise: NoiseConfig::default(),
            gamma: 2.0,
            h0: None,
            mobility: MobilityParams::default(),
            t: 50,
            slot_duration: 0.01,
            gp: GpSettings::default(),
            warmup: 1500,
            frames: 4,
            scheme: Scheme::CcaPredict,
            interference: false,
            injected_error: 0.0,
            seed: 1,
            runs: 1,
            output: PathBuf::from("out"),
            thresholds_db: (-2..=6).map(|i| i as f64 * 5.0).collect(),
            latency: LatencyConfig::default(),
            tx_mount: Mount::identity(),
            rx_mount: Mount::identity(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if [self.m_t, self.n_t, self.m_r, self.n_r].contains(&0) {
            return bad("array sizes must be positive".into());
        }
        let pos = [
            ("r_cyl", self.r_cyl),
            ("lambda_c", self.lambda_c),
            ("delta_alpha", self.delta_alpha),
            ("delta_beta", self.delta_beta),
            ("slot_duration", self.slot_duration),
        ];
        if let Some((name, v)) = pos.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return bad(format!("{name} = {v} must be positive"));
        }
        if self.k == 0 || self.k >= self.n_rf {
            return bad(format!("need 0 < k < n_rf, got k = {}, n_rf = {}", self.k, self.n_rf));
        }
        if self.powers.is_empty() || self.powers.iter().any(|p| !(*p > 0.0)) {
            return bad("powers must be positive".into());
        }
        if !(self.noise.power() > 0.0) || !(self.gamma >= 0.0) || self.h0.is_some_and(|h| !(h > 0.0)) {
            return bad("invalid channel constants".into());
        }
        if self.t == 0 || self.frames == 0 || self.runs == 0 {
            return bad("t, frames and runs must be positive".into());
        }
        if !(self.injected_error >= 0.0) {
            return bad(format!("injected_error = {}", self.injected_error));
        }
        if (self.mobility.dt - self.slot_duration).abs() > 1e-12 {
            return bad(format!(
                "mobility.dt = {} differs from slot_duration = {}",
                self.mobility.dt, self.slot_duration
            ));
        }
        self.mobility.validate()?;
        self.gp.validate()?;
        if self.gp.horizon + 1 < self.t {
            return bad(format!("gp.horizon = {} cannot cover t = {} slots", self.gp.horizon, self.t));
        }
        if self.warmup + 1 < self.gp.min_history() {
            return bad(format!("warmup = {} is shorter than the GP needs", self.warmup));
        }
        Ok(())
    }

    pub fn channel(&self) -> ChannelParams {
        let h0 = self.h0.unwrap_or(self.lambda_c / (4.0 * PI));
        ChannelParams {
            h0: Complex64::new(h0, 0.0),
            gamma: self.gamma,
            wavelength: self.lambda_c,
            noise_power: self.noise.power(),
        }
    }

    /// Slots generated per run: warmup plus every frame.
    pub fn total_slots(&self) -> usize {
        self.warmup + self.frames * (self.t + 1)
    }

    /// Seeds of the `runs` Monte-Carlo runs.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.seed + i).collect()
    }

    /// Returns a copy with the dotted key `path` set to `value`, where
    /// `value` is parsed as a TOML value (bare words are taken as strings).
    pub fn with_override(&self, path: &str, value: &str) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = parse_value(value);
        let mut cur = &mut root;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let table = cur
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("'{path}' does not name a table entry")))?;
            if i + 1 == keys.len() {
                let v = match (table.get(*key), &parsed) {
                    (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
                    (None, toml::Value::Integer(i)) if *key == "h0" => toml::Value::Float(*i as f64),
                    (None, _) if *key != "h0" => {
                        return Err(Error::Config(format!("unknown parameter '{path}'")));
                    }
                    _ => parsed.clone(),
                };
                table.insert((*key).to_string(), v);
                break;
            }
            cur = table
                .get_mut(*key)
                .ok_or_else(|| Error::Config(format!("unknown parameter '{path}'")))?;
        }
        let out: Self = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        out.validate()?;
        Ok(out)
    }
}

fn parse_value(s: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {s}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}
