//! GP-based prediction of motion state information (position and attitude)
//! over the slots following an exchange.
//!
//! Each of the six components gets its own multi-output GP. A training pair
//! with reference slot `t` maps the `window` values before `t` to the values
//! at `t, ..., t + horizon`, all taken relative to the value at `t - 1`.
//! Attitude inputs are extended with velocity and acceleration terms at
//! `t - 1`. Yaw is unwrapped before windowing.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::array::wrap_pi;
use crate::error::{Error, Result};
use crate::mobility::{Attitude, UavState};
use crate::tracking::frames::Pose;
use crate::tracking::gp::{FitOptions, GpDump, GpModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsiComponent {
    X,
    Y,
    Z,
    Yaw,
    Pitch,
    Roll,
}

impl MsiComponent {
    pub const ALL: [MsiComponent; 6] = [Self::X, Self::Y, Self::Z, Self::Yaw, Self::Pitch, Self::Roll];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::X => "x",
            Self::Y => "y",
            Self::Z => "z",
            Self::Yaw => "yaw",
            Self::Pitch => "pitch",
            Self::Roll => "roll",
        }
    }

    fn is_attitude(self) -> bool {
        matches!(self, Self::Yaw | Self::Pitch | Self::Roll)
    }
}

/// Independent Gaussian marginals for `(x, y, z, yaw, pitch, roll)` at one slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsiDistribution {
    pub mean: [f64; 6],
    pub variance: [f64; 6],
}

impl MsiDistribution {
    pub fn new(mean: [f64; 6], variance: [f64; 6]) -> Result<Self> {
        if variance.iter().any(|v| !(*v >= 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Gp(format!("invalid MSI distribution {mean:?} / {variance:?}")));
        }
        Ok(Self { mean, variance })
    }

    /// Point mass at a known state.
    pub fn exact(pose: &Pose) -> Self {
        let p = pose.position;
        let a = pose.attitude;
        Self {
            mean: [p.x, p.y, p.z, a.yaw, a.pitch, a.roll],
            variance: [0.0; 6],
        }
    }

    pub fn mean_pose(&self) -> Pose {
        let m = &self.mean;
        Pose::new(
            nalgebra::Vector3::new(m[0], m[1], m[2]),
            Attitude::new(m[3], m[4], m[5]),
        )
    }

    pub fn std_dev(&self, c: MsiComponent) -> f64 {
        self.variance[c.index()].sqrt()
    }

    /// `mean +- 3 sigma` for one component.
    pub fn band(&self, c: MsiComponent) -> (f64, f64) {
        super::gp::prediction_error_band(self.mean[c.index()], self.variance[c.index()])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Pose {
        let mut v = [0.0; 6];
        for k in 0..6 {
            let sd = self.variance[k].sqrt();
            v[k] = if sd > 0.0 {
                Normal::new(self.mean[k], sd).expect("finite sd").sample(rng)
            } else {
                self.mean[k]
            };
        }
        Pose::new(nalgebra::Vector3::new(v[0], v[1], v[2]), Attitude::new(v[3], v[4], v[5]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSettings {
    /// Number of past slots in each input window.
    pub window: usize,
    /// Slots predicted beyond the reference slot.
    pub horizon: usize,
    pub train_pairs: usize,
    /// Spacing in slots between consecutive training references.
    pub stride: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub i_max: usize,
    pub p_alpha: f64,
    pub p_beta: f64,
    /// Per-dimension length-scales instead of one shared scale.
    pub ard: bool,
    /// Adds a linear term to the squared-exponential kernel.
    pub linear: bool,
    pub min_noise_ratio: f64,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self {
            window: 2,
            horizon: 50,
            train_pairs: 50,
            stride: 25,
            restarts: 3,
            max_iter: 100,
            i_max: 1000,
            p_alpha: 0.9,
            p_beta: 0.9,
            ard: false,
            linear: true,
            min_noise_ratio: 1e-4,
        }
    }
}

impl GpSettings {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.p_alpha, self.p_beta];
        if self.window < 2
            || self.train_pairs < 2
            || self.stride == 0
            || self.i_max < 100
            || probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0))
        {
            return Err(Error::Config(format!("invalid GP settings {self:?}")));
        }
        Ok(())
    }

    /// Shortest history that yields two training pairs.
    pub fn min_history(&self) -> usize {
        self.window + self.horizon + self.stride + 1
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            max_iter: self.max_iter,
            ard: self.ard,
            linear: self.linear,
            noise_ratio_bounds: (self.min_noise_ratio, 1.0),
            ..FitOptions::default()
        }
    }
}

/// Per-slot values of one component, with yaw unwrapped.
pub fn component_series(history: &[UavState], c: MsiComponent) -> Vec<f64> {
    match c {
        MsiComponent::X => history.iter().map(|s| s.position.x).collect(),
        MsiComponent::Y => history.iter().map(|s| s.position.y).collect(),
        MsiComponent::Z => history.iter().map(|s| s.position.z).collect(),
        MsiComponent::Pitch => history.iter().map(|s| s.attitude.pitch).collect(),
        MsiComponent::Roll => history.iter().map(|s| s.attitude.roll).collect(),
        MsiComponent::Yaw => {
            let mut out = Vec::with_capacity(history.len());
            let mut acc = 0.0;
            for (k, s) in history.iter().enumerate() {
                acc = if k == 0 {
                    s.attitude.yaw
                } else {
                    acc + wrap_pi(s.attitude.yaw - history[k - 1].attitude.yaw)
                };
                out.push(acc);
            }
            out
        }
    }
}

fn motion_extras(s: &UavState, c: MsiComponent) -> [f64; 2] {
    let (v, a) = (s.velocity, s.acceleration);
    let vxy = v.x.hypot(v.y);
    match c {
        MsiComponent::Pitch => [v.z, a.z],
        _ => {
            let a_lat = if vxy > 1e-9 { (v.x * a.y - v.y * a.x) / vxy } else { 0.0 };
            [vxy, a_lat]
        }
    }
}

fn input_row(series: &[f64], history: &[UavState], c: MsiComponent, t: usize, window: usize) -> Vec<f64> {
    let base = series[t - 1];
    let mut row: Vec<f64> = series[t - window..t - 1].iter().map(|v| v - base).collect();
    if c.is_attitude() {
        row.extend_from_slice(&motion_extras(&history[t - 1], c));
    }
    row
}

/// Training matrices for one component from the history available before
/// slot `history.len()`.
pub fn training_set(
    history: &[UavState],
    c: MsiComponent,
    settings: &GpSettings,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let series = component_series(history, c);
    let (w, hz) = (settings.window, settings.horizon);
    let n = history.len();
    if n < settings.min_history() {
        return Err(Error::Gp(format!(
            "history of {n} slots is shorter than the {} required",
            settings.min_history()
        )));
    }
    let last = n - 1 - hz;
    let refs: Vec<usize> = (0..settings.train_pairs)
        .map_while(|k| last.checked_sub(k * settings.stride))
        .take_while(|t| *t >= w)
        .collect();
    let rows: Vec<Vec<f64>> = refs.iter().rev().map(|&t| input_row(&series, history, c, t, w)).collect();
    let outs: Vec<Vec<f64>> = refs
        .iter()
        .rev()
        .map(|&t| (0..=hz).map(|h| series[t + h] - series[t - 1]).collect())
        .collect();
    let d = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let y = DMatrix::from_fn(outs.len(), hz + 1, |i, j| outs[i][j]);
    Ok((x, y))
}

/// Six fitted component models for one remote UAV.
#[derive(Clone, Debug)]
pub struct MsiPredictor {
    settings: GpSettings,
    models: Vec<GpModel>,
}

impl MsiPredictor {
    /// Optimizes hyperparameters for every component on `history`.
    pub fn fit(history: &[UavState], settings: &GpSettings) -> Result<Self> {
        settings.validate()?;
        let opts = settings.fit_options();
        let models = MsiComponent::ALL
            .iter()
            .map(|&c| {
                let (x, y) = training_set(history, c, settings)?;
                GpModel::fit(x, y, &opts)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            settings: settings.clone(),
            models,
        })
    }

    pub fn settings(&self) -> &GpSettings {
        &self.settings
    }

    pub fn model(&self, c: MsiComponent) -> &GpModel {
        &self.models[c.index()]
    }

    /// Refreshes the training sets from `history` with the fitted
    /// hyperparameters kept, then predicts slots `t0 ..= t0 + horizon` where
    /// `t0 = history.len()`.
    pub fn predict(&self, history: &[UavState]) -> Result<Vec<MsiDistribution>> {
        let n = history.len();
        let hz = self.settings.horizon;
        let mut mean = vec![[0.0; 6]; hz + 1];
        let mut var = vec![[0.0; 6]; hz + 1];
        for &c in &MsiComponent::ALL {
            let (x, y) = training_set(history, c, &self.settings)?;
            let model = self.models[c.index()].recondition(x, y)?;
            let series = component_series(history, c);
            let row = input_row(&series, history, c, n, self.settings.window);
            let p = model.predict(&row)?;
            let base = series[n - 1];
            for h in 0..=hz {
                let mut m = base + p.mean[h];
                if c == MsiComponent::Yaw {
                    m = wrap_pi(m);
                }
                mean[h][c.index()] = m;
                var[h][c.index()] = p.total_variance(h);
            }
        }
        mean.into_iter()
            .zip(var)
            .map(|(m, v)| MsiDistribution::new(m, v))
            .collect()
    }

    pub fn dump(&self) -> Vec<(String, GpDump)> {
        MsiComponent::ALL
            .iter()
            .map(|c| (c.name().to_string(), self.models[c.index()].dump()))
            .collect()
    }
}
