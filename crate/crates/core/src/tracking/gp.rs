//! Exact Gaussian-process regression with a squared-exponential ARD kernel
//! shared by all output columns.
//!
//! The kernel is written in correlation form: `K = s_h^2 (R + (rho + jitter) I)`
//! where `R_ij = exp(-0.5 sum_d (x_id - x_jd)^2 / l_d^2)` and `s_h^2` is the
//! signal variance of output column `h`. When fitting, each `s_h^2` is
//! profiled out in closed form, which leaves only the length-scales and the
//! noise ratio `rho` for the optimizer.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_JITTER: f64 = 1e-8;
/// Largest jitter tried when conditioning fails to factor.
const MAX_JITTER: f64 = 1e-4;
const MIN_SIGNAL_VARIANCE: f64 = 1e-300;
/// Floor on input column spreads; smaller spreads are treated as roundoff.
const MIN_INPUT_SPREAD: f64 = 1e-6;

/// Kernel hyperparameters apart from the per-output signal variances.
///
/// The correlation matrix is `R_se + b L + (rho + jitter) I` with the linear
/// part `L_ij = sum_d x_id x_jd / v_d`; `b = 0` gives a pure squared
/// exponential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub length_scales: Vec<f64>,
    /// Noise variance divided by signal variance.
    pub noise_ratio: f64,
    pub jitter: f64,
    #[serde(default)]
    pub linear_ratio: f64,
    /// Per-dimension normalizers `v_d` of the linear part.
    #[serde(default)]
    pub linear_scale: Vec<f64>,
}

impl GpHyper {
    pub fn new(length_scales: Vec<f64>, noise_ratio: f64) -> Self {
        Self {
            length_scales,
            noise_ratio,
            jitter: DEFAULT_JITTER,
            linear_ratio: 0.0,
            linear_scale: Vec::new(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.length_scales.len() != dim {
            return Err(Error::Gp(format!(
                "{} length-scales for {dim}-dimensional inputs",
                self.length_scales.len()
            )));
        }
        if self.linear_ratio > 0.0 && self.linear_scale.len() != dim {
            return Err(Error::Gp("linear kernel term without per-dimension scales".into()));
        }
        if self.length_scales.iter().any(|l| !(*l > 0.0 && l.is_finite()))
            || self.linear_scale.iter().any(|v| !(*v > 0.0 && v.is_finite()))
            || !(self.noise_ratio >= 0.0)
            || !(self.jitter >= 0.0)
            || !(self.linear_ratio >= 0.0)
        {
            return Err(Error::Gp(format!("invalid hyperparameters {self:?}")));
        }
        Ok(())
    }

    fn has_linear(&self) -> bool {
        self.linear_ratio > 0.0
    }

    /// Prior correlation between two inputs, excluding noise.
    fn correlation(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for (d, l) in self.length_scales.iter().enumerate() {
            let t = (a[d] - b[d]) / l;
            s += t * t;
        }
        let mut k = (-0.5 * s).exp();
        if self.has_linear() {
            let dot: f64 = self.linear_scale.iter().enumerate().map(|(d, v)| a[d] * b[d] / v).sum();
            k += self.linear_ratio * dot;
        }
        k
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Subtract the column means of the outputs before fitting.
    pub center: bool,
    /// One length-scale per input dimension; otherwise a single scale
    /// applied to inputs standardized by their spread.
    pub ard: bool,
    /// Add a linear term to the kernel and fit its weight.
    pub linear: bool,
    pub restarts: usize,
    pub max_iter: usize,
    pub jitter: f64,
    pub noise_ratio_bounds: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            center: true,
            ard: true,
            linear: false,
            restarts: 3,
            max_iter: 100,
            jitter: DEFAULT_JITTER,
            noise_ratio_bounds: (1e-8, 1.0),
        }
    }
}

/// Posterior at one test input, one entry per output column.
#[derive(Clone, Debug, PartialEq)]
pub struct GpPrediction {
    pub mean: Vec<f64>,
    /// Variance of the latent function.
    pub variance: Vec<f64>,
    /// Observation-noise variance to add for a noisy prediction.
    pub noise_variance: Vec<f64>,
}

impl GpPrediction {
    pub fn total_variance(&self, h: usize) -> f64 {
        self.variance[h] + self.noise_variance[h]
    }
}

/// A GP conditioned on its training set.
#[derive(Clone, Debug)]
pub struct GpModel {
    hyper: GpHyper,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    offset: DVector<f64>,
    signal_variance: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DMatrix<f64>,
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

/// Squared-exponential part and linear part (unweighted) of the training
/// correlation matrix.
fn kernel_parts(x: &DMatrix<f64>, hyper: &GpHyper) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let n = x.nrows();
    let se = DMatrix::from_fn(n, n, |i, j| {
        let mut s = 0.0;
        for (d, l) in hyper.length_scales.iter().enumerate() {
            let t = (x[(i, d)] - x[(j, d)]) / l;
            s += t * t;
        }
        (-0.5 * s).exp()
    });
    let lin = hyper.has_linear().then(|| {
        DMatrix::from_fn(n, n, |i, j| {
            hyper.linear_scale.iter().enumerate().map(|(d, v)| x[(i, d)] * x[(j, d)] / v).sum()
        })
    });
    (se, lin)
}

fn corr_matrix(x: &DMatrix<f64>, hyper: &GpHyper) -> DMatrix<f64> {
    let (mut c, lin) = kernel_parts(x, hyper);
    if let Some(l) = lin {
        c += l * hyper.linear_ratio;
    }
    for i in 0..c.nrows() {
        c[(i, i)] += hyper.noise_ratio + hyper.jitter;
    }
    c
}

fn factor(c: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(c).ok_or_else(|| {
        Error::Gp("kernel matrix is not positive definite; increase the jitter or noise ratio".into())
    })
}

fn check_data(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() < 2 {
        return Err(Error::Gp(format!("need at least 2 training pairs, got {}", x.nrows())));
    }
    if y.nrows() != x.nrows() || y.ncols() == 0 {
        return Err(Error::Gp(format!(
            "{} inputs but {}x{} outputs",
            x.nrows(),
            y.nrows(),
            y.ncols()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Gp("non-finite training data".into()));
    }
    Ok(())
}

fn column_offsets(y: &DMatrix<f64>, center: bool) -> DVector<f64> {
    if center {
        DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.mean()))
    } else {
        DVector::zeros(y.ncols())
    }
}

fn centred(y: &DMatrix<f64>, offset: &DVector<f64>) -> DMatrix<f64> {
    let mut yc = y.clone();
    for (h, mut col) in yc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-offset[h]);
    }
    yc
}

/// Profiled log marginal likelihood and its gradient with respect to
/// `(log l_1, ..., log l_d, log rho, log b)`, the last entry only when the
/// kernel has a linear part.
fn profiled_objective(x: &DMatrix<f64>, yc: &DMatrix<f64>, hyper: &GpHyper) -> Result<(f64, Vec<f64>)> {
    let (n, p) = (x.nrows() as f64, yc.ncols());
    let (se, lin) = kernel_parts(x, hyper);
    let mut c = se.clone();
    if let Some(l) = &lin {
        c += l * hyper.linear_ratio;
    }
    for i in 0..x.nrows() {
        c[(i, i)] += hyper.noise_ratio + hyper.jitter;
    }
    let chol = factor(c)?;
    let alpha = chol.solve(yc);
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let mut ll = -0.5 * p as f64 * (logdet + n * (1.0 + (2.0 * PI).ln()));
    let mut weights = Vec::with_capacity(p);
    for h in 0..p {
        let s2 = yc.column(h).dot(&alpha.column(h)) / n;
        if s2 > MIN_SIGNAL_VARIANCE {
            ll -= 0.5 * n * s2.ln();
            weights.push(1.0 / s2);
        } else {
            ll -= 0.5 * n * MIN_SIGNAL_VARIANCE.ln();
            weights.push(0.0);
        }
    }
    // dL/dtheta = 0.5 tr(M dC/dtheta) with M = sum_h a_h a_h^T / s_h^2 - p C^-1
    let mut m = chol.inverse() * -(p as f64);
    for h in 0..p {
        if weights[h] > 0.0 {
            let a = alpha.column(h);
            m.ger(weights[h], &a, &a, 1.0);
        }
    }
    let dim = hyper.length_scales.len();
    let mut grad = vec![0.0; dim + 1];
    let ls = &hyper.length_scales;
    for i in 0..x.nrows() {
        for j in 0..i {
            let w = m[(i, j)] * se[(i, j)];
            for d in 0..dim {
                let t = (x[(i, d)] - x[(j, d)]) / ls[d];
                grad[d] += w * t * t;
            }
        }
    }
    grad[dim] = 0.5 * hyper.noise_ratio * m.trace();
    if let Some(l) = &lin {
        grad.push(0.5 * hyper.linear_ratio * m.component_mul(l).sum());
    }
    Ok((ll, grad))
}

impl GpModel {
    /// Conditions on `(x, y)` with fixed kernel hyperparameters, profiling the
    /// signal variance of each output column.
    pub fn condition(x: DMatrix<f64>, y: DMatrix<f64>, hyper: GpHyper, center: bool) -> Result<Self> {
        Self::build(x, y, hyper, center, None)
    }

    /// Conditions with a fixed signal variance shared by every output.
    pub fn with_signal_variance(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        hyper: GpHyper,
        signal_variance: f64,
        center: bool,
    ) -> Result<Self> {
        if !(signal_variance >= 0.0) {
            return Err(Error::Gp(format!("signal variance {signal_variance}")));
        }
        Self::build(x, y, hyper, center, Some(signal_variance))
    }

    fn build(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        hyper: GpHyper,
        center: bool,
        s2: Option<f64>,
    ) -> Result<Self> {
        check_data(&x, &y)?;
        hyper.validate(x.ncols())?;
        let offset = column_offsets(&y, center);
        let yc = centred(&y, &offset);
        let mut hyper = hyper;
        let chol = loop {
            match factor(corr_matrix(&x, &hyper)) {
                Ok(c) => break c,
                Err(e) if hyper.jitter == 0.0 || hyper.jitter >= MAX_JITTER => return Err(e),
                Err(_) => hyper.jitter = (hyper.jitter * 100.0).min(MAX_JITTER),
            }
        };
        let alpha = chol.solve(&yc);
        let n = x.nrows() as f64;
        let signal_variance = match s2 {
            Some(v) => vec![v; y.ncols()],
            None => (0..y.ncols())
                .map(|h| (yc.column(h).dot(&alpha.column(h)) / n).max(0.0))
                .collect(),
        };
        Ok(Self {
            hyper,
            x,
            y,
            offset,
            signal_variance,
            chol,
            alpha,
        })
    }

    /// Maximizes the profiled marginal likelihood over length-scales and
    /// noise ratio by projected gradient ascent with backtracking, from
    /// `opts.restarts` deterministic starting points.
    pub fn fit(x: DMatrix<f64>, y: DMatrix<f64>, opts: &FitOptions) -> Result<Self> {
        check_data(&x, &y)?;
        let dim = x.ncols();
        let offset = column_offsets(&y, opts.center);
        let yc = centred(&y, &offset);
        let scale: Vec<f64> = (0..dim)
            .map(|d| {
                let c = x.column(d);
                let mean = c.mean();
                let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
                sd.max(MIN_INPUT_SPREAD)
            })
            .collect();
        let mut moments: Vec<f64> = (0..dim)
            .map(|d| x.column(d).iter().map(|v| v * v).sum::<f64>() / x.nrows() as f64)
            .collect();
        let floor = moments.iter().fold(MIN_INPUT_SPREAD * MIN_INPUT_SPREAD, |a, m| a.max(m * 1e-6));
        for m in &mut moments {
            *m = m.max(floor);
        }
        let free = if opts.ard { dim } else { 1 };
        let base: Vec<f64> = if opts.ard { scale.clone() } else { vec![1.0] };
        let mut lo: Vec<f64> = base.iter().map(|s| (s * 1e-2).ln()).collect();
        let mut hi: Vec<f64> = base.iter().map(|s| (s * 1e3).ln()).collect();
        lo.push(opts.noise_ratio_bounds.0.ln());
        hi.push(opts.noise_ratio_bounds.1.ln());
        if opts.linear {
            lo.push(1e-6f64.ln());
            hi.push(1e3f64.ln());
        }
        let clamp = |t: &mut Vec<f64>| {
            for (k, v) in t.iter_mut().enumerate() {
                *v = v.clamp(lo[k], hi[k]);
            }
        };
        let hyper_at = |t: &[f64]| GpHyper {
            length_scales: if opts.ard {
                t[..dim].iter().map(|v| v.exp()).collect()
            } else {
                scale.iter().map(|s| s * t[0].exp()).collect()
            },
            noise_ratio: t[free].exp(),
            jitter: opts.jitter,
            linear_ratio: if opts.linear { t[free + 1].exp() } else { 0.0 },
            linear_scale: if opts.linear { moments.clone() } else { Vec::new() },
        };
        let eval = |t: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (ll, g) = profiled_objective(&x, &yc, &hyper_at(t))?;
            if opts.ard {
                return Ok((ll, g));
            }
            let mut reduced = vec![g[..dim].iter().sum()];
            reduced.extend_from_slice(&g[dim..]);
            Ok((ll, reduced))
        };
        let starts: [(f64, f64); 5] = [(1.0, 1e-2), (0.3, 1e-4), (3.0, 1e-1), (0.1, 1e-3), (10.0, 1e-6)];
        let root_d = (dim as f64).sqrt();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for &(lf, rho0) in starts.iter().cycle().take(opts.restarts.max(1)) {
            let mut theta: Vec<f64> = base.iter().map(|s| (s * root_d * lf).ln()).collect();
            theta.push(rho0.ln());
            if opts.linear {
                theta.push(0.0);
            }
            clamp(&mut theta);
            let Ok((mut val, mut grad)) = eval(&theta) else {
                continue;
            };
            let mut step = 1.0;
            for _ in 0..opts.max_iter {
                let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if gnorm < 1e-9 || step < 1e-6 {
                    break;
                }
                let mut trial: Vec<f64> =
                    theta.iter().zip(&grad).map(|(t, g)| t + step * g / gnorm).collect();
                clamp(&mut trial);
                match eval(&trial) {
                    Ok((v, g)) if v > val => {
                        theta = trial;
                        val = v;
                        grad = g;
                        step *= 1.5;
                    }
                    _ => step *= 0.5,
                }
            }
            if best.as_ref().map_or(true, |(b, _)| val > *b) {
                best = Some((val, theta));
            }
        }
        let (_, theta) = best.ok_or_else(|| Error::Gp("no starting point gave a positive-definite kernel".into()))?;
        let hyper = hyper_at(&theta);
        Self::condition(x, y, hyper, opts.center)
    }

    /// Same hyperparameters, new training set.
    pub fn recondition(&self, x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let center = self.offset.iter().any(|v| *v != 0.0);
        Self::condition(x, y, self.hyper.clone(), center)
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn signal_variance(&self) -> &[f64] {
        &self.signal_variance
    }

    pub fn n_train(&self) -> usize {
        self.x.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.y.ncols()
    }

    /// Profiled log marginal likelihood at the current hyperparameters.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        let yc = centred(&self.y, &self.offset);
        Ok(profiled_objective(&self.x, &yc, &self.hyper)?.0)
    }

    pub fn predict(&self, x_star: &[f64]) -> Result<GpPrediction> {
        if x_star.len() != self.input_dim() {
            return Err(Error::Gp(format!(
                "test input has {} dims, model expects {}",
                x_star.len(),
                self.input_dim()
            )));
        }
        let n = self.x.nrows();
        let r = DVector::from_iterator(
            n,
            (0..n).map(|a| self.hyper.correlation(&row(&self.x, a), x_star)),
        );
        let v = self.chol.solve(&r);
        let reduction = r.dot(&v);
        let latent = (self.hyper.correlation(x_star, x_star) - reduction).max(0.0);
        let p = self.output_dim();
        let mean = (0..p).map(|h| self.offset[h] + r.dot(&self.alpha.column(h))).collect();
        let variance = self.signal_variance.iter().map(|s| s * latent).collect();
        let noise_variance = self
            .signal_variance
            .iter()
            .map(|s| s * self.hyper.noise_ratio)
            .collect();
        Ok(GpPrediction {
            mean,
            variance,
            noise_variance,
        })
    }

    pub fn dump(&self) -> GpDump {
        let mut hasher = Sha256::new();
        for v in self.x.iter().chain(self.y.iter()) {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        GpDump {
            hyper: self.hyper.clone(),
            signal_variance: self.signal_variance.clone(),
            output_offset: self.offset.iter().copied().collect(),
            n_train: self.n_train(),
            input_dim: self.input_dim(),
            output_dim: self.output_dim(),
            training_digest: digest,
        }
    }
}

/// Hyperparameters plus a digest of the training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpDump {
    pub hyper: GpHyper,
    pub signal_variance: Vec<f64>,
    pub output_offset: Vec<f64>,
    pub n_train: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// SHA-256 over the little-endian bytes of X then Y, column-major.
    pub training_digest: String,
}

/// `mean +- 3 sqrt(variance)`.
pub fn prediction_error_band(mean: f64, variance: f64) -> (f64, f64) {
    let h = 3.0 * variance.max(0.0).sqrt();
    (mean - h, mean + h)
}
