//! Frame-level simulation: an exchange slot with true MSI followed by `T`
//! tracking slots driven by GP predictions, evaluated for several
//! beam-tracking schemes on shared trajectories.

pub mod baselines;
pub mod config;
pub mod latency;
pub mod output;
pub mod world;

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::array::{wrap_pi, ArrayGeometry, BeamAngle, ElementPattern, SteeredBeam};
use crate::beamtrack::{exhaustive_ruav, select_tuav_codeword, spas_ruav, te_aware_ruav, PartitionPlan};
use crate::channel::{self, ChannelParams, LinkState};
use crate::codebook::{Codebook, LayerId};
use crate::error::{Error, Result};
use crate::tracking::AngleEstimate;

pub use baselines::{fixed_partition_baseline, full_array_beam, upa_baseline_plan};
pub use config::{LatencyConfig, NoiseConfig, Scheme, SimConfig};
pub use latency::{latency_estimate, msi_time, Latency, SPEED_OF_LIGHT};
pub use output::{emit_outputs, summarize_outage, summarize_se, OutageRow, SeRow};
pub use world::{link_state, LinkView, SlotView, World, WorldTiming};

/// Arrays, element pattern and codebooks shared by every run of a configuration.
#[derive(Clone, Debug)]
pub struct Arrays {
    pub pattern: ElementPattern,
    pub cca_t: ArrayGeometry,
    pub cca_r: ArrayGeometry,
    pub upa_t: ArrayGeometry,
    pub upa_r: ArrayGeometry,
    pub tx_book: Codebook,
    pub rx_book: Codebook,
}

impl Arrays {
    pub fn new(c: &SimConfig) -> Result<Self> {
        let pattern = ElementPattern::new(c.delta_alpha, c.delta_beta)?;
        let cca_t = ArrayGeometry::cylindrical(c.m_t, c.n_t, c.r_cyl, c.lambda_c)?;
        let cca_r = ArrayGeometry::cylindrical(c.m_r, c.n_r, c.r_cyl, c.lambda_c)?;
        Ok(Self {
            tx_book: Codebook::build_default(&cca_t, &pattern)?,
            rx_book: Codebook::build_default(&cca_r, &pattern)?,
            upa_t: ArrayGeometry::planar(c.m_t, c.n_t, c.lambda_c)?,
            upa_r: ArrayGeometry::planar(c.m_r, c.n_r, c.lambda_c)?,
            pattern,
            cca_t,
            cca_r,
        })
    }
}

/// Metrics of one slot at one transmit power.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub scheme: Scheme,
    pub seed: u64,
    pub slot: usize,
    pub exchange: bool,
    pub power: f64,
    pub snr: Vec<f64>,
    /// SINR per link; equal to `snr` when interference is disabled.
    pub sinr: Vec<f64>,
    /// `sum log2(1 + sinr)`.
    pub sum_se: f64,
    pub min_snr: f64,
    pub layers: Vec<LayerId>,
    /// True arrival angle minus receive beam centre.
    pub residual: Vec<BeamAngle>,
    pub t_msi: f64,
    pub t_pro: f64,
}

/// Transmit beams and the receive plan chosen in one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotBeams {
    pub tx: Vec<SteeredBeam>,
    pub rx: PartitionPlan,
    pub planar: bool,
}

fn estimates(view: &SlotView) -> Result<Vec<AngleEstimate>> {
    view.links
        .iter()
        .map(|l| l.estimate.map(|e| e.aoa))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Config("scheme needs error bounds but the world has none".into()))
}

/// Beam choice of `scheme` for one slot.
pub fn plan_slot(scheme: Scheme, arrays: &Arrays, view: &SlotView) -> Result<SlotBeams> {
    let links: Vec<LinkState> = view
        .links
        .iter()
        .map(|l| if scheme == Scheme::CcaGenie { l.truth } else { l.predicted })
        .collect();
    let aods: Vec<BeamAngle> = links.iter().map(|l| l.aod).collect();
    let aoas: Vec<BeamAngle> = links.iter().map(|l| l.aoa).collect();
    let cw_tx = || -> Vec<SteeredBeam> {
        aods.iter().map(|&a| select_tuav_codeword(&arrays.tx_book, a).codeword.beam).collect()
    };
    let t_dims = (arrays.cca_t.m(), arrays.cca_t.n());
    Ok(match scheme {
        Scheme::CcaPredict | Scheme::CcaGenie | Scheme::MinBeamwidth => SlotBeams {
            tx: cw_tx(),
            rx: spas_ruav(&arrays.rx_book, &aoas)?,
            planar: false,
        },
        Scheme::TeAware => SlotBeams {
            tx: cw_tx(),
            rx: te_aware_ruav(&arrays.rx_book, &estimates(view)?)?,
            planar: false,
        },
        Scheme::Exhaustive => SlotBeams {
            tx: cw_tx(),
            rx: exhaustive_ruav(&arrays.rx_book, &estimates(view)?)?,
            planar: false,
        },
        Scheme::FixedPartition => SlotBeams {
            tx: cw_tx().iter().map(|b| full_array_beam(t_dims, b.center)).collect(),
            rx: fixed_partition_baseline(&arrays.rx_book, &aoas)?,
            planar: false,
        },
        Scheme::Upa => SlotBeams {
            tx: aods.iter().map(|&a| full_array_beam(t_dims, a)).collect(),
            rx: upa_baseline_plan(arrays.upa_r.m(), arrays.upa_r.n(), &aoas)?,
            planar: true,
        },
    })
}

/// `cross[k][i] = w_k^H H_i f_i` on the true link geometry.
pub fn cross_gains(arrays: &Arrays, ch: &ChannelParams, beams: &SlotBeams, view: &SlotView) -> Result<Vec<Vec<Complex64>>> {
    let (tg, rg) = if beams.planar { (&arrays.upa_t, &arrays.upa_r) } else { (&arrays.cca_t, &arrays.cca_r) };
    let p = &arrays.pattern;
    let tx_terms: Vec<Complex64> = beams
        .tx
        .iter()
        .zip(&view.links)
        .map(|(f, l)| Ok(ch.path_factor(l.truth.distance)? * f.response(tg, p, l.truth.aod).conj()))
        .collect::<Result<_>>()?;
    Ok(beams
        .rx
        .entries()
        .iter()
        .map(|e| {
            view.links
                .iter()
                .zip(&tx_terms)
                .map(|(l, t)| e.beam.response(rg, p, l.truth.aoa) * t)
                .collect()
        })
        .collect())
}

/// Measured local processing, seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunTiming {
    /// Mean per exchange slot, including GP refresh and error bounding.
    pub local_e: f64,
    /// Mean per tracking slot.
    pub local_t: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub scheme: Scheme,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub timing: RunTiming,
    pub latency: Latency,
}

/// Runs `scheme` over every slot of `world`.
pub fn evaluate(config: &SimConfig, arrays: &Arrays, world: &World, scheme: Scheme) -> Result<RunOutput> {
    let ch = config.channel();
    let k = config.k;
    let t_msi = msi_time(config);
    let mut records = Vec::with_capacity(world.slots.len() * config.powers.len());
    let (mut e_time, mut t_time) = (Vec::new(), Vec::new());
    for view in &world.slots {
        let t0 = Instant::now();
        let beams = plan_slot(scheme, arrays, view).map_err(|e| Error::AtSlot { slot: view.slot, source: Box::new(e) })?;
        let dt = t0.elapsed().as_secs_f64();
        if view.exchange { &mut e_time } else { &mut t_time }.push(dt);
        let cross = cross_gains(arrays, &ch, &beams, view)?;
        let layers: Vec<LayerId> = beams.rx.entries().iter().map(|e| e.layer).collect();
        let residual: Vec<BeamAngle> = beams
            .rx
            .entries()
            .iter()
            .zip(&view.links)
            .map(|(e, l)| {
                BeamAngle::new(
                    wrap_pi(l.truth.aoa.azimuth - e.beam.center.azimuth),
                    l.truth.aoa.elevation - e.beam.center.elevation,
                )
            })
            .collect();
        let d_max = view.links.iter().map(|l| l.truth.distance).fold(0.0, f64::max);
        for &p in &config.powers {
            let snr: Vec<f64> = (0..k).map(|i| channel::snr(cross[i][i], p, ch.noise_power, 1.0)).collect();
            let sinr: Vec<f64> = if config.interference {
                let powers = vec![p; k];
                let norms = vec![1.0; k];
                (0..k).map(|i| channel::sinr(i, &cross, &powers, ch.noise_power, &norms)).collect()
            } else {
                snr.clone()
            };
            records.push(MetricsRecord {
                scheme,
                seed: world.seed,
                slot: view.slot,
                exchange: view.exchange,
                power: p,
                sum_se: channel::sum_se(&sinr),
                min_snr: snr.iter().copied().fold(f64::INFINITY, f64::min),
                snr,
                sinr,
                layers: layers.clone(),
                residual: residual.clone(),
                t_msi: if view.exchange { t_msi } else { 0.0 },
                t_pro: d_max / SPEED_OF_LIGHT,
            });
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let frames = world.timing.predict.len().max(1) as f64;
    let mut local_e = mean(&e_time);
    if scheme.uses_prediction() {
        local_e += world.timing.predict.iter().sum::<f64>() / frames;
    }
    if scheme.uses_bounds() {
        local_e += world.timing.bound.iter().sum::<f64>() / frames;
    }
    let timing = RunTiming { local_e, local_t: mean(&t_time) };
    let mean_se = records.iter().map(|r| r.sum_se).sum::<f64>() / (records.len() * k) as f64;
    let d_max = records.iter().map(|r| r.t_pro).fold(0.0, f64::max) * SPEED_OF_LIGHT;
    let latency = latency_estimate(config, mean_se * config.noise.bandwidth_hz, d_max, timing.local_e, timing.local_t);
    Ok(RunOutput { scheme, seed: world.seed, records, timing, latency })
}

/// Builds the world for `seed` once and evaluates every scheme on it.
pub fn run_seed(config: &SimConfig, arrays: &Arrays, seed: u64, schemes: &[Scheme]) -> Result<Vec<RunOutput>> {
    let predict = schemes.iter().any(|s| s.uses_prediction());
    let bound = schemes.iter().any(|s| s.uses_bounds());
    let world = World::build(config, seed, predict, bound)?;
    schemes.iter().map(|&s| evaluate(config, arrays, &world, s)).collect()
}

/// All seeds of `config`, in parallel. Output is ordered by scheme (as
/// given), then seed.
pub fn run_batch(config: &SimConfig, schemes: &[Scheme]) -> Result<Vec<RunOutput>> {
    config.validate()?;
    let arrays = Arrays::new(config)?;
    let per_seed: Vec<Result<Vec<RunOutput>>> = config
        .seeds()
        .par_iter()
        .map(|&s| run_seed(config, &arrays, s, schemes))
        .collect();
    let mut out = Vec::new();
    for r in per_seed {
        out.extend(r?);
    }
    let rank = |s: Scheme| schemes.iter().position(|&x| x == s).unwrap_or(usize::MAX);
    out.sort_by_key(|o| (rank(o.scheme), o.seed));
    Ok(out)
}

/// Records of `config.scheme` for `config.seed`.
pub fn run_scenario(config: &SimConfig) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    let arrays = Arrays::new(config)?;
    Ok(run_seed(config, &arrays, config.seed, &[config.scheme])?.remove(0).records)
}
