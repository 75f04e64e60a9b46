//! Everything about one Monte-Carlo run that does not depend on the scheme:
//! trajectories, true link geometry, GP predictions and error bounds.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::LinkState;
use crate::error::{Error, Result};
use crate::mobility::{generate_formation, Trajectory};
use crate::tracking::{
    bound_tracking_error, geometric_angles, AngleEstimate, LinkEnds, LinkEstimate, Mount, MsiDistribution,
    MsiPredictor, Pose,
};

use super::config::SimConfig;

const STREAM_INJECT: u64 = 1;
const STREAM_BOUND: u64 = 2;

/// Distance and angles of the link from `tx` to `rx`.
pub fn link_state(tx: &Pose, rx: &Pose, tx_mount: &Mount, rx_mount: &Mount) -> Result<LinkState> {
    let (aod, aoa) = geometric_angles(tx, rx, tx_mount, rx_mount)?;
    Ok(LinkState {
        distance: (rx.position - tx.position).norm(),
        aod,
        aoa,
    })
}

/// One link as seen in one slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkView {
    pub truth: LinkState,
    /// Geometry of the predicted mean poses; equals `truth` in exchange slots.
    pub predicted: LinkState,
    /// Bounded angle ranges, present when the world was built with bounds.
    pub estimate: Option<LinkEstimate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotView {
    /// Absolute slot index in the trajectories.
    pub slot: usize,
    pub exchange: bool,
    /// One entry per transmitting UAV.
    pub links: Vec<LinkView>,
}

/// Wall-clock cost of the scheme-independent work, seconds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorldTiming {
    pub fit: f64,
    /// GP refresh and prediction, per frame.
    pub predict: Vec<f64>,
    /// Error bounding for all tracking slots of a frame, per frame.
    pub bound: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct World {
    pub seed: u64,
    /// Leader (receiver) first, then the transmitters.
    pub trajectories: Vec<Trajectory>,
    pub slots: Vec<SlotView>,
    pub timing: WorldTiming,
    pub has_bounds: bool,
}

impl World {
    /// Simulates the formation and, when asked, predicts every tracking slot
    /// and bounds its angle errors.
    pub fn build(config: &SimConfig, seed: u64, predict: bool, bound: bool) -> Result<Self> {
        config.validate()?;
        let traj = generate_formation(&config.mobility, config.k, config.total_slots(), seed)?;
        Self::from_trajectories(config, seed, traj, predict, bound)
    }

    pub fn from_trajectories(
        config: &SimConfig,
        seed: u64,
        traj: Vec<Trajectory>,
        predict: bool,
        bound: bool,
    ) -> Result<Self> {
        let predict = predict || bound;
        if traj.len() != config.k + 1 || traj.iter().any(|t| t.len() < config.total_slots()) {
            return Err(Error::Config("trajectories do not match the configuration".into()));
        }
        let (tm, rm) = (&config.tx_mount, &config.rx_mount);
        let pose = |u: usize, s: usize| Pose::from(&traj[u].states[s]);
        let truth = |s: usize| -> Result<Vec<LinkState>> {
            (1..=config.k).map(|u| link_state(&pose(u, s), &pose(0, s), tm, rm)).collect()
        };
        let mut inject_rng = ChaCha8Rng::seed_from_u64(seed);
        inject_rng.set_stream(STREAM_INJECT);
        let mut bound_rng = ChaCha8Rng::seed_from_u64(seed);
        bound_rng.set_stream(STREAM_BOUND);
        let noise = Normal::new(0.0, config.injected_error).map_err(|e| Error::Config(e.to_string()))?;

        let mut timing = WorldTiming::default();
        let mut predictors: Vec<MsiPredictor> = Vec::new();
        let mut slots = Vec::with_capacity(config.frames * (config.t + 1));
        for f in 0..config.frames {
            let e = config.warmup + f * (config.t + 1);
            let at_slot = |slot: usize| move |err: Error| Error::AtSlot { slot, source: Box::new(err) };
            let links = truth(e).map_err(at_slot(e))?;
            slots.push(SlotView {
                slot: e,
                exchange: true,
                links: links
                    .iter()
                    .map(|l| LinkView {
                        truth: *l,
                        predicted: *l,
                        estimate: bound.then(|| LinkEstimate {
                            aod: AngleEstimate::exact(l.aod),
                            aoa: AngleEstimate::exact(l.aoa),
                        }),
                    })
                    .collect(),
            });
            let mut dists: Vec<Vec<MsiDistribution>> = Vec::new();
            if predict {
                if predictors.is_empty() {
                    let t0 = Instant::now();
                    predictors = traj
                        .iter()
                        .map(|t| MsiPredictor::fit(&t.states[..=e], &config.gp))
                        .collect::<Result<_>>()
                        .map_err(at_slot(e))?;
                    timing.fit = t0.elapsed().as_secs_f64();
                }
                let t0 = Instant::now();
                dists = predictors
                    .iter()
                    .zip(&traj)
                    .map(|(p, t)| p.predict(&t.states[..=e]))
                    .collect::<Result<_>>()
                    .map_err(at_slot(e))?;
                timing.predict.push(t0.elapsed().as_secs_f64());
            }
            let mut bound_time = 0.0;
            for tau in 1..=config.t {
                let s = e + tau;
                let links = truth(s).map_err(at_slot(s))?;
                let mut views = Vec::with_capacity(config.k);
                let mut step: Vec<MsiDistribution> = Vec::new();
                if predict {
                    for d in &dists {
                        let mut d = d[tau - 1];
                        if config.injected_error > 0.0 {
                            for c in 3..6 {
                                d.mean[c] += noise.sample(&mut inject_rng);
                                d.variance[c] += config.injected_error * config.injected_error;
                            }
                        }
                        step.push(d);
                    }
                }
                for (k, l) in links.iter().enumerate() {
                    let mut view = LinkView { truth: *l, predicted: *l, estimate: None };
                    if predict {
                        let (tx, rx) = (&step[k + 1], &step[0]);
                        view.predicted = link_state(&tx.mean_pose(), &rx.mean_pose(), tm, rm).map_err(at_slot(s))?;
                        if bound {
                            let t0 = Instant::now();
                            let ends = LinkEnds { tx, rx, tx_mount: tm, rx_mount: rm };
                            view.estimate = Some(
                                bound_tracking_error(ends, config.gp.i_max, config.gp.p_alpha, config.gp.p_beta, &mut bound_rng)
                                    .map_err(at_slot(s))?,
                            );
                            bound_time += t0.elapsed().as_secs_f64();
                        }
                    }
                    views.push(view);
                }
                slots.push(SlotView { slot: s, exchange: false, links: views });
            }
            if bound {
                timing.bound.push(bound_time);
            }
        }
        Ok(Self {
            seed,
            trajectories: traj,
            slots,
            timing,
            has_bounds: bound,
        })
    }
}
