//! Smooth-Turn UAV mobility with uniform vertical motion, distance
//! constraints between followers and the leader, and attitude derived from
//! the finite-difference velocity and acceleration.
//!
//! Frames are ENU (z up). Bodies use x forward, y left, z up; positive pitch
//! is nose up and positive roll is right wing down.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::array::wrap_pi;
use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Yaw, pitch, roll in radians, each in `(-pi, pi]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Attitude {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Attitude {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            yaw: wrap_pi(yaw),
            pitch: wrap_pi(pitch),
            roll: wrap_pi(roll),
        }
    }
}

/// Motion state of one UAV at one slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Vector3<f64>,
    pub attitude: Attitude,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl UavState {
    pub fn at_rest(position: Vector3<f64>, yaw: f64) -> Self {
        Self {
            position,
            attitude: Attitude::new(yaw, 0.0, 0.0),
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.acceleration.iter().all(|v| v.is_finite())
            && [self.attitude.yaw, self.attitude.pitch, self.attitude.roll]
                .iter()
                .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityParams {
    /// Mean turn-leg duration in seconds.
    pub mean_turn_duration: f64,
    /// Variance of the inverse turn radius, (1/m)^2.
    pub sigma_r2: f64,
    /// Horizontal speed in m/s; every UAV flies at this speed.
    pub v_xy_max: f64,
    pub v_z_min: f64,
    pub v_z_max: f64,
    pub d_r_min: f64,
    pub d_r_max: f64,
    pub dt: f64,
    /// Altitude band kept by the leader, meters.
    pub altitude_min: f64,
    pub altitude_max: f64,
    /// Followers stay within this vertical offset of the leader, meters.
    pub vertical_spread: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self {
            mean_turn_duration: 1.0,
            sigma_r2: 0.05,
            v_xy_max: 20.0,
            v_z_min: 2.0,
            v_z_max: 3.0,
            d_r_min: 10.0,
            d_r_max: 100.0,
            dt: 0.01,
            altitude_min: 80.0,
            altitude_max: 120.0,
            vertical_spread: 20.0,
        }
    }
}

impl MobilityParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.sigma_r2, self.v_xy_max, self.v_z_min];
        let pos = [self.mean_turn_duration, self.d_r_min, self.dt, self.vertical_spread];
        if nonneg.iter().any(|v| !(*v >= 0.0))
            || pos.iter().any(|v| !(*v > 0.0))
            || self.v_z_max < self.v_z_min
            || self.d_r_max <= self.d_r_min
            || self.altitude_max <= self.altitude_min
        {
            return Err(Error::Config(format!("invalid mobility parameters {self:?}")));
        }
        Ok(())
    }
}

/// Yaw from the horizontal heading (held when hovering), pitch as the climb
/// angle, roll as the coordinated-turn bank angle of the lateral acceleration.
pub fn attitude_from_motion(v: &Vector3<f64>, a: &Vector3<f64>, prev_yaw: f64) -> Attitude {
    let vxy = v.x.hypot(v.y);
    if vxy < 1e-9 {
        let pitch = if v.z.abs() < 1e-12 { 0.0 } else { v.z.atan2(0.0) };
        return Attitude::new(prev_yaw, pitch, 0.0);
    }
    let yaw = v.y.atan2(v.x);
    let pitch = v.z.atan2(vxy);
    let a_left = (v.x * a.y - v.y * a.x) / vxy;
    let roll = -(a_left / GRAVITY).atan();
    Attitude::new(yaw, pitch, roll)
}

/// One Smooth-Turn leg: signed curvature (inverse radius, positive turns
/// left), vertical speed and remaining duration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TurnLeg {
    pub curvature: f64,
    pub vz: f64,
    pub remaining: f64,
}

/// Draws a leg with exponential duration, Gaussian curvature and uniform
/// vertical speed magnitude with random sign.
pub fn draw_leg<R: Rng + ?Sized>(params: &MobilityParams, rng: &mut R) -> TurnLeg {
    let duration = Exp::new(1.0 / params.mean_turn_duration)
        .expect("positive rate")
        .sample(rng);
    let curvature = if params.sigma_r2 > 0.0 {
        Normal::new(0.0, params.sigma_r2.sqrt())
            .expect("finite sigma")
            .sample(rng)
    } else {
        0.0
    };
    let mag = if params.v_z_max > params.v_z_min {
        Uniform::new_inclusive(params.v_z_min, params.v_z_max).sample(rng)
    } else {
        params.v_z_min
    };
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    TurnLeg {
        curvature,
        vz: sign * mag,
        remaining: duration,
    }
}

/// Horizontal displacement after `dt` on an arc of curvature `kappa`.
fn arc_step(heading: f64, speed: f64, kappa: f64, dt: f64) -> (f64, f64, f64) {
    let dpsi = speed * kappa * dt;
    if kappa.abs() < 1e-12 || dpsi.abs() < 1e-12 {
        return (speed * dt * heading.cos(), speed * dt * heading.sin(), heading);
    }
    let h1 = heading + dpsi;
    let dx = (h1.sin() - heading.sin()) / kappa;
    let dy = (heading.cos() - h1.cos()) / kappa;
    (dx, dy, h1)
}

/// Smooth-Turn motion of one UAV.
#[derive(Clone, Debug)]
pub struct SmoothTurn {
    heading: f64,
    speed: f64,
    leg: TurnLeg,
    state: UavState,
    started: bool,
}

/// A proposed next position with the heading the UAV would have there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub position: Vector3<f64>,
    pub heading: f64,
}

impl SmoothTurn {
    pub fn new<R: Rng + ?Sized>(
        position: Vector3<f64>,
        heading: f64,
        params: &MobilityParams,
        rng: &mut R,
    ) -> Self {
        let leg = draw_leg(params, rng);
        let speed = params.v_xy_max;
        let velocity = Vector3::new(speed * heading.cos(), speed * heading.sin(), leg.vz);
        let state = UavState {
            position,
            attitude: attitude_from_motion(&velocity, &Vector3::zeros(), heading),
            velocity,
            acceleration: Vector3::zeros(),
        };
        Self {
            heading,
            speed,
            leg,
            state,
            started: false,
        }
    }

    pub fn state(&self) -> &UavState {
        &self.state
    }

    pub fn leg(&self) -> &TurnLeg {
        &self.leg
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    /// Centre of the current turn, `None` on a straight leg.
    pub fn turn_center(&self) -> Option<(f64, f64)> {
        if self.leg.curvature.abs() < 1e-12 {
            return None;
        }
        let r = 1.0 / self.leg.curvature;
        let p = self.state.position;
        Some((p.x - r * self.heading.sin(), p.y + r * self.heading.cos()))
    }

    /// Next position on the current leg.
    pub fn propose(&self, dt: f64) -> Proposal {
        let (dx, dy, h) = arc_step(self.heading, self.speed, self.leg.curvature, dt);
        let p = self.state.position;
        Proposal {
            position: Vector3::new(p.x + dx, p.y + dy, p.z + self.leg.vz * dt),
            heading: h,
        }
    }

    /// Moves to `next`, updates finite-difference velocity, acceleration and
    /// attitude, and starts a new leg when the current one has expired.
    pub fn commit<R: Rng + ?Sized>(&mut self, next: Proposal, params: &MobilityParams, rng: &mut R) {
        let dt = params.dt;
        let v = (next.position - self.state.position) / dt;
        let a = if self.started {
            (v - self.state.velocity) / dt
        } else {
            Vector3::zeros()
        };
        self.started = true;
        let attitude = attitude_from_motion(&v, &a, self.state.attitude.yaw);
        self.state = UavState {
            position: next.position,
            attitude,
            velocity: v,
            acceleration: a,
        };
        self.heading = wrap_pi(next.heading);
        self.leg.remaining -= dt;
        if self.leg.remaining <= 0.0 {
            self.leg = draw_leg(params, rng);
        }
    }

    /// Keeps the vertical speed pointing into `[lo, hi]` when outside it.
    fn steer_altitude(&mut self, lo: f64, hi: f64) {
        let z = self.state.position.z;
        if z < lo {
            self.leg.vz = self.leg.vz.abs();
        } else if z > hi {
            self.leg.vz = -self.leg.vz.abs();
        }
    }

    /// Free flight for one slot inside the leader's altitude band.
    pub fn step<R: Rng + ?Sized>(&mut self, params: &MobilityParams, rng: &mut R) -> UavState {
        self.steer_altitude(params.altitude_min, params.altitude_max);
        let p = self.propose(params.dt);
        self.commit(p, params, rng);
        self.state
    }
}

/// Corrects a follower's proposed move so its distance to the leader's next
/// position stays in `[d_r_min, d_r_max]`.
///
/// Near either bound the follower starts a new leg whose turn centre lies on
/// the side toward (too far) or away from (too close) the leader, with up to
/// eight redraws. If the proposed position still violates a bound, the
/// follower flies straight along the line of sight, away at full vertical
/// speed or toward it, which cannot shrink (resp. grow) the distance because
/// the leader is no faster.
pub fn enforce_constraints<R: Rng + ?Sized>(
    follower: &mut SmoothTurn,
    leader_next: &Vector3<f64>,
    params: &MobilityParams,
    rng: &mut R,
) -> Proposal {
    const NEAR: f64 = 5.0;
    const FAR: f64 = 10.0;
    let dt = params.dt;
    let mut prop = follower.propose(dt);
    let dist = |p: &Vector3<f64>| (p - leader_next).norm();
    let d = dist(&prop.position);
    if d >= params.d_r_min + NEAR && d <= params.d_r_max - FAR {
        return prop;
    }
    let toward = d > params.d_r_max - FAR;
    let rel = leader_next - follower.state.position;
    let bearing = rel.y.atan2(rel.x);
    let side = wrap_pi(bearing - follower.heading).signum();
    let want = if toward { side } else { -side };
    for _ in 0..8 {
        let leg = draw_leg(params, rng);
        if leg.curvature.signum() == want || leg.curvature == 0.0 {
            let mut leg = leg;
            let dz = rel.z;
            leg.vz = if toward { dz.signum() } else { -dz.signum() } * leg.vz.abs();
            follower.leg = leg;
            break;
        }
    }
    prop = follower.propose(dt);
    let d = dist(&prop.position);
    if d >= params.d_r_min && d <= params.d_r_max {
        return prop;
    }
    let cur = follower.state.position;
    let mut away = cur - leader_next;
    if !toward && away.norm() < 1e-9 {
        away = Vector3::new(follower.heading.cos(), follower.heading.sin(), 0.0);
    }
    let sign = if toward { -1.0 } else { 1.0 };
    let hxy = (away.x * away.x + away.y * away.y).sqrt();
    let heading = if hxy > 1e-12 {
        (sign * away.y).atan2(sign * away.x)
    } else {
        follower.heading
    };
    let vz_sign = if away.z.abs() > 1e-12 { sign * away.z.signum() } else { 1.0 };
    let speed = follower.speed;
    let mut next = Vector3::new(
        cur.x + speed * dt * heading.cos(),
        cur.y + speed * dt * heading.sin(),
        cur.z + vz_sign * params.v_z_max * dt,
    );
    if toward && dist(&next) > params.d_r_max {
        next = leader_next + (next - leader_next).normalize() * params.d_r_max;
    }
    follower.leg = TurnLeg {
        curvature: 0.0,
        vz: vz_sign * params.v_z_max,
        remaining: follower.leg.remaining.max(dt),
    };
    Proposal {
        position: next,
        heading,
    }
}

/// A leader (r-UAV) and `K` followers (t-UAVs) flying together.
#[derive(Clone, Debug)]
pub struct Formation {
    params: MobilityParams,
    leader: SmoothTurn,
    followers: Vec<SmoothTurn>,
    rng: ChaCha8Rng,
}

impl Formation {
    /// Leader at the centre of its altitude band; followers 20–60 m away at
    /// random bearings, within 10 m of the leader's altitude.
    pub fn new(params: &MobilityParams, k: usize, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z0 = 0.5 * (params.altitude_min + params.altitude_max);
        let leader = SmoothTurn::new(Vector3::new(0.0, 0.0, z0), rng.gen_range(-PI..PI), params, &mut rng);
        let lo = params.d_r_min.max(20.0).min(params.d_r_max);
        let hi = 60f64.clamp(lo, params.d_r_max);
        let followers = (0..k)
            .map(|_| {
                let r = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                let b = rng.gen_range(0.0..TAU);
                let dz = rng.gen_range(-10.0..10.0);
                let pos = Vector3::new(r * b.cos(), r * b.sin(), z0 + dz);
                SmoothTurn::new(pos, rng.gen_range(-PI..PI), params, &mut rng)
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            leader,
            followers,
            rng,
        })
    }

    pub fn leader(&self) -> &UavState {
        self.leader.state()
    }

    pub fn followers(&self) -> impl Iterator<Item = &UavState> {
        self.followers.iter().map(|f| f.state())
    }

    /// Advances every UAV by one slot.
    pub fn step(&mut self) {
        let p = &self.params;
        self.leader.step(p, &mut self.rng);
        let lead = self.leader.state().position;
        for f in &mut self.followers {
            let z = lead.z;
            f.steer_altitude(z - p.vertical_spread, z + p.vertical_spread);
            let prop = enforce_constraints(f, &lead, p, &mut self.rng);
            f.commit(prop, p, &mut self.rng);
        }
    }

    /// Runs `slots` slots and returns one trajectory per UAV, leader first.
    /// Slot 0 is the initial state.
    pub fn run(mut self, slots: usize) -> Vec<Trajectory> {
        let dt = self.params.dt;
        let n = self.followers.len() + 1;
        let mut out: Vec<Vec<UavState>> = vec![Vec::with_capacity(slots); n];
        for s in 0..slots {
            if s > 0 {
                self.step();
            }
            out[0].push(*self.leader.state());
            for (k, f) in self.followers.iter().enumerate() {
                out[k + 1].push(*f.state());
            }
        }
        out.into_iter().map(|states| Trajectory { dt, states }).collect()
    }
}

/// Convenience wrapper: leader plus `k` follower trajectories over `slots` slots.
pub fn generate_formation(params: &MobilityParams, k: usize, slots: usize, seed: u64) -> Result<Vec<Trajectory>> {
    Ok(Formation::new(params, k, seed)?.run(slots))
}

/// Time series of UAV states sampled every `dt` seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<UavState>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    slot: usize,
    x: f64,
    y: f64,
    z: f64,
    yaw: f64,
    pitch: f64,
    roll: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// CSV with header `slot,x,y,z,yaw,pitch,roll`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (slot, s) in self.states.iter().enumerate() {
            w.serialize(TrajectoryRow {
                slot,
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                yaw: s.attitude.yaw,
                pitch: s.attitude.pitch,
                roll: s.attitude.roll,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`Trajectory::write_csv`]; velocity and
    /// acceleration are rebuilt by finite differences.
    pub fn read_csv(path: &Path, dt: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows: Vec<TrajectoryRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        let mut states: Vec<UavState> = Vec::with_capacity(rows.len());
        for (k, row) in rows.iter().enumerate() {
            if row.slot != k {
                return Err(Error::Config(format!("trajectory slot {} at row {k}", row.slot)));
            }
            let position = Vector3::new(row.x, row.y, row.z);
            let velocity = match states.last() {
                Some(prev) => (position - prev.position) / dt,
                None => Vector3::zeros(),
            };
            let acceleration = match states.last() {
                Some(prev) if k > 1 => (velocity - prev.velocity) / dt,
                _ => Vector3::zeros(),
            };
            states.push(UavState {
                position,
                attitude: Attitude::new(row.yaw, row.pitch, row.roll),
                velocity,
                acceleration,
            });
        }
        if states.len() > 1 {
            states[0].velocity = states[1].velocity;
        }
        Ok(Self { dt, states })
    }
}
