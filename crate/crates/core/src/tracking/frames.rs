//! Global, body and array frames, and the line-of-sight angles between two
//! mounted arrays.
//!
//! The global frame is ENU. A body frame is x forward, y left, z up and is
//! reached from the global frame by yaw about z, then pitch about the new y
//! (nose up positive), then roll about the new x (right wing down positive).
//! An array frame is fixed to the body by a mounting rotation; the cylinder
//! axis is the array z axis and azimuth is measured from array +x.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::array::{wrap_2pi, BeamAngle};
use crate::error::{Error, Result};
use crate::mobility::{Attitude, UavState};

/// Position and attitude of one UAV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub attitude: Attitude,
}

impl Pose {
    pub fn new(position: Vector3<f64>, attitude: Attitude) -> Self {
        Self { position, attitude }
    }
}

impl From<&UavState> for Pose {
    fn from(s: &UavState) -> Self {
        Self {
            position: s.position,
            attitude: s.attitude,
        }
    }
}

/// Body-to-global rotation.
pub fn body_rotation(att: &Attitude) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), att.yaw)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), -att.pitch)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), att.roll)
}

/// Orientation of an array relative to its body, as yaw/pitch/roll of the
/// array frame in the body frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mount {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Mount {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Array-to-body rotation.
    pub fn rotation(&self) -> Rotation3<f64> {
        body_rotation(&Attitude {
            yaw: self.yaw,
            pitch: self.pitch,
            roll: self.roll,
        })
    }
}

/// Array-to-global rotation.
pub fn array_rotation(att: &Attitude, mount: &Mount) -> Rotation3<f64> {
    body_rotation(att) * mount.rotation()
}

/// Azimuth in `[0, 2pi)` and elevation from +z in `[0, pi]` of a unit vector.
pub fn direction_angles(u: &Vector3<f64>) -> BeamAngle {
    let el = u.z.clamp(-1.0, 1.0).acos();
    let az = if u.x == 0.0 && u.y == 0.0 { 0.0 } else { wrap_2pi(u.y.atan2(u.x)) };
    BeamAngle::new(az, el)
}

/// Departure angle at `tx` and arrival angle at `rx`, each in its own array
/// frame.
pub fn geometric_angles(tx: &Pose, rx: &Pose, tx_mount: &Mount, rx_mount: &Mount) -> Result<(BeamAngle, BeamAngle)> {
    let los = rx.position - tx.position;
    let d = los.norm();
    if !(d > 1e-9) {
        return Err(Error::CoincidentPositions);
    }
    let u = los / d;
    let u_tx = array_rotation(&tx.attitude, tx_mount).inverse() * u;
    let u_rx = array_rotation(&rx.attitude, rx_mount).inverse() * (-u);
    Ok((direction_angles(&u_tx), direction_angles(&u_rx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn pose(p: [f64; 3], yaw: f64, pitch: f64, roll: f64) -> Pose {
        Pose::new(Vector3::from(p), Attitude { yaw, pitch, roll })
    }

    #[test]
    fn axis_cases() {
        let m = Mount::identity();
        let tx = pose([0.0; 3], 0.0, 0.0, 0.0);
        let (aod, aoa) = geometric_angles(&tx, &pose([5.0, 0.0, 0.0], 0.0, 0.0, 0.0), &m, &m).unwrap();
        assert_eq!(aod.azimuth, 0.0);
        assert!((aod.elevation - FRAC_PI_2).abs() < 1e-15);
        assert!((aoa.azimuth - PI).abs() < 1e-15);
        let (up, _) = geometric_angles(&tx, &pose([0.0, 0.0, 3.0], 0.0, 0.0, 0.0), &m, &m).unwrap();
        assert_eq!(up.elevation, 0.0);
        assert!(geometric_angles(&tx, &tx, &m, &m).is_err());
    }

    #[test]
    fn attitude_signs() {
        let m = Mount::identity();
        let rx = pose([10.0, 0.0, 0.0], 0.0, 0.0, 0.0);
        let (a, _) = geometric_angles(&pose([0.0; 3], FRAC_PI_2, 0.0, 0.0), &rx, &m, &m).unwrap();
        assert!((a.azimuth - 1.5 * PI).abs() < 1e-12);
        let (a, _) = geometric_angles(&pose([0.0; 3], 0.0, 0.3, 0.0), &rx, &m, &m).unwrap();
        assert!((a.elevation - (FRAC_PI_2 + 0.3)).abs() < 1e-12);
        let side = pose([0.0, -10.0, 0.0], 0.0, 0.0, 0.0);
        let (a, _) = geometric_angles(&pose([0.0; 3], 0.0, 0.0, 0.2), &side, &m, &m).unwrap();
        assert!((a.elevation - (FRAC_PI_2 - 0.2)).abs() < 1e-12);
    }

    #[test]
    fn round_trip_and_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut r = |s: f64| rng.gen_range(-s..s);
        for _ in 0..200 {
            let tx = pose([r(50.0), r(50.0), r(50.0)], r(PI), r(1.2), r(1.2));
            let rx = pose([r(50.0), r(50.0), r(50.0)], r(PI), r(1.2), r(1.2));
            let mt = Mount { yaw: r(1.0), pitch: r(1.0), roll: r(1.0) };
            let mr = Mount::identity();
            let (aod, aoa) = geometric_angles(&tx, &rx, &mt, &mr).unwrap();
            let los = (rx.position - tx.position).normalize();
            let back = array_rotation(&tx.attitude, &mt) * Vector3::from(aod.unit_vector());
            assert!((back - los).norm() < 1e-12);
            let back = array_rotation(&rx.attitude, &mr) * Vector3::from(aoa.unit_vector());
            assert!((back + los).norm() < 1e-12);

            let psi = r(PI);
            let g = Rotation3::from_axis_angle(&Vector3::z_axis(), psi);
            let turn = |p: &Pose| {
                let att = p.attitude;
                Pose::new(g * p.position, Attitude { yaw: att.yaw + psi, ..att })
            };
            let (aod2, aoa2) = geometric_angles(&turn(&tx), &turn(&rx), &mt, &mr).unwrap();
            let close = |a: BeamAngle, b: BeamAngle| {
                (Vector3::from(a.unit_vector()) - Vector3::from(b.unit_vector())).norm() < 1e-9
            };
            assert!(close(aod, aod2) && close(aoa, aoa2));
        }
    }
}
