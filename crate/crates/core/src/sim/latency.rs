//! Per-slot latency budget of the exchange/tracking frame.

use serde::{Deserialize, Serialize};

use super::config::SimConfig;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Latency components in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub t_msi: f64,
    pub t_tra: f64,
    pub t_pro: f64,
    pub local_e: f64,
    pub local_t: f64,
    pub total_e: f64,
    pub total_t: f64,
    /// Mean over one exchange slot and `T` tracking slots.
    pub average: f64,
}

/// MSI upload time `n_msi * T * bits / C_LB`.
pub fn msi_time(config: &SimConfig) -> f64 {
    let l = &config.latency;
    (l.n_msi * config.t * l.bits_per_value) as f64 / l.c_lb
}

/// Latency budget for a mean mmWave rate (bit/s), the largest link distance
/// and measured local processing times of exchange and tracking slots.
pub fn latency_estimate(config: &SimConfig, mean_rate: f64, max_distance: f64, local_e: f64, local_t: f64) -> Latency {
    let t_msi = msi_time(config);
    let t_tra = if mean_rate > 0.0 { config.latency.b_data / mean_rate } else { f64::INFINITY };
    let t_pro = max_distance / SPEED_OF_LIGHT;
    let total_e = t_msi + t_tra + t_pro + local_e;
    let total_t = t_tra + t_pro + local_t;
    let t = config.t as f64;
    Latency {
        t_msi,
        t_tra,
        t_pro,
        local_e,
        local_t,
        total_e,
        total_t,
        average: (t * total_t + total_e) / (t + 1.0),
    }
}
