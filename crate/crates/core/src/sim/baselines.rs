//! Receive plans of the reference schemes.

use crate::array::{BeamAngle, SteeredBeam, SubarraySpec};
use crate::beamtrack::{select_in_layer, PartitionPlan, PlanEntry};
use crate::codebook::{Codebook, LayerId};
use crate::error::{Error, Result};

/// Row band `r` (0-based) of `k` equal bands over `m` rows, all `n` columns.
fn band(m: usize, n: usize, k: usize, r: usize) -> Result<SubarraySpec> {
    let rows = m / k;
    if rows == 0 {
        return Err(Error::InfeasiblePartition { users: k, rows: m });
    }
    let m_c = r * rows + rows / 2 + 1;
    SubarraySpec::placed((m, n), rows, n, m_c as i64, (n / 2 + 1) as i64)
}

/// Planar receiver split into `K` equal row panels of `M_r/K x N_r`
/// elements; panel `k` is steered straight at `aoas[k]`.
pub fn upa_baseline_plan(m_r: usize, n_r: usize, aoas: &[BeamAngle]) -> Result<PartitionPlan> {
    let k = aoas.len();
    let entries = aoas
        .iter()
        .enumerate()
        .map(|(r, &a)| {
            let s = band(m_r, n_r, k, r)?;
            Ok(PlanEntry {
                layer: LayerId::new(s.m_act, s.n_act),
                i: 0,
                j: 0,
                target: a,
                beam: SteeredBeam::new(a, s),
                partitioned: k > 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PartitionPlan::new(entries, 0)
}

/// Static equal row split of the receiving CCA using every ring column;
/// each band is steered at the centre of the maximum-resolution codeword
/// for its user's angle.
pub fn fixed_partition_baseline(codebook: &Codebook, aoas: &[BeamAngle]) -> Result<PartitionPlan> {
    let (m, n) = (codebook.geometry().m(), codebook.geometry().n());
    let k = aoas.len();
    let layer = codebook.max_layer();
    let entries = aoas
        .iter()
        .enumerate()
        .map(|(r, &a)| {
            let s = band(m, n, k, r)?;
            let sel = select_in_layer(layer, a);
            Ok(PlanEntry {
                layer: LayerId::new(s.m_act, s.n_act),
                i: sel.codeword.i,
                j: sel.codeword.j,
                target: a,
                beam: SteeredBeam::new(sel.codeword.center(), s),
                partitioned: k > 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PartitionPlan::new(entries, 0)
}

/// Full transmit array steered at `angle`.
pub fn full_array_beam(dims: (usize, usize), angle: BeamAngle) -> SteeredBeam {
    SteeredBeam::new(angle, SubarraySpec::full(dims))
}
