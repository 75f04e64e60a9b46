//! Codeword selection for transmitting UAVs, joint subarray partition and
//! codeword selection at the receiving UAV, and tracking-error-aware
//! beamwidth control.

use serde::{Deserialize, Serialize};

use crate::array::{wrap_pi, ArrayGeometry, BeamAngle, SteeredBeam, SubarraySpec};
use crate::codebook::{Codebook, CodebookLayer, Codeword, LayerId};
use crate::error::{Error, Result};
use crate::tracking::AngleEstimate;

/// A codeword picked for one target direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub codeword: Codeword,
    pub layer: LayerId,
    /// Direction the selection was made for.
    pub target: BeamAngle,
    /// `target - beam centre`, azimuth wrapped to `(-pi, pi]`.
    pub residual: BeamAngle,
}

impl SelectionResult {
    pub fn support(&self) -> &SubarraySpec {
        self.codeword.support()
    }
}

/// Picks `(i*, j*)` of `layer` for `angle`.
pub fn select_in_layer(layer: &CodebookLayer, angle: BeamAngle) -> SelectionResult {
    let cw = layer.select(angle);
    let c = cw.center();
    SelectionResult {
        codeword: cw.clone(),
        layer: layer.id,
        target: angle,
        residual: BeamAngle::new(wrap_pi(angle.azimuth - c.azimuth), angle.elevation - c.elevation),
    }
}

/// Selection on the maximum-resolution layer.
pub fn select_tuav_codeword(codebook: &Codebook, aod: BeamAngle) -> SelectionResult {
    select_in_layer(codebook.max_layer(), aod)
}

/// Independent maximum-resolution selections for each arrival angle.
pub fn select_ruav_unconstrained(codebook: &Codebook, aoas: &[BeamAngle]) -> Vec<SelectionResult> {
    let layer = codebook.max_layer();
    aoas.iter().map(|&a| select_in_layer(layer, a)).collect()
}

/// Ring distance between two column indices on an `n`-column ring.
pub fn ring_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    if 2 * d > n {
        n - d
    } else {
        d
    }
}

/// Symmetric conflict relation between supports, closed transitively.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictMatrix {
    k: usize,
    bits: Vec<bool>,
}

impl ConflictMatrix {
    pub fn size(&self) -> usize {
        self.k
    }

    pub fn get(&self, a: usize, b: usize) -> bool {
        self.bits[a * self.k + b]
    }

    pub fn is_zero(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Groups of two or more mutually conflicting users, each sorted, in
    /// order of their smallest member.
    pub fn conflict_sets(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.k];
        let mut out = Vec::new();
        for a in 0..self.k {
            if seen[a] {
                continue;
            }
            let set: Vec<usize> = (0..self.k).filter(|&b| b == a || self.get(a, b)).collect();
            if set.len() > 1 {
                for &b in &set {
                    seen[b] = true;
                }
                out.push(set);
            }
        }
        out
    }
}

fn pair_conflicts(a: &SubarraySpec, b: &SubarraySpec) -> bool {
    let n = a.dims().1;
    let d = ring_distance(a.n_c, b.n_c, n);
    2 * d < a.n_act + b.n_act && 2 * a.m_c.abs_diff(b.m_c) < a.m_act + b.m_act
}

/// Pairwise conflict test on centre distances followed by transitive closure.
pub fn detect_conflicts(supports: &[SubarraySpec]) -> ConflictMatrix {
    let k = supports.len();
    let mut bits = vec![false; k * k];
    for a in 0..k {
        for b in a + 1..k {
            if pair_conflicts(&supports[a], &supports[b]) {
                bits[a * k + b] = true;
                bits[b * k + a] = true;
            }
        }
    }
    // Warshall
    for via in 0..k {
        for a in 0..k {
            if !bits[a * k + via] {
                continue;
            }
            for b in 0..k {
                if bits[via * k + b] && a != b {
                    bits[a * k + b] = true;
                }
            }
        }
    }
    ConflictMatrix { k, bits }
}

/// Receive beam serving one transmitting UAV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub layer: LayerId,
    pub i: usize,
    pub j: usize,
    pub target: BeamAngle,
    pub beam: SteeredBeam,
    /// True when the row extent was cut by conflict resolution.
    pub partitioned: bool,
}

impl PlanEntry {
    pub fn from_selection(sel: &SelectionResult) -> Self {
        Self {
            layer: sel.layer,
            i: sel.codeword.i,
            j: sel.codeword.j,
            target: sel.target,
            beam: sel.codeword.beam,
            partitioned: false,
        }
    }

    pub fn support(&self) -> &SubarraySpec {
        &self.beam.support
    }
}

/// Per-user receive beams with pairwise disjoint supports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    entries: Vec<PlanEntry>,
    iterations: usize,
}

impl PartitionPlan {
    /// Checks that supports are non-empty and pairwise disjoint.
    pub fn new(entries: Vec<PlanEntry>, iterations: usize) -> Result<Self> {
        for (a, ea) in entries.iter().enumerate() {
            if ea.support().is_empty() {
                return Err(Error::InvalidSubarray(format!("user {a} has an empty support")));
            }
            for (b, eb) in entries.iter().enumerate().skip(a + 1) {
                if ea.support().overlaps(eb.support()) {
                    return Err(Error::InvalidSubarray(format!("supports of users {a} and {b} overlap")));
                }
            }
        }
        Ok(Self { entries, iterations })
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of resolution rounds that were needed.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn supports(&self) -> Vec<SubarraySpec> {
        self.entries.iter().map(|e| e.beam.support).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<PlanDumpRow> = self
            .entries
            .iter()
            .enumerate()
            .map(|(k, e)| PlanDumpRow {
                user: k,
                layer: e.layer.to_string(),
                i: e.i,
                j: e.j,
                row_start: e.support().row_start(),
                rows: e.support().m_act,
                col_start: e.support().col_start(),
                cols: e.support().n_act,
                partitioned: e.partitioned,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&rows)?)
    }
}

#[derive(Serialize)]
struct PlanDumpRow {
    user: usize,
    layer: String,
    i: usize,
    j: usize,
    row_start: usize,
    rows: usize,
    col_start: usize,
    cols: usize,
    partitioned: bool,
}

/// Row band `[(r-1) m_act + 1, r m_act]` and its centre `ceil(((2r-1) m_act + 1)/2)`.
pub fn partition_rows(rank: usize, m_act: usize) -> (usize, usize, usize) {
    let lo = (rank - 1) * m_act + 1;
    let hi = rank * m_act;
    let m_c = ((2 * rank - 1) * m_act + 1).div_ceil(2);
    (lo, hi, m_c)
}

/// Splits the rows among users of each conflict set until no conflicts remain.
///
/// A set of `c` users gives each member `floor(M/c)` rows, ranked by target
/// azimuth ascending (ties by user index). A member whose support is already
/// shorter keeps its own row count, centred in its band. Columns are untouched.
pub fn resolve_conflicts(selections: &[SelectionResult]) -> Result<PartitionPlan> {
    resolve_entries(selections.iter().map(PlanEntry::from_selection).collect())
}

fn resolve_entries(mut entries: Vec<PlanEntry>) -> Result<PartitionPlan> {
    let k = entries.len();
    let mut rounds = 0;
    loop {
        let supports: Vec<SubarraySpec> = entries.iter().map(|e| e.beam.support).collect();
        let conflicts = detect_conflicts(&supports);
        if conflicts.is_zero() {
            return PartitionPlan::new(entries, rounds);
        }
        if rounds >= k.max(1) {
            return Err(Error::ConflictLoop(rounds));
        }
        rounds += 1;
        for mut set in conflicts.conflict_sets() {
            let dims = supports[set[0]].dims();
            let m_act = dims.0 / set.len();
            if m_act == 0 {
                return Err(Error::InfeasiblePartition { users: set.len(), rows: dims.0 });
            }
            set.sort_by(|&a, &b| {
                let ka = crate::array::wrap_2pi(entries[a].target.azimuth);
                let kb = crate::array::wrap_2pi(entries[b].target.azimuth);
                ka.total_cmp(&kb).then(a.cmp(&b))
            });
            for (r, &q) in set.iter().enumerate() {
                let (_, _, m_c) = partition_rows(r + 1, m_act);
                let old = entries[q].beam.support;
                let rows = old.m_act.min(m_act);
                entries[q].beam.support = SubarraySpec::placed(dims, rows, old.n_act, m_c as i64, old.n_c as i64)?;
                entries[q].partitioned = true;
            }
        }
    }
}

/// Maximum-resolution selection for every user followed by conflict resolution.
pub fn spas_ruav(codebook: &Codebook, aoas: &[BeamAngle]) -> Result<PartitionPlan> {
    resolve_conflicts(&select_ruav_unconstrained(codebook, aoas))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    Azimuth,
    Elevation,
}

/// Smaller of the beam gains at the two ends of the estimate's range in
/// `plane`, the other angle held at the estimate's mean.
pub fn min_edge_gain(geom: &ArrayGeometry, codeword: &Codeword, estimate: &AngleEstimate, plane: Plane) -> f64 {
    let m = estimate.mean;
    let ends = match plane {
        Plane::Azimuth => {
            let (lo, hi) = estimate.azimuth_range;
            [BeamAngle::new(lo, m.elevation), BeamAngle::new(hi, m.elevation)]
        }
        Plane::Elevation => {
            let (lo, hi) = estimate.elevation_range;
            let clamp = |b: f64| b.clamp(0.0, std::f64::consts::PI);
            [BeamAngle::new(m.azimuth, clamp(lo)), BeamAngle::new(m.azimuth, clamp(hi))]
        }
    };
    codeword.gain(geom, ends[0]).min(codeword.gain(geom, ends[1]))
}

/// Worst edge gain over both planes.
pub fn edge_objective(geom: &ArrayGeometry, codeword: &Codeword, estimate: &AngleEstimate) -> f64 {
    min_edge_gain(geom, codeword, estimate, Plane::Azimuth).min(min_edge_gain(geom, codeword, estimate, Plane::Elevation))
}

/// Index of the first maximum.
fn argmax<T>(items: &[T], score: impl Fn(&T) -> f64) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (idx, it) in items.iter().enumerate() {
        let v = score(it);
        if v > best_v {
            best = idx;
            best_v = v;
        }
    }
    best
}

/// Two-step beamwidth control: with the largest `m_s`, pick the `n_s` whose
/// codeword has the best azimuth edge gain; then with that `n_s`, pick the
/// `m_s` with the best elevation edge gain. Ties go to the smaller size.
pub fn te_aware_select(codebook: &Codebook, estimate: &AngleEstimate) -> Result<SelectionResult> {
    let geom = codebook.geometry();
    let m_values = codebook.m_values();
    let m_max = *m_values.last().expect("codebook has layers");
    let az: Vec<SelectionResult> = codebook
        .n_values()
        .into_iter()
        .map(|n| Ok(select_in_layer(codebook.layer(LayerId::new(m_max, n))?, estimate.mean)))
        .collect::<Result<_>>()?;
    let n_star = az[argmax(&az, |s| min_edge_gain(geom, &s.codeword, estimate, Plane::Azimuth))].layer.n_s;
    let el: Vec<SelectionResult> = m_values
        .into_iter()
        .map(|m| Ok(select_in_layer(codebook.layer(LayerId::new(m, n_star))?, estimate.mean)))
        .collect::<Result<_>>()?;
    let best = argmax(&el, |s| min_edge_gain(geom, &s.codeword, estimate, Plane::Elevation));
    Ok(el.into_iter().nth(best).expect("non-empty"))
}

/// Best layer by [`edge_objective`] over every layer of the codebook.
pub fn exhaustive_layer_search(codebook: &Codebook, estimate: &AngleEstimate) -> SelectionResult {
    let geom = codebook.geometry();
    let all: Vec<SelectionResult> = codebook.layers().map(|l| select_in_layer(l, estimate.mean)).collect();
    let best = argmax(&all, |s| edge_objective(geom, &s.codeword, estimate));
    all.into_iter().nth(best).expect("codebook has layers")
}

/// Two-step selection for every user, then conflict resolution.
pub fn te_aware_ruav(codebook: &Codebook, estimates: &[AngleEstimate]) -> Result<PartitionPlan> {
    let sel = estimates
        .iter()
        .map(|e| te_aware_select(codebook, e))
        .collect::<Result<Vec<_>>>()?;
    resolve_conflicts(&sel)
}

/// Exhaustive layer search for every user, then conflict resolution.
pub fn exhaustive_ruav(codebook: &Codebook, estimates: &[AngleEstimate]) -> Result<PartitionPlan> {
    let sel: Vec<SelectionResult> = estimates.iter().map(|e| exhaustive_layer_search(codebook, e)).collect();
    resolve_conflicts(&sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::ElementPattern;
    use crate::codebook::LayerSet;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn pattern() -> ElementPattern {
        ElementPattern::new(TAU / 3.0, PI).unwrap()
    }

    fn tx_book() -> Codebook {
        let g = ArrayGeometry::cylindrical(16, 64, 0.0509, 0.005).unwrap();
        Codebook::build_default(&g, &pattern()).unwrap()
    }

    fn rx_book() -> Codebook {
        let g = ArrayGeometry::cylindrical(112, 64, 0.0509, 0.005).unwrap();
        Codebook::build_default(&g, &pattern()).unwrap()
    }

    #[test]
    fn tuav_selection() {
        let cb = tx_book();
        assert_eq!(cb.max_layer().id, LayerId::new(16, 21));
        let s = select_tuav_codeword(&cb, BeamAngle::new(PI, FRAC_PI_2));
        assert_eq!(s.codeword.i, 11);
        let c = cb.max_layer().codeword(4, 3).unwrap().center();
        let s = select_tuav_codeword(&cb, c);
        assert_eq!(s.residual.azimuth, 0.0);
        assert_eq!(s.residual.elevation, 0.0);
        let l = cb.max_layer();
        for k in 0..200 {
            let a = BeamAngle::new(k as f64 * 0.0731 % TAU, 0.1 + (k as f64 * 0.0137) % 2.9);
            let s = select_in_layer(l, a);
            assert!(s.residual.azimuth.abs() <= l.bw_a / 2.0 + 1e-9);
            assert!(s.residual.elevation.abs() <= l.bw_e / 2.0 + 1e-9);
        }
    }

    #[test]
    fn ring_distance_wraps() {
        assert_eq!(ring_distance(5, 60, 64), 9);
        assert_eq!(ring_distance(60, 5, 64), 9);
        assert_eq!(ring_distance(1, 33, 64), 32);
        for a in 1..=64 {
            for b in 1..=64 {
                assert!(ring_distance(a, b, 64) <= 32);
            }
        }
    }

    fn spec(m_act: usize, n_act: usize, m_c: usize, n_c: usize) -> SubarraySpec {
        SubarraySpec::placed((112, 64), m_act, n_act, m_c as i64, n_c as i64).unwrap()
    }

    #[test]
    fn conflict_cases() {
        let c = detect_conflicts(&[spec(112, 21, 57, 10), spec(112, 21, 57, 20)]);
        assert!(c.get(0, 1) && c.get(1, 0) && !c.get(0, 0));
        let c = detect_conflicts(&[spec(112, 21, 57, 10), spec(112, 21, 57, 10)]);
        assert!(c.get(0, 1));
        let c = detect_conflicts(&[spec(112, 21, 57, 1), spec(112, 21, 57, 33)]);
        assert!(c.is_zero());
        // chain 0-1-2 closes to 0-2
        let c = detect_conflicts(&[spec(112, 21, 57, 1), spec(112, 21, 57, 16), spec(112, 21, 57, 31)]);
        assert!(!pair_conflicts(&spec(112, 21, 57, 1), &spec(112, 21, 57, 31)));
        assert!(c.get(0, 2));
        assert_eq!(c.conflict_sets(), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn two_user_hand_case() {
        let cb = rx_book();
        let aoas = [BeamAngle::new(1.0, 1.5), BeamAngle::new(1.05, 1.6)];
        let plan = spas_ruav(&cb, &aoas).unwrap();
        let s = plan.supports();
        assert_eq!((s[0].m_act, s[0].m_c, s[0].row_start()), (56, 29, 1));
        assert_eq!((s[1].m_act, s[1].m_c, s[1].row_start()), (56, 85, 57));
        assert_eq!(s[0].n_act, 21);
        assert_eq!(plan.iterations(), 1);
        // rank follows azimuth, not user order
        let plan = spas_ruav(&cb, &[aoas[1], aoas[0]]).unwrap();
        assert_eq!(plan.supports()[0].m_c, 85);
    }

    #[test]
    fn three_user_and_no_conflict() {
        let cb = rx_book();
        let aoas = [BeamAngle::new(2.0, 1.5), BeamAngle::new(2.02, 1.5), BeamAngle::new(2.04, 1.5)];
        let plan = spas_ruav(&cb, &aoas).unwrap();
        assert!(plan.supports().iter().all(|s| s.m_act == 37));
        assert!(detect_conflicts(&plan.supports()).is_zero());
        let apart = [BeamAngle::new(0.5, 1.5), BeamAngle::new(0.5 + PI, 1.5)];
        let plan = spas_ruav(&cb, &apart).unwrap();
        let raw = select_ruav_unconstrained(&cb, &apart);
        assert_eq!(plan.iterations(), 0);
        for (e, s) in plan.entries().iter().zip(&raw) {
            assert_eq!(e.beam, s.codeword.beam);
        }
        let one = spas_ruav(&cb, &apart[..1]).unwrap();
        assert_eq!(one.supports()[0].m_act, 112);
    }

    #[test]
    fn partition_infeasible() {
        let g = ArrayGeometry::cylindrical(2, 64, 0.0509, 0.005).unwrap();
        let cb = Codebook::build_default(&g, &pattern()).unwrap();
        let aoas = [BeamAngle::new(1.0, 1.5); 3];
        assert!(matches!(spas_ruav(&cb, &aoas), Err(Error::InfeasiblePartition { users: 3, rows: 2 })));
    }

    #[test]
    fn edge_gains() {
        let cb = rx_book();
        let g = cb.geometry();
        let cw = cb.max_layer().codeword(5, 28).unwrap().clone();
        let c = cw.center();
        let zero = AngleEstimate::exact(c);
        let at = cw.gain(g, c);
        assert!((min_edge_gain(g, &cw, &zero, Plane::Azimuth) - at).abs() < 1e-9);
        // support centred on the beam: column 40 normal, odd width, all rows
        let mut sym_cw = cw.clone();
        let phi = crate::array::element_angular_position(g, 40).unwrap();
        sym_cw.beam = SteeredBeam::new(BeamAngle::new(phi, FRAC_PI_2), SubarraySpec::placed((112, 64), 112, 21, 57, 40).unwrap());
        let gains: Vec<f64> = [Plane::Azimuth, Plane::Elevation]
            .iter()
            .flat_map(|&p| {
                let e = AngleEstimate::symmetric(sym_cw.center(), 0.05, 0.02);
                let (lo, hi) = match p {
                    Plane::Azimuth => (BeamAngle::new(phi - 0.05, FRAC_PI_2), BeamAngle::new(phi + 0.05, FRAC_PI_2)),
                    Plane::Elevation => (BeamAngle::new(phi, FRAC_PI_2 - 0.02), BeamAngle::new(phi, FRAC_PI_2 + 0.02)),
                };
                let (a, b) = (sym_cw.gain(g, lo), sym_cw.gain(g, hi));
                assert!((min_edge_gain(g, &sym_cw, &e, p) - a.min(b)).abs() < 1e-12);
                [a, b]
            })
            .collect();
        assert!((gains[0] - gains[1]).abs() < 1e-6 * at && (gains[2] - gains[3]).abs() < 1e-6 * at);
        let mut last = f64::INFINITY;
        for k in 0..40 {
            let w = k as f64 * 0.001;
            let v = min_edge_gain(g, &cw, &AngleEstimate::symmetric(c, w, 0.0), Plane::Azimuth);
            assert!(v <= last + 1e-9);
            last = v;
        }
    }

    #[test]
    fn te_aware_matches_max_resolution_without_error() {
        let cb = rx_book();
        for (i, j) in [(1, 1), (7, 20), (15, 40), (21, 56)] {
            let c = cb.max_layer().codeword(i, j).unwrap().center();
            let e = AngleEstimate::exact(c);
            let two = te_aware_select(&cb, &e).unwrap();
            let ex = exhaustive_layer_search(&cb, &e);
            assert_eq!(two.layer, cb.max_layer().id);
            assert_eq!(ex.layer, cb.max_layer().id);
            assert_eq!(two.codeword, select_in_layer(cb.max_layer(), c).codeword);
        }
    }

    #[test]
    fn wide_azimuth_error_widens_beam() {
        let cb = rx_book();
        let g = cb.geometry();
        let c = BeamAngle::new(1.0, FRAC_PI_2);
        let e = AngleEstimate::symmetric(c, 0.3, 0.0);
        let s = te_aware_select(&cb, &e).unwrap();
        assert!(s.layer.n_s < cb.n_act_max());
        let narrow = select_in_layer(cb.max_layer(), c);
        assert!(
            min_edge_gain(g, &s.codeword, &e, Plane::Azimuth) > min_edge_gain(g, &narrow.codeword, &e, Plane::Azimuth)
        );
    }

    #[test]
    fn singleton_codebook() {
        let g = ArrayGeometry::cylindrical(16, 64, 0.0509, 0.005).unwrap();
        let id = LayerId::new(4, 8);
        let cb = Codebook::build(&g, &pattern(), &LayerSet::single(id)).unwrap();
        let e = AngleEstimate::symmetric(BeamAngle::new(3.0, 1.0), 0.3, 0.1);
        assert_eq!(exhaustive_layer_search(&cb, &e).layer, id);
        assert_eq!(te_aware_select(&cb, &e).unwrap().layer, id);
    }

    #[test]
    fn plan_json_lists_supports() {
        let cb = rx_book();
        let plan = spas_ruav(&cb, &[BeamAngle::new(1.0, 1.5), BeamAngle::new(1.0, 1.5)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&plan.to_json().unwrap()).unwrap();
        assert_eq!(v[1]["row_start"], 57);
        assert_eq!(v[0]["layer"], "112x21");
    }
}
