//! Multi-resolution hierarchical codebook for cylindrical conformal arrays.
//!
//! A layer `(m_s, n_s)` quantizes azimuth into `I = ceil(2pi/BW_a)` bins and
//! elevation into `J = ceil(pi/BW_e)` bins. Codeword `(i, j)` steers an
//! `m_s x n_s` subarray toward the bin midpoint `((i - 1/2) BW_a, (j - 1/2) BW_e)`,
//! with the subarray placed where every one of its elements sees that direction.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::{
    wrap_2pi, wrap_pi, ArrayGeometry, ArrayKind, Awv, BeamAngle, ElementPattern, SteeredBeam,
    SubarraySpec, ANGLE_EPS,
};
use crate::error::{Error, Result};

/// Ring elements that can be activated together toward one azimuth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Activation {
    pub count: usize,
    pub n1: i64,
    pub n2: i64,
}

fn ring_coordinate(geom: &ArrayGeometry, alpha: f64) -> f64 {
    alpha / geom.delta_phi() + (geom.n() as f64 + 1.0) / 2.0
}

/// Maximum number of simultaneously active ring elements toward `alpha0`.
///
/// `n1 = ceil((alpha0 - da/2)/dphi + (N+1)/2)`, `n2` likewise with `+da/2`,
/// count `|n2 - n1|` capped at `N`. Along z every row can be active.
pub fn max_activated(
    geom: &ArrayGeometry,
    pattern: &ElementPattern,
    alpha0: f64,
) -> Result<Activation> {
    if geom.kind() != ArrayKind::Cylindrical {
        return Err(Error::NotCylindrical);
    }
    let dphi = geom.delta_phi();
    let half = geom.n() as f64 + 1.0;
    let n1 = ((alpha0 - pattern.delta_alpha / 2.0) / dphi + half / 2.0).ceil() as i64;
    let n2 = ((alpha0 + pattern.delta_alpha / 2.0) / dphi + half / 2.0).ceil() as i64;
    let count = ((n2 - n1).unsigned_abs() as usize).min(geom.n());
    Ok(Activation { count, n1, n2 })
}

/// Smallest [`max_activated`] count over all azimuths.
///
/// The count is periodic in the ring pitch, so one pitch is scanned finely.
pub fn n_act_max(geom: &ArrayGeometry, pattern: &ElementPattern) -> Result<usize> {
    const STEPS: usize = 4096;
    let dphi = geom.delta_phi();
    let mut best = usize::MAX;
    for k in 0..STEPS {
        let a = dphi * (k as f64 + 0.5) / STEPS as f64;
        best = best.min(max_activated(geom, pattern, a)?.count);
    }
    Ok(best)
}

/// Element-limited beamwidths `(da + (n-1) dphi, db)`, azimuth capped at 2pi.
pub fn element_beamwidth(
    geom: &ArrayGeometry,
    pattern: &ElementPattern,
    n_count: usize,
) -> Result<(f64, f64)> {
    if geom.kind() == ArrayKind::Cylindrical {
        pattern.validate_for(geom)?;
    }
    let n_count = n_count.max(1);
    let az = match geom.kind() {
        ArrayKind::Cylindrical => pattern.delta_alpha + (n_count - 1) as f64 * geom.delta_phi(),
        ArrayKind::Planar => pattern.delta_alpha,
    };
    Ok((az.min(TAU), pattern.delta_beta))
}

/// Effective layer beamwidths: the smaller of array and element beamwidth.
///
/// The array terms are `2pi/n_s` and `2pi/m_s`.
pub fn layer_beamwidth(
    geom: &ArrayGeometry,
    pattern: &ElementPattern,
    m_s: usize,
    n_s: usize,
) -> (f64, f64) {
    let (el_a, el_e) = element_beamwidth(geom, pattern, n_s)
        .unwrap_or((pattern.delta_alpha, pattern.delta_beta));
    let bw_a = (TAU / n_s as f64).min(el_a);
    let bw_e = (TAU / m_s as f64).min(el_e);
    (bw_a, bw_e)
}

/// Support centre for a beam toward `alpha`: `(floor(M/2), n_c)`.
///
/// `n_c` is the ring element whose sector centre is nearest to `alpha`, ties
/// resolved upward, i.e. `floor(alpha/dphi + N/2 + 1)` reduced into `[1, N]`.
pub fn subarray_center(geom: &ArrayGeometry, alpha: f64, m: usize) -> Result<(usize, usize)> {
    if geom.kind() != ArrayKind::Cylindrical {
        return Err(Error::NotCylindrical);
    }
    let x = ring_coordinate(geom, wrap_2pi(alpha));
    let n = geom.n() as i64;
    let raw = (x + 0.5 + 1e-12).floor() as i64;
    let n_c = (raw - 1).rem_euclid(n) + 1;
    Ok(((m / 2).max(1), n_c as usize))
}

fn bins(width: f64, span: f64) -> usize {
    ((span / width) - 1e-9).ceil().max(1.0) as usize
}

/// Layer identifier `(m_s, n_s)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerId {
    pub m_s: usize,
    pub n_s: usize,
}

impl LayerId {
    pub fn new(m_s: usize, n_s: usize) -> Self {
        Self { m_s, n_s }
    }
}

impl std::fmt::Display for LayerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.m_s, self.n_s)
    }
}

impl std::str::FromStr for LayerId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['x', 'X', ','])
            .ok_or_else(|| Error::Config(format!("layer '{s}' is not of the form MxN")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("layer '{s}' is not of the form MxN")))
        };
        Ok(Self::new(parse(a)?, parse(b)?))
    }
}

/// Closed angular intervals covered by one codeword. The azimuth interval
/// may extend past 2pi for the last bin of a layer; read it modulo 2pi.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub azimuth: (f64, f64),
    pub elevation: (f64, f64),
}

impl Coverage {
    pub fn contains(&self, angle: BeamAngle) -> bool {
        let (lo, hi) = self.azimuth;
        let a = wrap_2pi(angle.azimuth);
        let az = [a - TAU, a, a + TAU]
            .iter()
            .any(|&x| x >= lo - ANGLE_EPS && x <= hi + ANGLE_EPS);
        az && angle.elevation >= self.elevation.0 - ANGLE_EPS
            && angle.elevation <= self.elevation.1 + ANGLE_EPS
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codeword {
    pub layer: LayerId,
    pub i: usize,
    pub j: usize,
    pub beam: SteeredBeam,
    pub coverage: Coverage,
}

impl Codeword {
    pub fn center(&self) -> BeamAngle {
        self.beam.center
    }

    pub fn support(&self) -> &SubarraySpec {
        &self.beam.support
    }

    pub fn awv(&self, geom: &ArrayGeometry) -> Awv {
        self.beam.awv(geom)
    }

    /// Array-factor magnitude `|G|` at `angle`, element pattern excluded.
    pub fn gain(&self, geom: &ArrayGeometry, angle: BeamAngle) -> f64 {
        self.beam.gain(geom, angle).norm()
    }
}

/// One resolution level of the codebook.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookLayer {
    pub id: LayerId,
    pub bw_a: f64,
    pub bw_e: f64,
    pub n_az: usize,
    pub n_el: usize,
    codewords: Vec<Codeword>,
}

impl CodebookLayer {
    pub fn codewords(&self) -> &[Codeword] {
        &self.codewords
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    /// Keeps only codewords matching `keep`; used to build broken layers in tests.
    pub fn retain(&mut self, keep: impl FnMut(&Codeword) -> bool) {
        self.codewords.retain(keep);
    }

    pub fn codeword(&self, i: usize, j: usize) -> Option<&Codeword> {
        if i == 0 || j == 0 || i > self.n_az || j > self.n_el {
            return None;
        }
        let cw = self.codewords.get((i - 1) * self.n_el + (j - 1))?;
        if cw.i == i && cw.j == j {
            Some(cw)
        } else {
            self.codewords.iter().find(|c| c.i == i && c.j == j)
        }
    }

    /// `(i*, j*) = (ceil(alpha/BW_a), ceil(beta/BW_e))`, ties to the smaller index.
    pub fn index_for(&self, angle: BeamAngle) -> (usize, usize) {
        let a = wrap_2pi(angle.azimuth);
        let i = ((a / self.bw_a) - 1e-12).ceil().clamp(1.0, self.n_az as f64) as usize;
        let b = angle.elevation.clamp(0.0, PI);
        let j = ((b / self.bw_e) - 1e-12).ceil().clamp(1.0, self.n_el as f64) as usize;
        (i, j)
    }

    pub fn select(&self, angle: BeamAngle) -> &Codeword {
        let (i, j) = self.index_for(angle);
        self.codeword(i, j).expect("full layer has every index")
    }
}

/// Beams of a layer without the realizability check of [`build_layer`].
pub fn layer_beams(
    geom: &ArrayGeometry,
    pattern: &ElementPattern,
    m_s: usize,
    n_s: usize,
) -> Result<Vec<Codeword>> {
    if geom.kind() != ArrayKind::Cylindrical {
        return Err(Error::NotCylindrical);
    }
    if m_s == 0 || n_s == 0 || m_s > geom.m() || n_s > geom.n() {
        return Err(Error::LayerNotRealizable {
            m_s,
            n_s,
            reason: format!("outside a {}x{} array", geom.m(), geom.n()),
        });
    }
    let id = LayerId::new(m_s, n_s);
    let (bw_a, bw_e) = layer_beamwidth(geom, pattern, m_s, n_s);
    let (n_az, n_el) = (bins(bw_a, TAU), bins(bw_e, PI));
    let (el_bw_a, _) = element_beamwidth(geom, pattern, n_s)?;
    let array_limited = TAU / n_s as f64 <= el_bw_a;
    let mut out = Vec::with_capacity(n_az * n_el);
    for i in 1..=n_az {
        let alpha = (i as f64 - 0.5) * bw_a;
        let (m_c, n_c) = subarray_center(geom, alpha, geom.m())?;
        let support =
            SubarraySpec::placed((geom.m(), geom.n()), m_s, n_s, m_c as i64, n_c as i64)?;
        let az_bin = ((i - 1) as f64 * bw_a, i as f64 * bw_a);
        let az_cov = if array_limited {
            let (lo, hi) = column_span(geom, pattern, &support, alpha);
            (az_bin.0.max(lo), az_bin.1.min(hi))
        } else {
            az_bin
        };
        for j in 1..=n_el {
            let beta = ((j as f64 - 0.5) * bw_e).min(PI);
            let el_cov = (
                ((j - 1) as f64 * bw_e).max(FRAC_PI_2 - pattern.delta_beta / 2.0),
                (j as f64 * bw_e).min(FRAC_PI_2 + pattern.delta_beta / 2.0),
            );
            out.push(Codeword {
                layer: id,
                i,
                j,
                beam: SteeredBeam::new(BeamAngle::new(alpha, beta), support),
                coverage: Coverage {
                    azimuth: az_cov,
                    elevation: el_cov,
                },
            });
        }
    }
    Ok(out)
}

/// Union of the element sectors of the support's columns, unwrapped around `center`.
fn column_span(
    geom: &ArrayGeometry,
    pattern: &ElementPattern,
    support: &SubarraySpec,
    center: f64,
) -> (f64, f64) {
    let half = pattern.delta_alpha / 2.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for n in support.col_indices() {
        let off = wrap_pi(geom.column_normal(n) - center);
        lo = lo.min(center + off - half);
        hi = hi.max(center + off + half);
    }
    if hi - lo >= TAU {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        (lo, hi)
    }
}

/// Builds layer `(m_s, n_s)` and verifies that every support element is
/// active at its codeword's beam centre.
pub fn build_layer(
    geom: &ArrayGeometry,
    pattern: &ElementPattern,
    m_s: usize,
    n_s: usize,
) -> Result<CodebookLayer> {
    let bound = n_act_max(geom, pattern)?;
    if n_s > bound {
        return Err(Error::LayerNotRealizable {
            m_s,
            n_s,
            reason: format!("only {bound} ring elements can be active for some azimuths"),
        });
    }
    let codewords = layer_beams(geom, pattern, m_s, n_s)?;
    for cw in &codewords {
        if !pattern.elevation_active(cw.center().elevation) {
            return Err(Error::LayerNotRealizable {
                m_s,
                n_s,
                reason: format!("elevation {} outside the element pattern", cw.center().elevation),
            });
        }
        let dead = cw
            .support()
            .col_indices()
            .find(|&n| !pattern.azimuth_active(geom.column_normal(n), cw.center().azimuth));
        if let Some(n) = dead {
            return Err(Error::LayerNotRealizable {
                m_s,
                n_s,
                reason: format!("column {n} inactive at azimuth {}", cw.center().azimuth),
            });
        }
    }
    let (bw_a, bw_e) = layer_beamwidth(geom, pattern, m_s, n_s);
    Ok(CodebookLayer {
        id: LayerId::new(m_s, n_s),
        bw_a,
        bw_e,
        n_az: bins(bw_a, TAU),
        n_el: bins(bw_e, PI),
        codewords,
    })
}

/// Coverage of a codeword: its layer's angular bin intersected with the
/// element coverage of its support.
pub fn codeword_coverage(cw: &Codeword) -> Coverage {
    cw.coverage
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub covered: bool,
    pub grid_points: usize,
    pub uncovered: Vec<BeamAngle>,
}

/// Checks that every grid direction in `[0, 2pi) x [0, pi]` lies in some codeword coverage.
pub fn coverage_check(layer: &CodebookLayer, grid_step: f64) -> CoverageReport {
    let n_a = ((TAU / grid_step) - 1e-9).ceil() as usize;
    let n_e = (PI / grid_step + 1e-9).floor() as usize + 1;
    let mut hit = vec![false; n_a * n_e];
    for cw in layer.codewords() {
        let (e_lo, e_hi) = cw.coverage.elevation;
        let l0 = ((e_lo - ANGLE_EPS) / grid_step).ceil().max(0.0) as usize;
        let l1 = (((e_hi + ANGLE_EPS) / grid_step).floor() as usize).min(n_e - 1);
        let (a_lo, a_hi) = cw.coverage.azimuth;
        let (k0, k1) = if a_hi - a_lo >= TAU || !a_lo.is_finite() {
            (0i64, n_a as i64 - 1)
        } else {
            (
                ((a_lo - ANGLE_EPS) / grid_step).ceil() as i64,
                ((a_hi + ANGLE_EPS) / grid_step).floor() as i64,
            )
        };
        if l0 > l1 || k0 > k1 {
            continue;
        }
        for k in k0..=k1 {
            let ka = k.rem_euclid(n_a as i64) as usize;
            for l in l0..=l1 {
                hit[ka * n_e + l] = true;
            }
        }
    }
    let uncovered: Vec<BeamAngle> = hit
        .iter()
        .enumerate()
        .filter(|(_, h)| !**h)
        .map(|(idx, _)| {
            BeamAngle::new((idx / n_e) as f64 * grid_step, (idx % n_e) as f64 * grid_step)
        })
        .collect();
    CoverageReport {
        covered: uncovered.is_empty(),
        grid_points: hit.len(),
        uncovered,
    }
}

/// The `(m_s, n_s)` values a codebook is built from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSet {
    pub m_values: Vec<usize>,
    pub n_values: Vec<usize>,
}

impl LayerSet {
    /// Powers of two up to each maximum, plus the maximum itself.
    pub fn powers_of_two(m_max: usize, n_max: usize) -> Self {
        let ladder = |top: usize| {
            let mut v: Vec<usize> = std::iter::successors(Some(1usize), |x| Some(x * 2))
                .take_while(|&x| x <= top)
                .collect();
            if v.last() != Some(&top) {
                v.push(top);
            }
            v
        };
        Self {
            m_values: ladder(m_max),
            n_values: ladder(n_max),
        }
    }

    pub fn single(id: LayerId) -> Self {
        Self {
            m_values: vec![id.m_s],
            n_values: vec![id.n_s],
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = LayerId> + '_ {
        self.m_values
            .iter()
            .flat_map(move |&m| self.n_values.iter().map(move |&n| LayerId::new(m, n)))
    }
}

/// A full hierarchical codebook for one array.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    geom: ArrayGeometry,
    pattern: ElementPattern,
    n_act_max: usize,
    layers: BTreeMap<LayerId, CodebookLayer>,
}

impl Codebook {
    /// Builds the default power-of-two hierarchy up to `(M, N_act,max)`.
    pub fn build_default(geom: &ArrayGeometry, pattern: &ElementPattern) -> Result<Self> {
        let n_max = n_act_max(geom, pattern)?;
        Self::build(geom, pattern, &LayerSet::powers_of_two(geom.m(), n_max))
    }

    pub fn build(geom: &ArrayGeometry, pattern: &ElementPattern, set: &LayerSet) -> Result<Self> {
        pattern.validate_for(geom)?;
        let n_max = n_act_max(geom, pattern)?;
        let mut layers = BTreeMap::new();
        for id in set.ids() {
            layers.insert(id, build_layer(geom, pattern, id.m_s, id.n_s)?);
        }
        if layers.is_empty() {
            return Err(Error::Config("empty layer set".into()));
        }
        Ok(Self {
            geom: geom.clone(),
            pattern: *pattern,
            n_act_max: n_max,
            layers,
        })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geom
    }

    pub fn pattern(&self) -> &ElementPattern {
        &self.pattern
    }

    pub fn n_act_max(&self) -> usize {
        self.n_act_max
    }

    pub fn layers(&self) -> impl Iterator<Item = &CodebookLayer> {
        self.layers.values()
    }

    pub fn layer(&self, id: LayerId) -> Result<&CodebookLayer> {
        self.layers
            .get(&id)
            .ok_or(Error::MissingLayer(id.m_s, id.n_s))
    }

    /// Largest layer present: largest `m_s`, then largest `n_s`.
    pub fn max_layer(&self) -> &CodebookLayer {
        self.layers.values().next_back().expect("codebook has layers")
    }

    pub fn m_values(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.layers.keys().map(|k| k.m_s).collect();
        v.dedup();
        v
    }

    pub fn n_values(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.layers.keys().map(|k| k.n_s).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn codeword_count(&self) -> usize {
        self.layers.values().map(|l| l.len()).sum()
    }

    pub fn export(&self, ids: &[LayerId]) -> Result<CodebookExport> {
        let mut layers = Vec::new();
        for id in ids {
            let l = self.layer(*id)?;
            let codewords = l
                .codewords()
                .iter()
                .map(|cw| {
                    let awv = cw.awv(&self.geom);
                    let weights = cw
                        .support()
                        .row_indices()
                        .flat_map(|m| cw.support().col_indices().map(move |n| (m, n)))
                        .map(|(m, n)| {
                            let w = awv.entries()[(m - 1) * self.geom.n() + n - 1];
                            (m, n, w.re, w.im)
                        })
                        .collect();
                    ExportedCodeword {
                        i: cw.i,
                        j: cw.j,
                        azimuth: cw.center().azimuth,
                        elevation: cw.center().elevation,
                        support: *cw.support(),
                        coverage: cw.coverage,
                        weights,
                    }
                })
                .collect();
            layers.push(ExportedLayer {
                m_s: id.m_s,
                n_s: id.n_s,
                bw_a: l.bw_a,
                bw_e: l.bw_e,
                n_az: l.n_az,
                n_el: l.n_el,
                codewords,
            });
        }
        Ok(CodebookExport {
            geometry: self.geom.clone(),
            pattern: self.pattern,
            n_act_max: self.n_act_max,
            layers,
        })
    }
}

/// Serializable codebook snapshot: layer metadata plus per-codeword support and weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookExport {
    pub geometry: ArrayGeometry,
    pub pattern: ElementPattern,
    pub n_act_max: usize,
    pub layers: Vec<ExportedLayer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedLayer {
    pub m_s: usize,
    pub n_s: usize,
    pub bw_a: f64,
    pub bw_e: f64,
    pub n_az: usize,
    pub n_el: usize,
    pub codewords: Vec<ExportedCodeword>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedCodeword {
    pub i: usize,
    pub j: usize,
    pub azimuth: f64,
    pub elevation: f64,
    pub support: SubarraySpec,
    pub coverage: Coverage,
    /// `(m, n, re, im)` for each support element.
    pub weights: Vec<(usize, usize, f64, f64)>,
}

impl CodebookExport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// One row of a polar pattern table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PatternRow {
    pub codeword: usize,
    pub azimuth_deg: f64,
    pub gain_db: f64,
}

/// Azimuth cuts of every codeword of layer `(m_s, n_s)` whose elevation bin
/// contains `elevation`, including element gains, in dB relative to the
/// strongest entry of the table.
///
/// Layers wider than the activation bound are allowed here.
pub fn pattern_table(
    geom: &ArrayGeometry,
    pattern: &ElementPattern,
    layer: LayerId,
    elevation: f64,
    step_deg: f64,
) -> Result<Vec<PatternRow>> {
    let beams = layer_beams(geom, pattern, layer.m_s, layer.n_s)?;
    let (_, bw_e) = layer_beamwidth(geom, pattern, layer.m_s, layer.n_s);
    let j = ((elevation / bw_e) - 1e-12).ceil().max(1.0) as usize;
    let steps = (360.0 / step_deg).round() as usize;
    let mut rows = Vec::new();
    for cw in beams.iter().filter(|c| c.j == j) {
        for s in 0..steps {
            let az = s as f64 * step_deg;
            let r = cw
                .beam
                .response(geom, pattern, BeamAngle::new(az.to_radians(), elevation))
                .norm();
            rows.push(PatternRow {
                codeword: cw.i,
                azimuth_deg: az,
                gain_db: r,
            });
        }
    }
    let peak = rows.iter().map(|r| r.gain_db).fold(0.0, f64::max);
    for r in &mut rows {
        r.gain_db = if r.gain_db > 0.0 && peak > 0.0 {
            (20.0 * (r.gain_db / peak).log10()).max(-100.0)
        } else {
            -100.0
        };
    }
    Ok(rows)
}
