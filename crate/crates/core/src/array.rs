//! Array geometry, steering vectors, sectored element gains and beam gains.
//!
//! Elements are addressed 1-based as `(m, n)`: `m` runs along the z-axis,
//! `n` around the ring (cylindrical) or along the row (planar). Dense vectors
//! are stored row-major, entry `(m, n)` at `(m - 1) * N + (n - 1)`.
//!
//! Angles follow one convention everywhere: azimuth `alpha` in the xy-plane
//! from +x, elevation `beta` in `[0, pi]` measured from +z. The sectored
//! elevation pattern `[-dbeta/2, dbeta/2]` is recentred at `pi/2`; that
//! conversion lives in [`elevation_offset`] only.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for closed-interval membership of angles.
pub(crate) const ANGLE_EPS: f64 = 1e-9;

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_2pi(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_pi(a: f64) -> f64 {
    let r = wrap_2pi(a);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Elevation measured from the ring plane, i.e. `beta - pi/2`.
pub fn elevation_offset(beta: f64) -> f64 {
    beta - FRAC_PI_2
}

/// A beam direction in an array frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamAngle {
    pub azimuth: f64,
    pub elevation: f64,
}

impl BeamAngle {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }
    }

    /// Unit direction vector `(sin b cos a, sin b sin a, cos b)`.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (sb, cb) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [sb * ca, sb * sa, cb]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Cylindrical,
    Planar,
}

/// Element lattice of a cylindrical conformal array or a planar array.
///
/// Planar arrays lie in the y-z plane with broadside along +x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "GeometryParams", try_from = "GeometryParams")]
pub struct ArrayGeometry {
    kind: ArrayKind,
    m: usize,
    n: usize,
    d_z: f64,
    d_row: f64,
    radius: f64,
    wavelength: f64,
    cache: ColumnCache,
}

/// Serialized form of [`ArrayGeometry`].
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GeometryParams {
    kind: ArrayKind,
    m: usize,
    n: usize,
    radius: f64,
    wavelength: f64,
}

impl From<ArrayGeometry> for GeometryParams {
    fn from(g: ArrayGeometry) -> Self {
        Self {
            kind: g.kind,
            m: g.m,
            n: g.n,
            radius: g.radius,
            wavelength: g.wavelength,
        }
    }
}

impl TryFrom<GeometryParams> for ArrayGeometry {
    type Error = Error;
    fn try_from(p: GeometryParams) -> Result<Self> {
        match p.kind {
            ArrayKind::Cylindrical => Self::cylindrical(p.m, p.n, p.radius, p.wavelength),
            ArrayKind::Planar => Self::planar(p.m, p.n, p.wavelength),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct ColumnCache {
    x: Vec<f64>,
    y: Vec<f64>,
    normal: Vec<f64>,
    z: Vec<f64>,
}

impl ArrayGeometry {
    /// Cylindrical array with half-wavelength z spacing and `2pi/N` pitch.
    pub fn cylindrical(m: usize, n: usize, radius: f64, wavelength: f64) -> Result<Self> {
        if radius <= 0.0 || !radius.is_finite() {
            return Err(Error::InvalidGeometry(format!("radius {radius}")));
        }
        Self::build(ArrayKind::Cylindrical, m, n, radius, wavelength)
    }

    /// Planar array with half-wavelength spacing in both directions.
    pub fn planar(m: usize, n: usize, wavelength: f64) -> Result<Self> {
        Self::build(ArrayKind::Planar, m, n, 0.0, wavelength)
    }

    fn build(kind: ArrayKind, m: usize, n: usize, radius: f64, wavelength: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidGeometry(format!("size {m}x{n}")));
        }
        if wavelength <= 0.0 || !wavelength.is_finite() {
            return Err(Error::InvalidGeometry(format!("wavelength {wavelength}")));
        }
        let mut g = Self {
            kind,
            m,
            n,
            d_z: wavelength / 2.0,
            d_row: wavelength / 2.0,
            radius,
            wavelength,
            cache: ColumnCache::default(),
        };
        g.fill_cache();
        Ok(g)
    }

    fn fill_cache(&mut self) {
        let n = self.n;
        let mut c = ColumnCache::default();
        for col in 1..=n {
            match self.kind {
                ArrayKind::Cylindrical => {
                    let phi = self.phi_unchecked(col);
                    c.x.push(self.radius * phi.cos());
                    c.y.push(self.radius * phi.sin());
                    c.normal.push(phi);
                }
                ArrayKind::Planar => {
                    c.x.push(0.0);
                    c.y.push((2.0 * col as f64 - 1.0 - n as f64) / 2.0 * self.d_row);
                    c.normal.push(0.0);
                }
            }
        }
        for row in 1..=self.m {
            c.z.push((self.m as f64 + 1.0 - 2.0 * row as f64) / 2.0 * self.d_z);
        }
        self.cache = c;
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }
    /// Element count along z.
    pub fn m(&self) -> usize {
        self.m
    }
    /// Element count around the ring (or along a planar row).
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn len(&self) -> usize {
        self.m * self.n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn d_z(&self) -> f64 {
        self.d_z
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }
    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }
    /// Angular pitch `2pi/N` of the ring.
    pub fn delta_phi(&self) -> f64 {
        TAU / self.n as f64
    }

    pub(crate) fn check_index(&self, m: usize, n: usize) -> Result<()> {
        if m == 0 || n == 0 || m > self.m || n > self.n {
            Err(Error::IndexOutOfRange {
                m,
                n,
                rows: self.m,
                cols: self.n,
            })
        } else {
            Ok(())
        }
    }

    fn phi_unchecked(&self, n: usize) -> f64 {
        (2.0 * n as f64 - 1.0 - self.n as f64) * self.delta_phi() / 2.0
    }

    /// Azimuth of the sector centre of column `n`: `phi_n` on a cylinder, 0 on a plane.
    pub(crate) fn column_normal(&self, n: usize) -> f64 {
        match self.kind {
            ArrayKind::Cylindrical => self.phi_unchecked(n),
            ArrayKind::Planar => 0.0,
        }
    }

    /// Element position in the array frame.
    pub fn element_position(&self, m: usize, n: usize) -> Result<[f64; 3]> {
        self.check_index(m, n)?;
        let c = &self.cache;
        Ok([c.x[n - 1], c.y[n - 1], c.z[m - 1]])
    }

    pub(crate) fn flat(&self, m: usize, n: usize) -> usize {
        (m - 1) * self.n + (n - 1)
    }

    /// Phase factor split into its z part and its column part.
    pub(crate) fn split_phases(&self, angle: BeamAngle) -> (Vec<f64>, Vec<f64>) {
        let c = &self.cache;
        let k = self.wavenumber();
        let (sb, cb) = angle.elevation.sin_cos();
        let (sa, ca) = angle.azimuth.sin_cos();
        let zp = c.z.iter().map(|z| k * z * cb).collect();
        let cp = c
            .x
            .iter()
            .zip(&c.y)
            .map(|(x, y)| k * sb * (x * ca + y * sa))
            .collect();
        (zp, cp)
    }
}

/// Ideal sectored element pattern widths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementPattern {
    pub delta_alpha: f64,
    pub delta_beta: f64,
}

impl ElementPattern {
    pub fn new(delta_alpha: f64, delta_beta: f64) -> Result<Self> {
        if !(delta_alpha > 0.0 && delta_alpha <= TAU + ANGLE_EPS) {
            return Err(Error::InvalidGeometry(format!("delta_alpha {delta_alpha}")));
        }
        if !(delta_beta > 0.0 && delta_beta <= PI + ANGLE_EPS) {
            return Err(Error::InvalidGeometry(format!("delta_beta {delta_beta}")));
        }
        Ok(Self {
            delta_alpha,
            delta_beta,
        })
    }

    /// Checks the full-coverage condition `delta_phi <= delta_alpha` for cylinders.
    pub fn validate_for(&self, geom: &ArrayGeometry) -> Result<()> {
        if geom.kind() == ArrayKind::Cylindrical && geom.delta_phi() > self.delta_alpha + ANGLE_EPS {
            return Err(Error::InvalidGeometry(format!(
                "ring pitch {} exceeds element width {}",
                geom.delta_phi(),
                self.delta_alpha
            )));
        }
        Ok(())
    }

    pub(crate) fn azimuth_active(&self, normal: f64, alpha: f64) -> bool {
        wrap_pi(alpha - normal).abs() <= self.delta_alpha / 2.0 + ANGLE_EPS
    }

    pub(crate) fn elevation_active(&self, beta: f64) -> bool {
        elevation_offset(beta).abs() <= self.delta_beta / 2.0 + ANGLE_EPS
    }
}

/// `phi_n = (2n - 1 - N) * delta_phi / 2`.
pub fn element_angular_position(geom: &ArrayGeometry, n: usize) -> Result<f64> {
    if geom.kind() != ArrayKind::Cylindrical {
        return Err(Error::NotCylindrical);
    }
    geom.check_index(1, n)?;
    Ok(geom.phi_unchecked(n))
}

/// Sectored gain of element `(m, n)`: 1 inside its closed sector, else 0.
pub fn element_gain(
    geom: &ArrayGeometry,
    pattern: &ElementPattern,
    m: usize,
    n: usize,
    angle: BeamAngle,
) -> Result<u8> {
    geom.check_index(m, n)?;
    let on = pattern.azimuth_active(geom.column_normal(n), angle.azimuth)
        && pattern.elevation_active(angle.elevation);
    Ok(on as u8)
}

/// Full steering vector, unit-modulus entries.
pub fn steering_vector(geom: &ArrayGeometry, angle: BeamAngle) -> Vec<Complex64> {
    let (zp, cp) = geom.split_phases(angle);
    let mut out = Vec::with_capacity(geom.len());
    for z in &zp {
        for c in &cp {
            out.push(Complex64::from_polar(1.0, z + c));
        }
    }
    out
}

/// Located rectangular subarray. Rows are contiguous, columns wrap modulo `N`.
///
/// The rectangle spans rows `m_c - floor(m_act/2) ..` and ring columns
/// `n_c - floor(n_act/2) ..`, each `m_act` (resp. `n_act`) long.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubarraySpec {
    rows: usize,
    cols: usize,
    pub m_act: usize,
    pub n_act: usize,
    pub m_c: usize,
    pub n_c: usize,
}

impl SubarraySpec {
    /// Strict constructor: the rectangle must fit between rows 1 and `M`.
    pub fn new(
        dims: (usize, usize),
        m_act: usize,
        n_act: usize,
        m_c: usize,
        n_c: usize,
    ) -> Result<Self> {
        let (rows, cols) = dims;
        if m_act == 0 || n_act == 0 || m_act > rows || n_act > cols {
            return Err(Error::InvalidSubarray(format!(
                "size {m_act}x{n_act} in a {rows}x{cols} array"
            )));
        }
        if m_c == 0 || m_c > rows || n_c == 0 || n_c > cols {
            return Err(Error::InvalidSubarray(format!("centre ({m_c}, {n_c})")));
        }
        let start = m_c as i64 - (m_act / 2) as i64;
        if start < 1 || start as usize + m_act - 1 > rows {
            return Err(Error::InvalidSubarray(format!(
                "{m_act} rows centred at {m_c} leave the array"
            )));
        }
        Ok(Self {
            rows,
            cols,
            m_act,
            n_act,
            m_c,
            n_c,
        })
    }

    /// Places the rectangle as close as possible to `(m_c, n_c)`: the ring
    /// index is reduced modulo `N`, the row window is shifted inward when it
    /// would cross an array edge.
    pub fn placed(
        dims: (usize, usize),
        m_act: usize,
        n_act: usize,
        m_c: i64,
        n_c: i64,
    ) -> Result<Self> {
        let (rows, cols) = dims;
        if m_act == 0 || m_act > rows {
            return Err(Error::InvalidSubarray(format!("{m_act} rows of {rows}")));
        }
        let lo = (m_act / 2 + 1) as i64;
        let hi = (rows - m_act + 1 + m_act / 2) as i64;
        let m_c = m_c.clamp(lo, hi) as usize;
        let n_c = (n_c - 1).rem_euclid(cols as i64) as usize + 1;
        Self::new(dims, m_act, n_act, m_c, n_c)
    }

    /// The whole array as one support.
    pub fn full(dims: (usize, usize)) -> Self {
        Self::placed(dims, dims.0, dims.1, (dims.0 / 2 + 1) as i64, (dims.1 / 2 + 1) as i64)
            .expect("full support always fits")
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.m_act * self.n_act
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_start(&self) -> usize {
        self.m_c - self.m_act / 2
    }

    /// First ring column, 1-based, after wrap.
    pub fn col_start(&self) -> usize {
        ((self.n_c as i64 - 1 - (self.n_act / 2) as i64).rem_euclid(self.cols as i64)) as usize + 1
    }

    pub fn row_indices(&self) -> impl Iterator<Item = usize> {
        let s = self.row_start();
        s..s + self.m_act
    }

    pub fn col_indices(&self) -> impl Iterator<Item = usize> {
        let s = self.col_start() - 1;
        let cols = self.cols;
        (0..self.n_act).map(move |k| (s + k) % cols + 1)
    }

    pub fn contains(&self, m: usize, n: usize) -> bool {
        if m < self.row_start() || m >= self.row_start() + self.m_act || n == 0 || n > self.cols {
            return false;
        }
        let off = (n as i64 - self.col_start() as i64).rem_euclid(self.cols as i64) as usize;
        off < self.n_act
    }

    /// True when the two supports share at least one element.
    pub fn overlaps(&self, other: &SubarraySpec) -> bool {
        self.row_indices()
            .any(|m| other.row_indices().any(|m2| m2 == m))
            && self.col_indices().any(|n| other.col_indices().any(|n2| n2 == n))
    }
}

/// Steering vector zeroed outside `support`.
pub fn masked_steering(
    geom: &ArrayGeometry,
    angle: BeamAngle,
    support: &SubarraySpec,
) -> Vec<Complex64> {
    let mut a = steering_vector(geom, angle);
    for m in 1..=geom.m() {
        for n in 1..=geom.n() {
            if !support.contains(m, n) {
                a[geom.flat(m, n)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    a
}

/// Unit-norm weight vector confined to a support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Awv {
    entries: Vec<Complex64>,
    support: SubarraySpec,
}

impl Awv {
    /// Masks `entries` to `support` and normalizes.
    pub fn from_masked(mut entries: Vec<Complex64>, support: SubarraySpec) -> Result<Self> {
        let (rows, cols) = support.dims();
        if entries.len() != rows * cols {
            return Err(Error::InvalidSubarray(format!(
                "{} weights for a {rows}x{cols} array",
                entries.len()
            )));
        }
        for m in 1..=rows {
            for n in 1..=cols {
                if !support.contains(m, n) {
                    entries[(m - 1) * cols + n - 1] = Complex64::new(0.0, 0.0);
                }
            }
        }
        let norm = entries.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNormWeights);
        }
        entries.iter_mut().for_each(|c| *c /= norm);
        Ok(Self { entries, support })
    }

    /// Normalized masked steering vector toward `angle`.
    pub fn steered(geom: &ArrayGeometry, angle: BeamAngle, support: SubarraySpec) -> Result<Self> {
        Self::from_masked(steering_vector(geom, angle), support)
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn support(&self) -> &SubarraySpec {
        &self.support
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `G = sqrt(m_act n_act) a^H(angle, support) v`.
pub fn beam_gain(awv: &Awv, geom: &ArrayGeometry, angle: BeamAngle) -> Complex64 {
    let a = masked_steering(geom, angle, awv.support());
    let s: Complex64 = a
        .iter()
        .zip(awv.entries())
        .map(|(a, v)| a.conj() * v)
        .sum();
    s * (awv.support().len() as f64).sqrt()
}

/// Number of support elements whose sector contains `angle`.
pub fn sum_element_gain(
    geom: &ArrayGeometry,
    pattern: &ElementPattern,
    support: &SubarraySpec,
    angle: BeamAngle,
) -> usize {
    if !pattern.elevation_active(angle.elevation) {
        return 0;
    }
    let cols = support
        .col_indices()
        .filter(|&n| pattern.azimuth_active(geom.column_normal(n), angle.azimuth))
        .count();
    cols * support.m_act
}

/// A subarray steered toward a fixed direction: the weight vector is the
/// normalized masked steering vector at `center`.
///
/// Gains are evaluated in separable form, one sum over rows times one sum
/// over columns, so the dense vector is only built on request.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeredBeam {
    pub center: BeamAngle,
    pub support: SubarraySpec,
}

impl SteeredBeam {
    pub fn new(center: BeamAngle, support: SubarraySpec) -> Self {
        Self { center, support }
    }

    pub fn awv(&self, geom: &ArrayGeometry) -> Awv {
        Awv::steered(geom, self.center, self.support).expect("steering entries are unit modulus")
    }

    /// Unnormalized beam gain `sqrt(|S|) a^H v`.
    pub fn gain(&self, geom: &ArrayGeometry, angle: BeamAngle) -> Complex64 {
        let (zc, cc) = geom.split_phases(self.center);
        let (z, c) = geom.split_phases(angle);
        let zs: Complex64 = self
            .support
            .row_indices()
            .map(|m| Complex64::from_polar(1.0, zc[m - 1] - z[m - 1]))
            .sum();
        let cs: Complex64 = self
            .support
            .col_indices()
            .map(|n| Complex64::from_polar(1.0, cc[n - 1] - c[n - 1]))
            .sum();
        zs * cs
    }

    /// Receive-side response `w^H (Lambda o a(angle))` including element gains.
    pub fn response(&self, geom: &ArrayGeometry, pattern: &ElementPattern, angle: BeamAngle) -> Complex64 {
        if !pattern.elevation_active(angle.elevation) {
            return Complex64::new(0.0, 0.0);
        }
        let (zc, cc) = geom.split_phases(self.center);
        let (z, c) = geom.split_phases(angle);
        let zs: Complex64 = self
            .support
            .row_indices()
            .map(|m| Complex64::from_polar(1.0, z[m - 1] - zc[m - 1]))
            .sum();
        let cs: Complex64 = self
            .support
            .col_indices()
            .filter(|&n| pattern.azimuth_active(geom.column_normal(n), angle.azimuth))
            .map(|n| Complex64::from_polar(1.0, c[n - 1] - cc[n - 1]))
            .sum();
        zs * cs / (self.support.len() as f64).sqrt()
    }
}
