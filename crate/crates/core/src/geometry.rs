//! Domains with exact Euclidean distance to the boundary, closest-point
//! projection and uniform samplers on `Ω` and `∂Ω`.
//!
//! Projection ties (equidistant faces or shells) are broken deterministically:
//! lowest axis index first, lower face before upper face, inner boundary
//! component before outer.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::unit_direction_into;

/// Slack allowed when deciding whether a point lies in the closure of `Ω`.
pub const CLOSURE_TOLERANCE: f64 = 1e-12;

/// Cap on rejection-sampling attempts for a single interior point.
pub const MAX_REJECTION_ATTEMPTS: usize = 1_000_000;

/// Operations every concrete domain provides.
///
/// `distance` and `project_into` assume the point lies in the closure of the
/// domain; the checked entry points live on [`Domain`].
pub trait Region {
    fn dim(&self) -> usize;

    /// Strict interior membership.
    fn contains(&self, x: &[f64]) -> bool;

    /// How far `x` lies outside the closure (0 for points in the closure).
    fn exterior_excess(&self, x: &[f64]) -> f64;

    fn distance(&self, x: &[f64]) -> f64;

    fn project_into(&self, x: &[f64], out: &mut [f64]);

    fn sample_interior_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()>;

    fn sample_boundary_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]);
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidGeometry(format!("dimension must be at least 2, got {d}")));
    }
    Ok(())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Axis-aligned box `Π (lower_i, upper_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperRectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Cumulative face-pair areas, normalised to end at 1.
    face_cdf: Vec<f64>,
}

impl HyperRectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        check_dim(lower.len())?;
        if lower.iter().zip(&upper).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidGeometry("box needs finite lower < upper on every axis".into()));
        }
        let sides: Vec<f64> = lower.iter().zip(&upper).map(|(l, h)| h - l).collect();
        // Area of a face normal to axis i is Π_{j≠i} side_j; work in logs so
        // d = 500 does not underflow.
        let log_total: f64 = sides.iter().map(|s| s.ln()).sum();
        let weights: Vec<f64> = sides.iter().map(|s| (log_total - s.ln()).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let face_cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Self { lower, upper, face_cdf })
    }

    pub fn unit_cube(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d], vec![1.0; d])
    }

    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn pick_axis(&self, u: f64) -> usize {
        self.face_cdf.iter().position(|&c| u < c).unwrap_or(self.face_cdf.len() - 1)
    }
}

impl Region for HyperRectangle {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, h))| l < v && v < h)
    }

    fn exterior_excess(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
            .fold(0.0, f64::max)
    }

    #[inline]
    fn distance(&self, x: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for ((v, l), h) in x.iter().zip(&self.lower).zip(&self.upper) {
            best = best.min(v - l).min(h - v);
        }
        best
    }

    fn project_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        let mut best = f64::INFINITY;
        let mut face = (0, self.lower[0]);
        for (i, ((v, l), h)) in x.iter().zip(&self.lower).zip(&self.upper).enumerate() {
            if v - l < best {
                best = v - l;
                face = (i, *l);
            }
            if h - v < best {
                best = h - v;
                face = (i, *h);
            }
        }
        out[face.0] = face.1;
    }

    fn sample_interior_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        for ((o, l), h) in out.iter_mut().zip(&self.lower).zip(&self.upper) {
            *o = l + (h - l) * rng.random::<f64>();
        }
        Ok(())
    }

    fn sample_boundary_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let axis = self.pick_axis(rng.random());
        let upper_face = rng.random::<bool>();
        for (i, ((o, l), h)) in out.iter_mut().zip(&self.lower).zip(&self.upper).enumerate() {
            *o = if i == axis {
                if upper_face {
                    *h
                } else {
                    *l
                }
            } else {
                l + (h - l) * rng.random::<f64>()
            };
        }
    }
}

/// Euclidean ball `B_R(center)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_dim(center.len())?;
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidGeometry(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn offset_norm(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
    }
}

impl Region for Ball {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.offset_norm(x) < self.radius
    }

    fn exterior_excess(&self, x: &[f64]) -> f64 {
        (self.offset_norm(x) - self.radius).max(0.0)
    }

    #[inline]
    fn distance(&self, x: &[f64]) -> f64 {
        self.radius - self.offset_norm(x)
    }

    fn project_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.offset_norm(x);
        if n == 0.0 {
            // Every boundary point is nearest; take the first axis direction.
            out.copy_from_slice(&self.center);
            out[0] += self.radius;
            return;
        }
        let s = self.radius / n;
        for ((o, v), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = c + (v - c) * s;
        }
    }

    fn sample_interior_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        unit_direction_into(rng, out);
        let rho = self.radius * rng.random::<f64>().powf(1.0 / self.dim() as f64);
        for (o, c) in out.iter_mut().zip(&self.center) {
            *o = c + rho * *o;
        }
        Ok(())
    }

    fn sample_boundary_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        unit_direction_into(rng, out);
        for (o, c) in out.iter_mut().zip(&self.center) {
            *o = c + self.radius * *o;
        }
    }
}

/// Spherical shell `{x : a < ‖x‖ < b}` centered at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalAnnulus {
    dim: usize,
    inner: f64,
    outer: f64,
}

impl SphericalAnnulus {
    pub fn new(dim: usize, inner: f64, outer: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(inner > 0.0 && inner < outer && outer.is_finite()) {
            return Err(Error::InvalidGeometry(format!("annulus needs 0 < a < b, got a={inner}, b={outer}")));
        }
        Ok(Self { dim, inner, outer })
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    /// Probability that a surface-uniform boundary point lies on the inner shell.
    pub fn inner_surface_fraction(&self) -> f64 {
        let q = ((self.dim - 1) as f64 * (self.inner / self.outer).ln()).exp();
        q / (1.0 + q)
    }
}

impl Region for SphericalAnnulus {
    fn dim(&self) -> usize {
        self.dim
    }

    fn contains(&self, x: &[f64]) -> bool {
        let n = norm(x);
        self.inner < n && n < self.outer
    }

    fn exterior_excess(&self, x: &[f64]) -> f64 {
        let n = norm(x);
        (self.inner - n).max(n - self.outer).max(0.0)
    }

    #[inline]
    fn distance(&self, x: &[f64]) -> f64 {
        let n = norm(x);
        (n - self.inner).min(self.outer - n)
    }

    fn project_into(&self, x: &[f64], out: &mut [f64]) {
        let n = norm(x);
        let target = if n - self.inner <= self.outer - n { self.inner } else { self.outer };
        let s = target / n;
        for (o, v) in out.iter_mut().zip(x) {
            *o = v * s;
        }
    }

    /// Rejection from the bounding ball of radius `b` (acceptance `1 − (a/b)^d`).
    fn sample_interior_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        let inv_d = 1.0 / self.dim as f64;
        for _ in 0..MAX_REJECTION_ATTEMPTS {
            let rho = self.outer * rng.random::<f64>().powf(inv_d);
            if rho > self.inner {
                unit_direction_into(rng, out);
                out.iter_mut().for_each(|v| *v *= rho);
                return Ok(());
            }
        }
        Err(Error::SamplingExhausted { attempts: MAX_REJECTION_ATTEMPTS })
    }

    fn sample_boundary_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let radius = if rng.random::<f64>() < self.inner_surface_fraction() { self.inner } else { self.outer };
        unit_direction_into(rng, out);
        out.iter_mut().for_each(|v| *v *= radius);
    }
}

/// Box with a centered cubic hole, `(−1,1)^d \ [−c,c]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangularAnnulus {
    dim: usize,
    hole: f64,
}

impl RectangularAnnulus {
    pub fn new(dim: usize, hole: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(hole > 0.0 && hole < 1.0) {
            return Err(Error::InvalidGeometry(format!("hole half-width must lie in (0, 1), got {hole}")));
        }
        Ok(Self { dim, hole })
    }

    pub fn hole(&self) -> f64 {
        self.hole
    }

    /// Surface-area share of the inner box boundary: `c^{d−1} / (1 + c^{d−1})`.
    pub fn inner_surface_fraction(&self) -> f64 {
        let q = self.hole.powi(self.dim as i32 - 1);
        q / (1.0 + q)
    }

    fn outer_gap(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| 1.0 - v.abs()).fold(f64::INFINITY, f64::min)
    }

    fn hole_gap(&self, x: &[f64]) -> f64 {
        x.iter()
            .map(|v| {
                let e = (v.abs() - self.hole).max(0.0);
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }

    fn sample_cube_surface<R: Rng + ?Sized>(rng: &mut R, half: f64, out: &mut [f64]) {
        let axis = rng.random_range(0..out.len());
        for (i, o) in out.iter_mut().enumerate() {
            *o = if i == axis {
                if rng.random::<bool>() {
                    half
                } else {
                    -half
                }
            } else {
                half * (2.0 * rng.random::<f64>() - 1.0)
            };
        }
    }
}

impl Region for RectangularAnnulus {
    fn dim(&self) -> usize {
        self.dim
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() < 1.0) && x.iter().any(|v| v.abs() > self.hole)
    }

    fn exterior_excess(&self, x: &[f64]) -> f64 {
        let outside_box = x.iter().map(|v| v.abs() - 1.0).fold(0.0, f64::max);
        let inside_hole = (self.hole - x.iter().map(|v| v.abs()).fold(0.0, f64::max)).max(0.0);
        outside_box.max(inside_hole)
    }

    #[inline]
    fn distance(&self, x: &[f64]) -> f64 {
        self.outer_gap(x).min(self.hole_gap(x))
    }

    fn project_into(&self, x: &[f64], out: &mut [f64]) {
        if self.hole_gap(x) <= self.outer_gap(x) {
            for (o, v) in out.iter_mut().zip(x) {
                *o = v.clamp(-self.hole, self.hole);
            }
            return;
        }
        out.copy_from_slice(x);
        let mut best = f64::INFINITY;
        let mut face = (0, -1.0);
        for (i, v) in x.iter().enumerate() {
            if v + 1.0 < best {
                best = v + 1.0;
                face = (i, -1.0);
            }
            if 1.0 - v < best {
                best = 1.0 - v;
                face = (i, 1.0);
            }
        }
        out[face.0] = face.1;
    }

    /// Rejection from `(−1,1)^d` (acceptance `1 − c^d`).
    fn sample_interior_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        for _ in 0..MAX_REJECTION_ATTEMPTS {
            out.iter_mut().for_each(|v| *v = 2.0 * rng.random::<f64>() - 1.0);
            if self.contains(out) {
                return Ok(());
            }
        }
        Err(Error::SamplingExhausted { attempts: MAX_REJECTION_ATTEMPTS })
    }

    fn sample_boundary_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let half = if rng.random::<f64>() < self.inner_surface_fraction() { self.hole } else { 1.0 };
        Self::sample_cube_surface(rng, half, out);
    }
}

/// The domains known to the solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    HyperRectangle(HyperRectangle),
    Ball(Ball),
    SphericalAnnulus(SphericalAnnulus),
    RectangularAnnulus(RectangularAnnulus),
}

macro_rules! dispatch {
    ($self:ident, $d:ident => $e:expr) => {
        match $self {
            Domain::HyperRectangle($d) => $e,
            Domain::Ball($d) => $e,
            Domain::SphericalAnnulus($d) => $e,
            Domain::RectangularAnnulus($d) => $e,
        }
    };
}

impl Region for Domain {
    fn dim(&self) -> usize {
        dispatch!(self, d => d.dim())
    }

    fn contains(&self, x: &[f64]) -> bool {
        dispatch!(self, d => d.contains(x))
    }

    fn exterior_excess(&self, x: &[f64]) -> f64 {
        dispatch!(self, d => d.exterior_excess(x))
    }

    #[inline]
    fn distance(&self, x: &[f64]) -> f64 {
        dispatch!(self, d => d.distance(x))
    }

    fn project_into(&self, x: &[f64], out: &mut [f64]) {
        dispatch!(self, d => d.project_into(x, out))
    }

    fn sample_interior_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        dispatch!(self, d => d.sample_interior_into(rng, out))
    }

    fn sample_boundary_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        dispatch!(self, d => d.sample_boundary_into(rng, out))
    }
}

impl Domain {
    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let excess = self.exterior_excess(x);
        if excess > CLOSURE_TOLERANCE || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutsideDomain { excess });
        }
        Ok(())
    }

    /// Euclidean distance from `x` to `∂Ω`; rejects points outside the closure.
    pub fn dist_to_boundary(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.distance(x).max(0.0))
    }

    /// Nearest boundary point of `x`; rejects points outside the closure.
    pub fn project_to_boundary(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; x.len()];
        self.project_into(x, &mut out);
        Ok(out)
    }

    /// `n` i.i.d. uniform interior points, one per row.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((n, self.dim()));
        for mut row in out.rows_mut() {
            self.sample_interior_into(rng, row.as_slice_mut().expect("standard layout"))?;
        }
        Ok(out)
    }

    /// `n` i.i.d. boundary points, uniform with respect to surface measure.
    pub fn sample_boundary<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Array2<f64> {
        let mut out = Array2::zeros((n, self.dim()));
        for mut row in out.rows_mut() {
            self.sample_boundary_into(rng, row.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

impl From<HyperRectangle> for Domain {
    fn from(d: HyperRectangle) -> Self {
        Domain::HyperRectangle(d)
    }
}

impl From<Ball> for Domain {
    fn from(d: Ball) -> Self {
        Domain::Ball(d)
    }
}

impl From<SphericalAnnulus> for Domain {
    fn from(d: SphericalAnnulus) -> Self {
        Domain::SphericalAnnulus(d)
    }
}

impl From<RectangularAnnulus> for Domain {
    fn from(d: RectangularAnnulus) -> Self {
        Domain::RectangularAnnulus(d)
    }
}
