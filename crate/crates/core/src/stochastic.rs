//! Sampling on spheres and balls, and the Green's function of the ball in its
//! volume-scaled form `G̃_r = |B_r|·G_r`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Draws below this fraction of the radius are treated as singular and redrawn.
pub const SINGULAR_RHO_FRACTION: f64 = 1e-12;

/// Gaussian direction draws shorter than this are discarded.
const MIN_GAUSSIAN_NORM: f64 = 1e-30;

/// Center, radius and a point drawn on or inside the ball.
#[derive(Clone, Debug, PartialEq)]
pub struct BallSample {
    pub center: Vec<f64>,
    pub radius: f64,
    pub draw: Vec<f64>,
}

/// Fills `out` with a direction uniform on the unit sphere.
pub fn unit_direction_into<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut norm2 = 0.0;
        for v in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = g;
            norm2 += g * g;
        }
        let norm = norm2.sqrt();
        if norm > MIN_GAUSSIAN_NORM {
            let inv = 1.0 / norm;
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

/// Radius of a volume-uniform draw in the `d`-ball of radius `r`, redrawn
/// until it clears the singular core around the center.
pub fn ball_radius<R: Rng + ?Sized>(rng: &mut R, r: f64, d: usize) -> f64 {
    let inv_d = 1.0 / d as f64;
    loop {
        let u: f64 = rng.random();
        let rho = r * u.powf(inv_d);
        if rho >= SINGULAR_RHO_FRACTION * r {
            return rho;
        }
    }
}

/// Uniform point on the sphere `∂B_r(center)`.
pub fn sample_sphere_surface<R: Rng + ?Sized>(center: &[f64], r: f64, rng: &mut R) -> Result<BallSample> {
    check_radius(r)?;
    let mut draw = vec![0.0; center.len()];
    unit_direction_into(rng, &mut draw);
    for (v, c) in draw.iter_mut().zip(center) {
        *v = c + r * *v;
    }
    Ok(BallSample { center: center.to_vec(), radius: r, draw })
}

/// Uniform point in the ball `B_r(center)`.
pub fn sample_ball_interior<R: Rng + ?Sized>(center: &[f64], r: f64, rng: &mut R) -> Result<BallSample> {
    check_radius(r)?;
    let d = center.len();
    let mut draw = vec![0.0; d];
    unit_direction_into(rng, &mut draw);
    let rho = ball_radius(rng, r, d);
    for (v, c) in draw.iter_mut().zip(center) {
        *v = c + rho * *v;
    }
    Ok(BallSample { center: center.to_vec(), radius: r, draw })
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!("sphere radius must be positive, got {r}")))
    }
}

/// `G̃_r(γ, z) = |B_r|·G_r(γ, z)` for `ρ = ‖γ − z‖`.
///
/// For `d > 2` the value is assembled in log space as
/// `exp(d·ln r + (2−d)·ln ρ − ln(d(d−2))) · (−expm1((d−2)·ln(ρ/r)))`, which
/// neither overflows `ρ^{2−d}` nor cancels near `ρ = r`.
pub fn green_tilde(r: f64, rho: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: d });
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidGeometry(format!("ball radius must be positive, got {r}")));
    }
    if rho > r {
        return Err(Error::RadiusOutOfRange { rho, r });
    }
    if !(rho >= SINGULAR_RHO_FRACTION * r) {
        return Err(Error::SingularDraw { rho, r });
    }
    Ok(green_tilde_unchecked(r, rho, d))
}

/// [`green_tilde`] without argument validation; callers guarantee
/// `0 < rho ≤ r` and `d ≥ 2`.
#[inline]
pub(crate) fn green_tilde_unchecked(r: f64, rho: f64, d: usize) -> f64 {
    let log_ratio = (rho / r).ln();
    if d == 2 {
        -0.5 * r * r * log_ratio
    } else {
        let df = d as f64;
        let ln_r = r.ln();
        let ln_rho = ln_r + log_ratio;
        let prefactor = (df * ln_r + (2.0 - df) * ln_rho - (df * (df - 2.0)).ln()).exp();
        prefactor * -((df - 2.0) * log_ratio).exp_m1()
    }
}
