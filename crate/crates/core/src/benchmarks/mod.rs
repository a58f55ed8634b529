//! Poisson problem instances: `Δu = f` in `Ω`, `u = g` on `∂Ω`.
//!
//! Every shipped problem except the parametric control family has a closed
//! form solution used for error measurement.

pub mod control;
pub mod expr;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Ball, Domain, HyperRectangle, RectangularAnnulus, Region, SphericalAnnulus};
use expr::Expr;

/// Scalar field `(x, c) ↦ value`, where `c` holds problem parameters (empty
/// for non-parametric problems).
pub type Field = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Axis-aligned box of admissible problem parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, h)| l > h) {
            return Err(Error::InvalidConfig("parameter box needs matching lower <= upper bounds".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, c: &[f64]) -> bool {
        c.len() == self.dim() && c.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, h))| l <= v && v <= h)
    }

    pub fn clamp(&self, c: &mut [f64]) {
        for (v, (l, h)) in c.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, self.dim()), |(_, j)| {
            self.lower[j] + (self.upper[j] - self.lower[j]) * rng.random::<f64>()
        })
    }
}

/// A Dirichlet Poisson problem, optionally parametrised by `c ∈ params`.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub domain: Domain,
    /// `None` means `f ≡ 0`; walks then skip the Green's function draws.
    pub source: Option<Field>,
    pub boundary: Field,
    pub solution: Option<Field>,
    pub params: Option<ParamBox>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("has_source", &self.source.is_some())
            .field("has_solution", &self.solution.is_some())
            .field("params", &self.params)
            .finish()
    }
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn param_dim(&self) -> usize {
        self.params.as_ref().map_or(0, ParamBox::dim)
    }

    /// Width of the network input: spatial coordinates followed by parameters.
    pub fn input_dim(&self) -> usize {
        self.dim() + self.param_dim()
    }

    pub fn source_at(&self, x: &[f64], c: &[f64]) -> f64 {
        self.source.as_ref().map_or(0.0, |f| f(x, c))
    }

    pub fn boundary_at(&self, x: &[f64], c: &[f64]) -> f64 {
        (self.boundary)(x, c)
    }

    pub fn solution_at(&self, x: &[f64], c: &[f64]) -> Result<f64> {
        self.solution.as_ref().map(|u| u(x, c)).ok_or_else(|| Error::MissingSolution(self.name.clone()))
    }

    /// Uniform interior points joined with uniform parameters, as network inputs.
    pub fn sample_interior_inputs<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Array2<f64>> {
        let x = self.domain.sample_interior(rng, n)?;
        Ok(self.attach_params(rng, x))
    }

    /// Surface-uniform boundary points joined with uniform parameters.
    pub fn sample_boundary_inputs<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Array2<f64> {
        let x = self.domain.sample_boundary(rng, n);
        self.attach_params(rng, x)
    }

    fn attach_params<R: Rng + ?Sized>(&self, rng: &mut R, x: Array2<f64>) -> Array2<f64> {
        match &self.params {
            Some(pb) => {
                let c = pb.sample(rng, x.nrows());
                concatenate![Axis(1), x, c]
            }
            None => x,
        }
    }

    /// Splits network inputs into spatial and parameter views.
    pub fn split_inputs<'a>(&self, inputs: &'a ArrayView2<'a, f64>) -> (ArrayView2<'a, f64>, ArrayView2<'a, f64>) {
        inputs.view().split_at(Axis(1), self.dim())
    }

    /// Boundary data at each input row (spatial part projected onto `∂Ω` first).
    pub fn boundary_values(&self, inputs: ArrayView2<f64>) -> Vec<f64> {
        let d = self.dim();
        let mut proj = vec![0.0; d];
        inputs
            .rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                self.domain.project_into(&row[..d], &mut proj);
                self.boundary_at(&proj, &row[d..])
            })
            .collect()
    }

    /// Analytic solution at each input row.
    pub fn solution_values(&self, inputs: ArrayView2<f64>) -> Result<Vec<f64>> {
        let u = self.solution.as_ref().ok_or_else(|| Error::MissingSolution(self.name.clone()))?;
        let d = self.dim();
        Ok(inputs
            .rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                u(&row[..d], &row[d..])
            })
            .collect())
    }

    /// Constant boundary data and zero source on any domain: `u ≡ value`.
    pub fn constant(domain: Domain, value: f64) -> Problem {
        Problem {
            name: format!("constant{}", domain.dim()),
            domain,
            source: None,
            boundary: Arc::new(move |_, _| value),
            solution: Some(Arc::new(move |_, _| value)),
            params: None,
        }
    }

    /// A box-domain problem whose terms are given as [`Expr`] sources.
    pub fn custom_box(
        name: &str,
        lower: Vec<f64>,
        upper: Vec<f64>,
        source: Option<&str>,
        boundary: &str,
        solution: Option<&str>,
    ) -> Result<Problem> {
        let domain: Domain = HyperRectangle::new(lower, upper)?.into();
        let d = domain.dim();
        let field = |src: &str| -> Result<Field> {
            let e = Expr::parse(src, d)?;
            Ok(Arc::new(move |x: &[f64], _: &[f64]| e.eval(x)))
        };
        Ok(Problem {
            name: name.to_string(),
            domain,
            source: source.map(field).transpose()?,
            boundary: field(boundary)?,
            solution: solution.map(field).transpose()?,
            params: None,
        })
    }
}

/// Laplace problem on `(0,1)^d` with `g = u = Σ_i x_{2i} x_{2i+1}`.
pub fn laplace(d: usize) -> Result<Problem> {
    let u: Field = Arc::new(|x: &[f64], _: &[f64]| x.chunks_exact(2).map(|p| p[0] * p[1]).sum());
    Ok(Problem {
        name: format!("laplace{d}"),
        domain: HyperRectangle::unit_cube(d)?.into(),
        source: None,
        boundary: u.clone(),
        solution: Some(u),
        params: None,
    })
}

/// Poisson problem on `(0,1)^d` with `f = 2d` and `g = u = Σ x_i²`.
pub fn poisson(d: usize) -> Result<Problem> {
    let u: Field = Arc::new(|x: &[f64], _: &[f64]| x.iter().map(|v| v * v).sum());
    let f = 2.0 * d as f64;
    Ok(Problem {
        name: format!("poisson{d}"),
        domain: HyperRectangle::unit_cube(d)?.into(),
        source: Some(Arc::new(move |_, _| f)),
        boundary: u.clone(),
        solution: Some(u),
        params: None,
    })
}

/// Poisson problem on `(−1,1)^d \ [−c,c]^d`, `c = 0.25^{1/d}`, with
/// `u = g = (1/d) Σ sin(2π x_i)` and `f = −(4π²/d) Σ sin(2π x_i)`.
pub fn poisson_rect(d: usize) -> Result<Problem> {
    let inv_d = 1.0 / d as f64;
    let u: Field = Arc::new(move |x: &[f64], _: &[f64]| inv_d * x.iter().map(|v| (2.0 * PI * v).sin()).sum::<f64>());
    let uf = u.clone();
    Ok(Problem {
        name: format!("poisson-rect{d}"),
        domain: RectangularAnnulus::new(d, 0.25f64.powf(inv_d))?.into(),
        source: Some(Arc::new(move |x, c| -4.0 * PI * PI * uf(x, c))),
        boundary: u.clone(),
        solution: Some(u),
        params: None,
    })
}

/// Committor of the annulus `1 < ‖x‖ < 2`: probability of reaching the outer
/// sphere first, `u = (a^{2−d} − ‖x‖^{2−d}) / (a^{2−d} − b^{2−d})`.
pub fn committor(d: usize) -> Result<Problem> {
    committor_with(d, 1.0, 2.0)
}

pub fn committor_with(d: usize, a: f64, b: f64) -> Result<Problem> {
    let domain = SphericalAnnulus::new(d, a, b)?;
    let mid = 0.5 * (a + b);
    let p = 2.0 - d as f64;
    let u: Field = Arc::new(move |x: &[f64], _: &[f64]| {
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if d == 2 {
            (n / a).ln() / (b / a).ln()
        } else {
            // Divide through by a^{2−d} to stay finite for large d.
            (1.0 - (n / a).powf(p)) / (1.0 - (b / a).powf(p))
        }
    });
    Ok(Problem {
        name: format!("committor{d}"),
        domain: domain.into(),
        source: None,
        boundary: Arc::new(move |x: &[f64], _: &[f64]| {
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > mid {
                1.0
            } else {
                0.0
            }
        }),
        solution: Some(u),
        params: None,
    })
}

/// Unit source on the unit ball, zero boundary data: `u = (‖x‖² − 1)/(2d)`.
pub fn poisson_ball(d: usize) -> Result<Problem> {
    let two_d = 2.0 * d as f64;
    Ok(Problem {
        name: format!("poisson-ball{d}"),
        domain: Ball::new(vec![0.0; d], 1.0)?.into(),
        source: Some(Arc::new(|_, _| 1.0)),
        boundary: Arc::new(|_, _| 0.0),
        solution: Some(Arc::new(move |x: &[f64], _: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() - 1.0) / two_d)),
        params: None,
    })
}

/// Builds a shipped problem by name. A trailing number sets the dimension
/// (`laplace10`, `poisson50`, `committor10`, `poisson-rect10`, `poisson-ball3`);
/// `dim` overrides it. `control` is the parametric family on the unit square.
pub fn make_problem(name: &str, dim: Option<usize>) -> Result<Problem> {
    let stem = name.trim_end_matches(|c: char| c.is_ascii_digit());
    let suffix = &name[stem.len()..];
    let parsed = if suffix.is_empty() {
        None
    } else {
        Some(suffix.parse::<usize>().map_err(|_| Error::UnknownProblem(name.to_string()))?)
    };
    let d = dim.or(parsed);
    let need = |default: usize| d.unwrap_or(default);
    match stem {
        "laplace" => laplace(need(10)),
        "poisson" => poisson(need(50)),
        "poisson-rect" => poisson_rect(need(10)),
        "committor" => committor(need(10)),
        "poisson-ball" => poisson_ball(need(3)),
        "control" | "parametric-control" => {
            if d.is_some_and(|d| d != 2) {
                return Err(Error::InvalidConfig("the control problem is two-dimensional".into()));
            }
            Ok(control::parametric_problem())
        }
        _ => Err(Error::UnknownProblem(name.to_string())),
    }
}
