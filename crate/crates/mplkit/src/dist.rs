//! Inverse Gaussian and generalized extreme value distributions: densities,
//! distribution/survivor functions, quantiles, and seeded samplers.
//!
//! Only the non-Gumbel GEV branch is implemented; shapes inside the guard
//! band `|xi| < SHAPE_GUARD` are rejected at construction because every
//! formula downstream divides by the shape.

use crate::error::Error;
use crate::Result;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use statrs::function::erf::erfc;

/// Rejection band around the Gumbel limit.
pub const SHAPE_GUARD: f64 = 1e-8;

/// Inverse Gaussian parameters: mean `mu`, dispersion `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IgParams {
    mu: f64,
    lambda: f64,
}

impl IgParams {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::NonPositive { name: "mu", value: mu });
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::NonPositive { name: "lambda", value: lambda });
        }
        Ok(IgParams { mu, lambda })
    }

    #[inline]
    pub fn mu(&self) -> f64 {
        self.mu
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Three-parameter GEV: location, scale, shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevParams3 {
    loc: f64,
    scale: f64,
    shape: f64,
}

impl GevParams3 {
    pub fn new(loc: f64, scale: f64, shape: f64) -> Result<Self> {
        if !loc.is_finite() {
            return Err(Error::NotFinite { name: "loc", value: loc });
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::NonPositive { name: "scale", value: scale });
        }
        if !shape.is_finite() {
            return Err(Error::NotFinite { name: "shape", value: shape });
        }
        if shape.abs() < SHAPE_GUARD {
            return Err(Error::ShapeNearZero { value: shape, guard: SHAPE_GUARD });
        }
        Ok(GevParams3 { loc, scale, shape })
    }

    #[inline]
    pub fn loc(&self) -> f64 {
        self.loc
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// `1 + shape * (y - loc) / scale`; the support is where this is positive.
    #[inline]
    pub fn m(&self, y: f64) -> f64 {
        1.0 + self.shape * (y - self.loc) / self.scale
    }

    #[inline]
    pub fn supports(&self, y: f64) -> bool {
        y.is_finite() && self.m(y) > 0.0
    }
}

/// Log density of IG(mu, lambda) at `x > 0`.
pub fn ig_logpdf(x: f64, p: &IgParams) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::NonPositive { name: "x", value: x });
    }
    let err = x - p.mu;
    Ok(0.5 * (p.lambda / (2.0 * std::f64::consts::PI * x.powi(3))).ln()
        - p.lambda * err * err / (2.0 * p.mu * p.mu * x))
}

/// Distribution function of IG(mu, lambda), in the standard normal closed form.
pub fn ig_cdf(x: f64, p: &IgParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z = (p.lambda / x).sqrt();
    let a = z * (x / p.mu - 1.0);
    let b = -z * (x / p.mu + 1.0);
    std_normal_cdf(a) + (2.0 * p.lambda / p.mu).exp() * std_normal_cdf(b)
}

#[inline]
fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Draws one IG(mu, lambda) variate by the normal transform with a binary
/// root choice: square a standard normal, solve the resulting quadratic,
/// and pick the root with probability `mu / (mu + root)`.
pub fn ig_draw<R: Rng + ?Sized>(p: &IgParams, rng: &mut R) -> f64 {
    let (mu, lambda) = (p.mu, p.lambda);
    let v: f64 = rng.sample(StandardNormal);
    let y = v * v;
    let x = mu + mu * mu * y / (2.0 * lambda)
        - (mu / (2.0 * lambda)) * (4.0 * mu * lambda * y + mu * mu * y * y).sqrt();
    let u: f64 = rng.gen();
    if u <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

/// `n` independent IG draws; reproducible given the caller's seeded stream.
pub fn ig_sample<R: Rng + ?Sized>(n: usize, p: &IgParams, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| ig_draw(p, rng)).collect()
}

/// Log density of the GEV at `y`. Support violations return the negative
/// infinity sentinel rather than an error so optimizers can reject the point.
pub fn gev_logpdf(y: f64, p: &GevParams3) -> f64 {
    let m = p.m(y);
    if !(m > 0.0) || !y.is_finite() {
        return f64::NEG_INFINITY;
    }
    let a = 1.0 / p.shape;
    -p.scale.ln() - (a + 1.0) * m.ln() - m.powf(-a)
}

/// GEV distribution function. Outside the support the value clamps to the
/// constant limit on that side (0 below a lower endpoint, 1 above an upper
/// endpoint).
pub fn gev_cdf(y: f64, p: &GevParams3) -> f64 {
    let m = p.m(y);
    if m <= 0.0 {
        // shape > 0 has a lower endpoint, shape < 0 an upper endpoint
        return if p.shape > 0.0 { 0.0 } else { 1.0 };
    }
    (-m.powf(-1.0 / p.shape)).exp()
}

/// GEV survivor function, `1 - gev_cdf` exactly.
pub fn gev_survivor(y: f64, p: &GevParams3) -> f64 {
    1.0 - gev_cdf(y, p)
}

/// GEV quantile function on the open unit interval:
/// `loc + scale * ((-ln u)^(-shape) - 1) / shape`.
pub fn gev_quantile(u: f64, p: &GevParams3) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::ProbabilityOutOfRange { value: u });
    }
    Ok(p.loc + p.scale * ((-u.ln()).powf(-p.shape) - 1.0) / p.shape)
}

/// Draws one GEV variate by inverting the distribution function at a
/// uniform from the open interval.
pub fn gev_draw<R: Rng + ?Sized>(p: &GevParams3, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    p.loc + p.scale * ((-u.ln()).powf(-p.shape) - 1.0) / p.shape
}

/// `n` independent GEV draws from the caller's stream.
pub fn gev_sample<R: Rng + ?Sized>(n: usize, p: &GevParams3, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| gev_draw(p, rng)).collect()
}
