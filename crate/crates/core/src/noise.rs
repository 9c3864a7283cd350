//! Parametric Lévy increment families.
//!
//! Every family is described through its cumulant (log characteristic
//! function) over one sampling interval `h`, so the increment law is
//! `φ_h(u) = exp(h·ψ_1(u))` with no principal-branch power ever taken.
//!
//! | family | `eta` | log cf over `h` |
//! |---|---|---|
//! | Gaussian | `(μ, σ)` | `h(iuμ − σ²u²/2)` |
//! | variance gamma | `(σ, ν, θ)` | `−(h/ν)·ln(1 − iuθν + σ²νu²/2)` |
//! | NIG | `(α, β, δ, μ)` | `h(iuμ + δ(√(α²−β²) − √(α²−(β+iu)²)))` |
//!
//! The variance gamma convention carries no separate drift term.
//!
//! Note: the exponential square-moment assumption behind the asymptotic
//! theory holds only for the Gaussian family. The VG and NIG families are
//! provided for practical use without that guarantee.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    VarianceGamma,
    NormalInverseGaussian,
}

impl Family {
    pub fn n_params(self) -> usize {
        self.param_names().len()
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Gaussian => &["mu", "sigma"],
            Family::VarianceGamma => &["sigma", "nu", "theta"],
            Family::NormalInverseGaussian => &["alpha", "beta", "delta", "mu"],
        }
    }

    /// Which parameters are strictly positive scales (as opposed to
    /// locations, skews and drifts).
    pub fn positive_params(self) -> &'static [bool] {
        match self {
            Family::Gaussian => &[false, true],
            Family::VarianceGamma => &[true, true, false],
            Family::NormalInverseGaussian => &[true, false, true, false],
        }
    }

    /// Checks the open parameter domain of the family.
    pub fn validate(self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.n_params() {
            return Err(Error::Domain(format!(
                "{self:?} expects {} parameters, got {}",
                self.n_params(),
                eta.len()
            )));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameter in {eta:?}")));
        }
        let ok = match self {
            Family::Gaussian => eta[1] > 0.0,
            Family::VarianceGamma => eta[0] > 0.0 && eta[1] > 0.0,
            Family::NormalInverseGaussian => eta[0] > eta[1].abs() && eta[2] > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("{self:?} parameters {eta:?} outside the family domain")))
        }
    }

    pub fn is_valid(self, eta: &[f64]) -> bool {
        self.validate(eta).is_ok()
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "variance-gamma" | "vg" => Ok(Family::VarianceGamma),
            "normal-inverse-gaussian" | "nig" => Ok(Family::NormalInverseGaussian),
            other => Err(Error::Config(format!("unknown noise family '{other}'"))),
        }
    }
}

/// A Lévy increment law over a sampling interval `h_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    family: Family,
    eta: Vec<f64>,
    h_step: f64,
}

impl NoiseModel {
    pub fn new(family: Family, eta: Vec<f64>, h_step: f64) -> Result<Self> {
        family.validate(&eta)?;
        if !(h_step.is_finite() && h_step > 0.0) {
            return Err(Error::Domain(format!("sampling interval must be positive, got {h_step}")));
        }
        Ok(Self { family, eta, h_step })
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Gaussian, vec![mu, sigma], 1.0)
    }

    pub fn variance_gamma(sigma: f64, nu: f64, theta: f64) -> Result<Self> {
        Self::new(Family::VarianceGamma, vec![sigma, nu, theta], 1.0)
    }

    pub fn nig(alpha: f64, beta: f64, delta: f64, mu: f64) -> Result<Self> {
        Self::new(Family::NormalInverseGaussian, vec![alpha, beta, delta, mu], 1.0)
    }

    /// Same family and interval, new parameters.
    pub fn with_eta(&self, eta: &[f64]) -> Result<Self> {
        Self::new(self.family, eta.to_vec(), self.h_step)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn h_step(&self) -> f64 {
        self.h_step
    }

    pub fn n_params(&self) -> usize {
        self.eta.len()
    }

    /// Cumulant `ln φ(u, η)` over one interval.
    pub fn log_cf(&self, u: f64) -> Complex64 {
        let h = self.h_step;
        let i = Complex64::i();
        match self.family {
            Family::Gaussian => {
                let (mu, s) = (self.eta[0], self.eta[1]);
                Complex64::new(-0.5 * h * u * u * s * s, h * u * mu)
            }
            Family::VarianceGamma => {
                let (s, nu, th) = (self.eta[0], self.eta[1], self.eta[2]);
                // Re(z) ≥ 1, so the principal log is continuous in u.
                let z = Complex64::new(1.0 + 0.5 * s * s * nu * u * u, -u * th * nu);
                -(h / nu) * z.ln()
            }
            Family::NormalInverseGaussian => {
                let (a, b, d, mu) = (self.eta[0], self.eta[1], self.eta[2], self.eta[3]);
                let gamma = (a * a - b * b).sqrt();
                let s = nig_root(a, b, u);
                h * (i * u * mu + d * (gamma - s))
            }
        }
    }

    /// Characteristic function `φ(u, η)`.
    pub fn cf(&self, u: f64) -> Complex64 {
        self.log_cf(u).exp()
    }

    /// Gradient `∂φ(u, η)/∂η_j`, one entry per parameter.
    pub fn cf_grad(&self, u: f64) -> Vec<Complex64> {
        let phi = self.cf(u);
        self.log_cf_grad(u).into_iter().map(|d| d * phi).collect()
    }

    fn log_cf_grad(&self, u: f64) -> Vec<Complex64> {
        let h = self.h_step;
        let i = Complex64::i();
        match self.family {
            Family::Gaussian => {
                let s = self.eta[1];
                vec![i * (h * u), Complex64::new(-h * u * u * s, 0.0)]
            }
            Family::VarianceGamma => {
                let (s, nu, th) = (self.eta[0], self.eta[1], self.eta[2]);
                let z = Complex64::new(1.0 + 0.5 * s * s * nu * u * u, -u * th * nu);
                let dz_dnu = Complex64::new(0.5 * s * s * u * u, -u * th);
                vec![
                    Complex64::new(-h * s * u * u, 0.0) / z,
                    (h / (nu * nu)) * z.ln() - (h / nu) * dz_dnu / z,
                    i * (h * u) / z,
                ]
            }
            Family::NormalInverseGaussian => {
                let (a, b, d) = (self.eta[0], self.eta[1], self.eta[2]);
                let gamma = (a * a - b * b).sqrt();
                let s = nig_root(a, b, u);
                vec![
                    h * d * (a / gamma - a / s),
                    h * d * (-b / gamma + (b + i * u) / s),
                    h * (gamma - s),
                    i * (h * u),
                ]
            }
        }
    }

    /// Mean of one increment.
    pub fn mean(&self) -> f64 {
        let h = self.h_step;
        match self.family {
            Family::Gaussian => h * self.eta[0],
            Family::VarianceGamma => h * self.eta[2],
            Family::NormalInverseGaussian => {
                let (a, b, d, mu) = (self.eta[0], self.eta[1], self.eta[2], self.eta[3]);
                h * (mu + d * b / (a * a - b * b).sqrt())
            }
        }
    }

    /// Variance of one increment.
    pub fn variance(&self) -> f64 {
        let h = self.h_step;
        match self.family {
            Family::Gaussian => h * self.eta[1] * self.eta[1],
            Family::VarianceGamma => {
                let (s, nu, th) = (self.eta[0], self.eta[1], self.eta[2]);
                h * (s * s + nu * th * th)
            }
            Family::NormalInverseGaussian => {
                let (a, b, d) = (self.eta[0], self.eta[1], self.eta[2]);
                let gamma = (a * a - b * b).sqrt();
                h * d * a * a / gamma.powi(3)
            }
        }
    }

    /// Draws `n` i.i.d. increments; bit-exact given `(self, seed, n)`.
    pub fn sample(&self, n: usize, seed: u64) -> IncrementSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = self.sample_with(&mut rng, n);
        IncrementSample { values, seed, model: self.clone() }
    }

    /// Draws `n` increments from a caller-owned generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let h = self.h_step;
        match self.family {
            Family::Gaussian => {
                let (mu, s) = (self.eta[0], self.eta[1]);
                let scale = s * h.sqrt();
                (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        mu * h + scale * z
                    })
                    .collect()
            }
            Family::VarianceGamma => {
                let (s, nu, th) = (self.eta[0], self.eta[1], self.eta[2]);
                // Gamma time change with E[G] = h, Var[G] = hν.
                let gamma = Gamma::new(h / nu, nu).expect("validated VG parameters");
                (0..n)
                    .map(|_| {
                        let g: f64 = gamma.sample(rng);
                        let z: f64 = StandardNormal.sample(rng);
                        th * g + s * g.sqrt() * z
                    })
                    .collect()
            }
            Family::NormalInverseGaussian => {
                let (a, b, d, mu) = (self.eta[0], self.eta[1], self.eta[2], self.eta[3]);
                let gamma = (a * a - b * b).sqrt();
                let ig_mean = d * h / gamma;
                let ig_shape = (d * h) * (d * h);
                (0..n)
                    .map(|_| {
                        let v = inverse_gaussian(rng, ig_mean, ig_shape);
                        let z: f64 = StandardNormal.sample(rng);
                        mu * h + b * v + v.sqrt() * z
                    })
                    .collect()
            }
        }
    }
}

/// `√(α² − (β + iu)²)`; the radicand has positive real part for `α > |β|`.
fn nig_root(a: f64, b: f64, u: f64) -> Complex64 {
    Complex64::new(a * a - b * b + u * u, -2.0 * b * u).sqrt()
}

/// Inverse Gaussian draw via the Michael–Schucany–Haas transform.
fn inverse_gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, shape: f64) -> f64 {
    let n: f64 = StandardNormal.sample(rng);
    let y = n * n;
    let m = mean;
    let x = m + m * m * y / (2.0 * shape)
        - (m / (2.0 * shape)) * (4.0 * m * shape * y + m * m * y * y).sqrt();
    let accept: f64 = rng.random();
    if accept <= m / (m + x) {
        x
    } else {
        m * m / x
    }
}

/// Realized i.i.d. increments of a [`NoiseModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSample {
    pub values: Vec<f64>,
    pub seed: u64,
    pub model: NoiseModel,
}

/// Empirical characteristic function `mean(exp(iuY))`.
pub fn empirical_cf(data: &[f64], u: f64) -> Complex64 {
    let n = data.len().max(1) as f64;
    let (re, im) = data.iter().fold((0.0, 0.0), |(re, im), &y| {
        let (s, c) = (u * y).sin_cos();
        (re + c, im + s)
    });
    Complex64::new(re / n, im / n)
}
