//! Mixed search domains, candidates, uniform sampling and the generalized
//! mutation operator.
//!
//! Every coordinate value is stored as an `f64`: booleans as `0.0`/`1.0`,
//! integers and categorical indices as integral floats. Tensor-shaped spaces
//! (images) are flat vectors with an optional shape annotation.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Redraws allowed when a mutated coordinate collides with its current value.
pub const MAX_RESAMPLE: usize = 100;

/// Largest dimensionality sampled by exact inversion of the binomial cdf.
pub const INVERSION_MAX_N: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoordinateDomain {
    Boolean,
    /// Inclusive integer range.
    Integer {
        lo: i64,
        hi: i64,
    },
    Real {
        lo: f64,
        hi: f64,
    },
    /// Indices `0..k`.
    Categorical {
        k: u32,
    },
}

impl CoordinateDomain {
    pub fn integer(lo: i64, hi: i64) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidSpace(format!("integer bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self::Integer { lo, hi })
    }

    pub fn real(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSpace(format!("real bounds must be finite with lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self::Real { lo, hi })
    }

    pub fn categorical(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidSpace(format!("categorical cardinality must be at least 2, got {k}")));
        }
        Ok(Self::Categorical { k })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Boolean => Ok(()),
            Self::Integer { lo, hi } => Self::integer(lo, hi).map(|_| ()),
            Self::Real { lo, hi } => Self::real(lo, hi).map(|_| ()),
            Self::Categorical { k } => Self::categorical(k).map(|_| ()),
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, Self::Real { .. })
    }

    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Self::Boolean => v == 0.0 || v == 1.0,
            Self::Integer { lo, hi } => v.fract() == 0.0 && v >= lo as f64 && v <= hi as f64,
            Self::Real { lo, hi } => v >= lo && v <= hi,
            Self::Categorical { k } => v.fract() == 0.0 && v >= 0.0 && v < f64::from(k),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Boolean => f64::from(rng.random_range(0u8..2)),
            Self::Integer { lo, hi } => rng.random_range(lo..=hi) as f64,
            Self::Real { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Categorical { k } => f64::from(rng.random_range(0..k)),
        }
    }

    /// Draws uniformly from the domain until the value differs from `current`.
    pub fn resample_distinct<R: Rng + ?Sized>(&self, current: f64, rng: &mut R) -> Result<f64> {
        for _ in 0..MAX_RESAMPLE {
            let v = self.sample(rng);
            if v != current {
                return Ok(v);
            }
        }
        Err(Error::Sampling(format!("no value distinct from {current} after {MAX_RESAMPLE} draws in {self:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    coords: Vec<CoordinateDomain>,
    shape: Option<Vec<usize>>,
}

impl SearchSpace {
    pub fn new(coords: Vec<CoordinateDomain>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidSpace("a search space needs at least one coordinate".into()));
        }
        for c in &coords {
            c.validate()?;
        }
        Ok(Self { coords, shape: None })
    }

    /// `n` copies of the same domain.
    pub fn uniform(domain: CoordinateDomain, n: usize) -> Result<Self> {
        Self::new(vec![domain; n])
    }

    pub fn boolean(n: usize) -> Result<Self> {
        Self::uniform(CoordinateDomain::Boolean, n)
    }

    pub fn real_box(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::uniform(CoordinateDomain::real(lo, hi)?, n)
    }

    /// Attaches a tensor shape; the product of `dims` must equal the dimensionality.
    pub fn with_shape(mut self, dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidSpace(format!("shape dims must be positive, got {dims:?}")));
        }
        let product: usize = dims.iter().product();
        if product != self.coords.len() {
            return Err(Error::InvalidSpace(format!(
                "shape {dims:?} has {product} cells but the space has {} coordinates",
                self.coords.len()
            )));
        }
        self.shape = Some(dims);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[CoordinateDomain] {
        &self.coords
    }

    pub fn shape(&self) -> Option<&[usize]> {
        self.shape.as_deref()
    }

    pub fn is_all_real(&self) -> bool {
        self.coords.iter().all(CoordinateDomain::is_real)
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.coords.len() && self.coords.iter().zip(values).all(|(d, &v)| d.contains(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub values: Vec<f64>,
    pub loss: Option<f64>,
}

impl Candidate {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, loss: None }
    }

    pub fn evaluated(values: Vec<f64>, loss: f64) -> Self {
        Self { values, loss: Some(loss) }
    }

    /// Loss, or `+inf` when not yet evaluated.
    pub fn loss_or_inf(&self) -> f64 {
        self.loss.unwrap_or(f64::INFINITY)
    }
}

pub fn sample_uniform<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Candidate {
    Candidate::new(space.coords.iter().map(|d| d.sample(rng)).collect())
}

/// Changes exactly `ell` distinct, uniformly chosen coordinates of `x`, each to
/// a fresh uniform value different from the current one.
pub fn mutate<R: Rng + ?Sized>(space: &SearchSpace, x: &[f64], ell: usize, rng: &mut R) -> Result<Candidate> {
    let n = space.dim();
    if ell < 1 || ell > n {
        return Err(Error::InvalidArgument(format!("mutation strength must lie in 1..={n}, got {ell}")));
    }
    if x.len() != n {
        return Err(Error::InvalidArgument(format!("candidate has {} values, space has {n} coordinates", x.len())));
    }
    let mut y = x.to_vec();
    for i in index::sample(rng, n, ell) {
        y[i] = space.coords[i].resample_distinct(x[i], rng)?;
    }
    Ok(Candidate::new(y))
}

/// Draws `ell ~ Bin(n, p)` conditioned on `ell > 0`.
///
/// Small `n` inverts the conditional cdf directly; large `n` draws the index of
/// the first success from its truncated geometric law and adds an ordinary
/// binomial count for the remaining trials, generated by geometric skipping.
/// Both are exact and need no rejection loop, so vanishing `p` stays cheap.
pub fn sample_binomial_positive<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("rate must lie in (0,1), got {p}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("dimensionality must be at least 1".into()));
    }
    if n == 1 {
        return Ok(1);
    }
    let log_q = (-p).ln_1p();
    let mass_positive = -(n as f64 * log_q).exp_m1();

    if n <= INVERSION_MAX_N {
        let target = rng.random::<f64>() * mass_positive;
        let log_ratio = p.ln() - log_q;
        let mut log_pmf = (n as f64).ln() + p.ln() + (n - 1) as f64 * log_q;
        let mut cdf = log_pmf.exp();
        let mut k = 1;
        while cdf < target && k < n {
            log_pmf += ((n - k) as f64 / (k + 1) as f64).ln() + log_ratio;
            k += 1;
            cdf += log_pmf.exp();
        }
        return Ok(k);
    }

    let v = rng.random::<f64>();
    let first = ((-v * mass_positive).ln_1p() / log_q).ceil();
    let first = (first.max(1.0) as usize).min(n);
    Ok(1 + binomial_by_skipping(n - first, log_q, rng))
}

fn binomial_by_skipping<R: Rng + ?Sized>(trials: usize, log_q: f64, rng: &mut R) -> usize {
    let mut count = 0;
    let mut pos = 0usize;
    while pos < trials {
        let u = 1.0 - rng.random::<f64>();
        let gap = (u.ln() / log_q).floor();
        if gap >= (trials - pos) as f64 {
            break;
        }
        pos += gap as usize + 1;
        count += 1;
    }
    count
}
