//! Modifiers for tensor-shaped spaces.
//!
//! * Smooth family: an optimizer wrapper that now and then tries a locally
//!   averaged copy of the incumbent and keeps it when the loss improves.
//! * G / SM / GSM: loss transforms that evaluate `amplitude * sign(x)`,
//!   `blur(x)` or `amplitude * sign(blur(x))` instead of `x`.

mod blur;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Evaluator, Objective, OptRng, Optimizer};
use crate::space::{Candidate, SearchSpace};

pub use blur::GaussianBlur;

/// Probability that a cell keeps its value under [`smooth_tensor`].
pub const SMOOTH_KEEP_PROB: f64 = 0.75;
/// Side of the averaging window.
pub const SMOOTH_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmoothLevel {
    /// Tried once per 55 iterations on average.
    Default,
    Super,
    Ultra,
    Zeta,
}

impl SmoothLevel {
    pub fn frequency(self) -> f64 {
        match self {
            Self::Default => 1.0 / 55.0,
            Self::Super => 1.0 / 9.0,
            Self::Ultra => 1.0 / 3.0,
            Self::Zeta => 1.0 / 2.0,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            Self::Default => "smooth-",
            Self::Super => "supersmooth-",
            Self::Ultra => "ultrasmooth-",
            Self::Zeta => "zetasmooth-",
        }
    }

    pub fn strip_prefix(id: &str) -> Option<(Self, &str)> {
        [Self::Default, Self::Super, Self::Ultra, Self::Zeta]
            .into_iter()
            .find_map(|level| id.strip_prefix(level.prefix()).map(|rest| (level, rest)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothConfig {
    pub frequency: f64,
    pub window: usize,
    pub keep_prob: f64,
}

impl From<SmoothLevel> for SmoothConfig {
    fn from(level: SmoothLevel) -> Self {
        Self { frequency: level.frequency(), window: SMOOTH_WINDOW, keep_prob: SMOOTH_KEEP_PROB }
    }
}

/// Replaces every cell with `replace[i]` set by the mean of the cells at
/// Chebyshev distance at most 1 (itself included, truncated at the borders).
/// Means are taken over the original values, accumulated as deviations from
/// the centre cell so a constant neighbourhood is returned bit-for-bit.
pub fn smooth_with_mask(values: &[f64], shape: &[usize], replace: &[bool]) -> Vec<f64> {
    assert_eq!(values.len(), replace.len());
    assert_eq!(values.len(), shape.iter().product::<usize>());
    let mut strides = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    let mut out = values.to_vec();
    let mut index = vec![0usize; shape.len()];
    for (flat, slot) in out.iter_mut().enumerate() {
        if !replace[flat] {
            continue;
        }
        let mut rem = flat;
        for d in 0..shape.len() {
            index[d] = rem / strides[d];
            rem %= strides[d];
        }
        let ranges: Vec<(usize, usize)> =
            index.iter().zip(shape).map(|(&i, &len)| (i.saturating_sub(1), (i + 1).min(len - 1))).collect();
        let centre = values[flat];
        let (sum, count) = neighborhood_sum(values, centre, &strides, &ranges, 0, 0);
        *slot = centre + sum / count as f64;
    }
    out
}

fn neighborhood_sum(
    values: &[f64],
    centre: f64,
    strides: &[usize],
    ranges: &[(usize, usize)],
    dim: usize,
    offset: usize,
) -> (f64, usize) {
    if dim == ranges.len() {
        return (values[offset] - centre, 1);
    }
    let (lo, hi) = ranges[dim];
    (lo..=hi).fold((0.0, 0), |(s, c), i| {
        let (ds, dc) = neighborhood_sum(values, centre, strides, ranges, dim + 1, offset + i * strides[dim]);
        (s + ds, c + dc)
    })
}

/// Keeps each cell with probability 0.75, otherwise replaces it by its local mean.
pub fn smooth_tensor<R: Rng + ?Sized>(space: &SearchSpace, values: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let shape = tensor_shape(space)?;
    let replace: Vec<bool> = (0..values.len()).map(|_| rng.random::<f64>() >= SMOOTH_KEEP_PROB).collect();
    Ok(smooth_with_mask(values, shape, &replace))
}

fn tensor_shape(space: &SearchSpace) -> Result<&[usize]> {
    let shape = space.shape().ok_or_else(|| Error::InvalidSpace("smoothing needs a tensor shape".into()))?;
    if !space.is_all_real() {
        return Err(Error::InvalidSpace("smoothing needs real coordinates".into()));
    }
    Ok(shape)
}

/// Wraps an optimizer: after each of its iterations, with probability
/// `frequency`, evaluates the smoothed incumbent and swaps it in when strictly
/// better. Attempts are charged to the budget.
pub struct Smoothed {
    inner: Box<dyn Optimizer>,
    frequency: f64,
    space: SearchSpace,
    rng: OptRng,
    attempts: u64,
}

impl Smoothed {
    pub fn new(inner: Box<dyn Optimizer>, frequency: f64, space: &SearchSpace, rng: OptRng) -> Result<Self> {
        tensor_shape(space)?;
        if !(frequency > 0.0 && frequency <= 1.0) {
            return Err(Error::InvalidArgument(format!("smoothing frequency must lie in (0,1], got {frequency}")));
        }
        Ok(Self { inner, frequency, space: space.clone(), rng, attempts: 0 })
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }
}

impl Optimizer for Smoothed {
    fn step(&mut self, eval: &mut Evaluator<'_>) -> Result<()> {
        self.inner.step(eval)?;
        if self.rng.random::<f64>() >= self.frequency || eval.is_done() {
            return Ok(());
        }
        self.attempts += 1;
        let incumbent = self.inner.incumbent();
        let smoothed = smooth_tensor(&self.space, &incumbent.values, &mut self.rng)?;
        let current = incumbent.loss_or_inf();
        if let Some(loss) = eval.evaluate(&smoothed)? {
            if loss < current {
                self.inner.replace_incumbent(Candidate::evaluated(smoothed, loss));
            }
        }
        Ok(())
    }

    fn incumbent(&self) -> &Candidate {
        self.inner.incumbent()
    }

    fn replace_incumbent(&mut self, candidate: Candidate) {
        self.inner.replace_incumbent(candidate);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossModifier {
    G,
    Sm,
    Gsm,
}

impl LossModifier {
    pub fn prefix(self) -> &'static str {
        match self {
            Self::G => "g-",
            Self::Sm => "sm-",
            Self::Gsm => "gsm-",
        }
    }

    pub fn strip_prefix(id: &str) -> Option<(Self, &str)> {
        [Self::Gsm, Self::Sm, Self::G].into_iter().find_map(|m| id.strip_prefix(m.prefix()).map(|rest| (m, rest)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWrapperConfig {
    /// L-infinity radius used by the sign map.
    pub amplitude: f64,
    /// Blur standard deviation in pixels; one eighth of the width when unset.
    pub kernel_sigma: Option<f64>,
}

impl Default for LossWrapperConfig {
    fn default() -> Self {
        Self { amplitude: 0.03, kernel_sigma: None }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Point map behind the G, SM and GSM modifiers.
#[derive(Debug, Clone)]
pub struct LossTransform {
    modifier: LossModifier,
    amplitude: f64,
    blur: Option<GaussianBlur>,
}

impl LossTransform {
    pub fn new(modifier: LossModifier, space: &SearchSpace, config: &LossWrapperConfig) -> Result<Self> {
        if !(config.amplitude > 0.0 && config.amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("amplitude must be positive, got {}", config.amplitude)));
        }
        if !space.is_all_real() {
            return Err(Error::InvalidSpace(format!("{}modifier needs real coordinates", modifier.prefix())));
        }
        let blur = match modifier {
            LossModifier::G => None,
            LossModifier::Sm | LossModifier::Gsm => {
                let shape = space.shape().ok_or_else(|| {
                    Error::InvalidSpace(format!("{}modifier needs a tensor shape", modifier.prefix()))
                })?;
                let sigma = match config.kernel_sigma {
                    Some(s) => s,
                    None => GaussianBlur::default_sigma(shape).ok_or_else(|| {
                        Error::InvalidSpace(format!("{}modifier needs a 2-D shape", modifier.prefix()))
                    })?,
                };
                Some(GaussianBlur::new(shape, sigma)?)
            }
        };
        Ok(Self { modifier, amplitude: config.amplitude, blur })
    }

    pub fn modifier(&self) -> LossModifier {
        self.modifier
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let a = self.amplitude;
        match (self.modifier, &self.blur) {
            (LossModifier::G, _) => x.iter().map(|&v| a * sign(v)).collect(),
            (LossModifier::Sm, Some(b)) => b.apply(x),
            (LossModifier::Gsm, Some(b)) => b.apply(x).into_iter().map(|v| a * sign(v)).collect(),
            (_, None) => unreachable!("blur is built for SM and GSM"),
        }
    }

    pub fn wrap<'a>(&'a self, objective: &'a mut dyn Objective) -> TransformedObjective<'a> {
        TransformedObjective { inner: objective, transform: self }
    }
}

/// `x -> inner(transform(x))`.
pub struct TransformedObjective<'a> {
    inner: &'a mut dyn Objective,
    transform: &'a LossTransform,
}

impl Objective for TransformedObjective<'_> {
    fn space(&self) -> &SearchSpace {
        self.inner.space()
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        let point = self.transform.apply(x);
        self.inner.evaluate(&point)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{run_with, AlgorithmSpec, RandomSearch, RunOptions};
    use crate::space::sample_uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;
    use std::sync::Arc;

    struct Recorder {
        space: SearchSpace,
        seen: Vec<Vec<f64>>,
        f: fn(&[f64]) -> f64,
    }

    impl Objective for Recorder {
        fn space(&self) -> &SearchSpace {
            &self.space
        }
        fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
            self.seen.push(x.to_vec());
            Ok((self.f)(x))
        }
    }

    fn image_space(h: usize, w: usize, c: usize, amp: f64) -> SearchSpace {
        SearchSpace::real_box(-amp, amp, h * w * c).unwrap().with_shape(vec![h, w, c]).unwrap()
    }

    #[test]
    fn smoothing_constant_tensor_is_identity() {
        let space = image_space(4, 5, 3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![0.3; 60];
        for _ in 0..20 {
            assert_eq!(smooth_tensor(&space, &x, &mut rng).unwrap(), x);
        }
        let single = SearchSpace::real_box(0.0, 1.0, 1).unwrap().with_shape(vec![1, 1]).unwrap();
        assert_eq!(smooth_with_mask(&[0.7], &[1, 1], &[true]), vec![0.7]);
        assert_eq!(smooth_tensor(&single, &[0.7], &mut rng).unwrap(), vec![0.7]);
    }

    #[test]
    fn smoothing_center_of_peak() {
        let mut x = vec![0.0; 9];
        x[4] = 9.0;
        let mut mask = vec![false; 9];
        mask[4] = true;
        let y = smooth_with_mask(&x, &[3, 3], &mask);
        assert_eq!(y[4], 1.0);
        // Corner neighborhoods are truncated to 2x2.
        let mut mask = vec![false; 9];
        mask[0] = true;
        assert_eq!(smooth_with_mask(&x, &[3, 3], &mask)[0], 9.0 / 4.0);
    }

    #[test]
    fn smoothing_requires_real_shaped_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let flat = SearchSpace::real_box(0.0, 1.0, 4).unwrap();
        assert!(smooth_tensor(&flat, &[0.0; 4], &mut rng).is_err());
        let boolean = SearchSpace::boolean(4).unwrap().with_shape(vec![2, 2]).unwrap();
        assert!(smooth_tensor(&boolean, &[0.0; 4], &mut rng).is_err());
    }

    #[test]
    fn smoothing_is_mean_preserving_in_expectation_away_from_borders() {
        // Interior cells only: a 5x5 bump inside a 9x9 zero frame.
        let (h, w) = (9, 9);
        let mut x = vec![0.0; h * w];
        for y in 2..7 {
            for c in 2..7 {
                x[y * w + c] = ((y * 3 + c) % 4) as f64;
            }
        }
        let space = SearchSpace::real_box(-10.0, 10.0, h * w).unwrap().with_shape(vec![h, w]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = 20_000;
        let target: f64 = x.iter().sum();
        let mean_total =
            (0..trials).map(|_| smooth_tensor(&space, &x, &mut rng).unwrap().iter().sum::<f64>()).sum::<f64>()
                / trials as f64;
        assert!((mean_total - target).abs() < 0.01 * target, "{mean_total} vs {target}");
    }

    #[test]
    fn smooth_attempt_rate_matches_frequency() {
        let space = Arc::new(image_space(2, 2, 1, 1.0));
        let mut obj = Recorder { space: (*space).clone(), seen: vec![], f: |x| x.iter().map(|v| v * v).sum() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let start = sample_uniform(&space, &mut rng);
        let loss = obj.evaluate(&start.values).unwrap();
        let inner = Box::new(RandomSearch::new(space.clone(), Candidate::evaluated(start.values, loss), rng));
        let mut opt =
            Smoothed::new(inner, SmoothLevel::Default.frequency(), &space, ChaCha8Rng::seed_from_u64(4)).unwrap();
        let iterations = 55_000;
        let mut eval = Evaluator::new(&mut obj, 1_000_000);
        let mut last = opt.incumbent().loss_or_inf();
        for _ in 0..iterations {
            opt.step(&mut eval).unwrap();
            assert!(opt.incumbent().loss_or_inf() <= last);
            last = opt.incumbent().loss_or_inf();
        }
        let p = 1.0 / 55.0;
        let sd = (iterations as f64 * p * (1.0 - p)).sqrt();
        assert!((opt.attempts() as f64 - 1000.0).abs() < 3.0 * sd, "{} attempts", opt.attempts());
        assert_eq!(eval.used() as u64, iterations + opt.attempts());
    }

    #[test]
    fn smoothing_never_raises_the_incumbent_loss() {
        let space = Arc::new(image_space(4, 4, 1, 1.0));
        let mut obj = Recorder {
            space: (*space).clone(),
            seen: vec![],
            f: |x| x.iter().enumerate().map(|(i, v)| (v - (i % 2) as f64 * 0.5).abs()).sum(),
        };
        let spec = AlgorithmSpec::parse("zetasmooth-lognormal").unwrap();
        let rec = run_with(&spec, &mut obj, 3000, 5, &RunOptions::default()).unwrap();
        assert!(rec.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn smoothing_leaves_random_search_samples_unchanged() {
        let space = image_space(3, 3, 1, 1.0);
        let f: fn(&[f64]) -> f64 = |x| x.iter().map(|v| v * v).sum();
        let mut plain = Recorder { space: space.clone(), seen: vec![], f };
        let mut wrapped = Recorder { space: space.clone(), seen: vec![], f };
        run_with(&AlgorithmSpec::parse("rs").unwrap(), &mut plain, 400, 8, &RunOptions::default()).unwrap();
        run_with(&AlgorithmSpec::parse("zetasmooth-rs").unwrap(), &mut wrapped, 1000, 8, &RunOptions::default())
            .unwrap();
        // Drop the smoothing attempts: they are the evaluated points that are
        // not fresh uniform samples. Fresh samples must coincide in order.
        let plain_set: Vec<&Vec<f64>> = plain.seen.iter().collect();
        let fresh: Vec<&Vec<f64>> = wrapped.seen.iter().filter(|x| plain_set.contains(x)).collect();
        assert!(fresh.len() >= 400);
        assert_eq!(&fresh[..400], &plain_set[..]);
    }

    #[test]
    fn g_modifier_maps_to_sign_corners() {
        let space = SearchSpace::real_box(-1.0, 1.0, 6).unwrap();
        let t = LossTransform::new(LossModifier::G, &space, &LossWrapperConfig::default()).unwrap();
        assert_eq!(t.apply(&[0.2, 0.9, 1e-9, 0.5, 0.01, 1.0]), vec![0.03; 6]);
        assert_eq!(t.apply(&[-0.5, 0.0, 0.5]), vec![-0.03, 0.0, 0.03]);

        let mut obj = Recorder { space: space.clone(), seen: vec![], f: |x| x.iter().map(|v| v * v).sum() };
        let value = t.wrap(&mut obj).evaluate(&[0.3, -0.2, 0.9, -0.7, 0.1, -0.05]).unwrap();
        assert!((value - 6.0 * 0.0009).abs() < 1e-15);
    }

    #[test]
    fn g_modifier_is_scale_invariant() {
        let space = SearchSpace::real_box(-1.0, 1.0, 8).unwrap();
        let t = LossTransform::new(LossModifier::G, &space, &LossWrapperConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let x = sample_uniform(&space, &mut rng).values;
            let c: f64 = rng.random_range(1e-6..1e6);
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            assert_eq!(t.apply(&x), t.apply(&scaled));
        }
    }

    #[test]
    fn g_modifier_visits_at_most_the_sign_lattice() {
        let n = 6;
        let space = SearchSpace::real_box(-1.0, 1.0, n).unwrap();
        let t = LossTransform::new(LossModifier::G, &space, &LossWrapperConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut points = HashSet::new();
        for _ in 0..20_000 {
            let mut x = sample_uniform(&space, &mut rng).values;
            for v in x.iter_mut() {
                if rng.random_bool(0.3) {
                    *v = 0.0;
                }
            }
            let p = t.apply(&x);
            assert!(p.iter().all(|v| [-0.03, 0.0, 0.03].contains(v)));
            points.insert(p.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
        assert!(points.len() <= 3usize.pow(n as u32));
        assert_eq!(points.len(), 3usize.pow(n as u32));
    }

    #[test]
    fn gsm_blurs_before_taking_signs() {
        // 3x3, sigma 1: blurred center is positive although the center itself
        // is negative, so GSM gives +a while G alone gives -a.
        let space = SearchSpace::real_box(-1.0, 1.0, 9).unwrap().with_shape(vec![3, 3]).unwrap();
        let config = LossWrapperConfig { amplitude: 0.05, kernel_sigma: Some(1.0) };
        let x = [1.0, 1.0, 1.0, 1.0, -0.5, 1.0, -1.0, -1.0, -1.0];
        let gsm = LossTransform::new(LossModifier::Gsm, &space, &config).unwrap().apply(&x);
        let g = LossTransform::new(LossModifier::G, &space, &config).unwrap().apply(&x);

        // Hand computation: weights e^{-(dx^2+dy^2)/2}; every 3x3 neighborhood
        // of the center is the whole image. Center: 4 corners at e^-1, 4 edges
        // at e^-1/2, center 1.
        let (e1, eh) = ((-1.0f64).exp(), (-0.5f64).exp());
        let norm = 1.0 + 4.0 * eh + 4.0 * e1;
        let center = (-0.5 + eh * (1.0 + 1.0 + 1.0 - 1.0) + e1 * (1.0 + 1.0 - 1.0 - 1.0)) / norm;
        assert!(center > 0.0);
        assert_eq!(gsm[4], 0.05);
        assert_eq!(g[4], -0.05);
        // Bottom-left corner (2,0): the radius-3 kernel covers the whole image.
        let (mut acc, mut w) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let k = (-(((i / 3) as f64 - 2.0).powi(2) + ((i % 3) as f64).powi(2)) / 2.0).exp();
            acc += k * v;
            w += k;
        }
        let corner = acc / w;
        assert!(corner < 0.0);
        assert_eq!(gsm[6], -0.05);

        let blurred = LossTransform::new(LossModifier::Sm, &space, &config).unwrap().apply(&x);
        assert!((blurred[4] - center).abs() < 1e-15);
        assert!((blurred[6] - corner).abs() < 1e-15);
    }

    #[test]
    fn sm_requires_shape_and_real_space() {
        let cfg = LossWrapperConfig::default();
        let flat = SearchSpace::real_box(-1.0, 1.0, 9).unwrap();
        assert!(LossTransform::new(LossModifier::Sm, &flat, &cfg).is_err());
        assert!(LossTransform::new(LossModifier::Gsm, &flat, &cfg).is_err());
        assert!(LossTransform::new(LossModifier::G, &flat, &cfg).is_ok());
        let boolean = SearchSpace::boolean(4).unwrap();
        assert!(LossTransform::new(LossModifier::G, &boolean, &cfg).is_err());
        let bad = LossWrapperConfig { amplitude: 0.0, kernel_sigma: None };
        assert!(LossTransform::new(LossModifier::G, &flat, &bad).is_err());
    }

    #[test]
    fn level_table() {
        assert_eq!(SmoothLevel::Zeta.frequency(), 0.5);
        assert_eq!(SmoothLevel::Ultra.frequency(), 1.0 / 3.0);
        assert_eq!(SmoothLevel::Super.frequency(), 1.0 / 9.0);
        assert_eq!(SmoothLevel::Default.frequency(), 1.0 / 55.0);
        let c = SmoothConfig::from(SmoothLevel::Super);
        assert_eq!((c.window, c.keep_prob), (3, 0.75));
    }
}
