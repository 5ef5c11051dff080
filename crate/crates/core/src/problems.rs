//! Benchmark problems: pseudo-Boolean classics, three deceptive continuous
//! families and a sphere baseline. All are minimization problems with optimum 0.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::optim::Objective;
use crate::space::SearchSpace;

pub const BOX_LO: f64 = -5.0;
pub const BOX_HI: f64 = 5.0;

const NORM_GUARD: f64 = 1e-9;
const RADIUS_GUARD: f64 = 1e-12;
const SPIRAL_GAIN: f64 = 10.0;

pub const DISCRETE_SIZES: &[usize] = &[25, 50, 100];
pub const CONTINUOUS_DIMS: &[usize] = &[2, 5, 10];
pub const INSTANCES_PER_PROBLEM: u64 = 5;
pub const SUITE_IDS: &[&str] = &["discrete", "deceptive", "sphere"];

/// Budgets of the standard fixed-budget grid.
pub fn default_budget_grid() -> Vec<usize> {
    vec![25, 37, 50, 75, 87, 100, 200, 400, 800, 1600, 3200, 6400, 12800]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    OneMax,
    LeadingOnes,
    IsingRing,
    DeceptiveIllcond,
    DeceptiveMultimodal,
    DeceptivePath,
    Sphere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    id: String,
    kind: ProblemKind,
    space: SearchSpace,
    translation: Vec<f64>,
    instance_seed: u64,
}

impl ProblemInstance {
    fn discrete(kind: ProblemKind, name: &str, n: usize) -> Result<Self> {
        Ok(Self {
            id: format!("{name}-n{n}"),
            kind,
            space: SearchSpace::boolean(n)?,
            translation: Vec::new(),
            instance_seed: 0,
        })
    }

    fn continuous(kind: ProblemKind, name: &str, dim: usize, instance_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
        let translation = (0..dim)
            .map(|_| {
                let t: f64 = StandardNormal.sample(&mut rng);
                t.clamp(BOX_LO, BOX_HI)
            })
            .collect();
        Ok(Self {
            id: format!("{name}-d{dim}-i{instance_seed}"),
            kind,
            space: SearchSpace::real_box(BOX_LO, BOX_HI, dim)?,
            translation,
            instance_seed,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    pub fn instance_seed(&self) -> u64 {
        self.instance_seed
    }

    pub fn loss(&self, x: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::OneMax => x.len() as f64 - x.iter().sum::<f64>(),
            ProblemKind::LeadingOnes => x.len() as f64 - x.iter().take_while(|&&v| v == 1.0).count() as f64,
            ProblemKind::IsingRing => {
                let n = x.len();
                (0..n).filter(|&i| x[i] != x[(i + 1) % n]).count() as f64
            }
            _ => {
                let z: Vec<f64> = x.iter().zip(&self.translation).map(|(a, t)| a - t).collect();
                continuous_loss(self.kind, &z)
            }
        }
    }
}

fn continuous_loss(kind: ProblemKind, z: &[f64]) -> f64 {
    let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    match kind {
        ProblemKind::Sphere => sq(z),
        ProblemKind::DeceptiveIllcond => {
            let norm = sq(z).sqrt();
            z[0] * z[0] + z[1] * z[1] / (norm + NORM_GUARD) + sq(&z[2..])
        }
        ProblemKind::DeceptiveMultimodal => {
            let r = sq(z).sqrt();
            r * (2.0 + (1.0 / r.max(RADIUS_GUARD)).sin())
        }
        ProblemKind::DeceptivePath => {
            let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
            let deviation = spiral_deviation(r, z[1].atan2(z[0]));
            r * (1.0 + deviation / (PI * r.max(RADIUS_GUARD))) + sq(&z[2..])
        }
        _ => unreachable!("discrete kinds are handled by the caller"),
    }
}

/// Absolute angular distance, in `[0, pi]`, between `theta` and the spiral
/// angle `10 ln r`.
pub fn spiral_deviation(r: f64, theta: f64) -> f64 {
    let target = SPIRAL_GAIN * r.max(RADIUS_GUARD).ln();
    let d = (theta - target).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d).min(PI)
}

/// Angle of the spiral at radius `r`.
pub fn spiral_angle(r: f64) -> f64 {
    SPIRAL_GAIN * r.max(RADIUS_GUARD).ln()
}

fn check_positive(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument(format!("{what} must be at least 1")));
    }
    Ok(())
}

fn check_dim2(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("deceptive problems need dim >= 2, got {dim}")));
    }
    Ok(())
}

pub fn onemax(n: usize) -> Result<ProblemInstance> {
    check_positive(n, "n")?;
    ProblemInstance::discrete(ProblemKind::OneMax, "onemax", n)
}

pub fn leadingones(n: usize) -> Result<ProblemInstance> {
    check_positive(n, "n")?;
    ProblemInstance::discrete(ProblemKind::LeadingOnes, "leadingones", n)
}

pub fn ising_ring(n: usize) -> Result<ProblemInstance> {
    check_positive(n, "n")?;
    ProblemInstance::discrete(ProblemKind::IsingRing, "ising_ring", n)
}

/// `z1^2 + z2^2 / (|z| + 1e-9) + sum_{i>2} zi^2`: conditioning diverges near 0.
pub fn deceptive_illcond(dim: usize, instance_seed: u64) -> Result<ProblemInstance> {
    check_dim2(dim)?;
    ProblemInstance::continuous(ProblemKind::DeceptiveIllcond, "illcond", dim, instance_seed)
}

/// `r (2 + sin(1/r))`: local minima accumulate at the optimum.
pub fn deceptive_multimodal(dim: usize, instance_seed: u64) -> Result<ProblemInstance> {
    check_positive(dim, "dim")?;
    ProblemInstance::continuous(ProblemKind::DeceptiveMultimodal, "multimodal", dim, instance_seed)
}

/// A spiral valley `theta = 10 ln r` in the first two coordinates whose
/// corridor narrows towards the optimum.
pub fn deceptive_path(dim: usize, instance_seed: u64) -> Result<ProblemInstance> {
    check_dim2(dim)?;
    ProblemInstance::continuous(ProblemKind::DeceptivePath, "path", dim, instance_seed)
}

pub fn sphere(dim: usize, instance_seed: u64) -> Result<ProblemInstance> {
    check_positive(dim, "dim")?;
    ProblemInstance::continuous(ProblemKind::Sphere, "sphere", dim, instance_seed)
}

/// Problem instances of a named suite.
pub fn suite(id: &str) -> Result<Vec<ProblemInstance>> {
    match id {
        "discrete" => {
            let mut out = Vec::new();
            for &n in DISCRETE_SIZES {
                out.push(onemax(n)?);
                out.push(leadingones(n)?);
                out.push(ising_ring(n)?);
            }
            Ok(out)
        }
        "deceptive" => {
            let mut out = Vec::new();
            for &dim in CONTINUOUS_DIMS {
                for seed in 0..INSTANCES_PER_PROBLEM {
                    out.push(deceptive_illcond(dim, seed)?);
                    out.push(deceptive_multimodal(dim, seed)?);
                    out.push(deceptive_path(dim, seed)?);
                }
            }
            Ok(out)
        }
        "sphere" => Ok(vec![sphere(5, 0)?]),
        _ => Err(Error::UnknownSuite { id: id.to_string(), valid: SUITE_IDS.join(", ") }),
    }
}

impl Objective for ProblemInstance {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        Ok(self.loss(x))
    }

    fn name(&self) -> &str {
        &self.id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::sample_uniform;

    fn bits(s: &str) -> Vec<f64> {
        s.chars().map(|c| if c == '1' { 1.0 } else { 0.0 }).collect()
    }

    fn at_offset(p: &ProblemInstance, z: &[f64]) -> f64 {
        let x: Vec<f64> = z.iter().zip(p.translation()).map(|(a, t)| a + t).collect();
        p.loss(&x)
    }

    #[test]
    fn pseudo_boolean_values() {
        assert_eq!(onemax(6).unwrap().loss(&[1.0; 6]), 0.0);
        assert_eq!(onemax(6).unwrap().loss(&bits("100100")), 4.0);
        assert_eq!(leadingones(5).unwrap().loss(&bits("11010")), 3.0);
        assert_eq!(leadingones(5).unwrap().loss(&bits("11111")), 0.0);
        assert_eq!(ising_ring(4).unwrap().loss(&bits("0101")), 4.0);
        assert_eq!(ising_ring(4).unwrap().loss(&bits("0000")), 0.0);
        assert_eq!(ising_ring(4).unwrap().loss(&bits("1111")), 0.0);
        assert!(onemax(0).is_err());
    }

    #[test]
    fn ising_matches_brute_force_on_all_strings() {
        let n = 6;
        let p = ising_ring(n).unwrap();
        for mask in 0u32..(1 << n) {
            let x: Vec<f64> = (0..n).map(|i| f64::from((mask >> i) & 1)).collect();
            let mut cuts = 0;
            for i in 0..n {
                let j = if i + 1 == n { 0 } else { i + 1 };
                if (mask >> i) & 1 != (mask >> j) & 1 {
                    cuts += 1;
                }
            }
            assert_eq!(p.loss(&x), f64::from(cuts));
        }
    }

    #[test]
    fn continuous_optima_are_zero() {
        for dim in [2, 5, 10] {
            for seed in 0..5 {
                for p in [
                    deceptive_illcond(dim, seed).unwrap(),
                    deceptive_multimodal(dim, seed).unwrap(),
                    deceptive_path(dim, seed).unwrap(),
                    sphere(dim, seed).unwrap(),
                ] {
                    let v = p.loss(p.translation());
                    assert!(v.abs() <= 1e-9, "{} at optimum: {v}", p.id());
                    assert!(p.space().contains(p.translation()));
                }
            }
        }
    }

    #[test]
    fn illcond_values_and_conditioning() {
        let p = deceptive_illcond(4, 1).unwrap();
        assert!((at_offset(&p, &[1.0, 0.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
        // Along the second axis the loss is ~t, so its ratio to t^2 blows up.
        for t in [1e-1, 1e-3, 1e-5] {
            let v = at_offset(&p, &[0.0, t, 0.0, 0.0]);
            assert!((v - t * t / (t + 1e-9)).abs() < 1e-15);
            assert!((v / t - 1.0).abs() < 1e-3);
        }
        let effective = |t: f64| at_offset(&p, &[0.0, t, 0.0, 0.0]) / (t * t);
        assert!(effective(1e-4) > 99.0 * effective(1e-2));
    }

    #[test]
    fn multimodal_envelope_and_local_minima() {
        let p = deceptive_multimodal(3, 2).unwrap();
        let along = |r: f64| at_offset(&p, &[r, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let x = sample_uniform(p.space(), &mut rng).values;
            let r = x.iter().zip(p.translation()).map(|(a, t)| (a - t).powi(2)).sum::<f64>().sqrt();
            let v = p.loss(&x);
            assert!(v >= r - 1e-12 && v <= 3.0 * r + 1e-12);
        }
        for k in 1..6 {
            let kf = k as f64;
            let r = 1.0 / (2.0 * PI * kf + 1.5 * PI);
            assert!((along(r) - r).abs() < 1e-12);
            // A local minimum lies between the neighbouring peaks where sin = +1.
            let hi = 1.0 / (2.0 * PI * kf + 0.5 * PI);
            let lo = 1.0 / (2.0 * PI * (kf + 1.0) + 0.5 * PI);
            let grid = 20_000;
            let (arg, min) = (1..grid)
                .map(|i| lo + (hi - lo) * i as f64 / grid as f64)
                .map(|r| (r, along(r)))
                .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            assert!(arg > lo && arg < hi && min < along(lo) && min < along(hi));
            let h = (hi - lo) * 1e-4;
            let slope = (along(arg + h) - along(arg - h)) / (2.0 * h);
            let scale = (along(hi) - min) / (hi - lo);
            assert!(slope.abs() < 1e-2 * scale, "k={k}: slope {slope}");
        }
    }

    #[test]
    fn path_values() {
        let p = deceptive_path(3, 4).unwrap();
        let polar = |r: f64, theta: f64, rest: f64| at_offset(&p, &[r * theta.cos(), r * theta.sin(), rest]);
        assert!((polar(1.0, spiral_angle(1.0), 0.0) - 1.0).abs() < 1e-9);
        assert!((polar(1.0, spiral_angle(1.0), 0.5) - 1.25).abs() < 1e-9);
        for r in [0.05, 0.5, 2.0] {
            let base = spiral_angle(r);
            let sweep: Vec<f64> = (0..=100).map(|i| polar(r, base + PI * i as f64 / 100.0, 0.0)).collect();
            assert!(sweep.windows(2).all(|w| w[1] >= w[0] - 1e-12), "r={r}");
            assert!((sweep[0] - r).abs() < 1e-9);
            assert!((sweep[100] - (r + 1.0)).abs() < 1e-9);
            let back: Vec<f64> = (0..=100).map(|i| polar(r, base - PI * i as f64 / 100.0, 0.0)).collect();
            assert!(back.windows(2).all(|w| w[1] >= w[0] - 1e-12), "r={r}");
        }
    }

    #[test]
    fn sphere_gradient_matches_finite_differences() {
        let p = sphere(5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = sample_uniform(p.space(), &mut rng).values;
            for i in 0..5 {
                let h = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (p.loss(&xp) - p.loss(&xm)) / (2.0 * h);
                let analytic = 2.0 * (x[i] - p.translation()[i]);
                assert!((fd - analytic).abs() < 1e-5);
            }
        }
        assert!((at_offset(&p, &[1.0, 0.0, 0.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn losses_are_finite_on_the_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in suite("deceptive").unwrap() {
            for _ in 0..50 {
                let x = sample_uniform(p.space(), &mut rng).values;
                let v = p.loss(&x);
                assert!(v.is_finite() && v >= 0.0);
            }
            let corner = vec![BOX_HI; p.space().dim()];
            assert!(p.loss(&corner).is_finite());
        }
    }

    #[test]
    fn instances_are_reproducible() {
        assert_eq!(deceptive_path(5, 3).unwrap(), deceptive_path(5, 3).unwrap());
        assert_ne!(deceptive_path(5, 3).unwrap().translation(), deceptive_path(5, 4).unwrap().translation());
    }

    #[test]
    fn budget_grid() {
        let g = default_budget_grid();
        assert_eq!(g.len(), 13);
        assert_eq!((g[0], g[12]), (25, 12800));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn suites() {
        assert_eq!(suite("discrete").unwrap().len(), 9);
        assert_eq!(suite("deceptive").unwrap().len(), 45);
        assert_eq!(suite("sphere").unwrap().len(), 1);
        assert!(matches!(suite("yabbob"), Err(Error::UnknownSuite { .. })));
        let ids: std::collections::HashSet<String> =
            suite("deceptive").unwrap().iter().map(|p| p.id().to_string()).collect();
        assert_eq!(ids.len(), 45);
    }
}
