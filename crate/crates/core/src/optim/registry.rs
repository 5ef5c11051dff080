use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::baselines::{Adaptive, AdaptiveConfig, Anisotropic, Lengler, OneFifthEs, RandomSearch};
use super::lognormal::{LogNormal, LogNormalConfig};
use super::{stream, OptRng, Optimizer};
use crate::error::{Error, Result};
use crate::modifiers::{LossModifier, LossTransform, LossWrapperConfig, SmoothLevel, Smoothed};
use crate::space::{Candidate, SearchSpace};

pub const BASE_ALGORITHM_IDS: &[&str] = &[
    "lognormal",
    "big-lognormal",
    "huge-lognormal",
    "small-lognormal",
    "x-lognormal",
    "xsmall-lognormal",
    "rs",
    "adaptive",
    "lengler",
    "anisotropic",
    "one-fifth-es",
];

/// Short names used in attack reports.
pub const ALGORITHM_ALIASES: &[(&str, &str)] = &[
    ("algo1", "gsm-supersmooth-lognormal"),
    ("algo2", "g-supersmooth-lognormal"),
    ("algo3", "supersmooth-lognormal"),
    ("algo4", "lognormal"),
    ("algo5", "gsm-big-lognormal"),
    ("algo6", "g-big-lognormal"),
];

const RESERVED_IDS: &[&str] = &["oln", "optimistic-lognormal"];

pub fn resolve_alias(id: &str) -> &str {
    ALGORITHM_ALIASES.iter().find(|(alias, _)| *alias == id).map_or(id, |(_, full)| full)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogNormalPreset {
    Standard,
    Big,
    Huge,
    Small,
    X,
    XSmall,
}

impl LogNormalPreset {
    pub fn config(self) -> LogNormalConfig {
        let (p, lambda) = match self {
            Self::Standard => (0.2, 12),
            Self::Big => (0.2, 120),
            Self::Huge => (0.2, 1200),
            Self::Small => (0.2, 4),
            Self::X => (0.8, 12),
            Self::XSmall => (0.8, 4),
        };
        LogNormalConfig::new(p, lambda).expect("preset values are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseAlgorithm {
    LogNormal(LogNormalPreset),
    RandomSearch,
    Adaptive,
    Lengler,
    Anisotropic,
    OneFifthEs,
}

impl BaseAlgorithm {
    pub fn parse(id: &str) -> Option<Self> {
        use LogNormalPreset::*;
        Some(match id {
            "lognormal" => Self::LogNormal(Standard),
            "big-lognormal" => Self::LogNormal(Big),
            "huge-lognormal" => Self::LogNormal(Huge),
            "small-lognormal" => Self::LogNormal(Small),
            "x-lognormal" => Self::LogNormal(X),
            "xsmall-lognormal" => Self::LogNormal(XSmall),
            "rs" => Self::RandomSearch,
            "adaptive" => Self::Adaptive,
            "lengler" => Self::Lengler,
            "anisotropic" => Self::Anisotropic,
            "one-fifth-es" => Self::OneFifthEs,
            _ => return None,
        })
    }

    pub fn id(self) -> &'static str {
        use LogNormalPreset::*;
        match self {
            Self::LogNormal(Standard) => "lognormal",
            Self::LogNormal(Big) => "big-lognormal",
            Self::LogNormal(Huge) => "huge-lognormal",
            Self::LogNormal(Small) => "small-lognormal",
            Self::LogNormal(X) => "x-lognormal",
            Self::LogNormal(XSmall) => "xsmall-lognormal",
            Self::RandomSearch => "rs",
            Self::Adaptive => "adaptive",
            Self::Lengler => "lengler",
            Self::Anisotropic => "anisotropic",
            Self::OneFifthEs => "one-fifth-es",
        }
    }

    fn build(self, space: Arc<SearchSpace>, start: Candidate, rng: OptRng) -> Result<Box<dyn Optimizer>> {
        Ok(match self {
            Self::LogNormal(preset) => Box::new(LogNormal::new(space, preset.config(), start, rng)),
            Self::RandomSearch => Box::new(RandomSearch::new(space, start, rng)),
            Self::Adaptive => {
                let config = AdaptiveConfig::for_dim(space.dim());
                Box::new(Adaptive::new(space, config, start, rng)?)
            }
            Self::Lengler => Box::new(Lengler::new(space, start, rng)),
            Self::Anisotropic => Box::new(Anisotropic::new(space, start, rng)),
            Self::OneFifthEs => Box::new(OneFifthEs::new(&space, start, rng)?),
        })
    }
}

/// A base optimizer plus optional loss (`g-`, `sm-`, `gsm-`) and smoothing
/// (`smooth-`, `supersmooth-`, ...) prefixes, e.g. `gsm-supersmooth-lognormal`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub loss: Option<LossModifier>,
    pub smooth: Option<SmoothLevel>,
    pub base: BaseAlgorithm,
}

fn valid_ids() -> String {
    let mut ids: Vec<&str> = BASE_ALGORITHM_IDS.to_vec();
    ids.extend(ALGORITHM_ALIASES.iter().map(|(a, _)| *a));
    format!(
        "{} (optionally prefixed by one of g-, sm-, gsm- and one of smooth-, supersmooth-, ultrasmooth-, zetasmooth-)",
        ids.join(", ")
    )
}

impl AlgorithmSpec {
    pub fn parse(id: &str) -> Result<Self> {
        let full = resolve_alias(id.trim());
        let mut rest = full;
        let mut loss = None;
        let mut smooth = None;
        loop {
            if loss.is_none() {
                if let Some((m, tail)) = LossModifier::strip_prefix(rest) {
                    loss = Some(m);
                    rest = tail;
                    continue;
                }
            }
            if smooth.is_none() {
                if let Some((s, tail)) = SmoothLevel::strip_prefix(rest) {
                    smooth = Some(s);
                    rest = tail;
                    continue;
                }
            }
            break;
        }
        if RESERVED_IDS.contains(&rest) {
            return Err(Error::InvalidArgument(format!(
                "`{rest}` needs a noisy-optimization wrapper that is not provided"
            )));
        }
        match BaseAlgorithm::parse(rest) {
            Some(base) => Ok(Self { loss, smooth, base }),
            None => Err(Error::UnknownAlgorithm { id: id.to_string(), valid: valid_ids() }),
        }
    }

    /// Canonical id, with aliases expanded.
    pub fn id(&self) -> String {
        let mut s = String::new();
        if let Some(l) = self.loss {
            s.push_str(l.prefix());
        }
        if let Some(m) = self.smooth {
            s.push_str(m.prefix());
        }
        s.push_str(self.base.id());
        s
    }

    pub fn build(
        &self,
        space: Arc<SearchSpace>,
        start: Candidate,
        rng: OptRng,
        seed: u64,
    ) -> Result<Box<dyn Optimizer>> {
        let inner = self.base.build(space.clone(), start, rng)?;
        match self.smooth {
            Some(level) => Ok(Box::new(Smoothed::new(inner, level.frequency(), &space, stream(seed, 1))?)),
            None => Ok(inner),
        }
    }

    pub fn loss_transform(&self, space: &SearchSpace, config: &LossWrapperConfig) -> Result<Option<LossTransform>> {
        self.loss.map(|m| LossTransform::new(m, space, config)).transpose()
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}
