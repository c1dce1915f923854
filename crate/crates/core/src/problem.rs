//! Problem definitions and the TOML problem-file format.
//!
//! ```toml
//! name = "example_2_6"            # optional
//! description = "..."             # optional
//!
//! [carrier]
//! dim = 1
//! lower = [0.0]
//! upper = [1.0]
//!
//! [maps]                          # optional for validate-space
//! f = ["x0/4"]                    # a bare string is accepted when dim = 1
//! K = ["x0/2"]
//! K_inverse = ["2*x0"]            # optional
//!
//! [metric]
//! kind = "abs_sum"                # abs_sum | weighted_pair | custom
//! rho = 1.0                       # weighted_pair only
//! sigma = 1.0                     # weighted_pair only
//! custom = ["abs(x0 - x2) + abs(x1 - x2)"]   # custom only, variables x, y, z
//! axiom_c_variant = "literal"     # literal | standard
//!
//! [theorem]
//! mode = "thm22"                  # thm22 | cor23 | thm24
//! q_claimed = 0.5
//! v_complete = true               # recorded assumption, never checked
//!
//! [options]
//! tol = 1e-9
//! max_iters = 100
//! samples = 10000
//! seed = 0
//! ```
//!
//! Unknown keys are errors in every section.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::expr::{MapParseError, MapSpec};
use crate::smetric::{AxiomCVariant, MetricKind, SMetricSpec};
use crate::space::CarrierBox;

/// Which theorem's hypotheses and iteration to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremMode {
    /// Five-term comparison set, `f(ℜ) ⊆ K(ℜ)`, continuous `K`.
    #[default]
    Thm22,
    /// Single comparison term `S(Kx, Kx, Ky)`.
    Cor23,
    /// Averaged fourth term, `fK(ℜ) ⊆ K²(ℜ)`, continuous `K²`; fixed point `fKp`.
    Thm24,
}

impl fmt::Display for TheoremMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TheoremMode::Thm22 => "thm22",
            TheoremMode::Cor23 => "cor23",
            TheoremMode::Thm24 => "thm24",
        })
    }
}

/// A commuting-pair problem on a box carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    carrier: CarrierBox,
    f: MapSpec,
    k: MapSpec,
    k_inverse: Option<MapSpec>,
    metric: SMetricSpec,
    q_claimed: Option<f64>,
    mode: TheoremMode,
    v_complete_assumed: bool,
}

fn check_self_map(name: &str, map: &MapSpec, d: usize) -> Result<()> {
    if map.in_dim() != d || map.out_dim() != d {
        return Err(Error::Problem(format!(
            "{name} must map ℝ^{d} to ℝ^{d}, found ℝ^{} → ℝ^{}",
            map.in_dim(),
            map.out_dim()
        )));
    }
    Ok(())
}

impl ProblemSpec {
    pub fn new(carrier: CarrierBox, f: MapSpec, k: MapSpec, metric: SMetricSpec) -> Result<Self> {
        let d = carrier.dim();
        check_self_map("f", &f, d)?;
        check_self_map("K", &k, d)?;
        if metric.carrier_dim() != d {
            return Err(Error::Problem(format!(
                "metric is defined on ℝ^{} but the carrier is ℝ^{d}",
                metric.carrier_dim()
            )));
        }
        Ok(Self {
            carrier,
            f,
            k,
            k_inverse: None,
            metric,
            q_claimed: None,
            mode: TheoremMode::Thm22,
            v_complete_assumed: true,
        })
    }

    pub fn with_k_inverse(mut self, inverse: MapSpec) -> Result<Self> {
        check_self_map("K_inverse", &inverse, self.dim())?;
        self.k_inverse = Some(inverse);
        Ok(self)
    }

    pub fn with_mode(mut self, mode: TheoremMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_q_claimed(mut self, q: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::Problem(format!("q_claimed must lie in [0, 1), got {q}")));
        }
        self.q_claimed = Some(q);
        Ok(self)
    }

    pub fn with_v_complete_assumed(mut self, assumed: bool) -> Self {
        self.v_complete_assumed = assumed;
        self
    }

    pub fn dim(&self) -> usize {
        self.carrier.dim()
    }

    pub fn carrier(&self) -> &CarrierBox {
        &self.carrier
    }

    pub fn f(&self) -> &MapSpec {
        &self.f
    }

    pub fn k(&self) -> &MapSpec {
        &self.k
    }

    pub fn k_inverse(&self) -> Option<&MapSpec> {
        self.k_inverse.as_ref()
    }

    pub fn metric(&self) -> &SMetricSpec {
        &self.metric
    }

    pub fn q_claimed(&self) -> Option<f64> {
        self.q_claimed
    }

    pub fn mode(&self) -> TheoremMode {
        self.mode
    }

    pub fn v_complete_assumed(&self) -> bool {
        self.v_complete_assumed
    }

    /// Whether `K` can be inverted: analytically, or by bisection when `d = 1`.
    pub fn check_invertible(&self) -> Result<()> {
        if self.k_inverse.is_none() && self.dim() > 1 {
            return Err(Error::Problem(format!(
                "K_inverse is required when the carrier dimension is {} (bisection only covers d = 1)",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Serialized form of an [`SMetricSpec`]; the `[metric]` section of a problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub kind: MetricKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axiom_c_variant: Option<AxiomCVariant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKindName {
    AbsSum,
    WeightedPair,
    Custom,
}

impl MetricConfig {
    pub fn from_spec(spec: &SMetricSpec) -> Self {
        let (kind, rho, sigma, custom) = match spec.kind() {
            MetricKind::AbsSum => (MetricKindName::AbsSum, None, None, None),
            MetricKind::WeightedPair { rho, sigma } => {
                (MetricKindName::WeightedPair, Some(*rho), Some(*sigma), None)
            }
            MetricKind::Custom(map) => (MetricKindName::Custom, None, None, Some(map.to_strings())),
        };
        Self {
            kind,
            rho,
            sigma,
            custom,
            axiom_c_variant: None,
        }
    }

    pub fn variant(&self) -> AxiomCVariant {
        self.axiom_c_variant.unwrap_or_default()
    }

    pub fn build(&self, carrier_dim: usize) -> Result<SMetricSpec> {
        self.try_build(carrier_dim).map_err(|e| match e {
            ProblemFileError::Expr { key, error } => Error::Problem(format!("{key}: {error}")),
            other => Error::Problem(other.to_string()),
        })
    }

    fn try_build(&self, d: usize) -> std::result::Result<SMetricSpec, ProblemFileError> {
        let invalid = |m: &str| ProblemFileError::Invalid(format!("metric: {m}"));
        match self.kind {
            MetricKindName::AbsSum | MetricKindName::Custom if self.rho.is_some() || self.sigma.is_some() => {
                return Err(invalid("rho and sigma apply to weighted_pair only"));
            }
            MetricKindName::AbsSum | MetricKindName::WeightedPair if self.custom.is_some() => {
                return Err(invalid("custom applies to kind = \"custom\" only"));
            }
            _ => {}
        }
        let spec = match self.kind {
            MetricKindName::AbsSum => SMetricSpec::abs_sum(d),
            MetricKindName::WeightedPair => {
                let rho = self.rho.ok_or_else(|| invalid("weighted_pair needs rho"))?;
                let sigma = self.sigma.ok_or_else(|| invalid("weighted_pair needs sigma"))?;
                SMetricSpec::weighted_pair(d, rho, sigma).map_err(|e| invalid(&e.to_string()))?
            }
            MetricKindName::Custom => {
                let texts = self.custom.as_ref().ok_or_else(|| invalid("custom needs expressions"))?;
                let map = MapSpec::parse(texts, 3 * d).map_err(|e| ProblemFileError::expr("metric.custom", e))?;
                SMetricSpec::custom(map, d).map_err(|e| invalid(&e.to_string()))?
            }
        };
        Ok(spec)
    }
}

/// Defaults for the numeric knobs; CLI flags override them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 100,
            samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemFileError {
    #[error("{0}")]
    Toml(String),
    #[error("{key}: {error}")]
    Expr { key: String, error: crate::expr::ParseError },
    #[error("{0}")]
    Invalid(String),
}

impl ProblemFileError {
    fn expr(key: &str, e: MapParseError) -> Self {
        ProblemFileError::Expr {
            key: format!("{key}[{}]", e.coordinate),
            error: e.error,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    name: Option<String>,
    description: Option<String>,
    carrier: RawCarrier,
    maps: Option<RawMaps>,
    metric: MetricConfig,
    #[serde(default)]
    theorem: RawTheorem,
    #[serde(default)]
    options: RunOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCarrier {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Exprs {
    One(String),
    Many(Vec<String>),
}

impl Exprs {
    fn texts(&self) -> Vec<&str> {
        match self {
            Exprs::One(s) => vec![s.as_str()],
            Exprs::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaps {
    f: Exprs,
    #[serde(rename = "K")]
    k: Exprs,
    #[serde(rename = "K_inverse")]
    k_inverse: Option<Exprs>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTheorem {
    #[serde(default)]
    mode: TheoremMode,
    q_claimed: Option<f64>,
    v_complete: Option<bool>,
}

/// A parsed problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub name: Option<String>,
    pub description: Option<String>,
    pub carrier: CarrierBox,
    pub metric: SMetricSpec,
    pub axiom_c_variant: AxiomCVariant,
    /// `None` when the file has no `[maps]` section.
    pub problem: Option<ProblemSpec>,
    pub options: RunOptions,
}

impl ProblemFile {
    pub fn parse(text: &str) -> std::result::Result<Self, ProblemFileError> {
        let raw: RawFile = toml::from_str(text).map_err(|e| ProblemFileError::Toml(e.to_string()))?;
        let invalid = |m: String| ProblemFileError::Invalid(m);

        let c = raw.carrier;
        if c.lower.len() != c.dim || c.upper.len() != c.dim {
            return Err(invalid(format!(
                "carrier: dim = {} but lower has {} and upper has {} entries",
                c.dim,
                c.lower.len(),
                c.upper.len()
            )));
        }
        let carrier = CarrierBox::new(c.lower, c.upper).map_err(|e| invalid(format!("carrier: {e}")))?;
        let d = carrier.dim();
        let metric = raw.metric.try_build(d)?;
        let options = raw.options;
        if !(options.tol >= 0.0 && options.tol.is_finite()) {
            return Err(invalid(format!("options.tol must be finite and non-negative, got {}", options.tol)));
        }
        if options.max_iters == 0 || options.samples == 0 {
            return Err(invalid("options.max_iters and options.samples must be positive".into()));
        }

        let problem = match raw.maps {
            None => {
                if raw.theorem.q_claimed.is_some() {
                    return Err(invalid("theorem.q_claimed given without [maps]".into()));
                }
                None
            }
            Some(maps) => {
                let parse = |key: &str, e: &Exprs| {
                    MapSpec::parse(&e.texts(), d).map_err(|err| ProblemFileError::expr(&format!("maps.{key}"), err))
                };
                let f = parse("f", &maps.f)?;
                let k = parse("K", &maps.k)?;
                let mut p = ProblemSpec::new(carrier.clone(), f, k, metric.clone())
                    .map_err(|e| invalid(e.to_string()))?
                    .with_mode(raw.theorem.mode)
                    .with_v_complete_assumed(raw.theorem.v_complete.unwrap_or(true));
                if let Some(inv) = &maps.k_inverse {
                    p = p.with_k_inverse(parse("K_inverse", inv)?).map_err(|e| invalid(e.to_string()))?;
                }
                if let Some(q) = raw.theorem.q_claimed {
                    p = p.with_q_claimed(q).map_err(|e| invalid(format!("theorem: {e}")))?;
                }
                p.check_invertible().map_err(|e| invalid(e.to_string()))?;
                Some(p)
            }
        };

        Ok(Self {
            name: raw.name,
            description: raw.description,
            carrier,
            metric,
            axiom_c_variant: raw.metric.variant(),
            problem,
            options,
        })
    }

    pub fn require_problem(&self) -> std::result::Result<&ProblemSpec, ProblemFileError> {
        self.problem
            .as_ref()
            .ok_or_else(|| ProblemFileError::Invalid("this command needs a [maps] section".into()))
    }
}
