//! Parameter vectors and their prior distributions.
//!
//! A parameter vector is split into blocks: the layer thicknesses `a` and
//! `b`, the slip `c`, the five channel parameters, one permeability constant
//! per facies or one vector of KL coefficients per facies. Blocks may be
//! declared fixed, in which case the prior is a point mass and samplers
//! never touch them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{in_simplex, ChannelParams, Geometry, LayerFaultParams};
use crate::random_fields::CovarianceSpec;

/// One independently updatable piece of a [`ParameterVector`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Block {
    /// Right-edge layer thicknesses.
    A,
    /// Left-edge layer thicknesses.
    B,
    Slip,
    /// Channel parameter `d_{i+1}`.
    Channel(usize),
    /// Permeability constant of facies `i + 1`.
    Kappa(usize),
    /// KL coefficients of facies `i + 1`.
    Field(usize),
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::A => write!(f, "a"),
            Block::B => write!(f, "b"),
            Block::Slip => write!(f, "c"),
            Block::Channel(i) => write!(f, "d{}", i + 1),
            Block::Kappa(i) => write!(f, "kappa{}", i + 1),
            Block::Field(i) => write!(f, "field{}", i + 1),
        }
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indexed = |prefix: &str| -> Option<usize> {
            let n: usize = s.strip_prefix(prefix)?.parse().ok()?;
            n.checked_sub(1)
        };
        match s {
            "a" => Ok(Block::A),
            "b" => Ok(Block::B),
            "c" => Ok(Block::Slip),
            _ => {
                if let Some(i) = indexed("kappa") {
                    Ok(Block::Kappa(i))
                } else if let Some(i) = indexed("field") {
                    Ok(Block::Field(i))
                } else if let Some(i) = indexed("d").filter(|&i| i < 5) {
                    Ok(Block::Channel(i))
                } else {
                    Err(Error::config(format!("unknown parameter block '{s}'")))
                }
            }
        }
    }
}

impl TryFrom<String> for Block {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Block> for String {
    fn from(b: Block) -> String {
        b.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Permeability {
    /// One permeability value per facies.
    Constant(Vec<f64>),
    /// KL coefficients of the log-permeability of each facies.
    Fields(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub geometry: Geometry,
    pub perm: Permeability,
}

impl ParameterVector {
    pub fn get(&self, block: Block) -> Result<Vec<f64>> {
        let missing = || Error::config(format!("parameter vector has no block '{block}'"));
        match (block, &self.geometry, &self.perm) {
            (Block::A, Geometry::Layers(p), _) => Ok(p.a.clone()),
            (Block::B, Geometry::Layers(p), _) => Ok(p.b.clone()),
            (Block::Slip, Geometry::Layers(p), _) => Ok(vec![p.c]),
            (Block::Channel(i), Geometry::Channel(p), _) if i < 5 => Ok(vec![p.d[i]]),
            (Block::Kappa(i), _, Permeability::Constant(k)) => k.get(i).map(|v| vec![*v]).ok_or_else(missing),
            (Block::Field(i), _, Permeability::Fields(f)) => f.get(i).cloned().ok_or_else(missing),
            _ => Err(missing()),
        }
    }

    /// Overwrites one block; lengths must match the current contents.
    pub fn set(&mut self, block: Block, values: &[f64]) -> Result<()> {
        let current = self.get(block)?;
        if current.len() != values.len() {
            return Err(Error::shape(format!(
                "block '{block}' has {} components, got {}",
                current.len(),
                values.len()
            )));
        }
        match (block, &mut self.geometry, &mut self.perm) {
            (Block::A, Geometry::Layers(p), _) => p.a.copy_from_slice(values),
            (Block::B, Geometry::Layers(p), _) => p.b.copy_from_slice(values),
            (Block::Slip, Geometry::Layers(p), _) => p.c = values[0],
            (Block::Channel(i), Geometry::Channel(p), _) => p.d[i] = values[0],
            (Block::Kappa(i), _, Permeability::Constant(k)) => k[i] = values[0],
            (Block::Field(i), _, Permeability::Fields(f)) => f[i].copy_from_slice(values),
            _ => unreachable!("get succeeded"),
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryPrior {
    /// Uniform thicknesses on the simplex on both edges; uniform slip on
    /// `[-slip_max, slip_max]`, or no fault when `slip_max` is absent.
    Layers { layers: usize, slip_max: Option<f64> },
    /// Independent uniforms on closed intervals for `d1..d5`.
    Channel { bounds: [[f64; 2]; 5] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PermPrior {
    /// `log kappa ~ N(mean, std^2)`.
    Lognormal { mean: f64, std: f64 },
    Uniform { lower: f64, upper: f64 },
    Exponential { rate: f64 },
    /// Log-permeability is a Gaussian field truncated to `modes` KL terms.
    GaussianField { covariance: CovarianceSpec, modes: usize },
}

/// A block held at a known value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedBlock {
    pub block: Block,
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub geometry: GeometryPrior,
    /// One entry per facies, all constant-valued or all Gaussian fields.
    pub perm: Vec<PermPrior>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed: Vec<FixedBlock>,
}

/// One-dimensional prior marginal of a single scalar component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Marginal {
    /// `Beta(1, k)`, the marginal of one coordinate of the uniform simplex in `k` dimensions.
    SimplexCoordinate { dim: usize },
    Uniform { lower: f64, upper: f64 },
    Exponential { rate: f64 },
    Lognormal { mean: f64, std: f64 },
    StandardNormal,
    PointMass(f64),
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl Marginal {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::SimplexCoordinate { dim } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    1.0 - (1.0 - x).powi(dim as i32)
                }
            }
            Marginal::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-rate * x).exp()
                }
            }
            Marginal::Lognormal { mean, std } => {
                if x <= 0.0 {
                    0.0
                } else {
                    normal_cdf((x.ln() - mean) / std)
                }
            }
            Marginal::StandardNormal => normal_cdf(x),
            Marginal::PointMass(v) => {
                if x >= v {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::SimplexCoordinate { dim } => {
                if (0.0..=1.0).contains(&x) {
                    dim as f64 * (1.0 - x).powi(dim as i32 - 1)
                } else {
                    0.0
                }
            }
            Marginal::Uniform { lower, upper } => {
                if (lower..=upper).contains(&x) {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
            Marginal::Exponential { rate } => {
                if x >= 0.0 {
                    rate * (-rate * x).exp()
                } else {
                    0.0
                }
            }
            Marginal::Lognormal { mean, std } => {
                if x > 0.0 {
                    (-(x.ln() - mean).powi(2) / (2.0 * std * std) - LN_SQRT_2PI).exp() / (x * std)
                } else {
                    0.0
                }
            }
            Marginal::StandardNormal => (-0.5 * x * x - LN_SQRT_2PI).exp(),
            Marginal::PointMass(_) => 0.0,
        }
    }

    /// Closed support interval, if bounded on both sides.
    pub fn bounded_support(&self) -> Option<(f64, f64)> {
        match *self {
            Marginal::SimplexCoordinate { .. } => Some((0.0, 1.0)),
            Marginal::Uniform { lower, upper } => Some((lower, upper)),
            Marginal::PointMass(v) => Some((v, v)),
            _ => None,
        }
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Uniform draw from `{x in R^k : x_i >= 0, sum x_i <= 1}` via sorted-uniform spacings.
pub fn sample_simplex<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let mut u: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    u.sort_by(f64::total_cmp);
    let mut prev = 0.0;
    u.iter()
        .map(|&v| {
            let d = v - prev;
            prev = v;
            d
        })
        .collect()
}

impl PriorSpec {
    pub fn num_facies(&self) -> usize {
        match &self.geometry {
            GeometryPrior::Layers { layers, .. } => *layers,
            GeometryPrior::Channel { .. } => 2,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.perm.first(), Some(PermPrior::GaussianField { .. }))
    }

    pub fn validate(&self) -> Result<()> {
        match &self.geometry {
            GeometryPrior::Layers { layers, slip_max } => {
                if *layers < 2 {
                    return Err(Error::config("the layer model needs at least two layers"));
                }
                if let Some(s) = slip_max {
                    if !(*s > 0.0) || !s.is_finite() {
                        return Err(Error::config(format!("slip bound must be positive, got {s}")));
                    }
                }
            }
            GeometryPrior::Channel { bounds } => {
                for (i, [lo, hi]) in bounds.iter().enumerate() {
                    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::config(format!("d{} bounds must satisfy lower < upper", i + 1)));
                    }
                }
                if !(bounds[4][0] > 0.0) {
                    return Err(Error::config("channel width bound must be positive"));
                }
            }
        }
        if self.perm.len() != self.num_facies() {
            return Err(Error::config(format!(
                "{} permeability priors for {} facies",
                self.perm.len(),
                self.num_facies()
            )));
        }
        let continuous = self.is_continuous();
        for (i, p) in self.perm.iter().enumerate() {
            let ok = match p {
                PermPrior::Lognormal { mean, std } => !continuous && mean.is_finite() && *std > 0.0,
                PermPrior::Uniform { lower, upper } => !continuous && *lower > 0.0 && lower < upper && upper.is_finite(),
                PermPrior::Exponential { rate } => !continuous && *rate > 0.0 && rate.is_finite(),
                PermPrior::GaussianField { covariance, modes } => {
                    covariance.validate()?;
                    continuous && *modes > 0
                }
            };
            if !ok {
                return Err(Error::config(format!(
                    "invalid permeability prior for facies {}: {p:?} (facies must be all constant or all fields)",
                    i + 1
                )));
            }
        }
        let all = self.blocks();
        for (k, f) in self.fixed.iter().enumerate() {
            if !all.contains(&f.block) {
                return Err(Error::config(format!("fixed block '{}' does not exist in this model", f.block)));
            }
            if self.fixed[..k].iter().any(|g| g.block == f.block) {
                return Err(Error::config(format!("block '{}' fixed twice", f.block)));
            }
            if f.value.len() != self.block_len(f.block) || !self.free_block_in_support(f.block, &f.value) {
                return Err(Error::config(format!("fixed value {:?} is not admissible for '{}'", f.value, f.block)));
            }
        }
        Ok(())
    }

    /// Every block of the model, fixed or not.
    pub fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::new();
        match &self.geometry {
            GeometryPrior::Layers { slip_max, .. } => {
                out.extend([Block::A, Block::B]);
                if slip_max.is_some() {
                    out.push(Block::Slip);
                }
            }
            GeometryPrior::Channel { .. } => out.extend((0..5).map(Block::Channel)),
        }
        let n = self.perm.len();
        if self.is_continuous() {
            out.extend((0..n).map(Block::Field));
        } else {
            out.extend((0..n).map(Block::Kappa));
        }
        out
    }

    pub fn free_blocks(&self) -> Vec<Block> {
        self.blocks().into_iter().filter(|b| self.fixed_value(*b).is_none()).collect()
    }

    pub fn fixed_value(&self, block: Block) -> Option<&[f64]> {
        self.fixed.iter().find(|f| f.block == block).map(|f| f.value.as_slice())
    }

    pub fn block_len(&self, block: Block) -> usize {
        match (block, &self.geometry) {
            (Block::A | Block::B, GeometryPrior::Layers { layers, .. }) => layers - 1,
            (Block::Field(i), _) => match self.perm.get(i) {
                Some(PermPrior::GaussianField { modes, .. }) => *modes,
                _ => 0,
            },
            _ => 1,
        }
    }

    pub fn perm_prior(&self, i: usize) -> Result<&PermPrior> {
        self.perm.get(i).ok_or_else(|| Error::config(format!("no permeability prior for facies {}", i + 1)))
    }

    /// Independent prior draw of one block, ignoring any fixed value.
    pub fn sample_block<R: Rng + ?Sized>(&self, block: Block, rng: &mut R) -> Result<Vec<f64>> {
        let unknown = || Error::config(format!("block '{block}' is not part of this model"));
        match (block, &self.geometry) {
            (Block::A | Block::B, GeometryPrior::Layers { layers, .. }) => Ok(sample_simplex(layers - 1, rng)),
            (Block::Slip, GeometryPrior::Layers { slip_max: Some(s), .. }) => Ok(vec![rng.gen_range(-*s..=*s)]),
            (Block::Channel(i), GeometryPrior::Channel { bounds }) if i < 5 => {
                Ok(vec![rng.gen_range(bounds[i][0]..=bounds[i][1])])
            }
            (Block::Kappa(i), _) => match self.perm.get(i).ok_or_else(unknown)? {
                PermPrior::Lognormal { mean, std } => {
                    let z: f64 = StandardNormal.sample(rng);
                    Ok(vec![(mean + std * z).exp()])
                }
                PermPrior::Uniform { lower, upper } => Ok(vec![rng.gen_range(*lower..=*upper)]),
                PermPrior::Exponential { rate } => {
                    let e = Exp::new(*rate).map_err(|e| Error::config(e.to_string()))?;
                    // a zero draw has probability zero but would be outside the support
                    loop {
                        let v: f64 = e.sample(rng);
                        if v > 0.0 {
                            return Ok(vec![v]);
                        }
                    }
                }
                PermPrior::GaussianField { .. } => Err(unknown()),
            },
            (Block::Field(i), _) => match self.perm.get(i).ok_or_else(unknown)? {
                PermPrior::GaussianField { modes, .. } => {
                    Ok((0..*modes).map(|_| StandardNormal.sample(rng)).collect())
                }
                _ => Err(unknown()),
            },
            _ => Err(unknown()),
        }
    }

    /// Whether `values` lies in the support of the (unfixed) prior of `block`.
    pub fn free_block_in_support(&self, block: Block, values: &[f64]) -> bool {
        if values.len() != self.block_len(block) || values.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match (block, &self.geometry) {
            (Block::A | Block::B, GeometryPrior::Layers { .. }) => in_simplex(values),
            (Block::Slip, GeometryPrior::Layers { slip_max: Some(s), .. }) => values[0].abs() <= *s,
            (Block::Channel(i), GeometryPrior::Channel { bounds }) if i < 5 => {
                (bounds[i][0]..=bounds[i][1]).contains(&values[0])
            }
            (Block::Kappa(i), _) => match self.perm.get(i) {
                Some(PermPrior::Uniform { lower, upper }) => (*lower..=*upper).contains(&values[0]),
                Some(PermPrior::Lognormal { .. } | PermPrior::Exponential { .. }) => values[0] > 0.0,
                _ => false,
            },
            (Block::Field(_), _) => true,
            _ => false,
        }
    }

    /// Log prior density of one free block; `-inf` outside the support.
    /// Field blocks contribute zero (density relative to the Gaussian reference).
    pub fn block_log_density(&self, block: Block, values: &[f64]) -> f64 {
        if !self.free_block_in_support(block, values) {
            return f64::NEG_INFINITY;
        }
        match (block, &self.geometry) {
            (Block::A | Block::B, GeometryPrior::Layers { layers, .. }) => ln_factorial(layers - 1),
            (Block::Slip, GeometryPrior::Layers { slip_max: Some(s), .. }) => -(2.0 * s).ln(),
            (Block::Channel(i), GeometryPrior::Channel { bounds }) => -(bounds[i][1] - bounds[i][0]).ln(),
            (Block::Kappa(i), _) => {
                let k = values[0];
                match &self.perm[i] {
                    PermPrior::Uniform { lower, upper } => -(upper - lower).ln(),
                    PermPrior::Exponential { rate } => rate.ln() - rate * k,
                    PermPrior::Lognormal { mean, std } => {
                        -(k.ln() - mean).powi(2) / (2.0 * std * std) - LN_SQRT_2PI - std.ln() - k.ln()
                    }
                    PermPrior::GaussianField { .. } => f64::NEG_INFINITY,
                }
            }
            _ => 0.0,
        }
    }

    /// Prior marginal of component `component` of `block`.
    pub fn marginal(&self, block: Block, component: usize) -> Result<Marginal> {
        if let Some(v) = self.fixed_value(block) {
            return v
                .get(component)
                .map(|x| Marginal::PointMass(*x))
                .ok_or_else(|| Error::config(format!("block '{block}' has no component {component}")));
        }
        if component >= self.block_len(block) {
            return Err(Error::config(format!("block '{block}' has no component {component}")));
        }
        match (block, &self.geometry) {
            (Block::A | Block::B, GeometryPrior::Layers { layers, .. }) => {
                Ok(Marginal::SimplexCoordinate { dim: layers - 1 })
            }
            (Block::Slip, GeometryPrior::Layers { slip_max: Some(s), .. }) => {
                Ok(Marginal::Uniform { lower: -s, upper: *s })
            }
            (Block::Channel(i), GeometryPrior::Channel { bounds }) => {
                Ok(Marginal::Uniform { lower: bounds[i][0], upper: bounds[i][1] })
            }
            (Block::Kappa(i), _) => match self.perm_prior(i)? {
                PermPrior::Uniform { lower, upper } => Ok(Marginal::Uniform { lower: *lower, upper: *upper }),
                PermPrior::Exponential { rate } => Ok(Marginal::Exponential { rate: *rate }),
                PermPrior::Lognormal { mean, std } => Ok(Marginal::Lognormal { mean: *mean, std: *std }),
                PermPrior::GaussianField { .. } => Err(Error::config(format!("facies {} is a field", i + 1))),
            },
            (Block::Field(_), _) => Ok(Marginal::StandardNormal),
            _ => Err(Error::config(format!("block '{block}' is not part of this model"))),
        }
    }
}

/// Draws every free block independently from its prior; fixed blocks take their value.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> Result<ParameterVector> {
    let mut u = zero_vector(spec);
    for block in spec.blocks() {
        let v = match spec.fixed_value(block) {
            Some(v) => v.to_vec(),
            None => spec.sample_block(block, rng)?,
        };
        u.set(block, &v)?;
    }
    Ok(u)
}

/// A correctly shaped vector with all components zero (not necessarily admissible).
pub fn zero_vector(spec: &PriorSpec) -> ParameterVector {
    let geometry = match &spec.geometry {
        GeometryPrior::Layers { layers, .. } => Geometry::Layers(LayerFaultParams {
            a: vec![0.0; layers - 1],
            b: vec![0.0; layers - 1],
            c: 0.0,
        }),
        GeometryPrior::Channel { .. } => Geometry::Channel(ChannelParams { d: [0.0; 5] }),
    };
    let perm = if spec.is_continuous() {
        Permeability::Fields((0..spec.perm.len()).map(|i| vec![0.0; spec.block_len(Block::Field(i))]).collect())
    } else {
        Permeability::Constant(vec![0.0; spec.perm.len()])
    };
    ParameterVector { geometry, perm }
}

/// True iff `u` has the shape implied by `spec` and every block is admissible.
pub fn in_support(u: &ParameterVector, spec: &PriorSpec) -> bool {
    let shape_ok = match (&spec.geometry, &u.geometry) {
        (GeometryPrior::Layers { layers, slip_max }, Geometry::Layers(p)) => {
            p.a.len() == layers - 1 && (slip_max.is_some() || p.c == 0.0)
        }
        (GeometryPrior::Channel { .. }, Geometry::Channel(_)) => true,
        _ => false,
    };
    let perm_ok = match &u.perm {
        Permeability::Constant(k) => !spec.is_continuous() && k.len() == spec.perm.len(),
        Permeability::Fields(f) => spec.is_continuous() && f.len() == spec.perm.len(),
    };
    shape_ok
        && perm_ok
        && spec.blocks().into_iter().all(|b| match u.get(b) {
            Ok(v) => match spec.fixed_value(b) {
                Some(fixed) => v == fixed,
                None => spec.free_block_in_support(b, &v),
            },
            Err(_) => false,
        })
}

/// Sum of free-block log densities; `-inf` outside the support.
pub fn log_prior_density(u: &ParameterVector, spec: &PriorSpec) -> f64 {
    if !in_support(u, spec) {
        return f64::NEG_INFINITY;
    }
    spec.free_blocks()
        .into_iter()
        .map(|b| spec.block_log_density(b, &u.get(b).expect("in support")))
        .sum()
}
