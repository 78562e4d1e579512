//! Metropolis-within-Gibbs sampling with prior-reversible block proposals.
//!
//! Every proposal kernel is reversible with respect to the prior of the block
//! it moves, so the acceptance probability only involves the misfit
//! difference. Proposals that leave the admissible set are replaced by the
//! current state, which costs no forward solve.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{DataSet, ForwardModel};
use crate::priors::{in_support, sample_prior, Block, ParameterVector, PermPrior, PriorSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalKind {
    /// `w = u + step * xi`, for blocks with uniform priors.
    LocalGaussian { step: f64 },
    /// `w` uniform in the ball of radius `radius` around `u`, for blocks with uniform priors.
    LocalUniformBall { radius: f64 },
    /// `w = u - rate * step + sqrt(2 step) xi`, for exponential permeability priors.
    ExponentialDrift { step: f64 },
    /// `v = sqrt(1 - beta^2) u + beta xi` in whitened coordinates, for Gaussian
    /// fields and lognormal permeabilities.
    Pcn { beta: f64 },
}

/// Base kernel for one block, optionally mixed with independent prior draws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    #[serde(flatten)]
    pub kind: ProposalKind,
    /// Probability of replacing the base move by a fresh prior draw of the block.
    #[serde(default)]
    pub independence: f64,
}

impl ProposalSpec {
    pub fn new(kind: ProposalKind) -> Self {
        ProposalSpec { kind, independence: 0.0 }
    }

    pub fn mixed(kind: ProposalKind, independence: f64) -> Self {
        ProposalSpec { kind, independence }
    }

    fn validate(&self, block: Block, prior: &PriorSpec) -> Result<()> {
        let bad = |why: &str| Err(Error::config(format!("proposal for '{block}': {why}")));
        if !(0.0..=1.0).contains(&self.independence) {
            return bad("independence probability must lie in [0, 1]");
        }
        let perm = match block {
            Block::Kappa(i) | Block::Field(i) => Some(prior.perm_prior(i)?),
            _ => None,
        };
        match self.kind {
            ProposalKind::LocalGaussian { step: s } | ProposalKind::LocalUniformBall { radius: s } => {
                if !(s > 0.0) || !s.is_finite() {
                    return bad("step must be positive");
                }
                if matches!(block, Block::Field(_))
                    || matches!(perm, Some(PermPrior::Lognormal { .. } | PermPrior::Exponential { .. }))
                {
                    return bad("local symmetric moves are only prior-reversible for uniform priors");
                }
            }
            ProposalKind::ExponentialDrift { step } => {
                if !(step > 0.0) || !step.is_finite() {
                    return bad("step must be positive");
                }
                if !matches!(perm, Some(PermPrior::Exponential { .. })) || matches!(block, Block::Field(_)) {
                    return bad("the drift move needs an exponential permeability prior");
                }
            }
            ProposalKind::Pcn { beta } => {
                if !(0.0..=1.0).contains(&beta) {
                    return bad("beta must lie in [0, 1]");
                }
                let gaussian = matches!(block, Block::Field(_))
                    || matches!((block, perm), (Block::Kappa(_), Some(PermPrior::Lognormal { .. })));
                if !gaussian {
                    return bad("pCN needs a Gaussian field or lognormal prior");
                }
            }
        }
        Ok(())
    }
}

/// Ordered groupings of blocks updated jointly, one Metropolis step each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GibbsSchedule(pub Vec<Vec<Block>>);

impl GibbsSchedule {
    /// One grouping holding every free block: plain Metropolis-Hastings.
    pub fn single(prior: &PriorSpec) -> Self {
        GibbsSchedule(vec![prior.free_blocks()])
    }

    /// Checks that the groupings partition the free blocks.
    pub fn validate(&self, prior: &PriorSpec) -> Result<()> {
        let free = prior.free_blocks();
        let mut seen = Vec::new();
        for group in &self.0 {
            if group.is_empty() {
                return Err(Error::config("empty grouping in the Gibbs schedule"));
            }
            for b in group {
                if !free.contains(b) {
                    return Err(Error::config(format!("schedule names '{b}', which is not a free block")));
                }
                if seen.contains(b) {
                    return Err(Error::config(format!("block '{b}' appears twice in the schedule")));
                }
                seen.push(*b);
            }
        }
        if let Some(b) = free.iter().find(|b| !seen.contains(b)) {
            return Err(Error::config(format!("free block '{b}' is missing from the schedule")));
        }
        Ok(())
    }
}

/// Everything a chain needs besides the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub schedule: GibbsSchedule,
    pub proposals: BTreeMap<Block, ProposalSpec>,
    /// Keep every `thin`-th sweep.
    pub thin: usize,
    /// Leading KL coefficients recorded per field block.
    pub record_modes: usize,
    /// Recompute the cached misfit every this many sweeps and fail on disagreement.
    #[serde(default)]
    pub revalidate_every: Option<usize>,
}

impl SamplerSettings {
    pub fn validate(&self, prior: &PriorSpec) -> Result<()> {
        self.schedule.validate(prior)?;
        for b in prior.free_blocks() {
            self.proposals
                .get(&b)
                .ok_or_else(|| Error::config(format!("no proposal configured for block '{b}'")))?
                .validate(b, prior)?;
        }
        if let Some(b) = self.proposals.keys().find(|b| !prior.free_blocks().contains(b)) {
            return Err(Error::config(format!("proposal given for '{b}', which is not a free block")));
        }
        if self.thin == 0 {
            return Err(Error::config("thinning factor must be at least 1"));
        }
        if self.revalidate_every == Some(0) {
            return Err(Error::config("revalidation interval must be at least 1"));
        }
        Ok(())
    }
}

/// Negative log-likelihood `Phi(u)`.
pub trait Potential: Sync {
    fn potential(&self, u: &ParameterVector) -> Result<f64>;
}

/// Darcy misfit against a data set.
pub struct DarcyPotential<'a> {
    pub model: &'a ForwardModel,
    pub data: &'a DataSet,
}

impl Potential for DarcyPotential<'_> {
    fn potential(&self, u: &ParameterVector) -> Result<f64> {
        self.model.misfit(u, self.data)
    }
}

/// `Phi = 0`: the chain targets the prior.
pub struct ZeroPotential;

impl Potential for ZeroPotential {
    fn potential(&self, _: &ParameterVector) -> Result<f64> {
        Ok(0.0)
    }
}

/// `min(1, exp(phi_current - phi_candidate))`.
pub fn acceptance_prob(phi_current: f64, phi_candidate: f64) -> f64 {
    let d = phi_current - phi_candidate;
    if d >= 0.0 {
        1.0
    } else {
        d.exp()
    }
}

/// Transition density of the exponential drift move before boundary rejection.
pub fn exponential_drift_density(u: f64, w: f64, rate: f64, step: f64) -> f64 {
    let mean = u - rate * step;
    let var = 2.0 * step;
    (-(w - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Result of proposing a move for one grouping.
#[derive(Clone, Debug)]
pub struct Proposal {
    /// `None` when the raw move left the admissible set.
    pub candidate: Option<ParameterVector>,
    pub prior_draws: usize,
}

fn normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Raw move of one block; admissibility is checked by the caller.
fn move_block<R: Rng + ?Sized>(
    block: Block,
    current: &[f64],
    spec: &ProposalSpec,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    if spec.independence > 0.0 && rng.gen::<f64>() < spec.independence {
        return Ok((prior.sample_block(block, rng)?, true));
    }
    let d = current.len();
    let w = match spec.kind {
        ProposalKind::LocalGaussian { step } => {
            current.iter().zip(normals(d, rng)).map(|(u, z)| u + step * z).collect()
        }
        ProposalKind::LocalUniformBall { radius } => {
            let z = normals(d, rng);
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
            current.iter().zip(z).map(|(u, v)| u + r * v / norm).collect()
        }
        ProposalKind::ExponentialDrift { step } => {
            let rate = match prior.perm_prior(block_facies(block))? {
                PermPrior::Exponential { rate } => *rate,
                _ => unreachable!("validated"),
            };
            current.iter().zip(normals(d, rng)).map(|(u, z)| u - rate * step + (2.0 * step).sqrt() * z).collect()
        }
        ProposalKind::Pcn { beta } => {
            let keep = (1.0 - beta * beta).sqrt();
            match (block, prior.perm_prior(block_facies(block))?) {
                (Block::Kappa(_), PermPrior::Lognormal { mean, std }) => {
                    let z: f64 = StandardNormal.sample(rng);
                    let x = (current[0].ln() - mean) / std;
                    vec![(mean + std * (keep * x + beta * z)).exp()]
                }
                _ => current.iter().zip(normals(d, rng)).map(|(u, z)| keep * u + beta * z).collect(),
            }
        }
    };
    Ok((w, false))
}

fn block_facies(block: Block) -> usize {
    match block {
        Block::Kappa(i) | Block::Field(i) => i,
        _ => usize::MAX,
    }
}

/// Per-grouping acceptance statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub blocks: Vec<Block>,
    pub proposed: u64,
    pub accepted: u64,
    pub boundary_rejections: u64,
    pub prior_draws: u64,
}

impl GroupStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub u: ParameterVector,
    /// Cached `Phi(u)`.
    pub phi: f64,
}

/// Thinned samples and bookkeeping of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainHistory {
    pub chain: usize,
    pub seed: u64,
    pub thin: usize,
    pub n_sweeps: usize,
    pub names: Vec<String>,
    pub sweeps: Vec<usize>,
    pub samples: Vec<Vec<f64>>,
    pub misfits: Vec<f64>,
    pub groups: Vec<GroupStats>,
    pub forward_solves: u64,
    pub final_state: ParameterVector,
}

impl ChainHistory {
    /// Stored values of one recorded component.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[k]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.names.iter().position(|n| n == name).map(|k| self.column(k))
    }

    /// CSV with one row per stored sample: sweep, components, misfit.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("sweep");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push_str(",misfit\n");
        for ((s, row), phi) in self.sweeps.iter().zip(&self.samples).zip(&self.misfits) {
            out.push_str(&s.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push(',');
            out.push_str(&phi.to_string());
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// A recorded scalar: its column name and where it lives in the parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub name: String,
    pub block: Block,
    pub index: usize,
}

/// Recorded components in storage order: every free scalar plus the leading
/// `record_modes` coefficients of each field.
pub fn recorded_components(prior: &PriorSpec, record_modes: usize) -> Vec<Component> {
    let mut out = Vec::new();
    for block in prior.free_blocks() {
        let len = prior.block_len(block);
        let count = if matches!(block, Block::Field(_)) { len.min(record_modes) } else { len };
        for index in 0..count {
            let name = match block {
                Block::A | Block::B if len > 1 => format!("{block}{}", index + 1),
                Block::Field(i) => format!("xi{}_{}", index + 1, i + 1),
                _ => block.to_string(),
            };
            out.push(Component { name, block, index });
        }
    }
    out
}

pub fn recorded_names(prior: &PriorSpec, record_modes: usize) -> Vec<String> {
    recorded_components(prior, record_modes).into_iter().map(|c| c.name).collect()
}

pub fn recorded_values(u: &ParameterVector, prior: &PriorSpec, record_modes: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for b in prior.free_blocks() {
        let v = u.get(b).expect("shape checked at chain start");
        match b {
            Block::Field(_) => out.extend(v.iter().take(record_modes)),
            _ => out.extend(v),
        }
    }
    out
}

/// A validated target, prior and proposal configuration.
pub struct Sampler<'a> {
    potential: &'a dyn Potential,
    prior: &'a PriorSpec,
    settings: &'a SamplerSettings,
}

impl<'a> Sampler<'a> {
    pub fn new(potential: &'a dyn Potential, prior: &'a PriorSpec, settings: &'a SamplerSettings) -> Result<Self> {
        prior.validate()?;
        settings.validate(prior)?;
        Ok(Sampler { potential, prior, settings })
    }

    /// Candidate for grouping `group` of the schedule.
    pub fn propose<R: Rng + ?Sized>(&self, u: &ParameterVector, group: usize, rng: &mut R) -> Result<Proposal> {
        let blocks = self
            .settings
            .schedule
            .0
            .get(group)
            .ok_or_else(|| Error::config(format!("no grouping {group} in the schedule")))?;
        let mut w = u.clone();
        let mut prior_draws = 0;
        let mut admissible = true;
        for &b in blocks {
            let spec = &self.settings.proposals[&b];
            let (v, fresh) = move_block(b, &u.get(b)?, spec, self.prior, rng)?;
            prior_draws += fresh as usize;
            admissible &= self.prior.free_block_in_support(b, &v);
            w.set(b, &v)?;
        }
        Ok(Proposal { candidate: admissible.then_some(w), prior_draws })
    }

    /// One pass over the schedule; returns the number of potential evaluations.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ChainState, stats: &mut [GroupStats], rng: &mut R) -> Result<u64> {
        let mut solves = 0;
        for (g, st) in stats.iter_mut().enumerate() {
            let prop = self.propose(&state.u, g, rng)?;
            st.proposed += 1;
            st.prior_draws += prop.prior_draws as u64;
            let Some(candidate) = prop.candidate else {
                st.boundary_rejections += 1;
                continue;
            };
            let phi = self.potential.potential(&candidate).map_err(|e| {
                let names: Vec<String> = st.blocks.iter().map(|b| b.to_string()).collect();
                e.context(&format!("updating [{}]", names.join(", ")))
            })?;
            solves += 1;
            if !phi.is_finite() {
                return Err(Error::Numerical { message: format!("non-finite misfit {phi}"), iterations: 0 });
            }
            if rng.gen::<f64>() < acceptance_prob(state.phi, phi) {
                state.u = candidate;
                state.phi = phi;
                st.accepted += 1;
            }
        }
        Ok(solves)
    }

    /// Runs one chain on stream `chain` of `seed`. Without `init`, the start
    /// is drawn from the prior on the same stream.
    pub fn run_chain(
        &self,
        init: Option<&ParameterVector>,
        n_sweeps: usize,
        seed: u64,
        chain: usize,
    ) -> Result<ChainHistory> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain as u64);
        let u = match init {
            Some(u) => u.clone(),
            None => sample_prior(self.prior, &mut rng)?,
        };
        if !in_support(&u, self.prior) {
            return Err(Error::domain(format!("initial state of chain {chain} is outside the prior support")));
        }
        let phi = self.potential.potential(&u)?;
        let mut state = ChainState { u, phi };
        let mut stats: Vec<GroupStats> = self
            .settings
            .schedule
            .0
            .iter()
            .map(|g| GroupStats { blocks: g.clone(), ..Default::default() })
            .collect();
        let record = self.settings.record_modes;
        let stored = n_sweeps / self.settings.thin;
        let mut history = ChainHistory {
            chain,
            seed,
            thin: self.settings.thin,
            n_sweeps,
            names: recorded_names(self.prior, record),
            sweeps: Vec::with_capacity(stored),
            samples: Vec::with_capacity(stored),
            misfits: Vec::with_capacity(stored),
            groups: Vec::new(),
            forward_solves: 1,
            final_state: state.u.clone(),
        };
        for s in 1..=n_sweeps {
            history.forward_solves += self.sweep(&mut state, &mut stats, &mut rng)?;
            if let Some(every) = self.settings.revalidate_every {
                if s % every == 0 {
                    let fresh = self.potential.potential(&state.u)?;
                    history.forward_solves += 1;
                    if (fresh - state.phi).abs() > 1e-9 * fresh.abs().max(1.0) {
                        return Err(Error::Numerical {
                            message: format!("cached misfit {} disagrees with recomputed {fresh}", state.phi),
                            iterations: s,
                        });
                    }
                }
            }
            if s % self.settings.thin == 0 {
                history.sweeps.push(s);
                history.samples.push(recorded_values(&state.u, self.prior, record));
                history.misfits.push(state.phi);
            }
        }
        history.groups = stats;
        history.final_state = state.u;
        Ok(history)
    }

    /// Independent chains `0..n_chains` in parallel, each on its own stream.
    pub fn run_chains(
        &self,
        inits: Option<&[ParameterVector]>,
        n_chains: usize,
        n_sweeps: usize,
        seed: u64,
    ) -> Result<Vec<ChainHistory>> {
        if n_chains == 0 {
            return Err(Error::config("at least one chain is required"));
        }
        if let Some(i) = inits {
            if i.len() != n_chains {
                return Err(Error::config(format!("{} initial states for {n_chains} chains", i.len())));
            }
        }
        (0..n_chains)
            .into_par_iter()
            .map(|k| self.run_chain(inits.map(|i| &i[k]), n_sweeps, seed, k))
            .collect()
    }
}
