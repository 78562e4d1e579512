//! End-to-end experiments driven by one JSON configuration: truth, synthetic
//! data, chains, diagnostics and summaries, each stored as files under the
//! output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{autocorrelation, summarize, SummaryReport};
use crate::error::{Error, Result};
use crate::geometry::{rasterize, ChannelParams, Geometry, LayerFaultParams};
use crate::grid::{CellField, Grid};
use crate::mcmc::{ChainHistory, DarcyPotential, GibbsSchedule, GroupStats, ProposalKind, ProposalSpec, Sampler, SamplerSettings};
use crate::observation::{make_synthetic, DataSet, ForwardModel, MeasurementConfig};
use crate::priors::{in_support, Block, GeometryPrior, ParameterVector, PermPrior, Permeability, PriorSpec};
use crate::random_fields::{default_facies_covariances, KlCache, MAX_KL_CELLS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LayerFault,
    Layer,
    Channel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermMode {
    Constant,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurementSpec {
    /// `per_side x per_side` interior lattice.
    Lattice { per_side: usize, sigma: f64 },
    Points { locations: Vec<[f64; 2]>, sigma: f64 },
}

impl MeasurementSpec {
    pub fn config(&self) -> MeasurementConfig {
        match self {
            MeasurementSpec::Lattice { per_side, sigma } => MeasurementConfig::lattice(*per_side, *sigma),
            MeasurementSpec::Points { locations, sigma } => {
                MeasurementConfig { locations: locations.clone(), sigma: *sigma }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSpec {
    /// A fully specified parameter vector.
    Parameters { parameters: ParameterVector },
    /// Given geometry with log-permeability fields drawn from the prior on
    /// the fine grid at the experiment seed.
    PriorFields { geometry: Geometry },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelKind,
    pub perm_mode: PermMode,
    /// Grid for the truth and the synthetic data.
    pub fine_grid: Grid,
    pub inversion_grid: Grid,
    pub prior: PriorSpec,
    pub truth: TruthSpec,
    pub measurement: MeasurementSpec,
    /// Constant source term `f`.
    pub source: f64,
    pub gamma: f64,
    pub sampler: SamplerSettings,
    pub chains: usize,
    pub sweeps: usize,
    pub burn_in_fraction: f64,
    pub mpsrf_threshold: f64,
    /// Master seed: truth fields use `seed`, noise `seed + 1`, chains `seed + 2`.
    pub seed: u64,
    pub out: PathBuf,
    /// Directory of cached KL bases; defaults to `<out>/kl_cache`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_cache: Option<PathBuf>,
    /// Settings that are reconstructions rather than published values.
    #[serde(default)]
    pub reconstructed: Vec<String>,
}

fn sha256_hex(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn truth_seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn chain_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.fine_grid.nx() <= self.inversion_grid.nx() {
            return err(format!(
                "fine grid ({0}x{0}) must be strictly finer than the inversion grid ({1}x{1})",
                self.fine_grid.nx(),
                self.inversion_grid.nx()
            ));
        }
        self.prior.validate()?;
        let model_ok = matches!(
            (self.model, &self.prior.geometry),
            (ModelKind::LayerFault, GeometryPrior::Layers { slip_max: Some(_), .. })
                | (ModelKind::Layer, GeometryPrior::Layers { slip_max: None, .. })
                | (ModelKind::Channel, GeometryPrior::Channel { .. })
        );
        if !model_ok {
            return err(format!("model {:?} does not match the geometry prior", self.model));
        }
        if (self.perm_mode == PermMode::Continuous) != self.prior.is_continuous() {
            return err(format!("perm mode {:?} does not match the permeability priors", self.perm_mode));
        }
        self.sampler.validate(&self.prior)?;
        self.measurement.config().validate()?;
        match &self.truth {
            TruthSpec::Parameters { parameters } => {
                if !in_support(parameters, &self.prior) {
                    return err("true parameters lie outside the prior support".into());
                }
            }
            TruthSpec::PriorFields { geometry } => {
                if self.perm_mode != PermMode::Continuous {
                    return err("prior-drawn truth fields need a continuous permeability model".into());
                }
                geometry.validate()?;
                if geometry.num_facies() != self.prior.num_facies() {
                    return err("truth geometry and prior disagree on the number of facies".into());
                }
            }
        }
        if !self.source.is_finite() {
            return err("source must be finite".into());
        }
        if !(self.gamma > 0.0) {
            return err(format!("noise level must be positive, got {}", self.gamma));
        }
        if self.chains == 0 {
            return err("at least one chain is required".into());
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return err(format!("burn-in fraction {} outside [0, 1)", self.burn_in_fraction));
        }
        if !(self.mpsrf_threshold > 1.0) {
            return err("MPSRF threshold must exceed 1".into());
        }
        Ok(())
    }

    /// Hash of everything that determines the data and the posterior.
    pub fn problem_hash(&self) -> String {
        sha256_hex(&serde_json::json!({
            "fine_grid": self.fine_grid,
            "inversion_grid": self.inversion_grid,
            "prior": self.prior,
            "truth": self.truth,
            "measurement": self.measurement,
            "source": self.source,
            "gamma": self.gamma,
            "seed": self.seed,
        }))
    }

    /// Hash of the effective configuration apart from file locations.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out");
            obj.remove("kl_cache");
        }
        sha256_hex(&v)
    }

    pub fn kl_cache(&self) -> KlCache {
        KlCache::new(self.kl_cache.clone().unwrap_or_else(|| self.out.join("kl_cache")))
    }

    pub fn source_field(&self, grid: Grid) -> CellField {
        CellField::constant(grid, self.source)
    }

    /// Prior used to build the truth: field blocks carry every KL mode of the
    /// basis grid used on the fine grid.
    pub fn truth_prior(&self) -> PriorSpec {
        let mut p = self.prior.clone();
        let cells = self.fine_grid.num_cells().min(MAX_KL_CELLS);
        for perm in &mut p.perm {
            if let PermPrior::GaussianField { modes, .. } = perm {
                *modes = cells;
            }
        }
        p.fixed.retain(|f| !matches!(f.block, Block::Field(_)));
        p
    }

    pub fn truth_model(&self) -> Result<ForwardModel> {
        ForwardModel::new(
            self.fine_grid,
            self.source_field(self.fine_grid),
            &self.measurement.config(),
            &self.truth_prior(),
            &self.kl_cache(),
        )
    }

    pub fn inversion_model(&self) -> Result<ForwardModel> {
        ForwardModel::new(
            self.inversion_grid,
            self.source_field(self.inversion_grid),
            &self.measurement.config(),
            &self.prior,
            &self.kl_cache(),
        )
    }

    /// The true parameter vector, drawing fields from the prior when requested.
    pub fn true_parameters(&self) -> Result<ParameterVector> {
        match &self.truth {
            TruthSpec::Parameters { parameters } => Ok(parameters.clone()),
            TruthSpec::PriorFields { geometry } => {
                let prior = self.truth_prior();
                let mut rng = ChaCha8Rng::seed_from_u64(self.truth_seed());
                let fields = (0..prior.num_facies())
                    .map(|i| (0..prior.block_len(Block::Field(i))).map(|_| StandardNormal.sample(&mut rng)).collect())
                    .collect();
                Ok(ParameterVector { geometry: geometry.clone(), perm: Permeability::Fields(fields) })
            }
        }
    }

    /// Applies command-line overrides.
    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        chains: Option<usize>,
        sweeps: Option<usize>,
        out: Option<PathBuf>,
    ) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(c) = chains {
            self.chains = c;
        }
        if let Some(s) = sweeps {
            self.sweeps = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        self.validate()?;
        Ok(self)
    }
}

/// Metadata shared by every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub experiment: String,
    pub problem_hash: String,
    pub config_hash: String,
    pub reconstructed: Vec<String>,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Provenance {
            experiment: cfg.name.clone(),
            problem_hash: cfg.problem_hash(),
            config_hash: cfg.config_hash(),
            reconstructed: cfg.reconstructed.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthArtifact {
    pub provenance: Provenance,
    pub seed: u64,
    pub fine_grid: Grid,
    pub parameters: ParameterVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataArtifact {
    pub provenance: Provenance,
    pub data: DataSet,
}

/// JSON sidecar of one chain's CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSidecar {
    pub provenance: Provenance,
    pub chain: usize,
    pub seed: u64,
    pub stream: u64,
    pub thin: usize,
    pub n_sweeps: usize,
    pub names: Vec<String>,
    pub groups: Vec<GroupStats>,
    pub forward_solves: u64,
    pub final_state: ParameterVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsArtifact {
    pub provenance: Provenance,
    pub mpsrf: Option<f64>,
    pub mpsrf_jittered: bool,
    pub mpsrf_threshold: f64,
    pub converged: bool,
    pub mpsrf_trace: Vec<(usize, f64)>,
    /// Per parameter, per chain.
    pub iact: BTreeMap<String, Vec<Option<f64>>>,
    /// Per chain, per grouping.
    pub acceptance_rates: Vec<Vec<f64>>,
    pub boundary_rejections: Vec<Vec<u64>>,
    pub thin: usize,
    pub burn_in_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryArtifact {
    pub provenance: Provenance,
    /// True values of the recorded parameters, when known.
    pub truth: BTreeMap<String, f64>,
    pub report: SummaryReport,
}

pub const CONFIG_FILE: &str = "config.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const DATA_FILE: &str = "data.json";
pub const CHAIN_DIR: &str = "chains";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const SUMMARY_FILE: &str = "summary.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn check_problem(found: &Provenance, cfg: &ExperimentConfig, what: &str) -> Result<()> {
    if found.problem_hash != cfg.problem_hash() {
        return Err(Error::Schema(format!(
            "{what} was produced for a different problem (hash {} vs {})",
            &found.problem_hash[..12],
            &cfg.problem_hash()[..12]
        )));
    }
    Ok(())
}

fn write_config(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join(CONFIG_FILE), cfg.to_json())?;
    Ok(())
}

/// Writes `truth.json` plus the true permeability and facies labels on the fine grid.
pub fn cmd_truth(cfg: &ExperimentConfig) -> Result<TruthArtifact> {
    write_config(cfg)?;
    let u = cfg.true_parameters()?;
    let model = cfg.truth_model()?;
    let kappa = model.permeability(&u)?;
    kappa.write_csv(&cfg.out.join("kappa_true.csv"))?;
    rasterize(&u.geometry, cfg.fine_grid)?.write_csv(&cfg.out.join("labels_true.csv"))?;
    let art = TruthArtifact {
        provenance: Provenance::of(cfg),
        seed: cfg.truth_seed(),
        fine_grid: cfg.fine_grid,
        parameters: u,
    };
    write_json(&cfg.out.join(TRUTH_FILE), &art)?;
    Ok(art)
}

pub fn read_truth(cfg: &ExperimentConfig) -> Result<TruthArtifact> {
    let art: TruthArtifact = read_json(&cfg.out.join(TRUTH_FILE))?;
    check_problem(&art.provenance, cfg, "truth")?;
    Ok(art)
}

/// Simulates data from the stored truth on the fine grid.
pub fn cmd_observe(cfg: &ExperimentConfig) -> Result<DataArtifact> {
    let truth = read_truth(cfg)?;
    let data = make_synthetic(&cfg.truth_model()?, &truth.parameters, cfg.inversion_grid, cfg.gamma, cfg.noise_seed())?;
    let art = DataArtifact { provenance: Provenance::of(cfg), data };
    write_json(&cfg.out.join(DATA_FILE), &art)?;
    Ok(art)
}

pub fn read_data(cfg: &ExperimentConfig) -> Result<DataArtifact> {
    let art: DataArtifact = read_json(&cfg.out.join(DATA_FILE))?;
    check_problem(&art.provenance, cfg, "data set")?;
    art.data.validate()?;
    if art.data.inversion_grid != cfg.inversion_grid {
        return Err(Error::Schema("data set was generated for a different inversion grid".into()));
    }
    Ok(art)
}

fn chain_stem(k: usize) -> String {
    format!("chain_{k:03}")
}

/// Runs the chains against the stored data and writes one CSV and sidecar per chain.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<Vec<ChainHistory>> {
    let data = read_data(cfg)?.data;
    let model = cfg.inversion_model()?;
    let potential = DarcyPotential { model: &model, data: &data };
    let sampler = Sampler::new(&potential, &cfg.prior, &cfg.sampler)?;
    let histories = sampler.run_chains(None, cfg.chains, cfg.sweeps, cfg.chain_seed())?;
    let dir = cfg.out.join(CHAIN_DIR);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    let prov = Provenance::of(cfg);
    for h in &histories {
        h.write_csv(&dir.join(format!("{}.csv", chain_stem(h.chain))))?;
        let side = ChainSidecar {
            provenance: prov.clone(),
            chain: h.chain,
            seed: h.seed,
            stream: h.chain as u64,
            thin: h.thin,
            n_sweeps: h.n_sweeps,
            names: h.names.clone(),
            groups: h.groups.clone(),
            forward_solves: h.forward_solves,
            final_state: h.final_state.clone(),
        };
        write_json(&dir.join(format!("{}.json", chain_stem(h.chain))), &side)?;
    }
    Ok(histories)
}

fn read_chain_csv(path: &Path) -> Result<(Vec<String>, Vec<usize>, Vec<Vec<f64>>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
    let bad = |m: &str| Error::Schema(format!("{}: {m}", path.display()));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file"))?.split(',').collect();
    if header.len() < 2 || header[0] != "sweep" || header[header.len() - 1] != "misfit" {
        return Err(bad("unexpected header"));
    }
    let names = header[1..header.len() - 1].iter().map(|s| s.to_string()).collect();
    let (mut sweeps, mut samples, mut misfits) = (Vec::new(), Vec::new(), Vec::new());
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(bad("row length differs from header"));
        }
        sweeps.push(fields[0].parse().map_err(|_| bad("bad sweep index"))?);
        let vals: Vec<f64> = fields[1..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad number"))?;
        misfits.push(vals[vals.len() - 1]);
        samples.push(vals[..vals.len() - 1].to_vec());
    }
    Ok((names, sweeps, samples, misfits))
}

/// Reads every chain under `<out>/chains`, refusing to mix configurations.
pub fn read_chains(cfg: &ExperimentConfig) -> Result<Vec<ChainHistory>> {
    let dir = cfg.out.join(CHAIN_DIR);
    let mut stems: Vec<String> = std::fs::read_dir(&dir)
        .map_err(|e| Error::Missing(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".json")).map(str::to_string))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Missing(format!("no chains in {}", dir.display())));
    }
    let mut out = Vec::new();
    let mut hash: Option<String> = None;
    for stem in stems {
        let side: ChainSidecar = read_json(&dir.join(format!("{stem}.json")))?;
        match &hash {
            None => hash = Some(side.provenance.config_hash.clone()),
            Some(h) if *h != side.provenance.config_hash => {
                return Err(Error::Schema(format!("chain '{stem}' was produced by a different configuration")));
            }
            _ => {}
        }
        check_problem(&side.provenance, cfg, "chain")?;
        let (names, sweeps, samples, misfits) = read_chain_csv(&dir.join(format!("{stem}.csv")))?;
        if names != side.names {
            return Err(Error::Schema(format!("chain '{stem}' CSV columns disagree with its sidecar")));
        }
        out.push(ChainHistory {
            chain: side.chain,
            seed: side.seed,
            thin: side.thin,
            n_sweeps: side.n_sweeps,
            names,
            sweeps,
            samples,
            misfits,
            groups: side.groups,
            forward_solves: side.forward_solves,
            final_state: side.final_state,
        });
    }
    Ok(out)
}

/// Writes `diagnostics.json`, `mpsrf_trace.csv` and `acf.csv` (first chain, post burn-in).
pub fn cmd_diagnose(cfg: &ExperimentConfig) -> Result<DiagnosticsArtifact> {
    let chains = read_chains(cfg)?;
    let report = summarize(&chains, cfg.burn_in_fraction, Some((&cfg.prior, cfg.sampler.record_modes)))?;
    let mpsrf = report.mpsrf.map(|m| m.value);
    let art = DiagnosticsArtifact {
        provenance: Provenance::of(cfg),
        mpsrf,
        mpsrf_jittered: report.mpsrf.is_some_and(|m| m.jittered),
        mpsrf_threshold: cfg.mpsrf_threshold,
        converged: mpsrf.is_some_and(|r| r < cfg.mpsrf_threshold),
        mpsrf_trace: report.mpsrf_trace.clone(),
        iact: report.parameters.iter().map(|p| (p.name.clone(), p.iact.clone())).collect(),
        acceptance_rates: chains.iter().map(|h| h.groups.iter().map(GroupStats::acceptance_rate).collect()).collect(),
        boundary_rejections: chains.iter().map(|h| h.groups.iter().map(|g| g.boundary_rejections).collect()).collect(),
        thin: report.thin,
        burn_in_fraction: cfg.burn_in_fraction,
    };
    write_json(&cfg.out.join(DIAGNOSTICS_FILE), &art)?;

    let mut trace = String::from("samples,mpsrf\n");
    for (n, r) in &art.mpsrf_trace {
        trace.push_str(&format!("{n},{r}\n"));
    }
    std::fs::write(cfg.out.join("mpsrf_trace.csv"), trace)?;

    let first = &chains[0];
    let start = (cfg.burn_in_fraction * first.samples.len() as f64).floor() as usize;
    let window = &first.samples[start..];
    let max_lag = 200.min(window.len().saturating_sub(1));
    let mut acf_cols = Vec::new();
    for k in 0..first.names.len() {
        let series: Vec<f64> = window.iter().map(|s| s[k]).collect();
        acf_cols.push(if series.len() > max_lag { autocorrelation(&series, max_lag)?.values } else { Vec::new() });
    }
    let mut acf = String::from("lag");
    for n in &first.names {
        acf.push(',');
        acf.push_str(n);
    }
    acf.push('\n');
    for lag in 0..=max_lag {
        if acf_cols.iter().any(|c| c.len() <= lag) {
            break;
        }
        acf.push_str(&(lag * first.thin).to_string());
        for c in &acf_cols {
            acf.push_str(&format!(",{}", c[lag]));
        }
        acf.push('\n');
    }
    std::fs::write(cfg.out.join("acf.csv"), acf)?;
    Ok(art)
}

/// Writes `summary.json`, the parameter table `summary.csv` and one histogram CSV per parameter.
pub fn cmd_summarize(cfg: &ExperimentConfig) -> Result<SummaryArtifact> {
    let chains = read_chains(cfg)?;
    let report = summarize(&chains, cfg.burn_in_fraction, Some((&cfg.prior, cfg.sampler.record_modes)))?;
    let truth = match read_truth(cfg) {
        Ok(t) => {
            let comps = crate::mcmc::recorded_components(&cfg.prior, cfg.sampler.record_modes);
            comps
                .iter()
                .filter_map(|c| {
                    let v = t.parameters.get(c.block).ok()?;
                    // truth fields live on a different basis, so only scalars are comparable
                    (!matches!(c.block, Block::Field(_))).then(|| (c.name.clone(), v[c.index]))
                })
                .collect()
        }
        Err(Error::Missing(_)) => BTreeMap::new(),
        Err(e) => return Err(e),
    };
    let mut table = String::from("parameter,true_value,mean,variance\n");
    for p in &report.parameters {
        let t = truth.get(&p.name).map(|v| v.to_string()).unwrap_or_default();
        table.push_str(&format!("{},{},{},{}\n", p.name, t, p.mean, p.variance));
    }
    std::fs::write(cfg.out.join("summary.csv"), table)?;
    let hist_dir = cfg.out.join("histograms");
    std::fs::create_dir_all(&hist_dir)?;
    for p in &report.parameters {
        let h = &p.histogram;
        let mut s = String::from("bin_lower,bin_upper,prior_density,posterior_density\n");
        for k in 0..h.posterior_density.len() {
            s.push_str(&format!("{},{},{},{}\n", h.edges[k], h.edges[k + 1], h.prior_density[k], h.posterior_density[k]));
        }
        std::fs::write(hist_dir.join(format!("{}.csv", p.name)), s)?;
    }
    let art = SummaryArtifact { provenance: Provenance::of(cfg), truth, report };
    write_json(&cfg.out.join(SUMMARY_FILE), &art)?;
    Ok(art)
}

// ---------------------------------------------------------------------------
// Presets

const SIGMA: f64 = 0.01;
const FIELD_VARIANCE_NOTE: &str =
    "field covariances: variance 0.5, correlation lengths (0.4, 0.1), means m1 = 2.0 and m2 = 0.0";

fn local(step: f64) -> ProposalSpec {
    ProposalSpec::mixed(ProposalKind::LocalGaussian { step }, 0.5)
}

fn schedule(groups: &[&[&str]]) -> GibbsSchedule {
    GibbsSchedule(
        groups
            .iter()
            .map(|g| g.iter().map(|b| b.parse().expect("preset block names are valid")).collect())
            .collect(),
    )
}

fn proposals(entries: &[(&str, ProposalSpec)]) -> BTreeMap<Block, ProposalSpec> {
    entries.iter().map(|(b, p)| (b.parse().expect("preset block names are valid"), *p)).collect()
}

fn layer3(name: &str, gamma: f64) -> ExperimentConfig {
    let truth = ParameterVector {
        geometry: Geometry::Layers(LayerFaultParams { a: vec![0.39, 0.35], b: vec![0.18, 0.6], c: 0.15 }),
        perm: Permeability::Constant(vec![12.0, 1.0, 5.0]),
    };
    ExperimentConfig {
        name: name.into(),
        model: ModelKind::LayerFault,
        perm_mode: PermMode::Constant,
        fine_grid: Grid::new(100).unwrap(),
        inversion_grid: Grid::new(50).unwrap(),
        prior: PriorSpec {
            geometry: GeometryPrior::Layers { layers: 3, slip_max: Some(0.5) },
            perm: vec![
                PermPrior::Uniform { lower: 8.0, upper: 16.0 },
                PermPrior::Uniform { lower: 0.5, upper: 2.0 },
                PermPrior::Uniform { lower: 3.0, upper: 8.0 },
            ],
            fixed: vec![],
        },
        truth: TruthSpec::Parameters { parameters: truth },
        measurement: MeasurementSpec::Lattice { per_side: 4, sigma: SIGMA },
        source: 1.0,
        gamma,
        sampler: SamplerSettings {
            schedule: schedule(&[&["kappa1", "kappa3"], &["kappa2"], &["c"], &["a"], &["b"]]),
            proposals: proposals(&[
                ("a", local(0.02)),
                ("b", local(0.02)),
                ("c", local(0.02)),
                ("kappa1", local(0.4)),
                ("kappa2", local(0.05)),
                ("kappa3", local(0.2)),
            ]),
            thin: 10,
            record_modes: 0,
            revalidate_every: None,
        },
        chains: 20,
        sweeps: 100_000,
        burn_in_fraction: 0.2,
        mpsrf_threshold: 1.1,
        seed: 2013,
        out: PathBuf::from(format!("runs/{name}")),
        kl_cache: None,
        reconstructed: vec![
            "slip bound c* = 0.5".into(),
            "permeability intervals [8,16], [0.5,2], [3,8]".into(),
            "source f = 1".into(),
            "measurement locations: 4x4 interior lattice".into(),
            "proposal step sizes".into(),
            "burn-in fraction 0.2 and MPSRF threshold 1.1".into(),
        ],
    }
}

fn field_priors(modes: usize) -> Vec<PermPrior> {
    default_facies_covariances([2.0, 0.0])
        .into_iter()
        .map(|covariance| PermPrior::GaussianField { covariance, modes })
        .collect()
}

fn pcn(beta: f64) -> ProposalSpec {
    ProposalSpec::new(ProposalKind::Pcn { beta })
}

fn twolayer(name: &str, per_side: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        model: ModelKind::Layer,
        perm_mode: PermMode::Continuous,
        fine_grid: Grid::new(100).unwrap(),
        inversion_grid: Grid::new(50).unwrap(),
        prior: PriorSpec {
            geometry: GeometryPrior::Layers { layers: 2, slip_max: None },
            perm: field_priors(50 * 50),
            fixed: vec![],
        },
        truth: TruthSpec::PriorFields {
            geometry: Geometry::Layers(LayerFaultParams { a: vec![0.11], b: vec![0.86], c: 0.0 }),
        },
        measurement: MeasurementSpec::Lattice { per_side, sigma: SIGMA },
        source: 1.0,
        gamma: 1e-3,
        sampler: SamplerSettings {
            schedule: schedule(&[&["field1"], &["field2"], &["a", "b"]]),
            proposals: proposals(&[("field1", pcn(0.05)), ("field2", pcn(0.05)), ("a", local(0.02)), ("b", local(0.02))]),
            thin: 10,
            record_modes: 10,
            revalidate_every: None,
        },
        chains: 20,
        sweeps: 100_000,
        burn_in_fraction: 0.2,
        mpsrf_threshold: 1.1,
        seed: 2014,
        out: PathBuf::from(format!("runs/{name}")),
        kl_cache: None,
        reconstructed: vec![
            FIELD_VARIANCE_NOTE.into(),
            "source f = 1".into(),
            format!("measurement locations: {per_side}x{per_side} interior lattice"),
            "proposal step sizes".into(),
            "burn-in fraction 0.2 and MPSRF threshold 1.1".into(),
            "truth fields drawn on a 64x64 KL basis and interpolated to the 100x100 grid".into(),
        ],
    }
}

fn channel() -> ExperimentConfig {
    ExperimentConfig {
        name: "channel".into(),
        model: ModelKind::Channel,
        perm_mode: PermMode::Continuous,
        fine_grid: Grid::new(100).unwrap(),
        inversion_grid: Grid::new(50).unwrap(),
        prior: PriorSpec {
            geometry: GeometryPrior::Channel {
                bounds: [[0.05, 0.35], [8.0, 14.0], [0.0, 0.8], [0.2, 0.6], [0.15, 0.45]],
            },
            perm: field_priors(50 * 50),
            fixed: vec![],
        },
        truth: TruthSpec::PriorFields {
            geometry: Geometry::Channel(ChannelParams { d: [0.2, 11.0, 0.39, 0.4, 0.3] }),
        },
        measurement: MeasurementSpec::Lattice { per_side: 6, sigma: SIGMA },
        source: 1.0,
        gamma: 2.5e-4,
        sampler: SamplerSettings {
            schedule: schedule(&[&["d1"], &["d2"], &["d3"], &["d4"], &["d5"], &["field1", "field2"]]),
            proposals: proposals(&[
                ("d1", local(0.02)),
                ("d2", local(0.2)),
                ("d3", local(0.02)),
                ("d4", local(0.02)),
                ("d5", local(0.02)),
                ("field1", pcn(0.05)),
                ("field2", pcn(0.05)),
            ]),
            thin: 10,
            record_modes: 10,
            revalidate_every: None,
        },
        chains: 20,
        sweeps: 100_000,
        burn_in_fraction: 0.2,
        mpsrf_threshold: 1.1,
        seed: 2015,
        out: PathBuf::from("runs/channel"),
        kl_cache: None,
        reconstructed: vec![
            "channel parameter intervals [0.05,0.35], [8,14], [0,0.8], [0.2,0.6], [0.15,0.45]".into(),
            FIELD_VARIANCE_NOTE.into(),
            "source f = 1".into(),
            "measurement locations: 6x6 interior lattice".into(),
            "proposal step sizes".into(),
            "burn-in fraction 0.2 and MPSRF threshold 1.1".into(),
            "truth fields drawn on a 64x64 KL basis and interpolated to the 100x100 grid".into(),
        ],
    }
}

/// Shipped experiments by name.
pub fn presets() -> Vec<ExperimentConfig> {
    vec![
        layer3("layer3_ds1", 2e-3),
        layer3("layer3_ds2", 5e-4),
        twolayer("twolayer_cont_9", 3),
        twolayer("twolayer_cont_36", 6),
        channel(),
    ]
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    presets().into_iter().find(|c| c.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in presets() {
            p.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
            let back: ExperimentConfig = serde_json::from_str(&p.to_json()).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn preset_values() {
        let l = preset("layer3_ds1").unwrap();
        assert_eq!(l.measurement.config().len(), 16);
        assert_eq!(l.gamma, 2e-3);
        assert_eq!(preset("layer3_ds2").unwrap().gamma, 5e-4);
        let t = preset("twolayer_cont_9").unwrap();
        assert_eq!((t.measurement.config().len(), t.gamma), (9, 1e-3));
        assert_eq!(preset("twolayer_cont_36").unwrap().measurement.config().len(), 36);
        assert_eq!(preset("channel").unwrap().gamma, 2.5e-4);
        assert!(preset("nope").is_none());
    }

    #[test]
    fn hashes_track_the_right_fields() {
        let a = preset("layer3_ds1").unwrap();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        b.chains = 3;
        assert_eq!(a.problem_hash(), b.problem_hash());
        assert_ne!(a.config_hash(), b.config_hash());
        b.out = a.out.clone();
        b.chains = a.chains;
        assert_eq!(a.config_hash(), b.config_hash());
        b.gamma = 1e-3;
        assert_ne!(a.problem_hash(), b.problem_hash());
    }

    #[test]
    fn inverse_crime_guard_in_config() {
        let mut c = preset("layer3_ds1").unwrap();
        c.fine_grid = c.inversion_grid;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn seeds_are_derived_from_the_master_seed() {
        let c = preset("layer3_ds1").unwrap().with_overrides(Some(10), Some(2), Some(5), None).unwrap();
        assert_eq!((c.truth_seed(), c.noise_seed(), c.chain_seed()), (10, 11, 12));
        assert_eq!((c.chains, c.sweeps), (2, 5));
    }
}
