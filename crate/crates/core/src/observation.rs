//! Smoothed point measurements of the pressure, the composite forward map,
//! the data misfit and synthetic data generation.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::grid::{CellField, Grid, NodeField};
use crate::priors::{in_support, ParameterVector, Permeability, PermPrior, PriorSpec};
use crate::random_fields::{resample, KLBasis, KlCache, MAX_KL_CELLS};
use crate::solver::solve_darcy;

/// Gaussian-kernel measurement functionals centered at `locations`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub locations: Vec<[f64; 2]>,
    pub sigma: f64,
}

impl MeasurementConfig {
    /// `m x m` lattice at `(k/(m+1), l/(m+1))`, ordered row by row from the bottom.
    pub fn lattice(m: usize, sigma: f64) -> Self {
        let t = |k: usize| (k + 1) as f64 / (m + 1) as f64;
        let locations = (0..m).flat_map(|l| (0..m).map(move |k| [t(k), t(l)])).collect();
        MeasurementConfig { locations, sigma }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.locations.is_empty() {
            return Err(Error::config("at least one measurement location is required"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config(format!("kernel width must be positive, got {}", self.sigma)));
        }
        for [x, y] in &self.locations {
            if !(*x > 0.0 && *x < 1.0 && *y > 0.0 && *y < 1.0) {
                return Err(Error::config(format!("measurement location ({x}, {y}) is not interior")));
            }
        }
        Ok(())
    }
}

/// Precomputed sparse weights `l_j(p) = sum_k w_jk p_k` over interior nodes.
///
/// The pressure is extended from the nodes by its bilinear interpolant (zero
/// on the boundary) and integrated exactly against the Gaussian kernel. The
/// kernel is not renormalized near the boundary.
#[derive(Clone, Debug)]
pub struct MeasurementOperator {
    grid: Grid,
    rows: Vec<Vec<(usize, f64)>>,
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `int_a^b (x - c) g(x) dx` for the `N(mu, sigma^2)` density `g`.
fn linear_moment(a: f64, b: f64, c: f64, mu: f64, sigma: f64) -> f64 {
    let (za, zb) = ((a - mu) / sigma, (b - mu) / sigma);
    sigma * (std_normal_pdf(za) - std_normal_pdf(zb)) + (mu - c) * (std_normal_cdf(zb) - std_normal_cdf(za))
}

/// Integrals of the interior hat functions of a uniform 1-D mesh against `N(mu, sigma^2)`.
fn hat_weights(n: usize, mu: f64, sigma: f64) -> Vec<(usize, f64)> {
    let h = 1.0 / n as f64;
    let reach = 12.0 * sigma + h;
    (1..n)
        .filter_map(|i| {
            let x = i as f64 * h;
            if (x - mu).abs() > reach {
                return None;
            }
            let rise = linear_moment(x - h, x, x - h, mu, sigma) / h;
            let fall = -linear_moment(x, x + h, x + h, mu, sigma) / h;
            let w = rise + fall;
            (w > 0.0).then_some((i, w))
        })
        .collect()
}

impl MeasurementOperator {
    pub fn new(grid: Grid, config: &MeasurementConfig) -> Result<Self> {
        config.validate()?;
        let n = grid.nx();
        let rows = config
            .locations
            .iter()
            .map(|&[x, y]| {
                let wx = hat_weights(n, x, config.sigma);
                let wy = hat_weights(n, y, config.sigma);
                wy.iter()
                    .flat_map(|&(j, b)| wx.iter().map(move |&(i, a)| (grid.node_index(i, j), a * b)))
                    .collect()
            })
            .collect();
        Ok(MeasurementOperator { grid, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply(&self, p: &NodeField) -> Result<Vec<f64>> {
        if p.grid() != self.grid {
            return Err(Error::shape(format!(
                "pressure on a {0}x{0} grid, measurements built for {1}x{1}",
                p.grid().nx(),
                self.grid.nx()
            )));
        }
        let v = p.values();
        Ok(self.rows.iter().map(|row| row.iter().map(|&(k, w)| w * v[k]).sum()).collect())
    }
}

/// Applies the measurement functionals to a pressure field.
pub fn measure(p: &NodeField, config: &MeasurementConfig) -> Result<Vec<f64>> {
    MeasurementOperator::new(p.grid(), config)?.apply(p)
}

/// Observed data with i.i.d. Gaussian noise of standard deviation `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub locations: Vec<[f64; 2]>,
    pub sigma: f64,
    pub gamma: f64,
    pub seed: u64,
    pub fine_grid: Grid,
    pub inversion_grid: Grid,
    pub values: Vec<f64>,
}

impl DataSet {
    pub fn measurement(&self) -> MeasurementConfig {
        MeasurementConfig { locations: self.locations.clone(), sigma: self.sigma }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::config(format!("noise level must be positive, got {}", self.gamma)));
        }
        if self.values.len() != self.locations.len() {
            return Err(Error::Schema(format!(
                "{} data values for {} locations",
                self.values.len(),
                self.locations.len()
            )));
        }
        Ok(())
    }

    /// `1/2 |y - g|^2 / gamma^2`.
    pub fn misfit(&self, prediction: &[f64]) -> Result<f64> {
        if prediction.len() != self.values.len() {
            return Err(Error::shape(format!(
                "{} predictions for {} observations",
                prediction.len(),
                self.values.len()
            )));
        }
        let ss: f64 = self.values.iter().zip(prediction).map(|(y, g)| (y - g).powi(2)).sum();
        Ok(0.5 * ss / (self.gamma * self.gamma))
    }

    /// Noise-weighted norm `|v|_Gamma = |v| / gamma`.
    pub fn weighted_norm(&self, v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt() / self.gamma
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
        let d: DataSet = serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        d.validate()?;
        Ok(d)
    }
}

#[derive(Clone, Debug)]
struct FieldModel {
    mean: f64,
    basis: Arc<KLBasis>,
}

/// Parameter-to-observation map on one grid: geometry and permeability
/// blocks to a permeability field, Darcy solve, measurement.
#[derive(Clone, Debug)]
pub struct ForwardModel {
    grid: Grid,
    source: CellField,
    config: MeasurementConfig,
    measurement: MeasurementOperator,
    prior: PriorSpec,
    fields: Vec<FieldModel>,
    /// Grid carrying the KL bases when they cannot live on `grid` itself.
    kl_grid: Grid,
}

impl ForwardModel {
    /// Field bases come from `cache`; on grids beyond the dense-covariance
    /// limit they are built on a 64x64 grid and interpolated.
    pub fn new(
        grid: Grid,
        source: CellField,
        measurement: &MeasurementConfig,
        prior: &PriorSpec,
        cache: &KlCache,
    ) -> Result<Self> {
        prior.validate()?;
        if source.grid() != grid {
            return Err(Error::shape("source term and forward model grids differ"));
        }
        let kl_grid = if grid.num_cells() > MAX_KL_CELLS { Grid::new(64)? } else { grid };
        let mut fields = Vec::new();
        for p in &prior.perm {
            if let PermPrior::GaussianField { covariance, modes } = p {
                if *modes > kl_grid.num_cells() {
                    return Err(Error::config(format!(
                        "{modes} KL modes requested but the {0}x{0} basis grid has only {1}",
                        kl_grid.nx(),
                        kl_grid.num_cells()
                    )));
                }
                let full = cache.load_or_build(covariance, kl_grid)?;
                let basis = if full.count() == *modes { full } else { Arc::new(full.truncated(*modes)?) };
                fields.push(FieldModel { mean: covariance.mean, basis });
            }
        }
        Ok(ForwardModel {
            grid,
            source,
            config: measurement.clone(),
            measurement: MeasurementOperator::new(grid, measurement)?,
            prior: prior.clone(),
            fields,
            kl_grid,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn num_observations(&self) -> usize {
        self.measurement.len()
    }

    /// Facies-wise permeability `sum_i kappa_i chi_{D_i}` on the cells.
    pub fn permeability(&self, u: &ParameterVector) -> Result<CellField> {
        if !in_support(u, &self.prior) {
            return Err(Error::domain("parameter vector outside the prior support"));
        }
        let geom: &Geometry = &u.geometry;
        let labels: Vec<usize> = self.grid.cell_centers().map(|(_, x, y)| geom.facies_at(x, y) - 1).collect();
        let values = match &u.perm {
            Permeability::Constant(k) => labels.iter().map(|&f| k[f]).collect(),
            Permeability::Fields(xi) => {
                let weights = self
                    .fields
                    .iter()
                    .zip(xi)
                    .map(|(m, x)| m.basis.weights(x))
                    .collect::<Result<Vec<_>>>()?;
                if self.kl_grid == self.grid {
                    labels
                        .iter()
                        .enumerate()
                        .map(|(c, &f)| (self.fields[f].mean + self.fields[f].basis.value_at(c, &weights[f])).exp())
                        .collect()
                } else {
                    let logs: Vec<CellField> = self
                        .fields
                        .iter()
                        .zip(&weights)
                        .map(|(m, w)| {
                            let coarse = (0..self.kl_grid.num_cells()).map(|c| m.mean + m.basis.value_at(c, w)).collect();
                            Ok(resample(&CellField::new(self.kl_grid, coarse)?, self.grid))
                        })
                        .collect::<Result<_>>()?;
                    labels.iter().enumerate().map(|(c, &f)| logs[f].values()[c].exp()).collect()
                }
            }
        };
        CellField::new(self.grid, values)
    }

    pub fn pressure(&self, u: &ParameterVector) -> Result<NodeField> {
        solve_darcy(&self.permeability(u)?, &self.source, self.grid)
    }

    /// `G(u)`: the measurements of the pressure for parameters `u`.
    pub fn predict(&self, u: &ParameterVector) -> Result<Vec<f64>> {
        self.measurement.apply(&self.pressure(u)?)
    }

    /// `Phi(u; y)`.
    pub fn misfit(&self, u: &ParameterVector, data: &DataSet) -> Result<f64> {
        data.misfit(&self.predict(u)?)
    }
}

/// Noisy measurements of the truth computed on a grid strictly finer than
/// the one used for inversion.
pub fn make_synthetic(
    truth_model: &ForwardModel,
    u_true: &ParameterVector,
    inversion_grid: Grid,
    gamma: f64,
    seed: u64,
) -> Result<DataSet> {
    let fine = truth_model.grid();
    if fine.nx() <= inversion_grid.nx() {
        return Err(Error::config(format!(
            "synthetic data must come from a finer grid than the inversion ({0}x{0} vs {1}x{1})",
            fine.nx(),
            inversion_grid.nx()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::config(format!("noise level must be positive, got {gamma}")));
    }
    let clean = truth_model.predict(u_true)?;
    let noise = Normal::new(0.0, gamma).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = clean.iter().map(|g| g + noise.sample(&mut rng)).collect();
    Ok(DataSet {
        locations: truth_model.config.locations.clone(),
        sigma: truth_model.config.sigma,
        gamma,
        seed,
        fine_grid: fine,
        inversion_grid,
        values,
    })
}
