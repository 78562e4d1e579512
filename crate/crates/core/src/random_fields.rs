//! Gaussian random fields for facies log-permeability via Karhunen–Loève expansions.
//!
//! A covariance operator is discretized on cell centers, and its eigenpairs
//! are computed with respect to the discrete `L2` inner product
//! `<u, v> = h^2 sum u_k v_k`. With that normalization the eigenvalues
//! approximate those of the continuous operator, so coefficient `xi_j`
//! refers to the same mode on every grid.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{CellField, Grid};

/// Largest number of cells for which a dense covariance is formed.
pub const MAX_KL_CELLS: usize = 64 * 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Exponential,
    Spherical,
}

impl Kernel {
    /// Correlation at scaled distance `r`.
    pub fn correlation(&self, r: f64) -> f64 {
        match self {
            Kernel::Exponential => (-r).exp(),
            Kernel::Spherical => {
                if r <= 1.0 {
                    1.0 - 1.5 * r + 0.5 * r * r * r
                } else {
                    0.0
                }
            }
        }
    }
}

/// Stationary anisotropic covariance of one facies' log-permeability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub kernel: Kernel,
    pub variance: f64,
    /// Correlation lengths along the major and minor axes.
    pub correlation_lengths: [f64; 2],
    /// Direction of the major axis, radians from the x axis.
    pub angle: f64,
    pub mean: f64,
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0) || self.correlation_lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::config("covariance needs positive variance and correlation lengths"));
        }
        if !self.angle.is_finite() || !self.mean.is_finite() {
            return Err(Error::config("covariance angle and mean must be finite"));
        }
        Ok(())
    }

    /// Scaled separation: rotate into the principal axes, divide by the lengths.
    pub fn scaled_distance(&self, dx: f64, dy: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let along = c * dx + s * dy;
        let across = -s * dx + c * dy;
        let [major, minor] = self.correlation_lengths;
        ((along / major).powi(2) + (across / minor).powi(2)).sqrt()
    }

    pub fn covariance(&self, dx: f64, dy: f64) -> f64 {
        self.variance * self.kernel.correlation(self.scaled_distance(dx, dy))
    }
}

/// Dense covariance between cell centers of a grid.
pub struct CovarianceMatrix {
    grid: Grid,
    mat: Mat<f64>,
}

impl CovarianceMatrix {
    /// Wraps an explicit symmetric matrix indexed by flat cell index.
    pub fn from_fn(grid: Grid, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        check_size(grid)?;
        let n = grid.num_cells();
        Ok(CovarianceMatrix { grid, mat: Mat::from_fn(n, n, f) })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.mat[(p, q)]
    }
}

fn check_size(grid: Grid) -> Result<()> {
    if grid.num_cells() > MAX_KL_CELLS {
        return Err(Error::Capability(format!(
            "dense covariance on a {}x{} grid exceeds the {} cell limit; use a grid of at most 64x64",
            grid.nx(),
            grid.ny(),
            MAX_KL_CELLS
        )));
    }
    Ok(())
}

pub fn build_covariance(spec: &CovarianceSpec, grid: Grid) -> Result<CovarianceMatrix> {
    spec.validate()?;
    check_size(grid)?;
    let centers: Vec<(f64, f64)> = grid.cell_centers().map(|(_, x, y)| (x, y)).collect();
    CovarianceMatrix::from_fn(grid, |p, q| {
        spec.covariance(centers[p].0 - centers[q].0, centers[p].1 - centers[q].1)
    })
}

/// Leading eigenpairs of a covariance operator on a grid.
#[derive(Clone, Debug)]
pub struct KLBasis {
    grid: Grid,
    eigenvalues: Vec<f64>,
    /// Cell-major: `vectors[cell * count + j]` is `v_j(cell)`, normalized so
    /// that `h^2 sum_cell v_j^2 = 1`.
    vectors: Vec<f64>,
}

impl KLBasis {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        let n = self.count();
        (0..self.grid.num_cells()).map(|c| self.vectors[c * n + j]).collect()
    }

    /// Keeps the first `count` modes.
    pub fn truncated(&self, count: usize) -> Result<KLBasis> {
        let n = self.count();
        if count == 0 || count > n {
            return Err(Error::config(format!("cannot keep {count} of {n} KL modes")));
        }
        let vectors = self
            .vectors
            .chunks(n)
            .flat_map(|row| row[..count].iter().copied())
            .collect();
        Ok(KLBasis { grid: self.grid, eigenvalues: self.eigenvalues[..count].to_vec(), vectors })
    }

    /// `sqrt(lambda_j) xi_j`, the per-mode weights used by [`KLBasis::value_at`].
    pub fn weights(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() > self.count() {
            return Err(Error::shape(format!(
                "{} coefficients for a basis of {} modes",
                xi.len(),
                self.count()
            )));
        }
        Ok(xi.iter().zip(&self.eigenvalues).map(|(x, l)| l.sqrt() * x).collect())
    }

    /// Zero-mean field value at one cell for precomputed mode weights.
    pub fn value_at(&self, cell: usize, weights: &[f64]) -> f64 {
        let n = self.count();
        let row = &self.vectors[cell * n..cell * n + weights.len()];
        dot(row, weights)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + 8 * (self.count() + self.vectors.len()));
        buf.extend_from_slice(KL_MAGIC);
        buf.extend_from_slice(&(self.grid.nx() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.count() as u64).to_le_bytes());
        for v in self.eigenvalues.iter().chain(&self.vectors) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<KLBasis> {
        let buf = std::fs::read(path).map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
        let bad = || Error::Schema(format!("{}: not a KL basis file", path.display()));
        if buf.len() < 24 || &buf[..8] != KL_MAGIC {
            return Err(bad());
        }
        let n = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(buf[16..24].try_into().unwrap()) as usize;
        let grid = Grid::new(n)?;
        let expected = 24 + 8 * (count + count * grid.num_cells());
        if buf.len() != expected {
            return Err(bad());
        }
        let mut vals = buf[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let eigenvalues = vals.by_ref().take(count).collect();
        let vectors = vals.collect();
        Ok(KLBasis { grid, eigenvalues, vectors })
    }
}

const KL_MAGIC: &[u8; 8] = b"GEOKL001";

/// Top `count` eigenpairs, eigenvalues descending, round-off negatives clamped to zero.
pub fn kl_decompose(cov: &CovarianceMatrix, count: usize) -> Result<KLBasis> {
    let dim = cov.dim();
    if count == 0 || count > dim {
        return Err(Error::config(format!("cannot extract {count} modes from a {dim}-dim covariance")));
    }
    let h = cov.grid.h();
    let area = h * h;
    let scaled = Mat::from_fn(dim, dim, |p, q| cov.mat[(p, q)] * area);
    let evd = scaled.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numerical {
        message: format!("symmetric eigendecomposition failed: {e:?}"),
        iterations: 0,
    })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns eigenvalues in ascending order
    let order: Vec<usize> = (0..dim).rev().take(count).collect();
    let eigenvalues = order.iter().map(|&k| s[k].max(0.0)).collect();
    let mut vectors = vec![0.0; dim * count];
    for (j, &k) in order.iter().enumerate() {
        // fix the sign so that the largest-magnitude entry is positive
        let col = u.col(k);
        let mut peak = 0.0f64;
        for c in 0..dim {
            if col[c].abs() > peak.abs() {
                peak = col[c];
            }
        }
        let sign = if peak < 0.0 { -1.0 } else { 1.0 };
        for c in 0..dim {
            vectors[c * count + j] = sign * col[c] / h;
        }
    }
    Ok(KLBasis { grid: cov.grid, eigenvalues, vectors })
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `m + sum_j sqrt(lambda_j) v_j xi_j` on every cell.
pub fn synthesize(basis: &KLBasis, mean: f64, coeffs: &[f64]) -> Result<CellField> {
    let w = basis.weights(coeffs)?;
    let values = (0..basis.grid.num_cells()).map(|c| mean + basis.value_at(c, &w)).collect();
    CellField::new(basis.grid, values)
}

/// Bilinear interpolation of a cell field onto the cell centers of another grid,
/// clamping to the outermost centers.
pub fn resample(field: &CellField, target: Grid) -> CellField {
    let src = field.grid();
    let n = src.nx();
    let coord = |t: f64| {
        let s = (t * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = (s.floor() as usize).min(n - 2);
        (i0, s - i0 as f64)
    };
    CellField::from_fn(target, |x, y| {
        let (i, fx) = coord(x);
        let (j, fy) = coord(y);
        let v00 = field.at(i, j);
        let v10 = field.at(i + 1, j);
        let v01 = field.at(i, j + 1);
        let v11 = field.at(i + 1, j + 1);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    })
}

/// On-disk cache of full-rank KL bases keyed by covariance shape and grid.
#[derive(Clone, Debug)]
pub struct KlCache {
    dir: Option<PathBuf>,
}

impl KlCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        KlCache { dir: Some(dir.into()) }
    }

    /// A cache that always recomputes.
    pub fn disabled() -> Self {
        KlCache { dir: None }
    }

    /// Cache key; the field mean does not affect the decomposition and is left out.
    pub fn key(spec: &CovarianceSpec, grid: Grid) -> String {
        let ident = serde_json::json!({
            "format": std::str::from_utf8(KL_MAGIC).unwrap(),
            "kernel": spec.kernel,
            "variance": spec.variance,
            "lengths": spec.correlation_lengths,
            "angle": spec.angle,
            "grid": grid.nx(),
        });
        let digest = Sha256::digest(ident.to_string().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Full-rank basis for `spec` on `grid`, from disk when available.
    pub fn load_or_build(&self, spec: &CovarianceSpec, grid: Grid) -> Result<Arc<KLBasis>> {
        let path = self.dir.as_ref().map(|d| d.join(format!("kl-{}.bin", Self::key(spec, grid))));
        if let Some(p) = &path {
            if p.exists() {
                if let Ok(b) = KLBasis::read(p) {
                    if b.grid == grid {
                        return Ok(Arc::new(b));
                    }
                }
            }
        }
        let cov = build_covariance(spec, grid)?;
        let basis = kl_decompose(&cov, cov.dim())?;
        if let (Some(p), Some(dir)) = (&path, &self.dir) {
            std::fs::create_dir_all(dir)?;
            // write then rename so concurrent readers never see a partial file
            let tmp = p.with_extension(format!("tmp{}", std::process::id()));
            basis.write(&tmp)?;
            std::fs::rename(&tmp, p)?;
        }
        Ok(Arc::new(basis))
    }
}

/// Reconstruction defaults for the two facies fields: spherical along `pi/4`
/// and exponential along `3 pi/4`, variance 0.5, lengths (0.4, 0.1).
pub fn default_facies_covariances(means: [f64; 2]) -> [CovarianceSpec; 2] {
    [
        CovarianceSpec {
            kernel: Kernel::Spherical,
            variance: 0.5,
            correlation_lengths: [0.4, 0.1],
            angle: PI / 4.0,
            mean: means[0],
        },
        CovarianceSpec {
            kernel: Kernel::Exponential,
            variance: 0.5,
            correlation_lengths: [0.4, 0.1],
            angle: 3.0 * PI / 4.0,
            mean: means[1],
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iso(kernel: Kernel, len: f64) -> CovarianceSpec {
        CovarianceSpec { kernel, variance: 0.7, correlation_lengths: [len, len], angle: 0.3, mean: 1.0 }
    }

    #[test]
    fn diagonal_is_the_variance() {
        let grid = Grid::new(8).unwrap();
        for spec in default_facies_covariances([0.0, 1.0]) {
            let cov = build_covariance(&spec, grid).unwrap();
            assert!((0..cov.dim()).all(|p| cov.get(p, p) == spec.variance));
        }
    }

    #[test]
    fn exponential_kernel_decays_with_distance() {
        let grid = Grid::new(10).unwrap();
        let spec = iso(Kernel::Exponential, 0.3);
        let cov = build_covariance(&spec, grid).unwrap();
        let (p, q) = (grid.cell_index(1, 2), grid.cell_index(6, 5));
        let d = (0.5f64.powi(2) + 0.3f64.powi(2)).sqrt();
        assert!((cov.get(p, q) - 0.7 * (-d / 0.3).exp()).abs() < 1e-14);
        assert_eq!(cov.get(p, q), cov.get(q, p));
    }

    #[test]
    fn spherical_kernel_has_compact_support() {
        let grid = Grid::new(10).unwrap();
        let spec = iso(Kernel::Spherical, 0.25);
        let cov = build_covariance(&spec, grid).unwrap();
        let centers: Vec<(f64, f64)> = grid.cell_centers().map(|(_, x, y)| (x, y)).collect();
        for p in 0..cov.dim() {
            for q in 0..cov.dim() {
                let d = ((centers[p].0 - centers[q].0).powi(2) + (centers[p].1 - centers[q].1).powi(2)).sqrt();
                if d > 0.25 + 1e-12 {
                    assert_eq!(cov.get(p, q), 0.0);
                }
            }
        }
    }

    #[test]
    fn anisotropy_follows_the_major_axis() {
        let spec = default_facies_covariances([0.0, 0.0])[1].clone();
        // major axis along 3pi/4: moving along (-1, 1) decorrelates slower than along (1, 1)
        let along = spec.covariance(-0.1, 0.1);
        let across = spec.covariance(0.1, 0.1);
        assert!(along > across);
        assert!((spec.scaled_distance(-0.1, 0.1) - 0.02f64.sqrt() / 0.4).abs() < 1e-12);
    }

    #[test]
    fn oversized_grid_is_a_capability_error() {
        let spec = iso(Kernel::Exponential, 0.3);
        assert!(matches!(build_covariance(&spec, Grid::new(65).unwrap()), Err(Error::Capability(_))));
    }

    #[test]
    fn identity_operator_has_unit_spectrum() {
        let grid = Grid::new(6).unwrap();
        let h2 = grid.h() * grid.h();
        let cov = CovarianceMatrix::from_fn(grid, |p, q| if p == q { 1.0 / h2 } else { 0.0 }).unwrap();
        let basis = kl_decompose(&cov, cov.dim()).unwrap();
        assert!(basis.eigenvalues().iter().all(|l| (l - 1.0).abs() < 1e-12));
    }

    fn check_orthonormal(basis: &KLBasis) {
        let h2 = basis.grid().h().powi(2);
        let vs: Vec<Vec<f64>> = (0..basis.count()).map(|j| basis.eigenvector(j)).collect();
        for a in 0..vs.len() {
            for b in a..vs.len() {
                let ip: f64 = h2 * vs[a].iter().zip(&vs[b]).map(|(x, y)| x * y).sum::<f64>();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-8, "<v{a}, v{b}> = {ip}");
            }
        }
    }

    #[test]
    fn full_rank_basis_reconstructs_covariance() {
        let grid = Grid::new(12).unwrap();
        let spec = default_facies_covariances([0.0, 0.0])[0].clone();
        let cov = build_covariance(&spec, grid).unwrap();
        let basis = kl_decompose(&cov, cov.dim()).unwrap();
        assert!(basis.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        assert!(basis.eigenvalues().iter().all(|&l| l >= 0.0));
        check_orthonormal(&basis);
        let vs: Vec<Vec<f64>> = (0..basis.count()).map(|j| basis.eigenvector(j)).collect();
        let (mut err, mut norm) = (0.0, 0.0);
        for p in 0..cov.dim() {
            for q in 0..cov.dim() {
                let r: f64 = (0..basis.count()).map(|j| basis.eigenvalues()[j] * vs[j][p] * vs[j][q]).sum();
                err += (r - cov.get(p, q)).powi(2);
                norm += cov.get(p, q).powi(2);
            }
        }
        assert!((err / norm).sqrt() < 1e-8);
    }

    #[test]
    fn complete_basis_captures_the_whole_trace() {
        // sum of operator eigenvalues = variance * |D| = variance
        let grid = Grid::new(50).unwrap();
        let spec = default_facies_covariances([0.0, 0.0])[1].clone();
        let cov = build_covariance(&spec, grid).unwrap();
        let basis = kl_decompose(&cov, 50 * 50).unwrap();
        let total: f64 = basis.eigenvalues().iter().sum();
        assert!((total / spec.variance - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn synthesis_is_affine_in_coefficients() {
        let grid = Grid::new(8).unwrap();
        let spec = default_facies_covariances([0.5, 0.0])[0].clone();
        let basis = kl_decompose(&build_covariance(&spec, grid).unwrap(), 20).unwrap();
        let zero = synthesize(&basis, 0.5, &[0.0; 20]).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.5));
        let x: Vec<f64> = (0..20).map(|k| (k as f64).sin()).collect();
        let y: Vec<f64> = (0..20).map(|k| (k as f64 * 0.3).cos()).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - b).collect();
        let (fx, fy, fxy) = (
            synthesize(&basis, 0.5, &x).unwrap(),
            synthesize(&basis, 0.5, &y).unwrap(),
            synthesize(&basis, 0.5, &xy).unwrap(),
        );
        for c in 0..grid.num_cells() {
            let lin = 2.0 * (fx.values()[c] - 0.5) - (fy.values()[c] - 0.5);
            assert!((fxy.values()[c] - 0.5 - lin).abs() < 1e-12);
        }
        assert!(fx.map(f64::exp).values().iter().all(|&k| k > 0.0));
        assert!(synthesize(&basis, 0.0, &[0.0; 21]).is_err());
    }

    #[test]
    fn sampled_fields_have_the_target_covariance() {
        let grid = Grid::new(10).unwrap();
        let spec = default_facies_covariances([1.0, 0.0])[1].clone();
        let cov = build_covariance(&spec, grid).unwrap();
        let basis = kl_decompose(&cov, cov.dim()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000;
        let cells = [grid.cell_index(0, 0), grid.cell_index(4, 5), grid.cell_index(9, 2)];
        let pair = (grid.cell_index(4, 5), grid.cell_index(3, 6));
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        let mut cross = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let xi: Vec<f64> = (0..basis.count()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let f = synthesize(&basis, spec.mean, &xi).unwrap();
            for (k, &c) in cells.iter().enumerate() {
                let v = f.values()[c] - spec.mean;
                sum[k] += v;
                sq[k] += v * v;
            }
            let (a, b) = (f.values()[pair.0] - spec.mean, f.values()[pair.1] - spec.mean);
            cross.0 += a * b;
            cross.1 += a * a;
            cross.2 += b * b;
        }
        let n = draws as f64;
        for (k, &c) in cells.iter().enumerate() {
            let mean = sum[k] / n;
            assert!(mean.abs() < 3.0 * (spec.variance / n).sqrt());
            let var = sq[k] / n;
            let se = spec.variance * (2.0 / n).sqrt();
            assert!((var - cov.get(c, c)).abs() < 3.0 * se, "cell {c}: {var}");
        }
        let c_pq = cov.get(pair.0, pair.1);
        let se = ((spec.variance * spec.variance + c_pq * c_pq) / n).sqrt();
        assert!((cross.0 / n - c_pq).abs() < 3.0 * se);
    }

    #[test]
    fn cache_round_trip_and_reuse() {
        let dir = tempfile::tempdir().unwrap();
        let cache = KlCache::new(dir.path());
        let grid = Grid::new(9).unwrap();
        let spec = default_facies_covariances([0.0, 0.0])[0].clone();
        let a = cache.load_or_build(&spec, grid).unwrap();
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        let b = cache.load_or_build(&spec, grid).unwrap();
        assert_eq!(a.eigenvalues(), b.eigenvalues());
        assert_eq!(a.eigenvector(3), b.eigenvector(3));
        let mut other = spec.clone();
        other.mean = 4.0;
        assert_eq!(KlCache::key(&spec, grid), KlCache::key(&other, grid));
        other.angle = 0.0;
        assert_ne!(KlCache::key(&spec, grid), KlCache::key(&other, grid));
        let t = a.truncated(5).unwrap();
        assert_eq!(t.count(), 5);
        assert_eq!(t.eigenvector(4), a.eigenvector(4));
    }

    #[test]
    fn resampling_preserves_linear_fields() {
        let coarse = Grid::new(16).unwrap();
        let f = CellField::from_fn(coarse, |x, y| 2.0 * x - y + 0.3);
        let fine = resample(&f, Grid::new(40).unwrap());
        for (k, x, y) in fine.grid().cell_centers() {
            if x > 1.0 / 32.0 && x < 1.0 - 1.0 / 32.0 && y > 1.0 / 32.0 && y < 1.0 - 1.0 / 32.0 {
                assert!((fine.values()[k] - (2.0 * x - y + 0.3)).abs() < 1e-12);
            }
        }
    }
}
