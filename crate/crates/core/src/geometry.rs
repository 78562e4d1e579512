//! Geometric parameterizations of the facies decomposition of the unit square.
//!
//! Two families are supported: stacked layers with straight interfaces cut
//! by a vertical fault at `x = 1/2`, and a sinusoidal channel of constant
//! vertical width. Facies are numbered from 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Grid};

/// Horizontal position of the fault.
pub const FAULT_X: f64 = 0.5;

/// Layer thicknesses on the right (`a`) and left (`b`) edges plus the fault slip `c`.
///
/// With `n` layers, `a` and `b` hold the `n-1` lower thicknesses; the top
/// layer takes whatever is left. Both lie in the simplex
/// `{x : x_i >= 0, sum x_i <= 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerFaultParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

pub fn in_simplex(x: &[f64]) -> bool {
    x.iter().all(|&v| v >= 0.0 && v.is_finite()) && x.iter().sum::<f64>() <= 1.0
}

impl LayerFaultParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: f64) -> Result<Self> {
        let p = LayerFaultParams { a, b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn layers(&self) -> usize {
        self.a.len() + 1
    }

    /// Checks the simplex constraints and shape; the slip bound is a prior
    /// setting and is checked by [`LayerFaultParams::check_slip`].
    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.len() != self.b.len() {
            return Err(Error::domain(format!(
                "layer thickness vectors must be non-empty and equally long ({} vs {})",
                self.a.len(),
                self.b.len()
            )));
        }
        if !in_simplex(&self.a) || !in_simplex(&self.b) {
            return Err(Error::domain(format!(
                "layer thicknesses outside the simplex: a={:?} b={:?}",
                self.a, self.b
            )));
        }
        if !self.c.is_finite() {
            return Err(Error::domain("non-finite slip"));
        }
        Ok(())
    }

    pub fn check_slip(&self, slip_max: f64) -> Result<()> {
        if self.c.abs() <= slip_max {
            Ok(())
        } else {
            Err(Error::domain(format!("slip {} outside [-{slip_max}, {slip_max}]", self.c)))
        }
    }

    /// Height of interface `i` (1-based, `i < n`) at abscissa `x`.
    pub fn interface_height(&self, i: usize, x: f64) -> f64 {
        let right: f64 = self.a[..i].iter().sum();
        let left: f64 = self.b[..i].iter().sum();
        let h = left + (right - left) * x;
        if x < FAULT_X {
            h - self.c
        } else {
            h
        }
    }

    fn classify_unchecked(&self, x: f64, y: f64) -> usize {
        let (mut right, mut left) = (0.0, 0.0);
        let shift = if x < FAULT_X { self.c } else { 0.0 };
        for i in 0..self.a.len() {
            right += self.a[i];
            left += self.b[i];
            if y <= left + (right - left) * x - shift {
                return i + 1;
            }
        }
        self.layers()
    }
}

/// Channel with lower boundary `y = d1 sin(d2 x) + tan(d3) x + d4` and vertical width `d5`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub d: [f64; 5],
}

impl ChannelParams {
    pub fn new(amplitude: f64, frequency: f64, angle: f64, intercept: f64, width: f64) -> Result<Self> {
        let p = ChannelParams { d: [amplitude, frequency, angle, intercept, width] };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite channel parameter"));
        }
        if self.d[4] <= 0.0 {
            return Err(Error::domain(format!("channel width must be positive, got {}", self.d[4])));
        }
        Ok(())
    }

    pub fn lower_boundary(&self, x: f64) -> f64 {
        let [amp, freq, angle, intercept, _] = self.d;
        amp * (freq * x).sin() + angle.tan() * x + intercept
    }

    fn classify_unchecked(&self, x: f64, y: f64) -> usize {
        let low = self.lower_boundary(x);
        if low <= y && y <= low + self.d[4] {
            1
        } else {
            2
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Layers(LayerFaultParams),
    Channel(ChannelParams),
}

impl Geometry {
    pub fn num_facies(&self) -> usize {
        match self {
            Geometry::Layers(p) => p.layers(),
            Geometry::Channel(_) => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Geometry::Layers(p) => p.validate(),
            Geometry::Channel(p) => p.validate(),
        }
    }

    /// Facies of point `(x, y)`; assumes the parameters were validated.
    pub fn facies_at(&self, x: f64, y: f64) -> usize {
        match self {
            Geometry::Layers(p) => p.classify_unchecked(x, y),
            Geometry::Channel(p) => p.classify_unchecked(x, y),
        }
    }
}

/// Facies of `(x, y)` in the faulted layer model: the smallest `i` whose
/// interface lies on or above `y`, otherwise the top layer `n`.
pub fn classify_layer(x: f64, y: f64, params: &LayerFaultParams) -> Result<usize> {
    params.validate()?;
    Ok(params.classify_unchecked(x, y))
}

/// 1 inside the channel (boundaries included), 2 outside.
pub fn classify_channel(x: f64, y: f64, params: &ChannelParams) -> Result<usize> {
    params.validate()?;
    Ok(params.classify_unchecked(x, y))
}

/// Facies label of every cell, 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellLabels {
    grid: Grid,
    num_facies: usize,
    labels: Vec<u32>,
}

impl CellLabels {
    pub fn new(grid: Grid, num_facies: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != grid.num_cells() {
            return Err(Error::shape(format!(
                "{} labels for {} cells",
                labels.len(),
                grid.num_cells()
            )));
        }
        if labels.iter().any(|&l| l == 0 || l as usize > num_facies) {
            return Err(Error::domain(format!("labels must lie in 1..={num_facies}")));
        }
        Ok(CellLabels { grid, num_facies, labels })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn num_facies(&self) -> usize {
        self.num_facies
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Zero-based facies of flat cell `k`.
    pub fn facies(&self, k: usize) -> usize {
        self.labels[k] as usize - 1
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        grid::write_csv(path, self.grid.nx(), self.grid.ny(), &self.labels)
    }

    pub fn read_csv(path: &Path, num_facies: usize) -> Result<Self> {
        let (nx, ny, labels) = grid::read_csv::<u32>(path)?;
        if nx != ny {
            return Err(Error::Schema(format!("{}: non-square labels", path.display())));
        }
        CellLabels::new(Grid::new(nx)?, num_facies, labels)
    }
}

/// Labels each cell by the facies of its center.
pub fn rasterize(geometry: &Geometry, grid: Grid) -> Result<CellLabels> {
    geometry.validate()?;
    let labels = grid.cell_centers().map(|(_, x, y)| geometry.facies_at(x, y) as u32).collect();
    Ok(CellLabels { grid, num_facies: geometry.num_facies(), labels })
}

/// Areas `|D_i^a ∩ D_j^b|`: entry `[i][j]` is `h^2` times the number of
/// cells labelled `i+1` in `a` and `j+1` in `b`.
pub fn overlap_measure(a: &CellLabels, b: &CellLabels, grid: Grid) -> Result<Vec<Vec<f64>>> {
    if a.grid != grid || b.grid != grid {
        return Err(Error::shape("label sets must share the grid"));
    }
    let n = a.num_facies.max(b.num_facies);
    let cell = grid.h() * grid.h();
    let mut m = vec![vec![0.0; n]; n];
    for (&la, &lb) in a.labels.iter().zip(&b.labels) {
        m[la as usize - 1][lb as usize - 1] += cell;
    }
    Ok(m)
}

/// Total off-diagonal mass of an overlap matrix.
pub fn off_diagonal_mass(m: &[Vec<f64>]) -> f64 {
    m.iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table1_truth() -> LayerFaultParams {
        LayerFaultParams::new(vec![0.39, 0.35], vec![0.18, 0.6], 0.15).unwrap()
    }

    #[test]
    fn symmetric_layers_bottom_point() {
        let p = LayerFaultParams::new(vec![1.0 / 3.0; 2], vec![1.0 / 3.0; 2], 0.0).unwrap();
        assert_eq!(classify_layer(0.5, 0.1, &p).unwrap(), 1);
        assert_eq!(classify_layer(0.5, 0.5, &p).unwrap(), 2);
        assert_eq!(classify_layer(0.5, 0.9, &p).unwrap(), 3);
    }

    #[test]
    fn faulted_truth_point() {
        // interface 1 at x = 0.25: 0.18 + (0.39 - 0.18) * 0.25 - 0.15 = 0.0825
        let p = table1_truth();
        assert!((p.interface_height(1, 0.25) - 0.0825).abs() < 1e-15);
        assert_eq!(classify_layer(0.25, 0.05, &p).unwrap(), 1);
        assert_eq!(classify_layer(0.25, 0.09, &p).unwrap(), 2);
        // right of the fault the same height is layer 1 (interface at 0.18 + 0.21 * 0.75 = 0.3375)
        assert_eq!(classify_layer(0.75, 0.09, &p).unwrap(), 1);
    }

    #[test]
    fn slip_bounds_are_closed() {
        let star = 0.25;
        assert!(LayerFaultParams::new(vec![0.3], vec![0.3], star).unwrap().check_slip(star).is_ok());
        assert!(LayerFaultParams::new(vec![0.3], vec![0.3], -star).unwrap().check_slip(star).is_ok());
        assert!(LayerFaultParams::new(vec![0.3], vec![0.3], star + 1e-9)
            .unwrap()
            .check_slip(star)
            .is_err());
    }

    #[test]
    fn inadmissible_layers_rejected() {
        assert!(LayerFaultParams::new(vec![0.6, 0.6], vec![0.1, 0.1], 0.0).is_err());
        assert!(LayerFaultParams::new(vec![-0.1], vec![0.1], 0.0).is_err());
        assert!(LayerFaultParams::new(vec![0.1], vec![0.1, 0.2], 0.0).is_err());
        let bad = LayerFaultParams { a: vec![0.7, 0.7], b: vec![0.1, 0.1], c: 0.0 };
        assert!(matches!(classify_layer(0.1, 0.1, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn horizontal_channel_band() {
        let p = ChannelParams::new(0.0, 5.0, 0.0, 0.4, 0.3).unwrap();
        assert_eq!(classify_channel(0.5, 0.5, &p).unwrap(), 1);
        assert_eq!(classify_channel(0.5, 0.75, &p).unwrap(), 2);
        assert_eq!(classify_channel(0.5, 0.4, &p).unwrap(), 1);
    }

    #[test]
    fn channel_truth_points() {
        let p = ChannelParams::new(0.2, 11.0, 0.39, 0.4, 0.3).unwrap();
        assert_eq!(p.lower_boundary(0.0), 0.4);
        assert_eq!(classify_channel(0.0, 0.39, &p).unwrap(), 2);
        assert_eq!(classify_channel(0.0, 0.55, &p).unwrap(), 1);
        assert!(ChannelParams::new(0.2, 11.0, 0.39, 0.4, 0.0).is_err());
    }

    #[test]
    fn axis_aligned_layers_rasterize_by_rows() {
        let geo = Geometry::Layers(LayerFaultParams::new(vec![1.0 / 3.0; 2], vec![1.0 / 3.0; 2], 0.0).unwrap());
        let grid = Grid::new(6).unwrap();
        let labels = rasterize(&geo, grid).unwrap();
        for j in 0..6 {
            for i in 0..6 {
                assert_eq!(labels.labels()[grid.cell_index(i, j)], (j / 2 + 1) as u32);
            }
        }
        assert_eq!(rasterize(&geo, grid).unwrap(), labels);
    }

    #[test]
    fn unfaulted_model_is_the_pure_layer_model() {
        // with c = 0 the left/right halves join without offset
        let p = LayerFaultParams::new(vec![0.3, 0.4], vec![0.5, 0.2], 0.0).unwrap();
        for &(x, y) in &[(0.1, 0.45), (0.49, 0.39), (0.51, 0.39), (0.9, 0.8)] {
            let expected = if y <= 0.5 + (0.3 - 0.5) * x {
                1
            } else if y <= 0.7 + (0.7 - 0.7) * x {
                2
            } else {
                3
            };
            assert_eq!(classify_layer(x, y, &p).unwrap(), expected);
        }
    }

    #[test]
    fn overlap_of_identical_partitions_is_diagonal() {
        let grid = Grid::new(20).unwrap();
        let labels = rasterize(&Geometry::Layers(table1_truth()), grid).unwrap();
        let m = overlap_measure(&labels, &labels, grid).unwrap();
        assert_eq!(off_diagonal_mass(&m), 0.0);
        let total: f64 = m.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_rows_are_facies_areas() {
        let grid = Grid::new(30).unwrap();
        let a = rasterize(&Geometry::Layers(table1_truth()), grid).unwrap();
        let b = rasterize(
            &Geometry::Layers(LayerFaultParams::new(vec![0.3, 0.3], vec![0.3, 0.3], -0.1).unwrap()),
            grid,
        )
        .unwrap();
        let m = overlap_measure(&a, &b, grid).unwrap();
        let cell = grid.h() * grid.h();
        for i in 0..3 {
            let area = a.labels().iter().filter(|&&l| l as usize == i + 1).count() as f64 * cell;
            assert!((m[i].iter().sum::<f64>() - area).abs() < 1e-12);
        }
        let other = Grid::new(10).unwrap();
        assert!(overlap_measure(&a, &b, other).is_err());
    }

    fn perturb_layers(base: &LayerFaultParams, dir: &[f64], eps: f64) -> Option<LayerFaultParams> {
        let k = base.a.len();
        let a = (0..k).map(|i| base.a[i] + eps * dir[i]).collect();
        let b = (0..k).map(|i| base.b[i] + eps * dir[k + i]).collect();
        let p = LayerFaultParams::new(a, b, base.c + eps * dir[2 * k]).ok()?;
        p.check_slip(0.25).ok()?;
        Some(p)
    }

    #[test]
    fn overlap_mass_shrinks_with_perturbation() {
        let grid = Grid::new(50).unwrap();
        let h = grid.h();
        let base = table1_truth();
        let base_labels = rasterize(&Geometry::Layers(base.clone()), grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut directions = 0;
        while directions < 20 {
            let mut dir: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.iter_mut().for_each(|v| *v /= norm);
            let masses: Option<Vec<f64>> = [0.1, 0.05, 0.025]
                .iter()
                .map(|&eps| {
                    let p = perturb_layers(&base, &dir, eps)?;
                    let labels = rasterize(&Geometry::Layers(p), grid).ok()?;
                    Some(off_diagonal_mass(&overlap_measure(&base_labels, &labels, grid).unwrap()))
                })
                .collect();
            let Some(masses) = masses else { continue };
            directions += 1;
            // one cell row of slack per interface
            let slack = 2.0 * h;
            assert!(masses[1] <= masses[0] + slack && masses[2] <= masses[1] + slack, "{masses:?}");
            assert!(masses[2] <= masses[0], "{masses:?}");
            let zero = rasterize(&Geometry::Layers(perturb_layers(&base, &dir, 0.0).unwrap()), grid).unwrap();
            assert_eq!(off_diagonal_mass(&overlap_measure(&base_labels, &zero, grid).unwrap()), 0.0);
        }
    }

    #[test]
    fn channel_overlap_shrinks_with_perturbation() {
        let grid = Grid::new(50).unwrap();
        let base = ChannelParams::new(0.2, 11.0, 0.39, 0.4, 0.3).unwrap();
        let base_labels = rasterize(&Geometry::Channel(base.clone()), grid).unwrap();
        let scales = [0.1, 5.0, 0.2, 0.1, 0.1];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let dir: Vec<f64> = (0..5).map(|i| scales[i] * rng.gen_range(-1.0..1.0)).collect();
            let masses: Vec<f64> = [0.1, 0.05, 0.025]
                .iter()
                .map(|&eps| {
                    let mut d = base.d;
                    for i in 0..5 {
                        d[i] += eps * dir[i];
                    }
                    let labels = rasterize(&Geometry::Channel(ChannelParams { d }), grid).unwrap();
                    off_diagonal_mass(&overlap_measure(&base_labels, &labels, grid).unwrap())
                })
                .collect();
            let slack = 2.0 * grid.h();
            assert!(masses[1] <= masses[0] + slack && masses[2] <= masses[1] + slack, "{masses:?}");
        }
    }

    #[test]
    fn labels_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(8).unwrap();
        let labels = rasterize(&Geometry::Layers(table1_truth()), grid).unwrap();
        let path = dir.path().join("labels.csv");
        labels.write_csv(&path).unwrap();
        assert_eq!(CellLabels::read_csv(&path, 3).unwrap(), labels);
    }

    fn simplex_point(u: (f64, f64)) -> Vec<f64> {
        let (lo, hi) = if u.0 < u.1 { (u.0, u.1) } else { (u.1, u.0) };
        vec![lo, hi - lo]
    }

    proptest! {
        #[test]
        fn rasterized_labels_partition_the_grid(
            ua in (0.0..1.0f64, 0.0..1.0f64),
            ub in (0.0..1.0f64, 0.0..1.0f64),
            c in -0.25..0.25f64,
            n in 3usize..30,
        ) {
            let p = LayerFaultParams::new(simplex_point(ua), simplex_point(ub), c).unwrap();
            let grid = Grid::new(n).unwrap();
            let labels = rasterize(&Geometry::Layers(p), grid).unwrap();
            prop_assert_eq!(labels.labels().len(), grid.num_cells());
            prop_assert!(labels.labels().iter().all(|&l| (1..=3).contains(&l)));
            let m = overlap_measure(&labels, &labels, grid).unwrap();
            prop_assert!((m.iter().flatten().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn channel_labels_are_binary(
            d in (0.0..0.4f64, 1.0..20.0f64, -0.8..0.8f64, 0.0..1.0f64, 0.01..0.6f64),
        ) {
            let p = ChannelParams::new(d.0, d.1, d.2, d.3, d.4).unwrap();
            let labels = rasterize(&Geometry::Channel(p), Grid::new(16).unwrap()).unwrap();
            prop_assert!(labels.labels().iter().all(|&l| l == 1 || l == 2));
        }
    }
}
