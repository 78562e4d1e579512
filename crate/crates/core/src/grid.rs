//! Uniform square grid on the unit square and the fields that live on it.
//!
//! Cells are indexed row-major from the bottom-left corner: cell `(i, j)`
//! covers `[i h, (i+1) h] x [j h, (j+1) h]` and has flat index `j * nx + i`.
//! Pressure lives on the nodes; only the `(nx-1)^2` interior nodes carry
//! unknowns because the boundary trace is identically zero.

use std::fmt::Display;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square `n x n` cell grid on `[0,1]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("grid needs at least 2 cells per side, got {n}")));
        }
        Ok(Grid { n })
    }

    pub fn nx(&self) -> usize {
        self.n
    }

    pub fn ny(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_cells(&self) -> usize {
        self.n * self.n
    }

    /// Number of interior nodes, i.e. unknowns of the pressure system.
    pub fn num_interior(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.h();
        ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
    }

    /// Iterator over `(flat index, x, y)` of all cell centers.
    pub fn cell_centers(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.n).flat_map(move |j| {
            (0..self.n).map(move |i| {
                let (x, y) = self.cell_center(i, j);
                (self.cell_index(i, j), x, y)
            })
        })
    }

    /// Flat index of interior node `(i, j)`, `1 <= i, j <= n-1`.
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= 1 && j >= 1 && i < self.n && j < self.n);
        (j - 1) * (self.n - 1) + (i - 1)
    }

    pub fn node_coord(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.h();
        (i as f64 * h, j as f64 * h)
    }

    /// Iterator over `(flat index, x, y)` of interior nodes.
    pub fn interior_nodes(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (1..self.n).flat_map(move |j| {
            (1..self.n).map(move |i| {
                let (x, y) = self.node_coord(i, j);
                (self.node_index(i, j), x, y)
            })
        })
    }
}

impl TryFrom<usize> for Grid {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        Grid::new(n)
    }
}

impl From<Grid> for usize {
    fn from(g: Grid) -> usize {
        g.n
    }
}

/// Per-cell real values (permeability, source, log-permeability).
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    grid: Grid,
    values: Vec<f64>,
}

impl CellField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::shape(format!(
                "cell field has {} values, grid {}x{} needs {}",
                values.len(),
                grid.nx(),
                grid.ny(),
                grid.num_cells()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite cell value at index {k}")));
        }
        Ok(CellField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        CellField { grid, values: vec![value; grid.num_cells()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid.cell_centers().map(|(_, x, y)| f(x, y)).collect();
        CellField { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.cell_index(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        CellField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Errors unless every entry is strictly positive.
    pub fn check_positive(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|&v| v <= 0.0 || v.is_nan()) {
            Some(k) => Err(Error::domain(format!(
                "{what} must be strictly positive, cell {k} has {}",
                self.values[k]
            ))),
            None => Ok(()),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, self.grid.nx(), self.grid.ny(), &self.values)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (nx, ny, values) = read_csv::<f64>(path)?;
        if nx != ny {
            return Err(Error::Schema(format!("{}: non-square field {nx}x{ny}", path.display())));
        }
        CellField::new(Grid::new(nx)?, values)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        write_binary(path, self.grid.nx(), self.grid.ny(), &self.values)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let (nx, ny, values) = read_binary(path)?;
        if nx != ny {
            return Err(Error::Schema(format!("{}: non-square field {nx}x{ny}", path.display())));
        }
        CellField::new(Grid::new(nx)?, values)
    }
}

/// Interior-node values of a pressure field; the boundary trace is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeField {
    grid: Grid,
    values: Vec<f64>,
}

impl NodeField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_interior() {
            return Err(Error::shape(format!(
                "node field has {} values, grid needs {} interior nodes",
                values.len(),
                grid.num_interior()
            )));
        }
        Ok(NodeField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        NodeField { grid, values: vec![0.0; grid.num_interior()] }
    }

    /// Samples `f` at interior nodes. Values of `f` on the boundary are ignored.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid.interior_nodes().map(|(_, x, y)| f(x, y)).collect();
        NodeField { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at node `(i, j)`, `0 <= i, j <= n`; zero on the boundary.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        let n = self.grid.nx();
        if i == 0 || j == 0 || i >= n || j >= n {
            0.0
        } else {
            self.values[self.grid.node_index(i, j)]
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        NodeField { grid: self.grid, values: self.values.iter().map(|v| alpha * v).collect() }
    }

    pub fn sub(&self, other: &NodeField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::shape("node fields live on different grids"));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(NodeField { grid: self.grid, values })
    }

    /// Discrete L2 norm `sqrt(sum h^2 p^2)` over interior nodes.
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.h();
        h * self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let m = self.grid.nx() - 1;
        write_csv(path, m, m, &self.values)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (nx, ny, values) = read_csv::<f64>(path)?;
        if nx != ny {
            return Err(Error::Schema(format!("{}: non-square field {nx}x{ny}", path.display())));
        }
        NodeField::new(Grid::new(nx + 1)?, values)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let m = self.grid.nx() - 1;
        write_binary(path, m, m, &self.values)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let (nx, ny, values) = read_binary(path)?;
        if nx != ny {
            return Err(Error::Schema(format!("{}: non-square field {nx}x{ny}", path.display())));
        }
        NodeField::new(Grid::new(nx + 1)?, values)
    }
}

/// Writes a row-major 2-D array as CSV: a header line `nx,ny`, then `ny`
/// rows of `nx` comma-separated values, bottom row first.
pub fn write_csv<T: Display>(path: &Path, nx: usize, ny: usize, values: &[T]) -> Result<()> {
    if values.len() != nx * ny {
        return Err(Error::shape(format!("{} values for a {nx}x{ny} array", values.len())));
    }
    let mut out = String::with_capacity(values.len() * 12);
    out.push_str(&format!("{nx},{ny}\n"));
    for row in values.chunks(nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_csv<T: FromStr>(path: &Path) -> Result<(usize, usize, Vec<T>)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |msg: &str| Error::Schema(format!("{}: {msg}", path.display()));
    let header = lines.next().ok_or_else(|| bad("empty file"))??;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("header must be `nx,ny`"))?;
    let [nx, ny] = dims[..] else {
        return Err(bad("header must be `nx,ny`"));
    };
    let mut values = Vec::with_capacity(nx * ny);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split(',') {
            values.push(tok.trim().parse::<T>().map_err(|_| bad("unparsable value"))?);
        }
    }
    if values.len() != nx * ny {
        return Err(bad(&format!("expected {} values, found {}", nx * ny, values.len())));
    }
    Ok((nx, ny, values))
}

/// Flat binary layout: `nx` and `ny` as little-endian u64, then the values
/// as little-endian f64 in row-major order.
pub fn write_binary(path: &Path, nx: usize, ny: usize, values: &[f64]) -> Result<()> {
    if values.len() != nx * ny {
        return Err(Error::shape(format!("{} values for a {nx}x{ny} array", values.len())));
    }
    let mut buf = Vec::with_capacity(16 + 8 * values.len());
    buf.extend_from_slice(&(nx as u64).to_le_bytes());
    buf.extend_from_slice(&(ny as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut f = std::fs::File::open(path)
        .map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    if buf.len() < 16 {
        return Err(Error::Schema(format!("{}: truncated header", path.display())));
    }
    let nx = u64::from_le_bytes(buf[0..8].try_into().unwrap()) as usize;
    let ny = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let body = &buf[16..];
    if body.len() != 8 * nx * ny {
        return Err(Error::Schema(format!(
            "{}: expected {} bytes of data for {nx}x{ny}, found {}",
            path.display(),
            8 * nx * ny,
            body.len()
        )));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((nx, ny, values))
}
