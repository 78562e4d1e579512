//! Finite-difference solver for `-div(kappa grad p) = f` on the unit square
//! with `p = 0` on the boundary.
//!
//! Permeability is cell-centered and pressure node-centered. Each grid edge
//! between two nodes is flanked by two cells; its transmissibility is the
//! harmonic mean of their permeabilities. The resulting 5-point matrix is
//! symmetric positive definite, so grids up to [`DIRECT_SOLVER_MAX_CELLS`]
//! per side are solved by banded Cholesky and finer grids by conjugate
//! gradients preconditioned with zero-fill incomplete Cholesky.

use crate::error::{Error, Result};
use crate::grid::{CellField, Grid, NodeField};

/// Largest cells-per-side for which the banded direct solver is used.
pub const DIRECT_SOLVER_MAX_CELLS: usize = 64;

/// Relative residual tolerance of the iterative solver.
pub const CG_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearSolver {
    /// Banded direct factorization up to [`DIRECT_SOLVER_MAX_CELLS`], PCG above.
    Auto,
    BandedCholesky,
    PreconditionedCg,
}

/// Edge transmissibilities of the 5-point stencil.
///
/// `tx` holds horizontal edges `(i,j)-(i+1,j)` for interior rows
/// `j = 1..n-1` (`i = 0..n-1`); `ty` holds vertical edges `(i,j)-(i,j+1)`
/// for interior columns `i = 1..n-1` (`j = 0..n-1`). Edges lying on the
/// boundary never couple an unknown and are omitted.
#[derive(Clone, Debug)]
pub struct Transmissibility {
    n: usize,
    tx: Vec<f64>,
    ty: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl Transmissibility {
    pub fn from_kappa(kappa: &CellField) -> Result<Self> {
        kappa.check_positive("permeability")?;
        let grid = kappa.grid();
        let n = grid.nx();
        let mut tx = Vec::with_capacity(n * (n - 1));
        for j in 1..n {
            for i in 0..n {
                tx.push(harmonic(kappa.at(i, j - 1), kappa.at(i, j)));
            }
        }
        let mut ty = Vec::with_capacity(n * (n - 1));
        for j in 0..n {
            for i in 1..n {
                ty.push(harmonic(kappa.at(i - 1, j), kappa.at(i, j)));
            }
        }
        Ok(Transmissibility { n, tx, ty })
    }

    /// Horizontal edge starting at node `(i, j)`, `0 <= i < n`, `1 <= j < n`.
    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.tx[(j - 1) * self.n + i]
    }

    /// Vertical edge starting at node `(i, j)`, `1 <= i < n`, `0 <= j < n`.
    pub fn y(&self, i: usize, j: usize) -> f64 {
        self.ty[j * (self.n - 1) + (i - 1)]
    }
}

/// Visits every edge that touches at least one interior node.
fn for_each_edge(n: usize, mut f: impl FnMut(Edge)) {
    for j in 1..n {
        for i in 0..n {
            f(Edge { horizontal: true, i, j });
        }
    }
    for j in 0..n {
        for i in 1..n {
            f(Edge { horizontal: false, i, j });
        }
    }
}

#[derive(Clone, Copy)]
struct Edge {
    horizontal: bool,
    i: usize,
    j: usize,
}

impl Edge {
    fn far_end(&self) -> (usize, usize) {
        if self.horizontal {
            (self.i + 1, self.j)
        } else {
            (self.i, self.j + 1)
        }
    }

    fn difference(&self, p: &NodeField) -> f64 {
        let (i2, j2) = self.far_end();
        p.at(i2, j2) - p.at(self.i, self.j)
    }

    fn transmissibility(&self, t: &Transmissibility) -> f64 {
        if self.horizontal {
            t.x(self.i, self.j)
        } else {
            t.y(self.i, self.j)
        }
    }
}

/// Assembled 5-point operator on the interior nodes.
#[derive(Clone, Debug)]
pub struct StencilMatrix {
    grid: Grid,
    diag: Vec<f64>,
    /// Coupling to the east neighbour (`-t`), zero when that neighbour is on the boundary.
    east: Vec<f64>,
    /// Coupling to the north neighbour.
    north: Vec<f64>,
}

impl StencilMatrix {
    pub fn assemble(kappa: &CellField) -> Result<Self> {
        let t = Transmissibility::from_kappa(kappa)?;
        let grid = kappa.grid();
        let n = grid.nx();
        let size = grid.num_interior();
        let mut diag = vec![0.0; size];
        let mut east = vec![0.0; size];
        let mut north = vec![0.0; size];
        for j in 1..n {
            for i in 1..n {
                let k = grid.node_index(i, j);
                let (w, e) = (t.x(i - 1, j), t.x(i, j));
                let (s, nn) = (t.y(i, j - 1), t.y(i, j));
                diag[k] = w + e + s + nn;
                if i + 1 < n {
                    east[k] = -e;
                }
                if j + 1 < n {
                    north[k] = -nn;
                }
            }
        }
        Ok(StencilMatrix { grid, diag, east, north })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Dense entry `A[r][c]`; used by tests only.
    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let m = self.grid.nx() - 1;
        let (lo, hi) = if r <= c { (r, c) } else { (c, r) };
        match hi - lo {
            0 => self.diag[r],
            1 if (lo % m) + 1 < m => self.east[lo],
            d if d == m => self.north[lo],
            _ => 0.0,
        }
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.grid.nx() - 1;
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for k in 0..x.len() {
            let e = self.east[k];
            if e != 0.0 {
                y[k] += e * x[k + 1];
                y[k + 1] += e * x[k];
            }
            let nn = self.north[k];
            if nn != 0.0 {
                y[k] += nn * x[k + m];
                y[k + m] += nn * x[k];
            }
        }
        y
    }

    /// True when every row has positive diagonal at least the absolute sum of its off-diagonals.
    pub fn is_diagonally_dominant(&self) -> bool {
        let m = self.grid.nx() - 1;
        (0..self.size()).all(|k| {
            let mut off = self.east[k].abs() + self.north[k].abs();
            if k % m > 0 {
                off += self.east[k - 1].abs();
            }
            if k >= m {
                off += self.north[k - m].abs();
            }
            self.diag[k] > 0.0 && self.diag[k] >= off * (1.0 - 1e-14)
        })
    }

    fn banded_cholesky(&self) -> Result<BandedCholesky> {
        let m = self.grid.nx() - 1;
        let size = self.size();
        let w = m + 1;
        // row k, column c (k-m <= c <= k) stored at k*w + (c + m - k)
        let mut band = vec![0.0; size * w];
        for k in 0..size {
            band[k * w + m] = self.diag[k];
            if k % m > 0 {
                band[k * w + m - 1] = self.east[k - 1];
            }
            if k >= m {
                band[k * w] = self.north[k - m];
            }
        }
        for k in 0..size {
            let c_lo = k.saturating_sub(m);
            for c in c_lo..k {
                let t_lo = c_lo.max(c.saturating_sub(m));
                let len = c - t_lo;
                let rk = k * w + (t_lo + m - k);
                let rc = c * w + (t_lo + m - c);
                let mut s = band[k * w + (c + m - k)];
                let (row_k, row_c) = (&band[rk..rk + len], &band[rc..rc + len]);
                s -= row_k.iter().zip(row_c).map(|(a, b)| a * b).sum::<f64>();
                band[k * w + (c + m - k)] = s / band[c * w + m];
            }
            let rk = k * w + (c_lo + m - k);
            let len = k - c_lo;
            let s = band[k * w + m] - band[rk..rk + len].iter().map(|a| a * a).sum::<f64>();
            if !(s > 0.0) {
                return Err(Error::Numerical {
                    message: format!("non-positive pivot {s:e} in banded Cholesky"),
                    iterations: k,
                });
            }
            band[k * w + m] = s.sqrt();
        }
        Ok(BandedCholesky { m, size, band })
    }

    /// Zero-fill incomplete Cholesky factor: diagonal only, the off-diagonal
    /// factor entries are `A[k][k-1] / d[k-1]` and `A[k][k-m] / d[k-m]`.
    fn ic0(&self) -> Result<Vec<f64>> {
        let m = self.grid.nx() - 1;
        let mut d = vec![0.0; self.size()];
        for k in 0..self.size() {
            let mut s = self.diag[k];
            if k % m > 0 {
                let l = self.east[k - 1] / d[k - 1];
                s -= l * l;
            }
            if k >= m {
                let l = self.north[k - m] / d[k - m];
                s -= l * l;
            }
            if !(s > 0.0) {
                return Err(Error::Numerical {
                    message: "incomplete Cholesky breakdown".into(),
                    iterations: k,
                });
            }
            d[k] = s.sqrt();
        }
        Ok(d)
    }

    fn ic0_apply(&self, d: &[f64], r: &[f64], z: &mut [f64]) {
        let m = self.grid.nx() - 1;
        let size = self.size();
        // forward: L y = r
        for k in 0..size {
            let mut s = r[k];
            if k % m > 0 {
                s -= self.east[k - 1] / d[k - 1] * z[k - 1];
            }
            if k >= m {
                s -= self.north[k - m] / d[k - m] * z[k - m];
            }
            z[k] = s / d[k];
        }
        // backward: L^T x = y
        for k in (0..size).rev() {
            let mut s = z[k];
            if k % m + 1 < m {
                s -= self.east[k] / d[k] * z[k + 1];
            }
            if k + m < size {
                s -= self.north[k] / d[k] * z[k + m];
            }
            z[k] = s / d[k];
        }
    }

    fn pcg(&self, b: &[f64]) -> Result<Vec<f64>> {
        let size = self.size();
        let d = self.ic0()?;
        let b_norm = norm(b);
        let mut x = vec![0.0; size];
        if b_norm == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut z = vec![0.0; size];
        self.ic0_apply(&d, &r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let max_iter = 10 * size + 100;
        for it in 0..max_iter {
            let ap = self.apply(&p);
            let alpha = rz / dot(&p, &ap);
            for k in 0..size {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if norm(&r) <= CG_TOLERANCE * b_norm {
                return Ok(x);
            }
            self.ic0_apply(&d, &r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..size {
                p[k] = z[k] + beta * p[k];
            }
            if !rz.is_finite() {
                return Err(Error::Numerical {
                    message: "conjugate gradients produced a non-finite residual".into(),
                    iterations: it + 1,
                });
            }
        }
        Err(Error::Numerical {
            message: format!(
                "conjugate gradients did not reach relative residual {CG_TOLERANCE:e} (now {:e})",
                norm(&r) / b_norm
            ),
            iterations: max_iter,
        })
    }
}

struct BandedCholesky {
    m: usize,
    size: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (m, w) = (self.m, self.m + 1);
        let mut x = b.to_vec();
        for k in 0..self.size {
            let c_lo = k.saturating_sub(m);
            let row = &self.band[k * w + (c_lo + m - k)..k * w + m];
            let s: f64 = row.iter().zip(&x[c_lo..k]).map(|(l, v)| l * v).sum();
            x[k] = (x[k] - s) / self.band[k * w + m];
        }
        for k in (0..self.size).rev() {
            x[k] /= self.band[k * w + m];
            let xk = x[k];
            let c_lo = k.saturating_sub(m);
            let row = &self.band[k * w + (c_lo + m - k)..k * w + m];
            for (v, l) in x[c_lo..k].iter_mut().zip(row) {
                *v -= l * xk;
            }
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Load vector `h^2 f(node)`, with the nodal source taken as the mean of the
/// four cells sharing the node.
fn load_vector(source: &CellField) -> Vec<f64> {
    let grid = source.grid();
    let n = grid.nx();
    let h2 = grid.h() * grid.h();
    let mut b = vec![0.0; grid.num_interior()];
    for j in 1..n {
        for i in 1..n {
            let f = 0.25
                * (source.at(i - 1, j - 1)
                    + source.at(i, j - 1)
                    + source.at(i - 1, j)
                    + source.at(i, j));
            b[grid.node_index(i, j)] = h2 * f;
        }
    }
    b
}

/// Solves the Darcy problem with the default solver selection.
pub fn solve_darcy(kappa: &CellField, source: &CellField, grid: Grid) -> Result<NodeField> {
    solve_darcy_with(kappa, source, grid, LinearSolver::Auto)
}

pub fn solve_darcy_with(
    kappa: &CellField,
    source: &CellField,
    grid: Grid,
    method: LinearSolver,
) -> Result<NodeField> {
    if kappa.grid() != grid || source.grid() != grid {
        return Err(Error::shape("permeability, source and grid must agree"));
    }
    let a = StencilMatrix::assemble(kappa)?;
    let b = load_vector(source);
    let direct = match method {
        LinearSolver::Auto => grid.nx() <= DIRECT_SOLVER_MAX_CELLS,
        LinearSolver::BandedCholesky => true,
        LinearSolver::PreconditionedCg => false,
    };
    let x = if direct {
        let x = a.banded_cholesky()?.solve(&b);
        let r: Vec<f64> = a.apply(&x).iter().zip(&b).map(|(ax, bb)| bb - ax).collect();
        let b_norm = norm(&b);
        if b_norm > 0.0 && norm(&r) > CG_TOLERANCE * b_norm {
            return Err(Error::Numerical {
                message: format!("direct solve residual {:e} above tolerance", norm(&r) / b_norm),
                iterations: 1,
            });
        }
        x
    } else {
        a.pcg(&b)?
    };
    NodeField::new(grid, x)
}

/// Discrete `||grad p||_{L2}` from forward differences over all grid edges,
/// boundary nodes contributing zero.
pub fn energy_norm(p: &NodeField) -> f64 {
    let mut s = 0.0;
    for_each_edge(p.grid().nx(), |e| {
        let d = e.difference(p);
        s += d * d;
    });
    s.sqrt()
}

/// Both sides of the stability estimate
/// `||p_eps - p||_V <= (1/min kappa_eps) (int |kappa_eps - kappa|^2 |grad p|^2)^(1/2)`.
///
/// The right-hand side is evaluated edgewise with the same transmissibilities
/// and differences the operator uses, so the discrete inequality holds up to
/// solver round-off.
pub fn continuity_gap(
    kappa: &CellField,
    kappa_eps: &CellField,
    source: &CellField,
    grid: Grid,
) -> Result<(f64, f64)> {
    let p = solve_darcy(kappa, source, grid)?;
    let p_eps = solve_darcy(kappa_eps, source, grid)?;
    let lhs = energy_norm(&p_eps.sub(&p)?);
    let t = Transmissibility::from_kappa(kappa)?;
    let t_eps = Transmissibility::from_kappa(kappa_eps)?;
    let mut s = 0.0;
    for_each_edge(grid.nx(), |e| {
        let dt = e.transmissibility(&t_eps) - e.transmissibility(&t);
        let dp = e.difference(&p);
        s += dt * dt * dp * dp;
    });
    let rhs = s.sqrt() / kappa_eps.min();
    Ok((lhs, rhs))
}
