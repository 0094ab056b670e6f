//! Finite-difference discretisation of the backward Kolmogorov generator and
//! the committor / mean-first-passage-time boundary value problems.
//!
//! The generator
//!
//! ```text
//! 𝓛φ = F·∇φ + ½ Σ_k G_kk² ∂²φ/∂x_k²
//! ```
//!
//! is discretised with second-order centred differences on a uniform grid.
//! Homogeneous Neumann conditions on the outer boundary use mirror ghost
//! nodes (`φ₋₁ = φ₁`), which cancels the advective term and folds the
//! diffusive ghost coefficient onto the interior neighbour. Dirichlet data in
//! the equilibrium neighbourhoods is imposed through identity rows. Linear
//! systems are solved by direct banded LU with iterative refinement down to a
//! 1e-10 relative residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BandMatrix, CsrMatrix};
use crate::model::{DomainBox, SdeSystem};

/// Uniform node-based grid over a rectangular domain (1D or 2D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub domain: DomainBox,
    pub n: Vec<usize>,
}

impl Grid {
    pub fn new(domain: DomainBox, n: Vec<usize>) -> Self {
        assert_eq!(domain.dim(), n.len());
        assert!(n.iter().all(|&k| k >= 3), "need at least 3 nodes per axis");
        Grid { domain, n }
    }

    /// Default 141 × 141 grid on Ω = [0.30, 0.60] × [0, 0.13].
    pub fn default_2d() -> Self {
        Grid::new(crate::model::default_domain_2d(), vec![141, 141])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.domain.extent(axis) / (self.n[axis] - 1) as f64
    }

    pub fn coord(&self, axis: usize, idx: usize) -> f64 {
        self.domain.lo[axis] + self.spacing(axis) * idx as f64
    }

    /// Flat index; axis 0 is the outer (slow) index.
    #[inline]
    pub fn flat(&self, multi: &[usize]) -> usize {
        match self.dim() {
            1 => multi[0],
            2 => multi[0] * self.n[1] + multi[1],
            _ => unreachable!(),
        }
    }

    #[inline]
    pub fn unflat(&self, flat: usize) -> [usize; 2] {
        match self.dim() {
            1 => [flat, 0],
            2 => [flat / self.n[1], flat % self.n[1]],
            _ => unreachable!(),
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let m = self.unflat(flat);
        (0..self.dim()).map(|ax| self.coord(ax, m[ax])).collect()
    }
}

/// Node values of a scalar quantity (committor q or MFPT τ) on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(grid.len(), values.len());
        ScalarField { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        let n = grid.len();
        ScalarField::new(grid, vec![c; n])
    }

    #[inline]
    pub fn at(&self, multi: &[usize]) -> f64 {
        self.values[self.grid.flat(multi)]
    }

    /// Multilinear interpolation; the point is clamped to the domain.
    pub fn interp(&self, x: &[f64]) -> f64 {
        match self.grid.dim() {
            1 => {
                let (i, t) = locate(&self.grid, 0, x[0]);
                let a = self.values[i];
                let b = self.values[i + 1];
                a + t * (b - a)
            }
            2 => {
                let (i, s) = locate(&self.grid, 0, x[0]);
                let (j, t) = locate(&self.grid, 1, x[1]);
                let n1 = self.grid.n[1];
                let v00 = self.values[i * n1 + j];
                let v10 = self.values[(i + 1) * n1 + j];
                let v01 = self.values[i * n1 + j + 1];
                let v11 = self.values[(i + 1) * n1 + j + 1];
                v00 * (1.0 - s) * (1.0 - t)
                    + v10 * s * (1.0 - t)
                    + v01 * (1.0 - s) * t
                    + v11 * s * t
            }
            _ => unreachable!(),
        }
    }
}

/// Locate the cell and the in-cell fraction along one axis, clamped.
pub(crate) fn locate(grid: &Grid, axis: usize, x: f64) -> (usize, f64) {
    let h = grid.spacing(axis);
    let rel = (x - grid.domain.lo[axis]) / h;
    let max_cell = grid.n[axis] - 2;
    let i = (rel.floor().max(0.0) as usize).min(max_cell);
    let t = (rel - i as f64).clamp(0.0, 1.0);
    (i, t)
}

/// Axis-aligned elliptical neighbourhood of an equilibrium (an interval in
/// 1D). Membership is implicitly intersected with the physical domain since
/// grids never extend past it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseRegion {
    pub center: Vec<f64>,
    pub semi_axes: Vec<f64>,
}

impl EllipseRegion {
    pub fn new(center: Vec<f64>, semi_axes: Vec<f64>) -> Self {
        assert_eq!(center.len(), semi_axes.len());
        assert!(semi_axes.iter().all(|&r| r > 0.0));
        EllipseRegion { center, semi_axes }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let s: f64 = x
            .iter()
            .zip(self.center.iter().zip(&self.semi_axes))
            .map(|(&xi, (&c, &r))| ((xi - c) / r).powi(2))
            .sum();
        s <= 1.0
    }
}

/// Default neighbourhood semi-axes (r_T, r_u) for the 2D model.
pub const DEFAULT_SEMI_AXES_2D: [f64; 2] = [0.018, 0.008];
/// Default interval radius for the Schlögl model.
pub const DEFAULT_RADIUS_SCHLOGL: f64 = 0.015;

/// Discretised generator: a sparse matrix over all grid nodes with the
/// Neumann mirror boundary already folded in.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub matrix: CsrMatrix,
    /// Band half-width of the matrix under lexicographic node ordering.
    pub bandwidth: usize,
}

/// Assemble the centred-difference generator of `system` on `grid`.
pub fn assemble_generator(system: &SdeSystem, grid: &Grid) -> Result<DiscreteOperator> {
    assert_eq!(system.dim(), grid.dim());
    let dim = grid.dim();
    let n_total = grid.len();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_total);
    let mut drift = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    for flat in 0..n_total {
        let multi = grid.unflat(flat);
        for ax in 0..dim {
            x[ax] = grid.coord(ax, multi[ax]);
        }
        system.drift(&x, &mut drift);
        system.noise_diag(&x, &mut g);
        // entries accumulated as (column, coeff); diagonal kept separate so
        // row sums vanish exactly for constant fields
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(2 * dim);
        let mut diag = 0.0;
        for ax in 0..dim {
            let h = grid.spacing(ax);
            let dif = 0.5 * g[ax] * g[ax] / (h * h);
            let adv = drift[ax] / (2.0 * h);
            if !dif.is_finite() || !adv.is_finite() {
                return Err(Error::NonFinite {
                    node: flat,
                    context: format!("generator coefficient on axis {ax}"),
                });
            }
            let c_plus = adv + dif;
            let c_minus = -adv + dif;
            let i = multi[ax];
            let up = if i + 1 < grid.n[ax] { i + 1 } else { i - 1 }; // mirror ghost
            let dn = if i > 0 { i - 1 } else { i + 1 };
            let mut m_up = multi;
            m_up[ax] = up;
            let mut m_dn = multi;
            m_dn[ax] = dn;
            entries.push((grid.flat(&m_up), c_plus));
            entries.push((grid.flat(&m_dn), c_minus));
            diag -= c_plus + c_minus;
        }
        // merge duplicate columns (mirror folding can hit the same node)
        let mut row: Vec<(usize, f64)> = vec![(flat, diag)];
        for (col, v) in entries {
            if let Some(e) = row.iter_mut().find(|(c, _)| *c == col) {
                e.1 += v;
            } else {
                row.push((col, v));
            }
        }
        row.sort_by_key(|&(c, _)| c);
        rows.push(row);
    }
    let bandwidth = if dim == 2 { grid.n[1] } else { 1 };
    Ok(DiscreteOperator { grid: grid.clone(), matrix: CsrMatrix::from_rows(rows), bandwidth })
}

impl DiscreteOperator {
    /// Apply the discrete generator to a field.
    pub fn apply(&self, field: &ScalarField) -> ScalarField {
        let mut out = vec![0.0; field.values.len()];
        self.matrix.matvec(&field.values, &mut out);
        ScalarField::new(self.grid.clone(), out)
    }

    fn nodes_in(&self, region: &EllipseRegion) -> Vec<usize> {
        (0..self.grid.len())
            .filter(|&flat| region.contains(&self.grid.node(flat)))
            .collect()
    }
}

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_REFINEMENT: usize = 12;

/// Node elimination order for the direct solvers. Lexicographic order gives
/// band half-width `n[1]` on a 2D grid; when the second axis is finer it is
/// cheaper to eliminate in transposed order, shrinking the band to
/// `min(n[0], n[1])`. Returns the order (solver position → grid node) and the
/// band half-width under it.
fn solve_order(grid: &Grid, bandwidth: usize) -> (Vec<usize>, usize) {
    let n = grid.len();
    if grid.dim() == 2 && grid.n[1] > grid.n[0] {
        let (n0, n1) = (grid.n[0], grid.n[1]);
        let mut order = Vec::with_capacity(n);
        for j in 0..n1 {
            for i in 0..n0 {
                order.push(i * n1 + j);
            }
        }
        (order, n0)
    } else {
        ((0..n).collect(), bandwidth)
    }
}

/// Attempt the cancellation-free M-matrix solve of the reduced free-node
/// system. Applicable when every off-diagonal generator coefficient is
/// nonnegative (no centred-difference cell exceeds the diffusive limit), the
/// free right-hand side is ≤ 0 and the Dirichlet data ≥ 0 — exactly the
/// committor and mean-passage-time problems. Returns `None` when the sign
/// structure does not hold, in which case the caller falls back to pivoted
/// banded LU with refinement.
fn try_m_matrix_path(
    op: &DiscreteOperator,
    dirichlet: &[(usize, f64)],
    is_dirichlet: &[bool],
    rhs_free: f64,
) -> Option<Result<Vec<f64>>> {
    if rhs_free > 0.0 || dirichlet.iter().any(|&(_, v)| v < 0.0) {
        return None;
    }
    let n = op.grid.len();
    let mut value = vec![0.0; n];
    for &(node, v) in dirichlet {
        value[node] = v;
    }
    // compress the free nodes, preserving the elimination order (the
    // bandwidth only shrinks under compression)
    let (order, m) = solve_order(&op.grid, op.bandwidth);
    let mut free_index = vec![usize::MAX; n];
    let mut free = Vec::with_capacity(n);
    for &i in &order {
        if !is_dirichlet[i] {
            free_index[i] = free.len();
            free.push(i);
        }
    }
    let nf = free.len();
    let w = 2 * m + 1;
    let mut off = vec![0.0; w * nf];
    let mut absorption = vec![0.0; nf];
    let mut b = vec![-rhs_free; nf];
    for (fi, &i) in free.iter().enumerate() {
        let (cols, vals) = op.matrix.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                continue;
            }
            if v < 0.0 {
                return None; // not an M-matrix: advection beats diffusion here
            }
            if is_dirichlet[j] {
                // coupling to pinned nodes becomes absorption plus rhs data
                absorption[fi] += v;
                b[fi] += v * value[j];
            } else {
                let fj = free_index[j];
                off[fi * w + (fj + m - fi)] = -v;
            }
        }
    }
    let solved = match crate::linalg::solve_m_matrix_banded(m, off, absorption, b) {
        Ok(x) => x,
        Err(e) => return Some(Err(e)),
    };
    let mut x = value;
    for (fi, &i) in free.iter().enumerate() {
        x[i] = solved[fi];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Some(Err(Error::SingularSystem("non-finite solution".into())));
    }
    Some(Ok(x))
}

/// Solve the system obtained by replacing the rows listed in `dirichlet` with
/// identity rows, with right-hand side `rhs_free` on all other nodes.
fn solve_dirichlet(
    op: &DiscreteOperator,
    dirichlet: &[(usize, f64)],
    rhs_free: f64,
) -> Result<Vec<f64>> {
    let n = op.grid.len();
    let mut is_dirichlet = vec![false; n];
    let mut rhs = vec![rhs_free; n];
    for &(node, value) in dirichlet {
        is_dirichlet[node] = true;
        rhs[node] = value;
    }
    if let Some(x) = try_m_matrix_path(op, dirichlet, &is_dirichlet, rhs_free) {
        return x;
    }
    let (order, kw) = solve_order(&op.grid, op.bandwidth);
    let mut pos = vec![0usize; n];
    for (p, &o) in order.iter().enumerate() {
        pos[o] = p;
    }
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for &i in &order {
        if is_dirichlet[i] {
            rows.push(vec![(pos[i], 1.0)]);
        } else {
            let (cols, vals) = op.matrix.row(i);
            let mut row: Vec<(usize, f64)> =
                cols.iter().map(|&j| pos[j]).zip(vals.iter().copied()).collect();
            row.sort_by_key(|&(c, _)| c);
            rows.push(row);
        }
    }
    let modified = CsrMatrix::from_rows(rows);
    let rhs: Vec<f64> = order.iter().map(|&o| rhs[o]).collect();
    let lu = BandMatrix::from_csr(&modified, kw, kw).factor()?;
    let mut x = rhs.clone();
    lu.solve_in_place(&mut x);
    // Iterative refinement. The primary target is a residual below the tight
    // tolerance relative to ‖b‖; once refinement stagnates at its roundoff
    // floor we instead accept a backward error ‖r‖/(‖A‖‖x‖+‖b‖) below the
    // same tolerance, which is the meaningful criterion when the solution
    // dwarfs the right-hand side (weak-noise mean passage times reach e^150).
    let a_norm = (0..n)
        .map(|i| {
            let (_, vals) = modified.row(i);
            vals.iter().map(|v| v.abs()).sum::<f64>()
        })
        .fold(0.0, f64::max);
    let b_norm = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut prev_res = f64::INFINITY;
    for _ in 0..MAX_REFINEMENT {
        let mut r = vec![0.0; n];
        modified.matvec(&x, &mut r);
        let mut max_r = 0.0f64;
        let mut x_norm = 0.0f64;
        for i in 0..n {
            r[i] = rhs[i] - r[i];
            max_r = max_r.max(r[i].abs());
            x_norm = x_norm.max(x[i].abs());
        }
        let stagnated = max_r >= 0.5 * prev_res;
        let strict = max_r / b_norm.max(1.0) < RESIDUAL_TOL;
        let backward = max_r / (a_norm * x_norm + b_norm).max(1.0) < RESIDUAL_TOL;
        if strict || (stagnated && backward) {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularSystem("non-finite solution".into()));
            }
            let mut out = vec![0.0; n];
            for (p, &o) in order.iter().enumerate() {
                out[o] = x[p];
            }
            // refinement corrections can perturb the pinned nodes at roundoff
            for &(node, value) in dirichlet {
                out[node] = value;
            }
            return Ok(out);
        }
        prev_res = max_r;
        lu.solve_in_place(&mut r);
        for i in 0..n {
            x[i] += r[i];
        }
    }
    Err(Error::SingularSystem(format!(
        "residual did not reach {RESIDUAL_TOL} after {MAX_REFINEMENT} refinement steps"
    )))
}

/// Committor BVP: 𝓛q = 0 with q = 0 on `r_source`, q = 1 on `r_target`,
/// mirror-Neumann outer boundary. Returned values are truncated to [0, 1]
/// (see [`solve_committor_raw`] for the untruncated solve).
pub fn solve_committor(
    op: &DiscreteOperator,
    r_source: &EllipseRegion,
    r_target: &EllipseRegion,
) -> Result<ScalarField> {
    let mut q = solve_committor_raw(op, r_source, r_target)?;
    for v in &mut q.values {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(q)
}

/// Committor solve without the final truncation to [0, 1].
pub fn solve_committor_raw(
    op: &DiscreteOperator,
    r_source: &EllipseRegion,
    r_target: &EllipseRegion,
) -> Result<ScalarField> {
    let src = op.nodes_in(r_source);
    let tgt = op.nodes_in(r_target);
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if src.iter().any(|n| tgt.contains(n)) {
        return Err(Error::OverlappingRegions);
    }
    let mut dirichlet: Vec<(usize, f64)> = src.iter().map(|&n| (n, 0.0)).collect();
    dirichlet.extend(tgt.iter().map(|&n| (n, 1.0)));
    let x = solve_dirichlet(op, &dirichlet, 0.0)?;
    Ok(ScalarField::new(op.grid.clone(), x))
}

/// MFPT BVP: 𝓛τ = −1 off the target, τ = 0 on the target, mirror-Neumann
/// outer boundary. Small negative discretisation undershoots are truncated
/// to zero.
pub fn solve_mfpt(op: &DiscreteOperator, r_target: &EllipseRegion) -> Result<ScalarField> {
    let tgt = op.nodes_in(r_target);
    if tgt.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let dirichlet: Vec<(usize, f64)> = tgt.iter().map(|&n| (n, 0.0)).collect();
    let x = solve_dirichlet(op, &dirichlet, -1.0)?;
    let mut tau = ScalarField::new(op.grid.clone(), x);
    for v in &mut tau.values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(tau)
}

/// Arithmetic mean of node values inside a region.
pub fn region_average(field: &ScalarField, region: &EllipseRegion) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for flat in 0..field.grid.len() {
        if region.contains(&field.grid.node(flat)) {
            sum += field.values[flat];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(sum / count as f64)
}
