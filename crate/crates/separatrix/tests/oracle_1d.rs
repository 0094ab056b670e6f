//! Quadrature oracles for the 1D committor and mean-first-passage problems.
//!
//! For `dX = f(X) dt + σ dW` with diffusion `D = σ²/2` the exact solutions
//! are classical quadratures built from the potential `V' = −f`:
//!
//! * committor between absorbing points a < b:
//!   `q(x) = ∫_a^x exp(2V/σ²) / ∫_a^b exp(2V/σ²)`;
//! * MFPT to b with a reflecting wall at 0:
//!   `τ(x) = ∫_x^b s(y) ∫_0^y 1/(D s(z)) dz dy`, `s = exp(2V/σ²)`.
//!
//! Both integrals are evaluated by trapezoid sums on a refinement of the
//! solver grid (32 panels per cell), aligning the oracle exactly with the
//! finite-difference nodes.

use separatrix::model::SdeSystem;
use separatrix::pde::{
    assemble_generator, solve_committor_raw, solve_mfpt, EllipseRegion, Grid,
};

const ROOTS: [f64; 3] = [0.20, 0.50, 0.80];
const RADIUS: f64 = 0.015;
const SIGMA: f64 = 0.05;
const N_NODES: usize = 4001;
const REFINE: usize = 32;

/// Antiderivative of −f = (x−x1)(x−x2)(x−x3) for the cubic drift.
fn potential(x: f64) -> f64 {
    let [x1, x2, x3] = ROOTS;
    let e1 = x1 + x2 + x3;
    let e2 = x1 * x2 + x1 * x3 + x2 * x3;
    let e3 = x1 * x2 * x3;
    x.powi(4) / 4.0 - e1 * x.powi(3) / 3.0 + e2 * x * x / 2.0 - e3 * x
}

fn setup() -> (Grid, separatrix::pde::DiscreteOperator, EllipseRegion, EllipseRegion) {
    let system = SdeSystem::schlogl(ROOTS[0], ROOTS[1], ROOTS[2], SIGMA).unwrap();
    let grid = Grid::new(system.domain.clone(), vec![N_NODES]);
    let op = assemble_generator(&system, &grid).unwrap();
    let r1 = EllipseRegion::new(vec![ROOTS[0]], vec![RADIUS]);
    let r3 = EllipseRegion::new(vec![ROOTS[2]], vec![RADIUS]);
    (grid, op, r1, r3)
}

/// Indices of the grid nodes pinned by a region. The exact strip edges are
/// whatever nodes the membership test actually captures (floating point can
/// exclude a node sitting exactly on the region boundary), so the oracle
/// boundaries are taken from here rather than from the nominal radii.
fn pinned_nodes(grid: &Grid, region: &EllipseRegion) -> Vec<usize> {
    (0..grid.len()).filter(|&i| region.contains(&grid.node(i))).collect()
}

/// Cumulative trapezoid of `g` from `x0` along `steps` fine intervals of
/// width `dx`, sampled every `REFINE` steps (i.e. at the solver nodes).
fn cumulative(g: impl Fn(f64) -> f64, x0: f64, dx: f64, steps: usize) -> Vec<f64> {
    let mut acc = 0.0;
    let mut prev = g(x0);
    let mut out = Vec::with_capacity(steps / REFINE + 1);
    out.push(0.0);
    for k in 1..=steps {
        let cur = g(x0 + dx * k as f64);
        acc += 0.5 * (prev + cur) * dx;
        prev = cur;
        if k % REFINE == 0 {
            out.push(acc);
        }
    }
    out
}

#[test]
fn committor_matches_quadrature_oracle() {
    let (grid, op, r1, r3) = setup();
    let q = solve_committor_raw(&op, &r1, &r3).unwrap();
    let h = grid.spacing(0);
    // absorbing strip edges: last pinned node of R1, first pinned node of R3
    let ia = *pinned_nodes(&grid, &r1).last().unwrap();
    let ib = pinned_nodes(&grid, &r3)[0];
    let a = grid.coord(0, ia);
    let v_ref = potential(ROOTS[1]); // shift to keep exponents small
    let weight = |x: f64| (2.0 * (potential(x) - v_ref) / (SIGMA * SIGMA)).exp();
    let cells = ib - ia;
    let cum = cumulative(weight, a, h / REFINE as f64, cells * REFINE);
    let total = cum[cells];
    let mut max_err = 0.0f64;
    for i in ia..=ib {
        let oracle = cum[i - ia] / total;
        max_err = max_err.max((q.values[i] - oracle).abs());
    }
    assert!(max_err < 1e-3, "max |q − oracle| = {max_err}");
    // spot-check the oracle itself: midpoint committor must be 1/2 up to the
    // asymmetry of the potential wells, which is tiny but nonzero
    assert!(q.values[(0.5 / h).round() as usize] > 0.4);
}

#[test]
fn mfpt_matches_quadrature_oracle() {
    let (grid, op, _r1, r3) = setup();
    let tau = solve_mfpt(&op, &r3).unwrap();
    let h = grid.spacing(0);
    let ib = pinned_nodes(&grid, &r3)[0];
    let b = grid.coord(0, ib);
    let d = 0.5 * SIGMA * SIGMA;
    let v_ref = potential(ROOTS[1]);
    let s = |x: f64| (2.0 * (potential(x) - v_ref) / (SIGMA * SIGMA)).exp();
    let fine = h / REFINE as f64;
    // inner integral I(y) = ∫_0^y dz/(D s(z)) at every fine step
    let steps = ib * REFINE;
    let mut inner = Vec::with_capacity(steps + 1);
    inner.push(0.0);
    let mut acc = 0.0;
    let mut prev = 1.0 / (d * s(0.0));
    for k in 1..=steps {
        let cur = 1.0 / (d * s(fine * k as f64));
        acc += 0.5 * (prev + cur) * fine;
        prev = cur;
        inner.push(acc);
    }
    // outer integral from the right: τ(x_i) = ∫_x^b s(y) I(y) dy
    let mut oracle = vec![0.0; ib + 1];
    let mut tail = 0.0;
    let mut prev_g = s(b) * inner[steps];
    for k in (0..steps).rev() {
        let y = fine * k as f64;
        let g = s(y) * inner[k];
        tail += 0.5 * (g + prev_g) * fine;
        prev_g = g;
        if k % REFINE == 0 {
            oracle[k / REFINE] = tail;
        }
    }
    // relative error where τ is O(τ(0)); near the absorbing node τ → 0
    // linearly and the plateau value is the right yardstick
    let scale = oracle[0];
    let mut max_rel = 0.0f64;
    for i in 0..=ib {
        let denom = oracle[i].max(1e-3 * scale);
        max_rel = max_rel.max((tau.values[i] - oracle[i]).abs() / denom);
    }
    assert!(max_rel < 1e-3, "max relative MFPT error = {max_rel}");
}
