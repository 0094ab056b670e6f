//! Stochastic-separatrix geometry: isocontour extraction, the geometric
//! early-warning indicator, directed curve distances and the second-order
//! width-asymmetry diagnostic.
//!
//! The stochastic separatrix Γ is the q = 1/2 isocommittor. Its transition
//! layer {1/2 − α ≤ q ≤ 1/2 + α} has local full width w_α ≈ 2α/‖∇q‖, and
//!
//! ```text
//! EWS_geom = (1/L(Γ)) ∫_Γ w_α ds
//! ```
//!
//! is the arc-length average of that width along Γ.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{locate, Grid, ScalarField};

/// Gradient regularisation floor for ‖∇q‖.
pub const GRAD_FLOOR: f64 = 1e-6;
/// Relative distance from the domain boundary below which contour vertices
/// are discarded.
pub const EDGE_FILTER_REL: f64 = 0.02;

/// Ordered vertex chain with cumulative arc length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polyline {
    vertices: Vec<[f64; 2]>,
    arclen: Vec<f64>,
}

impl Polyline {
    /// Build from an ordered vertex list; consecutive duplicates are dropped.
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let mut vs: Vec<[f64; 2]> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if let Some(last) = vs.last() {
                if (v[0] - last[0]).abs() < 1e-14 && (v[1] - last[1]).abs() < 1e-14 {
                    continue;
                }
            }
            vs.push(v);
        }
        if vs.len() < 2 {
            return Err(Error::DegeneratePolyline(format!(
                "need at least 2 distinct vertices, got {}",
                vs.len()
            )));
        }
        let mut arclen = Vec::with_capacity(vs.len());
        let mut s = 0.0;
        arclen.push(0.0);
        for w in vs.windows(2) {
            s += dist(w[0], w[1]);
            arclen.push(s);
        }
        Ok(Polyline { vertices: vs, arclen })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn arclen(&self) -> &[f64] {
        &self.arclen
    }

    pub fn length(&self) -> f64 {
        *self.arclen.last().unwrap()
    }

    /// New polyline with one linearly interpolated midpoint per segment.
    pub fn densified(&self) -> Polyline {
        let mut vs = Vec::with_capacity(self.vertices.len() * 2);
        for w in self.vertices.windows(2) {
            vs.push(w[0]);
            vs.push([0.5 * (w[0][0] + w[1][0]), 0.5 * (w[0][1] + w[1][1])]);
        }
        vs.push(*self.vertices.last().unwrap());
        Polyline::new(vs).expect("densifying a valid polyline cannot degenerate")
    }
}

#[inline]
fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

// Grid edge carrying a contour vertex: axis 0 edges run from node (i, j) to
// (i+1, j), axis 1 edges from (i, j) to (i, j+1). Keys make endpoint matching
// exact during chaining.
type EdgeKey = (u8, u32, u32);

/// Extract the `{q = level}` isocontour by marching squares, drop vertices
/// within 2% (per axis) of the domain boundary and return the longest
/// remaining connected component.
pub fn extract_separatrix(q: &ScalarField, level: f64) -> Result<Polyline> {
    assert_eq!(q.grid.dim(), 2, "contour extraction requires a 2D field");
    let (min, max) = q
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(level > min && level < max) {
        return Err(Error::LevelNotAttained(level));
    }
    let grid = &q.grid;
    let (n0, n1) = (grid.n[0], grid.n[1]);
    let mut vertex_of_edge: HashMap<EdgeKey, usize> = HashMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut segments: Vec<(usize, usize)> = Vec::new();

    let value = |i: usize, j: usize| q.values[i * n1 + j];
    let mut vertex_on = |key: EdgeKey, vertices: &mut Vec<[f64; 2]>| -> usize {
        if let Some(&idx) = vertex_of_edge.get(&key) {
            return idx;
        }
        let (axis, i, j) = (key.0 as usize, key.1 as usize, key.2 as usize);
        let (va, vb) = if axis == 0 {
            (value(i, j), value(i + 1, j))
        } else {
            (value(i, j), value(i, j + 1))
        };
        let t = (level - va) / (vb - va);
        let mut p = [grid.coord(0, i), grid.coord(1, j)];
        p[axis] += t * grid.spacing(axis);
        vertices.push(p);
        vertex_of_edge.insert(key, vertices.len() - 1);
        vertices.len() - 1
    };

    for i in 0..n0 - 1 {
        for j in 0..n1 - 1 {
            let c = [value(i, j), value(i + 1, j), value(i + 1, j + 1), value(i, j + 1)];
            let code = (c[0] > level) as u8
                | ((c[1] > level) as u8) << 1
                | ((c[2] > level) as u8) << 2
                | ((c[3] > level) as u8) << 3;
            if code == 0 || code == 15 {
                continue;
            }
            // cell edges: 0 bottom, 1 right, 2 top, 3 left
            let ekey = |e: u8| -> EdgeKey {
                match e {
                    0 => (0, i as u32, j as u32),
                    1 => (1, (i + 1) as u32, j as u32),
                    2 => (0, i as u32, (j + 1) as u32),
                    _ => (1, i as u32, j as u32),
                }
            };
            let pairs: &[(u8, u8)] = match code {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(2, 3)],
                5 => {
                    // saddle: resolve by the cell-centre average
                    if 0.25 * (c[0] + c[1] + c[2] + c[3]) > level {
                        &[(0, 1), (2, 3)]
                    } else {
                        &[(3, 0), (1, 2)]
                    }
                }
                10 => {
                    if 0.25 * (c[0] + c[1] + c[2] + c[3]) > level {
                        &[(3, 0), (1, 2)]
                    } else {
                        &[(0, 1), (2, 3)]
                    }
                }
                _ => unreachable!(),
            };
            for &(ea, eb) in pairs {
                let a = vertex_on(ekey(ea), &mut vertices);
                let b = vertex_on(ekey(eb), &mut vertices);
                if a != b {
                    segments.push((a, b));
                }
            }
        }
    }
    if segments.is_empty() {
        return Err(Error::LevelNotAttained(level));
    }

    let chains = chain_segments(&vertices, &segments);

    // edge filter, then split chains at removed vertices
    let d_edge: Vec<f64> = (0..2).map(|ax| EDGE_FILTER_REL * grid.domain.extent(ax)).collect();
    let keep = |p: &[f64; 2]| -> bool {
        (0..2).all(|ax| {
            p[ax] - grid.domain.lo[ax] >= d_edge[ax] && grid.domain.hi[ax] - p[ax] >= d_edge[ax]
        })
    };
    let mut best: Option<Polyline> = None;
    for chain in &chains {
        let mut run: Vec<[f64; 2]> = Vec::new();
        let flush = |run: &mut Vec<[f64; 2]>, best: &mut Option<Polyline>| {
            if run.len() >= 2 {
                if let Ok(pl) = Polyline::new(std::mem::take(run)) {
                    if best.as_ref().map_or(true, |b| pl.length() > b.length()) {
                        *best = Some(pl);
                    }
                }
            } else {
                run.clear();
            }
        };
        for &vi in chain {
            let p = vertices[vi];
            if keep(&p) {
                run.push(p);
            } else {
                flush(&mut run, &mut best);
            }
        }
        flush(&mut run, &mut best);
    }
    best.ok_or(Error::ContourFiltered)
}

/// Chain segments into paths by shared endpoints. Junctions with more than
/// two incident segments are resolved by preferring the continuation with the
/// smallest turning angle.
fn chain_segments(vertices: &[[f64; 2]], segments: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (si, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(si);
        incident.entry(b).or_default().push(si);
    }
    let mut used = vec![false; segments.len()];
    let mut chains: Vec<Vec<usize>> = Vec::new();
    // open paths first (endpoints of odd degree), then remaining loops
    let mut starts: Vec<usize> = incident
        .iter()
        .filter(|(_, segs)| segs.len() % 2 == 1)
        .map(|(&v, _)| v)
        .collect();
    starts.sort_unstable();
    let all_vertices: Vec<usize> = {
        let mut v: Vec<usize> = incident.keys().copied().collect();
        v.sort_unstable();
        v
    };
    for phase in 0..2 {
        let candidates: &[usize] = if phase == 0 { &starts } else { &all_vertices };
        for &start in candidates {
            loop {
                let Some(&first_seg) = incident[&start].iter().find(|&&s| !used[s]) else {
                    break;
                };
                let mut chain = vec![start];
                let mut cur = start;
                let mut seg = first_seg;
                loop {
                    used[seg] = true;
                    let (a, b) = segments[seg];
                    let next = if a == cur { b } else { a };
                    chain.push(next);
                    let dir = [
                        vertices[next][0] - vertices[cur][0],
                        vertices[next][1] - vertices[cur][1],
                    ];
                    cur = next;
                    let options: Vec<usize> =
                        incident[&cur].iter().copied().filter(|&s| !used[s]).collect();
                    let Some(&next_seg) = options.iter().min_by(|&&s1, &&s2| {
                        turning(vertices, segments, cur, dir, s1)
                            .total_cmp(&turning(vertices, segments, cur, dir, s2))
                    }) else {
                        break;
                    };
                    seg = next_seg;
                }
                chains.push(chain);
            }
        }
    }
    chains
}

fn turning(vertices: &[[f64; 2]], segments: &[(usize, usize)], cur: usize, dir: [f64; 2], seg: usize) -> f64 {
    let (a, b) = segments[seg];
    let next = if a == cur { b } else { a };
    let d2 = [vertices[next][0] - vertices[cur][0], vertices[next][1] - vertices[cur][1]];
    let dot = dir[0] * d2[0] + dir[1] * d2[1];
    let n1 = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
    let n2 = (d2[0] * d2[0] + d2[1] * d2[1]).sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    (dot / (n1 * n2)).clamp(-1.0, 1.0).acos()
}

/// Node-wise gradient of a 2D field: centred differences in the interior,
/// one-sided at the boundary.
pub fn gradient_field(q: &ScalarField) -> Vec<[f64; 2]> {
    let grid = &q.grid;
    let (n0, n1) = (grid.n[0], grid.n[1]);
    let (h0, h1) = (grid.spacing(0), grid.spacing(1));
    let v = |i: usize, j: usize| q.values[i * n1 + j];
    let mut out = vec![[0.0; 2]; grid.len()];
    for i in 0..n0 {
        for j in 0..n1 {
            let gx = if i == 0 {
                (v(1, j) - v(0, j)) / h0
            } else if i == n0 - 1 {
                (v(n0 - 1, j) - v(n0 - 2, j)) / h0
            } else {
                (v(i + 1, j) - v(i - 1, j)) / (2.0 * h0)
            };
            let gy = if j == 0 {
                (v(i, 1) - v(i, 0)) / h1
            } else if j == n1 - 1 {
                (v(i, n1 - 1) - v(i, n1 - 2)) / h1
            } else {
                (v(i, j + 1) - v(i, j - 1)) / (2.0 * h1)
            };
            out[i * n1 + j] = [gx, gy];
        }
    }
    out
}

fn interp_vec2(grid: &Grid, field: &[[f64; 2]], x: &[f64; 2]) -> [f64; 2] {
    let (i, s) = locate(grid, 0, x[0]);
    let (j, t) = locate(grid, 1, x[1]);
    let n1 = grid.n[1];
    let mut out = [0.0; 2];
    for c in 0..2 {
        let v00 = field[i * n1 + j][c];
        let v10 = field[(i + 1) * n1 + j][c];
        let v01 = field[i * n1 + j + 1][c];
        let v11 = field[(i + 1) * n1 + j + 1][c];
        out[c] = v00 * (1.0 - s) * (1.0 - t)
            + v10 * s * (1.0 - t)
            + v01 * (1.0 - s) * t
            + v11 * s * t;
    }
    out
}

/// Arc-length average of the local transition-layer width 2α/‖∇q‖ along
/// `gamma`, with the gradient interpolated to segment midpoints.
///
/// For a field with constant gradient the average is exact:
///
/// ```
/// use separatrix::geometry::{ews_geom, extract_separatrix};
/// use separatrix::pde::{Grid, ScalarField};
///
/// // q rises linearly across the domain, so ‖∇q‖ = 10/3 everywhere
/// let grid = Grid::default_2d();
/// let values = (0..grid.len()).map(|f| (grid.node(f)[0] - 0.30) / 0.30).collect();
/// let q = ScalarField::new(grid, values);
/// let gamma = extract_separatrix(&q, 0.5)?;
/// assert!((ews_geom(&q, &gamma, 0.1)? - 0.06).abs() < 1e-12);
/// # Ok::<(), separatrix::Error>(())
/// ```
pub fn ews_geom(q: &ScalarField, gamma: &Polyline, alpha: f64) -> Result<f64> {
    assert!(alpha > 0.0 && alpha < 0.5, "alpha must lie in (0, 1/2)");
    if gamma.length() <= 0.0 {
        return Err(Error::DegeneratePolyline("zero-length contour".into()));
    }
    let grad = gradient_field(q);
    let mut acc = 0.0;
    for w in gamma.vertices().windows(2) {
        let mid = [0.5 * (w[0][0] + w[1][0]), 0.5 * (w[0][1] + w[1][1])];
        let g = interp_vec2(&q.grid, &grad, &mid);
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt().max(GRAD_FLOOR);
        acc += (2.0 * alpha / norm) * dist(w[0], w[1]);
    }
    Ok(acc / gamma.length())
}

/// 1D analogue of [`ews_geom`]: the transition-layer width 2α/|q′| at the
/// single q = 1/2 crossing of a one-dimensional committor profile.
pub fn ews_geom_1d(q: &ScalarField, alpha: f64) -> Result<f64> {
    assert_eq!(q.grid.dim(), 1);
    assert!(alpha > 0.0 && alpha < 0.5);
    let grid = &q.grid;
    let h = grid.spacing(0);
    let n = grid.n[0];
    let level = 0.5;
    let deriv = |i: usize| -> f64 {
        if i == 0 {
            (q.values[1] - q.values[0]) / h
        } else if i == n - 1 {
            (q.values[n - 1] - q.values[n - 2]) / h
        } else {
            (q.values[i + 1] - q.values[i - 1]) / (2.0 * h)
        }
    };
    for i in 0..n - 1 {
        let (a, b) = (q.values[i], q.values[i + 1]);
        if (a > level) != (b > level) {
            let t = (level - a) / (b - a);
            let slope = deriv(i) * (1.0 - t) + deriv(i + 1) * t;
            return Ok(2.0 * alpha / slope.abs().max(GRAD_FLOOR));
        }
    }
    Err(Error::LevelNotAttained(level))
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Minimal Euclidean distance from a point to a polyline (exact
/// point-to-segment projection).
pub fn point_polyline_distance(p: [f64; 2], line: &Polyline) -> f64 {
    line.vertices()
        .windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Directed arc-length-averaged minimal distance D(from → to). Used for the
/// MDB (to the deterministic separatrix) and MDS (to the σ_ref separatrix)
/// shift measures; generally D(A→B) ≠ D(B→A).
pub fn curve_distance(from: &Polyline, to: &Polyline) -> f64 {
    let vs = from.vertices();
    let arclen = from.arclen();
    let n = vs.len();
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (k, &v) in vs.iter().enumerate() {
        // vertex weight: half the length of the adjacent segments
        let before = if k == 0 { 0.0 } else { arclen[k] - arclen[k - 1] };
        let after = if k == n - 1 { 0.0 } else { arclen[k + 1] - arclen[k] };
        let w = 0.5 * (before + after);
        acc += w * point_polyline_distance(v, to);
        wsum += w;
    }
    acc / wsum
}

/// Per-vertex transition-layer diagnostics along Γ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidthSample {
    pub point: [f64; 2],
    /// κ₁ = ‖∇q‖ (regularised).
    pub grad_norm: f64,
    /// κ₂ = nᵀ(∇²q)n, the second normal derivative.
    pub kappa2: f64,
    pub w_alpha: f64,
    /// Second-order predictions ξ± = α/κ₁ ∓ κ₂α²/(2κ₁³).
    pub xi_plus_pred: f64,
    pub xi_minus_pred: f64,
    /// Half-widths measured by bisection along the normal ray.
    pub xi_plus_meas: f64,
    pub xi_minus_meas: f64,
    /// False when the normal ray left the domain before crossing the level.
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidthProfile {
    pub alpha: f64,
    pub samples: Vec<WidthSample>,
}

impl WidthProfile {
    pub fn valid_samples(&self) -> impl Iterator<Item = &WidthSample> {
        self.samples.iter().filter(|s| s.valid)
    }
}

/// Hessian entries (q_xx, q_xy, q_yy) at the nodes, with mirror padding at
/// the boundary (consistent with the Neumann discretisation).
fn hessian_field(q: &ScalarField) -> Vec<[f64; 3]> {
    let grid = &q.grid;
    let (n0, n1) = (grid.n[0], grid.n[1]);
    let (h0, h1) = (grid.spacing(0), grid.spacing(1));
    let v = |i: isize, j: isize| -> f64 {
        let i = i.clamp(0, n0 as isize - 1).unsigned_abs().min(n0 - 1);
        let j = j.clamp(0, n1 as isize - 1).unsigned_abs().min(n1 - 1);
        q.values[i * n1 + j]
    };
    let mirror = |k: isize, n: usize| -> isize {
        if k < 0 {
            -k
        } else if k >= n as isize {
            2 * (n as isize - 1) - k
        } else {
            k
        }
    };
    let mut out = vec![[0.0; 3]; grid.len()];
    for i in 0..n0 as isize {
        for j in 0..n1 as isize {
            let im = mirror(i - 1, n0);
            let ip = mirror(i + 1, n0);
            let jm = mirror(j - 1, n1);
            let jp = mirror(j + 1, n1);
            let qxx = (v(ip, j) - 2.0 * v(i, j) + v(im, j)) / (h0 * h0);
            let qyy = (v(i, jp) - 2.0 * v(i, j) + v(i, jm)) / (h1 * h1);
            let qxy = (v(ip, jp) - v(ip, jm) - v(im, jp) + v(im, jm)) / (4.0 * h0 * h1);
            out[(i as usize) * n1 + j as usize] = [qxx, qxy, qyy];
        }
    }
    out
}

fn interp_vec3(grid: &Grid, field: &[[f64; 3]], x: &[f64; 2]) -> [f64; 3] {
    let (i, s) = locate(grid, 0, x[0]);
    let (j, t) = locate(grid, 1, x[1]);
    let n1 = grid.n[1];
    let mut out = [0.0; 3];
    for c in 0..3 {
        let v00 = field[i * n1 + j][c];
        let v10 = field[(i + 1) * n1 + j][c];
        let v01 = field[i * n1 + j + 1][c];
        let v11 = field[(i + 1) * n1 + j + 1][c];
        out[c] = v00 * (1.0 - s) * (1.0 - t)
            + v10 * s * (1.0 - t)
            + v01 * (1.0 - s) * t
            + v11 * s * t;
    }
    out
}

/// Second-order transition-layer analysis along `gamma`: the predicted
/// half-widths from the normal expansion of q and the half-widths measured
/// by root-finding on the interpolated field.
pub fn width_asymmetry(q: &ScalarField, gamma: &Polyline, alpha: f64) -> Result<WidthProfile> {
    assert!(alpha > 0.0 && alpha < 0.5);
    let grad = gradient_field(q);
    let hess = hessian_field(q);
    let grid = &q.grid;
    let step = grid.spacing(0).min(grid.spacing(1)) * 0.5;
    let mut samples = Vec::with_capacity(gamma.vertices().len());
    for &p in gamma.vertices() {
        let g = interp_vec2(grid, &grad, &p);
        let k1 = (g[0] * g[0] + g[1] * g[1]).sqrt().max(GRAD_FLOOR);
        let n = [g[0] / k1, g[1] / k1];
        let h = interp_vec3(grid, &hess, &p);
        let k2 = n[0] * n[0] * h[0] + 2.0 * n[0] * n[1] * h[1] + n[1] * n[1] * h[2];
        let xi_plus_pred = alpha / k1 - k2 * alpha * alpha / (2.0 * k1.powi(3));
        let xi_minus_pred = alpha / k1 + k2 * alpha * alpha / (2.0 * k1.powi(3));
        let level = q.interp(&p);
        let plus = measure_half_width(q, p, n, level + alpha, step);
        let minus = measure_half_width(q, p, [-n[0], -n[1]], level - alpha, step);
        let valid = plus.is_some() && minus.is_some();
        samples.push(WidthSample {
            point: p,
            grad_norm: k1,
            kappa2: k2,
            w_alpha: 2.0 * alpha / k1,
            xi_plus_pred,
            xi_minus_pred,
            xi_plus_meas: plus.unwrap_or(f64::NAN),
            xi_minus_meas: minus.unwrap_or(f64::NAN),
            valid,
        });
    }
    Ok(WidthProfile { alpha, samples })
}

/// Walk along a ray from `p` in direction `dir` until the interpolated field
/// crosses `target`, then bisect. None when the ray exits the domain first.
fn measure_half_width(
    q: &ScalarField,
    p: [f64; 2],
    dir: [f64; 2],
    target: f64,
    step: f64,
) -> Option<f64> {
    let domain = &q.grid.domain;
    let at = |xi: f64| -> Option<f64> {
        let x = [p[0] + xi * dir[0], p[1] + xi * dir[1]];
        if domain.contains(&x) {
            Some(q.interp(&x))
        } else {
            None
        }
    };
    let start = at(0.0)?;
    let rising = target > start;
    let mut lo = 0.0;
    let mut hi = step;
    loop {
        match at(hi) {
            None => return None,
            Some(v) => {
                if (v >= target) == rising {
                    break;
                }
            }
        }
        lo = hi;
        hi += step;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let v = at(mid)?;
        if (v >= target) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DomainBox;
    use crate::pde::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_field() -> ScalarField {
        // q = (T − 0.30)/0.30 on Ω = [0.30, 0.60] × [0, 0.13]
        let grid = Grid::default_2d();
        let values = (0..grid.len()).map(|f| (grid.node(f)[0] - 0.30) / 0.30).collect();
        ScalarField::new(grid, values)
    }

    #[test]
    fn linear_field_contour_is_a_vertical_line() {
        let q = linear_field();
        let gamma = extract_separatrix(&q, 0.5).unwrap();
        let h = q.grid.spacing(0);
        for v in gamma.vertices() {
            assert!((v[0] - 0.45).abs() < h, "vertex {v:?}");
        }
        // spans the filtered domain in u
        assert!(gamma.length() > 0.9 * (0.13 - 2.0 * 0.02 * 0.13));
    }

    #[test]
    fn contour_of_complement_field_coincides() {
        let q = linear_field();
        let mut qc = q.clone();
        for v in &mut qc.values {
            *v = 1.0 - *v;
        }
        let a = extract_separatrix(&q, 0.5).unwrap();
        let b = extract_separatrix(&qc, 0.5).unwrap();
        assert_eq!(a.vertices().len(), b.vertices().len());
        let mut av: Vec<[f64; 2]> = a.vertices().to_vec();
        let mut bv: Vec<[f64; 2]> = b.vertices().to_vec();
        let key = |p: &[f64; 2]| (p[1], p[0]);
        av.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        bv.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        for (x, y) in av.iter().zip(&bv) {
            assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn level_outside_range_is_an_error() {
        let q = linear_field();
        assert!(matches!(extract_separatrix(&q, 1.5), Err(Error::LevelNotAttained(_))));
    }

    #[test]
    fn ews_geom_of_linear_field_is_exact() {
        // ‖∇q‖ = 10/3 everywhere, so EWS_geom = 2·0.1·0.3 = 0.06 exactly
        let q = linear_field();
        let gamma = extract_separatrix(&q, 0.5).unwrap();
        let e = ews_geom(&q, &gamma, 0.1).unwrap();
        assert!((e - 0.06).abs() < 1e-12, "EWS_geom = {e}");
    }

    #[test]
    fn ews_geom_is_linear_in_alpha() {
        let q = linear_field();
        let gamma = extract_separatrix(&q, 0.5).unwrap();
        let e1 = ews_geom(&q, &gamma, 0.05).unwrap();
        let e2 = ews_geom(&q, &gamma, 0.10).unwrap();
        assert!((e2 - 2.0 * e1).abs() < 1e-15);
    }

    #[test]
    fn curve_self_distance_is_zero() {
        let c = Polyline::new(vec![[0.0, 0.0], [1.0, 0.3], [2.0, 0.1]]).unwrap();
        assert_eq!(curve_distance(&c, &c), 0.0);
    }

    #[test]
    fn parallel_segments_distance() {
        let a = Polyline::new(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let b = Polyline::new(vec![[0.0, 0.25], [1.0, 0.25]]).unwrap();
        assert!((curve_distance(&a, &b) - 0.25).abs() < 1e-15);
        assert!((curve_distance(&b, &a) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn directed_distance_is_asymmetric_and_matches_brute_force() {
        // dense vertex sampling so the arc-length-weighted vertex average
        // approximates the continuous line integral
        let dense = |a: [f64; 2], b: [f64; 2], m: usize| -> Polyline {
            let verts: Vec<[f64; 2]> = (0..m)
                .map(|k| {
                    let t = k as f64 / (m - 1) as f64;
                    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
                })
                .collect();
            Polyline::new(verts).unwrap()
        };
        let short = dense([0.0, 1.0], [1.0, 1.0], 1001);
        let long = dense([-5.0, 0.0], [5.0, 0.0], 1001);
        let d_sl = curve_distance(&short, &long);
        let d_ls = curve_distance(&long, &short);
        assert!((d_sl - d_ls).abs() > 0.1, "should be asymmetric: {d_sl} vs {d_ls}");
        // short → long: every point projects straight down, distance 1
        assert!((d_sl - 1.0).abs() < 1e-12);
        // long → short: exact line integral of the point-to-segment distance,
        // (∫₀⁵ √(1+t²) dt + ∫₀¹ 1 dx + ∫₀⁴ √(1+t²) dt) / 10
        let f = |x: f64| 0.5 * (x * (1.0 + x * x).sqrt() + (x + (1.0 + x * x).sqrt()).ln());
        let exact_ls = (f(5.0) + 1.0 + f(4.0)) / 10.0;
        assert!((d_ls - exact_ls).abs() < 2e-3, "{d_ls} vs {exact_ls}");
    }

    #[test]
    fn width_asymmetry_on_linear_field() {
        let q = linear_field();
        let gamma = extract_separatrix(&q, 0.5).unwrap();
        let profile = width_asymmetry(&q, &gamma, 0.1).unwrap();
        let k1 = 10.0 / 3.0;
        for s in profile.valid_samples() {
            assert!(s.kappa2.abs() < 1e-8);
            assert!((s.xi_plus_pred - 0.1 / k1).abs() < 1e-9);
            assert!((s.xi_minus_pred - 0.1 / k1).abs() < 1e-9);
            assert!((s.xi_plus_meas - 0.1 / k1).abs() < 1e-6);
            assert!((s.xi_minus_meas - 0.1 / k1).abs() < 1e-6);
        }
        assert!(profile.samples.iter().filter(|s| s.valid).count() > 0);
    }

    #[test]
    fn width_asymmetry_matches_quadratic_closed_form() {
        // q = 1/2 + c1 (T − 0.45) + c2/2 (T − 0.45)², constant along u:
        // the normal is the T axis, κ₁ = c1 at the contour, κ₂ = c2.
        let grid = Grid::new(DomainBox::new(vec![0.30, 0.0], vec![0.60, 0.13]), vec![601, 61]);
        let (c1, c2) = (4.0, 12.0);
        let values = (0..grid.len())
            .map(|f| {
                let xi = grid.node(f)[0] - 0.45;
                0.5 + c1 * xi + 0.5 * c2 * xi * xi
            })
            .collect();
        let q = ScalarField::new(grid, values);
        let gamma = extract_separatrix(&q, 0.5).unwrap();
        let alpha = 0.05;
        let profile = width_asymmetry(&q, &gamma, alpha).unwrap();
        let expected_asym = -(c2 / c1.powi(3)) * alpha * alpha;
        for s in profile.valid_samples() {
            let meas = s.xi_plus_meas - s.xi_minus_meas;
            assert!(
                (meas - expected_asym).abs() < 3.0 * alpha.powi(3),
                "asymmetry {meas} vs {expected_asym}"
            );
            // total width defect is O(α³)
            let defect = (s.xi_plus_meas + s.xi_minus_meas) - 2.0 * alpha / s.grad_norm;
            assert!(defect.abs() < 5.0 * alpha.powi(3));
        }
    }

    #[test]
    fn halving_alpha_shrinks_width_defect_cubically() {
        let grid = Grid::new(DomainBox::new(vec![0.30, 0.0], vec![0.60, 0.13]), vec![1201, 31]);
        let (c1, c2, c3) = (4.0, 12.0, 60.0);
        let values = (0..grid.len())
            .map(|f| {
                let xi = grid.node(f)[0] - 0.45;
                0.5 + c1 * xi + 0.5 * c2 * xi * xi + c3 * xi * xi * xi
            })
            .collect();
        let q = ScalarField::new(grid, values);
        let gamma = extract_separatrix(&q, 0.5).unwrap();
        let defect = |alpha: f64| -> f64 {
            let profile = width_asymmetry(&q, &gamma, alpha).unwrap();
            let s = profile.valid_samples().next().unwrap();
            ((s.xi_plus_meas + s.xi_minus_meas) - 2.0 * alpha / s.grad_norm).abs()
        };
        let d1 = defect(0.2);
        let d2 = defect(0.1);
        let ratio = d1 / d2;
        assert!(ratio > 5.0 && ratio < 12.0, "defect ratio {ratio}, expected ≈ 8");
    }

    #[test]
    fn polyline_invariants_hold_for_random_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(2..40);
            let vs: Vec<[f64; 2]> =
                (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
            if let Ok(pl) = Polyline::new(vs) {
                let a = pl.arclen();
                assert!(a.windows(2).all(|w| w[1] > w[0]));
                assert!(pl.vertices().len() >= 2);
            }
        }
    }
}
