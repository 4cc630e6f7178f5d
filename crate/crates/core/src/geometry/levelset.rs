//! Gridded level-set functions, evaluated as cubic B-splines whose
//! coefficients are the grid values, and a moving set described by a
//! linear blend of two such functions.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::contour::{Contour, Polyline};
use super::set::{edges, segment_distance, signed_area};
use super::{GeometryError, SetState, Vec2};

/// Values on a regular `nx * ny` lattice, stored row-major with
/// `values[j * nx + i]` at `origin + (i * hx, j * hy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    origin: Vec2,
    spacing: [f64; 2],
    values: Vec<f64>,
    /// spline coefficients: values passed through the (-1, 8, -1) / 6
    /// quasi-interpolation filter in each direction
    coefs: Vec<f64>,
}

/// On-disk header; `data` names a file of little-endian f64 values,
/// resolved relative to the header's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub dims: [usize; 2],
    pub spacing: [f64; 2],
    pub origin: [f64; 2],
    pub data: String,
}

/// Cubic B-spline basis weights and their first two derivatives at
/// fractional offset `f`, for coefficients `i-1 .. i+2`.
fn basis(f: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let g = 1.0 - f;
    let w = [
        g * g * g / 6.0,
        (3.0 * f * f * f - 6.0 * f * f + 4.0) / 6.0,
        (-3.0 * f * f * f + 3.0 * f * f + 3.0 * f + 1.0) / 6.0,
        f * f * f / 6.0,
    ];
    let d = [
        -g * g / 2.0,
        (3.0 * f * f - 4.0 * f) / 2.0,
        (-3.0 * f * f + 2.0 * f + 1.0) / 2.0,
        f * f / 2.0,
    ];
    let dd = [g, 3.0 * f - 2.0, -3.0 * f + 1.0, f];
    (w, d, dd)
}

/// Value, gradient and Hessian `[xx, xy, yy]`.
pub type Jet = (f64, Vec2, [f64; 3]);

impl Grid {
    pub fn new(
        nx: usize,
        ny: usize,
        origin: Vec2,
        spacing: [f64; 2],
        values: Vec<f64>,
    ) -> Result<Self, GeometryError> {
        if nx < 4 || ny < 4 {
            return Err(GeometryError::InvalidTube(format!(
                "grid {nx}x{ny} is smaller than 4x4"
            )));
        }
        if values.len() != nx * ny {
            return Err(GeometryError::InvalidTube(format!(
                "grid expects {} values, got {}",
                nx * ny,
                values.len()
            )));
        }
        if !(spacing[0] > 0.0 && spacing[1] > 0.0) || !origin.is_finite() {
            return Err(GeometryError::InvalidTube(
                "grid spacing must be positive".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let coefs = prefilter(&values, nx, ny);
        Ok(Grid {
            nx,
            ny,
            origin,
            spacing,
            values,
            coefs,
        })
    }

    pub fn from_fn(
        nx: usize,
        ny: usize,
        origin: Vec2,
        spacing: [f64; 2],
        f: impl Fn(Vec2) -> f64 + Sync,
    ) -> Result<Self, GeometryError> {
        let values = (0..nx * ny)
            .into_par_iter()
            .map(|k| {
                f(origin + Vec2::new((k % nx) as f64 * spacing[0], (k / nx) as f64 * spacing[1]))
            })
            .collect();
        Grid::new(nx, ny, origin, spacing, values)
    }

    /// Exact signed distance to the boundary polygon of `set` (negative
    /// inside), sampled on a square lattice covering `[lo, hi]`.
    pub fn signed_distance(
        set: &SetState,
        lo: Vec2,
        hi: Vec2,
        spacing: f64,
    ) -> Result<Self, GeometryError> {
        let nx = ((hi.x - lo.x) / spacing).ceil() as usize + 1;
        let ny = ((hi.y - lo.y) / spacing).ceil() as usize + 1;
        let poly = set.boundary();
        Grid::from_fn(nx, ny, lo, [spacing, spacing], |p| {
            let d = edges(poly)
                .map(|(a, b)| segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min);
            if super::set::polygon_contains(poly, p) {
                -d
            } else {
                d
            }
        })
    }

    /// `passes` applications of the separable [1 2 1] / 4 filter, with
    /// linear extension at the edges.
    pub fn smoothed(&self, passes: usize) -> Grid {
        let mut v = self.values.clone();
        let (nx, ny) = (self.nx, self.ny);
        for _ in 0..passes {
            let mut w = v.clone();
            for j in 0..ny {
                for i in 0..nx {
                    let at = |ii: i64| -> f64 {
                        extend(&v, nx, ii, j as i64, |k, jj| jj as usize * nx + k as usize)
                    };
                    let c = v[j * nx + i];
                    w[j * nx + i] = 0.25 * at(i as i64 - 1) + 0.5 * c + 0.25 * at(i as i64 + 1);
                }
            }
            for j in 0..ny {
                for i in 0..nx {
                    let at = |jj: i64| -> f64 {
                        extend(&w, ny, jj, i as i64, |k, ii| k as usize * nx + ii as usize)
                    };
                    v[j * nx + i] =
                        0.25 * at(j as i64 - 1) + 0.5 * w[j * nx + i] + 0.25 * at(j as i64 + 1);
                }
            }
        }
        let coefs = prefilter(&v, nx, ny);
        Grid {
            values: v,
            coefs,
            ..self.clone()
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 * self.spacing[0], j as f64 * self.spacing[1])
    }

    pub fn same_lattice(&self, o: &Grid) -> bool {
        self.nx == o.nx && self.ny == o.ny && self.origin == o.origin && self.spacing == o.spacing
    }

    /// Coefficient with linear extrapolation outside the lattice.
    fn coef(&self, i: i64, j: i64) -> f64 {
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let ci = i.clamp(0, nx - 1);
        let cj = j.clamp(0, ny - 1);
        let c = &self.coefs;
        let base = c[(cj * nx + ci) as usize];
        let mut v = base;
        if i != ci {
            let inner = if i < 0 { ci + 1 } else { ci - 1 };
            v += (base - c[(cj * nx + inner) as usize]) * (i - ci).abs() as f64;
        }
        if j != cj {
            let inner = if j < 0 { cj + 1 } else { cj - 1 };
            v += (base - c[(inner * nx + ci) as usize]) * (j - cj).abs() as f64;
        }
        v
    }

    /// Spline value, gradient and Hessian at `p`.
    pub fn jet(&self, p: Vec2) -> Jet {
        let u = (p.x - self.origin.x) / self.spacing[0];
        let v = (p.y - self.origin.y) / self.spacing[1];
        let (iu, iv) = (u.floor(), v.floor());
        let (wx, dx, ddx) = basis(u - iu);
        let (wy, dy, ddy) = basis(v - iv);
        let (i0, j0) = (iu as i64 - 1, iv as i64 - 1);
        let (mut f, mut fx, mut fy, mut fxx, mut fxy, mut fyy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for b in 0..4 {
            for a in 0..4 {
                let c = self.coef(i0 + a as i64, j0 + b as i64);
                f += c * wx[a] * wy[b];
                fx += c * dx[a] * wy[b];
                fy += c * wx[a] * dy[b];
                fxx += c * ddx[a] * wy[b];
                fxy += c * dx[a] * dy[b];
                fyy += c * wx[a] * ddy[b];
            }
        }
        let (hx, hy) = (self.spacing[0], self.spacing[1]);
        (
            f,
            Vec2::new(fx / hx, fy / hy),
            [fxx / (hx * hx), fxy / (hx * hy), fyy / (hy * hy)],
        )
    }

    pub fn value(&self, p: Vec2) -> f64 {
        self.jet(p).0
    }

    /// Writes `<header>` as JSON and the values next to it.
    pub fn write(&self, header_path: &Path) -> Result<(), GeometryError> {
        let data_name = format!(
            "{}.bin",
            header_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("grid")
        );
        let header = GridHeader {
            dims: [self.nx, self.ny],
            spacing: self.spacing,
            origin: [self.origin.x, self.origin.y],
            data: data_name.clone(),
        };
        let dir = header_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let io = |e: std::io::Error| GeometryError::Io(e.to_string());
        fs::write(dir.join(&data_name), bytes).map_err(io)?;
        let json =
            serde_json::to_string_pretty(&header).map_err(|e| GeometryError::Io(e.to_string()))?;
        fs::write(header_path, json).map_err(io)
    }

    pub fn read(header_path: &Path) -> Result<Self, GeometryError> {
        let text = fs::read_to_string(header_path)
            .map_err(|e| GeometryError::Io(format!("{}: {e}", header_path.display())))?;
        let header: GridHeader = serde_json::from_str(&text)
            .map_err(|e| GeometryError::Io(format!("{}: {e}", header_path.display())))?;
        let dir: PathBuf = header_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let data_path = dir.join(&header.data);
        let bytes = fs::read(&data_path)
            .map_err(|e| GeometryError::Io(format!("{}: {e}", data_path.display())))?;
        let [nx, ny] = header.dims;
        if bytes.len() != nx * ny * 8 {
            return Err(GeometryError::Io(format!(
                "{}: expected {} bytes, found {}",
                data_path.display(),
                nx * ny * 8,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Grid::new(nx, ny, Vec2::from(header.origin), header.spacing, values)
    }
}

fn extend(v: &[f64], n: usize, k: i64, other: i64, idx: impl Fn(i64, i64) -> usize) -> f64 {
    let n = n as i64;
    if k < 0 {
        2.0 * v[idx(0, other)] - v[idx(1, other)]
    } else if k >= n {
        2.0 * v[idx(n - 1, other)] - v[idx(n - 2, other)]
    } else {
        v[idx(k, other)]
    }
}

/// Separable quasi-interpolation prefilter; reproduces cubics, so the
/// spline matches smooth data to fourth order.
fn prefilter(values: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let mut w = values.to_vec();
    for j in 0..ny {
        for i in 0..nx {
            let at = |ii: i64| {
                extend(values, nx, ii, j as i64, |k, jj| {
                    jj as usize * nx + k as usize
                })
            };
            w[j * nx + i] = (8.0 * values[j * nx + i] - at(i as i64 - 1) - at(i as i64 + 1)) / 6.0;
        }
    }
    let mut out = w.clone();
    for j in 0..ny {
        for i in 0..nx {
            let at = |jj: i64| extend(&w, ny, jj, i as i64, |k, ii| k as usize * nx + ii as usize);
            out[j * nx + i] = (8.0 * w[j * nx + i] - at(j as i64 - 1) - at(j as i64 + 1)) / 6.0;
        }
    }
    out
}

/// Moving set `{x : psi(t, x) <= 0}` with
/// `psi(t) = (1 - t/T) psi0 + (t/T) psi1`.
#[derive(Debug, Clone)]
pub struct LevelSetTube {
    psi0: Grid,
    psi1: Grid,
    horizon: f64,
}

impl LevelSetTube {
    pub fn new(psi0: Grid, psi1: Grid, horizon: f64) -> Result<Self, GeometryError> {
        if !psi0.same_lattice(&psi1) {
            return Err(GeometryError::InvalidTube(
                "endpoint grids must share one lattice".into(),
            ));
        }
        if !(horizon > 0.0) {
            return Err(GeometryError::InvalidTube(
                "horizon must be positive".into(),
            ));
        }
        Ok(LevelSetTube {
            psi0,
            psi1,
            horizon,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn endpoints(&self) -> (&Grid, &Grid) {
        (&self.psi0, &self.psi1)
    }

    fn blend(&self, t: f64) -> f64 {
        (t / self.horizon).clamp(0.0, 1.0)
    }

    pub fn jet(&self, t: f64, p: Vec2) -> Jet {
        let s = self.blend(t);
        let (f0, g0, h0) = self.psi0.jet(p);
        if s == 0.0 {
            return (f0, g0, h0);
        }
        let (f1, g1, h1) = self.psi1.jet(p);
        let m = |a: f64, b: f64| (1.0 - s) * a + s * b;
        (
            m(f0, f1),
            g0 * (1.0 - s) + g1 * s,
            [m(h0[0], h1[0]), m(h0[1], h1[1]), m(h0[2], h1[2])],
        )
    }

    pub fn value(&self, t: f64, p: Vec2) -> f64 {
        let s = self.blend(t);
        (1.0 - s) * self.psi0.value(p) + s * self.psi1.value(p)
    }

    pub fn grad(&self, t: f64, p: Vec2) -> Vec2 {
        self.jet(t, p).1
    }

    /// Time derivative of psi (constant in t).
    pub fn time_derivative(&self, p: Vec2) -> f64 {
        (self.psi1.value(p) - self.psi0.value(p)) / self.horizon
    }

    /// A few Newton steps along the gradient onto the zero level.
    pub fn snap(&self, t: f64, p: Vec2) -> Vec2 {
        let mut q = p;
        for _ in 0..4 {
            let (f, g, _) = self.jet(t, q);
            let g2 = g.norm_sq();
            if g2 < 1e-24 {
                break;
            }
            q -= g * (f / g2);
            if f.abs() < 1e-15 {
                break;
            }
        }
        q
    }

    /// Number of lattice nodes where `psi1 < psi0`. Zero means the set is
    /// nonincreasing in time: the spline weights are nonnegative, so the
    /// inequality between coefficients carries over to every point.
    pub fn monotonicity_violations(&self) -> usize {
        self.psi0
            .values
            .iter()
            .zip(&self.psi1.values)
            .filter(|(a, b)| b < a)
            .count()
    }

    /// Zero-level contour at time `t`: the longest closed loop found by
    /// marching squares on spline values at lattice nodes, oriented
    /// counterclockwise and snapped onto the level set.
    pub fn contour(self: &Arc<Self>, t: f64) -> Result<Contour, GeometryError> {
        let loop_pts = self.marching_squares(t)?;
        let mut pts: Vec<Vec2> = loop_pts.into_iter().map(|p| self.snap(t, p)).collect();
        pts.dedup_by(|a, b| a.dist(*b) < 1e-14);
        if pts.len() < 3 {
            return Err(GeometryError::Contour(
                "zero level has fewer than 3 vertices".into(),
            ));
        }
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        let n = pts.len();
        // refine and equalize spacing before handing out arclength parameters
        let raw = Polyline::new(pts, None);
        let c = Contour::Polyline(raw);
        let even: Vec<Vec2> = c
            .sample(4 * n, 0.0)
            .into_iter()
            .map(|p| self.snap(t, p))
            .collect();
        Ok(Contour::Polyline(Polyline::new(
            even,
            Some((Arc::clone(self), t)),
        )))
    }

    fn marching_squares(&self, t: f64) -> Result<Vec<Vec2>, GeometryError> {
        let (nx, ny) = self.psi0.dims();
        let vals: Vec<f64> = (0..nx * ny)
            .into_par_iter()
            .map(|k| self.value(t, self.psi0.node(k % nx, k / nx)))
            .collect();
        let val = |i: usize, j: usize| vals[j * nx + i];
        let inside = |i: usize, j: usize| val(i, j) < 0.0;
        let h_id = |i: usize, j: usize| 2 * (j * nx + i);
        let v_id = |i: usize, j: usize| 2 * (j * nx + i) + 1;
        let crossing = |id: usize| -> Vec2 {
            let (k, vert) = (id / 2, id % 2 == 1);
            let (i, j) = (k % nx, k / nx);
            let (i2, j2) = if vert { (i, j + 1) } else { (i + 1, j) };
            let (a, b) = (val(i, j), val(i2, j2));
            let u = a / (a - b);
            self.psi0.node(i, j).lerp(self.psi0.node(i2, j2), u)
        };
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut link = |a: usize, b: usize| {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        };
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let (a, b, c, d) = (
                    inside(i, j),
                    inside(i + 1, j),
                    inside(i + 1, j + 1),
                    inside(i, j + 1),
                );
                // bottom, right, top, left
                let e = [h_id(i, j), v_id(i + 1, j), h_id(i, j + 1), v_id(i, j)];
                let cross = [a != b, b != c, d != c, a != d];
                let ids: Vec<usize> = (0..4).filter(|&k| cross[k]).map(|k| e[k]).collect();
                match ids.len() {
                    0 => {}
                    2 => link(ids[0], ids[1]),
                    4 => {
                        let center =
                            0.25 * (val(i, j) + val(i + 1, j) + val(i + 1, j + 1) + val(i, j + 1));
                        // a and c share a sign here; join them through the
                        // center when the center has that sign as well
                        let ac_joined = (center < 0.0) == a;
                        if ac_joined {
                            link(e[0], e[1]);
                            link(e[2], e[3]);
                        } else {
                            link(e[0], e[3]);
                            link(e[1], e[2]);
                        }
                    }
                    _ => unreachable!(),
                }
            }
        }
        if adj.is_empty() {
            return Err(GeometryError::Contour(format!(
                "no zero crossing at t = {t}"
            )));
        }
        let mut keys: Vec<usize> = adj.keys().copied().collect();
        keys.sort_unstable();
        let mut seen: HashMap<usize, bool> = HashMap::new();
        let mut best: Vec<Vec2> = Vec::new();
        let mut best_len = -1.0;
        for &start in &keys {
            if seen.contains_key(&start) {
                continue;
            }
            let mut chain = vec![start];
            seen.insert(start, true);
            let mut prev = usize::MAX;
            let mut cur = start;
            let closed = loop {
                let next = adj[&cur]
                    .iter()
                    .copied()
                    .find(|&n| n != prev && !seen.contains_key(&n));
                match next {
                    Some(n) => {
                        seen.insert(n, true);
                        chain.push(n);
                        prev = cur;
                        cur = n;
                    }
                    None => break adj[&cur].contains(&start) && chain.len() > 2,
                }
            };
            if !closed {
                continue;
            }
            let pts: Vec<Vec2> = chain.iter().map(|&id| crossing(id)).collect();
            let len: f64 = edges(&pts).map(|(a, b)| a.dist(b)).sum();
            if len > best_len {
                best_len = len;
                best = pts;
            }
        }
        if best.is_empty() {
            return Err(GeometryError::Contour(format!(
                "zero level at t = {t} does not close inside the grid"
            )));
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle_grid(r: f64) -> Grid {
        Grid::from_fn(81, 81, Vec2::new(-2.0, -2.0), [0.05, 0.05], |p| {
            p.norm() - r
        })
        .unwrap()
    }

    #[test]
    fn spline_reproduces_linear_functions() {
        let g = Grid::from_fn(10, 12, Vec2::new(-1.0, 0.5), [0.3, 0.2], |p| {
            2.0 * p.x - 3.0 * p.y + 1.0
        })
        .unwrap();
        for p in [
            Vec2::new(0.1, 1.0),
            Vec2::new(-3.0, 5.0),
            Vec2::new(2.5, 0.0),
        ] {
            let (f, gr, h) = g.jet(p);
            assert!((f - (2.0 * p.x - 3.0 * p.y + 1.0)).abs() < 1e-12);
            assert!(gr.dist(Vec2::new(2.0, -3.0)) < 1e-12);
            assert!(h.iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn spline_derivatives_match_finite_differences() {
        let g = Grid::from_fn(40, 40, Vec2::new(-1.0, -1.0), [0.05, 0.05], |p| {
            (3.0 * p.x).sin() * p.y.cos()
        })
        .unwrap();
        let p = Vec2::new(0.123, -0.271);
        let (_, gr, h) = g.jet(p);
        let e = 1e-6;
        let fx = (g.value(p + Vec2::new(e, 0.0)) - g.value(p - Vec2::new(e, 0.0))) / (2.0 * e);
        let fy = (g.value(p + Vec2::new(0.0, e)) - g.value(p - Vec2::new(0.0, e))) / (2.0 * e);
        assert!((gr.x - fx).abs() < 1e-6 && (gr.y - fy).abs() < 1e-6);
        let gxy = (g.jet(p + Vec2::new(0.0, e)).1.x - g.jet(p - Vec2::new(0.0, e)).1.x) / (2.0 * e);
        assert!((h[1] - gxy).abs() < 1e-5);
    }

    #[test]
    fn circle_contour_is_accurate() {
        let tube = Arc::new(LevelSetTube::new(circle_grid(1.0), circle_grid(0.5), 1.0).unwrap());
        assert_eq!(tube.monotonicity_violations(), 0);
        for (t, r) in [(0.0, 1.0), (0.5, 0.75), (1.0, 0.5)] {
            let c = tube.contour(t).unwrap();
            assert!(
                (c.perimeter() - 2.0 * PI * r).abs() < 1e-3,
                "t = {t}: {}",
                c.perimeter()
            );
            for k in 0..50 {
                let p = c.point_at(k as f64 / 50.0);
                assert!((p.norm() - r).abs() < 2e-5, "{}", p.norm() - r);
                let n = c.normal_at(k as f64 / 50.0);
                assert!(n.dot(p / p.norm()) > 0.999);
            }
        }
    }

    #[test]
    fn smoothing_preserves_linear_data() {
        let g = Grid::from_fn(8, 8, Vec2::ZERO, [1.0, 1.0], |p| p.x + 2.0 * p.y).unwrap();
        let s = g.smoothed(3);
        for (a, b) in g.values().iter().zip(s.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = circle_grid(0.7);
        let path = dir.path().join("psi.json");
        g.write(&path).unwrap();
        assert_eq!(Grid::read(&path).unwrap(), g);
    }
}
