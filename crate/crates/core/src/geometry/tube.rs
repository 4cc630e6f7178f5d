use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Contour, GeometryError, LevelSetTube, Vec2};

/// Values that can be linearly interpolated along a path.
pub trait PathValue: Copy {
    fn mix(self, o: Self, s: f64) -> Self;
    fn gap(self, o: Self) -> f64;
}

impl PathValue for f64 {
    fn mix(self, o: f64, s: f64) -> f64 {
        self + (o - self) * s
    }
    fn gap(self, o: f64) -> f64 {
        (o - self).abs()
    }
}

impl PathValue for Vec2 {
    fn mix(self, o: Vec2, s: f64) -> Vec2 {
        self.lerp(o, s)
    }
    fn gap(self, o: Vec2) -> f64 {
        self.dist(o)
    }
}

/// Piecewise-linear function of time through `(t, value)` knots, held
/// constant outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path<T> {
    knots: Vec<(f64, T)>,
}

impl<T: PathValue> Path<T> {
    pub fn constant(v: T) -> Self {
        Path {
            knots: vec![(0.0, v)],
        }
    }

    pub fn linear(t0: f64, v0: T, t1: f64, v1: T) -> Self {
        Path {
            knots: vec![(t0, v0), (t1, v1)],
        }
    }

    pub fn from_knots(knots: Vec<(f64, T)>) -> Result<Self, GeometryError> {
        if knots.is_empty() {
            return Err(GeometryError::InvalidTube(
                "path needs at least one knot".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(GeometryError::InvalidTube(
                "path knot times must increase".into(),
            ));
        }
        Ok(Path { knots })
    }

    pub fn knots(&self) -> &[(f64, T)] {
        &self.knots
    }

    pub fn at(&self, t: f64) -> T {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            if t <= w[1].0 {
                let s = (t - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1.mix(w[1].1, s);
            }
        }
        k[k.len() - 1].1
    }

    /// Largest rate of change over the knot intervals.
    pub fn max_rate(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| w[0].1.gap(w[1].1) / (w[1].0 - w[0].0))
            .fold(0.0, f64::max)
    }

    fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.iter().map(|k| k.0)
    }
}

/// A time-dependent closed set `V(t) = {x : psi(t, x) <= 0}` with a smooth
/// level function.
#[derive(Debug, Clone)]
pub enum MovingTube {
    /// `psi = |x - c(t)| - R(t)`
    Ball {
        center: Path<Vec2>,
        radius: Path<f64>,
        horizon: f64,
    },
    /// `psi = |A(t)^{-1} R(-angle) (x - c(t))| - 1` with `A = diag(a, b)`
    Ellipse {
        center: Path<Vec2>,
        a: Path<f64>,
        b: Path<f64>,
        angle: f64,
        horizon: f64,
    },
    LevelSet(Arc<LevelSetTube>),
}

/// Signed distance (negative inside), the nearest boundary point and the
/// outward unit normal there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryProfile {
    pub distance: f64,
    pub foot: Vec2,
    pub normal: Vec2,
}

const COARSE_SAMPLES: usize = 256;
const NEWTON_MAX: usize = 50;

impl MovingTube {
    pub fn ball(center: Vec2, radius: f64, horizon: f64) -> Self {
        MovingTube::Ball {
            center: Path::constant(center),
            radius: Path::constant(radius),
            horizon,
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            MovingTube::Ball { horizon, .. } | MovingTube::Ellipse { horizon, .. } => *horizon,
            MovingTube::LevelSet(l) => l.horizon(),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let h = self.horizon();
        if !(h > 0.0 && h.is_finite()) {
            return Err(GeometryError::InvalidTube(
                "horizon must be positive".into(),
            ));
        }
        let positive = |p: &Path<f64>, name: &str| {
            if p.knots().iter().all(|k| k.1 > 0.0 && k.1.is_finite()) {
                Ok(())
            } else {
                Err(GeometryError::InvalidTube(format!(
                    "{name} must stay positive"
                )))
            }
        };
        match self {
            MovingTube::Ball { radius, .. } => positive(radius, "radius"),
            MovingTube::Ellipse { a, b, .. } => {
                positive(a, "semi-axis a")?;
                positive(b, "semi-axis b")
            }
            MovingTube::LevelSet(_) => Ok(()),
        }
    }

    /// Level function value, gradient and Hessian `[xx, xy, yy]`.
    pub fn jet(&self, t: f64, x: Vec2) -> (f64, Vec2, [f64; 3]) {
        match self {
            MovingTube::Ball { center, radius, .. } => {
                let d = x - center.at(t);
                let r = d.norm();
                if r == 0.0 {
                    return (-radius.at(t), Vec2::ZERO, [0.0; 3]);
                }
                let u = d / r;
                let h = [(1.0 - u.x * u.x) / r, -u.x * u.y / r, (1.0 - u.y * u.y) / r];
                (r - radius.at(t), u, h)
            }
            MovingTube::Ellipse {
                center,
                a,
                b,
                angle,
                ..
            } => {
                let (a, b) = (a.at(t), b.at(t));
                let q = (x - center.at(t)).rotate(-angle);
                let (u, v) = (q.x / a, q.y / b);
                let r = u.hypot(v);
                if r == 0.0 {
                    return (-1.0, Vec2::ZERO, [0.0; 3]);
                }
                // derivatives in the rotated frame
                let gx = u / (a * r);
                let gy = v / (b * r);
                let hxx = (1.0 / (a * a) - gx * gx) / r;
                let hxy = -gx * gy / r;
                let hyy = (1.0 / (b * b) - gy * gy) / r;
                let g = Vec2::new(gx, gy).rotate(*angle);
                let (s, c) = angle.sin_cos();
                // R H R^T
                let rxx = c * c * hxx - 2.0 * s * c * hxy + s * s * hyy;
                let rxy = s * c * (hxx - hyy) + (c * c - s * s) * hxy;
                let ryy = s * s * hxx + 2.0 * s * c * hxy + c * c * hyy;
                (r - 1.0, g, [rxx, rxy, ryy])
            }
            MovingTube::LevelSet(l) => l.jet(t, x),
        }
    }

    pub fn psi(&self, t: f64, x: Vec2) -> f64 {
        match self {
            MovingTube::LevelSet(l) => l.value(t, x),
            _ => self.jet(t, x).0,
        }
    }

    pub fn grad_psi(&self, t: f64, x: Vec2) -> Vec2 {
        self.jet(t, x).1
    }

    pub fn contains(&self, t: f64, x: Vec2) -> bool {
        self.psi(t, x) <= 0.0
    }

    pub fn contour(&self, t: f64) -> Result<Contour, GeometryError> {
        match self {
            MovingTube::Ball { center, radius, .. } => Ok(Contour::Circle {
                center: center.at(t),
                radius: radius.at(t),
            }),
            MovingTube::Ellipse {
                center,
                a,
                b,
                angle,
                ..
            } => Ok(Contour::ellipse(center.at(t), a.at(t), b.at(t), *angle)),
            MovingTube::LevelSet(l) => l.contour(t),
        }
    }

    /// Inner reach: interior points closer to the boundary than this have a
    /// unique nearest boundary point.
    pub fn reach_inside(&self, t: f64) -> Result<f64, GeometryError> {
        match self {
            MovingTube::Ball { radius, .. } => Ok(radius.at(t)),
            MovingTube::Ellipse { a, b, .. } => {
                let (a, b) = (a.at(t), b.at(t));
                let (big, small) = (a.max(b), a.min(b));
                Ok(small * small / big)
            }
            MovingTube::LevelSet(_) => self.curvature_reach(t),
        }
    }

    /// Outer reach; infinite for convex sets.
    pub fn reach_outside(&self, t: f64) -> Result<f64, GeometryError> {
        match self {
            MovingTube::LevelSet(_) => self.curvature_reach(t),
            _ => Ok(f64::INFINITY),
        }
    }

    /// Reciprocal of the largest boundary curvature, sampled.
    fn curvature_reach(&self, t: f64) -> Result<f64, GeometryError> {
        let c = self.contour(t)?;
        let mut kmax = 0.0f64;
        for p in c.sample(COARSE_SAMPLES, 0.5) {
            let (_, g, h) = self.jet(t, p);
            let g3 = g.norm().powi(3);
            if g3 > 0.0 {
                let k = (h[0] * g.y * g.y - 2.0 * h[1] * g.x * g.y + h[2] * g.x * g.x) / g3;
                kmax = kmax.max(k.abs());
            }
        }
        Ok(if kmax > 0.0 {
            1.0 / kmax
        } else {
            f64::INFINITY
        })
    }

    /// Smallest `|grad psi|` over sampled boundary points.
    pub fn min_boundary_gradient(&self, t: f64) -> Result<f64, GeometryError> {
        let c = self.contour(t)?;
        Ok(c.sample(COARSE_SAMPLES, 0.5)
            .into_iter()
            .map(|p| self.grad_psi(t, p).norm())
            .fold(f64::INFINITY, f64::min))
    }

    /// Nearest point of the boundary, by Newton iteration on the optimality
    /// system `y - x + lambda grad psi(y) = 0, psi(y) = 0` started from the
    /// closest coarse boundary samples.
    pub fn boundary_foot(&self, t: f64, x: Vec2) -> Result<Vec2, GeometryError> {
        if let MovingTube::Ball { center, radius, .. } = self {
            let c = center.at(t);
            let r = radius.at(t);
            return match (x - c).normalized() {
                Some(u) => Ok(c + u * r),
                None => Err(GeometryError::OutsideReach {
                    distance: r,
                    reach: r,
                }),
            };
        }
        let contour = self.contour(t)?;
        let coarse = contour.sample(COARSE_SAMPLES, 0.0);
        let mut order: Vec<usize> = (0..coarse.len()).collect();
        order.sort_by(|&i, &j| x.dist(coarse[i]).total_cmp(&x.dist(coarse[j])));
        let coarse_best = x.dist(coarse[order[0]]);
        let scale = 1.0 + x.norm();
        let mut best: Option<(f64, Vec2)> = None;
        let mut last_fail = (0usize, f64::INFINITY);
        for &start in order.iter().take(4) {
            match self.newton_foot(t, x, coarse[start], scale) {
                Ok(y) => {
                    let d = x.dist(y);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, y));
                    }
                    if d <= coarse_best + 1e-12 * scale {
                        break;
                    }
                }
                Err(f) => last_fail = f,
            }
        }
        best.map(|(_, y)| y).ok_or(GeometryError::ProjectionFailed {
            iterations: last_fail.0,
            residual: last_fail.1,
            x: x.x,
            y: x.y,
            t,
        })
    }

    fn newton_foot(&self, t: f64, x: Vec2, y0: Vec2, scale: f64) -> Result<Vec2, (usize, f64)> {
        let mut y = y0;
        let g0 = self.grad_psi(t, y);
        let mut lam = if g0.norm_sq() > 0.0 {
            (x - y).dot(g0) / g0.norm_sq()
        } else {
            0.0
        };
        let residual = |y: Vec2, lam: f64| -> (f64, [f64; 3], Vec2, [f64; 3]) {
            let (f, g, h) = self.jet(t, y);
            let r = [y.x - x.x + lam * g.x, y.y - x.y + lam * g.y, f];
            ((r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt(), r, g, h)
        };
        let (mut res, mut r, mut g, mut h) = residual(y, lam);
        for it in 0..NEWTON_MAX {
            if res < 1e-13 * scale {
                return Ok(y);
            }
            let m = [
                [1.0 + lam * h[0], lam * h[1], g.x],
                [lam * h[1], 1.0 + lam * h[2], g.y],
                [g.x, g.y, 0.0],
            ];
            let Some(step) = solve3(m, [-r[0], -r[1], -r[2]]) else {
                return Err((it, res));
            };
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..20 {
                let yn = y + Vec2::new(step[0], step[1]) * alpha;
                let ln = lam + step[2] * alpha;
                let (rn, rr, gn, hn) = residual(yn, ln);
                if rn < res || rn < 1e-13 * scale {
                    (y, lam, res, r, g, h) = (yn, ln, rn, rr, gn, hn);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return if res < 1e-10 * scale {
                    Ok(y)
                } else {
                    Err((it, res))
                };
            }
        }
        if res < 1e-10 * scale {
            Ok(y)
        } else {
            Err((NEWTON_MAX, res))
        }
    }

    /// Euclidean projection onto `V(t)`; points inside are returned as is.
    pub fn project_onto(&self, t: f64, x: Vec2) -> Result<Vec2, GeometryError> {
        if self.psi(t, x) <= 0.0 {
            return Ok(x);
        }
        self.boundary_foot(t, x)
    }

    /// Signed distance, foot and outward normal, for points within the
    /// reach of the boundary.
    pub fn signed_distance_profile(
        &self,
        t: f64,
        x: Vec2,
    ) -> Result<BoundaryProfile, GeometryError> {
        let inside = self.psi(t, x) <= 0.0;
        let foot = self.boundary_foot(t, x)?;
        let d = x.dist(foot);
        let reach = if inside {
            self.reach_inside(t)?
        } else {
            self.reach_outside(t)?
        };
        if d >= reach {
            return Err(GeometryError::OutsideReach { distance: d, reach });
        }
        let normal =
            self.grad_psi(t, foot)
                .normalized()
                .ok_or(GeometryError::ProjectionFailed {
                    iterations: 0,
                    residual: 0.0,
                    x: x.x,
                    y: x.y,
                    t,
                })?;
        Ok(BoundaryProfile {
            distance: if inside { -d } else { d },
            foot,
            normal,
        })
    }

    /// Upper bound on the normal speed of the boundary, i.e. a Lipschitz
    /// constant of `t -> V(t)` in the Hausdorff distance.
    pub fn speed_bound(&self) -> Result<f64, GeometryError> {
        match self {
            MovingTube::Ball { center, radius, .. } => Ok(center.max_rate() + radius.max_rate()),
            MovingTube::Ellipse { center, a, b, .. } => {
                Ok(center.max_rate() + a.max_rate().max(b.max_rate()))
            }
            MovingTube::LevelSet(l) => {
                let mut vmax = 0.0f64;
                for k in 0..=16 {
                    let t = l.horizon() * k as f64 / 16.0;
                    for p in self.contour(t)?.sample(COARSE_SAMPLES, 0.5) {
                        let g = self.grad_psi(t, p).norm();
                        if g > 0.0 {
                            vmax = vmax.max(l.time_derivative(p).abs() / g);
                        }
                    }
                }
                Ok(vmax * 1.05)
            }
        }
    }

    /// Checks `V(t2) ⊂ V(t1)` for `t1 < t2`. Level-set tubes are checked
    /// node-wise on the grid (exact for the spline); analytic tubes by
    /// sampling boundaries at consecutive checkpoint times.
    pub fn is_nonincreasing(&self) -> Result<bool, GeometryError> {
        if let MovingTube::LevelSet(l) = self {
            return Ok(l.monotonicity_violations() == 0);
        }
        let mut times: Vec<f64> = (0..=64).map(|k| self.horizon() * k as f64 / 64.0).collect();
        match self {
            MovingTube::Ball { center, radius, .. } => {
                times.extend(center.times().chain(radius.times()))
            }
            MovingTube::Ellipse { center, a, b, .. } => {
                times.extend(center.times().chain(a.times()).chain(b.times()))
            }
            MovingTube::LevelSet(_) => {}
        }
        times.retain(|t| (0.0..=self.horizon()).contains(t));
        times.sort_by(f64::total_cmp);
        times.dedup();
        for w in times.windows(2) {
            let later = self.contour(w[1])?;
            for p in later.sample(128, 0.0) {
                if self.psi(w[0], p) > 1e-10 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *o = det(mc) / d;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Grid;
    use std::f64::consts::PI;

    fn ellipse() -> MovingTube {
        MovingTube::Ellipse {
            center: Path::constant(Vec2::new(0.2, -0.1)),
            a: Path::constant(2.0),
            b: Path::constant(1.0),
            angle: 0.4,
            horizon: 1.0,
        }
    }

    #[test]
    fn ball_projection_closed_form() {
        let b = MovingTube::Ball {
            center: Path::linear(0.0, Vec2::ZERO, 1.0, Vec2::new(1.0, 0.0)),
            radius: Path::constant(1.0),
            horizon: 1.0,
        };
        let p = b.project_onto(0.5, Vec2::new(0.5, 3.0)).unwrap();
        assert!(p.dist(Vec2::new(0.5, 1.0)) < 1e-15);
        assert_eq!(
            b.project_onto(0.5, Vec2::new(0.6, 0.1)).unwrap(),
            Vec2::new(0.6, 0.1)
        );
        assert!(matches!(
            b.signed_distance_profile(0.0, Vec2::ZERO),
            Err(GeometryError::OutsideReach { .. })
        ));
        assert!((b.speed_bound().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ellipse_projection_is_orthogonal_and_nearest() {
        let e = ellipse();
        let c = e.contour(0.0).unwrap();
        let dense = c.sample(20000, 0.0);
        for x in [
            Vec2::new(3.0, 2.0),
            Vec2::new(-2.5, 0.3),
            Vec2::new(0.0, -1.5),
            Vec2::new(0.9, 0.1),
        ] {
            let y = e.boundary_foot(0.0, x).unwrap();
            assert!(e.psi(0.0, y).abs() < 1e-12);
            let brute = dense
                .iter()
                .map(|p| x.dist(*p))
                .fold(f64::INFINITY, f64::min);
            assert!(x.dist(y) <= brute + 1e-9, "{x:?}: {} vs {brute}", x.dist(y));
            let n = e.grad_psi(0.0, y).normalized().unwrap();
            assert!((x - y).cross(n).abs() < 1e-10);
        }
    }

    #[test]
    fn ellipse_hessian_matches_finite_differences() {
        let e = ellipse();
        let x = Vec2::new(0.7, 0.9);
        let (_, _, h) = e.jet(0.0, x);
        let eps = 1e-6;
        let gx = |p: Vec2| e.grad_psi(0.0, p);
        let dxx = (gx(x + Vec2::new(eps, 0.0)).x - gx(x - Vec2::new(eps, 0.0)).x) / (2.0 * eps);
        let dxy = (gx(x + Vec2::new(0.0, eps)).x - gx(x - Vec2::new(0.0, eps)).x) / (2.0 * eps);
        let dyy = (gx(x + Vec2::new(0.0, eps)).y - gx(x - Vec2::new(0.0, eps)).y) / (2.0 * eps);
        assert!(
            (h[0] - dxx).abs() < 1e-6 && (h[1] - dxy).abs() < 1e-6 && (h[2] - dyy).abs() < 1e-6
        );
    }

    #[test]
    fn profile_of_interior_ellipse_point() {
        let e = ellipse();
        let x = Vec2::new(0.2, -0.1) + Vec2::new(1.8, 0.0).rotate(0.4);
        let p = e.signed_distance_profile(0.0, x).unwrap();
        assert!((p.distance + 0.2).abs() < 1e-10);
        assert!(p.normal.dist(Vec2::new(1.0, 0.0).rotate(0.4)) < 1e-10);
    }

    #[test]
    fn level_set_projection_onto_circle() {
        let g = |r: f64| {
            Grid::from_fn(81, 81, Vec2::new(-2.0, -2.0), [0.05, 0.05], move |p| {
                p.norm() - r
            })
            .unwrap()
        };
        let l = Arc::new(LevelSetTube::new(g(1.0), g(0.6), 2.0).unwrap());
        let tube = MovingTube::LevelSet(l);
        let x = Vec2::from_angle(1.0) * 1.5;
        let y = tube.project_onto(1.0, x).unwrap();
        assert!(
            (y.norm() - 0.8).abs() < 1e-3
                && y.normalized().unwrap().dist(Vec2::from_angle(1.0)) < 1e-3
        );
        assert!(tube.is_nonincreasing().unwrap());
        let v = tube.speed_bound().unwrap();
        assert!(v > 0.2 && v < 0.22, "{v}");
        assert!((tube.reach_inside(1.0).unwrap() - 0.8).abs() < 0.05);
    }

    #[test]
    fn shrinking_and_translating_balls() {
        let shrink = MovingTube::Ball {
            center: Path::linear(0.0, Vec2::ZERO, 1.0, Vec2::new(0.1, 0.0)),
            radius: Path::linear(0.0, 1.0, 1.0, 0.8),
            horizon: 1.0,
        };
        assert!(shrink.is_nonincreasing().unwrap());
        let slide = MovingTube::Ball {
            center: Path::linear(0.0, Vec2::ZERO, 1.0, Vec2::new(1.0, 0.0)),
            radius: Path::constant(1.0),
            horizon: 1.0,
        };
        assert!(!slide.is_nonincreasing().unwrap());
        let c = shrink.contour(0.5).unwrap();
        assert!((c.perimeter() - 2.0 * PI * 0.9).abs() < 1e-12);
    }
}
