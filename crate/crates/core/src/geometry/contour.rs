use std::f64::consts::PI;
use std::sync::Arc;

use super::levelset::LevelSetTube;
use super::Vec2;
use crate::quad::GaussRule;

/// A closed counterclockwise curve parameterized by normalized arclength
/// `s` in `[0, 1)`.
#[derive(Debug, Clone)]
pub enum Contour {
    Circle { center: Vec2, radius: f64 },
    Ellipse(EllipseArc),
    Polyline(Polyline),
}

#[derive(Debug, Clone)]
pub struct EllipseArc {
    center: Vec2,
    a: f64,
    b: f64,
    angle: f64,
    /// cumulative arclength at `theta_k = 2 pi k / m`
    cum: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Polyline {
    points: Vec<Vec2>,
    cum: Vec<f64>,
    snap: Option<(Arc<LevelSetTube>, f64)>,
}

const ELLIPSE_TABLE: usize = 1024;

impl EllipseArc {
    pub fn new(center: Vec2, a: f64, b: f64, angle: f64) -> Self {
        let rule = GaussRule::new(8);
        let m = ELLIPSE_TABLE;
        let mut cum = Vec::with_capacity(m + 1);
        cum.push(0.0);
        for k in 0..m {
            let t0 = 2.0 * PI * k as f64 / m as f64;
            let t1 = 2.0 * PI * (k + 1) as f64 / m as f64;
            let piece = rule.integrate(|t| speed(a, b, t), t0, t1);
            cum.push(cum[k] + piece);
        }
        EllipseArc {
            center,
            a,
            b,
            angle,
            cum,
        }
    }

    fn local(&self, theta: f64) -> Vec2 {
        Vec2::new(self.a * theta.cos(), self.b * theta.sin())
    }

    fn theta_at(&self, s: f64) -> f64 {
        let m = ELLIPSE_TABLE;
        let total = self.cum[m];
        let target = s.rem_euclid(1.0) * total;
        let k = match self.cum.binary_search_by(|c| c.total_cmp(&target)) {
            Ok(k) => k.min(m - 1),
            Err(k) => k.saturating_sub(1).min(m - 1),
        };
        let h = 2.0 * PI / m as f64;
        let t0 = k as f64 * h;
        let rule = GaussRule::new(8);
        // Newton on arclength within one table interval
        let mut theta = t0 + h * (target - self.cum[k]) / (self.cum[k + 1] - self.cum[k]);
        for _ in 0..8 {
            let len = self.cum[k] + rule.integrate(|t| speed(self.a, self.b, t), t0, theta);
            let step = (len - target) / speed(self.a, self.b, theta);
            theta -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        theta
    }
}

fn speed(a: f64, b: f64, t: f64) -> f64 {
    (a * t.sin()).hypot(b * t.cos())
}

impl Polyline {
    /// Closed polyline through `points` (counterclockwise). When `snap` is
    /// given, interpolated points are pulled onto the zero level of the tube
    /// at that time.
    pub fn new(points: Vec<Vec2>, snap: Option<(Arc<LevelSetTube>, f64)>) -> Self {
        let n = points.len();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            cum.push(cum[i] + points[i].dist(points[(i + 1) % n]));
        }
        Polyline { points, cum, snap }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.points.len();
        let target = s.rem_euclid(1.0) * self.cum[n];
        let k = match self.cum.binary_search_by(|c| c.total_cmp(&target)) {
            Ok(k) => k.min(n - 1),
            Err(k) => k.saturating_sub(1).min(n - 1),
        };
        let len = self.cum[k + 1] - self.cum[k];
        let u = if len > 0.0 {
            (target - self.cum[k]) / len
        } else {
            0.0
        };
        (k, u)
    }
}

impl Contour {
    pub fn ellipse(center: Vec2, a: f64, b: f64, angle: f64) -> Self {
        Contour::Ellipse(EllipseArc::new(center, a, b, angle))
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Contour::Circle { radius, .. } => 2.0 * PI * radius,
            Contour::Ellipse(e) => e.cum[ELLIPSE_TABLE],
            Contour::Polyline(p) => p.cum[p.points.len()],
        }
    }

    /// Point at normalized arclength `s`.
    pub fn point_at(&self, s: f64) -> Vec2 {
        match self {
            Contour::Circle { center, radius } => {
                *center + Vec2::from_angle(2.0 * PI * s) * *radius
            }
            Contour::Ellipse(e) => e.center + e.local(e.theta_at(s)).rotate(e.angle),
            Contour::Polyline(p) => {
                let (k, u) = p.locate(s);
                let n = p.points.len();
                let q = p.points[k].lerp(p.points[(k + 1) % n], u);
                match &p.snap {
                    Some((tube, t)) => tube.snap(*t, q),
                    None => q,
                }
            }
        }
    }

    /// Outward unit normal at normalized arclength `s`.
    pub fn normal_at(&self, s: f64) -> Vec2 {
        match self {
            Contour::Circle { .. } => Vec2::from_angle(2.0 * PI * s),
            Contour::Ellipse(e) => {
                let th = e.theta_at(s);
                Vec2::new(e.b * th.cos(), e.a * th.sin())
                    .normalized()
                    .unwrap_or(Vec2::new(1.0, 0.0))
                    .rotate(e.angle)
            }
            Contour::Polyline(p) => {
                if let Some((tube, t)) = &p.snap {
                    let q = self.point_at(s);
                    if let Some(n) = tube.grad(*t, q).normalized() {
                        return n;
                    }
                }
                let (k, _) = p.locate(s);
                let n = p.points.len();
                let d = p.points[(k + 1) % n] - p.points[k];
                Vec2::new(d.y, -d.x)
                    .normalized()
                    .unwrap_or(Vec2::new(1.0, 0.0))
            }
        }
    }

    /// `n` points at equal arclength, starting at `s = offset / n`.
    pub fn sample(&self, n: usize, offset: f64) -> Vec<Vec2> {
        (0..n)
            .map(|k| self.point_at((k as f64 + offset) / n as f64))
            .collect()
    }
}
