//! The single-agent repulsion field and the boundary-integral field
//! obtained by spreading the kernel over the boundary of a moving set.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    quadrature_of_boundary, segment_distance, GeometryError, MovingTube, Panel, SetState,
    SurfaceQuadrature, Vec2,
};
use crate::scare::ScareFunction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("evaluation point ({x}, {y}) coincides with a source point")]
    Singularity { x: f64, y: f64 },
    #[error("field magnitude {0:e} too small to define a direction")]
    Degenerate(f64),
    #[error("eps = {eps} is not below the reach {reach}")]
    OutsideReach { eps: f64, reach: f64 },
    #[error("invalid field configuration: {0}")]
    Config(String),
    #[error("quadrature refinement failed near ({x}, {y}) at t = {t}")]
    Refinement { x: f64, y: f64, t: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `phi(|d|) d / |d|`.
#[inline]
pub fn kernel(scare: &ScareFunction, d: Vec2) -> Option<Vec2> {
    let r = d.norm();
    (r > 0.0).then(|| d * (scare.value(r) / r))
}

/// A single agent at a fixed position.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentField {
    pub scare: ScareFunction,
    pub agent: Vec2,
}

pub fn agent_velocity(f: &AgentField, x: Vec2) -> Result<Vec2, FieldError> {
    kernel(&f.scare, x - f.agent).ok_or(FieldError::Singularity { x: x.x, y: x.y })
}

#[derive(Debug, Clone)]
struct Frame {
    t: f64,
    quad: SurfaceQuadrature,
}

/// Boundary-integral field `scale * sum_panels w phi(|x - node|) (x - node)/|x - node|`
/// plus an optional far point carrying the remaining probability mass.
///
/// Between frame times the panels are interpolated linearly, panel by
/// panel, which is exact for balls whose center and radius move linearly.
#[derive(Debug, Clone)]
pub struct BoundaryField {
    frames: Vec<Frame>,
    scare: ScareFunction,
    scale: f64,
    far_point: Option<Vec2>,
}

/// Refine when closer than this many panel lengths.
const NEAR_PANELS: f64 = 5.0;
/// Refine panels within this multiple of the distance from the foot.
const NEAR_WINDOW: f64 = 20.0;
/// Target sub-panel length as a fraction of the distance.
const SUB_FRACTION: f64 = 0.25;
/// Feet sampled by the uniform inflow and alignment statistics.
pub const N_FEET: usize = 64;

impl BoundaryField {
    pub fn new(
        scare: ScareFunction,
        frames: Vec<(f64, SurfaceQuadrature)>,
    ) -> Result<Self, FieldError> {
        if frames.is_empty() {
            return Err(FieldError::Config(
                "at least one quadrature frame is required".into(),
            ));
        }
        if frames.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(FieldError::Config("frame times must increase".into()));
        }
        let n = frames[0].1.len();
        if frames.iter().any(|f| f.1.len() != n) {
            return Err(FieldError::Config(
                "all frames need the same panel count".into(),
            ));
        }
        Ok(BoundaryField {
            frames: frames
                .into_iter()
                .map(|(t, quad)| Frame { t, quad })
                .collect(),
            scare,
            scale: 1.0,
            far_point: None,
        })
    }

    /// Frames of `tube` at the given times.
    pub fn from_tube(
        tube: &MovingTube,
        scare: ScareFunction,
        times: &[f64],
        n_panels: usize,
    ) -> Result<Self, FieldError> {
        let frames = times
            .par_iter()
            .map(|&t| quadrature_of_boundary(tube, t, n_panels).map(|q| (t, q)))
            .collect::<Result<Vec<_>, _>>()?;
        BoundaryField::new(scare, frames)
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self, FieldError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(FieldError::Config(format!(
                "scale must be positive, got {scale}"
            )));
        }
        self.scale = scale;
        self.check_mass()?;
        Ok(self)
    }

    pub fn with_far_point(mut self, far_point: Vec2) -> Result<Self, FieldError> {
        self.far_point = Some(far_point);
        self.check_mass()?;
        Ok(self)
    }

    fn check_mass(&self) -> Result<(), FieldError> {
        if self.far_point.is_none() {
            return Ok(());
        }
        for f in &self.frames {
            let m = self.scale * f.quad.total_measure;
            if m > 1.0 + 1e-12 {
                return Err(FieldError::Config(format!(
                    "scaled boundary mass {m} exceeds 1 at t = {}",
                    f.t
                )));
            }
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn far_point(&self) -> Option<Vec2> {
        self.far_point
    }

    pub fn scare(&self) -> &ScareFunction {
        &self.scare
    }

    pub fn n_panels(&self) -> usize {
        self.frames[0].quad.len()
    }

    pub fn frame_times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    fn bracket(&self, t: f64) -> (usize, f64) {
        let k = self.frames.partition_point(|f| f.t <= t);
        if k == 0 {
            return (0, 0.0);
        }
        if k >= self.frames.len() {
            return (self.frames.len() - 1, 0.0);
        }
        let (a, b) = (self.frames[k - 1].t, self.frames[k].t);
        (k - 1, (t - a) / (b - a))
    }

    fn mix(a: &Panel, b: &Panel, lam: f64) -> Panel {
        if lam == 0.0 {
            return *a;
        }
        let start = a.start.lerp(b.start, lam);
        let end = a.end.lerp(b.end, lam);
        Panel {
            start,
            end,
            node: a.node.lerp(b.node, lam),
            normal: a
                .normal
                .lerp(b.normal, lam)
                .normalized()
                .unwrap_or(a.normal),
            weight: a.weight + (b.weight - a.weight) * lam,
            s0: a.s0,
            s1: a.s1,
        }
    }

    /// Panels at time `t`.
    pub fn panels_at(&self, t: f64) -> Vec<Panel> {
        let (k, lam) = self.bracket(t);
        let a = &self.frames[k].quad.panels;
        if lam == 0.0 {
            return a.clone();
        }
        let b = &self.frames[k + 1].quad.panels;
        a.iter().zip(b).map(|(p, q)| Self::mix(p, q, lam)).collect()
    }

    fn sub_panel(&self, k: usize, lam: f64, s0: f64, s1: f64) -> Panel {
        let a = self.frames[k].quad.panel_on(s0, s1);
        if lam == 0.0 {
            return a;
        }
        Self::mix(&a, &self.frames[k + 1].quad.panel_on(s0, s1), lam)
    }

    /// Boundary measure at time `t` (interpolated chord sum).
    pub fn total_measure(&self, t: f64) -> f64 {
        let (k, lam) = self.bracket(t);
        let a = self.frames[k].quad.total_measure;
        if lam == 0.0 {
            a
        } else {
            a + (self.frames[k + 1].quad.total_measure - a) * lam
        }
    }

    pub fn max_total_measure(&self) -> f64 {
        self.frames
            .iter()
            .map(|f| f.quad.total_measure)
            .fold(0.0, f64::max)
    }

    /// Weight of the far point, `1 - scale * measure`, or 0 without one.
    pub fn far_weight(&self, t: f64) -> f64 {
        match self.far_point {
            Some(_) => (1.0 - self.scale * self.total_measure(t)).clamp(0.0, 1.0),
            None => 0.0,
        }
    }

    /// Distance from `x` to the panel polyline at time `t`.
    pub fn distance_to_boundary(&self, t: f64, x: Vec2) -> f64 {
        self.panels_at(t)
            .iter()
            .map(|p| segment_distance(x, p.start, p.node).min(segment_distance(x, p.node, p.end)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Field value at `(t, x)`, with local panel refinement when `x` is
    /// within a few panel lengths of the boundary.
    pub fn velocity(&self, t: f64, x: Vec2) -> Result<Vec2, FieldError> {
        let (k, lam) = self.bracket(t);
        let panels = if lam == 0.0 {
            std::borrow::Cow::Borrowed(&self.frames[k].quad.panels)
        } else {
            std::borrow::Cow::Owned(self.panels_at(t))
        };
        let mut dist = f64::INFINITY;
        let mut foot = x;
        let mut longest = 0.0f64;
        for p in panels.iter() {
            longest = longest.max(p.weight);
            for (a, b) in [(p.start, p.node), (p.node, p.end)] {
                let d = segment_distance(x, a, b);
                if d < dist {
                    dist = d;
                    let ab = b - a;
                    let u = ((x - a).dot(ab) / ab.norm_sq().max(1e-300)).clamp(0.0, 1.0);
                    foot = a + ab * u;
                }
            }
        }
        if dist == 0.0 {
            return Err(FieldError::Singularity { x: x.x, y: x.y });
        }
        let refine = dist < NEAR_PANELS * longest;
        let window = NEAR_WINDOW * dist;
        let target = SUB_FRACTION * dist;
        let mut sum = Vec2::ZERO;
        for p in panels.iter() {
            let near = refine
                && p.weight > target
                && segment_distance(foot, p.start, p.node)
                    .min(segment_distance(foot, p.node, p.end))
                    <= window;
            if !near {
                sum += kernel(&self.scare, x - p.node)
                    .ok_or(FieldError::Singularity { x: x.x, y: x.y })?
                    * p.weight;
                continue;
            }
            let mut stack = vec![(p.s0, p.s1, 0u32)];
            while let Some((s0, s1, depth)) = stack.pop() {
                let sp = self.sub_panel(k, lam, s0, s1);
                if sp.weight <= target {
                    sum += kernel(&self.scare, x - sp.node)
                        .ok_or(FieldError::Singularity { x: x.x, y: x.y })?
                        * sp.weight;
                } else if depth >= 48 {
                    return Err(FieldError::Refinement { x: x.x, y: x.y, t });
                } else {
                    let sm = 0.5 * (s0 + s1);
                    stack.push((sm, s1, depth + 1));
                    stack.push((s0, sm, depth + 1));
                }
            }
        }
        let mut v = sum * self.scale;
        if let Some(xf) = self.far_point {
            let w = self.far_weight(t);
            if w > 0.0 {
                v += kernel(&self.scare, x - xf)
                    .ok_or(FieldError::Singularity { x: x.x, y: x.y })?
                    * w;
            }
        }
        Ok(v)
    }

    /// Velocities at many points in parallel.
    pub fn velocities(&self, t: f64, xs: &[Vec2]) -> Result<Vec<Vec2>, FieldError> {
        xs.par_iter().map(|x| self.velocity(t, *x)).collect()
    }
}

/// Far point at `10^6` scene diameters from `center`, along the x axis.
pub fn far_point_for(center: Vec2, diameter: f64) -> Vec2 {
    center + Vec2::new(1e6 * diameter.max(1e-12), 0.0)
}

/// Evaluation points `foot - eps * outward normal` at `N_FEET` equispaced
/// feet, with the inward unit normal at each.
fn inner_probes(tube: &MovingTube, t: f64, eps: f64) -> Result<Vec<(Vec2, Vec2)>, FieldError> {
    let reach = tube.reach_inside(t)?;
    if !(eps > 0.0 && eps < reach) {
        return Err(FieldError::OutsideReach { eps, reach });
    }
    let c = tube.contour(t)?;
    Ok((0..N_FEET)
        .map(|k| {
            let s = k as f64 / N_FEET as f64;
            let n_out = c.normal_at(s);
            (c.point_at(s) - n_out * eps, -n_out)
        })
        .collect())
}

/// Smallest inward normal component of the field at depth `eps` inside the
/// boundary, over `N_FEET` feet.
pub fn normal_inflow(
    f: &BoundaryField,
    tube: &MovingTube,
    t: f64,
    eps: f64,
) -> Result<f64, FieldError> {
    let probes = inner_probes(tube, t, eps)?;
    let vals = probes
        .par_iter()
        .map(|(x, n)| f.velocity(t, *x).map(|v| v.dot(*n)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

/// Largest `|v/|v| - n|` at depth `eps` inside the boundary, over
/// `N_FEET` feet, with `n` the inward normal.
pub fn alignment_defect(
    f: &BoundaryField,
    tube: &MovingTube,
    t: f64,
    eps: f64,
) -> Result<f64, FieldError> {
    let probes = inner_probes(tube, t, eps)?;
    let vals = probes
        .par_iter()
        .map(|(x, n)| {
            let v = f.velocity(t, *x)?;
            let m = v.norm();
            if m < 1e-12 {
                return Err(FieldError::Degenerate(m));
            }
            Ok((v / m - *n).norm())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Largest field speed over the boundary vertices and samples of `region`.
pub fn max_speed_on(f: &BoundaryField, region: &SetState, t: f64) -> Result<f64, FieldError> {
    let pts: Vec<Vec2> = region.all_points().collect();
    Ok(f.velocities(t, &pts)?
        .into_iter()
        .map(Vec2::norm)
        .fold(0.0, f64::max))
}

/// True iff the field speed stays strictly below `cap` on `region`.
pub fn field_speed_cap_check(f: &BoundaryField, region: &SetState, t: f64, cap: f64) -> bool {
    matches!(max_speed_on(f, region, t), Ok(m) if m < cap)
}
