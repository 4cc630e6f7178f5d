use std::sync::Arc;

use serde::Serialize;

use super::{Contour, GeometryError, MovingTube, Vec2};

/// One boundary panel: endpoints and midpoint on the curve, weight equal to
/// the chord length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Panel {
    pub start: Vec2,
    pub end: Vec2,
    pub node: Vec2,
    /// outward unit normal at the node
    pub normal: Vec2,
    pub weight: f64,
    /// normalized arclength of the endpoints
    pub s0: f64,
    pub s1: f64,
}

#[derive(Debug, Clone)]
pub struct SurfaceQuadrature {
    pub panels: Vec<Panel>,
    pub total_measure: f64,
    contour: Arc<Contour>,
}

pub const MIN_PANELS: usize = 16;

impl SurfaceQuadrature {
    /// `n` equal-arclength panels on `contour`.
    pub fn from_contour(contour: Arc<Contour>, n: usize) -> Result<Self, GeometryError> {
        if n < MIN_PANELS {
            return Err(GeometryError::TooFewPanels {
                min: MIN_PANELS,
                got: n,
            });
        }
        let panels: Vec<Panel> = (0..n)
            .map(|k| panel(&contour, k as f64 / n as f64, (k + 1) as f64 / n as f64))
            .collect();
        let total_measure = panels.iter().map(|p| p.weight).sum();
        Ok(SurfaceQuadrature {
            panels,
            total_measure,
            contour,
        })
    }

    pub fn contour(&self) -> &Arc<Contour> {
        &self.contour
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    /// Panel on the arclength range `[s0, s1]` of the same curve.
    pub fn panel_on(&self, s0: f64, s1: f64) -> Panel {
        panel(&self.contour, s0, s1)
    }

    /// Sum of `f(node) * weight`.
    pub fn integrate(&self, f: impl Fn(&Panel) -> f64) -> f64 {
        self.panels.iter().map(|p| f(p) * p.weight).sum()
    }
}

fn panel(c: &Contour, s0: f64, s1: f64) -> Panel {
    let start = c.point_at(s0);
    let end = c.point_at(s1);
    let sm = 0.5 * (s0 + s1);
    Panel {
        start,
        end,
        node: c.point_at(sm),
        normal: c.normal_at(sm),
        weight: start.dist(end),
        s0,
        s1,
    }
}

/// Equal-arclength panel quadrature of the boundary of `tube` at time `t`.
pub fn quadrature_of_boundary(
    tube: &MovingTube,
    t: f64,
    n_panels: usize,
) -> Result<SurfaceQuadrature, GeometryError> {
    if n_panels < MIN_PANELS {
        return Err(GeometryError::TooFewPanels {
            min: MIN_PANELS,
            got: n_panels,
        });
    }
    SurfaceQuadrature::from_contour(Arc::new(tube.contour(t)?), n_panels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn perimeter_converges_at_second_order() {
        let c = Arc::new(Contour::ellipse(Vec2::ZERO, 2.0, 1.0, 0.0));
        let exact = c.perimeter();
        let err = |n| {
            (SurfaceQuadrature::from_contour(Arc::clone(&c), n)
                .unwrap()
                .total_measure
                - exact)
                .abs()
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 / e2 > 3.5 && e1 / e2 < 4.5, "{e1} {e2}");
    }

    #[test]
    fn rejects_too_few_panels() {
        let c = Arc::new(Contour::Circle {
            center: Vec2::ZERO,
            radius: 1.0,
        });
        assert!(matches!(
            SurfaceQuadrature::from_contour(c, 8),
            Err(GeometryError::TooFewPanels { .. })
        ));
    }

    #[test]
    fn circle_normals_point_out() {
        let c = Arc::new(Contour::Circle {
            center: Vec2::new(1.0, 1.0),
            radius: 2.0,
        });
        let q = SurfaceQuadrature::from_contour(c, 32).unwrap();
        for p in &q.panels {
            assert!(((p.node - Vec2::new(1.0, 1.0)) / 2.0).dist(p.normal) < 1e-12);
        }
        assert!((q.total_measure - 2.0 * 32.0 * 2.0 * (PI / 32.0).sin()).abs() < 1e-12);
    }
}
