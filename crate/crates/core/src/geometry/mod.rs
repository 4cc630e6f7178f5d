//! Set representations, boundary handling, metric computations and
//! projection onto smooth moving sets.

mod ball_nd;
mod contour;
mod hausdorff;
pub mod levelset;
mod quadrature;
mod set;
mod tube;
mod vec2;

pub use ball_nd::BallNd;
pub use contour::{Contour, EllipseArc, Polyline};
pub use hausdorff::{hausdorff_distance, hausdorff_points, PointGrid};
pub use levelset::{Grid, GridHeader, LevelSetTube};
pub use quadrature::{quadrature_of_boundary, Panel, SurfaceQuadrature, MIN_PANELS};
pub use set::{segment_distance, SetState};
pub use tube::{BoundaryProfile, MovingTube, Path, PathValue};
pub use vec2::Vec2;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("empty set")]
    Empty,
    #[error("boundary needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("boundary polygon is self-intersecting (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("sample {index} at ({x}, {y}) lies outside the boundary polygon")]
    SampleOutside { index: usize, x: f64, y: f64 },
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("projection did not converge after {iterations} Newton iterations (residual {residual:e}, point ({x}, {y}), t = {t})")]
    ProjectionFailed {
        iterations: usize,
        residual: f64,
        x: f64,
        y: f64,
        t: f64,
    },
    #[error("point at distance {distance} from the boundary is outside the reach {reach}")]
    OutsideReach { distance: f64, reach: f64 },
    #[error("contour extraction failed: {0}")]
    Contour(String),
    #[error("invalid tube: {0}")]
    InvalidTube(String),
    #[error("need at least {min} panels, got {got}")]
    TooFewPanels { min: usize, got: usize },
    #[error("grid i/o: {0}")]
    Io(String),
}
