//! Verifiers that compare simulated runs with analytic bounds: the volume
//! lower bound, divergence bookkeeping, near-boundary profiles and
//! trajectory error summaries.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{Control, Evolution, SweepingSolution, Trajectory};
use crate::fields::{alignment_defect, normal_inflow, BoundaryField, FieldError};
use crate::geometry::{hausdorff_points, MovingTube, SetState, Vec2};
use crate::scare::{necessary_integral, ScareFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Relative tolerance of the volume and divergence checks.
pub const CHECK_TOLERANCE: f64 = 0.02;

/// `Gamma(k / 2)` for positive integers `k`.
pub fn gamma_half(k: u32) -> f64 {
    assert!(k >= 1);
    if k.is_multiple_of(2) {
        (1..k / 2).map(f64::from).product()
    } else {
        // Gamma(m + 1/2) = (2m)! sqrt(pi) / (4^m m!)
        let m = (k - 1) / 2;
        let mut g = PI.sqrt();
        for i in 0..m {
            g *= f64::from(i) + 0.5;
        }
        g
    }
}

/// Surface measure of the unit sphere in `R^d`, `2 pi^{d/2} / Gamma(d/2)`.
pub fn unit_sphere_measure(d: u32) -> f64 {
    2.0 * PI.powf(f64::from(d) / 2.0) / gamma_half(d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeBoundReport {
    pub times: Vec<f64>,
    pub measured: Vec<f64>,
    pub bound: Vec<f64>,
    pub margin: Vec<f64>,
    pub initial_volume: f64,
    pub tolerance: f64,
    /// indices of times whose margin is below `-tolerance`
    pub violations: Vec<usize>,
    pub passed: bool,
}

impl VolumeBoundReport {
    pub fn min_margin(&self) -> f64 {
        self.margin.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,measured,bound,margin")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.times[i], self.measured[i], self.bound[i], self.margin[i]
            )?;
        }
        Ok(())
    }
}

/// Compares measured areas with `e^{phi'(1) t} meas(Omega_0) - omega M d/(d-1) t`.
pub fn volume_bound_check(
    times: &[f64],
    states: &[SetState],
    f: &ScareFunction,
    d: u32,
) -> Result<VolumeBoundReport, AnalysisError> {
    if times.len() != states.len() || times.is_empty() {
        return Err(AnalysisError::Domain(
            "times and states must be non-empty and of equal length".into(),
        ));
    }
    if d < 2 {
        return Err(AnalysisError::Domain("dimension must be at least 2".into()));
    }
    let m = necessary_integral(f, d).finite().ok_or_else(|| {
        AnalysisError::Precondition("the integral of r^{d-2} phi over (0, 1) diverges".into())
    })?;
    let slope = f.derivative(1.0);
    let drift = unit_sphere_measure(d) * m * f64::from(d) / f64::from(d - 1);
    let measured: Vec<f64> = states.iter().map(SetState::signed_area).collect();
    let v0 = measured[0];
    let t0 = times[0];
    let bound: Vec<f64> = times
        .iter()
        .map(|&t| (slope * (t - t0)).exp() * v0 - drift * (t - t0))
        .collect();
    let margin: Vec<f64> = measured.iter().zip(&bound).map(|(a, b)| a - b).collect();
    let tolerance = CHECK_TOLERANCE * v0.abs();
    let violations: Vec<usize> = margin
        .iter()
        .enumerate()
        .filter(|(_, m)| **m < -tolerance)
        .map(|(i, _)| i)
        .collect();
    Ok(VolumeBoundReport {
        times: times.to_vec(),
        passed: violations.is_empty(),
        measured,
        bound,
        margin,
        initial_volume: v0,
        tolerance,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceRow {
    pub t: f64,
    /// finite-difference area rate over the interval
    pub rate: f64,
    /// trapezoidal average of the area integral of div v at the endpoints
    pub integral: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub rows: Vec<DivergenceRow>,
    /// largest `|residual| / max(|rate|, |integral|)`, or the absolute
    /// residual when both are below `1e-12`
    pub max_relative_residual: f64,
    pub passed: bool,
}

impl DivergenceReport {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,rate,integral,residual")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.t, r.rate, r.integral, r.residual)?;
        }
        Ok(())
    }
}

/// Finite-difference area rate against the area quadrature of the field
/// divergence, per pair of consecutive output times.
pub fn divergence_balance(
    evo: &Evolution,
    control: &dyn Control,
    f: &ScareFunction,
) -> Result<DivergenceReport, AnalysisError> {
    if evo.times.len() < 2 {
        return Err(AnalysisError::Domain(
            "need at least two output times".into(),
        ));
    }
    let integrals: Vec<f64> = evo
        .times
        .par_iter()
        .zip(&evo.states)
        .map(|(&t, s)| {
            let xi = control.agent_at(t);
            if s.contains(xi) {
                return Err(AnalysisError::Domain(format!(
                    "agent inside the set at t = {t}"
                )));
            }
            Ok(area_integral(s.boundary(), xi, &|x: Vec2| {
                f.field_divergence(x.dist(xi), 2)
            }))
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for k in 0..evo.times.len() - 1 {
        let dt = evo.times[k + 1] - evo.times[k];
        let rate = (evo.states[k + 1].signed_area() - evo.states[k].signed_area()) / dt;
        let integral = 0.5 * (integrals[k] + integrals[k + 1]);
        let residual = rate - integral;
        let scale = rate.abs().max(integral.abs());
        worst = worst.max(if scale < 1e-12 {
            residual.abs()
        } else {
            residual.abs() / scale
        });
        rows.push(DivergenceRow {
            t: 0.5 * (evo.times[k] + evo.times[k + 1]),
            rate,
            integral,
            residual,
        });
    }
    Ok(DivergenceReport {
        rows,
        max_relative_residual: worst,
        passed: worst <= CHECK_TOLERANCE,
    })
}

/// Triangulates a simple counterclockwise polygon by ear clipping.
pub fn triangulate(poly: &[Vec2]) -> Vec<[Vec2; 3]> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::with_capacity(poly.len().saturating_sub(2));
    let mut guard = 0;
    while idx.len() > 3 && guard < 4 * poly.len() * poly.len() {
        guard += 1;
        let n = idx.len();
        let mut clipped = false;
        for k in 0..n {
            let (a, b, c) = (
                poly[idx[(k + n - 1) % n]],
                poly[idx[k]],
                poly[idx[(k + 1) % n]],
            );
            if (b - a).cross(c - b) <= 0.0 {
                continue;
            }
            let inside = idx.iter().any(|&j| {
                let p = poly[j];
                p != a && p != b && p != c && point_in_triangle(p, a, b, c)
            });
            if !inside {
                out.push([a, b, c]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            break;
        }
    }
    if idx.len() == 3 {
        out.push([poly[idx[0]], poly[idx[1]], poly[idx[2]]]);
    }
    out
}

fn point_in_triangle(p: Vec2, a: Vec2, b: Vec2, c: Vec2) -> bool {
    let d1 = (b - a).cross(p - a);
    let d2 = (c - b).cross(p - b);
    let d3 = (a - c).cross(p - c);
    d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0
}

// Dunavant degree-5 rule: barycentric points and weights.
const TRI_RULE: [(f64, f64, f64, f64); 7] = [
    (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.225),
    (
        0.059_715_871_789_770,
        0.470_142_064_105_115,
        0.470_142_064_105_115,
        0.132_394_152_788_506,
    ),
    (
        0.470_142_064_105_115,
        0.059_715_871_789_770,
        0.470_142_064_105_115,
        0.132_394_152_788_506,
    ),
    (
        0.470_142_064_105_115,
        0.470_142_064_105_115,
        0.059_715_871_789_770,
        0.132_394_152_788_506,
    ),
    (
        0.797_426_985_353_087,
        0.101_286_507_323_456,
        0.101_286_507_323_456,
        0.125_939_180_544_827,
    ),
    (
        0.101_286_507_323_456,
        0.797_426_985_353_087,
        0.101_286_507_323_456,
        0.125_939_180_544_827,
    ),
    (
        0.101_286_507_323_456,
        0.101_286_507_323_456,
        0.797_426_985_353_087,
        0.125_939_180_544_827,
    ),
];

fn tri_rule(t: &[Vec2; 3], f: &dyn Fn(Vec2) -> f64) -> f64 {
    let area = 0.5 * (t[1] - t[0]).cross(t[2] - t[0]).abs();
    area * TRI_RULE
        .iter()
        .map(|&(a, b, c, w)| w * f(t[0] * a + t[1] * b + t[2] * c))
        .sum::<f64>()
}

/// Triangles larger than a quarter of their distance to `focus` are split
/// into four until the rule agrees with its refinement.
fn tri_adaptive(t: [Vec2; 3], focus: Vec2, f: &dyn Fn(Vec2) -> f64, depth: u32) -> f64 {
    let coarse = tri_rule(&t, f);
    let m01 = t[0].lerp(t[1], 0.5);
    let m12 = t[1].lerp(t[2], 0.5);
    let m20 = t[2].lerp(t[0], 0.5);
    let kids = [
        [t[0], m01, m20],
        [m01, t[1], m12],
        [m20, m12, t[2]],
        [m01, m12, m20],
    ];
    let fine: f64 = kids.iter().map(|k| tri_rule(k, f)).sum();
    let size = t[0].dist(t[1]).max(t[1].dist(t[2])).max(t[2].dist(t[0]));
    let centroid = (t[0] + t[1] + t[2]) / 3.0;
    let far = size < 0.25 * centroid.dist(focus);
    if depth >= 14 || (far && (fine - coarse).abs() <= 1e-10 * (1.0 + fine.abs())) {
        return fine;
    }
    kids.iter()
        .map(|k| tri_adaptive(*k, focus, f, depth + 1))
        .sum()
}

/// Area integral of `f` over a simple polygon, refined toward `focus`.
pub fn area_integral(poly: &[Vec2], focus: Vec2, f: &(dyn Fn(Vec2) -> f64 + Sync)) -> f64 {
    triangulate(poly)
        .into_par_iter()
        .map(|t| tri_adaptive(t, focus, f, 0))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub eps: Vec<f64>,
    pub inflow: Vec<f64>,
    pub defect: Vec<f64>,
    /// least-squares slope of `ln inflow` against `ln eps`, when every
    /// inflow value is positive
    pub slope: Option<f64>,
    pub inflow_increasing: bool,
    pub defect_decreasing: bool,
}

impl ProfileReport {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "eps,inflow,defect")?;
        for i in 0..self.eps.len() {
            writeln!(w, "{},{},{}", self.eps[i], self.inflow[i], self.defect[i])?;
        }
        Ok(())
    }

    /// Largest over smallest inflow magnitude. Weak scare functions can
    /// push outward near the boundary, so signs are ignored.
    pub fn spread(&self) -> f64 {
        let lo = self
            .inflow
            .iter()
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min);
        let hi = self.inflow.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }
}

pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}

/// Inflow and alignment across a ladder of depths, with the fitted slope.
/// Depths are processed in the given order; monotonicity flags refer to
/// that order (decreasing `eps` is the natural ladder).
pub fn blowup_profile(
    tube: &MovingTube,
    scare: &ScareFunction,
    t: f64,
    eps: &[f64],
    n_panels: usize,
) -> Result<ProfileReport, AnalysisError> {
    let field = BoundaryField::from_tube(tube, scare.clone(), &[t], n_panels)?;
    let mut inflow = Vec::with_capacity(eps.len());
    let mut defect = Vec::with_capacity(eps.len());
    for &e in eps {
        inflow.push(normal_inflow(&field, tube, t, e)?);
        defect.push(alignment_defect(&field, tube, t, e)?);
    }
    Ok(ProfileReport {
        slope: log_log_slope(eps, &inflow),
        inflow_increasing: inflow.windows(2).all(|w| w[1] > w[0]),
        defect_decreasing: defect.windows(2).all(|w| w[1] < w[0]),
        eps: eps.to_vec(),
        inflow,
        defect,
    })
}

/// A point path that can be sampled at arbitrary times.
pub trait Sampled {
    fn position(&self, t: f64) -> Vec2;
}

impl Sampled for Trajectory {
    fn position(&self, t: f64) -> Vec2 {
        self.at(t)
    }
}

impl Sampled for SweepingSolution {
    fn position(&self, t: f64) -> Vec2 {
        self.at_linear(t)
    }
}

impl Sampled for Vec<Vec2> {
    /// A constant path, for frozen point sets.
    fn position(&self, _t: f64) -> Vec2 {
        self[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub times: Vec<f64>,
    /// sup over samples at each time
    pub per_time_error: Vec<f64>,
    /// Hausdorff distance between the two point clouds at each time
    pub per_time_hausdorff: Vec<f64>,
    pub sup_error: f64,
    pub max_hausdorff: f64,
}

impl ErrorSummary {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,sup_error,hausdorff")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{}",
                self.times[i], self.per_time_error[i], self.per_time_hausdorff[i]
            )?;
        }
        Ok(())
    }
}

/// Pointwise and set-level distances between matched ensembles, with both
/// resampled linearly in time onto `times`.
pub fn error_summary<A: Sampled + Sync, B: Sampled + Sync>(
    reference: &[A],
    candidate: &[B],
    times: &[f64],
) -> Result<ErrorSummary, AnalysisError> {
    if reference.len() != candidate.len() || reference.is_empty() {
        return Err(AnalysisError::Domain(format!(
            "ensembles differ in size: {} reference vs {} candidate",
            reference.len(),
            candidate.len()
        )));
    }
    let rows: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let a: Vec<Vec2> = reference.iter().map(|r| r.position(t)).collect();
            let b: Vec<Vec2> = candidate.iter().map(|c| c.position(t)).collect();
            let sup = a
                .iter()
                .zip(&b)
                .map(|(p, q)| p.dist(*q))
                .fold(0.0, f64::max);
            (sup, hausdorff_points(&a, &b))
        })
        .collect();
    let per_time_error: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let per_time_hausdorff: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(ErrorSummary {
        times: times.to_vec(),
        sup_error: per_time_error.iter().copied().fold(0.0, f64::max),
        max_hausdorff: per_time_hausdorff.iter().copied().fold(0.0, f64::max),
        per_time_error,
        per_time_hausdorff,
    })
}
