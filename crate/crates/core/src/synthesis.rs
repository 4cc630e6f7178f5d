//! Construction of piecewise-constant agent schedules: the confining tube,
//! the field scale, the discretized boundary measure and the dwell
//! timetable, plus the two end-to-end drivers built on them.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{error_summary, AnalysisError, ErrorSummary};
use crate::dynamics::{
    catching_up, evolve_set, flow_boundary_field, flow_points, Control, DynamicsError, Evolution,
    SweepingSolution, Trajectory,
};
use crate::fields::{
    far_point_for, field_speed_cap_check, kernel, max_speed_on, BoundaryField, FieldError,
};
use crate::geometry::{
    hausdorff_points, quadrature_of_boundary, GeometryError, Grid, LevelSetTube, MovingTube, Path,
    PointGrid, SetState, SurfaceQuadrature, Vec2, MIN_PANELS,
};
use crate::scare::{classify, ScareFunction};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("theory gate: {0}")]
    TheoryGate(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("tube inclusion check failed: {0}")]
    Inclusion(String),
    #[error("no field scale >= 1e-12 meets the speed cap: {0}")]
    ScaleUnderflow(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Boundary panels used for scale and inflow estimates.
pub const PLANNING_PANELS: usize = 256;
/// Times at which the field cap is enforced when choosing the scale.
pub const CAP_CHECK_TIMES: usize = 17;
/// Intervals of the sampled tube inclusion checks.
pub const TUBE_CHECK_INTERVALS: usize = 20;
/// Smallest admissible field scale.
pub const DELTA_MIN: f64 = 1e-12;

const INCLUSION_TOL: f64 = 1e-9;

/// One time node of a schedule: the agents visited in order and the share
/// of each dwell slot spent at the agent (the rest is spent at the far
/// point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleNode {
    pub t: f64,
    pub agents: Vec<Vec2>,
    #[serde(default = "one")]
    pub active_fraction: f64,
}

fn one() -> f64 {
    1.0
}

/// Piecewise-constant control on `[0, T]` built from `n` nodes of `N` dwell
/// slots of length `h = T / (n N)`. On `(t_i + (j-1) h, t_i + jh]` the agent
/// sits at `agents[j]` of node `i` for the first `active_fraction * h`, then
/// at the far point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct ControlSchedule {
    #[serde(rename = "T")]
    horizon: f64,
    n: usize,
    #[serde(rename = "N")]
    masses: usize,
    h: f64,
    far_point: Vec2,
    nodes: Vec<ScheduleNode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    #[serde(rename = "T")]
    horizon: f64,
    n: usize,
    #[serde(rename = "N")]
    masses: usize,
    h: f64,
    far_point: Vec2,
    nodes: Vec<ScheduleNode>,
}

impl TryFrom<RawSchedule> for ControlSchedule {
    type Error = SynthesisError;

    fn try_from(r: RawSchedule) -> Result<Self, SynthesisError> {
        let s = ControlSchedule::new(r.horizon, r.far_point, r.nodes)?;
        if s.n != r.n || s.masses != r.masses {
            return Err(SynthesisError::Schedule(format!(
                "declared n = {}, N = {} but nodes give n = {}, N = {}",
                r.n, r.masses, s.n, s.masses
            )));
        }
        if (s.h - r.h).abs() > 1e-12 * s.horizon {
            return Err(SynthesisError::Schedule(format!(
                "declared h = {} but T / (nN) = {}",
                r.h, s.h
            )));
        }
        Ok(s)
    }
}

impl ControlSchedule {
    pub fn new(
        horizon: f64,
        far_point: Vec2,
        nodes: Vec<ScheduleNode>,
    ) -> Result<Self, SynthesisError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SynthesisError::Schedule(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let n = nodes.len();
        if n == 0 {
            return Err(SynthesisError::Schedule(
                "at least one node is required".into(),
            ));
        }
        let masses = nodes[0].agents.len();
        if masses == 0 {
            return Err(SynthesisError::Schedule(
                "nodes need at least one agent position".into(),
            ));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.agents.len() != masses {
                return Err(SynthesisError::Schedule(format!(
                    "node {i} has {} agents, expected {masses}",
                    node.agents.len()
                )));
            }
            let expected = horizon * i as f64 / n as f64;
            if (node.t - expected).abs() > 1e-9 * horizon {
                return Err(SynthesisError::Schedule(format!(
                    "node {i} at t = {} but iT/n = {expected}",
                    node.t
                )));
            }
            if !(0.0..=1.0).contains(&node.active_fraction) {
                return Err(SynthesisError::Schedule(format!(
                    "node {i} active fraction {} outside [0, 1]",
                    node.active_fraction
                )));
            }
            if !node.agents.iter().all(|a| a.is_finite()) {
                return Err(SynthesisError::Schedule(format!(
                    "node {i} has a non-finite agent position"
                )));
            }
        }
        if !far_point.is_finite() {
            return Err(SynthesisError::Schedule("far point must be finite".into()));
        }
        let h = horizon / (n * masses) as f64;
        Ok(ControlSchedule {
            horizon,
            n,
            masses,
            h,
            far_point,
            nodes,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn masses(&self) -> usize {
        self.masses
    }

    pub fn dwell(&self) -> f64 {
        self.h
    }

    pub fn far_point(&self) -> Vec2 {
        self.far_point
    }

    pub fn nodes(&self) -> &[ScheduleNode] {
        &self.nodes
    }

    /// Sum of all dwell slots, `n N h`.
    pub fn total_dwell(&self) -> f64 {
        (self.n * self.masses) as f64 * self.h
    }

    fn slot(&self, t: f64) -> (usize, f64) {
        let total = self.n * self.masses;
        let k = ((t / self.h).ceil() as i64 - 1).clamp(0, total as i64 - 1) as usize;
        (k, t - k as f64 * self.h)
    }
}

impl Control for ControlSchedule {
    fn agent_at(&self, t: f64) -> Vec2 {
        let (k, offset) = self.slot(t);
        let node = &self.nodes[k / self.masses];
        if node.active_fraction > 0.0 && offset <= node.active_fraction * self.h {
            node.agents[k % self.masses]
        } else {
            self.far_point
        }
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let total = self.n * self.masses;
        let first = ((t0 / self.h).floor().max(0.0) as usize).min(total);
        let last = ((t1 / self.h).ceil().max(0.0) as usize).min(total);
        let mut out = Vec::new();
        for k in first..=last {
            let start = self.horizon * k as f64 / total as f64;
            if start > t0 && start < t1 {
                out.push(start);
            }
            if k < total {
                let f = self.nodes[k / self.masses].active_fraction;
                if f > 0.0 && f < 1.0 {
                    let sw = start + f * self.h;
                    if sw > t0 && sw < t1 {
                        out.push(sw);
                    }
                }
            }
        }
        out
    }
}

/// Inputs of [`assemble_schedule`].
#[derive(Debug, Clone)]
pub struct SynthesisParams {
    pub n: usize,
    pub masses: usize,
    pub delta0: f64,
    pub eps: f64,
    pub horizon: f64,
    pub tube: MovingTube,
    pub far_point: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TubeKind {
    Ball,
    LevelSet,
}

#[derive(Debug, Clone)]
pub struct TubeBuild {
    pub tube: MovingTube,
    pub kind: TubeKind,
    /// smallest distance from `Omega_1` to the complement of `Omega_0`
    pub margin: f64,
}

/// Points of `B(set, r)`: every boundary vertex and edge midpoint moved by
/// `r` in 16 directions, plus the points of `set`.
pub fn neighborhood_samples(set: &SetState, r: f64) -> SetState {
    let b = set.boundary();
    let m = b.len();
    let mut anchors: Vec<Vec2> = b.to_vec();
    anchors.extend((0..m).map(|i| b[i].lerp(b[(i + 1) % m], 0.5)));
    let mut samples = set.samples().to_vec();
    for a in &anchors {
        for k in 0..16 {
            samples.push(*a + Vec2::from_angle(2.0 * PI * k as f64 / 16.0) * r);
        }
    }
    SetState::from_parts_unchecked(b.to_vec(), samples)
}

/// Inclusion margin of `inner` in `outer`: the smallest signed depth of an
/// `inner` point below the boundary of `outer` (negative if some point lies
/// outside).
fn inclusion_margin(outer: &SetState, inner: &SetState) -> f64 {
    let pts: Vec<Vec2> = inner.all_points().collect();
    pts.par_iter()
        .map(|p| -outer.signed_distance(*p))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Shrinking tube from a neighbourhood of `Omega_0` onto a thin shell
/// around `Omega_1`, with
/// `B(Omega_0, eps) ⊂ V(0)` and `B(Omega_1, eps/2) ⊂ V(T) ⊂ B(Omega_1, 3 eps/4)`.
///
/// Two disks give an analytic ball with linear center and radius
/// `r_0 + eps -> r_1 + 0.6 eps`. Otherwise the level function blends
/// smoothed signed distances, shifted to `1.25 eps` and `0.625 eps`.
pub fn build_tube(
    omega0: &SetState,
    omega1: &SetState,
    horizon: f64,
    eps: f64,
) -> Result<TubeBuild, SynthesisError> {
    if !(horizon > 0.0 && eps > 0.0) {
        return Err(SynthesisError::Precondition(
            "horizon and tolerance must be positive".into(),
        ));
    }
    omega0.validate()?;
    omega1.validate()?;
    let margin = inclusion_margin(omega0, omega1);
    if !(margin > eps) {
        return Err(SynthesisError::Precondition(format!(
            "target must lie inside the initial set with margin above {eps}, margin is {margin}"
        )));
    }
    let (tube, kind) = match (omega0.as_disk(), omega1.as_disk()) {
        (Some((c0, r0)), Some((c1, r1))) => (
            MovingTube::Ball {
                center: Path::linear(0.0, c0, horizon, c1),
                radius: Path::linear(0.0, r0 + eps, horizon, r1 + 0.6 * eps),
                horizon,
            },
            TubeKind::Ball,
        ),
        _ => (
            level_set_tube(omega0, omega1, horizon, eps)?,
            TubeKind::LevelSet,
        ),
    };
    tube.validate()?;
    verify_tube(&tube, omega0, omega1, horizon, eps)?;
    Ok(TubeBuild { tube, kind, margin })
}

fn level_set_tube(
    omega0: &SetState,
    omega1: &SetState,
    horizon: f64,
    eps: f64,
) -> Result<MovingTube, SynthesisError> {
    let spacing = (0.25 * eps).min(omega0.diameter() / 128.0);
    let (lo, hi) = omega0.bbox();
    let pad = Vec2::new(1.0, 1.0) * (2.0 * eps + 6.0 * spacing);
    let (lo, hi) = (lo - pad, hi + pad);
    let g0 = Grid::signed_distance(omega0, lo, hi, spacing)?.smoothed(2);
    let g1 = Grid::signed_distance(omega1, lo, hi, spacing)?.smoothed(2);
    let (nx, ny) = g0.dims();
    let shift = |g: &Grid, s: f64| {
        Grid::new(
            nx,
            ny,
            g.origin(),
            g.spacing(),
            g.values().iter().map(|v| v - s).collect(),
        )
    };
    let psi0 = shift(&g0, 1.25 * eps)?;
    let psi1 = shift(&g1, 0.625 * eps)?;
    Ok(MovingTube::LevelSet(Arc::new(LevelSetTube::new(
        psi0, psi1, horizon,
    )?)))
}

fn verify_tube(
    tube: &MovingTube,
    omega0: &SetState,
    omega1: &SetState,
    horizon: f64,
    eps: f64,
) -> Result<(), SynthesisError> {
    let outside = |t: f64, set: &SetState| -> Option<Vec2> {
        let pts: Vec<Vec2> = set.all_points().collect();
        pts.into_par_iter()
            .find_any(|p| tube.psi(t, *p) > INCLUSION_TOL)
    };
    if let Some(p) = outside(0.0, &neighborhood_samples(omega0, eps)) {
        return Err(SynthesisError::Inclusion(format!(
            "B(Omega_0, eps) leaves V(0) at ({}, {})",
            p.x, p.y
        )));
    }
    if let Some(p) = outside(horizon, &neighborhood_samples(omega1, 0.5 * eps)) {
        return Err(SynthesisError::Inclusion(format!(
            "B(Omega_1, eps/2) leaves V(T) at ({}, {})",
            p.x, p.y
        )));
    }
    for p in tube.contour(horizon)?.sample(512, 0.0) {
        if omega1.distance_to_region(p) > 0.75 * eps + INCLUSION_TOL {
            return Err(SynthesisError::Inclusion(format!(
                "V(T) leaves B(Omega_1, 3 eps/4) at ({}, {})",
                p.x, p.y
            )));
        }
    }
    if !tube.is_nonincreasing()? {
        return Err(SynthesisError::Inclusion(
            "tube is not nonincreasing".into(),
        ));
    }
    let m = TUBE_CHECK_INTERVALS;
    for k in 0..m {
        let (ta, tb) = (
            horizon * k as f64 / m as f64,
            horizon * (k + 1) as f64 / m as f64,
        );
        for p in tube.contour(tb)?.sample(256, 0.0) {
            if tube.psi(ta, p) > INCLUSION_TOL {
                return Err(SynthesisError::Inclusion(format!(
                    "V({tb}) is not inside V({ta})"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaChoice {
    pub delta0: f64,
    /// largest boundary perimeter over the check times
    pub max_perimeter: f64,
    /// the speed cap `eps / (8T)`
    pub cap: f64,
    /// field speed on the target neighbourhood at the chosen scale
    pub max_speed: f64,
    pub halvings: u32,
}

/// Largest `delta_0 = 2^{-k} / max perimeter` whose field (with far point)
/// stays below `eps / (8T)` on `B(Omega_1, eps/2)` at the check times.
pub fn choose_delta0(
    tube: &MovingTube,
    scare: &ScareFunction,
    omega1: &SetState,
    eps: f64,
    horizon: f64,
    far_point: Vec2,
) -> Result<DeltaChoice, SynthesisError> {
    let times: Vec<f64> = (0..CAP_CHECK_TIMES)
        .map(|k| horizon * k as f64 / (CAP_CHECK_TIMES - 1) as f64)
        .collect();
    for &t in &times {
        for p in tube.contour(t)?.sample(512, 0.0) {
            if omega1.distance_to_region(p) <= 0.5 * eps {
                return Err(SynthesisError::ScaleUnderflow(format!(
                    "tube boundary at t = {t} meets B(Omega_1, eps/2) at ({}, {})",
                    p.x, p.y
                )));
            }
        }
    }
    let region = neighborhood_samples(omega1, 0.5 * eps);
    let cap = eps / (8.0 * horizon);
    let max_perimeter = times
        .iter()
        .map(|&t| tube.contour(t).map(|c| c.perimeter()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let unit = BoundaryField::from_tube(tube, scare.clone(), &times, PLANNING_PANELS)?;
    let mut unit_speed = 0.0f64;
    for &t in &times {
        unit_speed = unit_speed.max(max_speed_on(&unit, &region, t)?);
    }
    let mut delta = 1.0 / max_perimeter;
    let mut halvings = 0;
    while delta * unit_speed >= cap && delta >= DELTA_MIN {
        delta *= 0.5;
        halvings += 1;
    }
    loop {
        if delta < DELTA_MIN {
            return Err(SynthesisError::ScaleUnderflow(format!(
                "unit field speed {unit_speed} against cap {cap}"
            )));
        }
        let field = unit.clone().with_scale(delta)?.with_far_point(far_point)?;
        if times
            .iter()
            .all(|&t| field_speed_cap_check(&field, &region, t, cap))
        {
            let mut max_speed = 0.0f64;
            for &t in &times {
                max_speed = max_speed.max(max_speed_on(&field, &region, t)?);
            }
            return Ok(DeltaChoice {
                delta0: delta,
                max_perimeter,
                cap,
                max_speed,
                halvings,
            });
        }
        delta *= 0.5;
        halvings += 1;
    }
}

/// `N` equal masses at equal-arclength midpoints plus the far point
/// carrying the remaining probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    pub points: Vec<Vec2>,
    /// mass of each point, `delta_0 * perimeter / N`
    pub weight: f64,
    pub far_point: Vec2,
    pub far_weight: f64,
}

impl DiscreteMeasure {
    /// Mass-weighted sum of single-agent fields at `x`.
    pub fn velocity(&self, scare: &ScareFunction, x: Vec2) -> Option<Vec2> {
        let mut v = kernel(scare, x - self.far_point)? * self.far_weight;
        for p in &self.points {
            v += kernel(scare, x - *p)? * self.weight;
        }
        Some(v)
    }

    pub fn total_mass(&self) -> f64 {
        self.weight * self.points.len() as f64 + self.far_weight
    }
}

pub fn discretize_measure(
    q: &SurfaceQuadrature,
    delta0: f64,
    masses: usize,
    far_point: Vec2,
) -> Result<DiscreteMeasure, SynthesisError> {
    discretize_measure_shifted(q, delta0, masses, far_point, 0.0)
}

/// Origin of the arclength partition at node `i`, as a fraction of one cell.
/// Successive nodes rotate the partition so the gaps between masses do not
/// stay attached to the same boundary points.
pub fn partition_phase(i: usize) -> f64 {
    (i as f64 * 0.618_033_988_749_894_9).fract()
}

/// Like [`discretize_measure`] with the partition origin moved by `phase`
/// cells along the boundary.
pub fn discretize_measure_shifted(
    q: &SurfaceQuadrature,
    delta0: f64,
    masses: usize,
    far_point: Vec2,
    phase: f64,
) -> Result<DiscreteMeasure, SynthesisError> {
    if masses == 0 {
        return Err(SynthesisError::Precondition(
            "at least one mass is required".into(),
        ));
    }
    let contour = q.contour();
    let perimeter = contour.perimeter();
    let boundary_mass = delta0 * perimeter;
    if !(delta0 >= 0.0) || boundary_mass > 1.0 + 1e-12 {
        return Err(SynthesisError::Precondition(format!(
            "scaled boundary mass {boundary_mass} must lie in [0, 1]"
        )));
    }
    Ok(DiscreteMeasure {
        points: contour.sample(masses, 0.5 + phase),
        weight: boundary_mass / masses as f64,
        far_point,
        far_weight: (1.0 - boundary_mass).max(0.0),
    })
}

/// Dwell schedule for the discretized boundary measure at the node start
/// times. Odd nodes visit the masses in reverse order; the partition origin
/// rotates by [`partition_phase`].
pub fn assemble_schedule(params: &SynthesisParams) -> Result<ControlSchedule, SynthesisError> {
    if params.n == 0 || params.masses == 0 {
        return Err(SynthesisError::Precondition(
            "n and N must be positive".into(),
        ));
    }
    let nodes = (0..params.n)
        .into_par_iter()
        .map(|i| {
            let t = params.horizon * i as f64 / params.n as f64;
            let q = quadrature_of_boundary(&params.tube, t, MIN_PANELS)?;
            let m = discretize_measure_shifted(
                &q,
                params.delta0,
                params.masses,
                params.far_point,
                partition_phase(i),
            )?;
            let mut agents = m.points;
            if i % 2 == 1 {
                agents.reverse();
            }
            Ok(ScheduleNode {
                t,
                agents,
                active_fraction: (1.0 - m.far_weight).clamp(0.0, 1.0),
            })
        })
        .collect::<Result<Vec<_>, SynthesisError>>()?;
    ControlSchedule::new(params.horizon, params.far_point, nodes)
}

/// Options steering the field scale of one ladder rung.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RungOptions {
    /// lower bound on the scale (the cap-derived scale for confinement)
    pub delta_floor: f64,
    /// for confinement: resolution depth capped at `eps / 2`
    pub gac_eps: Option<f64>,
    /// bypasses the resolution rule
    pub fixed_delta: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RungPlan {
    pub n: usize,
    pub masses: usize,
    /// depth at which the field inflow is matched to the tube speed
    pub e_target: f64,
    pub delta_res: f64,
    pub delta_used: f64,
    pub schedule: ControlSchedule,
}

/// Schedule for one `(n, N)` rung with a scale matched to the resolution
/// of the mass layout: the inward field speed at depth
/// `max(spacing / 2, 2 L T / n)` equals the tube speed `L`.
pub fn plan_rung(
    tube: &MovingTube,
    scare: &ScareFunction,
    horizon: f64,
    n: usize,
    masses: usize,
    far_point: Vec2,
    opts: RungOptions,
) -> Result<RungPlan, SynthesisError> {
    if n == 0 || masses == 0 {
        return Err(SynthesisError::Precondition(
            "n and N must be positive".into(),
        ));
    }
    let node_times: Vec<f64> = (0..n).map(|i| horizon * i as f64 / n as f64).collect();
    let mut perimeters = Vec::with_capacity(n);
    let mut reach = f64::INFINITY;
    for &t in &node_times {
        perimeters.push(tube.contour(t)?.perimeter());
        reach = reach.min(tube.reach_inside(t)?);
    }
    let p_max = perimeters.iter().copied().fold(0.0, f64::max);
    let speed = tube.speed_bound()?;
    let mut e_target = (0.5 * p_max / masses as f64).max(2.0 * speed * horizon / n as f64);
    if let Some(eps) = opts.gac_eps {
        e_target = e_target.min(0.5 * eps);
    }
    e_target = e_target.min(0.5 * reach);
    let delta_res = match opts.fixed_delta {
        Some(d) => d,
        None if speed == 0.0 => DELTA_MIN,
        None => {
            let inflow = node_times
                .par_iter()
                .map(|&t| discrete_inflow(tube, scare, t, masses, e_target))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            if inflow > 0.0 {
                speed / inflow
            } else {
                1.0 / p_max
            }
        }
    };
    let delta_used = match opts.fixed_delta {
        Some(d) => d,
        None => delta_res.max(opts.delta_floor).min(1.0 / p_max),
    };
    let schedule = assemble_schedule(&SynthesisParams {
        n,
        masses,
        delta0: delta_used,
        eps: opts.gac_eps.unwrap_or(f64::NAN),
        horizon,
        tube: tube.clone(),
        far_point,
    })?;
    Ok(RungPlan {
        n,
        masses,
        e_target,
        delta_res,
        delta_used,
        schedule,
    })
}

/// Smallest inward normal component, at depth `eps` below the boundary at
/// time `t`, of the field of `N` unit-scale masses (each of weight
/// `perimeter / N`). Feet sit under every mass and midway between
/// neighbours, where the discrete field is weakest.
pub fn discrete_inflow(
    tube: &MovingTube,
    scare: &ScareFunction,
    t: f64,
    masses: usize,
    eps: f64,
) -> Result<f64, SynthesisError> {
    let c = tube.contour(t)?;
    let weight = c.perimeter() / masses as f64;
    let pts = c.sample(masses, 0.5);
    let mut worst = f64::INFINITY;
    for k in 0..2 * masses {
        let s = k as f64 / (2 * masses) as f64;
        let n_out = c.normal_at(s);
        let probe = c.point_at(s) - n_out * eps;
        let mut v = Vec2::ZERO;
        for p in &pts {
            v += kernel(scare, probe - *p).ok_or(FieldError::Singularity {
                x: probe.x,
                y: probe.y,
            })? * weight;
        }
        worst = worst.min(-v.dot(n_out));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RungStatus {
    Success,
    Failed,
    Inadmissible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfineRung {
    pub n: usize,
    #[serde(rename = "N")]
    pub masses: usize,
    pub e_target: f64,
    pub delta_res: f64,
    pub delta_used: f64,
    /// the field cap held at every node time at the scale used
    pub cap_satisfied: bool,
    pub status: RungStatus,
    /// Hausdorff distance between flowed points and the target points
    pub hausdorff: Option<f64>,
    /// largest distance of a flowed point from the target
    pub excess: Option<f64>,
    /// largest distance from a target sample to the nearest flowed point
    pub coverage: Option<f64>,
    /// largest displacement of a target point flowed under the schedule
    pub displacement: Option<f64>,
    pub min_agent_distance: f64,
    pub resamples: usize,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfineParams {
    pub eps: f64,
    pub horizon: f64,
    pub ladder: Vec<(usize, usize)>,
    /// number of evenly spaced output times
    pub outputs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfineOutcome {
    pub success: bool,
    pub trivial: bool,
    pub tube_kind: Option<TubeKind>,
    pub delta: Option<DeltaChoice>,
    pub far_point: Vec2,
    pub rungs: Vec<ConfineRung>,
    /// index of the successful rung, or of the one with smallest Hausdorff distance
    pub best: Option<usize>,
    #[serde(skip)]
    pub schedule: Option<ControlSchedule>,
    #[serde(skip)]
    pub evolution: Option<Evolution>,
}

impl ConfineOutcome {
    pub fn best_rung(&self) -> Option<&ConfineRung> {
        self.best.map(|i| &self.rungs[i])
    }
}

fn output_times(horizon: f64, count: usize) -> Vec<f64> {
    let m = count.max(1);
    (1..=m).map(|k| horizon * k as f64 / m as f64).collect()
}

/// Steers `Omega_0` into `B(Omega_1, eps)` with a single agent, climbing
/// the `(n, N)` ladder until the flowed set is inside `B(Omega_1, eps)` and
/// covers every target sample within `eps / 4`.
pub fn confine(
    scare: &ScareFunction,
    omega0: &SetState,
    omega1: &SetState,
    params: &ConfineParams,
) -> Result<ConfineOutcome, SynthesisError> {
    let report = classify(scare, 2);
    if report.a2 != Some(true) {
        return Err(SynthesisError::TheoryGate(format!(
            "scare function {scare} does not satisfy the integrability condition needed for confinement"
        )));
    }
    let (eps, horizon) = (params.eps, params.horizon);
    if !(eps > 0.0 && horizon > 0.0) {
        return Err(SynthesisError::Precondition(
            "horizon and tolerance must be positive".into(),
        ));
    }
    if params.ladder.is_empty() {
        return Err(SynthesisError::Precondition(
            "the budget ladder is empty".into(),
        ));
    }
    omega0.validate()?;
    omega1.validate()?;
    let far_point = far_point_for(omega0.centroid(), omega0.diameter());
    let outs = output_times(horizon, params.outputs);
    let target: Vec<Vec2> = omega1.all_points().collect();

    if omega0 == omega1 {
        let schedule = ControlSchedule::new(
            horizon,
            far_point,
            vec![ScheduleNode {
                t: 0.0,
                agents: vec![far_point],
                active_fraction: 0.0,
            }],
        )?;
        let evo = evolve_set(scare, omega0, &schedule, horizon, horizon, &outs)?;
        let flowed: Vec<Vec2> = evo.last().all_points().collect();
        let rung = assess(
            omega1, &target, &flowed, eps, 1, 1, 0.0, 0.0, 0.0, true, &evo,
        );
        let success = rung.status == RungStatus::Success;
        return Ok(ConfineOutcome {
            success,
            trivial: true,
            tube_kind: None,
            delta: None,
            far_point,
            rungs: vec![rung],
            best: Some(0),
            schedule: Some(schedule),
            evolution: Some(evo),
        });
    }

    let built = build_tube(omega0, omega1, horizon, eps)?;
    let choice = choose_delta0(&built.tube, scare, omega1, eps, horizon, far_point)?;
    let region = neighborhood_samples(omega1, 0.5 * eps);
    let mut outcome = ConfineOutcome {
        success: false,
        trivial: false,
        tube_kind: Some(built.kind),
        delta: Some(choice.clone()),
        far_point,
        rungs: Vec::new(),
        best: None,
        schedule: None,
        evolution: None,
    };
    let mut best_hd = f64::INFINITY;
    for &(n, masses) in &params.ladder {
        let opts = RungOptions {
            delta_floor: choice.delta0,
            gac_eps: Some(eps),
            fixed_delta: None,
        };
        let plan = plan_rung(&built.tube, scare, horizon, n, masses, far_point, opts)?;
        let cap_ok = cap_holds(&built.tube, scare, &region, &plan, choice.cap, far_point)?;
        let h = plan.schedule.dwell();
        let mut rung = match evolve_set(scare, omega0, &plan.schedule, horizon, h, &outs) {
            Ok(evo) => {
                let flowed: Vec<Vec2> = evo.last().all_points().collect();
                let mut rung = assess(
                    omega1,
                    &target,
                    &flowed,
                    eps,
                    n,
                    masses,
                    plan.e_target,
                    plan.delta_res,
                    plan.delta_used,
                    cap_ok,
                    &evo,
                );
                if rung.status == RungStatus::Success {
                    let moved =
                        flow_points(scare, &plan.schedule, &target, horizon, h, &[horizon])?;
                    let disp = target
                        .iter()
                        .zip(&moved[0])
                        .map(|(a, b)| a.dist(*b))
                        .fold(0.0, f64::max);
                    rung.displacement = Some(disp);
                }
                let hd = rung.hausdorff.unwrap_or(f64::INFINITY);
                let success = rung.status == RungStatus::Success;
                if success || hd < best_hd {
                    best_hd = hd;
                    outcome.best = Some(outcome.rungs.len());
                    outcome.schedule = Some(plan.schedule.clone());
                    outcome.evolution = Some(evo);
                }
                if success {
                    outcome.success = true;
                }
                rung
            }
            Err(DynamicsError::Inadmissible {
                t,
                distance,
                partial,
            }) => ConfineRung {
                n,
                masses,
                e_target: plan.e_target,
                delta_res: plan.delta_res,
                delta_used: plan.delta_used,
                cap_satisfied: cap_ok,
                status: RungStatus::Inadmissible,
                hausdorff: None,
                excess: None,
                coverage: None,
                displacement: None,
                min_agent_distance: partial.min_agent_distance,
                resamples: partial.resamples,
                detail: Some(format!("agent within {distance:e} of the set at t = {t}")),
            },
            Err(e) => return Err(e.into()),
        };
        if rung.status == RungStatus::Failed && rung.detail.is_none() {
            rung.detail = Some("containment or coverage not reached".into());
        }
        outcome.rungs.push(rung);
        if outcome.success {
            break;
        }
    }
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn assess(
    omega1: &SetState,
    target: &[Vec2],
    flowed: &[Vec2],
    eps: f64,
    n: usize,
    masses: usize,
    e_target: f64,
    delta_res: f64,
    delta_used: f64,
    cap_satisfied: bool,
    evo: &Evolution,
) -> ConfineRung {
    let excess = flowed
        .par_iter()
        .map(|p| omega1.distance_to_region(*p))
        .reduce(|| 0.0, f64::max);
    let grid = PointGrid::new(flowed);
    let coverage = omega1
        .samples()
        .par_iter()
        .map(|y| grid.nearest_distance(*y))
        .reduce(|| 0.0, f64::max);
    let hausdorff = hausdorff_points(flowed, target);
    let ok = excess <= eps && coverage <= 0.25 * eps && evo.min_agent_distance > 0.0;
    ConfineRung {
        n,
        masses,
        e_target,
        delta_res,
        delta_used,
        cap_satisfied,
        status: if ok {
            RungStatus::Success
        } else {
            RungStatus::Failed
        },
        hausdorff: Some(hausdorff),
        excess: Some(excess),
        coverage: Some(coverage),
        displacement: None,
        min_agent_distance: evo.min_agent_distance,
        resamples: evo.resamples,
        detail: None,
    }
}

/// Re-checks the field cap on the target neighbourhood at every node time,
/// latest first.
fn cap_holds(
    tube: &MovingTube,
    scare: &ScareFunction,
    region: &SetState,
    plan: &RungPlan,
    cap: f64,
    far_point: Vec2,
) -> Result<bool, SynthesisError> {
    let times: Vec<f64> = plan.schedule.nodes().iter().map(|nd| nd.t).collect();
    let field = BoundaryField::from_tube(tube, scare.clone(), &times, PLANNING_PANELS)?
        .with_scale(plan.delta_used)?
        .with_far_point(far_point)?;
    Ok(times
        .iter()
        .rev()
        .all(|&t| field_speed_cap_check(&field, region, t, cap)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepParams {
    pub eps: f64,
    pub horizon: f64,
    /// fixed field scale; when absent each rung uses its resolution scale
    pub delta: Option<f64>,
    pub ladder: Vec<(usize, usize)>,
    pub outputs: usize,
    /// catching-up steps of the reference solution
    pub reference_steps: usize,
    /// points flowed under the continuum boundary field
    pub continuum_points: usize,
}

impl SweepParams {
    pub fn new(eps: f64, horizon: f64, ladder: Vec<(usize, usize)>) -> Self {
        SweepParams {
            eps,
            horizon,
            delta: None,
            ladder,
            outputs: 40,
            reference_steps: 2000,
            continuum_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRung {
    pub n: usize,
    #[serde(rename = "N")]
    pub masses: usize,
    pub e_target: f64,
    pub delta_res: f64,
    pub delta_used: f64,
    pub status: RungStatus,
    pub sup_error: Option<f64>,
    pub max_hausdorff: Option<f64>,
    pub min_agent_distance: f64,
    pub resamples: usize,
    /// tracked points (boundary vertices are dropped after resampling)
    pub points: usize,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuumReport {
    pub delta: f64,
    pub points: usize,
    pub sup_error: f64,
    pub max_hausdorff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    /// the last rung meets `eps` in both the trajectory and set metrics
    pub success: bool,
    /// both errors decrease strictly along the ladder
    pub monotone: bool,
    pub far_point: Vec2,
    pub output_times: Vec<f64>,
    pub rungs: Vec<SweepRung>,
    pub continuum: Option<ContinuumReport>,
    #[serde(skip)]
    pub reference: Vec<SweepingSolution>,
    /// tracks of the last admissible rung
    #[serde(skip)]
    pub candidate: Vec<Trajectory>,
    #[serde(skip)]
    pub errors: Option<ErrorSummary>,
    #[serde(skip)]
    pub schedule: Option<ControlSchedule>,
}

/// Approximates the sweeping process driven by `tube` with agent schedules
/// along the ladder, against a fine catching-up reference.
pub fn approximate_sweeping(
    scare: &ScareFunction,
    tube: &MovingTube,
    omega0: &SetState,
    params: &SweepParams,
) -> Result<SweepOutcome, SynthesisError> {
    let report = classify(scare, 2);
    if report.a2prime != Some(true) {
        return Err(SynthesisError::TheoryGate(format!(
            "scare function {scare} does not satisfy the growth condition needed for sweeping"
        )));
    }
    let horizon = params.horizon;
    if !(params.eps > 0.0 && horizon > 0.0) {
        return Err(SynthesisError::Precondition(
            "horizon and tolerance must be positive".into(),
        ));
    }
    if params.ladder.is_empty() {
        return Err(SynthesisError::Precondition(
            "the budget ladder is empty".into(),
        ));
    }
    omega0.validate()?;
    tube.validate()?;
    let starts: Vec<Vec2> = omega0.all_points().collect();
    if let Some(p) = starts.iter().find(|p| tube.psi(0.0, **p) > INCLUSION_TOL) {
        return Err(SynthesisError::Precondition(format!(
            "initial point ({}, {}) lies outside V(0)",
            p.x, p.y
        )));
    }
    let far_point = far_point_for(
        omega0.centroid(),
        omega0.diameter().max(tube.contour(0.0)?.perimeter() / PI),
    );
    let outs = output_times(horizon, params.outputs);
    let mut times = vec![0.0];
    times.extend(&outs);
    let reference = starts
        .par_iter()
        .map(|&x| catching_up(tube, x, horizon, params.reference_steps))
        .collect::<Result<Vec<_>, _>>()?;
    let n_boundary = omega0.boundary().len();

    let mut outcome = SweepOutcome {
        success: false,
        monotone: false,
        far_point,
        output_times: times.clone(),
        rungs: Vec::new(),
        continuum: None,
        reference: Vec::new(),
        candidate: Vec::new(),
        errors: None,
        schedule: None,
    };
    let mut last_delta = None;
    for &(n, masses) in &params.ladder {
        let opts = RungOptions {
            delta_floor: 0.0,
            gac_eps: None,
            fixed_delta: params.delta,
        };
        let plan = plan_rung(tube, scare, horizon, n, masses, far_point, opts)?;
        last_delta = Some(plan.delta_used);
        let h = plan.schedule.dwell();
        let rung = match evolve_set(scare, omega0, &plan.schedule, horizon, h, &outs) {
            Ok(evo) => {
                let tracks = evo.point_tracks();
                let refs = if evo.resamples == 0 {
                    &reference[..]
                } else {
                    &reference[n_boundary..]
                };
                let summary = error_summary(refs, &tracks, &times)?;
                let rung = SweepRung {
                    n,
                    masses,
                    e_target: plan.e_target,
                    delta_res: plan.delta_res,
                    delta_used: plan.delta_used,
                    status: if summary.sup_error <= params.eps
                        && summary.max_hausdorff <= params.eps
                    {
                        RungStatus::Success
                    } else {
                        RungStatus::Failed
                    },
                    sup_error: Some(summary.sup_error),
                    max_hausdorff: Some(summary.max_hausdorff),
                    min_agent_distance: evo.min_agent_distance,
                    resamples: evo.resamples,
                    points: tracks.len(),
                    detail: None,
                };
                outcome.candidate = tracks;
                outcome.errors = Some(summary);
                outcome.schedule = Some(plan.schedule);
                rung
            }
            Err(DynamicsError::Inadmissible {
                t,
                distance,
                partial,
            }) => SweepRung {
                n,
                masses,
                e_target: plan.e_target,
                delta_res: plan.delta_res,
                delta_used: plan.delta_used,
                status: RungStatus::Inadmissible,
                sup_error: None,
                max_hausdorff: None,
                min_agent_distance: partial.min_agent_distance,
                resamples: partial.resamples,
                points: 0,
                detail: Some(format!("agent within {distance:e} of the set at t = {t}")),
            },
            Err(e) => return Err(e.into()),
        };
        outcome.rungs.push(rung);
    }
    outcome.success = outcome
        .rungs
        .last()
        .is_some_and(|r| r.status == RungStatus::Success);
    let sup: Vec<Option<f64>> = outcome.rungs.iter().map(|r| r.sup_error).collect();
    let hd: Vec<Option<f64>> = outcome.rungs.iter().map(|r| r.max_hausdorff).collect();
    let decreasing = |v: &[Option<f64>]| {
        v.windows(2)
            .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a))
    };
    outcome.monotone = decreasing(&sup) && decreasing(&hd);

    if let (Some(delta), true) = (last_delta, params.continuum_points > 0) {
        let stride = starts.len().div_ceil(params.continuum_points).max(1);
        let idx: Vec<usize> = (0..starts.len()).step_by(stride).collect();
        let subset: Vec<Vec2> = idx.iter().map(|&i| starts[i]).collect();
        let frames: Vec<f64> = (0..=32).map(|k| horizon * k as f64 / 32.0).collect();
        let field = BoundaryField::from_tube(tube, scare.clone(), &frames, PLANNING_PANELS)?
            .with_scale(delta)?
            .with_far_point(far_point)?;
        let flows =
            flow_boundary_field(&field, Some(tube), &subset, horizon, horizon / 400.0, &outs)?;
        let refs: Vec<SweepingSolution> = idx.iter().map(|&i| reference[i].clone()).collect();
        let summary = error_summary(&refs, &flows, &times)?;
        outcome.continuum = Some(ContinuumReport {
            delta,
            points: subset.len(),
            sup_error: summary.sup_error,
            max_hausdorff: summary.max_hausdorff,
        });
    }
    outcome.reference = reference;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Contour;

    fn schedule(n: usize, m: usize, f: f64) -> ControlSchedule {
        let nodes = (0..n)
            .map(|i| ScheduleNode {
                t: 2.0 * i as f64 / n as f64,
                agents: (0..m).map(|j| Vec2::new(i as f64, j as f64)).collect(),
                active_fraction: f,
            })
            .collect();
        ControlSchedule::new(2.0, Vec2::new(1e6, 0.0), nodes).unwrap()
    }

    #[test]
    fn schedule_slots_are_right_closed() {
        let s = schedule(2, 4, 1.0);
        assert_eq!(s.dwell(), 0.25);
        assert_eq!(s.total_dwell(), 2.0);
        assert_eq!(s.agent_at(0.0), Vec2::new(0.0, 0.0));
        assert_eq!(s.agent_at(0.25), Vec2::new(0.0, 0.0));
        assert_eq!(s.agent_at(0.26), Vec2::new(0.0, 1.0));
        assert_eq!(s.agent_at(1.1), Vec2::new(1.0, 0.0));
        assert_eq!(s.agent_at(2.0), Vec2::new(1.0, 3.0));
        assert_eq!(s.breakpoints(0.0, 2.0).len(), 7);
    }

    #[test]
    fn partial_slots_switch_to_far_point() {
        let s = schedule(1, 2, 0.25);
        assert_eq!(s.agent_at(0.2), Vec2::new(0.0, 0.0));
        assert_eq!(s.agent_at(0.5), Vec2::new(1e6, 0.0));
        assert_eq!(s.agent_at(1.2), Vec2::new(0.0, 1.0));
        assert_eq!(s.breakpoints(0.0, 2.0), vec![0.25, 1.0, 1.25]);
        assert_eq!(s.breakpoints(0.3, 1.1), vec![1.0]);
    }

    #[test]
    fn schedule_json_round_trip_and_validation() {
        let s = schedule(3, 2, 0.5);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"T\":2.0") && text.contains("\"N\":2"));
        let back: ControlSchedule = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let bad = text.replace("\"n\":3", "\"n\":4");
        assert!(serde_json::from_str::<ControlSchedule>(&bad).is_err());
        let minimal =
            r#"{"T":1,"n":1,"N":1,"h":1,"far_point":[5,0],"nodes":[{"t":0,"agents":[[2,0]]}]}"#;
        let m: ControlSchedule = serde_json::from_str(minimal).unwrap();
        assert_eq!(m.nodes()[0].active_fraction, 1.0);
        assert_eq!(m.agent_at(0.7), Vec2::new(2.0, 0.0));
    }

    #[test]
    fn circle_masses_sit_at_arc_midpoints() {
        let q = SurfaceQuadrature::from_contour(
            Arc::new(Contour::Circle {
                center: Vec2::ZERO,
                radius: 1.0,
            }),
            16,
        )
        .unwrap();
        let m = discretize_measure(&q, 0.1, 4, Vec2::new(1e6, 0.0)).unwrap();
        for (k, p) in m.points.iter().enumerate() {
            let a = PI / 4.0 + k as f64 * PI / 2.0;
            assert!(p.dist(Vec2::from_angle(a)) < 1e-15);
        }
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
        assert!((m.weight - 0.1 * 2.0 * PI / 4.0).abs() < 1e-15);
        assert!(discretize_measure(&q, 1.0, 4, Vec2::ZERO).is_err());
    }

    #[test]
    fn symmetric_masses_cancel_at_center() {
        let q = SurfaceQuadrature::from_contour(
            Arc::new(Contour::Circle {
                center: Vec2::ZERO,
                radius: 1.0,
            }),
            16,
        )
        .unwrap();
        let scare = ScareFunction::power_law(3.0, 1.0).unwrap();
        let m = discretize_measure(&q, 0.1, 16, Vec2::new(1e6, 0.0)).unwrap();
        let far = kernel(&scare, -m.far_point).unwrap() * m.far_weight;
        let v = m.velocity(&scare, Vec2::ZERO).unwrap() - far;
        assert!(v.norm() < 1e-12, "{v:?}");
    }

    #[test]
    fn single_mass_schedule_is_static() {
        let tube = MovingTube::ball(Vec2::ZERO, 1.0, 3.0);
        let s = assemble_schedule(&SynthesisParams {
            n: 1,
            masses: 1,
            delta0: 1.0 / (2.0 * PI),
            eps: 0.1,
            horizon: 3.0,
            tube,
            far_point: Vec2::new(1e6, 0.0),
        })
        .unwrap();
        assert!(s.breakpoints(0.0, 3.0).is_empty());
        let p = s.agent_at(0.0);
        for t in [0.1, 1.0, 2.9, 3.0] {
            assert_eq!(s.agent_at(t), p);
        }
        assert!((p.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn concentric_disk_tube_is_a_ball() {
        let o0 = SetState::disk(Vec2::ZERO, 1.0, 128, 0.1);
        let o1 = SetState::disk(Vec2::ZERO, 0.3, 64, 0.05);
        let b = build_tube(&o0, &o1, 5.0, 0.05).unwrap();
        assert_eq!(b.kind, TubeKind::Ball);
        let c = b.tube.contour(5.0).unwrap();
        assert!((c.perimeter() - 2.0 * PI * 0.33).abs() < 1e-9);
        let outside = SetState::disk(Vec2::new(0.9, 0.0), 0.3, 64, 0.05);
        assert!(matches!(
            build_tube(&o0, &outside, 5.0, 0.05),
            Err(SynthesisError::Precondition(_))
        ));
    }

    #[test]
    fn square_to_disk_level_set_tube() {
        let sq = SetState::polygon(
            &[
                Vec2::new(-1.0, -1.0),
                Vec2::new(1.0, -1.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(-1.0, 1.0),
            ],
            0.05,
            0.1,
            Vec2::ZERO,
        )
        .unwrap();
        let o1 = SetState::disk(Vec2::new(0.1, 0.0), 0.4, 64, 0.05);
        let b = build_tube(&sq, &o1, 2.0, 0.1).unwrap();
        assert_eq!(b.kind, TubeKind::LevelSet);
        for k in 0..=20 {
            let t = 2.0 * k as f64 / 20.0;
            assert!(b.tube.contains(t, Vec2::new(0.1, 0.0)));
        }
    }

    #[test]
    fn touching_tube_is_rejected() {
        let tube = MovingTube::Ball {
            center: Path::constant(Vec2::ZERO),
            radius: Path::linear(0.0, 1.0, 1.0, 0.32),
            horizon: 1.0,
        };
        let o1 = SetState::disk(Vec2::ZERO, 0.3, 64, 0.05);
        let scare = ScareFunction::power_law(3.0, 1.0).unwrap();
        let r = choose_delta0(&tube, &scare, &o1, 0.05, 1.0, Vec2::new(1e6, 0.0));
        assert!(matches!(r, Err(SynthesisError::ScaleUnderflow(_))));
    }
}
