//! Time integration: trajectories under a moving agent or under a
//! boundary-integral field, flows of whole sets, and the catching-up scheme
//! for the sweeping process.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fields::{kernel, BoundaryField, FieldError};
use crate::geometry::{GeometryError, MovingTube, SetState, Vec2};
use crate::scare::ScareFunction;

/// Guard radius around the agent.
pub const R_MIN: f64 = 1e-6;
/// Largest accepted relative change of the velocity over one step.
pub const VELOCITY_VARIATION: f64 = 0.1;
/// Absolute velocity change always accepted, so that points at rest
/// (e.g. at a symmetry center) do not force step underflow.
pub const VELOCITY_FLOOR: f64 = 1e-12;
/// Tolerance for the sweeping state staying inside the moving set.
pub const CONTACT_TOL: f64 = 1e-9;
/// Threshold below which `-psi` is flagged as an excursion.
pub const EXCURSION_TOL: f64 = 1e-6;
/// Spacing ratio that triggers boundary re-parameterization.
pub const RESAMPLE_RATIO: f64 = 3.0;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(
        "trajectory came within {distance:e} of the agent at t = {t} (guard radius {R_MIN:e})"
    )]
    Singularity { t: f64, distance: f64 },
    #[error("agent at distance {distance:e} from the evolving set at t = {t}; control is not admissible")]
    Inadmissible {
        t: f64,
        distance: f64,
        partial: Box<Evolution>,
    },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("initial point ({x}, {y}) is outside the moving set at t = 0")]
    StartOutside { x: f64, y: f64 },
    #[error("invalid integration request: {0}")]
    Domain(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A piecewise-constant agent position.
pub trait Control: Sync {
    fn agent_at(&self, t: f64) -> Vec2;
    /// Switch times strictly inside `(t0, t1)`, increasing.
    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64>;
}

/// The agent never moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticControl(pub Vec2);

impl Control for StaticControl {
    fn agent_at(&self, _t: f64) -> Vec2 {
        self.0
    }
    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepFlag {
    /// step halvings before acceptance
    pub rejections: u32,
    /// distance to the agent at the start of the step (infinite for
    /// boundary-field flows)
    pub agent_distance: f64,
    /// `-psi` dropped below `-EXCURSION_TOL` (boundary-field flows)
    pub excursion: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec2>,
    pub flags: Vec<StepFlag>,
}

impl Trajectory {
    pub fn end(&self) -> Vec2 {
        *self.points.last().expect("trajectory has a start point")
    }

    /// Linear interpolation in time, clamped to the recorded range.
    pub fn at(&self, t: f64) -> Vec2 {
        interpolate(&self.times, &self.points, t)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,x,y")?;
        for (t, p) in self.times.iter().zip(&self.points) {
            writeln!(w, "{t},{},{}", p.x, p.y)?;
        }
        Ok(())
    }

    pub fn excursions(&self) -> usize {
        self.flags.iter().filter(|f| f.excursion).count()
    }
}

pub(crate) fn interpolate(times: &[f64], points: &[Vec2], t: f64) -> Vec2 {
    let k = times.partition_point(|&s| s <= t);
    if k == 0 {
        return points[0];
    }
    if k >= times.len() {
        return points[times.len() - 1];
    }
    let (a, b) = (times[k - 1], times[k]);
    points[k - 1].lerp(points[k], (t - a) / (b - a))
}

/// Catching-up iterates with a per-step flag recording whether the
/// projection moved the point.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepingSolution {
    pub times: Vec<f64>,
    pub points: Vec<Vec2>,
    pub contact: Vec<bool>,
}

impl SweepingSolution {
    /// Piecewise-constant interpolant: the latest iterate at or before `t`.
    pub fn at(&self, t: f64) -> Vec2 {
        let k = self
            .times
            .partition_point(|&s| s <= t + 1e-12 * (1.0 + t.abs()));
        self.points[k.saturating_sub(1)]
    }

    /// Linear interpolation between iterates.
    pub fn at_linear(&self, t: f64) -> Vec2 {
        interpolate(&self.times, &self.points, t)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,x,y,contact")?;
        for ((t, p), c) in self.times.iter().zip(&self.points).zip(&self.contact) {
            writeln!(w, "{t},{},{},{}", p.x, p.y, u8::from(*c))?;
        }
        Ok(())
    }
}

fn rk4<F: Fn(Vec2) -> Option<Vec2>>(v: &F, x: Vec2, k1: Vec2, h: f64) -> Option<Vec2> {
    let k2 = v(x + k1 * (0.5 * h))?;
    let k3 = v(x + k2 * (0.5 * h))?;
    let k4 = v(x + k3 * h)?;
    Some(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Step statistics accumulated over one advance.
#[derive(Debug, Clone, Copy, Default)]
struct Advance {
    rejections: u32,
    steps: u32,
}

/// Advances `x` under the static agent `xi` over a time span `dt`.
fn advance_static(
    scare: &ScareFunction,
    xi: Vec2,
    x: Vec2,
    t0: f64,
    dt: f64,
    h_max: f64,
) -> Result<(Vec2, Advance), DynamicsError> {
    let v = |y: Vec2| {
        let d = y - xi;
        (d.norm() >= R_MIN).then(|| kernel(scare, d)).flatten()
    };
    let mut stats = Advance::default();
    let mut x = x;
    let mut t = 0.0;
    let mut h = h_max.min(dt);
    let h_floor = 1e-14 * dt.max(1e-300);
    while t < dt {
        if dt - t <= 1e-15 * dt {
            break;
        }
        h = h.min(dt - t);
        let Some(v0) = v(x) else {
            return Err(DynamicsError::Singularity {
                t: t0 + t,
                distance: x.dist(xi),
            });
        };
        loop {
            let accepted = match rk4(&v, x, v0, h) {
                Some(x1) => match v(x1) {
                    Some(v1)
                        if (v1 - v0).norm() <= VELOCITY_VARIATION * v0.norm() + VELOCITY_FLOOR =>
                    {
                        Some(x1)
                    }
                    _ => None,
                },
                None => None,
            };
            if let Some(x1) = accepted {
                x = x1;
                t += h;
                stats.steps += 1;
                h = (2.0 * h).min(h_max);
                break;
            }
            stats.rejections += 1;
            h *= 0.5;
            if h < h_floor {
                return Err(DynamicsError::StepUnderflow { t: t0 + t });
            }
        }
    }
    Ok((x, stats))
}

/// Merged, sorted switch and output times in `(0, T)`, with `0` and `T`.
fn time_cuts(control: &dyn Control, t_end: f64, extra: &[f64]) -> Vec<f64> {
    let mut cuts = vec![0.0, t_end];
    cuts.extend(control.breakpoints(0.0, t_end));
    cuts.extend(extra.iter().copied().filter(|&t| t > 0.0 && t < t_end));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_end);
    cuts
}

fn uniform_times(t_end: f64, h: f64) -> Vec<f64> {
    let n = (t_end / h).round().max(1.0) as usize;
    (1..n).map(|k| t_end * k as f64 / n as f64).collect()
}

/// Single trajectory of `x' = v(x, xi(t))`. Every accepted step is
/// recorded; switch times and multiples of `h_max` are breakpoints.
pub fn integrate_agent(
    scare: &ScareFunction,
    control: &dyn Control,
    x0: Vec2,
    t_end: f64,
    h_max: f64,
) -> Result<Trajectory, DynamicsError> {
    if !(t_end > 0.0 && h_max > 0.0) {
        return Err(DynamicsError::Domain(
            "horizon and step must be positive".into(),
        ));
    }
    let cuts = time_cuts(control, t_end, &uniform_times(t_end, h_max));
    let mut traj = Trajectory {
        times: vec![0.0],
        points: vec![x0],
        flags: vec![StepFlag::default()],
    };
    let mut x = x0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let xi = control.agent_at(0.5 * (a + b));
        let d = x.dist(xi);
        if d < R_MIN {
            return Err(DynamicsError::Singularity { t: a, distance: d });
        }
        let (x1, st) = advance_static(scare, xi, x, a, b - a, h_max)?;
        x = x1;
        traj.times.push(b);
        traj.points.push(x);
        traj.flags.push(StepFlag {
            rejections: st.rejections,
            agent_distance: d,
            excursion: false,
        });
    }
    Ok(traj)
}

/// Positions of many points under the same control, at the given output
/// times (which must lie in `(0, T]`).
pub fn flow_points(
    scare: &ScareFunction,
    control: &dyn Control,
    points: &[Vec2],
    t_end: f64,
    h_max: f64,
    output_times: &[f64],
) -> Result<Vec<Vec<Vec2>>, DynamicsError> {
    let cuts = time_cuts(control, t_end, output_times);
    let mut xs = points.to_vec();
    let mut out = Vec::new();
    let mut next_out = 0;
    let mut outs: Vec<f64> = output_times.to_vec();
    outs.sort_by(f64::total_cmp);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let xi = control.agent_at(0.5 * (a + b));
        xs = xs
            .par_iter()
            .map(|&x| advance_static(scare, xi, x, a, b - a, h_max).map(|r| r.0))
            .collect::<Result<_, _>>()?;
        while next_out < outs.len() && outs[next_out] <= b + 1e-12 * t_end {
            out.push(xs.clone());
            next_out += 1;
        }
    }
    Ok(out)
}

/// Snapshots of a flowed set.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Evolution {
    pub times: Vec<f64>,
    pub states: Vec<SetState>,
    /// smallest agent-to-set distance over all control segments
    pub min_agent_distance: f64,
    /// number of boundary re-parameterizations
    pub resamples: usize,
    /// output times at which the boundary polygon was not simple
    pub non_simple_times: Vec<f64>,
}

impl Evolution {
    pub fn last(&self) -> &SetState {
        self.states
            .last()
            .expect("evolution holds the initial state")
    }

    /// Per-point tracks across output times. Boundary vertices are
    /// included only when the boundary was never re-parameterized.
    pub fn point_tracks(&self) -> Vec<Trajectory> {
        let with_boundary = self.resamples == 0;
        let pick = |s: &SetState| -> Vec<Vec2> {
            if with_boundary {
                s.all_points().collect()
            } else {
                s.samples().to_vec()
            }
        };
        let cols: Vec<Vec<Vec2>> = self.states.iter().map(pick).collect();
        let m = cols[0].len();
        (0..m)
            .map(|k| Trajectory {
                times: self.times.clone(),
                points: cols.iter().map(|c| c[k]).collect(),
                flags: vec![StepFlag::default(); self.times.len()],
            })
            .collect()
    }

    /// One row per output time: `t,area,perimeter,vertices,samples`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,area,perimeter,vertices,samples")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            writeln!(
                w,
                "{t},{},{},{},{}",
                s.signed_area(),
                s.perimeter(),
                s.boundary().len(),
                s.samples().len()
            )?;
        }
        Ok(())
    }
}

/// Flows every boundary vertex and interior sample of `omega0` under the
/// agent control, checking admissibility on each control segment.
pub fn evolve_set(
    scare: &ScareFunction,
    omega0: &SetState,
    control: &dyn Control,
    t_end: f64,
    h_max: f64,
    output_times: &[f64],
) -> Result<Evolution, DynamicsError> {
    if !(t_end > 0.0 && h_max > 0.0) {
        return Err(DynamicsError::Domain(
            "horizon and step must be positive".into(),
        ));
    }
    omega0.validate()?;
    let mut outs: Vec<f64> = output_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t <= t_end)
        .collect();
    outs.sort_by(f64::total_cmp);
    let cuts = time_cuts(control, t_end, &outs);
    let (mut boundary, mut samples) = omega0.clone().into_parts();
    let mut evo = Evolution {
        times: vec![0.0],
        states: vec![omega0.clone()],
        min_agent_distance: f64::INFINITY,
        ..Default::default()
    };
    let mut next_out = 0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let xi = control.agent_at(0.5 * (a + b));
        let current = SetState::from_parts_unchecked(boundary, samples);
        let d = current.distance_to_region(xi);
        let d = current.all_points().map(|p| p.dist(xi)).fold(d, f64::min);
        evo.min_agent_distance = evo.min_agent_distance.min(d);
        if d < R_MIN {
            return Err(DynamicsError::Inadmissible {
                t: a,
                distance: d,
                partial: Box::new(evo),
            });
        }
        let (bd, sm) = current.into_parts();
        let step = |pts: &[Vec2]| -> Result<Vec<Vec2>, DynamicsError> {
            pts.par_iter()
                .map(|&x| advance_static(scare, xi, x, a, b - a, h_max).map(|r| r.0))
                .collect()
        };
        boundary = step(&bd)?;
        samples = step(&sm)?;
        let mut state = SetState::from_parts_unchecked(boundary, samples);
        if state.spacing_ratio() > RESAMPLE_RATIO {
            state.resample_boundary();
            evo.resamples += 1;
        }
        while next_out < outs.len() && outs[next_out] <= b + 1e-12 * t_end {
            if !state.is_simple() {
                evo.non_simple_times.push(outs[next_out]);
            }
            evo.times.push(outs[next_out]);
            evo.states.push(state.clone());
            next_out += 1;
        }
        (boundary, samples) = state.into_parts();
    }
    Ok(evo)
}

/// Trajectory of `x' = w(t, x)` for a boundary-integral field. Steps are
/// additionally capped so that no step covers more than a quarter of the
/// distance to the boundary. With a tube, points where `-psi` drops below
/// `-EXCURSION_TOL` are flagged.
pub fn integrate_boundary_field(
    field: &BoundaryField,
    tube: Option<&MovingTube>,
    x0: Vec2,
    t_end: f64,
    h_max: f64,
    output_times: &[f64],
) -> Result<Trajectory, DynamicsError> {
    if !(t_end > 0.0 && h_max > 0.0) {
        return Err(DynamicsError::Domain(
            "horizon and step must be positive".into(),
        ));
    }
    let mut cuts = vec![0.0, t_end];
    cuts.extend(
        field
            .frame_times()
            .into_iter()
            .filter(|&t| t > 0.0 && t < t_end),
    );
    let mut outs: Vec<f64> = output_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t <= t_end)
        .collect();
    outs.sort_by(f64::total_cmp);
    cuts.extend(outs.iter().copied().filter(|&t| t < t_end));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_end);

    let v = |t: f64, x: Vec2| field.velocity(t, x);
    let mut traj = Trajectory {
        times: vec![0.0],
        points: vec![x0],
        flags: vec![StepFlag::default()],
    };
    let mut x = x0;
    let mut rejections = 0u32;
    let mut excursion = false;
    let mut next_out = 0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut t = a;
        let mut h = h_max.min(b - a);
        while b - t > 1e-14 * t_end {
            h = h.min(b - t);
            let v0 = v(t, x)?;
            let speed = v0.norm();
            if speed > 0.0 {
                let d = field.distance_to_boundary(t, x);
                h = h.min(0.25 * d / speed).max(1e-14 * t_end);
            }
            loop {
                let stage = || -> Result<(Vec2, Vec2), FieldError> {
                    let k2 = v(t + 0.5 * h, x + v0 * (0.5 * h))?;
                    let k3 = v(t + 0.5 * h, x + k2 * (0.5 * h))?;
                    let k4 = v(t + h, x + k3 * h)?;
                    let x1 = x + (v0 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                    Ok((x1, v(t + h, x1)?))
                };
                let ok = match stage() {
                    Ok((x1, v1))
                        if (v1 - v0).norm() <= VELOCITY_VARIATION * speed + VELOCITY_FLOOR =>
                    {
                        Some(x1)
                    }
                    _ => None,
                };
                if let Some(x1) = ok {
                    x = x1;
                    t += h;
                    h = (2.0 * h).min(h_max);
                    break;
                }
                rejections += 1;
                h *= 0.5;
                if h < 1e-14 * t_end {
                    return Err(DynamicsError::StepUnderflow { t });
                }
            }
            if let Some(tube) = tube {
                if -tube.psi(t, x) < -EXCURSION_TOL {
                    excursion = true;
                }
            }
        }
        while next_out < outs.len() && outs[next_out] <= b + 1e-12 * t_end {
            traj.times.push(outs[next_out]);
            traj.points.push(x);
            traj.flags.push(StepFlag {
                rejections,
                agent_distance: f64::INFINITY,
                excursion,
            });
            rejections = 0;
            excursion = false;
            next_out += 1;
        }
    }
    Ok(traj)
}

/// Independent boundary-field trajectories from many starting points.
pub fn flow_boundary_field(
    field: &BoundaryField,
    tube: Option<&MovingTube>,
    points: &[Vec2],
    t_end: f64,
    h_max: f64,
    output_times: &[f64],
) -> Result<Vec<Trajectory>, DynamicsError> {
    points
        .par_iter()
        .map(|&x| integrate_boundary_field(field, tube, x, t_end, h_max, output_times))
        .collect()
}

/// Moreau catching-up: `x_{k+1} = proj_{V(t_{k+1})}(x_k)` on a uniform grid.
pub fn catching_up(
    tube: &MovingTube,
    x0: Vec2,
    t_end: f64,
    n_steps: usize,
) -> Result<SweepingSolution, DynamicsError> {
    if n_steps == 0 || !(t_end > 0.0) {
        return Err(DynamicsError::Domain(
            "need a positive horizon and at least one step".into(),
        ));
    }
    if tube.psi(0.0, x0) > CONTACT_TOL {
        return Err(DynamicsError::StartOutside { x: x0.x, y: x0.y });
    }
    let mut sol = SweepingSolution {
        times: vec![0.0],
        points: vec![x0],
        contact: vec![false],
    };
    let mut x = x0;
    for k in 1..=n_steps {
        let t = t_end * k as f64 / n_steps as f64;
        let y = tube.project_onto(t, x)?;
        let contact = y != x || tube.psi(t, y) > -CONTACT_TOL;
        if tube.psi(t, y) > CONTACT_TOL {
            return Err(DynamicsError::Geometry(GeometryError::ProjectionFailed {
                iterations: 0,
                residual: tube.psi(t, y),
                x: x.x,
                y: x.y,
                t,
            }));
        }
        x = y;
        sol.times.push(t);
        sol.points.push(x);
        sol.contact.push(contact);
    }
    Ok(sol)
}
