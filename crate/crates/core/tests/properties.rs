use std::f64::consts::PI;

use proptest::prelude::*;
use sweepctl::analysis::{error_summary, volume_bound_check};
use sweepctl::dynamics::Control;
use sweepctl::dynamics::{catching_up, evolve_set, StaticControl};
use sweepctl::fields::{agent_velocity, AgentField, BoundaryField};
use sweepctl::geometry::{
    hausdorff_points, quadrature_of_boundary, MovingTube, Path, SetState, Vec2,
};
use sweepctl::scare::{classify, necessary_integral, ScareFunction};
use sweepctl::synthesis::{discretize_measure, partition_phase, ControlSchedule, ScheduleNode};

fn vec2(r: f64) -> impl Strategy<Value = Vec2> {
    (-r..r, -r..r).prop_map(|(x, y)| Vec2::new(x, y))
}

fn cloud(n: usize) -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec(vec2(2.0), 1..n)
}

fn power(p: f64) -> ScareFunction {
    ScareFunction::power_law(p, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_is_strictly_decreasing(p in 0.05f64..8.0, c in 0.1f64..10.0, r0 in 1e-3f64..1.0, steps in prop::collection::vec(1e-3f64..0.5, 2..20)) {
        let f = ScareFunction::power_law(p, c).unwrap();
        let mut r = r0;
        let mut prev = f.phi_eval(r).unwrap();
        for s in steps {
            r += s;
            let v = f.phi_eval(r).unwrap();
            prop_assert!(v < prev, "phi({r}) = {v} not below {prev}");
            prev = v;
        }
    }

    #[test]
    fn growth_condition_forces_divergent_integral(p in 0.0f64..8.0, d in 2u32..5) {
        let f = power(p);
        if classify(&f, d).a2 == Some(true) {
            prop_assert!(necessary_integral(&f, d).finite().is_none());
        }
    }

    #[test]
    fn hausdorff_is_a_metric_on_clouds(a in cloud(30), b in cloud(30), c in cloud(30)) {
        let ab = hausdorff_points(&a, &b);
        prop_assert_eq!(ab, hausdorff_points(&b, &a));
        prop_assert_eq!(hausdorff_points(&a, &a), 0.0);
        prop_assert!(hausdorff_points(&a, &c) <= ab + hausdorff_points(&b, &c) + 1e-12);
    }

    #[test]
    fn projection_is_idempotent(a in 0.5f64..2.0, b in 0.5f64..2.0, angle in 0.0f64..PI, x in vec2(4.0), t in 0.0f64..1.0) {
        let tube = MovingTube::Ellipse {
            center: Path::linear(0.0, Vec2::ZERO, 1.0, Vec2::new(0.3, -0.2)),
            a: Path::constant(a),
            b: Path::constant(b),
            angle,
            horizon: 1.0,
        };
        let y = tube.project_onto(t, x).unwrap();
        let z = tube.project_onto(t, y).unwrap();
        prop_assert!(y.dist(z) <= 1e-10, "{:?} vs {:?}", y, z);
    }

    #[test]
    fn ball_profile_is_exact(c in vec2(1.0), v in vec2(1.0), r in 0.2f64..2.0, x in vec2(3.0), t in 0.0f64..2.0) {
        let tube = MovingTube::Ball {
            center: Path::linear(0.0, c, 2.0, c + v),
            radius: Path::linear(0.0, r, 2.0, 0.5 * r),
            horizon: 2.0,
        };
        let center = c + v * (t / 2.0);
        let radius = r * (1.0 - 0.25 * t);
        prop_assume!(x.dist(center) > 1e-6);
        let prof = tube.signed_distance_profile(t, x).unwrap();
        prop_assert!((prof.distance - (x.dist(center) - radius)).abs() <= 1e-12);
    }

    #[test]
    fn quadrature_weights_survive_rigid_motions(shift in vec2(5.0), angle in 0.0f64..(2.0 * PI)) {
        let base = MovingTube::Ellipse { center: Path::constant(Vec2::ZERO), a: Path::constant(2.0), b: Path::constant(1.0), angle: 0.2, horizon: 1.0 };
        let moved = MovingTube::Ellipse { center: Path::constant(shift), a: Path::constant(2.0), b: Path::constant(1.0), angle: 0.2 + angle, horizon: 1.0 };
        let q0 = quadrature_of_boundary(&base, 0.0, 128).unwrap();
        let q1 = quadrature_of_boundary(&moved, 0.0, 128).unwrap();
        for (p, q) in q0.panels.iter().zip(&q1.panels) {
            prop_assert!((p.weight - q.weight).abs() <= 1e-9);
        }
        prop_assert!((q0.total_measure - q1.total_measure).abs() <= 1e-9);
    }

    #[test]
    fn agent_speed_is_phi_of_distance(p in 0.1f64..6.0, agent in vec2(3.0), x in vec2(3.0)) {
        let f = power(p);
        let r = x.dist(agent);
        prop_assume!(r > 1e-3);
        let v = agent_velocity(&AgentField { scare: f.clone(), agent }, x).unwrap();
        let expect = f.phi_eval(r).unwrap();
        prop_assert!((v.norm() - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn scaling_is_linear(scale in 1e-6f64..10.0, x in vec2(0.7)) {
        let tube = MovingTube::ball(Vec2::ZERO, 1.0, 1.0);
        let f = BoundaryField::from_tube(&tube, power(3.0), &[0.0], 128).unwrap();
        let v1 = f.velocity(0.0, x).unwrap();
        let vs = f.clone().with_scale(scale).unwrap().velocity(0.0, x).unwrap();
        prop_assert_eq!(vs, v1 * scale);
    }

    #[test]
    fn catching_up_stays_inside(v in vec2(0.5), shrink in 0.0f64..0.6, start in vec2(0.7), steps in 10usize..300) {
        let tube = MovingTube::Ball {
            center: Path::linear(0.0, Vec2::ZERO, 1.0, v),
            radius: Path::linear(0.0, 1.0, 1.0, 1.0 - shrink),
            horizon: 1.0,
        };
        prop_assume!(start.norm() < 1.0);
        let sol = catching_up(&tube, start, 1.0, steps).unwrap();
        for (t, x) in sol.times.iter().zip(&sol.points) {
            prop_assert!(tube.psi(*t, *x) <= 1e-9);
        }
    }

    #[test]
    fn smaller_concentric_tube_pushes_further(r_big in 0.5f64..1.0, extra in 0.0f64..0.4, start in vec2(0.5)) {
        let big = MovingTube::Ball { center: Path::constant(Vec2::ZERO), radius: Path::linear(0.0, 1.0, 1.0, r_big), horizon: 1.0 };
        let small = MovingTube::Ball { center: Path::constant(Vec2::ZERO), radius: Path::linear(0.0, 1.0, 1.0, r_big - extra), horizon: 1.0 };
        prop_assume!(start.norm() < 1.0);
        let a = catching_up(&big, start, 1.0, 200).unwrap();
        let b = catching_up(&small, start, 1.0, 200).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!(q.norm() <= p.norm() + 1e-12);
        }
    }

    #[test]
    fn schedule_covers_the_horizon(n in 1usize..12, m in 1usize..12, horizon in 0.1f64..10.0, frac in 0.0f64..=1.0, t in 0.0f64..1.0) {
        let nodes: Vec<ScheduleNode> = (0..n)
            .map(|i| ScheduleNode {
                t: horizon * i as f64 / n as f64,
                agents: (0..m).map(|j| Vec2::new(i as f64, j as f64)).collect(),
                active_fraction: frac,
            })
            .collect();
        let far = Vec2::new(1e6, 0.0);
        let s = ControlSchedule::new(horizon, far, nodes).unwrap();
        prop_assert!((s.total_dwell() - horizon).abs() <= 1e-12 * horizon);
        prop_assert!(((n * m) as f64 * s.dwell() - horizon).abs() <= 1e-12 * horizon);
        let tt = t * horizon;
        let xi = s.agent_at(tt);
        prop_assert!(xi == far || (xi.x >= 0.0 && xi.x < n as f64 && xi.y >= 0.0 && xi.y < m as f64));
    }

    #[test]
    fn discretized_measure_is_a_probability(r in 0.2f64..2.0, frac in 0.0f64..1.0, masses in 1usize..200) {
        let tube = MovingTube::ball(Vec2::new(0.3, -0.1), r, 1.0);
        let q = quadrature_of_boundary(&tube, 0.0, 64).unwrap();
        let delta = frac / q.total_measure;
        let m = discretize_measure(&q, delta, masses, Vec2::new(1e6, 0.0)).unwrap();
        prop_assert_eq!(m.points.len(), masses);
        prop_assert!((m.total_mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn partition_phase_is_a_fraction(i in 0usize..1_000_000) {
        let p = partition_phase(i);
        prop_assert!((0.0..1.0).contains(&p));
    }

    #[test]
    fn volume_margin_starts_at_zero(p in 0.05f64..0.99, r in 0.1f64..2.0) {
        let f = power(p);
        let s = SetState::disk(Vec2::ZERO, r, 64, 0.0);
        let rep = volume_bound_check(&[0.0, 0.5], &[s.clone(), s], &f, 2).unwrap();
        prop_assert_eq!(rep.margin[0], 0.0);
    }

    #[test]
    fn error_summary_is_symmetric(a in prop::collection::vec(vec2(1.0), 1..20), shift in vec2(0.1)) {
        let ra: Vec<Vec<Vec2>> = a.iter().map(|p| vec![*p]).collect();
        let rb: Vec<Vec<Vec2>> = a.iter().map(|p| vec![*p + shift]).collect();
        let times = [0.0, 0.5, 1.0];
        let ab = error_summary(&ra, &rb, &times).unwrap();
        let ba = error_summary(&rb, &ra, &times).unwrap();
        prop_assert_eq!(ab.sup_error, ba.sup_error);
        prop_assert_eq!(ab.max_hausdorff, ba.max_hausdorff);
        prop_assert_eq!(error_summary(&ra, &ra, &times).unwrap().sup_error, 0.0);
        prop_assert_eq!(ab.sup_error == 0.0, shift == Vec2::ZERO);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn circle_field_is_rotation_equivariant(x in vec2(0.6), k in 1usize..64) {
        let n = 64;
        let tube = MovingTube::ball(Vec2::ZERO, 1.0, 1.0);
        let f = BoundaryField::from_tube(&tube, power(3.0), &[0.0], n).unwrap();
        let angle = 2.0 * PI * k as f64 / n as f64;
        let v = f.velocity(0.0, x).unwrap();
        let w = f.velocity(0.0, x.rotate(angle)).unwrap();
        prop_assert!(w.dist(v.rotate(angle)) <= 1e-9 * v.norm().max(1.0), "{:?} vs {:?}", w, v.rotate(angle));
    }

    #[test]
    fn panel_refinement_converges(x in vec2(0.5), p in 0.5f64..4.0) {
        let tube = MovingTube::Ellipse { center: Path::constant(Vec2::ZERO), a: Path::constant(1.5), b: Path::constant(1.0), angle: 0.4, horizon: 1.0 };
        let fields: Vec<Vec2> = [128usize, 256, 512, 1024]
            .iter()
            .map(|&n| BoundaryField::from_tube(&tube, power(p), &[0.0], n).unwrap().velocity(0.0, x).unwrap())
            .collect();
        let diffs: Vec<f64> = fields.windows(2).map(|w| w[1].dist(w[0])).collect();
        // chord weights make the sum second order off the circle
        prop_assert!(diffs[2] <= 1e-4 * fields[3].norm().max(1.0), "{:?}", diffs);
        for d in diffs.windows(2) {
            // below this the differences are rounding noise
            if d[0] > 1e-11 {
                prop_assert!(d[0] / d[1].max(1e-300) >= 3.0, "{:?}", diffs);
            }
        }
    }

    #[test]
    fn evolved_boundaries_stay_simple(angle in 0.0f64..(2.0 * PI), dist in 1.2f64..2.0, p in 1.0f64..4.0) {
        let f = power(p);
        let s = SetState::disk(Vec2::ZERO, 1.0, 128, 0.0);
        let ctl = StaticControl(Vec2::from_angle(angle) * dist);
        let times: Vec<f64> = (1..=8).map(|k| 0.01 * k as f64).collect();
        let evo = evolve_set(&f, &s, &ctl, 0.08, 0.002, &times).unwrap();
        prop_assert!(evo.non_simple_times.is_empty());
        prop_assert!(evo.states.iter().all(SetState::is_simple));
    }

    #[test]
    fn area_moves_continuously(angle in 0.0f64..(2.0 * PI), dist in 1.3f64..2.0, p in 0.5f64..4.0) {
        let f = power(p);
        let s = SetState::disk(Vec2::ZERO, 1.0, 128, 0.0);
        let xi = Vec2::from_angle(angle) * dist;
        let times: Vec<f64> = (1..=10).map(|k| 0.005 * k as f64).collect();
        let evo = evolve_set(&f, &s, &StaticControl(xi), 0.05, 0.001, &times).unwrap();
        // |div v| decreases with distance, so its value at the closest approach bounds the integrand
        let r0 = evo.states.iter().flat_map(|st| st.boundary().iter().map(|b| b.dist(xi))).fold(f64::INFINITY, f64::min);
        let div_max = f.field_divergence(r0, 2).abs().max(f.derivative(r0).abs() + f.value(r0) / r0);
        let area_max = evo.states.iter().map(SetState::signed_area).fold(0.0, f64::max);
        for k in 0..evo.times.len() - 1 {
            let jump = (evo.states[k + 1].signed_area() - evo.states[k].signed_area()).abs();
            let dt = evo.times[k + 1] - evo.times[k];
            prop_assert!(jump <= div_max * area_max * dt * 1.05, "jump {jump} at {}", evo.times[k]);
        }
    }
}
