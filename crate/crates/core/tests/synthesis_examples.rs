use std::f64::consts::PI;
use std::path::Path as FsPath;

use sweepctl::cli::{load_scenario, run_sweep};
use sweepctl::dynamics::flow_points;
use sweepctl::fields::{field_speed_cap_check, BoundaryField};
use sweepctl::geometry::{
    hausdorff_points, quadrature_of_boundary, MovingTube, Path, SetState, Vec2,
};
use sweepctl::quad::GaussRule;
use sweepctl::scare::ScareFunction;
use sweepctl::synthesis::{
    approximate_sweeping, build_tube, choose_delta0, confine, discretize_measure,
    neighborhood_samples, plan_rung, ConfineParams, RungOptions, RungStatus, SweepParams,
    SynthesisError, CAP_CHECK_TIMES,
};

const EPS: f64 = 0.05;
const T: f64 = 5.0;

fn power(p: f64) -> ScareFunction {
    ScareFunction::power_law(p, 1.0).unwrap()
}

fn golden_sets() -> (SetState, SetState) {
    (
        SetState::disk(Vec2::ZERO, 1.0, 256, 0.015),
        SetState::disk(Vec2::ZERO, 0.3, 256, 0.01),
    )
}

fn far() -> Vec2 {
    Vec2::new(2e6, 0.0)
}

#[test]
fn chosen_scale_passes_an_independent_recheck() {
    let (o0, o1) = golden_sets();
    let tube = build_tube(&o0, &o1, T, EPS).unwrap().tube;
    let f = power(3.0);
    let choice = choose_delta0(&tube, &f, &o1, EPS, T, far()).unwrap();
    let delta = choice.delta0;

    let times: Vec<f64> = (0..CAP_CHECK_TIMES)
        .map(|k| T * k as f64 / (CAP_CHECK_TIMES - 1) as f64)
        .collect();
    let mut p_max = 0.0f64;
    for &t in &times {
        p_max = p_max.max(
            quadrature_of_boundary(&tube, t, 1024)
                .unwrap()
                .total_measure,
        );
    }
    assert!(delta * p_max <= 1.0 + 1e-9, "mass {}", delta * p_max);

    let field = BoundaryField::from_tube(&tube, f, &times, 512)
        .unwrap()
        .with_scale(delta)
        .unwrap()
        .with_far_point(far())
        .unwrap();
    let region = neighborhood_samples(&o1, 0.5 * EPS);
    let cap = EPS / (8.0 * T);
    for &t in &times {
        assert!(
            field_speed_cap_check(&field, &region, t, cap),
            "cap fails at t = {t}"
        );
    }
}

#[test]
fn looser_tolerance_never_shrinks_the_scale() {
    let (o0, o1) = golden_sets();
    let f = power(3.0);
    let mut last = 0.0;
    for eps in [0.05, 0.1, 0.2] {
        let tube = build_tube(&o0, &o1, T, eps).unwrap().tube;
        let d = choose_delta0(&tube, &f, &o1, eps, T, far()).unwrap().delta0;
        assert!(d >= last, "eps {eps}: {d} < {last}");
        last = d;
    }
}

#[test]
fn tube_touching_the_target_has_no_scale() {
    let (_, o1) = golden_sets();
    let tube = MovingTube::Ball {
        center: Path::constant(Vec2::ZERO),
        radius: Path::linear(0.0, 1.0, T, 0.3),
        horizon: T,
    };
    let r = choose_delta0(&tube, &power(3.0), &o1, EPS, T, far());
    assert!(matches!(r, Err(SynthesisError::ScaleUnderflow(_))), "{r:?}");
}

#[test]
fn target_outside_the_start_is_rejected() {
    let o0 = SetState::disk(Vec2::ZERO, 1.0, 128, 0.0);
    let o1 = SetState::disk(Vec2::new(0.9, 0.0), 0.3, 128, 0.0);
    assert!(matches!(
        build_tube(&o0, &o1, T, EPS),
        Err(SynthesisError::Precondition(_))
    ));
}

/// Midpoint masses against composite Gauss quadrature of the exact unit-circle
/// integral plus the far mass.
fn mass_errors(probe: Vec2, counts: &[usize]) -> Vec<f64> {
    let f = power(3.0);
    let tube = MovingTube::ball(Vec2::ZERO, 1.0, 1.0);
    let delta = 0.1;
    let q = quadrature_of_boundary(&tube, 0.0, 64).unwrap();
    let component = |c: usize| {
        let g = |th: f64| {
            let d = probe - Vec2::from_angle(th);
            let r = d.norm();
            f.value(r) / r * if c == 0 { d.x } else { d.y }
        };
        let rule = GaussRule::new(20);
        let pieces = 512;
        let h = 2.0 * PI / pieces as f64;
        delta
            * (0..pieces)
                .map(|k| rule.integrate(g, k as f64 * h, (k + 1) as f64 * h))
                .sum::<f64>()
    };
    let fd = probe - far();
    let far_v = fd * ((1.0 - 2.0 * PI * delta) * f.value(fd.norm()) / fd.norm());
    let exact = Vec2::new(component(0), component(1)) + far_v;
    counts
        .iter()
        .map(|&n| {
            discretize_measure(&q, delta, n, far())
                .unwrap()
                .velocity(&f, probe)
                .unwrap()
                .dist(exact)
        })
        .collect()
}

#[test]
fn dirac_masses_converge_to_the_continuum() {
    let errs = mass_errors(Vec2::new(0.5, 0.0), &[8, 16, 32, 64, 128]);
    for w in errs.windows(2) {
        // once both sit at rounding level the ratio carries no information
        if w[0] > 1e-13 {
            assert!(w[0] / w[1] >= 3.0, "{errs:?}");
        }
    }
    assert!(errs[4] < 1e-12, "{errs:?}");
}

#[test]
fn dirac_masses_near_the_boundary_converge() {
    let errs = mass_errors(Vec2::new(0.8, 0.1), &[16, 32, 64, 128]);
    for w in errs.windows(2) {
        assert!(w[0] / w[1] >= 3.0, "{errs:?}");
    }
}

#[test]
fn agent_schedule_tracks_the_continuum_flow() {
    let (o0, o1) = golden_sets();
    let f = power(3.0);
    let built = build_tube(&o0, &o1, T, EPS).unwrap();
    let tube = built.tube;
    let choice = choose_delta0(&tube, &f, &o1, EPS, T, far()).unwrap();
    let opts = RungOptions {
        delta_floor: choice.delta0,
        gac_eps: Some(EPS),
        fixed_delta: None,
    };
    let plan = plan_rung(&tube, &f, T, 40, 64, far(), opts).unwrap();

    let pts: Vec<Vec2> = o0
        .boundary()
        .iter()
        .copied()
        .chain(o0.samples().iter().step_by(40).copied())
        .collect();
    let agent = flow_points(&f, &plan.schedule, &pts, T, plan.schedule.dwell(), &[T]).unwrap();

    let frames: Vec<f64> = (0..=40).map(|k| T * k as f64 / 40.0).collect();
    let field = BoundaryField::from_tube(&tube, f, &frames, 256)
        .unwrap()
        .with_scale(plan.delta_used)
        .unwrap()
        .with_far_point(far())
        .unwrap();
    let flows =
        sweepctl::dynamics::flow_boundary_field(&field, Some(&tube), &pts, T, T / 400.0, &[T])
            .unwrap();
    let continuum: Vec<Vec2> = flows.iter().map(|tr| tr.end()).collect();
    let d = hausdorff_points(&agent[0], &continuum);
    assert!(d <= EPS, "agent vs continuum {d}");
}

#[test]
fn identical_sets_are_confined_trivially() {
    let (o0, _) = golden_sets();
    let params = ConfineParams {
        eps: EPS,
        horizon: T,
        ladder: vec![(20, 32)],
        outputs: 4,
    };
    let out = confine(&power(3.0), &o0, &o0, &params).unwrap();
    assert!(out.success && out.trivial);
    let r = out.best_rung().unwrap();
    assert!(r.hausdorff.unwrap() < 1e-12);
}

#[test]
fn weak_repulsion_is_refused() {
    let (o0, o1) = golden_sets();
    let params = ConfineParams {
        eps: EPS,
        horizon: T,
        ladder: vec![(20, 32)],
        outputs: 4,
    };
    assert!(matches!(
        confine(&power(0.5), &o0, &o1, &params),
        Err(SynthesisError::TheoryGate(_))
    ));
}

#[test]
fn confinement_improves_along_the_ladder() {
    let (o0, o1) = golden_sets();
    let params = ConfineParams {
        eps: EPS,
        horizon: T,
        ladder: vec![(10, 16), (20, 32), (40, 64)],
        outputs: 4,
    };
    let out = confine(&power(3.0), &o0, &o1, &params).unwrap();
    let hd: Vec<f64> = out.rungs.iter().map(|r| r.hausdorff.unwrap()).collect();
    assert_eq!(hd.len(), 3, "{:?}", out.rungs);
    assert!(hd.windows(2).all(|w| w[1] <= w[0]), "{hd:?}");
    assert!(out.rungs.iter().all(|r| r.min_agent_distance > 0.0));
}

#[test]
fn static_tube_sweeps_nothing() {
    let tube = MovingTube::ball(Vec2::ZERO, 1.0, 1.0);
    let o0 = SetState::disk(Vec2::ZERO, 0.9, 128, 0.1);
    let mut params = SweepParams::new(EPS, 1.0, vec![(10, 32)]);
    params.reference_steps = 200;
    params.continuum_points = 50;
    let out = approximate_sweeping(&power(4.0), &tube, &o0, &params).unwrap();
    let r = &out.rungs[0];
    assert_eq!(r.status, RungStatus::Success);
    assert!(r.sup_error.unwrap() < 1e-9, "{r:?}");
    let c = out.continuum.unwrap();
    // drift of order delta * inflow * T at the tiny resolution scale
    assert!(c.sup_error < 1e-6, "{c:?}");
    assert!(out
        .reference
        .iter()
        .all(|s| s.points.iter().all(|p| *p == s.points[0])));
}

#[test]
fn sweeping_needs_the_stronger_growth() {
    let tube = MovingTube::ball(Vec2::ZERO, 1.0, 1.0);
    let o0 = SetState::disk(Vec2::ZERO, 0.9, 64, 0.0);
    let params = SweepParams::new(EPS, 1.0, vec![(10, 32)]);
    for p in [1.5, 2.0] {
        assert!(matches!(
            approximate_sweeping(&power(p), &tube, &o0, &params),
            Err(SynthesisError::TheoryGate(_))
        ));
    }
}

#[test]
fn translating_ball_is_followed() {
    let path =
        FsPath::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/translating_ball.json");
    let loaded = load_scenario(&path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = run_sweep(&loaded, dir.path()).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let sup = report["sup_error"].as_f64().unwrap();
    let hd = report["max_hausdorff"].as_f64().unwrap();
    assert!(sup <= EPS && hd <= EPS, "sup {sup}, d_H {hd}");
    assert_eq!(run.exit_code, 0);
}
