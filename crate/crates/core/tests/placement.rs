use closemic::campaign::PreparedScene;
use closemic::placement::{evaluate_placement, optimize_placement, SearchSpace};
use closemic::scene::{calibrate_source, render_capture, Layout};
use closemic::{
    evaluate_pair, gen_pink_noise, gen_riff, Directivity, Error, LevelMapping, Role, RoomSpec,
    SceneConfig, StftParams,
};

fn template(room: RoomSpec) -> SceneConfig {
    Layout::default().scene(
        gen_riff(2.0, 44100, 196.0, 1.5, 1).unwrap(),
        gen_pink_noise(2.0, 44100, 7).unwrap(),
        0.12,
        0.0,
        Directivity::Cardioid,
        100.0,
        94.0,
        room,
        LevelMapping::default(),
    )
}

fn pinned(angle: f64) -> SearchSpace {
    SearchSpace {
        angle_bounds_deg: [angle, angle],
        ..SearchSpace::default()
    }
}

#[test]
fn free_field_prefers_the_widest_rotation() {
    let space = SearchSpace::default();
    let r = optimize_placement(
        &template(RoomSpec::free_field()),
        &space,
        StftParams::default(),
    )
    .unwrap();
    assert_eq!(r.best_angle_deg, 45.0);
    assert!(r.best_distance_m >= 0.03 && r.best_distance_m <= 0.30);
}

#[test]
fn trace_accounting_and_bounds() {
    let space = SearchSpace::default();
    let t = template(RoomSpec::default());
    let r = optimize_placement(&t, &space, StftParams::default()).unwrap();
    assert_eq!(r.coarse_evaluations, space.n_distance * space.n_angle);
    assert_eq!(r.evaluations, r.trace.len());
    assert!(r.evaluations > r.coarse_evaluations);

    // The coarse block is the full grid in angle-major order.
    let grid: Vec<(f64, f64)> = space
        .angles()
        .into_iter()
        .flat_map(|a| space.distances().into_iter().map(move |d| (d, a)))
        .collect();
    for (p, (d, a)) in r.trace.iter().zip(&grid) {
        assert_eq!((p.distance_m, p.angle_deg), (*d, *a));
    }
    for p in &r.trace[r.coarse_evaluations..] {
        assert!(p.distance_m >= 0.03 && p.distance_m <= 0.30);
        assert_eq!(p.angle_deg, r.best_angle_deg);
    }
    let max = r
        .trace
        .iter()
        .map(|p| p.sir_db)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r.best_sir_db, max);
    assert!(r.trace.iter().any(|p| p.distance_m == r.best_distance_m
        && p.angle_deg == r.best_angle_deg
        && p.sir_db == r.best_sir_db));

    // Every trace entry equals a fresh evaluation at that placement.
    let fresh = PreparedScene::new(t).unwrap();
    for p in r.trace.iter().step_by(7) {
        let v =
            evaluate_placement(&fresh, p.distance_m, p.angle_deg, StftParams::default()).unwrap();
        assert_eq!(v, p.sir_db);
    }
}

#[test]
fn pinned_rotation_in_free_field_is_flat() {
    let r = optimize_placement(
        &template(RoomSpec::free_field()),
        &pinned(0.0),
        StftParams::default(),
    )
    .unwrap();
    assert_eq!(r.coarse_evaluations, 10);
    let lo = r
        .trace
        .iter()
        .map(|p| p.sir_db)
        .fold(f64::INFINITY, f64::min);
    let hi = r
        .trace
        .iter()
        .map(|p| p.sir_db)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo <= 0.5, "spread {:.3} dB", hi - lo);
    for p in &r.trace[..r.coarse_evaluations] {
        assert!((r.best_sir_db - p.sir_db).abs() <= 0.5);
    }
}

/// The free-field baseline keeps the reverberant calibration gains, so the two
/// renderings share their direct paths and differ only by the diffuse tails.
#[test]
fn reverberation_does_not_help() {
    let params = StftParams::default();
    let t = template(RoomSpec::default());
    let room = optimize_placement(&t, &pinned(0.0), params).unwrap();

    let prepared = PreparedScene::new(t).unwrap();
    let baseline = |d: f64| {
        let scene = prepared
            .scene_for(Directivity::Cardioid, d, 0.0, 100.0, 94.0)
            .unwrap();
        let mut dry = scene.clone();
        dry.room = RoomSpec::free_field();
        let capture = |role| {
            let gain = calibrate_source(&scene, role).unwrap();
            render_capture(&dry, role).unwrap().scaled(gain)
        };
        evaluate_pair(&capture(Role::Target), &capture(Role::Noise), params)
            .unwrap()
            .sir_db
    };
    let best_free = room
        .trace
        .iter()
        .map(|p| baseline(p.distance_m))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        room.best_sir_db <= best_free + 0.5,
        "{} vs {}",
        room.best_sir_db,
        best_free
    );
}

#[test]
fn degenerate_space_is_an_argument_error() {
    let space = SearchSpace {
        distance_bounds_m: [0.2, 0.1],
        ..SearchSpace::default()
    };
    let err = optimize_placement(
        &template(RoomSpec::free_field()),
        &space,
        StftParams::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Argument(_)));
}
