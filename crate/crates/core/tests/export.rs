mod common;

use std::f64::consts::FRAC_PI_2;

use common::flight::fly;
use fpvgl_core::export::{export_episode, read_dataset, write_dataset, ExportError, ExportOptions};
use fpvgl_core::sim::Task;

#[test]
fn dataset_round_trip_and_step_count() {
    let dir = tempfile::tempdir().unwrap();
    let f = fly(Task::Task2, 0.0, 3, &dir.path().join("logs"));
    let out = dir.path().join("datasets");
    std::fs::create_dir_all(&out).unwrap();
    let ds = export_episode(
        &f.session,
        &f.scenario,
        &f.config.origin,
        &out,
        &ExportOptions::default(),
    )
    .unwrap();

    let armed = f.session.rows.iter().filter(|r| r.motors_armed(1100)).count();
    assert!(armed > 100);
    assert_eq!(ds.steps.len(), armed);
    assert!(ds.steps.iter().all(|s| f.session.rows[s.row].motors_armed(1100)));
    assert!(ds.steps[0].observation.front_frame.starts_with("../logs/"));

    let first = &ds.steps[0].observation;
    assert!((first.distance_to_goal_m - 20.0).abs() < 0.05, "{first:?}");
    assert!((first.bearing_to_goal_rad - FRAC_PI_2).abs() < 0.01, "{first:?}");
    let last = &ds.steps.last().unwrap().observation;
    assert!(last.distance_to_goal_m < 0.1, "{last:?}");

    for s in &ds.steps {
        let a = s.action;
        for v in [a.roll, a.pitch, a.yaw, a.throttle] {
            assert!((-1.0..=1.0).contains(&v));
        }
    }
    // Forward flight east with yaw 0 is a right roll.
    assert!(ds.steps.iter().any(|s| s.action.roll > 0.5));

    let path = out.join("episode.json");
    write_dataset(&path, &ds).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), ds);
}

#[test]
fn missing_frame_and_bad_schema_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let f = fly(Task::Task1, 0.0, 3, dir.path());
    let ds = export_episode(
        &f.session,
        &f.scenario,
        &f.config.origin,
        dir.path(),
        &ExportOptions::default(),
    )
    .unwrap();
    let path = dir.path().join("episode.json");
    write_dataset(&path, &ds).unwrap();

    let mut future = ds.clone();
    future.schema_version = 99;
    let bad = dir.path().join("future.json");
    std::fs::write(&bad, serde_json::to_vec(&future).unwrap()).unwrap();
    assert!(matches!(
        read_dataset(&bad),
        Err(ExportError::SchemaVersion { found: 99 })
    ));

    std::fs::remove_file(dir.path().join(&ds.steps[5].observation.bottom_frame)).unwrap();
    assert!(matches!(read_dataset(&path), Err(ExportError::MissingFrame(_))));
    assert!(matches!(
        write_dataset(&path, &ds),
        Err(ExportError::MissingFrame(_))
    ));
}
