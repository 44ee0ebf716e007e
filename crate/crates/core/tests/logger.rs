mod common;

use chrono::{TimeZone, Utc};
use common::flight::{config, realtime_session};
use fpvgl_core::logger::{read_session, FlightSession, LockstepLogger};
use fpvgl_core::sim::camera::{decode_frame_tick, View};
use fpvgl_core::sim::{run_sim, RunOptions, Scenario, ScriptedPilot, Task};

fn check_baseline(s: &FlightSession) {
    let first = s.first_armed_row(1100).expect("armed rows");
    let baseline = s.rows[first].alt_mm.unwrap();
    for (i, r) in s.rows.iter().enumerate() {
        if i < first {
            assert_eq!(r.rel_alt_mm, None, "row {i}");
        } else {
            assert_eq!(r.rel_alt_mm, Some(r.alt_mm.unwrap() - baseline), "row {i}");
        }
    }
}

#[test]
fn lockstep_thirty_seconds_at_ten_hz() {
    let dir = tempfile::tempdir().unwrap();
    let config = config(0.0, 1);
    // Task 3 is still airborne at 30 s.
    let scenario = Scenario::default_for(Task::Task3);
    let mut pilot = ScriptedPilot::new(&scenario, &config);
    let start = Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap();
    let mut logger = LockstepLogger::new(dir.path(), start, config.tick_rate, 10.0).unwrap();
    let options = RunOptions {
        max_duration_s: 30.0,
        ..RunOptions::default()
    };
    let summary = run_sim(&config, &scenario, &mut pilot, &mut [&mut logger], &options).unwrap();
    assert!(!summary.completed);

    let manifest = logger.manifest().unwrap().clone();
    assert!(manifest.row_count.abs_diff(300) <= 1, "{}", manifest.row_count);
    let session = read_session(logger.dir()).unwrap();
    assert_eq!(session.manifest, manifest);
    assert_eq!(session.rows.len(), manifest.row_count);
    assert_eq!(manifest.front_frame_count, manifest.row_count);
    assert_eq!(manifest.bottom_frame_count, manifest.row_count);
    for i in 0..session.rows.len() {
        for view in View::BOTH {
            let png = std::fs::read(session.frame_path(view, i)).unwrap();
            assert_eq!(decode_frame_tick(&png), Some(i as u64 * 5), "row {i} {view}");
        }
    }
    check_baseline(&session);
}

#[test]
fn realtime_logging_alongside_the_simulator() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, session) = realtime_session(dir.path(), 5.0, 10.0);
    assert!(manifest.row_count.abs_diff(50) <= 1, "{}", manifest.row_count);
    assert_eq!(session.rows.len(), manifest.row_count);
    for i in 0..session.rows.len() {
        for view in View::BOTH {
            assert!(session.frame_path(view, i).is_file());
        }
    }
    // The vehicle arms 3 s in.
    check_baseline(&session);
}
