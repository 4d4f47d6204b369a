use std::io::BufReader;

use seaguard::guidance::PolicyKind;
use seaguard::safety::PsfConfig;
use seaguard::sim::{
    emit_plots, generate_random_scenario, initial_min_margin, load_scenario, run_episode,
    Difficulty, EpisodeOptions, EpisodeSummary, EpisodeTrace, ObstacleInfoMode, Scenario,
};

fn options(policy: PolicyKind, psf: bool, info_mode: ObstacleInfoMode) -> EpisodeOptions {
    EpisodeOptions {
        policy,
        psf_enabled: psf,
        info_mode,
    }
}

fn short(seed: u64, duration: f64) -> Scenario {
    let mut s = generate_random_scenario(seed, Difficulty::Mixed);
    s.duration = duration;
    s
}

fn read_csv(path: &std::path::Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn generated_scenarios_start_feasible() {
    let psf = PsfConfig::default();
    for seed in 0..500 {
        let s = generate_random_scenario(seed, Difficulty::Mixed);
        assert!((1..=8).contains(&s.obstacles.len()), "seed {seed}");
        assert!(
            initial_min_margin(&s) >= psf.d_safe + psf.d_f,
            "seed {seed}"
        );
    }
    for seed in 0..50 {
        let s = generate_random_scenario(seed, Difficulty::Static);
        assert!(s.obstacles.iter().all(|o| o.velocity == [0.0, 0.0]));
    }
}

#[test]
fn trace_round_trips_and_summary_recomputes() {
    let s = short(11, 30.0);
    let (trace, summary) = run_episode(
        &s,
        &options(PolicyKind::Random, true, ObstacleInfoMode::Tracked),
    )
    .unwrap();
    let text = trace.to_jsonl();
    let back = EpisodeTrace::read_jsonl(BufReader::new(text.as_bytes()), "mem").unwrap();
    assert!(back == trace, "trace changed on re-read");
    assert_eq!(
        EpisodeSummary::from_trace(&back, summary.mean_solve_time_ms),
        summary
    );

    assert!(trace.ticks.windows(2).all(|w| w[1].time > w[0].time));
    assert!(trace.ticks.iter().all(|t| t.psf.is_some()));
    assert_eq!(trace.ticks.len(), 300);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let s = short(12, 15.0);
    for opts in [
        options(PolicyKind::Random, true, ObstacleInfoMode::Tracked),
        options(
            PolicyKind::AdversarialTowardNearestObstacle,
            true,
            ObstacleInfoMode::GroundTruth,
        ),
        options(PolicyKind::LosFollow, false, ObstacleInfoMode::None),
    ] {
        let a = run_episode(&s, &opts).unwrap().0.to_jsonl();
        let b = run_episode(&s, &opts).unwrap().0.to_jsonl();
        assert!(a == b, "{opts:?}");
    }
}

#[test]
fn obstacle_free_path_following_is_left_alone() {
    let mut s = generate_random_scenario(3, Difficulty::Mixed);
    s.obstacles.clear();
    let (trace, summary) = run_episode(
        &s,
        &options(PolicyKind::LosFollow, true, ObstacleInfoMode::Tracked),
    )
    .unwrap();
    assert_eq!(summary.intervention_rate, 0.0);
    assert!(summary.mean_abs_cte < 2.0, "{}", summary.mean_abs_cte);
    assert!(trace.ticks.iter().all(|t| t.margin.is_none()));
}

#[test]
fn plot_tables_follow_their_definitions() {
    // Without the filter the adversarial policy drives into obstacles, so
    // the margin goes negative.
    let s = short(5, 60.0);
    let (trace, _) = run_episode(
        &s,
        &options(
            PolicyKind::AdversarialTowardNearestObstacle,
            false,
            ObstacleInfoMode::Tracked,
        ),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plots(&trace, dir.path()).unwrap();
    assert_eq!(files.len(), 7);

    let margins = read_csv(&dir.path().join("margins.csv"));
    assert_eq!(margins.len(), trace.ticks.len());
    let mut flagged = 0;
    for (row, tick) in margins.iter().zip(&trace.ticks) {
        let m = tick.margin.unwrap();
        assert_eq!(row[3].parse::<f64>().unwrap(), m);
        assert_eq!(row[4] == "1", m < 0.0);
        flagged += (m < 0.0) as usize;
    }
    assert!(flagged > 0);

    let tube = read_csv(&dir.path().join("tube.csv"));
    assert!(!tube.is_empty());
    let mut prev: Option<(String, String, usize, f64)> = None;
    for row in &tube {
        let k: usize = row[3].parse().unwrap();
        let sigma: f64 = row[7].parse().unwrap();
        if let Some((tick, track, pk, ps)) = &prev {
            if *tick == row[0] && *track == row[2] && k == pk + 1 {
                assert!(sigma > *ps, "sigma not increasing at {row:?}");
            } else {
                assert_eq!(k, 0);
            }
        }
        prev = Some((row[0].clone(), row[2].clone(), k, sigma));
    }

    let summary = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(summary.len(), 1);
    let again = tempfile::tempdir().unwrap();
    emit_plots(&trace, again.path()).unwrap();
    for f in &files {
        let name = f.file_name().unwrap();
        assert_eq!(
            std::fs::read(f).unwrap(),
            std::fs::read(again.path().join(name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn filter_prevents_a_collision_the_plain_policy_has() {
    let s = short(5, 60.0);
    let adversary = PolicyKind::AdversarialTowardNearestObstacle;
    let (_, off) = run_episode(
        &s,
        &options(adversary, false, ObstacleInfoMode::GroundTruth),
    )
    .unwrap();
    let (_, on) =
        run_episode(&s, &options(adversary, true, ObstacleInfoMode::GroundTruth)).unwrap();
    assert!(off.collisions > 0);
    assert_eq!(on.collisions, 0);
    assert!(on.min_distance.unwrap() > s.vessel_radius);
}

#[test]
fn empty_trace_is_rejected_by_the_emitter() {
    let s = short(1, 1.0);
    let (mut trace, _) = run_episode(
        &s,
        &options(PolicyKind::LosFollow, false, ObstacleInfoMode::None),
    )
    .unwrap();
    trace.ticks.clear();
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_plots(&trace, dir.path()).is_err());
}

#[test]
fn shipped_scenarios_are_safe_with_tracked_obstacles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty());
    for f in files {
        let s = load_scenario(&f).unwrap();
        let opts = options(PolicyKind::LosFollow, true, ObstacleInfoMode::Tracked);
        let (_, summary) = run_episode(&s, &opts).unwrap();
        assert_eq!(summary.collisions, 0, "{}", f.display());
        assert!(summary.aborted.is_none());
    }
}
