//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rss_odd::kinematics::{self, BrakeCap, ScenarioParams};
use rss_odd::odd::{self, BeliefState, OddConfig, OddMachine, TransitionRule};
use rss_odd::oracle;
use rss_odd::physics::{self, CurveRadius, RoadEnvironment};
use rss_odd::units::G;
use rss_odd::verify::{self, draw_rng};

/// Printed reference table, rows a_max_brake, columns a_min_brake.
const FIGURE4: [[&str; 7]; 6] = [
    ["621.0", "263.8", "25.7", "5.2", "2.9", "2.2", "1.4"],
    ["663.5", "306.3", "68.2", "38.4", "20.6", "8.8", "2.6"],
    ["674.1", "316.9", "78.8", "49.1", "31.2", "19.3", "3.6"],
    ["681.7", "324.5", "86.4", "56.6", "38.8", "26.9", "5.3"],
    ["695.3", "338.2", "100.1", "70.3", "52.4", "40.5", "16.7"],
    ["727.2", "370.0", "131.9", "102.2", "84.3", "72.4", "48.6"],
];

const SEED: u64 = verify::DEFAULT_SEED;
const ORACLE_DRAWS: usize = 10_000;
const IDENTITY_DRAWS: usize = 1_000;
const FUZZ_STEPS: usize = 100_000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn table_mismatches(grid: usize) -> (Vec<String>, Duration) {
    let start = Instant::now();
    let table = odd::figure4_table(grid).expect("table builds");
    let elapsed = start.elapsed();
    let mut bad = Vec::new();
    for (r, row) in FIGURE4.iter().enumerate() {
        for (c, printed) in row.iter().enumerate() {
            let got = table.cell(r, c).value.display();
            if got.trim_end_matches('*') != *printed {
                bad.push(format!("[{r},{c}] {got} vs {printed}"));
            }
        }
    }
    (bad, elapsed)
}

fn figure4_reproduction() -> Outcome {
    let (bad, elapsed) = table_mismatches(odd::DEFAULT_GRID);
    let (bad_fine, _) = table_mismatches(33);
    let fast = elapsed < Duration::from_secs(1);
    outcome(
        bad.is_empty() && bad_fine.is_empty() && fast,
        format!(
            "42 cells, {} mismatches at grid 9, {} at grid 33, built in {:.1} ms (limit 1 s){}",
            bad.len(),
            bad_fine.len(),
            elapsed.as_secs_f64() * 1e3,
            if bad.is_empty() { String::new() } else { format!(": {}", bad.join(", ")) }
        ),
    )
}

/// Within 1e-3 g of the special-case boundary in braking or in speed at the
/// end of the response time.
fn near_boundary(p: &ScenarioParams) -> bool {
    let BrakeCap::Finite(a_f) = p.a_max_brake else {
        return false;
    };
    let tol = 1e-3 * G;
    let closing = p.rear_speed_after_response() - (p.v_f - a_f * p.rho);
    (p.a_min_brake - a_f).abs() <= tol || (p.rho > 0.0 && (closing / p.rho).abs() <= tol)
}

struct OracleRun {
    agreement: Outcome,
    bracketing: Outcome,
}

fn oracle_agreement_and_bracketing() -> OracleRun {
    let start = Instant::now();
    let (mut worst, mut worst_at, mut special, mut boundary) = (0.0f64, 0usize, 0, 0);
    let (mut safe_fail, mut critical_checked, mut critical_fail) = (0, 0, 0);
    for i in 0..ORACLE_DRAWS {
        let p = verify::draw_scenario(&mut draw_rng(SEED, i as u64));
        let d = kinematics::d_min(&p).unwrap().d_min;
        special += kinematics::is_special_case(&p) as usize;
        boundary += near_boundary(&p) as usize;
        let g = oracle::min_safe_gap(&p, 1e-4).unwrap();
        if (d - g).abs() > worst {
            worst = (d - g).abs();
            worst_at = i;
        }
        let dt = oracle::search_time_step(&p, 1e-4);
        if oracle::collides(&p, d + 1e-3, dt).unwrap() {
            safe_fail += 1;
        }
        if d > 1e-2 {
            critical_checked += 1;
            if !oracle::collides(&p, d - 1e-2, dt).unwrap() {
                critical_fail += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    OracleRun {
        agreement: outcome(
            worst <= 1e-3 && elapsed < Duration::from_secs(300) && boundary > 0,
            format!(
                "{ORACLE_DRAWS} draws ({special} special, {boundary} within 1e-3 g of the boundary), \
                 worst |d_min - oracle| = {worst:.2e} m at draw {worst_at} (limit 1e-3 m), {:.1} s",
                elapsed.as_secs_f64()
            ),
        ),
        bracketing: outcome(
            safe_fail == 0 && critical_fail == 0,
            format!(
                "{} of {ORACLE_DRAWS} collide at d_min + 1 mm; {} of {critical_checked} miss at d_min - 1 cm",
                safe_fail, critical_fail
            ),
        ),
    }
}

fn rest_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut rng = draw_rng(SEED, u64::MAX / 2);
    for _ in 0..IDENTITY_DRAWS {
        let p = verify::draw_special_scenario(&mut rng);
        let stops = kinematics::stopping_times(&p).unwrap();
        let d2 = kinematics::d_double_prime_min(&p).unwrap();
        let d3 = kinematics::post_response_encroachment(&p, stops.rear, stops.front).unwrap();
        let unclamped = kinematics::d_prime_unclamped(&p).unwrap();
        let rel = (d2 + d3 - unclamped).abs() / verify::travel_scale(&p).max(1.0);
        worst = worst.max(rel);
    }
    outcome(
        worst <= 1e-9,
        format!("{IDENTITY_DRAWS} special-case draws, worst relative deviation {worst:.2e} (limit 1e-9)"),
    )
}

fn physics_spot_values() -> Outcome {
    let flat = physics::effective_braking_decel(&RoadEnvironment::flat(0.7)).unwrap();
    let downhill = physics::effective_braking_decel(&RoadEnvironment {
        slope: -10f64.to_radians(),
        ..RoadEnvironment::flat(0.7)
    })
    .unwrap();
    let curve = physics::effective_braking_decel(&RoadEnvironment {
        curve_radius: CurveRadius::Radius(100.0),
        speed_for_curve: 25.0,
        ..RoadEnvironment::flat(0.7)
    })
    .unwrap();
    let ice = physics::effective_braking_decel(&RoadEnvironment {
        slope: -10f64.to_radians(),
        ..RoadEnvironment::flat(0.1)
    })
    .unwrap();
    let curve_expected = (6.867f64.powi(2) - 6.25f64.powi(2)).sqrt();
    let checks = [
        (flat.decel - 6.867).abs() <= 1e-3,
        (downhill.decel - 5.059).abs() <= 1e-3,
        (curve.decel - curve_expected).abs() <= 1e-3,
        ice.cannot_hold,
    ];
    outcome(
        checks.iter().all(|c| *c),
        format!(
            "flat {:.4}, downhill {:.4}, curve {:.4} vs sqrt(6.867^2 - 6.25^2) = {curve_expected:.4} \
             (a quoted 2.846 is 1.2e-3 off that root), ice cannot_hold={} (tol 1e-3 m/s^2)",
            flat.decel, downhill.decel, curve.decel, ice.cannot_hold
        ),
    )
}

fn load_fixture_config() -> Arc<OddConfig> {
    Arc::new(odd::load_odd_config(&fixture("figure5.toml")).unwrap())
}

fn state_machine_fixtures() -> Outcome {
    let config = load_fixture_config();
    let replay = |log: &str| {
        let text = std::fs::read_to_string(fixture(log)).unwrap();
        let records = rss_odd::cli::parse_evidence_log(&text).unwrap();
        OddMachine::new(config.clone()).replay(&records)
    };
    let fig5 = replay("figure5_log.jsonl");
    let fig5_end = fig5.last().map(|r| r.active_odd.clone()).unwrap_or_default();
    let empty = replay("empty_log.jsonl");
    let empty_ok = empty.len() == 1
        && empty[0].active_odd == config.initial_id()
        && &empty[0].posterior == config.prior();
    let undeclared = replay("undeclared_log.jsonl");
    let undeclared_end = undeclared.last().map(|r| r.active_odd.clone()).unwrap_or_default();

    let prior = BeliefState::new([("dry", 0.8), ("ice", 0.2)]).unwrap();
    let rule = TransitionRule {
        evidence_key: "temperature".into(),
        likelihoods: [(
            "below_freezing".to_string(),
            [("dry".to_string(), 0.3), ("ice".to_string(), 0.9)].into_iter().collect(),
        )]
        .into_iter()
        .collect(),
        target_map: BTreeMap::new(),
    };
    let post = odd::belief_update(&prior, &rule, "below_freezing").unwrap();
    let (dry, ice) = (post.weight("dry").unwrap(), post.weight("ice").unwrap());
    let belief_ok = (dry - 0.571).abs() <= 1e-3 && (ice - 0.429).abs() <= 1e-3;

    outcome(
        fig5_end == "very_low_speed" && empty_ok && undeclared_end == config.defensive_id() && belief_ok,
        format!(
            "replay ends in {fig5_end}; empty log no-op={empty_ok}; undeclared key -> {undeclared_end}; \
             posterior dry={dry:.4} ice={ice:.4}"
        ),
    )
}

fn random_value<R: Rng>(rng: &mut R) -> String {
    const POOL: [&str; 12] = [
        "true", "false", "night", "day", "bridge", "none", "1 degC", "20 degC", "0.3", "-5 deg",
        "???", "",
    ];
    if rng.gen_bool(0.3) {
        format!("{:.3}", rng.gen_range(-50.0..50.0))
    } else {
        POOL.choose(rng).unwrap().to_string()
    }
}

fn totality_fuzz() -> Outcome {
    let config = load_fixture_config();
    let ids: Vec<&str> = config.mu_odds().iter().map(|o| o.id.as_str()).collect();
    let mut keys: Vec<String> = config.declared_keys().into_iter().map(String::from).collect();
    keys.extend(["sensor_glitch", "v2x_advisory", "weather"].map(String::from));
    let mut rng = draw_rng(SEED, 0xf022);
    let mut machine = OddMachine::new(config.clone());
    let (mut invalid, mut errors, mut defensive) = (0, 0, 0);
    for step in 0..FUZZ_STEPS {
        let mut evidence = BTreeMap::new();
        for _ in 0..rng.gen_range(0..4) {
            let key = keys.choose(&mut rng).unwrap().clone();
            let value = match config.rules().iter().find(|r| r.evidence_key == key) {
                Some(rule) if rng.gen_bool(0.8) => {
                    rule.likelihoods.keys().collect::<Vec<_>>().choose(&mut rng).unwrap().to_string()
                }
                _ => random_value(&mut rng),
            };
            evidence.insert(key, value);
        }
        if step % 2 == 0 {
            // Arbitrary state and belief, straight through the step function.
            let current = *ids.choose(&mut rng).unwrap();
            let belief = BeliefState::new(
                config.hypotheses().iter().map(|h| (h.clone(), rng.gen_range(1e-6..1.0))),
            )
            .unwrap();
            match odd::step_state_machine(&config, current, &belief, &evidence) {
                Ok(out) if config.odd(&out.odd_id).is_some() => {
                    defensive += (out.odd_id == config.defensive_id()) as usize;
                }
                Ok(_) => invalid += 1,
                Err(_) => errors += 1,
            }
        } else {
            let rec = machine.apply(step as f64, evidence);
            if config.odd(&rec.active_odd).is_none() {
                invalid += 1;
            }
        }
    }
    outcome(
        invalid == 0 && errors == 0,
        format!(
            "{FUZZ_STEPS} steps, {invalid} invalid ids, {errors} errors, {defensive} defensive fallbacks"
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 figure 4 reproduction", figure4_reproduction()));
    let oracle_run = oracle_agreement_and_bracketing();
    results.push(("2 oracle agreement", oracle_run.agreement));
    results.push(("3 rest-position identity", rest_identity()));
    results.push(("4 safety/criticality bracketing", oracle_run.bracketing));
    results.push(("5 physics spot values", physics_spot_values()));
    results.push(("6 state-machine fixtures", state_machine_fixtures()));
    results.push(("7 totality fuzz", totality_fuzz()));

    let mut all = true;
    for (name, o) in &results {
        all &= o.passed;
        println!(
            "criterion {name:<34} {}  {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if all {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
