use portsim_core::berth::{BerthMode, BerthState, CompiledSquad};
use portsim_core::dist::DistributionSpec;
use portsim_core::network::StationScreening;
use portsim_core::{make_stream, run_until, DetectionProfile, Drm, Lorry, Scenario, Side};
use serde_json::json;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn branch_frequencies_match_path_probabilities() {
    let shed = |id: i64| {
        json!({"id": id, "kind": "ServiceShed", "servers": 50,
               "service_time": {"family": "Exponential", "mean": 0.5}})
    };
    let v = json!({
        "arrivals": {
            "base_rate": 3000.0,
            "clandestine_probability": 0.0,
            "soft_fraction": 0.5,
            "commodity_mix": {"general": 1.0}
        },
        "nodes": [
            {"id": 1, "kind": "Source"},
            {"id": 2, "kind": "ProbRouter"},
            shed(3), shed(4), shed(5),
            {"id": 6, "kind": "ProbRouter"},
            {"id": 7, "kind": "Sink"},
            {"id": 8, "kind": "Sink"},
            {"id": 9, "kind": "Sink"}
        ],
        "edges": [
            {"from": 1, "to": 2},
            {"from": 2, "to": 3, "probability": 0.2},
            {"from": 2, "to": 4, "probability": 0.3},
            {"from": 2, "to": 5, "probability": 0.5},
            {"from": 3, "to": 7},
            {"from": 4, "to": 6},
            {"from": 6, "to": 8, "probability": 0.33},
            {"from": 6, "to": 9, "probability": 0.67},
            {"from": 5, "to": 9}
        ],
        "drm": {"default": {"tp": 0.5, "fp": 0.0}},
        "run": {"max_arrivals": 100000}
    });
    let m = Scenario::from_json(&v.to_string()).unwrap().validate().unwrap();
    let rc = run_until(&m, 3, 0, 1e5).unwrap();
    assert_eq!(rc.exits, 100_000);

    let n = rc.exits as f64;
    let expected = [(7, 0.2), (8, 0.3 * 0.33), (9, 0.3 * 0.67 + 0.5)];
    let stat: f64 = expected
        .iter()
        .map(|&(id, p)| {
            let seen = rc.node_visits[&id] as f64;
            (seen - n * p).powi(2) / (n * p)
        })
        .sum();
    let critical = ChiSquared::new(2.0).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}

fn squad(tp: f64) -> CompiledSquad {
    let drm = Drm::new(DetectionProfile::new(tp, 0.0), vec![]).unwrap();
    let commodities = ["general".to_string()];
    CompiledSquad {
        interval: DistributionSpec::Constant { value: 1.0 }.sampler(),
        soft: StationScreening::resolve(&drm, "CO2", None, &commodities),
        hard: StationScreening::resolve(&drm, "Visual", None, &commodities),
    }
}

/// Mean number of squad ticks until the one clandestine lorry among `n`
/// parked lorries is found, with a perfect sensor and no departures.
fn mean_ticks_to_detection(n: u64, trials: u64) -> f64 {
    let sq = squad(1.0);
    let mut total = 0u64;
    for trial in 0..trials {
        let mut rng = make_stream(5, trial, "berth");
        let mut b = BerthState::new(BerthMode::Recheck, 1);
        for id in 0..n {
            b.arrive(Lorry::new(id, Side::Soft, 0, id == 0, 0.0), 0.0, 1e9).unwrap();
        }
        let mut ticks = 0u64;
        loop {
            ticks += 1;
            let check = b.squad_check(&sq, &mut rng, ticks as f64).unwrap();
            if check.released.is_some() {
                break;
            }
        }
        assert!(b.checks <= b.ticks);
        total += ticks;
    }
    total as f64 / trials as f64
}

#[test]
fn crowded_berth_delays_detection() {
    let means: Vec<f64> = [1, 2, 4].iter().map(|&n| mean_ticks_to_detection(n, 4000)).collect();
    assert_eq!(means[0], 1.0);
    assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
    // geometric with success probability 1/n has mean n
    assert!((means[1] - 2.0).abs() < 0.1, "{means:?}");
    assert!((means[2] - 4.0).abs() < 0.2, "{means:?}");
}

#[test]
fn check_once_never_repeats_a_lorry() {
    let sq = squad(0.0);
    let mut rng = make_stream(8, 0, "berth");
    let mut b = BerthState::new(BerthMode::CheckOnce, 1);
    for id in 0..20 {
        b.arrive(Lorry::new(id, Side::Hard, 0, true, 0.0), 0.0, 1e9).unwrap();
    }
    let mut seen = std::collections::HashSet::new();
    for t in 0..40 {
        match b.squad_check(&sq, &mut rng, t as f64) {
            Some(c) => assert!(seen.insert(c.lorry), "lorry {} checked twice", c.lorry),
            None => assert_eq!(seen.len(), 20),
        }
    }
    assert_eq!(b.ticks, 40);
    assert_eq!(b.checks, 20);
}
