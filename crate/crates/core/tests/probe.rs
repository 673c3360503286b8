// Temporary calibration probe; removed before finalizing.
use clo_core::config::ScenarioConfig;
use clo_core::harness::{run_scenario, run_seed_batch, spearman, time_to_target};
use std::time::Instant;

#[test]
#[ignore]
fn probe_multihop_timing_and_eta() {
    let base = ScenarioConfig::default_multi_hop()
        .modify(|raw| {
            raw.scenario.as_mut().unwrap().seeds = Some((1..=10).collect());
        })
        .unwrap();

    let t0 = Instant::now();
    let run = run_scenario(&base, 1).unwrap();
    println!("one 10k-slot multihop run: {:?}", t0.elapsed());
    println!(
        "cert pass {} final fnr {:?} maxq/T {:.4} depth {:.2}",
        run.certificate.all_pass,
        run.metrics.final_cumulative_loss,
        run.metrics.max_queue_over_horizon,
        run.metrics.mean_decision_depth
    );
    println!("decision counts/node {:?}", run.metrics.decision_counts_per_node);
    println!(
        "converged E {:.6} mJ/slot, precision {:.4}",
        run.metrics.converged_energy_j * 1e3,
        run.metrics.converged_precision
    );
    let min_up = run
        .certificate
        .per_user
        .iter()
        .map(|c| c.min_upper_slack)
        .fold(f64::INFINITY, f64::min);
    println!("min upper slack {min_up:.6}");

    // Eta sweep.
    let t0 = Instant::now();
    for eta in [0.01, 0.05, 0.1, 0.2, 0.4, 0.5] {
        let cfg = base
            .modify(|raw| {
                raw.scenario.as_mut().unwrap().eta = Some(eta);
            })
            .unwrap();
        let runs = run_seed_batch(&cfg).unwrap();
        let e: Vec<f64> = runs.iter().map(|r| r.metrics.converged_energy_j).collect();
        let p: Vec<f64> = runs.iter().map(|r| r.metrics.converged_precision).collect();
        let d: Vec<f64> = runs.iter().map(|r| r.metrics.mean_decision_depth).collect();
        let q: Vec<f64> = runs.iter().map(|r| r.metrics.max_queue_over_horizon).collect();
        let cert = runs.iter().filter(|r| r.certificate.all_pass).count();
        println!(
            "eta {eta:>5}: E {:.4} mJ, prec {:.4} (sd {:.4}), depth {:.3}, maxq/T {:.4}, cert {cert}/10",
            clo_core::harness::mean(&e) * 1e3,
            clo_core::harness::mean(&p),
            clo_core::harness::std_dev(&p),
            clo_core::harness::mean(&d),
            q.iter().cloned().fold(0.0, f64::max),
        );
    }
    println!("eta sweep (6 x 10 runs): {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn probe_frame_sizes() {
    let t0 = Instant::now();
    for s in [10u64, 50, 100] {
        let cfg = ScenarioConfig::default_multi_hop()
            .modify(|raw| {
                { let sc = raw.scenario.as_mut().unwrap(); sc.frame_size = Some(s); sc.eta = Some(0.1); }
            })
            .unwrap();
        let mut times = Vec::new();
        let mut precs = Vec::new();
        for seed in 1..=10 {
            let run = run_scenario(&cfg, seed).unwrap();
            // Across-user mean cumulative series.
            let frames = run.frames.len();
            let agg: Vec<f64> = (0..frames)
                .map(|f| {
                    let vals: Vec<f64> = (0..3)
                        .map(|k| run.metrics.cumulative_loss_series[k][f])
                        .collect();
                    clo_core::harness::mean(&vals)
                })
                .collect();
            times.push(time_to_target(&agg, s, 0.15, 0.01));
            precs.push(run.metrics.converged_precision);
        }
        println!(
            "S={s}: times {:?} prec {:?}",
            times,
            clo_core::harness::mean(&precs)
        );
    }
    println!("frame sweep: {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn probe_singlehop_policies() {
    let base = ScenarioConfig::default_single_hop()
        .modify(|raw| {
            let s = raw.scenario.as_mut().unwrap();
            s.slots = Some(15_000);
            s.eta = Some(0.1);
            s.non_stationary = Some(true);
            s.seeds = Some((1..=10).collect());
            for node in raw.network.as_mut().unwrap().nodes.as_mut().unwrap() {
                if node.role == "ed" {
                    node.reliability_target = Some(0.13);
                    node.arrival_prob = Some(0.8);
                }
            }
        })
        .unwrap();
    let t0 = Instant::now();
    for policy in ["clo", "lo-avg", "lo-outage"] {
        let cfg = base
            .modify(|raw| {
                raw.scenario.as_mut().unwrap().policy = Some(policy.to_string());
            })
            .unwrap();
        let runs = run_seed_batch(&cfg).unwrap();
        let fnr: Vec<f64> = runs
            .iter()
            .map(|r| clo_core::harness::mean(&r.metrics.final_cumulative_loss))
            .collect();
        let p: Vec<f64> = runs.iter().map(|r| r.metrics.converged_precision).collect();
        let e: Vec<f64> = runs.iter().map(|r| r.metrics.converged_energy_j).collect();
        let cert = runs.iter().filter(|r| r.certificate.all_pass).count();
        let out: Vec<f64> = runs
            .iter()
            .map(|r| clo_core::harness::mean(&r.metrics.outage_frequency))
            .collect();
        println!(
            "{policy:>10}: fnr {:.4} prec {:.4} E {:.4}mJ cert {cert}/10 outage {:.3} maxq/T {:.4}",
            clo_core::harness::mean(&fnr),
            clo_core::harness::mean(&p),
            clo_core::harness::mean(&e) * 1e3,
            clo_core::harness::mean(&out),
            runs.iter()
                .map(|r| r.metrics.max_queue_over_horizon)
                .fold(0.0, f64::max),
        );
    }
    println!("policies (3 x 10 x 15k): {:?}", t0.elapsed());
    let _ = spearman(&[1.0, 2.0], &[1.0, 2.0]);
}

#[test]
#[ignore]
fn probe_latency() {
    let base = ScenarioConfig::default_single_hop()
        .modify(|raw| {
            let s = raw.scenario.as_mut().unwrap();
            s.slot_duration_s = Some(0.01);
            s.eta = Some(0.16);
            s.latency_q_avg = Some(4.0);
            s.latency_step = Some(2.0);
            s.converged_window_slots = Some(2000);
            s.seeds = Some((1..=10).collect());
            for node in raw.network.as_mut().unwrap().nodes.as_mut().unwrap() {
                if node.role == "ed" {
                    node.arrival_prob = Some(0.8);
                    node.du_bits = Some(1_572_864.0);
                }
            }
        })
        .unwrap();
    let t0 = Instant::now();
    let mut lat_by_v = Vec::new();
    for v in [1.0, 10.0, 100.0, 1000.0] {
        let cfg = base
            .modify(|raw| {
                raw.scenario.as_mut().unwrap().v = Some(v);
            })
            .unwrap();
        let runs = run_seed_batch(&cfg).unwrap();
        let lat: Vec<f64> = runs
            .iter()
            .map(|r| clo_core::harness::mean(&r.metrics.converged_latency_s))
            .collect();
        let e: Vec<f64> = runs.iter().map(|r| r.metrics.converged_energy_j).collect();
        let fnr: Vec<f64> = runs
            .iter()
            .map(|r| clo_core::harness::mean(&r.metrics.final_cumulative_loss))
            .collect();
        let m = clo_core::harness::mean(&lat);
        lat_by_v.push(m);
        println!(
            "V={v:>6}: latency {:.4} s, E {:.4} mJ, fnr {:.4}",
            m,
            clo_core::harness::mean(&e) * 1e3,
            clo_core::harness::mean(&fnr)
        );
    }
    println!("latencies by V: {lat_by_v:?}, elapsed {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn probe_noisy_predictor() {
    let base = ScenarioConfig::default_multi_hop()
        .modify(|raw| {
            let s = raw.scenario.as_mut().unwrap();
            s.eta = Some(0.2);
            s.seeds = Some((1..=10).collect());
        })
        .unwrap();
    let oracle_runs = run_seed_batch(&base).unwrap();
    let p0: Vec<f64> = oracle_runs.iter().map(|r| r.metrics.converged_precision).collect();
    let e0: Vec<f64> = oracle_runs.iter().map(|r| r.metrics.converged_energy_j).collect();
    println!(
        "oracle: prec {:.4} E {:.4}",
        clo_core::harness::mean(&p0),
        clo_core::harness::mean(&e0) * 1e3
    );
    for (b, s) in [(0.0, 0.1), (0.0, 0.2), (0.05, 0.1), (0.05, 0.2), (0.1, 0.3)] {
        let cfg = base
            .modify(|raw| {
                let sc = raw.scenario.as_mut().unwrap();
                sc.predictor = Some("noisy".to_string());
                sc.predictor_bias = Some(b);
                sc.predictor_sigma = Some(s);
            })
            .unwrap();
        let runs = run_seed_batch(&cfg).unwrap();
        let p: Vec<f64> = runs.iter().map(|r| r.metrics.converged_precision).collect();
        let e: Vec<f64> = runs.iter().map(|r| r.metrics.converged_energy_j).collect();
        let drop = (clo_core::harness::mean(&p0) - clo_core::harness::mean(&p))
            / clo_core::harness::mean(&p0);
        println!(
            "noisy b={b} s={s}: prec {:.4} E {:.4} -> rel drop {:.4}%",
            clo_core::harness::mean(&p),
            clo_core::harness::mean(&e) * 1e3,
            drop * 100.0
        );
    }
}
