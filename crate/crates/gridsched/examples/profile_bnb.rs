// temporary: exact timing on trend scenarios + mbp delta sweep
use gridsched::harness::*;
use gridsched::*;
use std::time::Instant;

fn exact_timing(nt: usize, nf: usize, n_svc: usize, q: f64, tau: f64, trials: usize) {
    let spec = GridSpec::new(nt, nf, 2.0, 2.0).unwrap();
    let shapes = default_shapes();
    let services = ServiceSet::uniform(n_svc, q, tau, n_svc, 2.0).unwrap();
    let blocks = enumerate_blocks(&spec, &shapes);
    let conflicts = build_conflicts(&blocks, &spec);
    let mut total = std::time::Duration::ZERO;
    let mut max = std::time::Duration::ZERO;
    let mut infeas = 0;
    for seed in 0..trials as u64 {
        let snr = sample_snr(&services, &spec, (5.0, 30.0), seed).unwrap();
        let tp = throughput_matrix(&snr, &blocks, &services, &spec, &shapes);
        let inst = InstanceP0::new(conflicts.clone(), tp, services.clone());
        let t0 = Instant::now();
        let sched = solve_p0_bnb(&inst, &BnbConfig::default()).unwrap();
        let dt = t0.elapsed();
        total += dt;
        max = max.max(dt);
        if sched.status == ScheduleStatus::Infeasible {
            infeas += 1;
        }
    }
    println!(
        "exact {nt}x{nf} {n_svc}+{n_svc} q={q} tau={tau}: mean {:.0?} max {:.0?} infeas {infeas}/{trials}",
        total / trials as u32,
        max
    );
}

fn mbp_sweep(nt: usize, nf: usize, n_svc: usize, q: f64, tau: f64, delta: f64, trials: usize) {
    let scn = Scenario {
        scenario_id: "mbp".into(),
        grid: GridSpec::new(nt, nf, 2.0, 2.0).unwrap(),
        shapes: default_shapes(),
        numerology: NumerologyMode::Flexible,
        services: ServiceSet::uniform(n_svc, q, tau, n_svc, 2.0).unwrap(),
        snr_range_db: (5.0, 30.0),
        trials,
        base_seed: 9000,
        roster: vec![SolverKind::Bpb, SolverKind::Mbp],
        exact_mode: ExactMode::Skip,
        params: SolverParams {
            delta,
            ..Default::default()
        },
    };
    let reports = run_scenario(&scn, 0, |_| {}).unwrap();
    let summary = summarize(&reports);
    let rate = |kind: SolverKind| {
        summary
            .solvers
            .iter()
            .find(|s| s.solver == kind)
            .unwrap()
            .infeasibility_rate
    };
    println!(
        "mbp {nt}x{nf} {n_svc}+{n_svc} q={q} tau={tau} delta={delta}: bpb_infeas={:.3} mbp_infeas={:.3}",
        rate(SolverKind::Bpb),
        rate(SolverKind::Mbp)
    );
}

fn main() {
    exact_timing(8, 6, 3, 226.0, 0.75, 20);
    exact_timing(8, 6, 3, 453.0, 0.75, 20);
    exact_timing(10, 8, 4, 272.0, 0.75, 8);
    for delta in [0.2, 0.3, 0.4] {
        for (q, tau) in [(1086.0, 1.0), (724.0, 1.0), (1086.0, 1.5), (724.0, 0.75)] {
            mbp_sweep(8, 6, 3, q, tau, delta, 200);
        }
    }
}
