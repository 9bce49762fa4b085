use coshf::bench_td::{run_td, TdConfig};
use coshf::convexify::{assemble, Mode};
use coshf::quadrature::UnitRule;
use coshf::sca::{initialize, run, run_single_uav, ScaConfig};
use coshf::scenario::random_scenario;
use coshf::Scenario;

fn non_decreasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - 1e-9)
}

#[test]
fn traces_are_monotone_and_audited() {
    let cfg = ScaConfig {
        max_outer: 25,
        audit_samples: 2000,
        ..ScaConfig::default()
    };
    for seed in [2, 3, 4] {
        let sc = random_scenario(seed, 3, 500.0);
        let out = run(&sc, &cfg).unwrap();
        let r = &out.report;
        assert!(
            non_decreasing(&r.objective_trace),
            "seed {seed}: {:?}",
            r.objective_trace
        );
        assert!(
            non_decreasing(&r.polish_trace),
            "seed {seed}: {:?}",
            r.polish_trace
        );
        assert!(r.objective > r.objective_trace[0], "seed {seed}");
        assert!(out.trajectory.schedule_is_binary());
        out.trajectory.check(&sc, 1e-6).unwrap();
        let audit = r.audit.as_ref().unwrap();
        assert!(audit.feasible, "seed {seed}: {audit:?}");
    }
}

#[test]
fn single_user_throughput_respects_hover_bound() {
    let sc = random_scenario(5, 1, 500.0);
    let out = run(
        &sc,
        &ScaConfig {
            max_outer: 30,
            audit_samples: 2000,
            ..ScaConfig::default()
        },
    )
    .unwrap();
    // Ceiling: S overhead for the whole mission, no jamming at the user, no leakage.
    let ceiling =
        sc.mission_time * (1.0 + sc.p_s * sc.beta0 / (sc.alt * sc.alt * sc.sigma2_gu)).log2();
    assert!(out.report.objective > 0.0);
    assert!(
        out.report.objective < ceiling,
        "{} vs {ceiling}",
        out.report.objective
    );
    assert!(out.report.objective >= out.report.objective_trace[0] - 1e-9);
}

#[test]
fn silent_jammer_matches_single_uav() {
    let sc = Scenario::reference().with_p_j(0.0);
    let cfg = ScaConfig {
        audit_samples: 2000,
        ..ScaConfig::default()
    };
    let dual = run(&sc, &cfg).unwrap().report.objective;
    let single = run_single_uav(&sc, &cfg).unwrap().report.objective;
    assert!(
        (dual - single).abs() <= 0.05 * single,
        "dual {dual} single {single}"
    );
}

#[test]
fn slot_benchmark_improves_with_resolution() {
    let sc = Scenario::reference();
    let objs: Vec<f64> = [10, 20, 40]
        .iter()
        .map(|&n0| {
            let (path, report) = run_td(
                &sc,
                &TdConfig {
                    n0,
                    ..TdConfig::default()
                },
            )
            .unwrap();
            assert_eq!(path.len(), n0 + 1);
            assert!(report.audit.as_ref().unwrap().feasible);
            report.objective
        })
        .collect();
    assert!(objs.windows(2).all(|w| w[1] >= 0.98 * w[0]), "{objs:?}");
}

#[test]
fn debug_dump_lists_every_row() {
    let sc = Scenario::reference();
    let init = initialize(&sc).unwrap();
    let asm = assemble(&init, &sc, &UnitRule::composite(8, 4), Mode::DUAL, 1e-4).unwrap();
    let v: serde_json::Value = serde_json::from_str(&asm.debug_dump()).unwrap();
    let c = asm.counts();
    assert_eq!(
        v["constraints"].as_array().unwrap().len() + v["equalities"].as_array().unwrap().len(),
        c.constraints
    );
}
