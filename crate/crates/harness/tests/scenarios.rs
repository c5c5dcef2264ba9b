use std::path::{Path, PathBuf};

use edgesplit_core::policy::Strategy;
use edgesplit_harness::{csv_string, run_scenario, Mode, Report, RunError, RunOptions, Scenario};
use proptest::prelude::*;

const CLUSTER: &str = r#"
[[nodes]]
id = "jetson"
perf = [6.0, 7.5, 10.0, 13.0, 16.0, 20.0]
noise_cv = 0.0
[[nodes]]
id = "rpi"
perf = [2.0, 2.5, 3.5, 4.5, 6.0, 8.0]
noise_cv = 0.0
[[nodes]]
id = "odroid"
perf = [3.0, 3.8, 5.0, 6.5, 8.5, 11.0]
noise_cv = 0.0
"#;

fn fixture(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
    Scenario::load(&path).unwrap()
}

fn scenario(head: &str, tail: &str) -> Scenario {
    Scenario::from_toml(&format!("name = \"t\"\n{head}\n{CLUSTER}\n{tail}")).unwrap()
}

fn run(s: &Scenario, mode: Mode) -> Report {
    run_scenario(s, &RunOptions::for_scenario(s).with_mode(mode)).unwrap()
}

fn worker_bin() -> &'static Path {
    Path::new(env!("CARGO_BIN_EXE_edgesplit-worker"))
}

#[test]
fn fixtures_load() {
    for name in ["three-boards.toml", "availability.toml", "workload-sweep.toml"] {
        let s = fixture(name);
        assert_eq!(s.strategies.len(), 4, "{name}");
        assert!(!s.requests.is_empty(), "{name}");
    }
}

#[test]
fn workload_sweep_pattern() {
    let s = fixture("workload-sweep.toml");
    let report = run(&s, Mode::InProc);
    let prop = report.summary(Strategy::Proportional).unwrap();
    assert_eq!((prop.perf_violation_pct, prop.acc_violation_pct), (0.0, 0.0));
    for s in [Strategy::Uniform, Strategy::Asymmetric] {
        assert!((report.summary(s).unwrap().perf_violation_pct - 100.0).abs() < 1e-9, "{s}");
    }
    let apx = report.summary(Strategy::UniformApx).unwrap();
    assert!((apx.acc_violation_pct - 100.0).abs() < 1e-9);
    assert_eq!(apx.acc_violation_count_pct, 100.0);
}

#[test]
fn report_shape_and_ranges() {
    let s = fixture("availability.toml");
    let report = run(&s, Mode::InProc);
    assert_eq!(report.rows(), s.strategies.len() * s.requests.len());
    for sum in &report.summaries {
        for pct in [sum.perf_violation_pct, sum.acc_violation_pct, sum.perf_violation_count_pct, sum.acc_violation_count_pct] {
            assert!((0.0..=100.0).contains(&pct), "{pct}");
        }
    }
    let csv = csv_string(&report);
    assert_eq!(csv.lines().count(), report.rows() + 1);
}

#[test]
fn empty_queue_reports_nothing() {
    let s = scenario("seed = 1\ntime_scale = 0.0", "");
    let report = run(&s, Mode::InProc);
    assert_eq!(report.rows(), 0);
    for sum in &report.summaries {
        assert_eq!((sum.perf_violation_pct, sum.acc_violation_pct), (0.0, 0.0));
    }
}

#[test]
fn strategies_run_in_isolation() {
    let full = fixture("availability.toml");
    let mut only = full.clone();
    only.strategies = vec![Strategy::Asymmetric];
    let a = run(&full, Mode::InProc);
    let b = run(&only, Mode::InProc);
    assert_eq!(a.run(Strategy::Asymmetric).unwrap().outcomes, b.run(Strategy::Asymmetric).unwrap().outcomes);
}

const MID: &str = "[[requests]]\nid = 1\nbatch = 200\nperf_req = 16.8\nacc_req = 0.87\n\
                   [[requests]]\nid = 2\nbatch = 120\nperf_req = 10.0\nacc_req = 0.86\n\
                   [[events]]\nnode = \"rpi\"\nrequest = 1\nat_fraction = 0.5\n";

#[test]
fn sockets_match_in_process() {
    let s = scenario("seed = 9\ntime_scale = 0.0", MID);
    let a = csv_string(&run(&s, Mode::InProc));
    assert_eq!(a, csv_string(&run(&s, Mode::Sockets)));
    assert_eq!(a, csv_string(&run(&s, Mode::InProc)));
}

#[test]
fn processes_match_in_process() {
    let s = scenario("seed = 9\ntime_scale = 0.0", MID);
    let mut opts = RunOptions::for_scenario(&s).with_mode(Mode::Processes);
    opts.worker_bin = Some(worker_bin().to_path_buf());
    let procs = run_scenario(&s, &opts).unwrap();
    assert_eq!(csv_string(&run(&s, Mode::InProc)), csv_string(&procs));
}

#[test]
fn bogus_worker_binary_is_a_setup_error() {
    let s = scenario("seed = 1\ntime_scale = 0.0", "[[requests]]\nid = 1\nbatch = 10\nperf_req = 5.0\nacc_req = 0.8\n");
    for bin in ["/nonexistent/edgesplit-worker", "/bin/true"] {
        let mut opts = RunOptions::for_scenario(&s).with_mode(Mode::Processes);
        opts.worker_bin = Some(bin.into());
        opts.setup_timeout = std::time::Duration::from_secs(2);
        let err = run_scenario(&s, &opts).unwrap_err();
        assert!(matches!(err, RunError::Setup(_)), "{bin}: {err}");
    }
}

#[test]
fn departures_shrink_the_cluster() {
    let s = fixture("availability.toml");
    let report = run(&s, Mode::InProc);
    let nodes: Vec<usize> = report.run(Strategy::Proportional).unwrap().outcomes.iter().map(|o| o.per_node.len()).collect();
    assert_eq!(nodes, vec![4, 3, 2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_image_counted_once(
        batch in 1u64..400,
        perf in 4.0f64..22.0,
        fraction in 0.05f64..0.95,
        victim in prop::sample::select(vec!["rpi", "odroid"]),
        strategy in prop::sample::select(Strategy::ALL.to_vec()),
        seed in any::<u32>(),
    ) {
        let s = scenario(
            &format!("seed = {seed}\ntime_scale = 0.0\nstrategies = [\"{}\"]", strategy.name()),
            &format!(
                "[[requests]]\nid = 1\nbatch = {batch}\nperf_req = {perf}\nacc_req = 0.86\n\
                 [[requests]]\nid = 2\nbatch = {batch}\nperf_req = {perf}\nacc_req = 0.86\n\
                 [[events]]\nnode = \"{victim}\"\nrequest = 1\nat_fraction = {fraction}\n"
            ),
        );
        let report = run(&s, Mode::InProc);
        for o in &report.runs[0].outcomes {
            prop_assert_eq!(o.images_completed(), o.batch);
            prop_assert_eq!(o.duplicate_images, 0);
            prop_assert!(o.per_node.iter().all(|n| n.images <= o.batch));
        }
    }
}
