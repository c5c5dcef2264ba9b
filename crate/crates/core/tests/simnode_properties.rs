use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver};
use edgesplit_core::catalog::{default_catalog, DEFAULT_TOP5};
use edgesplit_core::proto::{
    duplex, CloseReason, Message, Session, SessionConfig, SessionEvent, SessionEventKind,
    PROTOCOL_VERSION,
};
use edgesplit_core::simnode::{
    run_inference, run_worker, Control, FailPlan, NodeProfile, WorkerConfig, WorkerExit,
};
use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

fn node(perf: Vec<f64>, cv: f64) -> NodeProfile {
    NodeProfile::new("n", perf, cv, 1).unwrap()
}

/// Probability that a Binomial(n, p) proportion lands within `tol` of p.
fn binomial_coverage(n: u64, p: f64, tol: f64) -> f64 {
    let b = Binomial::new(p, n).unwrap();
    let lo = ((p - tol) * n as f64).ceil() as u64;
    let hi = ((p + tol) * n as f64).floor() as u64;
    b.cdf(hi) - if lo == 0 { 0.0 } else { b.cdf(lo - 1) }
}

#[test]
fn accuracy_converges_to_the_catalog_value() {
    let n = 10_000;
    let p = DEFAULT_TOP5[0];
    let coverage = binomial_coverage(n, p, 0.01);
    assert!(coverage > 0.99, "coverage {coverage}");

    let profile = node(vec![10.0; 6], 0.05);
    let catalog = default_catalog();
    let mut inside = 0;
    let seeds = 200;
    for seed in 0..seeds {
        let run = run_inference(&profile, &catalog, n, 0, seed);
        let acc = run.top5_correct as f64 / n as f64;
        if (acc - p).abs() <= 0.01 {
            inside += 1;
        }
    }
    // With coverage > 0.99 per run, fewer than 196 of 200 runs inside the
    // band would be a ~1e-3 event.
    assert!(inside >= 196, "{inside}/{seeds} runs within the band");
}

#[test]
fn accuracy_follows_the_level() {
    let profile = node(vec![10.0; 6], 0.0);
    let catalog = default_catalog();
    for (level, &expected) in DEFAULT_TOP5.iter().enumerate() {
        let run = run_inference(&profile, &catalog, 50_000, level, 3);
        let acc = run.top5_correct as f64 / 50_000.0;
        assert!((acc - expected).abs() < 0.006, "level {level}: {acc}");
    }
}

#[test]
fn latency_moments_match_the_jitter_model() {
    let cv = 0.3;
    let perf = 4.0;
    let profile = node(vec![perf], cv);
    let stream = edgesplit_core::simnode::ImageStream::for_level(&profile, &default_catalog(), 0, 77);
    let xs: Vec<f64> = stream.take(200_000).map(|(l, _)| l).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    assert!((mean - 1.0 / perf).abs() / (1.0 / perf) < 0.005, "mean {mean}");
    assert!((var.sqrt() / mean - cv).abs() < 0.01, "cv {}", var.sqrt() / mean);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn throughput_within_three_cv(
        perf in 0.5f64..200.0, cv in 0.0f64..0.25, images in 100u64..3000, seed in any::<u64>(),
    ) {
        let profile = node(vec![perf], cv);
        let run = run_inference(&profile, &default_catalog(), images, 0, seed);
        let achieved = images as f64 / run.elapsed;
        prop_assert!((achieved - perf).abs() <= 3.0 * cv * perf + 1e-9 * perf,
            "achieved {} vs {}", achieved, perf);
        prop_assert_eq!(run.images_done, images);
        prop_assert!(run.top5_correct <= images);
    }

    #[test]
    fn runs_are_reproducible(perf in 0.5f64..50.0, cv in 0.0f64..0.5, images in 0u64..500, seed in any::<u64>()) {
        let profile = node(vec![perf], cv);
        let c = default_catalog();
        prop_assert_eq!(run_inference(&profile, &c, images, 0, seed), run_inference(&profile, &c, images, 0, seed));
    }
}

struct FakeGateway {
    session: Session,
    events: Receiver<SessionEvent>,
}

impl FakeGateway {
    fn next(&self) -> SessionEventKind {
        self.events.recv_timeout(Duration::from_secs(5)).expect("event").kind
    }
}

fn start_worker(
    perf: Vec<f64>,
    time_scale: f64,
    fail: Option<FailPlan>,
) -> (FakeGateway, crossbeam_channel::Sender<Control>, thread::JoinHandle<WorkerExit>) {
    let ((gr, gw), (wr, ww)) = duplex();
    let (tx, events) = unbounded();
    let (session, _) = Session::spawn(1, gr, gw, SessionConfig::default(), tx);
    let (ctl_tx, ctl_rx) = unbounded();
    let levels = perf.len();
    let config = WorkerConfig {
        profile: NodeProfile::new("w", perf, 0.0, 4).unwrap(),
        catalog: default_catalog().truncated(levels).unwrap(),
        time_scale,
        fail,
        session: SessionConfig::default(),
    };
    let handle = thread::spawn(move || run_worker(config, wr, ww, ctl_rx).unwrap());
    let gw = FakeGateway { session, events };
    assert_eq!(
        gw.next(),
        SessionEventKind::Message(Message::Hello { node_id: "w".into(), protocol_version: PROTOCOL_VERSION })
    );
    match gw.next() {
        SessionEventKind::Message(Message::ProfileReport { perf_column, .. }) => {
            assert_eq!(perf_column.len(), levels)
        }
        other => panic!("expected profile, got {other:?}"),
    }
    (gw, ctl_tx, handle)
}

#[test]
fn worker_serves_orders_in_sequence() {
    let (gw, ctl, handle) = start_worker(vec![8.0, 16.0], 0.0, None);
    gw.session.send(&Message::Assign { request_id: 1, images: 40, level: 0, seed: 5 }).unwrap();
    // queued behind the first
    gw.session.send(&Message::Assign { request_id: 1, images: 16, level: 1, seed: 6 }).unwrap();
    for expected_ms in [5000, 1000] {
        match gw.next() {
            SessionEventKind::Message(Message::Result { elapsed_ms, images_done, .. }) => {
                assert_eq!(elapsed_ms, expected_ms);
                assert!(images_done == 40 || images_done == 16);
            }
            other => panic!("{other:?}"),
        }
    }
    ctl.send(Control::Disconnect).unwrap();
    assert_eq!(gw.next(), SessionEventKind::Closed(CloseReason::Bye));
    assert_eq!(handle.join().unwrap(), WorkerExit::Disconnected);
}

#[test]
fn fail_plan_reports_partial_work_then_drops() {
    let plan = FailPlan { request_id: 2, fraction: 0.25 };
    let (gw, _ctl, handle) = start_worker(vec![10.0], 0.0, Some(plan));
    gw.session.send(&Message::Assign { request_id: 1, images: 10, level: 0, seed: 1 }).unwrap();
    assert!(matches!(gw.next(), SessionEventKind::Message(Message::Result { images_done: 10, .. })));
    gw.session.send(&Message::Assign { request_id: 2, images: 10, level: 0, seed: 1 }).unwrap();
    match gw.next() {
        SessionEventKind::Message(Message::Result { images_done, elapsed_ms, .. }) => {
            assert_eq!(images_done, 2);
            assert_eq!(elapsed_ms, 200);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(gw.next(), SessionEventKind::Closed(CloseReason::PeerClosed));
    assert_eq!(handle.join().unwrap(), WorkerExit::Failed { request_id: 2, images_done: 2 });
}

#[test]
fn time_scale_paces_execution() {
    let (gw, ctl, handle) = start_worker(vec![10.0], 20.0, None);
    let start = Instant::now();
    // 4 simulated seconds at 20x is 200 ms of real time
    gw.session.send(&Message::Assign { request_id: 1, images: 40, level: 0, seed: 1 }).unwrap();
    assert!(matches!(gw.next(), SessionEventKind::Message(Message::Result { elapsed_ms: 4000, .. })));
    let real = start.elapsed();
    assert!(real >= Duration::from_millis(190) && real < Duration::from_millis(1500), "{real:?}");
    ctl.send(Control::Disconnect).unwrap();
    handle.join().unwrap();
}

#[test]
fn worker_stops_when_gateway_leaves() {
    let (gw, _ctl, handle) = start_worker(vec![10.0], 0.0, None);
    gw.session.close();
    assert_eq!(handle.join().unwrap(), WorkerExit::GatewayClosed(CloseReason::Bye));
}
