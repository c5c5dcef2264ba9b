use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver};
use edgesplit_core::proto::{
    decode, duplex, encode, tcp_halves, CloseReason, FrameDecoder, HeartbeatConfig, Message,
    Session, SessionConfig, SessionEvent, SessionEventKind, PROTOCOL_VERSION,
};
use edgesplit_core::NodeId;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
        0.0f64..1.0,
    ]
}

fn node_id() -> impl Strategy<Value = NodeId> {
    "[a-zA-Z0-9_\\-\\.é ]{0,16}".prop_map(NodeId::from)
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        node_id().prop_map(Message::hello),
        (node_id(), prop::collection::vec((finite(), finite()), 0..8)).prop_map(|(node_id, c)| {
            let (perf_column, acc) = c.into_iter().unzip();
            Message::ProfileReport { node_id, perf_column, acc }
        }),
        (any::<u64>(), any::<u64>(), any::<u32>(), any::<u64>()).prop_map(
            |(request_id, images, level, seed)| Message::Assign { request_id, images, level, seed }
        ),
        (any::<u64>(), node_id(), any::<u64>(), any::<u64>(), any::<u64>()).prop_map(
            |(request_id, node_id, a, b, elapsed_ms)| Message::Result {
                request_id,
                node_id,
                images_done: a.max(b),
                top5_correct: a.min(b),
                elapsed_ms,
            }
        ),
        Just(Message::Ping),
        Just(Message::Pong),
        Just(Message::Bye),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn round_trip_identity(msg in message()) {
        let bytes = encode(&msg).unwrap();
        prop_assert_eq!(bytes.len() - 4, u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize);
        let (back, used) = decode(&bytes).unwrap().unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, msg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn any_fragmentation_decodes_the_same_sequence(
        msgs in prop::collection::vec(message(), 1..12),
        cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..24),
    ) {
        let stream: Vec<u8> = msgs.iter().flat_map(|m| encode(m).unwrap()).collect();
        let mut points: Vec<usize> = cuts.iter().map(|i| i.index(stream.len() + 1)).collect();
        points.push(0);
        points.push(stream.len());
        points.sort_unstable();
        let mut decoder = FrameDecoder::new();
        let mut out = Vec::new();
        for w in points.windows(2) {
            decoder.push(&stream[w[0]..w[1]]);
            while let Some(m) = decoder.next_message().unwrap() {
                out.push(m);
            }
        }
        prop_assert_eq!(out, msgs);
        prop_assert_eq!(decoder.buffered(), 0);
    }

    #[test]
    fn strict_prefixes_need_more_bytes(msg in message()) {
        let bytes = encode(&msg).unwrap();
        for end in 0..bytes.len() {
            prop_assert!(decode(&bytes[..end]).unwrap().is_none());
        }
    }
}

fn next_event(rx: &Receiver<SessionEvent>, within: Duration) -> SessionEvent {
    rx.recv_timeout(within).expect("session event")
}

#[test]
fn in_process_sessions_exchange_messages_and_answer_pings() {
    let ((ar, aw), (br, bw)) = duplex();
    let (atx, arx) = unbounded();
    let (btx, brx) = unbounded();
    let hb = HeartbeatConfig { interval: Duration::from_millis(50), max_misses: 3 };
    let (a, _) = Session::spawn(1, ar, aw, SessionConfig::with_heartbeat(hb), atx);
    let (b, _) = Session::spawn(2, br, bw, SessionConfig::default(), btx);

    let msg = Message::Assign { request_id: 4, images: 40, level: 2, seed: 11 };
    a.send(&msg).unwrap();
    assert_eq!(next_event(&brx, Duration::from_secs(1)).kind, SessionEventKind::Message(msg));

    // several heartbeat intervals pass; pongs keep the session open
    std::thread::sleep(Duration::from_millis(400));
    assert!(arx.try_recv().is_err());
    assert!(!a.is_closed());

    b.close();
    let ev = next_event(&arx, Duration::from_secs(1));
    assert_eq!(ev, SessionEvent { conn: 1, kind: SessionEventKind::Closed(CloseReason::Bye) });
}

fn tcp_pair() -> (TcpStream, TcpStream) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let client = TcpStream::connect(listener.local_addr().unwrap()).unwrap();
    let (server, _) = listener.accept().unwrap();
    (server, client)
}

#[test]
fn closed_socket_is_detected_promptly() {
    let (server, client) = tcp_pair();
    let (tx, rx) = unbounded();
    let (r, w) = tcp_halves(server).unwrap();
    let (_s, _) = Session::spawn(5, r, w, SessionConfig::with_heartbeat(HeartbeatConfig::default()), tx);

    let (cr, cw) = tcp_halves(client).unwrap();
    let (ctx, _crx) = unbounded();
    let (worker, _) = Session::spawn(6, cr, cw, SessionConfig::default(), ctx);
    worker
        .send(&Message::Result {
            request_id: 1,
            node_id: "w".into(),
            images_done: 3,
            top5_correct: 2,
            elapsed_ms: 10,
        })
        .unwrap();
    let start = Instant::now();
    worker.abort();
    let first = next_event(&rx, Duration::from_secs(2));
    assert!(matches!(first.kind, SessionEventKind::Message(Message::Result { .. })));
    let closed = next_event(&rx, Duration::from_secs(2));
    assert_eq!(closed.kind, SessionEventKind::Closed(CloseReason::PeerClosed));
    assert!(start.elapsed() <= Duration::from_millis(1500), "{:?}", start.elapsed());
}

#[test]
fn silent_peer_times_out_after_three_missed_pings() {
    let (server, client) = tcp_pair();
    let (tx, rx) = unbounded();
    let (r, w) = tcp_halves(server).unwrap();
    let start = Instant::now();
    let (_s, _) = Session::spawn(7, r, w, SessionConfig::with_heartbeat(HeartbeatConfig::default()), tx);
    // the client keeps the socket open but never answers
    let ev = next_event(&rx, Duration::from_secs(4));
    let waited = start.elapsed();
    assert_eq!(ev.kind, SessionEventKind::Closed(CloseReason::HeartbeatTimeout));
    assert!(waited >= Duration::from_millis(1450), "{waited:?}");
    assert!(waited <= Duration::from_millis(1700), "{waited:?}");
    drop(client);
}

#[test]
fn unknown_protocol_version_is_answered_with_bye() {
    let (server, mut client) = tcp_pair();
    let (tx, rx) = unbounded();
    let (r, w) = tcp_halves(server).unwrap();
    let (_s, _) = Session::spawn(8, r, w, SessionConfig::default(), tx);

    let payload = format!(
        r#"{{"type":"Hello","node_id":"w","protocol_version":{}}}"#,
        PROTOCOL_VERSION + 41
    );
    let mut frame = (payload.len() as u32).to_be_bytes().to_vec();
    frame.extend_from_slice(payload.as_bytes());
    client.write_all(&frame).unwrap();

    let ev = next_event(&rx, Duration::from_secs(2));
    assert!(matches!(ev.kind, SessionEventKind::Closed(CloseReason::Protocol(_))));

    client.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    let mut got = Vec::new();
    client.read_to_end(&mut got).unwrap();
    let (msg, _) = decode(&got).unwrap().unwrap();
    assert_eq!(msg, Message::Bye);
}

#[test]
fn malformed_frame_closes_the_session() {
    let ((ar, aw), (_br, mut bw)) = duplex();
    let (tx, rx) = unbounded();
    let (_s, _) = Session::spawn(9, ar, aw, SessionConfig::default(), tx);
    use edgesplit_core::proto::WriteHalf;
    bw.write_frame(&[0, 0, 0, 2, b'{', b'x']).unwrap();
    let ev = next_event(&rx, Duration::from_secs(1));
    assert!(matches!(ev.kind, SessionEventKind::Closed(CloseReason::Protocol(_))));
}
