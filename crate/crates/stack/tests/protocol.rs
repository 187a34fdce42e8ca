mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Instant;

use base64::Engine;
use proptest::prelude::*;
use qprofile_core::compiler::ProgramRole;
use qprofile_stack::cluster::SeqStatus;
use qprofile_stack::wire::{read_frame, write_frame, JobMeta, StatusReply};
use qprofile_stack::{ClusterState, Connection, ErrorCode, LatencyProfile, Request, Response};

const PROGRAM: &str = "# waveforms\n{}\n# schedule\nwait 100\nstop\n";

#[derive(Debug, Clone)]
enum Cmd {
    Stop,
    Prepare { module: usize, seq: usize, valid: bool },
    Start,
    Status,
    Retrieve(usize),
    Garbage(Vec<u8>),
}

fn cmd() -> impl Strategy<Value = Cmd> {
    prop_oneof![
        Just(Cmd::Stop),
        // modules 0..=6 and sequencers 0..=6 include targets that do not exist
        (0usize..7, 0usize..7, prop::bool::weighted(0.9)).prop_map(|(module, seq, valid)| Cmd::Prepare {
            module,
            seq,
            valid
        }),
        (0usize..7, 0usize..7, prop::bool::weighted(0.9)).prop_map(|(module, seq, valid)| Cmd::Prepare {
            module,
            seq,
            valid
        }),
        Just(Cmd::Start),
        Just(Cmd::Status),
        (0usize..7).prop_map(Cmd::Retrieve),
        prop::collection::vec(any::<u8>(), 0..24).prop_map(Cmd::Garbage),
    ]
}

/// Reference model of the cluster under a zeroed profile with zero-length jobs.
#[derive(Debug, Default)]
struct Model {
    armed: BTreeSet<(usize, usize)>,
    done: bool,
}

impl Model {
    fn state(&self) -> ClusterState {
        match (self.done, self.armed.is_empty()) {
            (true, _) => ClusterState::Done,
            (false, false) => ClusterState::Armed,
            (false, true) => ClusterState::Idle,
        }
    }
}

fn exists(module: usize, seq: usize) -> bool {
    module < 6 && seq < 6
}

fn is_readout(module: usize) -> bool {
    (3..6).contains(&module)
}

fn prepare(module: usize, seq: usize, valid: bool) -> Request {
    let text = if valid { PROGRAM } else { "loop nowhere,R9" };
    Request::Prepare {
        module,
        seq,
        meta: JobMeta {
            qubit: module * 6 + seq,
            role: if is_readout(module) { ProgramRole::Readout } else { ProgramRole::Control },
            shots: 3,
            schedule_s: 0.0,
        },
        program: base64::engine::general_purpose::STANDARD.encode(text),
    }
}

fn send(conn: &mut Connection, req: &Request) -> Response {
    conn.call_raw(&serde_json::to_vec(req).unwrap(), req.name()).unwrap()
}

fn expect_err(r: &Response, code: ErrorCode) -> Result<(), TestCaseError> {
    match r {
        Response::Err { code: c, .. } if *c == code => Ok(()),
        other => Err(TestCaseError::fail(format!("expected {code}, got {other:?}"))),
    }
}

fn expect_ok(r: &Response) -> Result<&serde_json::Map<String, serde_json::Value>, TestCaseError> {
    match r {
        Response::Ok(m) => Ok(m),
        other => Err(TestCaseError::fail(format!("expected ok, got {other:?}"))),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_command_sequences_never_corrupt_state(cmds in prop::collection::vec(cmd(), 1..40)) {
        let mut p = LatencyProfile::zeroed();
        p.dilation = 0.0;
        let server = common::server(p);
        let mut conn = Connection::connect(server.addr()).unwrap();
        let mut model = Model::default();

        for c in cmds {
            match c {
                Cmd::Stop => {
                    expect_ok(&send(&mut conn, &Request::Stop))?;
                    model = Model::default();
                }
                Cmd::Prepare { module, seq, valid } => {
                    let r = send(&mut conn, &prepare(module, seq, valid));
                    if !exists(module, seq) {
                        expect_err(&r, ErrorCode::UnknownTarget)?;
                    } else if !valid {
                        expect_err(&r, ErrorCode::BadFrame)?;
                    } else if model.done || model.armed.contains(&(module, seq)) {
                        expect_err(&r, ErrorCode::BadState)?;
                    } else {
                        expect_ok(&r)?;
                        model.armed.insert((module, seq));
                    }
                }
                Cmd::Start => {
                    let r = send(&mut conn, &Request::Start);
                    if model.done || model.armed.is_empty() {
                        expect_err(&r, ErrorCode::BadState)?;
                    } else {
                        expect_ok(&r)?;
                        model.done = true;
                    }
                }
                Cmd::Status => {
                    let m = expect_ok(&send(&mut conn, &Request::Status))?.clone();
                    let s: StatusReply = serde_json::from_value(serde_json::Value::Object(m)).unwrap();
                    prop_assert_eq!(s.state, model.state());
                }
                Cmd::Retrieve(module) => {
                    let r = send(&mut conn, &Request::Retrieve { module });
                    if !is_readout(module) {
                        expect_err(&r, ErrorCode::UnknownTarget)?;
                    } else if !model.done {
                        expect_err(&r, ErrorCode::BadState)?;
                    } else {
                        let m = expect_ok(&r)?;
                        let bits: BTreeMap<String, String> = serde_json::from_value(m["bits"].clone()).unwrap();
                        let expect: BTreeSet<String> = model
                            .armed
                            .iter()
                            .filter(|&&(m, _)| m == module)
                            .map(|&(m, s)| (m * 6 + s).to_string())
                            .collect();
                        prop_assert_eq!(bits.keys().cloned().collect::<BTreeSet<_>>(), expect);
                        prop_assert!(bits.values().all(|b| b.len() == 3 && b.chars().all(|c| c == '0' || c == '1')));
                    }
                }
                Cmd::Garbage(bytes) => {
                    if serde_json::from_slice::<Request>(&bytes).is_err() {
                        expect_err(&conn.call_raw(&bytes, "garbage").unwrap(), ErrorCode::BadFrame)?;
                    }
                }
            }

            // the service's own view agrees with the model, sequencer by sequencer
            prop_assert_eq!(server.cluster().state(), model.state());
            let statuses = server.cluster().sequencer_statuses();
            let expected_busy = if model.done { SeqStatus::Done } else { SeqStatus::Armed };
            prop_assert_eq!(statuses.iter().filter(|&&s| s == expected_busy).count(), model.armed.len());
            prop_assert_eq!(statuses.iter().filter(|&&s| s == SeqStatus::Idle).count(), 36 - model.armed.len());
        }
    }
}

#[test]
fn malformed_frames_get_errors_and_connection_survives() {
    let server = common::server(LatencyProfile::zeroed());
    let mut conn = Connection::connect(server.addr()).unwrap();
    for junk in [&b"not json"[..], b"[]", b"{\"cmd\":\"launch\"}", b"{\"cmd\":\"retrieve\"}", b""] {
        match conn.call_raw(junk, "junk").unwrap() {
            Response::Err { code, .. } => assert_eq!(code, ErrorCode::BadFrame),
            other => panic!("{other:?}"),
        }
    }
    assert!(conn.call(&Request::Stop).is_ok());
}

#[test]
fn oversized_length_prefix_is_answered_then_closed() {
    let server = common::server(LatencyProfile::zeroed());
    let mut s = TcpStream::connect(server.addr()).unwrap();
    s.write_all(&u32::MAX.to_be_bytes()).unwrap();
    let reply = read_frame(&mut s).unwrap().unwrap();
    assert!(matches!(Response::from_bytes(&reply).unwrap(), Response::Err { code: ErrorCode::BadFrame, .. }));
    let mut rest = Vec::new();
    assert_eq!(s.read_to_end(&mut rest).unwrap(), 0);
}

#[test]
fn raw_socket_frames_match_the_documented_layout() {
    let server = common::server(LatencyProfile::zeroed());
    let mut s = TcpStream::connect(server.addr()).unwrap();
    write_frame(&mut s, br#"{"cmd":"status"}"#).unwrap();
    let mut len = [0u8; 4];
    s.read_exact(&mut len).unwrap();
    let mut body = vec![0u8; u32::from_be_bytes(len) as usize];
    s.read_exact(&mut body).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["ok"], true);
    assert_eq!(v["state"], "idle");
}

#[test]
fn two_clients_are_served_concurrently() {
    let mut p = LatencyProfile::zeroed();
    p.stop_ms = 50.0;
    let server = common::server(p);
    let addr = server.addr();
    let t0 = Instant::now();
    let handles: Vec<_> = (0..2)
        .map(|_| {
            std::thread::spawn(move || {
                let mut c = Connection::connect(addr).unwrap();
                c.call(&Request::Stop).unwrap();
                c.call(&Request::Status).unwrap();
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    // serialized handling would need at least 100 ms
    assert!(ms < 90.0, "two stops took {ms} ms");
}

#[test]
fn stop_aborts_a_running_job() {
    let server = common::server(LatencyProfile::zeroed());
    let mut conn = Connection::connect(server.addr()).unwrap();
    let job = common::job(2, 1000, qprofile_core::ResetMode::Passive);
    for f in &job.files {
        conn.call(&qprofile_stack::client::prepare_request(&job, f)).unwrap();
    }
    conn.call(&Request::Start).unwrap();
    assert_eq!(server.cluster().state(), ClusterState::Running);
    conn.call(&Request::Stop).unwrap();
    assert_eq!(server.cluster().state(), ClusterState::Idle);
    let e = conn.call(&Request::Retrieve { module: 3 }).unwrap_err();
    assert!(e.to_string().contains("bad_state"), "{e}");
}
