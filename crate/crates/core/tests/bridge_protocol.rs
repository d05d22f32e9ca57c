use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread::JoinHandle;

use ilcl_core::env::bridge::conformance::{run_suite, SCENARIOS};
use ilcl_core::env::bridge::{serve, BridgeEnv, Connection};
use ilcl_core::env::{EchoEnv, Environment, RoomParams, RoomWorld};
use ilcl_core::explore::{run_exploration, ExploreConfig};
use ilcl_core::llm::oracle::OracleProvider;
use ilcl_core::schema::{builtin, parse_schema, render_document};

/// Serves `env` to the first TCP client and returns its endpoint.
fn serve_once<E: Environment + 'static>(mut env: E) -> (String, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("tcp:{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        serve(&mut env, reader, stream).unwrap();
    });
    (endpoint, handle)
}

#[test]
fn echo_server_passes_every_scenario() {
    let (endpoint, server) = serve_once(EchoEnv::new());
    let results = run_suite(Connection::open(&endpoint).unwrap(), 0);
    assert_eq!(results.len(), SCENARIOS.len());
    for r in &results {
        assert!(r.passed, "{r}");
    }
    server.join().unwrap();
}

#[test]
fn server_without_snapshots_still_conforms() {
    let (endpoint, server) = serve_once(EchoEnv::without_snapshots());
    for r in run_suite(Connection::open(&endpoint).unwrap(), 7) {
        assert!(r.passed, "{r}");
    }
    server.join().unwrap();
}

#[test]
fn a_server_that_never_sends_caps_fails_the_handshake() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("tcp:{}", listener.local_addr().unwrap());
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut writer = stream.try_clone().unwrap();
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            if writeln!(writer, "{{\"t\":\"ok\"}}").is_err() || line.contains("\"close\"") {
                break;
            }
        }
    });
    let mut conn = Connection::open(&endpoint).unwrap();
    conn.set_timeout(std::time::Duration::from_millis(500));
    let results = run_suite(conn, 0);
    assert_eq!(results[0].name, "handshake");
    assert!(!results[0].passed);
    server.join().unwrap();
}

#[test]
fn exploration_over_the_bridge_matches_in_process() {
    let schema = parse_schema("roomworld", builtin::ROOMWORLD).unwrap();
    let mut config = ExploreConfig::default();
    config.budget.max_env_steps = 2000;
    config.budget.max_iterations = 500;

    let (mut local, truth) = RoomWorld::generate(4, RoomParams::default()).unwrap();
    let expected = run_exploration(&mut local, &schema, &mut OracleProvider::new(), &config, Some(&truth)).unwrap();

    let (remote, _) = RoomWorld::generate(4, RoomParams::default()).unwrap();
    let fingerprint = remote.fingerprint();
    let (endpoint, server) = serve_once(remote);
    let mut bridged = BridgeEnv::connect(&endpoint).unwrap();
    assert_eq!(bridged.fingerprint(), fingerprint);
    let got = run_exploration(&mut bridged, &schema, &mut OracleProvider::new(), &config, Some(&truth)).unwrap();
    bridged.close().unwrap();
    server.join().unwrap();

    assert_eq!(
        render_document(&got.document, &schema).unwrap(),
        render_document(&expected.document, &schema).unwrap()
    );
    assert_eq!(got.steps_used, expected.steps_used);
    assert_eq!(got.stop_reason, expected.stop_reason);
}
