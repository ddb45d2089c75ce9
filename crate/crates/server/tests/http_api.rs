use std::io::Write;
use std::time::Duration;

use servnet_core::admin::{DemoAction, HandleRef, LinkEdit};
use servnet_core::autonomic::ExperimentConfig;
use servnet_core::model::Handle;
use servnet_core::node::NodeError;
use servnet_core::par::Execution;
use servnet_core::wire::FaultKind;
use servnet_server::cli::{self, EXIT_OK, EXIT_USER};
use servnet_server::client::{ApiClient, ClientError};
use servnet_server::config::{ServerConfig, CONFIG_ENV};
use servnet_server::http::ExperimentRequest;
use servnet_server::ServerHandle;

const SAMPLES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/samples");

fn start(token: Option<&str>) -> ServerHandle {
    let src = format!(
        "bind = \"127.0.0.1:0\"\npacket_size = 96\n{}\n[[service]]\npath = \"G\"\nclass = \"Group\"\n\n[[service]]\npath = \"G/E\"\nclass = \"Echo\"\n",
        token.map(|t| format!("admin_token = \"{t}\"")).unwrap_or_default()
    );
    let cfg = ServerConfig::parse(&src, std::path::Path::new("inline.toml")).unwrap();
    ServerHandle::start(&cfg).unwrap()
}

fn status(e: ClientError) -> (u16, String) {
    match e {
        ClientError::Api { status, error } => (status, error.error),
        other => panic!("expected an API error, got {other}"),
    }
}

#[test]
fn admin_errors_map_to_statuses() {
    let s = start(Some("t0k"));
    let c = ApiClient::new(s.url(), Some("t0k".into()));
    assert!(c.meta("G/E").unwrap().contains("<Class_Name>Echo</Class_Name>"));
    assert_eq!(status(c.meta("G/ghost").unwrap_err()), (404, "UnknownService".into()));
    assert_eq!(status(c.view(0).unwrap_err()), (400, "InvalidDepth".into()));
    assert_eq!(status(c.demo(&DemoAction::Step).unwrap_err()), (409, "DemoNotCreated".into()));
    let far = LinkEdit {
        a: HandleRef::Path("G/E".into()),
        b: HandleRef::Full { base_uri: "http://elsewhere:1".into(), path: vec!["X".into()] },
        create: true,
        mutual: false,
    };
    assert_eq!(status(c.link(&far).unwrap_err()), (409, "CrossNetworkPermanentLink".into()));

    let wrong = ApiClient::new(s.url(), Some("nope".into()));
    assert_eq!(status(wrong.view(2).unwrap_err()), (401, "Unauthorized".into()));
    assert_eq!(status(ApiClient::new(s.url(), None).state_digest().unwrap_err()).0, 401);
    // The packet endpoint is not behind the admin token.
    let agent = ureq::Agent::new_with_config(ureq::Agent::config_builder().http_status_as_error(false).build());
    assert_eq!(agent.get(format!("{}/health", s.url())).call().unwrap().status(), 200);
    let missing = agent.post(format!("{}/call", s.url())).send(&b"x"[..]).unwrap();
    assert_eq!(missing.status(), 400);
    let no_reply = agent
        .get(format!("{}/call", s.url()))
        .header("X-Msg-Id", "nope")
        .header("X-Reply-Index", "1")
        .call()
        .unwrap();
    assert_eq!(no_reply.status(), 404);
}

#[test]
fn reads_do_not_change_state() {
    let s = start(None);
    let c = ApiClient::new(s.url(), None);
    let d0 = c.state_digest().unwrap();
    let v = c.view(3).unwrap();
    c.network_meta().unwrap();
    c.meta("G").unwrap();
    c.demo(&DemoAction::Status).unwrap();
    assert_eq!(c.view(3).unwrap(), v);
    assert_eq!(c.state_digest().unwrap(), d0);

    let edit = LinkEdit { a: HandleRef::Path("G/E".into()), b: HandleRef::Path("G".into()), create: true, mutual: true };
    c.link(&edit).unwrap();
    let d1 = c.state_digest().unwrap();
    assert_ne!(d1, d0);
    c.link(&edit).unwrap();
    assert_eq!(c.state_digest().unwrap(), d1);
    let view = c.view(3).unwrap();
    assert_eq!(view.services[0].links.len(), 1);
}

#[test]
fn demo_runs_and_stops() {
    let s = start(None);
    let c = ApiClient::new(s.url(), None);
    c.demo(&DemoAction::CreateServices { n: 30, id_len: 10, seed: 3, fanout: Some(2) }).unwrap();
    let st = c.demo(&DemoAction::Start { period_ms: Some(20) }).unwrap();
    assert!(st.running);
    std::thread::sleep(Duration::from_millis(150));
    let stopped = c.demo(&DemoAction::Stop).unwrap();
    assert!(!stopped.running);
    assert!(stopped.round >= 1);
    std::thread::sleep(Duration::from_millis(100));
    assert_eq!(c.demo(&DemoAction::Status).unwrap().round, stopped.round);
    let container = stopped.container.unwrap();
    assert_eq!(c.view(2).unwrap().services.iter().filter(|n| n.name == container).count(), 1);
}

#[test]
fn experiment_installs_linked_services() {
    let s = start(None);
    let c = ApiClient::new(s.url(), None);
    let req = ExperimentRequest { config: ExperimentConfig::new(40, 200, 2), execution: Execution::Sequential };
    let inst = c.experiment(&req).unwrap();
    assert!(inst.report.reduction > 0.0, "{}", inst.report.summary());
    let entry = s.node().network_metadata().into_iter().find(|d| d.handle.path() == [inst.container.clone()]).unwrap();
    let first = entry.child_meta[0].handle.path().join("/");
    assert!(!c.dynamic_links(&first).unwrap().is_empty());
    assert_eq!(status(c.dynamic_links("no/such").unwrap_err()).0, 404);
    let bad = ExperimentRequest { config: ExperimentConfig::new(1, 10, 1), execution: Execution::Sequential };
    assert_eq!(status(c.experiment(&bad).unwrap_err()).0, 400);
}

#[test]
fn nodes_call_each_other_over_http() {
    let (a, b) = (start(None), start(None));
    let target = Handle::new(b.node().base_uri(), ["G", "E"]).unwrap();
    let big: String = "xyz".repeat(400);
    let got = a.node().call(&target, "concat", vec![big.as_str().into(), "!".into()], None).unwrap();
    assert_eq!(got.as_str().unwrap().len(), 1201);
    for _ in 0..3 {
        a.node().call(&target, "increment", vec![], None).unwrap();
    }
    assert_eq!(b.node().call(&target, "getCount", vec![], None).unwrap().as_i64(), Some(3));
    match a.node().call(&target, "missing", vec![], None) {
        Err(NodeError::RemoteFault(f)) => assert_eq!(f.kind, FaultKind::UnknownMethod),
        other => panic!("{other:?}"),
    }
    let url = b.url();
    b.shutdown().unwrap();
    let gone = Handle::new(url, ["G", "E"]).unwrap();
    assert!(matches!(a.node().call(&gone, "getCount", vec![], None), Err(NodeError::Transport(_))));
}

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::run(std::iter::once("servnet").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn cli_exit_codes() {
    let s = start(Some("k"));
    let url = s.url();
    let (code, out, _) = run(&["--url", &url, "--token", "k", "view", "--depth", "2"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("E (Echo"), "{out}");
    assert_eq!(run(&["--url", &url, "--token", "k", "link", "create", "G/E", "G", "--mutual"]).0, EXIT_OK);
    let (code, out, _) = run(&["--url", &url, "--token", "k", "meta", "G/E"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("Link_Service_Meta"));
    assert_eq!(run(&["--url", &url, "--token", "k", "meta", "G/ghost"]).0, EXIT_USER);
    assert_eq!(run(&["--url", &url, "view"]).0, EXIT_USER);
    assert_eq!(run(&["--url", &url, "--token", "k", "demo", "step"]).0, EXIT_USER);
    assert_eq!(run(&["--url", &url, "--token", "k", "demo", "create", "--n", "5"]).0, EXIT_OK);
    assert_eq!(run(&["frobnicate"]).0, EXIT_USER);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
    assert_eq!(run(&["--url", "http://127.0.0.1:9", "view"]).0, EXIT_USER);
    let (code, out, _) = run(&["experiment", "--local", "--n", "30", "--queries", "100", "--json"]);
    assert_eq!(code, EXIT_OK);
    assert!(serde_json::from_str::<serde_json::Value>(&out).unwrap()["reduction"].is_number());
}

#[test]
fn cli_runs_transaction_scenarios() {
    let dir = format!("{SAMPLES}/scenarios");
    let files: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path().display().to_string())
        .collect();
    let mut args = vec!["txn-sim"];
    args.extend(files.iter().map(String::as_str));
    let (code, out, _) = run(&args);
    assert_eq!(code, EXIT_OK, "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), files.len());

    let mut bad = tempfile::NamedTempFile::new().unwrap();
    write!(bad, r#"{{"name": "early release", "steps": [{{"event": "release"}}], "expect": "PaymentReleased"}}"#).unwrap();
    let (code, out, err) = run(&["txn-sim", bad.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_USER);
    assert!(out.contains("\"error\"") && out.contains("FAIL early release"));
    assert!(err.contains("early release"));
    assert_eq!(run(&["txn-sim", "/no/such/file.json"]).0, EXIT_USER);
}

#[test]
fn sample_config_loads_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(format!("{SAMPLES}/node.toml"))
        .unwrap()
        .replace("127.0.0.1:8080", "127.0.0.1:0");
    std::fs::write(dir.path().join("node.toml"), src).unwrap();
    std::fs::copy(format!("{SAMPLES}/service1_admin.xml"), dir.path().join("service1_admin.xml")).unwrap();
    // Only this test touches the variable.
    std::env::set_var(CONFIG_ENV, dir.path().join("node.toml"));
    let cfg = ServerConfig::resolve(None).unwrap();
    std::env::remove_var(CONFIG_ENV);
    let s = ServerHandle::start(&cfg).unwrap();
    let svc = Handle::new(s.node().base_uri(), ["Group", "Service1"]).unwrap();
    let n = s.node();
    assert_eq!(n.call(&svc, "getData", vec![], Some("guest")).unwrap().as_str(), Some("<desk>north</desk>"));
    assert!(n.call(&svc, "increment", vec![], Some("guest")).is_err());
    assert_eq!(n.call(&svc, "increment", vec![], Some("staff-pass")).unwrap().as_i64(), Some(6));
    let c = ApiClient::new(s.url(), Some("change-me".into()));
    assert_eq!(c.view(1).unwrap().services[0].name, "Group");
}
