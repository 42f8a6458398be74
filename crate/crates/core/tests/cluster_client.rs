mod common;

use std::collections::BTreeSet;

use common::{list_body, pod, MockServer};
use ocloud_audit::cluster::{fetch_resources, ClusterEndpoint, ClusterError, PAGE_SIZE};

fn kinds(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn endpoint(server: &MockServer) -> ClusterEndpoint {
    ClusterEndpoint::new(&server.base_url).unwrap().insecure(true)
}

fn only_reads(server: &MockServer) -> bool {
    server.requests().iter().all(|r| r.method == "GET")
}

#[test]
fn two_item_pod_list() {
    let server = MockServer::start(|_, target| {
        if target.starts_with("/api/v1/namespaces/ricplt/pods") {
            (200, list_body(&[pod("e2term", "ricplt"), pod("a1", "ricplt")], None))
        } else {
            (404, "{}".into())
        }
    });
    let ep = endpoint(&server).with_token("s3cret");
    let docs = fetch_resources(&ep, &kinds(&["Pod"]), Some("ricplt")).unwrap();

    assert_eq!(docs.len(), 2);
    assert_eq!(docs[0].name, "a1");
    assert_eq!(docs[1].name, "e2term");
    for d in &docs {
        assert_eq!(d.kind, "Pod");
        assert_eq!(d.api_version, "v1");
        assert_eq!(d.namespace.as_deref(), Some("ricplt"));
        assert!(d.source.file_path.starts_with(&server.base_url), "{}", d.source.file_path);
        assert!(d.source.file_path.contains("/api/v1/namespaces/ricplt/pods"));
    }
    let seen = server.requests();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer s3cret"));
    assert!(seen[0].target.contains(&format!("limit={PAGE_SIZE}")));
    assert!(only_reads(&server));
}

#[test]
fn forbidden_names_kind_and_namespace() {
    let server = MockServer::start(|_, _| (403, r#"{"kind":"Status","code":403}"#.into()));
    let err = fetch_resources(&endpoint(&server), &kinds(&["Pod"]), Some("ricplt")).unwrap_err();
    match &err {
        ClusterError::Unauthorized { kind, scope, status } => {
            assert_eq!((kind.as_str(), scope.as_str(), *status), ("Pod", "ricplt", 403));
        }
        other => panic!("unexpected {other:?}"),
    }
    let text = err.to_string();
    assert!(text.contains("Pod") && text.contains("ricplt"), "{text}");
}

#[test]
fn status_and_body_errors() {
    let server = MockServer::start(|_, target| match target {
        t if t.contains("/configmaps") => (401, "{}".into()),
        t if t.contains("/services") => (500, "oops".into()),
        t if t.contains("/deployments") => (200, "{not json".into()),
        _ => (200, r#"{"items": 3}"#.into()),
    });
    let ep = endpoint(&server);
    let fetch = |k: &str| fetch_resources(&ep, &kinds(&[k]), None).unwrap_err();
    assert!(matches!(fetch("ConfigMap"), ClusterError::Unauthorized { status: 401, .. }));
    assert!(matches!(fetch("Service"), ClusterError::UnexpectedStatus { status: 500, .. }));
    assert!(matches!(fetch("Deployment"), ClusterError::DecodeError { ref kind, .. } if kind == "Deployment"));
    assert!(matches!(fetch("Pod"), ClusterError::DecodeError { ref scope, .. } if scope == "all namespaces"));
    assert!(only_reads(&server));
}

#[test]
fn unreachable_endpoint() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let ep = ClusterEndpoint::new(&format!("http://127.0.0.1:{port}"))
        .unwrap()
        .insecure(true)
        .with_timeout(std::time::Duration::from_secs(2));
    let err = fetch_resources(&ep, &kinds(&["Pod"]), Some("ricplt")).unwrap_err();
    assert!(matches!(err, ClusterError::Unreachable { ref kind, ref scope, .. } if kind == "Pod" && scope == "ricplt"));
}

#[test]
fn follows_continue_tokens() {
    let server = MockServer::start(|_, target| {
        if target.contains("continue=page2") {
            (200, list_body(&[pod("p3", "ricplt")], None))
        } else {
            (200, list_body(&[pod("p1", "ricplt"), pod("p2", "ricplt")], Some("page2")))
        }
    });
    let docs = fetch_resources(&endpoint(&server), &kinds(&["Pod"]), Some("ricplt")).unwrap();
    let names: Vec<&str> = docs.iter().map(|d| d.name.as_str()).collect();
    assert_eq!(names, ["p1", "p2", "p3"]);
    let seen = server.requests();
    assert_eq!(seen.len(), 2);
    assert!(seen.iter().any(|r| r.target.contains("continue=page2")));
}

#[test]
fn no_requests_without_work() {
    let server = MockServer::start(|_, _| (200, list_body(&[], None)));
    assert!(fetch_resources(&endpoint(&server), &BTreeSet::new(), None).unwrap().is_empty());
    // cluster-scoped kinds are skipped inside a namespace
    assert!(fetch_resources(&endpoint(&server), &kinds(&["ClusterRole"]), Some("ricplt"))
        .unwrap()
        .is_empty());
    let plain = ClusterEndpoint::new(&server.base_url).unwrap();
    assert!(matches!(
        fetch_resources(&plain, &kinds(&["Pod"]), None),
        Err(ClusterError::PlaintextRefused(_))
    ));
    assert!(matches!(
        fetch_resources(&endpoint(&server), &kinds(&["Widget"]), None),
        Err(ClusterError::UnsupportedKind(k)) if k == "Widget"
    ));
    assert!(server.requests().is_empty());
}

#[test]
fn many_kinds_merge_deterministically() {
    let server = MockServer::start(|_, target| {
        let name = target.split('?').next().unwrap().rsplit('/').next().unwrap().to_string();
        let item = serde_json::json!({"metadata": {"name": format!("{name}-x"), "namespace": "ricplt"}});
        (200, list_body(&[item], None))
    });
    let all = kinds(&["Pod", "Service", "ConfigMap", "Deployment", "StatefulSet", "Role", "RoleBinding", "NetworkPolicy"]);
    let first = fetch_resources(&endpoint(&server), &all, Some("ricplt")).unwrap();
    let second = fetch_resources(&endpoint(&server), &all, Some("ricplt")).unwrap();
    assert_eq!(first, second);
    let order: Vec<&str> = first.iter().map(|d| d.kind.as_str()).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
    assert_eq!(first.len(), 8);
    assert_eq!(server.requests().len(), 16);
    assert!(only_reads(&server));
}

#[test]
fn cli_scan_against_a_cluster_only_reads() {
    let server = MockServer::start(|_, target| {
        if target.starts_with("/api/v1/namespaces/ricplt/pods") {
            (200, list_body(&[pod("e2term", "ricplt")], None))
        } else {
            (200, list_body(&[], None))
        }
    });
    std::env::set_var("OCLOUD_TEST_TOKEN", "t0k");
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = ocloud_audit::cli::run(
        [
            "ocloud-audit", "scan", "--endpoint", &server.base_url, "--insecure", "--namespace", "ricplt",
            "--token-env", "OCLOUD_TEST_TOKEN", "--format", "json", "--fail-on", "low",
        ],
        &mut out,
        &mut err,
    );
    assert_eq!(code, 1, "{}", String::from_utf8_lossy(&err));
    let result = ocloud_audit::report::parse_json(std::str::from_utf8(&out).unwrap()).unwrap();
    assert!(result.findings.iter().any(|f| f.resource.name == "e2term"));
    let seen = server.requests();
    assert!(!seen.is_empty());
    assert!(seen.iter().all(|r| r.method == "GET"));
    assert!(seen.iter().all(|r| r.authorization.as_deref() == Some("Bearer t0k")));
}
