//! List resources from a Kubernetes API server and scan them.
//!
//! Without arguments a throwaway local server stands in for the cluster:
//!
//!     cargo run --example cluster_fetch
//!     OCLOUD_TOKEN=... cargo run --example cluster_fetch -- https://10.0.0.1:6443 ricplt

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;

use ocloud_audit::cluster::{fetch_resources, ClusterEndpoint};
use ocloud_audit::compliance::bundled_frameworks;
use ocloud_audit::rules::{builtin_catalog, evaluate, RuleCatalog};

const POD_LIST: &str = r#"{"kind":"PodList","apiVersion":"v1","metadata":{},"items":[
 {"metadata":{"name":"e2term-0","namespace":"ricplt","labels":{"app":"ricplt-e2term"}},
  "spec":{"containers":[{"name":"e2term","image":"nexus3.o-ran-sc.org:10002/o-ran-sc/ric-plt-e2:6.0.3"}]}}]}"#;

/// Answer every request with `POD_LIST` for pods and an empty list otherwise.
fn local_server() -> std::io::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let mut reader = BufReader::new(&stream);
            let mut request_line = String::new();
            let _ = reader.read_line(&mut request_line);
            let mut line = String::new();
            while reader.read_line(&mut line).is_ok_and(|n| n > 2) {
                line.clear();
            }
            let body = if request_line.contains("/pods") {
                POD_LIST
            } else {
                r#"{"kind":"List","apiVersion":"v1","metadata":{},"items":[]}"#
            };
            let _ = write!(
                &stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    Ok(format!("http://{addr}"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let (url, local) = match args.next() {
        Some(url) => (url, false),
        None => (local_server()?, true),
    };
    let namespace = args.next().unwrap_or_else(|| "ricplt".into());
    let endpoint = ClusterEndpoint::new(&url)?
        .with_token_from_env("OCLOUD_TOKEN")
        .insecure(local);

    let frameworks = bundled_frameworks();
    let catalog = RuleCatalog::new(builtin_catalog(), &frameworks)?;
    let kinds: BTreeSet<String> = ["Pod", "Deployment", "ConfigMap"].map(String::from).into();
    let resources = fetch_resources(&endpoint, &kinds, Some(&namespace))?;
    println!("fetched {} resources from {url}", resources.len());
    for f in evaluate(&catalog, &resources) {
        println!("  {:<10} {:<20} {}", f.severity, f.rule_id, f.resource);
    }
    Ok(())
}
