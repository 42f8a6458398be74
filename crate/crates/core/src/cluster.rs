//! Read-only client for Kubernetes-style list endpoints.
//!
//! The client only ever issues `GET` list requests. Plain `http://`
//! endpoints are refused unless the endpoint is explicitly marked insecure.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;
use url::Url;

use crate::manifest::{ResourceDocument, SourceLocation};

pub const PAGE_SIZE: usize = 500;
pub const MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterEndpoint {
    pub base_url: Url,
    pub bearer_token: Option<String>,
    pub ca_bundle: Option<PathBuf>,
    pub request_timeout: Duration,
    /// Allow `http://` base URLs.
    pub insecure: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("invalid endpoint `{url}`: {message}")]
    InvalidEndpoint { url: String, message: String },
    #[error("refusing plain-text endpoint {0}; pass --insecure to allow it")]
    PlaintextRefused(String),
    #[error("no list endpoint is known for kind `{0}`")]
    UnsupportedKind(String),
    #[error("cannot build HTTP client: {0}")]
    Client(String),
    #[error("unauthorized ({status}) listing {kind} in {scope}")]
    Unauthorized { kind: String, scope: String, status: u16 },
    #[error("cluster unreachable while listing {kind} in {scope}: {message}")]
    Unreachable { kind: String, scope: String, message: String },
    #[error("unexpected status {status} listing {kind} in {scope}")]
    UnexpectedStatus { kind: String, scope: String, status: u16 },
    #[error("malformed list response for {kind} in {scope}: {message}")]
    DecodeError { kind: String, scope: String, message: String },
}

impl ClusterEndpoint {
    pub fn new(base_url: &str) -> Result<Self, ClusterError> {
        let invalid = |message: &str| ClusterError::InvalidEndpoint {
            url: base_url.to_string(),
            message: message.to_string(),
        };
        let url = Url::parse(base_url).map_err(|e| invalid(&e.to_string()))?;
        if !matches!(url.scheme(), "http" | "https") || url.cannot_be_a_base() || url.host().is_none() {
            return Err(invalid("expected an absolute http(s) URL"));
        }
        Ok(ClusterEndpoint {
            base_url: url,
            bearer_token: None,
            ca_bundle: None,
            request_timeout: DEFAULT_TIMEOUT,
            insecure: false,
        })
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.bearer_token = Some(token.into());
        self
    }

    /// Read the bearer token from an environment variable, if set and non-empty.
    pub fn with_token_from_env(mut self, var: &str) -> Self {
        if let Some(token) = std::env::var(var).ok().filter(|t| !t.trim().is_empty()) {
            self.bearer_token = Some(token.trim().to_string());
        }
        self
    }

    pub fn with_ca_bundle(mut self, path: impl Into<PathBuf>) -> Self {
        self.ca_bundle = Some(path.into());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.request_timeout = timeout;
        self
    }

    pub fn insecure(mut self, insecure: bool) -> Self {
        self.insecure = insecure;
        self
    }

    fn client(&self) -> Result<Client, ClusterError> {
        if self.base_url.scheme() == "http" && !self.insecure {
            return Err(ClusterError::PlaintextRefused(self.base_url.to_string()));
        }
        if self.request_timeout.is_zero() {
            return Err(ClusterError::InvalidEndpoint {
                url: self.base_url.to_string(),
                message: "request timeout must be positive".into(),
            });
        }
        let mut builder = Client::builder()
            .timeout(self.request_timeout)
            .connect_timeout(self.request_timeout)
            .redirect(reqwest::redirect::Policy::none());
        if let Some(path) = &self.ca_bundle {
            let pem = std::fs::read(path).map_err(|e| ClusterError::Client(format!("{}: {e}", path.display())))?;
            let cert = reqwest::Certificate::from_pem(&pem).map_err(|e| ClusterError::Client(e.to_string()))?;
            builder = builder.add_root_certificate(cert);
        }
        builder.build().map_err(|e| ClusterError::Client(e.to_string()))
    }
}

/// Where a kind is listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApiResource {
    pub kind: &'static str,
    /// `v1` for the core group, `group/version` otherwise.
    pub api_version: &'static str,
    pub plural: &'static str,
    pub namespaced: bool,
}

const API_RESOURCES: &[ApiResource] = &[
    ApiResource { kind: "Pod", api_version: "v1", plural: "pods", namespaced: true },
    ApiResource { kind: "Service", api_version: "v1", plural: "services", namespaced: true },
    ApiResource { kind: "ConfigMap", api_version: "v1", plural: "configmaps", namespaced: true },
    ApiResource { kind: "ServiceAccount", api_version: "v1", plural: "serviceaccounts", namespaced: true },
    ApiResource { kind: "Namespace", api_version: "v1", plural: "namespaces", namespaced: false },
    ApiResource { kind: "Deployment", api_version: "apps/v1", plural: "deployments", namespaced: true },
    ApiResource { kind: "StatefulSet", api_version: "apps/v1", plural: "statefulsets", namespaced: true },
    ApiResource { kind: "DaemonSet", api_version: "apps/v1", plural: "daemonsets", namespaced: true },
    ApiResource { kind: "ReplicaSet", api_version: "apps/v1", plural: "replicasets", namespaced: true },
    ApiResource { kind: "Job", api_version: "batch/v1", plural: "jobs", namespaced: true },
    ApiResource { kind: "CronJob", api_version: "batch/v1", plural: "cronjobs", namespaced: true },
    ApiResource { kind: "NetworkPolicy", api_version: "networking.k8s.io/v1", plural: "networkpolicies", namespaced: true },
    ApiResource { kind: "Role", api_version: "rbac.authorization.k8s.io/v1", plural: "roles", namespaced: true },
    ApiResource { kind: "RoleBinding", api_version: "rbac.authorization.k8s.io/v1", plural: "rolebindings", namespaced: true },
    ApiResource { kind: "ClusterRole", api_version: "rbac.authorization.k8s.io/v1", plural: "clusterroles", namespaced: false },
    ApiResource { kind: "ClusterRoleBinding", api_version: "rbac.authorization.k8s.io/v1", plural: "clusterrolebindings", namespaced: false },
];

pub fn api_resource(kind: &str) -> Option<&'static ApiResource> {
    API_RESOURCES.iter().find(|r| r.kind == kind)
}

impl ApiResource {
    /// Path of the list endpoint, relative to the API root.
    pub fn list_path(&self, namespace: Option<&str>) -> String {
        let root = if self.api_version == "v1" {
            "api/v1".to_string()
        } else {
            format!("apis/{}", self.api_version)
        };
        match namespace.filter(|_| self.namespaced) {
            Some(ns) => format!("{root}/namespaces/{ns}/{}", self.plural),
            None => format!("{root}/{}", self.plural),
        }
    }
}

fn list_url(base: &Url, path: &str, continue_token: Option<&str>) -> Url {
    let mut url = base.clone();
    let joined = format!("{}/{path}", base.path().trim_end_matches('/'));
    url.set_path(&joined);
    url.set_query(None);
    {
        let mut q = url.query_pairs_mut();
        q.append_pair("limit", &PAGE_SIZE.to_string());
        if let Some(token) = continue_token {
            q.append_pair("continue", token);
        }
    }
    url
}

fn list_kind(
    client: &Client,
    endpoint: &ClusterEndpoint,
    resource: &ApiResource,
    namespace: Option<&str>,
) -> Result<Vec<ResourceDocument>, ClusterError> {
    let kind = resource.kind.to_string();
    let scope = match namespace.filter(|_| resource.namespaced) {
        Some(ns) => ns.to_string(),
        None => "all namespaces".to_string(),
    };
    let path = resource.list_path(namespace);
    let mut docs = Vec::new();
    let mut continue_token: Option<String> = None;
    loop {
        let url = list_url(&endpoint.base_url, &path, continue_token.as_deref());
        let mut request = client.get(url.clone()).header("Accept", "application/json");
        if let Some(token) = &endpoint.bearer_token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| ClusterError::Unreachable {
            kind: kind.clone(),
            scope: scope.clone(),
            message: e.to_string(),
        })?;
        let status = response.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(ClusterError::Unauthorized {
                kind,
                scope,
                status: status.as_u16(),
            });
        }
        if !status.is_success() {
            return Err(ClusterError::UnexpectedStatus {
                kind,
                scope,
                status: status.as_u16(),
            });
        }
        let decode = |message: String| ClusterError::DecodeError {
            kind: kind.clone(),
            scope: scope.clone(),
            message,
        };
        let text = response.text().map_err(|e| decode(e.to_string()))?;
        let body: Value = serde_json::from_str(&text).map_err(|e| decode(e.to_string()))?;
        let items = match body.get("items") {
            Some(Value::Array(items)) => items.clone(),
            Some(Value::Null) => Vec::new(),
            _ => return Err(decode("missing `items` list".into())),
        };
        for mut item in items {
            let Some(obj) = item.as_object_mut() else {
                return Err(decode("list item is not an object".into()));
            };
            // list responses omit kind and apiVersion on items
            obj.entry("kind").or_insert_with(|| Value::String(resource.kind.to_string()));
            obj.entry("apiVersion")
                .or_insert_with(|| Value::String(resource.api_version.to_string()));
            let source = SourceLocation {
                file_path: url.to_string(),
                document_index: docs.len(),
            };
            let doc = ResourceDocument::from_value(item, source).map_err(|e| decode(e.to_string()))?;
            docs.push(doc);
        }
        continue_token = body
            .pointer("/metadata/continue")
            .and_then(Value::as_str)
            .filter(|t| !t.is_empty())
            .map(str::to_string);
        if continue_token.is_none() {
            break;
        }
    }
    Ok(docs)
}

/// List every kind in `kinds` (optionally within one namespace).
///
/// Cluster-scoped kinds are skipped when a namespace is given. Results are
/// ordered by kind, namespace, then name. An empty kind set makes no request.
pub fn fetch_resources(
    endpoint: &ClusterEndpoint,
    kinds: &BTreeSet<String>,
    namespace: Option<&str>,
) -> Result<Vec<ResourceDocument>, ClusterError> {
    let resources = kinds
        .iter()
        .map(|k| api_resource(k).ok_or_else(|| ClusterError::UnsupportedKind(k.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let resources: Vec<&ApiResource> = resources
        .into_iter()
        .filter(|r| r.namespaced || namespace.is_none())
        .collect();
    if resources.is_empty() {
        return Ok(Vec::new());
    }
    let client = endpoint.client()?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<ResourceDocument>, ClusterError>>>> =
        Mutex::new((0..resources.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..MAX_IN_FLIGHT.min(resources.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(resource) = resources.get(i) else { break };
                let outcome = list_kind(&client, endpoint, resource, namespace);
                results.lock().expect("result slots")[i] = Some(outcome);
            });
        }
    });

    let mut docs = Vec::new();
    // first error in kind order wins, independent of scheduling
    for slot in results.into_inner().expect("result slots") {
        docs.extend(slot.expect("every kind was fetched")?);
    }
    docs.sort_by(|a, b| {
        (a.kind.as_str(), a.namespace.as_deref(), a.name.as_str()).cmp(&(b.kind.as_str(), b.namespace.as_deref(), b.name.as_str()))
    });
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_validation() {
        assert!(ClusterEndpoint::new("https://10.0.0.1:6443").is_ok());
        assert!(ClusterEndpoint::new("10.0.0.1:6443").is_err());
        assert!(ClusterEndpoint::new("/api").is_err());
        assert!(ClusterEndpoint::new("ftp://host").is_err());
    }

    #[test]
    fn plaintext_needs_insecure() {
        let ep = ClusterEndpoint::new("http://127.0.0.1:1").unwrap();
        let kinds = BTreeSet::from(["Pod".to_string()]);
        assert!(matches!(fetch_resources(&ep, &kinds, None), Err(ClusterError::PlaintextRefused(_))));
    }

    #[test]
    fn empty_kind_set_makes_no_request() {
        // port 1 on localhost refuses connections; no request must be attempted
        let ep = ClusterEndpoint::new("https://127.0.0.1:1").unwrap();
        assert!(fetch_resources(&ep, &BTreeSet::new(), Some("ricplt")).unwrap().is_empty());
    }

    #[test]
    fn unknown_kind_is_rejected_before_any_request() {
        let ep = ClusterEndpoint::new("https://127.0.0.1:1").unwrap();
        let kinds = BTreeSet::from(["KubeletConfiguration".to_string()]);
        assert!(matches!(fetch_resources(&ep, &kinds, None), Err(ClusterError::UnsupportedKind(_))));
    }

    #[test]
    fn list_paths() {
        let pods = api_resource("Pod").unwrap();
        assert_eq!(pods.list_path(Some("ricplt")), "api/v1/namespaces/ricplt/pods");
        assert_eq!(pods.list_path(None), "api/v1/pods");
        let deploy = api_resource("Deployment").unwrap();
        assert_eq!(deploy.list_path(Some("ricplt")), "apis/apps/v1/namespaces/ricplt/deployments");
        let crb = api_resource("ClusterRoleBinding").unwrap();
        assert_eq!(crb.list_path(Some("ricplt")), "apis/rbac.authorization.k8s.io/v1/clusterrolebindings");
        let base = Url::parse("https://h:6443/prefix/").unwrap();
        assert_eq!(
            list_url(&base, "api/v1/pods", Some("abc")).as_str(),
            "https://h:6443/prefix/api/v1/pods?limit=500&continue=abc"
        );
    }
}
