//! Static security auditing for Kubernetes-based O-Cloud and Near-RT RIC
//! deployments: manifest misconfiguration scanning, per-container CVE
//! aggregation, framework compliance scoring and outdated-component checks.

pub mod catalog;
pub mod compliance;
pub mod manifest;
pub mod rules;
pub mod severity;
pub mod versions;
pub mod vulns;
pub mod report;
pub mod cluster;
pub mod pipeline;
pub mod fixtures;
pub mod cli;
