//! Command-line front end.
//!
//! Exit codes: 0 clean at the threshold, 1 findings at or above it, 2 tool
//! error. Diagnostics go to the error stream and the report to the output
//! stream (or `--output`).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::cluster::ClusterEndpoint;
use crate::fixtures::{verify_fixtures, FixtureError};
use crate::report::{exit_code, render_json, render_text, AuditResult, EXIT_CLEAN, EXIT_FINDINGS, EXIT_TOOL_ERROR};
use crate::severity::SeverityClass;

pub use crate::pipeline::{
    cmd_report, cmd_scan, cmd_score, cmd_versions, cmd_vulns, OutputFormat, RunConfig, ToolError,
};

#[derive(Debug, Parser)]
#[command(name = "ocloud-audit", version, about = "Static security audit of O-Cloud / Near-RT RIC deployments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the rule catalog against manifests or a live cluster.
    Scan(CommonArgs),
    /// Aggregate container scan reports into per-container counts.
    Vulns(CommonArgs),
    /// Score compliance frameworks.
    Score(CommonArgs),
    /// Check a component inventory against the advisory database.
    Versions(CommonArgs),
    /// Run every workflow whose inputs are given and emit one report.
    Report(CommonArgs),
    /// Recompute the bundled fixture expectations.
    #[command(hide = true)]
    VerifyFixtures {
        #[arg(long)]
        root: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Manifest files or directories.
    pub paths: Vec<PathBuf>,
    #[arg(long)]
    pub namespace: Option<String>,
    /// Extra rule/framework/advisory catalog (repeatable).
    #[arg(long = "catalog")]
    pub catalogs: Vec<PathBuf>,
    /// Framework id to score (repeatable; default all).
    #[arg(long = "framework")]
    pub frameworks: Vec<String>,
    /// Container scan report (repeatable).
    #[arg(long = "scan-report")]
    pub scan_reports: Vec<PathBuf>,
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    /// Base URL of a Kubernetes API server.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    pub token_env: Option<String>,
    #[arg(long)]
    pub ca_bundle: Option<PathBuf>,
    /// Allow a plain http:// endpoint.
    #[arg(long)]
    pub insecure: bool,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Lowest severity that makes the exit code 1 [default: critical].
    #[arg(long, value_parser = parse_severity)]
    pub fail_on: Option<SeverityClass>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Stamp the report with `generated_at` (honours SOURCE_DATE_EPOCH).
    #[arg(long)]
    pub timestamp: bool,
    /// Configuration file supplying defaults for the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_severity(s: &str) -> Result<SeverityClass, String> {
    s.parse().map_err(|e: crate::severity::UnknownSeverity| e.to_string())
}

/// Optional configuration file. Relative paths resolve against the file's
/// directory; command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    #[serde(default)]
    pub paths: Vec<PathBuf>,
    pub namespace: Option<String>,
    #[serde(default)]
    pub catalogs: Vec<PathBuf>,
    #[serde(default)]
    pub frameworks: Vec<String>,
    #[serde(default)]
    pub scan_reports: Vec<PathBuf>,
    pub inventory: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub token_env: Option<String>,
    pub ca_bundle: Option<PathBuf>,
    #[serde(default)]
    pub insecure: bool,
    pub format: Option<OutputFormat>,
    #[serde(default, deserialize_with = "severity_opt")]
    pub fail_on: Option<SeverityClass>,
    pub output: Option<PathBuf>,
}

fn severity_opt<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<SeverityClass>, D::Error> {
    Option::<String>::deserialize(d)?
        .map(|s| s.parse().map_err(serde::de::Error::custom))
        .transpose()
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile, ToolError> {
    let text = std::fs::read_to_string(path).map_err(|source| ToolError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cfg: ConfigFile = serde_yaml::from_str(&text)
        .map_err(|e| ToolError::Usage(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rebase = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    cfg.paths.iter_mut().for_each(rebase);
    cfg.catalogs.iter_mut().for_each(rebase);
    cfg.scan_reports.iter_mut().for_each(rebase);
    cfg.inventory.iter_mut().for_each(rebase);
    cfg.ca_bundle.iter_mut().for_each(rebase);
    cfg.output.iter_mut().for_each(rebase);
    Ok(cfg)
}

fn or_config<T>(flag: Vec<T>, file: Vec<T>) -> Vec<T> {
    if flag.is_empty() {
        file
    } else {
        flag
    }
}

/// Merge flags over the optional config file and build the endpoint.
pub fn resolve(args: CommonArgs) -> Result<RunConfig, ToolError> {
    let file = match &args.config {
        Some(path) => load_config_file(path)?,
        None => ConfigFile::default(),
    };
    let endpoint = match args.endpoint.or(file.endpoint) {
        Some(url) => {
            let mut ep = ClusterEndpoint::new(&url)?.insecure(args.insecure || file.insecure);
            if let Some(var) = args.token_env.or(file.token_env) {
                ep = ep.with_token_from_env(&var);
            }
            if let Some(ca) = args.ca_bundle.or(file.ca_bundle) {
                ep = ep.with_ca_bundle(ca);
            }
            Some(ep)
        }
        None => None,
    };
    Ok(RunConfig {
        input_paths: or_config(args.paths, file.paths),
        namespace_filter: args.namespace.or(file.namespace),
        catalogs: or_config(args.catalogs, file.catalogs),
        frameworks: or_config(args.frameworks, file.frameworks),
        scan_reports: or_config(args.scan_reports, file.scan_reports),
        inventory_path: args.inventory.or(file.inventory),
        endpoint,
        format: args.format.or(file.format).unwrap_or_default(),
        fail_on: args.fail_on.or(file.fail_on).unwrap_or(SeverityClass::Critical),
        output_path: args.output.or(file.output),
    })
}

fn generated_at() -> String {
    use chrono::{DateTime, SecondsFormat, Utc};
    let stamp = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    stamp.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// The report payload in the configured format.
pub fn render(result: &AuditResult, format: OutputFormat) -> String {
    match format {
        OutputFormat::Table => render_text(result),
        OutputFormat::Json => render_json(result) + "\n",
        OutputFormat::Both => format!("{}\n{}\n", render_text(result), render_json(result)),
    }
}

fn emit(payload: &str, output: Option<&Path>, stdout: &mut dyn Write) -> Result<(), ToolError> {
    let io = |path: String| move |source| ToolError::Io { path, source };
    match output {
        Some(path) => std::fs::write(path, payload).map_err(io(path.display().to_string())),
        None => stdout.write_all(payload.as_bytes()).map_err(io("<stdout>".into())),
    }
}

fn run_workflow(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, ToolError> {
    let (args, workflow): (CommonArgs, fn(&RunConfig, &mut dyn Write) -> Result<AuditResult, ToolError>) =
        match command {
            Command::Scan(a) => (a, cmd_scan),
            Command::Vulns(a) => (a, cmd_vulns),
            Command::Score(a) => (a, cmd_score),
            Command::Versions(a) => (a, cmd_versions),
            Command::Report(a) => (a, cmd_report),
            Command::VerifyFixtures { root } => return Ok(run_verify(root, stdout, stderr)),
        };
    let stamp = args.timestamp;
    let config = resolve(args)?;
    let mut result = workflow(&config, stderr)?;
    if stamp {
        result.generated_at = Some(generated_at());
    }
    if let Err(e) = result.validate() {
        return Err(ToolError::Usage(format!("internal inconsistency: {e}")));
    }
    emit(&render(&result, config.format), config.output_path.as_deref(), stdout)?;
    Ok(exit_code(&result, config.fail_on))
}

fn run_verify(root: Option<PathBuf>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let root = root.unwrap_or_else(crate::fixtures::default_root);
    match verify_fixtures(&root) {
        Ok(report) => {
            let _ = write!(stdout, "{report}");
            EXIT_CLEAN
        }
        Err(e @ FixtureError::Drift(_)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_FINDINGS
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_TOOL_ERROR
        }
    }
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    EXIT_CLEAN
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    EXIT_TOOL_ERROR
                }
            };
        }
    };
    match run_workflow(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_TOOL_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(rel: &str) -> String {
        format!("{}/fixtures/{rel}", env!("CARGO_MANIFEST_DIR"))
    }

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("ocloud-audit").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("audit.yaml");
        std::fs::write(&cfg, "paths: [manifests]\nnamespace: ricplt\nfail-on: low\nformat: json\n").unwrap();
        let args = CommonArgs {
            config: Some(cfg),
            fail_on: Some(SeverityClass::High),
            ..CommonArgs::default()
        };
        let rc = resolve(args).unwrap();
        assert_eq!(rc.input_paths, vec![dir.path().join("manifests")]);
        assert_eq!(rc.namespace_filter.as_deref(), Some("ricplt"));
        assert_eq!(rc.fail_on, SeverityClass::High);
        assert_eq!(rc.format, OutputFormat::Json);
    }

    #[test]
    fn unknown_config_key_is_a_tool_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("audit.yaml");
        std::fs::write(&cfg, "severity: high\n").unwrap();
        let (code, out, err) = run_capture(&["scan", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, 2);
        assert!(out.is_empty());
        assert!(err.contains("severity"), "{err}");
    }

    #[test]
    fn fail_on_defaults_to_critical() {
        let rc = resolve(CommonArgs::default()).unwrap();
        assert_eq!(rc.fail_on, SeverityClass::Critical);
        assert_eq!(rc.format, OutputFormat::Table);
    }

    #[test]
    fn help_and_bad_flags() {
        assert_eq!(run_capture(&["--help"]).0, 0);
        assert_eq!(run_capture(&["--version"]).0, 0);
        assert_eq!(run_capture(&["scan", "--fail-on", "severe"]).0, 2);
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
    }

    #[test]
    fn versions_on_patched_inventory_is_clean() {
        let (code, out, _) = run_capture(&["versions", "--inventory", &fixture("inventory/patched.yaml"), "--fail-on", "negligible"]);
        assert_eq!(code, 0);
        assert!(out.contains("no findings"), "{out}");
    }

    #[test]
    fn timestamp_honours_source_date_epoch() {
        std::env::set_var("SOURCE_DATE_EPOCH", "1700000000");
        assert_eq!(generated_at(), "2023-11-14T22:13:20Z");
        std::env::remove_var("SOURCE_DATE_EPOCH");
    }
}
