//! Subprocess cost sources speaking newline-delimited JSON over stdio.
//!
//! ```text
//! -> {"op":"hello","version":1}
//! <- {"ok":true,"version":1}
//! -> {"op":"evaluate","workload":{...},"config":[{"table":"t","columns":["a"]}]}
//! <- {"total_cost":1.0,"per_query":[{"id":"q0","cost":1.0}],"storage_units":0.0}
//! ```
//!
//! Every response is validated against the [`CostReport`] invariants before
//! it is returned. Calls are serialized per subprocess.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CostReport, CostSource, IndexConfiguration};
use crate::candidates::IndexDef;
use crate::error::{Error, Result};
use crate::workload::Workload;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Hello { version: u32 },
    Evaluate { workload: Workload, config: Vec<IndexDef> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloResponse {
    pub ok: bool,
    pub version: u32,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

pub struct ExternalCostSource {
    channel: Mutex<Channel>,
    timeout: Duration,
    command: String,
}

impl std::fmt::Debug for ExternalCostSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalCostSource")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .finish()
    }
}

/// Spawns `command_line` (program followed by whitespace-separated
/// arguments) with the default per-call timeout.
pub fn spawn_external_source(command_line: &str) -> Result<ExternalCostSource> {
    let mut parts = command_line.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| Error::Spawn("empty command".into()))?;
    let args: Vec<&str> = parts.collect();
    ExternalCostSource::spawn(program, &args, DEFAULT_TIMEOUT)
}

impl ExternalCostSource {
    pub fn spawn(program: &str, args: &[&str], timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Spawn(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let source = ExternalCostSource {
            channel: Mutex::new(Channel {
                child,
                stdin,
                lines: rx,
            }),
            timeout,
            command: std::iter::once(program)
                .chain(args.iter().copied())
                .collect::<Vec<_>>()
                .join(" "),
        };
        let reply = source.round_trip(&Request::Hello {
            version: PROTOCOL_VERSION,
        })?;
        let hello: HelloResponse = serde_json::from_str(&reply)
            .map_err(|e| Error::Protocol(format!("bad handshake `{reply}`: {e}")))?;
        if !hello.ok || hello.version != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!(
                "handshake rejected: ok={} version={}",
                hello.ok, hello.version
            )));
        }
        Ok(source)
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn round_trip(&self, request: &Request) -> Result<String> {
        let mut ch = self
            .channel
            .lock()
            .map_err(|_| Error::Protocol("channel poisoned by an earlier failure".into()))?;
        let mut frame = serde_json::to_string(request).expect("request serializes");
        frame.push('\n');
        ch.stdin
            .write_all(frame.as_bytes())
            .and_then(|_| ch.stdin.flush())
            .map_err(|e| Error::Protocol(format!("write failed: {e}")))?;
        match ch.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::Protocol(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Protocol("cost source closed its output".into()))
            }
        }
    }
}

impl CostSource for ExternalCostSource {
    fn evaluate(&self, workload: &Workload, config: &IndexConfiguration) -> Result<CostReport> {
        let reply = self.round_trip(&Request::Evaluate {
            workload: workload.clone(),
            config: config.indexes().cloned().collect(),
        })?;
        let report: CostReport = serde_json::from_str(&reply)
            .map_err(|e| Error::Protocol(format!("malformed frame `{reply}`: {e}")))?;
        report.validate(workload)?;
        Ok(report)
    }
}

impl Drop for ExternalCostSource {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

/// Runs the server side of the protocol over `input`/`output`, answering
/// with `source`. Returns when `input` is exhausted.
///
/// Frames that fail to parse are answered with `{"error": ...}`, which a
/// client treats as a protocol violation.
pub fn serve<R: BufRead, W: Write>(
    source: &dyn CostSource,
    schema: &crate::schema::SchemaStats,
    input: R,
    mut output: W,
) -> Result<()> {
    let io_err = |e| Error::io("<stdio>", e);
    for line in input.lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Hello { version }) => serde_json::to_string(&HelloResponse {
                ok: version == PROTOCOL_VERSION,
                version: PROTOCOL_VERSION,
            })
            .expect("serializes"),
            Ok(Request::Evaluate { workload, config }) => {
                match IndexConfiguration::from_schema(config, schema)
                    .and_then(|cfg| source.evaluate(&workload, &cfg))
                {
                    Ok(report) => serde_json::to_string(&report).expect("serializes"),
                    Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
                }
            }
            Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
        };
        writeln!(output, "{reply}").map_err(io_err)?;
        output.flush().map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::AnalyticCostSource;
    use crate::schema::{generate_schema, SchemaProfile};
    use crate::workload::generate_workload;

    fn sh(script: &str) -> Result<ExternalCostSource> {
        ExternalCostSource::spawn("sh", &["-c", script], Duration::from_secs(5))
    }

    const HELLO: &str = r#"read l; echo '{"ok":true,"version":1}';"#;

    fn one_query_workload() -> Workload {
        let schema = generate_schema(SchemaProfile::Tiny, 7);
        let mut w = generate_workload(&schema, 1, 1, 1).unwrap();
        w.queries[0].frequency = 2.0;
        w
    }

    #[test]
    fn echo_server_costs_are_returned_verbatim() {
        let w = one_query_workload();
        let script = format!(
            r#"{HELLO} while read l; do echo '{{"total_cost":7.0,"per_query":[{{"id":"q0","cost":3.5}}],"storage_units":0.25}}'; done"#
        );
        let src = sh(&script).unwrap();
        let r = src.evaluate(&w, &IndexConfiguration::empty()).unwrap();
        assert_eq!(r.total_cost, 7.0);
        assert_eq!(r.per_query[0].cost, 3.5);
        assert_eq!(r.storage_units, 0.25);
        // a second call reuses the same process
        assert_eq!(src.evaluate(&w, &IndexConfiguration::empty()).unwrap(), r);
    }

    #[test]
    fn malformed_frame_is_a_protocol_violation() {
        let w = one_query_workload();
        let src = sh(&format!("{HELLO} read l; echo 'not json'; sleep 5")).unwrap();
        let err = src.evaluate(&w, &IndexConfiguration::empty()).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }

    #[test]
    fn inconsistent_total_is_an_invariant_violation() {
        let w = one_query_workload();
        let script = format!(
            r#"{HELLO} read l; echo '{{"total_cost":1.0,"per_query":[{{"id":"q0","cost":3.5}}],"storage_units":0.0}}'; sleep 5"#
        );
        let err = sh(&script).unwrap().evaluate(&w, &IndexConfiguration::empty()).unwrap_err();
        assert!(matches!(err, Error::Invariant { .. }), "{err}");
    }

    #[test]
    fn bad_handshake_and_spawn_failures() {
        let err = sh(r#"read l; echo '{"ok":false,"version":1}'"#).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
        let err = ExternalCostSource::spawn("/nonexistent/cost-server", &[], DEFAULT_TIMEOUT).unwrap_err();
        assert!(matches!(err, Error::Spawn(_)), "{err}");
        let err = sh("exit 0").unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }

    #[test]
    fn silent_server_times_out() {
        let err = ExternalCostSource::spawn("sh", &["-c", "sleep 5"], Duration::from_millis(200))
            .unwrap_err();
        assert!(matches!(err, Error::Timeout(_)), "{err}");
    }

    #[test]
    fn in_process_server_matches_analytic_model() {
        let schema = generate_schema(SchemaProfile::Tiny, 3);
        let w = generate_workload(&schema, 2, 4, 9).unwrap();
        let src = AnalyticCostSource::new(schema.clone());
        let pool = crate::candidates::enumerate_candidates(&schema, &w, 2);
        let cfg = IndexConfiguration::from_schema(pool.candidates().iter().take(2).cloned(), &schema)
            .unwrap();
        let input = [
            serde_json::to_string(&Request::Hello { version: 1 }).unwrap(),
            serde_json::to_string(&Request::Evaluate {
                workload: w.clone(),
                config: cfg.indexes().cloned().collect(),
            })
            .unwrap(),
            "garbage".to_string(),
        ]
        .join("\n");
        let mut out = Vec::new();
        serve(&src, &schema, input.as_bytes(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], r#"{"ok":true,"version":1}"#);
        let report: CostReport = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(report, src.evaluate(&w, &cfg).unwrap());
        assert!(lines[2].contains("error"));
    }
}
