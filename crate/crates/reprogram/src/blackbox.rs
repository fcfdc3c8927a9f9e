//! Black-box model endpoint: a child process reachable only through forward
//! queries over its standard streams.
//!
//! Wire format, one request per batch:
//!
//! ```text
//! client -> server:  "Q <n> <d>\n" followed by n lines of d space-separated
//!                    decimal values
//! server -> client:  n lines of k space-separated probabilities
//! ```
//!
//! Values are printed with Rust's shortest-round-trip formatting, so a f64
//! survives the text crossing bit-exactly. On end of input the server exits
//! after writing `served <rows>` to stderr, which is how tests audit that
//! client-side query accounting matches the rows the server actually saw.

use crate::error::{Error, Result};
use crate::model::FrozenModel;
use crate::tensor::Tensor;
use crate::train::ProbOracle;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

const SUM_TOLERANCE: f64 = 1e-6;

/// What the endpoint reported when it went away.
#[derive(Debug)]
pub struct ServeExit {
    pub code: i32,
    /// Captured stderr (empty when spawned with inherited stderr). The
    /// serving side prints `served <rows>` here on exit.
    pub stderr: String,
}

impl ServeExit {
    /// The row count the server itself reported.
    pub fn served_rows(&self) -> Option<u64> {
        self.stderr
            .lines()
            .rev()
            .find_map(|l| l.trim().strip_prefix("served ").and_then(|v| v.parse().ok()))
    }
}

/// A spawned endpoint process plus the declared dimensions of the model it
/// serves.
pub struct BlackboxEndpoint {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
    input_dim: usize,
    num_classes: usize,
    queries: u64,
    calls: u64,
}

impl BlackboxEndpoint {
    /// Spawn `cmd` (program plus arguments) and speak the query protocol on
    /// its stdio. The declared dimensions come from the caller's run config;
    /// responses are validated against them. The child's stderr passes
    /// through to ours.
    pub fn spawn(cmd: &[String], input_dim: usize, num_classes: usize) -> Result<Self> {
        Self::spawn_with_stderr(cmd, input_dim, num_classes, Stdio::inherit())
    }

    /// As [`BlackboxEndpoint::spawn`] but capturing the child's stderr so
    /// [`BlackboxEndpoint::shutdown`] can hand back its served-row report.
    pub fn spawn_captured(cmd: &[String], input_dim: usize, num_classes: usize) -> Result<Self> {
        Self::spawn_with_stderr(cmd, input_dim, num_classes, Stdio::piped())
    }

    fn spawn_with_stderr(
        cmd: &[String],
        input_dim: usize,
        num_classes: usize,
        stderr: Stdio,
    ) -> Result<Self> {
        if cmd.is_empty() {
            return Err(Error::InvalidConfig("blackbox command is empty".into()));
        }
        let mut child = Command::new(&cmd[0])
            .args(&cmd[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(stderr)
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(BlackboxEndpoint {
            child,
            stdin: Some(BufWriter::new(stdin)),
            stdout: BufReader::new(stdout),
            input_dim,
            num_classes,
            queries: 0,
            calls: 0,
        })
    }

    /// Send one batch and read the probability rows back.
    pub fn query(&mut self, batch: &Tensor) -> Result<Tensor> {
        if batch.cols() != self.input_dim {
            return Err(Error::shape("blackbox_query", self.input_dim, batch.cols()));
        }
        let n = batch.rows();
        let writer = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Protocol("endpoint already shut down".into()))?;
        write_request(writer, batch).map_err(|e| Error::Transport {
            served: 0,
            message: format!("endpoint went away while sending the batch: {e}"),
        })?;

        let mut data = Vec::with_capacity(n * self.num_classes);
        let mut line = String::new();
        for row in 0..n {
            line.clear();
            let read = self.stdout.read_line(&mut line).map_err(|e| Error::Transport {
                served: row,
                message: format!("read failed on response row {row}: {e}"),
            })?;
            if read == 0 {
                return Err(Error::Transport {
                    served: row,
                    message: format!("endpoint closed its stream after {row} of {n} rows"),
                });
            }
            let values = parse_row(&line, self.num_classes, row)?;
            let sum: f64 = values.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::Protocol(format!(
                    "response row {row} sums to {sum}, expected 1 within {SUM_TOLERANCE}"
                )));
            }
            if values.iter().any(|v| *v < -1e-9 || *v > 1.0 + 1e-9) {
                return Err(Error::Protocol(format!(
                    "response row {row} has entries outside [0, 1]"
                )));
            }
            data.extend(values);
        }
        self.queries += n as u64;
        self.calls += 1;
        Tensor::matrix(n, self.num_classes, data)
    }

    /// Per-sample rows sent so far.
    pub fn queries_sent(&self) -> u64 {
        self.queries
    }

    /// Close the stream and collect the endpoint's exit report.
    pub fn shutdown(mut self) -> Result<ServeExit> {
        drop(self.stdin.take());
        let mut stderr = String::new();
        if let Some(mut pipe) = self.child.stderr.take() {
            use std::io::Read;
            pipe.read_to_string(&mut stderr)?;
        }
        let status = self.child.wait()?;
        Ok(ServeExit { code: status.code().unwrap_or(-1), stderr })
    }
}

impl Drop for BlackboxEndpoint {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.wait();
    }
}

impl ProbOracle for BlackboxEndpoint {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn probs(&mut self, batch: &Tensor) -> Result<Tensor> {
        self.query(batch)
    }

    fn queries(&self) -> u64 {
        self.queries
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

fn write_request(w: &mut impl Write, batch: &Tensor) -> std::io::Result<()> {
    writeln!(w, "Q {} {}", batch.rows(), batch.cols())?;
    for r in 0..batch.rows() {
        let mut first = true;
        for v in batch.row(r) {
            if !first {
                w.write_all(b" ")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn parse_row(line: &str, expected: usize, row: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(expected);
    for tok in line.split_whitespace() {
        let v: f64 = tok.parse().map_err(|_| {
            Error::Protocol(format!("response row {row}: non-numeric token {tok:?}"))
        })?;
        if !v.is_finite() {
            return Err(Error::Protocol(format!("response row {row}: non-finite value {v}")));
        }
        values.push(v);
    }
    if values.len() != expected {
        return Err(Error::Protocol(format!(
            "response row {row}: expected {expected} values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

/// Serve a frozen model over the query protocol until the input ends.
/// Returns the number of sample rows served.
pub fn serve_model(
    model: &FrozenModel,
    input: &mut impl BufRead,
    output: &mut impl Write,
) -> Result<u64> {
    let mut served = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Ok(served);
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap_or("");
        if tag != "Q" {
            return Err(Error::Protocol(format!("expected a Q frame, got {:?}", line.trim())));
        }
        let n: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Protocol("Q frame missing row count".into()))?;
        let d: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Protocol("Q frame missing dimension".into()))?;
        if d != model.input_dim() {
            return Err(Error::shape("serve_model request", model.input_dim(), d));
        }

        let mut data = Vec::with_capacity(n * d);
        for row in 0..n {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Err(Error::Protocol(format!(
                    "input ended after {row} of {n} sample rows"
                )));
            }
            data.extend(parse_row(&line, d, row)?);
        }
        if n > 0 {
            let probs = model.forward(&Tensor::matrix(n, d, data)?)?;
            for r in 0..n {
                let mut first = true;
                for v in probs.row(r) {
                    if !first {
                        output.write_all(b" ")?;
                    }
                    write!(output, "{v}")?;
                    first = false;
                }
                output.write_all(b"\n")?;
            }
        }
        output.flush()?;
        served += n as u64;
    }
}
