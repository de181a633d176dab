use std::io::{BufReader, BufWriter};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender};
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{write_message, ScoreRequest, ScoreResponse};
use super::{PatchRequest, PatchScorer, ScorerCapability};
use crate::error::{Error, Result};
use crate::raster::ProbMap;
use crate::scalar::Scalar;

/// Program and arguments for a scorer process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScorerCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl ScorerCommand {
    pub fn new(program: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    /// Splits on whitespace. No quoting support.
    pub fn parse(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty scorer command".into()))?;
        Ok(Self::new(program, parts))
    }
}

/// Talks PSRQ/PSRS to a child process over its stdin/stdout.
///
/// The child is started once and reused for every patch. Its stderr is
/// inherited. Any protocol violation, crash or timeout poisons the
/// instance: the child is killed and later calls fail fast.
pub struct ExternalScorer {
    child: Child,
    requests: Option<SyncSender<Vec<u8>>>,
    responses: Receiver<Result<ScoreResponse>>,
    timeout: Duration,
    patch_size: Option<usize>,
    deterministic: bool,
    poisoned: Option<String>,
}

impl ExternalScorer {
    pub fn spawn(command: &ScorerCommand, timeout: Duration) -> Result<Self> {
        let mut child = Command::new(&command.program)
            .args(&command.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::ScorerCrashed(format!("failed to launch {:?}: {e}", command.program)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");

        // Writes happen off-thread so a peer that stops reading cannot block
        // past the timeout.
        let (req_tx, req_rx) = mpsc::sync_channel::<Vec<u8>>(1);
        thread::spawn(move || {
            let mut w = BufWriter::new(stdin);
            for bytes in req_rx {
                if write_message(&mut w, &bytes).is_err() {
                    break;
                }
            }
        });

        let (resp_tx, resp_rx) = mpsc::sync_channel(1);
        thread::spawn(move || {
            let mut r = BufReader::new(stdout);
            loop {
                let msg = match ScoreResponse::read_from(&mut r) {
                    Ok(Some(resp)) => Ok(resp),
                    Ok(None) => Err(Error::ScorerCrashed("scorer closed its output stream".into())),
                    Err(e) => Err(e),
                };
                let stop = msg.is_err();
                if resp_tx.send(msg).is_err() || stop {
                    break;
                }
            }
        });

        Ok(Self {
            child,
            requests: Some(req_tx),
            responses: resp_rx,
            timeout,
            patch_size: None,
            deterministic: false,
            poisoned: None,
        })
    }

    pub fn with_patch_size(mut self, patch_size: usize) -> Self {
        self.patch_size = Some(patch_size);
        self
    }

    pub fn with_deterministic(mut self, deterministic: bool) -> Self {
        self.deterministic = deterministic;
        self
    }

    fn poison(&mut self, err: Error) -> Error {
        let mut msg = err.to_string();
        if matches!(err, Error::ScorerCrashed(_)) {
            if let Some(status) = self.exit_status(Duration::from_millis(200)) {
                msg = format!("{msg} ({status})");
            }
        }
        self.poisoned = Some(msg.clone());
        self.requests = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
        match err {
            Error::ScorerCrashed(_) => Error::ScorerCrashed(msg),
            other => other,
        }
    }

    fn exit_status(&mut self, grace: Duration) -> Option<std::process::ExitStatus> {
        let deadline = Instant::now() + grace;
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => return None,
            }
        }
    }
}

impl<T: Scalar> PatchScorer<T> for ExternalScorer {
    fn capability(&self) -> ScorerCapability {
        ScorerCapability {
            patch_size: self.patch_size,
            deterministic: self.deterministic,
        }
    }

    fn score(&mut self, request: &PatchRequest<'_>) -> Result<ProbMap<T>> {
        if let Some(msg) = &self.poisoned {
            return Err(Error::ScorerCrashed(format!("scorer unusable after earlier failure: {msg}")));
        }
        let pixels = request.pixels;
        let (height, width) = pixels.shape();
        let bytes = ScoreRequest {
            height: height as u32,
            width: width as u32,
            channels: pixels.channels() as u8,
            pixels: pixels.data().to_vec(),
        }
        .encode();

        let sent = self.requests.as_ref().map(|tx| tx.send(bytes).is_ok()).unwrap_or(false);
        if !sent {
            return Err(self.poison(Error::ScorerCrashed("scorer input stream closed".into())));
        }
        let response = match self.responses.recv_timeout(self.timeout) {
            Ok(Ok(resp)) => resp,
            Ok(Err(e)) => return Err(self.poison(e)),
            Err(RecvTimeoutError::Timeout) => return Err(self.poison(Error::Timeout(self.timeout))),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(self.poison(Error::ScorerCrashed("scorer reader stopped".into())))
            }
        };

        if (response.height as usize, response.width as usize) != (height, width) {
            return Err(self.poison(Error::ProtocolError(format!(
                "response is {}x{}, request was {height}x{width}",
                response.height, response.width
            ))));
        }
        if let Some((index, value)) = response.first_out_of_range() {
            return Err(self.poison(Error::ProbabilityOutOfRange {
                value: value as f64,
                index,
            }));
        }
        let data = response.probs.into_iter().map(|p| T::lit(p as f64)).collect();
        ProbMap::new(width, height, data)
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        // Closing stdin lets a well-behaved peer exit on its own.
        self.requests = None;
        if self.exit_status(Duration::from_millis(500)).is_none() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;

    fn sh(script: &str) -> ScorerCommand {
        ScorerCommand::new("sh", ["-c", script])
    }

    fn score(cmd: &ScorerCommand, timeout: Duration) -> Result<ProbMap<f32>> {
        let mut s = ExternalScorer::spawn(cmd, timeout)?;
        let px = Raster::filled(4, 4, [9, 9, 9]);
        s.score(&PatchRequest {
            image_id: "x",
            origin: (0, 0),
            pixels: &px,
        })
    }

    #[test]
    fn parse_command_line() {
        let c = ScorerCommand::parse("  python3  adapter.py --model m.pt ").unwrap();
        assert_eq!(c.program, "python3");
        assert_eq!(c.args, vec!["adapter.py", "--model", "m.pt"]);
        assert!(ScorerCommand::parse("   ").is_err());
    }

    #[test]
    fn launch_failure_is_crash() {
        let cmd = ScorerCommand::new("/definitely/not/a/binary", Vec::<String>::new());
        assert!(matches!(
            ExternalScorer::spawn(&cmd, Duration::from_secs(1)),
            Err(Error::ScorerCrashed(_))
        ));
    }

    #[test]
    fn peer_exiting_early_is_crash() {
        let err = score(&sh("exit 0"), Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, Error::ScorerCrashed(_)), "{err}");
    }

    #[test]
    fn silent_peer_times_out() {
        let start = Instant::now();
        let err = score(&sh("exec sleep 30"), Duration::from_millis(300)).unwrap_err();
        assert!(matches!(err, Error::Timeout(_)), "{err}");
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn garbage_reply_is_protocol_error() {
        let err = score(&sh("printf 'HELLO-THIS-IS-NOT-PSRS'; exec sleep 30"), Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, Error::ProtocolError(_)), "{err}");
    }
}
