//! Line-delimited JSON protocol for driving environments in another process.
//!
//! Every message is one JSON object on one line with a `kind` field. The
//! client opens with `hello` (version 1) and the server answers `spec`; then
//! `reset` → `obs` and `step` → `result` in lock-step, each reply echoing the
//! request's `seq`. `close` ends the session; `error` reports a recoverable
//! problem with the last request.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::envs::{Cause, EnvSpec, Environment, RewardComponents, StepInfo, StepResult};
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_PORT: u16 = 7878;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WireMessage {
    Hello {
        version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Spec {
        obs_dim: usize,
        act_dim: usize,
        max_steps: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Reset {
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Obs {
        obs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        info: Option<StepInfo>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Step {
        action: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Result {
        obs: Vec<f64>,
        reward_raw: f64,
        #[serde(default)]
        components: RewardComponents,
        done: bool,
        cause: Cause,
        #[serde(default)]
        info: StepInfo,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Close {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Error {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
}

impl WireMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "hello",
            WireMessage::Spec { .. } => "spec",
            WireMessage::Reset { .. } => "reset",
            WireMessage::Obs { .. } => "obs",
            WireMessage::Step { .. } => "step",
            WireMessage::Result { .. } => "result",
            WireMessage::Close { .. } => "close",
            WireMessage::Error { .. } => "error",
        }
    }

    pub fn seq(&self) -> Option<u64> {
        match self {
            WireMessage::Hello { seq, .. }
            | WireMessage::Spec { seq, .. }
            | WireMessage::Reset { seq, .. }
            | WireMessage::Obs { seq, .. }
            | WireMessage::Step { seq, .. }
            | WireMessage::Result { seq, .. }
            | WireMessage::Close { seq }
            | WireMessage::Error { seq, .. } => *seq,
        }
    }

    pub fn from_step(r: &StepResult, seq: Option<u64>) -> Self {
        WireMessage::Result {
            obs: r.obs.clone(),
            reward_raw: r.reward_raw,
            components: r.components,
            done: r.done,
            cause: r.cause,
            info: r.info,
            seq,
        }
    }

    fn check_finite(&self) -> Result<()> {
        let bad = |name: &str| Err(Error::Protocol(format!("non-finite value in field {name:?}")));
        let all = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let info_ok = |i: &StepInfo| {
            i.stuck_reward.is_finite() && i.bomb_center.map_or(true, |(x, y)| x.is_finite() && y.is_finite())
        };
        match self {
            WireMessage::Obs { obs, info, .. } => {
                if !all(obs) {
                    return bad("obs");
                }
                if info.as_ref().is_some_and(|i| !info_ok(i)) {
                    return bad("info");
                }
            }
            WireMessage::Step { action, .. } if !all(action) => return bad("action"),
            WireMessage::Result {
                obs,
                reward_raw,
                components,
                info,
                ..
            } => {
                if !all(obs) {
                    return bad("obs");
                }
                if !reward_raw.is_finite() {
                    return bad("reward_raw");
                }
                if !all(&components.values()) {
                    return bad("components");
                }
                if !info_ok(info) {
                    return bad("info");
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// One line of JSON without the trailing newline.
pub fn encode(msg: &WireMessage) -> Result<String> {
    msg.check_finite()?;
    serde_json::to_string(msg).map_err(|e| Error::Protocol(format!("encode {}: {e}", msg.kind())))
}

pub fn decode(line: &str) -> Result<WireMessage> {
    let msg: WireMessage = serde_json::from_str(line.trim_end_matches(['\r', '\n']))
        .map_err(|e| Error::Protocol(format!("malformed message: {e}")))?;
    Ok(msg)
}

/// Line-oriented duplex channel.
pub trait Transport {
    fn send_line(&mut self, line: &str) -> Result<()>;

    /// Next line without its terminator; `None` once the peer has closed.
    /// `timeout: None` blocks indefinitely.
    fn recv_line(&mut self, timeout: Option<Duration>) -> Result<Option<String>>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send_line(&mut self, line: &str) -> Result<()> {
        (**self).send_line(line)
    }
    fn recv_line(&mut self, timeout: Option<Duration>) -> Result<Option<String>> {
        (**self).recv_line(timeout)
    }
}

fn strip(mut s: String) -> String {
    while s.ends_with('\n') || s.ends_with('\r') {
        s.pop();
    }
    s
}

/// In-memory transport; see [`loopback_pair`].
pub struct ChannelTransport {
    tx: Sender<String>,
    rx: Receiver<String>,
}

/// Two connected in-memory endpoints.
pub fn loopback_pair() -> (ChannelTransport, ChannelTransport) {
    let (ta, ra) = mpsc::channel();
    let (tb, rb) = mpsc::channel();
    (ChannelTransport { tx: ta, rx: rb }, ChannelTransport { tx: tb, rx: ra })
}

impl Transport for ChannelTransport {
    fn send_line(&mut self, line: &str) -> Result<()> {
        self.tx
            .send(line.to_string())
            .map_err(|_| Error::Closed("loopback peer dropped".into()))
    }

    fn recv_line(&mut self, timeout: Option<Duration>) -> Result<Option<String>> {
        match timeout {
            None => Ok(self.rx.recv().ok()),
            Some(t) => match self.rx.recv_timeout(t) {
                Ok(l) => Ok(Some(l)),
                Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(format!("no reply within {t:?}"))),
                Err(RecvTimeoutError::Disconnected) => Ok(None),
            },
        }
    }
}

/// Blocking reader/writer pair, e.g. standard streams on the server side.
/// Timeouts are not supported and are ignored.
pub struct StreamTransport<R: BufRead, W: Write> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> StreamTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader, writer }
    }
}

impl<R: BufRead, W: Write> Transport for StreamTransport<R, W> {
    fn send_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.writer, "{line}")?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv_line(&mut self, _timeout: Option<Duration>) -> Result<Option<String>> {
        let mut s = String::new();
        Ok(match self.reader.read_line(&mut s)? {
            0 => None,
            _ => Some(strip(s)),
        })
    }
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    pending: String,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        Self::from_stream(TcpStream::connect(addr)?)
    }

    pub fn from_stream(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self {
            writer: stream.try_clone()?,
            reader: BufReader::new(stream),
            pending: String::new(),
        })
    }
}

impl Transport for TcpTransport {
    fn send_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.writer, "{line}")?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv_line(&mut self, timeout: Option<Duration>) -> Result<Option<String>> {
        self.reader.get_ref().set_read_timeout(timeout)?;
        // a partial line survives a timeout in `pending`
        match self.reader.read_line(&mut self.pending) {
            Ok(0) if self.pending.is_empty() => Ok(None),
            Ok(_) if self.pending.ends_with('\n') => Ok(Some(strip(std::mem::take(&mut self.pending)))),
            Ok(_) => Ok(None),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                Err(Error::Timeout(format!("no reply within {timeout:?}")))
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Talks to an environment server launched as a child process over its
/// standard streams. A reader thread feeds stdout lines through a channel so
/// that receive deadlines can be honoured.
pub struct ChildTransport {
    child: Child,
    stdin: ChildStdin,
    rx: Receiver<String>,
}

impl ChildTransport {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, rx })
    }
}

impl Transport for ChildTransport {
    fn send_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.stdin, "{line}").map_err(|e| Error::Closed(format!("child stdin: {e}")))?;
        self.stdin.flush()?;
        Ok(())
    }

    fn recv_line(&mut self, timeout: Option<Duration>) -> Result<Option<String>> {
        match timeout {
            None => Ok(self.rx.recv().ok()),
            Some(t) => match self.rx.recv_timeout(t) {
                Ok(l) => Ok(Some(l)),
                Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(format!("no reply within {t:?}"))),
                Err(RecvTimeoutError::Disconnected) => Ok(None),
            },
        }
    }
}

impl Drop for ChildTransport {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "{{\"kind\":\"close\"}}");
        let _ = self.stdin.flush();
        if self.child.try_wait().ok().flatten().is_none() {
            thread::sleep(Duration::from_millis(20));
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

fn send<T: Transport + ?Sized>(t: &mut T, msg: &WireMessage) -> Result<()> {
    t.send_line(&encode(msg)?)
}

/// Serves one session for `env` until `close` or end of stream. Malformed
/// requests and environment errors are answered with `error` messages and
/// the session continues; only transport failures end it early.
pub fn serve<E: Environment + ?Sized, T: Transport + ?Sized>(env: &mut E, transport: &mut T) -> Result<()> {
    let spec = env.spec();
    let mut greeted = false;
    while let Some(line) = transport.recv_line(None)? {
        if line.trim().is_empty() {
            continue;
        }
        let msg = match decode(&line) {
            Ok(m) => m,
            Err(e) => {
                send(
                    transport,
                    &WireMessage::Error {
                        message: e.to_string(),
                        seq: None,
                    },
                )?;
                continue;
            }
        };
        let seq = msg.seq();
        let reply = match msg {
            WireMessage::Hello { version, .. } if version == PROTOCOL_VERSION => {
                greeted = true;
                WireMessage::Spec {
                    obs_dim: spec.obs_dim,
                    act_dim: spec.act_dim,
                    max_steps: spec.max_steps,
                    name: Some(spec.name.clone()),
                    seq,
                }
            }
            WireMessage::Hello { version, .. } => WireMessage::Error {
                message: format!("unsupported protocol version {version}, expected {PROTOCOL_VERSION}"),
                seq,
            },
            WireMessage::Close { .. } => return Ok(()),
            _ if !greeted => WireMessage::Error {
                message: "hello expected first".into(),
                seq,
            },
            WireMessage::Reset { seed, .. } => match env.reset(seed) {
                Ok(obs) => WireMessage::Obs {
                    obs,
                    info: Some(env.info()),
                    seq,
                },
                Err(e) => WireMessage::Error {
                    message: e.to_string(),
                    seq,
                },
            },
            WireMessage::Step { action, .. } => match env.step(&action) {
                Ok(r) => WireMessage::from_step(&r, seq),
                Err(e) => WireMessage::Error {
                    message: e.to_string(),
                    seq,
                },
            },
            other => WireMessage::Error {
                message: format!("unexpected {} request", other.kind()),
                seq,
            },
        };
        send(transport, &reply)?;
    }
    Ok(())
}

/// Accepts connections on `listener` one at a time and serves each with a
/// fresh environment from `make_env`. Returns after `max_sessions` sessions
/// when given.
pub fn serve_tcp<F>(listener: &TcpListener, mut make_env: F, max_sessions: Option<usize>) -> Result<()>
where
    F: FnMut() -> Result<Box<dyn Environment + Send>>,
{
    let mut served = 0;
    for stream in listener.incoming() {
        let mut t = TcpTransport::from_stream(stream?)?;
        let mut env = make_env()?;
        if let Err(e) = serve(&mut env, &mut t) {
            eprintln!("session ended: {e}");
        }
        served += 1;
        if max_sessions.is_some_and(|m| served >= m) {
            break;
        }
    }
    Ok(())
}

/// Client-side adapter that makes a remote server look like a local
/// [`Environment`]. Requests carry increasing sequence numbers and each reply
/// must echo its request's number.
pub struct RemoteEnv<T: Transport> {
    transport: T,
    spec: EnvSpec,
    timeout: Duration,
    seq: u64,
    info: StepInfo,
    closed: bool,
}

impl<T: Transport> RemoteEnv<T> {
    pub fn connect(transport: T) -> Result<Self> {
        Self::connect_with_timeout(transport, DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(mut transport: T, timeout: Duration) -> Result<Self> {
        send(
            &mut transport,
            &WireMessage::Hello {
                version: PROTOCOL_VERSION,
                seq: Some(0),
            },
        )?;
        let mut env = Self {
            transport,
            spec: EnvSpec {
                name: String::new(),
                obs_dim: 0,
                act_dim: 0,
                max_steps: 0,
            },
            timeout,
            seq: 0,
            info: StepInfo::default(),
            closed: false,
        };
        match env.reply()? {
            WireMessage::Spec {
                obs_dim,
                act_dim,
                max_steps,
                name,
                ..
            } => {
                if obs_dim == 0 || act_dim == 0 || max_steps == 0 {
                    return Err(Error::Protocol("spec dimensions must be positive".into()));
                }
                env.spec = EnvSpec {
                    name: name.unwrap_or_else(|| "remote".into()),
                    obs_dim,
                    act_dim,
                    max_steps,
                };
                Ok(env)
            }
            other => Err(Error::Protocol(format!("expected spec, got {}", other.kind()))),
        }
    }

    fn reply(&mut self) -> Result<WireMessage> {
        let line = self
            .transport
            .recv_line(Some(self.timeout))?
            .ok_or_else(|| Error::Closed("server closed the connection mid-session".into()))?;
        let msg = decode(&line)?;
        if let WireMessage::Error { message, .. } = &msg {
            return Err(Error::Protocol(format!("server error: {message}")));
        }
        match msg.seq() {
            Some(s) if s == self.seq => Ok(msg),
            got => Err(Error::Protocol(format!(
                "reply sequence {got:?} does not match request {}",
                self.seq
            ))),
        }
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.spec.obs_dim {
            return Err(Error::Protocol(format!(
                "observation has {} entries, negotiated {}",
                obs.len(),
                self.spec.obs_dim
            )));
        }
        Ok(())
    }

    pub fn close(&mut self) -> Result<()> {
        if !self.closed {
            self.closed = true;
            self.seq += 1;
            send(&mut self.transport, &WireMessage::Close { seq: Some(self.seq) })?;
        }
        Ok(())
    }
}

impl<T: Transport> Drop for RemoteEnv<T> {
    fn drop(&mut self) {
        let _ = self.close();
    }
}

impl<T: Transport> Environment for RemoteEnv<T> {
    fn spec(&self) -> EnvSpec {
        self.spec.clone()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.seq += 1;
        send(&mut self.transport, &WireMessage::Reset { seed, seq: Some(self.seq) })?;
        match self.reply()? {
            WireMessage::Obs { obs, info, .. } => {
                self.check_obs(&obs)?;
                self.info = info.unwrap_or_default();
                Ok(obs)
            }
            other => Err(Error::Protocol(format!("expected obs, got {}", other.kind()))),
        }
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != self.spec.act_dim {
            return Err(Error::Shape(format!(
                "action has {} entries, negotiated {}",
                action.len(),
                self.spec.act_dim
            )));
        }
        self.seq += 1;
        send(
            &mut self.transport,
            &WireMessage::Step {
                action: action.to_vec(),
                seq: Some(self.seq),
            },
        )?;
        match self.reply()? {
            WireMessage::Result {
                obs,
                reward_raw,
                components,
                done,
                cause,
                info,
                ..
            } => {
                self.check_obs(&obs)?;
                self.info = info;
                Ok(StepResult {
                    obs,
                    reward_raw,
                    components,
                    done,
                    cause,
                    info,
                })
            }
            other => Err(Error::Protocol(format!("expected result, got {}", other.kind()))),
        }
    }

    fn info(&self) -> StepInfo {
        self.info
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{StopGo1D, StopGoConfig};

    #[test]
    fn reset_encoding() {
        let m = WireMessage::Reset { seed: 7, seq: None };
        assert_eq!(encode(&m).unwrap(), r#"{"kind":"reset","seed":7}"#);
        assert_eq!(decode(r#"{"seed":7,"kind":"reset"}"#).unwrap(), m);
        assert_eq!(decode(r#"{"kind":"close"}"#).unwrap(), WireMessage::Close { seq: None });
    }

    #[test]
    fn exact_decimal_action() {
        let m = WireMessage::Step {
            action: vec![0.5, -0.25],
            seq: Some(3),
        };
        let line = encode(&m).unwrap();
        assert!(line.contains("[0.5,-0.25]"));
        assert_eq!(decode(&line).unwrap(), m);
    }

    #[test]
    fn bad_lines_are_protocol_errors() {
        for line in [r#"{"kind":"reset","se"#, r#"{"kind":"warp"}"#, r#"{"kind":"reset"}"#, "[]"] {
            assert!(matches!(decode(line), Err(Error::Protocol(_))), "{line}");
        }
        let e = decode(r#"{"kind":"reset"}"#).unwrap_err().to_string();
        assert!(e.contains("seed"), "{e}");
        let nan = WireMessage::Step {
            action: vec![f64::NAN],
            seq: None,
        };
        assert!(matches!(encode(&nan), Err(Error::Protocol(_))));
    }

    fn spawn_server(mut t: ChannelTransport) -> thread::JoinHandle<()> {
        thread::spawn(move || {
            let mut env = StopGo1D::new(StopGoConfig::default()).unwrap();
            serve(&mut env, &mut t).unwrap();
        })
    }

    #[test]
    fn loopback_episode_matches_in_process() {
        let (client, server) = loopback_pair();
        let h = spawn_server(server);
        let mut remote = RemoteEnv::connect(client).unwrap();
        assert_eq!(remote.spec().obs_dim, 4);
        let mut local = StopGo1D::new(StopGoConfig::default()).unwrap();
        let mut obs = remote.reset(5).unwrap();
        assert_eq!(obs, local.reset(5).unwrap());
        loop {
            let a = [StopGo1D::scripted_action(&obs)];
            let r = remote.step(&a).unwrap();
            assert_eq!(r, local.step(&a).unwrap());
            obs = r.obs;
            if r.done {
                break;
            }
        }
        // server-side env errors are recoverable
        assert!(matches!(remote.step(&[0.0]), Err(Error::Protocol(_))));
        assert!(remote.reset(6).is_ok());
        drop(remote);
        h.join().unwrap();
    }

    #[test]
    fn out_of_order_reply_is_rejected() {
        let (client, mut server) = loopback_pair();
        let h = thread::spawn(move || {
            server.recv_line(None).unwrap();
            server
                .send_line(r#"{"kind":"spec","obs_dim":1,"act_dim":1,"max_steps":5,"seq":0}"#)
                .unwrap();
            server.recv_line(None).unwrap();
            server.send_line(r#"{"kind":"obs","obs":[0.0],"seq":9}"#).unwrap();
            server.recv_line(None).unwrap();
            server.send_line(r#"{"kind":"obs","obs":[0.0,1.0],"seq":2}"#).unwrap();
            server.recv_line(None).unwrap();
        });
        let mut remote = RemoteEnv::connect(client).unwrap();
        assert!(matches!(remote.reset(0), Err(Error::Protocol(_))));
        let e = remote.reset(0).unwrap_err();
        assert!(matches!(e, Error::Protocol(ref m) if m.contains("negotiated")), "{e}");
        drop(remote);
        h.join().unwrap();
    }

    #[test]
    fn premature_close_and_timeout() {
        let (client, mut server) = loopback_pair();
        let h = thread::spawn(move || {
            server.recv_line(None).unwrap();
            server
                .send_line(r#"{"kind":"spec","obs_dim":1,"act_dim":1,"max_steps":5,"seq":0}"#)
                .unwrap();
            server.recv_line(None).unwrap();
            // silent: the client times out; then the server goes away
            thread::sleep(Duration::from_millis(150));
        });
        let mut remote = RemoteEnv::connect_with_timeout(client, Duration::from_millis(50)).unwrap();
        assert!(matches!(remote.reset(0), Err(Error::Timeout(_))));
        h.join().unwrap();
        assert!(matches!(remote.reset(0), Err(Error::Closed(_)) | Err(Error::Protocol(_))));
    }

    #[test]
    fn tcp_session() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = thread::spawn(move || {
            serve_tcp(
                &listener,
                || Ok(Box::new(StopGo1D::new(StopGoConfig::default())?) as Box<dyn Environment + Send>),
                Some(1),
            )
            .unwrap();
        });
        let mut remote = RemoteEnv::connect(TcpTransport::connect(addr).unwrap()).unwrap();
        let obs = remote.reset(1).unwrap();
        assert_eq!(obs.len(), 4);
        let r = remote.step(&[1.0]).unwrap();
        assert!(!r.done);
        drop(remote);
        h.join().unwrap();
    }
}
