//! Socket protocol so the energy and water operators can run as separate
//! processes.
//!
//! The wire carries exactly the data the coordination scheme is allowed to
//! share: water-consumption profiles, the energy side's per-iteration cost
//! scalar for stop bookkeeping, and the stop notice. Multipliers and
//! residuals are never transmitted — each side recomputes them locally from
//! the exchanged vectors with identical arithmetic, so a socket run and an
//! in-process run produce bit-identical iteration logs.
//!
//! Frames are a 4-byte big-endian length prefix followed by a UTF-8 JSON
//! body with fields `v`, `iter`, `role`, `kind`, `data`, `crc32`. The
//! checksum is a CRC-32 (IEEE) over the canonical body serialization with
//! the `crc32` field zeroed, so any semantic corruption is caught no matter
//! where the flipped byte lands.
//!
//! Choreography: the water agent connects and opens with its solo
//! minimum-consumption profile as an iteration-0 coupling vector. Each
//! iteration the energy agent sends its proposal (coupling vector, then the
//! cost scalar) and the water agent replies with its response profile. The
//! energy agent decides when to stop and says so with a stop frame.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{
    dual_update, feasibility_metric, mwm_subproblem, penalty_half_width, residuals,
    run_admm_with, AdmmAbort, AdmmConfig, AdmmError, DecentralizedSolution, IterationRecord,
    SubproblemOrder, WaterLink,
};
use crate::mwm::{
    build_mwm, extract_mwm_solution, MwmObjective, ScenarioCurves, WaterDispatch,
};
use crate::scenario::Scenario;
use crate::solver::{solve_milp, SolveStatus, Tolerances};

/// Protocol version spoken by this build.
pub const PROTOCOL_VERSION: u32 = 1;

/// Largest frame body accepted, a guard against garbage length prefixes.
const MAX_FRAME_BYTES: usize = 64 * 1024 * 1024;

/// Which operator a message came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoleTag {
    #[serde(rename = "MEM")]
    Energy,
    #[serde(rename = "MWM")]
    Water,
}

/// What a message carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// A water-consumption profile, one value per interval.
    CouplingVector,
    /// A single bookkeeping scalar (the energy side's iteration cost).
    ObjectiveScalar,
    /// End of the run; carries no data.
    StopSignal,
}

/// One protocol message. `data` holds the coupling profile, the single
/// scalar, or nothing, depending on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmMessage {
    pub v: u32,
    pub iter: u64,
    pub role: RoleTag,
    pub kind: MessageKind,
    pub data: Vec<f64>,
    pub crc32: u32,
}

impl AdmmMessage {
    /// Builds a message with the checksum filled in. Rejects payload shapes
    /// the protocol forbids (an empty coupling vector, a scalar that is not
    /// exactly one value, a stop frame with data, non-finite numbers).
    pub fn new(
        role: RoleTag,
        kind: MessageKind,
        iter: u64,
        data: Vec<f64>,
    ) -> Result<AdmmMessage, TransportError> {
        let mut msg = AdmmMessage {
            v: PROTOCOL_VERSION,
            iter,
            role,
            kind,
            data,
            crc32: 0,
        };
        msg.check_shape()?;
        msg.crc32 = msg.payload_crc();
        Ok(msg)
    }

    fn check_shape(&self) -> Result<(), TransportError> {
        let bad = |why: String| Err(TransportError::Malformed(why));
        match self.kind {
            MessageKind::CouplingVector if self.data.is_empty() => {
                return bad("coupling vector must not be empty".into());
            }
            MessageKind::ObjectiveScalar if self.data.len() != 1 => {
                return bad(format!(
                    "objective scalar must carry exactly one value, got {}",
                    self.data.len()
                ));
            }
            MessageKind::StopSignal if !self.data.is_empty() => {
                return bad("stop signal must carry no data".into());
            }
            _ => {}
        }
        if let Some(v) = self.data.iter().find(|v| !v.is_finite()) {
            return bad(format!("non-finite payload value {v}"));
        }
        Ok(())
    }

    /// CRC-32 (IEEE) over the canonical JSON serialization of this message
    /// with the `crc32` field set to zero.
    pub fn payload_crc(&self) -> u32 {
        let mut zeroed = self.clone();
        zeroed.crc32 = 0;
        let bytes = serde_json::to_vec(&zeroed).expect("message serializes");
        crc32fast::hash(&bytes)
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("frame truncated: expected {expected} more bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("protocol version mismatch: speaking {want}, peer sent {got}")]
    VersionMismatch { want: u32, got: u32 },
    #[error("checksum mismatch: frame says {stated:#010x}, payload hashes to {computed:#010x}")]
    ChecksumMismatch { stated: u32, computed: u32 },
    #[error("frame body is not a valid message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("timed out after {:.1}s waiting for the peer", .0.as_secs_f64())]
    Timeout(Duration),
    #[error("peer disconnected mid-run")]
    Disconnected,
    #[error("socket error: {0}")]
    Io(#[from] std::io::Error),
}

/// Serializes a message into its wire frame: 4-byte big-endian body length,
/// then the UTF-8 JSON body.
pub fn encode_frame(message: &AdmmMessage) -> Result<Vec<u8>, TransportError> {
    message.check_shape()?;
    if message.v != PROTOCOL_VERSION {
        return Err(TransportError::VersionMismatch {
            want: PROTOCOL_VERSION,
            got: message.v,
        });
    }
    let computed = message.payload_crc();
    if message.crc32 != computed {
        return Err(TransportError::ChecksumMismatch {
            stated: message.crc32,
            computed,
        });
    }
    let body = serde_json::to_vec(message)?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(TransportError::Protocol(format!(
            "frame body of {} bytes exceeds the {MAX_FRAME_BYTES}-byte cap",
            body.len()
        )));
    }
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

/// Parses one complete frame (prefix and body) back into a message,
/// verifying version and checksum. The input must be exactly one frame.
pub fn decode_frame(bytes: &[u8]) -> Result<AdmmMessage, TransportError> {
    if bytes.len() < 4 {
        return Err(TransportError::Truncated {
            expected: 4 - bytes.len(),
            got: bytes.len(),
        });
    }
    let declared = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if declared > MAX_FRAME_BYTES {
        return Err(TransportError::Protocol(format!(
            "declared body of {declared} bytes exceeds the {MAX_FRAME_BYTES}-byte cap"
        )));
    }
    let body = &bytes[4..];
    if body.len() < declared {
        return Err(TransportError::Truncated {
            expected: declared - body.len(),
            got: body.len(),
        });
    }
    if body.len() > declared {
        return Err(TransportError::Protocol(format!(
            "{} trailing bytes after the declared body",
            body.len() - declared
        )));
    }
    decode_body(body)
}

fn decode_body(body: &[u8]) -> Result<AdmmMessage, TransportError> {
    let message: AdmmMessage = serde_json::from_slice(body)?;
    if message.v != PROTOCOL_VERSION {
        return Err(TransportError::VersionMismatch {
            want: PROTOCOL_VERSION,
            got: message.v,
        });
    }
    let computed = message.payload_crc();
    if message.crc32 != computed {
        return Err(TransportError::ChecksumMismatch {
            stated: message.crc32,
            computed,
        });
    }
    message.check_shape()?;
    Ok(message)
}

fn write_frame<S: Write>(stream: &mut S, message: &AdmmMessage) -> Result<(), TransportError> {
    let frame = encode_frame(message)?;
    stream.write_all(&frame).map_err(map_io)?;
    stream.flush().map_err(map_io)?;
    Ok(())
}

fn read_frame<S: Read>(stream: &mut S) -> Result<AdmmMessage, TransportError> {
    let mut prefix = [0u8; 4];
    read_exact_or(stream, &mut prefix, true)?;
    let declared = u32::from_be_bytes(prefix) as usize;
    if declared > MAX_FRAME_BYTES {
        return Err(TransportError::Protocol(format!(
            "declared body of {declared} bytes exceeds the {MAX_FRAME_BYTES}-byte cap"
        )));
    }
    let mut body = vec![0u8; declared];
    read_exact_or(stream, &mut body, false)?;
    decode_body(&body)
}

/// Like `read_exact`, but maps EOF at a frame boundary to "disconnected"
/// and EOF inside a frame to "truncated".
fn read_exact_or<S: Read>(
    stream: &mut S,
    buf: &mut [u8],
    at_boundary: bool,
) -> Result<(), TransportError> {
    let mut filled = 0;
    while filled < buf.len() {
        match stream.read(&mut buf[filled..]) {
            Ok(0) => {
                return if at_boundary && filled == 0 {
                    Err(TransportError::Disconnected)
                } else {
                    Err(TransportError::Truncated {
                        expected: buf.len() - filled,
                        got: filled,
                    })
                };
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(map_io(e)),
        }
    }
    Ok(())
}

fn map_io(e: std::io::Error) -> TransportError {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => {
            TransportError::Timeout(Duration::from_secs(0))
        }
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe => {
            TransportError::Disconnected
        }
        _ => TransportError::Io(e),
    }
}

fn link_err(e: TransportError) -> AdmmError {
    AdmmError::Link(e.to_string())
}

/// Socket-side [`WaterLink`]: forwards the energy driver's numbers to a
/// remote water agent and returns its replies.
pub struct SocketLink<S: Read + Write> {
    stream: S,
    horizon: usize,
}

impl<S: Read + Write> SocketLink<S> {
    pub fn new(stream: S, horizon: usize) -> Self {
        SocketLink { stream, horizon }
    }

    fn expect_water_vector(&mut self, iter: u64) -> Result<Vec<f64>, AdmmError> {
        let msg = read_frame(&mut self.stream).map_err(link_err)?;
        if msg.role != RoleTag::Water || msg.kind != MessageKind::CouplingVector {
            return Err(link_err(TransportError::Protocol(format!(
                "expected a water coupling vector, got {:?}/{:?}",
                msg.role, msg.kind
            ))));
        }
        if msg.iter != iter {
            return Err(link_err(TransportError::Protocol(format!(
                "expected iteration {iter}, peer answered for {}",
                msg.iter
            ))));
        }
        if msg.data.len() != self.horizon {
            return Err(link_err(TransportError::Protocol(format!(
                "coupling vector length {} does not match horizon {}",
                msg.data.len(),
                self.horizon
            ))));
        }
        Ok(msg.data)
    }
}

impl<S: Read + Write> WaterLink for SocketLink<S> {
    fn initial_profile(&mut self) -> Result<Vec<f64>, AdmmError> {
        self.expect_water_vector(0)
    }

    fn exchange(
        &mut self,
        iteration: usize,
        energy_profile: &[f64],
        energy_cost: f64,
        _half: f64,
    ) -> Result<Vec<f64>, AdmmError> {
        let iter = iteration as u64;
        let vector = AdmmMessage::new(
            RoleTag::Energy,
            MessageKind::CouplingVector,
            iter,
            energy_profile.to_vec(),
        )
        .map_err(link_err)?;
        write_frame(&mut self.stream, &vector).map_err(link_err)?;
        let scalar = AdmmMessage::new(
            RoleTag::Energy,
            MessageKind::ObjectiveScalar,
            iter,
            vec![energy_cost],
        )
        .map_err(link_err)?;
        write_frame(&mut self.stream, &scalar).map_err(link_err)?;
        self.expect_water_vector(iter)
    }

    fn finish(&mut self, iterations: usize) -> Result<(), AdmmError> {
        let stop = AdmmMessage::new(
            RoleTag::Energy,
            MessageKind::StopSignal,
            iterations as u64,
            vec![],
        )
        .map_err(link_err)?;
        write_frame(&mut self.stream, &stop).map_err(link_err)?;
        Ok(())
    }

    fn final_dispatch(&self) -> Option<WaterDispatch> {
        None
    }
}

/// What the water agent brings home: its own copy of the iteration log
/// (identical to the energy side's) and its final dispatch.
#[derive(Debug, Clone)]
pub struct WaterAgentReport {
    pub log: Vec<IterationRecord>,
    pub dispatch: WaterDispatch,
}

impl WaterAgentReport {
    pub fn iterations(&self) -> usize {
        self.log.len()
    }
}

/// Runs the energy side of the protocol over an established stream.
pub fn energy_agent_over<S: Read + Write>(
    stream: S,
    scenario: &Scenario,
    config: &AdmmConfig,
) -> Result<DecentralizedSolution, Box<AdmmAbort>> {
    let mut link = SocketLink::new(stream, scenario.horizon());
    run_admm_with(scenario, config, &mut link)
}

/// Runs the water side of the protocol over an established stream: opens
/// with the solo minimum-consumption profile, then answers proposals until
/// the energy side signals the stop.
pub fn water_agent_over<S: Read + Write>(
    mut stream: S,
    scenario: &Scenario,
    curves: &ScenarioCurves,
    config: &AdmmConfig,
) -> Result<WaterAgentReport, Box<AdmmAbort>> {
    let mut log: Vec<IterationRecord> = Vec::new();
    let abort = |iteration: usize, source: AdmmError, log: Vec<IterationRecord>| {
        Box::new(AdmmAbort {
            iteration,
            source,
            log,
        })
    };
    if let Err(e) = config.validate() {
        return Err(abort(0, e, log));
    }
    if config.order != SubproblemOrder::EnergyFirst {
        return Err(abort(
            0,
            AdmmError::BadConfig("the socket protocol always runs energy-first".into()),
            log,
        ));
    }
    let horizon = scenario.horizon();
    let range = scenario.max_water_power();

    // Solo warm start, announced as the iteration-0 coupling vector.
    let (model, map) = match build_mwm(scenario, curves, &MwmObjective::MinEnergy) {
        Ok(pair) => pair,
        Err(e) => return Err(abort(0, e.into(), log)),
    };
    let res = solve_milp(&model, &Tolerances::default());
    if res.status != SolveStatus::Optimal {
        return Err(abort(
            0,
            AdmmError::SolveFailed {
                stage: "water warm-start",
                status: res.status,
            },
            log,
        ));
    }
    let mut dispatch = match extract_mwm_solution(scenario, &map, &res.assignment) {
        Ok(d) => d,
        Err(e) => return Err(abort(0, e.into(), log)),
    };
    let opening = AdmmMessage::new(
        RoleTag::Water,
        MessageKind::CouplingVector,
        0,
        dispatch.water_power.clone(),
    );
    match opening.and_then(|msg| {
        write_frame(&mut stream, &msg)?;
        Ok(())
    }) {
        Ok(()) => {}
        Err(e) => return Err(abort(0, link_err(e), log)),
    }

    let mut lambda = vec![0.0; horizon];
    let mut prev_r = vec![0.0; horizon];
    let mut half = range.max(1e-6);

    loop {
        let k = log.len() + 1;
        let first = match read_frame(&mut stream) {
            Ok(m) => m,
            Err(e) => return Err(abort(k, link_err(e), log)),
        };
        if first.kind == MessageKind::StopSignal {
            break;
        }
        let proto = |why: String| link_err(TransportError::Protocol(why));
        if first.role != RoleTag::Energy || first.kind != MessageKind::CouplingVector {
            return Err(abort(
                k,
                proto(format!(
                    "expected an energy coupling vector, got {:?}/{:?}",
                    first.role, first.kind
                )),
                log,
            ));
        }
        if first.iter != k as u64 {
            return Err(abort(
                k,
                proto(format!("expected iteration {k}, peer sent {}", first.iter)),
                log,
            ));
        }
        if first.data.len() != horizon {
            return Err(abort(
                k,
                proto(format!(
                    "coupling vector length {} does not match horizon {horizon}",
                    first.data.len()
                )),
                log,
            ));
        }
        let energy = first.data;
        let second = match read_frame(&mut stream) {
            Ok(m) => m,
            Err(e) => return Err(abort(k, link_err(e), log)),
        };
        if second.role != RoleTag::Energy
            || second.kind != MessageKind::ObjectiveScalar
            || second.iter != k as u64
        {
            return Err(abort(
                k,
                proto(format!(
                    "expected this iteration's cost scalar, got {:?}/{:?} for iteration {}",
                    second.role, second.kind, second.iter
                )),
                log,
            ));
        }
        let energy_cost = second.data[0];

        let step = match mwm_subproblem(
            scenario,
            curves,
            &lambda,
            &energy,
            config.rho,
            config.cut_count,
            half,
            config.tie_break,
        ) {
            Ok(s) => s,
            Err(e) => return Err(abort(k, e, log)),
        };
        let reply = AdmmMessage::new(
            RoleTag::Water,
            MessageKind::CouplingVector,
            k as u64,
            step.water_profile.clone(),
        );
        match reply.and_then(|msg| {
            write_frame(&mut stream, &msg)?;
            Ok(())
        }) {
            Ok(()) => {}
            Err(e) => return Err(abort(k, link_err(e), log)),
        }

        // Local bookkeeping, arithmetic-for-arithmetic what the energy
        // driver does, so the two logs match bit for bit.
        let (r, s) = match residuals(&energy, &step.water_profile, &prev_r) {
            Ok(pair) => pair,
            Err(e) => return Err(abort(k, e, log)),
        };
        lambda = match dual_update(&lambda, config.rho, &energy, &step.water_profile) {
            Ok(l) => l,
            Err(e) => return Err(abort(k, e, log)),
        };
        let eps = feasibility_metric(&r, &s);
        log.push(IterationRecord {
            iteration: k,
            energy_profile: energy,
            water_profile: step.water_profile.clone(),
            lambda: lambda.clone(),
            primal_residual: r.clone(),
            dual_residual: s,
            eps,
            energy_cost,
            water_consumption: step.water_profile.iter().sum(),
        });
        let r_inf = r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        half = penalty_half_width(r_inf, range);
        prev_r = r;
        dispatch = step.dispatch;
    }

    Ok(WaterAgentReport { log, dispatch })
}

/// Per-connection settings for the TCP entry points.
#[derive(Debug, Clone)]
pub struct TransportOptions {
    /// Per-message timeout; also bounds waiting for the peer to connect.
    pub timeout: Duration,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            timeout: Duration::from_secs(60),
        }
    }
}

/// Listens on `addr`, accepts one water-agent connection, and runs the
/// energy side. Binding to port 0 picks an ephemeral port; use
/// [`run_energy_agent_on`] when the caller needs to know it.
pub fn run_energy_agent(
    addr: &str,
    scenario: &Scenario,
    config: &AdmmConfig,
    options: &TransportOptions,
) -> Result<DecentralizedSolution, Box<AdmmAbort>> {
    let listener = TcpListener::bind(addr)
        .map_err(|e| setup_abort(link_err(TransportError::Io(e))))?;
    run_energy_agent_on(listener, scenario, config, options)
}

/// Like [`run_energy_agent`] with a pre-bound listener.
pub fn run_energy_agent_on(
    listener: TcpListener,
    scenario: &Scenario,
    config: &AdmmConfig,
    options: &TransportOptions,
) -> Result<DecentralizedSolution, Box<AdmmAbort>> {
    let stream = accept_with_deadline(&listener, options.timeout)
        .map_err(|e| setup_abort(link_err(e)))?;
    configure(&stream, options).map_err(|e| setup_abort(link_err(e)))?;
    energy_agent_over(stream, scenario, config)
}

/// Connects to the energy agent at `addr` (retrying until the timeout in
/// case the listener is still coming up) and runs the water side.
pub fn run_water_agent(
    addr: &str,
    scenario: &Scenario,
    curves: &ScenarioCurves,
    config: &AdmmConfig,
    options: &TransportOptions,
) -> Result<WaterAgentReport, Box<AdmmAbort>> {
    let stream =
        connect_with_deadline(addr, options.timeout).map_err(|e| setup_abort(link_err(e)))?;
    configure(&stream, options).map_err(|e| setup_abort(link_err(e)))?;
    water_agent_over(stream, scenario, curves, config)
}

/// Which side of the protocol to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentRole {
    Energy,
    Water,
}

/// Outcome of [`run_agent`], by role.
#[derive(Debug)]
pub enum AgentOutcome {
    Energy(Box<DecentralizedSolution>),
    Water(Box<WaterAgentReport>),
}

/// Role-dispatched entry point: the energy role listens on `endpoint`, the
/// water role connects to it. The water role requires fitted pump curves;
/// the energy role must not be given any (it never holds water operating
/// data).
pub fn run_agent(
    role: AgentRole,
    endpoint: &str,
    scenario: &Scenario,
    curves: Option<&ScenarioCurves>,
    config: &AdmmConfig,
    options: &TransportOptions,
) -> Result<AgentOutcome, Box<AdmmAbort>> {
    match (role, curves) {
        (AgentRole::Energy, None) => {
            run_energy_agent(endpoint, scenario, config, options).map(|s| {
                AgentOutcome::Energy(Box::new(s))
            })
        }
        (AgentRole::Energy, Some(_)) => Err(setup_abort(AdmmError::BadConfig(
            "the energy agent must not hold water pump curves".into(),
        ))),
        (AgentRole::Water, Some(curves)) => {
            run_water_agent(endpoint, scenario, curves, config, options)
                .map(|r| AgentOutcome::Water(Box::new(r)))
        }
        (AgentRole::Water, None) => Err(setup_abort(AdmmError::BadConfig(
            "the water agent needs fitted pump curves".into(),
        ))),
    }
}

fn setup_abort(source: AdmmError) -> Box<AdmmAbort> {
    Box::new(AdmmAbort {
        iteration: 0,
        source,
        log: Vec::new(),
    })
}

fn configure(stream: &TcpStream, options: &TransportOptions) -> Result<(), TransportError> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(options.timeout))?;
    stream.set_write_timeout(Some(options.timeout))?;
    Ok(())
}

fn accept_with_deadline(
    listener: &TcpListener,
    timeout: Duration,
) -> Result<TcpStream, TransportError> {
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                return Ok(stream);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(TransportError::Timeout(timeout));
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(TransportError::Io(e)),
        }
    }
}

fn connect_with_deadline(addr: &str, timeout: Duration) -> Result<TcpStream, TransportError> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(addr) {
            Ok(stream) => return Ok(stream),
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(TransportError::Io(e));
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        }
    }
}

/// Stream wrapper that captures every byte read from the inner stream, so
/// tests can assert on exactly what a peer was shown.
pub struct RecordingStream<S> {
    inner: S,
    inbound: Arc<Mutex<Vec<u8>>>,
}

impl<S> RecordingStream<S> {
    pub fn new(inner: S) -> Self {
        RecordingStream {
            inner,
            inbound: Arc::new(Mutex::new(Vec::new())),
        }
    }

    /// Shared handle to the captured inbound bytes.
    pub fn inbound(&self) -> Arc<Mutex<Vec<u8>>> {
        Arc::clone(&self.inbound)
    }
}

impl<S: Read> Read for RecordingStream<S> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.inbound
            .lock()
            .expect("recording sink lock")
            .extend_from_slice(&buf[..n]);
        Ok(n)
    }
}

impl<S: Write> Write for RecordingStream<S> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.inner.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}
