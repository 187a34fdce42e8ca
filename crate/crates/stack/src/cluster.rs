//! Virtual control cluster.
//!
//! Sequencers move through idle → armed → running → done and back to idle on
//! stop. Each command is charged a configured latency before it is
//! acknowledged; prepares contend on one global lock for the serial share of
//! their latency only. A started job finishes after its nominal schedule time
//! times the dilation plus a finalization delay. The transition to done is
//! evaluated lazily on the next status or retrieve.

use std::collections::BTreeMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use qprofile_core::asm::parse_program;
use qprofile_core::compiler::{ModuleKind, ProgramRole, Topology};

use crate::wire::{
    read_frame, write_frame, Ack, Acquisition, ClusterState, ErrorCode, JobMeta, PrepareAck, Request, Response,
    StatusReply,
};

/// Per-command service latencies in milliseconds.
///
/// The two `compile_*` fields are not used by the cluster. They describe the
/// host-side compile overhead the benchmark harness emulates, and live here so
/// one profile file configures a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyProfile {
    pub stop_ms: f64,
    pub start_ms: f64,
    pub retrieve_ms: f64,
    /// Charged under the global prepare lock.
    pub prepare_serial_ms: f64,
    /// Charged outside the lock, so concurrent prepares overlap here.
    pub prepare_concurrent_ms: f64,
    pub prepare_per_byte_ns: f64,
    pub done_finalize_ms: f64,
    /// Multiplier on the slept schedule time. 0 accounts the schedule without sleeping it.
    pub dilation: f64,
    /// Report latencies without sleeping any of them.
    pub virtual_time: bool,
    pub compile_base_ms: f64,
    pub compile_per_qubit_ms: f64,
}

impl Default for LatencyProfile {
    /// Calibrated against the 4-qubit baseline measurements.
    fn default() -> Self {
        LatencyProfile {
            stop_ms: 9.75,
            start_ms: 57.11,
            retrieve_ms: 58.9,
            prepare_serial_ms: 6.86,
            prepare_concurrent_ms: 19.04,
            prepare_per_byte_ns: 0.0,
            done_finalize_ms: 56.3,
            dilation: 1.0,
            virtual_time: false,
            compile_base_ms: 11.26,
            compile_per_qubit_ms: 18.235,
        }
    }
}

impl LatencyProfile {
    /// Every latency zero, dilation 1.
    pub fn zeroed() -> Self {
        LatencyProfile {
            stop_ms: 0.0,
            start_ms: 0.0,
            retrieve_ms: 0.0,
            prepare_serial_ms: 0.0,
            prepare_concurrent_ms: 0.0,
            prepare_per_byte_ns: 0.0,
            done_finalize_ms: 0.0,
            dilation: 1.0,
            virtual_time: false,
            compile_base_ms: 0.0,
            compile_per_qubit_ms: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("stop_ms", self.stop_ms),
            ("start_ms", self.start_ms),
            ("retrieve_ms", self.retrieve_ms),
            ("prepare_serial_ms", self.prepare_serial_ms),
            ("prepare_concurrent_ms", self.prepare_concurrent_ms),
            ("prepare_per_byte_ns", self.prepare_per_byte_ns),
            ("done_finalize_ms", self.done_finalize_ms),
            ("dilation", self.dilation),
            ("compile_base_ms", self.compile_base_ms),
            ("compile_per_qubit_ms", self.compile_per_qubit_ms),
        ];
        match fields.into_iter().find(|&(_, v)| !(v >= 0.0 && v.is_finite())) {
            Some((field, value)) => Err(ConfigError::Negative { field, value }),
            None => Ok(()),
        }
    }

    /// Host compile overhead for `n` qubits.
    pub fn compile_overhead_ms(&self, n: usize) -> f64 {
        self.compile_base_ms + self.compile_per_qubit_ms * n as f64
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("profile field `{field}` must be finite and non-negative, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("topology has duplicate module id {0}")]
    DuplicateModule(usize),
    #[error("reading {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
}

/// Contents of a cluster configuration file: topology plus latency profile fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct ClusterConfig {
    #[serde(default)]
    pub topology: Topology,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub profile: LatencyProfile,
}


impl ClusterConfig {
    pub fn with_profile(profile: LatencyProfile) -> Self {
        ClusterConfig {
            profile,
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
        let cfg: ClusterConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: p, source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.profile.validate()?;
        let mut ids: Vec<usize> = self.topology.modules.iter().map(|m| m.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ConfigError::DuplicateModule(w[0]));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqStatus {
    Idle,
    Armed,
    Running,
    Done,
}

#[derive(Debug, Clone)]
struct Sequencer {
    status: SeqStatus,
    program: Vec<u8>,
    meta: Option<JobMeta>,
}

impl Sequencer {
    fn idle() -> Self {
        Sequencer {
            status: SeqStatus::Idle,
            program: Vec::new(),
            meta: None,
        }
    }
}

#[derive(Debug)]
struct Job {
    started: Instant,
    done_at: Instant,
    schedule_s: f64,
    acquisitions: Option<BTreeMap<usize, Acquisition>>,
}

#[derive(Debug)]
struct State {
    seqs: BTreeMap<(usize, usize), Sequencer>,
    job: Option<Job>,
    rng: ChaCha8Rng,
}

impl State {
    fn cluster_state(&self) -> ClusterState {
        match &self.job {
            Some(j) if j.acquisitions.is_some() => ClusterState::Done,
            Some(_) => ClusterState::Running,
            None if self.seqs.values().any(|s| s.status == SeqStatus::Armed) => ClusterState::Armed,
            None => ClusterState::Idle,
        }
    }

    /// Completes the running job if its time has come.
    fn advance(&mut self, now: Instant) {
        let Some(job) = self.job.as_mut() else { return };
        if job.acquisitions.is_some() || now < job.done_at {
            return;
        }
        let mut acq: BTreeMap<usize, Acquisition> = BTreeMap::new();
        for (&(module, _), seq) in self.seqs.iter_mut() {
            if seq.status != SeqStatus::Running {
                continue;
            }
            seq.status = SeqStatus::Done;
            let Some(meta) = seq.meta.as_ref().filter(|m| m.role == ProgramRole::Readout) else {
                continue;
            };
            let rng = &mut self.rng;
            let bits: String = (0..meta.shots).map(|_| if rng.gen::<bool>() { '1' } else { '0' }).collect();
            let raw: Vec<f64> = (0..meta.shots)
                .map(|_| (rng.gen_range(-1.0f64..1.0) * 1e4).round() / 1e4)
                .collect();
            let entry = acq.entry(module).or_insert_with(|| Acquisition {
                module,
                shots: meta.shots,
                bits: BTreeMap::new(),
                raw: BTreeMap::new(),
                service_ms: 0.0,
                virtual_time: false,
            });
            entry.bits.insert(meta.qubit, bits);
            entry.raw.insert(meta.qubit, raw);
        }
        job.acquisitions = Some(acq);
    }

    fn reset(&mut self) {
        self.job = None;
        for s in self.seqs.values_mut() {
            *s = Sequencer::idle();
        }
    }

    /// Debug view of every sequencer status, for invariant checks.
    fn statuses(&self) -> Vec<SeqStatus> {
        self.seqs.values().map(|s| s.status).collect()
    }
}

/// The cluster's command handling, independent of any transport.
#[derive(Debug)]
pub struct Cluster {
    config: ClusterConfig,
    state: Mutex<State>,
    prepare_lock: Mutex<()>,
}

impl Cluster {
    pub fn new(config: ClusterConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let seqs = config
            .topology
            .modules
            .iter()
            .flat_map(|m| (0..m.sequencers).map(move |s| ((m.id, s), Sequencer::idle())))
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Cluster {
            state: Mutex::new(State { seqs, job: None, rng }),
            prepare_lock: Mutex::new(()),
            config,
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    fn profile(&self) -> &LatencyProfile {
        &self.config.profile
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        // a panicking handler thread must not take the whole service down
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn charge(&self, ms: f64) -> f64 {
        if !self.profile().virtual_time && ms > 0.0 {
            thread::sleep(Duration::from_secs_f64(ms / 1e3));
        }
        ms
    }

    pub fn state(&self) -> ClusterState {
        let mut st = self.lock();
        st.advance(Instant::now());
        st.cluster_state()
    }

    pub fn sequencer_statuses(&self) -> Vec<SeqStatus> {
        let mut st = self.lock();
        st.advance(Instant::now());
        st.statuses()
    }

    /// Program bytes currently loaded on a sequencer, if any.
    pub fn loaded_program(&self, module: usize, seq: usize) -> Option<Vec<u8>> {
        let st = self.lock();
        st.seqs.get(&(module, seq)).filter(|s| !s.program.is_empty()).map(|s| s.program.clone())
    }

    /// Parses and dispatches one raw frame.
    pub fn handle_bytes(&self, frame: &[u8]) -> Response {
        match serde_json::from_slice::<Request>(frame) {
            Ok(req) => self.handle(req),
            Err(e) => Response::err(ErrorCode::BadFrame, format!("cannot decode request: {e}")),
        }
    }

    pub fn handle(&self, req: Request) -> Response {
        match req {
            Request::Stop => self.stop(),
            Request::Prepare {
                module,
                seq,
                meta,
                program,
            } => self.prepare(module, seq, meta, &program),
            Request::Start => self.start(),
            Request::Status => self.status(),
            Request::Retrieve { module } => self.retrieve(module),
        }
    }

    fn ack(&self, ms: f64) -> Response {
        Response::ok(Ack {
            service_ms: ms,
            virtual_time: self.profile().virtual_time,
        })
    }

    fn stop(&self) -> Response {
        let ms = self.charge(self.profile().stop_ms);
        self.lock().reset();
        self.ack(ms)
    }

    fn prepare(&self, module: usize, seq: usize, meta: JobMeta, program: &str) -> Response {
        if !self.lock().seqs.contains_key(&(module, seq)) {
            return Response::err(ErrorCode::UnknownTarget, format!("no sequencer {seq} on module {module}"));
        }
        let bytes = match base64::engine::general_purpose::STANDARD.decode(program) {
            Ok(b) => b,
            Err(e) => return Response::err(ErrorCode::BadFrame, format!("program is not base64: {e}")),
        };
        let parsed = std::str::from_utf8(&bytes)
            .map_err(|e| e.to_string())
            .and_then(|text| parse_program(text).map_err(|e| e.to_string()));
        if let Err(e) = parsed {
            return Response::err(ErrorCode::BadFrame, format!("invalid program: {e}"));
        }
        if !(meta.schedule_s >= 0.0 && meta.schedule_s.is_finite()) {
            return Response::err(ErrorCode::BadFrame, "schedule_s must be finite and non-negative");
        }
        if let Err(r) = self.check_preparable(module, seq) {
            return r;
        }

        let p = self.profile();
        let serial = {
            let _g = self.prepare_lock.lock().unwrap_or_else(|e| e.into_inner());
            self.charge(p.prepare_serial_ms)
        };
        let concurrent = self.charge(p.prepare_concurrent_ms + bytes.len() as f64 * p.prepare_per_byte_ns / 1e6);

        // a stop or start may have slipped in while we were sleeping
        if let Err(r) = self.check_preparable(module, seq) {
            return r;
        }
        let mut st = self.lock();
        let s = st.seqs.get_mut(&(module, seq)).expect("checked above");
        s.status = SeqStatus::Armed;
        s.program = bytes;
        s.meta = Some(meta);
        drop(st);
        Response::ok(PrepareAck {
            serial_ms: serial,
            concurrent_ms: concurrent,
            virtual_time: p.virtual_time,
        })
    }

    fn check_preparable(&self, module: usize, seq: usize) -> Result<(), Response> {
        let mut st = self.lock();
        st.advance(Instant::now());
        if st.job.is_some() {
            return Err(Response::err(ErrorCode::BadState, "a job is in flight; stop first"));
        }
        match st.seqs[&(module, seq)].status {
            SeqStatus::Idle => Ok(()),
            other => Err(Response::err(
                ErrorCode::BadState,
                format!("sequencer {module}/{seq} is {other:?}, not idle"),
            )),
        }
    }

    fn check_startable(&self) -> Result<(), Response> {
        let mut st = self.lock();
        st.advance(Instant::now());
        match st.cluster_state() {
            ClusterState::Armed => Ok(()),
            ClusterState::Idle => Err(Response::err(ErrorCode::BadState, "no sequencer is armed")),
            ClusterState::Running | ClusterState::Done => Err(Response::err(ErrorCode::BadState, "already running")),
        }
    }

    fn start(&self) -> Response {
        if let Err(r) = self.check_startable() {
            return r;
        }
        let ms = self.charge(self.profile().start_ms);
        if let Err(r) = self.check_startable() {
            return r;
        }
        let p = self.profile();
        let mut st = self.lock();
        let schedule_s = st
            .seqs
            .values()
            .filter(|s| s.status == SeqStatus::Armed)
            .filter_map(|s| s.meta.as_ref().map(|m| m.schedule_s))
            .fold(0.0, f64::max);
        for s in st.seqs.values_mut().filter(|s| s.status == SeqStatus::Armed) {
            s.status = SeqStatus::Running;
        }
        let now = Instant::now();
        let run = if p.virtual_time {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(schedule_s * p.dilation + p.done_finalize_ms / 1e3)
        };
        st.job = Some(Job {
            started: now,
            done_at: now + run,
            schedule_s,
            acquisitions: None,
        });
        drop(st);
        self.ack(ms)
    }

    fn status(&self) -> Response {
        let now = Instant::now();
        let mut st = self.lock();
        st.advance(now);
        let (elapsed_s, schedule_s) = st
            .job
            .as_ref()
            .map_or((0.0, 0.0), |j| (now.duration_since(j.started).as_secs_f64(), j.schedule_s));
        let p = self.profile();
        Response::ok(StatusReply {
            state: st.cluster_state(),
            elapsed_s,
            schedule_s,
            dilation: if p.virtual_time { 0.0 } else { p.dilation },
            finalize_ms: p.done_finalize_ms,
            virtual_time: p.virtual_time,
        })
    }

    fn check_retrievable(&self, module: usize) -> Result<Acquisition, Response> {
        let mut st = self.lock();
        st.advance(Instant::now());
        let Some(acq) = st.job.as_ref().and_then(|j| j.acquisitions.as_ref()) else {
            return Err(Response::err(ErrorCode::BadState, "no finished job to retrieve"));
        };
        Ok(acq.get(&module).cloned().unwrap_or_else(|| Acquisition {
            module,
            shots: 0,
            bits: BTreeMap::new(),
            raw: BTreeMap::new(),
            service_ms: 0.0,
            virtual_time: false,
        }))
    }

    fn retrieve(&self, module: usize) -> Response {
        match self.config.topology.module(module) {
            Some(m) if m.kind == ModuleKind::Readout => {}
            Some(_) => return Response::err(ErrorCode::UnknownTarget, format!("module {module} is not a readout module")),
            None => return Response::err(ErrorCode::UnknownTarget, format!("no module {module}")),
        }
        if let Err(r) = self.check_retrievable(module) {
            return r;
        }
        let ms = self.charge(self.profile().retrieve_ms);
        match self.check_retrievable(module) {
            Ok(mut acq) => {
                acq.service_ms = ms;
                acq.virtual_time = self.profile().virtual_time;
                Response::ok(acq)
            }
            Err(r) => r,
        }
    }
}

/// A cluster listening on a TCP socket.
pub struct ClusterServer {
    addr: SocketAddr,
    cluster: Arc<Cluster>,
    shutdown: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl ClusterServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn cluster(&self) -> &Arc<Cluster> {
        &self.cluster
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ClusterServer {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

/// Binds `addr` and serves connections on background threads, one per connection.
pub fn serve(addr: impl ToSocketAddrs, config: ClusterConfig) -> io::Result<ClusterServer> {
    let cluster = Arc::new(Cluster::new(config).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?);
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let acceptor = {
        let cluster = Arc::clone(&cluster);
        let shutdown = Arc::clone(&shutdown);
        thread::Builder::new()
            .name("cluster-accept".into())
            .spawn(move || accept_loop(listener, cluster, shutdown))?
    };
    log::info!("cluster listening on {addr}");
    Ok(ClusterServer {
        addr,
        cluster,
        shutdown,
        acceptor: Some(acceptor),
    })
}

fn accept_loop(listener: TcpListener, cluster: Arc<Cluster>, shutdown: Arc<AtomicBool>) {
    for conn in listener.incoming() {
        if shutdown.load(Ordering::SeqCst) {
            break;
        }
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let cluster = Arc::clone(&cluster);
        let spawned = thread::Builder::new()
            .name("cluster-conn".into())
            .spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = serve_connection(stream, &cluster) {
                    log::debug!("connection {peer:?} closed: {e}");
                }
            });
        if let Err(e) = spawned {
            log::error!("cannot spawn connection thread: {e}");
        }
    }
}

fn serve_connection(stream: TcpStream, cluster: &Cluster) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                // the length prefix is unusable, so the stream cannot be resynchronized
                let r = Response::err(ErrorCode::BadFrame, e.to_string());
                write_frame(&mut writer, &r.to_bytes())?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let resp = cluster.handle_bytes(&frame);
        write_frame(&mut writer, &resp.to_bytes())?;
    }
}
