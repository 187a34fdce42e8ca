//! Host-side driver for one control-stack round per optimization iteration.

use std::io::{self, BufReader};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use thiserror::Error;

use qprofile_core::compiler::{CompiledJob, ProgramFile};
use qprofile_core::profiler::{IterationTimings, PrepareMode};

use crate::wire::{
    read_frame, write_frame, Ack, Acquisition, ClusterState, ErrorCode, JobMeta, PrepareAck, Request, Response,
    StatusReply,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error during {phase}: {source}")]
    Transport {
        phase: &'static str,
        #[source]
        source: io::Error,
    },
    #[error("cluster rejected {phase} with {code}: {msg}")]
    Protocol {
        phase: &'static str,
        code: ErrorCode,
        msg: String,
    },
    #[error("malformed reply to {phase}: {detail}")]
    Malformed { phase: &'static str, detail: String },
    #[error("job did not finish within {0:?}")]
    Timeout(Duration),
    #[error("job was stopped while waiting for it to finish")]
    Aborted,
}

impl ClientError {
    pub fn is_transport(&self) -> bool {
        matches!(self, ClientError::Transport { .. })
    }
}

/// One framed connection to the cluster.
#[derive(Debug)]
pub struct Connection {
    stream: TcpStream,
    reader: BufReader<TcpStream>,
}

impl Connection {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Connection { stream, reader })
    }

    /// Sends raw frame bytes and reads the reply.
    pub fn call_raw(&mut self, payload: &[u8], phase: &'static str) -> Result<Response, ClientError> {
        let transport = |source| ClientError::Transport { phase, source };
        write_frame(&mut self.stream, payload).map_err(transport)?;
        let reply = read_frame(&mut self.reader)
            .map_err(transport)?
            .ok_or_else(|| transport(io::Error::new(io::ErrorKind::UnexpectedEof, "cluster closed the connection")))?;
        Response::from_bytes(&reply).map_err(|detail| ClientError::Malformed { phase, detail })
    }

    /// Sends a request; service errors become [`ClientError::Protocol`].
    pub fn call(&mut self, req: &Request) -> Result<Map<String, Value>, ClientError> {
        let phase = req.name();
        let bytes = serde_json::to_vec(req).expect("requests serialize");
        match self.call_raw(&bytes, phase)? {
            Response::Ok(m) => Ok(m),
            Response::Err { code, msg } => Err(ClientError::Protocol { phase, code, msg }),
        }
    }

    pub fn call_as<T: DeserializeOwned>(&mut self, req: &Request) -> Result<T, ClientError> {
        let phase = req.name();
        let m = self.call(req)?;
        serde_json::from_value(Value::Object(m)).map_err(|e| ClientError::Malformed {
            phase,
            detail: e.to_string(),
        })
    }
}

/// Wire request uploading one program file of `job`.
pub fn prepare_request(job: &CompiledJob, file: &ProgramFile) -> Request {
    Request::Prepare {
        module: file.slot.module,
        seq: file.slot.sequencer,
        meta: JobMeta {
            qubit: file.qubit,
            role: file.role,
            shots: job.shots,
            schedule_s: job.schedule_duration,
        },
        program: base64::engine::general_purpose::STANDARD.encode(file.bytes()),
    }
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub acquisitions: Vec<Acquisition>,
    pub timings: IterationTimings,
}

/// Driver holding a command connection plus a pool of upload connections
/// reused across iterations for parallel prepare.
#[derive(Debug)]
pub struct StackClient {
    addr: SocketAddr,
    main: Connection,
    pool: Vec<Connection>,
    pub poll_interval: Duration,
    pub wait_timeout: Duration,
}

impl StackClient {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "address resolved to nothing"))?;
        Ok(StackClient {
            addr,
            main: Connection::connect(addr)?,
            pool: Vec::new(),
            poll_interval: Duration::from_millis(1),
            wait_timeout: Duration::from_secs(120),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn connection(&mut self) -> &mut Connection {
        &mut self.main
    }

    fn ack(&mut self, req: &Request, t0: Instant) -> Result<f64, ClientError> {
        let a: Ack = self.main.call_as(req)?;
        Ok(if a.virtual_time { a.service_ms } else { elapsed_ms(t0) })
    }

    pub fn stop(&mut self) -> Result<f64, ClientError> {
        self.ack(&Request::Stop, Instant::now())
    }

    pub fn start(&mut self) -> Result<f64, ClientError> {
        self.ack(&Request::Start, Instant::now())
    }

    pub fn status(&mut self) -> Result<StatusReply, ClientError> {
        self.main.call_as(&Request::Status)
    }

    /// Uploads every program on the command connection, one after another.
    pub fn prepare_sequential(&mut self, job: &CompiledJob) -> Result<f64, ClientError> {
        let t0 = Instant::now();
        let mut virtual_ms = None;
        for f in &job.files {
            let a: PrepareAck = self.main.call_as(&prepare_request(job, f))?;
            if a.virtual_time {
                *virtual_ms.get_or_insert(0.0) += a.serial_ms + a.concurrent_ms;
            }
        }
        Ok(virtual_ms.unwrap_or_else(|| elapsed_ms(t0)))
    }

    /// Uploads every program concurrently, one pooled connection per file.
    /// On failure the cluster is stopped and the first error returned.
    pub fn prepare_parallel(&mut self, job: &CompiledJob) -> Result<f64, ClientError> {
        while self.pool.len() < job.files.len() {
            let c = Connection::connect(self.addr).map_err(|source| ClientError::Transport {
                phase: "prepare",
                source,
            })?;
            self.pool.push(c);
        }
        let t0 = Instant::now();
        let results: Vec<Result<PrepareAck, ClientError>> = thread::scope(|s| {
            let handles: Vec<_> = self
                .pool
                .iter_mut()
                .zip(&job.files)
                .map(|(conn, f)| s.spawn(move || conn.call_as::<PrepareAck>(&prepare_request(job, f))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("upload thread panicked")).collect()
        });
        let wall = elapsed_ms(t0);
        let mut acks = Vec::with_capacity(results.len());
        for r in results {
            match r {
                Ok(a) => acks.push(a),
                Err(e) => {
                    // drop pooled connections that may be broken
                    if e.is_transport() {
                        self.pool.clear();
                    }
                    let _ = self.main.call(&Request::Stop);
                    return Err(e);
                }
            }
        }
        if acks.iter().any(|a| a.virtual_time) {
            let serial: f64 = acks.iter().map(|a| a.serial_ms).sum();
            let concurrent = acks.iter().map(|a| a.concurrent_ms).fold(0.0, f64::max);
            return Ok(serial + concurrent);
        }
        Ok(wall)
    }

    /// Polls until the job is done. Returns (wait time in ms, dilation the cluster applied).
    pub fn wait_done(&mut self) -> Result<(f64, f64), ClientError> {
        let t0 = Instant::now();
        loop {
            let s = self.status()?;
            match s.state {
                ClusterState::Done if s.virtual_time => {
                    return Ok((s.finalize_ms + s.schedule_s * 1e3 * s.dilation, s.dilation))
                }
                ClusterState::Done => return Ok((elapsed_ms(t0), s.dilation)),
                ClusterState::Running => {}
                ClusterState::Idle | ClusterState::Armed => return Err(ClientError::Aborted),
            }
            if t0.elapsed() > self.wait_timeout {
                return Err(ClientError::Timeout(self.wait_timeout));
            }
            thread::sleep(self.poll_interval);
        }
    }

    /// Retrieves the acquisitions of every readout module used by the job.
    pub fn retrieve(&mut self, modules: &[usize]) -> Result<(Vec<Acquisition>, f64), ClientError> {
        let t0 = Instant::now();
        let mut out = Vec::with_capacity(modules.len());
        let mut virtual_ms = None;
        for &module in modules {
            let a: Acquisition = self.main.call_as(&Request::Retrieve { module })?;
            if a.virtual_time {
                *virtual_ms.get_or_insert(0.0) += a.service_ms;
            }
            out.push(a);
        }
        Ok((out, virtual_ms.unwrap_or_else(|| elapsed_ms(t0))))
    }

    /// Stop, prepare, start, wait for done, retrieve, stop; each phase timed.
    pub fn run_iteration(&mut self, job: &CompiledJob, mode: PrepareMode) -> Result<IterationOutcome, ClientError> {
        let stop_pre = self.stop()?;
        let prepare_ms = match mode {
            PrepareMode::Sequential => self.prepare_sequential(job)?,
            PrepareMode::Parallel => self.prepare_parallel(job)?,
        };
        let start_ms = self.start()?;
        let (wait_ms, dilation) = self.wait_done()?;
        let (acquisitions, retrieve_ms) = self.retrieve(&job.readout_modules())?;
        let stop_post = self.stop()?;
        Ok(IterationOutcome {
            acquisitions,
            timings: IterationTimings {
                stop_ms: stop_pre + stop_post,
                prepare_ms,
                start_ms,
                wait_done_wall_ms: wait_ms,
                retrieve_ms,
                schedule_nominal_ms: job.schedule_duration * 1e3,
                dilation,
                prepare_mode: mode,
                reset_mode: job.reset,
            },
        })
    }
}

fn elapsed_ms(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1e3
}
