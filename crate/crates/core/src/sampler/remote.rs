//! Wire client for a remote annealing service, plus a loopback stub server.
//!
//! `POST {endpoint}/sample` with a JSON body holding the sparse QUBO
//! interchange form and `num_reads`, `annealing_time_us` (one sweep per
//! microsecond for the stub) and an optional `seed`. The response carries
//! `samples`, `energies`, `occurrences` and a `timing` object with the
//! service timestamps `created`, `received`, `solved`, `resolved` (epoch
//! milliseconds) and `qpu_programming_ms`, `qpu_sampling_ms`.
//!
//! | service metric                 | field          |
//! |--------------------------------|----------------|
//! | Ingress (created -> received)  | `ingress_ms`   |
//! | Solve (received -> solved)     | `solve_ms`     |
//! | Egress (solved -> resolved)    | `egress_ms`    |
//! | End-to-end (created -> resolved) | `end_to_end_ms` |
//! | QPU programming / sampling     | `qpu_programming_ms` / `qpu_sampling_ms` |
//! | QPU access time                | `qpu_access_ms` (programming + sampling) |

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{SampleSet, Sampler, SamplerParams, SamplerTiming, SimulatedAnnealer};
use crate::error::{Error, Result};
use crate::qubo::{Assignment, Qubo, QuboInterchange};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    #[serde(flatten)]
    pub qubo: QuboInterchange,
    pub num_reads: usize,
    pub annealing_time_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteTiming {
    pub created: f64,
    pub received: f64,
    pub solved: f64,
    pub resolved: f64,
    #[serde(default)]
    pub qpu_programming_ms: f64,
    #[serde(default)]
    pub qpu_sampling_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub samples: Vec<Vec<u8>>,
    pub energies: Vec<f64>,
    pub occurrences: Vec<u64>,
    pub timing: RemoteTiming,
}

impl SampleRequest {
    pub fn new(qubo: &Qubo, params: &SamplerParams) -> Self {
        Self {
            qubo: qubo.to_interchange(),
            num_reads: params.num_reads,
            annealing_time_us: params.sweeps as f64,
            seed: Some(params.seed),
        }
    }
}

/// Converts service timestamps into the per-phase breakdown.
pub fn timing_from_remote(t: &RemoteTiming) -> Result<SamplerTiming> {
    let stamps = [t.created, t.received, t.solved, t.resolved];
    if stamps.iter().any(|v| !v.is_finite()) || !stamps.windows(2).all(|w| w[0] <= w[1]) {
        return Err(Error::Protocol(format!(
            "timestamps must be finite and ordered created <= received <= solved <= resolved, got {stamps:?}"
        )));
    }
    if t.qpu_programming_ms < 0.0 || t.qpu_sampling_ms < 0.0 {
        return Err(Error::Protocol("negative qpu timing".into()));
    }
    Ok(SamplerTiming::new(
        t.received - t.created,
        t.solved - t.received,
        t.resolved - t.solved,
        t.qpu_programming_ms,
        t.qpu_sampling_ms,
    ))
}

/// Validates a response body against the submitted QUBO. Energies are
/// recomputed locally; disagreeing remote values only raise a warning.
pub fn parse_response(qubo: &Qubo, body: &str) -> Result<SampleSet> {
    let resp: SampleResponse = serde_json::from_str(body).map_err(|e| Error::Protocol(e.to_string()))?;
    let rows = resp.samples.len();
    if resp.energies.len() != rows || resp.occurrences.len() != rows {
        return Err(Error::Protocol(format!(
            "{} samples, {} energies, {} occurrences",
            rows,
            resp.energies.len(),
            resp.occurrences.len()
        )));
    }
    let timing = timing_from_remote(&resp.timing)?;
    let mut counts: BTreeMap<Assignment, u64> = BTreeMap::new();
    for ((bits, &remote_energy), &occ) in resp.samples.iter().zip(&resp.energies).zip(&resp.occurrences) {
        if bits.len() != qubo.n() || bits.iter().any(|&b| b > 1) {
            return Err(Error::Protocol(format!("sample {bits:?} is not a {}-bit vector", qubo.n())));
        }
        if occ == 0 {
            return Err(Error::Protocol("occurrence count 0".into()));
        }
        let a = Assignment::from_bits(bits);
        let local = qubo.energy(&a)?;
        if (local - remote_energy).abs() > 1e-6 * (1.0 + local.abs()) {
            log::warn!("remote energy {remote_energy} disagrees with local {local} for {a}; using local");
        }
        *counts.entry(a).or_insert(0) += occ;
    }
    SampleSet::from_counts(qubo, counts, timing)
}

/// Sampler backed by a remote service.
#[derive(Debug, Clone)]
pub struct RemoteSampler {
    endpoint: String,
}

impl RemoteSampler {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into().trim_end_matches('/').to_string() }
    }
}

impl Sampler for RemoteSampler {
    fn sample(&self, qubo: &Qubo, params: &SamplerParams) -> Result<SampleSet> {
        params.validate()?;
        let body = serde_json::to_string(&SampleRequest::new(qubo, params)).expect("request serializes");
        let url = format!("{}/sample", self.endpoint);
        let mut resp = ureq::post(&url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let text = resp.body_mut().read_to_string().map_err(|e| Error::Transport(e.to_string()))?;
        parse_response(qubo, &text)
    }
}

pub fn remote_roundtrip(qubo: &Qubo, params: &SamplerParams, endpoint: &str) -> Result<SampleSet> {
    RemoteSampler::new(endpoint).sample(qubo, params)
}

fn epoch_ms() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64() * 1e3).unwrap_or(0.0)
}

/// In-process HTTP server answering `/sample` with the simulated annealer.
pub struct LoopbackServer {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl LoopbackServer {
    /// Binds to `addr` (use port 0 for an ephemeral port) and starts serving.
    pub fn start(addr: &str) -> Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(|e| Error::Transport(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Transport("loopback server has no IP address".into()))?;
        let server = Arc::new(server);
        let worker = Arc::clone(&server);
        let handle = std::thread::spawn(move || {
            for request in worker.incoming_requests() {
                handle_request(request);
            }
        });
        Ok(Self { addr, server, handle: Some(handle) })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_request(mut request: tiny_http::Request) {
    let created = epoch_ms();
    if request.method() != &tiny_http::Method::Post || request.url() != "/sample" {
        let _ = request.respond(tiny_http::Response::from_string("not found").with_status_code(404));
        return;
    }
    let mut body = String::new();
    if let Err(e) = request.as_reader().read_to_string(&mut body) {
        let _ = request.respond(tiny_http::Response::from_string(e.to_string()).with_status_code(400));
        return;
    }
    match serve_sample(&body, created) {
        Ok(json) => {
            let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
            let _ = request.respond(tiny_http::Response::from_string(json).with_header(header));
        }
        Err(e) => {
            let _ = request.respond(tiny_http::Response::from_string(e.to_string()).with_status_code(400));
        }
    }
}

fn serve_sample(body: &str, created: f64) -> Result<String> {
    let req: SampleRequest = serde_json::from_str(body).map_err(|e| Error::Protocol(e.to_string()))?;
    let qubo = Qubo::from_interchange(&req.qubo)?;
    let params = SamplerParams {
        num_reads: req.num_reads,
        sweeps: (req.annealing_time_us.round() as usize).max(1),
        seed: req.seed.unwrap_or(0),
        ..Default::default()
    };
    let received = epoch_ms().max(created);
    let started = Instant::now();
    let set = SimulatedAnnealer::default().sample(&qubo, &params)?;
    let sampling = started.elapsed().as_secs_f64() * 1e3;
    let solved = (received + sampling).max(epoch_ms());
    let samples = set.rows().iter().map(|r| r.assignment.to_u8()).collect();
    let energies = set.rows().iter().map(|r| r.energy).collect();
    let occurrences = set.rows().iter().map(|r| r.occurrences).collect();
    let resp = SampleResponse {
        samples,
        energies,
        occurrences,
        timing: RemoteTiming {
            created,
            received,
            solved,
            resolved: epoch_ms().max(solved),
            qpu_programming_ms: 0.0,
            qpu_sampling_ms: sampling,
        },
    };
    Ok(serde_json::to_string(&resp).expect("response serializes"))
}
