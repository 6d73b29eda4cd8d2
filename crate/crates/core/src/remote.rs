//! HTTP client for a remote QUBO sampler speaking a minimal JSON
//! protocol, so hosted annealers can stand in for the local solvers.
//!
//! The wire model is the Ising expansion of the problem: for spins
//! g in {-1,+1}^n the server minimizes
//! `sum_{i<j} quadratic[i][j] g_i g_j + sum_i linear[i] g_i + offset`.
//! A [`QuboProblem`] maps onto it with `quadratic = 2 q[i][j]`,
//! `linear = s` and `offset + trace(q)`, which reproduces the QUBO
//! energy exactly, so reported energies are directly comparable.
//!
//! The client trusts nothing: every returned sample's energy is
//! recomputed locally, samples that deviate are dropped, and the result
//! is assembled from the recomputed values only. Requests are
//! synchronous, so each endpoint has at most one request in flight.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo::{energy, QuboProblem, QuboSolver, SolveResult, SpinVector};

/// Reported sample energies may deviate this much from local
/// recomputation before the sample is rejected.
pub const REMOTE_ENERGY_TOL: f64 = 1e-6;

/// Transport failures are retried this many times after the first
/// attempt, with exponentially growing delays.
pub const REMOTE_RETRIES: u32 = 3;

const RETRY_BASE_DELAY_MS: u64 = 50;

/// Where and how to reach a remote sampler.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplerEndpoint {
    /// Server root; the client posts to `{base_url}/solve`.
    pub base_url: String,
    /// Sent as `Authorization: Bearer <token>` when present.
    #[serde(default)]
    pub auth_token: Option<String>,
    /// Samples requested per solve.
    pub num_reads: u64,
    /// Overall per-request timeout in milliseconds.
    pub timeout_ms: u64,
}

impl SamplerEndpoint {
    pub fn validate(&self) -> Result<()> {
        if self.base_url.is_empty() {
            return Err(Error::InvalidArgument("base_url must not be empty".into()));
        }
        if self.num_reads == 0 {
            return Err(Error::InvalidArgument("num_reads must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(Error::InvalidArgument("timeout_ms must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct WireRequest {
    n: usize,
    linear: Vec<f64>,
    quadratic: Vec<(usize, usize, f64)>,
    offset: f64,
    num_reads: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    samples: Vec<Vec<i8>>,
    energies: Vec<f64>,
}

fn wire_request(problem: &QuboProblem, num_reads: u64) -> WireRequest {
    let n = problem.n;
    let mut quadratic = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 2.0 * problem.q[(i, j)];
            if v != 0.0 {
                quadratic.push((i, j, v));
            }
        }
    }
    let trace: f64 = (0..n).map(|i| problem.q[(i, i)]).sum();
    WireRequest {
        n,
        linear: problem.s.iter().copied().collect(),
        quadratic,
        offset: problem.offset + trace,
        num_reads,
    }
}

/// Builds a [`SolveResult`] from the server's reply, keeping only
/// samples whose reported energy survives local recomputation.
fn validate_response(problem: &QuboProblem, response: WireResponse) -> Result<SolveResult> {
    if response.samples.len() != response.energies.len() {
        return Err(Error::Protocol(format!(
            "{} samples but {} energies",
            response.samples.len(),
            response.energies.len()
        )));
    }
    if response.samples.is_empty() {
        return Err(Error::Protocol("server returned no samples".into()));
    }
    let total = response.samples.len();
    let mut kept: Vec<(SpinVector, f64)> = Vec::with_capacity(total);
    for (raw, reported) in response.samples.into_iter().zip(response.energies) {
        let g = SpinVector::new(raw).map_err(|e| Error::Protocol(format!("bad sample: {e}")))?;
        if g.len() != problem.n {
            return Err(Error::Protocol(format!(
                "sample has {} spins, problem has {}",
                g.len(),
                problem.n
            )));
        }
        let recomputed = energy(problem, &g)?;
        if !reported.is_finite() || (reported - recomputed).abs() > REMOTE_ENERGY_TOL {
            continue;
        }
        kept.push((g, recomputed));
    }
    if kept.is_empty() {
        return Err(Error::Integrity(format!(
            "all {total} samples failed energy validation"
        )));
    }
    kept.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("energies are finite").then(a.0.cmp(&b.0)));
    let (best, best_energy) = kept[0].clone();
    Ok(SolveResult {
        best,
        best_energy,
        samples: kept,
        reads: total as u64,
    })
}

enum Attempt {
    Reply(WireResponse),
    Retry(String),
}

fn post_once(endpoint: &SamplerEndpoint, body: &WireRequest) -> Result<Attempt> {
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_millis(endpoint.timeout_ms))
        .build();
    let url = format!("{}/solve", endpoint.base_url.trim_end_matches('/'));
    let mut request = agent.post(&url);
    if let Some(token) = &endpoint.auth_token {
        request = request.set("Authorization", &format!("Bearer {token}"));
    }
    match request.send_json(body) {
        Ok(reply) => {
            let parsed: WireResponse = reply
                .into_json()
                .map_err(|e| Error::Protocol(format!("unreadable response body: {e}")))?;
            Ok(Attempt::Reply(parsed))
        }
        Err(ureq::Error::Status(code, _)) => {
            Err(Error::Protocol(format!("server answered with HTTP status {code}")))
        }
        Err(ureq::Error::Transport(t)) => Ok(Attempt::Retry(t.to_string())),
    }
}

/// Posts the problem to the endpoint, retries transport failures with
/// exponential backoff, and validates every returned sample by local
/// energy recomputation.
pub fn remote_solve(problem: &QuboProblem, endpoint: &SamplerEndpoint) -> Result<SolveResult> {
    endpoint.validate()?;
    let body = wire_request(problem, endpoint.num_reads);
    let attempts = REMOTE_RETRIES + 1;
    let mut delay = Duration::from_millis(RETRY_BASE_DELAY_MS);
    let mut last_failure = String::new();
    for attempt in 1..=attempts {
        match post_once(endpoint, &body)? {
            Attempt::Reply(response) => return validate_response(problem, response),
            Attempt::Retry(msg) => {
                last_failure = msg;
                if attempt < attempts {
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }
    Err(Error::Transport {
        attempts,
        msg: last_failure,
    })
}

/// [`QuboSolver`] adapter for a remote endpoint. The seed is ignored;
/// the server owns its randomness.
#[derive(Clone, Debug)]
pub struct RemoteSolver {
    pub endpoint: SamplerEndpoint,
}

impl QuboSolver for RemoteSolver {
    fn solve(&self, problem: &QuboProblem, _seed: u64) -> Result<SolveResult> {
        remote_solve(problem, &self.endpoint)
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}
