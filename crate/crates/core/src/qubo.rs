//! Quadratic unconstrained binary optimization over spin variables.
//!
//! A problem is minimized over vectors `g` in `{-1, +1}^n` with energy
//! `g' Q g + s' g + offset`. Two solvers are provided: an exact
//! enumerator for small `n` and simulated annealing for everything else.
//! Both report the states they visited so callers can inspect the
//! low-energy landscape, not just the winner.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest problem the exhaustive solver will accept by default.
pub const EXHAUSTIVE_CAP: usize = 24;

/// Problem size up to which the exhaustive solver records every state
/// it visited as a sample.
pub const EXHAUSTIVE_SAMPLE_CAP: usize = 12;

/// A spin assignment: every entry is -1 or +1.
///
/// Ordering is lexicographic with -1 before +1 and the first coordinate
/// most significant, which is what the derived `Ord` on `Vec<i8>` gives.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpinVector(Vec<i8>);

impl SpinVector {
    /// Builds a spin vector, rejecting any entry other than -1 or +1.
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::InvalidArgument(format!(
                "spin entries must be -1 or +1, got {bad}"
            )));
        }
        Ok(SpinVector(spins))
    }

    /// All -1 entries.
    pub fn all_minus(n: usize) -> Self {
        SpinVector(vec![-1; n])
    }

    /// All +1 entries.
    pub fn all_plus(n: usize) -> Self {
        SpinVector(vec![1; n])
    }

    /// The `k`-th spin vector in lexicographic order: bit `n-1-i` of `k`
    /// decides coordinate `i`, with a set bit mapping to +1. Index 0 is
    /// all -1 and index `2^n - 1` is all +1.
    pub fn from_index(k: u64, n: usize) -> Self {
        let spins = (0..n)
            .map(|i| if k >> (n - 1 - i) & 1 == 1 { 1 } else { -1 })
            .collect();
        SpinVector(spins)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    /// Indices holding +1, in ascending order.
    pub fn plus_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| i)
            .collect()
    }

    /// The same assignment as a float vector for linear algebra.
    pub fn to_f64(&self) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|&v| f64::from(v)))
    }

    fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }
}

impl std::fmt::Display for SpinVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", if *v == 1 { "+1" } else { "-1" })?;
        }
        write!(f, ")")
    }
}

/// A QUBO instance in spin form.
///
/// `q` must be symmetric; `offset` is carried through so reported
/// energies stay comparable to whatever residual the problem encodes.
#[derive(Clone, Debug, PartialEq)]
pub struct QuboProblem {
    pub n: usize,
    pub q: DMatrix<f64>,
    pub s: DVector<f64>,
    pub offset: f64,
}

impl QuboProblem {
    /// Builds a problem, checking shapes and symmetry of `q`.
    pub fn new(q: DMatrix<f64>, s: DVector<f64>, offset: f64) -> Result<Self> {
        let n = s.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "QuboProblem::new q rows",
                expected: n,
                actual: q.nrows().max(q.ncols()),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "q must be symmetric: q[{i}][{j}] = {} but q[{j}][{i}] = {}",
                        q[(i, j)],
                        q[(j, i)]
                    )));
                }
            }
        }
        Ok(QuboProblem { n, q, s, offset })
    }
}

/// Outcome of a solver run.
#[derive(Clone, Debug)]
pub struct SolveResult {
    /// Lowest-energy assignment found; ties broken toward the
    /// lexicographically smallest vector.
    pub best: SpinVector,
    /// Energy of `best`, recomputed from the problem to wash out any
    /// incremental drift.
    pub best_energy: f64,
    /// Visited states with their energies, sorted by `(energy, state)`
    /// ascending. Exhaustive runs include every state only when
    /// `n <= EXHAUSTIVE_SAMPLE_CAP`; annealing includes one entry per
    /// restart.
    pub samples: Vec<(SpinVector, f64)>,
    /// How many candidate reads produced `samples`' provenance: states
    /// enumerated, restarts run, or reads reported by a remote sampler.
    pub reads: u64,
}

/// Anything that can minimize a QUBO. The seed makes runs reproducible;
/// solvers that are deterministic anyway may ignore it.
pub trait QuboSolver {
    fn solve(&self, problem: &QuboProblem, seed: u64) -> Result<SolveResult>;

    /// Short human-readable name for logs and reports.
    fn name(&self) -> &'static str;
}

/// Energy `g' Q g + s' g + offset` of an assignment.
pub fn energy(problem: &QuboProblem, g: &SpinVector) -> Result<f64> {
    if g.len() != problem.n {
        return Err(Error::DimensionMismatch {
            context: "energy assignment length",
            expected: problem.n,
            actual: g.len(),
        });
    }
    let gf = g.to_f64();
    Ok((gf.transpose() * &problem.q * &gf)[(0, 0)] + problem.s.dot(&gf) + problem.offset)
}

/// Exact minimization by Gray-code enumeration of all `2^n` states.
///
/// Successive states differ in one spin, so each step updates the
/// energy in O(n) via the local field of the flipped coordinate. Ties
/// go to the lexicographically smallest assignment. The full sample
/// list is kept only for `n <= EXHAUSTIVE_SAMPLE_CAP`; above
/// `EXHAUSTIVE_CAP` the call is refused.
pub fn solve_exhaustive(problem: &QuboProblem) -> Result<SolveResult> {
    solve_exhaustive_capped(problem, EXHAUSTIVE_CAP)
}

fn solve_exhaustive_capped(problem: &QuboProblem, cap: usize) -> Result<SolveResult> {
    let n = problem.n;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cannot solve a zero-variable problem".into(),
        ));
    }
    if n > cap {
        return Err(Error::Capacity { n, cap });
    }

    let keep_samples = n <= EXHAUSTIVE_SAMPLE_CAP;
    let total: u64 = 1 << n;

    // Start from all -1 and walk the binary-reflected Gray code; flipping
    // bit tz(k) at step k visits every state exactly once.
    let mut g = SpinVector::all_minus(n);
    let mut gf = g.to_f64();
    let mut fields = &problem.q * &gf;
    let mut e = energy(problem, &g)?;

    let mut best = g.clone();
    let mut best_e = e;
    let mut samples = Vec::new();
    if keep_samples {
        samples.push((g.clone(), e));
    }

    for k in 1..total {
        let i = k.trailing_zeros() as usize;
        // Flipping spin i changes the energy by -2 g_i (2 (h_i - Q_ii g_i) + s_i)
        // where h_i is the current local field Q g at i.
        let gi = f64::from(g.spins()[i]);
        let delta = -2.0 * gi * (2.0 * (fields[i] - problem.q[(i, i)] * gi) + problem.s[i]);
        g.flip(i);
        let new_gi = f64::from(g.spins()[i]);
        gf[i] = new_gi;
        // g_i moved by 2 new_gi, so every field picks up 2 Q_ji new_gi.
        fields += problem.q.column(i) * (2.0 * new_gi);
        e += delta;

        if e < best_e || (e == best_e && g < best) {
            best_e = e;
            best = g.clone();
        }
        if keep_samples {
            samples.push((g.clone(), e));
        }
    }

    let best_energy = energy(problem, &best)?;
    if keep_samples {
        for (state, se) in samples.iter_mut() {
            *se = energy(problem, state)?;
        }
        samples.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
    }

    Ok(SolveResult {
        best,
        best_energy,
        samples,
        reads: total,
    })
}

/// Simulated annealing schedule and effort knobs. Omitted fields fall
/// back to the defaults when deserialized.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SaParams {
    /// Full sweeps (one proposed flip per coordinate) per restart.
    pub sweeps: usize,
    /// Independent restarts; the best state across restarts wins.
    pub restarts: usize,
    /// Starting temperature. `None` picks `n * max|coefficient|`,
    /// floored at one, which accepts most uphill moves early on.
    pub t_hot: Option<f64>,
    /// Final temperature of the geometric cooling schedule.
    pub t_cold: f64,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams {
            sweeps: 1000,
            restarts: 32,
            t_hot: None,
            t_cold: 1e-3,
        }
    }
}

impl SaParams {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::InvalidArgument("sweeps must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        if !(self.t_cold > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_cold must be positive, got {}",
                self.t_cold
            )));
        }
        if let Some(th) = self.t_hot {
            if !(th > self.t_cold) {
                return Err(Error::InvalidArgument(format!(
                    "t_hot ({th}) must exceed t_cold ({})",
                    self.t_cold
                )));
            }
        }
        Ok(())
    }

    fn resolve_t_hot(&self, problem: &QuboProblem) -> f64 {
        match self.t_hot {
            Some(th) => th,
            None => {
                let mut scale: f64 = 0.0;
                for v in problem.q.iter() {
                    scale = scale.max(v.abs());
                }
                for v in problem.s.iter() {
                    scale = scale.max(v.abs());
                }
                (scale * problem.n as f64).max(1.0).max(10.0 * self.t_cold)
            }
        }
    }
}

/// Derives an independent RNG stream for (seed, index) pairs using the
/// splitmix64 finalizer, so restarts and per-column solves never share
/// a stream.
pub fn derive_stream(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Simulated annealing with Metropolis sweeps and a geometric cooling
/// schedule.
///
/// Restart 0 starts from all +1 and restart 1 from all -1, so with at
/// least two restarts the answer is never worse than the better of the
/// two constant assignments; further restarts start at random states.
/// Each restart draws from its own RNG stream derived from
/// `(seed, restart)`, so results are reproducible and independent of
/// any execution interleaving.
pub fn solve_sa(problem: &QuboProblem, params: &SaParams, seed: u64) -> Result<SolveResult> {
    params.validate()?;
    let n = problem.n;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cannot solve a zero-variable problem".into(),
        ));
    }

    let t_hot = params.resolve_t_hot(problem);
    let ratio = params.t_cold / t_hot;

    let mut samples: Vec<(SpinVector, f64)> = Vec::with_capacity(params.restarts);
    for restart in 0..params.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_stream(seed, restart as u64));
        let mut g = match restart {
            0 => SpinVector::all_plus(n),
            1 => SpinVector::all_minus(n),
            _ => {
                let spins = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
                SpinVector(spins)
            }
        };
        let mut fields = &problem.q * g.to_f64();
        let mut e = energy(problem, &g)?;
        let mut best = g.clone();
        let mut best_e = e;

        for sweep in 0..params.sweeps {
            let t = if params.sweeps == 1 {
                t_hot
            } else {
                t_hot * ratio.powf(sweep as f64 / (params.sweeps - 1) as f64)
            };
            for i in 0..n {
                let gi = f64::from(g.spins()[i]);
                let delta =
                    -2.0 * gi * (2.0 * (fields[i] - problem.q[(i, i)] * gi) + problem.s[i]);
                if delta <= 0.0 || rng.gen::<f64>() < (-delta / t).exp() {
                    g.flip(i);
                    let new_gi = f64::from(g.spins()[i]);
                    fields += problem.q.column(i) * (2.0 * new_gi);
                    e += delta;
                    if e < best_e || (e == best_e && g < best) {
                        best_e = e;
                        best = g.clone();
                    }
                }
            }
        }

        let exact = energy(problem, &best)?;
        samples.push((best, exact));
    }

    samples.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let (best, best_energy) = samples[0].clone();
    Ok(SolveResult {
        best,
        best_energy,
        samples,
        reads: params.restarts as u64,
    })
}

/// Exhaustive solver with a configurable size cap.
#[derive(Clone, Debug)]
pub struct ExhaustiveSolver {
    pub max_n: usize,
}

impl Default for ExhaustiveSolver {
    fn default() -> Self {
        ExhaustiveSolver { max_n: EXHAUSTIVE_CAP }
    }
}

impl QuboSolver for ExhaustiveSolver {
    fn solve(&self, problem: &QuboProblem, _seed: u64) -> Result<SolveResult> {
        solve_exhaustive_capped(problem, self.max_n)
    }

    fn name(&self) -> &'static str {
        "exhaustive"
    }
}

/// Simulated-annealing solver carrying its parameters.
#[derive(Clone, Debug, Default)]
pub struct SaSolver {
    pub params: SaParams,
}

impl QuboSolver for SaSolver {
    fn solve(&self, problem: &QuboProblem, seed: u64) -> Result<SolveResult> {
        solve_sa(problem, &self.params, seed)
    }

    fn name(&self) -> &'static str {
        "sa"
    }
}

/// Jaccard similarity between the +1 index sets of two assignments.
/// Two all--1 vectors have identical (empty) support and score 1.
pub fn jaccard(a: &SpinVector, b: &SpinVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "jaccard operand length",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.spins().iter().zip(b.spins()) {
        match (x == 1, y == 1) {
            (true, true) => {
                inter += 1;
                union += 1;
            }
            (false, false) => {}
            _ => union += 1,
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Serializes a problem in the line-oriented text form: `n`, the
/// nonzero upper-triangle `q` entries, the nonzero `l` entries and a
/// trailing `offset` when nonzero. Floats print in shortest
/// round-trip form, so parse(format(p)) reproduces `p` exactly.
pub fn format_qubo_text(problem: &QuboProblem) -> String {
    let mut out = String::new();
    out.push_str(&format!("n {}\n", problem.n));
    for i in 0..problem.n {
        for j in i..problem.n {
            let v = problem.q[(i, j)];
            if v != 0.0 {
                out.push_str(&format!("q {i} {j} {v}\n"));
            }
        }
    }
    for i in 0..problem.n {
        let v = problem.s[i];
        if v != 0.0 {
            out.push_str(&format!("l {i} {v}\n"));
        }
    }
    if problem.offset != 0.0 {
        out.push_str(&format!("offset {}\n", problem.offset));
    }
    out
}

/// Parses the text form produced by [`format_qubo_text`].
///
/// Blank lines and `#` comments are skipped. The `n` line must come
/// first; `q i j v` requires `i <= j` and each pair may appear once, as
/// may each `l` index and the `offset` line. Indices out of range,
/// unknown directives and malformed numbers are reported with their
/// line number.
pub fn parse_qubo_text(text: &str) -> Result<QuboProblem> {
    let err = |line: usize, msg: String| Error::Parse {
        path: "<qubo text>".into(),
        line,
        msg,
    };

    let mut n: Option<usize> = None;
    let mut q: Option<DMatrix<f64>> = None;
    let mut s: Option<DVector<f64>> = None;
    let mut seen_q: Vec<(usize, usize)> = Vec::new();
    let mut seen_l: Vec<usize> = Vec::new();
    let mut offset: Option<f64> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let parse_usize = |tok: &str| {
            tok.parse::<usize>()
                .map_err(|_| err(lineno, format!("expected an index, got {tok:?}")))
        };
        let parse_f64 = |tok: &str| {
            tok.parse::<f64>()
                .map_err(|_| err(lineno, format!("expected a number, got {tok:?}")))
        };
        let check_index = |i: usize, n: usize| {
            if i >= n {
                Err(err(lineno, format!("index {i} out of range for n = {n}")))
            } else {
                Ok(())
            }
        };
        match tokens[0] {
            "n" => {
                if n.is_some() {
                    return Err(err(lineno, "duplicate n line".into()));
                }
                if tokens.len() != 2 {
                    return Err(err(lineno, "n takes exactly one value".into()));
                }
                let size = parse_usize(tokens[1])?;
                if size == 0 {
                    return Err(err(lineno, "n must be positive".into()));
                }
                n = Some(size);
                q = Some(DMatrix::zeros(size, size));
                s = Some(DVector::zeros(size));
            }
            "q" => {
                let size = n.ok_or_else(|| err(lineno, "q entry before the n line".into()))?;
                if tokens.len() != 4 {
                    return Err(err(lineno, "q takes two indices and a value".into()));
                }
                let i = parse_usize(tokens[1])?;
                let j = parse_usize(tokens[2])?;
                check_index(i, size)?;
                check_index(j, size)?;
                if i > j {
                    return Err(err(
                        lineno,
                        format!("q indices must satisfy i <= j, got {i} > {j}"),
                    ));
                }
                if seen_q.contains(&(i, j)) {
                    return Err(err(lineno, format!("duplicate q entry for ({i}, {j})")));
                }
                seen_q.push((i, j));
                let v = parse_f64(tokens[3])?;
                let qm = q.as_mut().unwrap();
                qm[(i, j)] = v;
                qm[(j, i)] = v;
            }
            "l" => {
                let size = n.ok_or_else(|| err(lineno, "l entry before the n line".into()))?;
                if tokens.len() != 3 {
                    return Err(err(lineno, "l takes one index and a value".into()));
                }
                let i = parse_usize(tokens[1])?;
                check_index(i, size)?;
                if seen_l.contains(&i) {
                    return Err(err(lineno, format!("duplicate l entry for {i}")));
                }
                seen_l.push(i);
                s.as_mut().unwrap()[i] = parse_f64(tokens[2])?;
            }
            "offset" => {
                if n.is_none() {
                    return Err(err(lineno, "offset before the n line".into()));
                }
                if offset.is_some() {
                    return Err(err(lineno, "duplicate offset line".into()));
                }
                if tokens.len() != 2 {
                    return Err(err(lineno, "offset takes exactly one value".into()));
                }
                offset = Some(parse_f64(tokens[1])?);
            }
            other => {
                return Err(err(lineno, format!("unknown directive {other:?}")));
            }
        }
    }

    match (n, q, s) {
        (Some(_), Some(q), Some(s)) => QuboProblem::new(q, s, offset.unwrap_or(0.0)),
        _ => Err(Error::Parse {
            path: "<qubo text>".into(),
            line: text.lines().count(),
            msg: "missing n line".into(),
        }),
    }
}
