//! QUBO construction from an NDI oracle.
//!
//! The energy of a disruption vector `u` is
//!
//! ```text
//! H(u) = -sum_s c_s u_s - sum_{s<r} beta_sr u_s u_r + lambda (sum_s u_s - k)^2
//! ```
//!
//! where `c_s` is the NDI gain of disrupting `s` alone and `beta_sr` is the
//! second difference of NDI over the pair. Each unordered pair is stored and
//! summed once. Minimising `H` with a dominant `lambda` maximises NDI over
//! vectors with exactly `k` disrupted links.
//!
//! Coefficients are stored with their natural (NDI-gain) sign; the minus
//! signs are applied only when evaluating energy.

use crate::delay::{DelayError, NdiOracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuboError {
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("k = {k} exceeds the number of links ({links})")]
    KTooLarge { k: usize, links: usize },
    #[error("link index {index} out of range for {links} links")]
    LinkOutOfRange { index: usize, links: usize },
    #[error("interaction coefficient needs two distinct links, got {0} twice")]
    SameLink(usize),
    #[error("penalty safety factor must be finite and >= 1, got {0}")]
    InvalidSafetyFactor(f64),
    #[error("penalty weight must be finite and > 0, got {0}")]
    InvalidLambda(f64),
    #[error("bit vector has {got} entries, problem has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One stored interaction, `s < r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadTerm {
    pub s: usize,
    pub r: usize,
    pub beta: f64,
}

/// Which link pairs get an interaction coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// Skip extraction for additive oracles (every interaction is exactly
    /// zero), otherwise evaluate all pairs.
    #[default]
    Auto,
    /// Every unordered pair.
    Exact,
    /// All pairs among the `m` links with the largest single-link gain.
    TopM(usize),
    /// `pairs` distinct pairs drawn uniformly with a fixed seed.
    Sample { pairs: usize, seed: u64 },
}

/// Where the stored interactions came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum QuadraticSource {
    /// Oracle is additive; interactions are identically zero and were not
    /// evaluated.
    SkippedAdditive,
    Exact,
    TopM {
        m: usize,
    },
    Sampled {
        pairs: usize,
        seed: u64,
    },
    /// Supplied directly rather than extracted.
    Given,
}

/// Linear and pairwise NDI coefficients for one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub time_step: u32,
    /// Single-link gains, minutes.
    pub linear: Vec<f64>,
    /// Numerically non-zero interactions, sorted by `(s, r)`.
    pub quadratic: Vec<QuadTerm>,
    pub gamma: Option<f64>,
    pub source: QuadraticSource,
}

impl CoefficientSet {
    pub fn link_count(&self) -> usize {
        self.linear.len()
    }

    pub fn max_abs_linear(&self) -> f64 {
        self.linear.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Magnitude below which an extracted interaction is treated as
    /// floating-point noise.
    pub fn zero_tolerance(&self) -> f64 {
        1e-9 * self.max_abs_linear().max(1.0)
    }
}

/// NDI gain from disrupting link `s` alone.
pub fn single_link_coefficient<O: NdiOracle + ?Sized>(
    oracle: &O,
    s: usize,
    time_step: u32,
) -> Result<f64, QuboError> {
    let n = oracle.link_count();
    if s >= n {
        return Err(QuboError::LinkOutOfRange { index: s, links: n });
    }
    let mut u = vec![false; n];
    let base = oracle.ndi(&u, time_step)?;
    u[s] = true;
    Ok(oracle.ndi(&u, time_step)? - base)
}

/// Second difference of NDI over the pair `(s, r)`: positive when joint
/// disruption is worse than the sum of the two alone, negative when the two
/// partly substitute for each other, zero when they are independent.
pub fn interaction_coefficient<O: NdiOracle + ?Sized>(
    oracle: &O,
    s: usize,
    r: usize,
    time_step: u32,
) -> Result<f64, QuboError> {
    let n = oracle.link_count();
    if s == r {
        return Err(QuboError::SameLink(s));
    }
    for i in [s, r] {
        if i >= n {
            return Err(QuboError::LinkOutOfRange { index: i, links: n });
        }
    }
    let mut u = vec![false; n];
    let none = oracle.ndi(&u, time_step)?;
    u[s] = true;
    let only_s = oracle.ndi(&u, time_step)?;
    u[r] = true;
    let both = oracle.ndi(&u, time_step)?;
    u[s] = false;
    let only_r = oracle.ndi(&u, time_step)?;
    Ok(both - only_s - only_r + none)
}

/// Single-link gains for every link, evaluated in parallel.
fn linear_gains<O: NdiOracle + ?Sized>(
    oracle: &O,
    time_step: u32,
) -> Result<(f64, Vec<f64>), QuboError> {
    let n = oracle.link_count();
    let base = oracle.ndi(&vec![false; n], time_step)?;
    let gains = (0..n)
        .into_par_iter()
        .map_init(
            || vec![false; n],
            |u, s| {
                u[s] = true;
                let v = oracle.ndi(u, time_step);
                u[s] = false;
                v.map(|v| v - base)
            },
        )
        .collect::<Result<Vec<f64>, DelayError>>()?;
    Ok((base, gains))
}

/// Interaction coefficients for the given pairs, unfiltered. `singles[s]`
/// must be `NDI(e_s)` and `base` must be `NDI(0)`.
fn pair_terms<O: NdiOracle + ?Sized>(
    oracle: &O,
    time_step: u32,
    base: f64,
    singles: &[f64],
    pairs: &[(usize, usize)],
) -> Result<Vec<QuadTerm>, QuboError> {
    let n = oracle.link_count();
    Ok(pairs
        .par_iter()
        .map_init(
            || vec![false; n],
            |u, &(s, r)| {
                u[s] = true;
                u[r] = true;
                let both = oracle.ndi(u, time_step);
                u[s] = false;
                u[r] = false;
                both.map(|both| QuadTerm {
                    s,
                    r,
                    beta: both - singles[s] - singles[r] + base,
                })
            },
        )
        .collect::<Result<Vec<_>, DelayError>>()?)
}

/// Every unordered pair `(s, r)` with `s < r` that `mode` asks for, given
/// the single-link gains.
pub fn select_pairs(mode: PairMode, linear: &[f64]) -> Vec<(usize, usize)> {
    let n = linear.len();
    match mode {
        PairMode::Auto | PairMode::Exact => (0..n)
            .flat_map(|s| (s + 1..n).map(move |r| (s, r)))
            .collect(),
        PairMode::TopM(m) => {
            let mut top: Vec<usize> = rank_by_gain(linear).into_iter().take(m).collect();
            top.sort_unstable();
            let mut out = Vec::new();
            for (i, &s) in top.iter().enumerate() {
                for &r in &top[i + 1..] {
                    out.push((s, r));
                }
            }
            out
        }
        PairMode::Sample { pairs, seed } => {
            let total = n * n.saturating_sub(1) / 2;
            let want = pairs.min(total);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chosen = BTreeSet::new();
            while chosen.len() < want {
                let s = rng.random_range(0..n);
                let r = rng.random_range(0..n);
                if s != r {
                    chosen.insert((s.min(r), s.max(r)));
                }
            }
            chosen.into_iter().collect()
        }
    }
}

/// Raw interaction coefficients for `pairs`, for inspection. Unlike
/// [`extract_coefficients`], nothing is filtered out.
pub fn interaction_coefficients<O: NdiOracle + ?Sized>(
    oracle: &O,
    time_step: u32,
    pairs: &[(usize, usize)],
) -> Result<Vec<QuadTerm>, QuboError> {
    let n = oracle.link_count();
    for &(s, r) in pairs {
        if s == r {
            return Err(QuboError::SameLink(s));
        }
        if s.max(r) >= n {
            return Err(QuboError::LinkOutOfRange {
                index: s.max(r),
                links: n,
            });
        }
    }
    let (base, gains) = linear_gains(oracle, time_step)?;
    let singles: Vec<f64> = gains.iter().map(|g| g + base).collect();
    pair_terms(oracle, time_step, base, &singles, pairs)
}

/// Extracts single-link gains and, unless the oracle is additive and `mode`
/// is [`PairMode::Auto`], pairwise interactions. Interactions within
/// [`CoefficientSet::zero_tolerance`] of zero are dropped.
pub fn extract_coefficients<O: NdiOracle + ?Sized>(
    oracle: &O,
    time_step: u32,
    mode: PairMode,
    gamma: Option<f64>,
) -> Result<CoefficientSet, QuboError> {
    let (base, linear) = linear_gains(oracle, time_step)?;
    let mut set = CoefficientSet {
        time_step,
        linear,
        quadratic: Vec::new(),
        gamma,
        source: QuadraticSource::SkippedAdditive,
    };
    if mode == PairMode::Auto && oracle.is_additive() {
        return Ok(set);
    }
    let pairs = select_pairs(mode, &set.linear);
    let singles: Vec<f64> = set.linear.iter().map(|g| g + base).collect();
    let tol = set.zero_tolerance();
    let mut terms = pair_terms(oracle, time_step, base, &singles, &pairs)?;
    terms.retain(|t| t.beta.abs() > tol);
    set.quadratic = terms;
    set.source = match mode {
        PairMode::Auto | PairMode::Exact => QuadraticSource::Exact,
        PairMode::TopM(m) => QuadraticSource::TopM { m },
        PairMode::Sample { pairs, seed } => QuadraticSource::Sampled { pairs, seed },
    };
    Ok(set)
}

/// Link indices ordered by decreasing gain; equal gains by increasing index.
pub fn rank_by_gain(linear: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..linear.len()).collect();
    order.sort_by(|&a, &b| linear[b].total_cmp(&linear[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    /// Multiplier applied to the larger of the summed absolute linear and
    /// quadratic coefficients.
    pub safety_factor: f64,
}

impl PenaltyConfig {
    pub const DEFAULT_SAFETY_FACTOR: f64 = 100.0;
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            safety_factor: Self::DEFAULT_SAFETY_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyCalibration {
    pub lambda: f64,
    /// All coefficients were zero, so the scale was floored at 1.
    pub degenerate: bool,
}

/// `lambda = safety * max(sum |c|, sum |beta|)`, with the max floored at 1
/// when every coefficient is zero.
pub fn calibrate_penalty(
    coefficients: &CoefficientSet,
    safety_factor: f64,
) -> Result<PenaltyCalibration, QuboError> {
    if !(safety_factor.is_finite() && safety_factor >= 1.0) {
        return Err(QuboError::InvalidSafetyFactor(safety_factor));
    }
    let linear: f64 = coefficients.linear.iter().map(|c| c.abs()).sum();
    let quadratic: f64 = coefficients.quadratic.iter().map(|t| t.beta.abs()).sum();
    let scale = linear.max(quadratic);
    if scale > 0.0 {
        Ok(PenaltyCalibration {
            lambda: safety_factor * scale,
            degenerate: false,
        })
    } else {
        Ok(PenaltyCalibration {
            lambda: safety_factor,
            degenerate: true,
        })
    }
}

/// A penalty-folded QUBO for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    time_step: u32,
    k: usize,
    lambda: f64,
    gamma: Option<f64>,
    degenerate_penalty: bool,
    linear: Vec<f64>,
    quadratic: Vec<QuadTerm>,
    neighbours: Vec<Vec<(usize, f64)>>,
}

/// The fully expanded quadratic form
/// `constant + sum_i diag_i u_i + sum_{i<j} (pair_penalty + off_ij) u_i u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedQubo {
    pub constant: f64,
    pub diag: Vec<f64>,
    /// Added to every pair (from the cardinality penalty).
    pub pair_penalty: f64,
    /// Pair-specific terms, `-beta`.
    pub off_diagonal: Vec<QuadTerm>,
}

impl ExpandedQubo {
    pub fn evaluate(&self, bits: &[bool]) -> f64 {
        let ones: Vec<usize> = (0..bits.len()).filter(|&i| bits[i]).collect();
        let m = ones.len() as f64;
        let mut e = self.constant;
        e += ones.iter().map(|&i| self.diag[i]).sum::<f64>();
        e += self.pair_penalty * m * (m - 1.0) / 2.0;
        e += self
            .off_diagonal
            .iter()
            .filter(|t| bits[t.s] && bits[t.r])
            .map(|t| t.beta)
            .sum::<f64>();
        e
    }
}

impl QuboProblem {
    /// Assembles a problem from raw coefficients. Quadratic terms are
    /// normalised to `s < r` and merged; diagonal entries are rejected.
    pub fn from_parts(
        time_step: u32,
        k: usize,
        lambda: f64,
        gamma: Option<f64>,
        linear: Vec<f64>,
        quadratic: Vec<QuadTerm>,
    ) -> Result<Self, QuboError> {
        let n = linear.len();
        if k > n {
            return Err(QuboError::KTooLarge { k, links: n });
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(QuboError::InvalidLambda(lambda));
        }
        let mut merged: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
        for t in quadratic {
            if t.s == t.r {
                return Err(QuboError::SameLink(t.s));
            }
            if t.s.max(t.r) >= n {
                return Err(QuboError::LinkOutOfRange {
                    index: t.s.max(t.r),
                    links: n,
                });
            }
            *merged.entry((t.s.min(t.r), t.s.max(t.r))).or_insert(0.0) += t.beta;
        }
        let quadratic: Vec<QuadTerm> = merged
            .into_iter()
            .map(|((s, r), beta)| QuadTerm { s, r, beta })
            .collect();
        let mut neighbours = vec![Vec::new(); n];
        for t in &quadratic {
            neighbours[t.s].push((t.r, t.beta));
            neighbours[t.r].push((t.s, t.beta));
        }
        Ok(QuboProblem {
            time_step,
            k,
            lambda,
            gamma,
            degenerate_penalty: false,
            linear,
            quadratic,
            neighbours,
        })
    }

    pub fn from_coefficients(
        coefficients: CoefficientSet,
        k: usize,
        penalty: &PenaltyConfig,
    ) -> Result<Self, QuboError> {
        let cal = calibrate_penalty(&coefficients, penalty.safety_factor)?;
        let mut p = Self::from_parts(
            coefficients.time_step,
            k,
            cal.lambda,
            coefficients.gamma,
            coefficients.linear,
            coefficients.quadratic,
        )?;
        p.degenerate_penalty = cal.degenerate;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn time_step(&self) -> u32 {
        self.time_step
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn degenerate_penalty(&self) -> bool {
        self.degenerate_penalty
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic(&self) -> &[QuadTerm] {
        &self.quadratic
    }

    pub fn is_additive(&self) -> bool {
        self.quadratic.is_empty()
    }

    /// `(neighbour, beta)` pairs of link `s`.
    pub fn neighbours(&self, s: usize) -> &[(usize, f64)] {
        &self.neighbours[s]
    }

    fn check_len(&self, bits: &[bool]) -> Result<(), QuboError> {
        if bits.len() == self.len() {
            Ok(())
        } else {
            Err(QuboError::LengthMismatch {
                expected: self.len(),
                got: bits.len(),
            })
        }
    }

    /// NDI gain captured by the objective terms: `sum c u + sum beta u u`.
    pub fn gain(&self, bits: &[bool]) -> Result<f64, QuboError> {
        self.check_len(bits)?;
        Ok(self.gain_unchecked(bits))
    }

    pub(crate) fn gain_unchecked(&self, bits: &[bool]) -> f64 {
        let linear: f64 = self
            .linear
            .iter()
            .zip(bits)
            .filter(|(_, &b)| b)
            .map(|(c, _)| c)
            .sum();
        let pairs: f64 = self
            .quadratic
            .iter()
            .filter(|t| bits[t.s] && bits[t.r])
            .map(|t| t.beta)
            .sum();
        linear + pairs
    }

    /// `H(u)` evaluated term by term from the unexpanded form.
    pub fn energy(&self, bits: &[bool]) -> Result<f64, QuboError> {
        self.check_len(bits)?;
        Ok(self.energy_unchecked(bits))
    }

    pub(crate) fn energy_unchecked(&self, bits: &[bool]) -> f64 {
        let ones = bits.iter().filter(|b| **b).count() as f64;
        let violation = ones - self.k as f64;
        -self.gain_unchecked(bits) + self.lambda * violation * violation
    }

    /// Penalty folded into the quadratic form: linear `lambda (1 - 2k)` per
    /// variable, `2 lambda` per pair, constant `lambda k^2`.
    pub fn expanded(&self) -> ExpandedQubo {
        let k = self.k as f64;
        ExpandedQubo {
            constant: self.lambda * k * k,
            diag: self
                .linear
                .iter()
                .map(|c| -c + self.lambda * (1.0 - 2.0 * k))
                .collect(),
            pair_penalty: 2.0 * self.lambda,
            off_diagonal: self
                .quadratic
                .iter()
                .map(|t| QuadTerm {
                    s: t.s,
                    r: t.r,
                    beta: -t.beta,
                })
                .collect(),
        }
    }

    /// Largest absolute linear coefficient.
    pub fn max_abs_linear(&self) -> f64 {
        self.linear.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Writes the line-oriented interchange format:
    ///
    /// ```text
    /// c <comment>
    /// p <L> <k> <lambda> <time_step> <gamma or ->
    /// <i> <c_i>            one line per variable, i = 0..L-1
    /// <i> <j> <beta_ij>    one line per stored pair, i < j
    /// ```
    ///
    /// Coefficients carry NDI-gain sign; the energy is
    /// `-sum c_i u_i - sum beta_ij u_i u_j + lambda (sum u_i - k)^2`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), QuboError> {
        writeln!(w, "c critlink qubo v1")?;
        writeln!(
            w,
            "c H(u) = -sum_i c_i u_i - sum_(i<j) b_ij u_i u_j + lambda (sum_i u_i - k)^2"
        )?;
        let gamma = self.gamma.map_or_else(|| "-".to_owned(), |g| g.to_string());
        writeln!(
            w,
            "p {} {} {} {} {}",
            self.len(),
            self.k,
            self.lambda,
            self.time_step,
            gamma
        )?;
        for (i, c) in self.linear.iter().enumerate() {
            writeln!(w, "{i} {c}")?;
        }
        for t in &self.quadratic {
            writeln!(w, "{} {} {}", t.s, t.r, t.beta)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, QuboError> {
        let mut header: Option<(usize, usize, f64, u32, Option<f64>)> = None;
        let mut linear: Vec<Option<f64>> = Vec::new();
        let mut quadratic = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| QuboError::Parse {
                line: line_no,
                message,
            };
            match tokens.as_slice() {
                [] => continue,
                ["c", ..] => continue,
                ["p", n, k, lambda, t, gamma] => {
                    if header.is_some() {
                        return Err(err("duplicate header".into()));
                    }
                    let n: usize = n.parse().map_err(|_| err(format!("bad size `{n}`")))?;
                    let k: usize = k.parse().map_err(|_| err(format!("bad k `{k}`")))?;
                    let lambda: f64 = lambda
                        .parse()
                        .map_err(|_| err(format!("bad lambda `{lambda}`")))?;
                    let t: u32 = t.parse().map_err(|_| err(format!("bad time step `{t}`")))?;
                    let gamma = match *gamma {
                        "-" => None,
                        g => Some(g.parse().map_err(|_| err(format!("bad gamma `{g}`")))?),
                    };
                    header = Some((n, k, lambda, t, gamma));
                    linear = vec![None; n];
                }
                ["p", ..] => return Err(err("header needs 5 fields".into())),
                [i, c] => {
                    if header.is_none() {
                        return Err(err("term before header".into()));
                    }
                    let i: usize = i.parse().map_err(|_| err(format!("bad index `{i}`")))?;
                    let c: f64 = c
                        .parse()
                        .map_err(|_| err(format!("bad coefficient `{c}`")))?;
                    let slot = linear
                        .get_mut(i)
                        .ok_or_else(|| err(format!("index {i} out of range")))?;
                    if slot.replace(c).is_some() {
                        return Err(err(format!("duplicate linear term {i}")));
                    }
                }
                [i, j, q] => {
                    if header.is_none() {
                        return Err(err("term before header".into()));
                    }
                    let i: usize = i.parse().map_err(|_| err(format!("bad index `{i}`")))?;
                    let j: usize = j.parse().map_err(|_| err(format!("bad index `{j}`")))?;
                    let q: f64 = q
                        .parse()
                        .map_err(|_| err(format!("bad coefficient `{q}`")))?;
                    quadratic.push(QuadTerm {
                        s: i,
                        r: j,
                        beta: q,
                    });
                }
                _ => return Err(err(format!("unrecognised line `{line}`"))),
            }
        }
        let (_, k, lambda, t, gamma) = header.ok_or(QuboError::Parse {
            line: 0,
            message: "missing header".into(),
        })?;
        let linear = linear
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                c.ok_or(QuboError::Parse {
                    line: 0,
                    message: format!("missing linear term {i}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(t, k, lambda, gamma, linear, quadratic)
    }
}

/// Extracts coefficients at `time_step`, calibrates the penalty and folds
/// both into a problem with cardinality `k`.
pub fn build_qubo<O: NdiOracle + ?Sized>(
    oracle: &O,
    time_step: u32,
    k: usize,
    penalty: &PenaltyConfig,
    pairs: PairMode,
    gamma: Option<f64>,
) -> Result<QuboProblem, QuboError> {
    let n = oracle.link_count();
    if k > n {
        return Err(QuboError::KTooLarge { k, links: n });
    }
    let coefficients = extract_coefficients(oracle, time_step, pairs, gamma)?;
    QuboProblem::from_coefficients(coefficients, k, penalty)
}
