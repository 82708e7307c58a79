//! Solvers for [`QuboProblem`]s.
//!
//! - [`solve_brute_force`]: exact enumeration of all `k`-subsets, the ground
//!   truth for small instances.
//! - [`solve_topk_additive`]: exact when there are no pairwise terms; picks
//!   the `k` largest single-link gains.
//! - [`solve_annealing`]: simulated annealing, either over feasible sets
//!   with swap moves or over all bit vectors with single flips against the
//!   penalty-folded energy.

use crate::delay::DisruptionVector;
use crate::qubo::{rank_by_gain, QuboError, QuboProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

/// Largest number of feasible subsets [`solve_brute_force`] will enumerate.
pub const MAX_BRUTE_FORCE_SUBSETS: u128 = 10_000_000;
/// Largest variable count [`exhaustive_scan`] accepts.
pub const MAX_EXHAUSTIVE_VARIABLES: usize = 24;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error("{subsets} candidate subsets exceed the enumeration limit of {limit}; use annealing")]
    TooLarge { subsets: u128, limit: u128 },
    #[error("top-k selection is only exact without pairwise terms ({0} present)")]
    NotAdditive(usize),
    #[error("invalid annealing schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Brute,
    Topk,
    AnnealPenalty,
    AnnealSwap,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Brute => "brute",
            Method::Topk => "topk",
            Method::AnnealPenalty => "anneal-penalty",
            Method::AnnealSwap => "anneal-swap",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "brute" => Ok(Method::Brute),
            "topk" => Ok(Method::Topk),
            "anneal-penalty" => Ok(Method::AnnealPenalty),
            "anneal-swap" => Ok(Method::AnnealSwap),
            other => Err(format!(
                "unknown method `{other}` (expected brute, topk, anneal-penalty or anneal-swap)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnealMode {
    /// Single bit flips on the penalty-folded energy, repaired afterwards.
    Penalty,
    /// Exchange one selected link for one unselected link; always feasible.
    Swap,
}

/// Geometric cooling schedule. One sweep is `L` proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub initial_temperature: f64,
    pub final_temperature: f64,
    pub sweeps: usize,
    pub restarts: usize,
    pub mode: AnnealMode,
}

impl AnnealSchedule {
    pub const DEFAULT_SWEEPS: usize = 2_000;
    pub const DEFAULT_RESTARTS: usize = 10;

    /// Cools from the largest single-link gain down to a thousandth of it
    /// (at least 1e-3).
    pub fn default_for(problem: &QuboProblem, mode: AnnealMode) -> Self {
        let scale = problem.max_abs_linear();
        let final_temperature = 1e-3 * scale.max(1.0);
        AnnealSchedule {
            initial_temperature: scale.max(10.0 * final_temperature),
            final_temperature,
            sweeps: Self::DEFAULT_SWEEPS,
            restarts: Self::DEFAULT_RESTARTS,
            mode,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let (t0, tf) = (self.initial_temperature, self.final_temperature);
        if !(t0.is_finite() && tf.is_finite() && tf > 0.0 && t0 > tf) {
            return Err(SolveError::InvalidSchedule(format!(
                "need initial > final > 0, got {t0} and {tf}"
            )));
        }
        if self.sweeps == 0 || self.restarts == 0 {
            return Err(SolveError::InvalidSchedule(
                "sweeps and restarts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn temperature(&self, sweep: usize) -> f64 {
        if self.sweeps == 1 {
            return self.initial_temperature;
        }
        let frac = sweep as f64 / (self.sweeps - 1) as f64;
        self.initial_temperature * (self.final_temperature / self.initial_temperature).powf(frac)
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub bits: DisruptionVector,
    /// `H(bits)`, re-evaluated from the problem.
    pub energy: f64,
    /// `sum c u + sum beta u u`, the NDI increase over the undisrupted
    /// network.
    pub ndi_gain: f64,
    /// Absolute NDI, filled in by callers that hold the oracle.
    pub ndi: Option<f64>,
    pub feasible: bool,
    pub method: Method,
    pub restarts_used: usize,
    pub sweeps_used: usize,
    /// Seconds. Not serialised so persisted results stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
    pub seed: u64,
    pub schedule: Option<AnnealSchedule>,
}

impl SolveResult {
    fn new(problem: &QuboProblem, bits: Vec<bool>, method: Method, seed: u64) -> Self {
        let energy = problem.energy_unchecked(&bits);
        let ndi_gain = problem.gain_unchecked(&bits);
        let bits = DisruptionVector::new(bits, problem.k());
        SolveResult {
            feasible: bits.is_feasible(),
            bits,
            energy,
            ndi_gain,
            ndi: None,
            method,
            restarts_used: 0,
            sweeps_used: 0,
            wall_time: 0.0,
            seed,
            schedule: None,
        }
    }

    pub fn selected(&self) -> Vec<usize> {
        self.bits.selected()
    }
}

/// Orders two bit vectors by their selected index lists, lexicographically.
/// `{0, 1}` sorts before `{0, 2}`, which sorts before `{1, 2}`.
pub fn compare_selections(a: &[bool], b: &[bool]) -> Ordering {
    let ia = a.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i);
    let ib = b.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i);
    ia.cmp(ib)
}

fn tie_tolerance(energy: f64) -> f64 {
    1e-12 * energy.abs().max(1.0)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u128::MAX / (n as u128 + 1) {
            return u128::MAX;
        }
    }
    acc
}

/// Exact optimum over all vectors with exactly `k` bits set. Among
/// (numerically) tied optima the lexicographically smallest selected index
/// list wins.
pub fn solve_brute_force(problem: &QuboProblem) -> Result<SolveResult, SolveError> {
    let started = Instant::now();
    let (n, k) = (problem.len(), problem.k());
    let subsets = binomial(n, k);
    if subsets > MAX_BRUTE_FORCE_SUBSETS {
        return Err(SolveError::TooLarge {
            subsets,
            limit: MAX_BRUTE_FORCE_SUBSETS,
        });
    }
    let linear = problem.linear();
    let mut bits = vec![false; n];
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best_combo = combo.clone();
    let mut best_gain = f64::NEG_INFINITY;
    loop {
        for &i in &combo {
            bits[i] = true;
        }
        let mut gain: f64 = combo.iter().map(|&i| linear[i]).sum();
        for &i in &combo {
            for &(j, beta) in problem.neighbours(i) {
                if j > i && bits[j] {
                    gain += beta;
                }
            }
        }
        for &i in &combo {
            bits[i] = false;
        }
        // combinations arrive in lexicographic order, so only a strict
        // improvement may replace the incumbent
        if gain > best_gain + tie_tolerance(best_gain) || best_gain == f64::NEG_INFINITY {
            best_gain = gain;
            best_combo.clone_from(&combo);
        }
        if !next_combination(&mut combo, n) {
            break;
        }
    }
    let bits = DisruptionVector::from_indices(n, &best_combo, k)
        .bits()
        .to_vec();
    let mut result = SolveResult::new(problem, bits, Method::Brute, 0);
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Summary of a full `2^L` energy scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveScan {
    /// Global minimiser of `H` (ties: smallest selected index list).
    pub argmin: Vec<bool>,
    pub min_energy: f64,
    /// Lowest energy among vectors violating the cardinality constraint, if
    /// any exist.
    pub min_infeasible_energy: Option<f64>,
    /// Highest energy among feasible vectors.
    pub max_feasible_energy: f64,
    /// Largest objective gain among feasible vectors.
    pub max_feasible_gain: f64,
    /// Every feasible vector attaining `max_feasible_gain` (within 1e-12
    /// relative).
    pub feasible_maximisers: Vec<Vec<bool>>,
}

/// Evaluates `H` on every bit vector. Intended for penalty-dominance and
/// equivalence checks on small instances.
pub fn exhaustive_scan(problem: &QuboProblem) -> Result<ExhaustiveScan, SolveError> {
    let n = problem.len();
    if n > MAX_EXHAUSTIVE_VARIABLES {
        return Err(SolveError::TooLarge {
            subsets: 1u128 << n.min(127),
            limit: 1u128 << MAX_EXHAUSTIVE_VARIABLES,
        });
    }
    let k = problem.k();
    let mut bits = vec![false; n];
    let mut argmin = bits.clone();
    let mut min_energy = f64::INFINITY;
    let mut min_infeasible: Option<f64> = None;
    let mut max_feasible_energy = f64::NEG_INFINITY;
    let mut max_gain = f64::NEG_INFINITY;
    let mut maximisers: Vec<Vec<bool>> = Vec::new();
    for mask in 0u64..(1u64 << n) {
        for (i, b) in bits.iter_mut().enumerate() {
            *b = mask >> i & 1 == 1;
        }
        let energy = problem.energy_unchecked(&bits);
        let better = energy < min_energy - tie_tolerance(min_energy)
            || ((energy - min_energy).abs() <= tie_tolerance(min_energy)
                && compare_selections(&bits, &argmin) == Ordering::Less);
        if min_energy.is_infinite() || better {
            min_energy = energy;
            argmin.clone_from(&bits);
        }
        if mask.count_ones() as usize == k {
            max_feasible_energy = max_feasible_energy.max(energy);
            let gain = problem.gain_unchecked(&bits);
            if max_gain == f64::NEG_INFINITY || gain > max_gain + tie_tolerance(max_gain) {
                max_gain = gain;
                maximisers.clear();
                maximisers.push(bits.clone());
            } else if (gain - max_gain).abs() <= tie_tolerance(max_gain) {
                maximisers.push(bits.clone());
            }
        } else {
            min_infeasible = Some(min_infeasible.map_or(energy, |m: f64| m.min(energy)));
        }
    }
    Ok(ExhaustiveScan {
        argmin,
        min_energy,
        min_infeasible_energy: min_infeasible,
        max_feasible_energy,
        max_feasible_gain: max_gain,
        feasible_maximisers: maximisers,
    })
}

/// The `k` links with the largest single-link gain, ties to the lower
/// index. Exact only when the problem has no pairwise terms.
pub fn solve_topk_additive(problem: &QuboProblem) -> Result<SolveResult, SolveError> {
    if !problem.is_additive() {
        return Err(SolveError::NotAdditive(problem.quadratic().len()));
    }
    let started = Instant::now();
    let bits = topk_bits(problem.linear(), problem.k());
    let mut result = SolveResult::new(problem, bits, Method::Topk, 0);
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

fn topk_bits(linear: &[f64], k: usize) -> Vec<bool> {
    let mut bits = vec![false; linear.len()];
    for i in rank_by_gain(linear).into_iter().take(k) {
        bits[i] = true;
    }
    bits
}

/// Restores `popcount == k` greedily by single-link gain: drops the
/// selected links with the smallest gain (ties: higher index first) or adds
/// the unselected links with the largest gain (ties: lower index first).
pub fn repair(bits: &[bool], k: usize, linear: &[f64]) -> DisruptionVector {
    let mut out = bits.to_vec();
    let count = out.iter().filter(|b| **b).count();
    let order = rank_by_gain(linear);
    if count > k {
        let mut excess = count - k;
        for &i in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if out[i] {
                out[i] = false;
                excess -= 1;
            }
        }
    } else if count < k {
        let mut missing = k - count;
        for &i in &order {
            if missing == 0 {
                break;
            }
            if !out[i] {
                out[i] = true;
                missing -= 1;
            }
        }
    }
    DisruptionVector::new(out, k)
}

/// Best-of-restarts simulated annealing.
///
/// Restart `r` draws from its own stream seeded with `seed ^ r`, so the
/// result does not depend on how restarts are scheduled across threads.
/// Swap mode starts every restart from the top-k set; penalty mode starts
/// from all zeros and repairs its best state if that is infeasible.
pub fn solve_annealing(
    problem: &QuboProblem,
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<SolveResult, SolveError> {
    schedule.validate()?;
    let started = Instant::now();
    let runs: Vec<(Vec<bool>, f64)> = (0..schedule.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ r as u64);
            let bits = match schedule.mode {
                AnnealMode::Swap => anneal_swap(problem, schedule, &mut rng),
                AnnealMode::Penalty => anneal_penalty(problem, schedule, &mut rng),
            };
            let energy = problem.energy_unchecked(&bits);
            (bits, energy)
        })
        .collect();
    let (mut best, _) = runs
        .into_iter()
        .min_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then_with(|| compare_selections(&a.0, &b.0))
        })
        .expect("at least one restart");
    let method = match schedule.mode {
        AnnealMode::Swap => Method::AnnealSwap,
        AnnealMode::Penalty => Method::AnnealPenalty,
    };
    if schedule.mode == AnnealMode::Penalty && best.iter().filter(|b| **b).count() != problem.k() {
        best = repair(&best, problem.k(), problem.linear()).bits().to_vec();
    }
    let mut result = SolveResult::new(problem, best, method, seed);
    result.restarts_used = schedule.restarts;
    result.sweeps_used = schedule.sweeps;
    result.schedule = Some(*schedule);
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Metropolis test; skips the draw when the acceptance probability is below
/// the resolution of a uniform f64.
#[inline]
fn accept(delta: f64, temperature: f64, rng: &mut ChaCha8Rng) -> bool {
    delta <= 0.0
        || (delta < 40.0 * temperature && rng.random::<f64>() < (-delta / temperature).exp())
}

fn anneal_swap(
    problem: &QuboProblem,
    schedule: &AnnealSchedule,
    rng: &mut ChaCha8Rng,
) -> Vec<bool> {
    let n = problem.len();
    let k = problem.k();
    let linear = problem.linear();
    let mut bits = topk_bits(linear, k);
    if k == 0 || k == n {
        return bits;
    }
    let mut selected: Vec<usize> = (0..n).filter(|&i| bits[i]).collect();
    let mut unselected: Vec<usize> = (0..n).filter(|&i| !bits[i]).collect();
    let pairwise = !problem.is_additive();
    // field[s] = sum of beta_sr over selected r != s
    let mut field = vec![0.0; n];
    if pairwise {
        for &s in &selected {
            for &(r, beta) in problem.neighbours(s) {
                field[r] += beta;
            }
        }
    }
    let beta_between = |i: usize, j: usize| -> f64 {
        problem
            .neighbours(i)
            .iter()
            .find(|&&(r, _)| r == j)
            .map_or(0.0, |&(_, b)| b)
    };

    let mut energy = problem.energy_unchecked(&bits);
    let mut best_energy = energy;
    let mut best = bits.clone();
    for sweep in 0..schedule.sweeps {
        let t = schedule.temperature(sweep);
        for _ in 0..n {
            let a = rng.random_range(0..k);
            let b = rng.random_range(0..n - k);
            let (out, inn) = (selected[a], unselected[b]);
            let mut delta = linear[out] - linear[inn];
            if pairwise {
                delta += field[out] - field[inn] + beta_between(out, inn);
            }
            if accept(delta, t, rng) {
                selected[a] = inn;
                unselected[b] = out;
                bits[out] = false;
                bits[inn] = true;
                if pairwise {
                    for &(r, beta) in problem.neighbours(out) {
                        field[r] -= beta;
                    }
                    for &(r, beta) in problem.neighbours(inn) {
                        field[r] += beta;
                    }
                }
                energy += delta;
                if energy < best_energy - tie_tolerance(best_energy) {
                    best_energy = energy;
                    best.clone_from(&bits);
                }
            }
        }
        // resynchronise the running energy to avoid drift
        energy = problem.energy_unchecked(&bits);
    }
    best
}

fn anneal_penalty(
    problem: &QuboProblem,
    schedule: &AnnealSchedule,
    rng: &mut ChaCha8Rng,
) -> Vec<bool> {
    let n = problem.len();
    let k = problem.k() as f64;
    let lambda = problem.lambda();
    let linear = problem.linear();
    let mut bits = vec![false; n];
    let mut field = vec![0.0; n];
    let mut ones = 0usize;
    let mut energy = problem.energy_unchecked(&bits);
    let mut best_energy = energy;
    let mut best = bits.clone();
    if n == 0 {
        return best;
    }
    for sweep in 0..schedule.sweeps {
        let t = schedule.temperature(sweep);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let excess = ones as f64 - k;
            let delta = if bits[i] {
                linear[i] + field[i] + lambda * (1.0 - 2.0 * excess)
            } else {
                -linear[i] - field[i] + lambda * (1.0 + 2.0 * excess)
            };
            if accept(delta, t, rng) {
                let sign = if bits[i] { -1.0 } else { 1.0 };
                bits[i] = !bits[i];
                if bits[i] {
                    ones += 1;
                } else {
                    ones -= 1;
                }
                for &(r, beta) in problem.neighbours(i) {
                    field[r] += sign * beta;
                }
                energy += delta;
                if energy < best_energy - tie_tolerance(best_energy) {
                    best_energy = energy;
                    best.clone_from(&bits);
                }
            }
        }
        energy = problem.energy_unchecked(&bits);
    }
    best
}

/// Method plus optional schedule overrides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub method: Method,
    pub sweeps: Option<usize>,
    pub restarts: Option<usize>,
    pub initial_temperature: Option<f64>,
    pub final_temperature: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: Method::AnnealSwap,
            sweeps: None,
            restarts: None,
            initial_temperature: None,
            final_temperature: None,
        }
    }
}

impl SolveOptions {
    pub fn with_method(method: Method) -> Self {
        SolveOptions {
            method,
            ..Default::default()
        }
    }

    /// Default schedule for `problem` with any overrides applied.
    pub fn schedule_for(&self, problem: &QuboProblem, mode: AnnealMode) -> AnnealSchedule {
        let mut s = AnnealSchedule::default_for(problem, mode);
        if let Some(v) = self.sweeps {
            s.sweeps = v;
        }
        if let Some(v) = self.restarts {
            s.restarts = v;
        }
        if let Some(v) = self.initial_temperature {
            s.initial_temperature = v;
        }
        if let Some(v) = self.final_temperature {
            s.final_temperature = v;
        }
        s
    }
}

/// Dispatches to the solver selected by `options.method`.
pub fn solve(
    problem: &QuboProblem,
    options: &SolveOptions,
    seed: u64,
) -> Result<SolveResult, SolveError> {
    match options.method {
        Method::Brute => solve_brute_force(problem),
        Method::Topk => solve_topk_additive(problem),
        Method::AnnealSwap => solve_annealing(
            problem,
            &options.schedule_for(problem, AnnealMode::Swap),
            seed,
        ),
        Method::AnnealPenalty => solve_annealing(
            problem,
            &options.schedule_for(problem, AnnealMode::Penalty),
            seed,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::QuadTerm;
    use proptest::prelude::*;

    fn additive(c: &[f64], k: usize) -> QuboProblem {
        let lambda = 100.0 * c.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        QuboProblem::from_parts(0, k, lambda, Some(2.0), c.to_vec(), vec![]).unwrap()
    }

    #[test]
    fn brute_force_hand_example() {
        let p = additive(&[5.0, 1.0, 4.0, 2.0, 3.0], 2);
        let r = solve_brute_force(&p).unwrap();
        assert_eq!(r.selected(), vec![0, 2]);
        assert_eq!(r.ndi_gain, 9.0);
        assert!(r.feasible);
        assert_eq!(r.energy, -9.0);
    }

    #[test]
    fn brute_force_full_and_empty() {
        let p = additive(&[5.0, 1.0, 4.0], 3);
        assert_eq!(solve_brute_force(&p).unwrap().selected(), vec![0, 1, 2]);
        let p = additive(&[5.0, 1.0, 4.0], 0);
        let r = solve_brute_force(&p).unwrap();
        assert!(r.selected().is_empty());
        assert_eq!(r.ndi_gain, 0.0);
    }

    #[test]
    fn brute_force_ties_take_smallest_index_list() {
        // optimum: link 0 plus one of {1, 3}
        let p = additive(&[5.0, 2.0, 1.0, 2.0], 2);
        assert_eq!(solve_brute_force(&p).unwrap().selected(), vec![0, 1]);
        let p = additive(&[1.0, 3.0, 3.0, 3.0], 2);
        assert_eq!(solve_brute_force(&p).unwrap().selected(), vec![1, 2]);
    }

    #[test]
    fn brute_force_limit() {
        let p = additive(&vec![1.0; 60], 30);
        assert!(matches!(
            solve_brute_force(&p),
            Err(SolveError::TooLarge { .. })
        ));
    }

    #[test]
    fn brute_force_with_interactions() {
        // a strong positive pair (1, 2) beats the two largest singles
        let p = QuboProblem::from_parts(
            0,
            2,
            1000.0,
            None,
            vec![5.0, 1.0, 1.0, 4.0],
            vec![QuadTerm {
                s: 1,
                r: 2,
                beta: 10.0,
            }],
        )
        .unwrap();
        let r = solve_brute_force(&p).unwrap();
        assert_eq!(r.selected(), vec![1, 2]);
        assert_eq!(r.ndi_gain, 12.0);
    }

    #[test]
    fn topk_examples() {
        assert_eq!(
            solve_topk_additive(&additive(&[5.0, 1.0, 4.0, 2.0, 3.0], 2))
                .unwrap()
                .selected(),
            vec![0, 2]
        );
        let r = solve_topk_additive(&additive(&[5.0, 1.0, 4.0], 0)).unwrap();
        assert!(r.selected().is_empty());
        assert_eq!(r.ndi_gain, 0.0);
        assert_eq!(
            solve_topk_additive(&additive(&[2.0; 6], 3))
                .unwrap()
                .selected(),
            vec![0, 1, 2]
        );
        let p = QuboProblem::from_parts(
            0,
            1,
            10.0,
            None,
            vec![1.0, 2.0],
            vec![QuadTerm {
                s: 0,
                r: 1,
                beta: 1.0,
            }],
        )
        .unwrap();
        assert!(matches!(
            solve_topk_additive(&p),
            Err(SolveError::NotAdditive(1))
        ));
    }

    #[test]
    fn repair_examples() {
        let c = [5.0, 1.0, 4.0];
        assert_eq!(
            repair(&[true, false, true], 2, &c).bits(),
            &[true, false, true]
        );
        assert_eq!(
            repair(&[true, true, true], 2, &c).bits(),
            &[true, false, true]
        );
        assert_eq!(
            repair(&[false, false, false], 1, &c).bits(),
            &[true, false, false]
        );
        // equal gains: drop the higher index, add the lower index
        let c = [1.0, 1.0, 1.0];
        assert_eq!(
            repair(&[true, true, true], 2, &c).bits(),
            &[true, true, false]
        );
        assert_eq!(
            repair(&[false, false, true], 2, &c).bits(),
            &[true, false, true]
        );
    }

    #[test]
    fn zero_temperature_swap_equals_topk() {
        let p = additive(&[3.0, 9.0, 1.0, 9.0, 4.0, 0.5], 3);
        let schedule = AnnealSchedule {
            initial_temperature: 1e-12,
            final_temperature: 1e-13,
            sweeps: 50,
            restarts: 3,
            mode: AnnealMode::Swap,
        };
        let a = solve_annealing(&p, &schedule, 11).unwrap();
        let b = solve_topk_additive(&p).unwrap();
        assert_eq!(a.bits, b.bits);
    }

    #[test]
    fn annealing_is_deterministic() {
        let p = QuboProblem::from_parts(
            3,
            3,
            500.0,
            None,
            vec![3.0, 1.0, 2.0, 5.0, 4.0, 0.5, 2.5],
            vec![
                QuadTerm {
                    s: 0,
                    r: 1,
                    beta: 2.0,
                },
                QuadTerm {
                    s: 2,
                    r: 5,
                    beta: -1.0,
                },
            ],
        )
        .unwrap();
        for mode in [AnnealMode::Swap, AnnealMode::Penalty] {
            let mut s = AnnealSchedule::default_for(&p, mode);
            s.sweeps = 200;
            let a = solve_annealing(&p, &s, 99).unwrap();
            let b = solve_annealing(&p, &s, 99).unwrap();
            assert_eq!(a.bits, b.bits);
            assert_eq!(a.energy, b.energy);
            assert!(a.feasible);
        }
    }

    #[test]
    fn schedule_validation() {
        let p = additive(&[1.0, 2.0], 1);
        let mut s = AnnealSchedule::default_for(&p, AnnealMode::Swap);
        assert!(s.validate().is_ok());
        s.final_temperature = s.initial_temperature;
        assert!(s.validate().is_err());
        let mut s = AnnealSchedule::default_for(&p, AnnealMode::Swap);
        s.restarts = 0;
        assert!(s.validate().is_err());
        // all-zero gains still give a valid schedule
        assert!(
            AnnealSchedule::default_for(&additive(&[0.0, 0.0], 1), AnnealMode::Swap)
                .validate()
                .is_ok()
        );
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Brute,
            Method::Topk,
            Method::AnnealPenalty,
            Method::AnnealSwap,
        ] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
    }

    #[test]
    fn exhaustive_scan_small() {
        let p = additive(&[5.0, 1.0, 4.0], 2);
        let scan = exhaustive_scan(&p).unwrap();
        assert_eq!(scan.argmin, vec![true, false, true]);
        assert_eq!(scan.feasible_maximisers, vec![vec![true, false, true]]);
        assert!(scan.min_infeasible_energy.unwrap() > scan.max_feasible_energy);
    }

    proptest! {
        #[test]
        fn swap_mode_always_feasible_and_consistent(
            c in prop::collection::vec(-5.0f64..20.0, 2..12),
            kf in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let k = ((c.len() as f64) * kf) as usize;
            let p = additive(&c, k);
            let mut s = AnnealSchedule::default_for(&p, AnnealMode::Swap);
            s.sweeps = 20;
            s.restarts = 2;
            let r = solve_annealing(&p, &s, seed).unwrap();
            prop_assert!(r.feasible);
            prop_assert_eq!(r.energy, p.energy(r.bits.bits()).unwrap());
            let opt = solve_brute_force(&p).unwrap();
            prop_assert!(r.energy >= opt.energy - 1e-9 * opt.energy.abs().max(1.0));
        }

        #[test]
        fn repair_is_feasible_and_identity_on_feasible(
            c in prop::collection::vec(-5.0f64..20.0, 1..12),
            mask in any::<u16>(),
            kf in 0.0f64..1.0,
        ) {
            let n = c.len();
            let k = ((n as f64) * kf) as usize;
            let bits: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let fixed = repair(&bits, k, &c);
            prop_assert!(fixed.is_feasible());
            if bits.iter().filter(|b| **b).count() == k {
                prop_assert_eq!(fixed.bits(), &bits[..]);
            }
        }
    }
}
