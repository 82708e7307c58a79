//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the QUBO or solver code paths it is used to check.

#![allow(dead_code)]

use critlink::delay::{free_flow_times, AdditiveNdi, DelayParams, FreeFlowTable};
use critlink::ingest::{generate_synthetic, NetworkTopology, SnapshotSeries};
use critlink::qubo::{QuadTerm, QuboProblem};
use rand::Rng;

pub struct Instance {
    pub topology: NetworkTopology,
    pub series: SnapshotSeries,
    pub free_flow: FreeFlowTable,
}

impl Instance {
    pub fn oracle(&self, gamma: f64) -> AdditiveNdi<'_> {
        AdditiveNdi::new(
            &self.series,
            &self.free_flow,
            DelayParams::new(gamma).unwrap(),
        )
        .unwrap()
    }

    pub fn from_parts(topology: NetworkTopology, series: SnapshotSeries) -> Self {
        let free_flow = free_flow_times(&series, &topology).unwrap();
        Instance {
            topology,
            series,
            free_flow,
        }
    }

    /// NDI evaluated straight from the travel-time table.
    pub fn direct_ndi(&self, step_idx: usize, bits: &[bool], gamma: f64) -> f64 {
        self.series
            .travel_times(step_idx)
            .iter()
            .zip(&self.free_flow.t0)
            .zip(bits)
            .map(|((&t, &t0), &u)| if u { gamma * t - t0 } else { t - t0 })
            .sum()
    }
}

/// Node count that keeps a synthetic request with `links` links feasible.
pub fn nodes_for(links: usize) -> usize {
    (links * 3 / 4).clamp(3, links + 1)
}

pub fn synthetic(links: usize, steps: usize, seed: u64) -> Instance {
    let net = generate_synthetic(nodes_for(links), links, steps, seed).unwrap();
    Instance::from_parts(net.topology, net.series)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(combo.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] < n - k + i {
                combo[i] += 1;
                for j in i + 1..k {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn bits_of(n: usize, selected: &[usize]) -> Vec<bool> {
    let mut b = vec![false; n];
    for &s in selected {
        b[s] = true;
    }
    b
}

/// `-sum c u - sum beta u u + lambda (sum u - k)^2`, written out term by term.
pub fn direct_energy(problem: &QuboProblem, bits: &[bool]) -> f64 {
    let lin: f64 = problem
        .linear()
        .iter()
        .zip(bits)
        .filter(|(_, &u)| u)
        .map(|(c, _)| c)
        .sum();
    let quad: f64 = problem
        .quadratic()
        .iter()
        .filter(|t| bits[t.s] && bits[t.r])
        .map(|t| t.beta)
        .sum();
    let ones = bits.iter().filter(|&&u| u).count() as f64;
    let v = ones - problem.k() as f64;
    -lin - quad + problem.lambda() * v * v
}

/// Minimum energy over feasible vectors by enumeration.
pub fn brute_min_energy(problem: &QuboProblem) -> (f64, Vec<usize>) {
    let n = problem.len();
    k_subsets(n, problem.k())
        .into_iter()
        .map(|s| (direct_energy(problem, &bits_of(n, &s)), s))
        .fold((f64::INFINITY, Vec::new()), |best, cur| {
            if cur.0 < best.0 {
                cur
            } else {
                best
            }
        })
}

/// A problem with random positive gains and random signed interactions.
pub fn random_qubo<R: Rng>(rng: &mut R, n: usize, k: usize, density: f64) -> QuboProblem {
    let linear: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    let mut quadratic = Vec::new();
    for s in 0..n {
        for r in s + 1..n {
            if rng.random_bool(density) {
                quadratic.push(QuadTerm {
                    s,
                    r,
                    beta: rng.random_range(-3.0..3.0),
                });
            }
        }
    }
    let scale = linear
        .iter()
        .map(|c| c.abs())
        .sum::<f64>()
        .max(quadratic.iter().map(|t| t.beta.abs()).sum());
    QuboProblem::from_parts(0, k, 100.0 * scale, None, linear, quadratic).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
