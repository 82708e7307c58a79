//! Acceptance suite. Runs every check at its stated tolerance and budget,
//! prints one PASS/FAIL line per check, and fails if any check fails.

mod common;

use common::*;
use critlink::delay::NdiOracle;
use critlink::ingest::SnapshotSeries;
use critlink::qubo::{
    build_qubo, extract_coefficients, interaction_coefficients, PairMode, PenaltyConfig,
};
use critlink::report::{
    cmd_ingest, cmd_ksweep, cmd_solve, cmd_sweep, Manifest, RunConfig, SyntheticSpec,
};
use critlink::solver::{
    exhaustive_scan, solve_annealing, solve_brute_force, solve_topk_additive, AnnealMode,
    AnnealSchedule, Method,
};
use critlink::temporal::{
    delta_series, k_sweep, link_frequency, risk_windows, sweep_horizon, SolverConfig, StepSelection,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::{Duration, Instant};

const GAMMA: f64 = 2.0;

type Check = Result<String, String>;
type NamedCheck = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < budget_s, || {
        format!("took {:.2}s, budget {budget_s}s", elapsed.as_secs_f64())
    })
}

fn interaction_nullity() -> Check {
    let started = Instant::now();
    let inst = synthetic(100, 10, 11);
    let oracle = inst.oracle(GAMMA);
    let pairs: Vec<(usize, usize)> = (0..100)
        .flat_map(|s| (s + 1..100).map(move |r| (s, r)))
        .collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for &t in oracle.time_steps() {
        let c = extract_coefficients(&oracle, t, PairMode::Auto, Some(GAMMA))
            .map_err(|e| e.to_string())?;
        let tol = 1e-9 * c.linear.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for term in interaction_coefficients(&oracle, t, &pairs).map_err(|e| e.to_string())? {
            worst = worst.max(term.beta.abs());
            checked += 1;
            ensure(term.beta.abs() <= tol, || {
                format!("beta({},{}) at t={t} is {:e}", term.s, term.r, term.beta)
            })?;
        }
    }
    within(started.elapsed(), 10.0)?;
    Ok(format!(
        "{checked} interaction coefficients, max |beta| = {worst:e}, {:.2}s",
        started.elapsed().as_secs_f64()
    ))
}

fn linear_closed_form() -> Check {
    let inst = synthetic(100, 10, 11);
    let oracle = inst.oracle(GAMMA);
    let mut worst = 0.0f64;
    for (idx, &t) in oracle.time_steps().iter().enumerate() {
        let c = extract_coefficients(&oracle, t, PairMode::Auto, Some(GAMMA))
            .map_err(|e| e.to_string())?;
        for (s, (&got, &tt)) in c
            .linear
            .iter()
            .zip(inst.series.travel_times(idx))
            .enumerate()
        {
            let want = (GAMMA - 1.0) * tt;
            let rel = (got - want).abs() / want.abs();
            worst = worst.max(rel);
            ensure(rel <= 1e-9, || {
                format!("c_{s}({t}) = {got}, expected {want}")
            })?;
        }
    }
    Ok(format!("1000 gains, max relative error {worst:e}"))
}

fn qubo_equivalence() -> Check {
    let started = Instant::now();
    let mut instances = 0;
    for seed in 0..24u64 {
        let links = 8 + (seed as usize % 7);
        let inst = synthetic(links, 1, 100 + seed);
        let oracle = inst.oracle(GAMMA);
        let t = oracle.time_steps()[0];
        for k in 1..=5 {
            let problem = build_qubo(
                &oracle,
                t,
                k,
                &PenaltyConfig {
                    safety_factor: 10.0,
                },
                PairMode::Auto,
                Some(GAMMA),
            )
            .map_err(|e| e.to_string())?;
            let scan = exhaustive_scan(&problem).map_err(|e| e.to_string())?;
            let argmin_ones = scan.argmin.iter().filter(|&&u| u).count();
            ensure(argmin_ones == k, || {
                format!("L={links} k={k}: global minimiser has {argmin_ones} links")
            })?;
            // independent maximum of the constrained problem
            let best_ndi = k_subsets(links, k)
                .iter()
                .map(|s| inst.direct_ndi(0, &bits_of(links, s), GAMMA))
                .fold(f64::NEG_INFINITY, f64::max);
            let argmin_ndi = inst.direct_ndi(0, &scan.argmin, GAMMA);
            ensure(rel_close(argmin_ndi, best_ndi, 1e-9), || {
                format!("L={links} k={k}: minimiser NDI {argmin_ndi}, constrained max {best_ndi}")
            })?;
            let infeasible = scan.min_infeasible_energy.unwrap_or(f64::INFINITY);
            ensure(infeasible > scan.min_energy, || {
                format!(
                    "L={links} k={k}: infeasible energy {infeasible} <= {}",
                    scan.min_energy
                )
            })?;
            ensure(infeasible > scan.max_feasible_energy, || {
                format!("L={links} k={k}: an infeasible vector undercuts a feasible one")
            })?;
            instances += 1;
        }
    }
    ensure(instances >= 100, || format!("only {instances} instances"))?;
    within(started.elapsed(), 60.0)?;
    Ok(format!(
        "{instances} instances, L in 8..=14, k in 1..=5, safety 10, {:.2}s",
        started.elapsed().as_secs_f64()
    ))
}

fn solver_equivalence() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut sa_hits, mut topk_hits, mut additive) = (0, 0, 0);
    let total = 200;
    for i in 0..total {
        let n = rng.random_range(8..=16);
        let k = rng.random_range(1..=5);
        let problem = if i % 2 == 0 {
            let inst = synthetic(n, 1, 1000 + i as u64);
            let oracle = inst.oracle(GAMMA);
            build_qubo(
                &oracle,
                0,
                k,
                &PenaltyConfig::default(),
                PairMode::Auto,
                Some(GAMMA),
            )
            .map_err(|e| e.to_string())?
        } else {
            random_qubo(&mut rng, n, k, 0.4)
        };
        let exact = solve_brute_force(&problem).map_err(|e| e.to_string())?;
        let (oracle_energy, _) = brute_min_energy(&problem);
        ensure(rel_close(exact.energy, oracle_energy, 1e-9), || {
            format!(
                "brute force {} disagrees with enumeration {oracle_energy}",
                exact.energy
            )
        })?;
        let schedule = AnnealSchedule::default_for(&problem, AnnealMode::Swap);
        ensure(schedule.sweeps == 2000 && schedule.restarts == 10, || {
            "schedule".into()
        })?;
        let sa = solve_annealing(&problem, &schedule, i as u64).map_err(|e| e.to_string())?;
        if sa.feasible && rel_close(sa.energy, exact.energy, 1e-9) {
            sa_hits += 1;
        }
        if problem.is_additive() {
            additive += 1;
            let topk = solve_topk_additive(&problem).map_err(|e| e.to_string())?;
            if rel_close(topk.energy, exact.energy, 1e-9) {
                topk_hits += 1;
            }
        }
    }
    let rate = sa_hits as f64 / total as f64;
    ensure(rate >= 0.99, || {
        format!("annealing matched {sa_hits}/{total}")
    })?;
    ensure(topk_hits == additive, || {
        format!("top-k matched {topk_hits}/{additive}")
    })?;
    within(started.elapsed(), 120.0)?;
    Ok(format!(
        "annealing {sa_hits}/{total}, top-k {topk_hits}/{additive}, {:.2}s",
        started.elapsed().as_secs_f64()
    ))
}

fn energy_ndi_identity() -> Check {
    let inst = synthetic(60, 5, 21);
    let oracle = inst.oracle(GAMMA);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let steps = oracle.time_steps().to_vec();
    let n = oracle.link_count();
    for _ in 0..1000 {
        let idx = rng.random_range(0..steps.len());
        let t = steps[idx];
        let k = rng.random_range(1..=n);
        let problem = build_qubo(
            &oracle,
            t,
            k,
            &PenaltyConfig::default(),
            PairMode::Auto,
            Some(GAMMA),
        )
        .map_err(|e| e.to_string())?;
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut rng);
        let bits = bits_of(n, &ids[..k]);
        let lhs = -problem.energy(&bits).map_err(|e| e.to_string())?;
        let rhs = inst.direct_ndi(idx, &bits, GAMMA) - inst.direct_ndi(idx, &vec![false; n], GAMMA);
        let rel = (lhs - rhs).abs() / rhs.abs().max(1e-300);
        worst = worst.max(rel);
        ensure(rel <= 1e-6, || {
            format!("t={t} k={k}: -H = {lhs}, NDI gain = {rhs}")
        })?;
    }
    Ok(format!(
        "1000 feasible vectors, max relative error {worst:e}"
    ))
}

fn k_sweep_structure() -> Check {
    let k_list = [1, 2, 3, 4, 5];
    let mut horizons = 0;
    for (seed, links) in [(31u64, 10usize), (32, 12), (33, 14)] {
        let inst = synthetic(links, 6, seed);
        let oracle = inst.oracle(GAMMA);
        for idx in 0..inst.series.step_count() {
            let mut tt = inst.series.travel_times(idx).to_vec();
            tt.sort_by(f64::total_cmp);
            ensure(tt.windows(2).all(|w| w[0] < w[1]), || {
                format!("seed {seed}: gains are not distinct")
            })?;
        }
        let result = k_sweep(
            &oracle,
            StepSelection::All,
            &k_list,
            &SolverConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        ensure(result.all_nested(), || {
            format!("seed {seed}: sets not nested")
        })?;
        for entry in &result.entries {
            for step in &entry.steps {
                let idx = inst.series.index_of(step.time_step).unwrap();
                let best = k_subsets(links, entry.k)
                    .iter()
                    .map(|s| inst.direct_ndi(idx, &bits_of(links, s), GAMMA))
                    .fold(f64::NEG_INFINITY, f64::max);
                ensure(rel_close(step.ndi_abs, best, 1e-9), || {
                    format!(
                        "seed {seed} k={} t={}: NDI {} vs optimum {best}",
                        entry.k, step.time_step, step.ndi_abs
                    )
                })?;
            }
        }
        for pair in result.entries.windows(2) {
            for (a, b) in pair[0].steps.iter().zip(&pair[1].steps) {
                ensure(b.ndi_abs > a.ndi_abs, || {
                    format!(
                        "seed {seed} t={}: NDI*(k) not strictly increasing",
                        a.time_step
                    )
                })?;
            }
        }
        horizons += 1;
    }
    Ok(format!(
        "{horizons} horizons x 6 steps, k in 1..=5: nested, strictly increasing, brute-force optimal"
    ))
}

fn frequency_identities() -> Check {
    let base = synthetic(40, 20, 41);
    let special = 17;
    let steps = base.series.time_steps().to_vec();
    let mut tt = Vec::new();
    let mut sp = Vec::new();
    for idx in 0..steps.len() {
        let mut row = base.series.travel_times(idx).to_vec();
        let top = row.iter().cloned().fold(0.0, f64::max);
        row[special] = 3.0 * top;
        let length = base.topology.links()[special].length_km;
        sp.push(
            row.iter()
                .zip(base.series.speeds(idx))
                .enumerate()
                .map(|(s, (&t, &v))| if s == special { length / t * 60.0 } else { v })
                .collect::<Vec<_>>(),
        );
        tt.push(row);
    }
    let series = SnapshotSeries::from_rows(steps.clone(), tt, sp).map_err(|e| e.to_string())?;
    let inst = Instance::from_parts(base.topology.clone(), series);
    let oracle = inst.oracle(GAMMA);
    let k = 5;
    let horizon = sweep_horizon(&oracle, k, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let table = link_frequency(&horizon).map_err(|e| e.to_string())?;
    ensure(table.total() == k * steps.len(), || {
        format!("sum {} != {}", table.total(), k * steps.len())
    })?;
    ensure(table.counts[special] == steps.len(), || {
        format!(
            "engineered link selected {} of {} times",
            table.counts[special],
            steps.len()
        )
    })?;
    ensure(table.ranked()[0].1 == steps.len(), || {
        "top frequency is not the snapshot count".into()
    })?;
    Ok(format!(
        "sum = {} = k x T, engineered link frequency {}",
        table.total(),
        table.counts[special]
    ))
}

fn series_from(values: &[f64]) -> Vec<(u32, f64)> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as u32 * 5, v))
        .collect()
}

fn risk_window_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cases = 0;
    for &t in &[10usize, 20, 37, 50, 100, 134, 665] {
        for _ in 0..10 {
            let mut values: Vec<f64> = (0..t).map(|i| i as f64 * 0.37 + 1.0).collect();
            values.shuffle(&mut rng);
            let w =
                risk_windows(&series_from(&values), &[90.0, 95.0]).map_err(|e| e.to_string())?;
            let (top10, top5) = (w.band(90.0).unwrap(), w.band(95.0).unwrap());
            let want10 = (0.10 * t as f64).ceil() as usize;
            let want5 = (0.05 * t as f64).ceil() as usize;
            ensure(top10.flagged_steps.len() == want10, || {
                format!(
                    "T={t}: top-10% flagged {}, expected {want10}",
                    top10.flagged_steps.len()
                )
            })?;
            ensure(top5.flagged_steps.len() == want5, || {
                format!(
                    "T={t}: top-5% flagged {}, expected {want5}",
                    top5.flagged_steps.len()
                )
            })?;
            cases += 1;
        }
    }
    for _ in 0..200 {
        let t = rng.random_range(1..200);
        let values: Vec<f64> = (0..t)
            .map(|_| f64::from(rng.random_range(0..6u8)))
            .collect();
        let w = risk_windows(&series_from(&values), &[90.0, 95.0]).map_err(|e| e.to_string())?;
        let top10 = &w.band(90.0).unwrap().flagged_steps;
        ensure(
            w.band(95.0)
                .unwrap()
                .flagged_steps
                .iter()
                .all(|s| top10.contains(s)),
            || format!("T={t}: top-5% not inside top-10%"),
        )?;
    }
    for _ in 0..50 {
        let t = rng.random_range(40..300);
        let len = (t as f64 * 0.15).ceil() as usize;
        let start = rng.random_range(0..t - len);
        let values: Vec<f64> = (0..t)
            .map(|i| {
                if (start..start + len).contains(&i) {
                    rng.random_range(10.0..11.0)
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let w = risk_windows(&series_from(&values), &[90.0, 95.0]).map_err(|e| e.to_string())?;
        let lo = start as u32 * 5;
        let hi = (start + len - 1) as u32 * 5;
        for band in &w.bands {
            ensure(
                band.flagged_steps.iter().all(|&s| s >= lo && s <= hi),
                || format!("T={t}: step flagged outside the elevated block"),
            )?;
        }
    }
    Ok(format!(
        "{cases} tie-free series with exact counts, 200 subset checks, 50 block checks"
    ))
}

fn delta_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let t = rng.random_range(2..700);
        // values on a 2^-10 grid below 2^20 make every difference exact
        let values: Vec<f64> = (0..t)
            .map(|_| f64::from(rng.random_range(0..1u32 << 30)) / 1024.0)
            .collect();
        let d = delta_series(&series_from(&values)).map_err(|e| e.to_string())?;
        ensure(d.deltas.len() == t - 1, || "length".into())?;
        ensure(d.sum() == values[t - 1] - values[0], || {
            format!("T={t}: sum {} != {}", d.sum(), values[t - 1] - values[0])
        })?;
    }
    for &c in &[0.0, 3.25, 1234.5678] {
        let d = delta_series(&series_from(&[c; 50])).map_err(|e| e.to_string())?;
        ensure(d.deltas.iter().all(|x| x.1 == 0.0), || {
            "constant series has a nonzero delta".into()
        })?;
    }
    let inst = synthetic(80, 40, 51);
    let oracle = inst.oracle(GAMMA);
    let horizon = sweep_horizon(&oracle, 8, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let series = horizon.ndi_series();
    let d = delta_series(&series).map_err(|e| e.to_string())?;
    let want = series.last().unwrap().1 - series[0].1;
    ensure(rel_close(d.sum(), want, 1e-12), || {
        format!("NDI series: sum {} vs {want}", d.sum())
    })?;
    Ok("200 exact telescoping sums, constant series all zero, NDI horizon consistent".into())
}

fn desk_scale_run() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = RunConfig {
        synthetic: Some(SyntheticSpec {
            nodes: 200,
            links: 500,
            steps: 100,
        }),
        k: 20,
        method: Method::AnnealSwap,
        out_dir: dir.path().join("bundle"),
        ..RunConfig::default()
    };
    let started = Instant::now();
    let outcome = cmd_sweep(&config).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(!outcome.is_partial(), || "some steps failed".into())?;
    ensure(outcome.horizon.steps.len() == 100, || {
        "missing steps".into()
    })?;
    ensure(outcome.horizon.steps.iter().all(|s| s.feasible), || {
        "infeasible step".into()
    })?;
    within(elapsed, 60.0)?;
    let timing = critlink::temporal::timing_report(&outcome.horizon, None);
    let stats = &timing.overall;
    ensure(stats.slope.abs() < 0.1 * stats.median, || {
        format!(
            "slope {:e} s/step vs median {:e} s",
            stats.slope, stats.median
        )
    })?;
    Ok(format!(
        "500 links x 100 steps in {:.2}s, median step {:.3}s, slope {:+.2e} s/step ({:.2}% of median)",
        elapsed.as_secs_f64(),
        stats.median,
        stats.slope,
        100.0 * stats.slope.abs() / stats.median
    ))
}

fn compare_bundles(a: &Path, b: &Path) -> Result<usize, String> {
    let ma = Manifest::read(a).map_err(|e| e.to_string())?;
    let mb = Manifest::read(b).map_err(|e| e.to_string())?;
    ensure(ma == mb, || format!("manifests differ in {}", a.display()))?;
    let listed: Vec<&str> = ma.files.iter().map(|f| f.path.as_str()).collect();
    for entry in std::fs::read_dir(a).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let name = name.to_string_lossy();
        ensure(
            name == "manifest.json" || listed.contains(&name.as_ref()),
            || format!("{name} is not listed in the manifest"),
        )?;
    }
    let mut compared = 1;
    for f in ma.stable_files() {
        let x = std::fs::read(a.join(&f.path)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(&f.path)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{} differs", f.path))?;
        compared += 1;
    }
    let x = std::fs::read(a.join("manifest.json")).map_err(|e| e.to_string())?;
    let y = std::fs::read(b.join("manifest.json")).map_err(|e| e.to_string())?;
    ensure(x == y, || "manifest bytes differ".into())?;
    Ok(compared)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = RunConfig {
        synthetic: Some(SyntheticSpec {
            nodes: 50,
            links: 90,
            steps: 20,
        }),
        k: 6,
        k_list: vec![2, 4, 6],
        seed: 12345,
        time_step: Some(10),
        ..RunConfig::default()
    };
    let mut compared = 0;
    for run in ["a", "b"] {
        let root = dir.path().join(run);
        let mut cfg = base.clone();
        cfg.out_dir = root.join("ingest");
        cmd_ingest(&cfg).map_err(|e| e.to_string())?;
        cfg.out_dir = root.join("solve");
        cmd_solve(&cfg).map_err(|e| e.to_string())?;
        cfg.out_dir = root.join("sweep");
        cmd_sweep(&cfg).map_err(|e| e.to_string())?;
        cfg.out_dir = root.join("ksweep");
        cmd_ksweep(&cfg).map_err(|e| e.to_string())?;
    }
    for sub in ["ingest", "solve", "sweep", "ksweep"] {
        compared += compare_bundles(
            &dir.path().join("a").join(sub),
            &dir.path().join("b").join(sub),
        )?;
    }
    Ok(format!(
        "{compared} files byte-identical across two runs of four commands"
    ))
}

fn main() {
    let checks: [NamedCheck; 11] = [
        ("interaction coefficients vanish", interaction_nullity),
        ("single-link gain closed form", linear_closed_form),
        (
            "penalised QUBO equals constrained problem",
            qubo_equivalence,
        ),
        ("annealing and top-k match brute force", solver_equivalence),
        ("energy equals negative NDI gain", energy_ndi_identity),
        ("k-sweep nesting and monotonicity", k_sweep_structure),
        ("frequency identities", frequency_identities),
        ("risk-window counts and containment", risk_window_checks),
        ("delta telescoping", delta_checks),
        ("desk-scale end-to-end run", desk_scale_run),
        ("byte-identical bundles", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
