//! One PASS/FAIL line per acceptance criterion, with tolerances pinned here.

mod common;

use std::collections::HashSet;
use std::time::Instant;

use common::{chain, distinct_organisms, median, report, walk_config};
use fusetune::codegen::{generate, reference_error};
use fusetune::corpus;
use fusetune::fitness::{AnalyticFitness, Cached, CompiledKernel, MachineModel, Toolchain};
use fusetune::frontend::{KernelGraph, OpId};
use fusetune::fuseset::{
    digit_space_size, enumerate_partitionings, enumerate_space, fusion_legal, initial_forest, joint_partitions,
    organism_key, parse_notation, Limits, Organism, Rule, ThreadSpace,
};
use fusetune::search::{max_fuse, run_strategy, SearchConfig, Strategy, ThreadMode};
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CORRECTNESS_TOLERANCE: f64 = 1e-10;
const CORRECTNESS_EXTENTS: [usize; 4] = [1, 7, 50, 200];
const RANDOM_ORGANISMS: usize = 50;
const LEGALITY_SAMPLES: usize = 10_000;
const DIGIT_SPACE: u32 = 1_259_712;
const SPACE_FRACTION: f64 = 0.001;
const QUALITY_GAP: f64 = 0.02;
const QUALITY_EXTENT: usize = 1000;
const QUALITY_CORES: u32 = 24;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const ORDERING_BUDGET: usize = 1000;
const ORTHOGONAL_SHARE: f64 = 0.10;
const SMOKE_EXTENT: usize = 2000;
const SMOKE_TRIALS: usize = 5;

const MF_BATAX: &str = "{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}";

fn verdict(n: u32, ok: bool, detail: &str) {
    report(&format!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" }));
}

fn extent_grid(graph: &KernelGraph) -> Vec<Vec<usize>> {
    let mut grid = vec![vec![]];
    for _ in &graph.dims {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                CORRECTNESS_EXTENTS.iter().map(move |&n| {
                    let mut e = prefix.clone();
                    e.push(n);
                    e
                })
            })
            .collect();
    }
    grid
}

fn correctness_sample(graph: &KernelGraph, seed: u64) -> Vec<Organism> {
    let cfg = walk_config(8);
    let mut sample = vec![max_fuse(graph, &SearchConfig { cores: 8, ..SearchConfig::default() })];
    let mut seen: HashSet<String> = sample.iter().map(|o| organism_key(o, graph)).collect();
    let mut pool = distinct_organisms(graph, &cfg, seed, 4 * RANDOM_ORGANISMS);
    if pool.len() < RANDOM_ORGANISMS && graph.op_count() <= 4 {
        let limits = Limits { prune: false, threads: ThreadSpace::PerPartition((1..=8).collect()), ..Limits::default() };
        pool.extend(enumerate_space(graph, &limits).unwrap());
    }
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for org in pool {
        if sample.len() > RANDOM_ORGANISMS {
            break;
        }
        if seen.insert(organism_key(&org, graph)) {
            sample.push(org);
        }
    }
    sample
}

#[test]
fn criterion_1_correctness_suite() {
    let start = Instant::now();
    let toolchain = Toolchain::detect();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut failures = Vec::new();
    let mut short = Vec::new();
    for (k, name) in corpus::TABLE.iter().enumerate() {
        let g = corpus::load(name).unwrap();
        let sample = correctness_sample(&g, 100 + k as u64);
        if sample.len() <= RANDOM_ORGANISMS {
            short.push(format!("{name}={}", sample.len()));
        }
        for org in &sample {
            assert!(fusion_legal(org, &g).is_ok());
            let compiled = toolchain.as_ref().map(|tc| CompiledKernel::build(org, &g, tc, None));
            for (n, ext) in extent_grid(&g).iter().enumerate() {
                let err = match &compiled {
                    Some(Ok(kernel)) => kernel.check(&g, ext, n as u64).unwrap_or(f64::INFINITY),
                    Some(Err(e)) => {
                        failures.push(format!("{name} {}: {e}", organism_key(org, &g)));
                        break;
                    }
                    None => reference_error(org, &g, ext, n as u64).unwrap(),
                };
                checked += 1;
                worst = worst.max(err);
                if !(err <= CORRECTNESS_TOLERANCE) {
                    failures.push(format!("{name} {} at {ext:?}: {err:e}", organism_key(org, &g)));
                }
            }
        }
    }
    let ok = failures.is_empty() && short.is_empty();
    verdict(
        1,
        ok,
        &format!(
            "{} kernel runs ({}), max relative error {worst:.2e} <= {CORRECTNESS_TOLERANCE:e}, {:.0}s",
            checked,
            if toolchain.is_some() { "compiled C" } else { "IR interpreter, no toolchain" },
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(short.is_empty(), "fewer than {RANDOM_ORGANISMS} random organisms: {short:?}");
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn criterion_2_legality_by_construction() {
    let per_kernel = LEGALITY_SAMPLES.div_ceil(corpus::TABLE.len());
    let mut total = 0;
    let mut illegal = Vec::new();
    for (k, name) in corpus::TABLE.iter().enumerate() {
        let g = corpus::load(name).unwrap();
        for (n, cfg) in [walk_config(8), SearchConfig { cores: 6, ..SearchConfig::default() }].iter().enumerate() {
            for org in chain(&g, cfg, 7 * k as u64 + n as u64, per_kernel / 2) {
                total += 1;
                if let Err(d) = fusion_legal(&org, &g) {
                    illegal.push(format!("{name} {}: {d}", organism_key(&org, &g)));
                }
            }
        }
    }
    let g = corpus::load("batax").unwrap();
    let rule = |text: &str| fusion_legal(&parse_notation(text, &g, 1).unwrap(), &g).err().map(|d| d.rule);
    let fuse_set_d = fusion_legal(&parse_notation("{{1} {3}} {{2}}", &g, 1).unwrap(), &g).unwrap_err();
    let negatives = fuse_set_d.rule == Rule::Dependence
        && fuse_set_d.message.contains("op 2")
        && rule("{{1 2}} {{3}}") == Some(Rule::Reduction);
    let ok = illegal.is_empty() && total >= LEGALITY_SAMPLES && negatives;
    verdict(
        2,
        ok,
        &format!(
            "{total} chained organisms, {} illegal; fuse set d -> {} ({}); inner fusion of 1,2 -> {:?}",
            illegal.len(),
            fuse_set_d.rule,
            fuse_set_d.message,
            rule("{{1 2}} {{3}}").unwrap()
        ),
    );
    assert!(illegal.is_empty(), "{illegal:#?}");
    assert!(total >= LEGALITY_SAMPLES);
    assert!(negatives);
}

#[test]
fn criterion_3_batax_worked_example() {
    let g = corpus::load("batax").unwrap();
    let cfg = SearchConfig { cores: 8, ..SearchConfig::default() };
    let mf = organism_key(&max_fuse(&g, &cfg), &g);
    let joint = joint_partitions(&[OpId(1), OpId(2)], &g);
    let row = |op| enumerate_partitionings(OpId(op), &g)[0].clone();
    let want = vec![vec![row(1), row(2)]];
    let ok = mf == format!("{MF_BATAX} @8,8") && joint == want;
    let axes: Vec<String> = joint.iter().map(|a| a.iter().map(|c| format!("{}:{}", c.op, g.label(c.axis))).collect::<Vec<_>>().join("+")).collect();
    verdict(3, ok, &format!("max_fuse = {mf}; joint partitions of fused {{1,2}} = {axes:?}"));
    assert_eq!(mf, format!("{MF_BATAX} @8,8"));
    assert_eq!(joint, want);
}

#[test]
fn criterion_4_space_reduction() {
    let g = corpus::load("batax").unwrap();
    let digits = digit_space_size(3, 3, 8);
    let limits = Limits { threads: ThreadSpace::Global((1..=8).collect()), ..Limits::default() };
    let legal = enumerate_space(&g, &limits).unwrap().len();
    let fraction = legal as f64 / DIGIT_SPACE as f64;
    let ok = digits == BigUint::from(DIGIT_SPACE) && fraction < SPACE_FRACTION;
    verdict(
        4,
        ok,
        &format!("digit space {digits}, legal BATAX space {legal} = {:.4}% < {}%", 100.0 * fraction, 100.0 * SPACE_FRACTION),
    );
    assert_eq!(digits, BigUint::from(DIGIT_SPACE));
    assert!(fraction < SPACE_FRACTION);
}

fn quality_fitness(g: &KernelGraph) -> Cached<AnalyticFitness> {
    Cached::new(AnalyticFitness::new(MachineModel::new(vec![QUALITY_EXTENT; g.dims.len()], QUALITY_CORES)))
}

fn exhaustive_optimum(g: &KernelGraph) -> (f64, usize) {
    let cfg = SearchConfig { cores: QUALITY_CORES, thread_mode: ThreadMode::Exhaustive, ..SearchConfig::default() };
    let r = run_strategy(Strategy::Exhaustive, g, &cfg, &quality_fitness(g)).unwrap();
    (r.best_fitness, r.evaluations)
}

#[test]
fn criterion_5_search_quality_vs_exhaustive() {
    let start = Instant::now();
    let mut worst_gap: f64 = 0.0;
    let mut lines = Vec::new();
    for name in corpus::SMALL {
        let g = corpus::load(name).unwrap();
        let (optimum, _) = exhaustive_optimum(&g);
        for seed in SEEDS {
            let cfg = SearchConfig { cores: QUALITY_CORES, seed, ..SearchConfig::default() };
            let r = run_strategy(Strategy::Mfga, &g, &cfg, &quality_fitness(&g)).unwrap();
            let gap = r.best_fitness / optimum - 1.0;
            worst_gap = worst_gap.max(gap);
            if gap > QUALITY_GAP {
                lines.push(format!("{name} seed {seed}: {} vs {optimum}", r.best_fitness));
            }
        }
    }
    let ok = lines.is_empty();
    verdict(
        5,
        ok,
        &format!("worst MFGA gap {:.3}% <= {}% over 5 kernels x 5 seeds, {:.1}s", 100.0 * worst_gap, 100.0 * QUALITY_GAP, start.elapsed().as_secs_f64()),
    );
    assert!(ok, "{lines:#?}");
}

#[test]
fn criterion_6_strategy_ordering() {
    let g = corpus::load("gemver").unwrap();
    let medians: Vec<f64> = [Strategy::Mfga, Strategy::Ga, Strategy::Random, Strategy::Mf]
        .into_iter()
        .map(|s| {
            median(
                SEEDS
                    .iter()
                    .map(|&seed| {
                        let cfg = SearchConfig {
                            cores: QUALITY_CORES,
                            seed,
                            budget: Some(ORDERING_BUDGET),
                            max_generations: 10_000,
                            ..SearchConfig::default()
                        };
                        let r = run_strategy(s, &g, &cfg, &quality_fitness(&g)).unwrap();
                        assert!(r.evaluations <= ORDERING_BUDGET + 1);
                        r.best_fitness
                    })
                    .collect(),
            )
        })
        .collect();
    let (mfga, ga, random, mf) = (medians[0], medians[1], medians[2], medians[3]);
    let ok = mfga <= ga && ga <= random && mfga <= mf;
    verdict(6, ok, &format!("GEMVER medians: mfga {mfga} <= ga {ga} <= random {random}; mf {mf}"));
    assert!(ok);
}

#[test]
fn criterion_7_orthogonal_efficiency() {
    let mut worst_share: f64 = 0.0;
    let mut misses = Vec::new();
    for name in corpus::SMALL {
        let g = corpus::load(name).unwrap();
        let (optimum, exhaustive_evals) = exhaustive_optimum(&g);
        let cfg = SearchConfig { cores: QUALITY_CORES, ..SearchConfig::default() };
        let r = run_strategy(Strategy::Orthogonal, &g, &cfg, &quality_fitness(&g)).unwrap();
        let share = r.evaluations as f64 / exhaustive_evals as f64;
        worst_share = worst_share.max(share);
        if r.best_fitness > optimum || share > ORTHOGONAL_SHARE {
            misses.push(format!("{name}: {} vs {optimum}, {}/{exhaustive_evals}", r.best_fitness, r.evaluations));
        }
    }
    let ok = misses.is_empty();
    verdict(7, ok, &format!("orthogonal hits the optimum on 5 kernels, worst share {:.1}% <= {}%", 100.0 * worst_share, 100.0 * ORTHOGONAL_SHARE));
    assert!(ok, "{misses:#?}");
}

#[test]
fn criterion_8_determinism() {
    let mut same = true;
    for (name, strategy) in [("gemver", Strategy::Mfga), ("dgemvt", Strategy::Ga), ("gesummv", Strategy::Random)] {
        let g = corpus::load(name).unwrap();
        let cfg = SearchConfig { seed: 11, budget: Some(300), ..SearchConfig::default() };
        let runs: Vec<(String, String)> = (0..2)
            .map(|_| {
                let r = run_strategy(strategy, &g, &cfg, &quality_fitness(&g)).unwrap();
                (r.log.to_jsonl(), generate(&r.best, &g).source)
            })
            .collect();
        same &= runs[0] == runs[1];
    }
    verdict(8, same, "repeated runs give byte-identical logs and C on gemver/mfga, dgemvt/ga, gesummv/random");
    assert!(same);
}

#[test]
fn criterion_9_empirical_smoke() {
    let Some(tc) = Toolchain::detect() else {
        verdict(9, true, "SKIPPED: no working C toolchain with OpenMP");
        return;
    };
    let g = corpus::load("gemver").unwrap();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get()) as u32;
    let ext = vec![SMOKE_EXTENT; g.dims.len()];
    let cfg = SearchConfig { cores, seed: 1, budget: Some(300), ..SearchConfig::default() };
    let fitness = Cached::new(AnalyticFitness::new(MachineModel::new(ext.clone(), cores)));
    let tuned = run_strategy(Strategy::Mfga, &g, &cfg, &fitness).unwrap().best;
    let baseline = initial_forest(&g);
    let time = |org: &Organism| {
        let k = CompiledKernel::build(org, &g, &tc, None).unwrap();
        let err = k.check(&g, &[7, 7], 3).unwrap();
        assert!(err <= CORRECTNESS_TOLERANCE);
        median((0..SMOKE_TRIALS).map(|_| k.time(&ext, 1).unwrap()).collect())
    };
    let (t_tuned, t_base) = (time(&tuned), time(&baseline));
    let ok = t_tuned <= t_base;
    verdict(
        9,
        ok,
        &format!(
            "GEMVER {SMOKE_EXTENT}x{SMOKE_EXTENT}, {cores} cores: mfga {} {t_tuned:.4}s vs unfused {t_base:.4}s (median of {SMOKE_TRIALS})",
            organism_key(&tuned, &g)
        ),
    );
    assert!(ok);
}
