#![allow(dead_code)]

use std::collections::HashSet;
use std::io::Write;

use fusetune::frontend::KernelGraph;
use fusetune::fuseset::{canonicalize, initial_forest, organism_key, Organism};
use fusetune::search::{crossover, max_fuse, mutate, SearchConfig, ThreadMode};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes straight to the process stdout so the line survives test output
/// capture.
pub fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

pub fn walk_config(cores: u32) -> SearchConfig {
    SearchConfig { thread_mode: ThreadMode::Exhaustive, cores, prune: false, ..SearchConfig::default() }
}

/// Organisms reached by random mutation and crossover chains from the
/// unfused forest and the max-fusion organism, in visiting order.
pub fn chain(graph: &KernelGraph, cfg: &SearchConfig, seed: u64, steps: usize) -> Vec<Organism> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = vec![canonicalize(&initial_forest(graph), graph), max_fuse(graph, cfg)];
    let mut out = pool.clone();
    for _ in 0..steps {
        let a = pool.choose(&mut rng).unwrap().clone();
        let next = if rng.gen_bool(0.3) {
            let b = pool.choose(&mut rng).unwrap();
            crossover(&a, b, graph, cfg, &mut rng)
        } else {
            mutate(&a, graph, cfg, &mut rng)
        };
        if pool.len() < 32 {
            pool.push(next.clone());
        } else {
            let at = rng.gen_range(0..pool.len());
            pool[at] = next.clone();
        }
        out.push(next);
    }
    out
}

/// Up to `want` distinct organisms drawn from random chains.
pub fn distinct_organisms(graph: &KernelGraph, cfg: &SearchConfig, seed: u64, want: usize) -> Vec<Organism> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for org in chain(graph, cfg, seed, want * 40) {
        if seen.insert(organism_key(&org, graph)) {
            out.push(org);
            if out.len() == want {
                break;
            }
        }
    }
    out
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}
