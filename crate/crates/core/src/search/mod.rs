//! Search over organisms: the max-fuse seeded genetic algorithm, its
//! thread sweep, and the baseline strategies.

pub mod crossover;
pub mod log;
pub mod maxfuse;
pub mod mutate;
pub mod select;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crossover::crossover;
pub use log::{LogEntry, SearchLog};
pub use maxfuse::max_fuse;
pub use mutate::{mutate, neighbors, Mutation};
pub use select::{tournament_select, Member};

use crate::fitness::{CacheStats, Cached, Fitness};
use crate::frontend::KernelGraph;
use crate::fuseset::{
    canonicalize, enumerate_structures, expand_threads, initial_forest, EnumerateError, Limits, Organism, ThreadSpace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThreadMode {
    /// Every partition runs `cores` threads; thread counts are not searched.
    Const,
    /// All partitions share one searched count.
    Global,
    /// Each partition's count is searched independently.
    Exhaustive,
}

impl FromStr for ThreadMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "const" => Ok(ThreadMode::Const),
            "global" => Ok(ThreadMode::Global),
            "exhaustive" => Ok(ThreadMode::Exhaustive),
            _ => Err(format!("unknown thread mode `{s}` (expected const, global or exhaustive)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Mf,
    Ga,
    Mfga,
    Orthogonal,
    Exhaustive,
}

impl Strategy {
    pub const ALL: [Strategy; 6] =
        [Strategy::Random, Strategy::Mf, Strategy::Ga, Strategy::Mfga, Strategy::Orthogonal, Strategy::Exhaustive];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Mf => "mf",
            Strategy::Ga => "ga",
            Strategy::Mfga => "mfga",
            Strategy::Orthogonal => "orthogonal",
            Strategy::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected random, mf, ga, mfga, orthogonal or exhaustive)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub strategy: Strategy,
    pub population: usize,
    pub tournament: usize,
    pub max_generations: u32,
    /// Consecutive generations without a fresh evaluation before the GA
    /// stops early.
    pub stall_generations: u32,
    /// Cap on fresh fitness evaluations, not counting the starting
    /// organism of the non-enumerating strategies.
    pub budget: Option<usize>,
    pub seed: u64,
    pub thread_mode: ThreadMode,
    pub cores: u32,
    /// Probability that a crossover child is also mutated.
    pub mutation_rate: f64,
    /// Restrict the space to organisms whose fused siblings share operands.
    pub prune: bool,
    /// Largest kernel the exhaustive and orthogonal strategies accept.
    pub exhaustive_ops: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            strategy: Strategy::Mfga,
            population: 20,
            tournament: 2,
            max_generations: 50,
            stall_generations: 10,
            budget: None,
            seed: 0,
            thread_mode: ThreadMode::Global,
            cores: 8,
            mutation_rate: 0.5,
            prune: true,
            exhaustive_ops: 4,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if self.population < 2 {
            return bad("population size must be at least 2");
        }
        if self.tournament < 1 {
            return bad("tournament size must be at least 1");
        }
        if self.cores < 1 {
            return bad("core count must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation rate must lie in [0, 1]");
        }
        Ok(())
    }

    /// Thread counts the sweep visits: 2, 4, ... up to the core count.
    pub fn sweep_values(&self) -> Vec<u32> {
        (2..=self.cores).step_by(2).collect()
    }

    fn thread_space(&self) -> ThreadSpace {
        match self.thread_mode {
            ThreadMode::Const => ThreadSpace::Const(self.cores),
            ThreadMode::Global => ThreadSpace::Global(self.sweep_values()),
            ThreadMode::Exhaustive => ThreadSpace::PerPartition(self.sweep_values()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Enumerate(#[from] EnumerateError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub strategy: Strategy,
    pub best: Organism,
    pub best_key: String,
    /// `+inf` when nothing was evaluated successfully.
    pub best_fitness: f64,
    /// Fresh fitness evaluations performed.
    pub evaluations: usize,
    pub generations: u32,
    pub log: SearchLog,
    pub cache: CacheStats,
}

struct Driver<'a, F> {
    graph: &'a KernelGraph,
    cfg: &'a SearchConfig,
    fitness: &'a Cached<F>,
    rng: ChaCha8Rng,
    log: SearchLog,
    sink: Option<&'a mut dyn FnMut(&LogEntry)>,
    fresh: usize,
    /// Fresh evaluations that do not count against the budget.
    free: usize,
    best: Option<Member>,
    generation: u32,
    start: Instant,
    strategy: Strategy,
}

impl<'a, F: Fitness> Driver<'a, F> {
    fn new(graph: &'a KernelGraph, cfg: &'a SearchConfig, fitness: &'a Cached<F>, strategy: Strategy) -> Self {
        Driver {
            graph,
            cfg,
            fitness,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            log: SearchLog::default(),
            sink: None,
            fresh: 0,
            free: 0,
            best: None,
            generation: 0,
            start: Instant::now(),
            strategy,
        }
    }

    fn remaining(&self, reserve: usize) -> Option<usize> {
        self.cfg.budget.map(|b| b.saturating_sub(reserve).saturating_sub(self.fresh - self.free))
    }

    fn exhausted(&self, reserve: usize) -> bool {
        self.remaining(reserve) == Some(0)
    }

    /// Evaluates in order, logging fresh results. Entries past the budget
    /// come back as `None`.
    fn evaluate(&mut self, orgs: &[Organism], reserve: usize) -> Vec<Option<Member>> {
        self.evaluate_limited(orgs, self.remaining(reserve))
    }

    fn evaluate_limited(&mut self, orgs: &[Organism], limit: Option<usize>) -> Vec<Option<Member>> {
        let outcomes = self.fitness.evaluate_batch(orgs, self.graph, limit);
        let mut out = Vec::with_capacity(orgs.len());
        for (org, outcome) in orgs.iter().zip(outcomes) {
            let Some(o) = outcome else {
                out.push(None);
                continue;
            };
            let member =
                Member { org: canonicalize(org, self.graph), key: o.key.clone(), fitness: o.evaluation.fitness };
            if o.fresh {
                self.fresh += 1;
                let elapsed_s =
                    if self.fitness.deterministic() { self.fresh as f64 } else { self.start.elapsed().as_secs_f64() };
                let entry = LogEntry {
                    key: o.key,
                    fitness: o.evaluation.fitness.is_finite().then_some(o.evaluation.fitness),
                    generation: self.generation,
                    elapsed_s,
                    strategy: self.strategy.name().to_string(),
                    diagnostic: o.evaluation.diagnostic,
                };
                if let Some(sink) = self.sink.as_mut() {
                    sink(&entry);
                }
                self.log.entries.push(entry);
            }
            if self.best.as_ref().is_none_or(|b| member.better(b)) {
                self.best = Some(member.clone());
            }
            out.push(Some(member));
        }
        out
    }

    /// The starting point is always evaluated, outside the budget.
    fn evaluate_seed(&mut self, seed: &Organism) {
        let before = self.fresh;
        self.evaluate_limited(std::slice::from_ref(seed), None);
        self.free += self.fresh - before;
    }

    fn reserve(&self) -> usize {
        let per = self.cfg.sweep_values().len();
        match self.cfg.thread_mode {
            ThreadMode::Const => 0,
            ThreadMode::Global => per,
            ThreadMode::Exhaustive => per * self.graph.op_count(),
        }
    }

    fn mutate(&mut self, org: &Organism) -> Organism {
        mutate(org, self.graph, self.cfg, &mut self.rng)
    }

    fn evolve(&mut self, mut population: Vec<Member>) {
        let reserve = self.reserve();
        let n = self.cfg.population;
        let mut stall = 0;
        while self.generation < self.cfg.max_generations && !population.is_empty() && !self.exhausted(reserve) {
            self.generation += 1;
            let parents: Vec<usize> =
                (0..2 * n).map(|_| tournament_select(&population, self.cfg.tournament, &mut self.rng)).collect();
            let mut children = Vec::with_capacity(n);
            for pair in parents.chunks(2) {
                let (a, b) = (&population[pair[0]].org, &population[pair[1]].org);
                let mut child = crossover(a, b, self.graph, self.cfg, &mut self.rng);
                if self.rng.gen_bool(self.cfg.mutation_rate) {
                    child = self.mutate(&child);
                }
                children.push(child);
            }
            let before = self.fresh;
            let next: Vec<Member> = self.evaluate(&children, reserve).into_iter().flatten().collect();
            if next.is_empty() {
                break;
            }
            population = self.with_elite(next);
            stall = if self.fresh == before { stall + 1 } else { 0 };
            if stall >= self.cfg.stall_generations {
                break;
            }
        }
    }

    /// Puts the incumbent back in place of the worst member if it was lost.
    fn with_elite(&self, mut population: Vec<Member>) -> Vec<Member> {
        if let Some(best) = &self.best {
            if !population.iter().any(|m| m.key == best.key) {
                let worst = (0..population.len()).max_by(|&a, &b| population[a].rank(&population[b])).unwrap();
                population[worst] = best.clone();
            }
        }
        population
    }

    fn sweep_best(&mut self) {
        if let Some(best) = self.best.clone() {
            self.sweep(&best.org);
        }
    }

    fn sweep(&mut self, org: &Organism) -> Organism {
        let values = self.cfg.sweep_values();
        if org.partition_count() == 0 || values.is_empty() {
            return org.clone();
        }
        let pick = |d: &mut Self, candidates: Vec<Organism>| -> Option<Member> {
            d.evaluate(&candidates, 0).into_iter().flatten().min_by(|a, b| a.rank(b))
        };
        match self.cfg.thread_mode {
            ThreadMode::Const => org.clone(),
            ThreadMode::Global => {
                let mut candidates = vec![org.clone()];
                candidates.extend(values.iter().map(|&t| {
                    let mut o = org.clone();
                    o.set_all_threads(t);
                    o
                }));
                pick(self, candidates).map_or_else(|| org.clone(), |m| m.org)
            }
            ThreadMode::Exhaustive => {
                let mut current = org.clone();
                for k in 0..org.partition_count() {
                    let mut candidates = vec![current.clone()];
                    for &t in &values {
                        let mut counts = current.thread_counts();
                        counts[k] = t;
                        let mut o = current.clone();
                        o.set_threads(&counts);
                        candidates.push(o);
                    }
                    if let Some(m) = pick(self, candidates) {
                        current = m.org;
                    }
                }
                current
            }
        }
    }

    fn run(mut self, seed: Organism) -> SearchResult {
        let reserve = self.reserve();
        match self.strategy {
            Strategy::Random => {
                let mut current = seed.clone();
                self.evaluate_seed(&current);
                let cap = self.cfg.budget.map_or(self.cfg.max_generations as usize * self.cfg.population, |b| 50 * b + 100);
                for _ in 0..cap {
                    if self.exhausted(0) {
                        break;
                    }
                    self.generation += 1;
                    current = self.mutate(&current);
                    self.evaluate(std::slice::from_ref(&current), 0);
                }
            }
            Strategy::Mf => {
                self.evaluate_seed(&seed);
                self.sweep_best();
            }
            Strategy::Mfga | Strategy::Ga => {
                self.evaluate_seed(&seed);
                let initial: Vec<Organism> = if self.strategy == Strategy::Mfga {
                    (0..self.cfg.population).map(|_| self.mutate(&seed)).collect()
                } else {
                    let walk = 2 * self.graph.op_count();
                    (0..self.cfg.population)
                        .map(|_| (0..walk).fold(seed.clone(), |o, _| self.mutate(&o)))
                        .collect()
                };
                let population: Vec<Member> = self.evaluate(&initial, reserve).into_iter().flatten().collect();
                let population = self.with_elite(population);
                self.evolve(population);
                self.sweep_best();
            }
            Strategy::Orthogonal | Strategy::Exhaustive => unreachable!("enumerating strategies run separately"),
        }
        self.finish(seed)
    }

    fn run_enumerated(mut self, structures: Vec<Organism>, threads: ThreadSpace, sweep: bool) -> SearchResult {
        let seed = structures.first().cloned().unwrap_or_else(|| initial_forest(self.graph));
        let reserve = if sweep { self.reserve() } else { 0 };
        for chunk in structures.chunks(256) {
            if self.exhausted(reserve) {
                break;
            }
            let space: Vec<Organism> = chunk.iter().flat_map(|s| expand_threads(s, &threads)).collect();
            self.evaluate(&space, reserve);
        }
        if sweep {
            self.sweep_best();
        }
        self.finish(seed)
    }

    fn finish(self, seed: Organism) -> SearchResult {
        let (best, best_key, best_fitness) = match self.best {
            Some(m) => (m.org, m.key, m.fitness),
            None => {
                let org = canonicalize(&seed, self.graph);
                let key = self.fitness.key(&org, self.graph);
                (org, key, f64::INFINITY)
            }
        };
        SearchResult {
            strategy: self.strategy,
            best,
            best_key,
            best_fitness,
            evaluations: self.fresh,
            generations: self.generation,
            log: self.log,
            cache: self.fitness.stats(),
        }
    }
}

/// Runs one strategy. Evaluation failures score `+inf` and are logged with
/// their diagnostic; they never abort the search.
pub fn run_strategy<F: Fitness>(
    strategy: Strategy,
    graph: &KernelGraph,
    cfg: &SearchConfig,
    fitness: &Cached<F>,
) -> Result<SearchResult, SearchError> {
    run_strategy_with(strategy, graph, cfg, fitness, None)
}

/// As [`run_strategy`], also passing each log entry to `sink` as it is
/// recorded.
pub fn run_strategy_with<'a, F: Fitness>(
    strategy: Strategy,
    graph: &'a KernelGraph,
    cfg: &'a SearchConfig,
    fitness: &'a Cached<F>,
    sink: Option<&'a mut dyn FnMut(&LogEntry)>,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let mut driver = Driver::new(graph, cfg, fitness, strategy);
    driver.sink = sink;
    let limits = |threads| Limits { max_ops: cfg.exhaustive_ops, partitions: true, prune: cfg.prune, threads };
    Ok(match strategy {
        Strategy::Mf | Strategy::Mfga => driver.run(max_fuse(graph, cfg)),
        Strategy::Random | Strategy::Ga => driver.run(canonicalize(&initial_forest(graph), graph)),
        Strategy::Orthogonal => {
            let threads = ThreadSpace::Const(cfg.cores);
            driver.run_enumerated(enumerate_structures(graph, &limits(threads.clone()))?, threads, true)
        }
        Strategy::Exhaustive => {
            let threads = cfg.thread_space();
            driver.run_enumerated(enumerate_structures(graph, &limits(threads.clone()))?, threads, false)
        }
    })
}

/// Runs the strategy named in the configuration.
pub fn run<F: Fitness>(graph: &KernelGraph, cfg: &SearchConfig, fitness: &Cached<F>) -> Result<SearchResult, SearchError> {
    run_strategy(cfg.strategy, graph, cfg, fitness)
}

pub fn run_mfga<F: Fitness>(
    graph: &KernelGraph,
    cfg: &SearchConfig,
    fitness: &Cached<F>,
) -> Result<SearchResult, SearchError> {
    run_strategy(Strategy::Mfga, graph, cfg, fitness)
}

/// Best thread assignment for `org` over the counts 2, 4, ... `cfg.cores`:
/// one shared count in global mode, or each partition in turn in
/// exhaustive mode. Unpartitioned organisms come back unchanged without any
/// evaluation.
pub fn thread_sweep<F: Fitness>(org: &Organism, graph: &KernelGraph, fitness: &Cached<F>, cfg: &SearchConfig) -> Organism {
    let mut d = Driver::new(graph, cfg, fitness, cfg.strategy);
    let org = canonicalize(org, graph);
    d.sweep(&org)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::fitness::{AnalyticFitness, MachineModel};
    use crate::fuseset::parse_notation;

    fn analytic(ext: Vec<usize>, cores: u32) -> Cached<AnalyticFitness> {
        Cached::new(AnalyticFitness::new(MachineModel::new(ext, cores)))
    }

    #[test]
    fn sweep_counts() {
        let g = corpus::load("batax").unwrap();
        let mf = parse_notation("{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}", &g, 24).unwrap();
        for (cores, want) in [(24, 12), (2, 1)] {
            let f = analytic(vec![1000, 1000], cores);
            let cfg = SearchConfig { cores, ..SearchConfig::default() };
            let mut start = mf.clone();
            start.set_all_threads(cores);
            thread_sweep(&start, &g, &f, &cfg);
            assert_eq!(f.stats().misses, want);
        }
        let f = analytic(vec![1000, 1000], 24);
        let plain = initial_forest(&g);
        assert_eq!(thread_sweep(&plain, &g, &f, &SearchConfig { cores: 24, ..SearchConfig::default() }), plain);
        assert_eq!(f.stats().misses, 0);
    }

    #[test]
    fn zero_budget_evaluates_only_the_seed() {
        let g = corpus::load("gemver").unwrap();
        let cfg = SearchConfig { budget: Some(0), ..SearchConfig::default() };
        let f = analytic(vec![100, 100], 8);
        let r = run_strategy(Strategy::Random, &g, &cfg, &f).unwrap();
        assert_eq!(r.best, canonicalize(&initial_forest(&g), &g));
        assert_eq!(r.evaluations, 1);
        let f = analytic(vec![100, 100], 8);
        let r = run_mfga(&g, &cfg, &f).unwrap();
        assert_eq!(r.best, max_fuse(&g, &cfg));
        assert_eq!(r.log.entries.len(), 1);
    }

    #[test]
    fn mfga_never_worse_than_seed() {
        let g = corpus::load("batax").unwrap();
        let f = analytic(vec![1000, 1000], 8);
        let cfg = SearchConfig { max_generations: 10, ..SearchConfig::default() };
        let r = run_mfga(&g, &cfg, &f).unwrap();
        let seed = f.evaluate(&max_fuse(&g, &cfg), &g).evaluation.fitness;
        assert!(r.best_fitness <= seed);
        assert_eq!(Some(r.best_fitness), r.log.best().and_then(|e| e.fitness));
    }

    #[test]
    fn budget_is_respected() {
        let g = corpus::load("gemver").unwrap();
        for s in [Strategy::Random, Strategy::Ga, Strategy::Mfga, Strategy::Mf] {
            let f = analytic(vec![100, 100], 8);
            let cfg = SearchConfig { budget: Some(37), max_generations: 1000, ..SearchConfig::default() };
            let r = run_strategy(s, &g, &cfg, &f).unwrap();
            assert!(r.evaluations <= 38, "{s}: {}", r.evaluations);
            assert_eq!(r.evaluations, r.log.entries.len());
        }
    }

    #[test]
    fn invalid_config() {
        let g = corpus::load("vadd").unwrap();
        let f = analytic(vec![10], 8);
        let cfg = SearchConfig { population: 1, ..SearchConfig::default() };
        assert!(matches!(run_mfga(&g, &cfg, &f), Err(SearchError::InvalidConfig(_))));
    }

    #[test]
    fn exhaustive_too_large() {
        let g = corpus::load("gemver").unwrap();
        let f = analytic(vec![10, 10], 8);
        assert!(matches!(
            run_strategy(Strategy::Exhaustive, &g, &SearchConfig::default(), &f),
            Err(SearchError::Enumerate(EnumerateError::TooLarge { .. }))
        ));
    }
}
