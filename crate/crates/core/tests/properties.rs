mod common;

use std::collections::HashMap;
use std::sync::Mutex;

use common::{chain, walk_config};
use fusetune::codegen::{
    generate, interpret_logical, lower, lower_contracted, random_inputs, reference_evaluate, relative_error,
};
use fusetune::corpus;
use fusetune::fitness::{AnalyticFitness, Cached, Evaluation, Fitness, MachineModel};
use fusetune::frontend::{parse_kernel, Decl, DeclaredType, Expr, KernelGraph, KernelSpec, Orientation, Statement};
use fusetune::fuseset::{
    canonicalize, contracted_temporaries, format_notation, fusion_legal, organism_key, parse_notation, Organism,
};
use fusetune::search::{neighbors, run_strategy, tournament_select, Member, Mutation, SearchConfig, Strategy as Search};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, failure_persistence: None, ..ProptestConfig::default() }
}

fn graphs() -> Vec<KernelGraph> {
    corpus::KERNELS.iter().map(|(n, _)| corpus::load(n).unwrap()).collect()
}

fn expr(vars: Vec<String>) -> impl Strategy<Value = Expr> {
    let leaf = proptest::sample::select(vars).prop_map(Expr::Var);
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::transpose),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::mul(a, b)),
        ]
    })
}

fn declared() -> impl Strategy<Value = DeclaredType> {
    let o = prop_oneof![Just(Orientation::Row), Just(Orientation::Column)];
    prop_oneof![Just(DeclaredType::Scalar), o.clone().prop_map(DeclaredType::Vector), o.prop_map(DeclaredType::Matrix)]
}

fn spec() -> impl Strategy<Value = KernelSpec> {
    (1usize..5, 1usize..3).prop_flat_map(|(n_in, n_out)| {
        let inputs: Vec<String> = (0..n_in).map(|k| format!("a{k}")).collect();
        let outputs: Vec<String> = (0..n_out).map(|k| format!("y{k}")).collect();
        // Statement k may read the inputs and the outputs assigned before it.
        let exprs: Vec<_> = (0..n_out)
            .map(|k| expr(inputs.iter().chain(&outputs[..k]).cloned().collect()))
            .collect();
        (
            proptest::collection::vec(declared(), n_in),
            proptest::collection::vec(declared(), n_out),
            exprs,
        )
            .prop_map(move |(ti, to, exprs)| KernelSpec {
                name: "Gen".into(),
                inputs: inputs.iter().zip(ti).map(|(n, ty)| Decl { name: n.clone(), ty }).collect(),
                outputs: outputs.iter().zip(to).map(|(n, ty)| Decl { name: n.clone(), ty }).collect(),
                statements: outputs.iter().zip(exprs).map(|(t, e)| Statement { target: t.clone(), expr: e }).collect(),
            })
    })
}

/// A random organism of a random corpus kernel.
fn sampled(graphs: &[KernelGraph], kernel: usize, seed: u64, steps: usize) -> (&KernelGraph, Organism) {
    let g = &graphs[kernel % graphs.len()];
    let orgs = chain(g, &walk_config(6), seed, steps);
    (g, orgs.last().unwrap().clone())
}

proptest! {
    #![proptest_config(cases(256))]

    #[test]
    fn kernel_text_round_trips(s in spec()) {
        let printed = s.to_string();
        prop_assert_eq!(parse_kernel(&printed).unwrap(), s, "{}", printed);
    }
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn notation_and_key_round_trip(kernel in 0usize..10, seed in any::<u64>(), steps in 0usize..40) {
        let gs = graphs();
        let (g, org) = sampled(&gs, kernel, seed, steps);
        let canon = canonicalize(&org, g);
        prop_assert_eq!(&canon, &org);
        let key = organism_key(&org, g);
        prop_assert_eq!(&parse_notation(&key, g, 1).unwrap(), &org);
        let plain = parse_notation(&format_notation(&org, g), g, 1).unwrap();
        prop_assert_eq!(format_notation(&plain, g), format_notation(&org, g));
    }

    #[test]
    fn mutation_and_crossover_stay_legal(kernel in 0usize..10, seed in any::<u64>()) {
        let gs = graphs();
        let g = &gs[kernel];
        for org in chain(g, &walk_config(8), seed, 60) {
            prop_assert!(fusion_legal(&org, g).is_ok(), "{}", organism_key(&org, g));
            prop_assert_eq!(&canonicalize(&org, g), &org);
        }
    }

    #[test]
    fn lowering_preserves_semantics(kernel in 0usize..10, seed in any::<u64>(), m in 1usize..12, n in 1usize..12) {
        let gs = graphs();
        let (g, org) = sampled(&gs, kernel, seed, 25);
        let ext: Vec<usize> = (0..g.dims.len()).map(|d| if d % 2 == 0 { m } else { n }).collect();
        let inputs = random_inputs(g, &ext, seed);
        let want = reference_evaluate(&g.flow.spec, &inputs).unwrap();
        for ir in [lower(&org, g), lower_contracted(&org, g)] {
            for (got, w) in interpret_logical(&ir, g, &ext, &inputs).iter().zip(&want) {
                prop_assert!(relative_error(&got.data, &w.data) <= 1e-10);
            }
        }
    }

    #[test]
    fn emitted_structure_matches_the_tree(kernel in 0usize..10, seed in any::<u64>()) {
        let gs = graphs();
        let (g, org) = sampled(&gs, kernel, seed, 30);
        let ir = lower_contracted(&org, g);
        prop_assert_eq!(ir.loop_count(), org.loop_count());
        prop_assert_eq!(ir.parallel_count(), org.partition_count());
        prop_assert_eq!(ir.contracted(), contracted_temporaries(&org, g));
        let c = generate(&org, g).source;
        prop_assert_eq!(c.matches("#pragma omp parallel for").count(), org.partition_count());
    }

    #[test]
    fn fusion_never_loses_contraction(kernel in 0usize..10, seed in any::<u64>()) {
        let gs = graphs();
        let (g, org) = sampled(&gs, kernel, seed, 20);
        let cfg = walk_config(6);
        let before = contracted_temporaries(&org, g);
        if org.partition_count() == 0 {
            for child in neighbors(&org, g, Mutation::AddFusion, &cfg) {
                let after = contracted_temporaries(&child, g);
                prop_assert!(before.iter().all(|d| after.contains(d)), "{} -> {}", organism_key(&org, g), organism_key(&child, g));
            }
        }
    }
}

/// Counts evaluations per canonical key.
struct Counting {
    inner: AnalyticFitness,
    calls: Mutex<HashMap<String, usize>>,
}

impl Fitness for Counting {
    fn evaluate(&self, org: &Organism, graph: &KernelGraph) -> Evaluation {
        *self.calls.lock().unwrap().entry(organism_key(&canonicalize(org, graph), graph)).or_default() += 1;
        self.inner.evaluate(org, graph)
    }
    fn parallel_safe(&self) -> bool {
        true
    }
    fn deterministic(&self) -> bool {
        true
    }
    fn name(&self) -> &'static str {
        "counting"
    }
    fn context(&self) -> String {
        self.inner.context()
    }
}

const STRATEGIES: [Search; 4] = [Search::Random, Search::Mf, Search::Ga, Search::Mfga];

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn searches_are_reproducible_cached_and_monotone(
        kernel in 0usize..10,
        strategy in 0usize..4,
        seed in any::<u64>(),
        budget in 0usize..120,
    ) {
        let gs = graphs();
        let g = &gs[kernel];
        let cfg = SearchConfig { seed, budget: Some(budget), max_generations: 20, ..SearchConfig::default() };
        let machine = MachineModel::new(vec![300; g.dims.len()], cfg.cores);
        let fitness = Cached::new(Counting { inner: AnalyticFitness::new(machine.clone()), calls: Mutex::new(HashMap::new()) });
        let r = run_strategy(STRATEGIES[strategy], g, &cfg, &fitness).unwrap();

        let calls = fitness.inner().calls.lock().unwrap().clone();
        prop_assert!(calls.values().all(|&c| c == 1));
        prop_assert_eq!(calls.len(), r.evaluations);
        prop_assert!(r.evaluations <= budget + 1);
        prop_assert_eq!(r.log.entries.len(), r.evaluations);
        for e in &r.log.entries {
            prop_assert!(calls.contains_key(&e.key));
            prop_assert!(fusion_legal(&parse_notation(&e.key, g, 1).unwrap(), g).is_ok());
        }

        let inc = r.log.incumbents();
        prop_assert!(inc.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(inc.last().copied().unwrap_or(f64::INFINITY), r.best_fitness);

        let again = run_strategy(STRATEGIES[strategy], g, &cfg, &Cached::new(AnalyticFitness::new(machine))).unwrap();
        prop_assert_eq!(again.log.to_jsonl(), r.log.to_jsonl());
        prop_assert_eq!(generate(&again.best, g).source, generate(&r.best, g).source);
    }
}

#[test]
fn binary_tournament_rank_distribution() {
    let n = 6usize;
    let population: Vec<Member> = (0..n)
        .map(|r| Member { org: Organism::new(vec![]), key: format!("k{r}"), fitness: 10.0 * (n - r) as f64 })
        .collect();
    // Member r has rank n - r (rank 1 is the fittest).
    let draws = 120_000;
    let mut wins = vec![0usize; n];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..draws {
        wins[tournament_select(&population, 2, &mut rng)] += 1;
    }
    let pairs = (n * (n - 1) / 2) as f64;
    for (idx, &w) in wins.iter().enumerate() {
        let rank = n - idx;
        let p = (n - rank) as f64 / pairs;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt().max(1.0);
        let expected = draws as f64 * p;
        assert!((w as f64 - expected).abs() <= 5.0 * sigma, "rank {rank}: {w} vs {expected}");
    }
    assert_eq!(wins[0], 0);
}
