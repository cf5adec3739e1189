use std::sync::Arc;

use fusetune::corpus;
use fusetune::fitness::{measure_empirical, CostSource, EmpiricalFitness, Fitness, Toolchain};
use fusetune::fuseset::{initial_forest, parse_notation};

fn toolchain() -> Option<Toolchain> {
    let tc = Toolchain::detect();
    if tc.is_none() {
        eprintln!("skipped: no working C toolchain with OpenMP");
    }
    tc
}

#[test]
fn mf_batax_validates_and_times() {
    let Some(tc) = toolchain() else { return };
    let g = corpus::load("batax").unwrap();
    let org = parse_notation("{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}", &g, 2).unwrap();
    let report = measure_empirical(&org, &g, &tc, &[200, 200], 3).unwrap();
    assert_eq!(report.source, CostSource::Empirical);
    assert!(report.total > 0.0 && report.total.is_finite());
    assert_eq!(report.parallel_regions, 2);
}

#[test]
fn corrupted_source_fails_to_compile() {
    let Some(tc) = toolchain() else { return };
    let g = corpus::load("vadd").unwrap();
    let fitness = EmpiricalFitness::new(tc, vec![50], 1).with_hook(Arc::new(|s: &mut String| s.push_str("\n#error broken\n")));
    let e = fitness.evaluate(&initial_forest(&g), &g);
    assert_eq!(e.fitness, f64::INFINITY);
    assert!(e.diagnostic.unwrap().starts_with("compile failure"));
}

#[test]
fn wrong_arithmetic_is_a_mismatch() {
    let Some(tc) = toolchain() else { return };
    let g = corpus::load("vadd").unwrap();
    let fitness =
        EmpiricalFitness::new(tc, vec![50], 1).with_hook(Arc::new(|s: &mut String| *s = s.replacen("] + ", "] - ", 1)));
    let e = fitness.evaluate(&initial_forest(&g), &g);
    assert_eq!(e.fitness, f64::INFINITY);
    assert!(e.diagnostic.as_deref().unwrap().starts_with("numerical mismatch"), "{e:?}");
}

#[test]
fn missing_extent_is_reported() {
    let g = corpus::load("batax").unwrap();
    let fitness = EmpiricalFitness::new(Toolchain::from_env(), vec![10], 1);
    let e = fitness.evaluate(&initial_forest(&g), &g);
    assert!(e.diagnostic.unwrap().contains("no extent bound"));
}
