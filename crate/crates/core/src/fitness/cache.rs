//! Memoization of fitness evaluations on canonical organism keys.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Evaluation, Fitness};
use crate::frontend::KernelGraph;
use crate::fuseset::{canonicalize, organism_key, Organism};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// One evaluation and whether it ran the underlying fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub key: String,
    pub evaluation: Evaluation,
    pub fresh: bool,
}

/// Memoizes a fitness on canonical organism keys. The inner fitness's
/// context (extents, toolchain) is fixed for the wrapper's lifetime, so it
/// is part of every key implicitly.
pub struct Cached<F> {
    inner: F,
    enabled: bool,
    table: Mutex<HashMap<String, Evaluation>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<F: Fitness> Cached<F> {
    pub fn new(inner: F) -> Self {
        Self::with_enabled(inner, true)
    }

    /// A pass-through wrapper that still counts evaluations.
    pub fn disabled(inner: F) -> Self {
        Self::with_enabled(inner, false)
    }

    pub fn with_enabled(inner: F, enabled: bool) -> Self {
        Cached { inner, enabled, table: Mutex::new(HashMap::new()), hits: AtomicU64::new(0), misses: AtomicU64::new(0) }
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats { hits: self.hits.load(Ordering::Relaxed), misses: self.misses.load(Ordering::Relaxed) }
    }

    pub fn key(&self, org: &Organism, graph: &KernelGraph) -> String {
        organism_key(&canonicalize(org, graph), graph)
    }

    /// Whether evaluating this key would run the underlying fitness.
    pub fn is_cached(&self, key: &str) -> bool {
        self.enabled && self.table.lock().unwrap().contains_key(key)
    }

    pub fn evaluate(&self, org: &Organism, graph: &KernelGraph) -> Outcome {
        let key = self.key(org, graph);
        if self.enabled {
            if let Some(e) = self.table.lock().unwrap().get(key.as_str()) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Outcome { key, evaluation: e.clone(), fresh: false };
            }
        }
        let evaluation = self.inner.evaluate(org, graph);
        self.record(&key, &evaluation);
        Outcome { key, evaluation, fresh: true }
    }

    fn record(&self, key: &str, evaluation: &Evaluation) {
        self.misses.fetch_add(1, Ordering::Relaxed);
        if self.enabled {
            self.table.lock().unwrap().insert(key.to_string(), evaluation.clone());
        }
    }

    /// Evaluates a batch in order. At most `limit` fresh evaluations run;
    /// later uncached organisms yield `None`. Fresh work runs concurrently
    /// when the fitness allows it. Duplicates within the batch are
    /// evaluated once.
    pub fn evaluate_batch(&self, orgs: &[Organism], graph: &KernelGraph, limit: Option<usize>) -> Vec<Option<Outcome>> {
        let keys: Vec<String> = orgs.iter().map(|o| self.key(o, graph)).collect();
        let mut scheduled: Vec<usize> = Vec::new();
        let mut first: HashMap<&str, usize> = HashMap::new();
        let mut plan: Vec<Option<usize>> = Vec::with_capacity(orgs.len());
        for (n, key) in keys.iter().enumerate() {
            if self.is_cached(key) {
                plan.push(Some(usize::MAX));
            } else if let Some(&s) = first.get(key.as_str()).filter(|_| self.enabled) {
                plan.push(Some(s));
            } else if limit.is_none_or(|l| scheduled.len() < l) {
                first.insert(key, scheduled.len());
                plan.push(Some(scheduled.len()));
                scheduled.push(n);
            } else {
                plan.push(None);
            }
        }
        let results: Vec<Evaluation> = if self.inner.parallel_safe() {
            scheduled.par_iter().map(|&n| self.inner.evaluate(&orgs[n], graph)).collect()
        } else {
            scheduled.iter().map(|&n| self.inner.evaluate(&orgs[n], graph)).collect()
        };
        for (&n, e) in scheduled.iter().zip(&results) {
            self.record(&keys[n], e);
        }
        let mut reported = vec![false; scheduled.len()];
        plan.into_iter()
            .zip(keys)
            .map(|(p, key)| {
                let s = p?;
                if s == usize::MAX {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    let evaluation = self.table.lock().unwrap()[key.as_str()].clone();
                    return Some(Outcome { key, evaluation, fresh: false });
                }
                let fresh = !std::mem::replace(&mut reported[s], true);
                if !fresh {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                }
                Some(Outcome { key, evaluation: results[s].clone(), fresh })
            })
            .collect()
    }
}

impl<F: Fitness> Fitness for Cached<F> {
    fn evaluate(&self, org: &Organism, graph: &KernelGraph) -> Evaluation {
        Cached::evaluate(self, org, graph).evaluation
    }

    fn parallel_safe(&self) -> bool {
        self.inner.parallel_safe()
    }

    fn deterministic(&self) -> bool {
        self.inner.deterministic()
    }

    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn context(&self) -> String {
        self.inner.context()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::fitness::{AnalyticFitness, MachineModel};
    use crate::fuseset::{initial_forest, parse_notation};
    use std::sync::atomic::AtomicUsize;

    struct Counting(AtomicUsize, AnalyticFitness);

    impl Fitness for Counting {
        fn evaluate(&self, org: &Organism, graph: &KernelGraph) -> Evaluation {
            self.0.fetch_add(1, Ordering::SeqCst);
            self.1.evaluate(org, graph)
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
            self.1.context()
        }
    }

    fn counting() -> Counting {
        Counting(AtomicUsize::new(0), AnalyticFitness::new(MachineModel::new(vec![100, 100], 4)))
    }

    #[test]
    fn repeat_hits_cache() {
        let g = corpus::load("batax").unwrap();
        let c = Cached::new(counting());
        let org = initial_forest(&g);
        assert!(c.evaluate(&org, &g).fresh);
        assert!(!c.evaluate(&org, &g).fresh);
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 1);
        assert_eq!(c.stats(), CacheStats { hits: 1, misses: 1 });
    }

    #[test]
    fn independently_built_equal_organisms_share_entry() {
        let g = corpus::load("batax").unwrap();
        let c = Cached::new(counting());
        let a = parse_notation("{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}", &g, 4).unwrap();
        let b = parse_notation("{_{p(i)} {_i {_j 1} {_j 2}}} {_{p(j)} {_j 3}}", &g, 4).unwrap();
        c.evaluate(&a, &g);
        c.evaluate(&b, &g);
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn disabled_cache_reevaluates() {
        let g = corpus::load("batax").unwrap();
        let c = Cached::disabled(counting());
        let org = initial_forest(&g);
        c.evaluate(&org, &g);
        c.evaluate(&org, &g);
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn batch_respects_limit_and_duplicates() {
        let g = corpus::load("batax").unwrap();
        let c = Cached::new(counting());
        let a = initial_forest(&g);
        let b = parse_notation("{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}", &g, 4).unwrap();
        let d = parse_notation("{_{p(i)}{_i{_j 1}{_j 2}}}{_j 3}", &g, 4).unwrap();
        let out = c.evaluate_batch(&[a.clone(), a.clone(), b, d], &g, Some(2));
        assert_eq!(out.iter().map(|o| o.as_ref().map(|x| x.fresh)).collect::<Vec<_>>(), [
            Some(true),
            Some(false),
            Some(true),
            None
        ]);
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 2);
        assert_eq!(c.evaluate_batch(&[a], &g, Some(0))[0].as_ref().map(|x| x.fresh), Some(false));
    }
}
