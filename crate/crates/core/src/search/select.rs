//! Tournament selection.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;

use crate::fuseset::Organism;

/// An evaluated organism.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub org: Organism,
    pub key: String,
    pub fitness: f64,
}

impl Member {
    /// Lower fitness first, then the smaller canonical key.
    pub fn better(&self, other: &Member) -> bool {
        self.rank(other) == Ordering::Less
    }

    pub fn rank(&self, other: &Member) -> Ordering {
        self.fitness.total_cmp(&other.fitness).then_with(|| self.key.cmp(&other.key))
    }
}

/// Index of the best of `k` distinct members drawn uniformly. `k` is capped
/// at the population size.
pub fn tournament_select(population: &[Member], k: usize, rng: &mut impl Rng) -> usize {
    assert!(!population.is_empty(), "tournament over an empty population");
    let k = k.clamp(1, population.len());
    sample(rng, population.len(), k)
        .into_iter()
        .min_by(|&a, &b| population[a].rank(&population[b]))
        .expect("k >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pop(n: usize) -> Vec<Member> {
        (0..n).map(|r| Member { org: Organism::new(vec![]), key: format!("{r:03}"), fitness: r as f64 }).collect()
    }

    #[test]
    fn full_tournament_picks_best() {
        let p = pop(7);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(tournament_select(&p, 7, &mut rng), 0);
        }
    }

    #[test]
    fn ties_break_on_key() {
        let mut p = pop(2);
        p[1].fitness = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(tournament_select(&p, 2, &mut rng), 0);
    }
}
