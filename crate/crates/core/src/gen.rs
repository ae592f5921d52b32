//! Seeded random instance generation for sweeps and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{compile_neq_constraint, CspInstance, Literal, Nogood, Value, VarId};

/// Parameters for [`random_instance`].
#[derive(Clone, Debug)]
pub struct RandomSpec {
    pub vars: std::ops::RangeInclusive<usize>,
    pub domain: std::ops::RangeInclusive<u32>,
    pub nogoods: std::ops::RangeInclusive<usize>,
    /// Literals per nogood, drawn over distinct variables.
    pub arity: std::ops::RangeInclusive<usize>,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            vars: 2..=4,
            domain: 2..=3,
            nogoods: 1..=10,
            arity: 1..=3,
        }
    }
}

/// A random extensional CSP. Every variable gets its own domain size; each
/// nogood picks distinct variables and one in-domain value for each.
pub fn random_instance(spec: &RandomSpec, seed: u64) -> CspInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(spec.vars.clone());
    let domains: Vec<Vec<Value>> = (0..n)
        .map(|_| (1..=rng.gen_range(spec.domain.clone())).map(Value).collect())
        .collect();
    let count = rng.gen_range(spec.nogoods.clone());
    let mut all_vars: Vec<u32> = (0..n as u32).collect();
    let mut nogoods = Vec::with_capacity(count);
    for _ in 0..count {
        let k = rng.gen_range(spec.arity.clone()).clamp(1, n);
        all_vars.shuffle(&mut rng);
        let lits: Nogood = all_vars[..k]
            .iter()
            .map(|&v| {
                let dom = &domains[v as usize];
                Literal {
                    var: VarId(v),
                    val: dom[rng.gen_range(0..dom.len())],
                }
            })
            .collect();
        nogoods.push(lits);
    }
    CspInstance::new(domains, nogoods)
}

/// Erdős–Rényi graph coloring: each vertex pair is an edge with
/// probability `density`.
pub fn random_coloring(vertices: usize, colors: u32, density: f64, seed: u64) -> CspInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = CspInstance::uniform(vertices, colors);
    let mut nogoods = Vec::new();
    for u in 0..vertices as u32 {
        for v in (u + 1)..vertices as u32 {
            if rng.gen_bool(density) {
                nogoods.extend(compile_neq_constraint(VarId(u), VarId(v), &base).expect("distinct vertices"));
            }
        }
    }
    base.with_nogoods(nogoods)
}
