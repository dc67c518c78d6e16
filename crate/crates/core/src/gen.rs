//! Dataset generators: random unfoldable instances, foldable
//! feasible/infeasible cycle pairs, and the hand-built six-variable
//! counterexample pair.
//!
//! All randomness flows through a seeded ChaCha8 stream, and normal draws use
//! the Box-Muller transform (cosine branch only), so equal seeds reproduce
//! byte-identical datasets on any platform. The second parameter of every
//! normal distribution is its standard deviation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{encode_graph, RandomFeatures};
use crate::milp::{Lower, MilpInstance, Sense, Upper};
use crate::wl::is_foldable;

/// Dataset family to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Random unfoldable instances (rejection-sampled).
    D1,
    /// Foldable cycle pairs with zero objective.
    D2,
    /// Foldable cycle pairs with constant objective 0.01.
    D2Gen,
    /// The fixed six-variable counterexample pair.
    Counterexample,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::D1 => "d1",
            Variant::D2 => "d2",
            Variant::D2Gen => "d2gen",
            Variant::Counterexample => "counterexample",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "d1" => Some(Variant::D1),
            "d2" => Some(Variant::D2),
            "d2gen" => Some(Variant::D2Gen),
            "counterexample" => Some(Variant::Counterexample),
            _ => None,
        }
    }
}

/// Generator configuration.
#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    pub seed: u64,
    pub count: usize,
    pub variant: Variant,
    /// Constraints per instance.
    pub m: usize,
    /// Variables per instance.
    pub n: usize,
    /// Nonzero coefficients per random instance.
    pub nnz: usize,
}

impl GenConfig {
    pub fn new(variant: Variant, seed: u64, count: usize) -> GenConfig {
        GenConfig {
            seed,
            count,
            variant,
            m: 6,
            n: 20,
            nnz: 60,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("rejection sampling failed {limit} consecutive times")]
    RejectionLimit { limit: usize },
    #[error("pair-based variants need an even count, got {count}")]
    OddPairCount { count: usize },
    #[error("nnz {nnz} exceeds matrix capacity {cap}")]
    TooManyNonzeros { nnz: usize, cap: usize },
}

/// Consecutive-rejection budget for unfoldable sampling.
const REJECTION_LIMIT: usize = 1000;

/// Counters reported alongside a generated dataset.
#[derive(Debug, Clone, Copy, Default)]
pub struct GenStats {
    pub rejections: usize,
}

/// Seeded sampler wrapping the shared RNG stream.
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Sampler {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Standard-normal draw via Box-Muller (cosine branch; one uniform pair
    /// per draw, the sine branch is discarded for a stateless transform).
    pub fn standard_normal(&mut self) -> f64 {
        let u1: f64 = 1.0 - self.rng.gen::<f64>(); // (0, 1]
        let u2: f64 = self.rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Normal draw with the given mean and standard deviation.
    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.standard_normal()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// `k` distinct values from `0..n` in random order.
    pub fn distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.rng, n, k).into_vec()
    }

    /// Random feature vectors for a graph with `m` + `n` vertices, each
    /// entry uniform on [0, 1].
    pub fn random_features(&mut self, m: usize, n: usize) -> RandomFeatures {
        RandomFeatures {
            v: (0..m).map(|_| self.uniform()).collect(),
            w: (0..n).map(|_| self.uniform()).collect(),
        }
    }
}

/// Generate random unfoldable instances, resampling any draw whose graph
/// folds.
pub fn gen_d1(cfg: &GenConfig) -> Result<Vec<MilpInstance>, GenError> {
    gen_d1_with_stats(cfg).map(|(v, _)| v)
}

pub fn gen_d1_with_stats(cfg: &GenConfig) -> Result<(Vec<MilpInstance>, GenStats), GenError> {
    if cfg.nnz > cfg.m * cfg.n {
        return Err(GenError::TooManyNonzeros {
            nnz: cfg.nnz,
            cap: cfg.m * cfg.n,
        });
    }
    let mut s = Sampler::new(cfg.seed);
    let mut out = Vec::with_capacity(cfg.count);
    let mut stats = GenStats::default();
    let mut consecutive = 0usize;
    while out.len() < cfg.count {
        let inst = sample_d1_instance(&mut s, cfg);
        if is_foldable(&encode_graph(&inst)) {
            stats.rejections += 1;
            consecutive += 1;
            if consecutive >= REJECTION_LIMIT {
                return Err(GenError::RejectionLimit {
                    limit: REJECTION_LIMIT,
                });
            }
            continue;
        }
        consecutive = 0;
        out.push(inst);
    }
    Ok((out, stats))
}

fn sample_d1_instance(s: &mut Sampler, cfg: &GenConfig) -> MilpInstance {
    let (m, n) = (cfg.m, cfg.n);
    let c: Vec<f64> = (0..n).map(|_| s.normal(0.0, 0.01)).collect();
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for _ in 0..n {
        let a = s.normal(0.0, 10.0);
        let b = s.normal(0.0, 10.0);
        lower.push(Lower::Finite(a.min(b)));
        upper.push(Upper::Finite(a.max(b)));
    }
    let integer: Vec<bool> = (0..n).map(|_| s.bernoulli(0.5)).collect();
    let senses: Vec<Sense> = (0..m)
        .map(|_| match s.below(3) {
            0 => Sense::Le,
            1 => Sense::Eq,
            _ => Sense::Ge,
        })
        .collect();
    let b: Vec<f64> = (0..m).map(|_| s.normal(0.0, 1.0)).collect();
    let mut positions = s.distinct(m * n, cfg.nnz);
    positions.sort_unstable();
    let entries: Vec<(usize, usize, f64)> = positions
        .into_iter()
        .map(|p| (p / n, p % n, s.normal(0.0, 1.0)))
        .collect();
    MilpInstance::new(m, n, entries, b, senses, c, lower, upper, integer)
        .expect("sampled instance is structurally valid")
}

/// Generate foldable cycle pairs. Odd positions hold the single-6-cycle
/// (feasible) system, even positions the two-3-cycle (infeasible) system;
/// both members of a pair share the cycle variable set, the continuous
/// bounds, and the objective, making them indistinguishable by refinement.
pub fn gen_d2(cfg: &GenConfig) -> Result<Vec<MilpInstance>, GenError> {
    if cfg.count % 2 != 0 {
        return Err(GenError::OddPairCount { count: cfg.count });
    }
    let obj = match cfg.variant {
        Variant::D2Gen => 0.01,
        _ => 0.0,
    };
    let mut s = Sampler::new(cfg.seed);
    let mut out = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count / 2 {
        let cycle = s.distinct(cfg.n, 6);
        let mut lower = vec![Lower::Finite(0.0); cfg.n];
        let mut upper = vec![Upper::Finite(1.0); cfg.n];
        let mut integer = vec![false; cfg.n];
        for &j in &cycle {
            integer[j] = true;
        }
        for j in 0..cfg.n {
            if !cycle.contains(&j) {
                let a = s.normal(0.0, 10.0);
                let b = s.normal(0.0, 10.0);
                lower[j] = Lower::Finite(a.min(b));
                upper[j] = Upper::Finite(a.max(b));
            }
        }
        let c = vec![obj; cfg.n];
        for second in [false, true] {
            let entries = cycle_rows(&cycle, second);
            out.push(
                MilpInstance::new(
                    6,
                    cfg.n,
                    entries,
                    vec![1.0; 6],
                    vec![Sense::Eq; 6],
                    c.clone(),
                    lower.clone(),
                    upper.clone(),
                    integer.clone(),
                )
                .expect("cycle instance is structurally valid"),
            );
        }
    }
    Ok(out)
}

/// Rows pairing consecutive cycle variables to sum to one: a single 6-cycle,
/// or two disjoint 3-cycles over the same index set.
fn cycle_rows(cycle: &[usize], two_triangles: bool) -> Vec<(usize, usize, f64)> {
    let mut entries = Vec::with_capacity(12);
    let mut push = |row: usize, a: usize, b: usize| {
        entries.push((row, cycle[a], 1.0));
        entries.push((row, cycle[b], 1.0));
    };
    if two_triangles {
        push(0, 0, 1);
        push(1, 1, 2);
        push(2, 2, 0);
        push(3, 3, 4);
        push(4, 4, 5);
        push(5, 5, 3);
    } else {
        for i in 0..6 {
            push(i, i, (i + 1) % 6);
        }
    }
    entries
}

/// The fixed counterexample pair: six binary variables, unit objective, six
/// equality rows forming one 6-cycle (feasible, optimum 3) versus two
/// 3-cycles (infeasible).
pub fn gen_counterexample() -> (MilpInstance, MilpInstance) {
    let cycle: Vec<usize> = (0..6).collect();
    let build = |two_triangles: bool| {
        MilpInstance::new(
            6,
            6,
            cycle_rows(&cycle, two_triangles),
            vec![1.0; 6],
            vec![Sense::Eq; 6],
            vec![1.0; 6],
            vec![Lower::Finite(0.0); 6],
            vec![Upper::Finite(1.0); 6],
            vec![true; 6],
        )
        .expect("counterexample instance is structurally valid")
    };
    (build(false), build(true))
}

/// Generate a dataset per the configured variant.
pub fn gen_dataset(cfg: &GenConfig) -> Result<Vec<MilpInstance>, GenError> {
    match cfg.variant {
        Variant::D1 => gen_d1(cfg),
        Variant::D2 | Variant::D2Gen => gen_d2(cfg),
        Variant::Counterexample => {
            let (a, b) = gen_counterexample();
            Ok(vec![a, b])
        }
    }
}
