//! Sequential link-formation dynamics and synthetic datasets.
//!
//! Each step a pair meets and the dyad is resampled from its conditional
//! law: the link is present with probability `Λ(ΔQ)`, where `ΔQ` is the
//! potential difference between the graph with and without the link. With
//! any meeting rule that gives every pair positive probability the chain is
//! a random-scan Gibbs sampler whose stationary law is `exp(Q)/c`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{common_neighbors, Adjacency, CovariateSet, DynamicGraph, Graph};
use crate::model::{change_stats, direct_utility, logistic, BlockAssignment, ModelParams};
use crate::par;

/// Chooses which pair meets in a step. Must give every pair positive
/// probability for the stationary law to hold.
pub trait MeetingRule {
    fn draw(&self, g: &DynamicGraph, rng: &mut dyn RngCore) -> (usize, usize);
}

/// Uniform over unordered pairs.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPairs;

impl MeetingRule for UniformPairs {
    fn draw(&self, g: &DynamicGraph, rng: &mut dyn RngCore) -> (usize, usize) {
        uniform_pair(g.node_count(), rng)
    }
}

#[inline]
fn uniform_pair(n: usize, rng: &mut dyn RngCore) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// One dynamics step: draws a pair and resamples its link.
/// Returns the pair and whether the link is present afterwards.
pub fn step<M: MeetingRule + ?Sized>(
    g: &mut DynamicGraph,
    x: &CovariateSet,
    z: &BlockAssignment,
    params: &ModelParams,
    meeting: &M,
    rng: &mut dyn RngCore,
) -> (usize, usize, bool) {
    let (i, j) = meeting.draw(g, rng);
    let (_, delta) = change_stats(g, x, z, params, i, j);
    let present = rng.random::<f64>() < logistic(delta);
    g.set_edge(i, j, present);
    (i, j, present)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub k: usize,
    pub eta: Vec<f64>,
    pub params: ModelParams,
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    /// Record graph statistics every this many steps after burn-in.
    pub trace_every: Option<u64>,
}

impl SimConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        let mut errs = Vec::new();
        if self.n < 2 {
            errs.push(format!("n must be at least 2 (got {})", self.n));
        }
        if let Err(e) = validate_eta(&self.eta, self.k) {
            errs.push(e.to_string());
        }
        if self.steps <= self.burn_in {
            errs.push(format!(
                "steps ({}) must exceed burn_in ({})",
                self.steps, self.burn_in
            ));
        }
        if let Err(e) = self.params.validate(p) {
            errs.push(e.to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(errs.join("; ")))
        }
    }
}

pub fn validate_eta(eta: &[f64], k: usize) -> Result<()> {
    if eta.len() != k || k == 0 {
        return Err(Error::InvalidInput(format!(
            "eta has {} entries for k = {k}",
            eta.len()
        )));
    }
    if eta.iter().any(|&e| e < 0.0 || !e.is_finite()) {
        return Err(Error::InvalidInput(
            "eta entries must be non-negative".into(),
        ));
    }
    let s: f64 = eta.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("eta sums to {s}, not 1")));
    }
    Ok(())
}

/// i.i.d. multinomial block labels.
pub fn draw_types(n: usize, eta: &[f64], rng: &mut dyn RngCore) -> Result<BlockAssignment> {
    validate_eta(eta, eta.len())?;
    let dist = WeightedIndex::new(eta).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let labels = (0..n).map(|_| dist.sample(rng)).collect();
    BlockAssignment::new(labels, eta.len())
}

/// Seeded variant of [`draw_types`].
pub fn draw_types_seeded(n: usize, eta: &[f64], seed: u64) -> Result<BlockAssignment> {
    draw_types(n, eta, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Global (unrestricted) statistics of the chain's current graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TracePoint {
    pub step: u64,
    pub edges: u64,
    pub two_stars: u64,
    pub triangles: u64,
}

/// A running chain with incrementally maintained edge, two-star and
/// triangle counts.
pub struct Chain<'a, M: MeetingRule = UniformPairs> {
    graph: DynamicGraph,
    x: &'a CovariateSet,
    z: &'a BlockAssignment,
    params: &'a ModelParams,
    meeting: M,
    rng: ChaCha8Rng,
    counts: TracePoint,
}

impl<'a> Chain<'a, UniformPairs> {
    pub fn new(
        x: &'a CovariateSet,
        z: &'a BlockAssignment,
        params: &'a ModelParams,
        seed: u64,
    ) -> Self {
        Chain::with_meeting(x, z, params, UniformPairs, seed)
    }
}

impl<'a, M: MeetingRule> Chain<'a, M> {
    /// Starts from the empty graph.
    pub fn with_meeting(
        x: &'a CovariateSet,
        z: &'a BlockAssignment,
        params: &'a ModelParams,
        meeting: M,
        seed: u64,
    ) -> Self {
        Chain {
            graph: DynamicGraph::empty(z.n()),
            x,
            z,
            params,
            meeting,
            rng: ChaCha8Rng::seed_from_u64(seed),
            counts: TracePoint::default(),
        }
    }

    pub fn graph(&self) -> &DynamicGraph {
        &self.graph
    }

    pub fn counts(&self) -> TracePoint {
        self.counts
    }

    /// Advances one step; returns the dyad and its new state.
    pub fn step(&mut self) -> (usize, usize, bool) {
        let (i, j) = self.meeting.draw(&self.graph, &mut self.rng);
        let (_, delta) = change_stats(&self.graph, self.x, self.z, self.params, i, j);
        let present = self.rng.random::<f64>() < logistic(delta);
        let was = self.graph.has_edge(i, j);
        if was != present {
            let c = common_neighbors(&self.graph, i, j, None) as u64;
            let (di, dj) = (self.graph.degree(i) as u64, self.graph.degree(j) as u64);
            if present {
                self.counts.edges += 1;
                self.counts.two_stars += di + dj;
                self.counts.triangles += c;
            } else {
                self.counts.edges -= 1;
                self.counts.two_stars -= di + dj - 2;
                self.counts.triangles -= c;
            }
            self.graph.set_edge(i, j, present);
        }
        self.counts.step += 1;
        (i, j, present)
    }
}

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub graph: Graph,
    pub trace: Vec<TracePoint>,
}

/// Runs `config.steps` steps from the empty graph under uniform meetings.
pub fn run_chain(config: &SimConfig, x: &CovariateSet, z: &BlockAssignment) -> Result<ChainRun> {
    config.validate(x.p())?;
    if z.n() != config.n || (x.p() > 0 && x.n() != config.n) {
        return Err(Error::LengthMismatch {
            expected: config.n,
            got: z.n(),
        });
    }
    let mut chain = Chain::new(x, z, &config.params, config.seed);
    let mut trace = Vec::new();
    for t in 1..=config.steps {
        chain.step();
        if let Some(every) = config.trace_every {
            if t > config.burn_in && every > 0 && (t - config.burn_in).is_multiple_of(every) {
                trace.push(chain.counts());
            }
        }
    }
    Ok(ChainRun {
        graph: chain.graph().freeze(),
        trace,
    })
}

/// How a covariate is drawn for synthetic data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub categories: usize,
    /// Probability that a node takes its block's category
    /// (`block mod categories`) instead of a uniform draw.
    #[serde(default)]
    pub block_affinity: f64,
}

/// How the network is drawn once types and covariates are fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SimStrategy {
    /// The literal dynamics over all pairs with uniform meetings.
    FullChain { steps: u64 },
    /// Between-block links are conditionally independent given the types, so
    /// they are drawn exactly as Bernoulli(Λ(u_ij + u_ji)); each block's
    /// sub-network runs its own chain for `sweeps` passes over its dyads.
    /// Blocks run in parallel with per-block RNG streams.
    Factorized { sweeps: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n: usize,
    pub k: usize,
    pub eta: Vec<f64>,
    pub params: ModelParams,
    pub covariates: Vec<CovariateSpec>,
    pub strategy: SimStrategy,
    pub seed: u64,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n < 2 {
            errs.push(format!("n must be at least 2 (got {})", self.n));
        }
        if let Err(e) = validate_eta(&self.eta, self.k) {
            errs.push(e.to_string());
        }
        if let Err(e) = self.params.validate(self.covariates.len()) {
            errs.push(e.to_string());
        }
        for c in &self.covariates {
            if c.categories == 0 {
                errs.push(format!(
                    "covariate `{}` needs at least one category",
                    c.name
                ));
            }
            if !(0.0..=1.0).contains(&c.block_affinity) {
                errs.push(format!(
                    "covariate `{}` block_affinity must be in [0,1]",
                    c.name
                ));
            }
        }
        if self.covariates.len() > 31 {
            errs.push("at most 31 covariates are supported".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(errs.join("; ")))
        }
    }
}

/// Ground truth and observables of one synthetic draw.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub covariates: CovariateSet,
    pub z: BlockAssignment,
    pub params: ModelParams,
    pub eta: Vec<f64>,
    pub seed: u64,
}

/// Draws types, then covariates, then the network.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let z = draw_types(config.n, &config.eta, &mut rng)?;
    let covariates = draw_covariates(&z, &config.covariates, &mut rng)?;
    let graph = match config.strategy {
        SimStrategy::FullChain { steps } => {
            let mut chain = Chain::new(&covariates, &z, &config.params, rng.random());
            for _ in 0..steps {
                chain.step();
            }
            chain.graph().freeze()
        }
        SimStrategy::Factorized { sweeps } => {
            factorized_draw(&covariates, &z, &config.params, sweeps, rng.random())?
        }
    };
    Ok(Dataset {
        graph,
        covariates,
        z,
        params: config.params.clone(),
        eta: config.eta.clone(),
        seed: config.seed,
    })
}

fn draw_covariates(
    z: &BlockAssignment,
    specs: &[CovariateSpec],
    rng: &mut ChaCha8Rng,
) -> Result<CovariateSet> {
    if specs.is_empty() {
        return Ok(CovariateSet::empty(z.n()));
    }
    let names = specs.iter().map(|s| s.name.clone()).collect();
    let columns = specs
        .iter()
        .map(|s| {
            (0..z.n())
                .map(|i| {
                    if s.block_affinity > 0.0 && rng.random::<f64>() < s.block_affinity {
                        (z.block(i) % s.categories) as u32
                    } else {
                        rng.random_range(0..s.categories) as u32
                    }
                })
                .collect()
        })
        .collect();
    CovariateSet::from_columns(names, columns)
}

fn factorized_draw(
    x: &CovariateSet,
    z: &BlockAssignment,
    params: &ModelParams,
    sweeps: u64,
    seed: u64,
) -> Result<Graph> {
    let members = z.members();
    let within: Vec<Vec<(usize, usize)>> = par::map_collect(members.len(), |b| {
        let nodes = &members[b];
        if nodes.len() < 2 {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64 + 1);
        let local_z = BlockAssignment::single(nodes.len());
        let local_x = restrict_covariates(x, nodes);
        let mut g = DynamicGraph::empty(nodes.len());
        let dyads = (nodes.len() * (nodes.len() - 1) / 2) as u64;
        for _ in 0..sweeps * dyads {
            step(&mut g, &local_x, &local_z, params, &UniformPairs, &mut rng);
        }
        g.freeze()
            .edges()
            .map(|(a, c)| (nodes[a], nodes[c]))
            .collect()
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let between = between_block_edges(x, z, params, &mut rng);
    Graph::from_edge_list(within.into_iter().flatten().chain(between), z.n())
}

fn restrict_covariates(x: &CovariateSet, nodes: &[usize]) -> CovariateSet {
    if x.p() == 0 {
        return CovariateSet::empty(nodes.len());
    }
    let cols = (0..x.p())
        .map(|s| nodes.iter().map(|&i| x.value(i, s)).collect())
        .collect();
    CovariateSet::from_columns(x.names().to_vec(), cols).expect("same shape as source")
}

/// Independent between-block links by thinning: candidate pairs arrive with
/// geometric gaps at the largest link probability, then are accepted with
/// the ratio of their own probability to it.
fn between_block_edges(
    x: &CovariateSet,
    z: &BlockAssignment,
    params: &ModelParams,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let n = z.n();
    let p = x.p();
    let probs: Vec<f64> = (0..1u32 << p)
        .map(|mask| logistic(2.0 * direct_utility(params, mask, false)))
        .collect();
    let p_max = probs.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    if p_max <= 0.0 {
        return out;
    }
    let accept = |i: usize, j: usize, rng: &mut ChaCha8Rng| {
        let mask = x.match_mask(i, j);
        z.block(i) != z.block(j) && rng.random::<f64>() * p_max < probs[mask as usize]
    };
    if p_max >= 0.5 {
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p_max && accept(i, j, rng) {
                    out.push((i, j));
                }
            }
        }
        return out;
    }
    let log_q = (1.0 - p_max).ln();
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        // j is the last visited column in row i; skip a geometric gap
        let u: f64 = 1.0 - rng.random::<f64>();
        let mut skip = (u.ln() / log_q).floor() as u64 + 1;
        loop {
            let remaining = (n - 1 - j) as u64;
            if skip <= remaining {
                j += skip as usize;
                break;
            }
            skip -= remaining;
            i += 1;
            if i + 1 >= n {
                return out;
            }
            j = i;
        }
        if accept(i, j, rng) {
            out.push((i, j));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_eta_gives_one_block() {
        let z = draw_types_seeded(4, &[1.0, 0.0], 3).unwrap();
        assert_eq!(z.labels(), &[0, 0, 0, 0]);
    }

    #[test]
    fn types_are_reproducible() {
        let a = draw_types_seeded(500, &[0.2, 0.3, 0.5], 11).unwrap();
        let b = draw_types_seeded(500, &[0.2, 0.3, 0.5], 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn balanced_types_share() {
        let n = 10_000;
        let z = draw_types_seeded(n, &[0.5, 0.5], 7).unwrap();
        let share = z.sizes()[0] as f64 / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((share - 0.5).abs() <= 3.0 * sigma, "{share}");
    }

    #[test]
    fn bad_eta_rejected() {
        assert!(validate_eta(&[0.5, 0.4], 2).is_err());
        assert!(validate_eta(&[1.2, -0.2], 2).is_err());
        assert!(validate_eta(&[1.0], 2).is_err());
    }

    fn step_rate(alpha: f64, trials: usize) -> f64 {
        let x = CovariateSet::empty(2);
        let z = BlockAssignment::single(2);
        let params = ModelParams::simple(alpha, alpha, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hits = 0;
        for _ in 0..trials {
            let mut g = DynamicGraph::empty(2);
            let (_, _, present) = step(&mut g, &x, &z, &params, &UniformPairs, &mut rng);
            hits += present as usize;
        }
        hits as f64 / trials as f64
    }

    #[test]
    fn step_formation_probabilities() {
        assert_eq!(step_rate(-50.0, 2000), 0.0);
        assert_eq!(step_rate(50.0, 2000), 1.0);
        let r = step_rate(0.0, 20_000);
        assert!(
            (r - 0.5).abs() < 3.0 * (0.25f64 / 20_000.0).sqrt() + 1e-9,
            "{r}"
        );
    }

    #[test]
    fn incremental_counts_match_recount() {
        let x = CovariateSet::empty(12);
        let z = BlockAssignment::single(12);
        let params = ModelParams::simple(-0.2, -0.2, 0.05, 0.1);
        let mut chain = Chain::new(&x, &z, &params, 9);
        for _ in 0..5000 {
            chain.step();
        }
        let s = chain.graph().freeze().stats();
        let c = chain.counts();
        assert_eq!(
            (c.edges, c.two_stars, c.triangles),
            (s.m as u64, s.two_stars, s.triangles)
        );
    }

    #[test]
    fn thinning_matches_enumeration_rate() {
        // between-block link frequency from the skip sampler
        let n = 300;
        let z = BlockAssignment::new((0..n).map(|i| i % 3).collect(), 3).unwrap();
        let x = CovariateSet::empty(n);
        let params = ModelParams::simple(0.0, -1.5, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = between_block_edges(&x, &z, &params, &mut rng);
        let pairs = 3 * 100 * 100;
        let p = logistic(-3.0);
        let mean = pairs as f64 * p;
        let sd = (pairs as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (e.len() as f64 - mean).abs() < 4.0 * sd,
            "{} vs {mean}",
            e.len()
        );
        assert!(e.iter().all(|&(i, j)| i < j && z.block(i) != z.block(j)));
    }
}
