use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hergm_core::block_em::{self, adjusted_rand_index, size_summary, yule_coefficient, EmConfig};
use hergm_core::mple::{self, FitResult, MpleConfig};
use hergm_core::simulator::{self, SimConfig};
use hergm_core::{BlockAssignment, CovariateSet, Graph};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    core_errors, EstimateConfig, EstimateOverrides, Fields, SimulateConfig, SynthConfig,
};
use crate::error::{CliError, CliResult};
use crate::io::{self, NodeMap};

const TOOL: &str = env!("CARGO_PKG_NAME");
const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Records what a command read, wrote and was configured with. No
/// timestamps or host details, so reruns produce identical manifests.
#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a C,
    outputs: Vec<String>,
    summary: Value,
}

struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Path for `name`, recorded in the manifest.
    fn file(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn manifest<C: Serialize>(
        mut self,
        command: &str,
        seed: u64,
        config: &C,
        summary: Value,
    ) -> CliResult<PathBuf> {
        let path = self.dir.join("manifest.json");
        self.written.sort();
        let m = Manifest {
            tool: TOOL,
            version: VERSION,
            core_version: hergm_core::VERSION,
            command,
            seed,
            config,
            outputs: self.written,
            summary,
        };
        io::write_json(&path, &m)?;
        Ok(self.dir)
    }
}

/// Default output directory when neither a flag nor the config names one.
pub const DEFAULT_OUT: &str = "hergm-out";

fn out_dir(out: Option<&Path>, fields: Option<&mut Fields>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| fields.and_then(|f| f.take_path("out")))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn config_error(e: hergm_core::Error) -> CliError {
    CliError::Config(core_errors(e))
}

pub fn synth(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> CliResult<PathBuf> {
    let mut fields = Fields::load_opt(config)?;
    let out = &out_dir(out, Some(&mut fields));
    let cfg = SynthConfig::from_fields(&mut fields, seed)?;
    let data = simulator::generate_dataset(&cfg.dataset_config()).map_err(config_error)?;
    let nodes = NodeMap::sequential(data.graph.n());
    let mut out = OutDir::create(out)?;

    io::write_edge_list(&out.file("edges.tsv"), &data.graph, &nodes)?;
    io::write_covariates(&out.file("covariates.csv"), &data.covariates, &nodes)?;
    let truth = json!({
        "n": data.graph.n(),
        "k": cfg.k,
        "seed": data.seed,
        "eta": data.eta,
        "covariates": data.covariates.names(),
        "params": cfg.params,
        "z": data.z.labels(),
    });
    io::write_json(&out.file("truth.json"), &truth)?;
    let stats = data.graph.stats();
    let summary = json!({ "nodes": stats.n, "edges": stats.m, "density": stats.density });
    log::info!("synthesized {} nodes and {} edges", stats.n, stats.m);
    out.manifest("synth", cfg.seed, &cfg, summary)
}

/// Graph and covariate table. With a covariate file its rows fix the node
/// set and order; otherwise nodes appear in edge-list order.
fn load_network(
    edges: &Path,
    covariates: Option<&Path>,
) -> CliResult<(Graph, NodeMap, Option<io::CovariateTable>)> {
    let pairs = io::read_edge_pairs(edges)?;
    match covariates {
        Some(path) => {
            let table = io::read_covariate_table(path)?;
            let mut nodes = table.nodes.clone();
            let g = io::build_graph(&pairs, &mut nodes, true, edges)?;
            Ok((g, nodes, Some(table)))
        }
        None => {
            let mut nodes = NodeMap::default();
            let g = io::build_graph(&pairs, &mut nodes, false, edges)?;
            Ok((g, nodes, None))
        }
    }
}

#[derive(Serialize)]
struct CoefficientRow {
    group: &'static str,
    term: String,
    estimate: f64,
    se: f64,
    z: f64,
}

fn coefficient_rows(est: &mple::Estimate) -> Vec<CoefficientRow> {
    let mut rows = Vec::new();
    for (group, fit) in [("within", &est.within), ("between", &est.between)] {
        let Some(f) = fit else { continue };
        for k in 0..f.names.len() {
            rows.push(CoefficientRow {
                group,
                term: f.names[k].clone(),
                estimate: f.coefficients[k],
                se: f.se[k],
                z: f.z_scores[k],
            });
        }
    }
    rows
}

#[derive(Serialize)]
struct Coefficients<'a> {
    /// Flat keys such as `within_two_stars`, matching the truth file.
    estimates: BTreeMap<String, Value>,
    within: &'a Option<FitResult>,
    between: &'a Option<FitResult>,
}

pub fn estimate(
    config: Option<&Path>,
    overrides: EstimateOverrides,
    out: Option<&Path>,
) -> CliResult<PathBuf> {
    let mut fields = Fields::load_opt(config)?;
    let out = &out_dir(out, Some(&mut fields));
    let cfg = EstimateConfig::from_fields(&mut fields, overrides)?;
    let (g, nodes, table) = load_network(&cfg.edges, cfg.covariates.as_deref())?;
    let x = match &table {
        Some(t) => t.to_set(cfg.use_covariates.as_deref(), cfg.pool_below)?,
        None => CovariateSet::empty(g.n()),
    };
    log::info!(
        "loaded {} nodes, {} edges, {} covariates",
        g.n(),
        g.m(),
        x.p()
    );
    let mut out = OutDir::create(out)?;
    let mut summary = serde_json::Map::new();
    summary.insert("nodes".into(), g.n().into());
    summary.insert("edges".into(), g.m().into());

    let z = match &cfg.blocks {
        Some(path) => {
            let z = io::read_blocks(path, &nodes)?;
            summary.insert("blocks_source".into(), "file".into());
            z
        }
        None => {
            let x_em = if cfg.no_covariates {
                CovariateSet::empty(g.n())
            } else {
                x.clone()
            };
            let em_cfg = EmConfig {
                k_max: cfg.k_max,
                iters: cfg.em_iters,
                tol: cfg.tol,
                seed: cfg.seed,
                smoothing: cfg.smoothing,
                sparsity_budget: cfg.sparsity_budget,
                quad_form: cfg.quad_form,
                checkpoint_dir: cfg.checkpoint.then(|| out.dir.join("checkpoints")),
                init: None,
            };
            let res = block_em::em_run(&g, &x_em, &em_cfg)?;
            let init = res.init.compacted();
            io::write_blocks(&out.file("init_blocks.csv"), &init, &nodes)?;
            io::write_csv(
                &out.file("lower_bound.csv"),
                &["iteration", "lower_bound", "delta"],
                res.trace.iter().map(|r| {
                    [
                        r.iteration.to_string(),
                        format!("{:.17e}", r.lower_bound),
                        r.delta.map(|d| format!("{d:.17e}")).unwrap_or_default(),
                    ]
                }),
            )?;
            let z = res.z.compacted();
            summary.insert("blocks_source".into(), "em".into());
            summary.insert(
                "em_iterations".into(),
                (res.trace.len().saturating_sub(1)).into(),
            );
            summary.insert("em_converged".into(), res.converged.into());
            summary.insert(
                "lower_bound".into(),
                res.trace.last().map(|r| r.lower_bound).into(),
            );
            summary.insert("init_blocks".into(), json!(size_summary(&init)));
            summary.insert(
                "yule_init_vs_final".into(),
                yule_coefficient(&init, &z)?.into(),
            );
            z
        }
    };
    io::write_blocks(&out.file("blocks.csv"), &z, &nodes)?;
    let sizes = z.sizes();
    io::write_csv(
        &out.file("block_sizes.csv"),
        &["block", "size"],
        sizes
            .iter()
            .enumerate()
            .map(|(b, s)| [b.to_string(), s.to_string()]),
    )?;
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in sizes.iter().filter(|&&s| s > 0) {
        *hist.entry(s).or_default() += 1;
    }
    io::write_csv(
        &out.file("block_size_histogram.csv"),
        &["size", "blocks"],
        hist.iter().map(|(s, c)| [s.to_string(), c.to_string()]),
    )?;
    summary.insert("blocks".into(), json!(size_summary(&z)));

    let mple_cfg = MpleConfig {
        sampling: cfg.sampling_rule,
        terms: cfg.terms,
        seed: cfg.seed,
    };
    let est = mple::estimate(&g, &x, &z, &mple_cfg)?;
    let rows = coefficient_rows(&est);
    let mut estimates = BTreeMap::new();
    for r in &rows {
        estimates.insert(
            format!("{}_{}", r.group, r.term),
            json!({ "estimate": r.estimate, "se": r.se }),
        );
    }
    io::write_json(
        &out.file("coefficients.json"),
        &Coefficients {
            estimates,
            within: &est.within,
            between: &est.between,
        },
    )?;
    io::write_csv(
        &out.file("coefficients.csv"),
        &["group", "term", "estimate", "se", "z"],
        rows.iter().map(|r| {
            [
                r.group.to_string(),
                r.term.clone(),
                format!("{:.10e}", r.estimate),
                format!("{:.10e}", r.se),
                format!("{:.6}", r.z),
            ]
        }),
    )?;
    out.manifest("estimate", cfg.seed, &cfg, Value::Object(summary))
}

#[derive(Serialize)]
struct CovariateMatch {
    /// Share of edges whose endpoints share the category.
    edge_match_rate: f64,
    /// Share of all node pairs that share the category.
    pair_match_rate: f64,
}

#[derive(Serialize)]
struct BlockStats {
    blocks: usize,
    within_edges: usize,
    between_edges: usize,
    within_share: f64,
    within_density: f64,
    between_density: f64,
}

#[derive(Serialize)]
struct StatsReport {
    nodes: usize,
    edges: usize,
    density: f64,
    two_stars: u64,
    triangles: u64,
    max_degree: usize,
    mean_degree: f64,
    covariates: BTreeMap<String, CovariateMatch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    blocks: Option<BlockStats>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

fn pairs(k: usize) -> f64 {
    k as f64 * (k as f64 - 1.0) / 2.0
}

fn block_stats(g: &Graph, z: &BlockAssignment) -> BlockStats {
    let within_edges = g.edges().filter(|&(i, j)| z.block(i) == z.block(j)).count();
    let within_pairs: f64 = z.sizes().iter().map(|&s| pairs(s)).sum();
    let between_pairs = pairs(g.n()) - within_pairs;
    let between_edges = g.m() - within_edges;
    BlockStats {
        blocks: z.sizes().iter().filter(|&&s| s > 0).count(),
        within_edges,
        between_edges,
        within_share: ratio(within_edges as f64, g.m() as f64),
        within_density: ratio(within_edges as f64, within_pairs),
        between_density: ratio(between_edges as f64, between_pairs),
    }
}

pub fn stats(
    edges: &Path,
    covariates: Option<&Path>,
    blocks: Option<&Path>,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<PathBuf> {
    let out = &out_dir(out, None);
    let (g, nodes, table) = load_network(edges, covariates)?;
    let s = g.stats();
    let mut out = OutDir::create(out)?;
    io::write_csv(
        &out.file("degree_histogram.csv"),
        &["degree", "nodes"],
        s.degree_histogram
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(d, c)| [d.to_string(), c.to_string()]),
    )?;
    let mut cov = BTreeMap::new();
    if let Some(t) = &table {
        let x = t.to_set(None, None)?;
        for (c, name) in x.names().iter().enumerate() {
            let matched = g.edges().filter(|&(i, j)| x.same(i, j, c)).count();
            let same_pairs: f64 = (0..x.category_count(c))
                .map(|cat| pairs(x.column(c).iter().filter(|&&v| v as usize == cat).count()))
                .sum();
            cov.insert(
                name.clone(),
                CovariateMatch {
                    edge_match_rate: ratio(matched as f64, g.m() as f64),
                    pair_match_rate: ratio(same_pairs, pairs(g.n())),
                },
            );
        }
    }
    let block_report = match blocks {
        Some(p) => Some(block_stats(&g, &io::read_blocks(p, &nodes)?)),
        None => None,
    };
    let report = StatsReport {
        nodes: s.n,
        edges: s.m,
        density: s.density,
        two_stars: s.two_stars,
        triangles: s.triangles,
        max_degree: s.degree_histogram.len().saturating_sub(1),
        mean_degree: ratio(2.0 * s.m as f64, s.n as f64),
        covariates: cov,
        blocks: block_report,
    };
    io::write_json(&out.file("stats.json"), &report)?;
    let inputs = json!({ "edges": edges, "covariates": covariates, "blocks": blocks });
    out.manifest(
        "stats",
        seed,
        &inputs,
        json!({ "nodes": s.n, "edges": s.m }),
    )
}

/// Labels keyed by node id, in file order.
fn read_partition(path: &Path) -> CliResult<(NodeMap, BlockAssignment)> {
    let nodes = if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(
            &std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
        )
        .map_err(|e| CliError::io(path, e))?;
        let n = v.get("z").and_then(Value::as_array).map_or(0, Vec::len);
        NodeMap::sequential(n)
    } else {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::io(path, e))?;
        let mut nodes = NodeMap::default();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CliError::io(path, e))?;
            let id = rec.get(0).unwrap_or("");
            if nodes.get(id).is_some() {
                return Err(CliError::Data(format!(
                    "{}: duplicate node `{id}`",
                    path.display()
                )));
            }
            nodes.intern(id);
        }
        nodes
    };
    let z = io::read_blocks(path, &nodes)?;
    Ok((nodes, z))
}

#[derive(Serialize)]
pub struct CompareReport {
    pub nodes: usize,
    pub yule: f64,
    pub adjusted_rand: f64,
    pub pairs: block_em::PairTable,
    pub a: block_em::SizeSummary,
    pub b: block_em::SizeSummary,
}

pub fn compare(
    a: &Path,
    b: &Path,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<(PathBuf, CompareReport)> {
    let out = &out_dir(out, None);
    let (nodes_a, za) = read_partition(a)?;
    let (nodes_b, zb) = read_partition(b)?;
    let missing: Vec<&str> = (0..nodes_b.len())
        .map(|i| nodes_b.id(i))
        .filter(|id| nodes_a.get(id).is_none())
        .collect();
    if nodes_a.len() != nodes_b.len() || !missing.is_empty() {
        return Err(CliError::Data(format!(
            "partitions cover different node sets ({} and {} nodes, {} ids only in {})",
            nodes_a.len(),
            nodes_b.len(),
            missing.len(),
            b.display()
        )));
    }
    // align b to a's node order
    let perm: Vec<usize> = (0..nodes_a.len())
        .map(|i| nodes_b.get(nodes_a.id(i)).expect("same node set"))
        .collect();
    let zb = zb.permuted(&perm);
    let report = CompareReport {
        nodes: nodes_a.len(),
        yule: yule_coefficient(&za, &zb)?,
        adjusted_rand: adjusted_rand_index(&za, &zb)?,
        pairs: block_em::pair_table(&za, &zb)?,
        a: size_summary(&za),
        b: size_summary(&zb),
    };
    let mut out_dir = OutDir::create(out)?;
    io::write_json(&out_dir.file("compare.json"), &report)?;
    let inputs = json!({ "a": a, "b": b });
    let summary = json!({ "yule": report.yule, "adjusted_rand": report.adjusted_rand });
    let dir = out_dir.manifest("compare", seed, &inputs, summary)?;
    Ok((dir, report))
}

pub fn simulate(
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> CliResult<PathBuf> {
    let mut fields = Fields::load_opt(config)?;
    let out = &out_dir(out, Some(&mut fields));
    let mut cfg = SimulateConfig::from_fields(&mut fields, seed)?;
    let (nodes, x) = match &cfg.covariates {
        Some(p) => {
            let t = io::read_covariate_table(p)?;
            let x = t.to_set(None, None)?;
            (t.nodes, x)
        }
        None => (NodeMap::sequential(cfg.n), CovariateSet::empty(cfg.n)),
    };
    let mut errors = Vec::new();
    if cfg.covariates.is_some() && cfg.n != 0 && cfg.n != nodes.len() {
        errors.push(format!(
            "n = {} but the covariate file has {} nodes",
            cfg.n,
            nodes.len()
        ));
    }
    cfg.n = nodes.len();
    let params = match cfg.model(x.names()) {
        Ok(p) => Some(p),
        Err(CliError::Config(e)) => {
            errors.extend(e);
            None
        }
        Err(e) => return Err(e),
    };
    crate::config::check(errors)?;
    let params = params.expect("no errors");
    let z = match &cfg.blocks {
        Some(p) => io::read_blocks(p, &nodes)?,
        None => simulator::draw_types_seeded(cfg.n, &cfg.eta, cfg.seed).map_err(config_error)?,
    };
    let eta = if cfg.blocks.is_some() {
        let n = z.n() as f64;
        z.sizes().iter().map(|&s| s as f64 / n).collect()
    } else {
        cfg.eta.clone()
    };
    let sim = SimConfig {
        n: cfg.n,
        k: z.k(),
        eta,
        params,
        steps: cfg.steps,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
        trace_every: cfg.trace_every,
    };
    sim.validate(x.p()).map_err(config_error)?;
    let run = simulator::run_chain(&sim, &x, &z)?;
    let mut out = OutDir::create(out)?;
    io::write_edge_list(&out.file("edges.tsv"), &run.graph, &nodes)?;
    io::write_blocks(&out.file("blocks.csv"), &z, &nodes)?;
    if cfg.trace_every.is_some() {
        io::write_csv(
            &out.file("trace.csv"),
            &["step", "edges", "two_stars", "triangles"],
            run.trace.iter().map(|t| {
                [
                    t.step.to_string(),
                    t.edges.to_string(),
                    t.two_stars.to_string(),
                    t.triangles.to_string(),
                ]
            }),
        )?;
    }
    let s = run.graph.stats();
    let summary = json!({
        "nodes": s.n,
        "edges": s.m,
        "two_stars": s.two_stars,
        "triangles": s.triangles,
    });
    out.manifest("simulate", cfg.seed, &cfg, summary)
}
