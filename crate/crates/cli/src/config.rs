//! Run configuration files (TOML).
//!
//! Every command reads an optional config file; command-line flags override
//! its keys. Relative paths inside a config file are resolved against the
//! file's directory. Validation collects every problem before failing.

use std::path::{Path, PathBuf};

use hergm_core::block_em::QuadCoefForm;
use hergm_core::mple::{Sampling, Terms};
use hergm_core::simulator::{CovariateSpec, SimStrategy};
use hergm_core::ModelParams;
use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

/// Pulls typed keys out of a TOML table, recording every failure.
pub struct Fields {
    table: Table,
    base: PathBuf,
    pub errors: Vec<String>,
}

impl Fields {
    pub fn new(table: Table, base: PathBuf) -> Self {
        Fields {
            table,
            base,
            errors: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            CliError::Config(vec![format!("{}: {e}", path.display())])
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Fields::new(table, base))
    }

    /// Config from an optional file.
    pub fn load_opt(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => Fields::load(p),
            None => Ok(Fields::new(Table::new(), PathBuf::new())),
        }
    }

    pub fn take<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        let v = self.table.remove(key)?;
        match v.try_into() {
            Ok(t) => Some(t),
            Err(e) => {
                self.errors.push(format!("`{key}`: {e}"));
                None
            }
        }
    }

    pub fn take_raw(&mut self, key: &str) -> Option<Value> {
        self.table.remove(key)
    }

    pub fn take_path(&mut self, key: &str) -> Option<PathBuf> {
        self.take::<PathBuf>(key).map(|p| self.resolve(p))
    }

    fn resolve(&self, p: PathBuf) -> PathBuf {
        if p.is_relative() && !self.base.as_os_str().is_empty() {
            self.base.join(p)
        } else {
            p
        }
    }

    /// Reports keys nobody asked for.
    pub fn finish(&mut self) {
        let mut unknown: Vec<&String> = self.table.keys().collect();
        unknown.sort();
        for k in unknown {
            self.errors.push(format!("unknown key `{k}`"));
        }
        self.table.clear();
    }
}

/// Collected errors as a result.
pub fn check(errors: Vec<String>) -> CliResult<()> {
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(errors))
    }
}

/// Splits a core validation message into its parts.
pub fn core_errors(e: hergm_core::Error) -> Vec<String> {
    match e {
        hergm_core::Error::InvalidInput(msg) => msg.split("; ").map(str::to_string).collect(),
        e => vec![e.to_string()],
    }
}

/// `auto`, `all`, `case-control` or `case-control:<ratio>`.
pub fn parse_sampling(s: &str) -> Result<Sampling, String> {
    let s = s.trim();
    match s {
        "auto" => Ok(Sampling::Auto),
        "all" => Ok(Sampling::All),
        "case-control" => Ok(Sampling::CaseControl {
            ratio: hergm_core::mple::AUTO_CONTROL_RATIO,
        }),
        _ => match s.strip_prefix("case-control:").map(str::parse::<usize>) {
            Some(Ok(r)) if r > 0 => Ok(Sampling::CaseControl { ratio: r }),
            _ => Err(format!(
                "sampling `{s}` must be `auto`, `all`, `case-control` or `case-control:<ratio>` with ratio ≥ 1"
            )),
        },
    }
}

pub fn sampling_label(s: Sampling) -> String {
    match s {
        Sampling::Auto => "auto".into(),
        Sampling::All => "all".into(),
        Sampling::CaseControl { ratio } => format!("case-control:{ratio}"),
    }
}

fn parse_quad_form(s: &str) -> Result<QuadCoefForm, String> {
    match s {
        "derived" => Ok(QuadCoefForm::Derived),
        "rearranged" => Ok(QuadCoefForm::Rearranged),
        _ => Err(format!("quad_form `{s}` must be `derived` or `rearranged`")),
    }
}

/// Flat parameter table (`within_edges`, `between_same_<cov>`, ...).
fn parse_params(v: Value, covariates: &[String], errors: &mut Vec<String>) -> Option<ModelParams> {
    let map: serde_json::Map<String, serde_json::Value> = match v.try_into() {
        Ok(m) => m,
        Err(e) => {
            errors.push(format!("`params`: {e}"));
            return None;
        }
    };
    let mut known = vec![
        "within_edges".to_string(),
        "within_two_stars".to_string(),
        "within_triangles".to_string(),
        "between_edges".to_string(),
    ];
    for c in covariates {
        known.push(format!("within_same_{c}"));
        known.push(format!("between_same_{c}"));
    }
    let mut keys: Vec<&String> = map.keys().filter(|k| !known.contains(k)).collect();
    keys.sort();
    for k in keys {
        errors.push(format!("unknown parameter `{k}`"));
    }
    match ModelParams::from_flat_json(&map, covariates) {
        Ok(p) => Some(p),
        Err(e) => {
            errors.extend(core_errors(e));
            None
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    pub eta: Vec<f64>,
    pub seed: u64,
    pub strategy: SimStrategy,
    pub covariates: Vec<CovariateSpec>,
    /// Flat parameter keys as written to the truth file.
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(skip)]
    pub model: ModelParams,
}

impl SynthConfig {
    pub fn from_fields(f: &mut Fields, seed: Option<u64>) -> CliResult<Self> {
        let n = f.take::<usize>("n");
        let k = f.take::<usize>("k");
        let eta = f.take::<Vec<f64>>("eta");
        let file_seed = f.take::<u64>("seed");
        let strategy = f
            .take::<SimStrategy>("strategy")
            .unwrap_or(SimStrategy::Factorized { sweeps: 200 });
        let covariates = f
            .take::<Vec<CovariateSpec>>("covariates")
            .unwrap_or_default();
        let params = f.take_raw("params");
        f.finish();
        let mut errors = std::mem::take(&mut f.errors);
        for (key, present) in [
            ("n", n.is_some()),
            ("k", k.is_some()),
            ("params", params.is_some()),
        ] {
            if !present {
                errors.push(format!("missing required key `{key}`"));
            }
        }
        let names: Vec<String> = covariates.iter().map(|c| c.name.clone()).collect();
        let mut seen = std::collections::HashSet::new();
        for c in &names {
            if !seen.insert(c) {
                errors.push(format!("covariate `{c}` is declared twice"));
            }
        }
        let model = params.and_then(|p| parse_params(p, &names, &mut errors));
        let k = k.unwrap_or(0);
        let cfg = SynthConfig {
            n: n.unwrap_or(0),
            k,
            eta: eta.unwrap_or_else(|| vec![1.0 / k.max(1) as f64; k]),
            seed: seed.or(file_seed).unwrap_or(0),
            strategy,
            covariates,
            params: Default::default(),
            model: model
                .clone()
                .unwrap_or_else(|| ModelParams::simple(0.0, 0.0, 0.0, 0.0)),
        };
        if errors.is_empty() {
            if let Err(e) = cfg.dataset_config().validate() {
                errors.extend(core_errors(e));
            }
        } else {
            // still report shape problems next to the key errors
            if let Err(e) = hergm_core::simulator::validate_eta(&cfg.eta, cfg.k) {
                errors.extend(core_errors(e));
            }
        }
        check(errors)?;
        let params = cfg.model.to_flat_json(&names)?;
        Ok(SynthConfig { params, ..cfg })
    }

    pub fn dataset_config(&self) -> hergm_core::simulator::DatasetConfig {
        hergm_core::simulator::DatasetConfig {
            n: self.n,
            k: self.k,
            eta: self.eta.clone(),
            params: self.model.clone(),
            covariates: self.covariates.clone(),
            strategy: self.strategy.clone(),
            seed: self.seed,
        }
    }
}

/// Inputs of `estimate` after merging flags over the config file.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateConfig {
    pub edges: PathBuf,
    pub covariates: Option<PathBuf>,
    /// Covariates used; all columns when absent.
    pub use_covariates: Option<Vec<String>>,
    /// Block recovery ignores covariates.
    pub no_covariates: bool,
    /// Fixed block assignment; skips block recovery.
    pub blocks: Option<PathBuf>,
    pub k_max: usize,
    pub em_iters: usize,
    pub tol: f64,
    pub smoothing: f64,
    pub sparsity_budget: Option<usize>,
    pub quad_form: QuadCoefForm,
    pub pool_below: Option<usize>,
    pub sampling: String,
    #[serde(skip)]
    pub sampling_rule: Sampling,
    pub terms: Terms,
    pub checkpoint: bool,
    pub seed: u64,
}

/// Command-line values for `estimate`; `None` defers to the file.
#[derive(Debug, Clone, Default)]
pub struct EstimateOverrides {
    pub edges: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub use_covariates: Option<Vec<String>>,
    pub no_covariates: bool,
    pub blocks: Option<PathBuf>,
    pub k_max: Option<usize>,
    pub em_iters: Option<usize>,
    pub sampling: Option<String>,
    pub quad_form: Option<String>,
    pub checkpoint: bool,
    pub seed: Option<u64>,
}

impl EstimateConfig {
    pub fn from_fields(f: &mut Fields, o: EstimateOverrides) -> CliResult<Self> {
        let edges = o.edges.or_else(|| f.take_path("edges"));
        let covariates = o.covariates.or_else(|| f.take_path("covariates"));
        let use_covariates = o.use_covariates.or_else(|| f.take("use_covariates"));
        let no_covariates = o.no_covariates | f.take("no_covariates").unwrap_or(false);
        let blocks = o.blocks.or_else(|| f.take_path("blocks"));
        let k_max = o.k_max.or_else(|| f.take("k_max")).unwrap_or(20);
        let em_iters = o.em_iters.or_else(|| f.take("em_iters")).unwrap_or(250);
        let tol: f64 = f.take("tol").unwrap_or(1e-9);
        let smoothing = f.take("smoothing").unwrap_or(1e-3);
        let sparsity_budget = f.take("sparsity_budget");
        let quad_form = o.quad_form.or_else(|| f.take("quad_form"));
        let pool_below = f.take("pool_below");
        let sampling = o
            .sampling
            .or_else(|| f.take("sampling"))
            .unwrap_or_else(|| "auto".into());
        let terms = f.take::<Terms>("terms").unwrap_or_default();
        let checkpoint = o.checkpoint | f.take("checkpoint").unwrap_or(false);
        let seed = o.seed.or_else(|| f.take("seed")).unwrap_or(0);
        f.finish();

        let mut errors = std::mem::take(&mut f.errors);
        let edges = edges.unwrap_or_else(|| {
            errors.push("an edge list is required (`edges`)".into());
            PathBuf::new()
        });
        if !edges.as_os_str().is_empty() && !edges.is_file() {
            errors.push(format!("edge list {} does not exist", edges.display()));
        }
        if let Some(c) = &covariates {
            if !c.is_file() {
                errors.push(format!("covariate file {} does not exist", c.display()));
            }
        } else if use_covariates.as_ref().is_some_and(|u| !u.is_empty()) {
            errors.push("`use_covariates` needs a covariate file".into());
        }
        if let Some(b) = &blocks {
            if !b.is_file() {
                errors.push(format!("block file {} does not exist", b.display()));
            }
        }
        if k_max == 0 {
            errors.push("k_max must be at least 1".into());
        }
        if em_iters == 0 {
            errors.push("em_iters must be at least 1".into());
        }
        if tol < 0.0 || tol.is_nan() {
            errors.push("tol must be non-negative".into());
        }
        if !(0.0..1.0).contains(&smoothing) {
            errors.push("smoothing must be in [0, 1)".into());
        }
        let sampling_rule = parse_sampling(&sampling).unwrap_or_else(|e| {
            errors.push(e);
            Sampling::Auto
        });
        let quad_form = match quad_form.as_deref().map(parse_quad_form) {
            None => QuadCoefForm::Derived,
            Some(Ok(q)) => q,
            Some(Err(e)) => {
                errors.push(e);
                QuadCoefForm::Derived
            }
        };
        check(errors)?;
        Ok(EstimateConfig {
            edges,
            covariates,
            use_covariates,
            no_covariates,
            blocks,
            k_max,
            em_iters,
            tol,
            smoothing,
            sparsity_budget,
            quad_form,
            pool_below,
            sampling: sampling_label(sampling_rule),
            sampling_rule,
            terms,
            checkpoint,
            seed,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateConfig {
    pub n: usize,
    pub k: usize,
    pub eta: Vec<f64>,
    pub steps: u64,
    pub burn_in: u64,
    pub trace_every: Option<u64>,
    pub seed: u64,
    /// Node covariates; sets `n` and the node ids when given.
    pub covariates: Option<PathBuf>,
    /// Fixed types; drawn from `eta` when absent.
    pub blocks: Option<PathBuf>,
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(skip)]
    pub raw_params: Option<Value>,
}

impl SimulateConfig {
    /// Reads keys; parameters are parsed once the covariate names are known.
    pub fn from_fields(f: &mut Fields, seed: Option<u64>) -> CliResult<Self> {
        let n = f.take::<usize>("n");
        let k = f.take::<usize>("k").unwrap_or(1);
        let eta = f.take::<Vec<f64>>("eta");
        let steps = f.take::<u64>("steps");
        let burn_in = f.take::<u64>("burn_in").unwrap_or(0);
        let trace_every = f.take::<u64>("trace_every");
        let file_seed = f.take::<u64>("seed");
        let covariates = f.take_path("covariates");
        let blocks = f.take_path("blocks");
        let raw_params = f.take_raw("params");
        f.finish();
        let mut errors = std::mem::take(&mut f.errors);
        if n.is_none() && covariates.is_none() {
            errors.push("`n` is required unless a covariate file fixes the node set".into());
        }
        if steps.is_none() {
            errors.push("missing required key `steps`".into());
        }
        if raw_params.is_none() {
            errors.push("missing required key `params`".into());
        }
        if trace_every == Some(0) {
            errors.push("trace_every must be at least 1".into());
        }
        for p in covariates.iter().chain(&blocks) {
            if !p.is_file() {
                errors.push(format!("{} does not exist", p.display()));
            }
        }
        check(errors)?;
        Ok(SimulateConfig {
            n: n.unwrap_or(0),
            k,
            eta: eta.unwrap_or_else(|| vec![1.0 / k.max(1) as f64; k]),
            steps: steps.unwrap_or(0),
            burn_in,
            trace_every,
            seed: seed.or(file_seed).unwrap_or(0),
            covariates,
            blocks,
            params: Default::default(),
            raw_params,
        })
    }

    pub fn model(&mut self, covariates: &[String]) -> CliResult<ModelParams> {
        let mut errors = Vec::new();
        let raw = self.raw_params.take().expect("checked in from_fields");
        let p = parse_params(raw, covariates, &mut errors);
        check(errors)?;
        let p = p.expect("no errors");
        self.params = p.to_flat_json(covariates)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(s: &str) -> Fields {
        Fields::new(s.parse().unwrap(), PathBuf::new())
    }

    fn errors(r: CliResult<impl std::fmt::Debug>) -> Vec<String> {
        match r {
            Err(CliError::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn synth_minimal() {
        let mut f = fields("n = 100\nk = 2\n[params]\nwithin_edges = -2.0\nbetween_edges = -6.0\n");
        let c = SynthConfig::from_fields(&mut f, Some(9)).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.eta, vec![0.5, 0.5]);
        assert_eq!(c.model.alpha_w, -1.0);
    }

    #[test]
    fn synth_lists_every_error() {
        let mut f = fields(
            "n = 100\nk = 2\neta = [0.5, 0.4]\ncolour = 1\n[params]\nwithin_edges = -2.0\nbetween_edges = -6.0\nwithin_stars = 1.0\n",
        );
        let e = errors(SynthConfig::from_fields(&mut f, None));
        assert!(e.iter().any(|m| m.contains("colour")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("within_stars")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("sum")), "{e:?}");
    }

    #[test]
    fn synth_bad_eta_alone() {
        let mut f = fields(
            "n = 100\nk = 2\neta = [0.5, 0.4]\n[params]\nwithin_edges = -2.0\nbetween_edges = -6.0\n",
        );
        let e = errors(SynthConfig::from_fields(&mut f, None));
        assert_eq!(e.len(), 1, "{e:?}");
    }

    #[test]
    fn sampling_strings() {
        assert_eq!(parse_sampling("all"), Ok(Sampling::All));
        assert_eq!(
            parse_sampling("case-control:3"),
            Ok(Sampling::CaseControl { ratio: 3 })
        );
        assert!(parse_sampling("case-control:0").is_err());
        assert!(parse_sampling("some").is_err());
        for s in [
            Sampling::All,
            Sampling::Auto,
            Sampling::CaseControl { ratio: 7 },
        ] {
            assert_eq!(parse_sampling(&sampling_label(s)), Ok(s));
        }
    }

    #[test]
    fn estimate_collects_errors() {
        let mut f = fields("k_max = 0\nsampling = \"most\"\nquad_form = \"odd\"\n");
        let e = errors(EstimateConfig::from_fields(
            &mut f,
            EstimateOverrides::default(),
        ));
        assert_eq!(e.len(), 4, "{e:?}");
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("e.tsv"), "a\tb\n").unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "edges = \"e.tsv\"\n").unwrap();
        let mut f = Fields::load(&cfg).unwrap();
        let c = EstimateConfig::from_fields(&mut f, EstimateOverrides::default()).unwrap();
        assert_eq!(c.edges, dir.path().join("e.tsv"));
    }
}
