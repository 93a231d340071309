//! File formats.
//!
//! * Edge list: one `a<TAB>b` pair per line; blank lines and lines starting
//!   with `#` are skipped. Ids are arbitrary strings.
//! * Covariates: CSV with header `node_id,<cov>,...`.
//! * Blocks: CSV `node_id,block`, or a truth JSON with a `z` array indexed
//!   by node position.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use hergm_core::{BlockAssignment, CovariateSet, Graph};

use crate::error::{CliError, CliResult};

/// Dense relabeling of external node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl NodeMap {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Index of `id`, adding it if new.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    /// Ids `"0".."n-1"`.
    pub fn sequential(n: usize) -> Self {
        let mut m = NodeMap::default();
        for i in 0..n {
            m.intern(&i.to_string());
        }
        m
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

/// Raw id pairs from an edge list.
pub fn read_edge_pairs(path: &Path) -> CliResult<Vec<(String, String)>> {
    let reader = BufReader::new(open(path)?);
    let mut pairs = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut parts = t.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.trim().is_empty() && !b.trim().is_empty() => {
                pairs.push((a.trim().to_string(), b.trim().to_string()))
            }
            _ => {
                return Err(CliError::Data(format!(
                    "{}:{}: expected `<id><TAB><id>`, got `{t}`",
                    path.display(),
                    no + 1
                )))
            }
        }
    }
    Ok(pairs)
}

/// Builds the graph over `nodes`. With `strict`, edges naming unknown nodes
/// are an error; otherwise new ids are added to the map.
pub fn build_graph(
    pairs: &[(String, String)],
    nodes: &mut NodeMap,
    strict: bool,
    source: &Path,
) -> CliResult<Graph> {
    let mut edges = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let mut idx = |id: &str| -> CliResult<usize> {
            if strict {
                nodes.get(id).ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: node `{id}` has no row in the covariate file",
                        source.display()
                    ))
                })
            } else {
                Ok(nodes.intern(id))
            }
        };
        edges.push((idx(a)?, idx(b)?));
    }
    Ok(Graph::from_edge_list(edges, nodes.len())?)
}

pub fn write_edge_list(path: &Path, g: &Graph, nodes: &NodeMap) -> CliResult<()> {
    let mut w = create(path)?;
    let res = (|| -> std::io::Result<()> {
        writeln!(w, "# nodes: {} edges: {}", g.n(), g.m())?;
        for (i, j) in g.edges() {
            writeln!(w, "{}\t{}", nodes.id(i), nodes.id(j))?;
        }
        w.flush()
    })();
    res.map_err(|e| CliError::io(path, e))
}

/// Header names and per-node string values of a covariate CSV.
pub struct CovariateTable {
    pub names: Vec<String>,
    pub nodes: NodeMap,
    /// `columns[s][i]`.
    pub columns: Vec<Vec<String>>,
}

pub fn read_covariate_table(path: &Path) -> CliResult<CovariateTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let header = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    if header.get(0) != Some("node_id") {
        return Err(CliError::Data(format!(
            "{}: first column must be `node_id`",
            path.display()
        )));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut nodes = NodeMap::default();
    let mut columns = vec![Vec::new(); names.len()];
    for (no, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let line = no + 2;
        let id = &rec[0];
        if nodes.get(id).is_some() {
            return Err(CliError::Data(format!(
                "{}:{line}: duplicate node `{id}`",
                path.display()
            )));
        }
        nodes.intern(id);
        for (s, col) in columns.iter_mut().enumerate() {
            let v = rec.get(s + 1).unwrap_or("");
            if v.is_empty() {
                return Err(CliError::Data(format!(
                    "{}:{line}: missing value for `{}`",
                    path.display(),
                    names[s]
                )));
            }
            col.push(v.to_string());
        }
    }
    Ok(CovariateTable {
        names,
        nodes,
        columns,
    })
}

impl CovariateTable {
    /// The named covariates (all when `select` is `None`). Unknown names are
    /// reported together.
    pub fn to_set(
        &self,
        select: Option<&[String]>,
        pool_below: Option<usize>,
    ) -> CliResult<CovariateSet> {
        let wanted: Vec<String> = match select {
            Some(s) => s.to_vec(),
            None => self.names.clone(),
        };
        let missing: Vec<String> = wanted
            .iter()
            .filter(|w| !self.names.contains(w))
            .map(|w| format!("covariate `{w}` is not a column of the covariate file"))
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Config(missing));
        }
        if wanted.is_empty() {
            return Ok(CovariateSet::empty(self.nodes.len()));
        }
        let cols = wanted
            .iter()
            .map(|w| {
                let s = self.names.iter().position(|n| n == w).expect("checked");
                self.columns[s].clone()
            })
            .collect();
        Ok(CovariateSet::from_string_columns(wanted, cols, pool_below)?)
    }
}

pub fn write_covariates(path: &Path, x: &CovariateSet, nodes: &NodeMap) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["node_id".to_string()];
    header.extend(x.names().iter().cloned());
    let res = (|| -> csv::Result<()> {
        w.write_record(&header)?;
        for i in 0..nodes.len() {
            let mut rec = vec![nodes.id(i).to_string()];
            rec.extend((0..x.p()).map(|s| x.value(i, s).to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| CliError::io(path, e))
}

/// Block labels from a `node_id,block` CSV or a truth JSON.
pub fn read_blocks(path: &Path, nodes: &NodeMap) -> CliResult<BlockAssignment> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    let labels: Vec<usize> = if is_json {
        let v: serde_json::Value = serde_json::from_reader(BufReader::new(open(path)?))
            .map_err(|e| CliError::io(path, e))?;
        let z = v
            .get("z")
            .and_then(|z| z.as_array())
            .ok_or_else(|| CliError::Data(format!("{}: no `z` array", path.display())))?;
        let z: Vec<usize> = z
            .iter()
            .map(|l| l.as_u64().map(|l| l as usize))
            .collect::<Option<_>>()
            .ok_or_else(|| {
                CliError::Data(format!("{}: `z` must hold block indices", path.display()))
            })?;
        if z.len() != nodes.len() {
            return Err(CliError::Data(format!(
                "{}: {} labels for {} nodes",
                path.display(),
                z.len(),
                nodes.len()
            )));
        }
        // positions are the sequential ids written by `synth`
        let mut labels = vec![0; nodes.len()];
        for (pos, &l) in z.iter().enumerate() {
            let i = nodes.get(&pos.to_string()).ok_or_else(|| {
                CliError::Data(format!(
                    "{}: node `{pos}` is not in the graph",
                    path.display()
                ))
            })?;
            labels[i] = l;
        }
        labels
    } else {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(open(path)?);
        let mut labels: Vec<Option<usize>> = vec![None; nodes.len()];
        for (no, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CliError::io(path, e))?;
            let line = no + 2;
            let id = rec.get(0).unwrap_or("");
            let i = nodes.get(id).ok_or_else(|| {
                CliError::Data(format!(
                    "{}:{line}: node `{id}` is not in the graph",
                    path.display()
                ))
            })?;
            let b: usize = rec.get(1).unwrap_or("").parse().map_err(|_| {
                CliError::Data(format!(
                    "{}:{line}: block must be a non-negative integer",
                    path.display()
                ))
            })?;
            labels[i] = Some(b);
        }
        let missing = labels.iter().filter(|l| l.is_none()).count();
        if missing > 0 {
            return Err(CliError::Data(format!(
                "{}: {missing} graph nodes have no block",
                path.display()
            )));
        }
        labels.into_iter().map(|l| l.expect("checked")).collect()
    };
    Ok(BlockAssignment::from_labels(labels))
}

pub fn write_blocks(path: &Path, z: &BlockAssignment, nodes: &NodeMap) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let res = (|| -> csv::Result<()> {
        w.write_record(["node_id", "block"])?;
        for i in 0..z.n() {
            w.write_record([nodes.id(i), &z.block(i).to_string()])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| CliError::io(path, e))
}

/// Writes rows under a header with the csv crate.
pub fn write_csv<R, I>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    let res = (|| -> csv::Result<()> {
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}
