use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BlockAssignment;

/// Co-membership counts over unordered dyads for two partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairTable {
    /// Together in both.
    pub a: u64,
    /// Together in the first only.
    pub b: u64,
    /// Together in the second only.
    pub c: u64,
    /// Apart in both.
    pub d: u64,
}

fn choose2(x: u64) -> u64 {
    x * x.saturating_sub(1) / 2
}

pub fn pair_table(z1: &BlockAssignment, z2: &BlockAssignment) -> Result<PairTable> {
    if z1.n() != z2.n() {
        return Err(Error::LengthMismatch {
            expected: z1.n(),
            got: z2.n(),
        });
    }
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    for (&p, &q) in z1.labels().iter().zip(z2.labels()) {
        *joint.entry((p, q)).or_insert(0) += 1;
    }
    let a: u64 = joint.values().map(|&v| choose2(v)).sum();
    let t1: u64 = z1.sizes().iter().map(|&s| choose2(s as u64)).sum();
    let t2: u64 = z2.sizes().iter().map(|&s| choose2(s as u64)).sum();
    let total = choose2(z1.n() as u64);
    let (b, c) = (t1 - a, t2 - a);
    Ok(PairTable {
        a,
        b,
        c,
        d: total - a - b - c,
    })
}

/// Yule's Q on the dyad co-membership table, `(ad − bc)/(ad + bc)`, in
/// `[−1, 1]`. A zero denominator gives 1 when the partitions coincide up to
/// relabeling and 0 otherwise.
pub fn yule_coefficient(z1: &BlockAssignment, z2: &BlockAssignment) -> Result<f64> {
    let t = pair_table(z1, z2)?;
    let ad = t.a as f64 * t.d as f64;
    let bc = t.b as f64 * t.c as f64;
    if ad + bc == 0.0 {
        return Ok(if t.b == 0 && t.c == 0 { 1.0 } else { 0.0 });
    }
    Ok((ad - bc) / (ad + bc))
}

/// Hubert–Arabie adjusted Rand index.
pub fn adjusted_rand_index(z1: &BlockAssignment, z2: &BlockAssignment) -> Result<f64> {
    let t = pair_table(z1, z2)?;
    let total = (t.a + t.b + t.c + t.d) as f64;
    let index = t.a as f64;
    let s1 = (t.a + t.b) as f64;
    let s2 = (t.a + t.c) as f64;
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = s1 * s2 / total;
    let max = 0.5 * (s1 + s2);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Summary of the block-size distribution over non-empty blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSummary {
    pub blocks: usize,
    pub min: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: usize,
    pub iqr: f64,
}

pub fn size_summary(z: &BlockAssignment) -> SizeSummary {
    let mut sizes: Vec<usize> = z.sizes().into_iter().filter(|&s| s > 0).collect();
    sizes.sort_unstable();
    let q = |p: f64| quantile(&sizes, p);
    let (q1, q3) = (q(0.25), q(0.75));
    SizeSummary {
        blocks: sizes.len(),
        min: sizes.first().copied().unwrap_or(0),
        q1,
        median: q(0.5),
        q3,
        max: sizes.last().copied().unwrap_or(0),
        iqr: q3 - q1,
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[usize], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac
}
