//! Class rebalancing for training splits.
//!
//! [`one_sided_selection`] keeps every minority point, grows a 1-NN
//! consistent subset of the majority in dataset order, then drops majority
//! members of Tomek links. [`enforce_ratio`] then caps the majority so the
//! minority reaches the configured fraction. Random under- and over-sampling
//! are provided as baselines.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::preprocess::FeatureRow;
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError {
    #[error("balancing needs both classes present")]
    SingleClass,
    #[error("points have zero-dimensional vectors")]
    ZeroDimension,
    #[error("point {row_index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        row_index: usize,
        got: usize,
        expected: usize,
    },
    #[error("point {0} has a non-finite component")]
    NonFinite(usize),
    #[error("target minority fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMethod {
    Oss,
    RandomUnder,
    RandomOver,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub method: BalanceMethod,
    pub target_minority_fraction: f64,
    pub distance: Distance,
    pub seed: u64,
    /// Width of the hashed bag-of-words block appended to each point.
    pub text_dim: usize,
    /// Seed the consistent subset with a seeded-random majority point
    /// instead of the first one.
    pub random_initial_majority: bool,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            method: BalanceMethod::Oss,
            target_minority_fraction: 0.30,
            distance: Distance::Euclidean,
            seed: 0,
            text_dim: 64,
            random_initial_majority: false,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<(), BalanceError> {
        let f = self.target_minority_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(BalanceError::InvalidFraction(f));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointClass {
    Minority,
    Majority,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedPoint {
    pub row_index: usize,
    pub vector: Vec<f64>,
    pub class: PointClass,
}

/// The smaller class; fake when the classes tie.
pub fn minority_label(labels: &[Label]) -> Label {
    let fake = labels.iter().filter(|&&l| l == Label::Fake).count();
    if fake <= labels.len() - fake {
        Label::Fake
    } else {
        Label::Real
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Binarized features followed by an L2-normalized hashed bag of words of
/// width `text_dim`.
pub fn build_points(rows: &[FeatureRow], text_dim: usize) -> Vec<IndexedPoint> {
    let labels: Vec<Label> = rows.iter().map(|r| r.label).collect();
    let minority = minority_label(&labels);
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let mut vector = row.numeric_features(true);
            if text_dim > 0 {
                let mut hashed = vec![0.0; text_dim];
                for tok in row.tokens() {
                    hashed[(fnv1a(tok.as_bytes()) % text_dim as u64) as usize] += 1.0;
                }
                let norm = hashed.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    hashed.iter_mut().for_each(|x| *x /= norm);
                }
                vector.extend(hashed);
            }
            IndexedPoint {
                row_index: i,
                vector,
                class: if row.label == minority {
                    PointClass::Minority
                } else {
                    PointClass::Majority
                },
            }
        })
        .collect()
}

pub fn distance(metric: Distance, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        Distance::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - dot / (na.sqrt() * nb.sqrt())
            }
        }
    }
}

/// Nearest member of `among` (positions into `points`) to `query`, skipping
/// `query` itself. Ties go to the lower row index.
fn nearest(points: &[&IndexedPoint], metric: Distance, query: usize, among: &[usize]) -> Option<usize> {
    let q = &points[query].vector;
    let mut best: Option<(f64, usize, usize)> = None;
    for &c in among {
        if c == query {
            continue;
        }
        let d = distance(metric, q, &points[c].vector);
        let key = (d, points[c].row_index);
        match best {
            Some((bd, brow, _)) if (bd, brow) <= key => {}
            _ => best = Some((key.0, key.1, c)),
        }
    }
    best.map(|(_, _, c)| c)
}

/// One-sided selection. Returns the kept row indices in ascending order; all
/// minority points are always kept.
pub fn one_sided_selection(
    points: &[IndexedPoint],
    cfg: &BalanceConfig,
) -> Result<Vec<usize>, BalanceError> {
    let dim = points.first().map(|p| p.vector.len()).unwrap_or(0);
    for p in points {
        if p.vector.len() != dim {
            return Err(BalanceError::DimensionMismatch {
                row_index: p.row_index,
                got: p.vector.len(),
                expected: dim,
            });
        }
        if p.vector.iter().any(|x| !x.is_finite()) {
            return Err(BalanceError::NonFinite(p.row_index));
        }
    }
    let mut ordered: Vec<&IndexedPoint> = points.iter().collect();
    ordered.sort_by_key(|p| p.row_index);
    let majority: Vec<usize> = (0..ordered.len())
        .filter(|&i| ordered[i].class == PointClass::Majority)
        .collect();
    let minority_count = ordered.len() - majority.len();
    if majority.is_empty() || minority_count == 0 {
        return Err(BalanceError::SingleClass);
    }
    if dim == 0 {
        return Err(BalanceError::ZeroDimension);
    }
    let metric = cfg.distance;

    let seed_point = if cfg.random_initial_majority {
        majority[seed::rng(cfg.seed).random_range(0..majority.len())]
    } else {
        majority[0]
    };
    let mut subset: Vec<usize> = (0..ordered.len())
        .filter(|&i| ordered[i].class == PointClass::Minority)
        .collect();
    subset.push(seed_point);
    for &m in &majority {
        if m == seed_point {
            continue;
        }
        let nn = nearest(&ordered, metric, m, &subset).expect("subset is nonempty");
        if ordered[nn].class == PointClass::Minority {
            subset.push(m);
        }
    }

    let tomek: Vec<usize> = subset
        .iter()
        .copied()
        .filter(|&m| ordered[m].class == PointClass::Majority)
        .filter(|&m| match nearest(&ordered, metric, m, &subset) {
            Some(p) if ordered[p].class == PointClass::Minority => {
                nearest(&ordered, metric, p, &subset) == Some(m)
            }
            _ => false,
        })
        .collect();

    let mut kept: Vec<usize> = subset
        .into_iter()
        .filter(|i| !tomek.contains(i))
        .map(|i| ordered[i].row_index)
        .collect();
    kept.sort_unstable();
    Ok(kept)
}

fn split_by_class(labels: &[Label]) -> Result<(Vec<usize>, Vec<usize>), BalanceError> {
    split_around(labels, minority_label(labels))
}

fn split_around(labels: &[Label], minority: Label) -> Result<(Vec<usize>, Vec<usize>), BalanceError> {
    let (min, maj): (Vec<usize>, Vec<usize>) =
        (0..labels.len()).partition(|&i| labels[i] == minority);
    if min.is_empty() || maj.is_empty() {
        return Err(BalanceError::SingleClass);
    }
    Ok((min, maj))
}

/// Largest majority count compatible with minority fraction `f`.
pub fn majority_cap(minority: usize, f: f64) -> usize {
    ((1.0 - f) / f * minority as f64 + 1e-9).floor() as usize
}

/// Positions into `labels` kept after capping the majority at
/// `⌊(1−f)/f · minority⌋` by seeded uniform sampling without replacement.
pub fn enforce_ratio(labels: &[Label], cfg: &BalanceConfig) -> Result<Vec<usize>, BalanceError> {
    cap_majority(labels, minority_label(labels), cfg)
}

fn cap_majority(labels: &[Label], minority: Label, cfg: &BalanceConfig) -> Result<Vec<usize>, BalanceError> {
    cfg.validate()?;
    let (minority, majority) = split_around(labels, minority)?;
    let cap = majority_cap(minority.len(), cfg.target_minority_fraction);
    if majority.len() <= cap {
        return Ok((0..labels.len()).collect());
    }
    let mut rng = seed::rng(cfg.seed);
    let mut kept = minority;
    kept.extend(sample(&mut rng, majority.len(), cap).into_iter().map(|i| majority[i]));
    kept.sort_unstable();
    Ok(kept)
}

/// Majority reduced to the minority count, uniformly without replacement.
pub fn random_undersample(labels: &[Label], cfg: &BalanceConfig) -> Result<Vec<usize>, BalanceError> {
    let (minority, majority) = split_by_class(labels)?;
    let mut rng = seed::rng(cfg.seed);
    let n = minority.len();
    let mut kept = minority;
    kept.extend(sample(&mut rng, majority.len(), n).into_iter().map(|i| majority[i]));
    kept.sort_unstable();
    Ok(kept)
}

/// All positions, plus minority draws with replacement up to the majority
/// count. The result is a multiset in ascending order.
pub fn random_oversample(labels: &[Label], cfg: &BalanceConfig) -> Result<Vec<usize>, BalanceError> {
    let (minority, majority) = split_by_class(labels)?;
    let mut rng = seed::rng(cfg.seed);
    let mut out: Vec<usize> = (0..labels.len()).collect();
    for _ in minority.len()..majority.len() {
        out.push(minority[rng.random_range(0..minority.len())]);
    }
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceOutcome {
    /// Kept row indices in ascending order; may repeat for over-sampling.
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
}

/// Applies `cfg.method` to feature rows. For [`BalanceMethod::Oss`] the
/// ratio cap runs after one-sided selection.
pub fn balance(rows: &[FeatureRow], cfg: &BalanceConfig) -> Result<BalanceOutcome, BalanceError> {
    cfg.validate()?;
    let labels: Vec<Label> = rows.iter().map(|r| r.label).collect();
    let kept = match cfg.method {
        BalanceMethod::None => (0..rows.len()).collect(),
        BalanceMethod::RandomUnder => random_undersample(&labels, cfg)?,
        BalanceMethod::RandomOver => random_oversample(&labels, cfg)?,
        BalanceMethod::Oss => {
            let points = build_points(rows, cfg.text_dim);
            let consistent = one_sided_selection(&points, cfg)?;
            let sub_labels: Vec<Label> = consistent.iter().map(|&i| labels[i]).collect();
            // The minority is fixed before cleaning; OSS may leave fewer
            // majority than minority rows.
            match cap_majority(&sub_labels, minority_label(&labels), cfg) {
                Ok(pos) => pos.into_iter().map(|p| consistent[p]).collect(),
                // Tomek cleaning can empty the majority; nothing left to cap.
                Err(BalanceError::SingleClass) => consistent,
                Err(e) => return Err(e),
            }
        }
    };
    let mut present = vec![false; rows.len()];
    kept.iter().for_each(|&i| present[i] = true);
    let removed = (0..rows.len()).filter(|&i| !present[i]).collect();
    Ok(BalanceOutcome { kept, removed })
}

/// Audit CSV: `row_index,status` with status `kept` or `removed`.
pub fn write_balance_csv<W: Write>(out: W, outcome: &BalanceOutcome) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row_index", "status"])?;
    for i in &outcome.kept {
        w.write_record([i.to_string().as_str(), "kept"])?;
    }
    for i in &outcome.removed {
        w.write_record([i.to_string().as_str(), "removed"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_balance_csv<R: std::io::Read>(input: R) -> Result<BalanceOutcome, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut outcome = BalanceOutcome {
        kept: vec![],
        removed: vec![],
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let idx: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad row index in {rec:?}"))?;
        match rec.get(1) {
            Some("kept") => outcome.kept.push(idx),
            Some("removed") => outcome.removed.push(idx),
            other => return Err(format!("bad status {other:?}")),
        }
    }
    Ok(outcome)
}
