//! Theoretical image supplies and dataset validation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigUint;
use serde::Serialize;
use thiserror::Error;

use crate::canvas::{CanonicalKey, Point};
use crate::generator::{DatasetPair, LabeledSet, Pool, Split, Stamping, Variant};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot choose {n} out of {p}")]
pub struct ChooseError {
    pub p: u64,
    pub n: u64,
}

/// Exact binomial coefficient `C(p, n)`.
pub fn n_choose_k(p: u64, n: u64) -> Result<BigUint, ChooseError> {
    if n > p {
        return Err(ChooseError { p, n });
    }
    let n = n.min(p - n);
    let mut acc = BigUint::from(1u32);
    for i in 0..n {
        // exact at every step: acc * (p - i) is divisible by (i + 1)
        acc = acc * BigUint::from(p - i) / BigUint::from(i + 1);
    }
    Ok(acc)
}

/// Falling factorial `p! / (p - n)!`.
pub fn variations(p: u64, n: u64) -> Result<BigUint, ChooseError> {
    if n > p {
        return Err(ChooseError { p, n });
    }
    Ok((p - n + 1..=p).fold(BigUint::from(1u32), |acc, k| acc * BigUint::from(k)))
}

/// Supply as a machine integer when it fits.
pub fn choose_u64(p: u64, n: u64) -> Option<u64> {
    n_choose_k(p, n).ok()?.try_into().ok()
}

/// Theoretical and observed image counts per object count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupplyRow {
    pub label: u8,
    pub theoretical_train: Option<BigUint>,
    pub theoretical_test: Option<BigUint>,
    pub observed_train: usize,
    pub observed_test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupplyTable {
    /// Positions available to (train, test).
    pub positions: (usize, usize),
    pub rows: Vec<SupplyRow>,
}

impl SupplyTable {
    pub fn row(&self, label: u8) -> Option<&SupplyRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

impl fmt::Display for SupplyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: &Option<BigUint>| v.as_ref().map_or("-".to_string(), |b| b.to_string());
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.label.to_string(),
                    show(&r.theoretical_train),
                    show(&r.theoretical_test),
                    r.observed_train.to_string(),
                    r.observed_test.to_string(),
                ]
            })
            .collect();
        let head = format!("{}/{}", self.positions.0, self.positions.1);
        let mut widths = [head.len().max(4), 5, 4, 5, 4];
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let theo = widths[1] + widths[2] + 3;
        let stat = widths[3] + widths[4] + 3;
        writeln!(
            f,
            "{head:>w0$} | {:^theo$} | {:^stat$}",
            "theoretical",
            "statistics",
            w0 = widths[0],
            theo = theo.max(11),
            stat = stat.max(10),
        )?;
        writeln!(
            f,
            "{:>w0$} | {:>w1$} | {:>w2$} | {:>w3$} | {:>w4$}",
            "dots",
            "train",
            "test",
            "train",
            "test",
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3],
            w4 = widths[4],
        )?;
        for row in &cells {
            writeln!(
                f,
                "{:>w0$} | {:>w1$} | {:>w2$} | {:>w3$} | {:>w4$}",
                row[0],
                row[1],
                row[2],
                row[3],
                row[4],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3],
                w4 = widths[4],
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ShapeMismatch { split: Split, detail: String },
    LabelOutOfRange { split: Split, index: usize, label: u8 },
    LogMismatch { split: Split, index: usize, detail: String },
    MissingLog { split: Split },
    ZeroImageCount { split: Split, count: usize },
    ZeroImageNotBlank { split: Split, index: usize },
    Duplicate { first: (Split, usize), second: (Split, usize), key: String },
    RepeatedCenter { split: Split, index: usize },
    OutsidePartition { split: Split, index: usize, position: Point },
    PartitionOverlap { position: Point },
    PartitionCoverage { expected: usize, actual: usize },
    SupplyExceeded { pool: Pool, label: u8, observed: usize, supply: BigUint },
    ExhaustionShortfall { pool: Pool, label: u8, observed: usize, supply: BigUint },
    NotCentered { split: Split, index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ShapeMismatch { split, detail } => write!(f, "{split}: shape mismatch: {detail}"),
            Violation::LabelOutOfRange { split, index, label } => {
                write!(f, "{split}[{index}]: label {label} exceeds the maximum count")
            }
            Violation::LogMismatch { split, index, detail } => {
                write!(f, "{split}[{index}]: generation log disagrees with image: {detail}")
            }
            Violation::MissingLog { split } => {
                write!(f, "{split}: stamps overlap but no generation log is available")
            }
            Violation::ZeroImageCount { split, count } => {
                write!(f, "{split}: {count} zero-object images, expected exactly one")
            }
            Violation::ZeroImageNotBlank { split, index } => {
                write!(f, "{split}[{index}]: label 0 on a non-blank image")
            }
            Violation::Duplicate { first, second, key } => write!(
                f,
                "duplicate image {}[{}] == {}[{}] (key {key})",
                first.0, first.1, second.0, second.1
            ),
            Violation::RepeatedCenter { split, index } => {
                write!(f, "{split}[{index}]: two objects share one position")
            }
            Violation::OutsidePartition { split, index, position } => write!(
                f,
                "{split}[{index}]: object at {position:?} lies outside the {split} side"
            ),
            Violation::PartitionOverlap { position } => {
                write!(f, "partition sides share position {position:?}")
            }
            Violation::PartitionCoverage { expected, actual } => write!(
                f,
                "partition sides cover {actual} positions, universe has {expected}"
            ),
            Violation::SupplyExceeded { pool, label, observed, supply } => write!(
                f,
                "{pool:?} pool: {observed} images with {label} objects exceed the supply {supply}"
            ),
            Violation::ExhaustionShortfall { pool, label, observed, supply } => write!(
                f,
                "{pool:?} pool: label {label} declared exhausted at {observed} of {supply}"
            ),
            Violation::NotCentered { split, index } => {
                write!(f, "{split}[{index}]: pattern is not centered")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub table: SupplyTable,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.table)?;
        if self.passed() {
            writeln!(f, "PASS")
        } else {
            writeln!(f, "FAIL ({} violations)", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
            Ok(())
        }
    }
}

const SPLITS: [Split; 2] = [Split::Train, Split::Test];

/// Object positions of every image: re-derived from pixels for single-pixel
/// dots, read from the generation log otherwise.
fn object_positions(
    pair: &DatasetPair,
    split: Split,
    out: &mut Vec<Violation>,
) -> Option<Vec<Vec<Point>>> {
    let set = pair.split(split);
    let dot1 = pair.spec.stamp == Stamping::Dot1;
    if dot1 {
        return Some(set.images.iter().map(|img| img.foreground()).collect());
    }
    if set.placements.len() != set.len() {
        if !set.is_empty() {
            out.push(Violation::MissingLog { split });
        }
        return None;
    }
    Some(set.placements.iter().map(|p| p.centers.clone()).collect())
}

fn check_shapes(pair: &DatasetPair, split: Split, out: &mut Vec<Violation>) {
    let set = pair.split(split);
    let (w, h) = pair.spec.dims();
    if set.images.len() != set.labels.len() {
        out.push(Violation::ShapeMismatch {
            split,
            detail: format!("{} images but {} labels", set.images.len(), set.labels.len()),
        });
    }
    if set.width != w || set.height != h || set.images.iter().any(|g| g.width() != w || g.height() != h) {
        out.push(Violation::ShapeMismatch {
            split,
            detail: format!("images are not {w}x{h}"),
        });
    }
    for (index, &label) in set.labels.iter().enumerate() {
        if label > pair.spec.m {
            out.push(Violation::LabelOutOfRange { split, index, label });
        }
    }
    for (index, (img, &label)) in set.images.iter().zip(&set.labels).enumerate() {
        if label == 0 && !img.is_blank() {
            out.push(Violation::ZeroImageNotBlank { split, index });
        }
    }
}

fn check_log(pair: &DatasetPair, split: Split, out: &mut Vec<Violation>) {
    let set = pair.split(split);
    if set.placements.len() != set.len() {
        return;
    }
    let (w, h) = pair.spec.dims();
    let clip = pair.spec.stamp.clips();
    for (index, ((p, img), &label)) in set
        .placements
        .iter()
        .zip(&set.images)
        .zip(&set.labels)
        .enumerate()
    {
        if p.centers.len() != label as usize || p.stamps.len() != p.centers.len() {
            out.push(Violation::LogMismatch {
                split,
                index,
                detail: format!("{} logged objects for label {label}", p.centers.len()),
            });
            continue;
        }
        match p.render(w, h, clip) {
            Ok(g) if &g == img => {}
            Ok(_) => out.push(Violation::LogMismatch {
                split,
                index,
                detail: "re-rendered pixels differ".into(),
            }),
            Err(e) => out.push(Violation::LogMismatch {
                split,
                index,
                detail: e.to_string(),
            }),
        }
    }
}

fn check_centered(pair: &DatasetPair, split: Split, out: &mut Vec<Violation>) {
    let (w, h) = pair.spec.dims();
    for (index, img) in pair.split(split).images.iter().enumerate() {
        let fg = img.foreground();
        if fg.is_empty() {
            continue;
        }
        let top = fg.iter().map(|p| p.0 as usize).min().unwrap();
        let bottom = fg.iter().map(|p| p.0 as usize).max().unwrap();
        let left = fg.iter().map(|p| p.1 as usize).min().unwrap();
        let right = fg.iter().map(|p| p.1 as usize).max().unwrap();
        let balanced = |lo: usize, hi: usize, size: usize| {
            let after = size - 1 - hi;
            after == lo || after == lo + 1
        };
        if !balanced(top, bottom, h) || !balanced(left, right, w) {
            out.push(Violation::NotCentered { split, index });
        }
    }
}

/// Checks a generated (or loaded) pair against the structural rules of its
/// variant and tabulates observed counts against the combinatorial supply.
pub fn verify_dataset(pair: &DatasetPair) -> VerificationReport {
    let spec = &pair.spec;
    let mut out = Vec::new();
    for split in SPLITS {
        check_shapes(pair, split, &mut out);
        check_log(pair, split, &mut out);
        if spec.variant == Variant::Naive && !spec.stamp.clips() {
            check_centered(pair, split, &mut out);
        }
        if spec.series.standalone_zero() {
            let count = pair.split(split).histogram().get(0);
            let expected = usize::from(!pair.split(split).is_empty());
            if count != expected {
                out.push(Violation::ZeroImageCount { split, count });
            }
        }
    }

    let distinct = spec.distinct_centers();
    let universe = spec.center_universe();
    if let Some(part) = &pair.partition {
        let train: BTreeSet<Point> = part.train_side.iter().copied().collect();
        for p in &part.test_side {
            if train.contains(p) {
                out.push(Violation::PartitionOverlap { position: *p });
            }
        }
        let union: BTreeSet<Point> = part.train_side.iter().chain(&part.test_side).copied().collect();
        let universe_set: BTreeSet<Point> = universe.iter().copied().collect();
        if union != universe_set {
            out.push(Violation::PartitionCoverage {
                expected: universe.len(),
                actual: union.len(),
            });
        }
    }

    if distinct {
        for split in SPLITS {
            let Some(positions) = object_positions(pair, split, &mut out) else {
                continue;
            };
            let allowed: BTreeSet<Point> = pair.allowed(split).into_iter().collect();
            for (index, (centers, &label)) in positions.iter().zip(&pair.split(split).labels).enumerate() {
                let unique: BTreeSet<&Point> = centers.iter().collect();
                if unique.len() != centers.len() {
                    out.push(Violation::RepeatedCenter { split, index });
                }
                if spec.stamp == Stamping::Dot1 && centers.len() != label as usize {
                    out.push(Violation::LogMismatch {
                        split,
                        index,
                        detail: format!("{} foreground pixels for label {label}", centers.len()),
                    });
                }
                if let Some(p) = centers.iter().find(|p| !allowed.contains(p)) {
                    out.push(Violation::OutsidePartition {
                        split,
                        index,
                        position: *p,
                    });
                }
            }
        }

        let mut seen: HashMap<CanonicalKey, (Split, usize)> = HashMap::new();
        for split in SPLITS {
            for (index, img) in pair.split(split).images.iter().enumerate() {
                if img.is_blank() {
                    continue;
                }
                let key = img.key();
                if let Some(&first) = seen.get(&key) {
                    out.push(Violation::Duplicate {
                        first,
                        second: (split, index),
                        key: key.to_hex(),
                    });
                } else {
                    seen.insert(key, (split, index));
                }
            }
        }
    }

    let table = supply_table(pair);
    if distinct {
        check_supply(pair, &table, &mut out);
    }
    VerificationReport {
        table,
        violations: out,
    }
}

fn supply_table(pair: &DatasetPair) -> SupplyTable {
    let spec = &pair.spec;
    let positions = (pair.allowed(Split::Train).len(), pair.allowed(Split::Test).len());
    let (htr, hte) = (pair.train.histogram(), pair.test.histogram());
    let theo = |p: usize, n: u8| {
        spec.distinct_centers()
            .then(|| n_choose_k(p as u64, n as u64).unwrap_or_default())
    };
    let rows = (0..=spec.m)
        .map(|n| SupplyRow {
            label: n,
            theoretical_train: theo(positions.0, n),
            theoretical_test: theo(positions.1, n),
            observed_train: htr.get(n),
            observed_test: hte.get(n),
        })
        .collect();
    SupplyTable { positions, rows }
}

fn check_supply(pair: &DatasetPair, table: &SupplyTable, out: &mut Vec<Violation>) {
    let spec = &pair.spec;
    // zero-object images are exempt from uniqueness on 28x28 sets
    let first = if spec.series.standalone_zero() { 0 } else { 1 };
    let shared = spec.variant == Variant::Disjunct;
    for row in table.rows.iter().filter(|r| r.label >= first) {
        let (tr_supply, te_supply) = (
            row.theoretical_train.clone().unwrap_or_default(),
            row.theoretical_test.clone().unwrap_or_default(),
        );
        let mut bound = |pool, observed: usize, supply: &BigUint| {
            if BigUint::from(observed) > *supply {
                out.push(Violation::SupplyExceeded {
                    pool,
                    label: row.label,
                    observed,
                    supply: supply.clone(),
                });
            }
        };
        bound(Pool::Train, row.observed_train, &tr_supply);
        bound(Pool::Test, row.observed_test, &te_supply);
        if shared && row.label > 0 {
            bound(Pool::Shared, row.observed_train + row.observed_test, &tr_supply);
        }
    }
    for e in pair.exhaustion.iter().filter(|e| e.complete) {
        let Some(row) = table.row(e.label) else {
            continue;
        };
        let (observed, supply) = match e.pool {
            Pool::Shared => (
                row.observed_train + row.observed_test,
                row.theoretical_train.clone(),
            ),
            Pool::Train => (row.observed_train, row.theoretical_train.clone()),
            Pool::Test => (row.observed_test, row.theoretical_test.clone()),
        };
        let supply = supply.unwrap_or_default();
        if BigUint::from(observed) != supply {
            out.push(Violation::ExhaustionShortfall {
                pool: e.pool,
                label: e.label,
                observed,
                supply,
            });
        }
    }
}

/// Flags images of `set` whose pixels already occur in `other` (blank excluded).
pub fn shared_images(set: &LabeledSet, other: &LabeledSet) -> usize {
    let keys: std::collections::HashSet<CanonicalKey> = other
        .images
        .iter()
        .filter(|g| !g.is_blank())
        .map(|g| g.key())
        .collect();
    set.images
        .iter()
        .filter(|g| !g.is_blank() && keys.contains(&g.key()))
        .count()
}

/// Histogram rows keyed by label, for reports.
pub fn histogram_map(set: &LabeledSet) -> BTreeMap<u8, usize> {
    set.histogram()
        .0
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(l, &c)| (l as u8, c))
        .collect()
}
