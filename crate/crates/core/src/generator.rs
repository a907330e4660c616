//! Builds train/test pairs for every numerosity dataset variant.
//!
//! Every image draws from its own random stream, keyed by split and index,
//! so the variants without a uniqueness requirement generate in parallel.
//! The unique variants (disjunct, hard) commit images one at a time against
//! a shared registry in a fixed interleaved order of the two splits.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canvas::{self, CanonicalKey, CanvasError, PixelGrid, Point, StampKind};
use crate::combinatorics::choose_u64;
use crate::sampler::{
    self, CountDistribution, DistributionKind, PixelPartition, Rng, SamplerError,
    DEFAULT_UNIFORM_MIX,
};

/// Consecutive duplicate draws after which a label switches from rejection
/// sampling to enumerating its remaining supply.
pub const REJECTION_LIMIT: u32 = 1000;

/// Largest per-label supply that is enumerated once rejection sampling stalls.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

const STREAM_PARTITION: u64 = 1 << 56;
const STREAM_IMAGE: u64 = 2 << 56;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("{split} split: every label is exhausted (last one was {label}) with {remaining} images still to generate")]
    Infeasible {
        split: Split,
        label: u8,
        remaining: usize,
    },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Canvas(#[from] CanvasError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    /// 28x28 dots.
    M1,
    /// 10x10 single-pixel dots.
    M2,
    /// 10x10 'X' glyphs.
    A1,
    /// 10x10 mixed 'X', 'O', '+', 'S' glyphs.
    A2,
}

impl Series {
    pub fn dims(self) -> (usize, usize) {
        match self {
            Series::M1 => (28, 28),
            _ => (10, 10),
        }
    }

    /// Whether the zero-object image is a single standalone image per split.
    pub fn standalone_zero(self) -> bool {
        self != Series::M1
    }

    pub fn center_universe(self) -> Vec<Point> {
        match self {
            Series::M1 => sampler::square_universe(4..26),
            _ => sampler::square_universe(0..10),
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Series::M1 => "m1",
            Series::M2 => "m2",
            Series::A1 => "a1",
            Series::A2 => "a2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Naive,
    NoCentering,
    Disjunct,
    Hard,
}

impl Variant {
    pub fn unique(self) -> bool {
        matches!(self, Variant::Disjunct | Variant::Hard)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Naive => "naive",
            Variant::NoCentering => "no-centering",
            Variant::Disjunct => "disjunct",
            Variant::Hard => "hard",
        };
        f.write_str(s)
    }
}

/// What gets stamped at each object position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stamping {
    Dot3,
    Dot1,
    /// 'X' only for A1, a uniformly random glyph per object for A2.
    Glyphs,
}

impl Stamping {
    pub fn clips(self) -> bool {
        self == Stamping::Glyphs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub series: Series,
    pub variant: Variant,
    pub stamp: Stamping,
    /// Largest object count (at most 9).
    pub m: u8,
    /// Train-split count law. Test splits are always uniform.
    pub distribution: DistributionKind,
    pub uniform_mix: f64,
    pub train_count: usize,
    pub test_count: usize,
    /// Size of the test side of the position partition (hard variant only).
    pub test_side: Option<usize>,
    pub seed: u64,
}

impl DatasetSpec {
    /// Paper-default recipe for a series/variant: 60000/10000 images, m = 9,
    /// uniform counts and the default partition size.
    pub fn new(series: Series, variant: Variant) -> Self {
        let stamp = match series {
            Series::M1 => Stamping::Dot3,
            Series::M2 => Stamping::Dot1,
            Series::A1 | Series::A2 => Stamping::Glyphs,
        };
        Self {
            series,
            variant,
            stamp,
            m: 9,
            distribution: DistributionKind::Uniform,
            uniform_mix: DEFAULT_UNIFORM_MIX,
            train_count: 60_000,
            test_count: 10_000,
            test_side: (variant == Variant::Hard).then(|| default_test_side(series)),
            seed: 0,
        }
    }

    pub fn with_stamp(mut self, stamp: Stamping) -> Self {
        self.stamp = stamp;
        self
    }

    pub fn with_m(mut self, m: u8) -> Self {
        self.m = m;
        self
    }

    pub fn with_pow102x(mut self) -> Self {
        self.distribution = DistributionKind::Pow102x;
        self
    }

    pub fn with_counts(mut self, train: usize, test: usize) -> Self {
        self.train_count = train;
        self.test_count = test;
        self
    }

    pub fn with_test_side(mut self, size: usize) -> Self {
        self.test_side = Some(size);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        self.series.dims()
    }

    pub fn center_universe(&self) -> Vec<Point> {
        self.series.center_universe()
    }

    /// Count law of a split, over the counts that are actually sampled.
    pub fn count_distribution(&self, split: Split) -> CountDistribution {
        let low = if self.series.standalone_zero() { 1 } else { 0 };
        match (split, self.distribution) {
            (Split::Train, DistributionKind::Pow102x) => {
                CountDistribution::pow102x(self.m, self.uniform_mix)
            }
            _ => CountDistribution::uniform(low, self.m),
        }
    }

    /// Whether distinct images place their objects on distinct positions.
    pub fn distinct_centers(&self) -> bool {
        self.variant.unique()
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        let bad = |msg: String| Err(GenerateError::InvalidSpec(msg));
        if !(1..=9).contains(&self.m) {
            return bad(format!("m = {} but labels are single digits (1..=9)", self.m));
        }
        if !(0.0..=1.0).contains(&self.uniform_mix) {
            return bad(format!("uniform mix {} outside [0, 1]", self.uniform_mix));
        }
        let stamp_ok = match self.series {
            Series::M1 => matches!(self.stamp, Stamping::Dot3 | Stamping::Dot1),
            Series::M2 => self.stamp == Stamping::Dot1,
            Series::A1 | Series::A2 => self.stamp == Stamping::Glyphs,
        };
        if !stamp_ok {
            return bad(format!("series {} cannot use stamp {:?}", self.series, self.stamp));
        }
        if self.series == Series::M1 && self.distribution != DistributionKind::Uniform {
            return bad("series m1 only supports uniform counts".into());
        }
        if self.train_count > u32::MAX as usize || self.test_count > u32::MAX as usize {
            return bad("image counts must fit in 32 bits".into());
        }
        if self.series.standalone_zero() && (self.train_count == 1 || self.test_count == 1) {
            // index 0 holds the zero image; fine, the split just has no other images
        }
        let universe = self.center_universe().len();
        match (self.variant, self.test_side) {
            (Variant::Hard, None) => return bad("hard variant needs a test side size".into()),
            (Variant::Hard, Some(t)) if t == 0 || t >= universe => {
                return bad(format!(
                    "test side {t} must lie strictly between 0 and {universe}"
                ))
            }
            (Variant::Hard, Some(_)) => {}
            (_, Some(_)) => return bad("a test side size only applies to the hard variant".into()),
            (_, None) => {}
        }
        Ok(())
    }
}

pub fn default_test_side(series: Series) -> usize {
    match series {
        Series::M1 => 59,
        _ => 16,
    }
}

/// Objects of one image: anchor positions and, for glyph data, the glyph of each.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Placement {
    pub centers: Vec<Point>,
    pub stamps: Vec<StampKind>,
}

impl Placement {
    pub fn render(
        &self,
        width: usize,
        height: usize,
        clip: bool,
    ) -> Result<PixelGrid, CanvasError> {
        let stamps: Vec<_> = self
            .centers
            .iter()
            .copied()
            .zip(self.stamps.iter().copied())
            .collect();
        canvas::render_mixed(width, height, &stamps, clip)
    }

    /// Order-independent identity of the anchor set.
    pub fn anchor_key(&self) -> Vec<u16> {
        let mut key: Vec<u16> = self
            .centers
            .iter()
            .map(|&(r, c)| (r as u16) << 8 | c as u16)
            .collect();
        key.sort_unstable();
        key
    }
}

/// Count of images per label 0..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Histogram(pub [usize; 10]);

impl Histogram {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn get(&self, label: u8) -> usize {
        self.0[label as usize]
    }
}

impl fmt::Display for Histogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(l, c)| format!("{l}: {c}"))
            .collect();
        f.write_str(&parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSet {
    pub width: usize,
    pub height: usize,
    pub images: Vec<PixelGrid>,
    pub labels: Vec<u8>,
    /// Generation log, one entry per image. Empty when loaded without a log.
    pub placements: Vec<Placement>,
}

impl LabeledSet {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            images: Vec::new(),
            labels: Vec::new(),
            placements: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn histogram(&self) -> Histogram {
        histogram(self)
    }
}

pub fn histogram(set: &LabeledSet) -> Histogram {
    let mut h = [0usize; 10];
    for &l in &set.labels {
        h[l as usize] += 1;
    }
    Histogram(h)
}

/// Which positions a uniqueness pool draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    /// Both splits share the universe (disjunct).
    Shared,
    Train,
    Test,
}

impl From<Split> for Pool {
    fn from(s: Split) -> Self {
        match s {
            Split::Train => Pool::Train,
            Split::Test => Pool::Test,
        }
    }
}

/// A label that ran out of fresh images during generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exhaustion {
    pub pool: Pool,
    pub label: u8,
    /// Every anchor combination of the pool was used.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub spec: DatasetSpec,
    pub train: LabeledSet,
    pub test: LabeledSet,
    pub partition: Option<PixelPartition>,
    pub exhaustion: Vec<Exhaustion>,
}

impl DatasetPair {
    pub fn split(&self, split: Split) -> &LabeledSet {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Positions objects of `split` may occupy.
    pub fn allowed(&self, split: Split) -> Vec<Point> {
        match (&self.partition, split) {
            (Some(p), Split::Train) => p.train_side.clone(),
            (Some(p), Split::Test) => p.test_side.clone(),
            (None, _) => self.spec.center_universe(),
        }
    }

    pub fn pool(&self, split: Split) -> Pool {
        pool_of(&self.spec, split)
    }
}

fn pool_of(spec: &DatasetSpec, split: Split) -> Pool {
    match spec.variant {
        Variant::Hard => split.into(),
        _ => Pool::Shared,
    }
}

fn image_stream(split: Split, index: usize) -> u64 {
    STREAM_IMAGE | split.index() << 48 | index as u64
}

fn choose_stamps(spec: &DatasetSpec, n: usize, rng: &mut Rng) -> Vec<StampKind> {
    match (spec.stamp, spec.series) {
        (Stamping::Dot3, _) => vec![StampKind::Dot3; n],
        (Stamping::Dot1, _) => vec![StampKind::Dot1; n],
        (Stamping::Glyphs, Series::A2) => (0..n)
            .map(|_| StampKind::GLYPHS[rng.uniform_index(4)])
            .collect(),
        (Stamping::Glyphs, _) => vec![StampKind::GlyphX; n],
    }
}

pub fn generate_pair(spec: &DatasetSpec) -> Result<DatasetPair, GenerateError> {
    spec.validate()?;
    let partition = match (spec.variant, spec.test_side) {
        (Variant::Hard, Some(test_side)) => {
            let mut rng = Rng::new(spec.seed, STREAM_PARTITION);
            Some(sampler::partition_pixels(
                &spec.center_universe(),
                test_side,
                &mut rng,
            )?)
        }
        _ => None,
    };
    let (train, test, exhaustion) = if spec.variant.unique() {
        UniqueBuilder::new(spec, partition.as_ref()).run()?
    } else {
        (
            free_split(spec, Split::Train)?,
            free_split(spec, Split::Test)?,
            Vec::new(),
        )
    };
    Ok(DatasetPair {
        spec: spec.clone(),
        train,
        test,
        partition,
        exhaustion,
    })
}

fn split_len(spec: &DatasetSpec, split: Split) -> usize {
    match split {
        Split::Train => spec.train_count,
        Split::Test => spec.test_count,
    }
}

fn assemble(spec: &DatasetSpec, items: Vec<(u8, Placement, PixelGrid)>) -> LabeledSet {
    let (width, height) = spec.dims();
    let mut set = LabeledSet::empty(width, height);
    set.labels.reserve(items.len());
    for (label, placement, grid) in items {
        set.labels.push(label);
        set.placements.push(placement);
        set.images.push(grid);
    }
    set
}

/// Naive and no-centering splits: independent draws, no registry.
fn free_split(spec: &DatasetSpec, split: Split) -> Result<LabeledSet, GenerateError> {
    let (width, height) = spec.dims();
    let universe = spec.center_universe();
    let dist = spec.count_distribution(split);
    let clip = spec.stamp.clips();
    let items: Result<Vec<_>, GenerateError> = (0..split_len(spec, split))
        .into_par_iter()
        .map(|index| {
            if index == 0 && spec.series.standalone_zero() {
                return Ok((0, Placement::default(), PixelGrid::blank(width, height)));
            }
            let mut rng = Rng::new(spec.seed, image_stream(split, index));
            let n = sampler::sample_count(&dist, &mut rng);
            let mut centers = sampler::sample_centers(n as usize, &universe, false, &mut rng)?;
            let stamps = choose_stamps(spec, centers.len(), &mut rng);
            if spec.variant == Variant::Naive {
                centers = canvas::center_pattern(&centers, width, height, stamps_extent(&stamps))?;
            }
            let placement = Placement { centers, stamps };
            let grid = placement.render(width, height, clip)?;
            Ok((n, placement, grid))
        })
        .collect();
    Ok(assemble(spec, items?))
}

// Centering uses the 3x3 extent shared by every non-dot1 stamp.
fn stamps_extent(stamps: &[StampKind]) -> StampKind {
    if stamps.iter().all(|&s| s == StampKind::Dot1) {
        StampKind::Dot1
    } else {
        StampKind::Dot3
    }
}

/// Order in which the unique variants commit images: both splits advance in
/// proportion to their sizes, train first on ties.
pub fn interleaved_order(train: usize, test: usize) -> Vec<(Split, usize)> {
    let mut out = Vec::with_capacity(train + test);
    let (mut i, mut j) = (0usize, 0usize);
    while i < train || j < test {
        let take_train = if i == train {
            false
        } else if j == test {
            true
        } else {
            // compare (i + 1/2) / train against (j + 1/2) / test
            (2 * i as u128 + 1) * test as u128 <= (2 * j as u128 + 1) * train as u128
        };
        if take_train {
            out.push((Split::Train, i));
            i += 1;
        } else {
            out.push((Split::Test, j));
            j += 1;
        }
    }
    out
}

enum LabelMode {
    Sampling { streak: u32 },
    Enumerated { candidates: Vec<u16>, next: usize },
    Exhausted,
}

struct LabelState {
    mode: LabelMode,
    committed: u64,
}

struct UniqueBuilder<'a> {
    spec: &'a DatasetSpec,
    width: usize,
    height: usize,
    clip: bool,
    allowed: [Vec<Point>; 2],
    images: HashSet<CanonicalKey>,
    anchors: HashSet<Vec<u16>>,
    labels: HashMap<(Pool, u8), LabelState>,
    zero_closed: [bool; 2],
    counts: [[usize; 10]; 2],
    exhaustion: Vec<Exhaustion>,
    blank_key: CanonicalKey,
}

impl<'a> UniqueBuilder<'a> {
    fn new(spec: &'a DatasetSpec, partition: Option<&PixelPartition>) -> Self {
        let (width, height) = spec.dims();
        let allowed = match partition {
            Some(p) => [p.train_side.clone(), p.test_side.clone()],
            None => [spec.center_universe(), spec.center_universe()],
        };
        Self {
            spec,
            width,
            height,
            clip: spec.stamp.clips(),
            allowed,
            images: HashSet::new(),
            anchors: HashSet::new(),
            labels: HashMap::new(),
            zero_closed: [false; 2],
            counts: [[0; 10]; 2],
            exhaustion: Vec::new(),
            blank_key: PixelGrid::blank(width, height).key(),
        }
    }

    fn run(mut self) -> Result<(LabeledSet, LabeledSet, Vec<Exhaustion>), GenerateError> {
        let spec = self.spec;
        let mut out: [Vec<(u8, Placement, PixelGrid)>; 2] = [
            Vec::with_capacity(spec.train_count),
            Vec::with_capacity(spec.test_count),
        ];
        let order = interleaved_order(spec.train_count, spec.test_count);
        for &(split, index) in &order {
            let s = split.index() as usize;
            let item = if index == 0 && spec.series.standalone_zero() {
                (0, Placement::default(), PixelGrid::blank(self.width, self.height))
            } else {
                let mut rng = Rng::new(spec.seed, image_stream(split, index));
                let remaining = split_len(spec, split) - index;
                self.draw(split, remaining, &mut rng)?
            };
            self.counts[s][item.0 as usize] += 1;
            out[s].push(item);
        }
        let [train, test] = out;
        Ok((
            assemble(spec, train),
            assemble(spec, test),
            self.exhaustion,
        ))
    }

    fn is_exhausted(&self, pool: Pool, label: u8) -> bool {
        matches!(
            self.labels.get(&(pool, label)).map(|s| &s.mode),
            Some(LabelMode::Exhausted)
        )
    }

    fn draw(
        &mut self,
        split: Split,
        remaining: usize,
        rng: &mut Rng,
    ) -> Result<(u8, Placement, PixelGrid), GenerateError> {
        let pool = pool_of(self.spec, split);
        let s = split.index() as usize;
        let pmf = self.spec.count_distribution(split).pmf();
        let mut refused_zero = false;
        let mut last_label = 0u8;
        loop {
            let weights: Vec<f64> = (0..10u8)
                .map(|l| {
                    let blocked = if l == 0 {
                        refused_zero || self.zero_closed[s]
                    } else {
                        self.is_exhausted(pool, l)
                    };
                    if blocked {
                        0.0
                    } else {
                        pmf[l as usize]
                    }
                })
                .collect();
            let Some(label) = rng.weighted(&weights).map(|l| l as u8) else {
                return Err(GenerateError::Infeasible {
                    split,
                    label: last_label,
                    remaining,
                });
            };
            last_label = label;
            if label == 0 {
                match self.zero_allowed(split, pool) {
                    ZeroRule::Accept => {
                        let blank = PixelGrid::blank(self.width, self.height);
                        return Ok((0, Placement::default(), blank));
                    }
                    ZeroRule::Refuse => refused_zero = true,
                    ZeroRule::Close => self.zero_closed[s] = true,
                }
                continue;
            }
            if let Some((placement, grid)) = self.try_label(split, pool, label, rng)? {
                return Ok((label, placement, grid));
            }
        }
    }

    fn zero_allowed(&self, split: Split, pool: Pool) -> ZeroRule {
        let s = split.index() as usize;
        if self.spec.variant != Variant::Disjunct {
            return ZeroRule::Accept;
        }
        // Disjunct 28x28: zero images are capped by the achieved one-object count.
        if self.counts[s][0] < self.counts[s][1] {
            ZeroRule::Accept
        } else if self.is_exhausted(pool, 1) {
            ZeroRule::Close
        } else {
            ZeroRule::Refuse
        }
    }

    fn try_commit(&mut self, placement: &Placement) -> Result<Option<PixelGrid>, GenerateError> {
        let anchor = placement.anchor_key();
        if self.anchors.contains(&anchor) {
            return Ok(None);
        }
        let grid = placement.render(self.width, self.height, self.clip)?;
        let key = grid.key();
        if key == self.blank_key || self.images.contains(&key) {
            return Ok(None);
        }
        self.anchors.insert(anchor);
        self.images.insert(key);
        Ok(Some(grid))
    }

    /// One attempt at a fresh image with `label` objects. `None` means the
    /// label just became exhausted in `pool`.
    fn try_label(
        &mut self,
        split: Split,
        pool: Pool,
        label: u8,
        rng: &mut Rng,
    ) -> Result<Option<(Placement, PixelGrid)>, GenerateError> {
        let s = split.index() as usize;
        loop {
            let state = self.labels.entry((pool, label)).or_insert(LabelState {
                mode: LabelMode::Sampling { streak: 0 },
                committed: 0,
            });
            match &mut state.mode {
                LabelMode::Exhausted => return Ok(None),
                LabelMode::Sampling { .. } => {
                    let centers =
                        sampler::sample_centers(label as usize, &self.allowed[s], true, rng)?;
                    let stamps = choose_stamps(self.spec, centers.len(), rng);
                    let placement = Placement { centers, stamps };
                    let committed = self.try_commit(&placement)?;
                    let state = self.labels.get_mut(&(pool, label)).unwrap();
                    if let Some(grid) = committed {
                        state.committed += 1;
                        state.mode = LabelMode::Sampling { streak: 0 };
                        return Ok(Some((placement, grid)));
                    }
                    if let LabelMode::Sampling { streak } = &mut state.mode {
                        *streak += 1;
                        if *streak >= REJECTION_LIMIT {
                            self.enter_enumeration(s, pool, label, rng);
                        }
                    }
                }
                LabelMode::Enumerated { candidates, next } => {
                    let n = label as usize;
                    if *next * n >= candidates.len() {
                        self.close_label(s, pool, label);
                        return Ok(None);
                    }
                    let codes = candidates[*next * n..(*next + 1) * n].to_vec();
                    *next += 1;
                    let centers: Vec<Point> =
                        codes.iter().map(|&c| ((c >> 8) as u8, c as u8)).collect();
                    let stamps = choose_stamps(self.spec, n, rng);
                    let placement = Placement { centers, stamps };
                    if let Some(grid) = self.try_commit(&placement)? {
                        self.labels.get_mut(&(pool, label)).unwrap().committed += 1;
                        return Ok(Some((placement, grid)));
                    }
                }
            }
        }
    }

    fn enter_enumeration(&mut self, s: usize, pool: Pool, label: u8, rng: &mut Rng) {
        let allowed = &self.allowed[s];
        let supply = choose_u64(allowed.len() as u64, label as u64);
        let state = self.labels.get_mut(&(pool, label)).unwrap();
        match supply {
            Some(supply) if supply <= ENUMERATION_LIMIT => {
                let codes: Vec<u16> = allowed
                    .iter()
                    .map(|&(r, c)| (r as u16) << 8 | c as u16)
                    .collect();
                let mut fresh: Vec<Vec<u16>> = Vec::new();
                for_each_combination(codes.len(), label as usize, |idx| {
                    let mut combo: Vec<u16> = idx.iter().map(|&i| codes[i]).collect();
                    combo.sort_unstable();
                    if !self.anchors.contains(&combo) {
                        fresh.push(combo);
                    }
                });
                rng.shuffle(&mut fresh);
                state.mode = LabelMode::Enumerated {
                    candidates: fresh.concat(),
                    next: 0,
                };
            }
            _ => {
                state.mode = LabelMode::Exhausted;
                self.exhaustion.push(Exhaustion {
                    pool,
                    label,
                    complete: false,
                });
            }
        }
    }

    fn close_label(&mut self, s: usize, pool: Pool, label: u8) {
        let supply = choose_u64(self.allowed[s].len() as u64, label as u64);
        let state = self.labels.get_mut(&(pool, label)).unwrap();
        state.mode = LabelMode::Exhausted;
        self.exhaustion.push(Exhaustion {
            pool,
            label,
            complete: supply == Some(state.committed),
        });
    }
}

enum ZeroRule {
    Accept,
    Refuse,
    Close,
}

/// Calls `f` with every increasing `k`-subset of `0..n`, in lexicographic order.
pub fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// A named catalog entry.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub spec: DatasetSpec,
}

/// The twelve machine/anyone datasets of the standard catalog.
pub fn catalog(seed: u64) -> Vec<CatalogEntry> {
    use Series::*;
    use Variant::*;
    let e = |name, spec: DatasetSpec| CatalogEntry {
        name,
        spec: spec.with_seed(seed),
    };
    vec![
        e("s1-naive", DatasetSpec::new(M1, Naive)),
        e("s1-no-centering", DatasetSpec::new(M1, NoCentering)),
        e("s1-disjunct", DatasetSpec::new(M1, Disjunct)),
        e("s1-disjunct-1px", DatasetSpec::new(M1, Disjunct).with_stamp(Stamping::Dot1)),
        e("s1-hard", DatasetSpec::new(M1, Hard)),
        e("s1-hard-1px", DatasetSpec::new(M1, Hard).with_stamp(Stamping::Dot1)),
        e("s2-disjunct", DatasetSpec::new(M2, Disjunct)),
        e("s2-hard", DatasetSpec::new(M2, Hard)),
        e("s2-disjunct-102x", DatasetSpec::new(M2, Disjunct).with_pow102x()),
        e("s2-hard-102x", DatasetSpec::new(M2, Hard).with_pow102x()),
        e("a1-hard-102x", DatasetSpec::new(A1, Hard).with_pow102x()),
        e("a2-hard-102x", DatasetSpec::new(A2, Hard).with_pow102x()),
    ]
}

/// Hard pow-102x subsets with a smaller maximum count (72/28 partition).
pub fn reduced_hard_102x(series: Series, m: u8, seed: u64) -> DatasetSpec {
    DatasetSpec::new(series, Variant::Hard)
        .with_pow102x()
        .with_m(m)
        .with_test_side(28)
        .with_seed(seed)
}

/// Three-object glyph set on a 57/43 partition with 30000 training images.
pub fn glyph_h3_102x(seed: u64) -> DatasetSpec {
    DatasetSpec::new(Series::A2, Variant::Hard)
        .with_pow102x()
        .with_m(3)
        .with_test_side(43)
        .with_counts(30_000, 10_000)
        .with_seed(seed)
}
