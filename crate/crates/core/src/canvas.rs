//! Pixel grids and the stamps placed on them.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BACKGROUND: u8 = 0;
pub const FOREGROUND: u8 = 255;

/// A (row, col) position on a grid.
pub type Point = (u8, u8);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CanvasError {
    #[error("center ({row}, {col}) lies outside the {width}x{height} grid")]
    CenterOutOfBounds {
        row: i32,
        col: i32,
        width: usize,
        height: usize,
    },
    #[error("stamp around ({row}, {col}) leaves the {width}x{height} grid and clipping is off")]
    StampOutOfBounds {
        row: u8,
        col: u8,
        width: usize,
        height: usize,
    },
    #[error("grid dimensions must be positive and at most 255 (got {width}x{height})")]
    BadDimensions { width: usize, height: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StampKind {
    Dot3,
    Dot1,
    GlyphX,
    GlyphO,
    GlyphPlus,
    GlyphS,
}

impl StampKind {
    pub const GLYPHS: [StampKind; 4] = [
        StampKind::GlyphX,
        StampKind::GlyphO,
        StampKind::GlyphPlus,
        StampKind::GlyphS,
    ];

    /// Offsets (dr, dc) relative to the stamp center.
    pub fn mask(self) -> &'static [(i8, i8)] {
        match self {
            StampKind::Dot3 => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 0),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
            StampKind::Dot1 => &[(0, 0)],
            StampKind::GlyphX => &[(-1, -1), (-1, 1), (0, 0), (1, -1), (1, 1)],
            StampKind::GlyphO => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            StampKind::GlyphPlus => &[(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)],
            StampKind::GlyphS => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }

    pub fn symbol(self) -> char {
        match self {
            StampKind::Dot3 => '*',
            StampKind::Dot1 => '.',
            StampKind::GlyphX => 'X',
            StampKind::GlyphO => 'O',
            StampKind::GlyphPlus => '+',
            StampKind::GlyphS => 'S',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '*' => Some(StampKind::Dot3),
            '.' => Some(StampKind::Dot1),
            'X' => Some(StampKind::GlyphX),
            'O' => Some(StampKind::GlyphO),
            '+' => Some(StampKind::GlyphPlus),
            'S' => Some(StampKind::GlyphS),
            _ => None,
        }
    }

    /// Extent of the mask as (min_dr, max_dr, min_dc, max_dc).
    fn extent(self) -> (i32, i32, i32, i32) {
        let m = self.mask();
        let rows = m.iter().map(|&(r, _)| r as i32);
        let cols = m.iter().map(|&(_, c)| c as i32);
        (
            rows.clone().min().unwrap(),
            rows.max().unwrap(),
            cols.clone().min().unwrap(),
            cols.max().unwrap(),
        )
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PixelGrid {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl PixelGrid {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![BACKGROUND; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.data[row * self.width + col] = value;
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&p| p != BACKGROUND).count()
    }

    pub fn is_blank(&self) -> bool {
        self.data.iter().all(|&p| p == BACKGROUND)
    }

    /// Positions of every non-background pixel, row-major.
    pub fn foreground(&self) -> Vec<Point> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != BACKGROUND)
            .map(|(i, _)| ((i / self.width) as u8, (i % self.width) as u8))
            .collect()
    }

    /// Binary PGM (P5) rendering.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() + 20);
        write!(out, "P5\n{} {}\n255\n", self.width, self.height).unwrap();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn key(&self) -> CanonicalKey {
        canonical_key(self)
    }
}

impl fmt::Debug for PixelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "PixelGrid {}x{}", self.width, self.height)?;
        for row in self.data.chunks(self.width) {
            let line: String = row
                .iter()
                .map(|&p| match p {
                    0 => '.',
                    255 => '#',
                    _ => '+',
                })
                .collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn check_dims(width: usize, height: usize) -> Result<(), CanvasError> {
    if width == 0 || height == 0 || width > 255 || height > 255 {
        return Err(CanvasError::BadDimensions { width, height });
    }
    Ok(())
}

/// Stamps one `stamp` per entry of `stamps` at the paired center.
///
/// Stamps are merged by set union. With `clip` set, offsets falling outside
/// the grid are dropped; otherwise they are an error.
pub fn render_mixed(
    width: usize,
    height: usize,
    stamps: &[(Point, StampKind)],
    clip: bool,
) -> Result<PixelGrid, CanvasError> {
    check_dims(width, height)?;
    let mut grid = PixelGrid::blank(width, height);
    for &((row, col), kind) in stamps {
        if row as usize >= height || col as usize >= width {
            return Err(CanvasError::CenterOutOfBounds {
                row: row as i32,
                col: col as i32,
                width,
                height,
            });
        }
        for &(dr, dc) in kind.mask() {
            let r = row as i32 + dr as i32;
            let c = col as i32 + dc as i32;
            if r < 0 || c < 0 || r >= height as i32 || c >= width as i32 {
                if clip {
                    continue;
                }
                return Err(CanvasError::StampOutOfBounds {
                    row,
                    col,
                    width,
                    height,
                });
            }
            grid.set(r as usize, c as usize, FOREGROUND);
        }
    }
    Ok(grid)
}

pub fn render(
    width: usize,
    height: usize,
    centers: &[Point],
    stamp: StampKind,
    clip: bool,
) -> Result<PixelGrid, CanvasError> {
    let stamps: Vec<_> = centers.iter().map(|&p| (p, stamp)).collect();
    render_mixed(width, height, &stamps, clip)
}

/// Translates `centers` so that the bounding box of the stamped pattern is
/// centered on the grid. Odd leftover space goes below/right of the pattern.
pub fn center_pattern(
    centers: &[Point],
    width: usize,
    height: usize,
    stamp: StampKind,
) -> Result<Vec<Point>, CanvasError> {
    if centers.is_empty() {
        return Ok(Vec::new());
    }
    let (min_dr, max_dr, min_dc, max_dc) = stamp.extent();
    let top = centers.iter().map(|&(r, _)| r as i32).min().unwrap() + min_dr;
    let bottom = centers.iter().map(|&(r, _)| r as i32).max().unwrap() + max_dr;
    let left = centers.iter().map(|&(_, c)| c as i32).min().unwrap() + min_dc;
    let right = centers.iter().map(|&(_, c)| c as i32).max().unwrap() + max_dc;

    let shift_r = (height as i32 - (bottom - top + 1)).div_euclid(2) - top;
    let shift_c = (width as i32 - (right - left + 1)).div_euclid(2) - left;

    centers
        .iter()
        .map(|&(r, c)| {
            let (nr, nc) = (r as i32 + shift_r, c as i32 + shift_c);
            if nr < 0 || nc < 0 || nr >= height as i32 || nc >= width as i32 {
                Err(CanvasError::CenterOutOfBounds {
                    row: nr,
                    col: nc,
                    width,
                    height,
                })
            } else {
                Ok((nr as u8, nc as u8))
            }
        })
        .collect()
}

/// Identity token of a grid: equal grids give equal keys and vice versa.
///
/// Binary grids (every pixel 0 or 255) pack to one bit per pixel; anything
/// else keeps the raw bytes under a distinct tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(Box<[u8]>);

impl CanonicalKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

const KEY_BINARY: u8 = 1;
const KEY_RAW: u8 = 2;

pub fn canonical_key(grid: &PixelGrid) -> CanonicalKey {
    let binary = grid
        .data
        .iter()
        .all(|&p| p == BACKGROUND || p == FOREGROUND);
    let mut out = Vec::with_capacity(5 + grid.data.len().div_ceil(8));
    out.push(if binary { KEY_BINARY } else { KEY_RAW });
    out.extend_from_slice(&(grid.width as u16).to_be_bytes());
    out.extend_from_slice(&(grid.height as u16).to_be_bytes());
    if binary {
        for chunk in grid.data.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &p)| acc | (((p == FOREGROUND) as u8) << i));
            out.push(byte);
        }
    } else {
        out.extend_from_slice(&grid.data);
    }
    CanonicalKey(out.into_boxed_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    // Independent bounding box of foreground pixels: (top, bottom, left, right).
    fn bbox(grid: &PixelGrid) -> (usize, usize, usize, usize) {
        let fg = grid.foreground();
        let rows: Vec<usize> = fg.iter().map(|p| p.0 as usize).collect();
        let cols: Vec<usize> = fg.iter().map(|p| p.1 as usize).collect();
        (
            *rows.iter().min().unwrap(),
            *rows.iter().max().unwrap(),
            *cols.iter().min().unwrap(),
            *cols.iter().max().unwrap(),
        )
    }

    #[test]
    fn empty_render_is_blank() {
        let g = render(28, 28, &[], StampKind::Dot3, false).unwrap();
        assert!(g.is_blank());
        assert_eq!(g.data().len(), 784);
    }

    #[test]
    fn single_dot3_geometry() {
        let g = render(28, 28, &[(4, 4)], StampKind::Dot3, false).unwrap();
        assert_eq!(g.foreground_count(), 9);
        assert_eq!(bbox(&g), (3, 5, 3, 5));
    }

    #[test]
    fn disjoint_dot1_union() {
        let g = render(10, 10, &[(0, 0), (0, 1)], StampKind::Dot1, false).unwrap();
        assert_eq!(g.foreground_count(), 2);
    }

    #[test]
    fn bounds_are_enforced() {
        assert!(matches!(
            render(10, 10, &[(10, 0)], StampKind::Dot1, false),
            Err(CanvasError::CenterOutOfBounds { .. })
        ));
        assert!(matches!(
            render(10, 10, &[(0, 5)], StampKind::Dot3, false),
            Err(CanvasError::StampOutOfBounds { .. })
        ));
        let clipped = render(10, 10, &[(0, 0)], StampKind::GlyphS, true).unwrap();
        assert_eq!(clipped.foreground_count(), 3);
    }

    #[test]
    fn glyph_masks_are_distinct_and_fit() {
        let masks: BTreeSet<Vec<(i8, i8)>> = StampKind::GLYPHS
            .iter()
            .map(|g| g.mask().to_vec())
            .collect();
        assert_eq!(masks.len(), 4);
        for g in StampKind::GLYPHS {
            assert!(g.mask().iter().all(|&(r, c)| (-1..=1).contains(&r) && (-1..=1).contains(&c)));
        }
        assert_eq!(StampKind::Dot3.mask().len(), 9);
        assert_eq!(StampKind::Dot1.mask().len(), 1);
    }

    #[test]
    fn centering_single_dot3() {
        let c = center_pattern(&[(4, 4)], 28, 28, StampKind::Dot3).unwrap();
        assert_eq!(c, vec![(13, 13)]);
        let g = render(28, 28, &c, StampKind::Dot3, false).unwrap();
        assert_eq!(bbox(&g), (12, 14, 12, 14));
    }

    #[test]
    fn centering_is_a_fixed_point() {
        let once = center_pattern(&[(5, 9), (20, 11)], 28, 28, StampKind::Dot3).unwrap();
        let twice = center_pattern(&once, 28, 28, StampKind::Dot3).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn centering_empty_is_identity() {
        assert!(center_pattern(&[], 28, 28, StampKind::Dot3).unwrap().is_empty());
    }

    #[test]
    fn key_ignores_insertion_order_and_sees_single_pixels() {
        let a = render(10, 10, &[(1, 2), (7, 7), (3, 3)], StampKind::Dot1, false).unwrap();
        let b = render(10, 10, &[(3, 3), (1, 2), (7, 7)], StampKind::Dot1, false).unwrap();
        assert_eq!(a.key(), b.key());
        let mut c = a.clone();
        c.set(9, 9, FOREGROUND);
        assert_ne!(a.key(), c.key());
        let mut gray = a.clone();
        gray.set(9, 9, 1);
        assert_ne!(a.key(), gray.key());
    }

    #[test]
    fn blank_key_is_stable() {
        let k = PixelGrid::blank(10, 10).key();
        assert_eq!(k.to_hex(), format!("01000a000a{}", "00".repeat(13)));
    }

    #[test]
    fn pgm_header() {
        let pgm = PixelGrid::blank(3, 2).to_pgm();
        assert_eq!(&pgm[..11], b"P5\n3 2\n255\n");
        assert_eq!(pgm.len(), 11 + 6);
    }

    proptest! {
        #[test]
        fn dot1_count_equals_distinct_centers(
            centers in proptest::collection::btree_set((0u8..10, 0u8..10), 0..30)
        ) {
            let centers: Vec<_> = centers.into_iter().collect();
            let g = render(10, 10, &centers, StampKind::Dot1, false).unwrap();
            prop_assert_eq!(g.foreground_count(), centers.len());
        }

        #[test]
        fn centering_is_translation_invariant(
            centers in proptest::collection::vec((4u8..26, 4u8..26), 1..8),
            dr in -3i32..4,
            dc in -3i32..4,
        ) {
            let shifted: Vec<Point> = centers
                .iter()
                .map(|&(r, c)| ((r as i32 + dr) as u8, (c as i32 + dc) as u8))
                .collect();
            prop_assert_eq!(
                center_pattern(&centers, 28, 28, StampKind::Dot3).unwrap(),
                center_pattern(&shifted, 28, 28, StampKind::Dot3).unwrap()
            );
        }

        #[test]
        fn centered_pattern_has_balanced_margins(
            centers in proptest::collection::vec((4u8..26, 4u8..26), 1..8),
        ) {
            let c = center_pattern(&centers, 28, 28, StampKind::Dot3).unwrap();
            let g = render(28, 28, &c, StampKind::Dot3, false).unwrap();
            let (top, bottom, left, right) = bbox(&g);
            let (above, below) = (top, 27 - bottom);
            let (before, after) = (left, 27 - right);
            prop_assert!(below == above || below == above + 1);
            prop_assert!(after == before || after == before + 1);
        }
    }
}
