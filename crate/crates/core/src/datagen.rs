//! Mini-sprites: a full factor grid of small binary glyph images.
//!
//! Factors, in enumeration order: shape, scale, x position, y position.
//! Every combination appears exactly once, so the factors are exactly
//! independent and uniform.
//!
//! On disk a dataset is a directory holding:
//!
//! * `header.json`: `{"spec": FactorSpec, "factor_cardinalities": [..], "count": N}`
//! * `images.bin`: `N · image_size²` bytes, one per pixel (0 or 1), images
//!   in dataset order, each image row-major (row = y, column = x)
//! * `factors.csv`: header `shape,scale,x,y`, then one row of factor indices
//!   per image

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::for_each_assignment;

/// Upper bound on the number of images in one grid.
pub const MAX_IMAGES: usize = 100_000;

pub const FACTOR_NAMES: [&str; 4] = ["shape", "scale", "x", "y"];

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("glyph does not fit: side {side} exceeds image size {image_size}")]
    GlyphDoesNotFit { side: usize, image_size: usize },
    #[error("image_size must be >= 8, got {0}")]
    ImageTooSmall(usize),
    #[error("every factor needs at least one level")]
    EmptyFactor,
    #[error("shape_count must be 1 or 2, got {0}")]
    UnknownShape(usize),
    #[error("dataset of {0} images exceeds the limit of {MAX_IMAGES}")]
    TooLarge(usize),
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DatagenError>;

/// Levels of each generative factor plus the canvas size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorSpec {
    pub shape_count: usize,
    pub scale_levels: usize,
    pub x_levels: usize,
    pub y_levels: usize,
    pub image_size: usize,
}

impl Default for FactorSpec {
    fn default() -> Self {
        Self {
            shape_count: 2,
            scale_levels: 3,
            x_levels: 8,
            y_levels: 8,
            image_size: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Glyph {
    Square,
    Plus,
}

impl FactorSpec {
    pub fn cardinalities(&self) -> Vec<usize> {
        vec![self.shape_count, self.scale_levels, self.x_levels, self.y_levels]
    }

    pub fn count(&self) -> usize {
        self.cardinalities().iter().product()
    }

    /// Side length of the glyph at a given scale level.
    pub fn glyph_side(scale: usize) -> usize {
        3 + 2 * scale
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(DatagenError::ImageTooSmall(self.image_size));
        }
        if self.cardinalities().contains(&0) {
            return Err(DatagenError::EmptyFactor);
        }
        if self.shape_count > 2 {
            return Err(DatagenError::UnknownShape(self.shape_count));
        }
        let count = self
            .cardinalities()
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .unwrap_or(usize::MAX);
        if count > MAX_IMAGES {
            return Err(DatagenError::TooLarge(count));
        }
        let side = Self::glyph_side(self.scale_levels - 1);
        if side > self.image_size {
            return Err(DatagenError::GlyphDoesNotFit {
                side,
                image_size: self.image_size,
            });
        }
        Ok(())
    }

    /// Top-left offset for position level `level` of `levels`.
    ///
    /// Positions are spread over the room left by the largest glyph, so
    /// small glyphs never clip; step is at least one pixel.
    fn offset(&self, level: usize, levels: usize) -> usize {
        if levels <= 1 {
            return 0;
        }
        let room = self.image_size - Self::glyph_side(self.scale_levels - 1);
        let step = (room / (levels - 1)).max(1);
        level * step
    }
}

fn render(spec: &FactorSpec, factors: &[usize], out: &mut [u8]) {
    let glyph = if factors[0] == 0 { Glyph::Square } else { Glyph::Plus };
    let side = FactorSpec::glyph_side(factors[1]);
    let ox = spec.offset(factors[2], spec.x_levels);
    let oy = spec.offset(factors[3], spec.y_levels);
    let size = spec.image_size;
    let mid = side / 2;
    for dy in 0..side {
        for dx in 0..side {
            let on = match glyph {
                Glyph::Square => true,
                Glyph::Plus => dx == mid || dy == mid,
            };
            let (x, y) = (ox + dx, oy + dy);
            if on && x < size && y < size {
                out[y * size + x] = 1;
            }
        }
    }
}

/// Binary images with their exact factor labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    spec: FactorSpec,
    images: Vec<u8>,
    factors: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: FactorSpec,
    factor_cardinalities: Vec<usize>,
    count: usize,
}

/// Enumerates the full factor grid in lexicographic order and renders it.
pub fn generate(spec: &FactorSpec) -> Result<ToyDataset> {
    spec.validate()?;
    let pixels = spec.image_size * spec.image_size;
    let mut images = vec![0u8; spec.count() * pixels];
    let mut factors = Vec::with_capacity(spec.count());
    for_each_assignment(&spec.cardinalities(), |a| factors.push(a.to_vec()));
    for (row, f) in factors.iter().enumerate() {
        render(spec, f, &mut images[row * pixels..(row + 1) * pixels]);
    }
    Ok(ToyDataset {
        spec: *spec,
        images,
        factors,
    })
}

impl ToyDataset {
    pub fn spec(&self) -> &FactorSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.spec.image_size * self.spec.image_size
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let p = self.pixels();
        &self.images[i * p..(i + 1) * p]
    }

    pub fn images(&self) -> &[u8] {
        &self.images
    }

    pub fn factors(&self) -> &[Vec<usize>] {
        &self.factors
    }

    pub fn factor_cardinalities(&self) -> Vec<usize> {
        self.spec.cardinalities()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = Header {
            spec: self.spec,
            factor_cardinalities: self.factor_cardinalities(),
            count: self.len(),
        };
        std::fs::write(dir.join("header.json"), serde_json::to_string_pretty(&header)?)?;
        std::fs::write(dir.join("images.bin"), &self.images)?;
        let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("factors.csv"))?);
        writeln!(csv, "{}", FACTOR_NAMES.join(","))?;
        for f in &self.factors {
            let cells: Vec<String> = f.iter().map(usize::to_string).collect();
            writeln!(csv, "{}", cells.join(","))?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: Header = serde_json::from_str(&std::fs::read_to_string(dir.join("header.json"))?)?;
        header.spec.validate()?;
        if header.count != header.spec.count() || header.factor_cardinalities != header.spec.cardinalities() {
            return Err(DatagenError::Format("header disagrees with spec".into()));
        }
        let images = std::fs::read(dir.join("images.bin"))?;
        let pixels = header.spec.image_size * header.spec.image_size;
        if images.len() != header.count * pixels {
            return Err(DatagenError::Format(format!(
                "images.bin has {} bytes, expected {}",
                images.len(),
                header.count * pixels
            )));
        }
        if images.iter().any(|&b| b > 1) {
            return Err(DatagenError::Format("pixels must be 0 or 1".into()));
        }
        let reader = BufReader::new(std::fs::File::open(dir.join("factors.csv"))?);
        let mut lines = reader.lines();
        let head = lines
            .next()
            .ok_or_else(|| DatagenError::Format("empty factors.csv".into()))??;
        if head.trim() != FACTOR_NAMES.join(",") {
            return Err(DatagenError::Format(format!("unexpected header `{head}`")));
        }
        let cards = header.spec.cardinalities();
        let mut factors = Vec::with_capacity(header.count);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| DatagenError::Format(e.to_string()))?;
            if row.len() != 4 || row.iter().zip(&cards).any(|(v, c)| v >= c) {
                return Err(DatagenError::Format(format!("bad factor row `{line}`")));
            }
            factors.push(row);
        }
        if factors.len() != header.count {
            return Err(DatagenError::Format("factor row count mismatch".into()));
        }
        Ok(Self {
            spec: header.spec,
            images,
            factors,
        })
    }
}
