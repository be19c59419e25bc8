//! Raster frames and frame sequences.
//!
//! A [`Frame`] stores an `H×W×3` 8-bit raster. Pixel access follows the
//! `(row, column, channel)` convention: `get_pixel(i, j)` returns the stored
//! triple at row `i`, column `j` exactly as it was copied in.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rgb = [u8; 3];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("pixel (row {row}, col {col}) out of bounds for {width}x{height} frame")]
    OutOfBounds {
        row: u32,
        col: u32,
        width: u32,
        height: u32,
    },
    #[error("buffer of {len} bytes does not hold a {width}x{height} RGB frame")]
    BufferLength { len: usize, width: u32, height: u32 },
    #[error("frame must have non-zero dimensions, got {width}x{height}")]
    Empty { width: u32, height: u32 },
}

/// An 8-bit RGB raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    index: usize,
    data: Vec<Rgb>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("index", &self.index)
            .finish_non_exhaustive()
    }
}

impl Frame {
    /// Black frame.
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        Self {
            width,
            height,
            index: 0,
            data: vec![color; width as usize * height as usize],
        }
    }

    /// Builds a frame by evaluating `f(x, y)` for every column `x` and row `y`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            index: 0,
            data,
        }
    }

    /// Copies an interleaved `RGBRGB...` buffer into a frame.
    pub fn from_rgb_bytes(width: u32, height: u32, bytes: &[u8]) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::Empty { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if bytes.len() != expected {
            return Err(FrameError::BufferLength {
                len: bytes.len(),
                width,
                height,
            });
        }
        let data = bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(Self {
            width,
            height,
            index: 0,
            data,
        })
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Zero-based position of the frame within its sequence.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.data
    }

    pub fn to_rgb_bytes(&self) -> Vec<u8> {
        self.data.iter().flatten().copied().collect()
    }

    /// Checked access by `(row, col)`.
    pub fn get_pixel(&self, row: u32, col: u32) -> Result<Rgb, FrameError> {
        self.check(row, col)?;
        Ok(self.data[row as usize * self.width as usize + col as usize])
    }

    pub fn set_pixel(&mut self, row: u32, col: u32, rgb: Rgb) -> Result<(), FrameError> {
        self.check(row, col)?;
        self.data[row as usize * self.width as usize + col as usize] = rgb;
        Ok(())
    }

    /// Unchecked-by-`Result` access by `(x, y)`; panics when out of range.
    #[inline]
    pub fn at(&self, x: u32, y: u32) -> Rgb {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: Rgb) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize] = rgb;
    }

    fn check(&self, row: u32, col: u32) -> Result<(), FrameError> {
        if row >= self.height || col >= self.width {
            return Err(FrameError::OutOfBounds {
                row,
                col,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("sequence directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),
    #[error("dimension mismatch at index {index}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        index: usize,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("cannot decode {path}: {message}")]
    Undecodable { path: PathBuf, message: String },
    #[error("frame index {0} is missing; indices must be contiguous from 0")]
    MissingIndex(usize),
    #[error("frame index {0} appears more than once")]
    DuplicateIndex(usize),
    #[error("frame index {index} out of range for sequence of {count} frames")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone)]
enum Source {
    Files(Vec<PathBuf>),
    Memory(Vec<Frame>),
}

/// An ordered run of equally sized frames.
///
/// File-backed sequences decode frames lazily; only headers are read at
/// load time to validate dimensions.
#[derive(Clone)]
pub struct FrameSequence {
    id: String,
    source_dir: Option<PathBuf>,
    dims: (u32, u32),
    source: Source,
}

impl fmt::Debug for FrameSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameSequence")
            .field("id", &self.id)
            .field("frame_count", &self.frame_count())
            .field("dims", &self.dims)
            .finish()
    }
}

/// Summary of a sequence, as listed by the service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceInfo {
    pub id: String,
    pub frame_count: usize,
    pub dims: (u32, u32),
}

impl FrameSequence {
    /// Wraps already-decoded frames; they are re-indexed from 0.
    pub fn from_frames(id: impl Into<String>, frames: Vec<Frame>) -> Result<Self, SequenceError> {
        let id = id.into();
        let first = frames
            .first()
            .ok_or_else(|| SequenceError::NoFrames(PathBuf::from(&id)))?;
        let dims = first.dims();
        let mut out = Vec::with_capacity(frames.len());
        for (index, frame) in frames.into_iter().enumerate() {
            if frame.dims() != dims {
                return Err(SequenceError::DimensionMismatch {
                    index,
                    expected: dims,
                    found: frame.dims(),
                });
            }
            out.push(frame.with_index(index));
        }
        Ok(Self {
            id,
            source_dir: None,
            dims,
            source: Source::Memory(out),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source_dir(&self) -> Option<&Path> {
        self.source_dir.as_deref()
    }

    /// `(width, height)` shared by every frame.
    pub fn dims(&self) -> (u32, u32) {
        self.dims
    }

    pub fn frame_count(&self) -> usize {
        match &self.source {
            Source::Files(p) => p.len(),
            Source::Memory(f) => f.len(),
        }
    }

    pub fn info(&self) -> SequenceInfo {
        SequenceInfo {
            id: self.id.clone(),
            frame_count: self.frame_count(),
            dims: self.dims,
        }
    }

    /// Path of the file backing frame `index`, for file-backed sequences.
    pub fn frame_path(&self, index: usize) -> Option<&Path> {
        match &self.source {
            Source::Files(p) => p.get(index).map(PathBuf::as_path),
            Source::Memory(_) => None,
        }
    }

    pub fn frame(&self, index: usize) -> Result<Frame, SequenceError> {
        let count = self.frame_count();
        match &self.source {
            Source::Memory(frames) => frames
                .get(index)
                .cloned()
                .ok_or(SequenceError::IndexOutOfRange { index, count }),
            Source::Files(paths) => {
                let path = paths
                    .get(index)
                    .ok_or(SequenceError::IndexOutOfRange { index, count })?;
                let frame = crate::io::read_frame(path)?.with_index(index);
                if frame.dims() != self.dims {
                    return Err(SequenceError::DimensionMismatch {
                        index,
                        expected: self.dims,
                        found: frame.dims(),
                    });
                }
                Ok(frame)
            }
        }
    }

    /// Frames in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = Result<Frame, SequenceError>> + '_ {
        (0..self.frame_count()).map(move |i| self.frame(i))
    }
}

/// Parses `frame_%06d.<png|ppm>` and returns the index.
pub fn parse_frame_name(name: &str) -> Option<usize> {
    let stem = name.strip_prefix("frame_")?;
    let (digits, ext) = stem.split_once('.')?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    match ext.to_ascii_lowercase().as_str() {
        "png" | "ppm" => digits.parse().ok(),
        _ => None,
    }
}

/// Scans `dir` for `frame_%06d.png` / `frame_%06d.ppm` files.
///
/// Frames are ordered by their numeric index regardless of directory
/// listing order. Indices must run contiguously from 0 and every frame must
/// share the dimensions of frame 0.
pub fn load_sequence(dir: &Path) -> Result<FrameSequence, SequenceError> {
    if !dir.is_dir() {
        return Err(SequenceError::MissingDir(dir.to_path_buf()));
    }
    let entries = std::fs::read_dir(dir).map_err(|source| SequenceError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut by_index = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|source| SequenceError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let name = entry.file_name();
        let Some(index) = name.to_str().and_then(parse_frame_name) else {
            continue;
        };
        if by_index.insert(index, entry.path()).is_some() {
            return Err(SequenceError::DuplicateIndex(index));
        }
    }
    if by_index.is_empty() {
        return Err(SequenceError::NoFrames(dir.to_path_buf()));
    }
    let mut paths = Vec::with_capacity(by_index.len());
    let mut dims = None;
    for (expected, (index, path)) in by_index.into_iter().enumerate() {
        if index != expected {
            return Err(SequenceError::MissingIndex(expected));
        }
        let found = crate::io::read_dims(&path)?;
        match dims {
            None => dims = Some(found),
            Some(d) if d != found => {
                return Err(SequenceError::DimensionMismatch {
                    index,
                    expected: d,
                    found,
                })
            }
            Some(_) => {}
        }
        paths.push(path);
    }
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("sequence")
        .to_string();
    Ok(FrameSequence {
        id,
        source_dir: Some(dir.to_path_buf()),
        dims: dims.expect("at least one frame"),
        source: Source::Files(paths),
    })
}
