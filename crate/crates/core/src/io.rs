//! Image file input and output (PNG and binary PPM).

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, ImageReader, RgbImage};

use crate::color::BinaryMask;
use crate::frame::{Frame, SequenceError};

fn undecodable(path: &Path, err: impl std::fmt::Display) -> SequenceError {
    SequenceError::Undecodable {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

/// Reads only the image header.
pub fn read_dims(path: &Path) -> Result<(u32, u32), SequenceError> {
    ImageReader::open(path)
        .map_err(|source| SequenceError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|e| undecodable(path, e))?
        .into_dimensions()
        .map_err(|e| undecodable(path, e))
}

pub fn read_frame(path: &Path) -> Result<Frame, SequenceError> {
    let img = ImageReader::open(path)
        .map_err(|source| SequenceError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|e| undecodable(path, e))?
        .decode()
        .map_err(|e| undecodable(path, e))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Frame::from_rgb_bytes(w, h, img.as_raw()).map_err(|e| undecodable(path, e))
}

pub fn frame_to_image(frame: &Frame) -> RgbImage {
    RgbImage::from_raw(frame.width(), frame.height(), frame.to_rgb_bytes())
        .expect("frame buffer matches its dimensions")
}

pub fn encode_png(frame: &Frame) -> Result<Vec<u8>, image::ImageError> {
    let mut out = Cursor::new(Vec::new());
    frame_to_image(frame).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_png(frame: &Frame, path: &Path) -> Result<(), image::ImageError> {
    frame_to_image(frame).save_with_format(path, ImageFormat::Png)
}

pub fn write_ppm(frame: &Frame, path: &Path) -> Result<(), image::ImageError> {
    frame_to_image(frame).save_with_format(path, ImageFormat::Pnm)
}

pub fn write_mask_png(mask: &BinaryMask, path: &Path) -> Result<(), image::ImageError> {
    GrayImage::from_raw(mask.width(), mask.height(), mask.data().to_vec())
        .expect("mask buffer matches its dimensions")
        .save_with_format(path, ImageFormat::Png)
}

/// Reads a grayscale image as a binary mask; any non-zero value counts as white.
pub fn read_mask_png(path: &Path) -> Result<BinaryMask, SequenceError> {
    let img = ImageReader::open(path)
        .map_err(|source| SequenceError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|e| undecodable(path, e))?
        .decode()
        .map_err(|e| undecodable(path, e))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(BinaryMask::from_fn(w, h, |x, y| img.get_pixel(x, y)[0] != 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::load_sequence;

    fn gradient(w: u32, h: u32) -> Frame {
        Frame::from_fn(w, h, |x, y| [x as u8, y as u8, (x + y) as u8])
    }

    #[test]
    fn png_and_ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = gradient(5, 4);
        let png = dir.path().join("a.png");
        let ppm = dir.path().join("b.ppm");
        write_png(&f, &png).unwrap();
        write_ppm(&f, &ppm).unwrap();
        assert_eq!(read_frame(&png).unwrap(), f);
        assert_eq!(read_frame(&ppm).unwrap(), f);
        assert_eq!(read_dims(&ppm).unwrap(), (5, 4));
    }

    #[test]
    fn load_sequence_sorts_numerically() {
        let dir = tempfile::tempdir().unwrap();
        for i in [2usize, 0, 1] {
            let f = Frame::filled(640, 480, [i as u8, 0, 0]);
            write_png(&f, &dir.path().join(format!("frame_{i:06}.png"))).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let seq = load_sequence(dir.path()).unwrap();
        assert_eq!(seq.frame_count(), 3);
        assert_eq!(seq.dims(), (640, 480));
        for (i, f) in seq.iter().enumerate() {
            let f = f.unwrap();
            assert_eq!(f.index(), i);
            assert_eq!(f.at(0, 0)[0], i as u8);
        }
    }

    #[test]
    fn load_sequence_errors() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_sequence(&dir.path().join("missing")).unwrap_err();
        assert!(matches!(err, SequenceError::MissingDir(_)));

        let err = load_sequence(dir.path()).unwrap_err();
        assert!(err.to_string().contains("no frames found"));

        write_png(&Frame::new(640, 480), &dir.path().join("frame_000000.png")).unwrap();
        write_png(&Frame::new(320, 240), &dir.path().join("frame_000001.png")).unwrap();
        let err = load_sequence(dir.path()).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch at index 1"));

        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("frame_000000.png"), b"not an image").unwrap();
        let err = load_sequence(dir.path()).unwrap_err();
        assert!(matches!(err, SequenceError::Undecodable { .. }));

        let dir = tempfile::tempdir().unwrap();
        write_png(&Frame::new(4, 4), &dir.path().join("frame_000000.png")).unwrap();
        write_png(&Frame::new(4, 4), &dir.path().join("frame_000002.png")).unwrap();
        let err = load_sequence(dir.path()).unwrap_err();
        assert!(matches!(err, SequenceError::MissingIndex(1)));
    }
}
