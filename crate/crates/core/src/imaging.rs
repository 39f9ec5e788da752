//! Page image loading and cropping.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use crate::geometry::Rect;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read page image {path}: {source}")]
    Read {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("crop {rect:?} falls outside a {width}x{height} image")]
    OutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("png encoding failed: {0}")]
    Encode(#[from] image::ImageError),
}

/// Location of a page image inside an image directory.
pub fn page_image_path(images_dir: &Path, page_index: u32) -> PathBuf {
    images_dir.join(format!("page-{page_index}.png"))
}

pub fn load_page(images_dir: &Path, page_index: u32) -> Result<RgbImage, ImageError> {
    let path = page_image_path(images_dir, page_index);
    image::open(&path)
        .map(|img| img.to_rgb8())
        .map_err(|source| ImageError::Read { path, source })
}

pub fn crop(img: &RgbImage, rect: &Rect) -> Result<RgbImage, ImageError> {
    let fits = rect.x >= 0
        && rect.y >= 0
        && rect.w > 0
        && rect.h > 0
        && rect.right() <= img.width() as i64
        && rect.bottom() <= img.height() as i64;
    if !fits {
        return Err(ImageError::OutOfBounds { rect: *rect, width: img.width(), height: img.height() });
    }
    Ok(image::imageops::crop_imm(img, rect.x as u32, rect.y as u32, rect.w as u32, rect.h as u32).to_image())
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, ImageError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8())
}
