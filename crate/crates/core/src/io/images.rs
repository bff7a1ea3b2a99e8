//! PNG frame and mask directories.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use ndarray::{s, Array3, Array4, ArrayView3};

use super::sorted_files;
use crate::error::{Error, Result};
use crate::flow::{OcclusionMask, Video};

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn frame_values(img: &DynamicImage) -> Array3<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb16();
        Array3::from_shape_fn((3, h, w), |(c, y, x)| {
            f64::from(rgb.get_pixel(x as u32, y as u32)[c]) / 65535.0
        })
    } else {
        let gray = img.to_luma16();
        Array3::from_shape_fn((1, h, w), |(_, y, x)| {
            f64::from(gray.get_pixel(x as u32, y as u32)[0]) / 65535.0
        })
    }
}

/// Reads every PNG in `dir` in name order. Grayscale images give one
/// channel, colour images three; values are scaled to `[0, 1]`.
pub fn read_frames(dir: &Path) -> Result<Video> {
    let files = sorted_files(dir, "png")?;
    if files.is_empty() {
        return Err(Error::format(dir, "no PNG frames found"));
    }
    let frames = files
        .iter()
        .map(|p| open(p).map(|img| frame_values(&img)))
        .collect::<Result<Vec<_>>>()?;
    let dim = frames[0].dim();
    let mut video = Array4::zeros((frames.len(), dim.0, dim.1, dim.2));
    for (i, (frame, path)) in frames.iter().zip(&files).enumerate() {
        if frame.dim() != dim {
            return Err(Error::format(
                path,
                format!("frame shape {:?} differs from first frame {dim:?}", frame.dim()),
            ));
        }
        video.slice_mut(s![i, .., .., ..]).assign(frame);
    }
    Ok(video)
}

/// Reads mask PNGs in name order; any nonzero luminance marks an occlusion.
pub fn read_masks(dir: &Path) -> Result<OcclusionMask> {
    let files = sorted_files(dir, "png")?;
    if files.is_empty() {
        return Err(Error::format(dir, "no PNG masks found"));
    }
    let mut masks: Vec<Array3<bool>> = Vec::with_capacity(files.len());
    let mut dim = None;
    for path in &files {
        let gray = open(path)?.to_luma16();
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        if *dim.get_or_insert((h, w)) != (h, w) {
            return Err(Error::format(
                path,
                format!("mask size {h}×{w} differs from first mask"),
            ));
        }
        masks.push(Array3::from_shape_fn((1, h, w), |(_, y, x)| {
            gray.get_pixel(x as u32, y as u32)[0] != 0
        }));
    }
    let views: Vec<_> = masks.iter().map(|m| m.view()).collect();
    let stacked = ndarray::concatenate(ndarray::Axis(0), &views).expect("masks share a shape");
    Ok(OcclusionMask::new(stacked))
}

fn to_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn save(img: DynamicImage, path: &Path) -> Result<()> {
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    super::write_atomic(path, bytes.get_ref())
}

fn channels_image16(frame: ArrayView3<'_, f64>, path: &Path) -> Result<DynamicImage> {
    let (c, h, w) = frame.dim();
    let (w32, h32) = (w as u32, h as u32);
    match c {
        1 => Ok(DynamicImage::ImageLuma16(ImageBuffer::from_fn(w32, h32, |x, y| {
            Luma([to_u16(frame[[0, y as usize, x as usize]])])
        }))),
        3 => Ok(DynamicImage::ImageRgb16(ImageBuffer::from_fn(w32, h32, |x, y| {
            let p = |ch| to_u16(frame[[ch, y as usize, x as usize]]);
            Rgb([p(0), p(1), p(2)])
        }))),
        other => Err(Error::format(path, format!("cannot write {other}-channel image"))),
    }
}

/// Writes frames as 16-bit PNGs named `0000.png`, `0001.png`, ..., clamping
/// values to `[0, 1]`.
pub fn write_frames(dir: &Path, video: &Video) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for i in 0..video.dim().0 {
        let path = dir.join(format!("{i:04}.png"));
        let img = channels_image16(video.slice(s![i, .., .., ..]), &path)?;
        save(img, &path)?;
    }
    Ok(())
}

/// Writes one 8-bit PNG per mask slice (255 = occluded).
pub fn write_masks(dir: &Path, occ: &OcclusionMask) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (slices, h, w) = occ.dim();
    for i in 0..slices {
        let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Luma([if occ.is_occluded(i, y as usize, x as usize) {
                255u8
            } else {
                0
            }])
        });
        save(DynamicImage::ImageLuma8(img), &dir.join(format!("{i:04}.png")))?;
    }
    Ok(())
}

/// Writes a `C × H × W` image in `[0, 1]` as an 8-bit PNG.
pub fn write_image(path: &Path, image: &Array3<f64>) -> Result<()> {
    let (c, h, w) = image.dim();
    let (w32, h32) = (w as u32, h as u32);
    let img = match c {
        1 => DynamicImage::ImageLuma8(ImageBuffer::from_fn(w32, h32, |x, y| {
            Luma([to_u8(image[[0, y as usize, x as usize]])])
        })),
        3 => DynamicImage::ImageRgb8(ImageBuffer::from_fn(w32, h32, |x, y| {
            let p = |ch| to_u8(image[[ch, y as usize, x as usize]]);
            Rgb([p(0), p(1), p(2)])
        })),
        other => return Err(Error::format(path, format!("cannot write {other}-channel image"))),
    };
    save(img, path)
}
