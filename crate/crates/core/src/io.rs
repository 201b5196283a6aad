//! PNG reading and writing for planes, mattes and masks. 16-bit files keep
//! datasets close to lossless; 8-bit files are used for user-facing output.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{MatteError, Result};
use crate::matte::{AlphaMatte, ImagePlane, RegionMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

fn img_err(path: &Path) -> impl FnOnce(image::ImageError) -> MatteError + '_ {
    move |source| MatteError::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(img_err(path))
}

/// Loads any supported image as RGB in `[0, 1]`; grey images are replicated.
pub fn read_rgb(path: &Path) -> Result<ImagePlane> {
    let img = open(path)?.into_rgb16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = p.0[c] as f64 / 65535.0;
        }
    }
    ImagePlane::new(h, w, 3, data)
}

/// Loads a single-channel matte; colour inputs are reduced to luma.
pub fn read_matte(path: &Path) -> Result<AlphaMatte> {
    let img = open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    AlphaMatte::new(h, w, img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect())
}

/// Loads a mask; pixels above half intensity are set.
pub fn read_mask(path: &Path) -> Result<RegionMask> {
    let m = read_matte(path)?;
    Ok(RegionMask::from_predicate(&m, |v| v > 0.5))
}

fn quant8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quant16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn save(img: DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png).map_err(img_err(path))
}

pub fn rgb_to_dynamic(plane: &ImagePlane, depth: BitDepth) -> Result<DynamicImage> {
    if plane.channels() != 3 {
        return Err(MatteError::Shape("RGB output needs a 3-channel plane".into()));
    }
    let (h, w) = (plane.height() as u32, plane.width() as u32);
    let at = |x: u32, y: u32, c: usize| plane.get(c, y as usize, x as usize);
    Ok(match depth {
        BitDepth::Eight => DynamicImage::ImageRgb8(ImageBuffer::from_fn(w, h, |x, y| {
            Rgb([quant8(at(x, y, 0)), quant8(at(x, y, 1)), quant8(at(x, y, 2))])
        })),
        BitDepth::Sixteen => DynamicImage::ImageRgb16(ImageBuffer::from_fn(w, h, |x, y| {
            Rgb([quant16(at(x, y, 0)), quant16(at(x, y, 1)), quant16(at(x, y, 2))])
        })),
    })
}

pub fn matte_to_dynamic(matte: &AlphaMatte, depth: BitDepth) -> DynamicImage {
    let (h, w) = (matte.height() as u32, matte.width() as u32);
    let at = |x: u32, y: u32| matte.get(y as usize, x as usize);
    match depth {
        BitDepth::Eight => DynamicImage::ImageLuma8(ImageBuffer::from_fn(w, h, |x, y| Luma([quant8(at(x, y))]))),
        BitDepth::Sixteen => DynamicImage::ImageLuma16(ImageBuffer::from_fn(w, h, |x, y| Luma([quant16(at(x, y))]))),
    }
}

pub fn write_rgb(plane: &ImagePlane, path: &Path, depth: BitDepth) -> Result<()> {
    save(rgb_to_dynamic(plane, depth)?, path)
}

pub fn write_matte(matte: &AlphaMatte, path: &Path, depth: BitDepth) -> Result<()> {
    save(matte_to_dynamic(matte, depth), path)
}

/// Writes a mask as an 8-bit 0/255 image.
pub fn write_mask(mask: &RegionMask, path: &Path) -> Result<()> {
    write_matte(&mask.to_matte(), path, BitDepth::Eight)
}

/// JPEG encode and decode at `quality` in `1..=99`. Quality 100 is treated
/// as lossless mode and only quantizes to 8 bits.
pub fn jpeg_roundtrip(plane: &ImagePlane, quality: u8) -> Result<ImagePlane> {
    use image::codecs::jpeg::JpegEncoder;
    let rgb = rgb_to_dynamic(plane, BitDepth::Eight)?.into_rgb8();
    if quality >= 100 {
        return Ok(plane.map(|v| quant8(v) as f64 / 255.0));
    }
    let mut buf = Vec::new();
    let path = Path::new("<jpeg buffer>");
    JpegEncoder::new_with_quality(&mut buf, quality.clamp(1, 100))
        .encode_image(&rgb)
        .map_err(img_err(path))?;
    let dec = image::load_from_memory_with_format(&buf, ImageFormat::Jpeg)
        .map_err(img_err(path))?
        .into_rgb8();
    let (h, w) = (plane.height(), plane.width());
    let mut data = vec![0.0; 3 * h * w];
    for (i, p) in dec.pixels().enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = p.0[c] as f64 / 255.0;
        }
    }
    ImagePlane::new(h, w, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_round_trip_is_near_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = ImagePlane::from_rgb_fn(5, 7, |y, x| [y as f64 / 4.0, x as f64 / 6.0, 0.123456]);
        let path = dir.path().join("rgb.png");
        write_rgb(&p, &path, BitDepth::Sixteen).unwrap();
        let back = read_rgb(&path).unwrap();
        assert!(back.mean_abs_diff(&p).unwrap() < 1.0 / 65535.0);
        let a = AlphaMatte::from_fn(5, 7, |y, x| ((y * 7 + x) as f64 / 34.0).powi(2));
        let path = dir.path().join("a.png");
        write_matte(&a, &path, BitDepth::Sixteen).unwrap();
        let back = read_matte(&path).unwrap();
        for (u, v) in a.data().iter().zip(back.data()) {
            assert!((u - v).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn masks_and_eight_bit() {
        let dir = tempfile::tempdir().unwrap();
        let m = RegionMask::from_fn(6, 4, |y, x| (y + x) % 3 == 0);
        let path = dir.path().join("m.png");
        write_mask(&m, &path).unwrap();
        assert_eq!(read_mask(&path).unwrap(), m);
        let img = image::open(&path).unwrap();
        assert_eq!(img.color(), image::ColorType::L8);
        assert!(read_rgb(&dir.path().join("missing.png")).is_err());
    }

    #[test]
    fn jpeg_at_full_quality_is_close() {
        let p = ImagePlane::from_rgb_fn(16, 16, |y, x| [0.5, y as f64 / 15.0, x as f64 / 15.0]);
        let max_err = |q: &ImagePlane| {
            p.data()
                .iter()
                .zip(q.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        assert!(max_err(&jpeg_roundtrip(&p, 100).unwrap()) <= 0.5 / 255.0 + 1e-12);
        let lossy = jpeg_roundtrip(&p, 60).unwrap();
        assert!(max_err(&lossy) < 0.1);
        assert_ne!(lossy, p);
    }
}
