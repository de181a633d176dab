//! Image, mask and probability-map files.
//!
//! Images and masks are PNG or TIFF. Probability maps use the PMAP binary
//! layout (all fields little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PMAP"
//! 4       4     version u32 = 1
//! 8       4     height u32
//! 12      4     width u32
//! 16      4*h*w float32 values, row-major
//! ```
//!
//! Every writer goes through a temporary file in the destination directory
//! followed by an atomic rename.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbMap, Raster};
use crate::scalar::Scalar;

pub const PMAP_MAGIC: &[u8; 4] = b"PMAP";
pub const PMAP_VERSION: u32 = 1;
const PMAP_HEADER_LEN: usize = 16;

fn open_image(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::read(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::read(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Tiff) => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                reason: format!("container {other:?} is not PNG or TIFF"),
            })
        }
    }
    reader.decode().map_err(|e| Error::UnsupportedFormat {
        path: path.into(),
        reason: e.to_string(),
    })
}

/// Loads an 8-bit PNG/TIFF as a 3-channel raster.
///
/// Grayscale is replicated to RGB and alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let img = open_image(path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let rgb = match img {
        DynamicImage::ImageLuma8(gray) => gray
            .into_raw()
            .into_iter()
            .flat_map(|v| [v, v, v])
            .collect(),
        DynamicImage::ImageRgb8(rgb) => rgb.into_raw(),
        DynamicImage::ImageRgba8(rgba) => rgba
            .into_raw()
            .chunks_exact(4)
            .flat_map(|px| [px[0], px[1], px[2]])
            .collect(),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                reason: format!("color type {:?}; need 8-bit with 1, 3 or 4 channels", other.color()),
            })
        }
    };
    Raster::new(width, height, 3, rgb)
}

/// Loads a single-channel 8-bit mask encoded as {0,1} or {0,255}.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = open_image(path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let DynamicImage::ImageLuma8(gray) = img else {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            reason: format!("mask color type {:?}; need 8-bit single channel", img.color()),
        });
    };
    let mut data = gray.into_raw();
    normalize_mask_values(&mut data).map_err(|value| Error::InvalidMaskValues {
        path: path.into(),
        value,
    })?;
    BinaryMask::new(width, height, data)
}

/// Maps a {0,255} encoding onto {0,1} in place. Returns the first offending
/// value when the samples fit neither encoding.
fn normalize_mask_values(data: &mut [u8]) -> std::result::Result<(), u8> {
    let mut seen = [false; 256];
    for &v in data.iter() {
        seen[v as usize] = true;
    }
    if let Some(bad) = (2..255).find(|&v| seen[v]) {
        return Err(bad as u8);
    }
    match (seen[1], seen[255]) {
        (true, true) => Err(255),
        (false, true) => {
            data.iter_mut().for_each(|v| *v = u8::from(*v == 255));
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Writes through a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn write_png(path: &Path, data: &[u8], width: usize, height: usize, color: ExtendedColorType) -> Result<()> {
    write_atomic(path, |w| {
        image::codecs::png::PngEncoder::new(w)
            .write_image(data, width as u32, height as u32, color)
            .map_err(std::io::Error::other)
    })
}

/// Saves an RGB raster as PNG.
pub fn save_image(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let color = match raster.channels() {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        4 => ExtendedColorType::Rgba8,
        n => {
            return Err(Error::InvalidDimensions {
                height: raster.height(),
                width: raster.width(),
                channels: n,
            })
        }
    };
    write_png(path.as_ref(), raster.data(), raster.width(), raster.height(), color)
}

/// Mask sample encoding on disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MaskEncoding {
    /// 0 / 1
    Unit,
    /// 0 / 255, viewable in ordinary image tools.
    #[default]
    Byte,
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>, encoding: MaskEncoding) -> Result<()> {
    let scale = match encoding {
        MaskEncoding::Unit => 1,
        MaskEncoding::Byte => 255,
    };
    let data: Vec<u8> = mask.data().iter().map(|&v| v * scale).collect();
    write_png(path.as_ref(), &data, mask.width(), mask.height(), ExtendedColorType::L8)
}

/// Serializes a probability map into PMAP bytes.
pub fn encode_prob_map<T: Scalar>(map: &ProbMap<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(PMAP_HEADER_LEN + 4 * map.data().len());
    out.extend_from_slice(PMAP_MAGIC);
    out.extend_from_slice(&PMAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    for v in map.data() {
        out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
    }
    out
}

/// Parses PMAP bytes. `origin` only labels errors.
pub fn decode_prob_map<T: Scalar>(bytes: &[u8], origin: &Path) -> Result<ProbMap<T>> {
    let bad = |reason: String| Error::BadProbMapFile {
        path: origin.into(),
        reason,
    };
    if bytes.len() < PMAP_HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != PMAP_MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[0..4])));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != PMAP_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let (height, width) = (word(8) as usize, word(12) as usize);
    let expected = PMAP_HEADER_LEN + 4 * height * width;
    if bytes.len() != expected {
        return Err(bad(format!(
            "{height}x{width} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[PMAP_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    ProbMap::new(width, height, data).map_err(|e| bad(e.to_string()))
}

/// Writes a probability map in PMAP format. Bit-exact for `f32` maps.
pub fn save_prob_map<T: Scalar>(map: &ProbMap<T>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_prob_map(map);
    write_atomic(path.as_ref(), |w| w.write_all(&bytes))
}

pub fn load_prob_map<T: Scalar>(path: impl AsRef<Path>) -> Result<ProbMap<T>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::read(path, e))?;
    decode_prob_map(&bytes, path)
}

/// Reads `(height, width)` from an image header without decoding pixels.
pub fn image_shape(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let (w, h) = ImageReader::open(path)
        .map_err(|e| Error::read(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::read(path, e))?
        .into_dimensions()
        .map_err(|e| Error::UnsupportedFormat {
            path: path.into(),
            reason: e.to_string(),
        })?;
    Ok((h as usize, w as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Luma, Rgb};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn rgb_png_round_trip() {
        let dir = tmp();
        let path = dir.path().join("a.png");
        let raster = Raster::from_fn(37, 19, |r, c| [r as u8, c as u8, (r * c) as u8]);
        save_image(&raster, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), raster);
    }

    #[test]
    fn grayscale_is_replicated() {
        let dir = tmp();
        let path = dir.path().join("g.png");
        ImageBuffer::<Luma<u8>, _>::from_fn(512, 512, |x, y| Luma([((x + y) % 251) as u8]))
            .save(&path)
            .unwrap();
        let r = load_image(&path).unwrap();
        assert_eq!((r.width(), r.height(), r.channels()), (512, 512, 3));
        assert!(r.data().chunks(3).all(|p| p[0] == p[1] && p[1] == p[2]));
    }

    #[test]
    fn rgba_drops_alpha() {
        let dir = tmp();
        let path = dir.path().join("a.png");
        image::RgbaImage::from_pixel(3, 2, image::Rgba([10, 20, 30, 128]))
            .save(&path)
            .unwrap();
        let r = load_image(&path).unwrap();
        assert_eq!(r.channels(), 3);
        assert_eq!(r.pixel(1, 2), &[10, 20, 30]);
    }

    #[test]
    fn sixteen_bit_tiff_is_unsupported() {
        let dir = tmp();
        let path = dir.path().join("deep.tiff");
        ImageBuffer::<Luma<u16>, _>::from_pixel(8, 8, Luma([4000u16]))
            .save(&path)
            .unwrap();
        assert!(matches!(load_image(&path), Err(Error::UnsupportedFormat { .. })));

        let path = dir.path().join("deep.png");
        ImageBuffer::<Rgb<u16>, _>::from_pixel(8, 8, Rgb([1u16, 2, 3]))
            .save(&path)
            .unwrap();
        assert!(matches!(load_image(&path), Err(Error::UnsupportedFormat { .. })));
    }

    #[test]
    fn eight_bit_tiff_loads() {
        let dir = tmp();
        let path = dir.path().join("ok.tif");
        image::RgbImage::from_pixel(5, 4, Rgb([1, 2, 3])).save(&path).unwrap();
        let r = load_image(&path).unwrap();
        assert_eq!(r.shape(), (4, 5));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_image("/nonexistent/nope.png"),
            Err(Error::FileNotFound(_))
        ));
    }

    #[test]
    fn mask_255_is_normalized() {
        let dir = tmp();
        let path = dir.path().join("m.png");
        ImageBuffer::<Luma<u8>, _>::from_fn(6, 4, |x, _| Luma([if x < 3 { 0 } else { 255 }]))
            .save(&path)
            .unwrap();
        let m = load_mask(&path).unwrap();
        assert_eq!(m.count_ones(), 12);
        assert!(m.data().iter().all(|&v| v <= 1));
    }

    #[test]
    fn all_zero_mask() {
        let dir = tmp();
        let path = dir.path().join("z.png");
        save_mask(&BinaryMask::zeros(9, 9), &path, MaskEncoding::Byte).unwrap();
        assert_eq!(load_mask(&path).unwrap(), BinaryMask::zeros(9, 9));
    }

    #[test]
    fn mask_with_seven_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("bad.png");
        ImageBuffer::<Luma<u8>, _>::from_fn(4, 4, |x, y| Luma([if x == y { 7 } else { 0 }]))
            .save(&path)
            .unwrap();
        assert!(matches!(
            load_mask(&path),
            Err(Error::InvalidMaskValues { value: 7, .. })
        ));
    }

    #[test]
    fn mixed_encodings_are_rejected() {
        let mut v = vec![0, 1, 255];
        assert_eq!(normalize_mask_values(&mut v), Err(255));
    }

    #[test]
    fn unit_encoded_mask_round_trip() {
        let dir = tmp();
        let path = dir.path().join("u.png");
        let m = BinaryMask::from_fn(7, 5, |r, c| (r + c) % 3 == 0);
        save_mask(&m, &path, MaskEncoding::Unit).unwrap();
        assert_eq!(load_mask(&path).unwrap(), m);
    }

    #[test]
    fn constant_prob_map_file_layout() {
        let dir = tmp();
        let path = dir.path().join("c.pmap");
        let map = ProbMap::filled(4, 4, 0.5f32).unwrap();
        save_prob_map(&map, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 16 * 4);
        assert_eq!(&bytes[0..4], b"PMAP");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert!(bytes[16..]
            .chunks(4)
            .all(|c| f32::from_le_bytes(c.try_into().unwrap()) == 0.5));
        assert_eq!(load_prob_map::<f32>(&path).unwrap(), map);
    }

    #[test]
    fn non_square_header_order() {
        let map = ProbMap::filled(3, 2, 0.25f32).unwrap();
        let bytes = encode_prob_map(&map);
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let map = ProbMap::filled(2, 2, 0.1f32).unwrap();
        assert!(matches!(
            save_prob_map(&map, "/nonexistent-dir/x.pmap"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn truncated_pmap_rejected() {
        let map = ProbMap::filled(4, 4, 0.5f32).unwrap();
        let bytes = encode_prob_map(&map);
        assert!(decode_prob_map::<f32>(&bytes[..bytes.len() - 1], Path::new("t")).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_prob_map::<f32>(&wrong, Path::new("t")).is_err());
    }
}
