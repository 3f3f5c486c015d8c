//! Raster and label-map IO. Formats are selected by file extension:
//! PNG (8/16-bit) and PGM/PPM for images; 16-bit (or 8-bit) single-channel
//! PNG and CSV grids for label maps.

use std::fs;
use std::io::{BufReader, ErrorKind};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use superpatch_core::{ImageGrid, LabelMap};

use crate::error::{require_exists, CliError, CliResult};

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

fn raster_format(path: &Path) -> CliResult<ImageFormat> {
    match extension(path).as_str() {
        "png" => Ok(ImageFormat::Png),
        "pgm" | "ppm" | "pnm" | "pbm" => Ok(ImageFormat::Pnm),
        other => Err(CliError::format(path, format!("unsupported raster extension {other:?}"))),
    }
}

fn decode(path: &Path) -> CliResult<DynamicImage> {
    let format = raster_format(path)?;
    require_exists(path)?;
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    image::load(BufReader::new(file), format).map_err(|e| match e {
        image::ImageError::IoError(io) => CliError::io(path, io),
        image::ImageError::Unsupported(u) => CliError::format(path, u.to_string()),
        // truncated or corrupt streams surface as decoding errors
        other => CliError::io(path, std::io::Error::new(ErrorKind::InvalidData, other.to_string())),
    })
}

/// Loads a raster with values scaled to `[0, 1]`. Gray stays 1 channel,
/// color stays 3; alpha channels are dropped.
pub fn load_image(path: &Path) -> CliResult<ImageGrid> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match &img {
        DynamicImage::ImageLuma8(b) => (1, b.as_raw().iter().map(|&v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLumaA8(_) => {
            let b = img.to_luma8();
            (1, b.as_raw().iter().map(|&v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(b) => (1, b.as_raw().iter().map(|&v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageLumaA16(_) => {
            let b = img.to_luma16();
            (1, b.as_raw().iter().map(|&v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            let b = img.to_rgb16();
            (3, b.as_raw().iter().map(|&v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => {
            let b = img.to_rgb32f();
            (3, b.as_raw().iter().map(|&v| (v as f64).clamp(0.0, 1.0)).collect())
        }
        _ => {
            let b = img.to_rgb8();
            (3, b.as_raw().iter().map(|&v| v as f64 / 255.0).collect())
        }
    };
    Ok(ImageGrid::new(w, h, channels, data)?)
}

/// Loads aligned single- or multi-channel files into one stacked grid.
pub fn load_stack(paths: &[impl AsRef<Path>]) -> CliResult<ImageGrid> {
    let planes = paths
        .iter()
        .map(|p| load_image(p.as_ref()))
        .collect::<CliResult<Vec<_>>>()?;
    if planes.len() == 1 {
        return Ok(planes.into_iter().next().expect("one plane"));
    }
    Ok(ImageGrid::stack(&planes)?)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn to_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn save_dynamic(img: DynamicImage, path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    img.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => CliError::io(path, io),
        other => CliError::format(path, other.to_string()),
    })
}

/// Writes 1- or 3-channel grids as PNG, 8-bit or 16-bit.
pub fn save_image(image: &ImageGrid, path: &Path, sixteen_bit: bool) -> CliResult<()> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let dynamic = match (image.channels(), sixteen_bit) {
        (1, false) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, image.data().iter().map(|&v| to_u8(v)).collect())
                .expect("buffer size"),
        ),
        (1, true) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, image.data().iter().map(|&v| to_u16(v)).collect())
                .expect("buffer size"),
        ),
        (3, false) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, image.data().iter().map(|&v| to_u8(v)).collect())
                .expect("buffer size"),
        ),
        (3, true) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, image.data().iter().map(|&v| to_u16(v)).collect())
                .expect("buffer size"),
        ),
        (c, _) => {
            return Err(CliError::Validation(format!("cannot write a {c}-channel image as PNG")));
        }
    };
    save_dynamic(dynamic, path)
}

/// Reads a label map from a single-channel PNG (8 or 16 bit) or a CSV grid.
/// Values are kept as stored.
pub fn load_labelmap(path: &Path) -> CliResult<LabelMap> {
    if extension(path) == "csv" {
        require_exists(path)?;
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        return parse_label_csv(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::format(path, m),
            other => other,
        });
    }
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u32> = match &img {
        DynamicImage::ImageLuma8(b) => b.as_raw().iter().map(|&v| v as u32).collect(),
        DynamicImage::ImageLuma16(b) => b.as_raw().iter().map(|&v| v as u32).collect(),
        _ => {
            return Err(CliError::format(path, "label maps must be single-channel PNG"));
        }
    };
    Ok(LabelMap::new(w, h, labels)?)
}

/// Parses comma-separated integer rows. Non-integers are rejected as a
/// format problem, negative values as a domain error.
pub fn parse_label_csv(text: &str) -> CliResult<LabelMap> {
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (row, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells = line
            .split(',')
            .map(|c| {
                c.trim().parse::<i64>().map_err(|_| {
                    CliError::Validation(format!("non-integer label {:?} on row {}", c.trim(), row + 1))
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(CliError::Validation(format!("row {} has {} values, expected {w}", row + 1, cells.len())));
            }
            _ => {}
        }
        values.extend(cells);
        height += 1;
    }
    let width = width.ok_or_else(|| CliError::Validation("empty label grid".into()))?;
    Ok(LabelMap::from_signed(width, height, &values)?)
}

pub fn label_csv(map: &LabelMap) -> String {
    let mut out = String::new();
    for row in map.labels().chunks(map.width()) {
        let cells: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes a label map as 16-bit PNG, or CSV when the extension is `.csv`.
pub fn save_labelmap(map: &LabelMap, path: &Path) -> CliResult<()> {
    if extension(path) == "csv" {
        return write_file(path, label_csv(map).as_bytes());
    }
    if let Some(&l) = map.labels().iter().find(|&&l| l > u16::MAX as u32) {
        return Err(CliError::Validation(format!("label {l} does not fit a 16-bit PNG")));
    }
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(
        map.width() as u32,
        map.height() as u32,
        map.labels().iter().map(|&l| l as u16).collect(),
    )
    .expect("buffer size");
    save_dynamic(DynamicImage::ImageLuma16(buf), path)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    require_exists(path)?;
    fs::read(path).map_err(|e| CliError::io(path, e))
}
