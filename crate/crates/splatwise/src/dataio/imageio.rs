//! RGB images as `[0, 1]` floats. PNG (8 or 16 bit) and binary PPM are read;
//! PNG is written at 16 bits per channel.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use splatwise_core::image::Image;

use crate::error::{DataError, Result};

pub fn load_image(path: &Path) -> Result<Image<f32>> {
    let is_ppm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
        return read_ppm(file, path);
    }
    let img = image::open(path).map_err(|e| DataError::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        image::DynamicImage::ImageRgb8(_) | image::DynamicImage::ImageRgba8(_) | image::DynamicImage::ImageLuma8(_) => {
            img.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
        }
        _ => img.to_rgb16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
    };
    Ok(Image::from_vec(w, h, data)?)
}

fn read_ppm<R: Read>(input: R, path: &Path) -> Result<Image<f32>> {
    let mut r = BufReader::new(input);
    let mut tokens = Vec::new();
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        if r.read_line(&mut line).map_err(|e| DataError::io(path, e))? == 0 {
            return Err(DataError::format(path, "truncated PPM header"));
        }
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(str::to_string));
    }
    if tokens[0] != "P6" {
        return Err(DataError::format(path, format!("unsupported PPM magic '{}'", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| DataError::format(path, format!("bad PPM header field '{s}'")));
    let (w, h, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(DataError::format(path, format!("bad PPM maxval {maxval}")));
    }
    let bytes = if maxval < 256 { 1 } else { 2 };
    let mut raw = vec![0u8; w * h * 3 * bytes];
    r.read_exact(&mut raw).map_err(|_| DataError::format(path, "truncated PPM data"))?;
    let scale = maxval as f32;
    let data = if bytes == 1 {
        raw.iter().map(|&v| v as f32 / scale).collect()
    } else {
        raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / scale).collect()
    };
    Ok(Image::from_vec(w, h, data)?)
}

fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

pub fn save_png16(path: &Path, img: &Image<f32>) -> Result<()> {
    let raw: Vec<u16> = img.data().iter().map(|&v| quantize16(v)).collect();
    let buf = image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer length matches dimensions");
    buf.save(path).map_err(|e| DataError::format(path, e.to_string()))
}

pub fn save_ppm8(path: &Path, img: &Image<f32>) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    std::fs::write(path, out).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_ppm_maps_to_exact_fractions() {
        let mut bytes = b"P6\n# comment\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 51, 255, 128, 1, 254]);
        let img = read_ppm(&bytes[..], Path::new("t.ppm")).unwrap();
        assert_eq!(img.data(), &[0.0, 51.0 / 255.0, 1.0, 128.0 / 255.0, 1.0 / 255.0, 254.0 / 255.0]);
    }

    #[test]
    fn sixteen_bit_ppm() {
        let mut bytes = b"P6 1 1 65535\n".to_vec();
        bytes.extend([0xff, 0xff, 0x00, 0x00, 0x80, 0x00]);
        let img = read_ppm(&bytes[..], Path::new("t.ppm")).unwrap();
        assert_eq!(img.pixel(0, 0), [1.0, 0.0, 32768.0 / 65535.0]);
    }

    #[test]
    fn rejects_ascii_ppm() {
        assert!(read_ppm(&b"P3 1 1 255\n0 0 0\n"[..], Path::new("t.ppm")).is_err());
    }
}
