//! 8-bit PNG reading and writing. Images are RGB, masks grayscale; no colour
//! management is applied.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use dualcam_core::{Mask, Raster};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: unsupported depth ({depth}-bit); only 8-bit PNG is accepted")]
    UnsupportedDepth { path: String, depth: u8 },
    #[error("{path}: unsupported interlaced PNG")]
    Interlaced { path: String },
    #[error("{path}: unsupported color type {color}; expected grayscale or RGB")]
    UnsupportedColor { path: String, color: String },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn shown(path: &Path) -> String {
    path.display().to_string()
}

/// Decodes PNG bytes. `origin` only labels errors.
pub fn decode_png(bytes: &[u8], origin: &str) -> Result<Raster, CodecError> {
    decode_from(Cursor::new(bytes), origin)
}

fn decode_from(reader: impl Read, origin: &str) -> Result<Raster, CodecError> {
    let format = |e: &dyn std::fmt::Display| CodecError::Format {
        path: origin.to_string(),
        message: e.to_string(),
    };
    let mut decoder = png::Decoder::new(reader);
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| format(&e))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(CodecError::UnsupportedDepth {
            path: origin.to_string(),
            depth: info.bit_depth as u8,
        });
    }
    if info.interlaced {
        return Err(CodecError::Interlaced {
            path: origin.to_string(),
        });
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(CodecError::UnsupportedColor {
                path: origin.to_string(),
                color: format!("{other:?}"),
            })
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(|e| format(&e))?;
    buf.truncate(frame.buffer_size());
    if frame.line_size != w * channels {
        return Err(format(&"unexpected row stride"));
    }
    Raster::from_interleaved_u8(w, h, channels, &buf).map_err(|e| format(&e))
}

pub fn load_png(path: &Path) -> Result<Raster, CodecError> {
    let file = File::open(path).map_err(|source| CodecError::Io {
        path: shown(path),
        source,
    })?;
    decode_from(BufReader::new(file), &shown(path))
}

/// Encodes a 1- or 3-channel raster; float rasters are quantized first.
pub fn encode_png(img: &Raster) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    encode_into(img, &mut out, "<memory>")?;
    Ok(out)
}

fn encode_into(img: &Raster, writer: impl Write, origin: &str) -> Result<(), CodecError> {
    let format = |e: &dyn std::fmt::Display| CodecError::Format {
        path: origin.to_string(),
        message: e.to_string(),
    };
    let color = match img.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        n => {
            return Err(CodecError::UnsupportedColor {
                path: origin.to_string(),
                color: format!("{n} channels"),
            })
        }
    };
    let mut enc = png::Encoder::new(writer, img.width() as u32, img.height() as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_compression(png::Compression::Default);
    let mut w = enc.write_header().map_err(|e| format(&e))?;
    w.write_image_data(&img.to_interleaved_u8()).map_err(|e| format(&e))?;
    w.finish().map_err(|e| format(&e))
}

pub fn save_png(img: &Raster, path: &Path) -> Result<(), CodecError> {
    let io = |source| CodecError::Io {
        path: shown(path),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let bytes = encode_png(img)?;
    let mut f = BufWriter::new(File::create(path).map_err(io)?);
    f.write_all(&bytes).map_err(io)?;
    f.flush().map_err(io)
}

pub fn load_mask(path: &Path) -> Result<Mask, CodecError> {
    let r = load_png(path)?;
    if r.channels() != 1 {
        return Err(CodecError::UnsupportedColor {
            path: shown(path),
            color: "RGB mask".into(),
        });
    }
    Mask::from_raster(&r).map_err(|e| CodecError::Format {
        path: shown(path),
        message: e.to_string(),
    })
}

pub fn save_mask(mask: &Mask, path: &Path) -> Result<(), CodecError> {
    save_png(&mask.to_raster(), path)
}
