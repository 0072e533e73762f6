//! Lossless PNG encode/decode for frames, occlusion masks and attribute maps.

use std::cell::Cell;
use std::io::{BufRead, Cursor, Read, Seek, SeekFrom};
use std::rc::Rc;

use png::{BitDepth, ColorType, Transformations};

use super::{CodedImage, ImagingError, Result};

/// Header summary of a PNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PngInfo {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub channels: u8,
}

/// Tracks how far the decoder got so errors can name a byte offset.
struct CountingReader<R> {
    inner: R,
    position: Rc<Cell<u64>>,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.position.set(self.position.get() + n as u64);
        Ok(n)
    }
}

impl<R: BufRead> BufRead for CountingReader<R> {
    fn fill_buf(&mut self) -> std::io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt);
        self.position.set(self.position.get() + amt as u64);
    }
}

impl<R: Seek> Seek for CountingReader<R> {
    fn seek(&mut self, pos: SeekFrom) -> std::io::Result<u64> {
        let p = self.inner.seek(pos)?;
        self.position.set(p);
        Ok(p)
    }
}

struct Decoded {
    info: PngInfo,
    data: Vec<u8>,
}

fn decode(bytes: &[u8], header_only: bool) -> Result<Decoded> {
    let position = Rc::new(Cell::new(0u64));
    let reader = CountingReader {
        inner: Cursor::new(bytes),
        position: Rc::clone(&position),
    };
    let fail = |e: png::DecodingError| ImagingError::Decode {
        offset: position.get(),
        message: e.to_string(),
    };
    let mut decoder = png::Decoder::new(reader);
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(fail)?;
    let header = reader.info();
    let channels = match header.color_type {
        ColorType::Grayscale => 1,
        ColorType::Rgb => 3,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgba => 4,
        ColorType::Indexed => 1,
    };
    let info = PngInfo {
        width: header.width as usize,
        height: header.height as usize,
        bit_depth: header.bit_depth as u8,
        channels,
    };
    if header.color_type == ColorType::Indexed {
        return Err(ImagingError::Unsupported(
            "palette images are not supported".into(),
        ));
    }
    if header_only {
        return Ok(Decoded { info, data: vec![] });
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImagingError::Unsupported("image too large".into()))?;
    let mut data = vec![0u8; size];
    let frame = reader.next_frame(&mut data).map_err(fail)?;
    data.truncate(frame.buffer_size());
    Ok(Decoded { info, data })
}

/// Reads only the header; used to validate submissions without decoding.
pub fn png_info(bytes: &[u8]) -> Result<PngInfo> {
    decode(bytes, true).map(|d| d.info)
}

/// Decodes a lossless 8-bit RGB stream.
pub fn read_image(bytes: &[u8]) -> Result<CodedImage> {
    let Decoded { info, data } = decode(bytes, false)?;
    if info.bit_depth != 8 || info.channels != 3 {
        return Err(ImagingError::Unsupported(format!(
            "expected 8-bit RGB, found {}-bit with {} channel(s)",
            info.bit_depth, info.channels
        )));
    }
    CodedImage::from_vec(info.width, info.height, data)
}

fn encode(
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    data: &[u8],
) -> Result<Vec<u8>> {
    if width == 0 || height == 0 {
        return Err(ImagingError::Argument(format!(
            "cannot encode a {width}x{height} image"
        )));
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(depth);
        encoder.set_compression(png::Compression::Fast);
        let mut writer = encoder
            .write_header()
            .map_err(|e| ImagingError::Encode(e.to_string()))?;
        writer
            .write_image_data(data)
            .map_err(|e| ImagingError::Encode(e.to_string()))?;
        writer
            .finish()
            .map_err(|e| ImagingError::Encode(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_image(image: &CodedImage) -> Result<Vec<u8>> {
    encode(
        image.width(),
        image.height(),
        ColorType::Rgb,
        BitDepth::Eight,
        image.data(),
    )
}

pub fn write_gray8(width: usize, height: usize, data: &[u8]) -> Result<Vec<u8>> {
    if data.len() != width * height {
        return Err(ImagingError::Argument("gray8 buffer size mismatch".into()));
    }
    encode(width, height, ColorType::Grayscale, BitDepth::Eight, data)
}

pub fn read_gray8(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let Decoded { info, data } = decode(bytes, false)?;
    if info.bit_depth != 8 || info.channels != 1 {
        return Err(ImagingError::Unsupported(format!(
            "expected 8-bit grayscale, found {}-bit with {} channel(s)",
            info.bit_depth, info.channels
        )));
    }
    Ok((info.width, info.height, data))
}

pub fn write_gray16(width: usize, height: usize, data: &[u16]) -> Result<Vec<u8>> {
    if data.len() != width * height {
        return Err(ImagingError::Argument("gray16 buffer size mismatch".into()));
    }
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_be_bytes()).collect();
    encode(
        width,
        height,
        ColorType::Grayscale,
        BitDepth::Sixteen,
        &bytes,
    )
}

pub fn read_gray16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let Decoded { info, data } = decode(bytes, false)?;
    if info.bit_depth != 16 || info.channels != 1 {
        return Err(ImagingError::Unsupported(format!(
            "expected 16-bit grayscale, found {}-bit with {} channel(s)",
            info.bit_depth, info.channels
        )));
    }
    let values = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((info.width, info.height, values))
}
