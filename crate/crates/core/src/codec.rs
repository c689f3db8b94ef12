//! PNG codecs for masks and images.
//!
//! Masks are 8-bit grayscale, 0 background / 255 foreground; any nonzero
//! byte decodes as foreground. Decoding is strict about the container: a
//! mask PNG must really be 8-bit grayscale, not merely convertible to it.

use crate::image::Image;
use crate::mask::Mask;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("png decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("mask png must be grayscale, found {0:?}")]
    NotGrayscale(png::ColorType),
    #[error("mask png must be 8-bit, found {0:?}")]
    WrongBitDepth(png::BitDepth),
    #[error("image png must be 8-bit grayscale or rgb, found {color:?}/{depth:?}")]
    UnsupportedImage { color: png::ColorType, depth: png::BitDepth },
}

fn encode_png(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("png header");
        writer.write_image_data(data).expect("png body");
    }
    out
}

pub fn encode_mask_png(mask: &Mask) -> Vec<u8> {
    let mut data = vec![0u8; mask.area()];
    for (r, c) in mask.iter_ones() {
        data[r * mask.width() + c] = 255;
    }
    encode_png(mask.width(), mask.height(), png::ColorType::Grayscale, &data)
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<Mask, CodecError> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder.read_info()?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(CodecError::NotGrayscale(info.color_type));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(CodecError::WrongBitDepth(info.bit_depth));
    }
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf)?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    Ok(Mask::from_fn(w, h, |r, c| buf[r * w + c] != 0))
}

pub fn encode_image_png(image: &Image) -> Vec<u8> {
    let color = if image.channels() == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb };
    encode_png(image.width(), image.height(), color, image.data())
}

pub fn decode_image_png(bytes: &[u8]) -> Result<Image, CodecError> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder.read_info()?;
    let info = reader.info();
    let channels = match (info.color_type, info.bit_depth) {
        (png::ColorType::Grayscale, png::BitDepth::Eight) => 1,
        (png::ColorType::Rgb, png::BitDepth::Eight) => 3,
        (color, depth) => return Err(CodecError::UnsupportedImage { color, depth }),
    };
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf)?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    buf.truncate(w * h * channels);
    Ok(Image::from_raw(w, h, channels, buf).expect("decoded size consistent"))
}
