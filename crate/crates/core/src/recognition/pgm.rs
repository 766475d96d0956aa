//! Binary PGM (P5, maxval 255) frames.

use std::io::Cursor;

use image::codecs::pnm::{PnmDecoder, PnmSubtype, SampleEncoding};
use image::ImageDecoder;

use super::{GrayImage, RecognitionError};

fn pgm_err(e: impl std::fmt::Display) -> RecognitionError {
    RecognitionError::Pgm(e.to_string())
}

pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, RecognitionError> {
    let decoder = PnmDecoder::new(Cursor::new(bytes)).map_err(pgm_err)?;
    let header = decoder.header();
    if header.subtype() != PnmSubtype::Graymap(SampleEncoding::Binary) {
        return Err(pgm_err("expected a binary graymap (P5)"));
    }
    if header.maximal_sample() != 255 {
        return Err(pgm_err(format!(
            "expected maxval 255, got {}",
            header.maximal_sample()
        )));
    }
    let (width, height) = decoder.dimensions();
    let mut pixels = vec![0u8; decoder.total_bytes() as usize];
    decoder.read_image(&mut pixels).map_err(pgm_err)?;
    GrayImage::new(width, height, pixels)
}

/// Encodes as `P5\n<w> <h>\n255\n` followed by the raw raster.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let img = GrayImage::new(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        let bytes = write_pgm(&img);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], img.pixels());
        assert_eq!(read_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn reads_header_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([7, 9]);
        let img = read_pgm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[7, 9]);
    }

    #[test]
    fn rejects_other_formats() {
        assert!(read_pgm(b"P2\n1 1\n255\n0\n").is_err());
        assert!(read_pgm(b"P5\n1 1\n15\n\x00").is_err());
        assert!(read_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(read_pgm(b"garbage").is_err());
    }
}
