//! Binary PPM (`P6`, maxval 255) images.

use std::path::Path;

use cylfield_core::Image;

use crate::error::{read_input, write_output, CliError, CliResult};

pub fn encode(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Image, String> {
    let mut pos = 0;
    let mut token = || -> Result<String, String> {
        // whitespace and '#' comments separate header tokens
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err("not a binary PPM (P6)".into());
    }
    let mut num = |what: &str| -> Result<usize, String> {
        token()?.parse().map_err(|_| format!("bad {what}"))
    };
    let width = num("width")?;
    let height = num("height")?;
    if num("maxval")? != 255 {
        return Err("only maxval 255 is supported".into());
    }
    // exactly one whitespace byte separates the header from the raster
    let raster = bytes.get(pos + 1..).ok_or("truncated raster")?;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or("image too large")?;
    if raster.len() != expected {
        return Err(format!(
            "raster has {} bytes, expected {expected}",
            raster.len()
        ));
    }
    Image::from_u8(width, height, raster).map_err(|e| e.to_string())
}

pub fn write(path: &Path, img: &Image) -> CliResult<()> {
    write_output(path, &encode(img))
}

pub fn read(path: &Path) -> CliResult<Image> {
    decode(&read_input(path)?).map_err(|reason| CliError::corrupt(path, reason))
}
