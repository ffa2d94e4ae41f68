//! Binary PGM/PPM export of label maps.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{LabelMap, IGNORE_LABEL};
use crate::grid::GridDims;

/// 256-entry colour table. Entry `i` spreads the bits of `i` over the three
/// channels, most significant first (the usual scene-labelling colour map);
/// entry 255 is black and reserved for ignored units.
pub fn palette() -> [[u8; 3]; 256] {
    let mut table = [[0u8; 3]; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        let mut c = i;
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        for j in 0..8 {
            r |= ((c & 1) as u8) << (7 - j);
            g |= (((c >> 1) & 1) as u8) << (7 - j);
            b |= (((c >> 2) & 1) as u8) << (7 - j);
            c >>= 3;
        }
        *entry = [r, g, b];
    }
    table[IGNORE_LABEL as usize] = [0, 0, 0];
    table
}

pub fn encode_pgm(labels: &LabelMap) -> Vec<u8> {
    let dims = labels.dims();
    let mut out = format!("P5\n{} {}\n255\n", dims.cols, dims.rows).into_bytes();
    out.extend_from_slice(labels.as_slice());
    out
}

pub fn encode_ppm(labels: &LabelMap, palette: &[[u8; 3]; 256]) -> Vec<u8> {
    let dims = labels.dims();
    let mut out = format!("P6\n{} {}\n255\n", dims.cols, dims.rows).into_bytes();
    for &l in labels.as_slice() {
        out.extend_from_slice(&palette[l as usize]);
    }
    out
}

pub fn export_label_map(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(labels)).map_err(|e| Error::io(path, e))
}

pub fn export_color_map(labels: &LabelMap, palette: &[[u8; 3]; 256], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(labels, palette)).map_err(|e| Error::io(path, e))
}

/// Reads a binary PGM with maxval 255, as written by [`export_label_map`].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|reason| Error::format(path, reason))
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<LabelMap, String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "P5" {
        return Err(format!("expected P5, found {}", fields[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header number `{s}`"));
    let (cols, rows, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(format!("maxval {maxval} is not 255"));
    }
    let dims = GridDims::new(rows, cols).map_err(|e| e.to_string())?;
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != dims.len() {
        return Err(format!("raster has {} bytes, expected {}", raster.len(), dims.len()));
    }
    LabelMap::new(dims, raster.to_vec()).map_err(|e| e.to_string())
}
