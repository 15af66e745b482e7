//! On-disk formats.
//!
//! * Float maps: grayscale PFM (`Pf`, little-endian, rows bottom to top) with
//!   a sibling binary PGM (`P5`) holding validity, 255 valid and 0 invalid.
//! * Point clouds: CSV with an `x,y,z[,attr…]` header, 9 significant digits.
//! * Poses: 16 reals, row-major, one line.
//! * Intrinsics: `fx fy cx cy width height`, one line.
//! * Refiner checkpoints: a shape header line, then one real per line.
//! * Confidence patches: `patch <index> <u0> <v0> <w> <h>` followed by `h`
//!   rows of `w` values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use radarcam_core::quasidense::{ConfidencePatch, PatchWindow};
use radarcam_core::refine::{RefinerParams, LAYER_SHAPES};
use radarcam_core::{Attribute, CameraIntrinsics, FloatMap, MapKind, Mask, PointCloud, Pose};

use crate::error::{CliError, Result};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// `name.pfm` → `name.pgm`
pub fn mask_path(pfm: &Path) -> PathBuf {
    pfm.with_extension("pgm")
}

/// Splits off `n` whitespace-separated header tokens of a netpbm-style file
/// and returns them with the remaining payload.
fn header_tokens<'a>(path: &Path, bytes: &'a [u8], n: usize) -> Result<(Vec<&'a str>, &'a [u8])> {
    let mut tokens = Vec::with_capacity(n);
    let mut i = 0;
    while tokens.len() < n {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(CliError::format(path, "truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..i]).map_err(|_| CliError::format(path, "non-ASCII header"))?;
        tokens.push(tok);
    }
    // exactly one whitespace byte separates the header from the payload
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(CliError::format(path, "missing payload"));
    }
    Ok((tokens, &bytes[i + 1..]))
}

fn parse_dim(path: &Path, s: &str) -> Result<usize> {
    s.parse()
        .ok()
        .filter(|&v: &usize| v > 0)
        .ok_or_else(|| CliError::format(path, format!("bad dimension {s:?}")))
}

pub fn encode_pfm(values: &[f32], width: usize, height: usize) -> Vec<u8> {
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    for y in (0..height).rev() {
        for &v in &values[y * width..(y + 1) * width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decodes a grayscale PFM of either endianness into top-to-bottom rows.
pub fn decode_pfm(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let (tok, payload) = header_tokens(path, bytes, 4)?;
    match tok[0] {
        "Pf" => {}
        "PF" => return Err(CliError::format(path, "color PFM is not supported")),
        other => return Err(CliError::format(path, format!("not a PFM file (magic {other:?})"))),
    }
    let (w, h) = (parse_dim(path, tok[1])?, parse_dim(path, tok[2])?);
    let scale: f64 = tok[3]
        .parse()
        .ok()
        .filter(|s: &f64| *s != 0.0 && s.is_finite())
        .ok_or_else(|| CliError::format(path, "bad scale"))?;
    if payload.len() != w * h * 4 {
        return Err(CliError::format(
            path,
            format!("expected {} payload bytes, found {}", w * h * 4, payload.len()),
        ));
    }
    let mut values = vec![0.0f32; w * h];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (k / w, k % w);
        values[(h - 1 - row) * w + col] = v;
    }
    Ok((w, h, values))
}

pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let (w, h) = mask.shape();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<Mask> {
    let (tok, payload) = header_tokens(path, bytes, 4)?;
    if tok[0] != "P5" {
        return Err(CliError::format(path, "not a binary PGM file"));
    }
    let (w, h) = (parse_dim(path, tok[1])?, parse_dim(path, tok[2])?);
    if tok[3] != "255" {
        return Err(CliError::format(path, "mask must use maxval 255"));
    }
    if payload.len() != w * h {
        return Err(CliError::format(path, "mask payload has the wrong size"));
    }
    Ok(Mask::new(w, h, payload.iter().map(|&b| b != 0).collect())?)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    write_file(path, &encode_pgm(mask))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    decode_pgm(path, &read_bytes(path)?)
}

/// `map` with every value rounded to what [`write_map`] stores.
pub fn storage_rounded(map: &FloatMap) -> Result<FloatMap> {
    let values = map.values().iter().map(|&v| v as f32 as f64).collect();
    Ok(FloatMap::new(map.kind(), map.width(), map.height(), values, map.validity().to_vec())?)
}

/// Writes `map` as 32-bit PFM plus its validity mask next to it.
pub fn write_map(path: &Path, map: &FloatMap) -> Result<()> {
    let values: Vec<f32> = map.values().iter().map(|&v| v as f32).collect();
    write_file(path, &encode_pfm(&values, map.width(), map.height()))?;
    write_mask(&mask_path(path), &map.validity_mask())
}

/// Reads a map written by [`write_map`]. Without a sibling mask, pixels whose
/// value `kind` admits are valid, so 0 marks missing depth.
pub fn read_map(path: &Path, kind: MapKind) -> Result<FloatMap> {
    let (w, h, values) = decode_pfm(path, &read_bytes(path)?)?;
    let mp = mask_path(path);
    let valid: Vec<bool> = if mp.exists() {
        let mask = read_mask(&mp)?;
        if mask.shape() != (w, h) {
            return Err(CliError::format(&mp, "mask shape differs from its map"));
        }
        mask.bits().iter().zip(&values).map(|(&b, v)| b && v.is_finite()).collect()
    } else {
        values.iter().map(|&v| kind.admits(v as f64)).collect()
    };
    let values = values
        .iter()
        .zip(&valid)
        .map(|(&v, &ok)| if ok { v as f64 } else { 0.0 })
        .collect();
    FloatMap::new(kind, w, h, values, valid).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for px in rgb {
        out.extend_from_slice(px);
    }
    out
}

pub fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let (tok, payload) = header_tokens(path, bytes, 4)?;
    if tok[0] != "P6" || tok[3] != "255" {
        return Err(CliError::format(path, "not an 8-bit binary PPM file"));
    }
    let (w, h) = (parse_dim(path, tok[1])?, parse_dim(path, tok[2])?);
    if payload.len() != w * h * 3 {
        return Err(CliError::format(path, "pixmap payload has the wrong size"));
    }
    Ok((w, h, payload.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}

/// 9 significant digits in scientific notation.
pub fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn encode_cloud(cloud: &PointCloud) -> String {
    let mut s = String::from("x,y,z");
    for a in cloud.attributes() {
        s.push(',');
        s.push_str(&a.name);
    }
    s.push('\n');
    for (i, p) in cloud.points().iter().enumerate() {
        let mut fields: Vec<String> = p.iter().map(|&v| fmt_sig9(v)).collect();
        fields.extend(cloud.attributes().iter().map(|a| fmt_sig9(a.values[i])));
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

pub fn decode_cloud(path: &Path, text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| CliError::format(path, "empty file"))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names.len() < 3 || names[..3] != ["x", "y", "z"] {
        return Err(CliError::parse(path, 1, "header must start with x,y,z"));
    }
    let mut points = Vec::new();
    let mut attrs: Vec<Vec<f64>> = vec![Vec::new(); names.len() - 3];
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::parse(path, i + 1, e.to_string()))?;
        if vals.len() != names.len() {
            return Err(CliError::parse(
                path,
                i + 1,
                format!("expected {} fields, found {}", names.len(), vals.len()),
            ));
        }
        points.push([vals[0], vals[1], vals[2]]);
        for (a, v) in attrs.iter_mut().zip(&vals[3..]) {
            a.push(*v);
        }
    }
    let attributes = names[3..]
        .iter()
        .zip(attrs)
        .map(|(n, values)| Attribute {
            name: n.to_string(),
            values,
        })
        .collect();
    PointCloud::with_attributes(points, attributes).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_file(path, encode_cloud(cloud).as_bytes())
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    decode_cloud(path, &read_text(path)?)
}

/// Parses exactly `n` whitespace-separated reals from one line of text.
fn parse_reals(path: &Path, text: &str, n: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e: std::num::ParseFloatError| CliError::parse(path, 1, e.to_string()))?;
    if vals.len() != n || text.trim().lines().count() != 1 {
        return Err(CliError::parse(path, 1, format!("expected {n} values on one line")));
    }
    Ok(vals)
}

pub fn encode_pose(pose: &Pose) -> String {
    let m = pose.to_matrix();
    let fields: Vec<String> = m.iter().map(|v| v.to_string()).collect();
    fields.join(" ") + "\n"
}

pub fn decode_pose(path: &Path, text: &str) -> Result<Pose> {
    let v = parse_reals(path, text, 16)?;
    let m: [f64; 16] = v.try_into().expect("length checked");
    Pose::from_matrix(m).map_err(|e| CliError::parse(path, 1, e.to_string()))
}

pub fn encode_intrinsics(k: &CameraIntrinsics) -> String {
    format!("{} {} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height)
}

pub fn decode_intrinsics(path: &Path, text: &str) -> Result<CameraIntrinsics> {
    let v = parse_reals(path, text, 6)?;
    let dim = |x: f64| {
        (x >= 1.0 && x.fract() == 0.0)
            .then_some(x as usize)
            .ok_or_else(|| CliError::parse(path, 1, "image size must be a positive integer"))
    };
    CameraIntrinsics::new(v[0], v[1], v[2], v[3], dim(v[4])?, dim(v[5])?)
        .map_err(|e| CliError::parse(path, 1, e.to_string()))
}

fn shape_header() -> String {
    let shapes: Vec<String> = LAYER_SHAPES.iter().map(|(i, o)| format!("{o}x{i}x3x3")).collect();
    format!("refiner {} params={}", shapes.join(" "), RefinerParams::zeros().len())
}

/// Header line, then each parameter in declared layer order.
pub fn encode_checkpoint(params: &RefinerParams) -> String {
    let mut s = shape_header();
    s.push('\n');
    for v in params.iter() {
        writeln!(s, "{v}").expect("writing to a String");
    }
    s
}

pub fn decode_checkpoint(path: &Path, text: &str) -> Result<RefinerParams> {
    let mut lines = text.lines();
    if lines.next() != Some(shape_header().as_str()) {
        return Err(CliError::parse(path, 1, format!("expected header {:?}", shape_header())));
    }
    let values: Vec<f64> = lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse().map_err(|_| CliError::parse(path, i + 2, "not a real number")))
        .collect::<Result<_>>()?;
    RefinerParams::from_flat(&values).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn encode_patches(patches: &[ConfidencePatch]) -> String {
    let mut s = String::new();
    for p in patches {
        let w = p.window;
        writeln!(s, "patch {} {} {} {} {}", p.point_index, w.u0, w.v0, w.w, w.h).expect("String");
        for row in p.values().chunks(w.w) {
            let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&fields.join(" "));
            s.push('\n');
        }
    }
    s
}

pub fn decode_patches(path: &Path, text: &str) -> Result<Vec<ConfidencePatch>> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    while let Some((i, head)) = lines.next() {
        let tok: Vec<&str> = head.split_whitespace().collect();
        if tok.len() != 6 || tok[0] != "patch" {
            return Err(CliError::parse(path, i + 1, "expected `patch <index> <u0> <v0> <w> <h>`"));
        }
        let n: Vec<usize> = tok[1..]
            .iter()
            .map(|t| t.parse().map_err(|_| CliError::parse(path, i + 1, "bad integer")))
            .collect::<Result<_>>()?;
        let window = PatchWindow {
            u0: n[1],
            v0: n[2],
            w: n[3],
            h: n[4],
        };
        let mut conf = Vec::with_capacity(window.len());
        for _ in 0..window.h {
            let (j, row) = lines
                .next()
                .ok_or_else(|| CliError::parse(path, i + 1, "patch is truncated"))?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| CliError::parse(path, j + 1, "bad confidence")))
                .collect::<Result<_>>()?;
            if vals.len() != window.w {
                return Err(CliError::parse(path, j + 1, "row length differs from patch width"));
            }
            conf.extend(vals);
        }
        out.push(ConfidencePatch::new(n[0], window, conf).map_err(|e| CliError::parse(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}
