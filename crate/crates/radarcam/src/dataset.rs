//! Frame directories written by `gen` and read by `run` and `train-sml`.
//!
//! ```text
//! <root>/index.txt          one frame directory name per line
//! <root>/<frame>/gt.pfm     rendered depth (+ gt.pgm validity)
//!                dgt.pfm    projected single-sweep LiDAR
//!                dint.pfm   interpolated multi-sweep LiDAR
//!                mono.pfm   scaleless inverse depth
//!                radar.csv  lidar.csv
//!                mask.pgm   pixels that hit a surface
//!                pose.txt   intrinsics.txt
//!                confidence.txt (optional)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use radarcam_core::quasidense::ConfidencePatch;
use radarcam_core::synth::SynthFrame;
use radarcam_core::{CameraIntrinsics, MapKind, Pose};

use crate::error::{CliError, Result};
use crate::formats::*;
use crate::pipeline::FrameData;

pub const INDEX: &str = "index.txt";

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:04}")
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn write_index(root: &Path, names: &[String]) -> Result<()> {
    let mut s = names.join("\n");
    s.push('\n');
    write_file(&root.join(INDEX), s.as_bytes())
}

/// Frame directories listed in `<root>/index.txt`, in order.
pub fn read_index(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let path = root.join(INDEX);
    let text = read_text(&path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let name = line.trim();
        if name.is_empty() {
            continue;
        }
        if name.contains(['/', '\\']) || name == ".." {
            return Err(CliError::parse(&path, i + 1, "frame names must be plain directory names"));
        }
        out.push((name.to_string(), root.join(name)));
    }
    if out.is_empty() {
        return Err(CliError::format(&path, "index lists no frames"));
    }
    Ok(out)
}

pub fn write_frame(
    dir: &Path,
    k: &CameraIntrinsics,
    f: &SynthFrame,
    confidence: Option<&[ConfidencePatch]>,
) -> Result<()> {
    create_dir(dir)?;
    write_map(&dir.join("gt.pfm"), &f.gt)?;
    write_map(&dir.join("dgt.pfm"), &f.d_gt)?;
    write_map(&dir.join("dint.pfm"), &f.d_int)?;
    write_map(&dir.join("mono.pfm"), &f.mono)?;
    write_cloud(&dir.join("radar.csv"), &f.radar)?;
    write_cloud(&dir.join("lidar.csv"), &f.lidar)?;
    write_mask(&dir.join("mask.pgm"), &f.gt.validity_mask())?;
    write_file(&dir.join("pose.txt"), encode_pose(&Pose::IDENTITY).as_bytes())?;
    write_file(&dir.join("intrinsics.txt"), encode_intrinsics(k).as_bytes())?;
    if let Some(p) = confidence {
        write_file(&dir.join("confidence.txt"), encode_patches(p).as_bytes())?;
    }
    Ok(())
}

pub fn load_frame(dir: &Path) -> Result<FrameData> {
    let kpath = dir.join("intrinsics.txt");
    let intrinsics = decode_intrinsics(&kpath, &read_text(&kpath)?)?;
    let gt_path = dir.join("gt.pfm");
    let gt = if gt_path.exists() {
        Some(read_map(&gt_path, MapKind::Depth)?)
    } else {
        None
    };
    let conf_path = dir.join("confidence.txt");
    let confidence = if conf_path.exists() {
        Some(decode_patches(&conf_path, &read_text(&conf_path)?)?)
    } else {
        None
    };
    let frame = FrameData {
        intrinsics,
        gt,
        d_gt: read_map(&dir.join("dgt.pfm"), MapKind::Depth)?,
        d_int: read_map(&dir.join("dint.pfm"), MapKind::Depth)?,
        mono: read_map(&dir.join("mono.pfm"), MapKind::InverseDepth)?,
        radar: read_cloud(&dir.join("radar.csv"))?,
        confidence,
    };
    let shape = (intrinsics.width, intrinsics.height);
    let maps = [Some(&frame.d_gt), Some(&frame.d_int), Some(&frame.mono), frame.gt.as_ref()];
    for m in maps.into_iter().flatten() {
        if m.shape() != shape {
            return Err(CliError::Shape(format!(
                "{}: map {:?} vs intrinsics {:?}",
                dir.display(),
                m.shape(),
                shape
            )));
        }
    }
    Ok(frame)
}
