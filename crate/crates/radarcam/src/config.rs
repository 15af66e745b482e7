//! Flat `key = value` files for scene specs and run/training configs.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! errors. `wall` and `box` may repeat; every other key may appear once.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use radarcam_core::align::{AlignSpace, RansacConfig};
use radarcam_core::metrics::STANDARD_RANGE_CAPS;
use radarcam_core::quasidense::DEFAULT_TAU;
use radarcam_core::refine::{SmoothL1Form, TrainConfig};
use radarcam_core::synth::{OutlierMode, SceneSpec, Surface};
use radarcam_core::CameraIntrinsics;

use crate::error::{CliError, Result};
use crate::formats::read_text;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// 1-based.
    pub line: usize,
}

pub fn parse_entries(path: &Path, text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::parse(path, i + 1, format!("expected key = value, found {line:?}")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(CliError::parse(path, i + 1, "empty key"));
        }
        out.push(Entry {
            key: key.to_string(),
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

struct Ctx<'a> {
    path: &'a Path,
    seen: HashSet<String>,
}

impl<'a> Ctx<'a> {
    fn new(path: &'a Path) -> Self {
        Self {
            path,
            seen: HashSet::new(),
        }
    }

    fn err(&self, e: &Entry, msg: impl Into<String>) -> CliError {
        CliError::parse(self.path, e.line, msg)
    }

    fn once(&mut self, e: &Entry) -> Result<()> {
        if !self.seen.insert(e.key.clone()) {
            return Err(self.err(e, format!("duplicate key {:?}", e.key)));
        }
        Ok(())
    }

    fn num<T: FromStr>(&self, e: &Entry) -> Result<T> {
        e.value
            .parse()
            .map_err(|_| self.err(e, format!("{}: cannot parse {:?}", e.key, e.value)))
    }

    fn real(&self, e: &Entry) -> Result<f64> {
        let v: f64 = self.num(e)?;
        if !v.is_finite() {
            return Err(self.err(e, format!("{} must be finite", e.key)));
        }
        Ok(v)
    }

    fn flag(&self, e: &Entry) -> Result<bool> {
        match e.value.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.err(e, format!("{}: expected true or false", e.key))),
        }
    }

    /// Whitespace-separated reals; `inf` and `-inf` allowed.
    fn reals(&self, e: &Entry, n: usize) -> Result<Vec<f64>> {
        let v: Vec<f64> = e
            .value
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(e, format!("{}: bad number {t:?}", e.key))))
            .collect::<Result<_>>()?;
        if v.len() != n || v.iter().any(|x| x.is_nan()) {
            return Err(self.err(e, format!("{} takes {n} numbers", e.key)));
        }
        Ok(v)
    }
}

/// Contents of a scene spec file.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub spec: SceneSpec,
    pub frames: usize,
    /// Replace the surfaces with a seeded random layout per frame.
    pub random_layout: bool,
    /// Also write oracle confidence patches per frame.
    pub write_confidence: bool,
    pub patch_w: usize,
    pub patch_h: usize,
}

impl SceneFile {
    /// Scene for frame `i`.
    pub fn frame_spec(&self, i: usize) -> SceneSpec {
        if self.random_layout {
            radarcam_core::synth::random_scene(&self.spec, i as u64)
        } else {
            SceneSpec {
                frame: i as u64,
                ..self.spec.clone()
            }
        }
    }
}

pub fn parse_scene(path: &Path, text: &str) -> Result<SceneFile> {
    let entries = parse_entries(path, text)?;
    let mut c = Ctx::new(path);
    let mut spec = SceneSpec::basic(0);
    let mut file = SceneFile {
        spec: spec.clone(),
        frames: 1,
        random_layout: false,
        write_confidence: false,
        patch_w: DEFAULT_PATCH.0,
        patch_h: DEFAULT_PATCH.1,
    };
    let k0 = spec.intrinsics;
    let (mut fx, mut fy, mut cx, mut cy) = (None, None, None, None);
    let (mut width, mut height) = (k0.width, k0.height);
    let mut surfaces: Option<Vec<Surface>> = None;
    let mut scale_factor = 10.0;
    let mut scale_mode = false;
    for e in &entries {
        match e.key.as_str() {
            "wall" => {
                let v = c.reals(e, 5)?;
                surfaces.get_or_insert_with(Vec::new).push(Surface::Wall {
                    depth: v[0],
                    x: (v[1], v[2]),
                    y: (v[3], v[4]),
                });
                continue;
            }
            "box" => {
                let v = c.reals(e, 6)?;
                surfaces.get_or_insert_with(Vec::new).push(Surface::Cuboid {
                    min: [v[0], v[1], v[2]],
                    max: [v[3], v[4], v[5]],
                });
                continue;
            }
            _ => c.once(e)?,
        }
        match e.key.as_str() {
            "frames" => file.frames = c.num(e)?,
            "seed" => spec.seed = c.num(e)?,
            "width" => width = c.num(e)?,
            "height" => height = c.num(e)?,
            "fx" => fx = Some(c.real(e)?),
            "fy" => fy = Some(c.real(e)?),
            "cx" => cx = Some(c.real(e)?),
            "cy" => cy = Some(c.real(e)?),
            "ground_height" => {
                spec.ground_height = if e.value == "none" { None } else { Some(c.real(e)?) };
            }
            "max_depth" => spec.max_depth = c.real(e)?,
            "random_layout" => file.random_layout = c.flag(e)?,
            "write_confidence" => file.write_confidence = c.flag(e)?,
            "patch_w" => file.patch_w = c.num(e)?,
            "patch_h" => file.patch_h = c.num(e)?,
            "radar_count" => spec.radar.count = c.num(e)?,
            "radar_sigma" => spec.radar.sigma_r = c.real(e)?,
            "radar_jitter" => spec.radar.jitter_px = c.real(e)?,
            "radar_outliers" => spec.radar.outlier_fraction = c.real(e)?,
            "radar_outlier_mode" => {
                scale_mode = match e.value.as_str() {
                    "uniform" => false,
                    "scale" => true,
                    _ => return Err(c.err(e, "radar_outlier_mode: expected uniform or scale")),
                }
            }
            "radar_outlier_scale" => scale_factor = c.real(e)?,
            "radar_max_range" => spec.radar.max_range = c.real(e)?,
            "radar_row_bias" => spec.radar.row_bias = c.real(e)?,
            "lidar_stride" => spec.lidar.stride = c.num(e)?,
            "lidar_sweeps" => spec.lidar.sweeps = c.num(e)?,
            "lidar_sweep_step" => spec.lidar.sweep_step = c.real(e)?,
            "mono_a" => spec.mono.a = c.real(e)?,
            "mono_b" => spec.mono.b = c.real(e)?,
            "mono_gamma" => spec.mono.gamma = c.real(e)?,
            other => return Err(c.err(e, format!("unknown key {other:?}"))),
        }
    }
    if scale_mode {
        spec.radar.outlier_mode = OutlierMode::Scale(scale_factor);
    }
    // intrinsics default to the basic camera rescaled to the image size
    let sx = width as f64 / k0.width as f64;
    let sy = height as f64 / k0.height as f64;
    spec.intrinsics = CameraIntrinsics::new(
        fx.unwrap_or(k0.fx * sx),
        fy.unwrap_or(k0.fy * sy),
        cx.unwrap_or((width as f64 - 1.0) / 2.0),
        cy.unwrap_or((height as f64 - 1.0) / 2.0),
        width,
        height,
    )
    .map_err(|e| CliError::parse(path, 0, e.to_string()))?;
    if let Some(s) = surfaces {
        spec.surfaces = s;
    }
    spec.validate().map_err(|e| CliError::parse(path, 0, e.to_string()))?;
    file.spec = spec;
    Ok(file)
}

pub fn load_scene(path: &Path) -> Result<SceneFile> {
    parse_scene(path, &read_text(path)?)
}

/// Default confidence patch `(width, height)`: about a third of the default
/// 320×240 image along each axis.
pub const DEFAULT_PATCH: (usize, usize) = (96, 80);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaChoice {
    Const,
    Var,
    Ls,
    Ransac,
    /// Every method, one after the other.
    All,
}

impl GaChoice {
    pub const METHODS: [GaChoice; 4] = [GaChoice::Const, GaChoice::Var, GaChoice::Ls, GaChoice::Ransac];

    pub fn name(self) -> &'static str {
        match self {
            GaChoice::Const => "const",
            GaChoice::Var => "var",
            GaChoice::Ls => "ls",
            GaChoice::Ransac => "ransac",
            GaChoice::All => "all",
        }
    }

    /// Methods this choice runs.
    pub fn methods(self) -> Vec<GaChoice> {
        match self {
            GaChoice::All => Self::METHODS.to_vec(),
            m => vec![m],
        }
    }
}

impl FromStr for GaChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "const" => GaChoice::Const,
            "var" => GaChoice::Var,
            "ls" => GaChoice::Ls,
            "ransac" => GaChoice::Ransac,
            "all" => GaChoice::All,
            _ => return Err(format!("unknown GA method {s:?} (const|var|ls|ransac|all)")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceSource {
    Oracle,
    /// `confidence.txt` in each frame directory.
    Files,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResidualSource {
    Zero,
    Checkpoint(PathBuf),
}

/// Map the metrics are computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalRef {
    /// Rendered ground truth.
    Gt,
    /// Projected single-sweep LiDAR.
    Dgt,
    /// Interpolated LiDAR.
    Dint,
}

impl EvalRef {
    pub fn name(self) -> &'static str {
        match self {
            EvalRef::Gt => "gt",
            EvalRef::Dgt => "dgt",
            EvalRef::Dint => "dint",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ga: GaChoice,
    pub space: AlignSpace,
    pub tau: f64,
    pub confidence: ConfidenceSource,
    pub residual: ResidualSource,
    pub range_caps: Vec<f64>,
    pub eval_ref: EvalRef,
    pub patch_w: usize,
    pub patch_h: usize,
    pub ransac: RansacConfig,
    /// Dataset scale for `const`; estimated from the frames when absent.
    pub const_scale: Option<f64>,
    pub seed: u64,
    pub train: TrainConfig,
    /// Output-layer gain of the initial refiner.
    pub init_gain: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ga: GaChoice::Ls,
            space: AlignSpace::InverseDepth,
            tau: DEFAULT_TAU,
            confidence: ConfidenceSource::Oracle,
            residual: ResidualSource::Zero,
            range_caps: STANDARD_RANGE_CAPS.to_vec(),
            eval_ref: EvalRef::Gt,
            patch_w: DEFAULT_PATCH.0,
            patch_h: DEFAULT_PATCH.1,
            ransac: RansacConfig::default(),
            const_scale: None,
            seed: 0,
            train: TrainConfig::default(),
            init_gain: 0.01,
        }
    }
}

pub fn parse_caps(s: &str) -> std::result::Result<Vec<f64>, String> {
    let caps: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad range cap {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    if caps.is_empty() || caps.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err("range caps must be positive".into());
    }
    Ok(caps)
}

pub fn parse_run_config(path: &Path, text: &str) -> Result<RunConfig> {
    let entries = parse_entries(path, text)?;
    let mut c = Ctx::new(path);
    let mut cfg = RunConfig::default();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut checkpoint = None;
    let mut residual_checkpoint = false;
    for e in &entries {
        c.once(e)?;
        match e.key.as_str() {
            "ga" => cfg.ga = e.value.parse().map_err(|m: String| c.err(e, m))?,
            "space" => {
                cfg.space = match e.value.as_str() {
                    "inverse" => AlignSpace::InverseDepth,
                    "depth" => AlignSpace::Depth,
                    _ => return Err(c.err(e, "space: expected inverse or depth")),
                }
            }
            "tau" => {
                cfg.tau = c.real(e)?;
                if !(0.0..=1.0).contains(&cfg.tau) {
                    return Err(c.err(e, "tau must lie in [0, 1]"));
                }
            }
            "confidence" => {
                cfg.confidence = match e.value.as_str() {
                    "oracle" => ConfidenceSource::Oracle,
                    "files" => ConfidenceSource::Files,
                    _ => return Err(c.err(e, "confidence: expected oracle or files")),
                }
            }
            "residual" => {
                residual_checkpoint = match e.value.as_str() {
                    "zero" => false,
                    "checkpoint" => true,
                    _ => return Err(c.err(e, "residual: expected zero or checkpoint")),
                }
            }
            "checkpoint" => checkpoint = Some(base.join(&e.value)),
            "range_caps" => cfg.range_caps = parse_caps(&e.value).map_err(|m| c.err(e, m))?,
            "eval_ref" => {
                cfg.eval_ref = match e.value.as_str() {
                    "gt" => EvalRef::Gt,
                    "dgt" => EvalRef::Dgt,
                    "dint" => EvalRef::Dint,
                    _ => return Err(c.err(e, "eval_ref: expected gt, dgt or dint")),
                }
            }
            "patch_w" => cfg.patch_w = c.num(e)?,
            "patch_h" => cfg.patch_h = c.num(e)?,
            "ransac_refit" => cfg.ransac.refit = c.flag(e)?,
            "ransac_iterations" => cfg.ransac.max_iters = c.num(e)?,
            "const_scale" => {
                let s = c.real(e)?;
                if s <= 0.0 {
                    return Err(c.err(e, "const_scale must be positive"));
                }
                cfg.const_scale = Some(s);
            }
            "seed" => {
                cfg.seed = c.num(e)?;
                cfg.train.seed = cfg.seed;
            }
            "learning_rate" => cfg.train.learning_rate = c.real(e)?,
            "iterations" => cfg.train.iterations = c.num(e)?,
            "lambda_gt" => cfg.train.lambda_gt = c.real(e)?,
            "beta" => cfg.train.beta = c.real(e)?,
            "momentum" => cfg.train.momentum = c.real(e)?,
            "guarded" => cfg.train.guarded = c.flag(e)?,
            "loss_form" => {
                cfg.train.form = match e.value.as_str() {
                    "standard" => SmoothL1Form::Standard,
                    "swapped" => SmoothL1Form::Swapped,
                    _ => return Err(c.err(e, "loss_form: expected standard or swapped")),
                }
            }
            "init_gain" => cfg.init_gain = c.real(e)?,
            other => return Err(c.err(e, format!("unknown key {other:?}"))),
        }
    }
    if residual_checkpoint {
        let p = checkpoint.ok_or_else(|| CliError::parse(path, 0, "residual = checkpoint needs a checkpoint path"))?;
        cfg.residual = ResidualSource::Checkpoint(p);
    }
    cfg.train.validate().map_err(|e| CliError::parse(path, 0, e.to_string()))?;
    Ok(cfg)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    parse_run_config(path, &read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("cfg.txt")
    }

    fn line_of(r: Result<impl std::fmt::Debug>) -> usize {
        match r {
            Err(CliError::Parse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn entries_skip_comments() {
        let e = parse_entries(p(), "# c\n\n a = 1 \nb=x y\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].key.as_str(), e[0].value.as_str(), e[0].line), ("a", "1", 3));
        assert_eq!(e[1].value, "x y");
        assert_eq!(line_of(parse_entries(p(), "a = 1\noops\n")), 2);
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        assert_eq!(line_of(parse_run_config(p(), "ga = ls\ntua = 0.5\n")), 2);
        assert_eq!(line_of(parse_run_config(p(), "ga = ls\nga = var\n")), 2);
        assert_eq!(line_of(parse_scene(p(), "frames = 2\nradar_cnt = 5\n")), 2);
        assert_eq!(line_of(parse_run_config(p(), "ga = best\n")), 1);
    }

    #[test]
    fn run_config_values() {
        let cfg = parse_run_config(
            Path::new("/data/run.cfg"),
            "ga = all\ntau = 0.7\nrange_caps = 50, 80\nresidual = checkpoint\ncheckpoint = ck.txt\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.ga.methods().len(), 4);
        assert_eq!(cfg.tau, 0.7);
        assert_eq!(cfg.range_caps, vec![50.0, 80.0]);
        assert_eq!(cfg.residual, ResidualSource::Checkpoint(PathBuf::from("/data/ck.txt")));
        assert_eq!(cfg.train.seed, 9);
        assert!(parse_run_config(p(), "residual = checkpoint\n").is_err());
        assert!(parse_run_config(p(), "beta = 0\n").is_err());
    }

    #[test]
    fn scene_values() {
        let s = parse_scene(
            p(),
            "frames = 3\nwidth = 64\nheight = 48\nground_height = none\nwall = 10 -inf inf -inf inf\n\
             box = -1 -1 4 1 1 6\nradar_outlier_mode = scale\nradar_outliers = 0.3\n",
        )
        .unwrap();
        assert_eq!(s.frames, 3);
        assert_eq!(s.spec.intrinsics.width, 64);
        assert_eq!(s.spec.intrinsics.cx, 31.5);
        assert_eq!(s.spec.surfaces.len(), 2);
        assert_eq!(s.spec.ground_height, None);
        assert_eq!(s.spec.radar.outlier_mode, OutlierMode::Scale(10.0));
        assert_eq!(s.frame_spec(2).frame, 2);
        assert!(parse_scene(p(), "radar_outliers = 1.0\n").is_err());
        assert_eq!(line_of(parse_scene(p(), "wall = 1 2\n")), 1);
    }
}
