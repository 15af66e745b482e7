//! Per-frame pipeline: global alignment, quasi-dense assembly, scale map
//! and residual composition.

use rayon::prelude::*;

use radarcam_core::align::{
    align_frame, apply_alignment, build_correspondences, estimate_const, fit_var, AlignSpace, AlignmentParams,
    GlobalAlignment,
};
use radarcam_core::geometry::project_points;
use radarcam_core::map::invert_inverse_map;
use radarcam_core::quasidense::{
    assemble_quasi_dense, build_stack, compute_scale_map, ConfidencePatch, ConfidenceProvider, OracleConfidence,
    PatchWindow,
};
use radarcam_core::refine::{
    compose, reduce, refiner_forward, train_refiner_with, Diverged, RefinerParams, TrainConfig, Trained,
    TrainingFrame,
};
use radarcam_core::rng::RngKey;
use radarcam_core::synth::{SceneSpec, SynthFrame};
use radarcam_core::{CameraIntrinsics, Error, FloatMap, MapKind, Mask, PointCloud, Result};

use crate::config::{ConfidenceSource, EvalRef, GaChoice, RunConfig};

/// Inputs of one frame as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub intrinsics: CameraIntrinsics,
    pub gt: Option<FloatMap>,
    pub d_gt: FloatMap,
    pub d_int: FloatMap,
    /// Scaleless inverse depth.
    pub mono: FloatMap,
    pub radar: PointCloud,
    pub confidence: Option<Vec<ConfidencePatch>>,
}

impl FrameData {
    pub fn from_synth(spec: &SceneSpec, f: &SynthFrame) -> Self {
        Self {
            intrinsics: spec.intrinsics,
            gt: Some(f.gt.clone()),
            d_gt: f.d_gt.clone(),
            d_int: f.d_int.clone(),
            mono: f.mono.clone(),
            radar: f.radar.clone(),
            confidence: None,
        }
    }

    /// Mono prediction in the representation `space` aligns.
    pub fn prediction(&self, space: AlignSpace) -> Result<FloatMap> {
        match space {
            AlignSpace::InverseDepth => Ok(self.mono.clone()),
            AlignSpace::Depth => invert_inverse_map(&self.mono),
        }
    }

    pub fn reference(&self, r: EvalRef) -> Option<&FloatMap> {
        match r {
            EvalRef::Gt => self.gt.as_ref(),
            EvalRef::Dgt => Some(&self.d_gt),
            EvalRef::Dint => Some(&self.d_int),
        }
    }
}

/// Patches loaded from disk, looked up by point index. Points without a
/// stored patch get zero confidence.
pub struct StoredConfidence<'a> {
    patches: &'a [ConfidencePatch],
}

impl<'a> StoredConfidence<'a> {
    pub fn new(patches: &'a [ConfidencePatch]) -> Self {
        Self { patches }
    }
}

impl ConfidenceProvider for StoredConfidence<'_> {
    fn confidence(&self, point_index: usize, _point: [f64; 3], window: PatchWindow) -> Result<ConfidencePatch> {
        match self.patches.iter().find(|p| p.point_index == point_index) {
            Some(p) => Ok(p.clone()),
            None => ConfidencePatch::new(point_index, window, vec![0.0; window.len()]),
        }
    }
}

/// Every intermediate of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct Stages {
    pub params: AlignmentParams,
    pub d_ga: FloatMap,
    pub z_ga: FloatMap,
    pub d_q: FloatMap,
    pub s_q: FloatMap,
    pub inv_s_q_filled: FloatMap,
    pub r: FloatMap,
    pub d_hat: FloatMap,
    pub clamped: Mask,
}

impl Stages {
    pub fn training_frame(&self, frame: &FrameData) -> TrainingFrame {
        TrainingFrame {
            z_ga: self.z_ga.clone(),
            inv_s_q_filled: self.inv_s_q_filled.clone(),
            d_gt: frame.d_gt.clone(),
            d_int: frame.d_int.clone(),
        }
    }
}

/// Dataset-wide constant: the mean of per-frame scale-only fits.
pub fn estimate_const_params(frames: &[FrameData], space: AlignSpace) -> Result<AlignmentParams> {
    let scales: Vec<f64> = frames
        .par_iter()
        .map(|f| {
            let pred = f.prediction(space)?;
            let radar = project_points(&f.radar, &f.intrinsics);
            Ok(fit_var(&build_correspondences(&pred, &radar)?)?.scale)
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .filter_map(Result::ok)
        .collect();
    estimate_const(&scales, space)
}

pub fn ga_method(choice: GaChoice, cfg: &RunConfig, const_params: Option<AlignmentParams>) -> Result<GlobalAlignment> {
    Ok(match choice {
        GaChoice::Const => GlobalAlignment::Const(const_params.ok_or(Error::EmptyInput)?),
        GaChoice::Var => GlobalAlignment::Var,
        GaChoice::Ls => GlobalAlignment::Ls,
        GaChoice::Ransac => GlobalAlignment::Ransac(cfg.ransac),
        GaChoice::All => return Err(Error::InvalidValue("`all` is not a single method")),
    })
}

/// Quasi-dense depth from the configured confidence source.
pub fn quasi_dense(frame: &FrameData, cfg: &RunConfig) -> Result<FloatMap> {
    let k = &frame.intrinsics;
    let stack = match cfg.confidence {
        ConfidenceSource::Oracle => {
            let provider = OracleConfidence { d_int: &frame.d_int };
            build_stack(&frame.radar, k, &provider, cfg.patch_w, cfg.patch_h)?
        }
        ConfidenceSource::Files => {
            let patches = frame.confidence.as_deref().ok_or(Error::EmptyInput)?;
            build_stack(&frame.radar, k, &StoredConfidence::new(patches), cfg.patch_w, cfg.patch_h)?
        }
    };
    Ok(assemble_quasi_dense(&stack, cfg.tau))
}

/// GA → quasi-dense → scale map → residual → composition for one frame.
pub fn run_frame(
    frame: &FrameData,
    method: &GlobalAlignment,
    cfg: &RunConfig,
    refiner: Option<&RefinerParams>,
    frame_id: u64,
) -> Result<Stages> {
    let pred = frame.prediction(cfg.space)?;
    let radar = project_points(&frame.radar, &frame.intrinsics);
    let params = align_frame(&pred, &radar, method, RngKey::new(cfg.seed, frame_id))?;
    let aligned = apply_alignment(&pred, &params)?;
    let d_q = quasi_dense(frame, cfg)?;
    let maps = compute_scale_map(&d_q, &aligned.depth)?;
    let (w, h) = aligned.inverse.shape();
    let r = match refiner {
        Some(p) => refiner_forward(p, &aligned.inverse, &maps.inv_filled)?,
        None => FloatMap::constant(MapKind::Residual, w, h, 0.0)?,
    };
    let c = compose(&aligned.inverse, &r)?;
    Ok(Stages {
        params,
        d_ga: aligned.depth,
        z_ga: aligned.inverse,
        d_q,
        s_q: maps.scale,
        inv_s_q_filled: maps.inv_filled,
        r,
        d_hat: c.depth,
        clamped: c.clamped,
    })
}

/// Training with frames evaluated on the rayon pool; the gradient reduction
/// follows frame order, so results do not depend on the thread count.
pub fn train_parallel(
    init: RefinerParams,
    batch: &[TrainingFrame],
    cfg: &TrainConfig,
) -> Result<std::result::Result<Trained, Diverged>> {
    train_refiner_with(init, batch, cfg, |p| {
        let parts = batch
            .par_iter()
            .map(|f| f.loss_and_grad(p, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(reduce(parts))
    })
}
