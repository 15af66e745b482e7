use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use radarcam_core::metrics::{evaluate_ranges, MetricsReport};
use radarcam_core::quasidense::{build_stack, OracleConfidence};
use radarcam_core::refine::{compose, RefinerParams};
use radarcam_core::rng::RngKey;
use radarcam_core::synth::generate_frame;
use radarcam_core::MapKind;

use crate::config::{self, parse_caps, GaChoice, ResidualSource, RunConfig};
use crate::dataset::{create_dir, frame_name, load_frame, read_index, write_frame, write_index};
use crate::error::{exit, CliError, Result};
use crate::formats::{
    decode_checkpoint, encode_checkpoint, encode_ppm, read_map, read_text, storage_rounded, write_file, write_map,
};
use crate::pipeline::{estimate_const_params, ga_method, run_frame, train_parallel, FrameData, Stages};
use crate::render::{error_image, DEFAULT_MAX_ERROR};

#[derive(Parser, Debug)]
#[command(name = "radarcam", version, about = "Radar-camera metric depth pipeline on synthetic scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Overrides the seed of the spec or config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

/// Comma-separated range caps in meters, e.g. `50,70,80`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeCaps(pub Vec<f64>);

impl std::str::FromStr for RangeCaps {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_caps(s).map(RangeCaps)
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// const | var | ls | ransac | all
    #[arg(long)]
    pub ga: Option<GaChoice>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Comma-separated meters, e.g. 50,70,80.
    #[arg(long)]
    pub range_caps: Option<RangeCaps>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset from a scene spec.
    Gen {
        spec: PathBuf,
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the pipeline over a dataset.
    Run {
        config: PathBuf,
        frames: PathBuf,
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        common: Common,
    },
    /// Train the residual refiner.
    TrainSml {
        config: PathBuf,
        frames: PathBuf,
        checkpoint_out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        common: Common,
    },
    /// Metrics of a depth map against a reference map.
    Eval {
        map: PathBuf,
        reference: PathBuf,
        #[arg(long)]
        range_caps: Option<RangeCaps>,
        /// Also write the CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an absolute-error image (PPM).
    Render {
        map: PathBuf,
        gt: PathBuf,
        out_image: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_ERROR)]
        max_error: f64,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen { spec, out_dir, common } => pool(common.jobs)?.install(|| cmd_gen(&spec, &out_dir, &common)),
        Command::Run {
            config,
            frames,
            out_dir,
            overrides,
            common,
        } => pool(common.jobs)?.install(|| {
            let cfg = load_config(&config, &overrides, &common)?;
            cmd_run(&cfg, &frames, &out_dir)
        }),
        Command::TrainSml {
            config,
            frames,
            checkpoint_out,
            overrides,
            common,
        } => pool(common.jobs)?.install(|| {
            let cfg = load_config(&config, &overrides, &common)?;
            cmd_train_sml(&cfg, &frames, &checkpoint_out)
        }),
        Command::Eval {
            map,
            reference,
            range_caps,
            out,
        } => cmd_eval(&map, &reference, range_caps.as_ref().map(|c| c.0.as_slice()), out.as_deref()),
        Command::Render {
            map,
            gt,
            out_image,
            max_error,
        } => cmd_render(&map, &gt, &out_image, max_error),
    }
}

fn load_config(path: &Path, o: &Overrides, common: &Common) -> Result<RunConfig> {
    let mut cfg = config::load_run_config(path)?;
    if let Some(ga) = o.ga {
        cfg.ga = ga;
    }
    if let Some(tau) = o.tau {
        if !(0.0..=1.0).contains(&tau) {
            return Err(CliError::Usage("--tau must lie in [0, 1]".into()));
        }
        cfg.tau = tau;
    }
    if let Some(c) = &o.range_caps {
        cfg.range_caps = c.0.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    Ok(cfg)
}

pub fn cmd_gen(spec_path: &Path, out_dir: &Path, common: &Common) -> Result<()> {
    let mut scene = config::load_scene(spec_path)?;
    if let Some(s) = common.seed {
        scene.spec.seed = s;
    }
    create_dir(out_dir)?;
    let names: Vec<String> = (0..scene.frames).map(frame_name).collect();
    names.par_iter().enumerate().try_for_each(|(i, name)| {
        let spec = scene.frame_spec(i);
        let f = generate_frame(&spec)?;
        let patches = if scene.write_confidence {
            let provider = OracleConfidence { d_int: &f.d_int };
            let stack = build_stack(&f.radar, &spec.intrinsics, &provider, scene.patch_w, scene.patch_h)?;
            Some(stack.patches().to_vec())
        } else {
            None
        };
        write_frame(&out_dir.join(name), &spec.intrinsics, &f, patches.as_deref())
    })?;
    write_index(out_dir, &names)?;
    println!("wrote {} frames to {}", names.len(), out_dir.display());
    Ok(())
}

pub const METRICS_HEADER: &str = "frame,method,reference,range_cap,n_pixels,mae,rmse,imae,irmse,absrel,sqrel,delta1";

fn metrics_row(out: &mut String, frame: &str, method: &str, reference: &str, r: &MetricsReport) {
    writeln!(
        out,
        "{frame},{method},{reference},{},{},{},{},{},{},{},{},{}",
        r.range_cap, r.n_pixels, r.mae, r.rmse, r.imae, r.irmse, r.absrel, r.sqrel, r.delta1
    )
    .expect("String");
}

fn write_stages(dir: &Path, s: &Stages) -> Result<()> {
    create_dir(dir)?;
    write_map(&dir.join("d_ga.pfm"), &s.d_ga)?;
    write_map(&dir.join("z_ga.pfm"), &s.z_ga)?;
    write_map(&dir.join("dq.pfm"), &s.d_q)?;
    write_map(&dir.join("sq.pfm"), &s.s_q)?;
    write_map(&dir.join("r.pfm"), &s.r)?;
    write_map(&dir.join("dhat.pfm"), &s.d_hat)
}

fn load_frames(root: &Path) -> Result<(Vec<String>, Vec<Result<FrameData>>)> {
    let index = read_index(root)?;
    let frames = index.par_iter().map(|(_, dir)| load_frame(dir)).collect();
    Ok((index.into_iter().map(|(n, _)| n).collect(), frames))
}

fn load_refiner(cfg: &RunConfig) -> Result<Option<RefinerParams>> {
    match &cfg.residual {
        ResidualSource::Zero => Ok(None),
        ResidualSource::Checkpoint(p) => Ok(Some(decode_checkpoint(p, &read_text(p)?)?)),
    }
}

/// Median over the frames of one method's MAE at a cap.
fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn cmd_run(cfg: &RunConfig, frames_dir: &Path, out_dir: &Path) -> Result<()> {
    let (names, frames) = load_frames(frames_dir)?;
    let refiner = load_refiner(cfg)?;
    create_dir(out_dir)?;
    let methods = cfg.ga.methods();
    let ok_frames: Vec<FrameData> = frames.iter().filter_map(|f| f.as_ref().ok().cloned()).collect();
    let const_params = if methods.contains(&GaChoice::Const) {
        match cfg.const_scale {
            Some(s) => Some(radarcam_core::align::AlignmentParams::new(s, 0.0, cfg.space)?),
            None => Some(estimate_const_params(&ok_frames, cfg.space)?),
        }
    } else {
        None
    };
    let multi = methods.len() > 1;

    // (frame, method) → stages and metrics, in index order
    let results: Vec<Vec<Result<Vec<MetricsReport>>>> = names
        .par_iter()
        .zip(frames.par_iter())
        .enumerate()
        .map(|(i, (name, frame))| {
            methods
                .iter()
                .map(|&m| -> Result<Vec<MetricsReport>> {
                    let frame = frame.as_ref().map_err(|e| CliError::Usage(e.to_string()))?;
                    let method = ga_method(m, cfg, const_params)?;
                    let mut stages = run_frame(frame, &method, cfg, refiner.as_ref(), i as u64)?;
                    // the stored z_ga and r must recompose to the stored dhat
                    stages.z_ga = storage_rounded(&stages.z_ga)?;
                    stages.r = storage_rounded(&stages.r)?;
                    let c = compose(&stages.z_ga, &stages.r)?;
                    stages.d_hat = c.depth;
                    stages.clamped = c.clamped;
                    let dir = if multi {
                        out_dir.join(name).join(m.name())
                    } else {
                        out_dir.join(name)
                    };
                    write_stages(&dir, &stages)?;
                    let reference = frame
                        .reference(cfg.eval_ref)
                        .ok_or_else(|| CliError::Usage(format!("{name}: no {} map", cfg.eval_ref.name())))?;
                    Ok(evaluate_ranges(&stages.d_hat, reference, &cfg.range_caps)?)
                })
                .collect()
        })
        .collect();

    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    let mut failed = 0usize;
    let mut per_method: Vec<Vec<Vec<MetricsReport>>> = vec![Vec::new(); methods.len()];
    for (name, per_frame) in names.iter().zip(&results) {
        let mut frame_failed = false;
        for ((m, r), acc) in methods.iter().zip(per_frame).zip(per_method.iter_mut()) {
            match r {
                Ok(reports) => {
                    for rep in reports {
                        metrics_row(&mut csv, name, m.name(), cfg.eval_ref.name(), rep);
                    }
                    acc.push(reports.clone());
                }
                Err(e) => {
                    eprintln!("{name} [{}]: {e}", m.name());
                    frame_failed = true;
                }
            }
        }
        failed += frame_failed as usize;
    }
    write_file(&out_dir.join("metrics.csv"), csv.as_bytes())?;
    if multi {
        write_file(&out_dir.join("ga_ablation.csv"), ablation_csv(&methods, &per_method, &cfg.range_caps).as_bytes())?;
    }
    println!("processed {} frames, {failed} failed", names.len());
    if failed > 0 {
        return Err(CliError::Partial {
            failed,
            total: names.len(),
        });
    }
    Ok(())
}

pub const ABLATION_HEADER: &str =
    "method,range_cap,frames,mae,rmse,imae,irmse,absrel,sqrel,delta1,median_mae";

/// One row per (method, cap): metrics averaged over frames plus the median MAE.
fn ablation_csv(methods: &[GaChoice], per_method: &[Vec<Vec<MetricsReport>>], caps: &[f64]) -> String {
    let mut s = String::from(ABLATION_HEADER);
    s.push('\n');
    for (m, frames) in methods.iter().zip(per_method) {
        for (ci, cap) in caps.iter().enumerate() {
            let reps: Vec<&MetricsReport> = frames.iter().map(|f| &f[ci]).collect();
            let n = reps.len().max(1) as f64;
            let mean = |f: fn(&MetricsReport) -> f64| radarcam_core::sum::sum(reps.iter().map(|r| f(r))) / n;
            writeln!(
                s,
                "{},{cap},{},{},{},{},{},{},{},{},{}",
                m.name(),
                reps.len(),
                mean(|r| r.mae),
                mean(|r| r.rmse),
                mean(|r| r.imae),
                mean(|r| r.irmse),
                mean(|r| r.absrel),
                mean(|r| r.sqrel),
                mean(|r| r.delta1),
                median(reps.iter().map(|r| r.mae).collect()),
            )
            .expect("String");
        }
    }
    s
}

pub fn loss_csv_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut s = String::from("iteration,loss\n");
    for (i, l) in history.iter().enumerate() {
        writeln!(s, "{i},{l}").expect("String");
    }
    write_file(path, s.as_bytes())
}

pub fn cmd_train_sml(cfg: &RunConfig, frames_dir: &Path, checkpoint_out: &Path) -> Result<()> {
    if cfg.ga == GaChoice::All {
        return Err(CliError::Usage("train-sml needs a single GA method".into()));
    }
    let (names, frames) = load_frames(frames_dir)?;
    let frames: Vec<FrameData> = names
        .iter()
        .zip(frames)
        .map(|(n, f)| f.map_err(|e| CliError::Usage(format!("{n}: {e}"))))
        .collect::<Result<_>>()?;
    let const_params = if cfg.ga == GaChoice::Const {
        Some(match cfg.const_scale {
            Some(s) => radarcam_core::align::AlignmentParams::new(s, 0.0, cfg.space)?,
            None => estimate_const_params(&frames, cfg.space)?,
        })
    } else {
        None
    };
    let method = ga_method(cfg.ga, cfg, const_params)?;
    let batch = frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| Ok(run_frame(f, &method, cfg, None, i as u64)?.training_frame(f)))
        .collect::<Result<Vec<_>>>()?;
    let init = RefinerParams::init(RngKey::new(cfg.train.seed, 0), cfg.init_gain);
    let loss_path = loss_csv_path(checkpoint_out);
    match train_parallel(init, &batch, &cfg.train)? {
        Ok(t) => {
            write_file(checkpoint_out, encode_checkpoint(&t.params).as_bytes())?;
            write_history(&loss_path, &t.history)?;
            match t.history.first() {
                Some(&first) if first > 0.0 => println!(
                    "loss {first} -> {} (final/initial {})",
                    t.final_loss,
                    t.final_loss / first
                ),
                _ => println!("loss {}", t.final_loss),
            }
            Ok(())
        }
        Err(d) => {
            write_history(&loss_path, &d.history)?;
            Err(CliError::Diverged { iteration: d.iteration })
        }
    }
}

pub fn cmd_eval(map: &Path, reference: &Path, caps: Option<&[f64]>, out: Option<&Path>) -> Result<()> {
    let a = read_map(map, MapKind::Depth)?;
    let b = read_map(reference, MapKind::Depth)?;
    if a.shape() != b.shape() {
        return Err(CliError::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let caps = caps.unwrap_or(&radarcam_core::metrics::STANDARD_RANGE_CAPS);
    let reports = evaluate_ranges(&a, &b, caps)?;
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    let name = map.display().to_string();
    let reference = reference.display().to_string();
    for r in &reports {
        metrics_row(&mut csv, &name, "-", &reference, r);
    }
    print!("{csv}");
    if let Some(o) = out {
        write_file(o, csv.as_bytes())?;
    }
    Ok(())
}

pub fn cmd_render(map: &Path, gt: &Path, out: &Path, max_error: f64) -> Result<()> {
    let a = read_map(map, MapKind::Depth)?;
    let b = read_map(gt, MapKind::Depth)?;
    let img = error_image(&a, &b, max_error)?;
    write_file(out, &encode_ppm(a.width(), a.height(), &img))
}
