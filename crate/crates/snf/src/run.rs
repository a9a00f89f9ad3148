//! The commands behind the `snf` binary, usable as a library.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use snf_core::codec::{decode_prefix, pack_with, Precision};
use snf_core::metrics::{self, MetricsReport, StageMetrics};
use snf_core::signal::{
    make_sinusoid_1d, partition_spatial_ordered, video_from_frames, video_prefix, Grid, SinusoidSpec,
};
use snf_core::train::{evaluate_stage, train_individual, train_progressive, train_slimmable, GrowthPlan, PlanStage};
use snf_core::{ActivationConfig, LossSpec, Matrix, RegionMask, RngState, SampledSignal, StreamableNet, TrainConfig};

use crate::config::{Growing, Mode, RunConfig, Task};
use crate::error::{Result, SnfError};
use crate::media::{load_image_grid, load_video_grid, moving_square, to_frames, to_image};

/// The full target signal described by `cfg`.
pub fn build_signal(cfg: &RunConfig) -> Result<SampledSignal> {
    match cfg.task {
        Task::Sinusoid => {
            let mut rng = RngState::new(cfg.seed);
            let mut spec = SinusoidSpec::standard(cfg.samples, &mut rng)?;
            spec.sampling = cfg.sampling;
            Ok(make_sinusoid_1d(&spec, &mut rng)?)
        }
        Task::Image => {
            let path = cfg.input.as_ref().ok_or_else(|| SnfError::Usage("image task needs `input`".into()))?;
            load_image_grid(path)
        }
        Task::Video => match &cfg.input {
            Some(dir) => load_video_grid(dir, 0..cfg.frames, Some(cfg.frames)),
            None => {
                let frames: Vec<Vec<u8>> =
                    moving_square(cfg.frame_size, cfg.frame_size, cfg.frames).into_iter().map(|f| f.pixels).collect();
                Ok(video_from_frames(cfg.frame_size, cfg.frame_size, 3, &frames, 0, cfg.frames)?)
            }
        },
    }
}

/// The signal and loss stage `k` (1-based) is trained and evaluated on.
pub fn stage_target(cfg: &RunConfig, signal: &SampledSignal, k: usize) -> Result<(SampledSignal, LossSpec)> {
    Ok(match cfg.growing {
        Growing::Spectral => (signal.clone(), LossSpec::full()),
        Growing::Spatial => {
            let mask = partition_spatial_ordered(signal, cfg.strips, k, cfg.strip_order)?;
            (signal.clone(), LossSpec::masked(mask))
        }
        Growing::Temporal => (video_prefix(signal, k * cfg.frames / cfg.stages())?, LossSpec::full()),
    })
}

fn region(loss: &LossSpec) -> Option<&RegionMask> {
    match loss {
        LossSpec::FullMse => None,
        LossSpec::MaskedMse(m) => Some(m),
    }
}

pub fn train_config(cfg: &RunConfig, epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: cfg.lr,
        epochs,
        seed: cfg.seed,
        log_every: cfg.log_every,
        batch_size: cfg.batch_size,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// The streamable net, or the widest baseline in individual mode.
    pub net: StreamableNet,
    /// Individual mode only: one net per configured width.
    pub baselines: Vec<StreamableNet>,
    pub report: MetricsReport,
}

/// Trains per `cfg` and evaluates every stage on its own extent.
pub fn fit(cfg: &RunConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    let signal = build_signal(cfg)?;
    let activation = ActivationConfig::new(cfg.omega0)?;
    let (in_dim, out_dim) = (signal.coords.cols(), signal.values.cols());
    let mut rng = RngState::new(cfg.seed);
    match cfg.mode {
        Mode::Progressive => {
            let mut targets = Vec::new();
            for k in 1..=cfg.stages() {
                targets.push(stage_target(cfg, &signal, k)?);
            }
            let plan = GrowthPlan {
                stages: cfg
                    .widths
                    .iter()
                    .zip(&cfg.epochs)
                    .zip(&targets)
                    .map(|((&width, &epochs), (_, loss))| PlanStage { width, epochs, loss: loss.clone() })
                    .collect(),
                init: cfg.init_mode,
            };
            let signals: Vec<SampledSignal> = targets.iter().map(|(s, _)| s.clone()).collect();
            let mut net = StreamableNet::new(in_dim, out_dim, cfg.depth, cfg.widths[0], activation, &mut rng)?;
            net.set_value_map(signal.value_map);
            let mut report = train_progressive(&mut net, &signals, &plan, &train_config(cfg, cfg.epochs[0]), &mut rng)?;
            report.stages = (1..=cfg.stages())
                .map(|k| {
                    let (s, loss) = &targets[k - 1];
                    evaluate_stage(&net, s, k, region(loss))
                })
                .collect::<Result<_, _>>()?;
            Ok(FitOutcome { net, baselines: Vec::new(), report })
        }
        Mode::Slimmable => {
            // same number of sub-network passes as the progressive schedule
            let epochs = cfg.epochs.iter().sum::<usize>().div_ceil(cfg.stages());
            let mut net = StreamableNet::with_stages(
                in_dim,
                out_dim,
                cfg.depth,
                &cfg.widths,
                activation,
                cfg.init_mode,
                &mut rng,
            )?;
            net.set_value_map(signal.value_map);
            let mut report = train_slimmable(&mut net, &signal, &LossSpec::full(), &train_config(cfg, epochs))?;
            report.stages =
                (1..=cfg.stages()).map(|k| evaluate_stage(&net, &signal, k, None)).collect::<Result<_, _>>()?;
            Ok(FitOutcome { net, baselines: Vec::new(), report })
        }
        Mode::Individual => {
            let mut report = MetricsReport::default();
            let mut baselines = Vec::new();
            for (i, (&width, &epochs)) in cfg.widths.iter().zip(&cfg.epochs).enumerate() {
                let (net, r) = train_individual(
                    width,
                    cfg.depth,
                    activation,
                    &signal,
                    &LossSpec::full(),
                    &train_config(cfg, epochs),
                )?;
                let mut m = evaluate_stage(&net, &signal, 1, None)?;
                m.stage = i + 1;
                report.stages.push(m);
                report.series.extend(r.series.into_iter().map(|row| metrics::LogRow { stage: i + 1, ..row }));
                baselines.push(net);
            }
            let net = baselines.last().expect("at least one width").clone();
            Ok(FitOutcome { net, baselines, report })
        }
    }
}

pub fn series_csv(report: &MetricsReport) -> String {
    let mut out = String::from("epoch,stage,loss,psnr\n");
    for r in &report.series {
        let _ = writeln!(out, "{},{},{:.9e},{:.4}", r.epoch, r.stage, r.loss, r.psnr);
    }
    out
}

pub fn stages_csv(stages: &[StageMetrics]) -> String {
    let mut out = String::from("stage,params,mse,psnr,ssim\n");
    for m in stages {
        let ssim = m.ssim.map(|s| format!("{s:.6}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{:.9e},{:.4},{}", m.stage, m.params, m.mse, metrics::capped(m.psnr), ssim);
    }
    out
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| SnfError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| SnfError::io(path, e))
}

/// Writes a prediction laid out on `grid`: a PPM/PGM for images, one per
/// frame under a directory for videos, and `x,target,prediction` CSV at the
/// signal's natural scale for 1D signals.
pub fn write_reconstruction(path: &Path, pred: &Matrix, signal: &SampledSignal) -> Result<()> {
    match signal.grid {
        Grid::Image { width, height, .. } => to_image(pred, width, height).write(&path.with_extension("ppm")),
        Grid::Video { .. } => {
            fs::create_dir_all(path).map_err(|e| SnfError::io(path, e))?;
            for (f, img) in to_frames(pred, signal.grid).iter().enumerate() {
                img.write(&path.join(format!("frame_{f:04}.ppm")))?;
            }
            Ok(())
        }
        Grid::Line { .. } => {
            let map = signal.value_map;
            let mut out = String::from("x,target,prediction\n");
            for i in 0..signal.len() {
                let x = (signal.coords[(i, 0)] + 1.0) / 2.0;
                let _ = writeln!(out, "{x:.9},{:.9},{:.9}", map.apply(signal.values[(i, 0)]), map.apply(pred[(i, 0)]));
            }
            write(&path.with_extension("csv"), out)
        }
    }
}

/// Runs `fit` and writes `model.snf`, `metrics.csv`, `report.csv` and one
/// reconstruction per stage into `cfg.output`.
pub fn fit_to_dir(cfg: &RunConfig) -> Result<FitOutcome> {
    let outcome = fit(cfg)?;
    let dir = &cfg.output;
    write(&dir.join("model.snf"), pack_with(&outcome.net, Precision::F64))?;
    write(&dir.join("metrics.csv"), series_csv(&outcome.report))?;
    write(&dir.join("report.csv"), stages_csv(&outcome.report.stages))?;
    let signal = build_signal(cfg)?;
    if outcome.baselines.is_empty() {
        for k in 1..=outcome.net.num_stages() {
            let pred = outcome.net.forward(&signal.coords, k)?;
            write_reconstruction(&dir.join(format!("stage_{k}")), &pred, &signal)?;
        }
    } else {
        for (i, net) in outcome.baselines.iter().enumerate() {
            let pred = net.forward(&signal.coords, 1)?;
            write_reconstruction(&dir.join(format!("individual_{}", i + 1)), &pred, &signal)?;
        }
    }
    Ok(outcome)
}

pub fn read_stream(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| SnfError::io(path, e))
}

/// Decodes every stage of a stream file.
pub fn load_model(path: &Path) -> Result<StreamableNet> {
    let bytes = read_stream(path)?;
    let (header, _) = snf_core::codec::StreamHeader::decode(&bytes)?;
    Ok(decode_prefix(&bytes, header.num_stages())?)
}

fn check_stage(net: &StreamableNet, stage: usize) -> Result<()> {
    if stage == 0 || stage > net.num_stages() {
        return Err(SnfError::Usage(format!("stage {stage} out of range 1..={}", net.num_stages())));
    }
    Ok(())
}

/// Metrics of `stage` (or every stage) on the extent that stage covers.
pub fn eval(net: &StreamableNet, cfg: &RunConfig, stage: Option<usize>) -> Result<Vec<StageMetrics>> {
    let signal = build_signal(cfg)?;
    let stages: Vec<usize> = match stage {
        Some(k) => {
            check_stage(net, k)?;
            vec![k]
        }
        None => (1..=net.num_stages()).collect(),
    };
    let spectral = cfg.growing == Growing::Spectral || net.num_stages() != cfg.stages();
    stages
        .into_iter()
        .map(|k| {
            if spectral {
                return Ok(evaluate_stage(net, &signal, k, None)?);
            }
            let (s, loss) = stage_target(cfg, &signal, k)?;
            Ok(evaluate_stage(net, &s, k, region(&loss))?)
        })
        .collect()
}

/// Residual of `stage` on the full signal grid, at the signal's scale for 1D
/// signals. Images are shifted by `(r + 1) / 2` into the displayable range.
pub fn residual(net: &StreamableNet, cfg: &RunConfig, stage: usize, out: &Path) -> Result<Matrix> {
    check_stage(net, stage)?;
    if stage < 2 {
        return Err(SnfError::Usage("stage 1 has no residual; its output is the stage-1 reconstruction".into()));
    }
    let signal = build_signal(cfg)?;
    let res = net.forward_residual(&signal.coords, stage)?;
    match signal.grid {
        Grid::Line { .. } => {
            let scale = signal.value_map.scale;
            let mut csv = String::from("x,residual\n");
            for i in 0..signal.len() {
                let _ = writeln!(csv, "{:.9},{:.9}", (signal.coords[(i, 0)] + 1.0) / 2.0, scale * res[(i, 0)]);
            }
            write(&out.with_extension("csv"), csv)?;
        }
        _ => write_reconstruction(out, &res, &signal)?,
    }
    Ok(res)
}

/// Magnitude spectrum of a stage output (or its residual). 1D signals give
/// `bin,magnitude`; images give the radial profile of the channel-averaged
/// centered 2D spectrum as `radius,magnitude`. Returns the spectral centroid.
pub fn spectrum(net: &StreamableNet, cfg: &RunConfig, stage: usize, residual: bool, out: &Path) -> Result<f64> {
    check_stage(net, stage)?;
    let signal = build_signal(cfg)?;
    let values =
        if residual { net.forward_residual(&signal.coords, stage)? } else { net.forward(&signal.coords, stage)? };
    let (mags, header) = match signal.grid {
        Grid::Line { .. } => {
            let col: Vec<f64> = (0..values.rows()).map(|i| values[(i, 0)]).collect();
            (metrics::dft_1d(&col)?, "bin,magnitude\n")
        }
        Grid::Image { width, height, channels } => {
            let plane: Vec<f64> =
                (0..values.rows()).map(|i| values.row(i).iter().sum::<f64>() / channels as f64).collect();
            (metrics::radial_profile(&metrics::spectrum_2d(&plane, width, height)?), "radius,magnitude\n")
        }
        Grid::Video { .. } => return Err(SnfError::Usage("spectrum supports 1D and image signals".into())),
    };
    let mut csv = String::from(header);
    for (i, m) in mags.iter().enumerate() {
        let _ = writeln!(csv, "{i},{m:.9e}");
    }
    write(out, csv)?;
    Ok(metrics::spectral_centroid(&mags)?)
}

/// Re-encodes a stream, optionally at f32 precision.
pub fn repack(input: &Path, output: &Path, precision: Precision) -> Result<usize> {
    let net = load_model(input)?;
    let bytes = pack_with(&net, precision);
    write(output, &bytes)?;
    Ok(bytes.len())
}

/// Decodes the first `k` stages and optionally writes them as a new stream.
pub fn decode(input: &Path, k: usize, output: Option<&PathBuf>) -> Result<StreamableNet> {
    let net = decode_prefix(&read_stream(input)?, k)?;
    if let Some(out) = output {
        write(out, pack_with(&net, Precision::F64))?;
    }
    Ok(net)
}
