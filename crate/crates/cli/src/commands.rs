use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndarray::Axis;

use flowmed::harmonize::{build_repository, first_occurrence_repository};
use flowmed::io::{
    read_codes, read_config, read_flow_dir, read_frames, read_masks, read_tensor, read_video_tensor, write_codes,
    write_flo, write_frames, write_image, write_masks, write_tensor, RunConfig, Tensor,
};
use flowmed::synthetic::translating_texture;
use flowmed::{
    block_matching_flow, consistency_loss, endpoint_error, flow_code, flow_code_distant, gaussian_kernel, generate,
    horizontal_scan, sigma_from_seed, validate_codes, warp_error, Autoencoder, AvgPoolAutoencoder, EncodedFrames,
    FlowDirection, FlowField, GuidanceConfig, Harmonizer, HarmonizerKind, IdentityAutoencoder, Init, NoiseSchedule,
    NoisyOracleModel, OcclusionMask, OracleModel, ScoreModel, Video,
};

use crate::args::{
    AutoencoderSpec, EncodeArgs, EvaluateArgs, GenerateArgs, HarmonizeArgs, HarmonizeTensorArgs, HarmonizerChoice,
    KernelArgs, ModelSpec, ScanArgs, SynthArgs,
};
use crate::manifest::{hash_path, manifest_path, Manifest};

/// Bad or missing arguments discovered after parsing; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn base_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => read_config(p).map_err(|e| Usage(format!("config: {e}")).into()),
        None => Ok(RunConfig::default()),
    }
}

fn required(flag: Option<PathBuf>, fallback: Option<&PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.cloned()).ok_or_else(|| {
        Usage(format!(
            "missing {name} (pass it or set it under [paths] in the config)"
        ))
        .into()
    })
}

/// Frames from a PNG directory or a tensor container file.
fn load_video(path: &Path) -> Result<Video> {
    let video = if path.is_dir() {
        read_frames(path)?
    } else {
        read_video_tensor(path)?
    };
    Ok(video)
}

fn resolve_harmonizer(
    choice: Option<HarmonizerChoice>,
    kernel: &KernelArgs,
    cfg: &RunConfig,
) -> Result<HarmonizerKind> {
    let local = match choice {
        Some(c) => c == HarmonizerChoice::Local,
        None => cfg.local,
    };
    if !local {
        return Ok(HarmonizerKind::Global);
    }
    let length = kernel.kernel_length.unwrap_or(cfg.kernel_length);
    let sigma = match kernel.sigma {
        Some(s) => s,
        None => sigma_from_seed(kernel.sigma_seed.unwrap_or(cfg.sigma_seed)),
    };
    Ok(HarmonizerKind::Local(gaussian_kernel(length, sigma)?))
}

fn describe(kind: &HarmonizerKind, m: &mut Manifest) {
    match kind {
        HarmonizerKind::Global => m.set("harmonizer", "global"),
        HarmonizerKind::Local(k) => {
            m.set("harmonizer", "local");
            m.set("kernel_length", k.length());
            m.set("sigma", k.sigma());
            m.set("kernel_ratio", k.ratio());
        }
    }
}

fn write_video_dir(dir: &Path, video: &Video) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_frames(dir, video)?;
    write_tensor(&dir.join("video.mdtn"), &Tensor::F64(video.clone().into_dyn()))?;
    Ok(())
}

pub fn encode(args: EncodeArgs, cfg: &RunConfig) -> Result<()> {
    let flows = required(args.flows, cfg.paths.flows.as_ref(), "--flows")?;
    let out = required(args.out, cfg.paths.codes.as_ref(), "--out")?;
    let direction: FlowDirection = args.direction.map_or(cfg.flow_direction, Into::into);
    let mut m = Manifest::new("encode");
    m.set("direction", direction.as_str());

    m.stage("read");
    m.hash_input("flows", &flows)?;
    let flow = read_flow_dir(&flows, direction)?;
    let occ = match args.occlusions.or_else(|| cfg.paths.occlusions.clone()) {
        Some(dir) => {
            m.hash_input("occlusions", &dir)?;
            read_masks(&dir)?
        }
        None => OcclusionMask::none_for(&flow),
    };
    let distant = args.distant.or_else(|| cfg.paths.distant_flows.clone());

    m.stage("encode");
    let enc = match distant {
        Some(dir) => {
            let gap = args.gap.ok_or_else(|| Usage("distant flows need --gap".into()))?;
            m.set("gap", gap);
            m.hash_input("distant_flows", &dir)?;
            let dist = read_flow_dir(&dir, direction)?;
            let dist_occ = match args.distant_occlusions.or_else(|| cfg.paths.distant_occlusions.clone()) {
                Some(d) => {
                    m.hash_input("distant_occlusions", &d)?;
                    read_masks(&d)?
                }
                None => OcclusionMask::none_for(&dist),
            };
            flow_code_distant(&flow, &occ, &dist, &dist_occ, gap)?
        }
        None => flow_code(&flow, &occ)?,
    };

    m.stage("write");
    write_codes(&out, &enc)?;
    let report = validate_codes(&enc);
    m.set("n", enc.n());
    m.set("anchor", enc.anchor());
    m.set("sha256.output", hash_path(&out)?);
    m.write(&manifest_path(&out))?;
    println!("{report}");
    Ok(())
}

struct LossReport {
    loss_before: f64,
    loss_after: f64,
    inconsistency_before: f64,
    inconsistency_after: f64,
}

impl LossReport {
    fn measure(x: &Video, out: &Video, enc: &EncodedFrames) -> Result<Self> {
        let naive = first_occurrence_repository(x, enc)?;
        let spread = |v: &Video| -> Result<f64> { Ok(consistency_loss(&build_repository(v, enc)?, enc, v)?) };
        let diff = out
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok(Self {
            loss_before: consistency_loss(&naive, enc, x)?,
            loss_after: diff,
            inconsistency_before: spread(x)?,
            inconsistency_after: spread(out)?,
        })
    }

    fn record(&self, m: &mut Manifest) -> String {
        let mut text = String::new();
        for (k, v) in [
            ("loss_before", self.loss_before),
            ("loss_after", self.loss_after),
            ("inconsistency_before", self.inconsistency_before),
            ("inconsistency_after", self.inconsistency_after),
        ] {
            m.set(k, v);
            let _ = writeln!(text, "{k}={v:.9}");
        }
        text
    }
}

pub fn harmonize(args: HarmonizeArgs, cfg: &RunConfig) -> Result<()> {
    let video = required(args.video, cfg.paths.video.as_ref(), "--video")?;
    let codes = required(args.codes, cfg.paths.codes.as_ref(), "--codes")?;
    let out = required(args.out, cfg.paths.out.as_ref(), "--out")?;
    let kind = resolve_harmonizer(args.mode, &args.kernel, cfg)?;
    let mut m = Manifest::new("harmonize");
    describe(&kind, &mut m);

    m.stage("read");
    m.hash_input("video", &video)?;
    m.hash_input("codes", &codes)?;
    let x = load_video(&video)?;
    let enc = read_codes(&codes)?;
    enc.check_video(x.dim(), "video")?;

    m.stage("harmonize");
    let harm = Harmonizer::new(enc, kind)?;
    let y = harm.apply(&x)?;

    m.stage("write");
    write_video_dir(&out, &y)?;
    let report = LossReport::measure(&x, &y, harm.codes())?;
    let text = report.record(&mut m);
    m.set("sha256.output", hash_path(&out.join("video.mdtn"))?);
    m.write(&manifest_path(&out))?;
    print!("{text}");
    Ok(())
}

pub fn harmonize_tensor(args: HarmonizeTensorArgs, cfg: &RunConfig) -> Result<()> {
    let kind = resolve_harmonizer(args.mode, &args.kernel, cfg)?;
    let mut m = Manifest::new("harmonize-tensor");
    describe(&kind, &mut m);
    m.hash_input("input", &args.input)?;
    m.hash_input("codes", &args.codes)?;

    let input = read_tensor(&args.input)?;
    let x: Video = read_video_tensor(&args.input)?;
    let enc = read_codes(&args.codes)?;
    enc.check_video(x.dim(), "input tensor")?;
    let y = Harmonizer::new(enc, kind)?.apply(&x)?;
    // answer in the dtype the caller sent
    let tensor = match input {
        Tensor::F32(_) => Tensor::F32(y.mapv(|v| v as f32).into_dyn()),
        _ => Tensor::F64(y.into_dyn()),
    };
    write_tensor(&args.out, &tensor)?;
    m.set("sha256.output", hash_path(&args.out)?);
    m.write(&manifest_path(&args.out))?;
    Ok(())
}

fn autoencoder(spec: AutoencoderSpec) -> Result<Box<dyn Autoencoder>> {
    Ok(match spec {
        AutoencoderSpec::Identity => Box::new(IdentityAutoencoder),
        AutoencoderSpec::AvgPool(f) => Box::new(AvgPoolAutoencoder::new(f)?),
    })
}

/// Block-matching estimate in the requested direction.
fn estimate_flow(video: &Video, direction: FlowDirection, radius: usize, patch: usize) -> Result<FlowField> {
    match direction {
        FlowDirection::Backward => Ok(block_matching_flow(video, radius, patch)?),
        FlowDirection::Forward => {
            let mut reversed = video.clone();
            reversed.invert_axis(Axis(0));
            let est = block_matching_flow(&reversed, radius, patch)?;
            Ok(FlowField::new(est.flipped().into_data(), FlowDirection::Forward)?)
        }
    }
}

pub fn generate_cmd(args: GenerateArgs, cfg: &RunConfig) -> Result<()> {
    let codes = required(args.codes, cfg.paths.codes.as_ref(), "--codes")?;
    let out = required(args.out, cfg.paths.out.as_ref(), "--out")?;
    let harmonizer = resolve_harmonizer(args.harmonizer, &args.kernel, cfg)?;
    let guidance = GuidanceConfig {
        w: args.w.unwrap_or(cfg.w),
        mode: args.mode.map_or(cfg.mode, Into::into),
        harmonizer,
        steps: args.steps.unwrap_or(cfg.steps),
        start_fraction: args.start_fraction.unwrap_or(cfg.start_fraction),
    };
    guidance.validate()?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let sched: NoiseSchedule = cfg.schedule()?;

    let mut m = Manifest::new("generate");
    m.set("w", guidance.w);
    m.set("mode", guidance.mode.as_str());
    describe(&guidance.harmonizer, &mut m);
    m.set("steps", guidance.steps);
    m.set("start_fraction", guidance.start_fraction);
    m.set("seed", seed);
    m.set("train_steps", cfg.train_steps);
    m.set("beta_start", cfg.beta_start);
    m.set("beta_end", cfg.beta_end);

    m.stage("read");
    let (target_path, scale) = match &args.model {
        ModelSpec::Oracle(p) => (p.clone(), None),
        ModelSpec::NoisyOracle(p, s) => (p.clone(), Some(*s)),
    };
    m.set("model", if scale.is_some() { "noisy-oracle" } else { "oracle" });
    if let Some(s) = scale {
        m.set("model_scale", s);
    }
    m.set(
        "autoencoder",
        match args.autoencoder {
            AutoencoderSpec::Identity => "identity".to_string(),
            AutoencoderSpec::AvgPool(f) => format!("avgpool:{f}"),
        },
    );
    m.hash_input("target", &target_path)?;
    m.hash_input("codes", &codes)?;
    let enc = read_codes(&codes)?;
    let target = load_video(&target_path)?;
    enc.check_video(target.dim(), "model target")?;
    let ae = autoencoder(args.autoencoder)?;
    let latent_target = ae.encode(&target)?;
    let channels = latent_target.dim().1;
    let model: Box<dyn ScoreModel> = match scale {
        None => Box::new(OracleModel::new(latent_target)),
        Some(s) => Box::new(NoisyOracleModel::new(latent_target, s, seed)?),
    };
    let init = match args.source.or_else(|| cfg.paths.source.clone()) {
        Some(p) => {
            m.hash_input("source", &p)?;
            Init::Source {
                video: load_video(&p)?,
                seed,
            }
        }
        None => Init::Noise { channels, seed },
    };
    let gt = match args.flows.or_else(|| cfg.paths.flows.clone()) {
        Some(dir) => {
            m.hash_input("flows", &dir)?;
            let flow = read_flow_dir(&dir, cfg.flow_direction)?;
            let occ = match args.occlusions.or_else(|| cfg.paths.occlusions.clone()) {
                Some(d) => {
                    m.hash_input("occlusions", &d)?;
                    read_masks(&d)?
                }
                None => OcclusionMask::none_for(&flow),
            };
            Some((flow, occ))
        }
        None => None,
    };
    let harm = Harmonizer::new(enc, guidance.harmonizer.clone())?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    if args.sweep {
        let (flow, occ) = gt.as_ref().ok_or_else(|| Usage("--sweep needs --flows".into()))?;
        m.stage("sweep");
        let mut table = String::from("w\tmean_epe\tfrac_gt_1px\tfrac_gt_3px\twarp_error\n");
        for k in 0..=10 {
            let cfg_k = GuidanceConfig {
                w: k as f64 / 10.0,
                ..guidance.clone()
            };
            let video = generate(model.as_ref(), &harm, ae.as_ref(), &cfg_k, &sched, &init)?;
            let est = estimate_flow(&video, flow.direction(), 4, 5)?;
            let epe = endpoint_error(&est, flow, Some(occ))?;
            let we = warp_error(&video, flow, occ)?;
            let _ = writeln!(
                table,
                "{:.1}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                cfg_k.w, epe.mean_epe, epe.frac_gt_1, epe.frac_gt_3, we.mean
            );
        }
        m.set("sweep", "0.0:0.1:1.0");
        fs::write(out.join("sweep.tsv"), &table).context("writing sweep table")?;
        m.set("sha256.output", hash_path(&out.join("sweep.tsv"))?);
        m.write(&manifest_path(&out))?;
        print!("{table}");
        return Ok(());
    }

    m.stage("generate");
    let video = generate(model.as_ref(), &harm, ae.as_ref(), &guidance, &sched, &init)?;
    m.stage("write");
    write_video_dir(&out, &video)?;
    m.set("sha256.output", hash_path(&out.join("video.mdtn"))?);
    if let Some((flow, occ)) = &gt {
        let we = warp_error(&video, flow, occ)?;
        m.set("warp_error", we.mean);
        println!("warp_error={:.9}", we.mean);
    }
    m.write(&manifest_path(&out))?;
    Ok(())
}

pub fn evaluate(args: EvaluateArgs, cfg: &RunConfig) -> Result<()> {
    let direction: FlowDirection = args.direction.map_or(cfg.flow_direction, Into::into);
    let gt = read_flow_dir(&args.gt_flows, direction)?;
    let mask = args.occlusions.as_deref().map(read_masks).transpose()?;
    let video = args.video.as_deref().map(load_video).transpose()?;
    let est = match (&args.flows, &video) {
        (Some(dir), _) => read_flow_dir(dir, direction)?,
        (None, Some(v)) => estimate_flow(v, direction, args.radius, args.patch)?,
        (None, None) => unreachable!("clap requires --video or --flows"),
    };
    let mut text = endpoint_error(&est, &gt, mask.as_ref())?.to_string();
    text.push('\n');
    if let Some(v) = &video {
        let occ = mask.clone().unwrap_or_else(|| OcclusionMask::none_for(&gt));
        let we = warp_error(v, &gt, &occ)?;
        let _ = writeln!(text, "warp_error={:.9}", we.mean);
        let _ = writeln!(text, "warp_compared={}", we.compared);
    }
    print!("{text}");
    if let Some(path) = &args.report {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
        let mut m = Manifest::new("evaluate");
        m.set("direction", direction.as_str());
        m.set("radius", args.radius);
        m.set("patch", args.patch);
        m.hash_input("gt_flows", &args.gt_flows)?;
        for (key, p) in [
            ("video", &args.video),
            ("flows", &args.flows),
            ("occlusions", &args.occlusions),
        ] {
            if let Some(p) = p {
                m.hash_input(key, p)?;
            }
        }
        m.write(&manifest_path(path))?;
    }
    Ok(())
}

pub fn scan(args: ScanArgs) -> Result<()> {
    let video = load_video(&args.video)?;
    let w = video.dim().3;
    let column = match args.column {
        Some(c) => c,
        None => w
            .checked_sub(args.width)
            .ok_or_else(|| Usage(format!("strip width {} exceeds frame width {w}", args.width)))?,
    };
    let image = horizontal_scan(&video, column, args.width, args.shift)?;
    write_image(&args.out, &image)?;
    let mut m = Manifest::new("scan");
    m.hash_input("video", &args.video)?;
    m.set("column", column);
    m.set("width", args.width);
    m.set("shift", args.shift);
    m.set("sha256.output", hash_path(&args.out)?);
    m.write(&manifest_path(&args.out))?;
    println!("scan={}x{}", image.dim().2, image.dim().1);
    Ok(())
}

pub fn synth(args: SynthArgs, cfg: &RunConfig) -> Result<()> {
    let seed = args.seed.unwrap_or(cfg.seed);
    let scene = translating_texture(
        args.frames,
        args.channels,
        args.height,
        args.width,
        (args.dy, args.dx),
        seed,
    )?;
    let out = &args.out;
    write_video_dir(&out.join("frames"), &scene.video)?;
    let flows = out.join("flows");
    fs::create_dir_all(&flows).with_context(|| format!("creating {}", flows.display()))?;
    for i in 0..args.frames.saturating_sub(1) {
        write_flo(&flows.join(format!("{i:04}.flo")), scene.flows.slice(i))?;
    }
    write_masks(&out.join("occlusions"), &scene.occlusions)?;
    let mut m = Manifest::new("synth");
    for (k, v) in [
        ("frames", args.frames),
        ("height", args.height),
        ("width", args.width),
        ("channels", args.channels),
    ] {
        m.set(k, v);
    }
    m.set("shift", format!("{},{}", args.dy, args.dx));
    m.set("seed", seed);
    m.set("direction", "backward");
    m.set("sha256.frames", hash_path(&out.join("frames"))?);
    m.write(&manifest_path(out))?;
    Ok(())
}
