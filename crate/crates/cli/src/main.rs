mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use seizurecast::architecture::{Network, NetworkConfig};
use seizurecast::metrics::{evaluate, roc_and_auc, DEFAULT_THRESHOLD};
use seizurecast::pipeline::{
    find_lead_seizures, generate_synthetic, read_recording, split_train_validation, window_points,
    windows_for_recording, write_recording, write_recording_csv, Recording, SyntheticProfile,
    TimingPolicy, WindowSample,
};
use seizurecast::training::{score_windows, train_with_observer, AdamConfig, TrainConfig};

use manifest::RunManifest;

const SEED_ENV: &str = "SEIZURECAST_SEED";
const SPLIT_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;

#[derive(Parser)]
#[command(name = "seizurecast", version, about = "Seizure prediction from raw multichannel EEG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording bundle.
    Synth(SynthArgs),
    /// Label, window and train a network on one subject.
    Train(TrainArgs),
    /// Score a subject's windows with a trained model.
    Eval(EvalArgs),
    /// Print the per-layer shape table for an input size.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    channels: usize,
    #[arg(long, default_value_t = 100.0)]
    rate_hz: f64,
    #[arg(long, default_value_t = 7200.0)]
    duration_s: f64,
    /// Seizure onset in seconds; repeat for several seizures.
    #[arg(long = "seizure-at")]
    seizure_at: Vec<f64>,
    #[arg(long, default_value_t = 60.0)]
    seizure_duration_s: f64,
    /// Amplitude of the preictal oscillation relative to the noise.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_sigma: f64,
    /// How long before each onset the oscillation is present.
    #[arg(long, default_value_t = 2100.0)]
    preictal_span_s: f64,
    #[arg(long, default_value_t = 8.0)]
    band_low_hz: f64,
    #[arg(long, default_value_t = 12.0)]
    band_high_hz: f64,
    #[arg(long, default_value = "synthetic")]
    subject: String,
    #[arg(long, value_enum, default_value_t = SignalFormat::Bin)]
    format: SignalFormat,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum SignalFormat {
    Bin,
    Csv,
}

#[derive(Args, Clone)]
struct PolicyArgs {
    #[arg(long, default_value_t = 1800.0)]
    pil_s: f64,
    #[arg(long, default_value_t = 300.0)]
    sph_s: f64,
    #[arg(long, default_value_t = 20.0)]
    window_s: f64,
    #[arg(long, default_value_t = 5.0)]
    overlap_s: f64,
    #[arg(long, default_value_t = 14400.0)]
    lead_gap_s: f64,
    #[arg(long, default_value_t = 14400.0)]
    interictal_margin_s: f64,
}

impl PolicyArgs {
    fn policy(&self) -> Result<TimingPolicy> {
        let p = TimingPolicy {
            pil_s: self.pil_s,
            sph_s: self.sph_s,
            window_s: self.window_s,
            preictal_overlap_s: self.overlap_s,
            lead_gap_s: self.lead_gap_s,
            interictal_margin_s: self.interictal_margin_s,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Standard,
    Reduced,
}

#[derive(Args)]
struct TrainArgs {
    /// A recording bundle, or a directory of bundles from one subject.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, value_enum, default_value_t = Arch::Standard)]
    arch: Arch,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 6400)]
    samples_per_epoch: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Overridden by the SEIZURECAST_SEED environment variable when set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Directory for roc.csv, roc.svg, report.json and the manifest.
    #[arg(long)]
    roc_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    channels: usize,
    #[arg(long)]
    width: usize,
    #[arg(long, value_enum, default_value_t = Arch::Standard)]
    arch: Arch,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn resolve_seed(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(flag),
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let mut profile = SyntheticProfile::new(a.channels, a.rate_hz, a.duration_s).with_delta(a.delta);
    for &onset in &a.seizure_at {
        profile = profile.with_seizure(onset, a.seizure_duration_s);
    }
    profile.subject_id = a.subject.clone();
    profile.noise_sigma = a.noise_sigma;
    profile.preictal_span_s = a.preictal_span_s;
    profile.band_hz = (a.band_low_hz, a.band_high_hz);

    let rec = generate_synthetic(&profile, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let outputs = match a.format {
        SignalFormat::Bin => {
            write_recording(&rec, &a.out)?;
            ["meta.json", "signal.bin"]
        }
        SignalFormat::Csv => {
            write_recording_csv(&rec, &a.out)?;
            ["meta.json", "signal.csv"]
        }
    };
    let mut manifest = RunManifest::new(
        "synth",
        Some(seed),
        Vec::new(),
        json!({ "profile": profile, "format": a.format }),
    );
    for f in outputs {
        manifest.record_output(&a.out.join(f))?;
    }
    manifest.write(&a.out)?;
    eprintln!(
        "wrote {} ({} channels, {} samples, {} seizures)",
        a.out.display(),
        rec.channel_count(),
        rec.samples(),
        rec.seizures().len()
    );
    Ok(())
}

/// One bundle, or every bundle directly inside a directory, sorted by name.
fn load_bundles(path: &Path) -> Result<Vec<(PathBuf, Recording)>> {
    let paths = if path.join("meta.json").is_file() {
        vec![path.to_path_buf()]
    } else {
        let mut dirs: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("reading {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("meta.json").is_file())
            .collect();
        dirs.sort();
        dirs
    };
    if paths.is_empty() {
        bail!("{} is neither a recording bundle nor a directory of bundles", path.display());
    }
    let mut out: Vec<(PathBuf, Recording)> = Vec::new();
    for p in paths {
        let rec = read_recording(&p).with_context(|| format!("loading bundle {}", p.display()))?;
        if let Some((first_path, first)) = out.first() {
            if first.channel_count() != rec.channel_count() || first.sample_rate_hz() != rec.sample_rate_hz() {
                bail!(
                    "bundles disagree: {} has {} channels at {} Hz, {} has {} channels at {} Hz",
                    first_path.display(),
                    first.channel_count(),
                    first.sample_rate_hz(),
                    p.display(),
                    rec.channel_count(),
                    rec.sample_rate_hz()
                );
            }
        }
        out.push((p, rec));
    }
    Ok(out)
}

fn no_lead_diagnostic(bundles: &[(PathBuf, Recording)], policy: &TimingPolicy) -> String {
    let mut msg = format!(
        "no usable lead seizures: each needs {} s of signal before onset (PIL {} s + SPH {} s) \
         and {} s since the previous seizure",
        policy.pil_s + policy.sph_s,
        policy.pil_s,
        policy.sph_s,
        policy.lead_gap_s
    );
    for (path, rec) in bundles {
        if rec.seizures().is_empty() {
            msg.push_str(&format!("\n  {}: no annotated seizures", path.display()));
        }
        let mut prev_offset = None;
        for (i, s) in rec.seizures().iter().enumerate() {
            let gap = match prev_offset {
                None => format!("{} s from recording start", s.onset_s),
                Some(off) => format!("{} s after previous offset", s.onset_s - off),
            };
            msg.push_str(&format!(
                "\n  {}: seizure {} at {} s, {}",
                path.display(),
                i + 1,
                s.onset_s,
                gap
            ));
            prev_offset = Some(s.offset_s);
        }
    }
    msg
}

fn collect_windows(bundles: &[(PathBuf, Recording)], policy: &TimingPolicy) -> Result<Vec<WindowSample>> {
    let mut windows = Vec::new();
    for (path, rec) in bundles {
        windows.extend(windows_for_recording(rec, policy).with_context(|| format!("windowing {}", path.display()))?);
    }
    Ok(windows)
}

fn network_config(arch: Arch, channels: usize, width: usize) -> NetworkConfig {
    match arch {
        Arch::Standard => NetworkConfig::standard(channels, width),
        Arch::Reduced => NetworkConfig::reduced(channels, width),
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let policy = a.policy.policy()?;
    let bundles = load_bundles(&a.data)?;
    let leads: usize = bundles.iter().map(|(_, r)| find_lead_seizures(r, &policy).len()).sum();
    if leads == 0 {
        bail!(no_lead_diagnostic(&bundles, &policy));
    }

    let (channels, rate) = (bundles[0].1.channel_count(), bundles[0].1.sample_rate_hz());
    let width = window_points(&policy, rate);
    let net_config = network_config(a.arch, channels, width);
    let mut net = Network::build(net_config.clone(), &mut rng_stream(seed, INIT_STREAM))
        .with_context(|| format!("building network for {channels}x{width} windows"))?;

    let windows = collect_windows(&bundles, &policy)?;
    let (train, val) = split_train_validation(windows, a.val_fraction, &mut rng_stream(seed, SPLIT_STREAM))?;
    let count = |v: &[WindowSample]| v.iter().filter(|s| s.label.is_preictal()).count();
    eprintln!(
        "{} lead seizures; train {} preictal / {} interictal, validation {} / {}",
        leads,
        count(&train),
        train.len() - count(&train),
        count(&val),
        val.len() - count(&val)
    );

    let config = TrainConfig {
        adam: AdamConfig {
            learning_rate: a.lr,
            ..AdamConfig::default()
        },
        epochs: a.epochs,
        samples_per_epoch: a.samples_per_epoch,
        batch_size: a.batch_size,
        seed,
        threshold: a.threshold,
        window_s: policy.window_s,
    };
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    let history = train_with_observer(&mut net, &train, &val, &config, |r| {
        eprintln!(
            "epoch {:>4}  loss {:.5}  val sens {}  fpr/h {}  auc {}",
            r.epoch,
            r.train_loss,
            fmt(r.val_sensitivity),
            fmt(r.val_fpr_per_h),
            fmt(r.val_auc)
        );
    })?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let model_path = a.out.join("model.bin");
    net.save(&model_path)?;
    let history_path = a.out.join("history.csv");
    fs::write(&history_path, history.to_csv()).with_context(|| format!("writing {}", history_path.display()))?;

    let mut manifest = RunManifest::new(
        "train",
        Some(seed),
        bundles.iter().map(|(p, _)| p.clone()).collect(),
        json!({
            "timing": policy,
            "training": config,
            "network": net_config,
            "validation_fraction": a.val_fraction,
        }),
    );
    manifest.record_output(&model_path)?;
    manifest.record_output(&history_path)?;
    manifest.write(&a.out)?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let policy = a.policy.policy()?;
    let net = Network::load(&a.model)?;
    let bundles = load_bundles(&a.data)?;
    let windows = collect_windows(&bundles, &policy)?;
    if windows.is_empty() {
        bail!("no preictal or interictal windows in {}", a.data.display());
    }
    let scored = score_windows(&net, &windows, a.threads)
        .with_context(|| format!("scoring {} with {}", a.data.display(), a.model.display()))?;
    let report = evaluate(&scored, a.threshold, policy.window_s)?;
    let report_json = serde_json::to_string_pretty(&report)?;
    println!("{report_json}");

    if let Some(dir) = &a.roc_out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let roc = roc_and_auc(&scored)?;
        let files = [
            ("roc.csv", roc.to_csv()),
            ("roc.svg", roc.to_svg(&format!("ROC {}", a.data.display()))),
            ("report.json", report_json + "\n"),
        ];
        let mut inputs = vec![a.model.clone()];
        inputs.extend(bundles.iter().map(|(p, _)| p.clone()));
        let mut manifest = RunManifest::new(
            "eval",
            None,
            inputs,
            json!({ "timing": policy, "threshold": a.threshold, "network": net.config() }),
        );
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            manifest.record_output(&path)?;
        }
        manifest.write(dir)?;
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let config = network_config(a.arch, a.channels, a.width);
    let table = config.shape_table()?;
    print!("{}", table.render());
    Ok(())
}
