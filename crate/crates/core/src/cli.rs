//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! abort. Outputs go to `--out`, else to `$SMOOTHDIFF_OUT/<command>`, else to
//! `runs/<command>`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{array, Array2};
use rand::Rng;
use serde_json::json;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::geometry::{
    build_knn_graph, build_laplacian, generate_shape, read_xyz_dir, write_xyz_dir, PointCloud, ShapeKind, ShapeSpec,
};
use crate::metrics::evaluate;
use crate::rng;
use crate::sampler::{
    constraint_gradient, generate, sample_cloud, tweedie_denoise, ConstraintMode, SamplerConfig,
};
use crate::score_models::{GaussianMixtureScore, GenerativeModel, ScoreField};
use crate::sde::{VpSchedule, EPS_T};
use crate::sweep::{sweep_k, write_sweep_csv};
use crate::training::{read_loss_csv, validate_dataset, write_loss_csv, Trainer};
use crate::{Error, Result};

pub const OUT_ENV: &str = "SMOOTHDIFF_OUT";

#[derive(Debug, Parser)]
#[command(name = "smoothdiff", version, about = "Smoothness-constrained diffusion for point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset of noisy primitive shapes.
    Synth(SynthArgs),
    /// Train encoder, decoder and latent prior on a dataset directory.
    Train(TrainArgs),
    /// Generate clouds from a checkpoint.
    Sample(SampleArgs),
    /// Compare a generated set against a reference set.
    Eval(EvalArgs),
    /// Constrained sampling across several graph sizes K.
    SweepK(SweepArgs),
    /// Check Tweedie denoising and guided steps against analytic oracles.
    DenoiseDemo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 64)]
    pub count: usize,
    #[arg(long, default_value_t = 256)]
    pub points: usize,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; defaults apply to omitted keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory of `.xyz` files (overrides the config).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SamplerFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "knn-k")]
    pub knn_k: Option<usize>,
    /// off, frozen or exact
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long = "t-constraint")]
    pub t_constraint: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerFlags,
    /// Also write `trajectory_%04d.csv` per cloud.
    #[arg(long)]
    pub trajectory: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long = "knn-k", default_value_t = 30)]
    pub knn_k: usize,
    /// Output CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Reference set for RS.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20, 25, 30, 35])]
    pub k: Vec<usize>,
    /// K of the graph on which smoothness is measured.
    #[arg(long = "metric-k", default_value_t = 30)]
    pub metric_k: usize,
    #[command(flatten)]
    pub sampler: SamplerFlags,
    /// Output CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn out_dir(flag: Option<&PathBuf>, command: &str) -> PathBuf {
    match flag {
        Some(p) => p.clone(),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(command),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialise");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Sampler settings: config file (or defaults), then flags. A positive
/// `--alpha` together with `--mode off` is a conflict; `--mode off` alone
/// implies `alpha = 0`.
pub fn resolve_sampler(flags: &SamplerFlags) -> Result<(SamplerConfig, usize, usize)> {
    let run = load_config(flags.config.as_ref())?;
    let mut c = run.sampler();
    if let Some(v) = flags.steps {
        c.n_steps = v;
    }
    if let Some(v) = flags.knn_k {
        c.knn_k = v;
    }
    if let Some(v) = flags.t_constraint {
        c.t_constraint = v;
    }
    if let Some(v) = flags.seed {
        c.seed = v;
    }
    if let Some(m) = &flags.mode {
        c.mode = m.parse()?;
    }
    match (flags.alpha, c.mode) {
        (Some(a), ConstraintMode::Off) if a > 0.0 => {
            return Err(Error::InvalidParameter(format!("--alpha {a} conflicts with --mode off")));
        }
        (Some(a), _) => c.alpha = a,
        (None, ConstraintMode::Off) => c.alpha = 0.0,
        (None, _) => {}
    }
    c.validate()?;
    Ok((c, flags.points.unwrap_or(run.n_points), flags.count.unwrap_or(run.n_clouds)))
}

fn shape_seed(seed: u64, index: usize) -> u64 {
    rng::substream(seed, index as u64).random()
}

pub fn synth(args: &SynthArgs) -> Result<PathBuf> {
    if args.count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    let kind = ShapeKind::from_name(&args.kind)?;
    let specs: Vec<ShapeSpec> = (0..args.count)
        .map(|i| ShapeSpec::new(kind, args.points, args.noise, shape_seed(args.seed, i)))
        .collect();
    let clouds: Vec<PointCloud> = specs.iter().map(generate_shape).collect::<Result<_>>()?;
    let dir = out_dir(args.out.as_ref(), "synth");
    let files = write_xyz_dir(&dir, "cloud", &clouds)?;
    let entries: Vec<_> = files
        .iter()
        .zip(&specs)
        .map(|(f, s)| json!({ "file": f, "spec": s }))
        .collect();
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "synth",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": args.seed,
            "clouds": entries,
        }),
    )?;
    Ok(dir)
}

pub fn train(args: &TrainArgs) -> Result<PathBuf> {
    let mut config = load_config(args.config.as_ref())?;
    if let Some(d) = &args.dataset {
        config.dataset = Some(d.clone());
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    let dataset_dir = config
        .dataset
        .clone()
        .ok_or_else(|| Error::Config("no dataset given (use --dataset or the 'dataset' key)".into()))?;
    let dataset = read_xyz_dir(&dataset_dir)?;
    validate_dataset(&dataset)?;

    let dir = match (&args.out, &config.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p.clone(),
        (None, None) => out_dir(None, "train"),
    };
    create_dir(&dir)?;
    let loss_path = dir.join("loss.csv");

    let (model, start) = match &args.resume {
        Some(ckpt) => {
            let (model, done) = checkpoint::load(ckpt)?;
            if model.config != config.model() || model.schedule != config.schedule()? {
                return Err(Error::Config(format!(
                    "{} was trained with a different architecture or schedule",
                    ckpt.display()
                )));
            }
            (model, done)
        }
        None => (GenerativeModel::new(config.model(), config.schedule()?, config.seed)?, 0),
    };
    if args.resume.is_some() && loss_path.exists() {
        // keep only epochs before the resume point so the curve has no gaps
        let kept: Vec<_> = read_loss_csv(&loss_path)?.into_iter().filter(|r| r.epoch < start).collect();
        write_loss_csv(&loss_path, &kept, false)?;
    } else {
        write_loss_csv(&loss_path, &[], false)?;
    }

    let mut trainer = Trainer::resume(model, config.train(), start)?;
    for _ in 0..config.epochs {
        let report = trainer.run_epoch(&dataset)?;
        eprintln!(
            "epoch {:>5}  recon {:.5}  latent {:.5}  entropy {:.4}  total {:.5}",
            report.epoch, report.recon, report.latent, report.entropy, report.total
        );
        write_loss_csv(&loss_path, &[report], true)?;
    }
    let done = trainer.epoch();
    checkpoint::save(&dir.join("model.sdpc"), &trainer.model, done)?;
    config.save(&dir.join("config.toml"))?;
    write_json(
        &dir.join("run_manifest.json"),
        &json!({
            "command": "train",
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": config.hash(),
            "seed": config.seed,
            "dataset": dataset_dir,
            "n_clouds": dataset.len(),
            "start_epoch": start,
            "epochs_done": done,
            "resumed_from": args.resume,
        }),
    )?;
    Ok(dir)
}

pub fn sample(args: &SampleArgs) -> Result<PathBuf> {
    let (mut config, points, count) = resolve_sampler(&args.sampler)?;
    config.record_trajectory = args.trajectory;
    let (model, epochs) = checkpoint::load(&args.checkpoint)?;
    let results = generate(&model, &config, count, points)?;
    let dir = out_dir(args.out.as_ref(), "sample");
    let clouds: Vec<PointCloud> = results.iter().map(|(c, _)| c.clone()).collect();
    let files = write_xyz_dir(&dir, "sample", &clouds)?;
    for (i, (_, traj)) in results.iter().enumerate() {
        if let Some(t) = traj {
            t.write_csv(&dir.join(format!("trajectory_{i:04}.csv")))?;
        }
    }
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "sample",
            "version": env!("CARGO_PKG_VERSION"),
            "checkpoint": args.checkpoint,
            "checkpoint_epochs": epochs,
            "sampler": config,
            "n_points": points,
            "files": files,
        }),
    )?;
    Ok(dir)
}

pub fn eval(args: &EvalArgs) -> Result<PathBuf> {
    let reference = read_xyz_dir(&args.reference)?;
    let generated = read_xyz_dir(&args.generated)?;
    let report = evaluate(&reference, &generated, args.knn_k)?;
    let path = args.out.clone().unwrap_or_else(|| out_dir(None, "eval").join("metrics.csv"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    report.write_csv(&path)?;
    for (name, v) in report.rows() {
        println!("{name:>16}  {v}");
    }
    Ok(path)
}

pub fn sweep(args: &SweepArgs) -> Result<PathBuf> {
    let (config, points, count) = resolve_sampler(&args.sampler)?;
    let (model, _) = checkpoint::load(&args.checkpoint)?;
    let reference = read_xyz_dir(&args.reference)?;
    let rows = sweep_k(&model, &config, &args.k, count, points, args.metric_k, &reference)?;
    let path = args.out.clone().unwrap_or_else(|| out_dir(None, "sweep-k").join("sweep.csv"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_sweep_csv(&path, &rows)?;
    for r in &rows {
        println!(
            "k {:>3}  mean S {:.4}  rs {:.4}  baseline S {:.4}",
            r.k, r.mean_smoothness, r.rs, r.baseline_smoothness
        );
    }
    Ok(path)
}

/// Prints implementation-versus-oracle errors for the analytic demos.
pub fn denoise_demo(args: &DemoArgs) -> Result<()> {
    let sched = VpSchedule::default();
    let mut r = rng::seeded(args.seed);

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mu = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let s0 = r.random_range(0.05..2.0);
        let t = r.random_range(EPS_T..1.0);
        let g = GaussianMixtureScore::gaussian(&mu, s0, sched)?;
        let x = rng::normal_matrix(&mut r, 8, 3);
        let xhat = tweedie_denoise(&sched, x.view(), g.score(x.view(), None, t)?.view(), t)?;
        let (a, b) = sched.coefficients(t)?;
        for ((i, j), v) in xhat.indexed_iter() {
            let oracle = (a * s0 * s0 * x[[i, j]] + b * b * mu[j]) / (a * a * s0 * s0 + b * b);
            worst = worst.max((v - oracle).abs());
        }
    }
    println!("tweedie vs Gaussian posterior mean    max abs error {worst:.3e}");

    let means = array![[2.0, 0.0, 0.0], [-2.0, 0.0, 0.0]];
    let gmm = GaussianMixtureScore::new(means, 0.3, vec![0.5, 0.5], sched)?;
    let x = rng::normal_matrix(&mut r, 64, 3).mapv(|v| 1.5 * v);
    let t = 0.3;
    let xhat = tweedie_denoise(&sched, x.view(), gmm.score(x.view(), None, t)?.view(), t)?;
    let err = (&xhat - &gmm.posterior_mean(x.view(), t)?).fold(0.0f64, |m, v| m.max(v.abs()));
    println!("tweedie vs mixture posterior mean     max abs error {err:.3e}");

    let cloud = PointCloud::new(x.clone())?;
    let lap = build_laplacian(&build_knn_graph(&cloud, 5)?);
    let grad = constraint_gradient(&gmm, &sched, x.view(), None, t, &lap, ConstraintMode::ExactChain)?;
    let objective = |p: &Array2<f64>| -> Result<f64> {
        let xh = tweedie_denoise(&sched, p.view(), gmm.score(p.view(), None, t)?.view(), t)?;
        lap.quadratic_form(xh.view())
    };
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    for i in 0..x.nrows() {
        for j in 0..3 {
            let mut p = x.clone();
            p[[i, j]] += h;
            let mut m = x.clone();
            m[[i, j]] -= h;
            let fd = (objective(&p)? - objective(&m)?) / (2.0 * h);
            worst_rel = worst_rel.max((fd - grad[[i, j]]).abs() / fd.abs().max(grad[[i, j]].abs()).max(1e-8));
        }
    }
    println!("exact-chain guidance vs finite diffs  max rel error {worst_rel:.3e}");

    let config = SamplerConfig {
        seed: args.seed,
        ..SamplerConfig::default().unconstrained()
    };
    let (samples, _) = sample_cloud(&gmm, &sched, None, 4000, &config, &mut rng::seeded(args.seed))?;
    let right: Vec<_> = samples.points().rows().into_iter().filter(|p| p[0] > 0.0).map(|p| p[0]).collect();
    let frac = right.len() as f64 / 4000.0;
    let mean_right = right.iter().sum::<f64>() / right.len().max(1) as f64;
    println!("mixture sampling (200 steps, 4000)    occupancy {frac:.4} (0.5), right mean x {mean_right:.4} (2.0)");
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a).map(|d| println!("wrote {}", d.display())),
        Command::Train(a) => train(a).map(|d| println!("wrote {}", d.display())),
        Command::Sample(a) => sample(a).map(|d| println!("wrote {}", d.display())),
        Command::Eval(a) => eval(a).map(|p| println!("wrote {}", p.display())),
        Command::SweepK(a) => sweep(a).map(|p| println!("wrote {}", p.display())),
        Command::DenoiseDemo(a) => denoise_demo(a),
    }
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> SamplerFlags {
        SamplerFlags {
            config: None,
            steps: None,
            alpha: None,
            knn_k: None,
            mode: None,
            t_constraint: None,
            seed: None,
            points: None,
            count: None,
        }
    }

    #[test]
    fn alpha_with_mode_off_conflicts() {
        let f = SamplerFlags {
            alpha: Some(1e-3),
            mode: Some("off".into()),
            ..flags()
        };
        let err = resolve_sampler(&f).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn mode_off_alone_zeroes_alpha() {
        let f = SamplerFlags {
            mode: Some("off".into()),
            ..flags()
        };
        let (c, _, _) = resolve_sampler(&f).unwrap();
        assert_eq!(c.alpha, 0.0);
        assert!(!c.constraint_enabled());
    }

    #[test]
    fn unknown_mode_rejected() {
        let f = SamplerFlags {
            mode: Some("sideways".into()),
            ..flags()
        };
        assert!(resolve_sampler(&f).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
