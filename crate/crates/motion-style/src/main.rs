use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use motion_style::artifact::{
    load_chain, load_decomposition, save_chain, save_decomposition, ChainArtifact,
    DecompositionArtifact,
};
use motion_style::decompose::{decompose_with, extract_basic_chain};
use motion_style::dtw::{dtw_align, foot_signal, warp_pair, Axis3};
use motion_style::error::{Error, Result};
use motion_style::motion_io::{export_csv, normalize, save_clip};
use motion_style::pipeline::{load_any_clip, run_pipeline, PipelineConfig};
use motion_style::postprocess::{enforce_limb_lengths, measure_limb_lengths};
use motion_style::sparse::SparsityBudget;
use motion_style::synth::{
    blend_cores, core_decompose, core_decompose_chain, exchange_basic, project_into_basis,
    synthesize_clip,
};

#[derive(Parser)]
#[command(name = "motion-style", version, about = "Motion style extraction and transfer")]
struct Cli {
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert between BVH, the clip JSON format, and CSV.
    Convert(ConvertArgs),
    /// Print summary information about a clip.
    Info(InfoArgs),
    /// Z-normalize a clip and write the matrix with its statistics.
    Normalize(NormalizeArgs),
    /// Time-align two clips on a joint coordinate and write warped copies.
    Warp(WarpArgs),
    /// Decompose a clip into weights and sparse components.
    Decompose(DecomposeArgs),
    /// Extract a basic-motion chain with a per-term sparsity schedule.
    Chain(ChainArgs),
    /// Blend the cores of two decompositions into a new clip.
    SynthBlend(SynthBlendArgs),
    /// Exchange one basic-motion term between two chains.
    SynthExchange(SynthExchangeArgs),
    /// Rescale every bone of a clip to its reference length.
    FixLimbs(FixLimbsArgs),
    /// Run the full two-clip style transfer pipeline from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args)]
struct InfoArgs {
    input: PathBuf,
}

#[derive(Args)]
struct NormalizeArgs {
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args)]
struct WarpArgs {
    input_a: PathBuf,
    input_b: PathBuf,
    #[arg(long, default_value = "LeftFoot")]
    joint: String,
    #[arg(long, default_value = "y")]
    axis: String,
    /// Band half-width in frames; unconstrained when absent.
    #[arg(long)]
    band: Option<usize>,
    #[arg(long)]
    out_a: PathBuf,
    #[arg(long)]
    out_b: PathBuf,
}

#[derive(Args)]
struct DecomposeArgs {
    input: PathBuf,
    output: PathBuf,
    /// Number of components.
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    /// Non-zero fraction per code vector.
    #[arg(short, long, default_value_t = 0.1)]
    fraction: f64,
    /// Absolute non-zero count per code vector; overrides --fraction.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 20)]
    outer_iters: usize,
    /// Weight constraint: "identity" or "box01".
    #[arg(long, default_value = "identity")]
    constraint: String,
}

#[derive(Args)]
struct ChainArgs {
    input: PathBuf,
    output: PathBuf,
    /// Comma-separated per-term sparsity fractions, e.g. "0.05,0.1,0.2".
    #[arg(long)]
    schedule: String,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    outer_iters: usize,
}

#[derive(Args)]
struct SynthBlendArgs {
    /// Decomposition artifact of the recipient clip.
    input_a: PathBuf,
    /// Decomposition artifact of the style donor.
    input_b: PathBuf,
    output: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Retained singular directions; full thin rank when absent.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    no_fix_limbs: bool,
}

#[derive(Args)]
struct SynthExchangeArgs {
    /// Chain artifact of the recipient clip.
    input_a: PathBuf,
    /// Chain artifact of the style donor.
    input_b: PathBuf,
    output: PathBuf,
    /// Zero-based index of the term to exchange.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    no_fix_limbs: bool,
}

#[derive(Args)]
struct FixLimbsArgs {
    input: PathBuf,
    output: PathBuf,
    /// Take reference lengths from this clip instead of the skeleton.
    #[arg(long)]
    measure_from: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML or JSON configuration file.
    config: PathBuf,
    #[arg(long)]
    input_a: Option<PathBuf>,
    #[arg(long)]
    input_b: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override synth.mode ("blend" or "exchange").
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    no_fix_limbs: bool,
}

fn parse_constraint(name: &str) -> Result<motion_style::decompose::WeightConstraint> {
    use motion_style::decompose::WeightConstraint;
    match name {
        "identity" => Ok(WeightConstraint::Identity),
        "box01" => Ok(WeightConstraint::Box01),
        other => Err(Error::InvalidArgument(format!(
            "constraint must be \"identity\" or \"box01\", got {other:?}"
        ))),
    }
}

fn parse_schedule(text: &str) -> Result<Vec<SparsityBudget>> {
    text.split(',')
        .map(|part| {
            let f: f64 = part
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad schedule entry {part:?}")))?;
            SparsityBudget::fraction(f)
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let quiet = cli.quiet;
    let progress = |msg: &str| {
        if !quiet {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::Convert(args) => {
            let clip = load_any_clip(&args.input)?;
            match args.output.extension().and_then(|e| e.to_str()) {
                Some("csv") => {
                    let mut buf = Vec::new();
                    export_csv(&clip, &mut buf)?;
                    std::fs::write(&args.output, buf)?;
                }
                _ => save_clip(&args.output, &clip, None)?,
            }
            progress(&format!("wrote {}", args.output.display()));
        }
        Command::Info(args) => {
            let clip = load_any_clip(&args.input)?;
            println!("frames: {}", clip.num_frames());
            println!("joints: {}", clip.num_joints());
            println!("fps: {}", clip.fps);
            println!(
                "duration: {:.3}s",
                clip.num_frames() as f64 / clip.fps
            );
            let lengths = measure_limb_lengths(&clip);
            for (j, name) in clip.skeleton.joint_names.iter().enumerate() {
                let parent = clip.skeleton.parents[j]
                    .map_or("-".to_string(), |p| clip.skeleton.joint_names[p].clone());
                println!("joint {j}: {name} (parent {parent}, bone {:.4})", lengths[j]);
            }
        }
        Command::Normalize(args) => {
            let clip = load_any_clip(&args.input)?;
            let (x, stats) = normalize(&clip)?;
            let doc = serde_json::json!({
                "rows": x.nrows(),
                "cols": x.ncols(),
                "matrix": x.iter().copied().collect::<Vec<f64>>(),
                "mean_pose": stats.mean_pose.to_vec(),
                "std": stats.std.to_vec(),
            });
            std::fs::write(&args.output, serde_json::to_string_pretty(&doc)?)?;
            progress(&format!("wrote {}", args.output.display()));
        }
        Command::Warp(args) => {
            let a = load_any_clip(&args.input_a)?;
            let b = load_any_clip(&args.input_b)?;
            let axis: Axis3 = args.axis.parse()?;
            let sig_a = foot_signal(&a, &args.joint, axis)?;
            let sig_b = foot_signal(&b, &args.joint, axis)?;
            let (path, cost) = dtw_align(&sig_a, &sig_b, args.band)?;
            let (wa, wb) = warp_pair(&a, &b, &path)?;
            save_clip(&args.out_a, &wa, None)?;
            save_clip(&args.out_b, &wb, None)?;
            println!("cost: {cost:.6}");
            println!("aligned_frames: {}", path.len());
        }
        Command::Decompose(args) => {
            let clip = load_any_clip(&args.input)?;
            let (x, stats) = normalize(&clip)?;
            let budget = match args.count {
                Some(c) => SparsityBudget::count(c)?,
                None => SparsityBudget::fraction(args.fraction)?,
            };
            let opts = motion_style::decompose::DecomposeOptions {
                constraint: parse_constraint(&args.constraint)?,
                ..Default::default()
            };
            let start = Instant::now();
            let dec = decompose_with(x.view(), args.k, budget, args.outer_iters, &opts)?;
            progress(&format!(
                "decompose: objective {:.6} in {:.3}s",
                dec.objective_trace.last().unwrap(),
                start.elapsed().as_secs_f64()
            ));
            let artifact = DecompositionArtifact {
                decomposition: dec,
                stats,
                skeleton: clip.skeleton,
                fps: clip.fps,
            };
            save_decomposition(&args.output, &artifact, None)?;
            progress(&format!("wrote {}", args.output.display()));
        }
        Command::Chain(args) => {
            let clip = load_any_clip(&args.input)?;
            let (x, stats) = normalize(&clip)?;
            let schedule = parse_schedule(&args.schedule)?;
            let start = Instant::now();
            let chain = extract_basic_chain(
                x.view(),
                &schedule,
                args.k,
                args.outer_iters,
                &Default::default(),
            )?;
            progress(&format!(
                "chain: {} terms in {:.3}s",
                chain.terms.len(),
                start.elapsed().as_secs_f64()
            ));
            let artifact = ChainArtifact {
                chain,
                stats,
                skeleton: clip.skeleton,
                fps: clip.fps,
            };
            save_chain(&args.output, &artifact, None)?;
            progress(&format!("wrote {}", args.output.display()));
        }
        Command::SynthBlend(args) => {
            let a = load_decomposition(&args.input_a)?;
            let b = load_decomposition(&args.input_b)?;
            let mut core_a = core_decompose(&a.decomposition)?;
            if let Some(rank) = args.rank {
                core_a = core_a.truncate(rank);
            }
            let foreign = project_into_basis(&core_a, &b.decomposition)?;
            let x = blend_cores(&core_a, foreign.view(), args.alpha)?;
            let clip = synthesize_clip(x.view(), &a.stats, &a.skeleton, a.fps)?;
            let clip = if args.no_fix_limbs {
                clip
            } else {
                enforce_limb_lengths(&clip, &clip.skeleton.ref_bone_lengths.clone())?
            };
            save_clip(&args.output, &clip, None)?;
            progress(&format!("wrote {}", args.output.display()));
        }
        Command::SynthExchange(args) => {
            let a = load_chain(&args.input_a)?;
            let b = load_chain(&args.input_b)?;
            let cores_a = core_decompose_chain(&a.chain)?;
            let cores_b = core_decompose_chain(&b.chain)?;
            let x = exchange_basic(&cores_a, &cores_b, args.index)?;
            let clip = synthesize_clip(x.view(), &a.stats, &a.skeleton, a.fps)?;
            let clip = if args.no_fix_limbs {
                clip
            } else {
                enforce_limb_lengths(&clip, &clip.skeleton.ref_bone_lengths.clone())?
            };
            save_clip(&args.output, &clip, None)?;
            progress(&format!("wrote {}", args.output.display()));
        }
        Command::FixLimbs(args) => {
            let clip = load_any_clip(&args.input)?;
            let refs = match &args.measure_from {
                Some(path) => measure_limb_lengths(&load_any_clip(path)?),
                None => clip.skeleton.ref_bone_lengths.clone(),
            };
            let fixed = enforce_limb_lengths(&clip, &refs)?;
            save_clip(&args.output, &fixed, None)?;
            progress(&format!("wrote {}", args.output.display()));
        }
        Command::Pipeline(args) => {
            let mut config = PipelineConfig::load(&args.config)?;
            if let Some(p) = args.input_a {
                config.io.input_a = p;
            }
            if let Some(p) = args.input_b {
                config.io.input_b = p;
            }
            if let Some(p) = args.out_dir {
                config.io.out_dir = p;
            }
            if let Some(mode) = args.mode {
                config.synth.mode = mode;
            }
            if let Some(alpha) = args.alpha {
                config.synth.alpha = alpha;
            }
            if let Some(k) = args.k {
                config.decompose.k = k;
            }
            if let Some(f) = args.fraction {
                config.decompose.f = f;
            }
            if args.no_fix_limbs {
                config.synth.no_fix_limbs = true;
            }
            let outputs = run_pipeline(&config, progress)?;
            println!("{}", outputs.output.display());
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 2,
        Error::Numerical(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let doc = serde_json::json!({
                "error": format!("{err}"),
                "exit_code": exit_code(&err),
            });
            eprintln!("{doc}");
            ExitCode::from(exit_code(&err))
        }
    }
}
