//! End-to-end pipeline: load, subsample, warp, normalize, decompose,
//! synthesize, limb-fix, save. Every stage writes its artifact into the
//! output directory so runs can be resumed from any stage, and each artifact
//! embeds the hash of the configuration that produced it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::{
    save_chain, save_decomposition, ChainArtifact, DecompositionArtifact,
};
use crate::decompose::{
    decompose_with, extract_basic_chain, DecomposeOptions, WeightConstraint,
};
use crate::dtw::{dtw_align, foot_signal, warp_pair, Axis3};
use crate::error::{Error, Result};
use crate::motion_io::{bvh_to_clip, load_clip, normalize, parse_bvh, save_clip, MotionClip};
use crate::postprocess::enforce_limb_lengths;
use crate::sparse::SparsityBudget;
use crate::synth::{
    blend_cores, core_decompose, core_decompose_chain, exchange_basic, project_into_basis,
    synthesize_clip,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IoConfig {
    /// Style recipient; its statistics, skeleton and fps shape the output.
    pub input_a: PathBuf,
    /// Style donor.
    pub input_b: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DtwConfig {
    pub joint: String,
    pub axis: String,
    pub band: Option<usize>,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig {
            joint: "LeftFoot".into(),
            axis: "y".into(),
            band: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeConfig {
    pub k: usize,
    /// Component sparsity as a fraction of non-zero entries.
    pub f: f64,
    /// Sparsity schedule for basic-motion chains (exchange mode).
    pub schedule: Option<Vec<f64>>,
    pub outer_iters: usize,
    pub tol: f64,
    /// "identity" or "box01".
    pub weight_constraint: String,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            k: 10,
            f: 0.1,
            schedule: None,
            outer_iters: 20,
            tol: 1e-8,
            weight_constraint: "identity".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// "blend" or "exchange".
    pub mode: String,
    pub alpha: f64,
    /// Retained singular directions; full thin rank when absent.
    pub rank: Option<usize>,
    /// Zero-based chain term to exchange (exchange mode).
    pub exchange_index: usize,
    /// Skip the limb-length post-processing stage.
    pub no_fix_limbs: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            mode: "blend".into(),
            alpha: 0.5,
            rank: None,
            exchange_index: 0,
            no_fix_limbs: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub io: IoConfig,
    /// Optional joint-name selection applied right after loading.
    #[serde(default)]
    pub joints: Option<Vec<String>>,
    #[serde(default = "default_target_fps")]
    pub target_fps: f64,
    #[serde(default)]
    pub dtw: DtwConfig,
    #[serde(default)]
    pub decompose: DecomposeConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    /// Reserved for randomized stages; recorded in the config hash.
    #[serde(default)]
    pub seed: u64,
}

fn default_target_fps() -> f64 {
    30.0
}

impl PipelineConfig {
    /// Load from TOML or JSON, decided by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| Error::Schema(e.to_string()))
        }
    }

    /// Short hash of the processing configuration; embedded in every
    /// artifact. Input/output locations are excluded so the same parameters
    /// on the same data produce identical artifacts anywhere.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("config is an object").remove("io");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for path in [&self.io.input_a, &self.io.input_b] {
            if !path.exists() {
                return Err(Error::InvalidArgument(format!(
                    "input file {} does not exist",
                    path.display()
                )));
            }
        }
        self.dtw.axis.parse::<Axis3>()?;
        if self.decompose.k == 0 {
            return Err(Error::InvalidArgument("decompose.k must be >= 1".into()));
        }
        SparsityBudget::fraction(self.decompose.f)?;
        if let Some(schedule) = &self.decompose.schedule {
            if schedule.is_empty() {
                return Err(Error::InvalidArgument("empty sparsity schedule".into()));
            }
            for &f in schedule {
                SparsityBudget::fraction(f)?;
            }
        }
        if !(0.0..=1.0).contains(&self.synth.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in [0, 1], got {}",
                self.synth.alpha
            )));
        }
        if !(self.target_fps > 0.0) {
            return Err(Error::InvalidArgument("target_fps must be positive".into()));
        }
        self.weight_constraint()?;
        match self.synth.mode.as_str() {
            "blend" => Ok(()),
            "exchange" => {
                let len = self.decompose.schedule.as_ref().map_or(1, |s| s.len());
                if self.synth.exchange_index >= len {
                    return Err(Error::InvalidArgument(format!(
                        "exchange_index {} out of range for schedule of length {len}",
                        self.synth.exchange_index
                    )));
                }
                Ok(())
            }
            other => Err(Error::InvalidArgument(format!(
                "synth.mode must be \"blend\" or \"exchange\", got {other:?}"
            ))),
        }
    }

    pub fn weight_constraint(&self) -> Result<WeightConstraint> {
        match self.decompose.weight_constraint.as_str() {
            "identity" => Ok(WeightConstraint::Identity),
            "box01" => Ok(WeightConstraint::Box01),
            other => Err(Error::InvalidArgument(format!(
                "weight_constraint must be \"identity\" or \"box01\", got {other:?}"
            ))),
        }
    }

    pub fn decompose_options(&self) -> Result<DecomposeOptions> {
        Ok(DecomposeOptions {
            sparse_tol: self.decompose.tol,
            constraint: self.weight_constraint()?,
            ..DecomposeOptions::default()
        })
    }
}

/// Load a clip from the canonical JSON format or, for `.bvh` files, by
/// parsing and running forward kinematics.
pub fn load_any_clip(path: &Path) -> Result<MotionClip> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bvh") => {
            let text = std::fs::read_to_string(path)?;
            bvh_to_clip(&parse_bvh(&text)?)
        }
        _ => load_clip(path),
    }
}

/// Paths of everything a pipeline run wrote, plus the final clip itself
/// (exact, before serialization rounding).
#[derive(Debug)]
pub struct PipelineOutputs {
    pub warped_a: PathBuf,
    pub warped_b: PathBuf,
    pub synthesized_raw: PathBuf,
    pub output: PathBuf,
    pub output_clip: MotionClip,
}

/// Run the whole pipeline. `log` receives one line per completed stage.
pub fn run_pipeline(config: &PipelineConfig, mut log: impl FnMut(&str)) -> Result<PipelineOutputs> {
    config.validate()?;
    let hash = config.hash();
    let out = &config.io.out_dir;
    std::fs::create_dir_all(out)?;
    let stage = |name: &str, start: Instant, log: &mut dyn FnMut(&str)| {
        log(&format!("{name}: {:.3}s", start.elapsed().as_secs_f64()));
    };

    let t = Instant::now();
    let mut clip_a = load_any_clip(&config.io.input_a)?;
    let mut clip_b = load_any_clip(&config.io.input_b)?;
    if let Some(joints) = &config.joints {
        clip_a = clip_a.select_joints(joints)?;
        clip_b = clip_b.select_joints(joints)?;
    }
    stage("load", t, &mut log);

    let t = Instant::now();
    if clip_a.fps > config.target_fps {
        clip_a = clip_a.subsample(config.target_fps)?;
    }
    if clip_b.fps > config.target_fps {
        clip_b = clip_b.subsample(config.target_fps)?;
    }
    save_clip(&out.join("01_a_subsampled.json"), &clip_a, Some(&hash))?;
    save_clip(&out.join("01_b_subsampled.json"), &clip_b, Some(&hash))?;
    stage("subsample", t, &mut log);

    let t = Instant::now();
    let axis: Axis3 = config.dtw.axis.parse()?;
    let sig_a = foot_signal(&clip_a, &config.dtw.joint, axis)?;
    let sig_b = foot_signal(&clip_b, &config.dtw.joint, axis)?;
    let (path, cost) = dtw_align(&sig_a, &sig_b, config.dtw.band)?;
    let (warped_a, warped_b) = warp_pair(&clip_a, &clip_b, &path)?;
    let warped_a_path = out.join("02_a_warped.json");
    let warped_b_path = out.join("02_b_warped.json");
    save_clip(&warped_a_path, &warped_a, Some(&hash))?;
    save_clip(&warped_b_path, &warped_b, Some(&hash))?;
    log(&format!(
        "dtw: cost {cost:.6}, {} aligned frames",
        path.len()
    ));
    stage("warp", t, &mut log);

    let t = Instant::now();
    let (x_a, stats_a) = normalize(&warped_a)?;
    let (x_b, stats_b) = normalize(&warped_b)?;
    stage("normalize", t, &mut log);

    let t = Instant::now();
    let opts = config.decompose_options()?;
    let synthesized = match config.synth.mode.as_str() {
        "blend" => {
            let budget = SparsityBudget::fraction(config.decompose.f)?;
            let dec_a = decompose_with(
                x_a.view(),
                config.decompose.k,
                budget,
                config.decompose.outer_iters,
                &opts,
            )?;
            let dec_b = decompose_with(
                x_b.view(),
                config.decompose.k,
                budget,
                config.decompose.outer_iters,
                &opts,
            )?;
            log(&format!(
                "decompose: objective a {:.6}, b {:.6}",
                dec_a.objective_trace.last().unwrap(),
                dec_b.objective_trace.last().unwrap()
            ));
            save_decomposition(
                &out.join("03_a_decomposition.json"),
                &DecompositionArtifact {
                    decomposition: dec_a.clone(),
                    stats: stats_a.clone(),
                    skeleton: warped_a.skeleton.clone(),
                    fps: warped_a.fps,
                },
                Some(&hash),
            )?;
            save_decomposition(
                &out.join("03_b_decomposition.json"),
                &DecompositionArtifact {
                    decomposition: dec_b.clone(),
                    stats: stats_b.clone(),
                    skeleton: warped_b.skeleton.clone(),
                    fps: warped_b.fps,
                },
                Some(&hash),
            )?;
            let mut core_a = core_decompose(&dec_a)?;
            if let Some(rank) = config.synth.rank {
                core_a = core_a.truncate(rank);
            }
            let foreign = project_into_basis(&core_a, &dec_b)?;
            blend_cores(&core_a, foreign.view(), config.synth.alpha)?
        }
        "exchange" => {
            let schedule: Vec<SparsityBudget> = config
                .decompose
                .schedule
                .clone()
                .unwrap_or_else(|| vec![config.decompose.f])
                .into_iter()
                .map(SparsityBudget::fraction)
                .collect::<Result<_>>()?;
            let chain_a = extract_basic_chain(
                x_a.view(),
                &schedule,
                config.decompose.k,
                config.decompose.outer_iters,
                &opts,
            )?;
            let chain_b = extract_basic_chain(
                x_b.view(),
                &schedule,
                config.decompose.k,
                config.decompose.outer_iters,
                &opts,
            )?;
            save_chain(
                &out.join("03_a_chain.json"),
                &ChainArtifact {
                    chain: chain_a.clone(),
                    stats: stats_a.clone(),
                    skeleton: warped_a.skeleton.clone(),
                    fps: warped_a.fps,
                },
                Some(&hash),
            )?;
            save_chain(
                &out.join("03_b_chain.json"),
                &ChainArtifact {
                    chain: chain_b.clone(),
                    stats: stats_b.clone(),
                    skeleton: warped_b.skeleton.clone(),
                    fps: warped_b.fps,
                },
                Some(&hash),
            )?;
            let cores_a = core_decompose_chain(&chain_a)?;
            let cores_b = core_decompose_chain(&chain_b)?;
            exchange_basic(&cores_a, &cores_b, config.synth.exchange_index)?
        }
        _ => unreachable!("validated above"),
    };
    stage("synthesize", t, &mut log);

    let t = Instant::now();
    let raw_clip = synthesize_clip(
        synthesized.view(),
        &stats_a,
        &warped_a.skeleton,
        warped_a.fps,
    )?;
    let raw_path = out.join("04_synth_raw.json");
    save_clip(&raw_path, &raw_clip, Some(&hash))?;
    let final_clip = if config.synth.no_fix_limbs {
        raw_clip.clone()
    } else {
        enforce_limb_lengths(&raw_clip, &raw_clip.skeleton.ref_bone_lengths.clone())?
    };
    let output = out.join("05_output.json");
    save_clip(&output, &final_clip, Some(&hash))?;
    stage("postprocess", t, &mut log);

    Ok(PipelineOutputs {
        warped_a: warped_a_path,
        warped_b: warped_b_path,
        synthesized_raw: raw_path,
        output,
        output_clip: final_clip,
    })
}
