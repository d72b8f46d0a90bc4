//! On-disk artifacts for decompositions and basic-motion chains. Weights are
//! stored dense row-major, components as sparse (row, col, value) triples;
//! numbers follow the same 9-significant-digit contract as clips.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::decompose::{BasicMotionChain, BasicMotionTerm, Decomposition};
use crate::error::{Error, Result};
use crate::motion_io::{quantize, NormStats, Skeleton};
use crate::sparse::SparsityBudget;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

/// A decomposition plus everything needed to turn a synthesized matrix back
/// into a clip: normalization statistics, skeleton, frame rate.
#[derive(Debug, Clone)]
pub struct DecompositionArtifact {
    pub decomposition: Decomposition,
    pub stats: NormStats,
    pub skeleton: Skeleton,
    pub fps: f64,
}

/// A basic-motion chain with the same clip context as
/// [`DecompositionArtifact`].
#[derive(Debug, Clone)]
pub struct ChainArtifact {
    pub chain: BasicMotionChain,
    pub stats: NormStats,
    pub skeleton: Skeleton,
    pub fps: f64,
}

#[derive(Serialize, Deserialize)]
struct SkeletonDoc {
    joint_names: Vec<String>,
    parents: Vec<i64>,
    ref_bone_lengths: Vec<f64>,
}

impl SkeletonDoc {
    fn from(s: &Skeleton) -> Self {
        SkeletonDoc {
            joint_names: s.joint_names.clone(),
            parents: s.parents.iter().map(|p| p.map_or(-1, |v| v as i64)).collect(),
            ref_bone_lengths: s.ref_bone_lengths.iter().map(|&v| quantize(v)).collect(),
        }
    }

    fn into_skeleton(self) -> Result<Skeleton> {
        let n = self.joint_names.len();
        let mut parents = Vec::with_capacity(n);
        for &p in &self.parents {
            parents.push(match p {
                -1 => None,
                v if v >= 0 && (v as usize) < n => Some(v as usize),
                v => return Err(Error::Schema(format!("invalid parent index {v}"))),
            });
        }
        Skeleton::new(self.joint_names, parents, self.ref_bone_lengths)
            .map_err(|e| Error::Schema(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct StatsDoc {
    mean_pose: Vec<f64>,
    std: Vec<f64>,
}

impl StatsDoc {
    fn from(s: &NormStats) -> Self {
        StatsDoc {
            mean_pose: s.mean_pose.iter().map(|&v| quantize(v)).collect(),
            std: s.std.iter().map(|&v| quantize(v)).collect(),
        }
    }

    fn into_stats(self) -> Result<NormStats> {
        if self.mean_pose.len() != self.std.len() {
            return Err(Error::Schema("norm stats lengths disagree".into()));
        }
        if self.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Schema("norm stats std must be positive".into()));
        }
        Ok(NormStats {
            mean_pose: Array1::from(self.mean_pose),
            std: Array1::from(self.std),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DecompositionDoc {
    k: usize,
    sparsity: SparsityBudget,
    w_rows: usize,
    w: Vec<f64>,
    c_rows: usize,
    c_cols: usize,
    /// Non-zero entries of C as (row, col, value).
    c_triples: Vec<(usize, usize, f64)>,
    objective_trace: Vec<f64>,
}

impl DecompositionDoc {
    fn from(d: &Decomposition) -> Self {
        let mut triples = Vec::new();
        for ((i, j), &v) in d.c.indexed_iter() {
            if v != 0.0 {
                triples.push((i, j, quantize(v)));
            }
        }
        DecompositionDoc {
            k: d.num_components(),
            sparsity: d.sparsity,
            w_rows: d.w.nrows(),
            w: d.w.iter().map(|&v| quantize(v)).collect(),
            c_rows: d.c.nrows(),
            c_cols: d.c.ncols(),
            c_triples: triples,
            objective_trace: d.objective_trace.iter().map(|&v| quantize(v)).collect(),
        }
    }

    fn into_decomposition(self) -> Result<Decomposition> {
        if self.w.len() != self.w_rows * self.k || self.c_rows != self.k {
            return Err(Error::Schema("decomposition shapes are inconsistent".into()));
        }
        if self.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("non-finite weight value".into()));
        }
        let w = Array2::from_shape_vec((self.w_rows, self.k), self.w)
            .map_err(|e| Error::Schema(e.to_string()))?;
        let mut c = Array2::zeros((self.c_rows, self.c_cols));
        for (i, j, v) in self.c_triples {
            if i >= self.c_rows || j >= self.c_cols {
                return Err(Error::Schema(format!("component triple ({i}, {j}) out of range")));
            }
            if !v.is_finite() {
                return Err(Error::Schema("non-finite component value".into()));
            }
            c[[i, j]] = v;
        }
        Ok(Decomposition {
            w,
            c,
            sparsity: self.sparsity,
            objective_trace: self.objective_trace,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DecompositionArtifactDoc {
    version: u32,
    decomposition: DecompositionDoc,
    norm_stats: StatsDoc,
    skeleton: SkeletonDoc,
    fps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ChainArtifactDoc {
    version: u32,
    terms: Vec<DecompositionDoc>,
    /// Final residual, dense row-major.
    residual_rows: usize,
    residual_cols: usize,
    residual: Vec<f64>,
    norm_stats: StatsDoc,
    skeleton: SkeletonDoc,
    fps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

fn check_version(version: u32) -> Result<()> {
    if version != ARTIFACT_FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported artifact version {version} (expected {ARTIFACT_FORMAT_VERSION})"
        )));
    }
    Ok(())
}

pub fn save_decomposition_string(
    artifact: &DecompositionArtifact,
    config_hash: Option<&str>,
) -> Result<String> {
    let doc = DecompositionArtifactDoc {
        version: ARTIFACT_FORMAT_VERSION,
        decomposition: DecompositionDoc::from(&artifact.decomposition),
        norm_stats: StatsDoc::from(&artifact.stats),
        skeleton: SkeletonDoc::from(&artifact.skeleton),
        fps: quantize(artifact.fps),
        config_hash: config_hash.map(String::from),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn save_decomposition(
    path: &Path,
    artifact: &DecompositionArtifact,
    config_hash: Option<&str>,
) -> Result<()> {
    std::fs::write(path, save_decomposition_string(artifact, config_hash)?)?;
    Ok(())
}

pub fn load_decomposition_str(text: &str) -> Result<DecompositionArtifact> {
    let doc: DecompositionArtifactDoc =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    check_version(doc.version)?;
    Ok(DecompositionArtifact {
        decomposition: doc.decomposition.into_decomposition()?,
        stats: doc.norm_stats.into_stats()?,
        skeleton: doc.skeleton.into_skeleton()?,
        fps: doc.fps,
    })
}

pub fn load_decomposition(path: &Path) -> Result<DecompositionArtifact> {
    load_decomposition_str(&std::fs::read_to_string(path)?)
}

pub fn save_chain_string(artifact: &ChainArtifact, config_hash: Option<&str>) -> Result<String> {
    let doc = ChainArtifactDoc {
        version: ARTIFACT_FORMAT_VERSION,
        terms: artifact
            .chain
            .terms
            .iter()
            .map(|t| DecompositionDoc::from(&t.decomposition))
            .collect(),
        residual_rows: artifact.chain.residual.nrows(),
        residual_cols: artifact.chain.residual.ncols(),
        residual: artifact.chain.residual.iter().map(|&v| quantize(v)).collect(),
        norm_stats: StatsDoc::from(&artifact.stats),
        skeleton: SkeletonDoc::from(&artifact.skeleton),
        fps: quantize(artifact.fps),
        config_hash: config_hash.map(String::from),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn save_chain(path: &Path, artifact: &ChainArtifact, config_hash: Option<&str>) -> Result<()> {
    std::fs::write(path, save_chain_string(artifact, config_hash)?)?;
    Ok(())
}

pub fn load_chain_str(text: &str) -> Result<ChainArtifact> {
    let doc: ChainArtifactDoc =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    check_version(doc.version)?;
    if doc.residual.len() != doc.residual_rows * doc.residual_cols {
        return Err(Error::Schema("residual shape is inconsistent".into()));
    }
    let residual = Array2::from_shape_vec((doc.residual_rows, doc.residual_cols), doc.residual)
        .map_err(|e| Error::Schema(e.to_string()))?;
    let terms = doc
        .terms
        .into_iter()
        .map(|t| Ok(BasicMotionTerm { decomposition: t.into_decomposition()? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainArtifact {
        chain: BasicMotionChain { terms, residual },
        stats: doc.norm_stats.into_stats()?,
        skeleton: doc.skeleton.into_skeleton()?,
        fps: doc.fps,
    })
}

pub fn load_chain(path: &Path) -> Result<ChainArtifact> {
    load_chain_str(&std::fs::read_to_string(path)?)
}
