//! The sixteen-candidate segmentation bank.
//!
//! Candidates are produced in a fixed order so that an index typed by the
//! annotator means the same thing on every image and every session:
//!
//! | index  | method                                         |
//! |--------|------------------------------------------------|
//! | 1..=3  | Otsu on R, G, B                                |
//! | 4..=6  | Otsu on H, S, V                                |
//! | 7..=9  | Otsu on L*, a*, b*                             |
//! | 10..=15| RGB k-means clusters {1},{2},{3},{1,2},{1,3},{2,3} |
//! | 16     | gradient-weighted (RATS) threshold on intensity |
//!
//! Index 0 is reserved for "none of these".
//!
//! Thresholded candidates mark the dark side of the threshold as foreground
//! under [`Polarity::Normal`] (dark text on a light background). Under
//! [`Polarity::Inverted`] every mask of the normal bank is complemented.

pub mod kmeans;
pub mod otsu;
pub mod rats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::raster::{intensity, split_rgb, to_hsv, to_lab, BinaryMask, GrayPlane, PlaneTag, WordImage};

pub use kmeans::{cluster_masks, fit_three_clusters, fit_three_clusters_with, ClusterModel, KMeansOptions};
pub use otsu::otsu_threshold;
pub use rats::rats_threshold;

pub const BANK_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Text darker than its background.
    #[default]
    Normal,
    /// Text lighter than its background.
    Inverted,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Normal => "normal",
            Polarity::Inverted => "inverted",
        })
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(Polarity::Normal),
            "inverted" => Ok(Polarity::Inverted),
            other => Err(format!("unknown polarity `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    ConstantPlane,
    ZeroGradient,
    DegenerateColors,
    EmptyCluster,
}

/// Output of a global thresholding method.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholded {
    pub threshold: f64,
    pub mask: BinaryMask,
    pub degenerate: Option<Degeneracy>,
}

/// How one candidate was produced. Serialises as a compact text token:
/// `otsu:R:t=142`, `cluster:{1,3}`, `rats:t=117.4`.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodDescriptor {
    Otsu { plane: PlaneTag, threshold: u8 },
    Cluster { subset: Vec<u8> },
    Rats { threshold: f64 },
}

impl fmt::Display for MethodDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodDescriptor::Otsu { plane, threshold } => write!(f, "otsu:{plane}:t={threshold}"),
            MethodDescriptor::Cluster { subset } => {
                let parts: Vec<String> = subset.iter().map(u8::to_string).collect();
                write!(f, "cluster:{{{}}}", parts.join(","))
            }
            MethodDescriptor::Rats { threshold } => write!(f, "rats:t={threshold}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed method descriptor `{0}`")]
pub struct DescriptorParseError(pub String);

impl FromStr for MethodDescriptor {
    type Err = DescriptorParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DescriptorParseError(s.to_string());
        if let Some(rest) = s.strip_prefix("otsu:") {
            let (plane, t) = rest.split_once(":t=").ok_or_else(bad)?;
            return Ok(MethodDescriptor::Otsu {
                plane: PlaneTag::parse(plane).ok_or_else(bad)?,
                threshold: t.parse().map_err(|_| bad())?,
            });
        }
        if let Some(rest) = s.strip_prefix("cluster:") {
            let inner = rest
                .strip_prefix('{')
                .and_then(|r| r.strip_suffix('}'))
                .ok_or_else(bad)?;
            let subset = inner
                .split(',')
                .map(|p| p.trim().parse::<u8>().ok().filter(|k| (1..=3).contains(k)))
                .collect::<Option<Vec<u8>>>()
                .ok_or_else(bad)?;
            return Ok(MethodDescriptor::Cluster { subset });
        }
        if let Some(t) = s.strip_prefix("rats:t=") {
            let threshold: f64 = t.parse().map_err(|_| bad())?;
            if !threshold.is_finite() {
                return Err(bad());
            }
            return Ok(MethodDescriptor::Rats { threshold });
        }
        Err(bad())
    }
}

impl Serialize for MethodDescriptor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodDescriptor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub method: MethodDescriptor,
    pub mask: BinaryMask,
    pub degenerate: Option<Degeneracy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateBank {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub polarity: Polarity,
    candidates: Vec<Candidate>,
}

impl CandidateBank {
    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    /// Candidate by its one-based index. Index 0 ("none") and anything above
    /// 16 return `None`.
    pub fn get(&self, index: usize) -> Option<&Candidate> {
        index.checked_sub(1).and_then(|i| self.candidates.get(i))
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

pub fn invert_mask(mask: &BinaryMask) -> BinaryMask {
    mask.complement()
}

/// Candidate from a global threshold, with the dark side as foreground.
/// Degenerate results stay all-background.
fn threshold_candidate(out: Thresholded, method: MethodDescriptor) -> Candidate {
    let mask = if out.degenerate.is_some() {
        out.mask
    } else {
        out.mask.complement()
    };
    Candidate {
        method,
        mask,
        degenerate: out.degenerate,
    }
}

fn otsu_candidate(plane: &GrayPlane) -> Candidate {
    let out = otsu_threshold(plane);
    let method = MethodDescriptor::Otsu {
        plane: plane.tag(),
        threshold: out.threshold as u8,
    };
    threshold_candidate(out, method)
}

/// Build the sixteen candidates for `img`. Deterministic in `(img, polarity, seed)`.
pub fn build_bank(img: &WordImage, polarity: Polarity, seed: u64) -> CandidateBank {
    let mut candidates = Vec::with_capacity(BANK_SIZE);

    let (r, g, b) = split_rgb(img);
    let (h, s, v) = to_hsv(img);
    let (l, a, lb) = to_lab(img);
    for plane in [&r, &g, &b, &h, &s, &v, &l, &a, &lb] {
        candidates.push(otsu_candidate(plane));
    }

    let model = fit_three_clusters(img, seed);
    let sizes = model.cluster_sizes();
    for (mask, subset) in cluster_masks(&model).into_iter().zip(kmeans::CLUSTER_SUBSETS) {
        let degenerate = if subset.iter().all(|&k| sizes[(k - 1) as usize] == 0) {
            Some(if model.degenerate {
                Degeneracy::DegenerateColors
            } else {
                Degeneracy::EmptyCluster
            })
        } else {
            None
        };
        candidates.push(Candidate {
            method: MethodDescriptor::Cluster {
                subset: subset.to_vec(),
            },
            mask,
            degenerate,
        });
    }

    let rats = rats_threshold(&intensity(img));
    let method = MethodDescriptor::Rats {
        threshold: rats.threshold,
    };
    candidates.push(threshold_candidate(rats, method));

    if polarity == Polarity::Inverted {
        for c in &mut candidates {
            c.mask = invert_mask(&c.mask);
        }
    }

    debug_assert_eq!(candidates.len(), BANK_SIZE);
    CandidateBank {
        image_id: img.id().to_string(),
        width: img.width(),
        height: img.height(),
        polarity,
        candidates,
    }
}
