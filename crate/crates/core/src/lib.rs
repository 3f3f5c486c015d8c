//! Superpatch matching on superpixel decompositions.
//!
//! This crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//!
//! - [`imaging`]: pixel grids, label maps and seeded random streams.
//! - [`decompose`]: SLIC-style decomposition, label-map import, barycenters,
//!   4-adjacency and raster scan order.
//! - [`features`] and [`superpatch`]: per-superpixel descriptors, superpatch
//!   construction and the barycenter-weighted superpatch distance.
//! - [`spm`]: the randomized k-ANN correspondence search (initialization,
//!   angle-guided propagation, decaying random search) over an exemplar library.
//! - [`labeling`]: weighted label fusion over the k matches and α-expansion
//!   regularization on the superpixel graph.
//! - [`harness`]: brute-force oracle, accuracy/Dice/ROC metrics,
//!   displacement fields and flow-wheel rendering.
//!
//! File formats, caching, parallel execution and the command line live in
//! the companion `superpatch` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod decompose;
pub mod features;
pub mod harness;
pub mod imaging;
pub mod labeling;
pub mod maxflow;
pub mod spm;
pub mod superpatch;

pub use error::{Error, Result};

pub use decompose::{slic_decompose, Decomposition, SlicParams, SuperpixelRecord};
pub use features::{FeatureConfig, FeatureKind, FeatureTable};
pub use imaging::{ImageGrid, LabelMap, RandomSource};
pub use labeling::{label_fusion, regularize, FusionParams, LabelFusionMap, Labeling};
pub use spm::{spm_search, AnnField, ExemplarLibrary, FeaturedImage, Match, SpmParams};
pub use superpatch::{DistanceParams, FeatureMetric, SuperPatch, WeightMode};
