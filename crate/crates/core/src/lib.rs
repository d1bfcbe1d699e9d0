//! Core algorithms for turning patch-feature grids into hierarchical entity
//! pseudo-labels.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the clock or threads lives in the `entity-forge` companion
//! crate; here every operation is a pure function of its inputs.
//!
//! Pipeline stages, in the order the explorer runs them:
//!
//! * [`cluster`]: agglomerative merging of patches with threshold snapshots.
//! * [`pool`]: snapshot mixing and mask non-maximum suppression.
//! * [`local`]: zoom-in re-clustering of small candidate regions.
//! * [`refine`]: boundary refinement and the pre/post IoU gate.
//! * [`hierarchy`]: coverage-based forest construction and reconstruction
//!   from ancestor matrices.
//!
//! Alongside the pipeline there is the ancestor-prediction head
//! ([`ancestor`]), the teacher-student filtering math ([`self_correct`]) and a
//! class-agnostic AR/AP evaluator ([`eval`]).
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod ancestor;
pub mod cluster;
pub mod error;
pub mod eval;
pub mod explore;
pub mod grid;
pub mod hierarchy;
pub mod label;
pub mod local;
pub mod pool;
pub mod refine;
pub mod rle;
pub mod self_correct;

pub use error::{Error, Result};
pub use grid::FeatureGrid;
pub use label::{BBox, PseudoLabel, Stage};
pub use rle::{DenseMask, RleMask};
