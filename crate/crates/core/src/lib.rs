// SPDX-License-Identifier: Apache-2.0

//! Hierarchical macro placement.
//!
//! The flow turns a logical module tree into a multilevel cluster tree,
//! derives shape functions for every cluster, and places clusters and macros
//! top-down with sequence-pair annealing inside a fixed outline.

pub mod annealer;
pub mod clustering;
pub mod dataflow;
pub mod io;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod placer;
pub mod shaping;

pub use annealer::{SaSchedule, SequencePair};
pub use io::{IoError, MetricsReport, PlacementResult};
pub use model::{
    ClusterGraph, ClusterId, ClusterKind, DesignDatabase, InstId, Orientation, PhysicalCluster,
    PhysicalHierarchy, Rect,
};
pub use shaping::ShapeCurve;
