//! Non-learned machinery of a pedestrian intrusion detection pipeline.
//!
//! - [`geometry`] and [`mask`]: boxes, AoI rasters, MBR extraction, crop
//!   extension and feature-grid mapping.
//! - [`judge`]: overlap-based intrusion verdicts.
//! - [`detection`]: anchors, NMS and confidence gating.
//! - [`metrics`]: PID_AP, PID_mAP and PID_Acc.
//! - [`dataset`]: annotation files, label fusion and statistics.
//! - [`arch`]: parameter, MAC and receptive-field accounting.
//! - [`sim`]: synthetic scenes, the oracle detector and the pipeline.
//! - [`report`]: text, CSV and JSON report emission.

pub mod arch;
pub mod dataset;
pub mod detection;
pub mod geometry;
pub mod judge;
pub mod mask;
pub mod metrics;
pub mod report;
pub mod sim;
