//! Long-term maintenance of 2D feature maps for vehicle localization.
//!
//! A [`map::PriorMap`] of poles and building corners is localized against
//! with [`localization`] and [`matcher`], and kept current by three layers:
//! a detectability grid ([`sensor_model`]), per-feature visibility records
//! that let transient features be purged ([`visibility`], [`occlusion`]),
//! and a staging area for features that appear ([`new_features`]).
//! [`sim`] provides a synthetic world that changes week by week, and
//! [`campaign`] runs the whole loop over it.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod config;
pub mod drive;
pub mod error;
pub mod geometry;
pub mod io;
pub mod localization;
pub mod map;
pub mod matcher;
pub mod new_features;
pub mod occlusion;
pub mod pipeline;
pub mod render;
pub mod sensor_model;
pub mod sim;
pub mod visibility;

pub use error::{Error, Result};

// The guide's code blocks run as doctests so the book cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/geometry.md")]
    pub struct Geometry;
    #[doc = include_str!("../../../book/src/sensor-model.md")]
    pub struct SensorModel;
    #[doc = include_str!("../../../book/src/visibility.md")]
    pub struct Visibility;
    #[doc = include_str!("../../../book/src/occlusion.md")]
    pub struct Occlusion;
    #[doc = include_str!("../../../book/src/matching.md")]
    pub struct Matching;
    #[doc = include_str!("../../../book/src/new-features.md")]
    pub struct NewFeatures;
    #[doc = include_str!("../../../book/src/localization.md")]
    pub struct Localization;
    #[doc = include_str!("../../../book/src/simulator.md")]
    pub struct Simulator;
    #[doc = include_str!("../../../book/src/campaigns.md")]
    pub struct Campaigns;
}
