//! Individual space–time accessibility to leisure opportunities.
//!
//! The crate builds multimodal travel-time matrices from GTFS timetables and
//! a road edge list, derives each person's feasible set of leisure locations
//! under a travel-time budget for a work→leisure→home trip chain, tests how
//! selectively observed visits are drawn from that set, measures leisure
//! location diversity, and fits a weighted recursive path model.

pub mod access;
pub mod behavior;
pub mod ingest;
pub mod pathmodel;
pub mod pipeline;
pub mod router;
pub mod spatial;
pub mod stats;
pub mod synth;
