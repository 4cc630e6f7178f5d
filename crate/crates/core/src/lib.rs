//! Control of set-valued evolutions by a repelling agent.
//!
//! A moving point agent pushes every point of a planar region away from
//! itself with speed `phi(|x - agent|)`. This crate classifies scare
//! functions `phi`, flows sets under agent and boundary-distributed fields,
//! synthesizes agent schedules that confine a set to a prescribed moving
//! target or reproduce a sweeping process, and checks the resulting
//! evolutions against analytic bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod fields;
pub mod geometry;
pub mod quad;
pub mod scare;
pub mod synthesis;
