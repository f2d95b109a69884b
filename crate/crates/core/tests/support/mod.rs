//! Oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

pub mod env_suite;
pub mod fd;
