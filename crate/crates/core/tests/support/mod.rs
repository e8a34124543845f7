#![allow(dead_code)]

pub mod fd;
pub mod gradient_suite;
pub mod invariants;
pub mod oracles;
