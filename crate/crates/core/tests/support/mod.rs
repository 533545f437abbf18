#![allow(dead_code)]

pub mod boundaries;
pub mod fixtures;
pub mod oracle;
