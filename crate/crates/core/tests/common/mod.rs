#![allow(dead_code)]

pub mod cases;
pub mod fd;
pub mod oracle;
pub mod toy;
