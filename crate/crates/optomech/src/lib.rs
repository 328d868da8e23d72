//! File formats, spectral estimation, Monte Carlo campaigns and the command
//! line front end built on `optomech-core`.

pub mod campaign;
pub mod config;
pub mod records;
pub mod spectral;
pub mod io;
pub mod plot;
pub mod cli;
pub mod commands;
