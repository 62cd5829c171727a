//! Command-line front end for `mincseg`.

pub mod args;
pub mod commands;
pub mod legend;
pub mod palette;

pub use args::Cli;
pub use commands::run;
