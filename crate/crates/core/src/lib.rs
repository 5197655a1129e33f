pub mod error;
pub mod kernels;
pub mod model;
pub mod params;
pub mod partition;
pub mod chain;
pub mod simulate;
pub mod posterior;
pub mod io;
pub mod commands;
