pub mod backend;
pub mod controller;
pub mod dataset;
pub mod eval;
pub mod hlp;
pub mod http;
pub mod lowlevel;
pub mod planner;
pub mod prompting;
pub mod retriever;
pub mod sim;
pub mod suite;
pub mod types;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
