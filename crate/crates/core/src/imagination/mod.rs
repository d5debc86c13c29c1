//! Occluder synthesis: a small generator, activation maximization against
//! a frozen classifier, and the resulting occluder bank.

pub mod am;
pub mod bank;
pub mod generator;

pub use am::{build_bank, synthesize_occluder, AmConfig, AmResult, BankConfig};
pub use bank::{read_bank, render_out_of_domain, write_bank, BankEntry, OccluderBank, OccluderKind};
pub use generator::{train_generator, GeneratorConfig, GeneratorReport, LATENT_WIDTH};
