//! The trajectory generator: conditional sampling, spatiotemporal
//! encoding, global context attention and recurrent bipartite matching.

mod lsa;
mod model;
mod sample;

pub use lsa::{lsa_solve, Assignment};
pub use model::{
    encode_points, normalized_cell, time_one_hot, GeneratorConfig, GeneratorOutput, Generator, MatchCost,
};
pub use sample::{conditional_sample, generation_seed, sample_day, SampledPointSet};
