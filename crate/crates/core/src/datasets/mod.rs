//! Sequences, synthetic generators, normalization, splitting and the
//! plain-text sequence file format.

mod bundle;
mod generators;
mod io;
mod sequence;

pub use bundle::{normalize, split, DatasetBundle, NormalizationRecord, SplitRatios};
pub use generators::{
    example41_model, example42_model, generate_example41, generate_example42,
    generate_nonlinear_cts, symbols_of, Example42Data, NonlinearData, NonlinearSpec,
};
pub use io::{format_value, load_sequences, parse_sequences, save_sequences, sequences_to_text};
pub use sequence::{common_obs_dim, Sequence};
