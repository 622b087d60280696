//! Ingestion, normalization, aggregation, windowing and synthetic data.

mod ingest;
mod normalize;
mod synth;
mod window;

pub use ingest::{load_csv, parse_csv, render_csv, write_csv};
pub use normalize::{minmax_apply, minmax_fit, NormStats};
pub use synth::{synth_generate, Injection, InjectionKind, SeriesSpec, SynthSpec};
pub use window::{aggregate, sliding_windows, split_chronological};
