// SPDX-License-Identifier: Apache-2.0

//! Benchmark task generators, spiky series synthesis, sliding-window
//! forecasting datasets and the on-disk dataset container.

mod dataset;
mod generators;
mod io;
mod series;

pub use dataset::{SegmentIndices, TaskDataset, TaskKind};
pub use generators::{
    draw_segments, gen_arithmetic, gen_identity, gen_rolling_argmax, gen_rolling_average, ArithmeticOp,
    TaskSpec,
};
pub use io::{load_csv_series, write_csv_series};
pub use series::{
    chronological_split, gen_spiky, spike_value, window_series, SeriesWindowSpec, SpikyConfig, SpikyLayout,
    SpikySeries, TargetStat,
};
