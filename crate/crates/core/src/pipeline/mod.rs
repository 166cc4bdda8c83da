//! From annotated recordings to labelled windows.

pub mod intervals;
pub mod recording;
pub mod synth;
pub mod windows;

pub use intervals::{find_lead_seizures, label_intervals, IntervalState, LabeledInterval, TimingPolicy};
pub use recording::{read_recording, write_recording, write_recording_csv, Recording, Seizure};
pub use synth::{generate_synthetic, SyntheticProfile};
pub use windows::{
    extract_windows, split_train_validation, window_count, window_points, window_starts,
    windows_for_recording, Label, WindowSample,
};
