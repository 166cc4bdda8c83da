//! Fixed-length window extraction and the stratified validation split.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::intervals::{label_intervals, IntervalState, LabeledInterval, TimingPolicy};
use super::recording::Recording;
use crate::architecture::{INTERICTAL, PREICTAL};
use crate::engine::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Interictal,
    Preictal,
}

impl Label {
    /// Index into the network's output vector.
    pub fn class_index(self) -> usize {
        match self {
            Label::Interictal => INTERICTAL,
            Label::Preictal => PREICTAL,
        }
    }

    pub fn is_preictal(self) -> bool {
        self == Label::Preictal
    }
}

/// One `channels x window_points` slice of raw signal.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub data: Tensor,
    pub label: Label,
    pub source_time_s: f64,
    pub subject_id: String,
}

/// Samples per window: `round(window_s * rate)`.
pub fn window_points(policy: &TimingPolicy, sample_rate_hz: f64) -> usize {
    (policy.window_s * sample_rate_hz).round() as usize
}

fn stride_points(policy: &TimingPolicy, state: IntervalState, sample_rate_hz: f64) -> usize {
    let stride_s = match state {
        IntervalState::Preictal => policy.preictal_stride_s(),
        _ => policy.window_s,
    };
    ((stride_s * sample_rate_hz).round() as usize).max(1)
}

/// Closed-form window count for an interval of `len_s` seconds.
pub fn window_count(len_s: f64, state: IntervalState, policy: &TimingPolicy) -> usize {
    let (w, stride) = match state {
        IntervalState::Interictal => (policy.window_s, policy.window_s),
        IntervalState::Preictal => (policy.window_s, policy.preictal_stride_s()),
        _ => return 0,
    };
    if len_s < w {
        return 0;
    }
    ((len_s - w) / stride).floor() as usize + 1
}

/// First sample index whose time `s / rate` is at or after `t`.
fn first_sample_at(t: f64, rate: f64) -> usize {
    let x = t * rate;
    let r = x.round();
    // tolerate representation error on integral boundaries
    if (x - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Start sample indices of every window cut from one interval.
pub fn window_starts(
    interval: &LabeledInterval,
    policy: &TimingPolicy,
    sample_rate_hz: f64,
    total_samples: usize,
) -> Vec<usize> {
    if !matches!(interval.state, IntervalState::Interictal | IntervalState::Preictal) {
        return Vec::new();
    }
    let wp = window_points(policy, sample_rate_hz);
    let stride = stride_points(policy, interval.state, sample_rate_hz);
    let start = first_sample_at(interval.start_s, sample_rate_hz);
    let end = first_sample_at(interval.end_s, sample_rate_hz).min(total_samples);
    if wp == 0 || end < start + wp {
        return Vec::new();
    }
    (start..=end - wp).step_by(stride).collect()
}

/// Cuts interictal (non-overlapping) and preictal (overlapping) windows.
pub fn extract_windows(
    rec: &Recording,
    intervals: &[LabeledInterval],
    policy: &TimingPolicy,
) -> Result<Vec<WindowSample>> {
    policy.validate()?;
    let rate = rec.sample_rate_hz();
    let wp = window_points(policy, rate);
    let n_ch = rec.channel_count();
    let mut out = Vec::new();
    for iv in intervals {
        let label = match iv.state {
            IntervalState::Interictal => Label::Interictal,
            IntervalState::Preictal => Label::Preictal,
            _ => continue,
        };
        for s in window_starts(iv, policy, rate, rec.samples()) {
            let mut data = Vec::with_capacity(n_ch * wp);
            for c in 0..n_ch {
                data.extend_from_slice(&rec.channel(c)[s..s + wp]);
            }
            out.push(WindowSample {
                data: Tensor::new(&[n_ch, wp], data)?,
                label,
                source_time_s: s as f64 / rate,
                subject_id: rec.subject_id().to_owned(),
            });
        }
    }
    Ok(out)
}

/// Labels a recording and cuts its windows in one go.
pub fn windows_for_recording(rec: &Recording, policy: &TimingPolicy) -> Result<Vec<WindowSample>> {
    let intervals = label_intervals(rec, policy)?;
    extract_windows(rec, &intervals, policy)
}

/// Stratified split: `round(fraction * n)` of each class (at least one) goes to validation.
pub fn split_train_validation<R: Rng + ?Sized>(
    samples: Vec<WindowSample>,
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<WindowSample>, Vec<WindowSample>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Parameter(format!("validation fraction must be in [0, 1), got {fraction}")));
    }
    let mut validation_idx = vec![false; samples.len()];
    for label in [Label::Interictal, Label::Preictal] {
        let mut idx: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            let name = if label.is_preictal() { "preictal" } else { "interictal" };
            return Err(Error::Data(format!("no {name} windows to split")));
        }
        let n_val = ((fraction * idx.len() as f64).round() as usize).max(1);
        idx.shuffle(rng);
        for &i in &idx[..n_val] {
            validation_idx[i] = true;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (s, is_val) in samples.into_iter().zip(validation_idx) {
        if is_val {
            val.push(s);
        } else {
            train.push(s);
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::recording::Seizure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn interval(len: f64, state: IntervalState) -> LabeledInterval {
        LabeledInterval {
            start_s: 100.0,
            end_s: 100.0 + len,
            state,
        }
    }

    #[test]
    fn closed_form_counts() {
        let p = TimingPolicy::default();
        assert_eq!(window_count(1800.0, IntervalState::Preictal, &p), 119);
        assert_eq!(window_count(3600.0, IntervalState::Interictal, &p), 180);
        assert_eq!(window_count(19.0, IntervalState::Interictal, &p), 0);
        assert_eq!(window_count(20.0, IntervalState::Preictal, &p), 1);
        assert_eq!(window_count(500.0, IntervalState::Sph, &p), 0);
    }

    #[test]
    fn sample_level_counts_match_closed_form() {
        let p = TimingPolicy::default();
        for rate in [1.0, 100.0, 256.0, 400.0] {
            let total = ((5000.0 * rate) as usize) + 10;
            assert_eq!(window_starts(&interval(1800.0, IntervalState::Preictal), &p, rate, total).len(), 119);
            assert_eq!(window_starts(&interval(3600.0, IntervalState::Interictal), &p, rate, total).len(), 180);
        }
    }

    #[test]
    fn window_shape_at_256_hz() {
        let rate = 256.0;
        let dur = 2400.0;
        let n = (dur * rate) as usize;
        let rec = Recording::new(
            "chb",
            rate,
            (0..23).map(|i| format!("ch{i}")).collect(),
            vec![0.0; 23 * n],
            vec![Seizure::new(2200.0, 2260.0)],
        )
        .unwrap();
        let policy = TimingPolicy {
            interictal_margin_s: 1900.0,
            ..TimingPolicy::default()
        };
        let windows = windows_for_recording(&rec, &policy).unwrap();
        let pre: Vec<_> = windows.iter().filter(|w| w.label.is_preictal()).collect();
        assert_eq!(pre.len(), 119);
        assert!(windows.iter().all(|w| w.data.shape() == [23, 5120]));
        // preictal [100, 1900) takes precedence, leaving interictal [0, 100)
        assert_eq!(windows.len() - pre.len(), 5);
    }

    fn fake(label: Label, n: usize) -> Vec<WindowSample> {
        (0..n)
            .map(|i| WindowSample {
                data: Tensor::zeros(&[1, 2]),
                label,
                source_time_s: i as f64,
                subject_id: "s".into(),
            })
            .collect()
    }

    #[test]
    fn split_fractions() {
        let mut samples = fake(Label::Interictal, 100);
        samples.extend(fake(Label::Preictal, 50));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train, val) = split_train_validation(samples.clone(), 0.2, &mut rng).unwrap();
        let count = |v: &[WindowSample], l| v.iter().filter(|s| s.label == l).count();
        assert_eq!((count(&val, Label::Interictal), count(&val, Label::Preictal)), (20, 10));
        assert_eq!(train.len(), 120);

        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let (train2, val2) = split_train_validation(samples, 0.2, &mut rng2).unwrap();
        assert_eq!((train, val), (train2, val2));
    }

    #[test]
    fn split_small_class_gets_one() {
        let mut samples = fake(Label::Interictal, 10);
        samples.extend(fake(Label::Preictal, 3));
        let (_, val) = split_train_validation(samples, 0.2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(val.iter().filter(|s| s.label.is_preictal()).count(), 1);
        assert_eq!(val.len(), 3);
    }

    #[test]
    fn split_requires_both_classes() {
        let samples = fake(Label::Interictal, 10);
        let err = split_train_validation(samples, 0.2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
