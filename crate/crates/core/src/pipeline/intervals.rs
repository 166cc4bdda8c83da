//! Lead-seizure selection and interval labelling.

use serde::{Deserialize, Serialize};

use super::recording::Recording;
use crate::error::{Error, Result};

/// Timing constants that decide which parts of a recording are usable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingPolicy {
    /// Preictal interval length.
    pub pil_s: f64,
    /// Seizure prediction horizon: gap between the preictal interval and onset.
    pub sph_s: f64,
    pub window_s: f64,
    /// Signal shared by consecutive preictal windows.
    pub preictal_overlap_s: f64,
    /// Minimum time since the previous seizure's offset for a lead seizure.
    pub lead_gap_s: f64,
    /// Minimum distance of interictal time from any seizure onset or offset.
    pub interictal_margin_s: f64,
}

impl Default for TimingPolicy {
    /// Scalp-EEG timing: 30 min PIL, 5 min SPH.
    fn default() -> Self {
        TimingPolicy {
            pil_s: 30.0 * 60.0,
            sph_s: 5.0 * 60.0,
            window_s: 20.0,
            preictal_overlap_s: 5.0,
            lead_gap_s: 4.0 * 3600.0,
            interictal_margin_s: 4.0 * 3600.0,
        }
    }
}

impl TimingPolicy {
    /// Intracranial timing: 1 h PIL, 5 min SPH.
    pub fn intracranial() -> Self {
        TimingPolicy {
            pil_s: 3600.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.pil_s,
            self.sph_s,
            self.window_s,
            self.preictal_overlap_s,
            self.lead_gap_s,
            self.interictal_margin_s,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Parameter("timing policy values must be finite".into()));
        }
        if self.pil_s <= 0.0 {
            return Err(Error::Parameter(format!("PIL must be positive, got {} s", self.pil_s)));
        }
        if self.sph_s < 0.0 {
            return Err(Error::Parameter(format!("SPH must be non-negative, got {} s", self.sph_s)));
        }
        if self.window_s <= 0.0 {
            return Err(Error::Parameter(format!("window must be positive, got {} s", self.window_s)));
        }
        if !(0.0..self.window_s).contains(&self.preictal_overlap_s) {
            return Err(Error::Parameter(format!(
                "preictal overlap must be in [0, {}) s, got {} s",
                self.window_s, self.preictal_overlap_s
            )));
        }
        if self.lead_gap_s < 0.0 || self.interictal_margin_s < 0.0 {
            return Err(Error::Parameter("lead gap and interictal margin must be non-negative".into()));
        }
        Ok(())
    }

    pub fn preictal_stride_s(&self) -> f64 {
        self.window_s - self.preictal_overlap_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalState {
    Interictal,
    Preictal,
    Sph,
    Ictal,
    Excluded,
}

/// A half-open span `[start_s, end_s)` of a recording with one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub state: IntervalState,
}

impl LabeledInterval {
    pub fn len_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Indices of seizures that define a preictal interval.
///
/// The first seizure qualifies when at least `pil_s + sph_s` of signal precedes
/// it; later ones when `lead_gap_s` has passed since the previous offset and
/// their preictal interval still starts inside the recording.
pub fn find_lead_seizures(rec: &Recording, policy: &TimingPolicy) -> Vec<usize> {
    let seizures = rec.seizures();
    let history = policy.pil_s + policy.sph_s;
    (0..seizures.len())
        .filter(|&i| {
            let onset = seizures[i].onset_s;
            let gap_ok = i == 0 || onset - seizures[i - 1].offset_s >= policy.lead_gap_s;
            gap_ok && onset >= history
        })
        .collect()
}

/// State of time `t`, by precedence ictal > SPH > preictal > interictal > excluded.
fn classify(t: f64, rec: &Recording, leads: &[usize], policy: &TimingPolicy) -> IntervalState {
    let seizures = rec.seizures();
    if seizures.iter().any(|s| s.onset_s <= t && t < s.offset_s) {
        return IntervalState::Ictal;
    }
    let lead_onsets = || leads.iter().map(|&i| seizures[i].onset_s);
    if lead_onsets().any(|on| on - policy.sph_s <= t && t < on) {
        return IntervalState::Sph;
    }
    if lead_onsets().any(|on| on - policy.sph_s - policy.pil_s <= t && t < on - policy.sph_s) {
        return IntervalState::Preictal;
    }
    let m = policy.interictal_margin_s;
    if seizures
        .iter()
        .all(|s| t < s.onset_s - m || t >= s.offset_s + m)
    {
        return IntervalState::Interictal;
    }
    IntervalState::Excluded
}

/// Partitions `[0, duration)` into maximal runs of one state.
pub fn label_intervals(rec: &Recording, policy: &TimingPolicy) -> Result<Vec<LabeledInterval>> {
    policy.validate()?;
    let duration = rec.duration_s();
    let leads = find_lead_seizures(rec, policy);
    let m = policy.interictal_margin_s;

    let mut cuts = vec![0.0, duration];
    for s in rec.seizures() {
        cuts.extend([s.onset_s, s.offset_s, s.onset_s - m, s.offset_s + m]);
    }
    for &i in &leads {
        let on = rec.seizures()[i].onset_s;
        cuts.extend([on - policy.sph_s, on - policy.sph_s - policy.pil_s]);
    }
    let mut cuts: Vec<f64> = cuts
        .into_iter()
        .filter(|&c| (0.0..=duration).contains(&c))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut out: Vec<LabeledInterval> = Vec::new();
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        // every boundary is a cut, so the state at the left edge holds on [a, b)
        let state = classify(a, rec, &leads, policy);
        match out.last_mut() {
            Some(last) if last.state == state => last.end_s = b,
            _ => out.push(LabeledInterval {
                start_s: a,
                end_s: b,
                state,
            }),
        }
    }
    Ok(out)
}
