//! Reference implementations shared by the integration and acceptance tests.
//! They are written independently of the library code they check.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use seizurecast::engine::{grad_check, ConvSpec, GradCheckConfig, PoolSpec, Tape, TapeOp, Tensor, Var};
use seizurecast::pipeline::{
    label_intervals, window_starts, IntervalState, Label, Recording, Seizure, TimingPolicy, WindowSample,
};
use seizurecast::Result;

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

// ---------------------------------------------------------------- gradients

#[derive(Debug, Clone)]
pub struct OpOutcome {
    pub op: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
    pub max_error: f64,
    pub skipped: usize,
}

type Build = Box<dyn for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var>>;

fn case(rng: &mut ChaCha8Rng, op: &str) -> (Build, Vec<Tensor>, String) {
    let mut dim = |lo: usize, hi: usize| rng.random_range(lo..=hi);
    match op {
        "conv2d" => {
            let (cin, cout, h, w, kh, kw) = (dim(1, 3), dim(1, 3), dim(1, 5), dim(1, 8), dim(1, 4), dim(1, 5));
            let spec = ConvSpec::new(kh, kw, cout).unwrap();
            let shapes = vec![vec![cin, h, w], vec![cout, cin, kh, kw], vec![cout]];
            let f: Build = Box::new(move |t, v| t.conv2d(v[0], v[1], v[2], spec));
            (f, tensors(&shapes, rng), format!("in {cin}x{h}x{w} kernel {kh}x{kw} out {cout}"))
        }
        "maxpool" => {
            let (c, ph, pw) = (dim(1, 3), dim(1, 3), dim(1, 4));
            let (h, w) = (ph * dim(1, 3) + dim(0, ph - 1), pw * dim(1, 3) + dim(0, pw - 1));
            let spec = PoolSpec::new(ph, pw).unwrap();
            let f: Build = Box::new(move |t, v| t.maxpool(v[0], spec));
            (f, tensors(&[vec![c, h, w]], rng), format!("in {c}x{h}x{w} pool {ph}x{pw}"))
        }
        "relu" | "sigmoid" => {
            let shape = vec![dim(1, 4), dim(1, 6)];
            let f: Build = if op == "relu" {
                Box::new(|t, v| Ok(t.relu(v[0])))
            } else {
                Box::new(|t, v| Ok(t.sigmoid(v[0])))
            };
            let desc = format!("{shape:?}");
            (f, tensors(&[shape], rng), desc)
        }
        "softmax" => {
            let n = dim(1, 10);
            let f: Build = Box::new(|t, v| t.softmax(v[0]));
            (f, tensors(&[vec![n]], rng), format!("n {n}"))
        }
        "dense" => {
            let (m, n) = (dim(1, 8), dim(1, 12));
            let f: Build = Box::new(|t, v| t.dense(v[0], v[1], v[2]));
            (f, tensors(&[vec![n], vec![m, n], vec![m]], rng), format!("{n} -> {m}"))
        }
        "dropout" => {
            let n = dim(1, 30);
            let mask_seed: u64 = rng.random();
            let f: Build = Box::new(move |t, v| {
                // same mask on every evaluation
                let mut r = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(mask_seed);
                t.dropout(v[0], 0.5, true, &mut r)
            });
            (f, tensors(&[vec![n]], rng), format!("n {n}"))
        }
        "flatten" => {
            let shape = vec![dim(1, 3), dim(1, 4), dim(1, 5)];
            let f: Build = Box::new(|t, v| t.flatten(v[0]));
            let desc = format!("{shape:?}");
            (f, tensors(&[shape], rng), desc)
        }
        "softmax_cross_entropy" => {
            let n = dim(2, 6);
            let label = rng.random_range(0..n);
            let f: Build = Box::new(move |t, v| t.softmax_cross_entropy(v[0], label));
            (f, tensors(&[vec![n]], rng), format!("n {n} label {label}"))
        }
        other => panic!("unknown op {other}"),
    }
}

fn tensors(shapes: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    shapes.iter().map(|s| random_tensor(s, rng)).collect()
}

pub const DIFFERENTIABLE_OPS: [&str; 9] = [
    "conv2d",
    "maxpool",
    "relu",
    "sigmoid",
    "softmax",
    "dense",
    "dropout",
    "flatten",
    "softmax_cross_entropy",
];

/// Finite-difference check of `op` on `cases` random shapes.
pub fn check_op(op: &'static str, cases: usize, rng: &mut ChaCha8Rng) -> OpOutcome {
    let config = GradCheckConfig::default();
    let mut outcome = OpOutcome {
        op,
        cases,
        failures: Vec::new(),
        max_error: 0.0,
        skipped: 0,
    };
    for _ in 0..cases {
        let (build, inputs, desc) = case(rng, op);
        let report = grad_check(&TapeOp(build), &inputs, &config).expect("grad_check runs");
        outcome.max_error = outcome.max_error.max(report.max_relative_error());
        outcome.skipped += report.inputs.iter().map(|r| r.skipped.len()).sum::<usize>();
        if !report.passed() {
            outcome
                .failures
                .push(format!("{desc}: relative error {:.3e}", report.max_relative_error()));
        }
    }
    outcome
}

// ---------------------------------------------------------------- windowing

/// Random integer-second schedule and policy, small enough to enumerate per sample.
pub fn random_schedule(rng: &mut ChaCha8Rng) -> (Recording, TimingPolicy) {
    let rate = [1.0, 2.0, 4.0][rng.random_range(0..3)];
    let duration = rng.random_range(600..=20_000) as f64;
    let n_seizures = rng.random_range(0..=4);
    let mut onsets: Vec<u32> = (0..n_seizures).map(|_| rng.random_range(0..duration as u32)).collect();
    onsets.sort_unstable();
    onsets.dedup();
    let mut seizures = Vec::new();
    let mut last_end = 0.0;
    for on in onsets {
        let on = on as f64;
        if on < last_end {
            continue;
        }
        let off = (on + rng.random_range(1..=300) as f64).min(duration);
        if off <= on {
            continue;
        }
        seizures.push(Seizure::new(on, off));
        last_end = off;
    }
    let policy = TimingPolicy {
        pil_s: rng.random_range(20..=3000) as f64,
        sph_s: rng.random_range(0..=600) as f64,
        window_s: 20.0,
        preictal_overlap_s: 5.0,
        lead_gap_s: rng.random_range(0..=8000) as f64,
        interictal_margin_s: rng.random_range(0..=6000) as f64,
    };
    let n = (duration * rate) as usize;
    let rec = Recording::new("oracle", rate, vec!["c0".into()], vec![0.0; n], seizures).unwrap();
    (rec, policy)
}

fn oracle_leads(seizures: &[Seizure], p: &TimingPolicy) -> Vec<bool> {
    let mut out = Vec::new();
    for (i, s) in seizures.iter().enumerate() {
        let enough_history = s.onset_s >= p.pil_s + p.sph_s;
        let long_gap = i == 0 || s.onset_s - seizures[i - 1].offset_s >= p.lead_gap_s;
        out.push(enough_history && long_gap);
    }
    out
}

/// State of every sample, decided one sample at a time.
pub fn oracle_sample_states(rec: &Recording, p: &TimingPolicy) -> Vec<IntervalState> {
    let seizures = rec.seizures();
    let leads = oracle_leads(seizures, p);
    let rate = rec.sample_rate_hz();
    (0..rec.samples())
        .map(|i| {
            let t = i as f64 / rate;
            let mut state = IntervalState::Excluded;
            let mut near_any = false;
            for (k, s) in seizures.iter().enumerate() {
                if t >= s.onset_s && t < s.offset_s {
                    return IntervalState::Ictal;
                }
                if leads[k] {
                    if t >= s.onset_s - p.sph_s && t < s.onset_s {
                        state = IntervalState::Sph;
                    } else if state != IntervalState::Sph
                        && t >= s.onset_s - p.sph_s - p.pil_s
                        && t < s.onset_s - p.sph_s
                    {
                        state = IntervalState::Preictal;
                    }
                }
                if t >= s.onset_s - p.interictal_margin_s && t < s.offset_s + p.interictal_margin_s {
                    near_any = true;
                }
            }
            if state == IntervalState::Excluded && !near_any {
                IntervalState::Interictal
            } else {
                state
            }
        })
        .collect()
}

/// Window starts found by scanning runs of equal state sample by sample.
pub fn oracle_windows(states: &[IntervalState], rate: f64, p: &TimingPolicy) -> Vec<(usize, Label)> {
    let width = (p.window_s * rate).round() as usize;
    let mut out = Vec::new();
    let mut i = 0;
    while i < states.len() {
        let mut j = i;
        while j < states.len() && states[j] == states[i] {
            j += 1;
        }
        let (label, stride_s) = match states[i] {
            IntervalState::Preictal => (Some(Label::Preictal), p.window_s - p.preictal_overlap_s),
            IntervalState::Interictal => (Some(Label::Interictal), p.window_s),
            _ => (None, 0.0),
        };
        if let Some(label) = label {
            let stride = (stride_s * rate).round() as usize;
            let mut s = i;
            while s + width <= j {
                out.push((s, label));
                s += stride;
            }
        }
        i = j;
    }
    out
}

/// Per-sample states and window starts as the library produces them.
pub fn library_windows(rec: &Recording, p: &TimingPolicy) -> (Vec<IntervalState>, Vec<(usize, Label)>) {
    let intervals = label_intervals(rec, p).unwrap();
    let rate = rec.sample_rate_hz();
    let states = (0..rec.samples())
        .map(|i| {
            let t = i as f64 / rate;
            intervals
                .iter()
                .find(|iv| iv.start_s <= t && t < iv.end_s)
                .map(|iv| iv.state)
                .expect("intervals cover the recording")
        })
        .collect();
    let mut windows = Vec::new();
    for iv in &intervals {
        let label = match iv.state {
            IntervalState::Preictal => Label::Preictal,
            IntervalState::Interictal => Label::Interictal,
            _ => continue,
        };
        windows.extend(window_starts(iv, p, rate, rec.samples()).into_iter().map(|s| (s, label)));
    }
    (states, windows)
}

// ---------------------------------------------------------------- metrics

/// Probability that a random positive outscores a random negative, ties counting half.
pub fn concordance(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

// ---------------------------------------------------------------- band power probe

/// Log power of each channel inside `band` Hz, by direct DFT.
pub fn band_power_features(w: &WindowSample, rate: f64, band: (f64, f64)) -> Vec<f64> {
    let (ch, n) = (w.data.shape()[0], w.data.shape()[1]);
    let k_lo = (band.0 * n as f64 / rate).ceil() as usize;
    let k_hi = (band.1 * n as f64 / rate).floor() as usize;
    (0..ch)
        .map(|c| {
            let x = &w.data.data()[c * n..(c + 1) * n];
            let mut power = 0.0;
            for k in k_lo..=k_hi {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let phase = std::f64::consts::TAU * (k * t) as f64 / n as f64;
                    re += v * phase.cos();
                    im -= v * phase.sin();
                }
                power += re * re + im * im;
            }
            (power / n as f64).ln()
        })
        .collect()
}

/// Least-squares linear fit of the label on `features` (with intercept).
pub fn fit_linear_probe(features: &[Vec<f64>], labels: &[Label]) -> Vec<f64> {
    let d = features[0].len() + 1;
    let mut a = vec![vec![0.0; d + 1]; d];
    for (f, l) in features.iter().zip(labels) {
        let x: Vec<f64> = std::iter::once(1.0).chain(f.iter().copied()).collect();
        let y = if l.is_preictal() { 1.0 } else { 0.0 };
        for i in 0..d {
            for j in 0..d {
                a[i][j] += x[i] * x[j];
            }
            a[i][d] += x[i] * y;
        }
    }
    for row in a.iter_mut().enumerate() {
        row.1[row.0] += 1e-9;
    }
    // Gauss-Jordan with partial pivoting
    for col in 0..d {
        let pivot = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..d {
            if r != col {
                let factor = a[r][col];
                let pivot_row = a[col].clone();
                for (v, pv) in a[r].iter_mut().zip(pivot_row) {
                    *v -= factor * pv;
                }
            }
        }
    }
    a.iter().map(|row| row[d]).collect()
}

pub fn apply_probe(weights: &[f64], features: &[f64]) -> f64 {
    weights[0] + weights[1..].iter().zip(features).map(|(w, f)| w * f).sum::<f64>()
}
