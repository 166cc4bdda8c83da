//! The five-block convolutional network.
//!
//! Early blocks convolve and pool along time only (`1 x k` kernels) so each
//! electrode row is processed independently; the last two blocks use square
//! kernels that mix neighbouring channels. Two sigmoid dense layers and a
//! softmax output follow, with a single dropout layer after the last block.

mod model_file;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::tensor::format_shape;
use crate::engine::{ops, ConvSpec, PoolSpec, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Class index of the preictal (positive) state in the output vector.
pub const PREICTAL: usize = 1;
/// Class index of the interictal (negative) state.
pub const INTERICTAL: usize = 0;

pub const CONV_BLOCKS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub input_width: usize,
    pub conv_kernels: Vec<(usize, usize)>,
    pub pool_kernels: Vec<(usize, usize)>,
    pub conv_out_channels: Vec<usize>,
    pub fc_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub num_classes: usize,
}

impl NetworkConfig {
    /// Full-size configuration for `channels x width` windows.
    pub fn standard(input_channels: usize, input_width: usize) -> Self {
        NetworkConfig {
            input_channels,
            input_width,
            conv_kernels: vec![(1, 20), (1, 20), (1, 10), (3, 3), (3, 3)],
            pool_kernels: vec![(1, 10), (1, 10), (1, 5), (2, 2), (2, 2)],
            conv_out_channels: vec![16, 32, 64, 128, 256],
            fc_sizes: vec![256, 64],
            dropout_rate: 0.5,
            num_classes: 2,
        }
    }

    /// Same kernels and widths as [`NetworkConfig::standard`] with the time-axis
    /// pools shrunk from 10/10/5 to 4/4/2, for windows a few hundred points wide.
    pub fn reduced(input_channels: usize, input_width: usize) -> Self {
        NetworkConfig {
            pool_kernels: vec![(1, 4), (1, 4), (1, 2), (2, 2), (2, 2)],
            ..Self::standard(input_channels, input_width)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lens = [
            ("conv_kernels", self.conv_kernels.len()),
            ("pool_kernels", self.pool_kernels.len()),
            ("conv_out_channels", self.conv_out_channels.len()),
        ];
        for (name, len) in lens {
            if len != CONV_BLOCKS {
                return Err(Error::Parameter(format!(
                    "{name} must list {CONV_BLOCKS} entries, got {len}"
                )));
            }
        }
        if self.input_channels == 0 || self.input_width == 0 {
            return Err(Error::Parameter(format!(
                "input extents must be positive, got {}x{}",
                self.input_channels, self.input_width
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Parameter("num_classes must be at least 2".into()));
        }
        if self.fc_sizes.contains(&0) {
            return Err(Error::Parameter("fc_sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Parameter(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        for i in 0..CONV_BLOCKS {
            let (kh, kw) = self.conv_kernels[i];
            ConvSpec::new(kh, kw, self.conv_out_channels[i])?;
            let (ph, pw) = self.pool_kernels[i];
            PoolSpec::new(ph, pw)?;
        }
        Ok(())
    }

    fn conv_spec(&self, block: usize) -> ConvSpec {
        let (kh, kw) = self.conv_kernels[block];
        ConvSpec {
            kernel_h: kh,
            kernel_w: kw,
            out_channels: self.conv_out_channels[block],
        }
    }

    fn pool_spec(&self, block: usize) -> PoolSpec {
        let (pool_h, pool_w) = self.pool_kernels[block];
        PoolSpec { pool_h, pool_w }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [1, self.input_channels, self.input_width]
    }

    /// Propagates shapes through every layer; fails naming the first layer that collapses.
    pub fn shape_table(&self) -> Result<ShapeTable> {
        self.validate()?;
        let mut rows = Vec::new();
        let (mut c, mut h, mut w) = (1, self.input_channels, self.input_width);
        rows.push(LayerShape::new("input", vec![c, h, w], 0));
        for block in 0..CONV_BLOCKS {
            let conv = self.conv_spec(block);
            let params = conv.out_channels * c * conv.kernel_h * conv.kernel_w + conv.out_channels;
            c = conv.out_channels;
            rows.push(LayerShape::new(format!("conv{}", block + 1), vec![c, h, w], params));
            let pool = self.pool_spec(block);
            let (oh, ow) = pool.output_extent(h, w).ok_or_else(|| {
                Error::shape(
                    format!("pool{}", block + 1),
                    format!("input extents at least {}x{}", pool.pool_h, pool.pool_w),
                    format!("{h}x{w}"),
                )
            })?;
            h = oh;
            w = ow;
            rows.push(LayerShape::new(format!("pool{}", block + 1), vec![c, h, w], 0));
        }
        let mut features = c * h * w;
        rows.push(LayerShape::new("flatten", vec![features], 0));
        rows.push(LayerShape::new("dropout", vec![features], 0));
        for (i, &size) in self.fc_sizes.iter().enumerate() {
            rows.push(LayerShape::new(format!("fc{}", i + 1), vec![size], size * features + size));
            features = size;
        }
        rows.push(LayerShape::new(
            "output",
            vec![self.num_classes],
            self.num_classes * features + self.num_classes,
        ));
        Ok(ShapeTable { rows })
    }

    /// Names and shapes of the parameter tensors, in storage order.
    pub fn parameter_layout(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let table = self.shape_table()?;
        let mut layout = Vec::new();
        let mut c = 1;
        for block in 0..CONV_BLOCKS {
            let conv = self.conv_spec(block);
            let name = format!("conv{}", block + 1);
            layout.push((
                format!("{name}.weight"),
                vec![conv.out_channels, c, conv.kernel_h, conv.kernel_w],
            ));
            layout.push((format!("{name}.bias"), vec![conv.out_channels]));
            c = conv.out_channels;
        }
        let mut features = table.flatten_len();
        for (i, &size) in self.fc_sizes.iter().enumerate() {
            layout.push((format!("fc{}.weight", i + 1), vec![size, features]));
            layout.push((format!("fc{}.bias", i + 1), vec![size]));
            features = size;
        }
        layout.push(("output.weight".into(), vec![self.num_classes, features]));
        layout.push(("output.bias".into(), vec![self.num_classes]));
        Ok(layout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
    pub params: usize,
}

impl LayerShape {
    fn new(name: impl Into<String>, shape: Vec<usize>, params: usize) -> Self {
        LayerShape {
            name: name.into(),
            shape,
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeTable {
    pub rows: Vec<LayerShape>,
}

impl ShapeTable {
    pub fn get(&self, name: &str) -> Option<&LayerShape> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn flatten_len(&self) -> usize {
        self.get("flatten").map(|r| r.shape[0]).unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.rows.iter().map(|r| r.params).sum()
    }

    /// Spatial extents (height x width) after each pooling layer.
    pub fn pooled_extents(&self) -> Vec<(usize, usize)> {
        self.rows
            .iter()
            .filter(|r| r.name.starts_with("pool"))
            .map(|r| (r.shape[1], r.shape[2]))
            .collect()
    }

    /// Fixed-width text rendering: layer, output shape, parameter count.
    pub fn render(&self) -> String {
        let mut out = format!("{:<10} {:<16} {:>10}\n", "layer", "output", "params");
        for row in &self.rows {
            out.push_str(&format!(
                "{:<10} {:<16} {:>10}\n",
                row.name,
                format_shape(&row.shape),
                row.params
            ));
        }
        out.push_str(&format!("{:<10} {:<16} {:>10}\n", "total", "", self.parameter_count()));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

/// A built network: configuration, parameters and the shape table they were built against.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    params: Vec<Parameter>,
    shapes: ShapeTable,
}

/// A recorded forward pass, ready for backpropagation.
pub struct Trace<'a> {
    pub tape: Tape<'a>,
    pub params: Vec<Var>,
    pub logits: Var,
    /// Post-activation output of every named layer, in order.
    pub activations: Vec<(String, Var)>,
}

/// Loss, output probabilities and per-parameter gradients for one sample.
#[derive(Debug, Clone)]
pub struct SampleGradients {
    pub loss: f64,
    pub probabilities: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn build<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        let shapes = config.shape_table()?;
        let params = config
            .parameter_layout()?
            .into_iter()
            .map(|(name, shape)| {
                let value = if name.ends_with(".bias") {
                    Tensor::zeros(&shape)
                } else {
                    let (fan_in, fan_out) = fans(&shape);
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let n = shape.iter().product();
                    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
                    Tensor::new(&shape, data).expect("layout shape")
                };
                Parameter { name, value }
            })
            .collect();
        Ok(Network {
            config,
            params,
            shapes,
        })
    }

    pub fn from_parameters(config: NetworkConfig, params: Vec<Parameter>) -> Result<Self> {
        let shapes = config.shape_table()?;
        let layout = config.parameter_layout()?;
        if layout.len() != params.len() {
            return Err(Error::shape(
                "network parameters",
                format!("{} tensors", layout.len()),
                format!("{} tensors", params.len()),
            ));
        }
        for ((name, shape), p) in layout.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::shape(
                    name.clone(),
                    format!("{name} {}", format_shape(shape)),
                    format!("{} {}", p.name, format_shape(p.value.shape())),
                ));
            }
        }
        Ok(Network {
            config,
            params,
            shapes,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn shape_table(&self) -> &ShapeTable {
        &self.shapes
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Accepts `[H, W]` or `[1, H, W]` matching the configured input.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let (h, w) = (self.config.input_channels, self.config.input_width);
        let ok = matches!(*shape, [hh, ww] | [1, hh, ww] if hh == h && ww == w);
        if ok {
            Ok(())
        } else {
            Err(Error::shape(
                "network input",
                format!("{h}x{w}"),
                format_shape(shape),
            ))
        }
    }

    /// Records a forward pass on a fresh tape. `rng` drives dropout in training mode.
    pub fn trace<R: Rng + ?Sized>(&self, input: &Tensor, training: bool, rng: &mut R) -> Result<Trace<'_>> {
        self.check_input(input.shape())?;
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.param(&p.value)).collect();
        let x = input.clone().reshape(&self.config.input_shape())?;
        let mut h = tape.leaf(x);
        let mut activations = Vec::new();
        for block in 0..CONV_BLOCKS {
            let conv = tape.conv2d(h, params[2 * block], params[2 * block + 1], self.config.conv_spec(block))?;
            let act = tape.relu(conv);
            activations.push((format!("conv{}", block + 1), act));
            h = tape.maxpool(act, self.config.pool_spec(block))?;
            activations.push((format!("pool{}", block + 1), h));
        }
        h = tape.flatten(h)?;
        h = tape.dropout(h, self.config.dropout_rate, training, rng)?;
        activations.push(("dropout".into(), h));
        let mut p = 2 * CONV_BLOCKS;
        for i in 0..self.config.fc_sizes.len() {
            let z = tape.dense(h, params[p], params[p + 1])?;
            h = tape.sigmoid(z);
            activations.push((format!("fc{}", i + 1), h));
            p += 2;
        }
        let logits = tape.dense(h, params[p], params[p + 1])?;
        Ok(Trace {
            tape,
            params,
            logits,
            activations,
        })
    }

    /// Class probabilities for one window; index [`PREICTAL`] is the preictal probability.
    pub fn forward<R: Rng + ?Sized>(&self, input: &Tensor, training: bool, rng: &mut R) -> Result<Tensor> {
        let trace = self.trace(input, training, rng)?;
        Ok(Tensor::from_vec(ops::softmax(trace.tape.value(trace.logits).data())))
    }

    /// Inference-mode probabilities; no randomness involved.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        // dropout is the identity in inference mode, the rng is never drawn from
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward(input, false, &mut rng)
    }

    pub fn predict_preictal(&self, input: &Tensor) -> Result<f64> {
        Ok(self.predict(input)?.data()[PREICTAL])
    }

    /// Inference-mode output of every named layer.
    pub fn activations(&self, input: &Tensor) -> Result<Vec<(String, Tensor)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = self.trace(input, false, &mut rng)?;
        Ok(trace
            .activations
            .iter()
            .map(|(name, v)| (name.clone(), trace.tape.value(*v).clone()))
            .collect())
    }

    /// Training-mode forward and backward pass for one labelled window.
    pub fn sample_gradients<R: Rng + ?Sized>(
        &self,
        input: &Tensor,
        label: usize,
        rng: &mut R,
    ) -> Result<SampleGradients> {
        let mut trace = self.trace(input, true, rng)?;
        let probabilities = ops::softmax(trace.tape.value(trace.logits).data());
        let loss = trace.tape.softmax_cross_entropy(trace.logits, label)?;
        let loss_value = trace.tape.value(loss).data()[0];
        trace.tape.backward(loss)?;
        let grads = trace
            .params
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| trace.tape.take_grad(v).unwrap_or_else(|| vec![0.0; p.value.len()]))
            .collect();
        Ok(SampleGradients {
            loss: loss_value,
            probabilities,
            grads,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        model_file::save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        model_file::load(path.as_ref())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        model_file::encode(self)
    }
}

fn fans(shape: &[usize]) -> (usize, usize) {
    match *shape {
        [out, inp] => (inp, out),
        [out, inp, kh, kw] => (inp * kh * kw, out * kh * kw),
        _ => {
            let n: usize = shape.iter().product();
            (n, n)
        }
    }
}
