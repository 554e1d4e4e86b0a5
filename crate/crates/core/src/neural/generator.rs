use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{self, streams};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu,
    Identity,
}

/// One decoder block: nearest upsample, same-padded conv, activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kernel: usize,
    pub out_channels: usize,
    pub upsample: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaInit {
    /// Every channel weight starts at 1, so the composition is a plain sum.
    Ones,
    /// Every channel weight starts at `1/N`: the mean of the code features.
    Mean,
    /// Weights start at 1 and the weighted sum is divided by `sqrt(N)`, which
    /// keeps the spread of the code-specific part of the features roughly
    /// independent of `N`. The fixed factor (rather than small initial
    /// weights) keeps an optimizer step on the weights a relative change.
    #[default]
    ScaledOnes,
}

impl AlphaInit {
    fn value(self, num_codes: usize) -> f64 {
        match self {
            AlphaInit::Ones | AlphaInit::ScaledOnes => 1.0,
            AlphaInit::Mean => 1.0 / num_codes as f64,
        }
    }

    /// Fixed factor applied to the weighted sum of code features.
    pub fn composition_scale(self, num_codes: usize) -> f64 {
        match self {
            AlphaInit::ScaledOnes => 1.0 / (num_codes as f64).sqrt(),
            AlphaInit::Ones | AlphaInit::Mean => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// `(channels, height, width)` of each latent code.
    pub latent_shape: [usize; 3],
    pub blocks: Vec<BlockSpec>,
    /// Number of blocks in `G1`; features are composed after this many.
    pub split: usize,
    #[serde(default)]
    pub alpha_init: AlphaInit,
    /// Standard deviation of the Gaussian latent entries. With zero biases
    /// the output logits scale linearly with it, and so does the logit
    /// change caused by one optimizer step.
    #[serde(default = "unit_std")]
    pub latent_std: f64,
}

fn unit_std() -> f64 {
    1.0
}

impl GeneratorConfig {
    /// Four 2x-upsampling blocks (64, 64, 32, 1 channels) from a
    /// `16 x size/16 x size/16` latent, split after the second block.
    pub fn for_image(size: usize) -> Result<Self> {
        if size < 16 || !size.is_multiple_of(16) {
            return Err(Error::arg(format!(
                "default generator needs a size divisible by 16, got {size}"
            )));
        }
        let block = |out_channels, activation| BlockSpec {
            kernel: 3,
            out_channels,
            upsample: 2,
            activation,
        };
        Ok(Self {
            latent_shape: [16, size / 16, size / 16],
            blocks: vec![
                block(64, Activation::LeakyRelu),
                block(64, Activation::LeakyRelu),
                block(32, Activation::LeakyRelu),
                block(1, Activation::Identity),
            ],
            split: 2,
            alpha_init: AlphaInit::ScaledOnes,
            latent_std: 0.1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_shape.contains(&0) {
            return Err(Error::arg(format!("latent shape {:?} has a zero extent", self.latent_shape)));
        }
        if !(self.latent_std > 0.0 && self.latent_std.is_finite()) {
            return Err(Error::arg(format!("latent std must be positive, got {}", self.latent_std)));
        }
        if self.blocks.len() < 2 {
            return Err(Error::arg("generator needs at least two blocks"));
        }
        if self.split == 0 || self.split >= self.blocks.len() {
            return Err(Error::arg(format!(
                "split {} must lie in 1..{}",
                self.split,
                self.blocks.len()
            )));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.kernel % 2 == 0 || b.out_channels == 0 || b.upsample == 0 {
                return Err(Error::arg(format!("block {i} is malformed: {b:?}")));
            }
        }
        if self.blocks.last().map(|b| b.out_channels) != Some(1) {
            return Err(Error::arg("last block must produce one channel"));
        }
        Ok(())
    }

    /// `(channels, height, width)` after `count` blocks.
    pub fn shape_after(&self, count: usize) -> [usize; 3] {
        let [mut c, mut h, mut w] = self.latent_shape;
        for b in &self.blocks[..count] {
            c = b.out_channels;
            h *= b.upsample;
            w *= b.upsample;
        }
        [c, h, w]
    }

    pub fn split_shape(&self) -> [usize; 3] {
        self.shape_after(self.split)
    }

    /// `(width, height)` of the generated image.
    pub fn output_dims(&self) -> (usize, usize) {
        let [_, h, w] = self.shape_after(self.blocks.len());
        (w, h)
    }
}

/// Fixed Gaussian inputs, one per code.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCodes {
    codes: Vec<Tensor>,
}

impl LatentCodes {
    pub fn sample(config: &GeneratorConfig, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::arg("need at least one latent code"));
        }
        let mut rng = rng::stream(seed, streams::LATENT_CODES);
        let codes = (0..count)
            .map(|_| {
                let data = (0..config.latent_shape.iter().product::<usize>())
                    .map(|_| {
                        let v: f64 = StandardNormal.sample(&mut rng);
                        config.latent_std * v
                    })
                    .collect();
                Tensor::from_vec(&config.latent_shape, data)
            })
            .collect::<Result<_>>()?;
        Ok(Self { codes })
    }

    pub fn from_tensors(codes: Vec<Tensor>) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::arg("need at least one latent code"));
        }
        Ok(Self { codes })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[Tensor] {
        &self.codes
    }
}

/// Conv weights and biases for every block, plus one channel-weight vector
/// per latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub alphas: Vec<Tensor>,
}

impl GeneratorParams {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn init(config: &GeneratorConfig, num_codes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_codes == 0 {
            return Err(Error::arg("need at least one latent code"));
        }
        let mut rng = rng::stream(seed, streams::WEIGHTS);
        let mut weights = Vec::with_capacity(config.blocks.len());
        let mut biases = Vec::with_capacity(config.blocks.len());
        let mut cin = config.latent_shape[0];
        for b in &config.blocks {
            let fan_in = cin * b.kernel * b.kernel;
            let bound = (6.0 / fan_in as f64).sqrt();
            let data = (0..b.out_channels * fan_in)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            weights.push(Tensor::from_vec(&[b.out_channels, cin, b.kernel, b.kernel], data)?);
            biases.push(Tensor::zeros(&[b.out_channels]));
            cin = b.out_channels;
        }
        let c = config.split_shape()[0];
        let a0 = config.alpha_init.value(num_codes);
        let alphas = (0..num_codes)
            .map(|_| Tensor::from_vec(&[c], vec![a0; c]))
            .collect::<Result<_>>()?;
        Ok(Self {
            weights,
            biases,
            alphas,
        })
    }

    pub fn num_codes(&self) -> usize {
        self.alphas.len()
    }

    /// Every parameter tensor in a fixed order: weights, biases, alphas.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.weights.iter().chain(&self.biases).chain(&self.alphas)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.weights
            .iter_mut()
            .chain(&mut self.biases)
            .chain(&mut self.alphas)
    }

    pub fn num_values(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    fn check(&self, config: &GeneratorConfig) -> Result<()> {
        if self.weights.len() != config.blocks.len() || self.biases.len() != config.blocks.len() {
            return Err(Error::dim(format!(
                "params hold {} blocks, config has {}",
                self.weights.len(),
                config.blocks.len()
            )));
        }
        let c = config.split_shape()[0];
        if let Some(a) = self.alphas.iter().find(|a| a.shape() != [c]) {
            return Err(Error::dim(format!(
                "channel weights {:?} for {c} split channels",
                a.shape()
            )));
        }
        Ok(())
    }
}

/// Gradients laid out like [`GeneratorParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub alphas: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.weights
            .iter()
            .chain(&self.biases)
            .chain(&self.alphas)
            .map(Vec::as_slice)
    }

    pub fn norm(&self) -> f64 {
        self.slices().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }
}

struct ParamVars {
    weights: Vec<Var>,
    biases: Vec<Var>,
    alphas: Vec<Var>,
}

/// A recorded generator evaluation that can be backpropagated.
pub struct ForwardPass {
    tape: Tape,
    params: ParamVars,
    output: Var,
    width: usize,
    height: usize,
}

impl ForwardPass {
    pub fn output(&self) -> &[f64] {
        self.tape.value(self.output).as_slice()
    }

    pub fn image(&self, extent: f64) -> Result<Image> {
        Image::from_vec(self.width, self.height, self.output().to_vec())?.with_extent(extent)
    }

    /// Gradients of a scalar loss whose gradient with respect to the output
    /// pixels is `upstream`. Parameters that did not receive gradient (frozen
    /// channel weights, blocks unused by a single-code pass) get zeros.
    pub fn backward(&mut self, upstream: &[f64]) -> Result<Gradients> {
        self.tape.zero_grad();
        self.tape.backward(self.output, upstream)?;
        let tape = &self.tape;
        let collect = |vars: &[Var]| {
            vars.iter()
                .map(|&v| {
                    tape.grad(v)
                        .map(<[f64]>::to_vec)
                        .unwrap_or_else(|| vec![0.0; tape.value(v).len()])
                })
                .collect()
        };
        Ok(Gradients {
            weights: collect(&self.params.weights),
            biases: collect(&self.params.biases),
            alphas: collect(&self.params.alphas),
        })
    }
}

/// Generator bound to a configuration.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    fn bind(&self, tape: &mut Tape, params: &GeneratorParams, train_alphas: bool) -> Result<ParamVars> {
        params.check(&self.config)?;
        Ok(ParamVars {
            weights: params.weights.iter().map(|w| tape.leaf(w.clone(), true)).collect(),
            biases: params.biases.iter().map(|b| tape.leaf(b.clone(), true)).collect(),
            alphas: params
                .alphas
                .iter()
                .map(|a| tape.leaf(a.clone(), train_alphas))
                .collect(),
        })
    }

    fn check_code(&self, z: &Tensor) -> Result<()> {
        if z.shape() != self.config.latent_shape {
            return Err(Error::dim(format!(
                "latent code {:?}, expected {:?}",
                z.shape(),
                self.config.latent_shape
            )));
        }
        Ok(())
    }

    fn run_blocks(&self, tape: &mut Tape, vars: &ParamVars, mut x: Var, range: std::ops::Range<usize>) -> Result<Var> {
        for i in range {
            let b = &self.config.blocks[i];
            if b.upsample > 1 {
                x = tape.upsample_nearest(x, b.upsample)?;
            }
            x = tape.conv2d(x, vars.weights[i], vars.biases[i])?;
            if b.activation == Activation::LeakyRelu {
                x = tape.leaky_relu(x, LEAKY_SLOPE)?;
            }
        }
        Ok(x)
    }

    fn finish(&self, tape: Tape, params: ParamVars, pre: Var) -> Result<ForwardPass> {
        let mut tape = tape;
        let output = tape.sigmoid(pre)?;
        let (width, height) = self.config.output_dims();
        Ok(ForwardPass {
            tape,
            params,
            output,
            width,
            height,
        })
    }

    /// Plain single-code generator `G(z; theta)`; channel weights are unused.
    pub fn forward_single(&self, z: &Tensor, params: &GeneratorParams) -> Result<ForwardPass> {
        self.check_code(z)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, params, false)?;
        let x = tape.leaf(z.clone(), false);
        let pre = self.run_blocks(&mut tape, &vars, x, 0..self.config.blocks.len())?;
        self.finish(tape, vars, pre)
    }

    /// `G2(s * sum_n G1(z_n) * alpha_n)` with `s` from
    /// [`AlphaInit::composition_scale`]. With `train_alphas` false the channel
    /// weights act as constants and their gradients come back as zero.
    pub fn forward_multi(
        &self,
        codes: &LatentCodes,
        params: &GeneratorParams,
        train_alphas: bool,
    ) -> Result<ForwardPass> {
        if codes.len() != params.num_codes() {
            return Err(Error::dim(format!(
                "{} latent codes but {} channel-weight vectors",
                codes.len(),
                params.num_codes()
            )));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, params, train_alphas)?;
        let mut sum: Option<Var> = None;
        for (n, z) in codes.codes().iter().enumerate() {
            self.check_code(z)?;
            let x = tape.leaf(z.clone(), false);
            let f = self.run_blocks(&mut tape, &vars, x, 0..self.config.split)?;
            let weighted = tape.channel_mul(f, vars.alphas[n])?;
            sum = Some(match sum {
                None => weighted,
                Some(s) => tape.add(s, weighted)?,
            });
        }
        let mut composed = sum.expect("at least one code");
        let scale = self.config.alpha_init.composition_scale(codes.len());
        if scale != 1.0 {
            composed = tape.scale(composed, scale)?;
        }
        let pre = self.run_blocks(&mut tape, &vars, composed, self.config.split..self.config.blocks.len())?;
        self.finish(tape, vars, pre)
    }
}

/// Feature map `G1(z)` at the split layer.
pub fn g1_forward(generator: &Generator, z: &Tensor, params: &GeneratorParams) -> Result<Tensor> {
    generator.check_code(z)?;
    let mut tape = Tape::new();
    let vars = generator.bind(&mut tape, params, false)?;
    let x = tape.leaf(z.clone(), false);
    let f = generator.run_blocks(&mut tape, &vars, x, 0..generator.config.split)?;
    Ok(tape.value(f).clone())
}

/// `sum_n features[n][c, i, j] * alphas[n][c]`.
pub fn compose(features: &[Tensor], alphas: &[Tensor]) -> Result<Tensor> {
    if features.is_empty() || features.len() != alphas.len() {
        return Err(Error::dim(format!(
            "{} feature maps, {} channel-weight vectors",
            features.len(),
            alphas.len()
        )));
    }
    let shape = features[0].shape().to_vec();
    let mut tape = Tape::new();
    let mut sum: Option<Var> = None;
    for (f, a) in features.iter().zip(alphas) {
        if f.shape() != shape.as_slice() {
            return Err(Error::dim(format!("feature maps {:?} vs {:?}", f.shape(), shape)));
        }
        let fv = tape.leaf(f.clone(), false);
        let av = tape.leaf(a.clone(), false);
        let w = tape.channel_mul(fv, av)?;
        sum = Some(match sum {
            None => w,
            Some(s) => tape.add(s, w)?,
        });
    }
    Ok(tape.value(sum.expect("non-empty")).clone())
}

/// Generated image for the given codes, channel weights included.
pub fn mcdip_forward(
    generator: &Generator,
    codes: &LatentCodes,
    params: &GeneratorParams,
    extent: f64,
) -> Result<Image> {
    generator.forward_multi(codes, params, false)?.image(extent)
}
