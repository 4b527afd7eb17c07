use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::params::ParameterVector;
use super::pyramid::PredictionPyramid;
use super::spec::{NetworkSpec, Normalization};
use crate::error::{Error, Result};
use crate::ops::{
    softmax, softmax_backward, upsample_trilinear, upsample_trilinear_adjoint, Activation,
    ConvGrads, DownConv, GroupNorm, PointwiseConv, SameConv, UpConv,
};
use crate::ops::norm::GroupStats;
use crate::tensor::{FeatureMap, Real};

#[derive(Clone, Copy, Debug)]
enum ConvKind {
    Same(SameConv),
    Down(DownConv),
    Up(UpConv),
    Point(PointwiseConv),
}

impl ConvKind {
    fn forward<T: Real>(&self, x: &FeatureMap<T>, w: &[T], b: &[T]) -> FeatureMap<T> {
        match self {
            ConvKind::Same(c) => c.forward(x, w, b),
            ConvKind::Down(c) => c.forward(x, w, b),
            ConvKind::Up(c) => c.forward(x, w, b),
            ConvKind::Point(c) => c.forward(x, w, b),
        }
    }

    fn backward<T: Real>(
        &self,
        x: &FeatureMap<T>,
        w: &[T],
        dy: &FeatureMap<T>,
        need_input: bool,
    ) -> ConvGrads<T> {
        match self {
            ConvKind::Same(c) => c.backward(x, w, dy, need_input),
            ConvKind::Down(c) => c.backward(x, w, dy, need_input),
            ConvKind::Up(c) => c.backward(x, w, dy, need_input),
            ConvKind::Point(c) => c.backward(x, w, dy, need_input),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct NormSlot {
    norm: GroupNorm,
    gamma: usize,
    beta: usize,
}

/// conv -> norm? -> activation?
#[derive(Clone, Debug)]
struct Unit {
    conv: ConvKind,
    weight: usize,
    bias: usize,
    norm: Option<NormSlot>,
    act: Option<Activation>,
}

#[derive(Clone, Debug)]
struct Block {
    units: Vec<Unit>,
    residual: bool,
}

#[derive(Clone, Debug)]
struct Plan {
    enc: Vec<Block>,
    down: Vec<Unit>,
    up: Vec<Unit>,
    dec: Vec<Block>,
    heads: Vec<Unit>,
}

#[derive(Clone, Copy, Debug)]
enum Init {
    /// He-normal with the given fan-in.
    Kaiming(usize),
    /// Unit-gain normal for the linear classifier heads.
    Linear(usize),
    Zero,
    One,
}

struct TensorDesc {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

struct PlanBuilder<'a> {
    spec: &'a NetworkSpec,
    descs: Vec<TensorDesc>,
}

impl PlanBuilder<'_> {
    fn tensor(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.descs.push(TensorDesc { name, shape, init });
        self.descs.len() - 1
    }

    fn norm(&mut self, prefix: &str, channels: usize) -> Option<NormSlot> {
        let groups = match self.spec.norm {
            Normalization::None => return None,
            Normalization::Instance => channels,
            Normalization::Group(g) => g,
        };
        Some(NormSlot {
            norm: GroupNorm { channels, groups },
            gamma: self.tensor(format!("{prefix}.gamma"), vec![channels], Init::One),
            beta: self.tensor(format!("{prefix}.beta"), vec![channels], Init::Zero),
        })
    }

    fn same_unit(&mut self, prefix: &str, c_in: usize, c_out: usize) -> Unit {
        let k = self.spec.kernel_size;
        Unit {
            conv: ConvKind::Same(SameConv { c_in, c_out, kernel: k }),
            weight: self.tensor(
                format!("{prefix}.weight"),
                vec![c_out, k, k, k, c_in],
                Init::Kaiming(c_in * k * k * k),
            ),
            bias: self.tensor(format!("{prefix}.bias"), vec![c_out], Init::Zero),
            norm: self.norm(&format!("{prefix}.norm"), c_out),
            act: Some(self.spec.activation),
        }
    }

    fn block(&mut self, prefix: &str, c_in: usize, c_out: usize, depth: usize) -> Block {
        let units = (0..depth)
            .map(|u| {
                let cin = if u == 0 { c_in } else { c_out };
                self.same_unit(&format!("{prefix}.conv{u}"), cin, c_out)
            })
            .collect();
        Block {
            units,
            residual: self.spec.residual && c_in == c_out,
        }
    }

    fn build(mut self) -> (Plan, Vec<TensorDesc>) {
        let spec = self.spec;
        let levels = spec.levels();
        let mut enc = Vec::with_capacity(levels);
        let mut down = Vec::with_capacity(levels - 1);
        enc.push(self.block("enc0", spec.in_channels, spec.channels_at(0), spec.encoder_depths[0]));
        for l in 1..levels {
            let (c_in, c_out) = (spec.channels_at(l - 1), spec.channels_at(l));
            let prefix = format!("down{}", l - 1);
            down.push(Unit {
                conv: ConvKind::Down(DownConv { c_in, c_out }),
                weight: self.tensor(
                    format!("{prefix}.weight"),
                    vec![c_out, 2, 2, 2, c_in],
                    Init::Kaiming(8 * c_in),
                ),
                bias: self.tensor(format!("{prefix}.bias"), vec![c_out], Init::Zero),
                norm: self.norm(&format!("{prefix}.norm"), c_out),
                act: Some(spec.activation),
            });
            enc.push(self.block(&format!("enc{l}"), c_out, c_out, spec.encoder_depths[l]));
        }
        let mut up = Vec::with_capacity(levels - 1);
        let mut dec = Vec::with_capacity(levels - 1);
        for l in 0..levels - 1 {
            let (c_in, c_out) = (spec.channels_at(l + 1), spec.channels_at(l));
            let prefix = format!("up{l}");
            up.push(Unit {
                conv: ConvKind::Up(UpConv { c_in, c_out }),
                weight: self.tensor(
                    format!("{prefix}.weight"),
                    vec![c_in, 2, 2, 2, c_out],
                    Init::Kaiming(c_in),
                ),
                bias: self.tensor(format!("{prefix}.bias"), vec![c_out], Init::Zero),
                norm: self.norm(&format!("{prefix}.norm"), c_out),
                act: Some(spec.activation),
            });
            dec.push(self.block(&format!("dec{l}"), c_out, c_out, spec.encoder_depths[l]));
        }
        let heads = (0..spec.num_scales)
            .map(|s| {
                let c_in = spec.channels_at(s);
                let k = spec.num_classes;
                Unit {
                    conv: ConvKind::Point(PointwiseConv { c_in, c_out: k }),
                    weight: self.tensor(format!("head{s}.weight"), vec![k, c_in], Init::Linear(c_in)),
                    bias: self.tensor(format!("head{s}.bias"), vec![k], Init::Zero),
                    norm: None,
                    act: None,
                }
            })
            .collect();
        (
            Plan {
                enc,
                down,
                up,
                dec,
                heads,
            },
            self.descs,
        )
    }
}

fn plan(spec: &NetworkSpec) -> (Plan, Vec<TensorDesc>) {
    PlanBuilder {
        spec,
        descs: Vec::new(),
    }
    .build()
}

enum Step {
    Conv {
        kind: ConvKind,
        weight: usize,
        bias: usize,
        input: usize,
        output: usize,
    },
    Norm {
        slot: NormSlot,
        stats: GroupStats,
        input: usize,
        output: usize,
    },
    Act {
        act: Activation,
        input: usize,
        output: usize,
    },
    Add {
        a: usize,
        b: usize,
        output: usize,
    },
    Upsample {
        factor: usize,
        input: usize,
        output: usize,
    },
    Softmax {
        input: usize,
        output: usize,
    },
}

/// Intermediate values of one forward pass, replayed in reverse by
/// [`Network::backward`].
pub struct Tape<T> {
    nodes: Vec<FeatureMap<T>>,
    steps: Vec<Step>,
    outputs: Vec<usize>,
}

impl<T: Real> Tape<T> {
    fn push(&mut self, value: FeatureMap<T>) -> usize {
        self.nodes.push(value);
        self.nodes.len() - 1
    }

    /// Number of recorded values, including the input.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Result of a recorded forward pass on one item.
pub struct ForwardPass<T> {
    pub pyramid: PredictionPyramid<T>,
    pub tape: Tape<T>,
}

/// The multi-scale deeply supervised encoder-decoder: an architecture plan
/// plus one set of parameters.
#[derive(Clone, Debug)]
pub struct Network<T> {
    spec: NetworkSpec,
    plan: Plan,
    params: ParameterVector<T>,
}

impl<T: Real> Network<T> {
    /// Builds a network with deterministic He-normal initialization.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (plan, descs) = plan(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterVector::new();
        for d in descs {
            let n: usize = d.shape.iter().product();
            let data = match d.init {
                Init::Zero => vec![T::zero(); n],
                Init::One => vec![T::one(); n],
                Init::Kaiming(fan_in) | Init::Linear(fan_in) => {
                    let gain = if matches!(d.init, Init::Kaiming(_)) { 2.0 } else { 1.0 };
                    let std = (gain / fan_in as f64).sqrt();
                    (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            T::of(z * std)
                        })
                        .collect()
                }
            };
            params.push(d.name, d.shape, data);
        }
        Ok(Network {
            spec: spec.clone(),
            plan,
            params,
        })
    }

    /// Wraps existing parameters (e.g. from a checkpoint), checking that they
    /// match the layout `spec` implies.
    pub fn from_parameters(spec: &NetworkSpec, params: ParameterVector<T>) -> Result<Self> {
        spec.validate()?;
        let (plan, descs) = plan(spec);
        let matches = descs.len() == params.len()
            && descs
                .iter()
                .zip(params.tensors())
                .all(|(d, t)| d.name == t.name && d.shape == t.shape);
        if !matches {
            return Err(Error::Config(
                "parameters do not match the network specification".into(),
            ));
        }
        Ok(Network {
            spec: spec.clone(),
            plan,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterVector<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterVector<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterVector<T> {
        self.params
    }

    pub fn set_params(&mut self, params: ParameterVector<T>) -> Result<()> {
        self.params.ensure_same_structure(&params)?;
        self.params = params;
        Ok(())
    }

    pub fn check_input(&self, x: &FeatureMap<T>) -> Result<()> {
        if x.channels() != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "input has {} channels, network expects {}",
                x.channels(),
                self.spec.in_channels
            )));
        }
        let div = self.spec.required_divisor();
        for (axis, &n) in x.dims().iter().enumerate() {
            if n == 0 || n % div != 0 {
                return Err(Error::Shape(format!(
                    "axis {axis} has extent {n}, which is not a positive multiple of {div}"
                )));
            }
        }
        Ok(())
    }

    fn run_unit(&self, tape: &mut Tape<T>, unit: &Unit, input: usize) -> usize {
        let y = unit.conv.forward(
            &tape.nodes[input],
            self.params.data(unit.weight),
            self.params.data(unit.bias),
        );
        let mut cur = tape.push(y);
        tape.steps.push(Step::Conv {
            kind: unit.conv,
            weight: unit.weight,
            bias: unit.bias,
            input,
            output: cur,
        });
        if let Some(slot) = unit.norm {
            let (y, stats) = slot.norm.forward(
                &tape.nodes[cur],
                self.params.data(slot.gamma),
                self.params.data(slot.beta),
            );
            let out = tape.push(y);
            tape.steps.push(Step::Norm {
                slot,
                stats,
                input: cur,
                output: out,
            });
            cur = out;
        }
        if let Some(act) = unit.act {
            let y = act.forward(&tape.nodes[cur]);
            let out = tape.push(y);
            tape.steps.push(Step::Act {
                act,
                input: cur,
                output: out,
            });
            cur = out;
        }
        cur
    }

    fn run_add(&self, tape: &mut Tape<T>, a: usize, b: usize) -> usize {
        let mut y = tape.nodes[a].clone();
        y.add_assign(&tape.nodes[b]);
        let output = tape.push(y);
        tape.steps.push(Step::Add { a, b, output });
        output
    }

    fn run_block(&self, tape: &mut Tape<T>, block: &Block, input: usize) -> usize {
        let mut cur = input;
        for unit in &block.units {
            cur = self.run_unit(tape, unit, cur);
        }
        if block.residual {
            cur = self.run_add(tape, cur, input);
        }
        cur
    }

    /// Recorded forward pass of one item (`C x H x W x D`, channels-last).
    pub fn forward(&self, x: &FeatureMap<T>) -> Result<ForwardPass<T>> {
        self.check_input(x)?;
        let mut tape = Tape {
            nodes: Vec::new(),
            steps: Vec::new(),
            outputs: Vec::new(),
        };
        let x0 = tape.push(x.clone());
        let levels = self.spec.levels();
        let mut enc_out = Vec::with_capacity(levels);
        enc_out.push(self.run_block(&mut tape, &self.plan.enc[0], x0));
        for l in 1..levels {
            let d = self.run_unit(&mut tape, &self.plan.down[l - 1], enc_out[l - 1]);
            enc_out.push(self.run_block(&mut tape, &self.plan.enc[l], d));
        }
        let mut cur = enc_out[levels - 1];
        let mut dec_out = vec![0; levels - 1];
        for l in (0..levels - 1).rev() {
            let u = self.run_unit(&mut tape, &self.plan.up[l], cur);
            let merged = self.run_add(&mut tape, u, enc_out[l]);
            cur = self.run_block(&mut tape, &self.plan.dec[l], merged);
            dec_out[l] = cur;
        }
        // Each head computes 1x1x1 conv -> upsample -> softmax. The 1x1x1
        // conv and trilinear upsampling commute exactly (interpolation
        // weights sum to one), so this equals upsample -> conv -> softmax
        // while interpolating num_classes channels instead of the decoder
        // width.
        let mut maps = Vec::with_capacity(self.spec.num_scales);
        for (s, head) in self.plan.heads.iter().enumerate() {
            let logits = self.run_unit(&mut tape, head, dec_out[s]);
            let factor = 1 << s;
            let up = if factor > 1 {
                let y = upsample_trilinear(&tape.nodes[logits], factor);
                let out = tape.push(y);
                tape.steps.push(Step::Upsample {
                    factor,
                    input: logits,
                    output: out,
                });
                out
            } else {
                logits
            };
            let p = softmax(&tape.nodes[up]);
            maps.push(p.clone());
            let out = tape.push(p);
            tape.steps.push(Step::Softmax { input: up, output: out });
            tape.outputs.push(out);
        }
        Ok(ForwardPass {
            pyramid: PredictionPyramid::new(maps)?,
            tape,
        })
    }

    /// Forward pass without keeping the tape.
    pub fn predict(&self, x: &FeatureMap<T>) -> Result<PredictionPyramid<T>> {
        self.forward(x).map(|p| p.pyramid)
    }

    /// Forward passes of several items, in parallel, results in input order.
    pub fn forward_batch(&self, batch: &[FeatureMap<T>]) -> Result<Vec<ForwardPass<T>>> {
        batch.par_iter().map(|x| self.forward(x)).collect()
    }

    /// Accumulates into `grads` the parameter gradient of a scalar whose
    /// gradient with respect to each pyramid probability map is `d_maps`.
    pub fn backward(
        &self,
        tape: &Tape<T>,
        d_maps: &[FeatureMap<T>],
        grads: &mut ParameterVector<T>,
    ) -> Result<()> {
        if d_maps.len() != tape.outputs.len() {
            return Err(Error::Shape(format!(
                "{} output gradients for {} scales",
                d_maps.len(),
                tape.outputs.len()
            )));
        }
        self.params.ensure_same_structure(grads)?;
        let mut g: Vec<Option<FeatureMap<T>>> = (0..tape.nodes.len()).map(|_| None).collect();
        fn accumulate<T: Real>(g: &mut [Option<FeatureMap<T>>], node: usize, d: FeatureMap<T>) {
            match &mut g[node] {
                Some(existing) => existing.add_assign(&d),
                slot => *slot = Some(d),
            }
        }
        for (&node, d) in tape.outputs.iter().zip(d_maps) {
            if !d.same_shape(&tape.nodes[node]) {
                return Err(Error::Shape("output gradient shape mismatch".into()));
            }
            accumulate(&mut g, node, d.clone());
        }
        let add_into = |dst: &mut [T], src: &[T]| {
            for (a, b) in dst.iter_mut().zip(src) {
                *a = *a + *b;
            }
        };
        for step in tape.steps.iter().rev() {
            match step {
                Step::Conv {
                    kind,
                    weight,
                    bias,
                    input,
                    output,
                } => {
                    let Some(dy) = g[*output].take() else { continue };
                    let cg = kind.backward(&tape.nodes[*input], self.params.data(*weight), &dy, *input != 0);
                    add_into(grads.data_mut(*weight), &cg.d_weight);
                    add_into(grads.data_mut(*bias), &cg.d_bias);
                    if let Some(dx) = cg.d_input {
                        accumulate(&mut g, *input, dx);
                    }
                }
                Step::Norm {
                    slot,
                    stats,
                    input,
                    output,
                } => {
                    let Some(dy) = g[*output].take() else { continue };
                    let (dx, dgamma, dbeta) = slot.norm.backward(
                        &tape.nodes[*input],
                        self.params.data(slot.gamma),
                        stats,
                        &dy,
                    );
                    add_into(grads.data_mut(slot.gamma), &dgamma);
                    add_into(grads.data_mut(slot.beta), &dbeta);
                    accumulate(&mut g, *input, dx);
                }
                Step::Act { act, input, output } => {
                    let Some(dy) = g[*output].take() else { continue };
                    let dx = act.backward(&tape.nodes[*input], &dy);
                    accumulate(&mut g, *input, dx);
                }
                Step::Add { a, b, output } => {
                    let Some(dy) = g[*output].take() else { continue };
                    accumulate(&mut g, *a, dy.clone());
                    accumulate(&mut g, *b, dy);
                }
                Step::Upsample {
                    factor,
                    input,
                    output,
                } => {
                    let Some(dy) = g[*output].take() else { continue };
                    accumulate(&mut g, *input, upsample_trilinear_adjoint(&dy, *factor));
                }
                Step::Softmax { input, output } => {
                    let Some(dy) = g[*output].take() else { continue };
                    accumulate(&mut g, *input, softmax_backward(&tape.nodes[*output], &dy));
                }
            }
        }
        Ok(())
    }
}
