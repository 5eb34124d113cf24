use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, same_padding};
use super::{NnError, Result, Scalar, Shape3, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { kernel: usize, stride: usize, out_channels: usize, same_padding: bool },
    MaxPool { kernel: usize, stride: usize, same_padding: bool },
    Relu,
    Flatten,
    Dense { out: usize },
}

impl LayerSpec {
    fn label(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

/// Resolved shape information for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerShape {
    pub spec: LayerSpec,
    pub input: Shape3,
    pub output: Shape3,
    /// Index of the layer's weight tensor in [`NetworkParams`]; the bias
    /// follows it.
    pub param_index: Option<usize>,
}

/// A validated layer chain with every intermediate shape resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    input: Shape3,
    layers: Vec<LayerShape>,
    params: Vec<(String, Vec<usize>)>,
}

impl Architecture {
    pub fn new(input: Shape3, specs: &[LayerSpec]) -> Result<Self> {
        if input.is_empty() {
            return Err(NnError::Shape(format!("empty input shape {input}")));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut params = Vec::new();
        let (mut convs, mut denses) = (0, 0);
        let mut shape = input;
        for (i, spec) in specs.iter().enumerate() {
            let fail = |msg: String| NnError::Shape(format!("layer {i} ({}): {msg}", spec.label()));
            let mut param_index = None;
            let output = match *spec {
                LayerSpec::Conv { kernel, stride, out_channels, same_padding: same } => {
                    if out_channels == 0 {
                        return Err(fail("needs at least one output channel".into()));
                    }
                    let (oh, _) = same_padding(shape.height, kernel, stride, same).map_err(|e| fail(e.to_string()))?;
                    let (ow, _) = same_padding(shape.width, kernel, stride, same).map_err(|e| fail(e.to_string()))?;
                    convs += 1;
                    param_index = Some(params.len());
                    params.push((format!("conv{convs}.weight"), vec![kernel, kernel, shape.channels, out_channels]));
                    params.push((format!("conv{convs}.bias"), vec![out_channels]));
                    Shape3::new(oh, ow, out_channels)
                }
                LayerSpec::MaxPool { kernel, stride, same_padding: same } => {
                    let (oh, _) = same_padding(shape.height, kernel, stride, same).map_err(|e| fail(e.to_string()))?;
                    let (ow, _) = same_padding(shape.width, kernel, stride, same).map_err(|e| fail(e.to_string()))?;
                    Shape3::new(oh, ow, shape.channels)
                }
                LayerSpec::Relu => shape,
                LayerSpec::Flatten => Shape3::new(1, 1, shape.len()),
                LayerSpec::Dense { out } => {
                    if out == 0 {
                        return Err(fail("output width must be >= 1".into()));
                    }
                    if shape.height != 1 || shape.width != 1 {
                        return Err(fail(format!("expects a flattened input, got {shape}")));
                    }
                    denses += 1;
                    param_index = Some(params.len());
                    params.push((format!("dense{denses}.weight"), vec![out, shape.channels]));
                    params.push((format!("dense{denses}.bias"), vec![out]));
                    Shape3::new(1, 1, out)
                }
            };
            layers.push(LayerShape { spec: *spec, input: shape, output, param_index });
            shape = output;
        }
        if shape.height != 1 || shape.width != 1 {
            return Err(NnError::Shape(format!("network must end in a vector, ends in {shape}")));
        }
        Ok(Self { input, layers, params })
    }

    /// The Q-network: three conv/ReLU/pool blocks, flatten, 512 hidden units,
    /// one output per action. With an 80x80 input the spatial chain is
    /// 80 -> 40 -> 20 -> 10 and flatten width is 10 * 10 * 16 = 1600.
    pub fn q_network(frame_size: usize, stack_depth: usize, num_actions: usize) -> Result<Self> {
        let pool = LayerSpec::MaxPool { kernel: 2, stride: 1, same_padding: true };
        let conv = |kernel, out_channels| LayerSpec::Conv { kernel, stride: 2, out_channels, same_padding: true };
        Self::new(
            Shape3::new(frame_size, frame_size, stack_depth),
            &[
                conv(8, 32),
                LayerSpec::Relu,
                pool,
                conv(4, 64),
                LayerSpec::Relu,
                pool,
                conv(3, 16),
                LayerSpec::Relu,
                pool,
                LayerSpec::Flatten,
                LayerSpec::Dense { out: 512 },
                LayerSpec::Relu,
                LayerSpec::Dense { out: num_actions },
            ],
        )
    }

    pub fn input_shape(&self) -> Shape3 {
        self.input
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(self.input.len(), |l| l.output.len())
    }

    /// Width after the first flatten layer, if any.
    pub fn flatten_width(&self) -> Option<usize> {
        self.layers.iter().find(|l| l.spec == LayerSpec::Flatten).map(|l| l.output.channels)
    }

    /// Output widths of the dense layers in order.
    pub fn dense_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l.spec {
                LayerSpec::Dense { out } => Some(out),
                _ => None,
            })
            .collect()
    }

    pub fn param_layout(&self) -> &[(String, Vec<usize>)] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Named parameter tensors in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    tensors: Vec<ParamTensor<T>>,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn new(tensors: Vec<ParamTensor<T>>) -> Result<Self> {
        for t in &tensors {
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(NnError::Shape(format!(
                    "tensor {} has {} values for shape {:?}",
                    t.name,
                    t.data.len(),
                    t.shape
                )));
            }
        }
        Ok(Self { tensors })
    }

    pub fn zeros(arch: &Architecture) -> Self {
        let tensors = arch
            .param_layout()
            .iter()
            .map(|(name, shape)| ParamTensor {
                name: name.clone(),
                shape: shape.clone(),
                data: vec![T::zero(); shape.iter().product()],
            })
            .collect();
        Self { tensors }
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<ParamTensor<T>> {
        self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from(*v).unwrap()).collect(),
                })
                .collect(),
        }
    }

    /// Checks names and shapes against an architecture.
    pub fn check_layout(&self, arch: &Architecture) -> Result<()> {
        let layout = arch.param_layout();
        if layout.len() != self.tensors.len() {
            return Err(NnError::Shape(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape {
                return Err(NnError::Shape(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    t.name, t.shape
                )));
            }
        }
        Ok(())
    }

    fn same_layout<U>(&self, other: &[ParamTensor<U>]) -> Result<()> {
        if self.tensors.len() != other.len()
            || self.tensors.iter().zip(other).any(|(a, b)| a.name != b.name || a.shape != b.shape)
        {
            return Err(NnError::Shape("parameter and gradient layouts differ".into()));
        }
        Ok(())
    }
}

/// Gradient of a scalar loss with respect to every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T>(NetworkParams<T>);

impl<T: Scalar> GradientSet<T> {
    pub fn zeros_like(params: &NetworkParams<T>) -> Self {
        let tensors = params
            .tensors
            .iter()
            .map(|t| ParamTensor { name: t.name.clone(), shape: t.shape.clone(), data: vec![T::zero(); t.data.len()] })
            .collect();
        Self(NetworkParams { tensors })
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.0.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.0.tensors
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.0.get(name)
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn accumulate(&mut self, other: &GradientSet<T>) -> Result<()> {
        self.0.same_layout(&other.0.tensors)?;
        for (a, b) in self.0.tensors.iter_mut().zip(&other.0.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.0.tensors {
            t.data.iter_mut().for_each(|v| *v = *v * factor);
        }
    }
}

/// Result of a forward pass. When caching was requested, every layer input is
/// kept so [`backward`] can run.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub output: Vec<T>,
    trace: Option<Trace<T>>,
}

#[derive(Debug, Clone)]
struct Trace<T> {
    inputs: Vec<Tensor3<T>>,
    argmax: Vec<Option<Vec<usize>>>,
}

impl<T> Forward<T> {
    pub fn is_cached(&self) -> bool {
        self.trace.is_some()
    }

    /// Positivity bits of every cached layer input plus every pool winner.
    /// Two passes with equal patterns lie on the same linear piece of the
    /// network, which the gradient checker uses to reject steps that cross a
    /// ReLU or max-pool kink.
    pub fn activation_pattern(&self) -> Option<Vec<u64>>
    where
        T: Scalar,
    {
        let trace = self.trace.as_ref()?;
        let mut pattern = Vec::new();
        for (input, argmax) in trace.inputs.iter().zip(&trace.argmax) {
            for chunk in input.data().chunks(64) {
                let bits = chunk.iter().enumerate().fold(0u64, |acc, (i, v)| acc | (u64::from(*v > T::zero()) << i));
                pattern.push(bits);
            }
            if let Some(am) = argmax {
                pattern.extend(am.iter().map(|&i| i as u64));
            }
        }
        Some(pattern)
    }
}

fn layer_params<'a, T>(params: &'a NetworkParams<T>, layer: &LayerShape) -> (&'a [T], &'a [T]) {
    let i = layer.param_index.expect("parametrized layer");
    (&params.tensors[i].data, &params.tensors[i + 1].data)
}

/// Runs the network. Pure: same inputs always give the same output.
pub fn forward<T: Scalar>(
    arch: &Architecture,
    params: &NetworkParams<T>,
    input: &Tensor3<T>,
    cache: bool,
) -> Result<Forward<T>> {
    if input.shape() != arch.input_shape() {
        return Err(NnError::Shape(format!(
            "input {} does not match network input {}",
            input.shape(),
            arch.input_shape()
        )));
    }
    params.check_layout(arch)?;
    let mut trace = cache.then(|| Trace { inputs: Vec::new(), argmax: Vec::new() });
    let mut current = input.clone();
    for (i, layer) in arch.layers().iter().enumerate() {
        let fail = |e: NnError| NnError::Shape(format!("layer {i} ({}): {e}", layer.spec.label()));
        let mut argmax = None;
        let next = match layer.spec {
            LayerSpec::Conv { kernel, stride, same_padding, .. } => {
                let (w, b) = layer_params(params, layer);
                layers::conv2d_forward(&current, w, b, kernel, stride, same_padding).map_err(fail)?
            }
            LayerSpec::MaxPool { kernel, stride, same_padding } => {
                let out = layers::maxpool_forward(&current, kernel, stride, same_padding).map_err(fail)?;
                argmax = Some(out.argmax);
                out.output
            }
            LayerSpec::Relu => layers::relu(&current),
            LayerSpec::Flatten => current.clone().flattened(),
            LayerSpec::Dense { .. } => {
                let (w, b) = layer_params(params, layer);
                Tensor3::vector(layers::dense_forward(current.data(), w, b).map_err(fail)?)
            }
        };
        if let Some(trace) = trace.as_mut() {
            trace.inputs.push(std::mem::replace(&mut current, next));
            trace.argmax.push(argmax);
        } else {
            current = next;
        }
    }
    Ok(Forward { output: current.into_vec(), trace })
}

/// Backpropagates `output_grad` (dL/d output) through a cached forward pass.
pub fn backward<T: Scalar>(
    arch: &Architecture,
    params: &NetworkParams<T>,
    fwd: &Forward<T>,
    output_grad: &[T],
) -> Result<GradientSet<T>> {
    let trace = fwd.trace.as_ref().ok_or(NnError::NoCache)?;
    if trace.inputs.len() != arch.layers().len() {
        return Err(NnError::Shape("cached forward pass belongs to a different network".into()));
    }
    if output_grad.len() != arch.output_len() {
        return Err(NnError::Shape(format!(
            "output gradient has {} values, network outputs {}",
            output_grad.len(),
            arch.output_len()
        )));
    }
    params.check_layout(arch)?;
    let mut grads = GradientSet::zeros_like(params);
    let mut grad = Tensor3::vector(output_grad.to_vec());
    for (i, layer) in arch.layers().iter().enumerate().rev() {
        let input = &trace.inputs[i];
        let need_input_grad = i > 0;
        grad = match layer.spec {
            LayerSpec::Conv { kernel, stride, same_padding, .. } => {
                let (w, _) = layer_params(params, layer);
                let g = layers::conv2d_backward(input, w, kernel, stride, same_padding, &grad, need_input_grad)?;
                let p = layer.param_index.unwrap();
                grads.0.tensors[p].data = g.weight;
                grads.0.tensors[p + 1].data = g.bias;
                match g.input {
                    Some(gin) => gin,
                    None => break,
                }
            }
            LayerSpec::MaxPool { .. } => {
                let argmax = trace.argmax[i].as_ref().expect("pool layers record argmax");
                layers::maxpool_backward(input.shape(), argmax, &grad)?
            }
            LayerSpec::Relu => layers::relu_backward(input, &grad)?,
            LayerSpec::Flatten => grad.reshaped(input.shape())?,
            LayerSpec::Dense { .. } => {
                let (w, _) = layer_params(params, layer);
                let g = layers::dense_backward(input.data(), w, grad.data())?;
                let p = layer.param_index.unwrap();
                grads.0.tensors[p].data = g.weight;
                grads.0.tensors[p + 1].data = g.bias;
                Tensor3::vector(g.input)
            }
        };
    }
    Ok(grads)
}

/// He-scaled uniform weights in `±sqrt(6 / fan_in)`, zero biases.
pub fn init_params<T: Scalar>(arch: &Architecture, seed: u64) -> NetworkParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(arch);
    for t in &mut params.tensors {
        if t.name.ends_with(".bias") {
            continue;
        }
        let fan_in: usize = if t.shape.len() == 4 { t.shape[0] * t.shape[1] * t.shape[2] } else { t.shape[1] };
        let bound = (6.0 / fan_in as f64).sqrt();
        for v in &mut t.data {
            *v = T::from(rng.random_range(-bound..bound)).unwrap();
        }
    }
    params
}

/// Plain gradient descent: `params -= lr * grads`.
pub fn sgd_step<T: Scalar>(params: &mut NetworkParams<T>, grads: &GradientSet<T>, lr: T) -> Result<()> {
    params.same_layout(&grads.0.tensors)?;
    for (p, g) in params.tensors.iter_mut().zip(&grads.0.tensors) {
        for (x, &dx) in p.data.iter_mut().zip(&g.data) {
            *x = *x - lr * dx;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> Architecture {
        Architecture::q_network(80, 4, 13).unwrap()
    }

    #[test]
    fn canonical_chain_node_counts() {
        let arch = canonical();
        assert_eq!(arch.flatten_width(), Some(1600));
        assert_eq!(arch.dense_widths(), vec![512, 13]);
        assert_eq!(arch.output_len(), 13);
        let spatial: Vec<usize> = arch.layers().iter().map(|l| l.output.height).collect();
        assert_eq!(&spatial[..9], &[40, 40, 40, 20, 20, 20, 10, 10, 10]);
    }

    #[test]
    fn zero_params_give_zero_q_values() {
        let arch = canonical();
        let params = NetworkParams::<f32>::zeros(&arch);
        let input = Tensor3::from_vec(arch.input_shape(), vec![0.5; 80 * 80 * 4]).unwrap();
        let out = forward(&arch, &params, &input, false).unwrap();
        assert_eq!(out.output, vec![0.0; 13]);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let arch = canonical();
        let params = NetworkParams::<f32>::zeros(&arch);
        for shape in [Shape3::new(80, 80, 3), Shape3::new(84, 84, 4), Shape3::new(80, 79, 4)] {
            let err = forward(&arch, &params, &Tensor3::zeros(shape), false).unwrap_err();
            assert!(matches!(err, NnError::Shape(_)));
        }
    }

    #[test]
    fn dense_on_unflattened_input_names_the_layer() {
        let err = Architecture::new(Shape3::new(2, 2, 1), &[LayerSpec::Dense { out: 3 }]).unwrap_err();
        assert!(err.to_string().contains("layer 0 (dense)"));
    }

    #[test]
    fn forward_is_deterministic() {
        let arch = canonical();
        let params = init_params::<f32>(&arch, 11);
        let input = Tensor3::from_vec(
            arch.input_shape(),
            (0..80 * 80 * 4).map(|i| ((i * 37) % 101) as f32 / 101.0).collect(),
        )
        .unwrap();
        let a = forward(&arch, &params, &input, false).unwrap().output;
        let b = forward(&arch, &params, &input, true).unwrap().output;
        assert_eq!(a, b);
    }

    #[test]
    fn backward_without_cache_is_state_error() {
        let arch = canonical();
        let params = NetworkParams::<f32>::zeros(&arch);
        let fwd = forward(&arch, &params, &Tensor3::zeros(arch.input_shape()), false).unwrap();
        assert!(matches!(backward(&arch, &params, &fwd, &[0.0; 13]), Err(NnError::NoCache)));
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let arch = canonical();
        let params = init_params::<f32>(&arch, 5);
        let input = Tensor3::from_vec(arch.input_shape(), vec![0.3; 80 * 80 * 4]).unwrap();
        let fwd = forward(&arch, &params, &input, true).unwrap();
        let g = backward(&arch, &params, &fwd, &[0.0; 13]).unwrap();
        assert!(g.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let arch = canonical();
        let a = init_params::<f32>(&arch, 1);
        assert_eq!(a, init_params::<f32>(&arch, 1));
        assert_ne!(a, init_params::<f32>(&arch, 2));
        for t in a.tensors() {
            if t.name.ends_with(".bias") {
                assert!(t.data.iter().all(|&v| v == 0.0));
            } else {
                let fan_in: usize = t.shape[..t.shape.len() - 1].iter().product();
                let fan_in = if t.shape.len() == 2 { t.shape[1] } else { fan_in };
                let bound = (6.0 / fan_in as f64).sqrt() as f32;
                assert!(t.data.iter().all(|v| v.abs() <= bound));
            }
        }
    }

    #[test]
    fn sgd_examples() {
        let arch = Architecture::new(Shape3::new(1, 1, 1), &[LayerSpec::Dense { out: 1 }]).unwrap();
        let mut params = NetworkParams::<f64>::zeros(&arch);
        params.tensors_mut()[0].data[0] = 1.0;
        let mut grads = GradientSet::zeros_like(&params);
        grads.tensors_mut()[0].data[0] = 0.5;

        let before = params.clone();
        sgd_step(&mut params, &grads, 0.0).unwrap();
        assert_eq!(params, before);

        sgd_step(&mut params, &GradientSet::zeros_like(&before), 0.1).unwrap();
        assert_eq!(params, before);

        sgd_step(&mut params, &grads, 0.1).unwrap();
        assert!((params.tensors()[0].data[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_mismatched_gradients() {
        let a = Architecture::new(Shape3::new(1, 1, 2), &[LayerSpec::Dense { out: 1 }]).unwrap();
        let b = Architecture::new(Shape3::new(1, 1, 3), &[LayerSpec::Dense { out: 1 }]).unwrap();
        let mut p = NetworkParams::<f64>::zeros(&a);
        let g = GradientSet::zeros_like(&NetworkParams::<f64>::zeros(&b));
        assert!(matches!(sgd_step(&mut p, &g, 0.1), Err(NnError::Shape(_))));
    }
}
