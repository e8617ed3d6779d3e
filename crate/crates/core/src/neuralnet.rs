//! Dense MLP with hand-written reverse-mode gradients, an adaptive-moment
//! optimizer with decoupled weight decay, and a central-difference gradient
//! checker.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 1,
            Activation::Identity => 0,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            _ => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
            activation,
        }
    }

    /// Uniform weights in `±sqrt(6 / (in + out))`, zero bias.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let scale = (6.0 / (input + output) as f64).sqrt();
        let weights =
            Array2::from_shape_simple_fn((output, input), || rng.random_range(-scale..scale));
        Self {
            weights,
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    generation: u64,
}

/// Activations recorded by [`Mlp::forward_cached`] for one batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Array2<f64>>,
}

/// Parameter gradients, layer by layer, mirroring [`Mlp`] shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            weights: model.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            bias: model.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    /// Flattened in parameter declaration order: each layer's weights
    /// (row-major) followed by its bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("model needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Shape(format!("layer {i} bias length mismatch")));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("layer {i} has non-finite parameters")));
            }
        }
        if layers.last().unwrap().activation != Activation::Identity {
            return Err(Error::Shape("final layer must emit raw logits".into()));
        }
        Ok(Self {
            layers,
            generation: 0,
        })
    }

    /// `dims = [input, hidden.., output]`; relu on hidden layers.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape("need at least input and output dims".into()));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let act = if i == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                DenseLayer::init(d[0], d[1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    /// `[input, hidden.., output]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.output_dim()))
            .collect()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch width {} but model input is {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            if layer.activation == Activation::Relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            let out = match layer.activation {
                Activation::Relu => z.mapv(|v| v.max(0.0)),
                Activation::Identity => z.clone(),
            };
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok((
            a,
            ForwardCache {
                generation: self.generation,
                inputs,
                pre,
            },
        ))
    }

    /// Parameter gradients given `dL/dlogits` for the cached batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<f64>) -> Result<Gradients> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "cache from generation {}, model at {}",
                cache.generation, self.generation
            )));
        }
        let batch = cache.inputs[0].nrows();
        if upstream.dim() != (batch, self.output_dim()) {
            return Err(Error::Shape(format!(
                "upstream gradient {:?}, expected ({batch}, {})",
                upstream.dim(),
                self.output_dim()
            )));
        }
        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut g = upstream.to_owned();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            if layer.activation == Activation::Relu {
                ndarray::Zip::from(&mut g)
                    .and(&cache.pre[i])
                    .for_each(|gv, &z| {
                        if z <= 0.0 {
                            *gv = 0.0;
                        }
                    });
            }
            gw.push(g.t().dot(&cache.inputs[i]));
            gb.push(g.sum_axis(Axis(0)));
            if i > 0 {
                g = g.dot(&layer.weights);
            }
        }
        gw.reverse();
        gb.reverse();
        Ok(Gradients {
            weights: gw,
            bias: gb,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters in declaration order (see [`Gradients::flat`]).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                params.len(),
                self.n_params()
            )));
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = *it.next().unwrap();
            }
            for b in l.bias.iter_mut() {
                *b = *it.next().unwrap();
            }
        }
        self.generation += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Adaptive-moment optimizer; decay is decoupled and applied to weight
/// matrices only, after the moment update.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamConfig,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamW {
    pub fn new(config: AdamConfig, model: &Mlp) -> Self {
        Self {
            config,
            step: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != model.layers.len() {
            return Err(Error::Shape("gradient layer count mismatch".into()));
        }
        for (i, (l, (gw, gb))) in model
            .layers
            .iter()
            .zip(grads.weights.iter().zip(&grads.bias))
            .enumerate()
        {
            if gw.dim() != l.weights.dim() || gb.len() != l.bias.len() {
                return Err(Error::Shape(format!("gradient shape mismatch in layer {i}")));
            }
            if gw.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in layer{i}.weight")));
            }
            if gb.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in layer{i}.bias")));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (i, layer) in model.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.weights)
                .and(&mut self.m.weights[i])
                .and(&mut self.v.weights[i])
                .and(&grads.weights[i])
                .for_each(|p, m, v, &g| {
                    update(p, m, v, g);
                    *p -= lr * weight_decay * *p;
                });
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut self.m.bias[i])
                .and(&mut self.v.bias[i])
                .and(&grads.bias[i])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        model.generation += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Compares `analytic` against central differences of `loss` at `params`.
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(mut loss: F, params: &[f64], analytic: &[f64], h: f64) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut p = params.to_vec();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = loss(&p);
        p[i] = orig - h;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > worst.max_rel_error {
            worst = GradCheck {
                max_rel_error: rel,
                worst_index: i,
            };
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_layer(n: usize, act: Activation) -> DenseLayer {
        DenseLayer {
            weights: Array2::eye(n),
            bias: Array1::zeros(n),
            activation: act,
        }
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let m = Mlp::new(vec![
            DenseLayer::zeros(3, 4, Activation::Relu),
            DenseLayer::zeros(4, 2, Activation::Identity),
        ])
        .unwrap();
        let out = m.forward(array![[1.0, -2.0, 3.0]].view()).unwrap();
        assert_eq!(out, Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn identity_layer_passes_through() {
        let m = Mlp::new(vec![identity_layer(3, Activation::Identity)]).unwrap();
        let x = array![[1.0, -2.0, 3.5]];
        assert_eq!(m.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn relu_clips_negative() {
        let m = Mlp::new(vec![
            identity_layer(2, Activation::Relu),
            identity_layer(2, Activation::Identity),
        ])
        .unwrap();
        assert_eq!(
            m.forward(array![[-1.0, 2.0]].view()).unwrap(),
            array![[0.0, 2.0]]
        );
    }

    #[test]
    fn shape_checks() {
        let m = Mlp::new(vec![identity_layer(3, Activation::Identity)]).unwrap();
        assert!(matches!(
            m.forward(array![[1.0, 2.0]].view()),
            Err(Error::Shape(_))
        ));
        assert!(Mlp::new(vec![
            DenseLayer::zeros(3, 4, Activation::Relu),
            DenseLayer::zeros(5, 2, Activation::Identity),
        ])
        .is_err());
        assert!(Mlp::new(vec![identity_layer(2, Activation::Relu)]).is_err());
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mlp::init(&[3, 5, 2], &mut rng).unwrap();
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]];
        let (_, cache) = m.forward_cached(x.view()).unwrap();
        let g = m.backward(&cache, Array2::zeros((2, 2)).view()).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_linear_layer_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Mlp::init(&[3, 2], &mut rng).unwrap();
        let x = array![[0.5, -1.0, 2.0]];
        let up = array![[1.5, -0.25]];
        let (_, cache) = m.forward_cached(x.view()).unwrap();
        let g = m.backward(&cache, up.view()).unwrap();
        assert_eq!(g.weights[0], up.t().dot(&x));
        assert_eq!(g.bias[0], array![1.5, -0.25]);
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Mlp::init(&[2, 2], &mut rng).unwrap();
        let (_, cache) = m.forward_cached(array![[1.0, 2.0]].view()).unwrap();
        let mut opt = AdamW::new(AdamConfig::new(1e-3, 0.0), &m);
        let g = Gradients::zeros_like(&m);
        opt.step(&mut m, &g).unwrap();
        assert!(matches!(
            m.backward(&cache, array![[1.0, 1.0]].view()),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        // loss = sum(c * logits) with fixed random c
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = Mlp::init(&[5, 7, 6, 6], &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((4, 5), || rng.random_range(-1.0..1.0));
        let c = Array2::from_shape_simple_fn((4, 6), || rng.random_range(-1.0..1.0));
        let (_, cache) = model.forward_cached(x.view()).unwrap();
        let analytic = model.backward(&cache, c.view()).unwrap().flat();
        let mut probe = model.clone();
        let report = grad_check(
            |p| {
                probe.set_params_flat(p).unwrap();
                (probe.forward(x.view()).unwrap() * &c).sum()
            },
            &model.params_flat(),
            &analytic,
            1e-5,
        );
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn grad_check_quadratic() {
        let p = vec![0.3, -1.2, 2.5, 0.0];
        let analytic: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        let r = grad_check(|q| q.iter().map(|x| x * x).sum(), &p, &analytic, 1e-5);
        assert!(r.max_rel_error <= 1e-9, "{r:?}");
    }

    #[test]
    fn grad_check_constant_coordinate() {
        let p = vec![1.0, 2.0];
        let r = grad_check(|q| q[0] * q[0], &p, &[2.0, 0.0], 1e-5);
        assert!(r.max_rel_error < 1e-6);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut m = Mlp::new(vec![DenseLayer {
            weights: array![[0.5]],
            bias: array![0.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        let mut opt = AdamW::new(AdamConfig::new(1e-3, 0.0), &m);
        let g = Gradients {
            weights: vec![array![[1.0]]],
            bias: vec![array![0.0]],
        };
        opt.step(&mut m, &g).unwrap();
        let moved = 0.5 - m.layers()[0].weights[[0, 0]];
        assert!((moved - 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_zero_grads_keep_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = Mlp::init(&[3, 4, 2], &mut rng).unwrap();
        for l in &mut m.layers {
            l.bias.fill(0.7);
        }
        let before = m.params_flat();
        let mut opt = AdamW::new(AdamConfig::new(1e-3, 0.0), &m);
        let g = Gradients::zeros_like(&m);
        opt.step(&mut m, &g).unwrap();
        assert_eq!(m.params_flat(), before);
    }

    #[test]
    fn decoupled_decay_weights_only() {
        let mut m = Mlp::new(vec![DenseLayer {
            weights: array![[0.5, -2.0]],
            bias: array![3.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        let mut opt = AdamW::new(AdamConfig::new(1e-3, 1e-4), &m);
        let g = Gradients::zeros_like(&m);
        opt.step(&mut m, &g).unwrap();
        let f = 1.0 - 1e-3 * 1e-4;
        for (w, w0) in m.layers()[0].weights.iter().zip([0.5, -2.0]) {
            assert!((w - w0 * f).abs() < 1e-16);
        }
        assert_eq!(m.layers()[0].bias, array![3.0]);
    }

    #[test]
    fn non_finite_gradient_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = Mlp::init(&[2, 3, 2], &mut rng).unwrap();
        let mut opt = AdamW::new(AdamConfig::new(1e-3, 0.0), &m);
        let mut g = Gradients::zeros_like(&m);
        g.bias[1][0] = f64::NAN;
        let e = opt.step(&mut m, &g).unwrap_err();
        assert!(matches!(e, Error::Numeric(msg) if msg.contains("layer1.bias")));
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::init(&[4, 8, 3], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = Mlp::init(&[4, 8, 3], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f64 / 12.0).sqrt();
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= bound));
        assert!(a.layers()[0].bias.iter().all(|b| *b == 0.0));
    }
}
