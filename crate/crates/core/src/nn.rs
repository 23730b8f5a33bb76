//! Parameter storage, layers and the Adam optimizer.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::graph::{Grads, Graph, Var};
use crate::tensor::Tensor;

/// Index of a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered parameter tensors of one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(|v| &**v))
    }

    /// Finds a tensor by name.
    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Places every tensor on the graph as a leaf.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        Bound { vars: self.values.iter().map(|v| g.leaf(v.clone(), trainable)).collect() }
    }

    /// Copies values from a set with identical layout.
    pub fn copy_from(&mut self, other: &ParamSet) {
        assert_eq!(self.names, other.names, "parameter layouts differ");
        self.values = other.values.clone();
    }

    /// `self <- tau * source + (1 - tau) * self`, elementwise.
    pub fn blend_from(&mut self, source: &ParamSet, tau: f64) {
        assert_eq!(self.names, source.names, "parameter layouts differ");
        for (dst, src) in self.values.iter_mut().zip(&source.values) {
            let dst = Arc::make_mut(dst);
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }

    /// FNV-1a over names, shapes and value bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (name, t) in self.iter() {
            eat(name.as_bytes());
            eat(&(t.rows() as u64).to_le_bytes());
            eat(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Euclidean distance to another set with the same layout.
    pub fn distance(&self, other: &ParamSet) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            for (x, y) in a.data().iter().zip(b.data()) {
                acc += (x - y) * (x - y);
            }
        }
        libm::sqrt(acc)
    }
}

/// Graph handles for every tensor of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    #[inline]
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients aligned with the set; zeros where nothing flowed.
    pub fn grads(&self, grads: &Grads, set: &ParamSet) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(&set.values)
            .map(|(&v, t)| grads.get_or_zeros(v, t))
            .collect()
    }
}

fn uniform_init<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect())
}

/// Affine layer `x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamSet, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(inputs.max(1) as f64);
        let w = ps.add(alloc::format!("{name}.weight"), uniform_init(rng, inputs, outputs, bound));
        let b = ps.add(alloc::format!("{name}.bias"), uniform_init(rng, 1, outputs, bound));
        Self { w, b, inputs, outputs }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = g.matmul(x, p.var(self.w));
        g.add_bias(y, p.var(self.b))
    }
}

/// Parametric rectifier with one learned slope.
#[derive(Debug, Clone)]
pub struct PRelu {
    pub slope: ParamId,
}

impl PRelu {
    pub fn new(ps: &mut ParamSet, name: &str) -> Self {
        Self { slope: ps.add(alloc::format!("{name}.slope"), Tensor::filled(1, 1, 0.25)) }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        g.prelu(x, p.var(self.slope))
    }
}

/// Linear layer followed by a parametric rectifier.
#[derive(Debug, Clone)]
pub struct Dense {
    pub linear: Linear,
    pub act: PRelu,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamSet, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self { linear: Linear::new(ps, name, inputs, outputs, rng), act: PRelu::new(ps, name) }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = self.linear.forward(g, p, x);
        self.act.forward(g, p, y)
    }
}

/// Gated recurrent unit cell (reset, update and candidate gates).
#[derive(Debug, Clone)]
pub struct Gru {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bx: ParamId,
    pub bh: ParamId,
    pub hidden: usize,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamSet, name: &str, inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(hidden as f64);
        Self {
            wx: ps.add(alloc::format!("{name}.wx"), uniform_init(rng, inputs, 3 * hidden, bound)),
            wh: ps.add(alloc::format!("{name}.wh"), uniform_init(rng, hidden, 3 * hidden, bound)),
            bx: ps.add(alloc::format!("{name}.bx"), uniform_init(rng, 1, 3 * hidden, bound)),
            bh: ps.add(alloc::format!("{name}.bh"), uniform_init(rng, 1, 3 * hidden, bound)),
            hidden,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, h: Var) -> Var {
        let n = self.hidden;
        let gx = g.matmul(x, p.var(self.wx));
        let gx = g.add_bias(gx, p.var(self.bx));
        let gh = g.matmul(h, p.var(self.wh));
        let gh = g.add_bias(gh, p.var(self.bh));
        let (xr, xz, xn) = (g.slice(gx, 0, n), g.slice(gx, n, n), g.slice(gx, 2 * n, n));
        let (hr, hz, hn) = (g.slice(gh, 0, n), g.slice(gh, n, n), g.slice(gh, 2 * n, n));
        let r = g.add(xr, hr);
        let r = g.sigmoid(r);
        let z = g.add(xz, hz);
        let z = g.sigmoid(z);
        let rn = g.mul(r, hn);
        let cand = g.add(xn, rn);
        let cand = g.tanh(cand);
        // h' = (1 - z) * cand + z * h = cand + z * (h - cand)
        let diff = g.sub(h, cand);
        let zd = g.mul(z, diff);
        g.add(cand, zd)
    }
}

/// Adam with optional global-norm gradient clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_grad_norm: Option<f64>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(set: &ParamSet, lr: f64) -> Self {
        let zeros = |t: &Arc<Tensor>| Tensor::zeros(t.rows(), t.cols());
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
            m: set.values.iter().map(zeros).collect(),
            v: set.values.iter().map(zeros).collect(),
            t: 0,
        }
    }

    pub fn with_clip(mut self, max_norm: f64) -> Self {
        self.max_grad_norm = Some(max_norm);
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. Returns the pre-clip global gradient norm.
    pub fn step(&mut self, set: &mut ParamSet, grads: &[Tensor]) -> f64 {
        assert_eq!(grads.len(), set.len(), "gradient count mismatch");
        let norm = libm::sqrt(grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum::<f64>());
        let clip = match self.max_grad_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (i, g) in grads.iter().enumerate() {
            let value = Arc::make_mut(&mut set.values[i]);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((p, &gr), mm), vv) in value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gr = gr * clip;
                *mm = self.beta1 * *mm + (1.0 - self.beta1) * gr;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gr * gr;
                let mhat = *mm / bc1;
                let vhat = *vv / bc2;
                *p -= self.lr * mhat / (libm::sqrt(vhat) + self.eps);
            }
        }
        norm
    }
}
