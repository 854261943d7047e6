//! Small dense networks with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat `Vec<f64>` per network so the optimizer and
//! the checkpoint format can treat every network uniformly. Matrices inside
//! the vector are row-major `out × in`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Sinusoidal embedding of `t ∈ [0, 1]` with geometric frequencies
/// `10000^(−i/half)` applied to `1000·t`. `dim` must be even.
pub fn time_embedding(t: f64, dim: usize) -> Array1<f64> {
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for i in 0..half {
        let freq = (-(10000f64).ln() * i as f64 / half as f64).exp();
        let arg = 1000.0 * t * freq;
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
    out
}

/// Contiguous slot of a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn mat<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &p[self.offset..self.offset + self.len()])
            .expect("slot in bounds")
    }

    pub fn mat_mut<'a>(&self, p: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut p[self.offset..self.offset + self.len()])
            .expect("slot in bounds")
    }

    pub fn vec<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[self.offset..self.offset + self.len()])
    }

    pub fn vec_mut<'a>(&self, p: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut p[self.offset..self.offset + self.len()])
    }
}

#[derive(Debug, Default)]
pub(crate) struct Layout {
    total: usize,
}

impl Layout {
    pub fn matrix(&mut self, rows: usize, cols: usize) -> Slot {
        let slot = Slot {
            offset: self.total,
            rows,
            cols,
        };
        self.total += rows * cols;
        slot
    }

    pub fn vector(&mut self, len: usize) -> Slot {
        self.matrix(1, len)
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Uniform `±1/√fan_in` initialisation of a weight slot.
pub(crate) fn init_uniform<R: Rng + ?Sized>(p: &mut [f64], slot: Slot, fan_in: usize, rng: &mut R) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for v in &mut p[slot.offset..slot.offset + slot.len()] {
        *v = rng.random_range(-bound..bound);
    }
}

/// `x·Wᵀ + bias` for a batch of row vectors.
pub(crate) fn affine(x: ArrayView2<f64>, w: ArrayView2<f64>, bias: ArrayView1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), w.nrows()));
    out += &bias;
    general_mat_mul(1.0, &x, &w.t(), 1.0, &mut out);
    out
}

/// Accumulates `gW += dyᵀ·x`.
pub(crate) fn accumulate_weight(dy: ArrayView2<f64>, x: ArrayView2<f64>, gw: &mut ArrayViewMut2<f64>) {
    general_mat_mul(1.0, &dy.t(), &x, 1.0, gw);
}

/// Shape of a [`ResidualMlp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub cond: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub output: usize,
}

#[derive(Debug, Clone)]
struct BlockSlots {
    w1x: Slot,
    w1c: Slot,
    b1: Slot,
    w2: Slot,
    b2: Slot,
}

/// Row-wise residual network with a shared conditioning vector.
///
/// ```text
/// h₀   = W_in·[x; c] + b_in
/// v_k  = W1_k·[silu(h_k); c] + b1_k
/// h_k+1 = h_k + W2_k·silu(v_k) + b2_k
/// y    = W_out·silu(h_K) + b_out          (W_out, b_out start at zero)
/// ```
///
/// Every row of the input batch is processed independently with the same
/// conditioning vector `c`, so the map is exactly row-permutation equivariant.
#[derive(Debug, Clone)]
pub struct ResidualMlp {
    shape: MlpShape,
    in_wx: Slot,
    in_wc: Slot,
    in_b: Slot,
    blocks: Vec<BlockSlots>,
    out_w: Slot,
    out_b: Slot,
    n_params: usize,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Array2<f64>,
    cond: Array1<f64>,
    /// Residual stream before each block, plus the final stream.
    hs: Vec<Array2<f64>>,
    vs: Vec<Array2<f64>>,
}

impl ResidualMlp {
    pub fn new(shape: MlpShape) -> Self {
        let mut layout = Layout::default();
        let in_wx = layout.matrix(shape.hidden, shape.input);
        let in_wc = layout.matrix(shape.hidden, shape.cond);
        let in_b = layout.vector(shape.hidden);
        let blocks = (0..shape.blocks)
            .map(|_| BlockSlots {
                w1x: layout.matrix(shape.hidden, shape.hidden),
                w1c: layout.matrix(shape.hidden, shape.cond),
                b1: layout.vector(shape.hidden),
                w2: layout.matrix(shape.hidden, shape.hidden),
                b2: layout.vector(shape.hidden),
            })
            .collect();
        let out_w = layout.matrix(shape.output, shape.hidden);
        let out_b = layout.vector(shape.output);
        Self {
            shape,
            in_wx,
            in_wc,
            in_b,
            blocks,
            out_w,
            out_b,
            n_params: layout.total(),
        }
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Random hidden weights, zero biases, zero output layer.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params];
        let sh = self.shape;
        init_uniform(&mut p, self.in_wx, sh.input + sh.cond, rng);
        init_uniform(&mut p, self.in_wc, sh.input + sh.cond, rng);
        for b in &self.blocks {
            init_uniform(&mut p, b.w1x, sh.hidden + sh.cond, rng);
            init_uniform(&mut p, b.w1c, sh.hidden + sh.cond, rng);
            init_uniform(&mut p, b.w2, sh.hidden, rng);
        }
        p
    }

    pub fn forward(&self, p: &[f64], x: ArrayView2<f64>, cond: ArrayView1<f64>) -> (Array2<f64>, MlpCache) {
        assert_eq!(x.ncols(), self.shape.input, "input width");
        assert_eq!(cond.len(), self.shape.cond, "conditioning width");
        assert_eq!(p.len(), self.n_params, "parameter count");

        let bias_in = &self.in_b.vec(p) + &self.in_wc.mat(p).dot(&cond);
        let mut h = affine(x, self.in_wx.mat(p), bias_in.view());
        let mut hs = Vec::with_capacity(self.blocks.len() + 1);
        let mut vs = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let u = h.mapv(silu);
            let bias1 = &b.b1.vec(p) + &b.w1c.mat(p).dot(&cond);
            let v = affine(u.view(), b.w1x.mat(p), bias1.view());
            let w = v.mapv(silu);
            let next = &h + &affine(w.view(), b.w2.mat(p), b.b2.vec(p));
            hs.push(std::mem::replace(&mut h, next));
            vs.push(v);
        }
        let y = affine(h.mapv(silu).view(), self.out_w.mat(p), self.out_b.vec(p));
        hs.push(h);
        let cache = MlpCache {
            x: x.to_owned(),
            cond: cond.to_owned(),
            hs,
            vs,
        };
        (y, cache)
    }

    /// Back-propagates `dy` (same shape as the output). Parameter gradients
    /// are accumulated into `grad` when given. Returns `(dx, dcond)`.
    pub fn backward(
        &self,
        p: &[f64],
        cache: &MlpCache,
        dy: ArrayView2<f64>,
        mut grad: Option<&mut [f64]>,
    ) -> (Array2<f64>, Array1<f64>) {
        let c = cache.cond.view();
        let mut dcond = Array1::<f64>::zeros(self.shape.cond);

        let h_last = cache.hs.last().expect("final stream");
        if let Some(g) = grad.as_deref_mut() {
            accumulate_weight(dy, h_last.mapv(silu).view(), &mut self.out_w.mat_mut(g));
            self.out_b.vec_mut(g).scaled_add(1.0, &dy.sum_axis(Axis(0)));
        }
        let mut dh = dy.dot(&self.out_w.mat(p));
        dh.zip_mut_with(h_last, |d, h| *d *= silu_grad(*h));

        for (k, b) in self.blocks.iter().enumerate().rev() {
            let h_prev = &cache.hs[k];
            let v = &cache.vs[k];
            let mut dv = dh.dot(&b.w2.mat(p));
            dv.zip_mut_with(v, |d, x| *d *= silu_grad(*x));
            let sdv = dv.sum_axis(Axis(0));
            if let Some(g) = grad.as_deref_mut() {
                accumulate_weight(dh.view(), v.mapv(silu).view(), &mut b.w2.mat_mut(g));
                b.b2.vec_mut(g).scaled_add(1.0, &dh.sum_axis(Axis(0)));
                accumulate_weight(dv.view(), h_prev.mapv(silu).view(), &mut b.w1x.mat_mut(g));
                b.b1.vec_mut(g).scaled_add(1.0, &sdv);
                let mut gw1c = b.w1c.mat_mut(g);
                outer_add(&mut gw1c, sdv.view(), c);
            }
            dcond += &b.w1c.mat(p).t().dot(&sdv);
            let mut du = dv.dot(&b.w1x.mat(p));
            du.zip_mut_with(h_prev, |d, h| *d *= silu_grad(*h));
            dh += &du;
        }

        let sdh = dh.sum_axis(Axis(0));
        if let Some(g) = grad {
            accumulate_weight(dh.view(), cache.x.view(), &mut self.in_wx.mat_mut(g));
            self.in_b.vec_mut(g).scaled_add(1.0, &sdh);
            outer_add(&mut self.in_wc.mat_mut(g), sdh.view(), c);
        }
        dcond += &self.in_wc.mat(p).t().dot(&sdh);
        let dx = dh.dot(&self.in_wx.mat(p));
        (dx, dcond)
    }
}

/// `m += a·bᵀ`.
pub(crate) fn outer_add(m: &mut ArrayViewMut2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (i, ai) in a.iter().enumerate() {
        m.slice_mut(s![i, ..]).scaled_add(*ai, &b);
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        self.steps += 1;
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
