//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Node values are owned, standard-layout `ArrayD<f64>`. A node carries an
//! optional backward closure; `backward` walks the tape in reverse and
//! accumulates gradients for every node that (transitively) depends on a
//! trainable leaf. Frozen parameters enter the graph as constants, so no
//! gradient work is spent on them.

use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayD, Axis, Ix2, Ix3, Ix4, IxDyn};

use crate::params::ParamSet;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TensorId(pub(crate) usize);

type BackFn = Box<dyn Fn(&ArrayD<f64>, &mut dyn FnMut(TensorId, ArrayD<f64>))>;

struct Node {
    value: Rc<ArrayD<f64>>,
    needs_grad: bool,
    back: Option<BackFn>,
}

pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(String, TensorId)>,
    param_ids: BTreeMap<String, TensorId>,
}

pub struct Grads {
    by_id: Vec<Option<ArrayD<f64>>>,
}

impl Grads {
    pub fn get(&self, id: TensorId) -> Option<&ArrayD<f64>> {
        self.by_id.get(id.0).and_then(|g| g.as_ref())
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), params: Vec::new(), param_ids: BTreeMap::new() }
    }

    pub fn val(&self, id: TensorId) -> &ArrayD<f64> {
        &self.nodes[id.0].value
    }

    fn val_rc(&self, id: TensorId) -> Rc<ArrayD<f64>> {
        Rc::clone(&self.nodes[id.0].value)
    }

    pub fn needs_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Value of a single-element tensor.
    pub fn scalar(&self, id: TensorId) -> f64 {
        let v = self.val(id);
        assert_eq!(v.len(), 1, "scalar() on tensor of {} elements", v.len());
        *v.iter().next().unwrap()
    }

    fn push(&mut self, value: ArrayD<f64>, needs_grad: bool, back: Option<BackFn>) -> TensorId {
        debug_assert!(value.is_standard_layout());
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node { value: Rc::new(value), needs_grad, back });
        id
    }

    /// Insert a tensor that receives no gradient.
    pub fn constant(&mut self, value: ArrayD<f64>) -> TensorId {
        self.push(value, false, None)
    }

    /// Insert a differentiable leaf (its gradient is kept by `backward`).
    pub fn leaf(&mut self, value: ArrayD<f64>) -> TensorId {
        self.push(value, true, None)
    }

    /// Pull a named parameter into the graph: a leaf when trainable, a
    /// constant when frozen. Repeated requests return the same node.
    pub fn param(&mut self, ps: &ParamSet, name: &str) -> TensorId {
        if let Some(&id) = self.param_ids.get(name) {
            return id;
        }
        let p = ps
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not initialized"));
        let id = if p.trainable {
            let id = self.leaf(p.value.clone());
            self.params.push((name.to_string(), id));
            id
        } else {
            self.constant(p.value.clone())
        };
        self.param_ids.insert(name.to_string(), id);
        id
    }

    /// Reverse pass from a scalar node. Returns per-node gradients; leaf
    /// gradients survive, interior ones are dropped once propagated.
    pub fn backward(&self, loss: TensorId) -> Grads {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward target must be scalar");
        let mut acc: Vec<Option<ArrayD<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        acc[loss.0] = Some(ArrayD::ones(self.nodes[loss.0].value.raw_dim()));
        for i in (0..=loss.0).rev() {
            if self.nodes[i].back.is_none() {
                continue;
            }
            let Some(gout) = acc[i].take() else { continue };
            let back = self.nodes[i].back.as_ref().unwrap();
            let nodes = &self.nodes;
            back(&gout, &mut |tid: TensorId, contrib: ArrayD<f64>| {
                if !nodes[tid.0].needs_grad {
                    return;
                }
                debug_assert_eq!(contrib.shape(), nodes[tid.0].value.shape());
                match &mut acc[tid.0] {
                    Some(a) => *a += &contrib,
                    slot => *slot = Some(contrib),
                }
            });
        }
        Grads { by_id: acc }
    }

    /// Gradients of all trainable parameters used in this graph, by name.
    pub fn param_grads(&self, grads: &Grads) -> BTreeMap<String, ArrayD<f64>> {
        self.params
            .iter()
            .filter_map(|(name, id)| grads.get(*id).map(|g| (name.clone(), g.clone())))
            .collect()
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (av, bv) = (self.val_rc(a), self.val_rc(b));
        assert_eq!(av.shape(), bv.shape(), "add: shape mismatch");
        let out = &*av + &*bv;
        let ng = self.needs_grad(a) || self.needs_grad(b);
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(a, g.clone());
                emit(b, g.clone());
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (av, bv) = (self.val_rc(a), self.val_rc(b));
        assert_eq!(av.shape(), bv.shape(), "sub: shape mismatch");
        let out = &*av - &*bv;
        let ng = self.needs_grad(a) || self.needs_grad(b);
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(a, g.clone());
                emit(b, g.mapv(|x| -x));
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (av, bv) = (self.val_rc(a), self.val_rc(b));
        assert_eq!(av.shape(), bv.shape(), "mul: shape mismatch");
        let out = &*av * &*bv;
        let ng = self.needs_grad(a) || self.needs_grad(b);
        let back: Option<BackFn> = ng.then(|| {
            let (av, bv) = (Rc::clone(&av), Rc::clone(&bv));
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(a, g * &*bv);
                emit(b, g * &*av);
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    pub fn scale(&mut self, a: TensorId, k: f64) -> TensorId {
        let av = self.val_rc(a);
        let out = av.mapv(|x| x * k);
        let ng = self.needs_grad(a);
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(a, g.mapv(|x| x * k));
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    /// Elementwise product with a fixed tensor (no gradient to `c`).
    pub fn mul_const(&mut self, a: TensorId, c: ArrayD<f64>) -> TensorId {
        let av = self.val_rc(a);
        assert_eq!(av.shape(), c.shape(), "mul_const: shape mismatch");
        let out = &*av * &c;
        let ng = self.needs_grad(a);
        let back: Option<BackFn> = ng.then(|| {
            let c = c.clone();
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(a, g * &c);
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    pub fn silu(&mut self, a: TensorId) -> TensorId {
        let av = self.val_rc(a);
        let out = av.mapv(|x| x * sigmoid(x));
        let ng = self.needs_grad(a);
        let back: Option<BackFn> = ng.then(|| {
            let av = Rc::clone(&av);
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let mut d = (*av).clone();
                d.zip_mut_with(g, |x, &gi| {
                    let s = sigmoid(*x);
                    *x = gi * s * (1.0 + *x * (1.0 - s));
                });
                emit(a, d);
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    /// Clamp values to [0, 1]; gradient passes only through the interior.
    pub fn clamp01(&mut self, a: TensorId) -> TensorId {
        let av = self.val_rc(a);
        let out = av.mapv(|x| x.clamp(0.0, 1.0));
        let ng = self.needs_grad(a);
        let back: Option<BackFn> = ng.then(|| {
            let av = Rc::clone(&av);
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let mut d = (*av).clone();
                d.zip_mut_with(g, |x, &gi| {
                    *x = if *x >= 0.0 && *x <= 1.0 { gi } else { 0.0 };
                });
                emit(a, d);
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    pub fn softmax_last(&mut self, a: TensorId) -> TensorId {
        let av = self.val_rc(a);
        let last = Axis(av.ndim() - 1);
        let mut out = (*av).clone();
        for mut lane in out.lanes_mut(last) {
            let max = lane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            lane.mapv_inplace(|x| (x - max).exp());
            let sum: f64 = lane.sum();
            lane.mapv_inplace(|x| x / sum);
        }
        let out_rc = Rc::new(out);
        let ng = self.needs_grad(a);
        let back: Option<BackFn> = ng.then(|| {
            let y = Rc::clone(&out_rc);
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let last = Axis(y.ndim() - 1);
                let mut d = g.clone();
                for (mut dl, yl) in d.lanes_mut(last).into_iter().zip(y.lanes(last)) {
                    let dot: f64 = dl.iter().zip(yl.iter()).map(|(gi, yi)| gi * yi).sum();
                    for (di, yi) in dl.iter_mut().zip(yl.iter()) {
                        *di = yi * (*di - dot);
                    }
                }
                emit(a, d);
            }) as BackFn
        });
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node { value: out_rc, needs_grad: ng, back });
        id
    }

    // ---- shape ----

    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> TensorId {
        let av = self.val_rc(a);
        assert_eq!(av.len(), shape.iter().product::<usize>(), "reshape: element count");
        let out = (*av).clone().into_shape_with_order(IxDyn(shape)).unwrap();
        let ng = self.needs_grad(a);
        let in_shape: Vec<usize> = av.shape().to_vec();
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(a, g.clone().into_shape_with_order(IxDyn(&in_shape)).unwrap());
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    pub fn permute(&mut self, a: TensorId, axes: &[usize]) -> TensorId {
        let av = self.val_rc(a);
        assert_eq!(av.ndim(), axes.len());
        let out = av.view().permuted_axes(axes.to_vec()).as_standard_layout().into_owned();
        let ng = self.needs_grad(a);
        let mut inverse = vec![0usize; axes.len()];
        for (i, &ax) in axes.iter().enumerate() {
            inverse[ax] = i;
        }
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(a, g.view().permuted_axes(inverse.clone()).as_standard_layout().into_owned());
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    pub fn concat(&mut self, axis: usize, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty());
        let views: Vec<Rc<ArrayD<f64>>> = parts.iter().map(|&p| self.val_rc(p)).collect();
        let out = concatenate(Axis(axis), &views.iter().map(|v| v.view()).collect::<Vec<_>>()).unwrap();
        let ng = parts.iter().any(|&p| self.needs_grad(p));
        let sizes: Vec<usize> = views.iter().map(|v| v.shape()[axis]).collect();
        let ids = parts.to_vec();
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let mut offset = 0;
                for (&id, &size) in ids.iter().zip(sizes.iter()) {
                    let piece = g
                        .slice_axis(Axis(axis), ndarray::Slice::from(offset..offset + size))
                        .as_standard_layout()
                        .into_owned();
                    emit(id, piece);
                    offset += size;
                }
            }) as BackFn
        });
        self.push(out.as_standard_layout().into_owned(), ng, back)
    }

    // ---- broadcast adds ----

    /// `x + b` with `b` broadcast over every axis but the channel axis 1.
    pub fn add_bias_ch(&mut self, x: TensorId, b: TensorId) -> TensorId {
        let (xv, bv) = (self.val_rc(x), self.val_rc(b));
        let c = xv.shape()[1];
        assert_eq!(bv.shape(), [c], "add_bias_ch: bias must be [C]");
        let mut out = (*xv).clone();
        {
            let b1 = bv.view().into_dimensionality::<ndarray::Ix1>().unwrap();
            for (ci, mut ch) in out.axis_iter_mut(Axis(1)).enumerate() {
                let add = b1[ci];
                ch.mapv_inplace(|v| v + add);
            }
        }
        let ng = self.needs_grad(x) || self.needs_grad(b);
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(x, g.clone());
                let c = g.shape()[1];
                let mut db = Array1::<f64>::zeros(c);
                for (i, ch) in g.axis_iter(Axis(1)).enumerate() {
                    db[i] = ch.sum();
                }
                emit(b, db.into_dyn());
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    /// `x + b` with `b` broadcast over all leading axes (`b` shape = last dim of `x`).
    pub fn add_bias_last(&mut self, x: TensorId, b: TensorId) -> TensorId {
        let (xv, bv) = (self.val_rc(x), self.val_rc(b));
        let d = *xv.shape().last().unwrap();
        assert_eq!(bv.shape(), [d], "add_bias_last: bias must match last dim");
        let out = &*xv + &bv.view().into_shape_with_order(IxDyn(&[d])).unwrap();
        let ng = self.needs_grad(x) || self.needs_grad(b);
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(x, g.clone());
                let d = *g.shape().last().unwrap();
                let flat = g.view().into_shape_with_order((g.len() / d, d)).unwrap();
                emit(b, flat.sum_axis(Axis(0)).into_dyn());
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    /// `x + y` with `y` broadcast along axis 0 (`y` shape = `x` shape minus axis 0).
    pub fn add_bcast0(&mut self, x: TensorId, y: TensorId) -> TensorId {
        let (xv, yv) = (self.val_rc(x), self.val_rc(y));
        assert_eq!(&xv.shape()[1..], yv.shape(), "add_bcast0: shape mismatch");
        let mut out = (*xv).clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            row += &yv.view();
        }
        let ng = self.needs_grad(x) || self.needs_grad(y);
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(x, g.clone());
                emit(y, g.sum_axis(Axis(0)));
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    /// `x[b,c,h,w] + t[b,c]` (per-sample, per-channel shift).
    pub fn add_time_bias(&mut self, x: TensorId, t: TensorId) -> TensorId {
        let (xv, tv) = (self.val_rc(x), self.val_rc(t));
        let (bsz, c) = (xv.shape()[0], xv.shape()[1]);
        assert_eq!(tv.shape(), [bsz, c], "add_time_bias: expected [B, C]");
        let t2 = tv.view().into_dimensionality::<Ix2>().unwrap();
        let mut out = (*xv).clone();
        for bi in 0..bsz {
            for ci in 0..c {
                out.slice_mut(s![bi, ci, .., ..]).mapv_inplace(|v| v + t2[[bi, ci]]);
            }
        }
        let ng = self.needs_grad(x) || self.needs_grad(t);
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                emit(x, g.clone());
                let (bsz, c) = (g.shape()[0], g.shape()[1]);
                let mut dt = Array2::<f64>::zeros((bsz, c));
                for bi in 0..bsz {
                    for ci in 0..c {
                        dt[[bi, ci]] = g.slice(s![bi, ci, .., ..]).sum();
                    }
                }
                emit(t, dt.into_dyn());
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    // ---- contractions ----

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (av, bv) = (self.val_rc(a), self.val_rc(b));
        let a2 = av.view().into_dimensionality::<Ix2>().expect("matmul lhs must be 2-d");
        let b2 = bv.view().into_dimensionality::<Ix2>().expect("matmul rhs must be 2-d");
        assert_eq!(a2.ncols(), b2.nrows(), "matmul: inner dims");
        let mut out = Array2::<f64>::zeros((a2.nrows(), b2.ncols()));
        general_mat_mul(1.0, &a2, &b2, 0.0, &mut out);
        let ng = self.needs_grad(a) || self.needs_grad(b);
        let back: Option<BackFn> = ng.then(|| {
            let (av, bv) = (Rc::clone(&av), Rc::clone(&bv));
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let a2 = av.view().into_dimensionality::<Ix2>().unwrap();
                let b2 = bv.view().into_dimensionality::<Ix2>().unwrap();
                let mut da = Array2::<f64>::zeros(a2.raw_dim());
                general_mat_mul(1.0, &g2, &b2.t(), 0.0, &mut da);
                emit(a, da.into_dyn());
                let mut db = Array2::<f64>::zeros(b2.raw_dim());
                general_mat_mul(1.0, &a2.t(), &g2, 0.0, &mut db);
                emit(b, db.into_dyn());
            }) as BackFn
        });
        self.push(out.into_dyn(), ng, back)
    }

    /// Batched matmul: `[B,m,k] x [B,k,n] -> [B,m,n]`.
    pub fn bmm(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (av, bv) = (self.val_rc(a), self.val_rc(b));
        let a3 = av.view().into_dimensionality::<Ix3>().expect("bmm lhs must be 3-d");
        let b3 = bv.view().into_dimensionality::<Ix3>().expect("bmm rhs must be 3-d");
        assert_eq!(a3.shape()[0], b3.shape()[0], "bmm: batch dims");
        assert_eq!(a3.shape()[2], b3.shape()[1], "bmm: inner dims");
        let (bsz, m, n) = (a3.shape()[0], a3.shape()[1], b3.shape()[2]);
        let mut out = Array3::<f64>::zeros((bsz, m, n));
        for i in 0..bsz {
            let (ai, bi) = (a3.index_axis(Axis(0), i), b3.index_axis(Axis(0), i));
            let mut oi = out.index_axis_mut(Axis(0), i);
            general_mat_mul(1.0, &ai, &bi, 0.0, &mut oi);
        }
        let ng = self.needs_grad(a) || self.needs_grad(b);
        let back: Option<BackFn> = ng.then(|| {
            let (av, bv) = (Rc::clone(&av), Rc::clone(&bv));
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                let a3 = av.view().into_dimensionality::<Ix3>().unwrap();
                let b3 = bv.view().into_dimensionality::<Ix3>().unwrap();
                let mut da = Array3::<f64>::zeros(a3.raw_dim());
                let mut db = Array3::<f64>::zeros(b3.raw_dim());
                for i in 0..g3.shape()[0] {
                    let gi = g3.index_axis(Axis(0), i);
                    let (ai, bi) = (a3.index_axis(Axis(0), i), b3.index_axis(Axis(0), i));
                    let mut dai = da.index_axis_mut(Axis(0), i);
                    general_mat_mul(1.0, &gi, &bi.t(), 0.0, &mut dai);
                    let mut dbi = db.index_axis_mut(Axis(0), i);
                    general_mat_mul(1.0, &ai.t(), &gi, 0.0, &mut dbi);
                }
                emit(a, da.into_dyn());
                emit(b, db.into_dyn());
            }) as BackFn
        });
        self.push(out.into_dyn(), ng, back)
    }

    /// 2-d convolution, NCHW layout, weight `[Cout, Cin, kh, kw]`. Bias is a
    /// separate `add_bias_ch`.
    pub fn conv2d(&mut self, x: TensorId, w: TensorId, stride: usize, pad: usize) -> TensorId {
        let (xv, wv) = (self.val_rc(x), self.val_rc(w));
        let x4 = xv.view().into_dimensionality::<Ix4>().expect("conv2d input must be 4-d");
        let w4 = wv.view().into_dimensionality::<Ix4>().expect("conv2d weight must be 4-d");
        let (bsz, cin, h, wdt) = (x4.shape()[0], x4.shape()[1], x4.shape()[2], x4.shape()[3]);
        let (cout, wcin, kh, kw) = (w4.shape()[0], w4.shape()[1], w4.shape()[2], w4.shape()[3]);
        assert_eq!(cin, wcin, "conv2d: channel mismatch");
        assert!(h + 2 * pad >= kh && wdt + 2 * pad >= kw, "conv2d: kernel larger than input");
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (wdt + 2 * pad - kw) / stride + 1;

        let w2 = w4.to_shape((cout, cin * kh * kw)).unwrap().into_owned();
        let mut cols = Vec::with_capacity(bsz);
        let mut out = ndarray::Array4::<f64>::zeros((bsz, cout, ho, wo));
        for bi in 0..bsz {
            let col = im2col(&x4.index_axis(Axis(0), bi), kh, kw, stride, pad, ho, wo);
            {
                let mut o2 = out
                    .index_axis_mut(Axis(0), bi)
                    .into_shape_with_order((cout, ho * wo))
                    .unwrap();
                general_mat_mul(1.0, &w2.view(), &col.view(), 0.0, &mut o2);
            }
            cols.push(col);
        }
        let cols = Rc::new(cols);
        let ng = self.needs_grad(x) || self.needs_grad(w);
        let x_needs = self.needs_grad(x);
        let w_needs = self.needs_grad(w);
        let back: Option<BackFn> = ng.then(|| {
            let wv = Rc::clone(&wv);
            let cols = Rc::clone(&cols);
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let w4 = wv.view().into_dimensionality::<Ix4>().unwrap();
                let (cout, cin, kh, kw) =
                    (w4.shape()[0], w4.shape()[1], w4.shape()[2], w4.shape()[3]);
                let w2 = w4.to_shape((cout, cin * kh * kw)).unwrap().into_owned();
                if w_needs {
                    let mut dw2 = Array2::<f64>::zeros((cout, cin * kh * kw));
                    for (bi, col) in cols.iter().enumerate() {
                        let g2 = g4
                            .index_axis(Axis(0), bi)
                            .to_shape((cout, ho * wo))
                            .unwrap()
                            .into_owned();
                        general_mat_mul(1.0, &g2.view(), &col.t(), 1.0, &mut dw2);
                    }
                    emit(w, dw2.into_shape_with_order((cout, cin, kh, kw)).unwrap().into_dyn());
                }
                if x_needs {
                    let mut dx = ndarray::Array4::<f64>::zeros((g4.shape()[0], cin, h, wdt));
                    for bi in 0..g4.shape()[0] {
                        let g2 = g4
                            .index_axis(Axis(0), bi)
                            .to_shape((cout, ho * wo))
                            .unwrap()
                            .into_owned();
                        let mut dcol = Array2::<f64>::zeros((cin * kh * kw, ho * wo));
                        general_mat_mul(1.0, &w2.t(), &g2.view(), 0.0, &mut dcol);
                        let dxb = col2im(&dcol, cin, h, wdt, kh, kw, stride, pad, ho, wo);
                        dx.index_axis_mut(Axis(0), bi).assign(&dxb);
                    }
                    emit(x, dx.into_dyn());
                }
            }) as BackFn
        });
        self.push(out.into_dyn(), ng, back)
    }

    // ---- normalization ----

    /// GroupNorm over NCHW input with per-channel affine.
    pub fn group_norm(&mut self, x: TensorId, gamma: TensorId, beta: TensorId, groups: usize) -> TensorId {
        const EPS: f64 = 1e-5;
        let (xv, gv, bv) = (self.val_rc(x), self.val_rc(gamma), self.val_rc(beta));
        let x4 = xv.view().into_dimensionality::<Ix4>().expect("group_norm input must be 4-d");
        let (bsz, c, h, w) = (x4.shape()[0], x4.shape()[1], x4.shape()[2], x4.shape()[3]);
        assert!(c % groups == 0, "group_norm: C={c} not divisible by groups={groups}");
        assert_eq!(gv.shape(), [c]);
        assert_eq!(bv.shape(), [c]);
        let cg = c / groups;
        let m = (cg * h * w) as f64;

        let mut xhat = ndarray::Array4::<f64>::zeros((bsz, c, h, w));
        let mut inv_std = Array2::<f64>::zeros((bsz, groups));
        for bi in 0..bsz {
            for gi in 0..groups {
                let sl = x4.slice(s![bi, gi * cg..(gi + 1) * cg, .., ..]);
                let mu = sl.sum() / m;
                let var = sl.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
                let istd = 1.0 / (var + EPS).sqrt();
                inv_std[[bi, gi]] = istd;
                let mut dst = xhat.slice_mut(s![bi, gi * cg..(gi + 1) * cg, .., ..]);
                dst.assign(&sl);
                dst.mapv_inplace(|v| (v - mu) * istd);
            }
        }
        let g1 = gv.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let b1 = bv.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let mut out = xhat.clone();
        for ci in 0..c {
            let (gc, bc) = (g1[ci], b1[ci]);
            out.slice_mut(s![.., ci, .., ..]).mapv_inplace(|v| v * gc + bc);
        }
        let xhat = Rc::new(xhat);
        let ng = self.needs_grad(x) || self.needs_grad(gamma) || self.needs_grad(beta);
        let back: Option<BackFn> = ng.then(|| {
            let xhat = Rc::clone(&xhat);
            let gv = Rc::clone(&gv);
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let gamma1 = gv.view().into_dimensionality::<ndarray::Ix1>().unwrap();
                // affine params
                let mut dgamma = Array1::<f64>::zeros(c);
                let mut dbeta = Array1::<f64>::zeros(c);
                for ci in 0..c {
                    let gs = g4.slice(s![.., ci, .., ..]);
                    let xs = xhat.slice(s![.., ci, .., ..]);
                    dgamma[ci] = gs.iter().zip(xs.iter()).map(|(a, b)| a * b).sum();
                    dbeta[ci] = gs.sum();
                }
                emit(gamma, dgamma.into_dyn());
                emit(beta, dbeta.into_dyn());
                // input
                let mut dx = ndarray::Array4::<f64>::zeros((bsz, c, h, w));
                for bi in 0..bsz {
                    for gi in 0..groups {
                        let ch = s![bi, gi * cg..(gi + 1) * cg, .., ..];
                        let gs = g4.slice(ch);
                        let xs = xhat.slice(ch);
                        // dyh = g * gamma (per channel)
                        let mut dyh = gs.to_owned();
                        for (k, mut plane) in dyh.axis_iter_mut(Axis(0)).enumerate() {
                            let gc = gamma1[gi * cg + k];
                            plane.mapv_inplace(|v| v * gc);
                        }
                        let mean_dyh = dyh.sum() / m;
                        let mean_dyh_xhat =
                            dyh.iter().zip(xs.iter()).map(|(a, b)| a * b).sum::<f64>() / m;
                        let istd = inv_std[[bi, gi]];
                        let mut dst = dx.slice_mut(ch);
                        ndarray::Zip::from(&mut dst).and(&dyh).and(&xs).for_each(|d, &dy, &xh| {
                            *d = istd * (dy - mean_dyh - xh * mean_dyh_xhat);
                        });
                    }
                }
                emit(x, dx.into_dyn());
            }) as BackFn
        });
        self.push(out.into_dyn(), ng, back)
    }

    /// LayerNorm over the last axis with affine.
    pub fn layer_norm_last(&mut self, x: TensorId, gamma: TensorId, beta: TensorId) -> TensorId {
        const EPS: f64 = 1e-5;
        let (xv, gv, bv) = (self.val_rc(x), self.val_rc(gamma), self.val_rc(beta));
        let d = *xv.shape().last().unwrap();
        assert_eq!(gv.shape(), [d]);
        assert_eq!(bv.shape(), [d]);
        let last = Axis(xv.ndim() - 1);
        let lanes = xv.len() / d;
        let m = d as f64;
        let mut xhat = (*xv).clone();
        let mut inv_std = Array1::<f64>::zeros(lanes);
        for (li, mut lane) in xhat.lanes_mut(last).into_iter().enumerate() {
            let mu = lane.sum() / m;
            let var = lane.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std[li] = istd;
            lane.mapv_inplace(|v| (v - mu) * istd);
        }
        let g1 = gv.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let b1 = bv.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let mut out = xhat.clone();
        for mut lane in out.lanes_mut(last) {
            for (i, v) in lane.iter_mut().enumerate() {
                *v = *v * g1[i] + b1[i];
            }
        }
        let xhat = Rc::new(xhat);
        let ng = self.needs_grad(x) || self.needs_grad(gamma) || self.needs_grad(beta);
        let back: Option<BackFn> = ng.then(|| {
            let xhat = Rc::clone(&xhat);
            let gv = Rc::clone(&gv);
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let last = Axis(g.ndim() - 1);
                let gamma1 = gv.view().into_dimensionality::<ndarray::Ix1>().unwrap();
                let mut dgamma = Array1::<f64>::zeros(d);
                let mut dbeta = Array1::<f64>::zeros(d);
                for (gl, xl) in g.lanes(last).into_iter().zip(xhat.lanes(last)) {
                    for i in 0..d {
                        dgamma[i] += gl[i] * xl[i];
                        dbeta[i] += gl[i];
                    }
                }
                emit(gamma, dgamma.into_dyn());
                emit(beta, dbeta.into_dyn());
                let mut dx = g.clone();
                for (li, (mut dl, xl)) in
                    dx.lanes_mut(last).into_iter().zip(xhat.lanes(last)).enumerate()
                {
                    let mut dyh = vec![0.0; d];
                    for i in 0..d {
                        dyh[i] = dl[i] * gamma1[i];
                    }
                    let mean_dyh: f64 = dyh.iter().sum::<f64>() / m;
                    let mean_dyh_xhat: f64 =
                        dyh.iter().zip(xl.iter()).map(|(a, b)| a * b).sum::<f64>() / m;
                    let istd = inv_std[li];
                    for i in 0..d {
                        dl[i] = istd * (dyh[i] - mean_dyh - xl[i] * mean_dyh_xhat);
                    }
                }
                emit(x, dx);
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    // ---- resampling ----

    /// Nearest-neighbour 2x upsampling of NCHW input.
    pub fn upsample2(&mut self, x: TensorId) -> TensorId {
        let xv = self.val_rc(x);
        let x4 = xv.view().into_dimensionality::<Ix4>().expect("upsample2 input must be 4-d");
        let (bsz, c, h, w) = (x4.shape()[0], x4.shape()[1], x4.shape()[2], x4.shape()[3]);
        let mut out = ndarray::Array4::<f64>::zeros((bsz, c, 2 * h, 2 * w));
        for bi in 0..bsz {
            for ci in 0..c {
                for yi in 0..h {
                    for xi in 0..w {
                        let v = x4[[bi, ci, yi, xi]];
                        out[[bi, ci, 2 * yi, 2 * xi]] = v;
                        out[[bi, ci, 2 * yi, 2 * xi + 1]] = v;
                        out[[bi, ci, 2 * yi + 1, 2 * xi]] = v;
                        out[[bi, ci, 2 * yi + 1, 2 * xi + 1]] = v;
                    }
                }
            }
        }
        let ng = self.needs_grad(x);
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let mut dx = ndarray::Array4::<f64>::zeros((bsz, c, h, w));
                for bi in 0..bsz {
                    for ci in 0..c {
                        for yi in 0..h {
                            for xi in 0..w {
                                dx[[bi, ci, yi, xi]] = g4[[bi, ci, 2 * yi, 2 * xi]]
                                    + g4[[bi, ci, 2 * yi, 2 * xi + 1]]
                                    + g4[[bi, ci, 2 * yi + 1, 2 * xi]]
                                    + g4[[bi, ci, 2 * yi + 1, 2 * xi + 1]];
                            }
                        }
                    }
                }
                emit(x, dx.into_dyn());
            }) as BackFn
        });
        self.push(out.into_dyn(), ng, back)
    }

    /// `[B,C,H,W] -> [B, C*f*f, H/f, W/f]` block rearrangement.
    pub fn space_to_depth(&mut self, x: TensorId, f: usize) -> TensorId {
        let xv = self.val_rc(x);
        let x4 = xv.view().into_dimensionality::<Ix4>().expect("space_to_depth input must be 4-d");
        let (bsz, c, h, w) = (x4.shape()[0], x4.shape()[1], x4.shape()[2], x4.shape()[3]);
        assert!(h % f == 0 && w % f == 0, "space_to_depth: H,W must divide f");
        let (ho, wo) = (h / f, w / f);
        let mut out = ndarray::Array4::<f64>::zeros((bsz, c * f * f, ho, wo));
        for bi in 0..bsz {
            for ci in 0..c {
                for dy in 0..f {
                    for dx_ in 0..f {
                        let co = ci * f * f + dy * f + dx_;
                        for yi in 0..ho {
                            for xi in 0..wo {
                                out[[bi, co, yi, xi]] = x4[[bi, ci, yi * f + dy, xi * f + dx_]];
                            }
                        }
                    }
                }
            }
        }
        let ng = self.needs_grad(x);
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let mut dx = ndarray::Array4::<f64>::zeros((bsz, c, h, w));
                for bi in 0..bsz {
                    for ci in 0..c {
                        for dy in 0..f {
                            for dx_ in 0..f {
                                let co = ci * f * f + dy * f + dx_;
                                for yi in 0..ho {
                                    for xi in 0..wo {
                                        dx[[bi, ci, yi * f + dy, xi * f + dx_]] =
                                            g4[[bi, co, yi, xi]];
                                    }
                                }
                            }
                        }
                    }
                }
                emit(x, dx.into_dyn());
            }) as BackFn
        });
        self.push(out.into_dyn(), ng, back)
    }

    /// Inverse of [`Graph::space_to_depth`].
    pub fn depth_to_space(&mut self, x: TensorId, f: usize) -> TensorId {
        let xv = self.val_rc(x);
        let x4 = xv.view().into_dimensionality::<Ix4>().expect("depth_to_space input must be 4-d");
        let (bsz, cff, h, w) = (x4.shape()[0], x4.shape()[1], x4.shape()[2], x4.shape()[3]);
        assert!(cff % (f * f) == 0, "depth_to_space: channels must divide f*f");
        let c = cff / (f * f);
        let mut out = ndarray::Array4::<f64>::zeros((bsz, c, h * f, w * f));
        for bi in 0..bsz {
            for ci in 0..c {
                for dy in 0..f {
                    for dx_ in 0..f {
                        let co = ci * f * f + dy * f + dx_;
                        for yi in 0..h {
                            for xi in 0..w {
                                out[[bi, ci, yi * f + dy, xi * f + dx_]] = x4[[bi, co, yi, xi]];
                            }
                        }
                    }
                }
            }
        }
        let ng = self.needs_grad(x);
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let mut dx = ndarray::Array4::<f64>::zeros((bsz, cff, h, w));
                for bi in 0..bsz {
                    for ci in 0..c {
                        for dy in 0..f {
                            for dx_ in 0..f {
                                let co = ci * f * f + dy * f + dx_;
                                for yi in 0..h {
                                    for xi in 0..w {
                                        dx[[bi, co, yi, xi]] =
                                            g4[[bi, ci, yi * f + dy, xi * f + dx_]];
                                    }
                                }
                            }
                        }
                    }
                }
                emit(x, dx.into_dyn());
            }) as BackFn
        });
        self.push(out.into_dyn(), ng, back)
    }

    // ---- reductions ----

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let av = self.val_rc(a);
        let n = av.len() as f64;
        let out = ndarray::arr0(av.sum() / n).into_dyn();
        let ng = self.needs_grad(a);
        let shape: Vec<usize> = av.shape().to_vec();
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let gs = *g.iter().next().unwrap();
                emit(a, ArrayD::from_elem(IxDyn(&shape), gs / n));
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    /// Mean over all axes except axis 0: `[B, ...] -> [B]`.
    pub fn mean_per_sample(&mut self, a: TensorId) -> TensorId {
        let av = self.val_rc(a);
        let bsz = av.shape()[0];
        let count = (av.len() / bsz) as f64;
        let flat = av.view().into_shape_with_order((bsz, av.len() / bsz)).unwrap();
        let out = flat.sum_axis(Axis(1)).mapv(|v| v / count);
        let ng = self.needs_grad(a);
        let shape: Vec<usize> = av.shape().to_vec();
        let back: Option<BackFn> = ng.then(|| {
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let mut dx = ArrayD::zeros(IxDyn(&shape));
                let bsz = shape[0];
                let mut flat = dx.view_mut().into_shape_with_order((bsz, 0usize.max(shape.iter().skip(1).product()))).unwrap();
                for bi in 0..bsz {
                    let gb = g[[bi]] / count;
                    flat.row_mut(bi).fill(gb);
                }
                emit(a, dx);
            }) as BackFn
        });
        self.push(out.into_dyn(), ng, back)
    }

    /// Weighted sum of a vector with fixed weights: `sum_i a[i] * w[i]`.
    pub fn dot_const(&mut self, a: TensorId, w: Array1<f64>) -> TensorId {
        let av = self.val_rc(a);
        assert_eq!(av.shape(), [w.len()], "dot_const: length mismatch");
        let val: f64 = av.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
        let out = ndarray::arr0(val).into_dyn();
        let ng = self.needs_grad(a);
        let back: Option<BackFn> = ng.then(|| {
            let w = w.clone();
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let gs = *g.iter().next().unwrap();
                emit(a, w.mapv(|x| x * gs).into_dyn());
            }) as BackFn
        });
        self.push(out, ng, back)
    }

    // ---- lookup ----

    /// Row gather: `table[V, d]`, integer `ids[B, N]` -> `[B, N, d]`.
    pub fn embedding(&mut self, table: TensorId, ids: Array2<usize>) -> TensorId {
        let tv = self.val_rc(table);
        let t2 = tv.view().into_dimensionality::<Ix2>().expect("embedding table must be 2-d");
        let (vocab, d) = (t2.shape()[0], t2.shape()[1]);
        let (bsz, n) = (ids.shape()[0], ids.shape()[1]);
        let mut out = Array3::<f64>::zeros((bsz, n, d));
        for bi in 0..bsz {
            for ni in 0..n {
                let row = ids[[bi, ni]];
                assert!(row < vocab, "embedding: id {row} out of range {vocab}");
                out.slice_mut(s![bi, ni, ..]).assign(&t2.row(row));
            }
        }
        let ng = self.needs_grad(table);
        let back: Option<BackFn> = ng.then(|| {
            let ids = ids.clone();
            Box::new(move |g: &ArrayD<f64>, emit: &mut dyn FnMut(TensorId, ArrayD<f64>)| {
                let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                let mut dt = Array2::<f64>::zeros((vocab, d));
                for bi in 0..ids.shape()[0] {
                    for ni in 0..ids.shape()[1] {
                        let row = ids[[bi, ni]];
                        let mut dst = dt.row_mut(row);
                        dst += &g3.slice(s![bi, ni, ..]);
                    }
                }
                emit(table, dt.into_dyn());
            }) as BackFn
        });
        self.push(out.into_dyn(), ng, back)
    }

    // ---- composites ----

    /// Affine map on the last axis: `x[..., din] @ w[din, dout] + b[dout]`.
    pub fn linear(&mut self, x: TensorId, w: TensorId, b: TensorId) -> TensorId {
        let in_shape: Vec<usize> = self.val(x).shape().to_vec();
        let din = *in_shape.last().unwrap();
        let dout = self.val(w).shape()[1];
        let rows: usize = in_shape[..in_shape.len() - 1].iter().product();
        let flat = self.reshape(x, &[rows, din]);
        let y = self.matmul(flat, w);
        let mut out_shape = in_shape;
        *out_shape.last_mut().unwrap() = dout;
        let y = self.reshape(y, &out_shape);
        self.add_bias_last(y, b)
    }

    /// Mean squared error between two same-shape tensors.
    pub fn mse(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let d = self.sub(a, b);
        let d2 = self.mul(d, d);
        self.mean_all(d2)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `[Cin, H, W] -> [Cin*kh*kw, Ho*Wo]` patch matrix.
fn im2col(
    x: &ndarray::ArrayView3<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Array2<f64> {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut xp = Array3::<f64>::zeros((cin, h + 2 * pad, w + 2 * pad));
    xp.slice_mut(s![.., pad..pad + h, pad..pad + w]).assign(x);
    let mut col = Array2::<f64>::zeros((cin * kh * kw, ho * wo));
    for ci in 0..cin {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let patch = xp.slice(s![
                    ci,
                    ky..ky + (ho - 1) * stride + 1;stride,
                    kx..kx + (wo - 1) * stride + 1;stride
                ]);
                for (dst, src) in col.row_mut(row).iter_mut().zip(patch.iter()) {
                    *dst = *src;
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter patch-gradients back onto the input plane.
#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &Array2<f64>,
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Array3<f64> {
    let mut xp = Array3::<f64>::zeros((cin, h + 2 * pad, w + 2 * pad));
    for ci in 0..cin {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let mut patch = xp.slice_mut(s![
                    ci,
                    ky..ky + (ho - 1) * stride + 1;stride,
                    kx..kx + (wo - 1) * stride + 1;stride
                ]);
                for (dst, src) in patch.iter_mut().zip(col.row(row).iter()) {
                    *dst += *src;
                }
            }
        }
    }
    xp.slice(s![.., pad..pad + h, pad..pad + w]).to_owned()
}

/// Sinusoidal timestep features (no gradient; build as a constant).
pub fn sinusoidal_embedding(ts: &[usize], dim: usize, max_period: f64) -> Array2<f64> {
    assert!(dim % 2 == 0, "embedding dim must be even");
    let half = dim / 2;
    let mut out = Array2::<f64>::zeros((ts.len(), dim));
    for (bi, &t) in ts.iter().enumerate() {
        for i in 0..half {
            let freq = (-(i as f64) * max_period.ln() / (half as f64 - 1.0).max(1.0)).exp();
            let arg = t as f64 * freq;
            out[[bi, i]] = arg.sin();
            out[[bi, half + i]] = arg.cos();
        }
    }
    out
}
