use super::array::{gemm, Float, MatRef, Tensor};
use super::ops::clamp_bounds;
use super::tape::{Op, Tape, Var};
use crate::error::{Error, Result};

/// Gradients of a scalar with respect to every node of a tape.
pub struct Gradients<T: Float> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Float> Gradients<T> {
    /// Gradient for `v`; all zeros when `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0].clone();
        match self.grads[v.0].take() {
            Some(g) => Tensor::new(shape, g).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }
}

struct Acc<'a, T: Float> {
    grads: &'a mut [Option<Vec<T>>],
    tape: &'a Tape<T>,
}

impl<T: Float> Acc<'_, T> {
    fn wants(&self, v: Var) -> bool {
        self.tape.nodes[v.0].requires_grad
    }

    fn slot(&mut self, v: Var) -> &mut Vec<T> {
        let n = self.tape.nodes[v.0].value.len();
        self.grads[v.0].get_or_insert_with(|| vec![T::zero(); n])
    }

    fn add(&mut self, v: Var, g: &[T]) {
        if !self.wants(v) {
            return;
        }
        let slot = self.slot(v);
        slot.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b);
    }

    fn add_with(&mut self, v: Var, f: impl FnOnce(&mut [T])) {
        if self.wants(v) {
            f(self.slot(v));
        }
    }
}

impl<T: Float> Tape<T> {
    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            let mut acc = Acc {
                grads: &mut grads,
                tape: self,
            };
            self.backprop(id, &g, &mut acc);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn backprop(&self, id: usize, g: &[T], acc: &mut Acc<'_, T>) {
        let out = &self.nodes[id].value;
        let val = |v: Var| self.nodes[v.0].value.data();
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let (n, i) = (self.shape(*x)[0], self.shape(*x)[1]);
                let o = self.shape(*w)[1];
                let gm = MatRef::row_major(g, n, o);
                acc.add_with(*w, |dw| gemm(MatRef::row_major(val(*x), n, i).t(), gm, T::one(), dw));
                acc.add_with(*b, |db| {
                    for row in g.chunks(o) {
                        db.iter_mut().zip(row).for_each(|(a, &r)| *a = *a + r);
                    }
                });
                acc.add_with(*x, |dx| gemm(gm, MatRef::row_major(val(*w), i, o).t(), T::one(), dx));
            }
            Op::Conv1d { x, k, stride, pad } => self.conv1d_backward(*x, *k, *stride, *pad, g, out.shape(), acc),
            Op::AddBias { x, b } => {
                acc.add(*x, g);
                let c = self.shape(*b)[0];
                acc.add_with(*b, |db| {
                    for row in g.chunks(c) {
                        db.iter_mut().zip(row).for_each(|(a, &r)| *a = *a + r);
                    }
                });
            }
            Op::MaxPool1d { x, argmax } => acc.add_with(*x, |dx| {
                for (&src, &gv) in argmax.iter().zip(g) {
                    dx[src] = dx[src] + gv;
                }
            }),
            Op::Dropout { x, mask } => {
                let d: Vec<T> = g.iter().zip(mask).map(|(&a, &m)| a * m).collect();
                acc.add(*x, &d);
            }
            Op::Relu { x } => {
                let d: Vec<T> = g
                    .iter()
                    .zip(val(*x))
                    .map(|(&a, &v)| if v > T::zero() { a } else { T::zero() })
                    .collect();
                acc.add(*x, &d);
            }
            Op::Sigmoid { x } => {
                let d: Vec<T> = g.iter().zip(out.data()).map(|(&a, &y)| a * y * (T::one() - y)).collect();
                acc.add(*x, &d);
            }
            Op::Tanh { x } => {
                let d: Vec<T> = g.iter().zip(out.data()).map(|(&a, &y)| a * (T::one() - y * y)).collect();
                acc.add(*x, &d);
            }
            Op::Softmax { x } => {
                let c = *out.shape().last().unwrap();
                let mut d = Vec::with_capacity(g.len());
                for (gr, yr) in g.chunks(c).zip(out.data().chunks(c)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &y)| a * y).sum();
                    d.extend(gr.iter().zip(yr).map(|(&a, &y)| y * (a - dot)));
                }
                acc.add(*x, &d);
            }
            Op::Add { a, b } => {
                acc.add(*a, g);
                acc.add(*b, g);
            }
            Op::Mul { a, b } => {
                let da: Vec<T> = g.iter().zip(val(*b)).map(|(&x, &y)| x * y).collect();
                let db: Vec<T> = g.iter().zip(val(*a)).map(|(&x, &y)| x * y).collect();
                acc.add(*a, &da);
                acc.add(*b, &db);
            }
            Op::Scale { x, c } => {
                let d: Vec<T> = g.iter().map(|&a| a * *c).collect();
                acc.add(*x, &d);
            }
            Op::Sum { x } => {
                let g0 = g[0];
                acc.add_with(*x, |dx| dx.iter_mut().for_each(|v| *v = *v + g0));
            }
            Op::LstmStep { x, state, p, gates, tanh_c } => {
                let [bsz, i] = *self.shape(*x) else { unreachable!() };
                let h = self.shape(p.recurrent)[0];
                let h4 = 4 * h;
                let mut dz = vec![T::zero(); bsz * h4];
                let mut dc_prev = vec![T::zero(); bsz * h];
                for r in 0..bsz {
                    let gt = &gates[r * h4..(r + 1) * h4];
                    for j in 0..h {
                        let (ig, fg, cg, og) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                        let tc = tanh_c[r * h + j];
                        let gh = g[r * 2 * h + j];
                        let gc = g[r * 2 * h + h + j] + gh * og * (T::one() - tc * tc);
                        let c_prev = state.map_or(T::zero(), |s| val(s)[r * 2 * h + h + j]);
                        let dzr = &mut dz[r * h4..(r + 1) * h4];
                        dzr[j] = gc * cg * ig * (T::one() - ig);
                        dzr[h + j] = gc * c_prev * fg * (T::one() - fg);
                        dzr[2 * h + j] = gc * ig * (T::one() - cg * cg);
                        dzr[3 * h + j] = gh * tc * og * (T::one() - og);
                        dc_prev[r * h + j] = gc * fg;
                    }
                }
                let dzm = MatRef::row_major(&dz, bsz, h4);
                acc.add_with(p.input, |dw| gemm(MatRef::row_major(val(*x), bsz, i).t(), dzm, T::one(), dw));
                acc.add_with(p.bias, |db| {
                    for row in dz.chunks(h4) {
                        db.iter_mut().zip(row).for_each(|(a, &r)| *a = *a + r);
                    }
                });
                acc.add_with(*x, |dx| gemm(dzm, MatRef::row_major(val(p.input), i, h4).t(), T::one(), dx));
                if let Some(s) = *state {
                    let hidden = MatRef {
                        data: val(s),
                        offset: 0,
                        rows: bsz,
                        cols: h,
                        rs: 2 * h,
                        cs: 1,
                    };
                    acc.add_with(p.recurrent, |du| gemm(hidden.t(), dzm, T::one(), du));
                    if acc.wants(s) {
                        let mut dh = vec![T::zero(); bsz * h];
                        gemm(dzm, MatRef::row_major(val(p.recurrent), h, h4).t(), T::zero(), &mut dh);
                        acc.add_with(s, |ds| {
                            for r in 0..bsz {
                                for j in 0..h {
                                    ds[r * 2 * h + j] = ds[r * 2 * h + j] + dh[r * h + j];
                                    ds[r * 2 * h + h + j] = ds[r * 2 * h + h + j] + dc_prev[r * h + j];
                                }
                            }
                        });
                    }
                }
            }
            Op::SliceLast { x, start } => {
                let c = *self.shape(*x).last().unwrap();
                let len = *out.shape().last().unwrap();
                acc.add_with(*x, |dx| {
                    for (row, gr) in dx.chunks_mut(c).zip(g.chunks(len)) {
                        row[*start..*start + len].iter_mut().zip(gr).for_each(|(a, &b)| *a = *a + b);
                    }
                });
            }
            Op::ConcatLast { a, b } => {
                let ca = *self.shape(*a).last().unwrap();
                let cb = *self.shape(*b).last().unwrap();
                let ga: Vec<T> = g.chunks(ca + cb).flat_map(|r| r[..ca].iter().copied()).collect();
                let gb: Vec<T> = g.chunks(ca + cb).flat_map(|r| r[ca..].iter().copied()).collect();
                acc.add(*a, &ga);
                acc.add(*b, &gb);
            }
            Op::SelectTime { x, t } => {
                let [b, tl, c] = *self.shape(*x) else { unreachable!() };
                acc.add_with(*x, |dx| {
                    for bi in 0..b {
                        let dst = &mut dx[(bi * tl + t) * c..(bi * tl + t + 1) * c];
                        dst.iter_mut().zip(&g[bi * c..(bi + 1) * c]).for_each(|(a, &v)| *a = *a + v);
                    }
                });
            }
            Op::StackTime { xs } => {
                let [b, t, c] = *out.shape() else { unreachable!() };
                for (ti, &v) in xs.iter().enumerate() {
                    if !acc.wants(v) {
                        continue;
                    }
                    let d: Vec<T> = (0..b)
                        .flat_map(|bi| g[(bi * t + ti) * c..(bi * t + ti + 1) * c].iter().copied())
                        .collect();
                    acc.add(v, &d);
                }
            }
            Op::LastStep { x } => {
                let [b, t, c2] = *self.shape(*x) else { unreachable!() };
                let h = c2 / 2;
                acc.add_with(*x, |dx| {
                    for bi in 0..b {
                        let last = (bi * t + t - 1) * c2;
                        let first = bi * t * c2;
                        for j in 0..h {
                            dx[last + j] = dx[last + j] + g[bi * c2 + j];
                            dx[first + h + j] = dx[first + h + j] + g[bi * c2 + h + j];
                        }
                    }
                });
            }
            Op::GatherRows { x, idx } => {
                let width: usize = self.shape(*x)[1..].iter().product();
                acc.add_with(*x, |dx| {
                    for (k, &i) in idx.iter().enumerate() {
                        dx[i * width..(i + 1) * width]
                            .iter_mut()
                            .zip(&g[k * width..(k + 1) * width])
                            .for_each(|(a, &v)| *a = *a + v);
                    }
                });
            }
            Op::Reshape { x } => acc.add(*x, g),
            Op::Bce { p, t } => {
                let (lo, hi) = clamp_bounds::<T>();
                let n = T::from_f64(val(*p).len() as f64);
                let d: Vec<T> = val(*p)
                    .iter()
                    .zip(val(*t))
                    .map(|(&p, &t)| {
                        if p < lo || p > hi {
                            T::zero()
                        } else {
                            g[0] * (-t / p + (T::one() - t) / (T::one() - p)) / n
                        }
                    })
                    .collect();
                acc.add(*p, &d);
                let dt: Vec<T> = val(*p)
                    .iter()
                    .map(|&p| {
                        let p = p.max(lo).min(hi);
                        -g[0] * (p.ln() - (T::one() - p).ln()) / n
                    })
                    .collect();
                acc.add(*t, &dt);
            }
            Op::Cce { p, t } => {
                let (lo, hi) = clamp_bounds::<T>();
                let rows = T::from_f64(self.shape(*p)[0] as f64);
                let d: Vec<T> = val(*p)
                    .iter()
                    .zip(val(*t))
                    .map(|(&p, &t)| if p < lo || p > hi { T::zero() } else { -g[0] * t / (p * rows) })
                    .collect();
                acc.add(*p, &d);
                let dt: Vec<T> = val(*p).iter().map(|&p| -g[0] * p.max(lo).min(hi).ln() / rows).collect();
                acc.add(*t, &dt);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv1d_backward(
        &self,
        x: Var,
        k: Var,
        stride: usize,
        pad: usize,
        g: &[T],
        out_shape: &[usize],
        acc: &mut Acc<'_, T>,
    ) {
        let xshape = self.shape(x);
        let (b, t, cin) = if xshape.len() == 2 { (1, xshape[0], xshape[1]) } else { (xshape[0], xshape[1], xshape[2]) };
        let [kw, _, cout] = *self.shape(k) else { unreachable!() };
        let t_out = out_shape[out_shape.len() - 2];
        let xv = self.value(x).data();
        let kv = self.value(k).data();
        let tp = t + 2 * pad;
        let mut padded = if pad > 0 { vec![T::zero(); tp * cin] } else { Vec::new() };
        let wants_x = acc.wants(x);
        let mut dwin = if wants_x { vec![T::zero(); t_out * kw * cin] } else { Vec::new() };
        for bi in 0..b {
            let gb = MatRef::row_major(&g[bi * t_out * cout..(bi + 1) * t_out * cout], t_out, cout);
            let (data, offset) = if pad > 0 {
                padded[pad * cin..(pad + t) * cin].copy_from_slice(&xv[bi * t * cin..(bi + 1) * t * cin]);
                (&padded[..], 0)
            } else {
                (xv, bi * t * cin)
            };
            let windows = MatRef {
                data,
                offset,
                rows: t_out,
                cols: kw * cin,
                rs: stride * cin,
                cs: 1,
            };
            acc.add_with(k, |dk| gemm(windows.t(), gb, T::one(), dk));
            if wants_x {
                gemm(gb, MatRef::row_major(kv, kw * cin, cout).t(), T::zero(), &mut dwin);
                acc.add_with(x, |dx| {
                    let dxb = &mut dx[bi * t * cin..(bi + 1) * t * cin];
                    for to in 0..t_out {
                        for r in 0..kw * cin {
                            let pos = to * stride * cin + r;
                            if pos >= pad * cin && pos < (pad + t) * cin {
                                let i = pos - pad * cin;
                                dxb[i] = dxb[i] + dwin[to * kw * cin + r];
                            }
                        }
                    }
                });
            }
        }
    }
}
