use super::array::{gemm, Float, MatRef, Tensor};
use super::rng::RngStream;
use super::tape::{LstmParams, Mode, Op, Tape, Var};
use crate::error::{Error, Result};

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

pub(crate) fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `(batch, time, channels)` view of a rank-2 `[T × C]` or rank-3
/// `[B × T × C]` shape.
fn btc(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [t, c] => Ok((1, t, c)),
        [b, t, c] => Ok((b, t, c)),
        _ => Err(shape_err(format!("{what} expects [T×C] or [B×T×C], got {shape:?}"))),
    }
}

fn with_time(shape: &[usize], t: usize, c: usize) -> Vec<usize> {
    if shape.len() == 2 {
        vec![t, c]
    } else {
        vec![shape[0], t, c]
    }
}

/// Output length of a sliding window; `None` when the window does not fit.
pub fn window_len(len: usize, window: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    (stride > 0 && window > 0 && window <= padded).then(|| (padded - window) / stride + 1)
}

impl<T: Float> Tape<T> {
    /// `y = x·W + b` for `x: [N × I]`, `W: [I × O]`, `b: [O]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        let ([n, i], [wi, o], [bo]) = (xs, ws, bs) else {
            return Err(shape_err(format!("dense: x {xs:?}, W {ws:?}, b {bs:?}")));
        };
        let (n, i, o) = (*n, *i, *o);
        if *wi != i || *bo != o {
            return Err(shape_err(format!("dense: x {xs:?}, W {ws:?}, b {bs:?}")));
        }
        let bias = self.value(b).data();
        let mut out: Vec<T> = (0..n).flat_map(|_| bias.iter().copied()).collect();
        gemm(
            MatRef::row_major(self.value(x).data(), n, i),
            MatRef::row_major(self.value(w).data(), i, o),
            T::one(),
            &mut out,
        );
        let value = Tensor::new(vec![n, o], out)?;
        Ok(self.push(Op::Dense { x, w, b }, value, &[x, w, b]))
    }

    /// Cross-correlation of `x: [T × Cin]` (or `[B × T × Cin]`) with
    /// `kernels: [K × Cin × Cout]`, zero padding `pad` on both ends.
    /// Output length is `floor((T + 2·pad − K) / stride) + 1`.
    pub fn conv1d(&mut self, x: Var, kernels: Var, stride: usize, pad: usize) -> Result<Var> {
        let xshape = self.shape(x).to_vec();
        let (b, t, cin) = btc(&xshape, "conv1d")?;
        let [k, kcin, cout] = *self.shape(kernels) else {
            return Err(shape_err(format!("conv1d kernels must be [K×Cin×Cout], got {:?}", self.shape(kernels))));
        };
        if kcin != cin {
            return Err(shape_err(format!("conv1d: input has {cin} channels, kernels expect {kcin}")));
        }
        let t_out = window_len(t, k, stride, pad).ok_or_else(|| {
            shape_err(format!("conv1d: kernel width {k} exceeds padded length {}", t + 2 * pad))
        })?;
        let xv = self.value(x).data();
        let kv = self.value(kernels).data();
        let mut out = vec![T::zero(); b * t_out * cout];
        let tp = t + 2 * pad;
        let mut padded = if pad > 0 { vec![T::zero(); tp * cin] } else { Vec::new() };
        for bi in 0..b {
            let src = &xv[bi * t * cin..(bi + 1) * t * cin];
            let (data, offset) = if pad > 0 {
                padded[pad * cin..(pad + t) * cin].copy_from_slice(src);
                (&padded[..], 0)
            } else {
                (xv, bi * t * cin)
            };
            let windows = MatRef {
                data,
                offset,
                rows: t_out,
                cols: k * cin,
                rs: stride * cin,
                cs: 1,
            };
            gemm(
                windows,
                MatRef::row_major(kv, k * cin, cout),
                T::zero(),
                &mut out[bi * t_out * cout..(bi + 1) * t_out * cout],
            );
        }
        let value = Tensor::new(with_time(&xshape, t_out, cout), out)?;
        Ok(self.push(Op::Conv1d { x, k: kernels, stride, pad }, value, &[x, kernels]))
    }

    /// Adds `b: [C]` along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap();
        if self.shape(b) != [c] {
            return Err(shape_err(format!("add_bias: x {:?}, b {:?}", self.shape(x), self.shape(b))));
        }
        let bias = self.value(b).data().to_vec();
        let mut value = self.value(x).clone();
        for row in value.data_mut().chunks_mut(c) {
            row.iter_mut().zip(&bias).for_each(|(v, &bb)| *v = *v + bb);
        }
        Ok(self.push(Op::AddBias { x, b }, value, &[x, b]))
    }

    /// Per-channel max over windows of the time axis. Ties resolve to the
    /// lowest index, which is also where the gradient is routed.
    pub fn maxpool1d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let xshape = self.shape(x).to_vec();
        let (b, t, c) = btc(&xshape, "maxpool1d")?;
        let t_out = window_len(t, window, stride, 0)
            .ok_or_else(|| shape_err(format!("maxpool1d: window {window} exceeds length {t}")))?;
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(b * t_out * c);
        let mut argmax = Vec::with_capacity(b * t_out * c);
        for bi in 0..b {
            for to in 0..t_out {
                for ch in 0..c {
                    let mut best = (bi * t + to * stride) * c + ch;
                    for w in 1..window {
                        let idx = (bi * t + to * stride + w) * c + ch;
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(with_time(&xshape, t_out, c), out)?;
        Ok(self.push(Op::MaxPool1d { x, argmax }, value, &[x]))
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1−rate)`; eval mode
    /// is the identity.
    pub fn dropout(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut RngStream) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let scale = T::from_f64(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.uniform() < rate { T::zero() } else { scale })
            .collect();
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| *v = *v * m);
        Ok(self.push(Op::Dropout { x, mask }, value, &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push(Op::Relu { x }, value, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid { x }, value, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.tanh());
        self.push(Op::Tanh { x }, value, &[x])
    }

    /// Row-wise softmax over the last axis, computed after subtracting the
    /// row maximum.
    pub fn softmax(&mut self, x: Var) -> Var {
        let c = *self.shape(x).last().unwrap();
        let mut value = self.value(x).clone();
        for row in value.data_mut().chunks_mut(c) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            row.iter_mut().for_each(|v| *v = *v / total);
        }
        self.push(Op::Softmax { x }, value, &[x])
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut value = self.value(a).clone();
        value.data_mut().iter_mut().zip(self.value(b).data()).for_each(|(v, &w)| *v = *v + w);
        Ok(self.push(Op::Add { a, b }, value, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut value = self.value(a).clone();
        value.data_mut().iter_mut().zip(self.value(b).data()).for_each(|(v, &w)| *v = *v * w);
        Ok(self.push(Op::Mul { a, b }, value, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(Op::Scale { x, c }, value, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        self.push(Op::Sum { x }, Tensor::scalar(total), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = T::from_f64(self.value(x).len() as f64);
        let s = self.sum(x);
        self.scale(s, T::one() / n)
    }

    /// One LSTM step on a packed `[B × 2H]` state (`[h ; c]`, `None` for the
    /// zero state). Returns the packed next state.
    pub(crate) fn lstm_step(&mut self, x: Var, state: Option<Var>, p: LstmParams) -> Result<Var> {
        let [bsz, i] = *self.shape(x) else {
            return Err(shape_err(format!("lstm step input must be [B×I], got {:?}", self.shape(x))));
        };
        let [wi, h4] = *self.shape(p.input) else {
            return Err(shape_err("lstm input weight must be rank 2".into()));
        };
        let h = h4 / 4;
        if wi != i || h4 % 4 != 0 || self.shape(p.recurrent) != [h, h4] || self.shape(p.bias) != [h4] {
            return Err(shape_err(format!(
                "lstm: x {:?}, W {:?}, U {:?}, b {:?}",
                self.shape(x),
                self.shape(p.input),
                self.shape(p.recurrent),
                self.shape(p.bias)
            )));
        }
        if let Some(s) = state {
            if self.shape(s) != [bsz, 2 * h] {
                return Err(shape_err(format!("lstm state {:?}, expected [{bsz}, {}]", self.shape(s), 2 * h)));
            }
        }
        let bias = self.value(p.bias).data();
        let mut z: Vec<T> = (0..bsz).flat_map(|_| bias.iter().copied()).collect();
        gemm(
            MatRef::row_major(self.value(x).data(), bsz, i),
            MatRef::row_major(self.value(p.input).data(), i, h4),
            T::one(),
            &mut z,
        );
        if let Some(s) = state {
            let hidden = MatRef {
                data: self.value(s).data(),
                offset: 0,
                rows: bsz,
                cols: h,
                rs: 2 * h,
                cs: 1,
            };
            gemm(hidden, MatRef::row_major(self.value(p.recurrent).data(), h, h4), T::one(), &mut z);
        }
        let mut out = vec![T::zero(); bsz * 2 * h];
        let mut tanh_c = vec![T::zero(); bsz * h];
        for r in 0..bsz {
            let zr = &mut z[r * h4..(r + 1) * h4];
            for j in 0..h {
                zr[j] = sigmoid(zr[j]);
                zr[h + j] = sigmoid(zr[h + j]);
                zr[2 * h + j] = zr[2 * h + j].tanh();
                zr[3 * h + j] = sigmoid(zr[3 * h + j]);
            }
            for j in 0..h {
                let c_prev = state.map_or(T::zero(), |s| self.value(s).data()[r * 2 * h + h + j]);
                let c = zr[h + j] * c_prev + zr[j] * zr[2 * h + j];
                let tc = c.tanh();
                tanh_c[r * h + j] = tc;
                out[r * 2 * h + j] = zr[3 * h + j] * tc;
                out[r * 2 * h + h + j] = c;
            }
        }
        let value = Tensor::new(vec![bsz, 2 * h], out)?;
        let mut inputs = vec![x, p.input, p.recurrent, p.bias];
        inputs.extend(state);
        Ok(self.push(
            Op::LstmStep {
                x,
                state,
                p,
                gates: z,
                tanh_c,
            },
            value,
            &inputs,
        ))
    }

    /// Standard LSTM cell: `f, i, o = σ(Wx + Uh + b)`, `g = tanh(·)`,
    /// `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`. Accepts `[I]`/`[H]` vectors or
    /// `[B × I]`/`[B × H]` batches; returns `(h', c')` in the input's rank.
    pub fn lstm_cell(&mut self, x: Var, h: Var, c: Var, p: LstmParams) -> Result<(Var, Var)> {
        let vector = self.shape(x).len() == 1;
        let (x, h, c) = if vector {
            let row = |tape: &mut Self, v: Var| {
                let n = tape.shape(v)[0];
                tape.reshape(v, vec![1, n])
            };
            (row(self, x)?, row(self, h)?, row(self, c)?)
        } else {
            (x, h, c)
        };
        if self.shape(h) != self.shape(c) {
            return Err(shape_err(format!("lstm_cell: h {:?} vs c {:?}", self.shape(h), self.shape(c))));
        }
        let hidden = *self.shape(h).last().unwrap();
        let state = self.concat_last(h, c)?;
        let next = self.lstm_step(x, Some(state), p)?;
        let mut h2 = self.slice_last(next, 0, hidden)?;
        let mut c2 = self.slice_last(next, hidden, hidden)?;
        if vector {
            h2 = self.reshape(h2, vec![hidden])?;
            c2 = self.reshape(c2, vec![hidden])?;
        }
        Ok((h2, c2))
    }

    /// Bidirectional LSTM over `seq: [T × I]` (or `[B × T × I]`): a
    /// left-to-right pass and an independent right-to-left pass from zero
    /// state, concatenated per step as `[h_fwd ; h_bwd]`.
    pub fn bilstm(&mut self, seq: Var, fwd: LstmParams, bwd: LstmParams) -> Result<Var> {
        let shape = self.shape(seq).to_vec();
        let batched = shape.len() == 3;
        let seq = if batched {
            seq
        } else if shape.len() == 2 {
            self.reshape(seq, vec![1, shape[0], shape[1]])?
        } else {
            return Err(shape_err(format!("bilstm expects [T×I] or [B×T×I], got {shape:?}")));
        };
        let t_len = self.shape(seq)[1];
        let inputs: Vec<Var> = (0..t_len).map(|t| self.select_time(seq, t)).collect::<Result<_>>()?;
        let run = |tape: &mut Self, p: LstmParams, order: &mut dyn Iterator<Item = usize>| -> Result<Vec<(usize, Var)>> {
            let h = tape.shape(p.recurrent)[0];
            let mut state = None;
            let mut outs = Vec::with_capacity(t_len);
            for t in order {
                let s = tape.lstm_step(inputs[t], state, p)?;
                outs.push((t, tape.slice_last(s, 0, h)?));
                state = Some(s);
            }
            Ok(outs)
        };
        let forward = run(self, fwd, &mut (0..t_len))?;
        let mut backward = run(self, bwd, &mut (0..t_len).rev())?;
        backward.reverse();
        let f = self.stack_time(&forward.iter().map(|&(_, v)| v).collect::<Vec<_>>())?;
        let b = self.stack_time(&backward.iter().map(|&(_, v)| v).collect::<Vec<_>>())?;
        let out = self.concat_last(f, b)?;
        if batched {
            Ok(out)
        } else {
            let s = self.shape(out).to_vec();
            self.reshape(out, s[1..].to_vec())
        }
    }

    /// `x[..., start..start+len]`.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape.last().unwrap();
        if len == 0 || start + len > c {
            return Err(shape_err(format!("slice {start}..{} of last axis {c}", start + len)));
        }
        let data: Vec<T> = self
            .value(x)
            .data()
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = len;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(Op::SliceLast { x, start }, value, &[x]))
    }

    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(shape_err(format!("concat: {sa:?} vs {sb:?}")));
        }
        let (ca, cb) = (*sa.last().unwrap(), *sb.last().unwrap());
        let data: Vec<T> = self
            .value(a)
            .data()
            .chunks(ca)
            .zip(self.value(b).data().chunks(cb))
            .flat_map(|(ra, rb)| ra.iter().chain(rb).copied())
            .collect();
        let mut shape = sa;
        *shape.last_mut().unwrap() = ca + cb;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(Op::ConcatLast { a, b }, value, &[a, b]))
    }

    /// `x[:, t, :]` of a `[B × T × C]` tensor.
    pub fn select_time(&mut self, x: Var, t: usize) -> Result<Var> {
        let [b, tl, c] = *self.shape(x) else {
            return Err(shape_err(format!("select_time expects [B×T×C], got {:?}", self.shape(x))));
        };
        if t >= tl {
            return Err(shape_err(format!("time index {t} out of {tl}")));
        }
        let xv = self.value(x).data();
        let data: Vec<T> = (0..b).flat_map(|bi| xv[(bi * tl + t) * c..(bi * tl + t + 1) * c].iter().copied()).collect();
        let value = Tensor::new(vec![b, c], data)?;
        Ok(self.push(Op::SelectTime { x, t }, value, &[x]))
    }

    /// Stacks `[B × C]` steps into `[B × T × C]`.
    pub fn stack_time(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(shape_err("stack_time of an empty sequence".into()));
        };
        let [b, c] = *self.shape(first) else {
            return Err(shape_err(format!("stack_time expects [B×C], got {:?}", self.shape(first))));
        };
        if xs.iter().any(|&v| self.shape(v) != [b, c]) {
            return Err(shape_err("stack_time: inconsistent step shapes".into()));
        }
        let t = xs.len();
        let mut data = vec![T::zero(); b * t * c];
        for (ti, &v) in xs.iter().enumerate() {
            for (bi, row) in self.value(v).data().chunks(c).enumerate() {
                data[(bi * t + ti) * c..(bi * t + ti + 1) * c].copy_from_slice(row);
            }
        }
        let value = Tensor::new(vec![b, t, c], data)?;
        Ok(self.push(Op::StackTime { xs: xs.to_vec() }, value, xs))
    }

    /// Fixed-width readout of a bidirectional sequence `[B × T × 2H]`: the
    /// forward half at the last step joined with the backward half at step 0
    /// (each direction's final state).
    pub fn last_step(&mut self, x: Var) -> Result<Var> {
        let [b, t, c2] = *self.shape(x) else {
            return Err(shape_err(format!("last_step expects [B×T×2H], got {:?}", self.shape(x))));
        };
        if c2 % 2 != 0 {
            return Err(shape_err(format!("last_step: odd channel count {c2}")));
        }
        let h = c2 / 2;
        let xv = self.value(x).data();
        let mut data = Vec::with_capacity(b * c2);
        for bi in 0..b {
            let last = (bi * t + t - 1) * c2;
            let first = bi * t * c2;
            data.extend_from_slice(&xv[last..last + h]);
            data.extend_from_slice(&xv[first + h..first + c2]);
        }
        let value = Tensor::new(vec![b, c2], data)?;
        Ok(self.push(Op::LastStep { x }, value, &[x]))
    }

    /// Rows of `x` (first axis) picked by `idx`, repeats allowed.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let rows = shape[0];
        let width: usize = shape[1..].iter().product();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(shape_err(format!("gather index {bad} out of {rows} rows")));
        }
        let xv = self.value(x).data();
        let data: Vec<T> = idx.iter().flat_map(|&i| xv[i * width..(i + 1) * width].iter().copied()).collect();
        let mut out_shape = shape;
        out_shape[0] = idx.len();
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(Op::GatherRows { x, idx: idx.to_vec() }, value, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(Op::Reshape { x }, value, &[x]))
    }

    /// Mean binary cross-entropy over every element, probabilities clamped
    /// to `[1e-7, 1 − 1e-7]`.
    pub fn bce(&mut self, probs: Var, targets: Var) -> Result<Var> {
        self.same_shape(probs, targets, "bce")?;
        let (lo, hi) = clamp_bounds::<T>();
        let p = self.value(probs).data();
        let t = self.value(targets).data();
        let total: T = p
            .iter()
            .zip(t)
            .map(|(&p, &t)| {
                let p = p.max(lo).min(hi);
                -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
            })
            .sum();
        let value = Tensor::scalar(total / T::from_f64(p.len() as f64));
        Ok(self.push(Op::Bce { p: probs, t: targets }, value, &[probs, targets]))
    }

    /// Categorical cross-entropy averaged over rows of `[N × C]`.
    pub fn cce(&mut self, probs: Var, targets: Var) -> Result<Var> {
        self.same_shape(probs, targets, "cce")?;
        let (lo, hi) = clamp_bounds::<T>();
        let rows = self.shape(probs)[0];
        let total: T = self
            .value(probs)
            .data()
            .iter()
            .zip(self.value(targets).data())
            .map(|(&p, &t)| -(t * p.max(lo).min(hi).ln()))
            .sum();
        let value = Tensor::scalar(total / T::from_f64(rows as f64));
        Ok(self.push(Op::Cce { p: probs, t: targets }, value, &[probs, targets]))
    }
}

pub(crate) fn clamp_bounds<T: Float>() -> (T, T) {
    let eps = T::from_f64(1e-7);
    (eps, T::one() - eps)
}
