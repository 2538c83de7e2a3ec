//! Forward pass and backpropagation through time.

use super::{Layout, ModelError, ModelParameters, Result};
use crate::par::{self, Parallelism};

/// Sequences per parallel work item. Fixed so that the reduction order,
/// and therefore every bit of the result, is independent of thread count.
const CHUNK: usize = 4;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut s = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        s[0] += x[0] * y[0];
        s[1] += x[1] * y[1];
        s[2] += x[2] * y[2];
        s[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Splits `ids` into pieces of at most `max_len` tokens that overlap by
/// one token, so every next-word target is predicted exactly once.
pub fn windows(ids: &[u32], max_len: usize) -> Vec<&[u32]> {
    let max_len = max_len.max(2);
    if ids.len() <= max_len {
        return vec![ids];
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + 1 < ids.len() {
        let end = (start + max_len).min(ids.len());
        out.push(&ids[start..end]);
        start = end - 1;
    }
    out
}

/// Read-only views into the flat parameter vector.
pub(crate) struct View<'a> {
    pub v: usize,
    pub e: usize,
    pub h: usize,
    pub emb: &'a [f64],
    pub w: &'a [f64],
    pub b: &'a [f64],
    pub wo: &'a [f64],
    pub bo: &'a [f64],
}

impl<'a> View<'a> {
    pub fn new(p: &'a ModelParameters) -> Self {
        let c = p.config();
        let l: Layout = c.layout();
        let f = p.flat();
        View {
            v: c.vocab_size,
            e: c.embed_dim,
            h: c.hidden_dim,
            emb: &f[l.embedding..l.gates],
            w: &f[l.gates..l.gate_bias],
            b: &f[l.gate_bias..l.output],
            wo: &f[l.output..l.output_bias],
            bo: &f[l.output_bias..l.len],
        }
    }

    fn check(&self, ids: &[u32]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.v) {
            Some(&id) => Err(ModelError::IdOutOfRange { id, vocab: self.v }),
            None => Ok(()),
        }
    }

    /// One LSTM step. `gates` receives (i, f, g, o) after activation.
    #[inline]
    fn step(&self, id: u32, h_prev: &[f64], c_prev: &[f64], gates: &mut [f64], c: &mut [f64], h: &mut [f64], tc: &mut [f64]) {
        let (e, hd) = (self.e, self.h);
        let x = &self.emb[id as usize * e..(id as usize + 1) * e];
        let width = e + hd;
        for r in 0..4 * hd {
            let row = &self.w[r * width..(r + 1) * width];
            let z = self.b[r] + dot(&row[..e], x) + dot(&row[e..], h_prev);
            gates[r] = if (2 * hd..3 * hd).contains(&r) { z.tanh() } else { sigmoid(z) };
        }
        for j in 0..hd {
            let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            c[j] = f * c_prev[j] + i * g;
            tc[j] = c[j].tanh();
            h[j] = o * tc[j];
        }
    }

    #[inline]
    pub fn logits(&self, h: &[f64], out: &mut [f64]) {
        for (w, o) in out.iter_mut().enumerate() {
            *o = self.bo[w] + dot(&self.wo[w * self.h..(w + 1) * self.h], h);
        }
    }

    /// Runs the LSTM over `ids`, calling `visit(t, logits)` after each
    /// input token `t`.
    pub fn run(&self, ids: &[u32], mut visit: impl FnMut(usize, &[f64])) -> Result<()> {
        self.check(ids)?;
        let hd = self.h;
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut h2 = vec![0.0; hd];
        let mut c2 = vec![0.0; hd];
        let mut gates = vec![0.0; 4 * hd];
        let mut tc = vec![0.0; hd];
        let mut logits = vec![0.0; self.v];
        for (t, &id) in ids.iter().enumerate() {
            self.step(id, &h, &c, &mut gates, &mut c2, &mut h2, &mut tc);
            std::mem::swap(&mut h, &mut h2);
            std::mem::swap(&mut c, &mut c2);
            self.logits(&h, &mut logits);
            visit(t, &logits);
        }
        Ok(())
    }
}

/// Writes the log-softmax of `logits` into `out`; returns log-sum-exp.
#[inline]
pub(crate) fn log_softmax(logits: &[f64], out: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + sum.ln();
    for (o, l) in out.iter_mut().zip(logits) {
        *o = l - lse;
    }
    lse
}

/// Log-probabilities of the next token after each position of `ids`
/// (a fresh state at the start; no windowing).
pub fn forward(p: &ModelParameters, ids: &[u32]) -> Result<Vec<Vec<f64>>> {
    let view = View::new(p);
    let mut out = Vec::with_capacity(ids.len());
    view.run(ids, |_, logits| {
        let mut lp = vec![0.0; logits.len()];
        log_softmax(logits, &mut lp);
        out.push(lp);
    })?;
    Ok(out)
}

/// Summed (not averaged) loss and gradient over a set of windows.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss_sum: f64,
    pub grad: Vec<f64>,
    pub predictions: usize,
}

impl LossGrad {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.predictions as f64
    }

    /// Scales the summed gradient into the gradient of the mean loss.
    pub fn mean_grad(mut self) -> Vec<f64> {
        let s = 1.0 / self.predictions as f64;
        for g in self.grad.iter_mut() {
            *g *= s;
        }
        self.grad
    }
}

/// Mean cross-entropy over every predicted position in `batch` and its
/// exact gradient. Sequences longer than `max_seq_len` are windowed.
pub fn loss_and_grad<S: AsRef<[u32]> + Sync>(
    p: &ModelParameters,
    batch: &[S],
    par: Parallelism,
) -> Result<(f64, Vec<f64>)> {
    let lg = loss_and_grad_sum(p, batch, par)?;
    Ok((lg.mean_loss(), lg.mean_grad()))
}

pub(crate) fn loss_and_grad_sum<S: AsRef<[u32]> + Sync>(
    p: &ModelParameters,
    batch: &[S],
    par: Parallelism,
) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if let Some(s) = batch.iter().find(|s| s.as_ref().len() < 2) {
        return Err(ModelError::TooShort(s.as_ref().len()));
    }
    let view = View::new(p);
    let max_len = p.config().max_seq_len;
    let parts = par::map_chunks(batch, CHUNK, par, |chunk| -> Result<LossGrad> {
        let mut acc = LossGrad {
            loss_sum: 0.0,
            grad: vec![0.0; p.flat().len()],
            predictions: 0,
        };
        let mut scratch = Scratch::default();
        for s in chunk {
            for w in windows(s.as_ref(), max_len) {
                backprop(&view, p.config().layout(), w, &mut acc, &mut scratch)?;
            }
        }
        Ok(acc)
    });
    let mut total: Option<LossGrad> = None;
    for part in parts {
        let part = part?;
        match total.as_mut() {
            None => total = Some(part),
            Some(t) => {
                t.loss_sum += part.loss_sum;
                t.predictions += part.predictions;
                for (a, b) in t.grad.iter_mut().zip(&part.grad) {
                    *a += b;
                }
            }
        }
    }
    let total = total.expect("non-empty batch");
    if !total.loss_sum.is_finite() {
        return Err(ModelError::NonFinite("loss"));
    }
    Ok(total)
}

#[derive(Default)]
struct Scratch {
    hs: Vec<f64>,
    cs: Vec<f64>,
    gates: Vec<f64>,
    tcs: Vec<f64>,
    dlogits: Vec<f64>,
    logits: Vec<f64>,
    lp: Vec<f64>,
}

/// Accumulates loss and gradient of one window (fresh state) into `acc`.
fn backprop(view: &View, l: Layout, ids: &[u32], acc: &mut LossGrad, s: &mut Scratch) -> Result<()> {
    view.check(ids)?;
    let (v, e, hd) = (view.v, view.e, view.h);
    let n = ids.len() - 1;
    // hs/cs hold n+1 states; slot 0 is the zero initial state.
    s.hs.clear();
    s.hs.resize((n + 1) * hd, 0.0);
    s.cs.clear();
    s.cs.resize((n + 1) * hd, 0.0);
    s.gates.resize(n * 4 * hd, 0.0);
    s.tcs.resize(n * hd, 0.0);
    s.dlogits.resize(n * v, 0.0);
    s.logits.resize(v, 0.0);
    s.lp.resize(v, 0.0);

    for t in 0..n {
        let (hp, hn) = s.hs.split_at_mut((t + 1) * hd);
        let (cp, cn) = s.cs.split_at_mut((t + 1) * hd);
        view.step(
            ids[t],
            &hp[t * hd..],
            &cp[t * hd..],
            &mut s.gates[t * 4 * hd..(t + 1) * 4 * hd],
            &mut cn[..hd],
            &mut hn[..hd],
            &mut s.tcs[t * hd..(t + 1) * hd],
        );
        view.logits(&hn[..hd], &mut s.logits);
        log_softmax(&s.logits, &mut s.lp);
        let target = ids[t + 1] as usize;
        acc.loss_sum -= s.lp[target];
        let d = &mut s.dlogits[t * v..(t + 1) * v];
        for (dk, lpk) in d.iter_mut().zip(&s.lp) {
            *dk = lpk.exp();
        }
        d[target] -= 1.0;
    }
    acc.predictions += n;

    let g = &mut acc.grad;
    let width = e + hd;
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];
    let mut dh = vec![0.0; hd];
    for t in (0..n).rev() {
        let h = &s.hs[(t + 1) * hd..(t + 2) * hd];
        let h_prev = &s.hs[t * hd..(t + 1) * hd];
        let c_prev = &s.cs[t * hd..(t + 1) * hd];
        let gates = &s.gates[t * 4 * hd..(t + 1) * 4 * hd];
        let tc = &s.tcs[t * hd..(t + 1) * hd];
        let d = &s.dlogits[t * v..(t + 1) * v];

        dh.copy_from_slice(&dh_next);
        for (w, &dw) in d.iter().enumerate() {
            g[l.output_bias + w] += dw;
            axpy(dw, h, &mut g[l.output + w * hd..l.output + (w + 1) * hd]);
            axpy(dw, &view.wo[w * hd..(w + 1) * hd], &mut dh);
        }
        for j in 0..hd {
            let (i, f, gg, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            let dc = dh[j] * o * (1.0 - tc[j] * tc[j]) + dc_next[j];
            dz[j] = dc * gg * i * (1.0 - i);
            dz[hd + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * hd + j] = dc * i * (1.0 - gg * gg);
            dz[3 * hd + j] = dh[j] * tc[j] * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let id = ids[t] as usize;
        let x = &view.emb[id * e..(id + 1) * e];
        dh_next.fill(0.0);
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr == 0.0 {
                continue;
            }
            g[l.gate_bias + r] += dzr;
            let row = l.gates + r * width;
            axpy(dzr, x, &mut g[row..row + e]);
            axpy(dzr, h_prev, &mut g[row + e..row + width]);
            let wrow = &view.w[r * width..(r + 1) * width];
            axpy(dzr, &wrow[..e], &mut g[l.embedding + id * e..l.embedding + (id + 1) * e]);
            axpy(dzr, &wrow[e..], &mut dh_next);
        }
    }
    Ok(())
}
