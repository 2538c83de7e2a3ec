use super::lstm::{log_softmax, windows, View};
use super::{ModelError, ModelParameters, Result};
use crate::par::{self, Parallelism};
use serde::{Deserialize, Serialize};

/// Exact prediction counts, so accuracies aggregate without rounding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub correct: u64,
    pub total: u64,
}

impl Counts {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.correct += o.correct;
        self.total += o.total;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        let mut c = Counts::default();
        for x in iter {
            c += x;
        }
        c
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Argmax next-word accuracy over all predicted positions; ties go to the
/// lowest token id. Sequences shorter than two tokens contribute nothing.
pub fn nwp_accuracy<S: AsRef<[u32]> + Sync>(
    p: &ModelParameters,
    seqs: &[S],
    par: Parallelism,
) -> Result<Counts> {
    let view = View::new(p);
    let max_len = p.config().max_seq_len;
    let parts = par::map_chunks(seqs, 8, par, |chunk| -> Result<Counts> {
        let mut c = Counts::default();
        for s in chunk {
            let s = s.as_ref();
            if s.len() < 2 {
                continue;
            }
            for w in windows(s, max_len) {
                view.run(&w[..w.len() - 1], |t, logits| {
                    c.total += 1;
                    if argmax(logits) == w[t + 1] as usize {
                        c.correct += 1;
                    }
                })?;
            }
        }
        Ok(c)
    });
    parts.into_iter().sum::<Result<Counts>>()
}

/// Mean natural-log probability of each next token.
pub fn avg_log_likelihood(p: &ModelParameters, ids: &[u32]) -> Result<f64> {
    if ids.len() < 2 {
        return Err(ModelError::TooShort(ids.len()));
    }
    let view = View::new(p);
    let mut lp = vec![0.0; p.config().vocab_size];
    let mut sum = 0.0;
    let mut n = 0usize;
    for w in windows(ids, p.config().max_seq_len) {
        view.run(&w[..w.len() - 1], |t, logits| {
            log_softmax(logits, &mut lp);
            sum += lp[w[t + 1] as usize];
            n += 1;
        })?;
    }
    Ok(sum / n as f64)
}
