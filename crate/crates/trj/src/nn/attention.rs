//! Multi-head attention over windows of time tokens, pooled to one
//! fixed-size encoding per face.

use super::params::{LeasedParams, ParamSet};
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};
use ndarray::Array2;
use rand::Rng;

/// Two heads, 32-wide keys/values, 32-neuron feed-forward.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AttentionSpec {
    pub heads: usize,
    pub key_dim: usize,
    pub ff_width: usize,
    pub out_dim: usize,
}

impl Default for AttentionSpec {
    fn default() -> Self {
        AttentionSpec {
            heads: 2,
            key_dim: 32,
            ff_width: 32,
            out_dim: 32,
        }
    }
}

/// An attention encoder mapping a window of per-face tokens to one encoding
/// per face. Tokens are laid out face-major: row `face * window + frame`.
/// Plain attention plus feed-forward, no residual connections or layer
/// normalization. Mean pooling over the window keeps the encoding width
/// constant for any window length.
#[derive(Debug, Clone)]
pub struct AttentionEncoder {
    name: String,
    spec: AttentionSpec,
    token_dim: usize,
}

impl AttentionEncoder {
    pub fn new(name: impl Into<String>, spec: AttentionSpec, token_dim: usize) -> Self {
        AttentionEncoder {
            name: name.into(),
            spec,
            token_dim,
        }
    }

    pub fn spec(&self) -> &AttentionSpec {
        &self.spec
    }

    pub fn token_dim(&self) -> usize {
        self.token_dim
    }

    pub fn out_dim(&self) -> usize {
        self.spec.out_dim
    }

    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R, zero: bool) {
        let mat = |rows: usize, cols: usize, rng: &mut R| -> Array2<f64> {
            if zero {
                Array2::zeros((rows, cols))
            } else {
                let bound = (6.0 / rows as f64).sqrt();
                Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
            }
        };
        for h in 0..self.spec.heads {
            params.insert(
                format!("{}.h{h}.wq", self.name),
                mat(self.token_dim, self.spec.key_dim, rng),
            );
            params.insert(
                format!("{}.h{h}.wk", self.name),
                mat(self.token_dim, self.spec.key_dim, rng),
            );
            params.insert(
                format!("{}.h{h}.wv", self.name),
                mat(self.token_dim, self.spec.key_dim, rng),
            );
        }
        let concat = self.spec.heads * self.spec.key_dim;
        params.insert(format!("{}.ff.w0", self.name), mat(concat, self.spec.ff_width, rng));
        params.insert(format!("{}.ff.b0", self.name), Array2::zeros((1, self.spec.ff_width)));
        params.insert(
            format!("{}.ff.w1", self.name),
            mat(self.spec.ff_width, self.spec.out_dim, rng),
        );
        params.insert(format!("{}.ff.b1", self.name), Array2::zeros((1, self.spec.out_dim)));
    }

    /// Encode face-major token blocks: `tokens` is (faces * window) x
    /// token_dim, `window` >= 1. Returns faces x out_dim.
    pub fn encode(
        &self,
        tape: &mut Tape,
        lease: &LeasedParams,
        tokens: NodeId,
        window: usize,
    ) -> Result<NodeId> {
        if window == 0 {
            return Err(Error::EmptyWindow);
        }
        let dim = tape.value(tokens).ncols();
        if dim != self.token_dim {
            return Err(Error::shape(
                format!("{} tokens", self.name),
                format!("width {}", self.token_dim),
                format!("width {dim}"),
            ));
        }
        let mut heads = Vec::with_capacity(self.spec.heads);
        let inv_sqrt = 1.0 / (self.spec.key_dim as f64).sqrt();
        for h in 0..self.spec.heads {
            let q = tape.matmul(tokens, lease.node(&format!("{}.h{h}.wq", self.name)))?;
            let k = tape.matmul(tokens, lease.node(&format!("{}.h{h}.wk", self.name)))?;
            let v = tape.matmul(tokens, lease.node(&format!("{}.h{h}.wv", self.name)))?;
            let scores = tape.block_matmul_nt(q, k, window)?;
            let scaled = tape.scale(scores, inv_sqrt);
            let weights = tape.softmax_rows(scaled);
            heads.push(tape.block_matmul_nn(weights, v, window)?);
        }
        let concat = tape.concat_cols(&heads)?;
        let ff0 = tape.matmul(concat, lease.node(&format!("{}.ff.w0", self.name)))?;
        let ff0 = tape.add_row(ff0, lease.node(&format!("{}.ff.b0", self.name)))?;
        let ff0 = tape.relu(ff0);
        let ff1 = tape.matmul(ff0, lease.node(&format!("{}.ff.w1", self.name)))?;
        let per_token = tape.add_row(ff1, lease.node(&format!("{}.ff.b1", self.name)))?;
        tape.block_mean_rows(per_token, window)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_rel_err, numeric_grad};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn tokens(faces: usize, window: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((faces * window, dim), |_| rng.gen::<f64>() - 0.5)
    }

    #[test]
    fn single_token_window_equals_value_path() {
        let enc = AttentionEncoder::new("a", AttentionSpec::default(), 7);
        let mut params = ParamSet::new();
        enc.init(&mut params, &mut ChaCha8Rng::seed_from_u64(1), false);
        let toks = tokens(3, 1, 7, 2);

        let mut tape = Tape::new();
        let lease = params.lease(&mut tape);
        let t = tape.leaf(toks.clone());
        let out = enc.encode(&mut tape, &lease, t, 1).unwrap();

        // with one token the attention weights are exactly 1, so the output
        // is the value projection pushed through the feed-forward stack
        let mut tape2 = Tape::new();
        let lease2 = params.lease(&mut tape2);
        let t2 = tape2.leaf(toks);
        let vals: Vec<NodeId> = (0..enc.spec().heads)
            .map(|h| {
                tape2
                    .matmul(t2, lease2.node(&format!("a.h{h}.wv")))
                    .unwrap()
            })
            .collect();
        let concat = tape2.concat_cols(&vals).unwrap();
        let ff0 = tape2.matmul(concat, lease2.node("a.ff.w0")).unwrap();
        let ff0 = tape2.add_row(ff0, lease2.node("a.ff.b0")).unwrap();
        let ff0 = tape2.relu(ff0);
        let ff1 = tape2.matmul(ff0, lease2.node("a.ff.w1")).unwrap();
        let expect = tape2.add_row(ff1, lease2.node("a.ff.b1")).unwrap();

        assert!(max_rel_err(tape.value(out), tape2.value(expect)) < 1e-12);
    }

    #[test]
    fn encoding_width_constant_across_window_lengths() {
        let enc = AttentionEncoder::new("a", AttentionSpec::default(), 7);
        let mut params = ParamSet::new();
        enc.init(&mut params, &mut ChaCha8Rng::seed_from_u64(1), false);
        for window in [1usize, 32, 100] {
            let mut tape = Tape::new();
            let lease = params.lease(&mut tape);
            let t = tape.leaf(tokens(2, window, 7, window as u64));
            let out = enc.encode(&mut tape, &lease, t, window).unwrap();
            assert_eq!(tape.value(out).dim(), (2, enc.out_dim()));
        }
    }

    #[test]
    fn empty_window_is_rejected() {
        let enc = AttentionEncoder::new("a", AttentionSpec::default(), 7);
        let mut params = ParamSet::new();
        enc.init(&mut params, &mut ChaCha8Rng::seed_from_u64(1), false);
        let mut tape = Tape::new();
        let lease = params.lease(&mut tape);
        let t = tape.leaf(Array2::zeros((0, 7)));
        assert!(matches!(
            enc.encode(&mut tape, &lease, t, 0),
            Err(Error::EmptyWindow)
        ));
    }

    #[test]
    fn all_parameter_gradients_match_finite_differences() {
        let enc = AttentionEncoder::new("a", AttentionSpec { heads: 2, key_dim: 4, ff_width: 5, out_dim: 3 }, 6);
        let mut params = ParamSet::new();
        enc.init(&mut params, &mut ChaCha8Rng::seed_from_u64(4), false);
        let toks = tokens(2, 3, 6, 9);

        let eval = |p: &ParamSet| {
            let mut tape = Tape::new();
            let lease = p.lease(&mut tape);
            let t = tape.leaf(toks.clone());
            let out = enc.encode(&mut tape, &lease, t, 3).unwrap();
            let s = tape.sum_sq(out);
            tape.value(s)[(0, 0)]
        };

        let mut tape = Tape::new();
        let lease = params.lease(&mut tape);
        let t = tape.leaf(toks.clone());
        let out = enc.encode(&mut tape, &lease, t, 3).unwrap();
        let s = tape.sum_sq(out);
        tape.backward(s).unwrap();

        for name in params.names().to_vec() {
            let fd = numeric_grad(params.get(&name), |v| {
                let mut p2 = params.clone();
                *p2.get_mut(&name) = v.clone();
                eval(&p2)
            });
            match tape.grad(lease.node(&name)) {
                Some(ad) => assert!(
                    max_rel_err(ad, &fd) < 1e-7,
                    "gradient mismatch on {name}: {}",
                    max_rel_err(ad, &fd)
                ),
                None => assert!(fd.iter().all(|&g| g.abs() < 1e-9), "missing grad on {name}"),
            }
        }
    }

    #[test]
    fn swapping_frame_content_across_time_slots_changes_encoding() {
        // tokens are (content | time encoding); time-awareness means the
        // encoder distinguishes which content sat at which time, so swapping
        // the content halves of two rows while their time encodings stay put
        // must move the pooled output
        let enc = AttentionEncoder::new("a", AttentionSpec::default(), 7);
        let mut params = ParamSet::new();
        enc.init(&mut params, &mut ChaCha8Rng::seed_from_u64(17), false);
        let toks = tokens(1, 4, 7, 21);
        let mut swapped = toks.clone();
        for c in 0..4 {
            let tmp = swapped[(1, c)];
            swapped[(1, c)] = swapped[(2, c)];
            swapped[(2, c)] = tmp;
        }

        let run = |t: &Array2<f64>| {
            let mut tape = Tape::new();
            let lease = params.lease(&mut tape);
            let n = tape.leaf(t.clone());
            let out = enc.encode(&mut tape, &lease, n, 4).unwrap();
            tape.value(out).clone()
        };
        let a = run(&toks);
        let b = run(&swapped);
        let diff = (&a - &b).iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(diff > 1e-9, "encoding did not react to re-paired content");
    }

    #[test]
    fn deterministic_across_repeated_calls() {
        let enc = AttentionEncoder::new("a", AttentionSpec::default(), 7);
        let mut params = ParamSet::new();
        enc.init(&mut params, &mut ChaCha8Rng::seed_from_u64(5), false);
        let toks = tokens(2, 8, 7, 6);
        let run = || {
            let mut tape = Tape::new();
            let lease = params.lease(&mut tape);
            let t = tape.leaf(toks.clone());
            let out = enc.encode(&mut tape, &lease, t, 8).unwrap();
            tape.value(out).clone()
        };
        assert_eq!(run(), run());
    }
}
