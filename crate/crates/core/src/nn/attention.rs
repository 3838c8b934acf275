use super::graph::{Graph, Var};
use super::tensor::Scalar;
use crate::error::{Error, Result};

/// Projection matrices of one multi-head self-attention block, each
/// `[d_model, d_model]`. Head `h` uses columns `h·d_k .. (h+1)·d_k` of the
/// query, key and value projections.
#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub query: Var,
    pub key: Var,
    pub value: Var,
    pub output: Var,
}

/// Scaled dot-product multi-head self-attention over the rows of `x [L, d_model]`.
///
/// Per head: `softmax(Q Kᵀ / √d_k) V`; heads are concatenated and projected by
/// the output matrix. No positional information is added, so the map is
/// equivariant under row permutations. Keys whose `key_mask` entry is false
/// get zero attention weight.
pub fn multi_head_self_attention<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    weights: &AttentionWeights,
    heads: usize,
    key_mask: Option<&[bool]>,
) -> Result<Var> {
    let Some((_, d_model)) = g.value(x).dims2() else {
        return Err(Error::dim("attention", "input must be rank 2"));
    };
    if heads == 0 || d_model % heads != 0 {
        return Err(Error::config(format!(
            "model width {d_model} is not divisible by {heads} heads"
        )));
    }
    let d_k = d_model / heads;
    let q = g.matmul(x, weights.query)?;
    let k = g.matmul(x, weights.key)?;
    let v = g.matmul(x, weights.value)?;
    let scale = T::lit(1.0 / (d_k as f64).sqrt());
    let mut outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * d_k, d_k)?;
        let kh = g.slice_cols(k, h * d_k, d_k)?;
        let vh = g.slice_cols(v, h * d_k, d_k)?;
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale);
        let attn = g.masked_softmax_rows(scores, key_mask)?;
        outputs.push(g.matmul(attn, vh)?);
    }
    let joined = if heads == 1 {
        outputs[0]
    } else {
        g.concat_cols(&outputs)?
    };
    g.matmul(joined, weights.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn weights(g: &mut Graph<f64>, d: usize, seed: u64) -> AttentionWeights {
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        let mut mat = |g: &mut Graph<f64>| {
            g.input(Tensor::matrix(d, d, (0..d * d).map(|_| next()).collect()).unwrap())
        };
        AttentionWeights {
            query: mat(g),
            key: mat(g),
            value: mat(g),
            output: mat(g),
        }
    }

    #[test]
    fn indivisible_width_is_config_error() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::zeros(&[2, 6]));
        let w = weights(&mut g, 6, 1);
        assert!(matches!(
            multi_head_self_attention(&mut g, x, &w, 4, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_position_is_value_then_output_projection() {
        let d = 4;
        let mut g = Graph::<f64>::new();
        let row = vec![0.3, -0.2, 0.5, 1.0];
        let x = g.input(Tensor::matrix(1, d, row.clone()).unwrap());
        let w = weights(&mut g, d, 7);
        let y = multi_head_self_attention(&mut g, x, &w, 1, None).unwrap();
        // x · W_V · W_O by hand
        let wv = g.value(w.value).clone();
        let wo = g.value(w.output).clone();
        let xv: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|i| row[i] * wv.data()[i * d + j]).sum())
            .collect();
        let expected: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|i| xv[i] * wo.data()[i * d + j]).sum())
            .collect();
        for (a, b) in g.value(y).data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_share_weight_evenly() {
        let d = 4;
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::matrix(2, d, [0.1, 0.2, -0.4, 0.9].repeat(2)).unwrap());
        let w = weights(&mut g, d, 3);
        let y = multi_head_self_attention(&mut g, x, &w, 2, None).unwrap();
        let out = g.value(y);
        assert_eq!(out.row(0), out.row(1));
        // the softmax node of the first head sits right after its scaled scores
        let scores = g.matmul_nt(x, x).unwrap();
        let attn = g.masked_softmax_rows(scores, None).unwrap();
        assert!(g
            .value(attn)
            .data()
            .iter()
            .all(|&a| (a - 0.5).abs() < 1e-15));
    }

    #[test]
    fn permutation_equivariance() {
        let d = 8;
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|r| {
                (0..d)
                    .map(|c| ((r * 7 + c * 3) % 11) as f64 / 11.0 - 0.4)
                    .collect()
            })
            .collect();
        let perm = [3, 0, 4, 1, 2];
        let mut g = Graph::<f64>::new();
        let w = weights(&mut g, d, 11);
        let x = g.input(Tensor::from_rows(&rows).unwrap());
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
        let xp = g.input(Tensor::from_rows(&permuted).unwrap());
        let y = multi_head_self_attention(&mut g, x, &w, 4, None).unwrap();
        let yp = multi_head_self_attention(&mut g, xp, &w, 4, None).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for (a, b) in g.value(yp).row(i).iter().zip(g.value(y).row(p)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
