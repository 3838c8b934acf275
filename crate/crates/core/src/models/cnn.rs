use super::{vector_input, CnnConfig, Mode, HEAD_BIAS, HEAD_WEIGHT};
use crate::corpus::PAD;
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamStore, Scalar, Var};

/// Embeds the window, convolves, max-pools over positions and joins the
/// previous-turn vector before the head.
pub fn cnn_forward<T: Scalar>(
    g: &mut Graph<T>,
    params: &ParamStore<T>,
    cfg: &CnnConfig,
    ids: &[usize],
    prev: &[f32],
    mut mode: Mode<'_>,
) -> Result<Var> {
    if ids.len() != cfg.window {
        return Err(Error::dim(
            "cnn input",
            format!(
                "token window has {} ids, expected {}",
                ids.len(),
                cfg.window
            ),
        ));
    }
    let table = params.require("embedding")?;
    let seq = g.embedding(params, table, ids, Some(PAD))?;
    let k = g.param(params, "conv.kernels")?;
    let b = g.param(params, "conv.bias")?;
    let conv = g.conv1d(seq, k, b)?;
    let conv = g.relu(conv);
    let pooled = g.global_max_pool(conv, None)?;
    let p = vector_input(g, prev, cfg.context_dim, "previous-turn vector")?;
    let features = g.concat(&[pooled, p])?;
    let features = mode.dropout(g, features, cfg.dropout)?;
    let hw = g.param(params, HEAD_WEIGHT)?;
    let hb = g.param(params, HEAD_BIAS)?;
    g.dense(features, hw, hb)
}
