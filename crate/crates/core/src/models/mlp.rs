use super::{vector_input, MlpConfig, Mode, HEAD_BIAS, HEAD_WEIGHT};
use crate::error::Result;
use crate::nn::{Graph, ParamStore, Scalar, Var};

pub fn mlp_forward<T: Scalar>(
    g: &mut Graph<T>,
    params: &ParamStore<T>,
    cfg: &MlpConfig,
    prev: &[f32],
    current: &[f32],
    mut mode: Mode<'_>,
) -> Result<Var> {
    let p = vector_input(g, prev, cfg.embedding_dim, "previous-turn vector")?;
    let c = vector_input(g, current, cfg.embedding_dim, "current-turn vector")?;
    let x = g.concat(&[p, c])?;
    let w = g.param(params, "hidden.weight")?;
    let b = g.param(params, "hidden.bias")?;
    let h = g.dense(x, w, b)?;
    let h = g.relu(h);
    let h = mode.dropout(g, h, cfg.dropout)?;
    let hw = g.param(params, HEAD_WEIGHT)?;
    let hb = g.param(params, HEAD_BIAS)?;
    g.dense(h, hw, hb)
}
