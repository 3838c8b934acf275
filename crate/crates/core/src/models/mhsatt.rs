use super::{vector_input, MhSattConfig, Mode, HEAD_BIAS, HEAD_WEIGHT};
use crate::corpus::PAD;
use crate::error::{Error, Result};
use crate::nn::{multi_head_self_attention, AttentionWeights, Graph, ParamStore, Scalar, Var};

/// Self-attention over the token window (or both windows joined along the
/// position axis when stacked). `<pad>` positions are masked as keys and
/// skipped by the max pool.
///
/// A stacked model given only one window treats the original stream as all
/// padding, and a mono model ignores any original window.
pub fn mhsatt_forward<T: Scalar>(
    g: &mut Graph<T>,
    params: &ParamStore<T>,
    cfg: &MhSattConfig,
    translated: &[usize],
    original: Option<&[usize]>,
    prev: &[f32],
    mut mode: Mode<'_>,
) -> Result<Var> {
    let check = |ids: &[usize], what: &str| {
        if ids.len() == cfg.window {
            Ok(())
        } else {
            Err(Error::dim(
                "mhsatt input",
                format!(
                    "{what} window has {} ids, expected {}",
                    ids.len(),
                    cfg.window
                ),
            ))
        }
    };
    check(translated, "translated")?;
    let mut ids = translated.to_vec();
    if cfg.stacked {
        match original {
            Some(o) => {
                check(o, "original")?;
                ids.extend_from_slice(o);
            }
            None => ids.resize(2 * cfg.window, PAD),
        }
    }
    let mask: Vec<bool> = ids.iter().map(|&i| i != PAD).collect();
    let table = params.require("embedding")?;
    let x = g.embedding(params, table, &ids, Some(PAD))?;
    let weights = AttentionWeights {
        query: g.param(params, "attention.query")?,
        key: g.param(params, "attention.key")?,
        value: g.param(params, "attention.value")?,
        output: g.param(params, "attention.output")?,
    };
    let y = multi_head_self_attention(g, x, &weights, cfg.heads, Some(&mask))?;
    let pooled = g.global_max_pool(y, Some(&mask))?;
    let p = vector_input(g, prev, cfg.context_dim, "previous-turn vector")?;
    let features = g.concat(&[pooled, p])?;
    let features = mode.dropout(g, features, cfg.dropout)?;
    let hw = g.param(params, HEAD_WEIGHT)?;
    let hb = g.param(params, HEAD_BIAS)?;
    g.dense(features, hw, hb)
}
