//! Recurrent encoders for queries, clicked results and session history, and
//! the information-deficit computation that combines them.

use crate::error::{Error, Result};
use crate::math::{Graph, ParamId, Var};
use crate::model::{Ablation, ContextOrder, Layout};

/// Reserved row of both embedding tables; kept at zero.
pub const PAD_ID: usize = 0;
/// Out-of-vocabulary row of both embedding tables.
pub const OOV_ID: usize = 1;
/// Row joining consecutive clicked urls.
pub const URL_SEPARATOR_ID: usize = 130;
/// pad + OOV + 128 ASCII bytes + separator.
pub const CHAR_VOCAB_SIZE: usize = 131;
pub const DEFAULT_MAX_URL_CHARS: usize = 256;

/// Weights of one GRU: `r = σ(W_r x + U_r h + b_r)`, `z = σ(W_z x + U_z h + b_z)`,
/// `h̃ = tanh(W_h x + U_h (r ⊗ h) + b_h)`, `h' = (1 − z) ⊗ h + z ⊗ h̃`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
}

impl GruParams {
    pub fn ids(&self) -> [ParamId; 9] {
        [
            self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h,
            self.b_h,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingTable {
    pub word: ParamId,
    pub chars: ParamId,
}

/// Maps one character to its row in the character table.
pub fn char_id(c: char) -> usize {
    if c.is_ascii() {
        2 + c as usize
    } else {
        OOV_ID
    }
}

/// Clicked urls joined in click order by the separator, truncated to the
/// first `max_chars` characters.
pub fn url_char_ids<S: AsRef<str>>(urls: &[S], max_chars: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, url) in urls.iter().enumerate() {
        if i > 0 {
            out.push(URL_SEPARATOR_ID);
        }
        out.extend(url.as_ref().chars().map(char_id));
        if out.len() >= max_chars {
            break;
        }
    }
    out.truncate(max_chars);
    out
}

pub fn gru_step(g: &mut Graph, gru: &GruParams, x: Var, h: Var) -> Result<Var> {
    let [w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h] = gru.ids().map(|id| g.param(id));
    let pre_r = g.affine(&[(w_r, x), (u_r, h)], Some(b_r))?;
    let r = g.sigmoid(pre_r);
    let pre_z = g.affine(&[(w_z, x), (u_z, h)], Some(b_z))?;
    let z = g.sigmoid(pre_z);
    let rh = g.mul(r, h)?;
    let pre_h = g.affine(&[(w_h, x), (u_h, rh)], Some(b_h))?;
    let cand = g.tanh(pre_h);
    g.gate_mix(z, h, cand)
}

/// Runs the GRU over `inputs` from `h0` and returns every hidden state.
pub fn gru_forward(g: &mut Graph, gru: &GruParams, inputs: &[Var], h0: Var) -> Result<Vec<Var>> {
    if g.shape(h0) != [gru.hidden_dim] {
        return Err(Error::ShapeMismatch {
            op: "gru_forward",
            left: vec![gru.hidden_dim],
            right: g.shape(h0).to_vec(),
        });
    }
    let mut states = Vec::with_capacity(inputs.len());
    let mut h = h0;
    for &x in inputs {
        h = gru_step(g, gru, x, h)?;
        states.push(h);
    }
    Ok(states)
}

/// Bidirectional encoding of one query.
#[derive(Debug, Clone)]
pub struct EncodedQuery {
    /// `h_n^f ⊗ h_1^b`
    pub z: Var,
    /// h_1^f … h_n^f
    pub forward: Vec<Var>,
    /// h_n^b … h_1^b, in the order the backward pass produced them.
    pub backward: Vec<Var>,
}

impl EncodedQuery {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

pub fn encode_query(g: &mut Graph, layout: &Layout, word_ids: &[usize]) -> Result<EncodedQuery> {
    if word_ids.is_empty() {
        return Err(Error::Empty("query"));
    }
    let words = word_ids
        .iter()
        .map(|&id| g.gather(layout.embeddings.word, id))
        .collect::<Result<Vec<_>>>()?;
    let h = layout.dims.hidden_dim;
    let h0 = g.zeros(h);
    let forward = gru_forward(g, &layout.enc_fwd, &words, h0)?;
    let reversed: Vec<Var> = words.iter().rev().copied().collect();
    let backward = gru_forward(g, &layout.enc_bwd, &reversed, h0)?;
    let z = g.mul(
        *forward.last().expect("non-empty"),
        *backward.last().expect("non-empty"),
    )?;
    Ok(EncodedQuery {
        z,
        forward,
        backward,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EncodedResult {
    pub u: Var,
}

/// Last `GRU_url` state over a character-id sequence; zero when empty.
pub fn encode_result_chars(
    g: &mut Graph,
    layout: &Layout,
    chars: &[usize],
) -> Result<EncodedResult> {
    let h0 = g.zeros(layout.dims.hidden_dim);
    if chars.is_empty() {
        return Ok(EncodedResult { u: h0 });
    }
    let inputs = chars
        .iter()
        .map(|&c| g.gather(layout.embeddings.chars, c))
        .collect::<Result<Vec<_>>>()?;
    let states = gru_forward(g, &layout.url, &inputs, h0)?;
    Ok(EncodedResult {
        u: *states.last().expect("non-empty"),
    })
}

pub fn encode_result<S: AsRef<str>>(
    g: &mut Graph,
    layout: &Layout,
    clicked_urls: &[S],
    max_url_chars: usize,
) -> Result<EncodedResult> {
    encode_result_chars(g, layout, &url_char_ids(clicked_urls, max_url_chars))
}

/// `D₋ⱼ = z₋ⱼ ⊖ u₋ⱼ`
pub fn info_deficit(g: &mut Graph, query: &EncodedQuery, result: &EncodedResult) -> Result<Var> {
    g.sub(query.z, result.u)
}

#[derive(Debug, Clone)]
pub struct InfoDeficit {
    pub per_step: Vec<Var>,
    pub total: Var,
}

/// Elementwise sum of per-step deficits; zero vector of `hidden_dim` when empty.
pub fn aggregate_deficit(
    g: &mut Graph,
    per_step: Vec<Var>,
    hidden_dim: usize,
) -> Result<InfoDeficit> {
    let total = match per_step.split_first() {
        None => g.zeros(hidden_dim),
        Some((&first, rest)) => {
            let mut acc = first;
            for &d in rest {
                acc = g.add(acc, d)?;
            }
            acc
        }
    };
    Ok(InfoDeficit { per_step, total })
}

#[derive(Debug, Clone, Copy)]
pub struct ContextSummary {
    pub s: Var,
}

/// Last `GRU_seq` output over past-query encodings given most recent first.
pub fn encode_context(
    g: &mut Graph,
    layout: &Layout,
    past_z: &[Var],
    order: ContextOrder,
) -> Result<ContextSummary> {
    let h0 = g.zeros(layout.dims.hidden_dim);
    if past_z.is_empty() {
        return Ok(ContextSummary { s: h0 });
    }
    let inputs: Vec<Var> = match order {
        ContextOrder::RecentFirst => past_z.to_vec(),
        ContextOrder::Chronological => past_z.iter().rev().copied().collect(),
    };
    let states = gru_forward(g, &layout.seq, &inputs, h0)?;
    Ok(ContextSummary {
        s: *states.last().expect("non-empty"),
    })
}

/// One earlier step of the session as the models consume it.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct PastStep {
    pub query_ids: Vec<usize>,
    pub url_chars: Vec<usize>,
}

/// Overall deficit `D` and context summary `s` for a window of past steps
/// (most recent first). Disabled channels come back as zero vectors.
#[derive(Debug, Clone, Copy)]
pub struct SessionEncoding {
    pub deficit: Var,
    pub context: Var,
}

pub fn encode_session(
    g: &mut Graph,
    layout: &Layout,
    past: &[PastStep],
    ablation: Ablation,
    order: ContextOrder,
) -> Result<SessionEncoding> {
    let h = layout.dims.hidden_dim;
    if ablation.disable_deficit && ablation.disable_context {
        let zero = g.zeros(h);
        return Ok(SessionEncoding {
            deficit: zero,
            context: zero,
        });
    }
    let mut encoded = Vec::with_capacity(past.len());
    let mut deficits = Vec::with_capacity(past.len());
    for step in past {
        let q = encode_query(g, layout, &step.query_ids)?;
        if !ablation.disable_deficit {
            let u = encode_result_chars(g, layout, &step.url_chars)?;
            deficits.push(info_deficit(g, &q, &u)?);
        }
        encoded.push(q.z);
    }
    let deficit = if ablation.disable_deficit {
        g.zeros(h)
    } else {
        aggregate_deficit(g, deficits, h)?.total
    };
    let context = if ablation.disable_context {
        g.zeros(h)
    } else {
        encode_context(g, layout, &encoded, order)?.s
    };
    Ok(SessionEncoding { deficit, context })
}
