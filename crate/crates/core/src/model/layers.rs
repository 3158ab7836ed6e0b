//! Building blocks of the forward pass, each appending nodes to a graph.

use rand::Rng;

use crate::diffcore::{Graph, Tensor, Var};
use crate::error::Result;

/// Vanilla RNN over each row of `input (N×W)`, all locations at once:
/// `h_t = tanh(w·x_t + U·h_{t−1} + b)` with `h_0 = 0`. Returns the final
/// states as an `N×D` matrix.
///
/// `w` is `1×D`, `u` is `D×D`, `b` is `1×D`.
pub fn rnn_encode(g: &mut Graph, input: &Tensor, w: Var, u: Var, b: Var) -> Result<Var> {
    let (n, steps) = (input.rows(), input.cols());
    let ut = g.transpose(u)?;
    let mut h: Option<Var> = None;
    for t in 0..steps {
        let column: Vec<f64> = (0..n).map(|i| input.get(i, t)).collect();
        let x = g.constant(Tensor::column(&column));
        let mut pre = g.matmul(x, w)?;
        if let Some(prev) = h {
            let rec = g.matmul(prev, ut)?;
            pre = g.add(pre, rec)?;
        }
        let pre = g.broadcast_add_row(pre, b)?;
        h = Some(g.tanh(pre));
    }
    match h {
        Some(h) => Ok(h),
        None => Err(crate::error::Error::Contract("RNN needs a window of at least one week".into())),
    }
}

/// Additive attention `a_ij = vᵀ·ELU(W^s h_i + W^t h_j + b^s) + b^v`,
/// returned as an `N×N` matrix. `ws`, `wt` are `d_a×D`, `v` is `d_a×1`,
/// `bs` is `1×d_a`, `bv` is `1×1`.
pub fn attention_scores(g: &mut Graph, h: Var, ws: Var, wt: Var, v: Var, bs: Var, bv: Var) -> Result<Var> {
    let n = g.value(h).rows();
    let ws_t = g.transpose(ws)?;
    let wt_t = g.transpose(wt)?;
    let source = g.matmul(h, ws_t)?;
    let target = g.matmul(h, wt_t)?;
    let pairs = g.pairwise_add(source, target)?;
    let pairs = g.broadcast_add_row(pairs, bs)?;
    let act = g.elu(pairs);
    let scores = g.matmul(act, v)?;
    let scores = g.reshape(scores, &[n, n])?;
    g.broadcast_add_row(scores, bv)
}

pub fn normalize_rows(g: &mut Graph, a: Var, p: f64, eps: f64) -> Result<Var> {
    g.row_lp_norm_scale(a, p, eps)
}

/// Gate `M = σ(W^m·A + b^m)` and fusion `Â = M⊙Ã^g + (1−M)⊙A`.
/// Returns `(M, Â)`.
pub fn fuse_attention(g: &mut Graph, a: Var, adjacency: Var, wm: Var, bm: Var) -> Result<(Var, Var)> {
    let mixed = g.matmul(wm, a)?;
    let mixed = g.broadcast_add_row(mixed, bm)?;
    let gate = g.sigmoid(mixed);
    // M⊙Ã + (1−M)⊙A = A + M⊙(Ã − A)
    let diff = g.sub(adjacency, a)?;
    let pulled = g.hadamard(gate, diff)?;
    let fused = g.add(a, pulled)?;
    Ok((gate, fused))
}

/// `h^C_{i,k} = ReLU(max_s Σ_τ x_{i,s+τ} c_{k,τ})` as an `N×K` matrix.
pub fn temporal_conv(g: &mut Graph, input: &Tensor, filters: Var) -> Result<Var> {
    let (n, k) = (input.rows(), g.value(filters).rows());
    let x = g.constant(input.clone());
    let responses = g.conv1d_valid(x, filters)?;
    let pooled = g.maxpool_full(responses)?;
    let pooled = g.reshape(pooled, &[n, k])?;
    Ok(g.relu(pooled))
}

/// `H^(l) = ELU(Â · H^(l−1) · W^(l−1)ᵀ + 1·b^(l−1)ᵀ)` for each `(W, b)`
/// in `layers`, with optional dropout on each layer's input.
pub fn message_pass<R: Rng>(
    g: &mut Graph,
    h0: Var,
    adjacency: Var,
    layers: &[(Var, Var)],
    dropout: f64,
    mut rng: Option<&mut R>,
) -> Result<Var> {
    let mut h = h0;
    for &(w, b) in layers {
        let input = match rng.as_deref_mut() {
            Some(r) => apply_dropout(g, h, dropout, r)?,
            None => h,
        };
        let mixed = g.matmul(adjacency, input)?;
        let wt = g.transpose(w)?;
        let z = g.matmul(mixed, wt)?;
        let z = g.broadcast_add_row(z, b)?;
        h = g.elu(z);
    }
    Ok(h)
}

/// `ŷ_i = θᵀ [h_i ; h_i^(L)] + b^θ` as an `N×1` column.
pub fn predict_head(g: &mut Graph, parts: &[Var], theta: Var, bias: Var) -> Result<Var> {
    let features = if parts.len() == 1 { parts[0] } else { g.concat_cols(parts)? };
    let y = g.matmul(features, theta)?;
    g.broadcast_add_row(y, bias)
}

/// Inverted dropout: zero with probability `rate`, scale survivors by
/// `1/(1−rate)`.
pub fn apply_dropout<R: Rng>(g: &mut Graph, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let shape = g.value(x).shape().to_vec();
    let len = g.value(x).len();
    let mask: Vec<f64> = (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
    let mask = g.constant(Tensor::new(shape, mask)?);
    g.hadamard(x, mask)
}
