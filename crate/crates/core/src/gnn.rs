//! Message-passing GNN over MILP-graphs with graph-level and node-level
//! readouts and exact reverse-mode gradients.
//!
//! Architecture: initial embeddings s0_i = p0(h^V_i), t0_j = q0(h^W_j); per
//! layer l the simultaneous updates
//!   s^l_i = p_l(s^{l-1}_i, sum_j E_ij f_l(t^{l-1}_j))
//!   t^l_j = q_l(t^{l-1}_j, sum_i E_ij g_l(s^{l-1}_i))
//! and finally either y = r(sum_i s^L_i, sum_j t^L_j) (graph readout) or
//! y_j = r(sum_i s^L_i, sum_j t^L_j, t^L_j) (node readout). Two-argument maps
//! are realized by concatenation. All sums accumulate in fixed index order,
//! so outputs are deterministic but only reproduce to ~1e-6 relative under
//! vertex permutations (float reassociation).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{GraphError, MilpGraph, RandomFeatures};
use crate::milp::{Lower, Upper};
use crate::nn::{Mlp, MlpCache, MlpGrads};

/// Constraint-side feature width: (b, onehot3(sense)).
pub const V_WIDTH: usize = 4;
/// Variable-side feature width: (c, l value, l flag, u value, u flag, tau).
pub const W_WIDTH: usize = 6;
/// Message-passing depth.
pub const DEPTH: usize = 2;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("model expects feature widths ({mv},{mw}) but graph encodes ({gv},{gw})")]
    DimensionMismatch { mv: usize, mw: usize, gv: usize, gw: usize },
    #[error("readout mismatch: {0}")]
    ReadoutMismatch(&'static str),
    #[error("target length {targets} does not match {n} variables")]
    TargetLength { targets: usize, n: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Output head: one scalar per graph, or one scalar per variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    Graph,
    Node,
}

/// One message-passing layer's learnable maps.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnLayer {
    /// Constraint update on (s, aggregated variable messages).
    pub p: Mlp,
    /// Variable update on (t, aggregated constraint messages).
    pub q: Mlp,
    /// Variable-to-constraint message map.
    pub f: Mlp,
    /// Constraint-to-variable message map.
    pub g: Mlp,
}

/// The full model.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub d: usize,
    pub readout: Readout,
    pub uses_random_feature: bool,
    pub p0: Mlp,
    pub q0: Mlp,
    pub layers: Vec<GnnLayer>,
    pub r: Mlp,
}

/// Gradient accumulator mirroring [`GnnModel`].
#[derive(Debug, Clone)]
pub struct GnnGrads {
    pub p0: MlpGrads,
    pub q0: MlpGrads,
    pub layers: Vec<LayerGrads>,
    pub r: MlpGrads,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub p: MlpGrads,
    pub q: MlpGrads,
    pub f: MlpGrads,
    pub g: MlpGrads,
}

impl GnnModel {
    /// Seeded model with embedding size `d` and the default depth.
    pub fn new(d: usize, readout: Readout, uses_random_feature: bool, seed: u64) -> GnnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extra = usize::from(uses_random_feature);
        let p0 = Mlp::init(V_WIDTH + extra, d, d, &mut rng);
        let q0 = Mlp::init(W_WIDTH + extra, d, d, &mut rng);
        let layers = (0..DEPTH)
            .map(|_| GnnLayer {
                p: Mlp::init(2 * d, d, d, &mut rng),
                q: Mlp::init(2 * d, d, d, &mut rng),
                f: Mlp::init(d, d, d, &mut rng),
                g: Mlp::init(d, d, d, &mut rng),
            })
            .collect();
        let r_in = match readout {
            Readout::Graph => 2 * d,
            Readout::Node => 3 * d,
        };
        let r = Mlp::init(r_in, d, 1, &mut rng);
        GnnModel {
            d,
            readout,
            uses_random_feature,
            p0,
            q0,
            layers,
            r,
        }
    }

    pub fn mlps(&self) -> Vec<&Mlp> {
        let mut out = vec![&self.p0, &self.q0];
        for l in &self.layers {
            out.extend([&l.p, &l.q, &l.f, &l.g]);
        }
        out.push(&self.r);
        out
    }

    pub fn mlps_mut(&mut self) -> Vec<&mut Mlp> {
        let mut out: Vec<&mut Mlp> = vec![&mut self.p0, &mut self.q0];
        for l in &mut self.layers {
            out.extend([&mut l.p, &mut l.q, &mut l.f, &mut l.g]);
        }
        out.push(&mut self.r);
        out
    }

    pub fn param_count(&self) -> usize {
        self.mlps().iter().map(|m| m.param_count()).sum()
    }

    /// All parameters as one flat vector in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for m in self.mlps() {
            m.flatten_into(&mut out);
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut k = 0;
        for m in self.mlps_mut() {
            k += m.unflatten_from(&flat[k..]);
        }
        assert_eq!(k, flat.len(), "flat parameter vector has wrong length");
    }

    pub fn zero_grads(&self) -> GnnGrads {
        GnnGrads {
            p0: self.p0.zero_grads(),
            q0: self.q0.zero_grads(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    p: l.p.zero_grads(),
                    q: l.q.zero_grads(),
                    f: l.f.zero_grads(),
                    g: l.g.zero_grads(),
                })
                .collect(),
            r: self.r.zero_grads(),
        }
    }
}

impl GnnGrads {
    /// Add `other * scale` into this accumulator.
    pub fn add_scaled(&mut self, other: &GnnGrads, scale: f64) {
        self.p0.add_scaled(&other.p0, scale);
        self.q0.add_scaled(&other.q0, scale);
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.p.add_scaled(&b.p, scale);
            a.q.add_scaled(&b.q, scale);
            a.f.add_scaled(&b.f, scale);
            a.g.add_scaled(&b.g, scale);
        }
        self.r.add_scaled(&other.r, scale);
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.p0.flatten_into(&mut out);
        self.q0.flatten_into(&mut out);
        for l in &self.layers {
            l.p.flatten_into(&mut out);
            l.q.flatten_into(&mut out);
            l.f.flatten_into(&mut out);
            l.g.flatten_into(&mut out);
        }
        self.r.flatten_into(&mut out);
        out
    }
}

/// Numeric vertex features: constraint rows (b, onehot3(sense)) and variable
/// rows (c, l value, l flag, u value, u flag, tau), each with the random
/// feature scalar appended when the graph carries one. Infinite bounds encode
/// as value 0 with flag 0.
pub fn encode_features(g: &MilpGraph) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rf = g.random_features();
    let v = g
        .v_features()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut onehot = [0.0; 3];
            onehot[(f.sense.iota() + 1) as usize] = 1.0;
            let mut row = vec![f.b, onehot[0], onehot[1], onehot[2]];
            if let Some(rf) = rf {
                row.push(rf.v[i]);
            }
            row
        })
        .collect();
    let w = g
        .w_features()
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let (lv, lf) = match f.lower {
                Lower::Finite(x) => (x, 1.0),
                Lower::NegInf => (0.0, 0.0),
            };
            let (uv, uf) = match f.upper {
                Upper::Finite(x) => (x, 1.0),
                Upper::PosInf => (0.0, 0.0),
            };
            let mut row = vec![f.c, lv, lf, uv, uf, f.integer as u8 as f64];
            if let Some(rf) = rf {
                row.push(rf.w[j]);
            }
            row
        })
        .collect();
    (v, w)
}

/// Copy of the graph with the random feature attached (entries must lie in
/// [0, 1]); downstream encoding appends them to both feature sides.
pub fn attach_random_features(
    g: &MilpGraph,
    omega: RandomFeatures,
) -> Result<MilpGraph, GnnError> {
    Ok(g.with_random_features(omega)?)
}

/// Full forward record of one instance, kept for the backward pass.
pub struct Tape {
    m: usize,
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    p0_caches: Vec<MlpCache>,
    q0_caches: Vec<MlpCache>,
    /// Per layer: embeddings entering the layer and all message caches.
    layer_tapes: Vec<LayerTape>,
    r_caches: Vec<MlpCache>,
    /// Outputs: one entry for graph readout, n entries for node readout.
    pub outputs: Vec<f64>,
}

struct LayerTape {
    f_caches: Vec<MlpCache>,
    g_caches: Vec<MlpCache>,
    p_caches: Vec<MlpCache>,
    q_caches: Vec<MlpCache>,
}

fn check_dims(model: &GnnModel, g: &MilpGraph) -> Result<(), GnnError> {
    let extra = usize::from(g.random_features().is_some());
    let (gv, gw) = (V_WIDTH + extra, W_WIDTH + extra);
    if model.p0.in_dim() != gv || model.q0.in_dim() != gw {
        return Err(GnnError::DimensionMismatch {
            mv: model.p0.in_dim(),
            mw: model.q0.in_dim(),
            gv,
            gw,
        });
    }
    Ok(())
}

/// Run the full forward pass, recording every intermediate for backprop.
pub fn forward_tape(model: &GnnModel, g: &MilpGraph) -> Result<Tape, GnnError> {
    check_dims(model, g)?;
    let (hv, hw) = encode_features(g);
    let m = g.num_constraints();
    let n = g.num_variables();
    let d = model.d;
    let edges: Vec<(usize, usize, f64)> = g.edges().collect();

    let mut s: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut p0_caches = Vec::with_capacity(m);
    for row in &hv {
        let (out, cache) = model.p0.forward(row);
        s.push(out);
        p0_caches.push(cache);
    }
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut q0_caches = Vec::with_capacity(n);
    for row in &hw {
        let (out, cache) = model.q0.forward(row);
        t.push(out);
        q0_caches.push(cache);
    }

    let mut layer_tapes = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let mut f_caches = Vec::with_capacity(n);
        let mut f_out = Vec::with_capacity(n);
        for tj in &t {
            let (out, cache) = layer.f.forward(tj);
            f_out.push(out);
            f_caches.push(cache);
        }
        let mut g_caches = Vec::with_capacity(m);
        let mut g_out = Vec::with_capacity(m);
        for si in &s {
            let (out, cache) = layer.g.forward(si);
            g_out.push(out);
            g_caches.push(cache);
        }
        // Aggregate messages in fixed row-major edge order.
        let mut u = vec![vec![0.0; d]; m];
        let mut wagg = vec![vec![0.0; d]; n];
        for &(i, j, e) in &edges {
            for k in 0..d {
                u[i][k] += e * f_out[j][k];
                wagg[j][k] += e * g_out[i][k];
            }
        }
        let mut next_s = Vec::with_capacity(m);
        let mut p_caches = Vec::with_capacity(m);
        for i in 0..m {
            let mut cat = s[i].clone();
            cat.extend_from_slice(&u[i]);
            let (out, cache) = layer.p.forward(&cat);
            next_s.push(out);
            p_caches.push(cache);
        }
        let mut next_t = Vec::with_capacity(n);
        let mut q_caches = Vec::with_capacity(n);
        for j in 0..n {
            let mut cat = t[j].clone();
            cat.extend_from_slice(&wagg[j]);
            let (out, cache) = layer.q.forward(&cat);
            next_t.push(out);
            q_caches.push(cache);
        }
        layer_tapes.push(LayerTape {
            f_caches,
            g_caches,
            p_caches,
            q_caches,
        });
        s = next_s;
        t = next_t;
    }

    let mut sbar = vec![0.0; d];
    for si in &s {
        for k in 0..d {
            sbar[k] += si[k];
        }
    }
    let mut tbar = vec![0.0; d];
    for tj in &t {
        for k in 0..d {
            tbar[k] += tj[k];
        }
    }

    let mut r_caches = Vec::new();
    let mut outputs = Vec::new();
    match model.readout {
        Readout::Graph => {
            let mut cat = sbar.clone();
            cat.extend_from_slice(&tbar);
            let (out, cache) = model.r.forward(&cat);
            outputs.push(out[0]);
            r_caches.push(cache);
        }
        Readout::Node => {
            for tj in &t {
                let mut cat = sbar.clone();
                cat.extend_from_slice(&tbar);
                cat.extend_from_slice(tj);
                let (out, cache) = model.r.forward(&cat);
                outputs.push(out[0]);
                r_caches.push(cache);
            }
        }
    }
    Ok(Tape {
        m,
        n,
        edges,
        p0_caches,
        q0_caches,
        layer_tapes,
        r_caches,
        outputs,
    })
}

/// Graph-level output y = r(sum s, sum t).
pub fn forward_graph(model: &GnnModel, g: &MilpGraph) -> Result<f64, GnnError> {
    if model.readout != Readout::Graph {
        return Err(GnnError::ReadoutMismatch("forward_graph needs a graph readout"));
    }
    Ok(forward_tape(model, g)?.outputs[0])
}

/// Node-level outputs y_j = r(sum s, sum t, t_j).
pub fn forward_nodes(model: &GnnModel, g: &MilpGraph) -> Result<Vec<f64>, GnnError> {
    if model.readout != Readout::Node {
        return Err(GnnError::ReadoutMismatch("forward_nodes needs a node readout"));
    }
    Ok(forward_tape(model, g)?.outputs)
}

/// Backpropagate gradients of the outputs (`dout`, one per tape output)
/// through the recorded forward pass, accumulating into `grads`.
pub fn backward_tape(model: &GnnModel, tape: &Tape, dout: &[f64], grads: &mut GnnGrads) {
    assert_eq!(dout.len(), tape.outputs.len());
    let d = model.d;
    let (m, n) = (tape.m, tape.n);

    let mut dsbar = vec![0.0; d];
    let mut dtbar = vec![0.0; d];
    let mut dt: Vec<Vec<f64>> = vec![vec![0.0; d]; n];
    match model.readout {
        Readout::Graph => {
            let dcat = model.r.backward(&tape.r_caches[0], &[dout[0]], &mut grads.r);
            dsbar.copy_from_slice(&dcat[..d]);
            dtbar.copy_from_slice(&dcat[d..2 * d]);
        }
        Readout::Node => {
            for j in 0..n {
                let dcat = model.r.backward(&tape.r_caches[j], &[dout[j]], &mut grads.r);
                for k in 0..d {
                    dsbar[k] += dcat[k];
                    dtbar[k] += dcat[d + k];
                    dt[j][k] += dcat[2 * d + k];
                }
            }
        }
    }
    // Sums broadcast their gradient to every summand.
    let mut ds: Vec<Vec<f64>> = vec![dsbar.clone(); m];
    for dtj in dt.iter_mut() {
        for k in 0..d {
            dtj[k] += dtbar[k];
        }
    }

    for li in (0..model.layers.len()).rev() {
        let layer = &model.layers[li];
        let lt = &tape.layer_tapes[li];
        let lg = &mut grads.layers[li];
        let mut prev_ds: Vec<Vec<f64>> = vec![vec![0.0; d]; m];
        let mut prev_dt: Vec<Vec<f64>> = vec![vec![0.0; d]; n];
        let mut du: Vec<Vec<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            let dcat = layer.p.backward(&lt.p_caches[i], &ds[i], &mut lg.p);
            for k in 0..d {
                prev_ds[i][k] += dcat[k];
            }
            du.push(dcat[d..2 * d].to_vec());
        }
        let mut dwagg: Vec<Vec<f64>> = Vec::with_capacity(n);
        for j in 0..n {
            let dcat = layer.q.backward(&lt.q_caches[j], &dt[j], &mut lg.q);
            for k in 0..d {
                prev_dt[j][k] += dcat[k];
            }
            dwagg.push(dcat[d..2 * d].to_vec());
        }
        // Aggregation adjoints: df_out_j = sum_i E_ij du_i, dg_out_i likewise.
        let mut df_out = vec![vec![0.0; d]; n];
        let mut dg_out = vec![vec![0.0; d]; m];
        for &(i, j, e) in &tape.edges {
            for k in 0..d {
                df_out[j][k] += e * du[i][k];
                dg_out[i][k] += e * dwagg[j][k];
            }
        }
        for j in 0..n {
            let dtj = layer.f.backward(&lt.f_caches[j], &df_out[j], &mut lg.f);
            for k in 0..d {
                prev_dt[j][k] += dtj[k];
            }
        }
        for i in 0..m {
            let dsi = layer.g.backward(&lt.g_caches[i], &dg_out[i], &mut lg.g);
            for k in 0..d {
                prev_ds[i][k] += dsi[k];
            }
        }
        ds = prev_ds;
        dt = prev_dt;
    }

    for i in 0..m {
        model.p0.backward(&tape.p0_caches[i], &ds[i], &mut grads.p0);
    }
    for j in 0..n {
        model.q0.backward(&tape.q0_caches[j], &dt[j], &mut grads.q0);
    }
}

/// Sum-of-squared-error loss, the per-instance outputs, and the exact loss
/// gradient for graph-level targets. Returns the SSE numerator (no
/// averaging), so a duplicated instance contributes exactly twice the
/// gradient.
pub fn sse_grad_graph(
    model: &GnnModel,
    batch: &[(&MilpGraph, f64)],
) -> Result<(f64, Vec<f64>, GnnGrads), GnnError> {
    let mut total = model.zero_grads();
    let mut loss = 0.0;
    let mut outputs = Vec::with_capacity(batch.len());
    for &(g, target) in batch {
        let tape = forward_tape(model, g)?;
        let err = tape.outputs[0] - target;
        outputs.push(tape.outputs[0]);
        loss += err * err;
        // Per-instance accumulator, summed afterwards: keeps the batch
        // gradient exactly linear in its instances.
        let mut grads = model.zero_grads();
        backward_tape(model, &tape, &[2.0 * err], &mut grads);
        total.add_scaled(&grads, 1.0);
    }
    Ok((loss, outputs, total))
}

/// Sum-of-squared-error loss and gradient for node-level target vectors.
pub fn sse_grad_nodes(
    model: &GnnModel,
    batch: &[(&MilpGraph, &[f64])],
) -> Result<(f64, GnnGrads), GnnError> {
    let mut total = model.zero_grads();
    let mut loss = 0.0;
    for &(g, targets) in batch {
        if targets.len() != g.num_variables() {
            return Err(GnnError::TargetLength {
                targets: targets.len(),
                n: g.num_variables(),
            });
        }
        let tape = forward_tape(model, g)?;
        let mut dout = Vec::with_capacity(targets.len());
        for (y, t) in tape.outputs.iter().zip(targets) {
            let err = y - t;
            loss += err * err;
            dout.push(2.0 * err);
        }
        let mut grads = model.zero_grads();
        backward_tape(model, &tape, &dout, &mut grads);
        total.add_scaled(&grads, 1.0);
    }
    Ok((loss, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{gen_counterexample, gen_d1, GenConfig, Sampler, Variant};
    use crate::graph::{apply_permutation, encode_graph};
    use crate::milp::Permutation;
    use crate::samples;
    use rand::Rng;

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn feature_encoding_matches_definition() {
        let g = encode_graph(&samples::small_unfoldable());
        let (v, w) = encode_features(&g);
        assert_eq!(v[0], vec![1.0, 0.0, 0.0, 1.0]); // (1, >=)
        assert_eq!(w[0], vec![1.0, 0.0, 0.0, 3.0, 1.0, 0.0]); // (1, -inf, 3, cont)
        assert_eq!(w[1], vec![1.0, 0.0, 0.0, 5.0, 1.0, 1.0]);
        let mut s = Sampler::new(1);
        let gr = g.with_random_features(s.random_features(2, 2)).unwrap();
        let (v, w) = encode_features(&gr);
        assert_eq!(v[0].len(), 5);
        assert_eq!(w[0].len(), 7);
    }

    #[test]
    fn zero_readout_weights_output_bias() {
        let mut model = GnnModel::new(4, Readout::Graph, false, 3);
        for w in model.r.l3.w.iter_mut() {
            *w = 0.0;
        }
        model.r.l3.b = vec![0.75];
        let g = encode_graph(&samples::small_unfoldable());
        assert_eq!(forward_graph(&model, &g).unwrap(), 0.75);
        let (a, _) = gen_counterexample();
        assert_eq!(forward_graph(&model, &encode_graph(&a)).unwrap(), 0.75);
    }

    #[test]
    fn graph_readout_is_permutation_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let cfg = GenConfig::new(Variant::D1, 21, 3);
        let insts = gen_d1(&cfg).unwrap();
        for (k, inst) in insts.iter().enumerate() {
            let model = GnnModel::new(8, Readout::Graph, false, 100 + k as u64);
            let g = encode_graph(inst);
            let y = forward_graph(&model, &g).unwrap();
            for _ in 0..10 {
                let p = random_permutation(&mut rng, 6, 20);
                let pg = apply_permutation(&g, &p).unwrap();
                let py = forward_graph(&model, &pg).unwrap();
                assert!(rel_close(y, py), "{y} vs {py}");
            }
        }
    }

    #[test]
    fn node_readout_is_permutation_equivariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cfg = GenConfig::new(Variant::D1, 22, 2);
        for (k, inst) in gen_d1(&cfg).unwrap().iter().enumerate() {
            let model = GnnModel::new(8, Readout::Node, false, 200 + k as u64);
            let g = encode_graph(inst);
            let y = forward_nodes(&model, &g).unwrap();
            for _ in 0..10 {
                let p = random_permutation(&mut rng, 6, 20);
                let pg = apply_permutation(&g, &p).unwrap();
                let py = forward_nodes(&model, &pg).unwrap();
                for j in 0..20 {
                    assert!(rel_close(y[j], py[p.w(j)]));
                }
            }
        }
    }

    #[test]
    fn counterexample_outputs_agree_for_any_weights() {
        let (a, b) = gen_counterexample();
        let (ga, gb) = (encode_graph(&a), encode_graph(&b));
        for seed in 0..20 {
            for d in [4usize, 16] {
                let model = GnnModel::new(d, Readout::Graph, false, seed);
                let ya = forward_graph(&model, &ga).unwrap();
                let yb = forward_graph(&model, &gb).unwrap();
                assert!(rel_close(ya, yb), "d={d} seed={seed}: {ya} vs {yb}");
            }
            let model = GnnModel::new(4, Readout::Node, false, seed);
            let ya = forward_nodes(&model, &ga).unwrap();
            // single variable color: all outputs coincide
            for v in &ya {
                assert!(rel_close(*v, ya[0]));
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_graph() {
        let cfg = GenConfig::new(Variant::D1, 31, 2);
        let insts = gen_d1(&cfg).unwrap();
        let graphs: Vec<_> = insts.iter().map(encode_graph).collect();
        let batch: Vec<(&MilpGraph, f64)> =
            graphs.iter().zip([0.3, -0.7]).collect();
        let mut model = GnnModel::new(4, Readout::Graph, false, 7);
        let (_, _, grads) = sse_grad_graph(&model, &batch).unwrap();
        let flat_g = grads.flatten();
        let flat_p = model.flatten();
        let h = 1e-5;
        let mut checked = 0;
        for k in (0..flat_p.len()).step_by(17) {
            let mut p = flat_p.clone();
            p[k] += h;
            model.unflatten(&p);
            let up = sse_loss(&model, &batch);
            p[k] -= 2.0 * h;
            model.unflatten(&p);
            let down = sse_loss(&model, &batch);
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(flat_g[k].abs()).max(1e-6);
            assert!(
                (fd - flat_g[k]).abs() / denom < 1e-4,
                "param {k}: fd {fd} vs {}",
                flat_g[k]
            );
            checked += 1;
        }
        assert!(checked > 40);
        model.unflatten(&flat_p);
    }

    #[test]
    fn gradients_match_finite_differences_nodes() {
        let cfg = GenConfig::new(Variant::D1, 33, 1);
        let insts = gen_d1(&cfg).unwrap();
        let g = encode_graph(&insts[0]);
        let targets: Vec<f64> = (0..20).map(|j| (j as f64) / 20.0 - 0.5).collect();
        let batch: Vec<(&MilpGraph, &[f64])> = vec![(&g, targets.as_slice())];
        let mut model = GnnModel::new(4, Readout::Node, false, 9);
        let (_, grads) = sse_grad_nodes(&model, &batch).unwrap();
        let flat_g = grads.flatten();
        let flat_p = model.flatten();
        let h = 1e-5;
        for k in (0..flat_p.len()).step_by(23) {
            let mut p = flat_p.clone();
            p[k] += h;
            model.unflatten(&p);
            let up = {
                let y = forward_nodes(&model, &g).unwrap();
                y.iter().zip(&targets).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            };
            p[k] -= 2.0 * h;
            model.unflatten(&p);
            let down = {
                let y = forward_nodes(&model, &g).unwrap();
                y.iter().zip(&targets).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            };
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(flat_g[k].abs()).max(1e-6);
            assert!((fd - flat_g[k]).abs() / denom < 1e-4);
        }
        model.unflatten(&flat_p);
    }

    #[test]
    fn duplicated_instance_doubles_the_gradient() {
        let cfg = GenConfig::new(Variant::D1, 35, 1);
        let insts = gen_d1(&cfg).unwrap();
        let g = encode_graph(&insts[0]);
        let model = GnnModel::new(4, Readout::Graph, false, 5);
        let (l1, _, g1) = sse_grad_graph(&model, &[(&g, 0.4)]).unwrap();
        let (l2, _, g2) = sse_grad_graph(&model, &[(&g, 0.4), (&g, 0.4)]).unwrap();
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert_eq!(b, 2.0 * a);
        }
    }

    #[test]
    fn wl_distinguishable_pairs_are_gnn_separable() {
        let cfg = GenConfig::new(Variant::D1, 41, 4);
        let insts = gen_d1(&cfg).unwrap();
        for pair in insts.chunks(2) {
            let (ga, gb) = (encode_graph(&pair[0]), encode_graph(&pair[1]));
            let separated = (0..10).any(|seed| {
                let model = GnnModel::new(8, Readout::Graph, false, 500 + seed);
                let ya = forward_graph(&model, &ga).unwrap();
                let yb = forward_graph(&model, &gb).unwrap();
                (ya - yb).abs() > 1e-6
            });
            assert!(separated);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = GnnModel::new(4, Readout::Graph, true, 1);
        let g = encode_graph(&samples::small_unfoldable());
        assert!(matches!(
            forward_graph(&model, &g),
            Err(GnnError::DimensionMismatch { .. })
        ));
        let node_model = GnnModel::new(4, Readout::Node, false, 1);
        assert!(matches!(
            forward_graph(&node_model, &g),
            Err(GnnError::ReadoutMismatch(_))
        ));
    }

    fn sse_loss(model: &GnnModel, batch: &[(&MilpGraph, f64)]) -> f64 {
        batch
            .iter()
            .map(|&(g, t)| {
                let y = forward_graph(model, g).unwrap();
                (y - t) * (y - t)
            })
            .sum()
    }

    fn random_permutation(
        rng: &mut rand_chacha::ChaCha8Rng,
        m: usize,
        n: usize,
    ) -> Permutation {
        let mut sv: Vec<usize> = (0..m).collect();
        let mut sw: Vec<usize> = (0..n).collect();
        for k in (1..m).rev() {
            sv.swap(k, rng.gen_range(0..=k));
        }
        for k in (1..n).rev() {
            sw.swap(k, rng.gen_range(0..=k));
        }
        Permutation::new(sv, sw).unwrap()
    }
}
