//! Message passing network over element graphs, with a hand-written
//! backward pass and Adam.
//!
//! Per step, every directed edge is updated from its receiver, sender and own
//! latent; every node from its latent and the mean of its incoming updated
//! edges. Each update is a two-layer MLP with a residual connection and layer
//! norm. A two-layer decoder and a softplus give one positive value per node.

mod adam;
mod checkpoint;
pub mod linalg;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AmberError, Result};
use crate::graph::MeshGraph;
use linalg::*;

pub use adam::{AdamState, DEFAULT_LR};
pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPlacement {
    /// `x ← LN(x + MLP(·))`
    Post,
    /// `x ← x + LN(MLP(·))`
    Pre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpnConfig {
    pub node_features: usize,
    pub edge_features: usize,
    pub latent: usize,
    pub steps: usize,
    pub norm_placement: NormPlacement,
    pub edge_dropout: f64,
}

impl Default for MpnConfig {
    fn default() -> Self {
        MpnConfig {
            node_features: crate::graph::POISSON_FEATURES,
            edge_features: crate::graph::EDGE_FEATURES,
            latent: 64,
            steps: 10,
            norm_placement: NormPlacement::Post,
            edge_dropout: 0.1,
        }
    }
}

impl MpnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_features == 0 || self.edge_features == 0 || self.latent == 0 {
            return Err(AmberError::InvalidInput("network widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.edge_dropout) {
            return Err(AmberError::InvalidInput("edge dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A named parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn kind(&self) -> SlotKind {
        if self.name.ends_with("ln_gain") {
            SlotKind::Gain
        } else if self.name.ends_with('w') || self.name.ends_with("w1") || self.name.ends_with("w2") {
            SlotKind::Weight
        } else {
            SlotKind::Bias
        }
    }
}

enum SlotKind {
    Weight,
    Bias,
    Gain,
}

#[derive(Debug, Clone, Copy)]
struct MlpSlots {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct StepSlots {
    edge: MlpSlots,
    edge_gain: usize,
    edge_bias: usize,
    node: MlpSlots,
    node_gain: usize,
    node_bias: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    slots: Vec<Slot>,
    node_w: usize,
    node_b: usize,
    edge_w: usize,
    edge_b: usize,
    steps: Vec<StepSlots>,
    decoder: MlpSlots,
    len: usize,
}

impl Layout {
    fn new(cfg: &MpnConfig) -> Self {
        let d = cfg.latent;
        let mut slots = Vec::new();
        let mut len = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            slots.push(Slot { name, offset: len, rows, cols });
            len += rows * cols;
            slots.len() - 1
        };
        let node_w = push("node_embed.w".into(), cfg.node_features, d);
        let node_b = push("node_embed.b".into(), 1, d);
        let edge_w = push("edge_embed.w".into(), cfg.edge_features, d);
        let edge_b = push("edge_embed.b".into(), 1, d);
        let mlp = |prefix: String, input: usize, out: usize, push: &mut dyn FnMut(String, usize, usize) -> usize| MlpSlots {
            w1: push(format!("{prefix}.w1"), input, d),
            b1: push(format!("{prefix}.b1"), 1, d),
            w2: push(format!("{prefix}.w2"), d, out),
            b2: push(format!("{prefix}.b2"), 1, out),
        };
        let mut steps = Vec::with_capacity(cfg.steps);
        for l in 0..cfg.steps {
            let edge = mlp(format!("step{l}.edge"), 3 * d, d, &mut push);
            let edge_gain = push(format!("step{l}.edge.ln_gain"), 1, d);
            let edge_bias = push(format!("step{l}.edge.ln_bias"), 1, d);
            let node = mlp(format!("step{l}.node"), 2 * d, d, &mut push);
            let node_gain = push(format!("step{l}.node.ln_gain"), 1, d);
            let node_bias = push(format!("step{l}.node.ln_bias"), 1, d);
            steps.push(StepSlots { edge, edge_gain, edge_bias, node, node_gain, node_bias });
        }
        let decoder = mlp("decoder".into(), d, 1, &mut push);
        Layout { slots, node_w, node_b, edge_w, edge_b, steps, decoder, len }
    }
}

/// Network parameters plus their layout.
#[derive(Debug, Clone)]
pub struct Mpn {
    cfg: MpnConfig,
    layout: Layout,
    params: Vec<f64>,
    version: u64,
}

impl PartialEq for Mpn {
    fn eq(&self, o: &Self) -> bool {
        self.cfg == o.cfg && self.params == o.params
    }
}

/// Activations recorded by a forward pass, consumed by [`Mpn::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    n_nodes: usize,
    senders: Vec<usize>,
    receivers: Vec<usize>,
    keep: Option<Vec<bool>>,
    inv_count: Vec<f64>,
    x0: Vec<f64>,
    e0: Vec<f64>,
    h: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    steps: Vec<StepCache>,
    zd1: Vec<f64>,
    y: Vec<f64>,
    /// Softplus outputs, one per node.
    pub output: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepCache {
    ze1: Vec<f64>,
    e_xhat: Vec<f64>,
    e_inv: Vec<f64>,
    agg: Vec<f64>,
    zn1: Vec<f64>,
    n_xhat: Vec<f64>,
    n_inv: Vec<f64>,
}

fn scatter_rows(src: &[f64], idx: &[usize], d: usize, out: &mut [f64]) {
    for (e, &i) in idx.iter().enumerate() {
        let s = &src[e * d..(e + 1) * d];
        let o = &mut out[i * d..(i + 1) * d];
        for c in 0..d {
            o[c] += s[c];
        }
    }
}

impl Mpn {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    pub fn init<R: Rng + ?Sized>(cfg: MpnConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        let mut params = vec![0.0; layout.len];
        for slot in &layout.slots {
            match slot.kind() {
                SlotKind::Weight => {
                    let a = (6.0 / (slot.rows + slot.cols) as f64).sqrt();
                    for p in &mut params[slot.range()] {
                        *p = rng.random_range(-a..a);
                    }
                }
                SlotKind::Gain => params[slot.range()].fill(1.0),
                SlotKind::Bias => {}
            }
        }
        Ok(Mpn { cfg, layout, params, version: 0 })
    }

    pub fn from_params(cfg: MpnConfig, params: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        if params.len() != layout.len {
            return Err(AmberError::Shape(format!(
                "expected {} parameters, got {}",
                layout.len,
                params.len()
            )));
        }
        Ok(Mpn { cfg, layout, params, version: 0 })
    }

    pub fn config(&self) -> &MpnConfig {
        &self.cfg
    }

    pub fn slots(&self) -> &[Slot] {
        &self.layout.slots
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn p(&self, slot: usize) -> &[f64] {
        &self.params[self.layout.slots[slot].range()]
    }

    fn check_graph(&self, g: &MeshGraph) -> Result<()> {
        if g.node_width != self.cfg.node_features {
            return Err(AmberError::Shape(format!(
                "graph has {} node features, network expects {}",
                g.node_width, self.cfg.node_features
            )));
        }
        if g.edge_features.len() != g.n_edges() * self.cfg.edge_features {
            return Err(AmberError::Shape("edge feature width mismatch".into()));
        }
        Ok(())
    }

    /// Deterministic evaluation-mode prediction.
    pub fn predict(&self, g: &MeshGraph) -> Result<Vec<f64>> {
        Ok(self.forward_with_mask(g, None)?.output)
    }

    /// Training-mode forward pass: each directed edge is dropped from the
    /// aggregation independently with the configured probability.
    pub fn forward_train<R: Rng + ?Sized>(&self, g: &MeshGraph, rng: &mut R) -> Result<ForwardCache> {
        let p = self.cfg.edge_dropout;
        let keep = (0..g.n_edges()).map(|_| rng.random::<f64>() >= p).collect();
        self.forward_with_mask(g, Some(keep))
    }

    /// Forward pass with an explicit keep-mask over directed edges (`None`
    /// keeps every edge).
    pub fn forward_with_mask(&self, g: &MeshGraph, keep: Option<Vec<bool>>) -> Result<ForwardCache> {
        self.check_graph(g)?;
        let (n, m, d) = (g.n_nodes, g.n_edges(), self.cfg.latent);
        if let Some(k) = &keep {
            if k.len() != m {
                return Err(AmberError::Shape("dropout mask length differs from edge count".into()));
            }
        }
        let l = &self.layout;

        let mut count = vec![0.0; n];
        for (e, &r) in g.receivers.iter().enumerate() {
            if keep.as_ref().is_none_or(|k| k[e]) {
                count[r] += 1.0;
            }
        }
        let inv_count: Vec<f64> = count.iter().map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 }).collect();
        let mut in_ptr = vec![0usize; n + 1];
        for v in 0..n {
            in_ptr[v + 1] = in_ptr[v] + count[v] as usize;
        }
        let mut incoming = vec![0usize; in_ptr[n]];
        let mut fill = in_ptr.clone();
        for (e, &r) in g.receivers.iter().enumerate() {
            if keep.as_ref().is_none_or(|k| k[e]) {
                incoming[fill[r]] = e;
                fill[r] += 1;
            }
        }

        let mut h0 = vec![0.0; n * d];
        mm(&g.node_features, n, self.cfg.node_features, self.p(l.node_w), d, &mut h0, 0.0);
        add_bias(&mut h0, self.p(l.node_b));
        let mut g0 = vec![0.0; m * d];
        mm(&g.edge_features, m, self.cfg.edge_features, self.p(l.edge_w), d, &mut g0, 0.0);
        add_bias(&mut g0, self.p(l.edge_b));

        let mut hs = vec![h0];
        let mut gs = vec![g0];
        let mut steps = Vec::with_capacity(self.cfg.steps);
        let post = self.cfg.norm_placement == NormPlacement::Post;
        for s in &l.steps {
            let h = hs.last().unwrap();
            let ge = gs.last().unwrap();

            // edge update
            let w1 = self.p(s.edge.w1);
            let mut pr = vec![0.0; n * d];
            let mut ps = vec![0.0; n * d];
            mm(h, n, d, &w1[..d * d], d, &mut pr, 0.0);
            mm(h, n, d, &w1[d * d..2 * d * d], d, &mut ps, 0.0);
            let mut ze1 = vec![0.0; m * d];
            mm(ge, m, d, &w1[2 * d * d..], d, &mut ze1, 0.0);
            add_bias(&mut ze1, self.p(s.edge.b1));
            for e in 0..m {
                let (r, sd) = (g.receivers[e], g.senders[e]);
                let row = &mut ze1[e * d..(e + 1) * d];
                for c in 0..d {
                    row[c] += pr[r * d + c] + ps[sd * d + c];
                }
            }
            let ae1: Vec<f64> = ze1.iter().map(|&x| leaky(x)).collect();
            let mut ze2 = vec![0.0; m * d];
            mm(&ae1, m, d, self.p(s.edge.w2), d, &mut ze2, 0.0);
            add_bias(&mut ze2, self.p(s.edge.b2));
            let mut g_next = vec![0.0; m * d];
            let (e_xhat, e_inv) = if post {
                for (z, x) in ze2.iter_mut().zip(ge) {
                    *z += x;
                }
                layer_norm(&ze2, d, self.p(s.edge_gain), self.p(s.edge_bias), &mut g_next)
            } else {
                let r = layer_norm(&ze2, d, self.p(s.edge_gain), self.p(s.edge_bias), &mut g_next);
                for (o, x) in g_next.iter_mut().zip(ge) {
                    *o += x;
                }
                r
            };

            // mean aggregation over surviving incoming edges
            let mut agg = vec![0.0; n * d];
            let mut vals = Vec::new();
            for v in 0..n {
                let inc = &incoming[in_ptr[v]..in_ptr[v + 1]];
                let out = &mut agg[v * d..(v + 1) * d];
                let row = |e: usize| &g_next[e * d..(e + 1) * d];
                // the sum must not depend on edge or node numbering: two
                // terms commute exactly, longer sums run in sorted order
                match *inc {
                    [] => {}
                    [a] => out.copy_from_slice(row(a)),
                    [a, b] => {
                        for ((o, x), y) in out.iter_mut().zip(row(a)).zip(row(b)) {
                            *o = x + y;
                        }
                    }
                    _ => {
                        for c in 0..d {
                            vals.clear();
                            vals.extend(inc.iter().map(|&e| g_next[e * d + c]));
                            vals.sort_unstable_by(f64::total_cmp);
                            out[c] = vals.iter().sum::<f64>();
                        }
                    }
                }
                let ic = inv_count[v];
                out.iter_mut().for_each(|x| *x *= ic);
            }

            // node update
            let v1 = self.p(s.node.w1);
            let mut zn1 = vec![0.0; n * d];
            mm(h, n, d, &v1[..d * d], d, &mut zn1, 0.0);
            mm(&agg, n, d, &v1[d * d..], d, &mut zn1, 1.0);
            add_bias(&mut zn1, self.p(s.node.b1));
            let an1: Vec<f64> = zn1.iter().map(|&x| leaky(x)).collect();
            let mut zn2 = vec![0.0; n * d];
            mm(&an1, n, d, self.p(s.node.w2), d, &mut zn2, 0.0);
            add_bias(&mut zn2, self.p(s.node.b2));
            let mut h_next = vec![0.0; n * d];
            let (n_xhat, n_inv) = if post {
                for (z, x) in zn2.iter_mut().zip(h) {
                    *z += x;
                }
                layer_norm(&zn2, d, self.p(s.node_gain), self.p(s.node_bias), &mut h_next)
            } else {
                let r = layer_norm(&zn2, d, self.p(s.node_gain), self.p(s.node_bias), &mut h_next);
                for (o, x) in h_next.iter_mut().zip(h) {
                    *o += x;
                }
                r
            };

            steps.push(StepCache { ze1, e_xhat, e_inv, agg, zn1, n_xhat, n_inv });
            hs.push(h_next);
            gs.push(g_next);
        }

        let dec = l.decoder;
        let mut zd1 = vec![0.0; n * d];
        mm(hs.last().unwrap(), n, d, self.p(dec.w1), d, &mut zd1, 0.0);
        add_bias(&mut zd1, self.p(dec.b1));
        let ad1: Vec<f64> = zd1.iter().map(|&x| leaky(x)).collect();
        let mut y = vec![0.0; n];
        mm(&ad1, n, d, self.p(dec.w2), 1, &mut y, 0.0);
        add_bias(&mut y, self.p(dec.b2));
        let output = y.iter().map(|&v| softplus(v)).collect();

        Ok(ForwardCache {
            version: self.version,
            n_nodes: n,
            senders: g.senders.clone(),
            receivers: g.receivers.clone(),
            keep,
            inv_count,
            x0: g.node_features.clone(),
            e0: g.edge_features.clone(),
            h: hs,
            g: gs,
            steps,
            zd1,
            y,
            output,
        })
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient `dout` with respect to the node outputs.
    pub fn backward(&self, cache: &ForwardCache, dout: &[f64]) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(AmberError::InvalidInput("forward cache is stale: parameters changed".into()));
        }
        let n = cache.n_nodes;
        if dout.len() != n {
            return Err(AmberError::Shape(format!("{} output gradients for {n} nodes", dout.len())));
        }
        let m = cache.senders.len();
        let d = self.cfg.latent;
        let l = &self.layout;
        let post = self.cfg.norm_placement == NormPlacement::Post;
        let mut grad = vec![0.0; self.params.len()];
        let range = |slot: usize| l.slots[slot].range();

        // decoder
        let dec = l.decoder;
        let dy: Vec<f64> = dout.iter().zip(&cache.y).map(|(g, &y)| g * sigmoid(y)).collect();
        let ad1: Vec<f64> = cache.zd1.iter().map(|&x| leaky(x)).collect();
        mm_tn(&ad1, n, d, &dy, 1, &mut grad[range(dec.w2)], 1.0);
        col_sums(&dy, &mut grad[range(dec.b2)]);
        let mut dzd1 = vec![0.0; n * d];
        mm_nt(&dy, n, 1, self.p(dec.w2), d, &mut dzd1, 0.0);
        for (g, &z) in dzd1.iter_mut().zip(&cache.zd1) {
            *g *= leaky_grad(z);
        }
        let h_last = cache.h.last().unwrap();
        mm_tn(h_last, n, d, &dzd1, d, &mut grad[range(dec.w1)], 1.0);
        col_sums(&dzd1, &mut grad[range(dec.b1)]);
        let mut dh = vec![0.0; n * d];
        mm_nt(&dzd1, n, d, self.p(dec.w1), d, &mut dh, 0.0);
        let mut dg = vec![0.0; m * d];

        for (li, s) in l.steps.iter().enumerate().rev() {
            let c = &cache.steps[li];
            let h = &cache.h[li];
            let ge = &cache.g[li];

            // node update
            let mut dzn2 = vec![0.0; n * d];
            {
                let (gain, bias) = (range(s.node_gain), range(s.node_bias));
                let (mut dgain, mut dbias) = (vec![0.0; d], vec![0.0; d]);
                layer_norm_backward(&dh, &c.n_xhat, &c.n_inv, d, self.p(s.node_gain), &mut dzn2, &mut dgain, &mut dbias);
                grad[gain].iter_mut().zip(&dgain).for_each(|(a, b)| *a += b);
                grad[bias].iter_mut().zip(&dbias).for_each(|(a, b)| *a += b);
            }
            // residual: post-norm routes the LN input gradient to h, pre-norm
            // routes the output gradient straight through
            let mut dh_prev = if post { dzn2.clone() } else { dh.clone() };
            let an1: Vec<f64> = c.zn1.iter().map(|&x| leaky(x)).collect();
            mm_tn(&an1, n, d, &dzn2, d, &mut grad[range(s.node.w2)], 1.0);
            col_sums(&dzn2, &mut grad[range(s.node.b2)]);
            let mut dzn1 = vec![0.0; n * d];
            mm_nt(&dzn2, n, d, self.p(s.node.w2), d, &mut dzn1, 0.0);
            for (g, &z) in dzn1.iter_mut().zip(&c.zn1) {
                *g *= leaky_grad(z);
            }
            {
                let gw = &mut grad[range(s.node.w1)];
                let (top, bottom) = gw.split_at_mut(d * d);
                mm_tn(h, n, d, &dzn1, d, top, 1.0);
                mm_tn(&c.agg, n, d, &dzn1, d, bottom, 1.0);
            }
            col_sums(&dzn1, &mut grad[range(s.node.b1)]);
            let v1 = self.p(s.node.w1);
            mm_nt(&dzn1, n, d, &v1[..d * d], d, &mut dh_prev, 1.0);
            let mut dagg = vec![0.0; n * d];
            mm_nt(&dzn1, n, d, &v1[d * d..], d, &mut dagg, 0.0);

            // aggregation
            for e in 0..m {
                if cache.keep.as_ref().is_none_or(|k| k[e]) {
                    let r = cache.receivers[e];
                    let w = cache.inv_count[r];
                    let src = &dagg[r * d..(r + 1) * d];
                    let dst = &mut dg[e * d..(e + 1) * d];
                    for k in 0..d {
                        dst[k] += w * src[k];
                    }
                }
            }

            // edge update
            let mut dze2 = vec![0.0; m * d];
            {
                let (gain, bias) = (range(s.edge_gain), range(s.edge_bias));
                let (mut dgain, mut dbias) = (vec![0.0; d], vec![0.0; d]);
                layer_norm_backward(&dg, &c.e_xhat, &c.e_inv, d, self.p(s.edge_gain), &mut dze2, &mut dgain, &mut dbias);
                grad[gain].iter_mut().zip(&dgain).for_each(|(a, b)| *a += b);
                grad[bias].iter_mut().zip(&dbias).for_each(|(a, b)| *a += b);
            }
            let mut dg_prev = if post { dze2.clone() } else { dg.clone() };
            let ae1: Vec<f64> = c.ze1.iter().map(|&x| leaky(x)).collect();
            mm_tn(&ae1, m, d, &dze2, d, &mut grad[range(s.edge.w2)], 1.0);
            col_sums(&dze2, &mut grad[range(s.edge.b2)]);
            let mut dze1 = vec![0.0; m * d];
            mm_nt(&dze2, m, d, self.p(s.edge.w2), d, &mut dze1, 0.0);
            for (g, &z) in dze1.iter_mut().zip(&c.ze1) {
                *g *= leaky_grad(z);
            }
            col_sums(&dze1, &mut grad[range(s.edge.b1)]);
            let mut sr = vec![0.0; n * d];
            let mut ss = vec![0.0; n * d];
            scatter_rows(&dze1, &cache.receivers, d, &mut sr);
            scatter_rows(&dze1, &cache.senders, d, &mut ss);
            {
                let gw = &mut grad[range(s.edge.w1)];
                let (wr, rest) = gw.split_at_mut(d * d);
                let (ws, we) = rest.split_at_mut(d * d);
                mm_tn(h, n, d, &sr, d, wr, 1.0);
                mm_tn(h, n, d, &ss, d, ws, 1.0);
                mm_tn(ge, m, d, &dze1, d, we, 1.0);
            }
            let w1 = self.p(s.edge.w1);
            mm_nt(&sr, n, d, &w1[..d * d], d, &mut dh_prev, 1.0);
            mm_nt(&ss, n, d, &w1[d * d..2 * d * d], d, &mut dh_prev, 1.0);
            mm_nt(&dze1, m, d, &w1[2 * d * d..], d, &mut dg_prev, 1.0);

            dh = dh_prev;
            dg = dg_prev;
        }

        let (fv, fe) = (self.cfg.node_features, self.cfg.edge_features);
        mm_tn(&cache.x0, n, fv, &dh, d, &mut grad[range(l.node_w)], 1.0);
        col_sums(&dh, &mut grad[range(l.node_b)]);
        mm_tn(&cache.e0, m, fe, &dg, d, &mut grad[range(l.edge_w)], 1.0);
        col_sums(&dg, &mut grad[range(l.edge_b)]);
        Ok(grad)
    }

    /// Loss and parameter gradient for one cached forward pass.
    pub fn backward_loss(&self, cache: &ForwardCache, kind: LossKind, labels: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (loss, dout) = loss_and_grad(kind, &cache.output, labels)?;
        Ok((loss, self.backward(cache, &dout)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    LogMse,
}

impl std::str::FromStr for LossKind {
    type Err = AmberError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "log_mse" => Ok(LossKind::LogMse),
            other => Err(AmberError::InvalidInput(format!("unknown loss {other:?}"))),
        }
    }
}

fn check_lengths(pred: &[f64], labels: &[f64]) -> Result<()> {
    if pred.len() != labels.len() || pred.is_empty() {
        return Err(AmberError::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            labels.len()
        )));
    }
    Ok(())
}

pub fn loss_mse(pred: &[f64], labels: &[f64]) -> Result<f64> {
    Ok(loss_and_grad(LossKind::Mse, pred, labels)?.0)
}

pub fn loss_log_mse(pred: &[f64], labels: &[f64]) -> Result<f64> {
    Ok(loss_and_grad(LossKind::LogMse, pred, labels)?.0)
}

/// Loss value and its gradient with respect to `pred`.
pub fn loss_and_grad(kind: LossKind, pred: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(pred, labels)?;
    let n = pred.len() as f64;
    match kind {
        LossKind::Mse => {
            let mut loss = 0.0;
            let grad = pred
                .iter()
                .zip(labels)
                .map(|(p, y)| {
                    loss += (p - y) * (p - y);
                    2.0 * (p - y) / n
                })
                .collect();
            Ok((loss / n, grad))
        }
        LossKind::LogMse => {
            if pred.iter().chain(labels).any(|&v| !(v > 0.0)) {
                return Err(AmberError::InvalidInput("log loss needs positive values".into()));
            }
            let mut loss = 0.0;
            let grad = pred
                .iter()
                .zip(labels)
                .map(|(p, y)| {
                    let r = p.ln() - y.ln();
                    loss += r * r;
                    2.0 * r / (n * p)
                })
                .collect();
            Ok((loss / n, grad))
        }
    }
}
