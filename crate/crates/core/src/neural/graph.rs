//! Layer graph: forward evaluation with caching and reverse-mode gradients
//! through time.
//!
//! A model is a topologically ordered node list. Every node produces a
//! sequence of feature vectors; inputs supply the K-step branch sequences,
//! LSTM nodes map sequences to sequences (or to their final step only), and
//! dense nodes apply per step. Concat nodes join feature dimensions.
//! LSTM cells use sigmoid gates and a tanh candidate with a *linear* cell
//! output: `h_t = o_t * c_t`.

use super::NeuralError;
use crate::rng::Rng;

/// Row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// y += W x
    fn matvec_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            y[r] += acc;
        }
    }

    /// x += W^T dy
    fn matvec_t_add(&self, dy: &[f64], x: &mut [f64]) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let d = dy[r];
            if d == 0.0 {
                continue;
            }
            for (w, xv) in row.iter().zip(x.iter_mut()) {
                *xv += w * d;
            }
        }
    }

    /// W += dy x^T
    fn outer_add(&mut self, dy: &[f64], x: &[f64]) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let d = dy[r];
            if d == 0.0 {
                continue;
            }
            for (w, xv) in row.iter_mut().zip(x) {
                *w += d * xv;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(&self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub w: Mat,
    pub b: Vec<f64>,
}

/// One LSTM gate: `z = W x + U h_prev + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

/// Gate order within an LSTM layer: input, forget, cell candidate, output.
pub const GATES: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub returns_sequence: bool,
    pub gates: [Gate; GATES],
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Input { branch: usize, dim: usize },
    Dense(DenseLayer),
    Lstm(LstmLayer),
    Concat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub inputs: Vec<usize>,
}

/// Flat layer description for conformance checks and reporting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerInfo {
    Input { branch: usize, dim: usize },
    Lstm { in_dim: usize, out_dim: usize, returns_sequence: bool },
    Dense { in_dim: usize, out_dim: usize, activation: Activation },
    Concat { width: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub net: super::NetKind,
    pub nodes: Vec<Node>,
    pub dropout_rate: f64,
    pub init_seed: u64,
    /// Feature scale applied outside the net (gradient nets train on scaled
    /// magnitudes); recorded here so inference applies the same scale.
    pub io_scale: f64,
}

impl Model {
    /// Output width of a node.
    fn node_dim(&self, idx: usize) -> usize {
        match &self.nodes[idx].kind {
            NodeKind::Input { dim, .. } => *dim,
            NodeKind::Dense(d) => d.out_dim,
            NodeKind::Lstm(l) => l.out_dim,
            NodeKind::Concat => self.nodes[idx]
                .inputs
                .iter()
                .map(|&i| self.node_dim(i))
                .sum(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.node_dim(self.nodes.len() - 1)
    }

    /// Number of input branches the model expects.
    pub fn branch_dims(&self) -> Vec<usize> {
        let mut dims = Vec::new();
        for n in &self.nodes {
            if let NodeKind::Input { branch, dim } = n.kind {
                if dims.len() <= branch {
                    dims.resize(branch + 1, 0);
                }
                dims[branch] = dim;
            }
        }
        dims
    }

    /// Structural validation: topological order and edge dimensions.
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.nodes.is_empty() {
            return Err(NeuralError::DimMismatch("empty graph".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.inputs.iter().any(|&j| j >= i) {
                return Err(NeuralError::DimMismatch(format!(
                    "node {i} consumes a later node"
                )));
            }
            match &n.kind {
                NodeKind::Input { .. } => {
                    if !n.inputs.is_empty() {
                        return Err(NeuralError::DimMismatch("input node with inputs".into()));
                    }
                }
                NodeKind::Dense(d) => {
                    let got = self.node_dim(n.inputs[0]);
                    if n.inputs.len() != 1 || got != d.in_dim {
                        return Err(NeuralError::DimMismatch(format!(
                            "dense node {i} expects {} features, receives {got}",
                            d.in_dim
                        )));
                    }
                }
                NodeKind::Lstm(l) => {
                    let got = self.node_dim(n.inputs[0]);
                    if n.inputs.len() != 1 || got != l.in_dim {
                        return Err(NeuralError::DimMismatch(format!(
                            "lstm node {i} expects {} features, receives {got}",
                            l.in_dim
                        )));
                    }
                }
                NodeKind::Concat => {
                    if n.inputs.len() < 2 {
                        return Err(NeuralError::DimMismatch(format!(
                            "concat node {i} needs at least two inputs"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Flat layer inventory in topological order.
    pub fn describe(&self) -> Vec<LayerInfo> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| match &n.kind {
                NodeKind::Input { branch, dim } => LayerInfo::Input {
                    branch: *branch,
                    dim: *dim,
                },
                NodeKind::Lstm(l) => LayerInfo::Lstm {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    returns_sequence: l.returns_sequence,
                },
                NodeKind::Dense(d) => LayerInfo::Dense {
                    in_dim: d.in_dim,
                    out_dim: d.out_dim,
                    activation: d.activation,
                },
                NodeKind::Concat => LayerInfo::Concat {
                    width: self.node_dim(i),
                },
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match &n.kind {
                NodeKind::Dense(d) => d.w.data.len() + d.b.len(),
                NodeKind::Lstm(l) => l
                    .gates
                    .iter()
                    .map(|g| g.w.data.len() + g.u.data.len() + g.b.len())
                    .sum(),
                _ => 0,
            })
            .sum()
    }

    /// All parameters flattened in node order (dense: W then b; LSTM: gates
    /// i, f, g, o, each W, U, b).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for n in &self.nodes {
            match &n.kind {
                NodeKind::Dense(d) => {
                    out.extend_from_slice(&d.w.data);
                    out.extend_from_slice(&d.b);
                }
                NodeKind::Lstm(l) => {
                    for g in &l.gates {
                        out.extend_from_slice(&g.w.data);
                        out.extend_from_slice(&g.u.data);
                        out.extend_from_slice(&g.b);
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), NeuralError> {
        if flat.len() != self.param_count() {
            return Err(NeuralError::ShapeMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut pos = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[pos..pos + dst.len()]);
            pos += dst.len();
        };
        for n in &mut self.nodes {
            match &mut n.kind {
                NodeKind::Dense(d) => {
                    take(&mut d.w.data);
                    take(&mut d.b);
                }
                NodeKind::Lstm(l) => {
                    for g in &mut l.gates {
                        take(&mut g.w.data);
                        take(&mut g.u.data);
                        take(&mut g.b);
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Inference forward pass: deterministic, no dropout.
    pub fn forward(&self, branches: &[Vec<Vec<f64>>]) -> Result<Vec<f64>, NeuralError> {
        let (out, _) = self.forward_cached(branches, None)?;
        Ok(out)
    }

    /// Forward pass keeping every activation needed by `backward`. When an
    /// RNG is supplied the pass runs in training mode: inverted dropout is
    /// applied to the output of every layer except the final one.
    pub fn forward_cached(
        &self,
        branches: &[Vec<Vec<f64>>],
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<(Vec<f64>, ForwardCache), NeuralError> {
        let expected = self.branch_dims();
        if branches.len() != expected.len() {
            return Err(NeuralError::DimMismatch(format!(
                "model expects {} input branches, got {}",
                expected.len(),
                branches.len()
            )));
        }
        let mut cache = ForwardCache {
            nodes: Vec::with_capacity(self.nodes.len()),
        };
        for (i, node) in self.nodes.iter().enumerate() {
            let is_output = i == self.nodes.len() - 1;
            let nc = match &node.kind {
                NodeKind::Input { branch, dim } => {
                    let seq = &branches[*branch];
                    if seq.is_empty() || seq.iter().any(|v| v.len() != *dim) {
                        return Err(NeuralError::DimMismatch(format!(
                            "branch {branch} must be a non-empty sequence of {dim}-vectors"
                        )));
                    }
                    NodeCache {
                        output: seq.clone(),
                        detail: NodeDetail::Passthrough,
                        dropout: None,
                    }
                }
                NodeKind::Concat => {
                    let parts: Vec<&NodeCache> =
                        node.inputs.iter().map(|&j| &cache.nodes[j]).collect();
                    let len = parts[0].output.len();
                    if parts.iter().any(|p| p.output.len() != len) {
                        return Err(NeuralError::DimMismatch(
                            "concat inputs with different sequence lengths".into(),
                        ));
                    }
                    let output = (0..len)
                        .map(|t| {
                            let mut v = Vec::new();
                            for p in &parts {
                                v.extend_from_slice(&p.output[t]);
                            }
                            v
                        })
                        .collect();
                    NodeCache {
                        output,
                        detail: NodeDetail::Passthrough,
                        dropout: None,
                    }
                }
                NodeKind::Dense(d) => {
                    let input = &cache.nodes[node.inputs[0]].output;
                    let mut output = Vec::with_capacity(input.len());
                    for x in input {
                        let mut y = d.b.clone();
                        d.w.matvec_add(x, &mut y);
                        for v in y.iter_mut() {
                            *v = d.activation.apply(*v);
                        }
                        output.push(y);
                    }
                    NodeCache {
                        output,
                        detail: NodeDetail::Dense,
                        dropout: None,
                    }
                }
                NodeKind::Lstm(l) => {
                    let input = &cache.nodes[node.inputs[0]].output;
                    let mut steps = Vec::with_capacity(input.len());
                    let mut h = vec![0.0; l.out_dim];
                    let mut c = vec![0.0; l.out_dim];
                    for x in input {
                        let step = lstm_step(l, x, &h, &c);
                        h = step.h.clone();
                        c = step.c.clone();
                        steps.push(step);
                    }
                    let output = if l.returns_sequence {
                        steps.iter().map(|s| s.h.clone()).collect()
                    } else {
                        vec![steps.last().unwrap().h.clone()]
                    };
                    NodeCache {
                        output,
                        detail: NodeDetail::Lstm(steps),
                        dropout: None,
                    }
                }
            };
            let mut nc = nc;
            // Inverted dropout on every layer output except the final node.
            if let Some(rng) = dropout_rng.as_deref_mut() {
                let droppable = matches!(node.kind, NodeKind::Dense(_) | NodeKind::Lstm(_));
                if droppable && !is_output && self.dropout_rate > 0.0 {
                    let keep = 1.0 - self.dropout_rate;
                    let mut masks = Vec::with_capacity(nc.output.len());
                    for step in nc.output.iter_mut() {
                        let mask: Vec<f64> = step
                            .iter()
                            .map(|_| if rng.chance(keep) { 1.0 / keep } else { 0.0 })
                            .collect();
                        for (v, m) in step.iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        masks.push(mask);
                    }
                    nc.dropout = Some(masks);
                }
            }
            cache.nodes.push(nc);
        }
        let last = cache.nodes.last().unwrap();
        if last.output.len() != 1 {
            return Err(NeuralError::DimMismatch(
                "output node must produce a single step; end sequence stacks with a \
                 returns_sequence=false LSTM"
                    .into(),
            ));
        }
        Ok((last.output[0].clone(), cache))
    }

    /// Reverse-mode gradients for every parameter given the loss gradient at
    /// the output. Returns gradients flattened in `params_flat` order.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
    ) -> Result<Vec<f64>, NeuralError> {
        if output_grad.len() != self.output_dim() {
            return Err(NeuralError::DimMismatch(format!(
                "output gradient has {} entries, model emits {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        // Per-node output-sequence gradients, accumulated from consumers.
        let mut grads: Vec<Vec<Vec<f64>>> = cache
            .nodes
            .iter()
            .map(|nc| nc.output.iter().map(|v| vec![0.0; v.len()]).collect())
            .collect();
        let last = self.nodes.len() - 1;
        grads[last][0].copy_from_slice(output_grad);

        let mut param_grads: Vec<NodeGrad> = self
            .nodes
            .iter()
            .map(|n| NodeGrad::zeros_like(&n.kind))
            .collect();

        for i in (0..self.nodes.len()).rev() {
            // Undo dropout scaling first: gradient of y*mask wrt y.
            if let Some(masks) = &cache.nodes[i].dropout {
                for (g, m) in grads[i].iter_mut().zip(masks) {
                    for (gv, mv) in g.iter_mut().zip(m) {
                        *gv *= mv;
                    }
                }
            }
            let node = &self.nodes[i];
            match &node.kind {
                NodeKind::Input { .. } => {}
                NodeKind::Concat => {
                    let seq_grad = std::mem::take(&mut grads[i]);
                    for (t, g) in seq_grad.iter().enumerate() {
                        let mut offset = 0;
                        for &j in &node.inputs {
                            let dim = cache.nodes[j].output[t].len();
                            for (dst, src) in grads[j][t]
                                .iter_mut()
                                .zip(&g[offset..offset + dim])
                            {
                                *dst += src;
                            }
                            offset += dim;
                        }
                    }
                }
                NodeKind::Dense(d) => {
                    let seq_grad = std::mem::take(&mut grads[i]);
                    let j = node.inputs[0];
                    let NodeGrad::Dense { dw, db } = &mut param_grads[i] else {
                        unreachable!()
                    };
                    for (t, dy) in seq_grad.iter().enumerate() {
                        let y = &cache.nodes[i].output[t];
                        let mask = cache.nodes[i].dropout.as_ref().map(|m| &m[t]);
                        let x = &cache.nodes[j].output[t];
                        // Cached outputs are post-dropout; recover the raw
                        // activation value before taking its derivative.
                        let dz: Vec<f64> = (0..dy.len())
                            .map(|u| {
                                let raw = match mask {
                                    Some(m) if m[u] > 0.0 => y[u] / m[u],
                                    Some(_) => 0.0,
                                    None => y[u],
                                };
                                dy[u] * d.activation.derivative_from_output(raw)
                            })
                            .collect();
                        dw.outer_add(&dz, x);
                        for (bv, dzv) in db.iter_mut().zip(&dz) {
                            *bv += dzv;
                        }
                        d.w.matvec_t_add(&dz, &mut grads[j][t]);
                    }
                }
                NodeKind::Lstm(l) => {
                    let seq_grad = std::mem::take(&mut grads[i]);
                    let j = node.inputs[0];
                    let NodeDetail::Lstm(steps) = &cache.nodes[i].detail else {
                        unreachable!()
                    };
                    let NodeGrad::Lstm(gates) = &mut param_grads[i] else {
                        unreachable!()
                    };
                    let t_len = steps.len();
                    let mut dh_next = vec![0.0; l.out_dim];
                    let mut dc_next = vec![0.0; l.out_dim];
                    for t in (0..t_len).rev() {
                        let step = &steps[t];
                        let mut dh = dh_next.clone();
                        if l.returns_sequence {
                            for (a, b) in dh.iter_mut().zip(&seq_grad[t]) {
                                *a += b;
                            }
                        } else if t == t_len - 1 {
                            for (a, b) in dh.iter_mut().zip(&seq_grad[0]) {
                                *a += b;
                            }
                        }
                        // h = o * c (linear cell output).
                        let mut dc = dc_next.clone();
                        let mut dz = [
                            vec![0.0; l.out_dim],
                            vec![0.0; l.out_dim],
                            vec![0.0; l.out_dim],
                            vec![0.0; l.out_dim],
                        ];
                        let c_prev: &[f64] = if t == 0 {
                            &step.zeros
                        } else {
                            &steps[t - 1].c
                        };
                        let h_prev: &[f64] = if t == 0 {
                            &step.zeros
                        } else {
                            &steps[t - 1].h
                        };
                        for u in 0..l.out_dim {
                            let d_o = dh[u] * step.c[u];
                            dc[u] += dh[u] * step.o[u];
                            dz[3][u] = d_o * step.o[u] * (1.0 - step.o[u]);
                            let d_i = dc[u] * step.g[u];
                            let d_f = dc[u] * c_prev[u];
                            let d_g = dc[u] * step.i[u];
                            dz[0][u] = d_i * step.i[u] * (1.0 - step.i[u]);
                            dz[1][u] = d_f * step.f[u] * (1.0 - step.f[u]);
                            dz[2][u] = d_g * (1.0 - step.g[u] * step.g[u]);
                        }
                        let x = &cache.nodes[j].output[t];
                        let mut dx = vec![0.0; l.in_dim];
                        let mut dh_prev = vec![0.0; l.out_dim];
                        for (gi, dzg) in dz.iter().enumerate() {
                            gates[gi].dw.outer_add(dzg, x);
                            gates[gi].du.outer_add(dzg, h_prev);
                            for (bv, dv) in gates[gi].db.iter_mut().zip(dzg) {
                                *bv += dv;
                            }
                            l.gates[gi].w.matvec_t_add(dzg, &mut dx);
                            l.gates[gi].u.matvec_t_add(dzg, &mut dh_prev);
                        }
                        for (dst, src) in grads[j][t].iter_mut().zip(&dx) {
                            *dst += src;
                        }
                        dh_next = dh_prev;
                        dc_next = dc.iter().zip(&step.f).map(|(d, f)| d * f).collect();
                    }
                }
            }
        }

        let mut flat = Vec::with_capacity(self.param_count());
        for g in &param_grads {
            match g {
                NodeGrad::None => {}
                NodeGrad::Dense { dw, db } => {
                    flat.extend_from_slice(&dw.data);
                    flat.extend_from_slice(db);
                }
                NodeGrad::Lstm(gates) => {
                    for gg in gates.iter() {
                        flat.extend_from_slice(&gg.dw.data);
                        flat.extend_from_slice(&gg.du.data);
                        flat.extend_from_slice(&gg.db);
                    }
                }
            }
        }
        Ok(flat)
    }
}

struct LstmStep {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
    zeros: Vec<f64>,
}

fn lstm_step(l: &LstmLayer, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
    let mut z = [
        l.gates[0].b.clone(),
        l.gates[1].b.clone(),
        l.gates[2].b.clone(),
        l.gates[3].b.clone(),
    ];
    for (gi, zg) in z.iter_mut().enumerate() {
        l.gates[gi].w.matvec_add(x, zg);
        l.gates[gi].u.matvec_add(h_prev, zg);
    }
    let i: Vec<f64> = z[0].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[1].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[2].iter().map(|&v| v.tanh()).collect();
    let o: Vec<f64> = z[3].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..l.out_dim)
        .map(|u| f[u] * c_prev[u] + i[u] * g[u])
        .collect();
    let h: Vec<f64> = (0..l.out_dim).map(|u| o[u] * c[u]).collect();
    LstmStep {
        i,
        f,
        g,
        o,
        c,
        h,
        zeros: vec![0.0; l.out_dim],
    }
}

enum NodeDetail {
    Passthrough,
    Dense,
    Lstm(Vec<LstmStep>),
}

struct NodeCache {
    output: Vec<Vec<f64>>,
    detail: NodeDetail,
    dropout: Option<Vec<Vec<f64>>>,
}

/// Cached activations from one forward pass.
pub struct ForwardCache {
    nodes: Vec<NodeCache>,
}

enum NodeGrad {
    None,
    Dense { dw: Mat, db: Vec<f64> },
    Lstm([GateGrad; GATES]),
}

struct GateGrad {
    dw: Mat,
    du: Mat,
    db: Vec<f64>,
}

impl NodeGrad {
    fn zeros_like(kind: &NodeKind) -> Self {
        match kind {
            NodeKind::Dense(d) => NodeGrad::Dense {
                dw: Mat::zeros(d.w.rows, d.w.cols),
                db: vec![0.0; d.b.len()],
            },
            NodeKind::Lstm(l) => NodeGrad::Lstm(std::array::from_fn(|gi| GateGrad {
                dw: Mat::zeros(l.gates[gi].w.rows, l.gates[gi].w.cols),
                du: Mat::zeros(l.gates[gi].u.rows, l.gates[gi].u.cols),
                db: vec![0.0; l.gates[gi].b.len()],
            })),
            _ => NodeGrad::None,
        }
    }
}
