//! Builders for the three prediction subnets.
//!
//! Contour net: three input branches (52 x-coordinates, 52 y-coordinates,
//! 2-vector center), each through its own LSTM(linear)-260 stack, the x/y
//! branches merged into four shared LSTM-260 layers, a final merge with the
//! center stack, two more LSTM-260 (the last collapsing the sequence), and a
//! linear dense head of width 106.
//!
//! Gradient net: 52 magnitudes through six LSTM(linear)-250 layers and a
//! linear dense head of width 52.
//!
//! Breakage net: 104 mean-centered coordinates through six Dense(ReLU)-150
//! layers and a sigmoid head of width 1.
//!
//! Weights start uniform in ±sqrt(6/(fan_in+fan_out)); forget-gate biases
//! start at +1.

use super::graph::{Activation, DenseLayer, Gate, LstmLayer, Mat, Model, Node, NodeKind};
use crate::rng::Rng;

pub const DEFAULT_DROPOUT: f64 = 0.2;

/// Which subnet a model implements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    Contour,
    Gradient,
    Breakage,
}

impl NetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NetKind::Contour => "contour",
            NetKind::Gradient => "gradient",
            NetKind::Breakage => "breakage",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "contour" => Some(NetKind::Contour),
            "gradient" => Some(NetKind::Gradient),
            "breakage" => Some(NetKind::Breakage),
            _ => None,
        }
    }
}

fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Mat {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Mat {
        rows,
        cols,
        data: (0..rows * cols)
            .map(|_| rng.range_f64(-limit, limit))
            .collect(),
    }
}

fn lstm(rng: &mut Rng, in_dim: usize, out_dim: usize, returns_sequence: bool) -> NodeKind {
    let gate = |rng: &mut Rng, forget: bool| Gate {
        w: glorot(rng, out_dim, in_dim),
        u: glorot(rng, out_dim, out_dim),
        b: vec![if forget { 1.0 } else { 0.0 }; out_dim],
    };
    NodeKind::Lstm(LstmLayer {
        in_dim,
        out_dim,
        returns_sequence,
        gates: [
            gate(rng, false),
            gate(rng, true),
            gate(rng, false),
            gate(rng, false),
        ],
    })
}

fn dense(rng: &mut Rng, in_dim: usize, out_dim: usize, activation: Activation) -> NodeKind {
    NodeKind::Dense(DenseLayer {
        in_dim,
        out_dim,
        activation,
        w: glorot(rng, out_dim, in_dim),
        b: vec![0.0; out_dim],
    })
}

fn node(kind: NodeKind, inputs: Vec<usize>) -> Node {
    Node { kind, inputs }
}

/// Contour prediction subnet; input branches are (x-coords, y-coords, center),
/// output is the 106-vector of next-step coordinates plus center.
pub fn build_contour_net(seed: u64) -> Model {
    let mut rng = Rng::seed_from(seed);
    let w = 260;
    let mut nodes = Vec::new();
    nodes.push(node(NodeKind::Input { branch: 0, dim: 52 }, vec![])); // 0
    nodes.push(node(NodeKind::Input { branch: 1, dim: 52 }, vec![])); // 1
    nodes.push(node(NodeKind::Input { branch: 2, dim: 2 }, vec![])); // 2
    nodes.push(node(lstm(&mut rng, 52, w, true), vec![0])); // 3: x branch
    nodes.push(node(lstm(&mut rng, 52, w, true), vec![1])); // 4: y branch
    nodes.push(node(NodeKind::Concat, vec![3, 4])); // 5
    nodes.push(node(lstm(&mut rng, 2 * w, w, true), vec![5])); // 6: shared
    nodes.push(node(lstm(&mut rng, w, w, true), vec![6])); // 7
    nodes.push(node(lstm(&mut rng, w, w, true), vec![7])); // 8
    nodes.push(node(lstm(&mut rng, w, w, true), vec![8])); // 9
    nodes.push(node(lstm(&mut rng, 2, w, true), vec![2])); // 10: center
    nodes.push(node(lstm(&mut rng, w, w, true), vec![10])); // 11
    nodes.push(node(lstm(&mut rng, w, w, true), vec![11])); // 12
    nodes.push(node(NodeKind::Concat, vec![9, 12])); // 13
    nodes.push(node(lstm(&mut rng, 2 * w, w, true), vec![13])); // 14
    nodes.push(node(lstm(&mut rng, w, w, false), vec![14])); // 15: last step
    nodes.push(node(dense(&mut rng, w, 106, Activation::Linear), vec![15])); // 16
    let model = Model {
        net: NetKind::Contour,
        nodes,
        dropout_rate: DEFAULT_DROPOUT,
        init_seed: seed,
        io_scale: 1.0,
    };
    debug_assert!(model.validate().is_ok());
    model
}

/// Gradient prediction subnet: 52 magnitudes in, 52 out.
pub fn build_gradient_net(seed: u64) -> Model {
    let mut rng = Rng::seed_from(seed);
    let w = 250;
    let mut nodes = Vec::new();
    nodes.push(node(NodeKind::Input { branch: 0, dim: 52 }, vec![]));
    nodes.push(node(lstm(&mut rng, 52, w, true), vec![0]));
    for i in 0..4 {
        nodes.push(node(lstm(&mut rng, w, w, true), vec![i + 1]));
    }
    nodes.push(node(lstm(&mut rng, w, w, false), vec![5]));
    nodes.push(node(dense(&mut rng, w, 52, Activation::Linear), vec![6]));
    let model = Model {
        net: NetKind::Gradient,
        nodes,
        dropout_rate: DEFAULT_DROPOUT,
        init_seed: seed,
        io_scale: 1.0,
    };
    debug_assert!(model.validate().is_ok());
    model
}

/// Breakage classifier: 104 mean-centered coordinates in, split probability out.
pub fn build_breakage_net(seed: u64) -> Model {
    let mut rng = Rng::seed_from(seed);
    let w = 150;
    let mut nodes = Vec::new();
    nodes.push(node(NodeKind::Input { branch: 0, dim: 104 }, vec![]));
    nodes.push(node(dense(&mut rng, 104, w, Activation::Relu), vec![0]));
    for i in 0..5 {
        nodes.push(node(dense(&mut rng, w, w, Activation::Relu), vec![i + 1]));
    }
    nodes.push(node(dense(&mut rng, w, 1, Activation::Sigmoid), vec![6]));
    let model = Model {
        net: NetKind::Breakage,
        nodes,
        dropout_rate: DEFAULT_DROPOUT,
        init_seed: seed,
        io_scale: 1.0,
    };
    debug_assert!(model.validate().is_ok());
    model
}
