//! Model persistence: `nd-model v1` JSON with fixed key order and decimal
//! weights at 17 significant digits, so save/load round trips are bitwise
//! exact.

use super::graph::{Activation, DenseLayer, Gate, LstmLayer, Mat, Model, Node, NodeKind};
use super::nets::NetKind;
use super::NeuralError;
use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;

pub const MODEL_FORMAT: &str = "nd-model v1";

pub fn save_model(path: &Path, model: &Model) -> Result<(), NeuralError> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, NeuralError> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}

pub fn model_to_json(model: &Model) -> String {
    let mut s = String::new();
    s.push_str("{\n");
    let _ = writeln!(s, "  \"format\": \"{MODEL_FORMAT}\",");
    let _ = writeln!(s, "  \"net\": \"{}\",", model.net.as_str());
    let _ = writeln!(s, "  \"dropout_rate\": {},", num(model.dropout_rate));
    let _ = writeln!(s, "  \"init_seed\": {},", model.init_seed);
    let _ = writeln!(s, "  \"io_scale\": {},", num(model.io_scale));
    s.push_str("  \"nodes\": [\n");
    for (i, node) in model.nodes.iter().enumerate() {
        s.push_str("    ");
        write_node(&mut s, node);
        if i + 1 < model.nodes.len() {
            s.push(',');
        }
        s.push('\n');
    }
    s.push_str("  ]\n}\n");
    s
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_node(s: &mut String, node: &Node) {
    let inputs = node
        .inputs
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",");
    match &node.kind {
        NodeKind::Input { branch, dim } => {
            let _ = write!(s, "{{\"kind\":\"input\",\"branch\":{branch},\"dim\":{dim}}}");
        }
        NodeKind::Concat => {
            let _ = write!(s, "{{\"kind\":\"concat\",\"inputs\":[{inputs}]}}");
        }
        NodeKind::Dense(d) => {
            let act = match d.activation {
                Activation::Linear => "linear",
                Activation::Relu => "relu",
                Activation::Sigmoid => "sigmoid",
            };
            let _ = write!(
                s,
                "{{\"kind\":\"dense\",\"in\":{},\"out\":{},\"activation\":\"{act}\",\"inputs\":[{inputs}],\"w\":{},\"b\":{}}}",
                d.in_dim,
                d.out_dim,
                mat_json(&d.w),
                vec_json(&d.b)
            );
        }
        NodeKind::Lstm(l) => {
            let _ = write!(
                s,
                "{{\"kind\":\"lstm\",\"in\":{},\"out\":{},\"returns_sequence\":{},\"inputs\":[{inputs}]",
                l.in_dim, l.out_dim, l.returns_sequence
            );
            for (gate, name) in l.gates.iter().zip(["i", "f", "g", "o"]) {
                let _ = write!(
                    s,
                    ",\"w_{name}\":{},\"u_{name}\":{},\"b_{name}\":{}",
                    mat_json(&gate.w),
                    mat_json(&gate.u),
                    vec_json(&gate.b)
                );
            }
            s.push('}');
        }
    }
}

fn vec_json(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 24);
    s.push('[');
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&num(*x));
    }
    s.push(']');
    s
}

fn mat_json(m: &Mat) -> String {
    let mut s = String::with_capacity(m.data.len() * 24);
    s.push('[');
    for r in 0..m.rows {
        if r > 0 {
            s.push(',');
        }
        s.push_str(&vec_json(&m.data[r * m.cols..(r + 1) * m.cols]));
    }
    s.push(']');
    s
}

pub fn model_from_json(text: &str) -> Result<Model, NeuralError> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| NeuralError::CorruptFile(e.to_string()))?;
    let format = str_field(&root, "format")?;
    if format != MODEL_FORMAT {
        return Err(NeuralError::VersionMismatch {
            found: format.to_string(),
        });
    }
    let net = NetKind::parse(str_field(&root, "net")?)
        .ok_or_else(|| NeuralError::CorruptFile("unknown net kind".into()))?;
    let dropout_rate = f64_field(&root, "dropout_rate")?;
    let init_seed = root
        .get("init_seed")
        .and_then(Value::as_u64)
        .ok_or_else(|| NeuralError::CorruptFile("missing init_seed".into()))?;
    let io_scale = f64_field(&root, "io_scale")?;
    let nodes_json = root
        .get("nodes")
        .and_then(Value::as_array)
        .ok_or_else(|| NeuralError::CorruptFile("missing nodes".into()))?;
    let mut nodes = Vec::with_capacity(nodes_json.len());
    for nj in nodes_json {
        nodes.push(read_node(nj)?);
    }
    let model = Model {
        net,
        nodes,
        dropout_rate,
        init_seed,
        io_scale,
    };
    model
        .validate()
        .map_err(|e| NeuralError::CorruptFile(e.to_string()))?;
    Ok(model)
}

fn read_node(v: &Value) -> Result<Node, NeuralError> {
    let kind = str_field(v, "kind")?;
    let inputs: Vec<usize> = v
        .get("inputs")
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .map(|x| x.as_u64().map(|u| u as usize))
                .collect::<Option<Vec<_>>>()
        })
        .unwrap_or(Some(Vec::new()))
        .ok_or_else(|| NeuralError::CorruptFile("bad inputs array".into()))?;
    let node = match kind {
        "input" => Node {
            kind: NodeKind::Input {
                branch: usize_field(v, "branch")?,
                dim: usize_field(v, "dim")?,
            },
            inputs,
        },
        "concat" => Node {
            kind: NodeKind::Concat,
            inputs,
        },
        "dense" => {
            let activation = match str_field(v, "activation")? {
                "linear" => Activation::Linear,
                "relu" => Activation::Relu,
                "sigmoid" => Activation::Sigmoid,
                other => {
                    return Err(NeuralError::CorruptFile(format!(
                        "unknown activation '{other}'"
                    )))
                }
            };
            let in_dim = usize_field(v, "in")?;
            let out_dim = usize_field(v, "out")?;
            Node {
                kind: NodeKind::Dense(DenseLayer {
                    in_dim,
                    out_dim,
                    activation,
                    w: read_mat(v, "w", out_dim, in_dim)?,
                    b: read_vec(v, "b", out_dim)?,
                }),
                inputs,
            }
        }
        "lstm" => {
            let in_dim = usize_field(v, "in")?;
            let out_dim = usize_field(v, "out")?;
            let returns_sequence = v
                .get("returns_sequence")
                .and_then(Value::as_bool)
                .ok_or_else(|| NeuralError::CorruptFile("missing returns_sequence".into()))?;
            let gate = |name: &str| -> Result<Gate, NeuralError> {
                Ok(Gate {
                    w: read_mat(v, &format!("w_{name}"), out_dim, in_dim)?,
                    u: read_mat(v, &format!("u_{name}"), out_dim, out_dim)?,
                    b: read_vec(v, &format!("b_{name}"), out_dim)?,
                })
            };
            Node {
                kind: NodeKind::Lstm(LstmLayer {
                    in_dim,
                    out_dim,
                    returns_sequence,
                    gates: [gate("i")?, gate("f")?, gate("g")?, gate("o")?],
                }),
                inputs,
            }
        }
        other => {
            return Err(NeuralError::CorruptFile(format!(
                "unknown node kind '{other}'"
            )))
        }
    };
    Ok(node)
}

fn str_field<'a>(v: &'a Value, key: &str) -> Result<&'a str, NeuralError> {
    v.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| NeuralError::CorruptFile(format!("missing field '{key}'")))
}

fn f64_field(v: &Value, key: &str) -> Result<f64, NeuralError> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| NeuralError::CorruptFile(format!("missing field '{key}'")))
}

fn usize_field(v: &Value, key: &str) -> Result<usize, NeuralError> {
    v.get(key)
        .and_then(Value::as_u64)
        .map(|u| u as usize)
        .ok_or_else(|| NeuralError::CorruptFile(format!("missing field '{key}'")))
}

fn read_vec(v: &Value, key: &str, len: usize) -> Result<Vec<f64>, NeuralError> {
    let arr = v
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| NeuralError::CorruptFile(format!("missing field '{key}'")))?;
    if arr.len() != len {
        return Err(NeuralError::CorruptFile(format!(
            "field '{key}' has {} entries, expected {len}",
            arr.len()
        )));
    }
    arr.iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| NeuralError::CorruptFile(format!("non-numeric entry in '{key}'")))
        })
        .collect()
}

fn read_mat(v: &Value, key: &str, rows: usize, cols: usize) -> Result<Mat, NeuralError> {
    let arr = v
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| NeuralError::CorruptFile(format!("missing field '{key}'")))?;
    if arr.len() != rows {
        return Err(NeuralError::CorruptFile(format!(
            "matrix '{key}' has {} rows, expected {rows}",
            arr.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for row in arr {
        let row = row
            .as_array()
            .ok_or_else(|| NeuralError::CorruptFile(format!("bad row in '{key}'")))?;
        if row.len() != cols {
            return Err(NeuralError::CorruptFile(format!(
                "matrix '{key}' row has {} cols, expected {cols}",
                row.len()
            )));
        }
        for x in row {
            data.push(x.as_f64().ok_or_else(|| {
                NeuralError::CorruptFile(format!("non-numeric entry in '{key}'"))
            })?);
        }
    }
    Ok(Mat { rows, cols, data })
}
