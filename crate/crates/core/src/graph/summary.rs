//! Human-readable JSON view of a parsed bundle, used by `inspect`.

use serde_json::{json, Value};

use super::{infer_shapes, DataType, ModelBundle, OpId};

fn weight_stats(bundle: &ModelBundle, key: u32) -> Value {
    let Some(entry) = bundle.weights.get(key) else {
        return Value::Null;
    };
    let values: Vec<f64> = match entry.dtype {
        DataType::F32 => entry.to_f32().into_iter().map(f64::from).collect(),
        DataType::I32 => entry.to_i32().into_iter().map(f64::from).collect(),
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        json!({ "count": 0, "min": null, "max": null })
    } else {
        json!({ "count": values.len(), "min": min, "max": max })
    }
}

pub fn summarize(bundle: &ModelBundle) -> String {
    let graph = &bundle.graph;
    let shapes = infer_shapes(graph).unwrap_or_default();

    let operators: Vec<Value> = graph
        .operators
        .iter()
        .enumerate()
        .map(|(index, node)| {
            let mut v = json!({
                "index": index,
                "op_name": node.op.name(),
                "inputs": node.inputs,
                "outputs": node.outputs,
                "options": node.options,
            });
            match &node.op {
                OpId::Builtin(code) => v["opcode"] = json!(code),
                OpId::Custom(name) => v["custom_name"] = json!(name),
            }
            v
        })
        .collect();

    let tensors: Vec<Value> = graph
        .tensors
        .iter()
        .map(|t| {
            let mut v = json!({
                "id": t.id,
                "name": t.name,
                "dtype": t.dtype.to_string(),
                "shape": shapes.get(&t.id).unwrap_or(&t.shape),
            });
            if let Some(key) = t.weight_ref {
                v["weight_ref"] = json!(key);
                v["weights"] = weight_stats(bundle, key);
            }
            v
        })
        .collect();

    let total_weights: usize = bundle.weights.entries.values().map(|e| e.elements()).sum();
    let summary = json!({
        "version": graph.version,
        "inputs": graph.inputs,
        "outputs": graph.outputs,
        "operators": operators,
        "tensors": tensors,
        "weight_entries": bundle.weights.entries.len(),
        "weight_elements": total_weights,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{BuiltinOp, ComputationalGraph, OperatorNode, TensorSpec, WeightEntry, WeightStore};

    fn spec(id: usize, shape: &[usize], weight_ref: Option<u32>) -> TensorSpec {
        TensorSpec {
            id,
            name: format!("t{id}"),
            dtype: DataType::F32,
            shape: shape.to_vec(),
            weight_ref,
        }
    }

    #[test]
    fn conv_opcode_is_named() {
        let mut weights = WeightStore::default();
        weights.insert(0, WeightEntry::from_f32(vec![1, 1, 1, 1], &[0.0]));
        let bundle = ModelBundle {
            graph: ComputationalGraph {
                version: 1,
                tensors: vec![
                    spec(0, &[1, 2, 2, 1], None),
                    spec(1, &[1, 1, 1, 1], Some(0)),
                    spec(2, &[1, 2, 2, 1], None),
                ],
                operators: vec![OperatorNode::new(OpId::builtin(BuiltinOp::Conv2d), vec![0, 1], vec![2])
                    .with_option("stride_h", 1i64)
                    .with_option("stride_w", 1i64)
                    .with_option("dilation_h", 1i64)
                    .with_option("dilation_w", 1i64)
                    .with_option("padding", "VALID")
                    .with_option("activation", "NONE")],
                inputs: vec![0],
                outputs: vec![2],
            },
            weights,
        };
        let v: Value = serde_json::from_str(&summarize(&bundle)).unwrap();
        assert_eq!(v["operators"][0]["op_name"], "CONV_2D");
        assert_eq!(v["operators"][0]["opcode"], 3);
        let w = &v["tensors"][1]["weights"];
        assert_eq!(w["min"], 0.0);
        assert_eq!(w["max"], 0.0);
        assert_eq!(w["count"], 1);
    }

    #[test]
    fn empty_graph_lists_no_operators() {
        let bundle = ModelBundle {
            graph: ComputationalGraph {
                version: 1,
                tensors: vec![spec(0, &[4], None)],
                operators: vec![],
                inputs: vec![0],
                outputs: vec![0],
            },
            weights: WeightStore::default(),
        };
        let v: Value = serde_json::from_str(&summarize(&bundle)).unwrap();
        assert_eq!(v["operators"], json!([]));
    }
}
