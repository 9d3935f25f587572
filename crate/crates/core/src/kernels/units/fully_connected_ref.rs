// Reference fully-connected layer: out[b, o] = sum_k in[b, k] * w(o, k) + bias[o].
// Weights are [units, depth] when row-major, [depth, units] when transposed.
// `lhs_cacheable` is a caching hint with no numeric effect here.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub batch: usize,
    pub depth: usize,
    pub units: usize,
    pub act_min: f32,
    pub act_max: f32,
    pub has_bias: bool,
    pub weights_transposed: bool,
    pub lhs_cacheable: bool,
}

pub fn scratch_len(_g: &Geometry) -> usize {
    0
}

pub fn run(g: &Geometry, inputs: &[&[f32]], output: &mut [f32], _scratch: &mut [f32]) {
    let input = inputs[0];
    let weights = inputs[1];
    for b in 0..g.batch {
        for o in 0..g.units {
            let mut acc = 0.0f32;
            for k in 0..g.depth {
                let w = if g.weights_transposed {
                    weights[k * g.units + o]
                } else {
                    weights[o * g.depth + k]
                };
                let product = input[b * g.depth + k] * w;
                acc = acc + product;
            }
            if g.has_bias {
                acc = acc + inputs[2][o];
            }
            output[b * g.units + o] = acc.max(g.act_min).min(g.act_max);
        }
    }
}
