// Multithread-oriented fully-connected layer with K-tiled accumulation.
// With `lhs_cacheable` the weight rows are packed contiguously into scratch
// once per call; otherwise they are gathered on the fly.

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
    pub threads: usize,
    pub k_tile: usize,
}

pub fn scratch_len(g: &Geometry) -> usize {
    if g.lhs_cacheable {
        g.units * g.depth
    } else {
        0
    }
}

fn weight(g: &Geometry, weights: &[f32], o: usize, k: usize) -> f32 {
    if g.weights_transposed {
        weights[k * g.units + o]
    } else {
        weights[o * g.depth + k]
    }
}

fn unit_value(g: &Geometry, row: &[f32], weights: &[f32], packed: &[f32], bias: &[f32], o: usize) -> f32 {
    let mut acc = 0.0f32;
    let mut start = 0;
    while start < g.depth {
        let end = if start + g.k_tile < g.depth {
            start + g.k_tile
        } else {
            g.depth
        };
        let mut partial = 0.0f32;
        for k in start..end {
            let w = if g.lhs_cacheable {
                packed[o * g.depth + k]
            } else {
                weight(g, weights, o, k)
            };
            let product = row[k] * w;
            partial = partial + product;
        }
        acc = acc + partial;
        start = end;
    }
    if g.has_bias {
        acc = acc + bias[o];
    }
    acc.max(g.act_min).min(g.act_max)
}

pub fn run(g: &Geometry, inputs: &[&[f32]], output: &mut [f32], scratch: &mut [f32]) {
    let input = inputs[0];
    let weights = inputs[1];
    let bias: &[f32] = if g.has_bias { inputs[2] } else { &[] };
    if g.lhs_cacheable {
        for o in 0..g.units {
            for k in 0..g.depth {
                scratch[o * g.depth + k] = weight(g, weights, o, k);
            }
        }
    }
    let packed: &[f32] = scratch;
    let workers = if g.threads > 1 { g.threads } else { 1 };
    let units_per = g.units.div_ceil(workers).max(1);
    for b in 0..g.batch {
        let row = &input[b * g.depth..(b + 1) * g.depth];
        let out = &mut output[b * g.units..(b + 1) * g.units];
        if workers == 1 {
            for o in 0..g.units {
                out[o] = unit_value(g, row, weights, packed, bias, o);
            }
        } else {
            std::thread::scope(|s| {
                for (i, chunk) in out.chunks_mut(units_per).enumerate() {
                    s.spawn(move || {
                        for (j, v) in chunk.iter_mut().enumerate() {
                            *v = unit_value(g, row, weights, packed, bias, i * units_per + j);
                        }
                    });
                }
            });
        }
    }
}
