// Reference softmax over the innermost axis: exp(beta * (x - max)) / sum.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub outer: usize,
    pub depth: usize,
    pub beta: f32,
}

pub fn scratch_len(_g: &Geometry) -> usize {
    0
}

pub fn run(g: &Geometry, inputs: &[&[f32]], output: &mut [f32], _scratch: &mut [f32]) {
    let input = inputs[0];
    for r in 0..g.outer {
        let row = &input[r * g.depth..(r + 1) * g.depth];
        let out = &mut output[r * g.depth..(r + 1) * g.depth];
        let mut max = row[0];
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let mut sum = 0.0f32;
        for i in 0..g.depth {
            let e = ((row[i] - max) * g.beta).exp();
            out[i] = e;
            sum = sum + e;
        }
        for v in out.iter_mut() {
            *v = *v / sum;
        }
    }
}
