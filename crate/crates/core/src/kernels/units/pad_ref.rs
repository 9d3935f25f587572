// Zero padding of a tensor of rank <= 4, normalised to rank 4 by prepending
// unit dimensions.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub in_dims: [usize; 4],
    pub before: [usize; 4],
    pub out_dims: [usize; 4],
}

pub fn scratch_len(_g: &Geometry) -> usize {
    0
}

pub fn run(g: &Geometry, inputs: &[&[f32]], output: &mut [f32], _scratch: &mut [f32]) {
    let input = inputs[0];
    for v in output.iter_mut() {
        *v = 0.0;
    }
    let [d0, d1, d2, d3] = g.in_dims;
    let [_, o1, o2, o3] = g.out_dims;
    for i0 in 0..d0 {
        for i1 in 0..d1 {
            for i2 in 0..d2 {
                let src = ((i0 * d1 + i1) * d2 + i2) * d3;
                let dst = (((i0 + g.before[0]) * o1 + i1 + g.before[1]) * o2 + i2 + g.before[2]) * o3 + g.before[3];
                output[dst..dst + d3].copy_from_slice(&input[src..src + d3]);
            }
        }
    }
}
