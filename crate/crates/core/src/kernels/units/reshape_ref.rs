// Reshape: a row-major copy; dimensions live only in the surrounding plan.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub len: usize,
}

pub fn scratch_len(_g: &Geometry) -> usize {
    0
}

pub fn run<T: Copy>(g: &Geometry, inputs: &[&[T]], output: &mut [T], _scratch: &mut [f32]) {
    output[..g.len].copy_from_slice(&inputs[0][..g.len]);
}
