// Multithread-oriented 2-D convolution: optional im2col lowering followed by a
// row-partitioned GEMM with K-tiled accumulation. The filter is OHWI.
// Without im2col the input is used directly as the GEMM left-hand side, which
// is only valid for unit 1x1 filters with no padding.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub dilation_h: usize,
    pub dilation_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub act_min: f32,
    pub act_max: f32,
    pub has_bias: bool,
    pub im2col: bool,
    pub threads: usize,
    pub k_tile: usize,
}

pub fn supports(g: &Geometry) -> bool {
    g.im2col
        || (g.k_h == 1
            && g.k_w == 1
            && g.stride_h == 1
            && g.stride_w == 1
            && g.pad_top == 0
            && g.pad_left == 0
            && g.out_h == g.in_h
            && g.out_w == g.in_w)
}

pub fn scratch_len(g: &Geometry) -> usize {
    if g.im2col {
        g.out_h * g.out_w * g.k_h * g.k_w * g.in_c
    } else {
        0
    }
}

fn dot_tiled(a: &[f32], b: &[f32], k_tile: usize) -> f32 {
    let mut acc = 0.0f32;
    let mut start = 0;
    while start < a.len() {
        let end = if start + k_tile < a.len() {
            start + k_tile
        } else {
            a.len()
        };
        let mut partial = 0.0f32;
        for k in start..end {
            let product = a[k] * b[k];
            partial = partial + product;
        }
        acc = acc + partial;
        start = end;
    }
    acc
}

fn im2col(g: &Geometry, image: &[f32], patches: &mut [f32]) {
    let depth = g.k_h * g.k_w * g.in_c;
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &mut patches[(oy * g.out_w + ox) * depth..(oy * g.out_w + ox + 1) * depth];
            for kh in 0..g.k_h {
                let iy = (oy * g.stride_h + kh * g.dilation_h) as isize - g.pad_top as isize;
                for kw in 0..g.k_w {
                    let ix = (ox * g.stride_w + kw * g.dilation_w) as isize - g.pad_left as isize;
                    let dst = &mut row[(kh * g.k_w + kw) * g.in_c..(kh * g.k_w + kw + 1) * g.in_c];
                    if iy < 0 || iy >= g.in_h as isize || ix < 0 || ix >= g.in_w as isize {
                        for v in dst.iter_mut() {
                            *v = 0.0;
                        }
                    } else {
                        let src = (iy as usize * g.in_w + ix as usize) * g.in_c;
                        dst.copy_from_slice(&image[src..src + g.in_c]);
                    }
                }
            }
        }
    }
}

fn gemm_rows(g: &Geometry, lhs: &[f32], filter: &[f32], bias: &[f32], out: &mut [f32], first_row: usize) {
    let depth = g.k_h * g.k_w * g.in_c;
    let rows = out.len() / g.out_c;
    for r in 0..rows {
        let a = &lhs[(first_row + r) * depth..(first_row + r + 1) * depth];
        for oc in 0..g.out_c {
            let mut acc = dot_tiled(a, &filter[oc * depth..(oc + 1) * depth], g.k_tile);
            if g.has_bias {
                acc = acc + bias[oc];
            }
            out[r * g.out_c + oc] = acc.max(g.act_min).min(g.act_max);
        }
    }
}

pub fn run(g: &Geometry, inputs: &[&[f32]], output: &mut [f32], scratch: &mut [f32]) {
    let input = inputs[0];
    let filter = inputs[1];
    let bias: &[f32] = if g.has_bias { inputs[2] } else { &[] };
    let pixels_in = g.in_h * g.in_w * g.in_c;
    let pixels_out = g.out_h * g.out_w;
    for b in 0..g.batch {
        let image = &input[b * pixels_in..(b + 1) * pixels_in];
        let lhs: &[f32] = if g.im2col {
            im2col(g, image, scratch);
            &scratch[..pixels_out * g.k_h * g.k_w * g.in_c]
        } else {
            image
        };
        let out = &mut output[b * pixels_out * g.out_c..(b + 1) * pixels_out * g.out_c];
        let workers = if g.threads > 1 { g.threads } else { 1 };
        let rows_per = pixels_out.div_ceil(workers).max(1);
        if workers == 1 {
            gemm_rows(g, lhs, filter, bias, out, 0);
        } else {
            std::thread::scope(|s| {
                for (i, chunk) in out.chunks_mut(rows_per * g.out_c).enumerate() {
                    s.spawn(move || gemm_rows(g, lhs, filter, bias, chunk, i * rows_per));
                }
            });
        }
    }
}
