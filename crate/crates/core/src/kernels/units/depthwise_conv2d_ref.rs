// Reference depthwise convolution. Filter layout [1, k_h, k_w, in_c * multiplier].

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub depth_multiplier: usize,
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
}

pub fn scratch_len(_g: &Geometry) -> usize {
    0
}

pub fn run(g: &Geometry, inputs: &[&[f32]], output: &mut [f32], _scratch: &mut [f32]) {
    let input = inputs[0];
    let filter = inputs[1];
    let out_c = g.in_c * g.depth_multiplier;
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                for ic in 0..g.in_c {
                    for m in 0..g.depth_multiplier {
                        let oc = ic * g.depth_multiplier + m;
                        let mut acc = 0.0f32;
                        for kh in 0..g.k_h {
                            let iy = (oy * g.stride_h + kh * g.dilation_h) as isize - g.pad_top as isize;
                            if iy < 0 || iy >= g.in_h as isize {
                                continue;
                            }
                            for kw in 0..g.k_w {
                                let ix = (ox * g.stride_w + kw * g.dilation_w) as isize - g.pad_left as isize;
                                if ix < 0 || ix >= g.in_w as isize {
                                    continue;
                                }
                                let x = input[((b * g.in_h + iy as usize) * g.in_w + ix as usize) * g.in_c + ic];
                                let w = filter[(kh * g.k_w + kw) * out_c + oc];
                                let product = x * w;
                                acc = acc + product;
                            }
                        }
                        if g.has_bias {
                            acc = acc + inputs[2][oc];
                        }
                        output[((b * g.out_h + oy) * g.out_w + ox) * out_c + oc] = acc.max(g.act_min).min(g.act_max);
                    }
                }
            }
        }
    }
}
