// Reference 2-D convolution over NHWC input.
// inputs: [input, filter, bias?]; the filter is read in `filter_layout` order.

pub const LAYOUT_OHWI: u8 = 0;
pub const LAYOUT_HWIO: u8 = 1;

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
    pub filter_layout: u8,
}

pub fn scratch_len(_g: &Geometry) -> usize {
    0
}

fn filter_index(g: &Geometry, oc: usize, kh: usize, kw: usize, ic: usize) -> usize {
    if g.filter_layout == LAYOUT_HWIO {
        ((kh * g.k_w + kw) * g.in_c + ic) * g.out_c + oc
    } else {
        ((oc * g.k_h + kh) * g.k_w + kw) * g.in_c + ic
    }
}

pub fn run(g: &Geometry, inputs: &[&[f32]], output: &mut [f32], _scratch: &mut [f32]) {
    let input = inputs[0];
    let filter = inputs[1];
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                for oc in 0..g.out_c {
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
                            let base = ((b * g.in_h + iy as usize) * g.in_w + ix as usize) * g.in_c;
                            for ic in 0..g.in_c {
                                let product = input[base + ic] * filter[filter_index(g, oc, kh, kw, ic)];
                                acc = acc + product;
                            }
                        }
                    }
                    if g.has_bias {
                        acc = acc + inputs[2][oc];
                    }
                    output[((b * g.out_h + oy) * g.out_w + ox) * g.out_c + oc] = acc.max(g.act_min).min(g.act_max);
                }
            }
        }
    }
}
