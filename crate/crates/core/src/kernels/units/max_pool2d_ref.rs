// Reference max pooling over NHWC input; padded positions are skipped.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub channels: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub filter_h: usize,
    pub filter_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub act_min: f32,
    pub act_max: f32,
}

pub fn scratch_len(_g: &Geometry) -> usize {
    0
}

pub fn run(g: &Geometry, inputs: &[&[f32]], output: &mut [f32], _scratch: &mut [f32]) {
    let input = inputs[0];
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                for c in 0..g.channels {
                    let mut best = f32::MIN;
                    for fy in 0..g.filter_h {
                        let iy = (oy * g.stride_h + fy) as isize - g.pad_top as isize;
                        if iy < 0 || iy >= g.in_h as isize {
                            continue;
                        }
                        for fx in 0..g.filter_w {
                            let ix = (ox * g.stride_w + fx) as isize - g.pad_left as isize;
                            if ix < 0 || ix >= g.in_w as isize {
                                continue;
                            }
                            let v = input[((b * g.in_h + iy as usize) * g.in_w + ix as usize) * g.channels + c];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    output[((b * g.out_h + oy) * g.out_w + ox) * g.channels + c] = best.max(g.act_min).min(g.act_max);
                }
            }
        }
    }
}
