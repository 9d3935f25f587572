//! Computing-unit sources. Each file is self-contained (std only) so that the
//! code generator can embed it verbatim in emitted programs.

pub mod add_i32_ref;
pub mod add_ref;
pub mod average_pool2d_ref;
pub mod concatenation_ref;
pub mod conv2d_ref;
pub mod conv2d_tiled;
pub mod depthwise_conv2d_ref;
pub mod fully_connected_ref;
pub mod fully_connected_tiled;
pub mod max_pool2d_ref;
pub mod pad_ref;
pub mod relu_ref;
pub mod reshape_ref;
pub mod scale_shift_ref;
pub mod softmax_ref;
