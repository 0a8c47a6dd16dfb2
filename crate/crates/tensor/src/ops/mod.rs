mod conv;
mod elementwise;
pub(crate) mod matmul;
mod reduce;
mod resize;
mod roi_align;
mod shape;

pub use conv::Conv2dSpec;
pub use resize::resize_bilinear;
pub use roi_align::{roi_align, RoiAlignSpec, RoiBox};
