//! The joint network.
//!
//! A four-stage convolutional backbone feeds three consumers:
//! the fixation decoder (map `F`), the camouflage decoder (map `S`), which
//! sees backbone features gated by `1 - F`, and a two-stage ranking branch
//! (feature pyramid, region proposals, ROIAlign, rank/box head, mask head).

mod attention;
mod backbone;
pub mod boxes;
pub mod checkpoint;
mod config;
mod decoder;
mod instance;
mod layers;
mod network;
mod pyramid;
mod roi;
mod rpn;
pub mod targets;

pub use attention::{channel_attention, dual_residual_attention, position_attention, reverse_attention, reverse_gate};
pub use backbone::{extract_features, StageFeatures};
pub use boxes::{iou, nms, BBox, BoxCoder};
pub use config::{AnchorConfig, ModelConfig, ReverseTarget, RoiConfig, RpnConfig};
pub use decoder::{decode, decode_logits, dense_aspp, project, Head, ProjectedFeatures};
pub use instance::{argmax4, paste_mask, softmax4, InstanceProposal};
pub use network::{CamRankNet, Forward, Prediction};
pub use pyramid::{build_pyramid, PyramidFeatures};
pub use roi::{box_head, mask_head, pool_rois, NUM_RANKS};
pub use rpn::{generate_proposals, level_anchors, rpn_forward, Proposal, RpnLevel, RPN_CODER};
pub use targets::{match_proposals, GtInstance, ProposalMatch, TrainTargets};
