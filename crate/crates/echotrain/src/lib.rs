//! Weakly-supervised representation learning for ultrasound-style images.
//!
//! The pipeline pretrains an image encoder by semantic inpainting of
//! center-masked images, optionally conditioning the adversarial
//! discriminator on weak labels derived from DICOM metadata (transducer
//! geometry and study-description groups), and then evaluates the encoder
//! on downstream ordinal quality-score classification and liver/kidney
//! segmentation under freeze/unfreeze and low-data regimes.
//!
//! Module map:
//! - [`metadata`]: raw DICOM tag strings -> weak label vectors, manifests
//! - [`preprocessing`]: resize, z-score, center masking, compositing
//! - [`nn`]: minimal deterministic tensor layers with hand-derived backprop
//! - [`nets`]: encoder / inpainting decoder / projection discriminator /
//!   classifier head / segmentation UNet, plus checkpoints
//! - [`losses`]: reconstruction, adversarial, joint, weighted BCE, soft dice
//! - [`pretrain`]: joint adversarial pretraining loop
//! - [`downstream`]: fine-tuning, bootstrap/permutation evaluation, ablation grid
//! - [`synthdata`]: label-conditioned phantom corpus generator
//! - [`cli`]: command-line entry points

pub mod cli;
pub mod dataset;
pub mod downstream;
pub mod losses;
pub mod metadata;
pub mod nets;
pub mod nn;
pub mod preprocessing;
pub mod pretrain;
pub mod synthdata;
