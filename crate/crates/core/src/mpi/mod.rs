//! Multiplane images: data model, plane placement, homography warping,
//! compositing and rendering.

mod camera;
mod composite;
mod homography;
pub mod io;
mod render;
mod types;
mod warp;

pub use camera::{CameraPose, Intrinsics};
pub use composite::{
    composite, composite_on, composite_vjp, compositing_weights, compositing_weights_on, compositing_weights_vjp,
    AlphaWeights,
};
pub use homography::{apply_homography, plane_homography};
pub use render::{render_mpi, render_planes, reproject_image, reprojection_mask, TargetView};
pub use types::{plane_depths, Mpi, PlaneColors, INFERENCE_PLANES, TRAIN_PLANES};
pub use warp::{warp_image, WarpPlan};
pub(crate) use warp::bilinear_taps;
