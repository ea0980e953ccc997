//! Closed-form building blocks of a center-based monocular 3D object
//! detector, minus the network: depth discretization codecs, joint
//! classification/regression depth losses, 2D-to-3D center geometry,
//! reference-area target encoding, and the KITTI-style BEV/3D evaluation
//! protocol. Everything here is verifiable at desk scale.
//!
//! Module map:
//! - [`kitti`] — bit-exact label / calibration / prediction / split I/O;
//! - [`geometry`] — projection, back-projection, cuboids, amodal boxes,
//!   the 2D-center-to-3D-center offset;
//! - [`depth`] — SID/LID discretization with residuals, the exponential
//!   output transform, the two-bin joint depth codec;
//! - [`loss`] — ordinal, smooth-L1, two-bin, and focal losses with analytic
//!   gradients;
//! - [`target`] — ground-truth target encoding and raw-heads decoding;
//! - [`eval`] — difficulty tiers, 2D/BEV/3D IoU, greedy matching, 11-point
//!   average precision;
//! - [`synth`] — seeded scene synthesis, prediction perturbation, and the
//!   independent Monte-Carlo / reference-AP oracles.
//!
//! The numeric core is generic over the scalar type via [`float::Real`]
//! (`f32` or `f64`); the aliases below fix `f64` for the dataset-facing
//! layers.

pub mod depth;
pub mod error;
pub mod eval;
pub mod float;
pub mod geometry;
pub mod grid;
pub mod kitti;
pub mod loss;
pub mod synth;
pub mod target;

pub use error::{Error, Result};
pub use float::Real;

/// `f64` instantiations used by the I/O, evaluation, and synthesis layers.
pub type Point2d = geometry::Point2<f64>;
pub type Point3d = geometry::Point3<f64>;
pub type Dim3d = geometry::Dim3<f64>;
pub type BBox2d = geometry::BBox2<f64>;
pub type Cuboid3d = geometry::Cuboid3<f64>;
pub type Calibration = geometry::CameraCalibration<f64>;
pub type DiscretizationConfigd = depth::DiscretizationConfig<f64>;
pub type DepJointConfigd = depth::DepJointConfig<f64>;
