//! Depth probability maps for response-based knowledge distillation of
//! monocular depth models.
//!
//! A teacher's depth map is turned into a per-pixel distribution over a
//! uniform grid of depth bins ([`codec::encode`]). A student that outputs
//! such a map is trained against it with a weighted sum of a per-pixel KL
//! divergence and an SSIM loss on the decoded depth ([`losses`]). The crate
//! also provides the standard depth metrics ([`metrics`]), a single-image
//! distillation loop with Adam and a one-cycle schedule ([`distill`]), and
//! the file formats used by the `dpm` command-line tool ([`io`]).
//!
//! All arithmetic is `f64`. Per-pixel work runs on the rayon pool; every
//! reduction is serial in row-major order, so results do not depend on the
//! number of threads.

pub mod codec;
pub mod distill;
mod error;
pub mod io;
pub mod losses;
pub mod metrics;
mod types;

pub use codec::{decode, decode_pixel, encode, encode_pixel, encode_with_stats, gaussian_bin_mass, EncodeStats};
pub use distill::{distill_run, sweep, DistillConfig, RunHistory, SceneKind, SweepAxis};
pub use error::{Error, Result};
pub use losses::{combined_loss, LogitField, LossBreakdown};
pub use metrics::{eigen_metrics, EvalPolicy, MetricsReport};
pub use types::{BinPartition, DepthMap, Dpm, LossConfig, NormMode, SsimParams, SIMPLEX_TOLERANCE};
