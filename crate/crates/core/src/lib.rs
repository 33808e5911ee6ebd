//! Activity recognition by network transmission.
//!
//! A scene is cut into a grid of patches. Each patch is a node of a
//! transmission network and a person walking through the scene is a package
//! sent along the patches they visit. Trained direct-transmission energies
//! make common routes cheap, so the energy spent by a trajectory compared
//! with the cheapest route to the same patch tells normal from abnormal
//! behaviour. Person pairs and crowd flows are handled by relative networks
//! centred on one person or on the image centre.
//!
//! ```
//! use ntb::grid::{route_from_trajectory, Sample, SceneConfig, Trajectory};
//!
//! let scene = SceneConfig::new(640, 480, 48);
//! let walk = Trajectory::new(
//!     1,
//!     (0..40).map(|f| Sample { frame: f, x: 10.0 + 5.0 * f as f64, y: 100.0 }).collect(),
//! )
//! .unwrap();
//! let route = route_from_trajectory(&walk, &scene).unwrap();
//! assert_eq!(route.start(), 28);
//! assert_eq!(route.len(), 5);
//! ```
//!
//! The guide in `book/` walks through the whole pipeline.

pub mod classifier;
pub mod detect;
pub mod error;
pub mod eval;
pub mod grid;
pub mod group;
pub mod io;
pub mod network;
pub mod routemap;
pub mod synth;
pub mod training;

pub use detect::{detect, DetectionRules, DetectionVerdict, Verdict};
pub use error::{NtbError, Result};
pub use grid::{route_from_trajectory, PatchRoute, SceneConfig, Trajectory};
pub use network::TransmissionNetwork;
pub use routemap::{sbip, RouteMap};
pub use training::{
    train, AbnormalityType, Label, TrainedAbnormalityModel, TrainingConfig, TrainingSample,
};

// Book chapters run as doc-tests so their snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/group.md")]
    mod group {}
    #[doc = include_str!("../../../book/src/crowd.md")]
    mod crowd {}
    #[doc = include_str!("../../../book/src/eval.md")]
    mod eval {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
