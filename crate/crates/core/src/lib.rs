//! Deterministic in-town ambulance dispatch simulation.
//!
//! * [`network`]: road graph, travel-time routing and map matching.
//! * [`signal`]: signal controllers with green extension and preemption
//!   for detected ambulances.
//! * [`dispatch`]: nearest-free-unit selection, hospital choice and the
//!   ambulance lifecycle.
//! * [`recognition`]: edge-map chamfer matching that recognises the
//!   ambulance marking in grey-scale frames.
//! * [`sim`]: fixed-step simulation tying the above together.
//! * [`scenario`]: scenario documents and their validation.

pub mod dispatch;
pub mod ids;
pub mod network;
pub mod recognition;
pub mod scenario;
pub mod signal;
pub mod sim;

pub use ids::*;
