//! Joint transmit and reflect beamforming for SWIPT downlinks aided by an
//! active intelligent reflecting surface.

pub mod ao;
pub mod benchmarks;
pub mod channel;
pub mod conic;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod sdr;
pub mod sumpower;
pub mod sumrate;
pub mod system_model;
pub mod verify;
pub mod wpt;

pub use error::{Error, Result};
