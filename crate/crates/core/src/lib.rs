//! Multiplication-free, single-spike temporal learning for feedforward
//! spiking networks.
//!
//! Inputs are latency coded, hidden and output layers are non-leaky
//! integrate-and-fire neurons that fire at most once, and the class is the
//! earliest output spike. Learning converts output errors into signed
//! backward spikes and propagates them with the same IF machinery, so the
//! only multiplication left is one `delta × learning rate` product per
//! neuron. Everything runs either in `f64` or in a bit-exact fixed-point
//! mode matching a 12-bit-weight FPGA datapath, and [`hwmodel`] provides
//! the matching cycle/throughput model and BRAM weight images.

pub mod audit;
pub mod backward;
pub mod datasets;
pub mod encoding;
pub mod error;
pub mod fixedpoint;
pub mod forward;
pub mod hwmodel;
pub mod model_io;
pub mod network;
pub mod training;

pub use encoding::{EncodingConfig, SpikeTime};
pub use error::{Error, Result};
pub use fixedpoint::{FixedPoint, QFormat, Rounding};
pub use network::{AnyNetwork, Fixed, FixedNetwork, Network, NumericMode, Real, RealNetwork};
