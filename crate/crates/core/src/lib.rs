//! Desk-scale reproduction of an underwater trawl-camera action recognition
//! pipeline: a synthetic scene generator with plantable dataset biases, three
//! video classifiers (two-stream CNN, CNN-transformer hybrid, divided
//! space-time attention transformer), dense optical flow, Grad-CAM style
//! explanations, and an audit suite that surfaces shortcut learning.

pub mod audit;
pub mod dataio;
pub mod error;
pub mod explain;
pub mod flow;
pub mod imgproc;
pub mod label;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod par;
pub mod report;
pub mod rng;
pub mod scenegen;
pub mod training;

pub use error::{Error, Result};
pub use label::Label;
