pub mod atlas;
pub mod config;
pub mod geometry;
pub mod tracking;
pub mod dynamics;
pub mod quat;
pub mod scp;
pub mod transcription;
