pub mod error;
pub mod state;
pub mod elements;
pub mod noise;
