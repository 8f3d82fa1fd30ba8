pub mod angular;
pub mod basis;
pub mod linalg;
pub mod model;
pub mod engine;
pub mod metrics;
pub mod calibrate;
pub mod noise;
