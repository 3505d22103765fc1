pub mod fd;
pub mod linalg;
pub mod stats;
