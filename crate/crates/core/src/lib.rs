pub mod aircraft;
pub mod governor;
pub mod linalg;
pub mod model;
pub mod oinf;
pub mod prob;
pub mod settings;
pub mod sim;
pub mod solver;
