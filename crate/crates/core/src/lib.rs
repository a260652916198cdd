pub mod error;
mod linalg;
pub mod lstfe;
pub mod paramfit;
mod persist;
pub mod pipeline;
pub mod realize;
pub mod reference;
pub mod sim;
pub mod systems;

pub use error::{Error, Result};
