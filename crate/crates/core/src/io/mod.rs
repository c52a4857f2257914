//! External formats: `.cube` LUTs, model files and 8-bit images.

pub mod cube;
pub mod image;
pub mod model;

pub use cube::{read_cube, write_cube};
pub use image::{read_image, write_image, ImageFormat};
pub use model::{read_model, read_model_with_meta, write_model, write_model_with_meta, MODEL_HEADER};
