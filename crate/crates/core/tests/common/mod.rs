pub mod dense;
pub mod density;
