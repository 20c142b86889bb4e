pub mod gaussian;
pub mod tofu;
