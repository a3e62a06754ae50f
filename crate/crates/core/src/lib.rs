pub mod algebra;
pub mod cli;
pub mod error;
pub mod io;
pub mod layers;
pub mod tensor;
pub mod train;
pub mod verify;
