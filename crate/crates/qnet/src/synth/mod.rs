pub mod independent;
pub mod dependent;
