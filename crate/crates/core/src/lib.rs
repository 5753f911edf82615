pub mod numlin;
pub mod chain;
pub mod gridworld;
pub mod spectral;
pub mod gdo;
pub mod bounds;
