pub mod discriminator;
pub mod generator;
pub mod layers;

pub use discriminator::{compute_receptive_field, Discriminator, DiscriminatorLayers};
pub use generator::{Generator, GeneratorConfig, SCALE};
pub use layers::Ctx;
