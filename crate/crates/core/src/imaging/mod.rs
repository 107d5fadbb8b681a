pub mod augment;
pub mod canny;
pub mod degrade;
pub mod filters;
pub mod image;
pub mod phantom;
pub mod pgm;
pub mod resize;
pub mod tiles;

pub use augment::{random_angle, rotate, rotate_random};
pub use canny::{canny_edges, CannyParams};
pub use degrade::{simulate_realistic_lr, simulate_realistic_lr_with, RealisticLrConfig};
pub use image::{BinaryMask, EdgeMap, ImageGray, PairedSample};
pub use phantom::{generate_phantom, generate_phantom_with, Phantom, PhantomConfig};
pub use pgm::{read_pgm, write_pgm};
pub use resize::{bicubic_resize, degrade_to_synthetic_lr};
pub use tiles::{reassemble_patches, tile_patches};
