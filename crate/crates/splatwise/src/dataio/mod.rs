//! Dataset ingestion, synthetic scenes, map serialization and image IO.

pub mod imageio;
pub mod ply;
pub mod posed;
pub mod synthetic;

pub use imageio::{load_image, save_png16, save_ppm8};
pub use ply::{load_map, property_names, read_map, save_map, write_map, PlyFormat};
pub use posed::{Frame, Intrinsics, PosedDataset, SYNC_WINDOW_S};
pub use synthetic::{gen_synthetic, generate, SyntheticConfig, SyntheticScene};
