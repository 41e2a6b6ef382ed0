//! Persistent clip store and the train/val/test split protocols.

mod split;
mod store;

pub use split::{make_split, Split, SplitProtocol, SplitSpec};
pub use store::{load_clips, manifest_path, save_clips, ClipLoader, Manifest, NativeStore, STORE_VERSION};
