//! Residual attention network and per-class soft attention maps.

mod archive;
mod maps;
mod network;

pub use archive::{export_map_pngs, load_maps, load_network, save_maps, save_network, MapArchive, MAP_ARCHIVE_VERSION};
pub use maps::{class_maps, concentration, extract_maps, finalize_map, select_representative, stack, AttentionMap};
pub use network::{AttentionNetwork, AttentionNetworkSpec, ForwardVars, MapSource, ModuleVars};
