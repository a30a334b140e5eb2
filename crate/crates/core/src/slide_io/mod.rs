//! Slide rasters, tiling with background exclusion, thumbnails, manifests
//! and synthetic slides.

pub mod manifest;
pub mod raster;
pub mod synth;
pub mod thumbnail;
pub mod tiling;

pub use manifest::{load_dataset, SlideManifest};
pub use raster::Raster;
pub use synth::{synth_slide, Region, SynthSpec, TissueKind};
pub use thumbnail::{thumbnail, THUMBNAIL_SIDE};
pub use tiling::{
    tile_slide, tissue_filter, tissue_fraction, tissue_patches, PatchEntry, PatchGrid, TissueFilter,
    DEFAULT_PATCH_SIZE,
};
