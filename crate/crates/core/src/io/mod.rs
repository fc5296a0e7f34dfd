//! File formats: annotation JSON, LFV1 feature files, PGM/PPM/PNG rasters.

pub mod annotations;
pub mod features;
pub mod raster_codec;

pub use annotations::{
    load_annotations, parse_annotations, resolve, write_annotations, SampleRecord,
};
pub use features::{decode_features, encode_features, read_feature_file, write_feature_file};
pub use raster_codec::{decode_raster, encode_pgm, encode_ppm, read_raster, write_pgm};
