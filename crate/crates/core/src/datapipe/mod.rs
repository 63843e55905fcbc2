//! Sequence-record container and the windowed, filtered, shuffled batch
//! loader.

mod loader;
mod record;
mod scale;

pub use loader::{Dataset, Loader, LoaderConfig, RepeatStream, SequenceBatch};
pub use record::{
    decode_container, encode_container, load_frame_image, parse_frame_id, read_container, write_container,
    write_records, FrameRecord, HEADER_LEN, IMAGE_BYTES, IMAGE_SIDE, MAGIC, VERSION,
};
pub use scale::{check_consecutive, parse_and_scale, scale_label, scale_pixel, unscale_pixel, ScaledFrame};
