use std::path::Path;

use crate::corpus::{read_merged, LABEL_MAX, LABEL_MIN};
use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 96;
pub const IMAGE_BYTES: usize = IMAGE_SIDE * IMAGE_SIDE * 3;

pub const MAGIC: &[u8; 4] = b"VASQ";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4;

/// One cropped face frame with its raw labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameRecord {
    pub id: String,
    /// `96×96×3` bytes, row-major HWC.
    pub image: Vec<u8>,
    pub valence: i16,
    pub arousal: i16,
}

/// Splits `"video/frame"` into its parts.
pub fn parse_frame_id(id: &str) -> Result<(&str, u64)> {
    let bad = || Error::FrameId(id.to_string());
    let (video, frame) = id.split_once('/').ok_or_else(bad)?;
    if video.is_empty() || frame.contains('/') || !frame.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let k: u64 = frame.parse().map_err(|_| bad())?;
    if k == 0 {
        return Err(bad());
    }
    Ok((video, k))
}

fn check_label(id: &str, v: i64) -> Result<i16> {
    if !(LABEL_MIN as i64..=LABEL_MAX as i64).contains(&v) {
        return Err(Error::LabelRange { frame_id: id.to_string(), value: v });
    }
    Ok(v as i16)
}

impl FrameRecord {
    pub fn new(id: impl Into<String>, image: Vec<u8>, valence: i64, arousal: i64) -> Result<Self> {
        let id = id.into();
        parse_frame_id(&id)?;
        if id.len() > u16::MAX as usize {
            return Err(Error::FrameId(id));
        }
        if image.len() != IMAGE_BYTES {
            return Err(Error::BadImage {
                frame_id: id,
                detail: format!("{} bytes, expected {IMAGE_BYTES}", image.len()),
            });
        }
        let valence = check_label(&id, valence)?;
        let arousal = check_label(&id, arousal)?;
        Ok(Self { id, image, valence, arousal })
    }

    pub fn video(&self) -> &str {
        parse_frame_id(&self.id).map(|p| p.0).unwrap_or("")
    }

    pub fn frame(&self) -> u64 {
        parse_frame_id(&self.id).map(|p| p.1).unwrap_or(0)
    }

    /// Bytes this record occupies in a container, CRC included.
    pub fn encoded_len(&self) -> usize {
        2 + self.id.len() + IMAGE_BYTES + 2 + 2 + 4
    }
}

/// Serializes records into a container:
/// `"VASQ" | u16 version | u32 count | records`, each record being
/// `u16 id_len | id | image | i16 valence | i16 arousal | u32 crc`, with the
/// CRC32 taken over the record bytes before it. Little-endian throughout.
pub fn encode_container(records: &[FrameRecord]) -> Result<Vec<u8>> {
    let count = u32::try_from(records.len()).map_err(|_| Error::Contract("too many records".into()))?;
    let total = HEADER_LEN + records.iter().map(FrameRecord::encoded_len).sum::<usize>();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for r in records {
        let start = out.len();
        out.extend_from_slice(&(r.id.len() as u16).to_le_bytes());
        out.extend_from_slice(r.id.as_bytes());
        out.extend_from_slice(&r.image);
        out.extend_from_slice(&r.valence.to_le_bytes());
        out.extend_from_slice(&r.arousal.to_le_bytes());
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt {
                path: self.origin.to_string(),
                detail: format!("truncated while reading {what} at byte {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_container(bytes: &[u8], origin: &str) -> Result<Vec<FrameRecord>> {
    let corrupt = |detail: String| Error::Corrupt { path: origin.to_string(), detail };
    let mut c = Cursor { bytes, pos: 0, origin };
    if c.take(4, "magic")? != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let count = c.u32("count")? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let start = c.pos;
        let id_len = c.u16("id length")? as usize;
        let id = std::str::from_utf8(c.take(id_len, "id")?).map_err(|_| corrupt(format!("record {i}: id is not UTF-8")))?;
        let image = c.take(IMAGE_BYTES, "image")?.to_vec();
        let valence = i16::from_le_bytes(c.take(2, "valence")?.try_into().unwrap());
        let arousal = i16::from_le_bytes(c.take(2, "arousal")?.try_into().unwrap());
        let expect = crc32fast::hash(&bytes[start..c.pos]);
        let crc = c.u32("crc")?;
        if crc != expect {
            return Err(corrupt(format!("record {i} ({id}): CRC mismatch")));
        }
        records.push(FrameRecord::new(id, image, valence as i64, arousal as i64)?);
    }
    if c.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(records)
}

pub fn write_container(path: &Path, records: &[FrameRecord]) -> Result<()> {
    let bytes = encode_container(records)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Vec<FrameRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_container(&bytes, &path.display().to_string())
}

/// Loads a `96×96` frame image as RGB bytes.
pub fn load_frame_image(path: &Path, frame_id: &str) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFrame { frame_id: frame_id.to_string(), path: path.to_path_buf() });
    }
    let img = image::open(path)
        .map_err(|e| Error::BadImage { frame_id: frame_id.to_string(), detail: e.to_string() })?
        .to_rgb8();
    if img.width() as usize != IMAGE_SIDE || img.height() as usize != IMAGE_SIDE {
        return Err(Error::BadImage {
            frame_id: frame_id.to_string(),
            detail: format!("{}×{}, expected {IMAGE_SIDE}×{IMAGE_SIDE}", img.width(), img.height()),
        });
    }
    Ok(img.into_raw())
}

/// Builds one video's records from a merged annotation file and a directory
/// of `<frame>.png` images, in ascending frame order, and writes them to
/// `out`. Returns the record count.
pub fn write_records(merged: &Path, frames_dir: &Path, video: &str, out: &Path) -> Result<usize> {
    let mut rows = read_merged(merged)?;
    rows.sort_by_key(|r| r.frame);
    if let Some(w) = rows.windows(2).find(|w| w[0].frame == w[1].frame) {
        return Err(Error::Contract(format!("{}: frame {} listed twice", merged.display(), w[0].frame)));
    }
    let records = rows
        .iter()
        .map(|r| {
            let id = format!("{video}/{}", r.frame);
            let image = load_frame_image(&frames_dir.join(format!("{}.png", r.frame)), &id)?;
            FrameRecord::new(id, image, r.valence as i64, r.arousal as i64)
        })
        .collect::<Result<Vec<_>>>()?;
    write_container(out, &records)?;
    Ok(records.len())
}
