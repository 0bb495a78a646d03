//! YUV4MPEG2 (Y4M) reader and writer.
//!
//! Only progressive 4:2:0 at 8 or 10 bits is supported. Frames are read one
//! at a time, so a reader never buffers more than a single frame payload.
//! 10-bit samples are stored as 2-byte little-endian containers.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use log::warn;
use thiserror::Error;

const SIGNATURE: &str = "YUV4MPEG2";
const FRAME_MARKER: &str = "FRAME";
const MAX_HEADER_LEN: usize = 4096;

#[derive(Debug, Error)]
pub enum Y4mError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unsupported y4m stream: {0}")]
    Unsupported(String),
    #[error("incomplete frame: expected {expected} payload bytes, got {got}")]
    IncompleteFrame { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Y4mError>;

/// Chroma layout tag. All supported layouts are 4:2:0; the 8-bit variants
/// differ only in chroma siting, which is carried through untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Chroma {
    #[default]
    C420,
    C420Jpeg,
    C420Paldv,
    C420Mpeg2,
    C420p10,
}

impl Chroma {
    pub fn bit_depth(self) -> u8 {
        match self {
            Chroma::C420p10 => 10,
            _ => 8,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Chroma::C420 => "420",
            Chroma::C420Jpeg => "420jpeg",
            Chroma::C420Paldv => "420paldv",
            Chroma::C420Mpeg2 => "420mpeg2",
            Chroma::C420p10 => "420p10",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "420" => Chroma::C420,
            "420jpeg" => Chroma::C420Jpeg,
            "420paldv" => Chroma::C420Paldv,
            "420mpeg2" => Chroma::C420Mpeg2,
            "420p10" => Chroma::C420p10,
            other => {
                return Err(Y4mError::Unsupported(format!(
                    "chroma layout C{other} (only 4:2:0 at 8/10 bit)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Interlacing {
    #[default]
    Progressive,
}

/// Stream parameters decoded from the signature line.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VideoHeader {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub chroma: Chroma,
    pub interlacing: Interlacing,
    pub pixel_aspect: (u32, u32),
    /// Tags this reader does not interpret, kept verbatim (without the
    /// leading space) so they survive a rewrite.
    pub extra_tags: Vec<String>,
}

impl VideoHeader {
    pub fn new(width: usize, height: usize, fps_num: u32, fps_den: u32, chroma: Chroma) -> Self {
        Self {
            width,
            height,
            fps_num,
            fps_den,
            chroma,
            interlacing: Interlacing::Progressive,
            pixel_aspect: (1, 1),
            extra_tags: Vec::new(),
        }
    }

    pub fn bit_depth(&self) -> u8 {
        self.chroma.bit_depth()
    }

    pub fn bytes_per_sample(&self) -> usize {
        if self.bit_depth() > 8 {
            2
        } else {
            1
        }
    }

    pub fn max_sample(&self) -> u16 {
        ((1u32 << self.bit_depth()) - 1) as u16
    }

    pub fn chroma_dims(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }

    pub fn samples_per_frame(&self) -> usize {
        let (cw, ch) = self.chroma_dims();
        self.width * self.height + 2 * cw * ch
    }

    pub fn frame_payload_bytes(&self) -> usize {
        self.samples_per_frame() * self.bytes_per_sample()
    }

    pub fn fps(&self) -> f64 {
        f64::from(self.fps_num) / f64::from(self.fps_den)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Y4mError::Validation(format!(
                "frame size {}x{} must be positive",
                self.width, self.height
            )));
        }
        if self.fps_num == 0 || self.fps_den == 0 {
            return Err(Y4mError::Validation(format!(
                "frame rate {}:{} must be positive",
                self.fps_num, self.fps_den
            )));
        }
        if !self.width.is_multiple_of(2) || !self.height.is_multiple_of(2) {
            return Err(Y4mError::Validation(format!(
                "4:2:0 requires even dimensions, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Decode a signature line (with or without the trailing newline).
    pub fn parse_line(line: &str) -> Result<Self> {
        let line = line.trim_end_matches('\n');
        let mut fields = line.split(' ');
        if fields.next() != Some(SIGNATURE) {
            return Err(Y4mError::Format("missing YUV4MPEG2 signature".into()));
        }

        let mut width = None;
        let mut height = None;
        let mut rate = None;
        let mut chroma = Chroma::default();
        let mut pixel_aspect = (0, 0);
        let mut extra_tags = Vec::new();

        for field in fields.filter(|f| !f.is_empty()) {
            let (tag, value) = field.split_at(1);
            match tag {
                "W" => width = Some(parse_num::<usize>(value, "W")?),
                "H" => height = Some(parse_num::<usize>(value, "H")?),
                "F" => rate = Some(parse_ratio(value, "F")?),
                "A" => pixel_aspect = parse_ratio(value, "A")?,
                "C" => chroma = Chroma::from_tag(value)?,
                "I" => match value {
                    "p" => {}
                    other => {
                        return Err(Y4mError::Unsupported(format!(
                            "interlacing mode I{other} (progressive only)"
                        )))
                    }
                },
                "X" => extra_tags.push(field.to_string()),
                _ => {
                    warn!("ignoring unknown y4m header tag {field:?}");
                    extra_tags.push(field.to_string());
                }
            }
        }

        let width = width.ok_or_else(|| Y4mError::Format("header lacks W tag".into()))?;
        let height = height.ok_or_else(|| Y4mError::Format("header lacks H tag".into()))?;
        let (fps_num, fps_den) =
            rate.ok_or_else(|| Y4mError::Format("header lacks F tag".into()))?;

        let header = VideoHeader {
            width,
            height,
            fps_num,
            fps_den,
            chroma,
            interlacing: Interlacing::Progressive,
            pixel_aspect,
            extra_tags,
        };
        header.validate()?;
        Ok(header)
    }
}

impl fmt::Display for VideoHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{SIGNATURE} W{} H{} F{}:{} Ip A{}:{} C{}",
            self.width,
            self.height,
            self.fps_num,
            self.fps_den,
            self.pixel_aspect.0,
            self.pixel_aspect.1,
            self.chroma.tag()
        )?;
        for tag in &self.extra_tags {
            write!(f, " {tag}")?;
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, tag: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Y4mError::Format(format!("bad {tag} value {value:?}")))
}

fn parse_ratio(value: &str, tag: &str) -> Result<(u32, u32)> {
    let (n, d) = value
        .split_once(':')
        .ok_or_else(|| Y4mError::Format(format!("bad {tag} ratio {value:?}")))?;
    Ok((parse_num(n, tag)?, parse_num(d, tag)?))
}

/// One sample plane, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Self {
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u16] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub y: Plane,
    pub u: Plane,
    pub v: Plane,
}

impl Frame {
    /// A frame with every sample set to the given luma/chroma values.
    pub fn flat(header: &VideoHeader, luma: u16, chroma: u16) -> Self {
        let (cw, ch) = header.chroma_dims();
        Self {
            y: Plane::filled(header.width, header.height, luma),
            u: Plane::filled(cw, ch, chroma),
            v: Plane::filled(cw, ch, chroma),
        }
    }

    pub fn check_conforms(&self, header: &VideoHeader) -> Result<()> {
        let (cw, ch) = header.chroma_dims();
        let expected = [
            ("Y", header.width, header.height),
            ("U", cw, ch),
            ("V", cw, ch),
        ];
        for ((name, w, h), plane) in expected.iter().zip([&self.y, &self.u, &self.v]) {
            if plane.width != *w || plane.height != *h || plane.data.len() != w * h {
                return Err(Y4mError::Validation(format!(
                    "{name} plane is {}x{} ({} samples), header needs {w}x{h}",
                    plane.width,
                    plane.height,
                    plane.data.len()
                )));
            }
        }
        let max = header.max_sample();
        for (name, plane) in [("Y", &self.y), ("U", &self.u), ("V", &self.v)] {
            if let Some(s) = plane.data.iter().find(|&&s| s > max) {
                return Err(Y4mError::Validation(format!(
                    "{name} sample {s} exceeds {}-bit range",
                    header.bit_depth()
                )));
            }
        }
        Ok(())
    }
}

/// Sequential frame reader over a Y4M byte stream.
pub struct Y4mReader<R> {
    inner: R,
    header: VideoHeader,
    payload: Vec<u8>,
    frames_read: u64,
    bytes_consumed: u64,
}

impl Y4mReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let line = read_line(&mut inner)?
            .ok_or_else(|| Y4mError::Format("empty stream".into()))?;
        let header = VideoHeader::parse_line(&line)?;
        let payload = vec![0; header.frame_payload_bytes()];
        Ok(Self {
            inner,
            header,
            payload,
            frames_read: 0,
            bytes_consumed: line.len() as u64,
        })
    }

    pub fn header(&self) -> &VideoHeader {
        &self.header
    }

    pub fn frames_read(&self) -> u64 {
        self.frames_read
    }

    /// Total bytes consumed so far: header line plus every marker line and
    /// payload.
    pub fn bytes_consumed(&self) -> u64 {
        self.bytes_consumed
    }

    /// Reads the next frame, or `None` at a clean end of stream.
    pub fn next_frame(&mut self) -> Result<Option<Frame>> {
        if !self.read_payload()? {
            return Ok(None);
        }
        let header = &self.header;
        let samples = decode_samples(&self.payload, header.bytes_per_sample());
        let luma = header.width * header.height;
        let (cw, ch) = header.chroma_dims();
        let csize = cw * ch;
        let mut samples = samples.into_iter();
        let y: Vec<u16> = samples.by_ref().take(luma).collect();
        let u: Vec<u16> = samples.by_ref().take(csize).collect();
        let v: Vec<u16> = samples.collect();
        let frame = Frame {
            y: Plane::new(header.width, header.height, y),
            u: Plane::new(cw, ch, u),
            v: Plane::new(cw, ch, v),
        };
        frame.check_conforms(header)?;
        Ok(Some(frame))
    }

    /// Advances past the next frame without decoding it.
    pub fn skip_frame(&mut self) -> Result<bool> {
        self.read_payload()
    }

    fn read_payload(&mut self) -> Result<bool> {
        let Some(marker) = read_line(&mut self.inner)? else {
            return Ok(false);
        };
        let rest = marker.trim_end_matches('\n');
        let is_marker = rest == FRAME_MARKER
            || rest
                .strip_prefix(FRAME_MARKER)
                .is_some_and(|r| r.starts_with(' '));
        if !is_marker {
            return Err(Y4mError::Format(format!(
                "expected FRAME marker before frame {}",
                self.frames_read
            )));
        }
        let expected = self.payload.len();
        let got = read_fully(&mut self.inner, &mut self.payload)?;
        if got != expected {
            return Err(Y4mError::IncompleteFrame { expected, got });
        }
        self.frames_read += 1;
        self.bytes_consumed += (marker.len() + expected) as u64;
        Ok(true)
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

fn decode_samples(bytes: &[u8], bytes_per_sample: usize) -> Vec<u16> {
    if bytes_per_sample == 1 {
        bytes.iter().map(|&b| u16::from(b)).collect()
    } else {
        bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect()
    }
}

/// Reads one `\n`-terminated line. Returns `None` on immediate EOF.
fn read_line<R: BufRead>(r: &mut R) -> Result<Option<String>> {
    let mut buf = Vec::new();
    let n = r.by_ref().take(MAX_HEADER_LEN as u64).read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() != Some(&b'\n') {
        return Err(Y4mError::Format(
            "unterminated or oversized header/marker line".into(),
        ));
    }
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| Y4mError::Format("non-UTF-8 header line".into()))
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Frame-at-a-time Y4M writer.
pub struct Y4mWriter<W: Write> {
    sink: W,
    header: VideoHeader,
    bytes_written: u64,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(mut sink: W, header: VideoHeader) -> Result<Self> {
        header.validate()?;
        let line = format!("{header}\n");
        sink.write_all(line.as_bytes())?;
        Ok(Self {
            sink,
            header,
            bytes_written: line.len() as u64,
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<()> {
        frame.check_conforms(&self.header)?;
        let marker = format!("{FRAME_MARKER}\n");
        let mut buf = Vec::with_capacity(marker.len() + self.header.frame_payload_bytes());
        buf.extend_from_slice(marker.as_bytes());
        let wide = self.header.bytes_per_sample() == 2;
        for plane in [&frame.y, &frame.u, &frame.v] {
            if wide {
                for s in &plane.data {
                    buf.extend_from_slice(&s.to_le_bytes());
                }
            } else {
                buf.extend(plane.data.iter().map(|&s| s as u8));
            }
        }
        self.sink.write_all(&buf)?;
        self.bytes_written += buf.len() as u64;
        Ok(())
    }

    pub fn bytes_written(&self) -> u64 {
        self.bytes_written
    }

    pub fn finish(mut self) -> Result<W> {
        self.sink.flush()?;
        Ok(self.sink)
    }
}

/// Writes a whole clip and returns the number of bytes emitted.
pub fn write_clip<'a, W: Write>(
    header: &VideoHeader,
    frames: impl IntoIterator<Item = &'a Frame>,
    sink: W,
) -> Result<u64> {
    let mut writer = Y4mWriter::new(sink, header.clone())?;
    for frame in frames {
        writer.write_frame(frame)?;
    }
    let n = writer.bytes_written();
    writer.finish()?;
    Ok(n)
}

/// Header and frame count of a clip on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipInfo {
    pub header: VideoHeader,
    pub frames: u64,
}

impl ClipInfo {
    pub fn duration_seconds(&self) -> f64 {
        self.frames as f64 / self.header.fps()
    }
}

pub fn probe(path: impl AsRef<Path>) -> Result<ClipInfo> {
    let mut reader = Y4mReader::open(path)?;
    while reader.skip_frame()? {}
    Ok(ClipInfo {
        header: reader.header().clone(),
        frames: reader.frames_read(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn read_all(bytes: &[u8]) -> Result<(VideoHeader, Vec<Frame>)> {
        let reader = Y4mReader::new(Cursor::new(bytes))?;
        let header = reader.header().clone();
        let frames = reader.collect::<Result<Vec<_>>>()?;
        Ok((header, frames))
    }

    #[test]
    fn parses_4k_10bit_header() {
        let h = VideoHeader::parse_line("YUV4MPEG2 W3840 H2160 F24:1 Ip A1:1 C420p10\n").unwrap();
        assert_eq!((h.width, h.height), (3840, 2160));
        assert_eq!((h.fps_num, h.fps_den), (24, 1));
        assert_eq!(h.chroma, Chroma::C420p10);
        assert_eq!(h.bit_depth(), 10);
        assert_eq!(h.pixel_aspect, (1, 1));
        assert_eq!(h.frame_payload_bytes(), 24_883_200);
    }

    #[test]
    fn absent_chroma_defaults_to_8bit_420() {
        let h = VideoHeader::parse_line("YUV4MPEG2 W2 H2 F25:1").unwrap();
        assert_eq!(h.chroma, Chroma::C420);
        assert_eq!(h.bit_depth(), 8);
        assert_eq!(h.frame_payload_bytes(), 6);
    }

    #[test]
    fn missing_signature_is_format_error() {
        let err = VideoHeader::parse_line("JUNK W2 H2").unwrap_err();
        assert!(matches!(err, Y4mError::Format(_)), "{err}");
    }

    #[test]
    fn odd_width_is_validation_error() {
        let err = VideoHeader::parse_line("YUV4MPEG2 W3 H2 F25:1 C420").unwrap_err();
        assert!(matches!(err, Y4mError::Validation(_)), "{err}");
    }

    #[test]
    fn other_chroma_and_interlacing_unsupported() {
        for line in [
            "YUV4MPEG2 W2 H2 F25:1 C444",
            "YUV4MPEG2 W2 H2 F25:1 C422p10",
            "YUV4MPEG2 W2 H2 F25:1 It",
        ] {
            let err = VideoHeader::parse_line(line).unwrap_err();
            assert!(matches!(err, Y4mError::Unsupported(_)), "{line}: {err}");
        }
    }

    #[test]
    fn unknown_tags_are_kept() {
        let h = VideoHeader::parse_line("YUV4MPEG2 W2 H2 F25:1 XYSCSS=420JPEG Zfoo").unwrap();
        assert_eq!(h.extra_tags, vec!["XYSCSS=420JPEG", "Zfoo"]);
        let again = VideoHeader::parse_line(&h.to_string()).unwrap();
        assert_eq!(again, h);
    }

    #[test]
    fn reads_tiny_8bit_frame() {
        let mut data = b"YUV4MPEG2 W2 H2 F25:1\nFRAME\n".to_vec();
        data.extend_from_slice(&[1, 2, 3, 4, 128, 129]);
        let (_, frames) = read_all(&data).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].y.data, vec![1, 2, 3, 4]);
        assert_eq!(frames[0].u.data, vec![128]);
        assert_eq!(frames[0].v.data, vec![129]);
    }

    #[test]
    fn frame_marker_parameters_are_accepted() {
        let mut data = b"YUV4MPEG2 W2 H2 F25:1\nFRAME Ixyz\n".to_vec();
        data.extend_from_slice(&[0; 6]);
        assert_eq!(read_all(&data).unwrap().1.len(), 1);
    }

    #[test]
    fn truncated_payload_is_incomplete_frame() {
        let mut data = b"YUV4MPEG2 W2 H2 F25:1\nFRAME\n".to_vec();
        data.extend_from_slice(&[1, 2, 3]);
        let err = read_all(&data).unwrap_err();
        assert!(
            matches!(err, Y4mError::IncompleteFrame { expected: 6, got: 3 }),
            "{err}"
        );
    }

    #[test]
    fn missing_marker_is_format_error() {
        let mut data = b"YUV4MPEG2 W2 H2 F25:1\nFRAMX\n".to_vec();
        data.extend_from_slice(&[0; 6]);
        assert!(matches!(read_all(&data).unwrap_err(), Y4mError::Format(_)));
    }

    #[test]
    fn ten_bit_out_of_range_sample_rejected() {
        let mut data = b"YUV4MPEG2 W2 H2 F25:1 C420p10\nFRAME\n".to_vec();
        for s in [0u16, 1024, 0, 0, 0, 0] {
            data.extend_from_slice(&s.to_le_bytes());
        }
        assert!(matches!(read_all(&data).unwrap_err(), Y4mError::Validation(_)));
    }

    #[test]
    fn empty_clip_round_trips() {
        let header = VideoHeader::new(8, 8, 24, 1, Chroma::C420);
        let mut buf = Vec::new();
        let n = write_clip(&header, &[], &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        let (h, frames) = read_all(&buf).unwrap();
        assert_eq!(h, header);
        assert!(frames.is_empty());
    }

    #[test]
    fn wrong_plane_size_rejected_on_write() {
        let header = VideoHeader::new(8, 8, 24, 1, Chroma::C420);
        let mut frame = Frame::flat(&header, 16, 128);
        frame.u = Plane::filled(3, 4, 128);
        let err = write_clip(&header, [&frame], Vec::new()).unwrap_err();
        assert!(matches!(err, Y4mError::Validation(_)));
    }

    fn arb_clip() -> impl Strategy<Value = (VideoHeader, Vec<Frame>)> {
        (1usize..6, 1usize..6, 0usize..4, any::<bool>()).prop_flat_map(|(hw, hh, n, ten)| {
            let chroma = if ten { Chroma::C420p10 } else { Chroma::C420 };
            let header = VideoHeader::new(hw * 2, hh * 2, 30000, 1001, chroma);
            let max = header.max_sample();
            let samples = header.samples_per_frame();
            proptest::collection::vec(proptest::collection::vec(0..=max, samples), n).prop_map(
                move |raw| {
                    let (cw, ch) = header.chroma_dims();
                    let luma = header.width * header.height;
                    let frames = raw
                        .into_iter()
                        .map(|s| Frame {
                            y: Plane::new(header.width, header.height, s[..luma].to_vec()),
                            u: Plane::new(cw, ch, s[luma..luma + cw * ch].to_vec()),
                            v: Plane::new(cw, ch, s[luma + cw * ch..].to_vec()),
                        })
                        .collect();
                    (header.clone(), frames)
                },
            )
        })
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity((header, frames) in arb_clip()) {
            let mut buf = Vec::new();
            let written = write_clip(&header, &frames, &mut buf).unwrap();
            prop_assert_eq!(written as usize, buf.len());

            let mut reader = Y4mReader::new(Cursor::new(&buf)).unwrap();
            prop_assert_eq!(reader.header(), &header);
            let mut back = Vec::new();
            while let Some(f) = reader.next_frame().unwrap() {
                back.push(f);
            }
            prop_assert_eq!(&back, &frames);
            // byte accounting: header line + per-frame marker + payload
            prop_assert_eq!(reader.bytes_consumed(), buf.len() as u64);
        }
    }
}
