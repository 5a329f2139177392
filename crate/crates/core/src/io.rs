//! Text event files, binary PGM frames, boundary lists and voxel tensors.
//!
//! Events use the `t x y p` line convention with `t` in decimal seconds and
//! `p` in `{0, 1}`. Timestamps become integer microseconds at ingest.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{Event, EventStream, Frame, Polarity, VoxelGrid};

/// File name holding per-frame timestamps inside a frame directory.
pub const TIMESTAMPS_FILE: &str = "timestamps.txt";
pub const VOXEL_MAGIC: &[u8; 4] = b"VOXG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReadStats {
    pub lines: usize,
    pub events: usize,
    /// Events whose line came after a later event in canonical order.
    pub out_of_order: usize,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Converts decimal seconds to microseconds, rounding half to even.
///
/// Plain decimals are converted digit by digit so no binary rounding enters.
/// Exponent forms go through `f64`.
pub fn seconds_to_micros(text: &str) -> Option<u64> {
    if text.contains(['e', 'E']) {
        let secs: f64 = text.parse().ok()?;
        let us = (secs * 1e6).round_ties_even();
        return (us.is_finite() && us >= 0.0 && us <= u64::MAX as f64).then_some(us as u64);
    }
    let text = text.strip_prefix('+').unwrap_or(text);
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let head = &frac[..frac.len().min(6)];
    let micros: u64 = format!("{head:0<6}").parse().ok()?;
    let mut us = whole.checked_mul(1_000_000)?.checked_add(micros)?;
    let tail = frac.get(6..).unwrap_or("");
    let round_up = match tail.as_bytes().first() {
        Some(b'5'..=b'9') if tail[1..].bytes().any(|b| b != b'0') => true,
        Some(b'6'..=b'9') => true,
        Some(b'5') => us % 2 == 1,
        _ => false,
    };
    if round_up {
        us = us.checked_add(1)?;
    }
    Some(us)
}

fn parse_event_line(line: &str, width: usize, height: usize) -> std::result::Result<Event, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let [t, x, y, p] = fields[..] else {
        return Err(format!("expected 4 fields `t x y p`, found {}", fields.len()));
    };
    let t = seconds_to_micros(t).ok_or_else(|| format!("bad timestamp `{t}`"))?;
    let x: u32 = x.parse().map_err(|_| format!("bad x coordinate `{x}`"))?;
    let y: u32 = y.parse().map_err(|_| format!("bad y coordinate `{y}`"))?;
    let polarity = match p {
        "1" => Polarity::Pos,
        "0" => Polarity::Neg,
        _ => return Err(format!("polarity must be 0 or 1, found `{p}`")),
    };
    if x as usize >= width || y as usize >= height {
        return Err(format!("pixel ({x}, {y}) outside {width}x{height} sensor"));
    }
    Ok(Event::new(t, x, y, polarity))
}

/// Reads a `t x y p` event file for a sensor of the given size.
///
/// Blank lines are skipped. Out-of-order input is re-sorted canonically
/// (stable, so equal keys keep file order) and counted in the stats.
pub fn read_events_text(path: impl AsRef<Path>, width: usize, height: usize) -> Result<(EventStream, ReadStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stats = ReadStats::default();
    let mut events = Vec::new();
    let mut last_key = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        stats.lines = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let ev = parse_event_line(&line, width, height).map_err(|m| parse_err(path, i + 1, m))?;
        let key = ev.order_key();
        if last_key.is_some_and(|k| key < k) {
            stats.out_of_order += 1;
        } else {
            last_key = Some(key);
        }
        events.push(ev);
    }
    stats.events = events.len();
    Ok((EventStream::from_unordered(width, height, events)?, stats))
}

pub fn write_events_text(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for ev in stream.events() {
        let p = u8::from(ev.polarity == Polarity::Pos);
        writeln!(
            out,
            "{}.{:06} {} {} {p}",
            ev.t / 1_000_000,
            ev.t % 1_000_000,
            ev.x,
            ev.y
        )
        .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Splits a PGM header into tokens, skipping `#` comments. Returns the
/// tokens and the offset of the byte after the single whitespace that ends
/// the header.
fn pgm_header(bytes: &[u8]) -> Option<([String; 4], usize)> {
    let mut tokens: Vec<String> = Vec::with_capacity(4);
    let mut i = 0;
    while tokens.len() < 4 {
        match bytes.get(i)? {
            b'#' => {
                while *bytes.get(i)? != b'\n' {
                    i += 1;
                }
            }
            b if b.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while bytes.get(i).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
                    i += 1;
                }
                tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
            }
        }
    }
    if !bytes.get(i)?.is_ascii_whitespace() {
        return None;
    }
    Some((tokens.try_into().ok()?, i + 1))
}

/// Reads a binary (`P5`) PGM with maxval 255. Pixel `v` maps to `v / 255`;
/// the frame timestamp is 0.
pub fn read_frame_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<Frame<T>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let ([magic, w, h, maxval], offset) = pgm_header(&bytes).ok_or_else(|| format_err(path, "truncated PGM header"))?;
    if magic != "P5" {
        return Err(format_err(path, format!("expected P5 magic, found `{magic}`")));
    }
    let dim = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0);
    let (Some(width), Some(height)) = (dim(&w), dim(&h)) else {
        return Err(format_err(path, format!("bad dimensions `{w} {h}`")));
    };
    if maxval != "255" {
        return Err(format_err(path, format!("maxval must be 255, found `{maxval}`")));
    }
    let data = &bytes[offset..];
    if data.len() < width * height {
        return Err(format_err(
            path,
            format!("expected {} pixel bytes, found {}", width * height, data.len()),
        ));
    }
    let scale = T::lit(255.0);
    let pixels = data[..width * height]
        .iter()
        .map(|&b| T::from_count(b.into()) / scale)
        .collect();
    Frame::new(width, height, 0, pixels)
}

pub fn write_frame_pgm<T: Scalar>(frame: &Frame<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    buf.extend(
        frame
            .pixels()
            .iter()
            .map(|&v| (v.as_f64() * 255.0).round_ties_even().clamp(0.0, 255.0) as u8),
    );
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// One integer microsecond timestamp per line; blank lines are skipped.
pub fn read_boundaries(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad timestamp `{}`", l.trim())))
        })
        .collect()
}

pub fn write_boundaries(times: &[u64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text: String = times.iter().map(|t| format!("{t}\n")).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Path of the `t0 t1` sidecar written next to a voxel tensor.
pub fn voxel_sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".txt");
    PathBuf::from(name)
}

/// Writes `VOXG`, then `bins`, `height`, `width` as little-endian `u32`, then
/// the values as little-endian `f32` in bin-major, row-major order. The
/// interval goes to the sidecar as `t0 t1`.
pub fn write_voxel_grid<T: Scalar>(grid: &VoxelGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim =
        |v: usize| u32::try_from(v).map_err(|_| Error::invalid("voxel grid", format!("dimension {v} exceeds u32")));
    let mut buf = Vec::with_capacity(16 + 4 * grid.values().len());
    buf.extend_from_slice(VOXEL_MAGIC);
    for v in [grid.bins(), grid.height(), grid.width()] {
        buf.extend_from_slice(&dim(v)?.to_le_bytes());
    }
    for v in grid.values() {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    let sidecar = voxel_sidecar(path);
    fs::write(&sidecar, format!("{} {}\n", grid.t0(), grid.t1())).map_err(|e| Error::io(sidecar, e))
}

pub fn read_voxel_grid<T: Scalar>(path: impl AsRef<Path>) -> Result<VoxelGrid<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != VOXEL_MAGIC {
        return Err(format_err(path, "missing VOXG header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (bins, height, width) = (word(4), word(8), word(12));
    let body = &bytes[16..];
    if body.len() != 4 * bins * height * width {
        return Err(format_err(path, "payload size does not match header"));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()).into()))
        .collect();
    let sidecar = voxel_sidecar(path);
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let times: Vec<u64> = text.split_whitespace().filter_map(|s| s.parse().ok()).collect();
    let [t0, t1] = times[..] else {
        return Err(format_err(&sidecar, "expected `t0 t1`"));
    };
    VoxelGrid::new(bins, width, height, values, t0, t1)
}

/// Reads every `*.pgm` in `dir` in file-name order.
///
/// Timestamps come from `timestamps.txt` (one microsecond value per frame)
/// when present, otherwise frame `i` gets `i * fallback_interval`.
pub fn read_frame_dir<T: Scalar>(dir: impl AsRef<Path>, fallback_interval: u64) -> Result<Vec<Frame<T>>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|ext| ext == "pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format_err(dir, "no .pgm frames found"));
    }
    let stamps_path = dir.join(TIMESTAMPS_FILE);
    let stamps = if stamps_path.exists() {
        let stamps = read_boundaries(&stamps_path)?;
        if stamps.len() != paths.len() {
            return Err(format_err(
                &stamps_path,
                format!("{} timestamps for {} frames", stamps.len(), paths.len()),
            ));
        }
        stamps
    } else {
        (0..paths.len() as u64).map(|i| i * fallback_interval).collect()
    };
    paths
        .iter()
        .zip(stamps)
        .map(|(p, t)| Ok(read_frame_pgm::<T>(p)?.with_t(t)))
        .collect()
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

/// Writes `frame_%06d.pgm` files plus `timestamps.txt`, creating `dir`.
pub fn write_frame_dir<T: Scalar>(frames: &[Frame<T>], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        write_frame_pgm(f, dir.join(frame_file_name(i)))?;
    }
    let stamps: Vec<u64> = frames.iter().map(Frame::t).collect();
    write_boundaries(&stamps, dir.join(TIMESTAMPS_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    #[test]
    fn seconds_conversion() {
        assert_eq!(seconds_to_micros("0.000010"), Some(10));
        assert_eq!(seconds_to_micros("1"), Some(1_000_000));
        assert_eq!(seconds_to_micros(".5"), Some(500_000));
        assert_eq!(seconds_to_micros("12.3456785"), Some(12_345_678));
        assert_eq!(seconds_to_micros("12.3456775"), Some(12_345_678));
        assert_eq!(seconds_to_micros("12.34567750001"), Some(12_345_678));
        assert_eq!(seconds_to_micros("0.0000004999"), Some(0));
        assert_eq!(seconds_to_micros("1e-5"), Some(10));
        assert_eq!(seconds_to_micros("-1"), None);
        assert_eq!(seconds_to_micros("1.2.3"), None);
        assert_eq!(seconds_to_micros("."), None);
        assert_eq!(seconds_to_micros("abc"), None);
    }

    #[test]
    fn event_text_examples() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ev.txt");
        fs::write(&path, "").unwrap();
        assert!(read_events_text(&path, 4, 4).unwrap().0.is_empty());

        fs::write(&path, "0.000010 3 4 1\n").unwrap();
        let (s, _) = read_events_text(&path, 8, 8).unwrap();
        assert_eq!(s.events(), &[Event::new(10, 3, 4, Polarity::Pos)]);

        fs::write(&path, "0.1 300 4 1\n").unwrap();
        match read_events_text(&path, 240, 180) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("expected a line-1 parse error, got {other:?}"),
        }
        fs::write(&path, "0.1 1 1 1\n\n0.2 1 1 2\n").unwrap();
        assert!(matches!(
            read_events_text(&path, 4, 4),
            Err(Error::Parse { line: 3, .. })
        ));
        fs::write(&path, "0.1 1 1\n").unwrap();
        assert!(matches!(
            read_events_text(&path, 4, 4),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn out_of_order_input_is_sorted_and_counted() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ev.txt");
        fs::write(&path, "0.3 0 0 1\n0.1 1 0 0\n0.2 0 0 1\n0.4 0 0 0\n").unwrap();
        let (s, stats) = read_events_text(&path, 2, 1).unwrap();
        assert_eq!(stats.out_of_order, 2);
        assert_eq!(stats.events, 4);
        let ts: Vec<u64> = s.events().iter().map(|e| e.t).collect();
        assert_eq!(ts, [100_000, 200_000, 300_000, 400_000]);
    }

    #[test]
    fn write_format() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ev.txt");
        let s = EventStream::new(
            8,
            8,
            vec![
                Event::new(10, 3, 4, Polarity::Pos),
                Event::new(12_345_678, 0, 1, Polarity::Neg),
            ],
        )
        .unwrap();
        write_events_text(&s, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "0.000010 3 4 1\n12.345678 0 1 0\n");
        write_events_text(&EventStream::empty(2, 2), &path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 0);
    }

    #[test]
    fn pgm_examples() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend([0u8; 16]);
        fs::write(&path, &bytes).unwrap();
        let f: Frame<f64> = read_frame_pgm(&path).unwrap();
        assert!(f.pixels().iter().all(|&v| v == 0.0));

        fs::write(&path, b"P5 # comment\n# another\n2 1 255\n\x80\xff").unwrap();
        let f: Frame<f64> = read_frame_pgm(&path).unwrap();
        assert_eq!(f.pixels(), &[128.0 / 255.0, 1.0]);
        assert!((f.pixels()[0] - 0.50196).abs() < 1e-5);

        fs::write(&path, b"P2\n1 1\n255\n0").unwrap();
        assert!(matches!(read_frame_pgm::<f64>(&path), Err(Error::Format { .. })));
        fs::write(&path, b"P5\n1 1\n65535\n\0\0").unwrap();
        assert!(matches!(read_frame_pgm::<f64>(&path), Err(Error::Format { .. })));
        fs::write(&path, b"P5\n2 2\n255\n\0").unwrap();
        assert!(matches!(read_frame_pgm::<f64>(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn pgm_write_rounds_half_even() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let f = Frame::new(3, 1, 0, vec![0.5 / 255.0, 1.5 / 255.0, 1.0]).unwrap();
        write_frame_pgm(&f, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 2, 255]);
    }

    #[test]
    fn boundaries_and_frame_dir() {
        let dir = tempdir().unwrap();
        let b = dir.path().join("b.txt");
        write_boundaries(&[0, 10, 25], &b).unwrap();
        assert_eq!(read_boundaries(&b).unwrap(), [0, 10, 25]);
        fs::write(&b, "1\nx\n").unwrap();
        assert!(matches!(read_boundaries(&b), Err(Error::Parse { line: 2, .. })));

        let frames: Vec<Frame<f64>> = (0..3)
            .map(|i| Frame::filled(2, 2, 100 * i + 7, i as f64 / 4.0).unwrap())
            .collect();
        let fd = dir.path().join("frames");
        write_frame_dir(&frames, &fd).unwrap();
        let back: Vec<Frame<f64>> = read_frame_dir(&fd, 1).unwrap();
        assert_eq!(back.iter().map(Frame::t).collect::<Vec<_>>(), [7, 107, 207]);
        fs::remove_file(fd.join(TIMESTAMPS_FILE)).unwrap();
        let back: Vec<Frame<f64>> = read_frame_dir(&fd, 50).unwrap();
        assert_eq!(back.iter().map(Frame::t).collect::<Vec<_>>(), [0, 50, 100]);
        assert!(read_frame_dir::<f64>(dir.path().join("missing"), 1).is_err());
    }

    #[test]
    fn voxel_file_layout() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.voxg");
        let g = VoxelGrid::new(2, 3, 1, vec![0.0, 1.0, -0.5, 2.0, 0.25, 0.0], 5, 9).unwrap();
        write_voxel_grid::<f64>(&g, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"VOXG");
        assert_eq!(&bytes[4..16], &[2, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 6 * 4);
        assert_eq!(&bytes[20..24], &1.0f32.to_le_bytes());
        assert_eq!(fs::read_to_string(voxel_sidecar(&path)).unwrap(), "5 9\n");
        assert_eq!(read_voxel_grid::<f64>(&path).unwrap(), g);
    }

    fn canonical_stream() -> impl Strategy<Value = EventStream> {
        proptest::collection::vec((0u64..5_000_000_000, 0u32..7, 0u32..5, any::<bool>()), 0..100).prop_map(|raw| {
            let events = raw
                .into_iter()
                .map(|(t, x, y, p)| Event::new(t, x, y, if p { Polarity::Pos } else { Polarity::Neg }))
                .collect();
            EventStream::from_unordered(7, 5, events).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn events_round_trip_exactly(s in canonical_stream()) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("ev.txt");
            write_events_text(&s, &path).unwrap();
            let (back, stats) = read_events_text(&path, 7, 5).unwrap();
            prop_assert_eq!(stats.out_of_order, 0);
            prop_assert_eq!(back, s);
        }

        #[test]
        fn pgm_round_trip_within_half_step(w in 1usize..9, h in 1usize..9, seed in proptest::collection::vec(0.0..=1.0f64, 64)) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("f.pgm");
            let f = Frame::new(w, h, 0, seed[..w * h].to_vec()).unwrap();
            write_frame_pgm(&f, &path).unwrap();
            let back: Frame<f64> = read_frame_pgm(&path).unwrap();
            for (a, b) in f.pixels().iter().zip(back.pixels()) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-15);
            }
        }
    }
}
