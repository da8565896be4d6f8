//! On-disk formats: binary and CSV scan orders, JSON reports, PGM heatmaps.
//!
//! Binary scan order layout, all integers little-endian:
//!
//! ```text
//! "FSSC" | version: u16 | height: u32 | width: u32 | n_cells x u32
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::ser::Serialize;
use serde::Deserialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::grid::{GridDims, ScanOrder};
use crate::isotropy::IsotropyReport;
use crate::ssm::FootprintMap;

pub const MAGIC: &[u8; 4] = b"FSSC";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 4;
pub const CSV_HEADER: &str = "k,row,col";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderFormat {
    Bin,
    Csv,
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn encode_order(order: &ScanOrder) -> Result<Vec<u8>> {
    let dims = order.dims();
    let narrow = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
    };
    let h = narrow(dims.height(), "height")?;
    let w = narrow(dims.width(), "width")?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * order.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    for &i in order.as_slice() {
        out.extend_from_slice(&narrow(i, "index")?.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_order(bytes: &[u8]) -> Result<ScanOrder> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: expected at least {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"FSSC\"", &bytes[..4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize;
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let dims = GridDims::new(u32_at(6), u32_at(10))?;
    let expected = dims
        .n_cells()
        .checked_mul(4)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("grid {dims} is too large")))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "size mismatch for a {dims} grid: expected {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let order = (0..dims.n_cells()).map(|k| u32_at(HEADER_LEN + 4 * k)).collect();
    ScanOrder::new(dims, order)
}

pub fn encode_order_csv(order: &ScanOrder) -> Result<String> {
    let dims = order.dims();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for (k, &cell) in order.as_slice().iter().enumerate() {
        let (r, c) = dims.row_col(cell);
        w.serialize((k, r, c)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Parses the CSV twin. Without `dims` the grid is taken as the bounding box
/// of the listed cells.
pub fn decode_order_csv(text: &str, dims: Option<GridDims>) -> Result<ScanOrder> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER.split(',').collect::<Vec<_>>() {
        return Err(Error::Format(format!("expected header `{CSV_HEADER}`")));
    }
    let mut cells = Vec::new();
    for (line, rec) in rdr.deserialize::<(usize, usize, usize)>().enumerate() {
        let (k, r, c) = rec.map_err(|e| Error::Format(format!("line {}: {e}", line + 2)))?;
        if k != line {
            return Err(Error::Format(format!("line {}: step {k}, expected {line}", line + 2)));
        }
        cells.push((r, c));
    }
    let dims = match dims {
        Some(d) => d,
        None => {
            let h = cells.iter().map(|c| c.0).max();
            let w = cells.iter().map(|c| c.1).max();
            match (h, w) {
                (Some(h), Some(w)) => {
                    let grow = |v: usize| v.checked_add(1).ok_or_else(|| Error::Format(format!("coordinate {v} is too large")));
                    GridDims::new(grow(h)?, grow(w)?)?
                }
                _ => return Err(Error::Format("no steps".into())),
            }
        }
    };
    let mut order = Vec::with_capacity(cells.len());
    for (k, (r, c)) in cells.into_iter().enumerate() {
        if r >= dims.height() || c >= dims.width() {
            return Err(Error::Format(format!(
                "step {k}: cell ({r},{c}) is outside a {dims} grid"
            )));
        }
        order.push(dims.index(r, c));
    }
    ScanOrder::new(dims, order)
}

pub fn write_order(path: &Path, order: &ScanOrder, format: OrderFormat) -> Result<()> {
    let bytes = match format {
        OrderFormat::Bin => encode_order(order)?,
        OrderFormat::Csv => encode_order_csv(order)?.into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Reads either format, chosen by the leading magic bytes.
pub fn read_order(path: &Path, dims: Option<GridDims>) -> Result<ScanOrder> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(MAGIC) {
        let order = decode_order(&bytes)?;
        if let Some(d) = dims {
            if d != order.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "file holds a {} order, expected {d}",
                    order.dims()
                )));
            }
        }
        Ok(order)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Format("neither FSSC binary nor UTF-8 CSV".into()))?;
        decode_order_csv(&text, dims)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsRecord {
    pub height: usize,
    pub width: usize,
}

impl From<GridDims> for DimsRecord {
    fn from(d: GridDims) -> Self {
        Self {
            height: d.height(),
            width: d.width(),
        }
    }
}

/// Parameters echoed into a report. Entries that do not apply to the
/// strategy are `null`.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub lambda_c: Option<f64>,
    pub eta_f: Option<f64>,
    pub eta_c: Option<f64>,
    pub alpha: Option<f64>,
    pub phi_g_radians: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FootprintSummary {
    pub mu: f64,
    pub sigma: f64,
    pub probe: String,
    pub probe_cell: usize,
    pub n_seeds: usize,
    pub degenerate: bool,
}

impl From<&FootprintMap> for FootprintSummary {
    fn from(f: &FootprintMap) -> Self {
        Self {
            mu: f.mu,
            sigma: f.sigma,
            probe: f.probe.to_string(),
            probe_cell: f.probe_cell,
            n_seeds: f.n_seeds,
            degenerate: f.degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub tool_version: String,
    pub dims: DimsRecord,
    pub strategy: Option<String>,
    pub config: ReportConfig,
    pub metrics: Option<IsotropyReport>,
    pub footprint: Option<FootprintSummary>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl ReportFile {
    pub fn new(dims: GridDims) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            dims: dims.into(),
            strategy: None,
            config: ReportConfig::default(),
            metrics: None,
            footprint: None,
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        GridDims::new(self.dims.height, self.dims.width)?;
        let c = &self.config;
        let finite = [c.lambda_c, c.eta_f, c.eta_c, c.alpha, c.phi_g_radians]
            .into_iter()
            .flatten()
            .chain(self.timings_ms.values().copied())
            .chain(self.metrics.iter().flat_map(|m| {
                [Some(m.nn_variance), Some(m.nn_mean), m.delaunay_edge_variance, Some(m.step_mean), Some(m.step_max), Some(m.step_variance)]
                    .into_iter()
                    .flatten()
            }))
            .chain(self.footprint.iter().flat_map(|f| [f.mu, f.sigma]))
            .all(f64::is_finite);
        if !finite {
            return Err(Error::Format("report contains a non-finite number".into()));
        }
        Ok(())
    }
}

/// Several per-strategy reports on one grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareFile {
    pub tool_version: String,
    pub dims: DimsRecord,
    pub reports: Vec<ReportFile>,
}

impl CompareFile {
    pub fn validate(&self) -> Result<()> {
        GridDims::new(self.dims.height, self.dims.width)?;
        self.reports.iter().try_for_each(ReportFile::validate)
    }
}

/// Pretty-printed JSON with every float written in scientific notation with
/// 17 significant digits.
struct FixedFloat<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloat<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloat(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Format(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?).map_err(|e| io_err(path, e))
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let r: ReportFile = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    r.validate()?;
    Ok(r)
}

/// Binary PGM with values in `[0, 1]` mapped linearly onto `0..=255`.
pub fn encode_pgm(map: &FootprintMap) -> Vec<u8> {
    let d = map.dims;
    let mut out = format!("P5\n{} {}\n255\n", d.width(), d.height()).into_bytes();
    out.extend(map.values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn write_pgm(path: &Path, map: &FootprintMap) -> Result<()> {
    fs::write(path, encode_pgm(map)).map_err(|e| io_err(path, e))
}

/// Parses a binary PGM with maxval 255 into `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| Error::Format(format!("PGM: {m}"));
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let body = bytes.get(i + 1..).ok_or_else(|| bad("missing body"))?;
    if Some(body.len()) != w.checked_mul(h) {
        return Err(bad(&format!("expected {} pixels, got {}", w.saturating_mul(h), body.len())));
    }
    Ok((w, h, body.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{raster_scan, rect_spiral_scan};
    use crate::ssm::Probe;
    use proptest::prelude::*;

    #[test]
    fn binary_size_and_layout() {
        let d = GridDims::new(2, 3).unwrap();
        let b = encode_order(&rect_spiral_scan(d)).unwrap();
        assert_eq!(b.len(), 14 + 4 * 6);
        assert_eq!(&b[..4], b"FSSC");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..10], &[2, 0, 0, 0]);
        assert_eq!(&b[10..14], &[3, 0, 0, 0]);
        assert_eq!(decode_order(&b).unwrap(), rect_spiral_scan(d));
    }

    #[test]
    fn truncation_reports_byte_counts() {
        let d = GridDims::new(4, 4).unwrap();
        let b = encode_order(&raster_scan(d)).unwrap();
        let err = decode_order(&b[..b.len() - 3]).unwrap_err().to_string();
        assert!(err.contains("expected 78 bytes, got 75"), "{err}");
        let err = decode_order(&b[..5]).unwrap_err().to_string();
        assert!(err.contains("expected at least 14 bytes, got 5"), "{err}");
    }

    #[test]
    fn rejects_non_permutation() {
        let d = GridDims::new(2, 2).unwrap();
        let mut b = encode_order(&raster_scan(d)).unwrap();
        b[HEADER_LEN + 4] = 0;
        assert!(matches!(decode_order(&b), Err(Error::DuplicateIndex { index: 0, position: 1 })));
        b[HEADER_LEN + 4] = 9;
        assert!(matches!(decode_order(&b), Err(Error::IndexOutOfRange { index: 9, .. })));
    }

    #[test]
    fn csv_body_for_raster() {
        let d = GridDims::new(2, 3).unwrap();
        let text = encode_order_csv(&raster_scan(d)).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines, ["k,row,col", "0,0,0", "1,0,1", "2,0,2", "3,1,0", "4,1,1", "5,1,2"]);
        assert_eq!(decode_order_csv(&text, None).unwrap(), raster_scan(d));
        assert_eq!(decode_order_csv(&text, Some(d)).unwrap(), raster_scan(d));
        assert!(decode_order_csv(&text, Some(GridDims::new(3, 3).unwrap())).is_err());
    }

    #[test]
    fn csv_rejects_bad_rows() {
        assert!(decode_order_csv("k,row,col\n0,0,0\n2,0,1\n", None).is_err());
        assert!(decode_order_csv("k,row,col\n0,0,0\n1,0,0\n", None).is_err());
        assert!(decode_order_csv("a,b,c\n0,0,0\n", None).is_err());
        assert!(decode_order_csv("k,row,col\n", None).is_err());
        assert!(decode_order_csv("k,row,col\n0,x,0\n", None).is_err());
    }

    #[test]
    fn json_floats_have_17_digits() {
        let mut r = ReportFile::new(GridDims::new(4, 4).unwrap());
        r.config.lambda_c = Some(0.7);
        r.config.seed = Some(3);
        let s = to_json(&r).unwrap();
        assert!(s.contains("\"lambda_c\": 6.9999999999999996e-1"), "{s}");
        let back: ReportFile = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert_eq!(to_json(&back).unwrap(), s);
    }

    #[test]
    fn validate_catches_non_finite() {
        let mut r = ReportFile::new(GridDims::new(2, 2).unwrap());
        assert!(r.validate().is_ok());
        r.config.alpha = Some(f64::NAN);
        assert!(r.validate().is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let d = GridDims::new(2, 3).unwrap();
        let map = FootprintMap::from_raw(d, Probe::Center, 0, &[vec![0.0, 0.5, 1.0, 0.25, 2.0, 0.1]]).unwrap();
        let bytes = encode_pgm(&map);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        let (w, h, px) = decode_pgm(&bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(px[4], 255);
        assert_eq!(px[2], 128);
        assert_eq!(px[0], 0);
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let d = GridDims::new(h, w).unwrap();
            let mut v: Vec<usize> = (0..d.n_cells()).collect();
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let order = ScanOrder::new(d, v).unwrap();
            prop_assert_eq!(decode_order(&encode_order(&order).unwrap()).unwrap(), order.clone());
            let csv = encode_order_csv(&order).unwrap();
            prop_assert_eq!(decode_order_csv(&csv, Some(d)).unwrap(), order);
        }

        #[test]
        fn decoders_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_order(&bytes);
            let _ = decode_pgm(&bytes);
            if let Ok(s) = std::str::from_utf8(&bytes) {
                let _ = decode_order_csv(s, None);
            }
        }
    }
}
