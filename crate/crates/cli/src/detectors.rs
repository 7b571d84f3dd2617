//! Detector descriptors: `synthetic:blob[:x1,y1,x2,y2]`, `subprocess:<command>`,
//! `tcp:<host:port>`.

use dclose::{make_blob_detector, BBox, BlobSpec, Detector, DetectorPool, ImageBuffer, SubprocessDetector, TcpDetector};

use crate::error::{CliError, CliResult};

/// Brightness above which a pixel counts as part of the blob when the
/// region has to be inferred.
const BLOB_LEVEL: f32 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum Descriptor {
    Blob(Option<BBox>),
    Subprocess(String),
    Tcp(String),
}

pub fn parse_descriptor(desc: &str) -> CliResult<Descriptor> {
    let unknown = || {
        CliError::Detector(format!(
            "unknown detector `{desc}`; expected synthetic:blob[:x1,y1,x2,y2], subprocess:<command> or tcp:<host:port>"
        ))
    };
    let (kind, rest) = desc.split_once(':').ok_or_else(unknown)?;
    match kind {
        "synthetic" => {
            let (name, arg) = match rest.split_once(':') {
                Some((n, a)) => (n, Some(a)),
                None => (rest, None),
            };
            if name != "blob" {
                return Err(unknown());
            }
            arg.map(parse_box).transpose().map(Descriptor::Blob)
        }
        "subprocess" if !rest.trim().is_empty() => Ok(Descriptor::Subprocess(rest.to_owned())),
        "tcp" if rest.contains(':') => Ok(Descriptor::Tcp(rest.to_owned())),
        _ => Err(unknown()),
    }
}

/// `x1,y1,x2,y2`.
pub fn parse_box(s: &str) -> CliResult<BBox> {
    let bad = |why: String| CliError::input(format!("bad box `{s}`: {why}"));
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
        .collect::<CliResult<_>>()?;
    let arr: [f64; 4] = v.try_into().map_err(|_| bad("expected four numbers".into()))?;
    BBox::try_from(arr).map_err(|e| bad(e.to_string()))
}

/// Bounding box of the pixels brighter than [`BLOB_LEVEL`].
pub fn infer_blob_region(img: &ImageBuffer) -> Option<BBox> {
    let (w, h) = img.dims();
    let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if img.brightness_at(y * w + x) >= BLOB_LEVEL {
                x1 = x1.min(x);
                y1 = y1.min(y);
                x2 = x2.max(x + 1);
                y2 = y2.max(y + 1);
            }
        }
    }
    if x1 == usize::MAX {
        return None;
    }
    BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64).ok()
}

/// Opens the detector named by `desc`. A blob detector without an explicit
/// region takes it from `clean`; external backends get `handles` instances.
pub fn open_detector(desc: &str, clean: Option<&ImageBuffer>, handles: usize) -> CliResult<Box<dyn Detector>> {
    match parse_descriptor(desc)? {
        Descriptor::Blob(region) => {
            let region = match region {
                Some(r) => r,
                None => clean.and_then(infer_blob_region).ok_or_else(|| {
                    CliError::Detector(format!("`{desc}`: no bright region found; give one as synthetic:blob:x1,y1,x2,y2"))
                })?,
            };
            let det = make_blob_detector(BlobSpec::for_region(region)).map_err(|e| CliError::Detector(e.to_string()))?;
            Ok(Box::new(det))
        }
        Descriptor::Subprocess(cmd) => pooled(handles, || SubprocessDetector::spawn_default(&cmd)),
        Descriptor::Tcp(addr) => pooled(handles, || TcpDetector::connect(&addr, dclose::DEFAULT_SCORE_FLOOR)),
    }
}

fn pooled<D: Detector + 'static>(
    handles: usize,
    open: impl Fn() -> dclose::Result<D>,
) -> CliResult<Box<dyn Detector>> {
    let open = || open().map_err(|e| CliError::Detector(e.to_string()));
    if handles <= 1 {
        return Ok(Box::new(open()?));
    }
    let all = (0..handles)
        .map(|_| open().map(|d| Box::new(d) as Box<dyn Detector>))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Box::new(DetectorPool::new(all).map_err(|e| CliError::Detector(e.to_string()))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptors() {
        assert_eq!(parse_descriptor("synthetic:blob").unwrap(), Descriptor::Blob(None));
        let b = BBox::new(1.0, 2.0, 3.0, 4.0).unwrap();
        assert_eq!(parse_descriptor("synthetic:blob:1,2,3,4").unwrap(), Descriptor::Blob(Some(b)));
        assert_eq!(
            parse_descriptor("subprocess:python bridge.py --x").unwrap(),
            Descriptor::Subprocess("python bridge.py --x".into())
        );
        assert_eq!(parse_descriptor("tcp:localhost:7000").unwrap(), Descriptor::Tcp("localhost:7000".into()));
        for bad in ["yolo", "synthetic:cat", "tcp:nohost", "subprocess:", "synthetic:blob:1,2,3"] {
            assert!(parse_descriptor(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_descriptor("magic:x").unwrap_err().exit_code(), 4);
    }

    #[test]
    fn region_inference() {
        let mut img = ImageBuffer::filled(20, 10, [0.1; 3]).unwrap();
        assert!(infer_blob_region(&img).is_none());
        for y in 2..5 {
            for x in 7..12 {
                img.set_pixel_rgb(y * 20 + x, [0.9; 3]);
            }
        }
        assert_eq!(infer_blob_region(&img), Some(BBox::new(7.0, 2.0, 12.0, 5.0).unwrap()));
    }
}
