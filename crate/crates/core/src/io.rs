//! `DTNS1` text tensor files.
//!
//! ```text
//! DTNS1
//! <order>
//! <dim0> <dim1> ...
//! <values, column-major, whitespace separated>
//! ```
//!
//! Values are written with 17 significant digits so they read back exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

const MAGIC: &str = "DTNS1";

pub fn to_dtns(t: &DenseTensor) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&t.order().to_string());
    out.push('\n');
    let dims: Vec<String> = t.dims().iter().map(usize::to_string).collect();
    out.push_str(&dims.join(" "));
    out.push('\n');
    for v in t.to_vec() {
        out.push_str(&format!("{v:.16e}\n"));
    }
    out
}

pub fn from_dtns(text: &str) -> Result<DenseTensor> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some(MAGIC) => {}
        other => return Err(Error::Format(format!("expected {MAGIC} header, found {other:?}"))),
    }
    let order: usize = lines
        .next()
        .ok_or_else(|| Error::Format("missing order line".into()))?
        .trim()
        .parse()
        .map_err(|e| Error::Format(format!("bad order: {e}")))?;
    let dims_line = lines.next().ok_or_else(|| Error::Format("missing dims line".into()))?;
    let dims = dims_line
        .split_whitespace()
        .map(|d| d.parse::<usize>().map_err(|e| Error::Format(format!("bad dim {d:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if dims.len() != order {
        return Err(Error::Format(format!("order {order} but {} dims", dims.len())));
    }
    if dims.contains(&0) {
        return Err(Error::Format("zero extent".into()));
    }
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("bad value {v:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let expected: usize = dims.iter().product();
    if values.len() != expected {
        return Err(Error::Format(format!("expected {expected} values, found {}", values.len())));
    }
    let mut it = values.into_iter();
    DenseTensor::from_fn(&dims, |_| it.next().unwrap_or(f64::NAN))
}

pub fn read_dtns(path: impl AsRef<Path>) -> Result<DenseTensor> {
    from_dtns(&fs::read_to_string(path)?)
}

pub fn write_dtns(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_dtns(t).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = SplitMix64::new(3);
        let t = DenseTensor::random(&[3, 1, 4], &mut rng).unwrap();
        let back = from_dtns(&to_dtns(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn accepts_arbitrary_whitespace() {
        let t = from_dtns("DTNS1\n2\n2 2\n1 2\n\n  3\t4.5e0\n").unwrap();
        assert_eq!(t.to_vec(), vec![1.0, 2.0, 3.0, 4.5]);
    }

    #[test]
    fn scalar_file() {
        let t = from_dtns("DTNS1\n0\n\n2.5\n").unwrap();
        assert_eq!(t.order(), 0);
        assert_eq!(t.to_vec(), vec![2.5]);
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(from_dtns("DTNS2\n1\n1\n0\n"), Err(Error::Format(_))));
        assert!(matches!(from_dtns("DTNS1\n2\n3\n"), Err(Error::Format(_))));
        assert!(matches!(from_dtns("DTNS1\n1\n3\n1 2\n"), Err(Error::Format(_))));
        assert!(matches!(from_dtns("DTNS1\n1\n"), Err(Error::Format(_))));
        assert!(matches!(from_dtns("DTNS1\n1\n2\n1 x\n"), Err(Error::Format(_))));
    }
}
