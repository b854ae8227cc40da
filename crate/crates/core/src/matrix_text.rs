//! Plain-text matrix files: a first line holding `d`, then `d` lines of `d`
//! whitespace-separated decimal values.

use nalgebra::DMatrix;

use crate::spd::SpdError;

pub fn parse_matrix_text(text: &str) -> Result<DMatrix<f64>, SpdError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| SpdError::Parse("empty input".into()))?;
    let d: usize = header
        .parse()
        .map_err(|_| SpdError::Parse(format!("bad dimension line {header:?}")))?;
    if d == 0 {
        return Err(SpdError::Parse("dimension must be positive".into()));
    }
    let mut entries = Vec::with_capacity(d * d);
    for row in 0..d {
        let line = lines
            .next()
            .ok_or_else(|| SpdError::Parse(format!("missing row {row}")))?;
        let before = entries.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| SpdError::Parse(format!("bad value {tok:?} in row {row}")))?;
            entries.push(v);
        }
        if entries.len() - before != d {
            return Err(SpdError::Parse(format!(
                "row {row} has {} values, expected {d}",
                entries.len() - before
            )));
        }
    }
    if let Some(extra) = lines.next() {
        return Err(SpdError::Parse(format!("trailing content {extra:?}")));
    }
    Ok(DMatrix::from_row_slice(d, d, &entries))
}

/// Values are written in shortest round-trip form, so parsing the output
/// restores every entry bit-exactly.
pub fn format_matrix_text(m: &DMatrix<f64>) -> String {
    let mut out = format!("{}\n", m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
