//! CSV/JSON serialization for fields, kernel tables, and trajectories. Values
//! round-trip at full double precision in decimal form (17 significant digits).

use crate::field::EquivariantField;
use crate::grid::{Parity, RadialGrid};
use crate::{CssError, Result};
use num_complex::Complex64;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

/// Grid metadata carried by the JSON header next to a field CSV.
#[derive(serde::Serialize, serde::Deserialize)]
pub struct FieldHeader {
    pub schema_version: u32,
    pub m: usize,
    pub parity: Parity,
    pub r_inner: f64,
    pub r_max: f64,
    pub n_inner: usize,
    pub n_outer: usize,
}

pub fn field_header(field: &EquivariantField) -> FieldHeader {
    let g = field.grid();
    FieldHeader {
        schema_version: 1,
        m: field.m,
        parity: field.origin_parity,
        r_inner: g.r_inner(),
        r_max: g.r_max(),
        n_inner: g.n_inner(),
        n_outer: g.n_outer(),
    }
}

/// Write a field as `<path>.csv` (columns r, re, im) plus `<path>.json`.
pub fn write_field(path_base: &Path, field: &EquivariantField) -> Result<()> {
    let csv_path = path_base.with_extension("csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
    writeln!(f, "r,re,im")?;
    for (r, v) in field.grid().nodes().iter().zip(field.values()) {
        writeln!(f, "{:.16e},{:.16e},{:.16e}", r, v.re, v.im)?;
    }
    let json_path = path_base.with_extension("json");
    let header = field_header(field);
    std::fs::write(
        json_path,
        serde_json::to_string_pretty(&header).map_err(|e| CssError::Parse(e.to_string()))?,
    )?;
    Ok(())
}

/// Read a field written by [`write_field`].
pub fn read_field(path_base: &Path) -> Result<EquivariantField> {
    let json_path = path_base.with_extension("json");
    let header: FieldHeader = serde_json::from_str(&std::fs::read_to_string(json_path)?)
        .map_err(|e| CssError::Parse(e.to_string()))?;
    let grid = RadialGrid::build(header.r_max, header.n_inner, header.n_outer, header.r_inner)?;
    let csv_path = path_base.with_extension("csv");
    let reader = BufReader::new(std::fs::File::open(csv_path)?);
    let mut values = Vec::with_capacity(grid.len());
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            continue; // header row
        }
        let mut parts = line.split(',');
        let _r: f64 = parse_f64(parts.next(), lineno)?;
        let re = parse_f64(parts.next(), lineno)?;
        let im = parse_f64(parts.next(), lineno)?;
        values.push(Complex64::new(re, im));
    }
    if values.len() != grid.len() {
        return Err(CssError::Parse(format!(
            "field row count {} does not match grid size {}",
            values.len(),
            grid.len()
        )));
    }
    Ok(EquivariantField::new(grid, header.m, values).with_parity(header.parity))
}

fn parse_f64(tok: Option<&str>, lineno: usize) -> Result<f64> {
    tok.ok_or_else(|| CssError::Parse(format!("missing column on line {lineno}")))?
        .trim()
        .parse::<f64>()
        .map_err(|e| CssError::Parse(format!("line {lineno}: {e}")))
}

/// Metadata header of a renormalized-frame snapshot.
#[derive(serde::Serialize, serde::Deserialize)]
pub struct FrameHeader {
    pub schema_version: u32,
    pub s: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub field: FieldHeader,
}

/// Write a renormalized frame: `<base>_w.csv/.json` etc. plus `<base>.json`
/// carrying the (s, lambda, gamma) metadata.
pub fn write_frame(
    path_base: &Path,
    frame: &crate::cascade::RenormalizedFrame,
) -> Result<()> {
    let base = path_base.to_string_lossy();
    write_field(Path::new(&format!("{base}_w")), &frame.w)?;
    write_field(Path::new(&format!("{base}_w1")), &frame.w1)?;
    write_field(Path::new(&format!("{base}_w2")), &frame.w2)?;
    let header = FrameHeader {
        schema_version: 1,
        s: frame.s,
        lambda: frame.lambda,
        gamma: frame.gamma,
        field: field_header(&frame.w),
    };
    std::fs::write(
        path_base.with_extension("json"),
        serde_json::to_string_pretty(&header).map_err(|e| CssError::Parse(e.to_string()))?,
    )?;
    Ok(())
}

/// Write a generic CSV table with a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Arc-aware helper: rebuild a field on an identical freshly built grid.
pub fn same_layout_grid(g: &RadialGrid) -> Result<Arc<RadialGrid>> {
    RadialGrid::build(g.r_max(), g.n_inner(), g.n_outer(), g.r_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfields::TestFieldGen;

    #[test]
    fn frame_serializes_with_metadata() {
        let g = RadialGrid::build(50.0, 128, 128, 10.0).unwrap();
        let u = TestFieldGen::new(0, 3).field(&g);
        let frame = crate::cascade::renormalize_frame(&u, 1.2, 0.3).unwrap();
        let dir = std::env::temp_dir().join("css_core_io_frame");
        std::fs::create_dir_all(&dir).unwrap();
        let base = dir.join("frame0");
        write_frame(&base, &frame).unwrap();
        let header: FrameHeader =
            serde_json::from_str(&std::fs::read_to_string(base.with_extension("json")).unwrap())
                .unwrap();
        assert_eq!(header.lambda, 1.2);
        assert_eq!(header.gamma, 0.3);
        let w_back = read_field(&dir.join("frame0_w")).unwrap();
        assert_eq!(w_back.values()[7], frame.w.values()[7]);
    }

    #[test]
    fn field_roundtrip_preserves_doubles() {
        let g = RadialGrid::build(50.0, 128, 128, 10.0).unwrap();
        let f = TestFieldGen::new(1, 5).field(&g);
        let dir = std::env::temp_dir().join("css_core_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let base = dir.join("field_roundtrip");
        write_field(&base, &f).unwrap();
        let back = read_field(&base).unwrap();
        assert_eq!(back.m, f.m);
        for (a, b) in f.values().iter().zip(back.values()) {
            assert_eq!(a.re, b.re, "re must round-trip bit-for-bit in decimal");
            assert_eq!(a.im, b.im);
        }
    }
}
