//! Field exports: legacy-format VTK structured points and a flat CSV that
//! the plotting command reads back.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::solver::FieldSet;

/// One cell of the CSV field export. `t_bp` is empty outside the base plate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub solid: u32,
    pub speed: f64,
    pub p: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "T_bp")]
    pub t_bp: Option<f64>,
}

fn rows(f: &FieldSet) -> Vec<FieldRow> {
    let speed = f.speed();
    let (xs, ys) = &f.design_cells;
    let w = xs.len();
    let mut out = Vec::with_capacity(f.grid.len());
    for j in 0..f.grid.ny {
        for i in 0..f.grid.nx {
            let k = f.grid.idx(i, j);
            let c = f.grid.cell_center(i, j);
            let t_bp = (xs.contains(&i) && ys.contains(&j)).then(|| f.t_bp[(j - ys.start) * w + (i - xs.start)]);
            out.push(FieldRow {
                i,
                j,
                x: c.x,
                y: c.y,
                solid: f.mask.get(i, j).code(),
                speed: speed[k],
                p: f.p[k],
                t: f.t[k],
                t_bp,
            });
        }
    }
    out
}

pub fn write_fields_csv<W: Write>(out: W, fields: &FieldSet) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows(fields) {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fields_csv<R: Read>(input: R) -> csv::Result<Vec<FieldRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Legacy VTK `STRUCTURED_POINTS` file with one cell-data array per field.
/// Base-plate temperature is written as NaN outside the plate.
pub fn write_vtk(fields: &FieldSet) -> String {
    let g = &fields.grid;
    let rows = rows(fields);
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "finopt fields");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", g.nx + 1, g.ny + 1);
    let _ = writeln!(s, "ORIGIN {:?} {:?} 0", g.extent.x_min, g.extent.y_min);
    let _ = writeln!(s, "SPACING {:?} {:?} 1", g.dx(), g.dy());
    let _ = writeln!(s, "CELL_DATA {}", g.len());
    let mut scalar = |name: &str, vals: Vec<String>| {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for chunk in vals.chunks(8) {
            let _ = writeln!(s, "{}", chunk.join(" "));
        }
    };
    scalar("solid", rows.iter().map(|r| r.solid.to_string()).collect());
    scalar("speed", rows.iter().map(|r| format!("{:?}", r.speed)).collect());
    scalar("pressure", rows.iter().map(|r| format!("{:?}", r.p)).collect());
    scalar("T", rows.iter().map(|r| format!("{:?}", r.t)).collect());
    scalar(
        "T_bp",
        rows.iter()
            .map(|r| r.t_bp.map_or("nan".to_string(), |v| format!("{v:?}")))
            .collect(),
    );
    s
}
