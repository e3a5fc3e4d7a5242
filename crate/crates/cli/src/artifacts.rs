use std::path::Path;

use homogroup::atoms::{Atom, AtomKind, AtomReport};
use homogroup::error::Error;
use homogroup::grid::{GridFunction, GridSpec};
use homogroup::lie::GroupPoint;
use homogroup::maximal::BlowupTable;
use nalgebra::DMatrix;
use serde_json::{json, Value};

/// Atoms are stored as a JSON header plus a CSV grid payload next to it.
/// The header keeps everything needed to rebuild the `Atom` exactly; the
/// payload is one `index,value` row per reference-grid node.
pub fn write_atom(atom: &Atom, dir: &Path, stem: &str) -> Result<(), Error> {
    let kind = match &atom.kind {
        AtomKind::Classical { center, radius } => json!({
            "classical": { "center": vec_of(center), "radius": radius }
        }),
        AtomKind::Modified { center, k, radius } => json!({
            "modified": { "center": vec_of(center), "k": k, "radius": radius }
        }),
        AtomKind::FamilyF {
            center,
            j1,
            j2,
            radius,
        } => json!({
            "family": { "center": vec_of(center), "j1": j1, "j2": j2, "radius": radius }
        }),
    };
    let header = json!({
        "kind": kind,
        "p": atom.p,
        "alpha": atom.alpha,
        "log_amplitude": atom.log_amplitude,
        "omega": atom.omega,
        "moment_residual": atom.moment_residual,
        "linear_map": matrix_rows(&atom.linear_map),
        "grid": {
            "dim": atom.values.spec.dim,
            "half_width": atom.values.spec.half_width,
            "nodes_per_axis": atom.values.spec.nodes_per_axis,
        },
        "values_file": format!("{stem}.csv"),
    });
    write_text(
        &dir.join(format!("{stem}.json")),
        &format!("{:#}\n", header),
    )?;
    let mut csv = String::from("index,value\n");
    for (i, v) in atom.values.values.iter().enumerate() {
        csv.push_str(&format!("{i},{v:e}\n"));
    }
    write_text(&dir.join(format!("{stem}.csv")), &csv)
}

pub fn read_atom(dir: &Path, stem: &str) -> Result<Atom, Error> {
    let header_path = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&header_path)
        .map_err(|_| Error::FileNotFound(header_path.display().to_string()))?;
    let h: Value = serde_json::from_str(&text)
        .map_err(|e| Error::ConfigInvalid("atom header".into(), e.to_string()))?;

    let grid = &h["grid"];
    let spec = GridSpec::new(
        field_u(grid, "dim")?,
        field_f(grid, "half_width")?,
        field_u(grid, "nodes_per_axis")?,
    );

    let values_file = h["values_file"]
        .as_str()
        .ok_or_else(|| Error::MissingColumn("values_file".into()))?;
    let payload_path = dir.join(values_file);
    let payload = std::fs::read_to_string(&payload_path)
        .map_err(|_| Error::FileNotFound(payload_path.display().to_string()))?;
    let mut values = vec![0.0; spec.node_count()];
    for line in payload.lines().skip(1) {
        let (idx, val) = line
            .split_once(',')
            .ok_or_else(|| Error::ConfigInvalid("atom payload".into(), line.to_string()))?;
        let i: usize = idx
            .parse()
            .map_err(|_| Error::ConfigInvalid("atom payload".into(), idx.to_string()))?;
        if i >= values.len() {
            return Err(Error::ConfigInvalid(
                "atom payload".into(),
                format!("index {i} out of range"),
            ));
        }
        values[i] = val
            .parse()
            .map_err(|_| Error::ConfigInvalid("atom payload".into(), val.to_string()))?;
    }

    let kind = parse_kind(&h["kind"])?;
    let linear_map = parse_matrix(&h["linear_map"])?;
    let linear_map_inv = linear_map
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix(0.0))?;
    Ok(Atom {
        kind,
        p: field_f(&h, "p")?,
        alpha: field_u(&h, "alpha")?,
        values: GridFunction { spec, values },
        linear_map,
        linear_map_inv,
        log_amplitude: field_f(&h, "log_amplitude")?,
        omega: field_f(&h, "omega")?,
        moment_residual: field_f(&h, "moment_residual")?,
    })
}

fn parse_kind(v: &Value) -> Result<AtomKind, Error> {
    if let Some(c) = v.get("classical") {
        return Ok(AtomKind::Classical {
            center: point_field(c)?,
            radius: field_f(c, "radius")?,
        });
    }
    if let Some(c) = v.get("modified") {
        return Ok(AtomKind::Modified {
            center: point_field(c)?,
            k: field_i(c, "k")?,
            radius: field_f(c, "radius")?,
        });
    }
    if let Some(c) = v.get("family") {
        return Ok(AtomKind::FamilyF {
            center: point_field(c)?,
            j1: field_i(c, "j1")?,
            j2: field_i(c, "j2")?,
            radius: field_f(c, "radius")?,
        });
    }
    Err(Error::ConfigInvalid(
        "atom kind".into(),
        "expected classical, modified or family".into(),
    ))
}

fn point_field(v: &Value) -> Result<GroupPoint, Error> {
    let arr = v["center"]
        .as_array()
        .ok_or_else(|| Error::MissingColumn("center".into()))?;
    let coords: Result<Vec<f64>, Error> = arr
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::ConfigInvalid("center".into(), x.to_string()))
        })
        .collect();
    Ok(GroupPoint::from_slice(&coords?))
}

fn parse_matrix(v: &Value) -> Result<DMatrix<f64>, Error> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::MissingColumn("linear_map".into()))?;
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * n);
    for row in rows {
        let row = row
            .as_array()
            .ok_or_else(|| Error::ConfigInvalid("linear_map".into(), "ragged rows".into()))?;
        if row.len() != n {
            return Err(Error::ConfigInvalid(
                "linear_map".into(),
                "ragged rows".into(),
            ));
        }
        for x in row {
            flat.push(
                x.as_f64()
                    .ok_or_else(|| Error::ConfigInvalid("linear_map".into(), x.to_string()))?,
            );
        }
    }
    Ok(DMatrix::from_row_slice(n, n, &flat))
}

fn field_f(v: &Value, name: &str) -> Result<f64, Error> {
    v[name]
        .as_f64()
        .ok_or_else(|| Error::MissingColumn(name.into()))
}

fn field_u(v: &Value, name: &str) -> Result<usize, Error> {
    v[name]
        .as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::MissingColumn(name.into()))
}

fn field_i(v: &Value, name: &str) -> Result<i64, Error> {
    v[name]
        .as_i64()
        .ok_or_else(|| Error::MissingColumn(name.into()))
}

fn vec_of(p: &GroupPoint) -> Vec<f64> {
    p.coords.iter().copied().collect()
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

pub fn blowup_csv(table: &BlowupTable) -> String {
    let mut out = String::from("j,d_j,tau_j,det_Mj,witness_min,integral_p,marker\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e},{:e}\n",
            r.j, r.d_j, r.tau_j, r.det_m_j, r.witness_min, r.integral_p, r.marker
        ));
    }
    out
}

pub fn report_json(report: &AtomReport) -> Value {
    json!({
        "pass": report.pass,
        "trivial_zero": report.trivial_zero,
        "checks": report
            .checks
            .iter()
            .map(|c| json!({ "name": c.name, "pass": c.pass, "slack": c.slack }))
            .collect::<Vec<_>>(),
    })
}

/// Split a CSV table into one two-column series file per value column,
/// keyed by the first column. Returns the written file names.
pub fn emit_plotdata(
    csv_text: &str,
    out_dir: &Path,
    columns: Option<&[String]>,
) -> Result<Vec<String>, Error> {
    let mut lines = csv_text.lines();
    let header = lines.next().unwrap_or("");
    let names: Vec<&str> = if header.is_empty() {
        Vec::new()
    } else {
        header.split(',').map(str::trim).collect()
    };

    let mut selected: Vec<usize> = Vec::new();
    match columns {
        Some(cols) => {
            for c in cols {
                let idx = names
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::MissingColumn(c.clone()))?;
                if idx > 0 {
                    selected.push(idx);
                }
            }
        }
        None => selected.extend(1..names.len()),
    }

    let mut rows: Vec<Vec<&str>> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(line.split(',').map(str::trim).collect());
    }
    if rows.is_empty() {
        eprintln!("warning: no data rows; emitting empty series");
    }

    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::PipelineStageFailure("plotdata".into(), e.to_string()))?;
    let key = names.first().copied().unwrap_or("x");
    let mut written = Vec::new();
    for &ci in &selected {
        let mut out = format!("{},{}\n", key, names[ci]);
        for row in &rows {
            if ci < row.len() {
                out.push_str(&format!("{},{}\n", row[0], row[ci]));
            }
        }
        let fname = format!("series-{}.csv", names[ci]);
        write_text(&out_dir.join(&fname), &out)?;
        written.push(fname);
    }
    Ok(written)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text)
        .map_err(|e| Error::PipelineStageFailure(path.display().to_string(), e.to_string()))
}
