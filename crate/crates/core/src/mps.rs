//! Model export and import in MPS format, with `QCMATRIX` sections for the
//! rotated-cone blocks and a row-map sidecar for external audits.

use crate::model::{ConeBlock, ConeKind, ConeSide, Mode, ModelInstance, Row, RowKind};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn mode_tag(m: Option<Mode>) -> &'static str {
    match m {
        Some(Mode::Normal) => "n",
        Some(Mode::Emergency) => "e",
        None => "s",
    }
}

fn col_name(instance: &ModelInstance, c: usize) -> String {
    let meta = &instance.col_meta[c];
    match meta.hour {
        Some(h) => format!(
            "{}_{}_{}_{}",
            meta.quantity.tag(),
            mode_tag(meta.mode),
            h,
            meta.element
        ),
        None => format!(
            "{}_{}_{}",
            meta.quantity.tag(),
            mode_tag(meta.mode),
            meta.element
        ),
    }
}

fn row_name(kind: &RowKind, idx: usize) -> String {
    let mut s = format!("{}_{}", kind.family.tag(), mode_tag(kind.mode));
    if let Some(h) = kind.hour {
        s.push_str(&format!("_{h}"));
    }
    if let Some(e) = kind.element {
        s.push_str(&format!("_{e}"));
    }
    s.push_str(&format!("_r{idx}"));
    s
}

fn cone_name(cone: &ConeBlock, idx: usize) -> String {
    let kind = match cone.kind {
        ConeKind::LineFlow => "qline",
        ConeKind::DgCapability => "qdg",
    };
    format!(
        "{}_{}_{}_{}_c{}",
        kind,
        mode_tag(Some(cone.mode)),
        cone.hour,
        cone.element,
        idx
    )
}

const INF: f64 = f64::INFINITY;

/// Serialize the instance. Every linear row appears in `ROWS`/`RHS`/
/// `RANGES`; each cone block becomes one `L` row with a `QCMATRIX` section
/// encoding `sum p^2 - a b <= 0` (constant sides fold into the RHS).
pub fn write_mps(instance: &ModelInstance, name: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("NAME          {name}\n"));
    out.push_str("ROWS\n");
    out.push_str(" N  obj\n");
    let mut row_names = Vec::with_capacity(instance.rows.len());
    for (i, row) in instance.rows.iter().enumerate() {
        let rn = row_name(&row.kind, i);
        let sense = if row.lb == row.ub {
            'E'
        } else if row.lb.is_finite() && row.ub.is_finite() {
            // range row: written as L with a RANGES entry
            'L'
        } else if row.ub.is_finite() {
            'L'
        } else {
            'G'
        };
        out.push_str(&format!(" {sense}  {rn}\n"));
        row_names.push((rn, sense));
    }
    let mut cone_names = Vec::with_capacity(instance.cones.len());
    for (i, cone) in instance.cones.iter().enumerate() {
        let cn = cone_name(cone, i);
        out.push_str(&format!(" L  {cn}\n"));
        cone_names.push(cn);
    }

    // columns grouped with integer markers
    out.push_str("COLUMNS\n");
    let mut entries_by_col: Vec<Vec<(String, f64)>> = vec![Vec::new(); instance.n_cols];
    for (c, &v) in instance.obj.iter().enumerate() {
        if v != 0.0 {
            entries_by_col[c].push(("obj".to_string(), v));
        }
    }
    for (i, row) in instance.rows.iter().enumerate() {
        for &(c, v) in &row.coeffs {
            entries_by_col[c as usize].push((row_names[i].0.clone(), v));
        }
    }
    let mut in_integer = false;
    let mut marker_count = 0usize;
    for c in 0..instance.n_cols {
        let is_int = instance.is_integer[c];
        if is_int && !in_integer {
            out.push_str(&format!(
                "    MARKER{marker_count:04}  'MARKER'                 'INTORG'\n"
            ));
            marker_count += 1;
            in_integer = true;
        }
        if !is_int && in_integer {
            out.push_str(&format!(
                "    MARKER{marker_count:04}  'MARKER'                 'INTEND'\n"
            ));
            marker_count += 1;
            in_integer = false;
        }
        let cn = col_name(instance, c);
        if entries_by_col[c].is_empty() {
            // keep the column declared so bounds can reference it
            out.push_str(&format!("    {cn}  obj  0\n"));
        }
        for (rn, v) in &entries_by_col[c] {
            out.push_str(&format!("    {cn}  {rn}  {v:.17e}\n"));
        }
    }
    if in_integer {
        out.push_str(&format!(
            "    MARKER{marker_count:04}  'MARKER'                 'INTEND'\n"
        ));
    }

    out.push_str("RHS\n");
    for (i, row) in instance.rows.iter().enumerate() {
        let rhs = if row.lb == row.ub {
            row.lb
        } else if row.ub.is_finite() {
            row.ub
        } else {
            row.lb
        };
        if rhs != 0.0 {
            out.push_str(&format!("    rhs  {}  {rhs:.17e}\n", row_names[i].0));
        }
    }
    for (i, cone) in instance.cones.iter().enumerate() {
        let mut rhs = 0.0;
        if let (ConeSide::Const(a), ConeSide::Const(b)) = (&cone.a, &cone.b) {
            rhs = a * b;
        }
        if rhs != 0.0 {
            out.push_str(&format!("    rhs  {}  {rhs:.17e}\n", cone_names[i]));
        }
    }

    out.push_str("RANGES\n");
    for (i, row) in instance.rows.iter().enumerate() {
        if row.lb.is_finite() && row.ub.is_finite() && row.lb != row.ub {
            let span = row.ub - row.lb;
            out.push_str(&format!("    rng  {}  {span:.17e}\n", row_names[i].0));
        }
    }

    out.push_str("BOUNDS\n");
    for c in 0..instance.n_cols {
        let cn = col_name(instance, c);
        let (lo, hi) = (instance.col_lb[c], instance.col_ub[c]);
        if lo == hi {
            out.push_str(&format!(" FX bnd  {cn}  {lo:.17e}\n"));
            continue;
        }
        if lo.is_finite() {
            out.push_str(&format!(" LO bnd  {cn}  {lo:.17e}\n"));
        } else {
            out.push_str(&format!(" MI bnd  {cn}\n"));
        }
        if hi.is_finite() {
            out.push_str(&format!(" UP bnd  {cn}  {hi:.17e}\n"));
        }
    }

    // quadratic constraint sections: x' Q x <= rhs with linear part absent
    for (i, cone) in instance.cones.iter().enumerate() {
        out.push_str(&format!("QCMATRIX   {}\n", cone_names[i]));
        for &p in &cone.p {
            let pn = col_name(instance, p as usize);
            out.push_str(&format!("    {pn}  {pn}  1.0\n"));
        }
        if let (ConeSide::Col(a), ConeSide::Col(b)) = (&cone.a, &cone.b) {
            let an = col_name(instance, *a as usize);
            let bn = col_name(instance, *b as usize);
            out.push_str(&format!("    {an}  {bn}  -0.5\n"));
            out.push_str(&format!("    {bn}  {an}  -0.5\n"));
        }
    }

    out.push_str("ENDATA\n");
    out
}

/// Row-map sidecar: tab-separated row name, family tag, mode, hour and
/// element so external audits can identify what every row encodes.
pub fn write_row_map(instance: &ModelInstance) -> String {
    let mut out = String::from("row\tfamily\tmode\thour\telement\n");
    for (i, row) in instance.rows.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            row_name(&row.kind, i),
            row.kind.family.tag(),
            row.kind.mode.map(|m| m.tag()).unwrap_or("-"),
            row.kind
                .hour
                .map(|h| (h + 1).to_string())
                .unwrap_or_else(|| "-".to_string()),
            row.kind
                .element
                .map(|e| e.to_string())
                .unwrap_or_else(|| "-".to_string()),
        ));
    }
    for (i, cone) in instance.cones.iter().enumerate() {
        let kind = match cone.kind {
            ConeKind::LineFlow => "cone_line",
            ConeKind::DgCapability => "cone_dg",
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            cone_name(cone, i),
            kind,
            cone.mode.tag(),
            cone.hour + 1,
            cone.element,
        ));
    }
    out
}

/// A re-imported model: plain columns, rows and cone blocks, detached from
/// any network metadata.
#[derive(Debug, Clone)]
pub struct ImportedModel {
    pub col_names: Vec<String>,
    pub obj: Vec<f64>,
    pub col_lb: Vec<f64>,
    pub col_ub: Vec<f64>,
    pub is_integer: Vec<bool>,
    pub rows: Vec<(f64, f64, Vec<(u32, f64)>)>,
    /// Cone blocks recovered from `QCMATRIX` sections.
    pub cones: Vec<(Vec<u32>, ConeSideImport, ConeSideImport)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConeSideImport {
    Col(u32),
    Const(f64),
}

/// Parse an MPS document produced by [`write_mps`] (free-format field
/// splitting; sections NAME, ROWS, COLUMNS, RHS, RANGES, BOUNDS, QCMATRIX).
pub fn parse_mps(text: &str) -> Result<ImportedModel, MpsError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Ranges,
        Bounds,
        Qc(String),
    }
    let err = |line: usize, message: &str| MpsError::Parse {
        line,
        message: message.to_string(),
    };

    let mut section = Section::None;
    let mut row_sense: BTreeMap<String, char> = BTreeMap::new();
    let mut row_order: Vec<String> = Vec::new();
    let mut col_index: BTreeMap<String, u32> = BTreeMap::new();
    let mut col_names: Vec<String> = Vec::new();
    let mut obj: Vec<f64> = Vec::new();
    let mut col_lb: Vec<f64> = Vec::new();
    let mut col_ub: Vec<f64> = Vec::new();
    let mut is_integer: Vec<bool> = Vec::new();
    let mut entries: BTreeMap<String, Vec<(u32, f64)>> = BTreeMap::new();
    let mut rhs: BTreeMap<String, f64> = BTreeMap::new();
    let mut ranges: BTreeMap<String, f64> = BTreeMap::new();
    let mut qc: BTreeMap<String, Vec<(u32, u32, f64)>> = BTreeMap::new();
    let mut qc_order: Vec<String> = Vec::new();
    let mut in_integer = false;

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        let starts_at_col0 = !line.starts_with(' ');
        let fields: Vec<&str> = line.split_whitespace().collect();
        if starts_at_col0 {
            match fields[0] {
                "NAME" => continue,
                "ROWS" => {
                    section = Section::Rows;
                    continue;
                }
                "COLUMNS" => {
                    section = Section::Columns;
                    continue;
                }
                "RHS" => {
                    section = Section::Rhs;
                    continue;
                }
                "RANGES" => {
                    section = Section::Ranges;
                    continue;
                }
                "BOUNDS" => {
                    section = Section::Bounds;
                    continue;
                }
                "QCMATRIX" => {
                    let name = fields
                        .get(1)
                        .ok_or_else(|| err(ln, "QCMATRIX needs a row name"))?;
                    qc.insert(name.to_string(), Vec::new());
                    qc_order.push(name.to_string());
                    section = Section::Qc(name.to_string());
                    continue;
                }
                "ENDATA" => break,
                other => return Err(err(ln, &format!("unknown section `{other}`"))),
            }
        }
        match &section {
            Section::None => return Err(err(ln, "data before any section")),
            Section::Rows => {
                if fields.len() != 2 {
                    return Err(err(ln, "ROWS lines need sense and name"));
                }
                let sense = fields[0].chars().next().unwrap();
                if sense != 'N' {
                    row_sense.insert(fields[1].to_string(), sense);
                    row_order.push(fields[1].to_string());
                }
            }
            Section::Columns => {
                if fields.len() >= 3 && fields[1] == "'MARKER'" {
                    match fields[2] {
                        "'INTORG'" => in_integer = true,
                        "'INTEND'" => in_integer = false,
                        other => return Err(err(ln, &format!("unknown marker `{other}`"))),
                    }
                    continue;
                }
                if fields.len() < 3 || fields.len() % 2 == 0 {
                    return Err(err(ln, "COLUMNS lines need name and pairs"));
                }
                let cname = fields[0];
                let c = *col_index.entry(cname.to_string()).or_insert_with(|| {
                    let idx = col_names.len() as u32;
                    col_names.push(cname.to_string());
                    obj.push(0.0);
                    col_lb.push(0.0);
                    col_ub.push(INF);
                    is_integer.push(in_integer);
                    idx
                });
                let mut k = 1;
                while k + 1 < fields.len() {
                    let rname = fields[k];
                    let value: f64 = fields[k + 1]
                        .parse()
                        .map_err(|_| err(ln, "bad numeric value"))?;
                    if rname == "obj" {
                        obj[c as usize] = value;
                    } else {
                        entries.entry(rname.to_string()).or_default().push((c, value));
                    }
                    k += 2;
                }
            }
            Section::Rhs => {
                if fields.len() < 3 {
                    return Err(err(ln, "RHS lines need set, row, value"));
                }
                let value: f64 = fields[2].parse().map_err(|_| err(ln, "bad rhs"))?;
                rhs.insert(fields[1].to_string(), value);
            }
            Section::Ranges => {
                if fields.len() < 3 {
                    return Err(err(ln, "RANGES lines need set, row, value"));
                }
                let value: f64 = fields[2].parse().map_err(|_| err(ln, "bad range"))?;
                ranges.insert(fields[1].to_string(), value);
            }
            Section::Bounds => {
                if fields.len() < 3 {
                    return Err(err(ln, "BOUNDS lines need type, set, column"));
                }
                let c = *col_index
                    .get(fields[2])
                    .ok_or_else(|| err(ln, "bound references unknown column"))?
                    as usize;
                match fields[0] {
                    "FX" => {
                        let v: f64 = fields[3].parse().map_err(|_| err(ln, "bad bound"))?;
                        col_lb[c] = v;
                        col_ub[c] = v;
                    }
                    "LO" => {
                        let v: f64 = fields[3].parse().map_err(|_| err(ln, "bad bound"))?;
                        col_lb[c] = v;
                    }
                    "UP" => {
                        let v: f64 = fields[3].parse().map_err(|_| err(ln, "bad bound"))?;
                        col_ub[c] = v;
                    }
                    "MI" => col_lb[c] = f64::NEG_INFINITY,
                    "BV" => {
                        col_lb[c] = 0.0;
                        col_ub[c] = 1.0;
                        is_integer[c] = true;
                    }
                    other => return Err(err(ln, &format!("unsupported bound `{other}`"))),
                }
            }
            Section::Qc(name) => {
                if fields.len() != 3 {
                    return Err(err(ln, "QCMATRIX lines need two columns and a value"));
                }
                let ci = *col_index
                    .get(fields[0])
                    .ok_or_else(|| err(ln, "unknown column in QCMATRIX"))?;
                let cj = *col_index
                    .get(fields[1])
                    .ok_or_else(|| err(ln, "unknown column in QCMATRIX"))?;
                let v: f64 = fields[2].parse().map_err(|_| err(ln, "bad value"))?;
                qc.get_mut(name).unwrap().push((ci, cj, v));
            }
        }
    }

    // assemble rows, skipping the quadratic ones
    let mut rows = Vec::new();
    for rname in &row_order {
        if qc.contains_key(rname) {
            continue;
        }
        let sense = row_sense[rname];
        let r = rhs.get(rname).copied().unwrap_or(0.0);
        let coeffs = entries.remove(rname).unwrap_or_default();
        let (lb, ub) = match sense {
            'E' => (r, r),
            'L' => match ranges.get(rname) {
                Some(&rng) => (r - rng.abs(), r),
                None => (f64::NEG_INFINITY, r),
            },
            'G' => match ranges.get(rname) {
                Some(&rng) => (r, r + rng.abs()),
                None => (r, INF),
            },
            other => {
                return Err(MpsError::Parse {
                    line: 0,
                    message: format!("unsupported row sense `{other}`"),
                })
            }
        };
        rows.push((lb, ub, coeffs));
    }

    // recover cone blocks from the quadratic sections
    let mut cones = Vec::new();
    for name in &qc_order {
        let terms = &qc[name];
        let mut p: Vec<u32> = Vec::new();
        let mut ab: Option<(u32, u32)> = None;
        for &(i, j, v) in terms {
            if i == j {
                if (v - 1.0).abs() > 1e-12 {
                    return Err(MpsError::Parse {
                        line: 0,
                        message: format!("{name}: diagonal entries must be 1"),
                    });
                }
                p.push(i);
            } else if (v + 0.5).abs() <= 1e-12 {
                let key = (i.min(j), i.max(j));
                match ab {
                    None => ab = Some(key),
                    Some(prev) if prev == key => {}
                    Some(_) => {
                        return Err(MpsError::Parse {
                            line: 0,
                            message: format!("{name}: multiple bilinear pairs"),
                        })
                    }
                }
            } else {
                return Err(MpsError::Parse {
                    line: 0,
                    message: format!("{name}: unsupported off-diagonal value {v}"),
                });
            }
        }
        let (a, b) = match ab {
            Some((a, b)) => (ConeSideImport::Col(a), ConeSideImport::Col(b)),
            None => {
                // constant sides: sum p^2 <= rhs with rhs = s^2
                let r = rhs.get(name).copied().unwrap_or(0.0);
                let s = r.max(0.0).sqrt();
                (ConeSideImport::Const(s), ConeSideImport::Const(s))
            }
        };
        cones.push((p, a, b));
    }

    Ok(ImportedModel {
        col_names,
        obj,
        col_lb,
        col_ub,
        is_integer,
        rows,
        cones,
    })
}

/// Turn an imported model back into a solver-ready instance. The network
/// metadata is synthetic (import is for cross-checking objectives), so the
/// decoded instance supports solving but not schedule extraction.
pub fn imported_to_instance(model: &ImportedModel) -> crate::mps::SolvableModel {
    SolvableModel {
        obj: model.obj.clone(),
        col_lb: model.col_lb.clone(),
        col_ub: model.col_ub.clone(),
        is_integer: model.is_integer.clone(),
        rows: model.rows.clone(),
        cones: model.cones.clone(),
    }
}

/// Minimal solvable form of an imported model.
#[derive(Debug, Clone)]
pub struct SolvableModel {
    pub obj: Vec<f64>,
    pub col_lb: Vec<f64>,
    pub col_ub: Vec<f64>,
    pub is_integer: Vec<bool>,
    pub rows: Vec<(f64, f64, Vec<(u32, f64)>)>,
    pub cones: Vec<(Vec<u32>, ConeSideImport, ConeSideImport)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{load_case, to_per_unit};
    use crate::model::{build_model, BuildOptions, ModeSet};

    #[test]
    fn export_declares_cone_sections_for_two_bus() {
        let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
        let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
        let text = write_mps(&inst, "case2bus");
        let sections = text.matches("QCMATRIX").count();
        assert_eq!(sections, 24);
    }

    #[test]
    fn export_declares_all_integer_columns_shared_layout() {
        let net = to_per_unit(&load_case("ieee33").unwrap()).unwrap();
        let opts = BuildOptions {
            ess_shared_binaries: true,
            ..Default::default()
        };
        let inst = build_model(&net, ModeSet::Both, &opts).unwrap();
        let text = write_mps(&inst, "ieee33");
        let parsed = parse_mps(&text).unwrap();
        let integers = parsed.is_integer.iter().filter(|&&b| b).count();
        assert_eq!(integers, 172);
    }

    #[test]
    fn round_trip_preserves_structure() {
        let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
        let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
        let text = write_mps(&inst, "case2bus");
        let parsed = parse_mps(&text).unwrap();
        assert_eq!(parsed.obj.len(), inst.n_cols);
        assert_eq!(parsed.rows.len(), inst.rows.len());
        assert_eq!(parsed.cones.len(), inst.cones.len());
        // bounds survive
        for c in 0..inst.n_cols {
            assert!((parsed.col_lb[c] - inst.col_lb[c]).abs() < 1e-12 || parsed.col_lb[c] == inst.col_lb[c]);
            assert!(
                (parsed.col_ub[c].is_infinite() && inst.col_ub[c].is_infinite())
                    || (parsed.col_ub[c] - inst.col_ub[c]).abs() < 1e-12
            );
        }
    }

    #[test]
    fn row_map_covers_every_row() {
        let net = to_per_unit(&load_case("2bus").unwrap()).unwrap();
        let inst = build_model(&net, ModeSet::Normal, &BuildOptions::default()).unwrap();
        let map = write_row_map(&inst);
        // header + one line per row + one per cone
        assert_eq!(map.lines().count(), 1 + inst.rows.len() + inst.cones.len());
    }
}
