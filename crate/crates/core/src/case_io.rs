//! MATPOWER case ingestion and the JSON file formats used by the CLI.
//!
//! The parser accepts the subset of the `.m` format needed for steady-state
//! studies: `baseMVA`, `bus`, `gen` and `branch`. Any other assignment
//! (`gencost`, `bus_name`, areas, ...) is skipped. Columns beyond the ones
//! listed below are tolerated and ignored.
//!
//! | table  | columns used (1-based)                                   |
//! |--------|----------------------------------------------------------|
//! | bus    | 1 id, 2 type, 3 Pd, 4 Qd, 5 Gs, 6 Bs, 8 Vm, 9 Va         |
//! | gen    | 1 bus, 2 Pg, 3 Qg, 6 Vg, 8 status                        |
//! | branch | 1 from, 2 to, 3 r, 4 x, 5 b, 9 ratio, 10 angle, 11 status |
//!
//! Powers are divided by `baseMVA` and angles converted from degrees.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::case::{Branch, Bus, BusKind, Gen, GridCase};
use crate::casegen::{Device, PmuDevice, RtuDevice, SeCase};
use crate::error::{Error, Result};

const BUS_COLS: usize = 9;
const GEN_COLS: usize = 8;
const BRANCH_COLS: usize = 11;

struct Row {
    line: usize,
    cells: Vec<String>,
}

impl Row {
    fn num(&self, col: usize, what: &str) -> Result<f64> {
        let cell = &self.cells[col];
        cell.parse::<f64>().map_err(|_| Error::Parse {
            line: self.line,
            reason: format!("column {} ({what}): '{cell}' is not a number", col + 1),
        })
    }

    fn int(&self, col: usize, what: &str) -> Result<i64> {
        let v = self.num(col, what)?;
        if v.fract() != 0.0 || !v.is_finite() {
            return Err(Error::Parse {
                line: self.line,
                reason: format!("column {} ({what}): expected an integer, got {v}", col + 1),
            });
        }
        Ok(v as i64)
    }

    fn bus_id(&self, col: usize, what: &str) -> Result<u32> {
        let v = self.int(col, what)?;
        u32::try_from(v).map_err(|_| Error::Parse {
            line: self.line,
            reason: format!("column {} ({what}): bus id {v} out of range", col + 1),
        })
    }
}

#[derive(Default)]
struct RawCase {
    name: Option<String>,
    base_mva: Option<(usize, f64)>,
    bus: Option<Vec<Row>>,
    gen: Option<Vec<Row>>,
    branch: Option<Vec<Row>>,
}

enum Block {
    None,
    Matrix { name: String, rows: Vec<Row> },
    Cell,
}

fn strip_comment(line: &str) -> &str {
    // '%' inside a quoted string is not a comment
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn push_cells(rows: &mut Vec<Row>, line: usize, text: &str) {
    for chunk in text.split(';') {
        let cells: Vec<String> = chunk
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect();
        if !cells.is_empty() {
            rows.push(Row { line, cells });
        }
    }
}

/// Parses a MATPOWER-format case. The result is validated; nothing
/// partially constructed is returned on error.
pub fn parse_case(text: &str) -> Result<GridCase> {
    let mut raw = RawCase::default();
    let mut block = Block::None;

    for (lineno, full) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = strip_comment(full).trim();
        if line.is_empty() {
            continue;
        }
        match &mut block {
            Block::Cell => {
                if line.contains('}') {
                    block = Block::None;
                }
                continue;
            }
            Block::Matrix { rows, .. } => {
                if let Some(end) = line.find(']') {
                    push_cells(rows, line_no, &line[..end]);
                    let Block::Matrix { name, rows } = std::mem::replace(&mut block, Block::None)
                    else {
                        unreachable!()
                    };
                    store_matrix(&mut raw, name, rows, line_no)?;
                } else {
                    push_cells(rows, line_no, line);
                }
                continue;
            }
            Block::None => {}
        }

        if let Some(rest) = line.strip_prefix("function") {
            // function mpc = name
            if let Some((_, name)) = rest.split_once('=') {
                raw.name = Some(name.trim().trim_end_matches(';').trim().to_owned());
            }
            continue;
        }
        let Some((lhs, rhs)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("unexpected content '{line}'"),
            });
        };
        let lhs = lhs.trim();
        let field = lhs.strip_prefix("mpc.").unwrap_or(lhs).to_owned();
        let rhs = rhs.trim();
        if let Some(body) = rhs.strip_prefix('[') {
            let mut rows = Vec::new();
            if let Some(end) = body.find(']') {
                push_cells(&mut rows, line_no, &body[..end]);
                store_matrix(&mut raw, field, rows, line_no)?;
            } else {
                push_cells(&mut rows, line_no, body);
                block = Block::Matrix { name: field, rows };
            }
        } else if rhs.starts_with('{') {
            if !rhs.contains('}') {
                block = Block::Cell;
            }
        } else if field == "baseMVA" {
            let v = rhs.trim_end_matches(';').trim();
            let base = v.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                reason: format!("baseMVA: '{v}' is not a number"),
            })?;
            raw.base_mva = Some((line_no, base));
        }
        // scalar assignments such as mpc.version are ignored
    }

    if let Block::Matrix { name, rows } = block {
        let line = rows.last().map_or(0, |r| r.line);
        return Err(Error::Parse {
            line,
            reason: format!("table '{name}' is not terminated with ']'"),
        });
    }
    build_case(raw)
}

fn store_matrix(raw: &mut RawCase, name: String, rows: Vec<Row>, line: usize) -> Result<()> {
    let slot = match name.as_str() {
        "bus" => &mut raw.bus,
        "gen" => &mut raw.gen,
        "branch" => &mut raw.branch,
        _ => return Ok(()),
    };
    if slot.is_some() {
        return Err(Error::Parse {
            line,
            reason: format!("table '{name}' defined twice"),
        });
    }
    *slot = Some(rows);
    Ok(())
}

fn check_width(rows: &[Row], min: usize, table: &str) -> Result<()> {
    for r in rows {
        if r.cells.len() < min {
            return Err(Error::Parse {
                line: r.line,
                reason: format!(
                    "{table} row has {} columns, at least {min} required",
                    r.cells.len()
                ),
            });
        }
    }
    Ok(())
}

fn build_case(raw: RawCase) -> Result<GridCase> {
    let missing = |what: &str| Error::Parse {
        line: 0,
        reason: format!("missing '{what}'"),
    };
    let (base_line, base_mva) = raw.base_mva.ok_or_else(|| missing("baseMVA"))?;
    if !(base_mva > 0.0) || !base_mva.is_finite() {
        return Err(Error::Validation(format!(
            "baseMVA must be positive (line {base_line}), got {base_mva}"
        )));
    }
    let bus_rows = raw.bus.ok_or_else(|| missing("bus table"))?;
    let gen_rows = raw.gen.ok_or_else(|| missing("gen table"))?;
    let branch_rows = raw.branch.ok_or_else(|| missing("branch table"))?;
    check_width(&bus_rows, BUS_COLS, "bus")?;
    check_width(&gen_rows, GEN_COLS, "gen")?;
    check_width(&branch_rows, BRANCH_COLS, "branch")?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for r in &bus_rows {
        let kind = match r.int(1, "type")? {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            t => {
                return Err(Error::Parse {
                    line: r.line,
                    reason: format!("unsupported bus type {t}"),
                })
            }
        };
        buses.push(Bus {
            id: r.bus_id(0, "bus id")?,
            kind,
            pd: r.num(2, "Pd")? / base_mva,
            qd: r.num(3, "Qd")? / base_mva,
            gs: r.num(4, "Gs")? / base_mva,
            bs: r.num(5, "Bs")? / base_mva,
            vm_init: r.num(7, "Vm")?,
            va_init: r.num(8, "Va")?.to_radians(),
        });
    }

    let mut gens = Vec::with_capacity(gen_rows.len());
    for r in &gen_rows {
        gens.push(Gen {
            bus: r.bus_id(0, "gen bus")?,
            pg: r.num(1, "Pg")? / base_mva,
            qg: r.num(2, "Qg")? / base_mva,
            vset: r.num(5, "Vg")?,
            in_service: r.num(7, "status")? > 0.0,
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for r in &branch_rows {
        let tap = r.num(8, "ratio")?;
        branches.push(Branch {
            from: r.bus_id(0, "from bus")?,
            to: r.bus_id(1, "to bus")?,
            r: r.num(2, "r")?,
            x: r.num(3, "x")?,
            b_chg: r.num(4, "b")?,
            tap: if tap == 0.0 { 1.0 } else { tap },
            shift: r.num(9, "angle")?.to_radians(),
            in_service: r.num(10, "status")? > 0.0,
        });
    }

    let case = GridCase {
        name: raw.name.unwrap_or_else(|| "case".to_owned()),
        base_mva,
        buses,
        branches,
        gens,
    };
    case.validate()?;
    Ok(case)
}

/// Writes a case in MATPOWER format with the full standard column set.
/// Unused columns get neutral defaults.
pub fn serialize_case(c: &GridCase) -> String {
    let base = c.base_mva;
    let mut out = String::new();
    let name = if c.name.is_empty() { "case" } else { &c.name };
    let _ = writeln!(out, "function mpc = {name}");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {base};");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin"
    );
    let _ = writeln!(out, "mpc.bus = [");
    for b in &c.buses {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t0\t1\t1.1\t0.9;",
            b.id,
            b.kind.matpower_code(),
            b.pd * base,
            b.qd * base,
            b.gs * base,
            b.bs * base,
            b.vm_init,
            b.va_init.to_degrees()
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin"
    );
    let _ = writeln!(out, "mpc.gen = [");
    for g in &c.gens {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t9999\t-9999\t{}\t{}\t{}\t9999\t0;",
            g.bus,
            g.pg * base,
            g.qg * base,
            g.vset,
            base,
            u8::from(g.in_service)
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax"
    );
    let _ = writeln!(out, "mpc.branch = [");
    for br in &c.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t{}\t{}\t{}\t-360\t360;",
            br.from,
            br.to,
            br.r,
            br.x,
            br.b_chg,
            br.tap,
            br.shift.to_degrees(),
            u8::from(br.in_service)
        );
    }
    let _ = writeln!(out, "];");
    out
}

pub fn read_case(path: impl AsRef<Path>) -> Result<GridCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_case(&text)
}

// ---------------------------------------------------------------------------
// Measurement-set JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeCaseFile {
    case_name: String,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<TruthFile>,
    devices: Vec<DeviceFile>,
    grid: GridCase,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthFile {
    vr: Vec<f64>,
    vi: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    bus: u32,
    kind: DeviceKindFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pmu: Option<PmuDevice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rtu: Option<RtuDevice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DeviceKindFile {
    Pmu,
    Rtu,
}

fn schema(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Serializes a measurement set to its JSON document form.
pub fn se_case_to_json(se: &SeCase) -> String {
    let devices = se
        .grid
        .buses
        .iter()
        .zip(&se.devices)
        .map(|(bus, d)| match d {
            Device::Pmu(p) => DeviceFile {
                bus: bus.id,
                kind: DeviceKindFile::Pmu,
                pmu: Some(p.clone()),
                rtu: None,
            },
            Device::Rtu(r) => DeviceFile {
                bus: bus.id,
                kind: DeviceKindFile::Rtu,
                pmu: None,
                rtu: Some(r.clone()),
            },
        })
        .collect();
    let file = SeCaseFile {
        case_name: se.grid.name.clone(),
        seed: se.seed,
        truth: se.truth.as_ref().map(|(vr, vi)| TruthFile {
            vr: vr.clone(),
            vi: vi.clone(),
        }),
        devices,
        grid: se.grid.clone(),
    };
    serde_json::to_string_pretty(&file).expect("measurement set serializes")
}

/// Parses and validates a measurement-set document. Schema violations
/// report the JSON path of the first offending element.
pub fn se_case_from_json(text: &str) -> Result<SeCase> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: SeCaseFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })?;

    file.grid
        .validate()
        .map_err(|e| schema("grid", e.to_string()))?;
    let index = file.grid.bus_index().map_err(|e| schema("grid", e.to_string()))?;
    let n = file.grid.n_buses();

    let mut slots: Vec<Option<Device>> = vec![None; n];
    for (k, d) in file.devices.into_iter().enumerate() {
        let at = |field: &str| format!("devices[{k}]{field}");
        let Some(&i) = index.get(&d.bus) else {
            return Err(schema(at(".bus"), format!("unknown bus {}", d.bus)));
        };
        if slots[i].is_some() {
            return Err(schema(at(".bus"), format!("second device at bus {}", d.bus)));
        }
        let device = match d.kind {
            DeviceKindFile::Pmu => {
                let p = d.pmu.ok_or_else(|| schema(at(".pmu"), "missing pmu block"))?;
                if !(p.g_pmu > 0.0) {
                    return Err(schema(at(".pmu.g_pmu"), "must be positive"));
                }
                if !(p.sigma_rel >= 0.0) {
                    return Err(schema(at(".pmu.sigma_rel"), "must be non-negative"));
                }
                for (name, v) in [("vr", p.vr), ("vi", p.vi), ("ir", p.ir), ("ii", p.ii)] {
                    if !v.is_finite() {
                        return Err(schema(at(&format!(".pmu.{name}")), "must be finite"));
                    }
                }
                Device::Pmu(p)
            }
            DeviceKindFile::Rtu => {
                let r = d.rtu.ok_or_else(|| schema(at(".rtu"), "missing rtu block"))?;
                if !(r.gamma > 0.0) {
                    return Err(schema(at(".rtu.gamma"), "must be positive"));
                }
                if !(r.vm > 0.0) {
                    return Err(schema(at(".rtu.vm"), "must be positive"));
                }
                for (name, v) in [
                    ("sigma_vm_rel", r.sigma_vm_rel),
                    ("sigma_p_rel", r.sigma_p_rel),
                    ("sigma_q_rel", r.sigma_q_rel),
                ] {
                    if !(v >= 0.0) {
                        return Err(schema(at(&format!(".rtu.{name}")), "must be non-negative"));
                    }
                }
                if !r.p.is_finite() || !r.q.is_finite() {
                    return Err(schema(at(".rtu"), "p and q must be finite"));
                }
                Device::Rtu(r)
            }
        };
        slots[i] = Some(device);
    }
    let mut devices = Vec::with_capacity(n);
    for (i, slot) in slots.into_iter().enumerate() {
        match slot {
            Some(d) => devices.push(d),
            None => {
                return Err(schema(
                    "devices",
                    format!("bus {} has no device", file.grid.buses[i].id),
                ))
            }
        }
    }

    let truth = match file.truth {
        None => None,
        Some(t) => {
            if t.vr.len() != n {
                return Err(schema("truth.vr", format!("expected {n} entries")));
            }
            if t.vi.len() != n {
                return Err(schema("truth.vi", format!("expected {n} entries")));
            }
            Some((t.vr, t.vi))
        }
    };

    let mut grid = file.grid;
    if grid.name != file.case_name {
        grid.name = file.case_name;
    }
    Ok(SeCase {
        grid,
        devices,
        truth,
        seed: file.seed,
    })
}

pub fn save_se_case(se: &SeCase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, se_case_to_json(se)).map_err(|e| Error::io(path, e))
}

pub fn load_se_case(path: impl AsRef<Path>) -> Result<SeCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    se_case_from_json(&text)
}

// ---------------------------------------------------------------------------
// Results JSON
// ---------------------------------------------------------------------------

/// Estimator output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub vr: Vec<f64>,
    pub vi: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_ss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_max: Option<f64>,
}

/// Power-flow output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfResultsFile {
    pub vr: Vec<f64>,
    pub vi: Vec<f64>,
    pub iterations: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = "\
function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0  0 0 1 1.0  0 230 1 1.1 0.9;
  2 1 50 20 0 0 1 1.0  0 230 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 100 -100 1.0 100 1 200 0;
];
mpc.branch = [
  1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;
];
";

    #[test]
    fn parses_minimal_two_bus() {
        let c = parse_case(TWO_BUS).unwrap();
        assert_eq!(c.name, "two_bus");
        assert_eq!(c.buses.len(), 2);
        assert_eq!(c.branches.len(), 1);
        assert_eq!(c.buses[1].pd, 0.5);
        assert_eq!(c.buses[1].qd, 0.2);
        assert_eq!(c.branches[0].tap, 1.0);
        assert!(c.branches[0].in_service);
    }

    #[test]
    fn dangling_branch_is_validation_error() {
        let text = TWO_BUS.replace("1 2 0.01 0.1", "1 99 0.01 0.1");
        assert!(matches!(parse_case(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn nonpositive_base_is_validation_error() {
        let text = TWO_BUS.replace("baseMVA = 100", "baseMVA = 0");
        assert!(matches!(parse_case(&text), Err(Error::Validation(_))));
        let text = TWO_BUS.replace("baseMVA = 100", "baseMVA = -5");
        assert!(matches!(parse_case(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_cell_reports_line() {
        let text = TWO_BUS.replace("2 1 50 20", "2 1 fifty 20");
        match parse_case(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn short_rows_rejected() {
        let text = TWO_BUS.replace("1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;", "1 2 0.01 0.1;");
        let r = parse_case(&text);
        assert!(matches!(r, Err(Error::Parse { line: 12, .. })), "{r:?}");
    }

    #[test]
    fn unterminated_table() {
        let text = TWO_BUS.replace("];\nmpc.branch", "\nmpc.branch");
        assert!(parse_case(&text).is_err());
    }

    #[test]
    fn two_slacks_rejected() {
        let text = TWO_BUS.replace("2 1 50 20", "2 3 50 20");
        assert!(matches!(parse_case(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn ignores_extra_tables_and_comments() {
        let text = format!(
            "{TWO_BUS}\n% cost data\nmpc.gencost = [\n 2 0 0 3 0.1 20 0;\n];\nmpc.bus_name = {{\n 'A';\n 'B';\n}};\n"
        );
        let c = parse_case(&text).unwrap();
        assert_eq!(c.gens.len(), 1);
    }

    #[test]
    fn serialized_case_has_one_row_per_bus() {
        let c = parse_case(TWO_BUS).unwrap();
        let text = serialize_case(&c);
        let start = text.find("mpc.bus = [").unwrap();
        let end = start + text[start..].find("];").unwrap();
        let rows = text[start..end].lines().skip(1).count();
        assert_eq!(rows, 2);
    }

    #[test]
    fn empty_branch_table_round_trips() {
        let mut c = parse_case(TWO_BUS).unwrap();
        c.branches.clear();
        let back = parse_case(&serialize_case(&c)).unwrap();
        assert!(back.branches.is_empty());
        assert_eq!(back.buses.len(), 2);
    }

    #[test]
    fn degrees_converted_and_tap_normalized() {
        let text = TWO_BUS
            .replace("2 1 50 20 0 0 1 1.0  0", "2 1 50 20 0 0 1 1.0  -30")
            .replace("0 0 0 0 0 0 1 -360", "0 0 0 0 1.05 5 1 -360");
        let c = parse_case(&text).unwrap();
        assert!((c.buses[1].va_init + std::f64::consts::PI / 6.0).abs() < 1e-15);
        assert_eq!(c.branches[0].tap, 1.05);
        assert!((c.branches[0].shift - 5f64.to_radians()).abs() < 1e-15);
    }
}
