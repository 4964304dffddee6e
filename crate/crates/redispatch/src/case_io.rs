//! MATPOWER case file parsing, serialization, and the builtin catalog of
//! congestion-inducing case modifications.
//!
//! Only the case-struct subset of the format is supported: `mpc.baseMVA`,
//! `mpc.version` and the `mpc.bus` / `mpc.branch` / `mpc.gen` / `mpc.gencost`
//! matrices. Comments and arbitrary whitespace are tolerated; anything else
//! is reported with its line number.

use crate::grid_model::{Branch, Bus, BusKind, CostCurve, Generator, Network};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseIoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing required field mpc.{0}")]
    MissingField(&'static str),
    #[error("line {line}: row has {got} columns, expected at least {expected}")]
    RowArity {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("generator {index} references unknown bus {bus}")]
    UnknownGenBus { index: usize, bus: usize },
    #[error("branch {index} references unknown bus {bus}")]
    UnknownBranchBus { index: usize, bus: usize },
    #[error("bus {bus} has unsupported type code {code}")]
    BadBusType { bus: usize, code: i64 },
    #[error("gencost row {index}: piecewise-linear costs are not supported")]
    PiecewiseCost { index: usize },
    #[error("gencost row {index}: cannot interpret {n} cost coefficients")]
    BadCostArity { index: usize, n: usize },
    #[error("modification references missing {kind} {index}")]
    MissingElement { kind: &'static str, index: usize },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

struct Matrix {
    rows: Vec<Vec<f64>>,
    line_numbers: Vec<usize>,
}

/// Extract `mpc.<name> = [ ... ];` matrices and scalar assignments.
fn scan_case_text(text: &str) -> Result<(Option<f64>, Vec<(String, Matrix)>), CaseIoError> {
    let mut base_mva = None;
    let mut matrices = Vec::new();
    let mut lines = text.lines().enumerate().peekable();

    while let Some((ln, raw)) = lines.next() {
        let line = strip_comment(raw).trim().to_string();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("mpc.baseMVA") {
            let rest = rest.trim_start().strip_prefix('=').ok_or_else(|| parse_err(ln, "expected '=' after mpc.baseMVA"))?;
            let value = rest.trim().trim_end_matches(';').trim();
            base_mva = Some(value.parse::<f64>().map_err(|_| parse_err(ln, &format!("bad baseMVA value '{value}'")))?);
            continue;
        }
        if let Some(name_part) = line.strip_prefix("mpc.") {
            if let Some(eq_pos) = name_part.find('=') {
                let name = name_part[..eq_pos].trim().to_string();
                let after_eq = name_part[eq_pos + 1..].trim();
                if after_eq.starts_with('[') {
                    // matrix block, possibly spanning lines
                    let mut rows = Vec::new();
                    let mut line_numbers = Vec::new();
                    let mut buf = after_eq[1..].to_string();
                    let mut buf_line = ln;
                    loop {
                        let body = strip_comment(&buf);
                        let closed = body.contains(']');
                        let content = body.split(']').next().unwrap_or("");
                        for row_text in content.split(';') {
                            let row_text = row_text.trim();
                            if row_text.is_empty() {
                                continue;
                            }
                            let mut row = Vec::new();
                            for tok in row_text.split_whitespace() {
                                let v = tok.parse::<f64>().map_err(|_| {
                                    parse_err(buf_line, &format!("bad numeric token '{tok}'"))
                                })?;
                                row.push(v);
                            }
                            if !row.is_empty() {
                                rows.push(row);
                                line_numbers.push(buf_line + 1);
                            }
                        }
                        if closed {
                            break;
                        }
                        match lines.next() {
                            Some((ln2, raw2)) => {
                                buf = raw2.to_string();
                                buf_line = ln2;
                            }
                            None => {
                                return Err(parse_err(ln, &format!("unterminated matrix mpc.{name}")));
                            }
                        }
                    }
                    matrices.push((name, Matrix { rows, line_numbers }));
                }
                // scalar or string assignments other than baseMVA are tolerated and ignored
            }
        }
    }
    Ok((base_mva, matrices))
}

fn strip_comment(s: &str) -> &str {
    match s.find('%') {
        Some(p) => &s[..p],
        None => s,
    }
}

fn parse_err(line_zero_based: usize, message: &str) -> CaseIoError {
    CaseIoError::Parse {
        line: line_zero_based + 1,
        message: message.to_string(),
    }
}

/// Parse MATPOWER case text into a network.
pub fn parse_matpower_case(text: &str) -> Result<Network, CaseIoError> {
    let (base_mva, matrices) = scan_case_text(text)?;
    let base_mva = base_mva.ok_or(CaseIoError::MissingField("baseMVA"))?;
    let find = |name: &str| matrices.iter().find(|(n, _)| n == name).map(|(_, m)| m);
    let bus_m = find("bus").ok_or(CaseIoError::MissingField("bus"))?;
    let gen_m = find("gen").ok_or(CaseIoError::MissingField("gen"))?;
    let branch_m = find("branch").ok_or(CaseIoError::MissingField("branch"))?;
    let gencost_m = find("gencost");

    let mut buses = Vec::with_capacity(bus_m.rows.len());
    for (row, &line) in bus_m.rows.iter().zip(&bus_m.line_numbers) {
        if row.len() < 13 {
            return Err(CaseIoError::RowArity {
                line,
                expected: 13,
                got: row.len(),
            });
        }
        let id = row[0] as usize;
        let kind = match row[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            code => return Err(CaseIoError::BadBusType { bus: id, code }),
        };
        buses.push(Bus {
            id,
            kind,
            p_load_mw: row[2],
            q_load_mvar: row[3],
            gs_mw: row[4],
            bs_mvar: row[5],
            area: row[6] as usize,
            vm: row[7],
            va_deg: row[8],
            base_kv: row[9],
            zone: row[10] as usize,
            v_max: row[11],
            v_min: row[12],
        });
    }

    let mut generators = Vec::with_capacity(gen_m.rows.len());
    for (row, &line) in gen_m.rows.iter().zip(&gen_m.line_numbers) {
        if row.len() < 10 {
            return Err(CaseIoError::RowArity {
                line,
                expected: 10,
                got: row.len(),
            });
        }
        let mut extra = row[10..].to_vec();
        extra.resize(11, 0.0);
        generators.push(Generator {
            bus: row[0] as usize,
            p_mw: row[1],
            q_mvar: row[2],
            q_max_mvar: row[3],
            q_min_mvar: row[4],
            v_setpoint: row[5],
            m_base: row[6],
            in_service: row[7] != 0.0,
            p_max_mw: row[8],
            p_min_mw: row[9],
            extra,
        });
    }

    let mut branches = Vec::with_capacity(branch_m.rows.len());
    for (row, &line) in branch_m.rows.iter().zip(&branch_m.line_numbers) {
        if row.len() < 11 {
            return Err(CaseIoError::RowArity {
                line,
                expected: 11,
                got: row.len(),
            });
        }
        branches.push(Branch {
            from_bus: row[0] as usize,
            to_bus: row[1] as usize,
            resistance: row[2],
            reactance: row[3],
            charging: row[4],
            s_limit_mva: row[5],
            rate_b: row[6],
            rate_c: row[7],
            tap_ratio: row[8],
            phase_shift_deg: row[9],
            in_service: row[10] != 0.0,
            ang_min: row.get(11).copied().unwrap_or(-360.0),
            ang_max: row.get(12).copied().unwrap_or(360.0),
        });
    }

    let mut costs = Vec::new();
    if let Some(m) = gencost_m {
        for (index, row) in m.rows.iter().enumerate() {
            if row.len() < 4 {
                return Err(CaseIoError::BadCostArity {
                    index,
                    n: row.len(),
                });
            }
            let model = row[0] as i64;
            if model == 1 {
                return Err(CaseIoError::PiecewiseCost { index });
            }
            let n = row[3] as usize;
            let coeffs = &row[4..];
            if coeffs.len() < n {
                return Err(CaseIoError::BadCostArity { index, n });
            }
            let (a, b, c) = match n {
                3 => (coeffs[0], coeffs[1], coeffs[2]),
                2 => (0.0, coeffs[0], coeffs[1]),
                1 => (0.0, 0.0, coeffs[0]),
                _ => return Err(CaseIoError::BadCostArity { index, n }),
            };
            costs.push(CostCurve {
                a,
                b,
                c,
                startup: row[1],
                shutdown: row[2],
            });
        }
    }
    // PF-only files may omit gencost; zero curves keep the OPF well defined
    while costs.len() < generators.len() {
        costs.push(CostCurve {
            a: 0.0,
            b: 0.0,
            c: 0.0,
            startup: 0.0,
            shutdown: 0.0,
        });
    }

    let net = Network::new(base_mva, buses, branches, generators, costs);
    for (index, gen) in net.generators.iter().enumerate() {
        if net.bus_index(gen.bus).is_none() {
            return Err(CaseIoError::UnknownGenBus {
                index,
                bus: gen.bus,
            });
        }
    }
    for (index, br) in net.branches.iter().enumerate() {
        for bus in [br.from_bus, br.to_bus] {
            if net.bus_index(bus).is_none() {
                return Err(CaseIoError::UnknownBranchBus { index, bus });
            }
        }
    }
    Ok(net)
}

fn fmt(v: f64) -> String {
    // shortest round-trip formatting keeps serialize -> parse lossless
    format!("{}", v)
}

/// Serialize a network back to MATPOWER case text.
pub fn serialize_case(net: &Network) -> String {
    let mut out = String::new();
    out.push_str("function mpc = case\n");
    out.push_str("mpc.version = '2';\n\n");
    out.push_str(&format!("mpc.baseMVA = {};\n\n", fmt(net.base_mva)));

    out.push_str("%% bus data\n");
    out.push_str("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n");
    out.push_str("mpc.bus = [\n");
    for b in &net.buses {
        let kind = match b.kind {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        };
        out.push_str(&format!(
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};\n",
            b.id,
            kind,
            fmt(b.p_load_mw),
            fmt(b.q_load_mvar),
            fmt(b.gs_mw),
            fmt(b.bs_mvar),
            b.area,
            fmt(b.vm),
            fmt(b.va_deg),
            fmt(b.base_kv),
            b.zone,
            fmt(b.v_max),
            fmt(b.v_min),
        ));
    }
    out.push_str("];\n\n");

    out.push_str("%% generator data\n");
    out.push_str("mpc.gen = [\n");
    for g in &net.generators {
        let mut extra = g.extra.clone();
        extra.resize(11, 0.0);
        out.push_str(&format!(
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};\n",
            g.bus,
            fmt(g.p_mw),
            fmt(g.q_mvar),
            fmt(g.q_max_mvar),
            fmt(g.q_min_mvar),
            fmt(g.v_setpoint),
            fmt(g.m_base),
            if g.in_service { 1 } else { 0 },
            fmt(g.p_max_mw),
            fmt(g.p_min_mw),
            extra
                .iter()
                .map(|v| fmt(*v))
                .collect::<Vec<_>>()
                .join("\t"),
        ));
    }
    out.push_str("];\n\n");

    out.push_str("%% branch data\n");
    out.push_str("mpc.branch = [\n");
    for br in &net.branches {
        out.push_str(&format!(
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};\n",
            br.from_bus,
            br.to_bus,
            fmt(br.resistance),
            fmt(br.reactance),
            fmt(br.charging),
            fmt(br.s_limit_mva),
            fmt(br.rate_b),
            fmt(br.rate_c),
            fmt(br.tap_ratio),
            fmt(br.phase_shift_deg),
            if br.in_service { 1 } else { 0 },
            fmt(br.ang_min),
            fmt(br.ang_max),
        ));
    }
    out.push_str("];\n\n");

    out.push_str("%% generator cost data\n");
    out.push_str("mpc.gencost = [\n");
    for c in &net.costs {
        out.push_str(&format!(
            "\t2\t{}\t{}\t3\t{}\t{}\t{};\n",
            fmt(c.startup),
            fmt(c.shutdown),
            fmt(c.a),
            fmt(c.b),
            fmt(c.c),
        ));
    }
    out.push_str("];\n");
    out
}

/// JSON mirror of the network for tooling.
pub fn network_to_json(net: &Network) -> Result<String, CaseIoError> {
    Ok(serde_json::to_string_pretty(net)?)
}

pub fn network_from_json(text: &str) -> Result<Network, CaseIoError> {
    let mut net: Network = serde_json::from_str(text)?;
    net.reindex();
    Ok(net)
}

/// One edit of a case modification. Line and generator indices are 1-based
/// row numbers of the corresponding matrices, following the MATPOWER habit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CaseEdit {
    SetBranchLimit { line: usize, mva: f64 },
    SetAllBranchLimits { mva: f64 },
    ScaleBranchLimits { factor: f64 },
    SetGenCost { gen: usize, a: f64, b: f64, c: f64 },
    SetGenDispatch { gen: usize, p_mw: f64, q_mvar: f64 },
    SetGenPBounds { gen: usize, p_min_mw: f64, p_max_mw: f64 },
    SetGenVoltage { gen: usize, v_setpoint: f64 },
    MoveLoad { from_bus: usize, to_bus: usize },
    MoveGen { gen: usize, to_bus: usize },
}

/// Reproducible set of edits that turns a stock case into the congested
/// variant under study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseModification {
    pub case_name: String,
    pub edits: Vec<CaseEdit>,
}

/// Apply a modification, returning the edited copy. The input is untouched.
pub fn apply_modifications(
    net: &Network,
    modification: &CaseModification,
) -> Result<Network, CaseIoError> {
    let mut out = net.clone();
    for edit in &modification.edits {
        match *edit {
            CaseEdit::SetBranchLimit { line, mva } => {
                let idx = line
                    .checked_sub(1)
                    .filter(|&i| i < out.branches.len())
                    .ok_or(CaseIoError::MissingElement {
                        kind: "branch",
                        index: line,
                    })?;
                out.branches[idx].s_limit_mva = mva;
            }
            CaseEdit::SetAllBranchLimits { mva } => {
                for br in &mut out.branches {
                    br.s_limit_mva = mva;
                }
            }
            CaseEdit::ScaleBranchLimits { factor } => {
                for br in &mut out.branches {
                    if br.s_limit_mva > 0.0 {
                        br.s_limit_mva *= factor;
                    }
                }
            }
            CaseEdit::SetGenCost { gen, a, b, c } => {
                let idx = gen
                    .checked_sub(1)
                    .filter(|&i| i < out.costs.len())
                    .ok_or(CaseIoError::MissingElement {
                        kind: "generator cost",
                        index: gen,
                    })?;
                out.costs[idx].a = a;
                out.costs[idx].b = b;
                out.costs[idx].c = c;
            }
            CaseEdit::SetGenDispatch { gen, p_mw, q_mvar } => {
                let idx = gen
                    .checked_sub(1)
                    .filter(|&i| i < out.generators.len())
                    .ok_or(CaseIoError::MissingElement {
                        kind: "generator",
                        index: gen,
                    })?;
                out.generators[idx].p_mw = p_mw;
                out.generators[idx].q_mvar = q_mvar;
            }
            CaseEdit::SetGenPBounds {
                gen,
                p_min_mw,
                p_max_mw,
            } => {
                let idx = gen
                    .checked_sub(1)
                    .filter(|&i| i < out.generators.len())
                    .ok_or(CaseIoError::MissingElement {
                        kind: "generator",
                        index: gen,
                    })?;
                out.generators[idx].p_min_mw = p_min_mw;
                out.generators[idx].p_max_mw = p_max_mw;
            }
            CaseEdit::SetGenVoltage { gen, v_setpoint } => {
                let idx = gen
                    .checked_sub(1)
                    .filter(|&i| i < out.generators.len())
                    .ok_or(CaseIoError::MissingElement {
                        kind: "generator",
                        index: gen,
                    })?;
                out.generators[idx].v_setpoint = v_setpoint;
            }
            CaseEdit::MoveLoad { from_bus, to_bus } => {
                let from = net
                    .bus_index(from_bus)
                    .ok_or(CaseIoError::MissingElement {
                        kind: "bus",
                        index: from_bus,
                    })?;
                let to = net.bus_index(to_bus).ok_or(CaseIoError::MissingElement {
                    kind: "bus",
                    index: to_bus,
                })?;
                let (p, q) = (out.buses[from].p_load_mw, out.buses[from].q_load_mvar);
                out.buses[from].p_load_mw = 0.0;
                out.buses[from].q_load_mvar = 0.0;
                out.buses[to].p_load_mw += p;
                out.buses[to].q_load_mvar += q;
            }
            CaseEdit::MoveGen { gen, to_bus } => {
                let idx = gen
                    .checked_sub(1)
                    .filter(|&i| i < out.generators.len())
                    .ok_or(CaseIoError::MissingElement {
                        kind: "generator",
                        index: gen,
                    })?;
                if net.bus_index(to_bus).is_none() {
                    return Err(CaseIoError::MissingElement {
                        kind: "bus",
                        index: to_bus,
                    });
                }
                out.generators[idx].bus = to_bus;
            }
        }
    }
    out.reindex();
    Ok(out)
}

/// The builtin modification catalog: one entry per studied case.
///
/// case9 rebuilds the three generators as zero-dispatch units with linear
/// costs and adds the 70/40 MVA limits on lines 1 and 2; case39 adds limits
/// 100/90 on lines 1 and 4; case300 caps every line at 1000; case118 and
/// case1354 are unchanged; case793 scales all limits by 1.4; case2383 adds
/// six specific line limits.
pub fn builtin_catalog() -> Vec<CaseModification> {
    use CaseEdit::*;
    vec![
        CaseModification {
            case_name: "case9".into(),
            edits: vec![
                SetGenCost {
                    gen: 1,
                    a: 0.0,
                    b: 30.0,
                    c: 0.0,
                },
                SetGenCost {
                    gen: 2,
                    a: 0.0,
                    b: 25.0,
                    c: 0.0,
                },
                SetGenCost {
                    gen: 3,
                    a: 0.0,
                    b: 20.0,
                    c: 0.0,
                },
                SetGenDispatch {
                    gen: 1,
                    p_mw: 0.0,
                    q_mvar: 0.0,
                },
                SetGenDispatch {
                    gen: 2,
                    p_mw: 0.0,
                    q_mvar: 0.0,
                },
                SetGenDispatch {
                    gen: 3,
                    p_mw: 0.0,
                    q_mvar: 0.0,
                },
                SetGenPBounds {
                    gen: 1,
                    p_min_mw: 0.0,
                    p_max_mw: 300.0,
                },
                SetGenPBounds {
                    gen: 2,
                    p_min_mw: 0.0,
                    p_max_mw: 300.0,
                },
                SetGenPBounds {
                    gen: 3,
                    p_min_mw: 0.0,
                    p_max_mw: 300.0,
                },
                SetGenVoltage {
                    gen: 1,
                    v_setpoint: 1.04,
                },
                SetGenVoltage {
                    gen: 2,
                    v_setpoint: 1.025,
                },
                SetGenVoltage {
                    gen: 3,
                    v_setpoint: 1.025,
                },
                SetBranchLimit {
                    line: 1,
                    mva: 70.0,
                },
                SetBranchLimit {
                    line: 2,
                    mva: 40.0,
                },
            ],
        },
        CaseModification {
            case_name: "case39".into(),
            edits: vec![
                SetBranchLimit {
                    line: 1,
                    mva: 100.0,
                },
                SetBranchLimit {
                    line: 4,
                    mva: 90.0,
                },
            ],
        },
        CaseModification {
            case_name: "case118".into(),
            edits: vec![],
        },
        CaseModification {
            case_name: "case300".into(),
            edits: vec![SetAllBranchLimits { mva: 1000.0 }],
        },
        CaseModification {
            case_name: "case793".into(),
            edits: vec![ScaleBranchLimits { factor: 1.4 }],
        },
        CaseModification {
            case_name: "case1354".into(),
            edits: vec![],
        },
        CaseModification {
            case_name: "case2383".into(),
            edits: vec![
                SetBranchLimit {
                    line: 24,
                    mva: 100.0,
                },
                SetBranchLimit {
                    line: 169,
                    mva: 200.0,
                },
                SetBranchLimit {
                    line: 292,
                    mva: 200.0,
                },
                SetBranchLimit {
                    line: 321,
                    mva: 100.0,
                },
                SetBranchLimit {
                    line: 322,
                    mva: 10.0,
                },
                SetBranchLimit {
                    line: 1381,
                    mva: 10.0,
                },
            ],
        },
    ]
}

/// Catalog lookup by case name.
pub fn catalog_lookup(case_name: &str) -> Option<CaseModification> {
    builtin_catalog()
        .into_iter()
        .find(|m| m.case_name == case_name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{data_path, load_case};

    const TWO_BUS: &str = "\
function mpc = twobus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;
\t2\t1\t50\t10\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t50\t0\t50\t-50\t1\t100\t1\t100\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0.02\t80\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t2\t10\t0;
];
";

    #[test]
    fn minimal_two_bus_case_parses() {
        let net = parse_matpower_case(TWO_BUS).unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.n_branches(), 1);
        assert_eq!(net.n_generators(), 1);
        assert_eq!(net.base_mva, 100.0);
        assert_eq!(net.costs[0].b, 10.0);
        assert_eq!(net.branches[0].s_limit_mva, 80.0);
        net.validate().unwrap();
    }

    #[test]
    fn case9_has_nine_buses_and_nine_lines() {
        let net = load_case("case9");
        assert_eq!(net.n_buses(), 9);
        assert_eq!(net.n_branches(), 9);
    }

    #[test]
    fn parse_serialize_parse_is_a_fixpoint() {
        for name in ["case9", "case39", "case118"] {
            let text = std::fs::read_to_string(data_path(&format!("{name}.m"))).unwrap();
            let first = parse_matpower_case(&text).unwrap();
            let second = parse_matpower_case(&serialize_case(&first)).unwrap();
            assert_eq!(first, second, "{name} round trip");
            // and the serialized form itself is stable
            let third = parse_matpower_case(&serialize_case(&second)).unwrap();
            assert_eq!(second, third, "{name} second round trip");
        }
    }

    #[test]
    fn two_bus_round_trip() {
        let first = parse_matpower_case(TWO_BUS).unwrap();
        let second = parse_matpower_case(&serialize_case(&first)).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn json_mirror_round_trips() {
        let net = load_case("case9");
        let json = network_to_json(&net).unwrap();
        let back = network_from_json(&json).unwrap();
        assert_eq!(net, back);
        assert_eq!(back.bus_index(5), net.bus_index(5));
    }

    #[test]
    fn malformed_input_reports_line_numbers() {
        let bad = TWO_BUS.replace("\t1\t2\t0.01", "\t1\t2\tbogus");
        match parse_matpower_case(&bad) {
            Err(CaseIoError::Parse { line, .. }) => assert!(line > 0),
            other => panic!("expected parse error, got {other:?}"),
        }

        let missing = TWO_BUS.replace("mpc.baseMVA = 100;", "");
        assert!(matches!(
            parse_matpower_case(&missing),
            Err(CaseIoError::MissingField("baseMVA"))
        ));

        let short_row = TWO_BUS.replace(
            "\t2\t1\t50\t10\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;",
            "\t2\t1\t50;",
        );
        match parse_matpower_case(&short_row) {
            Err(CaseIoError::RowArity { line, got, .. }) => {
                assert_eq!(got, 3);
                assert!(line > 0);
            }
            other => panic!("expected row arity error, got {other:?}"),
        }

        let bad_gen_bus = TWO_BUS.replace(
            "\t1\t50\t0\t50\t-50\t1\t100\t1\t100\t0;",
            "\t7\t50\t0\t50\t-50\t1\t100\t1\t100\t0;",
        );
        assert!(matches!(
            parse_matpower_case(&bad_gen_bus),
            Err(CaseIoError::UnknownGenBus { bus: 7, .. })
        ));
    }

    #[test]
    fn empty_edit_list_is_identity() {
        let net = load_case("case9");
        let modified = apply_modifications(
            &net,
            &CaseModification {
                case_name: "case9".into(),
                edits: vec![],
            },
        )
        .unwrap();
        assert_eq!(net, modified);
    }

    #[test]
    fn case39_limit_edits_change_only_their_lines() {
        let net = load_case("case39");
        let modification = catalog_lookup("case39").unwrap();
        let modified = apply_modifications(&net, &modification).unwrap();
        assert_eq!(modified.branches[0].s_limit_mva, 100.0);
        assert_eq!(modified.branches[3].s_limit_mva, 90.0);
        for (k, (a, b)) in net.branches.iter().zip(&modified.branches).enumerate() {
            if k == 0 || k == 3 {
                continue;
            }
            assert_eq!(a, b, "branch {k} must be untouched");
        }
        assert_eq!(net.buses, modified.buses);
        assert_eq!(net.generators, modified.generators);
    }

    #[test]
    fn scaling_limits_multiplies_every_nonzero_rating() {
        let net = load_case("case39");
        let modified = apply_modifications(
            &net,
            &CaseModification {
                case_name: "x".into(),
                edits: vec![CaseEdit::ScaleBranchLimits { factor: 1.4 }],
            },
        )
        .unwrap();
        for (a, b) in net.branches.iter().zip(&modified.branches) {
            if a.s_limit_mva > 0.0 {
                assert!((b.s_limit_mva - 1.4 * a.s_limit_mva).abs() < 1e-12);
            } else {
                assert_eq!(b.s_limit_mva, 0.0);
            }
        }
    }

    #[test]
    fn absolute_edits_are_idempotent() {
        let net = load_case("case9");
        let modification = catalog_lookup("case9").unwrap();
        let once = apply_modifications(&net, &modification).unwrap();
        let twice = apply_modifications(&once, &modification).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn edits_referencing_missing_elements_fail() {
        let net = load_case("case9");
        let err = apply_modifications(
            &net,
            &CaseModification {
                case_name: "x".into(),
                edits: vec![CaseEdit::SetBranchLimit {
                    line: 99,
                    mva: 10.0,
                }],
            },
        );
        assert!(matches!(
            err,
            Err(CaseIoError::MissingElement { kind: "branch", index: 99 })
        ));
    }

    #[test]
    fn move_load_preserves_totals() {
        let net = load_case("case9");
        let modified = apply_modifications(
            &net,
            &CaseModification {
                case_name: "x".into(),
                edits: vec![CaseEdit::MoveLoad {
                    from_bus: 5,
                    to_bus: 6,
                }],
            },
        )
        .unwrap();
        let before: f64 = net.buses.iter().map(|b| b.p_load_mw).sum();
        let after: f64 = modified.buses.iter().map(|b| b.p_load_mw).sum();
        assert_eq!(before, after);
        assert_eq!(modified.buses[4].p_load_mw, 0.0);
        assert_eq!(modified.buses[5].p_load_mw, 90.0);
    }

    #[test]
    fn catalog_covers_all_seven_cases() {
        let names: Vec<String> = builtin_catalog().into_iter().map(|m| m.case_name).collect();
        assert_eq!(
            names,
            vec!["case9", "case39", "case118", "case300", "case793", "case1354", "case2383"]
        );
    }

    #[test]
    fn catalog_case118_is_unchanged() {
        assert!(catalog_lookup("case118").unwrap().edits.is_empty());
    }

    #[test]
    fn catalog_case9_sets_the_player_limits() {
        let m = catalog_lookup("case9").unwrap();
        assert!(m.edits.contains(&CaseEdit::SetBranchLimit {
            line: 1,
            mva: 70.0
        }));
        assert!(m.edits.contains(&CaseEdit::SetBranchLimit {
            line: 2,
            mva: 40.0
        }));
    }

    #[test]
    fn catalog_case2383_has_six_limit_edits() {
        let m = catalog_lookup("case2383").unwrap();
        let limits: Vec<(usize, f64)> = m
            .edits
            .iter()
            .filter_map(|e| match e {
                CaseEdit::SetBranchLimit { line, mva } => Some((*line, *mva)),
                _ => None,
            })
            .collect();
        assert_eq!(
            limits,
            vec![
                (24, 100.0),
                (169, 200.0),
                (292, 200.0),
                (321, 100.0),
                (322, 10.0),
                (1381, 10.0)
            ]
        );
    }

    #[test]
    fn catalog_case793_scales_by_1_4() {
        let m = catalog_lookup("case793").unwrap();
        assert_eq!(
            m.edits,
            vec![CaseEdit::ScaleBranchLimits { factor: 1.4 }]
        );
    }

    #[test]
    fn catalog_case300_caps_every_line() {
        let m = catalog_lookup("case300").unwrap();
        assert_eq!(m.edits, vec![CaseEdit::SetAllBranchLimits { mva: 1000.0 }]);
    }
}
