use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{Branch, Bus, BusKind, Generator, GridCase, Substation, SubstationId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Bus,
    Branch,
    Gen,
    Substation,
}

/// Reads and validates a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<GridCase> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let case = parse_case(&text)?;
    let violations = super::validate(&case);
    if !violations.is_empty() {
        return Err(Error::Invalid(
            violations.iter().map(ToString::to_string).collect(),
        ));
    }
    Ok(case)
}

/// Parses case text without validating it.
pub fn parse_case(text: &str) -> Result<GridCase> {
    let mut section = Section::Preamble;
    let mut base_mva = 100.0;
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut generators = Vec::new();
    let mut substations = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[BUS]" => Section::Bus,
                "[BRANCH]" => Section::Branch,
                "[GEN]" => Section::Gen,
                "[SUBSTATION]" => Section::Substation,
                other => return Err(parse_err(line_no, format!("unknown section {other}"))),
            };
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let row = Row {
            cols: &cols,
            line: line_no,
        };
        match section {
            Section::Preamble => {
                if cols.len() == 2 && cols[0] == "base_mva" {
                    base_mva = row.num(1, "base_mva")?;
                } else {
                    return Err(parse_err(line_no, "data outside of a section"));
                }
            }
            Section::Bus => {
                row.arity(7, 9)?;
                buses.push(Bus {
                    id: row.num(0, "bus id")?,
                    kind: row.kind(1)?,
                    vm: row.num(2, "vm")?,
                    va: row.num(3, "va")?,
                    base_kv: row.num(4, "base_kv")?,
                    load_p: row.num(5, "load_p")?,
                    load_q: row.num(6, "load_q")?,
                    shunt_g: row.opt_num(7, "shunt_g")?.unwrap_or(0.0),
                    shunt_b: row.opt_num(8, "shunt_b")?.unwrap_or(0.0),
                });
            }
            Section::Branch => {
                row.arity(9, 9)?;
                branches.push(Branch {
                    from: row.num(0, "from bus")?,
                    to: row.num(1, "to bus")?,
                    r: row.num(2, "r")?,
                    x: row.num(3, "x")?,
                    b: row.num(4, "b")?,
                    rating: row.num(5, "rating")?,
                    tap: row.num(6, "tap")?,
                    is_transformer: row.flag(7)?,
                    in_service: row.flag(8)?,
                });
            }
            Section::Gen => {
                row.arity(8, 9)?;
                let p: f64 = row.num(1, "p")?;
                let mva_base: f64 = row.num(6, "mva_base")?;
                generators.push(Generator {
                    bus: row.num(0, "bus")?,
                    p,
                    q: row.num(2, "q")?,
                    q_min: row.num(3, "q_min")?,
                    q_max: row.num(4, "q_max")?,
                    v_set: row.num(5, "v_set")?,
                    mva_base,
                    is_condenser: row.flag(7)?,
                    p_max: row.opt_num(8, "p_max")?.unwrap_or(mva_base.max(p)),
                });
            }
            Section::Substation => {
                row.arity(2, usize::MAX)?;
                let id = SubstationId(row.num(0, "substation id")?);
                let buses = (1..cols.len())
                    .map(|i| row.num(i, "member bus"))
                    .collect::<Result<Vec<_>>>()?;
                substations.push(Substation { id, buses });
            }
        }
    }

    Ok(GridCase::new(
        base_mva,
        buses,
        branches,
        generators,
        substations,
    ))
}

/// Renders a case in the native text format.
pub fn write_case(case: &GridCase) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "base_mva {}", case.base_mva());
    out.push_str("\n[BUS]\n# id kind vm va_rad base_kv load_mw load_mvar shunt_mw shunt_mvar\n");
    for b in case.buses() {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            b.id,
            b.kind.as_str(),
            b.vm,
            b.va,
            b.base_kv,
            b.load_p,
            b.load_q,
            b.shunt_g,
            b.shunt_b
        );
    }
    out.push_str("\n[BRANCH]\n# from to r x b rating_mva tap transformer in_service\n");
    for br in case.branches() {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            br.from,
            br.to,
            br.r,
            br.x,
            br.b,
            br.rating,
            br.tap,
            u8::from(br.is_transformer),
            u8::from(br.in_service)
        );
    }
    out.push_str("\n[GEN]\n# bus p_mw q_mvar q_min q_max v_set mva_base condenser p_max\n");
    for g in case.generators() {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            g.bus,
            g.p,
            g.q,
            g.q_min,
            g.q_max,
            g.v_set,
            g.mva_base,
            u8::from(g.is_condenser),
            g.p_max
        );
    }
    out.push_str("\n[SUBSTATION]\n");
    if !case.has_default_substations() {
        for s in case.substations() {
            let members: Vec<String> = s.buses.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "{} {}", s.id, members.join(" "));
        }
    }
    out
}

pub fn save_case(case: &GridCase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_case(case)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

struct Row<'a> {
    cols: &'a [&'a str],
    line: usize,
}

impl Row<'_> {
    fn arity(&self, min: usize, max: usize) -> Result<()> {
        let n = self.cols.len();
        if n < min || n > max {
            let expected = if min == max {
                format!("{min}")
            } else if max == usize::MAX {
                format!("at least {min}")
            } else {
                format!("{min} to {max}")
            };
            return Err(parse_err(
                self.line,
                format!("expected {expected} columns, found {n}"),
            ));
        }
        Ok(())
    }

    fn num<T: FromStr>(&self, i: usize, what: &str) -> Result<T> {
        self.cols[i]
            .parse()
            .map_err(|_| parse_err(self.line, format!("bad {what} {:?}", self.cols[i])))
    }

    fn opt_num<T: FromStr>(&self, i: usize, what: &str) -> Result<Option<T>> {
        if i < self.cols.len() {
            self.num(i, what).map(Some)
        } else {
            Ok(None)
        }
    }

    fn flag(&self, i: usize) -> Result<bool> {
        match self.cols[i] {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(parse_err(self.line, format!("expected 0 or 1, found {other:?}"))),
        }
    }

    fn kind(&self, i: usize) -> Result<BusKind> {
        match self.cols[i].to_ascii_uppercase().as_str() {
            "SLACK" | "REF" => Ok(BusKind::Slack),
            "PV" => Ok(BusKind::Pv),
            "PQ" => Ok(BusKind::Pq),
            other => Err(parse_err(self.line, format!("unknown bus kind {other:?}"))),
        }
    }
}
