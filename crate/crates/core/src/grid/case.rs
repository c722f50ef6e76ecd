//! Reader for MATPOWER-style tabular case files.
//!
//! Recognised statements are `mpc.baseMVA = <x>;` and the matrix blocks
//! `mpc.bus`, `mpc.gen` and `mpc.branch`. Everything after `%` on a line is a
//! comment. Rows are terminated by `;` or a newline; columns are separated by
//! whitespace or commas.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// Bus number as written in the case file.
    pub id: usize,
    pub kind: BusKind,
    /// Active load, MW.
    pub p_load: f64,
    /// Reactive load, Mvar.
    pub q_load: f64,
    /// Shunt conductance, MW demanded at 1 p.u. voltage.
    pub g_shunt: f64,
    /// Shunt susceptance, Mvar injected at 1 p.u. voltage.
    pub b_shunt: f64,
    /// Scheduled generation, MW (sum over in-service generators).
    pub p_gen: f64,
    /// Voltage magnitude setpoint for slack and PV buses, p.u.
    pub v_setpoint: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Internal index of the from bus.
    pub from: usize,
    /// Internal index of the to bus.
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b: f64,
    /// Off-nominal tap ratio (1.0 for lines).
    pub tap: f64,
    /// Phase shift, degrees.
    pub shift_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
}

impl Network {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    /// Internal indices of all PQ buses, in file order.
    pub fn pq_buses(&self) -> Vec<usize> {
        self.buses_of(BusKind::Pq)
    }

    pub fn pv_buses(&self) -> Vec<usize> {
        self.buses_of(BusKind::Pv)
    }

    fn buses_of(&self, kind: BusKind) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    /// Internal index of the bus numbered `id` in the case file.
    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Copy of the network with `p_mw`/`q_mvar` added to the load at bus `idx`.
    pub fn with_extra_load(&self, idx: usize, p_mw: f64, q_mvar: f64) -> Network {
        let mut n = self.clone();
        n.buses[idx].p_load += p_mw;
        n.buses[idx].q_load += q_mvar;
        n
    }

    /// Checks the structural invariants: exactly one slack bus and a connected graph.
    pub fn check(&self) -> Result<()> {
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks == 0 {
            return Err(Error::Case("no slack bus".into()));
        }
        if slacks > 1 {
            return Err(Error::Case(format!("{slacks} slack buses, expected one")));
        }
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            adj[br.from].push(br.to);
            adj[br.to].push(br.from);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.slack()];
        seen[stack[0]] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        let isolated: Vec<usize> = (0..n).filter(|&i| !seen[i]).map(|i| self.buses[i].id).collect();
        if !isolated.is_empty() {
            return Err(Error::Case(format!(
                "network is not connected; isolated buses {isolated:?}"
            )));
        }
        Ok(())
    }
}

struct Row {
    line: usize,
    values: Vec<f64>,
}

pub fn read_case(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_case(&text)
}

pub fn parse_case(text: &str) -> Result<Network> {
    let mut base_mva = None;
    let mut blocks: HashMap<String, Vec<Row>> = HashMap::new();
    let mut current: Option<(String, Vec<Row>)> = None;

    let perr = |line: usize, message: String| Error::Parse {
        what: "case file".into(),
        line,
        message,
    };

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut rest = line;
        if current.is_none() {
            if let Some(stmt) = rest.strip_prefix("mpc.") {
                let (name, rhs) = stmt
                    .split_once('=')
                    .ok_or_else(|| perr(line_no, format!("expected assignment, got `{line}`")))?;
                let name = name.trim().to_string();
                let rhs = rhs.trim();
                if let Some(after) = rhs.strip_prefix('[') {
                    current = Some((name, Vec::new()));
                    rest = after;
                } else {
                    if name == "baseMVA" {
                        let v = rhs.trim_end_matches(';').trim();
                        base_mva = Some(v.parse::<f64>().map_err(|_| {
                            perr(line_no, format!("bad baseMVA value `{v}`"))
                        })?);
                    }
                    continue;
                }
            } else {
                // function header or other statements
                continue;
            }
        }
        if let Some((name, rows)) = current.as_mut() {
            let (body, closed) = match rest.find(']') {
                Some(pos) => (&rest[..pos], true),
                None => (rest, false),
            };
            for chunk in body.split(';') {
                let chunk = chunk.trim();
                if chunk.is_empty() {
                    continue;
                }
                let values = chunk
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| perr(line_no, format!("non-numeric entry `{t}` in mpc.{name}")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(Row { line: line_no, values });
            }
            if closed {
                let (name, rows) = current.take().unwrap();
                blocks.insert(name, rows);
            }
        }
    }
    if let Some((name, _)) = current {
        return Err(Error::Case(format!("unterminated matrix mpc.{name}")));
    }

    let base_mva = base_mva.ok_or_else(|| Error::Case("missing mpc.baseMVA".into()))?;
    if !(base_mva > 0.0) {
        return Err(Error::Case(format!("baseMVA must be positive, got {base_mva}")));
    }
    let bus_rows = blocks
        .remove("bus")
        .ok_or_else(|| Error::Case("missing mpc.bus".into()))?;
    let gen_rows = blocks.remove("gen").unwrap_or_default();
    let branch_rows = blocks
        .remove("branch")
        .ok_or_else(|| Error::Case("missing mpc.branch".into()))?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut vm_file = Vec::new();
    for row in &bus_rows {
        if row.values.len() < 13 {
            return Err(perr(
                row.line,
                format!("bus row has {} columns, expected 13", row.values.len()),
            ));
        }
        let v = &row.values;
        let id = as_id(v[0]).ok_or_else(|| perr(row.line, format!("bad bus number {}", v[0])))?;
        let kind = match v[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            4 => continue, // isolated, out of service
            t => return Err(perr(row.line, format!("unknown bus type {t}"))),
        };
        if index.insert(id, buses.len()).is_some() {
            return Err(perr(row.line, format!("duplicate bus number {id}")));
        }
        buses.push(Bus {
            id,
            kind,
            p_load: v[2],
            q_load: v[3],
            g_shunt: v[4],
            b_shunt: v[5],
            p_gen: 0.0,
            v_setpoint: v[7],
        });
        vm_file.push(v[7]);
    }

    let mut has_gen = vec![false; buses.len()];
    for row in &gen_rows {
        if row.values.len() < 8 {
            return Err(perr(
                row.line,
                format!("gen row has {} columns, expected at least 8", row.values.len()),
            ));
        }
        let v = &row.values;
        let id = as_id(v[0]).ok_or_else(|| perr(row.line, format!("bad bus number {}", v[0])))?;
        let i = *index
            .get(&id)
            .ok_or_else(|| perr(row.line, format!("generator references unknown bus {id}")))?;
        if v[7] <= 0.0 {
            continue;
        }
        buses[i].p_gen += v[1];
        if !has_gen[i] {
            buses[i].v_setpoint = v[5];
            has_gen[i] = true;
        }
    }
    // A PV bus without an in-service generator cannot hold its voltage.
    for (i, b) in buses.iter_mut().enumerate() {
        if b.kind == BusKind::Pv && !has_gen[i] {
            b.kind = BusKind::Pq;
            b.v_setpoint = vm_file[i];
        }
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in &branch_rows {
        if row.values.len() < 11 {
            return Err(perr(
                row.line,
                format!("branch row has {} columns, expected at least 11", row.values.len()),
            ));
        }
        let v = &row.values;
        if v[10] <= 0.0 {
            continue;
        }
        let lookup = |x: f64| -> Result<usize> {
            let id = as_id(x).ok_or_else(|| perr(row.line, format!("bad bus number {x}")))?;
            index
                .get(&id)
                .copied()
                .ok_or_else(|| perr(row.line, format!("branch references unknown bus {id}")))
        };
        let from = lookup(v[0])?;
        let to = lookup(v[1])?;
        let tap = if v[8] == 0.0 { 1.0 } else { v[8] };
        branches.push(Branch {
            from,
            to,
            r: v[2],
            x: v[3],
            b: v[4],
            tap,
            shift_deg: v[9],
        });
    }

    let net = Network {
        base_mva,
        buses,
        branches,
    };
    net.check()?;
    Ok(net)
}

fn as_id(x: f64) -> Option<usize> {
    if x >= 1.0 && x.fract() == 0.0 {
        Some(x as usize)
    } else {
        None
    }
}

/// Reads a `bus,vm,va_deg` CSV of solved voltages keyed by bus number.
pub fn read_solved_voltages(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.into(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(usize, f64, f64)>() {
        out.push(rec.map_err(|e| Error::Csv {
            path: path.into(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
