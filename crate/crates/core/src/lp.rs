//! Single-level MIP export (pattern enumeration) in CPLEX LP text format,
//! a reader for the subset of LP syntax the exporter emits, and a brute-force
//! evaluator that solves small exported models directly from their text.
//!
//! Naming: `x_j_k` places facility slot `k` at site `j`; `y_i` marks customer
//! `i` covered before the attack; `yp_i_w` marks it covered under attack
//! pattern `w`; `zp` is the worst-case surviving coverage. All indices are
//! 0-based. Rows are named after the constraint family they belong to:
//! `assign_k` (each slot placed once), `colocate_j` (at most one slot per
//! site), `cover_i`, `postcover_w_i`, `worst_w` and the optional ordering
//! rows `order_k_s`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exact::{binomial, combinations, ExactCaps};
use crate::instance::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A linear model in maximization form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpModel {
    pub objective: Vec<(String, f64)>,
    pub rows: Vec<LpRow>,
    /// Explicit bounds `(lower, upper)`; unlisted variables default to `[0, +inf)`.
    pub bounds: BTreeMap<String, (f64, f64)>,
    pub binaries: Vec<String>,
}

impl LpModel {
    pub fn count_rows(&self, family: &str) -> usize {
        self.rows
            .iter()
            .filter(|r| r.name.split('_').next() == Some(family))
            .count()
    }

    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        out.push_str("Maximize\n");
        write_expr(&mut out, " obj:", &self.objective);
        out.push('\n');
        out.push_str("Subject To\n");
        for row in &self.rows {
            write_expr(&mut out, &format!(" {}:", row.name), &row.terms);
            let _ = writeln!(out, " {} {}", row.sense.as_str(), fmt_num(row.rhs));
        }
        out.push_str("Bounds\n");
        for (v, &(lo, hi)) in &self.bounds {
            if hi.is_infinite() {
                let _ = writeln!(out, " {v} >= {}", fmt_num(lo));
            } else {
                let _ = writeln!(out, " {} <= {v} <= {}", fmt_num(lo), fmt_num(hi));
            }
        }
        out.push_str("Binaries\n");
        for chunk in self.binaries.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
        out.push_str("End\n");
        out
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

// Expressions wrap every 8 terms; LP readers accept continuation lines.
fn write_expr(out: &mut String, head: &str, terms: &[(String, f64)]) {
    out.push_str(head);
    for (n, (v, c)) in terms.iter().enumerate() {
        if n > 0 && n % 8 == 0 {
            out.push_str("\n   ");
        }
        let sign = if *c < 0.0 { '-' } else { '+' };
        let mag = c.abs();
        if n == 0 && sign == '+' {
            out.push(' ');
        } else {
            let _ = write!(out, " {sign} ");
        }
        if mag != 1.0 {
            let _ = write!(out, "{} ", fmt_num(mag));
        }
        out.push_str(v);
    }
    if terms.is_empty() {
        out.push_str(" 0");
    }
}

/// Constraint-family sizes of an exported model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowCounts {
    pub assign: usize,
    pub colocate: usize,
    pub cover: usize,
    pub postcover: usize,
    pub worst: usize,
    pub order: usize,
}

impl RowCounts {
    /// Closed-form sizes: |K|, |J|, |I|, |Ω|·|I|, |Ω| and (p-1)·|J| when ordering is on.
    pub fn expected(inst: &Instance, symmetry_breaking: bool) -> Self {
        let (p, m, n) = (inst.p(), inst.num_sites(), inst.num_customers());
        let patterns = binomial(p, inst.r()) as usize;
        RowCounts {
            assign: p,
            colocate: m,
            cover: n,
            postcover: patterns * n,
            worst: patterns,
            order: if symmetry_breaking { p.saturating_sub(1) * m } else { 0 },
        }
    }

    pub fn of(model: &LpModel) -> Self {
        RowCounts {
            assign: model.count_rows("assign"),
            colocate: model.count_rows("colocate"),
            cover: model.count_rows("cover"),
            postcover: model.count_rows("postcover"),
            worst: model.count_rows("worst"),
            order: model.count_rows("order"),
        }
    }
}

/// The single-level reformulation: numbered facility slots and all C(p, r)
/// attack patterns over those slots.
#[derive(Debug, Clone)]
pub struct SingleLevelModel {
    pub slots: usize,
    pub patterns: Vec<Vec<usize>>,
    pub symmetry_breaking: bool,
    pub lp: LpModel,
}

impl SingleLevelModel {
    pub fn row_counts(&self) -> RowCounts {
        RowCounts::of(&self.lp)
    }

    pub fn to_lp_string(&self) -> String {
        self.lp.to_lp_string()
    }
}

fn x(j: usize, k: usize) -> String {
    format!("x_{j}_{k}")
}

pub fn export_single_level_lp(
    inst: &Instance,
    symmetry_breaking: bool,
    caps: &ExactCaps,
) -> Result<SingleLevelModel> {
    let (p, r, m, n) = (inst.p(), inst.r(), inst.num_sites(), inst.num_customers());
    let needed = binomial(p, r);
    if needed > caps.patterns {
        return Err(Error::ScaleTooLarge { needed, cap: caps.patterns });
    }
    let patterns: Vec<Vec<usize>> = combinations(p, r).collect();
    let mut lp = LpModel::default();

    lp.objective = (0..n).map(|i| (format!("y_{i}"), 1.0)).collect();
    lp.objective.push(("zp".into(), 1.0));

    for k in 0..p {
        lp.rows.push(LpRow {
            name: format!("assign_{k}"),
            terms: (0..m).map(|j| (x(j, k), 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    for j in 0..m {
        lp.rows.push(LpRow {
            name: format!("colocate_{j}"),
            terms: (0..p).map(|k| (x(j, k), 1.0)).collect(),
            sense: Sense::Le,
            rhs: 1.0,
        });
    }
    let ns = inst.neighbor_sets();
    for (i, cover) in ns.iter().enumerate() {
        let mut terms: Vec<(String, f64)> = (0..p)
            .flat_map(|k| cover.iter().map(move |&j| (x(j, k), 1.0)))
            .collect();
        terms.push((format!("y_{i}"), -1.0));
        lp.rows.push(LpRow { name: format!("cover_{i}"), terms, sense: Sense::Ge, rhs: 0.0 });
    }
    for (w, g) in patterns.iter().enumerate() {
        for (i, cover) in ns.iter().enumerate() {
            let mut terms: Vec<(String, f64)> = (0..p)
                .filter(|k| !g.contains(k))
                .flat_map(|k| cover.iter().map(move |&j| (x(j, k), 1.0)))
                .collect();
            terms.push((format!("yp_{i}_{w}"), -1.0));
            lp.rows.push(LpRow {
                name: format!("postcover_{w}_{i}"),
                terms,
                sense: Sense::Ge,
                rhs: 0.0,
            });
        }
    }
    for w in 0..patterns.len() {
        let mut terms: Vec<(String, f64)> = (0..n).map(|i| (format!("yp_{i}_{w}"), 1.0)).collect();
        terms.push(("zp".into(), -1.0));
        lp.rows.push(LpRow { name: format!("worst_{w}"), terms, sense: Sense::Ge, rhs: 0.0 });
    }
    if symmetry_breaking {
        for k in 0..p.saturating_sub(1) {
            for s in 0..m {
                let mut terms: Vec<(String, f64)> = (0..=s).map(|j| (x(j, k), 1.0)).collect();
                terms.extend((0..=s).map(|j| (x(j, k + 1), -1.0)));
                lp.rows.push(LpRow {
                    name: format!("order_{k}_{s}"),
                    terms,
                    sense: Sense::Ge,
                    rhs: 0.0,
                });
            }
        }
    }

    for i in 0..n {
        lp.bounds.insert(format!("y_{i}"), (0.0, 1.0));
        for w in 0..patterns.len() {
            lp.bounds.insert(format!("yp_{i}_{w}"), (0.0, 1.0));
        }
    }
    lp.bounds.insert("zp".into(), (0.0, f64::INFINITY));
    lp.binaries = (0..m).flat_map(|j| (0..p).map(move |k| x(j, k))).collect();

    Ok(SingleLevelModel { slots: p, patterns, symmetry_breaking, lp })
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    End,
}

/// Parse the LP subset written by [`LpModel::to_lp_string`].
pub fn parse_lp(text: &str) -> Result<LpModel> {
    let mut model = LpModel::default();
    let mut section = Section::None;
    let mut pending: Vec<String> = Vec::new();
    let mut pending_line = 0;

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let next = match line.to_ascii_lowercase().as_str() {
            "maximize" | "maximise" | "max" => Some(Section::Objective),
            "subject to" | "st" | "s.t." => Some(Section::Constraints),
            "bounds" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "end" => Some(Section::End),
            "minimize" | "minimise" | "min" => {
                return Err(Error::LpParse { line: line_no, msg: "only maximization models are supported".into() })
            }
            _ => None,
        };
        if let Some(s) = next {
            if !pending.is_empty() {
                flush(&mut model, section, &pending, pending_line)?;
                pending.clear();
            }
            section = s;
            continue;
        }
        match section {
            Section::Objective | Section::Constraints => {
                let toks: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                // a new row starts with `name:`
                if toks.first().is_some_and(|t| t.ends_with(':')) && !pending.is_empty() {
                    flush(&mut model, section, &pending, pending_line)?;
                    pending.clear();
                }
                if pending.is_empty() {
                    pending_line = line_no;
                }
                pending.extend(toks);
            }
            Section::Bounds => parse_bound(&mut model, line, line_no)?,
            Section::Binaries => model.binaries.extend(line.split_whitespace().map(str::to_string)),
            Section::None | Section::End => {
                return Err(Error::LpParse { line: line_no, msg: format!("unexpected content `{line}`") })
            }
        }
    }
    if !pending.is_empty() {
        flush(&mut model, section, &pending, pending_line)?;
    }
    if section != Section::End {
        return Err(Error::LpParse { line: text.lines().count(), msg: "missing End".into() });
    }
    Ok(model)
}

fn flush(model: &mut LpModel, section: Section, toks: &[String], line: usize) -> Result<()> {
    let err = |msg: &str| Error::LpParse { line, msg: msg.to_string() };
    let (name, body) = match toks.first() {
        Some(t) if t.ends_with(':') => (t.trim_end_matches(':').to_string(), &toks[1..]),
        _ => return Err(err("row without a name")),
    };
    match section {
        Section::Objective => {
            model.objective = parse_terms(body).map_err(|m| err(&m))?;
            Ok(())
        }
        Section::Constraints => {
            let pos = body
                .iter()
                .position(|t| matches!(t.as_str(), "<=" | ">=" | "="))
                .ok_or_else(|| err("constraint without a sense"))?;
            let sense = match body[pos].as_str() {
                "<=" => Sense::Le,
                ">=" => Sense::Ge,
                _ => Sense::Eq,
            };
            if body.len() != pos + 2 {
                return Err(err("constraint must end with a single right-hand side"));
            }
            let rhs: f64 = body[pos + 1].parse().map_err(|_| err("bad right-hand side"))?;
            let terms = parse_terms(&body[..pos]).map_err(|m| err(&m))?;
            model.rows.push(LpRow { name, terms, sense, rhs });
            Ok(())
        }
        _ => Err(err("expression outside objective or constraints")),
    }
}

fn parse_terms(toks: &[String]) -> std::result::Result<Vec<(String, f64)>, String> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for t in toks {
        match t.as_str() {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            _ => {
                if let Ok(v) = t.parse::<f64>() {
                    if coef.is_some() {
                        return Err(format!("two coefficients in a row near `{t}`"));
                    }
                    coef = Some(v);
                } else {
                    terms.push((t.clone(), sign * coef.take().unwrap_or(1.0)));
                    sign = 1.0;
                }
            }
        }
    }
    match coef {
        // a lone `0` marks an empty expression
        Some(c) if c == 0.0 && terms.is_empty() => Ok(terms),
        Some(_) => Err("dangling coefficient".into()),
        None => Ok(terms),
    }
}

fn parse_bound(model: &mut LpModel, line: &str, line_no: usize) -> Result<()> {
    let err = |msg: &str| Error::LpParse { line: line_no, msg: msg.to_string() };
    let toks: Vec<&str> = line.split_whitespace().collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad bound value"));
    match toks.as_slice() {
        [lo, "<=", v, "<=", hi] => {
            model.bounds.insert(v.to_string(), (num(lo)?, num(hi)?));
        }
        [v, ">=", lo] => {
            model.bounds.insert(v.to_string(), (num(lo)?, f64::INFINITY));
        }
        [v, "<=", hi] => {
            model.bounds.insert(v.to_string(), (0.0, num(hi)?));
        }
        _ => return Err(err("unsupported bound syntax")),
    }
    Ok(())
}

/// Optimum of a small exported model, computed from the model alone.
///
/// Enumerates every placement of the numbered slots on distinct sites (the
/// binary `x_j_k` variables), keeps placements that satisfy every row made of
/// binaries only, then pushes each continuous variable to its largest value
/// allowed by its bound and the rows that cap it. The models this handles have
/// nonnegative objective weights and cap each continuous variable only by sums
/// of other variables, so the pushed values are optimal for the fixed
/// placement.
pub fn brute_force_optimum(model: &LpModel) -> Result<f64> {
    let bad = |msg: String| Error::InvalidArgument(msg);
    let mut slot_of: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let (mut max_j, mut max_k) = (0, 0);
    for v in &model.binaries {
        let parts: Vec<&str> = v.split('_').collect();
        let (j, k) = match parts.as_slice() {
            ["x", j, k] => (
                j.parse::<usize>().map_err(|_| bad(format!("bad binary name {v}")))?,
                k.parse::<usize>().map_err(|_| bad(format!("bad binary name {v}")))?,
            ),
            _ => return Err(bad(format!("unexpected binary {v}"))),
        };
        max_j = max_j.max(j + 1);
        max_k = max_k.max(k + 1);
        slot_of.insert(v.clone(), (j, k));
    }
    let sites = max_j;
    let slots = if model.binaries.is_empty() { 0 } else { max_k };

    let is_binary = |v: &str| slot_of.contains_key(v);
    let binary_rows: Vec<&LpRow> = model.rows.iter().filter(|r| r.terms.iter().all(|(v, _)| is_binary(v))).collect();
    let mixed_rows: Vec<&LpRow> = model.rows.iter().filter(|r| !r.terms.iter().all(|(v, _)| is_binary(v))).collect();

    let mut continuous: Vec<String> = model
        .objective
        .iter()
        .map(|(v, _)| v.clone())
        .chain(mixed_rows.iter().flat_map(|r| r.terms.iter().map(|(v, _)| v.clone())))
        .filter(|v| !is_binary(v))
        .collect();
    continuous.sort();
    continuous.dedup();
    if model.objective.iter().any(|(_, c)| *c < 0.0) {
        return Err(bad("negative objective weight".into()));
    }
    // each mixed row must read `sum(nonneg terms) - capped >= rhs`
    let mut caps: Vec<(&LpRow, &str, f64)> = Vec::new();
    for row in &mixed_rows {
        let neg: Vec<&(String, f64)> = row.terms.iter().filter(|(_, c)| *c < 0.0).collect();
        match (row.sense, neg.as_slice()) {
            (Sense::Ge, [(v, c)]) if !is_binary(v) => caps.push((row, v.as_str(), -c)),
            _ => return Err(bad(format!("row {} is not a monotone cap row", row.name))),
        }
    }

    let mut best: Option<f64> = None;
    let mut assign = vec![0usize; slots];
    let mut used = vec![false; sites];
    let mut values: BTreeMap<&str, f64> = BTreeMap::new();

    fn place(
        k: usize,
        assign: &mut [usize],
        used: &mut [bool],
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if k == assign.len() {
            visit(assign);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                assign[k] = j;
                place(k + 1, assign, used, visit);
                used[j] = false;
            }
        }
    }

    let mut visit = |assign: &[usize]| {
        values.clear();
        for (name, &(j, k)) in &slot_of {
            values.insert(name.as_str(), if assign[k] == j { 1.0 } else { 0.0 });
        }
        let val = |values: &BTreeMap<&str, f64>, v: &str| values.get(v).copied();
        let satisfied = |row: &LpRow, values: &BTreeMap<&str, f64>| {
            let lhs: f64 = row.terms.iter().map(|(v, c)| c * val(values, v).unwrap_or(0.0)).sum();
            match row.sense {
                Sense::Le => lhs <= row.rhs + 1e-9,
                Sense::Ge => lhs >= row.rhs - 1e-9,
                Sense::Eq => (lhs - row.rhs).abs() <= 1e-9,
            }
        };
        if !binary_rows.iter().all(|r| satisfied(r, &values)) {
            return;
        }
        // resolve capped variables once all their inputs are known
        let mut cap_of: BTreeMap<&str, f64> = continuous
            .iter()
            .map(|v| (v.as_str(), model.bounds.get(v).map_or(f64::INFINITY, |b| b.1)))
            .collect();
        let mut pending: Vec<usize> = (0..caps.len()).collect();
        let mut unresolved: BTreeMap<&str, usize> = BTreeMap::new();
        for (_, v, _) in &caps {
            *unresolved.entry(v).or_default() += 1;
        }
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|&idx| {
                let (row, v, a) = caps[idx];
                let ready = row
                    .terms
                    .iter()
                    .filter(|(u, _)| u != v)
                    .all(|(u, _)| values.contains_key(u.as_str()));
                if !ready {
                    return true;
                }
                let rest: f64 = row
                    .terms
                    .iter()
                    .filter(|(u, _)| u != v)
                    .map(|(u, c)| c * values[u.as_str()])
                    .sum();
                let bound = (rest - row.rhs) / a;
                let e = cap_of.get_mut(v).expect("capped variable is continuous");
                *e = e.min(bound);
                let left = unresolved.get_mut(v).expect("counted");
                *left -= 1;
                if *left == 0 {
                    values.insert(v, *e);
                }
                false
            });
            if pending.len() == before {
                return; // cyclic caps cannot be resolved this way
            }
        }
        for v in &continuous {
            values.entry(v.as_str()).or_insert(cap_of[v.as_str()]);
        }
        for v in &continuous {
            let lo = model.bounds.get(v).map_or(0.0, |b| b.0);
            let x = values[v.as_str()];
            if !x.is_finite() || x < lo - 1e-9 {
                return;
            }
        }
        if !mixed_rows.iter().all(|r| satisfied(r, &values)) {
            return;
        }
        let obj: f64 = model.objective.iter().map(|(v, c)| c * values[v.as_str()]).sum();
        if best.is_none_or(|b| obj > b) {
            best = Some(obj);
        }
    };
    place(0, &mut assign, &mut used, &mut visit);
    best.ok_or_else(|| bad("model is infeasible".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_solve;
    use crate::instance::tests::t1;
    use crate::instance::GenSpec;

    #[test]
    fn t1_row_counts() {
        let inst = t1();
        let m = export_single_level_lp(&inst, false, &ExactCaps::default()).unwrap();
        assert_eq!(m.patterns.len(), 2);
        let c = m.row_counts();
        assert_eq!((c.assign, c.colocate, c.cover, c.postcover, c.worst, c.order), (2, 4, 4, 8, 2, 0));
        assert_eq!(c, RowCounts::expected(&inst, false));

        let m = export_single_level_lp(&inst, true, &ExactCaps::default()).unwrap();
        assert_eq!(m.row_counts().order, 4);
        assert_eq!(m.row_counts(), RowCounts::expected(&inst, true));
    }

    #[test]
    fn mclip20_pattern_count() {
        let inst = GenSpec::mclip20(3, 1).generate(0).unwrap();
        let m = export_single_level_lp(&inst, true, &ExactCaps::default()).unwrap();
        assert_eq!(m.patterns.len(), 4);
        assert_eq!(m.row_counts(), RowCounts::expected(&inst, true));
    }

    #[test]
    fn pattern_cap() {
        let inst = GenSpec::mclip100(3, 1).generate(0).unwrap();
        let caps = ExactCaps { patterns: 100, ..ExactCaps::default() };
        assert!(matches!(export_single_level_lp(&inst, true, &caps), Err(Error::ScaleTooLarge { .. })));
    }

    #[test]
    fn text_round_trips_through_reader() {
        for sym in [false, true] {
            let m = export_single_level_lp(&GenSpec::mclip20(8, 1).generate(0).unwrap(), sym, &ExactCaps::default()).unwrap();
            let text = m.to_lp_string();
            assert!(text.lines().all(|l| l.len() < 255));
            let back = parse_lp(&text).unwrap();
            assert_eq!(back, m.lp);
        }
    }

    #[test]
    fn t1_text_shape() {
        let text = export_single_level_lp(&t1(), true, &ExactCaps::default()).unwrap().to_lp_string();
        assert!(text.starts_with("Maximize\n obj: y_0 + y_1 + y_2 + y_3 + zp\n"));
        assert!(text.contains(" assign_0: x_0_0 + x_1_0 + x_2_0 + x_3_0 = 1\n"));
        assert!(text.contains(" cover_0: x_0_0 + x_1_0 + x_0_1 + x_1_1 - y_0 >= 0\n"));
        assert!(text.contains(" postcover_0_0: x_0_1 + x_1_1 - yp_0_0 >= 0\n"));
        assert!(text.contains(" order_0_1: x_0_0 + x_1_0 - x_0_1 - x_1_1 >= 0\n"));
        assert!(text.contains(" 0 <= yp_3_1 <= 1\n"));
        assert!(text.contains(" zp >= 0\n"));
        assert!(text.ends_with("End\n"));
    }

    #[test]
    fn reader_rejects_garbage() {
        assert!(parse_lp("Maximize\n obj: y_0\nSubject To\n c: y_0 >=\nEnd\n").is_err());
        assert!(parse_lp("Minimize\n obj: y\nEnd\n").is_err());
        assert!(parse_lp("Maximize\n obj: y\n").is_err());
        assert!(parse_lp("Maximize\n obj: y\nBounds\n y ?? 3\nEnd\n").is_err());
    }

    #[test]
    fn brute_force_matches_exact_on_t1() {
        let inst = t1();
        let (_, e) = exact_solve(&inst).unwrap();
        for sym in [false, true] {
            let text = export_single_level_lp(&inst, sym, &ExactCaps::default()).unwrap().to_lp_string();
            let opt = brute_force_optimum(&parse_lp(&text).unwrap()).unwrap();
            assert_eq!(opt, e.obj as f64);
        }
    }
}
