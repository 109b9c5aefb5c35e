//! Dataset construction: synthetic generators driven by target rule ASTs,
//! grounding of relational fact bases into flat valuation tables, CSV
//! ingestion, and deterministic splitting.

mod tasks;

pub use tasks::{builtin_rule, builtin_task, BuiltinRule};

use crate::error::{Error, Result};
use crate::losses::VariableLayout;
use crate::rule_model::Example;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

/// A table of valuation rows with a fixed body-atom count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    m: usize,
    rows: Vec<Example>,
}

impl Dataset {
    pub fn new(m: usize) -> Self {
        Self { m, rows: Vec::new() }
    }

    pub fn from_rows(m: usize, rows: Vec<Example>) -> Result<Self> {
        for row in &rows {
            if row.valuations().len() != m {
                return Err(Error::ShapeMismatch {
                    context: "Dataset row width",
                    expected: m,
                    got: row.valuations().len(),
                });
            }
        }
        Ok(Self { m, rows })
    }

    pub fn push(&mut self, row: Example) -> Result<()> {
        if row.valuations().len() != self.m {
            return Err(Error::ShapeMismatch {
                context: "Dataset row width",
                expected: self.m,
                got: row.valuations().len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn atoms(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[Example] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positive_count(&self) -> usize {
        self.rows.iter().filter(|r| r.label() == 1).count()
    }
}

/// Polarity of a body literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negated,
}

/// One signed atom reference inside a rule AST.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstLiteral {
    pub atom: usize,
    pub polarity: Polarity,
}

impl AstLiteral {
    pub fn positive(atom: usize) -> Self {
        Self {
            atom,
            polarity: Polarity::Positive,
        }
    }

    pub fn negated(atom: usize) -> Self {
        Self {
            atom,
            polarity: Polarity::Negated,
        }
    }
}

/// A target rule: a disjunction of conjunctive subrules over signed atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleAst {
    subrules: Vec<Vec<AstLiteral>>,
    atoms: usize,
}

impl RuleAst {
    pub fn new(atoms: usize, subrules: Vec<Vec<AstLiteral>>) -> Result<Self> {
        if subrules.is_empty() {
            return Err(Error::EmptyInput("RuleAst subrules"));
        }
        for sub in &subrules {
            if sub.is_empty() {
                return Err(Error::EmptyInput("RuleAst subrule body"));
            }
            for lit in sub {
                if lit.atom >= atoms {
                    return Err(Error::ShapeMismatch {
                        context: "RuleAst atom index",
                        expected: atoms,
                        got: lit.atom,
                    });
                }
            }
        }
        Ok(Self { subrules, atoms })
    }

    pub fn subrules(&self) -> &[Vec<AstLiteral>] {
        &self.subrules
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    /// Canonical body of each subrule: atom indices paired with a negation
    /// flag, sorted by atom index. Useful for exact-recovery comparisons.
    pub fn canonical_subrules(&self) -> Vec<Vec<(usize, bool)>> {
        let mut out: Vec<Vec<(usize, bool)>> = self
            .subrules
            .iter()
            .map(|sub| {
                let mut body: Vec<(usize, bool)> = sub
                    .iter()
                    .map(|lit| (lit.atom, lit.polarity == Polarity::Negated))
                    .collect();
                body.sort_unstable();
                body
            })
            .collect();
        out.sort();
        out
    }
}

/// Crisp rule evaluation: a subrule fires when every positive literal has
/// valuation above 0.5 and every negated literal below 0.5.
pub fn eval_rule(ast: &RuleAst, valuations: &[f64]) -> u8 {
    let fired = ast.subrules.iter().any(|sub| {
        sub.iter().all(|lit| match lit.polarity {
            Polarity::Positive => valuations[lit.atom] > 0.5,
            Polarity::Negated => valuations[lit.atom] < 0.5,
        })
    });
    fired as u8
}

/// Draws `count` rows of i.i.d. Uniform(0,1) valuations labeled by `ast`,
/// then flips each label independently with probability `noise_fraction`.
///
/// The flip uniform is drawn for every row regardless of the noise level, so
/// a given seed produces identical valuations across noise settings.
pub fn gen_synthetic(
    m: usize,
    count: usize,
    ast: &RuleAst,
    noise_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::EmptyInput("gen_synthetic count"));
    }
    if m == 0 || ast.atoms() != m {
        return Err(Error::ShapeMismatch {
            context: "gen_synthetic atoms",
            expected: ast.atoms(),
            got: m,
        });
    }
    if !(0.0..0.5).contains(&noise_fraction) {
        return Err(Error::OutOfRange(
            "noise_fraction",
            "[0, 0.5)",
            noise_fraction,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let vals: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut label = eval_rule(ast, &vals);
        let flip: f64 = rng.gen_range(0.0..1.0);
        if flip < noise_fraction {
            label = 1 - label;
        }
        rows.push(Example::new(vals, label)?);
    }
    Dataset::from_rows(m, rows)
}

/// A body-atom template: predicate name plus the variables it mentions,
/// as indices into the schema's variable list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomTemplate {
    pub name: String,
    pub vars: Vec<usize>,
}

impl AtomTemplate {
    pub fn new(name: impl Into<String>, vars: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            vars,
        }
    }
}

/// The fixed relational signature of a task: variables, head atom, and the
/// candidate body-atom templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateSchema {
    variables: Vec<String>,
    head_name: String,
    head_args: Vec<usize>,
    atoms: Vec<AtomTemplate>,
}

impl PredicateSchema {
    pub fn new(
        variables: Vec<String>,
        head_name: impl Into<String>,
        head_args: Vec<usize>,
        atoms: Vec<AtomTemplate>,
    ) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyInput("PredicateSchema atoms"));
        }
        for &v in head_args.iter().chain(atoms.iter().flat_map(|a| &a.vars)) {
            if v >= variables.len() {
                return Err(Error::ShapeMismatch {
                    context: "PredicateSchema variable index",
                    expected: variables.len(),
                    got: v,
                });
            }
        }
        Ok(Self {
            variables,
            head_name: head_name.into(),
            head_args,
            atoms,
        })
    }

    /// A zero-arity schema with atoms named `b1..bm` and head `h`.
    pub fn propositional(m: usize) -> Self {
        Self {
            variables: Vec::new(),
            head_name: "h".to_string(),
            head_args: Vec::new(),
            atoms: (1..=m)
                .map(|j| AtomTemplate::new(format!("b{j}"), Vec::new()))
                .collect(),
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[AtomTemplate] {
        &self.atoms
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn head_name(&self) -> &str {
        &self.head_name
    }

    pub fn head_args(&self) -> &[usize] {
        &self.head_args
    }

    /// Head variables: those occurring in the head atom.
    pub fn head_vars(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.head_args.clone();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Auxiliary variables: all others.
    pub fn aux_vars(&self) -> Vec<usize> {
        let head: BTreeSet<usize> = self.head_args.iter().copied().collect();
        (0..self.variables.len())
            .filter(|k| !head.contains(k))
            .collect()
    }

    /// Variable-occurrence layout consumed by the syntactic losses.
    pub fn layout(&self) -> VariableLayout {
        let kc = self.variables.len();
        if kc == 0 {
            return VariableLayout::propositional(self.atoms.len());
        }
        let mut ind = vec![0u8; self.atoms.len() * kc];
        for (j, atom) in self.atoms.iter().enumerate() {
            for &v in &atom.vars {
                ind[j * kc + v] = 1;
            }
        }
        VariableLayout::new(self.atoms.len(), kc, ind, self.head_vars(), self.aux_vars())
            .expect("schema-derived layout is consistent")
    }
}

/// A ground atom: predicate name applied to constants.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundAtom {
    pub pred: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new(pred: impl Into<String>, args: &[&str]) -> Self {
        Self {
            pred: pred.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl std::fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.args.is_empty() {
            write!(f, "{}", self.pred)
        } else {
            write!(f, "{}({})", self.pred, self.args.join(","))
        }
    }
}

/// Ground facts plus labeled head examples over a constant domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FactBase {
    pub domain: Vec<String>,
    pub background: Vec<GroundAtom>,
    pub positive: Vec<GroundAtom>,
    pub negative: Vec<GroundAtom>,
}

impl FactBase {
    /// Parses the plain-text fact format: sections `#background`,
    /// `#positive`, `#negative`, `#domain`; one `pred(c1,c2).` per line
    /// (bare constants under `#domain`); `%` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(Clone, Copy, PartialEq)]
        enum Section {
            None,
            Background,
            Positive,
            Negative,
            Domain,
        }
        let mut section = Section::None;
        let mut out = FactBase {
            domain: Vec::new(),
            background: Vec::new(),
            positive: Vec::new(),
            negative: Vec::new(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                section = match header.trim() {
                    "background" => Section::Background,
                    "positive" => Section::Positive,
                    "negative" => Section::Negative,
                    "domain" => Section::Domain,
                    other => {
                        return Err(Error::Malformed {
                            line: lineno,
                            message: format!("unknown section `#{other}`"),
                        })
                    }
                };
                continue;
            }
            match section {
                Section::None => {
                    return Err(Error::Malformed {
                        line: lineno,
                        message: "content before any section header".to_string(),
                    })
                }
                Section::Domain => out.domain.push(line.trim_end_matches('.').to_string()),
                _ => {
                    let atom = parse_ground_atom(line, lineno)?;
                    match section {
                        Section::Background => out.background.push(atom),
                        Section::Positive => out.positive.push(atom),
                        Section::Negative => out.negative.push(atom),
                        _ => unreachable!(),
                    }
                }
            }
        }
        if out.domain.is_empty() {
            return Err(Error::EmptyInput("fact base #domain section"));
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("#domain\n");
        for c in &self.domain {
            let _ = writeln!(s, "{c}");
        }
        for (header, atoms) in [
            ("#background", &self.background),
            ("#positive", &self.positive),
            ("#negative", &self.negative),
        ] {
            let _ = writeln!(s, "{header}");
            for atom in atoms {
                let _ = writeln!(s, "{atom}.");
            }
        }
        s
    }
}

fn parse_ground_atom(line: &str, lineno: usize) -> Result<GroundAtom> {
    let body = line.trim_end_matches('.').trim();
    let open = body.find('(');
    match open {
        None => {
            if body.is_empty() {
                return Err(Error::Malformed {
                    line: lineno,
                    message: "empty atom".to_string(),
                });
            }
            Ok(GroundAtom {
                pred: body.to_string(),
                args: Vec::new(),
            })
        }
        Some(open) => {
            if !body.ends_with(')') {
                return Err(Error::Malformed {
                    line: lineno,
                    message: format!("missing closing parenthesis in `{body}`"),
                });
            }
            let pred = body[..open].trim();
            if pred.is_empty() {
                return Err(Error::Malformed {
                    line: lineno,
                    message: "missing predicate name".to_string(),
                });
            }
            let inner = &body[open + 1..body.len() - 1];
            let args: Vec<String> = inner
                .split(',')
                .map(|a| a.trim().to_string())
                .collect();
            if args.iter().any(|a| a.is_empty()) {
                return Err(Error::Malformed {
                    line: lineno,
                    message: format!("empty argument in `{body}`"),
                });
            }
            Ok(GroundAtom {
                pred: pred.to_string(),
                args,
            })
        }
    }
}

/// Grounds every labeled head example against every assignment of the
/// auxiliary variables over the domain, producing one crisp valuation row
/// per grounding.
///
/// Body atoms are valued 1 when the grounded atom occurs in the background
/// or among the positive head examples (which makes recursively defined
/// predicates usable as body atoms), 0 otherwise.
pub fn propositionalize(facts: &FactBase, schema: &PredicateSchema) -> Result<Dataset> {
    let domain_set: BTreeSet<&str> = facts.domain.iter().map(|s| s.as_str()).collect();
    let mut truth: BTreeSet<(&str, Vec<&str>)> = BTreeSet::new();
    for atom in facts.background.iter().chain(&facts.positive) {
        truth.insert((
            atom.pred.as_str(),
            atom.args.iter().map(|s| s.as_str()).collect(),
        ));
    }

    let kc = schema.variables().len();
    let aux = schema.aux_vars();
    let m = schema.atom_count();
    let mut data = Dataset::new(m);

    let examples = facts
        .positive
        .iter()
        .map(|a| (a, 1u8))
        .chain(facts.negative.iter().map(|a| (a, 0u8)));

    for (head, label) in examples {
        if head.pred != schema.head_name() {
            return Err(Error::Format {
                what: "head example",
                message: format!(
                    "predicate `{}` does not match schema head `{}`",
                    head.pred,
                    schema.head_name()
                ),
            });
        }
        if head.args.len() != schema.head_args().len() {
            return Err(Error::ShapeMismatch {
                context: "head example arity",
                expected: schema.head_args().len(),
                got: head.args.len(),
            });
        }
        for c in &head.args {
            if !domain_set.contains(c.as_str()) {
                return Err(Error::UnknownConstant(c.clone()));
            }
        }
        // Bind head variables from the example, then enumerate the rest.
        let mut binding: Vec<Option<&str>> = vec![None; kc];
        for (&var, constant) in schema.head_args().iter().zip(&head.args) {
            binding[var] = Some(constant.as_str());
        }
        let mut counters = vec![0usize; aux.len()];
        loop {
            for (slot, &var) in aux.iter().enumerate() {
                binding[var] = Some(facts.domain[counters[slot]].as_str());
            }
            let mut vals = Vec::with_capacity(m);
            for atom in schema.atoms() {
                let ground: Vec<&str> = atom
                    .vars
                    .iter()
                    .map(|&v| binding[v].expect("all variables bound"))
                    .collect();
                let hit = truth.contains(&(atom.name.as_str(), ground));
                vals.push(hit as u8 as f64);
            }
            data.push(Example::new(vals, label)?)?;

            // advance the aux-grounding odometer
            let mut slot = aux.len();
            loop {
                if slot == 0 {
                    break;
                }
                slot -= 1;
                counters[slot] += 1;
                if counters[slot] < facts.domain.len() {
                    break;
                }
                counters[slot] = 0;
            }
            if aux.is_empty() || (slot == 0 && counters[0] == 0) {
                break;
            }
        }
    }
    Ok(data)
}

/// Writes a dataset as CSV with header `b_1,...,b_m,label`. Floats use the
/// shortest representation that parses back to the identical value.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dataset.atoms()).map(|j| format!("b_{j}")).collect();
    header.push("label".to_string());
    writer
        .write_record(&header)
        .map_err(|e| csv_error("header", 1, e))?;
    for (idx, row) in dataset.rows().iter().enumerate() {
        let mut record: Vec<String> = row.valuations().iter().map(|v| format!("{v}")).collect();
        record.push(format!("{}", row.label()));
        writer
            .write_record(&record)
            .map_err(|e| csv_error("row", idx + 2, e))?;
    }
    writer.flush()?;
    Ok(())
}

/// Loads a dataset written by [`save_csv`]; malformed rows report their line.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header = reader
        .headers()
        .map_err(|e| csv_error("header", 1, e))?
        .clone();
    if header.len() < 2 || header.iter().last() != Some("label") {
        return Err(Error::Malformed {
            line: 1,
            message: "header must be b_1,...,b_m,label".to_string(),
        });
    }
    let m = header.len() - 1;
    for (j, name) in header.iter().take(m).enumerate() {
        let expected = format!("b_{}", j + 1);
        if name != expected {
            return Err(Error::Malformed {
                line: 1,
                message: format!("expected column `{expected}`, found `{name}`"),
            });
        }
    }
    let mut data = Dataset::new(m);
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| csv_error("row", line, e))?;
        if record.len() != m + 1 {
            return Err(Error::Malformed {
                line,
                message: format!("expected {} fields, found {}", m + 1, record.len()),
            });
        }
        let mut vals = Vec::with_capacity(m);
        for field in record.iter().take(m) {
            let v: f64 = field.parse().map_err(|_| Error::Malformed {
                line,
                message: format!("`{field}` is not a real number"),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Malformed {
                    line,
                    message: format!("valuation {v} outside [0, 1]"),
                });
            }
            vals.push(v);
        }
        let label_field = record.get(m).unwrap_or_default();
        let label: u8 = match label_field {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Malformed {
                    line,
                    message: format!("label must be 0 or 1, found `{other}`"),
                })
            }
        };
        data.push(Example::new(vals, label)?)?;
    }
    Ok(data)
}

fn csv_error(what: &str, line: usize, err: csv::Error) -> Error {
    Error::Malformed {
        line,
        message: format!("{what}: {err}"),
    }
}

/// Deterministic shuffled split into `(train, validation)`; `fraction` is
/// the training share and both parts are guaranteed nonempty.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::OutOfRange("split fraction", "(0, 1)", fraction));
    }
    let len = dataset.len();
    if len < 2 {
        return Err(Error::DatasetTooSmall(len));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..len).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let train_len = ((len as f64 * fraction).floor() as usize).clamp(1, len - 1);
    let mut train = Dataset::new(dataset.atoms());
    let mut val = Dataset::new(dataset.atoms());
    for (pos, &i) in idx.iter().enumerate() {
        let row = dataset.rows()[i].clone();
        if pos < train_len {
            train.push(row)?;
        } else {
            val.push(row)?;
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r1_ast() -> RuleAst {
        RuleAst::new(
            9,
            vec![vec![AstLiteral::positive(0), AstLiteral::negated(8)]],
        )
        .unwrap()
    }

    #[test]
    fn eval_rule_r1_cases() {
        let ast = r1_ast();
        let mut vals = vec![0.5; 9];
        vals[0] = 0.9;
        vals[8] = 0.1;
        assert_eq!(eval_rule(&ast, &vals), 1);
        vals[8] = 0.9;
        assert_eq!(eval_rule(&ast, &vals), 0);
    }

    #[test]
    fn eval_rule_f2_second_subrule_fires() {
        let f2 = builtin_rule("F2").unwrap();
        assert_eq!(eval_rule(&f2.ast, &[0.9, 0.9, 0.1, 0.1]), 1);
    }

    #[test]
    fn gen_synthetic_noiseless_labels_match_rule() {
        let ast = r1_ast();
        let data = gen_synthetic(9, 500, &ast, 0.0, 7).unwrap();
        for row in data.rows() {
            assert_eq!(row.label(), eval_rule(&ast, row.valuations()));
        }
    }

    #[test]
    fn gen_synthetic_is_deterministic() {
        let ast = r1_ast();
        let a = gen_synthetic(9, 100, &ast, 0.1, 42).unwrap();
        let b = gen_synthetic(9, 100, &ast, 0.1, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gen_synthetic_noise_flips_expected_fraction() {
        let ast = r1_ast();
        let clean = gen_synthetic(9, 10_000, &ast, 0.0, 11).unwrap();
        let noisy = gen_synthetic(9, 10_000, &ast, 0.2, 11).unwrap();
        let flipped = clean
            .rows()
            .iter()
            .zip(noisy.rows())
            .filter(|(a, b)| a.label() != b.label())
            .count();
        let fraction = flipped as f64 / 10_000.0;
        assert!((fraction - 0.2).abs() < 0.02, "flip fraction {fraction}");
    }

    #[test]
    fn gen_synthetic_rejects_half_noise() {
        assert!(gen_synthetic(9, 10, &r1_ast(), 0.5, 0).is_err());
    }

    #[test]
    fn builtin_rules_are_nondegenerate_on_uniform_inputs() {
        for name in ["R1", "R2", "R3", "R4", "R5", "R6"] {
            let rule = builtin_rule(name).unwrap();
            let data = gen_synthetic(rule.schema.atom_count(), 10_000, &rule.ast, 0.0, 3).unwrap();
            let pos = data.positive_count() as f64 / data.len() as f64;
            assert!(
                (0.05..0.95).contains(&pos),
                "{name}: positive fraction {pos}"
            );
        }
    }

    #[test]
    fn split_is_deterministic_partition() {
        let ast = r1_ast();
        let data = gen_synthetic(9, 100, &ast, 0.0, 5).unwrap();
        let (tr1, va1) = split(&data, 0.8, 9).unwrap();
        let (tr2, va2) = split(&data, 0.8, 9).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(va1, va2);
        assert_eq!(tr1.len(), 80);
        assert_eq!(va1.len(), 20);
        // union as multiset equals the original
        let mut all: Vec<Vec<u64>> = data
            .rows()
            .iter()
            .map(|r| {
                r.valuations()
                    .iter()
                    .map(|v| v.to_bits())
                    .chain([r.label() as u64])
                    .collect()
            })
            .collect();
        let mut joined: Vec<Vec<u64>> = tr1
            .rows()
            .iter()
            .chain(va1.rows())
            .map(|r| {
                r.valuations()
                    .iter()
                    .map(|v| v.to_bits())
                    .chain([r.label() as u64])
                    .collect()
            })
            .collect();
        all.sort();
        joined.sort();
        assert_eq!(all, joined);
    }

    #[test]
    fn csv_round_trip_is_value_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let rule = builtin_rule("F2").unwrap();
        let data = gen_synthetic(4, 50, &rule.ast, 0.1, 99).unwrap();
        save_csv(&data, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(data, loaded);
    }

    #[test]
    fn csv_empty_data_section_keeps_width() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "b_1,b_2,b_3,label\n").unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(loaded.atoms(), 3);
        assert!(loaded.is_empty());
    }

    #[test]
    fn csv_rejects_bad_label_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "b_1,label\n0.5,1\n0.5,2\n").unwrap();
        match load_csv(&path) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn fact_base_round_trip() {
        let (facts, _) = builtin_task("predecessor").unwrap();
        let text = facts.to_text();
        let reparsed = FactBase::parse(&text).unwrap();
        assert_eq!(facts, reparsed);
    }

    #[test]
    fn propositionalize_row_count_is_examples_times_groundings() {
        let (facts, schema) = builtin_task("lessthan").unwrap();
        let data = propositionalize(&facts, &schema).unwrap();
        let examples = facts.positive.len() + facts.negative.len();
        let aux = schema.aux_vars().len();
        assert_eq!(
            data.len(),
            examples * facts.domain.len().pow(aux as u32)
        );
    }

    #[test]
    fn propositionalize_predecessor_valuation_matches_label() {
        let (facts, schema) = builtin_task("predecessor").unwrap();
        let data = propositionalize(&facts, &schema).unwrap();
        assert_eq!(data.atoms(), 1);
        assert_eq!(data.len(), 81);
        for row in data.rows() {
            // successor(X2, X1) holds exactly on the positive examples
            assert_eq!(row.valuations()[0] > 0.5, row.label() == 1);
        }
    }

    #[test]
    fn propositionalize_rejects_unknown_constant() {
        let (mut facts, schema) = builtin_task("predecessor").unwrap();
        facts.positive.push(GroundAtom::new("predecessor", &["99", "0"]));
        assert!(matches!(
            propositionalize(&facts, &schema),
            Err(Error::UnknownConstant(_))
        ));
    }

    #[test]
    fn lessthan_transitivity_witnesses_exist() {
        let (facts, schema) = builtin_task("lessthan").unwrap();
        let data = propositionalize(&facts, &schema).unwrap();
        // some row has both recursive body atoms and a positive label
        let hit = data.rows().iter().any(|r| {
            r.label() == 1 && r.valuations()[3] > 0.5 && r.valuations()[4] > 0.5
        });
        assert!(hit, "no transitivity witness row found");
    }
}
