//! Converts trained weights into explicit symbolic rules, validates their
//! syntactic form, scores their coverage on data, and renders/parses the
//! rule text format.

use crate::datasets::{Dataset, PredicateSchema};
use crate::diffcore::{softmax3_raw, ENTROPY_EPS};
use crate::error::{Error, Result};
use crate::rule_model::RuleSpaceWeights;
use serde::{Deserialize, Serialize};

/// The symbolic reading of one (subrule, atom) slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Literal {
    /// The slot is excluded from the body.
    Identity,
    Positive(usize),
    Negated(usize),
}

/// The n-by-m matrix of identified literals.
#[derive(Debug, Clone, PartialEq)]
pub struct LiteralMatrix {
    n: usize,
    m: usize,
    entries: Vec<Literal>,
}

impl LiteralMatrix {
    pub fn get(&self, i: usize, j: usize) -> Literal {
        self.entries[i * self.m + j]
    }

    pub fn subrules(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> usize {
        self.m
    }
}

/// One signed body atom of an extracted rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BodyLiteral {
    pub atom: usize,
    pub negated: bool,
}

/// An extracted rule body; the head is supplied by the schema.
/// Literals are kept sorted by atom index, so equality is structural.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicRule {
    body: Vec<BodyLiteral>,
}

impl SymbolicRule {
    pub fn new(mut body: Vec<BodyLiteral>) -> Result<Self> {
        body.sort_unstable();
        for pair in body.windows(2) {
            if pair[0].atom == pair[1].atom {
                return Err(Error::Format {
                    what: "symbolic rule",
                    message: format!("duplicate atom index {}", pair[0].atom),
                });
            }
        }
        Ok(Self { body })
    }

    pub fn body(&self) -> &[BodyLiteral] {
        &self.body
    }

    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
    }

    /// `(atom index, negated)` pairs sorted by atom index.
    pub fn canonical_body(&self) -> Vec<(usize, bool)> {
        self.body.iter().map(|l| (l.atom, l.negated)).collect()
    }
}

/// Identifies the most confident subpredicate of every slot: softmax the
/// slot's logits, and if the distribution's entropy is at most `eta_prime`,
/// emit the argmax choice (positive literal, negated literal, or exclusion);
/// otherwise fall back to exclusion.
pub fn identify_predicates(weights: &RuleSpaceWeights, eta_prime: f64) -> Result<LiteralMatrix> {
    let ln3 = 3.0f64.ln();
    if !(0.0..=ln3).contains(&eta_prime) {
        return Err(Error::OutOfRange("eta_prime", "[0, ln 3]", eta_prime));
    }
    let n = weights.subrules();
    let m = weights.atoms();
    let mut entries = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let p = softmax3_raw(weights.logits(i, j));
            let entropy: f64 = -p.iter().map(|&q| q * (q + ENTROPY_EPS).ln()).sum::<f64>();
            let lit = if entropy <= eta_prime {
                let k = if p[0] >= p[1] && p[0] >= p[2] {
                    0
                } else if p[1] >= p[2] {
                    1
                } else {
                    2
                };
                match k {
                    0 => Literal::Positive(j),
                    1 => Literal::Negated(j),
                    _ => Literal::Identity,
                }
            } else {
                Literal::Identity
            };
            entries.push(lit);
        }
    }
    Ok(LiteralMatrix { n, m, entries })
}

/// Builds the rule list from an identified literal matrix: all-exclusion
/// subrules are dropped, duplicate bodies merge, and the survivors are
/// ordered by descending coverage ratio on `data`, then descending body
/// count, then first appearance.
pub fn build_rules(
    literals: &LiteralMatrix,
    schema: &PredicateSchema,
    data: &Dataset,
) -> Result<Vec<SymbolicRule>> {
    if schema.atom_count() != literals.atoms() {
        return Err(Error::ShapeMismatch {
            context: "build_rules schema width",
            expected: literals.atoms(),
            got: schema.atom_count(),
        });
    }
    let mut rules: Vec<SymbolicRule> = Vec::new();
    for i in 0..literals.subrules() {
        let mut body = Vec::new();
        for j in 0..literals.atoms() {
            match literals.get(i, j) {
                Literal::Identity => {}
                Literal::Positive(a) => body.push(BodyLiteral {
                    atom: a,
                    negated: false,
                }),
                Literal::Negated(a) => body.push(BodyLiteral {
                    atom: a,
                    negated: true,
                }),
            }
        }
        if body.is_empty() {
            continue;
        }
        let rule = SymbolicRule::new(body)?;
        if !rules.contains(&rule) {
            rules.push(rule);
        }
    }
    let mut keyed: Vec<(usize, CoverageReport, SymbolicRule)> = rules
        .into_iter()
        .enumerate()
        .map(|(idx, rule)| {
            let cov = coverage(&rule, data);
            (idx, cov, rule)
        })
        .collect();
    keyed.sort_by(|(ia, ca, _), (ib, cb, _)| {
        cb.ratio
            .partial_cmp(&ca.ratio)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| cb.body_count.cmp(&ca.body_count))
            .then_with(|| ia.cmp(ib))
    });
    Ok(keyed.into_iter().map(|(_, _, r)| r).collect())
}

/// Syntactic violations against the structured-rule formats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyntaxViolation {
    /// A head variable does not occur in any selected body atom.
    HeadVariableMissing { variable: String },
    /// An auxiliary variable occurs in exactly one selected body atom.
    DisconnectedAuxiliary { variable: String },
}

impl std::fmt::Display for SyntaxViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SyntaxViolation::HeadVariableMissing { variable } => {
                write!(f, "head variable {variable} missing from the body")
            }
            SyntaxViolation::DisconnectedAuxiliary { variable } => {
                write!(f, "auxiliary variable {variable} occurs only once")
            }
        }
    }
}

/// Verdict of the two structural checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxReport {
    pub valid: bool,
    pub violations: Vec<SyntaxViolation>,
}

/// Checks head-variable inclusion (every head variable occurs at least once
/// among selected atoms) and auxiliary connectivity (no auxiliary variable
/// occurs exactly once).
pub fn validate_syntax(rule: &SymbolicRule, schema: &PredicateSchema) -> SyntaxReport {
    let mut counts = vec![0usize; schema.variables().len()];
    for lit in rule.body() {
        for &v in &schema.atoms()[lit.atom].vars {
            counts[v] += 1;
        }
    }
    let mut violations = Vec::new();
    for &k in &schema.head_vars() {
        if counts[k] == 0 {
            violations.push(SyntaxViolation::HeadVariableMissing {
                variable: schema.variables()[k].clone(),
            });
        }
    }
    for &k in &schema.aux_vars() {
        if counts[k] == 1 {
            violations.push(SyntaxViolation::DisconnectedAuxiliary {
                variable: schema.variables()[k].clone(),
            });
        }
    }
    SyntaxReport {
        valid: violations.is_empty(),
        violations,
    }
}

/// Crisp coverage counts of a rule body on a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Rows whose body holds crisply.
    pub body_count: usize,
    /// Of those, rows labeled positive.
    pub head_count: usize,
    /// `head_count / body_count`, zero when nothing is covered.
    pub ratio: f64,
}

/// A body holds on a row when every positive literal has valuation above 0.5
/// and every negated literal below 0.5 (the label-generation convention).
pub fn coverage(rule: &SymbolicRule, data: &Dataset) -> CoverageReport {
    let mut body_count = 0;
    let mut head_count = 0;
    for row in data.rows() {
        let holds = rule.body().iter().all(|lit| {
            let v = row.valuations()[lit.atom];
            if lit.negated {
                v < 0.5
            } else {
                v > 0.5
            }
        });
        if holds {
            body_count += 1;
            if row.label() == 1 {
                head_count += 1;
            }
        }
    }
    CoverageReport {
        body_count,
        head_count,
        ratio: if body_count == 0 {
            0.0
        } else {
            head_count as f64 / body_count as f64
        },
    }
}

fn atom_text(schema: &PredicateSchema, atom: usize) -> String {
    let tpl = &schema.atoms()[atom];
    if tpl.vars.is_empty() {
        tpl.name.clone()
    } else {
        let args: Vec<&str> = tpl
            .vars
            .iter()
            .map(|&v| schema.variables()[v].as_str())
            .collect();
        format!("{}({})", tpl.name, args.join(", "))
    }
}

fn head_text(schema: &PredicateSchema) -> String {
    if schema.head_args().is_empty() {
        schema.head_name().to_string()
    } else {
        let args: Vec<&str> = schema
            .head_args()
            .iter()
            .map(|&v| schema.variables()[v].as_str())
            .collect();
        format!("{}({})", schema.head_name(), args.join(", "))
    }
}

/// Renders a rule as `head(Vars) :- lit and lit and ... .` with `not(...)`
/// marking negation. An empty body renders fact-style as `head.`.
pub fn render_rule(rule: &SymbolicRule, schema: &PredicateSchema) -> String {
    let head = head_text(schema);
    if rule.is_empty() {
        return format!("{head}.");
    }
    let body: Vec<String> = rule
        .body()
        .iter()
        .map(|lit| {
            let atom = atom_text(schema, lit.atom);
            if lit.negated {
                format!("not({atom})")
            } else {
                atom
            }
        })
        .collect();
    format!("{head} :- {}.", body.join(" and "))
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::RuleParse {
            position: self.pos,
            message: message.into(),
        }
    }

    fn skip_spaces(&mut self) {
        while self.rest().starts_with(' ') {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> Result<()> {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.error(format!("expected `{token}`")))
        }
    }

    fn try_eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn name(&mut self) -> Result<&'a str> {
        let start = self.pos;
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len() {
            let c = bytes[self.pos] as char;
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            Err(self.error("expected a name"))
        } else {
            Ok(&self.text[start..self.pos])
        }
    }

    /// Parses `name` or `name(arg, arg)`, returning the name and arg names.
    fn atom(&mut self) -> Result<(&'a str, Vec<&'a str>)> {
        let name = self.name()?;
        let mut args = Vec::new();
        if self.try_eat("(") {
            loop {
                self.skip_spaces();
                args.push(self.name()?);
                self.skip_spaces();
                if self.try_eat(")") {
                    break;
                }
                self.eat(",")?;
            }
        }
        Ok((name, args))
    }
}

fn resolve_atom(
    schema: &PredicateSchema,
    name: &str,
    args: &[&str],
    cursor: &Cursor<'_>,
) -> Result<usize> {
    for (j, tpl) in schema.atoms().iter().enumerate() {
        if tpl.name == name && tpl.vars.len() == args.len() {
            let matches = tpl
                .vars
                .iter()
                .zip(args)
                .all(|(&v, &arg)| schema.variables()[v] == arg);
            if matches {
                return Ok(j);
            }
        }
    }
    Err(cursor.error(format!(
        "`{name}({})` is not a body atom of this schema",
        args.join(", ")
    )))
}

/// Parses the [`render_rule`] format back into a rule; `parse ∘ render` is
/// the identity on valid rules.
pub fn parse_rule(text: &str, schema: &PredicateSchema) -> Result<SymbolicRule> {
    let mut cur = Cursor::new(text.trim_end());
    cur.skip_spaces();
    let (head_name, head_args) = cur.atom()?;
    if head_name != schema.head_name() {
        return Err(cur.error(format!(
            "head `{head_name}` does not match schema head `{}`",
            schema.head_name()
        )));
    }
    let expected_head: Vec<&str> = schema
        .head_args()
        .iter()
        .map(|&v| schema.variables()[v].as_str())
        .collect();
    if head_args != expected_head {
        return Err(cur.error(format!(
            "head arguments ({}) do not match schema ({})",
            head_args.join(", "),
            expected_head.join(", ")
        )));
    }
    if cur.try_eat(".") {
        if !cur.rest().is_empty() {
            return Err(cur.error("trailing text after final period"));
        }
        return SymbolicRule::new(Vec::new());
    }
    cur.skip_spaces();
    cur.eat(":-")?;
    let mut body = Vec::new();
    loop {
        cur.skip_spaces();
        let negated = cur.try_eat("not(");
        let (name, args) = cur.atom()?;
        if negated {
            cur.eat(")")?;
        }
        let atom = resolve_atom(schema, name, &args, &cur)?;
        body.push(BodyLiteral { atom, negated });
        cur.skip_spaces();
        if cur.try_eat(".") {
            break;
        }
        cur.eat("and")?;
    }
    if !cur.rest().is_empty() {
        return Err(cur.error("trailing text after final period"));
    }
    SymbolicRule::new(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{builtin_rule, builtin_task, gen_synthetic, propositionalize};
    use crate::rule_model::Example;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol})");
    }

    fn logits_for(p: [f64; 3]) -> [f64; 3] {
        // softmax(ln p) = p for a normalized distribution
        [p[0].ln(), p[1].ln(), p[2].ln()]
    }

    #[test]
    fn identify_confident_positive() {
        let w = RuleSpaceWeights::from_vec(1, 1, logits_for([0.97, 0.02, 0.01]).to_vec()).unwrap();
        let lits = identify_predicates(&w, 0.4).unwrap();
        assert_eq!(lits.get(0, 0), Literal::Positive(0));
    }

    #[test]
    fn identify_uniform_is_identity() {
        let w = RuleSpaceWeights::zeros(1, 1).unwrap();
        let lits = identify_predicates(&w, 0.4).unwrap();
        assert_eq!(lits.get(0, 0), Literal::Identity);
    }

    #[test]
    fn identify_negated_choice() {
        let w =
            RuleSpaceWeights::from_vec(1, 1, logits_for([0.005, 0.99, 0.005]).to_vec()).unwrap();
        let lits = identify_predicates(&w, 0.4).unwrap();
        assert_eq!(lits.get(0, 0), Literal::Negated(0));
    }

    #[test]
    fn identify_threshold_monotone() {
        let w = RuleSpaceWeights::from_vec(
            2,
            2,
            vec![
                2.0, 0.0, -1.0, 0.3, 0.2, 0.1, -0.5, 1.5, 0.0, 0.0, 0.0, 3.0,
            ],
        )
        .unwrap();
        let strict = identify_predicates(&w, 0.2).unwrap();
        let loose = identify_predicates(&w, 0.9).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                if strict.get(i, j) != Literal::Identity {
                    assert_eq!(strict.get(i, j), loose.get(i, j));
                }
            }
        }
    }

    #[test]
    fn identify_rejects_threshold_outside_range() {
        let w = RuleSpaceWeights::zeros(1, 1).unwrap();
        assert!(identify_predicates(&w, -0.1).is_err());
        assert!(identify_predicates(&w, 1.2).is_err());
    }

    fn f2_dataset() -> Dataset {
        let rule = builtin_rule("F2").unwrap();
        gen_synthetic(4, 100, &rule.ast, 0.0, 1).unwrap()
    }

    #[test]
    fn build_rules_drops_identity_and_merges_duplicates() {
        let schema = crate::datasets::PredicateSchema::propositional(2);
        let data = Dataset::from_rows(
            2,
            vec![Example::new(vec![0.9, 0.1], 1).unwrap()],
        )
        .unwrap();
        let lits = LiteralMatrix {
            n: 3,
            m: 2,
            entries: vec![
                Literal::Positive(0),
                Literal::Identity,
                Literal::Identity,
                Literal::Identity,
                Literal::Positive(0),
                Literal::Identity,
            ],
        };
        let rules = build_rules(&lits, &schema, &data).unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].canonical_body(), vec![(0, false)]);
    }

    #[test]
    fn coverage_on_generating_rule_is_exact() {
        let data = f2_dataset();
        let sub1 = SymbolicRule::new(vec![
            BodyLiteral {
                atom: 1,
                negated: true,
            },
            BodyLiteral {
                atom: 3,
                negated: false,
            },
        ])
        .unwrap();
        let report = coverage(&sub1, &data);
        assert!(report.body_count > 0);
        assert_eq!(report.head_count, report.body_count);
        assert_close(report.ratio, 1.0, 1e-15);
    }

    #[test]
    fn coverage_empty_body_counts_everything() {
        let data = f2_dataset();
        let rule = SymbolicRule::new(Vec::new()).unwrap();
        let report = coverage(&rule, &data);
        assert_eq!(report.body_count, data.len());
    }

    #[test]
    fn coverage_counts_are_ordered() {
        let data = f2_dataset();
        for body in [
            vec![(0usize, false)],
            vec![(1, true)],
            vec![(0, false), (2, true)],
        ] {
            let rule = SymbolicRule::new(
                body.into_iter()
                    .map(|(atom, negated)| BodyLiteral { atom, negated })
                    .collect(),
            )
            .unwrap();
            let r = coverage(&rule, &data);
            assert!(r.head_count <= r.body_count && r.body_count <= data.len());
        }
    }

    #[test]
    fn validate_grandparent_chain_rule() {
        let (_, schema) = builtin_task("grandparent").unwrap();
        // father(X1, X2) and mother(X2, X3)
        let rule = SymbolicRule::new(vec![
            BodyLiteral {
                atom: 0,
                negated: false,
            },
            BodyLiteral {
                atom: 4,
                negated: false,
            },
        ])
        .unwrap();
        let report = validate_syntax(&rule, &schema);
        assert!(report.valid, "{:?}", report.violations);
    }

    #[test]
    fn validate_flags_missing_head_variable() {
        let (_, schema) = builtin_task("grandparent").unwrap();
        // father(X2, X3) and mother(X2, X3): X1 never occurs
        let rule = SymbolicRule::new(vec![
            BodyLiteral {
                atom: 1,
                negated: false,
            },
            BodyLiteral {
                atom: 4,
                negated: false,
            },
        ])
        .unwrap();
        let report = validate_syntax(&rule, &schema);
        assert!(!report.valid);
        assert!(matches!(
            report.violations[0],
            SyntaxViolation::HeadVariableMissing { .. }
        ));
    }

    #[test]
    fn validate_flags_disconnected_auxiliary() {
        let (_, schema) = builtin_task("grandparent").unwrap();
        // father(X1, X2) and mother(X1, X3): X2 occurs once
        let rule = SymbolicRule::new(vec![
            BodyLiteral {
                atom: 0,
                negated: false,
            },
            BodyLiteral {
                atom: 5,
                negated: false,
            },
        ])
        .unwrap();
        let report = validate_syntax(&rule, &schema);
        assert!(!report.valid);
        assert!(matches!(
            report.violations[0],
            SyntaxViolation::DisconnectedAuxiliary { .. }
        ));
    }

    #[test]
    fn render_structured_rule() {
        let (_, schema) = builtin_task("grandparent").unwrap();
        let rule = SymbolicRule::new(vec![
            BodyLiteral {
                atom: 0,
                negated: false,
            },
            BodyLiteral {
                atom: 4,
                negated: false,
            },
        ])
        .unwrap();
        assert_eq!(
            render_rule(&rule, &schema),
            "grandparent(X1, X3) :- father(X1, X2) and mother(X2, X3)."
        );
    }

    #[test]
    fn render_propositional_rule_with_negation() {
        let schema = crate::datasets::PredicateSchema::propositional(4);
        let rule = SymbolicRule::new(vec![
            BodyLiteral {
                atom: 1,
                negated: true,
            },
            BodyLiteral {
                atom: 3,
                negated: false,
            },
        ])
        .unwrap();
        assert_eq!(render_rule(&rule, &schema), "h :- not(b2) and b4.");
    }

    #[test]
    fn parse_render_round_trip() {
        let (_, schema) = builtin_task("grandparent").unwrap();
        let rule = SymbolicRule::new(vec![
            BodyLiteral {
                atom: 2,
                negated: true,
            },
            BodyLiteral {
                atom: 3,
                negated: false,
            },
        ])
        .unwrap();
        let text = render_rule(&rule, &schema);
        let parsed = parse_rule(&text, &schema).unwrap();
        assert_eq!(parsed, rule);
    }

    #[test]
    fn parse_reports_position_on_malformed_text() {
        let (_, schema) = builtin_task("grandparent").unwrap();
        let err = parse_rule("grandparent(X1, X3) :- nonsense(X9).", &schema).unwrap_err();
        match err {
            Error::RuleParse { position, .. } => assert!(position > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_wrong_head() {
        let (_, schema) = builtin_task("grandparent").unwrap();
        assert!(parse_rule("parent(X1, X3) :- father(X1, X2).", &schema).is_err());
    }
}
