//! Built-in target rules and relational benchmark tasks.
//!
//! Propositional rules come straight from their published definitions. The
//! relational tasks pair a fixed predicate schema with a fact base; the
//! regular numeric ones (predecessor, odd, even, lessThan) are generated
//! here, the family and graph ones are frozen fixture files whose comments
//! document how elided fact sets were completed.

use super::{AstLiteral, AtomTemplate, FactBase, GroundAtom, PredicateSchema, RuleAst};
use crate::error::{Error, Result};

/// A named target rule with its schema.
#[derive(Debug, Clone)]
pub struct BuiltinRule {
    pub ast: RuleAst,
    pub schema: PredicateSchema,
}

/// Returns a published target rule by name: `R1`..`R6` and `F2` are
/// propositional (m = 9 and m = 4), `grandparent6` is the structured
/// six-atom family rule with four subrules.
pub fn builtin_rule(name: &str) -> Result<BuiltinRule> {
    let key = name.to_ascii_lowercase();
    let pos = AstLiteral::positive;
    let neg = AstLiteral::negated;
    match key.as_str() {
        "r1" => propositional(9, vec![vec![pos(0), neg(8)]]),
        "r2" => propositional(9, vec![vec![pos(0), neg(8)], vec![neg(1), pos(7)]]),
        "r3" => propositional(
            9,
            vec![
                vec![pos(0), neg(8)],
                vec![neg(1), pos(7)],
                vec![pos(2), neg(4), pos(6)],
            ],
        ),
        "r4" => propositional(9, vec![vec![neg(0), pos(8)]]),
        "r5" => propositional(9, vec![vec![neg(0), pos(8)], vec![pos(1), neg(7)]]),
        "r6" => propositional(
            9,
            vec![
                vec![neg(0), pos(8)],
                vec![pos(1), neg(7)],
                vec![neg(2), pos(4), neg(6)],
            ],
        ),
        "f2" => propositional(4, vec![vec![neg(1), pos(3)], vec![pos(0), neg(2)]]),
        "grandparent6" => {
            let schema = grandparent_schema();
            // mother-mother, father-father, mother-father, father-mother
            let ast = RuleAst::new(
                6,
                vec![
                    vec![pos(3), pos(4)],
                    vec![pos(0), pos(1)],
                    vec![pos(3), pos(1)],
                    vec![pos(0), pos(4)],
                ],
            )?;
            Ok(BuiltinRule { ast, schema })
        }
        _ => Err(Error::UnknownName(name.to_string())),
    }
}

fn propositional(m: usize, subrules: Vec<Vec<AstLiteral>>) -> Result<BuiltinRule> {
    Ok(BuiltinRule {
        ast: RuleAst::new(m, subrules)?,
        schema: PredicateSchema::propositional(m),
    })
}

fn grandparent_schema() -> PredicateSchema {
    let vars = vec!["X1".to_string(), "X2".to_string(), "X3".to_string()];
    PredicateSchema::new(
        vars,
        "grandparent",
        vec![0, 2],
        vec![
            AtomTemplate::new("father", vec![0, 1]),
            AtomTemplate::new("father", vec![1, 2]),
            AtomTemplate::new("father", vec![0, 2]),
            AtomTemplate::new("mother", vec![0, 1]),
            AtomTemplate::new("mother", vec![1, 2]),
            AtomTemplate::new("mother", vec![0, 2]),
        ],
    )
    .expect("static schema is valid")
}

/// Returns one of the ten relational benchmark tasks by name.
pub fn builtin_task(name: &str) -> Result<(FactBase, PredicateSchema)> {
    let key: String = name
        .to_ascii_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    match key.as_str() {
        "predecessor" => Ok(predecessor_task()),
        "odd" => Ok(parity_task(true)),
        "even" => Ok(parity_task(false)),
        "lessthan" => Ok(lessthan_task()),
        "grandparent" => fixture_task(
            include_str!("../../fixtures/tasks/grandparent.facts"),
            grandparent_schema(),
        ),
        "son" => fixture_task(
            include_str!("../../fixtures/tasks/son.facts"),
            son_schema(),
        ),
        "father" => fixture_task(
            include_str!("../../fixtures/tasks/father.facts"),
            father_schema(),
        ),
        "directededge" => fixture_task(
            include_str!("../../fixtures/tasks/directed_edge.facts"),
            directed_edge_schema(),
        ),
        "related" | "relatedness" => fixture_task(
            include_str!("../../fixtures/tasks/related.facts"),
            related_schema(),
        ),
        "connectedness" | "connected" => fixture_task(
            include_str!("../../fixtures/tasks/connectedness.facts"),
            connectedness_schema(),
        ),
        _ => Err(Error::UnknownName(name.to_string())),
    }
}

/// Names accepted by [`builtin_task`].
pub const TASK_NAMES: [&str; 10] = [
    "predecessor",
    "odd",
    "even",
    "lessthan",
    "grandparent",
    "son",
    "father",
    "directed-edge",
    "related",
    "connectedness",
];

fn fixture_task(text: &str, schema: PredicateSchema) -> Result<(FactBase, PredicateSchema)> {
    let facts = FactBase::parse(text)?;
    Ok((facts, schema))
}

fn num_domain(hi: usize) -> Vec<String> {
    (0..=hi).map(|i| i.to_string()).collect()
}

fn predecessor_task() -> (FactBase, PredicateSchema) {
    let vars = vec!["X1".to_string(), "X2".to_string()];
    let schema = PredicateSchema::new(
        vars,
        "predecessor",
        vec![0, 1],
        vec![AtomTemplate::new("successor", vec![1, 0])],
    )
    .expect("static schema is valid");

    let domain = num_domain(8);
    let mut background = vec![GroundAtom::new("zero", &["0"])];
    for i in 0..8u32 {
        background.push(GroundAtom::new(
            "successor",
            &[&i.to_string(), &(i + 1).to_string()],
        ));
    }
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for j in 0..=8u32 {
        for i in 0..=8u32 {
            let atom = GroundAtom::new("predecessor", &[&j.to_string(), &i.to_string()]);
            if j == i + 1 {
                positive.push(atom);
            } else {
                negative.push(atom);
            }
        }
    }
    (
        FactBase {
            domain,
            background,
            positive,
            negative,
        },
        schema,
    )
}

fn parity_task(odd: bool) -> (FactBase, PredicateSchema) {
    let target = if odd { "odd" } else { "even" };
    let vars = vec!["X1".to_string(), "X2".to_string(), "X3".to_string()];
    let schema = PredicateSchema::new(
        vars,
        target,
        vec![2],
        vec![
            AtomTemplate::new("zero", vec![0]),
            AtomTemplate::new("zero", vec![1]),
            AtomTemplate::new("zero", vec![2]),
            AtomTemplate::new("successor", vec![0, 1]),
            AtomTemplate::new("successor", vec![1, 2]),
            AtomTemplate::new("successor", vec![0, 2]),
            AtomTemplate::new(target, vec![0]),
            AtomTemplate::new(target, vec![1]),
        ],
    )
    .expect("static schema is valid");

    let domain = num_domain(30);
    let mut background = vec![GroundAtom::new("zero", &["0"])];
    for i in 0..30u32 {
        background.push(GroundAtom::new(
            "successor",
            &[&i.to_string(), &(i + 1).to_string()],
        ));
    }
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for i in 0..=30u32 {
        let matches = (i % 2 == 1) == odd;
        let atom = GroundAtom::new(target, &[&i.to_string()]);
        if matches {
            positive.push(atom);
        } else {
            negative.push(atom);
        }
    }
    (
        FactBase {
            domain,
            background,
            positive,
            negative,
        },
        schema,
    )
}

fn lessthan_task() -> (FactBase, PredicateSchema) {
    let vars = vec!["X1".to_string(), "X2".to_string(), "X3".to_string()];
    let schema = PredicateSchema::new(
        vars,
        "lessThan",
        vec![2, 0],
        vec![
            AtomTemplate::new("successor", vec![0, 1]),
            AtomTemplate::new("successor", vec![1, 2]),
            AtomTemplate::new("successor", vec![0, 2]),
            AtomTemplate::new("lessThan", vec![2, 1]),
            AtomTemplate::new("lessThan", vec![1, 0]),
        ],
    )
    .expect("static schema is valid");

    // successor(a, b) reads "a is the successor of b"; this orientation is
    // what makes the published base-case rule satisfiable over these atoms.
    let domain = num_domain(9);
    let mut background = vec![GroundAtom::new("zero", &["0"])];
    for i in 0..9u32 {
        background.push(GroundAtom::new(
            "successor",
            &[&(i + 1).to_string(), &i.to_string()],
        ));
    }
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for i in 0..=9u32 {
        for j in 0..=9u32 {
            let atom = GroundAtom::new("lessThan", &[&i.to_string(), &j.to_string()]);
            if i < j {
                positive.push(atom);
            } else {
                negative.push(atom);
            }
        }
    }
    (
        FactBase {
            domain,
            background,
            positive,
            negative,
        },
        schema,
    )
}

fn son_schema() -> PredicateSchema {
    let vars = vec!["X1".to_string(), "X2".to_string(), "X3".to_string()];
    PredicateSchema::new(
        vars,
        "son",
        vec![0, 2],
        vec![
            AtomTemplate::new("father", vec![0, 1]),
            AtomTemplate::new("father", vec![1, 2]),
            AtomTemplate::new("father", vec![2, 0]),
            AtomTemplate::new("brother", vec![0, 1]),
            AtomTemplate::new("sister", vec![0, 1]),
            AtomTemplate::new("son", vec![1, 2]),
        ],
    )
    .expect("static schema is valid")
}

fn father_schema() -> PredicateSchema {
    let vars = vec!["X1".to_string(), "X2".to_string(), "X3".to_string()];
    PredicateSchema::new(
        vars,
        "father",
        vec![0, 2],
        vec![
            AtomTemplate::new("mother", vec![0, 1]),
            AtomTemplate::new("mother", vec![1, 2]),
            AtomTemplate::new("mother", vec![0, 2]),
            AtomTemplate::new("husband", vec![0, 1]),
            AtomTemplate::new("husband", vec![1, 2]),
            AtomTemplate::new("husband", vec![0, 2]),
        ],
    )
    .expect("static schema is valid")
}

fn directed_edge_schema() -> PredicateSchema {
    let vars = vec!["X1".to_string(), "X2".to_string()];
    PredicateSchema::new(
        vars,
        "dedge",
        vec![0, 1],
        vec![
            AtomTemplate::new("edge", vec![0, 1]),
            AtomTemplate::new("dedge", vec![1, 0]),
        ],
    )
    .expect("static schema is valid")
}

fn related_schema() -> PredicateSchema {
    let vars = vec!["X1".to_string(), "X2".to_string(), "X3".to_string()];
    PredicateSchema::new(
        vars,
        "related",
        vec![0, 2],
        vec![
            AtomTemplate::new("parent", vec![0, 1]),
            AtomTemplate::new("parent", vec![1, 2]),
            AtomTemplate::new("parent", vec![0, 2]),
            AtomTemplate::new("related", vec![0, 1]),
            AtomTemplate::new("related", vec![1, 2]),
        ],
    )
    .expect("static schema is valid")
}

fn connectedness_schema() -> PredicateSchema {
    let vars = vec!["X1".to_string(), "X2".to_string(), "X3".to_string()];
    PredicateSchema::new(
        vars,
        "connectedness",
        vec![0, 2],
        vec![
            AtomTemplate::new("edge", vec![0, 2]),
            AtomTemplate::new("edge", vec![2, 0]),
            AtomTemplate::new("edge", vec![1, 2]),
            AtomTemplate::new("connectedness", vec![0, 1]),
            AtomTemplate::new("connectedness", vec![1, 2]),
        ],
    )
    .expect("static schema is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{eval_rule, propositionalize};

    #[test]
    fn builtin_rule_r1_shape() {
        let rule = builtin_rule("R1").unwrap();
        assert_eq!(rule.schema.atom_count(), 9);
        assert_eq!(rule.ast.subrules().len(), 1);
        assert_eq!(
            rule.ast.canonical_subrules(),
            vec![vec![(0, false), (8, true)]]
        );
    }

    #[test]
    fn builtin_rule_r3_three_subrules() {
        let rule = builtin_rule("r3").unwrap();
        assert_eq!(rule.ast.subrules().len(), 3);
        assert_eq!(
            rule.ast.canonical_subrules(),
            vec![
                vec![(0, false), (8, true)],
                vec![(1, true), (7, false)],
                vec![(2, false), (4, true), (6, false)],
            ]
        );
    }

    #[test]
    fn builtin_rule_f2_shape() {
        let rule = builtin_rule("f2").unwrap();
        assert_eq!(rule.schema.atom_count(), 4);
        assert_eq!(
            rule.ast.canonical_subrules(),
            vec![vec![(0, false), (2, true)], vec![(1, true), (3, false)]]
        );
    }

    #[test]
    fn builtin_rule_unknown_name() {
        assert!(builtin_rule("R7").is_err());
    }

    #[test]
    fn grandparent6_has_structured_schema() {
        let rule = builtin_rule("grandparent6").unwrap();
        assert_eq!(rule.schema.atom_count(), 6);
        assert_eq!(rule.schema.head_vars(), vec![0, 2]);
        assert_eq!(rule.schema.aux_vars(), vec![1]);
        assert_eq!(rule.ast.subrules().len(), 4);
    }

    #[test]
    fn all_ten_tasks_load_and_ground() {
        for name in TASK_NAMES {
            let (facts, schema) = builtin_task(name).unwrap();
            assert!(!facts.positive.is_empty(), "{name}: no positives");
            assert!(!facts.negative.is_empty(), "{name}: no negatives");
            let data = propositionalize(&facts, &schema).unwrap();
            let examples = facts.positive.len() + facts.negative.len();
            let per = facts.domain.len().pow(schema.aux_vars().len() as u32);
            assert_eq!(data.len(), examples * per, "{name}: row count");
        }
    }

    #[test]
    fn predecessor_matches_published_shape() {
        let (facts, schema) = builtin_task("predecessor").unwrap();
        assert_eq!(facts.domain.len(), 9);
        assert_eq!(schema.atom_count(), 1);
        assert_eq!(facts.positive.len(), 8);
    }

    #[test]
    fn even_has_eight_body_atoms() {
        let (_, schema) = builtin_task("even").unwrap();
        assert_eq!(schema.atom_count(), 8);
    }

    #[test]
    fn grandparent_task_has_six_body_atoms_over_parent_relations() {
        let (facts, schema) = builtin_task("grandparent").unwrap();
        assert_eq!(schema.atom_count(), 6);
        // every positive example has exactly one witness grounding
        let data = propositionalize(&facts, &schema).unwrap();
        let rule = builtin_rule("grandparent6").unwrap();
        let per = facts.domain.len();
        for (e, _) in facts.positive.iter().enumerate() {
            let witnesses = (0..per)
                .filter(|&g| eval_rule(&rule.ast, data.rows()[e * per + g].valuations()) == 1)
                .count();
            assert_eq!(witnesses, 1, "positive example {e}");
        }
    }

    #[test]
    fn son_target_rules_cover_all_positive_examples() {
        let (facts, schema) = builtin_task("son").unwrap();
        let data = propositionalize(&facts, &schema).unwrap();
        let per = facts.domain.len();
        // published rules: father(X3, X1) alone, or brother(X1, X2) and son(X2, X3)
        for (e, head) in facts.positive.iter().enumerate() {
            let covered = (0..per).any(|g| {
                let v = data.rows()[e * per + g].valuations();
                v[2] > 0.5 || (v[3] > 0.5 && v[5] > 0.5)
            });
            assert!(covered, "positive son example {head} has no witness");
        }
    }

    #[test]
    fn directed_edge_needs_both_published_rules() {
        let (facts, schema) = builtin_task("directed-edge").unwrap();
        let data = propositionalize(&facts, &schema).unwrap();
        let edge_only = data
            .rows()
            .iter()
            .filter(|r| r.label() == 1 && r.valuations()[0] > 0.5 && r.valuations()[1] < 0.5)
            .count();
        let recursive_only = data
            .rows()
            .iter()
            .filter(|r| r.label() == 1 && r.valuations()[0] < 0.5 && r.valuations()[1] > 0.5)
            .count();
        assert!(edge_only > 0, "no example forces the edge rule");
        assert!(recursive_only > 0, "no example forces the recursive rule");
        // and the pair of rules is a perfect fit
        for row in data.rows() {
            let fired = row.valuations()[0] > 0.5 || row.valuations()[1] > 0.5;
            assert_eq!(fired, row.label() == 1);
        }
    }

    #[test]
    fn father_target_rule_is_perfect_on_witnesses() {
        let (facts, schema) = builtin_task("father").unwrap();
        let data = propositionalize(&facts, &schema).unwrap();
        let per = facts.domain.len();
        let examples = facts.positive.len() + facts.negative.len();
        for e in 0..examples {
            let label = data.rows()[e * per].label();
            let any_witness = (0..per).any(|g| {
                let v = data.rows()[e * per + g].valuations();
                v[3] > 0.5 && v[1] > 0.5 // husband(X1, X2) and mother(X2, X3)
            });
            assert_eq!(any_witness, label == 1, "example {e}");
        }
    }
}
